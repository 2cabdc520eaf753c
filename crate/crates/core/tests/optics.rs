use std::f64::consts::PI;

use num_complex::Complex64;
use phenn::field::{ComplexField, Image};
use phenn::optics::{capture_intensity, encode_phase, propagate, ForwardModel, OpticalConfig};
use proptest::prelude::*;

const WAVELENGTH: f64 = 633e-9;

fn gaussian_field(n: usize, pitch: f64, w0: f64) -> ComplexField {
    let c = n as f64 / 2.0;
    let data = (0..n * n)
        .map(|i| {
            let (y, x) = (((i / n) as f64 - c) * pitch, ((i % n) as f64 - c) * pitch);
            Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
        })
        .collect();
    ComplexField::new(n, n, Some(pitch), data).unwrap()
}

/// 1/e^2 intensity radius from the second moment along x: <x^2> = w^2 / 4.
fn moment_width(intensity: &Image, pitch: f64) -> f64 {
    let n = intensity.width();
    let c = n as f64 / 2.0;
    let (mut m2, mut total) = (0.0, 0.0);
    for r in 0..intensity.height() {
        for (col, &v) in intensity.row(r).iter().enumerate() {
            let x = (col as f64 - c) * pitch;
            m2 += v * x * x;
            total += v;
        }
    }
    2.0 * (m2 / total).sqrt()
}

#[test]
fn gaussian_beam_spreads_as_predicted() {
    let (n, pitch, w0, z) = (256, 10e-6, 200e-6, 0.05);
    let field = gaussian_field(n, pitch, w0);
    let z_r = PI * w0 * w0 / WAVELENGTH;
    let analytic = w0 * (1.0 + (z / z_r).powi(2)).sqrt();
    assert!((analytic - 206.3e-6).abs() < 0.1e-6);

    let start = moment_width(&capture_intensity(&field), pitch);
    assert!((start - w0).abs() / w0 < 1e-6, "sampled waist {start}");
    let width = moment_width(&capture_intensity(&propagate(&field, z, WAVELENGTH).unwrap()), pitch);
    assert!((width - analytic).abs() / analytic < 0.02, "width {width} vs {analytic}");
}

fn random_field(seed: &[f64], n: usize) -> ComplexField {
    let data = (0..n * n)
        .map(|i| {
            let a = seed[i % seed.len()];
            let b = seed[(i * 7 + 3) % seed.len()];
            Complex64::new(a + 0.1 * (i as f64).sin(), b - 0.2 * (i as f64 * 0.37).cos())
        })
        .collect();
    ComplexField::new(n, n, Some(36e-6), data).unwrap()
}

fn rel_err(a: &ComplexField, b: &ComplexField) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (num / b.energy()).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_invariants(
        seed in prop::collection::vec(-1.0f64..1.0, 8..32),
        z1 in 0.0f64..0.05,
        z2 in 0.0f64..0.05,
    ) {
        let field = random_field(&seed, 32);
        prop_assert!(rel_err(&propagate(&field, 0.0, WAVELENGTH).unwrap(), &field) <= 1e-12);
        let whole = propagate(&field, z1 + z2, WAVELENGTH).unwrap();
        prop_assert!((whole.energy() - field.energy()).abs() / field.energy() <= 1e-10);
        let steps = propagate(&propagate(&field, z1, WAVELENGTH).unwrap(), z2, WAVELENGTH).unwrap();
        prop_assert!(rel_err(&steps, &whole) <= 1e-10);
    }

    #[test]
    fn pure_phase_is_invisible_in_focus(values in prop::collection::vec(0.0f64..1.0, 64)) {
        let object = Image::new(8, 8, Some(36e-6), values).unwrap();
        let field = propagate(&encode_phase(&object, PI).unwrap(), 0.0, WAVELENGTH).unwrap();
        for v in capture_intensity(&field).data() {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn defocus_reveals_phase_structure() {
    let model = ForwardModel::new(OpticalConfig::default()).unwrap();
    let object = Image::from_fn(64, 64, None, |r, c| ((r as f64 / 5.0).sin() * (c as f64 / 7.0).cos() + 1.0) / 2.0).unwrap();
    let bg = model.background().unwrap();
    let raw = model.simulate(&object).unwrap();
    let diff: f64 = raw.data().iter().zip(bg.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / raw.len() as f64;
    assert!(diff > 1e-3, "mean |I - I_bg| = {diff}");
}
