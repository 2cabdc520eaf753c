use std::f64::consts::PI;

use phenn::dataset::{synthesize_corpus, Role};
use phenn::field::Image;
use phenn::spectral::{apply_filter, estimate_psd, flattening_filter, premodulate};
use proptest::prelude::*;

#[test]
fn synthetic_corpus_has_requested_exponent() {
    let corpus = synthesize_corpus(256, 64, -2.0, 11, Role::Train).unwrap();
    let p = estimate_psd(&corpus.images).unwrap().exponent.unwrap();
    assert!((p + 2.0).abs() <= 0.2, "raw exponent {p}");

    let filter = flattening_filter(64, 64, None).unwrap();
    let flat: Vec<Image> = corpus.images.iter().map(|img| premodulate(img, &filter).unwrap()).collect();
    let q = estimate_psd(&flat).unwrap().exponent.unwrap();
    assert!(q.abs() <= 0.3, "flattened exponent {q}");
}

#[test]
fn other_exponents_are_recovered() {
    for target in [-1.0, -3.0] {
        let corpus = synthesize_corpus(128, 64, target, 5, Role::Train).unwrap();
        let p = estimate_psd(&corpus.images).unwrap().exponent.unwrap();
        assert!((p - target).abs() <= 0.25, "target {target}, fitted {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A cosine at integer frequency (kx, ky) is an eigenfunction of the
    /// filter with eigenvalue sqrt(fx^2 + fy^2) in cycles per pixel.
    #[test]
    fn cosines_scale_by_radial_frequency(
        kx in 0usize..16,
        ky in 0usize..16,
        phase in 0.0f64..(2.0 * PI),
        n in prop::sample::select(vec![32usize, 48, 64]),
    ) {
        prop_assume!(kx + ky > 0);
        let f = n as f64;
        let tone = Image::from_fn(n, n, None, |r, c| {
            (2.0 * PI * (kx as f64 * c as f64 + ky as f64 * r as f64) / f + phase).cos()
        }).unwrap();
        let gain = ((kx * kx + ky * ky) as f64).sqrt() / f;
        let out = apply_filter(&tone, &flattening_filter(n, n, None).unwrap()).unwrap();
        for (o, t) in out.data().iter().zip(tone.data()) {
            prop_assert!((o - gain * t).abs() <= 1e-10, "{} vs {}", o, gain * t);
        }
    }
}
