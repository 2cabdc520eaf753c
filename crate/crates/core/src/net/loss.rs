use crate::error::{Error, Result};
use crate::field::Image;

struct Centered {
    x: Vec<f64>,
    y: Vec<f64>,
    nx: f64,
    ny: f64,
    r: f64,
}

fn centered(truth: &[f64], estimate: &[f64]) -> Result<Centered> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: (1, truth.len()),
            got: (1, estimate.len()),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("correlation input"));
    }
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| a - m).collect::<Vec<f64>>()
    };
    let (x, y) = (center(estimate), center(truth));
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    // A spread this small relative to the values is rounding noise.
    let floor = |v: &[f64]| 1e-14 * v.iter().fold(0.0f64, |m, a| m.max(a.abs())) * (v.len() as f64).sqrt();
    if ny <= floor(truth) {
        return Err(Error::ZeroVariance("ground truth"));
    }
    if nx <= floor(estimate) {
        return Err(Error::ZeroVariance("estimate"));
    }
    let r = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
    Ok(Centered { x, y, nx, ny, r })
}

/// Negative Pearson correlation between flattened samples.
pub fn npcc_slice(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    Ok(-centered(truth, estimate)?.r.clamp(-1.0, 1.0))
}

/// Gradient of [`npcc_slice`] with respect to `estimate`.
pub fn npcc_grad_slice(truth: &[f64], estimate: &[f64]) -> Result<(f64, Vec<f64>)> {
    let c = centered(truth, estimate)?;
    let grad = c
        .x
        .iter()
        .zip(&c.y)
        .map(|(xi, yi)| -(yi / (c.nx * c.ny) - c.r * xi / (c.nx * c.nx)))
        .collect();
    Ok((-c.r.clamp(-1.0, 1.0), grad))
}

pub fn npcc(truth: &Image, estimate: &Image) -> Result<f64> {
    truth.ensure_same_dims(estimate)?;
    npcc_slice(truth.data(), estimate.data())
}

pub fn npcc_grad(truth: &Image, estimate: &Image) -> Result<Image> {
    truth.ensure_same_dims(estimate)?;
    let (_, g) = npcc_grad_slice(truth.data(), estimate.data())?;
    Image::new(estimate.height(), estimate.width(), estimate.pitch(), g)
}
