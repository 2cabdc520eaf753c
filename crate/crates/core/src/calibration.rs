//! Affine output calibration by histogram matching.
//!
//! A network trained with a correlation loss recovers the object only up to
//! `output = a * truth + b`. Pairing truth and output values that sit at the
//! same CDF level and fitting a line to the pairs estimates `(a, b)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::Image;

/// Fraction of each tail left out of [`quantile_match`].
pub const TAIL_FRACTION: f64 = 0.01;
pub const DEFAULT_LEVELS: usize = 100;
const MIN_GAIN: f64 = 1e-9;

/// Sorted sample with piecewise-linear CDF and quantile function.
///
/// Order statistic `k` of `n` sits at level `k / (n - 1)`. Between order
/// statistics both maps interpolate linearly, so `quantile(cdf(x)) == x` for
/// every sample `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("CDF sample"));
        }
        if values.len() < 2 {
            return Err(Error::param("values", "a CDF needs at least 2 samples"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        // last index whose value is <= x
        let upper = self.sorted.partition_point(|&v| v <= x);
        if upper == 0 {
            return 0.0;
        }
        if upper == n {
            return 1.0;
        }
        let k = upper - 1;
        let (lo, hi) = (self.sorted[k], self.sorted[upper]);
        let t = if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
        (k as f64 + t) / (n - 1) as f64
    }

    pub fn quantile(&self, level: f64) -> f64 {
        let n = self.sorted.len();
        let pos = level.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (pos.floor() as usize).min(n - 2);
        let t = pos - k as f64;
        self.sorted[k] + t * (self.sorted[k + 1] - self.sorted[k])
    }
}

/// Levels `(i + 0.5) / L` mapped into `[TAIL_FRACTION, 1 - TAIL_FRACTION]`.
pub fn match_levels(levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|i| TAIL_FRACTION + (1.0 - 2.0 * TAIL_FRACTION) * (i as f64 + 0.5) / levels as f64)
        .collect()
}

/// `(truth quantile, output quantile)` pairs at [`match_levels`].
pub fn quantile_match(truth: &[f64], output: &[f64], levels: usize) -> Result<Vec<(f64, f64)>> {
    if levels < 2 {
        return Err(Error::param("levels", format!("{levels} < 2")));
    }
    if truth.len() < levels || output.len() < levels {
        return Err(Error::param(
            "levels",
            format!("{levels} levels need at least that many samples, got {} and {}", truth.len(), output.len()),
        ));
    }
    let t = EmpiricalCdf::new(truth)?;
    let o = EmpiricalCdf::new(output)?;
    if t.max() == t.min() {
        return Err(Error::Degenerate("constant ground-truth population"));
    }
    if o.max() == o.min() {
        return Err(Error::Degenerate("constant output population"));
    }
    Ok(match_levels(levels).into_iter().map(|l| (t.quantile(l), o.quantile(l))).collect())
}

/// Least-squares line `output = a * truth + b` through quantile pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCalibration {
    pub a: f64,
    pub b: f64,
    pub sample_pairs: Vec<(f64, f64)>,
    /// Root-mean-square distance of the pairs from the line.
    pub residual: f64,
}

impl AffineCalibration {
    pub fn identity() -> Self {
        AffineCalibration {
            a: 1.0,
            b: 0.0,
            sample_pairs: Vec::new(),
            residual: 0.0,
        }
    }

    pub fn levels(&self) -> usize {
        self.sample_pairs.len()
    }

    /// `a=<v> b=<v> residual=<v> levels=<L>`.
    pub fn to_record(&self) -> String {
        self.to_string()
    }

    /// Reads back a record; the sample pairs are not part of it.
    pub fn parse_record(text: &str) -> Result<(f64, f64, f64, usize)> {
        let mut fields = [None; 4];
        for token in text.split_whitespace() {
            let bad = || Error::param("calibration", format!("malformed token `{token}`"));
            let (key, value) = token.split_once('=').ok_or_else(bad)?;
            let slot = match key {
                "a" => 0,
                "b" => 1,
                "residual" => 2,
                "levels" => 3,
                _ => return Err(bad()),
            };
            fields[slot] = Some(value.parse::<f64>().map_err(|_| bad())?);
        }
        match fields {
            [Some(a), Some(b), Some(r), Some(l)] => Ok((a, b, r, l as usize)),
            _ => Err(Error::param("calibration", format!("incomplete record `{text}`"))),
        }
    }

    /// Calibration with the given coefficients and no sample pairs.
    pub fn from_coefficients(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::param("calibration", "coefficients must be finite"));
        }
        Ok(AffineCalibration {
            a,
            b,
            sample_pairs: Vec::new(),
            residual: 0.0,
        })
    }
}

impl fmt::Display for AffineCalibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={:e} b={:e} residual={:e} levels={}", self.a, self.b, self.residual, self.levels())
    }
}

pub fn fit_affine(pairs: &[(f64, f64)]) -> Result<AffineCalibration> {
    if pairs.len() < 2 {
        return Err(Error::param("pairs", "a line needs at least 2 pairs"));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * mx.abs().max(1.0) * n {
        return Err(Error::Degenerate("all calibration abscissae are equal"));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let residual = (pairs.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>() / n).sqrt();
    if a < 0.0 {
        log::warn!("calibration slope {a} is negative: output contrast is inverted");
    }
    Ok(AffineCalibration {
        a,
        b,
        sample_pairs: pairs.to_vec(),
        residual,
    })
}

/// Matches pooled truth and output samples and fits the line.
pub fn calibrate(truth: &[Image], outputs: &[Image], levels: usize) -> Result<AffineCalibration> {
    if truth.len() != outputs.len() {
        return Err(Error::param("outputs", format!("{} truths vs {} outputs", truth.len(), outputs.len())));
    }
    let pool = |images: &[Image]| images.iter().flat_map(|i| i.data().iter().copied()).collect::<Vec<f64>>();
    fit_affine(&quantile_match(&pool(truth), &pool(outputs), levels)?)
}

/// `(image - b) / a`.
pub fn apply_calibration(image: &Image, cal: &AffineCalibration) -> Result<Image> {
    if !(cal.a.abs() > MIN_GAIN) {
        return Err(Error::param("a", format!("|{}| is too close to zero to invert", cal.a)));
    }
    image.map(|v| (v - cal.b) / cal.a)
}
