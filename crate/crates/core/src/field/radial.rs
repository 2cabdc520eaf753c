use super::{FrequencyGrid, Image};
use crate::error::{Error, Result};

/// Binned radial statistics of a frequency-domain grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// CSV body with a `bin_center,value,count` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,value,count\n");
        for ((c, v), n) in self.centers.iter().zip(&self.values).zip(&self.counts) {
            out.push_str(&format!("{c:.9e},{v:.9e},{n}\n"));
        }
        out
    }
}

/// Mean of the grid over annuli one frequency sample wide.
///
/// Bin `k` collects samples with radius in `[(k - 1/2) dr, (k + 1/2) dr)` where
/// `dr` is the finer of the two axis spacings. Empty bins are dropped.
pub fn radial_average(spectrum: &Image, grid: &FrequencyGrid) -> Result<RadialProfile> {
    if spectrum.dims() != grid.dims() {
        return Err(Error::DimensionMismatch {
            expected: grid.dims(),
            got: spectrum.dims(),
        });
    }
    let dr = grid.du().min(grid.dv());
    let (h, w) = spectrum.dims();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let bin = (grid.radius(r, c) / dr).round() as usize;
            if bin >= sums.len() {
                sums.resize(bin + 1, 0.0);
                counts.resize(bin + 1, 0);
            }
            sums[bin] += spectrum.get(r, c);
            counts[bin] += 1;
        }
    }
    let mut profile = RadialProfile {
        centers: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
    };
    for (k, (s, n)) in sums.into_iter().zip(counts).enumerate() {
        if n > 0 {
            profile.centers.push(k as f64 * dr);
            profile.values.push(s / n as f64);
            profile.counts.push(n);
        }
    }
    Ok(profile)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossSection {
    /// The `v = 0` row.
    Slice,
    /// Mean over all `v` at each `u`.
    MeanOverV,
}

/// Profile along `u >= 0`.
pub fn u_cross_section(spectrum: &Image, grid: &FrequencyGrid, mode: CrossSection) -> Result<RadialProfile> {
    if spectrum.dims() != grid.dims() {
        return Err(Error::DimensionMismatch {
            expected: grid.dims(),
            got: spectrum.dims(),
        });
    }
    let (h, w) = spectrum.dims();
    let mut profile = RadialProfile {
        centers: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
    };
    for c in 0..=w / 2 {
        let (value, count) = match mode {
            CrossSection::Slice => (spectrum.get(0, c), 1),
            CrossSection::MeanOverV => ((0..h).map(|r| spectrum.get(r, c)).sum::<f64>() / h as f64, h),
        };
        profile.centers.push(grid.u(c));
        profile.values.push(value);
        profile.counts.push(count);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_gives_constant_profile() {
        let grid = FrequencyGrid::new(16, 16, None).unwrap();
        let img = Image::filled(16, 16, None, 3.25).unwrap();
        let p = radial_average(&img, &grid).unwrap();
        assert!(p.values.iter().all(|&v| v == 3.25));
        assert!(p.centers.windows(2).all(|w| w[1] > w[0]));
        assert!(p.counts.iter().all(|&n| n >= 1));
        assert_eq!(p.counts.iter().sum::<usize>(), 256);
    }

    #[test]
    fn single_ring_support() {
        let grid = FrequencyGrid::new(32, 32, Some(1e-5)).unwrap();
        let dr = grid.du();
        let img = Image::from_fn(32, 32, Some(1e-5), |r, c| {
            if (grid.radius(r, c) / dr).round() as usize == 2 {
                7.0
            } else {
                0.0
            }
        })
        .unwrap();
        let p = radial_average(&img, &grid).unwrap();
        for (center, value) in p.centers.iter().zip(&p.values) {
            let bin = (center / dr).round() as usize;
            let expected = if bin == 2 { 7.0 } else { 0.0 };
            assert_eq!(*value, expected, "bin {bin}");
        }
    }

    #[test]
    fn gaussian_matches_analytic_radial_function() {
        let n = 64;
        let grid = FrequencyGrid::new(n, n, None).unwrap();
        let sigma = 8.0 * grid.du();
        let img = Image::from_fn(n, n, None, |r, c| {
            let rr = grid.radius(r, c);
            (-rr * rr / (2.0 * sigma * sigma)).exp()
        })
        .unwrap();
        let p = radial_average(&img, &grid).unwrap();
        let limit = grid.nyquist() / 2.0;
        let mut checked = 0;
        for (center, value) in p.centers.iter().zip(&p.values) {
            if *center < limit {
                let analytic = (-center * center / (2.0 * sigma * sigma)).exp();
                assert!((value - analytic).abs() / analytic < 0.05, "r={center}: {value} vs {analytic}");
                checked += 1;
            }
        }
        assert!(checked >= 15);
    }

    #[test]
    fn anisotropic_grid_uses_finer_spacing() {
        let grid = FrequencyGrid::new(8, 16, None).unwrap();
        let img = Image::filled(8, 16, None, 1.0).unwrap();
        let p = radial_average(&img, &grid).unwrap();
        assert!((p.centers[1] - grid.du()).abs() < 1e-15);
    }

    #[test]
    fn cross_sections() {
        let grid = FrequencyGrid::new(8, 8, None).unwrap();
        let img = Image::from_fn(8, 8, None, |r, c| (r * 10 + c) as f64).unwrap();
        let slice = u_cross_section(&img, &grid, CrossSection::Slice).unwrap();
        assert_eq!(slice.values, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let mean = u_cross_section(&img, &grid, CrossSection::MeanOverV).unwrap();
        assert_eq!(mean.values[0], 35.0);
    }
}
