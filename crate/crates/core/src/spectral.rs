//! Corpus power spectral density, power-law fitting, the radial flattening
//! filter, and spectral modulation of images.

use log::debug;

use crate::error::{Error, Result};
use crate::field::{radial_average, u_cross_section, CrossSection, Fft2, FrequencyGrid, Image, RadialProfile};

/// Radial frequency interval used for the power-law fit, in the grid's units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitBand {
    pub lo: f64,
    pub hi: f64,
}

/// Fit band expressed relative to a grid: from `lo_bins` frequency samples up
/// to `hi_nyquist_fraction` of the Nyquist frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSpec {
    pub lo_bins: f64,
    pub hi_nyquist_fraction: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec {
            lo_bins: 3.0,
            hi_nyquist_fraction: 0.5,
        }
    }
}

impl BandSpec {
    pub fn resolve(&self, grid: &FrequencyGrid) -> FitBand {
        let dr = grid.du().min(grid.dv());
        let nyquist = grid.nyquist().min(0.5 * grid.dims().0 as f64 * grid.dv());
        FitBand {
            lo: self.lo_bins * dr,
            hi: self.hi_nyquist_fraction * nyquist,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdEstimate {
    /// Mean `|F|^2` over the corpus in DFT order, normalized to peak 1.
    pub psd2d: Image,
    pub radial: RadialProfile,
    /// Fitted log-log slope over `fit_band`; `None` if the fit failed.
    pub exponent: Option<f64>,
    pub fit_band: FitBand,
}

impl PsdEstimate {
    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::for_image(&self.psd2d)
    }

    pub fn cross_section(&self, mode: CrossSection) -> RadialProfile {
        u_cross_section(&self.psd2d, &self.grid(), mode).expect("psd grid matches its own dimensions")
    }
}

pub fn estimate_psd(corpus: &[Image]) -> Result<PsdEstimate> {
    estimate_psd_with_band(corpus, BandSpec::default())
}

/// Mean periodogram of mean-subtracted images, peak-normalized, with its
/// radial average and power-law exponent.
pub fn estimate_psd_with_band(corpus: &[Image], band: BandSpec) -> Result<PsdEstimate> {
    let first = corpus.first().ok_or(Error::Empty("corpus"))?;
    let (h, w) = first.dims();
    let fft = Fft2::new(h, w);
    let mut acc = vec![0.0; h * w];
    for image in corpus {
        first.ensure_same_dims(image)?;
        let mean = image.mean();
        let centered = image.map(|v| v - mean)?;
        let spectrum = fft.forward_real(&centered);
        for (a, z) in acc.iter_mut().zip(spectrum.data()) {
            *a += z.norm_sqr();
        }
    }
    let count = corpus.len() as f64;
    let peak = acc.iter().copied().fold(0.0, f64::max) / count;
    let data = acc
        .into_iter()
        .map(|v| if peak > 0.0 { v / count / peak } else { 0.0 })
        .collect();
    let psd2d = Image::new(h, w, first.pitch(), data)?;
    let grid = FrequencyGrid::for_image(&psd2d);
    let radial = radial_average(&psd2d, &grid)?;
    let fit_band = band.resolve(&grid);
    let exponent = match fit_power_law(&radial, fit_band) {
        Ok(p) => Some(p),
        Err(e) => {
            debug!("power-law fit failed: {e}");
            None
        }
    };
    Ok(PsdEstimate {
        psd2d,
        radial,
        exponent,
        fit_band,
    })
}

/// Least-squares slope of `log(value)` against `log(radius)` over the band.
pub fn fit_power_law(radial: &RadialProfile, band: FitBand) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&r, &v) in radial.centers.iter().zip(&radial.values) {
        if r < band.lo || r > band.hi || r <= 0.0 {
            continue;
        }
        if v <= 0.0 {
            return Err(Error::FitFailed(format!("nonpositive value {v} at radius {r}")));
        }
        xs.push(r.ln());
        ys.push(v.ln());
    }
    if xs.len() < 4 {
        return Err(Error::FitFailed(format!("band holds {} bins, need at least 4", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Real, nonnegative frequency-domain gain in DFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilter {
    gain: Image,
    dc_gain: f64,
}

impl SpectralFilter {
    /// Wraps a gain grid, checking nonnegativity and `(u,v) -> (-u,-v)` symmetry.
    pub fn from_gain(gain: Image) -> Result<Self> {
        let (h, w) = gain.dims();
        for r in 0..h {
            for c in 0..w {
                let g = gain.get(r, c);
                if g < 0.0 {
                    return Err(Error::param("gain", format!("negative gain {g} at ({r},{c})")));
                }
                if g != gain.get((h - r) % h, (w - c) % w) {
                    return Err(Error::param("gain", format!("asymmetric gain at ({r},{c})")));
                }
            }
        }
        let dc_gain = gain.get(0, 0);
        Ok(SpectralFilter { gain, dc_gain })
    }

    pub fn identity(height: usize, width: usize, pitch: Option<f64>) -> Result<Self> {
        Self::from_gain(Image::filled(height, width, pitch, 1.0)?)
    }

    pub fn gain(&self) -> &Image {
        &self.gain
    }

    pub fn dc_gain(&self) -> f64 {
        self.dc_gain
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gain.dims()
    }
}

/// `G(u,v) = sqrt(u^2 + v^2)` on the DFT grid; zero at the origin.
pub fn flattening_filter(height: usize, width: usize, pitch: Option<f64>) -> Result<SpectralFilter> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidDimensions { height, width });
    }
    let grid = FrequencyGrid::new(height, width, pitch)?;
    let gain = Image::from_fn(height, width, pitch, |r, c| grid.radius(r, c))?;
    Ok(SpectralFilter { gain, dc_gain: 0.0 })
}

/// Relative imaginary residue tolerated after filtering a real image.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// `idft2(gain * dft2(image))`, returned as a real image.
pub fn apply_filter(image: &Image, filter: &SpectralFilter) -> Result<Image> {
    image.ensure_same_dims(&filter.gain)?;
    let fft = Fft2::new(image.height(), image.width());
    let mut spectrum = fft.forward_real(image);
    for (z, &g) in spectrum.data_mut().iter_mut().zip(filter.gain.data()) {
        *z *= g;
    }
    fft.inverse_in_place(spectrum.data_mut());
    let re_norm: f64 = spectrum.data().iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
    let im_norm: f64 = spectrum.data().iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let residue = if re_norm > 0.0 { im_norm / re_norm } else { im_norm };
    if residue > IMAGINARY_TOLERANCE {
        return Err(Error::ImaginaryResidue { residue });
    }
    spectrum.real_part()
}

/// Filters a `[0, 1]` image and min-max rescales the result to `[0, 1]`.
pub fn premodulate(image: &Image, filter: &SpectralFilter) -> Result<Image> {
    image.ensure_unit_range()?;
    Ok(apply_filter(image, filter)?.rescale_unit())
}
