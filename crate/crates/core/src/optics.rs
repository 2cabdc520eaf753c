//! Numerical optical bench: SLM phase encoding, a 4f telescope with an iris
//! at the pupil plane, free-space defocus by the angular spectrum method, and
//! intensity capture with background subtraction.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Fft2, FrequencyGrid, Image};

#[derive(Clone, Debug, PartialEq)]
pub struct OpticalConfig {
    /// Illumination wavelength (m).
    pub wavelength: f64,
    /// SLM pixel pitch (m).
    pub slm_pitch: f64,
    /// Camera pixel pitch (m).
    pub camera_pitch: f64,
    /// Telescope focal lengths (m).
    pub f1: f64,
    pub f2: f64,
    /// Iris diameter at the pupil plane (m).
    pub iris_diameter: f64,
    /// Camera defocus distance (m).
    pub defocus: f64,
    /// Phase assigned to an object value of 1 (rad).
    pub phase_max: f64,
    /// Object grid size in pixels (square).
    pub grid_size: usize,
    /// Relabel the output grid with the demagnified pitch after the telescope.
    pub paper_parity: bool,
    /// Apply the iris cutoff.
    pub pupil: bool,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            wavelength: 633e-9,
            slm_pitch: 36e-6,
            camera_pitch: 12e-6,
            f1: 0.150,
            f2: 0.050,
            iris_diameter: 5e-3,
            defocus: 0.050,
            phase_max: PI,
            grid_size: 64,
            paper_parity: false,
            pupil: true,
        }
    }
}

impl OpticalConfig {
    pub fn paper_parity() -> Self {
        OpticalConfig {
            grid_size: 256,
            paper_parity: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("wavelength", self.wavelength),
            ("slm_pitch", self.slm_pitch),
            ("camera_pitch", self.camera_pitch),
            ("f1", self.f1),
            ("f2", self.f2),
            ("iris_diameter", self.iris_diameter),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("{v} must be > 0")));
            }
        }
        if !(self.defocus.is_finite() && self.defocus >= 0.0) {
            return Err(Error::param("defocus", "back-propagation (negative defocus) is not supported"));
        }
        if !(self.phase_max > 0.0 && self.phase_max <= 2.0 * PI) {
            return Err(Error::param("phase_max", format!("{} not in (0, 2pi]", self.phase_max)));
        }
        if self.grid_size == 0 {
            return Err(Error::param("grid_size", "must be positive"));
        }
        if self.paper_parity {
            let pitch_ratio = self.slm_pitch / self.camera_pitch;
            if (self.demagnification() - pitch_ratio).abs() > 1e-9 * pitch_ratio {
                return Err(Error::param(
                    "f1/f2",
                    format!("demagnification {} differs from pitch ratio {pitch_ratio}", self.demagnification()),
                ));
            }
        }
        Ok(())
    }

    pub fn demagnification(&self) -> f64 {
        self.f1 / self.f2
    }

    /// Object-side numerical aperture set by the iris.
    pub fn numerical_aperture(&self) -> f64 {
        0.5 * self.iris_diameter / self.f1
    }

    /// Nominal diffraction-limited resolution `lambda / (2 NA)`.
    pub fn diffraction_limit(&self) -> f64 {
        self.wavelength / (2.0 * self.numerical_aperture())
    }

    /// Radial spatial frequency passed by the iris, in object-plane cycles/m.
    pub fn cutoff_frequency(&self) -> f64 {
        0.5 * self.iris_diameter / (self.wavelength * self.f1)
    }

    /// Pixel pitch of the captured grid.
    pub fn output_pitch(&self) -> f64 {
        if self.paper_parity {
            self.slm_pitch / self.demagnification()
        } else {
            self.slm_pitch
        }
    }

    /// Stable text identifying every field, used to tag derived datasets.
    pub fn fingerprint(&self) -> String {
        format!(
            "wl={:e};slm={:e};cam={:e};f1={:e};f2={:e};iris={:e};dz={:e};phi={:e};n={};parity={};pupil={}",
            self.wavelength,
            self.slm_pitch,
            self.camera_pitch,
            self.f1,
            self.f2,
            self.iris_diameter,
            self.defocus,
            self.phase_max,
            self.grid_size,
            self.paper_parity,
            self.pupil
        )
    }
}

/// `exp(i * phase_max * object)` per sample, carrying the object's pitch.
pub fn encode_phase(object: &Image, phase_max: f64) -> Result<ComplexField> {
    object.ensure_unit_range()?;
    let data = object.data().iter().map(|&v| Complex64::from_polar(1.0, phase_max * v)).collect();
    ComplexField::new(object.height(), object.width(), object.pitch(), data)
}

fn pupil_mask(grid: &FrequencyGrid, cutoff: f64) -> Vec<f64> {
    let (h, w) = grid.dims();
    let mut mask = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            mask.push(if grid.radius(r, c) > cutoff { 0.0 } else { 1.0 });
        }
    }
    mask
}

/// Fractional part of `distance / wavelength`. The quotient is around 1e5
/// cycles, so the plain product would lose ~1e-10 rad of phase; the exact
/// division remainder recovers it.
fn fractional_cycles(distance: f64, wavelength: f64) -> f64 {
    let q = distance / wavelength;
    let r = (-q).mul_add(wavelength, distance);
    (q - q.floor()) + r / wavelength
}

/// Angular-spectrum transfer function on `grid`; evanescent components are zero.
fn transfer_function(grid: &FrequencyGrid, distance: f64, wavelength: f64) -> Vec<Complex64> {
    let k2 = 1.0 / (wavelength * wavelength);
    let inv_wl = 1.0 / wavelength;
    let global = Complex64::from_polar(1.0, 2.0 * PI * fractional_cycles(distance, wavelength));
    let (h, w) = grid.dims();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let v = grid.v(r);
        for c in 0..w {
            let u = grid.u(c);
            let rho2 = u * u + v * v;
            if rho2 > k2 {
                out.push(Complex64::new(0.0, 0.0));
            } else {
                // sqrt(k2 - rho2) - 1/wl, written to avoid cancellation.
                let kz_offset = -rho2 / ((k2 - rho2).sqrt() + inv_wl);
                out.push(global * Complex64::from_polar(1.0, 2.0 * PI * distance * kz_offset));
            }
        }
    }
    out
}

/// Ideal telescope: zeroes Fourier components beyond the iris cutoff. In
/// paper-parity mode the output grid is relabeled with the demagnified pitch.
pub fn pupil_filter(field: &ComplexField, config: &OpticalConfig) -> Result<ComplexField> {
    let pitch = field.pitch().ok_or(Error::MissingPitch)?;
    let grid = FrequencyGrid::for_field(field);
    let fft = Fft2::new(field.height(), field.width());
    let mut spectrum = fft.forward(field);
    for (z, m) in spectrum.data_mut().iter_mut().zip(pupil_mask(&grid, config.cutoff_frequency())) {
        *z *= m;
    }
    let out = fft.inverse(&spectrum);
    let out_pitch = if config.paper_parity {
        pitch / config.demagnification()
    } else {
        pitch
    };
    out.with_pitch(Some(out_pitch))
}

/// Band-limited angular spectrum propagation over `distance >= 0`.
pub fn propagate(field: &ComplexField, distance: f64, wavelength: f64) -> Result<ComplexField> {
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(Error::param("distance", "back-propagation (negative distance) is not supported"));
    }
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::param("wavelength", "must be > 0"));
    }
    field.pitch().ok_or(Error::MissingPitch)?;
    let grid = FrequencyGrid::for_field(field);
    let fft = Fft2::new(field.height(), field.width());
    let mut spectrum = fft.forward(field);
    for (z, t) in spectrum.data_mut().iter_mut().zip(transfer_function(&grid, distance, wavelength)) {
        *z *= t;
    }
    Ok(fft.inverse(&spectrum))
}

pub fn capture_intensity(field: &ComplexField) -> Image {
    let data = field.data().iter().map(|z| z.norm_sqr()).collect();
    Image::new(field.height(), field.width(), field.pitch(), data).expect("finite field has finite intensity")
}

/// Background subtraction, clamping of negatives, and peak normalization.
pub fn preprocess(raw: &Image, background: &Image) -> Result<Image> {
    raw.ensure_same_dims(background)?;
    let diff: Vec<f64> = raw.data().iter().zip(background.data()).map(|(a, b)| (a - b).max(0.0)).collect();
    let peak = diff.iter().copied().fold(0.0, f64::max);
    let data = if peak > 0.0 {
        diff.into_iter().map(|v| v / peak).collect()
    } else {
        diff
    };
    Image::new(raw.height(), raw.width(), raw.pitch(), data)
}

/// Precomputed optical path from an `N x N` object to its raw intensity.
///
/// Objects are zero-padded (unit field) to `2N x 2N` before the telescope and
/// propagation, and the central `N x N` window is captured.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    config: OpticalConfig,
    padded: usize,
    fft: Fft2,
    pupil: Vec<f64>,
    transfer: Vec<Complex64>,
}

impl ForwardModel {
    pub fn new(config: OpticalConfig) -> Result<Self> {
        config.validate()?;
        let padded = 2 * config.grid_size;
        let object_grid = FrequencyGrid::new(padded, padded, Some(config.slm_pitch))?;
        let camera_grid = FrequencyGrid::new(padded, padded, Some(config.output_pitch()))?;
        let pupil = if config.pupil {
            pupil_mask(&object_grid, config.cutoff_frequency())
        } else {
            vec![1.0; padded * padded]
        };
        let transfer = transfer_function(&camera_grid, config.defocus, config.wavelength);
        Ok(ForwardModel {
            fft: Fft2::new(padded, padded),
            config,
            padded,
            pupil,
            transfer,
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.config
    }

    pub fn grid_size(&self) -> usize {
        self.config.grid_size
    }

    pub fn pupil_mask(&self) -> &[f64] {
        &self.pupil
    }

    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    /// Raw intensity for an `N x N` object with values in `[0, 1]`.
    pub fn simulate(&self, object: &Image) -> Result<Image> {
        let n = self.config.grid_size;
        if object.dims() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: (n, n),
                got: object.dims(),
            });
        }
        let object = object.clone().with_pitch(Some(self.config.slm_pitch))?;
        let field = encode_phase(&object, self.config.phase_max)?;
        let mut padded = field.pad_centered(self.padded, self.padded, Complex64::new(1.0, 0.0))?;
        let data = padded.data_mut();
        self.fft.forward_in_place(data);
        for ((z, m), t) in data.iter_mut().zip(&self.pupil).zip(&self.transfer) {
            *z *= t * m;
        }
        self.fft.inverse_in_place(data);
        let out = padded.crop_centered(n, n)?.with_pitch(Some(self.config.output_pitch()))?;
        Ok(capture_intensity(&out))
    }

    /// Raw intensity of the all-zero object.
    pub fn background(&self) -> Result<Image> {
        let n = self.config.grid_size;
        self.simulate(&Image::zeros(n, n, None)?)
    }

    pub fn measure(&self, object: &Image, background: &Image) -> Result<Measurement> {
        Ok(Measurement {
            raw: self.simulate(object)?,
            background: Some(background.clone()),
            normalized: false,
        })
    }
}

pub fn simulate_measurement(object: &Image, model: &ForwardModel) -> Result<Image> {
    model.simulate(object)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub raw: Image,
    pub background: Option<Image>,
    pub normalized: bool,
}

impl Measurement {
    /// Background-subtracted, normalized measurement. Without a background the
    /// raw image is only normalized.
    pub fn normalized(&self) -> Result<Measurement> {
        if self.normalized {
            return Ok(self.clone());
        }
        let raw = match &self.background {
            Some(bg) => preprocess(&self.raw, bg)?,
            None => {
                let zeros = Image::zeros(self.raw.height(), self.raw.width(), self.raw.pitch())?;
                preprocess(&self.raw, &zeros)?
            }
        };
        Ok(Measurement {
            raw,
            background: None,
            normalized: true,
        })
    }
}
