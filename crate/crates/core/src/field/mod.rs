//! Sampled 2D grids, DFT conventions, frequency coordinates, radial statistics
//! and float-image file I/O.
//!
//! Grids are row-major. Frequency-domain data is kept in standard DFT order
//! with the zero frequency at index `(0, 0)`.

mod fft;
mod io;
mod radial;

pub use fft::{dft2, idft2, Fft2};
pub use io::{read_pfm, read_pgm, write_pfm, write_pgm};
pub use radial::{radial_average, u_cross_section, CrossSection, RadialProfile};

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions { height, width });
    }
    Ok(())
}

fn check_pitch(pitch: Option<f64>) -> Result<()> {
    match pitch {
        Some(p) if !(p.is_finite() && p > 0.0) => Err(Error::param("pitch", format!("{p} must be > 0"))),
        _ => Ok(()),
    }
}

/// Real-valued image with optional physical pixel pitch (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pitch: Option<f64>,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pitch: Option<f64>, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        check_pitch(pitch)?;
        if data.len() != height * width {
            return Err(Error::SampleCount {
                height,
                width,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Image {
            height,
            width,
            pitch,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, pitch: Option<f64>) -> Result<Self> {
        Self::filled(height, width, pitch, 0.0)
    }

    pub fn filled(height: usize, width: usize, pitch: Option<f64>, value: f64) -> Result<Self> {
        Self::new(height, width, pitch, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        pitch: Option<f64>,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, pitch, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pitch(&self) -> Option<f64> {
        self.pitch
    }

    pub fn with_pitch(mut self, pitch: Option<f64>) -> Result<Self> {
        check_pitch(pitch)?;
        self.pitch = pitch;
        Ok(self)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Applies `f` to every sample; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(self.height, self.width, self.pitch, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Min-max rescale to `[0, 1]`. A constant image maps to all zeros.
    pub fn rescale_unit(&self) -> Image {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Image {
            data,
            ..self.clone()
        }
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    pub fn ensure_unit_range(&self) -> Result<()> {
        match self.data.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            Some(index) => Err(Error::OutOfRange {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            height: self.height,
            width: self.width,
            pitch: self.pitch,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Copies the `h x w` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Image> {
        if row + h > self.height || col + w > self.width {
            return Err(Error::param("crop", format!("window {h}x{w} at ({row},{col}) exceeds {}x{}", self.height, self.width)));
        }
        let mut data = Vec::with_capacity(h * w);
        for r in row..row + h {
            data.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + w]);
        }
        Image::new(h, w, self.pitch, data)
    }
}

/// Complex-valued sampled field.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    height: usize,
    width: usize,
    pitch: Option<f64>,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(height: usize, width: usize, pitch: Option<f64>, data: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width)?;
        check_pitch(pitch)?;
        if data.len() != height * width {
            return Err(Error::SampleCount {
                height,
                width,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(ComplexField {
            height,
            width,
            pitch,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, pitch: Option<f64>, value: Complex64) -> Result<Self> {
        Self::new(height, width, pitch, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pitch(&self) -> Option<f64> {
        self.pitch
    }

    pub fn with_pitch(mut self, pitch: Option<f64>) -> Result<Self> {
        check_pitch(pitch)?;
        self.pitch = pitch;
        Ok(self)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn real_part(&self) -> Result<Image> {
        Image::new(self.height, self.width, self.pitch, self.data.iter().map(|z| z.re).collect())
    }

    /// Embeds the field at the center of a larger grid filled with `fill`.
    pub fn pad_centered(&self, height: usize, width: usize, fill: Complex64) -> Result<ComplexField> {
        if height < self.height || width < self.width {
            return Err(Error::param("pad", "target smaller than field"));
        }
        let (r0, c0) = ((height - self.height) / 2, (width - self.width) / 2);
        let mut data = vec![fill; height * width];
        for r in 0..self.height {
            let dst = (r + r0) * width + c0;
            data[dst..dst + self.width].copy_from_slice(&self.data[r * self.width..(r + 1) * self.width]);
        }
        ComplexField::new(height, width, self.pitch, data)
    }

    /// Inverse of [`ComplexField::pad_centered`].
    pub fn crop_centered(&self, height: usize, width: usize) -> Result<ComplexField> {
        if height > self.height || width > self.width {
            return Err(Error::param("crop", "target larger than field"));
        }
        let (r0, c0) = ((self.height - height) / 2, (self.width - width) / 2);
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            let src = (r + r0) * self.width + c0;
            data.extend_from_slice(&self.data[src..src + width]);
        }
        ComplexField::new(height, width, self.pitch, data)
    }
}

/// Per-pixel spatial-frequency coordinates in DFT order.
///
/// Units are cycles/meter when a pitch is known, cycles/pixel otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    height: usize,
    width: usize,
    du: f64,
    dv: f64,
}

/// Signed DFT frequency index for position `k` of an `n`-point transform.
/// The Nyquist bin of an even-length transform is taken as positive.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

impl FrequencyGrid {
    pub fn new(height: usize, width: usize, pitch: Option<f64>) -> Result<Self> {
        check_dims(height, width)?;
        check_pitch(pitch)?;
        let d = pitch.unwrap_or(1.0);
        Ok(FrequencyGrid {
            height,
            width,
            du: 1.0 / (width as f64 * d),
            dv: 1.0 / (height as f64 * d),
        })
    }

    pub fn for_image(image: &Image) -> Self {
        Self::new(image.height, image.width, image.pitch).expect("image metadata already validated")
    }

    pub fn for_field(field: &ComplexField) -> Self {
        Self::new(field.height, field.width, field.pitch).expect("field metadata already validated")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Horizontal frequency spacing.
    pub fn du(&self) -> f64 {
        self.du
    }

    /// Vertical frequency spacing.
    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn u(&self, col: usize) -> f64 {
        signed_index(col, self.width) as f64 * self.du
    }

    pub fn v(&self, row: usize) -> f64 {
        signed_index(row, self.height) as f64 * self.dv
    }

    pub fn radius(&self, row: usize, col: usize) -> f64 {
        self.u(col).hypot(self.v(row))
    }

    /// Nyquist frequency along the horizontal axis.
    pub fn nyquist(&self) -> f64 {
        0.5 * self.width as f64 * self.du
    }
}
