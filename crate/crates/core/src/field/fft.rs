use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexField, Image};

/// Planned 2D transform for a fixed grid size.
///
/// Forward is the unnormalized double sum; inverse carries `1/(height*width)`.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "buffer does not match planned grid");
        rows.process(data);
        let mut transposed = vec![Complex64::new(0.0, 0.0); h * w];
        for r in 0..h {
            for c in 0..w {
                transposed[c * h + r] = data[r * w + c];
            }
        }
        cols.process(&mut transposed);
        for c in 0..w {
            for r in 0..h {
                data[r * w + c] = transposed[c * h + r];
            }
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn forward(&self, field: &ComplexField) -> ComplexField {
        let mut out = field.clone();
        self.forward_in_place(out.data_mut());
        out
    }

    pub fn inverse(&self, spectrum: &ComplexField) -> ComplexField {
        let mut out = spectrum.clone();
        self.inverse_in_place(out.data_mut());
        out
    }

    pub fn forward_real(&self, image: &Image) -> ComplexField {
        let mut out = image.to_complex();
        self.forward_in_place(out.data_mut());
        out
    }
}

pub fn dft2(x: &ComplexField) -> ComplexField {
    Fft2::new(x.height(), x.width()).forward(x)
}

pub fn idft2(x: &ComplexField) -> ComplexField {
    Fft2::new(x.height(), x.width()).inverse(x)
}
