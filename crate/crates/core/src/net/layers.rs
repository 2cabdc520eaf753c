//! Differentiable primitives recorded on a tape for reverse-mode gradients.
//!
//! Every op keeps what its backward pass needs; `Tape::backward` walks the ops
//! in reverse and accumulates parameter gradients into a [`Gradients`] buffer
//! laid out like [`NetworkParams`](super::NetworkParams).

use matrixmultiply::dgemm;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;

/// Named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One gradient array per parameter tensor.
pub type Gradients = Vec<Vec<f64>>;

pub fn zero_gradients(params: &[ParamTensor]) -> Gradients {
    params.iter().map(|p| vec![0.0; p.len()]).collect()
}

/// Zero-padded ("same") convolution with square kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub weight: usize,
    /// Absent when a normalization follows, which would cancel it.
    pub bias: Option<usize>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn param_count(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel + if self.bias.is_some() { self.cout } else { 0 }
    }
}

/// Per-example, per-channel standardization with learned scale and shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormSpec {
    pub gamma: usize,
    pub beta: usize,
    pub channels: usize,
}

pub type NodeId = usize;

enum Op {
    Input,
    Conv { spec: ConvSpec, x: NodeId, cols: Vec<Vec<f64>> },
    Norm { spec: NormSpec, x: NodeId, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Concat { a: NodeId, b: NodeId },
    Upsample { x: NodeId },
}

fn im2col(x: &[f64], cin: usize, h: usize, w: usize, spec: &ConvSpec, oh: usize, ow: usize, col: &mut [f64]) {
    let (k, s, pad) = (spec.kernel, spec.stride, spec.pad() as isize);
    let ohw = oh * ow;
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * ohw..((ci * k + ky) * k + kx + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - pad;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pad;
                        *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], cin: usize, h: usize, w: usize, spec: &ConvSpec, oh: usize, ow: usize, dx: &mut [f64]) {
    let (k, s, pad) = (spec.kernel, spec.stride, spec.pad() as isize);
    let ohw = oh * ow;
    for ci in 0..cin {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * ohw..((ci * k + ky) * k + kx + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// `c (m x n) += a (m x k) * b (k x n)`, all given with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides; callers pass dense row- or column-major views.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub struct Tape<'p> {
    params: &'p [ParamTensor],
    nodes: Vec<Tensor>,
    ops: Vec<Op>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [ParamTensor]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id]
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor {
        self.nodes.swap_remove(id)
    }

    fn push(&mut self, op: Op, out: Tensor) -> Result<NodeId> {
        let layer = self.ops.len();
        if !out.is_finite() {
            return Err(Error::NonFiniteActivation { layer });
        }
        self.ops.push(op);
        self.nodes.push(out);
        Ok(layer)
    }

    pub fn input(&mut self, x: Tensor) -> Result<NodeId> {
        self.push(Op::Input, x)
    }

    pub fn conv(&mut self, spec: ConvSpec, x: NodeId) -> Result<NodeId> {
        let [n, cin, h, w] = self.nodes[x].shape();
        if cin != spec.cin {
            return Err(Error::ShapeMismatch {
                context: format!("conv input at layer {}", self.ops.len()),
                expected: vec![spec.cin],
                got: vec![cin],
            });
        }
        let (oh, ow) = (spec.out_size(h), spec.out_size(w));
        let kdim = cin * spec.kernel * spec.kernel;
        let weight = &self.params[spec.weight].data;
        let bias = spec.bias.map(|b| self.params[b].data.as_slice());
        let mut out = vec![0.0; n * spec.cout * oh * ow];
        let mut cols = Vec::with_capacity(n);
        for b in 0..n {
            let xin = &self.nodes[x].data()[b * cin * h * w..(b + 1) * cin * h * w];
            let mut col = vec![0.0; kdim * oh * ow];
            im2col(xin, cin, h, w, &spec, oh, ow, &mut col);
            let y = &mut out[b * spec.cout * oh * ow..(b + 1) * spec.cout * oh * ow];
            if let Some(bias) = bias {
                for (co, row) in y.chunks_exact_mut(oh * ow).enumerate() {
                    row.fill(bias[co]);
                }
            }
            gemm(spec.cout, kdim, oh * ow, weight, kdim, 1, &col, oh * ow, 1, 1.0, y);
            cols.push(col);
        }
        self.push(Op::Conv { spec, x, cols }, Tensor::from_raw([n, spec.cout, oh, ow], out))
    }

    pub fn norm(&mut self, spec: NormSpec, x: NodeId) -> Result<NodeId> {
        let [n, c, h, w] = self.nodes[x].shape();
        if c != spec.channels {
            return Err(Error::ShapeMismatch {
                context: format!("norm input at layer {}", self.ops.len()),
                expected: vec![spec.channels],
                got: vec![c],
            });
        }
        let hw = h * w;
        let gamma = &self.params[spec.gamma].data;
        let beta = &self.params[spec.beta].data;
        let xin = self.nodes[x].data();
        let mut xhat = vec![0.0; xin.len()];
        let mut inv_std = vec![0.0; n * c];
        let mut out = vec![0.0; xin.len()];
        for b in 0..n {
            for ch in 0..c {
                let idx = b * c + ch;
                let plane = &xin[idx * hw..(idx + 1) * hw];
                let mean = plane.iter().sum::<f64>() / hw as f64;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
                let istd = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[idx] = istd;
                for i in 0..hw {
                    let xh = (plane[i] - mean) * istd;
                    xhat[idx * hw + i] = xh;
                    out[idx * hw + i] = gamma[ch] * xh + beta[ch];
                }
            }
        }
        self.push(Op::Norm { spec, x, xhat, inv_std }, Tensor::from_raw([n, c, h, w], out))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x];
        let out = t.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape();
        self.push(Op::Relu { x }, Tensor::from_raw(shape, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a], &self.nodes[b]);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                context: format!("residual add at layer {}", self.ops.len()),
                expected: ta.shape().to_vec(),
                got: tb.shape().to_vec(),
            });
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape();
        self.push(Op::Add { a, b }, Tensor::from_raw(shape, out))
    }

    /// Channel concatenation `[a, b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ([n, ca, h, w], [nb, cb, hb, wb]) = (self.nodes[a].shape(), self.nodes[b].shape());
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::ShapeMismatch {
                context: format!("skip concatenation at layer {}", self.ops.len()),
                expected: vec![n, ca, h, w],
                got: vec![nb, cb, hb, wb],
            });
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            out.extend_from_slice(&self.nodes[a].data()[i * ca * hw..(i + 1) * ca * hw]);
            out.extend_from_slice(&self.nodes[b].data()[i * cb * hw..(i + 1) * cb * hw]);
        }
        self.push(Op::Concat { a, b }, Tensor::from_raw([n, ca + cb, h, w], out))
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample(&mut self, x: NodeId) -> Result<NodeId> {
        let [n, c, h, w] = self.nodes[x].shape();
        let (oh, ow) = (2 * h, 2 * w);
        let src = self.nodes[x].data();
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            for y in 0..oh {
                let srow = &src[plane * h * w + (y / 2) * w..plane * h * w + (y / 2 + 1) * w];
                let drow = &mut out[plane * oh * ow + y * ow..plane * oh * ow + (y + 1) * ow];
                for (xo, d) in drow.iter_mut().enumerate() {
                    *d = srow[xo / 2];
                }
            }
        }
        self.push(Op::Upsample { x }, Tensor::from_raw([n, c, oh, ow], out))
    }

    /// Back-propagates `d_output` from node `output`, accumulating parameter
    /// gradients into `grads`. Returns the gradient for every node.
    pub fn backward(&self, output: NodeId, d_output: Vec<f64>, grads: &mut Gradients) -> Vec<Option<Vec<f64>>> {
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node_grads[output] = Some(d_output);
        for id in (0..=output).rev() {
            let Some(dy) = node_grads[id].take() else { continue };
            match &self.ops[id] {
                Op::Input => {}
                Op::Conv { spec, x, cols } => {
                    let dx = self.conv_backward(spec, *x, cols, &dy, grads);
                    accumulate(&mut node_grads[*x], dx);
                }
                Op::Norm { spec, x, xhat, inv_std } => {
                    let dx = self.norm_backward(spec, *x, xhat, inv_std, &dy, grads);
                    accumulate(&mut node_grads[*x], dx);
                }
                Op::Relu { x } => {
                    let y = self.nodes[id].data();
                    let dx = dy.iter().zip(y).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut node_grads[*x], dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads[*b], dy.clone());
                    accumulate(&mut node_grads[*a], dy.clone());
                }
                Op::Concat { a, b } => {
                    let [n, ca, h, w] = self.nodes[*a].shape();
                    let cb = self.nodes[*b].channels();
                    let hw = h * w;
                    let mut da = Vec::with_capacity(n * ca * hw);
                    let mut db = Vec::with_capacity(n * cb * hw);
                    for i in 0..n {
                        let base = i * (ca + cb) * hw;
                        da.extend_from_slice(&dy[base..base + ca * hw]);
                        db.extend_from_slice(&dy[base + ca * hw..base + (ca + cb) * hw]);
                    }
                    accumulate(&mut node_grads[*b], db);
                    accumulate(&mut node_grads[*a], da);
                }
                Op::Upsample { x } => {
                    let [n, c, h, w] = self.nodes[*x].shape();
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        for y in 0..oh {
                            let grow = &dy[plane * oh * ow + y * ow..plane * oh * ow + (y + 1) * ow];
                            let drow = &mut dx[plane * h * w + (y / 2) * w..plane * h * w + (y / 2 + 1) * w];
                            for (xo, g) in grow.iter().enumerate() {
                                drow[xo / 2] += g;
                            }
                        }
                    }
                    accumulate(&mut node_grads[*x], dx);
                }
            }
            node_grads[id] = Some(dy);
        }
        node_grads
    }

    fn conv_backward(&self, spec: &ConvSpec, x: NodeId, cols: &[Vec<f64>], dy: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let [n, cin, h, w] = self.nodes[x].shape();
        let (oh, ow) = (spec.out_size(h), spec.out_size(w));
        let (ohw, kdim) = (oh * ow, cin * spec.kernel * spec.kernel);
        let weight = &self.params[spec.weight].data;
        let mut dx = vec![0.0; n * cin * h * w];
        let mut dcol = vec![0.0; kdim * ohw];
        for (b, col) in cols.iter().enumerate() {
            let g = &dy[b * spec.cout * ohw..(b + 1) * spec.cout * ohw];
            if let Some(bias) = spec.bias {
                let db = &mut grads[bias];
                for (co, row) in g.chunks_exact(ohw).enumerate() {
                    db[co] += row.iter().sum::<f64>();
                }
            }
            // dW += dY * col^T
            gemm(spec.cout, ohw, kdim, g, ohw, 1, col, 1, ohw, 1.0, &mut grads[spec.weight]);
            // dcol = W^T * dY
            gemm(kdim, spec.cout, ohw, weight, 1, kdim, g, ohw, 1, 0.0, &mut dcol);
            col2im(&dcol, cin, h, w, spec, oh, ow, &mut dx[b * cin * h * w..(b + 1) * cin * h * w]);
        }
        dx
    }

    fn norm_backward(&self, spec: &NormSpec, x: NodeId, xhat: &[f64], inv_std: &[f64], dy: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let [n, c, h, w] = self.nodes[x].shape();
        let hw = h * w;
        let gamma = &self.params[spec.gamma].data;
        let mut dx = vec![0.0; dy.len()];
        for b in 0..n {
            for ch in 0..c {
                let idx = b * c + ch;
                let g = &dy[idx * hw..(idx + 1) * hw];
                let xh = &xhat[idx * hw..(idx + 1) * hw];
                let sum_g: f64 = g.iter().sum();
                let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
                grads[spec.beta][ch] += sum_g;
                grads[spec.gamma][ch] += sum_gx;
                let scale = gamma[ch] * inv_std[idx] / hw as f64;
                for i in 0..hw {
                    dx[idx * hw + i] = scale * (hw as f64 * g[i] - sum_g - xh[i] * sum_gx);
                }
            }
        }
        dx
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += v;
            }
        }
        None => *slot = Some(g),
    }
}
