//! Hand-rolled layers with explicit backward passes. Convolutions go
//! through im2col / col2im so the heavy lifting is plain matrix products;
//! the transposed convolution is the exact adjoint of the matching strided
//! convolution, which makes the gradient derivations mechanical.

use crate::geometry::RngStream;
use ndarray::{Array1, Array2, Array3};
use rand_distr::{Distribution, Normal};

#[inline]
pub fn conv_out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Gather k x k patches of `x` (channels, h, w) into columns indexed by
/// output position. Out-of-bounds taps read as zero.
pub fn im2col(x: &Array3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[[row, oi * ow + oj]] = x[[ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image of shape
/// (c, h, w).
pub fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        x[[ci, ii as usize, jj as usize]] += cols[[row, oi * ow + oj]];
                    }
                }
            }
        }
    }
    x
}

fn he_normal(rng: &mut RngStream, fan_in: usize, shape: (usize, usize)) -> Array2<f64> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    Array2::from_shape_fn(shape, |_| dist.sample(rng))
}

/// Weight-and-bias gradient shared by every layer kind.
#[derive(Debug, Clone)]
pub struct TensorGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully connected layer, weight stored (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        Self { w: he_normal(rng, in_dim, (out_dim, in_dim)), b: Array1::zeros(out_dim) }
    }

    /// Batched forward: x is (n, in) and the result is (n, out).
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Returns (parameter grads, input grads) for a cached input.
    pub fn backward(&self, x: &Array2<f64>, grad_y: &Array2<f64>) -> (TensorGrad, Array2<f64>) {
        let gw = grad_y.t().dot(x);
        let gb = grad_y.sum_axis(ndarray::Axis(0));
        let gx = grad_y.dot(&self.w);
        (TensorGrad { w: gw, b: gb }, gx)
    }

    pub fn zero_grad(&self) -> TensorGrad {
        TensorGrad { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }
}

/// Strided convolution, weight stored (out_c, in_c * k * k).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn init(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut RngStream) -> Self {
        Self {
            w: he_normal(rng, in_c * k * k, (out_c, in_c * k * k)),
            b: Array1::zeros(out_c),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    /// Forward pass; also returns the im2col matrix for reuse in backward.
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let (_, h, w) = x.dim();
        let oh = conv_out_dim(h, self.k, self.stride, self.pad);
        let ow = conv_out_dim(w, self.k, self.stride, self.pad);
        let cols = im2col(x, self.k, self.stride, self.pad);
        let mut y = self.w.dot(&cols);
        for (mut row, &bias) in y.rows_mut().into_iter().zip(self.b.iter()) {
            row += bias;
        }
        (y.into_shape((self.out_c, oh, ow)).unwrap(), cols)
    }

    pub fn backward(
        &self,
        cols: &Array2<f64>,
        in_dims: (usize, usize, usize),
        grad_y: &Array3<f64>,
    ) -> (TensorGrad, Array3<f64>) {
        let (oc, oh, ow) = grad_y.dim();
        let gy = grad_y.view().into_shape((oc, oh * ow)).unwrap();
        let gw = gy.dot(&cols.t());
        let gb = gy.sum_axis(ndarray::Axis(1));
        let gcols = self.w.t().dot(&gy);
        let gx = col2im(&gcols, in_dims.0, in_dims.1, in_dims.2, self.k, self.stride, self.pad);
        (TensorGrad { w: gw, b: gb }, gx)
    }

    pub fn zero_grad(&self) -> TensorGrad {
        TensorGrad { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }
}

/// Transposed convolution: the adjoint of a [`Conv2d`] with the same
/// kernel, stride, and padding. Weight stored (in_c, out_c * k * k), and
/// with stride 2, k 3, pad 1 it exactly doubles the spatial dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvT2d {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvT2d {
    pub fn init(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut RngStream) -> Self {
        Self {
            w: he_normal(rng, in_c, (in_c, out_c * k * k)),
            b: Array1::zeros(out_c),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h * self.stride, w * self.stride)
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        let (oh, ow) = self.out_dims(h, w);
        debug_assert_eq!(conv_out_dim(oh, self.k, self.stride, self.pad), h);
        let x_flat = x.view().into_shape((c, h * w)).unwrap();
        let cols = self.w.t().dot(&x_flat);
        let mut y = col2im(&cols, self.out_c, oh, ow, self.k, self.stride, self.pad);
        for (mut plane, &bias) in y.outer_iter_mut().zip(self.b.iter()) {
            plane += bias;
        }
        y
    }

    pub fn backward(&self, x: &Array3<f64>, grad_y: &Array3<f64>) -> (TensorGrad, Array3<f64>) {
        let (c, h, w) = x.dim();
        let gcols = im2col(grad_y, self.k, self.stride, self.pad);
        let x_flat = x.view().into_shape((c, h * w)).unwrap();
        let gw = x_flat.dot(&gcols.t());
        let gb = grad_y.sum_axis(ndarray::Axis(2)).sum_axis(ndarray::Axis(1));
        let gx_flat = self.w.dot(&gcols);
        let gx = gx_flat.into_shape((c, h, w)).unwrap();
        (TensorGrad { w: gw, b: gb }, gx)
    }

    pub fn zero_grad(&self) -> TensorGrad {
        TensorGrad { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }
}

/// In-place ReLU; the pre-activation is kept by the caller for backward.
pub fn relu<D: ndarray::Dimension>(x: &mut ndarray::Array<f64, D>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Gradient gate for ReLU given the pre-activation values.
pub fn relu_backward<D: ndarray::Dimension>(
    pre: &ndarray::Array<f64, D>,
    grad: &mut ndarray::Array<f64, D>,
) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Smoothed L1: quadratic inside the knee, linear outside. Returns the
/// loss value; `huber_grad` gives d loss / d error.
#[inline]
pub fn huber(err: f64, knee: f64) -> f64 {
    let a = err.abs();
    if a <= knee {
        err * err / (2.0 * knee)
    } else {
        a - knee / 2.0
    }
}

#[inline]
pub fn huber_grad(err: f64, knee: f64) -> f64 {
    (err / knee).clamp(-1.0, 1.0)
}

/// First/second-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, t: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
