//! Layer parameter containers and the forward/backward arithmetic.
//! Convolutions are 3x3, stride 1, no padding ("valid"); inputs and
//! activations are channel-major `[c][i][j]` flat vectors.

use crate::rng::Stream;
use crate::scalar::Scalar;

pub const KERNEL: usize = 3;

/// 3x3 valid convolution; weights `[out_ch][in_ch][3][3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Scalar> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub frozen: bool,
}

/// Fully connected layer; weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub frozen: bool,
}

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
fn init_uniform<T: Scalar>(n: usize, fan_in: usize, stream: &mut Stream) -> Vec<T> {
    let limit = 1.0 / (fan_in as f64).sqrt();
    (0..n)
        .map(|_| T::of(stream.uniform_in(-limit, limit)))
        .collect()
}

impl<T: Scalar> ConvLayer<T> {
    pub fn init(in_ch: usize, out_ch: usize, stream: &mut Stream) -> Self {
        let fan_in = in_ch * KERNEL * KERNEL;
        ConvLayer {
            in_ch,
            out_ch,
            weights: init_uniform(out_ch * fan_in, fan_in, stream),
            bias: vec![T::zero(); out_ch],
            frozen: false,
        }
    }

    /// Output is `[out_ch][h-2][w-2]`.
    pub fn forward(&self, x: &[T], h: usize, w: usize) -> Vec<T> {
        let (oh, ow) = (h - 2, w - 2);
        let mut out = vec![T::zero(); self.out_ch * oh * ow];
        for oc in 0..self.out_ch {
            let wbase = oc * self.in_ch * KERNEL * KERNEL;
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_ch {
                        let xbase = ic * h * w;
                        let kbase = wbase + ic * KERNEL * KERNEL;
                        for di in 0..KERNEL {
                            let row = xbase + (i + di) * w + j;
                            let krow = kbase + di * KERNEL;
                            for dj in 0..KERNEL {
                                acc += self.weights[krow + dj] * x[row + dj];
                            }
                        }
                    }
                    out[oc * oh * ow + i * ow + j] = acc;
                }
            }
        }
        out
    }

    /// Accumulate parameter gradients and return dL/dx.
    pub fn backward(
        &self,
        x: &[T],
        h: usize,
        w: usize,
        dz: &[T],
        dw: &mut [T],
        db: &mut [T],
    ) -> Vec<T> {
        let (oh, ow) = (h - 2, w - 2);
        let mut dx = vec![T::zero(); self.in_ch * h * w];
        for oc in 0..self.out_ch {
            let wbase = oc * self.in_ch * KERNEL * KERNEL;
            for i in 0..oh {
                for j in 0..ow {
                    let g = dz[oc * oh * ow + i * ow + j];
                    if g == T::zero() {
                        continue;
                    }
                    db[oc] += g;
                    for ic in 0..self.in_ch {
                        let xbase = ic * h * w;
                        let kbase = wbase + ic * KERNEL * KERNEL;
                        for di in 0..KERNEL {
                            let row = xbase + (i + di) * w + j;
                            let krow = kbase + di * KERNEL;
                            for dj in 0..KERNEL {
                                dw[krow + dj] += g * x[row + dj];
                                dx[row + dj] += self.weights[krow + dj] * g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<T: Scalar> DenseLayer<T> {
    pub fn init(in_dim: usize, out_dim: usize, stream: &mut Stream) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: init_uniform(out_dim * in_dim, in_dim, stream),
            bias: vec![T::zero(); out_dim],
            frozen: false,
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (wv, xv) in row.iter().zip(x) {
                acc += *wv * *xv;
            }
            out.push(acc);
        }
        out
    }

    pub fn backward(&self, x: &[T], dz: &[T], dw: &mut [T], db: &mut [T]) -> Vec<T> {
        let mut dx = vec![T::zero(); self.in_dim];
        for o in 0..self.out_dim {
            let g = dz[o];
            db[o] += g;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let drow = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                drow[i] += g * x[i];
                dx[i] += row[i] * g;
            }
        }
        dx
    }
}

pub fn relu<T: Scalar>(z: &[T]) -> Vec<T> {
    z.iter().map(|&v| v.max(T::zero())).collect()
}

/// dL/dz from dL/da through the ReLU gate.
pub fn relu_backward<T: Scalar>(z: &[T], da: &[T]) -> Vec<T> {
    z.iter()
        .zip(da)
        .map(|(&zv, &gv)| if zv > T::zero() { gv } else { T::zero() })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverted dropout mask: each unit kept with probability `1 - rate`
/// and scaled by `1/(1 - rate)`, so inference needs no rescaling.
pub fn dropout_mask<T: Scalar>(n: usize, rate: f64, stream: &mut Stream) -> Vec<T> {
    if rate <= 0.0 {
        return vec![T::one(); n];
    }
    let keep = 1.0 - rate;
    let scale = T::of(1.0 / keep);
    (0..n)
        .map(|_| {
            if stream.uniform() < keep {
                scale
            } else {
                T::zero()
            }
        })
        .collect()
}
