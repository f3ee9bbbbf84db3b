//! Conv3d, activations, Doppler max-pool and nearest upsampling, each with
//! its backward pass. Feature maps are `[C, n0, n1, n2]`; the innermost axis
//! is contiguous.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Conv3dSpec {
    /// Same-size 3x3 convolution over the last two axes.
    pub fn planar(cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        Self { cin, cout, kernel: [1, k, k], stride: [1, stride, stride], pad: [0, k / 2, k / 2] }
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel.iter().product::<usize>()
    }

    pub fn out_dims(&self, n: [usize; 3]) -> [usize; 3] {
        std::array::from_fn(|i| (n[i] + 2 * self.pad[i] - self.kernel[i]) / self.stride[i] + 1)
    }

    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }
}

/// Outputs `o` in `0..n_out` whose input index `o * s + k - p` lies in `0..n_in`.
#[inline]
fn valid(k: usize, p: usize, s: usize, n_in: usize, n_out: usize) -> std::ops::Range<usize> {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let top = n_in as i64 - 1 + p as i64 - k as i64;
    let hi = if top < 0 { 0 } else { (top as usize / s + 1).min(n_out) };
    lo..hi.max(lo)
}

#[inline]
fn input_index(o: usize, k: usize, p: usize, s: usize) -> usize {
    o * s + k - p
}

pub fn conv3d_forward<F: Scalar>(x: &Tensor<F>, w: &[F], b: &[F], spec: &Conv3dSpec) -> Tensor<F> {
    assert_eq!(x.shape[0], spec.cin, "conv input channels");
    let n = x.spatial();
    let o = spec.out_dims(n);
    let (in_plane, out_plane) = (n.iter().product::<usize>(), o.iter().product::<usize>());
    let [k0, k1, k2] = spec.kernel;
    let [s0, s1, s2] = spec.stride;
    let [p0, p1, p2] = spec.pad;
    let mut out = Tensor::zeros(&[spec.cout, o[0], o[1], o[2]]);
    out.data.par_chunks_mut(out_plane).enumerate().for_each(|(co, out_c)| {
        out_c.fill(b[co]);
        for ci in 0..spec.cin {
            let xin = &x.data[ci * in_plane..(ci + 1) * in_plane];
            let wbase = (co * spec.cin + ci) * spec.taps();
            for a in 0..k0 {
                for c in 0..k1 {
                    for e in 0..k2 {
                        let wv = w[wbase + (a * k1 + c) * k2 + e];
                        let r2 = valid(e, p2, s2, n[2], o[2]);
                        for q0 in valid(a, p0, s0, n[0], o[0]) {
                            let i0 = input_index(q0, a, p0, s0);
                            for q1 in valid(c, p1, s1, n[1], o[1]) {
                                let i1 = input_index(q1, c, p1, s1);
                                let orow = &mut out_c[(q0 * o[1] + q1) * o[2]..][..o[2]];
                                let irow = &xin[(i0 * n[1] + i1) * n[2]..][..n[2]];
                                if s2 == 1 {
                                    let src = &irow[r2.start + e - p2..][..r2.len()];
                                    for (o, &i) in orow[r2.clone()].iter_mut().zip(src) {
                                        *o = *o + wv * i;
                                    }
                                } else {
                                    for q2 in r2.clone() {
                                        orow[q2] = orow[q2] + wv * irow[input_index(q2, e, p2, s2)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Accumulates weight and bias gradients into `dw`, `db` and returns the input gradient.
pub fn conv3d_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &[F],
    spec: &Conv3dSpec,
    dy: &Tensor<F>,
    dw: &mut [F],
    db: &mut [F],
) -> Tensor<F> {
    let n = x.spatial();
    let o = spec.out_dims(n);
    let (in_plane, out_plane) = (n.iter().product::<usize>(), o.iter().product::<usize>());
    let [k0, k1, k2] = spec.kernel;
    let [s0, s1, s2] = spec.stride;
    let [p0, p1, p2] = spec.pad;
    let taps = spec.taps();

    for (co, g) in db.iter_mut().enumerate() {
        *g = *g + dy.data[co * out_plane..(co + 1) * out_plane].iter().copied().sum::<F>();
    }

    dw.par_chunks_mut(spec.cin * taps).enumerate().for_each(|(co, dw_c)| {
        let dyc = &dy.data[co * out_plane..(co + 1) * out_plane];
        for ci in 0..spec.cin {
            let xin = &x.data[ci * in_plane..(ci + 1) * in_plane];
            for a in 0..k0 {
                for c in 0..k1 {
                    for e in 0..k2 {
                        let r2 = valid(e, p2, s2, n[2], o[2]);
                        let mut acc = F::zero();
                        for q0 in valid(a, p0, s0, n[0], o[0]) {
                            let i0 = input_index(q0, a, p0, s0);
                            for q1 in valid(c, p1, s1, n[1], o[1]) {
                                let i1 = input_index(q1, c, p1, s1);
                                let grow = &dyc[(q0 * o[1] + q1) * o[2]..][..o[2]];
                                let irow = &xin[(i0 * n[1] + i1) * n[2]..][..n[2]];
                                if s2 == 1 {
                                    let src = &irow[r2.start + e - p2..][..r2.len()];
                                    acc = acc + grow[r2.clone()].iter().zip(src).map(|(&g, &i)| g * i).sum::<F>();
                                } else {
                                    for q2 in r2.clone() {
                                        acc = acc + grow[q2] * irow[input_index(q2, e, p2, s2)];
                                    }
                                }
                            }
                        }
                        let t = ci * taps + (a * k1 + c) * k2 + e;
                        dw_c[t] = dw_c[t] + acc;
                    }
                }
            }
        }
    });

    let mut dx = Tensor::zeros(&x.shape);
    dx.data.par_chunks_mut(in_plane).enumerate().for_each(|(ci, dx_c)| {
        for co in 0..spec.cout {
            let dyc = &dy.data[co * out_plane..(co + 1) * out_plane];
            let wbase = (co * spec.cin + ci) * taps;
            for a in 0..k0 {
                for c in 0..k1 {
                    for e in 0..k2 {
                        let wv = w[wbase + (a * k1 + c) * k2 + e];
                        let r2 = valid(e, p2, s2, n[2], o[2]);
                        for q0 in valid(a, p0, s0, n[0], o[0]) {
                            let i0 = input_index(q0, a, p0, s0);
                            for q1 in valid(c, p1, s1, n[1], o[1]) {
                                let i1 = input_index(q1, c, p1, s1);
                                let grow = &dyc[(q0 * o[1] + q1) * o[2]..][..o[2]];
                                let xrow = &mut dx_c[(i0 * n[1] + i1) * n[2]..][..n[2]];
                                if s2 == 1 {
                                    let dst = &mut xrow[r2.start + e - p2..][..r2.len()];
                                    for (x, &g) in dst.iter_mut().zip(&grow[r2.clone()]) {
                                        *x = *x + wv * g;
                                    }
                                } else {
                                    for q2 in r2.clone() {
                                        let i2 = input_index(q2, e, p2, s2);
                                        xrow[i2] = xrow[i2] + wv * grow[q2];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exponential linear unit; smooth enough for finite-difference checks.
    #[default]
    Elu,
    /// No nonlinearity (linear-only models).
    Identity,
}

impl Activation {
    pub fn forward<F: Scalar>(self, x: &Tensor<F>) -> Tensor<F> {
        match self {
            Activation::Identity => x.clone(),
            Activation::Elu => Tensor {
                shape: x.shape.clone(),
                data: x.data.iter().map(|&v| if v > F::zero() { v } else { v.exp_m1() }).collect(),
            },
        }
    }

    /// Gradient through the activation given its input `x`.
    pub fn backward<F: Scalar>(self, x: &Tensor<F>, dy: Tensor<F>) -> Tensor<F> {
        match self {
            Activation::Identity => dy,
            Activation::Elu => {
                let mut dx = dy;
                for (g, &v) in dx.data.iter_mut().zip(&x.data) {
                    if v <= F::zero() {
                        *g = *g * v.exp();
                    }
                }
                dx
            }
        }
    }
}

/// Max over axis 1 of `[C, D, R, A]`; returns `[C, 1, R, A]` and the winning
/// index (first on ties).
pub fn max_over_axis1<F: Scalar>(x: &Tensor<F>) -> (Tensor<F>, Vec<u32>) {
    let [c, d, r, a] = [x.shape[0], x.shape[1], x.shape[2], x.shape[3]];
    let plane = r * a;
    let mut out = Tensor::zeros(&[c, 1, r, a]);
    let mut arg = vec![0u32; c * plane];
    for ch in 0..c {
        for p in 0..plane {
            let mut best = x.data[ch * d * plane + p];
            let mut k = 0;
            for di in 1..d {
                let v = x.data[(ch * d + di) * plane + p];
                if v > best {
                    best = v;
                    k = di;
                }
            }
            out.data[ch * plane + p] = best;
            arg[ch * plane + p] = k as u32;
        }
    }
    (out, arg)
}

pub fn max_over_axis1_backward<F: Scalar>(shape: &[usize], arg: &[u32], dy: &Tensor<F>) -> Tensor<F> {
    let [c, d, r, a] = [shape[0], shape[1], shape[2], shape[3]];
    let plane = r * a;
    let mut dx = Tensor::zeros(shape);
    for ch in 0..c {
        for p in 0..plane {
            let di = arg[ch * plane + p] as usize;
            dx.data[(ch * d + di) * plane + p] = dy.data[ch * plane + p];
        }
    }
    dx
}

/// Nearest-neighbor x2 upsampling of the last two axes of `[C, 1, R, A]`,
/// cropped to `(rows, cols)`.
pub fn upsample2<F: Scalar>(x: &Tensor<F>, rows: usize, cols: usize) -> Tensor<F> {
    let (c, r, a) = (x.shape[0], x.shape[2], x.shape[3]);
    assert!(rows <= 2 * r && cols <= 2 * a, "upsample target larger than 2x");
    let mut out = Tensor::zeros(&[c, 1, rows, cols]);
    for ch in 0..c {
        for i in 0..rows {
            for j in 0..cols {
                out.data[(ch * rows + i) * cols + j] = x.data[(ch * r + i / 2) * a + j / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<F: Scalar>(shape: &[usize], dy: &Tensor<F>) -> Tensor<F> {
    let (c, r, a) = (shape[0], shape[2], shape[3]);
    let (rows, cols) = (dy.shape[2], dy.shape[3]);
    let mut dx = Tensor::zeros(shape);
    for ch in 0..c {
        for i in 0..rows {
            for j in 0..cols {
                let t = (ch * r + i / 2) * a + j / 2;
                dx.data[t] = dx.data[t] + dy.data[(ch * rows + i) * cols + j];
            }
        }
    }
    dx
}
