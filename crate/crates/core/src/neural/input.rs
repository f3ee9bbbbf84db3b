//! Radar cubes to network input, and occupancy grids to training targets.

use super::tensor::{cast, Scalar, Tensor};
use super::Ablations;
use crate::error::{Error, Result};
use crate::types::{OccupancyGrid, RadarCube};

/// Network input `[T, 2, D, R, A]`: channel 0 is standardized dB power,
/// channel 1 the elevation argmax scaled to `[0, 1]`. Doppler sits ahead of
/// the spatial axes so that convolutions stride over it.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor<F> {
    pub tensor: Tensor<F>,
}

impl<F: Scalar> InputTensor<F> {
    pub fn from_tensor(tensor: Tensor<F>) -> Result<Self> {
        if tensor.shape.len() != 5 || tensor.shape[1] != 2 {
            return Err(Error::Shape(format!("input must be [T, 2, D, R, A], got {:?}", tensor.shape)));
        }
        if !tensor.is_finite() {
            return Err(Error::Config("input tensor has non-finite values".into()));
        }
        Ok(Self { tensor })
    }

    pub fn frames(&self) -> usize {
        self.tensor.shape[0]
    }

    pub fn doppler(&self) -> usize {
        self.tensor.shape[2]
    }

    pub fn range(&self) -> usize {
        self.tensor.shape[3]
    }

    pub fn azimuth(&self) -> usize {
        self.tensor.shape[4]
    }

    /// Frame `t` as a `[2, D, R, A]` feature map.
    pub fn frame(&self, t: usize) -> Tensor<F> {
        let n: usize = self.tensor.shape[1..].iter().product();
        Tensor { shape: self.tensor.shape[1..].to_vec(), data: self.tensor.data[t * n..(t + 1) * n].to_vec() }
    }
}

/// Linear-interpolated quantile (`q` in `[0, 1]`) of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Power and elevation planes of one cube, `[D, R, A]` each, after the
/// optional quantile floor and Doppler collapse (both planes averaged over
/// Doppler). Power stays linear.
pub fn frame_planes(cube: &RadarCube, ablations: &Ablations) -> (Vec<f64>, Vec<f64>, usize) {
    let [nr, nd, na] = cube.shape();
    let mut power = cube.power.clone();
    if ablations.quantile_prefilter {
        let q = quantile(&power, 0.9);
        let floor = power.iter().copied().fold(f64::INFINITY, f64::min);
        power.iter_mut().filter(|p| **p < q).for_each(|p| *p = floor);
    }
    let e_scale = if cube.grid.n_el() > 1 { 1.0 / (cube.grid.n_el() - 1) as f64 } else { 0.0 };
    if ablations.no_doppler {
        let mut p = vec![0.0; nr * na];
        let mut e = vec![0.0; nr * na];
        for r in 0..nr {
            for a in 0..na {
                let (mut sp, mut se) = (0.0, 0.0);
                for d in 0..nd {
                    let i = cube.index(r, d, a);
                    sp += power[i];
                    se += cube.elev_argmax[i] as f64;
                }
                p[r * na + a] = sp / nd as f64;
                e[r * na + a] = se / nd as f64 * e_scale;
            }
        }
        return (p, e, 1);
    }
    let mut p = vec![0.0; nr * nd * na];
    let mut e = vec![0.0; nr * nd * na];
    for r in 0..nr {
        for d in 0..nd {
            for a in 0..na {
                let src = cube.index(r, d, a);
                let dst = (d * nr + r) * na + a;
                p[dst] = power[src];
                e[dst] = cube.elev_argmax[src] as f64 * e_scale;
            }
        }
    }
    (p, e, nd)
}

/// dB with a floor, then zero-mean unit-variance; constant input maps to zeros.
fn standardize_db(power: &[f64]) -> Vec<f64> {
    let db: Vec<f64> = power.iter().map(|p| 10.0 * p.max(1e-30).log10()).collect();
    let n = db.len() as f64;
    let mean = db.iter().sum::<f64>() / n;
    let var = db.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 1e-24 * mean.abs().max(1.0) {
        return vec![0.0; db.len()];
    }
    let sd = var.sqrt();
    db.iter().map(|x| (x - mean) / sd).collect()
}

/// Stacks `T` consecutive cubes into the network input.
pub fn build_input<F: Scalar>(cubes: &[RadarCube], ablations: &Ablations) -> Result<InputTensor<F>> {
    let first = cubes.first().ok_or_else(|| Error::Config("at least one cube required".into()))?;
    let mut data = Vec::new();
    let mut doppler = 0;
    for c in cubes {
        c.check()?;
        if !c.grid.same_layout(&first.grid) {
            return Err(Error::Shape("cubes of one window must share a grid".into()));
        }
        let (p, e, d) = frame_planes(c, ablations);
        doppler = d;
        data.extend(standardize_db(&p).into_iter().map(cast::<F>));
        data.extend(e.into_iter().map(cast::<F>));
    }
    let [nr, _, na] = first.shape();
    InputTensor::from_tensor(Tensor::from_vec(&[cubes.len(), 2, doppler, nr, na], data)?)
}

/// Training target `[E, T, R, A]` from `T` occupancy grids.
pub fn build_target<F: Scalar>(grids: &[OccupancyGrid]) -> Result<Tensor<F>> {
    let first = grids.first().ok_or_else(|| Error::Config("at least one grid required".into()))?;
    let [r, a, e] = first.shape();
    let t = grids.len();
    let mut out = Tensor::zeros(&[e, t, r, a]);
    for (f, g) in grids.iter().enumerate() {
        if g.shape() != first.shape() {
            return Err(Error::Shape("target grids differ in shape".into()));
        }
        for (i, &v) in g.occ.iter().enumerate() {
            let (cell, ch) = (i / e, i % e);
            out.data[(ch * t + f) * r * a + cell] = cast(v as f64);
        }
    }
    Ok(out)
}
