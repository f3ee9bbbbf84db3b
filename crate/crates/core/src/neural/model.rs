//! Detector architecture, forward pass with activation tape, and backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::input::InputTensor;
use super::layers::{
    conv3d_backward, conv3d_forward, max_over_axis1, max_over_axis1_backward, upsample2, upsample2_backward,
    Activation, Conv3dSpec,
};
use super::tensor::{cast, Scalar, Tensor};
use super::DetectorConfig;
use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::types::OccupancyGrid;

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    spec: Conv3dSpec,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Backbone {
    l1a: ConvLayer,
    l1b: ConvLayer,
    d2a: ConvLayer,
    d2b: ConvLayer,
    d3a: ConvLayer,
    d3b: ConvLayer,
    lat3: ConvLayer,
    u2: ConvLayer,
    lat2: ConvLayer,
    u1: ConvLayer,
    head: ConvLayer,
}

#[derive(Debug, Clone)]
struct Architecture {
    encoder: Option<[ConvLayer; 2]>,
    backbone: Backbone,
    temporal: Option<Vec<ConvLayer>>,
}

/// How each parameter tensor starts out.
#[derive(Debug, Clone, Copy)]
enum Init {
    He,
    Small,
    Zero,
    Constant(f64),
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn conv(&mut self, name: &str, spec: Conv3dSpec, w_init: Init, b_init: Init) -> ConvLayer {
        let w = self.names.len();
        self.names.push(format!("{name}.weight"));
        self.shapes.push(vec![spec.cout, spec.cin, spec.kernel[0], spec.kernel[1], spec.kernel[2]]);
        self.inits.push(w_init);
        self.names.push(format!("{name}.bias"));
        self.shapes.push(vec![spec.cout]);
        self.inits.push(b_init);
        ConvLayer { spec, w, b: w + 1 }
    }
}

fn architecture(cfg: &DetectorConfig) -> (Architecture, Builder) {
    let mut bld = Builder { names: Vec::new(), shapes: Vec::new(), inits: Vec::new() };
    let ab = cfg.ablations;
    let encoder = (!ab.no_doppler).then(|| {
        let k = cfg.doppler_kernel;
        let spec = |cin, cout| Conv3dSpec {
            cin,
            cout,
            kernel: k,
            stride: [cfg.doppler_stride, 1, 1],
            pad: [k[0] / 2, k[1] / 2, k[2] / 2],
        };
        let half = cfg.doppler_channels / 2;
        [
            bld.conv("doppler.conv1", spec(2, half), Init::He, Init::Zero),
            bld.conv("doppler.conv2", spec(half, cfg.doppler_channels), Init::He, Init::Zero),
        ]
    });
    let cin = if ab.no_doppler { 2 } else { cfg.doppler_channels };
    let [c1, c2, c3] = cfg.backbone_channels;
    let k = cfg.backbone_kernel;
    let e = cfg.output_bins();
    let prior = (cfg.init_prior / (1.0 - cfg.init_prior)).ln();
    let mut c = |name: &str, cin, cout, k, s| bld.conv(name, Conv3dSpec::planar(cin, cout, k, s), Init::He, Init::Zero);
    let l1a = c("backbone.l1a", cin, c1, k, 1);
    let l1b = c("backbone.l1b", c1, c1, k, 1);
    let d2a = c("backbone.d2a", c1, c2, k, 2);
    let d2b = c("backbone.d2b", c2, c2, k, 1);
    let d3a = c("backbone.d3a", c2, c3, k, 2);
    let d3b = c("backbone.d3b", c3, c3, k, 1);
    let lat3 = c("backbone.lat3", c3, c2, 1, 1);
    let u2 = c("backbone.u2", c2, c2, k, 1);
    let lat2 = c("backbone.lat2", c2, c1, 1, 1);
    let u1 = c("backbone.u1", c1, c1, k, 1);
    let head = bld.conv("backbone.head", Conv3dSpec::planar(c1, e, 1, 1), Init::Small, Init::Constant(prior));
    let backbone = Backbone { l1a, l1b, d2a, d2b, d3a, d3b, lat3, u2, lat2, u1, head };
    let temporal = (!ab.no_time).then(|| {
        let tk = cfg.temporal_kernel;
        let h = cfg.temporal_hidden;
        let widths = [e, h, h, h, h, h, e];
        (0..6)
            .map(|i| {
                let spec =
                    Conv3dSpec { cin: widths[i], cout: widths[i + 1], kernel: tk, stride: [1; 3], pad: tk.map(|k| k / 2) };
                // the last layer starts at zero so the head begins as the identity
                let (wi, bi) = if i == 5 { (Init::Zero, Init::Zero) } else { (Init::He, Init::Zero) };
                bld.conv(&format!("temporal.conv{}", i + 1), spec, wi, bi)
            })
            .collect()
    });
    (Architecture { encoder, backbone, temporal }, bld)
}

/// Trainable detector: configuration plus named parameter tensors.
#[derive(Debug, Clone)]
pub struct DetectorModel<F> {
    pub config: DetectorConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor<F>>,
    arch: Architecture,
}

/// Logits `[E, T, R, A]` and everything the backward pass needs.
pub struct ForwardOutput<F> {
    pub logits: Tensor<F>,
    /// Per-frame trunk logits `[E, 1, R, A]` before the temporal head.
    pub trunk: Vec<Tensor<F>>,
    caches: Vec<TrunkCache<F>>,
    temporal: Vec<(Tensor<F>, Tensor<F>)>,
}

struct EncoderCache<F> {
    x0: Tensor<F>,
    z1: Tensor<F>,
    a1: Tensor<F>,
    z2: Tensor<F>,
    arg: Vec<u32>,
}

/// (conv input, pre-activation) of each conv + activation step.
type Step<F> = (Tensor<F>, Tensor<F>);

struct TrunkCache<F> {
    enc: Option<EncoderCache<F>>,
    l1a: Step<F>,
    l1b: Step<F>,
    d2a: Step<F>,
    d2b: Step<F>,
    d3a: Step<F>,
    d3b: Step<F>,
    s3: Tensor<F>,
    lat3_shape: Vec<usize>,
    u2: Step<F>,
    u2o: Tensor<F>,
    lat2_shape: Vec<usize>,
    u1: Step<F>,
    u1o: Tensor<F>,
}

impl<F: Scalar> DetectorModel<F> {
    /// Freshly initialized model, deterministic under `cfg.seed`.
    pub fn new(cfg: &DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let (arch, bld) = architecture(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = bld
            .shapes
            .iter()
            .zip(&bld.inits)
            .map(|(shape, init)| {
                let n: usize = shape.iter().product();
                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                let data: Vec<F> = match init {
                    Init::Zero => vec![F::zero(); n],
                    Init::Constant(v) => vec![cast(*v); n],
                    Init::He | Init::Small => {
                        let std = if matches!(init, Init::He) { (2.0 / fan_in as f64).sqrt() } else { 0.01 };
                        let normal = Normal::new(0.0, std).expect("positive std");
                        (0..n).map(|_| cast(normal.sample(&mut rng))).collect()
                    }
                };
                Tensor { shape: shape.clone(), data }
            })
            .collect();
        Ok(Self { config: cfg.clone(), names: bld.names, params, arch })
    }

    /// Rebuilds a model from stored tensors; names and shapes must match the config.
    pub fn from_params(cfg: &DetectorConfig, named: Vec<(String, Tensor<F>)>) -> Result<Self> {
        let mut model = Self::new(cfg)?;
        if named.len() != model.params.len() {
            return Err(Error::Shape(format!("{} tensors given, model has {}", named.len(), model.params.len())));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != model.names[i] || t.shape != model.params[i].shape {
                return Err(Error::Shape(format!(
                    "tensor {i}: expected {} {:?}, got {name} {:?}",
                    model.names[i], model.params[i].shape, t.shape
                )));
            }
            if !t.is_finite() {
                return Err(Error::Config(format!("tensor {name} has non-finite values")));
            }
            model.params[i] = t;
        }
        Ok(model)
    }

    pub fn cast<G: Scalar>(&self) -> DetectorModel<G> {
        DetectorModel {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            arch: self.arch.clone(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.params.iter().map(|p| Tensor::zeros(&p.shape)).collect()
    }

    /// Zeroes the weights and bias of the backbone's output layer.
    pub fn zero_head(&mut self) {
        let h = self.arch.backbone.head;
        self.params[h.w].data.fill(F::zero());
        self.params[h.b].data.fill(F::zero());
    }

    fn act(&self) -> Activation {
        self.config.activation
    }

    fn conv(&self, l: &ConvLayer, x: &Tensor<F>) -> Tensor<F> {
        conv3d_forward(x, &self.params[l.w].data, &self.params[l.b].data, &l.spec)
    }

    fn conv_back(&self, l: &ConvLayer, x: &Tensor<F>, dy: &Tensor<F>, grads: &mut [Tensor<F>]) -> Tensor<F> {
        let (lo, hi) = grads.split_at_mut(l.b);
        conv3d_backward(x, &self.params[l.w].data, &l.spec, dy, &mut lo[l.w].data, &mut hi[0].data)
    }

    /// Conv followed by the activation; returns (output, cache step).
    fn conv_act(&self, l: &ConvLayer, x: Tensor<F>) -> (Tensor<F>, Step<F>) {
        let z = self.conv(l, &x);
        (self.act().forward(&z), (x, z))
    }

    fn conv_act_back(&self, l: &ConvLayer, step: &Step<F>, da: Tensor<F>, grads: &mut [Tensor<F>]) -> Tensor<F> {
        let dz = self.act().backward(&step.1, da);
        self.conv_back(l, &step.0, &dz, grads)
    }

    /// Doppler encoder on one frame: the activation before the Doppler
    /// max-pool `[C, D', R, A]` and the pooled map `[C, 1, R, A]`.
    pub fn encode(&self, frame: &Tensor<F>) -> Option<(Tensor<F>, Tensor<F>)> {
        let [e1, e2] = self.arch.encoder.as_ref()?;
        let a1 = self.act().forward(&self.conv(e1, frame));
        let a2 = self.act().forward(&self.conv(e2, &a1));
        let (pooled, _) = max_over_axis1(&a2);
        Some((a2, pooled))
    }

    /// Shared per-frame network: `[2, D, R, A]` to logits `[E, 1, R, A]`.
    fn trunk_forward(&self, x0: Tensor<F>) -> (Tensor<F>, TrunkCache<F>) {
        let (b0, enc) = match &self.arch.encoder {
            Some([e1, e2]) => {
                let z1 = self.conv(e1, &x0);
                let a1 = self.act().forward(&z1);
                let z2 = self.conv(e2, &a1);
                let a2 = self.act().forward(&z2);
                let (pooled, arg) = max_over_axis1(&a2);
                (pooled, Some(EncoderCache { x0, z1, a1, z2, arg }))
            }
            None => {
                let [c, d, r, a] = [x0.shape[0], x0.shape[1], x0.shape[2], x0.shape[3]];
                assert_eq!(d, 1, "Doppler-free model needs a collapsed Doppler axis");
                (Tensor { shape: vec![c, 1, r, a], data: x0.data }, None)
            }
        };
        let bb = &self.arch.backbone;
        let (h1, l1a) = self.conv_act(&bb.l1a, b0);
        let (s1, l1b) = self.conv_act(&bb.l1b, h1);
        let (h2, d2a) = self.conv_act(&bb.d2a, s1.clone());
        let (s2, d2b) = self.conv_act(&bb.d2b, h2);
        let (h3, d3a) = self.conv_act(&bb.d3a, s2.clone());
        let (s3, d3b) = self.conv_act(&bb.d3b, h3);
        let lat3 = self.conv(&bb.lat3, &s3);
        let mut m2 = upsample2(&lat3, s2.shape[2], s2.shape[3]);
        m2.add_assign(&s2);
        let (u2o, u2) = self.conv_act(&bb.u2, m2);
        let lat2 = self.conv(&bb.lat2, &u2o);
        let mut m1 = upsample2(&lat2, s1.shape[2], s1.shape[3]);
        m1.add_assign(&s1);
        let (u1o, u1) = self.conv_act(&bb.u1, m1);
        let logits = self.conv(&bb.head, &u1o);
        let cache = TrunkCache {
            enc,
            l1a,
            l1b,
            d2a,
            d2b,
            d3a,
            d3b,
            s3,
            lat3_shape: lat3.shape,
            u2,
            u2o,
            lat2_shape: lat2.shape,
            u1,
            u1o,
        };
        (logits, cache)
    }

    fn trunk_backward(&self, c: &TrunkCache<F>, dlogits: &Tensor<F>, grads: &mut [Tensor<F>]) {
        let bb = &self.arch.backbone;
        let du1o = self.conv_back(&bb.head, &c.u1o, dlogits, grads);
        let dm1 = self.act().backward(&c.u1.1, du1o);
        let dm1 = self.conv_back(&bb.u1, &c.u1.0, &dm1, grads);
        // m1 = up(lat2(u2o)) + s1
        let mut ds1 = dm1.clone();
        let dlat2 = upsample2_backward(&c.lat2_shape, &dm1);
        let du2o = self.conv_back(&bb.lat2, &c.u2o, &dlat2, grads);
        let dm2 = self.conv_act_back(&bb.u2, &c.u2, du2o, grads);
        // m2 = up(lat3(s3)) + s2
        let mut ds2 = dm2.clone();
        let dlat3 = upsample2_backward(&c.lat3_shape, &dm2);
        let ds3 = self.conv_back(&bb.lat3, &c.s3, &dlat3, grads);
        let dh3 = self.conv_act_back(&bb.d3b, &c.d3b, ds3, grads);
        ds2.add_assign(&self.conv_act_back(&bb.d3a, &c.d3a, dh3, grads));
        let dh2 = self.conv_act_back(&bb.d2b, &c.d2b, ds2, grads);
        ds1.add_assign(&self.conv_act_back(&bb.d2a, &c.d2a, dh2, grads));
        let dh1 = self.conv_act_back(&bb.l1b, &c.l1b, ds1, grads);
        let db0 = self.conv_act_back(&bb.l1a, &c.l1a, dh1, grads);
        if let (Some([e1, e2]), Some(enc)) = (&self.arch.encoder, &c.enc) {
            let da2 = max_over_axis1_backward(&enc.z2.shape, &enc.arg, &db0);
            let dz2 = self.act().backward(&enc.z2, da2);
            let da1 = self.conv_back(e2, &enc.a1, &dz2, grads);
            let dz1 = self.act().backward(&enc.z1, da1);
            self.conv_back(e1, &enc.x0, &dz1, grads);
        }
    }

    pub fn forward(&self, input: &InputTensor<F>) -> Result<ForwardOutput<F>> {
        let cfg = &self.config;
        if input.frames() != cfg.frames {
            return Err(Error::Shape(format!("input has {} frames, model expects {}", input.frames(), cfg.frames)));
        }
        if cfg.ablations.no_doppler && input.doppler() != 1 {
            return Err(Error::Shape("Doppler-free model needs a collapsed input".into()));
        }
        let (e, t, r, a) = (cfg.output_bins(), cfg.frames, input.range(), input.azimuth());
        let mut trunk = Vec::with_capacity(t);
        let mut caches = Vec::with_capacity(t);
        for f in 0..t {
            let (l, c) = self.trunk_forward(input.frame(f));
            trunk.push(l);
            caches.push(c);
        }
        let plane = r * a;
        let mut stack = Tensor::zeros(&[e, t, r, a]);
        for (f, l) in trunk.iter().enumerate() {
            for ch in 0..e {
                stack.data[(ch * t + f) * plane..][..plane].copy_from_slice(&l.data[ch * plane..][..plane]);
            }
        }
        let mut temporal = Vec::new();
        let logits = match &self.arch.temporal {
            None => stack,
            Some(layers) => {
                let mut x = stack.clone();
                for (i, l) in layers.iter().enumerate() {
                    let z = self.conv(l, &x);
                    let next = if i + 1 < layers.len() { self.act().forward(&z) } else { z.clone() };
                    temporal.push((x, z));
                    x = next;
                }
                x.add_assign(&stack);
                x
            }
        };
        Ok(ForwardOutput { logits, trunk, caches, temporal })
    }

    /// Gradients of the loss w.r.t. every parameter, given `dL/dlogits`.
    pub fn backward(&self, out: &ForwardOutput<F>, dlogits: &Tensor<F>, grads: &mut [Tensor<F>]) {
        let [e, t, r, a] = [dlogits.shape[0], dlogits.shape[1], dlogits.shape[2], dlogits.shape[3]];
        let mut dstack = dlogits.clone();
        if let Some(layers) = &self.arch.temporal {
            let mut dx = dlogits.clone();
            for (i, l) in layers.iter().enumerate().rev() {
                let (x, z) = &out.temporal[i];
                let dz = if i + 1 < layers.len() { self.act().backward(z, dx) } else { dx };
                dx = self.conv_back(l, x, &dz, grads);
            }
            dstack.add_assign(&dx);
        }
        let plane = r * a;
        for (f, cache) in out.caches.iter().enumerate() {
            let mut dl = Tensor::zeros(&[e, 1, r, a]);
            for ch in 0..e {
                dl.data[ch * plane..][..plane].copy_from_slice(&dstack.data[(ch * t + f) * plane..][..plane]);
            }
            self.trunk_backward(cache, &dl, grads);
        }
    }
}

/// Per-frame occupancy (`[R x A x E]` layout) where `sigmoid(logit) > threshold`;
/// a threshold of 0 marks everything and 1 nothing.
pub fn predict_occupancy<F: Scalar>(
    model: &DetectorModel<F>,
    input: &InputTensor<F>,
    grid: &PolarGrid,
    threshold: f64,
) -> Result<Vec<OccupancyGrid>> {
    let e = model.config.output_bins();
    if grid.n_el() != e || grid.n_range != input.range() || grid.n_az() != input.azimuth() {
        return Err(Error::Shape("grid does not match the model output".into()));
    }
    let out = model.forward(input)?;
    let [_, t, r, a] = [out.logits.shape[0], out.logits.shape[1], out.logits.shape[2], out.logits.shape[3]];
    let cut = if threshold <= 0.0 {
        f64::NEG_INFINITY
    } else if threshold >= 1.0 {
        f64::INFINITY
    } else {
        (threshold / (1.0 - threshold)).ln()
    };
    (0..t)
        .map(|f| {
            let mut occ = vec![0u8; r * a * e];
            for ch in 0..e {
                for i in 0..r * a {
                    let z = out.logits.data[((ch * t + f) * r * a) + i].to_f64().unwrap();
                    let hit = if threshold <= 0.0 { true } else { z > cut };
                    occ[i * e + ch] = hit as u8;
                }
            }
            OccupancyGrid::from_vec(grid.clone(), occ)
        })
        .collect()
}

/// Per-frame occupancy probabilities in occupancy layout (`[R, A, E]`).
pub fn predict_probabilities<F: Scalar>(model: &DetectorModel<F>, input: &InputTensor<F>) -> Result<Vec<Vec<f64>>> {
    let e = model.config.output_bins();
    let out = model.forward(input)?;
    let [_, t, r, a] = [out.logits.shape[0], out.logits.shape[1], out.logits.shape[2], out.logits.shape[3]];
    Ok((0..t)
        .map(|f| {
            let mut p = vec![0.0; r * a * e];
            for ch in 0..e {
                for i in 0..r * a {
                    let z = out.logits.data[((ch * t + f) * r * a) + i].to_f64().unwrap();
                    p[i * e + ch] = 1.0 / (1.0 + (-z).exp());
                }
            }
            p
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Ablations;

    fn tiny(ablations: Ablations) -> DetectorConfig {
        DetectorConfig {
            frames: 3,
            doppler_channels: 4,
            backbone_channels: [4, 4, 6],
            temporal_hidden: 3,
            elevation_bins: 4,
            ablations,
            ..DetectorConfig::default()
        }
    }

    fn input(t: usize, d: usize, r: usize, a: usize, k: f64) -> InputTensor<f64> {
        let n = t * 2 * d * r * a;
        InputTensor::from_tensor(Tensor::from_vec(&[t, 2, d, r, a], (0..n).map(|i| (i as f64 * k).sin()).collect()).unwrap())
            .unwrap()
    }

    #[test]
    fn output_shapes() {
        let m = DetectorModel::<f64>::new(&tiny(Ablations::default())).unwrap();
        let out = m.forward(&input(3, 8, 10, 6, 0.3)).unwrap();
        assert_eq!(out.logits.shape, vec![4, 3, 10, 6]);
        let m = DetectorModel::<f64>::new(&tiny(Ablations { no_doppler: true, ..Default::default() })).unwrap();
        assert_eq!(m.forward(&input(3, 1, 9, 7, 0.3)).unwrap().logits.shape, vec![4, 3, 9, 7]);
    }

    #[test]
    fn zero_head_gives_half_probability() {
        let mut m = DetectorModel::<f64>::new(&tiny(Ablations { no_time: true, ..Default::default() })).unwrap();
        m.zero_head();
        let out = m.forward(&input(3, 4, 6, 6, 0.7)).unwrap();
        assert!(out.logits.data.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn identical_frames_give_identical_outputs() {
        let m = DetectorModel::<f64>::new(&tiny(Ablations::default())).unwrap();
        let one = input(1, 4, 6, 5, 0.4);
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&one.tensor.data);
        }
        let x = InputTensor::from_tensor(Tensor::from_vec(&[3, 2, 4, 6, 5], data).unwrap()).unwrap();
        let out = m.forward(&x).unwrap();
        let plane = 30;
        for ch in 0..4 {
            let f0 = &out.logits.data[(ch * 3) * plane..][..plane];
            for f in 1..3 {
                assert_eq!(f0, &out.logits.data[(ch * 3 + f) * plane..][..plane]);
            }
        }
    }

    #[test]
    fn no_time_equals_pre_temporal_logits_at_init() {
        let full = DetectorModel::<f64>::new(&tiny(Ablations::default())).unwrap();
        let x = input(3, 4, 6, 5, 0.9);
        let out = full.forward(&x).unwrap();
        // zero-initialized last temporal layer: the head adds nothing
        for (f, tr) in out.trunk.iter().enumerate() {
            for ch in 0..4 {
                assert_eq!(&tr.data[ch * 30..][..30], &out.logits.data[(ch * 3 + f) * 30..][..30]);
            }
        }
        let nt = DetectorModel::<f64>::new(&tiny(Ablations { no_time: true, ..Default::default() })).unwrap();
        let out_nt = nt.forward(&x).unwrap();
        assert_eq!(out_nt.logits.data, out.logits.data);
    }

    #[test]
    fn thresholds_zero_and_one_give_full_and_empty() {
        use crate::grid::SineAxis;
        let cfg = tiny(Ablations::default());
        let m = DetectorModel::<f64>::new(&cfg).unwrap();
        let grid =
            PolarGrid::new(0.2, 6, 0.1, 4, SineAxis::new(5, 8, 90.0).unwrap(), SineAxis::new(4, 8, 90.0).unwrap()).unwrap();
        let x = input(3, 4, 6, 5, 0.2);
        assert!(predict_occupancy(&m, &x, &grid, 1.0).unwrap().iter().all(|g| g.count() == 0));
        assert!(predict_occupancy(&m, &x, &grid, 0.0).unwrap().iter().all(|g| g.count() == g.occ.len()));
    }

    #[test]
    fn checkpoint_tensors_round_trip() {
        let cfg = tiny(Ablations::default());
        let m = DetectorModel::<f32>::new(&cfg).unwrap();
        let named: Vec<_> = m.names.iter().cloned().zip(m.params.iter().cloned()).collect();
        let back = DetectorModel::<f32>::from_params(&cfg, named).unwrap();
        assert_eq!(back.params, m.params);
        assert!(DetectorModel::<f32>::from_params(&cfg, vec![]).is_err());
    }

    #[test]
    fn zero_input_zero_bias_encoder_gives_zero() {
        let m = DetectorModel::<f64>::new(&tiny(Ablations::default())).unwrap();
        let (_, pooled) = m.encode(&Tensor::zeros(&[2, 8, 5, 4])).unwrap();
        assert_eq!(pooled.shape, vec![4, 1, 5, 4]);
        assert!(pooled.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn doppler_permutation_leaves_pooled_encoding() {
        let cfg = DetectorConfig { doppler_kernel: [1, 3, 3], doppler_stride: 1, ..tiny(Ablations::default()) };
        let m = DetectorModel::<f64>::new(&cfg).unwrap();
        let x = input(1, 6, 5, 4, 0.37).frame(0);
        let perm = [3, 0, 5, 1, 4, 2];
        let mut xp = x.clone();
        let plane = 20;
        for c in 0..2 {
            for (d, &src) in perm.iter().enumerate() {
                xp.data[(c * 6 + d) * plane..][..plane].copy_from_slice(&x.data[(c * 6 + src) * plane..][..plane]);
            }
        }
        let (pre, pooled) = m.encode(&x).unwrap();
        let (pre_p, pooled_p) = m.encode(&xp).unwrap();
        assert_ne!(pre.data, pre_p.data);
        for (a, b) in pooled.data.iter().zip(&pooled_p.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_permutation_permutes_trunk_outputs() {
        let m = DetectorModel::<f64>::new(&tiny(Ablations::default())).unwrap();
        let x = input(3, 4, 6, 5, 0.61);
        let n = 2 * 4 * 6 * 5;
        let perm = [2, 0, 1];
        let mut data = Vec::new();
        for &f in &perm {
            data.extend_from_slice(&x.tensor.data[f * n..(f + 1) * n]);
        }
        let xp = InputTensor::from_tensor(Tensor::from_vec(&x.tensor.shape, data).unwrap()).unwrap();
        let (o, op) = (m.forward(&x).unwrap(), m.forward(&xp).unwrap());
        for (i, &f) in perm.iter().enumerate() {
            assert_eq!(op.trunk[i].data, o.trunk[f].data);
        }
    }
}
