//! Shared-trunk, two-branch dense box regressor with hand-written
//! reverse-mode gradients.
//!
//! ```text
//! features -> shared trunk -> [private trunk] -> mean-concat -> head (hidden, 8)   primary
//!                          \-> [private trunk] -> mean-concat -> head (hidden, 8)   auxiliary
//! ```
//!
//! Mean-concat appends the scene mean of the branch trunk features to every
//! row. The auxiliary branch uses `ceil(gamma * width)` channels wherever the
//! primary branch uses `width`.

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{encode_points, FeatureConfig};
use super::layers::{relu, relu_backward, Dense};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point3};
use crate::scenegen::sha256_hex;

/// Raw head outputs: 7 box coordinates and one objectness logit.
pub const HEAD_OUTPUTS: usize = 8;
/// Scales the initial output-layer weights so early predictions stay near
/// the decode defaults.
const OUTPUT_INIT_GAIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub trunk_widths: Vec<usize>,
    pub head_hidden: usize,
    pub gamma: f64,
    /// Number of trunk layers shared by both branches; the rest are
    /// duplicated per branch.
    pub split_depth: usize,
    /// Decoded `(l, w, h)` for a zero raw output.
    pub size_prior: [f64; 3],
    pub features: FeatureConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            trunk_widths: vec![64, 128],
            head_hidden: 128,
            gamma: 0.5,
            split_depth: 2,
            size_prior: [4.0, 2.0, 1.6],
            features: FeatureConfig::default(),
        }
    }
}

/// Auxiliary width for a primary width `w`.
pub fn scaled_width(w: usize, gamma: f64) -> usize {
    ((gamma * w as f64).ceil() as usize).max(1)
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_widths.is_empty() || self.trunk_widths.contains(&0) || self.head_hidden == 0 {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} must be > 0",
                self.gamma
            )));
        }
        if self.split_depth > self.trunk_widths.len() {
            return Err(Error::InvalidConfig(format!(
                "split depth {} exceeds trunk depth {}",
                self.split_depth,
                self.trunk_widths.len()
            )));
        }
        if self.size_prior.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("size prior must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn auxiliary_hidden(&self) -> usize {
        scaled_width(self.head_hidden, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTag {
    Primary,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub trunk: Vec<Dense>,
    pub hidden: Dense,
    pub output: Dense,
}

impl Branch {
    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.hidden, &self.output])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.hidden, &mut self.output])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub shared: Vec<Dense>,
    pub primary: Branch,
    pub auxiliary: Branch,
}

impl ModelParams {
    /// Deterministic fan-in-scaled uniform initialization.
    ///
    /// Primary-branch parameters are drawn before auxiliary ones, so changing
    /// `gamma` leaves the shared and primary weights untouched.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = config.features.dim();
        let mut shared = Vec::new();
        for &w in &config.trunk_widths[..config.split_depth] {
            shared.push(Dense::init(fan_in, w, 1.0, &mut rng));
            fan_in = w;
        }
        let trunk_out = fan_in;
        let make_branch = |scale: f64, rng: &mut ChaCha8Rng| {
            let mut fan_in = trunk_out;
            let mut trunk = Vec::new();
            for &w in &config.trunk_widths[config.split_depth..] {
                let w = scaled_width(w, scale);
                trunk.push(Dense::init(fan_in, w, 1.0, rng));
                fan_in = w;
            }
            let hidden_width = scaled_width(config.head_hidden, scale);
            let hidden = Dense::init(2 * fan_in, hidden_width, 1.0, rng);
            let mut output = Dense::init(hidden_width, HEAD_OUTPUTS, OUTPUT_INIT_GAIN, rng);
            output.bias.fill(0.0);
            Branch {
                trunk,
                hidden,
                output,
            }
        };
        let primary = make_branch(1.0, &mut rng);
        let auxiliary = make_branch(config.gamma, &mut rng);
        Ok(ModelParams {
            config: config.clone(),
            shared,
            primary,
            auxiliary,
        })
    }

    /// All layers in a fixed order: shared, primary, auxiliary.
    pub fn layers(&self) -> Vec<&Dense> {
        self.shared
            .iter()
            .chain(self.primary.layers())
            .chain(self.auxiliary.layers())
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.shared
            .iter_mut()
            .chain(self.primary.layers_mut())
            .chain(self.auxiliary.layers_mut())
            .collect()
    }

    /// Parameter names matching [`Self::layers`] order, two per layer.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.shared.len() {
            names.push(format!("shared.{i}"));
        }
        for (tag, b) in [("primary", &self.primary), ("auxiliary", &self.auxiliary)] {
            for i in 0..b.trunk.len() {
                names.push(format!("{tag}.trunk.{i}"));
            }
            names.push(format!("{tag}.hidden"));
            names.push(format!("{tag}.output"));
        }
        names
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for l in z.layers_mut() {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        z
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            for p in l.params() {
                out.extend_from_slice(p);
            }
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidConfig(format!(
                "flat vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for l in self.layers_mut() {
            for p in l.params_mut() {
                p.copy_from_slice(&flat[off..off + p.len()]);
                off += p.len();
            }
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut off = index;
        for l in self.layers() {
            for p in l.params() {
                if off < p.len() {
                    return p[off];
                }
                off -= p.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut off = index;
        for l in self.layers_mut() {
            for p in l.params_mut() {
                if off < p.len() {
                    p[off] = value;
                    return;
                }
                off -= p.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.params().iter().all(|p| p.iter().all(|v| v.is_finite())))
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers().iter().map(|l| l.shape()).collect()
    }
}

/// One box per input point from one branch, in world units.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePrediction {
    /// `n x 7`: `x, y, z, l, w, h, theta`.
    pub boxes: Array2<f64>,
    pub objectness: Vec<f64>,
    pub logits: Vec<f64>,
    pub branch: BranchTag,
}

impl DensePrediction {
    pub fn len(&self) -> usize {
        self.boxes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> [f64; 7] {
        let r = self.boxes.row(i);
        [r[0], r[1], r[2], r[3], r[4], r[5], r[6]]
    }
}

/// Forward intermediates of one branch.
#[derive(Debug, Clone)]
struct BranchTape {
    /// Inputs to each private trunk layer, then the trunk output.
    trunk_acts: Vec<Array2<f64>>,
    concat: Array2<f64>,
    hidden: Array2<f64>,
    sizes: Array2<f64>,
}

/// Everything `backward` needs from the matching forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    shapes: Vec<(usize, usize)>,
    /// Inputs to each shared layer, then the shared output.
    shared_acts: Vec<Array2<f64>>,
    primary: BranchTape,
    auxiliary: BranchTape,
    /// Sign pattern of every ReLU; used to detect kink crossings.
    signature: u64,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.shared_acts[0].nrows()
    }

    pub fn signature(&self) -> u64 {
        self.signature
    }
}

/// Gradient of the loss with respect to one branch's decoded predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrad {
    pub boxes: Array2<f64>,
    pub logits: Vec<f64>,
}

impl BranchGrad {
    pub fn zeros(n: usize) -> Self {
        BranchGrad {
            boxes: Array2::zeros((n, 7)),
            logits: vec![0.0; n],
        }
    }
}

fn fold_signature(mut sig: u64, act: &Array2<f64>) -> u64 {
    // FNV-1a over the positive/clamped pattern.
    for &v in act.iter() {
        sig ^= (v > 0.0) as u64;
        sig = sig.wrapping_mul(0x100000001b3);
    }
    sig
}

fn mean_concat(h: &Array2<f64>) -> Array2<f64> {
    let (n, d) = h.dim();
    let mean = h.mean_axis(Axis(0)).expect("at least one row");
    let mut out = Array2::zeros((n, 2 * d));
    out.slice_mut(s![.., ..d]).assign(h);
    out.slice_mut(s![.., d..])
        .assign(&mean.broadcast((n, d)).expect("row broadcast"));
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn run_branch(
    branch: &Branch,
    trunk_out: &Array2<f64>,
    points: &[Point3],
    prior: &[f64; 3],
    tag: BranchTag,
    sig: &mut u64,
) -> Result<(DensePrediction, BranchTape)> {
    let mut trunk_acts = vec![trunk_out.clone()];
    let mut h = trunk_out.clone();
    for layer in &branch.trunk {
        h = relu(layer.forward(&h));
        *sig = fold_signature(*sig, &h);
        trunk_acts.push(h.clone());
    }
    let concat = mean_concat(&h);
    let hidden = relu(branch.hidden.forward(&concat));
    *sig = fold_signature(*sig, &hidden);
    let raw = branch.output.forward(&hidden);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow { step: None });
    }
    let n = points.len();
    let mut boxes = Array2::zeros((n, 7));
    let mut sizes = Array2::zeros((n, 3));
    let mut objectness = Vec::with_capacity(n);
    let mut logits = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        for k in 0..3 {
            boxes[[i, k]] = p[k] + raw[[i, k]];
            let size = prior[k] * raw[[i, 3 + k]].exp();
            if !size.is_finite() || size <= 0.0 {
                return Err(Error::NumericalOverflow { step: None });
            }
            boxes[[i, 3 + k]] = size;
            sizes[[i, k]] = size;
        }
        boxes[[i, 6]] = wrap_angle(raw[[i, 6]]);
        logits.push(raw[[i, 7]]);
        objectness.push(sigmoid(raw[[i, 7]]));
    }
    Ok((
        DensePrediction {
            boxes,
            objectness,
            logits,
            branch: tag,
        },
        BranchTape {
            trunk_acts,
            concat,
            hidden,
            sizes,
        },
    ))
}

fn shared_forward(params: &ModelParams, points: &[Point3], sig: &mut u64) -> Vec<Array2<f64>> {
    let mut acts = vec![encode_points(points, &params.config.features)];
    for layer in &params.shared {
        let h = relu(layer.forward(acts.last().expect("non-empty")));
        *sig = fold_signature(*sig, &h);
        acts.push(h);
    }
    acts
}

/// Dense predictions of both branches plus the tape for [`backward`].
pub fn forward_dense(
    params: &ModelParams,
    points: &[Point3],
) -> Result<(DensePrediction, DensePrediction, Tape)> {
    if points.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut sig = 0xcbf29ce484222325;
    let shared_acts = shared_forward(params, points, &mut sig);
    let trunk_out = shared_acts.last().expect("non-empty");
    let prior = params.config.size_prior;
    let (p, pt) = run_branch(
        &params.primary,
        trunk_out,
        points,
        &prior,
        BranchTag::Primary,
        &mut sig,
    )?;
    let (a, at) = run_branch(
        &params.auxiliary,
        trunk_out,
        points,
        &prior,
        BranchTag::Auxiliary,
        &mut sig,
    )?;
    Ok((
        p,
        a,
        Tape {
            shapes: params.shapes(),
            shared_acts,
            primary: pt,
            auxiliary: at,
            signature: sig,
        },
    ))
}

/// Primary-branch predictions only; the auxiliary branch is never evaluated.
pub fn forward_primary(params: &ModelParams, points: &[Point3]) -> Result<DensePrediction> {
    if points.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut sig = 0;
    let shared_acts = shared_forward(params, points, &mut sig);
    let trunk_out = shared_acts.last().expect("non-empty");
    let (p, _) = run_branch(
        &params.primary,
        trunk_out,
        points,
        &params.config.size_prior,
        BranchTag::Primary,
        &mut sig,
    )?;
    Ok(p)
}

fn branch_backward(
    branch: &Branch,
    tape: &BranchTape,
    grad: &BranchGrad,
    out: &mut Branch,
) -> Array2<f64> {
    let n = grad.boxes.nrows();
    let mut d_raw = Array2::zeros((n, HEAD_OUTPUTS));
    for i in 0..n {
        for k in 0..3 {
            d_raw[[i, k]] = grad.boxes[[i, k]];
            // d size / d raw = size
            d_raw[[i, 3 + k]] = grad.boxes[[i, 3 + k]] * tape.sizes[[i, k]];
        }
        d_raw[[i, 6]] = grad.boxes[[i, 6]];
        d_raw[[i, 7]] = grad.logits[i];
    }
    let (g_out, d_hidden) = branch.output.backward(&tape.hidden, &d_raw);
    out.output = g_out;
    let d_hidden = relu_backward(&tape.hidden, d_hidden);
    let (g_hidden, d_concat) = branch.hidden.backward(&tape.concat, &d_hidden);
    out.hidden = g_hidden;

    let d = d_concat.ncols() / 2;
    let mut d_h = d_concat.slice(s![.., ..d]).to_owned();
    let d_mean = d_concat.slice(s![.., d..]).sum_axis(Axis(0)) / n as f64;
    d_h += &d_mean;

    for (k, layer) in branch.trunk.iter().enumerate().rev() {
        let act = &tape.trunk_acts[k + 1];
        let dy = relu_backward(act, d_h);
        let (g, dx) = layer.backward(&tape.trunk_acts[k], &dy);
        out.trunk[k] = g;
        d_h = dx;
    }
    d_h
}

/// Exact parameter gradients given the loss gradient with respect to both
/// branches' decoded predictions.
pub fn backward(
    params: &ModelParams,
    tape: &Tape,
    grad_primary: &BranchGrad,
    grad_auxiliary: &BranchGrad,
) -> Result<ModelParams> {
    if tape.shapes != params.shapes() {
        return Err(Error::TapeMismatch(
            "layer shapes differ from the recorded forward".into(),
        ));
    }
    let n = tape.rows();
    for g in [grad_primary, grad_auxiliary] {
        if g.boxes.dim() != (n, 7) || g.logits.len() != n {
            return Err(Error::TapeMismatch(format!(
                "gradient has {} rows, tape has {n}",
                g.boxes.nrows()
            )));
        }
    }
    let mut grads = params.zeros_like();
    let d_p = branch_backward(
        &params.primary,
        &tape.primary,
        grad_primary,
        &mut grads.primary,
    );
    let d_a = branch_backward(
        &params.auxiliary,
        &tape.auxiliary,
        grad_auxiliary,
        &mut grads.auxiliary,
    );
    let mut d_h = d_p + d_a;
    for (k, layer) in params.shared.iter().enumerate().rev() {
        let dy = relu_backward(&tape.shared_acts[k + 1], d_h);
        if k == 0 {
            grads.shared[k] = layer.backward_params(&tape.shared_acts[k], &dy);
            break;
        }
        let (g, dx) = layer.backward(&tape.shared_acts[k], &dy);
        grads.shared[k] = g;
        d_h = dx;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            trunk_widths: vec![8, 16],
            head_hidden: 16,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(&cfg(), 3).unwrap();
        let b = ModelParams::init(&cfg(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ModelParams::init(&cfg(), 4).unwrap());
    }

    #[test]
    fn auxiliary_width_follows_gamma() {
        let full = ModelParams::init(
            &ModelConfig {
                gamma: 1.0,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(
            full.auxiliary.hidden.fan_out(),
            full.primary.hidden.fan_out()
        );
        let half = ModelParams::init(&ModelConfig::default(), 0).unwrap();
        assert_eq!(half.primary.hidden.fan_out(), 128);
        assert_eq!(half.auxiliary.hidden.fan_out(), 64);
        assert_eq!(half.primary.output.fan_out(), HEAD_OUTPUTS);
        assert_eq!(half.auxiliary.output.fan_out(), HEAD_OUTPUTS);
        // Primary weights do not depend on gamma.
        assert_eq!(full.primary, half.primary);
    }

    #[test]
    fn zero_heads_decode_to_prior() {
        let mut params = ModelParams::init(&cfg(), 1).unwrap();
        for b in [&mut params.primary, &mut params.auxiliary] {
            b.output.weight.fill(0.0);
            b.output.bias.fill(0.0);
        }
        let pts = vec![[1.0, 2.0, 0.5], [-3.0, 4.0, 0.1], [10.0, 0.0, 1.2]];
        let (p, a, _) = forward_dense(&params, &pts).unwrap();
        for pred in [p, a] {
            for (i, q) in pts.iter().enumerate() {
                assert_eq!(pred.row(i), [q[0], q[1], q[2], 4.0, 2.0, 1.6, 0.0]);
                assert_eq!(pred.objectness[i], 0.5);
            }
        }
    }

    #[test]
    fn row_counts_and_duplicates() {
        let params = ModelParams::init(&cfg(), 2).unwrap();
        let pts = vec![
            [5.0, 1.0, 0.6],
            [5.0, 1.0, 0.6],
            [6.0, 1.5, 0.9],
            [20.0, -3.0, 0.0],
        ];
        let (p, a, _) = forward_dense(&params, &pts).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(a.len(), 4);
        assert_eq!(p.row(0), p.row(1));
        assert_eq!(a.row(0), a.row(1));
        assert!(p.boxes.column(3).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn primary_forward_matches_dense_forward() {
        let params = ModelParams::init(&cfg(), 5).unwrap();
        let pts = vec![[5.0, 1.0, 0.6], [6.0, 1.5, 0.9], [20.0, -3.0, 0.0]];
        let (p, _, _) = forward_dense(&params, &pts).unwrap();
        assert_eq!(forward_primary(&params, &pts).unwrap(), p);
    }

    #[test]
    fn zero_loss_gradient_is_zero() {
        let params = ModelParams::init(&cfg(), 2).unwrap();
        let pts = vec![[5.0, 1.0, 0.6], [6.0, 1.5, 0.9]];
        let (_, _, tape) = forward_dense(&params, &pts).unwrap();
        let g = backward(&params, &tape, &BranchGrad::zeros(2), &BranchGrad::zeros(2)).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_mismatch_detected() {
        let params = ModelParams::init(&cfg(), 2).unwrap();
        let other = ModelParams::init(
            &ModelConfig {
                gamma: 1.0,
                ..cfg()
            },
            2,
        )
        .unwrap();
        let pts = vec![[5.0, 1.0, 0.6], [6.0, 1.5, 0.9]];
        let (_, _, tape) = forward_dense(&params, &pts).unwrap();
        let z = BranchGrad::zeros(2);
        assert!(matches!(
            backward(&other, &tape, &z, &z),
            Err(Error::TapeMismatch(_))
        ));
        let z3 = BranchGrad::zeros(3);
        assert!(matches!(
            backward(&params, &tape, &z3, &z3),
            Err(Error::TapeMismatch(_))
        ));
    }

    #[test]
    fn flat_round_trip() {
        let params = ModelParams::init(&cfg(), 2).unwrap();
        let flat = params.to_flat();
        let mut z = params.zeros_like();
        z.set_flat(&flat).unwrap();
        assert_eq!(z, params);
        assert_eq!(params.get(17), flat[17]);
    }

    #[test]
    fn empty_input_rejected() {
        let params = ModelParams::init(&cfg(), 2).unwrap();
        assert!(forward_dense(&params, &[]).is_err());
    }
}
