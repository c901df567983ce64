//! Shared-weight feedforward network.
//!
//! Each hero's feature vector goes through one shared encoder (a stack of
//! dense ReLU layers stored once). The ten encodings are concatenated in
//! slot order and fed through a dense ReLU head that ends in ten sigmoid
//! outputs, one death probability per slot.
//!
//! Gradients are derived by hand. Training runs in `f32`; gradient checks
//! instantiate the same code at `f64`.

use std::fmt::Debug;
use std::fs;
use std::io::{self, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::dataset::BalancedBatch;
use crate::features::{NormalizationStats, SchemaVariant};
use crate::match_data::{DEFAULT_ROSTER_SIZE, HERO_COUNT};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

const CHECKPOINT_MAGIC: &[u8; 4] = b"DFCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Floating point types the network can run in.
pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Float
    + FromPrimitive
    + ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: SchemaVariant,
    pub roster_size: usize,
    pub per_hero_count: usize,
    pub shared_layers: Vec<usize>,
    pub final_layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub window_seconds: f64,
}

impl ModelConfig {
    /// Tuned architecture and learning rate for each feature set.
    pub fn for_variant(variant: SchemaVariant) -> Self {
        let (lr, shared, finals, n) = match variant {
            SchemaVariant::Minimal => (3.06e-5, vec![200, 100, 60, 20], vec![150, 75], 15),
            SchemaVariant::Medium => (
                7.48e-5,
                vec![256, 128, 64],
                vec![1024, 512, 256, 128, 64, 32],
                109,
            ),
            SchemaVariant::Full => (
                6.15e-5,
                vec![256, 128, 64],
                vec![1024, 512, 256, 128, 64, 32],
                287,
            ),
        };
        ModelConfig {
            variant,
            roster_size: DEFAULT_ROSTER_SIZE,
            per_hero_count: n,
            shared_layers: shared,
            final_layers: finals,
            learning_rate: lr,
            batch_size: 128,
            seed: 0,
            window_seconds: 5.0,
        }
    }

    /// Width of the concatenated encoder output feeding the head.
    pub fn head_input_width(&self) -> usize {
        HERO_COUNT * self.shared_layers.last().copied().unwrap_or(self.per_hero_count)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.per_hero_count == 0 {
            return Err(ModelError::InvalidArchitecture("zero input width".into()));
        }
        if self.shared_layers.is_empty() {
            return Err(ModelError::InvalidArchitecture(
                "at least one shared layer is required".into(),
            ));
        }
        if self.shared_layers.iter().chain(&self.final_layers).any(|&w| w == 0) {
            return Err(ModelError::InvalidArchitecture("zero-width layer".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        let mut fan_in = self.per_hero_count;
        for &w in &self.shared_layers {
            n += fan_in * w + w;
            fan_in = w;
        }
        fan_in = self.head_input_width();
        for &w in self.final_layers.iter().chain(std::iter::once(&HERO_COUNT)) {
            n += fan_in * w + w;
            fan_in = w;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<A> {
    /// `(fan_in, fan_out)`
    pub weights: Array2<A>,
    pub bias: Array1<A>,
}

impl<A: Scalar> Dense<A> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, input: &Array2<A>) -> Array2<A> {
        let mut z = input.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Encoder layers (one copy, applied to every slot) and head layers; the
/// last head layer maps to the ten outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<A> {
    pub shared: Vec<Dense<A>>,
    pub head: Vec<Dense<A>>,
}

impl<A: Scalar> ModelParams<A> {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut shared = Vec::new();
        let mut fan_in = cfg.per_hero_count;
        for &w in &cfg.shared_layers {
            shared.push(Dense::zeros(fan_in, w));
            fan_in = w;
        }
        let mut head = Vec::new();
        fan_in = cfg.head_input_width();
        for &w in cfg.final_layers.iter().chain(std::iter::once(&HERO_COUNT)) {
            head.push(Dense::zeros(fan_in, w));
            fan_in = w;
        }
        Ok(ModelParams { shared, head })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense<A>| Dense::zeros(d.weights.nrows(), d.weights.ncols());
        ModelParams {
            shared: self.shared.iter().map(z).collect(),
            head: self.head.iter().map(z).collect(),
        }
    }

    pub fn per_hero_count(&self) -> usize {
        self.shared[0].weights.nrows()
    }

    pub fn encoding_width(&self) -> usize {
        self.shared.last().map(|d| d.weights.ncols()).unwrap_or(0)
    }

    pub fn head_input_width(&self) -> usize {
        self.head[0].weights.nrows()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense<A>> {
        self.shared.iter().chain(&self.head)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<A>> {
        self.shared.iter_mut().chain(self.head.iter_mut())
    }

    /// Parameter tensors in storage order: per layer, weights (row-major) then bias.
    pub fn slices(&self) -> Vec<&[A]> {
        self.layers()
            .flat_map(|d| {
                [
                    d.weights.as_slice().expect("standard layout"),
                    d.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [A]> {
        self.layers_mut()
            .flat_map(|d| {
                [
                    d.weights.as_slice_mut().expect("standard layout"),
                    d.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shared.len() == other.shared.len()
            && self.head.len() == other.head.len()
            && self
                .layers()
                .zip(other.layers())
                .all(|(a, b)| a.weights.dim() == b.weights.dim())
    }

    pub fn cast<B: Scalar>(&self) -> ModelParams<B> {
        let conv = |d: &Dense<A>| Dense {
            weights: d.weights.mapv(|x| B::of(x.to_f64().unwrap_or(f64::NAN))),
            bias: d.bias.mapv(|x| B::of(x.to_f64().unwrap_or(f64::NAN))),
        };
        ModelParams {
            shared: self.shared.iter().map(conv).collect(),
            head: self.head.iter().map(conv).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Variance-scaled uniform weights, zero biases.
pub fn init_params<A: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<A>, ModelError> {
    let mut params = ModelParams::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in params.layers_mut() {
        let (fan_in, fan_out) = layer.weights.dim();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        layer
            .weights
            .mapv_inplace(|_| A::of(rng.random_range(-bound..bound)));
    }
    Ok(params)
}

/// Layer inputs recorded during [`forward`], as needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<A> {
    /// `shared_inputs[0]` is the `(batch * 10, per_hero)` input; entry `l + 1`
    /// is the ReLU output of shared layer `l`.
    pub shared_inputs: Vec<Array2<A>>,
    /// `head_inputs[0]` is the `(batch, 10 * encoding)` concatenation.
    pub head_inputs: Vec<Array2<A>>,
    /// Pre-sigmoid outputs, `(batch, 10)`.
    pub logits: Array2<A>,
}

fn relu_inplace<A: Scalar>(z: &mut Array2<A>) {
    z.mapv_inplace(|v| if v > A::zero() { v } else { A::zero() });
}

fn sigmoid<A: Scalar>(z: A) -> A {
    if z >= A::zero() {
        A::one() / (A::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (A::one() + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, stable for any `z`.
fn bce_with_logit<A: Scalar>(z: A, y: bool) -> A {
    let y = if y { A::one() } else { A::zero() };
    z.max(A::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

fn check_input<A: Scalar>(p: &ModelParams<A>, x: &ArrayView2<A>) -> Result<(), ModelError> {
    let width = HERO_COUNT * p.per_hero_count();
    if x.ncols() != width {
        return Err(ModelError::ShapeMismatch(format!(
            "input has {} columns, model expects {width}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Runs the shared encoder on individual hero vectors, `(n, per_hero) -> (n, encoding)`.
pub fn encode<A: Scalar>(p: &ModelParams<A>, heroes: ArrayView2<A>) -> Result<Array2<A>, ModelError> {
    if heroes.ncols() != p.per_hero_count() {
        return Err(ModelError::ShapeMismatch(format!(
            "hero vectors have {} columns, encoder expects {}",
            heroes.ncols(),
            p.per_hero_count()
        )));
    }
    let mut a = heroes.to_owned();
    for layer in &p.shared {
        a = layer.apply(&a);
        relu_inplace(&mut a);
    }
    Ok(a)
}

/// Probabilities `(batch, 10)` for inputs `(batch, 10 * per_hero)`.
pub fn forward<A: Scalar>(
    p: &ModelParams<A>,
    x: ArrayView2<A>,
) -> Result<(Array2<A>, ForwardTrace<A>), ModelError> {
    check_input(p, &x)?;
    let batch = x.nrows();
    let per_hero = p.per_hero_count();
    let heroes = x
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((batch * HERO_COUNT, per_hero))
        .expect("row-major reshape");

    let mut shared_inputs = Vec::with_capacity(p.shared.len() + 1);
    shared_inputs.push(heroes);
    for layer in &p.shared {
        let mut z = layer.apply(shared_inputs.last().expect("non-empty"));
        relu_inplace(&mut z);
        shared_inputs.push(z);
    }
    let encoded = shared_inputs.last().expect("non-empty").clone();
    let concat = encoded
        .into_shape_with_order((batch, HERO_COUNT * p.encoding_width()))
        .expect("row-major reshape");

    let mut head_inputs = Vec::with_capacity(p.head.len());
    head_inputs.push(concat);
    let last = p.head.len() - 1;
    let mut logits = None;
    for (i, layer) in p.head.iter().enumerate() {
        let mut z = layer.apply(head_inputs.last().expect("non-empty"));
        if i == last {
            logits = Some(z);
        } else {
            relu_inplace(&mut z);
            head_inputs.push(z);
        }
    }
    let logits = logits.expect("head has an output layer");
    let probs = logits.mapv(sigmoid);
    Ok((
        probs,
        ForwardTrace {
            shared_inputs,
            head_inputs,
            logits,
        },
    ))
}

pub fn predict<A: Scalar>(p: &ModelParams<A>, x: ArrayView2<A>) -> Result<Array2<A>, ModelError> {
    forward(p, x).map(|(probs, _)| probs)
}

fn mask_relu<A: Scalar>(grad: &mut Array2<A>, activation: &Array2<A>) {
    Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= A::zero() {
            *g = A::zero();
        }
    });
}

/// Mean binary cross-entropy on output `slot` only, and its gradient.
///
/// `targets[b]` is the label of `slot` for row `b`. The other nine outputs
/// get no error signal, but the encoder gradient still accumulates through
/// all ten slots since each feeds the head.
pub fn loss_and_grad<A: Scalar>(
    p: &ModelParams<A>,
    x: ArrayView2<A>,
    targets: &[bool],
    slot: usize,
) -> Result<(A, ModelParams<A>), ModelError> {
    if targets.len() != x.nrows() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} targets for {} rows",
            targets.len(),
            x.nrows()
        )));
    }
    if slot >= HERO_COUNT {
        return Err(ModelError::ShapeMismatch(format!("slot {slot} out of range")));
    }
    if targets.is_empty() {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    let (probs, trace) = forward(p, x)?;
    let batch = x.nrows();
    let inv_b = A::one() / A::of(batch as f64);

    let mut loss = A::zero();
    let mut delta = Array2::<A>::zeros((batch, HERO_COUNT));
    for (b, &y) in targets.iter().enumerate() {
        loss += bce_with_logit(trace.logits[[b, slot]], y);
        let y = if y { A::one() } else { A::zero() };
        delta[[b, slot]] = (probs[[b, slot]] - y) * inv_b;
    }
    loss *= inv_b;

    let mut grads = p.zeros_like();
    backward(p, &trace, delta, &mut grads);
    Ok((loss, grads))
}

/// Same as [`loss_and_grad`] for a balanced batch, in the batch's selected slot.
pub fn loss_and_grad_batch<A: Scalar>(
    p: &ModelParams<A>,
    batch: &BalancedBatch<'_>,
) -> Result<(A, ModelParams<A>), ModelError> {
    let x = batch_inputs(batch);
    let targets: Vec<bool> = batch
        .samples
        .iter()
        .map(|s| s.labels[batch.selected_slot])
        .collect();
    loss_and_grad(p, x.view(), &targets, batch.selected_slot)
}

/// Stacks sample features into a `(batch, 10 * per_hero)` matrix.
pub fn batch_inputs<A: Scalar>(batch: &BalancedBatch<'_>) -> Array2<A> {
    stack_features(batch.samples.iter().map(|s| s.features.as_slice()))
}

pub fn stack_features<'a, A: Scalar>(rows: impl ExactSizeIterator<Item = &'a [f32]>) -> Array2<A> {
    let n = rows.len();
    let mut data = Vec::new();
    let mut width = 0;
    for r in rows {
        width = r.len();
        data.extend(r.iter().map(|&v| A::of(v as f64)));
    }
    Array2::from_shape_vec((n, width), data).expect("rows share one width")
}

fn backward<A: Scalar>(
    p: &ModelParams<A>,
    trace: &ForwardTrace<A>,
    mut delta: Array2<A>,
    grads: &mut ModelParams<A>,
) {
    for i in (0..p.head.len()).rev() {
        let input = &trace.head_inputs[i];
        grads.head[i].weights = input.t().dot(&delta);
        grads.head[i].bias = delta.sum_axis(Axis(0));
        let mut upstream = delta.dot(&p.head[i].weights.t());
        // head_inputs[i] is a ReLU output for every i (the concat holds encoder ReLUs)
        mask_relu(&mut upstream, input);
        delta = upstream;
    }

    let batch = delta.nrows();
    let mut delta = delta
        .into_shape_with_order((batch * HERO_COUNT, p.encoding_width()))
        .expect("row-major reshape");
    for l in (0..p.shared.len()).rev() {
        let input = &trace.shared_inputs[l];
        grads.shared[l].weights = input.t().dot(&delta);
        grads.shared[l].bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&p.shared[l].weights.t());
            mask_relu(&mut upstream, input);
            delta = upstream;
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<A> {
    pub first: ModelParams<A>,
    pub second: ModelParams<A>,
    pub step: u64,
}

impl<A: Scalar> AdamState<A> {
    pub fn new(p: &ModelParams<A>) -> Self {
        AdamState {
            first: p.zeros_like(),
            second: p.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `p` in place.
pub fn adam_step<A: Scalar>(
    p: &mut ModelParams<A>,
    state: &mut AdamState<A>,
    grads: &ModelParams<A>,
    lr: f64,
) -> Result<(), ModelError> {
    if !p.same_shape(grads) || !p.same_shape(&state.first) || !p.same_shape(&state.second) {
        return Err(ModelError::ShapeMismatch(
            "gradient or optimizer state does not match parameters".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(ModelError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (A::of(ADAM_BETA1), A::of(ADAM_BETA2));
    let c1 = A::of(1.0 - ADAM_BETA1.powf(t));
    let c2 = A::of(1.0 - ADAM_BETA2.powf(t));
    let eps = A::of(ADAM_EPSILON);
    let lr = A::of(lr);
    let one = A::one();
    for (((w, g), m), v) in p
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.first.slices_mut())
        .zip(state.second.slices_mut())
    {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradientCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    /// Flat index (storage order) of the worst parameter.
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with a floor on the denominator so exact zeros compare cleanly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares [`loss_and_grad`] against central differences at `f64` on a
/// random batch of `batch` rows.
pub fn gradient_check(cfg: &ModelConfig, batch: usize, tolerance: f64, seed: u64) -> Result<GradientCheckReport, ModelError> {
    gradient_check_with(cfg, batch, tolerance, seed, |p, x, y, s| loss_and_grad(p, x, y, s))
}

/// [`gradient_check`] with a caller-supplied analytic gradient routine.
pub fn gradient_check_with<F>(
    cfg: &ModelConfig,
    batch: usize,
    tolerance: f64,
    seed: u64,
    analytic: F,
) -> Result<GradientCheckReport, ModelError>
where
    F: Fn(&ModelParams<f64>, ArrayView2<f64>, &[bool], usize) -> Result<(f64, ModelParams<f64>), ModelError>,
{
    let mut params: ModelParams<f64> = init_params(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // small random biases so no unit sits exactly on a ReLU kink
    for layer in params.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    let width = HERO_COUNT * cfg.per_hero_count;
    let x = Array2::from_shape_fn((batch, width), |_| rng.random::<f64>());
    let targets: Vec<bool> = (0..batch).map(|_| rng.random_bool(0.5)).collect();
    let slot = rng.random_range(0..HERO_COUNT);

    let (_, grads) = analytic(&params, x.view(), &targets, slot)?;
    let analytic_flat: Vec<f64> = grads.slices().concat();

    let h = 1e-5;
    let mut worst = (0.0f64, 0usize);
    let mut flat = 0usize;
    let n_tensors = params.slices().len();
    for t in 0..n_tensors {
        let len = params.slices()[t].len();
        for i in 0..len {
            let orig = params.slices()[t][i];
            params.slices_mut()[t][i] = orig + h;
            let (plus, _) = loss_and_grad(&params, x.view(), &targets, slot)?;
            params.slices_mut()[t][i] = orig - h;
            let (minus, _) = loss_and_grad(&params, x.view(), &targets, slot)?;
            params.slices_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic_flat[flat], numeric);
            if err > worst.0 || err.is_nan() {
                worst = (if err.is_nan() { f64::INFINITY } else { err }, flat);
            }
            flat += 1;
        }
    }
    Ok(GradientCheckReport {
        parameters: flat,
        max_relative_error: worst.0,
        worst_index: worst.1,
        tolerance,
        passed: worst.0 < tolerance,
    })
}

/// Small network used for finite-difference verification.
pub fn gradient_check_config() -> ModelConfig {
    ModelConfig {
        shared_layers: vec![8, 4],
        final_layers: vec![8],
        batch_size: 4,
        ..ModelConfig::for_variant(SchemaVariant::Minimal)
    }
}

/// Everything needed to run inference: weights, architecture and the
/// normalization statistics of the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub stats: NormalizationStats,
    pub step: u64,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, ModelError> {
    let cfg = &ck.config;
    if ck.stats.len() != cfg.per_hero_count || ck.stats.variant != cfg.variant {
        return Err(ModelError::ShapeMismatch(
            "normalization statistics do not match the model input".into(),
        ));
    }
    let expected = ModelParams::<f32>::zeros(cfg)?;
    if !expected.same_shape(&ck.params) {
        return Err(ModelError::ShapeMismatch("parameters do not match the config".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    buf.write_u8(cfg.variant.code())?;
    buf.write_u32::<LittleEndian>(cfg.roster_size as u32)?;
    buf.write_u32::<LittleEndian>(cfg.per_hero_count as u32)?;
    for layers in [&cfg.shared_layers, &cfg.final_layers] {
        buf.write_u32::<LittleEndian>(layers.len() as u32)?;
        for &w in layers {
            buf.write_u32::<LittleEndian>(w as u32)?;
        }
    }
    buf.write_u64::<LittleEndian>(cfg.seed)?;
    buf.write_u64::<LittleEndian>(ck.step)?;
    buf.write_f64::<LittleEndian>(cfg.learning_rate)?;
    buf.write_u32::<LittleEndian>(cfg.batch_size as u32)?;
    buf.write_f64::<LittleEndian>(cfg.window_seconds)?;
    for s in ck.params.slices() {
        for &v in s {
            buf.write_f32::<LittleEndian>(v)?;
        }
    }
    buf.write_u32::<LittleEndian>(ck.stats.len() as u32)?;
    for (&lo, &hi) in ck.stats.min.iter().zip(&ck.stats.max) {
        buf.write_f64::<LittleEndian>(lo)?;
        buf.write_f64::<LittleEndian>(hi)?;
    }
    let checksum = xxh3_64(&buf);
    buf.write_u64::<LittleEndian>(checksum)?;
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    if bytes.len() < 12 {
        return Err(ModelError::Malformed("truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if xxh3_64(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(ModelError::ChecksumMismatch);
    }
    let mut r = body;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Malformed("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch(format!(
            "format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let code = r.read_u8()?;
    let variant = SchemaVariant::from_code(code)
        .ok_or_else(|| ModelError::VersionMismatch(format!("unknown schema variant tag {code}")))?;
    let roster_size = r.read_u32::<LittleEndian>()? as usize;
    let per_hero_count = r.read_u32::<LittleEndian>()? as usize;
    let read_widths = |r: &mut &[u8]| -> Result<Vec<usize>, ModelError> {
        let n = r.read_u32::<LittleEndian>()? as usize;
        if n > 64 {
            return Err(ModelError::Malformed(format!("{n} layers")));
        }
        (0..n)
            .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
            .collect()
    };
    let shared_layers = read_widths(&mut r)?;
    let final_layers = read_widths(&mut r)?;
    let seed = r.read_u64::<LittleEndian>()?;
    let step = r.read_u64::<LittleEndian>()?;
    let learning_rate = r.read_f64::<LittleEndian>()?;
    let batch_size = r.read_u32::<LittleEndian>()? as usize;
    let window_seconds = r.read_f64::<LittleEndian>()?;
    let config = ModelConfig {
        variant,
        roster_size,
        per_hero_count,
        shared_layers,
        final_layers,
        learning_rate,
        batch_size,
        seed,
        window_seconds,
    };
    let mut params = ModelParams::<f32>::zeros(&config)?;
    let needed: usize = params.len() * 4;
    if r.len() < needed {
        return Err(ModelError::Malformed("parameter blob truncated".into()));
    }
    for s in params.slices_mut() {
        r.read_f32_into::<LittleEndian>(s)?;
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n != per_hero_count {
        return Err(ModelError::Malformed(format!(
            "{n} normalization entries for {per_hero_count} features"
        )));
    }
    let mut min = Vec::with_capacity(n);
    let mut max = Vec::with_capacity(n);
    for _ in 0..n {
        min.push(r.read_f64::<LittleEndian>()?);
        max.push(r.read_f64::<LittleEndian>()?);
    }
    if !r.is_empty() {
        return Err(ModelError::Malformed("trailing bytes".into()));
    }
    Ok(Checkpoint {
        config,
        params,
        stats: NormalizationStats { variant, min, max },
        step,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), ModelError> {
    fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint and refuses it unless it was trained on `variant`.
pub fn load_checkpoint_for(
    path: impl AsRef<Path>,
    variant: SchemaVariant,
) -> Result<Checkpoint, ModelError> {
    let ck = load_checkpoint(path)?;
    if ck.config.variant != variant {
        return Err(ModelError::VersionMismatch(format!(
            "checkpoint holds a {} model, expected {variant}",
            ck.config.variant
        )));
    }
    Ok(ck)
}
