//! Dense-network numerics: ELU MLP forward/backward, stabilized softmax
//! cross-entropy, Adam, and weighted parameter combination.
//!
//! All arithmetic is f64. Weight matrices are row-major `(out, in)`; a layer
//! computes `act(W x + b)`. Gradients of the *mean* batch loss are produced
//! everywhere, so learning rates are batch-size independent.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// Activation applied to a layer's affine output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Linear,
}

/// Exponential linear unit. `alpha` scales the negative branch.
#[inline]
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * (x.exp() - 1.0)
    }
}

/// Derivative of `elu` with respect to its input.
#[inline]
pub fn elu_deriv(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(outputs, inputs)` weight matrix.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

/// Parameters of a multilayer perceptron: ordered layers, each with an
/// explicit activation tag. Consecutive layer dimensions must chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradient (or moment) storage shaped like an `MlpParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpParams {
    /// Seeded init: every weight and bias drawn from
    /// U(-1/sqrt(fan_in), +1/sqrt(fan_in)), weights row-major then bias,
    /// layer by layer. The draw order is part of the determinism contract.
    pub fn init<R: Rng>(dims: &[usize], acts: &[Activation], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("mlp needs at least one layer".into()));
        }
        if acts.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "expected {} activation tags, got {}",
                dims.len() - 1,
                acts.len()
            )));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (i, &act) in acts.iter().enumerate() {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::Shape("zero-sized layer".into()));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut w = Array2::zeros((fan_out, fan_in));
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            let mut b = Array1::zeros(fan_out);
            for v in b.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(Layer { w, b, act });
        }
        Ok(MlpParams { layers })
    }

    /// Dimension chain `[in, hidden.., out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.ncols()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Checks the dimension chain and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("mlp with no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].w.nrows(),
                    i + 1,
                    pair[1].w.ncols()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(Error::Shape(format!("layer {i} bias/weight rows mismatch")));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("mlp parameters"));
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect(),
        }
    }
}

impl Grads {
    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * s);
            b.mapv_inplace(|v| v * s);
        }
    }

    /// `self += s * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Grads, s: f64) {
        assert_eq!(self.layers.len(), other.layers.len(), "grad shape mismatch");
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.scaled_add(s, ow);
            b.scaled_add(s, ob);
        }
    }
}

/// One minibatch: inputs `[B, D]` and class labels `[B]`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [u8],
}

impl<'a> Batch<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: &'a [u8]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!(
                "batch has {} input rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Batch { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn affine(x: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut out = x.dot(&layer.w.t());
    out += &layer.b;
    out
}

fn apply_act(pre: &mut Array2<f64>, act: Activation) {
    if act == Activation::Elu {
        pre.mapv_inplace(|v| elu(v, 1.0));
    }
}

/// Logits `[B, C]` for a batch of inputs `[B, D]`.
pub fn forward(params: &MlpParams, x: ArrayView2<f64>) -> Array2<f64> {
    debug_assert_eq!(x.ncols(), params.input_dim(), "input dim mismatch");
    let mut cur = affine(&x, &params.layers[0]);
    apply_act(&mut cur, params.layers[0].act);
    for layer in &params.layers[1..] {
        let mut next = affine(&cur.view(), layer);
        apply_act(&mut next, layer.act);
        cur = next;
    }
    cur
}

/// Forward pass retaining per-layer pre-activations and outputs, for backprop.
pub struct ForwardTrace {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        self.post.last().expect("non-empty trace")
    }
}

pub fn forward_traced(params: &MlpParams, x: ArrayView2<f64>) -> ForwardTrace {
    let n = params.layers.len();
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(n);
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(n);
    for (i, layer) in params.layers.iter().enumerate() {
        let p = if i == 0 {
            affine(&x, layer)
        } else {
            affine(&post[i - 1].view(), layer)
        };
        let mut out = p.clone();
        apply_act(&mut out, layer.act);
        pre.push(p);
        post.push(out);
    }
    ForwardTrace { pre, post }
}

/// Mean cross-entropy of softmax(logits) against integer labels, plus the
/// gradient of that mean with respect to the logits.
///
/// Stabilized with the log-sum-exp trick (row max subtracted), so arbitrarily
/// large logits stay finite. Fails on an empty batch.
pub fn softmax_xent(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    let b = logits.nrows();
    let c = logits.ncols();
    if b == 0 {
        return Err(Error::InvalidArgument("softmax_xent on empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::Shape(format!("{} logit rows, {} labels", b, labels.len())));
    }
    let inv_b = 1.0 / b as f64;
    let mut dlogits = Array2::zeros((b, c));
    let mut total = 0.0;
    for i in 0..b {
        let y = labels[i] as usize;
        if y >= c {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {c} classes"
            )));
        }
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        total += lse - row[y];
        for j in 0..c {
            let p = (row[j] - lse).exp();
            dlogits[(i, j)] = (p - if j == y { 1.0 } else { 0.0 }) * inv_b;
        }
    }
    let loss = total * inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax_xent"));
    }
    Ok((loss, dlogits))
}

/// Backpropagate `dlogits` (gradient w.r.t. the network output) through a
/// traced forward pass. Returns parameter gradients and the gradient with
/// respect to the network input (used to chain through a representation).
pub fn backward(
    params: &MlpParams,
    x: ArrayView2<f64>,
    trace: &ForwardTrace,
    dlogits: &Array2<f64>,
) -> (Grads, Array2<f64>) {
    let n = params.layers.len();
    debug_assert_eq!(trace.pre.len(), n);
    let mut grads = params.zero_grads();
    let mut upstream = dlogits.clone();
    for i in (0..n).rev() {
        let layer = &params.layers[i];
        // d(pre) = upstream ⊙ act'(pre)
        if layer.act == Activation::Elu {
            ndarray::Zip::from(&mut upstream)
                .and(&trace.pre[i])
                .for_each(|u, &p| *u *= elu_deriv(p, 1.0));
        }
        let input = if i == 0 { x.view() } else { trace.post[i - 1].view() };
        grads.layers[i].0 = upstream.t().dot(&input);
        grads.layers[i].1 = upstream.sum_axis(ndarray::Axis(0));
        upstream = upstream.dot(&layer.w);
    }
    (grads, upstream)
}

/// Mean cross-entropy loss of `params` on `batch` and its parameter gradients.
pub fn loss_and_grads(params: &MlpParams, batch: Batch<'_>) -> Result<(f64, Grads)> {
    let trace = forward_traced(params, batch.x);
    let (loss, dlogits) = softmax_xent(trace.logits(), batch.y)?;
    let (grads, _) = backward(params, batch.x, &trace, &dlogits);
    Ok((loss, grads))
}

/// Adam hyper-parameters. Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHp {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHp {
    pub fn with_lr(lr: f64) -> Self {
        AdamHp { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Grads,
    pub v: Grads,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        AdamState { m: params.zero_grads(), v: params.zero_grads(), t: 0 }
    }
}

/// One Adam update with per-step bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  t <- t+1
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
pub fn adam_step(params: &mut MlpParams, grads: &Grads, state: &mut AdamState, hp: &AdamHp) {
    assert_eq!(params.layers.len(), grads.layers.len(), "grad shape mismatch");
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[i];
        let (mw, mb) = &mut state.m.layers[i];
        let (vw, vb) = &mut state.v.layers[i];
        ndarray::Zip::from(&mut layer.w).and(gw).and(mw).and(vw).for_each(|p, &g, m, v| {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            *p -= hp.lr * (*m / bc1) / ((*v / bc2).sqrt() + hp.eps);
        });
        ndarray::Zip::from(&mut layer.b).and(gb).and(mb).and(vb).for_each(|p, &g, m, v| {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            *p -= hp.lr * (*m / bc1) / ((*v / bc2).sqrt() + hp.eps);
        });
    }
}

/// Plain gradient-descent update: `p -= lr * g`.
pub fn sgd_step(params: &mut MlpParams, grads: &Grads, lr: f64) {
    assert_eq!(params.layers.len(), grads.layers.len(), "grad shape mismatch");
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[i];
        layer.w.scaled_add(-lr, gw);
        layer.b.scaled_add(-lr, gb);
    }
}

/// Weighted sum of parameter sets: `sum_i w_i * p_i`. All terms must share
/// shapes and activation tags. Used for FedSGD/FedAVG model averaging.
pub fn params_linear_combine(terms: &[(f64, &MlpParams)]) -> Result<MlpParams> {
    let (w0, first) = terms
        .first()
        .ok_or_else(|| Error::InvalidArgument("params_linear_combine on empty term list".into()))?;
    let mut out = (*first).clone();
    for layer in &mut out.layers {
        layer.w.mapv_inplace(|v| v * w0);
        layer.b.mapv_inplace(|v| v * w0);
    }
    for (wt, p) in &terms[1..] {
        if p.layers.len() != out.layers.len() {
            return Err(Error::Shape("combine: differing layer counts".into()));
        }
        for (acc, l) in out.layers.iter_mut().zip(&p.layers) {
            if acc.w.raw_dim() != l.w.raw_dim() || acc.act != l.act {
                return Err(Error::Shape("combine: layer shape or activation mismatch".into()));
            }
            acc.w.scaled_add(*wt, &l.w);
            acc.b.scaled_add(*wt, &l.b);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn tiny_net() -> MlpParams {
        MlpParams {
            layers: vec![
                Layer {
                    w: array![[0.1, -0.2], [0.3, 0.4]],
                    b: array![0.05, -0.05],
                    act: Activation::Elu,
                },
                Layer {
                    w: array![[0.2, -0.1], [-0.3, 0.5]],
                    b: array![0.0, 0.1],
                    act: Activation::Linear,
                },
            ],
        }
    }

    #[test]
    fn elu_spot_values() {
        assert_eq!(elu(0.0, 1.0), 0.0);
        assert_eq!(elu(2.5, 1.0), 2.5);
        assert_eq!(elu(-1.0, 1.0), (-1.0f64).exp() - 1.0);
        assert_eq!(elu(-1.0, 0.5), 0.5 * ((-1.0f64).exp() - 1.0));
        assert_eq!(elu_deriv(3.0, 1.0), 1.0);
        assert_eq!(elu_deriv(-2.0, 1.0), (-2.0f64).exp());
    }

    #[test]
    fn forward_matches_hand_computed_two_two_two() {
        // Hand-worked on paper: h_pre = [0.35, -0.15], ELU keeps 0.35 and
        // maps -0.15 to exp(-0.15)-1, then the linear head mixes them.
        let net = tiny_net();
        let x = array![[1.0, -1.0]];
        let logits = forward(&net, x.view());
        assert!((logits[(0, 0)] - 0.08392920235749422).abs() < 1e-12);
        assert!((logits[(0, 1)] - -0.0746460117874711).abs() < 1e-12);
    }

    #[test]
    fn softmax_xent_matches_hand_computed_values() {
        let logits = array![[2.0, 0.5], [-1.0, 3.0]];
        let (loss, grad) = softmax_xent(&logits, &[0, 1]).unwrap();
        assert!((loss - 0.10978160295028117).abs() < 1e-12);
        let expect = array![
            [-0.09121276190317817, 0.09121276190317817],
            [0.008993104981045781, -0.00899310498104583]
        ];
        for (a, e) in grad.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
        // gradient rows sum to zero (softmax simplex tangent)
        for row in grad.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_xent_is_stable_for_huge_logits() {
        let logits = array![[1.0e4, 0.0], [-1.0e4, 1.0e4]];
        let (loss, grad) = softmax_xent(&logits, &[0, 1]).unwrap();
        assert!(loss.is_finite());
        assert!(grad.iter().all(|v| v.is_finite()));
        assert!(loss.abs() < 1e-9, "both rows are effectively certain and correct");
    }

    #[test]
    fn softmax_xent_rejects_empty_and_bad_labels() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(softmax_xent(&empty, &[]).is_err());
        let logits = array![[0.0, 0.0]];
        assert!(softmax_xent(&logits, &[2]).is_err());
        assert!(softmax_xent(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn adam_matches_hand_iterated_recurrence() {
        // Single parameter, constant gradient 0.5, lr 0.1. With constant
        // gradients the bias-corrected m̂/√v̂ is exactly 0.5/0.5 each step.
        let mut p = MlpParams {
            layers: vec![Layer { w: array![[1.0]], b: array![0.0], act: Activation::Linear }],
        };
        let g = Grads { layers: vec![(array![[0.5]], array![0.0])] };
        let mut st = AdamState::new(&p);
        let hp = AdamHp { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let expect = [0.9000000019999999, 0.8000000040000005, 0.7000000060000005];
        for e in expect {
            adam_step(&mut p, &g, &mut st, &hp);
            assert!((p.layers[0].w[(0, 0)] - e).abs() < 1e-10, "{} vs {e}", p.layers[0].w[(0, 0)]);
        }
        assert_eq!(st.t, 3);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut p =
            MlpParams::init(&[4, 3, 2], &[Activation::Elu, Activation::Linear], &mut rng).unwrap();
        let before = p.clone();
        let g = p.zero_grads();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamHp::with_lr(0.1));
        assert_eq!(p, before);
    }

    #[test]
    fn combine_two_params_with_fedavg_weights() {
        let a = MlpParams {
            layers: vec![Layer { w: array![[4.0]], b: array![8.0], act: Activation::Linear }],
        };
        let b = MlpParams {
            layers: vec![Layer { w: array![[0.0]], b: array![4.0], act: Activation::Linear }],
        };
        // sizes 1000 and 3000 -> weights 0.25 / 0.75
        let avg = params_linear_combine(&[(0.25, &a), (0.75, &b)]).unwrap();
        assert_eq!(avg.layers[0].w[(0, 0)], 1.0);
        assert_eq!(avg.layers[0].b[0], 5.0);
    }

    #[test]
    fn combine_rejects_empty_and_mismatched() {
        assert!(params_linear_combine(&[]).is_err());
        let a = MlpParams {
            layers: vec![Layer { w: array![[1.0]], b: array![0.0], act: Activation::Linear }],
        };
        let b = MlpParams {
            layers: vec![Layer { w: array![[1.0, 2.0]], b: array![0.0], act: Activation::Linear }],
        };
        assert!(params_linear_combine(&[(0.5, &a), (0.5, &b)]).is_err());
    }

    #[test]
    fn init_respects_fan_in_bounds_and_seed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p =
            MlpParams::init(&[100, 50, 10], &[Activation::Elu, Activation::Linear], &mut rng)
                .unwrap();
        let b0 = 1.0 / (100f64).sqrt();
        assert!(p.layers[0].w.iter().all(|v| v.abs() <= b0));
        assert!(p.layers[0].b.iter().all(|v| v.abs() <= b0));
        let b1 = 1.0 / (50f64).sqrt();
        assert!(p.layers[1].w.iter().all(|v| v.abs() <= b1));
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let q =
            MlpParams::init(&[100, 50, 10], &[Activation::Elu, Activation::Linear], &mut rng2)
                .unwrap();
        assert_eq!(p, q);
        assert_eq!(p.param_count(), 100 * 50 + 50 + 50 * 10 + 10);
    }

    /// Central-difference gradient check over every parameter class: both
    /// layers' weights and biases, with inputs that exercise the negative
    /// ELU branch. Tolerance: |analytic - numeric| <= 1e-6 + 1e-3 * scale.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let dims = [7, 6, 5, 3];
        let acts = [Activation::Elu, Activation::Elu, Activation::Linear];
        let params = MlpParams::init(&dims, &acts, &mut rng).unwrap();
        let b = 9;
        let mut x = Array2::zeros((b, dims[0]));
        for v in x.iter_mut() {
            // inputs in [-2, 2): plenty of negative pre-activations
            *v = rng.gen_range(-2.0..2.0);
        }
        let y: Vec<u8> = (0..b).map(|i| (i % 3) as u8).collect();

        let loss_of = |p: &MlpParams| {
            let logits = forward(p, x.view());
            softmax_xent(&logits, &y).unwrap().0
        };
        let trace = forward_traced(&params, x.view());
        let (_, dlogits) = softmax_xent(trace.logits(), &y).unwrap();
        let (grads, _) = backward(&params, x.view(), &trace, &dlogits);

        let h = 1e-5;
        let mut probes = 0;
        let mut check = |li: usize, widx: Option<(usize, usize)>, bidx: Option<usize>| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let analytic = match (widx, bidx) {
                (Some((r, c)), None) => {
                    plus.layers[li].w[(r, c)] += h;
                    minus.layers[li].w[(r, c)] -= h;
                    grads.layers[li].0[(r, c)]
                }
                (None, Some(j)) => {
                    plus.layers[li].b[j] += h;
                    minus.layers[li].b[j] -= h;
                    grads.layers[li].1[j]
                }
                _ => unreachable!(),
            };
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let tol = 1e-6 + 1e-3 * analytic.abs().max(numeric.abs());
            assert!(
                (analytic - numeric).abs() <= tol,
                "layer {li} w={widx:?} b={bidx:?}: analytic {analytic} numeric {numeric}"
            );
            probes += 1;
        };
        for li in 0..3 {
            let (rows, cols) = (params.layers[li].w.nrows(), params.layers[li].w.ncols());
            for r in 0..rows {
                for c in 0..cols {
                    check(li, Some((r, c)), None);
                }
            }
            for j in 0..params.layers[li].b.len() {
                check(li, None, Some(j));
            }
        }
        assert!(probes >= 100, "only {probes} probes");
    }

    #[test]
    fn backward_input_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params =
            MlpParams::init(&[4, 5, 2], &[Activation::Elu, Activation::Linear], &mut rng).unwrap();
        let mut x = Array2::zeros((3, 4));
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
        let y = [0u8, 1, 0];
        let trace = forward_traced(&params, x.view());
        let (_, dlogits) = softmax_xent(trace.logits(), &y).unwrap();
        let (_, dx) = backward(&params, x.view(), &trace, &dlogits);
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, j)] += h;
                xm[(i, j)] -= h;
                let lp = softmax_xent(&forward(&params, xp.view()), &y).unwrap().0;
                let lm = softmax_xent(&forward(&params, xm.view()), &y).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = dx[(i, j)];
                let tol = 1e-6 + 1e-3 * analytic.abs().max(numeric.abs());
                assert!((analytic - numeric).abs() <= tol);
            }
        }
    }

    #[test]
    fn validate_catches_broken_chains_and_nonfinite() {
        let mut p = tiny_net();
        assert!(p.validate().is_ok());
        p.layers[1].w = Array2::zeros((2, 3));
        assert!(p.validate().is_err());
        let mut q = tiny_net();
        q.layers[0].w[(0, 0)] = f64::NAN;
        assert!(q.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn forward_shape_is_batch_by_classes(b in 1usize..6, seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = MlpParams::init(&[3, 4, 2], &[Activation::Elu, Activation::Linear], &mut rng).unwrap();
            let x = Array2::from_shape_fn((b, 3), |_| rng.gen_range(-1.0..1.0));
            let logits = forward(&p, x.view());
            prop_assert_eq!(logits.dim(), (b, 2));
            prop_assert!(logits.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn combine_identity_is_bitwise(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = MlpParams::init(&[3, 3, 2], &[Activation::Elu, Activation::Linear], &mut rng).unwrap();
            let same = params_linear_combine(&[(1.0, &p)]).unwrap();
            prop_assert_eq!(same, p);
        }

        #[test]
        fn equal_weight_self_average_is_identity_to_eps(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = MlpParams::init(&[3, 3, 2], &[Activation::Elu, Activation::Linear], &mut rng).unwrap();
            let avg = params_linear_combine(&[(0.5, &p), (0.5, &p)]).unwrap();
            for (la, lb) in avg.layers.iter().zip(&p.layers) {
                for (a, b) in la.w.iter().zip(lb.w.iter()) {
                    prop_assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }
}
