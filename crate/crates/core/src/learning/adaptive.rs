//! Gradient-trained fixed-point storage.
//!
//! Both losses average, over patterns, the summed squared error between a
//! stored pattern and the network's smooth response to it:
//!
//! ```text
//! single layer:  L = (1/M) Σ_m ‖ξᵐ − tanh(λ(W ξᵐ + b))‖²
//! two layers:    L = (1/M) Σ_m ‖ξᵐ − tanh(W₂ tanh(W₁ ξᵐ + b₁) + b₂)‖²
//! ```
//!
//! Stuck weights are excluded from the update and held at exactly zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use super::FaultMask;
use crate::{seed, Error, HopfieldNet, MultilayerNet, PatternSet, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub loss_threshold: f64,
    pub optimizer: OptimizerKind,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Half-width of the uniform weight init; `None` means `1/√fan_in`.
    pub init_scale: Option<f64>,
    pub seed: u64,
    /// Pin self-connections of the single-layer net at zero.
    pub zero_diagonal: bool,
    /// Record the loss every this many steps.
    pub history_stride: usize,
    /// λ in the single-layer loss; carried into the trained net.
    #[serde(default = "unit")]
    pub steepness: f64,
}

fn unit() -> f64 {
    1.0
}

impl TrainingConfig {
    pub fn single_layer() -> Self {
        Self {
            learning_rate: 3e-2,
            max_steps: 10_000,
            loss_threshold: 1e-8,
            optimizer: OptimizerKind::PlainGd,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            init_scale: None,
            seed: 0,
            zero_diagonal: true,
            history_stride: 100,
            steepness: 1.0,
        }
    }

    pub fn multilayer() -> Self {
        Self {
            learning_rate: 3e-4,
            max_steps: 60_000,
            optimizer: OptimizerKind::RmsProp,
            ..Self::single_layer()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn optimizer(&self) -> Optimizer {
        Optimizer::new(
            self.optimizer,
            self.learning_rate,
            self.rmsprop_decay,
            self.rmsprop_epsilon,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps_used: usize,
    /// `(step, loss)` samples, subsampled by `history_stride`.
    pub loss_history: Vec<(usize, f64)>,
    pub converged: bool,
}

/// Gradient of the two-layer loss, one entry per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerGrad {
    pub encoder: DMatrix<f64>,
    pub encoder_bias: DVector<f64>,
    pub decoder: DMatrix<f64>,
    pub decoder_bias: DVector<f64>,
}

/// Masks for the encoder (N_h×N) and decoder (N×N_h).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMasks {
    pub encoder: FaultMask,
    pub decoder: FaultMask,
}

struct Batch {
    x: DMatrix<f64>,  // N×M, patterns as columns
    xt: DMatrix<f64>, // M×N
    m: usize,
}

impl Batch {
    fn new(patterns: &PatternSet) -> Self {
        let x = patterns.column_matrix();
        let xt = x.transpose();
        Self {
            m: patterns.len(),
            x,
            xt,
        }
    }
}

fn add_bias_columns(z: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += b;
    }
}

fn row_sums(d: &DMatrix<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(d.nrows());
    for col in d.column_iter() {
        s += col;
    }
    s
}

fn single_eval(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    batch: &Batch,
    want_grad: bool,
) -> (f64, Option<(DMatrix<f64>, DVector<f64>)>) {
    let n = w.nrows();
    if batch.m == 0 {
        let g = want_grad.then(|| (DMatrix::zeros(n, n), DVector::zeros(n)));
        return (0.0, g);
    }
    let inv_m = 1.0 / batch.m as f64;
    let mut z = w * &batch.x;
    add_bias_columns(&mut z, b);
    let t = z.map(|v| (lambda * v).tanh());
    let mut loss = 0.0;
    let mut d = DMatrix::zeros(n, batch.m);
    for ((dv, &tv), &xv) in d.iter_mut().zip(t.iter()).zip(batch.x.iter()) {
        let r = tv - xv;
        loss += r * r;
        *dv = 2.0 * inv_m * lambda * r * (1.0 - tv * tv);
    }
    let grad = want_grad.then(|| (&d * &batch.xt, row_sums(&d)));
    (loss * inv_m, grad)
}

fn check_patterns(n: usize, patterns: &PatternSet) -> Result<()> {
    if patterns.dim() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: n,
            found: patterns.dim(),
        })
    }
}

pub fn adaptive_loss_single(net: &HopfieldNet, patterns: &PatternSet) -> Result<f64> {
    check_patterns(net.dim(), patterns)?;
    Ok(single_eval(net.weights(), net.bias(), net.steepness(), &Batch::new(patterns), false).0)
}

/// Analytic `(∂L/∂W, ∂L/∂b)` of [`adaptive_loss_single`].
pub fn grad_loss_single(
    net: &HopfieldNet,
    patterns: &PatternSet,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_patterns(net.dim(), patterns)?;
    let (_, g) = single_eval(net.weights(), net.bias(), net.steepness(), &Batch::new(patterns), true);
    Ok(g.unwrap())
}

fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut seed::Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        if scale > 0.0 {
            rng.random_range(-scale..=scale)
        } else {
            0.0
        }
    })
}

/// Full-batch training of a single-layer net from a seeded uniform init.
/// Stops once the loss falls below the threshold or after `max_steps`
/// updates; either way the net is returned with a report.
pub fn train_adaptive_single(
    patterns: &PatternSet,
    cfg: &TrainingConfig,
    mask: Option<&FaultMask>,
) -> Result<(HopfieldNet, TrainingReport)> {
    let n = patterns.dim();
    let lambda = cfg.steepness;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("steepness must be positive, got {lambda}")));
    }
    let mut pinned = match mask {
        Some(m) => {
            m.check_shape(n, n)?;
            m.clone()
        }
        None => FaultMask::none(n, n),
    };
    if cfg.zero_diagonal {
        pinned = pinned.with_diagonal();
    }
    let mut rng = seed::rng(cfg.seed);
    let scale = cfg.init_scale.unwrap_or(1.0 / (n as f64).sqrt());
    let mut w = uniform_matrix(n, n, scale, &mut rng);
    pinned.apply(&mut w);
    let mut b = DVector::zeros(n);

    let batch = Batch::new(patterns);
    let mut opt = cfg.optimizer();
    let mut history = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut steps = 0;
    let mut last_loss = loop {
        let (loss, grad) = single_eval(&w, &b, lambda, &batch, steps < cfg.max_steps);
        if steps == 0 {
            initial_loss = loss;
        }
        if steps % cfg.history_stride.max(1) == 0 {
            history.push((steps, loss));
        }
        if loss < cfg.loss_threshold || steps >= cfg.max_steps {
            break loss;
        }
        let (mut gw, gb) = grad.unwrap();
        pinned.apply(&mut gw);
        opt.step(0, w.as_mut_slice(), gw.as_slice());
        opt.step(1, b.as_mut_slice(), gb.as_slice());
        pinned.apply(&mut w);
        debug_assert!(pinned.all_zero_in(&w));
        steps += 1;
    };
    if !last_loss.is_finite() {
        last_loss = f64::INFINITY;
    }
    if history.last().map(|h| h.0) != Some(steps) {
        history.push((steps, last_loss));
    }
    let net = HopfieldNet::new(w, b)?.with_steepness(lambda)?;
    Ok((
        net,
        TrainingReport {
            initial_loss,
            final_loss: last_loss,
            steps_used: steps,
            loss_history: history,
            converged: last_loss < cfg.loss_threshold,
        },
    ))
}

fn multi_eval(
    net: &MultilayerNet,
    batch: &Batch,
    want_grad: bool,
) -> (f64, Option<MultilayerGrad>) {
    let (nh, n) = net.encoder.shape();
    if batch.m == 0 {
        let g = want_grad.then(|| MultilayerGrad {
            encoder: DMatrix::zeros(nh, n),
            encoder_bias: DVector::zeros(nh),
            decoder: DMatrix::zeros(n, nh),
            decoder_bias: DVector::zeros(n),
        });
        return (0.0, g);
    }
    let inv_m = 1.0 / batch.m as f64;
    let mut a1 = &net.encoder * &batch.x;
    add_bias_columns(&mut a1, &net.encoder_bias);
    let h = a1.map(f64::tanh);
    let mut a2 = &net.decoder * &h;
    add_bias_columns(&mut a2, &net.decoder_bias);
    let y = a2.map(f64::tanh);

    let mut loss = 0.0;
    let mut d2 = DMatrix::zeros(n, batch.m);
    for ((dv, &yv), &xv) in d2.iter_mut().zip(y.iter()).zip(batch.x.iter()) {
        let r = yv - xv;
        loss += r * r;
        *dv = 2.0 * inv_m * r * (1.0 - yv * yv);
    }
    let grad = want_grad.then(|| {
        let g_dec = &d2 * h.transpose();
        let g_dec_b = row_sums(&d2);
        let mut d1 = net.decoder.tr_mul(&d2);
        d1.zip_apply(&h, |dv, hv| *dv *= 1.0 - hv * hv);
        let g_enc = &d1 * &batch.xt;
        let g_enc_b = row_sums(&d1);
        MultilayerGrad {
            encoder: g_enc,
            encoder_bias: g_enc_b,
            decoder: g_dec,
            decoder_bias: g_dec_b,
        }
    });
    (loss * inv_m, grad)
}

pub fn adaptive_loss_multilayer(net: &MultilayerNet, patterns: &PatternSet) -> Result<f64> {
    check_patterns(net.input_dim(), patterns)?;
    Ok(multi_eval(net, &Batch::new(patterns), false).0)
}

/// Backpropagated gradient of [`adaptive_loss_multilayer`].
pub fn grad_loss_multilayer(net: &MultilayerNet, patterns: &PatternSet) -> Result<MultilayerGrad> {
    check_patterns(net.input_dim(), patterns)?;
    Ok(multi_eval(net, &Batch::new(patterns), true).1.unwrap())
}

pub fn train_adaptive_multilayer(
    patterns: &PatternSet,
    hidden_dim: usize,
    cfg: &TrainingConfig,
    masks: Option<&LayerMasks>,
) -> Result<(MultilayerNet, TrainingReport)> {
    if hidden_dim == 0 {
        return Err(Error::InvalidArgument("hidden dimension must be >= 1".into()));
    }
    let n = patterns.dim();
    let masks = match masks {
        Some(m) => {
            m.encoder.check_shape(hidden_dim, n)?;
            m.decoder.check_shape(n, hidden_dim)?;
            m.clone()
        }
        None => LayerMasks {
            encoder: FaultMask::none(hidden_dim, n),
            decoder: FaultMask::none(n, hidden_dim),
        },
    };
    let mut rng = seed::rng(cfg.seed);
    let enc_scale = cfg.init_scale.unwrap_or(1.0 / (n as f64).sqrt());
    let dec_scale = cfg.init_scale.unwrap_or(1.0 / (hidden_dim as f64).sqrt());
    let mut net = MultilayerNet::zeros(n, hidden_dim);
    net.encoder = uniform_matrix(hidden_dim, n, enc_scale, &mut rng);
    net.decoder = uniform_matrix(n, hidden_dim, dec_scale, &mut rng);
    masks.encoder.apply(&mut net.encoder);
    masks.decoder.apply(&mut net.decoder);

    let batch = Batch::new(patterns);
    let mut opt = cfg.optimizer();
    let mut history = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut steps = 0;
    let mut last_loss = loop {
        let (loss, grad) = multi_eval(&net, &batch, steps < cfg.max_steps);
        if steps == 0 {
            initial_loss = loss;
        }
        if steps % cfg.history_stride.max(1) == 0 {
            history.push((steps, loss));
        }
        if loss < cfg.loss_threshold || steps >= cfg.max_steps {
            break loss;
        }
        let mut g = grad.unwrap();
        masks.encoder.apply(&mut g.encoder);
        masks.decoder.apply(&mut g.decoder);
        opt.step(0, net.encoder.as_mut_slice(), g.encoder.as_slice());
        opt.step(1, net.encoder_bias.as_mut_slice(), g.encoder_bias.as_slice());
        opt.step(2, net.decoder.as_mut_slice(), g.decoder.as_slice());
        opt.step(3, net.decoder_bias.as_mut_slice(), g.decoder_bias.as_slice());
        masks.encoder.apply(&mut net.encoder);
        masks.decoder.apply(&mut net.decoder);
        debug_assert!(masks.encoder.all_zero_in(&net.encoder) && masks.decoder.all_zero_in(&net.decoder));
        steps += 1;
    };
    if !last_loss.is_finite() {
        last_loss = f64::INFINITY;
    }
    if history.last().map(|h| h.0) != Some(steps) {
        history.push((steps, last_loss));
    }
    Ok((
        net,
        TrainingReport {
            initial_loss,
            final_loss: last_loss,
            steps_used: steps,
            loss_history: history,
            converged: last_loss < cfg.loss_threshold,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{update_sync, Activation};
    use crate::{Pattern, PatternKind};

    fn set(rows: &[&[f64]]) -> PatternSet {
        PatternSet::new(rows.iter().map(|r| Pattern::binary(r.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn zero_net_loss_is_summed_squared_error() {
        let net = HopfieldNet::zeros(2);
        assert_eq!(adaptive_loss_single(&net, &set(&[&[1.0, -1.0]])).unwrap(), 2.0);
        let (gw, gb) = grad_loss_single(&net, &set(&[&[1.0, -1.0]])).unwrap();
        // at W = 0: ∂L/∂W = 2 (0 − ξ) ξᵀ
        assert_eq!(gw[(0, 1)], 2.0);
        assert_eq!(gw[(0, 0)], -2.0);
        assert_eq!(gb[0], -2.0);
    }

    #[test]
    fn loss_is_order_invariant() {
        let s = set(&[&[1.0, -1.0, 1.0], &[-1.0, -1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let w = DMatrix::from_fn(3, 3, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64));
        let net = HopfieldNet::new(w, DVector::from_vec(vec![0.1, 0.0, -0.3])).unwrap();
        let a = adaptive_loss_single(&net, &s).unwrap();
        let b = adaptive_loss_single(&net, &s.reordered(&[2, 0, 1]).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        // continuous targets exactly attainable: ξ = tanh(Wξ) with W = atanh(0.5)/0.5 · I
        let k = 0.5f64.atanh() / 0.5;
        let net = HopfieldNet::new(DMatrix::identity(2, 2) * k, DVector::zeros(2)).unwrap();
        let s = PatternSet::new(vec![Pattern::continuous(vec![0.5, 0.5]).unwrap()]).unwrap();
        assert!(adaptive_loss_single(&net, &s).unwrap() < 1e-28);
        let (gw, gb) = grad_loss_single(&net, &s).unwrap();
        assert!(gw.amax() < 1e-14 && gb.amax() < 1e-14);
    }

    #[test]
    fn masked_gradient_entries_are_zero_after_masking() {
        let s = set(&[&[1.0, -1.0, 1.0, 1.0]]);
        let mask = FaultMask::from_fn(4, 4, |r, c| (r + c) % 3 == 0);
        let (mut gw, _) = grad_loss_single(&HopfieldNet::zeros(4), &s).unwrap();
        mask.apply(&mut gw);
        assert!(mask.all_zero_in(&gw));
    }

    #[test]
    fn two_orthogonal_patterns_become_fixed_points() {
        let s = set(&[&[1.0, 1.0, -1.0, -1.0], &[1.0, -1.0, 1.0, -1.0]]);
        let (net, report) = train_adaptive_single(&s, &TrainingConfig::single_layer(), None).unwrap();
        assert!(report.final_loss < report.initial_loss);
        for p in &s {
            assert_eq!(&update_sync(&net, p, Activation::Sign).unwrap(), p);
        }
        assert!(net.weights().diagonal().iter().all(|&d| d == 0.0));
        assert_eq!(report.converged, report.final_loss < 1e-8);
    }

    #[test]
    fn continuous_targets_converge_below_threshold() {
        let s = PatternSet::new(vec![
            Pattern::continuous(vec![0.5, -0.3, 0.2, -0.6]).unwrap(),
            Pattern::continuous(vec![-0.4, 0.1, 0.7, 0.3]).unwrap(),
        ])
        .unwrap();
        let cfg = TrainingConfig {
            max_steps: 50_000,
            ..TrainingConfig::single_layer()
        };
        let (_, report) = train_adaptive_single(&s, &cfg, None).unwrap();
        assert!(report.converged, "final loss {}", report.final_loss);
        assert!(report.steps_used < cfg.max_steps);
    }

    #[test]
    fn mask_shape_is_checked() {
        let s = set(&[&[1.0, -1.0, 1.0]]);
        let bad = FaultMask::none(2, 2);
        assert!(train_adaptive_single(&s, &TrainingConfig::single_layer(), Some(&bad)).is_err());
        assert!(train_adaptive_multilayer(&s, 0, &TrainingConfig::multilayer(), None).is_err());
    }

    #[test]
    fn training_is_deterministic_and_respects_mask() {
        let s = set(&[&[1.0, -1.0, 1.0, -1.0, 1.0, 1.0], &[-1.0, -1.0, 1.0, 1.0, 1.0, -1.0]]);
        let mask = FaultMask::random(6, 6, 0.3, 11).unwrap();
        let cfg = TrainingConfig {
            max_steps: 500,
            ..TrainingConfig::single_layer().with_seed(3)
        };
        let (a, ra) = train_adaptive_single(&s, &cfg, Some(&mask)).unwrap();
        let (b, rb) = train_adaptive_single(&s, &cfg, Some(&mask)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(mask.all_zero_in(a.weights()));
    }

    #[test]
    fn steepness_is_trained_and_kept() {
        let s = set(&[&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]]);
        let steep = TrainingConfig {
            steepness: 4.0,
            max_steps: 200,
            ..TrainingConfig::single_layer()
        };
        let (net, report) = train_adaptive_single(&s, &steep, None).unwrap();
        assert_eq!(net.steepness(), 4.0);
        assert!((adaptive_loss_single(&net, &s).unwrap() - report.final_loss).abs() < 1e-12);
        let bad = TrainingConfig {
            steepness: 0.0,
            ..steep
        };
        assert!(train_adaptive_single(&s, &bad, None).is_err());
    }

    #[test]
    fn multilayer_stores_small_binary_set() {
        let s = set(&[
            &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0],
            &[-1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            &[1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
        ]);
        let cfg = TrainingConfig {
            learning_rate: 1e-2,
            max_steps: 5_000,
            ..TrainingConfig::multilayer()
        };
        let (net, report) = train_adaptive_multilayer(&s, 4, &cfg, None).unwrap();
        assert!(report.final_loss < report.initial_loss);
        for p in &s {
            let y = net.forward(p).unwrap();
            let signs: Vec<f64> = y.as_slice().iter().map(|v| v.signum()).collect();
            assert_eq!(signs.as_slice(), p.as_slice());
        }
        assert_eq!(s.kind(), PatternKind::Binary);
    }

    #[test]
    fn multilayer_masks_hold_zero() {
        let s = set(&[&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]]);
        let masks = LayerMasks {
            encoder: FaultMask::random(3, 4, 0.5, 1).unwrap(),
            decoder: FaultMask::random(4, 3, 0.5, 2).unwrap(),
        };
        let cfg = TrainingConfig {
            max_steps: 300,
            ..TrainingConfig::multilayer()
        };
        let (net, _) = train_adaptive_multilayer(&s, 3, &cfg, Some(&masks)).unwrap();
        assert!(masks.encoder.all_zero_in(net.encoder()));
        assert!(masks.decoder.all_zero_in(net.decoder()));
    }
}
