//! Hopfield dynamics: energy, state updates and iterative retrieval.
//!
//! All fields use the `W·x + b` convention, both here and in the training
//! losses. The classical `sgn(W·x − b)` form is the same model with the bias
//! negated, and the matching energy is `−½ xᵀWx − bᵀx`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::pattern::is_permutation;
use crate::{seed, Error, Pattern, PatternKind, Result};

/// Anything that maps a neuron state to the pre-activation field of the next
/// state: an ideal weight matrix, a two-layer net or an emulated crossbar.
pub trait Recurrent: Send + Sync {
    fn dim(&self) -> usize;

    /// Pre-activation field for all neurons.
    fn field(&self, state: &DVector<f64>) -> DVector<f64>;

    /// Field of a single neuron. Implementations override this when one row is
    /// cheaper than the full product.
    fn field_at(&self, state: &DVector<f64>, i: usize) -> f64 {
        self.field(state)[i]
    }

    /// Steepness λ applied inside `tanh` for continuous updates.
    fn steepness(&self) -> f64 {
        1.0
    }

    /// Ising energy, when the operator has one.
    fn energy_of(&self, _state: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// Single-layer Hopfield network.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldNet {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    steepness: f64,
}

impl HopfieldNet {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::InvalidArgument(format!(
                "weight matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if bias.len() != weights.nrows() {
            return Err(Error::DimensionMismatch {
                expected: weights.nrows(),
                found: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            steepness: 1.0,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
            bias: DVector::zeros(n),
            steepness: 1.0,
        }
    }

    pub fn with_steepness(mut self, steepness: f64) -> Result<Self> {
        if !(steepness > 0.0 && steepness.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "steepness must be positive, got {steepness}"
            )));
        }
        self.steepness = steepness;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DMatrix<f64>, &mut DVector<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    /// `−½ Σ W_ij x_i x_j − Σ b_i x_i`.
    pub fn energy(&self, state: &Pattern) -> Result<f64> {
        state.expect_len(self.dim())?;
        Ok(self.energy_raw(state.values()))
    }

    fn energy_raw(&self, x: &DVector<f64>) -> f64 {
        -0.5 * x.dot(&(&self.weights * x)) - self.bias.dot(x)
    }
}

impl Recurrent for HopfieldNet {
    fn dim(&self) -> usize {
        self.bias.len()
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.weights * state + &self.bias
    }

    fn field_at(&self, state: &DVector<f64>, i: usize) -> f64 {
        self.weights.row(i).transpose().dot(state) + self.bias[i]
    }

    fn steepness(&self) -> f64 {
        self.steepness
    }

    fn energy_of(&self, state: &DVector<f64>) -> Option<f64> {
        Some(self.energy_raw(state))
    }
}

/// Encoder/decoder pair run as a recurrent map `x ← act(W₂·tanh(W₁x + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerNet {
    pub(crate) encoder: DMatrix<f64>,
    pub(crate) encoder_bias: DVector<f64>,
    pub(crate) decoder: DMatrix<f64>,
    pub(crate) decoder_bias: DVector<f64>,
}

impl MultilayerNet {
    pub fn new(
        encoder: DMatrix<f64>,
        encoder_bias: DVector<f64>,
        decoder: DMatrix<f64>,
        decoder_bias: DVector<f64>,
    ) -> Result<Self> {
        let (nh, n) = encoder.shape();
        if nh == 0 || n == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        if decoder.shape() != (n, nh) {
            return Err(Error::InvalidArgument(format!(
                "decoder must be {n}x{nh}, got {}x{}",
                decoder.nrows(),
                decoder.ncols()
            )));
        }
        if encoder_bias.len() != nh {
            return Err(Error::DimensionMismatch {
                expected: nh,
                found: encoder_bias.len(),
            });
        }
        if decoder_bias.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: decoder_bias.len(),
            });
        }
        Ok(Self {
            encoder,
            encoder_bias,
            decoder,
            decoder_bias,
        })
    }

    pub fn zeros(n: usize, hidden: usize) -> Self {
        Self {
            encoder: DMatrix::zeros(hidden, n),
            encoder_bias: DVector::zeros(hidden),
            decoder: DMatrix::zeros(n, hidden),
            decoder_bias: DVector::zeros(n),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn encoder(&self) -> &DMatrix<f64> {
        &self.encoder
    }

    pub fn encoder_bias(&self) -> &DVector<f64> {
        &self.encoder_bias
    }

    pub fn decoder(&self) -> &DMatrix<f64> {
        &self.decoder
    }

    pub fn decoder_bias(&self) -> &DVector<f64> {
        &self.decoder_bias
    }

    pub(crate) fn hidden(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.encoder * x + &self.encoder_bias).map(f64::tanh)
    }

    /// `tanh(W₂·tanh(W₁x + b₁) + b₂)`; binary callers take the sign afterwards.
    pub fn forward(&self, input: &Pattern) -> Result<Pattern> {
        input.expect_len(self.input_dim())?;
        let out = self.field(input.values()).map(f64::tanh);
        Ok(Pattern::from_parts(out, PatternKind::Continuous))
    }
}

impl Recurrent for MultilayerNet {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.decoder * self.hidden(state) + &self.decoder_bias
    }
}

pub fn forward_multilayer(net: &MultilayerNet, input: &Pattern) -> Result<Pattern> {
    net.forward(input)
}

pub fn energy(net: &HopfieldNet, state: &Pattern) -> Result<f64> {
    net.energy(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    Synchronous,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `sgn`, where a zero field keeps the neuron's previous state.
    Sign,
    /// `tanh(λ·field)`.
    Tanh,
}

impl Activation {
    pub fn for_kind(kind: PatternKind) -> Self {
        match kind {
            PatternKind::Binary => Activation::Sign,
            PatternKind::Continuous => Activation::Tanh,
        }
    }

    fn output_kind(self) -> PatternKind {
        match self {
            Activation::Sign => PatternKind::Binary,
            Activation::Tanh => PatternKind::Continuous,
        }
    }

    #[inline]
    fn apply(self, field: f64, previous: f64, steepness: f64) -> f64 {
        match self {
            Activation::Sign => {
                if field > 0.0 {
                    1.0
                } else if field < 0.0 {
                    -1.0
                } else {
                    previous
                }
            }
            Activation::Tanh => (steepness * field).tanh(),
        }
    }

    fn check_input(self, state: &Pattern) -> Result<()> {
        // sgn(0) retains the previous value, which must itself be ±1.
        match self {
            Activation::Sign => state.expect_kind(PatternKind::Binary),
            Activation::Tanh => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub mode: UpdateMode,
    pub activation: Activation,
    pub max_iterations: usize,
    pub continuous_tolerance: f64,
    pub seed: u64,
}

impl RetrievalConfig {
    pub fn binary() -> Self {
        Self {
            mode: UpdateMode::Synchronous,
            activation: Activation::Sign,
            max_iterations: 100,
            continuous_tolerance: 1e-4,
            seed: 0,
        }
    }

    pub fn continuous() -> Self {
        Self {
            activation: Activation::Tanh,
            ..Self::binary()
        }
    }

    pub fn for_kind(kind: PatternKind) -> Self {
        match kind {
            PatternKind::Binary => Self::binary(),
            PatternKind::Continuous => Self::continuous(),
        }
    }

    pub fn with_mode(mut self, mode: UpdateMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self::binary()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalTrace {
    /// Input followed by the state after every update; `iterations_used + 1` long.
    pub states: Vec<Pattern>,
    /// Energy of each entry in `states`; empty when the operator has no energy.
    pub energies: Vec<f64>,
    pub converged: bool,
    pub cycle_detected: bool,
    pub iterations_used: usize,
    /// Final read-out. For a detected 2-cycle this is the lower-energy member.
    pub result: Pattern,
}

/// One synchronous update: every neuron reads the old state.
pub fn update_sync<R: Recurrent + ?Sized>(
    net: &R,
    state: &Pattern,
    activation: Activation,
) -> Result<Pattern> {
    state.expect_len(net.dim())?;
    activation.check_input(state)?;
    Ok(sync_step(net, state.values(), activation))
}

fn sync_step<R: Recurrent + ?Sized>(net: &R, x: &DVector<f64>, activation: Activation) -> Pattern {
    let field = net.field(x);
    let lambda = net.steepness();
    let next = DVector::from_iterator(
        x.len(),
        field
            .iter()
            .zip(x.iter())
            .map(|(&h, &prev)| activation.apply(h, prev, lambda)),
    );
    Pattern::from_parts(next, activation.output_kind())
}

/// One asynchronous sweep: neurons update one at a time in `order`, each
/// seeing the values already written by earlier neurons in the sweep.
pub fn update_async_sweep<R: Recurrent + ?Sized>(
    net: &R,
    state: &Pattern,
    order: &[usize],
    activation: Activation,
) -> Result<Pattern> {
    state.expect_len(net.dim())?;
    activation.check_input(state)?;
    if !is_permutation(order, net.dim()) {
        return Err(Error::InvalidPermutation(net.dim()));
    }
    Ok(async_step(net, state.values(), order, activation))
}

fn async_step<R: Recurrent + ?Sized>(
    net: &R,
    x: &DVector<f64>,
    order: &[usize],
    activation: Activation,
) -> Pattern {
    let lambda = net.steepness();
    let mut x = x.clone();
    for &i in order {
        let h = net.field_at(&x, i);
        x[i] = activation.apply(h, x[i], lambda);
    }
    Pattern::from_parts(x, activation.output_kind())
}

/// Tie-break score for a synchronous 2-cycle: the energy when there is one,
/// otherwise the fixed-point residual `‖tanh(field(x)) − x‖²`.
fn settle_score<R: Recurrent + ?Sized>(net: &R, x: &DVector<f64>) -> f64 {
    net.energy_of(x).unwrap_or_else(|| {
        let lambda = net.steepness();
        net.field(x)
            .iter()
            .zip(x.iter())
            .map(|(&h, &v)| ((lambda * h).tanh() - v).powi(2))
            .sum()
    })
}

/// Iterates the configured update until a fixed point, a period-2 cycle
/// (sign activation), a max-norm change below the tolerance (tanh
/// activation) or the iteration cap.
pub fn retrieve<R: Recurrent + ?Sized>(
    net: &R,
    input: &Pattern,
    cfg: &RetrievalConfig,
) -> Result<RetrievalTrace> {
    input.expect_len(net.dim())?;
    cfg.activation.check_input(input)?;
    let n = net.dim();
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut states = vec![input.clone()];
    let mut energies = Vec::new();
    if let Some(e) = net.energy_of(input.values()) {
        energies.push(e);
    }
    let mut converged = false;
    let mut cycle_detected = false;
    let mut result = None;

    for it in 1..=cfg.max_iterations {
        let prev = states.last().unwrap().values();
        let next = match cfg.mode {
            UpdateMode::Synchronous => sync_step(net, prev, cfg.activation),
            UpdateMode::Asynchronous => {
                order.shuffle(&mut rng);
                async_step(net, prev, &order, cfg.activation)
            }
        };
        if let Some(e) = net.energy_of(next.values()) {
            energies.push(e);
        }
        match cfg.activation {
            Activation::Sign => {
                if next.values() == prev {
                    converged = true;
                } else if it >= 2 && next.values() == states[it - 2].values() {
                    cycle_detected = true;
                    let a = settle_score(net, prev);
                    let b = settle_score(net, next.values());
                    result = Some(if b < a { next.clone() } else { states[it - 1].clone() });
                }
            }
            Activation::Tanh => {
                let change = (next.values() - prev).amax();
                converged = change < cfg.continuous_tolerance;
            }
        }
        states.push(next);
        if converged || cycle_detected {
            break;
        }
    }

    let iterations_used = states.len() - 1;
    let result = result.unwrap_or_else(|| states.last().unwrap().clone());
    Ok(RetrievalTrace {
        states,
        energies,
        converged,
        cycle_detected,
        iterations_used,
        result,
    })
}
