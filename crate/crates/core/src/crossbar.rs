//! Emulated 1T1M memristor crossbar.
//!
//! Each weight is stored as a differential pair `w ∝ G⁺ − G⁻` with one device
//! of the pair left at zero. Conductances are in µS, voltages in V and
//! currents in µA.

use std::io::Write;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::learning::{FaultMask, TrainedNet};
use crate::{seed, Error, HopfieldNet, MultilayerNet, Pattern, Recurrent, Result};

/// Side length of one physical array.
pub const TILE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossbarConfig {
    pub g_min: f64,
    pub g_max: f64,
    pub write_tolerance: f64,
    pub read_voltage: f64,
    pub program_error_mean: f64,
    pub program_error_std: f64,
    pub stuck_fraction: f64,
    /// Std of additive output-current noise (µA) per tile row; 0 disables it.
    pub read_noise_std: f64,
    pub seed: u64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self {
            g_min: 0.0,
            g_max: 150.0,
            write_tolerance: 5.0,
            read_voltage: 0.2,
            program_error_mean: 0.108,
            program_error_std: 3.894,
            stuck_fraction: 0.0,
            read_noise_std: 0.0,
            seed: 0,
        }
    }
}

impl CrossbarConfig {
    /// Exact programming: no write error.
    pub fn ideal() -> Self {
        Self {
            program_error_mean: 0.0,
            program_error_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.g_min >= 0.0 && self.g_min <= self.g_max && self.g_max.is_finite()) {
            return bad(format!("need 0 <= g_min <= g_max, got {} and {}", self.g_min, self.g_max));
        }
        if !(self.write_tolerance > 0.0) {
            return bad("write_tolerance must be positive".into());
        }
        if !(self.program_error_std >= 0.0) || !(self.read_noise_std >= 0.0) {
            return bad("noise standard deviations must be non-negative".into());
        }
        if !(self.read_voltage > 0.0) {
            return bad("read_voltage must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.stuck_fraction) {
            return bad(format!("stuck_fraction must be in [0, 1], got {}", self.stuck_fraction));
        }
        Ok(())
    }
}

/// Conductance state of one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarPair {
    g_plus: DMatrix<f64>,
    g_minus: DMatrix<f64>,
    stuck: FaultMask,
    /// The weights this pair was mapped from.
    mapped: DMatrix<f64>,
    scale: f64,
    g_min: f64,
    g_max: f64,
}

impl CrossbarPair {
    /// Maps `w` onto conductances with `scale = g_max / max|w|`.
    pub fn map_weights(w: &DMatrix<f64>, cfg: &CrossbarConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteWeight {
                row: i % w.nrows(),
                col: i / w.nrows(),
            });
        }
        let max = w.amax();
        let scale = if max > 0.0 { cfg.g_max / max } else { 1.0 };
        Ok(Self {
            g_plus: w.map(|v| target_plus(v, scale, cfg.g_max)),
            g_minus: w.map(|v| target_plus(-v, scale, cfg.g_max)),
            stuck: FaultMask::none(w.nrows(), w.ncols()),
            mapped: w.clone(),
            scale,
            g_min: cfg.g_min,
            g_max: cfg.g_max,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.g_plus.shape()
    }

    pub fn g_plus(&self) -> &DMatrix<f64> {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &DMatrix<f64> {
        &self.g_minus
    }

    pub fn stuck_mask(&self) -> &FaultMask {
        &self.stuck
    }

    /// Weight units per µS of differential conductance is `1/scale`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Adds one Gaussian write error per programmed device, clamped to the
    /// conductance range. Unprogrammed (zero-target) and stuck devices stay
    /// at zero.
    pub fn program(&self, cfg: &CrossbarConfig) -> Result<Self> {
        cfg.validate()?;
        let mut out = self.clone();
        if cfg.program_error_std == 0.0 && cfg.program_error_mean == 0.0 {
            return Ok(out);
        }
        let normal = Normal::new(cfg.program_error_mean, cfg.program_error_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = seed::rng(cfg.seed);
        let (rows, cols) = self.shape();
        for r in 0..rows {
            for c in 0..cols {
                if self.stuck.is_stuck(r, c) {
                    continue;
                }
                for g in [&mut out.g_plus, &mut out.g_minus] {
                    let target = g[(r, c)];
                    if target != 0.0 {
                        g[(r, c)] = (target + normal.sample(&mut rng)).clamp(cfg.g_min, cfg.g_max);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Sticks `⌊fraction·R·C⌋` random weights at zero.
    pub fn inject_faults(&self, fraction: f64, seed: u64) -> Result<(Self, FaultMask)> {
        let (rows, cols) = self.shape();
        let mask = FaultMask::random(rows, cols, fraction, seed)?;
        Ok((self.apply_mask(&mask)?, mask))
    }

    /// Sticks the given locations at zero, on top of any already stuck.
    pub fn apply_mask(&self, mask: &FaultMask) -> Result<Self> {
        let (rows, cols) = self.shape();
        mask.check_shape(rows, cols)?;
        let mut out = self.clone();
        out.stuck = self.stuck.union(mask)?;
        out.stuck.apply(&mut out.g_plus);
        out.stuck.apply(&mut out.g_minus);
        Ok(out)
    }

    /// Row currents in µA for inputs encoded as voltages `V_read·x`, summed
    /// over 64×64 tiles.
    pub fn mvm_currents(&self, x: &DVector<f64>, cfg: &CrossbarConfig) -> Result<DVector<f64>> {
        self.mvm_tiled(x, cfg.read_voltage, None)
    }

    /// Analog product rescaled back to weight units.
    pub fn mvm(&self, x: &Pattern, cfg: &CrossbarConfig) -> Result<DVector<f64>> {
        self.mvm_vec(x.values(), cfg)
    }

    pub fn mvm_vec(&self, x: &DVector<f64>, cfg: &CrossbarConfig) -> Result<DVector<f64>> {
        let i = self.mvm_tiled(x, cfg.read_voltage, None)?;
        Ok(i / (self.scale * cfg.read_voltage))
    }

    /// As [`CrossbarPair::mvm_vec`] with additive read noise on every tile's
    /// row currents.
    pub fn mvm_noisy(
        &self,
        x: &DVector<f64>,
        cfg: &CrossbarConfig,
        rng: &mut seed::Rng,
    ) -> Result<DVector<f64>> {
        let noise = Normal::new(0.0, cfg.read_noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let i = self.mvm_tiled(x, cfg.read_voltage, Some((&noise, rng)))?;
        Ok(i / (self.scale * cfg.read_voltage))
    }

    fn mvm_tiled(
        &self,
        x: &DVector<f64>,
        v_read: f64,
        mut noise: Option<(&Normal<f64>, &mut seed::Rng)>,
    ) -> Result<DVector<f64>> {
        let (rows, cols) = self.shape();
        if x.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: x.len(),
            });
        }
        let v = x * v_read;
        let mut out = DVector::zeros(rows);
        for r0 in (0..rows).step_by(TILE) {
            let nr = TILE.min(rows - r0);
            for c0 in (0..cols).step_by(TILE) {
                let nc = TILE.min(cols - c0);
                let gp = self.g_plus.view((r0, c0), (nr, nc));
                let gm = self.g_minus.view((r0, c0), (nr, nc));
                let vin = v.rows(c0, nc);
                let mut part = gp * vin - gm * vin;
                if let Some((dist, rng)) = noise.as_mut() {
                    for p in part.iter_mut() {
                        *p += dist.sample(*rng);
                    }
                }
                out.rows_mut(r0, nr).add_assign(&part);
            }
        }
        Ok(out)
    }

    /// The weight matrix the hardware realises, `(G⁺ − G⁻)/scale`. A pair
    /// whose devices still sit exactly on their mapped targets reads back the
    /// mapped weight bit for bit.
    pub fn read_weights(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.g_plus.nrows(), self.g_plus.ncols(), |r, c| {
            if self.stuck.is_stuck(r, c) {
                return 0.0;
            }
            let (gp, gm) = (self.g_plus[(r, c)], self.g_minus[(r, c)]);
            let w = self.mapped[(r, c)];
            if gp == target_plus(w, self.scale, self.g_max) && gm == target_plus(-w, self.scale, self.g_max) {
                w
            } else {
                (gp - gm) / self.scale
            }
        })
    }

    pub fn in_bounds(&self) -> bool {
        let ok = |g: &DMatrix<f64>| g.iter().all(|&v| v == 0.0 || (v >= self.g_min && v <= self.g_max));
        ok(&self.g_plus) && ok(&self.g_minus)
    }

    /// CSV snapshot: `row,col,g_plus_uS,g_minus_uS,stuck`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "col", "g_plus_uS", "g_minus_uS", "stuck"])?;
        let (rows, cols) = self.shape();
        for r in 0..rows {
            for c in 0..cols {
                w.write_record([
                    r.to_string(),
                    c.to_string(),
                    self.g_plus[(r, c)].to_string(),
                    self.g_minus[(r, c)].to_string(),
                    u8::from(self.stuck.is_stuck(r, c)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn target_plus(w: f64, scale: f64, g_max: f64) -> f64 {
    if w > 0.0 {
        (scale * w).min(g_max)
    } else {
        0.0
    }
}

fn build_pair(
    w: &DMatrix<f64>,
    mask: Option<&FaultMask>,
    cfg: &CrossbarConfig,
    key: &str,
) -> Result<CrossbarPair> {
    let mut pair = CrossbarPair::map_weights(w, cfg)?;
    if let Some(m) = mask {
        pair = pair.apply_mask(m)?;
    }
    let prog = CrossbarConfig {
        seed: seed::derive(cfg.seed, key),
        ..cfg.clone()
    };
    pair.program(&prog)
}

/// Single-layer net whose weight product runs on a crossbar; bias is digital.
#[derive(Debug, Clone)]
pub struct EmulatedHopfield {
    pub pair: CrossbarPair,
    bias: DVector<f64>,
    steepness: f64,
    cfg: CrossbarConfig,
}

impl EmulatedHopfield {
    pub fn new(net: &HopfieldNet, mask: Option<&FaultMask>, cfg: &CrossbarConfig) -> Result<Self> {
        Ok(Self {
            pair: build_pair(net.weights(), mask, cfg, "program/weights")?,
            bias: net.bias().clone(),
            steepness: net.steepness(),
            cfg: cfg.clone(),
        })
    }

    /// The ideal net with the programmed weights read back.
    pub fn realised(&self) -> HopfieldNet {
        HopfieldNet::new(self.pair.read_weights(), self.bias.clone())
            .and_then(|n| n.with_steepness(self.steepness))
            .expect("shape preserved")
    }
}

impl Recurrent for EmulatedHopfield {
    fn dim(&self) -> usize {
        self.bias.len()
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        self.pair.mvm_vec(state, &self.cfg).expect("state length checked by caller") + &self.bias
    }

    fn steepness(&self) -> f64 {
        self.steepness
    }

    fn energy_of(&self, state: &DVector<f64>) -> Option<f64> {
        let h = self.pair.mvm_vec(state, &self.cfg).ok()?;
        Some(-0.5 * state.dot(&h) - self.bias.dot(state))
    }
}

/// Two-layer net with both weight matrices on crossbars.
#[derive(Debug, Clone)]
pub struct EmulatedMultilayer {
    pub encoder: CrossbarPair,
    pub decoder: CrossbarPair,
    encoder_bias: DVector<f64>,
    decoder_bias: DVector<f64>,
    cfg: CrossbarConfig,
}

impl EmulatedMultilayer {
    pub fn new(
        net: &MultilayerNet,
        masks: Option<(&FaultMask, &FaultMask)>,
        cfg: &CrossbarConfig,
    ) -> Result<Self> {
        Ok(Self {
            encoder: build_pair(net.encoder(), masks.map(|m| m.0), cfg, "program/encoder")?,
            decoder: build_pair(net.decoder(), masks.map(|m| m.1), cfg, "program/decoder")?,
            encoder_bias: net.encoder_bias().clone(),
            decoder_bias: net.decoder_bias().clone(),
            cfg: cfg.clone(),
        })
    }
}

impl Recurrent for EmulatedMultilayer {
    fn dim(&self) -> usize {
        self.decoder_bias.len()
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        let a1 = self.encoder.mvm_vec(state, &self.cfg).expect("state length checked by caller")
            + &self.encoder_bias;
        let h = a1.map(f64::tanh);
        self.decoder.mvm_vec(&h, &self.cfg).expect("hidden length fixed") + &self.decoder_bias
    }
}

#[derive(Debug, Clone)]
pub enum EmulatedNet {
    Single(EmulatedHopfield),
    Multi(EmulatedMultilayer),
}

impl EmulatedNet {
    /// Programs a trained net onto crossbars, sticking the training masks.
    pub fn program(net: &TrainedNet, masks: &[FaultMask], cfg: &CrossbarConfig) -> Result<Self> {
        match net {
            TrainedNet::Single(n) => Ok(Self::Single(EmulatedHopfield::new(n, masks.first(), cfg)?)),
            TrainedNet::Multi(n) => {
                let m = match masks {
                    [a, b, ..] => Some((a, b)),
                    _ => None,
                };
                Ok(Self::Multi(EmulatedMultilayer::new(n, m, cfg)?))
            }
        }
    }

    pub fn pairs(&self) -> Vec<&CrossbarPair> {
        match self {
            Self::Single(e) => vec![&e.pair],
            Self::Multi(e) => vec![&e.encoder, &e.decoder],
        }
    }
}

impl Recurrent for EmulatedNet {
    fn dim(&self) -> usize {
        match self {
            Self::Single(e) => e.dim(),
            Self::Multi(e) => e.dim(),
        }
    }

    fn field(&self, state: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Single(e) => e.field(state),
            Self::Multi(e) => e.field(state),
        }
    }

    fn steepness(&self) -> f64 {
        match self {
            Self::Single(e) => e.steepness(),
            Self::Multi(e) => e.steepness(),
        }
    }

    fn energy_of(&self, state: &DVector<f64>) -> Option<f64> {
        match self {
            Self::Single(e) => e.energy_of(state),
            Self::Multi(e) => e.energy_of(state),
        }
    }
}
