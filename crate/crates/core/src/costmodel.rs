//! Analytical energy and latency of retrieval on a crossbar.
//!
//! Three phases are charged per array operation: the analog product (per
//! active cell), DAC input drives and ADC output conversions. Synchronous
//! updates do one full-array product per iteration; asynchronous updates do
//! one row product per neuron, each with the full input driven.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, RetrievalTrace};

/// Per-operation costs. Joules and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub e_mvm_per_cell: f64,
    pub e_adc_per_sample: f64,
    pub e_dac_per_sample: f64,
    pub t_mvm: f64,
    pub t_adc: f64,
    pub t_dac: f64,
    pub parallel_adc_count: usize,
}

impl Default for CostParams {
    /// Calibration targets, not measurements: at N = 64 with equal
    /// iteration and sweep counts, async costs about 2.7× the energy and
    /// about 60× the latency of sync.
    fn default() -> Self {
        Self {
            e_mvm_per_cell: 1e-14,
            e_adc_per_sample: 2e-13,
            e_dac_per_sample: 2.33e-14,
            t_mvm: 100e-9,
            t_adc: 1e-9,
            t_dac: 1e-9,
            parallel_adc_count: 8,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_mvm_per_cell,
            self.e_adc_per_sample,
            self.e_dac_per_sample,
            self.t_mvm,
            self.t_adc,
            self.t_dac,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("cost parameters must be finite and non-negative".into()));
        }
        if self.parallel_adc_count == 0 {
            return Err(Error::InvalidArgument("parallel_adc_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    Synchronous,
    Asynchronous,
    Multilayer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub mvm: f64,
    pub adc: f64,
    pub dac: f64,
}

impl PhaseCost {
    pub fn total(&self) -> f64 {
        self.mvm + self.adc + self.dac
    }

    fn scaled(self, k: f64) -> Self {
        Self {
            mvm: self.mvm * k,
            adc: self.adc * k,
            dac: self.dac * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mode: CostMode,
    pub n: usize,
    pub n_h: Option<usize>,
    /// Iterations (sync, multilayer) or sweeps (async); may be a measured mean.
    pub iterations: f64,
    pub energy: PhaseCost,
    pub latency: PhaseCost,
    pub total_energy: f64,
    pub total_latency: f64,
}

impl CostReport {
    fn new(mode: CostMode, n: usize, n_h: Option<usize>, iterations: f64, e: PhaseCost, t: PhaseCost) -> Self {
        let energy = e.scaled(iterations);
        let latency = t.scaled(iterations);
        Self {
            mode,
            n,
            n_h,
            iterations,
            total_energy: energy.total(),
            total_latency: latency.total(),
            energy,
            latency,
        }
    }
}

fn check(n: usize, iterations: f64, params: &CostParams) -> Result<()> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    if !(iterations >= 1.0 && iterations.is_finite()) {
        return Err(Error::InvalidArgument(format!("iterations must be >= 1, got {iterations}")));
    }
    Ok(())
}

fn adc_rounds(samples: usize, p: &CostParams) -> f64 {
    samples.div_ceil(p.parallel_adc_count) as f64
}

pub fn cost_sync_single(n: usize, iterations: f64, p: &CostParams) -> Result<CostReport> {
    check(n, iterations, p)?;
    let nf = n as f64;
    let e = PhaseCost {
        mvm: nf * nf * p.e_mvm_per_cell,
        adc: nf * p.e_adc_per_sample,
        dac: nf * p.e_dac_per_sample,
    };
    let t = PhaseCost {
        mvm: p.t_mvm,
        adc: adc_rounds(n, p) * p.t_adc,
        dac: p.t_dac,
    };
    Ok(CostReport::new(CostMode::Synchronous, n, None, iterations, e, t))
}

pub fn cost_async_single(n: usize, sweeps: f64, p: &CostParams) -> Result<CostReport> {
    check(n, sweeps, p)?;
    let nf = n as f64;
    let e = PhaseCost {
        mvm: nf * nf * p.e_mvm_per_cell,
        adc: nf * p.e_adc_per_sample,
        dac: nf * nf * p.e_dac_per_sample,
    };
    let t = PhaseCost {
        mvm: nf * p.t_mvm,
        adc: nf * p.t_adc,
        dac: nf * p.t_dac,
    };
    Ok(CostReport::new(CostMode::Asynchronous, n, None, sweeps, e, t))
}

/// Encoder and decoder run back to back, each a pipelined sync stage.
pub fn cost_multilayer(n: usize, n_h: usize, iterations: f64, p: &CostParams) -> Result<CostReport> {
    check(n, iterations, p)?;
    if n_h == 0 {
        return Err(Error::InvalidArgument("N_h must be >= 1".into()));
    }
    let (nf, hf) = (n as f64, n_h as f64);
    let e = PhaseCost {
        mvm: 2.0 * nf * hf * p.e_mvm_per_cell,
        adc: (nf + hf) * p.e_adc_per_sample,
        dac: (nf + hf) * p.e_dac_per_sample,
    };
    let t = PhaseCost {
        mvm: 2.0 * p.t_mvm,
        adc: (adc_rounds(n_h, p) + adc_rounds(n, p)) * p.t_adc,
        dac: 2.0 * p.t_dac,
    };
    Ok(CostReport::new(CostMode::Multilayer, n, Some(n_h), iterations, e, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub mean: f64,
    pub max: usize,
    pub count: usize,
    /// Traces that hit the iteration cap; counted at the cap.
    pub non_converged: usize,
}

/// Iterations each trace took to settle. A detected 2-cycle counts as settled.
pub fn iteration_counts_from_trace(traces: &[RetrievalTrace]) -> Result<IterationStats> {
    if traces.is_empty() {
        return Err(Error::InsufficientData {
            requested: 1,
            available: 0,
        });
    }
    let total: usize = traces.iter().map(|t| t.iterations_used).sum();
    Ok(IterationStats {
        mean: total as f64 / traces.len() as f64,
        max: traces.iter().map(|t| t.iterations_used).max().unwrap_or(0),
        count: traces.len(),
        non_converged: traces.iter().filter(|t| !t.converged && !t.cycle_detected).count(),
    })
}

/// `1 − sync/async` latency.
pub fn latency_reduction(sync: &CostReport, asynchronous: &CostReport) -> f64 {
    1.0 - sync.total_latency / asynchronous.total_latency
}

/// How many times more energy `other` uses than `base`.
pub fn energy_ratio(base: &CostReport, other: &CostReport) -> f64 {
    other.total_energy / base.total_energy
}

pub fn write_reports<W: Write>(writer: W, experiment_id: &str, reports: &[CostReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "experiment_id",
        "mode",
        "N",
        "N_h",
        "iterations",
        "energy_mvm_J",
        "energy_adc_J",
        "energy_dac_J",
        "total_energy_J",
        "latency_mvm_s",
        "latency_adc_s",
        "latency_dac_s",
        "total_latency_s",
    ])?;
    for r in reports {
        let mode = match r.mode {
            CostMode::Synchronous => "synchronous",
            CostMode::Asynchronous => "asynchronous",
            CostMode::Multilayer => "multilayer",
        };
        w.write_record([
            experiment_id.to_string(),
            mode.to_string(),
            r.n.to_string(),
            r.n_h.map(|h| h.to_string()).unwrap_or_default(),
            r.iterations.to_string(),
            r.energy.mvm.to_string(),
            r.energy.adc.to_string(),
            r.energy.dac.to_string(),
            r.total_energy.to_string(),
            r.latency.mvm.to_string(),
            r.latency.adc.to_string(),
            r.latency.dac.to_string(),
            r.total_latency.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
