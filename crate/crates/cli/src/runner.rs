//! Runs one resolved experiment and writes its outputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use memassoc::costmodel::{self, CostReport};
use memassoc::crossbar::EmulatedNet;
use memassoc::data::{DatasetSpec, PatternPool, PatternSource};
use memassoc::learning::Trained;
use memassoc::metrics::{self, CapacityResult, CapacitySpec, Corruption, ResultRow, RetrievalSummary};
use memassoc::network::{retrieve, UpdateMode};
use memassoc::{seed, Error, PatternSet, Recurrent, RetrievalConfig};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ConfigErrors, ExperimentConfig, ExperimentKind, FaultMetric, RuleName, SourceConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("data error: {0}")]
    Data(Error),
    #[error("{0}")]
    Runtime(Error),
    #[error("cannot write output {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Runtime(_) | Self::Output { .. } => 3,
        }
    }

    fn data(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::ImageTooSmall { .. }
            | Error::InsufficientData { .. } => Self::Data(e),
            other => Self::Runtime(other),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        Self::Runtime(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// File names relative to `dir`, manifest last.
    pub files: Vec<String>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

struct Sink {
    dir: PathBuf,
    files: Vec<String>,
}

impl Sink {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| RunError::Output {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let f = File::create(&path).map_err(|source| RunError::Output { path, source })?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r).map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
        Ok(())
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    rows: Vec<ResultRow>,
    summary: BTreeMap<String, serde_json::Value>,
    sink: Sink,
}

impl Ctx<'_> {
    fn stage(&self, key: &str) -> u64 {
        seed::derive(self.cfg.seed, key)
    }

    fn retrieval(&self) -> RetrievalConfig {
        let mut r = self.cfg.retrieval.clone();
        r.seed = self.stage("order");
        r
    }

    fn push_rows(&mut self, id: &str, rule: RuleName, n: usize, n_h: Option<usize>, count: usize, s: &RetrievalSummary) {
        for rec in &s.records {
            self.rows.push(ResultRow {
                experiment_id: id.to_string(),
                seed: self.cfg.seed,
                rule: rule_name(rule).to_string(),
                n,
                n_h,
                pattern_count: count,
                repeat: rec.repeat,
                pattern_id: rec.pattern_id,
                similarity: rec.similarity,
                iterations: rec.iterations,
                converged: rec.converged,
            });
        }
    }

    fn push_capacity_rows(&mut self, id: &str, rule: RuleName, n: usize, n_h: Option<usize>, res: &CapacityResult) {
        for r in &res.records {
            self.rows.push(ResultRow {
                experiment_id: id.to_string(),
                seed: self.cfg.seed,
                rule: rule_name(rule).to_string(),
                n,
                n_h,
                pattern_count: r.pattern_count,
                repeat: r.record.repeat,
                pattern_id: r.record.pattern_id,
                similarity: r.record.similarity,
                iterations: r.record.iterations,
                converged: r.record.converged,
            });
        }
    }
}

fn rule_name(r: RuleName) -> &'static str {
    match r {
        RuleName::Hebbian => "hebbian",
        RuleName::Storkey => "storkey",
        RuleName::PseudoInverse => "pseudo-inverse",
        RuleName::AdaptiveSingle => "adaptive-single",
        RuleName::AdaptiveMultilayer => "adaptive-multilayer",
    }
}

fn dataset_spec(cfg: &ExperimentConfig, side: usize) -> DatasetSpec {
    DatasetSpec {
        source: match &cfg.dataset.source {
            SourceConfig::Mnist { path } => PatternSource::Mnist { path: path.clone() },
            SourceConfig::Random => PatternSource::Random,
        },
        kind: cfg.dataset.kind,
        target_side: side,
        count: cfg.dataset.count,
        per_digit: cfg.dataset.per_digit,
        seed: seed::derive(cfg.seed, "data"),
    }
}

fn load_pool(cfg: &ExperimentConfig, side: usize) -> Result<PatternPool> {
    dataset_spec(cfg, side).pool().map_err(RunError::data)
}

fn load_patterns(cfg: &ExperimentConfig) -> Result<PatternSet> {
    let spec = dataset_spec(cfg, cfg.dataset.side);
    spec.pool()
        .and_then(|p| p.sample(spec.count, spec.per_digit, spec.seed))
        .map_err(RunError::data)
}

/// Fault fraction applied during training; only meaningful on hardware.
fn stuck(cfg: &ExperimentConfig) -> Option<f64> {
    (cfg.crossbar.enabled && cfg.crossbar.device.stuck_fraction > 0.0).then_some(cfg.crossbar.device.stuck_fraction)
}

fn n_h(cfg: &ExperimentConfig, rule: RuleName, n: usize) -> Option<usize> {
    (rule == RuleName::AdaptiveMultilayer).then(|| cfg.hidden_for(n))
}

#[derive(Serialize)]
struct TrainingRow {
    rule: &'static str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N_h")]
    n_h: Option<usize>,
    patterns: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    steps_used: Option<usize>,
    converged: Option<bool>,
    stuck_weights: usize,
}

#[derive(Serialize)]
struct LossRow {
    rule: &'static str,
    step: usize,
    loss: f64,
}

type Loaded = (RuleName, Trained, Box<dyn Recurrent>);

/// Loads, trains and (optionally) programs every configured rule.
fn train_all(ctx: &mut Ctx, patterns: &PatternSet) -> Result<Vec<Loaded>> {
    let cfg = ctx.cfg;
    let n = patterns.dim();
    let mut out = Vec::new();
    let mut training = Vec::new();
    let mut losses = Vec::new();
    for &name in &cfg.rules {
        let rule = cfg.rule(name, n);
        info!("training {} on {} patterns (N = {n})", rule.name(), patterns.len());
        let trained = rule.train(patterns, stuck(cfg), ctx.stage(&format!("train/{}", rule_name(name))))?;
        let rep = trained.report.as_ref();
        training.push(TrainingRow {
            rule: rule_name(name),
            n,
            n_h: n_h(cfg, name, n),
            patterns: patterns.len(),
            initial_loss: rep.map(|r| r.initial_loss),
            final_loss: rep.map(|r| r.final_loss),
            steps_used: rep.map(|r| r.steps_used),
            converged: rep.map(|r| r.converged),
            stuck_weights: trained.masks.iter().map(|m| m.count()).sum(),
        });
        if let Some(r) = rep {
            losses.extend(r.loss_history.iter().map(|&(step, loss)| LossRow {
                rule: rule_name(name),
                step,
                loss,
            }));
        }
        let net: Box<dyn Recurrent> = if cfg.crossbar.enabled {
            let emu = EmulatedNet::program(&trained.net, &trained.masks, &cfg.crossbar.device)?;
            if cfg.crossbar.snapshots {
                let layers: &[&str] = if emu.pairs().len() == 1 { &["weights"] } else { &["encoder", "decoder"] };
                for (pair, layer) in emu.pairs().into_iter().zip(layers) {
                    let w = ctx.sink.create(&format!("conductance/{}-{layer}.csv", rule_name(name)))?;
                    pair.write_csv(w)?;
                }
            }
            Box::new(emu)
        } else {
            Box::new(trained.net.clone())
        };
        out.push((name, trained, net));
    }
    ctx.sink.csv("training.csv", &training)?;
    if !losses.is_empty() {
        ctx.sink.csv("loss.csv", &losses)?;
    }
    Ok(out)
}

/// Stored pattern, probe and recall of the first repeat, one row per vector.
#[derive(Serialize)]
struct RecallRow {
    rule: &'static str,
    pattern_id: usize,
    stage: &'static str,
    values: String,
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

fn run_retrieve(ctx: &mut Ctx, clean: bool) -> Result<()> {
    let cfg = ctx.cfg;
    let patterns = load_patterns(cfg)?;
    let n = patterns.dim();
    let nets = train_all(ctx, &patterns)?;
    let retrieval = ctx.retrieval();
    let corruption = if clean { Corruption::none_for(cfg.dataset.kind) } else { cfg.corruption };
    let repeats = if clean { 1 } else { cfg.repeats };
    let mut recall = Vec::new();
    for (name, _, net) in &nets {
        let s = metrics::retrieval_similarity(net.as_ref(), &patterns, corruption, repeats, &retrieval, ctx.stage("probe"))?;
        info!("{}: mean similarity {:.4}", rule_name(*name), s.mean);
        let id = cfg.experiment_id.clone();
        ctx.push_rows(&id, *name, n, n_h(cfg, *name, n), patterns.len(), &s);
        ctx.summary.insert(
            format!("{}.mean_similarity", rule_name(*name)),
            json!(s.mean),
        );
        ctx.summary.insert(
            format!("{}.min_pattern_similarity", rule_name(*name)),
            json!(s.per_pattern.iter().copied().fold(f64::INFINITY, f64::min)),
        );
        for (p, stored) in patterns.iter().enumerate() {
            let probe = corruption.apply(stored, seed::derive(ctx.stage("recall"), &p.to_string()))?;
            let trace = retrieve(net.as_ref(), &probe, &retrieval)?;
            for (stage, v) in [("stored", stored), ("probe", &probe), ("recalled", &trace.result)] {
                recall.push(RecallRow {
                    rule: rule_name(*name),
                    pattern_id: p,
                    stage,
                    values: fmt_values(v.as_slice()),
                });
            }
        }
    }
    ctx.sink.csv("recall.csv", &recall)?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    rule: &'static str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N_h")]
    n_h: Option<usize>,
    fault_fraction: f64,
    pattern_count: usize,
    mean: f64,
    spread_min: f64,
    spread_max: f64,
    passed: bool,
    failure: String,
}

fn capacity_spec(cfg: &ExperimentConfig, n: usize, fault: Option<f64>, key: &str) -> CapacitySpec {
    let mut spec = CapacitySpec::new(n, cfg.dataset.kind);
    spec.similarity_threshold = cfg.capacity.threshold;
    spec.corruption = cfg.corruption;
    spec.repeats = cfg.capacity.repeats;
    if let Some(s) = cfg.capacity.step {
        spec.pattern_step = s;
    }
    spec.max_patterns = cfg.capacity.max_patterns.unwrap_or(n);
    if cfg.dataset.per_digit {
        spec.max_patterns = spec.max_patterns.min(10);
    }
    spec.seed = seed::derive(cfg.seed, key);
    spec.strategy = cfg.capacity.strategy;
    spec.stop_at_first_failure = cfg.capacity.stop_at_first_failure;
    spec.resample_per_repeat = cfg.capacity.resample_per_repeat;
    spec.per_digit = cfg.dataset.per_digit;
    spec.fault_fraction = fault.or(stuck(cfg));
    spec.crossbar = cfg.crossbar.enabled.then(|| cfg.crossbar.device.clone());
    spec
}

fn curve_rows(rule: RuleName, n: usize, n_h: Option<usize>, fault: f64, res: &CapacityResult) -> Vec<CurveRow> {
    res.curve
        .iter()
        .map(|p| CurveRow {
            rule: rule_name(rule),
            n,
            n_h,
            fault_fraction: fault,
            pattern_count: p.pattern_count,
            mean: p.mean,
            spread_min: p.spread.0,
            spread_max: p.spread.1,
            passed: p.passed,
            failure: p.failure.clone().unwrap_or_default(),
        })
        .collect()
}

fn capacity_of(ctx: &mut Ctx, pool: &PatternPool, rule: RuleName, n: usize, n_h: Option<usize>, fault: Option<f64>, id: &str) -> Result<(CapacityResult, Vec<CurveRow>)> {
    let cfg = ctx.cfg;
    let learning = match (rule, n_h) {
        (RuleName::AdaptiveMultilayer, Some(h)) => memassoc::learning::LearningRule::AdaptiveMultilayer {
            hidden: h,
            config: cfg.training_multilayer.clone(),
        },
        _ => cfg.rule(rule, n),
    };
    let spec = capacity_spec(cfg, n, fault, &format!("capacity/{}", rule_name(rule)));
    spec.validate()?;
    let res = metrics::measure_capacity(&learning, pool, &spec, &ctx.retrieval())?;
    info!("{} N = {n}: capacity {}", rule_name(rule), res.capacity);
    ctx.push_capacity_rows(id, rule, n, n_h, &res);
    let rows = curve_rows(rule, n, n_h, spec.fault_fraction.unwrap_or(0.0), &res);
    Ok((res, rows))
}

fn run_capacity(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let pool = load_pool(cfg, cfg.dataset.side)?;
    let n = pool.dim();
    let id = cfg.experiment_id.clone();
    let mut curve = Vec::new();
    for &rule in &cfg.rules {
        let (res, rows) = capacity_of(ctx, &pool, rule, n, n_h(cfg, rule, n), None, &id)?;
        ctx.summary.insert(format!("{}.capacity", rule_name(rule)), json!(res.capacity));
        curve.extend(rows);
    }
    ctx.sink.csv("capacity.csv", &curve)
}

#[derive(Serialize)]
struct FaultRow {
    rule: &'static str,
    #[serde(rename = "N")]
    n: usize,
    fault_fraction: f64,
    stuck_weights: usize,
    mean: f64,
    min_pattern_mean: f64,
    spread_min: f64,
    spread_max: f64,
}

fn run_faults(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let fractions = cfg.faults.fractions.clone();
    match cfg.faults.metric {
        FaultMetric::Similarity => {
            let patterns = load_patterns(cfg)?;
            let n = patterns.dim();
            let retrieval = ctx.retrieval();
            let mut table = Vec::new();
            for &f in &fractions {
                let id = format!("{}@{f}", cfg.experiment_id);
                for &name in &cfg.rules {
                    let rule = cfg.rule(name, n);
                    // One mask per fraction, shared by every rule.
                    let trained = rule.train(&patterns, Some(f), ctx.stage(&format!("faults/{f}")))?;
                    let net: Box<dyn Recurrent> = if cfg.crossbar.enabled {
                        Box::new(EmulatedNet::program(&trained.net, &trained.masks, &cfg.crossbar.device)?)
                    } else {
                        Box::new(trained.net.clone())
                    };
                    let s = metrics::retrieval_similarity(net.as_ref(), &patterns, cfg.corruption, cfg.repeats, &retrieval, ctx.stage("probe"))?;
                    info!("{} at {f}: mean similarity {:.4}", rule_name(name), s.mean);
                    ctx.push_rows(&id, name, n, n_h(cfg, name, n), patterns.len(), &s);
                    table.push(FaultRow {
                        rule: rule_name(name),
                        n,
                        fault_fraction: f,
                        stuck_weights: trained.masks.iter().map(|m| m.count()).sum(),
                        mean: s.mean,
                        min_pattern_mean: s.per_pattern.iter().copied().fold(f64::INFINITY, f64::min),
                        spread_min: s.spread.0,
                        spread_max: s.spread.1,
                    });
                }
            }
            ctx.sink.csv("faults.csv", &table)
        }
        FaultMetric::Capacity => {
            let pool = load_pool(cfg, cfg.dataset.side)?;
            let n = pool.dim();
            let mut curve = Vec::new();
            for &f in &fractions {
                let id = format!("{}@{f}", cfg.experiment_id);
                for &rule in &cfg.rules {
                    let (res, rows) = capacity_of(ctx, &pool, rule, n, n_h(cfg, rule, n), Some(f), &id)?;
                    ctx.summary.insert(format!("{}.capacity@{f}", rule_name(rule)), json!(res.capacity));
                    curve.extend(rows);
                }
            }
            ctx.sink.csv("faults.csv", &curve)
        }
    }
}

#[derive(Serialize)]
struct ScalingRow {
    rule: &'static str,
    side: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N_h")]
    n_h: Option<usize>,
    capacity: usize,
}

#[derive(Serialize)]
struct FitRow {
    rule: &'static str,
    exponent: f64,
    intercept: f64,
    r_squared: f64,
}

fn run_scaling(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let id = cfg.experiment_id.clone();
    let mut table = Vec::new();
    let mut curve = Vec::new();
    for &side in &cfg.scaling.sides {
        let pool = load_pool(cfg, side)?;
        let n = pool.dim();
        for &rule in &cfg.rules {
            let h = (rule == RuleName::AdaptiveMultilayer)
                .then(|| cfg.hidden.unwrap_or(((n as f64 * cfg.scaling.hidden_ratio).round() as usize).max(1)));
            let (res, rows) = capacity_of(ctx, &pool, rule, n, h, None, &id)?;
            curve.extend(rows);
            table.push(ScalingRow {
                rule: rule_name(rule),
                side,
                n,
                n_h: h,
                capacity: res.capacity,
            });
        }
    }
    let mut fits = Vec::new();
    for &rule in &cfg.rules {
        let pts: Vec<(f64, f64)> = table
            .iter()
            .filter(|r| r.rule == rule_name(rule) && r.capacity > 0)
            .map(|r| (r.n as f64, r.capacity as f64))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let fit = metrics::fit_scaling_exponent(&pts)?;
        ctx.summary.insert(format!("{}.exponent", rule_name(rule)), json!(fit.exponent));
        fits.push(FitRow {
            rule: rule_name(rule),
            exponent: fit.exponent,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
        });
    }
    ctx.sink.csv("scaling.csv", &table)?;
    ctx.sink.csv("scaling_curve.csv", &curve)?;
    ctx.sink.csv("scaling_fit.csv", &fits)
}

fn run_cost(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let patterns = load_patterns(cfg)?;
    let n = patterns.dim();
    let id = cfg.experiment_id.clone();
    let probe = ctx.stage("probe");
    let mut reports: Vec<CostReport> = Vec::new();
    for &name in &cfg.rules {
        let rule = cfg.rule(name, n);
        let trained = rule.train(&patterns, stuck(cfg), ctx.stage(&format!("train/{}", rule_name(name))))?;
        let net = &trained.net;
        let sync = ctx.retrieval();
        let s = metrics::retrieval_similarity(net, &patterns, cfg.corruption, cfg.repeats, &sync.clone().with_mode(UpdateMode::Synchronous), probe)?;
        ctx.push_rows(&format!("{id}/sync"), name, n, n_h(cfg, name, n), patterns.len(), &s);
        let iters = s.mean_iterations().max(1.0);
        if name == RuleName::AdaptiveMultilayer {
            let h = cfg.hidden_for(n);
            reports.push(costmodel::cost_multilayer(n, h, iters, &cfg.cost)?);
            continue;
        }
        let a = metrics::retrieval_similarity(net, &patterns, cfg.corruption, cfg.repeats, &sync.with_mode(UpdateMode::Asynchronous), probe)?;
        ctx.push_rows(&format!("{id}/async"), name, n, None, patterns.len(), &a);
        let rs = costmodel::cost_sync_single(n, iters, &cfg.cost)?;
        let ra = costmodel::cost_async_single(n, a.mean_iterations().max(1.0), &cfg.cost)?;
        ctx.summary.insert(format!("{}.latency_reduction", rule_name(name)), json!(costmodel::latency_reduction(&rs, &ra)));
        ctx.summary.insert(format!("{}.energy_ratio", rule_name(name)), json!(costmodel::energy_ratio(&rs, &ra)));
        reports.push(rs);
        reports.push(ra);
    }
    let w = ctx.sink.create("cost.csv")?;
    costmodel::write_reports(w, &id, &reports)?;
    Ok(())
}

/// Hex SHA-256 of the config text, recorded in the manifest.
pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `cfg`, writing everything under `cfg.output`.
pub fn run(cfg: &ExperimentConfig, config_text: Option<&str>) -> Result<RunOutput> {
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Output {
        path: dir.clone(),
        source,
    })?;
    let mut ctx = Ctx {
        cfg,
        rows: Vec::new(),
        summary: BTreeMap::new(),
        sink: Sink {
            dir: dir.clone(),
            files: Vec::new(),
        },
    };
    info!("running {} ({})", cfg.experiment_id, cfg.experiment.name());
    match cfg.experiment {
        ExperimentKind::Store => run_retrieve(&mut ctx, true)?,
        ExperimentKind::Retrieve | ExperimentKind::Continuous => run_retrieve(&mut ctx, false)?,
        ExperimentKind::Capacity => run_capacity(&mut ctx)?,
        ExperimentKind::Faults => run_faults(&mut ctx)?,
        ExperimentKind::Scaling => run_scaling(&mut ctx)?,
        ExperimentKind::Cost => run_cost(&mut ctx)?,
    }
    let w = ctx.sink.create("results.csv")?;
    metrics::write_rows(w, &ctx.rows)?;

    let stages = ["data", "order", "probe", "recall", "crossbar"];
    let seeds: BTreeMap<&str, u64> = stages.iter().map(|k| (*k, seed::derive(cfg.seed, k))).collect();
    let mut outputs = ctx.sink.files.clone();
    outputs.sort();
    let manifest = json!({
        "tool": "memassoc",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment_id": cfg.experiment_id,
        "seed": cfg.seed,
        "config_sha256": config_text.map(digest),
        "config": cfg,
        "stage_seeds": seeds,
        "outputs": outputs,
        "summary": ctx.summary,
    });
    let path = dir.join("run-manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    fs::write(&path, text).map_err(|source| RunError::Output { path, source })?;
    let mut files = ctx.sink.files;
    files.push("run-manifest.json".into());
    Ok(RunOutput {
        dir,
        files,
        summary: ctx.summary,
    })
}

/// Parses config text into a runnable experiment.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(ConfigErrors(vec![format!("{}: {e}", path.display())])))?;
    let cfg = crate::config::validate(&text)?;
    Ok((cfg, text))
}
