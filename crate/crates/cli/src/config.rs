//! Experiment configuration: TOML text in, a fully resolved record out.
//!
//! Every key is optional except `experiment` and `dataset.source`; anything
//! left out takes the documented default. Validation collects every problem
//! before reporting.

use std::path::PathBuf;

use memassoc::costmodel::CostParams;
use memassoc::crossbar::CrossbarConfig;
use memassoc::learning::{LearningRule, OptimizerKind, TrainingConfig};
use memassoc::metrics::{Corruption, SweepStrategy};
use memassoc::network::UpdateMode;
use memassoc::{PatternKind, RetrievalConfig};
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Store,
    Retrieve,
    Capacity,
    Faults,
    Scaling,
    Continuous,
    Cost,
}

impl ExperimentKind {
    pub const ALL: [(&'static str, ExperimentKind); 7] = [
        ("store", Self::Store),
        ("retrieve", Self::Retrieve),
        ("capacity", Self::Capacity),
        ("faults", Self::Faults),
        ("scaling", Self::Scaling),
        ("continuous", Self::Continuous),
        ("cost", Self::Cost),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).unwrap().0
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, k)| *k)
    }

    /// Capacity-style experiments default to the milder corruption.
    fn sweeps_capacity(self) -> bool {
        matches!(self, Self::Capacity | Self::Scaling | Self::Faults)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Hebbian,
    Storkey,
    PseudoInverse,
    AdaptiveSingle,
    AdaptiveMultilayer,
}

impl RuleName {
    const ALL: [(&'static str, RuleName); 5] = [
        ("hebbian", Self::Hebbian),
        ("storkey", Self::Storkey),
        ("pseudo-inverse", Self::PseudoInverse),
        ("adaptive-single", Self::AdaptiveSingle),
        ("adaptive-multilayer", Self::AdaptiveMultilayer),
    ];

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SourceConfig {
    Mnist { path: PathBuf },
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetConfig {
    pub source: SourceConfig,
    pub kind: PatternKind,
    pub side: usize,
    pub count: usize,
    pub per_digit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossbarSection {
    pub enabled: bool,
    pub snapshots: bool,
    #[serde(flatten)]
    pub device: CrossbarConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacitySection {
    pub threshold: f64,
    pub repeats: usize,
    /// `None` means `max(1, N/32)`.
    pub step: Option<usize>,
    /// `None` means `N`.
    pub max_patterns: Option<usize>,
    pub strategy: SweepStrategy,
    pub resample_per_repeat: bool,
    pub stop_at_first_failure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMetric {
    Similarity,
    Capacity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultsSection {
    pub fractions: Vec<f64>,
    pub metric: FaultMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSection {
    pub sides: Vec<usize>,
    pub hidden_ratio: f64,
}

/// Fully resolved experiment record; together with the input files it
/// determines every output byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub experiment_id: String,
    pub seed: u64,
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    pub rules: Vec<RuleName>,
    /// Hidden width of the two-layer net; `None` means `N/2`.
    pub hidden: Option<usize>,
    pub training_single: TrainingConfig,
    pub training_multilayer: TrainingConfig,
    pub retrieval: RetrievalConfig,
    pub corruption: Corruption,
    pub repeats: usize,
    pub crossbar: CrossbarSection,
    pub capacity: CapacitySection,
    pub faults: FaultsSection,
    pub scaling: ScalingSection,
    pub cost: CostParams,
}

impl ExperimentConfig {
    /// Replaces the global seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.crossbar.device.seed = memassoc::seed::derive(seed, "crossbar");
        self
    }

    pub fn n(&self) -> usize {
        self.dataset.side * self.dataset.side
    }

    pub fn hidden_for(&self, n: usize) -> usize {
        self.hidden.unwrap_or((n / 2).max(1))
    }

    pub fn rule(&self, name: RuleName, n: usize) -> LearningRule {
        match name {
            RuleName::Hebbian => LearningRule::Hebbian,
            RuleName::Storkey => LearningRule::Storkey,
            RuleName::PseudoInverse => LearningRule::PseudoInverse,
            RuleName::AdaptiveSingle => LearningRule::AdaptiveSingle(self.training_single.clone()),
            RuleName::AdaptiveMultilayer => LearningRule::AdaptiveMultilayer {
                hidden: self.hidden_for(n),
                config: self.training_multilayer.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ConfigErrors(pub Vec<String>);

/// Key lookups that record problems instead of failing fast.
struct Reader<'a> {
    errors: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn section<'t>(&mut self, root: &'t Table, name: &str, allowed: &[&str]) -> Option<&'t Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                self.unknown(t, name, allowed);
                Some(t)
            }
            Some(_) => {
                self.errors.push(format!("{name}: expected a table"));
                None
            }
        }
    }

    fn unknown(&mut self, t: &Table, prefix: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                self.errors.push(format!("{path}: unknown key"));
            }
        }
    }

    fn mismatch(&mut self, path: &str, want: &str, got: &Value) {
        self.errors.push(format!("{path}: expected {want}, found {}", got.type_str()));
    }

    fn string(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<String> {
        let v = t?.get(key)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.mismatch(&format!("{prefix}{key}"), "a string", v);
                None
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<f64> {
        let v = t?.get(key)?;
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.mismatch(&format!("{prefix}{key}"), "a number", v);
                None
            }
        }
    }

    fn uint(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<u64> {
        let v = t?.get(key)?;
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(_) => {
                self.errors.push(format!("{prefix}{key}: must be non-negative"));
                None
            }
            _ => {
                self.mismatch(&format!("{prefix}{key}"), "an integer", v);
                None
            }
        }
    }

    fn usize(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<usize> {
        self.uint(t, prefix, key).map(|v| v as usize)
    }

    fn boolean(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<bool> {
        let v = t?.get(key)?;
        match v.as_bool() {
            Some(b) => Some(b),
            None => {
                self.mismatch(&format!("{prefix}{key}"), "a boolean", v);
                None
            }
        }
    }

    fn floats(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<Vec<f64>> {
        let v = t?.get(key)?;
        let Some(arr) = v.as_array() else {
            self.mismatch(&format!("{prefix}{key}"), "an array of numbers", v);
            return None;
        };
        let out: Option<Vec<f64>> = arr
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect();
        if out.is_none() {
            self.errors.push(format!("{prefix}{key}: expected an array of numbers"));
        }
        out
    }

    fn positive(&mut self, path: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                self.errors.push(format!("{path}: must be positive, got {x}"));
                None
            }
            other => other,
        }
    }

    fn fraction(&mut self, path: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                self.errors.push(format!("{path}: must be in [0, 1], got {x}"));
                None
            }
            other => other,
        }
    }

    fn at_least_one(&mut self, path: &str, v: Option<usize>) -> Option<usize> {
        match v {
            Some(0) => {
                self.errors.push(format!("{path}: must be >= 1"));
                None
            }
            other => other,
        }
    }
}

const TRAINING_KEYS: [&str; 10] = [
    "learning_rate",
    "max_steps",
    "loss_threshold",
    "optimizer",
    "rmsprop_decay",
    "rmsprop_epsilon",
    "init_scale",
    "zero_diagonal",
    "history_stride",
    "seed",
];

fn read_training(r: &mut Reader, root: Option<&Table>, name: &str, mut cfg: TrainingConfig) -> TrainingConfig {
    let t = match root.and_then(|t| t.get(name)) {
        None => None,
        Some(Value::Table(t)) => {
            r.unknown(t, &format!("training.{name}"), &TRAINING_KEYS);
            Some(t)
        }
        Some(_) => {
            r.errors.push(format!("training.{name}: expected a table"));
            None
        }
    };
    let p = format!("training.{name}.");
    if let Some(v) = r.float(t, &p, "learning_rate") {
        cfg.learning_rate = r.positive(&format!("{p}learning_rate"), Some(v)).unwrap_or(cfg.learning_rate);
    }
    if let Some(v) = r.usize(t, &p, "max_steps") {
        cfg.max_steps = v;
    }
    if let Some(v) = r.float(t, &p, "loss_threshold") {
        cfg.loss_threshold = v;
    }
    if let Some(s) = r.string(t, &p, "optimizer") {
        match s.as_str() {
            "plain-gd" => cfg.optimizer = OptimizerKind::PlainGd,
            "rms-prop" | "rmsprop" => cfg.optimizer = OptimizerKind::RmsProp,
            _ => r.errors.push(format!("{p}optimizer: unknown optimizer {s:?} (plain-gd, rmsprop)")),
        }
    }
    if let Some(v) = r.float(t, &p, "rmsprop_decay") {
        cfg.rmsprop_decay = r.fraction(&format!("{p}rmsprop_decay"), Some(v)).unwrap_or(cfg.rmsprop_decay);
    }
    if let Some(v) = r.float(t, &p, "rmsprop_epsilon") {
        cfg.rmsprop_epsilon = r.positive(&format!("{p}rmsprop_epsilon"), Some(v)).unwrap_or(cfg.rmsprop_epsilon);
    }
    if let Some(v) = r.float(t, &p, "init_scale") {
        cfg.init_scale = Some(v.abs());
    }
    if let Some(v) = r.boolean(t, &p, "zero_diagonal") {
        cfg.zero_diagonal = v;
    }
    if let Some(v) = r.usize(t, &p, "history_stride") {
        cfg.history_stride = v.max(1);
    }
    if t.is_some_and(|t| t.contains_key("seed")) {
        r.errors.push(format!("{p}seed: training seeds derive from the global seed"));
    }
    cfg
}

/// One-line syntax error naming the line and the offending text.
pub fn syntax_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start].matches('\n').count() + 1;
            let at = text[span].trim();
            format!("line {line}: {} `{at}`", e.message().trim())
        }
        None => e.message().trim().to_string(),
    }
}

/// Parses and validates config text, filling defaults.
pub fn validate(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let root: Table = toml::from_str(text).map_err(|e| ConfigErrors(vec![syntax_error(text, &e)]))?;
    let mut errors = Vec::new();
    let cfg = resolve(&root, &mut errors);
    match cfg {
        Some(c) if errors.is_empty() => Ok(c),
        _ => Err(ConfigErrors(errors)),
    }
}

fn resolve(root: &Table, errors: &mut Vec<String>) -> Option<ExperimentConfig> {
    let mut r = Reader { errors };
    r.unknown(
        root,
        "",
        &[
            "experiment", "experiment_id", "seed", "output", "dataset", "network", "training", "retrieval",
            "corruption", "crossbar", "capacity", "faults", "scaling", "cost",
        ],
    );
    let top = Some(root);

    let experiment = match r.string(top, "", "experiment") {
        None if !root.contains_key("experiment") => {
            r.errors.push("experiment: required field missing".into());
            None
        }
        None => None,
        Some(s) => {
            let k = ExperimentKind::parse(&s);
            if k.is_none() {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|(n, _)| *n).collect();
                r.errors.push(format!("experiment: unknown kind {s:?} (expected one of {})", names.join(", ")));
            }
            k
        }
    };
    let seed = r.uint(top, "", "seed").unwrap_or(42);
    let output = r.string(top, "", "output").map(PathBuf::from).unwrap_or_else(|| "results".into());

    // dataset
    let ds = r.section(root, "dataset", &["source", "path", "kind", "side", "count", "per_digit"]);
    if ds.is_none() && !root.contains_key("dataset") {
        r.errors.push("dataset.source: required field missing".into());
    }
    let path = r.string(ds, "dataset.", "path").map(PathBuf::from).unwrap_or_else(|| "data/mnist".into());
    let source = match r.string(ds, "dataset.", "source") {
        Some(s) if s == "mnist" => Some(SourceConfig::Mnist { path }),
        Some(s) if s == "random" => Some(SourceConfig::Random),
        Some(s) => {
            r.errors.push(format!("dataset.source: unknown source {s:?} (mnist, random)"));
            None
        }
        None => {
            if ds.is_some_and(|t| !t.contains_key("source")) {
                r.errors.push("dataset.source: required field missing".into());
            }
            None
        }
    };
    let default_kind = if experiment == Some(ExperimentKind::Continuous) {
        PatternKind::Continuous
    } else {
        PatternKind::Binary
    };
    let kind = match r.string(ds, "dataset.", "kind").as_deref() {
        None => default_kind,
        Some("binary") => PatternKind::Binary,
        Some("continuous") => PatternKind::Continuous,
        Some(other) => {
            r.errors.push(format!("dataset.kind: unknown kind {other:?} (binary, continuous)"));
            default_kind
        }
    };
    let side = { let v = r.usize(ds, "dataset.", "side"); r.at_least_one("dataset.side", v) }.unwrap_or(8);
    let default_count = if experiment == Some(ExperimentKind::Continuous) { 6 } else { 10 };
    let count = r.usize(ds, "dataset.", "count").unwrap_or(default_count);
    let per_digit = r.boolean(ds, "dataset.", "per_digit").unwrap_or(matches!(source, Some(SourceConfig::Mnist { .. })));
    if per_digit && count > 10 {
        r.errors.push(format!("dataset.count: per_digit selection allows at most 10 patterns, got {count}"));
    }
    if per_digit && source == Some(SourceConfig::Random) {
        r.errors.push("dataset.per_digit: random patterns have no digit labels".into());
    }

    // network
    let net = r.section(root, "network", &["rules", "hidden", "steepness"]);
    let default_rules = match (experiment, kind) {
        (Some(ExperimentKind::Capacity | ExperimentKind::Faults), _) => {
            vec![RuleName::AdaptiveSingle, RuleName::PseudoInverse, RuleName::Hebbian]
        }
        (Some(ExperimentKind::Scaling), _) => vec![RuleName::AdaptiveSingle, RuleName::AdaptiveMultilayer],
        (_, PatternKind::Continuous) => vec![RuleName::AdaptiveMultilayer],
        _ => vec![RuleName::AdaptiveSingle],
    };
    let rules = match net.and_then(|t| t.get("rules")) {
        None => default_rules,
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for it in items {
                match it.as_str().and_then(RuleName::parse) {
                    Some(rule) => out.push(rule),
                    None => {
                        let names: Vec<_> = RuleName::ALL.iter().map(|(n, _)| *n).collect();
                        r.errors.push(format!("network.rules: unknown rule {it} (expected one of {})", names.join(", ")));
                    }
                }
            }
            if items.is_empty() {
                r.errors.push("network.rules: at least one rule is required".into());
            }
            out
        }
        Some(v) => {
            r.mismatch("network.rules", "an array of rule names", v);
            default_rules
        }
    };
    if kind == PatternKind::Continuous {
        for rule in &rules {
            if matches!(rule, RuleName::Hebbian | RuleName::Storkey | RuleName::PseudoInverse) {
                r.errors.push(format!("network.rules: {rule:?} only stores binary patterns"));
            }
        }
    }
    let hidden = { let v = r.usize(net, "network.", "hidden"); r.at_least_one("network.hidden", v) };
    let steepness = { let v = r.float(net, "network.", "steepness"); r.positive("network.steepness", v) }.unwrap_or(1.0);

    // training
    let tr = r.section(root, "training", &["single", "multilayer"]);
    let mut training_single = read_training(&mut r, tr, "single", TrainingConfig::single_layer());
    training_single.steepness = steepness;
    let training_multilayer = read_training(&mut r, tr, "multilayer", TrainingConfig::multilayer());

    // retrieval
    let rt = r.section(root, "retrieval", &["mode", "max_iterations", "tolerance"]);
    let mut retrieval = RetrievalConfig::for_kind(kind);
    match r.string(rt, "retrieval.", "mode").as_deref() {
        None | Some("synchronous") => {}
        Some("asynchronous") => retrieval.mode = UpdateMode::Asynchronous,
        Some(other) => r.errors.push(format!("retrieval.mode: unknown mode {other:?} (synchronous, asynchronous)")),
    }
    if let Some(v) = { let v = r.usize(rt, "retrieval.", "max_iterations"); r.at_least_one("retrieval.max_iterations", v) } {
        retrieval.max_iterations = v;
    }
    if let Some(v) = { let v = r.float(rt, "retrieval.", "tolerance"); r.positive("retrieval.tolerance", v) } {
        retrieval.continuous_tolerance = v;
    }

    // corruption
    let cr = r.section(root, "corruption", &["flip", "sigma", "repeats"]);
    let capacity_like = experiment.is_some_and(ExperimentKind::sweeps_capacity);
    let flip = { let v = r.float(cr, "corruption.", "flip"); r.fraction("corruption.flip", v) };
    let sigma = r.float(cr, "corruption.", "sigma");
    if let Some(s) = sigma {
        if !(s >= 0.0) {
            r.errors.push(format!("corruption.sigma: must be non-negative, got {s}"));
        }
    }
    let corruption = match kind {
        PatternKind::Binary => Corruption::Flip(flip.unwrap_or(if capacity_like { 0.05 } else { 0.1 })),
        PatternKind::Continuous => Corruption::Gaussian(sigma.unwrap_or(0.6)),
    };
    let repeats = { let v = r.usize(cr, "corruption.", "repeats"); r.at_least_one("corruption.repeats", v) }.unwrap_or(1);

    // crossbar
    let xb = r.section(
        root,
        "crossbar",
        &[
            "enabled", "snapshots", "g_min", "g_max", "write_tolerance", "read_voltage", "program_error_mean",
            "program_error_std", "stuck_fraction", "read_noise_std",
        ],
    );
    let mut device = CrossbarConfig::default();
    let p = "crossbar.";
    macro_rules! dev {
        ($field:ident) => {
            if let Some(v) = r.float(xb, p, stringify!($field)) {
                device.$field = v;
            }
        };
    }
    dev!(g_min);
    dev!(g_max);
    dev!(write_tolerance);
    dev!(read_voltage);
    dev!(program_error_mean);
    dev!(program_error_std);
    dev!(stuck_fraction);
    dev!(read_noise_std);
    if let Err(e) = device.validate() {
        r.errors.push(format!("crossbar: {}", e.to_string().trim_start_matches("invalid argument: ")));
    }
    let crossbar = CrossbarSection {
        enabled: r.boolean(xb, p, "enabled").unwrap_or(false),
        snapshots: r.boolean(xb, p, "snapshots").unwrap_or(false),
        device,
    };

    // capacity
    let cp = r.section(
        root,
        "capacity",
        &["threshold", "repeats", "step", "max_patterns", "strategy", "resample_per_repeat", "stop_at_first_failure"],
    );
    let threshold = r.float(cp, "capacity.", "threshold").unwrap_or(0.99);
    if !(threshold > 0.0 && threshold <= 1.0) {
        r.errors.push(format!("capacity.threshold: must be in (0, 1], got {threshold}"));
    }
    let strategy = match r.string(cp, "capacity.", "strategy").as_deref() {
        None | Some("linear") => SweepStrategy::Linear,
        Some("bracket") => SweepStrategy::Bracket,
        Some(other) => {
            r.errors.push(format!("capacity.strategy: unknown strategy {other:?} (linear, bracket)"));
            SweepStrategy::Linear
        }
    };
    let capacity = CapacitySection {
        threshold,
        repeats: { let v = r.usize(cp, "capacity.", "repeats"); r.at_least_one("capacity.repeats", v) }.unwrap_or(10),
        step: { let v = r.usize(cp, "capacity.", "step"); r.at_least_one("capacity.step", v) },
        max_patterns: r.usize(cp, "capacity.", "max_patterns"),
        strategy,
        resample_per_repeat: r.boolean(cp, "capacity.", "resample_per_repeat").unwrap_or(true),
        stop_at_first_failure: r.boolean(cp, "capacity.", "stop_at_first_failure").unwrap_or(true),
    };

    // faults
    let ft = r.section(root, "faults", &["fractions", "metric"]);
    let fractions = r
        .floats(ft, "faults.", "fractions")
        .unwrap_or_else(|| vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        r.errors.push("faults.fractions: every fraction must be in [0, 1]".into());
    }
    let metric = match r.string(ft, "faults.", "metric").as_deref() {
        None | Some("similarity") => FaultMetric::Similarity,
        Some("capacity") => FaultMetric::Capacity,
        Some(other) => {
            r.errors.push(format!("faults.metric: unknown metric {other:?} (similarity, capacity)"));
            FaultMetric::Similarity
        }
    };

    // scaling
    let sc = r.section(root, "scaling", &["sides", "hidden_ratio"]);
    let sides = match r.floats(sc, "scaling.", "sides") {
        None => vec![8, 10, 12, 14],
        Some(v) => {
            if v.len() < 2 || v.iter().any(|s| *s < 1.0 || s.fract() != 0.0) {
                r.errors.push("scaling.sides: need at least two positive integer sides".into());
            }
            v.iter().map(|s| *s as usize).collect()
        }
    };
    let hidden_ratio = { let v = r.float(sc, "scaling.", "hidden_ratio"); r.positive("scaling.hidden_ratio", v) }.unwrap_or(0.5);

    // cost
    let cs = r.section(
        root,
        "cost",
        &["e_mvm_per_cell", "e_adc_per_sample", "e_dac_per_sample", "t_mvm", "t_adc", "t_dac", "parallel_adc_count"],
    );
    let mut cost = CostParams::default();
    macro_rules! cost {
        ($field:ident) => {
            if let Some(v) = r.float(cs, "cost.", stringify!($field)) {
                cost.$field = v;
            }
        };
    }
    cost!(e_mvm_per_cell);
    cost!(e_adc_per_sample);
    cost!(e_dac_per_sample);
    cost!(t_mvm);
    cost!(t_adc);
    cost!(t_dac);
    if let Some(v) = { let v = r.usize(cs, "cost.", "parallel_adc_count"); r.at_least_one("cost.parallel_adc_count", v) } {
        cost.parallel_adc_count = v;
    }
    if cost.validate().is_err() {
        r.errors.push("cost: parameters must be finite and non-negative".into());
    }

    let experiment = experiment?;
    let source = source?;
    let experiment_id = r.string(top, "", "experiment_id").unwrap_or_else(|| experiment.name().to_string());
    let cfg = ExperimentConfig {
        experiment,
        experiment_id,
        seed,
        output,
        dataset: DatasetConfig {
            source,
            kind,
            side,
            count,
            per_digit,
        },
        rules,
        hidden,
        training_single,
        training_multilayer,
        retrieval,
        corruption,
        repeats,
        crossbar,
        capacity,
        faults: FaultsSection { fractions, metric },
        scaling: ScalingSection { sides, hidden_ratio },
        cost,
    };
    Some(cfg.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_required_fields() {
        let e = validate("").unwrap_err();
        assert!(e.0.iter().any(|m| m.starts_with("experiment:")));
        assert!(e.0.iter().any(|m| m.starts_with("dataset.source:")));
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = validate("experiment = \"retrieve\"\n[dataset]\nsource = \"mnist\"\n").unwrap();
        assert_eq!(c.training_single.steepness, 1.0);
        assert_eq!(c.training_single.learning_rate, 3e-2);
        assert_eq!(c.training_multilayer.learning_rate, 3e-4);
        assert_eq!(c.crossbar.device.write_tolerance, 5.0);
        assert_eq!(c.crossbar.device.g_max, 150.0);
        assert_eq!(c.dataset.source, SourceConfig::Mnist { path: "data/mnist".into() });
        assert_eq!(c.corruption, Corruption::Flip(0.1));
        assert_eq!(c.rules, vec![RuleName::AdaptiveSingle]);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = r#"
experiment = "capacity"
colour = "blue"
[dataset]
source = "mnist"
side = "eight"
[network]
rules = ["adaptive-single", "magic"]
[crossbar]
g_max = -1.0
"#;
        let e = validate(text).unwrap_err().0;
        assert!(e.iter().any(|m| m == "colour: unknown key"), "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("dataset.side: expected an integer")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("unknown rule \"magic\"")), "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("crossbar:")), "{e:?}");
        assert!(e.len() >= 4);
    }

    #[test]
    fn duplicate_key_is_named() {
        let e = validate("experiment = \"store\"\nexperiment = \"cost\"\n").unwrap_err();
        assert!(e.0[0].starts_with("line 2: duplicate key `experiment`"), "{:?}", e.0);
    }

    #[test]
    fn invalid_rule_name_is_rejected() {
        let e = validate("experiment = \"store\"\n[dataset]\nsource = \"random\"\n[network]\nrules = [\"oja\"]\n");
        assert!(e.is_err());
    }

    #[test]
    fn continuous_defaults() {
        let c = validate("experiment = \"continuous\"\n[dataset]\nsource = \"mnist\"\n").unwrap();
        assert_eq!(c.dataset.kind, PatternKind::Continuous);
        assert_eq!(c.corruption, Corruption::Gaussian(0.6));
        assert_eq!(c.dataset.count, 6);
        assert_eq!(c.rules, vec![RuleName::AdaptiveMultilayer]);
        assert!(validate("experiment = \"continuous\"\n[dataset]\nsource = \"mnist\"\n[network]\nrules = [\"hebbian\"]\n").is_err());
    }
}
