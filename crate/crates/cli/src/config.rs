//! Experiment configuration. Two formats are accepted: a flat key-value
//! text with `[section]` headers (the native format, human-editable) and a
//! JSON object with the same structure for programmatic use. The format is
//! picked by sniffing the first non-whitespace character.
//!
//! ```text
//! [family]
//! kind = security
//! targets = 2
//! resources = 5
//! stages = 1
//!
//! [truth]
//! source = seeded
//! seed = 42
//!
//! [data]
//! sizes = 200 2000 5000
//! mask = col
//! seed = 7
//!
//! [optimizer]
//! method = adaptive-rms
//! learning_rate = 0.002
//! epochs = 250
//! ```

use crate::CliError;
use qreforge::SolverOptions;
use qreforge::families::FamilySpec;
use qreforge::learning::{ObservationMask, OptMethod, OptimizerConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    #[serde(default)]
    pub truth: TruthSource,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub solver: SolverSection,
    /// Context vector for single-game commands on contextual families.
    #[serde(default)]
    pub context: Option<Vec<f64>>,
}

/// Where the ground-truth parameters come from. Explicit values are given
/// in natural units (weights, card weights, target values).
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum TruthSource {
    Seeded {
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for TruthSource {
    fn default() -> Self {
        TruthSource::Seeded { seed: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub sizes: Vec<usize>,
    pub mask: ObservationMask,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            sizes: vec![200, 2000, 5000],
            mask: ObservationMask::Both,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Sampled,
    Noiseless,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub objective: Objective,
    pub seed: u64,
    pub eval_every: usize,
    /// Held-out context count for contextual families.
    pub test_contexts: usize,
    pub test_seed: u64,
    /// Training context count for the noiseless objective on contextual
    /// families.
    pub noiseless_contexts: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            objective: Objective::Sampled,
            seed: 11,
            eval_every: 1,
            test_contexts: 2000,
            test_seed: 9999,
            noiseless_contexts: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

impl SolverSection {
    pub fn to_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            ..Default::default()
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::input(format!("bad JSON config: {e}")))
        } else {
            parse_sections(text)
        }
    }

    /// Applies the `--seed` override: it becomes the master seed from which
    /// the truth, data, and training seeds are derived.
    pub fn override_seed(&mut self, seed: u64) {
        if let TruthSource::Seeded { seed: s } = &mut self.truth {
            *s = seed;
        }
        self.data.seed = seed.wrapping_add(1000);
        self.train.seed = seed.wrapping_add(2000);
    }
}

fn parse_sections(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut entries: Vec<(String, String, String)> = Vec::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::input(format!(
                "line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )));
        };
        entries.push((
            section.clone(),
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }

    let get = |sec: &str, key: &str| -> Option<&str> {
        entries
            .iter()
            .find(|(s, k, _)| s == sec && k == key)
            .map(|(_, _, v)| v.as_str())
    };

    let family = parse_family(&get)?;

    let mut truth = TruthSource::default();
    if let Some(source) = get("truth", "source") {
        truth = match source {
            "seeded" => TruthSource::Seeded {
                seed: parse_opt(get("truth", "seed"), 0, "truth.seed")?,
            },
            "explicit" => TruthSource::Explicit {
                values: parse_floats(
                    get("truth", "values").ok_or_else(|| {
                        CliError::input("truth.values required for source = explicit")
                    })?,
                    "truth.values",
                )?,
            },
            other => return Err(CliError::input(format!("unknown truth source `{other}`"))),
        };
    } else if let Some(values) = get("truth", "values") {
        truth = TruthSource::Explicit {
            values: parse_floats(values, "truth.values")?,
        };
    }

    let mut data = DataSection::default();
    if let Some(v) = get("data", "sizes") {
        data.sizes = v
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| CliError::input(format!("bad size `{s}`")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = get("data", "mask") {
        data.mask = parse_mask(v)?;
    }
    data.seed = parse_opt(get("data", "seed"), data.seed, "data.seed")?;

    let mut optimizer = OptimizerConfig::default();
    if let Some(v) = get("optimizer", "method") {
        optimizer.method = match v {
            "adaptive-rms" => OptMethod::AdaptiveRms,
            "plain-gradient" => OptMethod::PlainGradient,
            other => {
                return Err(CliError::input(format!(
                    "unknown optimizer method `{other}`"
                )));
            }
        };
    }
    optimizer.learning_rate = parse_opt(
        get("optimizer", "learning_rate"),
        optimizer.learning_rate,
        "optimizer.learning_rate",
    )?;
    optimizer.decay = parse_opt(
        get("optimizer", "decay"),
        optimizer.decay,
        "optimizer.decay",
    )?;
    optimizer.epsilon = parse_opt(
        get("optimizer", "epsilon"),
        optimizer.epsilon,
        "optimizer.epsilon",
    )?;
    optimizer.batch_size = parse_opt(
        get("optimizer", "batch_size"),
        optimizer.batch_size,
        "optimizer.batch_size",
    )?;
    optimizer.epochs = parse_opt(
        get("optimizer", "epochs"),
        optimizer.epochs,
        "optimizer.epochs",
    )?;

    let mut train = TrainSection::default();
    if let Some(v) = get("train", "objective") {
        train.objective = match v {
            "sampled" => Objective::Sampled,
            "noiseless" => Objective::Noiseless,
            other => return Err(CliError::input(format!("unknown objective `{other}`"))),
        };
    }
    train.seed = parse_opt(get("train", "seed"), train.seed, "train.seed")?;
    train.eval_every = parse_opt(
        get("train", "eval_every"),
        train.eval_every,
        "train.eval_every",
    )?;
    train.test_contexts = parse_opt(
        get("train", "test_contexts"),
        train.test_contexts,
        "train.test_contexts",
    )?;
    train.test_seed = parse_opt(
        get("train", "test_seed"),
        train.test_seed,
        "train.test_seed",
    )?;
    train.noiseless_contexts = parse_opt(
        get("train", "noiseless_contexts"),
        train.noiseless_contexts,
        "train.noiseless_contexts",
    )?;

    let mut solver = SolverSection::default();
    solver.tol = parse_opt(get("solver", "tol"), solver.tol, "solver.tol")?;
    solver.max_iters = parse_opt(
        get("solver", "max_iters"),
        solver.max_iters,
        "solver.max_iters",
    )?;

    let context = match get("context", "values") {
        Some(v) => Some(parse_floats(v, "context.values")?),
        None => None,
    };

    Ok(ExperimentConfig {
        family,
        truth,
        data,
        optimizer,
        train,
        solver,
        context,
    })
}

fn parse_family<'a>(get: &impl Fn(&str, &str) -> Option<&'a str>) -> Result<FamilySpec, CliError> {
    let kind = get("family", "kind")
        .ok_or_else(|| CliError::input("missing family.kind (rps | poker | security)"))?;
    match kind {
        "rps" => Ok(FamilySpec::Rps {
            context_dim: parse_opt(get("family", "context_dim"), 2, "family.context_dim")?,
        }),
        "poker" => Ok(FamilySpec::Poker {
            cards: parse_opt(get("family", "cards"), 4, "family.cards")?,
        }),
        "security" => Ok(FamilySpec::Security {
            targets: parse_opt(get("family", "targets"), 2, "family.targets")?,
            resources: parse_opt(get("family", "resources"), 5, "family.resources")?,
            stages: parse_opt(get("family", "stages"), 1, "family.stages")?,
        }),
        other => Err(CliError::input(format!("unknown family kind `{other}`"))),
    }
}

fn parse_mask(v: &str) -> Result<ObservationMask, CliError> {
    match v {
        "row" => Ok(ObservationMask::Row),
        "col" => Ok(ObservationMask::Col),
        "both" => Ok(ObservationMask::Both),
        other => Err(CliError::input(format!("unknown mask `{other}`"))),
    }
}

fn parse_floats(v: &str, what: &str) -> Result<Vec<f64>, CliError> {
    v.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::input(format!("{what}: bad number `{s}`")))
        })
        .collect()
}

fn parse_opt<T: std::str::FromStr>(v: Option<&str>, default: T, what: &str) -> Result<T, CliError> {
    match v {
        None => Ok(default),
        Some(s) => s
            .parse::<T>()
            .map_err(|_| CliError::input(format!("{what}: bad value `{s}`"))),
    }
}
