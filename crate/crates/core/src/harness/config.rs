//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key of
//! [`ExperimentConfig::KEYS`] may appear at most once; omitted keys keep
//! their defaults. The same keys are accepted as `--set key=value` overrides.

use std::path::{Path, PathBuf};

use crate::agent::Variant;
use crate::env::ENV_NAMES;
use crate::error::{Error, Result};
use crate::ppo::PpoHyperparams;

/// Environment variable that shifts every seed of a run.
pub const SEED_OFFSET_VAR: &str = "SAUNA_SEED_OFFSET";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub variant: Variant,
    pub hyper: PpoHyperparams,
    /// Widths of the hidden layers of every network.
    pub hidden: Vec<usize>,
    pub shared_policy_trunk: bool,
    pub normalize_obs: bool,
    /// Only accepted predictions enter the filter's median.
    pub median_accepted_only: bool,
    /// Targets are computed over accepted transitions only, ignoring holes.
    pub returns_on_accepted_only: bool,
    /// Predictor count `p` of the adjusted statistic.
    pub adjusted_vex_predictors: usize,
    /// Multiplies rewards before they enter the training targets.
    pub reward_scale: f64,
    /// Constant rejection probability for `random_filter`.
    pub random_filter_rate: Option<f64>,
    /// Completed `sauna` run directory (or a single metrics CSV) whose
    /// per-update rejection fractions `random_filter` replays.
    pub random_filter_source: Option<PathBuf>,
    /// Visited environment steps per seed.
    pub total_steps: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Evaluate every this many updates (and after the last one).
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "pendulum".into(),
            variant: Variant::Sauna,
            hyper: PpoHyperparams::default(),
            hidden: vec![64, 64],
            shared_policy_trunk: false,
            normalize_obs: true,
            median_accepted_only: false,
            returns_on_accepted_only: false,
            adjusted_vex_predictors: 1,
            reward_scale: 1.0,
            random_filter_rate: None,
            random_filter_source: None,
            total_steps: 150_000,
            seeds: (0..6).collect(),
            out_dir: PathBuf::from("runs"),
            eval_every: 10,
            eval_episodes: 10,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse {key} = {value:?} as a boolean"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 30] = [
        "env",
        "variant",
        "seeds",
        "total_steps",
        "out_dir",
        "eval_every",
        "eval_episodes",
        "hidden",
        "shared_policy_trunk",
        "normalize_obs",
        "median_accepted_only",
        "returns_on_accepted_only",
        "adjusted_vex_predictors",
        "reward_scale",
        "random_filter_rate",
        "random_filter_source",
        "clip",
        "epochs",
        "minibatch_size",
        "horizon",
        "gamma",
        "lambda",
        "value_coef",
        "vex_coef",
        "entropy_coef",
        "max_grad_norm",
        "learning_rate",
        "rho",
        "eps0",
        "isolate_vex_head",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let h = &mut self.hyper;
        match key.trim() {
            "env" => self.env = v.to_string(),
            "variant" => self.variant = v.parse()?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "total_steps" => self.total_steps = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "eval_every" => self.eval_every = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "shared_policy_trunk" => self.shared_policy_trunk = parse_bool(key, v)?,
            "normalize_obs" => self.normalize_obs = parse_bool(key, v)?,
            "median_accepted_only" => self.median_accepted_only = parse_bool(key, v)?,
            "returns_on_accepted_only" => self.returns_on_accepted_only = parse_bool(key, v)?,
            "adjusted_vex_predictors" => self.adjusted_vex_predictors = parse(key, v)?,
            "reward_scale" => self.reward_scale = parse(key, v)?,
            "random_filter_rate" => {
                self.random_filter_rate = if v.is_empty() { None } else { Some(parse(key, v)?) }
            }
            "random_filter_source" => {
                self.random_filter_source = if v.is_empty() { None } else { Some(PathBuf::from(v)) }
            }
            "clip" => h.clip = parse(key, v)?,
            "epochs" => h.epochs = parse(key, v)?,
            "minibatch_size" => h.minibatch_size = parse(key, v)?,
            "horizon" => h.horizon = parse(key, v)?,
            "gamma" => h.gamma = parse(key, v)?,
            "lambda" => h.lambda = parse(key, v)?,
            "value_coef" => h.value_coef = parse(key, v)?,
            "vex_coef" => h.vex_coef = parse(key, v)?,
            "entropy_coef" => h.entropy_coef = parse(key, v)?,
            "max_grad_norm" => h.max_grad_norm = parse(key, v)?,
            "learning_rate" => h.learning_rate = parse(key, v)?,
            "rho" => h.rho = parse(key, v)?,
            "eps0" => h.eps0 = parse(key, v)?,
            "isolate_vex_head" => h.isolate_vex_head = parse_bool(key, v)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?}; known keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k}", lineno + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let h = &self.hyper;
        let opt = |o: &Option<f64>| o.map(|x| x.to_string()).unwrap_or_default();
        Some(match key {
            "env" => self.env.clone(),
            "variant" => self.variant.to_string(),
            "seeds" => join(&self.seeds),
            "total_steps" => self.total_steps.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "hidden" => join(&self.hidden),
            "shared_policy_trunk" => self.shared_policy_trunk.to_string(),
            "normalize_obs" => self.normalize_obs.to_string(),
            "median_accepted_only" => self.median_accepted_only.to_string(),
            "returns_on_accepted_only" => self.returns_on_accepted_only.to_string(),
            "adjusted_vex_predictors" => self.adjusted_vex_predictors.to_string(),
            "reward_scale" => self.reward_scale.to_string(),
            "random_filter_rate" => opt(&self.random_filter_rate),
            "random_filter_source" => self
                .random_filter_source
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "clip" => h.clip.to_string(),
            "epochs" => h.epochs.to_string(),
            "minibatch_size" => h.minibatch_size.to_string(),
            "horizon" => h.horizon.to_string(),
            "gamma" => h.gamma.to_string(),
            "lambda" => h.lambda.to_string(),
            "value_coef" => h.value_coef.to_string(),
            "vex_coef" => h.vex_coef.to_string(),
            "entropy_coef" => h.entropy_coef.to_string(),
            "max_grad_norm" => h.max_grad_norm.to_string(),
            "learning_rate" => h.learning_rate.to_string(),
            "rho" => h.rho.to_string(),
            "eps0" => h.eps0.to_string(),
            "isolate_vex_head" => h.isolate_vex_head.to_string(),
            _ => return None,
        })
    }

    /// Canonical text form, one key per line in [`Self::KEYS`] order.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&self.get(k).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !ENV_NAMES.contains(&self.env.as_str()) {
            return Err(Error::Config(format!(
                "unknown environment {:?}, expected one of {ENV_NAMES:?}",
                self.env
            )));
        }
        self.hyper.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.total_steps < self.hyper.horizon {
            return Err(Error::Config(format!(
                "total_steps {} is below one horizon ({})",
                self.total_steps, self.hyper.horizon
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("eval_every and eval_episodes must be positive".into()));
        }
        if let Some(r) = self.random_filter_rate {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("random_filter_rate {r} is outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Seeds shifted by `SAUNA_SEED_OFFSET` when it is set.
    pub fn effective_seeds(&self) -> Result<Vec<u64>> {
        let offset = match std::env::var(SEED_OFFSET_VAR) {
            Ok(s) if !s.trim().is_empty() => s.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!("{SEED_OFFSET_VAR}={s:?} is not an unsigned integer"))
            })?,
            _ => 0,
        };
        Ok(self.seeds.iter().map(|s| s.wrapping_add(offset)).collect())
    }
}
