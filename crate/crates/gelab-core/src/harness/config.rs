//! Flat key-value experiment configuration.
//!
//! Format: one `key = value` per line, `#` starts a comment line, blank
//! lines ignored. Lists are comma separated. Unknown or duplicate keys are
//! errors so typos cannot silently fall back to defaults.

use crate::model::{InitSpec, ModelParams, ParentSampling};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

fn line_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Jump,
    Graph,
    Both,
}

impl ModelChoice {
    pub fn kinds(&self) -> &'static [SimKind] {
        match self {
            ModelChoice::Jump => &[SimKind::Jump],
            ModelChoice::Graph => &[SimKind::Graph],
            ModelChoice::Both => &[SimKind::Jump, SimKind::Graph],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimKind {
    Jump,
    Graph,
}

impl SimKind {
    pub fn name(&self) -> &'static str {
        match self {
            SimKind::Jump => "jump",
            SimKind::Graph => "graph",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub n_values: Vec<usize>,
    pub init: InitSpec,
    pub t_end: f64,
    /// Interior recording times; 0 and `t_end` are always recorded.
    pub grid: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    pub mu: f64,
    pub nu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub parent_sampling: ParentSampling,
    /// Exact reference sample count per grid time; 0 disables the
    /// comparison columns.
    pub feller_samples: u64,
    pub out_report: Option<String>,
    pub out_raw_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::Jump,
            n_values: vec![50],
            init: InitSpec::PoissonTruncated {
                lambda: 2.0,
                truncation: 30,
            },
            t_end: 1.0,
            grid: Vec::new(),
            replicates: 100,
            seed: 42,
            mu: 0.0,
            nu: 0.0,
            beta: 0.0,
            alpha: 0.0,
            parent_sampling: ParentSampling::WithReplacement,
            feller_samples: 0,
            out_report: None,
            out_raw_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut init_kind: Option<(String, usize)> = None;
        let mut init_lambda = 2.0f64;
        let mut init_truncation = 30u32;
        let mut init_value = 2u32;
        let mut init_counts: Option<(Vec<u32>, usize)> = None;
        let mut seen: Vec<String> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| line_err(lineno, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if seen.contains(&key) {
                return Err(line_err(lineno, format!("duplicate key `{key}`")));
            }
            seen.push(key.clone());
            match key.as_str() {
                "model" => {
                    cfg.model = match value {
                        "jump" => ModelChoice::Jump,
                        "graph" => ModelChoice::Graph,
                        "both" => ModelChoice::Both,
                        other => {
                            return Err(line_err(
                                lineno,
                                format!("model must be jump|graph|both, got `{other}`"),
                            ))
                        }
                    }
                }
                "n" => cfg.n_values = parse_list(value, lineno, "n")?,
                "replicates" => cfg.replicates = parse_scalar(value, lineno, "replicates")?,
                "t_end" => cfg.t_end = parse_scalar(value, lineno, "t_end")?,
                "grid" => cfg.grid = parse_list(value, lineno, "grid")?,
                "seed" => cfg.seed = parse_scalar(value, lineno, "seed")?,
                "mu" => cfg.mu = parse_scalar(value, lineno, "mu")?,
                "nu" => cfg.nu = parse_scalar(value, lineno, "nu")?,
                "beta" => cfg.beta = parse_scalar(value, lineno, "beta")?,
                "alpha" => cfg.alpha = parse_scalar(value, lineno, "alpha")?,
                "parents" => {
                    cfg.parent_sampling = match value {
                        "with_replacement" => ParentSampling::WithReplacement,
                        "distinct" => ParentSampling::Distinct,
                        other => {
                            return Err(line_err(
                                lineno,
                                format!("parents must be with_replacement|distinct, got `{other}`"),
                            ))
                        }
                    }
                }
                "feller_samples" => {
                    cfg.feller_samples = parse_scalar(value, lineno, "feller_samples")?
                }
                "init_kind" => init_kind = Some((value.to_string(), lineno)),
                "init_lambda" => init_lambda = parse_scalar(value, lineno, "init_lambda")?,
                "init_truncation" => {
                    init_truncation = parse_scalar(value, lineno, "init_truncation")?
                }
                "init_value" => init_value = parse_scalar(value, lineno, "init_value")?,
                "init_counts" => {
                    init_counts = Some((parse_list(value, lineno, "init_counts")?, lineno))
                }
                "out_report" => cfg.out_report = Some(value.to_string()),
                "out_raw_dir" => cfg.out_raw_dir = Some(value.to_string()),
                other => return Err(line_err(lineno, format!("unknown key `{other}`"))),
            }
        }

        let kind = init_kind
            .as_ref()
            .map(|(k, _)| k.as_str())
            .unwrap_or("poisson");
        cfg.init = match kind {
            "poisson" => InitSpec::PoissonTruncated {
                lambda: init_lambda,
                truncation: init_truncation,
            },
            "delta" => InitSpec::Delta { value: init_value },
            "explicit" => {
                let (counts, line) = init_counts.ok_or_else(|| {
                    line_err(
                        init_kind.as_ref().map(|(_, l)| *l).unwrap_or(0),
                        "init_kind = explicit requires init_counts",
                    )
                })?;
                if counts.is_empty() {
                    return Err(line_err(line, "init_counts must not be empty"));
                }
                InitSpec::Explicit(counts)
            }
            other => {
                return Err(line_err(
                    init_kind.as_ref().map(|(_, l)| *l).unwrap_or(0),
                    format!("init_kind must be poisson|delta|explicit, got `{other}`"),
                ))
            }
        };

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_values.is_empty() {
            return Err(ConfigError::Invalid("n list must not be empty".into()));
        }
        if self.n_values.contains(&0) {
            return Err(ConfigError::Invalid("N values must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(ConfigError::Invalid("replicates must be >= 1".into()));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid(
                "grid must be strictly increasing".into(),
            ));
        }
        if self
            .grid
            .iter()
            .any(|&t| !t.is_finite() || t < 0.0 || t > self.t_end)
        {
            return Err(ConfigError::Invalid(
                "grid times must lie in [0, t_end]".into(),
            ));
        }
        self.init
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for &n in &self.n_values {
            self.params_for(n)
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.model != ModelChoice::Jump && !self.is_neutral() {
            return Err(ConfigError::Invalid(
                "graph model requires neutral rates (mu = nu = beta = alpha = 0)".into(),
            ));
        }
        Ok(())
    }

    pub fn is_neutral(&self) -> bool {
        self.mu == 0.0 && self.nu == 0.0 && self.beta == 0.0 && self.alpha == 0.0
    }

    pub fn params_for(&self, n: usize) -> ModelParams {
        ModelParams {
            n,
            mu: self.mu,
            nu: self.nu,
            beta: self.beta,
            alpha: self.alpha,
            parent_sampling: self.parent_sampling,
        }
    }
}

trait FromConfigValue: Sized {
    fn parse_cfg(s: &str) -> Option<Self>;
    const KIND: &'static str;
}

macro_rules! impl_from_config {
    ($($ty:ty => $kind:literal),*) => {
        $(impl FromConfigValue for $ty {
            fn parse_cfg(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            const KIND: &'static str = $kind;
        })*
    };
}

impl_from_config!(u64 => "a non-negative integer", u32 => "a non-negative integer",
    usize => "a non-negative integer", f64 => "a number");

fn parse_scalar<T: FromConfigValue>(value: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    T::parse_cfg(value)
        .ok_or_else(|| line_err(line, format!("{key} must be {}, got `{value}`", T::KIND)))
}

fn parse_list<T: FromConfigValue>(
    value: &str,
    line: usize,
    key: &str,
) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(s, line, key))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_an_empty_config() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn full_config_parses() {
        let text = "\
# comparison run
model = both
n = 25, 100, 400
replicates = 2000
t_end = 0.5
grid = 0.1, 0.25
seed = 7
init_kind = poisson
init_lambda = 2.0
init_truncation = 30
feller_samples = 20000
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.model, ModelChoice::Both);
        assert_eq!(cfg.n_values, vec![25, 100, 400]);
        assert_eq!(cfg.replicates, 2000);
        assert_eq!(cfg.grid, vec![0.1, 0.25]);
        assert_eq!(cfg.feller_samples, 20000);
        assert_eq!(
            cfg.init,
            InitSpec::PoissonTruncated {
                lambda: 2.0,
                truncation: 30
            }
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("model = jump\nbogus_key = 3\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Line {
                line: 2,
                message: "unknown key `bogus_key`".into()
            }
        );
        let err = ExperimentConfig::parse("\n\nreplicates = soon\n").unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 3, .. }));
        let err = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 2, .. }));
        let err = ExperimentConfig::parse("n = 10 20\n").unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 1, .. }));
    }

    #[test]
    fn semantic_validation() {
        assert!(ExperimentConfig::parse("grid = 0.5, 0.25\nt_end = 1.0").is_err());
        assert!(ExperimentConfig::parse("grid = 0.5\nt_end = 0.25").is_err());
        assert!(ExperimentConfig::parse("replicates = 0").is_err());
        assert!(ExperimentConfig::parse("model = graph\nmu = 1.0").is_err());
        assert!(ExperimentConfig::parse("init_kind = explicit").is_err());
        assert!(ExperimentConfig::parse("init_kind = explicit\ninit_counts = 1, 2").is_ok());
    }

    #[test]
    fn delta_init_and_rates() {
        let cfg = ExperimentConfig::parse("init_kind = delta\ninit_value = 2\nmu = 0.5\n").unwrap();
        assert_eq!(cfg.init, InitSpec::Delta { value: 2 });
        let params = cfg.params_for(10);
        assert_eq!(params.mu, 0.5);
        assert!(!params.is_neutral());
    }
}
