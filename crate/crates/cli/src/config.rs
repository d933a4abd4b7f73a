use std::fmt;
use std::path::PathBuf;

use fraclink::driver::VerifyOptions;
use fraclink::geometry::SamplerOptions;
use fraclink::minimax::SolverOptions;
use fraclink::spectral::{default_quad_order, DomainSpec};
use fraclink::{build_basis, Nonlinearity, NonlinearitySpec, SpectralBasis};
use serde::{Deserialize, Serialize};

/// Smallest truncation accepted from a config file.
pub const MIN_K_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSweep {
    Range { start: f64, stop: f64, steps: usize },
    Deltas { eigen_index: usize, delta_list: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplicitySettings {
    pub bisection_steps: usize,
    pub nabla_samples: usize,
    pub sampler: SamplerOptions,
}

impl Default for MultiplicitySettings {
    fn default() -> Self {
        Self {
            bisection_steps: 3,
            nabla_samples: 0,
            sampler: SamplerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
    pub nonlinearity: NonlinearitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sweep: Option<LambdaSweep>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub multiplicity: MultiplicitySettings,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config together with its source text, for line lookups.
pub struct Loaded {
    pub config: RunConfig,
    text: String,
}

impl Loaded {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: (e.line() > 0).then_some(e.line()),
            message: e.to_string(),
        })?;
        Ok(Self {
            config,
            text: text.to_string(),
        })
    }

    /// Line of the first occurrence of `"key"`.
    fn line_of(&self, key: &str) -> Option<usize> {
        let needle = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line_of(key),
            message: message.into(),
        }
    }

    /// Seeds every sampler from the top-level seed.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        let c = &mut self.config;
        if let Some(s) = seed {
            c.rng_seed = s;
        }
        c.solver.rng_seed = c.rng_seed;
        c.verify.rng_seed = c.rng_seed;
        c.multiplicity.sampler.rng_seed = c.rng_seed;
    }

    /// Checks everything that does not depend on the subcommand and builds
    /// the basis and nonlinearity.
    pub fn validate(&self) -> Result<(SpectralBasis, Nonlinearity, Vec<String>), ConfigError> {
        let c = &self.config;
        let mut warnings = Vec::new();
        c.domain.validate().map_err(|e| self.error("domain", e.to_string()))?;
        if c.k_max < MIN_K_MAX {
            return Err(self.error("K_max", format!("K_max = {} must be at least {MIN_K_MAX}", c.k_max)));
        }
        if c.quad_order == Some(0) {
            return Err(self.error("quad_order", "quad_order must be positive"));
        }
        let nl = Nonlinearity::from_spec(&c.nonlinearity).map_err(|e| self.error("nonlinearity", e.to_string()))?;
        match nl.check_exponent(c.domain.dim()) {
            Ok(Some(w)) => warnings.push(w),
            Ok(None) => {}
            Err(e) => return Err(self.error("p", e.to_string())),
        }
        if let Some(l) = c.lambda {
            if !l.is_finite() {
                return Err(self.error("lambda", "lambda must be finite"));
            }
        }
        match &c.lambda_sweep {
            Some(LambdaSweep::Range { start, stop, steps }) => {
                if *steps == 0 || !(start.is_finite() && stop.is_finite()) || (*steps > 1 && !(start < stop)) {
                    return Err(self.error("lambda_sweep", "range sweep needs finite start < stop and steps >= 1"));
                }
            }
            Some(LambdaSweep::Deltas { eigen_index, delta_list }) => {
                if *eigen_index >= c.k_max {
                    return Err(self.error("eigen_index", format!("eigen_index = {eigen_index} must be below K_max = {}", c.k_max)));
                }
                if delta_list.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return Err(self.error("delta_list", "every delta must be positive"));
                }
            }
            None => {}
        }
        let s = &c.solver;
        for (key, v) in [
            ("residual_tol", s.residual_tol),
            ("flow_tol", s.flow_tol),
            ("dedup_tol", s.dedup_tol),
            ("norm_cap", s.norm_cap),
            ("armijo_c", s.armijo_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(self.error(key, format!("{key} = {v} must be positive")));
            }
        }
        if s.armijo_c >= 1.0 {
            return Err(self.error("armijo_c", "armijo_c must lie in (0, 1)"));
        }
        if c.verify.eigen_index >= c.k_max {
            return Err(self.error("eigen_index", format!("verify.eigen_index must be below K_max = {}", c.k_max)));
        }
        let order = c.quad_order.unwrap_or_else(|| default_quad_order(&c.domain, c.k_max));
        let basis = build_basis(&c.domain, c.k_max, order).map_err(|e| self.error("quad_order", e.to_string()))?;
        Ok((basis, nl, warnings))
    }

    /// `λ` values for `solve`.
    pub fn solve_lambdas(&self) -> Result<Vec<f64>, ConfigError> {
        match (&self.config.lambda_sweep, self.config.lambda) {
            (Some(LambdaSweep::Range { start, stop, steps }), _) => Ok(if *steps == 1 {
                vec![*start]
            } else {
                (0..*steps).map(|k| start + (stop - start) * k as f64 / (*steps - 1) as f64).collect()
            }),
            (Some(LambdaSweep::Deltas { .. }), _) => Err(self.error("lambda_sweep", "solve takes lambda or a {start, stop, steps} sweep")),
            (None, Some(l)) => Ok(vec![l]),
            (None, None) => Err(self.error("lambda", "solve needs lambda or lambda_sweep")),
        }
    }

    /// Cluster index and `δ` list for `multiplicity`.
    pub fn deltas(&self) -> Result<(usize, Vec<f64>), ConfigError> {
        match &self.config.lambda_sweep {
            Some(LambdaSweep::Deltas { eigen_index, delta_list }) => {
                if *eigen_index < 2 {
                    return Err(self.error("eigen_index", format!("eigen_index = {eigen_index}: multiplicity requires i >= 2")));
                }
                Ok((*eigen_index, delta_list.clone()))
            }
            _ => Err(self.error("lambda_sweep", "multiplicity needs lambda_sweep {eigen_index, delta_list}")),
        }
    }
}
