//! Experiment configuration files.
//!
//! ```toml
//! [domain]
//! rho_in = 0.5
//!
//! [series]
//! max_terms = 200
//! target_tol = 1e-10
//!
//! [configuration]
//! sep = 0.01
//! points = [[0.7, 0.0, 0.0, 0.0], [-0.7, 0.0, 0.0, 0.0]]
//! # or: ring = { k = 2, r = 0.7 }
//! # or: random = { k = 3, seed = 7 }
//!
//! [reduce]
//! epsilon = [0.2, 0.1, 0.05]
//! search = false
//!
//! [profile]
//! epsilon = 0.1
//! half_width = 1.0
//! n = 101
//! ```

use std::path::Path;

use brl_core::annulus::AnnulusGeometry;
use brl_core::{AnnulusGreen, Configuration, GreenOracle, Point4, SeriesControl};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MAX_TERMS_ENV: &str = "BRL_MAX_TERMS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSection,
    #[serde(default)]
    pub series: SeriesSection,
    pub configuration: ConfigurationSection,
    #[serde(default)]
    pub reduce: ReduceSection,
    #[serde(default)]
    pub profile: ProfileSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub rho_in: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub max_terms: Option<usize>,
    pub target_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub k: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationSection {
    #[serde(default = "default_sep")]
    pub sep: f64,
    pub points: Option<Vec<Point4>>,
    pub ring: Option<RingSpec>,
    pub random: Option<RandomSpec>,
}

fn default_sep() -> f64 {
    0.01
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceSection {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub search: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub epsilon: Option<f64>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            epsilon: None,
            half_width: default_half_width(),
            n: default_n(),
        }
    }
}

fn default_half_width() -> f64 {
    1.0
}

fn default_n() -> usize {
    101
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        AnnulusGeometry::new(self.domain.rho_in)?;
        series_control(
            self.series.max_terms,
            self.series.target_tol,
            SeriesControl::default(),
        )?;
        let c = &self.configuration;
        let given = [c.points.is_some(), c.ring.is_some(), c.random.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(CliError::Usage(
                "configuration needs exactly one of `points`, `ring`, `random`".into(),
            ));
        }
        if !(c.sep > 0.0) {
            return Err(CliError::Usage(format!(
                "sep must be positive, got {}",
                c.sep
            )));
        }
        if let Some(bad) = self
            .reduce
            .epsilon
            .iter()
            .find(|&&e| !(e > 0.0 && e.is_finite()))
        {
            return Err(CliError::Usage(format!(
                "epsilon must be positive, got {bad}"
            )));
        }
        let p = &self.profile;
        if let Some(e) = p.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::Usage(format!(
                    "profile epsilon must be positive, got {e}"
                )));
            }
        }
        if !(p.half_width > 0.0) || p.n < 2 {
            return Err(CliError::Usage(
                "profile needs half_width > 0 and n >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn oracle(&self) -> Result<AnnulusGreen, CliError> {
        let ctrl = series_control(
            self.series.max_terms,
            self.series.target_tol,
            SeriesControl::default(),
        )?;
        Ok(AnnulusGreen::new(self.domain.rho_in, ctrl)?)
    }

    /// The point configuration, checked against the domain.
    pub fn configuration(&self, oracle: &AnnulusGreen) -> Result<Configuration, CliError> {
        let c = &self.configuration;
        let config = if let Some(points) = &c.points {
            Configuration::new(points.clone(), c.sep)?
        } else if let Some(ring) = &c.ring {
            Configuration::ring(ring.k, ring.r, c.sep)?
        } else if let Some(random) = &c.random {
            let mut rng = ChaCha8Rng::seed_from_u64(random.seed);
            Configuration::random_in_annulus(random.k, &oracle.geom, c.sep, &mut rng)?
        } else {
            unreachable!("validated")
        };
        config.validate(oracle as &dyn GreenOracle)?;
        Ok(config)
    }
}

/// Series controls from explicit values, then `BRL_MAX_TERMS` for the term
/// count, then `fallback`.
pub fn series_control(
    max_terms: Option<usize>,
    target_tol: Option<f64>,
    fallback: SeriesControl,
) -> Result<SeriesControl, CliError> {
    let max_terms = match max_terms {
        Some(n) => n,
        None => match std::env::var(MAX_TERMS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "{MAX_TERMS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
            Err(_) => fallback.max_terms,
        },
    };
    Ok(SeriesControl::new(
        max_terms,
        target_tol.unwrap_or(fallback.target_tol),
    )?)
}
