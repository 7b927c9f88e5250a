use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_ext;

/// Which S-LUCB flavour a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    VarianceAdaptive,
    CorruptionRobust,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "variance_adaptive" | "variance" => Ok(Variant::VarianceAdaptive),
            "corruption_robust" | "corruption" => Ok(Variant::CorruptionRobust),
            _ => Err(Error::config("variant", format!("unknown variant `{s}`"))),
        }
    }
}

/// Algorithm constants for one run.
///
/// `horizon` is the total number of arm pulls `T` for asynchronous runs and
/// the per-client round count `T_c` for synchronous runs, whose confidence
/// constants then use `T = M·T_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub dim: usize,
    pub arms: usize,
    pub clients: usize,
    pub horizon: usize,
    pub delta: f64,
    pub variant: Variant,
    /// Async determinant threshold `C`; `None` means `1/M²`.
    #[serde(default, with = "serde_ext::opt_f64")]
    pub async_threshold: Option<f64>,
    /// Sync staleness threshold `D`; `None` means `T_c ln T_c / (d² M)`.
    #[serde(default, with = "serde_ext::opt_f64")]
    pub sync_threshold: Option<f64>,
    /// Noise bound `R` (variance-adaptive variant).
    pub noise_bound: f64,
    /// Corruption budget `C_p` (corruption-robust variant).
    pub corruption_budget: f64,
    pub ridge_lambda: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            arms: 10,
            clients: 5,
            horizon: 20_000,
            delta: 0.1,
            variant: Variant::Standard,
            async_threshold: None,
            sync_threshold: None,
            noise_bound: 1.0,
            corruption_budget: 0.0,
            ridge_lambda: 1.0,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.arms == 0 {
            return Err(Error::config("K", "must be at least 1"));
        }
        if self.clients == 0 {
            return Err(Error::config("M", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("T", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(
                "delta",
                format!("must lie in (0, 1), got {}", self.delta),
            ));
        }
        if let Some(c) = self.async_threshold {
            if c.is_nan() || c < 0.0 {
                return Err(Error::config("C", format!("must be nonnegative, got {c}")));
            }
        }
        if let Some(d) = self.sync_threshold {
            if d.is_nan() || d < 0.0 {
                return Err(Error::config("D", format!("must be nonnegative, got {d}")));
            }
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda > 0.0) {
            return Err(Error::config("lambda", "must be positive and finite"));
        }
        if self.variant == Variant::VarianceAdaptive
            && !(self.noise_bound.is_finite() && self.noise_bound > 0.0)
        {
            return Err(Error::config(
                "R",
                format!("must be positive, got {}", self.noise_bound),
            ));
        }
        if !(self.corruption_budget.is_finite() && self.corruption_budget >= 0.0) {
            return Err(Error::config("Cp", "must be nonnegative and finite"));
        }
        Ok(())
    }

    /// `C`, defaulting to `1/M²`.
    pub fn resolved_async_threshold(&self) -> f64 {
        self.async_threshold
            .unwrap_or_else(|| 1.0 / (self.clients as f64).powi(2))
    }

    /// `D`, defaulting to `T_c ln T_c / (d² M)` with `horizon` read as `T_c`.
    pub fn resolved_sync_threshold(&self) -> f64 {
        self.sync_threshold.unwrap_or_else(|| {
            let tc = self.horizon as f64;
            tc * tc.ln() / ((self.dim as f64).powi(2) * self.clients as f64)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AlgoConfig::default().validate().unwrap();
    }

    #[test]
    fn thresholds_resolve() {
        let cfg = AlgoConfig {
            clients: 4,
            ..AlgoConfig::default()
        };
        assert_eq!(cfg.resolved_async_threshold(), 1.0 / 16.0);
        let cfg = AlgoConfig {
            dim: 25,
            clients: 20,
            horizon: 2000,
            ..AlgoConfig::default()
        };
        let expected = 2000.0 * 2000f64.ln() / (625.0 * 20.0);
        assert!((cfg.resolved_sync_threshold() - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_fields_are_named() {
        let bad = AlgoConfig {
            delta: 1.0,
            ..AlgoConfig::default()
        };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("delta"), "{err}");

        let bad = AlgoConfig {
            variant: Variant::VarianceAdaptive,
            noise_bound: 0.0,
            ..AlgoConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("`R`"));
    }

    #[test]
    fn infinite_threshold_survives_json() {
        let cfg = AlgoConfig {
            async_threshold: Some(f64::INFINITY),
            ..AlgoConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: AlgoConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
