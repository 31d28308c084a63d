use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Effective parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub tau: f64,
    pub used_threshold: f64,
    pub empty_cost: f64,
    pub max_iters: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            lambda: 0.5,
            tau: 0.0,
            used_threshold: 0.5,
            empty_cost: 1.0,
            max_iters: 50,
            grid_size: 50,
            seed: 0,
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha={} beta={} lambda={} tau={} used_threshold={} empty_cost={} max_iters={} grid_size={} seed={}",
            self.alpha,
            self.beta,
            self.lambda,
            self.tau,
            self.used_threshold,
            self.empty_cost,
            self.max_iters,
            self.grid_size,
            self.seed
        )
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with any RunConfig keys
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Weight of the inter-subset term in the recommendation loss [default: 0.5]
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Size penalty per recommended model [default: 0.5]
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Hypervolume weight in the complementarity index [default: 0.5]
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Report pairs with chemistry strictly above this [default: 0]
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Minimum accuracy for an output to count as used [default: 0.5]
    #[arg(long, global = true)]
    pub used_threshold: Option<f64>,
    /// Cost of a configuration with no used outputs [default: 1.0]
    #[arg(long, global = true)]
    pub empty_cost: Option<f64>,
    /// Hill-climbing iteration limit per seed [default: 50]
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Cells per axis of the ΔCI map [default: 50]
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    /// Seed for every random choice [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! overlay {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        overlay!(alpha, beta, lambda, tau, used_threshold, empty_cost, max_iters, grid_size, seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} = {v} must lie in [0, 1]");
            }
            Ok(())
        };
        unit("alpha", self.alpha)?;
        unit("lambda", self.lambda)?;
        unit("used_threshold", self.used_threshold)?;
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            bail!("beta = {} must be positive", self.beta);
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            bail!("tau = {} must be >= 0", self.tau);
        }
        if !(self.empty_cost >= 0.0) || !self.empty_cost.is_finite() {
            bail!("empty_cost = {} must be finite and >= 0", self.empty_cost);
        }
        if self.grid_size < 2 {
            bail!("grid_size = {} must be >= 2", self.grid_size);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.alpha, c.beta, c.lambda, c.tau), (0.5, 0.5, 0.5, 0.0));
        assert_eq!((c.used_threshold, c.empty_cost), (0.5, 1.0));
        assert_eq!((c.max_iters, c.grid_size, c.seed), (50, 50, 0));
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "alpha = 0.25\nbeta = 2.0\n").unwrap();
        let args = ConfigArgs { config: Some(path), beta: Some(1.0), ..Default::default() };
        let c = args.resolve().unwrap();
        assert_eq!((c.alpha, c.beta, c.lambda), (0.25, 1.0, 0.5));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ConfigArgs { alpha: Some(1.5), ..Default::default() }.resolve().is_err());
        assert!(ConfigArgs { beta: Some(0.0), ..Default::default() }.resolve().is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "alhpa = 0.25\n").unwrap();
        assert!(ConfigArgs { config: Some(path), ..Default::default() }.resolve().is_err());
    }
}
