//! Experiment configuration: a TOML file, defaults for every key, and
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    /// Output directory. Left out of report echoes so reports do not depend
    /// on where they are written.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub channel: ChannelConfig,
    pub solver: SolverConfig,
    pub code: CodeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage: Option<LeakageConfig>,
    pub sweep: SweepConfig,
    pub scaling: ScalingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub lambda_b: f64,
    pub lambda_e: f64,
    pub peak: f64,
    /// Points of the uniform amplitude grid on `[0, peak]`.
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub tail_tol: f64,
    pub positivity_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeConfig {
    pub n: usize,
    /// Rate backoff in bits per channel use.
    pub epsilon: f64,
    pub bin_size: usize,
    /// Cap on both codebook sizes.
    pub cap: u64,
    pub field_cap_bits: u32,
    pub delta: f64,
}

/// Explicit wiretap code for the `leakage` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageConfig {
    pub block_length: usize,
    pub messages: u64,
    pub bin_sizes: Vec<usize>,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        LeakageConfig {
            block_length: 2,
            messages: 2,
            bin_sizes: vec![1],
        }
    }
}

/// Parameter lists for `sweep`; an absent list holds the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_e: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub budgets: Vec<BudgetRow>,
    pub trials: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRow {
    pub n: usize,
    pub epsilon: f64,
    /// Capacity estimate; the on-off capacity of the main channel if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            trials: 10_000,
            out: None,
            channel: ChannelConfig::default(),
            solver: SolverConfig::default(),
            code: CodeConfig::default(),
            leakage: None,
            sweep: SweepConfig::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            lambda_b: 0.1,
            lambda_e: 2.0,
            peak: 20.0,
            grid_points: poisson_ident_core::captools::DEFAULT_GRID_POINTS,
            average_power: None,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 200_000,
            tail_tol: poisson_ident_core::channel::DEFAULT_TAIL_TOL,
            positivity_threshold: poisson_ident_core::captools::DEFAULT_POSITIVITY_THRESHOLD,
        }
    }
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            n: 16,
            epsilon: 0.75,
            bin_size: 1,
            cap: poisson_ident_core::phycode::DEFAULT_CODE_CAP,
            field_cap_bits: 20,
            delta: 1.0 / 16.0,
        }
    }
}

impl Default for ScalingConfig {
    fn default() -> Self {
        let row = |n, epsilon| BudgetRow {
            n,
            epsilon,
            capacity: Some(1.0),
        };
        ScalingConfig {
            budgets: vec![
                row(16, 0.75),
                row(16, 0.625),
                row(16, 0.5),
                row(16, 0.375),
                row(25, 0.5),
            ],
            trials: 200,
            cap: 1 << 16,
        }
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<u64>,
    pub lambda_b: Option<f64>,
    pub lambda_e: Option<f64>,
    pub peak: Option<f64>,
    pub grid_points: Option<usize>,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub cap: Option<u64>,
}

impl ExperimentConfig {
    /// Parses TOML text. Every unknown key is reported, not just the first.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let mut unknown = Vec::new();
        let cfg: ExperimentConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        if !unknown.is_empty() {
            return Err(CliError::Config(
                unknown.into_iter().map(|k| format!("{k}: unknown key")).collect(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(o.seed, self.seed);
        set!(o.trials, self.trials);
        set!(o.lambda_b, self.channel.lambda_b);
        set!(o.lambda_e, self.channel.lambda_e);
        set!(o.peak, self.channel.peak);
        set!(o.grid_points, self.channel.grid_points);
        set!(o.n, self.code.n);
        set!(o.epsilon, self.code.epsilon);
        set!(o.cap, self.code.cap);
        if o.out.is_some() {
            self.out = o.out.clone();
        }
    }

    /// Checks every value and lists all offending keys.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut issues = Vec::new();
        let mut need = |ok: bool, key: &str, what: &str| {
            if !ok {
                issues.push(format!("{key}: {what}"));
            }
        };
        let c = &self.channel;
        need(
            c.lambda_b.is_finite() && c.lambda_b >= 0.0,
            "channel.lambda_b",
            "must be finite and >= 0",
        );
        need(
            c.lambda_e.is_finite() && c.lambda_e >= c.lambda_b,
            "channel.lambda_e",
            "must be finite and >= channel.lambda_b (degraded pair)",
        );
        need(
            c.peak.is_finite() && c.peak > 0.0,
            "channel.peak",
            "must be finite and > 0",
        );
        need(c.grid_points >= 1, "channel.grid_points", "must be >= 1");
        if let Some(a) = c.average_power {
            need(
                a.is_finite() && a >= 0.0,
                "channel.average_power",
                "must be finite and >= 0",
            );
        }
        let s = &self.solver;
        need(s.tol.is_finite() && s.tol > 0.0, "solver.tol", "must be > 0");
        need(s.max_iter >= 1, "solver.max_iter", "must be >= 1");
        need(
            s.tail_tol > 0.0 && s.tail_tol < 1.0,
            "solver.tail_tol",
            "must lie in (0, 1)",
        );
        need(
            s.positivity_threshold.is_finite() && s.positivity_threshold >= 0.0,
            "solver.positivity_threshold",
            "must be >= 0",
        );
        let k = &self.code;
        need(k.n >= 4, "code.n", "must be >= 4");
        need(k.epsilon.is_finite() && k.epsilon > 0.0, "code.epsilon", "must be > 0");
        need(k.bin_size >= 1, "code.bin_size", "must be >= 1");
        need(k.cap >= 2, "code.cap", "must be >= 2");
        need(
            (1..=31).contains(&k.field_cap_bits),
            "code.field_cap_bits",
            "must lie in 1..=31",
        );
        need(k.delta.is_finite() && k.delta > 0.0, "code.delta", "must be > 0");
        need(self.trials >= 1, "trials", "must be >= 1");
        if let Some(l) = &self.leakage {
            need(l.block_length >= 1, "leakage.block_length", "must be >= 1");
            need(l.messages >= 1, "leakage.messages", "must be >= 1");
            need(!l.bin_sizes.is_empty(), "leakage.bin_sizes", "must not be empty");
            need(
                l.bin_sizes.iter().all(|&r| r >= 1),
                "leakage.bin_sizes",
                "entries must be >= 1",
            );
        }
        if let Some(v) = &self.sweep.lambda_e {
            need(
                v.iter().all(|&l| l.is_finite() && l >= c.lambda_b),
                "sweep.lambda_e",
                "entries must be >= channel.lambda_b",
            );
        }
        if let Some(v) = &self.sweep.peak {
            need(
                v.iter().all(|&a| a.is_finite() && a > 0.0),
                "sweep.peak",
                "entries must be > 0",
            );
        }
        if let Some(v) = &self.sweep.n {
            need(v.iter().all(|&n| n >= 4), "sweep.n", "entries must be >= 4");
        }
        need(self.scaling.trials >= 1, "scaling.trials", "must be >= 1");
        need(self.scaling.cap >= 2, "scaling.cap", "must be >= 2");
        for (i, b) in self.scaling.budgets.iter().enumerate() {
            need(b.n >= 4, &format!("scaling.budgets[{i}].n"), "must be >= 4");
            need(b.epsilon > 0.0, &format!("scaling.budgets[{i}].epsilon"), "must be > 0");
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(issues))
        }
    }
}
