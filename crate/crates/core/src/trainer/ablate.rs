use std::fmt::Write as _;

use serde::Serialize;

use super::{train, EvalSets, FinalReports, TrainConfig, TrainRecord};
use crate::data::BiasedDataset;
use crate::error::{Error, Result};
use crate::regularizer::EndConfig;

/// Ablation settings; the weights come from the base config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Arm {
    Vanilla,
    DisentangleOnly,
    EntangleOnly,
    Full,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Vanilla, Arm::DisentangleOnly, Arm::EntangleOnly, Arm::Full];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Vanilla => "vanilla",
            Arm::DisentangleOnly => "disentangling only",
            Arm::EntangleOnly => "entangling only",
            Arm::Full => "EnD",
        }
    }

    pub fn end_config(self, base: &EndConfig) -> EndConfig {
        let (alpha, beta) = match self {
            Arm::Vanilla => (0.0, 0.0),
            Arm::DisentangleOnly => (base.alpha, 0.0),
            Arm::EntangleOnly => (0.0, base.beta),
            Arm::Full => (base.alpha, base.beta),
        };
        EndConfig { alpha, beta, ..*base }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArmRun {
    pub seed: u64,
    pub records: Vec<TrainRecord>,
    pub reports: FinalReports,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub alpha: f64,
    pub beta: f64,
    pub runs: Vec<ArmRun>,
}

impl ArmResult {
    fn mean(&self, pick: impl Fn(&FinalReports) -> Option<f64>) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.runs.iter().map(|r| pick(&r.reports)).collect();
        vals.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Seed-mean accuracy on the biased split.
    pub fn mean_biased(&self) -> Option<f64> {
        self.mean(|r| r.biased.as_ref().map(|e| e.accuracy))
    }

    /// Seed-mean accuracy on the unbiased split.
    pub fn mean_unbiased(&self) -> Option<f64> {
        self.mean(|r| r.unbiased.as_ref().map(|e| e.accuracy))
    }

    pub fn mean_conflicting(&self) -> Option<f64> {
        self.mean(|r| r.conflicting.as_ref().map(|e| e.accuracy))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmResult>,
}

impl AblationReport {
    pub fn arm(&self, arm: Arm) -> &ArmResult {
        self.arms.iter().find(|a| a.arm == arm).expect("every arm is run")
    }

    /// Fixed-width comparison table of seed-mean accuracies in percent.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut s = format!(
            "{:<20} {:>6} {:>6} {:>9} {:>9} {:>11}\n",
            "setting", "alpha", "beta", "biased", "unbiased", "conflicting"
        );
        for a in &self.arms {
            let _ = writeln!(
                s,
                "{:<20} {:>6} {:>6} {:>9} {:>9} {:>11}",
                a.arm.label(),
                a.alpha,
                a.beta,
                pct(a.mean_biased()),
                pct(a.mean_unbiased()),
                pct(a.mean_conflicting())
            );
        }
        s
    }
}

/// Trains every arm once per seed with the same data and data order.
pub fn ablate(config: &TrainConfig, train_set: &BiasedDataset, eval: EvalSets<'_>, seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Precondition("ablation needs at least one seed".into()));
    }
    let mut arms = Vec::with_capacity(Arm::ALL.len());
    for arm in Arm::ALL {
        let end = arm.end_config(&config.end);
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                end,
                seed,
                ..config.clone()
            };
            let outcome = train(&cfg, train_set, eval)?;
            runs.push(ArmRun {
                seed,
                records: outcome.records,
                reports: outcome.reports,
            });
        }
        arms.push(ArmResult {
            arm,
            alpha: end.alpha,
            beta: end.beta,
            runs,
        });
    }
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        arms,
    })
}
