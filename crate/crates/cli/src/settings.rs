//! Run settings: an optional JSON file, then per-field flag overrides.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use stormroute::engine::RunConfig;
use stormroute::mcts::Backup;
use stormroute::policies::PolicyConfig;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub policy: PolicyConfig,
    pub run: RunConfig,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Tuning {
    /// JSON file with `policy` and `run` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub d_thr: Option<usize>,
    #[arg(long)]
    pub e_thr: Option<usize>,
    #[arg(long)]
    pub k_actions: Option<usize>,
    #[arg(long)]
    pub horizon_minutes: Option<f64>,
    #[arg(long)]
    pub mcts_seed: Option<u64>,
    #[arg(long, value_parser = parse_backup)]
    pub backup: Option<Backup>,
    /// Score UCT with raw customer-minute costs.
    #[arg(long)]
    pub absolute_costs: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Tour solver: dp, heuristic or auto.
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long)]
    pub cap_minutes: Option<f64>,
    #[arg(long)]
    pub poll_minutes: Option<f64>,
}

fn parse_backup(s: &str) -> Result<Backup, String> {
    match s {
        "running-mean" => Ok(Backup::RunningMean),
        "min" => Ok(Backup::Min),
        _ => Err(format!("unknown backup {s:?}; expected running-mean or min")),
    }
}

impl Tuning {
    pub fn apply(&self, mut s: Settings) -> Settings {
        let m = &mut s.policy.mcts;
        if let Some(v) = self.alpha {
            m.alpha = v;
        }
        if let Some(v) = self.n_iter {
            m.n_iter = v;
        }
        if self.d_thr.is_some() {
            m.d_thr = self.d_thr;
        }
        if self.e_thr.is_some() {
            m.e_thr = self.e_thr;
        }
        if let Some(v) = self.k_actions {
            m.k_actions = v;
        }
        if let Some(v) = self.horizon_minutes {
            m.horizon_minutes = v;
        }
        if let Some(v) = self.mcts_seed {
            m.seed = v;
        }
        if let Some(v) = self.backup {
            m.backup = v;
        }
        if self.absolute_costs {
            m.relative_costs = false;
        }
        if let Some(v) = self.threshold {
            s.policy.threshold = v;
        }
        if let Some(v) = &self.solver {
            s.policy.solver = v.clone();
        }
        if let Some(v) = self.max_candidates {
            s.policy.max_candidates = v;
        }
        if let Some(v) = self.cap_minutes {
            s.run.cap_minutes = v;
        }
        if let Some(v) = self.poll_minutes {
            s.run.poll_minutes = v;
        }
        s
    }
}
