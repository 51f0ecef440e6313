//! Paired-seed sweeps over call-in probability, search budget and policy.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EpisodeMetrics, RunConfig};
use crate::grid::Grid;
use crate::policies::{make_policy, PolicyConfig};
use crate::storm::{Scenario, ScenarioConfig};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Grid file, relative to the plan file.
    pub grid: PathBuf,
    /// Scenario template; `seed` and `rho` are overridden per cell.
    pub scenario: ScenarioConfig,
    pub rhos: Vec<f64>,
    /// Search budgets; only the lookahead policy uses them.
    pub n_iters: Vec<usize>,
    pub seeds: SeedSpec,
    pub policies: Vec<String>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Loads a plan and resolves its grid path against the plan's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let mut plan = Self::from_json(&std::fs::read_to_string(path)?)?;
        if plan.grid.is_relative() {
            if let Some(dir) = path.parent() {
                plan.grid = dir.join(&plan.grid);
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rhos.is_empty() || self.policies.is_empty() {
            return bad("plan needs at least one rho and one policy");
        }
        if self.policies.iter().any(|p| p == "mcts") && self.n_iters.is_empty() {
            return bad("the mcts policy needs at least one n_iters entry");
        }
        if self.rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("every rho must lie in [0, 1]");
        }
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            return bad("plan needs at least one seed");
        }
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return bad("seeds must be unique");
        }
        for p in &self.policies {
            make_policy(p, &self.policy)?;
        }
        self.scenario.validate().map_err(Error::Config)?;
        self.policy.validate()
    }

    /// Every `(policy, rho, n_iter, seed)` cell in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for policy in &self.policies {
            let budgets: Vec<usize> = if policy == "mcts" { self.n_iters.clone() } else { vec![0] };
            for &rho in &self.rhos {
                for &n_iter in &budgets {
                    for seed in self.seeds.seeds() {
                        out.push(Cell { policy: policy.clone(), rho, n_iter, seed });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub policy: String,
    pub rho: f64,
    pub n_iter: usize,
    pub seed: u64,
}

/// One metrics row per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub policy: String,
    pub rho: f64,
    pub n_iter: usize,
    pub outage_hours: f64,
    pub restore_min: Option<f64>,
    pub stop_min: f64,
    pub unrepaired: usize,
    pub customers_out_at_stop: u64,
}

impl EpisodeRow {
    pub fn new(cell: &Cell, m: &EpisodeMetrics) -> Self {
        Self {
            seed: cell.seed,
            policy: cell.policy.clone(),
            rho: cell.rho,
            n_iter: cell.n_iter,
            outage_hours: m.outage_hours,
            restore_min: m.restore_time_minutes,
            stop_min: m.stop_time_minutes,
            unrepaired: m.unrepaired_faults,
            customers_out_at_stop: m.customers_out_at_stop,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailedCell {
    pub policy: String,
    pub rho: f64,
    pub n_iter: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<EpisodeRow>,
    pub failed: Vec<FailedCell>,
}

/// Runs one episode of `cell`.
pub fn run_cell(grid: &Grid, plan: &ExperimentPlan, cell: &Cell) -> Result<EpisodeMetrics, Error> {
    let scenario = Scenario::with_seed_and_rho(grid, &plan.scenario, cell.seed, cell.rho);
    let mut cfg = plan.policy.clone();
    cfg.mcts.n_iter = cell.n_iter.max(1);
    let mut policy = make_policy(&cell.policy, &cfg)?;
    Ok(crate::engine::run_episode(grid, &scenario, policy.as_mut(), &plan.run)?.0)
}

/// Runs every cell concurrently; rows come back in canonical order.
pub fn sweep(grid: &Grid, plan: &ExperimentPlan) -> SweepResult {
    let cells = plan.cells();
    log::debug!("sweeping {} cells", cells.len());
    let results: Vec<(Cell, Result<EpisodeMetrics, Error>)> = cells
        .into_par_iter()
        .map(|c| {
            let r = run_cell(grid, plan, &c);
            (c, r)
        })
        .collect();
    let mut out = SweepResult::default();
    for (cell, r) in results {
        match r {
            Ok(m) => out.rows.push(EpisodeRow::new(&cell, &m)),
            Err(e) => {
                log::warn!(
                    "cell {} rho={} n_iter={} seed={} failed: {e}",
                    cell.policy,
                    cell.rho,
                    cell.n_iter,
                    cell.seed
                );
                out.failed.push(FailedCell {
                    policy: cell.policy,
                    rho: cell.rho,
                    n_iter: cell.n_iter,
                    seed: cell.seed,
                    error: e.to_string(),
                })
            }
        }
    }
    let order: BTreeMap<&str, usize> = plan.policies.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let key = |p: &str| order.get(p).copied().unwrap_or(usize::MAX);
    out.rows.sort_by(|a, b| {
        key(&a.policy)
            .cmp(&key(&b.policy))
            .then(a.rho.total_cmp(&b.rho))
            .then(a.n_iter.cmp(&b.n_iter))
            .then(a.seed.cmp(&b.seed))
    });
    out
}

pub fn write_rows_csv<W: Write>(rows: &[EpisodeRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error of one metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var =
            if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, stderr: (var / n).sqrt() }
    }
}

/// Per-cell summary row in the shape of a results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub policy: String,
    pub rho: f64,
    pub n_iter: usize,
    pub episodes: usize,
    pub outage_hours: Stat,
    /// Over episodes where every fault was repaired.
    pub restore_hours: Stat,
    pub stop_hours: Stat,
    pub unrepaired_faults: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
    pub failed: Vec<FailedCell>,
}

pub fn summarize(result: &SweepResult) -> SweepSummary {
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut i = 0;
    let rows = &result.rows;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len()
            && rows[j].policy == rows[i].policy
            && rows[j].rho == rows[i].rho
            && rows[j].n_iter == rows[i].n_iter
        {
            j += 1;
        }
        let group = &rows[i..j];
        let pick = |f: &dyn Fn(&EpisodeRow) -> Option<f64>| -> Vec<f64> { group.iter().filter_map(f).collect() };
        cells.push(CellSummary {
            policy: group[0].policy.clone(),
            rho: group[0].rho,
            n_iter: group[0].n_iter,
            episodes: group.len(),
            outage_hours: Stat::of(&pick(&|r| Some(r.outage_hours))),
            restore_hours: Stat::of(&pick(&|r| r.restore_min.map(|m| m / 60.0))),
            stop_hours: Stat::of(&pick(&|r| Some(r.stop_min / 60.0))),
            unrepaired_faults: Stat::of(&pick(&|r| Some(r.unrepaired as f64))),
        });
        i = j;
    }
    SweepSummary { cells, failed: result.failed.clone() }
}

/// Column descriptions for plotting the metrics CSV with gnuplot.
pub fn gnuplot_stub(csv_name: &str) -> String {
    format!(
        "# columns of {csv_name}: 1 seed, 2 policy, 3 rho, 4 n_iter, 5 outage_hours, 6 restore_min, \
         7 stop_min, 8 unrepaired, 9 customers_out_at_stop\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale x\n\
         plot '{csv_name}' using 3:5 with points title 'outage hours vs rho'\n"
    )
}
