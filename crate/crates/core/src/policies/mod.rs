//! Episode-level routing policies, registered by name.

mod escalation;
mod lookahead;
mod oracle;

pub use escalation::{escalation_plan, EscalationPolicy};
pub use lookahead::LookaheadPolicy;
pub use oracle::{posterior_optimal_value, OraclePolicy};

use serde::{Deserialize, Serialize};

use crate::belief::MAX_CANDIDATES;
use crate::engine::{run_episode, Action, Decide, DecisionContext, EpisodeMetrics, PolicyTrace, RunConfig};
use crate::grid::Grid;
use crate::mcts::MctsConfig;
use crate::storm::Scenario;
use crate::Error;

pub trait Policy: Decide + Send {
    fn name(&self) -> &'static str;
}

/// Settings shared by every policy; each reads what it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub mcts: MctsConfig,
    /// Segments below this fault posterior are not worth visiting.
    pub threshold: f64,
    /// Tour solver used by rollouts and the oracle.
    pub solver: String,
    pub max_candidates: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { mcts: MctsConfig::default(), threshold: 0.01, solver: "auto".into(), max_candidates: MAX_CANDIDATES }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.mcts.validate().map_err(Error::Config)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        crate::rollout::tour_solver(&self.solver).ok_or_else(|| Error::Unknown {
            kind: "tour solver",
            name: self.solver.clone(),
            known: crate::rollout::TOUR_SOLVERS.join(", "),
        })?;
        Ok(())
    }
}

struct PolicyEntry {
    name: &'static str,
    build: fn(&PolicyConfig) -> Result<Box<dyn Policy>, Error>,
}

const REGISTRY: &[PolicyEntry] = &[
    PolicyEntry { name: "mcts", build: |cfg| Ok(Box::new(LookaheadPolicy::new(cfg.clone())?)) },
    PolicyEntry { name: "escalation", build: |_| Ok(Box::new(EscalationPolicy)) },
    PolicyEntry { name: "oracle", build: |cfg| Ok(Box::new(OraclePolicy::new(&cfg.solver)?)) },
];

pub fn policy_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.name).collect()
}

/// A fresh policy instance for one episode.
pub fn make_policy(name: &str, cfg: &PolicyConfig) -> Result<Box<dyn Policy>, Error> {
    let entry = REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::Unknown {
        kind: "policy",
        name: name.to_string(),
        known: policy_names().join(", "),
    })?;
    (entry.build)(cfg)
}

pub fn run_policy(
    name: &str,
    grid: &Grid,
    scenario: &Scenario,
    cfg: &PolicyConfig,
    run: &RunConfig,
) -> Result<(EpisodeMetrics, PolicyTrace), Error> {
    let mut policy = make_policy(name, cfg)?;
    run_episode(grid, scenario, policy.as_mut(), run)
}

/// Wait for more calls while they can still arrive, otherwise stop.
fn idle(ctx: &DecisionContext) -> Action {
    if ctx.clock < ctx.scenario.realization.call_window {
        Action::Wait((ctx.clock + ctx.run.poll_minutes).min(ctx.scenario.realization.call_window))
    } else {
        Action::Stop
    }
}
