//! Optimistic Monte Carlo tree search over a stochastic lookahead model.
//!
//! The tree alternates pre-decision nodes (a state awaiting an action) and
//! post-decision nodes (an action taken, outcome not yet revealed). Unexplored
//! actions are expanded optimistically by scoring one sampled outcome of each
//! with the leaf evaluator; outcomes are drawn under a uniform proposal.

mod lookahead;
mod tree;

pub use lookahead::{GridLookahead, LookaheadOutcome, LookaheadState};
pub use tree::{importance_sample_value, select_uct_score, PostNode, PreNode, SearchTree, TreeDump};

use std::fmt::Debug;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storm::stream_rng;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MctsError {
    #[error("no candidate actions at the root")]
    NoCandidateActions,
}

/// A finite-outcome lookahead the search can plan over. Costs are minimised.
pub trait LookaheadModel {
    type State: Clone;
    type Action: Copy + Ord + Debug;
    type Outcome: Copy + Debug;

    /// Available actions, in ascending order.
    fn actions(&self, state: &Self::State) -> Vec<Self::Action>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Cost charged as soon as `action` is chosen.
    fn decision_cost(&self, state: &Self::State, action: Self::Action) -> f64;

    /// Every outcome with its probability; probabilities sum to one.
    fn outcomes(&self, state: &Self::State, action: Self::Action) -> Vec<(Self::Outcome, f64)>;

    /// Next state and the cost incurred while the outcome plays out.
    fn transition(&self, state: &Self::State, action: Self::Action, outcome: Self::Outcome) -> (Self::State, f64);

    /// Cost-to-go estimate for a fresh leaf.
    fn evaluate(&self, state: &Self::State, rng: &mut ChaCha8Rng) -> f64;

    fn terminal_value(&self, _state: &Self::State) -> f64 {
        0.0
    }
}

/// How pre-decision values combine their children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backup {
    /// Incremental average of every return seen through the node.
    #[default]
    RunningMean,
    /// Best explored action, giving exact expectimax on fully expanded trees.
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MctsConfig {
    pub alpha: f64,
    pub n_iter: usize,
    /// Explored-action count below which nodes expand; `None` is `min(5, |actions|)`.
    pub d_thr: Option<usize>,
    /// Explored-outcome count below which new outcomes expand; `None` is the full width.
    pub e_thr: Option<usize>,
    pub k_actions: usize,
    pub horizon_minutes: f64,
    pub seed: u64,
    pub backup: Backup,
    /// Measure UCT costs relative to the node's own value, so `alpha` has no units.
    pub relative_costs: bool,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            alpha: 2.2,
            n_iter: 4000,
            d_thr: None,
            e_thr: None,
            k_actions: 10,
            horizon_minutes: 24.0 * 60.0,
            seed: 0,
            backup: Backup::RunningMean,
            relative_costs: true,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err("alpha must be positive".into());
        }
        if self.n_iter < 1 {
            return Err("n_iter must be at least 1".into());
        }
        if self.d_thr == Some(0) || self.e_thr == Some(0) {
            return Err("expansion thresholds must be at least 1".into());
        }
        if self.k_actions < 1 {
            return Err("k_actions must be at least 1".into());
        }
        if !(self.horizon_minutes > 0.0) {
            return Err("horizon_minutes must be positive".into());
        }
        Ok(())
    }
}

pub struct SearchResult<M: LookaheadModel> {
    pub action: M::Action,
    /// `(action, immediate cost + post-decision value, visits)` per explored root action.
    pub root_values: Vec<(M::Action, f64, u64)>,
    pub tree: SearchTree<M>,
}

impl<M: LookaheadModel> SearchResult<M> {
    pub fn root_value(&self) -> f64 {
        self.root_values.iter().find(|r| r.0 == self.action).map(|r| r.1).unwrap_or(0.0)
    }
}

pub fn mcts_search<M: LookaheadModel>(
    model: &M,
    root: M::State,
    cfg: &MctsConfig,
) -> Result<SearchResult<M>, MctsError> {
    let actions = model.actions(&root);
    if actions.is_empty() {
        return Err(MctsError::NoCandidateActions);
    }
    let mut tree = SearchTree::new(model, root);
    if actions.len() == 1 {
        return Ok(SearchResult { action: actions[0], root_values: Vec::new(), tree });
    }
    let mut rng = stream_rng(cfg.seed, 0);
    for _ in 0..cfg.n_iter {
        tree.iterate(model, cfg, &mut rng);
    }
    let root_values = tree.root_action_values();
    let action = root_values
        .iter()
        .fold(None, |best: Option<&(M::Action, f64, u64)>, r| match best {
            Some(b) if b.1 <= r.1 => Some(b),
            _ => Some(r),
        })
        .map(|r| r.0)
        .expect("root was expanded");
    Ok(SearchResult { action, root_values, tree })
}

/// Exhaustive expectimax cost-to-go; exponential, for small models only.
pub fn expectimax<M: LookaheadModel>(model: &M, state: &M::State) -> f64 {
    if model.is_terminal(state) {
        return model.terminal_value(state);
    }
    model
        .actions(state)
        .into_iter()
        .map(|a| model.decision_cost(state, a) + expected_outcome_cost(model, state, a))
        .fold(f64::INFINITY, f64::min)
}

/// Exact post-decision value of taking `action` in `state`.
pub fn expected_outcome_cost<M: LookaheadModel>(model: &M, state: &M::State, action: M::Action) -> f64 {
    model
        .outcomes(state, action)
        .into_iter()
        .map(|(o, p)| {
            let (next, edge) = model.transition(state, action, o);
            p * (edge + expectimax(model, &next))
        })
        .sum()
}

/// Root action of exhaustive expectimax, ties by ascending action.
pub fn expectimax_action<M: LookaheadModel>(model: &M, state: &M::State) -> Option<(M::Action, f64)> {
    let mut best: Option<(M::Action, f64)> = None;
    for a in model.actions(state) {
        let v = model.decision_cost(state, a) + expected_outcome_cost(model, state, a);
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((a, v));
        }
    }
    best
}
