use super::{idle, Policy, PolicyConfig};
use crate::belief::{candidate_segments, posterior_update, CallModel};
use crate::engine::{Action, Decide, DecisionContext};
use crate::mcts::{mcts_search, GridLookahead, TreeDump};
use crate::rollout::{tour_solver, TourSolver};
use crate::Error;

/// Refreshes the belief at every epoch and asks the tree search where to go.
pub struct LookaheadPolicy {
    cfg: PolicyConfig,
    solver: Box<dyn TourSolver>,
    keep_tree: bool,
    pub last_tree: Option<TreeDump>,
}

impl LookaheadPolicy {
    pub fn new(cfg: PolicyConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let solver = tour_solver(&cfg.solver).expect("validated");
        Ok(Self { cfg, solver, keep_tree: false, last_tree: None })
    }

    /// Keep a dump of the most recent search tree.
    pub fn keep_tree(mut self) -> Self {
        self.keep_tree = true;
        self
    }
}

/// Per-epoch search seed.
fn epoch_seed(base: u64, epoch: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ (epoch as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

impl Decide for LookaheadPolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Action, Error> {
        let scenario = ctx.scenario;
        // dispatch on the first call, or once no more calls can arrive
        if ctx.calls.total() == 0
            && ctx.observations.visited().is_empty()
            && ctx.clock < scenario.realization.call_window
        {
            return Ok(idle(ctx));
        }
        let model = CallModel { rho: scenario.config.rho, window: scenario.realization.call_window, now: ctx.clock };
        let belief =
            posterior_update(ctx.grid, &scenario.priors, ctx.calls, ctx.observations, model, self.cfg.max_candidates)?;
        if candidate_segments(ctx.grid, &belief, self.cfg.threshold).is_empty() {
            return Ok(idle(ctx));
        }
        let mut mcts = self.cfg.mcts.clone();
        mcts.seed = epoch_seed(scenario.config.seed ^ self.cfg.mcts.seed, ctx.epoch);
        let look = GridLookahead::new(
            ctx.grid,
            &belief,
            &scenario.config.repair_classes,
            self.solver.as_ref(),
            &mcts,
            self.cfg.threshold,
        );
        let result = mcts_search(&look, look.root(ctx.at), &mcts)?;
        if self.keep_tree {
            self.last_tree = Some(result.tree.dump());
        }
        Ok(Action::Visit(result.action))
    }
}

impl Policy for LookaheadPolicy {
    fn name(&self) -> &'static str {
        "mcts"
    }
}
