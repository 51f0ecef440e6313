use std::collections::VecDeque;

use super::Policy;
use crate::engine::{Action, Decide, DecisionContext, EpisodeMetrics};
use crate::grid::{Grid, SegmentIx, Site};
use crate::rollout::{tour_solver, SamplePath, TourSolver};
use crate::storm::Scenario;
use crate::Error;

/// Follows the best tour over the true faults, known from the start.
pub struct OraclePolicy {
    solver: Box<dyn TourSolver>,
    route: Option<VecDeque<SegmentIx>>,
}

impl OraclePolicy {
    pub fn new(solver: &str) -> Result<Self, Error> {
        let solver = tour_solver(solver).ok_or_else(|| Error::Unknown {
            kind: "tour solver",
            name: solver.to_string(),
            known: crate::rollout::TOUR_SOLVERS.join(", "),
        })?;
        Ok(Self { solver, route: None })
    }
}

fn true_path(grid: &Grid, scenario: &Scenario) -> SamplePath {
    SamplePath::from_faults(grid, Site::Depot, &scenario.faulted_segments(grid))
}

impl Decide for OraclePolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Action, Error> {
        if self.route.is_none() {
            let path = true_path(ctx.grid, ctx.scenario);
            let tour = self.solver.solve(&path)?;
            self.route = Some(tour.tour.iter().map(|&k| path.faults[k]).collect());
        }
        Ok(match self.route.as_mut().and_then(|r| r.pop_front()) {
            Some(s) => Action::Visit(s),
            None => Action::Stop,
        })
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Outage of the best tour over the revealed faults, from the depot.
pub fn posterior_optimal_value(
    grid: &Grid,
    scenario: &Scenario,
    solver: &dyn TourSolver,
) -> Result<EpisodeMetrics, Error> {
    let path = true_path(grid, scenario);
    let tour = solver.solve(&path)?;
    let mut clock = 0.0;
    let mut at = 0;
    for &k in &tour.tour {
        clock += path.travel[at][k + 1] + path.repair[k];
        at = k + 1;
    }
    Ok(EpisodeMetrics {
        outage_hours: tour.outage_minutes / 60.0,
        restore_time_minutes: Some(clock),
        stop_time_minutes: clock,
        unrepaired_faults: 0,
        customers_out_at_stop: 0,
    })
}
