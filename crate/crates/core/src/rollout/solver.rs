use super::{heuristic_tour, optimal_tour_dp, RolloutError, SamplePath, TourValue, N_DP_MAX};

/// A way of ordering the repairs of a revealed fault set.
pub trait TourSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, path: &SamplePath) -> Result<TourValue, RolloutError>;
}

pub struct DpSolver;

impl TourSolver for DpSolver {
    fn name(&self) -> &'static str {
        "dp"
    }

    fn solve(&self, path: &SamplePath) -> Result<TourValue, RolloutError> {
        optimal_tour_dp(path)
    }
}

pub struct HeuristicSolver;

impl TourSolver for HeuristicSolver {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn solve(&self, path: &SamplePath) -> Result<TourValue, RolloutError> {
        Ok(heuristic_tour(path))
    }
}

/// Exact DP up to `max_dp` faults, heuristic above.
pub struct AutoSolver {
    pub max_dp: usize,
}

impl Default for AutoSolver {
    fn default() -> Self {
        Self { max_dp: N_DP_MAX }
    }
}

impl TourSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, path: &SamplePath) -> Result<TourValue, RolloutError> {
        if path.len() <= self.max_dp.min(N_DP_MAX) {
            optimal_tour_dp(path)
        } else {
            Ok(heuristic_tour(path))
        }
    }
}

pub const TOUR_SOLVERS: &[&str] = &["auto", "dp", "heuristic"];

pub fn tour_solver(name: &str) -> Option<Box<dyn TourSolver>> {
    match name {
        "auto" => Some(Box::new(AutoSolver::default())),
        "dp" => Some(Box::new(DpSolver)),
        "heuristic" => Some(Box::new(HeuristicSolver)),
        _ => None,
    }
}
