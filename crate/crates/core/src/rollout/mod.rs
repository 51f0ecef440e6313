//! Optimistic simulation policy: sample a fault set from the belief, then
//! schedule repairs with full knowledge of that sample.

mod solver;
mod tour;

pub use solver::{tour_solver, AutoSolver, DpSolver, HeuristicSolver, TourSolver, TOUR_SOLVERS};
pub use tour::{heuristic_tour, optimal_tour_dp, tour_cost, TourValue};

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::belief::BeliefState;
use crate::grid::{Grid, SegmentIx, Site};
use crate::storm::{stream_rng, RepairModel};

/// Largest fault count the exact DP accepts.
pub const N_DP_MAX: usize = 15;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RolloutError {
    #[error("{faults} faults exceed the exact solver limit of {max}")]
    TooManyFaults { faults: usize, max: usize },
    #[error("visit order is not a permutation of the {expected} fault locations")]
    NotAPermutation { expected: usize },
}

/// A fully revealed future: which segments hold faults, how long each takes
/// to repair, and frozen travel times between them.
///
/// Site 0 of `travel` is the truck's start; site `1 + k` is `faults[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub start: Site,
    pub faults: Vec<SegmentIx>,
    pub repair: Vec<f64>,
    pub travel: Vec<Vec<f64>>,
    /// Customer blocks keyed by the fault locations that black them out.
    pub(crate) blocks: Vec<(Vec<usize>, u64)>,
}

impl SamplePath {
    /// Builds a path from faulted segments and their total repair minutes.
    pub fn from_faults(grid: &Grid, start: Site, faults: &BTreeMap<SegmentIx, f64>) -> Self {
        let segs: Vec<SegmentIx> = faults.keys().copied().collect();
        let repair: Vec<f64> = faults.values().copied().collect();
        let sites: Vec<Site> = std::iter::once(start).chain(segs.iter().map(|&s| Site::Segment(s))).collect();
        let travel = sites.iter().map(|&a| sites.iter().map(|&b| grid.travel(a, b)).collect()).collect();

        let slot: BTreeMap<SegmentIx, usize> = segs.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let mut blocks: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for seg in grid.segments() {
            if seg.customers == 0 {
                continue;
            }
            let key: Vec<usize> = seg.chain.iter().filter_map(|c| slot.get(c).copied()).collect();
            if !key.is_empty() {
                *blocks.entry(key).or_insert(0) += seg.customers;
            }
        }
        Self { start, faults: segs, repair, travel, blocks: blocks.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    /// Customers still out while the faults flagged in `pending` remain.
    pub fn customers_out(&self, pending: &[bool]) -> u64 {
        self.blocks.iter().filter(|(key, _)| key.iter().any(|&k| pending[k])).map(|(_, n)| n).sum()
    }
}

/// Samples faulted segments line by line from `posterior`, skipping `cleared` segments.
pub fn sample_faults(
    grid: &Grid,
    posterior: &[f64],
    cleared: &[SegmentIx],
    repairs: &RepairModel,
    rng: &mut impl Rng,
) -> BTreeMap<SegmentIx, f64> {
    // every line consumes the same draws, so paths from one seed stay coupled across beliefs
    let mut out = BTreeMap::new();
    for (s, seg) in grid.segments().iter().enumerate() {
        let s = SegmentIx(s);
        let skip = cleared.contains(&s);
        for l in &seg.lines {
            let u: f64 = rng.gen();
            let (_, minutes) = repairs.sample(rng);
            if !skip && u < posterior[l.0] {
                *out.entry(s).or_insert(0.0) += minutes;
            }
        }
    }
    out
}

pub fn draw_sample_path(
    grid: &Grid,
    belief: &BeliefState,
    start: Site,
    repairs: &RepairModel,
    seed: u64,
) -> SamplePath {
    let mut rng = stream_rng(seed, 0);
    let faults = sample_faults(grid, belief.posteriors(), &[], repairs, &mut rng);
    SamplePath::from_faults(grid, start, &faults)
}

/// One optimistic cost-to-go sample, in customer-minutes.
pub fn sim_policy_value(
    grid: &Grid,
    posterior: &[f64],
    cleared: &[SegmentIx],
    start: Site,
    repairs: &RepairModel,
    solver: &dyn TourSolver,
    rng: &mut impl Rng,
) -> f64 {
    let faults = sample_faults(grid, posterior, cleared, repairs, rng);
    if faults.is_empty() {
        return 0.0;
    }
    let path = SamplePath::from_faults(grid, start, &faults);
    solver.solve(&path).map(|t| t.outage_minutes).unwrap_or_else(|_| heuristic_tour(&path).outage_minutes)
}
