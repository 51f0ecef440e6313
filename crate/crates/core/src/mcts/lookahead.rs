use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::{LookaheadModel, MctsConfig};
use crate::belief::BeliefState;
use crate::grid::{CircuitIx, Grid, LineIx, SegmentIx, Site};
use crate::rollout::{sim_policy_value, TourSolver};
use crate::storm::RepairModel;

/// Truck position and progress inside the lookahead. Calls stay frozen at the
/// root; the belief is the root belief conditioned on what the visits found.
#[derive(Clone, Debug, PartialEq)]
pub struct LookaheadState {
    pub at: Site,
    /// Minutes since the lookahead root.
    pub elapsed: f64,
    /// Segments visited inside the lookahead, sorted.
    pub cleared: Vec<SegmentIx>,
    /// Visited segments that held a fault, sorted.
    pub found: Vec<SegmentIx>,
    pub expected_out: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LookaheadOutcome {
    NoFault,
    /// Fault of the given repair class.
    Fault(usize),
}

#[derive(Clone, Copy, Debug, Default)]
struct SegmentView {
    fault: f64,
    expected_faults: f64,
    line_max: f64,
    clear: f64,
}

/// One circuit's belief under a set of lookahead visits.
#[derive(Debug)]
struct CircuitView {
    segments: Vec<SegmentView>,
    lines: Vec<(LineIx, f64)>,
    expected_out: f64,
}

type ViewKey = (CircuitIx, Vec<SegmentIx>, Vec<SegmentIx>);

/// The frozen-call lookahead over a grid belief.
pub struct GridLookahead<'a> {
    grid: &'a Grid,
    belief: &'a BeliefState,
    repairs: &'a RepairModel,
    solver: &'a dyn TourSolver,
    /// Position of each segment inside its circuit.
    local: Vec<usize>,
    root_views: Vec<Rc<CircuitView>>,
    root_out: f64,
    cache: RefCell<HashMap<ViewKey, Rc<CircuitView>>>,
    threshold: f64,
    k_actions: usize,
    horizon: f64,
}

impl<'a> GridLookahead<'a> {
    pub fn new(
        grid: &'a Grid,
        belief: &'a BeliefState,
        repairs: &'a RepairModel,
        solver: &'a dyn TourSolver,
        cfg: &MctsConfig,
        threshold: f64,
    ) -> Self {
        let mut local = vec![0; grid.segment_count()];
        for c in grid.circuits() {
            for (k, s) in c.topology.segments().iter().enumerate() {
                local[s.0] = k;
            }
        }
        let mut me = Self {
            grid,
            belief,
            repairs,
            solver,
            local,
            root_views: Vec::new(),
            root_out: 0.0,
            cache: RefCell::new(HashMap::new()),
            threshold,
            k_actions: cfg.k_actions,
            horizon: cfg.horizon_minutes,
        };
        me.root_views = (0..grid.circuits().len()).map(|c| Rc::new(me.build_view(CircuitIx(c), &[], &[]))).collect();
        me.root_out = me.root_views.iter().map(|v| v.expected_out).sum();
        me
    }

    pub fn belief(&self) -> &BeliefState {
        self.belief
    }

    pub fn root(&self, at: Site) -> LookaheadState {
        LookaheadState { at, elapsed: 0.0, cleared: Vec::new(), found: Vec::new(), expected_out: self.root_out }
    }

    fn build_view(&self, c: CircuitIx, clear: &[SegmentIx], found: &[SegmentIx]) -> CircuitView {
        let grid = self.grid;
        let segs = grid.circuit(c).topology.segments();
        let mut post: HashMap<LineIx, f64> = grid.circuit(c).lines().map(|l| (l, self.belief.posterior(l))).collect();
        let mut fault: Vec<Option<f64>> =
            segs.iter().map(|s| self.belief.joint(c).map(|_| self.belief.segment_fault_probability(*s))).collect();
        let clean: Vec<SegmentIx> = clear.iter().filter(|s| found.binary_search(s).is_err()).copied().collect();
        if !clear.is_empty() || !found.is_empty() {
            if let Some(m) = self.belief.joint(c).and_then(|j| j.condition(&clean, found).map(|m| (j, m))) {
                let (j, m) = m;
                post.values_mut().for_each(|p| *p = 0.0);
                for (l, p) in j.candidates.iter().zip(&m.lines) {
                    post.insert(*l, *p);
                }
                for (s, q) in m.segments {
                    fault[self.local[s.0]] = Some(q);
                }
            }
        }
        for s in clear {
            for l in &grid.segment(*s).lines {
                post.insert(*l, 0.0);
            }
            fault[self.local[s.0]] = Some(0.0);
        }
        let segments: Vec<SegmentView> = segs
            .iter()
            .zip(&fault)
            .map(|(s, q)| {
                let ps: Vec<f64> = grid.segment(*s).lines.iter().map(|l| post[l]).collect();
                let clear: f64 = ps.iter().map(|p| 1.0 - p).product();
                SegmentView {
                    fault: q.unwrap_or(1.0 - clear),
                    expected_faults: ps.iter().sum(),
                    line_max: ps.iter().copied().fold(0.0, f64::max),
                    clear,
                }
            })
            .collect();
        let expected_out = segs
            .iter()
            .map(|s| {
                let seg = grid.segment(*s);
                let powered: f64 = seg.chain.iter().map(|k| segments[self.local[k.0]].clear).product();
                (1.0 - powered) * seg.customers as f64
            })
            .sum();
        let mut lines: Vec<(LineIx, f64)> = post.into_iter().collect();
        lines.sort_by_key(|l| l.0);
        CircuitView { segments, lines, expected_out }
    }

    /// Belief of circuit `c` under the visits made in `state`.
    fn view(&self, state: &LookaheadState, c: CircuitIx) -> Rc<CircuitView> {
        let mine = |v: &[SegmentIx]| -> Vec<SegmentIx> {
            v.iter().filter(|s| self.grid.segment(**s).circuit == c).copied().collect()
        };
        let clear = mine(&state.cleared);
        if clear.is_empty() {
            return self.root_views[c.0].clone();
        }
        let key = (c, clear, mine(&state.found));
        if let Some(v) = self.cache.borrow().get(&key) {
            return v.clone();
        }
        let v = Rc::new(self.build_view(c, &key.1, &key.2));
        self.cache.borrow_mut().insert(key, v.clone());
        v
    }

    fn segment_view(&self, state: &LookaheadState, s: SegmentIx) -> SegmentView {
        self.view(state, self.grid.segment(s).circuit).segments[self.local[s.0]]
    }

    /// Probability that `s` holds a fault given the visits made in `state`.
    pub fn fault_probability(&self, state: &LookaheadState, s: SegmentIx) -> f64 {
        self.segment_view(state, s).fault
    }

    /// Line posteriors given the visits made in `state`.
    pub fn posteriors(&self, state: &LookaheadState) -> Vec<f64> {
        let mut post = self.belief.posteriors().to_vec();
        let mut touched: Vec<CircuitIx> = state.cleared.iter().map(|s| self.grid.segment(*s).circuit).collect();
        touched.sort();
        touched.dedup();
        for c in touched {
            for &(l, p) in &self.view(state, c).lines {
                post[l.0] = p;
            }
        }
        post
    }

    /// Outcome distribution of visiting `s`: no fault, or faults whose repair
    /// time follows each class, scaled by the expected number of faulted lines.
    pub fn outcome_space(&self, state: &LookaheadState, s: SegmentIx) -> Vec<(LookaheadOutcome, f64)> {
        let q = self.fault_probability(state, s);
        let mut out = Vec::with_capacity(1 + self.repairs.classes.len());
        if q < 1.0 {
            out.push((LookaheadOutcome::NoFault, 1.0 - q));
        }
        if q > 0.0 {
            for (k, c) in self.repairs.classes.iter().enumerate() {
                out.push((LookaheadOutcome::Fault(k), q * c.probability));
            }
        }
        out
    }

    fn within_horizon(&self, from: f64, to: f64) -> f64 {
        (to.min(self.horizon) - from.min(self.horizon)).max(0.0)
    }
}

fn insert_sorted(v: &[SegmentIx], s: SegmentIx) -> Vec<SegmentIx> {
    let mut out = v.to_vec();
    if let Err(at) = out.binary_search(&s) {
        out.insert(at, s);
    }
    out
}

impl LookaheadModel for GridLookahead<'_> {
    type State = LookaheadState;
    type Action = SegmentIx;
    type Outcome = LookaheadOutcome;

    /// The `k_actions` nearest segments whose largest line posterior reaches the threshold.
    fn actions(&self, state: &LookaheadState) -> Vec<SegmentIx> {
        let mut cand: Vec<(f64, SegmentIx)> = Vec::new();
        for c in 0..self.grid.circuits().len() {
            let view = self.view(state, CircuitIx(c));
            for &s in self.grid.circuit(CircuitIx(c)).topology.segments() {
                if view.segments[self.local[s.0]].line_max >= self.threshold && state.cleared.binary_search(&s).is_err()
                {
                    cand.push((self.grid.travel(state.at, Site::Segment(s)), s));
                }
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<SegmentIx> = cand.into_iter().take(self.k_actions).map(|c| c.1).collect();
        out.sort();
        out
    }

    fn is_terminal(&self, state: &LookaheadState) -> bool {
        state.elapsed >= self.horizon || self.actions(state).is_empty()
    }

    fn decision_cost(&self, state: &LookaheadState, action: SegmentIx) -> f64 {
        let travel = self.grid.travel(state.at, Site::Segment(action));
        state.expected_out * self.within_horizon(state.elapsed, state.elapsed + travel)
    }

    fn outcomes(&self, state: &LookaheadState, action: SegmentIx) -> Vec<(LookaheadOutcome, f64)> {
        self.outcome_space(state, action)
    }

    fn transition(
        &self,
        state: &LookaheadState,
        action: SegmentIx,
        outcome: LookaheadOutcome,
    ) -> (LookaheadState, f64) {
        let arrive = state.elapsed + self.grid.travel(state.at, Site::Segment(action));
        let view = self.segment_view(state, action);
        let (dwell, found) = match outcome {
            LookaheadOutcome::NoFault => (0.0, state.found.clone()),
            LookaheadOutcome::Fault(k) => {
                let lines = if view.fault > 0.0 { (view.expected_faults / view.fault).max(1.0) } else { 1.0 };
                (self.repairs.classes[k].mean_minutes() * lines, insert_sorted(&state.found, action))
            }
        };
        let edge = state.expected_out * self.within_horizon(arrive, arrive + dwell);
        let c = self.grid.segment(action).circuit;
        let mut next = LookaheadState {
            at: Site::Segment(action),
            elapsed: arrive + dwell,
            cleared: insert_sorted(&state.cleared, action),
            found,
            expected_out: 0.0,
        };
        next.expected_out = state.expected_out - self.view(state, c).expected_out + self.view(&next, c).expected_out;
        (next, edge)
    }

    fn evaluate(&self, state: &LookaheadState, rng: &mut ChaCha8Rng) -> f64 {
        let post = self.posteriors(state);
        sim_policy_value(self.grid, &post, &state.cleared, state.at, self.repairs, self.solver, rng)
    }
}
