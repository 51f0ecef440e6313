//! Exact Bayesian posteriors over line faults.
//!
//! Per circuit, every combination of *candidate* lines (prior above zero and
//! not yet inspected) is enumerated and weighted by its prior times the
//! likelihood of the calls received so far. Inspected lines are known: a
//! cleared line never faulted, a repaired line did fault and its customers
//! regained power at a recorded time.
//!
//! Call model: each customer in outage calls exactly once with probability
//! `rho`, after a delay uniform on `[0, window]` minutes from the storm,
//! provided their power is still out when they dial. Powered customers never
//! call. With `now >= window` and no repairs this reduces to a binomial
//! `Binomial(n_k, rho)` count per blacked-out node and zero calls elsewhere.

use serde::Serialize;
use thiserror::Error;

use crate::grid::{CircuitIx, Grid, LineIx, NodeIx, SegmentIx};
use crate::storm::{CallVector, PriorVector};

/// Default cap on candidate lines enumerated per circuit (2^20 combinations).
pub const MAX_CANDIDATES: usize = 20;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BeliefError {
    #[error("circuit {circuit} has {count} candidate lines, above the enumeration cap of {cap}")]
    TooManyCandidates { circuit: u64, count: usize, cap: usize },
    #[error("calls on circuit {circuit} are impossible under every fault combination")]
    ZeroEvidence { circuit: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LineStatus {
    Unknown,
    /// Inspected, no fault.
    Clear,
    /// Found faulted and repaired; the line's device could close at `done_at`.
    Repaired {
        done_at: f64,
    },
}

/// What the truck has seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    status: Vec<LineStatus>,
    visited: Vec<SegmentIx>,
}

impl Observations {
    pub fn new(grid: &Grid) -> Self {
        Self { status: vec![LineStatus::Unknown; grid.node_count()], visited: Vec::new() }
    }

    /// Records an inspection of `seg`: `found` lines were faulted and all
    /// repairs were complete at `done_at`; the rest are clear.
    pub fn record_visit(&mut self, grid: &Grid, seg: SegmentIx, found: &[LineIx], done_at: f64) {
        for &l in &grid.segment(seg).lines {
            self.status[l.0] = if found.contains(&l) { LineStatus::Repaired { done_at } } else { LineStatus::Clear };
        }
        if !self.visited.contains(&seg) {
            self.visited.push(seg);
        }
    }

    pub fn status(&self, l: LineIx) -> LineStatus {
        self.status[l.0]
    }

    pub fn is_known(&self, l: LineIx) -> bool {
        self.status[l.0] != LineStatus::Unknown
    }

    pub fn visited(&self) -> &[SegmentIx] {
        &self.visited
    }

    pub fn is_visited(&self, s: SegmentIx) -> bool {
        self.visited.contains(&s)
    }
}

/// Probability model for the calls observed by time `now`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CallModel {
    pub rho: f64,
    pub window: f64,
    pub now: f64,
}

impl CallModel {
    /// All calls that will ever arrive have arrived.
    pub fn settled(rho: f64) -> Self {
        Self { rho, window: 1.0, now: f64::INFINITY }
    }

    /// Probability that a customer blacked out until `until` has called by `now`.
    pub fn p_called(&self, until: f64) -> f64 {
        let t = until.min(self.now);
        if t <= 0.0 {
            return 0.0;
        }
        self.rho * (t / self.window).min(1.0)
    }
}

pub(crate) fn ln_binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let mut ln_choose = 0.0;
    for i in 1..=k {
        ln_choose += ((n - k + i) as f64).ln() - (i as f64).ln();
    }
    ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

/// Likelihood of `calls` on `circuit` when exactly `combo` is faulted and every call has settled.
pub fn call_likelihood(grid: &Grid, circuit: CircuitIx, calls: &CallVector, combo: &[LineIx], rho: f64) -> f64 {
    let faulted = grid.faulted_segments(combo);
    let mut ln = 0.0;
    for n in grid.circuit(circuit).lines() {
        let node = grid.node(n);
        let h = calls.get(n);
        let seg = grid.segment_of_line(n).expect("lines have segments");
        let p = if grid.segment_out(seg, &faulted) { rho } else { 0.0 };
        ln += ln_binomial_pmf(node.customers, h, p);
    }
    ln.exp()
}

#[derive(Clone, Debug)]
pub struct BeliefState {
    posterior: Vec<f64>,
    /// Joint probability that each segment holds at least one fault.
    segment_fault: Vec<f64>,
    /// Per-circuit joint, absent for beliefs built from bare marginals.
    joint: Option<Vec<CircuitJoint>>,
    priors: PriorVector,
    pub calls: CallVector,
    pub observations: Observations,
    pub model: CallModel,
}

impl BeliefState {
    /// A belief with explicitly given posteriors, for planning experiments and tests.
    pub fn from_posteriors(grid: &Grid, posterior: Vec<f64>) -> Self {
        let priors = PriorVector::from_values(grid, posterior.clone());
        let segment_fault = segment_clear_probabilities(grid, priors.values()).into_iter().map(|z| 1.0 - z).collect();
        Self {
            posterior: priors.values().to_vec(),
            segment_fault,
            joint: None,
            priors,
            calls: CallVector::zeros(grid.node_count()),
            observations: Observations::new(grid),
            model: CallModel::settled(0.0),
        }
    }

    /// Joint over the candidates of circuit `c`, when the belief came from enumeration.
    pub fn joint(&self, c: CircuitIx) -> Option<&CircuitJoint> {
        self.joint.as_ref().map(|j| &j[c.0])
    }

    pub fn posterior(&self, l: LineIx) -> f64 {
        self.posterior[l.0]
    }

    pub fn posteriors(&self) -> &[f64] {
        &self.posterior
    }

    pub fn priors(&self) -> &PriorVector {
        &self.priors
    }

    /// Probability that segment `s` holds at least one fault, from the joint posterior.
    pub fn segment_fault_probability(&self, s: SegmentIx) -> f64 {
        self.segment_fault[s.0]
    }

    /// Expected number of faulted lines in segment `s`.
    pub fn expected_faults(&self, grid: &Grid, s: SegmentIx) -> f64 {
        grid.segment(s).lines.iter().map(|l| self.posterior[l.0]).sum()
    }

    /// Segment fault posterior, taken as the largest member-line posterior.
    pub fn segment_posterior(&self, grid: &Grid, s: SegmentIx) -> f64 {
        segment_posterior(grid, &self.posterior, s)
    }

    pub fn dump(&self, grid: &Grid) -> BeliefDump {
        let lines = grid
            .lines()
            .map(|l| LineDump {
                line: grid.node(l).id,
                circuit: grid.circuit(grid.node(l).circuit).id,
                segment: grid.segment_of_line(l).map(|s| s.0).unwrap_or(0),
                prior: self.priors.get(l),
                posterior: self.posterior[l.0],
                cleared: self.observations.is_known(l),
            })
            .collect();
        BeliefDump {
            clock_minutes: if self.model.now.is_finite() { Some(self.model.now) } else { None },
            rho: self.model.rho,
            total_calls: self.calls.total(),
            expected_customers_out: expected_customers_out(grid, self),
            lines,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LineDump {
    pub line: u64,
    pub circuit: u64,
    pub segment: usize,
    pub prior: f64,
    pub posterior: f64,
    pub cleared: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BeliefDump {
    pub clock_minutes: Option<f64>,
    pub rho: f64,
    pub total_calls: u64,
    pub expected_customers_out: f64,
    pub lines: Vec<LineDump>,
}

pub fn segment_posterior(grid: &Grid, posterior: &[f64], s: SegmentIx) -> f64 {
    grid.segment(s).lines.iter().map(|l| posterior[l.0]).fold(0.0, f64::max)
}

/// Full posterior refresh from priors, cumulative calls and inspections.
pub fn posterior_update(
    grid: &Grid,
    priors: &PriorVector,
    calls: &CallVector,
    observations: &Observations,
    model: CallModel,
    max_candidates: usize,
) -> Result<BeliefState, BeliefError> {
    let mut posterior = vec![0.0; grid.node_count()];
    let mut segment_fault = vec![0.0; grid.segment_count()];
    let mut joint = Vec::with_capacity(grid.circuits().len());
    for c in 0..grid.circuits().len() {
        let j = circuit_joint(grid, CircuitIx(c), priors, calls, observations, model, max_candidates)?;
        j.write(grid, &mut posterior, &mut segment_fault);
        joint.push(j);
    }
    Ok(BeliefState {
        posterior,
        segment_fault,
        joint: Some(joint),
        priors: priors.clone(),
        calls: calls.clone(),
        observations: observations.clone(),
        model,
    })
}

#[allow(clippy::too_many_arguments)]
fn circuit_joint(
    grid: &Grid,
    circuit: CircuitIx,
    priors: &PriorVector,
    calls: &CallVector,
    obs: &Observations,
    model: CallModel,
    max_candidates: usize,
) -> Result<CircuitJoint, BeliefError> {
    let cdef = grid.circuit(circuit);
    let candidates: Vec<LineIx> = cdef.lines().filter(|&l| priors.get(l) > 0.0 && !obs.is_known(l)).collect();
    if candidates.len() > max_candidates {
        return Err(BeliefError::TooManyCandidates { circuit: cdef.id, count: candidates.len(), cap: max_candidates });
    }
    let m = candidates.len();
    let mut bit_of_segment_lines: Vec<u32> = vec![0; grid.segment_count()];
    for (b, l) in candidates.iter().enumerate() {
        let s = grid.segment_of_line(*l).expect("candidates are lines");
        bit_of_segment_lines[s.0] |= 1 << b;
    }

    // Node likelihood terms, grouped by the candidate mask that darkens them:
    // `if_out` applies when a candidate fault in the mask holds, `otherwise` when none does.
    let mut groups: Vec<(u32, f64, f64)> = Vec::new();
    let mut constant = 0.0;
    for &s in cdef.topology.segments() {
        let seg = grid.segment(s);
        let mask = seg.chain.iter().fold(0u32, |acc, c| acc | bit_of_segment_lines[c.0]);
        // latest repair completion among known faults upstream of (or in) this segment
        let known_restore = seg
            .chain
            .iter()
            .flat_map(|c| grid.segment(*c).lines.iter())
            .filter_map(|l| match obs.status(*l) {
                LineStatus::Repaired { done_at } => Some(done_at),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
        let p_still_out = model.p_called(f64::INFINITY);
        let p_otherwise = known_restore.map_or(0.0, |r| model.p_called(r));
        let (mut if_out, mut otherwise) = (0.0, 0.0);
        for &l in &seg.lines {
            let node = grid.node(l);
            let h = calls.get(l);
            if node.customers == 0 && h == 0 {
                continue;
            }
            if_out += ln_binomial_pmf(node.customers, h, p_still_out);
            otherwise += ln_binomial_pmf(node.customers, h, p_otherwise);
        }
        if mask == 0 {
            constant += otherwise;
        } else {
            match groups.iter_mut().find(|g| g.0 == mask) {
                Some(g) => {
                    g.1 += if_out;
                    g.2 += otherwise;
                }
                None => groups.push((mask, if_out, otherwise)),
            }
        }
    }
    if constant == f64::NEG_INFINITY {
        return Err(BeliefError::ZeroEvidence { circuit: cdef.id });
    }

    let ln_p: Vec<f64> = candidates.iter().map(|l| priors.get(*l).ln()).collect();
    let ln_q: Vec<f64> = candidates.iter().map(|l| (-priors.get(*l)).ln_1p()).collect();
    let n_combos = 1usize << m;
    let mut ln_w = Vec::with_capacity(n_combos);
    let mut best = f64::NEG_INFINITY;
    for combo in 0..n_combos as u32 {
        let mut w = 0.0;
        for b in 0..m {
            w += if combo >> b & 1 == 1 { ln_p[b] } else { ln_q[b] };
        }
        for &(mask, if_out, otherwise) in &groups {
            w += if combo & mask != 0 { if_out } else { otherwise };
        }
        best = best.max(w);
        ln_w.push(w);
    }
    if best == f64::NEG_INFINITY {
        return Err(BeliefError::ZeroEvidence { circuit: cdef.id });
    }
    let mut combos: Vec<(u32, f64)> =
        ln_w.iter().enumerate().map(|(c, w)| (c as u32, (w - best).exp())).filter(|&(_, w)| w > 0.0).collect();
    let total: f64 = combos.iter().map(|c| c.1).sum();
    for c in &mut combos {
        c.1 /= total;
    }
    let seg_masks = cdef.topology.segments().iter().map(|&s| (s, bit_of_segment_lines[s.0])).collect();
    Ok(CircuitJoint { circuit, candidates, seg_masks, combos })
}

/// Exact joint posterior over the candidate lines of one circuit.
#[derive(Clone, Debug)]
pub struct CircuitJoint {
    pub circuit: CircuitIx,
    pub candidates: Vec<LineIx>,
    /// Each segment of the circuit with the bits of its candidate lines.
    seg_masks: Vec<(SegmentIx, u32)>,
    /// Fault combinations with normalized probability; zero-mass combinations dropped.
    combos: Vec<(u32, f64)>,
}

/// Marginals of a [`CircuitJoint`] under some segment observations.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitMarginals {
    /// Posterior of each candidate line, in `candidates` order.
    pub lines: Vec<f64>,
    /// Probability that each segment holds a fault, in circuit segment order.
    pub segments: Vec<(SegmentIx, f64)>,
}

impl CircuitJoint {
    pub fn segments(&self) -> impl Iterator<Item = SegmentIx> + '_ {
        self.seg_masks.iter().map(|s| s.0)
    }

    fn mask_of(&self, s: SegmentIx) -> u32 {
        self.seg_masks.iter().find(|m| m.0 == s).map_or(0, |m| m.1)
    }

    /// Marginals given that every segment in `clear` is fault-free and every
    /// segment in `faulted` holds a fault. `None` when that has zero probability.
    pub fn condition(&self, clear: &[SegmentIx], faulted: &[SegmentIx]) -> Option<CircuitMarginals> {
        let clear_mask = clear.iter().fold(0, |a, s| a | self.mask_of(*s));
        let fault_masks: Vec<u32> = faulted.iter().map(|s| self.mask_of(*s)).collect();
        let mut total = 0.0;
        let mut lines = vec![0.0; self.candidates.len()];
        let mut segs = vec![0.0; self.seg_masks.len()];
        for &(combo, w) in &self.combos {
            if combo & clear_mask != 0 || fault_masks.iter().any(|m| combo & m == 0) {
                continue;
            }
            total += w;
            for (b, acc) in lines.iter_mut().enumerate() {
                if combo >> b & 1 == 1 {
                    *acc += w;
                }
            }
            for (k, &(_, mask)) in self.seg_masks.iter().enumerate() {
                if combo & mask != 0 {
                    segs[k] += w;
                }
            }
        }
        if total <= 0.0 {
            return None;
        }
        Some(CircuitMarginals {
            lines: lines.into_iter().map(|v| (v / total).clamp(0.0, 1.0)).collect(),
            segments: self.seg_masks.iter().zip(segs).map(|(m, v)| (m.0, (v / total).clamp(0.0, 1.0))).collect(),
        })
    }

    fn write(&self, grid: &Grid, posterior: &mut [f64], segment_fault: &mut [f64]) {
        let m = self.condition(&[], &[]).expect("joint is normalized");
        for l in grid.circuit(self.circuit).lines() {
            posterior[l.0] = 0.0;
        }
        for (l, p) in self.candidates.iter().zip(&m.lines) {
            posterior[l.0] = *p;
        }
        for (s, q) in m.segments {
            segment_fault[s.0] = q;
        }
    }
}

/// Probability that no line of each segment is faulted, treating line marginals as independent.
pub fn segment_clear_probabilities(grid: &Grid, posterior: &[f64]) -> Vec<f64> {
    grid.segments().iter().map(|s| s.lines.iter().map(|l| 1.0 - posterior[l.0]).product()).collect()
}

/// Expected customers out given per-segment no-fault probabilities.
pub fn expected_out_from_clear(grid: &Grid, clear: &[f64]) -> f64 {
    grid.segments()
        .iter()
        .map(|s| {
            let powered: f64 = s.chain.iter().map(|c| clear[c.0]).product();
            (1.0 - powered) * s.customers as f64
        })
        .sum()
}

/// `sum_s (1 - prod_{k in Q_s} P(L_k = 0)) * customers(s)`.
pub fn expected_customers_out(grid: &Grid, belief: &BeliefState) -> f64 {
    expected_out_from_clear(grid, &segment_clear_probabilities(grid, &belief.posterior))
}

/// Segments whose posterior reaches `threshold`, most likely first, ties by ascending id.
pub fn candidate_segments(grid: &Grid, belief: &BeliefState, threshold: f64) -> Vec<SegmentIx> {
    ranked_segments(grid, &belief.posterior, threshold, |_| false)
}

pub(crate) fn ranked_segments(
    grid: &Grid,
    posterior: &[f64],
    threshold: f64,
    skip: impl Fn(SegmentIx) -> bool,
) -> Vec<SegmentIx> {
    let mut out: Vec<(SegmentIx, f64)> = (0..grid.segment_count())
        .map(SegmentIx)
        .filter(|&s| !skip(s))
        .map(|s| (s, segment_posterior(grid, posterior, s)))
        .filter(|&(_, q)| q >= threshold)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(s, _)| s).collect()
}

/// Nodes of a circuit; handy for debug output.
pub fn circuit_nodes(grid: &Grid, c: CircuitIx) -> Vec<NodeIx> {
    grid.circuit(c).node_indices().collect()
}
