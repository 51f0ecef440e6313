//! Ground-truth episode execution and the outage-area objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::Observations;
use crate::grid::{Grid, LineIx, SegmentIx, Site};
use crate::storm::{CallVector, Scenario, ScenarioRealization};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("segment {0} does not exist")]
    UnreachableDestination(usize),
    #[error("wait target {until} is not after the current clock {clock}")]
    InvalidWait { clock: f64, until: f64 },
    #[error("the episode has already finished")]
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    Visit(SegmentIx),
    /// Stay put until the given clock time, collecting calls.
    Wait(f64),
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Episode cap; outage keeps accruing on unrepaired faults until it.
    pub cap_minutes: f64,
    /// Wait length used by policies idling for calls.
    pub poll_minutes: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { cap_minutes: 48.0 * 60.0, poll_minutes: 5.0 }
    }
}

/// What the truck saw at a segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub segment: SegmentIx,
    pub found: Vec<LineIx>,
    pub arrived_at: f64,
    pub done_at: f64,
    pub new_calls: CallVector,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub at_minutes: f64,
    pub origin: String,
    /// Destination segment, or `None` for a wait.
    pub destination: Option<usize>,
    /// Line ids found faulted and repaired.
    pub found: Vec<u64>,
    pub done_at: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PolicyTrace {
    pub decisions: Vec<Decision>,
    pub restore_time: Option<f64>,
    pub stop_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub outage_hours: f64,
    /// `None` while any true fault is unrepaired.
    pub restore_time_minutes: Option<f64>,
    pub stop_time_minutes: f64,
    pub unrepaired_faults: usize,
    pub customers_out_at_stop: u64,
}

pub struct EpisodeState<'a> {
    grid: &'a Grid,
    truth: &'a ScenarioRealization,
    pub at: Site,
    pub clock: f64,
    pub calls: CallVector,
    pub observations: Observations,
    cap: f64,
    pending: Vec<bool>,
    unrepaired: usize,
    restored_at: Vec<Option<f64>>,
    last_repair: f64,
    customers_out: u64,
    area: f64,
    finished: bool,
    pub trace: PolicyTrace,
    /// `(time, customers out from then on)` at every change.
    pub timeline: Vec<(f64, u64)>,
}

impl<'a> EpisodeState<'a> {
    /// All faults strike at time zero; the truck waits at the depot.
    pub fn new(grid: &'a Grid, truth: &'a ScenarioRealization, cap: f64) -> Self {
        let mut pending = vec![false; grid.node_count()];
        for l in &truth.faults {
            pending[l.0] = true;
        }
        let mut s = Self {
            grid,
            truth,
            at: Site::Depot,
            clock: 0.0,
            calls: CallVector::zeros(grid.node_count()),
            observations: Observations::new(grid),
            cap,
            pending,
            unrepaired: truth.faults.len(),
            restored_at: vec![None; grid.segment_count()],
            last_repair: 0.0,
            customers_out: 0,
            area: 0.0,
            finished: false,
            trace: PolicyTrace::default(),
            timeline: Vec::new(),
        };
        s.customers_out = s.count_out();
        s.timeline.push((0.0, s.customers_out));
        s
    }

    fn count_out(&self) -> u64 {
        let faulted = self.grid.faulted_segments(self.residual_faults().iter());
        self.grid.customers_out_by_segment(&faulted)
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn customers_out(&self) -> u64 {
        self.customers_out
    }

    /// Customer-minutes accrued so far.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn residual_faults(&self) -> Vec<LineIx> {
        self.truth.faults.iter().copied().filter(|l| self.pending[l.0]).collect()
    }

    fn advance(&mut self, to: f64) {
        self.area += self.customers_out as f64 * (to - self.clock);
        self.clock = to;
    }

    fn reveal_calls(&mut self, from: f64, to: f64) -> CallVector {
        let fresh = self.truth.new_calls(self.grid, &self.restored_at, from, to);
        self.calls.merge(&fresh);
        fresh
    }

    /// Drives to `seg`, repairs every fault found there, and reveals calls placed meanwhile.
    ///
    /// A visit that would end past the cap is cut off at the cap with nothing repaired.
    pub fn step(&mut self, seg: SegmentIx) -> Result<Observation, EngineError> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if seg.0 >= self.grid.segment_count() {
            return Err(EngineError::UnreachableDestination(seg.0));
        }
        let start = self.clock;
        let origin = self.at;
        let arrive = start + self.grid.travel(origin, Site::Segment(seg));
        let found: Vec<LineIx> = self.grid.segment(seg).lines.iter().copied().filter(|l| self.pending[l.0]).collect();
        let done = arrive + found.iter().map(|l| self.truth.repair_minutes[l]).sum::<f64>();

        if done > self.cap {
            self.advance(self.cap);
            let new_calls = self.reveal_calls(start, self.cap);
            self.finished = true;
            self.trace.stop_time = self.cap;
            return Ok(Observation {
                segment: seg,
                found: Vec::new(),
                arrived_at: arrive,
                done_at: self.cap,
                new_calls,
            });
        }

        self.advance(done);
        self.at = Site::Segment(seg);
        if !found.is_empty() {
            for l in &found {
                self.pending[l.0] = false;
            }
            self.unrepaired -= found.len();
            self.last_repair = done;
            let faulted = self.grid.faulted_segments(self.residual_faults().iter());
            for s in 0..self.grid.segment_count() {
                if self.restored_at[s].is_none() && !self.grid.segment_out(SegmentIx(s), &faulted) {
                    self.restored_at[s] = Some(done);
                }
            }
            self.customers_out = self.grid.customers_out_by_segment(&faulted);
            self.timeline.push((done, self.customers_out));
        }
        self.observations.record_visit(self.grid, seg, &found, done);
        let new_calls = self.reveal_calls(start, done);
        self.trace.decisions.push(Decision {
            at_minutes: start,
            origin: origin.to_string(),
            destination: Some(seg.0),
            found: found.iter().map(|l| self.grid.node(*l).id).collect(),
            done_at: done,
        });
        Ok(Observation { segment: seg, found, arrived_at: arrive, done_at: done, new_calls })
    }

    /// Idles until `until` (clipped to the cap) and returns the calls placed meanwhile.
    pub fn wait(&mut self, until: f64) -> Result<CallVector, EngineError> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if !(until > self.clock) {
            return Err(EngineError::InvalidWait { clock: self.clock, until });
        }
        let start = self.clock;
        let to = until.min(self.cap);
        self.advance(to);
        self.trace.decisions.push(Decision {
            at_minutes: start,
            origin: self.at.to_string(),
            destination: None,
            found: Vec::new(),
            done_at: to,
        });
        if to >= self.cap {
            self.finished = true;
            self.trace.stop_time = self.cap;
        }
        Ok(self.reveal_calls(start, to))
    }

    pub fn stop(&mut self) {
        if !self.finished {
            self.finished = true;
            self.trace.stop_time = self.clock;
        }
    }

    /// Closes the episode and integrates outage up to the cap.
    pub fn finish(mut self) -> (EpisodeMetrics, PolicyTrace) {
        self.stop();
        let stop = self.trace.stop_time;
        let out_at_stop = self.customers_out;
        if self.clock < self.cap {
            self.advance(self.cap);
        }
        let restore = if self.unrepaired == 0 { Some(self.last_repair) } else { None };
        self.trace.restore_time = restore;
        let metrics = EpisodeMetrics {
            outage_hours: self.area / 60.0,
            restore_time_minutes: restore,
            stop_time_minutes: stop,
            unrepaired_faults: self.unrepaired,
            customers_out_at_stop: out_at_stop,
        };
        (metrics, self.trace)
    }
}

/// Read-only view a policy decides from.
pub struct DecisionContext<'a> {
    pub grid: &'a Grid,
    pub scenario: &'a Scenario,
    pub at: Site,
    pub clock: f64,
    pub calls: &'a CallVector,
    pub observations: &'a Observations,
    pub epoch: usize,
    pub run: &'a RunConfig,
}

pub trait Decide {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Action, crate::Error>;
}

/// Loops decisions through the engine until the policy stops or the cap is hit.
pub fn run_episode(
    grid: &Grid,
    scenario: &Scenario,
    policy: &mut dyn Decide,
    run: &RunConfig,
) -> Result<(EpisodeMetrics, PolicyTrace), crate::Error> {
    let mut state = EpisodeState::new(grid, &scenario.realization, run.cap_minutes);
    let mut epoch = 0;
    while !state.is_finished() && state.clock < run.cap_minutes {
        let ctx = DecisionContext {
            grid,
            scenario,
            at: state.at,
            clock: state.clock,
            calls: &state.calls,
            observations: &state.observations,
            epoch,
            run,
        };
        match policy.decide(&ctx)? {
            Action::Stop => break,
            Action::Visit(s) => {
                state.step(s)?;
            }
            Action::Wait(until) => {
                state.wait(until)?;
            }
        }
        epoch += 1;
    }
    Ok(state.finish())
}

/// Outage customer-minutes from a timeline, accumulated one minute bucket at a time up to `cap`.
///
/// Each bucket adds the overlap of every timeline interval with that minute.
pub fn replay_area_by_minute(timeline: &[(f64, u64)], cap: f64) -> f64 {
    let mut area = 0.0;
    let mut k = 0;
    let mut t = 0.0;
    while t < cap {
        let end = (t + 1.0).min(cap);
        let mut from = t;
        while from < end {
            while k + 1 < timeline.len() && timeline[k + 1].0 <= from {
                k += 1;
            }
            let to = if k + 1 < timeline.len() { timeline[k + 1].0.min(end) } else { end };
            area += timeline[k].1 as f64 * (to - from);
            from = to;
        }
        t += 1.0;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::grid::tests::tiny;
    use crate::grid::NodeIx;
    use std::collections::BTreeMap;

    fn nested() -> (Grid, ScenarioRealization) {
        // root -> a(3) -> device b -> c(4) ; faults on a and c
        let g = build_grid(&tiny(&[
            (1, None, true, 0),
            (2, Some(1), false, 3),
            (3, Some(2), true, 0),
            (4, Some(3), false, 4),
        ]))
        .unwrap();
        let truth = ScenarioRealization {
            faults: vec![NodeIx(1), NodeIx(3)],
            repair_minutes: BTreeMap::from([(NodeIx(1), 20.0), (NodeIx(3), 30.0)]),
            repair_class: BTreeMap::from([(NodeIx(1), 0), (NodeIx(3), 0)]),
            callers: Vec::new(),
            call_in_probability: 0.0,
            call_window: 60.0,
        };
        (g, truth)
    }

    #[test]
    fn clear_visit_costs_travel_only() {
        let (g, mut truth) = nested();
        truth.faults.clear();
        let mut s = EpisodeState::new(&g, &truth, 2880.0);
        let seg = g.segment_of_line(NodeIx(3)).unwrap();
        let obs = s.step(seg).unwrap();
        assert!(obs.found.is_empty());
        assert_eq!(s.clock, g.travel(Site::Depot, Site::Segment(seg)));
    }

    #[test]
    fn upstream_repair_restores_only_between_devices() {
        let (g, truth) = nested();
        let mut s = EpisodeState::new(&g, &truth, 2880.0);
        assert_eq!(s.customers_out(), 7);
        let up = g.segment_of_line(NodeIx(1)).unwrap();
        let obs = s.step(up).unwrap();
        assert_eq!(obs.found, vec![NodeIx(1)]);
        assert_eq!(s.customers_out(), 4);
        let out = crate::storm::propagate_outages(&g, &s.residual_faults()).customers_out;
        assert_eq!(out, 4);
    }

    #[test]
    fn forced_episode_area() {
        let (g, mut truth) = nested();
        truth.faults = vec![NodeIx(3)];
        let mut s = EpisodeState::new(&g, &truth, 2880.0);
        let seg = g.segment_of_line(NodeIx(3)).unwrap();
        s.step(seg).unwrap();
        let travel = g.travel(Site::Depot, Site::Segment(seg));
        let (m, _) = s.finish();
        assert!((m.outage_hours - 4.0 * (travel + 30.0) / 60.0).abs() < 1e-12);
        assert_eq!(m.restore_time_minutes, Some(travel + 30.0));
        assert_eq!(m.unrepaired_faults, 0);
    }

    #[test]
    fn unrepaired_outage_runs_to_cap() {
        let (g, truth) = nested();
        let mut s = EpisodeState::new(&g, &truth, 100.0);
        s.stop();
        let (m, _) = s.finish();
        assert_eq!(m.outage_hours, 7.0 * 100.0 / 60.0);
        assert_eq!(m.restore_time_minutes, None);
        assert_eq!(m.unrepaired_faults, 2);
    }
}
