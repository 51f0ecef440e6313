//! Scenario ground truth: storm priors, fault and repair-time realizations,
//! outage propagation and lights-out calls.
//!
//! Every random draw comes from its own ChaCha stream keyed by the scenario
//! seed, and draws are made for every line and every customer whether or not
//! they end up used. Two scenarios that differ only in `rho` therefore share
//! faults, repair times and call delays, and their caller sets are nested.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, LineIx, NodeIx, SegmentIx};

const STREAM_TRACK: u64 = 1;
const STREAM_FAULTS: u64 = 2;
const STREAM_REPAIRS: u64 = 3;
const STREAM_CALLS: u64 = 4;
const STREAM_DELAYS: u64 = 5;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StormParams {
    /// Polyline over road coordinates.
    pub track: Vec<[f64; 2]>,
    /// Peak fault probability, reached on the track itself.
    pub severity: f64,
    /// Distance scale of the falloff, in road coordinate units.
    pub diameter: f64,
    /// Priors below this value are zeroed so that faults stay where the belief can see them.
    #[serde(default = "default_min_prior")]
    pub min_prior: f64,
}

fn default_min_prior() -> f64 {
    0.01
}

impl StormParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(format!("storm severity {} outside [0, 1]", self.severity));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(format!("storm diameter {} must be positive", self.diameter));
        }
        if self.track.is_empty() {
            return Err("storm track has no points".into());
        }
        if !(0.0..1.0).contains(&self.min_prior) {
            return Err(format!("min_prior {} outside [0, 1)", self.min_prior));
        }
        Ok(())
    }
}

/// Prior fault probability per line, indexed by the node the line feeds.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorVector {
    p: Vec<f64>,
}

impl PriorVector {
    /// Builds a prior vector; substation entries are forced to zero.
    pub fn from_values(grid: &Grid, mut p: Vec<f64>) -> Self {
        assert_eq!(p.len(), grid.node_count(), "one prior per grid node");
        for (i, v) in p.iter_mut().enumerate() {
            if !grid.is_line(NodeIx(i)) {
                *v = 0.0;
            }
            assert!((0.0..=1.0).contains(v), "prior {v} outside [0, 1]");
        }
        Self { p }
    }

    pub fn uniform(grid: &Grid, value: f64) -> Self {
        Self::from_values(grid, vec![value; grid.node_count()])
    }

    pub fn get(&self, line: LineIx) -> f64 {
        self.p[line.0]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

pub fn distance_to_track(p: [f64; 2], track: &[[f64; 2]]) -> f64 {
    match track {
        [] => f64::INFINITY,
        [only] => point_segment_distance(p, *only, *only),
        _ => track.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}

/// Gaussian falloff from the storm track, `severity * exp(-(dist / diameter)^2)`,
/// evaluated at the pole of the node each line feeds.
pub fn generate_priors(grid: &Grid, storm: &StormParams) -> PriorVector {
    let p = (0..grid.node_count())
        .map(|i| {
            let n = NodeIx(i);
            if !grid.is_line(n) {
                return 0.0;
            }
            let (x, y) = grid.road().coords(grid.node(n).pole);
            let d = distance_to_track([x, y], &storm.track) / storm.diameter;
            let v = (storm.severity * (-d * d).exp()).clamp(0.0, 1.0);
            if v < storm.min_prior {
                0.0
            } else {
                v
            }
        })
        .collect();
    PriorVector { p }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairClass {
    pub name: String,
    pub probability: f64,
    pub min_minutes: f64,
    pub max_minutes: f64,
}

impl RepairClass {
    pub fn mean_minutes(&self) -> f64 {
        0.5 * (self.min_minutes + self.max_minutes)
    }
}

/// Mixture over fault types; each type has a uniform repair duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RepairModel {
    pub classes: Vec<RepairClass>,
}

impl Default for RepairModel {
    fn default() -> Self {
        Self {
            classes: vec![
                RepairClass { name: "minor".into(), probability: 0.7, min_minutes: 20.0, max_minutes: 40.0 },
                RepairClass { name: "major".into(), probability: 0.3, min_minutes: 60.0, max_minutes: 180.0 },
            ],
        }
    }
}

impl RepairModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes.is_empty() {
            return Err("no repair classes".into());
        }
        let total: f64 = self.classes.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("repair class probabilities sum to {total}, not 1"));
        }
        for c in &self.classes {
            if !(c.min_minutes > 0.0 && c.max_minutes >= c.min_minutes) {
                return Err(format!("repair class {} has invalid duration range", c.name));
            }
        }
        Ok(())
    }

    /// Draws `(class index, minutes)`.
    pub fn sample(&self, rng: &mut impl Rng) -> (usize, f64) {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = self.classes.len() - 1;
        for (k, c) in self.classes.iter().enumerate() {
            acc += c.probability;
            if u < acc {
                pick = k;
                break;
            }
        }
        let c = &self.classes[pick];
        (pick, c.min_minutes + v * (c.max_minutes - c.min_minutes))
    }
}

/// Lights-out call counts per grid node.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CallVector {
    counts: Vec<u32>,
}

impl CallVector {
    pub fn zeros(nodes: usize) -> Self {
        Self { counts: vec![0; nodes] }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn get(&self, n: NodeIx) -> u32 {
        self.counts[n.0]
    }

    pub fn add(&mut self, n: NodeIx, k: u32) {
        self.counts[n.0] += k;
    }

    pub fn merge(&mut self, other: &CallVector) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn calling_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| NodeIx(i))
    }
}

/// A customer who will call once their outage has lasted `delay` minutes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Caller {
    pub node: NodeIx,
    pub slot: u32,
    pub delay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRealization {
    /// Faulted lines, sorted.
    pub faults: Vec<LineIx>,
    pub repair_minutes: BTreeMap<LineIx, f64>,
    pub repair_class: BTreeMap<LineIx, usize>,
    /// Flagged callers in node then slot order.
    pub callers: Vec<Caller>,
    pub call_in_probability: f64,
    /// Call delays are uniform on `[0, call_window]` minutes after the outage starts.
    pub call_window: f64,
}

impl ScenarioRealization {
    /// Call flag per `(node, customer slot)`; customers not listed never call.
    pub fn caller_flags(&self) -> BTreeMap<(NodeIx, u32), bool> {
        self.callers.iter().map(|c| ((c.node, c.slot), true)).collect()
    }

    pub fn is_faulted(&self, line: LineIx) -> bool {
        self.faults.binary_search(&line).is_ok()
    }

    /// Calls placed in `(from, to]` by flagged customers still out when they dial.
    ///
    /// `restored_at[s]` is the time segment `s` regained power, if it has.
    pub fn new_calls(&self, grid: &Grid, restored_at: &[Option<f64>], from: f64, to: f64) -> CallVector {
        let mut out = CallVector::zeros(grid.node_count());
        for c in &self.callers {
            if c.delay <= from || c.delay > to {
                continue;
            }
            let seg = grid.segment_of_line(c.node).expect("callers sit on lines");
            let still_out = restored_at[seg.0].is_none_or(|r| c.delay < r);
            if still_out {
                out.add(c.node, 1);
            }
        }
        out
    }
}

/// Draws faults, repair times, call flags and call delays.
pub fn realize_scenario(
    grid: &Grid,
    priors: &PriorVector,
    rho: f64,
    seed: u64,
    repairs: &RepairModel,
    call_window: f64,
) -> ScenarioRealization {
    assert!((0.0..=1.0).contains(&rho), "rho {rho} outside [0, 1]");
    let mut fault_rng = stream_rng(seed, STREAM_FAULTS);
    let mut repair_rng = stream_rng(seed, STREAM_REPAIRS);
    let mut faults = Vec::new();
    let mut repair_minutes = BTreeMap::new();
    let mut repair_class = BTreeMap::new();
    for i in 0..grid.node_count() {
        let n = NodeIx(i);
        let u: f64 = fault_rng.gen();
        let (class, minutes) = repairs.sample(&mut repair_rng);
        if grid.is_line(n) && u < priors.get(n) {
            faults.push(n);
            repair_minutes.insert(n, minutes);
            repair_class.insert(n, class);
        }
    }

    let outage = propagate_outages(grid, &faults);
    let mut call_rng = stream_rng(seed, STREAM_CALLS);
    let mut delay_rng = stream_rng(seed, STREAM_DELAYS);
    let mut callers = Vec::new();
    for (i, node) in grid.nodes().iter().enumerate() {
        for slot in 0..node.customers {
            let u: f64 = call_rng.gen();
            let delay = delay_rng.gen::<f64>() * call_window;
            if outage.node_out[i] && u < rho {
                callers.push(Caller { node: NodeIx(i), slot, delay });
            }
        }
    }
    ScenarioRealization { faults, repair_minutes, repair_class, callers, call_in_probability: rho, call_window }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutageState {
    pub node_out: Vec<bool>,
    pub open_devices: Vec<NodeIx>,
    pub customers_out: u64,
}

/// Opens the first upstream device of every fault and marks everything below it dark.
pub fn propagate_outages(grid: &Grid, faults: &[LineIx]) -> OutageState {
    let mut open_devices: Vec<NodeIx> = faults.iter().filter_map(|&l| grid.upstream_device(l)).collect();
    open_devices.sort();
    open_devices.dedup();
    let mut node_out = vec![false; grid.node_count()];
    let mut stack: Vec<NodeIx> = open_devices.clone();
    while let Some(n) = stack.pop() {
        for &ch in &grid.node(n).children {
            if !node_out[ch.0] {
                node_out[ch.0] = true;
                stack.push(ch);
            }
        }
    }
    let customers_out =
        node_out.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| grid.node(NodeIx(i)).customers as u64).sum();
    OutageState { node_out, open_devices, customers_out }
}

/// Storm track: explicit polyline, or `"random"` for a straight track across
/// the grid's bounding box drawn from the scenario seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackSpec {
    Fixed(Vec<[f64; 2]>),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StormConfig {
    pub track: TrackSpec,
    pub severity: f64,
    pub diameter: f64,
    #[serde(default = "default_min_prior")]
    pub min_prior: f64,
}

/// Scenario file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub storm: StormConfig,
    pub rho: f64,
    pub seed: u64,
    #[serde(default)]
    pub repair_classes: RepairModel,
    #[serde(default = "default_call_window")]
    pub call_window_minutes: f64,
}

fn default_call_window() -> f64 {
    60.0
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(format!("rho {} outside [0, 1]", self.rho));
        }
        if let TrackSpec::Keyword(k) = &self.storm.track {
            if k != "random" {
                return Err(format!("unknown track keyword {k:?}; expected a point list or \"random\""));
            }
        }
        if !(self.call_window_minutes > 0.0) {
            return Err("call_window_minutes must be positive".into());
        }
        self.repair_classes.validate()
    }

    /// Resolves the track against the grid and the seed.
    pub fn storm_params(&self, grid: &Grid) -> StormParams {
        let track = match &self.storm.track {
            TrackSpec::Fixed(points) => points.clone(),
            TrackSpec::Keyword(_) => random_track(grid, self.seed),
        };
        StormParams {
            track,
            severity: self.storm.severity,
            diameter: self.storm.diameter,
            min_prior: self.storm.min_prior,
        }
    }
}

/// A chord through a random point of the grid's pole bounding box.
pub fn random_track(grid: &Grid, seed: u64) -> Vec<[f64; 2]> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for n in grid.nodes() {
        let (x, y) = grid.road().coords(n.pole);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let mut rng = stream_rng(seed, STREAM_TRACK);
    let cx = x0 + rng.gen::<f64>() * (x1 - x0);
    let cy = y0 + rng.gen::<f64>() * (y1 - y0);
    let angle = rng.gen::<f64>() * std::f64::consts::PI;
    let half = (x1 - x0).hypot(y1 - y0).max(1.0);
    let (dx, dy) = (angle.cos() * half, angle.sin() * half);
    vec![[cx - dx, cy - dy], [cx + dx, cy + dy]]
}

/// Priors plus one ground-truth realization.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub storm: StormParams,
    pub priors: PriorVector,
    pub realization: ScenarioRealization,
}

impl Scenario {
    pub fn generate(grid: &Grid, config: &ScenarioConfig) -> Self {
        let storm = config.storm_params(grid);
        let priors = generate_priors(grid, &storm);
        let realization = realize_scenario(
            grid,
            &priors,
            config.rho,
            config.seed,
            &config.repair_classes,
            config.call_window_minutes,
        );
        Self { config: config.clone(), storm, priors, realization }
    }

    pub fn with_seed_and_rho(grid: &Grid, template: &ScenarioConfig, seed: u64, rho: f64) -> Self {
        let mut cfg = template.clone();
        cfg.seed = seed;
        cfg.rho = rho;
        Self::generate(grid, &cfg)
    }

    /// Faulted lines grouped by segment, with the summed repair time per segment.
    pub fn faulted_segments(&self, grid: &Grid) -> BTreeMap<SegmentIx, f64> {
        let mut out = BTreeMap::new();
        for l in &self.realization.faults {
            let s = grid.segment_of_line(*l).expect("faults sit on lines");
            *out.entry(s).or_insert(0.0) += self.realization.repair_minutes[l];
        }
        out
    }
}
