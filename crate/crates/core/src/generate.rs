//! Synthetic radial grids and matching storm scenarios.
//!
//! Circuits fan out from substations placed on a ring around the depot.
//! Each feeder grows outward as a random tree; every grid node sits on its
//! own pole, and the road follows the feeders, with spokes from each
//! substation to the depot and a ring road joining neighbouring substations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{
    CircuitDocument, GridDocument, NodeDocument, PoleMapping, RoadDocument, RoadEdgeDocument, RoadNodeDocument,
};
use crate::storm::{stream_rng, RepairModel, ScenarioConfig, StormConfig, TrackSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGenParams {
    pub circuits: usize,
    /// Protective devices per circuit, counting the substation.
    pub devices_per_circuit: usize,
    pub lines_per_circuit: usize,
    pub customers_per_circuit: u32,
    pub minutes_per_unit: f64,
    pub seed: u64,
}

impl GridGenParams {
    /// Ten small circuits of five devices and twelve lines, about 500 customers in all.
    pub fn desk(seed: u64) -> Self {
        Self {
            circuits: 10,
            devices_per_circuit: 5,
            lines_per_circuit: 12,
            customers_per_circuit: 50,
            minutes_per_unit: 6.0,
            seed,
        }
    }

    /// Circuits of 41 devices and 724 lines.
    pub fn field_scale(circuits: usize, seed: u64) -> Self {
        Self {
            circuits,
            devices_per_circuit: 41,
            lines_per_circuit: 724,
            customers_per_circuit: 2000,
            minutes_per_unit: 6.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.circuits == 0 || self.lines_per_circuit == 0 || self.devices_per_circuit == 0 {
            return Err("circuit, device and line counts must be positive".into());
        }
        if self.devices_per_circuit > self.lines_per_circuit {
            return Err("a circuit cannot have more devices than nodes".into());
        }
        if !(self.minutes_per_unit > 0.0) {
            return Err("minutes_per_unit must be positive".into());
        }
        Ok(())
    }
}

const RING_RADIUS: f64 = 6.0;

pub fn generate_grid(p: &GridGenParams) -> GridDocument {
    let mut rng = stream_rng(p.seed, 0x67);
    let mut circuits = Vec::with_capacity(p.circuits);
    let mut road_nodes = vec![RoadNodeDocument { id: 0, x: 0.0, y: 0.0 }];
    let mut edges = Vec::new();
    let mut pole_map = Vec::new();
    let mut next_id = 1u64;
    let mut roots = Vec::with_capacity(p.circuits);
    let edge = |a: &RoadNodeDocument, b: &RoadNodeDocument| RoadEdgeDocument {
        from: a.id,
        to: b.id,
        minutes: ((a.x - b.x).hypot(a.y - b.y) * p.minutes_per_unit * 100.0).round() / 100.0,
    };

    for c in 0..p.circuits {
        let heading = std::f64::consts::TAU * c as f64 / p.circuits as f64;
        let n = p.lines_per_circuit + 1;
        let mut pos: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut parent: Vec<Option<usize>> = Vec::with_capacity(n);
        pos.push((RING_RADIUS * heading.cos(), RING_RADIUS * heading.sin()));
        parent.push(None);
        for j in 1..n {
            let par = rng.gen_range(j.saturating_sub(3)..j);
            let angle = heading + rng.gen_range(-1.0..1.0);
            let len = rng.gen_range(0.3..0.7);
            let (px, py) = pos[par];
            pos.push((px + len * angle.cos(), py + len * angle.sin()));
            parent.push(Some(par));
        }

        let mut devices = vec![false; n];
        devices[0] = true;
        // devices go on branching nodes first so each protects some lines
        let mut has_child = vec![false; n];
        for q in parent.iter().flatten() {
            has_child[*q] = true;
        }
        let (mut inner, mut leaves): (Vec<usize>, Vec<usize>) = (1..n).partition(|&j| has_child[j]);
        inner.shuffle(&mut rng);
        leaves.shuffle(&mut rng);
        inner.extend(leaves);
        for &d in inner.iter().take(p.devices_per_circuit - 1) {
            devices[d] = true;
        }
        let loads: Vec<usize> = (1..n).filter(|&j| !devices[j]).collect();
        let mut customers = vec![0u32; n];
        if !loads.is_empty() {
            for _ in 0..p.customers_per_circuit {
                customers[loads[rng.gen_range(0..loads.len())]] += 1;
            }
        }

        let ids: Vec<u64> = (0..n).map(|j| next_id + j as u64).collect();
        next_id += n as u64;
        let nodes = (0..n)
            .map(|j| NodeDocument {
                id: ids[j],
                parent: parent[j].map(|q| ids[q]),
                is_device: devices[j],
                customers: customers[j],
            })
            .collect();
        circuits.push(CircuitDocument { id: c as u64, nodes });

        let base = road_nodes.len();
        for j in 0..n {
            road_nodes.push(RoadNodeDocument { id: ids[j], x: pos[j].0, y: pos[j].1 });
            pole_map.push(PoleMapping { grid_node: ids[j], road_node: ids[j] });
        }
        for j in 1..n {
            let q = parent[j].expect("non-root");
            edges.push(edge(&road_nodes[base + q], &road_nodes[base + j]));
        }
        edges.push(edge(&road_nodes[0], &road_nodes[base]));
        roots.push(base);
    }
    if p.circuits > 2 {
        for c in 0..p.circuits {
            let (a, b) = (roots[c], roots[(c + 1) % p.circuits]);
            edges.push(edge(&road_nodes[a], &road_nodes[b]));
        }
    }
    GridDocument { depot: 0, circuits, road: RoadDocument { nodes: road_nodes, edges }, pole_map }
}

/// Scenario template for the desk grid: a random storm track each seed.
pub fn desk_scenario(seed: u64, rho: f64) -> ScenarioConfig {
    ScenarioConfig {
        storm: StormConfig {
            track: TrackSpec::Keyword("random".into()),
            severity: 0.35,
            diameter: 1.5,
            min_prior: 0.01,
        },
        rho,
        seed,
        repair_classes: RepairModel::default(),
        call_window_minutes: 60.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, CircuitIx};

    #[test]
    fn small_grid_validates() {
        let p = GridGenParams {
            circuits: 1,
            devices_per_circuit: 3,
            lines_per_circuit: 10,
            customers_per_circuit: 30,
            minutes_per_unit: 6.0,
            seed: 4,
        };
        let g = build_grid(&generate_grid(&p)).unwrap();
        assert_eq!(g.line_count(), 10);
        assert_eq!(g.device_count(CircuitIx(0)), 3);
        assert_eq!(g.total_customers(), 30);
    }

    #[test]
    fn same_seed_same_document() {
        let p = GridGenParams::desk(11);
        assert_eq!(generate_grid(&p), generate_grid(&p));
        assert_ne!(generate_grid(&p), generate_grid(&GridGenParams::desk(12)));
    }
}
