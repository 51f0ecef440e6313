//! Brute-force cross-checks for the grid, storm, belief and rollout layers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stormroute::belief::{posterior_update, CallModel, Observations};
use stormroute::engine::EpisodeState;
use stormroute::generate::{generate_grid, GridGenParams};
use stormroute::grid::{
    build_grid, CircuitDocument, GridDocument, NodeDocument, NodeIx, PoleMapping, RoadDocument, RoadEdgeDocument,
    RoadIx, RoadNodeDocument, SegmentIx, Site,
};
use stormroute::mcts::select_uct_score;
use stormroute::rollout::{sim_policy_value, DpSolver};
use stormroute::storm::{
    propagate_outages, realize_scenario, CallVector, PriorVector, RepairClass, RepairModel, ScenarioRealization,
};

fn one_circuit(lines: usize, devices: usize, seed: u64) -> GridGenParams {
    GridGenParams {
        circuits: 1,
        devices_per_circuit: devices,
        lines_per_circuit: lines,
        customers_per_circuit: 30,
        minutes_per_unit: 6.0,
        seed,
    }
}

#[test]
fn outage_sets_match_single_fault_propagation() {
    for seed in 0..50 {
        let g = build_grid(&generate_grid(&one_circuit(20, 1 + (seed as usize % 6), seed))).unwrap();
        let topo = &g.circuits()[0].topology;
        for n in g.circuits()[0].node_indices() {
            let mut want: Vec<NodeIx> = g.lines().filter(|&j| propagate_outages(&g, &[j]).node_out[n.0]).collect();
            want.sort();
            let mut got = topo.outage_set(n).to_vec();
            got.sort();
            assert_eq!(got, want, "seed {seed}, node {}", n.0);
        }
    }
}

/// All simple-path lengths by depth-first enumeration.
fn brute_force_distances(n: usize, edges: &[(usize, usize, f64)], from: usize) -> Vec<f64> {
    fn walk(at: usize, cost: f64, seen: &mut Vec<bool>, adj: &[Vec<(usize, f64)>], best: &mut [f64]) {
        best[at] = best[at].min(cost);
        for &(to, w) in &adj[at] {
            if !seen[to] {
                seen[to] = true;
                walk(to, cost + w, seen, adj, best);
                seen[to] = false;
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut best = vec![f64::INFINITY; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    walk(from, 0.0, &mut seen, &adj, &mut best);
    best
}

#[test]
fn road_distances_match_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    for seed in 0..40 {
        let mut doc = generate_grid(&one_circuit(9, 2, seed));
        let n = doc.road.nodes.len();
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for k in 1..n {
            edges.push((rng.gen_range(0..k), k, rng.gen_range(1.0..20.0)));
        }
        for _ in 0..n {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b {
                edges.push((a, b, rng.gen_range(1.0..20.0)));
            }
        }
        let ids: Vec<u64> = doc.road.nodes.iter().map(|r| r.id).collect();
        doc.road.edges =
            edges.iter().map(|&(a, b, minutes)| RoadEdgeDocument { from: ids[a], to: ids[b], minutes }).collect();
        let g = build_grid(&doc).unwrap();
        for from in 0..n {
            let want = brute_force_distances(n, &edges, from);
            let got = g.road().distances_from(RoadIx(from));
            for to in 0..n {
                assert!((got[to].unwrap() - want[to]).abs() < 1e-9, "seed {seed}: {from}->{to}");
            }
        }
    }
}

#[test]
fn fault_frequency_matches_the_prior() {
    let g = build_grid(&generate_grid(&one_circuit(10, 1, 0))).unwrap();
    let priors = PriorVector::uniform(&g, 0.3);
    let repairs = RepairModel::default();
    let seeds = 100_000u64;
    let mut hits = vec![0u64; g.node_count()];
    for seed in 0..seeds {
        for l in realize_scenario(&g, &priors, 0.0, seed, &repairs, 60.0).faults {
            hits[l.0] += 1;
        }
    }
    let se = (0.3 * 0.7 / seeds as f64).sqrt();
    for l in g.lines() {
        let f = hits[l.0] as f64 / seeds as f64;
        assert!((f - 0.3).abs() <= 3.0 * se, "line {}: {f}", l.0);
    }
}

#[test]
fn a_call_raises_every_line_that_could_explain_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for seed in 0..200 {
        let g = build_grid(&generate_grid(&one_circuit(2, rng.gen_range(1..=2), seed))).unwrap();
        let values = (0..g.node_count()).map(|n| if g.is_line(NodeIx(n)) { rng.gen_range(0.01..0.9) } else { 0.0 });
        let priors = PriorVector::from_values(&g, values.collect());
        let model = CallModel::settled(rng.gen_range(0.05..1.0));
        let obs = Observations::new(&g);
        let base_calls = CallVector::zeros(g.node_count());
        let before = posterior_update(&g, &priors, &base_calls, &obs, model, 20).unwrap();
        let topo = &g.circuits()[0].topology;
        for k in g.lines().filter(|k| g.node(*k).customers > 0) {
            let mut calls = base_calls.clone();
            calls.add(k, 1);
            let after = posterior_update(&g, &priors, &calls, &obs, model, 20).unwrap();
            for l in topo.outage_set(k) {
                assert!(after.posterior(*l) >= before.posterior(*l) - 1e-12, "seed {seed}: call at {k:?}, line {l:?}");
            }
        }
    }
}

fn fixed_repair(minutes: f64) -> RepairModel {
    RepairModel {
        classes: vec![RepairClass {
            name: "fixed".into(),
            probability: 1.0,
            min_minutes: minutes,
            max_minutes: minutes,
        }],
    }
}

/// Substation 1 feeds line 2 directly and line 4 through device 3; the two devices sit on opposite sides of the depot.
fn two_branch_grid() -> GridDocument {
    let rows = [(1, None, true, 0), (2, Some(1), false, 10), (3, Some(1), true, 0), (4, Some(3), false, 6)];
    let nodes =
        rows.iter().map(|&(id, parent, is_device, customers)| NodeDocument { id, parent, is_device, customers });
    let road_nodes = [(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 2.0, 1.0), (3, -1.0, 0.0), (4, -2.0, 0.0)]
        .map(|(id, x, y)| RoadNodeDocument { id, x, y });
    let edges = [(0, 1, 10.0), (0, 3, 10.0), (1, 3, 25.0), (1, 2, 12.0), (3, 4, 5.0)]
        .map(|(from, to, minutes)| RoadEdgeDocument { from, to, minutes });
    GridDocument {
        depot: 0,
        circuits: vec![CircuitDocument { id: 0, nodes: nodes.collect() }],
        road: RoadDocument { nodes: road_nodes.to_vec(), edges: edges.to_vec() },
        pole_map: (1..=4).map(|id| PoleMapping { grid_node: id, road_node: id }).collect(),
    }
}

#[test]
fn optimistic_value_bounds_every_fixed_route() {
    let g = build_grid(&two_branch_grid()).unwrap();
    let (a, b) = (NodeIx(1), NodeIx(3));
    let (sa, sb) = (g.segment_of_line(a).unwrap(), g.segment_of_line(b).unwrap());
    let repairs = fixed_repair(30.0);
    let (pa, pb) = (0.6, 0.3);

    let world_cost = |faults: &[NodeIx], route: &[SegmentIx]| {
        let truth = ScenarioRealization {
            faults: faults.to_vec(),
            repair_minutes: faults.iter().map(|l| (*l, 30.0)).collect(),
            repair_class: faults.iter().map(|l| (*l, 0)).collect(),
            callers: Vec::new(),
            call_in_probability: 0.0,
            call_window: 60.0,
        };
        let mut state = EpisodeState::new(&g, &truth, 1e9);
        for s in route {
            state.step(*s).unwrap();
        }
        state.area()
    };
    let worlds: Vec<(Vec<NodeIx>, f64)> = vec![
        (vec![], (1.0 - pa) * (1.0 - pb)),
        (vec![a], pa * (1.0 - pb)),
        (vec![b], (1.0 - pa) * pb),
        (vec![a, b], pa * pb),
    ];
    let routes = [vec![sa, sb], vec![sb, sa]];
    let mut optimistic = 0.0;
    let mut fixed = [0.0; 2];
    for (faults, p) in &worlds {
        let mut post = vec![0.0; g.node_count()];
        for l in faults {
            post[l.0] = 1.0;
        }
        let v = sim_policy_value(&g, &post, &[], Site::Depot, &repairs, &DpSolver, &mut ChaCha8Rng::seed_from_u64(0));
        for (r, route) in routes.iter().enumerate() {
            let c = world_cost(faults, route);
            assert!(v <= c + 1e-9, "world {faults:?}: optimistic {v} above route {r} cost {c}");
            fixed[r] += p * c;
        }
        optimistic += p * v;
    }

    let mut post = vec![0.0; g.node_count()];
    post[a.0] = pa;
    post[b.0] = pb;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 20_000;
    let sampled: f64 =
        (0..draws).map(|_| sim_policy_value(&g, &post, &[], Site::Depot, &repairs, &DpSolver, &mut rng)).sum::<f64>()
            / draws as f64;
    assert!(optimistic < fixed[0].min(fixed[1]));
    assert!((sampled - optimistic).abs() < 0.02 * optimistic, "{sampled} vs {optimistic}");
    assert!(sampled <= fixed[0].min(fixed[1]), "{sampled} {optimistic} {fixed:?}");
}

#[test]
fn large_alpha_prefers_the_least_visited_action() {
    let arms = [(10.0, 50u64), (500.0, 2), (12.0, 30)];
    let parent: u64 = arms.iter().map(|a| a.1).sum();
    let best = |alpha: f64| {
        (0..arms.len())
            .max_by(|&i, &j| {
                select_uct_score(arms[i].0, parent, arms[i].1, alpha)
                    .total_cmp(&select_uct_score(arms[j].0, parent, arms[j].1, alpha))
            })
            .unwrap()
    };
    assert_eq!(best(1e-6), 0);
    assert_eq!(best(1e9), 1);
}

#[test]
fn repeated_realizations_are_identical() {
    let g = build_grid(&generate_grid(&GridGenParams::desk(3))).unwrap();
    let priors = PriorVector::uniform(&g, 0.05);
    let repairs = RepairModel::default();
    let runs: Vec<ScenarioRealization> =
        (0..2).map(|_| realize_scenario(&g, &priors, 0.4, 77, &repairs, 60.0)).collect();
    assert_eq!(runs[0], runs[1]);
    let by_line: BTreeMap<_, _> = runs[0].repair_minutes.clone();
    assert_eq!(by_line.keys().copied().collect::<Vec<_>>(), runs[0].faults);
}
