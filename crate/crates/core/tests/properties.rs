use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stormroute::belief::{expected_customers_out, posterior_update, BeliefState, CallModel, Observations};
use stormroute::engine::{replay_area_by_minute, EpisodeState};
use stormroute::generate::{desk_scenario, generate_grid, GridGenParams};
use stormroute::grid::{build_grid, CircuitIx, Grid, LineIx, NodeIx, SegmentIx, Site};
use stormroute::mcts::{GridLookahead, MctsConfig, SearchTree};
use stormroute::rollout::{heuristic_tour, optimal_tour_dp, sample_faults, tour_cost, tour_solver, SamplePath};
use stormroute::storm::{propagate_outages, realize_scenario, CallVector, PriorVector, RepairModel, Scenario};

fn small_grid(seed: u64, lines: usize, devices: usize) -> Grid {
    build_grid(&generate_grid(&GridGenParams {
        circuits: 2,
        devices_per_circuit: devices.min(lines),
        lines_per_circuit: lines,
        customers_per_circuit: 40,
        minutes_per_unit: 6.0,
        seed,
    }))
    .unwrap()
}

fn desk() -> Grid {
    build_grid(&generate_grid(&GridGenParams::desk(1))).unwrap()
}

fn subset(grid: &Grid, mask: u64) -> Vec<LineIx> {
    grid.lines().filter(|l| mask >> (l.0 % 64) & 1 == 1).collect()
}

fn grid_params() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..16, 1usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segments_partition_each_circuit((seed, lines, devices) in grid_params()) {
        let g = small_grid(seed, lines, devices);
        for (c, circuit) in g.circuits().iter().enumerate() {
            let in_segments: usize =
                g.segments().iter().filter(|s| s.circuit == CircuitIx(c)).map(|s| s.lines.len()).sum();
            prop_assert_eq!(in_segments, circuit.line_count());
        }
        for l in g.lines() {
            let s = g.segment_of_line(l).unwrap();
            prop_assert!(g.segment(s).lines.contains(&l));
        }
    }

    #[test]
    fn outages_grow_with_the_fault_set((seed, lines, devices) in grid_params(), a in any::<u64>(), b in any::<u64>()) {
        let g = small_grid(seed, lines, devices);
        let small = subset(&g, a & b);
        let large = subset(&g, a);
        prop_assert!(propagate_outages(&g, &small).customers_out <= propagate_outages(&g, &large).customers_out);
    }

    #[test]
    fn segment_count_matches_tree_walk((seed, lines, devices) in grid_params(), mask in any::<u64>()) {
        let g = small_grid(seed, lines, devices);
        let faults = subset(&g, mask);
        let walked = propagate_outages(&g, &faults).customers_out;
        let by_segment = g.customers_out_by_segment(&g.faulted_segments(faults.iter()));
        let per_circuit: u64 = (0..g.circuits().len())
            .map(|c| {
                let mine: Vec<LineIx> =
                    faults.iter().copied().filter(|l| g.circuit(CircuitIx(c)).lines().any(|m| m == *l)).collect();
                g.affected_customers(CircuitIx(c), &mine).unwrap()
            })
            .sum();
        prop_assert_eq!(walked, by_segment);
        prop_assert_eq!(walked, per_circuit);
    }

    #[test]
    fn single_fault_darkens_below_its_device((seed, lines, devices) in grid_params()) {
        let g = small_grid(seed, lines, devices);
        for l in g.lines() {
            let device = g.upstream_device(l).unwrap();
            let below: u64 = (0..g.node_count())
                .map(NodeIx)
                .filter(|&n| n != device && g.is_ancestor_or_self(device, n))
                .map(|n| g.node(n).customers as u64)
                .sum();
            prop_assert_eq!(propagate_outages(&g, &[l]).customers_out, below);
        }
    }

    #[test]
    fn callers_are_nested_in_rho(seed in any::<u64>(), r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let g = small_grid(seed, 12, 3);
        let priors = PriorVector::uniform(&g, 0.3);
        let repairs = RepairModel::default();
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        let a = realize_scenario(&g, &priors, lo, seed, &repairs, 60.0);
        let b = realize_scenario(&g, &priors, hi, seed, &repairs, 60.0);
        prop_assert_eq!(&a.faults, &b.faults);
        let flags = b.caller_flags();
        prop_assert!(a.caller_flags().keys().all(|k| flags.contains_key(k)));
        let out = propagate_outages(&g, &b.faults);
        prop_assert!(b.callers.iter().all(|c| out.node_out[c.node.0]));
        prop_assert_eq!(&a, &realize_scenario(&g, &priors, lo, seed, &repairs, 60.0));
    }

    #[test]
    fn cleared_segments_stay_at_zero(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let g = small_grid(seed, 10, 3);
        let scenario = Scenario::generate(&g, &desk_scenario(seed, 0.3));
        let s = SegmentIx(pick.index(g.segment_count()));
        let mut obs = Observations::new(&g);
        let found: Vec<LineIx> =
            g.segment(s).lines.iter().copied().filter(|l| scenario.realization.is_faulted(*l)).collect();
        obs.record_visit(&g, s, &found, 30.0);
        let calls = CallVector::zeros(g.node_count());
        let belief = posterior_update(&g, &scenario.priors, &calls, &obs, CallModel::settled(0.3), 20).unwrap();
        for l in &g.segment(s).lines {
            prop_assert_eq!(belief.posterior(*l), 0.0);
        }
    }

    #[test]
    fn degenerate_belief_costs_the_true_outage((seed, lines, devices) in grid_params(), mask in any::<u64>()) {
        let g = small_grid(seed, lines, devices);
        let faults = subset(&g, mask);
        let mut post = vec![0.0; g.node_count()];
        for l in &faults {
            post[l.0] = 1.0;
        }
        let belief = BeliefState::from_posteriors(&g, post);
        prop_assert_eq!(expected_customers_out(&g, &belief), propagate_outages(&g, &faults).customers_out as f64);
    }

    #[test]
    fn dp_is_exact_and_tours_are_permutations(seed in any::<u64>(), n in 0usize..7) {
        let g = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut faults = BTreeMap::new();
        while faults.len() < n {
            use rand::Rng;
            faults.insert(SegmentIx(rng.gen_range(0..g.segment_count())), rng.gen_range(20.0..180.0));
        }
        let path = SamplePath::from_faults(&g, Site::Depot, &faults);
        let dp = optimal_tour_dp(&path).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        let mut best = if n == 0 { 0.0 } else { f64::INFINITY };
        heap_permute(&mut order, n, &mut |o| best = f64::min(best, tour_cost(&path, o).unwrap()));
        prop_assert_eq!(dp.outage_minutes, best);
        for tour in [dp.tour, heuristic_tour(&path).tour] {
            let mut sorted = tour.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn engine_conserves_and_integrates(seed in 0u64..500, moves in prop::collection::vec((any::<bool>(), 0usize..1000, 1.0f64..60.0), 0..25)) {
        let g = desk();
        let scenario = Scenario::generate(&g, &desk_scenario(seed, 0.5));
        let cap = 2880.0;
        let mut state = EpisodeState::new(&g, &scenario.realization, cap);
        let mut repaired: Vec<LineIx> = Vec::new();
        let mut areas = vec![0.0];
        for (visit, target, pause) in moves {
            if state.is_finished() {
                break;
            }
            if visit {
                let obs = state.step(SegmentIx(target % g.segment_count())).unwrap();
                repaired.extend(obs.found);
            } else {
                let until = state.clock + pause;
                state.wait(until).unwrap();
            }
            let residual = state.residual_faults();
            prop_assert!(repaired.iter().all(|l| !residual.contains(l)));
            prop_assert_eq!(state.customers_out(), propagate_outages(&g, &residual).customers_out);
            areas.push(state.area());
        }
        prop_assert!(areas.windows(2).all(|w| w[1] >= w[0]));
        let timeline = state.timeline.clone();
        prop_assert!(timeline.windows(2).all(|w| w[1].1 <= w[0].1));
        let (metrics, _) = state.finish();
        let replay = replay_area_by_minute(&timeline, cap) / 60.0;
        prop_assert!((metrics.outage_hours - replay).abs() < 1e-6);
    }
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut dyn FnMut(&[usize])) {
    if k <= 1 {
        out(items);
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        let j = if k.is_multiple_of(2) { i } else { 0 };
        items.swap(j, k - 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_counts_stay_consistent(seed in 0u64..200, iters in 1usize..120) {
        let g = desk();
        let scenario = Scenario::generate(&g, &desk_scenario(seed, 0.5));
        let calls = scenario.realization.new_calls(&g, &vec![None; g.segment_count()], 0.0, 60.0);
        let belief = posterior_update(
            &g, &scenario.priors, &calls, &Observations::new(&g), CallModel::settled(0.5), 20,
        ).unwrap();
        let solver = tour_solver("auto").unwrap();
        let cfg = MctsConfig { seed, ..MctsConfig::default() };
        let look = GridLookahead::new(&g, &belief, &scenario.config.repair_classes, solver.as_ref(), &cfg, 0.01);
        let mut tree = SearchTree::new(&look, look.root(Site::Depot));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..iters {
            if tree.pre[0].terminal {
                break;
            }
            tree.iterate(&look, &cfg, &mut rng);
            prop_assert!(tree.counts_consistent());
        }
    }

    #[test]
    fn sampled_paths_repeat_for_a_seed(seed in any::<u64>()) {
        let g = desk();
        let scenario = Scenario::generate(&g, &desk_scenario(seed % 100, 0.5));
        let post = scenario.priors.values().to_vec();
        let repairs = RepairModel::default();
        let draw = || sample_faults(&g, &post, &[], &repairs, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(draw(), draw());
    }
}

#[test]
fn sampled_fault_frequency_tracks_the_posterior() {
    let g = desk();
    let post: Vec<f64> = (0..g.node_count()).map(|n| if g.is_line(NodeIx(n)) { 0.3 } else { 0.0 }).collect();
    let repairs = RepairModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 10_000;
    let mut hits = vec![0u32; g.segment_count()];
    for _ in 0..draws {
        for s in sample_faults(&g, &post, &[], &repairs, &mut rng).keys() {
            hits[s.0] += 1;
        }
    }
    for (s, seg) in g.segments().iter().enumerate() {
        let p = 1.0 - 0.7f64.powi(seg.lines.len() as i32);
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let freq = hits[s] as f64 / draws as f64;
        assert!((freq - p).abs() <= 4.0 * se.max(1e-9), "segment {s}: {freq} vs {p}");
    }
}

fn random_faults(g: &Grid, n: usize, rng: &mut ChaCha8Rng) -> BTreeMap<SegmentIx, f64> {
    use rand::Rng;
    let mut faults = BTreeMap::new();
    while faults.len() < n {
        faults.insert(SegmentIx(rng.gen_range(0..g.segment_count())), rng.gen_range(20.0..180.0));
    }
    faults
}

#[test]
fn heuristic_stays_within_fifteen_percent_of_dp() {
    use rand::Rng;
    let g = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst: f64 = 0.0;
    let mut total_gap = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(0..=8);
        let path = SamplePath::from_faults(&g, Site::Depot, &random_faults(&g, n, &mut rng));
        let dp = optimal_tour_dp(&path).unwrap().outage_minutes;
        let h = heuristic_tour(&path).outage_minutes;
        assert!(h >= dp);
        if n <= 1 {
            assert_eq!(h, dp);
        }
        let gap = if dp > 0.0 { (h - dp) / dp } else { 0.0 };
        worst = worst.max(gap);
        total_gap += gap;
    }
    eprintln!("heuristic gap over 200 instances: worst {:.2}%, mean {:.2}%", 100.0 * worst, total_gap / 2.0);
    assert!(worst <= 0.15, "worst gap {worst}");
}

#[test]
fn heuristic_handles_thirty_faults_quickly() {
    let g = desk();
    let path = SamplePath::from_faults(&g, Site::Depot, &random_faults(&g, 30, &mut ChaCha8Rng::seed_from_u64(30)));
    let started = std::time::Instant::now();
    let h = heuristic_tour(&path);
    assert!(started.elapsed().as_secs_f64() < 1.0);
    let mut sorted = h.tour.clone();
    sorted.sort();
    assert_eq!(sorted, (0..30).collect::<Vec<_>>());
    assert_eq!(tour_cost(&path, &h.tour).unwrap(), h.outage_minutes);
}
