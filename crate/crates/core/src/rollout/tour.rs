use super::{RolloutError, SamplePath, N_DP_MAX};

#[derive(Clone, Debug, PartialEq)]
pub struct TourValue {
    /// Customer-minutes of outage accrued along the tour.
    pub outage_minutes: f64,
    /// Visit order as indices into `SamplePath::faults`.
    pub tour: Vec<usize>,
}

/// Customer-minutes of visiting the faults in `order`: each leg (travel plus
/// repair) is charged at the customers out before that leg's repair.
pub fn tour_cost(path: &SamplePath, order: &[usize]) -> Result<f64, RolloutError> {
    let n = path.len();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
        return Err(RolloutError::NotAPermutation { expected: n });
    }
    Ok(cost_unchecked(path, order))
}

fn cost_unchecked(path: &SamplePath, order: &[usize]) -> f64 {
    let mut pending = vec![true; path.len()];
    let mut at = 0;
    let mut total = 0.0;
    for &k in order {
        let leg = path.travel[at][k + 1] + path.repair[k];
        total += path.customers_out(&pending) as f64 * leg;
        pending[k] = false;
        at = k + 1;
    }
    total
}

/// Exact minimum-outage tour by DP over repaired subsets.
pub fn optimal_tour_dp(path: &SamplePath) -> Result<TourValue, RolloutError> {
    let n = path.len();
    if n > N_DP_MAX {
        return Err(RolloutError::TooManyFaults { faults: n, max: N_DP_MAX });
    }
    if n == 0 {
        return Ok(TourValue { outage_minutes: 0.0, tour: Vec::new() });
    }
    let full = (1usize << n) - 1;

    // customers out once the faults in `done` are repaired
    let block_masks: Vec<(usize, f64)> =
        path.blocks.iter().map(|(key, c)| (key.iter().fold(0, |m, &k| m | 1 << k), *c as f64)).collect();
    let out: Vec<f64> = (0..=full)
        .map(|done| {
            let pending = full & !done;
            block_masks.iter().filter(|(m, _)| m & pending != 0).map(|(_, c)| c).sum()
        })
        .collect();

    let mut cost = vec![f64::INFINITY; (full + 1) * n];
    let mut prev = vec![usize::MAX; (full + 1) * n];
    for j in 0..n {
        cost[(1 << j) * n + j] = out[0] * (path.travel[0][j + 1] + path.repair[j]);
    }
    for set in 1..=full {
        for j in 0..n {
            if set & 1 << j == 0 {
                continue;
            }
            let before = set & !(1 << j);
            if before == 0 {
                continue;
            }
            let rate = out[before];
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for i in 0..n {
                if before & 1 << i == 0 {
                    continue;
                }
                let c = cost[before * n + i] + rate * (path.travel[i + 1][j + 1] + path.repair[j]);
                if c < best {
                    best = c;
                    arg = i;
                }
            }
            cost[set * n + j] = best;
            prev[set * n + j] = arg;
        }
    }

    let (mut last, mut best) = (0, f64::INFINITY);
    for j in 0..n {
        if cost[full * n + j] < best {
            best = cost[full * n + j];
            last = j;
        }
    }
    let mut tour = Vec::with_capacity(n);
    let mut set = full;
    let mut j = last;
    loop {
        tour.push(j);
        let i = prev[set * n + j];
        set &= !(1 << j);
        if set == 0 {
            break;
        }
        j = i;
    }
    tour.reverse();
    Ok(TourValue { outage_minutes: best, tour })
}

/// Greedy restoration-rate construction followed by 2-opt.
pub fn heuristic_tour(path: &SamplePath) -> TourValue {
    let n = path.len();
    let mut pending = vec![true; n];
    let mut at = 0;
    let mut tour = Vec::with_capacity(n);
    while tour.len() < n {
        let now_out = path.customers_out(&pending);
        let mut best: Option<(usize, f64, f64)> = None;
        let open: Vec<usize> = (0..n).filter(|&k| pending[k]).collect();
        for k in open {
            pending[k] = false;
            let restored = (now_out - path.customers_out(&pending)) as f64;
            pending[k] = true;
            let leg = path.travel[at][k + 1] + path.repair[k];
            let rate = if leg > 0.0 {
                restored / leg
            } else if restored > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let better = match best {
                None => true,
                Some((_, r, l)) => rate > r || (rate == r && leg < l),
            };
            if better {
                best = Some((k, rate, leg));
            }
        }
        let (k, _, _) = best.expect("a pending fault remains");
        pending[k] = false;
        tour.push(k);
        at = k + 1;
    }

    let mut cost = cost_unchecked(path, &tour);
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                tour[i..=j].reverse();
                let c = cost_unchecked(path, &tour);
                if c + 1e-9 < cost {
                    cost = c;
                    improved = true;
                } else {
                    tour[i..=j].reverse();
                }
            }
        }
    }
    TourValue { outage_minutes: cost, tour }
}
