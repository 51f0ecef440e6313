use std::collections::{BTreeMap, BTreeSet};

use super::{idle, Policy};
use crate::engine::{Action, Decide, DecisionContext};
use crate::grid::{CircuitIx, Grid, NodeIx, SegmentIx, Site};
use crate::storm::CallVector;
use crate::Error;

/// Call-driven trace sweep, replanned from all calls received so far.
#[derive(Default)]
pub struct EscalationPolicy;

/// Segment the truck visits to inspect node `n`.
fn segment_at(grid: &Grid, n: NodeIx) -> Option<SegmentIx> {
    grid.segment_of_line(n).or_else(|| {
        let c = grid.node(n).circuit;
        grid.circuit(c).topology.segments().iter().copied().find(|s| grid.segment(*s).device == n)
    })
}

/// Visit order for one circuit: the calls' common ancestor, its device chain
/// up to the substation, then a depth-first sweep down to every calling segment.
pub fn escalation_plan(grid: &Grid, circuit: CircuitIx, calls: &CallVector) -> Vec<SegmentIx> {
    let callers: Vec<NodeIx> = grid.circuit(circuit).node_indices().filter(|n| calls.get(*n) > 0).collect();
    let Some(top) = grid.common_ancestor(&callers).and_then(|x| segment_at(grid, x)) else {
        return Vec::new();
    };
    let mut plan = vec![top];
    plan.extend(grid.segment(top).chain.iter().rev().skip(1));

    let mut below: BTreeSet<SegmentIx> = BTreeSet::new();
    for &k in &callers {
        if let Some(s) = segment_at(grid, k) {
            let chain = &grid.segment(s).chain;
            if let Some(from) = chain.iter().position(|c| *c == top) {
                below.extend(&chain[from + 1..]);
            }
        }
    }
    let mut children: BTreeMap<SegmentIx, Vec<SegmentIx>> = BTreeMap::new();
    for &s in &below {
        if let Some(p) = grid.segment(s).parent {
            children.entry(p).or_default().push(s);
        }
    }
    let mut stack = vec![top];
    while let Some(s) = stack.pop() {
        if s != top {
            plan.push(s);
        }
        if let Some(kids) = children.get(&s) {
            let mut kids = kids.clone();
            let from = Site::Segment(s);
            kids.sort_by(|a, b| {
                grid.travel(from, Site::Segment(*a)).total_cmp(&grid.travel(from, Site::Segment(*b))).then(a.cmp(b))
            });
            stack.extend(kids.into_iter().rev());
        }
    }
    let mut seen = BTreeSet::new();
    plan.retain(|s| seen.insert(*s));
    plan
}

impl Decide for EscalationPolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> Result<Action, Error> {
        let mut best: Option<(f64, SegmentIx)> = None;
        for c in 0..ctx.grid.circuits().len() {
            let next = escalation_plan(ctx.grid, CircuitIx(c), ctx.calls)
                .into_iter()
                .find(|s| !ctx.observations.is_visited(*s));
            if let Some(s) = next {
                let t = ctx.grid.travel(ctx.at, Site::Segment(s));
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, s));
                }
            }
        }
        Ok(match best {
            Some((_, s)) => Action::Visit(s),
            None => idle(ctx),
        })
    }
}

impl Policy for EscalationPolicy {
    fn name(&self) -> &'static str {
        "escalation"
    }
}
