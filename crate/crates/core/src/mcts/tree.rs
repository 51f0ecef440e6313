use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Backup, LookaheadModel, MctsConfig};

pub struct PreNode<M: LookaheadModel> {
    pub state: M::State,
    pub visits: u64,
    /// Visits that ended here as a leaf evaluation rather than passing through.
    pub leaf_visits: u64,
    pub value: f64,
    pub terminal: bool,
    /// Explored actions with their post-decision node, ascending by action.
    pub explored: Vec<(M::Action, usize)>,
    pub unexplored: Vec<M::Action>,
    pub parent: Option<usize>,
}

pub struct OutcomeSlot<M: LookaheadModel> {
    pub outcome: M::Outcome,
    pub probability: f64,
    /// Child pre-decision node and the cost of the transition into it.
    pub child: Option<(usize, f64)>,
}

pub struct PostNode<M: LookaheadModel> {
    pub action: M::Action,
    pub parent: usize,
    pub decision_cost: f64,
    pub count: u64,
    pub value: f64,
    pub outcomes: Vec<OutcomeSlot<M>>,
}

impl<M: LookaheadModel> PostNode<M> {
    /// Probability-weighted mean of explored outcomes, renormalised over the explored mass.
    fn closed_form_value(&self, pre: &[PreNode<M>]) -> f64 {
        let (mut mass, mut acc) = (0.0, 0.0);
        for slot in &self.outcomes {
            if let Some((child, edge)) = slot.child {
                mass += slot.probability;
                acc += slot.probability * (edge + pre[child].value);
            }
        }
        if mass > 0.0 {
            acc / mass
        } else {
            0.0
        }
    }
}

/// UCT score of an explored action; higher is better for a cost-minimising search.
pub fn select_uct_score(cost_plus_value: f64, parent_visits: u64, action_visits: u64, alpha: f64) -> f64 {
    -cost_plus_value + alpha * ((parent_visits as f64).ln() / action_visits as f64).sqrt()
}

/// One importance-weighted draw of a post-decision value.
///
/// An explored outcome is drawn uniformly, weighted by `p / g`, and the
/// result is scaled by the inverse of the explored probability mass.
/// `outcomes` holds `(probability, edge cost + child value, explored)`.
pub fn importance_sample_value(outcomes: &[(f64, f64, bool)], rng: &mut impl Rng) -> f64 {
    let explored: Vec<&(f64, f64, bool)> = outcomes.iter().filter(|o| o.2).collect();
    if explored.is_empty() {
        return 0.0;
    }
    let mass: f64 = explored.iter().map(|o| o.0).sum();
    let g = 1.0 / explored.len() as f64;
    let pick = explored[rng.gen_range(0..explored.len())];
    (pick.0 / g) * pick.1 / mass
}

enum Draw {
    Expand(usize),
    Descend(usize),
}

pub struct SearchTree<M: LookaheadModel> {
    pub pre: Vec<PreNode<M>>,
    pub post: Vec<PostNode<M>>,
}

impl<M: LookaheadModel> SearchTree<M> {
    pub fn new(model: &M, root: M::State) -> Self {
        let mut tree = Self { pre: Vec::new(), post: Vec::new() };
        tree.push_pre(model, root, None);
        tree
    }

    fn push_pre(&mut self, model: &M, state: M::State, parent: Option<usize>) -> usize {
        let terminal = model.is_terminal(&state);
        let unexplored = if terminal { Vec::new() } else { model.actions(&state) };
        self.pre.push(PreNode {
            state,
            visits: 0,
            leaf_visits: 0,
            value: 0.0,
            terminal,
            explored: Vec::new(),
            unexplored,
            parent,
        });
        self.pre.len() - 1
    }

    fn push_post(&mut self, model: &M, parent: usize, action: M::Action) -> usize {
        let state = &self.pre[parent].state;
        let outcomes = model
            .outcomes(state, action)
            .into_iter()
            .map(|(outcome, probability)| OutcomeSlot { outcome, probability, child: None })
            .collect();
        self.post.push(PostNode {
            action,
            parent,
            decision_cost: model.decision_cost(state, action),
            count: 0,
            value: 0.0,
            outcomes,
        });
        let ix = self.post.len() - 1;
        let node = &mut self.pre[parent];
        node.unexplored.retain(|a| *a != action);
        let at = node.explored.partition_point(|(a, _)| *a < action);
        node.explored.insert(at, (action, ix));
        ix
    }

    fn attach_outcome(&mut self, model: &M, post: usize, slot: usize) -> usize {
        let parent = self.post[post].parent;
        let action = self.post[post].action;
        let outcome = self.post[post].outcomes[slot].outcome;
        let (next, edge) = model.transition(&self.pre[parent].state, action, outcome);
        let child = self.push_pre(model, next, Some(post));
        self.post[post].outcomes[slot].child = Some((child, edge));
        child
    }

    fn leaf_value(&self, model: &M, node: usize, rng: &mut ChaCha8Rng) -> f64 {
        let n = &self.pre[node];
        if n.terminal {
            model.terminal_value(&n.state)
        } else {
            model.evaluate(&n.state, rng)
        }
    }

    fn d_thr(&self, node: usize, cfg: &MctsConfig) -> usize {
        let n = &self.pre[node];
        let width = n.explored.len() + n.unexplored.len();
        cfg.d_thr.unwrap_or(5.min(width))
    }

    /// One tree-policy descent, leaf evaluation and backup.
    pub fn iterate(&mut self, model: &M, cfg: &MctsConfig, rng: &mut ChaCha8Rng) {
        let (leaf, value) = self.tree_policy(model, cfg, rng);
        self.backup(leaf, value, cfg.backup);
    }

    /// Descends to a fresh or terminal leaf and returns it with its value.
    pub fn tree_policy(&mut self, model: &M, cfg: &MctsConfig, rng: &mut ChaCha8Rng) -> (usize, f64) {
        let mut node = 0;
        loop {
            if self.pre[node].terminal {
                return (node, self.leaf_value(model, node, rng));
            }
            let n = &self.pre[node];
            if n.explored.len() < self.d_thr(node, cfg) && !n.unexplored.is_empty() {
                return self.expand_optimistic(model, node, rng);
            }
            let post = self.select_uct(node, cfg.alpha, cfg.relative_costs);
            match self.sample_outcome(post, cfg.e_thr, rng).0 {
                Draw::Expand(slot) => {
                    let child = self.attach_outcome(model, post, slot);
                    return (child, self.leaf_value(model, child, rng));
                }
                Draw::Descend(slot) => {
                    node = self.post[post].outcomes[slot].child.expect("explored").0;
                }
            }
        }
    }

    /// Scores every unexplored action by one sampled outcome and expands the cheapest.
    pub fn expand_optimistic(&mut self, model: &M, node: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
        let state = &self.pre[node].state;
        let mut best: Option<(M::Action, usize, f64, f64)> = None;
        // candidates share one random stream so their estimates differ by the action, not the luck
        let base = ChaCha8Rng::seed_from_u64(rng.gen());
        let u: f64 = rng.gen();
        for &a in &self.pre[node].unexplored {
            let mut rng = base.clone();
            let outcomes = model.outcomes(state, a);
            let mut acc = 0.0;
            let mut pick = outcomes.len() - 1;
            for (k, (_, p)) in outcomes.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            let (next, edge) = model.transition(state, a, outcomes[pick].0);
            let child_value =
                if model.is_terminal(&next) { model.terminal_value(&next) } else { model.evaluate(&next, &mut rng) };
            let total = model.decision_cost(state, a) + edge + child_value;
            if best.as_ref().is_none_or(|b| total < b.3) {
                best = Some((a, pick, child_value, total));
            }
        }
        let (a, slot, child_value, _) = best.expect("an unexplored action exists");
        let post = self.push_post(model, node, a);
        let child = self.attach_outcome(model, post, slot);
        (child, child_value)
    }

    /// Explored action maximising the UCT score, ties by ascending action.
    pub fn select_uct(&self, node: usize, alpha: f64, relative: bool) -> usize {
        let n = &self.pre[node];
        let scale = if relative && n.value.abs() > 0.0 { n.value.abs() } else { 1.0 };
        let mut best = (f64::NEG_INFINITY, n.explored[0].1);
        for &(_, post) in &n.explored {
            let p = &self.post[post];
            let score = select_uct_score((p.decision_cost + p.value) / scale, n.visits.max(1), p.count.max(1), alpha);
            if score > best.0 {
                best = (score, post);
            }
        }
        best.1
    }

    /// Draws an outcome uniformly from the unexplored set while expansion is
    /// allowed, else from the explored set; returns the slot and `p / g`.
    fn sample_outcome(&self, post: usize, e_thr: Option<usize>, rng: &mut ChaCha8Rng) -> (Draw, f64) {
        let node = &self.post[post];
        let (explored, unexplored): (Vec<usize>, Vec<usize>) =
            (0..node.outcomes.len()).partition(|&k| node.outcomes[k].child.is_some());
        let limit = e_thr.unwrap_or(node.outcomes.len());
        let (pool, expand) =
            if explored.len() < limit && !unexplored.is_empty() { (unexplored, true) } else { (explored, false) };
        let slot = pool[rng.gen_range(0..pool.len())];
        let weight = node.outcomes[slot].probability * pool.len() as f64;
        (if expand { Draw::Expand(slot) } else { Draw::Descend(slot) }, weight)
    }

    /// Outcome slot drawn under the uniform proposal, with its weight `p / g`.
    pub fn sample_outcome_importance(&self, post: usize, e_thr: Option<usize>, rng: &mut ChaCha8Rng) -> (usize, f64) {
        match self.sample_outcome(post, e_thr, rng) {
            (Draw::Expand(slot) | Draw::Descend(slot), w) => (slot, w),
        }
    }

    /// Propagates a leaf value to the root.
    pub fn backup(&mut self, leaf: usize, value: f64, rule: Backup) {
        let n = &mut self.pre[leaf];
        n.visits += 1;
        n.leaf_visits += 1;
        n.value += (value - n.value) / n.visits as f64;
        let mut cur = leaf;
        while let Some(post) = self.pre[cur].parent {
            let v = self.post[post].closed_form_value(&self.pre);
            let p = &mut self.post[post];
            p.count += 1;
            p.value = v;
            let delta = p.decision_cost + v;
            let parent = p.parent;
            let n = &mut self.pre[parent];
            n.visits += 1;
            n.value = match rule {
                Backup::RunningMean => n.value + (delta - n.value) / n.visits as f64,
                Backup::Min => n
                    .explored
                    .iter()
                    .map(|&(_, q)| self.post[q].decision_cost + self.post[q].value)
                    .fold(f64::INFINITY, f64::min),
            };
            cur = parent;
        }
    }

    pub fn root_action_values(&self) -> Vec<(M::Action, f64, u64)> {
        self.pre[0]
            .explored
            .iter()
            .map(|&(a, q)| {
                let p = &self.post[q];
                (a, p.decision_cost + p.value, p.count)
            })
            .collect()
    }

    /// Explored-outcome table of a post-decision node for importance sampling.
    pub fn outcome_table(&self, post: usize) -> Vec<(f64, f64, bool)> {
        self.post[post]
            .outcomes
            .iter()
            .map(|s| match s.child {
                Some((c, edge)) => (s.probability, edge + self.pre[c].value, true),
                None => (s.probability, 0.0, false),
            })
            .collect()
    }

    /// Checks `N = sum of action counts + leaf visits` and post counts against children.
    pub fn counts_consistent(&self) -> bool {
        let pre_ok = self.pre.iter().all(|n| {
            let through: u64 = n.explored.iter().map(|&(_, q)| self.post[q].count).sum();
            n.visits == through + n.leaf_visits
        });
        let post_ok = self.post.iter().all(|p| {
            let below: u64 = p.outcomes.iter().filter_map(|s| s.child).map(|(c, _)| self.pre[c].visits).sum();
            p.count == below
        });
        pre_ok && post_ok
    }

    pub fn dump(&self) -> TreeDump {
        TreeDump {
            pre: self
                .pre
                .iter()
                .enumerate()
                .map(|(id, n)| PreDump {
                    id,
                    parent_post: n.parent,
                    visits: n.visits,
                    value: n.value,
                    terminal: n.terminal,
                    children: n.explored.iter().map(|&(_, q)| q).collect(),
                })
                .collect(),
            post: self
                .post
                .iter()
                .enumerate()
                .map(|(id, p)| PostDump {
                    id,
                    parent_pre: p.parent,
                    action: format!("{:?}", p.action),
                    count: p.count,
                    decision_cost: p.decision_cost,
                    value: p.value,
                    outcomes: p
                        .outcomes
                        .iter()
                        .map(|s| OutcomeDump {
                            outcome: format!("{:?}", s.outcome),
                            probability: s.probability,
                            child_pre: s.child.map(|c| c.0),
                            edge_cost: s.child.map(|c| c.1),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PreDump {
    pub id: usize,
    pub parent_post: Option<usize>,
    pub visits: u64,
    pub value: f64,
    pub terminal: bool,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeDump {
    pub outcome: String,
    pub probability: f64,
    pub child_pre: Option<usize>,
    pub edge_cost: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PostDump {
    pub id: usize,
    pub parent_pre: usize,
    pub action: String,
    pub count: u64,
    pub decision_cost: f64,
    pub value: f64,
    pub outcomes: Vec<OutcomeDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeDump {
    pub pre: Vec<PreDump>,
    pub post: Vec<PostDump>,
}
