use std::collections::HashMap;

use petgraph::algo::{connected_components, dijkstra};
use petgraph::graph::{NodeIndex, UnGraph};

use super::{GridError, RoadIx};
use crate::grid::document::RoadDocument;

/// Undirected road graph with static base travel times in minutes.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    ids: Vec<u64>,
    coords: Vec<(f64, f64)>,
    by_id: HashMap<u64, RoadIx>,
    graph: UnGraph<(), f64>,
}

impl RoadNetwork {
    pub(crate) fn from_document(doc: &RoadDocument) -> Result<Self, GridError> {
        let mut ids = Vec::with_capacity(doc.nodes.len());
        let mut coords = Vec::with_capacity(doc.nodes.len());
        let mut by_id = HashMap::with_capacity(doc.nodes.len());
        let mut graph = UnGraph::with_capacity(doc.nodes.len(), doc.edges.len());
        for node in &doc.nodes {
            if by_id.insert(node.id, RoadIx(ids.len())).is_some() {
                return Err(GridError::DuplicateRoadNode(node.id));
            }
            ids.push(node.id);
            coords.push((node.x, node.y));
            graph.add_node(());
        }
        if ids.is_empty() {
            return Err(GridError::EmptyRoad);
        }
        for edge in &doc.edges {
            let from = *by_id.get(&edge.from).ok_or(GridError::UnknownRoadNode(edge.from))?;
            let to = *by_id.get(&edge.to).ok_or(GridError::UnknownRoadNode(edge.to))?;
            if !(edge.minutes.is_finite() && edge.minutes >= 0.0) {
                return Err(GridError::InvalidTravelTime { from: edge.from, to: edge.to, minutes: edge.minutes });
            }
            graph.add_edge(NodeIndex::new(from.0), NodeIndex::new(to.0), edge.minutes);
        }
        let net = Self { ids, coords, by_id, graph };
        if connected_components(&net.graph) != 1 {
            let reach = net.distances_from(RoadIx(0));
            let stranded = (0..net.len()).find(|&i| reach[i].is_none()).unwrap_or(0);
            return Err(GridError::DisconnectedRoad(net.ids[stranded]));
        }
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn id(&self, ix: RoadIx) -> u64 {
        self.ids[ix.0]
    }

    pub fn lookup(&self, id: u64) -> Option<RoadIx> {
        self.by_id.get(&id).copied()
    }

    pub fn coords(&self, ix: RoadIx) -> (f64, f64) {
        self.coords[ix.0]
    }

    /// Single-source shortest travel times; `None` marks unreachable nodes.
    pub fn distances_from(&self, source: RoadIx) -> Vec<Option<f64>> {
        let found = dijkstra(&self.graph, NodeIndex::new(source.0), None, |e| *e.weight());
        let mut out = vec![None; self.len()];
        for (node, dist) in found {
            out[node.index()] = Some(dist);
        }
        out
    }

    pub fn shortest_travel_time(&self, from: RoadIx, to: RoadIx) -> Result<f64, GridError> {
        if from == to {
            return Ok(0.0);
        }
        let goal = NodeIndex::new(to.0);
        let found = dijkstra(&self.graph, NodeIndex::new(from.0), Some(goal), |e| *e.weight());
        found.get(&goal).copied().ok_or(GridError::Unreachable { from: self.id(from), to: self.id(to) })
    }
}
