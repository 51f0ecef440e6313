//! Radial distribution grid, road network and the derived topology sets.
//!
//! Every circuit is a tree rooted at its substation. The line feeding node
//! `i` is identified with `i` itself, so [`LineIx`] and [`NodeIx`] share an
//! index space and the substation has no line. A fault on line `j` opens the
//! first protective device strictly upstream of `j` (its *upstream device*)
//! and blacks out every node below that device. Lines sharing an upstream
//! device form a *segment*; segments are what the truck visits.

mod document;
mod road;
mod topology;

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

pub use document::{
    CircuitDocument, GridDocument, NodeDocument, PoleMapping, RoadDocument, RoadEdgeDocument, RoadNodeDocument,
};
pub use road::RoadNetwork;
pub use topology::{derive_topology, TopologyIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub usize);

/// A power line, named by the node it feeds.
pub type LineIx = NodeIx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CircuitIx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentIx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoadIx(pub usize);

/// A place the truck can stand: the depot or the device pole of a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Depot,
    Segment(SegmentIx),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Depot => write!(f, "depot"),
            Site::Segment(s) => write!(f, "segment#{}", s.0),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("cannot read grid file: {0}")]
    Io(String),
    #[error("malformed grid document: {0}")]
    Parse(String),
    #[error("circuit {circuit}: parent links of node {node} form a cycle")]
    CycleInCircuit { circuit: u64, node: u64 },
    #[error("circuit {circuit}: multiple roots {roots:?}")]
    MultipleRoots { circuit: u64, roots: Vec<u64> },
    #[error("circuit {circuit} has no nodes")]
    EmptyCircuit { circuit: u64 },
    #[error("grid node {0} has no pole mapping to a road node")]
    UnmappedGridNode(u64),
    #[error("grid node {0} is mapped to more than one road node")]
    DuplicatePoleMapping(u64),
    #[error("road node {0} is not connected to the rest of the road network")]
    DisconnectedRoad(u64),
    #[error("duplicate grid node id {0}")]
    DuplicateNode(u64),
    #[error("duplicate circuit id {0}")]
    DuplicateCircuit(u64),
    #[error("duplicate road node id {0}")]
    DuplicateRoadNode(u64),
    #[error("node {node} names parent {parent}, which is not in circuit {circuit}")]
    UnknownParent { circuit: u64, node: u64, parent: u64 },
    #[error("unknown grid node id {0}")]
    UnknownNode(u64),
    #[error("unknown road node id {0}")]
    UnknownRoadNode(u64),
    #[error("unknown line id {0}")]
    UnknownLine(u64),
    #[error("protective device {node} has {customers} customers attached")]
    CustomersOnDevice { node: u64, customers: u32 },
    #[error("road edge {from}-{to} has invalid travel time {minutes}")]
    InvalidTravelTime { from: u64, to: u64, minutes: f64 },
    #[error("road network has no nodes")]
    EmptyRoad,
    #[error("road node {to} is unreachable from {from}")]
    Unreachable { from: u64, to: u64 },
}

#[derive(Clone, Debug)]
pub struct GridNode {
    pub id: u64,
    pub circuit: CircuitIx,
    pub parent: Option<NodeIx>,
    pub children: Vec<NodeIx>,
    pub is_device: bool,
    pub customers: u32,
    pub pole: RoadIx,
}

#[derive(Clone, Debug)]
pub struct Circuit {
    pub id: u64,
    pub root: NodeIx,
    /// Dense node indices of this circuit, contiguous and in document order.
    pub nodes: std::ops::Range<usize>,
    pub topology: TopologyIndex,
}

impl Circuit {
    pub fn node_indices(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes.clone().map(NodeIx)
    }

    pub fn lines(&self) -> impl Iterator<Item = LineIx> + '_ {
        let root = self.root;
        self.node_indices().filter(move |&n| n != root)
    }

    pub fn line_count(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Lines sharing one upstream protective device.
#[derive(Clone, Debug)]
pub struct Segment {
    pub circuit: CircuitIx,
    pub device: NodeIx,
    pub lines: Vec<LineIx>,
    /// Customers attached to the nodes fed by this segment's lines.
    pub customers: u64,
    /// Segments whose faults black this one out, from the substation down to itself.
    pub chain: Vec<SegmentIx>,
    pub parent: Option<SegmentIx>,
    pub pole: RoadIx,
}

#[derive(Clone, Debug)]
pub struct Grid {
    nodes: Vec<GridNode>,
    by_id: HashMap<u64, NodeIx>,
    circuits: Vec<Circuit>,
    segments: Vec<Segment>,
    /// Segment of the line feeding each node (`None` for substations).
    segment_of_line: Vec<Option<SegmentIx>>,
    road: RoadNetwork,
    depot: RoadIx,
    /// Shortest travel times between sites; index 0 is the depot, `1 + s` is segment `s`.
    site_travel: Vec<Vec<f64>>,
}

pub fn build_grid(doc: &GridDocument) -> Result<Grid, GridError> {
    Grid::from_document(doc)
}

impl Grid {
    pub fn from_document(doc: &GridDocument) -> Result<Self, GridError> {
        let road = RoadNetwork::from_document(&doc.road)?;

        let mut poles: HashMap<u64, RoadIx> = HashMap::with_capacity(doc.pole_map.len());
        for m in &doc.pole_map {
            let r = road.lookup(m.road_node).ok_or(GridError::UnknownRoadNode(m.road_node))?;
            if poles.insert(m.grid_node, r).is_some() {
                return Err(GridError::DuplicatePoleMapping(m.grid_node));
            }
        }

        let mut nodes: Vec<GridNode> = Vec::new();
        let mut by_id = HashMap::new();
        let mut circuits = Vec::with_capacity(doc.circuits.len());
        let mut circuit_ids = HashSet::new();

        for (cix, cdoc) in doc.circuits.iter().enumerate() {
            if !circuit_ids.insert(cdoc.id) {
                return Err(GridError::DuplicateCircuit(cdoc.id));
            }
            if cdoc.nodes.is_empty() {
                return Err(GridError::EmptyCircuit { circuit: cdoc.id });
            }
            let start = nodes.len();
            for n in &cdoc.nodes {
                if by_id.insert(n.id, NodeIx(nodes.len())).is_some() {
                    return Err(GridError::DuplicateNode(n.id));
                }
                let pole = *poles.get(&n.id).ok_or(GridError::UnmappedGridNode(n.id))?;
                nodes.push(GridNode {
                    id: n.id,
                    circuit: CircuitIx(cix),
                    parent: None,
                    children: Vec::new(),
                    is_device: n.is_device,
                    customers: n.customers,
                    pole,
                });
            }
            let end = nodes.len();

            let mut roots = Vec::new();
            for n in &cdoc.nodes {
                let ix = by_id[&n.id];
                match n.parent {
                    None => roots.push(ix),
                    Some(p) => {
                        let pix = match by_id.get(&p) {
                            Some(&pix) if (start..end).contains(&pix.0) => pix,
                            _ => return Err(GridError::UnknownParent { circuit: cdoc.id, node: n.id, parent: p }),
                        };
                        nodes[ix.0].parent = Some(pix);
                    }
                }
            }
            if roots.len() > 1 {
                return Err(GridError::MultipleRoots {
                    circuit: cdoc.id,
                    roots: roots.iter().map(|r| nodes[r.0].id).collect(),
                });
            }
            check_acyclic(&nodes, start..end, cdoc.id)?;
            let root = roots[0];
            nodes[root.0].is_device = true;

            for i in start..end {
                let node = &nodes[i];
                if node.is_device && node.customers > 0 {
                    return Err(GridError::CustomersOnDevice { node: node.id, customers: node.customers });
                }
                if let Some(p) = node.parent {
                    nodes[p.0].children.push(NodeIx(i));
                }
            }
            circuits.push(Circuit { id: cdoc.id, root, nodes: start..end, topology: TopologyIndex::default() });
        }

        for id in poles.keys() {
            if !by_id.contains_key(id) {
                return Err(GridError::UnknownNode(*id));
            }
        }
        let depot = road.lookup(doc.depot).ok_or(GridError::UnknownRoadNode(doc.depot))?;

        let mut grid = Grid {
            nodes,
            by_id,
            circuits,
            segments: Vec::new(),
            segment_of_line: Vec::new(),
            road,
            depot,
            site_travel: Vec::new(),
        };
        grid.build_segments();
        for c in 0..grid.circuits.len() {
            let topo = derive_topology(&grid, CircuitIx(c));
            grid.circuits[c].topology = topo;
        }
        grid.build_site_travel();
        Ok(grid)
    }

    fn build_segments(&mut self) {
        let n = self.nodes.len();
        // nearest strict-ancestor device per node
        let mut upstream = vec![None; n];
        for c in &self.circuits {
            for ix in preorder(&self.nodes, c.root) {
                if let Some(p) = self.nodes[ix.0].parent {
                    upstream[ix.0] = Some(if self.nodes[p.0].is_device {
                        p
                    } else {
                        upstream[p.0].expect("non-root ancestors have an upstream device")
                    });
                }
            }
        }
        let mut lines_by_device: Vec<Vec<LineIx>> = vec![Vec::new(); n];
        for (i, up) in upstream.iter().enumerate() {
            if let Some(d) = up {
                lines_by_device[d.0].push(NodeIx(i));
            }
        }
        let mut seg_of_device = vec![None; n];
        let mut segments = Vec::new();
        for d in 0..n {
            if lines_by_device[d].is_empty() {
                continue;
            }
            let lines = std::mem::take(&mut lines_by_device[d]);
            let customers = lines.iter().map(|l| self.nodes[l.0].customers as u64).sum();
            seg_of_device[d] = Some(SegmentIx(segments.len()));
            segments.push(Segment {
                circuit: self.nodes[d].circuit,
                device: NodeIx(d),
                lines,
                customers,
                chain: Vec::new(),
                parent: None,
                pole: self.nodes[d].pole,
            });
        }
        // A device's segment hangs below the segment containing the line feeding it.
        for s in 0..segments.len() {
            let d = segments[s].device;
            let parent = upstream[d.0].map(|up| seg_of_device[up.0].expect("upstream device owns a segment"));
            segments[s].parent = parent;
        }
        for s in 0..segments.len() {
            let mut chain = vec![SegmentIx(s)];
            let mut cur = segments[s].parent;
            while let Some(p) = cur {
                chain.push(p);
                cur = segments[p.0].parent;
            }
            chain.reverse();
            segments[s].chain = chain;
        }
        self.segment_of_line = upstream
            .iter()
            .map(|up| up.map(|d| seg_of_device[d.0].expect("device with lines owns a segment")))
            .collect();
        self.segments = segments;
    }

    fn build_site_travel(&mut self) {
        let sites: Vec<RoadIx> = std::iter::once(self.depot).chain(self.segments.iter().map(|s| s.pole)).collect();
        let mut cache: HashMap<RoadIx, Vec<Option<f64>>> = HashMap::new();
        let mut matrix = vec![vec![0.0; sites.len()]; sites.len()];
        for (i, &a) in sites.iter().enumerate() {
            let row = cache.entry(a).or_insert_with(|| self.road.distances_from(a));
            for (j, &b) in sites.iter().enumerate() {
                matrix[i][j] = row[b.0].expect("road network is connected");
            }
        }
        // enforce exact symmetry against float noise in path sums
        for i in 0..sites.len() {
            for j in 0..i {
                let m = matrix[i][j].min(matrix[j][i]);
                matrix[i][j] = m;
                matrix[j][i] = m;
            }
        }
        self.site_travel = matrix;
    }

    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn node(&self, ix: NodeIx) -> &GridNode {
        &self.nodes[ix.0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn lookup_node(&self, id: u64) -> Option<NodeIx> {
        self.by_id.get(&id).copied()
    }

    pub fn circuits(&self) -> &[Circuit] {
        &self.circuits
    }

    pub fn circuit(&self, ix: CircuitIx) -> &Circuit {
        &self.circuits[ix.0]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, ix: SegmentIx) -> &Segment {
        &self.segments[ix.0]
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn road(&self) -> &RoadNetwork {
        &self.road
    }

    pub fn depot(&self) -> RoadIx {
        self.depot
    }

    pub fn is_line(&self, ix: NodeIx) -> bool {
        ix.0 < self.nodes.len() && self.nodes[ix.0].parent.is_some()
    }

    /// All lines of the grid in dense order.
    pub fn lines(&self) -> impl Iterator<Item = LineIx> + '_ {
        (0..self.nodes.len()).map(NodeIx).filter(move |&n| self.is_line(n))
    }

    pub fn line_count(&self) -> usize {
        self.circuits.iter().map(Circuit::line_count).sum()
    }

    /// Segment containing `line`; `None` for substation nodes.
    pub fn segment_of_line(&self, line: LineIx) -> Option<SegmentIx> {
        self.segment_of_line[line.0]
    }

    /// First protective device strictly upstream of `node`.
    pub fn upstream_device(&self, node: NodeIx) -> Option<NodeIx> {
        self.segment_of_line(node).map(|s| self.segments[s.0].device)
    }

    pub fn total_customers(&self) -> u64 {
        self.nodes.iter().map(|n| n.customers as u64).sum()
    }

    pub fn circuit_customers(&self, c: CircuitIx) -> u64 {
        self.circuits[c.0].node_indices().map(|n| self.nodes[n.0].customers as u64).sum()
    }

    pub fn device_count(&self, c: CircuitIx) -> usize {
        self.circuits[c.0].node_indices().filter(|n| self.nodes[n.0].is_device).count()
    }

    pub fn site_pole(&self, site: Site) -> RoadIx {
        match site {
            Site::Depot => self.depot,
            Site::Segment(s) => self.segments[s.0].pole,
        }
    }

    fn site_slot(site: Site) -> usize {
        match site {
            Site::Depot => 0,
            Site::Segment(s) => s.0 + 1,
        }
    }

    /// Shortest road travel time between two sites, from the precomputed table.
    pub fn travel(&self, from: Site, to: Site) -> f64 {
        self.site_travel[Self::site_slot(from)][Self::site_slot(to)]
    }

    pub fn shortest_travel_time(&self, from: RoadIx, to: RoadIx) -> Result<f64, GridError> {
        self.road.shortest_travel_time(from, to)
    }

    /// Whether segment `s` is blacked out when exactly `faulted` segments hold faults.
    pub fn segment_out(&self, s: SegmentIx, faulted: &[bool]) -> bool {
        self.segments[s.0].chain.iter().any(|c| faulted[c.0])
    }

    /// Marks the segments holding at least one of `faults`.
    pub fn faulted_segments<'a>(&self, faults: impl IntoIterator<Item = &'a LineIx>) -> Vec<bool> {
        let mut seg = vec![false; self.segments.len()];
        for l in faults {
            if let Some(s) = self.segment_of_line(*l) {
                seg[s.0] = true;
            }
        }
        seg
    }

    /// Customers without power when exactly `faulted` segments hold faults.
    pub fn customers_out_by_segment(&self, faulted: &[bool]) -> u64 {
        self.segments
            .iter()
            .enumerate()
            .filter(|(s, _)| self.segment_out(SegmentIx(*s), faulted))
            .map(|(_, seg)| seg.customers)
            .sum()
    }

    /// Exact number of customers out on `circuit` when precisely `faults` are faulted.
    pub fn affected_customers(&self, circuit: CircuitIx, faults: &[LineIx]) -> Result<u64, GridError> {
        let range = &self.circuits[circuit.0].nodes;
        for l in faults {
            if !range.contains(&l.0) || !self.is_line(*l) {
                let id = self.nodes.get(l.0).map(|n| n.id).unwrap_or(l.0 as u64);
                return Err(GridError::UnknownLine(id));
            }
        }
        let faulted = self.faulted_segments(faults);
        Ok(self
            .segments
            .iter()
            .enumerate()
            .filter(|(s, seg)| seg.circuit == circuit && self.segment_out(SegmentIx(*s), &faulted))
            .map(|(_, seg)| seg.customers)
            .sum())
    }

    /// Lowest common ancestor of a non-empty set of nodes on one circuit.
    pub fn common_ancestor(&self, nodes: &[NodeIx]) -> Option<NodeIx> {
        let (&first, rest) = nodes.split_first()?;
        let mut path = self.path_to_root(first);
        for &n in rest {
            let other: HashSet<NodeIx> = self.path_to_root(n).into_iter().collect();
            path.retain(|p| other.contains(p));
        }
        path.first().copied()
    }

    /// `node` followed by its ancestors up to the substation.
    pub fn path_to_root(&self, node: NodeIx) -> Vec<NodeIx> {
        let mut out = vec![node];
        let mut cur = self.nodes[node.0].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p.0].parent;
        }
        out
    }

    /// Whether `ancestor` lies on the path from `node` to its substation (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: NodeIx, node: NodeIx) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes[c.0].parent;
        }
        false
    }
}

pub(crate) fn preorder(nodes: &[GridNode], root: NodeIx) -> Vec<NodeIx> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        out.push(n);
        for &c in nodes[n.0].children.iter().rev() {
            stack.push(c);
        }
    }
    out
}

fn check_acyclic(nodes: &[GridNode], range: std::ops::Range<usize>, circuit: u64) -> Result<(), GridError> {
    // 0 = unvisited, 1 = on the current walk, 2 = reaches the root
    let mut state = vec![0u8; range.len()];
    let base = range.start;
    for start in range.clone() {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(c) = cur {
            match state[c - base] {
                2 => break,
                1 => return Err(GridError::CycleInCircuit { circuit, node: nodes[c].id }),
                _ => {
                    state[c - base] = 1;
                    walk.push(c);
                    cur = nodes[c].parent.map(|p| p.0);
                }
            }
        }
        for w in walk {
            state[w - base] = 2;
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Builds a single-circuit grid from `(id, parent, is_device, customers)` rows,
    /// with every node on its own road node along a line 5 minutes apart.
    pub(crate) fn tiny(rows: &[(u64, Option<u64>, bool, u32)]) -> GridDocument {
        let nodes = rows
            .iter()
            .map(|&(id, parent, is_device, customers)| NodeDocument { id, parent, is_device, customers })
            .collect();
        let road_nodes: Vec<_> =
            rows.iter().enumerate().map(|(k, r)| RoadNodeDocument { id: r.0, x: k as f64, y: 0.0 }).collect();
        let edges = rows.windows(2).map(|w| RoadEdgeDocument { from: w[0].0, to: w[1].0, minutes: 5.0 }).collect();
        GridDocument {
            depot: rows[0].0,
            circuits: vec![CircuitDocument { id: 0, nodes }],
            road: RoadDocument { nodes: road_nodes, edges },
            pole_map: rows.iter().map(|r| PoleMapping { grid_node: r.0, road_node: r.0 }).collect(),
        }
    }

    #[test]
    fn smallest_tree_has_one_segment() {
        let doc = tiny(&[(1, None, true, 0), (2, Some(1), false, 0), (3, Some(2), false, 5)]);
        let g = build_grid(&doc).unwrap();
        assert_eq!(g.segment_count(), 1);
        let seg = g.segment(SegmentIx(0));
        assert_eq!(seg.device, NodeIx(0));
        assert_eq!(seg.lines, vec![NodeIx(1), NodeIx(2)]);
        assert_eq!(seg.customers, 5);
    }

    #[test]
    fn parent_cycle_is_rejected() {
        let doc = tiny(&[(1, None, true, 0), (2, Some(3), false, 0), (3, Some(2), false, 1)]);
        assert_eq!(build_grid(&doc).unwrap_err(), GridError::CycleInCircuit { circuit: 0, node: 2 });
    }

    #[test]
    fn rootless_circuit_is_a_cycle() {
        let doc = tiny(&[(1, Some(2), true, 0), (2, Some(1), false, 0)]);
        assert!(matches!(build_grid(&doc), Err(GridError::CycleInCircuit { .. })));
    }

    #[test]
    fn multiple_roots_are_named() {
        let doc = tiny(&[(1, None, true, 0), (2, None, true, 0)]);
        assert_eq!(build_grid(&doc).unwrap_err(), GridError::MultipleRoots { circuit: 0, roots: vec![1, 2] });
    }

    #[test]
    fn unmapped_node_is_named() {
        let mut doc = tiny(&[(1, None, true, 0), (2, Some(1), false, 3)]);
        doc.pole_map.pop();
        assert_eq!(build_grid(&doc).unwrap_err(), GridError::UnmappedGridNode(2));
    }

    #[test]
    fn disconnected_road_is_named() {
        let mut doc = tiny(&[(1, None, true, 0), (2, Some(1), false, 3)]);
        doc.road.nodes.push(RoadNodeDocument { id: 99, x: 9.0, y: 9.0 });
        assert_eq!(build_grid(&doc).unwrap_err(), GridError::DisconnectedRoad(99));
    }

    #[test]
    fn customers_on_devices_are_rejected() {
        let doc = tiny(&[(1, None, true, 0), (2, Some(1), true, 3)]);
        assert!(matches!(build_grid(&doc), Err(GridError::CustomersOnDevice { node: 2, .. })));
    }

    #[test]
    fn affected_customers_basics() {
        // root -> a -> b(device) -> c
        let doc = tiny(&[(1, None, true, 0), (2, Some(1), false, 4), (3, Some(2), true, 0), (4, Some(3), false, 6)]);
        let g = build_grid(&doc).unwrap();
        let c = CircuitIx(0);
        assert_eq!(g.affected_customers(c, &[]).unwrap(), 0);
        // the substation feeder blacks out everything
        assert_eq!(g.affected_customers(c, &[NodeIx(1)]).unwrap(), 10);
        assert_eq!(g.affected_customers(c, &[NodeIx(3)]).unwrap(), 6);
        assert_eq!(g.affected_customers(c, &[NodeIx(0)]), Err(GridError::UnknownLine(1)));
    }

    #[test]
    fn travel_identity_and_sum() {
        let doc = tiny(&[(1, None, true, 0), (2, Some(1), false, 1), (3, Some(2), false, 1)]);
        let mut doc = doc;
        doc.road.edges[0].minutes = 3.0;
        doc.road.edges[1].minutes = 4.0;
        let g = build_grid(&doc).unwrap();
        assert_eq!(g.shortest_travel_time(RoadIx(1), RoadIx(1)).unwrap(), 0.0);
        assert_eq!(g.shortest_travel_time(RoadIx(0), RoadIx(2)).unwrap(), 7.0);
        assert_eq!(g.shortest_travel_time(RoadIx(2), RoadIx(0)).unwrap(), 7.0);
    }
}
