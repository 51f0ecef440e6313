use super::{preorder, CircuitIx, Grid, LineIx, NodeIx, SegmentIx};

/// Per-circuit topology sets, indexed by node.
///
/// * upstream device `d_i`: first protective device strictly above node `i`
/// * segment `S_i`: the lines sharing `d_i`
/// * outage set `Q_i`: lines whose fault blacks out node `i`
/// * downstream segments `W_i`: segments below `i` keyed by a different device
#[derive(Clone, Debug, Default)]
pub struct TopologyIndex {
    base: usize,
    segments: Vec<SegmentIx>,
    upstream_device: Vec<Option<NodeIx>>,
    segment_of: Vec<Option<SegmentIx>>,
    outage_set: Vec<Vec<LineIx>>,
    downstream_segments: Vec<Vec<SegmentIx>>,
}

impl TopologyIndex {
    fn slot(&self, n: NodeIx) -> usize {
        n.0 - self.base
    }

    pub fn segments(&self) -> &[SegmentIx] {
        &self.segments
    }

    pub fn upstream_device(&self, n: NodeIx) -> Option<NodeIx> {
        self.upstream_device[self.slot(n)]
    }

    pub fn segment_of(&self, n: NodeIx) -> Option<SegmentIx> {
        self.segment_of[self.slot(n)]
    }

    /// Sorted lines whose fault blacks out node `n`.
    pub fn outage_set(&self, n: NodeIx) -> &[LineIx] {
        &self.outage_set[self.slot(n)]
    }

    pub fn downstream_segments(&self, n: NodeIx) -> &[SegmentIx] {
        &self.downstream_segments[self.slot(n)]
    }
}

pub fn derive_topology(grid: &Grid, circuit: CircuitIx) -> TopologyIndex {
    let c = &grid.circuits[circuit.0];
    let base = c.nodes.start;
    let len = c.nodes.len();

    let segments: Vec<SegmentIx> =
        (0..grid.segments.len()).map(SegmentIx).filter(|s| grid.segments[s.0].circuit == circuit).collect();

    let mut upstream_device = vec![None; len];
    let mut segment_of = vec![None; len];
    let mut outage_set = vec![Vec::new(); len];
    for n in c.node_indices() {
        let seg = grid.segment_of_line(n);
        segment_of[n.0 - base] = seg;
        if let Some(s) = seg {
            upstream_device[n.0 - base] = Some(grid.segments[s.0].device);
            let mut q: Vec<LineIx> =
                grid.segments[s.0].chain.iter().flat_map(|cs| grid.segments[cs.0].lines.iter().copied()).collect();
            q.sort();
            outage_set[n.0 - base] = q;
        }
    }

    // segments keyed by devices at or below each node, gathered bottom-up
    let mut downstream_segments: Vec<Vec<SegmentIx>> = vec![Vec::new(); len];
    let mut own_segment = vec![None; len];
    for &s in &segments {
        own_segment[grid.segments[s.0].device.0 - base] = Some(s);
    }
    for n in preorder(&grid.nodes, c.root).into_iter().rev() {
        let mut w: Vec<SegmentIx> = own_segment[n.0 - base].into_iter().collect();
        for ch in &grid.nodes[n.0].children {
            w.extend_from_slice(&downstream_segments[ch.0 - base]);
        }
        w.sort();
        downstream_segments[n.0 - base] = w;
    }

    TopologyIndex { base, segments, upstream_device, segment_of, outage_set, downstream_segments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::grid::tests::tiny;

    #[test]
    fn one_segment_chain() {
        let g = build_grid(&tiny(&[(1, None, true, 0), (2, Some(1), false, 0), (3, Some(2), false, 2)])).unwrap();
        let t = &g.circuit(CircuitIx(0)).topology;
        assert_eq!(t.upstream_device(NodeIx(1)), Some(NodeIx(0)));
        assert_eq!(t.upstream_device(NodeIx(2)), Some(NodeIx(0)));
        assert_eq!(t.segments().len(), 1);
        assert_eq!(t.segment_of(NodeIx(1)), t.segment_of(NodeIx(2)));
    }

    #[test]
    fn two_segment_chain() {
        // root -> a(device) -> b
        let g = build_grid(&tiny(&[(1, None, true, 0), (2, Some(1), true, 0), (3, Some(2), false, 2)])).unwrap();
        let t = &g.circuit(CircuitIx(0)).topology;
        let b = NodeIx(2);
        let seg_b = t.segment_of(b).unwrap();
        assert_eq!(g.segment(seg_b).lines, vec![b]);
        assert_eq!(t.upstream_device(b), Some(NodeIx(1)));
        assert_eq!(t.outage_set(b), &[NodeIx(1), NodeIx(2)]);
        // the root's downstream segments include both
        assert_eq!(t.downstream_segments(NodeIx(0)).len(), 2);
        assert_eq!(t.downstream_segments(NodeIx(1)), &[seg_b]);
    }
}
