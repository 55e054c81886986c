//! Pairwise first-order crosstalk and link conflicts, and the conflict
//! graph that pass scheduling colors.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::routing::{trace_unchecked, window_unchecked, Message, PermutationMap};
use crate::topology::{NetworkSpec, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConflictKind {
    /// Same switch, different output lines.
    SwitchCrosstalk,
    /// Same switch and same out-port: both need one inter-stage line.
    LinkConflict,
}

impl ConflictKind {
    pub fn label(self) -> &'static str {
        match self {
            ConflictKind::SwitchCrosstalk => "crosstalk",
            ConflictKind::LinkConflict => "link",
        }
    }
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedStage {
    pub stage: u32,
    pub kind: ConflictKind,
}

/// Per-stage switch labels of a message, by window on omega and by trace
/// otherwise.
pub(crate) fn switch_sequence(net: &NetworkSpec, msg: Message) -> Vec<usize> {
    match net.topology() {
        Topology::Omega => (1..=net.stages())
            .map(|stage| window_unchecked(net, msg, stage))
            .collect(),
        Topology::Baseline => trace_unchecked(net, msg).switches().collect(),
    }
}

fn compare(net: &NetworkSpec, a: Message, sa: &[usize], b: Message, sb: &[usize]) -> Vec<SharedStage> {
    let n = net.stages();
    (1..=n)
        .filter(|&stage| sa[stage as usize - 1] == sb[stage as usize - 1])
        .map(|stage| {
            let kind = if a.routing_bit(n, stage) == b.routing_bit(n, stage) {
                ConflictKind::LinkConflict
            } else {
                ConflictKind::SwitchCrosstalk
            };
            SharedStage { stage, kind }
        })
        .collect()
}

/// Stages at which `a` and `b` occupy the same switch.
pub fn conflict_stages(net: &NetworkSpec, a: Message, b: Message) -> Result<Vec<SharedStage>> {
    if a.source == b.source {
        return Err(Error::SameSource(a.source));
    }
    for m in [a, b] {
        net.check_line(m.source, "source")?;
        net.check_line(m.destination, "destination")?;
    }
    let sa = switch_sequence(net, a);
    let sb = switch_sequence(net, b);
    Ok(compare(net, a, &sa, b, &sb))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictEdge {
    pub a: usize,
    pub b: usize,
    pub shared: Vec<SharedStage>,
}

impl ConflictEdge {
    /// Bit `stage - 1` set for every shared stage.
    pub fn stage_mask(&self) -> u64 {
        self.shared.iter().fold(0, |m, s| m | 1 << (s.stage - 1))
    }

    pub fn has_link_conflict(&self) -> bool {
        self.shared.iter().any(|s| s.kind == ConflictKind::LinkConflict)
    }

    /// CSV row `indexA,indexB,stages,kinds`.
    pub fn csv_row(&self) -> String {
        let join = |f: &dyn Fn(&SharedStage) -> String| {
            self.shared.iter().map(f).collect::<Vec<_>>().join(";")
        };
        format!(
            "{},{},{},{}",
            self.a,
            self.b,
            join(&|s| s.stage.to_string()),
            join(&|s| s.kind.label().to_string())
        )
    }
}

pub const EDGE_CSV_HEADER: &str = "indexA,indexB,stages,kinds";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    vertices: usize,
    edges: Vec<ConflictEdge>,
    adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    /// Edges in lexicographic `(a, b)` order with `a < b`.
    pub fn edges(&self) -> &[ConflictEdge] {
        &self.edges
    }

    /// Edge indices incident to vertex `v`.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = &ConflictEdge> {
        self.adjacency[v].iter().map(|&e| &self.edges[e])
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident(v).map(move |e| if e.a == v { e.b } else { e.a })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertices).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&ConflictEdge> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.adjacency[lo]
            .iter()
            .map(|&e| &self.edges[e])
            .find(|e| e.a == lo && e.b == hi)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EDGE_CSV_HEADER);
        out.push('\n');
        for e in &self.edges {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }
}

pub fn build_conflict_graph(net: &NetworkSpec, perm: &PermutationMap) -> Result<ConflictGraph> {
    let messages = perm.messages();
    for m in messages {
        net.check_line(m.source, "source")?;
        net.check_line(m.destination, "destination")?;
    }
    let switches: Vec<Vec<usize>> = messages.iter().map(|&m| switch_sequence(net, m)).collect();
    let mut edges = Vec::new();
    let mut adjacency = vec![Vec::new(); messages.len()];
    for a in 0..messages.len() {
        for b in a + 1..messages.len() {
            let shared = compare(net, messages[a], &switches[a], messages[b], &switches[b]);
            if shared.is_empty() {
                continue;
            }
            adjacency[a].push(edges.len());
            adjacency[b].push(edges.len());
            edges.push(ConflictEdge { a, b, shared });
        }
    }
    Ok(ConflictGraph {
        vertices: messages.len(),
        edges,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::example_permutation;
    use ConflictKind::*;

    fn omega(size: usize) -> NetworkSpec {
        NetworkSpec::new(size, Topology::Omega).unwrap()
    }

    fn stages(v: &[SharedStage]) -> Vec<(u32, ConflictKind)> {
        v.iter().map(|s| (s.stage, s.kind)).collect()
    }

    #[test]
    fn pairwise_examples() {
        let net = omega(8);
        let c = conflict_stages(&net, Message::new(0, 7), Message::new(4, 3)).unwrap();
        assert_eq!(stages(&c), vec![(1, SwitchCrosstalk)]);
        let c = conflict_stages(&net, Message::new(0, 7), Message::new(1, 0)).unwrap();
        assert!(c.is_empty());
        // After colliding on the stage-1 output line both messages sit on
        // one line, so they also meet in the stage-2 switch.
        let c = conflict_stages(&omega(4), Message::new(0, 1), Message::new(2, 0)).unwrap();
        assert_eq!(stages(&c), vec![(1, LinkConflict), (2, SwitchCrosstalk)]);
    }

    #[test]
    fn same_source_is_rejected() {
        let net = omega(8);
        assert_eq!(
            conflict_stages(&net, Message::new(3, 1), Message::new(3, 2)),
            Err(Error::SameSource(3))
        );
    }

    #[test]
    fn example_graph_is_cubic() {
        let net = omega(8);
        let g = build_conflict_graph(&net, &example_permutation()).unwrap();
        assert_eq!(g.edges().len(), 12);
        assert!((0..8).all(|v| g.degree(v) == 3));
        // Each switch of each stage is shared by exactly one pair.
        let mut per_stage = [0usize; 3];
        for e in g.edges() {
            assert_eq!(e.shared.len(), 1);
            assert_eq!(e.shared[0].kind, SwitchCrosstalk);
            per_stage[e.shared[0].stage as usize - 1] += 1;
        }
        assert_eq!(per_stage, [4, 4, 4]);
    }

    #[test]
    fn identity_four_cycle() {
        let net = omega(4);
        let g = build_conflict_graph(&net, &PermutationMap::identity(4)).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(g.edge(2, 0).unwrap().shared[0].stage, 1);
        assert_eq!(g.edge(1, 0).unwrap().shared[0].stage, 2);
    }

    #[test]
    fn single_message_has_no_edges() {
        let net = omega(8);
        let perm = PermutationMap::new(8, vec![Message::new(5, 2)]).unwrap();
        let g = build_conflict_graph(&net, &perm).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.vertex_count(), 1);
    }

    #[test]
    fn csv_export() {
        let net = omega(4);
        let g = build_conflict_graph(&net, &PermutationMap::identity(4)).unwrap();
        let csv = g.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(EDGE_CSV_HEADER));
        assert_eq!(lines.next(), Some("0,1,2,crosstalk"));
    }

    #[test]
    fn baseline_uses_trace() {
        let net = NetworkSpec::new(8, Topology::Baseline).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                if a == b {
                    continue;
                }
                let (ma, mb) = (Message::new(a, 7 - a), Message::new(b, 7 - b));
                let c = conflict_stages(&net, ma, mb).unwrap();
                let ta = trace_unchecked(&net, ma);
                let tb = trace_unchecked(&net, mb);
                let expected: Vec<u32> = (0..3)
                    .filter(|&i| ta.hops[i].switch == tb.hops[i].switch)
                    .map(|i| i as u32 + 1)
                    .collect();
                assert_eq!(c.iter().map(|s| s.stage).collect::<Vec<_>>(), expected);
            }
        }
    }
}
