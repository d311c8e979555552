//! Undirected interference graphs over base stations.
//!
//! Nodes carry caller-chosen identifiers; internally every node has a dense
//! index in `0..len()` following the ascending order of identifiers, which is
//! also the deterministic summation order used by consensus steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a node (a base station).
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {0} listed more than once")]
    DuplicateNode(NodeId),
    #[error("edge ({0}, {1}) references a node outside the node list")]
    UnknownEndpoint(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<NodeId>>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Connected, undirected, loop-free graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct InterferenceGraph {
    node_ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

/// Serialized form: node ids plus an edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl TryFrom<GraphSpec> for InterferenceGraph {
    type Error = GraphError;

    fn try_from(spec: GraphSpec) -> Result<Self, Self::Error> {
        InterferenceGraph::new(&spec.nodes, &spec.edges)
    }
}

impl From<InterferenceGraph> for GraphSpec {
    fn from(g: InterferenceGraph) -> Self {
        GraphSpec {
            nodes: g.node_ids.clone(),
            edges: g.edges(),
        }
    }
}

impl InterferenceGraph {
    /// Builds and validates a graph. Duplicate and reversed edges collapse.
    pub fn new(node_ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        if node_ids.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut sorted = node_ids.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateNode(w[0]));
            }
        }
        let index: BTreeMap<NodeId, usize> =
            sorted.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut sets = vec![BTreeSet::new(); sorted.len()];
        for &(a, b) in edges {
            let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
                return Err(GraphError::UnknownEndpoint(a, b));
            };
            if ia == ib {
                return Err(GraphError::SelfLoop(a));
            }
            sets[ia].insert(ib);
            sets[ib].insert(ia);
        }
        let adjacency: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;

        let g = InterferenceGraph {
            node_ids: sorted,
            index,
            adjacency,
            edge_count,
        };
        let components = g.components();
        if components.len() > 1 {
            return Err(GraphError::Disconnected(components));
        }
        Ok(g)
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`; a path for `n = 2`, a singleton for `n = 1`.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let nodes: Vec<NodeId> = (0..n).collect();
        let edges: Vec<_> = match n {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(&nodes, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let nodes: Vec<NodeId> = (0..n).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(&nodes, &edges)
    }

    /// Star with center `0` and leaves `1..n`.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        let nodes: Vec<NodeId> = (0..n).collect();
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(&nodes, &edges)
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Dense index of `id`.
    pub fn index_of(&self, id: NodeId) -> Result<usize, GraphError> {
        self.index.get(&id).copied().ok_or(GraphError::UnknownNode(id))
    }

    pub fn id_of(&self, index: usize) -> NodeId {
        self.node_ids[index]
    }

    /// Neighbor indices of the node at `index`, ascending.
    pub fn neighbors_of(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }

    pub fn degree_of(&self, index: usize) -> usize {
        self.adjacency[index].len()
    }

    /// Open neighborhood N(b) as ids.
    pub fn neighborhood(&self, b: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let i = self.index_of(b)?;
        Ok(self.adjacency[i].iter().map(|&j| self.node_ids[j]).collect())
    }

    /// Closed neighborhood N(b) ∪ {b} as ids, ascending.
    pub fn closed_neighborhood(&self, b: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let i = self.index_of(b)?;
        Ok(self
            .closed_neighborhood_indices(i)
            .into_iter()
            .map(|j| self.node_ids[j])
            .collect())
    }

    /// Closed neighborhood of the node at `index`, as ascending indices.
    pub fn closed_neighborhood_indices(&self, index: usize) -> Vec<usize> {
        let mut out = self.adjacency[index].clone();
        let pos = out.partition_point(|&j| j < index);
        out.insert(pos, index);
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edge list as `(smaller id, larger id)` pairs, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    out.push((self.node_ids[i], self.node_ids[j]));
                }
            }
        }
        out
    }

    /// Subgraph induced by `ids` (edges with both endpoints inside).
    pub fn induced(&self, ids: &[NodeId]) -> Result<InterferenceGraph, GraphError> {
        let keep: BTreeSet<usize> = ids
            .iter()
            .map(|&id| self.index_of(id))
            .collect::<Result<_, _>>()?;
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .filter(|&(a, b)| keep.contains(&self.index[&a]) && keep.contains(&self.index[&b]))
            .collect();
        InterferenceGraph::new(ids, &edges)
    }

    fn components(&self) -> Vec<Vec<NodeId>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                comp.push(self.node_ids[u]);
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

impl fmt::Display for InterferenceGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "graph(|B|={}, |E|={}, edges={:?})", self.len(), self.edge_count, self.edges())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cycle_has_degree_two() {
        let g = InterferenceGraph::new(&[1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        assert_eq!(g.edge_count(), 4);
        for i in 0..4 {
            assert_eq!(g.degree_of(i), 2);
        }
    }

    #[test]
    fn singleton_has_no_neighbors() {
        let g = InterferenceGraph::new(&[1], &[]).unwrap();
        assert!(g.neighborhood(1).unwrap().is_empty());
        assert_eq!(g.closed_neighborhood(1).unwrap(), vec![1]);
    }

    #[test]
    fn disconnected_is_rejected_with_components() {
        let err = InterferenceGraph::new(&[1, 2, 3], &[(1, 2)]).unwrap_err();
        assert_eq!(err, GraphError::Disconnected(vec![vec![1, 2], vec![3]]));
    }

    #[test]
    fn self_loop_and_unknown_endpoint_are_rejected() {
        assert_eq!(
            InterferenceGraph::new(&[1, 2], &[(1, 2), (2, 2)]).unwrap_err(),
            GraphError::SelfLoop(2)
        );
        assert_eq!(
            InterferenceGraph::new(&[1, 2], &[(1, 5)]).unwrap_err(),
            GraphError::UnknownEndpoint(1, 5)
        );
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = InterferenceGraph::new(&[1, 2], &[(1, 2), (2, 1), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges(), vec![(1, 2)]);
    }

    #[test]
    fn closed_neighborhoods() {
        let cycle = InterferenceGraph::new(&[1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        assert_eq!(cycle.closed_neighborhood(1).unwrap(), vec![1, 2, 4]);
        let path = InterferenceGraph::new(&[1, 2, 3], &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(path.closed_neighborhood(2).unwrap(), vec![1, 2, 3]);
        assert_eq!(path.closed_neighborhood(9).unwrap_err(), GraphError::UnknownNode(9));
    }

    #[test]
    fn induced_subgraph_drops_outside_edges() {
        let cycle = InterferenceGraph::ring(4).unwrap();
        let sub = cycle.induced(&[0, 1, 3]).unwrap();
        assert_eq!(sub.edges(), vec![(0, 1), (0, 3)]);
    }

    #[test]
    fn serde_round_trip() {
        let g = InterferenceGraph::ring(5).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: InterferenceGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"nodes":[0,1,2],"edges":[[0,1]]}"#;
        assert!(serde_json::from_str::<InterferenceGraph>(bad).is_err());
    }
}
