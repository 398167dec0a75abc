//! Hypergraph representation, degrees, neighborhoods, and the normalized
//! hypergraph Laplacian `L = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}` used as
//! the local message-passing operator.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::rng::Rng64;
use crate::tensor::DenseMatrix;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypergraphError {
    #[error("hyperedge list is empty")]
    EmptyEdgeList,
    #[error("hyperedge {index} has {size} node(s); at least 2 distinct nodes required")]
    EdgeTooSmall { index: usize, size: usize },
    #[error("node id {node} out of range for {num_nodes} nodes (hyperedge {index})")]
    NodeIdOutOfRange {
        index: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("hyperedge {index} repeats node id {node}")]
    DuplicateNodeInEdge { index: usize, node: usize },
    #[error("hyperedge {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: Real },
    #[error("{got} weights supplied for {expected} hyperedges")]
    WeightCountMismatch { expected: usize, got: usize },
}

/// Immutable hypergraph: `num_nodes` nodes, hyperedges as sorted node-id
/// sets, and a positive weight per hyperedge.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    num_nodes: usize,
    edges: Vec<Vec<usize>>,
    weights: Vec<Real>,
    /// incident[v] = sorted ids of hyperedges containing v
    incident: Vec<Vec<usize>>,
}

/// Node and hyperedge degrees. Node degrees are weighted
/// (`d(v) = sum of weights of incident edges`); edge degrees are cardinalities.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVectors {
    pub node_degrees: Vec<Real>,
    pub edge_degrees: Vec<usize>,
}

/// Dense N-by-N hypergraph Laplacian plus the list of isolated nodes whose
/// rows/columns were zeroed under the pseudo-inverse convention on `D_v`.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    matrix: DenseMatrix,
    isolated_nodes: Vec<usize>,
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    /// Nodes with degree zero; non-empty means the zero-row warning applies.
    pub fn isolated_nodes(&self) -> &[usize] {
        &self.isolated_nodes
    }

    pub fn has_isolated_nodes(&self) -> bool {
        !self.isolated_nodes.is_empty()
    }
}

impl Hypergraph {
    /// Build a hypergraph from hyperedges given as node-id lists. Weights
    /// default to 1.0 when absent. Edges must contain at least two distinct
    /// ids; duplicates within an edge are rejected, not deduplicated.
    pub fn from_edge_list(
        edges: Vec<Vec<usize>>,
        num_nodes: usize,
        weights: Option<Vec<Real>>,
    ) -> Result<Hypergraph, HypergraphError> {
        if edges.is_empty() {
            return Err(HypergraphError::EmptyEdgeList);
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != edges.len() {
                    return Err(HypergraphError::WeightCountMismatch {
                        expected: edges.len(),
                        got: w.len(),
                    });
                }
                w
            }
            None => vec![1.0; edges.len()],
        };
        for (index, &weight) in weights.iter().enumerate() {
            if weight <= 0.0 || !weight.is_finite() {
                return Err(HypergraphError::NonPositiveWeight { index, weight });
            }
        }
        let mut sorted_edges = Vec::with_capacity(edges.len());
        for (index, edge) in edges.into_iter().enumerate() {
            if edge.len() < 2 {
                return Err(HypergraphError::EdgeTooSmall {
                    index,
                    size: edge.len(),
                });
            }
            let mut e = edge;
            for &node in &e {
                if node >= num_nodes {
                    return Err(HypergraphError::NodeIdOutOfRange {
                        index,
                        node,
                        num_nodes,
                    });
                }
            }
            e.sort_unstable();
            for pair in e.windows(2) {
                if pair[0] == pair[1] {
                    return Err(HypergraphError::DuplicateNodeInEdge {
                        index,
                        node: pair[0],
                    });
                }
            }
            sorted_edges.push(e);
        }
        let mut incident = vec![Vec::new(); num_nodes];
        for (j, edge) in sorted_edges.iter().enumerate() {
            for &v in edge {
                incident[v].push(j);
            }
        }
        Ok(Hypergraph {
            num_nodes,
            edges: sorted_edges,
            weights,
            incident,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Hyperedges as sorted node-id lists.
    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn weights(&self) -> &[Real] {
        &self.weights
    }

    /// Ids of hyperedges containing `v`.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Node and edge degrees per the incidence definition; isolated nodes
    /// get node degree 0.
    pub fn compute_degrees(&self) -> DegreeVectors {
        let mut node_degrees = vec![0.0; self.num_nodes];
        let mut edge_degrees = vec![0usize; self.edges.len()];
        for (j, edge) in self.edges.iter().enumerate() {
            edge_degrees[j] = edge.len();
            for &v in edge {
                node_degrees[v] += self.weights[j];
            }
        }
        DegreeVectors {
            node_degrees,
            edge_degrees,
        }
    }

    /// Union of all hyperedges containing `v`, excluding `v` itself.
    pub fn neighborhood(&self, v: usize) -> Result<BTreeSet<usize>, HypergraphError> {
        if v >= self.num_nodes {
            return Err(HypergraphError::NodeIdOutOfRange {
                index: 0,
                node: v,
                num_nodes: self.num_nodes,
            });
        }
        let mut out = BTreeSet::new();
        for &j in &self.incident[v] {
            for &u in &self.edges[j] {
                if u != v {
                    out.insert(u);
                }
            }
        }
        Ok(out)
    }

    /// Dense N-by-M 0/1 incidence matrix.
    pub fn incidence_dense(&self) -> DenseMatrix {
        let m = self.edges.len();
        let mut out = DenseMatrix::zeros(self.num_nodes, m);
        for (j, edge) in self.edges.iter().enumerate() {
            for &v in edge {
                out.set(v, j, 1.0);
            }
        }
        out
    }

    /// Dense normalized Laplacian. Built by accumulating
    /// `w_e / d_e` over each edge's node pairs and rescaling by
    /// `d_v^{-1/2}`, which avoids the dense N-by-M intermediate. Isolated
    /// nodes yield all-zero rows/columns and are reported on the result.
    pub fn laplacian(&self) -> LaplacianMatrix {
        let n = self.num_nodes;
        let degrees = self.compute_degrees();
        let mut out = vec![0.0; n * n];
        for (j, edge) in self.edges.iter().enumerate() {
            let contrib = self.weights[j] / degrees.edge_degrees[j] as Real;
            for &a in edge {
                for &b in edge {
                    out[a * n + b] += contrib;
                }
            }
        }
        let inv_sqrt: Vec<Real> = degrees
            .node_degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        for i in 0..n {
            for k in 0..n {
                out[i * n + k] *= inv_sqrt[i] * inv_sqrt[k];
            }
        }
        let isolated_nodes: Vec<usize> = degrees
            .node_degrees
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d == 0.0)
            .map(|(v, _)| v)
            .collect();
        LaplacianMatrix {
            matrix: DenseMatrix::new(n, n, out),
            isolated_nodes,
        }
    }

    /// Random hypergraph with every node in at least one hyperedge:
    /// `N in [2, max_nodes]`, initially `M in [1, max_edges]` edges of
    /// random size, then uncovered nodes are inserted into random edges.
    /// Unit weights.
    pub fn random(rng: &mut Rng64, max_nodes: usize, max_edges: usize) -> Hypergraph {
        assert!(max_nodes >= 2 && max_edges >= 1);
        let n = 2 + rng.below(max_nodes - 1);
        let m = 1 + rng.below(max_edges);
        let mut edges: Vec<BTreeSet<usize>> = Vec::with_capacity(m);
        for _ in 0..m {
            let size = 2 + rng.below(n.min(5) - 1);
            edges.push(rng.sample_distinct(n, size).into_iter().collect());
        }
        let mut covered = vec![false; n];
        for e in &edges {
            for &v in e {
                covered[v] = true;
            }
        }
        for (v, &is_covered) in covered.iter().enumerate() {
            if !is_covered {
                let j = rng.below(edges.len());
                edges[j].insert(v);
            }
        }
        let edges: Vec<Vec<usize>> = edges.into_iter().map(|e| e.into_iter().collect()).collect();
        Hypergraph::from_edge_list(edges, n, None).expect("generator produces valid hypergraphs")
    }
}
