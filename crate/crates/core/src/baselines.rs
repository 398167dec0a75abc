//! Two-stage (node -> hyperedge -> node) message-passing updates and their
//! algebraically merged one-stage (node -> node) forms, plus a generic
//! one-stage operator and a randomized equivalence verifier.
//!
//! The merged forms eliminate the hyperedge representations: the update for
//! node `i` becomes a weighted sum over every node sharing at least one
//! hyperedge with `i`. The verifier certifies numerically that the two
//! routes agree.

use thiserror::Error;

use crate::hypergraph::Hypergraph;
use crate::rng::Rng64;
use crate::tensor::{dense_max_abs_diff, DenseMatrix};
use crate::Real;

/// N-by-c node features or representations.
pub type FeatureMatrix = DenseMatrix;

/// Per-hyperedge scalar weights applied by the degree-normalized update
/// (distinct from the hypergraph's structural weights). Defaults to all 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(Vec<Real>);

impl EdgeWeights {
    pub fn uniform(num_edges: usize) -> Self {
        EdgeWeights(vec![1.0; num_edges])
    }

    pub fn new(weights: Vec<Real>) -> Self {
        assert!(
            weights.iter().all(|w| w.is_finite()),
            "edge weights must be finite"
        );
        EdgeWeights(weights)
    }

    pub fn get(&self, edge: usize) -> Real {
        self.0[edge]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("node {node} is isolated (degree 0 / empty neighborhood)")]
    IsolatedNode { node: usize },
    #[error("power {p} != 1 with negative feature entries is undefined")]
    NegativeFeatureWithFractionalPower { p: Real },
    #[error("feature matrix has {got} rows for {expected} nodes")]
    RowCountMismatch { expected: usize, got: usize },
}

fn validate(
    hg: &Hypergraph,
    features: &FeatureMatrix,
    degrees: &[Real],
) -> Result<(), BaselineError> {
    if features.rows() != hg.num_nodes() {
        return Err(BaselineError::RowCountMismatch {
            expected: hg.num_nodes(),
            got: features.rows(),
        });
    }
    if let Some(node) = degrees.iter().position(|&d| d == 0.0) {
        return Err(BaselineError::IsolatedNode { node });
    }
    Ok(())
}

fn neighborhood_sizes(hg: &Hypergraph) -> Vec<Real> {
    (0..hg.num_nodes())
        .map(|v| hg.neighborhood(v).expect("v < N").len() as Real)
        .collect()
}

/// Two-stage update with power-mean aggregation: hyperedge representations
/// `e_j = ((1/d_e) sum v_k^p)^{1/p}`, then
/// `v_i = ((1/d_v) sum (d_e / |N(i)|) e_j^p)^{1/p}` over incident edges.
/// Powers are elementwise; `p` must be >= 1.
pub fn hypersage_two_stage(
    hg: &Hypergraph,
    features: &FeatureMatrix,
    p: Real,
) -> Result<FeatureMatrix, BaselineError> {
    assert!(p >= 1.0, "power-mean exponent must be >= 1");
    let deg = hg.compute_degrees();
    validate(hg, features, &deg.node_degrees)?;
    if p != 1.0 && features.data().iter().any(|&v| v < 0.0) {
        return Err(BaselineError::NegativeFeatureWithFractionalPower { p });
    }
    let c = features.cols();
    let pow = |x: Real, e: Real| if e == 1.0 { x } else { x.powf(e) };

    // Stage 1: node -> hyperedge.
    let mut edge_reps = vec![0.0; hg.num_edges() * c];
    for (j, edge) in hg.hyperedges().iter().enumerate() {
        let inv_de = 1.0 / deg.edge_degrees[j] as Real;
        let row = &mut edge_reps[j * c..(j + 1) * c];
        for &k in edge {
            for (acc, &v) in row.iter_mut().zip(features.row(k)) {
                *acc += pow(v, p);
            }
        }
        for acc in row.iter_mut() {
            *acc = pow(*acc * inv_de, 1.0 / p);
        }
    }

    // Stage 2: hyperedge -> node.
    let nsize = neighborhood_sizes(hg);
    let mut out = vec![0.0; hg.num_nodes() * c];
    for i in 0..hg.num_nodes() {
        if nsize[i] == 0.0 {
            return Err(BaselineError::IsolatedNode { node: i });
        }
        let row = &mut out[i * c..(i + 1) * c];
        for &j in hg.incident_edges(i) {
            let coef = deg.edge_degrees[j] as Real / nsize[i];
            let erow = &edge_reps[j * c..(j + 1) * c];
            for (acc, &e) in row.iter_mut().zip(erow) {
                *acc += coef * pow(e, p);
            }
        }
        let inv_dv = 1.0 / deg.node_degrees[i];
        for acc in row.iter_mut() {
            *acc = pow(*acc * inv_dv, 1.0 / p);
        }
    }
    Ok(DenseMatrix::new(hg.num_nodes(), c, out))
}

/// Merged one-stage form of the power-mean update at `p = 1`:
/// `v_i = (1/(d_v |N(i)|)) sum over incident edges, sum over edge members`.
pub fn hypersage_one_stage(
    hg: &Hypergraph,
    features: &FeatureMatrix,
) -> Result<FeatureMatrix, BaselineError> {
    let deg = hg.compute_degrees();
    validate(hg, features, &deg.node_degrees)?;
    let nsize = neighborhood_sizes(hg);
    let c = features.cols();
    let mut out = vec![0.0; hg.num_nodes() * c];
    for i in 0..hg.num_nodes() {
        if nsize[i] == 0.0 {
            return Err(BaselineError::IsolatedNode { node: i });
        }
        let row = &mut out[i * c..(i + 1) * c];
        for &j in hg.incident_edges(i) {
            for &k in &hg.hyperedges()[j] {
                for (acc, &v) in row.iter_mut().zip(features.row(k)) {
                    *acc += v;
                }
            }
        }
        let coef = 1.0 / (deg.node_degrees[i] * nsize[i]);
        for acc in row.iter_mut() {
            *acc *= coef;
        }
    }
    Ok(DenseMatrix::new(hg.num_nodes(), c, out))
}

/// Two-stage degree-normalized update: `e_j = (1/d_e) sum v_k`, then
/// `v_i = (1/sqrt(d_v)) sum (1/sqrt(d_e)) w_e e_j` over incident edges.
pub fn unigcn_two_stage(
    hg: &Hypergraph,
    features: &FeatureMatrix,
    w: &EdgeWeights,
) -> Result<FeatureMatrix, BaselineError> {
    assert_eq!(w.len(), hg.num_edges(), "one weight per hyperedge");
    let deg = hg.compute_degrees();
    validate(hg, features, &deg.node_degrees)?;
    let c = features.cols();

    let mut edge_reps = vec![0.0; hg.num_edges() * c];
    for (j, edge) in hg.hyperedges().iter().enumerate() {
        let inv_de = 1.0 / deg.edge_degrees[j] as Real;
        let row = &mut edge_reps[j * c..(j + 1) * c];
        for &k in edge {
            for (acc, &v) in row.iter_mut().zip(features.row(k)) {
                *acc += v;
            }
        }
        for acc in row.iter_mut() {
            *acc *= inv_de;
        }
    }

    let mut out = vec![0.0; hg.num_nodes() * c];
    for i in 0..hg.num_nodes() {
        let row = &mut out[i * c..(i + 1) * c];
        for &j in hg.incident_edges(i) {
            let coef = w.get(j) / (deg.edge_degrees[j] as Real).sqrt();
            let erow = &edge_reps[j * c..(j + 1) * c];
            for (acc, &e) in row.iter_mut().zip(erow) {
                *acc += coef * e;
            }
        }
        let inv_sqrt_dv = 1.0 / deg.node_degrees[i].sqrt();
        for acc in row.iter_mut() {
            *acc *= inv_sqrt_dv;
        }
    }
    Ok(DenseMatrix::new(hg.num_nodes(), c, out))
}

/// Merged one-stage form of the degree-normalized update:
/// `v_i = (1/sqrt(d_v)) sum over incident edges, sum over members of
/// (w_e / d_e^{3/2}) v_k`.
pub fn unigcn_one_stage(
    hg: &Hypergraph,
    features: &FeatureMatrix,
    w: &EdgeWeights,
) -> Result<FeatureMatrix, BaselineError> {
    assert_eq!(w.len(), hg.num_edges(), "one weight per hyperedge");
    let deg = hg.compute_degrees();
    validate(hg, features, &deg.node_degrees)?;
    let c = features.cols();
    let mut out = vec![0.0; hg.num_nodes() * c];
    for i in 0..hg.num_nodes() {
        let row = &mut out[i * c..(i + 1) * c];
        for &j in hg.incident_edges(i) {
            let de = deg.edge_degrees[j] as Real;
            let coef = w.get(j) / (de * de.sqrt());
            for &k in &hg.hyperedges()[j] {
                for (acc, &v) in row.iter_mut().zip(features.row(k)) {
                    *acc += coef * v;
                }
            }
        }
        let inv_sqrt_dv = 1.0 / deg.node_degrees[i].sqrt();
        for acc in row.iter_mut() {
            *acc *= inv_sqrt_dv;
        }
    }
    Ok(DenseMatrix::new(hg.num_nodes(), c, out))
}

/// Generic one-stage operator: `v_i = sum_k w(shared_edges(k, i), k, i) v_k`.
///
/// The weight function receives the ids of the hyperedges shared by `k` and
/// `i`; it is only consulted for pairs that share at least one hyperedge
/// (it is required to vanish on disjoint pairs, which is what makes the sum
/// local).
pub fn generic_one_stage(
    hg: &Hypergraph,
    features: &FeatureMatrix,
    weight_fn: impl Fn(&[usize], usize, usize) -> Real,
) -> FeatureMatrix {
    assert_eq!(
        features.rows(),
        hg.num_nodes(),
        "feature rows must match node count"
    );
    let c = features.cols();
    let mut out = vec![0.0; hg.num_nodes() * c];
    for i in 0..hg.num_nodes() {
        // Co-occurring nodes (including i itself when it has any edge).
        let mut partners: Vec<usize> = hg.neighborhood(i).expect("i < N").into_iter().collect();
        if !hg.incident_edges(i).is_empty() {
            partners.push(i);
            partners.sort_unstable();
        }
        let row = &mut out[i * c..(i + 1) * c];
        for k in partners {
            let shared = shared_edges(hg, k, i);
            let wki = weight_fn(&shared, k, i);
            if wki == 0.0 {
                continue;
            }
            for (acc, &v) in row.iter_mut().zip(features.row(k)) {
                *acc += wki * v;
            }
        }
    }
    DenseMatrix::new(hg.num_nodes(), c, out)
}

/// Sorted ids of hyperedges containing both `a` and `b`.
fn shared_edges(hg: &Hypergraph, a: usize, b: usize) -> Vec<usize> {
    let (mut x, mut y) = (hg.incident_edges(a).iter(), hg.incident_edges(b).iter());
    let mut out = Vec::new();
    let (mut xv, mut yv) = (x.next(), y.next());
    while let (Some(&a), Some(&b)) = (xv, yv) {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => xv = x.next(),
            std::cmp::Ordering::Greater => yv = y.next(),
            std::cmp::Ordering::Equal => {
                out.push(a);
                xv = x.next();
                yv = y.next();
            }
        }
    }
    out
}

/// Weight function reproducing [`hypersage_one_stage`] through
/// [`generic_one_stage`]: `|shared| / (d_i |N(i)|)`.
pub fn hypersage_weight(hg: &Hypergraph) -> impl Fn(&[usize], usize, usize) -> Real {
    let deg = hg.compute_degrees().node_degrees;
    let nsize = neighborhood_sizes(hg);
    move |shared: &[usize], _k: usize, i: usize| -> Real {
        shared.len() as Real / (deg[i] * nsize[i])
    }
}

/// Weight function reproducing [`unigcn_one_stage`] through
/// [`generic_one_stage`]: `(1/sqrt(d_i)) sum over shared edges of
/// w_e / d_e^{3/2}`.
pub fn unigcn_weight(hg: &Hypergraph, w: &EdgeWeights) -> impl Fn(&[usize], usize, usize) -> Real {
    let deg = hg.compute_degrees();
    let w = w.clone();
    move |shared: &[usize], _k: usize, i: usize| -> Real {
        let sum: Real = shared
            .iter()
            .map(|&e| {
                let de = deg.edge_degrees[e] as Real;
                w.get(e) / (de * de.sqrt())
            })
            .sum();
        sum / deg.node_degrees[i].sqrt()
    }
}

/// Outcome of a randomized two-stage vs one-stage comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub seed: u64,
    pub max_dev_power_mean: Real,
    pub max_dev_degree_norm: Real,
}

impl EquivalenceReport {
    pub fn passes(&self, tol: Real) -> bool {
        self.max_dev_power_mean < tol && self.max_dev_degree_norm < tol
    }
}

/// Run `trials` random hypergraphs (every node in at least one edge, unit
/// weights, features uniform in [-1, 1]) and report the maximum deviation
/// between the two-stage and merged one-stage forms of both updates.
pub fn verify_equivalence(
    trials: usize,
    max_nodes: usize,
    max_edges: usize,
    seed: u64,
) -> EquivalenceReport {
    assert!(trials >= 1);
    let mut rng = Rng64::new(seed);
    let mut max_dev_power_mean: Real = 0.0;
    let mut max_dev_degree_norm: Real = 0.0;
    for _ in 0..trials {
        let hg = Hypergraph::random(&mut rng, max_nodes, max_edges);
        let c = 1 + rng.below(4);
        let data: Vec<Real> = (0..hg.num_nodes() * c)
            .map(|_| rng.range(-1.0, 1.0))
            .collect();
        let features = DenseMatrix::new(hg.num_nodes(), c, data);

        let two =
            hypersage_two_stage(&hg, &features, 1.0).expect("degree-positive by construction");
        let one = hypersage_one_stage(&hg, &features).expect("degree-positive by construction");
        max_dev_power_mean = max_dev_power_mean.max(dense_max_abs_diff(&two, &one));

        let w = EdgeWeights::uniform(hg.num_edges());
        let two = unigcn_two_stage(&hg, &features, &w).expect("degree-positive by construction");
        let one = unigcn_one_stage(&hg, &features, &w).expect("degree-positive by construction");
        max_dev_degree_norm = max_dev_degree_norm.max(dense_max_abs_diff(&two, &one));
    }
    EquivalenceReport {
        trials,
        max_nodes,
        max_edges,
        seed,
        max_dev_power_mean,
        max_dev_degree_norm,
    }
}

#[cfg(all(test, not(feature = "single-precision")))]
mod tests {
    use super::*;

    fn hg(edges: Vec<Vec<usize>>, n: usize) -> Hypergraph {
        Hypergraph::from_edge_list(edges, n, None).unwrap()
    }

    fn single_edge_fixture() -> (Hypergraph, FeatureMatrix) {
        let g = hg(vec![vec![0, 1]], 2);
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![3.0]]);
        (g, v)
    }

    #[test]
    fn power_mean_single_edge_hand_value() {
        // d_v = 1, |N(0)| = 1, the d_e factors cancel: v0 <- v0 + v1 = 4.
        let (g, v) = single_edge_fixture();
        let out = hypersage_two_stage(&g, &v, 1.0).unwrap();
        assert!((out.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn power_mean_zero_features_stay_zero() {
        let g = hg(vec![vec![0, 1, 2], vec![1, 2]], 3);
        let v = DenseMatrix::zeros(3, 2);
        let out = hypersage_two_stage(&g, &v, 1.0).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_stage_single_edge_hand_value() {
        let (g, v) = single_edge_fixture();
        let out = hypersage_one_stage(&g, &v).unwrap();
        assert!((out.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_stage_two_edges_hand_value() {
        // Node 0 in {0,1} and {0,2}: d_0 = 2, |N(0)| = 2, four unit terms.
        let g = hg(vec![vec![0, 1], vec![0, 2]], 3);
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
        let out = hypersage_one_stage(&g, &v).unwrap();
        assert!((out.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_mean_forms_agree_on_random_hypergraphs() {
        let mut rng = Rng64::new(42);
        for _ in 0..100 {
            let g = Hypergraph::random(&mut rng, 12, 8);
            let data: Vec<Real> = (0..g.num_nodes() * 3)
                .map(|_| rng.range(-1.0, 1.0))
                .collect();
            let v = DenseMatrix::new(g.num_nodes(), 3, data);
            let two = hypersage_two_stage(&g, &v, 1.0).unwrap();
            let one = hypersage_one_stage(&g, &v).unwrap();
            assert!(dense_max_abs_diff(&two, &one) < 1e-9);
        }
    }

    #[test]
    fn degree_norm_single_edge_hand_value() {
        // (1/sqrt(1)) * (1/sqrt(2)) * 1 * ((1+3)/2) = sqrt(2).
        let (g, v) = single_edge_fixture();
        let w = EdgeWeights::uniform(1);
        let out = unigcn_two_stage(&g, &v, &w).unwrap();
        assert!((out.get(0, 0) - (2.0 as Real).sqrt()).abs() < 1e-12);
        let out = unigcn_one_stage(&g, &v, &w).unwrap();
        assert!((out.get(0, 0) - (2.0 as Real).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degree_norm_zero_weights_give_zero() {
        let (g, v) = single_edge_fixture();
        let w = EdgeWeights::new(vec![0.0]);
        let out = unigcn_two_stage(&g, &v, &w).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn degree_norm_is_linear_in_edge_weights() {
        let g = hg(vec![vec![0, 1, 2], vec![2, 3]], 4);
        let mut rng = Rng64::new(3);
        let data: Vec<Real> = (0..8).map(|_| rng.range(-1.0, 1.0)).collect();
        let v = DenseMatrix::new(4, 2, data);
        let w1 = EdgeWeights::new(vec![0.7, 1.3]);
        let w2 = EdgeWeights::new(vec![1.4, 2.6]);
        let a = unigcn_one_stage(&g, &v, &w1).unwrap();
        let b = unigcn_one_stage(&g, &v, &w2).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_norm_forms_agree_on_random_hypergraphs() {
        let mut rng = Rng64::new(43);
        for _ in 0..100 {
            let g = Hypergraph::random(&mut rng, 12, 8);
            let data: Vec<Real> = (0..g.num_nodes() * 2)
                .map(|_| rng.range(-1.0, 1.0))
                .collect();
            let v = DenseMatrix::new(g.num_nodes(), 2, data);
            let w = EdgeWeights::uniform(g.num_edges());
            let two = unigcn_two_stage(&g, &v, &w).unwrap();
            let one = unigcn_one_stage(&g, &v, &w).unwrap();
            assert!(dense_max_abs_diff(&two, &one) < 1e-9);
        }
    }

    #[test]
    fn single_edge_forms_agree_exactly() {
        let (g, v) = single_edge_fixture();
        let two = hypersage_two_stage(&g, &v, 1.0).unwrap();
        let one = hypersage_one_stage(&g, &v).unwrap();
        assert_eq!(two.data(), one.data());
        let w = EdgeWeights::uniform(1);
        let two = unigcn_two_stage(&g, &v, &w).unwrap();
        let one = unigcn_one_stage(&g, &v, &w).unwrap();
        assert_eq!(two.data(), one.data());
    }

    #[test]
    fn isolated_node_is_rejected() {
        let g = hg(vec![vec![0, 1]], 3);
        let v = DenseMatrix::zeros(3, 1);
        assert!(matches!(
            hypersage_one_stage(&g, &v),
            Err(BaselineError::IsolatedNode { node: 2 })
        ));
        assert!(matches!(
            unigcn_one_stage(&g, &v, &EdgeWeights::uniform(1)),
            Err(BaselineError::IsolatedNode { node: 2 })
        ));
    }

    #[test]
    fn negative_features_with_fractional_power_rejected() {
        let (g, mut v) = single_edge_fixture();
        v.set(1, 0, -3.0);
        assert!(matches!(
            hypersage_two_stage(&g, &v, 2.0),
            Err(BaselineError::NegativeFeatureWithFractionalPower { .. })
        ));
        // p = 1 accepts negatives.
        assert!(hypersage_two_stage(&g, &v, 1.0).is_ok());
    }

    #[test]
    fn one_stage_operators_are_linear_in_features() {
        let mut rng = Rng64::new(44);
        for _ in 0..20 {
            let g = Hypergraph::random(&mut rng, 10, 6);
            let n = g.num_nodes();
            let mk = |rng: &mut Rng64| {
                DenseMatrix::new(n, 2, (0..n * 2).map(|_| rng.range(-1.0, 1.0)).collect())
            };
            let v1 = mk(&mut rng);
            let v2 = mk(&mut rng);
            let (alpha, beta) = (0.3, -1.7);
            let mixed_data: Vec<Real> = v1
                .data()
                .iter()
                .zip(v2.data())
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect();
            let mixed = DenseMatrix::new(n, 2, mixed_data);

            for f in [hypersage_one_stage] {
                let lhs = f(&g, &mixed).unwrap();
                let a = f(&g, &v1).unwrap();
                let b = f(&g, &v2).unwrap();
                for idx in 0..lhs.data().len() {
                    let want = alpha * a.data()[idx] + beta * b.data()[idx];
                    assert!((lhs.data()[idx] - want).abs() < 1e-10);
                }
            }
            let w = EdgeWeights::uniform(g.num_edges());
            let lhs = unigcn_one_stage(&g, &mixed, &w).unwrap();
            let a = unigcn_one_stage(&g, &v1, &w).unwrap();
            let b = unigcn_one_stage(&g, &v2, &w).unwrap();
            for idx in 0..lhs.data().len() {
                let want = alpha * a.data()[idx] + beta * b.data()[idx];
                assert!((lhs.data()[idx] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn outputs_are_local_to_shared_hyperedges() {
        // Nodes 0 and 3 share no hyperedge; perturbing node 3's features
        // must leave row 0 untouched.
        let g = hg(vec![vec![0, 1], vec![1, 2], vec![2, 3]], 4);
        let mut rng = Rng64::new(45);
        let data: Vec<Real> = (0..8).map(|_| rng.range(-1.0, 1.0)).collect();
        let v = DenseMatrix::new(4, 2, data);
        let mut v2 = v.clone();
        v2.set(3, 0, 100.0);
        v2.set(3, 1, -50.0);

        let a = hypersage_one_stage(&g, &v).unwrap();
        let b = hypersage_one_stage(&g, &v2).unwrap();
        assert_eq!(a.row(0), b.row(0));

        let w = EdgeWeights::uniform(3);
        let a = unigcn_one_stage(&g, &v, &w).unwrap();
        let b = unigcn_one_stage(&g, &v2, &w).unwrap();
        assert_eq!(a.row(0), b.row(0));
    }

    #[test]
    fn generic_with_zero_weight_fn_is_zero() {
        let g = hg(vec![vec![0, 1, 2]], 3);
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = generic_one_stage(&g, &v, |_, _, _| 0.0);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn generic_with_kronecker_weight_is_identity() {
        let g = hg(vec![vec![0, 1], vec![1, 2]], 4); // node 3 isolated
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let out = generic_one_stage(&g, &v, |_, k, i| if k == i { 1.0 } else { 0.0 });
        assert_eq!(out.row(0), &[1.0]);
        assert_eq!(out.row(1), &[2.0]);
        assert_eq!(out.row(2), &[3.0]);
        assert_eq!(out.row(3), &[0.0]); // no incident edges, empty sum
    }

    #[test]
    fn generic_reproduces_both_dedicated_forms() {
        let mut rng = Rng64::new(46);
        for _ in 0..30 {
            let g = Hypergraph::random(&mut rng, 10, 6);
            let n = g.num_nodes();
            let data: Vec<Real> = (0..n * 2).map(|_| rng.range(-1.0, 1.0)).collect();
            let v = DenseMatrix::new(n, 2, data);

            let via_generic = generic_one_stage(&g, &v, hypersage_weight(&g));
            let direct = hypersage_one_stage(&g, &v).unwrap();
            assert!(dense_max_abs_diff(&via_generic, &direct) < 1e-12);

            let w = EdgeWeights::uniform(g.num_edges());
            let via_generic = generic_one_stage(&g, &v, unigcn_weight(&g, &w));
            let direct = unigcn_one_stage(&g, &v, &w).unwrap();
            assert!(dense_max_abs_diff(&via_generic, &direct) < 1e-12);
        }
    }

    #[test]
    fn verifier_passes_at_tight_tolerance() {
        let report = verify_equivalence(100, 12, 8, 7);
        assert!(report.passes(1e-9), "{report:?}");
    }

    #[test]
    fn verifier_is_seed_stable() {
        let a = verify_equivalence(25, 10, 6, 123);
        let b = verify_equivalence(25, 10, 6, 123);
        assert_eq!(a, b);
    }
}
