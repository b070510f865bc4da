//! Renormalized propagation operator and the graph-convolution layer
//! `H' = relu(D^-1/2 (A + I) D^-1/2 H W)`.

use alloc::format;
use alloc::vec::Vec;

use crate::connectivity::AdjacencyMatrix;
use crate::neural::{Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// How node degrees are computed from `A + I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegreeConvention {
    /// Sum of absolute edge weights. Always positive once self-loops are
    /// added, so signed (correlation) graphs stay well defined.
    #[default]
    Absolute,
    /// Plain row sums; fails on rows whose sum is not positive.
    Signed,
}

/// `D^-1/2 (A + I) D^-1/2`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperator {
    matrix: Vec<f64>,
    n: usize,
}

impl NormalizedOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.matrix[k * self.n + l]
    }

    /// Matrix entries converted to the training precision.
    pub fn to_scalar<S: Scalar>(&self) -> Vec<S> {
        self.matrix.iter().map(|&v| S::lit(v)).collect()
    }
}

/// Renormalizes with absolute-value degrees.
pub fn renormalize(adj: &AdjacencyMatrix) -> Result<NormalizedOperator> {
    renormalize_with(adj, DegreeConvention::Absolute)
}

pub fn renormalize_with(
    adj: &AdjacencyMatrix,
    convention: DegreeConvention,
) -> Result<NormalizedOperator> {
    let n = adj.n();
    let mut a_hat = adj.weights().to_vec();
    for k in 0..n {
        a_hat[k * n + k] += 1.0;
    }
    let mut degrees = Vec::with_capacity(n);
    for k in 0..n {
        let row = &a_hat[k * n..][..n];
        let degree: f64 = match convention {
            DegreeConvention::Absolute => row.iter().map(|v| v.abs()).sum(),
            DegreeConvention::Signed => row.iter().sum(),
        };
        if !(degree > 0.0) || !degree.is_finite() {
            return Err(Error::DegenerateGraph(format!(
                "node {k} has degree {degree}"
            )));
        }
        degrees.push(degree);
    }
    for k in 0..n {
        for l in 0..n {
            // the degree product is commutative, so symmetry is exact
            a_hat[k * n + l] /= libm::sqrt(degrees[k] * degrees[l]);
        }
    }
    Ok(NormalizedOperator { matrix: a_hat, n })
}

/// `N x F` node features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    features: Vec<f64>,
    n_nodes: usize,
    n_features: usize,
}

impl NodeFeatureMatrix {
    pub fn new(features: Vec<f64>, n_nodes: usize, n_features: usize) -> Result<Self> {
        if n_nodes == 0 || n_features == 0 || features.len() != n_nodes * n_features {
            return Err(Error::InvalidParameter(format!(
                "{} values for {n_nodes} nodes x {n_features} features",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("node features must be finite".into()));
        }
        Ok(Self {
            features,
            n_nodes,
            n_features,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn get(&self, node: usize, feature: usize) -> f64 {
        self.features[node * self.n_features + feature]
    }
}

/// Records one graph-convolution layer on `tape`.
///
/// `h` is `[B, N, F_in]`, `w` is `[F_in, F_out]` and `operators` holds one
/// `N x N` operator per batch element. `H W` is formed first, so the node
/// mixing runs on the narrower feature dimension.
pub fn gcn_layer<S: Scalar>(tape: &mut Tape<S>, operators: &[S], h: Var, w: Var) -> Result<Var> {
    let hs = tape.shape(h).to_vec();
    let ws = tape.shape(w).to_vec();
    let [batch, nodes, f_in] = hs[..] else {
        return Err(Error::Shape(format!("graph layer expects [B,N,F], got {hs:?}")));
    };
    if ws.len() != 2 || ws[0] != f_in {
        return Err(Error::Shape(format!("weights {ws:?} for {f_in} input features")));
    }
    let flat = tape.reshape(h, &[batch * nodes, f_in])?;
    let hw = tape.matmul(flat, w)?;
    let hw = tape.reshape(hw, &[batch, nodes, ws[1]])?;
    let mixed = tape.node_mix(hw, operators)?;
    Ok(tape.relu(mixed))
}

/// Single-graph forward pass of [`gcn_layer`] in double precision.
pub fn gcn_layer_forward(
    op: &NormalizedOperator,
    h: &NodeFeatureMatrix,
    w: &Tensor<f64>,
) -> Result<NodeFeatureMatrix> {
    let n = op.n();
    if h.n_nodes() != n || w.shape().len() != 2 || w.shape()[0] != h.n_features() {
        return Err(Error::InvalidParameter(format!(
            "operator {n}x{n}, features {}x{}, weights {:?} do not conform",
            h.n_nodes(),
            h.n_features(),
            w.shape()
        )));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(
        Tensor::new(&[1, n, h.n_features()], h.features().to_vec())?,
        false,
    );
    let wv = tape.leaf(w.clone(), false);
    let out = gcn_layer(&mut tape, op.matrix(), hv, wv)?;
    let f_out = w.shape()[1];
    NodeFeatureMatrix::new(tape.value(out).data().to_vec(), n, f_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{identity_adjacency, Measure};
    use alloc::vec;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adj(n: usize, w: Vec<f64>) -> AdjacencyMatrix {
        AdjacencyMatrix::new(w, n, Measure::Cor).unwrap()
    }

    fn random_symmetric(n: usize, lo: f64, rng: &mut ChaCha8Rng) -> AdjacencyMatrix {
        let mut w = vec![0.0; n * n];
        for k in 0..n {
            for l in k..n {
                let v = rng.random_range(lo..1.0);
                w[k * n + l] = v;
                w[l * n + k] = v;
            }
        }
        adj(n, w)
    }

    #[test]
    fn zero_graph_gives_identity() {
        let op = renormalize(&adj(2, vec![0.0; 4])).unwrap();
        assert_eq!(op.matrix(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn all_ones_graph() {
        let op = renormalize(&adj(2, vec![1.0; 4])).unwrap();
        let expected = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in op.matrix().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn signed_degree_can_fail() {
        let a = adj(2, vec![0.0, -1.0, -1.0, 0.0]);
        assert!(renormalize(&a).is_ok());
        let r = renormalize_with(&a, DegreeConvention::Signed);
        assert!(matches!(r, Err(Error::DegenerateGraph(_))));
    }

    #[test]
    fn symmetric_and_spectrally_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_symmetric(9, 0.0, &mut rng);
            let op = renormalize(&a).unwrap();
            for k in 0..9 {
                for l in 0..9 {
                    assert_eq!(op.get(k, l), op.get(l, k));
                }
            }
            let m = DMatrix::from_row_slice(9, 9, op.matrix());
            let eig = m.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|e| e.abs() <= 1.0 + 1e-8));
        }
    }

    #[test]
    fn signed_graphs_stay_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_symmetric(7, -1.0, &mut rng);
        let op = renormalize(&a).unwrap();
        for k in 0..7 {
            for l in 0..7 {
                assert_eq!(op.get(k, l), op.get(l, k));
            }
        }
    }

    fn eye(n: usize) -> Tensor<f64> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Tensor::new(&[n, n], d).unwrap()
    }

    #[test]
    fn identity_layer_examples() {
        let op = renormalize(&identity_adjacency(3)).unwrap();
        // identity adjacency plus self-loops renormalizes back to I
        assert_eq!(op.matrix(), eye(3).data());
        let h = NodeFeatureMatrix::new(vec![0.5, 1.0, 0.0, 2.0, 3.0, 0.1], 3, 2).unwrap();
        let out = gcn_layer_forward(&op, &h, &eye(2)).unwrap();
        assert_eq!(out.features(), h.features());
        let hn = NodeFeatureMatrix::new(vec![-0.5, 1.0, 0.0, -2.0, 3.0, -0.1], 3, 2).unwrap();
        let out = gcn_layer_forward(&op, &hn, &eye(2)).unwrap();
        assert_eq!(out.features(), &[0.0, 1.0, 0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn layer_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = renormalize(&random_symmetric(4, -1.0, &mut rng)).unwrap();
        let h: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hm = NodeFeatureMatrix::new(h.clone(), 4, 3).unwrap();
        let out = gcn_layer_forward(&op, &hm, &Tensor::new(&[3, 2], w.clone()).unwrap()).unwrap();
        for i in 0..4 {
            for o in 0..2 {
                let mut s = 0.0;
                for j in 0..4 {
                    for f in 0..3 {
                        s += op.get(i, j) * h[j * 3 + f] * w[f * 2 + o];
                    }
                }
                assert!((out.get(i, o) - s.max(0.0)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_graph_is_per_node_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = renormalize(&identity_adjacency(5)).unwrap();
        let h: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hm = NodeFeatureMatrix::new(h.clone(), 5, 4).unwrap();
        let out = gcn_layer_forward(&op, &hm, &Tensor::new(&[4, 3], w.clone()).unwrap()).unwrap();
        for i in 0..5 {
            for o in 0..3 {
                let s: f64 = (0..4).map(|f| h[i * 4 + f] * w[f * 3 + o]).sum();
                assert!((out.get(i, o) - s.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_rejects_mismatched_dims() {
        let op = renormalize(&identity_adjacency(3)).unwrap();
        let h = NodeFeatureMatrix::new(vec![0.0; 4], 2, 2).unwrap();
        assert!(matches!(gcn_layer_forward(&op, &h, &eye(2)), Err(Error::InvalidParameter(_))));
        let h = NodeFeatureMatrix::new(vec![0.0; 6], 3, 2).unwrap();
        assert!(gcn_layer_forward(&op, &h, &eye(3)).is_err());
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let op = renormalize(&random_symmetric(4, -1.0, &mut rng)).unwrap();
        let h: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |h: &[f64], w: &[f64], grad: bool| {
            let mut tape = Tape::new();
            let hv = tape.leaf(Tensor::new(&[1, 4, 3], h.to_vec()).unwrap(), grad);
            let wv = tape.leaf(Tensor::new(&[3, 2], w.to_vec()).unwrap(), grad);
            let y = gcn_layer(&mut tape, op.matrix(), hv, wv).unwrap();
            let l = tape.weighted_sum(y, &proj).unwrap();
            let value = tape.value(l).data()[0];
            let grads = grad.then(|| tape.backward(l).unwrap());
            (value, grads, hv, wv)
        };
        let (_, grads, hv, wv) = loss(&h, &w, true);
        let grads = grads.unwrap();
        let step = 1e-5;
        for (which, base) in [(hv, &h), (wv, &w)] {
            let analytic = grads.get(which).unwrap();
            for j in 0..base.len() {
                let (mut p, mut m) = (base.clone(), base.clone());
                p[j] += step;
                m[j] -= step;
                let (fp, fm) = if which == hv {
                    (loss(&p, &w, false).0, loss(&m, &w, false).0)
                } else {
                    (loss(&h, &p, false).0, loss(&h, &m, false).0)
                };
                let numeric = (fp - fm) / (2.0 * step);
                let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1.0);
                assert!(rel <= 1e-4);
            }
        }
    }
}
