use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::gnn::params::{GnnParameters, HIDDEN};
use crate::model::{EdgeLabel, SuperpointGraph, FEATURE_DIM};
use crate::scalar::Scalar;

/// Dense view of a graph ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput<T> {
    /// Node features, one row per node.
    pub features: Array2<T>,
    /// Closed neighbourhood of every node (itself included), sorted.
    pub closed: Vec<Vec<u32>>,
    pub edges: Vec<(u32, u32)>,
    /// Oracle weight per edge; all zero when edge weights are ablated.
    pub weights: Vec<T>,
    pub labels: Vec<Option<EdgeLabel>>,
    pub use_edge_weights: bool,
}

impl<T: Scalar> GraphInput<T> {
    /// Without edge weights the MLP sees `w = 0` and the consistency
    /// regularizer is dropped.
    pub fn from_graph(graph: &SuperpointGraph, use_edge_weights: bool) -> Result<Self> {
        let n = graph.nodes.len();
        let mut features = Array2::zeros((n, FEATURE_DIM));
        for (i, node) in graph.nodes.iter().enumerate() {
            let f = node
                .feature
                .as_ref()
                .ok_or(Error::MissingNodeFeature { sp_id: node.sp_id })?;
            for (x, &v) in features.row_mut(i).iter_mut().zip(f) {
                *x = T::lit(v as f64);
            }
        }
        let mut closed = graph.neighbors();
        for (i, list) in closed.iter_mut().enumerate() {
            let at = list.partition_point(|&x| x < i as u32);
            list.insert(at, i as u32);
        }
        let mut weights = Vec::with_capacity(graph.edges.len());
        for e in &graph.edges {
            if use_edge_weights {
                let w = e.w_sam.ok_or(Error::MissingEdgeWeight { u: e.u, v: e.v })?;
                weights.push(T::lit(w as f64));
            } else {
                weights.push(T::zero());
            }
        }
        Ok(GraphInput {
            features,
            closed,
            edges: graph.edges.iter().map(|e| (e.u, e.v)).collect(),
            weights,
            labels: graph.edges.iter().map(|e| e.label).collect(),
            use_edge_weights,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }
}

/// Row `v` becomes the mean of rows in its closed neighbourhood.
pub(crate) fn aggregate<T: Scalar>(closed: &[Vec<u32>], h: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros(h.raw_dim());
    for (v, nb) in closed.iter().enumerate() {
        let mut row = out.row_mut(v);
        for &u in nb {
            row += &h.row(u as usize);
        }
        row /= T::lit(nb.len() as f64);
    }
    out
}

/// Adjoint of [`aggregate`].
pub(crate) fn aggregate_adjoint<T: Scalar>(closed: &[Vec<u32>], dm: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros(dm.raw_dim());
    for (v, nb) in closed.iter().enumerate() {
        let scaled = &dm.row(v) / T::lit(nb.len() as f64);
        for &u in nb {
            let mut row = out.row_mut(u as usize);
            row += &scaled;
        }
    }
    out
}

fn affine<T: Scalar>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    x.dot(&w.t()) + b
}

pub(crate) fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| v.max(T::zero()))
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Intermediate values of the convolution stack kept for backprop.
pub(crate) struct GcnCache<T> {
    /// Aggregated inputs per layer.
    pub m: Vec<Array2<T>>,
    /// Pre-activations per layer.
    pub z: Vec<Array2<T>>,
    /// Final embeddings.
    pub out: Array2<T>,
}

pub(crate) fn gcn_forward_cached<T: Scalar>(params: &GnnParameters<T>, input: &GraphInput<T>) -> GcnCache<T> {
    let mut h = input.features.clone();
    let (mut ms, mut zs) = (Vec::new(), Vec::new());
    let last = params.gcn.len() - 1;
    for (l, layer) in params.gcn.iter().enumerate() {
        let m = aggregate(&input.closed, &h);
        let z = affine(&m, &layer.weight, &layer.bias);
        h = if l == last { z.clone() } else { relu(&z) };
        ms.push(m);
        zs.push(z);
    }
    GcnCache { m: ms, z: zs, out: h }
}

/// Per-node embeddings after the convolution stack.
pub fn gcn_forward<T: Scalar>(params: &GnnParameters<T>, input: &GraphInput<T>) -> Array2<T> {
    gcn_forward_cached(params, input).out
}

/// Edge MLP values for both node orders: rows `0..E` are `(u, v)`, rows
/// `E..2E` are `(v, u)`.
pub(crate) struct MlpCache<T> {
    pub z1: Array2<T>,
    pub a1: Array2<T>,
    pub z2: Array2<T>,
    pub a2: Array2<T>,
    /// Sigmoid outputs per row.
    pub f: Vec<T>,
}

pub(crate) fn row_pair(edges: &[(u32, u32)], r: usize) -> (usize, usize) {
    let e = edges.len();
    let (u, v) = edges[r % e.max(1)];
    if r < e {
        (u as usize, v as usize)
    } else {
        (v as usize, u as usize)
    }
}

pub(crate) fn mlp_forward<T: Scalar>(
    params: &GnnParameters<T>,
    h: &Array2<T>,
    edges: &[(u32, u32)],
    weights: &[T],
) -> MlpCache<T> {
    let l1 = &params.mlp[0];
    // The first layer splits as Wa h_i + Wb h_j + wc w, so project every
    // node once instead of every edge twice.
    let wa = l1.weight.slice(s![.., 0..HIDDEN]);
    let wb = l1.weight.slice(s![.., HIDDEN..2 * HIDDEN]);
    let wc: ArrayView1<T> = l1.weight.column(2 * HIDDEN);
    let p = h.dot(&wa.t());
    let q = h.dot(&wb.t());
    let rows = 2 * edges.len();
    let mut z1 = Array2::zeros((rows, HIDDEN));
    for (r, mut row) in z1.axis_iter_mut(Axis(0)).enumerate() {
        let (i, j) = row_pair(edges, r);
        let w = weights[r % edges.len()];
        row.assign(&p.row(i));
        row += &q.row(j);
        row.scaled_add(w, &wc);
        row += &l1.bias;
    }
    let a1 = relu(&z1);
    let z2 = affine(&a1, &params.mlp[1].weight, &params.mlp[1].bias);
    let a2 = relu(&z2);
    let z3 = affine(&a2, &params.mlp[2].weight, &params.mlp[2].bias);
    let f = z3.column(0).iter().map(|&z| sigmoid(z)).collect();
    MlpCache { z1, a1, z2, a2, f }
}

/// Symmetrized affinity per edge, `(f(u, v) + f(v, u)) / 2`.
pub fn edge_affinities<T: Scalar>(params: &GnnParameters<T>, input: &GraphInput<T>) -> Vec<T> {
    if input.edges.is_empty() {
        return Vec::new();
    }
    let h = gcn_forward(params, input);
    let c = mlp_forward(params, &h, &input.edges, &input.weights);
    let e = input.edges.len();
    (0..e).map(|k| (c.f[k] + c.f[k + e]) / T::lit(2.0)).collect()
}

/// Writes network affinities into every edge of `graph`.
pub fn infer_graph<T: Scalar>(
    graph: &mut SuperpointGraph,
    params: &GnnParameters<T>,
    use_edge_weights: bool,
) -> Result<()> {
    params.validate()?;
    let input = GraphInput::<T>::from_graph(graph, use_edge_weights)?;
    let s = edge_affinities(params, &input);
    for (e, s) in graph.edges.iter_mut().zip(s) {
        e.affinity = Some((s.as_f64() as f32).clamp(0.0, 1.0));
    }
    Ok(())
}
