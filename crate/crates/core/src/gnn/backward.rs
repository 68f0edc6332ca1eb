use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::gnn::forward::{aggregate_adjoint, gcn_forward_cached, mlp_forward, row_pair, GraphInput};
use crate::gnn::params::{GnnParameters, HIDDEN};
use crate::scalar::Scalar;

/// Affinities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts<T> {
    pub total: T,
    /// Mean cross-entropy over labeled edges.
    pub bce: T,
    /// Mean `|w - 0.5| |s - w|` over unlabeled edges.
    pub reg: T,
    pub labeled: usize,
    pub unlabeled: usize,
}

fn relu_mask<T: Scalar>(grad: &mut Array2<T>, pre: &Array2<T>) {
    grad.zip_mut_with(pre, |g, &z| {
        if z <= T::zero() {
            *g = T::zero();
        }
    });
}

/// Adds `d/dparams` of `Σ_e coeff_e · s_e` for one graph into `grads`.
fn backprop_graph<T: Scalar>(
    params: &GnnParameters<T>,
    input: &GraphInput<T>,
    coeff_of: impl Fn(usize, T) -> T,
    grads: &mut GnnParameters<T>,
) -> Vec<T> {
    let e = input.edges.len();
    let gcn = gcn_forward_cached(params, input);
    let h = &gcn.out;
    let mlp = mlp_forward(params, h, &input.edges, &input.weights);
    let half = T::lit(0.5);
    let s: Vec<T> = (0..e).map(|k| (mlp.f[k] + mlp.f[k + e]) * half).collect();

    // d/dz3 per row.
    let rows = 2 * e;
    let mut dz3 = Array2::zeros((rows, 1));
    for r in 0..rows {
        let k = r % e;
        let ds = coeff_of(k, s[k]);
        let f = mlp.f[r];
        dz3[(r, 0)] = ds * half * f * (T::one() - f);
    }

    // Output layer.
    let (l3, g3) = (&params.mlp[2], &mut grads.mlp[2]);
    g3.weight += &dz3.t().dot(&mlp.a2);
    g3.bias += &dz3.sum_axis(Axis(0));
    let mut da2 = dz3.dot(&l3.weight);
    relu_mask(&mut da2, &mlp.z2);
    let dz2 = da2;

    let (l2, g2) = (&params.mlp[1], &mut grads.mlp[1]);
    g2.weight += &dz2.t().dot(&mlp.a1);
    g2.bias += &dz2.sum_axis(Axis(0));
    let mut dz1 = dz2.dot(&l2.weight);
    relu_mask(&mut dz1, &mlp.z1);

    // First layer, split into the two embedding blocks and the weight column.
    let n = input.num_nodes();
    let mut dp = Array2::<T>::zeros((n, HIDDEN));
    let mut dq = Array2::<T>::zeros((n, HIDDEN));
    let g1 = &mut grads.mlp[0];
    let mut dwc = ndarray::Array1::<T>::zeros(HIDDEN);
    for (r, row) in dz1.axis_iter(Axis(0)).enumerate() {
        let (i, j) = row_pair(&input.edges, r);
        let mut pi = dp.row_mut(i);
        pi += &row;
        let mut qj = dq.row_mut(j);
        qj += &row;
        dwc.scaled_add(input.weights[r % e], &row);
    }
    g1.bias += &dz1.sum_axis(Axis(0));
    {
        let mut wa = g1.weight.slice_mut(s![.., 0..HIDDEN]);
        wa += &dp.t().dot(h);
    }
    {
        let mut wb = g1.weight.slice_mut(s![.., HIDDEN..2 * HIDDEN]);
        wb += &dq.t().dot(h);
    }
    {
        let mut wc = g1.weight.column_mut(2 * HIDDEN);
        wc += &dwc;
    }
    let l1 = &params.mlp[0];
    let wa = l1.weight.slice(s![.., 0..HIDDEN]);
    let wb = l1.weight.slice(s![.., HIDDEN..2 * HIDDEN]);
    let mut dh = dp.dot(&wa) + dq.dot(&wb);

    // Convolution stack, last layer first.
    let last = params.gcn.len() - 1;
    for l in (0..=last).rev() {
        let mut dz = dh;
        if l != last {
            relu_mask(&mut dz, &gcn.z[l]);
        }
        let g = &mut grads.gcn[l];
        g.weight += &dz.t().dot(&gcn.m[l]);
        g.bias += &dz.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let dm = dz.dot(&params.gcn[l].weight);
        dh = aggregate_adjoint(&input.closed, &dm);
    }
    s
}

/// Loss over the edges of several graphs pooled together, and its exact
/// gradient. Both means run over the pooled edge sets.
pub fn loss_and_gradients_pooled<T: Scalar>(
    inputs: &[&GraphInput<T>],
    params: &GnnParameters<T>,
) -> Result<(LossParts<T>, GnnParameters<T>)> {
    let labeled: usize = inputs
        .iter()
        .map(|g| g.labels.iter().filter(|l| l.is_some()).count())
        .sum();
    let unlabeled: usize = inputs
        .iter()
        .filter(|g| g.use_edge_weights)
        .map(|g| g.labels.iter().filter(|l| l.is_none()).count())
        .sum();
    if labeled + unlabeled == 0 {
        return Err(Error::NoTrainableEdges);
    }
    let eps = T::lit(BCE_CLAMP);
    let n_lab = T::lit(labeled.max(1) as f64);
    let n_unl = T::lit(unlabeled.max(1) as f64);
    let half = T::lit(0.5);

    let mut grads = GnnParameters::<T>::zeros();
    let (mut bce, mut reg) = (T::zero(), T::zero());
    for input in inputs {
        if input.edges.is_empty() {
            continue;
        }
        let s = backprop_graph(
            params,
            input,
            |k, s| match input.labels[k] {
                Some(label) => {
                    let y = T::lit(label.target());
                    if s < eps || s > T::one() - eps {
                        T::zero()
                    } else {
                        (-(y / s) + (T::one() - y) / (T::one() - s)) / n_lab
                    }
                }
                None if input.use_edge_weights => {
                    let w = input.weights[k];
                    let d = s - w;
                    let sign = if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    (w - half).abs() * sign / n_unl
                }
                None => T::zero(),
            },
            &mut grads,
        );
        for (k, &s) in s.iter().enumerate() {
            match input.labels[k] {
                Some(label) => {
                    let y = T::lit(label.target());
                    let sc = s.max(eps).min(T::one() - eps);
                    bce -= y * sc.ln() + (T::one() - y) * (T::one() - sc).ln();
                }
                None if input.use_edge_weights => {
                    let w = input.weights[k];
                    reg += (w - half).abs() * (s - w).abs();
                }
                None => {}
            }
        }
    }
    let bce = if labeled > 0 { bce / n_lab } else { T::zero() };
    let reg = if unlabeled > 0 { reg / n_unl } else { T::zero() };
    Ok((
        LossParts {
            total: bce + reg,
            bce,
            reg,
            labeled,
            unlabeled,
        },
        grads,
    ))
}

/// Cross-entropy on pseudo-labeled edges plus the oracle-consistency
/// regularizer on the rest, with gradients for every parameter.
pub fn loss_and_gradients<T: Scalar>(
    input: &GraphInput<T>,
    params: &GnnParameters<T>,
) -> Result<(LossParts<T>, GnnParameters<T>)> {
    loss_and_gradients_pooled(&[input], params)
}
