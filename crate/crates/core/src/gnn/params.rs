use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, PutLe, Reader};
use crate::model::FEATURE_DIM;
use crate::rng::keyed_rng;
use crate::scalar::Scalar;

pub const HIDDEN: usize = 128;
/// Widths through the graph convolutions.
pub const GCN_DIMS: [usize; 6] = [FEATURE_DIM, HIDDEN, HIDDEN, HIDDEN, HIDDEN, HIDDEN];
/// Widths through the edge MLP; the input is two embeddings plus the
/// oracle weight.
pub const MLP_DIMS: [usize; 4] = [2 * HIDDEN + 1, HIDDEN, HIDDEN, 1];

const MAGIC: &[u8; 4] = b"GNN1";
const KEY_INIT: u64 = 20;

/// Affine layer `y = W x + b` with `W` stored as (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParameters<T> {
    pub gcn: Vec<Dense<T>>,
    pub mlp: Vec<Dense<T>>,
}

fn stack<T: Scalar>(dims: &[usize]) -> Vec<Dense<T>> {
    dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect()
}

impl<T: Scalar> GnnParameters<T> {
    pub fn zeros() -> Self {
        GnnParameters {
            gcn: stack(&GCN_DIMS),
            mlp: stack(&MLP_DIMS),
        }
    }

    /// Glorot-uniform weights from a seeded stream, zero biases.
    pub fn glorot(seed: u64) -> Self {
        let mut p = Self::zeros();
        let mut rng = keyed_rng(seed, &[KEY_INIT]);
        for layer in p.layers_mut() {
            let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            layer.weight.mapv_inplace(|_| T::lit(rng.gen_range(-limit..limit)));
        }
        p
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.gcn.iter().chain(&self.mlp)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.gcn.iter_mut().chain(self.mlp.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All values, layer by layer, weights (row-major) before biases.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.num_params());
        let mut it = values.iter().copied();
        for l in self.layers_mut() {
            for x in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *x = it.next().unwrap();
            }
        }
    }

    /// Applies `f(param, other)` elementwise against a same-shaped set.
    pub fn zip_apply(&mut self, other: &Self, mut f: impl FnMut(&mut T, T)) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight.zip_mut_with(&b.weight, |x, &y| f(x, y));
            a.bias.zip_mut_with(&b.bias, |x, &y| f(x, y));
        }
    }

    pub fn cast<U: Scalar>(&self) -> GnnParameters<U> {
        let conv = |d: &Dense<T>| Dense {
            weight: d.weight.mapv(|x| U::lit(x.as_f64())),
            bias: d.bias.mapv(|x| U::lit(x.as_f64())),
        };
        GnnParameters {
            gcn: self.gcn.iter().map(conv).collect(),
            mlp: self.mlp.iter().map(conv).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = |dims: &[usize], layers: &[Dense<T>]| {
            layers.len() == dims.len() - 1
                && layers
                    .iter()
                    .zip(dims.windows(2))
                    .all(|(l, w)| l.inputs() == w[0] && l.outputs() == w[1] && l.bias.len() == w[1])
        };
        if !shapes(&GCN_DIMS, &self.gcn) || !shapes(&MLP_DIMS, &self.mlp) {
            return Err(Error::invalid("network parameters", "layer shapes do not match the architecture"));
        }
        if self.layers().any(|l| l.weight.iter().chain(&l.bias).any(|x| !x.is_finite())) {
            return Err(Error::invalid("network parameters", "non-finite value"));
        }
        Ok(())
    }
}

pub fn params_to_bytes<T: Scalar>(p: &GnnParameters<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + p.num_params() * 4 + 64);
    out.extend_from_slice(MAGIC);
    for l in p.layers() {
        out.put_u32(l.outputs() as u32);
        out.put_u32(l.inputs() as u32);
        for &x in &l.weight {
            out.put_f32(x.as_f64() as f32);
        }
        for &x in &l.bias {
            out.put_f32(x.as_f64() as f32);
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<GnnParameters<f32>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let mut p = GnnParameters::<f32>::zeros();
    for (i, l) in p.layers_mut().enumerate() {
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if (rows, cols) != (l.outputs(), l.inputs()) {
            return Err(Error::Format(format!(
                "layer {i} is {rows}x{cols}, expected {}x{}",
                l.outputs(),
                l.inputs()
            )));
        }
        for x in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *x = r.f32()?;
        }
    }
    r.finish()?;
    p.validate()?;
    Ok(p)
}

pub fn save_params<T: Scalar>(p: &GnnParameters<T>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &params_to_bytes(p))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<GnnParameters<f32>> {
    params_from_bytes(&read_file(path.as_ref())?)
}
