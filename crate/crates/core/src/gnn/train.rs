use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::backward::{loss_and_gradients_pooled, LossParts};
use crate::gnn::forward::GraphInput;
use crate::gnn::params::GnnParameters;
use crate::model::SuperpointGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Feed oracle weights to the MLP and apply the consistency term.
    pub use_edge_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            use_edge_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: GnnParameters<T>,
    v: GnnParameters<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: GnnParameters::zeros(),
            v: GnnParameters::zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut GnnParameters<T>, grads: &GnnParameters<T>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        self.m.zip_apply(grads, |m, g| *m = b1 * *m + (T::one() - b1) * g);
        self.v.zip_apply(grads, |v, g| *v = b2 * *v + (T::one() - b2) * g * g);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        // Walk params against both moment buffers in lockstep.
        let mut upd = self.m.clone();
        upd.zip_apply(&self.v, |m, v| *m = lr * (*m / c1) / ((v / c2).sqrt() + eps));
        params.zip_apply(&upd, |p, u| *p -= u);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub params: GnnParameters<T>,
    /// Loss before each update.
    pub history: Vec<LossParts<T>>,
}

/// Full-batch training over several graphs at once.
pub fn train_pooled<T: Scalar>(graphs: &[&SuperpointGraph], config: &TrainConfig) -> Result<TrainOutput<T>> {
    config.validate()?;
    let inputs: Vec<GraphInput<T>> = graphs
        .iter()
        .map(|g| GraphInput::from_graph(g, config.use_edge_weights))
        .collect::<Result<_>>()?;
    let refs: Vec<&GraphInput<T>> = inputs.iter().collect();
    let mut params = GnnParameters::<T>::glorot(config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = loss_and_gradients_pooled(&refs, &params)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(loss);
        adam.step(&mut params, &grads);
        log::debug!("epoch {epoch}: loss {} (bce {}, reg {})", loss.total, loss.bce, loss.reg);
    }
    if params.layers().any(|l| l.weight.iter().any(|x| !x.is_finite())) {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok(TrainOutput { params, history })
}

pub fn train<T: Scalar>(graph: &SuperpointGraph, config: &TrainConfig) -> Result<TrainOutput<T>> {
    train_pooled(&[graph], config)
}
