//! Feedforward classifier with ReLU hidden layers, inverted dropout and a
//! choice of output head and loss.

mod checkpoint;
pub mod loss;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub use loss::LossKind;

/// How the output logits are turned into class probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Softmax,
    /// Softmax with an extra constant in the denominator. The output layer
    /// carries no bias.
    InhibitedSoftmax,
    /// Non-negative evidence parameterising a Dirichlet.
    Evidential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub head: HeadKind,
    pub loss: LossKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![128],
            dropout_rate: 0.1,
            head: HeadKind::Softmax,
            loss: LossKind::CrossEntropy,
            epochs: 100,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let compatible = matches!(
            (self.head, self.loss),
            (HeadKind::Softmax, LossKind::CrossEntropy)
                | (HeadKind::Softmax, LossKind::LabelSmoothing { .. })
                | (HeadKind::InhibitedSoftmax, LossKind::Inhibited { .. })
                | (HeadKind::Evidential, LossKind::Evidential { .. })
        );
        if !compatible {
            return Err(Error::invalid(format!(
                "loss {:?} cannot train a {:?} head",
                self.loss, self.head
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if let LossKind::LabelSmoothing { alpha } = self.loss {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::invalid("label smoothing alpha must lie in (0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Dense layer computing `x · weights + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

/// Parameter-shaped gradient of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerModel {
    layers: Vec<Layer>,
    head: HeadKind,
    loss: LossKind,
    dropout_rate: f64,
    trained: bool,
}

struct ForwardTrace {
    /// Input of every layer (post-dropout for hidden outputs).
    inputs: Vec<Array2<f64>>,
    /// ReLU derivative times dropout scale for every hidden layer.
    gates: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl LearnerModel {
    /// Glorot-uniform weights and zero biases.
    pub fn initialize(config: &LearnerConfig, input_dim: usize, class_count: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.seed, &[0]));
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.hidden_sizes);
        widths.push(class_count);
        let depth = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.sample(dist));
                let is_output = i + 1 == depth;
                let bias = if is_output && config.head == HeadKind::InhibitedSoftmax {
                    None
                } else {
                    Some(Array1::zeros(fan_out))
                };
                Layer { weights, bias }
            })
            .collect();
        Ok(Self {
            layers,
            head: config.head,
            loss: config.loss,
            dropout_rate: config.dropout_rate,
            trained: false,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.ncols()
    }

    fn forward_trace(&self, features: ArrayView2<'_, f64>, mut dropout: Option<&mut Rng>) -> ForwardTrace {
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(last);
        let mut current = features.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights);
            if let Some(b) = &layer.bias {
                z += b;
            }
            inputs.push(current);
            if i == last {
                return ForwardTrace {
                    inputs,
                    gates,
                    logits: z,
                };
            }
            let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if let Some(rng) = dropout.as_deref_mut() {
                if self.dropout_rate > 0.0 {
                    for g in gate.iter_mut() {
                        *g *= if rng.random::<f64>() < self.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        };
                    }
                }
            }
            // relu(z) * mask == z * (relu'(z) * mask)
            current = z * &gate;
            gates.push(gate);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Output-layer pre-activations. With `dropout_seed` set, every hidden
    /// unit is dropped independently with the model's dropout rate and
    /// survivors are scaled by `1 / (1 - rate)`.
    pub fn forward_logits(&self, features: ArrayView2<'_, f64>, dropout_seed: Option<u64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: features.ncols(),
            });
        }
        let mut rng = dropout_seed.map(rng_from_seed);
        Ok(self.forward_trace(features, rng.as_mut()).logits)
    }

    /// Mean configured loss on a batch without dropout.
    pub fn loss_value(&self, features: ArrayView2<'_, f64>, labels: &[usize], anneal: f64) -> f64 {
        let logits = self.forward_trace(features, None).logits;
        self.loss.evaluate(logits.view(), labels, anneal).0
    }

    /// Mean loss and its exact gradient with respect to every parameter.
    pub fn gradient(&self, features: ArrayView2<'_, f64>, labels: &[usize], anneal: f64) -> (f64, Vec<LayerGradient>) {
        self.backprop(features, labels, anneal, None)
    }

    fn backprop(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        anneal: f64,
        dropout: Option<&mut Rng>,
    ) -> (f64, Vec<LayerGradient>) {
        let trace = self.forward_trace(features, dropout);
        let (loss, mut delta) = self.loss.evaluate(trace.logits.view(), labels, anneal);
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let weights = input.t().dot(&delta);
            let bias = layer.bias.as_ref().map(|_| delta.sum_axis(Axis(0)));
            if i > 0 {
                delta = delta.dot(&layer.weights.t()) * &trace.gates[i - 1];
            }
            grads.push(LayerGradient { weights, bias });
        }
        grads.reverse();
        (loss, grads)
    }

    fn apply(&mut self, grads: &[LayerGradient], learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            if let (Some(b), Some(gb)) = (layer.bias.as_mut(), g.bias.as_ref()) {
                b.scaled_add(-learning_rate, gb);
            }
        }
    }

    fn parameters_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
        })
    }

    /// Class with the largest logit per row, ties to the lowest id. This is
    /// the argmax of every head's distribution.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let logits = self.forward_logits(features, None)?;
        Ok(logits
            .outer_iter()
            .map(|r| crate::math::argmax(r.iter().copied()))
            .collect())
    }

    /// Fraction of `indices` whose prediction matches the dataset label.
    pub fn accuracy(&self, ds: &Dataset, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::invalid("accuracy over an empty index set"));
        }
        let predictions = self.predict(ds.select_features(indices).view())?;
        let correct = predictions
            .iter()
            .zip(indices)
            .filter(|(&p, &i)| p == ds.labels()[i])
            .count();
        Ok(correct as f64 / indices.len() as f64)
    }
}

/// Trains a fresh model on `labeled` with shuffled mini-batch gradient
/// descent. Identical inputs give bit-identical parameters.
pub fn train(config: &LearnerConfig, ds: &Dataset, labeled: &[usize]) -> Result<LearnerModel> {
    if labeled.is_empty() {
        return Err(Error::invalid("cannot train on an empty labeled set"));
    }
    let mut model = LearnerModel::initialize(config, ds.dim(), ds.class_count())?;
    let histogram = ds.class_histogram(labeled);
    if histogram.iter().filter(|&&c| c > 0).count() < 2 {
        log::warn!("training on a single-class labeled set of {} samples", labeled.len());
    }

    let features = ds.select_features(labeled);
    let labels = ds.select_labels(labeled);
    let mut rng = rng_from_seed(derive_seed(config.seed, &[1]));
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    for epoch in 0..config.epochs {
        let anneal = config.loss.anneal_coefficient(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.backprop(x.view(), &y, anneal, Some(&mut rng));
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            model.apply(&grads, config.learning_rate);
        }
        if !model.parameters_finite() {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
    }
    model.trained = true;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn xor() -> Dataset {
        let features = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        Dataset::new(features, vec![0, 1, 1, 0], None).unwrap()
    }

    #[test]
    fn config_compatibility() {
        let mut cfg = LearnerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.head = HeadKind::Evidential;
        assert!(cfg.validate().is_err());
        cfg.loss = LossKind::Evidential { anneal_epochs: 10 };
        assert!(cfg.validate().is_ok());
        cfg.dropout_rate = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn learns_xor() {
        let cfg = LearnerConfig {
            hidden_sizes: vec![8],
            dropout_rate: 0.0,
            epochs: 500,
            learning_rate: 0.5,
            batch_size: 4,
            seed: 3,
            ..LearnerConfig::default()
        };
        let ds = xor();
        let model = train(&cfg, &ds, &[0, 1, 2, 3]).unwrap();
        assert!(model.is_trained());
        assert_eq!(model.accuracy(&ds, &[0, 1, 2, 3]).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let cfg = LearnerConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..LearnerConfig::default()
        };
        let ds = Dataset::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1], None).unwrap();
        let init = LearnerModel::initialize(&cfg, 2, 2).unwrap();
        let trained = train(&cfg, &ds, &[0, 1]).unwrap();
        assert_eq!(init.layers(), trained.layers());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = LearnerConfig {
            epochs: 20,
            ..LearnerConfig::default()
        };
        let ds = xor();
        let a = train(&cfg, &ds, &[0, 1, 2, 3]).unwrap();
        let b = train(&cfg, &ds, &[0, 1, 2, 3]).unwrap();
        assert_eq!(a, b);
        let c = train(&LearnerConfig { seed: 9, ..cfg }, &ds, &[0, 1, 2, 3]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_class_still_trains() {
        let ds = xor();
        let model = train(
            &LearnerConfig {
                epochs: 5,
                ..Default::default()
            },
            &ds,
            &[0, 3],
        )
        .unwrap();
        assert!(model.is_trained());
    }

    #[test]
    fn inhibited_head_has_no_output_bias() {
        let cfg = LearnerConfig {
            head: HeadKind::InhibitedSoftmax,
            loss: LossKind::Inhibited {
                alpha: 1.0,
                lambda: 0.01,
            },
            ..LearnerConfig::default()
        };
        let model = LearnerModel::initialize(&cfg, 4, 3).unwrap();
        assert!(model.layers().last().unwrap().bias.is_none());
        assert!(model.layers()[0].bias.is_some());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = LearnerModel::initialize(&LearnerConfig::default(), 3, 2).unwrap();
        assert!(matches!(
            model.forward_logits(Array2::zeros((1, 4)).view(), None),
            Err(Error::DimensionMismatch { expected: 3, actual: 4 })
        ));
    }

    #[test]
    fn zero_dropout_rate_is_noop() {
        let cfg = LearnerConfig {
            dropout_rate: 0.0,
            ..LearnerConfig::default()
        };
        let model = LearnerModel::initialize(&cfg, 3, 2).unwrap();
        let x = array![[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]];
        assert_eq!(
            model.forward_logits(x.view(), None).unwrap(),
            model.forward_logits(x.view(), Some(42)).unwrap()
        );
    }

    #[test]
    fn dropout_is_seeded() {
        let model = LearnerModel::initialize(
            &LearnerConfig {
                dropout_rate: 0.5,
                ..Default::default()
            },
            3,
            2,
        )
        .unwrap();
        let x = array![[0.3, -1.0, 2.0]];
        let a = model.forward_logits(x.view(), Some(5)).unwrap();
        assert_eq!(a, model.forward_logits(x.view(), Some(5)).unwrap());
        assert_ne!(a, model.forward_logits(x.view(), Some(6)).unwrap());
    }

    #[test]
    fn symmetric_gradient_at_zero_weights() {
        let cfg = LearnerConfig {
            hidden_sizes: vec![3],
            dropout_rate: 0.0,
            ..LearnerConfig::default()
        };
        let mut model = LearnerModel::initialize(&cfg, 2, 2).unwrap();
        for layer in model.layers_mut() {
            layer.weights.fill(0.0);
        }
        let x = array![[1.0, 1.0], [-1.0, -1.0]];
        let (_, grads) = model.gradient(x.view(), &[0, 1], 1.0);
        let out_bias = grads[1].bias.as_ref().unwrap();
        assert!((out_bias[0] + out_bias[1]).abs() < 1e-15);
        assert!(out_bias[0].abs() < 1e-15);
        let w = &grads[0].weights;
        assert!(w.iter().all(|&v| (v - w[[0, 0]]).abs() < 1e-15));
    }
}
