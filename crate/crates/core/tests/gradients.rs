//! Backpropagated gradients against central finite differences of the loss.

use alconf_core::learner::{HeadKind, LearnerConfig, LearnerModel, LossKind};
use ndarray::{array, Array2};

const EPS: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;

fn configs() -> Vec<(&'static str, LearnerConfig)> {
    let base = LearnerConfig {
        hidden_sizes: vec![3],
        dropout_rate: 0.0,
        seed: 5,
        ..LearnerConfig::default()
    };
    vec![
        ("cross entropy", base.clone()),
        (
            "label smoothing",
            LearnerConfig {
                loss: LossKind::LabelSmoothing { alpha: 0.2 },
                ..base.clone()
            },
        ),
        (
            "inhibited",
            LearnerConfig {
                head: HeadKind::InhibitedSoftmax,
                loss: LossKind::Inhibited {
                    alpha: 1.0,
                    lambda: 0.01,
                },
                ..base.clone()
            },
        ),
        (
            "evidential",
            LearnerConfig {
                head: HeadKind::Evidential,
                loss: LossKind::Evidential { anneal_epochs: 10 },
                ..base
            },
        ),
    ]
}

fn batch() -> (Array2<f64>, Vec<usize>) {
    (
        array![
            [0.5, -1.2, 0.3, 2.0],
            [-0.7, 0.4, 1.1, -0.2],
            [1.5, 0.9, -0.6, 0.1],
            [-1.1, -0.3, 0.8, 0.6],
            [0.2, 1.7, -1.4, -0.9],
        ],
        vec![0, 1, 1, 0, 1],
    )
}

/// Keeps every hidden pre-activation away from the ReLU kink.
fn shift_hidden_bias(model: &mut LearnerModel) {
    let layer = &mut model.layers_mut()[0];
    if let Some(b) = layer.bias.as_mut() {
        b.fill(0.35);
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[test]
fn all_losses_match_finite_differences() {
    let (x, y) = batch();
    // Epoch 5 of a 10-epoch anneal: the evidential KL term is active.
    let anneal = 0.5;
    for (name, cfg) in configs() {
        let mut model = LearnerModel::initialize(&cfg, 4, 2).unwrap();
        shift_hidden_bias(&mut model);
        let (_, grads) = model.gradient(x.view(), &y, anneal);
        let mut worst: f64 = 0.0;
        for (l, grad) in grads.iter().enumerate() {
            let shape = model.layers()[l].weights.dim();
            for i in 0..shape.0 {
                for j in 0..shape.1 {
                    let mut plus = model.clone();
                    plus.layers_mut()[l].weights[[i, j]] += EPS;
                    let mut minus = model.clone();
                    minus.layers_mut()[l].weights[[i, j]] -= EPS;
                    let numeric =
                        (plus.loss_value(x.view(), &y, anneal) - minus.loss_value(x.view(), &y, anneal)) / (2.0 * EPS);
                    worst = worst.max(relative_error(grad.weights[[i, j]], numeric));
                }
            }
            if let Some(bias) = &model.layers()[l].bias {
                for j in 0..bias.len() {
                    let mut plus = model.clone();
                    plus.layers_mut()[l].bias.as_mut().unwrap()[j] += EPS;
                    let mut minus = model.clone();
                    minus.layers_mut()[l].bias.as_mut().unwrap()[j] -= EPS;
                    let numeric =
                        (plus.loss_value(x.view(), &y, anneal) - minus.loss_value(x.view(), &y, anneal)) / (2.0 * EPS);
                    let analytic = grad.bias.as_ref().expect("bias gradient")[j];
                    worst = worst.max(relative_error(analytic, numeric));
                }
            } else {
                assert!(grad.bias.is_none(), "{name}: gradient for a missing bias");
            }
        }
        assert!(worst < MAX_REL_ERR, "{name}: max relative error {worst:e}");
    }
}

#[test]
fn network_shape_is_four_three_two() {
    for (_, cfg) in configs() {
        let model = LearnerModel::initialize(&cfg, 4, 2).unwrap();
        let shapes: Vec<_> = model.layers().iter().map(|l| l.weights.dim()).collect();
        assert_eq!(shapes, vec![(4, 3), (3, 2)]);
    }
}
