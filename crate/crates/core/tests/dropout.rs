use alconf_core::confidence::mc_dropout;
use alconf_core::learner::{LearnerConfig, LearnerModel};
use ndarray::array;

const PASSES: usize = 10_000;
const RATE: f64 = 0.1;

/// One input, one hidden unit, two outputs: `h = relu(2x + 0.5)` and
/// logits `(h, -h)`.
fn single_unit_net() -> LearnerModel {
    let cfg = LearnerConfig {
        hidden_sizes: vec![1],
        dropout_rate: RATE,
        ..LearnerConfig::default()
    };
    let mut model = LearnerModel::initialize(&cfg, 1, 2).unwrap();
    let layers = model.layers_mut();
    layers[0].weights = array![[2.0]];
    layers[0].bias = Some(array![0.5]);
    layers[1].weights = array![[1.0, -1.0]];
    layers[1].bias = Some(array![0.0, 0.0]);
    model
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn masked_activation_is_unbiased() {
    let model = single_unit_net();
    let x = array![[1.0]];
    let h = 2.5;
    let samples: Vec<f64> = (0..PASSES as u64)
        .map(|s| model.forward_logits(x.view(), Some(s)).unwrap()[[0, 0]])
        .collect();
    let mean = samples.iter().sum::<f64>() / PASSES as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (PASSES - 1) as f64;
    let se = (var / PASSES as f64).sqrt();
    assert!((mean - h).abs() < 3.0 * se, "mean {mean}, se {se}");
    // Bernoulli mask scaled by 1 / (1 - rate): sd = h * sqrt(rate / (1 - rate)).
    let sd = h * (RATE / (1.0 - RATE)).sqrt();
    assert!((var.sqrt() - sd).abs() < 0.05 * sd);
}

#[test]
fn mc_average_matches_the_mask_expectation() {
    let model = single_unit_net();
    let x = array![[1.0]];
    let h: f64 = 2.5;
    // Dropped: logits (0, 0). Kept: logits (h, -h) / (1 - rate).
    let expected = RATE * 0.5 + (1.0 - RATE) * sigmoid(2.0 * h / (1.0 - RATE));
    let report = mc_dropout(&model, x.view(), PASSES, 0).unwrap();
    let p = report.distributions[[0, 0]];
    assert!((p - expected).abs() < 0.05, "p {p}, expected {expected}");
    // The estimate is a Bernoulli mixture over two values: 3 standard errors.
    let spread = sigmoid(2.0 * h / (1.0 - RATE)) - 0.5;
    let se = spread * (RATE * (1.0 - RATE) / PASSES as f64).sqrt();
    assert!((p - expected).abs() < 3.0 * se, "p {p}, expected {expected}, se {se}");
}

#[test]
fn inactive_unit_ignores_dropout() {
    let model = single_unit_net();
    let x = array![[-1.0]];
    for seed in 0..50 {
        let logits = model.forward_logits(x.view(), Some(seed)).unwrap();
        assert_eq!(logits, array![[0.0, 0.0]]);
    }
}
