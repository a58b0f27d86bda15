use super::{Cache, ModelConfig, Network};
use crate::error::{Error, Result};

/// Largest network the finite-difference check accepts.
pub const GRADCHECK_MAX_PARAMS: usize = 10_000;
const STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared in absolute terms.
const FLOOR: f64 = 1e-4;

/// Builds the network described by `config` and compares its backprop
/// gradients of the batch MSE against central finite differences.
pub fn gradient_check(config: &ModelConfig, inputs: &[f64], targets: &[f64], rows: usize) -> Result<f64> {
    config.validate()?;
    gradient_check_network(&Network::new(config), inputs, targets, rows)
}

/// Max over all parameters of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-4)`,
/// with the numeric derivative taken by central differences of step `1e-5`.
pub fn gradient_check_network(net: &Network, inputs: &[f64], targets: &[f64], rows: usize) -> Result<f64> {
    if net.param_count() > GRADCHECK_MAX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "gradient check limited to {GRADCHECK_MAX_PARAMS} parameters, network has {}",
            net.param_count()
        )));
    }
    if inputs.len() != rows * net.input_dim() || targets.len() != rows * net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: rows * net.input_dim(),
            found: inputs.len(),
        });
    }
    let mut cache = Cache::default();
    let mut analytic = vec![0.0; net.param_count()];
    net.mse(inputs, targets, rows, &mut cache, Some(&mut analytic));

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for k in 0..net.param_count() {
        let original = probe.params()[k];
        probe.params_mut()[k] = original + STEP;
        let up = probe.mse(inputs, targets, rows, &mut cache, None);
        probe.params_mut()[k] = original - STEP;
        let down = probe.mse(inputs, targets, rows, &mut cache, None);
        probe.params_mut()[k] = original;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::Activation;
    use super::*;
    use rand::Rng;

    fn batch(config: &ModelConfig, rows: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut r = crate::seed::rng(seed);
        let x = (0..rows * config.input_dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = (0..rows * config.output_dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        (x, y)
    }

    fn small(skip: bool, activation: Activation) -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            output_dim: 32,
            hidden_widths: vec![6, 6, 6],
            skip_connections: skip,
            activation,
            init_seed: 17,
        }
    }

    #[test]
    fn plain_and_residual_networks_pass() {
        for skip in [false, true] {
            for act in [Activation::Relu, Activation::Tanh] {
                let c = small(skip, act);
                let (x, y) = batch(&c, 4, 2);
                let err = gradient_check(&c, &x, &y, 4).unwrap();
                assert!(err <= 1e-5, "skip={skip} {act:?}: {err}");
            }
        }
    }

    #[test]
    fn zero_network_matches_exactly() {
        let c = small(true, Activation::Relu);
        let net = Network::zeros(Network::layout(&c), c.activation);
        let (x, y) = batch(&c, 3, 8);
        let err = gradient_check_network(&net, &x, &y, 3).unwrap();
        // the loss is quadratic in the head biases, so only rounding remains
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn refuses_large_networks() {
        let c = ModelConfig::reference(3, true, 0);
        let c = ModelConfig {
            hidden_widths: vec![128, 128, 128],
            ..c
        };
        let (x, y) = batch(&c, 1, 1);
        assert!(gradient_check(&c, &x, &y, 1).is_err());
    }
}
