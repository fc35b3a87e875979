//! Dense networks with hand-rolled reverse-mode gradients, plus the
//! diagonal-Gaussian policy head.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PpoError;

/// Bounds applied to log standard deviations before exponentiation.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// One dense layer; weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Layer {
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x.iter()) {
                acc += w * xi;
            }
            out.push(self.activation.apply(acc));
        }
    }
}

/// Fully-connected network over `f64` slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Xavier-uniform initialization; the final layer is additionally scaled
    /// by `last_layer_scale` (small values keep the initial policy near the
    /// home configuration).
    pub fn new(
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        last_layer_scale: f64,
        rng: &mut impl Rng,
    ) -> Mlp {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[l], dims[l + 1]);
            let last = l == dims.len() - 2;
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt()
                * if last { last_layer_scale } else { 1.0 };
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            layers.push(Layer {
                weights,
                bias: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation: if last { output_activation } else { hidden_activation },
            });
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = Cache::default();
        self.forward_cached(x, &mut cache);
        cache.activations.last().cloned().unwrap_or_default()
    }

    /// Forward pass retaining per-layer post-activations for backprop.
    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        cache.resize_for(self);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = cache.activations.split_at_mut(l + 1);
            layer.forward_into(&prev[l], &mut rest[0]);
        }
    }

    /// Accumulate gradients for one sample given `dout` = dLoss/d(output).
    /// `cache` must come from `forward_cached` on the same input.
    pub fn backward(&self, cache: &Cache, dout: &[f64], grads: &mut MlpGrads) {
        debug_assert_eq!(dout.len(), self.output_dim());
        let mut delta = dout.to_vec();
        let mut delta_prev = Vec::new();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let outputs = &cache.activations[l + 1];
            let inputs = &cache.activations[l];
            for (d, y) in delta.iter_mut().zip(outputs.iter()) {
                *d *= layer.activation.derivative_from_output(*y);
            }
            let gw = &mut grads.weights[l];
            let gb = &mut grads.bias[l];
            for o in 0..layer.out_dim {
                let dz = delta[o];
                gb[o] += dz;
                let grow = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, xi) in grow.iter_mut().zip(inputs.iter()) {
                    *g += dz * xi;
                }
            }
            if l > 0 {
                delta_prev.clear();
                delta_prev.resize(layer.in_dim, 0.0);
                for o in 0..layer.out_dim {
                    let dz = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (dp, w) in delta_prev.iter_mut().zip(row.iter()) {
                        *dp += dz * w;
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Append all parameters in canonical order (per layer: weights, bias).
    pub fn flatten_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Inverse of `flatten_params`; `flat` must have exactly `param_count`
    /// entries.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), PpoError> {
        if flat.len() != self.param_count() {
            return Err(PpoError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite())
        })
    }
}

/// Reusable forward-pass scratch: post-activations per layer, with the
/// network input at index 0.
#[derive(Debug, Default, Clone)]
pub struct Cache {
    pub activations: Vec<Vec<f64>>,
}

impl Cache {
    fn resize_for(&mut self, mlp: &Mlp) {
        self.activations.resize(mlp.layers.len() + 1, Vec::new());
    }
}

/// Gradient accumulator mirroring an `Mlp`'s layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> MlpGrads {
        MlpGrads {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.bias {
            b.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(other.bias.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w.iter_mut() {
                *x *= s;
            }
        }
        for b in &mut self.bias {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn flatten(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(self.bias.iter()) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }
}

/// Diagonal Gaussian policy: an MLP mean head plus state-independent
/// learnable log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mlp: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    /// The mean head is tanh-bounded: environment actions are clamped to
    /// [-1, 1], and an unbounded mean invites self-excited oscillation
    /// through the previous-action feedback in the observation.
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> GaussianPolicy {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(obs_dim);
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        GaussianPolicy {
            mlp: Mlp::new(&dims, Activation::Tanh, Activation::Tanh, 0.01, rng),
            log_std: vec![init_log_std; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Mean from the MLP; std from the clamped log-std vector.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
        if obs.len() != self.mlp.input_dim() {
            return Err(PpoError::Shape(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.mlp.input_dim()
            )));
        }
        let mean = self.mlp.forward(obs);
        Ok((mean, self.std()))
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .map(|ls| ls.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect()
    }

    /// Gaussian entropy: sum_i (ln sigma_i + 0.5 ln(2 pi e)).
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls.clamp(LOG_STD_MIN, LOG_STD_MAX) + 0.5 * (1.0 + 2.0 * HALF_LN_TWO_PI))
            .sum()
    }
}

/// Draw `a ~ Normal(mean, diag(std^2))` and return its log-density.
pub fn sample_and_logprob(
    mean: &[f64],
    std: &[f64],
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    debug_assert_eq!(mean.len(), std.len());
    let action: Vec<f64> = mean
        .iter()
        .zip(std.iter())
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let logp = log_prob(mean, std, &action);
    (action, logp)
}

/// Diagonal Gaussian log-density:
/// sum_i [-(a_i - mu_i)^2 / (2 sigma_i^2) - ln sigma_i - 0.5 ln(2 pi)].
pub fn log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(std.iter())
        .zip(action.iter())
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - HALF_LN_TWO_PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut policy = GaussianPolicy::new(25, &[8], 6, 0.0, &mut rng);
        for layer in &mut policy.mlp.layers {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        let (mean, std) = policy.forward(&[0.3; 25]).unwrap();
        assert_eq!(mean, vec![0.0; 6]);
        assert_eq!(std, vec![1.0; 6]);
    }

    #[test]
    fn identical_inputs_give_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = GaussianPolicy::new(25, &[16, 16], 6, 0.0, &mut rng);
        let obs = vec![0.17; 25];
        let (a, _) = policy.forward(&obs).unwrap();
        let (b, _) = policy.forward(&obs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_layer_matches_hand_matrix_multiply() {
        let layer = Layer {
            weights: vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0],
            bias: vec![0.1, -0.2],
            in_dim: 3,
            out_dim: 2,
            activation: Activation::Linear,
        };
        let mlp = Mlp { layers: vec![layer] };
        let x = [0.5, -1.0, 2.0];
        let y = mlp.forward(&x);
        // Hand multiply: row 0 = 1*0.5 + 2*(-1) + (-1)*2 + 0.1; row 1 = 0.5*0.5 + 0*(-1) + 3*2 - 0.2.
        assert_relative_eq!(y[0], -3.4, epsilon = 1e-12);
        assert_relative_eq!(y[1], 6.05, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = GaussianPolicy::new(25, &[8], 6, 0.0, &mut rng);
        assert!(policy.forward(&[0.0; 24]).is_err());
    }

    #[test]
    fn logp_at_mean_with_unit_std() {
        let mean = vec![0.3; 6];
        let std = vec![1.0; 6];
        let logp = log_prob(&mean, &std, &mean);
        assert_relative_eq!(logp, -6.0 * HALF_LN_TWO_PI, epsilon = 1e-12);
        assert_relative_eq!(logp, -5.513631, epsilon = 1e-6);
    }

    #[test]
    fn logp_at_mean_decreases_with_std() {
        let mean = vec![0.0; 6];
        let mut prev = f64::INFINITY;
        for s in [0.5, 1.0, 2.0, 4.0] {
            let logp = log_prob(&mean, &vec![s; 6], &mean);
            assert!(logp < prev);
            prev = logp;
        }
    }

    #[test]
    fn sample_mean_approaches_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean = vec![0.7, -0.4, 0.0, 1.2, -2.0, 0.05];
        let std = vec![0.5; 6];
        let n = 100_000;
        let mut acc = vec![0.0; 6];
        for _ in 0..n {
            let (a, _) = sample_and_logprob(&mean, &std, &mut rng);
            for (s, v) in acc.iter_mut().zip(a.iter()) {
                *s += v;
            }
        }
        let tol = 3.0 * 0.5 / (n as f64).sqrt();
        for (s, m) in acc.iter().zip(mean.iter()) {
            assert!((s / n as f64 - m).abs() < tol);
        }
    }

    #[test]
    fn entropy_strictly_increases_with_each_log_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut policy = GaussianPolicy::new(4, &[4], 3, 0.0, &mut rng);
        let base = policy.entropy();
        for i in 0..3 {
            let mut bumped = policy.clone();
            bumped.log_std[i] += 0.1;
            assert!(bumped.entropy() > base);
        }
        policy.log_std = vec![0.0; 3];
        // sigma = 1: H = n/2 * ln(2 pi e).
        assert_relative_eq!(
            policy.entropy(),
            1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn flatten_set_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::new(&[5, 7, 3], Activation::Tanh, Activation::Linear, 1.0, &mut rng);
        let mut flat = Vec::new();
        mlp.flatten_params(&mut flat);
        assert_eq!(flat.len(), mlp.param_count());
        let mut other = Mlp::new(&[5, 7, 3], Activation::Tanh, Activation::Linear, 1.0, &mut rng);
        other.set_params(&flat).unwrap();
        assert_eq!(mlp, other);
        assert!(other.set_params(&flat[1..]).is_err());
    }
}
