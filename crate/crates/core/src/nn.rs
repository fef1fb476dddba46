//! Minimal dense networks: forward pass, exact backpropagation, Adam, and
//! versioned JSON checkpoints. Everything runs in double precision; the
//! networks involved are small enough that hand-rolled loops beat any
//! external dependency on setup cost alone.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Layer activation. Softmax is only valid as the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

/// Fully connected network. `weights[l]` is row-major `dims[l+1] x dims[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `post[0]` is the input; `post[l+1]` the activated output of layer l.
    pub post: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub pre: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("forward pass has layers")
    }
}

/// Weight and bias gradients with the same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl Gradients {
    /// Zero gradients shaped like the network's parameters.
    pub fn zeroed_like(net: &Mlp) -> Gradients {
        Gradients {
            dw: net.weights.iter().map(|l| vec![0.0; l.len()]).collect(),
            db: net.biases.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (acc, g) in self.dw.iter_mut().zip(&other.dw) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        for (acc, g) in self.db.iter_mut().zip(&other.db) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in self.dw.iter_mut().chain(self.db.iter_mut()) {
            for v in layer {
                *v *= factor;
            }
        }
    }

    /// True when every entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.dw
            .iter()
            .chain(self.db.iter())
            .all(|layer| layer.iter().all(|v| *v == 0.0))
    }
}

impl Mlp {
    /// He-style seeded initialization: uniform with fan-in scaled limits.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut ChaCha12Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "a network needs at least input and output dims".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(CoreError::Dimension {
                expected: dims.len() - 1,
                got: activations.len(),
                context: "activation tags".into(),
            });
        }
        for (l, act) in activations.iter().enumerate() {
            if *act == Activation::Softmax && l != activations.len() - 1 {
                return Err(CoreError::InvalidArgument(
                    "softmax is only valid as the final layer".into(),
                ));
            }
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let fan_in = dims[l] as f64;
            let limit = (6.0 / fan_in).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            weights.push((0..dims[l + 1] * dims[l]).map(|_| dist.sample(rng)).collect());
            biases.push(vec![0.0; dims[l + 1]]);
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activations: activations.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero weights and biases: every output is uniform under softmax
    /// and zero otherwise. Useful as a neutral reference network.
    pub fn zeroed(dims: &[usize], activations: &[Activation]) -> Result<Mlp> {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut net = Mlp::new(dims, activations, &mut rng)?;
        for layer in &mut net.weights {
            layer.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(CoreError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
                context: "network input".into(),
            });
        }
        let layers = self.dims.len() - 1;
        let mut post = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        post.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let input = &post[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(input) {
                    acc += w * v;
                }
                *zo += acc;
            }
            let a = match self.activations[l] {
                Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Linear => z.clone(),
                Activation::Softmax => softmax(&z),
            };
            pre.push(z);
            post.push(a);
            let _ = n_out;
        }
        Ok(Forward { post, pre })
    }

    /// Backpropagate from a gradient at the final pre-activation. Both losses
    /// used here (squared error on a linear output, cross-entropy on a
    /// softmax output) reduce to `output - target` at that point.
    pub fn backward_from_output_delta(&self, fwd: &Forward, output_delta: &[f64]) -> Gradients {
        let layers = self.dims.len() - 1;
        let mut dw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut db: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut delta = output_delta.to_vec();
        for l in (0..layers).rev() {
            let n_in = self.dims[l];
            let input = &fwd.post[l];
            for (o, &d) in delta.iter().enumerate() {
                db[l][o] = d;
                let row = &mut dw[l][o * n_in..(o + 1) * n_in];
                for (slot, v) in row.iter_mut().zip(input) {
                    *slot = d * v;
                }
            }
            if l == 0 {
                break;
            }
            // Pull the delta through the weights, then the previous layer's
            // rectifier mask.
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            match self.activations[l - 1] {
                Activation::Relu => {
                    for (p, z) in prev.iter_mut().zip(&fwd.pre[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
                Activation::Linear => {}
                Activation::Softmax => unreachable!("softmax is final-layer only"),
            }
            delta = prev;
        }
        Gradients { dw, db }
    }
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Loss and exact gradient of ½·Σ (out − target)² for a linear-output net.
pub fn backward_mse(net: &Mlp, x: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
    if target.len() != net.output_dim() {
        return Err(CoreError::Dimension {
            expected: net.output_dim(),
            got: target.len(),
            context: "regression target".into(),
        });
    }
    let fwd = net.forward(x)?;
    let out = fwd.output();
    let loss = 0.5
        * out
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    let delta: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    Ok((loss, net.backward_from_output_delta(&fwd, &delta)))
}

/// Loss and exact gradient of −Σ target·ln softmax(logits) for a
/// softmax-output net. The output-layer delta is `softmax − target`.
pub fn backward_cross_entropy(net: &Mlp, x: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
    if target.len() != net.output_dim() {
        return Err(CoreError::Dimension {
            expected: net.output_dim(),
            got: target.len(),
            context: "target distribution".into(),
        });
    }
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || target.iter().any(|&t| t < 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "target distribution sums to {sum}, expected 1"
        )));
    }
    if *net.activations.last().unwrap() != Activation::Softmax {
        return Err(CoreError::InvalidArgument(
            "cross-entropy requires a softmax output layer".into(),
        ));
    }
    let fwd = net.forward(x)?;
    let probs = fwd.output();
    let loss = -probs
        .iter()
        .zip(target)
        .map(|(p, t)| t * p.max(1e-300).ln())
        .sum::<f64>();
    let delta: Vec<f64> = probs.iter().zip(target).map(|(p, t)| p - t).collect();
    Ok((loss, net.backward_from_output_delta(&fwd, &delta)))
}

/// Adam optimizer state mirroring one network's shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, rate: f64) -> Self {
        AdamState {
            rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// One bias-corrected Adam update in place.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.dw.len() != net.weights.len() {
            return Err(CoreError::Dimension {
                expected: net.weights.len(),
                got: grads.dw.len(),
                context: "gradient layers".into(),
            });
        }
        self.step += 1;
        let t = self.step as f64;
        let corr1 = 1.0 - self.beta1.powf(t);
        let corr2 = 1.0 - self.beta2.powf(t);
        let update = |param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..param.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let m_hat = m[k] / corr1;
                let v_hat = v[k] / corr2;
                param[k] -= self.rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        };
        for l in 0..net.weights.len() {
            update(&mut net.weights[l], &grads.dw[l], &mut self.m_w[l], &mut self.v_w[l]);
            update(&mut net.biases[l], &grads.db[l], &mut self.m_b[l], &mut self.v_b[l]);
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    payload: T,
}

/// Write any serializable bundle as versioned JSON.
pub fn save_checkpoint<T: Serialize>(payload: &T, path: &Path) -> Result<()> {
    let envelope = Envelope {
        version: CHECKPOINT_VERSION,
        payload,
    };
    let json = serde_json::to_string(&envelope)?;
    fs::write(path, json).map_err(|e| CoreError::io(path, e))
}

/// Read a bundle written by [`save_checkpoint`], rejecting other versions.
pub fn load_checkpoint<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let envelope: Envelope<T> = serde_json::from_str(&text)?;
    if envelope.version != CHECKPOINT_VERSION {
        return Err(CoreError::CheckpointVersion {
            found: envelope.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(envelope.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn zeroed(dims: &[usize], acts: &[Activation]) -> Mlp {
        let mut net = Mlp::new(dims, acts, &mut rng(0)).unwrap();
        for w in &mut net.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        net
    }

    #[test]
    fn zero_net_outputs_zero_and_uniform() {
        let critic = zeroed(&[5, 32, 1], &[Activation::Relu, Activation::Linear]);
        let out = critic.forward(&[1.0, -2.0, 0.5, 0.0, 3.0]).unwrap();
        assert_eq!(out.output(), &[0.0]);

        let actor = zeroed(&[5, 14], &[Activation::Softmax]);
        let out = actor.forward(&[1.0; 5]).unwrap();
        for p in out.output() {
            assert!((p - 1.0 / 14.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rectifier_clamps_negatives() {
        let mut net = zeroed(&[1, 1], &[Activation::Relu]);
        net.weights[0][0] = 1.0;
        let out = net.forward(&[-3.0]).unwrap();
        assert_eq!(out.output(), &[0.0]);
        let out = net.forward(&[3.0]).unwrap();
        assert_eq!(out.output(), &[3.0]);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let probs = softmax(&[500.0, -500.0, 0.0]);
        assert!(probs.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs[0] > 0.999);
        let wide: Vec<f64> = (0..14).map(|k| (k as f64) * 70.0 - 500.0).collect();
        let probs = softmax(&wide);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let net = zeroed(&[5, 1], &[Activation::Linear]);
        assert!(net.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn softmax_must_be_final_layer() {
        let err = Mlp::new(
            &[3, 4, 2],
            &[Activation::Softmax, Activation::Linear],
            &mut rng(1),
        );
        assert!(err.is_err());
    }

    #[test]
    fn mse_gradient_closed_forms() {
        // Output equal to the target: zero loss and zero gradient.
        let mut net = zeroed(&[2, 1], &[Activation::Linear]);
        net.weights[0] = vec![2.0, -1.0];
        let x = [1.0, 0.5];
        let out = net.forward(&x).unwrap().output()[0];
        let (loss, grads) = backward_mse(&net, &x, &[out]).unwrap();
        assert!(loss.abs() < 1e-24);
        assert!(grads.dw[0].iter().all(|g| g.abs() < 1e-12));

        // Single linear layer: d loss / d w = (out - target) * x.
        let (_, grads) = backward_mse(&net, &x, &[0.0]).unwrap();
        for (k, &xv) in x.iter().enumerate() {
            assert!((grads.dw[0][k] - out * xv).abs() < 1e-12);
        }
        assert!((grads.db[0][0] - out).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_closed_forms() {
        let net = zeroed(&[3, 14], &[Activation::Softmax]);
        let x = [0.2, -0.4, 1.0];
        // Target equal to the current softmax: zero output-layer gradient.
        let probs = net.forward(&x).unwrap().output().to_vec();
        let (_, grads) = backward_cross_entropy(&net, &x, &probs).unwrap();
        assert!(grads.db[0].iter().all(|g| g.abs() < 1e-12));

        // One-hot target against the uniform output: grad = uniform - onehot.
        let mut onehot = vec![0.0; 14];
        onehot[3] = 1.0;
        let (_, grads) = backward_cross_entropy(&net, &x, &onehot).unwrap();
        for (k, g) in grads.db[0].iter().enumerate() {
            let expected = 1.0 / 14.0 - onehot[k];
            assert!((g - expected).abs() < 1e-12);
        }

        // Non-normalized targets are rejected.
        assert!(backward_cross_entropy(&net, &x, &vec![0.5; 14]).is_err());
    }

    /// Central finite differences over every parameter of the net.
    fn finite_difference_check<F>(net: &Mlp, loss_and_grads: F)
    where
        F: Fn(&Mlp) -> (f64, Option<Gradients>),
    {
        let (_, grads) = loss_and_grads(net);
        let grads = grads.expect("analytic gradients");
        let h = 1e-5;
        let mut checked = 0usize;
        for l in 0..net.weights.len() {
            for k in 0..net.weights[l].len() {
                let mut plus = net.clone();
                plus.weights[l][k] += h;
                let mut minus = net.clone();
                minus.weights[l][k] -= h;
                let numeric = (loss_and_grads(&plus).0 - loss_and_grads(&minus).0) / (2.0 * h);
                let analytic = grads.dw[l][k];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "layer {l} weight {k}: analytic {analytic} vs numeric {numeric}"
                );
                checked += 1;
            }
            for k in 0..net.biases[l].len() {
                let mut plus = net.clone();
                plus.biases[l][k] += h;
                let mut minus = net.clone();
                minus.biases[l][k] -= h;
                let numeric = (loss_and_grads(&plus).0 - loss_and_grads(&minus).0) / (2.0 * h);
                let analytic = grads.db[l][k];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "layer {l} bias {k}: analytic {analytic} vs numeric {numeric}"
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10u64 {
            let mut r = rng(seed);
            let x: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();

            let critic = Mlp::new(
                &[5, 8, 1],
                &[Activation::Relu, Activation::Linear],
                &mut r,
            )
            .unwrap();
            let target = [r.gen_range(-1.0..1.0)];
            finite_difference_check(&critic, |net| {
                let (loss, grads) = backward_mse(net, &x, &target).unwrap();
                (loss, Some(grads))
            });

            let actor = Mlp::new(
                &[5, 8, 14],
                &[Activation::Relu, Activation::Softmax],
                &mut r,
            )
            .unwrap();
            let raw: Vec<f64> = (0..14).map(|_| r.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let target: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            finite_difference_check(&actor, |net| {
                let (loss, grads) = backward_cross_entropy(net, &x, &target).unwrap();
                (loss, Some(grads))
            });
        }
    }

    #[test]
    fn adam_examples() {
        let mut net = zeroed(&[1, 1], &[Activation::Linear]);
        let mut adam = AdamState::new(&net, 1e-3);
        // Zero gradient leaves the weights unchanged.
        let zero = Gradients {
            dw: vec![vec![0.0]],
            db: vec![vec![0.0]],
        };
        adam.apply(&mut net, &zero).unwrap();
        assert_eq!(net.weights[0][0], 0.0);

        // First step with a constant gradient moves by about the rate.
        let mut net = zeroed(&[1, 1], &[Activation::Linear]);
        let mut adam = AdamState::new(&net, 1e-3);
        let g = Gradients {
            dw: vec![vec![0.7]],
            db: vec![vec![0.0]],
        };
        adam.apply(&mut net, &g).unwrap();
        // Bias-corrected first step: rate * g / (|g| + eps) ~ rate.
        assert!((net.weights[0][0] + 1e-3).abs() < 1e-8);

        // Determinism: identical runs give identical weights.
        let mut a = zeroed(&[2, 2], &[Activation::Linear]);
        let mut b = a.clone();
        let mut sa = AdamState::new(&a, 1e-3);
        let mut sb = AdamState::new(&b, 1e-3);
        let g = Gradients {
            dw: vec![vec![0.1, -0.2, 0.3, 0.4]],
            db: vec![vec![0.5, -0.6]],
        };
        for _ in 0..10 {
            sa.apply(&mut a, &g).unwrap();
            sb.apply(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut r = rng(3);
        let net = Mlp::new(&[5, 8, 14], &[Activation::Relu, Activation::Softmax], &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_checkpoint(&net, &path).unwrap();
        let back: Mlp = load_checkpoint(&path).unwrap();
        assert_eq!(net, back);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(net.forward(&x).unwrap().output(), back.forward(&x).unwrap().output());
    }

    #[test]
    fn checkpoint_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");

        // Wrong version tag.
        let net = zeroed(&[2, 1], &[Activation::Linear]);
        let json = serde_json::to_string(&serde_json::json!({
            "version": CHECKPOINT_VERSION + 1,
            "payload": net,
        }))
        .unwrap();
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            load_checkpoint::<Mlp>(&path),
            Err(CoreError::CheckpointVersion { .. })
        ));

        // Truncated file.
        std::fs::write(&path, "{\"version\":1,\"payload\":{\"dims\":[2,").unwrap();
        assert!(matches!(
            load_checkpoint::<Mlp>(&path),
            Err(CoreError::Json(_))
        ));
    }
}
