//! Dense autoencoder that compresses a scalar time feature into a small
//! latent vector.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::linalg::{axpy, matvec_add, matvec_t_add, outer_add};
use super::train::EarlyStopping;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// Fully connected layer, `w` is `[out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn xavier(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Self {
            input,
            output,
            w: (0..input * output).map(|_| rng.random_range(-bound..bound)).collect(),
            b: vec![0.0; output],
            activation,
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        matvec_add(&self.w, x, &mut z);
        if self.activation == Activation::Tanh {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Training stops once the reconstruction MSE falls below this.
    pub tolerance: f64,
    /// Values beyond this count are thinned to evenly spaced order
    /// statistics before training.
    pub max_samples: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            hidden: 8,
            lr: 1e-2,
            max_epochs: 500,
            patience: 20,
            batch_size: 64,
            seed: 0,
            tolerance: 1e-4,
            max_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAutoencoder {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    /// Raw values are divided by this before entering the encoder.
    input_scale: f64,
    trained: bool,
    /// Final reconstruction MSE on the normalized training values.
    pub reconstruction_mse: f64,
}

impl Parameters for TimeAutoencoder {
    fn tensors(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|d| [d.w.as_slice(), d.b.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .flat_map(|d| [d.w.as_mut_slice(), d.b.as_mut_slice()])
            .collect()
    }
}

impl TimeAutoencoder {
    /// `1 → hidden (tanh) → latent → hidden (tanh) → 1`, untrained.
    pub fn new(latent_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            encoder: vec![
                Dense::xavier(1, hidden, Activation::Tanh, &mut rng),
                Dense::xavier(hidden, latent_dim, Activation::Identity, &mut rng),
            ],
            decoder: vec![
                Dense::xavier(latent_dim, hidden, Activation::Tanh, &mut rng),
                Dense::xavier(hidden, 1, Activation::Identity, &mut rng),
            ],
            input_scale: 1.0,
            trained: false,
            reconstruction_mse: f64::NAN,
        }
    }

    /// A linear pass-through (latent = input) marked as trained.
    pub fn identity() -> Self {
        let unit = || Dense {
            input: 1,
            output: 1,
            w: vec![1.0],
            b: vec![0.0],
            activation: Activation::Identity,
        };
        Self {
            encoder: vec![unit()],
            decoder: vec![unit()],
            input_scale: 1.0,
            trained: true,
            reconstruction_mse: 0.0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().map_or(0, |d| d.output)
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Latent code of an already normalized input.
    pub fn encode_normalized(&self, x: f64) -> Vec<f64> {
        self.encoder.iter().fold(vec![x], |a, layer| layer.forward(&a))
    }

    pub fn reconstruct_normalized(&self, x: f64) -> f64 {
        let z = self.encode_normalized(x);
        self.decoder.iter().fold(z, |a, layer| layer.forward(&a))[0]
    }

    /// Latent code of a raw value in days.
    pub fn encode_value(&self, value_days: f64) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::InvalidArgument("time autoencoder has not been trained".into()));
        }
        Ok(self.encode_normalized(value_days / self.input_scale))
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Squared reconstruction error of one normalized value, accumulating
    /// the gradient of `weight · error` into `grads`.
    fn backprop(&self, x: f64, weight: f64, grads: &mut TimeAutoencoder) -> f64 {
        let mut acts: Vec<Vec<f64>> = vec![vec![x]];
        for layer in self.layers() {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        let out = acts.last().unwrap()[0];
        let err = out - x;
        let mut delta = vec![2.0 * err * weight];
        let layers: Vec<&Dense> = self.layers().collect();
        let mut grad_layers: Vec<&mut Dense> = grads.encoder.iter_mut().chain(grads.decoder.iter_mut()).collect();
        for idx in (0..layers.len()).rev() {
            let layer = layers[idx];
            let out_act = &acts[idx + 1];
            if layer.activation == Activation::Tanh {
                for (d, a) in delta.iter_mut().zip(out_act) {
                    *d *= 1.0 - a * a;
                }
            }
            let g = &mut grad_layers[idx];
            outer_add(&delta, &acts[idx], &mut g.w);
            axpy(1.0, &delta, &mut g.b);
            let mut prev = vec![0.0; layer.input];
            matvec_t_add(&layer.w, &delta, &mut prev);
            delta = prev;
        }
        err * err
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn mse(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let e = self.reconstruct_normalized(x) - x;
                e * e
            })
            .sum::<f64>()
            / xs.len() as f64
    }
}

/// Trains the autoencoder on max-normalized values with Adam on mean
/// squared reconstruction error.
pub fn train_time_autoencoder(values: &[f64], cfg: &AutoencoderConfig) -> Result<TimeAutoencoder> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.latent_dim == 0 || cfg.hidden == 0 || cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument("autoencoder sizes must be positive".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max.is_nan() || min.is_nan() || max <= min || max <= 0.0 {
        return Err(Error::DegenerateScaler("autoencoder input is constant".into()));
    }

    let mut xs: Vec<f64> = values.iter().map(|v| v / max).collect();
    if xs.len() > cfg.max_samples.max(2) {
        xs.sort_by(f64::total_cmp);
        let n = cfg.max_samples.max(2);
        let last = xs.len() - 1;
        xs = (0..n).map(|k| xs[k * last / (n - 1)]).collect();
    }

    let mut ae = TimeAutoencoder::new(cfg.latent_dim, cfg.hidden, cfg.seed);
    ae.input_scale = max;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(&ae);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best = ae.clone();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = ae.zeros_like();
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                ae.backprop(xs[i], w, &mut grads);
            }
            adam.step(&mut ae, &grads, cfg.lr);
        }
        let mse = ae.mse(&xs);
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss { sample: 0 });
        }
        let (improved, stop) = stopper.observe(epoch, mse);
        if improved {
            best.clone_from(&ae);
        }
        if stop || mse < cfg.tolerance {
            break;
        }
    }
    best.reconstruction_mse = stopper.best();
    best.trained = true;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_values_through() {
        let ae = TimeAutoencoder::identity();
        assert_eq!(ae.encode_value(3.25).unwrap(), vec![3.25]);
    }

    #[test]
    fn untrained_is_rejected() {
        let ae = TimeAutoencoder::new(2, 8, 0);
        assert!(ae.encode_value(1.0).is_err());
        assert_eq!(ae.encode_normalized(0.5).len(), 2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ae = TimeAutoencoder::new(2, 3, 9);
        let x = 0.37;
        let mut grads = ae.zeros_like();
        ae.backprop(x, 1.0, &mut grads);
        let analytic: Vec<f64> = grads.tensors().concat();
        let base: Vec<f64> = ae.tensors().concat();
        let step = 1e-6;
        for k in 0..base.len() {
            let eval = |delta: f64| {
                let mut m = ae.clone();
                let mut flat = base.clone();
                flat[k] += delta;
                let mut off = 0;
                for t in m.tensors_mut() {
                    let n = t.len();
                    t.copy_from_slice(&flat[off..off + n]);
                    off += n;
                }
                let e = m.reconstruct_normalized(x) - x;
                e * e
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            assert!((numeric - analytic[k]).abs() < 1e-7, "param {k}: {numeric} vs {}", analytic[k]);
        }
    }

    #[test]
    fn learns_three_points() {
        let cfg = AutoencoderConfig {
            max_epochs: 3000,
            patience: 200,
            batch_size: 3,
            seed: 4,
            ..Default::default()
        };
        let ae = train_time_autoencoder(&[0.0, 0.5, 1.0], &cfg).unwrap();
        assert!(ae.reconstruction_mse < 1e-2, "mse {}", ae.reconstruction_mse);
        assert_eq!(ae.latent_dim(), 2);
        assert_ne!(ae.encode_value(0.0).unwrap(), ae.encode_value(1.0).unwrap());

        let again = train_time_autoencoder(&[0.0, 0.5, 1.0], &cfg).unwrap();
        assert_eq!(again, ae);
    }

    #[test]
    fn constant_input_is_rejected() {
        assert!(train_time_autoencoder(&[2.0, 2.0], &AutoencoderConfig::default()).is_err());
        assert!(train_time_autoencoder(&[], &AutoencoderConfig::default()).is_err());
    }
}
