//! Fully connected feed-forward network trained with Adam on MSE.
//!
//! Hidden layers use ReLU followed by inverted dropout; the output head is
//! linear. Training shuffles samples into mini-batches every epoch, tracks the
//! validation MSE per epoch, halves the learning rate after `patience / 2`
//! non-improving epochs and stops after `patience`; the best-epoch weights are
//! returned.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_LEARNING_RATE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden_sizes: Vec<usize>,
    /// Multiplier applied to `hidden_sizes` (desk-scale runs use < 1).
    pub hidden_scale: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub lr_halving_on_plateau: bool,
    pub max_epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![4096, 2056, 1024],
            hidden_scale: 1.0,
            dropout: 0.10,
            batch_size: 64,
            learning_rate: 5e-5,
            patience: 20,
            lr_halving_on_plateau: true,
            max_epochs: 500,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, patience and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.hidden_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate and hidden_scale must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_hidden(&self) -> Vec<usize> {
        self.hidden_sizes
            .iter()
            .map(|&h| ((h as f64 * self.hidden_scale).round() as usize).max(1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[inputs × outputs]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
}

struct Cache {
    /// Input to each layer (post-activation, post-dropout of the previous).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Dropout multipliers per hidden layer (0 or 1/(1-p)).
    masks: Vec<Option<Array2<f64>>>,
}

impl MlpModel {
    /// Uniform `±1/sqrt(fan_in)` initialisation for weights and biases.
    pub fn init(input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h
    }

    fn forward(&self, x: ArrayView2<'_, f64>, dropout: f64, rng: Option<&mut ChaCha8Rng>) -> (Array2<f64>, Cache) {
        let last = self.layers.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            masks: Vec::with_capacity(last),
        };
        let mut rng = rng;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            cache.inputs.push(h);
            if i == last {
                return (z, cache);
            }
            let mut a = z.mapv(|v| v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(r) if dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - dropout);
                    let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                        if r.random::<f64>() < dropout {
                            0.0
                        } else {
                            keep
                        }
                    });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            cache.pre.push(z);
            cache.masks.push(mask);
            h = a;
        }
        unreachable!("network has an output layer")
    }

    /// Gradients of the batch-mean squared error, returned per layer.
    fn backward(&self, out: &Array2<f64>, y: ArrayView2<'_, f64>, cache: &Cache) -> Vec<(Array2<f64>, Array1<f64>)> {
        let scale = 2.0 / (out.len() as f64);
        let mut delta = (out - &y) * scale;
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = cache.inputs[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            if i == 0 {
                break;
            }
            let mut d = delta.dot(&self.layers[i].weights.t());
            if let Some(m) = &cache.masks[i - 1] {
                d *= m;
            }
            ndarray::Zip::from(&mut d)
                .and(&cache.pre[i - 1])
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            delta = d;
        }
        grads.reverse();
        grads
    }

    /// Deterministic (no dropout) loss and flattened gradient, for checks.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        let (out, cache) = self.forward(x, 0.0, None);
        let loss = (&out - &y).mapv(|v| v * v).mean().unwrap_or(0.0);
        let grads = self.backward(&out, y, &cache);
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss, flat)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            flat.extend(l.weights.iter());
            flat.extend(l.bias.iter());
        }
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = *it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = *it.next().unwrap());
        }
    }
}

struct Adam {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros: Vec<_> = model
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.raw_dim())))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in model
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTraining {
    pub model: MlpModel,
    pub val_curve: Vec<f64>,
    pub best_epoch: usize,
    pub epochs: usize,
}

pub fn fit_mlp(
    train_x: ArrayView2<'_, f64>,
    train_y: ArrayView2<'_, f64>,
    val_x: ArrayView2<'_, f64>,
    val_y: ArrayView2<'_, f64>,
    params: &MlpParams,
    seed: u64,
) -> Result<MlpTraining> {
    params.validate()?;
    let n = train_x.nrows();
    if n == 0 || val_x.nrows() == 0 {
        return Err(Error::InsufficientData("MLP needs training and validation samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(train_x.ncols(), &params.effective_hidden(), train_y.ncols(), &mut rng);
    let mut adam = Adam::new(&model);
    let mut lr = params.learning_rate;
    let halving_every = (params.patience / 2).max(1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut bad_epochs = 0;
    let mut val_curve = Vec::new();

    for epoch in 0..params.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx = train_x.select(Axis(0), batch);
            let by = train_y.select(Axis(0), batch);
            let (out, cache) = model.forward(bx.view(), params.dropout, Some(&mut rng));
            let grads = model.backward(&out, by.view(), &cache);
            adam.step(&mut model, &grads, lr);
        }
        let val_pred = model.predict(val_x);
        let val_loss = (&val_pred - &val_y).mapv(|v| v * v).mean().unwrap_or(f64::INFINITY);
        if !val_loss.is_finite() {
            return Err(Error::InvalidData(format!("validation loss diverged at epoch {epoch}")));
        }
        val_curve.push(val_loss);
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= params.patience {
                break;
            }
            if params.lr_halving_on_plateau && bad_epochs % halving_every == 0 {
                lr = (lr / 2.0).max(MIN_LEARNING_RATE);
            }
        }
    }
    let epochs = val_curve.len();
    Ok(MlpTraining {
        model: best,
        val_curve,
        best_epoch,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 3), |(i, j)| (x[[i, j % d]] * (j + 1) as f64).sin());
        (x, y)
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let (x, y) = toy(7, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = MlpModel::init(5, &[8, 6], 3, &mut rng);
        let (_, analytic) = model.loss_and_gradient(x.view(), y.view());
        let base = model.flat_params();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += eps;
            model.set_flat_params(&p);
            let (lp, _) = model.loss_and_gradient(x.view(), y.view());
            p[k] -= 2.0 * eps;
            model.set_flat_params(&p);
            let (lm, _) = model.loss_and_gradient(x.view(), y.view());
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = numeric.abs().max(analytic[k].abs()).max(1e-8);
            worst = worst.max((numeric - analytic[k]).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn constant_target_learned_by_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((500, 4), |_| rng.random_range(0.0..1.0));
        let y = Array2::from_elem((500, 6), 0.5);
        let params = MlpParams {
            hidden_sizes: vec![8],
            learning_rate: 1e-2,
            max_epochs: 200,
            ..MlpParams::default()
        };
        let fit = fit_mlp(
            x.slice(ndarray::s![..400, ..]),
            y.slice(ndarray::s![..400, ..]),
            x.slice(ndarray::s![400.., ..]),
            y.slice(ndarray::s![400.., ..]),
            &params,
            9,
        )
        .unwrap();
        let best = fit.val_curve.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(best < 1e-4, "{best}");
        assert_eq!(fit.val_curve[fit.best_epoch], best);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (x, y) = toy(120, 3, 4);
        let params = MlpParams {
            hidden_sizes: vec![4],
            learning_rate: 1e-2,
            patience: 3,
            max_epochs: 400,
            ..MlpParams::default()
        };
        let fit = fit_mlp(x.view(), y.view(), x.view(), y.view(), &params, 5).unwrap();
        if fit.epochs < params.max_epochs {
            // stopped early: exactly `patience` epochs after the best one
            assert_eq!(fit.epochs, fit.best_epoch + 1 + params.patience);
        }
        let min = fit.val_curve.iter().copied().fold(f64::INFINITY, f64::min);
        let pred = fit.model.predict(x.view());
        let loss = (&pred - &y).mapv(|v| v * v).mean().unwrap();
        assert_eq!(loss, min);
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let (x, y) = toy(80, 3, 6);
        let params = MlpParams {
            hidden_sizes: vec![6, 4],
            max_epochs: 5,
            ..MlpParams::default()
        };
        let a = fit_mlp(x.view(), y.view(), x.view(), y.view(), &params, 11).unwrap();
        let b = fit_mlp(x.view(), y.view(), x.view(), y.view(), &params, 11).unwrap();
        assert_eq!(a, b);
        let c = fit_mlp(x.view(), y.view(), x.view(), y.view(), &params, 12).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn hidden_scale_shrinks_layers() {
        let p = MlpParams {
            hidden_scale: 1.0 / 128.0,
            ..MlpParams::default()
        };
        assert_eq!(p.effective_hidden(), vec![32, 16, 8]);
    }

    #[test]
    fn invalid_dropout_rejected() {
        let p = MlpParams {
            dropout: 1.0,
            ..MlpParams::default()
        };
        assert!(p.validate().is_err());
    }
}
