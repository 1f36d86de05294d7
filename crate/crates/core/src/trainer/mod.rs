//! Training to prescribed reconstruction-loss levels.
//!
//! Full backpropagation with Adam. The loss on the whole training set is
//! evaluated once per epoch, before that epoch's updates, and a snapshot is
//! taken the first time it falls to or below each threshold in
//! [`TrainConfig::loss_checkpoints`].

mod backprop;

pub use backprop::{backprop_gradients, Trainable};

use crate::autoencoder::{Autoencoder, TiedAutoencoder};
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix, Rng, Vector};

/// Number of samples per optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: BatchSize,
    pub seed: u64,
    /// Strictly decreasing, positive. Training stops once the last one is
    /// reached.
    pub loss_checkpoints: Vec<f64>,
    pub max_epochs: usize,
    /// Epochs without a new best loss before the learning rate is halved.
    pub decay_patience: usize,
    pub decay_factor: f64,
    pub min_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: BatchSize::Full,
            seed: 42,
            loss_checkpoints: vec![1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            max_epochs: 50_000,
            decay_patience: 200,
            decay_factor: 0.5,
            min_learning_rate: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0,1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("adam epsilon must be > 0".into());
        }
        if self.loss_checkpoints.is_empty() {
            return bad("at least one loss checkpoint is required".into());
        }
        if self.loss_checkpoints.iter().any(|&t| !(t > 0.0)) {
            return bad("loss checkpoints must be positive".into());
        }
        if self.loss_checkpoints.windows(2).any(|w| w[1] >= w[0]) {
            return bad("loss checkpoints must be strictly decreasing".into());
        }
        if let BatchSize::Fixed(0) = self.batch_size {
            return bad("batch size must be >= 1".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay factor must be in (0,1]".into());
        }
        Ok(())
    }

    pub fn target_loss(&self) -> f64 {
        *self.loss_checkpoints.last().expect("validated nonempty")
    }
}

/// Model snapshot taken when the training loss first reached `threshold`.
#[derive(Clone, Debug)]
pub struct Checkpoint<M> {
    pub threshold: f64,
    pub model: M,
    /// Full-training-set MSE of `model`.
    pub loss: f64,
    pub epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub checkpoints: Vec<Checkpoint<M>>,
    /// Whether the final (smallest) checkpoint threshold was reached.
    /// `false` means `max_epochs` ran out first.
    pub reached_target: bool,
    pub final_loss: f64,
    pub epochs: usize,
    pub log: Vec<LogEntry>,
}

impl<M> TrainOutcome<M> {
    /// The snapshot taken for `threshold`, if it was reached.
    pub fn checkpoint(&self, threshold: f64) -> Option<&Checkpoint<M>> {
        self.checkpoints.iter().find(|c| c.threshold == threshold)
    }
}

/// Stacks samples into the rows of an `n × d` matrix.
pub fn stack_rows(samples: &[Vector]) -> Result<Matrix> {
    let first = samples.first().ok_or(Error::Empty("dataset"))?;
    let d = first.len();
    let mut data = Vec::with_capacity(samples.len() * d);
    for s in samples {
        if s.len() != d {
            return Err(Error::dims("sample length", d, s.len()));
        }
        data.extend_from_slice(s);
    }
    Matrix::from_vec(samples.len(), d, data)
}

/// `(1/(n·d))·Σ_i ‖f(x_i) − x_i‖²`, evaluated sample by sample.
pub fn mse_loss<A: Autoencoder + ?Sized>(model: &A, dataset: &[Vector]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let d = model.dim();
    let mut sum = 0.0;
    for x in dataset {
        if x.len() != d {
            return Err(Error::dims("sample length", d, x.len()));
        }
        let fx = model.forward(x)?;
        sum += fx
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(sum / (dataset.len() * d) as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Trains `model` on `dataset` until the last loss checkpoint is reached or
/// `max_epochs` runs out. Deterministic for a fixed config.
pub fn train<M: Trainable>(
    model: M,
    dataset: &[Vector],
    config: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    let data = stack_rows(dataset)?;
    let n = data.rows();
    let batch = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Fixed(b) => b.min(n),
    };
    let full_batch = batch == n;

    let mut model = model;
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut lr = config.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut next_threshold = 0usize;
    let mut checkpoints = Vec::new();
    let mut log = Vec::new();
    let mut last_loss = f64::INFINITY;

    for epoch in 0..config.max_epochs {
        let (loss, full_grad) = if full_batch {
            let (l, g) = model.loss_and_grad(&data)?;
            (l, Some(g))
        } else {
            (batch_loss(&model, &data)?, None)
        };
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        last_loss = loss;
        log.push(LogEntry {
            epoch,
            loss,
            learning_rate: lr,
        });

        while next_threshold < config.loss_checkpoints.len()
            && loss <= config.loss_checkpoints[next_threshold]
        {
            checkpoints.push(Checkpoint {
                threshold: config.loss_checkpoints[next_threshold],
                model: model.clone(),
                loss,
                epoch,
            });
            next_threshold += 1;
        }
        if next_threshold == config.loss_checkpoints.len() {
            return Ok(TrainOutcome {
                model,
                checkpoints,
                reached_target: true,
                final_loss: loss,
                epochs: epoch + 1,
                log,
            });
        }

        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.decay_patience && lr > config.min_learning_rate {
                lr = (lr * config.decay_factor).max(config.min_learning_rate);
                stale = 0;
            }
        }

        match full_grad {
            Some(g) => adam.step(&mut params, &g, lr, config),
            None => {
                rng.shuffle(&mut order);
                for chunk in order.chunks(batch) {
                    let rows: Vec<f64> = chunk
                        .iter()
                        .flat_map(|&i| data.row(i).iter().copied())
                        .collect();
                    let mb = Matrix::from_vec(chunk.len(), data.cols(), rows)?;
                    let (_, g) = model.loss_and_grad(&mb)?;
                    adam.step(&mut params, &g, lr, config);
                    model.set_params(&params)?;
                }
            }
        }
        model.set_params(&params)?;
    }

    Ok(TrainOutcome {
        model,
        checkpoints,
        reached_target: false,
        final_loss: last_loss,
        epochs: config.max_epochs,
        log,
    })
}

fn batch_loss<M: Trainable>(model: &M, data: &Matrix) -> Result<f64> {
    let out = model.forward_rows(data)?;
    let sum: f64 = out
        .as_slice()
        .iter()
        .zip(data.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / data.as_slice().len() as f64)
}

/// Largest singular value of `w`, from the Jacobi eigendecomposition of the
/// smaller Gram matrix.
pub fn spectral_norm(w: &Matrix) -> Result<f64> {
    let gram = if w.rows() <= w.cols() {
        w.transpose().gram()
    } else {
        w.gram()
    };
    let top = sym_eig(&gram, 1e-10)?.first().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

/// Rescales `W ← W·min(1, target/σ₁(W))`.
pub fn project_spectral_norm(ae: &TiedAutoencoder, target: f64) -> Result<TiedAutoencoder> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spectral target must be > 0, got {target}"
        )));
    }
    let sigma = spectral_norm(ae.weight())?;
    let mut out = ae.clone();
    if sigma > target {
        out.weight_mut().scale(target / sigma);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{Activation, AutoencoderModel, FcArchitecture};
    use crate::numerics::power_iteration_sigma_max;

    fn unit_images(n: usize, d: usize, rng: &mut Rng) -> Vec<Vector> {
        (0..n)
            .map(|_| {
                let v: Vector = (0..d).map(|_| rng.normal()).collect();
                let norm = v.norm();
                v.iter().map(|x| x / norm).collect()
            })
            .collect()
    }

    #[test]
    fn identity_model_has_zero_loss() {
        let ae = TiedAutoencoder::new(Matrix::identity(5), Activation::Identity).unwrap();
        let data = unit_images(4, 5, &mut Rng::new(1));
        assert_eq!(mse_loss(&ae, &data).unwrap(), 0.0);
    }

    #[test]
    fn zero_model_loss_is_mean_energy() {
        let d = 6;
        let ae = TiedAutoencoder::new(Matrix::zeros(3, d), Activation::Identity).unwrap();
        let data = unit_images(5, d, &mut Rng::new(2));
        let loss = mse_loss(&ae, &data).unwrap();
        assert!((loss - 1.0 / d as f64).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ae = TiedAutoencoder::new(Matrix::identity(2), Activation::Identity).unwrap();
        assert!(matches!(mse_loss(&ae, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn loss_matches_direct_recomputation() {
        let mut rng = Rng::new(3);
        let arch = FcArchitecture::mirrored(8, 4, 4, Activation::LeakyRelu { slope: 0.1 }).unwrap();
        let model = AutoencoderModel::new_fc(&arch, &mut rng).unwrap();
        let data: Vec<Vector> = (0..5)
            .map(|_| (0..8).map(|_| rng.uniform()).collect())
            .collect();
        let outputs: Vec<Vector> = data.iter().map(|x| model.forward(x).unwrap()).collect();
        let mut direct = 0.0;
        for (o, x) in outputs.iter().zip(&data) {
            for i in 0..8 {
                direct += (o[i] - x[i]).powi(2);
            }
        }
        direct /= 40.0;
        assert!((mse_loss(&model, &data).unwrap() - direct).abs() <= 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let ae = TiedAutoencoder::new(Matrix::identity(4), Activation::Identity).unwrap();
        let data = stack_rows(&unit_images(3, 4, &mut Rng::new(4))).unwrap();
        let g = backprop_gradients(&ae, &data).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.loss_checkpoints = vec![1e-4, 1e-4];
        assert!(c.validate().is_err());
        c.loss_checkpoints = vec![1e-4, 1e-6];
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_image_tied_model_reaches_perfect_fit() {
        let mut rng = Rng::new(42);
        let x: Vector = (0..16).map(|_| rng.uniform()).collect();
        let ae =
            TiedAutoencoder::random(16, 2, Activation::Softplus { beta: 1.0 }, &mut rng).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            max_epochs: 20_000,
            loss_checkpoints: vec![1e-4, 1e-6, 1e-8],
            ..TrainConfig::default()
        };
        let out = train(ae, std::slice::from_ref(&x), &cfg).unwrap();
        assert!(out.reached_target, "final loss {}", out.final_loss);
        assert_eq!(out.checkpoints.len(), 3);
        assert!(out.checkpoints.windows(2).all(|w| w[1].loss < w[0].loss));
        for c in &out.checkpoints {
            assert!(c.loss <= c.threshold);
            let re = mse_loss(&c.model, std::slice::from_ref(&x)).unwrap();
            assert!((re - c.loss).abs() <= 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = Rng::new(7);
        let data: Vec<Vector> = (0..3)
            .map(|_| (0..8).map(|_| rng.uniform()).collect())
            .collect();
        let arch = FcArchitecture::mirrored(8, 6, 4, Activation::Prelu { slope: 0.1 }).unwrap();
        let cfg = TrainConfig {
            max_epochs: 300,
            batch_size: BatchSize::Fixed(2),
            ..TrainConfig::default()
        };
        let run = || {
            let model = AutoencoderModel::new_fc(&arch, &mut Rng::new(42)).unwrap();
            train(model, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        let bits =
            |m: &AutoencoderModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn spectral_projection_cases() {
        let half =
            TiedAutoencoder::new(Matrix::identity(3).scaled(0.5), Activation::Identity).unwrap();
        assert_eq!(project_spectral_norm(&half, 1.0).unwrap(), half);

        let double =
            TiedAutoencoder::new(Matrix::identity(3).scaled(2.0), Activation::Identity).unwrap();
        let p = project_spectral_norm(&double, 1.0).unwrap();
        assert!(p.weight().max_abs_diff(&Matrix::identity(3)) < 1e-14);

        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let w = Matrix::from_fn(7, 5, |_, _| rng.normal());
            let ae = TiedAutoencoder::new(w, Activation::Softplus { beta: 1.0 }).unwrap();
            let p = project_spectral_norm(&ae, 1.0).unwrap();
            assert!(power_iteration_sigma_max(p.weight(), 500, 1) <= 1.0 + 1e-6);
        }
        assert!(project_spectral_norm(&half, 0.0).is_err());
    }
}
