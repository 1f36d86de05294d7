//! Autoencoder function types `f = f_dec ∘ f_enc`.
//!
//! Two concrete families live here: a layered fully connected network
//! ([`AutoencoderModel`]) and the tied two-layer map `f(x) = Wᵀρ(Wx)`
//! ([`TiedAutoencoder`]), whose Jacobian has the closed form
//! `Wᵀ·diag(ρ'(Wx))·W`. Forward evaluation never clips its output.

mod activation;

pub use activation::Activation;

use crate::error::{Error, Result};
use crate::numerics::{gemm, matvec, Matrix, Rng, Transpose, Vector};

/// Anything that maps `ℝᵈ → ℝᵈ` and can stand in as the prior step of the
/// recovery solvers.
pub trait Autoencoder: Sync {
    fn dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<Vector>;
}

/// Wraps a closure as an [`Autoencoder`]; handy for analytic test maps.
pub struct FnAutoencoder<F> {
    dim: usize,
    f: F,
}

impl<F> FnAutoencoder<F>
where
    F: Fn(&[f64]) -> Vector + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnAutoencoder { dim, f }
    }
}

impl<F> Autoencoder for FnAutoencoder<F>
where
    F: Fn(&[f64]) -> Vector + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.dim {
            return Err(Error::dims("forward input", self.dim, x.len()));
        }
        Ok((self.f)(x))
    }
}

/// One fully connected layer: `a = act(W·x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Matrix,
    pub bias: Option<Vector>,
    /// `None` means linear (used by the last decoder layer).
    pub activation: Option<Activation>,
}

impl DenseLayer {
    /// He-style uniform initialization: entries in `±sqrt(6/fan_in)` for
    /// rectifier-like layers, `±sqrt(3/fan_in)` for the linear output.
    pub fn init(
        inputs: usize,
        outputs: usize,
        activation: Option<Activation>,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let gain = if activation.is_some() { 6.0 } else { 3.0 };
        let bound = (gain / inputs as f64).sqrt();
        let weight = Matrix::from_fn(outputs, inputs, |_, _| rng.uniform_range(-bound, bound));
        DenseLayer {
            weight,
            bias: bias.then(|| Vector::zeros(outputs)),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &[f64]) -> Result<Vector> {
        let mut z = matvec(&self.weight, x)?;
        if let Some(b) = &self.bias {
            z.iter_mut().zip(b.iter()).for_each(|(z, b)| *z += b);
        }
        if let Some(act) = &self.activation {
            z.iter_mut().for_each(|v| *v = act.apply_scalar(*v));
        }
        Ok(z)
    }
}

/// Layer widths and activation of a fully connected autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FcArchitecture {
    pub input_dim: usize,
    /// Output widths of every layer except the last, which is `input_dim`.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
}

impl FcArchitecture {
    /// The canonical deep model: `depth` layers, encoder widths shrinking
    /// geometrically from `input_dim` to `latent_dim`, decoder mirroring
    /// them back up. `depth` must be even and at least 2.
    pub fn mirrored(
        input_dim: usize,
        latent_dim: usize,
        depth: usize,
        activation: Activation,
    ) -> Result<Self> {
        if depth < 2 || !depth.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "depth must be even and >= 2, got {depth}"
            )));
        }
        if latent_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument("zero width".into()));
        }
        let half = depth / 2;
        let ratio = latent_dim as f64 / input_dim as f64;
        let encoder: Vec<usize> = (1..=half)
            .map(|i| {
                let w = input_dim as f64 * ratio.powf(i as f64 / half as f64);
                (w.round() as usize).max(1)
            })
            .collect();
        let mut hidden = encoder.clone();
        *hidden.last_mut().expect("half >= 1") = latent_dim;
        hidden.extend(encoder.iter().rev().skip(1));
        Ok(FcArchitecture {
            input_dim,
            hidden,
            activation,
            bias: true,
        })
    }

    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Layered fully connected autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    layers: Vec<DenseLayer>,
}

impl AutoencoderModel {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("layer list"))?;
        let d = first.inputs();
        let mut width = d;
        for layer in &layers {
            if layer.inputs() != width {
                return Err(Error::dims("layer input width", width, layer.inputs()));
            }
            if let Some(b) = &layer.bias {
                if b.len() != layer.outputs() {
                    return Err(Error::dims("bias length", layer.outputs(), b.len()));
                }
            }
            if let Some(act) = &layer.activation {
                act.validate()?;
            }
            width = layer.outputs();
        }
        if width != d {
            return Err(Error::dims("autoencoder output width", d, width));
        }
        Ok(AutoencoderModel { layers })
    }

    /// Random initialization of `arch`; the last layer is linear.
    pub fn new_fc(arch: &FcArchitecture, rng: &mut Rng) -> Result<Self> {
        arch.activation.validate()?;
        let mut widths = vec![arch.input_dim];
        widths.extend(&arch.hidden);
        widths.push(arch.input_dim);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = (i + 1 < n).then_some(arch.activation);
                DenseLayer::init(widths[i], widths[i + 1], act, arch.bias, rng)
            })
            .collect();
        AutoencoderModel::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Width of the narrowest hidden layer.
    pub fn latent_dim(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(DenseLayer::outputs)
            .min()
            .unwrap_or_else(|| self.dim())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight.as_slice().len()
                    + l.bias.as_ref().map_or(0, |b| b.len())
                    + usize::from(l.activation.is_some_and(|a| a.trainable_slope()))
            })
            .sum()
    }

    /// Evaluates a batch stored as rows of `x` (`n × d`); returns `n × d`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer_forward_batch(layer, &a)?;
        }
        Ok(a)
    }
}

impl Autoencoder for AutoencoderModel {
    fn dim(&self) -> usize {
        self.layers[0].inputs()
    }

    fn forward(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(Error::dims("forward input", self.dim(), x.len()));
        }
        let mut a = Vector::from(x);
        for layer in &self.layers {
            a = layer.forward(&a)?;
        }
        Ok(a)
    }
}

/// `Z = A·Wᵀ + b`, then the activation; rows are samples.
pub(crate) fn layer_preactivation_batch(layer: &DenseLayer, a: &Matrix) -> Result<Matrix> {
    let mut z = Matrix::zeros(a.rows(), layer.outputs());
    gemm(
        1.0,
        a,
        Transpose::No,
        &layer.weight,
        Transpose::Yes,
        0.0,
        &mut z,
    )?;
    if let Some(b) = &layer.bias {
        for r in 0..z.rows() {
            z.row_mut(r)
                .iter_mut()
                .zip(b.iter())
                .for_each(|(z, b)| *z += b);
        }
    }
    Ok(z)
}

fn layer_forward_batch(layer: &DenseLayer, a: &Matrix) -> Result<Matrix> {
    let mut z = layer_preactivation_batch(layer, a)?;
    if let Some(act) = &layer.activation {
        z.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = act.apply_scalar(*v));
    }
    Ok(z)
}

/// Tied two-layer autoencoder `f(x) = Wᵀρ(Wx)` with `W ∈ ℝ^{m×d}` and no
/// biases. The decoder is always the stored encoder weight transposed.
#[derive(Clone, Debug, PartialEq)]
pub struct TiedAutoencoder {
    weight: Matrix,
    activation: Activation,
}

/// Analytic Jacobian of a tied autoencoder at one point.
#[derive(Clone, Debug)]
pub struct TiedJacobian {
    pub matrix: Matrix,
    /// `false` for leaky/parametric ReLU with slope ≠ 1: the formula then
    /// uses a one-sided derivative at pre-activations equal to zero.
    pub activation_differentiable: bool,
}

impl TiedAutoencoder {
    pub fn new(weight: Matrix, activation: Activation) -> Result<Self> {
        activation.validate()?;
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::Empty("tied weight"));
        }
        Ok(TiedAutoencoder { weight, activation })
    }

    /// Entries i.i.d. uniform in `±sqrt(3/d)`.
    pub fn random(
        dim: usize,
        latent: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let bound = (3.0 / dim as f64).sqrt();
        let w = Matrix::from_fn(latent, dim, |_, _| rng.uniform_range(-bound, bound));
        TiedAutoencoder::new(w, activation)
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    pub fn latent_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Pre-activations `z = Wx`.
    pub fn encode_linear(&self, x: &[f64]) -> Result<Vector> {
        matvec(&self.weight, x)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = Matrix::zeros(x.rows(), self.weight.rows());
        gemm(
            1.0,
            x,
            Transpose::No,
            &self.weight,
            Transpose::Yes,
            0.0,
            &mut z,
        )?;
        z.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = self.activation.apply_scalar(*v));
        let mut out = Matrix::zeros(x.rows(), self.weight.cols());
        gemm(
            1.0,
            &z,
            Transpose::No,
            &self.weight,
            Transpose::No,
            0.0,
            &mut out,
        )?;
        Ok(out)
    }
}

impl Autoencoder for TiedAutoencoder {
    fn dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(Error::dims("forward input", self.dim(), x.len()));
        }
        let code = self.activation.apply(&matvec(&self.weight, x)?);
        let mut out = vec![0.0; self.dim()];
        for (k, &c) in code.iter().enumerate() {
            if c != 0.0 {
                out.iter_mut()
                    .zip(self.weight.row(k))
                    .for_each(|(o, w)| *o += c * w);
            }
        }
        Ok(out.into())
    }
}

/// `Wᵀ·diag(ρ'(Wx))·W`, made exactly symmetric by mirroring the upper
/// triangle.
pub fn tied_jacobian(ae: &TiedAutoencoder, x: &[f64]) -> Result<TiedJacobian> {
    if x.len() != ae.dim() {
        return Err(Error::dims("jacobian point", ae.dim(), x.len()));
    }
    let z = ae.encode_linear(x)?;
    let slopes = ae.activation.deriv(&z);
    let w = &ae.weight;
    let mut scaled = w.clone();
    for (k, s) in slopes.iter().enumerate() {
        scaled.row_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    let d = ae.dim();
    let mut j = Matrix::zeros(d, d);
    gemm(1.0, w, Transpose::Yes, &scaled, Transpose::No, 0.0, &mut j)?;
    for r in 0..d {
        for c in 0..r {
            j[(r, c)] = j[(c, r)];
        }
    }
    Ok(TiedJacobian {
        matrix: j,
        activation_differentiable: ae.activation.is_differentiable(),
    })
}

/// Either model family, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Deep(AutoencoderModel),
    Tied(TiedAutoencoder),
}

impl Model {
    pub fn as_tied(&self) -> Option<&TiedAutoencoder> {
        match self {
            Model::Tied(t) => Some(t),
            Model::Deep(_) => None,
        }
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Deep(m) => m.forward_batch(x),
            Model::Tied(m) => m.forward_batch(x),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Model::Deep(m) => {
                let widths: Vec<String> = std::iter::once(m.dim())
                    .chain(m.layers().iter().map(DenseLayer::outputs))
                    .map(|w| w.to_string())
                    .collect();
                let act = m.layers()[0]
                    .activation
                    .map_or("linear".to_string(), |a| a.to_string());
                format!("fc[{}] {}", widths.join("-"), act)
            }
            Model::Tied(t) => format!("tied[{}x{}] {}", t.latent_dim(), t.dim(), t.activation()),
        }
    }
}

impl Autoencoder for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Deep(m) => m.dim(),
            Model::Tied(m) => m.dim(),
        }
    }

    fn forward(&self, x: &[f64]) -> Result<Vector> {
        match self {
            Model::Deep(m) => m.forward(x),
            Model::Tied(m) => m.forward(x),
        }
    }
}

impl From<AutoencoderModel> for Model {
    fn from(m: AutoencoderModel) -> Self {
        Model::Deep(m)
    }
}

impl From<TiedAutoencoder> for Model {
    fn from(m: TiedAutoencoder) -> Self {
        Model::Tied(m)
    }
}
