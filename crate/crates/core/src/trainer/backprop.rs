use crate::autoencoder::{
    layer_preactivation_batch, Activation, AutoencoderModel, Model, TiedAutoencoder,
};
use crate::error::{Error, Result};
use crate::numerics::{gemm, Matrix, Transpose};

/// A model whose parameters can be flattened, overwritten and
/// differentiated against the reconstruction MSE.
///
/// The flat order is canonical: for each layer, weights (row-major), then
/// bias, then the PReLU slope if present.
pub trait Trainable: Clone + Send + Sync {
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn num_params(&self) -> usize;

    fn forward_rows(&self, batch: &Matrix) -> Result<Matrix>;

    /// Loss `(1/(n·d))·Σ‖f(x_i) − x_i‖²` over the rows of `batch` and its
    /// exact gradient in canonical order.
    fn loss_and_grad(&self, batch: &Matrix) -> Result<(f64, Vec<f64>)>;
}

/// Gradient of the batch MSE with respect to every parameter.
pub fn backprop_gradients<M: Trainable>(model: &M, batch: &Matrix) -> Result<Vec<f64>> {
    model.loss_and_grad(batch).map(|(_, g)| g)
}

fn check_batch(batch: &Matrix, dim: usize) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::Empty("training batch"));
    }
    if batch.cols() != dim {
        return Err(Error::dims("training sample length", dim, batch.cols()));
    }
    Ok(())
}

/// `2/(n·d)·(out − x)` and the loss.
fn residual_seed(out: &Matrix, x: &Matrix) -> (f64, Matrix) {
    let scale = 1.0 / (x.rows() * x.cols()) as f64;
    let mut sum = 0.0;
    let mut d = out.clone();
    for (r, &t) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
        let e = *r - t;
        sum += e * e;
        *r = 2.0 * scale * e;
    }
    (sum * scale, d)
}

/// Multiplies `d_act` by ρ'(z) in place and returns the PReLU slope
/// gradient `Σ d_act·z` over `z ≤ 0` (zero for other kinds).
fn through_activation(act: &Activation, z: &Matrix, d_act: &mut Matrix) -> f64 {
    let mut slope_grad = 0.0;
    let trainable = act.trainable_slope();
    for (g, &zv) in d_act.as_mut_slice().iter_mut().zip(z.as_slice()) {
        if trainable && zv <= 0.0 {
            slope_grad += *g * zv;
        }
        *g *= act.deriv_scalar(zv);
    }
    slope_grad
}

impl Trainable for AutoencoderModel {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            p.extend_from_slice(layer.weight.as_slice());
            if let Some(b) = &layer.bias {
                p.extend_from_slice(b);
            }
            if let Some(Activation::Prelu { slope }) = layer.activation {
                p.push(slope);
            }
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = AutoencoderModel::num_params(self);
        if params.len() != expected {
            return Err(Error::dims("parameter vector", expected, params.len()));
        }
        let mut off = 0;
        for layer in self.layers_mut() {
            let w = layer.weight.as_mut_slice();
            w.copy_from_slice(&params[off..off + w.len()]);
            off += w.len();
            if let Some(b) = &mut layer.bias {
                let n = b.len();
                b.copy_from_slice(&params[off..off + n]);
                off += n;
            }
            if let Some(Activation::Prelu { slope }) = &mut layer.activation {
                *slope = params[off];
                off += 1;
            }
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        AutoencoderModel::num_params(self)
    }

    fn forward_rows(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_batch(batch)
    }

    fn loss_and_grad(&self, batch: &Matrix) -> Result<(f64, Vec<f64>)> {
        use crate::autoencoder::Autoencoder;
        check_batch(batch, self.dim())?;
        let layers = self.layers();

        // Forward pass keeping pre-activations and outputs of every layer.
        let mut pre = Vec::with_capacity(layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(layers.len() + 1);
        post.push(batch.clone());
        for layer in layers {
            let z = layer_preactivation_batch(layer, post.last().expect("nonempty"))?;
            let a = match &layer.activation {
                Some(act) => {
                    let mut a = z.clone();
                    a.as_mut_slice()
                        .iter_mut()
                        .for_each(|v| *v = act.apply_scalar(*v));
                    a
                }
                None => z.clone(),
            };
            pre.push(z);
            post.push(a);
        }

        let (loss, mut d_act) = residual_seed(post.last().expect("nonempty"), batch);
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); layers.len()];
        for (l, layer) in layers.iter().enumerate().rev() {
            let slope_grad = match &layer.activation {
                Some(act) => through_activation(act, &pre[l], &mut d_act),
                None => 0.0,
            };
            let d_pre = d_act;
            let mut d_w = Matrix::zeros(layer.outputs(), layer.inputs());
            gemm(
                1.0,
                &d_pre,
                Transpose::Yes,
                &post[l],
                Transpose::No,
                0.0,
                &mut d_w,
            )?;
            let mut g = d_w.into_vec();
            if layer.bias.is_some() {
                let mut d_b = vec![0.0; layer.outputs()];
                for r in 0..d_pre.rows() {
                    d_b.iter_mut().zip(d_pre.row(r)).for_each(|(b, v)| *b += v);
                }
                g.extend(d_b);
            }
            if layer.activation.is_some_and(|a| a.trainable_slope()) {
                g.push(slope_grad);
            }
            per_layer[l] = g;
            d_act = Matrix::zeros(d_pre.rows(), layer.inputs());
            if l > 0 {
                gemm(
                    1.0,
                    &d_pre,
                    Transpose::No,
                    &layer.weight,
                    Transpose::No,
                    0.0,
                    &mut d_act,
                )?;
            }
        }
        Ok((loss, per_layer.concat()))
    }
}

impl Trainable for TiedAutoencoder {
    fn params(&self) -> Vec<f64> {
        let mut p = self.weight().as_slice().to_vec();
        if let Activation::Prelu { slope } = self.activation() {
            p.push(slope);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n = Trainable::num_params(self);
        if params.len() != n {
            return Err(Error::dims("parameter vector", n, params.len()));
        }
        let w = self.weight_mut().as_mut_slice();
        let wl = w.len();
        w.copy_from_slice(&params[..wl]);
        if let Activation::Prelu { .. } = self.activation() {
            self.set_activation(Activation::Prelu { slope: params[wl] });
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        self.weight().as_slice().len() + usize::from(self.activation().trainable_slope())
    }

    fn forward_rows(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_batch(batch)
    }

    fn loss_and_grad(&self, batch: &Matrix) -> Result<(f64, Vec<f64>)> {
        use crate::autoencoder::Autoencoder;
        check_batch(batch, self.dim())?;
        let w = self.weight();
        let act = self.activation();
        let (n, m, d) = (batch.rows(), w.rows(), w.cols());

        let mut z = Matrix::zeros(n, m);
        gemm(1.0, batch, Transpose::No, w, Transpose::Yes, 0.0, &mut z)?;
        let mut a = z.clone();
        a.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = act.apply_scalar(*v));
        let mut out = Matrix::zeros(n, d);
        gemm(1.0, &a, Transpose::No, w, Transpose::No, 0.0, &mut out)?;

        let (loss, d_out) = residual_seed(&out, batch);
        // Decoder path: out = A·W.
        let mut d_w = Matrix::zeros(m, d);
        gemm(
            1.0,
            &a,
            Transpose::Yes,
            &d_out,
            Transpose::No,
            0.0,
            &mut d_w,
        )?;
        let mut d_code = Matrix::zeros(n, m);
        gemm(
            1.0,
            &d_out,
            Transpose::No,
            w,
            Transpose::Yes,
            0.0,
            &mut d_code,
        )?;
        let slope_grad = through_activation(&act, &z, &mut d_code);
        // Encoder path: Z = X·Wᵀ.
        gemm(
            1.0,
            &d_code,
            Transpose::Yes,
            batch,
            Transpose::No,
            1.0,
            &mut d_w,
        )?;

        let mut g = d_w.into_vec();
        if act.trainable_slope() {
            g.push(slope_grad);
        }
        Ok((loss, g))
    }
}

impl Trainable for Model {
    fn params(&self) -> Vec<f64> {
        match self {
            Model::Deep(m) => m.params(),
            Model::Tied(m) => m.params(),
        }
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        match self {
            Model::Deep(m) => m.set_params(params),
            Model::Tied(m) => m.set_params(params),
        }
    }

    fn num_params(&self) -> usize {
        match self {
            Model::Deep(m) => Trainable::num_params(m),
            Model::Tied(m) => Trainable::num_params(m),
        }
    }

    fn forward_rows(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_batch(batch)
    }

    fn loss_and_grad(&self, batch: &Matrix) -> Result<(f64, Vec<f64>)> {
        match self {
            Model::Deep(m) => m.loss_and_grad(batch),
            Model::Tied(m) => m.loss_and_grad(batch),
        }
    }
}
