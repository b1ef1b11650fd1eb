use crate::adapters::{AdapterSpec, AdapterState};
use crate::densela::{Matrix, RngStream};
use crate::error::{Error, Result};

/// `y = W2'·tanh(W1'·x)` with an adapter on each layer.
#[derive(Debug, Clone)]
pub struct TwoLayerHost {
    pub first: AdapterState,
    pub second: AdapterState,
}

impl TwoLayerHost {
    pub fn init(
        spec: AdapterSpec,
        w1: &Matrix,
        w2: &Matrix,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if w2.cols() != w1.rows() {
            return Err(Error::dim("two-layer host", format!("{} hidden", w1.rows()), w2.cols()));
        }
        Ok(TwoLayerHost {
            first: AdapterState::init(spec, w1, rng)?,
            second: AdapterState::init(spec, w2, rng)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.first.trainable_param_count() + self.second.trainable_param_count()
    }

    /// Both layers' parameters, first layer then second.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.first.params();
        p.extend(self.second.params());
        p
    }

    pub fn with_params(&self, values: &[f64]) -> Result<Self> {
        let split = self.first.trainable_param_count();
        if values.len() != self.param_count() {
            return Err(Error::dim("with_params", format!("{} values", self.param_count()), values.len()));
        }
        Ok(TwoLayerHost {
            first: self.first.with_params(&values[..split])?,
            second: self.second.with_params(&values[split..])?,
        })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let hidden = self.first.forward(x)?.map(f64::tanh);
        self.second.forward(&hidden)
    }

    /// Gradients of `L(y)` for both layers given `upstream = dL/dy`.
    pub fn param_gradients(&self, x: &Matrix, upstream: &Matrix) -> Result<Vec<f64>> {
        let hidden = self.first.forward(x)?.map(f64::tanh);
        let mut grads = self.first_layer_grads(x, &hidden, upstream)?;
        grads.extend(self.second.param_gradients(&hidden, upstream)?);
        Ok(grads)
    }

    fn first_layer_grads(&self, x: &Matrix, hidden: &Matrix, upstream: &Matrix) -> Result<Vec<f64>> {
        let d_hidden = self.second.input_gradient(upstream)?;
        let d_pre = d_hidden.hadamard(&hidden.map(|h| 1.0 - h * h))?;
        self.first.param_gradients(x, &d_pre)
    }
}
