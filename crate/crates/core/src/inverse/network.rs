//! Dense feed-forward stacks with hand-written backpropagation.
//!
//! Parameters live in one flat vector per stack; layer `l` stores its
//! `n_out x n_in` weight matrix row-major followed by `n_out` biases.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Elu,
    LeakyRelu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Linear => x,
        }
    }

    /// Derivative at pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elu" => Ok(Activation::Elu),
            "leaky-relu" | "leaky_relu" => Ok(Activation::LeakyRelu),
            "linear" => Ok(Activation::Linear),
            _ => Err(Error::InvalidParameter(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn n_params(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<LayerShape>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Zero-initialised stack with `hidden` on every layer but the last.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers: Vec<LayerShape> = (0..n)
            .map(|l| LayerShape {
                n_in: sizes[l],
                n_out: sizes[l + 1],
                activation: if l + 1 == n { output } else { hidden },
            })
            .collect();
        let total = layers.iter().map(LayerShape::n_params).sum();
        Ok(Self {
            layers,
            params: vec![0.0; total],
        })
    }

    /// Uniform initialisation centred at zero with variance `1 / (n_in + 1)`,
    /// the parameter count feeding each unit.
    pub fn random<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        let mut off = 0;
        for layer in &net.layers {
            let a = (3.0 / (layer.n_in as f64 + 1.0)).sqrt();
            for p in &mut net.params[off..off + layer.n_params()] {
                *p = rng.random_range(-a..a);
            }
            off += layer.n_params();
        }
        Ok(net)
    }

    pub fn from_params(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].n_out != w[1].n_in {
                return Err(Error::Shape("layer dimensions do not chain".into()));
            }
        }
        let total: usize = layers.iter().map(LayerShape::n_params).sum();
        if layers.is_empty() || params.len() != total {
            return Err(Error::Shape(format!("{} parameters for {total} slots", params.len())));
        }
        Ok(Self { layers, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_in()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.layers.len());
        let mut o = 0;
        for l in &self.layers {
            off.push(o);
            o += l.n_params();
        }
        off
    }

    fn weights(&self, layer: usize, off: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let s = self.layers[layer];
        let w = ArrayView2::from_shape((s.n_out, s.n_in), &self.params[off..off + s.n_out * s.n_in])
            .expect("layer slice");
        let b = ArrayView1::from(&self.params[off + s.n_out * s.n_in..off + s.n_params()]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_in() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.n_in(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let offsets = self.offsets();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (l, shape) in self.layers.iter().enumerate() {
            let (w, b) = self.weights(l, offsets[l]);
            let mut z = h.dot(&w.t());
            z += &b;
            let act = shape.activation;
            let out = z.mapv(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradients of a scalar loss with respect to the parameters and, when
    /// requested, the inputs, given `d loss / d output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<f64>,
        want_input_grad: bool,
    ) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::Shape("output gradient shape".into()));
        }
        let offsets = self.offsets();
        let mut grads = vec![0.0; self.n_params()];
        let mut delta = grad_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let act = shape.activation;
            if act != Activation::Linear {
                delta.zip_mut_with(&cache.pre[l], |d, z| *d *= act.derivative(*z));
            }
            let off = offsets[l];
            let nw = shape.n_out * shape.n_in;
            {
                let mut gw = ArrayViewMut2::from_shape((shape.n_out, shape.n_in), &mut grads[off..off + nw])
                    .expect("layer slice");
                ndarray::linalg::general_mat_mul(1.0, &delta.t(), &cache.inputs[l], 0.0, &mut gw);
            }
            for (g, s) in grads[off + nw..off + shape.n_params()]
                .iter_mut()
                .zip(delta.sum_axis(Axis(0)))
            {
                *g = s;
            }
            if l > 0 || want_input_grad {
                let (w, _) = self.weights(l, off);
                delta = delta.dot(&w);
            }
        }
        Ok((grads, want_input_grad.then_some(delta)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::stream_rng;

    fn loss(net: &Mlp, x: &Array2<f64>, target: &Array2<f64>) -> f64 {
        let y = net.forward(x.view()).unwrap();
        (&y - target).mapv(|v| v * v).sum() * 0.5
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = stream_rng(3, 0);
        for (hidden, out) in [
            (Activation::Elu, Activation::Linear),
            (Activation::LeakyRelu, Activation::Elu),
        ] {
            let mut net = Mlp::random(&[4, 6, 5, 3], hidden, out, &mut rng).unwrap();
            let x = Array2::from_shape_fn((2, 4), |(i, j)| (i as f64 + 1.0) * 0.7 - j as f64 * 0.4);
            let target = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
            let cache = net.forward_cached(x.view()).unwrap();
            let gout = &cache.output - &target;
            let (g, gx) = net.backward(&cache, gout.view(), true).unwrap();
            let h = 1e-6;
            for p in 0..net.n_params() {
                let orig = net.params[p];
                net.params[p] = orig + h;
                let lp = loss(&net, &x, &target);
                net.params[p] = orig - h;
                let lm = loss(&net, &x, &target);
                net.params[p] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[p]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {p}: {fd} vs {}", g[p]);
            }
            let gx = gx.unwrap();
            let mut xp = x.clone();
            for i in 0..2 {
                for j in 0..4 {
                    xp[(i, j)] += h;
                    let lp = loss(&net, &xp, &target);
                    xp[(i, j)] -= 2.0 * h;
                    let lm = loss(&net, &xp, &target);
                    xp[(i, j)] += h;
                    assert!(((lp - lm) / (2.0 * h) - gx[(i, j)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Elu, Activation::Linear).unwrap();
        let y = net.forward(Array2::ones((5, 3)).view()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
        assert_eq!(net.n_params(), 4 * 4 + 2 * 5);
    }

    #[test]
    fn init_variance() {
        let net = Mlp::random(&[99, 400], Activation::Elu, Activation::Linear, &mut stream_rng(1, 0)).unwrap();
        let n = net.n_params() as f64;
        let mean = net.params.iter().sum::<f64>() / n;
        let var = net.params.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3e-3);
        assert!((var * 100.0 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Mlp::zeros(&[3, 2], Activation::Elu, Activation::Linear).unwrap();
        assert!(net.forward(Array2::zeros((1, 4)).view()).is_err());
        assert!(Mlp::from_params(net.layers.clone(), vec![0.0; 3]).is_err());
    }
}
