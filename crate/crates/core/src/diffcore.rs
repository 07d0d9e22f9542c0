//! Closed-form evaluation and differentiation of shallow scalar subnets.
//!
//! A subnet maps `x ∈ R^d` to a scalar through one or two dense hidden layers
//! and an affine head:
//!
//! ```text
//! z_1 = W_1 x + b_1,        a_1 = σ(z_1)
//! z_2 = W_2 a_1 + b_2,      a_2 = σ(z_2)          (second layer optional)
//! f(x) = w · a_L + c
//! ```
//!
//! Besides the value, the monotonicity penalties need input partials
//! `∂f/∂x_j` and the parameter gradients of those partials. Both are obtained
//! exactly: input partials by pushing a tangent through the layers, and their
//! parameter gradients by a reverse sweep over the (primal, tangent) pair.
//!
//! # Parameter layout
//!
//! Parameters are stored as one flat vector, layer-major. Each hidden layer
//! contributes its weight matrix (row-major, shape `out × in`) followed by its
//! bias vector; the head contributes its weight vector followed by the scalar
//! bias. For `d = 3` and a single hidden layer of width 2 that is
//! `3·2 + 2 + 2 + 1 = 11` entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
///
/// Trained models use [`Activation::Logistic`]. `Identity` turns a subnet into
/// an affine map, which is how exact linear reference functions are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Logistic,
    Identity,
}

impl Activation {
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Logistic => {
                let s = logistic(z);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
            Activation::Identity => (z, 1.0, 0.0),
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Architecture of a subnet: input dimension, hidden widths, activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl SubnetShape {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let shape = SubnetShape {
            input_dim,
            hidden,
            activation: Activation::Logistic,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("subnet input dimension must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.len() > 2 {
            return Err(Error::InvalidConfig(format!(
                "subnets have 1 or 2 hidden layers, got {}",
                self.hidden.len()
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Length of the flattened parameter vector.
    pub fn param_len(&self) -> usize {
        let mut len = 0;
        let mut fan_in = self.input_dim;
        for &h in &self.hidden {
            len += h * fan_in + h;
            fan_in = h;
        }
        len + fan_in + 1
    }

    /// `(weights offset, bias offset, in, out)` for each hidden layer, then the head offset.
    fn offsets(&self) -> (Vec<(usize, usize, usize, usize)>, usize) {
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut off = 0;
        let mut fan_in = self.input_dim;
        for &h in &self.hidden {
            layers.push((off, off + h * fan_in, fan_in, h));
            off += h * fan_in + h;
            fan_in = h;
        }
        (layers, off)
    }
}

/// Parameters of one subnet, stored flat in the documented layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SubnetParams {
    shape: SubnetShape,
    theta: Vec<f64>,
    layers: Vec<(usize, usize, usize, usize)>,
    head: usize,
}

impl SubnetParams {
    pub fn zeros(shape: SubnetShape) -> Result<Self> {
        let len = shape.param_len();
        Self::unflatten(shape, vec![0.0; len])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(shape: SubnetShape, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(shape)?;
        let layers = params.layers.clone();
        for (w_off, _, fan_in, fan_out) in layers {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params.theta[w_off..w_off + fan_in * fan_out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        let fan_in = *params.shape.hidden.last().unwrap();
        let limit = (6.0 / (fan_in + 1) as f64).sqrt();
        let head = params.head;
        for w in &mut params.theta[head..head + fan_in] {
            *w = rng.gen_range(-limit..limit);
        }
        Ok(params)
    }

    /// Builds a subnet from explicit `(weights, biases)` per hidden layer and the head.
    pub fn from_layers(
        input_dim: usize,
        activation: Activation,
        layers: &[(Vec<f64>, Vec<f64>)],
        head_weights: &[f64],
        head_bias: f64,
    ) -> Result<Self> {
        let hidden: Vec<usize> = layers.iter().map(|(_, b)| b.len()).collect();
        let shape = SubnetShape::new(input_dim, hidden)?.with_activation(activation);
        let mut theta = Vec::with_capacity(shape.param_len());
        for (w, b) in layers {
            theta.extend_from_slice(w);
            theta.extend_from_slice(b);
        }
        theta.extend_from_slice(head_weights);
        theta.push(head_bias);
        Self::unflatten(shape, theta)
    }

    /// Exact affine subnet `x ↦ w·x + b` (one identity unit), for reference models.
    pub fn linear(weights: &[f64], bias: f64) -> Result<Self> {
        Self::from_layers(
            weights.len(),
            Activation::Identity,
            &[(weights.to_vec(), vec![0.0])],
            &[1.0],
            bias,
        )
    }

    pub fn unflatten(shape: SubnetShape, theta: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if theta.len() != shape.param_len() {
            return Err(Error::DimensionMismatch {
                expected: shape.param_len(),
                found: theta.len(),
            });
        }
        let (layers, head) = shape.offsets();
        Ok(SubnetParams {
            shape,
            theta,
            layers,
            head,
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn shape(&self) -> &SubnetShape {
        &self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn param_len(&self) -> usize {
        self.theta.len()
    }

    pub fn head_bias(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    pub fn set_head_bias(&mut self, value: f64) {
        let last = self.theta.len() - 1;
        self.theta[last] = value;
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Subnet value `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut ws = Workspace::new(&self.shape);
        Ok(self.forward(x, &mut ws))
    }

    /// Value, input gradient and both parameter-gradient blocks.
    pub fn eval_full(&self, x: &[f64]) -> Result<EvalRecord> {
        self.check_dim(x)?;
        let d = self.shape.input_dim;
        let p = self.theta.len();
        let mut ws = Workspace::new(&self.shape);
        let mut param_grad_of_value = vec![0.0; p];
        let value = self.value_grad_into(x, &mut ws, 1.0, &mut param_grad_of_value);
        let mut input_grad = Vec::with_capacity(d);
        let mut param_grad_of_input_grad = Vec::with_capacity(d);
        let mut dir = vec![0.0; d];
        for j in 0..d {
            dir.fill(0.0);
            dir[j] = 1.0;
            let mut row = vec![0.0; p];
            input_grad.push(self.directional_grad_into(x, &dir, &mut ws, 1.0, &mut row));
            param_grad_of_input_grad.push(row);
        }
        Ok(EvalRecord {
            value,
            input_grad,
            param_grad_of_value,
            param_grad_of_input_grad,
        })
    }

    /// Input gradient only.
    pub fn input_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut ws = Workspace::new(&self.shape);
        self.forward(x, &mut ws);
        let mut dir = vec![0.0; x.len()];
        Ok((0..x.len())
            .map(|j| {
                dir.fill(0.0);
                dir[j] = 1.0;
                self.tangent(&dir, &mut ws)
            })
            .collect())
    }

    /// Forward pass; fills `ws` with pre- and post-activations. No dimension check.
    pub(crate) fn forward(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let act = self.shape.activation;
        for (l, &(w_off, b_off, fan_in, fan_out)) in self.layers.iter().enumerate() {
            let (prev, rest) = ws.a.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            let w = &self.theta[w_off..b_off];
            let b = &self.theta[b_off..b_off + fan_out];
            for h in 0..fan_out {
                let row = &w[h * fan_in..(h + 1) * fan_in];
                let z = b[h] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                let (s, d1, d2) = act.eval(z);
                rest[0][h] = s;
                ws.d1[l][h] = d1;
                ws.d2[l][h] = d2;
            }
        }
        let last = &ws.a[self.layers.len() - 1];
        let head = &self.theta[self.head..self.head + last.len()];
        self.head_bias_at() + head.iter().zip(last).map(|(w, a)| w * a).sum::<f64>()
    }

    #[inline]
    fn head_bias_at(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    /// Directional input derivative `Σ_j dir_j ∂f/∂x_j` after `forward`. Fills tangents in `ws`.
    pub(crate) fn tangent(&self, dir: &[f64], ws: &mut Workspace) -> f64 {
        for (l, &(w_off, _, fan_in, fan_out)) in self.layers.iter().enumerate() {
            let (prev, rest) = ws.s.split_at_mut(l);
            let input: &[f64] = if l == 0 { dir } else { &prev[l - 1] };
            let w = &self.theta[w_off..w_off + fan_in * fan_out];
            for h in 0..fan_out {
                let row = &w[h * fan_in..(h + 1) * fan_in];
                let t = row.iter().zip(input).map(|(w, s)| w * s).sum::<f64>();
                ws.t[l][h] = t;
                rest[0][h] = ws.d1[l][h] * t;
            }
        }
        let last = &ws.s[self.layers.len() - 1];
        let head = &self.theta[self.head..self.head + last.len()];
        head.iter().zip(last).map(|(w, s)| w * s).sum()
    }

    /// Returns `f(x)` and accumulates `scale · ∂f/∂θ` into `out`.
    pub(crate) fn value_grad_into(
        &self,
        x: &[f64],
        ws: &mut Workspace,
        scale: f64,
        out: &mut [f64],
    ) -> f64 {
        let value = self.forward(x, ws);
        let n_layers = self.layers.len();
        let last = &ws.a[n_layers - 1];
        for (h, a) in last.iter().enumerate() {
            out[self.head + h] += scale * a;
            ws.abar[n_layers - 1][h] = scale * self.theta[self.head + h];
        }
        *out.last_mut().unwrap() += scale;
        for l in (0..n_layers).rev() {
            let (w_off, b_off, fan_in, fan_out) = self.layers[l];
            for h in 0..fan_out {
                ws.zbar[h] = ws.d1[l][h] * ws.abar[l][h];
            }
            let input: &[f64] = if l == 0 { x } else { &ws.a[l - 1] };
            for h in 0..fan_out {
                let zb = ws.zbar[h];
                out[b_off + h] += zb;
                let row = &mut out[w_off + h * fan_in..w_off + (h + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += zb * xi;
                }
            }
            if l > 0 {
                for k in 0..fan_in {
                    ws.abar[l - 1][k] = (0..fan_out)
                        .map(|h| self.theta[w_off + h * fan_in + k] * ws.zbar[h])
                        .sum();
                }
            }
        }
        value
    }

    /// Returns the directional derivative `g = Σ_j dir_j ∂f/∂x_j` and
    /// accumulates `scale · ∂g/∂θ` into `out`.
    pub(crate) fn directional_grad_into(
        &self,
        x: &[f64],
        dir: &[f64],
        ws: &mut Workspace,
        scale: f64,
        out: &mut [f64],
    ) -> f64 {
        self.forward(x, ws);
        let g = self.tangent(dir, ws);
        let n_layers = self.layers.len();
        let last = n_layers - 1;
        for h in 0..ws.s[last].len() {
            out[self.head + h] += scale * ws.s[last][h];
            ws.sbar[last][h] = scale * self.theta[self.head + h];
            ws.abar[last][h] = 0.0;
        }
        for l in (0..n_layers).rev() {
            let (w_off, b_off, fan_in, fan_out) = self.layers[l];
            for h in 0..fan_out {
                ws.tbar[h] = ws.d1[l][h] * ws.sbar[l][h];
                ws.zbar[h] =
                    ws.d2[l][h] * ws.t[l][h] * ws.sbar[l][h] + ws.d1[l][h] * ws.abar[l][h];
            }
            let (a_in, s_in): (&[f64], &[f64]) = if l == 0 {
                (x, dir)
            } else {
                (&ws.a[l - 1], &ws.s[l - 1])
            };
            for h in 0..fan_out {
                let (tb, zb) = (ws.tbar[h], ws.zbar[h]);
                out[b_off + h] += zb;
                let row = &mut out[w_off + h * fan_in..w_off + (h + 1) * fan_in];
                for ((g, ai), si) in row.iter_mut().zip(a_in).zip(s_in) {
                    *g += tb * si + zb * ai;
                }
            }
            if l > 0 {
                for k in 0..fan_in {
                    let mut sb = 0.0;
                    let mut ab = 0.0;
                    for h in 0..fan_out {
                        let w = self.theta[w_off + h * fan_in + k];
                        sb += w * ws.tbar[h];
                        ab += w * ws.zbar[h];
                    }
                    ws.sbar[l - 1][k] = sb;
                    ws.abar[l - 1][k] = ab;
                }
            }
        }
        g
    }
}

/// Value and exact derivatives of a subnet at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub value: f64,
    /// `∂f/∂x_j`, one entry per input coordinate.
    pub input_grad: Vec<f64>,
    /// `∂f/∂θ` in the flat parameter layout.
    pub param_grad_of_value: Vec<f64>,
    /// Row `j` holds `∂(∂f/∂x_j)/∂θ`.
    pub param_grad_of_input_grad: Vec<Vec<f64>>,
}

/// Scratch buffers reused across evaluations of subnets with the same shape.
#[derive(Debug, Clone)]
pub struct Workspace {
    a: Vec<Vec<f64>>,
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    abar: Vec<Vec<f64>>,
    sbar: Vec<Vec<f64>>,
    zbar: Vec<f64>,
    tbar: Vec<f64>,
}

impl Workspace {
    pub fn new(shape: &SubnetShape) -> Self {
        let layers = || shape.hidden.iter().map(|&h| vec![0.0; h]).collect::<Vec<_>>();
        let widest = shape.hidden.iter().copied().max().unwrap_or(1);
        Workspace {
            a: layers(),
            d1: layers(),
            d2: layers(),
            t: layers(),
            s: layers(),
            abar: layers(),
            sbar: layers(),
            zbar: vec![0.0; widest],
            tbar: vec![0.0; widest],
        }
    }

    /// True when this workspace can serve subnets of `shape`.
    pub fn fits(&self, shape: &SubnetShape) -> bool {
        self.a.len() == shape.hidden.len()
            && self.a.iter().zip(&shape.hidden).all(|(a, &h)| a.len() == h)
    }
}
