use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Rng;
use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Lower clamp applied to every `log σ` produced by a split-gaussian head.
pub const LOG_SIGMA_MIN: f64 = -7.0;
/// Upper clamp applied to every `log σ` produced by a split-gaussian head.
pub const LOG_SIGMA_MAX: f64 = 2.0;

/// Output head of an [`Mlp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    Sigmoid,
    /// First half of the output is a mean, second half a clamped `log σ`.
    SplitGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Standard deviation of the isotropic Gaussian weight init.
    pub std: f64,
    /// Negative-side slope of the hidden leaky ReLUs.
    pub leaky_slope: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            std: 0.01,
            leaky_slope: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `[in × out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// Fully connected network: affine + leaky ReLU per hidden layer, then an
/// affine output layer followed by the [`Head`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    role: String,
    sizes: Vec<usize>,
    head: Head,
    slope: f64,
    layers: Vec<Layer>,
}

/// Parameters of an [`Mlp`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Leaves in parameter order: `w0, b0, w1, b1, ...`.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

fn check_sizes(sizes: &[usize], head: Head) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::contract(format!(
            "layer sizes need at least two positive entries, got {sizes:?}"
        )));
    }
    if head == Head::SplitGaussian && !sizes[sizes.len() - 1].is_multiple_of(2) {
        return Err(Error::contract(format!(
            "split-gaussian head needs an even output width, got {}",
            sizes[sizes.len() - 1]
        )));
    }
    Ok(())
}

impl Mlp {
    /// Weights drawn i.i.d. from `N(0, init.std²)` in layer then row-major
    /// order; biases start at zero.
    pub fn init(
        role: &str,
        sizes: &[usize],
        head: Head,
        init: InitConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_sizes(sizes, head)?;
        if init.std.is_nan() || init.std < 0.0 {
            return Err(Error::contract(format!("init std must be >= 0, got {}", init.std)));
        }
        let normal = Normal::new(0.0, init.std).map_err(|e| Error::contract(e.to_string()))?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::from_fn(&[w[0], w[1]], |_| normal.sample(rng)),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Mlp {
            role: role.to_string(),
            sizes: sizes.to_vec(),
            head,
            slope: init.leaky_slope,
            layers,
        })
    }

    pub fn zeros(role: &str, sizes: &[usize], head: Head, leaky_slope: f64) -> Result<Self> {
        check_sizes(sizes, head)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Mlp {
            role: role.to_string(),
            sizes: sizes.to_vec(),
            head,
            slope: leaky_slope,
            layers,
        })
    }

    /// Assembles a network from explicit layers, checking that they chain.
    pub fn from_layers(role: &str, layers: Vec<Layer>, head: Head, leaky_slope: f64) -> Result<Self> {
        let mut sizes = Vec::with_capacity(layers.len() + 1);
        for (i, l) in layers.iter().enumerate() {
            let ws = l.weight.shape();
            if ws.len() != 2 || l.bias.shape() != [ws[1]] {
                return Err(Error::shape("mlp layer", &[ws, l.bias.shape()]));
            }
            if i == 0 {
                sizes.push(ws[0]);
            } else if sizes[i] != ws[0] {
                return Err(Error::contract(format!(
                    "layer {i} expects input width {} but previous layer outputs {}",
                    ws[0], sizes[i]
                )));
            }
            sizes.push(ws[1]);
        }
        check_sizes(&sizes, head)?;
        Ok(Mlp {
            role: role.to_string(),
            sizes,
            head,
            slope: leaky_slope,
            layers,
        })
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn leaky_slope(&self) -> f64 {
        self.slope
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Name of the `i`-th tensor in [`Mlp::params`] order.
    pub fn param_name(&self, i: usize) -> String {
        let kind = if i.is_multiple_of(2) { "weight" } else { "bias" };
        format!("{}.layer{}.{}", self.role, i / 2, kind)
    }

    /// Records the parameters on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (put(&l.weight), put(&l.bias)))
                .collect(),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || shape[1] != self.in_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                shapes: vec![shape.to_vec(), vec![self.in_dim()]],
            });
        }
        Ok(())
    }

    fn forward_raw(&self, bound: &BoundMlp, tape: &mut Tape, input: Var) -> Result<Var> {
        self.forward_masked(bound, tape, input, None)
    }

    fn forward_masked(&self, bound: &BoundMlp, tape: &mut Tape, input: Var, mut dropout: Option<(f64, &mut Rng)>) -> Result<Var> {
        self.check_input(tape.value(input).shape())?;
        let mut h = input;
        let last = bound.layers.len() - 1;
        for (i, &(w, b)) in bound.layers.iter().enumerate() {
            h = tape.matmul(h, w)?;
            h = tape.add_bias(h, b)?;
            if i < last {
                h = tape.leaky_relu(h, self.slope);
                if let Some((rate, rng)) = dropout.as_mut() {
                    let keep = 1.0 - *rate;
                    let mask = Tensor::from_fn(tape.value(h).shape(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                    let mask = tape.constant(mask);
                    h = tape.mul(h, mask)?;
                }
            }
        }
        Ok(h)
    }

    /// Linear-head forward pass with inverted dropout at `rate` on every
    /// hidden activation. A zero rate draws nothing from `rng`.
    pub fn forward_dropout(&self, bound: &BoundMlp, tape: &mut Tape, input: Var, rate: f64, rng: &mut Rng) -> Result<Var> {
        if self.head != Head::Linear {
            return Err(Error::contract(format!("dropout needs a linear head on `{}`", self.role)));
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        let dropout = if rate > 0.0 { Some((rate, rng)) } else { None };
        self.forward_masked(bound, tape, input, dropout)
    }

    /// Forward pass on the tape: `[batch × in] → [batch × out]`.
    ///
    /// A split-gaussian head yields `[μ | clamped log σ]` side by side.
    pub fn forward(&self, bound: &BoundMlp, tape: &mut Tape, input: Var) -> Result<Var> {
        match self.head {
            Head::Linear => self.forward_raw(bound, tape, input),
            Head::Sigmoid => {
                let h = self.forward_raw(bound, tape, input)?;
                Ok(tape.sigmoid(h))
            }
            Head::SplitGaussian => {
                let (mu, log_sigma) = self.forward_gaussian(bound, tape, input)?;
                tape.concat_last_axis(mu, log_sigma)
            }
        }
    }

    /// Split-gaussian forward pass returning `(μ, log σ)` with `log σ`
    /// clamped to `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub fn forward_gaussian(&self, bound: &BoundMlp, tape: &mut Tape, input: Var) -> Result<(Var, Var)> {
        if self.head != Head::SplitGaussian {
            return Err(Error::contract(format!(
                "network `{}` does not have a split-gaussian head",
                self.role
            )));
        }
        let h = self.forward_raw(bound, tape, input)?;
        let half = self.out_dim() / 2;
        let mu = tape.slice_last_axis(h, 0, half)?;
        let raw = tape.slice_last_axis(h, half, 2 * half)?;
        let log_sigma = tape.clamp(raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
        Ok((mu, log_sigma))
    }

    /// Tape-free forward pass with the same semantics as [`Mlp::forward`].
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input.shape())?;
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = kernels::matmul(&h, &l.weight);
            let n = l.bias.len();
            for row in next.data_mut().chunks_mut(n) {
                for (v, b) in row.iter_mut().zip(l.bias.data()) {
                    *v += b;
                    if i < last && *v <= 0.0 {
                        *v *= self.slope;
                    }
                }
            }
            h = next;
        }
        match self.head {
            Head::Linear => {}
            Head::Sigmoid => h.data_mut().iter_mut().for_each(|v| *v = kernels::sigmoid(*v)),
            Head::SplitGaussian => {
                let c = h.cols();
                for row in h.data_mut().chunks_mut(c) {
                    for v in &mut row[c / 2..] {
                        *v = v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
                    }
                }
            }
        }
        Ok(h)
    }

    /// Tape-free split-gaussian pass returning `(μ, log σ)`.
    pub fn predict_gaussian(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        if self.head != Head::SplitGaussian {
            return Err(Error::contract(format!(
                "network `{}` does not have a split-gaussian head",
                self.role
            )));
        }
        let out = self.predict(input)?;
        let half = out.cols() / 2;
        Ok((out.slice_cols(0, half), out.slice_cols(half, 2 * half)))
    }
}
