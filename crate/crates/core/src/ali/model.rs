use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{BoundMlp, Head, InitConfig, Layer, Mlp, Rng};
use crate::pipeline::{encode_on_tape, Encoder};
use crate::train::{layer_sizes, Architecture};

/// Linear embeddings of a one-hot conditioning label, one per network.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub classes: usize,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub discriminator: Mlp,
}

impl Conditioning {
    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn networks(&self) -> [&Mlp; 3] {
        [&self.encoder, &self.decoder, &self.discriminator]
    }
}

/// Encoder, decoder and joint discriminator.
///
/// When `conditioning` is set, each network also receives the embedding of
/// a label, appended after its regular input.
#[derive(Clone, Debug, PartialEq)]
pub struct AliModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub discriminator: Mlp,
    pub conditioning: Option<Conditioning>,
}

/// An [`AliModel`] recorded on one tape.
pub struct BoundAli {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
    pub discriminator: BoundMlp,
    pub embeddings: Option<[BoundMlp; 3]>,
}

/// Which parameter group receives gradients when binding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Trainable {
    Discriminator,
    Generator { decoder: bool },
}

impl AliModel {
    /// Fresh networks, initialized in the order encoder, decoder, discriminator.
    pub fn new(arch: &Architecture, init: InitConfig, rng: &mut Rng) -> Result<Self> {
        let (dx, dz) = (arch.dim_x, arch.dim_z);
        let encoder = Mlp::init("encoder", &layer_sizes(dx, &arch.encoder_hidden, 2 * dz), Head::SplitGaussian, init, rng)?;
        let decoder = Mlp::init("decoder", &layer_sizes(dz, &arch.decoder_hidden, dx), Head::Linear, init, rng)?;
        let discriminator = Mlp::init(
            "discriminator",
            &layer_sizes(dx + dz, &arch.discriminator_hidden, 1),
            Head::Linear,
            init,
            rng,
        )?;
        AliModel::from_parts(encoder, decoder, discriminator, None)
    }

    /// Conditional model over `classes` labels embedded in `embed_dim` dimensions.
    pub fn new_conditional(
        arch: &Architecture,
        classes: usize,
        embed_dim: usize,
        init: InitConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (dx, dz, e) = (arch.dim_x, arch.dim_z, embed_dim);
        let encoder = Mlp::init("encoder", &layer_sizes(dx + e, &arch.encoder_hidden, 2 * dz), Head::SplitGaussian, init, rng)?;
        let decoder = Mlp::init("decoder", &layer_sizes(dz + e, &arch.decoder_hidden, dx), Head::Linear, init, rng)?;
        let discriminator = Mlp::init(
            "discriminator",
            &layer_sizes(dx + dz + e, &arch.discriminator_hidden, 1),
            Head::Linear,
            init,
            rng,
        )?;
        let mut embed = |role: &str| Mlp::init(role, &[classes, e], Head::Linear, init, rng);
        let conditioning = Conditioning {
            classes,
            encoder: embed("encoder_embedding")?,
            decoder: embed("decoder_embedding")?,
            discriminator: embed("discriminator_embedding")?,
        };
        AliModel::from_parts(encoder, decoder, discriminator, Some(conditioning))
    }

    /// Assembles a model, checking that the widths agree.
    pub fn from_parts(
        encoder: Mlp,
        decoder: Mlp,
        discriminator: Mlp,
        conditioning: Option<Conditioning>,
    ) -> Result<Self> {
        if encoder.head() != Head::SplitGaussian {
            return Err(Error::contract("ALI encoder needs a split-gaussian head"));
        }
        let dz = encoder.out_dim() / 2;
        let dx = decoder.out_dim();
        let e = match &conditioning {
            None => 0,
            Some(c) => {
                let e = c.embed_dim();
                if c.classes == 0 || c.networks().iter().any(|n| n.sizes() != [c.classes, e]) {
                    return Err(Error::contract("embeddings must all map classes -> embed_dim"));
                }
                e
            }
        };
        let ok = encoder.in_dim() == dx + e
            && decoder.in_dim() == dz + e
            && discriminator.in_dim() == dx + dz + e
            && discriminator.out_dim() == 1;
        if !ok {
            return Err(Error::contract(format!(
                "inconsistent ALI widths: encoder {:?}, decoder {:?}, discriminator {:?}, embedding {e}",
                encoder.sizes(),
                decoder.sizes(),
                discriminator.sizes()
            )));
        }
        Ok(AliModel {
            encoder,
            decoder,
            discriminator,
            conditioning,
        })
    }

    /// Conditional copy of an unconditional model whose label pathway is
    /// exactly zero: all embeddings vanish and the extra input rows of each
    /// first layer are zero.
    pub fn with_null_conditioning(&self, classes: usize, embed_dim: usize) -> Result<Self> {
        if self.conditioning.is_some() {
            return Err(Error::contract("model is already conditional"));
        }
        let widen = |net: &Mlp| -> Result<Mlp> {
            let mut layers = net.layers().to_vec();
            let w = &layers[0].weight;
            let (rows, cols) = (w.rows(), w.cols());
            let mut data = w.data().to_vec();
            data.extend(std::iter::repeat_n(0.0, embed_dim * cols));
            layers[0] = Layer {
                weight: Tensor::matrix(rows + embed_dim, cols, data)?,
                bias: layers[0].bias.clone(),
            };
            Mlp::from_layers(net.role(), layers, net.head(), net.leaky_slope())
        };
        let zero = |role: &str| Mlp::zeros(role, &[classes, embed_dim], Head::Linear, self.encoder.leaky_slope());
        AliModel::from_parts(
            widen(&self.encoder)?,
            widen(&self.decoder)?,
            widen(&self.discriminator)?,
            Some(Conditioning {
                classes,
                encoder: zero("encoder_embedding")?,
                decoder: zero("decoder_embedding")?,
                discriminator: zero("discriminator_embedding")?,
            }),
        )
    }

    pub fn dim_x(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn dim_z(&self) -> usize {
        self.encoder.out_dim() / 2
    }

    /// Generator-side networks: encoder, decoder, then their embeddings.
    pub fn generator_networks(&self) -> Vec<&Mlp> {
        self.generator_subset(true)
    }

    pub(crate) fn generator_subset(&self, decoder: bool) -> Vec<&Mlp> {
        let mut v = vec![&self.encoder];
        if decoder {
            v.push(&self.decoder);
        }
        if let Some(c) = &self.conditioning {
            v.push(&c.encoder);
            if decoder {
                v.push(&c.decoder);
            }
        }
        v
    }

    pub(crate) fn generator_networks_mut(&mut self, decoder: bool) -> Vec<&mut Mlp> {
        let mut v = vec![&mut self.encoder];
        if decoder {
            v.push(&mut self.decoder);
        }
        if let Some(c) = &mut self.conditioning {
            v.push(&mut c.encoder);
            if decoder {
                v.push(&mut c.decoder);
            }
        }
        v
    }

    pub fn discriminator_networks(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.discriminator];
        if let Some(c) = &self.conditioning {
            v.push(&c.discriminator);
        }
        v
    }

    pub(crate) fn discriminator_networks_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![&mut self.discriminator];
        if let Some(c) = &mut self.conditioning {
            v.push(&mut c.discriminator);
        }
        v
    }

    /// Every network, for checkpointing.
    pub fn networks(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.encoder, &self.decoder, &self.discriminator];
        if let Some(c) = &self.conditioning {
            v.extend(c.networks());
        }
        v
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: Trainable) -> BoundAli {
        let (gen, dec, disc) = match trainable {
            Trainable::Discriminator => (false, false, true),
            Trainable::Generator { decoder } => (true, decoder, false),
        };
        BoundAli {
            encoder: self.encoder.bind(tape, gen),
            decoder: self.decoder.bind(tape, dec),
            discriminator: self.discriminator.bind(tape, disc),
            embeddings: self.conditioning.as_ref().map(|c| {
                [
                    c.encoder.bind(tape, gen),
                    c.decoder.bind(tape, dec),
                    c.discriminator.bind(tape, disc),
                ]
            }),
        }
    }

    /// Records every parameter as a trainable leaf.
    pub fn bind_all(&self, tape: &mut Tape) -> BoundAli {
        BoundAli {
            encoder: self.encoder.bind(tape, true),
            decoder: self.decoder.bind(tape, true),
            discriminator: self.discriminator.bind(tape, true),
            embeddings: self.conditioning.as_ref().map(|c| {
                [c.encoder.bind(tape, true), c.decoder.bind(tape, true), c.discriminator.bind(tape, true)]
            }),
        }
    }

    /// One-hot rows for `labels`.
    pub fn one_hot(&self, labels: &[usize]) -> Result<Tensor> {
        let k = self
            .conditioning
            .as_ref()
            .ok_or_else(|| Error::contract("model is not conditional"))?
            .classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::contract(format!("label {bad} out of range for {k} classes")));
        }
        let mut t = Tensor::zeros(&[labels.len(), k]);
        for (i, &l) in labels.iter().enumerate() {
            t.data_mut()[i * k + l] = 1.0;
        }
        Ok(t)
    }

    /// Appends the `which`-th embedding of `y` to `input` when conditional.
    fn with_label(&self, bound: &BoundAli, tape: &mut Tape, input: Var, y: Option<Var>, which: usize) -> Result<Var> {
        match (&self.conditioning, &bound.embeddings, y) {
            (None, _, _) => Ok(input),
            (Some(c), Some(emb), Some(y)) => {
                let e = c.networks()[which].forward(&emb[which], tape, y)?;
                tape.concat_last_axis(input, e)
            }
            _ => Err(Error::contract("conditional model needs labels")),
        }
    }

    /// `ẑ = μ(x) + σ(x) ⊙ ε`.
    pub fn encode(&self, bound: &BoundAli, tape: &mut Tape, x: Var, noise: Var, y: Option<Var>) -> Result<Var> {
        self.check_width("encode", tape.value(x), self.dim_x())?;
        let input = self.with_label(bound, tape, x, y, 0)?;
        encode_on_tape(&self.encoder, &bound.encoder, tape, input, noise)
    }

    /// `x̃ = Gx(z)`.
    pub fn decode(&self, bound: &BoundAli, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var> {
        self.check_width("decode", tape.value(z), self.dim_z())?;
        let input = self.with_label(bound, tape, z, y, 1)?;
        self.decoder.forward(&bound.decoder, tape, input)
    }

    /// Logits of `D(x, z)`, shape `[M × 1]`.
    pub fn discriminate(&self, bound: &BoundAli, tape: &mut Tape, x: Var, z: Var, y: Option<Var>) -> Result<Var> {
        self.discriminate_dropout(bound, tape, x, z, y, None)
    }

    /// [`AliModel::discriminate`] with optional `(rate, rng)` hidden-layer dropout.
    pub fn discriminate_dropout(
        &self,
        bound: &BoundAli,
        tape: &mut Tape,
        x: Var,
        z: Var,
        y: Option<Var>,
        dropout: Option<(f64, &mut Rng)>,
    ) -> Result<Var> {
        self.check_width("discriminate", tape.value(x), self.dim_x())?;
        self.check_width("discriminate", tape.value(z), self.dim_z())?;
        let pair = tape.concat_last_axis(x, z)?;
        let input = self.with_label(bound, tape, pair, y, 2)?;
        match dropout {
            Some((rate, rng)) => self.discriminator.forward_dropout(&bound.discriminator, tape, input, rate, rng),
            None => self.discriminator.forward(&bound.discriminator, tape, input),
        }
    }

    fn check_width(&self, op: &'static str, t: &Tensor, width: usize) -> Result<()> {
        if !t.is_matrix() || t.cols() != width {
            return Err(Error::shape(op, &[t.shape(), &[width]]));
        }
        Ok(())
    }

    fn label_input(&self, net: usize, input: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        match (&self.conditioning, labels) {
            (None, _) => Ok(input.clone()),
            (Some(c), Some(l)) => {
                let e = c.networks()[net].predict(&self.one_hot(l)?)?;
                input.hcat(&e)
            }
            (Some(_), None) => Err(Error::contract("conditional model needs labels")),
        }
    }

    /// Tape-free decode, `Gx(z)` or `Gx(z, y)`.
    pub fn generate(&self, z: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        self.decoder.predict(&self.label_input(1, z, labels)?)
    }

    /// Tape-free reparametrized encoder draw.
    pub fn infer(&self, x: &Tensor, labels: Option<&[usize]>, rng: &mut Rng) -> Result<Tensor> {
        Encoder::sampling(&self.encoder).encode(&self.label_input(0, x, labels)?, rng)
    }

    /// Tape-free discriminator logits.
    pub fn logits(&self, x: &Tensor, z: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        self.discriminator.predict(&self.label_input(2, &x.hcat(z)?, labels)?)
    }
}
