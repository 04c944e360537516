//! Reconstructions, latent interpolation and encoder/decoder cycle errors.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Mlp, Rng};
use crate::pipeline::{decode_mean, Encoder};
use crate::train::LatentPrior;

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub x_hat: Tensor,
    /// Mean over rows of `‖x - x̂‖²`.
    pub mse: f64,
}

fn mean_sq_dist(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || !a.is_matrix() || a.rows() == 0 {
        return Err(Error::shape("mean_sq_dist", &[a.shape(), b.shape()]));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.rows() as f64)
}

/// Encodes each row once, then decodes deterministically.
pub fn reconstruct(encoder: Encoder<'_>, decoder: &Mlp, x: &Tensor, rng: &mut Rng) -> Result<Reconstruction> {
    let z = encoder.encode(x, rng)?;
    let x_hat = decode_mean(decoder, &z)?;
    let mse = mean_sq_dist(x, &x_hat)?;
    Ok(Reconstruction { x_hat, mse })
}

/// Decodes `steps` evenly spaced points on the segment between the mean
/// codes of `x1` and `x2`, endpoints included.
pub fn latent_interpolate(encoder: &Mlp, decoder: &Mlp, x1: &[f64], x2: &[f64], steps: usize) -> Result<Tensor> {
    if steps < 2 {
        return Err(Error::contract("interpolation needs at least 2 steps"));
    }
    let ends = Tensor::from_rows(&[x1.to_vec(), x2.to_vec()])?;
    let z = Encoder::mean_only(encoder).mean(&ends)?;
    let (a, b) = (z.row(0), z.row(1));
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            a.iter().zip(b).map(|(u, v)| (1.0 - t) * u + t * v).collect()
        })
        .collect();
    decode_mean(decoder, &Tensor::from_rows(&rows)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    /// `E‖x - Gx(Gz(x))‖²` over the data.
    pub x_cycle_mse: f64,
    /// `E‖z - Gz(Gx(z))‖²` over as many prior draws as data rows.
    pub z_cycle_mse: f64,
}

pub fn invertibility_diagnostic(
    encoder: Encoder<'_>,
    decoder: &Mlp,
    data: &Tensor,
    prior: &dyn LatentPrior,
    rng: &mut Rng,
) -> Result<InvertibilityReport> {
    let x_cycle_mse = reconstruct(encoder, decoder, data, rng)?.mse;
    let z = prior.sample(data.rows(), encoder.dim_z(), rng);
    let back = encoder.encode(&decode_mean(decoder, &z)?, rng)?;
    Ok(InvertibilityReport {
        x_cycle_mse,
        z_cycle_mse: mean_sq_dist(&z, &back)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{rng, Head, InitConfig, Layer};
    use crate::train::StandardNormal;

    fn linear(role: &str, w: Vec<f64>, bias: Vec<f64>, head: Head) -> Mlp {
        let cols = bias.len();
        Mlp::from_layers(
            role,
            vec![Layer {
                weight: Tensor::matrix(w.len() / cols, cols, w).unwrap(),
                bias: Tensor::vector(bias).unwrap(),
            }],
            head,
            0.02,
        )
        .unwrap()
    }

    /// Split-gaussian identity encoder with `log σ = -7`.
    fn identity_encoder() -> Mlp {
        linear(
            "encoder",
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, -7.0, -7.0],
            Head::SplitGaussian,
        )
    }

    fn identity_decoder() -> Mlp {
        linear("decoder", vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], Head::Linear)
    }

    #[test]
    fn identity_pipeline_reconstructs() {
        let x = rng::standard_normal(&[500, 2], &mut rng::seeded(1));
        let enc = identity_encoder();
        let r = reconstruct(Encoder::sampling(&enc), &identity_decoder(), &x, &mut rng::seeded(2)).unwrap();
        assert!(r.mse < 1e-4, "{}", r.mse);
    }

    #[test]
    fn zero_decoder_mse_is_second_moment() {
        let x = rng::standard_normal(&[300, 2], &mut rng::seeded(3));
        let enc = identity_encoder();
        let dec = Mlp::zeros("decoder", &[2, 2], Head::Linear, 0.02).unwrap();
        let r = reconstruct(Encoder::sampling(&enc), &dec, &x, &mut rng::seeded(4)).unwrap();
        let m2 = x.data().iter().map(|v| v * v).sum::<f64>() / 300.0;
        assert!((r.mse - m2).abs() < 1e-12);
    }

    #[test]
    fn random_encoder_never_produces_nan() {
        let init = InitConfig {
            std: 3.0,
            leaky_slope: 0.2,
        };
        let enc = Mlp::init("encoder", &[2, 16, 4], Head::SplitGaussian, init, &mut rng::seeded(5)).unwrap();
        let dec = Mlp::init("decoder", &[2, 16, 2], Head::Linear, init, &mut rng::seeded(6)).unwrap();
        let x = rng::standard_normal(&[200, 2], &mut rng::seeded(7)).map(|v| v * 100.0);
        let r = reconstruct(Encoder::sampling(&enc), &dec, &x, &mut rng::seeded(8)).unwrap();
        assert!(r.x_hat.is_finite() && r.mse.is_finite());
    }

    #[test]
    fn two_step_interpolation_gives_endpoints() {
        let init = InitConfig {
            std: 0.5,
            leaky_slope: 0.2,
        };
        let enc = Mlp::init("encoder", &[2, 8, 4], Head::SplitGaussian, init, &mut rng::seeded(9)).unwrap();
        let dec = Mlp::init("decoder", &[2, 8, 2], Head::Linear, init, &mut rng::seeded(10)).unwrap();
        let (x1, x2) = ([0.3, -0.4], [-1.0, 0.8]);
        let path = latent_interpolate(&enc, &dec, &x1, &x2, 2).unwrap();
        let ends = Tensor::from_rows(&[x1.to_vec(), x2.to_vec()]).unwrap();
        let direct = dec.predict(&Encoder::mean_only(&enc).mean(&ends).unwrap()).unwrap();
        assert_eq!(path, direct);
        for steps in [2, 3, 7, 20] {
            assert_eq!(latent_interpolate(&enc, &dec, &x1, &x2, steps).unwrap().rows(), steps);
        }
        let same = latent_interpolate(&enc, &dec, &x1, &x1, 5).unwrap();
        assert_eq!(same.row(2), direct.row(0));
        assert!(latent_interpolate(&enc, &dec, &x1, &x2, 1).is_err());
    }

    #[test]
    fn inverse_linear_maps_have_no_cycle_error() {
        // A = [[2, 1], [0, 1]] and its inverse [[0.5, -0.5], [0, 1]], row-vector convention.
        let enc = linear(
            "encoder",
            vec![0.5, -0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, -7.0, -7.0],
            Head::SplitGaussian,
        );
        let det = linear("encoder", vec![0.5, -0.5, 0.0, 1.0], vec![0.0, 0.0], Head::Linear);
        let dec = linear("decoder", vec![2.0, 1.0, 0.0, 1.0], vec![0.0, 0.0], Head::Linear);
        let x = rng::standard_normal(&[400, 2], &mut rng::seeded(11));
        let r = invertibility_diagnostic(Encoder::mean_only(&enc), &dec, &x, &StandardNormal, &mut rng::seeded(12)).unwrap();
        assert!(r.x_cycle_mse < 1e-10 && r.z_cycle_mse < 1e-10, "{r:?}");
        let r = invertibility_diagnostic(Encoder::sampling(&det), &dec, &x, &StandardNormal, &mut rng::seeded(12)).unwrap();
        assert!(r.x_cycle_mse < 1e-10 && r.z_cycle_mse < 1e-10, "{r:?}");
    }

    #[test]
    fn untrained_networks_have_large_cycle_error() {
        let enc = Mlp::init("encoder", &[2, 64, 64, 4], Head::SplitGaussian, InitConfig::default(), &mut rng::seeded(13)).unwrap();
        let dec = Mlp::init("decoder", &[2, 64, 64, 2], Head::Linear, InitConfig::default(), &mut rng::seeded(14)).unwrap();
        let x = rng::standard_normal(&[2000, 2], &mut rng::seeded(15));
        let r = invertibility_diagnostic(Encoder::sampling(&enc), &dec, &x, &StandardNormal, &mut rng::seeded(16)).unwrap();
        // prior variance per code is 1, so E‖z‖² = 2
        assert!(r.z_cycle_mse > 2.0 && r.x_cycle_mse > 1.5, "{r:?}");
    }
}
