//! Aggregate encoder occupancy of the latent space.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::pipeline::Encoder;

/// Square histogram over the first two latent coordinates. Points outside
/// `[-extent, extent]²` fall into the nearest edge bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub extent: f64,
    pub bins: usize,
    /// Row-major by second coordinate, `bins × bins`, summing to 1.
    pub mass: Vec<f64>,
}

impl Histogram2d {
    pub fn from_points(points: &Tensor, extent: f64, bins: usize) -> Result<Self> {
        if bins == 0 || extent <= 0.0 || !points.is_matrix() || points.cols() < 2 || points.rows() == 0 {
            return Err(Error::contract("histogram needs bins >= 1, extent > 0 and at least one 2D point"));
        }
        let bin = |v: f64| (((v + extent) / (2.0 * extent) * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        let mut mass = vec![0.0; bins * bins];
        let w = 1.0 / points.rows() as f64;
        for i in 0..points.rows() {
            mass[bin(points.at(i, 1)) * bins + bin(points.at(i, 0))] += w;
        }
        Ok(Histogram2d { extent, bins, mass })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentOccupancy {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Row-major `dim_z × dim_z`, normalized by `n - 1`.
    pub covariance: Vec<f64>,
    /// Present when `dim_z >= 2`.
    pub histogram: Option<Histogram2d>,
    /// `‖mean‖ + ‖cov - I‖_F`.
    pub moment_distance: f64,
}

pub const MIN_OCCUPANCY_SAMPLES: usize = 100;

/// `‖mean‖₂ + ‖cov - I‖_F` for a row-major covariance.
pub fn moment_distance(mean: &[f64], covariance: &[f64]) -> f64 {
    let d = mean.len();
    let m = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = covariance
        .iter()
        .enumerate()
        .map(|(k, v)| (v - if k / d == k % d { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        .sqrt();
    m + c
}

/// Moments and histogram of one encoder draw per data row.
pub fn latent_occupancy(encoder: Encoder<'_>, data: &Tensor, rng: &mut Rng, extent: f64, bins: usize) -> Result<LatentOccupancy> {
    if data.rows() < MIN_OCCUPANCY_SAMPLES {
        return Err(Error::contract(format!(
            "latent occupancy needs at least {MIN_OCCUPANCY_SAMPLES} rows, got {}",
            data.rows()
        )));
    }
    let z = encoder.encode(data, rng)?;
    let (n, d) = (z.rows(), z.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut covariance = vec![0.0; d * d];
    for i in 0..n {
        let r = z.row(i);
        for a in 0..d {
            for b in 0..d {
                covariance[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    covariance.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let histogram = if d >= 2 {
        Some(Histogram2d::from_points(&z, extent, bins)?)
    } else {
        None
    };
    Ok(LatentOccupancy {
        n,
        moment_distance: moment_distance(&mean, &covariance),
        mean,
        covariance,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{rng, Head, Layer, Mlp};

    fn constant_encoder(mu: [f64; 2]) -> Mlp {
        Mlp::from_layers(
            "encoder",
            vec![Layer {
                weight: Tensor::zeros(&[2, 4]),
                bias: Tensor::vector(vec![mu[0], mu[1], -7.0, -7.0]).unwrap(),
            }],
            Head::SplitGaussian,
            0.02,
        )
        .unwrap()
    }

    fn identity() -> Mlp {
        Mlp::from_layers(
            "encoder",
            vec![Layer {
                weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
            }],
            Head::Linear,
            0.02,
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_codes_are_close_to_prior() {
        let z = rng::standard_normal(&[10_000, 2], &mut rng::seeded(1));
        let enc = identity();
        let occ = latent_occupancy(Encoder::sampling(&enc), &z, &mut rng::seeded(2), 4.0, 40).unwrap();
        assert!(occ.moment_distance < 0.1, "{}", occ.moment_distance);
        let h = occ.histogram.unwrap();
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_encoder_has_degenerate_occupancy() {
        let mu = [0.6, -0.8];
        let enc = constant_encoder(mu);
        let x = rng::standard_normal(&[1000, 2], &mut rng::seeded(3));
        let occ = latent_occupancy(Encoder::sampling(&enc), &x, &mut rng::seeded(4), 4.0, 20).unwrap();
        assert!(occ.covariance.iter().all(|c| c.abs() < 1e-5));
        assert!((occ.moment_distance - (1.0 + 2f64.sqrt())).abs() < 1e-4, "{}", occ.moment_distance);
    }

    #[test]
    fn histogram_clamps_outliers_into_edge_bins() {
        let pts = Tensor::from_rows(&[vec![-100.0, -100.0], vec![100.0, 100.0], vec![0.1, 0.1]]).unwrap();
        let h = Histogram2d::from_points(&pts, 1.0, 4).unwrap();
        assert!((h.mass[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.mass[15] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.mass[2 * 4 + 2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_rows_are_rejected() {
        let enc = identity();
        let x = Tensor::zeros(&[99, 2]);
        assert!(latent_occupancy(Encoder::sampling(&enc), &x, &mut rng::seeded(5), 4.0, 10).is_err());
    }

    #[test]
    fn moment_distance_of_prior_moments_is_zero() {
        assert_eq!(moment_distance(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]), 0.0);
        assert!((moment_distance(&[3.0, 4.0], &[1.0, 0.0, 0.0, 1.0]) - 5.0).abs() < 1e-15);
    }
}
