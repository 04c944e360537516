//! How many mixture components a sampler reaches.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// Per-component counts of samples assigned by maximum responsibility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCoverageReport {
    pub n_samples: usize,
    pub counts: Vec<usize>,
    /// Components with at least one sample.
    pub covered: usize,
    pub dropped: usize,
}

pub fn mode_coverage(mix: &GaussianMixture, samples: &Tensor) -> Result<ModeCoverageReport> {
    let points = GaussianMixture::points(samples)?;
    if points.is_empty() {
        return Err(Error::contract("mode coverage needs at least one sample"));
    }
    let mut counts = vec![0; mix.len()];
    for k in mix.assign_all(&points) {
        counts[k] += 1;
    }
    let covered = counts.iter().filter(|&&c| c > 0).count();
    Ok(ModeCoverageReport {
        n_samples: points.len(),
        dropped: counts.len() - covered,
        counts,
        covered,
    })
}

/// Spread of covered-mode counts over several runs. `std` uses `n - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

impl CoverageSummary {
    pub fn from_covered(covered: &[usize]) -> Result<Self> {
        let n = covered.len();
        if n == 0 {
            return Err(Error::contract("coverage summary needs at least one run"));
        }
        let mean = covered.iter().sum::<usize>() as f64 / n as f64;
        let std = if n > 1 {
            (covered.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(CoverageSummary {
            runs: n,
            mean,
            std,
            min: *covered.iter().min().unwrap_or(&0),
            max: *covered.iter().max().unwrap_or(&0),
        })
    }

    pub fn from_reports(reports: &[ModeCoverageReport]) -> Result<Self> {
        CoverageSummary::from_covered(&reports.iter().map(|r| r.covered).collect::<Vec<_>>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GaussianMixture {
        GaussianMixture::grid(5, 2.0, 0.05).unwrap()
    }

    fn from_points(p: &[[f64; 2]]) -> Tensor {
        Tensor::matrix(p.len(), 2, p.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn centroids_cover_everything() {
        let mix = grid();
        let r = mode_coverage(&mix, &from_points(mix.centroids())).unwrap();
        assert_eq!((r.covered, r.dropped, r.n_samples), (25, 0, 25));
        assert!(r.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn single_point_covers_one() {
        let mix = grid();
        let c = mix.centroids()[7];
        let r = mode_coverage(&mix, &from_points(&[c; 40])).unwrap();
        assert_eq!((r.covered, r.dropped), (1, 24));
        assert_eq!(r.counts[7], 40);
        assert_eq!(r.counts.iter().sum::<usize>(), 40);
    }

    #[test]
    fn permutation_invariant() {
        let mix = grid();
        let pts: Vec<[f64; 2]> = (0..30).map(|i| [(i as f64 * 0.37).sin() * 4.0, (i as f64 * 0.11).cos() * 4.0]).collect();
        let mut rev = pts.clone();
        rev.reverse();
        assert_eq!(mode_coverage(&mix, &from_points(&pts)).unwrap(), mode_coverage(&mix, &from_points(&rev)).unwrap());
    }

    #[test]
    fn non_planar_samples_are_rejected() {
        assert!(mode_coverage(&grid(), &Tensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn json_keys_are_exact() {
        let r = mode_coverage(&grid(), &from_points(&[[0.0, 0.0]])).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["counts", "covered", "dropped", "n_samples"]);
    }

    #[test]
    fn summary_statistics() {
        let s = CoverageSummary::from_covered(&[8, 25, 12, 15]).unwrap();
        assert_eq!((s.min, s.max, s.runs), (8, 25, 4));
        assert!((s.mean - 15.0).abs() < 1e-12);
        // deviations -7, 10, -3, 0: squares sum to 158
        assert!((s.std - (158.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(CoverageSummary::from_covered(&[3]).unwrap().std, 0.0);
    }
}
