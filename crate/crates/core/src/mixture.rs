//! Two-dimensional Gaussian mixtures, in particular the square grid of
//! well-separated modes used as the toy data distribution.

use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels::logsumexp, Tensor};
use crate::error::{Error, Result};
use crate::nn::Rng;

pub type Point = [f64; 2];
pub type Cov = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixture {
    centroids: Vec<Point>,
    covariances: Vec<Cov>,
    weights: Vec<f64>,
}

/// Per-component quantities needed for density evaluation and sampling.
struct Component {
    mean: Point,
    /// Lower Cholesky factor `[l00, l10, l11]`.
    chol: [f64; 3],
    log_norm: f64,
}

impl Component {
    fn new(mean: Point, c: &Cov) -> Self {
        let l00 = c[0][0].sqrt();
        let l10 = c[1][0] / l00;
        let l11 = (c[1][1] - l10 * l10).sqrt();
        Component {
            mean,
            chol: [l00, l10, l11],
            log_norm: -(2.0 * std::f64::consts::PI).ln() - (l00 * l11).ln(),
        }
    }

    fn log_pdf(&self, p: Point) -> f64 {
        let [l00, l10, l11] = self.chol;
        let u0 = (p[0] - self.mean[0]) / l00;
        let u1 = (p[1] - self.mean[1] - l10 * u0) / l11;
        self.log_norm - 0.5 * (u0 * u0 + u1 * u1)
    }
}

impl GaussianMixture {
    pub fn new(centroids: Vec<Point>, covariances: Vec<Cov>, weights: Vec<f64>) -> Result<Self> {
        let k = centroids.len();
        if k == 0 || covariances.len() != k || weights.len() != k {
            return Err(Error::contract(format!(
                "mixture needs matching non-empty lists, got {} centroids, {} covariances, {} weights",
                k,
                covariances.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("mixture weights must be a simplex vector, got {weights:?}")));
        }
        for (i, c) in covariances.iter().enumerate() {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            if c[0][1] != c[1][0] || !(c[0][0] > 0.0) || !(det > 0.0) {
                return Err(Error::contract(format!(
                    "covariance {i} is not symmetric positive-definite: {c:?}"
                )));
            }
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::contract("centroids must be finite"));
        }
        Ok(GaussianMixture {
            centroids,
            covariances,
            weights,
        })
    }

    /// `side²` isotropic components with covariance `sigma² I`, equal
    /// weights, on a square grid of pitch `spacing` centred at the origin.
    ///
    /// Components are ordered row by row: index `r * side + c` sits at row
    /// `r` (second coordinate) and column `c` (first coordinate).
    pub fn grid(side: usize, spacing: f64, sigma: f64) -> Result<Self> {
        if side == 0 || !(spacing > 0.0) || !(sigma > 0.0) {
            return Err(Error::contract(format!(
                "grid mixture needs side >= 1, spacing > 0, sigma > 0; got {side}, {spacing}, {sigma}"
            )));
        }
        let offset = (side as f64 - 1.0) / 2.0;
        let mut centroids = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                centroids.push([(c as f64 - offset) * spacing, (r as f64 - offset) * spacing]);
            }
        }
        let var = sigma * sigma;
        let k = side * side;
        GaussianMixture::new(centroids, vec![[[var, 0.0], [0.0, var]]; k], vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[Point] {
        &self.centroids
    }

    pub fn covariances(&self) -> &[Cov] {
        &self.covariances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest absolute centroid coordinate, or 1 for a mixture centred on
    /// the origin. Dividing data by it puts every centroid in `[-1, 1]²`.
    pub fn standardization_scale(&self) -> f64 {
        let m = self.centroids.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// The mixture of `factor · X` for `X` drawn from `self`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f2 = factor * factor;
        GaussianMixture::new(
            self.centroids.iter().map(|c| [c[0] * factor, c[1] * factor]).collect(),
            self.covariances
                .iter()
                .map(|c| [[c[0][0] * f2, c[0][1] * f2], [c[1][0] * f2, c[1][1] * f2]])
                .collect(),
            self.weights.clone(),
        )
    }

    fn components(&self) -> Vec<Component> {
        self.centroids
            .iter()
            .zip(&self.covariances)
            .map(|(&m, c)| Component::new(m, c))
            .collect()
    }

    /// Ancestral sampling: a component index, then a Gaussian draw from it.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<(Tensor, Vec<usize>)> {
        if n == 0 {
            return Err(Error::contract("sample count must be >= 1"));
        }
        let comps = self.components();
        let pick = WeightedIndex::new(&self.weights).map_err(|e| Error::contract(e.to_string()))?;
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = pick.sample(rng);
            let e0: f64 = StandardNormal.sample(rng);
            let e1: f64 = StandardNormal.sample(rng);
            let Component { mean, chol, .. } = &comps[k];
            data.push(mean[0] + chol[0] * e0);
            data.push(mean[1] + chol[1] * e0 + chol[2] * e1);
            labels.push(k);
        }
        Ok((Tensor::matrix(n, 2, data)?, labels))
    }

    fn joint_log_terms(&self, comps: &[Component], p: Point, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            comps
                .iter()
                .zip(&self.weights)
                .map(|(c, &w)| if w > 0.0 { w.ln() + c.log_pdf(p) } else { f64::NEG_INFINITY }),
        );
    }

    /// Posterior over components given `point`.
    pub fn responsibilities(&self, point: Point) -> Vec<f64> {
        let mut terms = Vec::with_capacity(self.len());
        self.joint_log_terms(&self.components(), point, &mut terms);
        // Shift by the max and normalize directly: subtracting a log-sum-exp
        // of large magnitude would cost digits in every exponent.
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = terms.iter().map(|&t| (t - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        shifted.into_iter().map(|v| v / total).collect()
    }

    pub fn log_density(&self, point: Point) -> f64 {
        let mut terms = Vec::with_capacity(self.len());
        self.joint_log_terms(&self.components(), point, &mut terms);
        logsumexp(&terms)
    }

    /// Index of the most responsible component; ties go to the lowest index.
    pub fn assign(&self, point: Point) -> usize {
        self.assign_all(&[point])[0]
    }

    /// [`GaussianMixture::assign`] for many points.
    pub fn assign_all(&self, points: &[Point]) -> Vec<usize> {
        let comps = self.components();
        let mut terms = Vec::with_capacity(self.len());
        points
            .iter()
            .map(|&p| {
                self.joint_log_terms(&comps, p, &mut terms);
                let mut best = 0;
                for (i, &t) in terms.iter().enumerate() {
                    if t > terms[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    /// Rows of an `[n × 2]` tensor as points.
    pub fn points(samples: &Tensor) -> Result<Vec<Point>> {
        if !samples.is_matrix() || samples.cols() != 2 {
            return Err(Error::shape("mixture points", &[samples.shape(), &[2]]));
        }
        Ok(samples.data().chunks(2).map(|r| [r[0], r[1]]).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::nn::rng;

    #[test]
    fn grid_sizes_and_positions() {
        assert_eq!(GaussianMixture::grid(5, 2.0, 0.05).unwrap().len(), 25);
        let one = GaussianMixture::grid(1, 2.0, 0.05).unwrap();
        assert_eq!(one.centroids(), &[[0.0, 0.0]]);
        let four = GaussianMixture::grid(2, 2.0, 0.05).unwrap();
        let mut c = four.centroids().to_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(GaussianMixture::grid(0, 1.0, 1.0).is_err());
        assert!(GaussianMixture::grid(3, 0.0, 1.0).is_err());
        assert!(GaussianMixture::grid(3, 1.0, -1.0).is_err());
    }

    #[test]
    fn new_validates_invariants() {
        let cov = [[1.0, 0.0], [0.0, 1.0]];
        assert!(GaussianMixture::new(vec![[0.0, 0.0]], vec![cov], vec![0.9]).is_err());
        assert!(GaussianMixture::new(vec![[0.0, 0.0]; 2], vec![cov; 2], vec![1.5, -0.5]).is_err());
        let skew = [[1.0, 0.5], [0.2, 1.0]];
        assert!(GaussianMixture::new(vec![[0.0, 0.0]], vec![skew], vec![1.0]).is_err());
        let indefinite = [[1.0, 2.0], [2.0, 1.0]];
        assert!(GaussianMixture::new(vec![[0.0, 0.0]], vec![indefinite], vec![1.0]).is_err());
    }

    #[test]
    fn component_frequencies_within_binomial_bound() {
        let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
        let n = 25_000;
        let (_, labels) = mix.sample(n, &mut rng::seeded(17)).unwrap();
        let mut counts = [0usize; 25];
        labels.iter().for_each(|&l| counts[l] += 1);
        let p = 1.0 / 25.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sd, "component {k}: {c}");
        }
    }

    #[test]
    fn vanishing_sigma_samples_sit_on_centroids() {
        let mix = GaussianMixture::grid(3, 1.0, 1e-9).unwrap();
        let (x, labels) = mix.sample(200, &mut rng::seeded(1)).unwrap();
        for (row, &l) in x.data().chunks(2).zip(&labels) {
            let c = mix.centroids()[l];
            assert!((row[0] - c[0]).abs() < 1e-7 && (row[1] - c[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
        let a = mix.sample(500, &mut rng::seeded(4)).unwrap();
        let b = mix.sample(500, &mut rng::seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_point_has_even_responsibilities() {
        let mix = GaussianMixture::grid(2, 2.0, 0.5).unwrap();
        let two = GaussianMixture::new(
            mix.centroids()[..2].to_vec(),
            mix.covariances()[..2].to_vec(),
            vec![0.5, 0.5],
        )
        .unwrap();
        // Components at (-1,-1) and (1,-1): (0, y) is equidistant.
        let r = two.responsibilities([0.0, 3.0]);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn centroid_is_owned_by_its_component() {
        let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
        for (k, &c) in mix.centroids().iter().enumerate() {
            let r = mix.responsibilities(c);
            assert!(r[k] > 1.0 - 1e-6);
            assert_eq!(mix.assign(c), k);
        }
    }

    #[test]
    fn standard_gaussian_density_at_origin() {
        let mix = GaussianMixture::grid(1, 1.0, 1.0).unwrap();
        assert!((mix.log_density([0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_component_does_not_contribute() {
        let a = GaussianMixture::new(vec![[0.5, -1.0]], vec![[[2.0, 0.3], [0.3, 1.0]]], vec![1.0]).unwrap();
        let ab = GaussianMixture::new(
            vec![[0.5, -1.0], [4.0, 4.0]],
            vec![[[2.0, 0.3], [0.3, 1.0]], [[0.1, 0.0], [0.0, 0.1]]],
            vec![1.0, 0.0],
        )
        .unwrap();
        for p in [[0.0, 0.0], [4.0, 4.0], [-3.0, 2.0]] {
            assert_eq!(a.log_density(p), ab.log_density(p));
        }
        assert_eq!(ab.responsibilities([4.0, 4.0])[1], 0.0);
    }

    #[test]
    fn density_integrates_to_one() {
        // Midpoint rule over [-6, 6]^2, far beyond every component's 3-sigma box.
        let mix = GaussianMixture::new(
            vec![[-1.0, -1.0], [1.0, 0.5], [0.0, 1.5]],
            vec![
                [[0.25, 0.0], [0.0, 0.25]],
                [[0.5, 0.2], [0.2, 0.3]],
                [[0.1, -0.05], [-0.05, 0.2]],
            ],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        let n = 600;
        let h = 12.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = [-6.0 + (i as f64 + 0.5) * h, -6.0 + (j as f64 + 0.5) * h];
                total += mix.log_density(p).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn argmax_responsibility_recovers_labels() {
        let mix = GaussianMixture::grid(5, 2.0, 0.1).unwrap(); // spacing / sigma = 20
        let (x, labels) = mix.sample(20_000, &mut rng::seeded(9)).unwrap();
        let assigned = mix.assign_all(&GaussianMixture::points(&x).unwrap());
        let hits = assigned.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(hits as f64 / labels.len() as f64 > 0.999);
    }

    #[test]
    fn far_points_stay_finite() {
        let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
        for p in [[1e6, 1e6], [-1e6, 3.0], [0.0, -1e6]] {
            let ld = mix.log_density(p);
            assert!(ld.is_finite() && ld.exp() >= 0.0);
            let r = mix.responsibilities(p);
            assert!(r.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn scaling_moves_centroids_and_covariances() {
        let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
        assert_eq!(mix.standardization_scale(), 4.0);
        let s = mix.scaled(0.25).unwrap();
        assert_eq!(s.centroids()[0], [-1.0, -1.0]);
        assert!((s.covariances()[0][0][0] - 0.0125f64.powi(2)).abs() < 1e-18);
        assert_eq!(GaussianMixture::grid(1, 2.0, 0.05).unwrap().standardization_scale(), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let mix = GaussianMixture::grid(3, 1.5, 0.2).unwrap();
        let back: GaussianMixture = serde_json::from_str(&serde_json::to_string(&mix).unwrap()).unwrap();
        assert_eq!(back, mix);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn responsibilities_sum_to_one(x in -50f64..50.0, y in -50f64..50.0) {
                let mix = GaussianMixture::grid(5, 2.0, 0.05).unwrap();
                let r = mix.responsibilities([x, y]);
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(r.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
