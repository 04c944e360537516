//! Exact computations on tabular joints over `(x, z)` cells: the optimal
//! discriminator, the value function, and the Jensen-Shannon divergence.

use std::f64::consts::LN_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{rng, Rng};

const MASS_TOLERANCE: f64 = 1e-12;

/// Probability table over a `rows × cols` grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || mass.len() != rows * cols {
            return Err(Error::contract(format!("joint of {} cells does not fill {rows}×{cols}", mass.len())));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::contract("joint masses must be finite and nonnegative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::contract(format!("joint mass sums to {total}, not 1")));
        }
        Ok(DiscreteJoint { rows, cols, mass })
    }

    /// Random joint with exponential weights; each cell is zero with
    /// probability `zero_fraction`.
    pub fn random(rows: usize, cols: usize, zero_fraction: f64, rng: &mut Rng) -> Result<Self> {
        let mut w: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if rng.random::<f64>() < zero_fraction {
                    0.0
                } else {
                    -(1.0 - rng.random::<f64>()).ln()
                }
            })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        DiscreteJoint::new(rows, cols, w)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn check_pair(&self, other: &DiscreteJoint) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::shape("discrete_joint", &[&[self.rows, self.cols], &[other.rows, other.cols]]));
        }
        Ok(())
    }
}

/// Discriminator output per cell. `None` marks cells where neither joint
/// has mass, on which any output is optimal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorTable {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Option<f64>>,
}

impl DiscriminatorTable {
    pub fn excluded_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// `D*(cell) = q / (q + p)`.
pub fn optimal_discriminator(q: &DiscreteJoint, p: &DiscreteJoint) -> Result<DiscriminatorTable> {
    q.check_pair(p)?;
    let values = q
        .mass
        .iter()
        .zip(&p.mass)
        .map(|(&a, &b)| if a + b > 0.0 { Some(a / (a + b)) } else { None })
        .collect();
    Ok(DiscriminatorTable {
        rows: q.rows,
        cols: q.cols,
        values,
    })
}

/// `Σ q log D + Σ p log(1 - D)` with `0 · log 0 = 0`.
///
/// Every defined `D` must lie in `[0, 1]`, and a cell only errors when a
/// term with positive weight needs `log 0`. Undefined cells must carry no mass.
pub fn value_at(q: &DiscreteJoint, p: &DiscreteJoint, d: &DiscriminatorTable) -> Result<f64> {
    q.check_pair(p)?;
    if (d.rows, d.cols) != (q.rows, q.cols) || d.values.len() != q.mass.len() {
        return Err(Error::shape("value_at", &[&[q.rows, q.cols], &[d.rows, d.cols]]));
    }
    let mut v = 0.0;
    for (i, ((&a, &b), dv)) in q.mass.iter().zip(&p.mass).zip(&d.values).enumerate() {
        let Some(dv) = *dv else {
            if a + b > 0.0 {
                return Err(Error::Domain {
                    op: "value_at",
                    detail: format!("cell {i} has mass but no discriminator value"),
                });
            }
            continue;
        };
        let bad = !(0.0..=1.0).contains(&dv) || (a > 0.0 && dv == 0.0) || (b > 0.0 && dv == 1.0);
        if bad {
            return Err(Error::Domain {
                op: "value_at",
                detail: format!("D = {dv} at cell {i} with q = {a}, p = {b}"),
            });
        }
        if a > 0.0 {
            v += a * dv.ln();
        }
        if b > 0.0 {
            v += b * (-dv).ln_1p();
        }
    }
    Ok(v)
}

/// `KL(a ‖ m)` with `m = (a + b) / 2`, skipping cells where `a = 0`.
fn kl_to_midpoint(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, &y)| x * (2.0 * x / (x + y)).ln())
        .sum()
}

/// `½ KL(q ‖ m) + ½ KL(p ‖ m)`, `m = (q + p) / 2`.
pub fn jsd_discrete(q: &DiscreteJoint, p: &DiscreteJoint) -> Result<f64> {
    q.check_pair(p)?;
    Ok(0.5 * kl_to_midpoint(&q.mass, &p.mass) + 0.5 * kl_to_midpoint(&p.mass, &q.mass))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub joints: usize,
    /// Grid sides are drawn uniformly from `1..=max_side`.
    pub max_side: usize,
    pub perturbations: usize,
    pub zero_fraction: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            joints: 100,
            max_side: 16,
            perturbations: 100,
            zero_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    /// Largest violation seen; zero when the check passed everywhere.
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config: OracleConfig,
    pub checks: Vec<OracleCheck>,
    /// Cells with no mass under either joint, summed over all joints.
    pub excluded_cells: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Perturbs every defined cell of `d` by up to `±0.5` in logit space.
pub fn perturb(d: &DiscriminatorTable, rng: &mut Rng) -> DiscriminatorTable {
    let values = d
        .values
        .iter()
        .map(|v| {
            v.map(|v| {
                let l = (v.clamp(1e-9, 1.0 - 1e-9) / (1.0 - v.clamp(1e-9, 1.0 - 1e-9))).ln();
                let l = l + rng.random_range(-0.5..0.5);
                1.0 / (1.0 + (-l).exp())
            })
        })
        .collect();
    DiscriminatorTable {
        rows: d.rows,
        cols: d.cols,
        values,
    }
}

/// Checks the optimal-discriminator identities on random joints:
///
/// * `D*` beats every perturbed table in value,
/// * `V(D*) = -log 4 + 2 JSD` within `1e-10`,
/// * `V(D*) = -log 4` and `JSD = 0` when both joints are equal,
/// * `0 ≤ JSD ≤ log 2` and JSD is symmetric.
pub fn oracle_report(config: OracleConfig) -> Result<OracleReport> {
    if config.joints == 0 || config.max_side == 0 {
        return Err(Error::contract("oracle needs at least one joint of side >= 1"));
    }
    let mut rng = rng::seeded(config.seed);
    let mut worst = [0.0f64; 4];
    let mut excluded = 0;
    for _ in 0..config.joints {
        let rows = rng.random_range(1..=config.max_side);
        let cols = rng.random_range(1..=config.max_side);
        let q = DiscreteJoint::random(rows, cols, config.zero_fraction, &mut rng)?;
        let p = DiscreteJoint::random(rows, cols, config.zero_fraction, &mut rng)?;
        let d = optimal_discriminator(&q, &p)?;
        excluded += d.excluded_cells();
        let best = value_at(&q, &p, &d)?;
        for _ in 0..config.perturbations {
            let gap = value_at(&q, &p, &perturb(&d, &mut rng))? - best;
            worst[0] = worst[0].max(gap.max(0.0));
        }
        let jsd = jsd_discrete(&q, &p)?;
        worst[1] = worst[1].max((best - (-4f64.ln() + 2.0 * jsd)).abs());
        let same = value_at(&q, &q, &optimal_discriminator(&q, &q)?)?;
        worst[2] = worst[2].max((same + 4f64.ln()).abs()).max(jsd_discrete(&q, &q)?.abs());
        let range_gap = (-jsd).max(jsd - LN_2).max(0.0);
        worst[3] = worst[3].max(range_gap).max((jsd - jsd_discrete(&p, &q)?).abs());
    }
    let names = ["optimal_beats_perturbed", "value_equals_jsd_identity", "equal_joints_give_minus_log4", "jsd_bounded_and_symmetric"];
    let tolerances = [0.0, 1e-10, 1e-12, 1e-12];
    let checks = names
        .iter()
        .zip(worst)
        .zip(tolerances)
        .map(|((n, w), t)| OracleCheck {
            name: n.to_string(),
            passed: w <= t,
            worst: w,
        })
        .collect();
    Ok(OracleReport {
        config,
        checks,
        excluded_cells: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(m: &[f64]) -> DiscreteJoint {
        DiscreteJoint::new(1, m.len(), m.to_vec()).unwrap()
    }

    #[test]
    fn equal_joints_give_one_half() {
        let q = DiscreteJoint::random(4, 5, 0.0, &mut rng::seeded(1)).unwrap();
        let d = optimal_discriminator(&q, &q).unwrap();
        assert!(d.values.iter().all(|v| *v == Some(0.5)));
    }

    #[test]
    fn single_cell_ratio() {
        let q = joint(&[0.2, 0.8]);
        let p = joint(&[0.1, 0.9]);
        let d = optimal_discriminator(&q, &p).unwrap();
        assert!((d.values[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn both_zero_cells_are_excluded() {
        let q = joint(&[0.0, 0.5, 0.5]);
        let p = joint(&[0.0, 1.0, 0.0]);
        let d = optimal_discriminator(&q, &p).unwrap();
        assert_eq!(d.values[0], None);
        assert_eq!(d.values[2], Some(1.0));
        assert_eq!(d.excluded_cells(), 1);
        assert!(value_at(&q, &p, &d).unwrap().is_finite());
    }

    #[test]
    fn constant_half_gives_minus_log4() {
        let mut r = rng::seeded(2);
        for _ in 0..10 {
            let q = DiscreteJoint::random(3, 7, 0.2, &mut r).unwrap();
            let p = DiscreteJoint::random(3, 7, 0.2, &mut r).unwrap();
            let d = DiscriminatorTable {
                rows: 3,
                cols: 7,
                values: vec![Some(0.5); 21],
            };
            assert!((value_at(&q, &p, &d).unwrap() + 4f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_values_are_domain_errors() {
        let q = joint(&[0.5, 0.5]);
        let p = joint(&[0.5, 0.5]);
        let d = DiscriminatorTable {
            rows: 1,
            cols: 2,
            values: vec![Some(1.0), Some(0.5)],
        };
        assert!(matches!(value_at(&q, &p, &d), Err(Error::Domain { .. })));
        let d = DiscriminatorTable {
            rows: 1,
            cols: 2,
            values: vec![None, Some(0.5)],
        };
        assert!(matches!(value_at(&q, &p, &d), Err(Error::Domain { .. })));
    }

    #[test]
    fn jsd_limits() {
        let q = joint(&[0.3, 0.7]);
        assert_eq!(jsd_discrete(&q, &q).unwrap(), 0.0);
        let a = joint(&[1.0, 0.0]);
        let b = joint(&[0.0, 1.0]);
        assert!((jsd_discrete(&a, &b).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn jsd_half_against_point_mass() {
        // m = (0.75, 0.25): ½[0.5 ln(0.5/0.75) + 0.5 ln(0.5/0.25)] + ½[ln(1/0.75)]
        let q = joint(&[0.5, 0.5]);
        let p = joint(&[1.0, 0.0]);
        let expect = 0.5 * (0.5 * (0.5f64 / 0.75).ln() + 0.5 * 2f64.ln()) + 0.5 * (1.0f64 / 0.75).ln();
        assert!((jsd_discrete(&q, &p).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn invalid_joints_are_rejected() {
        assert!(DiscreteJoint::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(1, 2, vec![-0.1, 1.1]).is_err());
        assert!(DiscreteJoint::new(2, 2, vec![0.5, 0.5]).is_err());
        assert!(jsd_discrete(&joint(&[1.0]), &joint(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn oracle_passes_on_default_config() {
        let r = oracle_report(OracleConfig {
            joints: 20,
            ..OracleConfig::default()
        })
        .unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checks.len(), 4);
    }
}
