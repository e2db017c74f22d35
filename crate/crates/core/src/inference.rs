//! Bootstrap lower confidence bands for breakdown frontiers.
//!
//! The frontier is only directionally differentiable, so the bootstrap
//! distribution is built from a numerical derivative: the estimate is pushed a
//! step `eps_scale * (theta* - theta_hat)` along each bootstrap direction and
//! the resulting change is rescaled by `sqrt(N) / eps_scale`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_cells_with, ThinCellPolicy};
use crate::frontier::{breakdown_frontier, check_grid, frontier_values, FrontierCurve};
use crate::model::{Dataset, FrontierQuery, ObservedCell, ObservedDistribution};

/// Floor applied to the bootstrap standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Bounds kept between a perturbed propensity and `{0, 1}`.
const PROPENSITY_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    #[default]
    ConstantOne,
    BootstrapSd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Number of bootstrap draws.
    pub b: usize,
    pub alpha: f64,
    /// `eps_N * sqrt(N)`.
    pub eps_scale: f64,
    pub sigma_mode: SigmaMode,
    pub seed: u64,
    #[serde(default)]
    pub thin_cells: ThinCellPolicy,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            b: 999,
            alpha: 0.05,
            eps_scale: 2.0,
            sigma_mode: SigmaMode::ConstantOne,
            seed: 0,
            thin_cells: ThinCellPolicy::Abort,
        }
    }
}

impl InferenceConfig {
    pub fn check(&self) -> Result<()> {
        if self.b < 1 {
            return Err(Error::InvalidParameter(
                "bootstrap draw count must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.eps_scale > 0.0 && self.eps_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps_scale = {} must be positive",
                self.eps_scale
            )));
        }
        Ok(())
    }
}

/// RNG for bootstrap replicate `b`.
pub fn replicate_rng(seed: u64, b: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Nonparametric (pairs) bootstrap draw of the cell probabilities.
pub fn bootstrap_theta<R: Rng>(
    data: &Dataset,
    rng: &mut R,
    policy: ThinCellPolicy,
) -> Result<ObservedDistribution> {
    let n = data.len();
    let records = data.records();
    let resampled = (0..n).map(|_| records[rng.gen_range(0..n)]).collect();
    Ok(estimate_cells_with(&data.with_records(resampled), policy)?.dist)
}

/// `theta_hat + step * (theta_star - theta_hat)`, projected back onto valid
/// parameters. The flag reports whether any projection was needed.
///
/// Cells absent from `theta_star` are treated as having weight zero there,
/// with their conditional probabilities unchanged.
pub fn perturb(
    theta_hat: &ObservedDistribution,
    theta_star: &ObservedDistribution,
    step: f64,
) -> (ObservedDistribution, bool) {
    let mut clamped = false;
    let mut out = theta_hat.clone();
    for (key, cell) in out.cells.iter_mut() {
        let star = theta_star
            .cells
            .get(key)
            .cloned()
            .unwrap_or_else(|| ObservedCell {
                weight: 0.0,
                ..cell.clone()
            });
        let hat = cell.clone();
        for z in 0..2 {
            let mut slice = [0.0; 4];
            for k in 0..4 {
                let v = hat.joint[z][k] + step * (star.joint[z][k] - hat.joint[z][k]);
                if !(0.0..=1.0).contains(&v) {
                    clamped = true;
                }
                slice[k] = v.clamp(0.0, 1.0);
            }
            let total: f64 = slice.iter().sum();
            if total > 0.0 {
                if (total - 1.0).abs() > 1e-12 {
                    clamped = true;
                }
                for v in &mut slice {
                    *v /= total;
                }
            } else {
                clamped = true;
                slice = hat.joint[z];
            }
            cell.joint[z] = slice;
        }
        let p = hat.propensity + step * (star.propensity - hat.propensity);
        if !(PROPENSITY_GUARD..=1.0 - PROPENSITY_GUARD).contains(&p) {
            clamped = true;
        }
        cell.propensity = p.clamp(PROPENSITY_GUARD, 1.0 - PROPENSITY_GUARD);
        let w = hat.weight + step * (star.weight - hat.weight);
        if w < 0.0 {
            clamped = true;
        }
        cell.weight = w.max(0.0);
    }
    let total: f64 = out.cells.values().map(|c| c.weight).sum();
    if total > 0.0 {
        if (total - 1.0).abs() > 1e-12 {
            clamped = true;
        }
        for cell in out.cells.values_mut() {
            cell.weight /= total;
        }
    } else {
        clamped = true;
        out = theta_hat.clone();
    }
    (out, clamped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Derivative {
    pub values: Vec<f64>,
    /// Whether the perturbed parameter had to be projected.
    pub clamped: bool,
}

/// Numerical directional derivative of the clamped frontier at `theta_hat`
/// in the direction `sqrt(N) (theta_star - theta_hat)`.
pub fn numerical_derivative(
    theta_hat: &ObservedDistribution,
    theta_star: &ObservedDistribution,
    n: usize,
    eps_scale: f64,
    q: FrontierQuery,
    grid: &[f64],
) -> Derivative {
    let base = frontier_values(theta_hat, grid, q);
    numerical_derivative_from(theta_hat, &base, theta_star, n, eps_scale, q, grid)
}

fn numerical_derivative_from(
    theta_hat: &ObservedDistribution,
    base: &[f64],
    theta_star: &ObservedDistribution,
    n: usize,
    eps_scale: f64,
    q: FrontierQuery,
    grid: &[f64],
) -> Derivative {
    let (moved, clamped) = perturb(theta_hat, theta_star, eps_scale);
    let scale = (n as f64).sqrt() / eps_scale;
    let values = frontier_values(&moved, grid, q)
        .into_iter()
        .zip(base)
        .map(|(v, b)| (v - b) * scale)
        .collect();
    Derivative { values, clamped }
}

/// Smallest order statistic `S_(k)` with `k >= ceil((1 - alpha) B)`.
pub fn upper_quantile(stats: &[f64], alpha: f64) -> f64 {
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let k = ((1.0 - alpha) * b as f64 - 1e-9)
        .ceil()
        .clamp(1.0, b as f64) as usize;
    sorted[k - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandDiagnostics {
    pub z_hat_nonnegative: bool,
    /// Bootstrap draws whose perturbed parameter was projected.
    pub clamped_draws: usize,
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandResult {
    /// Frontier estimate with `band_lo`, `band_lo_raw` and `sigma` filled.
    pub curve: FrontierCurve,
    pub z_hat: f64,
    pub sigma: Vec<f64>,
    pub n: usize,
    pub diagnostics: BandDiagnostics,
}

/// Frontier estimate and uniform lower confidence band.
pub fn uniform_lower_band(
    data: &Dataset,
    grid: &[f64],
    q: FrontierQuery,
    cfg: &InferenceConfig,
) -> Result<BandResult> {
    cfg.check()?;
    check_grid(grid)?;
    let theta_hat = estimate_cells_with(data, cfg.thin_cells)?.dist;
    let curve = breakdown_frontier(&theta_hat, grid, q, false)?;
    band_around(data, &theta_hat, curve, q, cfg)
}

pub(crate) fn band_around(
    data: &Dataset,
    theta_hat: &ObservedDistribution,
    mut curve: FrontierCurve,
    q: FrontierQuery,
    cfg: &InferenceConfig,
) -> Result<BandResult> {
    let n = data.len();
    let grid = curve.grid.clone();
    let draws: Vec<Derivative> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b as u64);
            let star = bootstrap_theta(data, &mut rng, cfg.thin_cells)?;
            Ok(numerical_derivative_from(
                theta_hat,
                &curve.values,
                &star,
                n,
                cfg.eps_scale,
                q,
                &grid,
            ))
        })
        .collect::<Result<_>>()?;

    let sigma: Vec<f64> = match cfg.sigma_mode {
        SigmaMode::ConstantOne => vec![1.0; grid.len()],
        SigmaMode::BootstrapSd => (0..grid.len())
            .map(|i| {
                let b = draws.len() as f64;
                let mean = draws.iter().map(|d| d.values[i]).sum::<f64>() / b;
                let ss = draws
                    .iter()
                    .map(|d| (d.values[i] - mean).powi(2))
                    .sum::<f64>();
                let sd = if draws.len() > 1 {
                    (ss / (b - 1.0)).sqrt()
                } else {
                    0.0
                };
                sd.max(SIGMA_FLOOR)
            })
            .collect(),
    };
    let stats: Vec<f64> = draws
        .iter()
        .map(|d| {
            d.values
                .iter()
                .zip(&sigma)
                .map(|(v, s)| v / s)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let z_hat = upper_quantile(&stats, cfg.alpha);
    let root_n = (n as f64).sqrt();
    let raw: Vec<f64> = curve
        .values
        .iter()
        .zip(&sigma)
        .map(|(v, s)| v - z_hat * s / root_n)
        .collect();
    curve.band_lo = Some(raw.iter().map(|v| v.clamp(0.0, 1.0)).collect());
    curve.band_lo_raw = Some(raw);
    curve.sigma = Some(sigma.clone());
    Ok(BandResult {
        curve,
        z_hat,
        sigma,
        n,
        diagnostics: BandDiagnostics {
            z_hat_nonnegative: z_hat >= 0.0,
            clamped_draws: draws.iter().filter(|d| d.clamped).count(),
            draws: draws.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::estimate_cells;
    use crate::frontier::linspace;
    use crate::simulate::{draw_sample, reference_dgp};

    fn late0() -> FrontierQuery {
        FrontierQuery::late(0.0).unwrap()
    }

    #[test]
    fn quantile_type() {
        let s = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(upper_quantile(&s, 0.5), 2.0);
        assert_eq!(upper_quantile(&s, 0.05), 4.0);
        assert_eq!(upper_quantile(&s, 0.75), 1.0);
        assert_eq!(upper_quantile(&[7.0], 0.05), 7.0);
        // 0.95 * 20 = 19 must not round up to 20
        let twenty: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(upper_quantile(&twenty, 0.05), 19.0);
    }

    #[test]
    fn zero_direction() {
        let dist = reference_dgp();
        let grid = linspace(0.0, 0.15, 10);
        let d = numerical_derivative(&dist, &dist, 1000, 2.0, late0(), &grid);
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert!(!d.clamped);
    }

    fn shifted(dist: &ObservedDistribution, h: f64) -> ObservedDistribution {
        let mut out = dist.clone();
        for cell in out.cells.values_mut() {
            cell.joint[1][0] += h;
            cell.joint[1][3] -= h;
        }
        out
    }

    #[test]
    fn linear_away_from_kinks() {
        let dist = reference_dgp();
        let grid = [0.02, 0.05];
        let full = numerical_derivative(&dist, &shifted(&dist, 0.002), 1000, 2.0, late0(), &grid);
        let half = numerical_derivative(&dist, &shifted(&dist, 0.001), 1000, 2.0, late0(), &grid);
        for (f, h) in full.values.iter().zip(&half.values) {
            assert!(f.abs() > 0.0);
            assert!(((f / 2.0) - h).abs() <= 1e-6 * f.abs());
        }
    }

    #[test]
    fn one_sided_at_the_root() {
        let dist = reference_dgp();
        let grid = [0.15];
        let up = numerical_derivative(&dist, &shifted(&dist, 0.001), 1000, 2.0, late0(), &grid);
        let down = numerical_derivative(&dist, &shifted(&dist, -0.001), 1000, 2.0, late0(), &grid);
        // the clamp at zero makes the response asymmetric
        assert!((up.values[0] + down.values[0]).abs() > 1e-6);
    }

    #[test]
    fn identity_resample() {
        let mut rng = replicate_rng(3, 0);
        let data = draw_sample(&reference_dgp(), 500, &mut rng).unwrap();
        let same = data.with_records(data.records().to_vec());
        assert_eq!(
            estimate_cells(&same).unwrap(),
            estimate_cells(&data).unwrap()
        );
    }

    #[test]
    fn bootstrap_is_seeded() {
        let data = Dataset::from_tuples([(1, 1, 1, "a"), (0, 0, 0, "a")]).unwrap();
        let a = bootstrap_theta(&data, &mut replicate_rng(9, 0), ThinCellPolicy::Drop);
        let b = bootstrap_theta(&data, &mut replicate_rng(9, 0), ThinCellPolicy::Drop);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn single_draw_band() {
        let mut rng = replicate_rng(11, 0);
        let data = draw_sample(&reference_dgp(), 1000, &mut rng).unwrap();
        let grid = linspace(0.0, 0.15, 20);
        let cfg = InferenceConfig {
            b: 1,
            seed: 5,
            ..Default::default()
        };
        let band = uniform_lower_band(&data, &grid, late0(), &cfg).unwrap();
        let lo = band.curve.band_lo.as_ref().unwrap();
        for (i, v) in band.curve.values.iter().enumerate() {
            let expect = (v - band.z_hat / (1000f64).sqrt()).clamp(0.0, 1.0);
            assert_eq!(lo[i], expect);
        }
    }

    #[test]
    fn band_below_estimate() {
        let mut rng = replicate_rng(12, 0);
        let data = draw_sample(&reference_dgp(), 1000, &mut rng).unwrap();
        let grid = linspace(0.0, 0.15, 20);
        for mode in [SigmaMode::ConstantOne, SigmaMode::BootstrapSd] {
            let cfg = InferenceConfig {
                b: 50,
                seed: 1,
                sigma_mode: mode,
                ..Default::default()
            };
            let band = uniform_lower_band(&data, &grid, late0(), &cfg).unwrap();
            assert!(band.diagnostics.z_hat_nonnegative);
            let lo = band.curve.band_lo.as_ref().unwrap();
            assert!(lo.iter().zip(&band.curve.values).all(|(l, v)| l <= v));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = InferenceConfig {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        let bad = InferenceConfig {
            b: 0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
    }
}
