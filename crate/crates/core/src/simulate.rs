//! Reference DGP, sampling and the Monte Carlo harness.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::estimate_cells_with;
use crate::frontier::{breakdown_frontier, default_grid, FrontierCurve};
use crate::inference::{band_around, replicate_rng, InferenceConfig};
use crate::model::{
    Dataset, FrontierQuery, ObservedCell, ObservedDistribution, Record, JOINT_ORDER,
};

/// Two equally likely covariate cells sharing the same conditional law:
/// `P(Z = 1) = 0.6`, and `(Y, D)` given `Z = 1` is `(1/3, 1/6, 5/12, 1/12)`
/// over `(1,1), (1,0), (0,1), (0,0)`, given `Z = 0` it is
/// `(1/8, 1/8, 1/8, 5/8)`. The ITT is 0.25 and the LATE 0.5.
pub fn reference_dgp() -> ObservedDistribution {
    let cell = ObservedCell::new(
        [0.125, 0.125, 0.125, 0.625],
        [1.0 / 3.0, 1.0 / 6.0, 5.0 / 12.0, 1.0 / 12.0],
        0.6,
        0.5,
    );
    let cells = BTreeMap::from([("0".to_string(), cell.clone()), ("1".to_string(), cell)]);
    ObservedDistribution::new(cells)
}

/// `n` i.i.d. draws of `(X, Z, Y, D)`.
pub fn draw_sample<R: Rng>(dist: &ObservedDistribution, n: usize, rng: &mut R) -> Result<Dataset> {
    let keys: Vec<String> = dist.cells.keys().cloned().collect();
    let mut outcomes = Vec::with_capacity(keys.len() * 8);
    let mut weights = Vec::with_capacity(keys.len() * 8);
    for (i, cell) in dist.cells.values().enumerate() {
        for z in 0..2u8 {
            for (k, &(y, d)) in JOINT_ORDER.iter().enumerate() {
                outcomes.push(Record {
                    y,
                    d,
                    z,
                    cell: i as u32,
                });
                weights.push(cell.weight * cell.arm(z) * cell.joint[usize::from(z)][k]);
            }
        }
    }
    let index = WeightedIndex::new(&weights)
        .map_err(|e| Error::NotADistribution(format!("cannot sample: {e}")))?;
    let records = (0..n).map(|_| outcomes[index.sample(rng)]).collect();
    Dataset::new(keys, records)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub n: usize,
    pub reps: usize,
    pub grid: Vec<f64>,
    pub query: FrontierQuery,
    pub inference: InferenceConfig,
    pub seed: u64,
    /// Replace estimation by the exact DGP (pipeline self-test).
    pub exact: bool,
    /// Keep every replicate's curve in the report.
    pub keep_reps: bool,
}

impl McConfig {
    /// Desk-scale design: 200 replications with 200 bootstrap draws each.
    pub fn desk(n: usize, seed: u64) -> Self {
        Self {
            n,
            reps: 200,
            grid: default_grid(),
            query: FrontierQuery {
                target: crate::model::Target::Late,
                mu: 0.0,
            },
            inference: InferenceConfig {
                b: 200,
                seed,
                ..Default::default()
            },
            seed,
            exact: false,
            keep_reps: false,
        }
    }

    /// Full design: 500 replications with 999 bootstrap draws each.
    pub fn paper_scale(n: usize, seed: u64) -> Self {
        let mut cfg = Self::desk(n, seed);
        cfg.reps = 500;
        cfg.inference.b = 999;
        cfg
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 1 || self.reps < 1 {
            return Err(Error::InvalidParameter(
                "sample size and replication count must be positive".into(),
            ));
        }
        crate::frontier::check_grid(&self.grid)?;
        self.inference.check()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepOutcome {
    /// Clamped frontier estimate.
    pub estimate: Vec<f64>,
    /// Unclamped `bf` estimate.
    pub raw: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub z_hat: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    /// `mean - truth`.
    pub bias: Vec<f64>,
    /// Bias of the unclamped `bf` estimate against the unclamped truth.
    pub raw_bias: Vec<f64>,
    pub sd: Vec<f64>,
    pub band_mean: Vec<f64>,
    /// Share of replications whose band lies below the truth at every grid point.
    pub coverage: f64,
    pub covered: usize,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep: Option<Vec<RepOutcome>>,
}

impl McReport {
    pub fn max_abs_bias(&self) -> f64 {
        self.bias.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    pub fn max_abs_raw_bias(&self) -> f64 {
        self.raw_bias.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Columns `c, truth, mean, bias, raw_bias, sd, band_mean`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["c", "truth", "mean", "bias", "raw_bias", "sd", "band_mean"])?;
        for i in 0..self.grid.len() {
            w.write_record(&[
                self.grid[i].to_string(),
                self.truth[i].to_string(),
                self.mean[i].to_string(),
                self.bias[i].to_string(),
                self.raw_bias[i].to_string(),
                self.sd[i].to_string(),
                self.band_mean[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format `rep, c, bf, band_lo` for every kept replication.
    pub fn write_reps_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "c", "bf", "band_lo"])?;
        for (r, rep) in self.per_rep.iter().flatten().enumerate() {
            for i in 0..self.grid.len() {
                w.write_record(&[
                    r.to_string(),
                    self.grid[i].to_string(),
                    rep.estimate[i].to_string(),
                    rep.band_lo[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn one_rep(
    cfg: &McConfig,
    dgp: &ObservedDistribution,
    truth: &FrontierCurve,
    rep: usize,
) -> Result<RepOutcome> {
    let (estimate, raw, band_lo, z_hat) = if cfg.exact {
        (
            truth.values.clone(),
            truth.raw.clone(),
            truth.values.clone(),
            0.0,
        )
    } else {
        let mut rng = replicate_rng(cfg.seed, rep as u64);
        let data = draw_sample(dgp, cfg.n, &mut rng)?;
        let inference = InferenceConfig {
            seed: rng.gen(),
            ..cfg.inference
        };
        let theta_hat = estimate_cells_with(&data, inference.thin_cells)?.dist;
        let curve = breakdown_frontier(&theta_hat, &cfg.grid, cfg.query, false)?;
        let band = band_around(&data, &theta_hat, curve, cfg.query, &inference)?;
        let lo = band.curve.band_lo.clone().unwrap_or_default();
        (band.curve.values, band.curve.raw, lo, band.z_hat)
    };
    let covered = band_lo.iter().zip(&truth.values).all(|(l, t)| l <= t);
    Ok(RepOutcome {
        estimate,
        raw,
        band_lo,
        z_hat,
        covered,
    })
}

/// Bias, spread and simultaneous band coverage of the frontier estimator
/// under the reference DGP.
pub fn monte_carlo_study(cfg: &McConfig) -> Result<McReport> {
    cfg.check()?;
    let dgp = reference_dgp();
    let truth = breakdown_frontier(&dgp, &cfg.grid, cfg.query, false)?;
    let reps: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| one_rep(cfg, &dgp, &truth, r))
        .collect::<Result<_>>()?;

    let g = cfg.grid.len();
    let r = reps.len() as f64;
    let mut mean = vec![0.0; g];
    let mut raw_mean = vec![0.0; g];
    let mut band_mean = vec![0.0; g];
    for rep in &reps {
        for i in 0..g {
            mean[i] += rep.estimate[i] / r;
            raw_mean[i] += rep.raw[i] / r;
            band_mean[i] += rep.band_lo[i] / r;
        }
    }
    let sd = (0..g)
        .map(|i| {
            if reps.len() < 2 {
                return 0.0;
            }
            let ss: f64 = reps
                .iter()
                .map(|rep| (rep.estimate[i] - mean[i]).powi(2))
                .sum();
            (ss / (r - 1.0)).sqrt()
        })
        .collect();
    let bias = mean.iter().zip(&truth.values).map(|(m, t)| m - t).collect();
    let raw_bias = raw_mean
        .iter()
        .zip(&truth.raw)
        .map(|(m, t)| m - t)
        .collect();
    let covered = reps.iter().filter(|rep| rep.covered).count();
    Ok(McReport {
        grid: cfg.grid.clone(),
        truth: truth.values,
        mean,
        bias,
        raw_bias,
        sd,
        band_mean,
        coverage: covered as f64 / r,
        covered,
        reps: reps.len(),
        per_rep: cfg.keep_reps.then_some(reps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{itt_bounds, late_bounds};
    use crate::estimate::estimate_cells;
    use crate::model::{validate, SensitivityPoint};

    #[test]
    fn dgp_facts() {
        let dist = reference_dgp();
        assert!(validate(&dist, true).is_ok());
        let s = SensitivityPoint::new(0.0, 0.0).unwrap();
        assert!((itt_bounds(&dist, s).lo - 0.25).abs() < 1e-12);
        assert!((late_bounds(&dist, s).hi - 0.5).abs() < 1e-12);
        let cell = &dist.cells["0"];
        let unconditional = [0.2, 0.1, 0.25, 0.05];
        for k in 0..4 {
            assert!((cell.joint[1][k] * 0.6 - unconditional[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let dist = reference_dgp();
        let a = draw_sample(&dist, 100, &mut replicate_rng(1, 0)).unwrap();
        let b = draw_sample(&dist, 100, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        assert!(draw_sample(&dist, 0, &mut replicate_rng(1, 0)).is_err());
    }

    #[test]
    fn large_sample_frequencies() {
        let dist = reference_dgp();
        let data = draw_sample(&dist, 200_000, &mut replicate_rng(2, 0)).unwrap();
        let est = estimate_cells(&data).unwrap();
        for (key, cell) in &est.cells {
            let truth = &dist.cells[key];
            assert!((cell.propensity - truth.propensity).abs() < 0.01);
            for z in 0..2 {
                for k in 0..4 {
                    assert!((cell.joint[z][k] - truth.joint[z][k]).abs() < 0.01);
                }
            }
        }
    }

    #[test]
    fn exact_mode_has_zero_bias() {
        let mut cfg = McConfig::desk(1000, 4);
        cfg.reps = 3;
        cfg.exact = true;
        let report = monte_carlo_study(&cfg).unwrap();
        assert!(report.bias.iter().all(|&b| b == 0.0));
        assert!(report.raw_bias.iter().all(|&b| b == 0.0));
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn small_study_is_deterministic() {
        let mut cfg = McConfig::desk(500, 8);
        cfg.reps = 4;
        cfg.inference.b = 20;
        cfg.grid = crate::frontier::linspace(0.0, 0.15, 10);
        let a = monte_carlo_study(&cfg).unwrap();
        let b = monte_carlo_study(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
