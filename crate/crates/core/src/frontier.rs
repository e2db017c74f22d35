//! Robust regions and breakdown frontiers over a grid of `c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{itt_bounds, late_bounds, CellEnvelopes};
use crate::error::{Error, Result};
use crate::model::{FrontierQuery, ObservedDistribution, SensitivityPoint, Target};

pub const DEFAULT_ROOT_TOL: f64 = 1e-8;
/// Distance kept from the regular-regime cap when searching for a root.
pub const REGIME_GUARD: f64 = 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_GRID_MAX: f64 = 0.15;

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    linspace(0.0, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS)
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidParameter(
            "grid values must lie in [0, 1]".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Weighted sums `(A, F)` of the lower reduced-form contrast and the upper
/// first-stage contrast at `c`.
fn contrasts(dist: &ObservedDistribution, c: f64) -> (f64, f64) {
    let (mut a, mut f) = (0.0, 0.0);
    for cell in dist.cells.values() {
        let env = CellEnvelopes::new(cell, c);
        a += cell.weight * (env.outcome[1].lo - env.outcome[0].hi);
        f += cell.weight * (env.treatment[1].hi - env.treatment[0].lo);
    }
    (a, f)
}

/// Largest defier share at which the conclusion `target >= mu` survives at
/// `c`, before clamping to `[0, 1]`.
pub fn bf_value(dist: &ObservedDistribution, c: f64, q: FrontierQuery) -> f64 {
    let (a, f) = contrasts(dist, c);
    match q.target {
        Target::Itt => a - q.mu,
        Target::Late => (a - q.mu * f) / (1.0 + q.mu),
    }
}

/// Breakdown frontier evaluated on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub target: Target,
    pub mu: f64,
    pub grid: Vec<f64>,
    /// Unclamped `bf` values.
    pub raw: Vec<f64>,
    /// `BF = min(max(bf, 0), 1)`.
    pub values: Vec<f64>,
    /// Lower confidence band, clamped to `[0, 1]`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band_lo_raw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<Vec<f64>>,
}

impl FrontierCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// CSV with columns `c, bf_raw, bf, band_lo` and, when a band is present,
    /// `band_lo_raw, sigma`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_band = self.band_lo_raw.is_some();
        let mut header = vec!["c", "bf_raw", "bf", "band_lo"];
        if with_band {
            header.extend(["band_lo_raw", "sigma"]);
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let band =
                |v: &Option<Vec<f64>>| v.as_ref().map(|b| b[i].to_string()).unwrap_or_default();
            let mut row = vec![
                self.grid[i].to_string(),
                self.raw[i].to_string(),
                self.values[i].to_string(),
                band(&self.band_lo),
            ];
            if with_band {
                row.push(band(&self.band_lo_raw));
                row.push(band(&self.sigma));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates the frontier without any regime check.
pub(crate) fn frontier_values(
    dist: &ObservedDistribution,
    grid: &[f64],
    q: FrontierQuery,
) -> Vec<f64> {
    grid.iter()
        .map(|&c| bf_value(dist, c, q).clamp(0.0, 1.0))
        .collect()
}

/// Breakdown frontier on `grid`.
///
/// With `sharp_regime` set, every grid value must stay below the smallest
/// `min(p, 1 - p)` over cells.
pub fn breakdown_frontier(
    dist: &ObservedDistribution,
    grid: &[f64],
    q: FrontierQuery,
    sharp_regime: bool,
) -> Result<FrontierCurve> {
    check_grid(grid)?;
    if sharp_regime {
        let cap = dist.regime_cap();
        let max_c = grid[grid.len() - 1];
        if max_c >= cap {
            return Err(Error::GridOutsideRegime { max_c, cap });
        }
    }
    let raw: Vec<f64> = grid.par_iter().map(|&c| bf_value(dist, c, q)).collect();
    let values = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(FrontierCurve {
        target: q.target,
        mu: q.mu,
        grid: grid.to_vec(),
        raw,
        values,
        band_lo: None,
        band_lo_raw: None,
        sigma: None,
    })
}

/// Largest `c` at which the frontier is still positive, by bisection.
///
/// Returns 0 when `bf(0) <= 0` and the search cap when `bf` stays positive.
pub fn breakdown_root(
    dist: &ObservedDistribution,
    q: FrontierQuery,
    tol: f64,
    sharp_regime: bool,
) -> f64 {
    let cap = if sharp_regime {
        (dist.regime_cap() - REGIME_GUARD).clamp(0.0, 1.0)
    } else {
        1.0
    };
    if bf_value(dist, 0.0, q) <= 0.0 {
        return 0.0;
    }
    if bf_value(dist, cap, q) > 0.0 {
        return cap;
    }
    let (mut a, mut b) = (0.0, cap);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if bf_value(dist, mid, q) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Whether the conclusion `target >= mu` holds over the whole identified set at `s`.
pub fn robust_region_contains(
    dist: &ObservedDistribution,
    s: SensitivityPoint,
    q: FrontierQuery,
) -> bool {
    let lo = match q.target {
        Target::Itt => itt_bounds(dist, s).lo,
        Target::Late => late_bounds(dist, s).lo,
    };
    lo >= q.mu
}
