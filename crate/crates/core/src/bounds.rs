//! Closed-form identified sets under c-dependence and a bounded defier share.
//!
//! Everything here is built from the joint envelopes
//! `P(Y(D(z)) = y, D(z) = d | x)`, which are summed into marginal envelopes
//! for potential outcomes and potential treatments, combined per covariate
//! cell into ITT, complier-share and ATE bounds, and averaged over cells with
//! the weights `q_x`. LATE bounds are the ratio of the aggregated ITT and
//! complier-share bounds.

use serde::Serialize;

use crate::model::{Interval, ObservedCell, ObservedDistribution, SensitivityPoint, JOINT_ORDER};

/// Below this complier-share bound the LATE ratio is treated as vacuous.
pub const LATE_DENOMINATOR_FLOOR: f64 = 1e-10;

/// Round-off allowed before an inverted envelope counts as empty.
const EMPTY_TOL: f64 = 1e-12;

/// Sharp set for `P(Y(D(z)) = y, D(z) = d | x)`.
pub fn joint_potential_bounds(cell: &ObservedCell, y: u8, d: u8, z: u8, c: f64) -> Interval {
    let pz = cell.arm(z);
    let mass = cell.p(y, d, z) * pz;
    let inside = pz > c;

    let lo = {
        let scaled = mass / (pz + c);
        let complement = if inside { (mass - c) / (pz - c) } else { 0.0 };
        scaled.max(complement).max(mass)
    };
    let hi = {
        let scaled = if inside { mass / (pz - c) } else { 1.0 };
        let complement = (mass + c) / (pz + c);
        scaled.min(complement).min(mass + (1.0 - pz))
    };
    Interval::new(lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

fn combine(a: Interval, b: Interval, floor: f64, cap: f64) -> Interval {
    let lo = (a.lo + b.lo).max(floor);
    let hi = (a.hi + b.hi).min(cap);
    Interval::new(lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// Identified set for `P(Y(D(z)) = y | x)`.
pub fn marginal_outcome_bounds(cell: &ObservedCell, y: u8, z: u8, c: f64) -> Interval {
    let pz = cell.arm(z);
    let base = cell.outcome_prob(y, z) * pz;
    combine(
        joint_potential_bounds(cell, y, 1, z, c),
        joint_potential_bounds(cell, y, 0, z, c),
        base,
        base + (1.0 - pz),
    )
}

/// Identified set for `P(D(z) = d | x)`.
pub fn marginal_treatment_bounds(cell: &ObservedCell, d: u8, z: u8, c: f64) -> Interval {
    let pz = cell.arm(z);
    let base = cell.treatment_prob(d, z) * pz;
    combine(
        joint_potential_bounds(cell, 1, d, z, c),
        joint_potential_bounds(cell, 0, d, z, c),
        base,
        base + (1.0 - pz),
    )
}

/// All envelopes of one cell at one value of `c`, computed once.
#[derive(Clone, Debug)]
pub struct CellEnvelopes {
    /// `joint[z][joint_index(y, d)]`.
    pub joint: [[Interval; 4]; 2],
    /// `P(Y(D(z)) = 1 | x)` per `z`.
    pub outcome: [Interval; 2],
    /// `P(D(z) = 1 | x)` per `z`.
    pub treatment: [Interval; 2],
}

impl CellEnvelopes {
    pub fn new(cell: &ObservedCell, c: f64) -> Self {
        let mut joint = [[Interval::point(0.0); 4]; 2];
        for z in 0..2u8 {
            for (k, &(y, d)) in JOINT_ORDER.iter().enumerate() {
                joint[usize::from(z)][k] = joint_potential_bounds(cell, y, d, z, c);
            }
        }
        let marg = |z: u8, a: usize, b: usize, base: f64| {
            let pz = cell.arm(z);
            combine(
                joint[usize::from(z)][a],
                joint[usize::from(z)][b],
                base * pz,
                base * pz + (1.0 - pz),
            )
        };
        // (1,1)=0, (1,0)=1, (0,1)=2, (0,0)=3
        let outcome = [
            marg(0, 0, 1, cell.outcome_prob(1, 0)),
            marg(1, 0, 1, cell.outcome_prob(1, 1)),
        ];
        let treatment = [
            marg(0, 0, 2, cell.treatment_prob(1, 0)),
            marg(1, 0, 2, cell.treatment_prob(1, 1)),
        ];
        Self {
            joint,
            outcome,
            treatment,
        }
    }

    /// Conditional ITT bounds for one cell.
    pub fn itt(&self, pi_def: f64) -> Interval {
        let hi = (self.outcome[1].hi - self.outcome[0].lo + pi_def).min(1.0);
        let lo = (self.outcome[1].lo - self.outcome[0].hi - pi_def).max(-1.0);
        Interval::new(lo, hi)
    }

    /// Conditional complier-share bounds for one cell.
    ///
    /// Empty when even the upper envelope is negative: no latent model with
    /// this defier share has a nonnegative complier share.
    pub fn complier_share(&self, pi_def: f64) -> Interval {
        let hi = self.treatment[1].hi - self.treatment[0].lo + pi_def;
        if hi < -EMPTY_TOL {
            return Interval::EMPTY;
        }
        let hi = hi.clamp(0.0, 1.0);
        let lo = (self.treatment[1].lo - self.treatment[0].hi + pi_def).clamp(0.0, 1.0);
        Interval::new(lo.min(hi), hi)
    }
}

fn aggregate<F>(dist: &ObservedDistribution, mut per_cell: F) -> Interval
where
    F: FnMut(&str, &ObservedCell) -> Interval,
{
    let (mut lo, mut hi) = (0.0, 0.0);
    for (key, cell) in dist.iter() {
        let iv = per_cell(key, cell);
        if iv.is_empty() {
            return Interval::EMPTY;
        }
        lo += cell.weight * iv.lo;
        hi += cell.weight * iv.hi;
    }
    Interval::new(lo, hi)
}

/// ITT bounds with a defier share that may differ across cells.
pub fn itt_bounds_by_cell<P>(dist: &ObservedDistribution, c: f64, pi_def: P) -> Interval
where
    P: Fn(&str) -> f64,
{
    aggregate(dist, |key, cell| {
        CellEnvelopes::new(cell, c).itt(pi_def(key))
    })
    .clamp(-1.0, 1.0)
}

/// Complier-share bounds with a defier share that may differ across cells.
pub fn complier_share_bounds_by_cell<P>(dist: &ObservedDistribution, c: f64, pi_def: P) -> Interval
where
    P: Fn(&str) -> f64,
{
    aggregate(dist, |key, cell| {
        CellEnvelopes::new(cell, c).complier_share(pi_def(key))
    })
    .clamp(0.0, 1.0)
}

pub fn itt_bounds(dist: &ObservedDistribution, s: SensitivityPoint) -> Interval {
    itt_bounds_by_cell(dist, s.c, |_| s.pi_def)
}

pub fn complier_share_bounds(dist: &ObservedDistribution, s: SensitivityPoint) -> Interval {
    complier_share_bounds_by_cell(dist, s.c, |_| s.pi_def)
}

/// LATE bounds from ITT bounds and complier-share bounds.
///
/// Each ITT endpoint is divided by the complier-share endpoint that makes the
/// ratio extreme: a nonnegative lower endpoint by the largest share, a
/// negative one by the smallest, and symmetrically for the upper endpoint.
/// When that share is not above [`LATE_DENOMINATOR_FLOOR`] the endpoint is
/// vacuous (`1` above, `-1` below). An empty complier share gives an empty set.
pub fn late_from_parts(itt: Interval, complier: Interval) -> Interval {
    if complier.is_empty() {
        return Interval::EMPTY;
    }
    let ratio = |num: f64, den: f64, vacuous: f64| {
        if den <= LATE_DENOMINATOR_FLOOR {
            vacuous
        } else {
            (num / den).clamp(-1.0, 1.0)
        }
    };
    let hi = if itt.hi >= 0.0 {
        ratio(itt.hi, complier.lo, 1.0)
    } else {
        ratio(itt.hi, complier.hi, 1.0)
    };
    let lo = if itt.lo >= 0.0 {
        ratio(itt.lo, complier.hi, -1.0)
    } else {
        ratio(itt.lo, complier.lo, -1.0)
    };
    Interval::new(lo, hi)
}

pub fn late_bounds_by_cell<P>(dist: &ObservedDistribution, c: f64, pi_def: P) -> Interval
where
    P: Fn(&str) -> f64,
{
    late_from_parts(
        itt_bounds_by_cell(dist, c, &pi_def),
        complier_share_bounds_by_cell(dist, c, &pi_def),
    )
}

pub fn late_bounds(dist: &ObservedDistribution, s: SensitivityPoint) -> Interval {
    late_bounds_by_cell(dist, s.c, |_| s.pi_def)
}

/// Bounds on `P(Y(1) = 1 | x)` and `P(Y(0) = 1 | x)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PotentialOutcomeEnvelopes {
    pub treated: Interval,
    pub untreated: Interval,
}

/// Envelopes for the treated and untreated potential outcomes of one cell.
pub fn potential_outcome_envelopes(
    cell: &ObservedCell,
    c: f64,
    pi_def: f64,
) -> PotentialOutcomeEnvelopes {
    let env = CellEnvelopes::new(cell, c);
    // (1,1)=0, (1,0)=1
    let a1 = env.joint[1][0];
    let a0 = env.joint[0][0];
    let b1 = env.joint[1][1];
    let b0 = env.joint[0][1];
    let never_or_defier = marginal_treatment_bounds(cell, 0, 1, c);
    let always_or_defier = env.treatment[0];

    let p_d1 = cell.observational_treatment(1);
    let p_d0 = 1.0 - p_d1;
    let obs_y1_d1 = cell.observational(1, 1);
    let obs_y1_d0 = cell.observational(1, 0);

    let treated_hi =
        (a1.hi + a0.hi.min(pi_def) + never_or_defier.hi - pi_def).min(obs_y1_d1 + (1.0 - p_d1));
    let treated_lo = (a1.lo + a0.lo - a1.hi.min(a0.hi)).max(obs_y1_d1);
    let untreated_hi =
        (b0.hi + b1.hi.min(pi_def) + always_or_defier.hi - pi_def).min(obs_y1_d0 + (1.0 - p_d0));
    let untreated_lo = (b1.lo + b0.lo - b1.hi.min(b0.hi)).max(obs_y1_d0);

    let envelope = |lo: f64, hi: f64| {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        if lo > hi + EMPTY_TOL {
            Interval::EMPTY
        } else {
            Interval::new(lo.min(hi), hi)
        }
    };
    PotentialOutcomeEnvelopes {
        treated: envelope(treated_lo, treated_hi),
        untreated: envelope(untreated_lo, untreated_hi),
    }
}

/// Conditional ATE bounds for one cell.
///
/// Returns [`Interval::EMPTY`] when a potential-outcome envelope is
/// inverted: no latent model reconciles the cell with `(c, pi_def)`, which
/// happens when the defier share exceeds what the treatment margins allow.
pub fn ate_cell_bounds(cell: &ObservedCell, c: f64, pi_def: f64) -> Interval {
    let env = potential_outcome_envelopes(cell, c, pi_def);
    if env.treated.is_empty() || env.untreated.is_empty() {
        return Interval::EMPTY;
    }
    let hi = env.treated.hi - env.untreated.lo;
    let lo = env.treated.lo - env.untreated.hi;
    Interval::new(lo.clamp(-1.0, 1.0), hi.clamp(-1.0, 1.0))
}

/// Aggregated ATE bounds; empty as soon as one cell's set is empty.
pub fn ate_bounds(dist: &ObservedDistribution, s: SensitivityPoint) -> Interval {
    aggregate(dist, |_, cell| ate_cell_bounds(cell, s.c, s.pi_def)).clamp(-1.0, 1.0)
}

/// ATE bounds for one cell under independence and monotonicity.
pub fn balke_pearl_bounds(cell: &ObservedCell) -> Interval {
    let core = cell.p(1, 1, 1) - cell.p(1, 0, 0);
    Interval::new(
        core - cell.treatment_prob(1, 0),
        core + cell.treatment_prob(0, 1),
    )
}

/// Fréchet-feasible window for the defier share of one cell, using the
/// potential-treatment probabilities identified under independence.
pub fn defier_window(cell: &ObservedCell) -> Interval {
    let d0_one = cell.treatment_prob(1, 0);
    let d1_one = cell.treatment_prob(1, 1);
    let d1_zero = cell.treatment_prob(0, 1);
    let lo = (d0_one - d1_one).max(0.0);
    let hi = d0_one.min(d1_zero);
    Interval { lo, hi }
}

/// Upper end of the open window for `c` in which the joint envelopes are
/// interior for every `(y, d, z)` of the cell.
pub fn c_window_cap(cell: &ObservedCell) -> f64 {
    let mut cap = f64::INFINITY;
    for z in 0..2u8 {
        let pz = cell.arm(z);
        for &(y, d) in &JOINT_ORDER {
            let p = cell.p(y, d, z);
            let first = pz * (1.0 - 2.0 * p);
            let second = pz * (1.0 - pz) * (1.0 - p) / (p * pz + 1.0 - pz);
            cap = cap.min(first).min(second);
        }
    }
    cap
}

/// Conditions under which the closed-form sets coincide with the sharp sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SharpnessDiagnostics {
    /// Defier share inside its Fréchet window in every cell.
    pub frechet_ok: bool,
    /// Every `p(y, d | z, x) < 1/2`.
    pub half_ok: bool,
    /// `c` strictly inside the interior window of every cell.
    pub c_window_ok: bool,
    /// Defier share keeps the ITT truncations inactive in every cell.
    pub pi_window_ok: bool,
    /// Conjunction of the four flags above.
    pub overall_sharp: bool,
    /// Complier-effect conditions: Fréchet window, `c = 0`, and the defier
    /// share below one minus the first stage in every cell.
    pub late_sharp: bool,
}

pub fn sharpness_conditions(
    dist: &ObservedDistribution,
    s: SensitivityPoint,
) -> SharpnessDiagnostics {
    let mut frechet_ok = true;
    let mut half_ok = true;
    let mut c_window_ok = true;
    let mut pi_window_ok = true;
    let mut first_stage_ok = true;
    for cell in dist.cells.values() {
        let window = defier_window(cell);
        frechet_ok &= window.lo <= s.pi_def && s.pi_def <= window.hi;
        for z in 0..2u8 {
            half_ok &= cell.joint[usize::from(z)].iter().all(|&p| p < 0.5);
        }
        c_window_ok &= s.c > 0.0 && s.c < c_window_cap(cell);
        let env = CellEnvelopes::new(cell, s.c);
        let (y1, y0) = (env.outcome[1], env.outcome[0]);
        pi_window_ok &= y0.hi - y1.lo - 1.0 < s.pi_def && s.pi_def < 1.0 - (y1.hi - y0.lo);
        let first_stage = cell.treatment_prob(1, 1) - cell.treatment_prob(1, 0);
        first_stage_ok &= s.pi_def < 1.0 - first_stage;
    }
    SharpnessDiagnostics {
        frechet_ok,
        half_ok,
        c_window_ok,
        pi_window_ok,
        overall_sharp: frechet_ok && half_ok && c_window_ok && pi_window_ok,
        late_sharp: frechet_ok && s.c == 0.0 && first_stage_ok,
    }
}
