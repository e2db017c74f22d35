//! Sharp bounds by linear programming over latent response types.
//!
//! A unit's response type is `(D(1), D(0), Y(1), Y(0))`; the decision
//! variables are the masses `q(t, z)` of the 16 types in each assignment arm.
//! The observed cell pins down the distribution of `(Y(D(z)), D(z))` inside
//! arm `z`, c-dependence bounds `P(Z = 1 | Y(D(z')) = y, D(z') = d)` within
//! `c` of the propensity, and the defier share is fixed. Optimising a linear
//! functional over this polytope gives the sharp identified set, which the
//! closed forms in [`crate::bounds`] must contain.

pub mod lp;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    self, defier_window, joint_potential_bounds, marginal_outcome_bounds,
    marginal_treatment_bounds, CellEnvelopes,
};
use crate::error::{Error, Result};
use crate::model::{Interval, ObservedCell, ObservedDistribution, SensitivityPoint, JOINT_ORDER};
use lp::{LinearProgram, LpOutcome, Relation};

pub const NUM_TYPES: usize = 16;
pub const NUM_VARS: usize = NUM_TYPES * 2;

/// Slack added to the complier-over-defier constraint in strict mode.
pub const STRICT_DEFIER_SLACK: f64 = 1e-9;
/// Width at which the LATE ratio bisection stops.
const RATIO_TOL: f64 = 1e-10;
/// Smallest complier share admitted when the LATE ratio is optimised.
const LATE_MIN_COMPLIERS: f64 = 1e-9;

/// A response type `(D(1), D(0), Y(1), Y(0))` packed into four bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ResponseType(u8);

impl ResponseType {
    pub fn all() -> impl Iterator<Item = ResponseType> {
        (0..NUM_TYPES as u8).map(ResponseType)
    }

    pub fn new(d1: u8, d0: u8, y1: u8, y0: u8) -> Self {
        Self((d1 << 3) | (d0 << 2) | (y1 << 1) | y0)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn d1(self) -> u8 {
        (self.0 >> 3) & 1
    }

    pub fn d0(self) -> u8 {
        (self.0 >> 2) & 1
    }

    pub fn y1(self) -> u8 {
        (self.0 >> 1) & 1
    }

    pub fn y0(self) -> u8 {
        self.0 & 1
    }

    /// `D(z)`.
    pub fn treatment(self, z: u8) -> u8 {
        if z == 1 {
            self.d1()
        } else {
            self.d0()
        }
    }

    /// `Y(d)`.
    pub fn outcome(self, d: u8) -> u8 {
        if d == 1 {
            self.y1()
        } else {
            self.y0()
        }
    }

    /// `Y(D(z))`.
    pub fn realized_outcome(self, z: u8) -> u8 {
        self.outcome(self.treatment(z))
    }

    pub fn is_complier(self) -> bool {
        self.d1() == 1 && self.d0() == 0
    }

    pub fn is_defier(self) -> bool {
        self.d1() == 0 && self.d0() == 1
    }

    pub fn effect(self) -> f64 {
        f64::from(self.y1()) - f64::from(self.y0())
    }
}

#[inline]
fn var(t: ResponseType, z: u8) -> usize {
    t.index() * 2 + usize::from(z)
}

/// Which assumptions enter the constraint system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintScope {
    /// Observational match and c-dependence only.
    Independence,
    /// Additionally fixes the defier share and requires compliers to outnumber defiers.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct OracleOptions {
    /// Require `pi_co >= pi_def + 1e-9` instead of `pi_co >= pi_def`.
    pub strict_defiers: bool,
}

/// Linear constraints over the 32 masses `q(t, z)`.
pub fn build_constraints(
    cell: &ObservedCell,
    s: SensitivityPoint,
    scope: ConstraintScope,
    opts: OracleOptions,
) -> LinearProgram {
    let mut lp = LinearProgram::new(NUM_VARS);
    let p1 = cell.propensity;

    lp.add(vec![1.0; NUM_VARS], Relation::Eq, 1.0);

    let mut row = vec![0.0; NUM_VARS];
    for t in ResponseType::all() {
        row[var(t, 1)] = 1.0;
    }
    lp.add(row, Relation::Eq, p1);

    // observational match inside each arm
    for z in 0..2u8 {
        for &(y, d) in &JOINT_ORDER {
            let mut row = vec![0.0; NUM_VARS];
            for t in ResponseType::all() {
                if t.treatment(z) == d && t.outcome(d) == y {
                    row[var(t, z)] = 1.0;
                }
            }
            lp.add(row, Relation::Eq, cell.p(y, d, z) * cell.arm(z));
        }
    }

    // c-dependence of Z with (Y(D(z')), D(z'))
    for zp in 0..2u8 {
        for &(y, d) in &JOINT_ORDER {
            let mut upper = vec![0.0; NUM_VARS];
            let mut lower = vec![0.0; NUM_VARS];
            for t in ResponseType::all() {
                if t.treatment(zp) == d && t.outcome(d) == y {
                    // q(t,1) - (p1 + c)(q(t,0) + q(t,1)) <= 0
                    upper[var(t, 1)] = 1.0 - (p1 + s.c);
                    upper[var(t, 0)] = -(p1 + s.c);
                    // (p1 - c)(q(t,0) + q(t,1)) - q(t,1) <= 0
                    lower[var(t, 1)] = (p1 - s.c) - 1.0;
                    lower[var(t, 0)] = p1 - s.c;
                }
            }
            lp.add(upper, Relation::Le, 0.0);
            lp.add(lower, Relation::Le, 0.0);
        }
    }

    if scope == ConstraintScope::Full {
        let mut defiers = vec![0.0; NUM_VARS];
        let mut margin = vec![0.0; NUM_VARS];
        for t in ResponseType::all() {
            for z in 0..2u8 {
                if t.is_defier() {
                    defiers[var(t, z)] = 1.0;
                    margin[var(t, z)] = -1.0;
                } else if t.is_complier() {
                    margin[var(t, z)] = 1.0;
                }
            }
        }
        lp.add(defiers, Relation::Eq, s.pi_def);
        let slack = if opts.strict_defiers {
            STRICT_DEFIER_SLACK
        } else {
            0.0
        };
        lp.add(margin, Relation::Ge, slack);
    }
    lp
}

/// Quantity whose sharp identified set is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LpTarget {
    /// `P(Y(D(z)) = y, D(z) = d | x)`.
    Joint {
        y: u8,
        d: u8,
        z: u8,
    },
    /// `P(Y(D(z)) = y | x)`.
    MarginalY {
        y: u8,
        z: u8,
    },
    /// `P(D(z) = d | x)`.
    MarginalD {
        d: u8,
        z: u8,
    },
    /// Complier numerator `E[Y(1) - Y(0) | co] * pi_co`, the quantity the
    /// closed-form ITT bounds enclose.
    Itt,
    /// Reduced form `E[Y(D(1)) - Y(D(0))]`.
    ReducedForm,
    /// `pi_co`.
    ComplierShare,
    Ate,
    Late,
}

impl LpTarget {
    /// All targets exercised by the conformance sweep.
    pub fn catalogue() -> Vec<LpTarget> {
        let mut out = Vec::new();
        for z in 0..2u8 {
            for &(y, d) in &JOINT_ORDER {
                out.push(LpTarget::Joint { y, d, z });
            }
            out.push(LpTarget::MarginalY { y: 1, z });
            out.push(LpTarget::MarginalD { d: 1, z });
        }
        out.extend([
            LpTarget::Itt,
            LpTarget::ReducedForm,
            LpTarget::ComplierShare,
            LpTarget::Ate,
            LpTarget::Late,
        ]);
        out
    }

    pub fn scope(self) -> ConstraintScope {
        match self {
            LpTarget::Joint { .. } | LpTarget::MarginalY { .. } | LpTarget::MarginalD { .. } => {
                ConstraintScope::Independence
            }
            _ => ConstraintScope::Full,
        }
    }

    pub fn label(self) -> String {
        match self {
            LpTarget::Joint { y, d, z } => format!("joint({y},{d},{z})"),
            LpTarget::MarginalY { y, z } => format!("marginal-y({y},{z})"),
            LpTarget::MarginalD { d, z } => format!("marginal-d({d},{z})"),
            LpTarget::Itt => "itt".into(),
            LpTarget::ReducedForm => "reduced-form".into(),
            LpTarget::ComplierShare => "pi-co".into(),
            LpTarget::Ate => "ate".into(),
            LpTarget::Late => "late".into(),
        }
    }

    /// Objective over the 32 masses (`None` for the LATE ratio).
    fn objective(self) -> Option<Vec<f64>> {
        let mut obj = vec![0.0; NUM_VARS];
        let weight = |t: ResponseType| -> f64 {
            match self {
                LpTarget::Joint { y, d, z } => {
                    f64::from(u8::from(t.treatment(z) == d && t.outcome(d) == y))
                }
                LpTarget::MarginalY { y, z } => f64::from(u8::from(t.realized_outcome(z) == y)),
                LpTarget::MarginalD { d, z } => f64::from(u8::from(t.treatment(z) == d)),
                LpTarget::Itt => {
                    if t.is_complier() {
                        t.effect()
                    } else {
                        0.0
                    }
                }
                LpTarget::ReducedForm => {
                    f64::from(t.realized_outcome(1)) - f64::from(t.realized_outcome(0))
                }
                LpTarget::ComplierShare => f64::from(u8::from(t.is_complier())),
                LpTarget::Ate => t.effect(),
                LpTarget::Late => unreachable!(),
            }
        };
        if self == LpTarget::Late {
            return None;
        }
        for t in ResponseType::all() {
            let w = weight(t);
            obj[var(t, 0)] = w;
            obj[var(t, 1)] = w;
        }
        Some(obj)
    }

    /// The matching closed-form interval for a single cell.
    pub fn closed_form(self, cell: &ObservedCell, s: SensitivityPoint) -> Interval {
        match self {
            LpTarget::Joint { y, d, z } => joint_potential_bounds(cell, y, d, z, s.c),
            LpTarget::MarginalY { y, z } => marginal_outcome_bounds(cell, y, z, s.c),
            LpTarget::MarginalD { d, z } => marginal_treatment_bounds(cell, d, z, s.c),
            LpTarget::Itt | LpTarget::ReducedForm => CellEnvelopes::new(cell, s.c).itt(s.pi_def),
            LpTarget::ComplierShare => CellEnvelopes::new(cell, s.c).complier_share(s.pi_def),
            LpTarget::Ate => bounds::ate_cell_bounds(cell, s.c, s.pi_def),
            LpTarget::Late => {
                let env = CellEnvelopes::new(cell, s.c);
                bounds::late_from_parts(env.itt(s.pi_def), env.complier_share(s.pi_def))
            }
        }
    }
}

fn optimum(outcome: LpOutcome, s: SensitivityPoint) -> Result<f64> {
    match outcome {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible => Err(Error::Infeasible {
            c: s.c,
            pi_def: s.pi_def,
        }),
        LpOutcome::Unbounded => unreachable!("the response-type polytope is bounded"),
    }
}

/// Sharp identified set of `target` for one cell.
pub fn sharp_bounds_lp(
    cell: &ObservedCell,
    s: SensitivityPoint,
    target: LpTarget,
    opts: OracleOptions,
) -> Result<Interval> {
    let lp = build_constraints(cell, s, target.scope(), opts);
    match target.objective() {
        Some(obj) => {
            let lo = optimum(lp.minimize(&obj), s)?;
            let hi = optimum(lp.maximize(&obj), s)?;
            Ok(Interval::new(lo.min(hi), hi))
        }
        None => late_by_bisection(&lp, s),
    }
}

/// Range of `N / D` with `N = sum_co (y1 - y0) m_t` and `D = pi_co`.
///
/// For a trial ratio `r`, the set `{N - r D >= 0}` is non-empty iff the
/// maximum LATE is at least `r`; bisection on `r` locates both ends.
fn late_by_bisection(base: &LinearProgram, s: SensitivityPoint) -> Result<Interval> {
    let mut with_floor = base.clone();
    let mut den = vec![0.0; NUM_VARS];
    let mut num = vec![0.0; NUM_VARS];
    for t in ResponseType::all() {
        if t.is_complier() {
            for z in 0..2u8 {
                den[var(t, z)] = 1.0;
                num[var(t, z)] = t.effect();
            }
        }
    }
    with_floor.add(den.clone(), Relation::Ge, LATE_MIN_COMPLIERS);
    if with_floor.feasible_point().is_none() {
        return Err(Error::Infeasible {
            c: s.c,
            pi_def: s.pi_def,
        });
    }
    let feasible_with = |r: f64, rel: Relation| {
        let mut lp = with_floor.clone().with_feasibility_tol(1e-13);
        let row: Vec<f64> = num.iter().zip(&den).map(|(n, d)| n - r * d).collect();
        lp.add(row, rel, 0.0);
        lp.feasible_point().is_some()
    };

    // upper end: largest r with N - r D >= 0 feasible
    let (mut a, mut b) = (-1.0, 1.0);
    if feasible_with(1.0, Relation::Ge) {
        a = 1.0;
    } else {
        while b - a > RATIO_TOL {
            let mid = 0.5 * (a + b);
            if feasible_with(mid, Relation::Ge) {
                a = mid;
            } else {
                b = mid;
            }
        }
    }
    let hi = a;

    // lower end: smallest r with N - r D <= 0 feasible
    let (mut a, mut b) = (-1.0, 1.0);
    if feasible_with(-1.0, Relation::Le) {
        b = -1.0;
    } else {
        while b - a > RATIO_TOL {
            let mid = 0.5 * (a + b);
            if feasible_with(mid, Relation::Le) {
                b = mid;
            } else {
                a = mid;
            }
        }
    }
    let lo = b;
    Ok(Interval::new(lo.min(hi), hi))
}

/// Joint pmf of response type and assignment within one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    /// `mass[t][z]`, `t` indexed by [`ResponseType::index`].
    pub mass: [[f64; 2]; NUM_TYPES],
}

/// One row of the type-indexed mass table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeMass {
    pub d1: u8,
    pub d0: u8,
    pub y1: u8,
    pub y0: u8,
    pub z0: f64,
    pub z1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroupShares {
    pub always_takers: f64,
    pub never_takers: f64,
    pub compliers: f64,
    pub defiers: f64,
}

impl LatentModel {
    fn from_solution(x: &[f64]) -> Self {
        let mut mass = [[0.0; 2]; NUM_TYPES];
        for t in ResponseType::all() {
            for z in 0..2u8 {
                mass[t.index()][usize::from(z)] = x[var(t, z)].max(0.0);
            }
        }
        Self { mass }
    }

    pub fn type_mass(&self, t: ResponseType) -> f64 {
        self.mass[t.index()][0] + self.mass[t.index()][1]
    }

    pub fn group_shares(&self) -> GroupShares {
        let mut g = GroupShares {
            always_takers: 0.0,
            never_takers: 0.0,
            compliers: 0.0,
            defiers: 0.0,
        };
        for t in ResponseType::all() {
            let m = self.type_mass(t);
            match (t.d1(), t.d0()) {
                (1, 1) => g.always_takers += m,
                (0, 0) => g.never_takers += m,
                (1, 0) => g.compliers += m,
                _ => g.defiers += m,
            }
        }
        g
    }

    /// Observable cell implied by the model (weight set to one).
    pub fn push_forward(&self) -> ObservedCell {
        let p1: f64 = self.mass.iter().map(|m| m[1]).sum();
        let mut joint = [[0.0; 4]; 2];
        for z in 0..2u8 {
            let pz = if z == 1 { p1 } else { 1.0 - p1 };
            for t in ResponseType::all() {
                let d = t.treatment(z);
                let y = t.outcome(d);
                joint[usize::from(z)][crate::model::joint_index(y, d)] +=
                    self.mass[t.index()][usize::from(z)] / pz;
            }
        }
        ObservedCell {
            joint,
            propensity: p1,
            weight: 1.0,
        }
    }

    pub fn table(&self) -> Vec<TypeMass> {
        ResponseType::all()
            .map(|t| TypeMass {
                d1: t.d1(),
                d0: t.d0(),
                y1: t.y1(),
                y0: t.y0(),
                z0: self.mass[t.index()][0],
                z1: self.mass[t.index()][1],
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.table())?)
    }
}

/// Phase-one feasibility of the full constraint system, with a witness.
pub fn feasibility_check(
    cell: &ObservedCell,
    s: SensitivityPoint,
    opts: OracleOptions,
) -> Option<LatentModel> {
    build_constraints(cell, s, ConstraintScope::Full, opts)
        .feasible_point()
        .map(|x| LatentModel::from_solution(&x))
}

/// Verdict of comparing a sharp set with its closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Both endpoints agree.
    Sharp,
    /// Strictly inside the closed form.
    Contained,
    /// The LP set pokes out of the closed form.
    Violation,
    /// No latent model is consistent with the cell at this point.
    Infeasible,
}

pub const CONFORMANCE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub target: LpTarget,
    pub lp: Option<Interval>,
    pub closed_form: Interval,
    /// Whether the closed-form sharpness conditions for this target hold.
    pub claimed_sharp: bool,
    /// Whether the point lies in the domain where the LP set is known to
    /// coincide with the closed form (see [`equality_expected`]).
    pub equality_expected: bool,
    pub verdict: Verdict,
}

/// Closed-form sharpness conditions relevant for `target`.
///
/// These conditions make each closed form attainable for the pair
/// `(Y(D(z)), D(z))` in isolation. The response-type polytope also ties the
/// two arms together, so for `c > 0` the LP set is often strictly smaller.
pub fn claimed_sharp(target: LpTarget, cell: &ObservedCell, s: SensitivityPoint) -> bool {
    let diag = bounds::sharpness_conditions(&ObservedDistribution::single("", cell.clone()), s);
    match target {
        LpTarget::Joint { .. } => true,
        LpTarget::MarginalY { .. } | LpTarget::MarginalD { .. } => diag.half_ok && diag.c_window_ok,
        LpTarget::Itt | LpTarget::Ate => diag.overall_sharp,
        LpTarget::Late | LpTarget::ComplierShare => diag.late_sharp,
        LpTarget::ReducedForm => false,
    }
}

/// Domain on which the LP set equals the closed form:
///
/// * joint envelopes at `c = 0` or with `c` strictly inside the interior window;
/// * marginal envelopes and the complier share at `c = 0`;
/// * ITT, LATE and ATE at `c = 0` without defiers.
pub fn equality_expected(target: LpTarget, cell: &ObservedCell, s: SensitivityPoint) -> bool {
    match target {
        LpTarget::Joint { .. } => s.c == 0.0 || s.c < bounds::c_window_cap(cell),
        LpTarget::MarginalY { .. } | LpTarget::MarginalD { .. } | LpTarget::ComplierShare => {
            s.c == 0.0
        }
        LpTarget::Itt | LpTarget::Late | LpTarget::Ate => s.c == 0.0 && s.pi_def == 0.0,
        LpTarget::ReducedForm => false,
    }
}

pub fn compare(
    cell: &ObservedCell,
    s: SensitivityPoint,
    target: LpTarget,
    opts: OracleOptions,
) -> Comparison {
    let closed_form = target.closed_form(cell, s);
    let claimed = claimed_sharp(target, cell, s);
    let equality = equality_expected(target, cell, s);
    let (lp, verdict) = match sharp_bounds_lp(cell, s, target, opts) {
        Ok(iv) => {
            let verdict = if iv.approx_eq(&closed_form, CONFORMANCE_TOL) {
                Verdict::Sharp
            } else if iv.is_subset_of(&closed_form, CONFORMANCE_TOL) {
                Verdict::Contained
            } else {
                Verdict::Violation
            };
            (Some(iv), verdict)
        }
        Err(_) => (None, Verdict::Infeasible),
    };
    Comparison {
        target,
        lp,
        closed_form,
        claimed_sharp: claimed,
        equality_expected: equality,
        verdict,
    }
}

/// A random `(cell, c, pi_def)` triple for conformance sweeps.
#[derive(Clone, Debug, Serialize)]
pub struct ConformanceCase {
    pub cell: ObservedCell,
    pub point: SensitivityPoint,
}

fn dirichlet_like<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // exponential spacings give a flat Dirichlet
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

/// Draws a cell generated by a latent model with `Z` independent of types,
/// then a sensitivity point with `c` below the regular-regime cap and the
/// defier share inside the Fréchet window.
pub fn random_case<R: Rng>(rng: &mut R) -> ConformanceCase {
    let propensity = rng.gen_range(0.2..0.8);
    let mut types = dirichlet_like(rng, NUM_TYPES);
    // thin out defiers so that compliers dominate
    // one case in four is monotone
    let defier_scale = if rng.gen_bool(0.25) {
        0.0
    } else {
        rng.gen_range(0.0..0.5)
    };
    for t in ResponseType::all() {
        if t.is_defier() {
            types[t.index()] *= defier_scale;
        }
    }
    let total: f64 = types.iter().sum();
    let mut mass = [[0.0; 2]; NUM_TYPES];
    for t in ResponseType::all() {
        let m = types[t.index()] / total;
        mass[t.index()] = [m * (1.0 - propensity), m * propensity];
    }
    let model = LatentModel { mass };
    let cell = model.push_forward();
    let true_defiers = model.group_shares().defiers;

    let cap = cell.margin();
    let window_cap = bounds::c_window_cap(&cell).min(cap);
    let c = match rng.gen_range(0..3) {
        0 => 0.0,
        1 if window_cap > 0.0 => rng.gen_range(0.0..window_cap),
        _ => rng.gen_range(0.0..cap),
    };
    let window = defier_window(&cell);
    let pi_def = if rng.gen_bool(0.5) || window.hi <= window.lo {
        true_defiers
    } else {
        rng.gen_range(window.lo..window.hi)
    };
    ConformanceCase {
        cell,
        point: SensitivityPoint { c, pi_def },
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConformanceSummary {
    pub cases: usize,
    pub comparisons: usize,
    /// Random draws rejected because no latent model fits them, plus
    /// comparisons whose LP turned out infeasible.
    pub infeasible: usize,
    pub violations: usize,
    /// Comparisons whose closed-form sharpness conditions hold.
    pub claimed_sharp: usize,
    /// Of those, comparisons where the LP set is strictly smaller.
    pub claimed_sharp_unequal: usize,
    /// Comparisons inside the domain of [`equality_expected`].
    pub equality_expected: usize,
    /// Of those, comparisons where the LP set differs from the closed form.
    pub equality_failures: usize,
}

/// Outcome of one random case across all targets.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub case: ConformanceCase,
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConformanceReport {
    pub summary: ConformanceSummary,
    pub cases: Vec<CaseReport>,
}

/// Draws random cases until `n` feasible ones have been compared against
/// every target of [`LpTarget::catalogue`].
///
/// Case `i` uses its own RNG stream, so the report does not depend on the
/// number of worker threads.
pub fn conformance_sweep(n: usize, seed: u64, opts: OracleOptions) -> ConformanceReport {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rayon::prelude::*;

    let cases: Vec<(CaseReport, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut redraws = 0;
            loop {
                let case = random_case(&mut rng);
                if feasibility_check(&case.cell, case.point, opts).is_none() {
                    redraws += 1;
                    continue;
                }
                let comparisons = LpTarget::catalogue()
                    .into_iter()
                    .map(|t| compare(&case.cell, case.point, t, opts))
                    .collect();
                return (CaseReport { case, comparisons }, redraws);
            }
        })
        .collect();

    let mut summary = ConformanceSummary {
        cases: cases.len(),
        ..Default::default()
    };
    for (report, redraws) in &cases {
        summary.infeasible += redraws;
        for cmp in &report.comparisons {
            summary.comparisons += 1;
            match cmp.verdict {
                Verdict::Violation => summary.violations += 1,
                Verdict::Infeasible => summary.infeasible += 1,
                _ => {}
            }
            if cmp.claimed_sharp {
                summary.claimed_sharp += 1;
                if cmp.verdict != Verdict::Sharp {
                    summary.claimed_sharp_unequal += 1;
                }
            }
            if cmp.equality_expected {
                summary.equality_expected += 1;
                if cmp.verdict != Verdict::Sharp {
                    summary.equality_failures += 1;
                }
            }
        }
    }
    ConformanceReport {
        summary,
        cases: cases.into_iter().map(|(r, _)| r).collect(),
    }
}
