//! Domain types and the probability bookkeeping shared by every other module.
//!
//! An [`ObservedCell`] holds, for one covariate value `x`, the conditional
//! joint `p(y, d | z, x)`, the propensity `P(Z = 1 | x)` and the cell weight
//! `P(X = x)`. Joint slices are stored per arm in the fixed order
//! `(y, d) = (1,1), (1,0), (0,1), (0,0)`, which is also the order of the
//! JSON document:
//!
//! ```json
//! {"cells": {"a": {"joint": [[z=0 slice], [z=1 slice]], "propensity": 0.6, "weight": 1.0}}}
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order of the `(y, d)` pairs inside each joint slice.
pub const JOINT_ORDER: [(u8, u8); 4] = [(1, 1), (1, 0), (0, 1), (0, 0)];

/// Separator used when joining raw covariate values into a cell key.
pub const KEY_SEPARATOR: char = '\u{1f}';

/// Slices whose total is within this distance of 1 are left untouched.
const EXACT_DRIFT: f64 = 1e-14;
/// Slices whose total drifts further than this from 1 are rejected.
pub const REJECT_DRIFT: f64 = 1e-9;

#[inline]
pub fn joint_index(y: u8, d: u8) -> usize {
    debug_assert!(y <= 1 && d <= 1);
    usize::from(1 - y) * 2 + usize::from(1 - d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedCell {
    /// `joint[z][joint_index(y, d)] = p(y, d | z, x)`.
    pub joint: [[f64; 4]; 2],
    /// `P(Z = 1 | X = x)`.
    pub propensity: f64,
    /// `P(X = x)`.
    pub weight: f64,
}

impl ObservedCell {
    pub fn new(joint_z0: [f64; 4], joint_z1: [f64; 4], propensity: f64, weight: f64) -> Self {
        Self {
            joint: [joint_z0, joint_z1],
            propensity,
            weight,
        }
    }

    /// `p(y, d | z, x)`.
    #[inline]
    pub fn p(&self, y: u8, d: u8, z: u8) -> f64 {
        self.joint[usize::from(z)][joint_index(y, d)]
    }

    /// `P(Z = z | x)`.
    #[inline]
    pub fn arm(&self, z: u8) -> f64 {
        if z == 1 {
            self.propensity
        } else {
            1.0 - self.propensity
        }
    }

    /// `p(y | z, x)`.
    pub fn outcome_prob(&self, y: u8, z: u8) -> f64 {
        self.p(y, 1, z) + self.p(y, 0, z)
    }

    /// `p(d | z, x)`.
    pub fn treatment_prob(&self, d: u8, z: u8) -> f64 {
        self.p(1, d, z) + self.p(0, d, z)
    }

    /// `P(Y = y, D = d | x)`, marginalised over the assignment.
    pub fn observational(&self, y: u8, d: u8) -> f64 {
        self.p(y, d, 1) * self.arm(1) + self.p(y, d, 0) * self.arm(0)
    }

    /// `P(D = d | x)`, marginalised over the assignment.
    pub fn observational_treatment(&self, d: u8) -> f64 {
        self.observational(1, d) + self.observational(0, d)
    }

    /// `min(P(Z=1|x), P(Z=0|x))`: the largest `c` for which the regular regime holds.
    pub fn margin(&self) -> f64 {
        self.propensity.min(1.0 - self.propensity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedDistribution {
    pub cells: BTreeMap<String, ObservedCell>,
}

impl ObservedDistribution {
    pub fn new(cells: BTreeMap<String, ObservedCell>) -> Self {
        Self { cells }
    }

    /// A distribution with a single covariate cell of weight one.
    pub fn single(key: impl Into<String>, mut cell: ObservedCell) -> Self {
        cell.weight = 1.0;
        let mut cells = BTreeMap::new();
        cells.insert(key.into(), cell);
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ObservedCell)> {
        self.cells.iter()
    }

    /// Largest admissible `c` in the regular regime: `min_x min(p_{1|x}, p_{0|x})`.
    pub fn regime_cap(&self) -> f64 {
        self.cells
            .values()
            .map(ObservedCell::margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn renormalize(values: &mut [f64], what: &str) -> Result<()> {
    let total: f64 = values.iter().sum();
    let drift = (total - 1.0).abs();
    if drift.is_nan() || drift > REJECT_DRIFT {
        return Err(Error::NotADistribution(format!(
            "{what} sums to {total} (drift {drift:.3e})"
        )));
    }
    if drift > EXACT_DRIFT {
        for v in values.iter_mut() {
            *v /= total;
        }
    }
    Ok(())
}

fn check_probability(value: f64, what: impl FnOnce() -> String) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::NotADistribution(format!("{} = {value}", what())))
    }
}

/// Checks every invariant of the observed distribution.
///
/// Slices that drift from one by no more than `1e-9` are renormalised; larger
/// drift is an error. With `strict` set, every joint entry must lie strictly
/// inside `(0, 1)`.
pub fn validate(dist: &ObservedDistribution, strict: bool) -> Result<ObservedDistribution> {
    if dist.cells.is_empty() {
        return Err(Error::NotADistribution("no covariate cells".into()));
    }
    let mut out = dist.clone();
    for (key, cell) in out.cells.iter_mut() {
        check_probability(cell.propensity, || format!("cell `{key}` propensity"))?;
        check_probability(cell.weight, || format!("cell `{key}` weight"))?;
        if cell.propensity == 0.0 || cell.propensity == 1.0 {
            let arm = if cell.propensity == 0.0 { 1 } else { 0 };
            return Err(Error::EmptyCell {
                cell: key.clone(),
                arm,
            });
        }
        if cell.weight == 0.0 {
            return Err(Error::NotADistribution(format!(
                "cell `{key}` has zero weight"
            )));
        }
        for z in 0..2u8 {
            for (k, &v) in cell.joint[usize::from(z)].iter().enumerate() {
                let (y, d) = JOINT_ORDER[k];
                check_probability(v, || format!("cell `{key}` p({y},{d}|{z})"))?;
            }
            let slice = &mut cell.joint[usize::from(z)];
            if slice.iter().all(|&v| v == 0.0) {
                return Err(Error::EmptyCell {
                    cell: key.clone(),
                    arm: z,
                });
            }
            renormalize(slice, &format!("cell `{key}` arm z={z}"))?;
            if strict {
                for (k, &v) in slice.iter().enumerate() {
                    if v <= 0.0 || v >= 1.0 {
                        let (y, d) = JOINT_ORDER[k];
                        return Err(Error::InteriorViolation {
                            cell: key.clone(),
                            y,
                            d,
                            z,
                            value: v,
                        });
                    }
                }
            }
        }
    }
    let mut weights: Vec<f64> = out.cells.values().map(|c| c.weight).collect();
    renormalize(&mut weights, "cell weights")?;
    for (cell, w) in out.cells.values_mut().zip(weights) {
        cell.weight = w;
    }
    Ok(out)
}

/// The pair `(c, pi_def)` parametrising violations of independence and monotonicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub c: f64,
    pub pi_def: f64,
}

impl SensitivityPoint {
    pub fn new(c: f64, pi_def: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("c = {c} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&pi_def) {
            return Err(Error::InvalidParameter(format!(
                "pi_def = {pi_def} outside [0, 1]"
            )));
        }
        Ok(Self { c, pi_def })
    }

    /// Rejects points with `c` at or above the regular-regime cap of `dist`.
    pub fn check_regime(&self, dist: &ObservedDistribution) -> Result<()> {
        let cap = dist.regime_cap();
        if self.c >= cap {
            return Err(Error::GridOutsideRegime { max_c: self.c, cap });
        }
        Ok(())
    }
}

/// A closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// The empty set, `[+inf, -inf]`.
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi + 1e-12, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// `self ⊆ other`, allowing `tol` of slack at both ends.
    pub fn is_subset_of(&self, other: &Interval, tol: f64) -> bool {
        self.lo >= other.lo - tol && self.hi <= other.hi + tol
    }

    /// Both endpoints agree within `tol`.
    pub fn approx_eq(&self, other: &Interval, tol: f64) -> bool {
        (self.lo - other.lo).abs() <= tol && (self.hi - other.hi).abs() <= tol
    }

    /// Clamps both ends into `[lo, hi]`; the empty set stays empty.
    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.is_empty() {
            return self;
        }
        Self {
            lo: self.lo.clamp(lo, hi),
            hi: self.hi.clamp(lo, hi),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.6}, {:.6}]", self.lo, self.hi)
    }
}

/// Conclusion whose robustness is studied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Itt,
    Late,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Itt => "itt",
            Target::Late => "late",
        })
    }
}

/// The conclusion `target >= mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierQuery {
    pub target: Target,
    pub mu: f64,
}

impl FrontierQuery {
    pub fn new(target: Target, mu: f64) -> Result<Self> {
        match target {
            Target::Itt if !(-1.0..=1.0).contains(&mu) => Err(Error::InvalidParameter(format!(
                "ITT threshold mu = {mu} outside [-1, 1]"
            ))),
            Target::Late if !(mu > -1.0 && mu <= 1.0) => Err(Error::InvalidParameter(format!(
                "LATE threshold mu = {mu} outside (-1, 1]"
            ))),
            _ => Ok(Self { target, mu }),
        }
    }

    pub fn itt(mu: f64) -> Result<Self> {
        Self::new(Target::Itt, mu)
    }

    pub fn late(mu: f64) -> Result<Self> {
        Self::new(Target::Late, mu)
    }
}

/// One observation `(y, d, z, x)`; `cell` indexes [`Dataset::keys`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Record {
    pub y: u8,
    pub d: u8,
    pub z: u8,
    pub cell: u32,
}

/// Micro-data with interned covariate keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    keys: Vec<String>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(keys: Vec<String>, records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, r) in records.iter().enumerate() {
            if r.y > 1 || r.d > 1 || r.z > 1 {
                return Err(Error::InvalidParameter(format!(
                    "record {i} is not binary: (y, d, z) = ({}, {}, {})",
                    r.y, r.d, r.z
                )));
            }
            if r.cell as usize >= keys.len() {
                return Err(Error::InvalidParameter(format!(
                    "record {i} refers to unknown cell {}",
                    r.cell
                )));
            }
        }
        Ok(Self { keys, records })
    }

    /// Builds a dataset from `(y, d, z, key)` tuples, interning keys in order of appearance.
    pub fn from_tuples<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u8, u8, u8, &'a str)>,
    {
        let mut index: BTreeMap<&'a str, u32> = BTreeMap::new();
        let mut keys = Vec::new();
        let mut records = Vec::new();
        for (y, d, z, key) in rows {
            let cell = *index.entry(key).or_insert_with(|| {
                keys.push(key.to_string());
                (keys.len() - 1) as u32
            });
            records.push(Record { y, d, z, cell });
        }
        Self::new(keys, records)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn key_of(&self, record: &Record) -> &str {
        &self.keys[record.cell as usize]
    }

    /// Same keys, different records (used by resampling).
    pub(crate) fn with_records(&self, records: Vec<Record>) -> Self {
        Self {
            keys: self.keys.clone(),
            records,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_cell() -> ObservedCell {
        ObservedCell::new(
            [0.125, 0.125, 0.125, 0.625],
            [1.0 / 3.0, 1.0 / 6.0, 5.0 / 12.0, 1.0 / 12.0],
            0.6,
            0.5,
        )
    }

    fn two_cells(w0: f64, w1: f64) -> ObservedDistribution {
        let mut cells = BTreeMap::new();
        let mut a = reference_cell();
        a.weight = w0;
        let mut b = reference_cell();
        b.weight = w1;
        cells.insert("0".to_string(), a);
        cells.insert("1".to_string(), b);
        ObservedDistribution::new(cells)
    }

    #[test]
    fn joint_order_matches_index() {
        for (k, &(y, d)) in JOINT_ORDER.iter().enumerate() {
            assert_eq!(joint_index(y, d), k);
        }
    }

    #[test]
    fn reference_distribution_is_accepted() {
        let dist = two_cells(0.5, 0.5);
        let checked = validate(&dist, true).unwrap();
        assert_eq!(checked, dist);
    }

    #[test]
    fn boundary_entry_rejected_in_strict_mode() {
        let cell = ObservedCell::new([0.25; 4], [1.0, 0.0, 0.0, 0.0], 0.5, 1.0);
        let dist = ObservedDistribution::single("a", cell);
        assert!(matches!(
            validate(&dist, true),
            Err(Error::InteriorViolation { z: 1, .. })
        ));
        assert!(validate(&dist, false).is_ok());
    }

    #[test]
    fn excess_weights_rejected() {
        assert!(matches!(
            validate(&two_cells(0.7, 0.4), false),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn zero_mass_arm_is_empty_cell() {
        let mut cell = reference_cell();
        cell.propensity = 1.0;
        let dist = ObservedDistribution::single("a", cell);
        assert!(matches!(
            validate(&dist, false),
            Err(Error::EmptyCell { arm: 0, .. })
        ));
        let cell = ObservedCell::new([0.0; 4], [0.25; 4], 0.5, 1.0);
        assert!(matches!(
            validate(&ObservedDistribution::single("a", cell), false),
            Err(Error::EmptyCell { arm: 0, .. })
        ));
    }

    #[test]
    fn negative_entry_rejected() {
        let cell = ObservedCell::new([0.5, 0.6, -0.1, 0.0], [0.25; 4], 0.5, 1.0);
        assert!(matches!(
            validate(&ObservedDistribution::single("a", cell), false),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn small_drift_is_repaired() {
        let cell = ObservedCell::new([0.25, 0.25, 0.25, 0.25 + 4e-13], [0.25; 4], 0.5, 1.0);
        let out = validate(&ObservedDistribution::single("a", cell.clone()), false).unwrap();
        let repaired = &out.cells["a"];
        let total: f64 = repaired.joint[0].iter().sum();
        assert!((total - 1.0).abs() <= 1e-15);
        for k in 0..4 {
            assert!((repaired.joint[0][k] - cell.joint[0][k]).abs() <= 1e-12);
        }
        let big = ObservedCell::new([0.25, 0.25, 0.25, 0.26], [0.25; 4], 0.5, 1.0);
        assert!(validate(&ObservedDistribution::single("a", big), false).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dist = two_cells(0.5, 0.5);
        let text = dist.to_json().unwrap();
        assert!(text.contains("\"joint\""));
        let back = ObservedDistribution::from_json(&text).unwrap();
        assert_eq!(back, dist);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn frontier_query_rejects_late_mu_minus_one() {
        assert!(FrontierQuery::late(-1.0).is_err());
        assert!(FrontierQuery::itt(-1.0).is_ok());
        assert!(FrontierQuery::itt(1.5).is_err());
    }

    #[test]
    fn sensitivity_point_ranges() {
        assert!(SensitivityPoint::new(-0.1, 0.0).is_err());
        assert!(SensitivityPoint::new(0.1, 1.1).is_err());
        let s = SensitivityPoint::new(0.4, 0.0).unwrap();
        assert!(matches!(
            s.check_regime(&two_cells(0.5, 0.5)),
            Err(Error::GridOutsideRegime { .. })
        ));
    }

    #[test]
    fn dataset_interns_keys() {
        let data = Dataset::from_tuples([(1, 1, 1, "a"), (0, 0, 0, "b"), (1, 0, 0, "a")]).unwrap();
        assert_eq!(data.keys(), &["a".to_string(), "b".to_string()]);
        assert_eq!(data.records()[2].cell, 0);
        assert!(Dataset::from_tuples(std::iter::empty()).is_err());
        assert!(Dataset::from_tuples([(2, 0, 0, "a")]).is_err());
    }

    use proptest::prelude::*;

    fn arb_slice() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(0.0f64..1.0).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.map(|x| x / s))
        })
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(z0 in arb_slice(), z1 in arb_slice(), p in 0.05f64..0.95) {
            let dist = ObservedDistribution::single("k", ObservedCell::new(z0, z1, p, 1.0));
            let once = validate(&dist, false).unwrap();
            let twice = validate(&once, false).unwrap();
            prop_assert_eq!(&once, &twice);
            for z in 0..2 {
                for k in 0..4 {
                    prop_assert!((once.cells["k"].joint[z][k] - dist.cells["k"].joint[z][k]).abs() <= 1e-12);
                }
            }
        }
    }
}
