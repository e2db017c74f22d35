use std::collections::BTreeMap;

use breakfront::bounds::{complier_share_bounds, itt_bounds, late_bounds};
use breakfront::estimate::estimate_cells;
use breakfront::frontier::{bf_value, robust_region_contains};
use breakfront::inference::upper_quantile;
use breakfront::{
    validate, Dataset, FrontierQuery, ObservedCell, ObservedDistribution, SensitivityPoint,
};
use proptest::prelude::*;

fn arb_slice() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.01f64..1.0).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.map(|x| x / s)
    })
}

fn arb_cell() -> impl Strategy<Value = ObservedCell> {
    (arb_slice(), arb_slice(), 0.05f64..0.95, 0.1f64..1.0)
        .prop_map(|(z0, z1, p, w)| ObservedCell::new(z0, z1, p, w))
}

fn arb_dist() -> impl Strategy<Value = ObservedDistribution> {
    prop::collection::vec(arb_cell(), 1..4).prop_map(|cells| {
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        let map: BTreeMap<String, ObservedCell> = cells
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                c.weight /= total;
                (format!("x{i}"), c)
            })
            .collect();
        ObservedDistribution::new(map)
    })
}

/// Fraction of the regular-regime cap, so `c` stays admissible.
fn c_in(dist: &ObservedDistribution, frac: f64) -> f64 {
    frac * dist.regime_cap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn itt_region_matches_frontier(dist in arb_dist(), frac in 0.0f64..0.999, pi in 0.0f64..0.5, mu in -0.9f64..0.9) {
        let c = c_in(&dist, frac);
        let q = FrontierQuery::itt(mu).unwrap();
        let bf = bf_value(&dist, c, q);
        let s = SensitivityPoint::new(c, pi).unwrap();
        // per-cell clamping at -1 only matters far below any threshold here
        prop_assume!(itt_bounds(&dist, s).lo > -0.99);
        prop_assume!((pi - bf).abs() > 1e-9);
        prop_assert_eq!(robust_region_contains(&dist, s, q), pi <= bf);
    }

    #[test]
    fn late_region_matches_frontier_with_compliers(dist in arb_dist(), frac in 0.0f64..0.999, pi in 0.0f64..0.5, mu in 0.0f64..0.9) {
        let c = c_in(&dist, frac);
        let q = FrontierQuery::late(mu).unwrap();
        let s = SensitivityPoint::new(c, pi).unwrap();
        let pico = complier_share_bounds(&dist, s);
        prop_assume!(!pico.is_empty() && pico.lo > 1e-9 && pico.hi < 1.0);
        prop_assume!(itt_bounds(&dist, s).lo > -0.99);
        let bf = bf_value(&dist, c, q);
        prop_assume!((pi - bf).abs() > 1e-9);
        prop_assert_eq!(robust_region_contains(&dist, s, q), pi <= bf);
    }

    #[test]
    fn frontier_decreases_in_c(dist in arb_dist(), a in 0.0f64..0.999, b in 0.0f64..0.999, mu in 0.0f64..0.9) {
        let (lo, hi) = (a.min(b), a.max(b));
        for q in [FrontierQuery::itt(mu).unwrap(), FrontierQuery::late(mu).unwrap()] {
            let near = bf_value(&dist, c_in(&dist, lo), q);
            let far = bf_value(&dist, c_in(&dist, hi), q);
            prop_assert!(far <= near + 1e-12, "{:?}: bf({}) = {} > bf({}) = {}", q, hi, far, lo, near);
        }
    }

    #[test]
    fn bounds_stay_in_range(dist in arb_dist(), frac in 0.0f64..0.999, pi in 0.0f64..1.0) {
        let s = SensitivityPoint::new(c_in(&dist, frac), pi).unwrap();
        let itt = itt_bounds(&dist, s);
        prop_assert!(-1.0 <= itt.lo && itt.lo <= itt.hi && itt.hi <= 1.0);
        let late = late_bounds(&dist, s);
        prop_assert!(late.is_empty() || (-1.0 <= late.lo && late.lo <= late.hi && late.hi <= 1.0));
        let pico = complier_share_bounds(&dist, s);
        prop_assert!(pico.is_empty() || (0.0 <= pico.lo && pico.lo <= pico.hi && pico.hi <= 1.0));
    }

    #[test]
    fn quantile_is_monotone(stats in prop::collection::vec(-5.0f64..5.0, 1..200), a1 in 0.01f64..0.5, a2 in 0.01f64..0.5, shift in 0.0f64..1.0) {
        let (small, large) = (a1.min(a2), a1.max(a2));
        prop_assert!(upper_quantile(&stats, small) >= upper_quantile(&stats, large));
        let shifted: Vec<f64> = stats.iter().map(|s| s + shift).collect();
        prop_assert!(upper_quantile(&shifted, small) >= upper_quantile(&stats, small));
        let max = stats.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = stats.iter().cloned().fold(f64::INFINITY, f64::min);
        let q = upper_quantile(&stats, small);
        prop_assert!(min <= q && q <= max);
    }

    #[test]
    fn estimates_validate(rows in prop::collection::vec((0u8..2, 0u8..2, 0u8..2, 0usize..3), 1..300)) {
        // every cell gets one record per arm so that overlap holds
        let mut all: Vec<(u8, u8, u8, String)> = rows.iter().map(|&(y, d, z, x)| (y, d, z, format!("k{x}"))).collect();
        for x in 0..3 {
            all.push((0, 0, 0, format!("k{x}")));
            all.push((1, 1, 1, format!("k{x}")));
        }
        let data = Dataset::from_tuples(all.iter().map(|(y, d, z, x)| (*y, *d, *z, x.as_str()))).unwrap();
        let dist = estimate_cells(&data).unwrap();
        let checked = validate(&dist, false).unwrap();
        let total: f64 = checked.cells.values().map(|c| c.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for cell in checked.cells.values() {
            for z in 0..2 {
                prop_assert!((cell.joint[z].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
