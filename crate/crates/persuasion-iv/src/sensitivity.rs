//! Sensitivity of the joint potential-outcome distribution to the
//! monotone-treatment-response assumption.
//!
//! Postulating a demobilised share `delta` among compliers pins the
//! remaining joint probabilities from the identified marginals in
//! closed form: `p11 = P[Y(0)=1|C] - delta`, `p00 = P[Y(1)=0|C] -
//! delta`, and `p01` absorbs the rest of the unit mass.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimands::MarginalPo;

/// Joint distribution implied by one postulated demobilised share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub delta: f64,
    pub p11: f64,
    pub p00: f64,
    pub p01: f64,
    /// Set when any implied probability falls outside `[0, 1]`; values
    /// are reported raw, never clipped.
    pub out_of_range: bool,
}

/// Largest admissible demobilised share for the given marginals.
pub fn max_delta(marginals: &MarginalPo) -> f64 {
    marginals.y0_one().min(1.0 - marginals.y1_one())
}

/// Evenly spaced admissible grid from zero to the maximum, inclusive.
pub fn default_deltas(marginals: &MarginalPo, count: usize) -> Vec<f64> {
    let hi = max_delta(marginals).max(0.0);
    if count <= 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| hi * i as f64 / (count - 1) as f64)
        .collect()
}

/// Recomputes the joint distribution for each postulated share.
pub fn sensitivity_curve(marginals: &MarginalPo, deltas: &[f64]) -> Result<Vec<SensitivityPoint>> {
    let hi = max_delta(marginals);
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(0.0..=hi + 1e-12).contains(&delta) {
            return Err(Error::InadmissibleDelta { delta, max: hi });
        }
        let p11 = marginals.y0_one() - delta;
        let p00 = (1.0 - marginals.y1_one()) - delta;
        let p01 = 1.0 - p11 - p00 - delta;
        let out_of_range = [p11, p00, p01].iter().any(|&v| !(0.0..=1.0).contains(&v));
        points.push(SensitivityPoint {
            delta,
            p11,
            p00,
            p01,
            out_of_range,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn marginals(y0_one: f64, y1_one: f64) -> MarginalPo {
        MarginalPo {
            p_y0: [1.0 - y0_one, y0_one],
            p_y1: [1.0 - y1_one, y1_one],
        }
    }

    #[test]
    fn zero_delta_reproduces_the_identified_joint() {
        let m = marginals(0.302, 0.381);
        let pts = sensitivity_curve(&m, &[0.0]).unwrap();
        assert!((pts[0].p11 - 0.302).abs() < 1e-12);
        assert!((pts[0].p00 - 0.619).abs() < 1e-12);
        assert!((pts[0].p01 - 0.079).abs() < 1e-12);
        assert!(!pts[0].out_of_range);
    }

    #[test]
    fn full_sample_fixture_rows() {
        let m = marginals(0.302, 0.381);
        let pts = sensitivity_curve(&m, &[0.1, 0.2]).unwrap();
        assert!((pts[0].p11 - 0.202).abs() < 1e-12);
        assert!((pts[0].p00 - 0.519).abs() < 1e-12);
        assert!((pts[0].p01 - 0.179).abs() < 1e-12);
        assert!((pts[1].p11 - 0.102).abs() < 1e-12);
        assert!((pts[1].p00 - 0.419).abs() < 1e-12);
        assert!((pts[1].p01 - 0.279).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_delta_reports_the_interval() {
        let m = marginals(0.302, 0.381);
        let err = sensitivity_curve(&m, &[0.35]).unwrap_err();
        match err {
            Error::InadmissibleDelta { delta, max } => {
                assert_eq!(delta, 0.35);
                assert!((max - 0.302).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn endpoint_exhausts_one_probability() {
        let m = marginals(0.302, 0.381);
        let hi = max_delta(&m);
        let pts = sensitivity_curve(&m, &[hi]).unwrap();
        let min = pts[0].p11.min(pts[0].p00);
        assert!(min.abs() < 1e-12);
    }

    #[test]
    fn default_grid_spans_the_admissible_interval() {
        let m = marginals(0.302, 0.381);
        let deltas = default_deltas(&m, 6);
        assert_eq!(deltas.len(), 6);
        assert_eq!(deltas[0], 0.0);
        assert!((deltas[5] - max_delta(&m)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn probabilities_always_sum_to_one(
            y0 in 0.0f64..1.0,
            y1 in 0.0f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let m = marginals(y0, y1);
            let delta = frac * max_delta(&m).max(0.0);
            if let Ok(pts) = sensitivity_curve(&m, &[delta]) {
                let p = &pts[0];
                prop_assert!((p.p11 + p.p00 + p.p01 + p.delta - 1.0).abs() < 1e-12);
            }
        }

        // the closed form gives p01(delta) = p01(0) + delta, matching
        // the published sensitivity tables row for row
        #[test]
        fn mobilised_share_is_affine_in_delta_with_unit_slope(
            y0 in 0.05f64..0.9,
            y1 in 0.05f64..0.9,
            frac in 0.0f64..1.0,
        ) {
            let m = marginals(y0, y1);
            let hi = max_delta(&m).max(0.0);
            let delta = frac * hi;
            if let Ok(pts) = sensitivity_curve(&m, &[0.0, delta]) {
                let expected = pts[0].p01 + delta;
                prop_assert!((pts[1].p01 - expected).abs() < 1e-10);
            }
        }
    }
}
