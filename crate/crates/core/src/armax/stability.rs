use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::ArmaxModel;

/// Stability verdict for one output channel's autoregressive polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    /// True iff every root lies strictly inside the unit circle.
    pub stable: bool,
    /// Largest root magnitude; 0 when there are no AR lags.
    pub max_root_magnitude: f64,
}

/// Checks each output channel's AR polynomial
/// `z^na - alpha_1 z^(na-1) - ... - alpha_na` for roots on or outside the
/// unit circle. Exogenous and moving-average terms do not affect bounded-
/// input stability of the recursion, so only the AR part is examined.
pub fn check_stability(model: &ArmaxModel) -> Vec<StabilityEntry> {
    model.output_coeffs().iter().map(|c| ar_stability(&c.ar)).collect()
}

/// Root check via the companion matrix of the AR polynomial; eigenvalues of
/// the companion are exactly the polynomial roots.
pub(crate) fn ar_stability(ar: &[f64]) -> StabilityEntry {
    let n = ar.len();
    if n == 0 {
        return StabilityEntry { stable: true, max_root_magnitude: 0.0 };
    }
    let mut companion = DMatrix::zeros(n, n);
    for (j, &a) in ar.iter().enumerate() {
        companion[(0, j)] = a;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let max_root_magnitude = companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    StabilityEntry { stable: max_root_magnitude < 1.0, max_root_magnitude }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn real_roots_inside_the_circle_are_stable() {
        // z^2 - 1.5 z + 0.56 factors as (z - 0.7)(z - 0.8).
        let entry = ar_stability(&[1.5, -0.56]);
        assert!(entry.stable);
        assert_abs_diff_eq!(entry.max_root_magnitude, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn root_outside_the_circle_is_flagged() {
        // z^2 - 1.5 z + 0.54 factors as (z - 0.6)(z - 0.9)... scaled up:
        // alpha_1 = 1.9, alpha_2 = -0.88 gives roots 0.8 and 1.1.
        let entry = ar_stability(&[1.9, -0.88]);
        assert!(!entry.stable);
        assert_abs_diff_eq!(entry.max_root_magnitude, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn unit_root_counts_as_unstable() {
        // y(t) = y(t-1): a pure integrator with its root exactly at 1.
        let entry = ar_stability(&[1.0]);
        assert!(!entry.stable);
        assert_abs_diff_eq!(entry.max_root_magnitude, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complex_pair_magnitude_is_detected() {
        // z^2 - 2 r cos(w) z + r^2 has a conjugate pair of magnitude r.
        let r: f64 = 0.95;
        let w: f64 = 0.4;
        let entry = ar_stability(&[2.0 * r * w.cos(), -(r * r)]);
        assert!(entry.stable);
        assert_abs_diff_eq!(entry.max_root_magnitude, r, epsilon = 1e-12);
    }

    #[test]
    fn empty_ar_part_is_trivially_stable() {
        let entry = ar_stability(&[]);
        assert!(entry.stable);
        assert_eq!(entry.max_root_magnitude, 0.0);
    }
}
