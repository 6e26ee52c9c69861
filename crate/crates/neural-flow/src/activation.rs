//! The parameterized leaky-ReLU family and its slope algebra.
//!
//! Every nonlinearity in this crate is drawn from the one-parameter family
//! `t >= 0 -> t`, `t < 0 -> a*t`. The family is closed under the algebra the
//! splitting discretization needs (see [`crate::discretize::solve_implicit_step`]),
//! which is why it gets a dedicated type instead of a bare closure.

use serde::{Deserialize, Serialize};

use crate::state::LatentState;

/// Leaky-ReLU with negative-branch slope `a`. `a = 1` is the identity,
/// `a = 0` is plain ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationFamily {
    pub slope_a: f64,
}

impl ActivationFamily {
    pub fn new(slope_a: f64) -> Self {
        Self { slope_a }
    }

    pub fn relu() -> Self {
        Self { slope_a: 0.0 }
    }

    pub fn identity() -> Self {
        Self { slope_a: 1.0 }
    }

    /// Pointwise evaluation.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 0.0 {
            t
        } else {
            self.slope_a * t
        }
    }

    /// Pointwise slope; the kink at 0 takes the positive-branch slope 1.
    #[inline]
    pub fn slope_at(&self, t: f64) -> f64 {
        if t >= 0.0 {
            1.0
        } else {
            self.slope_a
        }
    }

    /// Global Lipschitz constant `max(1, |a|)`.
    pub fn lipschitz(&self) -> f64 {
        self.slope_a.abs().max(1.0)
    }

    pub fn is_identity(&self) -> bool {
        self.slope_a == 1.0
    }

    /// Apply componentwise to every sample of every channel.
    pub fn activate(&self, s: &LatentState) -> LatentState {
        s.map(|t| self.eval(t))
    }

    /// Both sides of the odd-part identity `sigma_a(t) - sigma_a(-t) = (1 + a) t`,
    /// returned as `(lhs, rhs)` so callers can assert equality.
    pub fn reflection_identity(&self, t: f64) -> (f64, f64) {
        (self.eval(t) - self.eval(-t), (1.0 + self.slope_a) * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::LatentState;
    use proptest::prelude::*;

    #[test]
    fn activate_piecewise_definition() {
        let fam = ActivationFamily::new(0.5);
        let s = LatentState::scalars(&[-2.0, 0.0, 3.0]);
        assert_eq!(fam.activate(&s).channel(0), &[-1.0]);
        assert_eq!(fam.activate(&s).channel(1), &[0.0]);
        assert_eq!(fam.activate(&s).channel(2), &[3.0]);
    }

    #[test]
    fn activate_identity_slope() {
        let fam = ActivationFamily::identity();
        let s = LatentState::scalars(&[-7.0, 4.0]);
        assert_eq!(fam.activate(&s), s);
    }

    #[test]
    fn activate_negative_slope() {
        let fam = ActivationFamily::new(-0.25);
        assert_eq!(fam.eval(-4.0), 1.0);
    }

    #[test]
    fn reflection_identity_examples() {
        let (lhs, rhs) = ActivationFamily::new(0.3).reflection_identity(-2.0);
        assert!((lhs - -2.6).abs() < 1e-15);
        assert!((rhs - -2.6).abs() < 1e-15);

        let (lhs, rhs) = ActivationFamily::relu().reflection_identity(5.0);
        assert_eq!((lhs, rhs), (5.0, 5.0));

        let (lhs, rhs) = ActivationFamily::new(-3.7).reflection_identity(0.0);
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn double_activation_is_activation_for_identity_slope() {
        let fam = ActivationFamily::identity();
        let s = LatentState::scalars(&[-1.5, 0.0, 2.0]);
        assert_eq!(fam.activate(&fam.activate(&s)), fam.activate(&s));
    }

    proptest! {
        #[test]
        fn reflection_identity_holds(a in -4.0..4.0f64, t in -100.0..100.0f64) {
            let (lhs, rhs) = ActivationFamily::new(a).reflection_identity(t);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn lipschitz_bound_holds(a in -4.0..4.0f64, t1 in -50.0..50.0f64, t2 in -50.0..50.0f64) {
            let fam = ActivationFamily::new(a);
            let lhs = (fam.eval(t1) - fam.eval(t2)).abs();
            prop_assert!(lhs <= fam.lipschitz() * (t1 - t2).abs() * (1.0 + 1e-12));
        }
    }
}
