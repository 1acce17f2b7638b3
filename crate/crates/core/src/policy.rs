//! Modified treatment policies acting on a scalar exposure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shift by `delta`, tapering linearly to zero over the last `epsilon` of the
/// support `[c, d]`. With `r = 1` the policy is only defined on the
/// subpopulation `[c, d - epsilon - delta]` and the taper never engages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperedShiftPolicy {
    delta: f64,
    epsilon: f64,
    r: u8,
    c: f64,
    d: f64,
}

impl TaperedShiftPolicy {
    pub fn new(delta: f64, epsilon: f64, r: u8, c: f64, d: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidPolicy(m));
        if ![delta, epsilon, c, d].iter().all(|v| v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if delta <= 0.0 {
            return bad(format!("delta must be positive, got {delta}"));
        }
        if epsilon < 0.0 {
            return bad(format!("epsilon must be nonnegative, got {epsilon}"));
        }
        if r > 1 {
            return bad(format!("r must be 0 or 1, got {r}"));
        }
        if !(c + delta < d - epsilon) {
            return bad(format!(
                "need c + delta < d - epsilon, got {} >= {}",
                c + delta,
                d - epsilon
            ));
        }
        if r == 1 && epsilon + delta > d - c {
            return bad("r = 1 requires epsilon + delta <= d - c".into());
        }
        // With r = 0 and no taper the top of the support collapses onto d.
        if r == 0 && epsilon == 0.0 {
            return bad("epsilon must be positive when r = 0".into());
        }
        Ok(Self { delta, epsilon, r, c, d })
    }

    /// Plain shift on the subpopulation `[c, d - delta]`.
    pub fn shift(delta: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(delta, 0.0, 1, c, d)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn r(&self) -> u8 {
        self.r
    }
    pub fn support(&self) -> (f64, f64) {
        (self.c, self.d)
    }

    fn rf(&self) -> f64 {
        f64::from(self.r)
    }

    /// Domain `[c, d - r(eps + delta)]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.c, self.d - self.rf() * (self.epsilon + self.delta))
    }

    /// Image `[c + delta, d - r eps]`.
    pub fn image(&self) -> (f64, f64) {
        (self.c + self.delta, self.d - self.rf() * self.epsilon)
    }

    pub fn in_s(&self, a: f64) -> bool {
        let (lo, hi) = self.domain();
        lo <= a && a <= hi
    }

    pub fn in_image(&self, a: f64) -> bool {
        let (lo, hi) = self.image();
        lo <= a && a <= hi
    }

    pub fn apply(&self, a: f64) -> Result<f64> {
        if !self.in_s(a) {
            let (lo, hi) = self.domain();
            return Err(Error::PolicyDomain { what: "domain", value: a, lo, hi });
        }
        let (delta, eps, d) = (self.delta, self.epsilon, self.d);
        let q = if a <= d - eps - delta { a + delta } else { a + delta * (d - a) / (delta + eps) };
        // S maps onto the image; clamping only absorbs rounding at the ends
        let (lo, hi) = self.image();
        Ok(q.clamp(lo, hi))
    }

    /// V(a): 1 on the plateau, linear decay on the taper, 0 off the image.
    pub fn taper_weight(&self, a: f64) -> f64 {
        let (lo, hi) = self.image();
        let (eps, d) = (self.epsilon, self.d);
        if lo <= a && a <= d - eps {
            1.0
        } else if d - eps < a && a <= hi {
            (d - a) / eps
        } else {
            0.0
        }
    }

    pub fn inverse(&self, a_prime: f64) -> Result<f64> {
        if !self.in_image(a_prime) {
            let (lo, hi) = self.image();
            return Err(Error::PolicyDomain { what: "image", value: a_prime, lo, hi });
        }
        let (lo, hi) = self.domain();
        Ok((a_prime - self.delta * self.taper_weight(a_prime)).clamp(lo, hi))
    }

    /// Derivative of the forward map. Left limit at the kink.
    pub fn derivative(&self, a: f64) -> Result<f64> {
        self.apply(a)?;
        if a <= self.d - self.epsilon - self.delta {
            Ok(1.0)
        } else {
            Ok(self.epsilon / (self.delta + self.epsilon))
        }
    }

    /// Derivative of the inverse map on the image. Left limit at the kink.
    pub fn inverse_derivative(&self, a_prime: f64) -> Result<f64> {
        self.inverse(a_prime)?;
        if a_prime <= self.d - self.epsilon {
            Ok(1.0)
        } else {
            Ok(1.0 + self.delta / self.epsilon)
        }
    }
}

/// A policy as consumed by the estimators. `Identity` is the no-intervention
/// limit: q(a) = a on the whole real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    TaperedShift(TaperedShiftPolicy),
    Identity,
}

impl Policy {
    pub fn apply(&self, a: f64) -> Result<f64> {
        match self {
            Policy::TaperedShift(p) => p.apply(a),
            Policy::Identity => Ok(a),
        }
    }

    /// q(a) when a is in S, otherwise None.
    pub fn shifted(&self, a: f64) -> Option<f64> {
        self.apply(a).ok()
    }

    pub fn in_s(&self, a: f64) -> bool {
        match self {
            Policy::TaperedShift(p) => p.in_s(a),
            Policy::Identity => a.is_finite(),
        }
    }

    pub fn in_image(&self, a: f64) -> bool {
        match self {
            Policy::TaperedShift(p) => p.in_image(a),
            Policy::Identity => a.is_finite(),
        }
    }

    pub fn taper_weight(&self, a: f64) -> f64 {
        match self {
            Policy::TaperedShift(p) => p.taper_weight(a),
            Policy::Identity => 0.0,
        }
    }

    pub fn as_tapered(&self) -> Option<&TaperedShiftPolicy> {
        match self {
            Policy::TaperedShift(p) => Some(p),
            Policy::Identity => None,
        }
    }
}

impl From<TaperedShiftPolicy> for Policy {
    fn from(p: TaperedShiftPolicy) -> Self {
        Policy::TaperedShift(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn main_policy() -> TaperedShiftPolicy {
        TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).unwrap()
    }

    #[test]
    fn apply_examples() {
        let p = main_policy();
        assert_eq!(p.apply(0.0).unwrap(), 0.4);
        assert!((p.apply(2.0).unwrap() - 2.0).abs() < 1e-15);
        let want = 1.0 + (0.4 / 1.4) * (2.0 - 1.0);
        assert!((p.apply(1.0).unwrap() - want).abs() < 1e-15);
        assert!((want - 1.285714).abs() < 1e-6);
        assert!(p.apply(2.1).is_err());
        assert!(p.apply(-2.1).is_err());
    }

    #[test]
    fn inverse_examples() {
        let p = main_policy();
        assert!((p.inverse(0.4).unwrap() - 0.0).abs() < 1e-15);
        assert!((p.inverse(2.0).unwrap() - 2.0).abs() < 1e-15);
        let a1 = p.apply(1.0).unwrap();
        assert!((p.inverse(a1).unwrap() - 1.0).abs() < 1e-12);
        assert!(p.inverse(-1.7).is_err());
    }

    #[test]
    fn endpoints_round_trip() {
        for (delta, eps, r, c, w) in [(0.37, 0.71, 1, -2.471, 3.3), (1.1, 0.3, 1, 0.2, 1.9), (0.05, 1.9, 0, -3.0, 5.7)] {
            let p = TaperedShiftPolicy::new(delta, eps, r, c, c + w).unwrap();
            let (lo, hi) = p.domain();
            for a in [lo, hi] {
                let q = p.apply(a).unwrap();
                assert!(p.in_image(q));
                assert!((p.inverse(q).unwrap() - a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn taper_weight_examples() {
        let p = main_policy();
        assert_eq!(p.taper_weight(0.8), 1.0);
        assert!((p.taper_weight(1.5) - 0.5).abs() < 1e-15);
        assert_eq!(p.taper_weight(2.2), 0.0);
        assert_eq!(p.taper_weight(-1.7), 0.0);
    }

    #[test]
    fn membership_examples() {
        let restricted = TaperedShiftPolicy::new(0.4, 0.0, 1, -2.0, 2.0).unwrap();
        assert!(!restricted.in_s(1.7));
        assert!(restricted.in_s(1.6));
        // The image starts at c + delta.
        let p = main_policy();
        assert!(!p.in_image(-1.7));
        assert!(p.in_image(-1.6));
        let from_zero = TaperedShiftPolicy::new(0.4, 1.0, 0, 0.0, 2.0).unwrap();
        assert!(!from_zero.in_image(0.0));
        assert!(from_zero.in_image(0.4));
        for a in [-2.0, -1.0, 0.0, 1.9, 2.0] {
            assert!(p.in_s(a));
        }
    }

    #[test]
    fn endpoints_map_onto_image() {
        for p in [
            main_policy(),
            TaperedShiftPolicy::new(0.4, 0.0, 1, -2.0, 2.0).unwrap(),
            TaperedShiftPolicy::new(0.3, 0.5, 1, -1.0, 3.0).unwrap(),
        ] {
            let (lo, hi) = p.domain();
            let (ilo, ihi) = p.image();
            assert!((p.apply(lo).unwrap() - ilo).abs() < 1e-14);
            assert!((p.apply(hi).unwrap() - ihi).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_at_kinks_uses_left_limit() {
        let p = main_policy();
        assert_eq!(p.derivative(0.6).unwrap(), 1.0);
        assert!((p.derivative(0.7).unwrap() - 1.0 / 1.4).abs() < 1e-15);
        assert_eq!(p.inverse_derivative(1.0).unwrap(), 1.0);
        assert!((p.inverse_derivative(1.1).unwrap() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TaperedShiftPolicy::new(0.0, 1.0, 0, -2.0, 2.0).is_err());
        assert!(TaperedShiftPolicy::new(0.4, -1.0, 0, -2.0, 2.0).is_err());
        assert!(TaperedShiftPolicy::new(0.4, 1.0, 2, -2.0, 2.0).is_err());
        assert!(TaperedShiftPolicy::new(2.0, 2.0, 0, -2.0, 2.0).is_err());
        assert!(TaperedShiftPolicy::new(0.4, 0.0, 0, -2.0, 2.0).is_err());
        assert!(TaperedShiftPolicy::shift(0.4, -2.0, 2.0).is_ok());
    }

    #[test]
    fn identity_policy() {
        let p = Policy::Identity;
        assert_eq!(p.apply(3.5).unwrap(), 3.5);
        assert!(p.in_s(-10.0) && p.in_image(10.0));
    }
}
