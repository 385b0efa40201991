//! Extremal dependence kernels.
//!
//! The Brown–Resnick r-Pareto model is driven by a Gaussian process with
//! stationary increments whose variogram is
//!
//! ```text
//! γ(h, τ; Θ, V) = 2 (β₁ ‖h − τV‖^α₁ + β₂ |τ|^α₂)
//! ```
//!
//! i.e. a separable power variogram evaluated in a frame moving with the
//! advection velocity V. The r-extremogram follows as
//! `χ = 2(1 − Φ(√(γ/2)))`.
//!
//! Space is measured in meters and time in dataset steps; velocities are
//! meters per step.

use crate::error::{Error, Result};
use crate::normal;

/// Θ = (β₁, β₂, α₁, α₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramParams {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl VariogramParams {
    pub fn new(beta1: f64, beta2: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        let p = Self {
            beta1,
            beta2,
            alpha1,
            alpha2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v > 0.0 && v <= 2.0) {
                return Err(Error::param(format!("{name} must lie in (0, 2], got {v}")));
            }
        }
        Ok(())
    }

    /// Spatial part γ_S(d) = 2β₁ d^α₁ for a distance d ≥ 0.
    #[inline]
    pub fn spatial(&self, dist: f64) -> f64 {
        if dist == 0.0 {
            0.0
        } else {
            2.0 * self.beta1 * dist.powf(self.alpha1)
        }
    }

    /// Temporal part γ_T(τ) = 2β₂ |τ|^α₂.
    #[inline]
    pub fn temporal(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            0.0
        } else {
            2.0 * self.beta2 * tau.abs().powf(self.alpha2)
        }
    }

    /// Re-expresses the parameters after rescaling lags: distances become
    /// `d / space_factor` and time lags `τ / time_factor`. The exponents are
    /// unchanged.
    pub fn rescaled(&self, space_factor: f64, time_factor: f64) -> Self {
        Self {
            beta1: self.beta1 * space_factor.powf(self.alpha1),
            beta2: self.beta2 * time_factor.powf(self.alpha2),
            ..*self
        }
    }
}

/// Planar velocity (meters per time step in canonical units).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { vx: 0.0, vy: 0.0 };

    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            vx: self.vx * c,
            vy: self.vy * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Magnitude transform A(V) = η₁ ‖V‖^η₂ · V/‖V‖ applied to empirical velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvectionTransform {
    pub eta1: f64,
    pub eta2: f64,
}

impl AdvectionTransform {
    pub const IDENTITY: AdvectionTransform = AdvectionTransform { eta1: 1.0, eta2: 1.0 };

    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        let a = Self { eta1, eta2 };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 > 0.0) || !self.eta1.is_finite() {
            return Err(Error::param(format!("eta1 must be > 0, got {}", self.eta1)));
        }
        if !(self.eta2 >= 0.0) || !self.eta2.is_finite() {
            return Err(Error::param(format!("eta2 must be >= 0, got {}", self.eta2)));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, v: Velocity) -> Velocity {
        let speed = v.speed();
        if speed == 0.0 {
            return Velocity::ZERO;
        }
        let factor = self.eta1 * speed.powf(self.eta2 - 1.0);
        v.scaled(factor)
    }

    /// The same transform acting on velocities expressed in other units,
    /// V' = cV, so that A'(cV) = c·A(V). Only η₁ changes: η₁' = η₁ c^{1−η₂}.
    pub fn rescaled(&self, c: f64) -> Self {
        Self {
            eta1: self.eta1 * c.powf(1.0 - self.eta2),
            eta2: self.eta2,
        }
    }
}

/// γ(h, τ; Θ, V).
#[inline]
pub fn variogram(h: (f64, f64), tau: f64, theta: &VariogramParams, v: Velocity) -> f64 {
    let dx = h.0 - tau * v.vx;
    let dy = h.1 - tau * v.vy;
    theta.spatial(dx.hypot(dy)) + theta.temporal(tau)
}

/// χ_r = 2(1 − Φ(√(γ/2))) for a given variogram value.
#[inline]
pub fn chi_from_gamma(gamma: f64) -> f64 {
    // 2(1 − Φ(x)) = erfc(x/√2) and x/√2 = √γ / 2.
    libm::erfc(0.5 * gamma.max(0.0).sqrt())
}

/// r-extremogram χ_r(h, τ; Θ, V).
pub fn chi_r(h: (f64, f64), tau: f64, theta: &VariogramParams, v: Velocity) -> f64 {
    chi_from_gamma(variogram(h, tau, theta, v))
}

/// γ = 2[Φ⁻¹(1 − χ/2)]², the variogram value with extremogram χ.
pub fn inverse_chi(chi: f64) -> Result<f64> {
    if !(chi > 0.0 && chi <= 1.0) {
        return Err(Error::domain(format!("extremogram must lie in (0, 1], got {chi}")));
    }
    let x = normal::isf(0.5 * chi);
    Ok(2.0 * x * x)
}

pub fn transform_advection(v_emp: Velocity, a: &AdvectionTransform) -> Velocity {
    a.apply(v_emp)
}

/// Outcome of the transformed-speed cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedCheck {
    Accepted(Velocity),
    Rejected { speed: f64 },
}

/// Accepts `v` when ‖v‖ ≤ cap (inclusive), flags it for exclusion otherwise.
pub fn cap_speed(v: Velocity, cap: f64) -> SpeedCheck {
    let speed = v.speed();
    if speed <= cap {
        SpeedCheck::Accepted(v)
    } else {
        SpeedCheck::Rejected { speed }
    }
}

/// Unit conversions between canonical (m, step) and display (km, hour) units.
pub mod units {
    /// m/step → km/h.
    pub fn mps_to_kmh(v: f64, step_seconds: f64) -> f64 {
        v / 1000.0 * 3600.0 / step_seconds
    }

    /// km/h → m/step.
    pub fn kmh_to_mps(v: f64, step_seconds: f64) -> f64 {
        v * 1000.0 * step_seconds / 3600.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const COM: VariogramParams = VariogramParams {
        beta1: 0.308,
        beta2: 0.602,
        alpha1: 0.342,
        alpha2: 0.761,
    };

    #[test]
    fn variogram_basics() {
        let v = Velocity::new(1.3, -0.4);
        assert_eq!(variogram((0.0, 0.0), 0.0, &COM, v), 0.0);
        let sep = variogram((3.0, 4.0), 2.0, &COM, Velocity::ZERO);
        let expected = 2.0 * COM.beta1 * 5f64.powf(COM.alpha1) + 2.0 * COM.beta2 * 2f64.powf(COM.alpha2);
        assert!((sep - expected).abs() < 1e-14);
        // Symmetry under (h, τ) → (−h, −τ).
        let a = variogram((3.0, -1.0), 2.0, &COM, v);
        let b = variogram((-3.0, 1.0), -2.0, &COM, v);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn variogram_worked_example() {
        // h = 1 km east, τ = 1 h, V = (2.10, −1.96) km/h, lags in km and hours.
        let g = variogram((1.0, 0.0), 1.0, &COM, Velocity::new(2.10, -1.96));
        // Hand computation: ‖h − τV‖ = ‖(−1.10, 1.96)‖ = √(1.21 + 3.8416) = 2.247576...
        let d: f64 = (1.21f64 + 3.8416).sqrt();
        let by_hand = 2.0 * (0.308 * d.powf(0.342) + 0.602);
        assert!((g - by_hand).abs() < 1e-14);
        assert!((g - 2.016_581_748_574_300_3).abs() < 1e-12, "{g}");
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_from_gamma(0.0), 1.0);
        // 2(1 − Φ(1)) = 0.317310507862914...
        assert!((chi_from_gamma(2.0) - 0.317_310_507_862_914_1).abs() < 1e-15);
        assert_eq!(inverse_chi(1.0).unwrap(), 0.0);
        assert!((inverse_chi(0.317_310_507_862_914_1).unwrap() - 2.0).abs() < 1e-12);
        assert!(inverse_chi(0.0).is_err());
        assert!(inverse_chi(1.5).is_err());
    }

    #[test]
    fn inverse_chi_round_trip_grid() {
        for i in 1..100 {
            let chi = i as f64 / 100.0;
            let back = chi_from_gamma(inverse_chi(chi).unwrap());
            assert!((back - chi).abs() < 1e-10, "chi={chi} back={back}");
        }
    }

    #[test]
    fn advection_transform_examples() {
        let a = AdvectionTransform::new(2.0, 1.0).unwrap();
        assert_eq!(
            transform_advection(Velocity::new(1.0, 0.0), &a),
            Velocity::new(2.0, 0.0)
        );
        let paper = AdvectionTransform::new(1.621, 5.219).unwrap();
        assert_eq!(transform_advection(Velocity::ZERO, &paper), Velocity::ZERO);
        let big = transform_advection(Velocity::new(2.0, 0.0), &paper);
        assert!((big.speed() - 1.621 * 2f64.powf(5.219)).abs() < 1e-12);
        assert!((big.speed() - 60.4).abs() < 0.05, "{}", big.speed());
        assert_eq!(big.vy, 0.0);
    }

    #[test]
    fn transform_rescaling_is_consistent() {
        let a = AdvectionTransform::new(1.621, 5.219).unwrap();
        let c = 3.7;
        let v = Velocity::new(0.3, -0.8);
        let direct = a.apply(v).scaled(c);
        let other = a.rescaled(c).apply(v.scaled(c));
        assert!((direct.vx - other.vx).abs() < 1e-12 && (direct.vy - other.vy).abs() < 1e-12);
    }

    #[test]
    fn speed_cap_is_inclusive() {
        assert_eq!(
            cap_speed(Velocity::new(10.0, 0.0), 150.0),
            SpeedCheck::Accepted(Velocity::new(10.0, 0.0))
        );
        assert!(matches!(
            cap_speed(Velocity::new(0.0, 1000.0), 150.0),
            SpeedCheck::Rejected { .. }
        ));
        assert!(matches!(
            cap_speed(Velocity::new(150.0, 0.0), 150.0),
            SpeedCheck::Accepted(_)
        ));
    }

    #[test]
    fn unit_rescaling_matches_reported_dual_columns() {
        // Estimates reported in km & hours converted to m & 5-minute steps.
        let kmh = VariogramParams::new(1.090, 4.628, 0.225, 0.713).unwrap();
        let m5 = kmh.rescaled(1e-3, 1.0 / 12.0);
        assert!((m5.beta1 - 0.230).abs() < 5e-4, "{}", m5.beta1);
        assert!((m5.beta2 - 0.786).abs() < 2e-3, "{}", m5.beta2);
        // Both parameterizations describe the same variogram.
        let g_kmh = variogram((1.2, 0.0), 0.5, &kmh, Velocity::ZERO);
        let g_m5 = variogram((1200.0, 0.0), 6.0, &m5, Velocity::ZERO);
        assert!((g_kmh - g_m5).abs() < 1e-12);
        assert!((units::kmh_to_mps(150.0, 300.0) - 12_500.0).abs() < 1e-9);
        assert!((units::mps_to_kmh(12_500.0, 300.0) - 150.0).abs() < 1e-9);
    }

    fn params() -> impl Strategy<Value = VariogramParams> {
        (0.01f64..5.0, 0.01f64..5.0, 0.05f64..=2.0, 0.05f64..=2.0)
            .prop_map(|(b1, b2, a1, a2)| VariogramParams::new(b1, b2, a1, a2).unwrap())
    }

    proptest! {
        #[test]
        fn advection_is_a_shear(
            theta in params(), hx in -50.0f64..50.0, hy in -50.0f64..50.0,
            tau in -10.0f64..10.0, vx in -5.0f64..5.0, vy in -5.0f64..5.0,
        ) {
            let v = Velocity::new(vx, vy);
            let lhs = variogram((hx, hy), tau, &theta, v);
            let rhs = variogram((hx - tau * vx, hy - tau * vy), tau, &theta, Velocity::ZERO);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn chi_monotone_in_lags(theta in params(), d in 0.0f64..100.0, dd in 0.001f64..10.0, tau in 0.0f64..20.0, dt in 0.001f64..5.0) {
            let c = chi_r((d, 0.0), tau, &theta, Velocity::ZERO);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(chi_r((d + dd, 0.0), tau, &theta, Velocity::ZERO) <= c);
            prop_assert!(chi_r((d, 0.0), tau + dt, &theta, Velocity::ZERO) <= c);
        }

        #[test]
        fn transform_preserves_direction(eta1 in 0.01f64..10.0, eta2 in 0.0f64..6.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0, c in 0.01f64..10.0) {
            prop_assume!(vx.hypot(vy) > 1e-6);
            let a = AdvectionTransform::new(eta1, eta2).unwrap();
            let v = Velocity::new(vx, vy);
            let w = a.apply(v.scaled(c));
            let cross = w.vx * v.vy - w.vy * v.vx;
            let dot = w.vx * v.vx + w.vy * v.vy;
            prop_assert!(cross.abs() <= 1e-9 * w.speed().max(1.0) * v.speed());
            prop_assert!(dot >= 0.0);
        }
    }
}
