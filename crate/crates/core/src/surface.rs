//! Points on the Riemann surface of `(ix)^alpha` and the potential of the
//! family `H = p^2 + x^2 (ix)^eps`.
//!
//! A point carries its complex position together with the continuously
//! unwrapped argument of `ix`. The branch cut lies on the positive imaginary
//! axis, so the negative imaginary axis of the principal sheet has phase 0
//! and sheet boundaries sit at odd multiples of pi.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{OrbitError, Result};

/// Default minimum radius below which the force is not evaluated.
pub const DEFAULT_ORIGIN_FLOOR: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Sheet index `k` such that `phi` lies in `((2k-1)pi, (2k+1)pi]`.
pub fn sheet_of(phi: f64) -> i64 {
    ((phi - PI) / (2.0 * PI)).ceil() as i64
}

/// A position on the multi-sheeted surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub value: Complex64,
    /// Unwrapped argument of `i * value`, in radians.
    pub phi: f64,
}

impl SurfacePoint {
    /// Builds a point without checking phase consistency.
    pub fn from_parts(value: Complex64, phi: f64) -> Self {
        Self { value, phi }
    }

    pub fn sheet(&self) -> i64 {
        sheet_of(self.phi)
    }

    pub fn modulus(&self) -> f64 {
        self.value.norm()
    }

    /// `(ix)^alpha` continued along the phase history carried by this point.
    pub fn phase_power(&self, alpha: f64) -> Complex64 {
        let r = self.value.norm();
        Complex64::from_polar(r.powf(alpha), alpha * self.phi)
    }

    /// Relative mismatch between `|x| e^{i phi}` and `i x`.
    pub fn consistency_error(&self) -> f64 {
        let r = self.value.norm();
        if r == 0.0 {
            return 0.0;
        }
        (Complex64::from_polar(r, self.phi) - I * self.value).norm() / r
    }

    /// Moves to a nearby position, unwrapping the phase by the smallest
    /// angular increment. Only meaningful when the angular step is well
    /// below pi.
    pub fn advance_to(&self, value: Complex64) -> SurfacePoint {
        let d = wrap_angle((I * value).arg() - (I * self.value).arg());
        SurfacePoint { value, phi: self.phi + d }
    }

    /// Point reflection through the imaginary axis, `x -> -conj(x)`.
    pub fn pt_mirror(&self) -> SurfacePoint {
        SurfacePoint { value: -self.value.conj(), phi: -self.phi }
    }
}

/// Places `x` on the given sheet. The principal argument of `ix` is taken
/// in `(-pi, pi]`.
pub fn lift(x: Complex64, sheet: i64) -> Result<SurfacePoint> {
    if x.norm() == 0.0 {
        return Err(OrbitError::ZeroPosition);
    }
    let phi = (I * x).arg() + 2.0 * PI * sheet as f64;
    Ok(SurfacePoint { value: x, phi })
}

/// `(ix)^alpha` for a lifted point.
pub fn phase_power(pt: &SurfacePoint, alpha: f64) -> Complex64 {
    pt.phase_power(alpha)
}

/// Physical parameters. The energy is fixed to 1; other energies are
/// reachable by rescaling `x` and `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub epsilon: f64,
    energy: f64,
}

impl SimulationConfig {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, energy: 1.0 }
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// True when `(ix)^eps` is single valued, i.e. a nonnegative integer eps.
    /// Every sheet is then the same plane.
    pub fn is_single_valued(&self) -> bool {
        self.epsilon >= 0.0 && self.epsilon.fract() == 0.0
    }
}

/// `V(x) = x^2 (ix)^eps = -(ix)^(2+eps)`.
pub fn potential(pt: &SurfacePoint, cfg: &SimulationConfig) -> Result<Complex64> {
    if pt.value.norm() == 0.0 {
        if cfg.epsilon < 0.0 {
            return Err(OrbitError::Singularity { epsilon: cfg.epsilon });
        }
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(-pt.phase_power(2.0 + cfg.epsilon))
}

/// Acceleration `x'' = 2i(2+eps)(ix)^(1+eps)`, using the default origin floor.
pub fn force(pt: &SurfacePoint, cfg: &SimulationConfig) -> Result<Complex64> {
    force_with_floor(pt, cfg, DEFAULT_ORIGIN_FLOOR)
}

pub fn force_with_floor(pt: &SurfacePoint, cfg: &SimulationConfig, floor: f64) -> Result<Complex64> {
    let r = pt.value.norm();
    if r < floor {
        return Err(OrbitError::OriginProximity { modulus: r, floor });
    }
    Ok(force_unchecked(pt, cfg.epsilon))
}

#[inline]
pub(crate) fn force_unchecked(pt: &SurfacePoint, epsilon: f64) -> Complex64 {
    2.0 * (2.0 + epsilon) * I * pt.phase_power(1.0 + epsilon)
}

/// Derivative of the acceleration with respect to `x`,
/// `-2(2+eps)(1+eps)(ix)^eps`.
#[inline]
pub(crate) fn force_gradient(pt: &SurfacePoint, epsilon: f64) -> Complex64 {
    -2.0 * (2.0 + epsilon) * (1.0 + epsilon) * pt.phase_power(epsilon)
}

/// Phase of the turning point with integer label `big_n`:
/// `pi (2N - 1) / (2 + eps)`.
pub fn turning_point_phase(big_n: i64, epsilon: f64) -> f64 {
    PI * (2 * big_n - 1) as f64 / (2.0 + epsilon)
}

/// Solution of `1 + (ix)^(2+eps) = 0` labelled by `N`,
/// `x = exp(i pi (4N - 4 - eps) / (4 + 2 eps))`.
pub fn turning_point(big_n: i64, cfg: &SimulationConfig) -> SurfacePoint {
    let eps = cfg.epsilon;
    let angle = PI * ((4 * big_n - 4) as f64 - eps) / (4.0 + 2.0 * eps);
    SurfacePoint {
        value: Complex64::from_polar(1.0, angle),
        phi: turning_point_phase(big_n, eps),
    }
}

/// The `n`-th PT-symmetric pair of turning points, `(N = n+1, N = -n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPointPair {
    pub n: usize,
    pub plus_point: SurfacePoint,
    pub minus_point: SurfacePoint,
    pub epsilon: f64,
}

impl TurningPointPair {
    /// Largest `|1 + (ix)^(2+eps)|` over the two points.
    pub fn residual(&self) -> f64 {
        let alpha = 2.0 + self.epsilon;
        let a = (1.0 + self.plus_point.phase_power(alpha)).norm();
        let b = (1.0 + self.minus_point.phase_power(alpha)).norm();
        a.max(b)
    }
}

pub fn turning_pair(n: usize, cfg: &SimulationConfig) -> TurningPointPair {
    let n_i = n as i64;
    TurningPointPair {
        n,
        plus_point: turning_point(n_i + 1, cfg),
        minus_point: turning_point(-n_i, cfg),
        epsilon: cfg.epsilon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift(c(0.0, -1.0), 0).unwrap().phi, 0.0);
        assert_abs_diff_eq!(lift(c(1.0, 0.0), 0).unwrap().phi, PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lift(c(0.0, -1.0), 1).unwrap().phi, 2.0 * PI, epsilon = 1e-15);
        assert_eq!(lift(c(0.0, 0.0), 0), Err(OrbitError::ZeroPosition));
    }

    #[test]
    fn sheet_boundaries_are_half_open() {
        assert_eq!(sheet_of(0.0), 0);
        assert_eq!(sheet_of(PI), 0);
        assert_eq!(sheet_of(PI + 1e-12), 1);
        assert_eq!(sheet_of(-PI), -1);
        assert_eq!(sheet_of(-PI + 1e-12), 0);
        assert_eq!(sheet_of(3.0 * PI), 1);
        assert_eq!(sheet_of(-3.0 * PI + 1e-9), -1);
        // the positive imaginary axis lifts onto the top of sheet 0
        assert_eq!(lift(c(0.0, 2.0), 0).unwrap().sheet(), 0);
    }

    #[test]
    fn phase_power_examples() {
        let on_axis = lift(c(0.0, -3.0), 0).unwrap();
        let v = phase_power(&on_axis, 1.7);
        assert_abs_diff_eq!(v.re, 3f64.powf(1.7), epsilon = 1e-12);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        // exp(i * 1/2 * 2pi) = -1
        let v = phase_power(&lift(c(0.0, -1.0), 1).unwrap(), 0.5);
        assert_abs_diff_eq!(v.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        let v = phase_power(&lift(c(0.0, 1.0), 0).unwrap(), 2.0);
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn potential_examples() {
        let cfg0 = SimulationConfig::new(0.0);
        let v = potential(&lift(c(0.0, -1.0), 0).unwrap(), &cfg0).unwrap();
        assert_abs_diff_eq!(v.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        let v = potential(&lift(c(0.5, 0.0), 0).unwrap(), &cfg0).unwrap();
        assert_abs_diff_eq!(v.re, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        // -2^pi, reference from 40-digit arithmetic
        let cfg = SimulationConfig::new(PI - 2.0);
        let v = potential(&lift(c(0.0, -2.0), 0).unwrap(), &cfg).unwrap();
        assert_abs_diff_eq!(v.re, -8.8249778270762876239, epsilon = 1e-13);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        let origin = SurfacePoint::from_parts(c(0.0, 0.0), 0.0);
        assert_eq!(potential(&origin, &cfg0).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            potential(&origin, &SimulationConfig::new(-0.2)),
            Err(OrbitError::Singularity { .. })
        ));
    }

    #[test]
    fn force_examples() {
        let cfg0 = SimulationConfig::new(0.0);
        let f = force(&lift(c(1.0, 0.0), 0).unwrap(), &cfg0).unwrap();
        assert_abs_diff_eq!(f.re, -4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, 0.0, epsilon = 1e-14);
        let f = force(&lift(c(0.0, 1.0), 0).unwrap(), &cfg0).unwrap();
        assert_abs_diff_eq!(f.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, -4.0, epsilon = 1e-14);

        let cfg2 = SimulationConfig::new(2.0);
        let pt = lift(c(0.0, -1.0), 0).unwrap();
        let f = force(&pt, &cfg2).unwrap();
        assert_abs_diff_eq!(f.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, 8.0, epsilon = 1e-14);
        // x'' = -2 dV/dx; central difference of the potential along x
        let h = 1e-5;
        let vp = potential(&pt.advance_to(pt.value + h), &cfg2).unwrap();
        let vm = potential(&pt.advance_to(pt.value - h), &cfg2).unwrap();
        let fd = -2.0 * (vp - vm) / (2.0 * h);
        assert_abs_diff_eq!((fd - f).norm(), 0.0, epsilon = 1e-8);

        let near = SurfacePoint::from_parts(c(1e-13, 0.0), PI / 2.0);
        assert!(matches!(force(&near, &cfg0), Err(OrbitError::OriginProximity { .. })));
    }

    #[test]
    fn turning_point_examples() {
        let cfg0 = SimulationConfig::new(0.0);
        let p = turning_point(1, &cfg0);
        assert_abs_diff_eq!((p.value - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let p = turning_point(0, &cfg0);
        assert_abs_diff_eq!((p.value - c(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let cfg = SimulationConfig::new(PI - 2.0);
        let p = turning_point(1, &cfg);
        assert_abs_diff_eq!(p.value.re, 0.84147098480789650665, epsilon = 1e-14);
        assert_abs_diff_eq!(p.value.im, -0.5403023058681397174, epsilon = 1e-14);
        assert!((1.0 + p.phase_power(2.0 + cfg.epsilon)).norm() < 1e-12);
    }

    #[test]
    fn turning_pair_examples() {
        let pair = turning_pair(0, &SimulationConfig::new(0.0));
        assert_abs_diff_eq!((pair.plus_point.value - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((pair.minus_point.value - c(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);

        let pair = turning_pair(1, &SimulationConfig::new(0.5));
        assert_abs_diff_eq!((pair.minus_point.value - Complex64::from_polar(1.0, 0.3 * PI)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((pair.plus_point.value - Complex64::from_polar(1.0, 0.7 * PI)).norm(), 0.0, epsilon = 1e-14);

        let pair = turning_pair(2, &SimulationConfig::new(PI - 2.0));
        assert!(pair.residual() < 1e-12);
        let mirrored = pair.plus_point.pt_mirror();
        assert_abs_diff_eq!((mirrored.value - pair.minus_point.value).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mirrored.phi, pair.minus_point.phi, epsilon = 1e-14);
    }

    #[test]
    fn n1_pair_reaches_principal_sheet_at_eps_one() {
        assert_eq!(turning_pair(1, &SimulationConfig::new(0.99)).plus_point.sheet(), 1);
        assert_eq!(turning_pair(1, &SimulationConfig::new(1.0)).plus_point.sheet(), 0);
        assert_eq!(turning_pair(1, &SimulationConfig::new(1.0)).minus_point.sheet(), -1);
    }

    proptest! {
        #[test]
        fn lifted_points_are_consistent(re in -50.0..50.0f64, im in -50.0..50.0f64, sheet in -6i64..6) {
            prop_assume!(re.hypot(im) > 1e-6);
            let pt = lift(c(re, im), sheet).unwrap();
            prop_assert!(pt.consistency_error() < 1e-12);
            prop_assert_eq!(pt.sheet(), sheet);
        }

        #[test]
        fn phase_power_is_multiplicative(
            re in -20.0..20.0f64, im in -20.0..20.0f64, sheet in -4i64..4,
            a in -3.0..3.0f64, b in -3.0..3.0f64,
        ) {
            prop_assume!(re.hypot(im) > 1e-3);
            let pt = lift(c(re, im), sheet).unwrap();
            let lhs = pt.phase_power(a) * pt.phase_power(b);
            let rhs = pt.phase_power(a + b);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
        }

        #[test]
        fn turning_points_are_roots(n in 0usize..12, eps in 0.0..30.0f64) {
            let cfg = SimulationConfig::new(eps);
            let pair = turning_pair(n, &cfg);
            prop_assert!((pair.plus_point.modulus() - 1.0).abs() < 1e-12);
            prop_assert!((pair.minus_point.modulus() - 1.0).abs() < 1e-12);
            prop_assert!(pair.plus_point.consistency_error() < 1e-12);
            prop_assert!(pair.residual() < 1e-12);
            let v = potential(&pair.plus_point, &cfg).unwrap();
            prop_assert!((v - 1.0).norm() < 1e-12);
            let m = pair.plus_point.pt_mirror();
            prop_assert!((m.value - pair.minus_point.value).norm() < 1e-12);
        }
    }
}
