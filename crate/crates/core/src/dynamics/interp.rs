//! Quintic Hermite interpolation across one accepted step.
//!
//! Both `x` and `p` are interpolated from their values and first two time
//! derivatives at the step ends: `x' = 2p`, `x'' = F`, `p' = F/2`,
//! `p'' = F'(x) p`.

use num_complex::Complex64;

use super::State;
use crate::surface::{force_gradient, force_unchecked, SurfacePoint};

#[derive(Debug, Clone, Copy)]
struct Jet {
    v: Complex64,
    d1: Complex64,
    d2: Complex64,
}

#[derive(Debug, Clone)]
pub struct StepInterpolant {
    t0: f64,
    h: f64,
    start: SurfacePoint,
    x: [Jet; 2],
    p: [Jet; 2],
}

fn jets(s: &State, epsilon: f64) -> (Jet, Jet) {
    let f = force_unchecked(&s.point, epsilon);
    let fp = force_gradient(&s.point, epsilon);
    (
        Jet { v: s.point.value, d1: 2.0 * s.p, d2: f },
        Jet { v: s.p, d1: 0.5 * f, d2: fp * s.p },
    )
}

#[inline]
fn hermite(a: &Jet, b: &Jet, h: f64, s: f64) -> Complex64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    let h3 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h5 = 0.5 * s3 - s4 + 0.5 * s5;
    a.v * h0 + a.d1 * (h1 * h) + a.d2 * (h2 * h * h) + b.v * h3 + b.d1 * (h4 * h) + b.d2 * (h5 * h * h)
}

impl StepInterpolant {
    pub fn new(a: &State, b: &State, epsilon: f64) -> Self {
        let (xa, pa) = jets(a, epsilon);
        let (xb, pb) = jets(b, epsilon);
        Self {
            t0: a.t,
            h: b.t - a.t,
            start: a.point,
            x: [xa, xb],
            p: [pa, pb],
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn position(&self, t: f64) -> Complex64 {
        let s = (t - self.t0) / self.h;
        hermite(&self.x[0], &self.x[1], self.h, s)
    }

    pub fn momentum(&self, t: f64) -> Complex64 {
        let s = (t - self.t0) / self.h;
        hermite(&self.p[0], &self.p[1], self.h, s)
    }

    /// Interpolated state; the phase is unwrapped from the step start.
    pub fn state(&self, t: f64) -> State {
        let x = self.position(t);
        State { t, point: self.start.advance_to(x), p: self.momentum(t) }
    }
}
