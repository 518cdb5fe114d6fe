//! Dormand-Prince 5(4) with PI step-size control, specialised to the
//! `(x, p)` system on the Riemann surface.
//!
//! Besides the usual error test a step is rejected when
//! - any stage moves the phase of `ix` by pi/2 or more (multi-valued case),
//! - the stage polyline crosses a multiple of pi more than once,
//! - the scaled energy residual `|p^2 + V - 1| / max(1, |V|)` at the new
//!   point exceeds `energy_tol`.
//!
//! Accepted points with a scaled residual above `PROJECTION_THRESHOLD` are
//! pulled back onto `H = 1` by one minimal-norm Newton step.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use super::interp::StepInterpolant;
use super::{
    CrossingEvent, CrossingKind, IntegrationControls, State, Termination, Trajectory, TrajectorySummary,
};
use crate::error::{OrbitError, Result};
use crate::surface::{sheet_of, wrap_angle, SimulationConfig, SurfacePoint};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;

const PROJECTION_THRESHOLD: f64 = 1e-13;
/// Closure is only tested once the orbit has moved this many closure
/// tolerances away from its start.
const ARMING_FACTOR: f64 = 100.0;
const CLOSURE_SCAN_POINTS: usize = 32;

#[derive(Clone, Copy)]
struct Deriv {
    dx: Complex64,
    dp: Complex64,
}

struct System {
    epsilon: f64,
    floor: f64,
    single_valued: bool,
}

impl System {
    fn eval(&self, pt: &SurfacePoint, p: Complex64) -> Option<Deriv> {
        if pt.value.norm() < self.floor {
            return None;
        }
        let f = crate::surface::force_unchecked(pt, self.epsilon);
        Some(Deriv { dx: 2.0 * p, dp: 0.5 * f })
    }

    /// Energy residual and its scale `max(1, |V|)`.
    fn residual(&self, pt: &SurfacePoint, p: Complex64) -> (Complex64, f64) {
        let v = pt.phase_power(2.0 + self.epsilon);
        (p * p - v - 1.0, v.norm().max(1.0))
    }

    /// Phase at `x` continued from `from`. On a single-valued surface a
    /// jump of about pi (passage through the origin) is resolved towards
    /// the even multiple of pi.
    fn continue_phase(&self, from: &SurfacePoint, x: Complex64) -> SurfacePoint {
        let next = from.advance_to(x);
        let d = next.phi - from.phi;
        if !self.single_valued || d.abs() < FRAC_PI_2 {
            return next;
        }
        let alt = SurfacePoint::from_parts(x, next.phi - 2.0 * PI * d.signum());
        let crosses_even = |pt: &SurfacePoint| {
            crossed_multiples(from.phi, pt.phi).any(|m| m % 2 == 0)
        };
        if !crosses_even(&next) && crosses_even(&alt) {
            alt
        } else {
            next
        }
    }
}

/// Multiples `m` of pi passed when the phase moves from `a` to `b`,
/// counting `b` itself but not `a`.
fn crossed_multiples(a: f64, b: f64) -> impl Iterator<Item = i64> {
    let (lo, hi, up) = if b >= a { (a, b, true) } else { (b, a, false) };
    let first = if up { (lo / PI).floor() as i64 + 1 } else { (lo / PI).ceil() as i64 };
    let last = if up { (hi / PI).floor() as i64 } else { (hi / PI).ceil() as i64 - 1 };
    (first..=last).filter(move |&m| {
        let v = m as f64 * PI;
        if up {
            v > a && v <= b
        } else {
            v >= b && v < a
        }
    })
}

struct StepOutcome {
    point: SurfacePoint,
    p: Complex64,
    k7: Deriv,
    err: f64,
    phase_ok: bool,
    crossing_ok: bool,
}

fn attempt(sys: &System, cur: &State, k1: Deriv, h: f64, ctl: &IntegrationControls) -> Option<StepOutcome> {
    let x0 = cur.point.value;
    let p0 = cur.p;
    let mut phis = [cur.point.phi; 7];
    let mut phase_ok = true;

    let mut stage = |x: Complex64, p: Complex64, slot: usize| -> Option<(SurfacePoint, Deriv)> {
        let pt = sys.continue_phase(&cur.point, x);
        phis[slot] = pt.phi;
        if (pt.phi - cur.point.phi).abs() >= FRAC_PI_2 {
            phase_ok = false;
        }
        sys.eval(&pt, p).map(|d| (pt, d))
    };

    let (_, k2) = stage(x0 + h * (A21 * k1.dx), p0 + h * (A21 * k1.dp), 1)?;
    let (_, k3) = stage(
        x0 + h * (A31 * k1.dx + A32 * k2.dx),
        p0 + h * (A31 * k1.dp + A32 * k2.dp),
        2,
    )?;
    let (_, k4) = stage(
        x0 + h * (A41 * k1.dx + A42 * k2.dx + A43 * k3.dx),
        p0 + h * (A41 * k1.dp + A42 * k2.dp + A43 * k3.dp),
        3,
    )?;
    let (_, k5) = stage(
        x0 + h * (A51 * k1.dx + A52 * k2.dx + A53 * k3.dx + A54 * k4.dx),
        p0 + h * (A51 * k1.dp + A52 * k2.dp + A53 * k3.dp + A54 * k4.dp),
        4,
    )?;
    let (_, k6) = stage(
        x0 + h * (A61 * k1.dx + A62 * k2.dx + A63 * k3.dx + A64 * k4.dx + A65 * k5.dx),
        p0 + h * (A61 * k1.dp + A62 * k2.dp + A63 * k3.dp + A64 * k4.dp + A65 * k5.dp),
        5,
    )?;
    let x1 = x0 + h * (A71 * k1.dx + A73 * k3.dx + A74 * k4.dx + A75 * k5.dx + A76 * k6.dx);
    let p1 = p0 + h * (A71 * k1.dp + A73 * k3.dp + A74 * k4.dp + A75 * k5.dp + A76 * k6.dp);
    let (pt1, k7) = stage(x1, p1, 6)?;

    let ex = h * (E1 * k1.dx + E3 * k3.dx + E4 * k4.dx + E5 * k5.dx + E6 * k6.dx + E7 * k7.dx);
    let ep = h * (E1 * k1.dp + E3 * k3.dp + E4 * k4.dp + E5 * k5.dp + E6 * k6.dp + E7 * k7.dp);
    let sx = ctl.abs_tol + ctl.rel_tol * x0.norm().max(x1.norm());
    let sp = ctl.abs_tol + ctl.rel_tol * p0.norm().max(p1.norm());
    let err = (((ex.norm() / sx).powi(2) + (ep.norm() / sp).powi(2)) / 2.0).sqrt();

    // stage abscissae 0, .2, .3, .8, 8/9, 1 are increasing; slot 5 (c = 1)
    // is skipped in favour of the final point
    let crossing_ok = if phase_ok {
        let order = [0usize, 1, 2, 3, 4, 6];
        let count: usize = order
            .windows(2)
            .map(|w| crossed_multiples(phis[w[0]], phis[w[1]]).count())
            .sum();
        count <= crossed_multiples(phis[0], phis[6]).count().max(1)
    } else {
        true
    };
    let phase_ok = phase_ok || sys.single_valued;

    Some(StepOutcome { point: pt1, p: p1, k7, err, phase_ok, crossing_ok })
}

struct ClosureDetector {
    x0: Complex64,
    p0: Complex64,
    phi0: f64,
    sx: f64,
    sp: f64,
    tol: f64,
    armed: bool,
    single_valued: bool,
}

impl ClosureDetector {
    fn new(s0: &State, tol: f64, single_valued: bool) -> Self {
        Self {
            x0: s0.point.value,
            p0: s0.p,
            phi0: s0.point.phi,
            sx: s0.point.value.norm().max(1.0),
            sp: s0.p.norm().max(1.0),
            tol,
            armed: false,
            single_valued,
        }
    }

    fn distance2(&self, x: Complex64, p: Complex64) -> f64 {
        ((x - self.x0).norm() / self.sx).powi(2) + ((p - self.p0).norm() / self.sp).powi(2)
    }

    fn phase_matches(&self, phi: f64) -> bool {
        let d = phi - self.phi0;
        if self.single_valued {
            wrap_angle(d).abs() < FRAC_PI_4
        } else {
            d.abs() < FRAC_PI_4
        }
    }

    /// Returns the closing state if the orbit returns to its start within
    /// the step `a -> b`.
    fn check(&mut self, a: &State, b: &State, epsilon: f64) -> Option<State> {
        if !self.armed {
            if self.distance2(b.point.value, b.p).sqrt() > ARMING_FACTOR * self.tol {
                self.armed = true;
            }
            return None;
        }
        // cheap gate: the start must be within reach of this step
        let h = b.t - a.t;
        let reach = h * 2.0 * a.p.norm().max(b.p.norm()) * 1.5 + (b.point.value - a.point.value).norm();
        let near = (a.point.value - self.x0).norm().min((b.point.value - self.x0).norm());
        if near > reach + self.tol * self.sx {
            return None;
        }
        let interp = StepInterpolant::new(a, b, epsilon);
        let dist = |t: f64| self.distance2(interp.position(t), interp.momentum(t));
        let n = CLOSURE_SCAN_POINTS;
        let mut best = (0usize, f64::INFINITY);
        for i in 0..=n {
            let t = a.t + h * i as f64 / n as f64;
            let d = dist(t);
            if d < best.1 {
                best = (i, d);
            }
        }
        let lo = a.t + h * best.0.saturating_sub(1) as f64 / n as f64;
        let hi = a.t + h * (best.0 + 1).min(n) as f64 / n as f64;
        let t_min = golden_section(dist, lo, hi);
        let s = interp.state(t_min);
        let x_ok = (s.point.value - self.x0).norm() < self.tol * self.sx;
        let p_ok = (s.p - self.p0).norm() < self.tol * self.sp;
        if x_ok && p_ok && self.phase_matches(s.point.phi) && t_min > 0.0 {
            Some(s)
        } else {
            None
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * a.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn bisect_phase(interp: &StepInterpolant, start: &SurfacePoint, target: f64) -> f64 {
    let g = |t: f64| start.advance_to(interp.position(t)).phi - target;
    let (mut lo, mut hi) = (interp.t_start(), interp.t_end());
    let mut glo = start.phi - target;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn make_event(t: f64, x: Complex64, m: i64, direction: i8) -> CrossingEvent {
    let phi = m as f64 * PI;
    let location = SurfacePoint::from_parts(Complex64::new(0.0, x.im), phi);
    let (kind, before, after) = if m % 2 == 0 {
        let s = m / 2;
        (CrossingKind::ImaginaryAxis, s, s)
    } else {
        let below = sheet_of(phi);
        let above = below + 1;
        if direction > 0 {
            (CrossingKind::BranchCut, below, above)
        } else {
            (CrossingKind::BranchCut, above, below)
        }
    };
    CrossingEvent { t, location, kind, sheet_before: before, sheet_after: after, direction }
}

fn step_events(a: &State, b: &State, epsilon: f64, out: &mut Vec<CrossingEvent>) {
    let mut multiples = crossed_multiples(a.point.phi, b.point.phi).peekable();
    if multiples.peek().is_none() {
        return;
    }
    let interp = StepInterpolant::new(a, b, epsilon);
    let direction: i8 = if b.point.phi > a.point.phi { 1 } else { -1 };
    for m in multiples {
        let t = bisect_phase(&interp, &a.point, m as f64 * PI);
        out.push(make_event(t, interp.position(t), m, direction));
    }
}

fn include(summary: &mut TrajectorySummary, s: &State, residual: f64) {
    let sheet = s.point.sheet();
    summary.min_sheet = summary.min_sheet.min(sheet);
    summary.max_sheet = summary.max_sheet.max(sheet);
    summary.min_phi = summary.min_phi.min(s.point.phi);
    summary.max_phi = summary.max_phi.max(s.point.phi);
    summary.max_modulus = summary.max_modulus.max(s.point.value.norm());
    summary.max_energy_residual = summary.max_energy_residual.max(residual);
}

fn initial_step(sys: &System, s: &State, k: Deriv, ctl: &IntegrationControls) -> f64 {
    let sx = ctl.abs_tol + ctl.rel_tol * s.point.value.norm();
    let sp = ctl.abs_tol + ctl.rel_tol * s.p.norm();
    let d0 = ((s.point.value.norm() / sx).powi(2) + (s.p.norm() / sp).powi(2)).sqrt();
    let d1 = ((k.dx.norm() / sx).powi(2) + (k.dp.norm() / sp).powi(2)).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1 = s.point.value + h0 * k.dx;
    let p1 = s.p + h0 * k.dp;
    let pt1 = sys.continue_phase(&s.point, x1);
    let h1 = match sys.eval(&pt1, p1) {
        Some(k1) => {
            let d2 = (((k1.dx - k.dx).norm() / sx).powi(2) + ((k1.dp - k.dp).norm() / sp).powi(2)).sqrt() / h0;
            if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            }
        }
        None => h0,
    };
    (100.0 * h0).min(h1).min(ctl.t_budget)
}

/// Integrates from `s0` until the orbit closes, leaves `escape_radius`,
/// runs past `t_budget` or the step size underflows.
///
/// On closure the samples and events are cut at the period, so a closed
/// trajectory covers `[0, T)`. A start exactly on the imaginary axis is
/// logged as a crossing at `t = 0`.
pub fn integrate(s0: &State, cfg: &SimulationConfig, ctl: &IntegrationControls) -> Result<Trajectory> {
    ctl.validate()?;
    let sys = System {
        epsilon: cfg.epsilon,
        floor: ctl.origin_floor,
        single_valued: cfg.is_single_valued(),
    };
    let start = State { t: 0.0, ..*s0 };
    let mut k1 = sys.eval(&start.point, start.p).ok_or(OrbitError::OriginProximity {
        modulus: start.point.value.norm(),
        floor: ctl.origin_floor,
    })?;

    let (r0, scale0) = sys.residual(&start.point, start.p);
    let residual0 = r0.norm() / scale0;
    let mut summary = TrajectorySummary {
        min_sheet: start.point.sheet(),
        max_sheet: start.point.sheet(),
        min_phi: start.point.phi,
        max_phi: start.point.phi,
        ..Default::default()
    };
    include(&mut summary, &start, residual0);

    let mut samples = Vec::new();
    if ctl.keep_samples {
        samples.push(start);
    }
    let mut events = Vec::new();
    let start_multiple = (start.point.phi / PI).round();
    let starts_on_axis = start_multiple * PI == start.point.phi;

    let mut closure = ClosureDetector::new(&start, ctl.closure_tol, sys.single_valued);
    let mut cur = start;
    let mut h = initial_step(&sys, &cur, k1, ctl);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    let termination = loop {
        if summary.steps_accepted + summary.steps_rejected >= ctl.max_steps {
            break Termination::NumericalFailure { reason: format!("step limit {} reached", ctl.max_steps) };
        }
        if h < 1e-14 * cur.t.abs().max(1.0) {
            break Termination::NumericalFailure { reason: format!("step size underflow at t = {}", cur.t) };
        }
        let outcome = attempt(&sys, &cur, k1, h, ctl);
        let Some(out) = outcome else {
            summary.steps_rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        };
        if !out.phase_ok || !out.crossing_ok {
            summary.steps_rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        let fac11 = out.err.powf(EXPO1);
        if out.err > 1.0 || !out.err.is_finite() {
            summary.steps_rejected += 1;
            let shrink = if out.err.is_finite() { (fac11 / SAFETY).min(1.0 / FAC_MIN) } else { 10.0 };
            h /= shrink;
            last_rejected = true;
            continue;
        }
        let (residual, scale) = sys.residual(&out.point, out.p);
        if residual.norm() > ctl.energy_tol * scale {
            summary.steps_rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }

        // accepted
        let mut next = State { t: cur.t + h, point: out.point, p: out.p };
        let mut k_next = out.k7;
        if residual.norm() > PROJECTION_THRESHOLD * scale {
            // dH/dx = -F/2 = -dp
            let gx = -k_next.dp;
            let gp = 2.0 * next.p;
            let denom = gx.norm_sqr() + gp.norm_sqr();
            if denom > 0.0 {
                let x = next.point.value - residual * gx.conj() / denom;
                let p = next.p - residual * gp.conj() / denom;
                let point = next.point.advance_to(x);
                if let Some(k) = sys.eval(&point, p) {
                    next = State { t: next.t, point, p };
                    k_next = k;
                }
            }
        }
        summary.steps_accepted += 1;

        if summary.steps_accepted == 1 && starts_on_axis {
            let direction: i8 = if next.point.phi > cur.point.phi { 1 } else { -1 };
            events.push(make_event(0.0, cur.point.value, start_multiple as i64, direction));
        }
        let n_events = events.len();
        step_events(&cur, &next, sys.epsilon, &mut events);

        if let Some(closing) = closure.check(&cur, &next, sys.epsilon) {
            let period = closing.t;
            let cutoff = period - 1e-9 * period.max(1.0);
            let mut kept: Vec<CrossingEvent> = events.drain(n_events..).filter(|e| e.t < cutoff).collect();
            events.append(&mut kept);
            break Termination::Closed { period };
        }

        include(&mut summary, &next, residual.norm() / scale);
        if ctl.keep_samples {
            samples.push(next);
        }

        // step-size update
        let mut fac = fac11 / facold.powf(BETA);
        fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;
        if last_rejected {
            h_new = h_new.min(h);
        }
        facold = out.err.max(1e-4);
        last_rejected = false;

        cur = next;
        k1 = k_next;

        if cur.point.value.norm() > ctl.escape_radius {
            break Termination::Escaped { radius: cur.point.value.norm() };
        }
        if cur.t >= ctl.t_budget {
            break Termination::BudgetExhausted;
        }
        h = h_new.min(ctl.t_budget);
    };

    Ok(Trajectory { epsilon: cfg.epsilon, samples, events, termination, summary })
}
