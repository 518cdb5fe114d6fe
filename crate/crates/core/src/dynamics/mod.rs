//! Hamilton's equations `x' = 2p`, `p' = i(2+eps)(ix)^(1+eps)` integrated
//! through the complex plane with the phase of `ix` carried along.
//!
//! The factor 2 in `x' = 2p` follows from `H = p^2 + V`; with it the
//! harmonic limit `eps = 0` has period pi.

mod csv;
mod integrator;
mod interp;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{OrbitError, Result};
use crate::surface::{force_unchecked, force_with_floor, lift, potential, turning_point, SimulationConfig, SurfacePoint};

pub use self::csv::{read_trajectory_csv, write_trajectory_csv, CsvRow, EventTag};
pub use self::integrator::integrate;
pub use self::interp::StepInterpolant;

/// Point in phase space at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub t: f64,
    pub point: SurfacePoint,
    pub p: Complex64,
}

impl State {
    /// `|p^2 + V(x) - E|`.
    pub fn energy_residual(&self, cfg: &SimulationConfig) -> f64 {
        match potential(&self.point, cfg) {
            Ok(v) => (self.p * self.p + v - cfg.energy()).norm(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Energy residual relative to `max(1, |V|)`; this is the quantity the
    /// integrator bounds by `energy_tol`.
    pub fn scaled_energy_residual(&self, cfg: &SimulationConfig) -> f64 {
        match potential(&self.point, cfg) {
            Ok(v) => (self.p * self.p + v - cfg.energy()).norm() / v.norm().max(1.0),
            Err(_) => f64::INFINITY,
        }
    }

    /// A state sitting on a turning point has zero momentum and cannot be
    /// told apart from its time reverse; use [`turning_point_start`].
    pub fn at_turning_point(&self) -> bool {
        self.p.norm_sqr() < 1e-12
    }

    pub fn pt_mirror(&self) -> State {
        State { t: self.t, point: self.point.pt_mirror(), p: -self.p.conj() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossingKind {
    /// Crossing of the negative imaginary axis of the current sheet.
    ImaginaryAxis,
    /// Crossing of the positive imaginary axis, which moves to the next sheet.
    BranchCut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    pub t: f64,
    pub location: SurfacePoint,
    pub kind: CrossingKind,
    pub sheet_before: i64,
    pub sheet_after: i64,
    /// Sign of the phase change at the crossing.
    pub direction: i8,
}

impl CrossingEvent {
    /// Multiple of pi at which the phase was crossed.
    pub fn phase_multiple(&self) -> i64 {
        (self.location.phi / PI).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Closed { period: f64 },
    BudgetExhausted,
    Escaped { radius: f64 },
    NumericalFailure { reason: String },
}

impl Termination {
    pub fn period(&self) -> Option<f64> {
        match self {
            Termination::Closed { period } => Some(*period),
            _ => None,
        }
    }
}

/// Step-size, closure and safety settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub energy_tol: f64,
    pub closure_tol: f64,
    pub t_budget: f64,
    /// `f64::INFINITY` disables escape detection.
    pub escape_radius: f64,
    pub origin_floor: f64,
    /// Keep every accepted step in `Trajectory::samples`. Summaries and
    /// events are recorded either way.
    pub keep_samples: bool,
    pub max_steps: usize,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            energy_tol: 1e-8,
            closure_tol: 1e-6,
            t_budget: 1e5,
            escape_radius: f64::INFINITY,
            origin_floor: crate::surface::DEFAULT_ORIGIN_FLOOR,
            keep_samples: true,
            max_steps: 200_000_000,
        }
    }
}

impl IntegrationControls {
    /// Defaults for the given parameter: open orbits (`eps < 0`) get an
    /// escape radius of 1000, closed-orbit searches none.
    pub fn for_config(cfg: &SimulationConfig) -> Self {
        let mut ctl = Self::default();
        if cfg.epsilon < 0.0 {
            ctl.escape_radius = 1e3;
        }
        ctl
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("energy_tol", self.energy_tol),
            ("closure_tol", self.closure_tol),
            ("t_budget", self.t_budget),
            ("escape_radius", self.escape_radius),
            ("origin_floor", self.origin_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(OrbitError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Running totals gathered during integration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectorySummary {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub min_sheet: i64,
    pub max_sheet: i64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub max_modulus: f64,
    pub max_energy_residual: f64,
}

impl TrajectorySummary {
    pub fn sheets_visited(&self) -> usize {
        (self.max_sheet - self.min_sheet + 1) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub epsilon: f64,
    pub samples: Vec<State>,
    pub events: Vec<CrossingEvent>,
    pub termination: Termination,
    pub summary: TrajectorySummary,
}

impl Trajectory {
    pub fn config(&self) -> SimulationConfig {
        SimulationConfig::new(self.epsilon)
    }

    pub fn period(&self) -> Option<f64> {
        self.termination.period()
    }

    pub fn sheet_range(&self) -> (i64, i64) {
        (self.summary.min_sheet, self.summary.max_sheet)
    }

    pub fn sheets_visited(&self) -> usize {
        self.summary.sheets_visited()
    }

    /// State at time `t`, interpolated between the bracketing samples.
    /// Returns `None` outside the sampled range.
    pub fn state_at(&self, t: f64) -> Option<State> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return Some(*first);
        }
        if idx >= self.samples.len() {
            return Some(*last);
        }
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        Some(StepInterpolant::new(a, b, self.epsilon).state(t))
    }

    /// Interpolants for every consecutive pair of samples.
    pub fn steps(&self) -> impl Iterator<Item = StepInterpolant> + '_ {
        self.samples.windows(2).map(move |w| StepInterpolant::new(&w[0], &w[1], self.epsilon))
    }
}

/// Time derivatives of position, momentum and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub dx: Complex64,
    pub dp: Complex64,
    pub dphi: f64,
}

pub fn derivative(s: &State, cfg: &SimulationConfig) -> Result<Derivative> {
    derivative_with_floor(s, cfg, crate::surface::DEFAULT_ORIGIN_FLOOR)
}

pub fn derivative_with_floor(s: &State, cfg: &SimulationConfig, floor: f64) -> Result<Derivative> {
    let f = force_with_floor(&s.point, cfg, floor)?;
    let dx = 2.0 * s.p;
    Ok(Derivative { dx, dp: 0.5 * f, dphi: (dx / s.point.value).im })
}

/// State at `t = 0` with `p = direction * sqrt(1 + (ix)^(2+eps))`
/// (principal square root).
pub fn initial_state(x0: Complex64, sheet: i64, direction: i8, cfg: &SimulationConfig) -> Result<State> {
    if direction != 1 && direction != -1 {
        return Err(OrbitError::InvalidArgument(format!("direction must be +1 or -1, got {direction}")));
    }
    let point = lift(x0, sheet)?;
    let p2 = cfg.energy() - potential(&point, cfg)?;
    Ok(State { t: 0.0, point, p: f64::from(direction) * p2.sqrt() })
}

/// Largest series remainder accepted by [`turning_point_start`].
pub const SERIES_REMAINDER_LIMIT: f64 = 1e-10;

/// Launch offset giving a first displacement of about `1e-8` from a
/// turning point where the acceleration has modulus `force_modulus`.
pub fn default_launch_offset(force_modulus: f64) -> f64 {
    (2e-8 / force_modulus).sqrt()
}

/// State a short time `dt0` after passing a turning point of the `n`-th pair.
///
/// `which = +1` selects the `N = n+1` point, `-1` the `N = -n` point. The
/// position follows `x(dt) = x_tp + F dt^2 / 2`; the momentum is then put
/// on the energy surface with the sign of the series value `F dt / 2`.
pub fn turning_point_start(n: usize, which: i8, dt0: f64, cfg: &SimulationConfig) -> Result<State> {
    let big_n = match which {
        1 => n as i64 + 1,
        -1 => -(n as i64),
        _ => return Err(OrbitError::InvalidArgument(format!("which must be +1 or -1, got {which}"))),
    };
    if !(dt0 > 0.0) {
        return Err(OrbitError::InvalidArgument(format!("dt0 must be positive, got {dt0}")));
    }
    let tp = turning_point(big_n, cfg);
    let f = force_unchecked(&tp, cfg.epsilon);
    let fp = crate::surface::force_gradient(&tp, cfg.epsilon);
    // next nonvanishing term of x(dt) is F'F dt^4 / 24
    let remainder = (fp * f).norm() * dt0.powi(4) / 24.0;
    if remainder > SERIES_REMAINDER_LIMIT {
        return Err(OrbitError::SeriesAccuracy { dt0, remainder, limit: SERIES_REMAINDER_LIMIT });
    }
    let x = tp.value + 0.5 * f * dt0 * dt0;
    let point = tp.advance_to(x);
    let p_series = 0.5 * f * dt0;
    let p2 = cfg.energy() - potential(&point, cfg)?;
    let mut p = p2.sqrt();
    if (p - p_series).norm() > (p + p_series).norm() {
        p = -p;
    }
    Ok(State { t: 0.0, point, p })
}

/// Imaginary-axis crossings of a trajectory (both halves of the axis).
/// For a closed central orbit integrated over one period, half of this
/// count is the crossing number of the path between its turning points.
pub fn axis_crossings(traj: &Trajectory) -> Vec<CrossingEvent> {
    traj.events.clone()
}
