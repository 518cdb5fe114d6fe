//! Central orbits, crossing numbers and the closed-form period
//! `T = P(eps) * sum_j a_j |cos((2j+1) eps pi / (4+2eps))|`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_launch_offset, integrate, turning_point_start, IntegrationControls, Trajectory};
use crate::error::{OrbitError, Result};
use crate::gamma::gamma;
use crate::surface::{turning_point_phase, SimulationConfig};

/// Fraction of the measured period allowed as fit residual before a
/// classification is reported as unresolved.
pub const DEFAULT_RESIDUAL_FRACTION: f64 = 0.01;

/// Oscillations smaller than this fraction of the chord are ignored.
pub const DEFAULT_OSCILLATION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassStatus {
    Resolved,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitClass {
    pub n: usize,
    pub epsilon: f64,
    pub k: u32,
    pub t_measured: f64,
    pub coefficients: Vec<u32>,
    pub t_formula: f64,
    pub residual: f64,
    pub sheet_range: (i64, i64),
    pub status: ClassStatus,
    /// Coefficients read off from how often the path winds around each
    /// turning point. Independent of the period; `None` when the count is
    /// inconsistent with `k`.
    pub enclosure: Option<Vec<u32>>,
}

impl OrbitClass {
    pub fn satisfies_sum_rule(&self) -> bool {
        sum_rule_check(&self.coefficients, self.k, self.n)
    }

    pub fn enclosure_agrees(&self) -> bool {
        self.enclosure.as_deref().is_some_and(|e| trim(e) == trim(&self.coefficients))
    }

    pub fn record(&self) -> ClassificationRecord {
        ClassificationRecord {
            epsilon: self.epsilon,
            n: self.n,
            k: self.k,
            t_measured: self.t_measured,
            t_formula: self.t_formula,
            coefficients: self.coefficients.clone(),
            residual: self.residual,
            sheet_min: self.sheet_range.0,
            sheet_max: self.sheet_range.1,
            status: self.status,
        }
    }
}

fn trim(a: &[u32]) -> &[u32] {
    let len = a.iter().rposition(|&v| v != 0).map_or(0, |i| i + 1);
    &a[..len]
}

/// One line of classification output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub epsilon: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "T_measured")]
    pub t_measured: f64,
    #[serde(rename = "T_formula")]
    pub t_formula: f64,
    pub coefficients: Vec<u32>,
    pub residual: f64,
    pub sheet_min: i64,
    pub sheet_max: i64,
    pub status: ClassStatus,
}

impl ClassificationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| OrbitError::InvalidArgument(format!("bad classification record: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientFamily {
    pub k: u32,
    pub coefficients: [u32; 6],
}

impl CoefficientFamily {
    pub fn sum(&self) -> u32 {
        self.coefficients.iter().sum()
    }
}

/// The sequence of coefficient sets met as `eps` falls below 1.149739
/// with `n = 1`; each step adds 12 crossings.
pub fn family_coefficients(k: u32) -> CoefficientFamily {
    CoefficientFamily { k, coefficients: [2, 1 + 2 * k, 6 + 4 * k, 4 + 4 * k, 0, 2 * k] }
}

/// Launches from the `N = n+1` turning point and integrates until the orbit
/// returns there. A run that does not close comes back with its
/// termination set accordingly rather than as an error.
pub fn central_orbit(n: usize, cfg: &SimulationConfig, ctl: &IntegrationControls) -> Result<Trajectory> {
    let eps = cfg.epsilon;
    if n == 0 && !(eps >= 0.0) {
        return Err(OrbitError::InvalidArgument(format!("central orbits need epsilon >= 0, got {eps}")));
    }
    if n >= 1 && !(eps > 0.0) {
        return Err(OrbitError::InvalidArgument(format!(
            "turning pairs with n >= 1 coincide at epsilon = {eps}; need epsilon > 0"
        )));
    }
    // |F| = 2(2+eps) on the unit circle, where every turning point lies
    let dt0 = default_launch_offset(2.0 * (2.0 + eps));
    let s0 = turning_point_start(n, 1, dt0, cfg)?;
    integrate(&s0, cfg, ctl)
}

/// `2 sqrt(pi) Gamma((3+eps)/(2+eps)) / Gamma((4+eps)/(4+2eps))`.
fn period_prefactor(eps: f64) -> f64 {
    2.0 * PI.sqrt() * gamma((3.0 + eps) / (2.0 + eps)) / gamma((4.0 + eps) / (4.0 + 2.0 * eps))
}

fn pair_weight(j: usize, eps: f64) -> f64 {
    ((2 * j + 1) as f64 * eps * PI / (4.0 + 2.0 * eps)).cos().abs()
}

/// Period of the orbit ending at the `n = 0` turning points.
pub fn period_class0(cfg: &SimulationConfig) -> Result<f64> {
    let eps = cfg.epsilon;
    if !(eps >= 0.0) {
        return Err(OrbitError::InvalidArgument(format!("closed form needs epsilon >= 0, got {eps}")));
    }
    Ok(period_prefactor(eps) * pair_weight(0, eps))
}

pub fn parity_ok(coefficients: &[u32], n: usize) -> bool {
    if n >= coefficients.len() {
        return false;
    }
    coefficients.iter().enumerate().all(|(j, &a)| (a % 2 == 1) == (j == n))
}

pub fn period_formula(n: usize, cfg: &SimulationConfig, coefficients: &[u32]) -> Result<f64> {
    if !parity_ok(coefficients, n) {
        return Err(OrbitError::Parity { n, coefficients: coefficients.to_vec() });
    }
    let eps = cfg.epsilon;
    let s: f64 = coefficients.iter().enumerate().map(|(j, &a)| f64::from(a) * pair_weight(j, eps)).sum();
    Ok(period_prefactor(eps) * s)
}

pub fn sum_rule_check(coefficients: &[u32], k: u32, n: usize) -> bool {
    coefficients.iter().map(|&a| u64::from(a)).sum::<u64>() == u64::from(k) && parity_ok(coefficients, n)
}

/// Integer vector `a_0..a_jmax` with `sum = k`, `a_n` odd, the rest even,
/// whose formula period is closest to `t_measured`. Returns the vector and
/// `|t_measured - T_formula|`.
pub fn fit_coefficients(
    t_measured: f64,
    n: usize,
    cfg: &SimulationConfig,
    k: u32,
    j_max: usize,
) -> Result<(Vec<u32>, f64)> {
    if k == 0 {
        return Err(OrbitError::InvalidArgument("crossing number must be positive".into()));
    }
    if j_max < n {
        return Err(OrbitError::InvalidArgument(format!("j_max = {j_max} is below n = {n}")));
    }
    if k % 2 == 0 {
        return Err(OrbitError::InfeasibleCoefficients { k, n, j_max });
    }
    let eps = cfg.epsilon;
    let pref = period_prefactor(eps);
    // each unit adds 2 to one coefficient
    let unit: Vec<f64> = (0..=j_max).map(|j| 2.0 * pref * pair_weight(j, eps)).collect();
    let target = t_measured - pref * pair_weight(n, eps);
    let units = (k - 1) / 2;

    // suffix bounds on the value a unit can add
    let mut lo = vec![f64::INFINITY; j_max + 2];
    let mut hi = vec![f64::NEG_INFINITY; j_max + 2];
    for j in (0..=j_max).rev() {
        lo[j] = lo[j + 1].min(unit[j]);
        hi[j] = hi[j + 1].max(unit[j]);
    }

    struct Search<'a> {
        unit: &'a [f64],
        lo: &'a [f64],
        hi: &'a [f64],
        target: f64,
        current: Vec<u32>,
        best: Vec<u32>,
        best_err: f64,
    }

    impl Search<'_> {
        fn go(&mut self, j: usize, left: u32, value: f64) {
            let last = self.unit.len() - 1;
            if j == last {
                self.current[j] = left;
                let err = (self.target - value - f64::from(left) * self.unit[j]).abs();
                if err < self.best_err {
                    self.best_err = err;
                    self.best.clone_from(&self.current);
                }
                self.current[j] = 0;
                return;
            }
            for b in 0..=left {
                let v = value + f64::from(b) * self.unit[j];
                let rest = f64::from(left - b);
                let (min, max) = (v + rest * self.lo[j + 1], v + rest * self.hi[j + 1]);
                let gap = if self.target < min {
                    min - self.target
                } else if self.target > max {
                    self.target - max
                } else {
                    0.0
                };
                if gap < self.best_err {
                    self.current[j] = b;
                    self.go(j + 1, left - b, v);
                }
            }
            self.current[j] = 0;
        }
    }

    let mut s = Search {
        unit: &unit,
        lo: &lo,
        hi: &hi,
        target,
        current: vec![0; j_max + 1],
        best: vec![0; j_max + 1],
        best_err: f64::INFINITY,
    };
    s.go(0, units, 0.0);
    let mut a: Vec<u32> = s.best.iter().map(|&b| 2 * b).collect();
    a[n] += 1;
    let residual = (t_measured - period_formula(n, cfg, &a)?).abs();
    Ok((a, residual))
}

/// Crossing number of a closed central orbit: the path between the two
/// turning points is traversed twice per period.
pub fn crossing_number(traj: &Trajectory) -> u32 {
    (traj.events.len() / 2) as u32
}

fn event_sheet_range(traj: &Trajectory) -> (i64, i64) {
    let start = traj.samples.first().map_or(0, |s| s.point.sheet());
    traj.events
        .iter()
        .flat_map(|e| [e.sheet_before, e.sheet_after])
        .fold((start, start), |(lo, hi), s| (lo.min(s), hi.max(s)))
}

/// Highest pair index whose turning points lie within the phase range the
/// orbit sweeps; pairs beyond it cannot be enclosed.
pub fn reachable_pair_bound(traj: &Trajectory, n: usize) -> usize {
    let ext = traj.summary.max_phi.abs().max(traj.summary.min_phi.abs());
    let mut j = n;
    while turning_point_phase(j as i64 + 2, traj.epsilon) < ext {
        j += 1;
    }
    j
}

pub fn classify(traj: &Trajectory, n: usize, cfg: &SimulationConfig) -> Result<OrbitClass> {
    classify_with(traj, n, cfg, DEFAULT_RESIDUAL_FRACTION)
}

/// As [`classify`], with the unresolved threshold given as a fraction of
/// the measured period.
pub fn classify_with(traj: &Trajectory, n: usize, cfg: &SimulationConfig, residual_fraction: f64) -> Result<OrbitClass> {
    let t_measured = traj.period().ok_or(OrbitError::NotClosed)?;
    let k = crossing_number(traj);
    let sheet_range = event_sheet_range(traj);
    let j_max = reachable_pair_bound(traj, n);
    let enclosure = enclosure_coefficients(traj, n);
    let (coefficients, residual, t_formula, status) = match fit_coefficients(t_measured, n, cfg, k, j_max) {
        Ok((a, r)) => {
            let tf = period_formula(n, cfg, &a)?;
            let status = if r <= residual_fraction * t_measured { ClassStatus::Resolved } else { ClassStatus::Unresolved };
            (a, r, tf, status)
        }
        Err(OrbitError::InfeasibleCoefficients { .. }) => (Vec::new(), f64::INFINITY, f64::NAN, ClassStatus::Unresolved),
        Err(e) => return Err(e),
    };
    Ok(OrbitClass {
        n,
        epsilon: cfg.epsilon,
        k,
        t_measured,
        coefficients,
        t_formula,
        residual,
        sheet_range,
        status,
        enclosure,
    })
}

/// Winding-number reading of the coefficients.
///
/// In the plane `(ln|x|, phi)` the half-period path from the `N = n+1` turning
/// point to the `N = -n` one is closed by a detour through `ln|x| -> -inf`,
/// which passes no turning point. Deforming the path onto that detour sweeps
/// over exactly the turning points the closed loop winds around, so for
/// `j != n` the loop's winding about `N = j+1` and `N = -j` gives `a_j`;
/// `a_n` follows from the sum rule.
pub fn enclosure_coefficients(traj: &Trajectory, n: usize) -> Option<Vec<u32>> {
    let period = traj.period()?;
    let eps = traj.epsilon;
    let half = 0.5 * period;
    let mut path: Vec<(f64, f64)> = Vec::new();
    let log_point = |s: &crate::dynamics::State| (s.point.modulus().ln(), s.point.phi);
    for step in traj.steps() {
        if step.t_start() >= half {
            break;
        }
        let t1 = step.t_end().min(half);
        for i in 0..4 {
            let t = step.t_start() + (t1 - step.t_start()) * f64::from(i) / 4.0;
            path.push(log_point(&step.state(t)));
        }
        if t1 == half {
            path.push(log_point(&step.state(half)));
        }
    }
    let (_, phi_end) = *path.last()?;
    let (_, phi_start) = *path.first()?;
    let floor = path.iter().map(|p| p.0).fold(0.0f64, f64::min) - 5.0;
    path.push((floor, phi_end));
    path.push((floor, phi_start));
    path.push(path[0]);

    let winding = |q: (f64, f64)| -> i64 {
        let mut total = 0.0;
        for w in path.windows(2) {
            let a = (w[0].1 - q.1).atan2(w[0].0 - q.0);
            let b = (w[1].1 - q.1).atan2(w[1].0 - q.0);
            total += crate::surface::wrap_angle(b - a);
        }
        (total / (2.0 * PI)).round() as i64
    };

    let k = crossing_number(traj);
    let j_max = reachable_pair_bound(traj, n);
    let mut a = vec![0u32; j_max + 1];
    for (j, slot) in a.iter_mut().enumerate() {
        if j == n {
            continue;
        }
        let w = winding((0.0, turning_point_phase(j as i64 + 1, eps))).abs()
            + winding((0.0, turning_point_phase(-(j as i64), eps))).abs();
        *slot = w as u32;
    }
    let others: u32 = a.iter().sum();
    a[n] = k.checked_sub(others)?;
    Some(a)
}

/// Number of oscillations of a central orbit about the straight chord
/// between its turning points, over one half period.
///
/// The distance from the chord, signed so that the path lies mostly on the
/// positive side, is followed along the path and every outward bump is one
/// oscillation. A maximum counts once the signal has dropped back from it by
/// more than `floor` times the chord length; a bump still open at the far
/// turning point counts too.
pub fn oscillation_count(traj: &Trajectory, floor: f64) -> Result<usize> {
    let period = traj.period().ok_or(OrbitError::NotClosed)?;
    let half = 0.5 * period;
    let a = traj.samples.first().ok_or(OrbitError::NotClosed)?.point.value;
    let b = traj.state_at(half).ok_or(OrbitError::NotClosed)?.point.value;
    let chord = b - a;
    let len = chord.norm();
    if len == 0.0 {
        return Ok(0);
    }
    let dir = chord / len;
    let dev = |x: num_complex::Complex64| ((x - a) * dir.conj()).im;
    let threshold = floor * len;

    let mut values = Vec::new();
    for step in traj.steps() {
        if step.t_start() >= half {
            break;
        }
        let t1 = step.t_end().min(half);
        for i in 0..4 {
            values.push(dev(step.position(step.t_start() + (t1 - step.t_start()) * f64::from(i) / 4.0)));
        }
    }
    values.push(dev(b));

    let mean: f64 = values.iter().sum();
    if mean < 0.0 {
        values.iter_mut().for_each(|v| *v = -*v);
    }

    // hysteresis peak counting
    let mut count = 0;
    let mut rising = true;
    let mut extreme = values[0];
    for &v in &values[1..] {
        if rising {
            if v > extreme {
                extreme = v;
            } else if extreme - v > threshold {
                count += 1;
                rising = false;
                extreme = v;
            }
        } else if v < extreme {
            extreme = v;
        } else if v - extreme > threshold {
            rising = true;
            extreme = v;
        }
    }
    Ok(count)
}
