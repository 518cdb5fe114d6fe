//! Parameter studies: period scans along the imaginary axis, phase records,
//! orbit intercepts and the divergence `y(eps) ~ -a (b - eps)^(-gamma)` near
//! critical points.

use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::central_orbit;
use crate::dynamics::{initial_state, integrate, CrossingKind, IntegrationControls, Termination, Trajectory};
use crate::error::{OrbitError, Result};
use crate::surface::SimulationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStatus {
    Period,
    Unresolved,
    Escaped,
}

impl ScanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanStatus::Period => "period",
            ScanStatus::Unresolved => "unresolved",
            ScanStatus::Escaped => "escaped",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "period" => Some(ScanStatus::Period),
            "unresolved" => Some(ScanStatus::Unresolved),
            "escaped" => Some(ScanStatus::Escaped),
            _ => None,
        }
    }
}

/// Outcome for one starting point `x0 = i y`. Sheet and crossing counts
/// describe whatever part of the orbit was integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanEntry {
    pub y: f64,
    pub status: ScanStatus,
    pub period: Option<f64>,
    pub sheets: usize,
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMap {
    pub epsilon: f64,
    pub axis_segment: (f64, f64),
    pub entries: Vec<ScanEntry>,
}

pub const PERIOD_MAP_HEADER: &str = "im_x0,status,period,sheets,crossings";

impl PeriodMap {
    pub fn periods(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter_map(|e| e.period)
    }

    pub fn count(&self, status: ScanStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| OrbitError::InvalidArgument(format!("write failed: {e}"));
        writeln!(out, "{PERIOD_MAP_HEADER}").map_err(io)?;
        for e in &self.entries {
            let period = e.period.map(|p| format!("{p:.16e}")).unwrap_or_default();
            writeln!(out, "{:.16e},{},{},{},{}", e.y, e.status.as_str(), period, e.sheets, e.crossings).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads the entries back; `epsilon` is not part of the table and is
    /// supplied by the caller.
    pub fn read_csv<R: BufRead>(input: R, epsilon: f64) -> Result<Self> {
        let bad = |line: usize, what: &str| OrbitError::InvalidArgument(format!("period map line {line}: {what}"));
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == PERIOD_MAP_HEADER => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(i + 2, &e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 2, "expected 5 fields"));
            }
            let y = f[0].parse().map_err(|_| bad(i + 2, "im_x0"))?;
            let status = ScanStatus::parse(f[1]).ok_or_else(|| bad(i + 2, "status"))?;
            let period = if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad(i + 2, "period"))?) };
            if period.is_some() != (status == ScanStatus::Period) {
                return Err(bad(i + 2, "period present iff status is period"));
            }
            let sheets = f[3].parse().map_err(|_| bad(i + 2, "sheets"))?;
            let crossings = f[4].parse().map_err(|_| bad(i + 2, "crossings"))?;
            entries.push(ScanEntry { y, status, period, sheets, crossings });
        }
        let axis_segment = match (entries.first(), entries.last()) {
            (Some(a), Some(b)) => (a.y, b.y),
            _ => (f64::NAN, f64::NAN),
        };
        Ok(PeriodMap { epsilon, axis_segment, entries })
    }
}

/// Integrates from `x0 = i y` on sheet 0, direction +1, and classifies the
/// outcome. Integration failures count as unresolved.
pub fn scan_point(cfg: &SimulationConfig, y: f64, ctl: &IntegrationControls) -> ScanEntry {
    let run = initial_state(Complex64::new(0.0, y), 0, 1, cfg).and_then(|s0| integrate(&s0, cfg, ctl));
    match run {
        Ok(traj) => scan_entry(y, &traj),
        Err(_) => ScanEntry { y, status: ScanStatus::Unresolved, period: None, sheets: 0, crossings: 0 },
    }
}

/// Scan entry for a trajectory started at `i y`.
pub fn scan_entry(y: f64, traj: &Trajectory) -> ScanEntry {
    let status = match traj.termination {
        Termination::Closed { .. } => ScanStatus::Period,
        Termination::Escaped { .. } => ScanStatus::Escaped,
        _ => ScanStatus::Unresolved,
    };
    ScanEntry { y, status, period: traj.period(), sheets: traj.sheets_visited(), crossings: traj.events.len() }
}

/// The `samples` ordinates of a scan, evenly spaced from `y_from` to `y_to`
/// inclusive.
pub fn scan_grid(y_from: f64, y_to: f64, samples: usize) -> Vec<f64> {
    let step = (y_to - y_from) / (samples - 1) as f64;
    (0..samples).map(|i| if i + 1 == samples { y_to } else { y_from + step * i as f64 }).collect()
}

/// Evenly spaced starting points `i y` for `y` from `y_from` to `y_to`,
/// integrated in parallel.
pub fn scan_periods(
    cfg: &SimulationConfig,
    y_from: f64,
    y_to: f64,
    samples: usize,
    ctl: &IntegrationControls,
) -> Result<PeriodMap> {
    if !(y_from < y_to && y_to < 0.0) {
        return Err(OrbitError::InvalidArgument(format!(
            "scan needs y_from < y_to < 0, got [{y_from}, {y_to}]"
        )));
    }
    if samples < 2 {
        return Err(OrbitError::InvalidArgument(format!("scan needs at least 2 samples, got {samples}")));
    }
    ctl.validate()?;
    let mut ctl = *ctl;
    ctl.keep_samples = false;
    let entries = scan_grid(y_from, y_to, samples)
        .par_iter().map(|&y| scan_point(cfg, y, &ctl)).collect();
    Ok(PeriodMap { epsilon: cfg.epsilon, axis_segment: (y_from, y_to), entries })
}

/// `(t, phi)` at every stored step and every axis crossing, in time order.
pub fn phase_series(traj: &Trajectory) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.point.phi)).collect();
    out.extend(traj.events.iter().map(|e| (e.t, e.location.phi)));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Most negative ordinate at which the orbit, projected onto the principal
/// sheet, crosses the negative imaginary axis.
pub fn imaginary_intercept(traj: &Trajectory) -> Result<f64> {
    traj.events
        .iter()
        .filter(|e| e.kind == CrossingKind::ImaginaryAxis)
        .map(|e| e.location.value.im)
        .reduce(f64::min)
        .ok_or(OrbitError::NoNegativeAxisCrossing)
}

/// True when the orbit ever left the disc of the given radius.
pub fn escape_check(traj: &Trajectory, radius: f64) -> bool {
    traj.summary.max_modulus > radius || traj.samples.iter().any(|s| s.point.modulus() > radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSample {
    pub epsilon: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFit {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub rms_residual: f64,
    pub samples: Vec<CriticalSample>,
}

impl CriticalFit {
    /// `-a (b - eps)^(-gamma)`.
    pub fn predict(&self, eps: f64) -> f64 {
        -self.a * (self.b - eps).powf(-self.gamma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fit serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| OrbitError::InvalidArgument(format!("bad critical fit: {e}")))
    }
}

pub const FIT_MAX_ITERATIONS: usize = 500;

/// Least-squares fit of `log|y| = log a - gamma log(b - eps)`.
///
/// Levenberg-Marquardt in the parameters `(log a, log(b - eps_max), gamma)`,
/// which keeps `b` above every sample. Starts from `b = eps_max + 0.01`,
/// `gamma = 2` and `a` matched to the first sample.
pub fn fit_critical(n: usize, samples: &[CriticalSample]) -> Result<CriticalFit> {
    if samples.len() < 4 {
        return Err(OrbitError::InvalidArgument(format!("need at least 4 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.y < 0.0)) {
        return Err(OrbitError::InvalidArgument("every intercept must be negative".into()));
    }
    if samples.windows(2).any(|w| !(w[1].epsilon > w[0].epsilon)) {
        return Err(OrbitError::InvalidArgument("epsilon must be strictly increasing".into()));
    }
    let eps_max = samples.last().map(|s| s.epsilon).unwrap_or_default();
    let log_y: Vec<f64> = samples.iter().map(|s| (-s.y).ln()).collect();

    let residuals = |th: &Vector3<f64>| -> Vec<f64> {
        let b = eps_max + th[1].exp();
        samples.iter().zip(&log_y).map(|(s, ly)| th[0] - th[2] * (b - s.epsilon).ln() - ly).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let gamma0 = 2.0;
    let s0 = 0.01f64.ln();
    let b0 = eps_max + 0.01;
    let mut th = Vector3::new(log_y[0] + gamma0 * (b0 - samples[0].epsilon).ln(), s0, gamma0);
    let mut r = residuals(&th);
    let mut c = cost(&r);
    let mut lambda = 1e-3;

    for iter in 0..FIT_MAX_ITERATIONS {
        let d = th[1].exp();
        let b = eps_max + d;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (s, ri) in samples.iter().zip(&r) {
            let gap = b - s.epsilon;
            let row = Vector3::new(1.0, -th[2] * d / gap, -gap.ln());
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        if jtr.amax() <= 1e-15 * (1.0 + c.sqrt()) {
            return Ok(finish(n, samples, eps_max, &th, &r));
        }
        loop {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Err(OrbitError::FitFailure { iterations: iter, reason: "singular normal equations".into() });
                }
                continue;
            };
            let trial = th + step;
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let small = step.amax() <= 1e-13 * (1.0 + th.amax());
                th = trial;
                r = rt;
                let converged = small || (c - ct) <= 1e-30 + 1e-20 * c;
                c = ct;
                lambda = (lambda * 0.1).max(1e-15);
                if converged {
                    return Ok(finish(n, samples, eps_max, &th, &r));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                if step.amax() <= 1e-12 * (1.0 + th.amax()) {
                    return Ok(finish(n, samples, eps_max, &th, &r));
                }
                return Err(OrbitError::FitFailure {
                    iterations: iter,
                    reason: format!("no descent direction; cost {c:e}, gradient {:e}", jtr.amax()),
                });
            }
        }
    }
    Err(OrbitError::FitFailure {
        iterations: FIT_MAX_ITERATIONS,
        reason: format!("cost {c:e}, b = {}, gamma = {}", eps_max + th[1].exp(), th[2]),
    })
}

fn finish(n: usize, samples: &[CriticalSample], eps_max: f64, th: &Vector3<f64>, r: &[f64]) -> CriticalFit {
    let rms = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    CriticalFit {
        n,
        a: th[0].exp(),
        b: eps_max + th[1].exp(),
        gamma: th[2],
        rms_residual: rms,
        samples: samples.to_vec(),
    }
}

/// Settings for sampling `y(eps)` below a suspected critical point:
/// `eps_i = b_guess - offset * 2^(-i)` for `i = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSchedule {
    pub n: usize,
    pub b_guess: f64,
    pub offset: f64,
    pub count: usize,
}

impl CriticalSchedule {
    pub fn new(n: usize, b_guess: f64) -> Self {
        Self { n, b_guess, offset: 0.05, count: 8 }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.b_guess - self.offset * 0.5f64.powi(i as i32)).collect()
    }
}

/// Controls for near-critical central orbits: no escape radius and ten
/// times the time budget, since their extent is legitimately large.
pub fn near_critical_controls(ctl: &IntegrationControls) -> IntegrationControls {
    let mut c = *ctl;
    c.escape_radius = f64::INFINITY;
    c.t_budget *= 10.0;
    c.keep_samples = false;
    c
}

/// Intercepts of the central orbits on the schedule, computed in parallel.
/// Each entry is `(eps, y)` or the reason that orbit gave no intercept.
pub fn critical_samples(sched: &CriticalSchedule, ctl: &IntegrationControls) -> Vec<(f64, Result<f64>)> {
    let ctl = near_critical_controls(ctl);
    sched
        .epsilons()
        .par_iter()
        .map(|&eps| {
            let cfg = SimulationConfig::new(eps);
            let y = central_orbit(sched.n, &cfg, &ctl).and_then(|traj| match traj.termination {
                Termination::Closed { .. } => imaginary_intercept(&traj),
                ref other => Err(OrbitError::Integration(format!("orbit did not close: {other:?}"))),
            });
            (eps, y)
        })
        .collect()
}

/// Samples the schedule and fits the divergence law to the orbits that
/// closed. Fails if fewer than four did.
pub fn critical_fit(sched: &CriticalSchedule, ctl: &IntegrationControls) -> Result<CriticalFit> {
    let samples: Vec<CriticalSample> = critical_samples(sched, ctl)
        .into_iter()
        .filter_map(|(epsilon, y)| y.ok().map(|y| CriticalSample { epsilon, y }))
        .collect();
    fit_critical(sched.n, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(a: f64, b: f64, gamma: f64, eps: &[f64]) -> Vec<CriticalSample> {
        eps.iter().map(|&e| CriticalSample { epsilon: e, y: -a * (b - e).powf(-gamma) }).collect()
    }

    #[test]
    fn fit_round_trip() {
        let eps = [0.9, 1.0, 1.05, 1.1, 1.15, 1.175];
        let fit = fit_critical(1, &synthetic(0.5, 1.2, 2.0, &eps)).unwrap();
        assert!((fit.a - 0.5).abs() < 1e-6 * 0.5, "{fit:?}");
        assert!((fit.b - 1.2).abs() < 1e-6 * 1.2, "{fit:?}");
        assert!((fit.gamma - 2.0).abs() < 1e-6 * 2.0, "{fit:?}");
        assert!(fit.rms_residual < 1e-9);
        assert!(fit.b > 1.175);
    }

    #[test]
    fn fit_rejects_bad_samples() {
        let good = synthetic(0.5, 1.2, 2.0, &[0.9, 1.0, 1.1, 1.15]);
        assert!(fit_critical(1, &good[..3]).is_err());
        let mut positive = good.clone();
        positive[2].y = 3.0;
        assert!(fit_critical(1, &positive).is_err());
        let mut unordered = good.clone();
        unordered.swap(1, 2);
        assert!(fit_critical(1, &unordered).is_err());
    }

    #[test]
    fn fit_json_round_trip() {
        let fit = fit_critical(2, &synthetic(0.07, 0.4998, 3.7, &[0.45, 0.47, 0.48, 0.49, 0.495])).unwrap();
        let text = fit.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["samples"][0]["epsilon"].is_number());
        assert!(v["samples"][0]["y"].is_number());
        assert_eq!(CriticalFit::from_json(&text).unwrap(), fit);
    }

    #[test]
    fn schedule_is_geometric() {
        let s = CriticalSchedule { n: 1, b_guess: 1.0, offset: 0.05, count: 4 };
        let e = s.epsilons();
        assert_eq!(e, vec![0.95, 0.975, 0.9875, 0.99375]);
    }

    #[test]
    fn period_map_csv_round_trip() {
        let map = PeriodMap {
            epsilon: 1.0,
            axis_segment: (-2.0, -1.0),
            entries: vec![
                ScanEntry { y: -2.0, status: ScanStatus::Period, period: Some(3.25), sheets: 3, crossings: 10 },
                ScanEntry { y: -1.5, status: ScanStatus::Unresolved, period: None, sheets: 5, crossings: 123 },
                ScanEntry { y: -1.0, status: ScanStatus::Escaped, period: None, sheets: 1, crossings: 0 },
            ],
        };
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("im_x0,status,period,sheets,crossings\n"));
        assert_eq!(PeriodMap::read_csv(&buf[..], 1.0).unwrap(), map);
        assert!(PeriodMap::read_csv("im_x0,status,period,sheets,crossings\n-1,period,,1,0\n".as_bytes(), 1.0).is_err());
    }

    #[test]
    fn scan_preconditions() {
        let cfg = SimulationConfig::new(0.0);
        let ctl = IntegrationControls::default();
        assert!(scan_periods(&cfg, -1.0, -2.0, 10, &ctl).is_err());
        assert!(scan_periods(&cfg, -1.0, 0.5, 10, &ctl).is_err());
        assert!(scan_periods(&cfg, -2.0, -1.0, 1, &ctl).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fit_recovers_any_law(a in 0.01f64..10.0, b in 0.3f64..2.0, gamma in 0.5f64..6.0, gap in 0.002f64..0.05) {
            let eps: Vec<f64> = (0..6).map(|i| b - gap * 2f64.powi(5 - i)).collect();
            let fit = fit_critical(1, &synthetic(a, b, gamma, &eps)).unwrap();
            prop_assert!(((fit.a - a) / a).abs() < 1e-6, "{:?}", fit);
            prop_assert!(((fit.b - b) / b).abs() < 1e-6, "{:?}", fit);
            prop_assert!(((fit.gamma - gamma) / gamma).abs() < 1e-6, "{:?}", fit);
        }
    }
}
