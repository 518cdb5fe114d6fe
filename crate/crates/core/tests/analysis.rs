use std::f64::consts::PI;

use num_complex::Complex64;
use pt_orbits::analysis::{
    critical_fit, escape_check, imaginary_intercept, phase_series, scan_periods, scan_point, CriticalSchedule,
    ScanStatus,
};
use pt_orbits::classify::central_orbit;
use pt_orbits::dynamics::{initial_state, integrate, IntegrationControls, Trajectory};
use pt_orbits::surface::SimulationConfig;

fn run(eps: f64, y: f64, direction: i8, ctl: &IntegrationControls) -> Trajectory {
    let cfg = SimulationConfig::new(eps);
    let s0 = initial_state(Complex64::new(0.0, y), 0, direction, &cfg).unwrap();
    integrate(&s0, &cfg, ctl).unwrap()
}

#[test]
fn harmonic_scan_is_flat() {
    let map = scan_periods(&SimulationConfig::new(0.0), -2.0, -0.5, 8, &IntegrationControls::default()).unwrap();
    assert_eq!(map.entries.len(), 8);
    assert_eq!(map.count(ScanStatus::Period), 8);
    for t in map.periods() {
        assert!((t - PI).abs() < 1e-6, "{t}");
    }
}

#[test]
fn scan_entries_do_not_depend_on_order() {
    let cfg = SimulationConfig::new(PI - 2.0);
    let ctl = IntegrationControls::default();
    let map = scan_periods(&cfg, -2.0, -0.5, 6, &ctl).unwrap();
    let mut single = IntegrationControls::default();
    single.keep_samples = false;
    for e in map.entries.iter().rev() {
        assert_eq!(*e, scan_point(&cfg, e.y, &single));
    }
}

#[test]
fn phase_series_is_continuous() {
    let traj = run(PI - 2.0, -8.63026, 1, &IntegrationControls::default());
    let series = phase_series(&traj);
    assert_eq!(series[0].1, 0.0);
    assert!(series.windows(2).all(|w| w[0].0 <= w[1].0));
    let jump = series.windows(2).map(|w| (w[1].1 - w[0].1).abs()).fold(0.0, f64::max);
    assert!(jump < PI / 2.0, "largest phase step {jump}");
    assert_eq!(traj.sheets_visited(), 17);
}

#[test]
fn harmonic_orbit_phase_stays_on_principal_sheet() {
    let cfg = SimulationConfig::new(0.0);
    let s0 = initial_state(Complex64::new(0.0, 2.0), 0, 1, &cfg).unwrap();
    let traj = integrate(&s0, &cfg, &IntegrationControls::default()).unwrap();
    for (_, phi) in phase_series(&traj) {
        assert!(phi > -PI - 1e-9 && phi <= PI + 1e-9, "{phi}");
    }
}

#[test]
fn intercept_of_real_segment_is_origin() {
    let cfg = SimulationConfig::new(0.0);
    let traj = central_orbit(0, &cfg, &IntegrationControls::default()).unwrap();
    assert!(imaginary_intercept(&traj).unwrap().abs() < 1e-8);
}

#[test]
fn intercept_follows_translation() {
    let cfg = SimulationConfig::new(0.0);
    let mut traj = central_orbit(0, &cfg, &IntegrationControls::default()).unwrap();
    for e in &mut traj.events {
        e.location.value -= Complex64::new(0.0, 5.0);
    }
    assert!((imaginary_intercept(&traj).unwrap() + 5.0).abs() < 1e-8);
}

#[test]
fn intercept_is_pt_invariant() {
    let ctl = IntegrationControls::default();
    for (eps, y) in [(PI - 2.0, -2.0), (0.5, -1.5)] {
        let a = imaginary_intercept(&run(eps, y, 1, &ctl)).unwrap();
        let b = imaginary_intercept(&run(eps, y, -1, &ctl)).unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn near_critical_intercept_is_large() {
    let cfg = SimulationConfig::new(0.98);
    let ctl = pt_orbits::analysis::near_critical_controls(&IntegrationControls::default());
    let y = imaginary_intercept(&central_orbit(1, &cfg, &ctl).unwrap()).unwrap();
    assert!((300.0..3000.0).contains(&-y), "{y}");
}

#[test]
fn escape_check_separates_bounded_orbits() {
    let neg = SimulationConfig::new(-0.2);
    let ctl = IntegrationControls { escape_radius: 100.0, ..IntegrationControls::for_config(&neg) };
    for dir in [1, -1] {
        assert!(escape_check(&run(-0.2, -0.01, dir, &ctl), 100.0));
    }
    assert!(!escape_check(&run(0.0, -1.0, 1, &IntegrationControls::default()), 100.0));
    assert!(!escape_check(&run(PI - 2.0, -7.1, 1, &IntegrationControls::default()), 100.0));
}

#[test]
fn critical_point_near_one_for_first_family() {
    let sched = CriticalSchedule { count: 6, ..CriticalSchedule::new(1, 1.0) };
    let fit = critical_fit(&sched, &IntegrationControls::default()).unwrap();
    assert!((fit.b - 0.999947).abs() < 0.002, "b = {}", fit.b);
    assert!((fit.gamma - 1.93757).abs() < 0.1 * 1.93757, "gamma = {}", fit.gamma);
    assert!(fit.a > 0.0);
}

#[test]
fn critical_point_for_second_family() {
    let sched = CriticalSchedule { count: 6, ..CriticalSchedule::new(2, 0.499759) };
    let fit = critical_fit(&sched, &IntegrationControls::default()).unwrap();
    assert!((fit.b - 0.499759).abs() < 0.002, "b = {}", fit.b);
    assert!((fit.gamma - 3.7063).abs() < 0.1 * 3.7063, "gamma = {}", fit.gamma);
}
