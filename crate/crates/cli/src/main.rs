mod manifest;

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;

use pt_orbits::analysis::{
    critical_samples, fit_critical, phase_series, scan_periods, CriticalSample, CriticalSchedule, ScanStatus,
};
use pt_orbits::classify::{central_orbit, classify, ClassStatus};
use pt_orbits::dynamics::{initial_state, integrate, write_trajectory_csv, IntegrationControls, Termination, Trajectory};
use pt_orbits::surface::{turning_pair, SimulationConfig};
use pt_orbits::OrbitError;

use manifest::RunManifest;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_UNRESOLVED: u8 = 3;

#[derive(Parser)]
#[command(name = "pt-orbits", version, about = "Complex classical orbits of H = p^2 + x^2 (ix)^eps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turning points of pairs 0..=n-max
    #[command(allow_negative_numbers = true)]
    TurningPoints {
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value = "turning_points.csv")]
        out: PathBuf,
    },
    /// Integrate one orbit from a given starting point
    #[command(allow_negative_numbers = true)]
    Trajectory {
        #[command(flatten)]
        start: Start,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Orbit running between the turning points of pair n
    #[command(allow_negative_numbers = true)]
    CentralOrbit {
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long)]
        n: usize,
        /// Also classify the orbit and print its record
        #[arg(long)]
        classify: bool,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "central_orbit.csv")]
        out: PathBuf,
    },
    /// Classification records for central orbits, one per epsilon
    #[command(allow_negative_numbers = true)]
    Classify {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_epsilon, required = true, num_args = 1..)]
        epsilon: Vec<f64>,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "classification.jsonl")]
        out: PathBuf,
    },
    /// Periods of orbits started along a segment of the negative imaginary axis
    #[command(allow_negative_numbers = true)]
    Scan {
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "scan.csv")]
        out: PathBuf,
    },
    /// Fit y(eps) = -a (b - eps)^(-gamma) near a critical point
    #[command(allow_negative_numbers = true)]
    FitCritical {
        #[arg(long)]
        n: usize,
        /// Suspected critical point; samples are taken below it
        #[arg(long, value_parser = parse_epsilon, required_unless_present = "input")]
        b_guess: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        offset: f64,
        #[arg(long, default_value_t = 6)]
        count: usize,
        /// Fit existing `epsilon,y` rows instead of integrating
        #[arg(long, conflicts_with = "b_guess")]
        input: Option<PathBuf>,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "critical_fit.json")]
        out: PathBuf,
    },
    /// Unwrapped phase of ix against time
    #[command(allow_negative_numbers = true)]
    PhaseSeries {
        #[command(flatten)]
        start: Start,
        #[command(flatten)]
        ctl: Controls,
        #[arg(long, default_value = "phase_series.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Start {
    /// Accepts decimals or `pi-2`
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: f64,
    /// Starting point as `re,im`
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true, required_unless_present = "x0_imag")]
    x0: Option<Complex64>,
    /// Starting point `i*y` on the imaginary axis
    #[arg(long, conflicts_with = "x0")]
    x0_imag: Option<f64>,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    sheet: i64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    direction: i8,
}

impl Start {
    fn x0(&self) -> Complex64 {
        self.x0.unwrap_or_else(|| Complex64::new(0.0, self.x0_imag.unwrap_or_default()))
    }
}

#[derive(Args)]
struct Controls {
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    energy_tol: Option<f64>,
    #[arg(long)]
    closure_tol: Option<f64>,
    /// Integration time budget
    #[arg(long, alias = "t-budget")]
    t_max: Option<f64>,
    /// Stop once |x| exceeds this; `inf` disables
    #[arg(long)]
    escape_radius: Option<f64>,
}

impl Controls {
    fn resolve(&self, cfg: &SimulationConfig) -> IntegrationControls {
        let mut c = IntegrationControls::for_config(cfg);
        c.rel_tol = self.rel_tol.unwrap_or(c.rel_tol);
        c.abs_tol = self.abs_tol.unwrap_or(c.abs_tol);
        c.energy_tol = self.energy_tol.unwrap_or(c.energy_tol);
        c.closure_tol = self.closure_tol.unwrap_or(c.closure_tol);
        c.t_budget = self.t_max.unwrap_or(c.t_budget);
        c.escape_radius = self.escape_radius.unwrap_or(c.escape_radius);
        c
    }
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let v = if let Some(rest) = t.strip_prefix("pi") {
        if rest.is_empty() {
            PI
        } else {
            let (sign, num) = rest.split_at(1);
            let d: f64 = num.parse().map_err(|_| format!("cannot read `{s}` as a number"))?;
            match sign {
                "+" => PI + d,
                "-" => PI - d,
                _ => return Err(format!("cannot read `{s}` as a number")),
            }
        }
    } else {
        t.parse().map_err(|_| format!("cannot read `{s}` as a number"))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let (re, im) = s.split_once(',').ok_or_else(|| format!("expected `re,im`, got `{s}`"))?;
    let re: f64 = re.trim().parse().map_err(|_| format!("bad real part in `{s}`"))?;
    let im: f64 = im.trim().parse().map_err(|_| format!("bad imaginary part in `{s}`"))?;
    Ok(Complex64::new(re, im))
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<OrbitError> for Failure {
    fn from(e: OrbitError) -> Self {
        let code = match e {
            OrbitError::InvalidArgument(_) | OrbitError::Parity { .. } => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_USAGE, message: e.to_string() }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure { code: EXIT_USAGE, message: format!("{}: {e}", path.display()) })
}

fn termination_code(t: &Termination) -> u8 {
    match t {
        Termination::Closed { .. } | Termination::Escaped { .. } => 0,
        _ => EXIT_NUMERICAL,
    }
}

fn describe(traj: &Trajectory) -> String {
    let (lo, hi) = traj.sheet_range();
    let outcome = match &traj.termination {
        Termination::Closed { period } => format!("closed T={period:.12}"),
        Termination::BudgetExhausted => "unresolved (time budget exhausted)".to_string(),
        Termination::Escaped { radius } => format!("escaped |x|>{radius}"),
        Termination::NumericalFailure { reason } => format!("numerical failure: {reason}"),
    };
    format!(
        "eps={} {outcome} crossings={} sheets={lo}..{hi} steps={} max_energy_residual={:.2e}",
        traj.epsilon,
        traj.events.len(),
        traj.summary.steps_accepted,
        traj.summary.max_energy_residual
    )
}

fn start_params(m: &mut RunManifest, start: &Start) {
    let x0 = start.x0();
    m.param("epsilon", start.epsilon)
        .param("x0_re", x0.re)
        .param("x0_im", x0.im)
        .param("sheet", start.sheet)
        .param("direction", start.direction);
}

fn run(cli: Cli, argv: &[String]) -> Result<u8, Failure> {
    match cli.command {
        Command::TurningPoints { epsilon, n_max, out } => {
            let cfg = SimulationConfig::new(epsilon);
            let mut w = create(&out)?;
            writeln!(w, "n,N,re_x,im_x,phase,sheet")?;
            let mut worst = 0.0f64;
            for n in 0..=n_max {
                let pair = turning_pair(n, &cfg);
                worst = worst.max(pair.residual());
                for (big_n, pt) in [(n as i64 + 1, pair.plus_point), (-(n as i64), pair.minus_point)] {
                    writeln!(
                        w,
                        "{n},{big_n},{:.16e},{:.16e},{:.16e},{}",
                        pt.value.re,
                        pt.value.im,
                        pt.phi,
                        pt.sheet()
                    )?;
                }
            }
            w.flush()?;
            let mut m = RunManifest::new("turning-points", argv);
            m.param("epsilon", epsilon).param("n_max", n_max);
            m.write_beside(&out)?;
            println!("eps={epsilon} pairs=0..{n_max} max_residual={worst:.2e} -> {}", out.display());
            Ok(0)
        }
        Command::Trajectory { start, ctl, out } => {
            let cfg = SimulationConfig::new(start.epsilon);
            let ctl = ctl.resolve(&cfg);
            let s0 = initial_state(start.x0(), start.sheet, start.direction, &cfg)?;
            let traj = integrate(&s0, &cfg, &ctl)?;
            write_trajectory_csv(&traj, create(&out)?)?;
            let mut m = RunManifest::new("trajectory", argv);
            start_params(&mut m, &start);
            m.controls(&ctl).write_beside(&out)?;
            println!("{} -> {}", describe(&traj), out.display());
            Ok(termination_code(&traj.termination))
        }
        Command::CentralOrbit { epsilon, n, classify: with_class, ctl, out } => {
            let cfg = SimulationConfig::new(epsilon);
            let ctl = ctl.resolve(&cfg);
            let traj = central_orbit(n, &cfg, &ctl)?;
            write_trajectory_csv(&traj, create(&out)?)?;
            let mut m = RunManifest::new("central-orbit", argv);
            m.param("epsilon", epsilon).param("n", n).param("classify", with_class);
            m.controls(&ctl).write_beside(&out)?;
            let code = termination_code(&traj.termination);
            if !with_class || code != 0 {
                println!("{} -> {}", describe(&traj), out.display());
                return Ok(code);
            }
            let class = classify(&traj, n, &cfg)?;
            if !class.enclosure_agrees() {
                eprintln!(
                    "note: winding count {:?} differs from the period fit {:?}",
                    class.enclosure, class.coefficients
                );
            }
            println!("{}", class.record().to_json_line());
            Ok(if class.status == ClassStatus::Resolved { 0 } else { EXIT_UNRESOLVED })
        }
        Command::Classify { n, epsilon, ctl, out } => {
            let cells: Vec<_> = epsilon
                .par_iter()
                .map(|&eps| {
                    let cfg = SimulationConfig::new(eps);
                    let mut c = ctl.resolve(&cfg);
                    c.keep_samples = true;
                    let traj = central_orbit(n, &cfg, &c)?;
                    if traj.period().is_none() {
                        return Err(Failure { code: termination_code(&traj.termination), message: describe(&traj) });
                    }
                    Ok(classify(&traj, n, &cfg)?)
                })
                .collect();
            let mut w = create(&out)?;
            let mut code = 0;
            for (eps, cell) in epsilon.iter().zip(cells) {
                match cell {
                    Ok(class) => {
                        let line = class.record().to_json_line();
                        writeln!(w, "{line}")?;
                        println!("{line}");
                        if class.status == ClassStatus::Unresolved {
                            code = code.max(EXIT_UNRESOLVED);
                        }
                    }
                    Err(f) => {
                        eprintln!("eps={eps}: {}", f.message);
                        code = code.max(f.code);
                    }
                }
            }
            w.flush()?;
            let mut m = RunManifest::new("classify", argv);
            m.param("n", n).param("epsilon", epsilon.clone());
            if let Some(&first) = epsilon.first() {
                m.controls(&ctl.resolve(&SimulationConfig::new(first)));
            }
            m.write_beside(&out)?;
            Ok(if code == EXIT_UNRESOLVED || code == 0 { code } else { EXIT_NUMERICAL })
        }
        Command::Scan { epsilon, from, to, samples, ctl, out } => {
            let cfg = SimulationConfig::new(epsilon);
            let ctl = ctl.resolve(&cfg);
            let map = scan_periods(&cfg, from, to, samples, &ctl)?;
            map.write_csv(create(&out)?)?;
            let mut m = RunManifest::new("scan", argv);
            m.param("epsilon", epsilon).param("from", from).param("to", to).param("samples", samples);
            m.controls(&ctl).write_beside(&out)?;
            let (lo, hi) = map.periods().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p), b.max(p)));
            println!(
                "eps={epsilon} samples={samples} periods={} unresolved={} escaped={} period_range=[{lo:.6}, {hi:.6}] -> {}",
                map.count(ScanStatus::Period),
                map.count(ScanStatus::Unresolved),
                map.count(ScanStatus::Escaped),
                out.display()
            );
            Ok(0)
        }
        Command::FitCritical { n, b_guess, offset, count, input, ctl, out } => {
            let mut m = RunManifest::new("fit-critical", argv);
            m.param("n", n);
            let samples = match (&input, b_guess) {
                (Some(path), _) => {
                    m.param("input", path.display().to_string());
                    read_samples(path)?
                }
                (None, Some(b)) => {
                    let sched = CriticalSchedule { n, b_guess: b, offset, count };
                    let cfg = SimulationConfig::new(b);
                    let ctl = ctl.resolve(&cfg);
                    m.param("b_guess", b).param("offset", offset).param("count", count);
                    m.controls(&pt_orbits::analysis::near_critical_controls(&ctl));
                    let mut kept = Vec::new();
                    for (epsilon, y) in critical_samples(&sched, &ctl) {
                        match y {
                            Ok(y) => kept.push(CriticalSample { epsilon, y }),
                            Err(e) => eprintln!("eps={epsilon}: skipped ({e})"),
                        }
                    }
                    kept
                }
                (None, None) => unreachable!("clap requires one of --b-guess or --input"),
            };
            let fit = fit_critical(n, &samples)?;
            let mut w = create(&out)?;
            writeln!(w, "{}", fit.to_json())?;
            w.flush()?;
            m.write_beside(&out)?;
            println!(
                "n={n} a={:.6e} b={:.8} gamma={:.6} rms_residual={:.3e} samples={} -> {}",
                fit.a,
                fit.b,
                fit.gamma,
                fit.rms_residual,
                fit.samples.len(),
                out.display()
            );
            Ok(0)
        }
        Command::PhaseSeries { start, ctl, out } => {
            let cfg = SimulationConfig::new(start.epsilon);
            let ctl = ctl.resolve(&cfg);
            let s0 = initial_state(start.x0(), start.sheet, start.direction, &cfg)?;
            let traj = integrate(&s0, &cfg, &ctl)?;
            let mut w = create(&out)?;
            writeln!(w, "t,phase")?;
            for (t, phi) in phase_series(&traj) {
                writeln!(w, "{t:.16e},{phi:.16e}")?;
            }
            w.flush()?;
            let mut m = RunManifest::new("phase-series", argv);
            start_params(&mut m, &start);
            m.controls(&ctl).write_beside(&out)?;
            println!("{} -> {}", describe(&traj), out.display());
            Ok(termination_code(&traj.termination))
        }
    }
}

fn read_samples(path: &Path) -> Result<Vec<CriticalSample>, Failure> {
    let bad = |line: usize| Failure { code: EXIT_USAGE, message: format!("{}:{line}: expected `epsilon,y`", path.display()) };
    let file = File::open(path).map_err(|e| Failure { code: EXIT_USAGE, message: format!("{}: {e}", path.display()) })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("epsilon") {
            continue;
        }
        let (e, y) = line.split_once(',').ok_or_else(|| bad(i + 1))?;
        let epsilon = e.trim().parse().map_err(|_| bad(i + 1))?;
        let y = y.trim().parse().map_err(|_| bad(i + 1))?;
        out.push(CriticalSample { epsilon, y });
    }
    Ok(out)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &argv[1..]) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
