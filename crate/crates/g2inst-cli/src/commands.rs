//! The CLI verbs. Each returns an [`Outcome`]; [`run`] writes the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use g2inst::cone_dynamics::{
    far_field, linearize, printed_eigenvector_defect, printed_linearisation, shoot_h0_with, family_sweep, FixedPoint, ShootOptions,
};
use g2inst::exec::with_jobs;
use g2inst::instanton_system::{integrate_connection_with, BundleIndex, ConnectionOptions, LocalData, TrajectoryPoint};
use g2inst::metric_profiles::{
    audit_inequalities, build_ac_profile, integrate_ac_profile, near_orbit_series, nu_infinity, scan_beta, tune_beta_ac, AcOptions,
    IntegrationOptions, MetricParams, MetricProfile, TuneOptions,
};
use g2inst::singular_ivp::SeriesSolution;
use g2inst::Exec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Beta, RunConfig};
use crate::output::{read_csv, write_atomic, write_json, Cell, Table};
use crate::svg::{Chart, Series};
use crate::{verify, CliError, Profile};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    FixedPoints,
    TuneMetric,
    Integrate,
    Shoot,
    Sweep,
    Verify,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FixedPoints => "fixed-points",
            Command::TuneMetric => "tune-metric",
            Command::Integrate => "integrate",
            Command::Shoot => "shoot",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Plot => "plot",
        }
    }
}

/// Plot-only arguments.
#[derive(Clone, Debug, Default)]
pub struct PlotArgs {
    pub input: Option<PathBuf>,
    pub columns: Option<Vec<String>>,
}

pub struct Outcome {
    pub summary: Value,
    pub artifacts: Vec<String>,
    /// Set when a check failed; artifacts are still written.
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'static str,
    config: &'a RunConfig,
    elapsed_seconds: f64,
    artifacts: &'a [String],
    summary: &'a Value,
}

pub fn exec_policy(cfg: &RunConfig) -> Exec {
    if cfg.jobs == 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

/// Run `cmd` and write `<out>/<cmd>.manifest.json` once it has finished.
pub fn run(cmd: Command, cfg: &RunConfig, plot: &PlotArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let out = PathBuf::from(&cfg.out);
    let outcome = with_jobs(cfg.jobs, || match cmd {
        Command::FixedPoints => fixed_points(cfg, &out),
        Command::TuneMetric => tune_metric(cfg, &out),
        Command::Integrate => integrate(cfg, &out),
        Command::Shoot => shoot(cfg, &out),
        Command::Sweep => sweep(cfg, &out),
        Command::Verify => verify::run(cfg, &out),
        Command::Plot => plot_csv(cfg, &out, plot),
    })?;
    let manifest = RunManifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        artifacts: &outcome.artifacts,
        summary: &outcome.summary,
    };
    write_json(&out.join(format!("{}.manifest.json", cmd.name())), &manifest)?;
    Ok(outcome)
}

fn params(cfg: &RunConfig, beta: f64) -> Result<MetricParams, CliError> {
    let p = MetricParams::new(cfg.m, cfg.n, cfg.r0, beta);
    p.validate()?;
    Ok(p)
}

/// Tuned AC profile (`beta = "tune"`) or a plain integration at the given β up to `t_max`.
pub fn build_profile(cfg: &RunConfig) -> Result<Profile, CliError> {
    match cfg.beta {
        Beta::Value(b) => {
            let p = params(cfg, b)?;
            let t0 = IntegrationOptions::for_params(&p).t0;
            Ok(Profile::Fixed(integrate_ac_profile(p, t0, cfg.t_max, cfg.rtol)?))
        }
        Beta::Tune(_) => {
            let p = params(cfg, 1.0)?;
            let tuning = tune_beta_ac(p, (cfg.beta_lo, cfg.beta_hi), cfg.tol, &TuneOptions::default())?;
            Ok(Profile::Ac(build_ac_profile(p, tuning, &AcOptions::default())?))
        }
    }
}

fn profile_summary(p: &Profile) -> Value {
    match p {
        Profile::Ac(ac) => json!({
            "kind": "tuned-ac",
            "beta": ac.tuning.beta,
            "beta_bracket": [ac.tuning.lo, ac.tuning.hi],
            "t_match": ac.t_match,
            "shift": ac.shift(),
        }),
        Profile::Fixed(n) => json!({
            "kind": "fixed-beta",
            "beta": n.params().beta,
            "t_end": n.t_end(),
            "status": format!("{:?}", n.status()),
        }),
    }
}

pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = (((hi / lo).log10() * per_decade as f64).ceil() as usize).max(1);
    (0..=n).map(|i| if i == n { hi } else { lo * (hi / lo).powf(i as f64 / n as f64) }).collect()
}

fn series_dump(s: &SeriesSolution) -> Value {
    let mut m = serde_json::Map::new();
    for (k, c) in s.dump() {
        m.insert(k.to_string(), json!(c));
    }
    Value::Object(m)
}

pub fn trajectory_table(points: &[TrajectoryPoint]) -> Table {
    let mut t = Table::new(&["t", "f", "fp", "g", "h", "residual", "curvature_norm"]);
    for p in points {
        let z = p.z;
        t.push(vec![p.t.into(), z.f.into(), z.fp.into(), z.g.into(), z.h.into(), p.residual.into(), p.curvature_norm.into()]);
    }
    t
}

/// Chart of `ys` against `x`, taken verbatim from the table.
pub fn chart(title: &str, x: (&str, &[f64]), ys: &[(&str, Vec<f64>)], log_x: bool) -> Chart {
    Chart {
        title: title.to_string(),
        x_label: if log_x { format!("{} (log scale)", x.0) } else { x.0.to_string() },
        y_label: String::new(),
        log_x,
        series: ys.iter().map(|(n, y)| Series { name: n.to_string(), x: x.1.to_vec(), y: y.clone() }).collect(),
    }
}

fn trajectory_chart(title: &str, table: &Table) -> Chart {
    let t = table.column("t").expect("t column");
    let ys: Vec<(&str, Vec<f64>)> = ["f", "fp", "g", "h"].iter().map(|c| (*c, table.column(c).expect("state column"))).collect();
    chart(title, ("t", &t), &ys, true)
}

fn rel(out: &Path, name: &str) -> (PathBuf, String) {
    (out.join(name), name.to_string())
}

// ---------------------------------------------------------------- fixed points

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointEntry {
    pub name: String,
    pub z: [f64; 4],
    pub residual: f64,
    pub jacobian: [[f64; 4]; 4],
    pub jacobian_matches_printed: bool,
    pub fd_error: f64,
    pub eigenvalues: Vec<f64>,
    pub printed_eigenvalues: Vec<f64>,
    pub eigenvalue_error: f64,
    pub eigenvectors: Vec<[f64; 4]>,
    pub printed_eigenvector_defect: f64,
    pub stable: Vec<usize>,
    pub unstable: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub fixed_points: Vec<FixedPointEntry>,
}

pub fn fixed_point_report() -> Result<FixedPointReport, CliError> {
    let mut fixed_points = Vec::new();
    for fp in FixedPoint::ALL {
        let rec = linearize(fp)?;
        let (printed, vals, _) = printed_linearisation(fp);
        let mut want = vals.to_vec();
        want.sort_by(f64::total_cmp);
        // `rec.eigenvalues` lists each eigenvalue once per eigenvector
        let eigenvalue_error = rec.eigenvalues.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        fixed_points.push(FixedPointEntry {
            name: fp.name().to_string(),
            z: rec.z,
            residual: rec.residual,
            jacobian: rec.jacobian,
            jacobian_matches_printed: rec.jacobian == printed,
            fd_error: rec.fd_error,
            eigenvalues: rec.eigenvalues.clone(),
            printed_eigenvalues: want,
            eigenvalue_error,
            eigenvectors: rec.eigenvectors.clone(),
            printed_eigenvector_defect: printed_eigenvector_defect(&rec),
            stable: rec.stable.clone(),
            unstable: rec.unstable.clone(),
        });
    }
    Ok(FixedPointReport { fixed_points })
}

fn fixed_points(_cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let report = fixed_point_report()?;
    let (path, name) = rel(out, "fixed_points.json");
    write_json(&path, &report)?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(e.to_string()))?;
    let back: FixedPointReport = serde_json::from_str(&text).map_err(|e| CliError::Io(e.to_string()))?;
    let round_trip = back == report;

    println!("{:<4} {:>24} {:>10} {:>10} {:>10}", "fp", "eigenvalues", "eig err", "fd err", "printed");
    let mut failure = None;
    for e in &report.fixed_points {
        let ev: Vec<String> = e.eigenvalues.iter().map(|v| format!("{v:.0}")).collect();
        println!("{:<4} {:>24} {:>10.1e} {:>10.1e} {:>10}", e.name, ev.join(","), e.eigenvalue_error, e.fd_error, e.jacobian_matches_printed);
        if !(e.eigenvalue_error < 1e-10 && e.fd_error < 1e-6) {
            failure = Some(format!("linearisation at {} disagrees with the printed data", e.name));
        }
    }
    println!("json round-trip: {}", if round_trip { "lossless" } else { "MISMATCH" });
    if !round_trip {
        failure = Some("fixed-point report does not round-trip".into());
    }
    Ok(Outcome { summary: json!({ "round_trip": round_trip, "report": report }), artifacts: vec![name], failure })
}

// ---------------------------------------------------------------- tune-metric

fn tune_metric(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let profile = match build_profile(cfg) {
        Ok(p) => p,
        Err(CliError::Numeric(msg)) if msg.starts_with("no bracket") => {
            let p = params(cfg, 1.0)?;
            let grid: Vec<f64> = (0..=8).map(|i| cfg.beta_lo + (cfg.beta_hi - cfg.beta_lo) * i as f64 / 8.0).collect();
            let scan = scan_beta(p, &grid, &TuneOptions::default(), exec_policy(cfg));
            let mut t = Table::new(&["beta", "classification"]);
            println!("{msg}; scan of the bracket:");
            for (b, c) in &scan {
                let label = match c {
                    Ok(c) => c.label().to_string(),
                    Err(e) => format!("error: {e}"),
                };
                println!("  beta = {b:<22} {label}");
                t.push(vec![(*b).into(), label.into()]);
            }
            t.write(&out.join("beta_scan.csv"))?;
            return Err(CliError::Numeric(msg));
        }
        Err(e) => return Err(e),
    };
    let prof = profile.as_dyn();
    let p = *prof.params();
    let t_lo = IntegrationOptions::for_params(&p).t0;

    let mut table = Table::new(&["t", "a", "b", "da", "db"]);
    for t in log_grid(t_lo, cfg.t_max, cfg.per_decade) {
        let s = prof.sample(t);
        table.push(vec![t.into(), s.a.into(), s.b.into(), s.da.into(), s.db.into()]);
    }
    let (csv_path, csv_name) = rel(out, "profile.csv");
    table.write(&csv_path)?;

    let mut artifacts = vec![csv_name];
    if let Some(s) = near_orbit_series(p, 16)?.series() {
        let (path, name) = rel(out, "metric_series.json");
        write_json(&path, &series_dump(s))?;
        artifacts.push(name);
    }

    let audit_grid = log_grid(t_lo, cfg.t_max, cfg.per_decade);
    let mut summary = json!({
        "m": p.m, "n": p.n, "r0": p.r0, "beta": p.beta, "tol": cfg.tol, "t0": t_lo, "t_max": cfg.t_max,
        "profile": profile_summary(&profile),
    });
    let mut failure = None;
    match &profile {
        Profile::Ac(ac) => {
            let nu = ac.decay_exponent(5.0, ac.t_match, 200);
            let nu_rel = (nu - nu_infinity()).abs() / nu_infinity();
            let failures = audit_grid.iter().filter(|t| !ac.audit(**t).all()).count();
            println!("beta_ac      = {:.17}", ac.tuning.beta);
            println!("bracket      = [{:.17}, {:.17}] after {} bisections", ac.tuning.lo, ac.tuning.hi, ac.tuning.iterations);
            println!("nu fit       = {nu:.6} (nu_inf {:.6}, {:.3}% off)", nu_infinity(), 100.0 * nu_rel);
            println!("audit        = {}/{} sample times pass", audit_grid.len() - failures, audit_grid.len());
            summary["nu_fit"] = json!(nu);
            summary["nu_infinity"] = json!(nu_infinity());
            summary["nu_relative_error"] = json!(nu_rel);
            summary["audit_failures"] = json!(failures);
            summary["audit_samples"] = json!(audit_grid.len());
            if failures > 0 {
                failure = Some(format!("inequality audit failed at {failures} sample times"));
            }
        }
        Profile::Fixed(n) => {
            let end = n.t_end();
            let failures = audit_grid.iter().filter(|t| **t <= end && !audit_inequalities(&n.sample(**t), &p).all()).count();
            println!("beta = {:.17}: integration {:?} at t = {end}", p.beta, n.status());
            summary["audit_failures"] = json!(failures);
        }
    }
    Ok(Outcome { summary, artifacts, failure })
}

// ---------------------------------------------------------------- integrate / shoot / sweep

fn bundle(cfg: &RunConfig) -> Result<BundleIndex, CliError> {
    Ok(BundleIndex::new(cfg.m, cfg.n, cfg.j)?)
}

fn connection_options(cfg: &RunConfig) -> ConnectionOptions {
    ConnectionOptions { t0: cfg.t0, t_max: cfg.t_max, series_order: cfg.series_order, ..ConnectionOptions::default().with_tol(cfg.rtol) }
}

pub fn shoot_options(cfg: &RunConfig) -> Result<ShootOptions, CliError> {
    let d = ShootOptions::default();
    Ok(ShootOptions {
        idx: bundle(cfg)?,
        connection: ConnectionOptions { r_big: d.connection.r_big, ..connection_options(cfg) },
        tau_t: cfg.tau_t,
        tau_max: cfg.tau_max,
        eps_conv: cfg.eps_conv,
        h0_bracket: (cfg.h0_lo, cfg.h0_hi),
        ..d
    })
}

fn integrate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let idx = bundle(cfg)?;
    let profile = build_profile(cfg)?;
    let prof = profile.as_dyn();
    let co = connection_options(cfg);
    let traj = integrate_connection_with(idx, LocalData { f0: cfg.f0, h0: cfg.h0 }, prof, &co)?;
    let table = trajectory_table(&traj.sample_log(prof, cfg.t0, cfg.per_decade));
    let (csv_path, csv_name) = rel(out, "trajectory.csv");
    table.write(&csv_path)?;
    let (series_path, series_name) = rel(out, "connection_series.json");
    write_json(&series_path, &series_dump(&traj.series))?;
    println!("integrated (f0, h0) = ({}, {}) on P_{} to t = {:.6e}: {}", cfg.f0, cfg.h0, cfg.j, traj.t_end(), traj.exit.label());
    let summary = json!({
        "idx": idx,
        "d": LocalData { f0: cfg.f0, h0: cfg.h0 },
        "profile": profile_summary(&profile),
        "tolerances": { "t0": co.t0, "rtol": co.rtol, "atol": co.atol, "series_order": co.series_order, "r_big": co.r_big },
        "exit": traj.exit,
        "t_end": traj.t_end(),
    });
    Ok(Outcome { summary, artifacts: vec![csv_name, series_name], failure: None })
}

fn shoot(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let opts = shoot_options(cfg)?;
    let profile = build_profile(cfg)?;
    let prof = profile.as_dyn();
    let shot = shoot_h0_with(cfg.f0, prof, &opts, exec_policy(cfg))?;
    let ff = far_field(&shot.trajectory, prof, opts.tau_t);
    let table = trajectory_table(&shot.trajectory.sample_log(prof, cfg.t0, cfg.per_decade));
    let (csv_path, csv_name) = rel(out, "trajectory.csv");
    table.write(&csv_path)?;
    let (svg_path, svg_name) = rel(out, "trajectory.svg");
    let title = format!("f0 = {}, h0 = {:.12}: {}", cfg.f0, shot.result.h0, shot.result.classification.label());
    write_atomic(&svg_path, trajectory_chart(&title, &table).render().as_bytes())?;
    let (series_path, series_name) = rel(out, "connection_series.json");
    write_json(&series_path, &series_dump(&shot.trajectory.series))?;
    let r = &shot.result;
    println!("f0 = {}  h0 = {:.17}  {}  |z(T) - target| = {:.3e}", r.f0, r.h0, r.classification.label(), r.distance_to_target);
    if r.classification.is_converged() {
        println!("far field: heteroclinic distance {:.3e}, max |F|^2 {:.6e}", ff.heteroclinic_distance, ff.max_curvature);
    }
    let scan: Vec<Value> = shot.scan.iter().map(|(h, c)| json!({ "h0": h, "classification": c.label() })).collect();
    let summary = json!({
        "profile": profile_summary(&profile),
        "result": r,
        "classification": r.classification.label(),
        "far_field": ff,
        "scan": scan,
    });
    Ok(Outcome { summary, artifacts: vec![csv_name, svg_name, series_name], failure: None })
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let opts = shoot_options(cfg)?;
    let profile = build_profile(cfg)?;
    let report = family_sweep(&cfg.f0_grid(), profile.as_dyn(), &opts, exec_policy(cfg));
    let mut table = Table::new(&["f0", "h0", "classification", "exit_tau", "distance", "max_curvature"]);
    for r in &report.rows {
        table.push(vec![r.f0.into(), r.h0.into(), Cell::Text(r.classification.label().into()), r.exit_tau.into(), r.distance.into(), r.max_curvature.into()]);
    }
    let (csv_path, csv_name) = rel(out, "sweep.csv");
    table.write(&csv_path)?;
    let f0 = table.column("f0").expect("f0");
    let chart = chart("h0 along the family", ("f0", &f0), &[("h0", table.column("h0").expect("h0"))], false);
    let (svg_path, svg_name) = rel(out, "sweep.svg");
    write_atomic(&svg_path, chart.render().as_bytes())?;

    println!("{:>10} {:>24} {:>16} {:>10} {:>10}", "f0", "h0", "class", "exit_tau", "distance");
    for r in &report.rows {
        println!("{:>10.6} {:>24.17} {:>16} {:>10.4} {:>10.2e}", r.f0, r.h0, r.classification.label(), r.exit_tau, r.distance);
    }
    let errors: Vec<String> = report.rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("f0 = {}: {e}", r.f0))).collect();
    let failure = (!errors.is_empty()).then(|| errors.join("; "));
    let summary = json!({
        "profile": profile_summary(&profile),
        "max_adjacent_jump": report.max_adjacent_jump,
        "achieved": report.achieved,
        "rows": report.rows,
    });
    Ok(Outcome { summary, artifacts: vec![csv_name, svg_name], failure })
}

// ---------------------------------------------------------------- plot

fn plot_csv(_cfg: &RunConfig, out: &Path, args: &PlotArgs) -> Result<Outcome, CliError> {
    let input = args.input.as_ref().ok_or_else(|| CliError::Config("plot needs an input CSV".into()))?;
    let (header, cols) = read_csv(input)?;
    if header.len() < 2 {
        return Err(CliError::Config(format!("{}: need at least two columns", input.display())));
    }
    let wanted: Vec<String> = match &args.columns {
        Some(c) => c.clone(),
        None if header[..5.min(header.len())] == ["t", "f", "fp", "g", "h"] => ["f", "fp", "g", "h"].map(String::from).to_vec(),
        None => header[1..].to_vec(),
    };
    let mut ys = Vec::new();
    for w in &wanted {
        let i = header.iter().position(|h| h == w).ok_or_else(|| CliError::Config(format!("no column {w:?} in {}", input.display())))?;
        ys.push((w.as_str(), cols[i].clone()));
    }
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    let log_x = header[0] == "t";
    let c = chart(&stem, (&header[0], &cols[0]), &ys, log_x);
    let name = format!("{stem}.svg");
    write_atomic(&out.join(&name), c.render().as_bytes())?;
    println!("wrote {}", out.join(&name).display());
    Ok(Outcome { summary: json!({ "input": input.display().to_string(), "columns": wanted }), artifacts: vec![name], failure: None })
}
