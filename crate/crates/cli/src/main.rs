use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand};
use freepole::config::{AnalysisKind, Config};
use freepole::hierarchy::{build_space_with_budget, estimate_size, propagate, AdoVector};
use freepole::io;
use freepole::observables::{
    bare_ground_state, final_window_average, relax_to_steady_state, shiba_check, sigma_z, static_susceptibility,
    two_time_correlation, CorrelationResult, RelaxSpec, ShibaPrediction, StepSpec,
};
use freepole::oracle::closed_form_subohmic;
use freepole::polefit::{
    decomposition_from_poles, fit_barycentric, poles_and_residues, scan_k_vs_delta, ExponentialDecomposition,
};
use freepole::spectrum::Temperature;
use freepole::verify::{linear_fit, run_suite, Suite};
use freepole::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "freepole", version, about = "Free-pole spectrum fitting and hierarchy dynamics for a two-level system")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the noise power and write the pole set and the decomposition.
    Fit {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Overrides fit.delta.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Propagate the hierarchy for a decomposition file.
    Propagate {
        config: PathBuf,
        decomposition: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Overrides truncation.depth.
        #[arg(long)]
        depth: Option<usize>,
        /// Overrides propagation.dt.
        #[arg(long)]
        dt: Option<f64>,
        /// Overrides propagation.t_final.
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Analyse a trajectory, a correlation file or a decomposition.
    Analyze {
        input: PathBuf,
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Overrides analysis.kind (shiba, localization, susceptibility).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Run a verification suite, or `all`.
    Verify { suite: String },
    /// Number of modes for each tolerance in fit.scan_deltas.
    Scan {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

/// Provenance of one run; every emitted data file is listed with its hash.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    status: String,
    started_unix: u64,
    wall_seconds: f64,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
    results: BTreeMap<String, toml::Value>,
    config: Config,
}

impl RunManifest {
    fn new(command: &str, config: Config) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "ok".into(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_seconds: 0.0,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            results: BTreeMap::new(),
            config,
        }
    }

    fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn result(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    /// Writes a data file through `f` and records its hash.
    fn artifact(
        &mut self,
        out: &Path,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> freepole::Result<()>,
    ) -> anyhow::Result<PathBuf> {
        let path = out.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        drop(w);
        self.artifacts.insert(name.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    fn write(mut self, out: &Path, started: Instant) -> anyhow::Result<()> {
        self.wall_seconds = started.elapsed().as_secs_f64();
        let path = out.join("manifest.toml");
        std::fs::write(&path, toml::to_string(&self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Failure carrying an explicit exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. }) | Some(Error::ScanEntry { .. }) => 2,
        Some(Error::Divergence { .. }) => 3,
        Some(Error::BudgetExceeded { .. }) => 4,
        _ => 1,
    }
}

fn load_config(path: &Path) -> anyhow::Result<(Config, PathBuf)> {
    let cfg = Config::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn params_comments(cfg: &Config) -> Vec<String> {
    let sp = &cfg.spectrum;
    let mut c = vec![format!("model: {:?}", sp.model).to_lowercase(), format!("temperature: {}", sp.temperature)];
    if let Some(p) = sp.subohmic() {
        c.push(format!("s: {}, alpha: {}, omega_c: {}", p.s, p.alpha, p.omega_c));
    }
    c
}

fn cmd_fit(config: &Path, out: &Path, delta: Option<f64>) -> anyhow::Result<()> {
    let started = Instant::now();
    let (mut cfg, base) = load_config(config)?;
    if let Some(d) = delta {
        cfg.fit.delta = d;
    }
    let model = cfg.spectrum.model(&base)?;
    let temperature = cfg.spectrum.temperature()?;
    let domain = cfg.domain.build()?;
    let fit_cfg = cfg.fit.config()?;
    let samples = domain.sample(&model, temperature)?;
    std::fs::create_dir_all(out)?;

    let mut manifest = RunManifest::new("fit", cfg.clone());
    manifest.input(config)?;
    let (bary, failure) = match fit_barycentric(&domain.grid, &samples, &fit_cfg) {
        Ok(m) => (m, None),
        Err(Error::NonConvergence {
            best,
            iterations,
            error,
            tolerance,
        }) => {
            let msg = format!(
                "fit did not converge after {iterations} support points (error {error:.3e}, tolerance {tolerance:.3e}); best-effort files written"
            );
            (*best, Some(Exit(2, msg)))
        }
        Err(e) => return Err(e.into()),
    };
    if failure.is_some() {
        manifest.status = "non-converged (best effort)".into();
    }
    let poles = poles_and_residues(&bary)?;
    let dec = match (decomposition_from_poles(&poles), &failure) {
        (Ok(dec), _) => Some(dec),
        (Err(_), Some(_)) => None,
        (Err(e), None) => return Err(e.into()),
    };
    let mut comments = params_comments(&cfg);
    comments.push(format!("delta: {:e}", cfg.fit.delta));
    comments.push(format!("support points: {}", bary.m()));
    comments.push(format!("max error: {}", io::fmt(poles.fit_error)));
    if failure.is_some() {
        comments.push("status: non-converged best-effort fit".into());
    }
    manifest.artifact(out, "poles.csv", |w| io::write_poles(w, &poles, &comments))?;
    if let Some(dec) = &dec {
        manifest.artifact(out, "decomposition.csv", |w| io::write_decomposition(w, dec, &comments))?;
    }
    let modes = dec.as_ref().map_or(0, |d| d.len());
    let relative = poles.fit_error / bary.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    manifest.result("modes", modes as i64);
    manifest.result("support_points", bary.m() as i64);
    manifest.result("max_error", poles.fit_error);
    manifest.result("relative_error", relative);
    manifest.result("tolerance", poles.tolerance);
    manifest.result("dropped_froissart", poles.dropped_froissart as i64);
    manifest.result("regularized_real", poles.regularized_real as i64);
    println!(
        "K = {}, max error {:.3e} (relative {:.3e}), {:.2} s",
        modes,
        poles.fit_error,
        relative,
        started.elapsed().as_secs_f64()
    );
    manifest.write(out, started)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn read_decomposition(path: &Path) -> anyhow::Result<ExponentialDecomposition> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(io::read_decomposition(BufReader::new(f), &path.display().to_string())?)
}

fn cmd_propagate(
    config: &Path,
    decomposition: &Path,
    out: &Path,
    depth: Option<usize>,
    dt: Option<f64>,
    t_final: Option<f64>,
) -> anyhow::Result<()> {
    let started = Instant::now();
    let (mut cfg, _) = load_config(config)?;
    if let Some(l) = depth {
        cfg.truncation.depth = l;
    }
    if let Some(dt) = dt {
        cfg.propagation.dt = dt;
    }
    if let Some(t) = t_final {
        cfg.propagation.t_final = t;
    }
    let dec = read_decomposition(decomposition)?;
    let sys = cfg.system.spec()?;
    let trunc = cfg.truncation.spec()?;
    let spec = cfg.propagation.spec()?;
    let budget = cfg.truncation.budget()?;
    std::fs::create_dir_all(out)?;

    let mut manifest = RunManifest::new("propagate", cfg.clone());
    manifest.input(config)?;
    manifest.input(decomposition)?;
    manifest.result("modes", dec.len() as i64);
    manifest.result("depth", trunc.depth as i64);
    manifest.result("per_mode_cap", trunc.per_mode_cap as i64);
    manifest.result("dt", spec.dt);
    let estimate = estimate_size(dec.len(), &trunc);
    manifest.result("estimated_ados", estimate.to_string());
    let space = match build_space_with_budget(dec.len(), &trunc, budget) {
        Ok(s) => s,
        Err(e @ Error::BudgetExceeded { .. }) => {
            manifest.status = "refused: budget".into();
            manifest.write(out, started)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let initial = AdoVector::factorized(&space, cfg.propagation.initial.density_matrix(&sys))?;
    let traj = match propagate(&space, &sys, &dec, &initial, &spec) {
        Ok(t) => t,
        Err(e @ Error::Divergence { .. }) => {
            if let Error::Divergence { time, .. } = e {
                manifest.result("divergence_time", time);
            }
            manifest.status = "diverged".into();
            manifest.write(out, started)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let mut comments = params_comments(&cfg);
    comments.push(format!(
        "K: {}, L: {}, N_b: {}, ados: {}",
        dec.len(),
        trunc.depth,
        trunc.per_mode_cap,
        space.len()
    ));
    comments.push(format!(
        "epsilon: {}, delta_x: {}, dt: {}, integrator: {:?}",
        sys.epsilon, sys.delta_x, spec.dt, spec.integrator
    ));
    manifest.artifact(out, "trajectory.csv", |w| io::write_trajectory(w, &traj, &comments))?;
    manifest.result("ados", space.len() as i64);
    manifest.result("steps", traj.steps as i64);
    manifest.result("rejected_steps", traj.rejected as i64);
    let sz = traj.states.last().map(sigma_z).unwrap_or(f64::NAN);
    manifest.result("final_sigma_z", sz);
    println!(
        "{} ADOs, {} steps, <sigma_z>({}) = {:.6}, {:.2} s",
        space.len(),
        traj.steps,
        spec.t_final,
        sz,
        started.elapsed().as_secs_f64()
    );
    manifest.write(out, started)
}

fn parse_kind(s: &str) -> anyhow::Result<AnalysisKind> {
    match s {
        "shiba" => Ok(AnalysisKind::Shiba),
        "localization" => Ok(AnalysisKind::Localization),
        "susceptibility" => Ok(AnalysisKind::Susceptibility),
        _ => Err(Exit(1, format!("unknown analysis kind `{s}`")).into()),
    }
}

/// Column line of a data file, skipping comments.
fn column_line(path: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("")
        .to_string())
}

fn cmd_analyze(input: &Path, config: &Path, out: &Path, kind: Option<&str>) -> anyhow::Result<()> {
    let started = Instant::now();
    let (mut cfg, _) = load_config(config)?;
    if let Some(k) = kind {
        cfg.analysis.kind = parse_kind(k)?;
    }
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("analyze", cfg.clone());
    manifest.input(config)?;
    manifest.input(input)?;
    let a = cfg.analysis.clone();
    let columns = column_line(input)?;
    let name = input.display().to_string();
    let open = || -> anyhow::Result<BufReader<File>> { Ok(BufReader::new(File::open(input)?)) };

    let mut report: BTreeMap<String, toml::Value> = BTreeMap::new();
    match a.kind {
        AnalysisKind::Localization => {
            let (times, states) = io::read_trajectory(open()?, &name)?;
            let sz: Vec<f64> = states.iter().map(sigma_z).collect();
            let avg = final_window_average(&times, &sz, a.localization_fraction)?;
            let verdict = if avg.abs() < a.localization_threshold { "delocalized" } else { "localized" };
            report.insert("final_window_fraction".into(), a.localization_fraction.into());
            report.insert("mean_sigma_z".into(), avg.into());
            report.insert("threshold".into(), a.localization_threshold.into());
            report.insert("verdict".into(), verdict.into());
            println!("mean <sigma_z> over the final {:.0}%: {avg:.6} -> {verdict}", 100.0 * a.localization_fraction);
        }
        AnalysisKind::Susceptibility => {
            let dec = io::read_decomposition(open()?, &name)?;
            let sys = cfg.system.spec()?;
            let space = build_space_with_budget(dec.len(), &cfg.truncation.spec()?, cfg.truncation.budget()?)?;
            let relax = RelaxSpec::new(a.steady_tol, a.steady_t_max, cfg.propagation.dt)?;
            let h = a.d_epsilon.unwrap_or(1e-3 * sys.delta_x);
            let r = static_susceptibility(&space, &sys, &dec, h, &relax)?;
            report.insert("chi_bar".into(), r.chi_bar.into());
            report.insert("sigma_z_plus".into(), r.sigma_z_plus.into());
            report.insert("sigma_z_minus".into(), r.sigma_z_minus.into());
            report.insert("d_epsilon".into(), h.into());
            report.insert("stationary".into(), r.stationary().into());
            println!("chi_bar = {:.6} (stationary: {})", r.chi_bar, r.stationary());
        }
        AnalysisKind::Shiba => {
            let p = cfg
                .spectrum
                .subohmic()
                .ok_or_else(|| Exit(1, "the shiba analysis needs a subohmic spectrum section".into()))?;
            let chi_bar = a.chi_bar.unwrap_or(-1.0 / cfg.system.delta_x);
            let pred = ShibaPrediction::new(&p, chi_bar)?;
            let result: CorrelationResult = if columns == io::CORRELATION_COLUMNS {
                io::read_correlation(open()?, &name)?
            } else {
                let dec = io::read_decomposition(open()?, &name)?;
                let corr = sigma_z_correlation(&cfg, &dec, a.shiba_window[1], a.correlation_spacing)?;
                let tail = |t: f64| pred.tail(t);
                manifest.artifact(out, "correlation.csv", |w| {
                    io::write_correlation(w, &corr, Some(&tail), &params_comments(&cfg))
                })?;
                corr
            };
            // the closed form exists only at zero temperature
            let re_c = |t: f64| closed_form_subohmic(&p, Temperature::ZERO, t).map_or(f64::NAN, |c| c.re);
            let re_c: Option<&dyn Fn(f64) -> f64> = (cfg.spectrum.temperature == 0.0).then_some(&re_c);
            let r = shiba_check(&result, &pred, (a.shiba_window[0], a.shiba_window[1]), re_c)?;
            report.insert("exponent".into(), r.exponent.into());
            report.insert("exponent_target".into(), r.exponent_target.into());
            report.insert("exponent_deviation".into(), r.exponent_deviation.into());
            report.insert("amplitude_ratio".into(), r.amplitude_ratio.into());
            report.insert("amplitude_deviation".into(), r.amplitude_deviation.into());
            if let Some(c) = r.correlation_ratio {
                report.insert("correlation_ratio".into(), c.into());
            }
            report.insert("chi_bar".into(), chi_bar.into());
            report.insert("samples".into(), (r.samples as i64).into());
            println!(
                "exponent {:.4} (target {:.4}), amplitude ratio {:.4}",
                r.exponent, r.exponent_target, r.amplitude_ratio
            );
        }
    }
    let body = toml::to_string(&report)?;
    manifest.artifact(out, "report.toml", |w| Ok(w.write_all(body.as_bytes())?))?;
    for (k, v) in report {
        manifest.results.insert(k, v);
    }
    manifest.write(out, started)
}

/// `⟨σ_z(t)σ_z(0)⟩` in the relaxed state, on `[0, t_end]`.
fn sigma_z_correlation(
    cfg: &Config,
    dec: &ExponentialDecomposition,
    t_end: f64,
    spacing: f64,
) -> anyhow::Result<CorrelationResult> {
    let sys = cfg.system.spec()?;
    let space = build_space_with_budget(dec.len(), &cfg.truncation.spec()?, cfg.truncation.budget()?)?;
    let relax = RelaxSpec::new(cfg.analysis.steady_tol, cfg.analysis.steady_t_max, cfg.propagation.dt)?;
    let initial = AdoVector::factorized(&space, bare_ground_state(&sys))?;
    let steady = relax_to_steady_state(&space, &sys, dec, &initial, &relax)?;
    let n = (t_end / spacing).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).collect();
    let step = StepSpec {
        integrator: cfg.propagation.integrator,
        blowup_bound: cfg.propagation.blowup_bound,
        ..StepSpec::new(cfg.propagation.dt)?
    };
    Ok(two_time_correlation(&space, &sys, dec, &steady.state, &freepole::hierarchy::Mat2::sigma_z(), &times, &step)?)
}

fn cmd_verify(suite: &str) -> anyhow::Result<()> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse().map_err(|e: Error| Exit(1, e.to_string()))?]
    };
    let mut failed = 0;
    for s in suites {
        for check in run_suite(s) {
            println!("[{s}] {check}");
            failed += usize::from(!check.passed);
        }
    }
    if failed > 0 {
        return Err(Exit(1, format!("{failed} check(s) failed")).into());
    }
    Ok(())
}

fn cmd_scan(config: &Path, out: &Path) -> anyhow::Result<()> {
    let started = Instant::now();
    let (cfg, base) = load_config(config)?;
    let model = cfg.spectrum.model(&base)?;
    let domain = cfg.domain.build()?;
    let samples = domain.sample(&model, cfg.spectrum.temperature()?)?;
    let mut deltas = cfg.fit.scan_deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let rows = scan_k_vs_delta(&domain.grid, &samples, &deltas, &cfg.fit.config()?)?;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("scan", cfg.clone());
    manifest.input(config)?;
    let comments = params_comments(&cfg);
    manifest.artifact(out, "scan.csv", |w| {
        for c in &comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "delta,abs_log10_delta,modes")?;
        for (d, k) in &rows {
            writeln!(w, "{},{},{k}", io::fmt(*d), io::fmt(d.log10().abs()))?;
        }
        Ok(())
    })?;
    for (d, k) in &rows {
        println!("delta = {d:.0e}: K = {k}");
    }
    if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|(d, _)| d.log10().abs()).collect();
        let y: Vec<f64> = rows.iter().map(|(_, k)| *k as f64).collect();
        let (slope, r) = linear_fit(&x, &y);
        manifest.result("slope", slope);
        manifest.result("correlation", r);
        println!("slope dK/d|log10 delta| = {slope:.3}, correlation {r:.4}");
    }
    manifest.write(out, started)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit { config, out, delta } => cmd_fit(&config, &out, delta),
        Command::Propagate {
            config,
            decomposition,
            out,
            depth,
            dt,
            t_final,
        } => cmd_propagate(&config, &decomposition, &out, depth, dt, t_final),
        Command::Analyze { input, config, out, kind } => cmd_analyze(&input, &config, &out, kind.as_deref()),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::Scan { config, out } => cmd_scan(&config, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
