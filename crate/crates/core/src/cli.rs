//! Experiment runner behind the `coxnet` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analytic::{
    thinning_ratio, throughput_from, Analytic, AnalyticSettings, KernelForm, SpectralSet,
    ThroughputReport,
};
use crate::config::{expand_range, load_config, parse_range, NetworkConfig, RunSettings};
use crate::error::{Error, Result};
use crate::sim::{
    coverage_csv, default_window_radius, estimate_loads, estimate_relay_coverage,
    estimate_user_coverage, McSettings, DEFAULT_ASSOC_REPS, DEFAULT_COVERAGE_REPS,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_TAU_DB: (f64, f64, f64) = (-20.0, 30.0, 2.0);
const VALIDATE_TAU_DB: [f64; 3] = [-10.0, 0.0, 10.0];

#[derive(Parser, Debug)]
#[command(name = "coxnet", version, about = "RSU and relay coverage on a Poisson line process")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Association probabilities, optionally swept over a parameter.
    Assoc,
    /// Analytic user coverage over the threshold grid.
    CoverageUser,
    /// Analytic relay backhaul coverage over the threshold grid.
    CoverageRelay,
    /// Throughput at one point, or along `--sweep`.
    Throughput,
    /// Throughput along `--sweep` (required) with the maximizing row marked.
    Sweep,
    /// Monte Carlo association, coverage and load statistics.
    Simulate,
    /// Analytic and Monte Carlo engines side by side; fails on disagreement.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Assoc => "assoc",
            Command::CoverageUser => "coverage-user",
            Command::CoverageRelay => "coverage-relay",
            Command::Throughput => "throughput",
            Command::Sweep => "sweep",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernels {
    #[default]
    Derived,
    AsPrinted,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Opts {
    /// Flat `key = value` model file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true)]
    pub window_km: Option<f64>,
    /// Threshold grid in dB, `A:B:STEP`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_range)]
    pub tau_db: Option<(f64, f64, f64)>,
    /// `KEY=A:B:STEP` over a model key.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_sweep)]
    pub sweep: Option<(String, (f64, f64, f64))>,
    /// Outer relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Kernels::Derived)]
    pub kernels: Kernels,
}

fn parse_sweep(s: &str) -> std::result::Result<(String, (f64, f64, f64)), String> {
    let (k, r) = s.split_once('=').ok_or_else(|| format!("sweep `{s}` must look like KEY=A:B:STEP"))?;
    Ok((k.trim().to_string(), parse_range(r)?))
}

/// Everything a run needs, resolved from the config file and flags.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub command: Command,
    pub cfg: NetworkConfig,
    pub tau_grid_db: Vec<f64>,
    pub sweep: Option<(String, Vec<f64>)>,
    pub mc: McSettings,
    pub analytic: AnalyticSettings,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let path = cli.opts.config.as_ref().ok_or_else(|| Error::MissingKey("--config".into()))?;
        let (cfg, run) = load_config(path)?;
        Self::resolve(cli.command, cfg, run, &cli.opts)
    }

    pub fn resolve(command: Command, cfg: NetworkConfig, run: RunSettings, o: &Opts) -> Result<Self> {
        let tau = o.tau_db.or(run.tau_db);
        let tau_grid_db = match (tau, command) {
            (Some(r), _) => expand_range(r),
            (None, Command::Validate) => VALIDATE_TAU_DB.to_vec(),
            (None, _) => expand_range(DEFAULT_TAU_DB),
        };
        let sweep = match &o.sweep {
            Some((k, r)) => {
                cfg.clone().set_by_key(k, r.0)?;
                Some((k.clone(), expand_range(*r)))
            }
            None if command == Command::Sweep => return Err(Error::MissingKey("--sweep".into())),
            None => None,
        };
        let default_reps = match command {
            Command::Assoc => DEFAULT_ASSOC_REPS,
            _ => DEFAULT_COVERAGE_REPS,
        };
        let mc = McSettings::new(
            o.reps.or(run.reps).unwrap_or(default_reps),
            o.window_km.or(run.window_km).unwrap_or_else(|| default_window_radius(&cfg)),
            o.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        );
        let mut analytic = match o.tol.or(run.rel_tol) {
            Some(t) if !(t > 0.0 && t < 1.0) => return Err(Error::invalid("tol", format!("{t} outside (0, 1)"))),
            Some(t) => AnalyticSettings::with_tol(t),
            None => AnalyticSettings::default(),
        };
        analytic.form = match o.kernels {
            Kernels::Derived => KernelForm::Derived,
            Kernels::AsPrinted => KernelForm::AsPrinted,
        };
        Ok(ExperimentSpec {
            command,
            cfg,
            tau_grid_db,
            sweep,
            mc,
            analytic,
            out_dir: o.out.clone(),
        })
    }

    fn header(&self) -> String {
        let mut s = format!("# coxnet {}\n# command = {}\n", env!("CARGO_PKG_VERSION"), self.command.name());
        for line in self.cfg.to_config_string().lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "# seed = {}", self.mc.seed);
        let _ = writeln!(s, "# reps = {}", self.mc.reps);
        let _ = writeln!(s, "# window_km = {}", self.mc.window_radius);
        let _ = writeln!(s, "# rel_tol = {:e}", self.analytic.outer.rel_tol);
        let _ = writeln!(s, "# kernels = {:?}", self.analytic.form);
        if let Some((k, v)) = &self.sweep {
            let _ = writeln!(s, "# sweep = {k} ({} points)", v.len());
        }
        s
    }

    fn points(&self) -> Result<Vec<(f64, NetworkConfig)>> {
        match &self.sweep {
            None => Ok(vec![(f64::NAN, self.cfg.clone())]),
            Some((k, values)) => values
                .iter()
                .map(|&v| {
                    let mut c = self.cfg.clone();
                    c.set_by_key(k, v)?;
                    c.validate()?;
                    Ok((v, c))
                })
                .collect(),
        }
    }

    fn sweep_key(&self) -> &str {
        self.sweep.as_ref().map_or("mu_r_per_km", |s| s.0.as_str())
    }
}

/// Files produced by a run plus the validation verdict.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

struct Outputs {
    header: String,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), format!("{}{}", self.header, body)));
    }

    /// Writes every file to a temporary name, then renames them all.
    /// Anything written is removed if a step fails.
    fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut done: Vec<PathBuf> = Vec::new();
        let mut result = Ok(());
        let mut staged = Vec::new();
        for (name, body) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = std::fs::write(&tmp, body) {
                result = Err(e);
                break;
            }
            staged.push((tmp, dir.join(name)));
        }
        if result.is_ok() {
            for (tmp, fin) in &staged {
                if let Err(e) = std::fs::rename(tmp, fin) {
                    result = Err(e);
                    break;
                }
                done.push(fin.clone());
            }
        }
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = std::fs::remove_file(tmp);
            }
            for f in &done {
                let _ = std::fs::remove_file(f);
            }
            return Err(e.into());
        }
        Ok(done)
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.cfg.validate()?;
    let mut out = Outputs {
        header: spec.header(),
        files: Vec::new(),
    };
    let mut passed = true;
    match spec.command {
        Command::Assoc => out.add("assoc.csv", assoc(spec)?),
        Command::CoverageUser => coverage_user(spec, &mut out)?,
        Command::CoverageRelay => out.add("coverage_relay.csv", coverage_relay(spec)?),
        Command::Throughput | Command::Sweep => out.add(
            if spec.command == Command::Sweep { "sweep.csv" } else { "throughput.csv" },
            throughput(spec)?,
        ),
        Command::Simulate => simulate(spec, &mut out)?,
        Command::Validate => {
            let (csv, ok) = validate(spec)?;
            passed = ok;
            out.add("validate.csv", csv);
        }
    }
    Ok(RunOutcome {
        files: out.commit(&spec.out_dir)?,
        passed,
    })
}

fn assoc(spec: &ExperimentSpec) -> Result<String> {
    let key = spec.sweep_key();
    let rows: Vec<Result<(f64, f64)>> = spec
        .points()?
        .into_par_iter()
        .map(|(v, c)| {
            let v = if v.is_nan() { c.mu_r } else { v };
            Ok((v, Analytic::new(&c, spec.analytic)?.assoc_prob_rsu()?))
        })
        .collect();
    let mut s = format!("{key},p_as,p_ar\n");
    for r in rows {
        let (v, p) = r?;
        let _ = writeln!(s, "{v},{p:.8},{:.8}", 1.0 - p);
    }
    Ok(s)
}

fn check_grid(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    if spec.tau_grid_db.is_empty() {
        return Err(Error::invalid("tau_db", "empty grid"));
    }
    if spec.tau_grid_db.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("tau_db", "grid must be sorted"));
    }
    Ok(spec.tau_grid_db.iter().map(|&d| 10f64.powf(d / 10.0)).collect())
}

fn coverage_user(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    let taus = check_grid(spec)?;
    let a = Analytic::new(&spec.cfg, spec.analytic)?;
    let (p_as, p_ar) = a.assoc_probs()?;
    let mut total = String::from("tau_db,p_cov,p_e_as,p_ec_as,p_e_ar,p_ec_ar\n");
    let mut given_as = String::from("tau_db,p_cov\n");
    let mut given_ar = String::from("tau_db,p_cov\n");
    for (&db, &t) in spec.tau_grid_db.iter().zip(&taus) {
        let c = a.user_coverage(t)?;
        let _ = writeln!(
            total,
            "{db},{:.8},{:.8},{:.8},{:.8},{:.8}",
            c.total, c.p_e_as, c.p_ec_as, c.p_e_ar, c.p_ec_ar
        );
        if p_as > 1e-12 {
            let _ = writeln!(given_as, "{db},{:.8}", ((c.p_e_as + c.p_ec_as) / p_as).clamp(0.0, 1.0));
        }
        if p_ar > 1e-12 {
            let _ = writeln!(given_ar, "{db},{:.8}", ((c.p_e_ar + c.p_ec_ar) / p_ar).clamp(0.0, 1.0));
        }
    }
    out.add("coverage_user_total.csv", total);
    out.add("coverage_user_given_As.csv", given_as);
    out.add("coverage_user_given_Ar.csv", given_ar);
    Ok(())
}

fn coverage_relay(spec: &ExperimentSpec) -> Result<String> {
    let taus = check_grid(spec)?;
    let a = Analytic::new(&spec.cfg, spec.analytic)?;
    let mut s = String::from("tau_db,p_cov\n");
    for (&db, &t) in spec.tau_grid_db.iter().zip(&taus) {
        let _ = writeln!(s, "{db},{:.8}", a.relay_coverage(t)?);
    }
    Ok(s)
}

/// Throughput rows along the sweep. A bandwidth sweep reuses one set of
/// spectral efficiencies.
pub fn throughput_rows(spec: &ExperimentSpec) -> Result<Vec<(f64, ThroughputReport)>> {
    let points = spec.points()?;
    let bandwidth_only = matches!(spec.sweep_key(), "w_mhz" | "w1_mhz" | "w2_mhz") && spec.sweep.is_some();
    if bandwidth_only {
        let set = Analytic::new(&spec.cfg, spec.analytic)?.spectral_set()?;
        return points.into_iter().map(|(v, c)| Ok((v, throughput_from(&c, &set)?))).collect();
    }
    let sets: Vec<Result<SpectralSet>> = points
        .par_iter()
        .map(|(_, c)| Analytic::new(c, spec.analytic)?.spectral_set())
        .collect();
    points
        .into_iter()
        .zip(sets)
        .map(|((v, c), s)| Ok((v, throughput_from(&c, &s?)?)))
        .collect()
}

/// Index of the largest total throughput; ties go to the first.
pub fn argmax(rows: &[(f64, ThroughputReport)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if best.is_none_or(|b| r.1.t_total > rows[b].1.t_total) {
            best = Some(i);
        }
    }
    best
}

fn throughput(spec: &ExperimentSpec) -> Result<String> {
    let rows = throughput_rows(spec)?;
    let best = argmax(&rows);
    let key = spec.sweep_key();
    let mut s = String::new();
    if let (Some(b), Some(_)) = (best, &spec.sweep) {
        let _ = writeln!(s, "# argmax {key} = {}", rows[b].0);
    }
    let _ = writeln!(
        s,
        "{key},t_total_mbps,t_s,t_r,backhaul_branch,access_branch,limiting,p_as,u_bar_s,u_bar_r,r_bar_s,i_su,i_ru,i_sr,is_max"
    );
    for (i, (v, t)) in rows.iter().enumerate() {
        let v = if v.is_nan() { spec.cfg.mu_r } else { *v };
        let _ = writeln!(
            s,
            "{v},{:.8},{:.8},{:.8},{:.8},{:.8},{:?},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{}",
            t.t_total,
            t.t_s,
            t.t_r,
            t.backhaul_branch,
            t.access_branch,
            t.limiting,
            t.p_as,
            t.u_bar_s,
            t.u_bar_r,
            t.r_bar_s,
            t.i_su,
            t.i_ru,
            t.i_sr,
            Some(i) == best
        );
    }
    Ok(s)
}

fn stat_row(s: &mut String, name: &str, value: f64, ci: f64) {
    let _ = writeln!(s, "{name},{value:.8},{ci:.8}");
}

fn simulate(spec: &ExperimentSpec, out: &mut Outputs) -> Result<()> {
    check_grid(spec)?;
    let cfg = &spec.cfg;
    let u = estimate_user_coverage(cfg, &spec.tau_grid_db, &spec.mc)?;
    let r = estimate_relay_coverage(cfg, &spec.tau_grid_db, &McSettings { seed: spec.mc.seed ^ 0x5EED, ..spec.mc })?;
    out.add("sim_coverage.csv", coverage_csv(&[&u.total, &u.given_as, &u.given_ar, &r.curve]));

    let a = &u.association;
    let mut s = String::from("stat_name,value,ci\n");
    stat_row(&mut s, "n", a.n as f64, 0.0);
    stat_row(&mut s, "p_as", a.p_as, a.ci_halfwidth);
    stat_row(&mut s, "p_ar", a.p_ar, a.ci_halfwidth);
    for (name, k) in [("p_as_e", a.n_as_e), ("p_as_ec", a.n_as_ec), ("p_ar_e", a.n_ar_e), ("p_ar_ec", a.n_ar_ec)] {
        let (_, h) = crate::sim::wilson(k, a.n);
        stat_row(&mut s, name, k as f64 / a.n as f64, h);
    }
    stat_row(&mut s, "rate_as", u.rate_as.mean, u.rate_as.ci_halfwidth);
    stat_row(&mut s, "rate_ar", u.rate_ar.mean, u.rate_ar.ci_halfwidth);
    stat_row(&mut s, "rate_sr", r.rate.mean, r.rate.ci_halfwidth);
    if cfg.mu_s > 0.0 {
        let load_reps = (spec.mc.reps / 10).clamp(50, 2000);
        let l = estimate_loads(cfg, &McSettings { reps: load_reps, ..spec.mc }, spec.mc.reps)?;
        stat_row(&mut s, "users_per_rsu_palm", l.palm_users_per_rsu.value, l.palm_users_per_rsu.ci_halfwidth);
        stat_row(&mut s, "users_per_rsu_count", l.count_users_per_rsu.value, l.count_users_per_rsu.ci_halfwidth);
        if let (Some(p), Some(c)) = (l.palm_users_per_relay, l.count_users_per_relay) {
            stat_row(&mut s, "users_per_relay_palm", p.value, p.ci_halfwidth);
            stat_row(&mut s, "users_per_relay_count", c.value, c.ci_halfwidth);
        }
        stat_row(&mut s, "relays_per_rsu_count", l.count_relays_per_rsu.value, l.count_relays_per_rsu.ci_halfwidth);
        stat_row(&mut s, "small_window_warning", f64::from(u8::from(l.small_window_warning)), 0.0);
    }
    out.add("sim_stats.csv", s);
    Ok(())
}

/// One row of the validation report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub analytic: f64,
    pub mc: f64,
    pub ci: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: String, analytic: f64, mc: f64, ci: f64, tolerance: f64) -> Self {
        let pass = (analytic - mc).abs() <= tolerance;
        Check {
            name,
            analytic,
            mc,
            ci,
            tolerance,
            pass,
        }
    }

    /// Reported but never failing.
    fn info(name: String, analytic: f64, mc: f64, ci: f64) -> Self {
        Check {
            name,
            analytic,
            mc,
            ci,
            tolerance: f64::INFINITY,
            pass: true,
        }
    }
}

/// Runs both engines on `spec.cfg` and compares them.
pub fn validation_checks(spec: &ExperimentSpec) -> Result<Vec<Check>> {
    let taus = check_grid(spec)?;
    let cfg = &spec.cfg;
    let a = Analytic::new(cfg, spec.analytic)?;
    let mut checks = Vec::new();

    let u = estimate_user_coverage(cfg, &spec.tau_grid_db, &spec.mc)?;
    let st = &u.association;
    let sigma = st.ci_halfwidth / 1.96;
    let p_as = a.assoc_prob_rsu()?;
    checks.push(Check::new("assoc_p_as".into(), p_as, st.p_as, st.ci_halfwidth, (3.0 * sigma).max(0.01)));
    checks.push(Check::info("assoc_thinning_ratio".into(), thinning_ratio(cfg), st.p_as, st.ci_halfwidth));

    let n = u.total.n as f64;
    for (i, (&db, &t)) in spec.tau_grid_db.iter().zip(&taus).enumerate() {
        let c = a.user_coverage(t)?;
        let tol = 0.02;
        checks.push(Check::new(
            format!("user_total@{db}dB"),
            c.total,
            u.total.probs[i],
            u.total.ci_halfwidths[i],
            tol,
        ));
        let comps = [c.p_e_as, c.p_ec_as, c.p_e_ar, c.p_ec_ar];
        for (k, name) in ["p_e_as", "p_ec_as", "p_e_ar", "p_ec_ar"].iter().enumerate() {
            let m = u.joint_covered[k][i] as f64 / n;
            let (_, h) = crate::sim::wilson(u.joint_covered[k][i], u.total.n);
            checks.push(Check::new(format!("{name}@{db}dB"), comps[k], m, h, tol));
        }
    }

    let r = estimate_relay_coverage(cfg, &spec.tau_grid_db, &McSettings { seed: spec.mc.seed ^ 0x5EED, ..spec.mc })?;
    if cfg.mu_s > 0.0 {
        for (i, (&db, &t)) in spec.tau_grid_db.iter().zip(&taus).enumerate() {
            checks.push(Check::new(
                format!("relay@{db}dB"),
                a.relay_coverage(t)?,
                r.curve.probs[i],
                r.curve.ci_halfwidths[i],
                0.02,
            ));
        }
    }
    if cfg.mu_s > 0.0 && cfg.mu_u > 0.0 {
        let loads = a.mean_loads()?;
        let load_reps = (spec.mc.reps / 10).clamp(50, 2000);
        let l = estimate_loads(cfg, &McSettings { reps: load_reps, ..spec.mc }, spec.mc.reps)?;
        let c = l.count_users_per_rsu;
        checks.push(Check::new(
            "users_per_rsu".into(),
            loads.u_bar_s,
            c.value,
            c.ci_halfwidth,
            (0.05 * loads.u_bar_s).max(c.ci_halfwidth),
        ));
        if let (Some(ur), Some(c)) = (loads.u_bar_r, l.count_users_per_relay) {
            checks.push(Check::new("users_per_relay".into(), ur, c.value, c.ci_halfwidth, (0.05 * ur).max(c.ci_halfwidth)));
        }
        let c = l.count_relays_per_rsu;
        checks.push(Check::new(
            "relays_per_rsu".into(),
            loads.r_bar_s,
            c.value,
            c.ci_halfwidth,
            c.ci_halfwidth.max(1e-12),
        ));
    }
    Ok(checks)
}

fn validate(spec: &ExperimentSpec) -> Result<(String, bool)> {
    let checks = validation_checks(spec)?;
    let mut s = String::from("check,analytic,mc,ci,gap,tolerance,pass\n");
    for c in &checks {
        let _ = writeln!(
            s,
            "{},{:.8},{:.8},{:.8},{:.8},{},{}",
            c.name,
            c.analytic,
            c.mc,
            c.ci,
            c.analytic - c.mc,
            c.tolerance,
            c.pass
        );
    }
    Ok((s, checks.iter().all(|c| c.pass)))
}

/// Exit codes: 0 success, 1 runtime or quadrature failure, 2 bad input,
/// 3 validation disagreement.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let spec = match ExperimentSpec::from_cli(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&spec) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("validation failed");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidParameter { .. } | Error::MissingKey(_) | Error::ConfigSyntax { .. } => 2,
                _ => 1,
            })
        }
    }
}
