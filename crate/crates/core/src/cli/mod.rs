//! The `ruinfund` command line: runs the tasks of a scenario file and writes
//! CSV artifacts plus a summary on stdout.

pub mod config;
pub mod verify;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::closedform::{self, ClosedFormError, ClosedFormSolution};
use crate::funds::{
    compute_f, compute_ftilde, compute_g, compute_ghat, compute_gtilde, compute_h, FundError,
};
use crate::hjb::{self, GridSpec, HjbError, RuinSolution};
use crate::linalg::sum;
use crate::market::{sigma_bundle, MarketError, MarketModel};
use crate::mcsim::{self, RatioSource, SimConfig, SimError, SimResult, Strategy, TwoFundStrategy};

pub use config::{parse_config, ConfigError, ScenarioConfig, StrategyKind, Task};
pub use verify::{verify_decomposition, VerifyReport, VERIFY_TOL};

#[derive(Debug, Parser)]
#[command(
    name = "ruinfund",
    version,
    about = "Ruin-minimizing two-fund portfolios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task listed in a scenario file.
    Run {
        config: PathBuf,
        /// Overrides `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `scenario.out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `simulate.paths`.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides `hjb.nodes`.
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Market(#[from] MarketError),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    ClosedForm(#[from] ClosedFormError),
    #[error("{0}")]
    Hjb(#[from] HjbError),
    #[error("{0}")]
    Fund(#[from] FundError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("max decomposition residual {residual:e} exceeds {tol:e}")]
    Verification { residual: f64, tol: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Machine-readable code printed before the message.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Market(_) => "InvalidModel",
            CliError::Precondition(_) => "PreconditionFailed",
            CliError::ClosedForm(ClosedFormError::UnsupportedModel(_)) => "UnsupportedModel",
            CliError::ClosedForm(_) => "ClosedFormError",
            CliError::Hjb(HjbError::UnsupportedModel(_)) => "UnsupportedModel",
            CliError::Hjb(HjbError::NonConvergence { .. }) => "NonConvergence",
            CliError::Hjb(HjbError::InstabilityDetected { .. }) => "InstabilityDetected",
            CliError::Hjb(_) => "HjbError",
            CliError::Fund(_) => "FundError",
            CliError::Sim(_) => "SimulationError",
            CliError::Verification { .. } => "VerificationFailed",
            CliError::Io { .. } | CliError::Csv(_) => "IoError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Hjb(HjbError::NonConvergence { .. })
            | CliError::Hjb(HjbError::InstabilityDetected { .. }) => 3,
            CliError::Verification { .. } => 4,
            _ => 2,
        }
    }
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error {}: {}", e.code(), e);
            e.exit_code()
        }
    }
}

pub fn execute<W: Write>(command: &Command, out: &mut W) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            seed,
            out: out_dir,
            paths,
            grid,
        } => {
            let text = fs::read_to_string(config).map_err(|source| CliError::Io {
                path: config.clone(),
                source,
            })?;
            let mut cfg = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(o) = out_dir {
                cfg.out = o.clone();
            }
            if let Some(p) = paths {
                cfg.sim.paths = *p;
            }
            if let Some(g) = grid {
                cfg.hjb.nodes = *g;
            }
            run_scenario(config, &cfg, out).map(|_| ())
        }
    }
}

/// Values collected while running a scenario.
#[derive(Debug, Clone, Default)]
pub struct ScenarioOutcome {
    pub oracle: Option<f64>,
    pub hjb_value: Option<f64>,
    pub simulations: Vec<(String, SimResult)>,
    pub verify: Option<VerifyReport>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path, source })
}

/// Checks every requested task's preconditions before running anything.
fn check_preconditions(model: &MarketModel<f64>, cfg: &ScenarioConfig) -> Result<(), CliError> {
    if !(cfg.w0 >= 0.0) || !(cfg.c0 > 0.0) {
        return Err(CliError::Precondition(format!(
            "need w0 >= 0 and c0 > 0, got w0 = {}, c0 = {}",
            cfg.w0, cfg.c0
        )));
    }
    if cfg.tasks.contains(&Task::ClosedForm) {
        closedform::build(model, cfg.c0)?;
    }
    let needs_hjb = cfg.tasks.contains(&Task::Hjb)
        || (cfg.tasks.contains(&Task::Simulate)
            && cfg.sim.strategies.contains(&StrategyKind::HjbPolicy));
    if needs_hjb && !model.is_time_homogeneous() {
        return Err(HjbError::UnsupportedModel(
            "the HJB solver needs time-homogeneous parameters".into(),
        )
        .into());
    }
    if cfg.tasks.contains(&Task::Simulate) {
        let sim = sim_config(cfg);
        sim.validate()?;
        if cfg
            .sim
            .strategies
            .contains(&StrategyKind::ClosedFormFeedback)
        {
            closedform::build(model, cfg.c0)?;
        }
        if model.params().lambda.values().iter().all(|&l| l == 0.0) {
            return Err(CliError::Precondition(
                "simulation needs a positive hazard rate".into(),
            ));
        }
    }
    Ok(())
}

fn sim_config(cfg: &ScenarioConfig) -> SimConfig<f64> {
    SimConfig {
        n_paths: cfg.sim.paths,
        dt: cfg.sim.dt,
        horizon: cfg.sim.horizon,
        seed: cfg.seed,
        antithetic: cfg.sim.antithetic,
    }
}

fn solve_hjb(
    model: &MarketModel<f64>,
    cfg: &ScenarioConfig,
) -> Result<RuinSolution<f64>, CliError> {
    let mode = model.mode();
    let grid = match cfg.hjb.z_max {
        Some(z) => GridSpec::new(z, cfg.hjb.nodes)?,
        None => GridSpec::for_model(model, mode, cfg.hjb.nodes, cfg.hjb.kappa)?,
    };
    Ok(hjb::solve(
        model,
        mode,
        grid,
        cfg.hjb.tol,
        cfg.hjb.max_iter,
    )?)
}

/// Ruin probability at (w, c) from the grid solution; beyond the grid with a
/// riskless asset and b = 0 the safe level has been reached.
fn hjb_value_at(sol: &RuinSolution<f64>, z: f64) -> f64 {
    sol.phi_at(z.min(sol.grid.z_max())).unwrap_or(0.0)
}

pub fn run_scenario<W: Write>(
    config_path: &Path,
    cfg: &ScenarioConfig,
    out: &mut W,
) -> Result<ScenarioOutcome, CliError> {
    let model = cfg.params.clone().validate()?;
    check_preconditions(&model, cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let write_line = |out: &mut W, line: String| -> Result<(), CliError> {
        writeln!(out, "{line}").map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
    };

    write_line(out, format!("config  {}", config_path.display()))?;
    write_line(out, format!("seed    {}", cfg.seed))?;
    write_line(out, format!("mode    {}", model.mode().name()))?;

    let mut outcome = ScenarioOutcome::default();
    let z0 = cfg.w0 / cfg.c0;
    let cf = closedform::build(&model, cfg.c0).ok();
    if let Some(sol) = &cf {
        outcome.oracle = Some(sol.psi(cfg.w0)?);
    }
    let mut hjb_sol = None;

    for task in &cfg.tasks {
        match task {
            Task::Funds => {
                let rows = write_funds(&model, &cfg.out)?;
                write_line(out, format!("funds   {rows} rows -> funds.csv"))?;
            }
            Task::ClosedForm => {
                let sol = cf.as_ref().expect("checked before dispatch");
                write_line(
                    out,
                    format!(
                        "closed_form  p = {:.9}  safe_level = {}  psi(w0) = {:.9}",
                        sol.p,
                        sol.safe_level,
                        outcome.oracle.unwrap_or(f64::NAN)
                    ),
                )?;
            }
            Task::Hjb => {
                let sol = solve_hjb(&model, cfg)?;
                sol.write_csv(&model, create(&cfg.out, "phi.csv")?)
                    .map_err(|e| CliError::Precondition(format!("writing phi.csv: {e}")))?;
                let v = hjb_value_at(&sol, z0);
                outcome.hjb_value = Some(v);
                let mut line = format!(
                    "hjb     nodes = {}  z_max = {}  iterations = {}  phi(z0) = {:.9}",
                    sol.grid.nodes(),
                    sol.grid.z_max(),
                    sol.iterations,
                    v
                );
                if let Some(o) = outcome.oracle {
                    line.push_str(&format!("  |phi - psi| = {:.3e}", (v - o).abs()));
                }
                write_line(out, line)?;
                hjb_sol = Some(sol);
            }
            Task::Simulate => {
                let sim = sim_config(cfg);
                let oracle = outcome.oracle.or(outcome.hjb_value);
                let mut w = csv::Writer::from_writer(create(&cfg.out, "sim.csv")?);
                w.write_record([
                    "strategy",
                    "w0",
                    "c0",
                    "paths",
                    "dt",
                    "horizon",
                    "seed",
                    "estimate",
                    "std_error",
                    "ruined",
                    "died_solvent",
                    "censored",
                    "oracle",
                    "z_score",
                ])?;
                for kind in &cfg.sim.strategies {
                    let strategy = build_strategy(*kind, &model, cfg, cf.as_ref(), &mut hjb_sol)?;
                    let res = if cfg.sim.dump_paths {
                        let (res, recs) =
                            mcsim::run_detailed(&model, &strategy, cfg.w0, cfg.c0, &sim)?;
                        let name = format!("paths_{}.csv", strategy.kind());
                        mcsim::write_path_records(&recs, create(&cfg.out, &name)?)?;
                        res
                    } else {
                        mcsim::run(&model, &strategy, cfg.w0, cfg.c0, &sim)?
                    };
                    let z = oracle.map(|o| mcsim::z_score(res.ruin_estimate, res.std_error, o));
                    w.write_record([
                        strategy.kind().to_string(),
                        cfg.w0.to_string(),
                        cfg.c0.to_string(),
                        res.paths.to_string(),
                        cfg.sim.dt.to_string(),
                        cfg.sim.horizon.to_string(),
                        cfg.seed.to_string(),
                        res.ruin_estimate.to_string(),
                        res.std_error.to_string(),
                        res.ruined.to_string(),
                        res.died_solvent.to_string(),
                        res.censored.to_string(),
                        oracle.map_or(String::new(), |o| o.to_string()),
                        z.map_or(String::new(), |z| z.to_string()),
                    ])?;
                    let mut line = format!(
                        "simulate {}  estimate = {:.6}  se = {:.6}  paths = {}",
                        strategy.kind(),
                        res.ruin_estimate,
                        res.std_error,
                        res.paths
                    );
                    if let Some(z) = z {
                        line.push_str(&format!("  z = {z:+.2}"));
                    }
                    write_line(out, line)?;
                    outcome.simulations.push((strategy.kind().to_string(), res));
                }
                w.flush().map_err(|source| CliError::Io {
                    path: cfg.out.join("sim.csv"),
                    source,
                })?;
            }
            Task::VerifyDecomposition => {
                let report = verify_decomposition(&model, cfg.verify_samples, cfg.seed)?;
                let mut w = csv::Writer::from_writer(create(&cfg.out, "verify.csv")?);
                w.write_record(["mode", "samples", "max_residual", "tolerance", "pass"])?;
                for m in &report.modes {
                    w.write_record([
                        m.mode.name().to_string(),
                        m.samples.to_string(),
                        format!("{:e}", m.max_residual),
                        format!("{VERIFY_TOL:e}"),
                        (m.max_residual < VERIFY_TOL).to_string(),
                    ])?;
                    write_line(
                        out,
                        format!(
                            "verify  {}  samples = {}  max_residual = {:.3e}",
                            m.mode.name(),
                            m.samples,
                            m.max_residual
                        ),
                    )?;
                }
                w.flush().map_err(|source| CliError::Io {
                    path: cfg.out.join("verify.csv"),
                    source,
                })?;
                let worst = report.max_residual();
                outcome.verify = Some(report);
                if !(worst < VERIFY_TOL) {
                    write_summary(out, &outcome)?;
                    return Err(CliError::Verification {
                        residual: worst,
                        tol: VERIFY_TOL,
                    });
                }
            }
        }
    }
    write_summary(out, &outcome)?;
    Ok(outcome)
}

fn write_summary<W: Write>(out: &mut W, o: &ScenarioOutcome) -> Result<(), CliError> {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    let mut line = format!(
        "summary oracle = {}  hjb = {}",
        fmt(o.oracle),
        fmt(o.hjb_value)
    );
    if let (Some(a), Some(b)) = (o.oracle, o.hjb_value) {
        line.push_str(&format!("  hjb_within_1e-3 = {}", (a - b).abs() < 1e-3));
    }
    if let Some((name, res)) = o.simulations.first() {
        line.push_str(&format!(
            "  mc[{name}] = {:.6} +/- {:.6}",
            res.ruin_estimate, res.std_error
        ));
        if let Some(reference) = o.oracle.or(o.hjb_value) {
            let z = mcsim::z_score(res.ruin_estimate, res.std_error, reference);
            line.push_str(&format!("  mc_within_3se = {}", z.abs() <= mcsim::FLAG_Z));
        }
    }
    writeln!(out, "{line}").map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn build_strategy(
    kind: StrategyKind,
    model: &MarketModel<f64>,
    cfg: &ScenarioConfig,
    cf: Option<&ClosedFormSolution<f64>>,
    hjb_sol: &mut Option<RuinSolution<f64>>,
) -> Result<Strategy<f64>, CliError> {
    let hjb_solution =
        |hjb_sol: &mut Option<RuinSolution<f64>>| -> Result<RuinSolution<f64>, CliError> {
            if hjb_sol.is_none() {
                *hjb_sol = Some(solve_hjb(model, cfg)?);
            }
            Ok(hjb_sol.clone().expect("just solved"))
        };
    Ok(match kind {
        StrategyKind::Auto => match cf {
            Some(sol) => Strategy::ClosedFormFeedback(sol.clone()),
            None => Strategy::HjbPolicy(hjb_solution(hjb_sol)?),
        },
        StrategyKind::ClosedFormFeedback => {
            Strategy::ClosedFormFeedback(cf.cloned().ok_or_else(|| {
                CliError::Precondition("closed form unavailable for this model".into())
            })?)
        }
        StrategyKind::HjbPolicy => Strategy::HjbPolicy(hjb_solution(hjb_sol)?),
        StrategyKind::FixedMix => {
            Strategy::FixedMix(cfg.sim.mix.clone().expect("checked by parser"))
        }
        StrategyKind::TwoFund => {
            let source = match cf {
                Some(sol) => RatioSource::ClosedForm(sol.clone()),
                None => RatioSource::Hjb(hjb_solution(hjb_sol)?),
            };
            Strategy::TwoFund(TwoFundStrategy::new(model, model.mode(), source)?)
        }
    })
}

/// funds.csv: `t,name,riskless,asset_1..asset_n,sum` for every fund vector
/// at every parameter change. Returns the number of rows.
fn write_funds(model: &MarketModel<f64>, dir: &Path) -> Result<usize, CliError> {
    let n = model.n();
    let mut w = csv::Writer::from_writer(create(dir, "funds.csv")?);
    let mut header = vec!["t".to_string(), "name".into(), "riskless".into()];
    header.extend((1..=n).map(|i| format!("asset_{i}")));
    header.push("sum".into());
    w.write_record(&header)?;
    let mut rows = 0;
    let mut push = |t: f64, name: &str, riskless: f64, risky: &[f64]| -> Result<(), CliError> {
        let mut rec = vec![t.to_string(), name.to_string(), riskless.to_string()];
        rec.extend(risky.iter().map(|x| x.to_string()));
        rec.push((riskless + sum(risky)).to_string());
        w.write_record(&rec)?;
        rows += 1;
        Ok(())
    };
    for t in model.evaluation_times() {
        let bundle = sigma_bundle(model, t);
        let mu = model.mu(t);
        push(t, "g", 0.0, compute_g(&bundle).weights())?;
        push(t, "f", 0.0, compute_f(&bundle, mu).weights())?;
        push(t, "h", 0.0, compute_h(&bundle).weights())?;
        if let Some(r) = model.r() {
            let b = model.b(t);
            let gt = compute_gtilde(&bundle, b);
            push(t, "g_tilde", gt.riskless_weight(), gt.risky_weights())?;
            let ft = compute_ftilde(&bundle, mu, r, b);
            push(t, "f_tilde", ft.weights()[0], &ft.weights()[1..])?;
            // ĝ does not exist when eᵀΣ⁻¹(μ − re) vanishes; the row is omitted.
            if let Ok(gh) = compute_ghat(&bundle, mu, r) {
                push(t, "g_hat", 0.0, gh.weights())?;
            }
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: dir.join("funds.csv"),
        source,
    })?;
    Ok(rows)
}
