//! `fracwave` command-line front end.
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical failure. Errors are
//! reported as a JSON document on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use fracwave::fode::{self, BlowupOptions, ProblemParams, ScalarIVP, SolverOptions};
use fracwave::io::{self, SCHEMA_VERSION};
use fracwave::lab::{self, CaseConfig, CaseData, FieldSpec, Observed, RegimeReport, SweepConfig};
use fracwave::mlf::MittagLeffler;
use fracwave::spectral::{self, MildOptions, MildProblem};
use fracwave::{Error, ExecPolicy};

#[derive(Parser)]
#[command(name = "fracwave", version, about = "Fractional diffusion-wave kernels, solvers and regime experiments")]
struct Cli {
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate E_{α,β}(z).
    Mlf {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        /// Imaginary part of z.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        zi: f64,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
    },
    /// Scalar problem: classify, detect blow-up, fit rates.
    Fode(FodeArgs),
    /// Spectral PDE on (0, π) or (0, π)²: classify, detect blow-up.
    Pde(PdeArgs),
    /// Decay of the solution operators applied to φ₁.
    Probe {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long, default_value_t = 10.0)]
        t_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        t_max: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// CSV of the sampled norms.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Phase-diagram sweep; writes a CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Constants K1, K2 of the a-priori inequality.
    Calibrate {
        #[command(flatten)]
        params: ParamArgs,
        /// Test-function exponent (default: smallest admissible integer plus one).
        #[arg(long)]
        l: Option<f64>,
    },
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

impl ParamArgs {
    fn build(&self) -> fracwave::Result<ProblemParams> {
        ProblemParams::new(self.alpha, self.gamma, self.p, self.a, self.b)
    }
}

#[derive(Args)]
struct FodeArgs {
    /// JSON case config; replaces the parameter flags.
    #[arg(long, conflicts_with_all = ["alpha", "gamma", "p", "w0", "w1", "horizon"])]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, allow_hyphen_values = true)]
    w0: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    w1: f64,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Halve the data until decay is seen when a small-data verdict meets blow-up.
    #[arg(long)]
    bisect: bool,
    /// CSV of the finest trajectory.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct PdeArgs {
    #[arg(long, conflicts_with_all = ["alpha", "gamma", "p", "u0", "horizon"])]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Amplitudes of sin(kx) (diagonal modes in 2D) for u0, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u1: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    bisect: bool,
    /// CSV of the field at the last computed node.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

/// An error plus the exit status it maps to.
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { 2 } else { 1 };
        Failure {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn missing(flag: &str) -> Failure {
    Failure {
        code: 1,
        kind: "usage".into(),
        message: format!("--{flag} is required without --config"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRACWAVE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return report(Failure {
                code: 1,
                kind: "usage".into(),
                message: e.kind().to_string(),
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": f.kind, "message": f.message, "exit_code": f.code },
    });
    eprintln!("{doc}");
    ExitCode::from(f.code)
}

fn policy(threads: Option<usize>) -> Result<ExecPolicy, Failure> {
    match threads {
        Some(0) => Err(Error::Domain("--threads must be at least 1".into()).into()),
        Some(1) => Ok(ExecPolicy::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure {
                code: 1,
                kind: "config".into(),
                message: e.to_string(),
            })?;
            Ok(ExecPolicy::Parallel)
        }
        None => Ok(ExecPolicy::Parallel),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let text = io::to_json(value)?;
    io::with_output(out, |w| {
        writeln!(w, "{text}")?;
        Ok(())
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = policy(cli.threads)?;
    log::info!("execution policy {exec:?}");
    let out = cli.out.as_deref();
    match cli.cmd {
        Command::Mlf { alpha, beta, z, zi, tol } => {
            let ml = MittagLeffler::new(alpha, beta)?;
            let v = ml.eval(Complex64::new(z, zi), tol)?;
            emit_json(
                out,
                &json!({
                    "alpha": alpha,
                    "beta": beta,
                    "z": [z, zi],
                    "value": [v.value.re, v.value.im],
                    "branch": v.branch,
                    "est_error": v.est_error,
                }),
            )
        }
        Command::Fode(args) => fode_cmd(args, out, exec),
        Command::Pde(args) => pde_cmd(args, out, exec),
        Command::Probe {
            alpha,
            gamma,
            dim,
            modes,
            t_min,
            t_max,
            points,
            table,
        } => {
            if !(t_min > 0.0 && t_max > t_min) || points < 2 {
                return Err(Error::Domain("need 0 < t-min < t-max and at least 2 points".into()).into());
            }
            let d = lab::pde_domain(dim, modes)?;
            let u0 = d.field_from_fn(|x| d.first_eigenfunction(x))?;
            let times: Vec<f64> = (0..points)
                .map(|i| t_min * (t_max / t_min).powf(i as f64 / (points - 1) as f64))
                .collect();
            let probe = spectral::operator_decay_probe(&d, &u0, alpha, gamma, &times, exec)?;
            if let Some(path) = &table {
                io::with_output(Some(path), |w| {
                    io::series_csv(
                        w,
                        &probe.times,
                        &["p_norm", "ip_norm", "memory_norm"],
                        &[&probe.p_norms, &probe.ip_norms, &probe.memory_norms],
                    )
                })?;
            }
            emit_json(
                out,
                &json!({
                    "alpha": alpha,
                    "gamma": gamma,
                    "p_fit": probe.p_fit,
                    "ip_fit": probe.ip_fit,
                    "memory_fit": probe.memory_fit,
                    "expected": { "p": -alpha, "ip": -(alpha - 1.0), "memory": -(1.0 - gamma) },
                }),
            )
        }
        Command::Sweep { config } => {
            let cfg: SweepConfig = io::read_config(&config)?;
            let rows = lab::sweep(&cfg, exec);
            log::info!("sweep finished: {} cells", rows.len());
            io::with_output(out, |w| io::phase_table_csv(w, &rows))?;
            Ok(())
        }
        Command::Calibrate { params, l } => {
            let p = params.build()?;
            let l = l.unwrap_or_else(|| lab::default_exponent(&p));
            let c = lab::calibrate_constants(&p, l)?;
            emit_json(out, &c)
        }
    }
}

/// Write the report, then map an unsettled simulation to exit status 2.
fn finish(report: &RegimeReport, out: Option<&Path>) -> Result<(), Failure> {
    emit_json(out, report)?;
    match report.observed.status {
        Observed::Unconfirmed => Err(Failure {
            code: 2,
            kind: "indeterminate".into(),
            message: report.observed.message.clone().unwrap_or_default(),
        }),
        Observed::Failed => Err(Failure {
            code: 2,
            kind: "numerical".into(),
            message: report.observed.message.clone().unwrap_or_default(),
        }),
        _ => Ok(()),
    }
}

fn fode_cmd(args: FodeArgs, out: Option<&Path>, exec: ExecPolicy) -> Result<(), Failure> {
    let cfg = match &args.config {
        Some(path) => io::read_config::<CaseConfig>(path)?,
        None => CaseConfig {
            name: "fode".into(),
            params: ProblemParams::new(
                args.alpha.ok_or_else(|| missing("alpha"))?,
                args.gamma.ok_or_else(|| missing("gamma"))?,
                args.p.ok_or_else(|| missing("p"))?,
                args.a,
                args.b,
            )?,
            data: CaseData::Scalar {
                w0: args.w0.ok_or_else(|| missing("w0"))?,
                w1: args.w1,
            },
            horizon: args.horizon.ok_or_else(|| missing("horizon"))?,
            steps: args.steps,
            convergence_tol: 0.05,
            l: None,
            bisect_small_data: args.bisect,
        },
    };
    let CaseData::Scalar { w0, w1 } = cfg.data else {
        return Err(Error::Config("fode needs scalar data (w0, w1)".into()).into());
    };
    let report = lab::run_case(&cfg, exec)?;
    log::info!("{}: observed {:?}, t* {:?}", cfg.name, report.observed.status, report.t_star);
    if let Some(path) = &args.trajectory {
        let ivp = ScalarIVP::new(cfg.params, w0, w1)?;
        let opts = BlowupOptions {
            base_steps: cfg.steps,
            convergence_tol: cfg.convergence_tol,
            solver: SolverOptions {
                policy: exec,
                ..SolverOptions::default()
            },
        };
        if let Ok(o) = fode::detect_blowup_with(&ivp, cfg.horizon, &opts) {
            io::with_output(Some(path), |w| {
                io::series_csv(w, o.trajectory.mesh.nodes(), &["w"], &[&o.trajectory.values])
            })?;
        }
    }
    finish(&report, out)
}

fn pde_cmd(args: PdeArgs, out: Option<&Path>, exec: ExecPolicy) -> Result<(), Failure> {
    let spec = |v: &Option<Vec<f64>>| match v {
        Some(a) if a.iter().any(|x| *x != 0.0) => FieldSpec::Modes { amplitudes: a.clone() },
        _ => FieldSpec::Zero,
    };
    let cfg = match &args.config {
        Some(path) => io::read_config::<CaseConfig>(path)?,
        None => CaseConfig {
            name: "pde".into(),
            params: ProblemParams::new(
                args.alpha.ok_or_else(|| missing("alpha"))?,
                args.gamma.ok_or_else(|| missing("gamma"))?,
                args.p.ok_or_else(|| missing("p"))?,
                1.0,
                args.b,
            )?,
            data: CaseData::Pde {
                dimension: args.dim,
                modes: args.modes,
                u0: spec(&Some(args.u0.clone().ok_or_else(|| missing("u0"))?)),
                u1: spec(&args.u1),
            },
            horizon: args.horizon.ok_or_else(|| missing("horizon"))?,
            steps: args.steps,
            convergence_tol: 0.05,
            l: None,
            bisect_small_data: args.bisect,
        },
    };
    let CaseData::Pde {
        dimension,
        modes,
        u0,
        u1,
    } = &cfg.data
    else {
        return Err(Error::Config("pde needs field data (u0, u1)".into()).into());
    };
    let report = lab::run_case(&cfg, exec)?;
    if let Some(path) = &args.snapshot {
        let d = lab::pde_domain(*dimension, *modes)?;
        let problem = MildProblem {
            params: cfg.params,
            u0: u0.build(&d)?,
            u1: u1.build(&d)?,
        };
        let opts = MildOptions {
            policy: exec,
            ..MildOptions::default()
        };
        let d = std::sync::Arc::new(d);
        let mesh = std::sync::Arc::new(fracwave::fracops::TimeMesh::uniform(cfg.horizon, cfg.steps)?);
        let sol = spectral::solve_mild(&d, &problem, &mesh, &opts)?;
        let last = sol.times().len() - 1;
        let field = sol.field(last)?;
        io::with_output(Some(path), |w| io::field_csv(w, &d, &field))?;
    }
    finish(&report, out)
}
