//! `sheetlaw` command-line front end.
//!
//! Machine output (CSV/JSON) goes to `--out` or stdout, human summaries to
//! stderr. Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sheetlaw::closed_form::{self, TransformId};
use sheetlaw::cumulants::{corollary2_kernel, fubini_check, random_kernel};
use sheetlaw::fields::{derive, project, quad_functional, sample_path, sample_sheet};
use sheetlaw::spectral::{analytic_spectrum, grid_spectrum, tensor_spectrum, DEFAULT_TENSOR_CUTOFF};
use sheetlaw::verify::{run_one, run_suite, Channel, IdentityId, VerdictReport, VerifyConfig};
use sheetlaw::{CenteringKind, CovKernel, Error, ProcessKind, ProjectionKind};

#[derive(Parser, Debug)]
#[command(name = "sheetlaw", version, about = "Identities in law for quadratic functionals of Gaussian sheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a field or path and dump it as CSV.
    Simulate {
        #[arg(long)]
        process: ProcessKind,
        /// Grid resolution (defaults: 32 in 2-D, 512 in 1-D).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Apply a symmetry projection (S1, S2, A1, A2, T1..T4) to a 2-D field.
        #[arg(long)]
        projection: Option<ProjectionKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of a covariance operator as `rank,eigenvalue` CSV.
    Spectrum {
        #[arg(long)]
        process: ProcessKind,
        #[arg(long, default_value = "none")]
        centering: CenteringKind,
        #[arg(long)]
        n: Option<usize>,
        /// Use the closed-form 1-D eigenvalues (tensor products for separable 2-D kernels).
        #[arg(long)]
        analytic: bool,
        /// Number of analytic 1-D eigenvalues / tensor cutoff.
        #[arg(long, default_value_t = DEFAULT_TENSOR_CUTOFF)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form Laplace transforms as `u,value` CSV.
    Laplace {
        /// Process whose quadratic functional is transformed (bridge, b0, kiefer1, kiefer2).
        #[arg(long, conflicts_with = "transform")]
        process: Option<ProcessKind>,
        /// Named transform (prop5-b, prop5-b0, prop5-k, thm6-i, thm6-j, thm6-y).
        #[arg(long)]
        transform: Option<TransformId>,
        /// Comma-separated evaluation points.
        #[arg(long, value_delimiter = ',', required = true)]
        u: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cyclic-trace check of the stochastic Fubini theorem.
    Cumulants {
        /// Kernel 1..4 of the indicator family; omit for a random dense kernel.
        #[arg(long)]
        phi: Option<u8>,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        m_max: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify one identity on one or all of its channels.
    Verify {
        #[arg(long)]
        identity: IdentityId,
        /// spectral, closed_form or monte_carlo; all supported channels if omitted.
        #[arg(long)]
        channel: Option<Channel>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every identity on every supported channel.
    Suite {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 512)]
    n1d: usize,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    u_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

impl From<ConfigArgs> for VerifyConfig {
    fn from(a: ConfigArgs) -> Self {
        VerifyConfig { n: a.n, n1d: a.n1d, samples: a.samples, u_grid: a.u_grid, alpha: a.alpha, seed: a.seed }
    }
}

enum Outcome {
    Ok,
    Failed,
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn default_n(kind: ProcessKind) -> usize {
    if kind.dim() == 1 {
        512
    } else {
        32
    }
}

fn write_reports(out: &Option<PathBuf>, reports: &[VerdictReport]) -> Result<Outcome, Error> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, reports)?;
    writeln!(w)?;
    w.flush()?;
    for r in reports {
        eprintln!(
            "{:<14} {:<12} {:<12?} statistic {:.4e} threshold {:.4e}",
            r.identity.name(),
            r.channel.name(),
            r.status,
            r.statistic,
            r.threshold
        );
    }
    let failed = reports.iter().filter(|r| r.is_failure()).count();
    eprintln!("{} reports, {} failing", reports.len(), failed);
    Ok(if failed == 0 { Outcome::Ok } else { Outcome::Failed })
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Simulate { process, n, seed, projection, out } => {
            let n = n.unwrap_or_else(|| default_n(process));
            let mut w = open_out(&out)?;
            if process.dim() == 1 {
                if projection.is_some() {
                    return Err(Error::InvalidArgument("projections apply to 2-D fields only".into()));
                }
                let p = sample_path(process, n, seed)?;
                p.write_csv(&mut w)?;
                eprintln!(
                    "{process} path n={n} seed={seed}: int x^2 = {:.6e}",
                    p.quad_functional(CenteringKind::None)?
                );
            } else {
                let w0 = sample_sheet(n, seed)?;
                let mut f = if process == ProcessKind::Sheet { w0 } else { derive(&w0, process)? };
                if let Some(p) = projection {
                    f = project(&f, p)?;
                }
                f.write_csv(&mut w)?;
                eprintln!(
                    "{process} field n={n} seed={seed}: int X^2 = {:.6e}",
                    quad_functional(&f, CenteringKind::None)
                );
            }
            w.flush()?;
            Ok(Outcome::Ok)
        }
        Command::Spectrum { process, centering, n, analytic, count, out } => {
            let s = if analytic {
                if centering != CenteringKind::None {
                    return Err(Error::InvalidArgument("analytic spectra are available without centering only".into()));
                }
                match process {
                    ProcessKind::Wiener1D | ProcessKind::Bridge1D => analytic_spectrum(process, count)?,
                    ProcessKind::TiedDownB0 => {
                        let b = analytic_spectrum(ProcessKind::Bridge1D, count)?;
                        tensor_spectrum(&b, &b, count)?
                    }
                    ProcessKind::Kiefer1 | ProcessKind::Kiefer2 => tensor_spectrum(
                        &analytic_spectrum(ProcessKind::Bridge1D, count)?,
                        &analytic_spectrum(ProcessKind::Wiener1D, count)?,
                        count,
                    )?,
                    other => return Err(Error::InvalidArgument(format!("no analytic spectrum for {other}"))),
                }
            } else {
                let k = CovKernel::new(process).centered(centering)?;
                grid_spectrum(&k, n.unwrap_or_else(|| default_n(process)))?
            };
            let mut w = open_out(&out)?;
            s.write_csv(&mut w, None)?;
            w.flush()?;
            eprintln!("{}: {} eigenvalues, trace {:.6e}", s.source.describe(), s.len(), s.trace());
            Ok(Outcome::Ok)
        }
        Command::Laplace { process, transform, u, out } => {
            let id = match (process, transform) {
                (_, Some(t)) => t,
                (Some(ProcessKind::BridgeB), None) => TransformId::Prop5B,
                (Some(ProcessKind::TiedDownB0), None) => TransformId::Prop5B0,
                (Some(ProcessKind::Kiefer1 | ProcessKind::Kiefer2), None) => TransformId::Prop5K,
                (Some(other), None) => {
                    return Err(Error::InvalidArgument(format!("no closed-form transform for {other}")))
                }
                (None, None) => return Err(Error::InvalidArgument("give --process or --transform".into())),
            };
            let mut w = open_out(&out)?;
            closed_form::write_curve(&mut w, id, &u)?;
            w.flush()?;
            Ok(Outcome::Ok)
        }
        Command::Cumulants { phi, n, m_max, seed, out } => {
            let k = match phi {
                Some(which) => corollary2_kernel(which, n)?,
                None => random_kernel(n, seed)?,
            };
            let report = fubini_check(&k, m_max)?;
            let mut w = open_out(&out)?;
            let mut value = serde_json::to_value(&report)?;
            if let Some(obj) = value.as_object_mut() {
                obj.insert("seed".into(), seed.into());
                obj.insert("version".into(), sheetlaw::VERSION.into());
            }
            serde_json::to_writer_pretty(&mut w, &value)?;
            writeln!(w)?;
            w.flush()?;
            eprintln!("fubini n={n} m_max={m_max}: max relative gap {:.3e}, pass {}", report.max_rel_gap, report.pass);
            Ok(if report.pass { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Verify { identity, channel, cfg, out } => {
            let cfg: VerifyConfig = cfg.into();
            cfg.validate()?;
            let channels = match channel {
                Some(c) => {
                    if !identity.channels().contains(&c) {
                        return Err(Error::UnsupportedChannel {
                            identity: identity.to_string(),
                            channel: c.to_string(),
                        });
                    }
                    vec![c]
                }
                None => identity.channels(),
            };
            let reports: Vec<VerdictReport> = channels.into_iter().map(|c| run_one(identity, c, &cfg)).collect();
            write_reports(&out, &reports)
        }
        Command::Suite { cfg, out } => {
            let cfg: VerifyConfig = cfg.into();
            cfg.validate()?;
            let reports = run_suite(&cfg);
            write_reports(&out, &reports)
        }
    }
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::InvalidArgument(_) | Error::UnsupportedChannel { .. } | Error::Parse(_))
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("SHEETLAW_THREADS") {
        let threads: usize =
            v.trim().parse().map_err(|_| Error::InvalidArgument(format!("SHEETLAW_THREADS='{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                eprintln!("run `sheetlaw --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
