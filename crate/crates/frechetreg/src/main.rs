//! Batch CLI: simulate, fit, select, path, cv, stability, bench.
//! Output files (CSV/JSON) are the plotting interface; exit code 0 on
//! success, 1 on validation/input errors, 2 on numerical failure.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use frechetreg::bench::measure;
use frechetreg::datagen::generate_zinbinom_qf;
use frechetreg::error::{Error, Result};
use frechetreg::frechet::fit_frechet;
use frechetreg::friso::{solution_path, solve_friso, DescentConfig};
use frechetreg::io::{format_float, read_matrix_csv, write_matrix_csv};
use frechetreg::resampling::{kfold_cv, stability_selection};
use frechetreg::{validate_quantile_matrix, CovariateMatrix, QuantileMatrix, SupportBounds};

#[derive(Parser)]
#[command(
    name = "frechetreg",
    about = "Fast Fréchet regression and variable selection for distributional responses",
    version
)]
struct Cli {
    /// Worker threads (default: machine parallelism). Outputs are identical
    /// for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit per-iteration diagnostics as JSON lines on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BoundsArgs {
    /// Lower support bound ("-inf" allowed).
    #[arg(long, default_value = "-inf", allow_hyphen_values = true)]
    lower: f64,
    /// Upper support bound ("inf" allowed).
    #[arg(long, default_value = "inf")]
    upper: f64,
}

impl BoundsArgs {
    fn bounds(&self) -> Result<SupportBounds> {
        SupportBounds::new(self.lower, self.upper)
    }
}

#[derive(Args)]
struct DescentArgs {
    /// Convergence tolerance on the tangent-gradient norm.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Momentum coefficient in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    impulse: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl DescentArgs {
    fn config(&self) -> DescentConfig {
        DescentConfig {
            epsilon: self.epsilon,
            impulse: self.impulse,
            max_iter: self.max_iter,
            ..DescentConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate covariate-dependent zinbinom quantile-function responses.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_x: PathBuf,
        #[arg(long)]
        out_y: PathBuf,
    },
    /// Fréchet regression fit: emits the fitted quantile matrix as CSV.
    Fit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-row solver active sets as JSON.
        #[arg(long)]
        dump_active_sets: Option<PathBuf>,
    },
    /// Variable selection at a single τ: emits λ̂ as JSON.
    Select {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        tau: f64,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        descent: DescentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solution path λ̂(τ): emits tidy CSV (variable, tau, lambda).
    Path {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// τ grid: "start:stop:step" or a comma list.
        #[arg(long)]
        tau_grid: String,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        descent: DescentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-fold cross-validation over the τ grid: emits a JSON report.
    Cv {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        tau_grid: String,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        descent: DescentArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional tidy CSV (tau, cv_error).
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Stability selection over half-sample subsampling: emits a JSON report.
    Stability {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        tau_grid: String,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        descent: DescentArgs,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, default_value_t = 0.9)]
        pi_threshold: f64,
        #[arg(long, default_value_t = 0.01)]
        selection_cutoff: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional tidy CSV (variable, tau, proportion).
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Median wall-clock timing of a pipeline task: emits a JSON report.
    Bench {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Task to time: fit, select, or path.
        #[arg(long, default_value = "fit")]
        task: String,
        #[arg(long, default_value_t = 15)]
        reps: usize,
        #[arg(long, default_value_t = 5.0)]
        tau: f64,
        #[arg(long, default_value = "0.5:10:0.5")]
        tau_grid: String,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        descent: DescentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_tau_grid(spec: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!(
                "--tau-grid expects start:stop:step or a comma list, got {spec:?}"
            )));
        }
        let start: f64 = parts[0]
            .parse()
            .map_err(|_| Error::invalid("--tau-grid: bad start value"))?;
        let stop: f64 = parts[1]
            .parse()
            .map_err(|_| Error::invalid("--tau-grid: bad stop value"))?;
        let step: f64 = parts[2]
            .parse()
            .map_err(|_| Error::invalid("--tau-grid: bad step value"))?;
        if !(step > 0.0) || stop < start {
            return Err(Error::invalid("--tau-grid: need step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step).round() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("--tau-grid: bad value {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?
    };
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "--tau-grid must be strictly increasing and positive",
        ));
    }
    Ok(grid)
}

fn load_inputs(x: &PathBuf, y: &PathBuf) -> Result<(CovariateMatrix, QuantileMatrix)> {
    let xm = read_matrix_csv(x)?;
    let ym = read_matrix_csv(y)?;
    Ok((CovariateMatrix::new(xm)?, validate_quantile_matrix(ym)?))
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            n,
            m,
            p,
            seed,
            out_x,
            out_y,
        } => {
            let (x, y) = generate_zinbinom_qf(n, m, p, seed)?;
            write_matrix_csv(&out_x, x.values(), "x")?;
            write_matrix_csv(&out_y, y.values(), "q")?;
        }
        Command::Fit {
            x,
            y,
            bounds,
            out,
            dump_active_sets,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let fit = fit_frechet(&xm, &ym, &bounds.bounds()?)?;
            write_matrix_csv(&out, fit.qhat.values(), "q")?;
            if let Some(path) = dump_active_sets {
                write_json(&path, &fit.active_sets)?;
            }
        }
        Command::Select {
            x,
            y,
            tau,
            bounds,
            descent,
            out,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let r = solve_friso(&xm, &ym, tau, &bounds.bounds()?, &descent.config(), None, None)?;
            if cli.verbose {
                for d in &r.history {
                    eprintln!("{}", serde_json::to_string(d)?);
                }
            }
            #[derive(serde::Serialize)]
            struct SelectOut {
                tau: f64,
                lambda: Vec<f64>,
                objective: f64,
                iterations: usize,
                converged: bool,
                gradient_norm: f64,
            }
            write_json(
                &out,
                &SelectOut {
                    tau,
                    lambda: r.lambda.lambda,
                    objective: r.objective,
                    iterations: r.iterations,
                    converged: r.converged,
                    gradient_norm: r.gradient_norm,
                },
            )?;
        }
        Command::Path {
            x,
            y,
            tau_grid,
            bounds,
            descent,
            out,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let grid = parse_tau_grid(&tau_grid)?;
            let path = solution_path(&xm, &ym, &grid, &bounds.bounds()?, &descent.config())?;
            if cli.verbose {
                for d in &path.diagnostics {
                    eprintln!("{}", serde_json::to_string(d)?);
                }
            }
            let file = std::fs::File::create(&out)
                .map_err(|e| Error::invalid(format!("cannot create {}: {e}", out.display())))?;
            let mut w = std::io::BufWriter::new(file);
            writeln!(w, "variable,tau,lambda")?;
            for j in 0..xm.p() {
                for (k, &tau) in path.taus.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{}",
                        j + 1,
                        format_float(tau),
                        format_float(path.lambdas[(j, k)])
                    )?;
                }
            }
        }
        Command::Cv {
            x,
            y,
            tau_grid,
            bounds,
            descent,
            folds,
            seed,
            out,
            out_csv,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let grid = parse_tau_grid(&tau_grid)?;
            let report = kfold_cv(
                &xm,
                &ym,
                &grid,
                &bounds.bounds()?,
                folds,
                &descent.config(),
                seed,
            )?;
            write_json(&out, &report)?;
            if let Some(csv) = out_csv {
                write_cv_csv(&csv, &report.tau_grid, &report.cv_error)?;
            }
        }
        Command::Stability {
            x,
            y,
            tau_grid,
            bounds,
            descent,
            replicates,
            pi_threshold,
            selection_cutoff,
            seed,
            out,
            out_csv,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let grid = parse_tau_grid(&tau_grid)?;
            let report = stability_selection(
                &xm,
                &ym,
                &grid,
                &bounds.bounds()?,
                replicates,
                pi_threshold,
                selection_cutoff,
                &descent.config(),
                seed,
            )?;
            write_json(&out, &report)?;
            if let Some(csv) = out_csv {
                let file = std::fs::File::create(&csv)
                    .map_err(|e| Error::invalid(format!("cannot create {}: {e}", csv.display())))?;
                let mut w = std::io::BufWriter::new(file);
                writeln!(w, "variable,tau,proportion")?;
                for (j, row) in report.proportions.iter().enumerate() {
                    for (k, &prop) in row.iter().enumerate() {
                        writeln!(
                            w,
                            "{},{},{}",
                            j + 1,
                            format_float(report.tau_grid[k]),
                            format_float(prop)
                        )?;
                    }
                }
            }
        }
        Command::Bench {
            x,
            y,
            task,
            reps,
            tau,
            tau_grid,
            bounds,
            descent,
            out,
        } => {
            let (xm, ym) = load_inputs(&x, &y)?;
            let b = bounds.bounds()?;
            let cfg = descent.config();
            let report = match task.as_str() {
                "fit" => measure("fit", reps, || {
                    let fit = fit_frechet(&xm, &ym, &b)?;
                    Ok(fit.qhat.values().sum())
                })?,
                "select" => measure("select", reps, || {
                    let r = solve_friso(&xm, &ym, tau, &b, &cfg, None, None)?;
                    Ok(r.objective + r.lambda.lambda.iter().sum::<f64>())
                })?,
                "path" => {
                    let grid = parse_tau_grid(&tau_grid)?;
                    measure("path", reps, || {
                        let p = solution_path(&xm, &ym, &grid, &b, &cfg)?;
                        Ok(p.lambdas.sum())
                    })?
                }
                other => {
                    return Err(Error::invalid(format!(
                        "--task must be fit, select, or path (got {other:?})"
                    )))
                }
            };
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

fn write_cv_csv(path: &PathBuf, taus: &[f64], errors: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "tau,cv_error")?;
    for (t, e) in taus.iter().zip(errors) {
        writeln!(w, "{},{}", format_float(*t), format_float(*e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
