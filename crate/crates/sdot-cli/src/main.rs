//! `sdot`: hierarchical optimal transport from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 solver
//! failure, 4 Unsafe verdict under `--fail-on-unsafe`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sdot::bench;
use sdot::bundle::Bundle;
use sdot::compose::compose_aligned;
use sdot::composed_lp;
use sdot::diagram::to_sequential_normal_form;
use sdot::error::{Error, ErrorKind};
use sdot::experiment::{self, ExperimentConfig, SweepFamily};
use sdot::safety::{check_safety, Certificate, SafetyDecision, SafetySolver};
use sdot::solvers::{solve_exact, solve_sinkhorn, SinkhornOptions, SolverKind};

#[derive(Parser)]
#[command(name = "sdot", version, about = "String-diagram optimal transport toolkit")]
struct Cli {
    /// Worker threads for internal parallelism (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed for generation commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Table rendering for experiment/sweep output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Dsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Sinkhorn,
    ComposedLp,
}

#[derive(Args, Clone)]
struct SinkhornArgs {
    /// Regularization strength (default: 1e-3 x the largest cost).
    #[arg(long)]
    epsilon: Option<f64>,

    /// L1 marginal-violation stopping tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,

    /// Iteration budget.
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,

    /// Halve epsilon from max(C)/2 down to the target, warm-started.
    #[arg(long)]
    anneal: bool,

    /// Round the plan to exact marginal feasibility.
    #[arg(long)]
    round_plan: bool,
}

impl SinkhornArgs {
    fn options(&self) -> SinkhornOptions {
        SinkhornOptions {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
            anneal: self.anneal,
            round_plan: self.round_plan,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fold a bundle's diagram into its monolithic cost matrix.
    Compose {
        bundle: PathBuf,
        /// Destination for the composed matrix (CSV).
        #[arg(short, long, default_value = "composed.csv")]
        out: PathBuf,
    },

    /// Solve the monolithic OT of a bundle.
    Solve {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
        solver: SolverArg,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
        /// Write the transportation plan here (CSV).
        #[arg(long)]
        plan_out: Option<PathBuf>,
        /// Write dual potentials to <prefix>.f.csv and <prefix>.g.csv.
        #[arg(long)]
        potentials_out: Option<PathBuf>,
    },

    /// Decide whether lambda <= OT(D, a, b), with a certificate.
    Safety {
        bundle: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
        solver: SolverArg,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
        /// Write the certificate next to this prefix
        /// (.f.csv/.g.csv for duals, .plan.csv for witnesses).
        #[arg(long)]
        certificate_out: Option<PathBuf>,
        /// Exit with code 4 when the verdict is Unsafe.
        #[arg(long)]
        fail_on_unsafe: bool,
    },

    /// Benchmark instances.
    #[command(subcommand)]
    Bench(BenchCommand),

    /// Run timing/error rows over instance bundles.
    Experiment {
        bundles: Vec<PathBuf>,
        /// Comma-separated solver list.
        #[arg(long, value_delimiter = ',', value_enum,
              default_values_t = [SolverArg::Exact, SolverArg::Sinkhorn, SolverArg::ComposedLp])]
        solvers: Vec<SolverArg>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Bundles processed concurrently (timings are per dedicated task).
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
    },

    /// Sweep one family parameter and emit per-value timing rows.
    Sweep {
        #[arg(long, value_enum)]
        family: SweepFamilyArg,
        /// Comma-separated parameter values (chain length / room count).
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        /// Link width for bchains sweeps.
        #[arg(long, default_value_t = 10)]
        width: usize,
        /// Room size for brooms sweeps.
        #[arg(long, default_value_t = 10)]
        room_size: usize,
        #[arg(long, value_delimiter = ',', value_enum,
              default_values_t = [SolverArg::Exact, SolverArg::Sinkhorn, SolverArg::ComposedLp])]
        solvers: Vec<SolverArg>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[command(flatten)]
        sinkhorn: SinkhornArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepFamilyArg {
    Bchains,
    Brooms,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Generate a preset instance bundle.
    Gen {
        /// One of BRoom1, BRoom2, URoom1, URoom2, BChain1, BChain2,
        /// UChain1, UChain2.
        #[arg(long)]
        preset: String,
        /// Shrink factor in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Sample integer costs instead of reals.
        #[arg(long)]
        integer_costs: bool,
        /// Destination directory.
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; usage problems exit 1.
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            match err.kind() {
                ErrorKind::Validation => ExitCode::from(2),
                ErrorKind::Solver => ExitCode::from(3),
            }
        }
    }
}

fn solver_kinds(args: &[SolverArg]) -> Vec<SolverKind> {
    args.iter()
        .map(|s| match s {
            SolverArg::Exact => SolverKind::Exact,
            SolverArg::Sinkhorn => SolverKind::Sinkhorn,
            SolverArg::ComposedLp => SolverKind::ComposedLp,
        })
        .collect()
}

fn write_out(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit(output: Option<&Path>, contents: &str) -> Result<(), Error> {
    match output {
        Some(path) => write_out(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Compose { bundle, out } => {
            let bundle = Bundle::read_dir(bundle)?;
            bundle.validate()?;
            let aligned = to_sequential_normal_form(&bundle.diagram)?;
            let composed = compose_aligned(&aligned)?;
            write_out(out, &composed.to_csv())?;
            println!(
                "composed {} open OTs into a {}x{} cost matrix -> {}",
                bundle.oot_count(),
                composed.rows(),
                composed.cols(),
                out.display()
            );
            Ok(0)
        }

        Command::Solve {
            bundle,
            solver,
            sinkhorn,
            plan_out,
            potentials_out,
        } => {
            let bundle = Bundle::read_dir(bundle)?;
            bundle.validate()?;
            let aligned = to_sequential_normal_form(&bundle.diagram)?;

            let (value, iterations, plan, potentials) = match solver {
                SolverArg::ComposedLp => {
                    let (lp, duals) =
                        composed_lp::solve_aligned(&aligned, &bundle.source, &bundle.target)?;
                    (lp.value, lp.iterations, None, Some(duals))
                }
                SolverArg::Exact => {
                    let composed = compose_aligned(&aligned)?;
                    let sol = solve_exact(&composed, &bundle.source, &bundle.target)?;
                    (
                        sol.value.as_f64(),
                        sol.iterations,
                        Some(sol.plan),
                        sol.potentials,
                    )
                }
                SolverArg::Sinkhorn => {
                    let composed = compose_aligned(&aligned)?;
                    let sol = solve_sinkhorn(
                        &composed,
                        &bundle.source,
                        &bundle.target,
                        &sinkhorn.options(),
                    )?;
                    (sol.value.as_f64(), sol.iterations, Some(sol.plan), None)
                }
            };

            println!("value: {value}");
            println!("iterations: {iterations}");
            if let Some(path) = plan_out {
                match &plan {
                    Some(p) => {
                        write_out(path, &p.to_csv())?;
                        println!("plan: {}", path.display());
                    }
                    None => println!("plan: not produced by this solver"),
                }
            }
            if let Some(prefix) = potentials_out {
                match &potentials {
                    Some(d) => {
                        let (f_path, g_path) = potentials_paths(prefix);
                        write_out(&f_path, &vector_text(&d.source))?;
                        write_out(&g_path, &vector_text(&d.target))?;
                        println!("potentials: {} {}", f_path.display(), g_path.display());
                    }
                    None => println!("potentials: not produced by this solver"),
                }
            }
            Ok(0)
        }

        Command::Safety {
            bundle,
            lambda,
            solver,
            sinkhorn,
            certificate_out,
            fail_on_unsafe,
        } => {
            let bundle = Bundle::read_dir(bundle)?;
            bundle.validate()?;
            let safety_solver = match solver {
                SolverArg::Exact => SafetySolver::Exact,
                SolverArg::Sinkhorn => SafetySolver::Sinkhorn(sinkhorn.options()),
                SolverArg::ComposedLp => SafetySolver::ComposedLp,
            };
            let verdict = check_safety(
                &bundle.diagram,
                &bundle.source,
                &bundle.target,
                *lambda,
                &safety_solver,
            )?;

            let mut certificate_lines = Vec::new();
            if let Some(prefix) = certificate_out {
                match &verdict.certificate {
                    Certificate::Dual(d) => {
                        let (f_path, g_path) = potentials_paths(prefix);
                        write_out(&f_path, &vector_text(&d.source))?;
                        write_out(&g_path, &vector_text(&d.target))?;
                        certificate_lines
                            .push(format!("certificate_files: {} {}", f_path.display(), g_path.display()));
                    }
                    Certificate::Witness { plan, .. } => {
                        let path = prefix.with_extension("plan.csv");
                        write_out(&path, &plan.to_csv())?;
                        certificate_lines.push(format!("certificate_files: {}", path.display()));
                    }
                }
            }

            let mut record = String::new();
            record.push_str(&format!("decision: {}\n", verdict.decision));
            record.push_str(&format!("lambda: {}\n", verdict.lambda));
            record.push_str(&format!("value: {}\n", verdict.ot_value));
            record.push_str(&format!("solver: {}\n", verdict.solver));
            record.push_str(&format!("certified: {}\n", verdict.certified));
            record.push_str(&format!("near_boundary: {}\n", verdict.near_boundary));
            match &verdict.certificate {
                Certificate::Dual(_) => record.push_str("certificate: dual potentials\n"),
                Certificate::Witness { cost, .. } => {
                    record.push_str(&format!("certificate: witness plan of cost {cost}\n"))
                }
            }
            for line in &certificate_lines {
                record.push_str(line);
                record.push('\n');
            }
            emit(cli.output.as_deref(), &record)?;

            if *fail_on_unsafe && verdict.decision == SafetyDecision::Unsafe {
                Ok(4)
            } else {
                Ok(0)
            }
        }

        Command::Bench(BenchCommand::Gen {
            preset,
            scale,
            integer_costs,
            out,
        }) => {
            let spec = bench::scale(&bench::preset(preset)?, *scale)?
                .with_seed(cli.seed)
                .with_integer_costs(*integer_costs);
            let bundle = bench::generate(&spec)?;
            bundle.validate()?;
            bundle.write_dir(out)?;
            println!(
                "wrote {} ({} open OTs, boundary {} -> {}) to {}",
                spec.name,
                bundle.oot_count(),
                bundle.source.len(),
                bundle.target.len(),
                out.display()
            );
            Ok(0)
        }

        Command::Experiment {
            bundles,
            solvers,
            reps,
            workers,
            sinkhorn,
        } => {
            if bundles.is_empty() {
                return Err(Error::Validation("no bundles given".into()));
            }
            let mut loaded = Vec::with_capacity(bundles.len());
            for dir in bundles {
                loaded.push(Bundle::read_dir(dir)?);
            }
            let config = ExperimentConfig {
                solvers: solver_kinds(solvers),
                repetitions: *reps,
                workers: *workers,
                sinkhorn: sinkhorn.options(),
            };
            let rows = experiment::run_experiment(&loaded, &config);
            let rendered = match cli.format {
                Format::Table => experiment::to_table(&rows),
                Format::Dsv => experiment::to_dsv(&rows),
            };
            emit(cli.output.as_deref(), &rendered)?;
            Ok(0)
        }

        Command::Sweep {
            family,
            values,
            width,
            room_size,
            solvers,
            reps,
            sinkhorn,
        } => {
            let family = match family {
                SweepFamilyArg::Bchains => SweepFamily::BChains { width: *width },
                SweepFamilyArg::Brooms => SweepFamily::BRooms {
                    room_size: *room_size,
                },
            };
            let config = ExperimentConfig {
                solvers: solver_kinds(solvers),
                repetitions: *reps,
                workers: 1,
                sinkhorn: sinkhorn.options(),
            };
            let rows = experiment::sweep(&family, values, cli.seed, &config)?;
            let rendered = match cli.format {
                Format::Table => experiment::to_table(&rows),
                Format::Dsv => experiment::to_dsv(&rows),
            };
            emit(cli.output.as_deref(), &rendered)?;
            Ok(0)
        }
    }
}

fn potentials_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    (
        prefix.with_extension("f.csv"),
        prefix.with_extension("g.csv"),
    )
}

fn vector_text(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
