//! Timing/error table runner: one row per (bundle, solver), with the
//! composition and solve phases timed separately.
//!
//! The monolithic routes share one composition measurement per bundle (the
//! composed matrix is reused, as the identical composition columns in the
//! reference tables do); the hierarchical baseline has no composition phase,
//! so its entire run is the solve column. Relative errors are measured
//! against the exact monolithic value, which is computed for every bundle
//! whether or not its row was requested.

use std::time::Instant;

use crate::bundle::Bundle;
use crate::compose::compose_aligned;
use crate::composed_lp;
use crate::diagram::to_sequential_normal_form;
use crate::error::{Error, Result};
use crate::solvers::{solve_exact, solve_sinkhorn, SinkhornOptions, SolverKind};

/// Divisor floor for relative errors, so an exact reference of 0 still
/// yields a finite column.
pub const REL_ERROR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub diagram: String,
    pub oot_count: usize,
    pub solver: SolverKind,
    /// Seconds composing the cost matrix (0 for the hierarchical baseline).
    pub t_compose: f64,
    /// Seconds in the solver (for the baseline: assembly + solve).
    pub t_solve: f64,
    pub t_total: f64,
    /// |v - v_exact| / max(|v_exact|, floor); None when the row failed.
    pub rel_error: Option<f64>,
    pub value: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub solvers: Vec<SolverKind>,
    pub repetitions: usize,
    pub workers: usize,
    pub sinkhorn: SinkhornOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            solvers: vec![SolverKind::Exact, SolverKind::Sinkhorn, SolverKind::ComposedLp],
            repetitions: 1,
            workers: 1,
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

/// Runs every requested solver on every bundle. Failures become rows with an
/// error message; the run continues.
pub fn run_experiment(bundles: &[Bundle], config: &ExperimentConfig) -> Vec<ExperimentRow> {
    if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("worker pool");
        pool.install(|| {
            use rayon::prelude::*;
            bundles
                .par_iter()
                .map(|b| run_bundle(b, config))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        })
    } else {
        bundles.iter().flat_map(|b| run_bundle(b, config)).collect()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    xs[xs.len() / 2]
}

fn run_bundle(bundle: &Bundle, config: &ExperimentConfig) -> Vec<ExperimentRow> {
    let reps = config.repetitions.max(1);
    let name = bundle.name.clone();
    let oot_count = bundle.oot_count();
    let fail = |solver: SolverKind, err: &Error| ExperimentRow {
        diagram: name.clone(),
        oot_count,
        solver,
        t_compose: 0.0,
        t_solve: 0.0,
        t_total: 0.0,
        rel_error: None,
        value: f64::NAN,
        error: Some(err.to_string()),
    };

    let aligned = match to_sequential_normal_form(&bundle.diagram) {
        Ok(a) => a,
        Err(e) => {
            return config.solvers.iter().map(|&s| fail(s, &e)).collect();
        }
    };

    // One timed composition, shared by the monolithic routes.
    let needs_compose = config
        .solvers
        .iter()
        .any(|s| matches!(s, SolverKind::Exact | SolverKind::Sinkhorn));
    let mut compose_times = Vec::with_capacity(reps);
    let mut composed = None;
    if needs_compose || config.solvers.iter().any(|s| *s == SolverKind::Sinkhorn) {
        for _ in 0..reps {
            let started = Instant::now();
            match compose_aligned(&aligned) {
                Ok(c) => {
                    compose_times.push(started.elapsed().as_secs_f64());
                    composed = Some(c);
                }
                Err(e) => {
                    return config.solvers.iter().map(|&s| fail(s, &e)).collect();
                }
            }
        }
    }
    let t_compose = if compose_times.is_empty() {
        0.0
    } else {
        median(compose_times)
    };

    // Exact reference value for the error column.
    let reference = composed.as_ref().map(|c| {
        let mut times = Vec::with_capacity(reps);
        let mut value = f64::NAN;
        let mut err = None;
        for _ in 0..reps {
            let started = Instant::now();
            match solve_exact(c, &bundle.source, &bundle.target) {
                Ok(sol) => {
                    times.push(started.elapsed().as_secs_f64());
                    value = sol.value.as_f64();
                }
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        (value, times, err)
    });
    let reference = match reference {
        Some(r) => Some(r),
        None => {
            // Hierarchical-only run still needs the reference value.
            match compose_aligned(&aligned)
                .and_then(|c| solve_exact(&c, &bundle.source, &bundle.target))
            {
                Ok(sol) => Some((sol.value.as_f64(), Vec::new(), None)),
                Err(e) => Some((f64::NAN, Vec::new(), Some(e))),
            }
        }
    };
    let (v_exact, exact_times, exact_err) = reference.expect("reference computed");

    let rel_error = |v: f64| {
        if v_exact.is_nan() {
            None
        } else {
            Some((v - v_exact).abs() / v_exact.abs().max(REL_ERROR_FLOOR))
        }
    };

    let mut rows = Vec::new();
    for &solver in &config.solvers {
        match solver {
            SolverKind::Exact => {
                if let Some(e) = &exact_err {
                    rows.push(fail(solver, e));
                    continue;
                }
                let t_solve = median(exact_times.clone());
                rows.push(ExperimentRow {
                    diagram: name.clone(),
                    oot_count,
                    solver,
                    t_compose,
                    t_solve,
                    t_total: t_compose + t_solve,
                    rel_error: rel_error(v_exact),
                    value: v_exact,
                    error: None,
                });
            }
            SolverKind::Sinkhorn => {
                let c = composed.as_ref().expect("composed for sinkhorn");
                let mut times = Vec::with_capacity(reps);
                let mut outcome = None;
                for _ in 0..reps {
                    let started = Instant::now();
                    match solve_sinkhorn(c, &bundle.source, &bundle.target, &config.sinkhorn) {
                        Ok(sol) => {
                            times.push(started.elapsed().as_secs_f64());
                            outcome = Some(sol.value.as_f64());
                        }
                        Err(e) => {
                            rows.push(fail(solver, &e));
                            outcome = None;
                            break;
                        }
                    }
                }
                if let Some(v) = outcome {
                    let t_solve = median(times);
                    rows.push(ExperimentRow {
                        diagram: name.clone(),
                        oot_count,
                        solver,
                        t_compose,
                        t_solve,
                        t_total: t_compose + t_solve,
                        rel_error: rel_error(v),
                        value: v,
                        error: None,
                    });
                }
            }
            SolverKind::ComposedLp => {
                let mut times = Vec::with_capacity(reps);
                let mut outcome = None;
                for _ in 0..reps {
                    let started = Instant::now();
                    match composed_lp::solve_aligned(&aligned, &bundle.source, &bundle.target) {
                        Ok((lp, _)) => {
                            times.push(started.elapsed().as_secs_f64());
                            outcome = Some(lp.value);
                        }
                        Err(e) => {
                            rows.push(fail(solver, &e));
                            outcome = None;
                            break;
                        }
                    }
                }
                if let Some(v) = outcome {
                    let t_solve = median(times);
                    rows.push(ExperimentRow {
                        diagram: name.clone(),
                        oot_count,
                        solver,
                        t_compose: 0.0,
                        t_solve,
                        t_total: t_solve,
                        rel_error: rel_error(v),
                        value: v,
                        error: None,
                    });
                }
            }
        }
    }
    rows
}

/// A parameter sweep over one benchmark family, emitting one row per
/// (value, solver).
#[derive(Clone, Debug)]
pub enum SweepFamily {
    /// Chain length sweep at fixed link width.
    BChains { width: usize },
    /// Parallel room-count sweep at fixed room size.
    BRooms { room_size: usize },
}

pub fn sweep(
    family: &SweepFamily,
    values: &[usize],
    seed: u64,
    config: &ExperimentConfig,
) -> Result<Vec<ExperimentRow>> {
    let mut bundles = Vec::with_capacity(values.len());
    for &v in values {
        let spec = match family {
            SweepFamily::BChains { width } => crate::bench::bchains(v, *width),
            SweepFamily::BRooms { room_size } => crate::bench::brooms_parallel(v, *room_size),
        }
        .with_seed(seed);
        bundles.push(crate::bench::generate(&spec)?);
    }
    Ok(run_experiment(&bundles, config))
}

// ---------------------------------------------------------------------------
// Table output
// ---------------------------------------------------------------------------

const DSV_HEADER: &str = "diagram\toot\tsolver\tt_compose\tt_solve\tt_total\trel_error\tvalue\tstatus";

/// Tab-separated output that [`parse_dsv`] reads back losslessly.
pub fn to_dsv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(DSV_HEADER);
    out.push('\n');
    for r in rows {
        let rel = r.rel_error.map(|e| e.to_string()).unwrap_or_default();
        let status = match &r.error {
            None => "ok".to_string(),
            Some(msg) => msg.replace(['\t', '\n'], " "),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.diagram,
            r.oot_count,
            r.solver,
            r.t_compose,
            r.t_solve,
            r.t_total,
            rel,
            r.value,
            status
        ));
    }
    out
}

pub fn parse_dsv(text: &str) -> Result<Vec<ExperimentRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == DSV_HEADER => {}
        _ => {
            return Err(Error::InvalidMatrix(
                "experiment table header missing or unrecognized".into(),
            ))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(Error::InvalidMatrix(format!(
                "experiment table line {} has {} fields, expected 9",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidMatrix(format!("bad number '{s}'")))
        };
        let solver = match fields[2] {
            "exact" => SolverKind::Exact,
            "sinkhorn" => SolverKind::Sinkhorn,
            "composed-lp" => SolverKind::ComposedLp,
            other => {
                return Err(Error::InvalidMatrix(format!("unknown solver tag '{other}'")))
            }
        };
        rows.push(ExperimentRow {
            diagram: fields[0].to_string(),
            oot_count: fields[1]
                .parse()
                .map_err(|_| Error::InvalidMatrix(format!("bad count '{}'", fields[1])))?,
            solver,
            t_compose: parse_f(fields[3])?,
            t_solve: parse_f(fields[4])?,
            t_total: parse_f(fields[5])?,
            rel_error: if fields[6].is_empty() {
                None
            } else {
                Some(parse_f(fields[6])?)
            },
            value: parse_f(fields[7])?,
            error: if fields[8] == "ok" {
                None
            } else {
                Some(fields[8].to_string())
            },
        });
    }
    Ok(rows)
}

/// Fixed-width human-readable table.
pub fn to_table(rows: &[ExperimentRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>6} {:<11} {:>11} {:>11} {:>11} {:>10}  {}\n",
        "diagram", "#oOT", "solver", "t_C (s)", "t_solve (s)", "t_total (s)", "E", "status"
    ));
    for r in rows {
        let rel = r
            .rel_error
            .map(|e| format!("{e:.1e}"))
            .unwrap_or_else(|| "-".into());
        let status = match &r.error {
            None => "ok",
            Some(msg) => msg.as_str(),
        };
        out.push_str(&format!(
            "{:<18} {:>6} {:<11} {:>11.4} {:>11.4} {:>11.4} {:>10}  {}\n",
            r.diagram, r.oot_count, r.solver.to_string(), r.t_compose, r.t_solve, r.t_total, rel, status
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    fn toy_bundle() -> Bundle {
        bench::generate(&bench::bchains(2, 3).with_seed(9)).unwrap()
    }

    #[test]
    fn reference_row_has_zero_error() {
        let rows = run_experiment(&[toy_bundle()], &ExperimentConfig::default());
        assert_eq!(rows.len(), 3);
        let exact = rows.iter().find(|r| r.solver == SolverKind::Exact).unwrap();
        assert!(exact.rel_error.unwrap() < 1e-12);
        assert!(exact.t_total >= exact.t_compose);
    }

    #[test]
    fn composed_lp_matches_reference_closely() {
        let rows = run_experiment(&[toy_bundle()], &ExperimentConfig::default());
        let lp = rows
            .iter()
            .find(|r| r.solver == SolverKind::ComposedLp)
            .unwrap();
        assert!(lp.rel_error.unwrap() < 1e-7, "E = {:?}", lp.rel_error);
        assert_eq!(lp.t_compose, 0.0);
    }

    #[test]
    fn sinkhorn_row_within_loose_error() {
        let mut config = ExperimentConfig::default();
        config.sinkhorn.anneal = true;
        let rows = run_experiment(&[toy_bundle()], &config);
        let sh = rows
            .iter()
            .find(|r| r.solver == SolverKind::Sinkhorn)
            .unwrap();
        assert!(sh.error.is_none(), "{:?}", sh.error);
        assert!(sh.rel_error.unwrap() < 1e-3, "E = {:?}", sh.rel_error);
    }

    #[test]
    fn dsv_round_trip() {
        let rows = run_experiment(&[toy_bundle()], &ExperimentConfig::default());
        let text = to_dsv(&rows);
        let back = parse_dsv(&text).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn empty_sweep_is_empty() {
        let rows = sweep(
            &SweepFamily::BChains { width: 4 },
            &[],
            1,
            &ExperimentConfig::default(),
        )
        .unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn sweep_emits_rows_per_value_and_solver() {
        let rows = sweep(
            &SweepFamily::BChains { width: 10 },
            &[3, 6, 9],
            1,
            &ExperimentConfig::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 9);
    }

    #[test]
    fn parallel_workers_preserve_row_order() {
        let bundles = vec![toy_bundle(), {
            let mut b = toy_bundle();
            b.name = "second".into();
            b
        }];
        let sequential = run_experiment(&bundles, &ExperimentConfig::default());
        let parallel = run_experiment(
            &bundles,
            &ExperimentConfig {
                workers: 2,
                ..Default::default()
            },
        );
        let names_seq: Vec<_> = sequential.iter().map(|r| (&r.diagram, r.solver)).collect();
        let names_par: Vec<_> = parallel.iter().map(|r| (&r.diagram, r.solver)).collect();
        assert_eq!(names_seq, names_par);
    }
}
