//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 violated bound or hypothesis.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::continuation::{solution_at, theorem1_window, trace_branch, APriori, BranchPoint, ContinuationConfig};
use crate::error::{Error, Result};
use crate::geometry::{cover, Covering, Domain, QuadratureGrid};
use crate::io;
use crate::logistic::LogisticProblem;
use crate::model::{check_hypotheses, HypothesisReport, WeightSpec};
use crate::operator::PrincipalEigenpair;
use crate::regularized::limit_procedure;
use crate::verification::{
    check_nonexistence, oracle_fixed_point, verify_points, BoundContext, BoundReport, OracleOutcome,
};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "NLDISP_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nldisp", version, about = "Steady states of nonlocal logistic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the environment and the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Principal eigenpair of the dispersal operator.
    Eig(Common),
    /// Grid certificates for every hypothesis on K and Q.
    CheckHyp(Common),
    /// Positive solution at a single lambda.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Trace the positive branch from the bifurcation point.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        ds: Option<f64>,
        /// Also write per-point states.
        #[arg(long)]
        snapshots: bool,
    },
    /// Regularized family for eps = 1/n and its limit.
    SweepEps {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_range: Option<Vec<usize>>,
    },
    /// Check every applicable bound along a stored branch.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        branch: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Render a branch CSV as an SVG diagram.
    ExportPlot {
        #[arg(long)]
        branch: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::KreinRutmanViolation { .. }
        | Error::NonpositiveEigenvalue(_)
        | Error::Hypothesis(_)
        | Error::NonCauchy(_) => EXIT_VIOLATION,
        _ => EXIT_USAGE,
    }
}

struct Setup {
    cfg: RunConfig,
    domain: Domain,
    grid: QuadratureGrid,
    weight: WeightSpec,
    problem: LogisticProblem,
    eig: PrincipalEigenpair,
    hyp: HypothesisReport,
    covering: Covering,
    out_dir: PathBuf,
}

impl Setup {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::from_path(&common.config)?;
        if let Some(p) = common.p {
            cfg.p = p;
        }
        if let Some(r) = common.resolution {
            cfg.grid.resolution = r;
        }
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let (domain, grid) = cfg.build_grid()?;
        let kernel = cfg.kernel_spec(&grid)?;
        let weight = cfg.weight_spec(&grid)?;
        let hyp = check_hypotheses(&kernel, &weight, &grid, cfg.delta, cfg.r)?;
        let problem = LogisticProblem::new(&kernel, &weight, &grid)?;
        let eig = problem.op.principal_eigenpair()?;
        let covering = cover(&domain, &grid, cfg.r)?;
        if hyp.q2.holds {
            cfg.continuation.a_priori = Some(APriori {
                m: covering.m,
                sigma: hyp.q2.sigma,
            });
        }
        let out_dir = common
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("nldisp-out"));
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        Ok(Setup {
            cfg,
            domain,
            grid,
            weight,
            problem,
            eig,
            hyp,
            covering,
            out_dir,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn bound_context(&self) -> BoundContext {
        BoundContext {
            lambda1: self.eig.lambda1,
            p: self.cfg.p,
            sigma_local: self.hyp.q2.holds.then_some(self.hyp.q2.sigma),
            sigma_global: self.hyp.q2pp.holds.then_some(self.hyp.q2pp.sigma),
            oscillation: self.hyp.oscillation,
        }
    }

    fn window(&self) -> Option<(f64, f64)> {
        if self.hyp.q2pp.holds {
            theorem1_window(self.eig.lambda1, self.hyp.q2pp.sigma, self.hyp.oscillation).ok()
        } else {
            None
        }
    }

    fn continuation(&self) -> ContinuationConfig {
        self.cfg.continuation.clone()
    }

    fn require_lambda(&self, flag: Option<f64>) -> Result<f64> {
        flag.or(self.cfg.lambda)
            .ok_or_else(|| Error::Config("lambda is required (config field or --lambda)".into()))
    }

    /// Point on the branch at exactly `lambda`.
    fn solve_at(&self, lambda: f64) -> Result<BranchPoint> {
        let cfg = ContinuationConfig {
            lambda_max: lambda,
            ..self.continuation()
        };
        let br = trace_branch(&self.problem, &self.eig, &cfg)?;
        let last = br.points.last().cloned().expect("non-empty branch");
        if last.lambda == lambda {
            Ok(last)
        } else {
            Err(Error::StepFailure(format!(
                "continuation stopped at lambda = {} before {lambda}",
                last.lambda
            )))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text)
}

/// Infinite values are written as strings so JSON stays valid and readable.
fn finite_or_str(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Eig(c) => cmd_eig(&c),
        Command::CheckHyp(c) => cmd_check_hyp(&c),
        Command::Solve { common, lambda } => cmd_solve(&common, lambda),
        Command::Trace {
            common,
            lambda_max,
            ds,
            snapshots,
        } => cmd_trace(&common, lambda_max, ds, snapshots),
        Command::SweepEps {
            common,
            lambda,
            n_range,
        } => cmd_sweep(&common, lambda, n_range),
        Command::Verify { common, branch, trials } => cmd_verify(&common, &branch, trials),
        Command::ExportPlot { branch, out } => {
            io::export_plot(&branch, &out)?;
            println!("{}", out.display());
            Ok(EXIT_OK)
        }
    }
}

fn cmd_eig(c: &Common) -> Result<i32> {
    let s = Setup::load(c)?;
    let e = &s.eig;
    let summary = json!({
        "lambda1": e.lambda1,
        "gap": e.gap,
        "residual": e.residual,
        "min_phi1": e.min_phi1,
        "nodes": s.grid.len(),
    });
    print!("{}", write_json(&s.out("eig.json"), &summary)?);
    io::write_node_csv(&s.out("phi1.csv"), &s.grid, &e.phi1)?;
    Ok(EXIT_OK)
}

fn cmd_check_hyp(c: &Common) -> Result<i32> {
    let s = Setup::load(c)?;
    let window = s.window();
    let summary = json!({
        "hypotheses": s.hyp,
        "consistent": s.hyp.consistent(),
        "lambda1": s.eig.lambda1,
        "covering_m": s.covering.m,
        "domain_volume": s.domain.volume(),
        "window": window.map(|(lo, hi)| json!([lo, finite_or_str(hi)])),
    });
    print!("{}", write_json(&s.out("hypotheses.json"), &summary)?);
    Ok(if s.hyp.consistent() { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_solve(c: &Common, lambda: Option<f64>) -> Result<i32> {
    let s = Setup::load(c)?;
    let lambda = s.require_lambda(lambda)?;
    if lambda <= s.eig.lambda1 {
        let summary = json!({
            "lambda": lambda,
            "lambda1": s.eig.lambda1,
            "positive_solution": false,
        });
        print!("{}", write_json(&s.out("solve.json"), &summary)?);
        return Ok(EXIT_OK);
    }
    let pt = s.solve_at(lambda)?;
    let oracle = oracle_fixed_point(&s.problem, &s.eig, lambda, &pt.u, 0.5, 50_000)?;
    let oracle_distance = match &oracle {
        OracleOutcome::Converged { u, .. } => json!(u.iter().zip(&pt.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))),
        other => json!(format!("{other:?}")),
    };
    io::write_node_csv(&s.out("solution.csv"), &s.grid, &pt.u)?;
    let summary = json!({
        "lambda": lambda,
        "lambda1": s.eig.lambda1,
        "positive_solution": true,
        "sup_norm": pt.sup_norm,
        "p_norm": pt.p_norm,
        "diagnostics": pt.diagnostics,
        "oracle_distance": oracle_distance,
    });
    print!("{}", write_json(&s.out("solve.json"), &summary)?);
    Ok(EXIT_OK)
}

fn cmd_trace(c: &Common, lambda_max: Option<f64>, ds: Option<f64>, snapshots: bool) -> Result<i32> {
    let mut s = Setup::load(c)?;
    if let Some(l) = lambda_max {
        s.cfg.continuation.lambda_max = l;
    }
    if let Some(d) = ds {
        s.cfg.continuation.ds = d;
    }
    let cfg = s.continuation();
    let br = trace_branch(&s.problem, &s.eig, &cfg)?;
    let seed_margin = cfg.a_priori.map_or(f64::NAN, |a| a.bound(s.eig.lambda1, s.cfg.p));
    let rows = io::branch_rows(&br, seed_margin);
    io::write_branch_csv(&s.out("branch.csv"), &rows)?;
    if snapshots {
        io::write_snapshots_csv(&s.out("branch_u.csv"), &br.monotone_points())?;
    }
    let violated = br
        .points
        .iter()
        .any(|p| p.diagnostics.gamma_phi_sup >= 1.0 || p.diagnostics.lemma10_margin < -crate::verification::BOUND_TOL);
    let summary = json!({
        "lambda1": br.lambda1,
        "p": br.p,
        "points": br.points.len(),
        "termination": br.termination,
        "folds": br.folds,
        "bifurcation_estimate": br.bifurcation_estimate(),
        "last_lambda": br.points.last().map(|p| p.lambda),
        "window": s.window().map(|(lo, hi)| json!([lo, finite_or_str(hi)])),
        "bounds_violated": violated,
    });
    print!("{}", write_json(&s.out("branch.json"), &summary)?);
    Ok(if violated { EXIT_VIOLATION } else { EXIT_OK })
}

fn cmd_sweep(c: &Common, lambda: Option<f64>, n_range: Option<Vec<usize>>) -> Result<i32> {
    let s = Setup::load(c)?;
    let lambda = s.require_lambda(lambda)?;
    let ns = n_range.unwrap_or_else(|| s.cfg.n_range.clone());
    let points = match (&s.cfg.max_points, &s.hyp.q4.x0) {
        (Some(pts), _) => pts.clone(),
        (None, Some(x0)) => vec![x0.clone()],
        (None, None) => {
            return Err(Error::Hypothesis("no maximum point x0 certified for Q".into()));
        }
    };
    let run = limit_procedure(
        &s.problem.op,
        &s.eig,
        &s.weight,
        &points,
        lambda,
        &ns,
        &s.continuation(),
        s.cfg.near_point_radius,
    )?;
    let rows: Vec<Vec<f64>> = run
        .runs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let gap = if k == 0 { f64::NAN } else { run.cauchy_gaps[k - 1] };
            vec![ns[k] as f64, r.eps, r.point.sup_norm, r.lemma12_margin, gap]
        })
        .collect();
    io::write_table(
        &s.out("sweep.csv"),
        &["n", "eps", "sup_norm", "lemma12_min_margin", "cauchy_gap"],
        &rows,
    )?;
    io::write_node_csv(&s.out("limit.csv"), &s.grid, &run.limit)?;
    let ok = run.lemma12_all() && !run.non_cauchy;
    let summary = json!({
        "lambda": run.lambda,
        "lambda1": run.lambda1,
        "theta": run.theta,
        "points": points,
        "ns": run.ns,
        "lemma12_all": run.lemma12_all(),
        "lemma12_worst": run.lemma12_worst(),
        "cauchy_gaps": run.cauchy_gaps,
        "gaps_strictly_decreasing": run.gaps_strictly_decreasing,
        "non_cauchy": run.non_cauchy,
        "modulus_margin": run.modulus_margin,
        "modulus_margin_same_state": run.modulus_margin_same_state,
        "near_point_margin": run.near_point_margin,
        "limit_residual": run.limit_residual,
        "limit_residual_away": run.limit_residual_away,
    });
    print!("{}", write_json(&s.out("sweep.json"), &summary)?);
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_verify(c: &Common, branch: &Path, trials: Option<usize>) -> Result<i32> {
    let s = Setup::load(c)?;
    let rows = io::read_branch_csv(branch)?;
    if rows.len() < 2 {
        return Err(Error::Csv(format!("{}: branch has no solution rows", branch.display())));
    }
    let mut reports: Vec<BoundReport> = Vec::new();

    let seed = &rows[0];
    let seed_gap = (seed.lambda - s.eig.lambda1).abs();
    let mut r = BoundReport::new("seed", 1e-8 * s.eig.lambda1.max(1.0) - seed_gap)
        .with("lambda1", s.eig.lambda1)
        .with("seed_lambda", seed.lambda);
    r.holds &= seed.sup_norm == 0.0;
    reports.push(r);

    let lambda_top = rows.iter().map(|r| r.lambda).fold(f64::NEG_INFINITY, f64::max);
    let cfg = ContinuationConfig {
        lambda_max: lambda_top,
        ..s.continuation()
    };
    let br = trace_branch(&s.problem, &s.eig, &cfg)?;
    let mut points = Vec::with_capacity(rows.len() - 1);
    let mut worst_rel = 0.0f64;
    for row in &rows[1..] {
        let pt = solution_at(&s.problem, &br, row.lambda, &cfg)?;
        worst_rel = worst_rel.max((pt.sup_norm - row.sup_norm).abs() / row.sup_norm.max(1e-300));
        points.push(pt);
    }
    reports.push(BoundReport::new("roundtrip", 1e-6 - worst_rel).with("max_relative_sup_diff", worst_rel));

    reports.extend(verify_points(
        &s.problem,
        &points,
        &s.bound_context(),
        Some(&s.covering),
    )?);

    let trials = trials.unwrap_or(s.cfg.trials);
    let mut nonex = Vec::new();
    for (k, f) in [0.5, 0.9, 1.0].into_iter().enumerate() {
        nonex.push(check_nonexistence(
            &s.problem,
            &s.eig,
            f * s.eig.lambda1,
            trials,
            s.cfg.seed.wrapping_add(k as u64),
        )?);
    }
    reports.push(BoundReport::worst("nonexistence", nonex));

    let all = reports.iter().all(|r| r.holds);
    let summary = json!({
        "branch": branch.display().to_string(),
        "points": points.len(),
        "all_hold": all,
        "reports": reports,
    });
    print!("{}", write_json(&s.out("verify.json"), &summary)?);
    Ok(if all { EXIT_OK } else { EXIT_VIOLATION })
}
