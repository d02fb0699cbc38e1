//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nldisp::continuation::{solution_at, theorem1_window, trace_branch, APriori, Branch, ContinuationConfig};
use nldisp::geometry::{build_grid, cover, Domain, QuadratureGrid, QuadratureRule};
use nldisp::logistic::LogisticProblem;
use nldisp::model::{check_hypotheses, HypothesisReport, KernelSpec, Poly, WeightForm, WeightSpec};
use nldisp::operator::{DiscreteOperator, PrincipalEigenpair};
use nldisp::regularized::limit_procedure;
use nldisp::verification::{
    check_nonexistence, fd_jacobian, oracle_fixed_point, verify_points, BoundContext, OracleOutcome, BOUND_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} {name:<28} {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn grid(rule: QuadratureRule, n: usize) -> QuadratureGrid {
    build_grid(&Domain::unit_interval(), rule, n).unwrap()
}

fn dip_form() -> WeightForm {
    WeightForm::PolynomialDip {
        h: Poly(vec![1.0]),
        g: Poly(vec![1.0]),
        points: vec![vec![0.5]],
        exponents: vec![0.4],
        level: 2.0,
    }
}

struct Preset {
    name: &'static str,
    kernel: KernelSpec,
    form: WeightForm,
    grid: QuadratureGrid,
    lambda_span: f64,
}

fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "constant",
            kernel: KernelSpec::Constant(1.0),
            form: WeightForm::Constant(1.0),
            grid: grid(QuadratureRule::Midpoint, 32),
            lambda_span: 2.0,
        },
        Preset {
            name: "rank_one",
            kernel: KernelSpec::RankOne(Poly(vec![1.0, 1.0])),
            form: WeightForm::Separable {
                g: Poly(vec![1.0, 0.5]),
                h: Poly(vec![1.0]),
            },
            grid: grid(QuadratureRule::Trapezoid, 65),
            lambda_span: 1.0,
        },
        Preset {
            name: "gaussian",
            kernel: KernelSpec::Gaussian { length: 1.0 },
            form: WeightForm::Constant(1.0),
            grid: grid(QuadratureRule::Trapezoid, 129),
            lambda_span: 2.0,
        },
        Preset {
            name: "polynomial_dip",
            kernel: KernelSpec::Gaussian { length: 1.0 },
            form: dip_form(),
            grid: grid(QuadratureRule::Trapezoid, 129),
            lambda_span: 1.0,
        },
    ]
}

struct Setup {
    problem: LogisticProblem,
    eig: PrincipalEigenpair,
    hyp: HypothesisReport,
    cfg: ContinuationConfig,
}

const R: f64 = 0.25;

fn setup(preset: &Preset, p: f64) -> Setup {
    let weight = WeightSpec::new(preset.form.clone(), p).unwrap();
    let problem = LogisticProblem::new(&preset.kernel, &weight, &preset.grid).unwrap();
    let eig = problem.op.principal_eigenpair().unwrap();
    let hyp = check_hypotheses(&preset.kernel, &weight, &preset.grid, 0.1, R).unwrap();
    let covering = cover(&Domain::unit_interval(), &preset.grid, R).unwrap();
    let cfg = ContinuationConfig {
        lambda_max: eig.lambda1 * (1.0 + preset.lambda_span),
        a_priori: hyp.q2.holds.then_some(APriori {
            m: covering.m,
            sigma: hyp.q2.sigma,
        }),
        ..Default::default()
    };
    Setup { problem, eig, hyp, cfg }
}

fn trace(s: &Setup) -> Branch {
    trace_branch(&s.problem, &s.eig, &s.cfg).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn criterion_01_rank_one_eigenvalues() {
    let t = Instant::now();
    let mut worst_const = 0.0f64;
    for rule in [
        QuadratureRule::Midpoint,
        QuadratureRule::Trapezoid,
        QuadratureRule::GaussLegendre,
    ] {
        for n in [4usize, 5, 8, 13, 32, 100] {
            let op = DiscreteOperator::assemble(&KernelSpec::Constant(1.0), &grid(rule, n)).unwrap();
            worst_const = worst_const.max((op.principal_eigenpair().unwrap().lambda1 - 1.0).abs());
        }
    }
    let kernel = KernelSpec::RankOne(Poly(vec![1.0, 1.0]));
    let errs: Vec<f64> = [25usize, 50, 100, 200]
        .iter()
        .map(|&n| {
            let op = DiscreteOperator::assemble(&kernel, &grid(QuadratureRule::Trapezoid, n)).unwrap();
            (op.principal_eigenpair().unwrap().lambda1 - 7.0 / 3.0).abs()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let elapsed = t.elapsed();
    let pass =
        worst_const <= 1e-10 && errs[3] < 1e-4 && orders.iter().all(|o| *o >= 1.9) && elapsed < Duration::from_secs(1);
    report(
        1,
        "rank-one eigenvalues",
        pass,
        format!(
            "const err {worst_const:.1e}, (1+x)(1+y) err {:.2e} at 200, orders {orders:.3?}, {elapsed:.2?}",
            errs[3]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_constant_branch() {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [0.5, 1.0, 2.0] {
        let t = Instant::now();
        let g = grid(QuadratureRule::Midpoint, 32);
        let w = WeightSpec::constant(1.0, p).unwrap();
        let pr = LogisticProblem::new(&KernelSpec::Constant(1.0), &w, &g).unwrap();
        let eig = pr.op.principal_eigenpair().unwrap();
        let cfg = ContinuationConfig {
            lambda_max: 3.0,
            ..Default::default()
        };
        let b = trace_branch(&pr, &eig, &cfg).unwrap();
        let mut worst = 0.0f64;
        for pt in &b.points {
            let exact = (pt.lambda - 1.0).powf(1.0 / p);
            worst = worst.max(pt.u.iter().fold(0.0f64, |m, v| m.max((v - exact).abs())));
        }
        let top = b.points.last().unwrap().lambda;
        let elapsed = t.elapsed();
        let ok = worst <= 1e-8
            && (top - 3.0).abs() < 1e-12
            && b.points.iter().all(|q| q.lambda > 1.0 && q.lambda <= 3.0)
            && elapsed < Duration::from_secs(5);
        pass &= ok;
        detail.push(format!("p={p}: err {worst:.1e}, {} pts, {elapsed:.2?}", b.points.len()));
    }
    report(2, "constant-coefficient branch", pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_03_nonexistence() {
    let t = Instant::now();
    let mut found = 0.0;
    let mut pass = true;
    for preset in presets()
        .into_iter()
        .filter(|p| p.name == "constant" || p.name == "gaussian")
    {
        for p in [0.5, 1.0, 2.0] {
            let s = setup(&preset, p);
            for frac in [0.5, 0.9, 1.0] {
                let rep = check_nonexistence(&s.problem, &s.eig, frac * s.eig.lambda1, 20, 17).unwrap();
                found += rep.context["found"];
                pass &= rep.holds;
            }
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report(
        3,
        "nonexistence below lambda1",
        pass,
        format!("{found} positive solutions over 20 starts x 3 lambdas x 3 p x 2 kernels, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_a_priori_bounds() {
    let mut pass = true;
    let mut detail = Vec::new();
    for preset in presets() {
        for p in [0.5, 1.0, 2.0] {
            let s = setup(&preset, p);
            let b = trace(&s);
            let ctx = BoundContext {
                lambda1: s.eig.lambda1,
                p,
                sigma_local: s.hyp.q2.holds.then_some(s.hyp.q2.sigma),
                sigma_global: s.hyp.q2pp.holds.then_some(s.hyp.q2pp.sigma),
                oscillation: s.hyp.oscillation,
            };
            let covering = cover(&Domain::unit_interval(), &preset.grid, R).unwrap();
            let reports = verify_points(&s.problem, &b.points, &ctx, Some(&covering)).unwrap();
            for name in ["lemma9", "lemma10", "cor1"] {
                let r = reports.iter().find(|r| r.name == name).unwrap();
                if !r.applicable {
                    continue;
                }
                let admissible = name != "lemma9" || b.points.iter().all(|q| q.diagnostics.gamma_phi_sup < 1.0);
                let ok = r.margin >= -BOUND_TOL && admissible;
                pass &= ok;
                if !ok {
                    detail.push(format!("{} p={p} {name} margin {:.3e}", preset.name, r.margin));
                }
            }
            detail.push(format!("{} p={p}: {} pts", preset.name, b.points.len()));
        }
    }
    report(4, "a priori bounds", pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_05_bifurcation_point() {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for preset in presets() {
        for p in [0.5, 1.0, 2.0] {
            let s = setup(&preset, p);
            let b = trace(&s);
            let err = b
                .bifurcation_estimate()
                .map_or(f64::INFINITY, |e| (e - s.eig.lambda1).abs());
            worst = worst.max(err);
            if err > 1e-4 {
                pass = false;
                detail.push(format!("{} p={p}: {err:.2e}", preset.name));
            }
        }
    }
    report(
        5,
        "bifurcation point recovery",
        pass,
        format!("worst |est - lambda1| {worst:.2e} {}", detail.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_06_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for preset in presets() {
        for p in [0.5, 1.0, 2.0] {
            let s = setup(&preset, p);
            for _ in 0..10 {
                let u: Vec<f64> = (0..s.problem.len()).map(|_| rng.random_range(0.1..2.0)).collect();
                let lambda = s.eig.lambda1 * rng.random_range(1.0..2.0);
                let j = s.problem.jacobian(lambda, &u).unwrap();
                let fd = fd_jacobian(&s.problem, lambda, &u, 1e-6).unwrap();
                worst = worst.max((&j - &fd).amax() / j.amax());
            }
        }
    }
    let pass = worst <= 1e-6;
    report(
        6,
        "jacobian vs finite differences",
        pass,
        format!("worst relative error {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_existence_window() {
    let t = Instant::now();
    let constant = setup(&presets().remove(0), 1.0);
    let const_window =
        theorem1_window(constant.eig.lambda1, constant.hyp.q2pp.sigma, constant.hyp.oscillation).unwrap();
    let const_ok = constant.hyp.oscillation == 0.0 && const_window == (constant.eig.lambda1, f64::INFINITY);

    let preset = Preset {
        name: "polynomial_dip",
        kernel: KernelSpec::Gaussian { length: 1.0 },
        form: dip_form(),
        grid: grid(QuadratureRule::Trapezoid, 128),
        lambda_span: 0.0,
    };
    let mut s = setup(&preset, 1.0);
    let osc = s.hyp.oscillation;
    let sigma = s.hyp.q2pp.sigma;
    let (lo, hi) = theorem1_window(s.eig.lambda1, sigma, osc).unwrap();
    s.cfg.lambda_max = hi;
    let b = trace(&s);
    let mono = b.monotone_points();
    let reached = (mono.last().unwrap().lambda - hi).abs() < 1e-12;
    let mut interior_ok = true;
    for k in 1..10 {
        let lambda = lo + (hi - lo) * k as f64 / 10.0;
        interior_ok &= solution_at(&s.problem, &b, lambda, &s.cfg)
            .map(|pt| pt.diagnostics.min_u > 0.0)
            .unwrap_or(false);
    }
    let elapsed = t.elapsed();
    let pass = const_ok && osc > 0.0 && s.hyp.q2pp.holds && reached && interior_ok && elapsed < Duration::from_secs(10);
    report(
        7,
        "existence window",
        pass,
        format!(
            "constant [Q]={} window ({:.4}, {}); dip [Q]={osc:.4} sigma={sigma:.4} window ({lo:.4}, {hi:.4}), traced to {:.4}, {elapsed:.2?}",
            constant.hyp.oscillation,
            const_window.0,
            const_window.1,
            mono.last().unwrap().lambda
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_regularized_limit() {
    let t = Instant::now();
    let s = setup(&presets().remove(3), 2.0);
    let x0 = s.hyp.q4.x0.clone().expect("maximum point");
    let weight = WeightSpec::new(dip_form(), 2.0).unwrap();
    let lambda = 2.0 * s.eig.lambda1;
    let run = limit_procedure(
        &s.problem.op,
        &s.eig,
        &weight,
        &[x0],
        lambda,
        &[4, 8, 16, 32, 64],
        &s.cfg,
        0.25,
    )
    .unwrap();
    let elapsed = t.elapsed();
    let lemma12 = run.lemma12_worst() >= -1e-8;
    let gaps = run.gaps_strictly_decreasing;
    let limit = run.limit_residual <= 1e-6;
    let pass = lemma12 && gaps && limit && elapsed < Duration::from_secs(30);
    report(
        8,
        "regularized limit",
        pass,
        format!(
            "q4 holds {}; lemma12 worst margin {:.3e}; gaps [{}] decreasing {gaps}; limit residual {:.3e} (away from x0 {:.3e}); {elapsed:.2?}",
            s.hyp.q4.holds,
            run.lemma12_worst(),
            run.cauchy_gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(", "),
            run.limit_residual,
            run.limit_residual_away
        ),
    );
    assert!(lemma12, "lemma 12 margin");
    assert!(gaps, "cauchy gaps");
    assert!(limit, "limit residual {:.3e} exceeds 1e-6", run.limit_residual);
    assert!(elapsed < Duration::from_secs(30));
}

#[test]
fn criterion_09_solver_cross_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut skipped = Vec::new();
    for preset in presets() {
        for p in [0.5, 1.0, 2.0] {
            let s = setup(&preset, p);
            let b = trace(&s);
            for frac in [0.3, 0.7] {
                let lambda = s.eig.lambda1 * (1.0 + frac * preset.lambda_span);
                let Ok(newton) = solution_at(&s.problem, &b, lambda, &s.cfg) else {
                    skipped.push(format!("{} p={p} newton", preset.name));
                    continue;
                };
                let u0: Vec<f64> = (0..s.problem.len()).map(|_| rng.random_range(0.5..1.5)).collect();
                match oracle_fixed_point(&s.problem, &s.eig, lambda, &u0, 0.5, 50_000).unwrap() {
                    OracleOutcome::Converged { u, .. } => {
                        worst = worst.max(sup_diff(&u, &newton.u));
                        compared += 1;
                    }
                    _ => skipped.push(format!("{} p={p} oracle", preset.name)),
                }
            }
        }
    }
    let pass = worst <= 1e-8 && compared > 0;
    report(
        9,
        "newton vs fixed-point oracle",
        pass,
        format!("{compared} pairs, worst sup difference {worst:.2e}, not converged: {skipped:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_cli_determinism() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/polynomial_dip.json");
    let dir = tempfile::tempdir().unwrap();
    let run_all = || {
        let d = dir.path().to_str().unwrap();
        let c = config.to_str().unwrap();
        for cmd in ["eig", "check-hyp", "solve", "trace", "sweep-eps"] {
            let st = Command::new(env!("CARGO_BIN_EXE_nldisp"))
                .args([cmd, "--config", c, "--out-dir", d])
                .env_remove("NLDISP_OUT_DIR")
                .output()
                .unwrap();
            assert!(st.status.code().is_some_and(|c| c != 1), "{cmd}");
        }
        let branch = dir.path().join("branch.csv");
        Command::new(env!("CARGO_BIN_EXE_nldisp"))
            .args([
                "verify",
                "--config",
                c,
                "--branch",
                branch.to_str().unwrap(),
                "--out-dir",
                d,
            ])
            .env_remove("NLDISP_OUT_DIR")
            .output()
            .unwrap();
        let mut files: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let first = run_all();
    let second = run_all();
    let same = first.len() == second.len() && first.iter().zip(&second).all(|(a, b)| a == b);
    let pass = same && first.len() >= 10;
    report(10, "cli determinism", pass, format!("{} files compared", first.len()));
    assert!(pass);
}
