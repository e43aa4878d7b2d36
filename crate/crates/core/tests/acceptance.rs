//! Acceptance gate: one PASS/FAIL line per criterion with its runtime budget.
//! Runs as a plain binary so the summary is always printed.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::bl_grid::{clouds, grid_oracle, random_instance, POINT_DIM};
use common::{config_path, preset};
use sfde::bl::{bl_distance_lp, bl_distance_points, bl_distance_weighted, WeightedCloud, SUPPORT_CAP};
use sfde::coefficients::CoefficientSet;
use sfde::mittag_leffler::ml_eval;
use sfde::model::{check_contraction, kappa1, kappa2, ContractionVariant, InitialSegment, ModelSpec};
use sfde::noise::{LevySpec, PathSeed};
use sfde::operator::{envelope_study, SectorialSpec};
use sfde::periodicity::{analyze, coefficient_sap_gap, AnalysisConfig, PeriodicityReport, Verdict};
use sfde::quadrature::gauss_kronrod;
use sfde::segment::SegmentBuf;
use sfde::solver::{Scheme, Solver, SolverConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn criterion_1() -> Outcome {
    let mut worst_exp = 0.0f64;
    for i in 0..=11_000 {
        let x = -10.0 + i as f64 * 1e-3;
        worst_exp = worst_exp.max((ml_eval(1.0, 1.0, x).map_err(err)? - x.exp()).abs());
    }
    let mut worst_cos = 0.0f64;
    for i in 0..=10_000 {
        let t = i as f64 * 1e-3;
        worst_cos = worst_cos.max((ml_eval(2.0, 1.0, -t * t).map_err(err)? - t.cos()).abs());
    }
    ensure(worst_exp <= 1e-12, format!("max |E_1(x) - e^x| = {worst_exp:.2e} > 1e-12"))?;
    ensure(worst_cos <= 1e-10, format!("max |E_2(-t^2) - cos t| = {worst_cos:.2e} > 1e-10"))?;
    Ok(format!("max |E_1 - exp| = {worst_exp:.1e}, max |E_2 - cos| = {worst_cos:.1e}"))
}

fn criterion_2() -> Outcome {
    let mut detail = Vec::new();
    for alpha in [1.25, 1.5, 1.75] {
        let spec = SectorialSpec::scalar(alpha, -1.0, -1.0, 0.1, 1.0, 1.0);
        let s = envelope_study(&spec, 100.0, 2001).map_err(err)?;
        ensure(s.base.is_finite() && s.stable, format!("alpha {alpha}: {s:?}"))?;
        ensure(!s.divergent, format!("alpha {alpha} flagged divergent: {s:?}"))?;
        detail.push(format!("C({alpha}) = {:.4} (refined {:.4})", s.base, s.refined));
    }
    let spec = SectorialSpec::scalar(2.0, -1.0, -1.0, 0.1, 1.0, 1.0);
    let s = envelope_study(&spec, 100.0, 2001).map_err(err)?;
    ensure(s.divergent, format!("alpha 2 not flagged divergent: {s:?}"))?;
    detail.push(format!("alpha 2 divergent ({:.0} -> {:.0})", s.refined, s.extended));
    Ok(detail.join(", "))
}

/// `int_0^inf (1 + a t^alpha)^{-power} dt`, with the tail mapped to `[0, 1]`.
fn kappa_quadrature(alpha: f64, a: f64, power: i32) -> f64 {
    let head = gauss_kronrod(|t| (1.0 + a * t.powf(alpha)).powi(-power), 0.0, 1.0, 1e-15, 1e-14).unwrap();
    let p = 1.0 / (alpha - 1.0);
    let tail = gauss_kronrod(
        |v: f64| {
            if v == 0.0 {
                return if power == 1 { p / a } else { 0.0 };
            }
            p * v.powf(-p - 1.0) * (1.0 + a * v.powf(-p * alpha)).powi(-power)
        },
        0.0,
        1.0,
        1e-15,
        1e-14,
    )
    .unwrap();
    head.value + tail.value
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for alpha in [1.1, 1.25, 1.5, 1.75, 1.9, 2.0] {
        for mu in [-0.5, -1.0, -4.0] {
            let k = kappa1(alpha, mu).map_err(err)?;
            worst = worst.max((k - kappa_quadrature(alpha, -mu, 1)).abs());
        }
    }
    ensure(worst <= 1e-8, format!("kappa1 vs quadrature: {worst:.2e}"))?;
    let k1 = kappa1(2.0, -1.0).map_err(err)?;
    ensure((k1 - PI / 2.0).abs() <= 1e-10, format!("kappa1(2,-1) = {k1}"))?;
    let k2 = kappa2(2.0, -1.0).map_err(err)?.quadrature_value;
    ensure((k2 - PI / 4.0).abs() <= 1e-10, format!("kappa2(2,-1) = {k2}"))?;
    Ok(format!("max kappa1 deviation {worst:.1e} over 18 pairs"))
}

fn criterion_4() -> Outcome {
    let model = ModelSpec {
        sectorial: SectorialSpec::scalar(1.5, -1.0, -1.0, 0.2, 1.0, 2.05),
        noise: LevySpec::wiener(vec![1.0]).with_atom(vec![0.3], 1.0).with_atom(vec![2.0], 0.5),
        tau: 0.5,
        omega: 1.0,
        phi: InitialSegment::Constant(vec![0.8]),
        coefficients: CoefficientSet::zero(0.5, 1.0, 1.0),
    };
    let mut worst = 0.0f64;
    for scheme in [Scheme::TimeStep, Scheme::Picard] {
        let cfg = SolverConfig::new(0.125, 10.0).with_scheme(scheme);
        let solver = Solver::new(&model, &cfg).map_err(err)?;
        let noise = solver.sample_noise(PathSeed::new(1, 2)).map_err(err)?;
        let (traj, _) = solver.run(&noise).map_err(err)?;
        for (j, t) in traj.times().iter().enumerate() {
            let exact = 0.8 * ml_eval(1.5, 1.0, -t.powf(1.5)).map_err(err)?;
            worst = worst.max((traj.at_step(j)[0] - exact).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max deviation {worst:.2e}"))?;
    Ok(format!("max |x - S(t) phi(0)| = {worst:.1e} for both schemes"))
}

fn criterion_5() -> Outcome {
    let r = preset("linear.toml");
    let solve = |step: f64| -> Result<Vec<f64>, String> {
        let cfg = SolverConfig {
            step,
            ..r.solver.clone()
        };
        let solver = Solver::new(&r.model, &cfg).map_err(err)?;
        let traj = solver
            .simulate(&solver.sample_noise(PathSeed::new(0, 0)).map_err(err)?)
            .map_err(err)?;
        Ok((0..=traj.n_steps).map(|j| traj.at_step(j)[0]).collect())
    };
    let steps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let h_ref = steps[2] / 16.0;
    let reference = solve(h_ref)?;
    let mut errors = Vec::new();
    for h in steps {
        let x = solve(h)?;
        let stride = (h / h_ref).round() as usize;
        errors.push(
            x.iter()
                .enumerate()
                .map(|(j, v)| (v - reference[j * stride]).abs())
                .fold(0.0, f64::max),
        );
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure(
        orders.iter().all(|&p| p >= 0.9),
        format!("errors {}, orders {orders:.3?}", sci(&errors)),
    )?;
    Ok(format!("errors {}, orders {orders:.3?}", sci(&errors)))
}

fn criterion_6() -> Outcome {
    let r = preset("sap_contraction.toml");
    let cfg = r.solver.clone().with_scheme(Scheme::Picard);
    let solver = Solver::new(&r.model, &cfg).map_err(err)?;
    let ens = solver.run_ensemble(100, 6).map_err(err)?;
    let d = ens.mean_picard_diffs();
    ensure(d.len() >= 5, format!("only {} iterations recorded", d.len()))?;
    let decreasing = d[..5].windows(2).all(|w| w[1] < w[0]);
    let ratio = d[4] / d[0];
    ensure(decreasing && ratio < 1e-2, format!("mean D_1..5 = {}", sci(&d[..5])))?;
    Ok(format!("mean D_1 = {:.2e}, D_5/D_1 = {ratio:.2e}", d[0]))
}

fn sap_run() -> Result<PeriodicityReport, String> {
    let r = preset("sap_contraction.toml");
    let solver = Solver::new(&r.model, &r.solver).map_err(err)?;
    let ens = solver.run_ensemble(2000, r.config.run.seed).map_err(err)?;
    let cfg = AnalysisConfig {
        checkpoints: vec![5.0, 10.0, 20.0, 40.0, 80.0],
        ..r.analysis.clone()
    };
    analyze(&ens, r.model.omega, &cfg).map_err(err)
}

fn criterion_7(report: &PeriodicityReport) -> Outcome {
    let g = &report.ms_gaps;
    let (first, last) = (g[0], g[g.len() - 1]);
    // 2-SE band of gap(80) strictly below the band of 0.25 gap(5)
    ensure(
        last.upper(2.0) < 0.25 * first.lower(2.0),
        format!("gap(5) = {first:?}, gap(80) = {last:?}"),
    )?;
    ensure(report.ms_verdict == Verdict::Pass, format!("verdict {}", report.ms_verdict))?;
    let periodic = preset("periodic.toml");
    let probes: Vec<SegmentBuf> = [1.0, -0.5, 2.0]
        .iter()
        .map(|&v| SegmentBuf::constant(&[v], periodic.model.tau as usize * 8 + 1, 0.125))
        .collect();
    for &t in &report.t_checkpoints {
        let gaps = coefficient_sap_gap(&periodic.model, t, periodic.model.omega, &probes).map_err(err)?;
        ensure(gaps.to_array() == [0.0; 5], format!("periodic preset gap at t = {t}: {gaps:?}"))?;
    }
    Ok(format!(
        "ms gap {:.2e} -> {:.2e} (ratio {:.1e}), verdict {}, periodic preset gaps 0",
        first.estimate,
        last.estimate,
        last.estimate / first.estimate,
        report.ms_verdict
    ))
}

fn criterion_8(report: &PeriodicityReport) -> Outcome {
    let ordering = report.ordering();
    for o in &ordering {
        ensure(o.bl_below_trunc && o.trunc_below_ms, format!("{o:?}"))?;
    }
    let bl = &report.bl_gaps;
    Ok(format!(
        "{} checkpoints ordered; d_BL {:.2e} -> {:.2e}",
        ordering.len(),
        bl[0].estimate,
        bl[bl.len() - 1].estimate
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let expected = grid_oracle(&inst);
        let (pp, pc, qp, qc) = clouds(&inst);
        let p = WeightedCloud {
            points: &pp,
            point_dim: POINT_DIM,
            counts: Some(&pc),
            dim: 1,
        };
        let q = WeightedCloud {
            points: &qp,
            point_dim: POINT_DIM,
            counts: Some(&qc),
            dim: 1,
        };
        let lp = bl_distance_lp(&p, &q).map_err(err)?;
        let tr = bl_distance_weighted(&p, &q, SUPPORT_CAP).map_err(err)?;
        worst = worst.max((lp - expected).abs()).max((tr - expected).abs());
    }
    ensure(worst <= 2e-3, format!("LP vs grid oracle: {worst:.2e}"))?;
    let mut axioms = 0.0f64;
    for _ in 0..100 {
        let mut cloud = || -> Vec<f64> {
            let n = rng.random_range(1..=20);
            (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect()
        };
        let (a, b, c) = (cloud(), cloud(), cloud());
        let d = |x: &[f64], y: &[f64]| bl_distance_points(x, y, 3, 1);
        let ab = d(&a, &b).map_err(err)?;
        let bc = d(&b, &c).map_err(err)?;
        let ac = d(&a, &c).map_err(err)?;
        ensure(d(&a, &a).map_err(err)? == 0.0, "d(P, P) != 0")?;
        ensure((ab - d(&b, &a).map_err(err)?).abs() <= 1e-12, "asymmetric")?;
        ensure(ab <= 2.0 && ac <= 2.0 && bc <= 2.0, "exceeds 2")?;
        axioms = axioms.max(ac - ab - bc);
    }
    ensure(axioms <= 1e-9, format!("triangle violated by {axioms:.2e}"))?;
    Ok(format!("max LP deviation {worst:.1e} on 200 instances, axioms hold on 100 triples"))
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut hashes = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = tmp.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_sfde"))
            .args(["simulate", "--config"])
            .arg(config_path("sap_contraction.toml"))
            .args(["--paths", "500", "--seed", "1234", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).into_owned())?;
        let bytes = std::fs::read(out.join("trajectories.csv")).map_err(err)?;
        hashes.push(sfde::io::sha256_hex(&bytes));
    }
    ensure(hashes.windows(2).all(|w| w[0] == w[1]), format!("hashes differ: {hashes:?}"))?;
    Ok(format!("500 paths at 1/4/8 workers, sha256 {}", &hashes[0][..16]))
}

fn criterion_11() -> Outcome {
    let pass = check_contraction(&preset("sap_contraction.toml").model).map_err(err)?;
    let fail = check_contraction(&preset("failing.toml").model).map_err(err)?;
    ensure(pass.passes(ContractionVariant::PaperLiteral), format!("passing preset {pass:?}"))?;
    ensure(
        fail.paper_literal > 1.0 && fail.quadrature_exact > 1.0,
        format!("failing preset {fail:?}"),
    )?;
    let k = pass.kappa2;
    ensure(
        (k.paper_value - k.quadrature_value).abs() > 1e-6,
        "kappa2 variants coincide",
    )?;
    Ok(format!(
        "Theta {:.4} / {:.4} (pass), {:.1} / {:.1} (fail); kappa2 {:.6} vs {:.6}",
        pass.paper_literal, pass.quadrature_exact, fail.paper_literal, fail.quadrature_exact, k.paper_value,
        k.quadrature_value
    ))
}

struct Line {
    id: usize,
    name: &'static str,
    budget: Duration,
    elapsed: Duration,
    outcome: Outcome,
}

fn timed(id: usize, name: &'static str, budget_secs: u64, f: impl FnOnce() -> Outcome) -> Line {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    Line {
        id,
        name,
        budget: Duration::from_secs(budget_secs),
        elapsed: start.elapsed(),
        outcome,
    }
}

fn main() {
    let mut lines = vec![
        timed(1, "Mittag-Leffler identities", 1, criterion_1),
        timed(2, "decay envelope", 10, criterion_2),
        timed(3, "kappa constants", 5, criterion_3),
        timed(4, "zero-coefficient solver", 1, criterion_4),
        timed(5, "deterministic convergence order", 30, criterion_5),
        timed(6, "Picard decay", 120, criterion_6),
    ];
    let start = Instant::now();
    let report = catch_unwind(sap_run).unwrap_or_else(|_| Err("SAP run panicked".into()));
    let run_time = start.elapsed();
    let mut l7 = timed(7, "square-mean SAP", 600, || report.as_ref().map_err(Clone::clone).and_then(criterion_7));
    l7.elapsed += run_time;
    let l8 = timed(8, "estimator ordering", 600, || report.as_ref().map_err(Clone::clone).and_then(criterion_8));
    lines.push(l7);
    lines.push(Line {
        elapsed: l8.elapsed + run_time,
        ..l8
    });
    lines.push(timed(9, "BL LP exactness", 60, criterion_9));
    lines.push(timed(10, "determinism across workers", 120, criterion_10));
    lines.push(timed(11, "contraction checker", 1, criterion_11));

    println!();
    let mut failed = 0;
    for l in &lines {
        let over = l.elapsed > l.budget;
        let ok = l.outcome.is_ok() && !over;
        if !ok {
            failed += 1;
        }
        let detail = match &l.outcome {
            Ok(d) => d.clone(),
            Err(e) => e.clone(),
        };
        let budget = if over { " OVER BUDGET" } else { "" };
        println!(
            "criterion {:>2} {:<32} {}  [{:.2}s / {}s{budget}]  {detail}",
            l.id,
            l.name,
            if ok { "PASS" } else { "FAIL" },
            l.elapsed.as_secs_f64(),
            l.budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
