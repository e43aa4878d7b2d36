mod common;

use sfde::coefficients::{CoefficientSet, Diffusion, Field, Functional, TimeProfile};
use sfde::mittag_leffler::ml_eval;
use sfde::model::{InitialSegment, ModelSpec};
use sfde::noise::LevySpec;
use sfde::operator::SectorialSpec;
use sfde::periodicity::{
    analyze, coefficient_process_gap, coefficient_sap_gap, distribution_gap, mean_square_gap, truncated_moment_bound,
    AnalysisConfig, DistributionGapOptions,
};
use sfde::segment::SegmentBuf;
use sfde::solver::{run_ensemble, Ensemble, SolverConfig};

fn scalar_model(noise: LevySpec, coefficients: CoefficientSet, phi0: f64) -> ModelSpec {
    ModelSpec {
        sectorial: SectorialSpec::scalar(1.5, -1.0, -1.0, 0.2, 1.0, 2.05),
        noise,
        tau: 0.5,
        omega: 1.0,
        phi: InitialSegment::Constant(vec![phi0]),
        coefficients,
    }
}

fn s(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    ml_eval(1.5, 1.0, -t.powf(1.5)).unwrap()
}

/// `sup_theta |(S(t + omega + theta) - S(t + theta)) phi0|` on the grid.
fn free_gap(t: f64, omega: f64, step: f64, m: usize, phi0: f64) -> f64 {
    (0..=m)
        .map(|k| {
            let at = t - (m - k) as f64 * step;
            // before time 0 the path is the constant history phi0
            let x = |u: f64| if u < 0.0 { phi0 } else { phi0 * s(u) };
            (x(at + omega) - x(at)).abs()
        })
        .fold(0.0, f64::max)
}

fn free_ensemble(paths: usize) -> Ensemble {
    let m = scalar_model(LevySpec::wiener(vec![1.0]), CoefficientSet::zero(0.5, 1.0, 1.0), 1.5);
    run_ensemble(&m, &SolverConfig::new(0.125, 12.0), paths, 3).unwrap()
}

#[test]
fn zero_period_gives_zero_gaps() {
    let m = scalar_model(
        LevySpec::wiener(vec![1.0]).with_atom(vec![0.5], 1.0),
        {
            let mut c = CoefficientSet::zero(0.5, 0.1, 1.0);
            c.f = Field::linear(TimeProfile::constant(0.2), Functional::Now);
            c.g = Diffusion::linear(TimeProfile::constant(0.2), Functional::Now, vec![1.0]);
            c
        },
        1.0,
    );
    let ens = run_ensemble(&m, &SolverConfig::new(0.125, 6.0), 40, 8).unwrap();
    for t in [1.0, 3.0, 5.0] {
        assert_eq!(mean_square_gap(&ens, t, 0.0).unwrap().estimate, 0.0);
        assert_eq!(truncated_moment_bound(&ens, t, 0.0).unwrap().estimate, 0.0);
        let shared = DistributionGapOptions {
            shared: true,
            bootstrap: 20,
            ..Default::default()
        };
        assert_eq!(distribution_gap(&ens, t, 0.0, &shared).unwrap().estimate, 0.0);
        let disjoint = DistributionGapOptions {
            bootstrap: 20,
            ..Default::default()
        };
        let g = distribution_gap(&ens, t, 0.0, &disjoint).unwrap();
        assert!(g.estimate > 0.0 && g.estimate <= 2.0 && g.stderr.is_finite(), "{g:?}");
    }
}

#[test]
fn free_evolution_gaps_are_closed_form() {
    let ens = free_ensemble(6);
    let m = ens.history();
    for t in [1.0, 2.5, 5.0, 10.0] {
        let exact = free_gap(t, 1.0, 0.125, m, 1.5);
        let ms = mean_square_gap(&ens, t, 1.0).unwrap();
        assert!((ms.estimate - exact * exact).abs() <= 1e-10 * exact.max(1.0), "t {t}");
        assert!(ms.stderr <= 1e-12);
        let trunc = truncated_moment_bound(&ens, t, 1.0).unwrap();
        assert!((trunc.estimate - exact.min(2.0)).abs() <= 1e-10);
        let bl = distribution_gap(&ens, t, 1.0, &DistributionGapOptions::default()).unwrap();
        assert!((bl.estimate - exact.min(2.0)).abs() <= 1e-10, "t {t}: {} vs {exact}", bl.estimate);
        assert!(bl.stderr <= 1e-12);
    }
}

#[test]
fn coefficient_gap_of_decaying_profile() {
    let mut c = CoefficientSet::zero(0.5, 1.0, 1.0);
    c.f = Field::linear(TimeProfile::constant(0.0).with_decay(1.0, 1.0), Functional::Now);
    let model = scalar_model(LevySpec::wiener(vec![1.0]), c, 1.0);
    let probes: Vec<SegmentBuf> = [0.5, -2.0, 1.25].iter().map(|&v| SegmentBuf::constant(&[v], 5, 0.125)).collect();
    let omega = 1.0;
    let mut prev = f64::INFINITY;
    for t in [0.0, 0.5, 2.0, 7.0, 30.0] {
        let gap = coefficient_sap_gap(&model, t, omega, &probes).unwrap().f;
        let exact = (1.0 / (1.0 + t) - 1.0 / (1.0 + t + omega)).powi(2) * 4.0;
        assert!((gap - exact).abs() <= 1e-14, "t {t}: {gap} vs {exact}");
        assert!(gap < prev);
        prev = gap;
    }
}

#[test]
fn periodic_preset_has_exactly_zero_coefficient_gaps() {
    let r = common::preset("periodic.toml");
    let probes: Vec<SegmentBuf> = [0.3, -1.0, 2.0].iter().map(|&v| SegmentBuf::constant(&[v], 5, 0.125)).collect();
    for t in [0.0, 0.25, 5.0, 80.0] {
        let gaps = coefficient_sap_gap(&r.model, t, 1.0, &probes).unwrap();
        assert_eq!(gaps.to_array(), [0.0; 5], "t {t}");
    }
    let decaying = common::preset("sap_contraction.toml");
    let gaps = coefficient_sap_gap(&decaying.model, 5.0, 1.0, &probes).unwrap();
    assert!(gaps.to_array().iter().all(|&g| g > 0.0));
}

#[test]
fn deterministic_convolution_of_periodic_forcing_is_asymptotically_periodic() {
    let mut c = CoefficientSet::zero(0.5, 0.0, 1.0);
    c.f = Field::custom("forcing", |t, _| {
        vec![(2.0 * std::f64::consts::PI * t).cos() + 2.0 / (1.0 + t)]
    });
    let model = scalar_model(LevySpec::wiener(vec![0.0]), c, 1.0);
    let ens = run_ensemble(&model, &SolverConfig::new(0.125, 41.0), 1, 0).unwrap();
    let gaps: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&t| mean_square_gap(&ens, t, 1.0).unwrap().estimate)
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 0.05 * gaps[0], "{gaps:?}");
}

#[test]
fn estimator_ordering_and_bounds_on_a_noisy_model() {
    let r = common::preset("sap_contraction.toml");
    let cfg = SolverConfig {
        horizon: 21.0,
        ..r.solver.clone()
    };
    let ens = run_ensemble(&r.model, &cfg, 200, 5).unwrap();
    let analysis = AnalysisConfig {
        checkpoints: vec![2.0, 5.0, 10.0, 20.0],
        ..Default::default()
    };
    let report = analyze(&ens, 1.0, &analysis).unwrap();
    for (k, o) in report.ordering().iter().enumerate() {
        assert!(o.bl_below_trunc && o.trunc_below_ms, "checkpoint {k}: {o:?}");
        assert!(report.trunc_bounds[k].estimate <= 2.0);
    }
    // coefficient outputs inherit the decay of the input gaps
    let early = coefficient_process_gap(&r.model, &ens, 2.0, 1.0).unwrap();
    let late = coefficient_process_gap(&r.model, &ens, 20.0, 1.0).unwrap();
    for (a, b) in early.to_array().iter().zip(late.to_array()) {
        assert!(b.estimate < a.estimate, "{} -> {}", a.estimate, b.estimate);
    }
}
