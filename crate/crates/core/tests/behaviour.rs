//! Module-level examples that need an ensemble, an ODE solve or a
//! null-space computation.

use nsse::criteria::{estimate_h13_constants, lyapunov_pair, number_power, VERIFY_STATES};
use nsse::girsanov::{normalize_ensemble, shifted_noise, weighted_expectation};
use nsse::hilbert::{ladder_ops, quadratures};
use nsse::lindblad::{compare_mc_density, evolve_density, stationary_kernel, steady_state};
use nsse::model::{build_model, preset, Preset};
use nsse::nsse::{ensemble_nsse, moment_bound_check, simulate_nsse};
use nsse::sse_linear::{ensemble_linear, second_moment_report, simulate_linear};
use nsse::stationary::{lyapunov_diagnostic, Observable};
use nsse::stats::mean_stderr;
use nsse::{Config, Density, Error, Model, Operator, Params, State};

fn example3(dim: usize) -> Model {
    preset(&Preset::Damped { omega: 1.0, decay: 1.0, thermal: 0.5 }, dim).unwrap()
}

#[test]
fn discretization_drift_is_first_order() {
    let m = example3(12);
    let xi = State::basis(12, 2).unwrap();
    let drift = |dt: f64| {
        let ens = ensemble_linear(&m, &xi, &Config::new(dt, 1.0).with_n_traj(200).with_seed(5)).unwrap();
        *second_moment_report(&ens).unwrap().discretization_drift.last().unwrap()
    };
    let ratio = drift(2e-3) / drift(1e-3);
    assert!((ratio - 2.0).abs() < 0.2 * 2.0, "ratio {ratio}");
}

#[test]
fn linear_ensemble_keeps_mean_squared_norm() {
    let m = example3(12);
    let xi = State::basis(12, 0).unwrap();
    let ens = ensemble_linear(&m, &xi, &Config::new(1e-3, 1.0).with_n_traj(1000).with_seed(2)).unwrap();
    let report = second_moment_report(&ens).unwrap();
    assert!(report.passed(), "{:?}", report.flagged);
    let weights: Vec<f64> = ens.iter().map(|t| t.weight()).collect();
    let w = mean_stderr(&weights).unwrap();
    assert!((w.value - 1.0).abs() <= 3.0 * w.stderr + 5e-3);
}

#[test]
fn shifted_noise_has_unit_quadratic_variation() {
    let m = example3(12);
    let tr = simulate_linear(&m, &State::basis(12, 0).unwrap(), &Config::new(1e-3, 1.0).with_seed(9), 0).unwrap();
    let db = shifted_noise(&tr, &m).unwrap();
    let tol = 5.0 / (tr.n_steps() as f64).sqrt();
    for k in db {
        let qv: f64 = k.iter().map(|x| x * x).sum();
        assert!((qv - 1.0).abs() < tol, "{qv}");
    }
}

#[test]
fn weighted_number_matches_master_equation() {
    let m = example3(12);
    let x0 = State::basis(12, 0).unwrap();
    let cfg = Config::new(1e-3, 1.0).with_n_traj(1000).with_seed(21);
    let weighted = normalize_ensemble(&ensemble_linear(&m, &x0, &cfg).unwrap()).unwrap();
    assert!(weighted.degenerate.is_empty());
    let n = ladder_ops::<f64>(12).unwrap().number;
    let est = weighted_expectation(&weighted.trajectories, |x| x.expectation(&n).unwrap().re, 1.0).unwrap();
    let rho = evolve_density(&Density::from_state(&x0).unwrap(), &m, 1.0, 1e-3).unwrap();
    let exact = rho.expectation(&n).unwrap();
    assert!((est.value - exact).abs() <= 3.0 * est.stderr + 5e-3, "{} vs {exact}", est.value);

    let direct = ensemble_nsse(&m, &x0, &cfg.with_seed(22)).unwrap();
    let d = weighted_expectation(&direct, |x| x.expectation(&n).unwrap().re, 1.0).unwrap();
    assert!(d.agrees_with(&est, 3.0, 5e-3));
    let cmp = compare_mc_density(&direct, 1.0, &rho).unwrap();
    assert!(cmp.passes(3.0, 5e-3), "{} vs {}", cmp.trace_distance, cmp.aggregate_sigma);
}

#[test]
fn single_trajectory_density_is_insufficient() {
    let m = example3(8);
    let x0 = State::basis(8, 0).unwrap();
    let tr = simulate_nsse(&m, &x0, &Config::new(1e-2, 0.5).with_seed(1), 0).unwrap();
    let rho = evolve_density(&Density::from_state(&x0).unwrap(), &m, 0.5, 1e-2).unwrap();
    let cmp = compare_mc_density(std::slice::from_ref(&tr), 0.5, &rho).unwrap();
    assert!(cmp.insufficient && !cmp.passes(3.0, 0.0));
}

#[test]
fn master_equation_integrator_is_fourth_order() {
    let m = example3(12);
    let rho0 = Density::from_state(&State::basis(12, 0).unwrap()).unwrap();
    let run = |dt: f64| evolve_density(&rho0, &m, 1.0, dt).unwrap();
    let (r1, r2, r4) = (run(0.1), run(0.05), run(0.025));
    let d12 = (r1.matrix() - r2.matrix()).norm();
    let d24 = (r2.matrix() - r4.matrix()).norm();
    let ratio = d12 / d24;
    assert!((ratio - 16.0).abs() < 8.0, "ratio {ratio}");
    assert!((nsse_oracle::richardson(d12, d24, 1) - d24).abs() < d12);
}

#[test]
fn long_evolution_reaches_steady_state() {
    let m = example3(30);
    let rho_inf = steady_state(&m).unwrap();
    let rho = evolve_density(&Density::from_state(&State::basis(30, 0).unwrap()).unwrap(), &m, 25.0, 1e-2).unwrap();
    assert!(rho.trace_distance(&rho_inf).unwrap() < 1e-6);
}

#[test]
fn steady_state_is_thermal() {
    let m = example3(30);
    let rho = steady_state(&m).unwrap();
    let n = ladder_ops::<f64>(30).unwrap().number;
    assert!((rho.expectation(&n).unwrap() - 0.5).abs() < 1e-6);
    for j in 0..=20 {
        assert!((rho.population(j + 1) / rho.population(j) - 1.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn hamiltonian_only_kernel_is_degenerate() {
    let l = ladder_ops::<f64>(6).unwrap();
    let m = build_model(6, l.number.clone(), vec![]).unwrap();
    let k = stationary_kernel(&m).unwrap();
    assert!(k.dimension >= 6);
    assert!(matches!(steady_state(&m), Err(Error::NonUniqueSteadyState { kernel_dim }) if kernel_dim == k.dimension));
}

#[test]
fn two_photon_kernel_is_reported() {
    let m = preset(&Preset::TwoPhoton { beta3: 0.0, alpha4: 1.0, alpha5: 0.0 }, 20).unwrap();
    let k = stationary_kernel(&m).unwrap();
    // pure absorption conserves parity and drains both sectors into
    // span{e_0, e_1}, whose coherences |e_0><e_1| and |e_1><e_0| are also
    // stationary: two populations plus two coherences
    assert_eq!(k.dimension, 4);
    for b in &k.basis {
        for i in 2..20 {
            for j in 0..20 {
                assert!(b[(i, j)].norm() < 1e-8 && b[(j, i)].norm() < 1e-8);
            }
        }
    }
    assert!(matches!(steady_state(&m), Err(Error::NonUniqueSteadyState { kernel_dim: 4 })));
}

#[test]
fn thermal_h13_constants_are_certified() {
    let m = example3(40);
    let n = ladder_ops::<f64>(40).unwrap().number;
    let h = estimate_h13_constants(&n, &m, None).unwrap();
    assert!(h.alpha.is_finite() && h.beta.is_finite() && h.alpha >= 0.0 && h.beta >= 0.0);
    assert_eq!(h.certified_states, h.levels + VERIFY_STATES);
}

#[test]
fn emission_dominated_oscillator_is_unbounded() {
    let params = Params::zero().with_alpha(5, 1.0);
    let m = preset(&Preset::Oscillator(params), 40).unwrap();
    let c = number_power::<f64>(40, 4).unwrap();
    assert!(matches!(estimate_h13_constants(&c, &m, None), Err(Error::UnboundedForm(_))));
    let absorbing = preset(&Preset::Oscillator(Params::zero().with_alpha(4, 1.0)), 40).unwrap();
    assert!(estimate_h13_constants(&c, &absorbing, None).is_ok());
}

#[test]
fn moment_bound_and_its_negative_control() {
    let m = example3(20);
    let n = ladder_ops::<f64>(20).unwrap().number;
    let h = estimate_h13_constants(&n, &m, None).unwrap();
    let ens = ensemble_nsse(&m, &State::basis(20, 0).unwrap(), &Config::new(1e-3, 1.0).with_n_traj(300).with_seed(4)).unwrap();
    assert!(moment_bound_check(&ens, &n, h.alpha, h.beta).unwrap().passed());
    assert!(!moment_bound_check(&ens, &n, 0.0, 0.0).unwrap().passed());

    let free = build_model(6, ladder_ops::<f64>(6).unwrap().number, vec![]).unwrap();
    let ens = ensemble_nsse(&free, &State::basis(6, 2).unwrap(), &Config::new(1e-2, 1.0).with_n_traj(4)).unwrap();
    let n6 = ladder_ops::<f64>(6).unwrap().number;
    let r = moment_bound_check(&ens, &n6, 0.5, 1.0).unwrap();
    assert!(r.lhs.iter().all(|e| (e.value - 4.0).abs() < 1e-12) && r.passed());
}

#[test]
fn lyapunov_bound_and_its_negative_control() {
    let m = example3(20);
    let n = ladder_ops::<f64>(20).unwrap().number;
    let pair = lyapunov_pair(&n, &m).unwrap();
    let ens = ensemble_nsse(&m, &State::basis(20, 0).unwrap(), &Config::new(1e-3, 1.0).with_n_traj(300).with_seed(8)).unwrap();
    let r = lyapunov_diagnostic(&ens, &pair.d, &n, pair.beta).unwrap();
    assert!(r.passed(), "{:?}", r.violations);

    let mut driven = Params::zero();
    driven.beta1 = 1.0;
    driven.alpha[0] = num_complex::Complex64::new(1.0, 0.0);
    let dm = preset(&Preset::Oscillator(driven), 20).unwrap();
    let ens = ensemble_nsse(&dm, &State::basis(20, 0).unwrap(), &Config::new(1e-3, 1.0).with_n_traj(50).with_seed(8)).unwrap();
    assert!(!lyapunov_diagnostic(&ens, &n, &n, 0.0).unwrap().passed());

    let zero = Operator::zeros(20);
    assert!(lyapunov_diagnostic(&ens, &zero, &n, 0.0).unwrap().integral.iter().all(|e| e.value == 0.0));
}

#[test]
fn measurement_preset_channels() {
    let m = preset(&Preset::Measurement { kappa: 1.0, sigma: 1.0, p2: 1.0, q2: 0.0 }, 20).unwrap();
    let (q, p) = quadratures::<f64>(20).unwrap();
    assert_eq!(m.channels()[0], q);
    assert_eq!(m.channels()[1], p);
    let two = preset(&Preset::TwoPhoton { beta3: 0.0, alpha4: 1.0, alpha5: 0.0 }, 20).unwrap();
    let l = ladder_ops::<f64>(20).unwrap();
    let a2 = &l.annihilation * &l.annihilation;
    assert_eq!(two.channel_count(), 1);
    let expected = (&a2.adjoint() * &a2).scaled_real(-0.5);
    assert!((two.drift() - &expected).max_abs() < 1e-14);
}

#[test]
fn observables_evaluate() {
    let x = State::superposition(6, &[0, 3]).unwrap();
    let l = ladder_ops::<f64>(6).unwrap();
    assert!((Observable::expectation("N", l.number.clone()).eval(&x).unwrap() - 1.5).abs() < 1e-15);
    assert!((Observable::sq_norm("N", l.number.clone()).eval(&x).unwrap() - 4.5).abs() < 1e-14);
    assert!((Observable::population(3).eval(&x).unwrap() - 0.5).abs() < 1e-15);
    assert!((Observable::<f64>::norm().eval(&x).unwrap() - 1.0).abs() < 1e-15);
}
