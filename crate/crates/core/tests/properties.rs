mod support;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use odeup::gaussians::{condition_linear, psd_sqrt, Gaussian};
use odeup::ivp::{benchmark, BENCHMARKS};
use odeup::odefilter::{calibrate, ek_step, initialize, solve, time_grid, Linearization, SolverConfig};
use odeup::prior::IwpPrior;
use odeup::propagate::propagate;
use odeup::quadrature::{gauss_hermite_1d, monte_carlo, spherical_cubature, RuleSpec};
use odeup::reference::{mc_reference, rk4_solve, McSettings};
use support::{gaussian_monomial, rel_err, standard_normal_moment};

fn matrix(rows: usize, cols: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, entries.iter().copied().cycle().take(rows * cols))
}

fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

prop_compose! {
    /// Random PSD matrix `A Aᵀ` of size `n ≤ 8`, possibly rank deficient.
    fn psd_matrix()(n in 1usize..=8)(
        n in Just(n),
        rank in 1..=n,
        entries in prop::collection::vec(-3.0f64..3.0, 64),
    ) -> DMatrix<f64> {
        let a = matrix(n, rank, &entries);
        &a * a.transpose()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn square_root_reconstructs_covariance(sigma in psd_matrix()) {
        let l = psd_sqrt(&sigma).unwrap();
        prop_assert!(frobenius_rel(&(&l * l.transpose()), &sigma) < 1e-8);
    }

    #[test]
    fn exact_observation_is_reproduced(
        sigma in psd_matrix(),
        entries in prop::collection::vec(-2.0f64..2.0, 16),
        target in -5.0f64..5.0,
    ) {
        let n = sigma.nrows();
        let sigma = sigma + DMatrix::identity(n, n);
        let g = Gaussian::new(DVector::from_column_slice(&entries[..n]), &sigma).unwrap();
        let h = matrix(1, n, &entries[8..]);
        let predicted = (&h * g.mean())[0];
        let (post, _) = condition_linear(&g, &h, &DVector::from_element(1, predicted - target), &DMatrix::zeros(1, 0)).unwrap();
        prop_assert!(((&h * post.mean())[0] - target).abs() < 1e-10 * (1.0 + target.abs()));
    }

    #[test]
    fn prior_transition_is_a_semigroup(d in 1usize..=2, q in 1usize..=4, h1 in 1e-3f64..5.0, h2 in 1e-3f64..5.0) {
        let prior = IwpPrior::new(d, q).unwrap();
        let composed = prior.transition(h1).unwrap() * prior.transition(h2).unwrap();
        prop_assert!(rel_err(&composed, &prior.transition(h1 + h2).unwrap()) < 1e-10);
    }

    #[test]
    fn process_noise_is_symmetric_psd(d in 1usize..=2, q in 1usize..=4, h in 1e-3f64..10.0) {
        let noise = IwpPrior::new(d, q).unwrap().process_noise(h).unwrap();
        prop_assert_eq!(&noise, &noise.transpose());
        let scale = noise.amax();
        let min = noise.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-12 * scale, "min eigenvalue {} at scale {}", min, scale);
    }

    #[test]
    fn transition_extrapolates_taylor_polynomial(q in 1usize..=2, h in 1e-3f64..3.0, x in prop::collection::vec(-4.0f64..4.0, 3)) {
        let prior = IwpPrior::new(1, q).unwrap();
        let state = DVector::from_column_slice(&x[..q + 1]);
        let moved = prior.projection(0).unwrap() * prior.transition(h).unwrap() * &state;
        let taylor: f64 = match q {
            1 => x[0] + h * x[1],
            _ => x[0] + h * x[1] + h * h / 2.0 * x[2],
        };
        prop_assert!((moved[0] - taylor).abs() < 1e-12 * (1.0 + taylor.abs()));
    }

    #[test]
    fn cubature_is_exact_to_degree_three(
        e in 1usize..=4,
        mu in prop::collection::vec(-3.0f64..3.0, 4),
        entries in prop::collection::vec(-1.5f64..1.5, 16),
    ) {
        let mu = DVector::from_column_slice(&mu[..e]);
        let a = matrix(e, e, &entries);
        let sigma = &a * a.transpose() + DMatrix::identity(e, e) * 0.1;
        let rule = spherical_cubature(&mu, &sigma).unwrap();
        let mut monomials: Vec<Vec<usize>> = vec![vec![]];
        for k in 0..e {
            monomials.push(vec![k]);
            for l in k..e {
                monomials.push(vec![k, l]);
                for m in l..e {
                    monomials.push(vec![k, l, m]);
                }
            }
        }
        for idx in &monomials {
            let approx: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(x, w)| w * idx.iter().map(|&i| x[i]).product::<f64>())
                .sum();
            let exact = gaussian_monomial(&mu, &sigma, idx);
            prop_assert!((approx - exact).abs() < 1e-10 * (1.0 + exact.abs()), "{:?}: {} vs {}", idx, approx, exact);
        }
        prop_assert!((rule.mean() - &mu).amax() < 1e-12 * (1.0 + mu.amax()));
        prop_assert!(rel_err(&rule.covariance(), &sigma) < 1e-10);
    }

    #[test]
    fn calibration_is_scale_equivariant(
        c in 0.01f64..100.0,
        n in 1usize..20,
        entries in prop::collection::vec(-2.0f64..2.0, 80),
    ) {
        let defects: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_column_slice(&entries[2 * i..2 * i + 2])).collect();
        let sqrts: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let v = &entries[40 + i..43 + i];
                DMatrix::from_row_slice(2, 2, &[1.0 + v[0].abs(), 0.0, v[1], 0.5 + v[2].abs()])
            })
            .collect();
        let base = calibrate(&defects, &sqrts).unwrap();
        let scaled: Vec<DVector<f64>> = defects.iter().map(|d| d * c).collect();
        let k = calibrate(&scaled, &sqrts).unwrap();
        if base > 1e-12 {
            prop_assert!((k - c * c * base).abs() <= 1e-12 * k.max(1.0), "{} vs {}", k, c * c * base);
        }
    }
}

#[test]
fn gauss_hermite_is_exact_to_degree_2p_minus_1() {
    for p in 1..=10 {
        let (nodes, weights) = gauss_hermite_1d(p).unwrap();
        for k in 0..2 * p as u32 {
            let approx: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = standard_normal_moment(k);
            assert!((approx - exact).abs() < 1e-9 * (1.0 + exact), "p={p} k={k}: {approx} vs {exact}");
        }
    }
}

/// Per-benchmark boxes covering the plotted trajectories.
fn state_box(name: &str) -> Vec<(f64, f64)> {
    match name {
        "linear" => vec![(0.0, 25.0)],
        "logistic" => vec![(0.0, 3.5)],
        "fitzhugh_nagumo" => vec![(-2.5, 2.5), (-1.0, 2.5)],
        "lotka_volterra" => vec![(0.1, 20.0), (0.1, 20.0)],
        "van_der_pol" => vec![(-8.0, 8.0), (-12.0, 12.0)],
        other => panic!("no box for {other}"),
    }
}

fn sample_theta(dist: &odeup::ivp::ParameterDistribution, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let l = psd_sqrt(&dist.cov()).unwrap();
    let z = DVector::from_fn(dist.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    dist.mean() + l * z
}

#[test]
fn benchmark_jacobians_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for info in &BENCHMARKS {
        let (p, dist) = benchmark(info.name).unwrap();
        let bounds = state_box(info.name);
        for _ in 0..100 {
            let ivp = p.apply_params(sample_theta(&dist, &mut rng).as_slice()).unwrap();
            let y = DVector::from_iterator(bounds.len(), bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)));
            let jac = ivp.jacobian(0.0, &y);
            let mut fd = DMatrix::zeros(y.len(), y.len());
            for j in 0..y.len() {
                let eps = 1e-6 * (1.0 + y[j].abs());
                let mut plus = y.clone();
                let mut minus = y.clone();
                plus[j] += eps;
                minus[j] -= eps;
                fd.set_column(j, &((ivp.field(0.0, &plus) - ivp.field(0.0, &minus)) / (2.0 * eps)));
            }
            assert!(rel_err(&jac, &fd) < 1e-5, "{} at {y}: {jac} vs {fd}", info.name);
        }
    }
}

#[test]
fn second_derivatives_match_differences_along_the_flow() {
    let eps = 1e-6;
    for info in &BENCHMARKS {
        let (p, dist) = benchmark(info.name).unwrap();
        let ivp = p.apply_params(dist.mean().as_slice()).unwrap();
        let derivs = ivp.solution_derivatives(2).unwrap();
        let (t0, _) = ivp.tspan();
        let path = rk4_solve(&ivp, eps / 16.0, &[t0, t0 + eps]).unwrap();
        let fd = (ivp.field(t0 + eps, &path.values[1]) - ivp.field(t0, &path.values[0])) / eps;
        let scale = 1.0 + derivs[2].amax();
        assert!((&derivs[2] - &fd).amax() < 1e-3 * scale, "{}: {} vs {}", info.name, derivs[2], fd);
    }
}

fn linear_max_error(q: usize, h: f64) -> f64 {
    let (p, _) = benchmark("linear").unwrap();
    let sol = solve(&p.apply_params(&[1.0]).unwrap(), &SolverConfig::new(q, h)).unwrap();
    sol.times.iter().zip(&sol.states).map(|(t, s)| (s.mean()[0] - t.exp()).abs()).fold(0.0, f64::max)
}

#[test]
fn solver_converges_with_order_q_on_the_linear_ode() {
    for q in [1, 2] {
        for h in [0.1, 0.05, 0.025] {
            let ratio = linear_max_error(q, h) / linear_max_error(q, h / 2.0);
            let needed = 0.7 * 2f64.powi(q as i32);
            assert!(ratio >= needed, "q={q} h={h}: ratio {ratio} below {needed}");
        }
    }
}

#[test]
fn ek1_updates_enforce_the_linearized_ode() {
    for info in &BENCHMARKS {
        let (p, dist) = benchmark(info.name).unwrap();
        let ivp = p.apply_params(dist.mean().as_slice()).unwrap();
        for q in [1, 2] {
            let prior = IwpPrior::new(ivp.dim(), q).unwrap();
            let (e0, e1) = (prior.projection(0).unwrap(), prior.projection(1).unwrap());
            let grid = time_grid(ivp.tspan(), info.step).unwrap();
            let mut state = initialize(&ivp, &prior, true).unwrap();
            let mut worst: f64 = 0.0;
            for (n, w) in grid.windows(2).enumerate() {
                let out = ek_step(&state, &ivp, &prior, w[0], w[1] - w[0], Linearization::Ek1).unwrap();
                let (y_pred, y) = (&e0 * out.predicted.mean(), &e0 * out.updated.mean());
                let f_pred = ivp.field(w[1], &y_pred);
                let linearized = &f_pred + ivp.jacobian(w[1], &y_pred) * (&y - &y_pred);
                let dy = &e1 * out.updated.mean();
                let defect = (&dy - &linearized).norm() / (1.0 + linearized.norm());
                assert!(defect <= 1e-8, "{} q={q} at {}: {defect:e}", info.name, n + 1);
                let f = ivp.field(w[1], &y);
                worst = worst.max((dy - &f).norm() / (1.0 + f.norm()));
                state = out.updated;
            }
            if info.name == "linear" || q == 2 {
                assert!(worst <= 1e-8, "{} q={q}: nonlinear defect {worst:e}", info.name);
            }
        }
    }
}

#[test]
fn smoothing_never_increases_covariance() {
    for name in ["logistic", "lotka_volterra", "van_der_pol"] {
        let (p, dist) = benchmark(name).unwrap();
        let ivp = p.apply_params(dist.mean().as_slice()).unwrap().with_tspan((0.0, 1.0)).unwrap();
        for q in [1, 2] {
            let mut cfg = SolverConfig::new(q, 0.05);
            cfg.calibrate = false;
            let smoothed = solve(&ivp, &cfg).unwrap();
            cfg.smooth = false;
            let filtered = solve(&ivp, &cfg).unwrap();
            let last = smoothed.states.len() - 1;
            for n in 1..last {
                let diff = filtered.states[n].cov() - smoothed.states[n].cov();
                let min = diff.symmetric_eigenvalues().min();
                assert!(min >= -1e-10, "{name} q={q} at {n}: {min:e}");
            }
        }
    }
}

#[test]
fn rk4_has_fourth_order_error_ratio() {
    let (p, _) = benchmark("linear").unwrap();
    let ivp = p.apply_params(&[1.0]).unwrap().with_tspan((0.0, 1.0)).unwrap();
    for h in [0.2, 0.1, 0.05] {
        let err = |h: f64| (rk4_solve(&ivp, h, &[1.0]).unwrap().values[0][0] - 1f64.exp()).abs();
        let ratio = err(h) / err(h / 2.0);
        assert!((8.0..=32.0).contains(&ratio), "h={h}: ratio {ratio}");
    }
}

#[test]
fn seeded_outputs_are_bit_identical() {
    let (p, dist) = benchmark("lotka_volterra").unwrap();
    let p = p.with_tspan((0.0, 0.5)).unwrap();

    let a = monte_carlo(&dist, 200, 9).unwrap();
    let b = monte_carlo(&dist, 200, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, monte_carlo(&dist, 200, 10).unwrap());

    let settings = McSettings::new(700, 5, 1e-3);
    let grid = [0.25, 0.5];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| mc_reference(&p, &dist, &settings, &grid).unwrap())
    };
    let (one, many) = (run(1), run(4));
    let bits = |r: &odeup::reference::McReference| {
        r.mean.iter().chain(r.mean_se.iter()).flat_map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&one), bits(&many));
    assert_eq!(one.cov, many.cov);

    let rule = RuleSpec::MonteCarlo { n: 20, seed: 3 };
    let cfg = SolverConfig::new(1, 0.05);
    let first = propagate(&p, &dist, &rule, &cfg).unwrap();
    let second = propagate(&p, &dist, &rule, &cfg).unwrap();
    assert_eq!(first.mean, second.mean);
    assert_eq!(first.cov_total, second.cov_total);
}
