//! Acceptance suite: one test per release criterion, each enforcing
//! its stated tolerance end to end. Runtimes are asserted where a
//! criterion carries a budget.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use lgan_core::datasets::{
    connectivity_scan, correlate_scores, spearman, ImageTensorSet, ScanItem, ScanReport, ScanRow,
};
use lgan_core::dynamics::{
    evolve_analytic, evolve_numeric, helmholtz_decompose, kernel_field,
    project_initial_conditions, IntegratorConfig, Scheme,
};
use lgan_core::laplace::{SpectrumMethod, WeightedLaplacian};
use lgan_core::lgan::{
    euler_mode_modulus, lgan_eigenvalues, max_real_part, optimal_parameters, LganCoefficients,
};
use lgan_core::measure::{gaussian_density, mixture_density, GridDensity, MixtureSpec};
use lgan_core::poincare::{
    estimate_graph, estimate_grid_reference, estimate_parametric, GraphEstimatorConfig,
    GridReferenceConfig, ParametricEstimatorConfig,
};
use lgan_core::seeds;

fn standard_gaussian_1d(points: usize) -> WeightedLaplacian {
    let g = gaussian_density(&[0.0], &[1.0], &[(-10.0, 10.0)], &[points]).unwrap();
    WeightedLaplacian::assemble(&g)
}

#[test]
fn criterion_01_hermite_ladder_on_the_standard_normal() {
    let start = Instant::now();
    let op = standard_gaussian_1d(2001);
    let spectrum = op.spectrum(6).unwrap();
    let elapsed = start.elapsed();
    let xis = spectrum.xis();
    assert_eq!(xis.len(), 6);
    assert!(xis[0].abs() < 0.01, "zero mode: {}", xis[0]);
    for k in 1..6 {
        let rel = (xis[k] - k as f64).abs() / k as f64;
        assert!(rel < 0.01, "mode {k}: {} off by {rel:.2e}", xis[k]);
    }
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
}

/// Roots of z^2 + a z + b by simultaneous (Durand-Kerner) iteration;
/// knows nothing about the damping structure of the coefficients.
fn generic_quadratic_roots(a: f64, b: f64) -> (Complex64, Complex64) {
    let scale = 1.0 + a.abs().max(b.abs());
    let mut z1 = Complex64::new(0.4, 0.9) * scale;
    let mut z2 = Complex64::new(-0.6, 0.3) * scale;
    for _ in 0..300 {
        let sep = z1 - z2;
        if sep.norm() < 1e-300 {
            break;
        }
        let p1 = z1 * z1 + a * z1 + b;
        let p2 = z2 * z2 + a * z2 + b;
        let n1 = z1 - p1 / sep;
        let n2 = z2 + p2 / sep;
        let step = (n1 - z1).norm() + (n2 - z2).norm();
        z1 = n1;
        z2 = n2;
        if step < 1e-15 * scale {
            break;
        }
    }
    (z1, z2)
}

#[test]
fn criterion_02_mode_eigenvalues_solve_the_quadratic_and_damp() {
    let mut rng = seeds::rng(2024, 0);
    for _ in 0..10_000 {
        let alpha: f64 = rng.gen_range(0.0..3.0);
        let beta: f64 = rng.gen_range(0.1..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let gamma: f64 = rng.gen_range(0.0..2.0);
        // the absolute residual band needs |lambda|^2 well under 1e4
        let xi: f64 = rng.gen_range(1e-3..10.0);
        let c = LganCoefficients::new(alpha, beta, gamma).unwrap();
        let ev = lgan_eigenvalues(&c, &[xi]).unwrap();
        let m = &ev.modes()[0];
        let a = alpha + gamma * xi;
        let b = beta * beta * xi;
        for lam in [m.plus, m.minus] {
            let resid = (lam * lam + a * lam + b).norm();
            assert!(resid <= 1e-12, "residual {resid:.2e} at ({alpha},{beta},{gamma},{xi})");
            assert!(lam.re <= 0.0, "unstable root {lam} at ({alpha},{beta},{gamma},{xi})");
        }
        let (z1, z2) = generic_quadratic_roots(a, b);
        let tol = 1e-6 * (1.0 + m.plus.norm().max(m.minus.norm()));
        let direct = (m.plus - z1).norm().max((m.minus - z2).norm());
        let swapped = (m.plus - z2).norm().max((m.minus - z1).norm());
        assert!(
            direct.min(swapped) <= tol,
            "oracle mismatch at ({alpha},{beta},{gamma},{xi}): {z1} {z2} vs {} {}",
            m.plus,
            m.minus
        );
    }
}

#[test]
fn criterion_03_least_squares_run_decays_at_half_and_heun_tracks_it() {
    let op = standard_gaussian_1d(2001);
    let spectrum = op.spectrum(6).unwrap();
    let coeffs = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();

    // generic low-mode data: random mean plus four random mode weights
    let mut rng = seeds::rng(31, 0);
    let mut u0 = vec![rng.gen_range(0.5..1.5); op.n()];
    for k in 1..=4 {
        let c: f64 = rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for (u, phi) in u0.iter_mut().zip(spectrum.mode(k)) {
            *u += c * phi;
        }
    }
    let v0 = op.zero_face_field();

    let tau = 1e-3;
    let steps = 20_000;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * tau).collect();
    let expansion = project_initial_conditions(&spectrum, &op, &coeffs, &u0, &v0, 4).unwrap();
    let analytic = evolve_analytic(&expansion, &coeffs, &times).unwrap();
    assert!(
        (analytic.measured_rate + 0.5).abs() <= 0.025,
        "fitted rate {}",
        analytic.measured_rate
    );

    let cfg = IntegratorConfig {
        scheme: Scheme::Heun,
        tau,
        steps,
        gamma: 0.0,
        store_every: 0,
    };
    let numeric = evolve_numeric(&op, &coeffs, &u0, &v0, &cfg).unwrap();
    assert!(!numeric.diverged);
    let u_scale = analytic.u_norms[0];
    for i in 0..=steps {
        let rel = (numeric.u_norms[i] - analytic.u_norms[i]).abs() / analytic.u_norms[i];
        assert!(rel <= 1e-4, "u norm off by {rel:.2e} at t={}", times[i]);
        let va = analytic.v_norms[i];
        if va >= 1e-3 * u_scale {
            let relv = (numeric.v_norms[i] - va).abs() / va;
            assert!(relv <= 1e-4, "v norm off by {relv:.2e} at t={}", times[i]);
        }
    }
}

#[test]
fn criterion_04_euler_grows_at_the_predicted_modulus_and_tuned_heun_decays() {
    let g = GridDensity::from_values(&[(0.0, 1.0)], &[51], vec![1.0; 51]).unwrap();
    let op = WeightedLaplacian::assemble(&g);
    let spectrum = op.spectrum_with(4, &SpectrumMethod::Direct).unwrap();
    let xi = spectrum.xis()[2];
    let u0 = spectrum.mode(2).to_vec();
    let v0 = op.zero_face_field();
    let tau = 1e-3;

    let undamped = LganCoefficients::new(0.0, 1.0, 0.0).unwrap();
    let cfg = IntegratorConfig {
        scheme: Scheme::Euler,
        tau,
        steps: 200,
        gamma: 0.0,
        store_every: 0,
    };
    let trace = evolve_numeric(&op, &undamped, &u0, &v0, &cfg).unwrap();
    let want = (1.0 + tau * tau * xi).sqrt();
    assert!((euler_mode_modulus(&undamped, xi, tau).unwrap() - want).abs() <= 1e-14);
    let energy: Vec<f64> = trace
        .u_norms
        .iter()
        .zip(&trace.v_norms)
        .map(|(u, v)| u.hypot(*v))
        .collect();
    for i in 0..cfg.steps {
        let ratio = energy[i + 1] / energy[i];
        assert!(
            (ratio / want - 1.0).abs() <= 1e-8,
            "step {i}: growth {ratio} vs {want}"
        );
    }

    let tuned = optimal_parameters(1.0, xi, None).unwrap();
    // keeps tau * gamma * xi_max under the explicit diffusion
    // stability bound so top-grid parasites stay tame
    let cfg = IntegratorConfig {
        scheme: Scheme::Heun,
        tau: 2e-4,
        steps: 15_000,
        gamma: tuned.gamma,
        store_every: 0,
    };
    let trace = evolve_numeric(&op, &tuned, &u0, &v0, &cfg).unwrap();
    let energy: Vec<f64> = trace
        .u_norms
        .iter()
        .zip(&trace.v_norms)
        .map(|(u, v)| u.hypot(*v))
        .collect();
    for i in 0..cfg.steps {
        assert!(
            energy[i + 1] <= energy[i] * (1.0 + 1e-12),
            "energy rose at step {i}: {} -> {}",
            energy[i],
            energy[i + 1]
        );
    }
    assert!(energy[cfg.steps] <= 1e-6 * energy[0]);
}

/// Sign changes of consecutive norm differences from `from_idx` on,
/// ignoring differences below a relative deadband.
fn sign_changes(norms: &[f64], from_idx: usize) -> usize {
    let mut changes = 0;
    let mut prev: Option<bool> = None;
    for i in from_idx..norms.len() - 1 {
        let delta = norms[i + 1] - norms[i];
        if delta.abs() <= 1e-10 * norms[i].abs() {
            continue;
        }
        let sign = delta > 0.0;
        if let Some(p) = prev {
            if p != sign {
                changes += 1;
            }
        }
        prev = Some(sign);
    }
    changes
}

#[test]
fn criterion_05_tuned_parameters_are_critical_and_kill_the_oscillation() {
    let tuned = optimal_parameters(-1.0, 0.25, None).unwrap();
    assert_eq!(tuned.gamma, 4.0);
    assert_eq!(tuned.alpha, 0.0);
    assert_eq!(max_real_part(&tuned, 0.25).unwrap(), -0.5);
    let disc = |c: &LganCoefficients, xi: f64| {
        let a = c.alpha + c.gamma * xi;
        a * a - 4.0 * c.beta * c.beta * xi
    };
    assert!(disc(&tuned, 0.25).abs() <= 1e-10);
    for i in 0..100 {
        let xi = 0.25 * (1.0 + 0.5 * i as f64);
        assert!(disc(&tuned, xi) >= -1e-12, "negative discriminant at {xi}");
    }

    let g = gaussian_density(&[0.0], &[1.0], &[(-8.0, 8.0)], &[161]).unwrap();
    let op = WeightedLaplacian::assemble(&g);
    let spectrum = op.spectrum(3).unwrap();
    let xi_min = spectrum.xi_min().unwrap();
    let u0 = spectrum.mode(1).to_vec();
    let v0 = op.zero_face_field();
    let run = |coeffs: &LganCoefficients| {
        let cfg = IntegratorConfig {
            scheme: Scheme::Heun,
            tau: 1e-3,
            steps: 30_000,
            gamma: coeffs.gamma,
            store_every: 0,
        };
        evolve_numeric(&op, coeffs, &u0, &v0, &cfg).unwrap()
    };

    let critical = optimal_parameters(1.0, xi_min, None).unwrap();
    let trace = run(&critical);
    assert!(!trace.diverged);
    // past the critical-damping hump the norm is monotone
    assert_eq!(sign_changes(&trace.u_norms, 5000), 0);

    let half = LganCoefficients::new(0.0, 1.0, 1.0 / xi_min.sqrt()).unwrap();
    let trace = run(&half);
    assert!(!trace.diverged);
    assert!(sign_changes(&trace.u_norms, 5000) >= 3);
}

#[test]
fn criterion_06_separation_closes_the_gap_and_samples_recover_it() {
    let start = Instant::now();
    let grid_gap = |sep: f64| {
        let spec = MixtureSpec::two_modes(sep);
        let g = mixture_density(&spec, &[(-8.0, sep + 8.0)], &[2001]).unwrap();
        WeightedLaplacian::assemble(&g).poincare_constant().unwrap()
    };
    let gaps: Vec<f64> = (0..=5).map(|d| grid_gap(d as f64)).collect();
    for d in 0..5 {
        assert!(
            gaps[d + 1] < gaps[d],
            "gap did not fall from separation {d}: {gaps:?}"
        );
    }

    let graph_cfg = GraphEstimatorConfig {
        seed: 42,
        ..Default::default()
    };
    let par_cfg = ParametricEstimatorConfig {
        seed: 42,
        ..Default::default()
    };
    for (sep, reference, sample_seed) in [(3.0, 0.25, 603), (4.0, 0.124, 604)] {
        let samples = MixtureSpec::two_modes(sep).sample(10_000, sample_seed);
        let graph = estimate_graph(&samples, &graph_cfg).unwrap();
        let rel = (graph.xi_hat - reference).abs() / reference;
        assert!(
            rel <= 0.30,
            "graph at separation {sep}: {} vs {reference} ({rel:.2})",
            graph.xi_hat
        );
        let par = estimate_parametric(&samples, &par_cfg).unwrap();
        let rel = (par.xi_hat - reference).abs() / reference;
        assert!(
            rel <= 0.30,
            "parametric at separation {sep}: {} vs {reference} ({rel:.2})",
            par.xi_hat
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
}

#[test]
fn criterion_07_estimators_cross_validate_and_the_grid_oracle_scales() {
    // 1d reference: standard normal, gap 1
    let grid_1d = standard_gaussian_1d(2001).poincare_constant().unwrap();
    let samples = MixtureSpec::standard_normal(1).sample(6000, 7);
    let graph_cfg = GraphEstimatorConfig {
        seed: 1,
        ..Default::default()
    };
    let par_cfg = ParametricEstimatorConfig {
        seed: 1,
        ..Default::default()
    };
    let g = estimate_graph(&samples, &graph_cfg).unwrap();
    assert!(
        (g.xi_hat - grid_1d).abs() / grid_1d <= 0.35,
        "1d graph {} vs {grid_1d}",
        g.xi_hat
    );
    let p = estimate_parametric(&samples, &par_cfg).unwrap();
    assert!(
        (p.xi_hat - grid_1d).abs() / grid_1d <= 0.35,
        "1d parametric {} vs {grid_1d}",
        p.xi_hat
    );

    // 2d reference: product normal, gap 1
    let g2 = gaussian_density(&[0.0, 0.0], &[1.0, 1.0], &[(-6.0, 6.0), (-6.0, 6.0)], &[61, 61])
        .unwrap();
    let grid_2d = WeightedLaplacian::assemble(&g2).poincare_constant().unwrap();
    let samples = MixtureSpec::standard_normal(2).sample(6000, 11);
    let g = estimate_graph(&samples, &graph_cfg).unwrap();
    assert!(
        (g.xi_hat - grid_2d).abs() / grid_2d <= 0.35,
        "2d graph {} vs {grid_2d}",
        g.xi_hat
    );
    let p = estimate_parametric(&samples, &par_cfg).unwrap();
    assert!(
        (p.xi_hat - grid_2d).abs() / grid_2d <= 0.35,
        "2d parametric {} vs {grid_2d}",
        p.xi_hat
    );

    // rescaling the data divides the grid estimate by the square
    let big = MixtureSpec::standard_normal(1).sample(100_000, 13);
    let cfg = GridReferenceConfig::default();
    let base = estimate_grid_reference(&big, &cfg).unwrap().xi_hat;
    let s = 2.5;
    let scaled = estimate_grid_reference(&big.scaled(s), &cfg).unwrap().xi_hat;
    let rel = (scaled * s * s - base).abs() / base;
    assert!(rel <= 0.05, "covariance off by {rel:.3}: {base} vs {scaled}");
}

#[test]
fn criterion_08_divergence_free_velocity_is_a_fixed_point() {
    let g = gaussian_density(&[0.0, 0.0], &[1.0, 1.0], &[(-6.0, 6.0), (-6.0, 6.0)], &[41, 41])
        .unwrap();
    let op = WeightedLaplacian::assemble(&g);
    let v0 = kernel_field(&op, 5).unwrap();
    let u0 = vec![0.0; op.n()];
    let coeffs = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
    let cfg = IntegratorConfig {
        scheme: Scheme::Heun,
        tau: 1e-3,
        steps: 10_000,
        gamma: 0.0,
        store_every: 0,
    };
    let trace = evolve_numeric(&op, &coeffs, &u0, &v0, &cfg).unwrap();
    assert!(!trace.diverged);
    let floor = trace.v_norms[0];
    assert!(floor > 0.0);
    for i in 0..trace.times.len() {
        assert!(
            trace.u_norms[i] <= 1e-6 * floor,
            "scalar leaked at t={}: {}",
            trace.times[i],
            trace.u_norms[i]
        );
        assert!(
            (trace.v_norms[i] - floor).abs() <= 1e-6 * floor,
            "velocity drifted at t={}",
            trace.times[i]
        );
    }
}

#[test]
fn criterion_09_helmholtz_split_reconstructs_the_field() {
    let g = gaussian_density(&[0.0, 0.0], &[1.0, 1.0], &[(-6.0, 6.0), (-6.0, 6.0)], &[25, 25])
        .unwrap();
    let op = WeightedLaplacian::assemble(&g);
    let spectrum = op.spectrum_with(65, &SpectrumMethod::Direct).unwrap();

    let mut rng = seeds::rng(9, 0);
    let mut potential_true = vec![0.0f64; op.n()];
    for k in 1..=64 {
        let c: f64 = rng.gen_range(-1.0..1.0);
        for (p, phi) in potential_true.iter_mut().zip(spectrum.mode(k)) {
            *p += c * phi;
        }
    }
    let divfree_true = kernel_field(&op, 17).unwrap();
    let mut v0 = op.grad(&potential_true);
    v0.axpy(1.0, &divfree_true);

    let (potential, divfree, div_resid) = helmholtz_decompose(&spectrum, &op, &v0);
    assert!(div_resid <= 1e-8, "divergence residual {div_resid:.2e}");

    let pot_err: Vec<f64> = potential
        .iter()
        .zip(&potential_true)
        .map(|(a, b)| a - b)
        .collect();
    let pot_scale = op.norm(&potential_true);
    assert!(op.norm(&pot_err) <= 1e-8 * pot_scale);

    let mut df_err = divfree.clone();
    df_err.axpy(-1.0, &divfree_true);
    assert!(op.face_norm(&df_err) <= 1e-8 * op.face_norm(&divfree_true));

    let mut recon = op.grad(&potential);
    recon.axpy(1.0, &divfree);
    recon.axpy(-1.0, &v0);
    assert!(op.face_norm(&recon) <= 1e-8 * op.face_norm(&v0));
}

#[test]
fn criterion_10_likelihood_truncation_opens_the_gap() {
    use ndarray::Array4;
    use rand_distr::{Distribution, StandardNormal};

    // flat images whose amplitude carries a heavy-tailed minority
    let (n, side) = (240, 6);
    let mut data = Array4::<f32>::zeros((n, 1, side, side));
    for i in 0..n {
        let mut rng = seeds::rng(77, i as u64);
        let z: f64 = StandardNormal.sample(&mut rng);
        let amp = if i < 24 { 5.0 * z } else { z };
        for y in 0..side {
            for x in 0..side {
                let e: f64 = StandardNormal.sample(&mut rng);
                let v = 0.5 + 0.03 * amp + 0.005 * e;
                data[(i, 0, y, x)] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    let images = ImageTensorSet::new(data).unwrap();

    let psis = [0.1, 0.2, 0.3, 0.4, 0.5];
    let plan: Vec<ScanItem> = psis
        .iter()
        .map(|&psi| ScanItem::InstanceSelection { psi })
        .collect();
    let graph = GraphEstimatorConfig {
        k_neighbors: 16,
        seed: 3,
        ..Default::default()
    };
    let report = connectivity_scan(&images, &plan, &graph, 3).unwrap();

    let mut xs = vec![0.0];
    let mut ys = vec![report.baseline_xi];
    for (psi, row) in psis.iter().zip(&report.rows) {
        let xi = row.xi_hat.unwrap_or_else(|| {
            panic!("row psi={psi} failed: {:?}", row.error)
        });
        xs.push(*psi);
        ys.push(xi);
    }
    let rho = spearman(&xs, &ys).unwrap();
    assert!(rho >= 0.7, "rank correlation {rho} over {ys:?}");
}

#[test]
fn criterion_11_rank_correlation_pathway_matches_hand_computed_values() {
    let fresh = || ScanReport {
        baseline_xi: 1.0,
        rows: (0..5)
            .map(|i| ScanRow {
                label: format!("row{i}"),
                param: i as f64,
                xi_hat: Some(10.0 * (i + 1) as f64),
                xi_norm: Some(10.0 * (i + 1) as f64),
                error: None,
            })
            .collect(),
        spearman: None,
    };

    let mut report = fresh();
    let rho = correlate_scores(&mut report, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert!((rho - 1.0).abs() <= 1e-12);
    assert_eq!(report.spearman, Some(rho));

    let mut report = fresh();
    let rho = correlate_scores(&mut report, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
    assert!((rho + 1.0).abs() <= 1e-12);

    // score ranks (3,1,2,5,4) against (1..5): sum d^2 = 8, rho = 0.6
    let mut report = fresh();
    let rho = correlate_scores(&mut report, &[3.0, 1.0, 2.0, 5.0, 4.0]).unwrap();
    assert!((rho - 0.6).abs() <= 1e-12);
}
