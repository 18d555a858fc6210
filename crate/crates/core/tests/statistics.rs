use svelab_core::diagnostics::{holder_scaling_study, run_ensemble, EnsembleSettings};
use svelab_core::engine::{kappa, DiagonalKernel, LimitSolver, ModelSpec, SchemeSolver};
use svelab_core::kernels::{check_admissibility, kernel_order_report, GeometricGrid, KernelComponent};
use svelab_core::paths::{aggregate, generate_brownian, SeedSpec, StreamTag};
use svelab_core::stats::{mean, variance};

fn trig() -> ModelSpec {
    ModelSpec::scalar_affine_trig(0.0, 2.0, 1.0)
}

#[test]
fn holder_slope_tracks_two_h() {
    for h in [0.3, 0.5, 0.7] {
        let kernel = DiagonalKernel::fractional(1, 1.0, h).unwrap();
        let r = holder_scaling_study(&trig(), &kernel, 64, &EnsembleSettings::new(1.0, 8, 100, 17), 2).unwrap();
        let slope = r.slope.unwrap();
        assert!((slope - 2.0 * h).abs() <= 0.1, "H = {h}: slope {slope}");
        assert!(r.passed());
        assert!(r.warnings.is_empty());
    }
}

#[test]
fn fourth_moment_is_stable_under_refinement() {
    let kernel = DiagonalKernel::fractional(1, 1.0, 0.4).unwrap();
    let sup_moment = |n: usize| {
        let solver = SchemeSolver::new(&trig(), &kernel, n, 64 / n, 1.0).unwrap();
        let paths = run_ensemble(0, 400, |p| {
            let w = solver.brownian(SeedSpec::driving(5, p))?;
            Ok(solver.euler(&w)?.states.column(0).iter().map(|x| x.powi(4)).collect::<Vec<f64>>())
        })
        .unwrap();
        (0..=64)
            .map(|k| mean(&paths.iter().map(|p| p[k]).collect::<Vec<_>>()))
            .fold(0.0f64, f64::max)
    };
    let (a, b) = (sup_moment(16), sup_moment(32));
    assert!(a.is_finite() && ((a - b) / a).abs() < 0.1, "{a} vs {b}");
}

#[test]
fn limit_variance_is_grid_consistent() {
    let model = trig();
    let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
    let kap = kappa(0.5).unwrap();
    let (coarse_steps, fine_steps) = (64usize, 256usize);
    let x_coarse = SchemeSolver::new(&model, &kernel, coarse_steps, 1, 1.0).unwrap();
    let x_fine = SchemeSolver::new(&model, &kernel, fine_steps, 1, 1.0).unwrap();
    let u_coarse = LimitSolver::new(&model, &kernel, coarse_steps, 1.0).unwrap();
    let u_fine = LimitSolver::new(&model, &kernel, fine_steps, 1.0).unwrap();
    let pairs = run_ensemble(0, 1000, |p| {
        let w = generate_brownian(SeedSpec::driving(9, p), 1, fine_steps, 1.0)?;
        let b = generate_brownian(SeedSpec::new(9, p, StreamTag::LimitB), 1, fine_steps, 1.0)?;
        let (wc, bc) = (aggregate(&w, 4)?, aggregate(&b, 4)?);
        let uf = u_fine.solve(&x_fine.reference(&w)?, &w, &b, kap)?.terminal()[0];
        let uc = u_coarse.solve(&x_coarse.reference(&wc)?, &wc, &bc, kap)?.terminal()[0];
        Ok((uc, uf))
    })
    .unwrap();
    let vc = variance(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let vf = variance(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    assert!(((vc - vf) / vf).abs() < 0.1, "{vc} vs {vf}");
}

#[test]
fn tempered_kernel_orders_and_admissibility() {
    let kernel = DiagonalKernel::new(vec![KernelComponent::tempered(1.0, 0.4, 1.0).unwrap()]).unwrap();
    let orders = kernel_order_report(&kernel, &GeometricGrid::default_for_orders(1.0), 1.0, 0.05).unwrap();
    assert!(orders.pass, "{orders:#?}");
    let adm = check_admissibility(&kernel, &GeometricGrid::default_for_admissibility(1.0), 0.05, 1.0).unwrap();
    assert!(adm.admissible, "{adm:#?}");
}
