use std::sync::Arc;

use bayesimp::bo::{linear_grid, SamplingBaseline, Surrogate};
use bayesimp::embedding::{build_omega, embedding_expectation};
use bayesimp::experiments::{median, truth_curve, Generator, GeneratorKind, GeneratorSpec, StudySetup};
use bayesimp::fusion::{fit_fusion, moment_match_to_gp, TreatmentEffect};
use bayesimp::kernel::{min_eigenvalue, RbfKernel};
use bayesimp::points::median_heuristic;
use nalgebra::DVector;

fn simple(n: usize) -> StudySetup {
    let generator = Generator::new(GeneratorSpec::new(GeneratorKind::SimpleSynthetic).with_pi(0.5)).unwrap();
    let mut setup = StudySetup::new(Arc::new(generator), n, 50);
    setup.fusion.optimize = false;
    setup
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}

#[test]
fn embedding_estimate_improves_with_more_d1_data() {
    let xs: Vec<f64> = (0..13).map(|i| -3.0 + 0.5 * i as f64).collect();
    let truth = truth_curve(&simple(50), &xs, 10_000, 1).unwrap();
    // Paired with the true outcome function, so only the D1 embedding is estimated.
    let rmse = |n: usize, seed: u64| {
        let setup = simple(n);
        let (d1, _) = setup.data(seed).unwrap();
        let spec = setup.generator.adjustment_spec(&setup.treatment).unwrap();
        let x = d1.points(&spec.treatment).unwrap();
        let z = d1.points(&spec.adjustment).unwrap();
        let kx = RbfKernel::isotropic(1, median_heuristic(&x), 1.0).unwrap();
        let kz = RbfKernel::isotropic(z.dim(), median_heuristic(&z), 1.0).unwrap();
        let features = build_omega(&d1, &spec, &kx, Some(&kz), 0.1).unwrap();
        let f = DVector::from_iterator(n, d1.column(&spec.mediator[0]).unwrap().iter().map(|&y| setup.generator.outcome(y)));
        let se: f64 = xs
            .iter()
            .zip(&truth)
            .map(|(&x, t)| (embedding_expectation(&features, &f, &[x]).unwrap() - t).powi(2))
            .sum();
        (se / xs.len() as f64).sqrt()
    };
    let small: Vec<f64> = (0..10).map(|s| rmse(50, s)).collect();
    let large: Vec<f64> = (0..10).map(|s| rmse(400, s)).collect();
    assert!(median(&large) < median(&small), "N=400 {:.4} vs N=50 {:.4}", median(&large), median(&small));
}

#[test]
fn warm_start_argmax_matches_model_mean() {
    let setup = simple(60);
    let grid = linear_grid(-3.0, 3.0, 50).unwrap();
    for seed in 0..3 {
        let (d1, d2) = setup.data(seed).unwrap();
        let spec = setup.generator.adjustment_spec(&setup.treatment).unwrap();
        let model = fit_fusion(&d1, &d2, &spec, &setup.fusion).unwrap().bayesimp().unwrap();
        let surrogate = Surrogate::new(moment_match_to_gp(&model, &grid).unwrap(), 0.01).unwrap();
        let (post, cov) = surrogate.condition().unwrap();
        let m: Vec<f64> = grid.rows().map(|x| model.mean(x).unwrap()).collect();
        assert_eq!(argmax(post.as_slice()), argmax(&m));
        assert!(min_eigenvalue(&cov) >= -1e-9 * cov.trace());
    }
}

#[test]
fn sampling_uncertainty_is_roughly_flat_on_ablation() {
    let generator = Generator::new(GeneratorSpec::new(GeneratorKind::Ablation)).unwrap();
    let setup = StudySetup::new(Arc::new(generator), 60, 60);
    let grid = linear_grid(-5.0, 5.0, 11).unwrap();
    let (d1, d2) = setup.data(3).unwrap();
    let spec = setup.generator.adjustment_spec(&setup.treatment).unwrap();
    let s = SamplingBaseline::fit(&d1, &d2, &spec, &setup.sampling, 3).unwrap().with_grid(&grid).unwrap();
    let sd: Vec<f64> = grid.rows().map(|x| s.variance(x).unwrap().sqrt()).collect();
    let (lo, hi) = sd.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo > 0.0 && hi / lo < 2.0, "sd range {lo:.4}..{hi:.4}");
}

#[test]
fn bayesimp_variance_grows_away_from_data() {
    let generator = Generator::new(GeneratorSpec::new(GeneratorKind::Ablation)).unwrap();
    let setup = StudySetup::new(Arc::new(generator), 60, 60);
    let (d1, d2) = setup.data(4).unwrap();
    let spec = setup.generator.adjustment_spec(&setup.treatment).unwrap();
    let model = fit_fusion(&d1, &d2, &spec, &setup.fusion).unwrap().bayesimp().unwrap();
    let v0 = model.variance(&[0.0]).unwrap();
    assert!(v0 >= 0.0);
    assert!(model.variance(&[-8.0]).unwrap() > v0);
    assert!(model.variance(&[8.0]).unwrap() > v0);
}
