use bayesimp::bo::{ei, linear_grid, Direction, Surrogate};
use bayesimp::cli::config::Lengthscale;
use bayesimp::cli::RunConfig;
use bayesimp::experiments::{calibration_analysis, default_mass_grid, CalibrationCell, GeneratorKind};
use bayesimp::kernel::{gram, min_eigenvalue, Kernel, NuclearKernel, RbfKernel};
use bayesimp::Points;
use proptest::prelude::*;

fn points_1d() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 1..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rbf_gram_is_psd(xs in points_1d(), l in 0.1..5.0f64, s2 in 0.1..3.0f64) {
        let k = RbfKernel::isotropic(1, l, s2).unwrap();
        let g = gram(&k, &Points::from_scalars(&xs)).unwrap().matrix;
        prop_assert!(min_eigenvalue(&g) >= -1e-9 * g.trace());
    }

    #[test]
    fn nuclear_gram_is_psd_and_symmetric(xs in points_1d(), l in 0.3..3.0f64, eta in 0.3..5.0f64) {
        let r = NuclearKernel::new(RbfKernel::isotropic(1, l, 1.0).unwrap(), eta).unwrap();
        let g = gram(&r, &Points::from_scalars(&xs)).unwrap().matrix;
        prop_assert!(min_eigenvalue(&g) >= -1e-9 * g.trace());
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                prop_assert_eq!(r.eval(&[xs[i]], &[xs[j]]), r.eval(&[xs[j]], &[xs[i]]));
            }
        }
    }

    #[test]
    fn ei_is_nonnegative_and_monotone(mu in -5.0..5.0f64, sigma in 0.0..3.0f64, best in -5.0..5.0f64, d in 0.0..1.0f64) {
        let a = ei(mu, sigma, best, Direction::Max);
        prop_assert!(a >= 0.0);
        prop_assert!(ei(mu + d, sigma, best, Direction::Max) >= a - 1e-12);
        prop_assert!((ei(-mu, sigma, -best, Direction::Min) - a).abs() < 1e-12);
    }

    #[test]
    fn conditioning_shrinks_variance(
        obs in prop::collection::vec((0usize..30, -2.0..2.0f64), 0..8),
        noise in 1e-4..1.0f64,
    ) {
        let grid = linear_grid(-3.0, 3.0, 30).unwrap();
        let mut s = Surrogate::plain_gp(&grid, noise).unwrap();
        let (m0, c0) = s.condition().unwrap();
        for &(i, v) in &obs {
            s.observe(i, v).unwrap();
        }
        let (m, c) = s.condition().unwrap();
        if obs.is_empty() {
            prop_assert_eq!(m, m0);
            prop_assert_eq!(c, c0);
        } else {
            for i in 0..30 {
                prop_assert!(c[(i, i)] <= c0[(i, i)] + 1e-12);
            }
            prop_assert!(min_eigenvalue(&c) >= -1e-9);
        }
    }

    #[test]
    fn coverage_is_a_fraction(cells in prop::collection::vec((-3.0..3.0f64, 0.0..2.0f64, -3.0..3.0f64), 1..40)) {
        let cells: Vec<CalibrationCell> = cells
            .into_iter()
            .map(|(mean, variance, truth)| CalibrationCell { mean, variance, truth })
            .collect();
        let report = calibration_analysis(&cells, &default_mass_grid()).unwrap();
        prop_assert_eq!(report.rows.len(), 9);
        let mut last = 0.0;
        for row in &report.rows {
            prop_assert!((0.0..=1.0).contains(&row.empirical));
            // wider intervals never cover less
            prop_assert!(row.empirical >= last);
            last = row.empirical;
        }
        prop_assert!((0.0..=1.0).contains(&report.deviation));
    }

    #[test]
    fn config_render_round_trips(
        n in 1usize..500,
        seed in any::<u32>(),
        pi in prop::option::of(0.0..=1.0f64),
        eta in prop::option::of(0.01..10.0f64),
        lx in prop::option::of(0.01..10.0f64),
        ridge in 1e-6..10.0f64,
        budget in 0usize..100,
        tolerance in 0.001..0.5f64,
    ) {
        let mut c = RunConfig::new(GeneratorKind::SimpleSynthetic);
        c.data.n = n;
        c.data.seed = seed as u64;
        c.data.pi = pi;
        c.kernel.eta = eta;
        c.kernel.lengthscale_x = lx.map_or(Lengthscale::Median, Lengthscale::Fixed);
        c.model.ridge = ridge;
        c.bo.budget = budget;
        c.bo.tolerance = tolerance;
        prop_assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }
}
