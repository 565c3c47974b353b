use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use stein_rotations::estimators::{ksd_u, ksd_v, mksde_vmf, mksde_vmf_system, FittedParams};
use stein_rotations::gof::{gof_test, GofConfig, NullDistribution};
use stein_rotations::lie::{
    haar_sample, orthogonality_error, perfect_shuffle, so_exp, so_log, standard_basis, unvec, vec,
};
use stein_rotations::rng::stream;
use stein_rotations::samplers::{par_sample, sample_cayley, sample_rn, sample_vmf};
use stein_rotations::stein::{gram_matrix, kp_rn, kp_vmf, RnKernel, SteinKernelFn, VmfKernel};
use stein_rotations::{
    CayleyParams, Family, KernelConfig, RnParams, Rotation, VmfParams, WeightedSamples,
};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5EED_CAFE),
        failure_persistence: None,
        ..Config::default()
    }
}

fn haar(n: usize, count: usize, seed: u64) -> Vec<Rotation> {
    haar_sample(n, count, &mut stream(seed)).unwrap()
}

fn matrix(n: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| entries[i * n + j])
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 16)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn assert_valid(r: &Rotation) {
    assert!(orthogonality_error(r.matrix()) <= 1e-9);
    assert!(r.matrix().determinant() > 0.0);
}

pub fn haar_is_valid_and_deterministic() {
    proptest!(config(48), |(n in 2usize..=5, seed in any::<u64>())| {
        let a = haar(n, 8, seed);
        prop_assert_eq!(&a, &haar(n, 8, seed));
        a.iter().for_each(assert_valid);
    });
}

pub fn exp_and_log_are_inverse() {
    proptest!(config(48), |(n in 2usize..=4, coords in prop::collection::vec(-1.0..1.0f64, 6), scale in 0.0..4.4f64)| {
        let basis = standard_basis::<f64>(n).unwrap();
        let c = DVector::from_iterator(basis.len(), coords.iter().copied().take(basis.len()));
        let s = basis.combine(&c);
        let s = if s.norm() > 0.0 { s.scale(scale / s.norm()) } else { s };
        let r = so_exp(&s);
        assert_valid(&r);
        let back = so_log(&r).unwrap();
        prop_assert!((back.matrix() - s.matrix()).norm() <= 1e-10, "error {}", (back.matrix() - s.matrix()).norm());
        prop_assert!((so_exp(&back).matrix() - r.matrix()).norm() <= 1e-10);
    });
}

pub fn basis_outer_products_sum_to_scaled_identity() {
    proptest!(config(48), |(n in 2usize..=7)| {
        let basis = standard_basis::<f64>(n).unwrap();
        let total = basis.elements().iter().fold(DMatrix::zeros(n, n), |acc, e| acc + e.matrix() * e.matrix().transpose());
        let expected = DMatrix::<f64>::identity(n, n) * ((n as f64 - 1.0) / 2.0);
        prop_assert!((total - expected).norm() <= 1e-12);
    });
}

pub fn shuffle_is_symmetric_orthogonal_involution() {
    proptest!(config(48), |(n in 1usize..=5, vals in prop::collection::vec(-5.0..5.0f64, 25))| {
        let k = perfect_shuffle::<f64>(n);
        let id = DMatrix::<f64>::identity(n * n, n * n);
        prop_assert_eq!(&k.transpose(), &k);
        prop_assert_eq!(&(&k * &k), &id);
        prop_assert_eq!(&(k.transpose() * &k), &id);
        let a = DMatrix::from_fn(n, n, |i, j| vals[i * 5 + j]);
        prop_assert_eq!(unvec(&(&k * vec(&a))).unwrap(), a.transpose());
    });
}

pub fn samplers_are_deterministic_and_valid() {
    proptest!(config(48), |(seed in any::<u64>(), kappa in 0.0..3.0f64, f in entries())| {
        let vmf = VmfParams::new(matrix(3, &f) * 0.5).unwrap();
        let a = sample_vmf(&vmf, 5, &mut stream(seed)).unwrap();
        prop_assert_eq!(&a, &sample_vmf(&vmf, 5, &mut stream(seed)).unwrap());
        let cay = CayleyParams::new(Rotation::identity(3), kappa).unwrap();
        let b = sample_cayley(&cay, 5, &mut stream(seed)).unwrap();
        prop_assert_eq!(&b, &sample_cayley(&cay, 5, &mut stream(seed)).unwrap());
        let rn = RnParams::from_sigma(haar(3, 1, seed)[0].clone(), 0.4).unwrap();
        let c = sample_rn(&rn, 5, &mut stream(seed)).unwrap();
        for x in a.iter().chain(&b).chain(&c) {
            assert_valid(x);
        }
        for x in haar(3, 20, seed) {
            let p = cay.acceptance(&x);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    });
}

pub fn parallel_sampling_depends_only_on_seed_and_workers() {
    proptest!(config(48), |(seed in any::<u64>(), workers in 1usize..=4, count in 0usize..20)| {
        let draw = |k: usize, rng: &mut stein_rotations::rng::Stream| haar_sample::<f64, _>(3, k, rng);
        let a = par_sample(seed, count, workers, draw).unwrap();
        prop_assert_eq!(a.len(), count);
        prop_assert_eq!(a, par_sample(seed, count, workers, draw).unwrap());
    });
}

pub fn kernels_are_exactly_symmetric() {
    proptest!(config(32), |(n in 2usize..=4, seed in any::<u64>(), f in entries(), tau in 0.2..2.0f64, sigma in 0.2..1.5f64)| {
        let cfg = KernelConfig::new(tau).unwrap();
        let xs = haar(n, 3, seed);
        let vmf = VmfParams::new(matrix(n, &f)).unwrap();
        prop_assert_eq!(kp_vmf(&xs[0], &xs[1], &vmf, &cfg).unwrap(), kp_vmf(&xs[1], &xs[0], &vmf, &cfg).unwrap());
        let rn = RnParams::from_sigma(xs[2].clone(), sigma).unwrap();
        prop_assert_eq!(kp_rn(&xs[0], &xs[1], &rn, &cfg).unwrap(), kp_rn(&xs[1], &xs[0], &rn, &cfg).unwrap());
    });
}

pub fn vmf_kernel_is_rotation_equivariant() {
    proptest!(config(32), |(n in 2usize..=4, seed in any::<u64>(), f in entries(), tau in 0.2..2.0f64)| {
        let cfg = KernelConfig::new(tau).unwrap();
        let xs = haar(n, 3, seed);
        let (x, y, r) = (&xs[0], &xs[1], &xs[2]);
        let f = matrix(n, &f);
        let base = kp_vmf(x, y, &VmfParams::new(f.clone()).unwrap(), &cfg).unwrap();
        let moved = kp_vmf(&r.compose(x), &r.compose(y), &VmfParams::new(r.matrix() * f).unwrap(), &cfg).unwrap();
        prop_assert!(rel_close(base, moved, 1e-12), "{base} vs {moved}");
    });
}

pub fn gram_matrices_are_symmetric_psd() {
    proptest!(config(32), |(n in 2usize..=4, seed in any::<u64>(), f in entries(), sigma in 0.2..1.5f64)| {
        let cfg = KernelConfig::default();
        let xs = haar(n, 12, seed);
        let check = |g: DMatrix<f64>| {
            assert!(g.iter().all(|v| v.is_finite()), "non-finite gram {g}");
            assert_eq!(g, g.transpose());
            let eig = g.symmetric_eigenvalues();
            let scale = eig.iter().fold(0.0f64, |m, l| m.max(l.abs()));
            assert!(eig.iter().all(|&l| l >= -1e-8 * scale), "{eig}");
        };
        check(gram_matrix(&xs, &VmfKernel::new(VmfParams::new(matrix(n, &f)).unwrap(), cfg)).unwrap());
        check(gram_matrix(&xs, &RnKernel::new(RnParams::from_sigma(xs[0].clone(), sigma).unwrap(), cfg)).unwrap());
    });
}

pub fn v_and_u_statistics_differ_by_the_diagonal() {
    proptest!(config(32), |(seed in any::<u64>(), f in entries(), weights in prop::collection::vec(0.1..3.0f64, 15))| {
        let xs = haar(3, 15, seed);
        let k = VmfKernel::new(VmfParams::new(matrix(3, &f)).unwrap(), KernelConfig::default());
        let ws = WeightedSamples::new(xs.clone(), Some(weights.clone())).unwrap();
        let v = ksd_v(&ws, &k).unwrap();
        let u = ksd_u(&ws, &k).unwrap();
        let diag: f64 = xs.iter().zip(&weights).map(|(x, r)| r * r * k.eval(x, x).unwrap()).sum();
        let n = xs.len() as f64;
        prop_assert!(v >= -1e-10);
        prop_assert!(rel_close(n * n * v, n * (n - 1.0) * u + diag, 1e-10), "{} vs {}", n * n * v, n * (n - 1.0) * u + diag);
    });
}

pub fn mksde_minimizes_the_quadratic() {
    proptest!(config(16), |(seed in any::<u64>(), f in entries(), deltas in prop::collection::vec(-1.0..1.0f64, 20 * 9))| {
        let truth = VmfParams::new(matrix(3, &f)).unwrap();
        let xs = sample_vmf(&truth, 40, &mut stream(seed)).unwrap();
        let ws = WeightedSamples::unweighted(xs).unwrap();
        let cfg = KernelConfig::default();
        let report = mksde_vmf(&ws, &cfg).unwrap();
        let FittedParams::Vmf(fit) = &report.params else { unreachable!() };
        let system = mksde_vmf_system(&ws, &cfg);
        let best = system.objective(fit.f());
        for d in deltas.chunks(9) {
            let scale = 10f64.powi((d[0].abs() * 6.0) as i32 - 4);
            let perturbed = fit.f() + DMatrix::from_row_slice(3, 3, d) * scale;
            prop_assert!(system.objective(&perturbed) >= best - 1e-9);
        }
    });
}

pub fn mksde_is_left_equivariant() {
    proptest!(config(16), |(seed in any::<u64>(), f in entries())| {
        let truth = VmfParams::new(matrix(3, &f)).unwrap();
        let xs = sample_vmf(&truth, 40, &mut stream(seed)).unwrap();
        let r = haar(3, 1, seed ^ 1)[0].clone();
        let cfg = KernelConfig::default();
        let fit = |xs: Vec<Rotation>| match mksde_vmf(&WeightedSamples::unweighted(xs).unwrap(), &cfg).unwrap().params {
            FittedParams::Vmf(p) => p.into_matrix(),
            FittedParams::Rn(_) => unreachable!(),
        };
        let base = fit(xs.clone());
        let moved = fit(xs.iter().map(|x| r.compose(x)).collect());
        let err = (moved - r.matrix() * &base).norm();
        prop_assert!(err <= 1e-8 * base.norm().max(1.0), "error {err}");
    });
}

pub fn gof_is_deterministic_and_consistent() {
    proptest!(config(16), |(seed in any::<u64>(), beta in 0.01..0.5f64)| {
        let xs = sample_vmf(&VmfParams::new(DMatrix::identity(3, 3)).unwrap(), 30, &mut stream(seed)).unwrap();
        let cfg = GofConfig::new(KernelConfig::default(), beta, 200).unwrap();
        let a = gof_test(&xs, Family::Vmf, &cfg, &mut stream(seed)).unwrap();
        prop_assert_eq!(&a, &gof_test(&xs, Family::Vmf, &cfg, &mut stream(seed)).unwrap());
        let FittedParams::Vmf(p) = &a.theta_hat else { unreachable!() };
        let v = ksd_v(&WeightedSamples::unweighted(xs.clone()).unwrap(), &VmfKernel::new(p.clone(), cfg.kernel)).unwrap();
        prop_assert_eq!(a.statistic, 30.0 * v);
        prop_assert_eq!(a.reject, a.statistic > a.quantile);
    });
}

pub fn null_quantile_is_monotone_in_level() {
    proptest!(config(16), |(lambdas in prop::collection::vec(0.0..2.0f64, 1..12), seed in any::<u64>(), mut betas in prop::collection::vec(0.001..0.999f64, 8))| {
        let null = NullDistribution::simulate(&lambdas, 500, seed).unwrap();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let qs: Vec<f64> = betas.iter().map(|&b| null.quantile(b).unwrap()).collect();
        prop_assert!(qs.windows(2).all(|w| w[0] >= w[1]), "{qs:?}");
    });
}

/// Every property, by name, for runners that report them individually.
#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    (
        "haar_is_valid_and_deterministic",
        haar_is_valid_and_deterministic,
    ),
    ("exp_and_log_are_inverse", exp_and_log_are_inverse),
    (
        "basis_outer_products_sum_to_scaled_identity",
        basis_outer_products_sum_to_scaled_identity,
    ),
    (
        "shuffle_is_symmetric_orthogonal_involution",
        shuffle_is_symmetric_orthogonal_involution,
    ),
    (
        "samplers_are_deterministic_and_valid",
        samplers_are_deterministic_and_valid,
    ),
    (
        "parallel_sampling_depends_only_on_seed_and_workers",
        parallel_sampling_depends_only_on_seed_and_workers,
    ),
    (
        "kernels_are_exactly_symmetric",
        kernels_are_exactly_symmetric,
    ),
    (
        "vmf_kernel_is_rotation_equivariant",
        vmf_kernel_is_rotation_equivariant,
    ),
    (
        "gram_matrices_are_symmetric_psd",
        gram_matrices_are_symmetric_psd,
    ),
    (
        "v_and_u_statistics_differ_by_the_diagonal",
        v_and_u_statistics_differ_by_the_diagonal,
    ),
    (
        "mksde_minimizes_the_quadratic",
        mksde_minimizes_the_quadratic,
    ),
    ("mksde_is_left_equivariant", mksde_is_left_equivariant),
    (
        "gof_is_deterministic_and_consistent",
        gof_is_deterministic_and_consistent,
    ),
    (
        "null_quantile_is_monotone_in_level",
        null_quantile_is_monotone_in_level,
    ),
];
