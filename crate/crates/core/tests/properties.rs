use proptest::prelude::*;

use hidim_delta::data_gen::{banded_precision, fixed_design, gmv_weights, normal_vec, Seed};
use hidim_delta::delta_method::{
    classify_regime, jacobian_at, linearization_residual, numeric_jacobian, predict_rate, Regime, RegimeEvidence,
    SquaredNorm, TransferredRate,
};
use hidim_delta::lasso::{soft_threshold, Design};
use hidim_delta::linalg::inequalities::{holder_sides, operator_sides, InequalityFamily};
use hidim_delta::linalg::{
    extreme_eigenvalues, mat_norm, matvec, quad_form, solve_spd, vec_norm, DenseMatrix, DenseVector, NormKind,
};

const SLACK: f64 = 1e-12;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e3..1e3f64, r * c).prop_map(move |data| DenseMatrix::new(r, c, data).unwrap())
    })
}

fn matrix_and_vector(max: usize) -> impl Strategy<Value = (DenseMatrix, DenseVector)> {
    matrix(max, max).prop_flat_map(|a| {
        let c = a.cols();
        (
            Just(a),
            prop::collection::vec(-1e3..1e3f64, c).prop_map(|v| DenseVector::new(v).unwrap()),
        )
    })
}

fn symmetric(max: usize) -> impl Strategy<Value = DenseMatrix> {
    matrix(max, max).prop_filter("square", |a| a.is_square()).prop_map(|a| {
        let n = a.rows();
        DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)])).unwrap()
    })
}

fn spd(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |data| {
            let b = DenseMatrix::new(n, n, data).unwrap();
            let bbt = b.matmul(&b.transpose()).unwrap();
            DenseMatrix::from_fn(n, n, |i, j| bbt[(i, j)] + if i == j { 1.0 } else { 0.0 }).unwrap()
        })
    })
}

/// `sqrt(n) Q` with `Q` from Gram-Schmidt on a Gaussian draw: columns
/// orthogonal with squared norm `n`.
fn orthogonal_design(n: usize, p: usize, seed: u64) -> DenseMatrix {
    let mut rng = Seed(seed).substream("orthogonal-design", &[n as u64, p as u64]);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < p {
        let mut v = normal_vec(&mut rng, n);
        for q in &cols {
            let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= d * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    DenseMatrix::from_fn(n, p, |i, j| (n as f64).sqrt() * cols[j][i]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn operator_inequalities_hold((a, x) in matrix_and_vector(12)) {
        for family in [InequalityFamily::Frobenius, InequalityFamily::MaxColSum, InequalityFamily::MaxRowSum] {
            let sides = operator_sides(family, &a, &x).unwrap();
            prop_assert!(sides.holds(SLACK), "{family:?}: {sides:?}");
        }
    }

    #[test]
    fn holder_bound_holds(a in symmetric(10), seed in any::<u64>()) {
        let mut rng = Seed(seed).substream("w", &[]);
        let w = DenseVector::new(normal_vec(&mut rng, a.rows())).unwrap();
        prop_assert!(holder_sides(&a, &w).unwrap().holds(SLACK));
    }

    #[test]
    fn frobenius_is_root_sum_of_row_norms(a in matrix(10, 10)) {
        let rows: f64 = (0..a.rows())
            .map(|i| vec_norm(&DenseVector::new(a.row(i).to_vec()).unwrap(), NormKind::L2).unwrap().powi(2))
            .sum();
        let f = mat_norm(&a, NormKind::Frobenius).unwrap();
        prop_assert!((f * f - rows).abs() <= 1e-10 * (1.0 + rows));
    }

    #[test]
    fn transpose_swaps_column_and_row_sums(a in matrix(8, 8)) {
        let at = a.transpose();
        prop_assert_eq!(mat_norm(&a, NormKind::MaxColSum).unwrap(), mat_norm(&at, NormKind::MaxRowSum).unwrap());
    }

    #[test]
    fn spd_solve_round_trips(a in spd(15), seed in any::<u64>()) {
        let mut rng = Seed(seed).substream("x", &[]);
        let x = DenseVector::new(normal_vec(&mut rng, a.rows())).unwrap();
        let b = matvec(&a, &x).unwrap();
        let solved = solve_spd(&a, &b).unwrap();
        let resid = matvec(&a, &solved).unwrap().sub(&b).unwrap();
        let bn = vec_norm(&b, NormKind::L2).unwrap();
        prop_assert!(vec_norm(&resid, NormKind::L2).unwrap() <= 1e-10 * (1.0 + bn));
    }

    #[test]
    fn eigenvalues_bracket_rayleigh_quotients(a in spd(10), seed in any::<u64>()) {
        let bounds = extreme_eigenvalues(&a, 1e-8).unwrap();
        prop_assert!(bounds.min > 0.0 && bounds.min <= bounds.max);
        let mut rng = Seed(seed).substream("probe", &[]);
        for _ in 0..5 {
            let x = DenseVector::new(normal_vec(&mut rng, a.rows())).unwrap();
            let rq = quad_form(&x, &a).unwrap() / x.dot(&x).unwrap();
            let scale = bounds.max.abs();
            prop_assert!(rq <= bounds.max + 1e-6 * scale, "rq {rq} > max {}", bounds.max);
            prop_assert!(rq >= bounds.min - 1e-6 * scale, "rq {rq} < min {}", bounds.min);
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences(beta in prop::collection::vec(-10.0..10.0f64, 1..12)) {
        let map = SquaredNorm { dim: beta.len() };
        let b = DenseVector::new(beta).unwrap();
        let analytic = jacobian_at(&map, &b).unwrap();
        let numeric = numeric_jacobian(&map, &b, 1e-5).unwrap();
        for j in 0..b.dim() {
            let (x, y) = (analytic[(0, j)], numeric[(0, j)]);
            prop_assert!((x - y).abs() <= f64::max(1e-6, 1e-4 * x.abs()));
        }
    }

    #[test]
    fn quadratic_residual_is_second_order(
        beta in prop::collection::vec(-5.0..5.0f64, 1..8),
        seed in any::<u64>(),
    ) {
        let map = SquaredNorm { dim: beta.len() };
        let b = DenseVector::new(beta).unwrap();
        let mut rng = Seed(seed).substream("dir", &[]);
        let dir = DenseVector::new(normal_vec(&mut rng, b.dim())).unwrap();
        let unit = dir.scale(1.0 / vec_norm(&dir, NormKind::L2).unwrap());
        let small = linearization_residual(&map, &b, &unit.scale(1e-3)).unwrap();
        let large = linearization_residual(&map, &b, &unit.scale(1e-1)).unwrap();
        prop_assert!(small <= 0.02 * large, "{small} vs {large}");
    }

    #[test]
    fn rate_transfer_identity(r_n in 1e-3..1e6f64, norm in 1e-6..1e6f64) {
        let pred = predict_rate(r_n, norm, Regime::A).unwrap();
        match pred.r_star {
            TransferredRate::Rate(r) => prop_assert!((r * norm - r_n).abs() <= 1e-12 * r_n),
            TransferredRate::FasterThanRn => prop_assert!(false, "regime A gives a rate"),
        }
        let b = predict_rate(r_n, norm, Regime::B).unwrap();
        prop_assert_eq!(b.r_star, TransferredRate::FasterThanRn);
    }

    #[test]
    fn regime_is_scale_invariant(
        norms in prop::collection::vec(1e-3..1e3f64, 3..8),
        scale in 1e-4..1e4f64,
    ) {
        let dims: Vec<f64> = (0..norms.len()).map(|i| 10.0 * 2f64.powi(i as i32)).collect();
        let scaled: Vec<f64> = norms.iter().map(|v| v * scale).collect();
        let a = RegimeEvidence::new(dims.clone(), norms).unwrap();
        let b = RegimeEvidence::new(dims, scaled).unwrap();
        prop_assert!((a.slope().unwrap() - b.slope().unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn orthogonal_design_matches_soft_threshold_oracle(
        seed in any::<u64>(),
        (n, p) in (8usize..40).prop_flat_map(|n| (Just(n), 1..=n.min(12))),
        lambda in 0.1..50.0f64,
    ) {
        let x = orthogonal_design(n, p, seed);
        let mut rng = Seed(seed).substream("y", &[]);
        let y = normal_vec(&mut rng, n).into_iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let fit = Design::new(&x).unwrap().fit(&y, lambda, 1e-12, 10_000).unwrap();
        for j in 0..p {
            let z: f64 = (0..n).map(|i| x[(i, j)] * y[i]).sum();
            let oracle = soft_threshold(z, lambda / 2.0) / n as f64;
            prop_assert!((fit.beta_hat[j] - oracle).abs() <= 1e-8, "j={j}: {} vs {oracle}", fit.beta_hat[j]);
        }
    }

    #[test]
    fn lasso_objective_is_monotone_and_kkt_small(seed in any::<u64>(), lambda_scale in 0.2..4.0f64) {
        let (n, p) = (40, 80);
        let x = fixed_design(n, p, Seed(seed)).unwrap();
        let mut rng = Seed(seed).substream("y", &[]);
        let y = normal_vec(&mut rng, n);
        let lambda = lambda_scale * (n as f64 * (p as f64).ln()).sqrt();
        let design = Design::new(&x).unwrap();
        let fit = design.fit(&y, lambda, 1e-9, 10_000).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        prop_assert!(fit.kkt_violation <= 1e-6);
        prop_assert!((design.kkt_violation(&y, fit.beta_hat.as_slice(), lambda) - fit.kkt_violation).abs() < 1e-12);
    }

    #[test]
    fn support_shrinks_with_lambda_on_orthogonal_designs(seed in any::<u64>(), l1 in 0.1..20.0f64, bump in 0.0..20.0f64) {
        let (n, p) = (30, 10);
        let x = orthogonal_design(n, p, seed);
        let mut rng = Seed(seed).substream("y", &[]);
        let y = normal_vec(&mut rng, n);
        let design = Design::new(&x).unwrap();
        let small = design.fit(&y, l1, 1e-10, 10_000).unwrap();
        let large = design.fit(&y, l1 + bump, 1e-10, 10_000).unwrap();
        prop_assert!(large.beta_hat.count_nonzero() <= small.beta_hat.count_nonzero());
    }

    #[test]
    fn gmv_weights_minimize_variance(s_idx in 0usize..3, strength in 0.05..0.95f64, seed in any::<u64>()) {
        let s = [1, 3, 5][s_idx];
        let spec = banded_precision(12, s, strength).unwrap();
        let w = gmv_weights(&spec.sigma).unwrap();
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        let v = quad_form(&w, &spec.sigma).unwrap();
        let mut rng = Seed(seed).substream("perturb", &[]);
        let mut d = normal_vec(&mut rng, 12);
        let mean = d.iter().sum::<f64>() / 12.0;
        d.iter_mut().for_each(|x| *x -= mean);
        let other = w.add(&DenseVector::new(d).unwrap().scale(0.1)).unwrap();
        prop_assert!(quad_form(&other, &spec.sigma).unwrap() >= v - 1e-12 * v);
    }

    #[test]
    fn banded_precision_spectrum_is_certified(p in 3usize..60, half in 0usize..6, strength in 0.01..0.99f64) {
        let s = (2 * half + 1).min(if p % 2 == 1 { p } else { p - 1 });
        let spec = banded_precision(p, s, strength).unwrap();
        let e = extreme_eigenvalues(&spec.precision, 1e-8).unwrap();
        prop_assert!(e.min >= 1.0 - strength - 1e-6 && e.max <= 1.0 + strength + 1e-6, "{e:?}");
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>(), n in 2usize..20, p in 1usize..20) {
        prop_assert_eq!(fixed_design(n, p, Seed(seed)).unwrap(), fixed_design(n, p, Seed(seed)).unwrap());
        let a = normal_vec(&mut Seed(seed).substream("t", &[n as u64]), 5);
        let b = normal_vec(&mut Seed(seed).substream("t", &[n as u64]), 5);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn regime_b_detected_for_decaying_norms() {
    let dims = vec![100.0, 200.0, 400.0, 800.0];
    let norms: Vec<f64> = dims.iter().map(|d: &f64| d.powf(-0.5)).collect();
    let ev = RegimeEvidence::new(dims, norms).unwrap();
    assert_eq!(classify_regime(&ev, -0.1).unwrap(), Regime::B);
}
