mod common;

use common::{brute_force_qp, gauss_jordan_inverse, gaussian_matrix, mat_vec, multiclass_dual_oracle, shuffled_labels, to_rows};
use interp_lab::datagen::{sample_gmm, GmmSpec, Labels};
use interp_lab::equivalence::check_det_condition;
use interp_lab::linalg::{gram, Matrix};
use interp_lab::rng::Stream;
use interp_lab::solvers::{
    fit_binary_svm, fit_mni, fit_mni_targets, fit_multiclass_svm, fit_ova_svm, fit_ovo_svm, fit_simplex_ova_svm,
    simplex_targets, ClassifierKind, LinearClassifier, SolverOptions,
};
use proptest::prelude::*;

fn tiny_instance(seed: u64, n: usize, p: usize, k: usize) -> (Matrix, Labels) {
    let mut s = Stream::from_seed(seed);
    let x = gaussian_matrix(&mut s, p, n);
    let labels = shuffled_labels(&mut s, n, k);
    (x, labels)
}

fn margins(w: &Matrix, x: &Matrix, labels: &Labels) -> Vec<((usize, usize), f64)> {
    let s = w.matmul(x).unwrap();
    let mut out = Vec::new();
    for i in 0..labels.n() {
        for c in 0..labels.k() {
            if c != labels.get(i) {
                out.push(((c, i), s[(labels.get(i), i)] - s[(c, i)]));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn multiclass_svm_matches_enumeration_oracle(seed in any::<u64>(), n in 2usize..7, extra in 0usize..5) {
        let p = (n + extra).min(10);
        let (x, labels) = tiny_instance(seed, n, p, 3);
        let (h, vars) = multiclass_dual_oracle(&x, &labels);
        let (oracle_value, oracle_lambda) = brute_force_qp(&h, &vec![1.0; vars.len()]);
        let fit = fit_multiclass_svm(&x, &labels, &SolverOptions::default()).unwrap();
        let w2 = 2.0 * fit.primal_objective;
        // At the optimum ‖W‖² = λᵀHλ = 2·(dual value).
        prop_assert!((w2 - 2.0 * oracle_value).abs() <= 1e-6 * (1.0 + w2), "{w2} vs {}", 2.0 * oracle_value);
        for (&(c, i), &l) in vars.iter().zip(&oracle_lambda) {
            prop_assert!((fit.duals.lambda(&labels, c, i) - l).abs() <= 1e-5 * (1.0 + l));
        }
        for ((c, i), m) in margins(fit.classifier.weights(), &x, &labels) {
            prop_assert!(m >= 1.0 - 1e-7);
            prop_assert!((fit.duals.lambda(&labels, c, i) * (m - 1.0)).abs() <= 1e-6);
        }
        prop_assert!((fit.primal_objective - fit.dual_objective).abs() <= 1e-7 * (1.0 + fit.primal_objective));
    }

    #[test]
    fn binary_svm_matches_enumeration_oracle(seed in any::<u64>(), n in 2usize..10) {
        let mut s = Stream::from_seed(seed);
        let x = gaussian_matrix(&mut s, 12, n);
        let signs: Vec<f64> = (0..n).map(|i| if (s.next_u64() >> 7).is_multiple_of(2) || i == 0 { 1.0 } else { -1.0 }).collect();
        let m: Vec<f64> = (0..n).map(|_| 0.5 + s.uniform()).collect();
        let a = gram(&x);
        let h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| signs[i] * signs[j] * a[(i, j)]).collect()).collect();
        let (value, nu) = brute_force_qp(&h, &m);
        let fit = fit_binary_svm(&x, &signs, &m, &SolverOptions::default(), None).unwrap();
        let w2: f64 = fit.w.iter().map(|v| v * v).sum();
        prop_assert!((w2 - 2.0 * value).abs() <= 1e-6 * (1.0 + w2));
        for (got, want) in fit.nu.iter().zip(&nu) {
            prop_assert!((got - want).abs() <= 1e-5 * (1.0 + want));
        }
    }

    #[test]
    fn mni_interpolates_and_lies_in_row_space(seed in any::<u64>(), n in 2usize..12, k in 2usize..6) {
        let (x, labels) = tiny_instance(seed, n, n + 15, k);
        let clf = fit_mni(&x, &labels).unwrap();
        let y = labels.one_hot();
        let fitted = clf.weights().matmul(&x).unwrap();
        prop_assert!(fitted.sub(&y).unwrap().max_abs() <= 1e-9);
        // Row space: w_c = X β_c with β_c = A⁻¹y_c from an independent inverse.
        let inv = gauss_jordan_inverse(&to_rows(&gram(&x))).unwrap();
        for c in 0..k {
            let beta = mat_vec(&inv, &y.row(c));
            let w = x.matvec(&beta).unwrap();
            for (r, v) in w.iter().enumerate() {
                prop_assert!((clf.weights()[(c, r)] - v).abs() <= 1e-8 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn svm_margins_feasible_and_no_larger_than_mni(seed in any::<u64>(), n in 3usize..15, k in 2usize..5) {
        let (x, labels) = tiny_instance(seed, n, 3 * n, k);
        let fit = fit_multiclass_svm(&x, &labels, &SolverOptions::default()).unwrap();
        prop_assert!(fit.min_margin >= 1.0 - 1e-6);
        // The simplex-target interpolator has every pairwise margin equal to one,
        // so it is feasible and cannot have smaller norm.
        let mni = fit_mni_targets(&x, simplex_targets(&labels).matrix()).unwrap();
        let mni_norm2 = mni.weights().frobenius_norm().powi(2);
        prop_assert!(2.0 * fit.primal_objective <= mni_norm2 * (1.0 + 1e-9));
    }

    #[test]
    fn det_condition_implies_svm_equals_simplex_mni(seed in any::<u64>()) {
        let spec = GmmSpec::orthogonal(3, 400, 0.2 * 20.0).unwrap();
        let data = sample_gmm(&spec, 9, seed).unwrap();
        let det = check_det_condition(&data.x, &data.labels).unwrap();
        let fit = fit_multiclass_svm(&data.x, &data.labels, &SolverOptions::default()).unwrap();
        if det.verdict {
            let mni = fit_mni_targets(&data.x, simplex_targets(&data.labels).matrix()).unwrap();
            let w = fit.classifier.weights();
            let gap = w.sub(mni.weights()).unwrap().frobenius_norm();
            prop_assert!(gap <= 1e-8 * (1.0 + w.frobenius_norm()), "gap {gap}");
            prop_assert_eq!(fit.classifier.diagnostics.iterations, 0);
        }
    }

    #[test]
    fn affine_targets_preserve_decisions(seed in any::<u64>(), alpha in 0.1f64..5.0, beta in -3.0f64..3.0) {
        let (x, labels) = tiny_instance(seed, 10, 40, 4);
        let y = labels.one_hot();
        let t = Matrix::from_fn(4, 10, |c, i| alpha * y[(c, i)] + beta);
        let a = fit_mni(&x, &labels).unwrap();
        let b = fit_mni_targets(&x, &t).unwrap();
        let mut s = Stream::from_seed(seed ^ 0xabc);
        let test = gaussian_matrix(&mut s, 40, 200);
        prop_assert_eq!(a.predict_batch(&test).unwrap(), b.predict_batch(&test).unwrap());
    }
}

#[test]
fn svm_scaling_convention() {
    let x = Matrix::identity(3);
    let labels = Labels::new(vec![0, 1, 2], 3).unwrap();
    let fit = fit_multiclass_svm(&x, &labels, &SolverOptions::default()).unwrap();
    let mni = fit_mni_targets(&x, simplex_targets(&labels).matrix()).unwrap();
    let s = fit.classifier.inner_products(&x).unwrap();
    let z = simplex_targets(&labels);
    assert!(s.sub(z.matrix()).unwrap().max_abs() < 1e-12);
    assert!(fit.classifier.weights().sub(mni.weights()).unwrap().max_abs() < 1e-12);
}

#[test]
fn ova_variants_hit_their_margins_when_interpolating() {
    let (x, labels) = tiny_instance(5, 8, 200, 3);
    let opts = SolverOptions::default();
    let simplex = fit_simplex_ova_svm(&x, &labels, &opts).unwrap();
    assert_eq!(simplex.kind(), ClassifierKind::SimplexOva);
    let s = simplex.inner_products(&x).unwrap();
    for i in 0..8 {
        for c in 0..3 {
            let target = if labels.get(i) == c { 2.0 / 3.0 } else { -1.0 / 3.0 };
            assert!(if labels.get(i) == c { s[(c, i)] >= target - 1e-7 } else { s[(c, i)] <= target + 1e-7 });
        }
    }
    let ova = fit_ova_svm(&x, &labels, (1.0, -1.0), &opts).unwrap();
    assert_eq!(ova.predict_batch(&x).unwrap(), labels.as_slice());
    let ovo = fit_ovo_svm(&x, &labels, &opts).unwrap();
    assert_eq!(ovo.pairs(), &[(0, 1), (0, 2), (1, 2)]);
    assert_eq!(ovo.predict_batch(&x).unwrap(), labels.as_slice());
}

#[test]
fn ovo_vote_ties_go_to_lowest_class() {
    // Pair scores: (0,1) → 1, (0,2) → 0, (1,2) → 2: one vote each.
    let w = Matrix::from_rows(&[&[-1.0], &[1.0], &[-1.0]]).unwrap();
    let clf = LinearClassifier::ovo(w, 3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
    assert_eq!(clf.predict(&[1.0]).unwrap(), 0);
    // A zero score votes for the first class of the pair.
    let z = LinearClassifier::ovo(Matrix::zeros(1, 1), 2, vec![(0, 1)]).unwrap();
    assert_eq!(z.predict(&[5.0]).unwrap(), 0);
    let flat = LinearClassifier::new(Matrix::zeros(3, 2), ClassifierKind::Mni).unwrap();
    assert_eq!(flat.predict(&[1.0, 1.0]).unwrap(), 0);
}

#[test]
fn dimension_mismatch_rejected() {
    let clf = LinearClassifier::new(Matrix::zeros(3, 2), ClassifierKind::Mni).unwrap();
    assert!(clf.predict(&[1.0]).is_err());
    assert!(LinearClassifier::new(Matrix::zeros(3, 2), ClassifierKind::Ovo).is_err());
}
