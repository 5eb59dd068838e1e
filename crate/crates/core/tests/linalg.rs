mod common;

use common::{gauss_jordan_inverse, gaussian_matrix, to_rows};
use interp_lab::linalg::{gram, pinv, pinv_default, quad_form, solve_spd, Matrix};
use interp_lab::rng::Stream;
use interp_lab::Error;
use proptest::prelude::*;

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn pinv_of_identity_is_identity() {
    let inv = pinv_default(&Matrix::identity(3)).unwrap();
    assert!(max_diff(&inv.to_matrix(), &Matrix::identity(3)) < 1e-15);
    assert!(inv.is_full_rank());
}

#[test]
fn pinv_matches_gauss_jordan_on_full_rank_gram() {
    let mut s = Stream::from_seed(1);
    for _ in 0..10 {
        let x = gaussian_matrix(&mut s, 30, 8);
        let a = gram(&x);
        let oracle = gauss_jordan_inverse(&to_rows(&a)).unwrap();
        let got = pinv_default(&a).unwrap().to_matrix();
        let scale = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, row) in oracle.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((got[(i, j)] - v).abs() <= 1e-10 * scale, "({i},{j})");
            }
        }
    }
}

#[test]
fn solve_spd_agrees_with_gauss_jordan() {
    let mut s = Stream::from_seed(2);
    let x = gaussian_matrix(&mut s, 20, 6);
    let a = gram(&x);
    let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
    let oracle = common::mat_vec(&gauss_jordan_inverse(&to_rows(&a)).unwrap(), &b);
    let got = solve_spd(&a, &b).unwrap();
    for (g, o) in got.iter().zip(&oracle) {
        assert!((g - o).abs() < 1e-10 * (1.0 + o.abs()));
    }
}

#[test]
fn asymmetric_and_non_finite_inputs_rejected() {
    let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
    assert!(matches!(pinv_default(&m), Err(Error::NotSymmetric(_))));
    assert!(Matrix::from_col_major(1, 1, vec![f64::NAN]).is_err());
}

#[test]
fn binary_round_trip() {
    let mut s = Stream::from_seed(3);
    let x = gaussian_matrix(&mut s, 4, 5);
    let mut buf = Vec::new();
    x.write_binary(&mut buf).unwrap();
    assert_eq!(Matrix::read_binary(buf.as_slice()).unwrap(), x);
}

fn low_rank_psd(seed: u64, n: usize, r: usize) -> Matrix {
    let mut s = Stream::from_seed(seed);
    gram(&gaussian_matrix(&mut s, r, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moore_penrose_identities(seed in any::<u64>(), n in 2usize..9, r in 1usize..9) {
        let a = low_rank_psd(seed, n, r.min(n));
        let g = pinv_default(&a).unwrap();
        let gm = g.to_matrix();
        let scale = 1.0 + a.max_abs() * gm.max_abs();
        let aga = a.matmul(&gm).unwrap().matmul(&a).unwrap();
        prop_assert!(max_diff(&aga, &a) <= 1e-8 * scale * a.max_abs().max(1.0));
        let gag = gm.matmul(&a).unwrap().matmul(&gm).unwrap();
        prop_assert!(max_diff(&gag, &gm) <= 1e-8 * scale * gm.max_abs().max(1.0));
        let ag = a.matmul(&gm).unwrap();
        prop_assert!(max_diff(&ag, &ag.transpose()) <= 1e-8 * scale);
        let ga = gm.matmul(&a).unwrap();
        prop_assert!(max_diff(&ga, &ga.transpose()) <= 1e-8 * scale);
        prop_assert_eq!(g.rank(), r.min(n));
    }

    #[test]
    fn gram_is_exactly_symmetric(seed in any::<u64>(), p in 1usize..12, n in 1usize..12) {
        let mut s = Stream::from_seed(seed);
        let a = gram(&gaussian_matrix(&mut s, p, n));
        prop_assert_eq!(a.clone(), a.transpose());
    }

    #[test]
    fn quad_form_matches_explicit_product(seed in any::<u64>()) {
        let a = low_rank_psd(seed, 5, 7);
        let g = pinv(&a, 1e-12).unwrap();
        let mut s = Stream::from_seed(seed ^ 1);
        let mut u = vec![0.0; 5];
        let mut v = vec![0.0; 5];
        s.fill_normal(&mut u);
        s.fill_normal(&mut v);
        let direct: f64 = u.iter().zip(g.apply(&v).unwrap()).map(|(a, b)| a * b).sum();
        let q = quad_form(&g, &u, &v).unwrap();
        prop_assert!((q - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}
