//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use interp_lab::datagen::Labels;
use interp_lab::linalg::Matrix;
use interp_lab::rng::Stream;

/// Dense row-major square matrix inverse by Gauss–Jordan elimination with
/// partial pivoting. `None` when a pivot falls below `1e-13·scale`.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))?;
        if aug[piv][col].abs() < 1e-13 * scale {
            return None;
        }
        aug.swap(col, piv);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i)).collect()
}

pub fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn gaussian_matrix(stream: &mut Stream, rows: usize, cols: usize) -> Matrix {
    let mut data = vec![0.0; rows * cols];
    stream.fill_normal(&mut data);
    Matrix::from_col_major(rows, cols, data).unwrap()
}

/// Labels `0..k` cycling, then shuffled deterministically.
pub fn shuffled_labels(stream: &mut Stream, n: usize, k: usize) -> Labels {
    let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        let j = (stream.next_u64() % (i as u64 + 1)) as usize;
        y.swap(i, j);
    }
    Labels::new(y, k).unwrap()
}

/// Optimal value and maximizer of `max bᵀλ − ½λᵀHλ` over `λ ≥ 0` by
/// enumerating every candidate support set. Exponential; keep `dim ≤ 12`.
pub fn brute_force_qp(h: &[Vec<f64>], b: &[f64]) -> (f64, Vec<f64>) {
    let m = b.len();
    assert!(m <= 14);
    let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
    for mask in 0u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let mut lambda = vec![0.0; m];
        if !support.is_empty() {
            let sub: Vec<Vec<f64>> = support.iter().map(|&i| support.iter().map(|&j| h[i][j]).collect()).collect();
            let Some(inv) = gauss_jordan_inverse(&sub) else { continue };
            let rhs: Vec<f64> = support.iter().map(|&i| b[i]).collect();
            let sol = mat_vec(&inv, &rhs);
            if sol.iter().any(|&v| v < -1e-12) {
                continue;
            }
            for (&i, v) in support.iter().zip(sol) {
                lambda[i] = v.max(0.0);
            }
        }
        let hl = mat_vec(h, &lambda);
        let grad_ok = (0..m).all(|i| mask >> i & 1 == 1 || b[i] - hl[i] <= 1e-9);
        if !grad_ok {
            continue;
        }
        let obj = b.iter().zip(&lambda).map(|(x, y)| x * y).sum::<f64>()
            - 0.5 * lambda.iter().zip(&hl).map(|(x, y)| x * y).sum::<f64>();
        if obj > best.0 {
            best = (obj, lambda);
        }
    }
    best
}

/// The multiclass hard-margin dual in the multipliers `λ_{c,i}` (`c ≠ y_i`),
/// built from the primal: the constraint `(w_{y_i} − w_c)ᵀx_i ≥ 1` has
/// feature vector `x_i ⊗ (e_{y_i} − e_c)`, and `H` is their Gram matrix.
pub fn multiclass_dual_oracle(x: &Matrix, labels: &Labels) -> (Vec<Vec<f64>>, Vec<(usize, usize)>) {
    let (p, n, k) = (x.rows(), labels.n(), labels.k());
    let mut feats = Vec::new();
    let mut vars = Vec::new();
    for i in 0..n {
        for c in 0..k {
            if c == labels.get(i) {
                continue;
            }
            let mut f = vec![0.0; p * k];
            for r in 0..p {
                f[labels.get(i) * p + r] += x[(r, i)];
                f[c * p + r] -= x[(r, i)];
            }
            feats.push(f);
            vars.push((c, i));
        }
    }
    let h = feats
        .iter()
        .map(|a| feats.iter().map(|b| a.iter().zip(b).map(|(u, v)| u * v).sum()).collect())
        .collect();
    (h, vars)
}
