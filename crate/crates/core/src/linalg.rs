//! Dense linear algebra kernels: Cholesky factorization, symmetric Jacobi
//! eigendecomposition, and one-sided Jacobi SVD.
//!
//! Everything here is deterministic (fixed sweep order, no pivot
//! randomization) so that fitted models are bit-reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` if a non-positive pivot is encountered.
pub fn cholesky(a: &ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors as matching columns.
pub struct SymEig {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigendecomposition for symmetric matrices.
pub fn eigh(a: &ArrayView2<f64>) -> SymEig {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return SymEig {
            values: m.diag().to_owned(),
            vectors: v,
        };
    }

    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * norm.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = Array1::from_iter(order.iter().map(|&i| m[(i, i)]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    SymEig { values, vectors }
}

/// Thin SVD `a = u · diag(s) · vᵀ` with `u: m×r`, `v: n×r`, `r = min(m, n)`,
/// singular values descending.
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

/// One-sided Jacobi SVD. Singular values are computed to high relative
/// accuracy, which keeps small-singular-value rank decisions trustworthy.
pub fn svd(a: &ArrayView2<f64>) -> Svd {
    let (m, n) = a.dim();
    if m >= n {
        let (u, s, v) = one_sided_jacobi(a.to_owned());
        Svd { u, s, v }
    } else {
        let (u, s, v) = one_sided_jacobi(a.t().to_owned());
        Svd { u: v, s, v: u }
    }
}

/// Count singular values above `cutoff_rel * s_max`.
pub fn rank_from_singular(s: &ArrayView1<f64>, cutoff_rel: f64) -> usize {
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > cutoff_rel * smax).count()
}

/// Core one-sided Jacobi on a tall matrix (m >= n): orthogonalizes columns,
/// accumulating rotations into v.
fn one_sided_jacobi(mut b: Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (m, n) = b.dim();
    let mut v = Array2::<f64>::eye(n);
    let eps = 1e-15_f64;

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = (0..n)
        .map(|j| b.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));

    let mut u = Array2::<f64>::zeros((m, n));
    let mut vv = Array2::<f64>::zeros((n, n));
    let mut s_sorted = Array1::<f64>::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        s_sorted[dst] = sv[src];
        if sv[src] > 0.0 {
            let col = b.column(src).mapv(|x| x / sv[src]);
            u.column_mut(dst).assign(&col);
        }
        vv.column_mut(dst).assign(&v.column(src));
    }
    sv.sort_by(|a, b| b.total_cmp(a));
    (u, s_sorted, vv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn cholesky_identity() {
        let a = Array2::<f64>::eye(4);
        let l = cholesky(&a.view()).unwrap();
        assert_eq!(l, Array2::<f64>::eye(4));
    }

    #[test]
    fn cholesky_diagonal() {
        let a = Array2::from_diag(&array![4.0, 9.0]);
        let l = cholesky(&a.view()).unwrap();
        assert_eq!(l, Array2::from_diag(&array![2.0, 3.0]));
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let l = cholesky(&a.view()).unwrap();
        let r = l.dot(&l.t());
        for i in 0..2 {
            for j in 0..2 {
                assert_close(r[(i, j)], a[(i, j)], 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a.view()).is_none());
    }

    #[test]
    fn forward_solve_matches_hand_computation() {
        let l = array![[2.0, 0.0], [1.0, 3.0]];
        let b = array![4.0, 8.0];
        let y = forward_substitute(&l.view(), &b.view());
        assert_eq!(y, array![2.0, 2.0]);
    }

    #[test]
    fn eigh_diagonal_matrix() {
        let a = Array2::from_diag(&array![1.0, 3.0, 2.0]);
        let e = eigh(&a.view());
        assert_eq!(e.values, array![3.0, 2.0, 1.0]);
    }

    #[test]
    fn eigh_reconstructs_symmetric_input() {
        let a = array![[2.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.5]];
        let e = eigh(&a.view());
        let lam = Array2::from_diag(&e.values);
        let r = e.vectors.dot(&lam).dot(&e.vectors.t());
        for i in 0..3 {
            for j in 0..3 {
                assert_close(r[(i, j)], a[(i, j)], 1e-10);
            }
        }
    }

    #[test]
    fn svd_recovers_rank_and_values() {
        // rank-1: outer product of (1,2) and (3,0,4)
        let a = array![[3.0, 0.0, 4.0], [6.0, 0.0, 8.0]];
        let d = svd(&a.view());
        assert_close(d.s[0], (5.0_f64 * 5.0 + 100.0).sqrt(), 1e-10); // ||a||_F
        assert_eq!(rank_from_singular(&d.s.view(), 1e-10), 1);
    }

    #[test]
    fn svd_reconstructs_wide_matrix() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let d = svd(&a.view());
        let r = d.u.dot(&Array2::from_diag(&d.s)).dot(&d.v.t());
        for i in 0..2 {
            for j in 0..3 {
                assert_close(r[(i, j)], a[(i, j)], 1e-10);
            }
        }
    }

    #[test]
    fn svd_orthonormal_right_vectors() {
        let a = array![[1.0, 0.5], [0.3, 2.0], [0.0, 1.0], [1.0, 1.0]];
        let d = svd(&a.view());
        let g = d.v.t().dot(&d.v);
        for i in 0..2 {
            for j in 0..2 {
                assert_close(g[(i, j)], if i == j { 1.0 } else { 0.0 }, 1e-12);
            }
        }
    }
}
