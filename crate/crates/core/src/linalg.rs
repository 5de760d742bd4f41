//! Dense symmetric linear algebra on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Checks `a` is square and symmetric to `rel_tol` relative to its largest entry.
pub fn check_symmetric(name: &'static str, a: &Mat, rel_tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            name,
            expected: "square matrix".into(),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if gap > rel_tol * scale || !gap.is_finite() {
                return Err(Error::NotSymmetric {
                    name,
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of the symmetrized input with eigenvalues sorted ascending.
pub fn sym_eigen(a: &Mat) -> (Vector, Mat) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(a: &Mat) -> Vector {
    let mut v: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Vector::from_vec(v)
}

/// `V diag(values) Vᵀ`.
pub fn compose(values: &Vector, vectors: &Mat) -> Mat {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    symmetrize(&(scaled * vectors.transpose()))
}

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (values, vectors) = sym_eigen(a);
    compose(&values.map(f), &vectors)
}

/// Symmetric square root of a PSD matrix; negative roundoff eigenvalues clamp to 0.
pub fn psd_sqrt(a: &Mat) -> Mat {
    sym_apply(a, |x| x.max(0.0).sqrt())
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix.
pub fn pinv_sym(a: &Mat, rel_tol: f64) -> Mat {
    let (values, vectors) = sym_eigen(a);
    let cutoff = rel_tol * values.amax();
    compose(
        &values.map(|x| if x.abs() > cutoff { 1.0 / x } else { 0.0 }),
        &vectors,
    )
}

pub fn lambda_max(a: &Mat) -> f64 {
    sym_eigenvalues(a).max()
}

pub fn lambda_min(a: &Mat) -> f64 {
    sym_eigenvalues(a).min()
}

/// Cholesky factorization of an SPD matrix with a diagnostic on failure.
pub fn cholesky(context: &'static str, a: &Mat) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(a)).ok_or_else(|| {
        let diag = a.diagonal();
        Error::Factorization {
            context,
            min_diag: diag.min(),
            max_diag: diag.max(),
        }
    })
}

/// `⟨A, B⟩_F = tr(Aᵀ B)`.
pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

/// Euclidean projection of `values` onto `{x : x_i ≥ floor, Σ x_i ≤ cap}`.
///
/// When the floored vector violates the cap, the solution is
/// `max(v_i - θ, floor)` for the unique shift `θ > 0` meeting the cap, found by
/// scanning the sorted breakpoints `v_i - floor`.
pub fn project_floor_cap(values: &[f64], floor: f64, cap: f64) -> Vec<f64> {
    let d = values.len();
    debug_assert!(cap >= floor * d as f64);
    let floored: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    if floored.iter().sum::<f64>() <= cap {
        return floored;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut active_sum = 0.0;
    let mut theta = 0.0;
    for m in 1..=d {
        active_sum += sorted[m - 1];
        let candidate = (active_sum + (d - m) as f64 * floor - cap) / m as f64;
        let upper = sorted[m - 1] - floor;
        let lower = if m < d { sorted[m] - floor } else { f64::NEG_INFINITY };
        if candidate <= upper && candidate >= lower {
            theta = candidate;
            break;
        }
    }
    values.iter().map(|&v| (v - theta).max(floor)).collect()
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(values))
}

pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(name: &'static str, rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            name,
            expected: format!("{ncols} columns"),
            found: format!("{} columns in row {i}", r.len()),
        });
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sqrt_of_diagonal() {
        let s = psd_sqrt(&diag(&[4.0, 1.0]));
        assert!((s - diag(&[2.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            check_symmetric("A", &a, 1e-10),
            Err(Error::NotSymmetric { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_floor_cap(&[2.0, 2.0], 1e-10, 1.0), vec![0.5, 0.5]);
        assert_eq!(project_floor_cap(&[1.0, 1.0], 1e-10, 100.0), vec![1.0, 1.0]);
        let p = project_floor_cap(&[1.0, -1.0], 1e-3, 1.0);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-15 && (p[1] - 1e-3).abs() < 1e-15);
    }

    /// Brute-force oracle: minimize the squared distance over a fine grid of
    /// the 2-dimensional feasible set.
    #[test]
    fn projection_matches_grid_oracle_in_2d() {
        let floor = 0.01;
        let cap = 1.0;
        for v in [[0.3, 1.4], [-0.5, 2.0], [0.9, 0.8], [0.2, 0.1], [-1.0, -2.0]] {
            let p = project_floor_cap(&v, floor, cap);
            let step = 1e-3;
            let mut best = (f64::INFINITY, [0.0, 0.0]);
            let mut x = floor;
            while x <= cap {
                let mut y = floor;
                while x + y <= cap + 1e-12 {
                    let dist = (x - v[0]).powi(2) + (y - v[1]).powi(2);
                    if dist < best.0 {
                        best = (dist, [x, y]);
                    }
                    y += step;
                }
                x += step;
            }
            assert!((p[0] - best.1[0]).abs() < 2e-3 && (p[1] - best.1[1]).abs() < 2e-3, "{v:?} {p:?} {best:?}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..6), cap in 0.5f64..4.0) {
            let floor = 1e-6;
            let p = project_floor_cap(&v, floor, cap);
            prop_assert!(p.iter().all(|&x| x >= floor));
            prop_assert!(p.iter().sum::<f64>() <= cap * (1.0 + 1e-12));
            let q = project_floor_cap(&p, floor, cap);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
