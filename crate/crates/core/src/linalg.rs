//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values below `RANK_RTOL * sigma_max` are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

fn square_svd(a: &DMatrix<f64>) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    // Padding with zero rows makes V^T square, so the null space is available.
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    padded.svd(true, true)
}

fn cutoff(sv: &DVector<f64>) -> f64 {
    RANK_RTOL * sv.iter().cloned().fold(0.0, f64::max).max(1e-300)
}

pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let svd = square_svd(a);
    let c = cutoff(&svd.singular_values);
    svd.singular_values.iter().filter(|&&s| s > c).count()
}

/// Orthonormal basis of `{x : A x = 0}` as the columns of an `n x k` matrix.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = square_svd(a);
    let c = cutoff(&svd.singular_values);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= c)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    // Rows of V^T beyond the padded matrix's column count do not exist, but
    // when m >= n the singular values cover all of them.
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Independent rows spanning the row space of `[A | b]`'s `A` part:
/// returns `(A', b')` with `A'` of full row rank and the same solution set
/// (when the system is consistent).
pub fn row_reduce(a: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, n) = a.shape();
    if m == 0 {
        return (a.clone(), b.clone());
    }
    let svd = a.clone().svd(true, true);
    let c = cutoff(&svd.singular_values);
    let u = svd.u.as_ref().expect("requested U");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > c).collect();
    let mut ar = DMatrix::zeros(keep.len(), n);
    let mut br = DVector::zeros(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        let ui = u.column(i);
        ar.row_mut(r).copy_from(&(ui.transpose() * a));
        br[r] = ui.dot(b);
    }
    let _ = m;
    (ar, br)
}

/// Minimum-norm least-squares solution of `A x = b` and the max-abs residual.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.amax());
    }
    let svd = a.clone().svd(true, true);
    let c = cutoff(&svd.singular_values);
    let x = svd.solve(b, c).expect("SVD with U and V");
    let r = a * &x - b;
    (x, r.amax())
}

/// Solves `M x = g` for a symmetric positive (semi)definite `M`. Falls back
/// to a pseudo-inverse when Cholesky fails.
pub fn solve_spd(m: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    if let Some(ch) = m.clone().cholesky() {
        let x = ch.solve(g);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    let svd = m.clone().svd(true, true);
    let c = 1e-14 * svd.singular_values.amax().max(1e-300);
    svd.solve(g, c).unwrap_or_else(|_| DVector::zeros(g.len()))
}
