//! Dense linear algebra helpers.
//!
//! Least squares uses a hand-written Householder QR. Symmetric eigen- and
//! singular value decompositions are delegated to faer.

use faer::Mat;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Householder QR of an m×n matrix (m ≥ n), kept in factored form.
#[derive(Clone, Debug)]
pub struct Qr {
    /// Upper triangle holds R; reflectors are kept separately.
    r: Array2<f64>,
    reflectors: Vec<(usize, Array1<f64>, f64)>,
}

impl Qr {
    pub fn new(a: ArrayView2<'_, f64>) -> Result<Self> {
        let (m, n) = a.dim();
        if m < n {
            return Err(Error::Shape(format!(
                "QR needs at least as many rows as columns, got {m}x{n}"
            )));
        }
        let mut r = a.to_owned();
        let mut reflectors = Vec::with_capacity(n);
        for j in 0..n {
            let norm = r.slice(s![j.., j]).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if r[(j, j)] > 0.0 { -norm } else { norm };
            let mut v = r.slice(s![j.., j]).to_owned();
            v[0] -= alpha;
            let vnorm2 = v.dot(&v);
            if vnorm2 == 0.0 {
                continue;
            }
            let beta = 2.0 / vnorm2;
            for c in j..n {
                let proj = beta * v.dot(&r.slice(s![j.., c]));
                r.slice_mut(s![j.., c]).scaled_add(-proj, &v);
            }
            reflectors.push((j, v, beta));
        }
        Ok(Qr { r, reflectors })
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// Diagonal of R.
    pub fn r_diagonal(&self) -> Array1<f64> {
        (0..self.ncols()).map(|j| self.r[(j, j)]).collect()
    }

    /// Columns whose R diagonal is below `rel_tol` times the largest one.
    pub fn deficient_columns(&self, rel_tol: f64) -> Vec<usize> {
        let d = self.r_diagonal();
        let max = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        d.iter()
            .enumerate()
            .filter(|(_, v)| max == 0.0 || v.abs() <= rel_tol * max)
            .map(|(j, _)| j)
            .collect()
    }

    /// Applies Qᵀ to the columns of `b` in place.
    pub fn apply_qt(&self, b: &mut Array2<f64>) {
        for (j, v, beta) in &self.reflectors {
            let proj = v.dot(&b.slice(s![*j.., ..])) * *beta;
            let mut tail = b.slice_mut(s![*j.., ..]);
            for (i, mut row) in tail.axis_iter_mut(Axis(0)).enumerate() {
                row.scaled_add(-v[i], &proj);
            }
        }
    }

    /// Least-squares solution X minimizing ‖A·X − B‖_F.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.ncols();
        if b.nrows() != self.r.nrows() {
            return Err(Error::Shape(format!(
                "right-hand side has {} rows, expected {}",
                b.nrows(),
                self.r.nrows()
            )));
        }
        let mut qtb = b.to_owned();
        self.apply_qt(&mut qtb);
        let mut x = qtb.slice(s![..n, ..]).to_owned();
        for j in (0..n).rev() {
            let d = self.r[(j, j)];
            if d == 0.0 {
                return Err(Error::RankDeficient(format!("column {j} of the design matrix")));
            }
            for c in (j + 1)..n {
                let f = self.r[(j, c)];
                if f != 0.0 {
                    let (head, tail) = x.view_mut().split_at(Axis(0), j + 1);
                    let mut row_j = head.index_axis_move(Axis(0), j);
                    row_j.scaled_add(-f, &tail.row(c - j - 1));
                }
            }
            x.row_mut(j).mapv_inplace(|v| v / d);
        }
        Ok(x)
    }
}

/// Least-squares solve of A·X ≈ B through Householder QR.
pub fn lstsq(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Qr::new(a)?.solve(b)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted in
/// descending order; eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::Shape(format!("eigen-decomposition needs a square matrix, got {n}x{m}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("eigen-decomposition of a non-finite matrix".into()));
    }
    let eig = to_faer(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Domain(format!("eigen-decomposition failed: {e:?}")))?;
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| vecs[(r, order[c])]);
    Ok((values, vectors))
}

/// Thin SVD `A = U·diag(s)·Vᵀ` with singular values in descending order.
pub fn thin_svd(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("SVD of a non-finite matrix".into()));
    }
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Domain(format!("SVD failed: {e:?}")))?;
    let sv = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let k = sv.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let s = order.iter().map(|&i| sv[i]).collect();
    let u_sorted = Array2::from_shape_fn((u.nrows(), k), |(r, c)| u[(r, order[c])]);
    let vt_sorted = Array2::from_shape_fn((k, v.nrows()), |(r, c)| v[(c, order[r])]);
    Ok((u_sorted, s, vt_sorted))
}

/// (M)^(-1/2) of a symmetric positive definite matrix.
pub fn inverse_sqrt_spd(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = symmetric_eigen(a)?;
    if let Some(v) = vals.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (eigenvalue {v})"
        )));
    }
    let scaled = &vecs * &vals.mapv(|v| 1.0 / v.sqrt());
    Ok(scaled.dot(&vecs.t()))
}

/// Frobenius norm.
pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn lstsq_square_system_is_exact() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![[3.0], [5.0]];
        let x = lstsq(a.view(), b.view()).unwrap();
        assert!((x[(0, 0)] - 0.8).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn lstsq_residual_is_orthogonal() {
        let a = random(40, 5, 1);
        let b = random(40, 7, 2);
        let x = lstsq(a.view(), b.view()).unwrap();
        let resid = &b - &a.dot(&x);
        let g = a.t().dot(&resid);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn qr_flags_rank_deficiency() {
        let mut a = random(20, 3, 3);
        let c0 = a.column(0).to_owned();
        a.column_mut(2).assign(&(&c0 * 2.0));
        let qr = Qr::new(a.view()).unwrap();
        assert_eq!(qr.deficient_columns(1e-10), vec![2]);
    }

    #[test]
    fn eigen_and_inverse_sqrt() {
        let m = array![[4.0, 1.0], [1.0, 3.0]];
        let (vals, vecs) = symmetric_eigen(m.view()).unwrap();
        assert!(vals[0] >= vals[1]);
        let recon = (&vecs * &vals).dot(&vecs.t());
        assert!((&recon - &m).iter().all(|v| v.abs() < 1e-12));
        let isq = inverse_sqrt_spd(m.view()).unwrap();
        let id = isq.dot(&m).dot(&isq);
        assert!((&id - &Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn svd_reconstructs() {
        let a = random(9, 4, 4);
        let (u, s, vt) = thin_svd(a.view()).unwrap();
        assert!(s[0] >= s[1] && s[1] >= s[2]);
        let recon = (&u * &s).dot(&vt);
        assert!((&recon - &a).iter().all(|v| v.abs() < 1e-12));
    }
}
