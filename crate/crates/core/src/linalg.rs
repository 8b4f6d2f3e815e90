//! Small dense helpers on top of faer.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;
pub type RMat = Mat<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(m: usize, n: usize) -> CMat {
    Mat::zeros(m, n)
}

pub fn eye(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let m = rows.len();
    let n = if m == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(m, n, |i, j| rows[i][j])
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let m = rows.len();
    let n = if m == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(m, n, |i, j| c(rows[i][j], 0.0))
}

pub fn dagger(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ma, na) = (a.nrows(), a.ncols());
    let (mb, nb) = (b.nrows(), b.ncols());
    Mat::from_fn(ma * mb, na * nb, |i, j| a[(i / mb, j / nb)] * b[(i % mb, j % nb)])
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    let n = a.nrows().min(a.ncols());
    (0..n).map(|i| a[(i, i)]).sum()
}

/// (A + A†)/2
/// Real copy of `m` if every entry has zero imaginary part.
pub fn exact_real(m: &CMat) -> Option<RMat> {
    let mut ok = true;
    let r = Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        ok &= m[(i, j)].im == 0.0;
        m[(i, j)].re
    });
    ok.then_some(r)
}

pub fn complexify(m: &RMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

pub fn hermitize(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn sub(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn add(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn add_assign(a: &mut CMat, b: MatRef<'_, C64>, s: C64) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] += b[(i, j)] * s;
        }
    }
}

pub fn commutator(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let ab = a * b;
    let ba = b * a;
    sub(ab.as_ref(), ba.as_ref())
}

/// Singular values in descending order.
pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut s = a
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(s)
}

/// Operator (spectral) norm.
pub fn op_norm(a: MatRef<'_, C64>) -> f64 {
    singular_values(a)
        .ok()
        .and_then(|s| s.first().copied())
        .unwrap_or(0.0)
}

/// Full SVD `A = U diag(s) V†` with singular values descending.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: MatRef<'_, C64>) -> Result<Svd> {
    let f = a
        .svd()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let k = a.nrows().min(a.ncols());
    let s_raw: Vec<f64> = (0..k).map(|i| f.S()[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s_raw[y].partial_cmp(&s_raw[x]).unwrap());
    let u0 = f.U();
    let v0 = f.V();
    let m = a.nrows();
    let n = a.ncols();
    // permute the leading k columns, keep the rest of the full bases as returned
    let u = Mat::from_fn(m, m, |i, j| if j < k { u0[(i, order[j])] } else { u0[(i, j)] });
    let v = Mat::from_fn(n, n, |i, j| if j < k { v0[(i, order[j])] } else { v0[(i, j)] });
    let s = order.iter().map(|&i| s_raw[i]).collect();
    Ok(Svd { u, s, v })
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let f = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigh failed: {e:?}")))?;
    let n = a.nrows();
    let w: Vec<f64> = (0..n).map(|i| f.S()[i].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| w[x].partial_cmp(&w[y]).unwrap());
    let u0 = f.U();
    let u = Mat::from_fn(n, n, |i, j| u0[(i, order[j])]);
    Ok((order.iter().map(|&i| w[i]).collect(), u))
}

pub fn eigvalsh(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let mut w = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigh failed: {e:?}")))?;
    w.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(w)
}

/// Eigenvalues of a general complex matrix.
pub fn eigvals(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eig failed: {e:?}")))
}

/// Eigenvalues of a general real matrix.
pub fn eigvals_real(a: MatRef<'_, f64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eig failed: {e:?}")))
}

/// Eigenpairs of a general complex matrix.
pub fn eig(a: MatRef<'_, C64>) -> Result<(Vec<C64>, CMat)> {
    let f = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eig failed: {e:?}")))?;
    let n = a.nrows();
    Ok(((0..n).map(|i| f.S()[i]).collect(), f.U().to_owned()))
}

/// f(A) for Hermitian A through its eigendecomposition.
pub fn herm_fn(a: MatRef<'_, C64>, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (w, u) = eigh(a)?;
    let n = w.len();
    let fu = Mat::from_fn(n, n, |i, j| u[(i, j)] * f(w[j]));
    Ok(&fu * u.adjoint())
}

/// Moore-Penrose inverse with a relative singular-value cutoff.
pub fn pinv(a: MatRef<'_, C64>, rtol: f64) -> Result<CMat> {
    let f = svd(a)?;
    let smax = f.s.first().copied().unwrap_or(0.0);
    let cut = rtol * smax;
    let (m, n) = (a.nrows(), a.ncols());
    let k = f.s.len();
    let mut out = zeros(n, m);
    for r in 0..k {
        if f.s[r] <= cut || f.s[r] == 0.0 {
            continue;
        }
        let inv = 1.0 / f.s[r];
        for j in 0..m {
            let uj = f.u[(j, r)].conj() * inv;
            for i in 0..n {
                out[(i, j)] += f.v[(i, r)] * uj;
            }
        }
    }
    Ok(out)
}

/// Column vector as an n x 1 matrix.
pub fn col(v: &[C64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn ket_bra(a: &[C64], b: &[C64]) -> CMat {
    Mat::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

pub fn mat_vec(a: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), v.len());
    let mut out = vec![ZERO; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == ZERO {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * vj;
        }
    }
    out
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(v: &mut [C64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// <v|A|v>
pub fn expect(a: MatRef<'_, C64>, v: &[C64]) -> C64 {
    vdot(v, &mat_vec(a, v))
}

/// Orthonormal basis of the orthogonal complement of the columns of `a`
/// (assumed orthonormal), via a full SVD.
pub fn complement(a: MatRef<'_, C64>) -> Result<CMat> {
    let n = a.nrows();
    let k = a.ncols();
    if k == 0 {
        return Ok(eye(n));
    }
    let f = svd(a)?;
    Ok(Mat::from_fn(n, n - k, |i, j| f.u[(i, k + j)]))
}

/// Nuclear-norm half distance between two Hermitian matrices.
pub fn trace_distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<f64> {
    let d = hermitize(sub(a, b).as_ref());
    Ok(0.5 * eigvalsh(d.as_ref())?.iter().map(|x| x.abs()).sum::<f64>())
}

/// exp(A) by scaling and squaring with a truncated Taylor series.
pub fn expm(a: MatRef<'_, C64>) -> CMat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0u32;
    let mut scaled = norm1;
    while scaled > 0.25 {
        scaled *= 0.5;
        s += 1;
    }
    let f = 0.5f64.powi(s as i32);
    let x = scale(a, c(f, 0.0));
    // 0.25^20 / 20! is far below machine precision
    let mut term = eye(n);
    let mut sum = eye(n);
    for k in 1..=20 {
        let next = &term * &x;
        term = scale(next.as_ref(), c(1.0 / k as f64, 0.0));
        add_assign(&mut sum, term.as_ref(), ONE);
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron(eye(2).as_ref(), eye(3).as_ref());
        assert!(frobenius(sub(k.as_ref(), eye(6).as_ref()).as_ref()) < 1e-15);
    }

    #[test]
    fn kron_index_convention() {
        let a = from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let k = kron(a.as_ref(), b.as_ref());
        assert_eq!(k[(0, 1)], c(1.0, 0.0));
        assert_eq!(k[(3, 2)], c(4.0, 0.0));
        assert_eq!(k[(2, 1)], c(3.0, 0.0));
    }

    #[test]
    fn pseudo_inverse_of_rectangular() {
        let a = from_real_rows(&[&[1.0, 0.0], &[0.0, 2.0], &[0.0, 0.0]]);
        let p = pinv(a.as_ref(), 1e-12).unwrap();
        let pa = &p * &a;
        assert!(frobenius(sub(pa.as_ref(), eye(2).as_ref()).as_ref()) < 1e-14);
        assert!((p[(1, 1)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7;
        let a = from_real_rows(&[&[0.0, -t], &[t, 0.0]]);
        let e = expm(a.as_ref());
        assert!((e[(0, 0)].re - t.cos()).abs() < 1e-14);
        assert!((e[(1, 0)].re - t.sin()).abs() < 1e-14);
    }

    #[test]
    fn eigh_is_ascending() {
        let a = from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (w, _) = eigh(a.as_ref()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 3.0).abs() < 1e-14);
    }
}
