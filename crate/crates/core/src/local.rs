//! Operators stored on their support and applied to dense many-site states.
//!
//! Site 0 is the most significant digit of the global index. A local operator
//! on sites `[s0, s1, ..]` uses the same convention locally: `s0` is the most
//! significant digit of the local index.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};

/// Mixed-radix layout of a product space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let total = dims.iter().product();
        Layout { dims: dims.to_vec(), strides, total }
    }

    /// Layout with a guard on the total dimension.
    pub fn guarded(dims: &[usize], max_total: usize) -> Result<Self> {
        let mut t: usize = 1;
        for &d in dims {
            t = t.checked_mul(d).filter(|&t| t <= max_total).ok_or_else(|| {
                Error::capacity(format!(
                    "Hilbert space dimension of {dims:?} exceeds the dense limit {max_total}"
                ))
            })?;
        }
        Ok(Self::new(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn stride(&self, site: usize) -> usize {
        self.strides[site]
    }

    pub fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.strides[site]) % self.dims[site]
    }

    pub fn support(&self, sites: &[usize]) -> Support {
        let mut offsets = vec![0usize];
        for &s in sites {
            let mut next = Vec::with_capacity(offsets.len() * self.dims[s]);
            for &o in &offsets {
                for k in 0..self.dims[s] {
                    next.push(o + k * self.strides[s]);
                }
            }
            offsets = next;
        }
        let mut bases = vec![0usize];
        for s in 0..self.dims.len() {
            if sites.contains(&s) {
                continue;
            }
            let mut next = Vec::with_capacity(bases.len() * self.dims[s]);
            for &b in &bases {
                for k in 0..self.dims[s] {
                    next.push(b + k * self.strides[s]);
                }
            }
            bases = next;
        }
        bases.sort_unstable();
        Support { sites: sites.to_vec(), map: ColMap { bases, offsets } }
    }
}

/// Index map `(x, a) -> bases[x] + offsets[a]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColMap {
    pub bases: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl ColMap {
    /// Compact map `(x, a) -> x * r + a` for `n` outer blocks.
    pub fn compact(n: usize, r: usize) -> Self {
        ColMap { bases: (0..n).map(|x| x * r).collect(), offsets: (0..r).collect() }
    }

    pub fn len(&self) -> usize {
        self.bases.len() * self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Support {
    pub sites: Vec<usize>,
    pub map: ColMap,
}

impl Support {
    pub fn local_dim(&self) -> usize {
        self.map.offsets.len()
    }

    pub fn env_dim(&self) -> usize {
        self.map.bases.len()
    }

    pub fn compact(&self, r: usize) -> ColMap {
        ColMap::compact(self.env_dim(), r)
    }
}

/// Entry type of the dense kernels: real for real channels, complex otherwise.
pub trait Scalar: faer::traits::ComplexField + Copy + Send + Sync + std::ops::AddAssign + std::ops::Add<Output = Self> {
    const UNIT: Self;
    fn conjugate(self) -> Self;
    fn scaled(self, a: f64) -> Self;
}

impl Scalar for f64 {
    const UNIT: Self = 1.0;
    fn conjugate(self) -> Self {
        self
    }
    fn scaled(self, a: f64) -> Self {
        self * a
    }
}

impl Scalar for C64 {
    const UNIT: Self = ONE;
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn scaled(self, a: f64) -> Self {
        self * a
    }
}

/// `out[:, mo(x, b)] (+)= sum_a inp[:, mi(x, a)] * m[a, b]` for every outer block `x`.
pub fn col_op<T: Scalar>(
    inp: MatRef<'_, T>,
    mi: &ColMap,
    m: MatRef<'_, T>,
    mut out: MatMut<'_, T>,
    mo: &ColMap,
    accumulate: bool,
) {
    let rows = inp.nrows();
    let (la, lb) = (m.nrows(), m.ncols());
    debug_assert_eq!(mi.offsets.len(), la);
    debug_assert_eq!(mo.offsets.len(), lb);
    debug_assert_eq!(mi.bases.len(), mo.bases.len());
    debug_assert_eq!(out.nrows(), rows);
    let mut g = Mat::<T>::zeros(rows, la);
    let mut h = Mat::<T>::zeros(rows, lb);
    let in_contiguous = mi.offsets.windows(2).all(|w| w[1] == w[0] + 1);
    let contiguous = mo.offsets.windows(2).all(|w| w[1] == w[0] + 1);
    for x in 0..mi.bases.len() {
        let bi = mi.bases[x];
        let src = if in_contiguous {
            inp.subcols(bi + mi.offsets[0], la)
        } else {
            for (a, &o) in mi.offsets.iter().enumerate() {
                g.col_mut(a).copy_from(inp.col(bi + o));
            }
            g.as_ref()
        };
        let bo = mo.bases[x];
        if contiguous {
            let dst = out.as_mut().subcols_mut(bo + mo.offsets[0], lb);
            matmul(dst, if accumulate { Accum::Add } else { Accum::Replace }, src, m, T::UNIT, Par::Seq);
            continue;
        }
        matmul(h.as_mut(), Accum::Replace, src, m, T::UNIT, Par::Seq);
        for (b, &o) in mo.offsets.iter().enumerate() {
            let src = h.col(b);
            let mut dst = out.as_mut().col_mut(bo + o);
            if accumulate {
                for r in 0..rows {
                    dst[r] += src[r];
                }
            } else {
                dst.copy_from(src);
            }
        }
    }
}

pub fn adjoint<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    a.adjoint().to_owned()
}

/// `(A + A†) / 2`
pub fn hermitian_part<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    let at = adjoint(a);
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + at[(i, j)]).scaled(0.5))
}

fn adjoint_small<T: Scalar>(a: MatRef<'_, T>) -> Mat<T> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conjugate())
}

/// `K rho K†` for Hermitian `rho`, with `K` acting on `sup`.
pub fn sandwich<T: Scalar>(rho: MatRef<'_, T>, sup: &Support, k: MatRef<'_, T>) -> Mat<T> {
    let n = rho.nrows();
    let kd = adjoint_small(k);
    let mut y = Mat::zeros(n, n);
    col_op(rho, &sup.map, kd.as_ref(), y.as_mut(), &sup.map, false);
    let z = adjoint(y.as_ref());
    let mut w = Mat::zeros(n, n);
    col_op(z.as_ref(), &sup.map, kd.as_ref(), w.as_mut(), &sup.map, false);
    w
}

/// `sum_k V_k† rho V_k` in the compact reduced space, each `V_k` of shape `local x r`.
pub fn reduce<T: Scalar>(rho: MatRef<'_, T>, sup: &Support, vs: &[Mat<T>]) -> Mat<T> {
    let n = rho.nrows();
    let r = vs.first().map(|v| v.ncols()).unwrap_or(0);
    let cm = sup.compact(r);
    let mut s = Mat::zeros(cm.len(), cm.len());
    for v in vs {
        let mut y = Mat::zeros(n, cm.len());
        col_op(rho, &sup.map, v.as_ref(), y.as_mut(), &cm, false);
        let z = adjoint(y.as_ref());
        col_op(z.as_ref(), &sup.map, v.as_ref(), s.as_mut(), &cm, true);
    }
    s
}

/// `out += sum_k U_k S U_k†` for Hermitian compact `S`, each `U_k` of shape `local x r`.
pub fn expand_into<T: Scalar>(s: MatRef<'_, T>, sup: &Support, us: &[Mat<T>], out: &mut Mat<T>) {
    let n = out.nrows();
    let r = us.first().map(|u| u.ncols()).unwrap_or(0);
    let cm = sup.compact(r);
    for u in us {
        let ud = adjoint_small(u.as_ref());
        let mut y = Mat::zeros(cm.len(), n);
        col_op(s, &cm, ud.as_ref(), y.as_mut(), &sup.map, false);
        let z = adjoint(y.as_ref());
        col_op(z.as_ref(), &cm, ud.as_ref(), out.as_mut(), &sup.map, true);
    }
}

/// `rho H` with `H` acting on `sup` (no Hermiticity assumed).
pub fn right_mul(rho: MatRef<'_, C64>, sup: &Support, h: MatRef<'_, C64>) -> CMat {
    let n = rho.ncols();
    let mut y = Mat::zeros(rho.nrows(), n);
    col_op(rho, &sup.map, h, y.as_mut(), &sup.map, false);
    y
}

/// `H rho + rho H` for Hermitian `rho` and `H`.
pub fn anticommutator(rho: MatRef<'_, C64>, sup: &Support, h: MatRef<'_, C64>) -> CMat {
    let y = right_mul(rho, sup, h);
    let n = y.nrows();
    Mat::from_fn(n, n, |i, j| y[(i, j)] + y[(j, i)].conj())
}

/// `O psi` for an operator on `sup`.
pub fn apply_vec(psi: &[C64], sup: &Support, o: MatRef<'_, C64>) -> Vec<C64> {
    let l = sup.local_dim();
    let mut out = vec![ZERO; psi.len()];
    let mut buf = vec![ZERO; l];
    for &b in &sup.map.bases {
        for (a, &off) in sup.map.offsets.iter().enumerate() {
            buf[a] = psi[b + off];
        }
        for (a, &off) in sup.map.offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (k, &v) in buf.iter().enumerate() {
                acc += o[(a, k)] * v;
            }
            out[b + off] = acc;
        }
    }
    out
}

/// Reduced density matrix on `sup` (Tr over the complement).
pub fn reduced_density(rho: MatRef<'_, C64>, sup: &Support) -> CMat {
    let l = sup.local_dim();
    Mat::from_fn(l, l, |a, b| {
        let (oa, ob) = (sup.map.offsets[a], sup.map.offsets[b]);
        sup.map.bases.iter().map(|&x| rho[(x + oa, x + ob)]).sum()
    })
}

/// Tr(O rho) for an operator on `sup`.
pub fn local_expect(rho: MatRef<'_, C64>, sup: &Support, o: MatRef<'_, C64>) -> C64 {
    let r = reduced_density(rho, sup);
    let l = sup.local_dim();
    let mut acc = ZERO;
    for a in 0..l {
        for b in 0..l {
            acc += o[(a, b)] * r[(b, a)];
        }
    }
    acc
}

/// Dense lift of a local operator to the full space.
pub fn lift(layout: &Layout, sites: &[usize], o: MatRef<'_, C64>) -> CMat {
    let sup = layout.support(sites);
    let n = layout.total();
    let mut out = Mat::zeros(n, n);
    for &x in &sup.map.bases {
        for (a, &oa) in sup.map.offsets.iter().enumerate() {
            for (b, &ob) in sup.map.offsets.iter().enumerate() {
                out[(x + oa, x + ob)] = o[(a, b)];
            }
        }
    }
    out
}
