//! Matrix product chains: transfer matrices, environments and blocking.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::tensor::{make_bond_basis, BondBasis, PepsSpec, SiteTensor, DENSE_STATE_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// `sites[p][s]` is the D x D matrix A^s at position p (cyclically repeated).
#[derive(Clone, Debug)]
pub struct MpsChain {
    pub sites: Vec<Vec<CMat>>,
    pub length: usize,
    pub boundary: Boundary,
}

impl MpsChain {
    pub fn translation_invariant(mats: Vec<CMat>, length: usize, boundary: Boundary) -> Result<Self> {
        let c = MpsChain { sites: vec![mats], length, boundary };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let dd = self.bond_dim();
        if self.sites.is_empty() || self.sites.iter().any(|s| s.is_empty()) {
            return Err(Error::validation("chain has no site matrices"));
        }
        for (p, s) in self.sites.iter().enumerate() {
            for m in s {
                if m.nrows() != dd || m.ncols() != dd {
                    return Err(Error::validation(format!("position {p}: matrices must all be {dd}x{dd}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.sites.len() == 1
    }

    pub fn at(&self, pos: usize) -> &[CMat] {
        &self.sites[pos % self.sites.len()]
    }

    pub fn bond_dim(&self) -> usize {
        self.sites.first().and_then(|s| s.first()).map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn phys_dim(&self) -> usize {
        self.sites[0].len()
    }

    pub fn with_length(&self, length: usize) -> Self {
        MpsChain { sites: self.sites.clone(), length, boundary: self.boundary }
    }
}

/// E_O = Σ_{s,s'} ⟨s'|O|s⟩ A^s ⊗ conj(A^{s'}) at position `pos`; `None` means O = I.
pub fn transfer_matrix_at(chain: &MpsChain, pos: usize, op: Option<&CMat>) -> Result<CMat> {
    let a = chain.at(pos);
    let d = a.len();
    let dd = chain.bond_dim();
    if let Some(o) = op {
        if o.nrows() != d || o.ncols() != d {
            return Err(Error::validation(format!("operator is {}x{}, physical dimension is {d}", o.nrows(), o.ncols())));
        }
    }
    let mut e = Mat::zeros(dd * dd, dd * dd);
    for s in 0..d {
        for sp in 0..d {
            let w = match op {
                Some(o) => o[(sp, s)],
                None => {
                    if s == sp {
                        ONE
                    } else {
                        ZERO
                    }
                }
            };
            if w == ZERO {
                continue;
            }
            let conj = Mat::from_fn(dd, dd, |i, j| a[sp][(i, j)].conj());
            let k = linalg::kron(a[s].as_ref(), conj.as_ref());
            linalg::add_assign(&mut e, k.as_ref(), w);
        }
    }
    Ok(e)
}

pub fn transfer_matrix(chain: &MpsChain, op: Option<&CMat>) -> Result<CMat> {
    transfer_matrix_at(chain, 0, op)
}

/// Transfer-matrix eigenvalues sorted by decreasing modulus.
pub fn transfer_spectrum(chain: &MpsChain) -> Result<Vec<C64>> {
    let e = transfer_matrix(chain, None)?;
    let mut w = linalg::eigvals(e.as_ref())?;
    w.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    Ok(w)
}

/// ξ = −1/ln|λ2/λ1|, with ξ = 0 when λ2 = 0.
pub fn correlation_length(chain: &MpsChain) -> Result<f64> {
    if !chain.is_translation_invariant() {
        return Err(Error::validation("correlation length needs a translation-invariant chain"));
    }
    let w = transfer_spectrum(chain)?;
    let l1 = w[0].norm();
    if l1 == 0.0 {
        return Err(Error::numerical("transfer matrix is nilpotent"));
    }
    let l2 = w.get(1).map(|x| x.norm()).unwrap_or(0.0);
    let r = l2 / l1;
    if r < 1e-14 {
        return Ok(0.0);
    }
    if r > 1.0 - 1e-9 {
        return Err(Error::numerical(format!(
            "degenerate leading transfer eigenvalues |λ2/λ1| = {r:.12}: critical or non-injective chain"
        )));
    }
    Ok(-1.0 / r.ln())
}

fn mat_pow(a: &CMat, mut n: usize) -> CMat {
    let mut result = linalg::eye(a.nrows());
    let mut base = a.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    result
}

/// Tr(E_O E^{N−1}) / Tr(E^N) on a periodic chain.
pub fn mps_expectation(chain: &MpsChain, op: &CMat, n: usize) -> Result<f64> {
    if chain.boundary != Boundary::Periodic {
        return Err(Error::validation("mps_expectation needs a periodic chain"));
    }
    if n == 0 {
        return Err(Error::validation("chain length must be positive"));
    }
    let e = transfer_matrix(chain, None)?;
    let lam = transfer_spectrum(chain)?[0].norm();
    let e = linalg::scale(e.as_ref(), C64::new(1.0 / lam, 0.0));
    let eo = linalg::scale(transfer_matrix(chain, Some(op))?.as_ref(), C64::new(1.0 / lam, 0.0));
    let p = mat_pow(&e, n - 1);
    let den = linalg::trace((&p * &e).as_ref());
    if den.norm() < 1e-300 {
        return Err(Error::numerical("Tr(E^N) vanishes"));
    }
    let num = linalg::trace((&eo * &p).as_ref());
    let v = num / den;
    let herm = linalg::max_abs(linalg::sub(op.as_ref(), linalg::dagger(op.as_ref()).as_ref()).as_ref()) < 1e-14;
    if herm && v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(Error::numerical(format!("expectation of a Hermitian operator has imaginary part {:.3e}", v.im)));
    }
    Ok(v.re)
}

/// Dense periodic-chain state ψ_s = Tr(A^{s1} ... A^{sN}), normalized.
pub fn mps_state(chain: &MpsChain) -> Result<(Vec<C64>, f64)> {
    if chain.boundary != Boundary::Periodic {
        return Err(Error::validation("dense chain state needs a periodic chain"));
    }
    let d = chain.phys_dim();
    let n = chain.length;
    let total = d
        .checked_pow(n as u32)
        .filter(|&t| t <= DENSE_STATE_LIMIT)
        .ok_or_else(|| Error::capacity(format!("d^N = {d}^{n} exceeds {DENSE_STATE_LIMIT}")))?;
    let dd = chain.bond_dim();
    let mut amps = vec![ZERO; total];
    // prefix products, depth-first over digits (site 0 most significant)
    let mut stack: Vec<CMat> = vec![linalg::eye(dd)];
    let mut digits = vec![0usize; n];
    let mut idx = 0usize;
    let mut depth = 0usize;
    loop {
        if depth == n {
            let m = stack.last().unwrap();
            amps[idx] = linalg::trace(m.as_ref());
            // backtrack
            loop {
                if depth == 0 {
                    let nrm = linalg::normalize(&mut amps);
                    return Ok((amps, nrm));
                }
                depth -= 1;
                stack.pop();
                idx /= d;
                digits[depth] += 1;
                if digits[depth] < d {
                    break;
                }
                digits[depth] = 0;
            }
        }
        let next = stack.last().unwrap() * &chain.at(depth)[digits[depth]];
        stack.push(next);
        idx = idx * d + digits[depth];
        depth += 1;
    }
}

/// Fixed point of X ↦ Σ_s A^s X A^s† (`left = false`) or X ↦ Σ_s A^s† X A^s
/// (`left = true`) by power iteration, trace-normalized and Hermitized.
pub fn environment(mats: &[CMat], left: bool, tol: f64, max_iter: usize) -> Result<(CMat, f64)> {
    let dd = mats[0].nrows();
    let apply = |x: &CMat| -> CMat {
        let mut out = Mat::zeros(dd, dd);
        for a in mats {
            let y = if left { &(a.adjoint() * x) * a } else { &(a * x) * a.adjoint() };
            linalg::add_assign(&mut out, y.as_ref(), ONE);
        }
        out
    };
    let mut x = linalg::scale(linalg::eye(dd).as_ref(), C64::new(1.0 / dd as f64, 0.0));
    for _ in 0..max_iter {
        let y = apply(&x);
        let t = linalg::trace(y.as_ref());
        if t.norm() == 0.0 {
            return Err(Error::numerical("environment iteration collapsed to zero"));
        }
        let y = linalg::hermitize(linalg::scale(y.as_ref(), ONE / t).as_ref());
        let res = linalg::frobenius(linalg::sub(y.as_ref(), x.as_ref()).as_ref());
        x = y;
        if res < tol {
            return Ok((x, t.re));
        }
    }
    Err(Error::numerical(format!("environment did not converge in {max_iter} iterations")))
}

/// Blocked tensor as a `d^l x D^2` matrix, column `a * D + b` with `a` the
/// left virtual leg and `b` the right one.
#[derive(Clone, Debug)]
pub struct BlockTensor {
    pub matrix: CMat,
    pub bond_dim: usize,
    pub block: usize,
    /// Bond weights `s_k` (bond state Σ s_k |kk⟩ / ‖s‖) for the gauged form.
    pub bond_weights: Option<Vec<f64>>,
}

impl BlockTensor {
    pub fn delta(&self) -> f64 {
        let g = self.matrix.adjoint() * &self.matrix;
        let n = g.nrows();
        linalg::op_norm(linalg::sub(g.as_ref(), linalg::eye(n).as_ref()).as_ref())
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let s = linalg::singular_values(self.matrix.as_ref())?;
        let cols = self.matrix.ncols();
        if self.matrix.nrows() < cols {
            let mut s = s;
            s.resize(cols, 0.0);
            return Ok(s);
        }
        Ok(s)
    }
}

fn product(chain: &MpsChain, start: usize, l: usize, phys: usize) -> CMat {
    let d = chain.phys_dim();
    let mut m = linalg::eye(chain.bond_dim());
    let mut rem = phys;
    let mut digits = vec![0; l];
    for k in (0..l).rev() {
        digits[k] = rem % d;
        rem /= d;
    }
    for (k, &s) in digits.iter().enumerate() {
        m = &m * &chain.at(start + k)[s];
    }
    m
}

pub const ENV_TOL: f64 = 1e-12;
pub const ENV_MAX_ITER: usize = 1_000_000;

/// Merge sites `start .. start + l`. The gauged form dresses the boundary
/// legs with inverse square roots of the environments and splits the bond
/// weights off so the blocked map is close to an isometry.
pub fn block_mps(chain: &MpsChain, start: usize, l: usize, gauged: bool) -> Result<BlockTensor> {
    if l == 0 {
        return Err(Error::validation("block size must be at least 1"));
    }
    let d = chain.phys_dim();
    let dd = chain.bond_dim();
    let rows = d
        .checked_pow(l as u32)
        .filter(|&r| r <= DENSE_STATE_LIMIT)
        .ok_or_else(|| Error::capacity(format!("d^l = {d}^{l} too large")))?;
    if !gauged {
        let mut b = Mat::zeros(rows, dd * dd);
        for s in 0..rows {
            let m = product(chain, start, l, s);
            for a in 0..dd {
                for c in 0..dd {
                    b[(s, a * dd + c)] = m[(a, c)];
                }
            }
        }
        return Ok(BlockTensor { matrix: b, bond_dim: dd, block: l, bond_weights: None });
    }
    if !chain.is_translation_invariant() {
        return Err(Error::validation("gauged blocking needs a translation-invariant chain"));
    }
    let w = transfer_spectrum(chain)?;
    let lam = w[0].norm();
    if w.len() > 1 && w[1].norm() > (1.0 - 1e-9) * lam {
        return Err(Error::numerical("degenerate leading transfer eigenvalue: environments are not unique"));
    }
    let scale = C64::new(1.0 / lam.sqrt(), 0.0);
    let mats: Vec<CMat> = chain.at(0).iter().map(|a| linalg::scale(a.as_ref(), scale)).collect();
    let normed = MpsChain { sites: vec![mats.clone()], length: chain.length, boundary: chain.boundary };
    let (sigma, _) = environment(&mats, false, ENV_TOL, ENV_MAX_ITER)?;
    let (rho, _) = environment(&mats, true, ENV_TOL, ENV_MAX_ITER)?;
    let c = linalg::trace((&rho * &sigma).as_ref()).re;
    let rho = linalg::scale(rho.as_ref(), C64::new(1.0 / c, 0.0));
    let check_pd = |x: &CMat, name: &str| -> Result<()> {
        let ev = linalg::eigvalsh(x.as_ref())?;
        if ev[0] <= 1e-12 * ev[ev.len() - 1].abs() {
            return Err(Error::numerical(format!("environment {name} is singular (min eigenvalue {:.3e})", ev[0])));
        }
        Ok(())
    };
    check_pd(&sigma, "sigma")?;
    check_pd(&rho, "rho")?;
    let sq = |x: &CMat| linalg::herm_fn(x.as_ref(), f64::sqrt);
    let isq = |x: &CMat| linalg::herm_fn(x.as_ref(), |v| 1.0 / v.sqrt());
    let m = &sq(&rho)? * &sq(&sigma)?;
    let f = linalg::svd(m.as_ref())?;
    let left = &f.v.adjoint() * &isq(&sigma)?;
    let right = &isq(&rho)? * &f.u;
    let mut b = Mat::zeros(rows, dd * dd);
    for s in 0..rows {
        let p = &(&left * &product(&normed, 0, l, s)) * &right;
        for a in 0..dd {
            for cc in 0..dd {
                b[(s, a * dd + cc)] = p[(a, cc)];
            }
        }
    }
    Ok(BlockTensor { matrix: b, bond_dim: dd, block: l, bond_weights: Some(f.s.clone()) })
}

/// Periodic ring of `n / l` blocked sites as a PEPS spec.
///
/// Ring vertices `0` and `M − 1` list their right bond first (the wrap edge
/// sorts by neighbor id), so their columns are permuted to `(right, left)`.
/// For `M = 2` edge 0 joins the right leg of vertex 0 to the left leg of
/// vertex 1 and edge 1 closes the ring.
pub fn blocked_ring_spec(chain: &MpsChain, n: usize, l: usize, gauged: bool) -> Result<PepsSpec> {
    if l == 0 || n % l != 0 {
        return Err(Error::validation(format!("chain length {n} is not divisible by block size {l}")));
    }
    let m = n / l;
    if m < 2 {
        return Err(Error::validation(format!("blocked ring needs at least 2 blocks, got {m}")));
    }
    if !gauged && !chain.is_translation_invariant() && chain.sites.len() % l != 0 {
        return Err(Error::validation("site-dependent chain period must be a multiple of the block size"));
    }
    let graph = Graph::cycle(m)?;
    let dd = chain.bond_dim();
    let mut tensors = Vec::with_capacity(m);
    let mut weights = None;
    for v in 0..m {
        let bt = block_mps(chain, v * l, l, gauged)?;
        weights = bt.bond_weights.clone();
        let right_first = v == 0 || (v == m - 1 && m > 2);
        let mat = if right_first {
            Mat::from_fn(bt.matrix.nrows(), dd * dd, |s, k| {
                let (r, lft) = (k / dd, k % dd);
                bt.matrix[(s, lft * dd + r)]
            })
        } else {
            bt.matrix
        };
        tensors.push(SiteTensor::new(v, mat, dd, graph.neighbors(v))?);
    }
    let bond = match weights {
        Some(s) => {
            let mut phi0 = vec![ZERO; dd * dd];
            for (k, &x) in s.iter().enumerate() {
                phi0[k * dd + k] = C64::new(x, 0.0);
            }
            BondBasis::from_phi0(phi0)?
        }
        None => make_bond_basis(dd)?,
    };
    PepsSpec::new(graph, tensors, bond)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_chain() -> MpsChain {
        let a0 = linalg::from_real_rows(&[&[0.6]]);
        let a1 = linalg::from_real_rows(&[&[0.8]]);
        MpsChain::translation_invariant(vec![a0, a1], 4, Boundary::Periodic).unwrap()
    }

    #[test]
    fn product_chain_transfer_and_xi() {
        let c = product_chain();
        let e = transfer_matrix(&c, None).unwrap();
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-15);
        assert_eq!(correlation_length(&c).unwrap(), 0.0);
        assert!((mps_expectation(&c, &linalg::eye(2), 5).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_site_block_is_reshape() {
        let a0 = linalg::from_real_rows(&[&[1.0, 0.5], &[0.0, 0.2]]);
        let a1 = linalg::from_real_rows(&[&[0.0, 0.0], &[0.3, 1.0]]);
        let c = MpsChain::translation_invariant(vec![a0.clone(), a1.clone()], 4, Boundary::Periodic).unwrap();
        let b = block_mps(&c, 0, 1, false).unwrap();
        assert_eq!(b.matrix[(0, 1)], a0[(0, 1)]);
        assert_eq!(b.matrix[(1, 2)], a1[(1, 0)]);
    }
}
