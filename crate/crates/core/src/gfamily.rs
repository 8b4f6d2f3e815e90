//! The one-parameter g-family chain and its three-body parent Hamiltonian.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::mps::{Boundary, MpsChain};

pub const HAMILTONIAN_MAX_SITES: usize = 14;

fn check_g(g: f64) -> Result<()> {
    if !(g.is_finite() && g.abs() < 1.0) {
        return Err(Error::validation(format!("g = {g} must satisfy |g| < 1")));
    }
    Ok(())
}

/// A⁰ = [[1, g], [0, 0]] / √(1+g), A¹ = [[0, 0], [1, 1]] / √(1+g).
pub fn g_family_matrices(g: f64) -> Result<[CMat; 2]> {
    check_g(g)?;
    let s = 1.0 / (1.0 + g).sqrt();
    Ok([
        linalg::from_real_rows(&[&[s, g * s], &[0.0, 0.0]]),
        linalg::from_real_rows(&[&[0.0, 0.0], &[s, s]]),
    ])
}

pub fn g_family_tensors(g: f64, n: usize) -> Result<MpsChain> {
    let [a0, a1] = g_family_matrices(g)?;
    MpsChain::translation_invariant(vec![a0, a1], n, Boundary::Periodic)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Couplings {
    pub j1: f64,
    pub j2: f64,
    pub h: f64,
}

pub fn couplings(g: f64) -> Couplings {
    Couplings { j1: 2.0 * (g * g - 1.0), j2: (g - 1.0).powi(2), h: (1.0 + g).powi(2) }
}

/// H(g) = Σ_i J₁ ZᵢZᵢ₊₁ + J₂ ZᵢXᵢ₊₁Zᵢ₊₂ − h Xᵢ on a periodic chain, site 0 the
/// most significant qubit.
pub fn g_family_hamiltonian(g: f64, n: usize) -> Result<CMat> {
    check_g(g)?;
    if n < 3 {
        return Err(Error::validation(format!("chain length {n} must be at least 3")));
    }
    if n > HAMILTONIAN_MAX_SITES {
        return Err(Error::capacity(format!("N = {n} exceeds the dense limit {HAMILTONIAN_MAX_SITES}")));
    }
    let c = couplings(g);
    let dim = 1usize << n;
    let bit = |x: usize, i: usize| (x >> (n - 1 - i)) & 1;
    let flip = |i: usize| 1usize << (n - 1 - i);
    let z = |x: usize, i: usize| if bit(x, i) == 0 { 1.0 } else { -1.0 };
    let mut h = Mat::<C64>::zeros(dim, dim);
    for x in 0..dim {
        let mut diag = 0.0;
        for i in 0..n {
            let (i1, i2) = ((i + 1) % n, (i + 2) % n);
            diag += c.j1 * z(x, i) * z(x, i1);
            let y = x ^ flip(i1);
            h[(y, x)].re += c.j2 * z(x, i) * z(x, i2);
            let y = x ^ flip(i);
            h[(y, x)].re -= c.h;
        }
        h[(x, x)].re += diag;
    }
    Ok(h)
}

pub fn pauli_x() -> CMat {
    linalg::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_z() -> CMat {
    linalg::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn couplings_at_known_points() {
        let c = couplings(0.0);
        assert_eq!((c.j1, c.h, c.j2), (-2.0, 1.0, 1.0));
        let c = couplings(0.5);
        assert_eq!((c.j1, c.h, c.j2), (-1.5, 2.25, 0.25));
    }

    #[test]
    fn rejects_out_of_range_g() {
        assert!(g_family_matrices(1.0).is_err());
        assert!(g_family_matrices(-1.2).is_err());
        assert!(g_family_hamiltonian(0.2, 16).is_err());
    }

    #[test]
    fn hamiltonian_is_real_symmetric() {
        let h = g_family_hamiltonian(0.3, 5).unwrap();
        let d = linalg::sub(h.as_ref(), linalg::dagger(h.as_ref()).as_ref());
        assert!(linalg::max_abs(d.as_ref()) < 1e-15);
    }
}
