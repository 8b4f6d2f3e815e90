//! Site tensors, bond states and dense assembly of the target state.
//!
//! Column index of a site matrix is the virtual product basis over the
//! vertex's legs in [`Graph::legs`] order, row-major (first leg most
//! significant). On an edge `(i, j)` with `i < j` the first tensor factor of
//! the bond state sits on vertex `i`.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{self, c, CMat, C64, ZERO};

/// Largest dense vector handled by [`assemble_state`] (amplitudes or virtual configurations).
pub const DENSE_STATE_LIMIT: usize = 1 << 24;

/// Default relative injectivity tolerance, applied as `tol * sigma_max`.
pub const INJECTIVITY_RTOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    pub vertex: usize,
    /// `d x D^deg`
    pub matrix: CMat,
    pub d: usize,
    pub bond_dim: usize,
    /// Neighbor ids in column order.
    pub leg_order: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct InjectivityReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub injective: bool,
    pub pseudo_inverse: CMat,
}

/// Image data of an injective site map.
#[derive(Clone, Debug)]
pub struct SiteImage {
    /// Orthonormal basis of S = Im A (d x dim S).
    pub s_basis: CMat,
    /// Orthonormal basis of the complement (d x (d - dim S)).
    pub f_basis: CMat,
    pub p_s: CMat,
    pub p_perp: CMat,
}

impl SiteTensor {
    pub fn new(vertex: usize, matrix: CMat, bond_dim: usize, leg_order: Vec<usize>) -> Result<Self> {
        let cols = bond_dim.checked_pow(leg_order.len() as u32).unwrap_or(usize::MAX);
        if matrix.ncols() != cols {
            return Err(Error::validation(format!(
                "vertex {vertex}: tensor has {} columns, expected D^deg = {cols}",
                matrix.ncols()
            )));
        }
        if leg_order.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation(format!("vertex {vertex}: leg_order {leg_order:?} is not sorted")));
        }
        Ok(SiteTensor { vertex, d: matrix.nrows(), matrix, bond_dim, leg_order })
    }

    pub fn virtual_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn injectivity_report(&self, tol: Option<f64>) -> Result<InjectivityReport> {
        let s = linalg::singular_values(self.matrix.as_ref())?;
        let sigma_max = s.first().copied().unwrap_or(0.0);
        let sigma_min = if self.d < self.virtual_dim() { 0.0 } else { s.last().copied().unwrap_or(0.0) };
        let tol = tol.unwrap_or(INJECTIVITY_RTOL * sigma_max);
        let rtol = if sigma_max > 0.0 { tol / sigma_max } else { 0.0 };
        let pseudo_inverse = linalg::pinv(self.matrix.as_ref(), rtol.max(f64::EPSILON))?;
        Ok(InjectivityReport { sigma_min, sigma_max, injective: sigma_min > tol, pseudo_inverse })
    }

    pub fn image(&self) -> Result<SiteImage> {
        let f = linalg::svd(self.matrix.as_ref())?;
        let smax = f.s.first().copied().unwrap_or(0.0);
        let r = f.s.iter().filter(|&&x| x > INJECTIVITY_RTOL * smax).count();
        let d = self.d;
        let s_basis = Mat::from_fn(d, r, |i, j| f.u[(i, j)]);
        let f_basis = Mat::from_fn(d, d - r, |i, j| f.u[(i, r + j)]);
        let p_s = &s_basis * s_basis.adjoint();
        let p_perp = &f_basis * f_basis.adjoint();
        Ok(SiteImage { s_basis, f_basis, p_s, p_perp })
    }

    /// ‖A†A − I‖
    pub fn delta(&self) -> f64 {
        let a = &self.matrix;
        let g = a.adjoint() * a;
        let n = g.nrows();
        let e = Mat::from_fn(n, n, |i, j| g[(i, j)] - if i == j { linalg::ONE } else { ZERO });
        linalg::op_norm(e.as_ref())
    }

    /// Polar part `U V†` of the thin SVD, the closest isometry.
    pub fn isometric_part(&self) -> Result<CMat> {
        let f = linalg::svd(self.matrix.as_ref())?;
        let k = self.virtual_dim().min(self.d);
        let u = Mat::from_fn(self.d, k, |i, j| f.u[(i, j)]);
        let v = Mat::from_fn(self.virtual_dim(), k, |i, j| f.v[(i, j)]);
        Ok(&u * v.adjoint())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondBasis {
    pub phi0: Vec<C64>,
    pub phis: Vec<Vec<C64>>,
}

impl BondBasis {
    pub fn bond_dim(&self) -> usize {
        (self.phi0.len() as f64).sqrt().round() as usize
    }

    /// Complete a custom unit vector to an orthonormal basis.
    pub fn from_phi0(phi0: Vec<C64>) -> Result<Self> {
        let n = phi0.len();
        let dd = (n as f64).sqrt().round() as usize;
        if dd * dd != n || n == 0 {
            return Err(Error::validation(format!("bond state length {n} is not D^2")));
        }
        let mut p = phi0;
        let nrm = linalg::normalize(&mut p);
        if nrm == 0.0 {
            return Err(Error::validation("bond state is zero"));
        }
        let comp = linalg::complement(linalg::col(&p).as_ref())?;
        let phis = (0..n - 1).map(|j| (0..n).map(|i| comp[(i, j)]).collect()).collect();
        Ok(BondBasis { phi0: p, phis })
    }

    /// Gram matrix of (phi0, phis...).
    pub fn gram(&self) -> CMat {
        let all: Vec<&Vec<C64>> = std::iter::once(&self.phi0).chain(self.phis.iter()).collect();
        Mat::from_fn(all.len(), all.len(), |i, j| linalg::vdot(all[i], all[j]))
    }
}

/// Maximally entangled `phi0` completed by generalized Bell states
/// `(1/√D) Σ_k ω^{pk} |k⟩|k+q⟩`, ordered by (p, q) with (0, 0) first.
pub fn make_bond_basis(bond_dim: usize) -> Result<BondBasis> {
    if bond_dim == 0 {
        return Err(Error::validation("bond dimension must be positive"));
    }
    let d = bond_dim;
    let norm = 1.0 / (d as f64).sqrt();
    let bell = |p: usize, q: usize| -> Vec<C64> {
        let mut v = vec![ZERO; d * d];
        for k in 0..d {
            let ph = 2.0 * std::f64::consts::PI * (p * k) as f64 / d as f64;
            v[k * d + (k + q) % d] = C64::from_polar(norm, ph);
        }
        v
    };
    let mut phis = Vec::new();
    for p in 0..d {
        for q in 0..d {
            if p != 0 || q != 0 {
                phis.push(bell(p, q));
            }
        }
    }
    Ok(BondBasis { phi0: bell(0, 0), phis })
}

#[derive(Clone, Debug)]
pub struct PepsSpec {
    pub graph: Graph,
    pub tensors: Vec<SiteTensor>,
    pub bond: BondBasis,
    pub bond_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaReport {
    pub per_site: Vec<f64>,
    /// max over sites
    pub uniform: f64,
    /// min over sites
    pub min: f64,
}

#[derive(Clone, Debug)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub raw_norm: f64,
    pub dims: Vec<usize>,
}

impl PepsSpec {
    pub fn new(graph: Graph, tensors: Vec<SiteTensor>, bond: BondBasis) -> Result<Self> {
        let bond_dim = bond.bond_dim();
        if tensors.len() != graph.num_vertices() {
            return Err(Error::validation(format!(
                "{} tensors for {} vertices",
                tensors.len(),
                graph.num_vertices()
            )));
        }
        for (v, t) in tensors.iter().enumerate() {
            if t.vertex != v {
                return Err(Error::validation(format!("tensor {v} is labeled as vertex {}", t.vertex)));
            }
            if t.bond_dim != bond_dim {
                return Err(Error::validation(format!("vertex {v}: bond dimension {} != {bond_dim}", t.bond_dim)));
            }
            if t.leg_order != graph.neighbors(v) {
                return Err(Error::validation(format!(
                    "vertex {v}: leg_order {:?} does not match adjacency {:?}",
                    t.leg_order,
                    graph.neighbors(v)
                )));
            }
        }
        Ok(PepsSpec { graph, tensors, bond, bond_dim })
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.d).collect()
    }

    pub fn require_injective(&self) -> Result<()> {
        for t in &self.tensors {
            let r = t.injectivity_report(None)?;
            if !r.injective {
                return Err(Error::validation(format!(
                    "vertex {} is not injective (sigma_min = {:.3e})",
                    t.vertex, r.sigma_min
                )));
            }
        }
        Ok(())
    }

    pub fn delta_isometry(&self) -> DeltaReport {
        let per_site: Vec<f64> = self.tensors.iter().map(|t| t.delta()).collect();
        let uniform = per_site.iter().cloned().fold(0.0, f64::max);
        let min = per_site.iter().cloned().fold(f64::INFINITY, f64::min);
        DeltaReport { per_site, uniform, min }
    }
}

pub fn delta_isometry(spec: &PepsSpec) -> DeltaReport {
    spec.delta_isometry()
}

/// Dense |ψ⟩ = (⊗ A_i) ⊗_e |φ0⟩_e, normalized; the raw norm is kept.
pub fn assemble_state(spec: &PepsSpec) -> Result<StateVector> {
    let g = &spec.graph;
    let dd = spec.bond_dim;
    let n = g.num_vertices();
    let dims = spec.phys_dims();
    let phys_total = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d).filter(|&t| t <= DENSE_STATE_LIMIT));
    if phys_total.is_none() {
        return Err(Error::capacity(format!("d^N for dims {dims:?} exceeds {DENSE_STATE_LIMIT}")));
    }
    let nlegs = 2 * g.num_edges();
    let vtotal = dd
        .checked_pow(nlegs as u32)
        .filter(|&t| t <= DENSE_STATE_LIMIT)
        .ok_or_else(|| Error::capacity(format!("D^(2E) = {dd}^{nlegs} exceeds {DENSE_STATE_LIMIT}")))?;

    // position of each (vertex, leg) in the vertex-major virtual ordering
    let mut vstart = vec![0usize; n];
    for v in 1..n {
        vstart[v] = vstart[v - 1] + g.degree(v - 1);
    }
    let tstride = |pos: usize| dd.pow((nlegs - 1 - pos) as u32);
    // edge-major digits: (e, first half), (e, second half), ...
    let mut digit_stride = Vec::with_capacity(nlegs);
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let pi = vstart[i] + g.leg_position(i, k).unwrap();
        let pj = vstart[j] + g.leg_position(j, k).unwrap();
        digit_stride.push(tstride(pi));
        digit_stride.push(tstride(pj));
    }
    let mut phi = vec![ZERO; vtotal];
    let ne = g.num_edges();
    let mut digits = vec![0usize; nlegs];
    let mut target = 0usize;
    for _ in 0..vtotal {
        let mut amp = linalg::ONE;
        for e in 0..ne {
            amp *= spec.bond.phi0[digits[2 * e] * dd + digits[2 * e + 1]];
            if amp == ZERO {
                break;
            }
        }
        phi[target] = amp;
        // odometer over edge-major digits, last digit fastest
        let mut p = nlegs;
        while p > 0 {
            p -= 1;
            digits[p] += 1;
            target += digit_stride[p];
            if digits[p] < dd {
                break;
            }
            digits[p] = 0;
            target -= digit_stride[p] * dd;
        }
    }

    // contract vertex by vertex: layout [phys done][legs of v][rest]
    let mut cur = phi;
    let mut phys = 1usize;
    let mut rest = vtotal;
    for v in 0..n {
        let a = &spec.tensors[v].matrix;
        let dv = a.nrows();
        let vd = a.ncols();
        rest /= vd;
        let mut next = vec![ZERO; phys * dv * rest];
        for p in 0..phys {
            for x in 0..vd {
                let src = &cur[(p * vd + x) * rest..(p * vd + x + 1) * rest];
                for s in 0..dv {
                    let w = a[(s, x)];
                    if w == ZERO {
                        continue;
                    }
                    let dst = &mut next[(p * dv + s) * rest..(p * dv + s + 1) * rest];
                    for (o, &i) in dst.iter_mut().zip(src) {
                        *o += w * i;
                    }
                }
            }
        }
        cur = next;
        phys *= dv;
    }
    let raw_norm = linalg::normalize(&mut cur);
    if raw_norm == 0.0 {
        return Err(Error::numerical("assembled state has zero norm"));
    }
    Ok(StateVector { amplitudes: cur, raw_norm, dims })
}

/// Deterministic generator for seeded random specs.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(m: usize, n: usize, rng: &mut impl Rng) -> CMat {
    Mat::from_fn(m, n, |_, _| c(gaussian(rng), gaussian(rng)) * std::f64::consts::FRAC_1_SQRT_2)
}

/// Haar-like isometry `m x n` (m ≥ n) from the QR of a Gaussian matrix.
pub fn random_isometry(m: usize, n: usize, rng: &mut impl Rng) -> CMat {
    let g = random_matrix(m, n, rng);
    g.qr().compute_thin_Q()
}

/// Physical dimension rule for random specs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysRule {
    /// d_i = D^deg(i): one qubit per bond end when D = 2.
    Square,
    /// d_i = D^deg(i) + extra
    Padded(usize),
    /// d_i = fixed value for every site
    Fixed(usize),
}

impl PhysRule {
    pub fn dim(&self, bond_dim: usize, deg: usize) -> usize {
        let v = bond_dim.pow(deg as u32);
        match *self {
            PhysRule::Square => v,
            PhysRule::Padded(x) => v + x,
            PhysRule::Fixed(d) => d,
        }
    }
}

/// Spec with Gaussian random tensors and the maximally entangled bond.
pub fn random_spec(graph: &Graph, bond_dim: usize, rule: PhysRule, seed: u64) -> Result<PepsSpec> {
    let bond = make_bond_basis(bond_dim)?;
    let mut tensors = Vec::new();
    for v in 0..graph.num_vertices() {
        let mut rng = rng_for(seed, v as u64);
        let cols = bond_dim.pow(graph.degree(v) as u32);
        let d = rule.dim(bond_dim, graph.degree(v));
        let a = random_matrix(d, cols, &mut rng);
        tensors.push(SiteTensor::new(v, a, bond_dim, graph.neighbors(v))?);
    }
    PepsSpec::new(graph.clone(), tensors, bond)
}

/// Spec whose site maps are `W diag(σ) V†` with `σ_k² ∈ [1 − δ, 1 + δ]`,
/// one singular value at an endpoint on every site so the uniform δ is exact.
pub fn random_delta_spec(graph: &Graph, bond_dim: usize, rule: PhysRule, delta: f64, seed: u64) -> Result<PepsSpec> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::validation(format!("delta must lie in [0, 1), got {delta}")));
    }
    let bond = make_bond_basis(bond_dim)?;
    let mut tensors = Vec::new();
    for v in 0..graph.num_vertices() {
        let mut rng = rng_for(seed, v as u64);
        let cols = bond_dim.pow(graph.degree(v) as u32);
        let d = rule.dim(bond_dim, graph.degree(v));
        if d < cols {
            return Err(Error::validation(format!("vertex {v}: d = {d} < D^deg = {cols}")));
        }
        let w = random_isometry(d, cols, &mut rng);
        let vv = random_isometry(cols, cols, &mut rng);
        let mut sig = vec![0.0; cols];
        for (k, s) in sig.iter_mut().enumerate() {
            let t: f64 = if k == 0 {
                if rng.gen::<bool>() { 1.0 } else { -1.0 }
            } else {
                rng.gen_range(-1.0..1.0)
            };
            *s = (1.0 + delta * t).sqrt();
        }
        let ws = Mat::from_fn(d, cols, |i, j| w[(i, j)] * sig[j]);
        let a = &ws * vv.adjoint();
        tensors.push(SiteTensor::new(v, a, bond_dim, graph.neighbors(v))?);
    }
    PepsSpec::new(graph.clone(), tensors, bond)
}
