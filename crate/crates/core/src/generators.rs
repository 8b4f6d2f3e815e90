//! Parent Hamiltonian, jump operators, Liouvillian and Kraus channels.
//!
//! Two-site objects live on the support `[i, j]` of an edge `(i, j)`, `i < j`,
//! with `i` the most significant local digit. With `X = A_i ⊗ A_j` and
//! `E(φ)` the embedding that places `φ` on the two bond legs of the edge,
//! every jump is stored in low-rank form `L_α = U V_α†` where `U = X E(φ0)`
//! and `V_α = X^{+†} E(φ_α)`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeColoring;
use crate::linalg::{self, CMat, RMat, C64, ONE, ZERO};
use crate::local::{self, Layout, Scalar, Support};
use crate::tensor::PepsSpec;

/// Largest Hilbert space dimension for dense density matrices.
pub const DENSE_RHO_LIMIT: usize = 4096;
/// Largest superoperator handled densely (rows times columns).
pub const DENSE_SUPEROP_LIMIT: usize = 1 << 24;
/// Eigenvalues of `I − 2ΓH_eff` above `−PSD_TOL` are clamped to zero.
pub const PSD_TOL: f64 = 1e-12;

/// `D^n x D^(n-2)` embedding of a bond vector on legs `pa < pb` of `n` legs
/// (first leg most significant), identity on the others.
pub fn bond_embedding(phi: &[C64], bond_dim: usize, n: usize, pa: usize, pb: usize) -> CMat {
    let dd = bond_dim;
    let rows = dd.pow(n as u32);
    let cols = dd.pow(n as u32 - 2);
    let mut e = Mat::zeros(rows, cols);
    let mut digits = vec![0usize; n];
    for r in 0..rows {
        let mut rem = r;
        for k in (0..n).rev() {
            digits[k] = rem % dd;
            rem /= dd;
        }
        let mut cidx = 0;
        for (k, &x) in digits.iter().enumerate() {
            if k != pa && k != pb {
                cidx = cidx * dd + x;
            }
        }
        e[(r, cidx)] = phi[digits[pa] * dd + digits[pb]];
    }
    e
}

#[derive(Clone, Debug)]
pub struct EdgeData {
    pub index: usize,
    pub edge: (usize, usize),
    /// Leg positions of the bond in the combined virtual space of `A_i ⊗ A_j`.
    pub legs: (usize, usize),
    pub num_legs: usize,
}

fn edge_data(spec: &PepsSpec, k: usize) -> EdgeData {
    let g = &spec.graph;
    let (i, j) = g.edge(k);
    let pi = g.leg_position(i, k).expect("edge is incident to i");
    let pj = g.leg_position(j, k).expect("edge is incident to j");
    let ni = g.degree(i);
    EdgeData { index: k, edge: (i, j), legs: (pi, ni + pj), num_legs: ni + g.degree(j) }
}

fn pinvs(spec: &PepsSpec) -> Result<Vec<CMat>> {
    spec.require_injective()?;
    spec.tensors.iter().map(|t| Ok(t.injectivity_report(None)?.pseudo_inverse)).collect()
}

#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub edge: EdgeData,
    pub h: CMat,
    /// Same construction with the polar (isometric) parts of the tensors.
    pub h_tilde: CMat,
    /// Number of nonzero eigenvalues, `(D²−1) D^(n−2)`.
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct ParentHamiltonian {
    pub dims: Vec<usize>,
    pub terms: Vec<HamiltonianTerm>,
    /// `F_i = P⊥_{S_i}` per vertex.
    pub violations: Vec<CMat>,
}

pub fn build_parent_ham(spec: &PepsSpec) -> Result<ParentHamiltonian> {
    let pinv = pinvs(spec)?;
    let dd = spec.bond_dim;
    let mut polar = Vec::with_capacity(spec.tensors.len());
    let mut violations = Vec::with_capacity(spec.tensors.len());
    for t in &spec.tensors {
        polar.push(t.isometric_part()?);
        violations.push(t.image()?.p_perp);
    }
    let mut terms = Vec::with_capacity(spec.graph.num_edges());
    for k in 0..spec.graph.num_edges() {
        let ed = edge_data(spec, k);
        let (i, j) = ed.edge;
        let e0 = bond_embedding(&spec.bond.phi0, dd, ed.num_legs, ed.legs.0, ed.legs.1);
        let nv = e0.nrows();
        let q = linalg::sub(linalg::eye(nv).as_ref(), (&e0 * e0.adjoint()).as_ref());
        let xp = linalg::kron(pinv[i].as_ref(), pinv[j].as_ref());
        let h = linalg::hermitize((&(xp.adjoint() * &q) * &xp).as_ref());
        let w = linalg::kron(polar[i].as_ref(), polar[j].as_ref());
        let h_tilde = linalg::hermitize((&(&w * &q) * w.adjoint()).as_ref());
        let rank = (dd * dd - 1) * dd.pow(ed.num_legs as u32 - 2);
        terms.push(HamiltonianTerm { edge: ed, h, h_tilde, rank });
    }
    Ok(ParentHamiltonian { dims: spec.phys_dims(), terms, violations })
}

impl ParentHamiltonian {
    pub fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    pub fn sites(&self, k: usize) -> [usize; 2] {
        let (i, j) = self.terms[k].edge.edge;
        [i, j]
    }

    /// `H ψ` or `H′ ψ = (H + Σ F_i) ψ`, applied term by term.
    pub fn apply(&self, psi: &[C64], include_violations: bool) -> Vec<C64> {
        let layout = self.layout();
        let mut out = vec![ZERO; psi.len()];
        for (k, t) in self.terms.iter().enumerate() {
            let y = local::apply_vec(psi, &layout.support(&self.sites(k)), t.h.as_ref());
            out.iter_mut().zip(&y).for_each(|(o, v)| *o += v);
        }
        if include_violations {
            for (v, f) in self.violations.iter().enumerate() {
                if linalg::max_abs(f.as_ref()) == 0.0 {
                    continue;
                }
                let y = local::apply_vec(psi, &layout.support(&[v]), f.as_ref());
                out.iter_mut().zip(&y).for_each(|(o, v)| *o += v);
            }
        }
        out
    }

    /// Dense `H` or `H′`, limited to [`DENSE_RHO_LIMIT`].
    pub fn dense(&self, include_violations: bool) -> Result<CMat> {
        let layout = Layout::guarded(&self.dims, DENSE_RHO_LIMIT)?;
        let mut h = Mat::zeros(layout.total(), layout.total());
        for (k, t) in self.terms.iter().enumerate() {
            let l = local::lift(&layout, &self.sites(k), t.h.as_ref());
            linalg::add_assign(&mut h, l.as_ref(), ONE);
        }
        if include_violations {
            for (v, f) in self.violations.iter().enumerate() {
                let l = local::lift(&layout, &[v], f.as_ref());
                linalg::add_assign(&mut h, l.as_ref(), ONE);
            }
        }
        Ok(h)
    }

    /// `(Tr Hρ, Tr Σ F_i ρ)`.
    pub fn energies(&self, rho: &CMat) -> (f64, f64) {
        let layout = self.layout();
        let mut e = 0.0;
        for (k, t) in self.terms.iter().enumerate() {
            e += local::local_expect(rho.as_ref(), &layout.support(&self.sites(k)), t.h.as_ref()).re;
        }
        let mut v = 0.0;
        for (i, f) in self.violations.iter().enumerate() {
            v += local::local_expect(rho.as_ref(), &layout.support(&[i]), f.as_ref()).re;
        }
        (e, v)
    }
}

impl HamiltonianTerm {
    /// Smallest of the `rank` largest eigenvalues.
    pub fn local_gap(&self) -> Result<f64> {
        let w = linalg::eigvalsh(self.h.as_ref())?;
        if self.rank == 0 || self.rank > w.len() {
            return Ok(0.0);
        }
        Ok(w[w.len() - self.rank])
    }
}

#[derive(Clone, Debug)]
pub struct EdgeJumps {
    pub edge: EdgeData,
    /// `X E(φ0)`, shape `(d_i d_j) x D^(n−2)`.
    pub u: CMat,
    /// `X^{+†} E(φ_α)` for `α = 1 .. D²−1`.
    pub vs: Vec<CMat>,
    /// `Σ_α L_α† L_α = 2 H_eff`.
    pub ltl: CMat,
}

impl EdgeJumps {
    pub fn operators(&self) -> Vec<CMat> {
        self.vs.iter().map(|v| &self.u * v.adjoint()).collect()
    }

    pub fn h_eff(&self) -> CMat {
        linalg::scale(self.ltl.as_ref(), C64::new(0.5, 0.0))
    }

    pub fn sites(&self) -> [usize; 2] {
        [self.edge.edge.0, self.edge.edge.1]
    }
}

#[derive(Clone, Debug)]
pub struct SiteJumps {
    pub vertex: usize,
    /// Columns `s_a / √dim S`.
    pub us: Vec<CMat>,
    /// Columns `f_b`.
    pub fs: Vec<CMat>,
    pub p_s: CMat,
    pub p_perp: CMat,
    pub dim_s: usize,
}

impl SiteJumps {
    pub fn is_trivial(&self) -> bool {
        self.fs.is_empty()
    }

    /// `|s_a⟩⟨f_b| / √dim S` for all pairs.
    pub fn operators(&self) -> Vec<CMat> {
        let mut out = Vec::with_capacity(self.us.len() * self.fs.len());
        for u in &self.us {
            for f in &self.fs {
                out.push(u * f.adjoint());
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct JumpSet {
    pub dims: Vec<usize>,
    pub two_site: Vec<EdgeJumps>,
    pub single_site: Vec<SiteJumps>,
}

fn column(m: &CMat, k: usize, s: f64) -> CMat {
    Mat::from_fn(m.nrows(), 1, |i, _| m[(i, k)] * s)
}

pub fn build_jump_set(spec: &PepsSpec) -> Result<JumpSet> {
    let pinv = pinvs(spec)?;
    let dd = spec.bond_dim;
    let mut two_site = Vec::with_capacity(spec.graph.num_edges());
    for k in 0..spec.graph.num_edges() {
        let ed = edge_data(spec, k);
        let (i, j) = ed.edge;
        let x = linalg::kron(spec.tensors[i].matrix.as_ref(), spec.tensors[j].matrix.as_ref());
        let xpd = linalg::kron(pinv[i].as_ref(), pinv[j].as_ref()).adjoint().to_owned();
        let e0 = bond_embedding(&spec.bond.phi0, dd, ed.num_legs, ed.legs.0, ed.legs.1);
        let u = &x * &e0;
        let vs: Vec<CMat> = spec
            .bond
            .phis
            .iter()
            .map(|p| &xpd * &bond_embedding(p, dd, ed.num_legs, ed.legs.0, ed.legs.1))
            .collect();
        let utu = u.adjoint() * &u;
        let mut ltl = Mat::zeros(u.nrows(), u.nrows());
        for v in &vs {
            let t = &(v * &utu) * v.adjoint();
            linalg::add_assign(&mut ltl, t.as_ref(), ONE);
        }
        let ltl = linalg::hermitize(ltl.as_ref());
        two_site.push(EdgeJumps { edge: ed, u, vs, ltl });
    }
    let mut single_site = Vec::with_capacity(spec.tensors.len());
    for t in &spec.tensors {
        let im = t.image()?;
        let r = im.s_basis.ncols();
        let s = 1.0 / (r as f64).sqrt();
        single_site.push(SiteJumps {
            vertex: t.vertex,
            us: (0..r).map(|a| column(&im.s_basis, a, s)).collect(),
            fs: (0..im.f_basis.ncols()).map(|b| column(&im.f_basis, b, 1.0)).collect(),
            p_s: im.p_s,
            p_perp: im.p_perp,
            dim_s: r,
        });
    }
    Ok(JumpSet { dims: spec.phys_dims(), two_site, single_site })
}

/// Generator `𝓛 = Σ_e 𝓛_e + Σ_i 𝓛_i` applied on local supports.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    pub layout: Layout,
    pub jumps: JumpSet,
    edge_sup: Vec<Support>,
    site_sup: Vec<Support>,
}

impl Liouvillian {
    pub fn new(jumps: JumpSet) -> Result<Self> {
        let layout = Layout::guarded(&jumps.dims, DENSE_RHO_LIMIT)?;
        let edge_sup = jumps.two_site.iter().map(|e| layout.support(&e.sites())).collect();
        let site_sup = jumps.single_site.iter().map(|s| layout.support(&[s.vertex])).collect();
        Ok(Liouvillian { layout, jumps, edge_sup, site_sup })
    }

    pub fn from_spec(spec: &PepsSpec) -> Result<Self> {
        Self::new(build_jump_set(spec)?)
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    /// `𝓛(ρ)` for Hermitian `ρ`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let n = rho.nrows();
        let mut out = Mat::zeros(n, n);
        for (e, sup) in self.jumps.two_site.iter().zip(&self.edge_sup) {
            if e.vs.is_empty() {
                continue;
            }
            let s = local::reduce(rho.as_ref(), sup, &e.vs);
            local::expand_into(s.as_ref(), sup, std::slice::from_ref(&e.u), &mut out);
            let ac = local::anticommutator(rho.as_ref(), sup, e.ltl.as_ref());
            linalg::add_assign(&mut out, ac.as_ref(), C64::new(-0.5, 0.0));
        }
        for (s, sup) in self.jumps.single_site.iter().zip(&self.site_sup) {
            if s.is_trivial() {
                continue;
            }
            let r = local::reduce(rho.as_ref(), sup, &s.fs);
            local::expand_into(r.as_ref(), sup, &s.us, &mut out);
            let ac = local::anticommutator(rho.as_ref(), sup, s.p_perp.as_ref());
            linalg::add_assign(&mut out, ac.as_ref(), C64::new(-0.5, 0.0));
        }
        out
    }

    /// All jump operators lifted to the full space.
    pub fn lifted_jumps(&self) -> Vec<CMat> {
        let mut out = Vec::new();
        for e in &self.jumps.two_site {
            for l in e.operators() {
                out.push(local::lift(&self.layout, &e.sites(), l.as_ref()));
            }
        }
        for s in &self.jumps.single_site {
            for l in s.operators() {
                out.push(local::lift(&self.layout, &[s.vertex], l.as_ref()));
            }
        }
        out
    }
}

/// Column-stacking superoperator of `ρ ↦ Σ_k L_k ρ L_k† − ½{L_k†L_k, ρ}`,
/// built from `vec(AρB) = (Bᵀ ⊗ A) vec ρ`.
pub fn dissipator_superoperator(jumps: &[CMat], n: usize) -> Result<CMat> {
    if n.checked_mul(n).and_then(|m| m.checked_mul(m)).map_or(true, |m| m > DENSE_SUPEROP_LIMIT) {
        return Err(Error::capacity(format!("superoperator of dimension {n}^2 exceeds {DENSE_SUPEROP_LIMIT} entries")));
    }
    let nn = n * n;
    let mut s = Mat::<C64>::zeros(nn, nn);
    let mut ltl = Mat::<C64>::zeros(n, n);
    for l in jumps {
        let lc = Mat::from_fn(n, n, |i, j| l[(i, j)].conj());
        let k = linalg::kron(lc.as_ref(), l.as_ref());
        linalg::add_assign(&mut s, k.as_ref(), ONE);
        let t = l.adjoint() * l;
        linalg::add_assign(&mut ltl, t.as_ref(), ONE);
    }
    let id = linalg::eye(n);
    let a = linalg::kron(id.as_ref(), ltl.as_ref());
    let b = linalg::kron(ltl.transpose().to_owned().as_ref(), id.as_ref());
    linalg::add_assign(&mut s, a.as_ref(), C64::new(-0.5, 0.0));
    linalg::add_assign(&mut s, b.as_ref(), C64::new(-0.5, 0.0));
    Ok(s)
}

/// Dense vectorized Liouvillian (column stacking).
pub fn build_liouvillian(spec: &PepsSpec) -> Result<CMat> {
    let dims = spec.phys_dims();
    let n = Layout::guarded(&dims, DENSE_RHO_LIMIT)?.total();
    if n * n * n * n > DENSE_SUPEROP_LIMIT {
        return Err(Error::capacity(format!("Liouvillian of dimension {n}^2 exceeds {DENSE_SUPEROP_LIMIT} entries")));
    }
    let l = Liouvillian::from_spec(spec)?;
    dissipator_superoperator(&l.lifted_jumps(), n)
}

pub fn max_gamma_for_delta(delta: f64) -> f64 {
    0.5 * ((1.0 - delta) / (1.0 + delta)).powi(2)
}

/// `½((1−δ)/(1+δ))²` with `δ` the uniform isometry defect; 0 once `δ ≥ 1`.
pub fn max_gamma(spec: &PepsSpec) -> f64 {
    let delta = spec.delta_isometry().uniform;
    if delta < 1.0 {
        max_gamma_for_delta(delta)
    } else {
        0.0
    }
}

/// Exact largest Γ with `I − 2ΓH_eff ⪰ 0` on every edge.
pub fn admissible_gamma(jumps: &JumpSet) -> Result<f64> {
    let mut top: f64 = 0.0;
    for e in &jumps.two_site {
        let w = linalg::eigvalsh(e.ltl.as_ref())?;
        top = top.max(*w.last().unwrap_or(&0.0));
    }
    Ok(if top > 0.0 { 1.0 / top } else { f64::INFINITY })
}

/// Default rate: 90% of the exact admissible limit.
pub fn default_gamma(jumps: &JumpSet) -> Result<f64> {
    let a = admissible_gamma(jumps)?;
    Ok(0.9 * if a.is_finite() { a } else { 0.5 })
}

#[derive(Clone, Debug)]
enum Kind {
    /// `K0 ρ K0 + Γ U (Σ V†ρV) U†`
    Edge { k0: CMat, u: CMat, vs: Vec<CMat> },
    /// `P ρ P + Σ_a u_a (Σ_b f_b†ρ f_b) u_a†`
    Site { p_s: CMat, us: Vec<CMat>, fs: Vec<CMat> },
    Identity,
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    pub support: Vec<usize>,
    pub gamma: Option<f64>,
    pub edge: Option<(usize, usize)>,
    sup: Support,
    local_dim: usize,
    kind: Kind,
    /// Real copies of the operators when all of them are real.
    real: Option<RealOps>,
}

#[derive(Clone, Debug)]
struct RealOps {
    k0: RMat,
    us: Vec<RMat>,
    vs: Vec<RMat>,
}

fn real_all(ms: &[CMat]) -> Option<Vec<RMat>> {
    ms.iter().map(linalg::exact_real).collect()
}

impl Kind {
    fn real_ops(&self) -> Option<RealOps> {
        match self {
            Kind::Identity => None,
            Kind::Edge { k0, u, vs } => Some(RealOps { k0: linalg::exact_real(k0)?, us: vec![linalg::exact_real(u)?], vs: real_all(vs)? }),
            Kind::Site { p_s, us, fs } => Some(RealOps { k0: linalg::exact_real(p_s)?, us: real_all(us)?, vs: real_all(fs)? }),
        }
    }
}

/// `K0 ρ K0† + w Σ_a u_a (Σ_b v_b† ρ v_b) u_a†`
fn kraus_apply<T: Scalar>(rho: &Mat<T>, sup: &Support, k0: &Mat<T>, us: &[Mat<T>], vs: &[Mat<T>], w: f64) -> Mat<T> {
    let mut out = local::sandwich(rho.as_ref(), sup, k0.as_ref());
    if w > 0.0 && !vs.is_empty() && !us.is_empty() {
        let mut s = local::reduce(rho.as_ref(), sup, vs);
        if w != 1.0 {
            s = Mat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)].scaled(w));
        }
        local::expand_into(s.as_ref(), sup, us, &mut out);
    }
    out
}

impl KrausChannel {
    fn with_real(mut self) -> Self {
        self.real = self.kind.real_ops();
        self
    }

    /// Dense Kraus operators on the support.
    pub fn kraus(&self) -> Vec<CMat> {
        match &self.kind {
            Kind::Identity => vec![linalg::eye(self.local_dim)],
            Kind::Edge { k0, u, vs } => {
                let g = self.gamma.unwrap_or(0.0).sqrt();
                let mut out = vec![k0.clone()];
                out.extend(vs.iter().map(|v| linalg::scale((u * v.adjoint()).as_ref(), C64::new(g, 0.0))));
                out
            }
            Kind::Site { p_s, us, fs } => {
                let mut out = vec![p_s.clone()];
                for u in us {
                    for f in fs {
                        out.push(u * f.adjoint());
                    }
                }
                out
            }
        }
    }

    /// `‖Σ K†K − I‖_max`
    pub fn completeness_residual(&self) -> f64 {
        let mut s = Mat::zeros(self.local_dim, self.local_dim);
        for k in self.kraus() {
            linalg::add_assign(&mut s, (k.adjoint() * &k).as_ref(), ONE);
        }
        linalg::max_abs(linalg::sub(s.as_ref(), linalg::eye(self.local_dim).as_ref()).as_ref())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    pub fn local_support(&self) -> &Support {
        &self.sup
    }

    /// Channel applied to a Hermitian density matrix of the full space.
    pub fn apply(&self, rho: &CMat) -> CMat {
        match &self.kind {
            Kind::Identity => rho.clone(),
            Kind::Edge { k0, u, vs } => {
                kraus_apply(rho, &self.sup, k0, std::slice::from_ref(u), vs, self.gamma.unwrap_or(0.0))
            }
            Kind::Site { p_s, us, fs } => kraus_apply(rho, &self.sup, p_s, us, fs, 1.0),
        }
    }

    /// True when the channel has a real representation (or is the identity).
    pub fn is_real(&self) -> bool {
        self.is_identity() || self.real.is_some()
    }

    /// [`KrausChannel::apply`] on a real symmetric matrix; `None` if the channel is not real.
    pub fn apply_real(&self, rho: &RMat) -> Option<RMat> {
        if self.is_identity() {
            return Some(rho.clone());
        }
        let r = self.real.as_ref()?;
        let w = match self.kind {
            Kind::Edge { .. } => self.gamma.unwrap_or(0.0),
            _ => 1.0,
        };
        Some(kraus_apply(rho, &self.sup, &r.k0, &r.us, &r.vs, w))
    }

    /// Dense superoperator `Σ conj(K) ⊗ K` of the lifted Kraus operators.
    pub fn superoperator(&self, layout: &Layout) -> Result<CMat> {
        let n = layout.total();
        if n * n * n * n > DENSE_SUPEROP_LIMIT {
            return Err(Error::capacity(format!("superoperator of dimension {n}^2 exceeds {DENSE_SUPEROP_LIMIT} entries")));
        }
        let mut s = Mat::zeros(n * n, n * n);
        for k in self.kraus() {
            let l = local::lift(layout, &self.support, k.as_ref());
            let lc = Mat::from_fn(n, n, |i, j| l[(i, j)].conj());
            linalg::add_assign(&mut s, linalg::kron(lc.as_ref(), l.as_ref()).as_ref(), ONE);
        }
        Ok(s)
    }
}

pub fn build_edge_channel_from(jumps: &JumpSet, k: usize, gamma: f64, max_gamma: f64) -> Result<KrausChannel> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::validation(format!("gamma = {gamma} must be a finite non-negative number")));
    }
    let e = &jumps.two_site[k];
    let layout = Layout::new(&jumps.dims);
    let m = e.u.nrows();
    let a = linalg::sub(
        linalg::eye(m).as_ref(),
        linalg::scale(e.ltl.as_ref(), C64::new(gamma, 0.0)).as_ref(),
    );
    let (w, _) = linalg::eigh(a.as_ref())?;
    if w[0] < -PSD_TOL {
        return Err(Error::Gamma {
            edge: e.edge.edge,
            gamma,
            min_eig: w[0],
            max_gamma,
            limit: admissible_gamma(jumps)?,
        });
    }
    let k0 = linalg::herm_fn(a.as_ref(), |x| if x.abs() <= PSD_TOL { 0.0 } else { x.max(0.0).sqrt() })?;
    Ok(KrausChannel {
        support: e.sites().to_vec(),
        gamma: Some(gamma),
        edge: Some(e.edge.edge),
        sup: layout.support(&e.sites()),
        local_dim: m,
        real: None,
        kind: Kind::Edge { k0, u: e.u.clone(), vs: e.vs.clone() },
    }
    .with_real())
}

pub fn build_edge_channel(spec: &PepsSpec, k: usize, gamma: f64) -> Result<KrausChannel> {
    if k >= spec.graph.num_edges() {
        return Err(Error::validation(format!("edge index {k} out of range")));
    }
    let jumps = build_jump_set(spec)?;
    build_edge_channel_from(&jumps, k, gamma, max_gamma(spec))
}

/// `𝓔_i(ρ) = PρP + (P_S / dim S) ⊗ Tr_i(P⊥ρ)`; identity when `S_i` is everything.
pub fn build_site_channel(jumps: &JumpSet, v: usize) -> KrausChannel {
    let s = &jumps.single_site[v];
    let layout = Layout::new(&jumps.dims);
    let d = s.p_s.nrows();
    let kind = if s.is_trivial() {
        Kind::Identity
    } else {
        Kind::Site { p_s: s.p_s.clone(), us: s.us.clone(), fs: s.fs.clone() }
    };
    KrausChannel { support: vec![v], gamma: None, edge: None, sup: layout.support(&[v]), local_dim: d, kind, real: None }
        .with_real()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Average,
    Sampled,
}

#[derive(Clone, Debug)]
pub struct GlobalChannel {
    pub dims: Vec<usize>,
    pub gamma: f64,
    pub site_layer: Vec<KrausChannel>,
    pub matching_layers: Vec<Vec<KrausChannel>>,
    pub mixing_weights: Vec<f64>,
}

pub fn build_global_channel_from(
    jumps: &JumpSet,
    gamma: f64,
    coloring: &EdgeColoring,
    max_gamma: f64,
) -> Result<GlobalChannel> {
    let site_layer = (0..jumps.single_site.len()).map(|v| build_site_channel(jumps, v)).collect();
    let mut matching_layers = Vec::with_capacity(coloring.k());
    for class in &coloring.classes {
        let layer = class
            .iter()
            .map(|&k| build_edge_channel_from(jumps, k, gamma, max_gamma))
            .collect::<Result<Vec<_>>>()?;
        matching_layers.push(layer);
    }
    let k = coloring.k().max(1);
    Ok(GlobalChannel {
        dims: jumps.dims.clone(),
        gamma,
        site_layer,
        matching_layers,
        mixing_weights: vec![1.0 / k as f64; coloring.k()],
    })
}

pub fn build_global_channel(spec: &PepsSpec, gamma: f64, coloring: &EdgeColoring) -> Result<GlobalChannel> {
    coloring.validate(&spec.graph)?;
    let jumps = build_jump_set(spec)?;
    build_global_channel_from(&jumps, gamma, coloring, max_gamma(spec))
}

impl GlobalChannel {
    pub fn k(&self) -> usize {
        self.matching_layers.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    pub fn apply_sites(&self, rho: &CMat) -> CMat {
        let mut r = rho.clone();
        for ch in &self.site_layer {
            if !ch.is_identity() {
                r = ch.apply(&r);
            }
        }
        r
    }

    pub fn apply_layer(&self, q: usize, rho: &CMat) -> CMat {
        let mut r = rho.clone();
        for ch in &self.matching_layers[q] {
            r = ch.apply(&r);
        }
        r
    }

    /// `𝓔(ρ) = (1/k Σ_q 𝓔_{E_q}) ∘ Π_i 𝓔_i (ρ)`.
    pub fn apply_average(&self, rho: &CMat) -> CMat {
        let r = self.apply_sites(rho);
        if self.k() == 0 {
            return r;
        }
        let n = r.nrows();
        let mut out = Mat::zeros(n, n);
        for q in 0..self.k() {
            let y = self.apply_layer(q, &r);
            linalg::add_assign(&mut out, y.as_ref(), C64::new(self.mixing_weights[q], 0.0));
        }
        local::hermitian_part(out.as_ref())
    }

    /// True when every local channel has a real representation.
    pub fn is_real(&self) -> bool {
        self.site_layer.iter().chain(self.matching_layers.iter().flatten()).all(KrausChannel::is_real)
    }

    pub fn apply_sites_real(&self, rho: &RMat) -> Option<RMat> {
        let mut r = rho.clone();
        for ch in &self.site_layer {
            if !ch.is_identity() {
                r = ch.apply_real(&r)?;
            }
        }
        Some(r)
    }

    pub fn apply_layer_real(&self, q: usize, rho: &RMat) -> Option<RMat> {
        let mut r = rho.clone();
        for ch in &self.matching_layers[q] {
            r = ch.apply_real(&r)?;
        }
        Some(r)
    }

    /// [`GlobalChannel::apply_average`] in real arithmetic; `None` if the channel is not real.
    pub fn apply_average_real(&self, rho: &RMat) -> Option<RMat> {
        let r = self.apply_sites_real(rho)?;
        if self.k() == 0 {
            return Some(r);
        }
        let n = r.nrows();
        let mut out = RMat::zeros(n, n);
        for q in 0..self.k() {
            let y = self.apply_layer_real(q, &r)?;
            let w = self.mixing_weights[q];
            out = Mat::from_fn(n, n, |i, j| out[(i, j)] + w * y[(i, j)]);
        }
        Some(local::hermitian_part(out.as_ref()))
    }

    /// Dense column-stacking superoperator of the whole map.
    pub fn superoperator(&self) -> Result<CMat> {
        let layout = self.layout();
        let n = layout.total();
        let mut sites = linalg::eye(n * n);
        for ch in &self.site_layer {
            if !ch.is_identity() {
                sites = &ch.superoperator(&layout)? * &sites;
            }
        }
        if self.k() == 0 {
            return Ok(sites);
        }
        let mut mix = Mat::zeros(n * n, n * n);
        for (q, layer) in self.matching_layers.iter().enumerate() {
            let mut s = linalg::eye(n * n);
            for ch in layer {
                s = &ch.superoperator(&layout)? * &s;
            }
            linalg::add_assign(&mut mix, s.as_ref(), C64::new(self.mixing_weights[q], 0.0));
        }
        Ok(&mix * &sites)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_of_product_vector() {
        // two legs, D = 2: E(φ) is φ as a column
        let phi = vec![ONE, ZERO, ZERO, C64::new(2.0, 0.0)];
        let e = bond_embedding(&phi, 2, 2, 0, 1);
        assert_eq!(e.ncols(), 1);
        assert_eq!(e[(3, 0)], C64::new(2.0, 0.0));
        // three legs, bond on legs 0 and 2: identity on leg 1
        let e = bond_embedding(&phi, 2, 3, 0, 2);
        assert_eq!((e.nrows(), e.ncols()), (8, 2));
        assert_eq!(e[(0b000, 0)], ONE);
        assert_eq!(e[(0b010, 1)], ONE);
        assert_eq!(e[(0b111, 1)], C64::new(2.0, 0.0));
        assert_eq!(e[(0b101, 0)], C64::new(2.0, 0.0));
        assert_eq!(e[(0b001, 0)], ZERO);
    }

    #[test]
    fn max_gamma_formula() {
        assert_eq!(max_gamma_for_delta(0.0), 0.5);
        assert!((max_gamma_for_delta(1.0 / 3.0) - 0.125).abs() < 1e-15);
    }
}
