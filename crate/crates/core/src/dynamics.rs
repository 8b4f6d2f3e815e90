//! Dense evolution under the global channel and the Lindbladian, and a
//! Kraus-trajectory sampler.

use faer::Mat;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{ChannelMode, GlobalChannel, KrausChannel, Liouvillian, ParentHamiltonian, DENSE_RHO_LIMIT};
use crate::linalg::{self, CMat, RMat, C64, ONE, ZERO};
use crate::local::{self, Layout};
use crate::tensor::rng_for;

pub const VERSION: &str = concat!("dissprep ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub matrix: CMat,
    pub dims: Vec<usize>,
}

impl DensityMatrix {
    pub fn new(matrix: CMat, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::validation(format!("density matrix is {}x{}, dims give {n}", matrix.nrows(), matrix.ncols())));
        }
        let rho = DensityMatrix { matrix, dims };
        rho.check(1e-10, 1e-8)?;
        Ok(rho)
    }

    pub fn maximally_mixed(dims: &[usize]) -> Result<Self> {
        let n = Layout::guarded(dims, DENSE_RHO_LIMIT)?.total();
        let m = linalg::scale(linalg::eye(n).as_ref(), C64::new(1.0 / n as f64, 0.0));
        Ok(DensityMatrix { matrix: m, dims: dims.to_vec() })
    }

    pub fn pure(psi: &[C64], dims: &[usize]) -> Result<Self> {
        let n = Layout::guarded(dims, DENSE_RHO_LIMIT)?.total();
        if psi.len() != n {
            return Err(Error::validation(format!("state has {} amplitudes, dims give {n}", psi.len())));
        }
        let nrm = linalg::norm2(psi);
        if nrm == 0.0 {
            return Err(Error::validation("zero state vector"));
        }
        let v: Vec<C64> = psi.iter().map(|x| x / nrm).collect();
        Ok(DensityMatrix { matrix: linalg::ket_bra(&v, &v), dims: dims.to_vec() })
    }

    /// `⊗_i |k_i⟩⟨k_i|` for local basis labels `k_i`.
    pub fn product_basis(labels: &[usize], dims: &[usize]) -> Result<Self> {
        if labels.len() != dims.len() || labels.iter().zip(dims).any(|(k, d)| k >= d) {
            return Err(Error::validation(format!("basis labels {labels:?} do not fit dims {dims:?}")));
        }
        let layout = Layout::guarded(dims, DENSE_RHO_LIMIT)?;
        let idx: usize = labels.iter().enumerate().map(|(s, &k)| k * layout.stride(s)).sum();
        let mut psi = vec![ZERO; layout.total()];
        psi[idx] = ONE;
        Self::pure(&psi, dims)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.matrix.as_ref()).re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::max_abs(linalg::sub(self.matrix.as_ref(), linalg::dagger(self.matrix.as_ref()).as_ref()).as_ref())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigvalsh(self.matrix.as_ref())?[0])
    }

    /// Hermiticity and trace within `tol`, smallest eigenvalue above `-psd_tol`.
    pub fn check(&self, tol: f64, psd_tol: f64) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > tol {
            return Err(Error::validation(format!("density matrix is not Hermitian (defect {h:.3e})")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > tol {
            return Err(Error::validation(format!("density matrix has trace {t}")));
        }
        let m = self.min_eigenvalue()?;
        if m < -psd_tol {
            return Err(Error::validation(format!("density matrix has eigenvalue {m:.3e}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub fidelity: f64,
    pub energy: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub spec_hash: String,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<ChannelMode>,
    pub version: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub records: Vec<Record>,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn push(&mut self, t: f64, r: Record) {
        debug_assert!(self.times.last().map_or(true, |&l| t > l));
        self.times.push(t);
        self.records.push(r);
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fidelity).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// `H′` energies, `Tr((H + Σ F_i) ρ)`.
    pub fn total_energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy + r.violation).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,fidelity,energy,violation\n");
        for (t, r) in self.times.iter().zip(&self.records) {
            s.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", t, r.fidelity, r.energy, r.violation));
        }
        s
    }
}

/// Fidelity `⟨ψ|ρ|ψ⟩`, energy `Tr Hρ` and violation `Tr Σ F_i ρ`.
pub fn measure(rho: &DensityMatrix, ham: &ParentHamiltonian, psi: &[C64]) -> Result<Record> {
    if rho.dim() != psi.len() || rho.dims != ham.dims {
        return Err(Error::validation(format!(
            "dimension mismatch: rho {} dims {:?}, target {}, hamiltonian dims {:?}",
            rho.dim(),
            rho.dims,
            psi.len(),
            ham.dims
        )));
    }
    let (energy, violation) = ham.energies(&rho.matrix);
    let fidelity = linalg::expect(rho.matrix.as_ref(), psi).re;
    Ok(Record { fidelity, energy, violation })
}

/// One step of the global channel; `Sampled` draws the matching layer from `rng`.
pub fn apply_channel(ch: &GlobalChannel, rho: &DensityMatrix, mode: ChannelMode, rng: &mut impl Rng) -> DensityMatrix {
    let m = match mode {
        ChannelMode::Average => ch.apply_average(&rho.matrix),
        ChannelMode::Sampled => {
            let r = ch.apply_sites(&rho.matrix);
            if ch.k() == 0 {
                r
            } else {
                let q = rng.gen_range(0..ch.k());
                linalg::hermitize(ch.apply_layer(q, &r).as_ref())
            }
        }
    };
    DensityMatrix { matrix: m, dims: rho.dims.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateOptions {
    pub steps: usize,
    pub cadence: usize,
    pub mode: ChannelMode,
    pub seed: u64,
    /// Stop once the recorded fidelity reaches this value.
    pub stop_at_fidelity: Option<f64>,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions { steps: 100, cadence: 1, mode: ChannelMode::Average, seed: 0, stop_at_fidelity: None }
    }
}

/// `ρ(T) = 𝓔^T(ρ0)`, recording every `cadence` steps (and at step 0).
pub fn iterate_channel(
    ch: &GlobalChannel,
    rho0: &DensityMatrix,
    ham: &ParentHamiltonian,
    psi: &[C64],
    opts: &IterateOptions,
) -> Result<(TimeSeries, DensityMatrix)> {
    let cadence = opts.cadence.max(1);
    let mut rng = rng_for(opts.seed, 0);
    let mut series = TimeSeries {
        meta: SeriesMeta {
            gamma: Some(ch.gamma),
            seed: Some(opts.seed),
            mode: Some(opts.mode),
            version: VERSION.to_string(),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut rho = rho0.clone();
    let r = measure(&rho, ham, psi)?;
    series.push(0.0, r);
    if opts.stop_at_fidelity.is_some_and(|f| r.fidelity >= f) {
        return Ok((series, rho));
    }
    // real channels acting on a real state stay real
    let mut real = if ch.is_real() { linalg::exact_real(&rho.matrix) } else { None };
    for t in 1..=opts.steps {
        match real.as_mut() {
            Some(r) => *r = apply_channel_real(ch, r, opts.mode, &mut rng),
            None => rho = apply_channel(ch, &rho, opts.mode, &mut rng),
        }
        if t % cadence == 0 || t == opts.steps {
            if let Some(r) = &real {
                rho.matrix = linalg::complexify(r);
            }
            let r = measure(&rho, ham, psi)?;
            series.push(t as f64, r);
            if opts.stop_at_fidelity.is_some_and(|f| r.fidelity >= f) {
                break;
            }
        }
    }
    Ok((series, rho))
}

fn apply_channel_real(ch: &GlobalChannel, rho: &RMat, mode: ChannelMode, rng: &mut impl Rng) -> RMat {
    let out = match mode {
        ChannelMode::Average => ch.apply_average_real(rho),
        ChannelMode::Sampled => ch.apply_sites_real(rho).and_then(|r| {
            if ch.k() == 0 {
                Some(r)
            } else {
                let q = rng.gen_range(0..ch.k());
                ch.apply_layer_real(q, &r).map(|y| local::hermitian_part(y.as_ref()))
            }
        }),
    };
    out.expect("channel has a real representation")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Recording interval.
    pub dt_record: f64,
    pub initial_step: f64,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions { rtol: 1e-8, atol: 1e-12, dt_record: 0.1, initial_step: 1e-3 }
    }
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combo(y: &CMat, h: f64, ks: &[CMat], coef: &[f64]) -> CMat {
    let mut out = y.clone();
    for (k, &c) in ks.iter().zip(coef) {
        if c != 0.0 {
            linalg::add_assign(&mut out, k.as_ref(), C64::new(h * c, 0.0));
        }
    }
    out
}

/// Integrates `ρ̇ = 𝓛(ρ)` with adaptive Dormand-Prince steps, recording on a
/// uniform grid of spacing `dt_record` (steps land exactly on record times).
pub fn lindblad_evolve(
    liou: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    ham: &ParentHamiltonian,
    psi: &[C64],
    opts: &LindbladOptions,
) -> Result<(TimeSeries, DensityMatrix)> {
    if !(t_final >= 0.0 && t_final.is_finite()) || !(opts.dt_record > 0.0) {
        return Err(Error::validation("t_final must be non-negative and dt_record positive"));
    }
    let mut series = TimeSeries { meta: SeriesMeta { version: VERSION.to_string(), ..Default::default() }, ..Default::default() };
    let mut rho = rho0.matrix.clone();
    series.push(0.0, measure(rho0, ham, psi)?);
    let nrec = (t_final / opts.dt_record - 1e-9).ceil().max(0.0) as usize;
    let mut t = 0.0;
    let mut h = opts.initial_step.min(t_final.max(f64::MIN_POSITIVE));
    let mut k1 = liou.apply(&rho);
    for r in 1..=nrec {
        let target = (r as f64 * opts.dt_record).min(t_final);
        while t < target {
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            let mut ks = vec![k1.clone()];
            for a in A.iter().take(5) {
                let y = combo(&rho, hs, &ks, a);
                ks.push(liou.apply(&y));
            }
            let ynew = combo(&rho, hs, &ks, &A[5]);
            let k7 = liou.apply(&ynew);
            ks.push(k7);
            let mut err: f64 = 0.0;
            for j in 0..rho.ncols() {
                for i in 0..rho.nrows() {
                    let mut e = ZERO;
                    for (k, &c) in ks.iter().zip(E.iter()) {
                        if c != 0.0 {
                            e += k[(i, j)] * c;
                        }
                    }
                    let sc = opts.atol + opts.rtol * rho[(i, j)].norm().max(ynew[(i, j)].norm());
                    err = err.max((e * hs).norm() / sc);
                }
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                rho = linalg::hermitize(ynew.as_ref());
                k1 = if last { liou.apply(&rho) } else { linalg::hermitize(ks[6].as_ref()) };
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                h = h.max(hs * fac.min(1.0));
            } else {
                h = hs * fac;
            }
            if h < 1e-14 * t_final.max(1.0) {
                return Err(Error::numerical(format!("step size underflow at t = {t}")));
            }
        }
        let dm = DensityMatrix { matrix: rho.clone(), dims: rho0.dims.clone() };
        series.push(target, measure(&dm, ham, psi)?);
    }
    Ok((series, DensityMatrix { matrix: rho, dims: rho0.dims.clone() }))
}

/// `exp(t 𝓛) ρ0` through the dense column-stacking superoperator.
pub fn lindblad_exact(superop: &CMat, rho0: &DensityMatrix, t: f64) -> DensityMatrix {
    let n = rho0.dim();
    let p = linalg::expm(linalg::scale(superop.as_ref(), C64::new(t, 0.0)).as_ref());
    let v: Vec<C64> = (0..n * n).map(|k| rho0.matrix[(k % n, k / n)]).collect();
    let w = linalg::mat_vec(p.as_ref(), &v);
    DensityMatrix { matrix: Mat::from_fn(n, n, |i, j| w[j * n + i]), dims: rho0.dims.clone() }
}

fn sample_kraus(ch: &KrausChannel, kraus: &[CMat], psi: &mut Vec<C64>, rng: &mut impl Rng) -> Result<()> {
    let sup = ch.local_support();
    let branches: Vec<Vec<C64>> = kraus.iter().map(|k| local::apply_vec(psi, sup, k.as_ref())).collect();
    let probs: Vec<f64> = branches.iter().map(|b| linalg::norm2(b).powi(2)).collect();
    let total: f64 = probs.iter().sum();
    for _ in 0..64 {
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = a;
                break;
            }
        }
        if probs[pick] > 1e-300 {
            let nrm = probs[pick].sqrt();
            *psi = branches[pick].iter().map(|x| x / nrm).collect();
            return Ok(());
        }
    }
    Err(Error::numerical("trajectory sampling kept drawing zero-probability branches"))
}

/// Pure-state unraveling of the global channel. Each step applies the site
/// layer, draws one matching layer uniformly, and samples one Kraus branch
/// per local channel. Returns `|⟨target|ψ_t⟩|²` for `t = 0..=steps`.
pub fn sample_trajectory(
    ch: &GlobalChannel,
    psi0: &[C64],
    target: &[C64],
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, stream);
    let site_kraus: Vec<Vec<CMat>> = ch.site_layer.iter().map(|c| c.kraus()).collect();
    let layer_kraus: Vec<Vec<Vec<CMat>>> =
        ch.matching_layers.iter().map(|l| l.iter().map(|c| c.kraus()).collect()).collect();
    trajectory_inner(ch, &site_kraus, &layer_kraus, psi0, target, steps, &mut rng)
}

fn trajectory_inner(
    ch: &GlobalChannel,
    site_kraus: &[Vec<CMat>],
    layer_kraus: &[Vec<Vec<CMat>>],
    psi0: &[C64],
    target: &[C64],
    steps: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut psi = psi0.to_vec();
    linalg::normalize(&mut psi);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(linalg::vdot(target, &psi).norm_sqr());
    for _ in 0..steps {
        for (c, k) in ch.site_layer.iter().zip(site_kraus) {
            if !c.is_identity() {
                sample_kraus(c, k, &mut psi, rng)?;
            }
        }
        if ch.k() > 0 {
            let q = rng.gen_range(0..ch.k());
            for (c, k) in ch.matching_layers[q].iter().zip(&layer_kraus[q]) {
                sample_kraus(c, k, &mut psi, rng)?;
            }
        }
        out.push(linalg::vdot(target, &psi).norm_sqr());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStart {
    /// Uniformly random computational basis state (unravels `I / d^N`).
    MaximallyMixed,
    /// The all-zero product state.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub trajectories: usize,
}

/// Trajectory-averaged fidelity; trajectory `k` uses RNG stream `k + 1` of `seed`.
pub fn trajectory_fidelity(
    ch: &GlobalChannel,
    start: TrajectoryStart,
    target: &[C64],
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<TrajectoryEstimate> {
    if trajectories == 0 {
        return Err(Error::validation("need at least one trajectory"));
    }
    let n: usize = ch.dims.iter().product();
    let site_kraus: Vec<Vec<CMat>> = ch.site_layer.iter().map(|c| c.kraus()).collect();
    let layer_kraus: Vec<Vec<Vec<CMat>>> =
        ch.matching_layers.iter().map(|l| l.iter().map(|c| c.kraus()).collect()).collect();
    let runs: Vec<Vec<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, k as u64 + 1);
            let mut psi0 = vec![ZERO; n];
            let idx = match start {
                TrajectoryStart::MaximallyMixed => rng.gen_range(0..n),
                TrajectoryStart::Zero => 0,
            };
            psi0[idx] = ONE;
            trajectory_inner(ch, &site_kraus, &layer_kraus, &psi0, target, steps, &mut rng)
        })
        .collect::<Result<_>>()?;
    let m = trajectories as f64;
    let mut mean = vec![0.0; steps + 1];
    let mut sq = vec![0.0; steps + 1];
    for r in &runs {
        for (t, &f) in r.iter().enumerate() {
            mean[t] += f;
            sq[t] += f * f;
        }
    }
    let mut std_error = vec![0.0; steps + 1];
    for t in 0..=steps {
        mean[t] /= m;
        let var = if trajectories > 1 { (sq[t] / m - mean[t] * mean[t]).max(0.0) * m / (m - 1.0) } else { 0.0 };
        std_error[t] = (var / m).sqrt();
    }
    Ok(TrajectoryEstimate { mean, std_error, trajectories })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MixingTime {
    Reached { t: f64 },
    NotReached { max_t: f64 },
}

impl MixingTime {
    pub fn value(&self) -> Option<f64> {
        match *self {
            MixingTime::Reached { t } => Some(t),
            MixingTime::NotReached { .. } => None,
        }
    }
}

/// Earliest recorded time with fidelity ≥ threshold (no interpolation).
pub fn mixing_time(series: &TimeSeries, threshold: f64) -> MixingTime {
    for (t, r) in series.times.iter().zip(&series.records) {
        if r.fidelity >= threshold {
            return MixingTime::Reached { t: *t };
        }
    }
    MixingTime::NotReached { max_t: series.times.last().copied().unwrap_or(0.0) }
}
