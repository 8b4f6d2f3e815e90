use std::path::{Path, PathBuf};

use dissprep::dynamics::{
    self, lindblad_evolve, mixing_time, trajectory_fidelity, DensityMatrix, IterateOptions, LindbladOptions, MixingTime,
    TimeSeries, TrajectoryStart,
};
use dissprep::experiments::{run_experiment, ExperimentKind, GFamilyConfig};
use dissprep::generators::{
    admissible_gamma, build_global_channel_from, build_jump_set, build_parent_ham, default_gamma, max_gamma, ChannelMode,
    GlobalChannel, JumpSet, Liouvillian,
};
use dissprep::gfamily::g_family_tensors;
use dissprep::graph::edge_color;
use dissprep::io::{mat_from_json, mat_to_json, JsonMat, MpsFile, PepsFile};
use dissprep::mps::{block_mps, blocked_ring_spec, correlation_length};
use dissprep::spectral::{channel_spectrum, hamiltonian_gap, liouvillian_spectrum, verify_bounds};
use dissprep::tensor::{assemble_state, PepsSpec};
use dissprep::Error;
use serde::Serialize;

use crate::output::{read_json, read_spec, spec_hash, CliResult, RunDir};
use crate::{BlockArgs, CliError, Command, EvolveArgs, EvolveProtocol, ExperimentArgs, Mode, Protocol};

pub fn run(cmd: Command) -> CliResult<PathBuf> {
    match cmd {
        Command::Spectrum { spec, gamma, protocol, out } => spectrum(&spec, gamma, protocol, out.out),
        Command::Gap { spec, out } => gap(&spec, out.out),
        Command::Bounds { spec, out } => bounds(&spec, out.out),
        Command::Evolve(a) => evolve(a),
        Command::Channel { spec, gamma, dump, out } => channel(&spec, gamma, dump, out.out),
        Command::Experiment(a) => experiment(a),
        Command::Block(a) => block(a),
    }
}

#[derive(Serialize)]
struct SpecRef {
    path: String,
    spec_hash: String,
    vertices: usize,
    edges: usize,
    bond_dim: usize,
    phys_dims: Vec<usize>,
    delta: f64,
}

fn spec_ref(path: &Path, spec: &PepsSpec) -> SpecRef {
    SpecRef {
        path: path.display().to_string(),
        spec_hash: spec_hash(spec),
        vertices: spec.graph.num_vertices(),
        edges: spec.graph.num_edges(),
        bond_dim: spec.bond_dim,
        phys_dims: spec.phys_dims(),
        delta: spec.delta_isometry().uniform,
    }
}

#[derive(Serialize)]
struct GammaChoice {
    gamma: f64,
    /// `flag` or `default` (0.9 of the exact admissible limit).
    source: &'static str,
    max_gamma: f64,
    admissible_gamma: f64,
}

fn choose_gamma(spec: &PepsSpec, jumps: &JumpSet, flag: Option<f64>) -> CliResult<GammaChoice> {
    if let Some(g) = flag {
        if !(g.is_finite() && g >= 0.0) {
            return Err(CliError::Input(format!("flag --gamma = {g} must be non-negative")));
        }
    }
    let admissible = admissible_gamma(jumps)?;
    let (gamma, source) = match flag {
        Some(g) => (g, "flag"),
        None => (default_gamma(jumps)?, "default"),
    };
    Ok(GammaChoice { gamma, source, max_gamma: max_gamma(spec), admissible_gamma: admissible })
}

fn global_channel(spec: &PepsSpec, jumps: &JumpSet, g: &GammaChoice) -> CliResult<GlobalChannel> {
    let coloring = edge_color(&spec.graph);
    Ok(build_global_channel_from(jumps, g.gamma, &coloring, g.max_gamma)?)
}

fn spectrum(path: &Path, gamma: Option<f64>, protocol: Protocol, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let spec = read_spec(path)?;
    let jumps = build_jump_set(&spec)?;
    let choice = choose_gamma(&spec, &jumps, gamma)?;
    let dir = RunDir::create(out, "spectrum")?;
    let psi = assemble_state(&spec)?.amplitudes;
    #[derive(Serialize)]
    struct Config {
        spec: SpecRef,
        gamma: GammaChoice,
        protocol: Protocol,
    }
    #[derive(Serialize)]
    struct Result {
        channel: Option<dissprep::spectral::SpectralReport>,
        liouvillian: Option<dissprep::spectral::SpectralReport>,
    }
    let mut res = Result { channel: None, liouvillian: None };
    if protocol != Protocol::Lindblad {
        let ch = global_channel(&spec, &jumps, &choice)?;
        let r = channel_spectrum(&ch, &psi)?;
        eprintln!("channel: unique_fixed_point={} gap={:.6e} overlap={:.12}", r.unique_fixed_point, r.gap, r.fixed_point_overlap);
        res.channel = Some(r);
    }
    if protocol != Protocol::Channel {
        let r = liouvillian_spectrum(&Liouvillian::new(jumps)?, &psi)?;
        eprintln!("liouvillian: unique_fixed_point={} gap={:.6e} overlap={:.12}", r.unique_fixed_point, r.gap, r.fixed_point_overlap);
        res.liouvillian = Some(r);
    }
    dir.finish("spectrum", &Config { spec: spec_ref(path, &spec), gamma: choice, protocol }, &res)?;
    dir.readme("spectrum", &[("result.json", "`result.channel` / `result.liouvillian`: eigenvalues as [re, im] sorted by modulus (channel) or real part (Liouvillian), peripheral counts, gap, fixed-point overlap with the target")])?;
    Ok(dir.path)
}

fn gap(path: &Path, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let spec = read_spec(path)?;
    let ham = build_parent_ham(&spec)?;
    let psi = assemble_state(&spec)?.amplitudes;
    let dir = RunDir::create(out, "gap")?;
    #[derive(Serialize)]
    struct Config {
        spec: SpecRef,
    }
    #[derive(Serialize)]
    struct Result {
        h: dissprep::spectral::GapReport,
        h_prime: dissprep::spectral::GapReport,
        local_gaps: Vec<f64>,
    }
    let local_gaps = ham.terms.iter().map(|t| t.local_gap()).collect::<dissprep::Result<Vec<_>>>()?;
    let h = hamiltonian_gap(&ham, false, Some(&psi))?;
    let hp = hamiltonian_gap(&ham, true, Some(&psi))?;
    eprintln!("H gap {:.6e}, H' gap {:.6e}", h.gap, hp.gap);
    dir.finish("gap", &Config { spec: spec_ref(path, &spec) }, &Result { h, h_prime: hp, local_gaps })?;
    dir.readme("gap", &[("result.json", "`result.h` and `result.h_prime` (H plus single-site violation projectors): ground energy, gap, ground-state overlap with the target")])?;
    Ok(dir.path)
}

fn bounds(path: &Path, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let spec = read_spec(path)?;
    let rep = verify_bounds(&spec)?;
    let dir = RunDir::create(out, "bounds")?;
    eprintln!("{:<6} {:>14} {:>14}  check", "status", "lhs", "rhs");
    for c in &rep.checks {
        eprintln!("{:<6} {:>14.6e} {:>14.6e}  {}", if c.passed { "PASS" } else { "FAIL" }, c.lhs, c.rhs, c.name);
    }
    #[derive(Serialize)]
    struct Config {
        spec: SpecRef,
    }
    dir.finish("bounds", &Config { spec: spec_ref(path, &spec) }, &rep)?;
    dir.readme("bounds", &[("result.json", "`result.checks`: one {name, lhs, rhs, passed} per inequality; `result.edges` and `result.interference` hold the raw norms")])?;
    Ok(dir.path)
}

fn parse_start(s: &str, dims: &[usize]) -> CliResult<DensityMatrix> {
    if s == "maximally_mixed" {
        return Ok(DensityMatrix::maximally_mixed(dims)?);
    }
    if let Some(rest) = s.strip_prefix("product:") {
        let labels = rest
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Input(format!("flag --start: {e}")))?;
        return Ok(DensityMatrix::product_basis(&labels, dims)?);
    }
    if let Some(p) = s.strip_prefix("file:") {
        let m: JsonMat = read_json(Path::new(p), "start state")?;
        let m = mat_from_json(&m, "start state")?;
        return Ok(DensityMatrix::new(m, dims.to_vec())?);
    }
    Err(CliError::Input(format!("flag --start: unknown value {s:?}")))
}

#[derive(Serialize)]
struct EvolveConfig {
    spec: SpecRef,
    protocol: EvolveProtocol,
    gamma: Option<GammaChoice>,
    steps: usize,
    cadence: usize,
    mode: Mode,
    t_final: f64,
    dt: f64,
    rtol: f64,
    atol: f64,
    trajectories: usize,
    seed: u64,
    start: String,
    threshold: f64,
}

#[derive(Serialize)]
struct EvolveResult {
    final_fidelity: f64,
    final_energy: f64,
    mixing_time: MixingTime,
    series: TimeSeries,
}

fn evolve(a: EvolveArgs) -> CliResult<PathBuf> {
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(CliError::Input(format!("flag --threshold = {} must lie in (0, 1]", a.threshold)));
    }
    let spec = read_spec(&a.spec)?;
    let dims = spec.phys_dims();
    let ham = build_parent_ham(&spec)?;
    let jumps = build_jump_set(&spec)?;
    let psi = assemble_state(&spec)?.amplitudes;
    let hash = spec_hash(&spec);
    let needs_gamma = a.protocol != EvolveProtocol::Lindblad;
    let choice = if needs_gamma { Some(choose_gamma(&spec, &jumps, a.gamma)?) } else { None };
    let mut series = match a.protocol {
        EvolveProtocol::Channel => {
            let rho0 = parse_start(&a.start, &dims)?;
            let ch = global_channel(&spec, &jumps, choice.as_ref().unwrap())?;
            let mode = if a.mode == Mode::Sampled { ChannelMode::Sampled } else { ChannelMode::Average };
            let opts = IterateOptions { steps: a.steps, cadence: a.cadence, mode, seed: a.seed, stop_at_fidelity: None };
            dynamics::iterate_channel(&ch, &rho0, &ham, &psi, &opts)?.0
        }
        EvolveProtocol::Lindblad => {
            let rho0 = parse_start(&a.start, &dims)?;
            let liou = Liouvillian::new(jumps)?;
            let opts = LindbladOptions { rtol: a.rtol, atol: a.atol, dt_record: a.dt, ..Default::default() };
            lindblad_evolve(&liou, &rho0, a.t_final, &ham, &psi, &opts)?.0
        }
        EvolveProtocol::Trajectories => {
            let start = match a.start.as_str() {
                "maximally_mixed" => TrajectoryStart::MaximallyMixed,
                s if s.strip_prefix("product:").is_some_and(|r| r.split(',').all(|x| x.trim() == "0")) => {
                    TrajectoryStart::Zero
                }
                s => {
                    return Err(CliError::Input(format!(
                        "flag --start = {s:?}: trajectories accept maximally_mixed or the all-zero product state"
                    )))
                }
            };
            let ch = global_channel(&spec, &jumps, choice.as_ref().unwrap())?;
            let est = trajectory_fidelity(&ch, start, &psi, a.steps, a.trajectories, a.seed)?;
            let mut s = TimeSeries::default();
            for (t, (m, se)) in est.mean.iter().zip(&est.std_error).enumerate() {
                // energy columns carry the standard error of the fidelity estimate
                s.push(t as f64, dynamics::Record { fidelity: *m, energy: *se, violation: 0.0 });
            }
            s
        }
    };
    series.meta.spec_hash = hash;
    series.meta.version = dynamics::VERSION.to_string();
    if let Some(c) = &choice {
        series.meta.gamma = Some(c.gamma);
    }
    if a.protocol != EvolveProtocol::Lindblad {
        series.meta.seed = Some(a.seed);
    }
    let dir = RunDir::create(a.out.out.clone(), "evolve")?;
    let last = *series.records.last().expect("series has the initial record");
    let res = EvolveResult {
        final_fidelity: last.fidelity,
        final_energy: last.energy,
        mixing_time: mixing_time(&series, a.threshold),
        series,
    };
    dir.write_text("timeseries.csv", &res.series.to_csv())?;
    dir.write_json("timeseries.json", &res.series.meta)?;
    eprintln!("final fidelity {:.12}, mixing time {:?}", res.final_fidelity, res.mixing_time);
    let cfg = EvolveConfig {
        spec: spec_ref(&a.spec, &spec),
        protocol: a.protocol,
        gamma: choice,
        steps: a.steps,
        cadence: a.cadence,
        mode: a.mode,
        t_final: a.t_final,
        dt: a.dt,
        rtol: a.rtol,
        atol: a.atol,
        trajectories: a.trajectories,
        seed: a.seed,
        start: a.start.clone(),
        threshold: a.threshold,
    };
    dir.finish("evolve", &cfg, &res)?;
    let csv_doc = if a.protocol == EvolveProtocol::Trajectories {
        "columns t, fidelity (trajectory mean), energy (standard error of the mean), violation (unused, 0)"
    } else {
        "columns t (step or time), fidelity <psi|rho|psi>, energy Tr(H rho), violation Tr(sum_i F_i rho)"
    };
    dir.readme("evolve", &[("timeseries.csv", csv_doc), ("timeseries.json", "series metadata: spec hash, gamma, seed, mode, version")])?;
    Ok(dir.path)
}

fn channel(path: &Path, gamma: Option<f64>, dump: bool, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let spec = read_spec(path)?;
    let jumps = build_jump_set(&spec)?;
    let choice = choose_gamma(&spec, &jumps, gamma)?;
    let ch = global_channel(&spec, &jumps, &choice)?;
    let dir = RunDir::create(out, "channel")?;
    #[derive(Serialize)]
    struct Local {
        support: Vec<usize>,
        edge: Option<(usize, usize)>,
        kraus_count: usize,
        completeness_residual: f64,
    }
    #[derive(Serialize)]
    struct Result {
        layers: usize,
        classes: Vec<Vec<usize>>,
        sites: Vec<Local>,
        edges: Vec<Local>,
        max_completeness_residual: f64,
    }
    #[derive(Serialize)]
    struct Dump {
        support: Vec<usize>,
        kraus: Vec<JsonMat>,
    }
    let all: Vec<&dissprep::generators::KrausChannel> =
        ch.site_layer.iter().chain(ch.matching_layers.iter().flatten()).collect();
    let local = |c: &dissprep::generators::KrausChannel| Local {
        support: c.support.clone(),
        edge: c.edge,
        kraus_count: c.kraus().len(),
        completeness_residual: c.completeness_residual(),
    };
    let res = Result {
        layers: ch.k(),
        classes: edge_color(&spec.graph).classes,
        sites: ch.site_layer.iter().map(local).collect(),
        edges: ch.matching_layers.iter().flatten().map(local).collect(),
        max_completeness_residual: all.iter().map(|c| c.completeness_residual()).fold(0.0, f64::max),
    };
    if dump {
        let d: Vec<Dump> =
            all.iter().map(|c| Dump { support: c.support.clone(), kraus: c.kraus().iter().map(mat_to_json).collect() }).collect();
        dir.write_json("kraus.json", &d)?;
    }
    eprintln!(
        "gamma {} (max_gamma {:.6e}, admissible {:.6e}), {} layers, completeness residual {:.3e}",
        choice.gamma, choice.max_gamma, choice.admissible_gamma, res.layers, res.max_completeness_residual
    );
    #[derive(Serialize)]
    struct Config {
        spec: SpecRef,
        gamma: GammaChoice,
        dump: bool,
    }
    dir.finish("channel", &Config { spec: spec_ref(path, &spec), gamma: choice, dump }, &res)?;
    let mut files = vec![("result.json", "`result.classes`: matching layers as edge indices; per-channel Kraus counts and completeness residuals")];
    if dump {
        files.push(("kraus.json", "list of {support, kraus}; matrices are rows of [re, im] on the local support"));
    }
    dir.readme("channel", &files)?;
    Ok(dir.path)
}

fn experiment(a: ExperimentArgs) -> CliResult<PathBuf> {
    let kind: ExperimentKind = a.kind.parse().map_err(|e: Error| CliError::Input(format!("flag --kind: {e}")))?;
    let mut cfg: GFamilyConfig = match &a.config {
        Some(p) => read_json(p, "experiment config")?,
        None => GFamilyConfig::default(),
    };
    if let Some(v) = a.g {
        cfg.g = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.l {
        cfg.l = v;
    }
    if a.gamma.is_some() {
        cfg.gamma = a.gamma;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = a.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.g_grid.clone() {
        cfg.g_grid = v;
    }
    if let Some(v) = a.n_grid.clone() {
        cfg.n_grid = v;
    }
    if let Some(v) = a.l_grid.clone() {
        cfg.l_grid = v;
    }
    cfg.validate(kind)?;
    let dir = RunDir::create(a.out.out.clone(), kind.name())?;
    let res = run_experiment(&cfg, kind)?;
    let mut files: Vec<(String, String)> = Vec::new();
    for t in &res.tables {
        let name = format!("{}.csv", t.name);
        dir.write_text(&name, &t.to_csv())?;
        files.push((name, format!("columns {}", t.columns.join(", "))));
    }
    for n in &res.provenance.notes {
        eprintln!("note: {n}");
    }
    for f in &res.fits {
        eprintln!("fit {}: slope {:.6}, intercept {:.6}, r2 {:.6}", f.label, f.slope, f.intercept, f.r2);
    }
    #[derive(Serialize)]
    struct Config<'a> {
        kind: ExperimentKind,
        config: &'a GFamilyConfig,
    }
    dir.finish("experiment", &Config { kind, config: &cfg }, &res)?;
    let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    dir.readme(kind.name(), &refs)?;
    Ok(dir.path)
}

fn block(a: BlockArgs) -> CliResult<PathBuf> {
    let chain = match (&a.mps, a.g) {
        (Some(p), None) => {
            let f: MpsFile = read_json(p, "mps")?;
            let c = f.into_chain()?;
            match a.n {
                Some(n) => c.with_length(n),
                None => c,
            }
        }
        (None, Some(g)) => g_family_tensors(g, a.n.ok_or_else(|| CliError::Input("flag --n is required with --g".into()))?)?,
        _ => return Err(CliError::Input("give exactly one of --mps, --g".into())),
    };
    let n = chain.length;
    let gauged = !a.ungauged;
    let spec = blocked_ring_spec(&chain, n, a.l, gauged)?;
    #[derive(Serialize)]
    struct BlockRow {
        start: usize,
        delta: f64,
        singular_values: Vec<f64>,
    }
    let mut rows = Vec::new();
    for b in 0..n / a.l {
        let t = block_mps(&chain, b * a.l, a.l, gauged)?;
        rows.push(BlockRow { start: b * a.l, delta: t.delta(), singular_values: t.singular_values()? });
    }
    let xi = if chain.is_translation_invariant() { correlation_length(&chain).ok() } else { None };
    let dir = RunDir::create(a.out.out.clone(), "block")?;
    dir.write_json("spec.json", &PepsFile::from(&spec))?;
    #[derive(Serialize)]
    struct Config {
        source: String,
        n: usize,
        l: usize,
        gauged: bool,
    }
    #[derive(Serialize)]
    struct Result {
        blocks: Vec<BlockRow>,
        delta: f64,
        correlation_length: Option<f64>,
        spec_hash: String,
    }
    let source = match (&a.mps, a.g) {
        (Some(p), _) => p.display().to_string(),
        (_, Some(g)) => format!("g-family g = {g}"),
        _ => unreachable!(),
    };
    let res = Result { delta: spec.delta_isometry().uniform, blocks: rows, correlation_length: xi, spec_hash: spec_hash(&spec) };
    eprintln!("{} blocks of {} sites, delta {:.6e}", n / a.l, a.l, res.delta);
    dir.finish("block", &Config { source, n, l: a.l, gauged }, &res)?;
    dir.readme("block", &[("spec.json", "blocked ring spec, usable as --spec for the other commands")])?;
    Ok(dir.path)
}
