use dissprep::dynamics::{
    iterate_channel, lindblad_evolve, lindblad_exact, mixing_time, sample_trajectory, DensityMatrix, IterateOptions,
    LindbladOptions, MixingTime,
};
use dissprep::experiments::blocked_spec;
use dissprep::generators::{
    build_global_channel, build_jump_set, build_liouvillian, build_parent_ham, default_gamma, ChannelMode, GlobalChannel,
    Liouvillian,
};
use dissprep::graph::{build_lattice_graph, edge_color, Graph, LatticeKind};
use dissprep::linalg;
use dissprep::tensor::{assemble_state, random_delta_spec, PepsSpec, PhysRule};

fn path3(delta: f64, seed: u64) -> PepsSpec {
    let g = build_lattice_graph(LatticeKind::Path, &[3]).unwrap();
    random_delta_spec(&g, 2, PhysRule::Padded(1), delta, seed).unwrap()
}

fn channel(spec: &PepsSpec) -> GlobalChannel {
    let jumps = build_jump_set(spec).unwrap();
    build_global_channel(spec, default_gamma(&jumps).unwrap(), &edge_color(&spec.graph)).unwrap()
}

#[test]
fn channel_iteration_keeps_a_valid_state() {
    let spec = path3(0.1, 1);
    let ch = channel(&spec);
    let ham = build_parent_ham(&spec).unwrap();
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let rho0 = DensityMatrix::maximally_mixed(&spec.phys_dims()).unwrap();
    let opts = IterateOptions { steps: 1000, cadence: 50, ..Default::default() };
    let (s, rho) = iterate_channel(&ch, &rho0, &ham, &psi, &opts).unwrap();
    assert!((rho.trace() - 1.0).abs() <= 1e-10);
    assert!(rho.hermiticity_defect() <= 1e-12);
    assert!(rho.min_eigenvalue().unwrap() >= -1e-7);
    assert_eq!(s.times.len(), 21);
    let f = s.fidelities();
    assert!(*f.last().unwrap() > 0.999999, "{f:?}");
}

#[test]
fn fidelity_is_eventually_monotone() {
    for (k, &delta) in [0.02, 0.06, 0.1].iter().enumerate() {
        let spec = path3(delta, 10 + k as u64);
        let ch = channel(&spec);
        let ham = build_parent_ham(&spec).unwrap();
        let psi = assemble_state(&spec).unwrap().amplitudes;
        let rho0 = DensityMatrix::maximally_mixed(&spec.phys_dims()).unwrap();
        let (s, _) = iterate_channel(&ch, &rho0, &ham, &psi, &IterateOptions { steps: 300, ..Default::default() }).unwrap();
        let f = s.fidelities();
        let tail = &f[f.len() / 2..];
        assert!(tail.windows(2).all(|w| w[1] >= w[0] - 1e-12), "delta {delta}");
    }
}

#[test]
fn both_protocols_share_the_fixed_point() {
    let spec = path3(0.05, 3);
    let ham = build_parent_ham(&spec).unwrap();
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let rho0 = DensityMatrix::maximally_mixed(&spec.phys_dims()).unwrap();
    let (_, a) = iterate_channel(&channel(&spec), &rho0, &ham, &psi, &IterateOptions { steps: 3000, cadence: 100, ..Default::default() }).unwrap();
    let liou = Liouvillian::from_spec(&spec).unwrap();
    let opts = LindbladOptions { dt_record: 5.0, ..Default::default() };
    let (_, b) = lindblad_evolve(&liou, &rho0, 200.0, &ham, &psi, &opts).unwrap();
    let td = linalg::trace_distance(a.matrix.as_ref(), b.matrix.as_ref()).unwrap();
    assert!(td <= 1e-4, "trace distance {td}");
}

#[test]
fn runge_kutta_matches_exponential() {
    let spec = path3(0.2, 4);
    let ham = build_parent_ham(&spec).unwrap();
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let rho0 = DensityMatrix::product_basis(&[0, 0, 0], &spec.phys_dims()).unwrap();
    let liou = Liouvillian::from_spec(&spec).unwrap();
    let (s, rk) = lindblad_evolve(&liou, &rho0, 2.0, &ham, &psi, &LindbladOptions::default()).unwrap();
    let ex = lindblad_exact(&build_liouvillian(&spec).unwrap(), &rho0, 2.0);
    assert!(linalg::trace_distance(rk.matrix.as_ref(), ex.matrix.as_ref()).unwrap() <= 1e-7);
    assert_eq!(s.times.len(), 21);
    assert!((s.times[20] - 2.0).abs() < 1e-12);
}

#[test]
fn sampled_layers_average_to_the_average_mode() {
    let spec = blocked_spec(0.3, 4, 2).unwrap();
    let ch = channel(&spec);
    assert_eq!(ch.k(), 2);
    let ham = build_parent_ham(&spec).unwrap();
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let rho0 = DensityMatrix::maximally_mixed(&spec.phys_dims()).unwrap();
    let steps = 4;
    let (avg, _) = iterate_channel(&ch, &rho0, &ham, &psi, &IterateOptions { steps, ..Default::default() }).unwrap();
    let runs = 10_000;
    let samples: Vec<f64> = (0..runs)
        .map(|seed| {
            let opts = IterateOptions { steps, mode: ChannelMode::Sampled, seed, ..Default::default() };
            iterate_channel(&ch, &rho0, &ham, &psi, &opts).unwrap().0.records[steps].fidelity
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    let exact = avg.records[steps].fidelity;
    assert!((mean - exact).abs() <= 4.0 * se + 1e-12, "{mean} vs {exact} (se {se})");
}

#[test]
fn trajectories_are_reproducible_per_stream() {
    let spec = blocked_spec(0.3, 4, 2).unwrap();
    let ch = channel(&spec);
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let mut start = vec![linalg::c(0.0, 0.0); psi.len()];
    start[3] = linalg::c(1.0, 0.0);
    let a = sample_trajectory(&ch, &start, &psi, 30, 5, 2).unwrap();
    let b = sample_trajectory(&ch, &start, &psi, 30, 5, 2).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|f| (-1e-12..=1.0 + 1e-12).contains(f)));
}

#[test]
fn unreached_threshold_is_recorded() {
    let g = Graph::cycle(3).unwrap();
    let spec = random_delta_spec(&g, 2, PhysRule::Padded(1), 0.1, 8).unwrap();
    let ch = channel(&spec);
    let ham = build_parent_ham(&spec).unwrap();
    let psi = assemble_state(&spec).unwrap().amplitudes;
    let rho0 = DensityMatrix::maximally_mixed(&spec.phys_dims()).unwrap();
    let (s, _) = iterate_channel(&ch, &rho0, &ham, &psi, &IterateOptions { steps: 2, ..Default::default() }).unwrap();
    assert_eq!(mixing_time(&s, 0.999), MixingTime::NotReached { max_t: 2.0 });
    assert!(s.to_csv().starts_with("t,fidelity,energy,violation\n"));
}

#[test]
fn invalid_density_matrices_are_rejected() {
    let dims = [2, 2];
    let bad = linalg::eye(3);
    assert!(DensityMatrix::new(bad, dims.to_vec()).is_err());
    assert!(DensityMatrix::product_basis(&[0, 2], &dims).is_err());
}
