use dissprep::generators::*;
use dissprep::graph::{build_lattice_graph, edge_color, Graph, LatticeKind};
use dissprep::linalg::{self, CMat, C64, ONE};
use dissprep::local::{self, Layout};
use dissprep::tensor::{assemble_state, random_delta_spec, random_spec, rng_for, random_matrix, PepsSpec, PhysRule};
use faer::Mat;

fn ring(n: usize) -> Graph {
    build_lattice_graph(LatticeKind::Ring, &[n]).unwrap()
}

fn path(n: usize) -> Graph {
    build_lattice_graph(LatticeKind::Path, &[n]).unwrap()
}

fn random_density(n: usize, seed: u64) -> CMat {
    let mut rng = rng_for(seed, 999);
    let a = random_matrix(n, n, &mut rng);
    let r = &a * a.adjoint();
    let t = linalg::trace(r.as_ref());
    linalg::scale(r.as_ref(), ONE / t)
}

fn vec_cols(m: &CMat) -> Vec<C64> {
    let n = m.nrows();
    (0..n * n).map(|k| m[(k % n, k / n)]).collect()
}

fn unvec(v: &[C64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| v[j * n + i])
}

fn frob(a: &CMat, b: &CMat) -> f64 {
    linalg::frobenius(linalg::sub(a.as_ref(), b.as_ref()).as_ref())
}

fn specs() -> Vec<PepsSpec> {
    vec![
        random_spec(&ring(4), 2, PhysRule::Square, 1).unwrap(),
        random_spec(&ring(3), 2, PhysRule::Padded(1), 2).unwrap(),
        random_spec(&path(3), 2, PhysRule::Padded(2), 3).unwrap(),
        random_delta_spec(&ring(4), 2, PhysRule::Square, 0.2, 4).unwrap(),
        random_spec(&Graph::cycle(2).unwrap(), 2, PhysRule::Square, 5).unwrap(),
    ]
}

#[test]
fn target_is_annihilated() {
    for spec in specs() {
        let psi = assemble_state(&spec).unwrap().amplitudes;
        let layout = Layout::new(&spec.phys_dims());
        let ham = build_parent_ham(&spec).unwrap();
        for (k, t) in ham.terms.iter().enumerate() {
            let y = local::apply_vec(&psi, &layout.support(&ham.sites(k)), t.h.as_ref());
            assert!(linalg::norm2(&y) <= 1e-10 * linalg::op_norm(t.h.as_ref()).max(1.0), "h_e psi");
        }
        for (v, f) in ham.violations.iter().enumerate() {
            let y = local::apply_vec(&psi, &layout.support(&[v]), f.as_ref());
            assert!(linalg::norm2(&y) <= 1e-10);
        }
        let jumps = build_jump_set(&spec).unwrap();
        for e in &jumps.two_site {
            for l in e.operators() {
                let y = local::apply_vec(&psi, &layout.support(&e.sites()), l.as_ref());
                assert!(linalg::norm2(&y) <= 1e-10);
                let l2 = &l * &l;
                assert!(linalg::op_norm(l2.as_ref()) <= 1e-12 * linalg::op_norm(l.as_ref()).powi(2).max(1.0));
            }
        }
    }
}

#[test]
fn isometric_terms_are_projectors() {
    let spec = random_delta_spec(&ring(4), 2, PhysRule::Padded(1), 0.0, 11).unwrap();
    let ham = build_parent_ham(&spec).unwrap();
    for t in &ham.terms {
        let h2 = &t.h * &t.h;
        assert!(frob(&h2, &t.h) < 1e-12);
        assert!(frob(&t.h, &t.h_tilde) < 1e-12);
    }
}

#[test]
fn site_jumps_sum_to_complement_projector() {
    let spec = random_spec(&path(3), 2, PhysRule::Padded(3), 7).unwrap();
    let jumps = build_jump_set(&spec).unwrap();
    for s in &jumps.single_site {
        let d = s.p_perp.nrows();
        let mut acc = Mat::zeros(d, d);
        for l in s.operators() {
            linalg::add_assign(&mut acc, (l.adjoint() * &l).as_ref(), ONE);
        }
        assert!(linalg::max_abs(linalg::sub(acc.as_ref(), s.p_perp.as_ref()).as_ref()) < 1e-12);
        assert_eq!(s.operators().len(), s.dim_s * (d - s.dim_s));
    }
}

#[test]
fn fast_liouvillian_matches_superoperator() {
    for spec in [
        random_spec(&ring(3), 2, PhysRule::Square, 12).unwrap(),
        random_spec(&path(3), 2, PhysRule::Padded(1), 13).unwrap(),
        random_spec(&path(2), 2, PhysRule::Padded(2), 14).unwrap(),
    ] {
        let l = Liouvillian::from_spec(&spec).unwrap();
        let n = l.dim();
        let sup = build_liouvillian(&spec).unwrap();
        let rho = random_density(n, 3);
        let fast = l.apply(&rho);
        let dense = unvec(&linalg::mat_vec(sup.as_ref(), &vec_cols(&rho)), n);
        assert!(frob(&fast, &dense) < 1e-10, "residual {}", frob(&fast, &dense));
        // trace preservation: vec(I)† S = 0
        let mut worst: f64 = 0.0;
        for col in 0..n * n {
            let s: C64 = (0..n).map(|i| sup[(i * n + i, col)]).sum();
            worst = worst.max(s.norm());
        }
        assert!(worst < 1e-10);
        let psi = assemble_state(&spec).unwrap().amplitudes;
        let p = linalg::ket_bra(&psi, &psi);
        assert!(linalg::frobenius(l.apply(&p).as_ref()) < 1e-10);
    }
}

#[test]
fn edge_channel_contracts() {
    for spec in specs() {
        let jumps = build_jump_set(&spec).unwrap();
        let g = default_gamma(&jumps).unwrap();
        let mg = max_gamma(&spec);
        let psi = assemble_state(&spec).unwrap().amplitudes;
        let layout = Layout::new(&spec.phys_dims());
        for k in 0..spec.graph.num_edges() {
            let ch = build_edge_channel_from(&jumps, k, g, mg).unwrap();
            assert!(ch.completeness_residual() < 1e-12);
            let k0 = &ch.kraus()[0];
            let y = local::apply_vec(&psi, &layout.support(&ch.support), k0.as_ref());
            let d: Vec<C64> = y.iter().zip(&psi).map(|(a, b)| a - b).collect();
            assert!(linalg::norm2(&d) < 1e-10);
            let id = build_edge_channel_from(&jumps, k, 0.0, mg).unwrap();
            let rho = random_density(layout.total(), k as u64);
            assert!(frob(&id.apply(&rho), &rho) < 1e-12);
        }
    }
}

#[test]
fn gamma_beyond_limit_is_rejected() {
    let spec = random_delta_spec(&ring(4), 2, PhysRule::Square, 0.3, 21).unwrap();
    let jumps = build_jump_set(&spec).unwrap();
    let limit = admissible_gamma(&jumps).unwrap();
    let mg = max_gamma(&spec);
    assert!(mg <= limit);
    for k in 0..4 {
        assert!(build_edge_channel_from(&jumps, k, mg, mg).is_ok());
        assert!(build_edge_channel_from(&jumps, k, limit, mg).is_ok());
    }
    let err = (0..4).find_map(|k| build_edge_channel_from(&jumps, k, limit * (1.0 + 1e-6), mg).err());
    match err {
        Some(dissprep::Error::Gamma { max_gamma, .. }) => assert_eq!(max_gamma, mg),
        other => panic!("expected a gamma error, got {other:?}"),
    }
    assert!(build_edge_channel(&spec, 0, 10.0).is_err());
    assert!(build_edge_channel(&spec, 0, -0.1).is_err());
}

#[test]
fn global_channel_fixed_point_and_superoperator() {
    for spec in [
        random_spec(&ring(4), 2, PhysRule::Square, 31).unwrap(),
        random_spec(&path(3), 2, PhysRule::Padded(1), 32).unwrap(),
    ] {
        let coloring = edge_color(&spec.graph);
        let jumps = build_jump_set(&spec).unwrap();
        let g = default_gamma(&jumps).unwrap();
        let ch = build_global_channel(&spec, g, &coloring).unwrap();
        let psi = assemble_state(&spec).unwrap().amplitudes;
        let p = linalg::ket_bra(&psi, &psi);
        assert!(frob(&ch.apply_average(&p), &p) < 1e-10);
        let n = p.nrows();
        if n <= 16 {
            let s = ch.superoperator().unwrap();
            let rho = random_density(n, 8);
            let dense = unvec(&linalg::mat_vec(s.as_ref(), &vec_cols(&rho)), n);
            assert!(frob(&ch.apply_average(&rho), &dense) < 1e-10);
        }
        let out = ch.apply_average(&random_density(n, 9));
        assert!((linalg::trace(out.as_ref()).re - 1.0).abs() < 1e-10);
    }
}

#[test]
fn ring4_has_two_layers_of_two() {
    let spec = random_spec(&ring(4), 2, PhysRule::Square, 41).unwrap();
    let g = default_gamma(&build_jump_set(&spec).unwrap()).unwrap();
    let ch = build_global_channel(&spec, g, &edge_color(&spec.graph)).unwrap();
    assert_eq!(ch.k(), 2);
    assert!(ch.matching_layers.iter().all(|l| l.len() == 2));
}

#[test]
fn disjoint_edge_channels_commute() {
    let spec = random_spec(&ring(4), 2, PhysRule::Square, 51).unwrap();
    let jumps = build_jump_set(&spec).unwrap();
    let g = default_gamma(&jumps).unwrap();
    // edges (0,1) and (2,3) are indices 0 and 3 in canonical order
    let a = build_edge_channel_from(&jumps, 0, g, 0.0).unwrap();
    let b = build_edge_channel_from(&jumps, 3, g, 0.0).unwrap();
    let rho = random_density(256, 52);
    assert!(frob(&a.apply(&b.apply(&rho)), &b.apply(&a.apply(&rho))) < 1e-10);
}

#[test]
fn site_channel_is_trace_preserving() {
    let spec = random_spec(&path(3), 2, PhysRule::Padded(2), 61).unwrap();
    let jumps = build_jump_set(&spec).unwrap();
    let layout = Layout::new(&spec.phys_dims());
    for v in 0..3 {
        let ch = build_site_channel(&jumps, v);
        assert!(ch.completeness_residual() < 1e-12);
        let rho = random_density(layout.total(), v as u64);
        let out = ch.apply(&rho);
        assert!((linalg::trace(out.as_ref()).re - 1.0).abs() < 1e-12);
        // dense Kraus oracle
        let mut dense = Mat::zeros(layout.total(), layout.total());
        for k in ch.kraus() {
            let l = local::lift(&layout, &[v], k.as_ref());
            linalg::add_assign(&mut dense, (&(&l * &rho) * l.adjoint()).as_ref(), ONE);
        }
        assert!(frob(&out, &dense) < 1e-12);
    }
}

#[test]
fn real_channels_match_the_complex_path() {
    let spec = dissprep::experiments::blocked_spec(0.3, 6, 2).unwrap();
    let jumps = build_jump_set(&spec).unwrap();
    let ch = build_global_channel(&spec, default_gamma(&jumps).unwrap(), &edge_color(&spec.graph)).unwrap();
    assert!(ch.is_real());
    let c = random_density(64, 4);
    let r = Mat::from_fn(64, 64, |i, j| c[(i, j)].re);
    let want = ch.apply_average(&linalg::complexify(&r));
    let got = linalg::complexify(&ch.apply_average_real(&r).unwrap());
    assert!(frob(&want, &got) <= 1e-13);

    let complex = random_spec(&ring(3), 2, PhysRule::Square, 3).unwrap();
    let jumps = build_jump_set(&complex).unwrap();
    let ch = build_global_channel(&complex, default_gamma(&jumps).unwrap(), &edge_color(&complex.graph)).unwrap();
    assert!(!ch.is_real());
    assert!(ch.apply_average_real(&Mat::zeros(64, 64)).is_none());
}
