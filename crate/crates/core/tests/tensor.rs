use dissprep::graph::{build_lattice_graph, edge_color, Graph, LatticeKind};
use dissprep::linalg::{self, C64};
use dissprep::tensor::{assemble_state, make_bond_basis, random_delta_spec, random_spec, PepsSpec, PhysRule, SiteTensor};

#[test]
fn lattice_sizes() {
    let ring = build_lattice_graph(LatticeKind::Ring, &[5]).unwrap();
    assert_eq!((ring.num_edges(), ring.max_degree()), (5, 2));
    let grid = build_lattice_graph(LatticeKind::Grid2d, &[3, 4]).unwrap();
    assert_eq!((grid.num_edges(), grid.max_degree()), (17, 4));
    assert!(edge_color(&grid).k() <= 7);
    assert_eq!(edge_color(&ring).k(), 3);
    assert_eq!(edge_color(&build_lattice_graph(LatticeKind::Ring, &[6]).unwrap()).k(), 2);
}

#[test]
fn graph_file_format() {
    let g: Graph = serde_json::from_str(r#"{"n": 3, "edges": [[1, 0], [2, 1]]}"#).unwrap();
    assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    assert!(serde_json::from_str::<Graph>(r#"{"n": 3, "edges": [[0, 1]]}"#).is_err());
    assert!(serde_json::from_str::<Graph>(r#"{"n": 2, "edges": [[0, 0]]}"#).is_err());
}

#[test]
fn identity_tensors_give_a_product_of_bonds() {
    let g = build_lattice_graph(LatticeKind::Path, &[2]).unwrap();
    let bond = make_bond_basis(2).unwrap();
    let ts = (0..2).map(|v| SiteTensor::new(v, linalg::eye(2), 2, g.neighbors(v)).unwrap()).collect();
    let spec = PepsSpec::new(g, ts, bond).unwrap();
    let s = assemble_state(&spec).unwrap();
    let r = 1.0 / 2f64.sqrt();
    let expect = [r, 0.0, 0.0, r];
    for (a, b) in s.amplitudes.iter().zip(expect) {
        assert!((a - C64::new(b, 0.0)).norm() < 1e-15);
    }
    assert_eq!(spec.delta_isometry().uniform, 0.0);
}

#[test]
fn pseudo_inverse_is_a_left_inverse() {
    let spec = random_spec(&Graph::cycle(3).unwrap(), 2, PhysRule::Padded(3), 12).unwrap();
    for t in &spec.tensors {
        let r = t.injectivity_report(None).unwrap();
        assert!(r.injective && r.sigma_min > 0.0);
        let p = &r.pseudo_inverse * &t.matrix;
        assert!(linalg::max_abs(linalg::sub(p.as_ref(), linalg::eye(4).as_ref()).as_ref()) <= 1e-12);
    }
}

#[test]
fn rank_deficient_tensors_are_not_injective() {
    let g = build_lattice_graph(LatticeKind::Path, &[2]).unwrap();
    let mut m = linalg::zeros(2, 2);
    m[(0, 0)] = C64::new(1.0, 0.0);
    m[(1, 0)] = C64::new(1.0, 0.0);
    let t = SiteTensor::new(0, m, 2, vec![1]).unwrap();
    assert!(!t.injectivity_report(None).unwrap().injective);
    let ts = vec![t, SiteTensor::new(1, linalg::eye(2), 2, vec![0]).unwrap()];
    let spec = PepsSpec::new(g, ts, make_bond_basis(2).unwrap()).unwrap();
    assert!(spec.require_injective().is_err());
}

#[test]
fn leg_order_must_match_adjacency() {
    let g = Graph::cycle(3).unwrap();
    assert!(SiteTensor::new(0, linalg::eye(4), 2, vec![2, 1]).is_err());
    let ts = (0..3)
        .map(|v| {
            let legs = if v == 0 { vec![1, 1] } else { g.neighbors(v) };
            SiteTensor::new(v, linalg::eye(4), 2, legs).unwrap()
        })
        .collect();
    let e = PepsSpec::new(g, ts, make_bond_basis(2).unwrap()).unwrap_err();
    assert!(e.to_string().contains("vertex 0"));
}

#[test]
fn delta_specs_hit_their_target() {
    for &d in &[0.0, 0.1, 0.4] {
        let s = random_delta_spec(&build_lattice_graph(LatticeKind::Path, &[4]).unwrap(), 2, PhysRule::Padded(1), d, 2).unwrap();
        assert!((s.delta_isometry().uniform - d).abs() <= 1e-12);
    }
}
