use dissprep::gfamily::g_family_tensors;
use dissprep::graph::Graph;
use dissprep::io::{PepsFile, PEPS_FORMAT};
use dissprep::linalg;
use dissprep::mps::MpsChain;
use dissprep::tensor::{assemble_state, random_spec, PepsSpec, PhysRule};

#[test]
fn spec_roundtrip_is_exact() {
    let spec = random_spec(&Graph::cycle(3).unwrap(), 2, PhysRule::Padded(1), 4).unwrap();
    let s = serde_json::to_string(&spec).unwrap();
    assert!(s.contains(PEPS_FORMAT) && s.contains("leg_order"));
    let back: PepsSpec = serde_json::from_str(&s).unwrap();
    for (a, b) in spec.tensors.iter().zip(&back.tensors) {
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.leg_order, b.leg_order);
    }
    assert_eq!(spec.bond.phi0, back.bond.phi0);
    let (x, y) = (assemble_state(&spec).unwrap(), assemble_state(&back).unwrap());
    assert_eq!(x.amplitudes, y.amplitudes);
}

#[test]
fn matrices_are_row_major_pairs() {
    let json = r#"{
        "graph": {"n": 2, "edges": [[0, 1]]},
        "bond_dim": 2,
        "tensors": [
            {"vertex": 0, "leg_order": [1], "matrix": [[[1, 0], [0, 0]], [[0, 0], [0, 2]]]},
            {"vertex": 1, "leg_order": [0], "matrix": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}
        ]
    }"#;
    let spec: PepsSpec = serde_json::from_str(json).unwrap();
    assert_eq!(spec.tensors[0].matrix[(1, 1)], linalg::c(0.0, 2.0));
    assert_eq!(spec.tensors[0].matrix[(0, 1)], linalg::c(0.0, 0.0));
}

#[test]
fn random_section_matches_generator() {
    let json = r#"{"graph": {"n": 3, "edges": [[0, 1], [1, 2], [0, 2]]}, "bond_dim": 2,
                   "random": {"seed": 9, "phys": {"padded": 1}}}"#;
    let f: PepsFile = serde_json::from_str(json).unwrap();
    let spec = f.into_spec().unwrap();
    let direct = random_spec(&Graph::cycle(3).unwrap(), 2, PhysRule::Padded(1), 9).unwrap();
    assert_eq!(spec.tensors[2].matrix, direct.tensors[2].matrix);
}

#[test]
fn malformed_specs_name_the_problem() {
    let both = r#"{"graph": {"n": 2, "edges": [[0, 1]]}, "bond_dim": 2, "random": {"seed": 1},
                   "tensors": []}"#;
    let e = serde_json::from_str::<PepsFile>(both).unwrap().into_spec().unwrap_err();
    assert!(e.to_string().contains("tensors"));
    let cols = r#"{"graph": {"n": 2, "edges": [[0, 1]]}, "bond_dim": 2, "tensors": [
        {"vertex": 0, "leg_order": [1], "matrix": [[[1, 0]]]},
        {"vertex": 1, "leg_order": [0], "matrix": [[[1, 0], [0, 0]]]}]}"#;
    let e = serde_json::from_str::<PepsFile>(cols).unwrap().into_spec().unwrap_err();
    assert!(e.to_string().contains("vertex 0"));
    assert!(serde_json::from_str::<PepsFile>(r#"{"graph": {"n": 2, "edges": [[0, 1]]}, "bond_dim": 2, "extra": 1}"#).is_err());
}

#[test]
fn chain_roundtrip() {
    let chain = g_family_tensors(0.3, 6).unwrap();
    let s = serde_json::to_string(&chain).unwrap();
    let back: MpsChain = serde_json::from_str(&s).unwrap();
    assert_eq!(back.length, 6);
    assert_eq!(back.sites[0], chain.sites[0]);
}
