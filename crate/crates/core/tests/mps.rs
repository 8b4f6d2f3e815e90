use dissprep::gfamily::{g_family_matrices, g_family_tensors, pauli_x, pauli_z};
use dissprep::linalg::{self, C64};
use dissprep::mps::{
    block_mps, blocked_ring_spec, correlation_length, mps_expectation, mps_state, transfer_matrix,
    transfer_spectrum,
};
use dissprep::tensor::assemble_state;

fn overlap(a: &[C64], b: &[C64]) -> f64 {
    linalg::vdot(a, b).norm_sqr()
}

#[test]
fn transfer_eigenvalues_for_g_positive() {
    // E has the closed-form spectrum {1, (1-g)/(1+g), 0, 0} after dividing by λ1.
    for &g in &[0.1, 0.3, 0.5] {
        let w = transfer_spectrum(&g_family_tensors(g, 4).unwrap()).unwrap();
        let r = w[1].norm() / w[0].norm();
        assert!((r - (1.0 - g) / (1.0 + g)).abs() < 1e-12, "g={g} ratio {r}");
    }
}

#[test]
fn leading_eigenvalue_positive_at_zero() {
    let w = transfer_spectrum(&g_family_tensors(0.0, 4).unwrap()).unwrap();
    assert!(w[0].re > 0.0 && w[0].im.abs() < 1e-12);
}

#[test]
fn correlation_length_diverges_at_zero() {
    assert!(correlation_length(&g_family_tensors(0.0, 4).unwrap()).is_err());
    let xi = correlation_length(&g_family_tensors(0.5, 4).unwrap()).unwrap();
    assert!((xi - 1.0 / 3f64.ln()).abs() < 1e-10);
}

#[test]
fn transfer_matrix_op_shape_checked() {
    let c = g_family_tensors(0.3, 4).unwrap();
    assert!(transfer_matrix(&c, Some(&linalg::eye(3))).is_err());
}

#[test]
fn expectation_matches_dense_state() {
    for &g in &[-0.7, -0.3, 0.1, 0.5, 0.9] {
        for n in 3..=8 {
            let c = g_family_tensors(g, n).unwrap();
            let (psi, _) = mps_state(&c).unwrap();
            let layout = dissprep::local::Layout::new(&vec![2; n]);
            for op in [pauli_x(), pauli_z()] {
                let sup = layout.support(&[0]);
                let opsi = dissprep::local::apply_vec(&psi, &sup, op.as_ref());
                let dense = linalg::vdot(&psi, &opsi).re;
                let tm = mps_expectation(&c, &op, n).unwrap();
                assert!((dense - tm).abs() < 1e-10, "g={g} n={n}: {dense} vs {tm}");
            }
            assert!((mps_expectation(&c, &linalg::eye(2), n).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn ungauged_pair_block_has_zero_row_at_zero() {
    let c = g_family_tensors(0.0, 4).unwrap();
    let b = block_mps(&c, 0, 2, false).unwrap();
    // row (s1, s2) = (0, 1) is vec(A0 A1)
    for k in 0..4 {
        assert_eq!(b.matrix[(1, k)].norm(), 0.0);
    }
    let [a0, a1] = g_family_matrices(0.3).unwrap();
    let p = &a1 * &a0;
    let b = block_mps(&g_family_tensors(0.3, 4).unwrap(), 0, 2, false).unwrap();
    for a in 0..2 {
        for cc in 0..2 {
            assert!((b.matrix[(2, a * 2 + cc)] - p[(a, cc)]).norm() < 1e-15);
        }
    }
}

#[test]
fn gauged_delta_decreases_with_block_size() {
    let c = g_family_tensors(0.3, 16).unwrap();
    let deltas: Vec<f64> = (1..=8).map(|l| block_mps(&c, 0, l, true).unwrap().delta()).collect();
    for w in deltas.windows(2) {
        assert!(w[1] < w[0], "{deltas:?}");
    }
    let xi = correlation_length(&c).unwrap();
    for w in deltas.windows(2) {
        let rate = (w[0] / w[1]).ln();
        assert!((rate * xi - 1.0).abs() < 0.2, "rate {rate} xi {xi}");
    }
}

#[test]
fn blocked_ring_reproduces_chain_state() {
    for &g in &[0.1, 0.3, 0.5, -0.3] {
        for &(n, l) in &[(4, 2), (6, 2), (8, 2), (10, 2), (10, 5), (5, 1), (9, 3)] {
            if n / l < 2 {
                continue;
            }
            let chain = g_family_tensors(g, n).unwrap();
            let (psi, _) = mps_state(&chain).unwrap();
            for gauged in [true, false] {
                let spec = blocked_ring_spec(&chain, n, l, gauged).unwrap();
                let st = assemble_state(&spec).unwrap();
                let ov = overlap(&psi, &st.amplitudes);
                assert!(ov >= 1.0 - 1e-10, "g={g} n={n} l={l} gauged={gauged}: overlap {ov}");
            }
        }
    }
}
