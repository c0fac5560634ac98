use ndarray::Array2;
use proptest::prelude::*;
use qseq::statevector::{
    vjp_adjoint, vjp_adjoint_batch, AngleSource, CircuitSpec, GateKind, GateOp,
};

fn gate(kind: u8, target: usize, other: usize, slot: usize, n: usize, inputs: usize) -> GateOp {
    match kind % 6 {
        0 => GateOp::h(target),
        1 if n > 1 => GateOp::cnot(target, (target + 1 + other % (n - 1)) % n),
        1 => GateOp::h(target),
        k => {
            let rot = [GateKind::RX, GateKind::RY, GateKind::RZ][(k as usize + slot) % 3];
            let src = match k {
                2 => AngleSource::Param(slot % 4),
                3 => AngleSource::Input(slot % inputs),
                4 => AngleSource::Const(0.3 * slot as f64 - 1.0),
                _ => AngleSource::Param((slot + 1) % 4),
            };
            GateOp::rotation(rot, target, src)
        }
    }
}

fn circuit_strategy() -> impl Strategy<Value = CircuitSpec> {
    (1usize..=4).prop_flat_map(|n| {
        prop::collection::vec((any::<u8>(), 0..n, 0usize..8, 0usize..16), 1..24).prop_map(
            move |raw| {
                let gates = raw
                    .into_iter()
                    .map(|(k, t, o, s)| gate(k, t, o, s, n, 2))
                    .collect();
                CircuitSpec::new(n, gates, 2, 4, (0..n).collect()).unwrap()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_matches_single_register(
        circuit in circuit_strategy(),
        data in prop::collection::vec(-3.0f64..3.0, 64),
        rows in 1usize..6,
        shared in any::<bool>(),
    ) {
        let n = circuit.n_qubits();
        let mut it = data.iter().cycle().copied();
        let x = Array2::from_shape_fn((rows, 2), |_| it.next().unwrap());
        let p = Array2::from_shape_fn((if shared { 1 } else { rows }, 4), |_| it.next().unwrap());
        let w = Array2::from_shape_fn((rows, n), |_| it.next().unwrap());
        let batch = circuit.run_batch(x.view(), p.view()).unwrap();
        let z = batch.expect_z(circuit.measured()).unwrap();
        let (gx, gp) = vjp_adjoint_batch(&circuit, x.view(), p.view(), batch.clone(), w.view()).unwrap();
        let mut shared_sum = [0.0; 4];
        for r in 0..rows {
            let pr = p.row(if shared { 0 } else { r }).to_vec();
            let xr = x.row(r).to_vec();
            let single = circuit.run(&xr, &pr).unwrap();
            prop_assert!((batch.state(r).norm_sqr() - 1.0).abs() < 1e-9);
            for (a, b) in batch.state(r).amplitudes().iter().zip(single.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            let v = vjp_adjoint(&circuit, &xr, &pr, &w.row(r).to_vec()).unwrap();
            for q in 0..n {
                prop_assert!((z[[r, q]] - v.value[q]).abs() < 1e-12);
            }
            for i in 0..2 {
                prop_assert!((gx[[r, i]] - v.inputs[i]).abs() < 1e-10);
            }
            for j in 0..4 {
                if shared {
                    shared_sum[j] += v.params[j];
                } else {
                    prop_assert!((gp[[r, j]] - v.params[j]).abs() < 1e-10);
                }
            }
        }
        if shared {
            for j in 0..4 {
                prop_assert!((gp[[0, j]] - shared_sum[j]).abs() < 1e-10);
            }
        }
    }
}
