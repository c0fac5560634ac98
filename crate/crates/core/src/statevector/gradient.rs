//! Derivatives of Pauli-Z expectations with respect to gate angles.
//!
//! Two independent routes are provided. [`jacobian_parameter_shift`] evaluates
//! the two-term shift rule `½[⟨Z⟩(θ+π/2) − ⟨Z⟩(θ−π/2)]` per gate occurrence and
//! returns full Jacobians. [`vjp_adjoint`] contracts the expectations with a
//! weight vector and sweeps the circuit backwards once, which costs a small
//! constant number of circuit passes regardless of how many angles there are.

use super::circuit::{AngleSource, CircuitSpec, Encoding};
use super::gate;
use super::{Result, SimError, StateVector};
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// Expectations plus their Jacobians (rows: measured qubits).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub value: Vec<f64>,
    pub inputs: Array2<f64>,
    pub params: Array2<f64>,
}

/// Vector-Jacobian product of the measured expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct Vjp {
    pub value: Vec<f64>,
    pub inputs: Vec<f64>,
    pub params: Vec<f64>,
}

fn z_diagonal(n_qubits: usize, qubits: &[usize], weights: &[f64]) -> Vec<f64> {
    (0..1usize << n_qubits)
        .map(|idx| {
            qubits
                .iter()
                .zip(weights)
                .map(|(&q, &w)| if idx >> q & 1 == 0 { w } else { -w })
                .sum()
        })
        .collect()
}

/// Parameter-shift Jacobians of `⟨Z⟩` on the circuit's measured qubits.
///
/// Amplitude-encoded circuits have no angle-bound inputs; their input Jacobian
/// is obtained from one adjoint sweep per measured qubit.
pub fn jacobian_parameter_shift(
    circuit: &CircuitSpec,
    inputs: &[f64],
    params: &[f64],
) -> Result<Jacobians> {
    jacobian_for(circuit, inputs, params, circuit.measured())
}

fn jacobian_for(
    circuit: &CircuitSpec,
    inputs: &[f64],
    params: &[f64],
    qubits: &[usize],
) -> Result<Jacobians> {
    circuit.check_lengths(inputs, params)?;
    let n_out = qubits.len();
    let mut jac_in = Array2::zeros((n_out, circuit.n_input_slots()));
    let mut jac_p = Array2::zeros((n_out, circuit.n_param_slots()));
    let angles = circuit.angles(inputs, params);
    let gates = circuit.gates();

    let mut state = circuit.initial_state(inputs)?;
    let mut prefixes = Vec::new();
    for (j, g) in gates.iter().enumerate() {
        if matches!(g.angle, Some(AngleSource::Input(_) | AngleSource::Param(_))) {
            prefixes.push((j, state.clone()));
        }
        circuit.apply_range(&mut state, &angles, j..j + 1);
    }
    let value = state.expect_z(qubits)?;

    let mut shifted = angles.clone();
    for (j, prefix) in prefixes {
        let mut diff = vec![0.0; n_out];
        for (sign, shift) in [(1.0, FRAC_PI_2), (-1.0, -FRAC_PI_2)] {
            shifted[j] = angles[j] + shift;
            let mut s = prefix.clone();
            circuit.apply_range(&mut s, &shifted, j..gates.len());
            for (d, z) in diff.iter_mut().zip(s.expect_z(qubits)?) {
                *d += 0.5 * sign * z;
            }
        }
        shifted[j] = angles[j];
        let mut column = match gates[j].angle {
            Some(AngleSource::Input(slot)) => jac_in.column_mut(slot),
            Some(AngleSource::Param(slot)) => jac_p.column_mut(slot),
            _ => unreachable!(),
        };
        for (c, d) in column.iter_mut().zip(diff) {
            *c += d;
        }
    }

    if circuit.encoding() == Encoding::Amplitude {
        for k in 0..n_out {
            let mut weights = vec![0.0; n_out];
            weights[k] = 1.0;
            let v = adjoint(circuit, inputs, params, qubits, &weights)?;
            jac_in
                .row_mut(k)
                .assign(&ndarray::ArrayView1::from(&v.inputs));
        }
    }
    Ok(Jacobians {
        value,
        inputs: jac_in,
        params: jac_p,
    })
}

/// `∂⟨Z_k⟩/∂param_j` for the listed qubits, by the parameter-shift rule.
pub fn grad_expect_z(
    circuit: &CircuitSpec,
    inputs: &[f64],
    params: &[f64],
    qubits: &[usize],
) -> Result<Array2<f64>> {
    for &q in qubits {
        if q >= circuit.n_qubits() {
            return Err(SimError::QubitIndex {
                index: q,
                n_qubits: circuit.n_qubits(),
            });
        }
    }
    Ok(jacobian_for(circuit, inputs, params, qubits)?.params)
}

/// Gradient of `Σ_k weights[k]·⟨Z_{m_k}⟩` over the measured qubits `m_k`,
/// computed with a single adjoint sweep.
pub fn vjp_adjoint(
    circuit: &CircuitSpec,
    inputs: &[f64],
    params: &[f64],
    weights: &[f64],
) -> Result<Vjp> {
    circuit.check_lengths(inputs, params)?;
    if weights.len() != circuit.measured().len() {
        return Err(SimError::WeightLength {
            expected: circuit.measured().len(),
            got: weights.len(),
        });
    }
    adjoint(circuit, inputs, params, circuit.measured(), weights)
}

fn adjoint(
    circuit: &CircuitSpec,
    inputs: &[f64],
    params: &[f64],
    qubits: &[usize],
    weights: &[f64],
) -> Result<Vjp> {
    let angles = circuit.angles(inputs, params);
    let mut phi = circuit.initial_state(inputs)?;
    circuit.apply_range(&mut phi, &angles, 0..circuit.gates().len());
    adjoint_sweep(circuit, inputs, &angles, phi, qubits, weights)
}

fn adjoint_sweep(
    circuit: &CircuitSpec,
    inputs: &[f64],
    angles: &[f64],
    output: StateVector,
    qubits: &[usize],
    weights: &[f64],
) -> Result<Vjp> {
    let gates = circuit.gates();
    let value = output.expect_z(qubits)?;
    let diag = z_diagonal(circuit.n_qubits(), qubits, weights);
    let mut lambda: Vec<Complex64> = output.amps.iter().zip(&diag).map(|(a, d)| a * d).collect();
    let mut phi = output.amps;
    let mut g_in = vec![0.0; circuit.n_input_slots()];
    let mut g_p = vec![0.0; circuit.n_param_slots()];

    for (j, g) in gates.iter().enumerate().rev() {
        let slot = match g.angle {
            Some(AngleSource::Input(i)) => Some(&mut g_in[i]),
            Some(AngleSource::Param(p)) => Some(&mut g_p[p]),
            _ => None,
        };
        match slot {
            Some(acc) => {
                *acc += gate::adjoint_rotation(&mut lambda, &mut phi, g.kind, g.target, angles[j])
            }
            None => {
                gate::apply_inverse(&mut phi, g.kind, g.target, g.control, angles[j]);
                gate::apply_inverse(&mut lambda, g.kind, g.target, g.control, angles[j]);
            }
        }
    }

    if circuit.encoding() == Encoding::Amplitude {
        let initial = circuit.initial_state(inputs)?;
        amplitude_input_grad(&initial, inputs, &lambda, &mut g_in);
    }
    Ok(Vjp {
        value,
        inputs: g_in,
        params: g_p,
    })
}

/// Chains `dE/dψ₀ = 2·Re(λ₀)` through `ψ₀ = x/‖x‖`.
fn amplitude_input_grad(psi0: &StateVector, x: &[f64], lambda: &[Complex64], out: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d_psi: Vec<f64> = lambda[..x.len()].iter().map(|l| 2.0 * l.re).collect();
    let psi: Vec<f64> = psi0.amps[..x.len()].iter().map(|a| a.re).collect();
    let proj: f64 = psi.iter().zip(&d_psi).map(|(p, d)| p * d).sum();
    for ((o, d), p) in out.iter_mut().zip(&d_psi).zip(&psi) {
        *o = (d - p * proj) / norm;
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_ring_variational, ring_cnots, GateKind, GateOp};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_ry() -> CircuitSpec {
        CircuitSpec::new(1, vec![GateOp::ry(0, AngleSource::Param(0))], 0, 1, vec![0]).unwrap()
    }

    #[test]
    fn ry_shift_gradient() {
        let c = single_ry();
        let g = grad_expect_z(&c, &[], &[FRAC_PI_2], &[0]).unwrap();
        assert!((g[[0, 0]] + 1.0).abs() < 1e-14);
        let g = grad_expect_z(&c, &[], &[0.0], &[0]).unwrap();
        assert!(g[[0, 0]].abs() < 1e-15);
    }

    fn random_circuit(rng: &mut ChaCha8Rng) -> (CircuitSpec, Vec<f64>, Vec<f64>) {
        let n = 4;
        let mut gates: Vec<GateOp> = (0..n)
            .flat_map(|q| [GateOp::h(q), GateOp::rx(q, AngleSource::Input(q))])
            .collect();
        gates.extend(ring_cnots(n));
        gates.extend(build_ring_variational(
            n,
            2,
            &[GateKind::RY, GateKind::RZ],
            0,
        ));
        gates.push(GateOp::rx(1, AngleSource::Param(3)));
        let c = CircuitSpec::new(n, gates, n, 16, (0..n).collect()).unwrap();
        let inputs = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let params = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        (c, inputs, params)
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, inputs, params) = random_circuit(&mut rng);
        let jac = jacobian_parameter_shift(&c, &inputs, &params).unwrap();
        let h = 1e-5;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += h;
            let up = c.expectations(&inputs, &p).unwrap();
            p[j] -= 2.0 * h;
            let down = c.expectations(&inputs, &p).unwrap();
            for k in 0..4 {
                let fd = (up[k] - down[k]) / (2.0 * h);
                let an = jac.params[[k, j]];
                if an.abs() < 1e-2 {
                    assert!((fd - an).abs() < 1e-7);
                } else {
                    assert!(((fd - an) / an).abs() < 1e-5, "k={k} j={j} {fd} {an}");
                }
            }
        }
    }

    #[test]
    fn adjoint_agrees_with_shift_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (c, inputs, params) = random_circuit(&mut rng);
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jac = jacobian_parameter_shift(&c, &inputs, &params).unwrap();
            let vjp = vjp_adjoint(&c, &inputs, &params, &w).unwrap();
            let wv = ndarray::Array1::from(w);
            let want_p = jac.params.t().dot(&wv);
            let want_in = jac.inputs.t().dot(&wv);
            for (a, b) in vjp.params.iter().zip(&want_p) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in vjp.inputs.iter().zip(&want_in) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(vjp.value, jac.value);
        }
    }

    #[test]
    fn amplitude_input_gradient() {
        let mut gates = build_ring_variational(2, 2, &[GateKind::RY], 0);
        gates.push(GateOp::rx(0, AngleSource::Param(1)));
        let c =
            CircuitSpec::with_encoding(2, gates, 3, 4, vec![0, 1], Encoding::Amplitude).unwrap();
        let x = [0.3, -1.2, 0.7];
        let params = [0.4, -0.9, 1.3, 0.2];
        let w = [0.7, -0.4];
        let vjp = vjp_adjoint(&c, &x, &params, &w).unwrap();
        let f = |x: &[f64]| {
            let z = c.expectations(x, &params).unwrap();
            z[0] * w[0] + z[1] * w[1]
        };
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(
                (fd - vjp.inputs[i]).abs() < 1e-8,
                "{fd} vs {}",
                vjp.inputs[i]
            );
        }
    }

    #[test]
    fn weight_length_checked() {
        let c = single_ry();
        assert!(matches!(
            vjp_adjoint(&c, &[], &[0.1], &[1.0, 2.0]),
            Err(SimError::WeightLength { .. })
        ));
    }
}
