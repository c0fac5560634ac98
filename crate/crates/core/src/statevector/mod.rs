//! Dense statevector simulation of parameterized circuits.
//!
//! Conventions used throughout:
//!
//! * qubit 0 is the least-significant bit of the basis index;
//! * `RY(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`, `RX` and `RZ` use the
//!   same half-angle form, `RZ(θ) = diag(e^{−iθ/2}, e^{iθ/2})`;
//! * `CNOT` flips the target when the control bit is 1.
//!
//! Global phase is never observable through this API: every output is an
//! expectation value or a probability.

mod batch;
mod circuit;
mod gate;
mod gradient;

pub use batch::{vjp_adjoint_batch, StateBatch};
pub use circuit::{build_ring_variational, ring_cnots, AngleSource, CircuitSpec, Encoding, GateOp};
pub use gate::GateKind;
pub use gradient::{grad_expect_z, jacobian_parameter_shift, vjp_adjoint, Jacobians, Vjp};

use num_complex::Complex64;
use thiserror::Error;

/// Largest register the simulator will allocate (2^20 amplitudes).
pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("qubit count {0} outside supported range 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },
    #[error("CNOT control and target are both qubit {0}")]
    ControlIsTarget(usize),
    #[error("{0:?} gate takes no angle")]
    UnexpectedAngle(GateKind),
    #[error("{0:?} gate requires an angle source")]
    MissingAngle(GateKind),
    #[error("{0:?} gate requires a control qubit")]
    MissingControl(GateKind),
    #[error("{0:?} gate takes no control qubit")]
    UnexpectedControl(GateKind),
    #[error("{what} slot {slot} exceeds declared count {count}")]
    SlotOutOfRange {
        what: &'static str,
        slot: usize,
        count: usize,
    },
    #[error("expected {expected} {what} values, got {got}")]
    SlotCountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("amplitude encoding of a zero-norm vector")]
    DegenerateEncoding,
    #[error("vector of length {len} does not fit into {n_qubits} qubits")]
    EncodingTooLong { len: usize, n_qubits: usize },
    #[error("angle encoding of {len} values needs at least {len} qubits, got {n_qubits}")]
    TooManyAngles { len: usize, n_qubits: usize },
    #[error("measured qubit list is empty")]
    NoMeasurement,
    #[error("qubit {0} is measured more than once")]
    DuplicateMeasurement(usize),
    #[error("amplitude-encoded circuits cannot bind input slots to gate angles")]
    InputAngleWithAmplitudeEncoding,
    #[error("observable weight vector has length {got}, circuit measures {expected} qubits")]
    WeightLength { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Complex amplitudes over the `2^n` computational basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(SimError::QubitCount(n_qubits));
    }
    Ok(())
}

impl StateVector {
    /// The ground state `|0…0⟩`.
    pub fn init_zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Writes `x / ‖x‖` into the leading amplitudes, zero beyond `x.len()`.
    pub fn amplitude_encode(x: &[f64], n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        if x.len() > 1 << n_qubits {
            return Err(SimError::EncodingTooLong {
                len: x.len(),
                n_qubits,
            });
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(SimError::DegenerateEncoding);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        for (a, &v) in amps.iter_mut().zip(x) {
            *a = Complex64::new(v / norm, 0.0);
        }
        Ok(Self { n_qubits, amps })
    }

    /// `∏ RY(x_i)` on qubit `i` applied to `H^⊗n |0…0⟩`; missing angles are 0.
    pub fn angle_encode_ry(x: &[f64], n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        if x.len() > n_qubits {
            return Err(SimError::TooManyAngles {
                len: x.len(),
                n_qubits,
            });
        }
        let mut state = Self::init_zero(n_qubits)?;
        for q in 0..n_qubits {
            state.apply_mut(GateKind::H, q, None, 0.0)?;
            let angle = x.get(q).copied().unwrap_or(0.0);
            state.apply_mut(GateKind::RY, q, None, angle)?;
        }
        Ok(state)
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if !amps.len().is_power_of_two() {
            return Err(SimError::QubitCount(n_qubits));
        }
        check_qubits(n_qubits)?;
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Returns a new state with `gate` applied; `angle` is ignored for `H`/`CNOT`.
    pub fn apply_gate(&self, gate: &GateOp, angle: f64) -> Result<Self> {
        let mut out = self.clone();
        out.apply_mut(gate.kind, gate.target, gate.control, angle)?;
        Ok(out)
    }

    pub(crate) fn apply_mut(
        &mut self,
        kind: GateKind,
        target: usize,
        control: Option<usize>,
        angle: f64,
    ) -> Result<()> {
        self.check_index(target)?;
        match (kind, control) {
            (GateKind::Cnot, Some(c)) => {
                self.check_index(c)?;
                if c == target {
                    return Err(SimError::ControlIsTarget(c));
                }
                gate::apply_cnot(&mut self.amps, c, target);
            }
            (GateKind::Cnot, None) => return Err(SimError::MissingControl(kind)),
            (_, Some(_)) => return Err(SimError::UnexpectedControl(kind)),
            (_, None) => gate::apply_single(&mut self.amps, kind, target, angle),
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.n_qubits {
            return Err(SimError::QubitIndex {
                index,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// Pauli-Z expectation for each listed qubit.
    pub fn expect_z(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for &q in qubits {
            self.check_index(q)?;
        }
        let mut out = vec![0.0; qubits.len()];
        for (idx, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (o, &q) in out.iter_mut().zip(qubits) {
                if idx >> q & 1 == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        Ok(out)
    }
}

/// Runs `circuit` and returns the final state.
pub fn run(circuit: &CircuitSpec, inputs: &[f64], params: &[f64]) -> Result<StateVector> {
    circuit.run(inputs, params)
}

/// Pauli-Z expectations of `qubits` on `state`.
pub fn expect_z(state: &StateVector, qubits: &[usize]) -> Result<Vec<f64>> {
    state.expect_z(qubits)
}
