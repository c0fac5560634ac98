use super::gate::{self, GateKind};
use super::{check_qubits, Result, SimError, StateVector};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Where a rotation gate reads its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    Const(f64),
    Input(usize),
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<AngleSource>,
}

impl GateOp {
    pub fn rx(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::RX, target, angle)
    }

    pub fn ry(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::RY, target, angle)
    }

    pub fn rz(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::RZ, target, angle)
    }

    pub fn rotation(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        Self {
            kind,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn h(target: usize) -> Self {
        Self {
            kind: GateKind::H,
            target,
            control: None,
            angle: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }
}

/// How classical inputs enter the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Encoding {
    /// Start from `|0…0⟩`; inputs are consumed as gate angles.
    #[default]
    Gates,
    /// The input vector is amplitude-encoded as the initial state.
    Amplitude,
}

/// A validated gate program with input and parameter slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    gates: Vec<GateOp>,
    n_input_slots: usize,
    n_param_slots: usize,
    measured: Vec<usize>,
    encoding: Encoding,
}

impl CircuitSpec {
    pub fn new(
        n_qubits: usize,
        gates: Vec<GateOp>,
        n_input_slots: usize,
        n_param_slots: usize,
        measured: Vec<usize>,
    ) -> Result<Self> {
        Self::with_encoding(
            n_qubits,
            gates,
            n_input_slots,
            n_param_slots,
            measured,
            Encoding::Gates,
        )
    }

    pub fn with_encoding(
        n_qubits: usize,
        gates: Vec<GateOp>,
        n_input_slots: usize,
        n_param_slots: usize,
        measured: Vec<usize>,
        encoding: Encoding,
    ) -> Result<Self> {
        check_qubits(n_qubits)?;
        let index = |index: usize| {
            if index < n_qubits {
                Ok(())
            } else {
                Err(SimError::QubitIndex { index, n_qubits })
            }
        };
        for g in &gates {
            index(g.target)?;
            match (g.kind, g.control, g.angle) {
                (GateKind::Cnot, None, _) => return Err(SimError::MissingControl(g.kind)),
                (GateKind::Cnot, Some(c), None) => {
                    index(c)?;
                    if c == g.target {
                        return Err(SimError::ControlIsTarget(c));
                    }
                }
                (k, Some(_), _) if k != GateKind::Cnot => {
                    return Err(SimError::UnexpectedControl(k))
                }
                (k, _, Some(_)) if !k.is_rotation() => return Err(SimError::UnexpectedAngle(k)),
                (k, _, None) if k.is_rotation() => return Err(SimError::MissingAngle(k)),
                _ => {}
            }
            match g.angle {
                Some(AngleSource::Input(slot)) => {
                    if encoding == Encoding::Amplitude {
                        return Err(SimError::InputAngleWithAmplitudeEncoding);
                    }
                    if slot >= n_input_slots {
                        return Err(SimError::SlotOutOfRange {
                            what: "input",
                            slot,
                            count: n_input_slots,
                        });
                    }
                }
                Some(AngleSource::Param(slot)) if slot >= n_param_slots => {
                    return Err(SimError::SlotOutOfRange {
                        what: "parameter",
                        slot,
                        count: n_param_slots,
                    })
                }
                _ => {}
            }
        }
        if encoding == Encoding::Amplitude && n_input_slots > 1 << n_qubits {
            return Err(SimError::EncodingTooLong {
                len: n_input_slots,
                n_qubits,
            });
        }
        if measured.is_empty() {
            return Err(SimError::NoMeasurement);
        }
        let mut seen = HashSet::new();
        for &q in &measured {
            index(q)?;
            if !seen.insert(q) {
                return Err(SimError::DuplicateMeasurement(q));
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            n_input_slots,
            n_param_slots,
            measured,
            encoding,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn n_input_slots(&self) -> usize {
        self.n_input_slots
    }

    pub fn n_param_slots(&self) -> usize {
        self.n_param_slots
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub(crate) fn check_lengths(&self, inputs: &[f64], params: &[f64]) -> Result<()> {
        if inputs.len() != self.n_input_slots {
            return Err(SimError::SlotCountMismatch {
                what: "input",
                expected: self.n_input_slots,
                got: inputs.len(),
            });
        }
        if params.len() != self.n_param_slots {
            return Err(SimError::SlotCountMismatch {
                what: "parameter",
                expected: self.n_param_slots,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Resolved angle of every gate (0 for angle-free gates).
    pub(crate) fn angles(&self, inputs: &[f64], params: &[f64]) -> Vec<f64> {
        self.gates
            .iter()
            .map(|g| match g.angle {
                Some(AngleSource::Const(a)) => a,
                Some(AngleSource::Input(i)) => inputs[i],
                Some(AngleSource::Param(p)) => params[p],
                None => 0.0,
            })
            .collect()
    }

    pub(crate) fn initial_state(&self, inputs: &[f64]) -> Result<StateVector> {
        match self.encoding {
            Encoding::Gates => StateVector::init_zero(self.n_qubits),
            Encoding::Amplitude => StateVector::amplitude_encode(inputs, self.n_qubits),
        }
    }

    pub(crate) fn apply_range(
        &self,
        state: &mut StateVector,
        angles: &[f64],
        range: std::ops::Range<usize>,
    ) {
        for (g, &angle) in self.gates[range.clone()].iter().zip(&angles[range]) {
            match g.control {
                Some(c) => gate::apply_cnot(&mut state.amps, c, g.target),
                None => gate::apply_single(&mut state.amps, g.kind, g.target, angle),
            }
        }
    }

    /// Applies the gates in order, resolving each angle from its source.
    pub fn run(&self, inputs: &[f64], params: &[f64]) -> Result<StateVector> {
        self.check_lengths(inputs, params)?;
        let angles = self.angles(inputs, params);
        let mut state = self.initial_state(inputs)?;
        self.apply_range(&mut state, &angles, 0..self.gates.len());
        Ok(state)
    }

    /// `⟨Z⟩` on the circuit's measured qubits.
    pub fn expectations(&self, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.run(inputs, params)?.expect_z(&self.measured)
    }
}

/// `CNOT(i, (i+1) mod n)` for every qubit; empty for a single qubit.
pub fn ring_cnots(n_qubits: usize) -> Vec<GateOp> {
    if n_qubits < 2 {
        return Vec::new();
    }
    (0..n_qubits)
        .map(|i| GateOp::cnot(i, (i + 1) % n_qubits))
        .collect()
}

/// Layers of fresh-parameter rotations followed by a CNOT ring.
///
/// Parameter slots are numbered from `first_slot` in layer, qubit, rotation
/// order; the fragment uses `n_layers · n_qubits · rotations.len()` of them.
pub fn build_ring_variational(
    n_qubits: usize,
    n_layers: usize,
    rotations: &[GateKind],
    first_slot: usize,
) -> Vec<GateOp> {
    let mut gates = Vec::new();
    let mut slot = first_slot;
    for _ in 0..n_layers {
        for q in 0..n_qubits {
            for &kind in rotations {
                gates.push(GateOp::rotation(kind, q, AngleSource::Param(slot)));
                slot += 1;
            }
        }
        gates.extend(ring_cnots(n_qubits));
    }
    gates
}
