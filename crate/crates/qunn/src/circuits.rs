//! Portable circuit description, the built-in ansatz catalog, parameter
//! binding, and execution on the statevector simulator.
//!
//! The document format is JSON:
//! `{ "label": str, "n_qubits": int, "ops": [ { "gate": "RY", "target": 0,
//! "control": 1?, "param": 0? , "angle": 1.57? } ] }` with exactly one of
//! `param`/`angle` on rotation gates and neither on H/X/CNOT/CZ.

use crate::qsim::{GateKind, QsimError, StateVector, MAX_QUBITS};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("malformed circuit document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("op {index}: unknown gate name {name:?}")]
    UnknownGate { index: usize, name: String },
    #[error("op {index}: qubit index {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, qubit: usize, n_qubits: usize },
    #[error("op {index}: control equals target ({qubit})")]
    ControlEqualsTarget { index: usize, qubit: usize },
    #[error("op {index}: gate {name} requires a control qubit")]
    MissingControl { index: usize, name: &'static str },
    #[error("op {index}: gate {name} does not take a control qubit")]
    UnexpectedControl { index: usize, name: &'static str },
    #[error("op {index}: gate {name} takes exactly one of \"param\"/\"angle\"")]
    BadAngleBinding { index: usize, name: &'static str },
    #[error("op {index}: gate {name} is not parameterized but has param/angle")]
    UnexpectedAngle { index: usize, name: &'static str },
    #[error("parameter slot {missing} is never referenced (slots seen up to {max_slot})")]
    UnusedParamSlot { missing: usize, max_slot: usize },
    #[error("circuit declares {n_qubits} qubits; supported range is 1..={MAX_QUBITS}")]
    BadQubitCount { n_qubits: usize },
    #[error("parameter vector length {got} does not match circuit n_params {expected}")]
    ParamLengthMismatch { got: usize, expected: usize },
    #[error("unknown ansatz id {0} (catalog has ids 1-9 and 11-19)")]
    UnknownAnsatz(u32),
    #[error(transparent)]
    Sim(#[from] QsimError),
}

/// Gate names as they appear in circuit documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateName {
    RX,
    RY,
    RZ,
    H,
    X,
    CNOT,
    CZ,
    CRX,
    CRY,
    CRZ,
}

impl GateName {
    pub fn is_parameterized(self) -> bool {
        matches!(self, GateName::RX | GateName::RY | GateName::RZ | GateName::CRX | GateName::CRY | GateName::CRZ)
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateName::CNOT | GateName::CZ | GateName::CRX | GateName::CRY | GateName::CRZ)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateName::RX => "RX",
            GateName::RY => "RY",
            GateName::RZ => "RZ",
            GateName::H => "H",
            GateName::X => "X",
            GateName::CNOT => "CNOT",
            GateName::CZ => "CZ",
            GateName::CRX => "CRX",
            GateName::CRY => "CRY",
            GateName::CRZ => "CRZ",
        }
    }

    fn bind(self, angle: f64) -> GateKind {
        match self {
            GateName::RX => GateKind::RX(angle),
            GateName::RY => GateKind::RY(angle),
            GateName::RZ => GateKind::RZ(angle),
            GateName::H => GateKind::H,
            GateName::X => GateKind::X,
            GateName::CNOT => GateKind::CNOT,
            GateName::CZ => GateKind::CZ,
            GateName::CRX => GateKind::CRX(angle),
            GateName::CRY => GateKind::CRY(angle),
            GateName::CRZ => GateKind::CRZ(angle),
        }
    }
}

/// How a parameterized gate gets its angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Slot(usize),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateName,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<AngleSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    pub label: String,
    pub n_qubits: usize,
    pub ops: Vec<GateOp>,
    pub n_params: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OpDoc {
    gate: String,
    target: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    control: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    param: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitDoc {
    label: String,
    n_qubits: usize,
    ops: Vec<OpDoc>,
}

impl CircuitSpec {
    /// Parse and validate a circuit document.
    pub fn parse(text: &str) -> Result<Self, CircuitError> {
        let doc: CircuitDoc = serde_json::from_str(text)?;
        if doc.n_qubits == 0 || doc.n_qubits > MAX_QUBITS {
            return Err(CircuitError::BadQubitCount { n_qubits: doc.n_qubits });
        }
        let mut ops = Vec::with_capacity(doc.ops.len());
        let mut max_slot: Option<usize> = None;
        let mut seen_slots = Vec::new();
        for (index, op) in doc.ops.iter().enumerate() {
            let kind = match op.gate.as_str() {
                "RX" => GateName::RX,
                "RY" => GateName::RY,
                "RZ" => GateName::RZ,
                "H" => GateName::H,
                "X" => GateName::X,
                "CNOT" => GateName::CNOT,
                "CZ" => GateName::CZ,
                "CRX" => GateName::CRX,
                "CRY" => GateName::CRY,
                "CRZ" => GateName::CRZ,
                other => {
                    return Err(CircuitError::UnknownGate { index, name: other.to_string() })
                }
            };
            if op.target >= doc.n_qubits {
                return Err(CircuitError::QubitOutOfRange {
                    index,
                    qubit: op.target,
                    n_qubits: doc.n_qubits,
                });
            }
            match (kind.is_controlled(), op.control) {
                (true, None) => {
                    return Err(CircuitError::MissingControl { index, name: kind.as_str() })
                }
                (false, Some(_)) => {
                    return Err(CircuitError::UnexpectedControl { index, name: kind.as_str() })
                }
                (true, Some(c)) => {
                    if c >= doc.n_qubits {
                        return Err(CircuitError::QubitOutOfRange {
                            index,
                            qubit: c,
                            n_qubits: doc.n_qubits,
                        });
                    }
                    if c == op.target {
                        return Err(CircuitError::ControlEqualsTarget { index, qubit: c });
                    }
                }
                (false, None) => {}
            }
            let angle = match (kind.is_parameterized(), op.param, op.angle) {
                (true, Some(slot), None) => {
                    max_slot = Some(max_slot.map_or(slot, |m: usize| m.max(slot)));
                    seen_slots.push(slot);
                    Some(AngleSource::Slot(slot))
                }
                (true, None, Some(a)) => Some(AngleSource::Fixed(a)),
                (true, _, _) => {
                    return Err(CircuitError::BadAngleBinding { index, name: kind.as_str() })
                }
                (false, None, None) => None,
                (false, _, _) => {
                    return Err(CircuitError::UnexpectedAngle { index, name: kind.as_str() })
                }
            };
            ops.push(GateOp { kind, target: op.target, control: op.control, angle });
        }
        let n_params = max_slot.map_or(0, |m| m + 1);
        for slot in 0..n_params {
            if !seen_slots.contains(&slot) {
                return Err(CircuitError::UnusedParamSlot { missing: slot, max_slot: n_params - 1 });
            }
        }
        Ok(CircuitSpec { label: doc.label, n_qubits: doc.n_qubits, ops, n_params })
    }

    /// Serialize back to the document format; `parse(serialize(c)) == c`.
    pub fn to_document(&self) -> String {
        let doc = CircuitDoc {
            label: self.label.clone(),
            n_qubits: self.n_qubits,
            ops: self
                .ops
                .iter()
                .map(|op| {
                    let (param, angle) = match op.angle {
                        Some(AngleSource::Slot(s)) => (Some(s), None),
                        Some(AngleSource::Fixed(a)) => (None, Some(a)),
                        None => (None, None),
                    };
                    OpDoc {
                        gate: op.kind.as_str().to_string(),
                        target: op.target,
                        control: op.control,
                        param,
                        angle,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("circuit doc serializes")
    }

    /// Apply the circuit to |0...0>.
    pub fn run(&self, params: &[f64]) -> Result<StateVector, CircuitError> {
        let mut state = StateVector::zero_state(self.n_qubits)?;
        self.run_on(&mut state, params)?;
        Ok(state)
    }

    /// Apply the circuit to an existing state (used by the quanvolutional
    /// layer, which prepares the encoded patch state first).
    pub fn run_on(&self, state: &mut StateVector, params: &[f64]) -> Result<(), CircuitError> {
        if params.len() != self.n_params {
            return Err(CircuitError::ParamLengthMismatch {
                got: params.len(),
                expected: self.n_params,
            });
        }
        for op in &self.ops {
            let angle = match op.angle {
                Some(AngleSource::Slot(s)) => params[s],
                Some(AngleSource::Fixed(a)) => a,
                None => 0.0,
            };
            state.apply_gate(op.kind.bind(angle), op.target, op.control)?;
        }
        Ok(())
    }

    /// i.i.d. uniform [0, 2pi) parameters; deterministic given the RNG state.
    pub fn sample_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_params).map(|_| rng.gen::<f64>() * TAU).collect()
    }

    /// "CRz"/"CRx" tag read from the ops themselves, the Table-1 control-gate
    /// column convention (CNOT/CZ entanglers are untagged).
    pub fn control_gate_tag(&self) -> Option<&'static str> {
        let has = |k: GateName| self.ops.iter().any(|op| op.kind == k);
        if has(GateName::CRZ) {
            Some("CRz")
        } else if has(GateName::CRX) {
            Some("CRx")
        } else if has(GateName::CRY) {
            Some("CRy")
        } else {
            None
        }
    }

    pub fn has_two_qubit_ops(&self) -> bool {
        self.ops.iter().any(|op| op.control.is_some())
    }
}

/// Catalog ids are 1-9 and 11-19; id 10 is deliberately absent.
pub const ANSATZ_IDS: [u32; 18] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 13, 14, 15, 16, 17, 18, 19];

macro_rules! ansatz_doc {
    ($id:literal) => {
        include_str!(concat!("../assets/ansatz/ansatz_", $id, ".json"))
    };
}

/// One layer of the fixed 4-qubit template for the given catalog id.
pub fn builtin_ansatz(id: u32) -> Result<CircuitSpec, CircuitError> {
    let doc = match id {
        1 => ansatz_doc!("01"),
        2 => ansatz_doc!("02"),
        3 => ansatz_doc!("03"),
        4 => ansatz_doc!("04"),
        5 => ansatz_doc!("05"),
        6 => ansatz_doc!("06"),
        7 => ansatz_doc!("07"),
        8 => ansatz_doc!("08"),
        9 => ansatz_doc!("09"),
        11 => ansatz_doc!("11"),
        12 => ansatz_doc!("12"),
        13 => ansatz_doc!("13"),
        14 => ansatz_doc!("14"),
        15 => ansatz_doc!("15"),
        16 => ansatz_doc!("16"),
        17 => ansatz_doc!("17"),
        18 => ansatz_doc!("18"),
        19 => ansatz_doc!("19"),
        other => return Err(CircuitError::UnknownAnsatz(other)),
    };
    CircuitSpec::parse(doc)
}
