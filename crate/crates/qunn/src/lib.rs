//! Quanvolutional neural network simulator and robustness benchmark.
//!
//! The crate covers the full pipeline: a dense statevector simulator
//! ([`qsim`]), a circuit DSL plus the built-in ansatz catalog ([`circuits`]),
//! expressibility / entanglement-capability metrics ([`metrics`]), the
//! quanvolutional feature extractor ([`quanv`]), a classical convolutional
//! baseline with a shared trainable softmax head ([`classical`]), FGSM/PGD
//! attacks ([`attacks`]), IDX dataset ingestion ([`data`]), and experiment
//! orchestration ([`experiment`]).

pub mod attacks;
pub mod circuits;
pub mod classical;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod qsim;
pub mod quanv;

pub use circuits::{builtin_ansatz, CircuitSpec, ANSATZ_IDS};
pub use qsim::{GateKind, StateVector};
