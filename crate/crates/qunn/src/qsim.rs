//! Dense statevector simulation of small qubit registers.
//!
//! Qubit 0 is the least-significant bit of the amplitude index. Rotation
//! convention is `R_A(theta) = exp(-i theta A / 2)` for A in {X, Y, Z};
//! controlled rotations apply the rotation on the target conditioned on the
//! control qubit.

use num_complex::Complex64;
use thiserror::Error;

pub const MAX_QUBITS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum QsimError {
    #[error("qubit count {0} out of supported range 1..={MAX_QUBITS}")]
    QubitCountOutOfRange(usize),
    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitIndexOutOfRange { index: usize, n_qubits: usize },
    #[error("control qubit equals target qubit ({0})")]
    ControlEqualsTarget(usize),
    #[error("gate {0} requires a control qubit")]
    MissingControl(&'static str),
    #[error("gate {0} does not take a control qubit")]
    UnexpectedControl(&'static str),
    #[error("state dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
}

/// A concrete gate with its angle bound, ready to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    RX(f64),
    RY(f64),
    RZ(f64),
    H,
    X,
    CNOT,
    CZ,
    CRX(f64),
    CRY(f64),
    CRZ(f64),
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::RX(_) => "RX",
            GateKind::RY(_) => "RY",
            GateKind::RZ(_) => "RZ",
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::CNOT => "CNOT",
            GateKind::CZ => "CZ",
            GateKind::CRX(_) => "CRX",
            GateKind::CRY(_) => "CRY",
            GateKind::CRZ(_) => "CRZ",
        }
    }

    pub fn is_controlled(&self) -> bool {
        matches!(
            self,
            GateKind::CNOT | GateKind::CZ | GateKind::CRX(_) | GateKind::CRY(_) | GateKind::CRZ(_)
        )
    }

    /// 2x2 matrix acting on the target qubit (the controlled kinds return the
    /// matrix applied when the control is set).
    pub fn target_matrix(&self) -> [[Complex64; 2]; 2] {
        let i = Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match *self {
            GateKind::RX(t) | GateKind::CRX(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                [[c * one, -i * s], [-i * s, c * one]]
            }
            GateKind::RY(t) | GateKind::CRY(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                [[c * one, -s * one], [s * one, c * one]]
            }
            GateKind::RZ(t) | GateKind::CRZ(t) => {
                let e = Complex64::from_polar(1.0, t / 2.0);
                [[e.conj(), zero], [zero, e]]
            }
            GateKind::H => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            GateKind::X | GateKind::CNOT => [[zero, one], [one, zero]],
            GateKind::CZ => [[one, zero], [zero, -one]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0...0> on `n_qubits` qubits.
    pub fn zero_state(n_qubits: usize) -> Result<Self, QsimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QsimError::QubitCountOutOfRange(n_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Build directly from amplitudes; intended for tests and PCA input.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        let n_qubits = amplitudes.len().trailing_zeros() as usize;
        if amplitudes.len() < 2 || !amplitudes.len().is_power_of_two() || n_qubits > MAX_QUBITS {
            return Err(QsimError::QubitCountOutOfRange(n_qubits));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    fn check_qubit(&self, index: usize) -> Result<(), QsimError> {
        if index >= self.n_qubits {
            return Err(QsimError::QubitIndexOutOfRange { index, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    /// Apply a gate in place by strided pair updates.
    pub fn apply_gate(
        &mut self,
        gate: GateKind,
        target: usize,
        control: Option<usize>,
    ) -> Result<(), QsimError> {
        self.check_qubit(target)?;
        match (gate.is_controlled(), control) {
            (true, None) => return Err(QsimError::MissingControl(gate.name())),
            (false, Some(_)) => return Err(QsimError::UnexpectedControl(gate.name())),
            (true, Some(c)) => {
                self.check_qubit(c)?;
                if c == target {
                    return Err(QsimError::ControlEqualsTarget(c));
                }
            }
            (false, None) => {}
        }
        let m = gate.target_matrix();
        let tmask = 1usize << target;
        let cmask = control.map(|c| 1usize << c);
        for i0 in 0..self.amplitudes.len() {
            if i0 & tmask != 0 {
                continue;
            }
            if let Some(cm) = cmask {
                if i0 & cm == 0 {
                    continue;
                }
            }
            let i1 = i0 | tmask;
            let a0 = self.amplitudes[i0];
            let a1 = self.amplitudes[i1];
            self.amplitudes[i0] = m[0][0] * a0 + m[0][1] * a1;
            self.amplitudes[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// <Z> on one qubit: sum of |a_i|^2 signed by the qubit's bit.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64, QsimError> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        let mut value = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if i & mask == 0 {
                value += p;
            } else {
                value -= p;
            }
        }
        Ok(value)
    }

    /// Tr(rho^2) of the single-qubit reduced density matrix obtained by
    /// tracing out all other qubits.
    pub fn reduced_purity(&self, qubit: usize) -> Result<f64, QsimError> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        let mut r00 = 0.0;
        let mut r11 = 0.0;
        let mut r01 = Complex64::new(0.0, 0.0);
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i & mask == 0 {
                r00 += a.norm_sqr();
                r01 += a * self.amplitudes[i | mask].conj();
            } else {
                r11 += a.norm_sqr();
            }
        }
        Ok(r00 * r00 + r11 * r11 + 2.0 * r01.norm_sqr())
    }

    /// |<a|b>|^2.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, QsimError> {
        if self.n_qubits != other.n_qubits {
            return Err(QsimError::DimensionMismatch(self.n_qubits, other.n_qubits));
        }
        let inner: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(inner.norm_sqr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_state_basis() {
        let s = StateVector::zero_state(1).unwrap();
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(s.amplitudes()[1], Complex64::new(0.0, 0.0));

        let s4 = StateVector::zero_state(4).unwrap();
        assert_eq!(s4.amplitudes().len(), 16);
        assert_eq!(s4.amplitudes()[0], Complex64::new(1.0, 0.0));

        assert_abs_diff_eq!(StateVector::zero_state(2).unwrap().norm_sq(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_state_rejects_out_of_range() {
        assert_eq!(StateVector::zero_state(0), Err(QsimError::QubitCountOutOfRange(0)));
        assert_eq!(StateVector::zero_state(9), Err(QsimError::QubitCountOutOfRange(9)));
    }

    #[test]
    fn ry_pi_flips_qubit() {
        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate(GateKind::RY(PI), 0, None).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].norm_sqr(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn cnot_is_involution() {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate(GateKind::RY(0.7), 0, None).unwrap();
        s.apply_gate(GateKind::RY(1.3), 1, None).unwrap();
        let before = s.clone();
        s.apply_gate(GateKind::CNOT, 1, Some(0)).unwrap();
        s.apply_gate(GateKind::CNOT, 1, Some(0)).unwrap();
        for (a, b) in s.amplitudes().iter().zip(before.amplitudes()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate(GateKind::H, 0, None).unwrap();
        s.apply_gate(GateKind::H, 0, None).unwrap();
        assert_abs_diff_eq!((s.amplitudes()[0] - 1.0).norm(), 0.0, epsilon = 1e-15);
    }

    fn bell_state() -> StateVector {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate(GateKind::H, 0, None).unwrap();
        s.apply_gate(GateKind::CNOT, 1, Some(0)).unwrap();
        s
    }

    #[test]
    fn expectation_z_cases() {
        let s = StateVector::zero_state(1).unwrap();
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), 1.0, epsilon = 1e-15);

        let theta = PI / 2.0;
        let mut r = StateVector::zero_state(1).unwrap();
        r.apply_gate(GateKind::RY(theta), 0, None).unwrap();
        assert_abs_diff_eq!(r.expectation_z(0).unwrap(), theta.cos(), epsilon = 1e-15);

        // Bell state: oracle is direct evaluation over the 4 amplitudes
        // (|00> + |11>)/sqrt(2): each qubit sees +1/2 - 1/2 = 0.
        let b = bell_state();
        assert_abs_diff_eq!(b.expectation_z(0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.expectation_z(1).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reduced_purity_cases() {
        let s = StateVector::zero_state(2).unwrap();
        assert_abs_diff_eq!(s.reduced_purity(0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.reduced_purity(1).unwrap(), 1.0, epsilon = 1e-15);

        // Bell state: partial trace gives I/2, purity 1/2 on both qubits.
        let b = bell_state();
        assert_abs_diff_eq!(b.reduced_purity(0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.reduced_purity(1).unwrap(), 0.5, epsilon = 1e-12);

        let mut one = StateVector::zero_state(1).unwrap();
        one.apply_gate(GateKind::RY(0.9), 0, None).unwrap();
        assert_abs_diff_eq!(one.reduced_purity(0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_cases() {
        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate(GateKind::RY(1.1), 0, None).unwrap();
        assert_abs_diff_eq!(s.fidelity(&s).unwrap(), 1.0, epsilon = 1e-12);

        let zero = StateVector::zero_state(1).unwrap();
        let mut one = StateVector::zero_state(1).unwrap();
        one.apply_gate(GateKind::X, 0, None).unwrap();
        assert_abs_diff_eq!(zero.fidelity(&one).unwrap(), 0.0, epsilon = 1e-15);

        // |<0|RY(pi/2)|0>|^2 = cos^2(pi/4) = 1/2
        let mut half = StateVector::zero_state(1).unwrap();
        half.apply_gate(GateKind::RY(PI / 2.0), 0, None).unwrap();
        assert_abs_diff_eq!(zero.fidelity(&half).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn argument_errors() {
        let mut s = StateVector::zero_state(2).unwrap();
        assert!(matches!(
            s.apply_gate(GateKind::H, 2, None),
            Err(QsimError::QubitIndexOutOfRange { .. })
        ));
        assert_eq!(
            s.apply_gate(GateKind::CNOT, 1, Some(1)),
            Err(QsimError::ControlEqualsTarget(1))
        );
        assert_eq!(s.apply_gate(GateKind::CNOT, 1, None), Err(QsimError::MissingControl("CNOT")));
        assert_eq!(s.apply_gate(GateKind::H, 0, Some(1)), Err(QsimError::UnexpectedControl("H")));
        assert!(s.expectation_z(5).is_err());
        assert!(s.reduced_purity(2).is_err());
        let other = StateVector::zero_state(3).unwrap();
        assert_eq!(s.fidelity(&other), Err(QsimError::DimensionMismatch(2, 3)));
    }

    #[test]
    fn gate_matrices_unitary() {
        let gates = [
            GateKind::RX(0.37),
            GateKind::RY(1.2),
            GateKind::RZ(-2.5),
            GateKind::H,
            GateKind::X,
            GateKind::CNOT,
            GateKind::CZ,
            GateKind::CRX(0.7),
            GateKind::CRY(-0.4),
            GateKind::CRZ(3.0),
        ];
        for g in gates {
            let m = g.target_matrix();
            // U^dagger U = I to 1e-12
            for r in 0..2 {
                for c in 0..2 {
                    let e: Complex64 =
                        (0..2).map(|k| m[k][r].conj() * m[k][c]).sum();
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert!((e - expect).norm() < 1e-12, "{} not unitary", g.name());
                }
            }
        }
    }
}
