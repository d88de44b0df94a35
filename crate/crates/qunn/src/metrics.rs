//! Circuit metrics: expressibility (KL divergence of sampled state-pair
//! fidelities against the analytic Haar distribution), entanglement
//! capability (averaged Meyer-Wallach Q), and 2-D PCA projection of sampled
//! states.

use crate::circuits::{CircuitError, CircuitSpec};
use crate::qsim::StateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid histogram interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("need at least {need} states, got {got}")]
    TooFewStates { need: usize, got: usize },
    #[error("state dimensions differ")]
    MixedDimensions,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Histogram of fidelities over a uniform partition of [0, 1].
#[derive(Debug, Clone)]
pub struct FidelityHistogram {
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl FidelityHistogram {
    pub fn new(n_bins: usize) -> Self {
        Self { n_bins, counts: vec![0; n_bins], total: 0 }
    }

    pub fn record(&mut self, fidelity: f64) {
        let f = fidelity.clamp(0.0, 1.0);
        let mut bin = (f * self.n_bins as f64) as usize;
        if bin == self.n_bins {
            bin -= 1; // f == 1.0 lands in the last bin
        }
        self.counts[bin] += 1;
        self.total += 1;
    }

    /// KL divergence against the analytic Haar fidelity distribution for
    /// Hilbert dimension `dim`. Empty bins contribute 0.
    pub fn kl_vs_haar(&self, dim: usize) -> f64 {
        let mut kl = 0.0;
        for (bin, &count) in self.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let p_a = count as f64 / self.total as f64;
            let lo = bin as f64 / self.n_bins as f64;
            let hi = (bin + 1) as f64 / self.n_bins as f64;
            let p_h = haar_bin_mass(lo, hi, dim).expect("bin edges valid");
            kl += p_a * (p_a / p_h).ln();
        }
        kl
    }
}

/// Exact Haar probability mass on [lo, hi]: integral of the pdf
/// (N-1)(1-F)^(N-2), which is (1-lo)^(N-1) - (1-hi)^(N-1).
pub fn haar_bin_mass(lo: f64, hi: f64, dim: usize) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(MetricsError::InvalidInterval { lo, hi });
    }
    let n = dim as f64;
    Ok((1.0 - lo).powf(n - 1.0) - (1.0 - hi).powf(n - 1.0))
}

/// One catalog row of the expressibility/entanglement summary table.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub id: u32,
    pub label: String,
    pub expressibility: f64,
    pub entanglement: f64,
    pub control_gate: Option<&'static str>,
    pub n_pairs: usize,
    pub n_bins: usize,
    pub n_samples: usize,
    pub seed: u64,
}

pub const DEFAULT_N_PAIRS: usize = 5000;
pub const DEFAULT_N_BINS: usize = 75;
pub const DEFAULT_N_SAMPLES: usize = 5000;

/// Expressibility as D_KL(P_A || P_H): sample `n_pairs` independent
/// parameter pairs, bin the pairwise fidelities, compare to the Haar
/// distribution. Lower is more expressive. Deterministic given the seed.
pub fn expressibility(
    circuit: &CircuitSpec,
    n_pairs: usize,
    n_bins: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = FidelityHistogram::new(n_bins);
    for _ in 0..n_pairs {
        let a = circuit.run(&circuit.sample_params(&mut rng))?;
        let b = circuit.run(&circuit.sample_params(&mut rng))?;
        hist.record(a.fidelity(&b).expect("equal dims"));
    }
    Ok(hist.kl_vs_haar(1 << circuit.n_qubits))
}

/// Meyer-Wallach global entanglement: Q = (2/n) * sum_i (1 - Tr rho_i^2).
/// 0 on product states, 1 on maximally entangled states.
pub fn meyer_wallach(state: &StateVector) -> f64 {
    let n = state.n_qubits();
    let sum: f64 = (0..n)
        .map(|q| 1.0 - state.reduced_purity(q).expect("qubit in range"))
        .sum();
    2.0 / n as f64 * sum
}

/// Mean Meyer-Wallach Q over `n_samples` random parameter draws.
pub fn entanglement_capability(
    circuit: &CircuitSpec,
    n_samples: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    if !circuit.has_two_qubit_ops() {
        // single-qubit gates only: every output is a product state, Q = 0
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let state = circuit.run(&circuit.sample_params(&mut rng))?;
        sum += meyer_wallach(&state);
    }
    Ok(sum / n_samples as f64)
}

/// 2-D PCA of statevectors: real and imaginary parts are concatenated into
/// 2 * 2^n real coordinates, mean-centered, and projected onto the top-2
/// principal directions. Returns the points and the top-2 covariance
/// eigenvalues (sample covariance, divisor n-1).
pub fn pca_project(states: &[StateVector]) -> Result<(Vec<[f64; 2]>, [f64; 2]), MetricsError> {
    if states.len() < 3 {
        return Err(MetricsError::TooFewStates { need: 3, got: states.len() });
    }
    let dim = states[0].amplitudes().len();
    if states.iter().any(|s| s.amplitudes().len() != dim) {
        return Err(MetricsError::MixedDimensions);
    }
    let d = 2 * dim;
    let n = states.len();
    let rows: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(d);
            row.extend(s.amplitudes().iter().map(|a| a.re));
            row.extend(s.amplitudes().iter().map(|a| a.im));
            row
        })
        .collect();
    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in &rows {
        for i in 0..d {
            let xi = row[i] - mean[i];
            for j in i..d {
                cov[i][j] += xi * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (eigvals, eigvecs) = jacobi_eigh(&cov, 1e-12);
    // indices of the two largest eigenvalues
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let (i1, i2) = (order[0], order[1]);
    let axis = |idx: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|r| eigvecs[r][idx]).collect();
        // sign convention: largest-magnitude component positive
        let lead = v
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(1.0);
        if lead < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        v
    };
    let (v1, v2) = (axis(i1), axis(i2));
    let points = rows
        .iter()
        .map(|row| {
            let mut p = [0.0; 2];
            for i in 0..d {
                let x = row[i] - mean[i];
                p[0] += x * v1[i];
                p[1] += x * v2[i];
            }
            p
        })
        .collect();
    Ok((points, [eigvals[i1].max(0.0), eigvals[i2].max(0.0)]))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns). Deterministic sweep order.
pub(crate) fn jacobi_eigh(matrix: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < tol * 1e-3 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a[i][i]).collect();
    (eigvals, v)
}

/// Inverse-CDF sampler for the Haar fidelity distribution:
/// F = 1 - u^(1/(N-1)). Test hook for KL self-consistency.
pub fn haar_fidelity_sample<R: Rng>(rng: &mut R, dim: usize) -> f64 {
    let u: f64 = rng.gen();
    1.0 - u.powf(1.0 / (dim as f64 - 1.0))
}
