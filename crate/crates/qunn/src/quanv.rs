//! Quanvolutional feature extraction: patch decomposition, angle encoding,
//! ansatz execution, per-qubit <Z> channels, input-gradient Jacobians via the
//! parameter-shift rule, and a persistent feature cache.

use crate::circuits::{CircuitError, CircuitSpec};
use crate::qsim::{GateKind, StateVector};
use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuanvError {
    #[error("image {h}x{w} incompatible with kernel {kernel} stride {stride}")]
    IncompatibleDims { h: usize, w: usize, kernel: usize, stride: usize },
    #[error("pixel value {0} outside [0, 1]")]
    PixelOutOfRange(f64),
    #[error("kernel^2 = {kernel_sq} does not match ansatz qubit count {n_qubits}")]
    KernelQubitMismatch { kernel_sq: usize, n_qubits: usize },
    #[error("ansatz parameter vector length {got}, circuit expects {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] crate::qsim::QsimError),
    #[error("feature cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature cache: bad magic")]
    BadMagic,
    #[error("feature cache: unsupported format version {0}")]
    BadVersion(u16),
    #[error("feature cache: digest mismatch (cache miss)")]
    DigestMismatch,
    #[error("feature cache: truncated file")]
    Truncated,
}

/// A grayscale image with pixels normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, QuanvError> {
        assert_eq!(pixels.len(), height * width);
        for &p in &pixels {
            if !(0.0..=1.0).contains(&p) {
                return Err(QuanvError::PixelOutOfRange(p));
            }
        }
        Ok(Self { height, width, pixels })
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

pub const DEFAULT_ENCODE_SCALE: f64 = PI;

/// Fixed quanvolutional filter configuration. `ansatz_params` are drawn once
/// at model creation and never trained.
#[derive(Debug, Clone)]
pub struct QuanvConfig {
    pub kernel: usize,
    pub stride: usize,
    pub ansatz: CircuitSpec,
    pub ansatz_params: Vec<f64>,
    pub encode_scale: f64,
    pub layers: usize,
}

impl QuanvConfig {
    pub fn new(ansatz: CircuitSpec, ansatz_params: Vec<f64>) -> Result<Self, QuanvError> {
        let cfg = Self {
            kernel: 2,
            stride: 2,
            ansatz,
            ansatz_params,
            encode_scale: DEFAULT_ENCODE_SCALE,
            layers: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), QuanvError> {
        if self.kernel * self.kernel != self.ansatz.n_qubits {
            return Err(QuanvError::KernelQubitMismatch {
                kernel_sq: self.kernel * self.kernel,
                n_qubits: self.ansatz.n_qubits,
            });
        }
        if self.ansatz_params.len() != self.ansatz.n_params {
            return Err(QuanvError::ParamLength {
                got: self.ansatz_params.len(),
                expected: self.ansatz.n_params,
            });
        }
        Ok(())
    }

    /// Digest over everything that determines the produced features.
    pub fn digest(&self, dataset_id: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"qunn-features-v1\0");
        h.update(dataset_id.as_bytes());
        h.update([0u8]);
        h.update(self.ansatz.to_document().as_bytes());
        h.update((self.kernel as u64).to_be_bytes());
        h.update((self.stride as u64).to_be_bytes());
        h.update(self.encode_scale.to_be_bytes());
        h.update((self.layers as u64).to_be_bytes());
        for p in &self.ansatz_params {
            h.update(p.to_be_bytes());
        }
        h.finalize().into()
    }
}

/// H x W x C tensor of real feature values, row-major (h, w, c).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(h: usize, w: usize, channels: usize) -> Self {
        Self { h, w, channels, values: vec![0.0; h * w * channels] }
    }

    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.values[(r * self.w + c) * self.channels + ch]
    }

    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        self.values[(r * self.w + c) * self.channels + ch] = v;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Non-overlapping patch grid dimensions for an image.
pub fn patch_grid(
    image: &Image,
    kernel: usize,
    stride: usize,
) -> Result<(usize, usize), QuanvError> {
    let bad = || QuanvError::IncompatibleDims {
        h: image.height,
        w: image.width,
        kernel,
        stride,
    };
    if kernel == 0 || stride == 0 || image.height < kernel || image.width < kernel {
        return Err(bad());
    }
    if (image.height - kernel) % stride != 0 || (image.width - kernel) % stride != 0 {
        return Err(bad());
    }
    Ok(((image.height - kernel) / stride + 1, (image.width - kernel) / stride + 1))
}

/// Patch (r, c) flattened in row-major (row, col) order.
pub fn extract_patch(image: &Image, kernel: usize, stride: usize, r: usize, c: usize) -> Vec<f64> {
    let mut patch = Vec::with_capacity(kernel * kernel);
    for dr in 0..kernel {
        for dc in 0..kernel {
            patch.push(image.pixel(r * stride + dr, c * stride + dc));
        }
    }
    patch
}

/// All patches, row-major over the grid.
pub fn extract_patches(
    image: &Image,
    kernel: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>, QuanvError> {
    let (gh, gw) = patch_grid(image, kernel, stride)?;
    let mut patches = Vec::with_capacity(gh * gw);
    for r in 0..gh {
        for c in 0..gw {
            patches.push(extract_patch(image, kernel, stride, r, c));
        }
    }
    Ok(patches)
}

/// Angle-encode a patch: qubit k gets RY(scale * patch[k]) applied to |0>.
pub fn encode_patch(patch: &[f64], scale: f64) -> Result<StateVector, QuanvError> {
    for &p in patch {
        if !(0.0..=1.0).contains(&p) {
            return Err(QuanvError::PixelOutOfRange(p));
        }
    }
    let mut state = StateVector::zero_state(patch.len())?;
    for (q, &p) in patch.iter().enumerate() {
        state.apply_gate(GateKind::RY(scale * p), q, None)?;
    }
    Ok(state)
}

fn run_patch_angles(cfg: &QuanvConfig, angles: &[f64]) -> Result<Vec<f64>, QuanvError> {
    let mut state = StateVector::zero_state(cfg.ansatz.n_qubits)?;
    for (q, &a) in angles.iter().enumerate() {
        state.apply_gate(GateKind::RY(a), q, None)?;
    }
    for _ in 0..cfg.layers {
        cfg.ansatz.run_on(&mut state, &cfg.ansatz_params)?;
    }
    (0..cfg.ansatz.n_qubits)
        .map(|q| state.expectation_z(q).map_err(|e| CircuitError::from(e).into()))
        .collect()
}

/// Per-qubit <Z> channels of one encoded and transformed patch.
pub fn quanv_patch(patch: &[f64], cfg: &QuanvConfig) -> Result<Vec<f64>, QuanvError> {
    for &p in patch {
        if !(0.0..=1.0).contains(&p) {
            return Err(QuanvError::PixelOutOfRange(p));
        }
    }
    let angles: Vec<f64> = patch.iter().map(|p| cfg.encode_scale * p).collect();
    run_patch_angles(cfg, &angles)
}

/// The quanvolutional feature map: F[r, c, k] = <Z_k> of the ansatz applied
/// to the encoded patch (r, c).
pub fn quanv_features(image: &Image, cfg: &QuanvConfig) -> Result<FeatureTensor, QuanvError> {
    cfg.validate()?;
    let (gh, gw) = patch_grid(image, cfg.kernel, cfg.stride)?;
    let channels = cfg.ansatz.n_qubits;
    let mut out = FeatureTensor::zeros(gh, gw, channels);
    for r in 0..gh {
        for c in 0..gw {
            let patch = extract_patch(image, cfg.kernel, cfg.stride, r, c);
            let z = quanv_patch(&patch, cfg)?;
            for (k, v) in z.into_iter().enumerate() {
                out.set(r, c, k, v);
            }
        }
    }
    Ok(out)
}

/// d F_k / d pixel_p via the parameter-shift rule: the encoding angle of
/// pixel p is shifted by +-pi/2, exact for RY generators. Entry (k, p);
/// 8 circuit evaluations per patch.
pub fn quanv_patch_jacobian(patch: &[f64], cfg: &QuanvConfig) -> Result<Vec<Vec<f64>>, QuanvError> {
    let n = patch.len();
    let base: Vec<f64> = patch.iter().map(|p| cfg.encode_scale * p).collect();
    let mut jac = vec![vec![0.0; n]; n];
    for p in 0..n {
        let mut plus = base.clone();
        plus[p] += FRAC_PI_2;
        let mut minus = base.clone();
        minus[p] -= FRAC_PI_2;
        let zp = run_patch_angles(cfg, &plus)?;
        let zm = run_patch_angles(cfg, &minus)?;
        for k in 0..n {
            jac[k][p] = cfg.encode_scale * 0.5 * (zp[k] - zm[k]);
        }
    }
    Ok(jac)
}

const CACHE_MAGIC: &[u8; 4] = b"QNVF";
const CACHE_VERSION: u16 = 1;

/// Persist feature tensors. Layout: magic "QNVF", version u16 BE, shape
/// (n, h, w, c) as BE u32, 32-byte config digest, then f64 LE values in
/// row-major (n, h, w, c) order.
pub fn cache_features(
    path: &Path,
    digest: &[u8; 32],
    tensors: &[FeatureTensor],
) -> Result<(), QuanvError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_u16::<BigEndian>(CACHE_VERSION)?;
    let (h, w, c) = tensors
        .first()
        .map(|t| (t.h, t.w, t.channels))
        .unwrap_or((0, 0, 0));
    f.write_u32::<BigEndian>(tensors.len() as u32)?;
    f.write_u32::<BigEndian>(h as u32)?;
    f.write_u32::<BigEndian>(w as u32)?;
    f.write_u32::<BigEndian>(c as u32)?;
    f.write_all(digest)?;
    for t in tensors {
        for &v in &t.values {
            f.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Load cached features; a digest mismatch is reported as
/// [`QuanvError::DigestMismatch`] so callers can recompute.
pub fn load_features(path: &Path, digest: &[u8; 32]) -> Result<Vec<FeatureTensor>, QuanvError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(|_| QuanvError::Truncated)?;
    if &magic != CACHE_MAGIC {
        return Err(QuanvError::BadMagic);
    }
    let version = f.read_u16::<BigEndian>().map_err(|_| QuanvError::Truncated)?;
    if version != CACHE_VERSION {
        return Err(QuanvError::BadVersion(version));
    }
    let n = f.read_u32::<BigEndian>().map_err(|_| QuanvError::Truncated)? as usize;
    let h = f.read_u32::<BigEndian>().map_err(|_| QuanvError::Truncated)? as usize;
    let w = f.read_u32::<BigEndian>().map_err(|_| QuanvError::Truncated)? as usize;
    let c = f.read_u32::<BigEndian>().map_err(|_| QuanvError::Truncated)? as usize;
    let mut stored = [0u8; 32];
    f.read_exact(&mut stored).map_err(|_| QuanvError::Truncated)?;
    if &stored != digest {
        return Err(QuanvError::DigestMismatch);
    }
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let mut t = FeatureTensor::zeros(h, w, c);
        for v in &mut t.values {
            *v = f.read_f64::<LittleEndian>().map_err(|_| QuanvError::Truncated)?;
        }
        tensors.push(t);
    }
    Ok(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::builtin_ansatz;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_cfg() -> QuanvConfig {
        let ansatz =
            CircuitSpec::parse(r#"{"label":"identity","n_qubits":4,"ops":[]}"#).unwrap();
        QuanvConfig::new(ansatz, vec![]).unwrap()
    }

    fn random_cfg(id: u32, seed: u64) -> QuanvConfig {
        let ansatz = builtin_ansatz(id).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ansatz.sample_params(&mut rng);
        QuanvConfig::new(ansatz, params).unwrap()
    }

    fn const_image(h: usize, w: usize, v: f64) -> Image {
        Image::new(h, w, vec![v; h * w]).unwrap()
    }

    #[test]
    fn patch_counts() {
        let img = const_image(28, 28, 0.3);
        let patches = extract_patches(&img, 2, 2).unwrap();
        assert_eq!(patches.len(), 196);
        assert_eq!(patch_grid(&img, 2, 2).unwrap(), (14, 14));

        let tiny = Image::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let p = extract_patches(&tiny, 2, 2).unwrap();
        assert_eq!(p, vec![vec![0.1, 0.2, 0.3, 0.4]]);

        for patch in extract_patches(&img, 2, 2).unwrap() {
            assert_eq!(patch, vec![0.3; 4]);
        }

        assert!(extract_patches(&const_image(27, 28, 0.0), 2, 2).is_err());
    }

    #[test]
    fn patch_flattening_order() {
        #[rustfmt::skip]
        let img = Image::new(4, 4, vec![
            0.0, 0.1, 0.2, 0.3,
            0.4, 0.5, 0.6, 0.7,
            0.8, 0.9, 1.0, 0.0,
            0.1, 0.2, 0.3, 0.4,
        ]).unwrap();
        let patches = extract_patches(&img, 2, 2).unwrap();
        assert_eq!(patches[0], vec![0.0, 0.1, 0.4, 0.5]);
        assert_eq!(patches[1], vec![0.2, 0.3, 0.6, 0.7]);
        assert_eq!(patches[2], vec![0.8, 0.9, 0.1, 0.2]);
    }

    #[test]
    fn encode_patch_cases() {
        let s = encode_patch(&[0.0; 4], PI).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);

        let s = encode_patch(&[1.0, 0.0, 0.0, 0.0], PI).unwrap();
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), -1.0, epsilon = 1e-12);
        for q in 1..4 {
            assert_abs_diff_eq!(s.expectation_z(q).unwrap(), 1.0, epsilon = 1e-12);
        }

        let s = encode_patch(&[0.5; 4], PI).unwrap();
        for q in 0..4 {
            assert_abs_diff_eq!(s.expectation_z(q).unwrap(), 0.0, epsilon = 1e-12);
        }

        assert!(encode_patch(&[1.2, 0.0, 0.0, 0.0], PI).is_err());
    }

    #[test]
    fn quanv_features_shape_and_range() {
        let img = const_image(28, 28, 0.0);
        let f = quanv_features(&img, &identity_cfg()).unwrap();
        assert_eq!((f.h, f.w, f.channels), (14, 14, 4));
        for &v in &f.values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }

        let cfg = random_cfg(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = Image::new(
            28,
            28,
            (0..784).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect(),
        )
        .unwrap();
        let f = quanv_features(&img, &cfg).unwrap();
        assert_eq!(f.len(), 14 * 14 * 4);
        for &v in &f.values {
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn quanv_features_deterministic() {
        let cfg = random_cfg(3, 1);
        let img = const_image(28, 28, 0.7);
        let a = quanv_features(&img, &cfg).unwrap();
        let b = quanv_features(&img, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn locality_single_pixel_perturbation() {
        let cfg = random_cfg(6, 5);
        let img = const_image(28, 28, 0.4);
        let base = quanv_features(&img, &cfg).unwrap();
        let mut pixels = img.pixels.clone();
        pixels[3 * 28 + 5] = 0.9; // patch (1, 2)
        let perturbed =
            quanv_features(&Image::new(28, 28, pixels).unwrap(), &cfg).unwrap();
        for r in 0..14 {
            for c in 0..14 {
                for k in 0..4 {
                    let same = base.get(r, c, k) == perturbed.get(r, c, k);
                    if (r, c) == (1, 2) {
                        continue; // the affected cell may change
                    }
                    assert!(same, "cell ({r},{c},{k}) changed");
                }
            }
        }
        assert!((0..4).any(|k| base.get(1, 2, k) != perturbed.get(1, 2, k)));
    }

    #[test]
    fn jacobian_identity_ansatz_diagonal() {
        let cfg = identity_cfg();
        let patch = [0.3, 0.8, 0.1, 0.6];
        let jac = quanv_patch_jacobian(&patch, &cfg).unwrap();
        for k in 0..4 {
            for p in 0..4 {
                let expect = if k == p {
                    -cfg.encode_scale * (cfg.encode_scale * patch[p]).sin()
                } else {
                    0.0
                };
                assert_abs_diff_eq!(jac[k][p], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &id in &[1, 3, 6, 9, 14] {
            let cfg = random_cfg(id, rand::Rng::gen(&mut rng));
            let patch: Vec<f64> =
                (0..4).map(|_| rand::Rng::gen_range(&mut rng, 0.05..0.95)).collect();
            let jac = quanv_patch_jacobian(&patch, &cfg).unwrap();
            let h = 1e-5;
            for p in 0..4 {
                let mut up = patch.clone();
                up[p] += h;
                let mut dn = patch.clone();
                dn[p] -= h;
                let fu = quanv_patch(&up, &cfg).unwrap();
                let fd = quanv_patch(&dn, &cfg).unwrap();
                for k in 0..4 {
                    let fdiff = (fu[k] - fd[k]) / (2.0 * h);
                    assert!(
                        (jac[k][p] - fdiff).abs() < 1e-6,
                        "ansatz {id} entry ({k},{p}): {} vs {}",
                        jac[k][p],
                        fdiff
                    );
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.qnvf");
        let cfg = random_cfg(3, 9);
        let digest = cfg.digest("unit-test");
        let img = const_image(28, 28, 0.25);
        let tensors = vec![
            quanv_features(&img, &cfg).unwrap(),
            quanv_features(&const_image(28, 28, 0.75), &cfg).unwrap(),
        ];
        cache_features(&path, &digest, &tensors).unwrap();
        let loaded = load_features(&path, &digest).unwrap();
        assert_eq!(loaded, tensors);

        // changed encode_scale -> different digest -> cache miss
        let mut cfg2 = cfg.clone();
        cfg2.encode_scale = 1.0;
        let other = cfg2.digest("unit-test");
        assert_ne!(other, digest);
        assert!(matches!(load_features(&path, &other), Err(QuanvError::DigestMismatch)));

        // corrupt magic -> load error
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_features(&path, &digest), Err(QuanvError::BadMagic)));
    }
}
