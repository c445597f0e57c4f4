//! Synthetic biometric templates, orthonormal scrambling and matching in the
//! scrambled domain.
//!
//! A [`ScramblingKey`] is a seeded random orthonormal matrix. Because it is an
//! isometry, cosine scores between templates scrambled under the same key are
//! exactly the scores between the original feature vectors, so enrolled
//! templates never need to be unscrambled to be matched.

mod enroll;
mod registry;
mod synthetic;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hash::{double_sha256, double_sha256_parts, Digest32};

pub use enroll::{verify, Credential, EnrollmentAuthority, EnrollmentRecord, PublicKey, Signature, Signer};
pub use registry::{Registry, RegistryParseError};
pub use synthetic::{enroll_fleet, member_rng, FleetMember, SyntheticFleet, UNLOCK_ATTEMPTS};

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.85;
/// Per-coordinate noise of a genuine probe.
pub const GENUINE_NOISE_SIGMA: f64 = 0.05;
/// Fixed-point scale used when templates are turned into bytes.
pub const QUANT_SCALE: f64 = 32767.0;

const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BiometricError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("templates were scrambled under different keys")]
    KeyMismatch,
    #[error("match threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("feature vector is not unit norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("feature vector must have at least one finite non-zero coordinate")]
    Degenerate,
    #[error("identity {0} is already enrolled")]
    DuplicateIdentity(BiometricId),
    #[error("probe rejected (score {score:.6})")]
    ProbeRejected { score: f64 },
}

/// Unit-norm real feature vector produced by a (simulated) biometric sensor.
#[derive(Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureVector(d={})", self.values.len())
    }
}

impl FeatureVector {
    /// Accepts `values` only if already unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self, BiometricError> {
        let norm = l2(&values);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(BiometricError::NotUnitNorm(norm));
        }
        Ok(Self { values })
    }

    pub fn normalized(values: Vec<f64>) -> Result<Self, BiometricError> {
        let norm = l2(&values);
        if !norm.is_finite() || norm == 0.0 {
            return Err(BiometricError::Degenerate);
        }
        Ok(Self { values: values.into_iter().map(|v| v / norm).collect() })
    }

    /// Independent random unit vector (an impostor relative to any other draw).
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            if let Ok(v) = Self::normalized(values) {
                return v;
            }
        }
    }

    /// Another reading of the same trait: this vector plus Gaussian noise of
    /// per-coordinate deviation `sigma`, renormalized.
    pub fn noisy_reading<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> Self {
        loop {
            let values: Vec<f64> = self
                .values
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(rng);
                    v + sigma * n
                })
                .collect();
            if let Ok(v) = Self::normalized(values) {
                return v;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Seeded orthonormal matrix. Same seed and dimension give the same matrix.
#[derive(Clone, PartialEq)]
pub struct ScramblingKey {
    seed: u64,
    key_id: Digest32,
    matrix: DMatrix<f64>,
}

impl fmt::Debug for ScramblingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScramblingKey")
            .field("seed", &self.seed)
            .field("key_id", &self.key_id)
            .field("dim", &self.dim())
            .finish()
    }
}

pub fn key_id_for(seed: u64, dim: usize) -> Digest32 {
    double_sha256_parts(&[b"bbc-scramble-key", &seed.to_be_bytes(), &(dim as u64).to_be_bytes()])
}

/// Gaussian matrix orthonormalized by QR, with column signs fixed so that
/// R has a positive diagonal (this makes the factorization unique).
pub fn generate_key(seed: u64, dim: usize) -> ScramblingKey {
    assert!(dim > 0, "scrambling key dimension must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut gaussian = DMatrix::<f64>::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            gaussian[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    let (mut q, r) = gaussian.qr().unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    ScramblingKey { seed, key_id: key_id_for(seed, dim), matrix: q }
}

impl ScramblingKey {
    /// The identity transform; handy as a baseline in tests.
    pub fn identity(dim: usize) -> Self {
        Self {
            seed: 0,
            key_id: double_sha256_parts(&[b"bbc-identity-key", &(dim as u64).to_be_bytes()]),
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn key_id(&self) -> Digest32 {
        self.key_id
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Row-major entries quantized to 16-bit fixed point, big-endian.
    pub fn quantized_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d * 2);
        for r in 0..d {
            for c in 0..d {
                out.extend_from_slice(&quantize(self.matrix[(r, c)]).to_be_bytes());
            }
        }
        out
    }
}

/// A feature vector after scrambling. This is the only template form that
/// leaves an enrollment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrambledTemplate {
    values: Vec<f64>,
    key_id: Digest32,
}

impl ScrambledTemplate {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn key_id(&self) -> Digest32 {
        self.key_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn quantized(&self) -> Vec<i16> {
        self.values.iter().map(|&v| quantize(v)).collect()
    }

    /// Big-endian 16-bit fixed-point encoding of the values.
    pub fn quantized_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|&v| quantize(v).to_be_bytes()).collect()
    }

    /// Rebuilds a template from its fixed-point form. Re-quantizing the result
    /// reproduces `quantized` exactly.
    pub fn from_quantized(quantized: &[i16], key_id: Digest32) -> Self {
        Self { values: quantized.iter().map(|&q| f64::from(q) / QUANT_SCALE).collect(), key_id }
    }
}

/// Round half away from zero into [-32767, 32767].
pub fn quantize(v: f64) -> i16 {
    (v * QUANT_SCALE).round().clamp(-QUANT_SCALE, QUANT_SCALE) as i16
}

pub fn scramble(v: &FeatureVector, key: &ScramblingKey) -> Result<ScrambledTemplate, BiometricError> {
    if v.dim() != key.dim() {
        return Err(BiometricError::DimensionMismatch { expected: key.dim(), found: v.dim() });
    }
    let out = key.matrix() * DVector::from_column_slice(v.values());
    Ok(ScrambledTemplate { values: out.as_slice().to_vec(), key_id: key.key_id() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub score: f64,
    pub accepted: bool,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let denom = l2(a) * l2(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

pub fn check_threshold(threshold: f64) -> Result<(), BiometricError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(BiometricError::InvalidThreshold(threshold))
    }
}

/// Cosine match of two templates scrambled under the same key.
pub fn match_encrypted(
    probe: &ScrambledTemplate,
    enrolled: &ScrambledTemplate,
    threshold: f64,
) -> Result<MatchOutcome, BiometricError> {
    check_threshold(threshold)?;
    if probe.key_id != enrolled.key_id {
        return Err(BiometricError::KeyMismatch);
    }
    if probe.dim() != enrolled.dim() {
        return Err(BiometricError::DimensionMismatch { expected: enrolled.dim(), found: probe.dim() });
    }
    let score = cosine(probe.values(), enrolled.values());
    Ok(MatchOutcome { score, accepted: score >= threshold })
}

/// Identifier of an enrolled person: the double SHA-256 of the key id
/// followed by the quantized scrambled template.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BiometricId(pub Digest32);

impl BiometricId {
    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn from_hex(s: &str) -> Result<Self, crate::hash::HexError> {
        Digest32::from_hex(s).map(BiometricId)
    }

    /// First 8 hex characters, for human-facing summaries.
    pub fn short(&self) -> String {
        self.to_hex()[..8].to_string()
    }
}

impl fmt::Display for BiometricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for BiometricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BiometricId({})", self.short())
    }
}

pub fn derive_biometric_id(t: &ScrambledTemplate) -> BiometricId {
    let mut bytes = Vec::with_capacity(32 + t.dim() * 2);
    bytes.extend_from_slice(t.key_id.as_bytes());
    bytes.extend_from_slice(&t.quantized_bytes());
    BiometricId(double_sha256(&bytes))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn key_is_orthonormal() {
        for seed in [0u64, 1, 42, 9_999] {
            let k = generate_key(seed, DEFAULT_DIM);
            let gram = k.matrix().transpose() * k.matrix();
            let identity = DMatrix::<f64>::identity(DEFAULT_DIM, DEFAULT_DIM);
            let max_err = (gram - identity).abs().max();
            assert!(max_err <= 1e-8, "seed {seed}: {max_err}");
        }
    }

    #[test]
    fn key_is_reproducible_and_seed_sensitive() {
        let a = generate_key(7, 32);
        let b = generate_key(7, 32);
        assert_eq!(a.quantized_bytes(), b.quantized_bytes());
        assert_eq!(a.matrix(), b.matrix());
        let c = generate_key(8, 32);
        assert_ne!(a.matrix(), c.matrix());
        assert_ne!(a.key_id(), c.key_id());
    }

    #[test]
    fn identity_key_is_a_no_op() {
        let v = FeatureVector::random(16, &mut rng(1));
        let t = scramble(&v, &ScramblingKey::identity(16)).unwrap();
        assert_eq!(t.values(), v.values());
    }

    #[test]
    fn scramble_preserves_norm_and_inner_products() {
        let key = generate_key(3, DEFAULT_DIM);
        let mut r = rng(2);
        for _ in 0..50 {
            let a = FeatureVector::random(DEFAULT_DIM, &mut r);
            let b = FeatureVector::random(DEFAULT_DIM, &mut r);
            let (sa, sb) = (scramble(&a, &key).unwrap(), scramble(&b, &key).unwrap());
            assert!((l2(sa.values()) - 1.0).abs() <= 1e-9);
            let plain: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
            let scrambled: f64 = sa.values().iter().zip(sb.values()).map(|(x, y)| x * y).sum();
            assert!((plain - scrambled).abs() <= 1e-9);
        }
    }

    #[test]
    fn scramble_rejects_dimension_mismatch() {
        let v = FeatureVector::random(8, &mut rng(0));
        assert_eq!(
            scramble(&v, &generate_key(0, 16)),
            Err(BiometricError::DimensionMismatch { expected: 16, found: 8 })
        );
    }

    #[test]
    fn match_self_and_orthogonal() {
        let key = generate_key(5, 4);
        let e0 = FeatureVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let e1 = FeatureVector::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let (s0, s1) = (scramble(&e0, &key).unwrap(), scramble(&e1, &key).unwrap());
        let same = match_encrypted(&s0, &s0, 0.85).unwrap();
        assert!((same.score - 1.0).abs() < 1e-12 && same.accepted);
        let orth = match_encrypted(&s0, &s1, 0.85).unwrap();
        assert!(orth.score.abs() < 1e-12 && !orth.accepted);
    }

    #[test]
    fn match_rejects_cross_key_and_bad_threshold() {
        let v = FeatureVector::random(8, &mut rng(4));
        let a = scramble(&v, &generate_key(1, 8)).unwrap();
        let b = scramble(&v, &generate_key(2, 8)).unwrap();
        assert_eq!(match_encrypted(&a, &b, 0.85), Err(BiometricError::KeyMismatch));
        assert_eq!(match_encrypted(&a, &a, 1.0), Err(BiometricError::InvalidThreshold(1.0)));
        assert_eq!(match_encrypted(&a, &a, 0.0), Err(BiometricError::InvalidThreshold(0.0)));
    }

    #[test]
    fn near_duplicates_decide_like_plain_domain() {
        let key = generate_key(11, DEFAULT_DIM);
        let mut r = rng(12);
        for i in 0..200 {
            let a = FeatureVector::random(DEFAULT_DIM, &mut r);
            let sigma = 0.01 + 0.002 * f64::from(i % 50);
            let b = a.noisy_reading(sigma, &mut r);
            let plain = cosine(a.values(), b.values()) >= 0.85;
            let sa = scramble(&a, &key).unwrap();
            let sb = scramble(&b, &key).unwrap();
            assert_eq!(match_encrypted(&sb, &sa, 0.85).unwrap().accepted, plain);
        }
    }

    #[test]
    fn quantization_rounds_half_away_from_zero() {
        assert_eq!(quantize(0.5 / QUANT_SCALE), 1);
        assert_eq!(quantize(-0.5 / QUANT_SCALE), -1);
        assert_eq!(quantize(1.0), 32767);
        assert_eq!(quantize(-1.0), -32767);
        assert_eq!(quantize(2.0), 32767);
    }

    #[test]
    fn id_is_stable_and_sensitive_to_one_step() {
        let key = generate_key(9, 32);
        let t = scramble(&FeatureVector::random(32, &mut rng(9)), &key).unwrap();
        assert_eq!(derive_biometric_id(&t), derive_biometric_id(&t.clone()));

        let mut r = rng(10);
        for _ in 0..100 {
            let idx = r.random_range(0..32);
            let mut bumped = t.clone();
            bumped.values[idx] += 1.0 / QUANT_SCALE;
            assert_ne!(derive_biometric_id(&t), derive_biometric_id(&bumped));

            // a shift far below half a step moves no coordinate across a rounding boundary
            let mut jitter = t.clone();
            let q = t.quantized();
            for (v, qi) in jitter.values.iter_mut().zip(&q) {
                *v = f64::from(*qi) / QUANT_SCALE + r.random_range(-0.4..0.4) / QUANT_SCALE;
            }
            let snapped = ScrambledTemplate::from_quantized(&q, t.key_id());
            assert_eq!(derive_biometric_id(&jitter), derive_biometric_id(&snapped));
            assert_eq!(derive_biometric_id(&snapped), derive_biometric_id(&t));
        }
    }

    #[test]
    fn from_quantized_round_trips() {
        let key = generate_key(13, DEFAULT_DIM);
        let t = scramble(&FeatureVector::random(DEFAULT_DIM, &mut rng(13)), &key).unwrap();
        let back = ScrambledTemplate::from_quantized(&t.quantized(), t.key_id());
        assert_eq!(back.quantized(), t.quantized());
        assert_eq!(derive_biometric_id(&back), derive_biometric_id(&t));
    }

    #[test]
    fn feature_vector_rejects_non_unit() {
        assert!(matches!(FeatureVector::new(vec![1.0, 1.0]), Err(BiometricError::NotUnitNorm(_))));
        assert_eq!(FeatureVector::normalized(vec![0.0, 0.0]), Err(BiometricError::Degenerate));
    }
}
