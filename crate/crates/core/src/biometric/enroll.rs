//! Enrollment authority, biometric-bound signing credentials and Ed25519
//! signatures.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};

use super::{
    check_threshold, derive_biometric_id, match_encrypted, scramble, BiometricError, BiometricId, FeatureVector,
    Registry, ScrambledTemplate, ScramblingKey,
};
use crate::hash::{decode_hex, double_sha256_parts, Digest32, HexError};

const ENROLL_DOMAIN: &[u8] = b"bbc-enroll";

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let bytes = decode_hex(s)?;
        let len = bytes.len();
        bytes.try_into().map(PublicKey).map_err(|_| HexError::Length { expected: 32, found: len })
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    /// All-zero placeholder; never verifies.
    pub const EMPTY: Signature = Signature([0u8; 64]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let bytes = decode_hex(s)?;
        let len = bytes.len();
        bytes.try_into().map(Signature).map_err(|_| HexError::Length { expected: 64, found: len })
    }
}

impl Default for Signature {
    fn default() -> Self {
        Self::EMPTY
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &self.to_hex()[..16])
    }
}

/// Valid signatures already checked on this thread. Only successes are
/// stored, keyed by a digest of key, signature and message.
const VERIFIED_CACHE_LIMIT: usize = 1 << 18;

thread_local! {
    static VERIFIED: RefCell<HashSet<Digest32>> = RefCell::new(HashSet::new());
}

/// True exactly for authentic (key, bytes, signature) triples.
pub fn verify(public_key: &PublicKey, bytes: &[u8], signature: &Signature) -> bool {
    let memo = double_sha256_parts(&[b"bbc-verified", &public_key.0, &signature.0, bytes]);
    if VERIFIED.with(|v| v.borrow().contains(&memo)) {
        return true;
    }
    let ok = verify_uncached(public_key, bytes, signature);
    if ok {
        VERIFIED.with(|v| {
            let mut v = v.borrow_mut();
            if v.len() >= VERIFIED_CACHE_LIMIT {
                v.clear();
            }
            v.insert(memo);
        });
    }
    ok
}

pub(crate) fn verify_uncached(public_key: &PublicKey, bytes: &[u8], signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify_strict(bytes, &sig).is_ok()
}

/// Public enrollment entry binding a biometric identity to a verification key.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentRecord {
    pub biometric_id: BiometricId,
    pub template: ScrambledTemplate,
    pub public_key: PublicKey,
    pub authority_signature: Signature,
}

impl EnrollmentRecord {
    pub fn binding_bytes(biometric_id: &BiometricId, public_key: &PublicKey) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENROLL_DOMAIN.len() + 64);
        out.extend_from_slice(ENROLL_DOMAIN);
        out.extend_from_slice(biometric_id.as_bytes());
        out.extend_from_slice(&public_key.0);
        out
    }

    /// Checks the authority binding and that the id matches the template.
    pub fn verify(&self, authority: &PublicKey) -> bool {
        derive_biometric_id(&self.template) == self.biometric_id
            && verify(authority, &Self::binding_bytes(&self.biometric_id, &self.public_key), &self.authority_signature)
    }
}

/// Locked signing credential held by an enrolled device. Signing requires a
/// live biometric probe that matches the enrolled template.
#[derive(Clone)]
pub struct Credential {
    biometric_id: BiometricId,
    template: ScrambledTemplate,
    signing_key: SigningKey,
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credential").field("biometric_id", &self.biometric_id).finish_non_exhaustive()
    }
}

impl Credential {
    pub fn biometric_id(&self) -> BiometricId {
        self.biometric_id
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing_key.verifying_key().to_bytes())
    }

    /// Matches `probe` against the enrolled template in the scrambled domain
    /// and releases a signer on success.
    pub fn unlock(&self, probe: &ScrambledTemplate, threshold: f64) -> Result<Signer, BiometricError> {
        let outcome = match_encrypted(probe, &self.template, threshold)?;
        if !outcome.accepted {
            return Err(BiometricError::ProbeRejected { score: outcome.score });
        }
        Ok(Signer { biometric_id: self.biometric_id, signing_key: self.signing_key.clone() })
    }
}

/// Unlocked signing handle bound to one biometric identity.
#[derive(Clone)]
pub struct Signer {
    biometric_id: BiometricId,
    signing_key: SigningKey,
}

impl fmt::Debug for Signer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Signer").field("biometric_id", &self.biometric_id).finish_non_exhaustive()
    }
}

impl PartialEq for Signer {
    fn eq(&self, other: &Self) -> bool {
        self.biometric_id == other.biometric_id && self.public_key() == other.public_key()
    }
}

impl Signer {
    pub fn biometric_id(&self) -> BiometricId {
        self.biometric_id
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing_key.verifying_key().to_bytes())
    }

    pub fn sign(&self, bytes: &[u8]) -> Signature {
        Signature(self.signing_key.sign(bytes).to_bytes())
    }
}

/// In-process stand-in for a biometrics-as-a-service provider: one keypair
/// and a single-writer registry.
pub struct EnrollmentAuthority {
    signing_key: SigningKey,
    registry: Registry,
}

impl fmt::Debug for EnrollmentAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnrollmentAuthority")
            .field("public_key", &self.public_key())
            .field("enrolled", &self.registry.len())
            .finish()
    }
}

impl EnrollmentAuthority {
    /// `fleet_seed` and `dim` are recorded in the registry header.
    pub fn new(key_seed: [u8; 32], fleet_seed: u64, dim: usize) -> Self {
        let signing_key = SigningKey::from_bytes(&key_seed);
        let public = PublicKey(signing_key.verifying_key().to_bytes());
        Self { signing_key, registry: Registry::new(public, fleet_seed, dim) }
    }

    pub fn public_key(&self) -> PublicKey {
        self.registry.authority()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn into_registry(self) -> Registry {
        self.registry
    }

    /// Scrambles `v`, derives its identity, and binds a fresh keypair
    /// (from `device_key_seed`) to it. The raw vector is consumed.
    pub fn enroll(
        &mut self,
        v: FeatureVector,
        key: &ScramblingKey,
        device_key_seed: [u8; 32],
    ) -> Result<(EnrollmentRecord, Credential), BiometricError> {
        if key.dim() != self.registry.dim() {
            return Err(BiometricError::DimensionMismatch { expected: self.registry.dim(), found: key.dim() });
        }
        let template = scramble(&v, key)?;
        let biometric_id = derive_biometric_id(&template);
        if self.registry.contains(&biometric_id) {
            return Err(BiometricError::DuplicateIdentity(biometric_id));
        }
        let signing_key = SigningKey::from_bytes(&device_key_seed);
        let public_key = PublicKey(signing_key.verifying_key().to_bytes());
        let authority_signature =
            Signature(self.signing_key.sign(&EnrollmentRecord::binding_bytes(&biometric_id, &public_key)).to_bytes());
        let record = EnrollmentRecord { biometric_id, template: template.clone(), public_key, authority_signature };
        self.registry.insert(record.clone())?;
        Ok((record, Credential { biometric_id, template, signing_key }))
    }
}

/// Unlocks `credential` with a genuine reading of `trait_vector`, retrying
/// with fresh readings up to `attempts` times.
pub(crate) fn unlock_with_readings<R: rand::Rng + ?Sized>(
    credential: &Credential,
    trait_vector: &FeatureVector,
    key: &ScramblingKey,
    threshold: f64,
    attempts: usize,
    rng: &mut R,
) -> Result<Signer, BiometricError> {
    check_threshold(threshold)?;
    let mut last = BiometricError::ProbeRejected { score: 0.0 };
    for _ in 0..attempts {
        let probe = scramble(&trait_vector.noisy_reading(super::GENUINE_NOISE_SIGMA, rng), key)?;
        match credential.unlock(&probe, threshold) {
            Ok(signer) => return Ok(signer),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biometric::generate_key;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (EnrollmentAuthority, ScramblingKey, ChaCha20Rng) {
        (EnrollmentAuthority::new([7u8; 32], 1, 32), generate_key(1, 32), ChaCha20Rng::seed_from_u64(1))
    }

    #[test]
    fn enroll_binds_identity_and_key() {
        let (mut auth, key, mut rng) = setup();
        let v = FeatureVector::random(32, &mut rng);
        let (record, cred) = auth.enroll(v, &key, rng.random()).unwrap();
        assert!(record.verify(&auth.public_key()));
        assert_eq!(record.public_key, cred.public_key());
        assert_eq!(auth.registry().len(), 1);
    }

    #[test]
    fn cached_verify_agrees_with_direct_check() {
        let signer_key = SigningKey::from_bytes(&[3u8; 32]);
        let pk = PublicKey(signer_key.verifying_key().to_bytes());
        let sig = Signature(signer_key.sign(b"payload").to_bytes());
        for _ in 0..2 {
            assert!(verify(&pk, b"payload", &sig));
            assert!(verify_uncached(&pk, b"payload", &sig));
        }
        for i in 0..64 {
            let mut bad = sig;
            bad.0[i] ^= 0x01;
            assert_eq!(verify(&pk, b"payload", &bad), verify_uncached(&pk, b"payload", &bad));
            assert!(!verify(&pk, b"payload", &bad));
        }
        assert!(!verify(&pk, b"payloae", &sig));
        let other = PublicKey(SigningKey::from_bytes(&[4u8; 32]).verifying_key().to_bytes());
        assert!(!verify(&other, b"payload", &sig));
    }

    #[test]
    fn duplicate_identity_is_rejected() {
        let (mut auth, key, mut rng) = setup();
        let v = FeatureVector::random(32, &mut rng);
        auth.enroll(v.clone(), &key, [1u8; 32]).unwrap();
        let err = auth.enroll(v, &key, [2u8; 32]).unwrap_err();
        assert!(matches!(err, BiometricError::DuplicateIdentity(_)));
        assert_eq!(auth.registry().len(), 1);
    }

    #[test]
    fn genuine_probe_unlocks_impostor_does_not() {
        let (mut auth, key, mut rng) = setup();
        let v = FeatureVector::random(32, &mut rng);
        let (_, cred) = auth.enroll(v.clone(), &key, [3u8; 32]).unwrap();
        let genuine = scramble(&v.noisy_reading(0.01, &mut rng), &key).unwrap();
        assert!(cred.unlock(&genuine, 0.85).is_ok());
        let impostor = scramble(&FeatureVector::random(32, &mut rng), &key).unwrap();
        assert!(matches!(cred.unlock(&impostor, 0.85), Err(BiometricError::ProbeRejected { .. })));
        let signer = unlock_with_readings(&cred, &v, &key, 0.85, 8, &mut rng).unwrap();
        assert_eq!(signer.public_key(), cred.public_key());
    }

    #[test]
    fn signatures_verify_only_when_authentic() {
        let (mut auth, key, mut rng) = setup();
        let v = FeatureVector::random(32, &mut rng);
        let (_, cred) = auth.enroll(v.clone(), &key, [4u8; 32]).unwrap();
        let signer = cred.unlock(&scramble(&v, &key).unwrap(), 0.85).unwrap();
        let msg = b"header bytes".to_vec();
        let sig = signer.sign(&msg);
        assert!(verify(&signer.public_key(), &msg, &sig));
        assert!(!verify(&auth.public_key(), &msg, &sig));
        for _ in 0..200 {
            let mut bad = msg.clone();
            let i = rng.random_range(0..bad.len());
            bad[i] ^= 1 << rng.random_range(0..8);
            assert!(!verify(&signer.public_key(), &bad, &sig));
        }
        assert!(!verify(&signer.public_key(), &msg, &Signature::EMPTY));
    }
}
