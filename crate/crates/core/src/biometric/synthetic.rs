//! Seeded synthetic fleets: every member gets a random trait vector, is
//! enrolled with the fleet authority, and can present fresh genuine readings.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::enroll::unlock_with_readings;
use super::{
    generate_key, BiometricError, Credential, EnrollmentAuthority, FeatureVector, Registry, ScramblingKey, Signer,
};
use crate::hash::double_sha256_parts;

/// Fresh readings a driver may present before the device gives up.
pub const UNLOCK_ATTEMPTS: usize = 16;

pub struct FleetMember {
    credential: Credential,
    trait_vector: FeatureVector,
}

impl fmt::Debug for FleetMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FleetMember").field("credential", &self.credential).finish_non_exhaustive()
    }
}

impl FleetMember {
    pub fn credential(&self) -> &Credential {
        &self.credential
    }

    /// Presents genuine readings to the device until one matches.
    pub fn present<R: Rng + ?Sized>(
        &self,
        key: &ScramblingKey,
        threshold: f64,
        rng: &mut R,
    ) -> Result<Signer, BiometricError> {
        unlock_with_readings(&self.credential, &self.trait_vector, key, threshold, UNLOCK_ATTEMPTS, rng)
    }
}

#[derive(Debug)]
pub struct SyntheticFleet {
    pub key: ScramblingKey,
    pub registry: Registry,
    pub members: Vec<FleetMember>,
}

pub fn member_rng(fleet_seed: u64, index: u64) -> ChaCha20Rng {
    let seed = double_sha256_parts(&[b"bbc-member", &fleet_seed.to_be_bytes(), &index.to_be_bytes()]);
    ChaCha20Rng::from_seed(seed.0)
}

/// Enrolls `size` synthetic identities. Everything derives from `fleet_seed`.
pub fn enroll_fleet(fleet_seed: u64, size: usize, dim: usize) -> Result<SyntheticFleet, BiometricError> {
    let key = generate_key(fleet_seed, dim);
    let authority_seed = double_sha256_parts(&[b"bbc-authority", &fleet_seed.to_be_bytes()]);
    let mut authority = EnrollmentAuthority::new(authority_seed.0, fleet_seed, dim);
    let mut members = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = member_rng(fleet_seed, i as u64);
        let trait_vector = FeatureVector::random(dim, &mut rng);
        let device_seed: [u8; 32] = rng.random();
        let (_, credential) = authority.enroll(trait_vector.clone(), &key, device_seed)?;
        members.push(FleetMember { credential, trait_vector });
    }
    Ok(SyntheticFleet { key, registry: authority.into_registry(), members })
}
