//! Enrollment registry and its line-oriented text form.
//!
//! ```text
//! registry format=1 fleet_seed=<u64> dim=<d> size=<n> authority=<hex>
//! <biometric_id> <key_id> <quantized template> <public key> <authority signature>
//! ```

use std::collections::BTreeMap;

use super::{BiometricError, BiometricId, EnrollmentRecord, PublicKey, ScrambledTemplate, Signature};
use crate::codec::parse_canonical_u64;
use crate::hash::{decode_hex, Digest32};

pub const REGISTRY_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("registry line {line}: {reason}")]
pub struct RegistryParseError {
    pub line: usize,
    pub reason: String,
}

/// Enrolled identities in enrollment order. Single writer (the authority),
/// any number of readers.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    authority: PublicKey,
    fleet_seed: u64,
    dim: usize,
    records: Vec<EnrollmentRecord>,
    index: BTreeMap<BiometricId, usize>,
}

impl Registry {
    pub(crate) fn new(authority: PublicKey, fleet_seed: u64, dim: usize) -> Self {
        Self { authority, fleet_seed, dim, records: Vec::new(), index: BTreeMap::new() }
    }

    pub(crate) fn insert(&mut self, record: EnrollmentRecord) -> Result<(), BiometricError> {
        if self.index.contains_key(&record.biometric_id) {
            return Err(BiometricError::DuplicateIdentity(record.biometric_id));
        }
        self.index.insert(record.biometric_id, self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn authority(&self) -> PublicKey {
        self.authority
    }

    pub fn fleet_seed(&self) -> u64 {
        self.fleet_seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &BiometricId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &BiometricId) -> Option<&EnrollmentRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn public_key(&self, id: &BiometricId) -> Option<PublicKey> {
        self.get(id).map(|r| r.public_key)
    }

    /// Records in enrollment order.
    pub fn records(&self) -> &[EnrollmentRecord] {
        &self.records
    }

    pub fn ids(&self) -> impl Iterator<Item = BiometricId> + '_ {
        self.records.iter().map(|r| r.biometric_id)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "registry format={REGISTRY_FORMAT} fleet_seed={} dim={} size={} authority={}\n",
            self.fleet_seed,
            self.dim,
            self.records.len(),
            self.authority.to_hex()
        );
        for r in &self.records {
            out.push_str(&record_line(r));
            out.push('\n');
        }
        out
    }

    /// Parses and fully verifies a registry export. Every line must be in
    /// canonical form.
    pub fn from_text(text: &str) -> Result<Self, RegistryParseError> {
        let err = |line: usize, reason: String| RegistryParseError { line, reason };
        if !text.ends_with('\n') {
            return Err(err(text.lines().count().max(1), "missing trailing newline".into()));
        }
        let mut lines = text.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty registry".into()))?;
        let fields = header_fields(header).map_err(|r| err(1, r))?;
        let [format, fleet_seed, dim, size, authority] = fields;
        if format != REGISTRY_FORMAT.to_string() {
            return Err(err(1, format!("unsupported format {format}")));
        }
        let fleet_seed = parse_canonical_u64(fleet_seed).map_err(|r| err(1, r))?;
        let dim = parse_canonical_u64(dim).map_err(|r| err(1, r))? as usize;
        let size = parse_canonical_u64(size).map_err(|r| err(1, r))? as usize;
        let authority = PublicKey::from_hex(authority).map_err(|e| err(1, e.to_string()))?;
        let mut registry = Registry::new(authority, fleet_seed, dim);
        if registry_header(&registry, size) != header {
            return Err(err(1, "non-canonical header".into()));
        }
        for (n, line) in lines {
            let record = parse_record(line, dim).map_err(|r| err(n, r))?;
            if record_line(&record) != line {
                return Err(err(n, "non-canonical record".into()));
            }
            if !record.verify(&authority) {
                return Err(err(n, "enrollment record does not verify".into()));
            }
            registry.insert(record).map_err(|e| err(n, e.to_string()))?;
        }
        if registry.len() != size {
            return Err(err(1, format!("header declares {size} records, found {}", registry.len())));
        }
        Ok(registry)
    }
}

fn registry_header(r: &Registry, size: usize) -> String {
    format!(
        "registry format={REGISTRY_FORMAT} fleet_seed={} dim={} size={size} authority={}",
        r.fleet_seed,
        r.dim,
        r.authority.to_hex()
    )
}

fn record_line(r: &EnrollmentRecord) -> String {
    format!(
        "{} {} {} {} {}",
        r.biometric_id.to_hex(),
        r.template.key_id().to_hex(),
        hex::encode(r.template.quantized_bytes()),
        r.public_key.to_hex(),
        r.authority_signature.to_hex()
    )
}

fn header_fields(line: &str) -> Result<[&str; 5], String> {
    let mut parts = line.split(' ');
    if parts.next() != Some("registry") {
        return Err("expected registry header".into());
    }
    let mut out = [""; 5];
    for (slot, key) in out.iter_mut().zip(["format", "fleet_seed", "dim", "size", "authority"]) {
        let part = parts.next().ok_or_else(|| format!("missing {key}"))?;
        *slot = part
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| format!("expected {key}=..."))?;
    }
    if parts.next().is_some() {
        return Err("trailing header fields".into());
    }
    Ok(out)
}

fn parse_record(line: &str, dim: usize) -> Result<EnrollmentRecord, String> {
    let parts: Vec<&str> = line.split(' ').collect();
    let [id, key_id, template, pk, sig] = parts[..] else {
        return Err(format!("expected 5 fields, found {}", parts.len()));
    };
    let biometric_id = BiometricId::from_hex(id).map_err(|e| format!("biometric id: {e}"))?;
    let key_id = Digest32::from_hex(key_id).map_err(|e| format!("key id: {e}"))?;
    let raw = decode_hex(template).map_err(|e| format!("template: {e}"))?;
    if raw.len() != dim * 2 {
        return Err(format!("template has {} bytes, expected {}", raw.len(), dim * 2));
    }
    let quantized: Vec<i16> = raw.chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]])).collect();
    let template = ScrambledTemplate::from_quantized(&quantized, key_id);
    let public_key = PublicKey::from_hex(pk).map_err(|e| format!("public key: {e}"))?;
    let authority_signature = Signature::from_hex(sig).map_err(|e| format!("signature: {e}"))?;
    Ok(EnrollmentRecord { biometric_id, template, public_key, authority_signature })
}
