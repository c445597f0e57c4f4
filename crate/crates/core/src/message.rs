//! Signed V2V / V2I messages and their legality rules.
//!
//! Canonical bytes are the fields in fixed order, each prefixed by its length
//! as a big-endian `u32`. The sender signs the canonical bytes; the wire form
//! appends the length-prefixed signature.

use std::collections::BTreeMap;
use std::fmt;

use crate::biometric::{verify, BiometricId, Registry, Signature, Signer};
use crate::credit::CreditLedger;
use crate::hash::{double_sha256, Digest32};

pub const MAX_PAYLOAD: usize = 1024;
/// Rounds a message stays acceptable after its timestamp.
pub const FRESHNESS_WINDOW: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    V2V,
    V2I,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageType {
    SafetyAlert,
    TrafficInfo,
    ServiceRequest,
    Heartbeat,
}

impl MessageKind {
    fn code(self) -> u8 {
        match self {
            MessageKind::V2V => 0,
            MessageKind::V2I => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MessageKind::V2V),
            1 => Some(MessageKind::V2I),
            _ => None,
        }
    }
}

impl MessageType {
    fn code(self) -> u8 {
        match self {
            MessageType::SafetyAlert => 0,
            MessageType::TrafficInfo => 1,
            MessageType::ServiceRequest => 2,
            MessageType::Heartbeat => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MessageType::SafetyAlert),
            1 => Some(MessageType::TrafficInfo),
            2 => Some(MessageType::ServiceRequest),
            3 => Some(MessageType::Heartbeat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageCodecError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("truncated message")]
    Truncated,
    #[error("field {field} has length {found}, expected {expected}")]
    FieldLength { field: &'static str, expected: usize, found: usize },
    #[error("unknown {field} code {code}")]
    UnknownCode { field: &'static str, code: u8 },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

/// Everything in a message except its signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageBody {
    pub kind: MessageKind,
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
    pub sender_id: BiometricId,
    pub credit_claim: u64,
    pub seq: u64,
    pub timestamp: u64,
}

#[derive(Clone, PartialEq, Eq)]
pub struct V2xMessage {
    pub body: MessageBody,
    pub signature: Signature,
}

impl fmt::Debug for V2xMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("V2xMessage")
            .field("kind", &self.body.kind)
            .field("msg_type", &self.body.msg_type)
            .field("sender", &self.body.sender_id)
            .field("seq", &self.body.seq)
            .field("timestamp", &self.body.timestamp)
            .field("claim", &self.body.credit_claim)
            .finish_non_exhaustive()
    }
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn field(&mut self) -> Result<&'a [u8], MessageCodecError> {
        if self.buf.len() < 4 {
            return Err(MessageCodecError::Truncated);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().unwrap()) as usize;
        let rest = &self.buf[4..];
        if rest.len() < len {
            return Err(MessageCodecError::Truncated);
        }
        self.buf = &rest[len..];
        Ok(&rest[..len])
    }

    fn fixed<const N: usize>(&mut self, name: &'static str) -> Result<[u8; N], MessageCodecError> {
        let f = self.field()?;
        f.try_into().map_err(|_| MessageCodecError::FieldLength { field: name, expected: N, found: f.len() })
    }
}

impl MessageBody {
    /// Status message a leader includes when it has nothing else to commit.
    pub fn heartbeat(sender_id: BiometricId, credit_claim: u64, seq: u64, round: u64) -> Self {
        Self {
            kind: MessageKind::V2V,
            msg_type: MessageType::Heartbeat,
            payload: b"status:ok".to_vec(),
            sender_id,
            credit_claim,
            seq,
            timestamp: round,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 * 4 + 2 + self.payload.len() + 56);
        put_field(&mut out, &[self.kind.code()]);
        put_field(&mut out, &[self.msg_type.code()]);
        put_field(&mut out, &self.payload);
        put_field(&mut out, self.sender_id.as_bytes());
        put_field(&mut out, &self.credit_claim.to_be_bytes());
        put_field(&mut out, &self.seq.to_be_bytes());
        put_field(&mut out, &self.timestamp.to_be_bytes());
        out
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, MessageCodecError> {
        let [kind] = r.fixed::<1>("kind")?;
        let kind = MessageKind::from_code(kind).ok_or(MessageCodecError::UnknownCode { field: "kind", code: kind })?;
        let [ty] = r.fixed::<1>("msg_type")?;
        let msg_type =
            MessageType::from_code(ty).ok_or(MessageCodecError::UnknownCode { field: "msg_type", code: ty })?;
        let payload = r.field()?.to_vec();
        if payload.len() > MAX_PAYLOAD {
            return Err(MessageCodecError::PayloadTooLarge(payload.len()));
        }
        let sender_id = BiometricId(Digest32(r.fixed::<32>("sender_id")?));
        let credit_claim = u64::from_be_bytes(r.fixed::<8>("credit_claim")?);
        let seq = u64::from_be_bytes(r.fixed::<8>("seq")?);
        let timestamp = u64::from_be_bytes(r.fixed::<8>("timestamp")?);
        Ok(Self { kind, msg_type, payload, sender_id, credit_claim, seq, timestamp })
    }

    /// Signs the canonical bytes with `signer`. `sender_id` is not checked
    /// against the signer; adversarial tests rely on that.
    pub fn sign(self, signer: &Signer) -> Result<V2xMessage, MessageCodecError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(MessageCodecError::PayloadTooLarge(self.payload.len()));
        }
        let signature = signer.sign(&self.canonical_bytes());
        Ok(V2xMessage { body: self, signature })
    }
}

impl V2xMessage {
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = self.body.canonical_bytes();
        put_field(&mut out, &self.signature.0);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, MessageCodecError> {
        let mut r = Reader { buf: bytes };
        let body = MessageBody::read(&mut r)?;
        let signature = Signature(r.fixed::<64>("signature")?);
        if !r.buf.is_empty() {
            return Err(MessageCodecError::Trailing(r.buf.len()));
        }
        Ok(Self { body, signature })
    }

    /// Transaction digest: double SHA-256 of the wire bytes.
    pub fn digest(&self) -> Digest32 {
        double_sha256(&self.wire_bytes())
    }

    pub fn sender(&self) -> BiometricId {
        self.body.sender_id
    }
}

/// Legality failure codes for a received or committed message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    UnknownSender,
    BadSignature,
    Replay,
    Stale,
    ClaimMismatch,
}

impl Rejection {
    pub const ALL: [Rejection; 5] = [
        Rejection::UnknownSender,
        Rejection::BadSignature,
        Rejection::Replay,
        Rejection::Stale,
        Rejection::ClaimMismatch,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Rejection::UnknownSender => "UnknownSender",
            Rejection::BadSignature => "BadSignature",
            Rejection::Replay => "Replay",
            Rejection::Stale => "Stale",
            Rejection::ClaimMismatch => "ClaimMismatch",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Highest sequence number seen per sender.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeqTracker {
    last: BTreeMap<BiometricId, u64>,
}

impl SeqTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self, sender: &BiometricId) -> Option<u64> {
        self.last.get(sender).copied()
    }

    /// True if `seq` is not above the last one recorded for `sender`.
    pub fn is_replay(&self, sender: &BiometricId, seq: u64) -> bool {
        self.last(sender).is_some_and(|last| seq <= last)
    }

    pub fn record(&mut self, sender: BiometricId, seq: u64) {
        let entry = self.last.entry(sender).or_insert(seq);
        *entry = (*entry).max(seq);
    }
}

/// Legality check. Order: enrollment, signature, replay, freshness, then the
/// credit claim against the receiver's committed ledger.
pub fn validate_message(
    msg: &V2xMessage,
    ledger: &CreditLedger,
    registry: &Registry,
    current_round: u64,
    seen: &SeqTracker,
) -> Result<(), Rejection> {
    let sender = msg.sender();
    let Some(public_key) = registry.public_key(&sender) else {
        return Err(Rejection::UnknownSender);
    };
    if !verify(&public_key, &msg.body.canonical_bytes(), &msg.signature) {
        return Err(Rejection::BadSignature);
    }
    if seen.is_replay(&sender, msg.body.seq) {
        return Err(Rejection::Replay);
    }
    let ts = msg.body.timestamp;
    if ts > current_round || current_round - ts > FRESHNESS_WINDOW {
        return Err(Rejection::Stale);
    }
    if ledger.credit(&sender) != Some(msg.body.credit_claim) {
        return Err(Rejection::ClaimMismatch);
    }
    Ok(())
}
