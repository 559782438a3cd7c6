//! Four-corner registered delivery: backend → sending access point →
//! receiving access point → backend, with dynamic discovery, signed
//! envelopes, retransmission, deduplication and evidence records.

mod discovery;
mod network;
mod transport;

use std::fmt;

use thiserror::Error;

use crate::calendar::SimDate;
use crate::trust::Signature;

pub use discovery::{Discovery, Protocol, SmpRecord};
pub use network::{AccessPoint, DeliveryAudit, DeliveryNetwork, Participant, DEFAULT_PKI, TEST_PKI};
pub use transport::{DelayModel, Downtime, RetryPolicy, TransportConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeliveryError {
    #[error("participant {0} already registered")]
    DuplicateParticipant(String),
    #[error("participant {0} not found")]
    NotFound(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("addressee {0} cannot be resolved")]
    AddresseeUnknown(String),
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error("unknown access point {0}")]
    UnknownAccessPoint(String),
    #[error("access point {0} already exists")]
    DuplicateAccessPoint(String),
    #[error("qualified delivery needs a qualified certificate for access point {0}")]
    NotQualified(String),
    #[error("invalid transport config: {0}")]
    InvalidConfig(String),
    #[error("certificate issuance failed: {0}")]
    Certificate(String),
}

/// Globally unique: the sender id plus a per-sender counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub String);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: MessageId,
    pub sender: String,
    pub addressee: String,
    pub payload: Vec<u8>,
    /// Seal of the sending access point over [`Message::envelope_bytes`].
    pub envelope_signature: Signature,
    /// Stands in for envelope encryption; wire formats are not modelled.
    pub encrypted: bool,
    pub submitted_at: u64,
}

impl Message {
    /// The byte string the envelope seal covers.
    pub fn envelope_bytes(id: &MessageId, sender: &str, addressee: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(payload.len() + 64);
        for part in [id.0.as_bytes(), sender.as_bytes(), addressee.as_bytes()] {
            out.extend_from_slice(&(part.len() as u32).to_be_bytes());
            out.extend_from_slice(part);
        }
        out.extend_from_slice(payload);
        out
    }

    pub fn envelope(&self) -> Vec<u8> {
        Self::envelope_bytes(&self.id, &self.sender, &self.addressee, &self.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvidenceKind {
    ProofOfSending,
    ProofOfReceiving,
    ChangeIndication,
}

impl fmt::Display for EvidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvidenceKind::ProofOfSending => "proof-of-sending",
            EvidenceKind::ProofOfReceiving => "proof-of-receiving",
            EvidenceKind::ChangeIndication => "change-indication",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub message_id: MessageId,
    pub sim_ms: u64,
    pub date: SimDate,
    /// Timestamp issued in qualified mode.
    pub qualified: bool,
    pub issuer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeliveryStatus {
    Pending,
    Delivered,
    /// The sender exhausted its retries without an acknowledgement and the
    /// message never reached the addressee.
    NonDelivery,
}
