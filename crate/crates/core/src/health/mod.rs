//! A citizen-controlled health data platform.
//!
//! The platform keeps ciphertext, wrapped keys and account metadata. Record
//! keys are generated and unwrapped on the citizen's side ([`CitizenAccount`]),
//! so nothing the platform stores can be decrypted with platform data alone.

mod crypto;
mod donation;
mod ingest;
mod sharing;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calendar::SimDate;
use crate::edelivery::DeliveryError;
use crate::eidas::{AuthResult, PersonIdentity};
use crate::eventlog::EventLog;
use crate::registry::{AssuranceLevel, CountryCode};
use crate::trust::{Signature, SignatureLevel, TrustedList};

pub use crypto::{key_id, wrap_key, ClientKeys, WrappedKey, TAG_LEN};
pub use donation::{deidentify, Consent, ResearchDonation};
pub use ingest::{
    IdentityTranslation, IngestionJob, NcpEndpoint, RawDocument, RejectReason, SealPolicy, Source, SourceKind, Stage,
    TranslationService,
};
pub use sharing::{GrantId, HandshakeId, Pin, ShareGrant, ShareMode, PIN_ATTEMPTS, PIN_EXPIRY_MS};
pub use store::{parse_dump, scan_for_markers, DumpEntry, DumpKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HealthError {
    #[error("an account with these contact handles already exists")]
    DuplicateAccount,
    #[error("at least one contact handle is required")]
    EmptyHandles,
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("unknown record {0}")]
    UnknownRecord(RecordId),
    #[error("account {account} may not access record {record}")]
    AccessDenied { account: String, record: RecordId },
    #[error("decryption failed integrity check")]
    IntegrityFailure,
    #[error("malformed record encoding")]
    MalformedRecord,
    #[error("PIN mismatch, {remaining} attempts left")]
    PinMismatch { remaining: u32 },
    #[error("PIN expired")]
    PinExpired,
    #[error("PIN attempts exhausted")]
    PinAttemptsExhausted,
    #[error("unknown handshake {0}")]
    UnknownHandshake(u64),
    #[error("unknown grant {0}")]
    UnknownGrant(u64),
    #[error("grantee must be validated through eID for this mode")]
    ValidationRequired,
    #[error("account holder is under the minimum age")]
    Underage,
    #[error("unknown ingestion source {0}")]
    UnknownSource(String),
    #[error("job is at stage {0}, expected received")]
    InvalidStage(String),
    #[error("donation requires consent")]
    ConsentMissing,
    #[error("consent level {actual:?} below required {required:?}")]
    ConsentInsufficient {
        required: SignatureLevel,
        actual: SignatureLevel,
    },
    #[error("consent signature does not validate: {0}")]
    ConsentInvalid(String),
    #[error("transfer {0} was not delivered")]
    NotDelivered(String),
    #[error("no document for {0}")]
    NoDocument(String),
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rec-{}", self.0)
    }
}

/// Opaque contact tokens. At least one must be present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContactHandles {
    pub email: Option<String>,
    pub phone: Option<String>,
}

impl ContactHandles {
    pub fn email(email: impl Into<String>) -> Self {
        Self {
            email: Some(email.into()),
            phone: None,
        }
    }

    pub fn values(&self) -> Vec<&str> {
        self.email.iter().chain(self.phone.iter()).map(String::as_str).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.values().iter().all(|v| v.is_empty())
    }
}

/// Canonical document: a type tag, payload bytes and an optional seal over
/// the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HealthRecord {
    pub type_tag: String,
    pub payload: Vec<u8>,
    pub seal: Option<Signature>,
}

fn put(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take<'a>(input: &mut &'a [u8]) -> Option<&'a [u8]> {
    let len = u32::from_be_bytes(input.get(..4)?.try_into().ok()?) as usize;
    let rest = input.get(4..)?;
    let (head, tail) = (rest.get(..len)?, rest.get(len..)?);
    *input = tail;
    Some(head)
}

impl HealthRecord {
    pub fn new(type_tag: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            type_tag: type_tag.into(),
            payload: payload.into(),
            seal: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 32);
        put(&mut out, self.type_tag.as_bytes());
        put(&mut out, &self.payload);
        put(&mut out, self.seal.as_ref().map(Signature::to_line).unwrap_or_default().as_bytes());
        out
    }

    pub fn decode(mut bytes: &[u8]) -> Result<Self, HealthError> {
        let err = || HealthError::MalformedRecord;
        let tag = take(&mut bytes).ok_or_else(err)?;
        let payload = take(&mut bytes).ok_or_else(err)?;
        let seal = take(&mut bytes).ok_or_else(err)?;
        if !bytes.is_empty() {
            return Err(err());
        }
        let seal = if seal.is_empty() {
            None
        } else {
            let line = std::str::from_utf8(seal).map_err(|_| err())?;
            Some(Signature::from_line(line).map_err(|_| err())?)
        };
        Ok(Self {
            type_tag: String::from_utf8(tag.to_vec()).map_err(|_| err())?,
            payload: payload.to_vec(),
            seal,
        })
    }
}

/// What the platform stores for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRecord {
    pub id: RecordId,
    pub owner: String,
    /// Id of the owner's public key the record was first wrapped for.
    pub key_id: String,
    pub nonce: [u8; 12],
    /// AEAD output: ciphertext followed by the integrity tag.
    pub ciphertext: Vec<u8>,
    pub wrapped: BTreeMap<String, WrappedKey>,
}

impl EncryptedRecord {
    pub fn integrity_tag(&self) -> &[u8] {
        &self.ciphertext[self.ciphertext.len() - TAG_LEN..]
    }

    fn aad(id: RecordId, owner: &str) -> Vec<u8> {
        format!("{id}|{owner}").into_bytes()
    }
}

/// Client side of an account: never handed to the platform.
#[derive(Debug, Clone)]
pub struct CitizenAccount {
    pub id: String,
    pub keys: ClientKeys,
    pub handles: ContactHandles,
    /// Attributes returned by the eID flow used at registration.
    pub identity: Option<PersonIdentity>,
}

impl CitizenAccount {
    pub fn is_validated(&self) -> bool {
        self.identity.is_some()
    }

    /// Unwraps this account's copy of the record key and decrypts.
    pub fn decrypt(&self, record: &EncryptedRecord) -> Result<HealthRecord, HealthError> {
        let wrapped = record.wrapped.get(&self.id).ok_or_else(|| HealthError::AccessDenied {
            account: self.id.clone(),
            record: record.id,
        })?;
        let dk = self.keys.unwrap_key(wrapped)?;
        let plain = crypto::open(&dk, &record.nonce, &record.ciphertext, &EncryptedRecord::aad(record.id, &record.owner))?;
        HealthRecord::decode(&plain)
    }

    fn data_key(&self, record: &EncryptedRecord) -> Result<[u8; 32], HealthError> {
        let wrapped = record.wrapped.get(&self.id).ok_or_else(|| HealthError::AccessDenied {
            account: self.id.clone(),
            record: record.id,
        })?;
        self.keys.unwrap_key(wrapped)
    }
}

/// Platform-side account entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountEntry {
    pub id: String,
    pub public_key: [u8; 32],
    pub key_id: String,
    pub handles: ContactHandles,
    pub validated: bool,
    pub asserting_scheme: Option<CountryCode>,
    pub assurance: Option<AssuranceLevel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformPolicy {
    /// Refuse accounts whose eID date of birth is less than 18 years before
    /// the clock.
    pub age_gate: bool,
    pub async_requires_validation: bool,
    pub seal_policy: SealPolicy,
    pub min_consent_level: SignatureLevel,
}

impl Default for PlatformPolicy {
    fn default() -> Self {
        Self {
            age_gate: false,
            async_requires_validation: true,
            seal_policy: SealPolicy::StoreWithWarning,
            min_consent_level: SignatureLevel::Simple,
        }
    }
}

#[derive(Debug)]
pub struct Platform {
    pub clock: SimDate,
    now_ms: u64,
    pub policy: PlatformPolicy,
    pub trusted_list: TrustedList,
    rng: ChaCha8Rng,
    accounts: BTreeMap<String, AccountEntry>,
    records: BTreeMap<RecordId, EncryptedRecord>,
    next_record: u64,
    grants: BTreeMap<GrantId, ShareGrant>,
    next_grant: u64,
    handshakes: BTreeMap<HandshakeId, sharing::PendingHandshake>,
    next_handshake: u64,
    sources: BTreeMap<String, Source>,
    next_job: u64,
    research: Vec<ResearchDonation>,
    log: EventLog,
}

impl Platform {
    pub fn new(clock: SimDate, seed: u64) -> Self {
        Self {
            clock,
            now_ms: 0,
            policy: PlatformPolicy::default(),
            trusted_list: TrustedList::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            accounts: BTreeMap::new(),
            records: BTreeMap::new(),
            next_record: 0,
            grants: BTreeMap::new(),
            next_grant: 0,
            handshakes: BTreeMap::new(),
            next_handshake: 0,
            sources: BTreeMap::new(),
            next_job: 0,
            research: Vec::new(),
            log: EventLog::new(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn advance_ms(&mut self, ms: u64) {
        self.now_ms += ms;
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn account(&self, id: &str) -> Option<&AccountEntry> {
        self.accounts.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &EncryptedRecord> {
        self.records.values()
    }

    pub fn research_store(&self) -> &[ResearchDonation] {
        &self.research
    }

    fn account_entry(&self, id: &str) -> Result<&AccountEntry, HealthError> {
        self.accounts.get(id).ok_or_else(|| HealthError::UnknownAccount(id.to_string()))
    }

    /// Creates an account. A successful eID result validates it and
    /// prefills the returned attributes on the client side; a failed one is
    /// ignored.
    pub fn register_citizen(
        &mut self,
        handles: ContactHandles,
        eid: Option<&AuthResult>,
        rng: &mut impl RngCore,
    ) -> Result<CitizenAccount, HealthError> {
        if handles.is_empty() {
            return Err(HealthError::EmptyHandles);
        }
        let taken = self
            .accounts
            .values()
            .any(|a| handles.values().iter().any(|h| !h.is_empty() && a.handles.values().contains(h)));
        if taken {
            return Err(HealthError::DuplicateAccount);
        }
        let (identity, scheme, assurance) = match eid {
            Some(AuthResult::Success {
                identity,
                asserting_scheme,
                assurance,
            }) => (Some(identity.clone()), Some(*asserting_scheme), Some(*assurance)),
            _ => (None, None, None),
        };
        if self.policy.age_gate {
            match &identity {
                None => return Err(HealthError::ValidationRequired),
                Some(p) if p.date_of_birth.add_years(18) > self.clock => return Err(HealthError::Underage),
                Some(_) => {}
            }
        }
        let keys = ClientKeys::generate(rng);
        let id = format!("acct-{}", self.accounts.len() + 1);
        self.accounts.insert(
            id.clone(),
            AccountEntry {
                id: id.clone(),
                public_key: keys.public(),
                key_id: keys.key_id(),
                handles: handles.clone(),
                validated: identity.is_some(),
                asserting_scheme: scheme,
                assurance,
            },
        );
        let detail = match scheme {
            Some(cc) => format!("validated via {cc}"),
            None => "unvalidated".to_string(),
        };
        self.log.push(self.now_ms, "platform", "register", &id, &detail);
        Ok(CitizenAccount {
            id,
            keys,
            handles,
            identity,
        })
    }

    /// Encrypts `record` for `owner_public` and stores it.
    fn store_for(&mut self, owner: &str, record: &HealthRecord, rng: &mut impl RngCore) -> Result<RecordId, HealthError> {
        let entry = self.account_entry(owner)?.clone();
        self.next_record += 1;
        let id = RecordId(self.next_record);
        let mut dk = [0u8; 32];
        rng.fill_bytes(&mut dk);
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        let ciphertext = crypto::seal(&dk, &nonce, &record.encode(), &EncryptedRecord::aad(id, owner));
        let wrapped = [(owner.to_string(), wrap_key(&dk, &entry.public_key, rng))].into();
        self.records.insert(
            id,
            EncryptedRecord {
                id,
                owner: owner.to_string(),
                key_id: entry.key_id,
                nonce,
                ciphertext,
                wrapped,
            },
        );
        self.log.push(self.now_ms, "platform", "store", &id.to_string(), &format!("owner={owner}"));
        Ok(id)
    }

    /// Client-side encryption followed by upload. The platform only ever
    /// receives the [`EncryptedRecord`].
    pub fn upload_record(
        &mut self,
        owner: &CitizenAccount,
        record: &HealthRecord,
        rng: &mut impl RngCore,
    ) -> Result<RecordId, HealthError> {
        self.store_for(&owner.id, record, rng)
    }

    /// Accounts that may read `record`: the owner plus grantees of live
    /// grants covering it.
    pub fn readers(&self, record: RecordId) -> Result<BTreeSet<String>, HealthError> {
        let rec = self.records.get(&record).ok_or(HealthError::UnknownRecord(record))?;
        let mut out: BTreeSet<String> = [rec.owner.clone()].into();
        out.extend(
            self.grants
                .values()
                .filter(|g| g.owner == rec.owner && g.records.contains(&record))
                .map(|g| g.grantee.clone()),
        );
        Ok(out)
    }

    /// Hands the ciphertext to an account entitled to it.
    pub fn fetch(&self, requester: &str, record: RecordId) -> Result<&EncryptedRecord, HealthError> {
        if !self.readers(record)?.contains(requester) {
            return Err(HealthError::AccessDenied {
                account: requester.to_string(),
                record,
            });
        }
        Ok(&self.records[&record])
    }

    /// Fetch plus client-side decryption.
    pub fn read(&self, client: &CitizenAccount, record: RecordId) -> Result<HealthRecord, HealthError> {
        client.decrypt(self.fetch(&client.id, record)?)
    }

    /// Records owned by `account`, in id order.
    pub fn records_of(&self, account: &str) -> Vec<RecordId> {
        self.records.values().filter(|r| r.owner == account).map(|r| r.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eidas::AuthError;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn german_result() -> AuthResult {
        AuthResult::Success {
            identity: PersonIdentity::new("Mustermann", "Erika", SimDate::ymd(1964, 8, 12), "DE/abc"),
            asserting_scheme: "DE".parse().unwrap(),
            assurance: AssuranceLevel::High,
        }
    }

    #[test]
    fn registration_variants() {
        let mut r = rng();
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 1);
        let plain = p.register_citizen(ContactHandles::email("a@x"), None, &mut r).unwrap();
        assert!(!plain.is_validated());
        let de = p.register_citizen(ContactHandles::email("b@x"), Some(&german_result()), &mut r).unwrap();
        let id = de.identity.as_ref().unwrap();
        assert_eq!(id.family_name, "Mustermann");
        assert!(id.gender.is_none());
        assert!(p.account(&de.id).unwrap().validated);
        let failed = AuthResult::Failure {
            step: 5,
            error: AuthError::CredentialFailure,
        };
        let f = p.register_citizen(ContactHandles::email("c@x"), Some(&failed), &mut r).unwrap();
        assert!(!f.is_validated());
        assert_eq!(
            p.register_citizen(ContactHandles::email("a@x"), None, &mut r).unwrap_err(),
            HealthError::DuplicateAccount
        );
        assert_eq!(
            p.register_citizen(ContactHandles::default(), None, &mut r).unwrap_err(),
            HealthError::EmptyHandles
        );
    }

    #[test]
    fn age_gate_is_opt_in() {
        let mut r = rng();
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 1);
        p.policy.age_gate = true;
        let minor = AuthResult::Success {
            identity: PersonIdentity::new("Kind", "Max", SimDate::ymd(2005, 1, 2), "DE/k"),
            asserting_scheme: "DE".parse().unwrap(),
            assurance: AssuranceLevel::High,
        };
        assert_eq!(
            p.register_citizen(ContactHandles::email("m@x"), Some(&minor), &mut r).unwrap_err(),
            HealthError::Underage
        );
        p.register_citizen(ContactHandles::email("e@x"), Some(&german_result()), &mut r).unwrap();
    }

    #[test]
    fn upload_round_trips_and_wrong_key_fails() {
        let mut r = rng();
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 1);
        let a = p.register_citizen(ContactHandles::email("a@x"), None, &mut r).unwrap();
        let b = p.register_citizen(ContactHandles::email("b@x"), None, &mut r).unwrap();
        for payload in [&b""[..], b"blood pressure 120/80"] {
            let rec = HealthRecord::new("observation", payload);
            let id = p.upload_record(&a, &rec, &mut r).unwrap();
            assert_eq!(p.read(&a, id).unwrap(), rec);
            assert!(matches!(p.read(&b, id), Err(HealthError::AccessDenied { .. })));
            // Even holding the ciphertext and a copy of a's wrapped key, b
            // cannot open it.
            let mut stolen = p.fetch(&a.id, id).unwrap().clone();
            let w = stolen.wrapped[&a.id].clone();
            stolen.wrapped.insert(b.id.clone(), w);
            assert_eq!(b.decrypt(&stolen), Err(HealthError::IntegrityFailure));
        }
    }
}
