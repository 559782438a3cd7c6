//! Ingestion pipeline for documents from healthcare providers and national
//! contact points.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::edelivery::{DeliveryNetwork, DeliveryStatus, Evidence, EvidenceKind};
use crate::trust::{validate, CertSerial, Signature, Verdict};

use super::{HealthError, HealthRecord, Platform, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Hcp,
    Ncp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub id: String,
    pub kind: SourceKind,
    /// When set, only seals made with this certificate are accepted as
    /// coming from the source.
    pub seal_certificate: Option<CertSerial>,
}

/// A document as a source delivers it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub format: String,
    pub payload: Vec<u8>,
    pub seal: Option<Signature>,
}

impl RawDocument {
    pub fn new(format: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            format: format.into(),
            payload: payload.into(),
            seal: None,
        }
    }

    pub fn sealed(mut self, seal: Signature) -> Self {
        self.seal = Some(seal);
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        HealthRecord {
            type_tag: self.format.clone(),
            payload: self.payload.clone(),
            seal: self.seal.clone(),
        }
        .encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, HealthError> {
        let r = HealthRecord::decode(bytes)?;
        Ok(Self {
            format: r.type_tag,
            payload: r.payload,
            seal: r.seal,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    SealInvalid(String),
    SealIndeterminate(String),
    SealNotFromSource,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::SealInvalid(r) => write!(f, "seal invalid ({r})"),
            RejectReason::SealIndeterminate(r) => write!(f, "seal indeterminate ({r})"),
            RejectReason::SealNotFromSource => f.write_str("seal not made by the source"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Received,
    Transformed,
    SealChecked,
    Stored(RecordId),
    Rejected(RejectReason),
}

impl Stage {
    pub fn rank(&self) -> u8 {
        match self {
            Stage::Received => 0,
            Stage::Transformed => 1,
            Stage::SealChecked => 2,
            Stage::Stored(_) | Stage::Rejected(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Received => "received",
            Stage::Transformed => "transformed",
            Stage::SealChecked => "seal-checked",
            Stage::Stored(_) => "stored",
            Stage::Rejected(_) => "rejected",
        }
    }
}

/// What to do with a seal that validates as indeterminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SealPolicy {
    StoreWithWarning,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestionJob {
    pub id: u64,
    pub source: String,
    pub target: String,
    pub raw: RawDocument,
    pub stage: Stage,
    pub history: Vec<Stage>,
    pub warning: Option<String>,
    /// Subject of the seal certificate, for sealed documents that passed.
    pub provenance: Option<String>,
    /// Delivery evidence, for documents that arrived over eDelivery.
    pub evidence: Vec<Evidence>,
}

impl IngestionJob {
    fn advance(&mut self, next: Stage) {
        assert!(next.rank() > self.stage.rank(), "stage regression {:?} -> {:?}", self.stage, next);
        self.history.push(std::mem::replace(&mut self.stage, next));
    }

    pub fn stored_record(&self) -> Option<RecordId> {
        match self.stage {
            Stage::Stored(id) => Some(id),
            _ => None,
        }
    }
}

/// Medical content translation hook. Only the identity stub exists.
pub trait TranslationService {
    fn translate(&self, record: HealthRecord, target_language: &str) -> HealthRecord;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslation;

impl TranslationService for IdentityTranslation {
    fn translate(&self, record: HealthRecord, _target_language: &str) -> HealthRecord {
        record
    }
}

/// The document-serving side of a national contact point.
#[derive(Debug, Clone, Default)]
pub struct NcpEndpoint {
    pub participant: String,
    /// Patient summaries keyed by platform account id.
    pub documents: BTreeMap<String, RawDocument>,
}

const REQUEST_PREFIX: &str = "patient-summary-request;subject=";

impl Platform {
    pub fn register_source(&mut self, source: Source) {
        self.log.push(self.now_ms, "platform", "source", &source.id, &format!("{:?}", source.kind));
        self.sources.insert(source.id.clone(), source);
    }

    pub fn source(&self, id: &str) -> Option<&Source> {
        self.sources.get(id)
    }

    pub fn new_job(&mut self, source: &str, target: &str, raw: RawDocument) -> Result<IngestionJob, HealthError> {
        if !self.sources.contains_key(source) {
            return Err(HealthError::UnknownSource(source.to_string()));
        }
        self.account_entry(target)?;
        self.next_job += 1;
        let job = IngestionJob {
            id: self.next_job,
            source: source.to_string(),
            target: target.to_string(),
            raw,
            stage: Stage::Received,
            history: Vec::new(),
            warning: None,
            provenance: None,
            evidence: Vec::new(),
        };
        self.log.push(self.now_ms, "ingest", "received", &format!("job-{}", job.id), &format!("source={source}"));
        Ok(job)
    }

    pub fn ingest(&mut self, job: IngestionJob) -> Result<IngestionJob, HealthError> {
        self.ingest_with(job, &IdentityTranslation)
    }

    /// Runs a received job through transformation, seal check and storage.
    /// A rejection is an `Ok` job in stage `Rejected`.
    pub fn ingest_with(
        &mut self,
        mut job: IngestionJob,
        translator: &dyn TranslationService,
    ) -> Result<IngestionJob, HealthError> {
        if job.stage != Stage::Received {
            return Err(HealthError::InvalidStage(job.stage.name().to_string()));
        }
        let source = self
            .sources
            .get(&job.source)
            .cloned()
            .ok_or_else(|| HealthError::UnknownSource(job.source.clone()))?;
        let subject = format!("job-{}", job.id);

        let canonical = translator.translate(
            HealthRecord {
                type_tag: format!("canonical/{}", job.raw.format),
                payload: job.raw.payload.clone(),
                seal: job.raw.seal.clone(),
            },
            "en",
        );
        job.advance(Stage::Transformed);
        self.log.push(self.now_ms, "ingest", "transformed", &subject, &canonical.type_tag);

        let mut rejection = None;
        if let Some(seal) = &job.raw.seal {
            let verdict = validate(&job.raw.payload, seal, &self.trusted_list, self.clock);
            let from_source = source.seal_certificate.is_none_or(|c| c == seal.signer);
            let subject_name = self.trusted_list.certificate(seal.signer).map(|c| c.subject.name().to_string());
            match verdict {
                Verdict::Invalid(_) => rejection = Some(RejectReason::SealInvalid(verdict.label().to_string())),
                _ if !from_source => rejection = Some(RejectReason::SealNotFromSource),
                Verdict::Indeterminate(_) => match self.policy.seal_policy {
                    SealPolicy::Reject => {
                        rejection = Some(RejectReason::SealIndeterminate(verdict.label().to_string()))
                    }
                    SealPolicy::StoreWithWarning => {
                        job.warning = Some(format!("seal {}", verdict.label()));
                        job.provenance = subject_name;
                    }
                },
                Verdict::Valid => job.provenance = subject_name,
            }
        }
        if let Some(reason) = rejection {
            self.log.push(self.now_ms, "ingest", "rejected", &subject, &reason.to_string());
            job.advance(Stage::Rejected(reason));
            return Ok(job);
        }
        job.advance(Stage::SealChecked);
        self.log.push(
            self.now_ms,
            "ingest",
            "seal-checked",
            &subject,
            job.warning.as_deref().unwrap_or(if job.raw.seal.is_some() { "valid" } else { "unsealed" }),
        );

        // Encrypted under a fresh key wrapped for the citizen's public key;
        // the plaintext is dropped with the job.
        let mut rng = ChaCha8Rng::from_rng(&mut self.rng).expect("chacha seeding does not fail");
        let rid = self.store_for(&job.target.clone(), &canonical, &mut rng)?;
        job.advance(Stage::Stored(rid));
        self.log.push(self.now_ms, "ingest", "stored", &subject, &rid.to_string());
        Ok(job)
    }

    /// Requests the citizen's patient summary from an NCP over eDelivery
    /// and queues it as an ingestion job.
    pub fn ncp_fetch(
        &mut self,
        net: &mut DeliveryNetwork,
        platform_participant: &str,
        ncp: &NcpEndpoint,
        account: &str,
    ) -> Result<IngestionJob, HealthError> {
        self.account_entry(account)?;
        let request = format!("{REQUEST_PREFIX}{account}");
        let (req_id, _) = net.submit(platform_participant, &ncp.participant, request.as_bytes())?;
        net.run();
        if net.status(&req_id) != Some(DeliveryStatus::Delivered) {
            return Err(HealthError::NotDelivered(req_id.0));
        }
        let asked = net
            .inbox(&ncp.participant)
            .iter()
            .find(|m| m.id == req_id)
            .and_then(|m| std::str::from_utf8(&m.payload).ok())
            .and_then(|s| s.strip_prefix(REQUEST_PREFIX))
            .map(str::to_string)
            .ok_or_else(|| HealthError::NotDelivered(req_id.0.clone()))?;
        let doc = ncp.documents.get(&asked).ok_or_else(|| HealthError::NoDocument(asked.clone()))?;
        let (resp_id, _) = net.submit(&ncp.participant, platform_participant, &doc.encode())?;
        net.run();
        if net.status(&resp_id) != Some(DeliveryStatus::Delivered) {
            return Err(HealthError::NotDelivered(resp_id.0));
        }
        let copies: Vec<_> = net.inbox(platform_participant).iter().filter(|m| m.id == resp_id).collect();
        if copies.len() != 1 {
            return Err(HealthError::Delivery(crate::edelivery::DeliveryError::InvariantViolation(format!(
                "{} copies of {resp_id} in the inbox",
                copies.len()
            ))));
        }
        let raw = RawDocument::decode(&copies[0].payload)?;
        let mut job = self.new_job(&ncp.participant, account, raw)?;
        job.evidence = net
            .evidence_for(&resp_id)
            .into_iter()
            .filter(|e| matches!(e.kind, EvidenceKind::ProofOfSending | EvidenceKind::ProofOfReceiving))
            .cloned()
            .collect();
        Ok(job)
    }
}
