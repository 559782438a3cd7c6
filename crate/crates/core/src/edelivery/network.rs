//! Discrete-event engine for the four-corner exchange.
//!
//! Events sit in a min-heap keyed on `(time, sequence)`, so equal-time events
//! run in the order they were scheduled. All randomness comes from one seeded
//! ChaCha stream, which makes a run a pure function of its inputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calendar::SimDate;
use crate::eventlog::EventLog;
use crate::registry::CountryCode;
use crate::trust::{
    seal, validate, CertSerial, CertificateKind, CreationDevice, KeyPair, Subject, TrustedList, Validity,
};

use super::{
    DeliveryError, DeliveryStatus, Discovery, Evidence, EvidenceKind, Message, MessageId, Protocol, SmpRecord,
    TransportConfig,
};

/// Qualified TSP provisioned on a fresh network's trusted list.
pub const DEFAULT_PKI: &str = "edelivery-pki";
/// Non-qualified TSP provisioned alongside it.
pub const TEST_PKI: &str = "test-pki";

const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug)]
pub struct AccessPoint {
    pub id: String,
    pub address: String,
    pub certificate: CertSerial,
    key: KeyPair,
    device: CreationDevice,
    seen: HashSet<usize>,
    seen_order: VecDeque<usize>,
}

impl AccessPoint {
    /// Remembers `msg`; false when it was already known.
    fn remember(&mut self, msg: usize, retention: Option<usize>) -> bool {
        if !self.seen.insert(msg) {
            return false;
        }
        if let Some(cap) = retention {
            self.seen_order.push_back(msg);
            while self.seen_order.len() > cap {
                if let Some(old) = self.seen_order.pop_front() {
                    self.seen.remove(&old);
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct Participant {
    pub id: String,
    pub access_point: String,
    pub inbox: Vec<Message>,
    sent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Transmit { msg: usize, attempt: u32 },
    Arrive { msg: usize, corrupted: bool },
    AckArrive { msg: usize },
    Timeout { msg: usize, attempt: u32 },
    Deliver { msg: usize },
}

#[derive(Debug, PartialEq, Eq)]
struct Scheduled {
    at: u64,
    seq: u64,
    event: Event,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
struct Tracked {
    message: Message,
    sending_ap: String,
    receiving_ap: String,
    status: DeliveryStatus,
    acked: bool,
    attempts: u32,
    /// Flips a bit of every transmission, as if altered at the sending side.
    tampered: bool,
}

/// Result of the exactly-once audit over the whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryAudit {
    pub submitted: usize,
    pub delivered: usize,
    pub non_delivered: usize,
    pub pending: usize,
    /// Inbox entries beyond the first for the same message id.
    pub duplicate_entries: usize,
    /// Inbox entries whose id was never submitted.
    pub phantom_entries: usize,
    /// Delivered messages without exactly one sending and one receiving proof.
    pub incomplete_evidence: usize,
    /// Delivered messages whose receiving proof predates the sending proof.
    pub misordered_evidence: usize,
    pub change_indications: usize,
}

impl DeliveryAudit {
    pub fn is_clean(&self) -> bool {
        self.duplicate_entries == 0
            && self.phantom_entries == 0
            && self.incomplete_evidence == 0
            && self.misordered_evidence == 0
    }
}

#[derive(Debug)]
pub struct DeliveryNetwork {
    pub config: TransportConfig,
    start: SimDate,
    now_ms: u64,
    rng: ChaCha8Rng,
    list: TrustedList,
    discovery: Discovery,
    access_points: BTreeMap<String, AccessPoint>,
    participants: BTreeMap<String, Participant>,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    messages: Vec<Tracked>,
    index: BTreeMap<MessageId, usize>,
    evidence: Vec<Evidence>,
    log: EventLog,
}

impl DeliveryNetwork {
    /// A network whose trusted list carries [`DEFAULT_PKI`] (qualified) and
    /// [`TEST_PKI`] (not qualified).
    pub fn new(config: TransportConfig, start: SimDate) -> Result<Self, DeliveryError> {
        let mut list = TrustedList::new();
        let be: CountryCode = "BE".parse().expect("valid code");
        list.add_tsp(be, DEFAULT_PKI, true);
        list.add_tsp(be, TEST_PKI, false);
        Self::with_trusted_list(config, start, list)
    }

    pub fn with_trusted_list(config: TransportConfig, start: SimDate, list: TrustedList) -> Result<Self, DeliveryError> {
        config.check()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            start,
            now_ms: 0,
            list,
            discovery: Discovery::new(),
            access_points: BTreeMap::new(),
            participants: BTreeMap::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            messages: Vec::new(),
            index: BTreeMap::new(),
            evidence: Vec::new(),
            log: EventLog::new(),
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn date_at(&self, ms: u64) -> SimDate {
        self.start.add_days((ms / MS_PER_DAY) as i64)
    }

    pub fn trusted_list(&self) -> &TrustedList {
        &self.list
    }

    pub fn discovery(&self) -> &Discovery {
        &self.discovery
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn evidence(&self) -> &[Evidence] {
        &self.evidence
    }

    pub fn evidence_for(&self, id: &MessageId) -> Vec<&Evidence> {
        self.evidence.iter().filter(|e| &e.message_id == id).collect()
    }

    pub fn access_point(&self, id: &str) -> Option<&AccessPoint> {
        self.access_points.get(id)
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.get(id)
    }

    /// Provisions an access point with a seal certificate from `tsp`.
    pub fn add_access_point(&mut self, id: &str, address: &str, tsp: &str) -> Result<CertSerial, DeliveryError> {
        if self.access_points.contains_key(id) {
            return Err(DeliveryError::DuplicateAccessPoint(id.to_string()));
        }
        let key = KeyPair::generate(&mut self.rng);
        let validity = Validity::new(self.start.add_months(-1), self.start.add_years(5))
            .map_err(|e| DeliveryError::Certificate(e.to_string()))?;
        let issued = self
            .list
            .issue_certificate(
                tsp,
                Subject::LegalPerson(format!("access-point {id}")),
                key.public().clone(),
                CertificateKind::ForSeal,
                validity,
                true,
            )
            .map_err(|e| DeliveryError::Certificate(e.to_string()))?;
        let cert = issued.certificate;
        if self.config.qualified && !self.list.is_qualified(&cert) {
            return Err(DeliveryError::NotQualified(id.to_string()));
        }
        let device = CreationDevice::new(format!("hsm:{id}"), self.list.is_qualified(&cert)).holding(cert.serial);
        self.access_points.insert(
            id.to_string(),
            AccessPoint {
                id: id.to_string(),
                address: address.to_string(),
                certificate: cert.serial,
                key,
                device,
                seen: HashSet::new(),
                seen_order: VecDeque::new(),
            },
        );
        self.log.push(self.now_ms, &format!("ap:{id}"), "provisioned", "-", &format!("cert={}", cert.serial));
        Ok(cert.serial)
    }

    /// Registers a backend behind `access_point` and publishes its metadata
    /// at `smp_address`.
    pub fn add_participant(&mut self, id: &str, access_point: &str, smp_address: &str) -> Result<(), DeliveryError> {
        let ap = self
            .access_points
            .get(access_point)
            .ok_or_else(|| DeliveryError::UnknownAccessPoint(access_point.to_string()))?;
        let record = SmpRecord {
            participant: id.to_string(),
            access_point: ap.id.clone(),
            address: ap.address.clone(),
            protocols: [Protocol::As4].into(),
            certificate: ap.certificate,
        };
        self.discovery.register_participant(smp_address, record, &self.list)?;
        self.participants.insert(
            id.to_string(),
            Participant {
                id: id.to_string(),
                access_point: access_point.to_string(),
                inbox: Vec::new(),
                sent: 0,
            },
        );
        self.log.push(self.now_ms, "sml", "registered", id, &format!("smp={smp_address} ap={access_point}"));
        Ok(())
    }

    /// Moves a participant to another access point; later lookups resolve
    /// to the new one.
    pub fn move_participant(&mut self, id: &str, access_point: &str) -> Result<(), DeliveryError> {
        let ap = self
            .access_points
            .get(access_point)
            .ok_or_else(|| DeliveryError::UnknownAccessPoint(access_point.to_string()))?;
        let mut record = self.discovery.lookup(id)?.clone();
        record.access_point = ap.id.clone();
        record.address = ap.address.clone();
        record.certificate = ap.certificate;
        self.discovery.update_participant(record, &self.list)?;
        if let Some(p) = self.participants.get_mut(id) {
            p.access_point = access_point.to_string();
        }
        self.log.push(self.now_ms, "smp", "updated", id, &format!("ap={access_point}"));
        Ok(())
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.next_seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.next_seq,
            event,
        });
    }

    fn issue(&mut self, kind: EvidenceKind, msg: usize, issuer: &str) -> Evidence {
        let e = Evidence {
            kind,
            message_id: self.messages[msg].message.id.clone(),
            sim_ms: self.now_ms,
            date: self.date_at(self.now_ms),
            qualified: self.config.qualified,
            issuer: issuer.to_string(),
        };
        self.evidence.push(e.clone());
        self.log.push(self.now_ms, &format!("ap:{issuer}"), "evidence", &e.message_id.0, &kind.to_string());
        e
    }

    /// Corner 1 → 2: the sender's access point seals the envelope, issues a
    /// proof of sending and queues the first transmission.
    pub fn submit(&mut self, sender: &str, addressee: &str, payload: &[u8]) -> Result<(MessageId, Evidence), DeliveryError> {
        let sending_ap = self
            .participants
            .get(sender)
            .ok_or_else(|| DeliveryError::UnknownParticipant(sender.to_string()))?
            .access_point
            .clone();
        let receiving_ap = match self.discovery.lookup(addressee) {
            Ok(r) => r.access_point.clone(),
            Err(_) => return Err(DeliveryError::AddresseeUnknown(addressee.to_string())),
        };
        let p = self.participants.get_mut(sender).expect("checked above");
        p.sent += 1;
        let id = MessageId(format!("{sender}#{:06}", p.sent));
        let ap = &self.access_points[&sending_ap];
        let cert = self.list.certificate(ap.certificate).expect("provisioned certificate");
        let envelope = Message::envelope_bytes(&id, sender, addressee, payload);
        let signature = seal(&envelope, &ap.key, cert, &ap.device, self.date_at(self.now_ms))
            .map_err(|e| DeliveryError::Certificate(e.to_string()))?;
        let msg = self.messages.len();
        self.messages.push(Tracked {
            message: Message {
                id: id.clone(),
                sender: sender.to_string(),
                addressee: addressee.to_string(),
                payload: payload.to_vec(),
                envelope_signature: signature,
                encrypted: true,
                submitted_at: self.now_ms,
            },
            sending_ap: sending_ap.clone(),
            receiving_ap,
            status: DeliveryStatus::Pending,
            acked: false,
            attempts: 0,
            tampered: false,
        });
        self.index.insert(id.clone(), msg);
        self.log.push(self.now_ms, &format!("backend:{sender}"), "submit", &id.0, &format!("to={addressee} bytes={}", payload.len()));
        let pos = self.issue(EvidenceKind::ProofOfSending, msg, &sending_ap);
        self.schedule(self.now_ms, Event::Transmit { msg, attempt: 1 });
        Ok((id, pos))
    }

    /// Alters every future transmission of `id` after sealing.
    pub fn tamper(&mut self, id: &MessageId) -> Result<(), DeliveryError> {
        let &msg = self.index.get(id).ok_or_else(|| DeliveryError::NotFound(id.0.clone()))?;
        self.messages[msg].tampered = true;
        Ok(())
    }

    /// Processes the next event; false once the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(next) = self.queue.pop() else {
            return false;
        };
        self.now_ms = self.now_ms.max(next.at);
        match next.event {
            Event::Transmit { msg, attempt } => self.on_transmit(msg, attempt),
            Event::Arrive { msg, corrupted } => self.on_arrive(msg, corrupted),
            Event::AckArrive { msg } => self.on_ack(msg),
            Event::Timeout { msg, attempt } => self.on_timeout(msg, attempt),
            Event::Deliver { msg } => self.on_deliver(msg),
        }
        true
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    /// Processes every event scheduled at or before `ms`, then advances the
    /// clock to `ms`.
    pub fn run_until(&mut self, ms: u64) {
        while self.queue.peek().is_some_and(|s| s.at <= ms) {
            self.step();
        }
        self.now_ms = self.now_ms.max(ms);
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn ap_component(&self, msg: usize, receiving: bool) -> String {
        let t = &self.messages[msg];
        format!("ap:{}", if receiving { &t.receiving_ap } else { &t.sending_ap })
    }

    fn on_transmit(&mut self, msg: usize, attempt: u32) {
        if self.messages[msg].acked {
            return;
        }
        self.messages[msg].attempts = attempt;
        let comp = self.ap_component(msg, false);
        let id = self.messages[msg].message.id.0.clone();
        self.log.push(self.now_ms, &comp, "transmit", &id, &format!("attempt={attempt}"));
        let copies = if self.rng.gen_bool(self.config.duplication) { 2 } else { 1 };
        for _ in 0..copies {
            if self.rng.gen_bool(self.config.loss) {
                self.log.push(self.now_ms, "net", "lost", &id, "envelope");
                continue;
            }
            let delay = self.config.delay.sample(&mut self.rng);
            let corrupted = self.messages[msg].tampered || self.rng.gen_bool(self.config.corruption);
            self.schedule(self.now_ms + delay, Event::Arrive { msg, corrupted });
        }
        if copies == 2 {
            self.log.push(self.now_ms, "net", "duplicated", &id, "envelope");
        }
        let timeout = self.config.retry.timeout_after(attempt);
        self.schedule(self.now_ms + timeout, Event::Timeout { msg, attempt });
    }

    fn on_arrive(&mut self, msg: usize, corrupted: bool) {
        let comp = self.ap_component(msg, true);
        let id = self.messages[msg].message.id.0.clone();
        if self.config.is_down(self.now_ms) {
            self.log.push(self.now_ms, &comp, "dropped", &id, "receiver down");
            return;
        }
        let t = &self.messages[msg];
        let mut envelope = t.message.envelope();
        if corrupted {
            let bit = self.rng.gen_range(0..envelope.len() * 8);
            envelope[bit / 8] ^= 1 << (bit % 8);
        }
        let verdict = validate(&envelope, &t.message.envelope_signature, &self.list, self.date_at(self.now_ms));
        if !verdict.is_valid() {
            self.log.push(self.now_ms, &comp, "rejected", &id, verdict.label());
            let ap = self.messages[msg].receiving_ap.clone();
            self.issue(EvidenceKind::ChangeIndication, msg, &ap);
            return;
        }
        let retention = self.config.dedup_retention;
        let ap_id = self.messages[msg].receiving_ap.clone();
        let fresh = self
            .access_points
            .get_mut(&ap_id)
            .expect("receiving access point exists")
            .remember(msg, retention);
        if fresh {
            self.log.push(self.now_ms, &comp, "accepted", &id, "");
            self.schedule(self.now_ms, Event::Deliver { msg });
        } else {
            self.log.push(self.now_ms, &comp, "duplicate", &id, "");
        }
        // Acknowledge duplicates too: the earlier ack may have been lost.
        if self.rng.gen_bool(self.config.loss) {
            self.log.push(self.now_ms, "net", "lost", &id, "ack");
        } else {
            let delay = self.config.delay.sample(&mut self.rng);
            self.schedule(self.now_ms + delay, Event::AckArrive { msg });
        }
    }

    fn on_ack(&mut self, msg: usize) {
        if self.messages[msg].acked {
            return;
        }
        self.messages[msg].acked = true;
        let comp = self.ap_component(msg, false);
        let id = self.messages[msg].message.id.0.clone();
        self.log.push(self.now_ms, &comp, "acked", &id, "");
    }

    fn on_timeout(&mut self, msg: usize, attempt: u32) {
        let t = &self.messages[msg];
        if t.acked || t.attempts != attempt {
            return;
        }
        if attempt > self.config.retry.max_retries {
            let comp = self.ap_component(msg, false);
            let id = t.message.id.0.clone();
            self.log.push(self.now_ms, &comp, "gave-up", &id, &format!("attempts={attempt}"));
            if self.messages[msg].status == DeliveryStatus::Pending {
                self.messages[msg].status = DeliveryStatus::NonDelivery;
            }
            return;
        }
        self.schedule(self.now_ms, Event::Transmit { msg, attempt: attempt + 1 });
    }

    fn on_deliver(&mut self, msg: usize) {
        let message = self.messages[msg].message.clone();
        let comp = format!("backend:{}", message.addressee);
        self.log.push(self.now_ms, &comp, "deliver", &message.id.0, "");
        self.participants
            .get_mut(&message.addressee)
            .expect("addressee registered")
            .inbox
            .push(message);
        // A retry budget can run out while acks are lost even though the
        // envelope got through; the addressee's inbox decides.
        self.messages[msg].status = DeliveryStatus::Delivered;
        let ap = self.messages[msg].receiving_ap.clone();
        self.issue(EvidenceKind::ProofOfReceiving, msg, &ap);
    }

    pub fn status(&self, id: &MessageId) -> Option<DeliveryStatus> {
        self.index.get(id).map(|&m| self.messages[m].status)
    }

    pub fn attempts(&self, id: &MessageId) -> Option<u32> {
        self.index.get(id).map(|&m| self.messages[m].attempts)
    }

    pub fn inbox(&self, participant: &str) -> &[Message] {
        self.participants.get(participant).map_or(&[], |p| &p.inbox)
    }

    pub fn take_inbox(&mut self, participant: &str) -> Vec<Message> {
        self.participants
            .get_mut(participant)
            .map(|p| std::mem::take(&mut p.inbox))
            .unwrap_or_default()
    }

    pub fn message_ids(&self) -> impl Iterator<Item = &MessageId> {
        self.index.keys()
    }

    /// Counts inbox occurrences and evidence per message. Does not consult
    /// the tracked statuses for the exactly-once figures.
    pub fn audit(&self) -> DeliveryAudit {
        let mut a = DeliveryAudit {
            submitted: self.messages.len(),
            ..Default::default()
        };
        for t in &self.messages {
            match t.status {
                DeliveryStatus::Pending => a.pending += 1,
                DeliveryStatus::Delivered => a.delivered += 1,
                DeliveryStatus::NonDelivery => a.non_delivered += 1,
            }
        }
        let mut occurrences: BTreeMap<&MessageId, usize> = BTreeMap::new();
        for p in self.participants.values() {
            for m in &p.inbox {
                if !self.index.contains_key(&m.id) {
                    a.phantom_entries += 1;
                }
                *occurrences.entry(&m.id).or_default() += 1;
            }
        }
        a.duplicate_entries = occurrences.values().map(|n| n.saturating_sub(1)).sum();
        let mut proofs: BTreeMap<&MessageId, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
        for e in &self.evidence {
            match e.kind {
                EvidenceKind::ProofOfSending => proofs.entry(&e.message_id).or_default().0.push(e.sim_ms),
                EvidenceKind::ProofOfReceiving => proofs.entry(&e.message_id).or_default().1.push(e.sim_ms),
                EvidenceKind::ChangeIndication => a.change_indications += 1,
            }
        }
        for t in self.messages.iter().filter(|t| t.status == DeliveryStatus::Delivered) {
            match proofs.get(&t.message.id) {
                Some((s, r)) if s.len() == 1 && r.len() == 1 => {
                    if r[0] < s[0] {
                        a.misordered_evidence += 1;
                    }
                }
                _ => a.incomplete_evidence += 1,
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edelivery::{DelayModel, Downtime, RetryPolicy};

    fn net(config: TransportConfig) -> DeliveryNetwork {
        let mut n = DeliveryNetwork::new(config, SimDate::ymd(2020, 1, 1)).unwrap();
        n.add_access_point("ap-a", "10.0.0.1", DEFAULT_PKI).unwrap();
        n.add_access_point("ap-b", "10.0.0.2", DEFAULT_PKI).unwrap();
        n.add_participant("hospital", "ap-a", "smp-1").unwrap();
        n.add_participant("ncp", "ap-b", "smp-1").unwrap();
        n
    }

    #[test]
    fn clean_transport_delivers_on_first_attempt() {
        let mut n = net(TransportConfig::default());
        let (id, pos) = n.submit("hospital", "ncp", b"summary").unwrap();
        assert_eq!(pos.kind, EvidenceKind::ProofOfSending);
        n.run();
        assert_eq!(n.status(&id), Some(DeliveryStatus::Delivered));
        assert_eq!(n.attempts(&id), Some(1));
        assert_eq!(n.inbox("ncp").len(), 1);
        let kinds: Vec<_> = n.evidence_for(&id).iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EvidenceKind::ProofOfSending, EvidenceKind::ProofOfReceiving]);
        assert!(n.audit().is_clean());
    }

    #[test]
    fn unknown_addressee_and_distinct_ids() {
        let mut n = net(TransportConfig::default());
        assert_eq!(
            n.submit("hospital", "nobody", b"x").unwrap_err(),
            DeliveryError::AddresseeUnknown("nobody".into())
        );
        let (a, _) = n.submit("hospital", "ncp", b"same").unwrap();
        let (b, _) = n.submit("hospital", "ncp", b"same").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn total_loss_ends_in_non_delivery() {
        let mut n = net(TransportConfig {
            loss: 1.0,
            retry: RetryPolicy {
                initial_timeout_ms: 10,
                backoff_cap_ms: 100,
                max_retries: 4,
            },
            ..Default::default()
        });
        let ids: Vec<_> = (0..5).map(|_| n.submit("hospital", "ncp", b"p").unwrap().0).collect();
        n.run();
        for id in &ids {
            assert_eq!(n.status(id), Some(DeliveryStatus::NonDelivery));
            assert_eq!(n.attempts(id), Some(5));
        }
        assert!(n.inbox("ncp").is_empty());
    }

    #[test]
    fn tampered_envelope_raises_change_indication() {
        let mut n = net(TransportConfig {
            retry: RetryPolicy {
                initial_timeout_ms: 10,
                backoff_cap_ms: 10,
                max_retries: 2,
            },
            ..Default::default()
        });
        let (id, _) = n.submit("hospital", "ncp", b"lab result").unwrap();
        n.tamper(&id).unwrap();
        n.run();
        assert!(n.inbox("ncp").is_empty());
        assert_eq!(n.status(&id), Some(DeliveryStatus::NonDelivery));
        assert!(n
            .evidence_for(&id)
            .iter()
            .any(|e| e.kind == EvidenceKind::ChangeIndication));
    }

    #[test]
    fn downtime_defers_delivery_past_window() {
        let mut n = net(TransportConfig {
            downtime: vec![Downtime {
                start_ms: 0,
                end_ms: 5_000,
            }],
            delay: DelayModel::fixed(10),
            ..Default::default()
        });
        let (id, _) = n.submit("hospital", "ncp", b"x").unwrap();
        n.run();
        assert_eq!(n.status(&id), Some(DeliveryStatus::Delivered));
        let por = n
            .evidence_for(&id)
            .into_iter()
            .find(|e| e.kind == EvidenceKind::ProofOfReceiving)
            .unwrap()
            .sim_ms;
        assert!(por >= 5_000);
    }

    #[test]
    fn zero_delay_is_fifo() {
        let mut n = net(TransportConfig {
            delay: DelayModel::fixed(0),
            ..Default::default()
        });
        let ids: Vec<_> = (0..20).map(|i| n.submit("hospital", "ncp", &[i]).unwrap().0).collect();
        n.run();
        let got: Vec<_> = n.inbox("ncp").iter().map(|m| m.id.clone()).collect();
        assert_eq!(got, ids);
    }

    #[test]
    fn same_seed_same_digest() {
        let run = |seed| {
            let mut n = net(TransportConfig {
                loss: 0.3,
                duplication: 0.2,
                seed,
                ..Default::default()
            });
            for i in 0..50u8 {
                n.submit("hospital", "ncp", &[i]).unwrap();
            }
            n.run();
            n.log().digest()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn lookup_follows_moved_participant() {
        let mut n = net(TransportConfig::default());
        n.add_access_point("ap-c", "10.0.0.3", DEFAULT_PKI).unwrap();
        n.move_participant("ncp", "ap-c").unwrap();
        assert_eq!(n.discovery().lookup("ncp").unwrap().address, "10.0.0.3");
        let (id, _) = n.submit("hospital", "ncp", b"x").unwrap();
        n.run();
        assert_eq!(n.status(&id), Some(DeliveryStatus::Delivered));
    }

    #[test]
    fn qualified_mode_refuses_unqualified_pki() {
        let mut n = DeliveryNetwork::new(
            TransportConfig {
                qualified: true,
                ..Default::default()
            },
            SimDate::ymd(2020, 1, 1),
        )
        .unwrap();
        assert_eq!(
            n.add_access_point("ap-x", "10.0.0.9", TEST_PKI).unwrap_err(),
            DeliveryError::NotQualified("ap-x".into())
        );
        n.add_access_point("ap-y", "10.0.0.8", DEFAULT_PKI).unwrap();
    }
}
