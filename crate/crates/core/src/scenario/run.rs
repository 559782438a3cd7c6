//! Scenario interpreter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Debug, Write as _};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calendar::SimDate;
use crate::edelivery::{
    DelayModel, DeliveryNetwork, DeliveryStatus, Downtime, EvidenceKind, RetryPolicy, TransportConfig, DEFAULT_PKI,
    TEST_PKI,
};
use crate::eidas::{
    error_code, AuthResult, Citizen, EidasNetwork, EidasNode, FlowOutcome, NodeKind, PersonIdentity,
    RecognitionPolicy, ResponseRelay, Sector, ServiceProvider,
};
use crate::eventlog::{EventLog, LogLine};
use crate::health::{
    scan_for_markers, CitizenAccount, Consent, ContactHandles, GrantId, NcpEndpoint, Pin, Platform,
    RawDocument, RecordId, ShareMode, Source, SourceKind, Stage,
};
use crate::registry::{is_recognition_mandatory, AssuranceLevel, AttributeKind, CountryCode, FederationRegistry};
use crate::trust::options::{run_signing_option, SigningOption};
use crate::trust::{
    classify_level, extend, seal, sign, validate, AssentForm, AssentRecord, Certificate, CertificateKind,
    CreationDevice, KeyPair, Signature, SignedArtifact, Subject, TimestampAuthority, TrustedList, Validity, Verdict,
};

use super::{Directive, Scenario, ScenarioError};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario's own seed.
    pub seed: Option<u64>,
    pub strict_recognition: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectiveOutcome {
    pub index: usize,
    pub line: usize,
    pub verb: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvidenceCounts {
    pub proofs_of_sending: usize,
    pub proofs_of_receiving: usize,
    pub change_indications: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub outcomes: Vec<DirectiveOutcome>,
    pub evidence: EvidenceCounts,
    pub invariants: Vec<(String, bool)>,
    pub log: EventLog,
    pub digest: String,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed) && self.invariants.iter().all(|(_, ok)| *ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DirectiveOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} seed={}", self.scenario, self.seed);
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{} #{} line {} {}: {}",
                if o.passed { "ok  " } else { "FAIL" },
                o.index,
                o.line,
                o.verb,
                o.detail
            );
        }
        for (name, ok) in &self.invariants {
            let _ = writeln!(out, "{} invariant {name}", if *ok { "ok  " } else { "FAIL" });
        }
        let e = &self.evidence;
        let _ = writeln!(
            out,
            "evidence sending={} receiving={} change={}",
            e.proofs_of_sending, e.proofs_of_receiving, e.change_indications
        );
        let _ = writeln!(out, "log lines={} digest={}", self.log.len(), self.digest);
        let _ = writeln!(out, "result {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Enum variant name of an error, for `expect=` comparisons.
fn code(e: &impl Debug) -> String {
    let s = format!("{e:?}");
    s.split(['(', ' ', '{']).next().unwrap_or_default().to_string()
}

fn cfg(d: &Directive, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config {
        line: d.line,
        message: message.into(),
    }
}

fn opt<T: FromStr>(d: &Directive, key: &str) -> Result<Option<T>, ScenarioError>
where
    T::Err: fmt::Display,
{
    d.get(key)
        .map(|v| v.parse::<T>().map_err(|e| cfg(d, format!("{key}: {e}"))))
        .transpose()
}

fn req<T: FromStr>(d: &Directive, key: &str) -> Result<T, ScenarioError>
where
    T::Err: fmt::Display,
{
    opt(d, key)?.ok_or_else(|| cfg(d, format!("missing {key}")))
}

fn flag(d: &Directive, key: &str, default: bool) -> Result<bool, ScenarioError> {
    match d.get(key) {
        None => Ok(default),
        Some("true" | "yes") => Ok(true),
        Some("false" | "no") => Ok(false),
        Some(v) => Err(cfg(d, format!("{key}: expected true or false, got `{v}`"))),
    }
}

fn attributes(d: &Directive, key: &str) -> Result<Vec<AttributeKind>, ScenarioError> {
    d.get(key)
        .map(|v| {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|c| AttributeKind::from_code(c).ok_or_else(|| cfg(d, format!("unknown attribute `{c}`"))))
                .collect()
        })
        .unwrap_or(Ok(Vec::new()))
}

fn range(d: &Directive, s: &str) -> Result<(u64, u64), ScenarioError> {
    let bad = || cfg(d, format!("bad range `{s}`"));
    match s.split_once("..") {
        Some((a, b)) => Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)),
        None => {
            let v = s.parse().map_err(|_| bad())?;
            Ok((v, v))
        }
    }
}

struct SignerKeys {
    key: KeyPair,
    cert: Certificate,
    device: CreationDevice,
}

struct Doc {
    content: Vec<u8>,
    sig: Signature,
    signer: String,
}

struct World<'a> {
    registry: &'a FederationRegistry,
    clock: SimDate,
    seed: u64,
    rng: ChaCha8Rng,
    t_ms: u64,
    log: EventLog,
    outcomes: Vec<DirectiveOutcome>,

    eidas: EidasNetwork,
    strict: bool,
    sps: BTreeMap<String, ServiceProvider>,
    citizens: BTreeMap<String, Citizen>,

    list: TrustedList,
    tsas: BTreeMap<String, TimestampAuthority>,
    signers: BTreeMap<String, SignerKeys>,
    docs: BTreeMap<String, Doc>,

    transport: TransportConfig,
    net: Option<DeliveryNetwork>,

    platform: Option<Platform>,
    platform_participant: Option<String>,
    accounts: BTreeMap<String, CitizenAccount>,
    records: BTreeMap<String, RecordId>,
    grants: BTreeMap<String, GrantId>,
    ncps: BTreeMap<String, NcpEndpoint>,
    hcps: BTreeMap<String, SignerKeys>,
    markers: Vec<[u8; 32]>,
    hygiene_violations: usize,
    stage_regressions: usize,
}

/// Runs every directive in order. Failed expectations are recorded in the
/// report; configuration problems abort with an error.
pub fn run(sc: &Scenario, registry: &FederationRegistry, opts: &RunOptions) -> Result<RunReport, ScenarioError> {
    let seed = opts.seed.unwrap_or(sc.seed);
    let registry = registry.clone().with_clock(sc.clock);
    let mut eidas = EidasNetwork::proxy_nodes_for(&registry);
    if opts.strict_recognition {
        eidas.policy = RecognitionPolicy::Strict;
    }
    let mut w = World {
        registry: &registry,
        clock: sc.clock,
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
        t_ms: 0,
        log: EventLog::new(),
        outcomes: Vec::new(),
        eidas,
        strict: opts.strict_recognition,
        sps: BTreeMap::new(),
        citizens: BTreeMap::new(),
        list: TrustedList::new(),
        tsas: BTreeMap::new(),
        signers: BTreeMap::new(),
        docs: BTreeMap::new(),
        transport: TransportConfig {
            seed,
            ..Default::default()
        },
        net: None,
        platform: None,
        platform_participant: None,
        accounts: BTreeMap::new(),
        records: BTreeMap::new(),
        grants: BTreeMap::new(),
        ncps: BTreeMap::new(),
        hcps: BTreeMap::new(),
        markers: Vec::new(),
        hygiene_violations: 0,
        stage_regressions: 0,
    };
    w.log.push(0, "scenario", "start", &sc.name, &format!("seed={seed} clock={}", sc.clock));
    for (index, d) in sc.directives.iter().enumerate() {
        w.t_ms = (index as u64 + 1) * 1000;
        w.exec(index, d)?;
    }
    Ok(w.finish(sc, seed))
}

impl World<'_> {
    fn outcome(&mut self, index: usize, d: &Directive, passed: bool, detail: String) {
        self.log.push(
            self.t_ms,
            "scenario",
            &d.verb,
            &format!("line{}", d.line),
            &format!("{} {detail}", if passed { "ok" } else { "fail" }),
        );
        self.outcomes.push(DirectiveOutcome {
            index,
            line: d.line,
            verb: d.verb.clone(),
            passed,
            detail,
        });
    }

    fn expect(&mut self, index: usize, d: &Directive, default: &str, actual: &str, detail: String) {
        let want = d.get("expect").unwrap_or(default);
        let passed = want.eq_ignore_ascii_case(actual);
        let detail = if passed {
            format!("{detail}: {actual}")
        } else {
            format!("{detail}: expected {want}, got {actual}")
        };
        self.outcome(index, d, passed, detail);
    }

    fn record_flow(&mut self, flow: &FlowOutcome) {
        let corr = flow.correlation_id.to_string();
        for hop in &flow.trace {
            self.log.push(
                self.t_ms + hop.sim_ms,
                &format!("eidas:{}", hop.actor),
                &hop.action,
                &corr,
                &format!("step={}", hop.step),
            );
        }
    }

    fn net(&mut self, d: &Directive) -> Result<&mut DeliveryNetwork, ScenarioError> {
        if self.net.is_none() {
            let net = DeliveryNetwork::new(self.transport.clone(), self.clock).map_err(|e| cfg(d, e.to_string()))?;
            self.net = Some(net);
        }
        Ok(self.net.as_mut().expect("just created"))
    }

    fn platform(&mut self) -> &mut Platform {
        let clock = self.clock;
        let seed = self.seed;
        let list = self.list.clone();
        let p = self.platform.get_or_insert_with(|| Platform::new(clock, seed ^ 0x5eed));
        p.clock = clock;
        p.trusted_list = list;
        p
    }

    fn payload(&mut self, d: &Directive) -> Result<Vec<u8>, ScenarioError> {
        let mut payload = d.get("content").unwrap_or_default().as_bytes().to_vec();
        let markers: usize = opt(d, "markers")?.unwrap_or(0);
        for _ in 0..markers {
            let mut m = [0u8; 32];
            self.rng.fill_bytes(&mut m);
            payload.extend_from_slice(b" [");
            payload.extend_from_slice(&m);
            payload.push(b']');
            self.markers.push(m);
        }
        if let Some(size) = opt::<usize>(d, "size")? {
            let mut filler = vec![0u8; size];
            self.rng.fill_bytes(&mut filler);
            payload.extend_from_slice(&filler);
        }
        Ok(payload)
    }

    fn exec(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        match d.verb.as_str() {
            "policy" => {
                if let Some(r) = d.get("recognition") {
                    let policy = match r {
                        "strict" => RecognitionPolicy::Strict,
                        "lenient" => RecognitionPolicy::Lenient,
                        other => return Err(cfg(d, format!("unknown recognition policy `{other}`"))),
                    };
                    if !self.strict {
                        self.eidas.policy = policy;
                    }
                }
                if let Some(r) = d.get("relay") {
                    self.eidas.relay = match r {
                        "direct" => ResponseRelay::Direct,
                        "via-idp" => ResponseRelay::ViaNationalIdp,
                        other => return Err(cfg(d, format!("unknown relay `{other}`"))),
                    };
                }
            }
            "node" => {
                let state: CountryCode = req(d, "state")?;
                let kind = match d.get("kind") {
                    Some("proxy") => NodeKind::ProxyBased,
                    Some("middleware") => NodeKind::MiddlewareBased,
                    other => return Err(cfg(d, format!("unknown node kind {other:?}"))),
                };
                self.eidas.add_node(EidasNode::new(state, kind));
            }
            "advance" => {
                let days: i64 = req(d, "days")?;
                self.clock = self.clock.add_days(days);
                self.log.push(self.t_ms, "scenario", "clock", "-", &self.clock.to_string());
            }
            "sp" => {
                let loa: AssuranceLevel = opt(d, "loa")?.unwrap_or(AssuranceLevel::Substantial);
                let sector = match d.get("sector").unwrap_or("public") {
                    "public" => Sector::Public,
                    "private" => Sector::NonPublic,
                    other => return Err(cfg(d, format!("unknown sector `{other}`"))),
                };
                let mut sp = ServiceProvider::new(req::<String>(d, "id")?, req(d, "home")?, loa, sector);
                for k in attributes(d, "request")? {
                    sp = sp.request(k);
                }
                for k in attributes(d, "require")? {
                    sp = sp.require(k);
                }
                self.sps.insert(sp.id.clone(), sp);
            }
            "citizen" => {
                let id: String = req(d, "id")?;
                let origin: CountryCode = req(d, "origin")?;
                let mut identity = PersonIdentity::new(
                    req::<String>(d, "family")?,
                    req::<String>(d, "first")?,
                    req(d, "dob")?,
                    format!("{origin}/{id}"),
                );
                for (key, kind) in [
                    ("birth-name", AttributeKind::BirthName),
                    ("birth-place", AttributeKind::PlaceOfBirth),
                    ("address", AttributeKind::CurrentAddress),
                    ("gender", AttributeKind::Gender),
                ] {
                    if let Some(v) = d.get(key) {
                        identity = identity.with(kind, v);
                    }
                }
                let credential = d.get("credential").unwrap_or("secret").to_string();
                self.citizens.insert(id.clone(), Citizen::new(id, origin, identity, credential));
            }
            "auth" => self.auth(i, d)?,
            "recognition" => {
                let state: CountryCode = req(d, "state")?;
                let at: SimDate = req(d, "at")?;
                let want = flag(d, "expect", true)?;
                let actual = self
                    .registry
                    .scheme(state)
                    .map(|s| is_recognition_mandatory(&s.notification, at))
                    .unwrap_or(false);
                self.outcome(
                    i,
                    d,
                    want == actual,
                    format!("{state} mandatory at {at}: {actual} (expected {want})"),
                );
            }
            "tsp" => {
                let state: CountryCode = req(d, "state")?;
                self.list.add_tsp(state, req::<String>(d, "id")?, flag(d, "qualified", true)?);
            }
            "tsa" => {
                let id: String = req(d, "id")?;
                let q = flag(d, "qualified", true)?;
                let tsa = TimestampAuthority::new(id.clone(), q, opt(d, "months")?.unwrap_or(24), KeyPair::generate(&mut self.rng));
                self.list.add_authority(id.clone(), q, tsa.key().public().clone());
                self.tsas.insert(id, tsa);
            }
            "signer" => {
                let id: String = req(d, "id")?;
                let keys = self.issue_signer(d, &id, d.get("kind").unwrap_or("signature"))?;
                self.signers.insert(id, keys);
            }
            "sign" => {
                let signer_id: String = req(d, "signer")?;
                let content = d.get("content").unwrap_or_default().as_bytes().to_vec();
                let on: SimDate = opt(d, "on")?.unwrap_or(self.clock);
                let s = &self.signers[&signer_id];
                let made = match s.cert.kind {
                    CertificateKind::ForSignature => sign(&content, &s.key, &s.cert, &s.device, on),
                    CertificateKind::ForSeal => seal(&content, &s.key, &s.cert, &s.device, on),
                };
                let actual = match made {
                    Ok(sig) => {
                        self.docs.insert(
                            req(d, "doc")?,
                            Doc {
                                content,
                                sig,
                                signer: signer_id.clone(),
                            },
                        );
                        "ok".to_string()
                    }
                    Err(e) => code(&e),
                };
                self.expect(i, d, "ok", &actual, format!("sign by {signer_id}"));
            }
            "tamper" => {
                let doc = self.docs.get_mut(d.get("doc").unwrap_or_default()).expect("checked by parser");
                match doc.content.last_mut() {
                    Some(b) => *b ^= 0x01,
                    None => doc.content.push(0),
                }
            }
            "tamper-suite" => self.tamper_suite(i, d)?,
            "extend" => {
                let doc_id: String = req(d, "doc")?;
                let tsa_id: String = req(d, "tsa")?;
                let on: SimDate = opt(d, "on")?.unwrap_or(self.clock);
                let doc = &self.docs[&doc_id];
                let actual = match extend(&doc.sig, &self.tsas[&tsa_id], &self.list, on) {
                    Ok(sig) => {
                        self.docs.get_mut(&doc_id).expect("present").sig = sig;
                        "ok".to_string()
                    }
                    Err(e) => code(&e),
                };
                self.expect(i, d, "ok", &actual, format!("extend {doc_id} on {on}"));
            }
            "validate" => {
                let doc_id: String = req(d, "doc")?;
                let at: SimDate = opt(d, "at")?.unwrap_or(self.clock);
                let doc = &self.docs[&doc_id];
                let verdict = validate(&doc.content, &doc.sig, &self.list, at);
                self.expect(i, d, "valid", verdict.label(), format!("{doc_id} at {at} ({verdict})"));
            }
            "level" => {
                let doc_id: String = req(d, "doc")?;
                let doc = &self.docs[&doc_id];
                let s = &self.signers[&doc.signer];
                let level = classify_level(
                    &SignedArtifact::Digital(doc.sig.clone()),
                    self.list.certificate(doc.sig.signer),
                    Some(&s.device),
                    &self.list,
                );
                self.expect(i, d, "qualified", &level.to_string(), format!("level of {doc_id}"));
            }
            "option" => {
                let option: SigningOption = req(d, "n")?;
                let out = run_signing_option(option, b"consent to research use", self.clock, &mut self.rng)
                    .map_err(|e| cfg(d, e.to_string()))?;
                let mut passed = out.verdict.is_valid();
                if let Some(l) = d.get("expect-level") {
                    passed &= out.level.to_string() == l;
                }
                if d.get("expect-left").is_some() {
                    passed &= out.content_left_platform == flag(d, "expect-left", false)?;
                }
                if d.get("expect-listed").is_some() {
                    passed &= out.platform_listed == flag(d, "expect-listed", false)?;
                }
                self.outcome(
                    i,
                    d,
                    passed,
                    format!(
                        "option {} ({option}): {} {}, content left platform={}, platform listed={}",
                        option.number(),
                        out.level,
                        out.verdict,
                        out.content_left_platform,
                        out.platform_listed
                    ),
                );
            }
            "transport" => {
                if self.net.is_some() {
                    return Err(cfg(d, "transport must come before the first access point"));
                }
                let mut t = self.transport.clone();
                t.loss = opt(d, "loss")?.unwrap_or(t.loss);
                t.duplication = opt(d, "dup")?.unwrap_or(t.duplication);
                t.corruption = opt(d, "corruption")?.unwrap_or(t.corruption);
                if let Some(s) = d.get("delay") {
                    let (min_ms, max_ms) = range(d, s)?;
                    t.delay = DelayModel { min_ms, max_ms };
                }
                if let Some(s) = d.get("downtime") {
                    t.downtime = s
                        .split(',')
                        .map(|w| range(d, w).map(|(start_ms, end_ms)| Downtime { start_ms, end_ms }))
                        .collect::<Result<_, _>>()?;
                }
                t.retry = RetryPolicy {
                    initial_timeout_ms: opt(d, "timeout")?.unwrap_or(t.retry.initial_timeout_ms),
                    backoff_cap_ms: opt(d, "cap")?.unwrap_or(t.retry.backoff_cap_ms),
                    max_retries: opt(d, "retries")?.unwrap_or(t.retry.max_retries),
                };
                t.dedup_retention = opt(d, "retention")?;
                t.qualified = flag(d, "qualified", t.qualified)?;
                t.seed = opt(d, "seed")?.unwrap_or(t.seed);
                t.check().map_err(|e| cfg(d, e.to_string()))?;
                self.transport = t;
            }
            "ap" => {
                let id: String = req(d, "id")?;
                let address = d.get("address").map_or_else(|| format!("ap://{id}"), str::to_string);
                let pki = match d.get("pki").unwrap_or("qualified") {
                    "qualified" => DEFAULT_PKI,
                    "test" => TEST_PKI,
                    other => return Err(cfg(d, format!("unknown pki `{other}`"))),
                };
                self.net(d)?.add_access_point(&id, &address, pki).map_err(|e| cfg(d, e.to_string()))?;
            }
            "participant" => {
                let smp = d.get("smp").unwrap_or("smp.sim").to_string();
                let (id, ap): (String, String) = (req(d, "id")?, req(d, "ap")?);
                self.net(d)?.add_participant(&id, &ap, &smp).map_err(|e| cfg(d, e.to_string()))?;
            }
            "send" => {
                let (from, to): (String, String) = (req(d, "from")?, req(d, "to")?);
                let count: usize = opt(d, "count")?.unwrap_or(1);
                let size: usize = opt(d, "size")?.unwrap_or(64);
                let mut failures = Vec::new();
                for _ in 0..count {
                    let mut payload = vec![0u8; size];
                    self.rng.fill_bytes(&mut payload);
                    if let Err(e) = self.net(d)?.submit(&from, &to, &payload) {
                        failures.push(code(&e));
                    }
                }
                self.outcome(
                    i,
                    d,
                    failures.is_empty(),
                    format!("{count} submitted from {from} to {to}, {} refused", failures.len()),
                );
            }
            "deliver" => {
                let net = self.net(d)?;
                net.run();
                let statuses: Vec<_> = net.message_ids().map(|id| net.status(id)).collect();
                let delivered = statuses.iter().filter(|s| **s == Some(DeliveryStatus::Delivered)).count();
                let undelivered = statuses.iter().filter(|s| **s == Some(DeliveryStatus::NonDelivery)).count();
                let mut passed = true;
                if let Some(n) = opt::<usize>(d, "expect-delivered")? {
                    passed &= n == delivered;
                }
                if let Some(n) = opt::<usize>(d, "expect-undelivered")? {
                    passed &= n == undelivered;
                }
                let t = self.net.as_ref().expect("exists").now_ms();
                self.outcome(
                    i,
                    d,
                    passed,
                    format!("delivered={delivered} undelivered={undelivered} at {t} ms"),
                );
            }
            "audit" => {
                let want = flag(d, "exactly-once", true)?;
                let net = self.net(d)?;
                let (clean, detail) = exactly_once(net);
                self.outcome(i, d, clean == want, detail);
            }
            "platform" => {
                let (participant, ap): (String, String) = (req(d, "participant")?, req(d, "ap")?);
                let smp = d.get("smp").unwrap_or("smp.sim").to_string();
                self.net(d)?.add_participant(&participant, &ap, &smp).map_err(|e| cfg(d, e.to_string()))?;
                self.platform_participant = Some(participant);
                let age_gate = flag(d, "age-gate", false)?;
                let seal_policy = match d.get("seal-policy").unwrap_or("warn") {
                    "warn" => crate::health::SealPolicy::StoreWithWarning,
                    "reject" => crate::health::SealPolicy::Reject,
                    other => return Err(cfg(d, format!("unknown seal policy `{other}`"))),
                };
                let consent = match d.get("consent").unwrap_or("simple") {
                    "simple" => crate::trust::SignatureLevel::Simple,
                    "advanced" => crate::trust::SignatureLevel::Advanced,
                    "qualified" => crate::trust::SignatureLevel::Qualified,
                    other => return Err(cfg(d, format!("unknown consent level `{other}`"))),
                };
                let p = self.platform();
                p.policy.age_gate = age_gate;
                p.policy.seal_policy = seal_policy;
                p.policy.min_consent_level = consent;
            }
            "account" => self.account(i, d)?,
            "upload" => {
                let payload = self.payload(d)?;
                let acct = self.accounts[d.get("account").unwrap_or_default()].clone();
                let record = crate::health::HealthRecord::new("upload", payload);
                let mut rng = ChaCha8Rng::from_rng(&mut self.rng).expect("seeding");
                let rid = self.platform().upload_record(&acct, &record, &mut rng).map_err(|e| cfg(d, e.to_string()))?;
                self.records.insert(req(d, "record")?, rid);
            }
            "share" => self.share(i, d)?,
            "revoke" => {
                let owner = self.accounts[d.get("owner").unwrap_or_default()].id.clone();
                let grant = self.grants[d.get("grant").unwrap_or_default()];
                self.platform().revoke(&owner, grant).map_err(|e| cfg(d, e.to_string()))?;
            }
            "read" => {
                let acct = self.accounts[d.get("account").unwrap_or_default()].clone();
                let rid = self.records[d.get("record").unwrap_or_default()];
                let actual = match self.platform().read(&acct, rid) {
                    Ok(_) => "ok".to_string(),
                    Err(crate::health::HealthError::AccessDenied { .. }) => "denied".to_string(),
                    Err(e) => code(&e),
                };
                self.expect(i, d, "ok", &actual, format!("{} reads {rid}", acct.id));
            }
            "hcp" => {
                let id: String = req(d, "id")?;
                let keys = self.issue_signer(d, &id, "seal")?;
                let serial = keys.cert.serial;
                self.hcps.insert(id.clone(), keys);
                self.platform().register_source(Source {
                    id,
                    kind: SourceKind::Hcp,
                    seal_certificate: Some(serial),
                });
            }
            "ingest" => self.ingest(i, d)?,
            "ncp" => {
                let (id, ap): (String, String) = (req(d, "id")?, req(d, "ap")?);
                let smp = d.get("smp").unwrap_or("smp.sim").to_string();
                self.net(d)?.add_participant(&id, &ap, &smp).map_err(|e| cfg(d, e.to_string()))?;
                self.platform().register_source(Source {
                    id: id.clone(),
                    kind: SourceKind::Ncp,
                    seal_certificate: None,
                });
                self.ncps.insert(
                    id.clone(),
                    NcpEndpoint {
                        participant: id,
                        documents: BTreeMap::new(),
                    },
                );
            }
            "fetch" => self.fetch(i, d)?,
            "donate" => self.donate(i, d)?,
            "scan" => {
                let want: usize = opt(d, "expect")?.unwrap_or(0);
                let (hits, secrets) = self.scan();
                self.outcome(
                    i,
                    d,
                    hits == want && secrets == 0,
                    format!("{hits} of {} markers found, {secrets} client keys found", self.markers.len()),
                );
            }
            other => return Err(cfg(d, format!("directive `{other}` is not executable"))),
        }
        Ok(())
    }

    fn issue_signer(&mut self, d: &Directive, id: &str, kind: &str) -> Result<SignerKeys, ScenarioError> {
        let tsp: String = req(d, "tsp")?;
        let subject_name = d.get("subject").unwrap_or(id).to_string();
        let (subject, cert_kind) = match kind {
            "signature" => (Subject::NaturalPerson(subject_name), CertificateKind::ForSignature),
            "seal" => (Subject::LegalPerson(subject_name), CertificateKind::ForSeal),
            other => return Err(cfg(d, format!("unknown signer kind `{other}`"))),
        };
        let from: SimDate = opt(d, "from")?.unwrap_or(self.clock.add_months(-1));
        let until: SimDate = opt(d, "until")?.unwrap_or(self.clock.add_years(2));
        let validity = Validity::new(from, until).map_err(|e| cfg(d, e.to_string()))?;
        let key = KeyPair::generate(&mut self.rng);
        let cert = self
            .list
            .issue_certificate(&tsp, subject, key.public().clone(), cert_kind, validity, flag(d, "qualified", true)?)
            .map_err(|e| cfg(d, e.to_string()))?
            .certificate;
        let device_qualified = match d.get("device").unwrap_or("qualified") {
            "qualified" => true,
            "software" | "plain" => false,
            other => return Err(cfg(d, format!("unknown device `{other}`"))),
        };
        let device = CreationDevice::new(format!("{id}-device"), device_qualified).holding(cert.serial);
        Ok(SignerKeys { key, cert, device })
    }

    fn auth(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let sp = self.sps[d.get("sp").unwrap_or_default()].clone();
        let citizen = self.citizens[d.get("citizen").unwrap_or_default()].clone();
        let credential = d.get("credential").unwrap_or(citizen.credential()).to_string();
        let flow = self
            .eidas
            .run_full_flow(self.registry, &sp, &citizen, &credential, self.clock, &mut self.rng);
        self.record_flow(&flow);
        let actual = match &flow.result {
            AuthResult::Success { .. } => "success".to_string(),
            AuthResult::Failure { error, .. } => error_code(error).to_string(),
        };
        let want = d.get("expect").unwrap_or("success");
        let mut passed = want.eq_ignore_ascii_case(&actual);
        let steps: BTreeSet<u8> = flow.trace.iter().map(|h| h.step).collect();
        if let Some(n) = opt::<usize>(d, "hops")? {
            passed &= flow.trace.len() == n;
            if flow.result.is_success() {
                passed &= steps == (1..=8).collect();
            }
        }
        let identity = flow.result.identity();
        for k in attributes(d, "absent")? {
            passed &= identity.is_some_and(|p| p.value(k).is_none());
        }
        for k in attributes(d, "present")? {
            passed &= identity.is_some_and(|p| p.value(k).is_some());
        }
        let attrs = identity
            .map(|p| p.attributes().iter().map(|k| k.code()).collect::<Vec<_>>().join(","))
            .unwrap_or_default();
        self.outcome(
            i,
            d,
            passed,
            format!(
                "{} -> {}: {actual} (expected {want}), {} hops, attributes [{attrs}]",
                citizen.origin,
                sp.home_state,
                flow.trace.len()
            ),
        );
        Ok(())
    }

    fn tamper_suite(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let doc_id: String = req(d, "doc")?;
        let cases: usize = opt(d, "cases")?.unwrap_or(1000);
        let at: SimDate = opt(d, "at")?.unwrap_or(self.clock);
        let doc = &self.docs[&doc_id];
        let mut invalid = 0;
        for _ in 0..cases {
            let (content, sig) = mutate(&doc.content, &doc.sig, &mut self.rng);
            if matches!(validate(&content, &sig, &self.list, at), Verdict::Invalid(_)) {
                invalid += 1;
            }
        }
        self.outcome(i, d, invalid == cases, format!("{invalid}/{cases} tampered variants invalid"));
        Ok(())
    }

    fn account(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let handles = ContactHandles {
            email: d.get("email").map(str::to_string),
            phone: d.get("phone").map(str::to_string),
        };
        let eid = match (d.get("eid-sp"), d.get("eid-citizen")) {
            (Some(sp), Some(c)) => {
                let sp = self.sps[sp].clone();
                let citizen = self.citizens[c].clone();
                let flow = self.eidas.run_full_flow(
                    self.registry,
                    &sp,
                    &citizen,
                    citizen.credential(),
                    self.clock,
                    &mut self.rng,
                );
                self.record_flow(&flow);
                Some(flow.result)
            }
            (None, None) => None,
            _ => return Err(cfg(d, "eid-sp and eid-citizen go together")),
        };
        let mut rng = ChaCha8Rng::from_rng(&mut self.rng).expect("seeding");
        let id: String = req(d, "id")?;
        let actual = match self.platform().register_citizen(handles, eid.as_ref(), &mut rng) {
            Ok(acct) => {
                let s = if acct.is_validated() { "validated" } else { "unvalidated" };
                self.accounts.insert(id.clone(), acct);
                s.to_string()
            }
            Err(e) => code(&e),
        };
        self.expect(i, d, "unvalidated", &actual, format!("account {id}"));
        Ok(())
    }

    fn share(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let owner = self.accounts[d.get("owner").unwrap_or_default()].clone();
        let grantee = self.accounts[d.get("grantee").unwrap_or_default()].id.clone();
        let records: Vec<RecordId> = d
            .get("records")
            .unwrap_or_default()
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|r| self.records[r.trim()])
            .collect();
        let mode: ShareMode = opt(d, "mode")?.unwrap_or(ShareMode::InPerson);
        let matching = match d.get("pin").unwrap_or("match") {
            "match" => true,
            "wrong" => false,
            other => return Err(cfg(d, format!("pin must be match or wrong, got `{other}`"))),
        };
        let mut rng = ChaCha8Rng::from_rng(&mut self.rng).expect("seeding");
        let result = self.platform().handshake_share(
            &owner,
            &grantee,
            mode,
            &records,
            |pin| {
                if matching {
                    pin.clone()
                } else {
                    // Any other six digits.
                    let n: u32 = pin.0.parse().unwrap_or(0);
                    Pin(format!("{:06}", (n + 1) % 1_000_000))
                }
            },
            &mut rng,
        );
        let actual = match result {
            Ok(g) => {
                if let Some(name) = d.get("grant") {
                    self.grants.insert(name.to_string(), g.id);
                }
                "ok".to_string()
            }
            Err(e) => code(&e),
        };
        self.expect(i, d, "ok", &actual, format!("{} shares {} records with {grantee} ({mode})", owner.id, records.len()));
        Ok(())
    }

    fn ingest(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let source: String = req(d, "source")?;
        let acct = self.accounts[d.get("account").unwrap_or_default()].id.clone();
        let mut payload = self.payload(d)?;
        let sealed = flag(d, "sealed", self.hcps.contains_key(&source))?;
        let mut raw = RawDocument::new("cda", payload.clone());
        if sealed {
            let k = self
                .hcps
                .get(&source)
                .ok_or_else(|| cfg(d, format!("source {source} has no seal")))?;
            let s = seal(&payload, &k.key, &k.cert, &k.device, self.clock).map_err(|e| cfg(d, e.to_string()))?;
            raw = raw.sealed(s);
        }
        if flag(d, "tamper", false)? {
            match payload.first_mut() {
                Some(b) => *b ^= 0x20,
                None => payload.push(b'x'),
            }
            raw.payload = payload;
        }
        let p = self.platform();
        let job = p.new_job(&source, &acct, raw).map_err(|e| cfg(d, e.to_string()))?;
        let job = p.ingest(job).map_err(|e| cfg(d, e.to_string()))?;
        self.finish_job(i, d, job, "stored".into());
        Ok(())
    }

    fn finish_job(&mut self, i: usize, d: &Directive, job: crate::health::IngestionJob, prefix: String) {
        let mut ranks: Vec<u8> = job.history.iter().map(Stage::rank).collect();
        ranks.push(job.stage.rank());
        if ranks.windows(2).any(|w| w[0] >= w[1]) {
            self.stage_regressions += 1;
        }
        if let (Some(rid), Some(name)) = (job.stored_record(), d.get("record")) {
            self.records.insert(name.to_string(), rid);
        }
        let detail = match &job.stage {
            Stage::Rejected(r) => format!("job {} rejected: {r}", job.id),
            s => format!(
                "job {} {}{}{}",
                job.id,
                s.name(),
                job.provenance.as_ref().map(|p| format!(", sealed by {p}")).unwrap_or_default(),
                job.warning.as_ref().map(|w| format!(", warning: {w}")).unwrap_or_default()
            ),
        };
        let _ = prefix;
        self.expect(i, d, "stored", job.stage.name(), detail);
    }

    fn fetch(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let ncp_id: String = req(d, "ncp")?;
        let acct = self.accounts[d.get("account").unwrap_or_default()].id.clone();
        let pp = self
            .platform_participant
            .clone()
            .ok_or_else(|| cfg(d, "fetch needs a `platform` directive"))?;
        let payload = self.payload(d)?;
        let ncp = self.ncps.get_mut(&ncp_id).expect("declared");
        ncp.documents.insert(acct.clone(), RawDocument::new("patient-summary", payload));
        let ncp = ncp.clone();
        self.platform();
        let net = self.net.as_mut().ok_or_else(|| cfg(d, "no delivery network"))?;
        let platform = self.platform.as_mut().expect("created above");
        let job = match platform.ncp_fetch(net, &pp, &ncp, &acct) {
            Ok(job) => job,
            Err(e) => {
                let actual = code(&e);
                self.expect(i, d, "stored", &actual, format!("fetch from {ncp_id}"));
                return Ok(());
            }
        };
        let pos = job.evidence.iter().find(|e| e.kind == EvidenceKind::ProofOfSending);
        let por = job.evidence.iter().find(|e| e.kind == EvidenceKind::ProofOfReceiving);
        let pair_ok = matches!((pos, por), (Some(s), Some(r)) if s.sim_ms <= r.sim_ms) && job.evidence.len() == 2;
        if !pair_ok {
            self.outcome(i, d, false, format!("fetch from {ncp_id}: incomplete evidence"));
            return Ok(());
        }
        let job = platform.ingest(job).map_err(|e| cfg(d, e.to_string()))?;
        self.finish_job(i, d, job, format!("fetch from {ncp_id}"));
        Ok(())
    }

    fn donate(&mut self, i: usize, d: &Directive) -> Result<(), ScenarioError> {
        let acct = self.accounts[d.get("account").unwrap_or_default()].clone();
        let rid = self.records[d.get("record").unwrap_or_default()];
        let consent = match d.get("consent").unwrap_or("assent") {
            "none" => None,
            "assent" => Some(Consent::Assent(AssentRecord {
                form: AssentForm::Checkbox,
                statement: Platform::consent_statement(&acct.id, rid),
                given_on: self.clock,
            })),
            "signed" | "qualified" => {
                let signer = d.get("signer").ok_or_else(|| cfg(d, "signed consent needs signer"))?;
                let s = &self.signers[signer];
                let statement = Platform::consent_statement(&acct.id, rid);
                let signature =
                    sign(statement.as_bytes(), &s.key, &s.cert, &s.device, self.clock).map_err(|e| cfg(d, e.to_string()))?;
                Some(Consent::Signed {
                    signature,
                    device: s.device.clone(),
                })
            }
            other => return Err(cfg(d, format!("unknown consent `{other}`"))),
        };
        let actual = match self.platform().donate(&acct, rid, consent.as_ref()) {
            Ok(don) => {
                let mut values: Vec<String> = acct.identity.as_ref().map(PersonIdentity::values).unwrap_or_default();
                values.extend(acct.handles.values().into_iter().map(str::to_string));
                let leaks = values
                    .iter()
                    .filter(|v| !v.is_empty())
                    .filter(|v| {
                        contains(&don.document.payload, v.as_bytes()) || don.document.type_tag.contains(v.as_str())
                    })
                    .count();
                if leaks > 0 {
                    self.hygiene_violations += 1;
                    "leaked".to_string()
                } else {
                    "ok".to_string()
                }
            }
            Err(e) => code(&e),
        };
        self.expect(i, d, "ok", &actual, format!("{} donates {rid}", acct.id));
        Ok(())
    }

    fn scan(&self) -> (usize, usize) {
        let Some(p) = &self.platform else { return (0, 0) };
        let dump = p.dump_store();
        let secrets: Vec<[u8; 32]> = self.accounts.values().map(|a| a.keys.secret_bytes()).collect();
        (scan_for_markers(&dump, &self.markers), scan_for_markers(&dump, &secrets))
    }

    fn finish(mut self, sc: &Scenario, seed: u64) -> RunReport {
        let mut invariants = Vec::new();
        invariants.push((
            "registry schemes consistent".to_string(),
            self.registry.schemes().all(|s| s.check().is_ok()),
        ));
        let mut evidence = EvidenceCounts::default();
        if let Some(net) = &self.net {
            let (clean, _) = exactly_once(net);
            invariants.push(("exactly-once delivery".to_string(), clean));
            for e in net.evidence() {
                match e.kind {
                    EvidenceKind::ProofOfSending => evidence.proofs_of_sending += 1,
                    EvidenceKind::ProofOfReceiving => evidence.proofs_of_receiving += 1,
                    EvidenceKind::ChangeIndication => evidence.change_indications += 1,
                }
            }
        }
        if self.platform.is_some() {
            let (hits, secrets) = self.scan();
            invariants.push(("zero-knowledge store".to_string(), hits == 0 && secrets == 0));
            invariants.push(("donation hygiene".to_string(), self.hygiene_violations == 0));
            invariants.push(("ingestion stages monotone".to_string(), self.stage_regressions == 0));
        }
        let end = self.t_ms + 1000;
        if let Some(net) = &self.net {
            self.log.append(net.log(), end);
        }
        if let Some(p) = &self.platform {
            self.log.append(p.log(), end);
        }
        let passed = self.outcomes.iter().all(|o| o.passed) && invariants.iter().all(|(_, ok)| *ok);
        let last = self.log.last_ms();
        self.log.push(last, "scenario", "end", &sc.name, if passed { "pass" } else { "fail" });
        let digest = self.log.digest();
        RunReport {
            scenario: sc.name.clone(),
            seed,
            outcomes: self.outcomes,
            evidence,
            invariants,
            log: self.log,
            digest,
        }
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// One random alteration of a signed document: content bits, length,
/// wholesale replacement, the signature value or the recorded digest.
fn mutate(content: &[u8], sig: &Signature, rng: &mut impl Rng) -> (Vec<u8>, Signature) {
    let mut c = content.to_vec();
    let mut s = sig.clone();
    match rng.gen_range(0..6) {
        0 if !c.is_empty() => {
            let bit = rng.gen_range(0..c.len() * 8);
            c[bit / 8] ^= 1 << (bit % 8);
        }
        1 if !c.is_empty() => {
            let n = rng.gen_range(0..c.len());
            c.truncate(n);
        }
        2 => loop {
            let mut other = vec![0u8; rng.gen_range(0..64)];
            rng.fill_bytes(&mut other);
            if other != content {
                c = other;
                break;
            }
        },
        3 => {
            let bit = rng.gen_range(0..s.value.len() * 8);
            s.value[bit / 8] ^= 1 << (bit % 8);
        }
        4 => {
            let bit = rng.gen_range(0..256);
            s.digest[bit / 8] ^= 1 << (bit % 8);
        }
        _ => c.push(rng.gen()),
    }
    (c, s)
}

/// Audit plus an independent recount of `deliver` events in the log.
fn exactly_once(net: &DeliveryNetwork) -> (bool, String) {
    let audit = net.audit();
    let mut deliveries: BTreeMap<String, usize> = BTreeMap::new();
    for line in net.log().lines() {
        let LogLine { event, subject, .. } = line;
        if event == "deliver" {
            *deliveries.entry(subject.clone()).or_default() += 1;
        }
    }
    let submitted: BTreeSet<String> = net.message_ids().map(|m| m.0.clone()).collect();
    let phantom = deliveries.keys().filter(|k| !submitted.contains(*k)).count();
    let repeated = deliveries.values().filter(|n| **n > 1).count();
    let status_mismatch = net
        .message_ids()
        .filter(|id| {
            let delivered = net.status(id) == Some(DeliveryStatus::Delivered);
            delivered != (deliveries.get(&id.0).copied().unwrap_or(0) == 1)
        })
        .count();
    let clean = audit.is_clean() && phantom == 0 && repeated == 0 && status_mismatch == 0 && audit.pending == 0;
    let detail = format!(
        "submitted={} delivered={} non-delivered={} pending={} duplicates={} phantoms={} log-repeats={} change-indications={}",
        audit.submitted,
        audit.delivered,
        audit.non_delivered,
        audit.pending,
        audit.duplicate_entries,
        audit.phantom_entries + phantom,
        repeated,
        audit.change_indications
    );
    (clean, detail)
}

#[cfg(test)]
mod tests {
    use super::super::{bundled, bundled_names, parse_scenario};
    use super::*;

    fn run_bundled(name: &str) -> RunReport {
        let sc = parse_scenario(bundled(name).unwrap()).unwrap();
        run(&sc, &FederationRegistry::bundled(), &RunOptions::default()).unwrap()
    }

    #[test]
    fn bundled_scenarios_pass() {
        for name in bundled_names() {
            if name == "edelivery_lossy" {
                continue;
            }
            let r = run_bundled(name);
            assert!(r.passed(), "{name}:\n{}", r.render());
        }
    }

    #[test]
    fn empty_scenario_is_a_no_op() {
        let sc = parse_scenario("").unwrap();
        let r = run(&sc, &FederationRegistry::bundled(), &RunOptions::default()).unwrap();
        assert!(r.passed());
        assert!(r.outcomes.is_empty());
    }

    #[test]
    fn failed_expectation_is_reported_not_raised() {
        let sc = parse_scenario(
            "scenario clock=2019-06-01\nsp id=p home=AT\ncitizen id=n origin=NL family=J first=S dob=1990-01-01\nauth sp=p citizen=n expect=success\n",
        )
        .unwrap();
        let r = run(&sc, &FederationRegistry::bundled(), &RunOptions::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.failures().next().unwrap().line, 4);
    }

    #[test]
    fn strict_recognition_rejects_recent_schemes() {
        let sc = parse_scenario(
            "scenario clock=2019-06-01\nsp id=p home=AT\ncitizen id=c origin=PT family=S first=J dob=1990-01-01\nauth sp=p citizen=c expect=RecognitionNotYetMandatory\n",
        )
        .unwrap();
        let opts = RunOptions {
            strict_recognition: true,
            ..Default::default()
        };
        assert!(run(&sc, &FederationRegistry::bundled(), &opts).unwrap().passed());
    }
}
