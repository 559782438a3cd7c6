//! Cross-border authentication between Member State eIDAS nodes.
//!
//! A service provider in one state authenticates a citizen whose eID scheme
//! belongs to another. The flow has eight steps:
//!
//! 1. the citizen asks the service provider for access,
//! 2. the service provider requests authentication from its connector,
//! 3. the service provider submits the citizen's state of origin,
//! 4. the connector creates an eIDAS request,
//! 5. the destination node lets the citizen authenticate nationally,
//! 6. the destination node returns an eIDAS response,
//! 7. the connector relays the response (directly or through the national
//!    identity provider),
//! 8. the service provider grants access.
//!
//! Every hop is recorded in an [`AuthSession`] trace that exports as
//! `seq;sim_time;actor;action;correlation_id` lines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calendar::SimDate;
use crate::registry::{
    is_recognition_mandatory, AssuranceLevel, AttributeKind, CountryCode, EidScheme,
    FederationRegistry, NotificationStatus, UidStrategy,
};

/// Simulated latency between consecutive hops.
pub const HOP_LATENCY_MS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("no eIDAS node for {0}")]
    NoNodeForState(CountryCode),
    #[error("eID scheme of {0} is not notified")]
    SchemeNotNotified(CountryCode),
    #[error("recognition of {country} not yet mandatory (from {earliest:?})")]
    RecognitionNotYetMandatory {
        country: CountryCode,
        earliest: Option<SimDate>,
    },
    #[error("scheme of {country} asserts {scheme} but {required} is required")]
    LoaInsufficient {
        country: CountryCode,
        scheme: AssuranceLevel,
        required: AssuranceLevel,
    },
    #[error("citizen credentials rejected")]
    CredentialFailure,
    #[error("required attribute {0} unavailable")]
    AttributeUnavailable(AttributeKind),
    #[error("request addressed to {expected} delivered to node {actual}")]
    RequestMisrouted {
        expected: CountryCode,
        actual: CountryCode,
    },
    #[error("session at step {actual}, expected {expected}")]
    WrongStep { expected: u8, actual: u8 },
}

/// Person identification data of the minimum data set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonIdentity {
    pub family_name: String,
    pub first_name: String,
    pub date_of_birth: SimDate,
    pub unique_identifier: String,
    pub birth_name: Option<String>,
    pub place_of_birth: Option<String>,
    pub current_address: Option<String>,
    pub gender: Option<String>,
}

impl PersonIdentity {
    pub fn new(
        family_name: impl Into<String>,
        first_name: impl Into<String>,
        date_of_birth: SimDate,
        unique_identifier: impl Into<String>,
    ) -> Self {
        Self {
            family_name: family_name.into(),
            first_name: first_name.into(),
            date_of_birth,
            unique_identifier: unique_identifier.into(),
            birth_name: None,
            place_of_birth: None,
            current_address: None,
            gender: None,
        }
    }

    pub fn value(&self, kind: AttributeKind) -> Option<String> {
        match kind {
            AttributeKind::FamilyName => Some(self.family_name.clone()),
            AttributeKind::FirstName => Some(self.first_name.clone()),
            AttributeKind::DateOfBirth => Some(self.date_of_birth.to_string()),
            AttributeKind::UniqueIdentifier => Some(self.unique_identifier.clone()),
            AttributeKind::BirthName => self.birth_name.clone(),
            AttributeKind::PlaceOfBirth => self.place_of_birth.clone(),
            AttributeKind::CurrentAddress => self.current_address.clone(),
            AttributeKind::Gender => self.gender.clone(),
        }
    }

    fn optional_mut(&mut self, kind: AttributeKind) -> Option<&mut Option<String>> {
        match kind {
            AttributeKind::BirthName => Some(&mut self.birth_name),
            AttributeKind::PlaceOfBirth => Some(&mut self.place_of_birth),
            AttributeKind::CurrentAddress => Some(&mut self.current_address),
            AttributeKind::Gender => Some(&mut self.gender),
            _ => None,
        }
    }

    /// Sets an additional attribute. Mandatory attributes are fields and are
    /// ignored here.
    pub fn with(mut self, kind: AttributeKind, value: impl Into<String>) -> Self {
        if let Some(slot) = self.optional_mut(kind) {
            *slot = Some(value.into());
        }
        self
    }

    /// Attribute kinds carrying a value.
    pub fn attributes(&self) -> BTreeSet<AttributeKind> {
        AttributeKind::ALL
            .into_iter()
            .filter(|k| self.value(*k).is_some())
            .collect()
    }

    /// All attribute values as strings, for scanning.
    pub fn values(&self) -> Vec<String> {
        AttributeKind::ALL.into_iter().filter_map(|k| self.value(k)).collect()
    }

    /// Copy keeping only `keep` among the additional attributes. Mandatory
    /// attributes are always kept.
    pub fn filtered(&self, keep: &BTreeSet<AttributeKind>) -> Self {
        let mut out = self.clone();
        for kind in AttributeKind::ALL {
            if !kind.is_mandatory() && !keep.contains(&kind) {
                if let Some(slot) = out.optional_mut(kind) {
                    *slot = None;
                }
            }
        }
        out
    }
}

/// A citizen enrolled in a national eID scheme.
#[derive(Debug, Clone)]
pub struct Citizen {
    pub id: String,
    pub origin: CountryCode,
    pub identity: PersonIdentity,
    /// Secret bound to the eID means; feeds unique-identifier derivation.
    pub secret: Vec<u8>,
    credential: String,
}

impl Citizen {
    pub fn new(
        id: impl Into<String>,
        origin: CountryCode,
        identity: PersonIdentity,
        credential: impl Into<String>,
    ) -> Self {
        let id = id.into();
        let secret = Sha256::digest(format!("eid-secret:{origin}:{id}")).to_vec();
        Self {
            id,
            origin,
            identity,
            secret,
            credential: credential.into(),
        }
    }

    pub fn verify_credential(&self, presented: &str) -> bool {
        self.credential == presented
    }

    pub fn credential(&self) -> &str {
        &self.credential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sector {
    Public,
    NonPublic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceProvider {
    pub id: String,
    pub home_state: CountryCode,
    requested: BTreeSet<AttributeKind>,
    required: BTreeSet<AttributeKind>,
    pub required_loa: AssuranceLevel,
    pub sector: Sector,
}

impl ServiceProvider {
    /// A provider requesting the four mandatory attributes.
    pub fn new(
        id: impl Into<String>,
        home_state: CountryCode,
        required_loa: AssuranceLevel,
        sector: Sector,
    ) -> Self {
        Self {
            id: id.into(),
            home_state,
            requested: AttributeKind::mandatory_set(),
            required: BTreeSet::new(),
            required_loa,
            sector,
        }
    }

    /// Requests an additional attribute; absent values are tolerated.
    pub fn request(mut self, kind: AttributeKind) -> Self {
        self.requested.insert(kind);
        self
    }

    /// Requests an attribute and fails the flow when the scheme cannot
    /// supply it.
    pub fn require(mut self, kind: AttributeKind) -> Self {
        self.requested.insert(kind);
        self.required.insert(kind);
        self
    }

    pub fn requested(&self) -> &BTreeSet<AttributeKind> {
        &self.requested
    }

    pub fn required(&self) -> &BTreeSet<AttributeKind> {
        &self.required
    }

    /// Scope of pseudonymous identifiers: the requesting state for public
    /// bodies, the provider itself otherwise.
    pub fn relying_party(&self) -> String {
        match self.sector {
            Sector::Public => format!("state:{}", self.home_state),
            Sector::NonPublic => format!("sp:{}", self.id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    ProxyBased,
    MiddlewareBased,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EidasNode {
    pub state: CountryCode,
    pub kind: NodeKind,
    pub connector: String,
    pub service: String,
}

impl EidasNode {
    pub fn new(state: CountryCode, kind: NodeKind) -> Self {
        let cc = state.as_str().to_ascii_lowercase();
        let service = match kind {
            NodeKind::ProxyBased => format!("proxy.{cc}.eidas.sim"),
            NodeKind::MiddlewareBased => format!("middleware.{cc}.eidas.sim"),
        };
        Self {
            state,
            kind,
            connector: format!("connector.{cc}.eidas.sim"),
            service,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RecognitionPolicy {
    /// Notified schemes are accepted before recognition is mandatory.
    #[default]
    Lenient,
    /// Only schemes past the 12-month mandatory-recognition date.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ResponseRelay {
    #[default]
    Direct,
    ViaNationalIdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CorrelationId(pub [u8; 16]);

impl CorrelationId {
    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Actor {
    Citizen,
    ServiceProvider(String),
    NationalIdp(CountryCode),
    Connector(CountryCode),
    ProxyService(CountryCode),
    MiddlewareService(CountryCode),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Citizen => f.write_str("citizen"),
            Actor::ServiceProvider(id) => write!(f, "sp:{id}"),
            Actor::NationalIdp(cc) => write!(f, "idp:{cc}"),
            Actor::Connector(cc) => write!(f, "connector:{cc}"),
            Actor::ProxyService(cc) => write!(f, "proxy:{cc}"),
            Actor::MiddlewareService(cc) => write!(f, "middleware:{cc}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub seq: u32,
    pub step: u8,
    pub sim_ms: u64,
    pub actor: Actor,
    pub action: String,
    pub correlation_id: CorrelationId,
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{};{};{};{};{}",
            self.seq, self.sim_ms, self.actor, self.action, self.correlation_id
        )
    }
}

/// Renders a trace in the line export format.
pub fn export_trace(hops: &[Hop]) -> String {
    hops.iter().map(|h| format!("{h}\n")).collect()
}

/// Per-flow state: step counter and hop trace.
#[derive(Debug, Clone)]
pub struct AuthSession {
    pub correlation_id: CorrelationId,
    pub sp: ServiceProvider,
    pub origin: CountryCode,
    pub clock: SimDate,
    step: u8,
    now_ms: u64,
    trace: Vec<Hop>,
}

impl AuthSession {
    pub fn step(&self) -> u8 {
        self.step
    }

    pub fn trace(&self) -> &[Hop] {
        &self.trace
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn record(&mut self, step: u8, actor: Actor, action: impl Into<String>) {
        debug_assert!(step >= self.step, "steps never decrease");
        self.now_ms += HOP_LATENCY_MS;
        self.step = step;
        self.trace.push(Hop {
            seq: self.trace.len() as u32 + 1,
            step,
            sim_ms: self.now_ms,
            actor,
            action: action.into(),
            correlation_id: self.correlation_id,
        });
    }

    fn expect_step(&self, expected: u8) -> Result<(), AuthError> {
        if self.step == expected {
            Ok(())
        } else {
            Err(AuthError::WrongStep {
                expected,
                actual: self.step,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EidasRequest {
    pub sp_id: String,
    pub origin_state: CountryCode,
    pub destination_state: CountryCode,
    pub requested: BTreeSet<AttributeKind>,
    pub required: BTreeSet<AttributeKind>,
    pub required_loa: AssuranceLevel,
    pub relying_party: String,
    pub correlation_id: CorrelationId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthOutcome {
    Success(PersonIdentity),
    Failure(AuthError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EidasResponse {
    pub correlation_id: CorrelationId,
    pub outcome: AuthOutcome,
    pub asserting_scheme: CountryCode,
    pub assurance: AssuranceLevel,
}

/// Final result of a complete flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthResult {
    Success {
        identity: PersonIdentity,
        asserting_scheme: CountryCode,
        assurance: AssuranceLevel,
    },
    Failure {
        step: u8,
        error: AuthError,
    },
}

impl AuthResult {
    pub fn is_success(&self) -> bool {
        matches!(self, AuthResult::Success { .. })
    }

    pub fn identity(&self) -> Option<&PersonIdentity> {
        match self {
            AuthResult::Success { identity, .. } => Some(identity),
            AuthResult::Failure { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&AuthError> {
        match self {
            AuthResult::Success { .. } => None,
            AuthResult::Failure { error, .. } => Some(error),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub correlation_id: CorrelationId,
    pub result: AuthResult,
    pub trace: Vec<Hop>,
}

/// Derives the cross-border unique identifier for a citizen.
///
/// Static schemes hand out the same persistent code to every relying party;
/// pseudonym schemes key a SHA-256 HMAC with the citizen secret over the
/// relying party.
pub fn derive_unique_identifier(scheme: &EidScheme, citizen_secret: &[u8], relying_party: &str) -> String {
    let digest = match scheme.uid_strategy {
        UidStrategy::Static => {
            let mut h = Sha256::new();
            h.update(b"static-uid:");
            h.update(citizen_secret);
            h.finalize().to_vec()
        }
        UidStrategy::RelyingPartyPseudonym => {
            let mut mac = Hmac::<Sha256>::new_from_slice(citizen_secret).expect("hmac accepts any key length");
            mac.update(b"rp-pseudonym:");
            mac.update(relying_party.as_bytes());
            mac.finalize().into_bytes().to_vec()
        }
    };
    format!("{}/{}", scheme.member_state, hex::encode(digest))
}

/// The set of eIDAS nodes plus network-wide policy switches.
#[derive(Debug, Clone, Default)]
pub struct EidasNetwork {
    nodes: BTreeMap<CountryCode, EidasNode>,
    pub policy: RecognitionPolicy,
    pub relay: ResponseRelay,
}

impl EidasNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// One proxy-based node per state in the registry.
    pub fn proxy_nodes_for(registry: &FederationRegistry) -> Self {
        let mut net = Self::new();
        for scheme in registry.schemes() {
            net.add_node(EidasNode::new(scheme.member_state, NodeKind::ProxyBased));
        }
        net
    }

    /// Adds or replaces the node of a state.
    pub fn add_node(&mut self, node: EidasNode) {
        self.nodes.insert(node.state, node);
    }

    pub fn node(&self, state: CountryCode) -> Result<&EidasNode, AuthError> {
        self.nodes.get(&state).ok_or(AuthError::NoNodeForState(state))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EidasNode> {
        self.nodes.values()
    }

    /// Number of hops a successful flow produces between `sp_state` and
    /// `origin` under the current relay setting.
    pub fn expected_hops(&self, origin: CountryCode) -> usize {
        let mut hops = 8;
        if matches!(self.nodes.get(&origin), Some(n) if n.kind == NodeKind::MiddlewareBased) {
            hops += 1;
        }
        if self.relay == ResponseRelay::ViaNationalIdp {
            hops += 1;
        }
        hops
    }

    /// Steps 1 to 3.
    pub fn initiate_authentication(
        &self,
        sp: &ServiceProvider,
        citizen_origin: CountryCode,
        clock: SimDate,
        correlation_id: CorrelationId,
    ) -> Result<AuthSession, AuthError> {
        self.node(sp.home_state)?;
        let mut session = AuthSession {
            correlation_id,
            sp: sp.clone(),
            origin: citizen_origin,
            clock,
            step: 0,
            now_ms: 0,
            trace: Vec::new(),
        };
        session.record(1, Actor::Citizen, "request_access");
        session.record(2, Actor::ServiceProvider(sp.id.clone()), "request_authentication");
        session.record(
            3,
            Actor::ServiceProvider(sp.id.clone()),
            format!("submit_origin_state({citizen_origin})"),
        );
        Ok(session)
    }

    /// Step 4: the sending connector builds the request once routing and
    /// recognition checks pass.
    pub fn create_eidas_request(
        &self,
        registry: &FederationRegistry,
        session: &mut AuthSession,
    ) -> Result<EidasRequest, AuthError> {
        session.expect_step(3)?;
        let origin = session.origin;
        let sender = session.sp.home_state;
        let scheme = registry
            .scheme(origin)
            .map_err(|_| AuthError::SchemeNotNotified(origin))?;
        if scheme.notification.status < NotificationStatus::Notified {
            return Err(AuthError::SchemeNotNotified(origin));
        }
        if self.policy == RecognitionPolicy::Strict
            && !is_recognition_mandatory(&scheme.notification, session.clock)
        {
            return Err(AuthError::RecognitionNotYetMandatory {
                country: origin,
                earliest: scheme.notification.recognition_mandatory_from(),
            });
        }
        let required = session.sp.required_loa.max(AssuranceLevel::Substantial);
        if scheme.assurance < required {
            return Err(AuthError::LoaInsufficient {
                country: origin,
                scheme: scheme.assurance,
                required,
            });
        }
        let destination = self.node(origin)?;
        session.record(4, Actor::Connector(sender), "create_eidas_request");
        if destination.kind == NodeKind::MiddlewareBased {
            session.record(4, Actor::MiddlewareService(sender), "forward_request");
        }
        Ok(EidasRequest {
            sp_id: session.sp.id.clone(),
            origin_state: sender,
            destination_state: origin,
            requested: session.sp.requested().clone(),
            required: session.sp.required().clone(),
            required_loa: session.sp.required_loa,
            relying_party: session.sp.relying_party(),
            correlation_id: session.correlation_id,
        })
    }

    /// Steps 5 and 6: national authentication at the destination node and
    /// the filtered response.
    pub fn authenticate_national(
        &self,
        registry: &FederationRegistry,
        session: &mut AuthSession,
        request: &EidasRequest,
        citizen: &Citizen,
        presented_credential: &str,
    ) -> Result<EidasResponse, AuthError> {
        session.expect_step(4)?;
        let node = self.node(request.destination_state)?;
        if citizen.origin != node.state {
            return Err(AuthError::RequestMisrouted {
                expected: citizen.origin,
                actual: node.state,
            });
        }
        let scheme = registry
            .scheme(node.state)
            .map_err(|_| AuthError::SchemeNotNotified(node.state))?;
        let service = match node.kind {
            NodeKind::ProxyBased => Actor::ProxyService(node.state),
            NodeKind::MiddlewareBased => Actor::MiddlewareService(node.state),
        };
        session.record(5, service.clone(), "authenticate_citizen");
        let outcome = authenticate_against_scheme(scheme, request, citizen, presented_credential);
        session.record(6, service, "send_eidas_response");
        Ok(EidasResponse {
            correlation_id: request.correlation_id,
            outcome,
            asserting_scheme: scheme.member_state,
            assurance: scheme.assurance,
        })
    }

    /// Steps 7 and 8.
    pub fn complete(&self, session: &mut AuthSession, response: EidasResponse) -> Result<AuthResult, AuthError> {
        session.expect_step(6)?;
        let sender = session.sp.home_state;
        match self.relay {
            ResponseRelay::Direct => session.record(7, Actor::Connector(sender), "relay_response"),
            ResponseRelay::ViaNationalIdp => {
                session.record(7, Actor::Connector(sender), "relay_response_to_idp");
                session.record(7, Actor::NationalIdp(sender), "relay_response");
            }
        }
        let sp = Actor::ServiceProvider(session.sp.id.clone());
        Ok(match response.outcome {
            AuthOutcome::Success(identity) => {
                session.record(8, sp, "grant_access");
                AuthResult::Success {
                    identity,
                    asserting_scheme: response.asserting_scheme,
                    assurance: response.assurance,
                }
            }
            AuthOutcome::Failure(error) => {
                session.record(8, sp, "deny_access");
                AuthResult::Failure { step: 5, error }
            }
        })
    }

    /// Runs all eight steps. Failures carry the step they occurred at and a
    /// trace up to that point.
    pub fn run_full_flow(
        &self,
        registry: &FederationRegistry,
        sp: &ServiceProvider,
        citizen: &Citizen,
        presented_credential: &str,
        clock: SimDate,
        rng: &mut impl RngCore,
    ) -> FlowOutcome {
        let correlation_id = CorrelationId::random(rng);
        let fail = |step: u8, error: AuthError, trace: Vec<Hop>| FlowOutcome {
            correlation_id,
            result: AuthResult::Failure { step, error },
            trace,
        };
        let mut session = match self.initiate_authentication(sp, citizen.origin, clock, correlation_id) {
            Ok(s) => s,
            Err(e) => return fail(1, e, Vec::new()),
        };
        let request = match self.create_eidas_request(registry, &mut session) {
            Ok(r) => r,
            Err(e) => {
                session.record(4, Actor::Connector(sp.home_state), format!("fail({})", error_code(&e)));
                return fail(4, e, session.trace);
            }
        };
        let response = match self.authenticate_national(registry, &mut session, &request, citizen, presented_credential) {
            Ok(r) => r,
            Err(e) => return fail(5, e, session.trace),
        };
        let result = self
            .complete(&mut session, response)
            .expect("session is at step 6 after national authentication");
        FlowOutcome {
            correlation_id,
            result,
            trace: session.trace,
        }
    }
}

fn authenticate_against_scheme(
    scheme: &EidScheme,
    request: &EidasRequest,
    citizen: &Citizen,
    presented_credential: &str,
) -> AuthOutcome {
    if !citizen.verify_credential(presented_credential) {
        return AuthOutcome::Failure(AuthError::CredentialFailure);
    }
    for kind in &request.required {
        if !scheme.attributes.contains(*kind) || citizen.identity.value(*kind).is_none() {
            return AuthOutcome::Failure(AuthError::AttributeUnavailable(*kind));
        }
    }
    let available: BTreeSet<AttributeKind> = scheme
        .attributes
        .as_set()
        .intersection(&request.requested)
        .copied()
        .collect();
    let mut identity = citizen.identity.filtered(&available);
    identity.unique_identifier = derive_unique_identifier(scheme, &citizen.secret, &request.relying_party);
    AuthOutcome::Success(identity)
}

/// Stable short code for an error, used in traces and reports.
pub fn error_code(e: &AuthError) -> &'static str {
    match e {
        AuthError::NoNodeForState(_) => "NoNodeForState",
        AuthError::SchemeNotNotified(_) => "SchemeNotNotified",
        AuthError::RecognitionNotYetMandatory { .. } => "RecognitionNotYetMandatory",
        AuthError::LoaInsufficient { .. } => "LoaInsufficient",
        AuthError::CredentialFailure => "CredentialFailure",
        AuthError::AttributeUnavailable(_) => "AttributeUnavailable",
        AuthError::RequestMisrouted { .. } => "RequestMisrouted",
        AuthError::WrongStep { .. } => "WrongStep",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn citizen(origin: &str) -> Citizen {
        let identity = PersonIdentity::new("Muster", "Erika", SimDate::ymd(1964, 8, 12), "national-1")
            .with(AttributeKind::BirthName, "Gabler")
            .with(AttributeKind::PlaceOfBirth, "Berlin")
            .with(AttributeKind::CurrentAddress, "Heidestr. 17, Koeln")
            .with(AttributeKind::Gender, "female");
        Citizen::new(format!("c-{origin}"), cc(origin), identity, "123456")
    }

    fn portal() -> ServiceProvider {
        ServiceProvider::new("pt-portal", cc("PT"), AssuranceLevel::Substantial, Sector::NonPublic)
    }

    fn setup() -> (FederationRegistry, EidasNetwork) {
        let reg = FederationRegistry::bundled();
        let net = EidasNetwork::proxy_nodes_for(&reg);
        (reg, net)
    }

    #[test]
    fn initiate_records_first_three_steps() {
        let (_, net) = setup();
        let s = net
            .initiate_authentication(&portal(), cc("DE"), SimDate::ymd(2019, 1, 1), CorrelationId([1; 16]))
            .unwrap();
        assert_eq!(s.step(), 3);
        assert_eq!(s.origin, cc("DE"));
        assert_eq!(s.trace().len(), 3);
    }

    #[test]
    fn provider_without_node_cannot_initiate() {
        let (_, net) = setup();
        let sp = ServiceProvider::new("es", cc("ES"), AssuranceLevel::Substantial, Sector::Public);
        let err = net
            .initiate_authentication(&sp, cc("DE"), SimDate::ymd(2019, 1, 1), CorrelationId([0; 16]))
            .unwrap_err();
        assert_eq!(err, AuthError::NoNodeForState(cc("ES")));
    }

    #[test]
    fn request_creation_checks_notification_and_recognition() {
        let (reg, mut net) = setup();
        let id = CorrelationId([7; 16]);
        let mut s = net.initiate_authentication(&portal(), cc("DE"), SimDate::ymd(2019, 1, 1), id).unwrap();
        let req = net.create_eidas_request(&reg, &mut s).unwrap();
        assert_eq!(req.correlation_id, id);
        assert_eq!(req.destination_state, cc("DE"));

        let mut s = net.initiate_authentication(&portal(), cc("NL"), SimDate::ymd(2019, 1, 1), id).unwrap();
        assert_eq!(
            net.create_eidas_request(&reg, &mut s),
            Err(AuthError::SchemeNotNotified(cc("NL")))
        );

        net.policy = RecognitionPolicy::Strict;
        let mut s = net.initiate_authentication(&portal(), cc("DE"), SimDate::ymd(2018, 1, 1), id).unwrap();
        assert_eq!(
            net.create_eidas_request(&reg, &mut s),
            Err(AuthError::RecognitionNotYetMandatory {
                country: cc("DE"),
                earliest: Some(SimDate::ymd(2018, 9, 26)),
            })
        );
    }

    #[test]
    fn insufficient_assurance_fails_at_request() {
        let (reg, net) = setup();
        let sp = ServiceProvider::new("bank", cc("PT"), AssuranceLevel::High, Sector::NonPublic);
        let mut s = net
            .initiate_authentication(&sp, cc("IT"), SimDate::ymd(2019, 6, 1), CorrelationId([2; 16]))
            .unwrap();
        assert!(matches!(
            net.create_eidas_request(&reg, &mut s),
            Err(AuthError::LoaInsufficient { .. })
        ));
    }

    #[test]
    fn gender_is_filtered_for_german_citizens() {
        let (reg, net) = setup();
        let sp = portal().request(AttributeKind::Gender);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = net.run_full_flow(&reg, &sp, &citizen("DE"), "123456", SimDate::ymd(2019, 6, 1), &mut rng);
        let identity = flow.result.identity().expect("success");
        assert_eq!(identity.gender, None);
        assert_eq!(flow.trace.len(), 8);
    }

    #[test]
    fn wrong_credentials_fail() {
        let (reg, net) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = net.run_full_flow(&reg, &portal(), &citizen("DE"), "000000", SimDate::ymd(2019, 6, 1), &mut rng);
        assert_eq!(flow.result.error(), Some(&AuthError::CredentialFailure));
    }

    #[test]
    fn hard_required_address_is_unavailable_for_italy() {
        let (reg, net) = setup();
        let sp = portal().require(AttributeKind::CurrentAddress);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = net.run_full_flow(&reg, &sp, &citizen("IT"), "123456", SimDate::ymd(2019, 6, 1), &mut rng);
        assert_eq!(
            flow.result.error(),
            Some(&AuthError::AttributeUnavailable(AttributeKind::CurrentAddress))
        );
    }

    #[test]
    fn static_identifiers_ignore_relying_party() {
        let reg = FederationRegistry::bundled();
        let it = reg.scheme(cc("IT")).unwrap();
        let c = citizen("IT");
        assert_eq!(
            derive_unique_identifier(it, &c.secret, "sp:a"),
            derive_unique_identifier(it, &c.secret, "sp:b")
        );
        let de = reg.scheme(cc("DE")).unwrap();
        let c = citizen("DE");
        let a = derive_unique_identifier(de, &c.secret, "sp:a");
        assert_ne!(a, derive_unique_identifier(de, &c.secret, "sp:b"));
        assert_eq!(a, derive_unique_identifier(de, &c.secret, "sp:a"));
    }

    #[test]
    fn middleware_destination_adds_sender_hop() {
        let (reg, mut net) = setup();
        net.add_node(EidasNode::new(cc("DE"), NodeKind::MiddlewareBased));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flow = net.run_full_flow(&reg, &portal(), &citizen("DE"), "123456", SimDate::ymd(2019, 6, 1), &mut rng);
        assert!(flow.result.is_success());
        assert_eq!(flow.trace.len(), net.expected_hops(cc("DE")));
        assert!(flow
            .trace
            .iter()
            .any(|h| h.actor == Actor::MiddlewareService(cc("PT")) && h.step == 4));
    }

    #[test]
    fn relay_via_idp_adds_hop() {
        let (reg, mut net) = setup();
        net.relay = ResponseRelay::ViaNationalIdp;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flow = net.run_full_flow(&reg, &portal(), &citizen("BE"), "123456", SimDate::ymd(2019, 6, 1), &mut rng);
        assert!(flow.result.is_success());
        assert_eq!(flow.trace.len(), 9);
        assert_eq!(flow.trace[7].actor, Actor::NationalIdp(cc("PT")));
    }
}
