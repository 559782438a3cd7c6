//! Member States, their eID schemes, and the notification state machine that
//! governs cross-border recognition.
//!
//! A scheme moves through `Other → PreNotified → PeerReviewed → Notified →
//! Published`. Every transition is dated and guarded:
//!
//! * peer review completes at most 3 months after pre-notification,
//! * notification happens at the earliest 6 months after pre-notification,
//! * publication follows notification by at most 2 months,
//! * recognition by every other state becomes mandatory 12 months after
//!   publication.
//!
//! The registry is immutable once loaded and can be shared freely between
//! concurrent flows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use thiserror::Error;

use crate::calendar::SimDate;

pub const PEER_REVIEW_MAX_MONTHS: i32 = 3;
pub const NOTIFICATION_MIN_MONTHS: i32 = 6;
pub const PUBLICATION_MAX_MONTHS: i32 = 2;
pub const RECOGNITION_AFTER_MONTHS: i32 = 12;

/// The bundled registry data (consortium states, one scheme each).
pub const BUNDLED_REGISTRY: &str = include_str!("../data/registry.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("step {step} cannot follow status {from}")]
    OutOfOrderStep {
        from: NotificationStatus,
        step: NotificationStep,
    },
    #[error("timing violation on {step} at {on}: {rule}")]
    TimingViolation {
        step: NotificationStep,
        on: SimDate,
        rule: String,
    },
    #[error("unknown country {0}")]
    UnknownCountry(CountryCode),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("scheme {country}: {message}")]
    InvariantViolation {
        country: CountryCode,
        message: String,
    },
}

/// Two-letter ISO 3166 country code, upper case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii country code")
    }

    /// English short name for the consortium states; the code otherwise.
    pub fn name(&self) -> &str {
        match self.as_str() {
            "AT" => "Austria",
            "BE" => "Belgium",
            "DE" => "Germany",
            "FR" => "France",
            "IT" => "Italy",
            "LU" => "Luxembourg",
            "NL" => "The Netherlands",
            "PT" => "Portugal",
            other => other,
        }
    }
}

impl FromStr for CountryCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.trim().as_bytes();
        if b.len() == 2 && b.iter().all(u8::is_ascii_alphabetic) {
            Ok(Self([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()]))
        } else {
            Err(format!("invalid country code `{s}`"))
        }
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The eight attributes of the minimum data set for natural persons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeKind {
    FamilyName,
    FirstName,
    DateOfBirth,
    UniqueIdentifier,
    BirthName,
    PlaceOfBirth,
    CurrentAddress,
    Gender,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 8] = [
        AttributeKind::FamilyName,
        AttributeKind::FirstName,
        AttributeKind::DateOfBirth,
        AttributeKind::UniqueIdentifier,
        AttributeKind::BirthName,
        AttributeKind::PlaceOfBirth,
        AttributeKind::CurrentAddress,
        AttributeKind::Gender,
    ];

    pub const MANDATORY: [AttributeKind; 4] = [
        AttributeKind::FamilyName,
        AttributeKind::FirstName,
        AttributeKind::DateOfBirth,
        AttributeKind::UniqueIdentifier,
    ];

    pub fn is_mandatory(self) -> bool {
        Self::MANDATORY.contains(&self)
    }

    pub fn code(self) -> &'static str {
        match self {
            AttributeKind::FamilyName => "LN",
            AttributeKind::FirstName => "FN",
            AttributeKind::DateOfBirth => "BD",
            AttributeKind::UniqueIdentifier => "ID",
            AttributeKind::BirthName => "BN",
            AttributeKind::PlaceOfBirth => "BP",
            AttributeKind::CurrentAddress => "A",
            AttributeKind::Gender => "G",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code.trim())
    }

    pub fn mandatory_set() -> BTreeSet<AttributeKind> {
        Self::MANDATORY.into_iter().collect()
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Parses a comma list of attribute codes (`LN,FN,...`).
pub fn parse_attribute_list(s: &str) -> Result<BTreeSet<AttributeKind>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| AttributeKind::from_code(c).ok_or_else(|| format!("unknown attribute code `{c}`")))
        .collect()
}

pub fn format_attribute_list(set: &BTreeSet<AttributeKind>) -> String {
    set.iter().map(|k| k.code()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssuranceLevel {
    Low,
    Substantial,
    High,
}

impl FromStr for AssuranceLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "substantial" => Ok(Self::Substantial),
            "high" => Ok(Self::High),
            other => Err(format!("unknown assurance level `{other}`")),
        }
    }
}

impl fmt::Display for AssuranceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Low => "low",
            Self::Substantial => "substantial",
            Self::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum NotificationStatus {
    #[default]
    Other,
    PreNotified,
    PeerReviewed,
    Notified,
    Published,
}

impl NotificationStatus {
    /// The step that leaves this status, if any.
    pub fn next_step(self) -> Option<NotificationStep> {
        match self {
            Self::Other => Some(NotificationStep::PreNotify),
            Self::PreNotified => Some(NotificationStep::PeerReview),
            Self::PeerReviewed => Some(NotificationStep::Notify),
            Self::Notified => Some(NotificationStep::Publish),
            Self::Published => None,
        }
    }
}

impl fmt::Display for NotificationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Other => "other",
            Self::PreNotified => "pre-notified",
            Self::PeerReviewed => "peer-reviewed",
            Self::Notified => "notified",
            Self::Published => "published",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NotificationStep {
    PreNotify,
    PeerReview,
    Notify,
    Publish,
}

impl NotificationStep {
    pub fn target(self) -> NotificationStatus {
        match self {
            Self::PreNotify => NotificationStatus::PreNotified,
            Self::PeerReview => NotificationStatus::PeerReviewed,
            Self::Notify => NotificationStatus::Notified,
            Self::Publish => NotificationStatus::Published,
        }
    }
}

impl fmt::Display for NotificationStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PreNotify => "pre-notify",
            Self::PeerReview => "peer-review",
            Self::Notify => "notify",
            Self::Publish => "publish",
        })
    }
}

/// Dated lifecycle of one scheme's notification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NotificationRecord {
    pub status: NotificationStatus,
    pub pre_notified_on: Option<SimDate>,
    pub reviewed_on: Option<SimDate>,
    pub notified_on: Option<SimDate>,
    pub published_on: Option<SimDate>,
    /// Set when earlier transition dates were reconstructed rather than
    /// observed.
    pub synthetic_dates: bool,
}

impl NotificationRecord {
    pub fn new() -> Self {
        Self::default()
    }

    fn date_of(&self, status: NotificationStatus) -> Option<SimDate> {
        match status {
            NotificationStatus::Other => None,
            NotificationStatus::PreNotified => self.pre_notified_on,
            NotificationStatus::PeerReviewed => self.reviewed_on,
            NotificationStatus::Notified => self.notified_on,
            NotificationStatus::Published => self.published_on,
        }
    }

    /// Date of the most recent transition.
    pub fn last_transition(&self) -> Option<SimDate> {
        self.date_of(self.status)
    }

    /// First day on which recognition by other states is mandatory.
    pub fn recognition_mandatory_from(&self) -> Option<SimDate> {
        match self.status {
            NotificationStatus::Published => self
                .published_on
                .map(|d| d.add_months(RECOGNITION_AFTER_MONTHS)),
            _ => None,
        }
    }

    /// Checks every record invariant: dates present iff reached, monotone,
    /// and all timing guards.
    pub fn check(&self) -> Result<(), String> {
        use NotificationStatus::*;
        let slots = [
            (PreNotified, self.pre_notified_on),
            (PeerReviewed, self.reviewed_on),
            (Notified, self.notified_on),
            (Published, self.published_on),
        ];
        for (status, date) in slots {
            let reached = self.status >= status;
            if reached != date.is_some() {
                return Err(format!(
                    "date for {status} must be {} at status {}",
                    if reached { "present" } else { "absent" },
                    self.status
                ));
            }
        }
        let dates: Vec<SimDate> = slots.iter().filter_map(|(_, d)| *d).collect();
        if dates.windows(2).any(|w| w[0] > w[1]) {
            return Err("transition dates are not monotone".into());
        }
        if let (Some(pre), Some(rev)) = (self.pre_notified_on, self.reviewed_on) {
            if rev > pre.add_months(PEER_REVIEW_MAX_MONTHS) {
                return Err(format!("peer review on {rev} exceeds 3 months after {pre}"));
            }
        }
        if let (Some(pre), Some(notified)) = (self.pre_notified_on, self.notified_on) {
            if notified < pre.add_months(NOTIFICATION_MIN_MONTHS) {
                return Err(format!("notification on {notified} earlier than 6 months after {pre}"));
            }
        }
        if let (Some(notified), Some(published)) = (self.notified_on, self.published_on) {
            if published > notified.add_months(PUBLICATION_MAX_MONTHS) {
                return Err(format!("publication on {published} later than 2 months after {notified}"));
            }
        }
        Ok(())
    }
}

/// Applies one notification step, enforcing order and timing guards.
pub fn advance_notification(
    record: &NotificationRecord,
    step: NotificationStep,
    on: SimDate,
) -> Result<NotificationRecord, RegistryError> {
    if record.status.next_step() != Some(step) {
        return Err(RegistryError::OutOfOrderStep {
            from: record.status,
            step,
        });
    }
    let violation = |rule: String| RegistryError::TimingViolation { step, on, rule };
    if let Some(last) = record.last_transition() {
        if on < last {
            return Err(violation(format!("date precedes previous transition {last}")));
        }
    }
    let mut next = record.clone();
    match step {
        NotificationStep::PreNotify => next.pre_notified_on = Some(on),
        NotificationStep::PeerReview => {
            let pre = record.pre_notified_on.expect("pre-notified record has date");
            let deadline = pre.add_months(PEER_REVIEW_MAX_MONTHS);
            if on > deadline {
                return Err(violation(format!("peer review must complete by {deadline}")));
            }
            next.reviewed_on = Some(on);
        }
        NotificationStep::Notify => {
            let pre = record.pre_notified_on.expect("reviewed record has pre-notification date");
            let earliest = pre.add_months(NOTIFICATION_MIN_MONTHS);
            if on < earliest {
                return Err(violation(format!("notification possible from {earliest}")));
            }
            next.notified_on = Some(on);
        }
        NotificationStep::Publish => {
            let notified = record.notified_on.expect("notified record has date");
            let deadline = notified.add_months(PUBLICATION_MAX_MONTHS);
            if on > deadline {
                return Err(violation(format!("publication due by {deadline}")));
            }
            next.published_on = Some(on);
        }
    }
    next.status = step.target();
    Ok(next)
}

/// True iff the scheme is published and at least 12 months have passed.
pub fn is_recognition_mandatory(record: &NotificationRecord, at: SimDate) -> bool {
    record
        .recognition_mandatory_from()
        .is_some_and(|from| at >= from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UidStrategy {
    /// A persistent national code, identical for every relying party.
    Static,
    /// A pseudonym scoped to the requesting state or relying party.
    RelyingPartyPseudonym,
}

impl FromStr for UidStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" => Ok(Self::Static),
            "pseudonym" | "relying-party-pseudonym" => Ok(Self::RelyingPartyPseudonym),
            other => Err(format!("unknown uid strategy `{other}`")),
        }
    }
}

impl fmt::Display for UidStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::RelyingPartyPseudonym => "pseudonym",
        })
    }
}

/// Attribute coverage of a scheme; `Unknown` when nothing is published.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemeAttributes {
    Known(BTreeSet<AttributeKind>),
    Unknown,
}

impl SchemeAttributes {
    /// The known set, or the empty set for unknown coverage.
    pub fn as_set(&self) -> BTreeSet<AttributeKind> {
        match self {
            Self::Known(set) => set.clone(),
            Self::Unknown => BTreeSet::new(),
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Self::Unknown)
    }

    pub fn contains(&self, kind: AttributeKind) -> bool {
        matches!(self, Self::Known(set) if set.contains(&kind))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EidScheme {
    pub member_state: CountryCode,
    pub assurance: AssuranceLevel,
    pub attributes: SchemeAttributes,
    pub uid_strategy: UidStrategy,
    pub notification: NotificationRecord,
    /// Free-text status note (e.g. "In use") for schemes outside the process.
    pub note: Option<String>,
}

impl EidScheme {
    pub fn check(&self) -> Result<(), RegistryError> {
        let fail = |message: String| RegistryError::InvariantViolation {
            country: self.member_state,
            message,
        };
        self.notification.check().map_err(fail)?;
        if self.notification.status >= NotificationStatus::Notified {
            let present = self.attributes.as_set();
            let missing: Vec<_> = AttributeKind::MANDATORY
                .iter()
                .filter(|k| !present.contains(k))
                .map(|k| k.code())
                .collect();
            if !missing.is_empty() {
                return Err(fail(format!(
                    "notified scheme lacks mandatory attributes {}",
                    missing.join(",")
                )));
            }
        }
        Ok(())
    }
}

/// Divergence between a loaded registry and the bundled reference data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryLint {
    pub country: CountryCode,
    pub message: String,
}

impl fmt::Display for RegistryLint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "warning: {}: {}", self.country, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederationRegistry {
    schemes: BTreeMap<CountryCode, EidScheme>,
    pub clock: SimDate,
}

impl FederationRegistry {
    pub fn empty(clock: SimDate) -> Self {
        Self {
            schemes: BTreeMap::new(),
            clock,
        }
    }

    /// The bundled reference registry.
    pub fn bundled() -> Self {
        Self::load(BUNDLED_REGISTRY.as_bytes()).expect("bundled registry is well-formed")
    }

    /// Parses the `country;status;date;attributes;uid_strategy[;assurance]`
    /// line format. Blank lines and `#` comments are ignored.
    ///
    /// Status `N` stands for "notified and published" with the publication
    /// date given; earlier transition dates are reconstructed at the tightest
    /// legal bounds and marked synthetic. The clock is set to the latest
    /// recorded transition.
    pub fn load(source: impl BufRead) -> Result<Self, RegistryError> {
        let mut schemes = BTreeMap::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| RegistryError::ParseError {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let scheme = parse_scheme_line(trimmed).map_err(|message| RegistryError::ParseError {
                line: line_no,
                message,
            })?;
            scheme.check()?;
            if schemes.insert(scheme.member_state, scheme).is_some() {
                return Err(RegistryError::ParseError {
                    line: line_no,
                    message: "more than one scheme for this country".into(),
                });
            }
        }
        let clock = schemes
            .values()
            .filter_map(|s| s.notification.last_transition())
            .max()
            .unwrap_or(SimDate::ymd(1970, 1, 1));
        Ok(Self { schemes, clock })
    }

    pub fn with_clock(mut self, clock: SimDate) -> Self {
        self.clock = clock;
        self
    }

    pub fn insert(&mut self, scheme: EidScheme) -> Result<(), RegistryError> {
        scheme.check()?;
        self.schemes.insert(scheme.member_state, scheme);
        Ok(())
    }

    pub fn scheme(&self, country: CountryCode) -> Result<&EidScheme, RegistryError> {
        self.schemes
            .get(&country)
            .ok_or(RegistryError::UnknownCountry(country))
    }

    pub fn schemes(&self) -> impl Iterator<Item = &EidScheme> {
        self.schemes.values()
    }

    pub fn len(&self) -> usize {
        self.schemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemes.is_empty()
    }

    /// Compares this registry with the bundled reference and reports every
    /// divergence. The loaded data stays authoritative.
    pub fn lint(&self) -> Vec<RegistryLint> {
        let reference = Self::bundled();
        let mut lints = Vec::new();
        for scheme in self.schemes() {
            let country = scheme.member_state;
            let Ok(expected) = reference.scheme(country) else {
                continue;
            };
            if expected.notification.status != scheme.notification.status {
                lints.push(RegistryLint {
                    country,
                    message: format!(
                        "status {} differs from reference {}",
                        scheme.notification.status, expected.notification.status
                    ),
                });
            }
            if expected.notification.last_transition() != scheme.notification.last_transition() {
                lints.push(RegistryLint {
                    country,
                    message: "status date differs from reference".into(),
                });
            }
            match (&expected.attributes, &scheme.attributes) {
                (SchemeAttributes::Known(want), SchemeAttributes::Known(have)) => {
                    for extra in have.difference(want) {
                        lints.push(RegistryLint {
                            country,
                            message: format!("attribute {extra} not in reference data"),
                        });
                    }
                    for gone in want.difference(have) {
                        lints.push(RegistryLint {
                            country,
                            message: format!("attribute {gone} missing compared to reference data"),
                        });
                    }
                }
                (a, b) if a != b => lints.push(RegistryLint {
                    country,
                    message: "attribute coverage known/unknown differs from reference".into(),
                }),
                _ => {}
            }
        }
        lints
    }
}

/// Attribute set of the scheme registered for `country`.
pub fn scheme_attributes(
    registry: &FederationRegistry,
    country: CountryCode,
) -> Result<SchemeAttributes, RegistryError> {
    registry.scheme(country).map(|s| s.attributes.clone())
}

/// Reconstructs a record for a scheme whose latest known transition is
/// `status` on `date`.
fn reconstruct_record(status: NotificationStatus, date: SimDate) -> NotificationRecord {
    use NotificationStatus::*;
    let mut rec = NotificationRecord {
        status,
        synthetic_dates: status > PreNotified,
        ..Default::default()
    };
    match status {
        Other => {}
        PreNotified => rec.pre_notified_on = Some(date),
        PeerReviewed => {
            // Earliest pre-notification day whose review deadline still
            // reaches `date`; clamping can make a plain subtraction too early.
            let mut pre = date.add_months(-PEER_REVIEW_MAX_MONTHS);
            while pre.add_months(PEER_REVIEW_MAX_MONTHS) < date {
                pre = pre.add_days(1);
            }
            rec.pre_notified_on = Some(pre);
            rec.reviewed_on = Some(date);
        }
        Notified | Published => {
            // Notification and publication collapse onto the same day.
            let pre = date.add_months(-NOTIFICATION_MIN_MONTHS);
            rec.pre_notified_on = Some(pre);
            rec.reviewed_on = Some(pre.add_months(PEER_REVIEW_MAX_MONTHS));
            rec.notified_on = Some(date);
            if status == Published {
                rec.published_on = Some(date);
            }
        }
    }
    rec
}

fn parse_status(s: &str) -> Result<NotificationStatus, String> {
    use NotificationStatus::*;
    match s.trim().to_ascii_lowercase().as_str() {
        "o" | "other" => Ok(Other),
        "p" | "pre-notified" => Ok(PreNotified),
        "r" | "peer-reviewed" => Ok(PeerReviewed),
        "notified" => Ok(Notified),
        "n" | "published" => Ok(Published),
        other => Err(format!("unknown status `{other}`")),
    }
}

fn parse_scheme_line(line: &str) -> Result<EidScheme, String> {
    let fields: Vec<&str> = line.split(';').map(str::trim).collect();
    if !(5..=6).contains(&fields.len()) {
        return Err(format!("expected 5 or 6 `;`-separated fields, found {}", fields.len()));
    }
    let member_state: CountryCode = fields[0].parse()?;
    let status = parse_status(fields[1])?;
    let (notification, note) = if status == NotificationStatus::Other {
        let note = match fields[2] {
            "" | "-" => None,
            text => Some(text.to_string()),
        };
        (NotificationRecord::new(), note)
    } else {
        let date: SimDate = fields[2].parse().map_err(|e| format!("{e}"))?;
        (reconstruct_record(status, date), None)
    };
    let attributes = match fields[3] {
        "?" => SchemeAttributes::Unknown,
        list => SchemeAttributes::Known(parse_attribute_list(list)?),
    };
    let uid_strategy = fields[4].parse()?;
    let assurance = match fields.get(5) {
        Some(level) => level.parse()?,
        None => AssuranceLevel::Substantial,
    };
    Ok(EidScheme {
        member_state,
        assurance,
        attributes,
        uid_strategy,
        notification,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn pre_notified(on: SimDate) -> NotificationRecord {
        advance_notification(&NotificationRecord::new(), NotificationStep::PreNotify, on).unwrap()
    }

    #[test]
    fn first_transition_is_unguarded() {
        let rec = pre_notified(SimDate::ymd(2017, 1, 10));
        assert_eq!(rec.status, NotificationStatus::PreNotified);
        assert_eq!(rec.pre_notified_on, Some(SimDate::ymd(2017, 1, 10)));
    }

    #[test]
    fn skipping_a_stage_is_out_of_order() {
        let rec = pre_notified(SimDate::ymd(2017, 1, 10));
        let err = advance_notification(&rec, NotificationStep::Notify, SimDate::ymd(2017, 8, 1)).unwrap_err();
        assert!(matches!(err, RegistryError::OutOfOrderStep { .. }));
    }

    #[test]
    fn late_peer_review_is_a_timing_violation() {
        let rec = pre_notified(SimDate::ymd(2017, 1, 10));
        assert!(advance_notification(&rec, NotificationStep::PeerReview, SimDate::ymd(2017, 4, 10)).is_ok());
        let err = advance_notification(&rec, NotificationStep::PeerReview, SimDate::ymd(2017, 4, 11)).unwrap_err();
        assert!(matches!(err, RegistryError::TimingViolation { .. }));
    }

    #[test]
    fn late_publication_is_a_timing_violation() {
        let mut rec = pre_notified(SimDate::ymd(2017, 1, 10));
        rec = advance_notification(&rec, NotificationStep::PeerReview, SimDate::ymd(2017, 3, 1)).unwrap();
        rec = advance_notification(&rec, NotificationStep::Notify, SimDate::ymd(2017, 7, 10)).unwrap();
        let err = advance_notification(&rec, NotificationStep::Publish, SimDate::ymd(2017, 9, 11)).unwrap_err();
        assert!(matches!(err, RegistryError::TimingViolation { .. }));
    }

    #[test]
    fn published_records_cannot_advance() {
        let reg = FederationRegistry::bundled();
        let de = &reg.scheme(cc("DE")).unwrap().notification;
        let err = advance_notification(de, NotificationStep::Publish, SimDate::ymd(2018, 1, 1)).unwrap_err();
        assert!(matches!(err, RegistryError::OutOfOrderStep { .. }));
    }

    #[test]
    fn reconstructed_records_satisfy_invariants() {
        for day in 0..800 {
            let date = SimDate::ymd(2016, 1, 1).add_days(day);
            for status in [
                NotificationStatus::PreNotified,
                NotificationStatus::PeerReviewed,
                NotificationStatus::Notified,
                NotificationStatus::Published,
            ] {
                let rec = reconstruct_record(status, date);
                assert_eq!(rec.check(), Ok(()), "{status} {date}");
                assert_eq!(rec.last_transition(), Some(date));
            }
        }
    }

    #[test]
    fn unknown_country_is_an_error() {
        let reg = FederationRegistry::bundled();
        assert_eq!(
            scheme_attributes(&reg, cc("ES")),
            Err(RegistryError::UnknownCountry(cc("ES")))
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# header\nDE;N;2017-09-26;LN,FN,BD,ID;static\nIT;X;2018-09-10;LN;static\n";
        match FederationRegistry::load(text.as_bytes()) {
            Err(RegistryError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_attr = "DE;N;2017-09-26;LN,XX;static\n";
        assert!(matches!(
            FederationRegistry::load(bad_attr.as_bytes()),
            Err(RegistryError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn notified_scheme_without_mandatory_attributes_is_rejected() {
        let text = "DE;N;2017-09-26;LN,FN,BD;static\n";
        match FederationRegistry::load(text.as_bytes()) {
            Err(RegistryError::InvariantViolation { country, .. }) => assert_eq!(country, cc("DE")),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = "DE;N;2017-09-26;?;static\n";
        assert!(matches!(
            FederationRegistry::load(unknown.as_bytes()),
            Err(RegistryError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn empty_source_gives_empty_registry() {
        let reg = FederationRegistry::load("".as_bytes()).unwrap();
        assert!(reg.is_empty());
    }

    #[test]
    fn duplicate_country_is_rejected() {
        let text = "DE;N;2017-09-26;LN,FN,BD,ID;static\nDE;R;2019-01-01;LN,FN,BD,ID;static\n";
        assert!(matches!(
            FederationRegistry::load(text.as_bytes()),
            Err(RegistryError::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn divergent_data_loads_and_lints() {
        let text = BUNDLED_REGISTRY.replace(
            "DE;N;2017-09-26;LN,FN,BD,ID,BN,BP,A;",
            "DE;N;2017-09-26;LN,FN,BD,ID,BN,BP,A,G;",
        );
        let reg = FederationRegistry::load(text.as_bytes()).unwrap();
        assert!(reg.scheme(cc("DE")).unwrap().attributes.contains(AttributeKind::Gender));
        let lints = reg.lint();
        assert_eq!(lints.len(), 1);
        assert_eq!(lints[0].country, cc("DE"));
        assert!(lints[0].message.contains('G'));
        assert!(FederationRegistry::bundled().lint().is_empty());
    }
}
