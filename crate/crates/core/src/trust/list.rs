use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::calendar::SimDate;
use crate::registry::CountryCode;

use super::crypto::{Algorithm, PublicKey};
use super::TrustError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CertSerial(pub u64);

impl fmt::Display for CertSerial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

impl FromStr for CertSerial {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s.trim(), 16)
            .map(CertSerial)
            .map_err(|_| format!("bad certificate serial `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Subject {
    /// Name or pseudonym of a natural person.
    NaturalPerson(String),
    LegalPerson(String),
}

impl Subject {
    pub fn name(&self) -> &str {
        match self {
            Subject::NaturalPerson(n) | Subject::LegalPerson(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertificateKind {
    ForSignature,
    ForSeal,
}

impl fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertificateKind::ForSignature => "signature",
            CertificateKind::ForSeal => "seal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: SimDate,
    pub not_after: SimDate,
}

impl Validity {
    pub fn new(not_before: SimDate, not_after: SimDate) -> Result<Self, TrustError> {
        if not_before >= not_after {
            return Err(TrustError::InvalidValidity {
                not_before,
                not_after,
            });
        }
        Ok(Self {
            not_before,
            not_after,
        })
    }

    pub fn contains(&self, day: SimDate) -> bool {
        self.not_before <= day && day <= self.not_after
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub serial: CertSerial,
    pub subject: Subject,
    pub issuer: String,
    pub public_key: PublicKey,
    pub kind: CertificateKind,
    pub qualified: bool,
    pub validity: Validity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TspEntry {
    pub state: CountryCode,
    pub id: String,
    pub qualified: bool,
    pub issued: BTreeSet<CertSerial>,
}

/// A trusted timestamp authority listed alongside the TSPs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorityEntry {
    pub id: String,
    pub qualified: bool,
    pub public_key: PublicKey,
}

/// Outcome of [`TrustedList::issue_certificate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issued {
    pub certificate: Certificate,
    /// A qualified certificate was requested from a non-qualified TSP and a
    /// non-qualified one was issued instead.
    pub downgraded: bool,
}

/// Trust service providers per state, the certificates they issued, and the
/// timestamp authorities. Each mutation bumps `version`; callers share
/// snapshots by cloning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustedList {
    pub version: u64,
    tsps: BTreeMap<String, TspEntry>,
    certificates: BTreeMap<CertSerial, Certificate>,
    authorities: BTreeMap<String, AuthorityEntry>,
    next_serial: u64,
}

impl TrustedList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tsp(&mut self, state: CountryCode, id: impl Into<String>, qualified: bool) {
        let id = id.into();
        let issued = self.tsps.get(&id).map(|e| e.issued.clone()).unwrap_or_default();
        self.tsps.insert(
            id.clone(),
            TspEntry {
                state,
                id,
                qualified,
                issued,
            },
        );
        self.version += 1;
    }

    pub fn add_authority(&mut self, id: impl Into<String>, qualified: bool, public_key: PublicKey) {
        let id = id.into();
        self.authorities.insert(
            id.clone(),
            AuthorityEntry {
                id,
                qualified,
                public_key,
            },
        );
        self.version += 1;
    }

    pub fn tsp(&self, id: &str) -> Option<&TspEntry> {
        self.tsps.get(id)
    }

    pub fn tsps(&self) -> impl Iterator<Item = &TspEntry> {
        self.tsps.values()
    }

    pub fn authority(&self, id: &str) -> Option<&AuthorityEntry> {
        self.authorities.get(id)
    }

    pub fn certificate(&self, serial: CertSerial) -> Option<&Certificate> {
        self.certificates.get(&serial)
    }

    pub fn certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.values()
    }

    /// A certificate counts as qualified only while its issuer is listed as
    /// qualified.
    pub fn is_qualified(&self, cert: &Certificate) -> bool {
        cert.qualified && self.tsp(&cert.issuer).is_some_and(|t| t.qualified)
    }

    pub fn issue_certificate(
        &mut self,
        tsp_id: &str,
        subject: Subject,
        public_key: PublicKey,
        kind: CertificateKind,
        validity: Validity,
        qualified_requested: bool,
    ) -> Result<Issued, TrustError> {
        let tsp_qualified = self
            .tsp(tsp_id)
            .ok_or_else(|| TrustError::UnknownTsp(tsp_id.to_string()))?
            .qualified;
        match (&subject, kind) {
            (Subject::NaturalPerson(_), CertificateKind::ForSignature)
            | (Subject::LegalPerson(_), CertificateKind::ForSeal) => {}
            _ => {
                return Err(TrustError::WrongCertificateKind {
                    expected: match subject {
                        Subject::NaturalPerson(_) => CertificateKind::ForSignature,
                        Subject::LegalPerson(_) => CertificateKind::ForSeal,
                    },
                    actual: kind,
                })
            }
        }
        self.next_serial += 1;
        let serial = CertSerial(self.next_serial);
        let certificate = Certificate {
            serial,
            subject,
            issuer: tsp_id.to_string(),
            public_key,
            kind,
            qualified: qualified_requested && tsp_qualified,
            validity,
        };
        self.insert_certificate(certificate.clone())?;
        Ok(Issued {
            certificate,
            downgraded: qualified_requested && !tsp_qualified,
        })
    }

    fn insert_certificate(&mut self, cert: Certificate) -> Result<(), TrustError> {
        let tsp = self
            .tsps
            .get_mut(&cert.issuer)
            .ok_or_else(|| TrustError::UnknownTsp(cert.issuer.clone()))?;
        if cert.qualified && !tsp.qualified {
            return Err(TrustError::Format(format!(
                "certificate {} marked qualified but issuer {} is not",
                cert.serial, cert.issuer
            )));
        }
        tsp.issued.insert(cert.serial);
        self.next_serial = self.next_serial.max(cert.serial.0);
        self.certificates.insert(cert.serial, cert);
        self.version += 1;
        Ok(())
    }

    /// Line format:
    ///
    /// ```text
    /// DE;d-trust;true
    /// cert;<serial>;<tsp>;<signature|seal>;<natural|legal>;<name>;<qualified>;<not_before>;<not_after>;<pubkey-hex>
    /// tsa;<id>;<qualified>;<pubkey-hex>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("# state;tsp_id;qualified\n");
        for t in self.tsps.values() {
            out.push_str(&format!("{};{};{}\n", t.state, t.id, t.qualified));
        }
        for c in self.certificates.values() {
            let (subject_kind, name) = match &c.subject {
                Subject::NaturalPerson(n) => ("natural", n),
                Subject::LegalPerson(n) => ("legal", n),
            };
            out.push_str(&format!(
                "cert;{};{};{};{};{};{};{};{};{}\n",
                c.serial,
                c.issuer,
                c.kind,
                subject_kind,
                name,
                c.qualified,
                c.validity.not_before,
                c.validity.not_after,
                c.public_key.to_hex()
            ));
        }
        for a in self.authorities.values() {
            out.push_str(&format!("tsa;{};{};{}\n", a.id, a.qualified, a.public_key.to_hex()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TrustError> {
        let mut list = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| TrustError::Format(format!("line {}: {m}", idx + 1));
            let f: Vec<&str> = line.split(';').map(str::trim).collect();
            match f[0] {
                "cert" if f.len() == 10 => {
                    let kind = match f[3] {
                        "signature" => CertificateKind::ForSignature,
                        "seal" => CertificateKind::ForSeal,
                        other => return Err(err(format!("bad certificate kind `{other}`"))),
                    };
                    let subject = match f[4] {
                        "natural" => Subject::NaturalPerson(f[5].to_string()),
                        "legal" => Subject::LegalPerson(f[5].to_string()),
                        other => return Err(err(format!("bad subject kind `{other}`"))),
                    };
                    let date = |s: &str| s.parse::<SimDate>().map_err(|e| err(e.to_string()));
                    let cert = Certificate {
                        serial: f[1].parse().map_err(err)?,
                        issuer: f[2].to_string(),
                        kind,
                        subject,
                        qualified: parse_bool(f[6]).map_err(err)?,
                        validity: Validity::new(date(f[7])?, date(f[8])?)?,
                        public_key: PublicKey::from_hex(Algorithm::Ed25519, f[9]).map_err(err)?,
                    };
                    list.insert_certificate(cert).map_err(|e| err(e.to_string()))?;
                }
                "tsa" if f.len() == 4 => {
                    let key = PublicKey::from_hex(Algorithm::Ed25519, f[3]).map_err(err)?;
                    list.add_authority(f[1], parse_bool(f[2]).map_err(err)?, key);
                }
                _ if f.len() == 3 => {
                    let state: CountryCode = f[0].parse().map_err(err)?;
                    list.add_tsp(state, f[1], parse_bool(f[2]).map_err(err)?);
                }
                _ => return Err(err(format!("unrecognised record `{line}`"))),
            }
        }
        Ok(list)
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected boolean, found `{other}`")),
    }
}
