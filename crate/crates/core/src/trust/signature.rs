use std::fmt;

use crate::calendar::SimDate;

use super::crypto::{sha256, Digest32, KeyPair};
use super::list::{CertSerial, Certificate, CertificateKind, TrustedList};
use super::TrustError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreationDevice {
    pub id: String,
    pub qualified: bool,
    pub certificates: Vec<CertSerial>,
}

impl CreationDevice {
    pub fn new(id: impl Into<String>, qualified: bool) -> Self {
        Self {
            id: id.into(),
            qualified,
            certificates: Vec::new(),
        }
    }

    pub fn holding(mut self, serial: CertSerial) -> Self {
        self.certificates.push(serial);
        self
    }

    pub fn holds(&self, serial: CertSerial) -> bool {
        self.certificates.contains(&serial)
    }
}

/// Issues timestamps over signature chains.
#[derive(Debug, Clone)]
pub struct TimestampAuthority {
    pub id: String,
    pub qualified: bool,
    /// Lifetime of each issued timestamp.
    pub validity_months: i32,
    key: KeyPair,
}

impl TimestampAuthority {
    pub fn new(id: impl Into<String>, qualified: bool, validity_months: i32, key: KeyPair) -> Self {
        Self {
            id: id.into(),
            qualified,
            validity_months,
            key,
        }
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    pub fn stamp(&self, covers: Digest32, on: SimDate) -> Timestamp {
        let validity_end = on.add_months(self.validity_months.max(1));
        let token = self.key.sign(&Timestamp::token_message(&covers, on, validity_end));
        Timestamp {
            authority: self.id.clone(),
            applied_on: on,
            covers,
            validity_end,
            qualified: self.qualified,
            token,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timestamp {
    pub authority: String,
    pub applied_on: SimDate,
    pub covers: Digest32,
    pub validity_end: SimDate,
    pub qualified: bool,
    pub token: Vec<u8>,
}

impl Timestamp {
    fn token_message(covers: &Digest32, on: SimDate, end: SimDate) -> Vec<u8> {
        let mut m = covers.to_vec();
        m.extend_from_slice(on.to_string().as_bytes());
        m.extend_from_slice(end.to_string().as_bytes());
        m
    }
}

/// A cryptographic signature or seal over detached content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub digest: Digest32,
    pub value: Vec<u8>,
    pub signer: CertSerial,
    pub created_on: SimDate,
    pub device: String,
    pub timestamps: Vec<Timestamp>,
}

impl Signature {
    /// Digest the next timestamp must cover: the signature itself for the
    /// first one, the previous timestamp afterwards.
    pub fn next_anchor(&self) -> Digest32 {
        match self.timestamps.last() {
            None => {
                let mut m = self.digest.to_vec();
                m.extend_from_slice(&self.value);
                sha256(&m)
            }
            Some(prev) => {
                let mut m = prev.covers.to_vec();
                m.extend_from_slice(&prev.token);
                sha256(&m)
            }
        }
    }

    fn anchor_at(&self, index: usize) -> Digest32 {
        Signature {
            timestamps: self.timestamps[..index].to_vec(),
            ..self.clone()
        }
        .next_anchor()
    }

    /// Last day the signature is anchored in trust.
    pub fn protection_end(&self, cert: &Certificate) -> SimDate {
        self.timestamps
            .last()
            .map_or(cert.validity.not_after, |t| t.validity_end)
    }

    /// Detached line: `serial;digest_hex;sigvalue_hex;created;device;ts_chain`.
    ///
    /// `ts_chain` is `-` or comma-separated
    /// `authority/applied/validity_end/q|n/covers_hex/token_hex` entries.
    pub fn to_line(&self) -> String {
        let chain = if self.timestamps.is_empty() {
            "-".to_string()
        } else {
            self.timestamps
                .iter()
                .map(|t| {
                    format!(
                        "{}/{}/{}/{}/{}/{}",
                        t.authority,
                        t.applied_on,
                        t.validity_end,
                        if t.qualified { "q" } else { "n" },
                        hex::encode(t.covers),
                        hex::encode(&t.token)
                    )
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{};{};{};{};{};{}",
            self.signer,
            hex::encode(self.digest),
            hex::encode(&self.value),
            self.created_on,
            self.device,
            chain
        )
    }

    pub fn from_line(line: &str) -> Result<Self, TrustError> {
        let err = |m: &str| TrustError::Format(format!("signature line: {m}"));
        let f: Vec<&str> = line.trim().split(';').collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        let digest32 = |s: &str| -> Result<Digest32, TrustError> {
            hex::decode(s)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| err("bad digest"))
        };
        let date = |s: &str| s.parse::<SimDate>().map_err(|_| err("bad date"));
        let mut timestamps = Vec::new();
        if f[5] != "-" {
            for entry in f[5].split(',') {
                let t: Vec<&str> = entry.split('/').collect();
                if t.len() != 6 {
                    return Err(err("bad timestamp entry"));
                }
                timestamps.push(Timestamp {
                    authority: t[0].to_string(),
                    applied_on: date(t[1])?,
                    validity_end: date(t[2])?,
                    qualified: match t[3] {
                        "q" => true,
                        "n" => false,
                        _ => return Err(err("bad timestamp qualification")),
                    },
                    covers: digest32(t[4])?,
                    token: hex::decode(t[5]).map_err(|_| err("bad token"))?,
                });
            }
        }
        Ok(Self {
            signer: f[0].parse().map_err(|e: String| err(&e))?,
            digest: digest32(f[1])?,
            value: hex::decode(f[2]).map_err(|_| err("bad signature value"))?,
            created_on: date(f[3])?,
            device: f[4].to_string(),
            timestamps,
        })
    }
}

/// Who is signing: a natural person signs, a legal person seals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SignerRole {
    NaturalPerson,
    LegalPerson,
}

fn create(
    role: SignerRole,
    content: &[u8],
    key: &KeyPair,
    cert: &Certificate,
    device: &CreationDevice,
    on: SimDate,
) -> Result<Signature, TrustError> {
    let expected = match role {
        SignerRole::NaturalPerson => CertificateKind::ForSignature,
        SignerRole::LegalPerson => CertificateKind::ForSeal,
    };
    if cert.kind != expected {
        return Err(TrustError::WrongCertificateKind {
            expected,
            actual: cert.kind,
        });
    }
    if on > cert.validity.not_after {
        return Err(TrustError::CertificateExpired {
            not_after: cert.validity.not_after,
        });
    }
    if on < cert.validity.not_before {
        return Err(TrustError::CertificateNotYetValid {
            not_before: cert.validity.not_before,
        });
    }
    if key.public() != &cert.public_key {
        return Err(TrustError::KeyMismatch);
    }
    if !device.holds(cert.serial) {
        return Err(TrustError::DeviceLacksCertificate {
            device: device.id.clone(),
            serial: cert.serial,
        });
    }
    let digest = sha256(content);
    Ok(Signature {
        digest,
        value: key.sign(&digest),
        signer: cert.serial,
        created_on: on,
        device: device.id.clone(),
        timestamps: Vec::new(),
    })
}

/// Signs `content` as a natural person: hash, then sign the hash with the
/// private key matching the certificate.
pub fn sign(
    content: &[u8],
    key: &KeyPair,
    cert: &Certificate,
    device: &CreationDevice,
    on: SimDate,
) -> Result<Signature, TrustError> {
    create(SignerRole::NaturalPerson, content, key, cert, device, on)
}

/// Seals `content` on behalf of a legal person. Same pipeline as [`sign`]
/// with a seal certificate.
pub fn seal(
    content: &[u8],
    key: &KeyPair,
    cert: &Certificate,
    device: &CreationDevice,
    on: SimDate,
) -> Result<Signature, TrustError> {
    create(SignerRole::LegalPerson, content, key, cert, device, on)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidReason {
    DigestMismatch,
    SignatureMismatch,
    UnknownCertificate(CertSerial),
    CreatedOutsideValidity,
    TimestampChainBroken(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndeterminateReason {
    /// Cryptographically sound, but neither certificate nor timestamps
    /// protect the signature at the validation date.
    ProtectionLapsed { ended: SimDate },
    /// The issuer is no longer on the trusted list.
    UntrustedIssuer(String),
    /// Validation date precedes signing.
    NotYetCreated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(InvalidReason),
    Indeterminate(IndeterminateReason),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::Invalid(_) => "invalid",
            Verdict::Indeterminate(_) => "indeterminate",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => f.write_str("valid"),
            Verdict::Invalid(r) => write!(f, "invalid({r:?})"),
            Verdict::Indeterminate(IndeterminateReason::ProtectionLapsed { ended }) => {
                write!(f, "indeterminate(protection lapsed {ended})")
            }
            Verdict::Indeterminate(r) => write!(f, "indeterminate({r:?})"),
        }
    }
}

fn check_chain(sig: &Signature, cert: &Certificate, list: &TrustedList) -> Result<(), String> {
    let mut protected_until = cert.validity.not_after;
    let mut previous = sig.created_on;
    for (i, ts) in sig.timestamps.iter().enumerate() {
        let too_early = if i == 0 {
            ts.applied_on < previous
        } else {
            ts.applied_on <= previous
        };
        if too_early {
            return Err(format!("timestamp {i} not after its predecessor"));
        }
        if ts.applied_on > protected_until {
            return Err(format!("timestamp {i} applied after protection lapsed"));
        }
        if ts.applied_on >= ts.validity_end {
            return Err(format!("timestamp {i} has empty validity"));
        }
        if ts.covers != sig.anchor_at(i) {
            return Err(format!("timestamp {i} covers the wrong data"));
        }
        let authority = list
            .authority(&ts.authority)
            .ok_or_else(|| format!("timestamp authority {} not trusted", ts.authority))?;
        let message = Timestamp::token_message(&ts.covers, ts.applied_on, ts.validity_end);
        if !authority.public_key.verify(&message, &ts.token) {
            return Err(format!("timestamp {i} token does not verify"));
        }
        protected_until = ts.validity_end;
        previous = ts.applied_on;
    }
    Ok(())
}

/// Validates a detached signature over `content` at date `at`.
///
/// Tampering or a wrong key is `Invalid`. A cryptographically sound
/// signature whose protection (certificate, then timestamp chain) ended
/// before `at` is `Indeterminate`.
pub fn validate(content: &[u8], sig: &Signature, list: &TrustedList, at: SimDate) -> Verdict {
    let Some(cert) = list.certificate(sig.signer) else {
        return Verdict::Invalid(InvalidReason::UnknownCertificate(sig.signer));
    };
    if sha256(content) != sig.digest {
        return Verdict::Invalid(InvalidReason::DigestMismatch);
    }
    if !cert.public_key.verify(&sig.digest, &sig.value) {
        return Verdict::Invalid(InvalidReason::SignatureMismatch);
    }
    if !cert.validity.contains(sig.created_on) {
        return Verdict::Invalid(InvalidReason::CreatedOutsideValidity);
    }
    if let Err(msg) = check_chain(sig, cert, list) {
        return Verdict::Invalid(InvalidReason::TimestampChainBroken(msg));
    }
    if list.tsp(&cert.issuer).is_none() {
        return Verdict::Indeterminate(IndeterminateReason::UntrustedIssuer(cert.issuer.clone()));
    }
    if at < sig.created_on {
        return Verdict::Indeterminate(IndeterminateReason::NotYetCreated);
    }
    let ended = sig.protection_end(cert);
    if at > ended {
        return Verdict::Indeterminate(IndeterminateReason::ProtectionLapsed { ended });
    }
    Verdict::Valid
}

/// Appends a timestamp, pushing the protection end forward. Refused once the
/// current protection has lapsed.
pub fn extend(
    sig: &Signature,
    authority: &TimestampAuthority,
    list: &TrustedList,
    on: SimDate,
) -> Result<Signature, TrustError> {
    let cert = list
        .certificate(sig.signer)
        .ok_or(TrustError::UnknownCertificate(sig.signer))?;
    let ended = sig.protection_end(cert);
    if on > ended {
        return Err(TrustError::ProtectionAlreadyLapsed { ended });
    }
    let floor = sig.timestamps.last().map_or(sig.created_on, |t| t.applied_on);
    if on < floor || (on == floor && !sig.timestamps.is_empty()) {
        return Err(TrustError::TimestampNotIncreasing { previous: floor });
    }
    let mut next = sig.clone();
    next.timestamps.push(authority.stamp(sig.next_anchor(), on));
    Ok(next)
}
