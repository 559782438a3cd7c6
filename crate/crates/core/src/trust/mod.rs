//! Certificates, trusted lists, electronic signatures and seals, and their
//! validation lifecycle.
//!
//! Signing hashes the content and signs the hash with the private key bound
//! to a certificate. Validation recomputes the hash and checks it against the
//! certificate's public key. A certificate only protects a signature until it
//! expires; timestamps appended before that date extend the protection, and
//! each timestamp must in turn be extended before its own expiry.
//!
//! Levels:
//!
//! | certificate qualified | device qualified | level     |
//! |-----------------------|------------------|-----------|
//! | yes                   | yes              | Qualified |
//! | any other combination |                  | Advanced  |
//!
//! Bare assent records (a ticked checkbox, a typed name) carry no
//! cryptography and classify as `Simple`.

mod crypto;
mod list;
pub mod options;
mod signature;

use std::fmt;

use thiserror::Error;

use crate::calendar::SimDate;

pub use crypto::{sha256, Algorithm, Digest32, KeyPair, PublicKey};
pub use list::{
    AuthorityEntry, CertSerial, Certificate, CertificateKind, Issued, Subject, TrustedList, TspEntry,
    Validity,
};
pub use signature::{
    extend, seal, sign, validate, CreationDevice, IndeterminateReason, InvalidReason, Signature,
    Timestamp, TimestampAuthority, Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("unknown trust service provider {0}")]
    UnknownTsp(String),
    #[error("unknown certificate {0}")]
    UnknownCertificate(CertSerial),
    #[error("validity {not_before}..{not_after} is empty")]
    InvalidValidity { not_before: SimDate, not_after: SimDate },
    #[error("certificate expired on {not_after}")]
    CertificateExpired { not_after: SimDate },
    #[error("certificate valid only from {not_before}")]
    CertificateNotYetValid { not_before: SimDate },
    #[error("signing key does not match the certificate")]
    KeyMismatch,
    #[error("expected a {expected} certificate, got {actual}")]
    WrongCertificateKind {
        expected: CertificateKind,
        actual: CertificateKind,
    },
    #[error("device {device} holds no certificate {serial}")]
    DeviceLacksCertificate { device: String, serial: CertSerial },
    #[error("protection lapsed on {ended}; extension refused")]
    ProtectionAlreadyLapsed { ended: SimDate },
    #[error("timestamp must be later than {previous}")]
    TimestampNotIncreasing { previous: SimDate },
    #[error("malformed trust data: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignatureLevel {
    Simple,
    Advanced,
    Qualified,
}

impl fmt::Display for SignatureLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignatureLevel::Simple => "simple",
            SignatureLevel::Advanced => "advanced",
            SignatureLevel::Qualified => "qualified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssentForm {
    Checkbox,
    TypedName(String),
}

/// Assent without cryptography.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssentRecord {
    pub form: AssentForm,
    pub statement: String,
    pub given_on: SimDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignedArtifact {
    Assent(AssentRecord),
    Digital(Signature),
}

/// Classifies a signing artifact. Qualified needs a certificate that is
/// qualified on the trusted list and a qualified creation device, both bound
/// to the signature.
pub fn classify_level(
    artifact: &SignedArtifact,
    cert: Option<&Certificate>,
    device: Option<&CreationDevice>,
    list: &TrustedList,
) -> SignatureLevel {
    let SignedArtifact::Digital(sig) = artifact else {
        return SignatureLevel::Simple;
    };
    let cert_ok = cert.is_some_and(|c| c.serial == sig.signer && list.is_qualified(c));
    let device_ok = device.is_some_and(|d| d.id == sig.device && d.qualified && d.holds(sig.signer));
    if cert_ok && device_ok {
        SignatureLevel::Qualified
    } else {
        SignatureLevel::Advanced
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::CountryCode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        list: TrustedList,
        key: KeyPair,
        cert: Certificate,
        device: CreationDevice,
        tsa: TimestampAuthority,
    }

    fn d(y: i32, m: u32, day: u32) -> SimDate {
        SimDate::ymd(y, m, day)
    }

    fn fixture(cert_qualified: bool, device_qualified: bool) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let de: CountryCode = "DE".parse().unwrap();
        let mut list = TrustedList::new();
        list.add_tsp(de, "qtsp", true);
        list.add_tsp(de, "plain-ca", false);
        let key = KeyPair::generate(&mut rng);
        let tsp = if cert_qualified { "qtsp" } else { "plain-ca" };
        let issued = list
            .issue_certificate(
                tsp,
                Subject::NaturalPerson("Alice".into()),
                key.public().clone(),
                CertificateKind::ForSignature,
                Validity::new(d(2019, 1, 1), d(2021, 1, 1)).unwrap(),
                true,
            )
            .unwrap();
        let device = CreationDevice::new("card", device_qualified).holding(issued.certificate.serial);
        let tsa = TimestampAuthority::new("tsa", true, 24, KeyPair::generate(&mut rng));
        list.add_authority("tsa", true, tsa.key().public().clone());
        Fixture {
            list,
            key,
            cert: issued.certificate,
            device,
            tsa,
        }
    }

    #[test]
    fn issuing_from_unknown_tsp_fails() {
        let mut f = fixture(true, true);
        let err = f
            .list
            .issue_certificate(
                "nobody",
                Subject::NaturalPerson("Bob".into()),
                f.key.public().clone(),
                CertificateKind::ForSignature,
                Validity::new(d(2019, 1, 1), d(2020, 1, 1)).unwrap(),
                false,
            )
            .unwrap_err();
        assert_eq!(err, TrustError::UnknownTsp("nobody".into()));
    }

    #[test]
    fn qualified_request_to_plain_tsp_is_downgraded() {
        let f = fixture(false, true);
        assert!(!f.cert.qualified);
        let mut list = f.list.clone();
        let issued = list
            .issue_certificate(
                "plain-ca",
                Subject::NaturalPerson("Bob".into()),
                f.key.public().clone(),
                CertificateKind::ForSignature,
                Validity::new(d(2019, 1, 1), d(2020, 1, 1)).unwrap(),
                true,
            )
            .unwrap();
        assert!(issued.downgraded);
        assert!(!issued.certificate.qualified);
    }

    #[test]
    fn zero_length_validity_is_rejected() {
        assert!(matches!(
            Validity::new(d(2019, 1, 1), d(2019, 1, 1)),
            Err(TrustError::InvalidValidity { .. })
        ));
    }

    #[test]
    fn sign_and_validate_round_trip() {
        let f = fixture(true, true);
        let sig = sign(b"consent", &f.key, &f.cert, &f.device, d(2019, 6, 1)).unwrap();
        assert_eq!(validate(b"consent", &sig, &f.list, d(2019, 6, 1)), Verdict::Valid);
    }

    #[test]
    fn signing_after_expiry_fails() {
        let f = fixture(true, true);
        assert_eq!(
            sign(b"x", &f.key, &f.cert, &f.device, d(2021, 1, 2)),
            Err(TrustError::CertificateExpired {
                not_after: d(2021, 1, 1)
            })
        );
    }

    #[test]
    fn seal_certificate_cannot_sign_as_person() {
        let mut f = fixture(true, true);
        let org = f
            .list
            .issue_certificate(
                "qtsp",
                Subject::LegalPerson("Hospital".into()),
                f.key.public().clone(),
                CertificateKind::ForSeal,
                Validity::new(d(2019, 1, 1), d(2021, 1, 1)).unwrap(),
                true,
            )
            .unwrap()
            .certificate;
        let device = CreationDevice::new("hsm", true).holding(org.serial);
        assert!(matches!(
            sign(b"x", &f.key, &org, &device, d(2019, 6, 1)),
            Err(TrustError::WrongCertificateKind { .. })
        ));
        let sealed = seal(b"x", &f.key, &org, &device, d(2019, 6, 1)).unwrap();
        assert!(validate(b"x", &sealed, &f.list, d(2019, 6, 1)).is_valid());
    }

    #[test]
    fn foreign_key_is_a_key_mismatch() {
        let f = fixture(true, true);
        let other = KeyPair::from_seed([9; 32]);
        assert_eq!(
            sign(b"x", &other, &f.cert, &f.device, d(2019, 6, 1)),
            Err(TrustError::KeyMismatch)
        );
    }

    #[test]
    fn lapse_and_extension() {
        let f = fixture(true, true);
        let sig = sign(b"doc", &f.key, &f.cert, &f.device, d(2019, 6, 1)).unwrap();
        assert_eq!(
            validate(b"doc", &sig, &f.list, d(2021, 1, 2)),
            Verdict::Indeterminate(IndeterminateReason::ProtectionLapsed {
                ended: d(2021, 1, 1)
            })
        );
        let extended = extend(&sig, &f.tsa, &f.list, d(2020, 12, 31)).unwrap();
        assert_eq!(extended.timestamps.len(), 1);
        assert_eq!(validate(b"doc", &extended, &f.list, d(2021, 1, 2)), Verdict::Valid);
        assert!(matches!(
            extend(&sig, &f.tsa, &f.list, d(2021, 1, 2)),
            Err(TrustError::ProtectionAlreadyLapsed { .. })
        ));
        let twice = extend(&extended, &f.tsa, &f.list, d(2022, 6, 1)).unwrap();
        assert_eq!(twice.timestamps.len(), 2);
        assert!(twice.timestamps[0].applied_on < twice.timestamps[1].applied_on);
        assert_eq!(validate(b"doc", &twice, &f.list, d(2024, 6, 1)), Verdict::Valid);
    }

    #[test]
    fn forged_timestamp_breaks_the_chain() {
        let f = fixture(true, true);
        let sig = sign(b"doc", &f.key, &f.cert, &f.device, d(2019, 6, 1)).unwrap();
        let mut extended = extend(&sig, &f.tsa, &f.list, d(2020, 6, 1)).unwrap();
        extended.timestamps[0].validity_end = d(2040, 1, 1);
        assert!(matches!(
            validate(b"doc", &extended, &f.list, d(2021, 6, 1)),
            Verdict::Invalid(InvalidReason::TimestampChainBroken(_))
        ));
    }

    #[test]
    fn level_truth_table() {
        for (cq, dq) in [(false, false), (false, true), (true, false), (true, true)] {
            let f = fixture(cq, dq);
            let sig = sign(b"c", &f.key, &f.cert, &f.device, d(2019, 6, 1)).unwrap();
            let level = classify_level(&SignedArtifact::Digital(sig), Some(&f.cert), Some(&f.device), &f.list);
            let want = if cq && dq {
                SignatureLevel::Qualified
            } else {
                SignatureLevel::Advanced
            };
            assert_eq!(level, want, "cert {cq} device {dq}");
        }
        let assent = SignedArtifact::Assent(AssentRecord {
            form: AssentForm::TypedName("Alice".into()),
            statement: "I agree".into(),
            given_on: d(2019, 6, 1),
        });
        assert_eq!(
            classify_level(&assent, None, None, &TrustedList::new()),
            SignatureLevel::Simple
        );
    }

    #[test]
    fn trusted_list_text_round_trip() {
        let f = fixture(true, true);
        let text = f.list.to_text();
        let parsed = TrustedList::from_text(&text).unwrap();
        assert_eq!(parsed.to_text(), text);
        assert_eq!(parsed.certificate(f.cert.serial), Some(&f.cert));
    }

    #[test]
    fn detached_line_round_trip() {
        let f = fixture(true, true);
        let sig = sign(b"doc", &f.key, &f.cert, &f.device, d(2019, 6, 1)).unwrap();
        let sig = extend(&sig, &f.tsa, &f.list, d(2020, 6, 1)).unwrap();
        let back = Signature::from_line(&sig.to_line()).unwrap();
        assert_eq!(back, sig);
        assert!(Signature::from_line("1;2;3").is_err());
    }
}
