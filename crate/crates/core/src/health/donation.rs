//! Data donation to the research store.

use crate::eidas::PersonIdentity;
use crate::trust::{classify_level, sha256, validate, AssentRecord, CreationDevice, Signature, SignatureLevel, SignedArtifact};

use super::{CitizenAccount, ContactHandles, HealthError, HealthRecord, Platform, RecordId};

/// Consent to a donation: a plain assent or a digital signature over
/// [`Platform::consent_statement`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consent {
    Assent(AssentRecord),
    Signed { signature: Signature, device: CreationDevice },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResearchDonation {
    pub id: u64,
    pub document: HealthRecord,
    pub consent_level: SignatureLevel,
    /// SHA-256 of the consent artifact, hex.
    pub consent_ref: String,
}

const REDACTED: &[u8] = b"#";

fn strip(haystack: &mut Vec<u8>, needle: &[u8]) -> bool {
    if needle.is_empty() || haystack.len() < needle.len() {
        return false;
    }
    let replacement: &[u8] = if needle.len() > 1 { REDACTED } else { b"" };
    let mut out = Vec::with_capacity(haystack.len());
    let mut i = 0;
    let mut hit = false;
    while i < haystack.len() {
        if haystack[i..].starts_with(needle) {
            out.extend_from_slice(replacement);
            i += needle.len();
            hit = true;
        } else {
            out.push(haystack[i]);
            i += 1;
        }
    }
    *haystack = out;
    hit
}

/// Copy of `record` with every identity attribute value and contact handle
/// removed from tag and payload. Replacement shortens the text, so
/// repeating until nothing matches terminates, and the result contains none
/// of the values even where a removal joined two fragments.
pub fn deidentify(record: &HealthRecord, identity: Option<&PersonIdentity>, handles: &ContactHandles) -> HealthRecord {
    let mut needles: Vec<Vec<u8>> = identity.map(|p| p.values()).unwrap_or_default().into_iter().map(String::into_bytes).collect();
    needles.extend(handles.values().into_iter().map(|h| h.as_bytes().to_vec()));
    needles.retain(|n| !n.is_empty());
    let mut tag = record.type_tag.clone().into_bytes();
    let mut payload = record.payload.clone();
    loop {
        let mut hit = false;
        for n in &needles {
            hit |= strip(&mut tag, n);
            hit |= strip(&mut payload, n);
        }
        if !hit {
            break;
        }
    }
    HealthRecord {
        type_tag: String::from_utf8_lossy(&tag).into_owned(),
        payload,
        seal: None,
    }
}

impl Platform {
    /// Text a signed consent must cover.
    pub fn consent_statement(account: &str, record: RecordId) -> String {
        format!("I donate record {record} of account {account} for research")
    }

    /// Decrypts on the donor's side, de-identifies, and files the copy in
    /// the research store.
    pub fn donate(
        &mut self,
        donor: &CitizenAccount,
        record: RecordId,
        consent: Option<&Consent>,
    ) -> Result<ResearchDonation, HealthError> {
        let consent = consent.ok_or(HealthError::ConsentMissing)?;
        let (level, consent_ref) = match consent {
            Consent::Assent(a) => (
                classify_level(&SignedArtifact::Assent(a.clone()), None, None, &self.trusted_list),
                hex::encode(sha256(format!("{:?}|{}|{}", a.form, a.statement, a.given_on).as_bytes())),
            ),
            Consent::Signed { signature, device } => {
                let statement = Self::consent_statement(&donor.id, record);
                let verdict = validate(statement.as_bytes(), signature, &self.trusted_list, self.clock);
                if !verdict.is_valid() {
                    return Err(HealthError::ConsentInvalid(verdict.label().to_string()));
                }
                let cert = self.trusted_list.certificate(signature.signer);
                (
                    classify_level(&SignedArtifact::Digital(signature.clone()), cert, Some(device), &self.trusted_list),
                    hex::encode(sha256(signature.to_line().as_bytes())),
                )
            }
        };
        if level < self.policy.min_consent_level {
            return Err(HealthError::ConsentInsufficient {
                required: self.policy.min_consent_level,
                actual: level,
            });
        }
        let plain = self.read(donor, record)?;
        let document = deidentify(&plain, donor.identity.as_ref(), &donor.handles);
        let donation = ResearchDonation {
            id: self.research.len() as u64 + 1,
            document,
            consent_level: level,
            consent_ref,
        };
        self.log.push(
            self.now_ms,
            "research",
            "donation",
            &format!("don-{}", donation.id),
            &format!("consent={level}"),
        );
        self.research.push(donation.clone());
        Ok(donation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::SimDate;
    use crate::eidas::AuthResult;
    use crate::registry::AssuranceLevel;
    use crate::trust::{sign, AssentForm, CertificateKind, KeyPair, Subject, Validity};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn donor(p: &mut Platform, rng: &mut ChaCha8Rng) -> CitizenAccount {
        let eid = AuthResult::Success {
            identity: PersonIdentity::new("Janssens", "An", SimDate::ymd(1980, 3, 4), "BE/77"),
            asserting_scheme: "BE".parse().unwrap(),
            assurance: AssuranceLevel::High,
        };
        p.register_citizen(ContactHandles::email("an@example.be"), Some(&eid), rng).unwrap()
    }

    fn assent() -> Consent {
        Consent::Assent(AssentRecord {
            form: AssentForm::Checkbox,
            statement: "yes".into(),
            given_on: SimDate::ymd(2020, 1, 1),
        })
    }

    #[test]
    fn family_name_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 1);
        let d = donor(&mut p, &mut rng);
        let rec = HealthRecord::new("note", "Patient Janssens, born 1980-03-04, mail an@example.be: stable");
        let rid = p.upload_record(&d, &rec, &mut rng).unwrap();
        let don = p.donate(&d, rid, Some(&assent())).unwrap();
        let text = String::from_utf8(don.document.payload.clone()).unwrap();
        assert!(!text.contains("Janssens") && !text.contains("1980-03-04") && !text.contains("an@example.be"));
        assert!(text.contains("stable"));
        assert_eq!(don.consent_level, SignatureLevel::Simple);
        assert_eq!(p.donate(&d, rid, None).unwrap_err(), HealthError::ConsentMissing);
    }

    #[test]
    fn qualified_consent_is_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 1);
        p.policy.min_consent_level = SignatureLevel::Qualified;
        p.trusted_list.add_tsp("BE".parse().unwrap(), "qtsp", true);
        let d = donor(&mut p, &mut rng);
        let rid = p.upload_record(&d, &HealthRecord::new("note", "ok"), &mut rng).unwrap();
        assert!(matches!(
            p.donate(&d, rid, Some(&assent())),
            Err(HealthError::ConsentInsufficient { .. })
        ));
        let key = KeyPair::generate(&mut rng);
        let cert = p
            .trusted_list
            .issue_certificate(
                "qtsp",
                Subject::NaturalPerson("An Janssens".into()),
                key.public().clone(),
                CertificateKind::ForSignature,
                Validity::new(SimDate::ymd(2019, 1, 1), SimDate::ymd(2022, 1, 1)).unwrap(),
                true,
            )
            .unwrap()
            .certificate;
        let card = CreationDevice::new("eid-card", true).holding(cert.serial);
        let stmt = Platform::consent_statement(&d.id, rid);
        let sig = sign(stmt.as_bytes(), &key, &cert, &card, p.clock).unwrap();
        let don = p
            .donate(&d, rid, Some(&Consent::Signed { signature: sig, device: card }))
            .unwrap();
        assert_eq!(don.consent_level, SignatureLevel::Qualified);
    }

    proptest! {
        #[test]
        fn stripped_output_contains_no_value(
            name in "[A-Za-z]{1,6}",
            noise in prop::collection::vec(prop::sample::select(vec!["ab", "a", "b", "-", "x"]), 0..30),
        ) {
            let identity = PersonIdentity::new(name.clone(), "ab", SimDate::ymd(1990, 1, 1), "id");
            let mut payload = String::new();
            for n in &noise {
                payload.push_str(n);
                payload.push_str(&name[..name.len() / 2]);
            }
            let out = deidentify(&HealthRecord::new("t", payload), Some(&identity), &ContactHandles::default());
            for v in identity.values() {
                prop_assert!(!out.payload.windows(v.len()).any(|w| w == v.as_bytes()));
            }
        }
    }
}
