//! Dynamic participant discovery: the locator maps a participant to the
//! metadata publisher serving it; the publisher holds the participant's
//! access point, protocols and envelope certificate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::trust::{CertSerial, TrustedList};

use super::DeliveryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    As4,
    As2,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "as4" => Ok(Self::As4),
            "as2" => Ok(Self::As2),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::As4 => "AS4",
            Protocol::As2 => "AS2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmpRecord {
    pub participant: String,
    pub access_point: String,
    pub address: String,
    pub protocols: BTreeSet<Protocol>,
    pub certificate: CertSerial,
}

/// Locator (participant → publisher address) plus the publishers themselves.
#[derive(Debug, Clone, Default)]
pub struct Discovery {
    sml: BTreeMap<String, String>,
    smps: BTreeMap<String, BTreeMap<String, SmpRecord>>,
}

impl Discovery {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_certificate(record: &SmpRecord, list: &TrustedList) -> Result<(), DeliveryError> {
        if list.certificate(record.certificate).is_none() {
            return Err(DeliveryError::InvariantViolation(format!(
                "certificate {} of {} is not on the trusted list",
                record.certificate, record.participant
            )));
        }
        Ok(())
    }

    pub fn register_participant(
        &mut self,
        smp_address: &str,
        record: SmpRecord,
        list: &TrustedList,
    ) -> Result<(), DeliveryError> {
        if self.sml.contains_key(&record.participant) {
            return Err(DeliveryError::DuplicateParticipant(record.participant));
        }
        Self::check_certificate(&record, list)?;
        self.sml.insert(record.participant.clone(), smp_address.to_string());
        self.smps
            .entry(smp_address.to_string())
            .or_default()
            .insert(record.participant.clone(), record);
        Ok(())
    }

    /// Replaces the metadata of an already registered participant.
    pub fn update_participant(&mut self, record: SmpRecord, list: &TrustedList) -> Result<(), DeliveryError> {
        let smp = self
            .sml
            .get(&record.participant)
            .ok_or_else(|| DeliveryError::NotFound(record.participant.clone()))?
            .clone();
        Self::check_certificate(&record, list)?;
        self.smps
            .entry(smp)
            .or_default()
            .insert(record.participant.clone(), record);
        Ok(())
    }

    pub fn lookup(&self, participant: &str) -> Result<&SmpRecord, DeliveryError> {
        self.sml
            .get(participant)
            .and_then(|smp| self.smps.get(smp))
            .and_then(|records| records.get(participant))
            .ok_or_else(|| DeliveryError::NotFound(participant.to_string()))
    }

    pub fn smp_of(&self, participant: &str) -> Option<&str> {
        self.sml.get(participant).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::SimDate;
    use crate::trust::{CertificateKind, KeyPair, Subject, Validity};

    fn list_with_cert() -> (TrustedList, CertSerial) {
        let mut list = TrustedList::new();
        list.add_tsp("BE".parse().unwrap(), "pki", true);
        let cert = list
            .issue_certificate(
                "pki",
                Subject::LegalPerson("ap".into()),
                KeyPair::from_seed([1; 32]).public().clone(),
                CertificateKind::ForSeal,
                Validity::new(SimDate::ymd(2019, 1, 1), SimDate::ymd(2022, 1, 1)).unwrap(),
                true,
            )
            .unwrap()
            .certificate;
        (list, cert.serial)
    }

    fn record(id: &str, addr: &str, cert: CertSerial) -> SmpRecord {
        SmpRecord {
            participant: id.into(),
            access_point: "ap-1".into(),
            address: addr.into(),
            protocols: [Protocol::As4].into(),
            certificate: cert,
        }
    }

    #[test]
    fn register_and_lookup() {
        let (list, serial) = list_with_cert();
        let mut d = Discovery::new();
        d.register_participant("smp.example", record("hospital", "10.0.0.1", serial), &list)
            .unwrap();
        assert_eq!(d.lookup("hospital").unwrap().address, "10.0.0.1");
        assert_eq!(d.lookup("nobody"), Err(DeliveryError::NotFound("nobody".into())));
        assert_eq!(
            d.register_participant("smp.example", record("hospital", "10.0.0.2", serial), &list),
            Err(DeliveryError::DuplicateParticipant("hospital".into()))
        );
    }

    #[test]
    fn re_registration_is_last_write_wins() {
        let (list, serial) = list_with_cert();
        let mut d = Discovery::new();
        d.register_participant("smp.example", record("ncp-be", "10.0.0.1", serial), &list)
            .unwrap();
        d.update_participant(record("ncp-be", "10.0.0.9", serial), &list).unwrap();
        assert_eq!(d.lookup("ncp-be").unwrap().address, "10.0.0.9");
    }

    #[test]
    fn untrusted_certificate_is_rejected() {
        let (list, _) = list_with_cert();
        let mut d = Discovery::new();
        let err = d
            .register_participant("smp.example", record("x", "10.0.0.1", CertSerial(999)), &list)
            .unwrap_err();
        assert!(matches!(err, DeliveryError::InvariantViolation(_)));
        assert!(d.lookup("x").is_err());
    }
}
