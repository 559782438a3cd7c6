//! Ways a health platform can offer qualified signing to its users.
//!
//! 1. `ExternalSigning`: users sign elsewhere with their own qualified
//!    device; the platform only validates.
//! 2. `LocalService`: an on-premises signing service run by the platform,
//!    backed by a software key store.
//! 3. `RemoteService`: a third-party qualified remote signing service; the
//!    content leaves the platform.
//! 4. `OwnTrustServiceProvider`: the platform operator becomes a qualified
//!    TSP listed on the trusted list and runs a qualified device itself.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::calendar::SimDate;
use crate::registry::CountryCode;

use super::{
    classify_level, sign, validate, CertificateKind, CreationDevice, KeyPair, SignatureLevel, SignedArtifact,
    Subject, TrustError, TrustedList, Validity, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigningOption {
    ExternalSigning,
    LocalService,
    RemoteService,
    OwnTrustServiceProvider,
}

impl SigningOption {
    pub const ALL: [SigningOption; 4] = [
        SigningOption::ExternalSigning,
        SigningOption::LocalService,
        SigningOption::RemoteService,
        SigningOption::OwnTrustServiceProvider,
    ];

    pub fn number(self) -> u8 {
        match self {
            SigningOption::ExternalSigning => 1,
            SigningOption::LocalService => 2,
            SigningOption::RemoteService => 3,
            SigningOption::OwnTrustServiceProvider => 4,
        }
    }
}

impl FromStr for SigningOption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" | "external" => Ok(Self::ExternalSigning),
            "2" | "local" => Ok(Self::LocalService),
            "3" | "remote" => Ok(Self::RemoteService),
            "4" | "own-tsp" => Ok(Self::OwnTrustServiceProvider),
            other => Err(format!("unknown signing option `{other}`")),
        }
    }
}

impl fmt::Display for SigningOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigningOption::ExternalSigning => "external",
            SigningOption::LocalService => "local",
            SigningOption::RemoteService => "remote",
            SigningOption::OwnTrustServiceProvider => "own-tsp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionOutcome {
    pub option: SigningOption,
    pub level: SignatureLevel,
    pub verdict: Verdict,
    /// The signed content was transmitted to a third party.
    pub content_left_platform: bool,
    /// The platform operator is itself on the trusted list.
    pub platform_listed: bool,
}

/// Stand-in for a third-party remote signing service. Counts the documents
/// it has seen.
#[derive(Debug)]
pub struct RemoteSigningService {
    pub provider: String,
    device: CreationDevice,
    key: KeyPair,
    pub documents_received: usize,
}

impl RemoteSigningService {
    pub fn sign_remotely(
        &mut self,
        content: &[u8],
        cert: &super::Certificate,
        on: SimDate,
    ) -> Result<super::Signature, TrustError> {
        self.documents_received += 1;
        sign(content, &self.key, cert, &self.device, on)
    }
}

/// Signs a consent document under `option` and reports the resulting level,
/// the validation verdict, and where the content went.
pub fn run_signing_option(
    option: SigningOption,
    content: &[u8],
    on: SimDate,
    rng: &mut impl RngCore,
) -> Result<OptionOutcome, TrustError> {
    let de: CountryCode = "DE".parse().expect("valid code");
    let mut list = TrustedList::new();
    list.add_tsp(de, "external-qtsp", true);
    let validity = Validity::new(on.add_months(-1), on.add_years(2))?;
    let subject = Subject::NaturalPerson("citizen".into());
    let key = KeyPair::generate(rng);

    let (sig, cert, device, left, listed) = match option {
        SigningOption::ExternalSigning => {
            let cert = list
                .issue_certificate("external-qtsp", subject, key.public().clone(), CertificateKind::ForSignature, validity, true)?
                .certificate;
            let card = CreationDevice::new("citizen-smartcard", true).holding(cert.serial);
            // Signed on the citizen's own machine; only the result is uploaded.
            let sig = sign(content, &key, &cert, &card, on)?;
            (sig, cert, card, false, false)
        }
        SigningOption::LocalService => {
            let cert = list
                .issue_certificate("external-qtsp", subject, key.public().clone(), CertificateKind::ForSignature, validity, true)?
                .certificate;
            let keystore = CreationDevice::new("platform-keystore", false).holding(cert.serial);
            let sig = sign(content, &key, &cert, &keystore, on)?;
            (sig, cert, keystore, false, false)
        }
        SigningOption::RemoteService => {
            list.add_tsp(de, "remote-signing-qtsp", true);
            let cert = list
                .issue_certificate(
                    "remote-signing-qtsp",
                    subject,
                    key.public().clone(),
                    CertificateKind::ForSignature,
                    validity,
                    true,
                )?
                .certificate;
            let mut service = RemoteSigningService {
                provider: "remote-signing-qtsp".into(),
                device: CreationDevice::new("remote-qscd", true).holding(cert.serial),
                key,
                documents_received: 0,
            };
            let sig = service.sign_remotely(content, &cert, on)?;
            let device = service.device.clone();
            (sig, cert, device, service.documents_received > 0, false)
        }
        SigningOption::OwnTrustServiceProvider => {
            list.add_tsp(de, "platform-qtsp", true);
            let cert = list
                .issue_certificate("platform-qtsp", subject, key.public().clone(), CertificateKind::ForSignature, validity, true)?
                .certificate;
            let hsm = CreationDevice::new("platform-qscd", true).holding(cert.serial);
            let sig = sign(content, &key, &cert, &hsm, on)?;
            (sig, cert, hsm, false, true)
        }
    };
    let verdict = validate(content, &sig, &list, on);
    let level = classify_level(&SignedArtifact::Digital(sig), Some(&cert), Some(&device), &list);
    Ok(OptionOutcome {
        option,
        level,
        verdict,
        content_left_platform: left,
        platform_listed: listed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn each_option_yields_its_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let on = SimDate::ymd(2020, 3, 1);
        let outcomes: Vec<_> = SigningOption::ALL
            .iter()
            .map(|o| run_signing_option(*o, b"consent to donation", on, &mut rng).unwrap())
            .collect();
        assert!(outcomes.iter().all(|o| o.verdict.is_valid()));
        let levels: Vec<_> = outcomes.iter().map(|o| o.level).collect();
        assert_eq!(
            levels,
            vec![
                SignatureLevel::Qualified,
                SignatureLevel::Advanced,
                SignatureLevel::Qualified,
                SignatureLevel::Qualified
            ]
        );
        assert!(outcomes[2].content_left_platform);
        assert!(!outcomes[0].content_left_platform);
        assert!(outcomes[3].platform_listed);
    }
}
