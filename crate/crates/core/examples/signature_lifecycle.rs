//! Signs a document, lets the certificate expire, and extends a second
//! signature with a timestamp so it stays verifiable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trustfed::calendar::SimDate;
use trustfed::trust::{
    classify_level, extend, sign, validate, CertificateKind, CreationDevice, KeyPair, SignedArtifact, Subject,
    TimestampAuthority, TrustedList, Validity,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut list = TrustedList::new();
    list.add_tsp("DE".parse().unwrap(), "d-trust", true);
    let tsa = TimestampAuthority::new("tsa", true, 60, KeyPair::generate(&mut rng));
    list.add_authority("tsa", true, tsa.key().public().clone());

    let key = KeyPair::generate(&mut rng);
    let validity = Validity::new(SimDate::ymd(2019, 1, 1), SimDate::ymd(2021, 1, 1)).unwrap();
    let cert = list
        .issue_certificate(
            "d-trust",
            Subject::NaturalPerson("Alice".into()),
            key.public().clone(),
            CertificateKind::ForSignature,
            validity,
            true,
        )
        .unwrap()
        .certificate;
    let card = CreationDevice::new("card", true).holding(cert.serial);

    let doc = b"lab report 2019-06-01";
    let sig = sign(doc, &key, &cert, &card, SimDate::ymd(2019, 6, 1)).unwrap();
    let level = classify_level(&SignedArtifact::Digital(sig.clone()), Some(&cert), Some(&card), &list);
    println!("level: {level}");
    println!("2019-06-01: {}", validate(doc, &sig, &list, SimDate::ymd(2019, 6, 1)));
    println!("tampered:   {}", validate(b"lab report 2019-06-02", &sig, &list, SimDate::ymd(2019, 6, 1)));
    println!("2021-06-01: {}", validate(doc, &sig, &list, SimDate::ymd(2021, 6, 1)));

    let extended = extend(&sig, &tsa, &list, SimDate::ymd(2020, 12, 1)).unwrap();
    println!("extended, 2021-06-01: {}", validate(doc, &extended, &list, SimDate::ymd(2021, 6, 1)));
    println!("late extension: {}", extend(&sig, &tsa, &list, SimDate::ymd(2021, 6, 1)).unwrap_err());
}
