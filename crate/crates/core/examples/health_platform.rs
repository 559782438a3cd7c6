//! Two citizens on the zero-knowledge platform: upload, PIN-confirmed
//! sharing, revocation, donation, and a scan of what the server stores.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustfed::calendar::SimDate;
use trustfed::health::{scan_for_markers, Consent, ContactHandles, HealthRecord, Platform, ShareMode};
use trustfed::trust::{AssentForm, AssentRecord};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = Platform::new(SimDate::ymd(2020, 5, 4), 5);
    let alice = p.register_citizen(ContactHandles::email("alice@example.at"), None, &mut rng).unwrap();
    let bob = p.register_citizen(ContactHandles::email("bob@example.at"), None, &mut rng).unwrap();

    let mut marker = [0u8; 32];
    rng.fill_bytes(&mut marker);
    let mut payload = b"blood pressure 120/80, contact alice@example.at ".to_vec();
    payload.extend_from_slice(&marker);
    let rid = p.upload_record(&alice, &HealthRecord::new("vitals", payload), &mut rng).unwrap();
    println!("uploaded {rid}, readers {:?}", p.readers(rid).unwrap());

    let grant = p
        .handshake_share(&alice, &bob.id, ShareMode::InPerson, &[rid], |pin| pin.clone(), &mut rng)
        .unwrap();
    println!("bob reads: {}", String::from_utf8_lossy(&p.read(&bob, rid).unwrap().payload[..14]));
    p.revoke(&alice.id, grant.id).unwrap();
    println!("after revoke: {}", p.read(&bob, rid).unwrap_err());

    let consent = Consent::Assent(AssentRecord {
        form: AssentForm::Checkbox,
        statement: Platform::consent_statement(&alice.id, rid),
        given_on: p.clock,
    });
    let don = p.donate(&alice, rid, Some(&consent)).unwrap();
    println!("research copy: {}", String::from_utf8_lossy(&don.document.payload[..33]));

    let dump = p.dump_store();
    println!(
        "store dump {} bytes, marker hits {}, key hits {}",
        dump.len(),
        scan_for_markers(&dump, &[marker]),
        scan_for_markers(&dump, &[alice.keys.secret_bytes()])
    );
}
