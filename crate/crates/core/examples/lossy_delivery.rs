//! Sends 200 messages across a lossy, duplicating link with an outage and
//! audits the result.

use trustfed::calendar::SimDate;
use trustfed::edelivery::{DeliveryNetwork, Downtime, EvidenceKind, TransportConfig, DEFAULT_PKI};

fn main() {
    let config = TransportConfig {
        loss: 0.3,
        duplication: 0.2,
        downtime: vec![Downtime { start_ms: 500, end_ms: 4000 }],
        seed: 9,
        ..Default::default()
    };
    let mut net = DeliveryNetwork::new(config, SimDate::ymd(2020, 1, 1)).unwrap();
    net.add_access_point("ap-a", "ap://a", DEFAULT_PKI).unwrap();
    net.add_access_point("ap-b", "ap://b", DEFAULT_PKI).unwrap();
    net.add_participant("clinic", "ap-a", "smp.a").unwrap();
    net.add_participant("ncp", "ap-b", "smp.b").unwrap();

    for i in 0..200u32 {
        net.submit("clinic", "ncp", &i.to_be_bytes()).unwrap();
    }
    net.run();

    let audit = net.audit();
    println!("{audit:?}");
    println!("clean: {} after {} ms", audit.is_clean(), net.now_ms());
    let first = net.message_ids().next().unwrap().clone();
    println!("{first}: {} attempts", net.attempts(&first).unwrap());
    for e in net.evidence_for(&first) {
        let kind = match e.kind {
            EvidenceKind::ProofOfSending => "sending",
            EvidenceKind::ProofOfReceiving => "receiving",
            EvidenceKind::ChangeIndication => "change",
        };
        println!("  proof of {kind} at {} ms by {}", e.sim_ms, e.issuer);
    }
    let busiest = net.log().lines().iter().filter(|l| l.event == "lost").count();
    println!("lost transmissions: {busiest}");
}
