//! Prints the bundled federation registry: notification status, dates and
//! the attributes each scheme can assert.

use trustfed::registry::{format_attribute_list, FederationRegistry, SchemeAttributes};

fn main() {
    let reg = FederationRegistry::bundled();
    println!("{:<4} {:<14} {:<12} {:<12} attributes", "ms", "status", "published", "mandatory");
    for s in reg.schemes() {
        let n = &s.notification;
        let attrs = match &s.attributes {
            SchemeAttributes::Unknown => "unknown".to_string(),
            other => format_attribute_list(&other.as_set()),
        };
        println!(
            "{:<4} {:<14} {:<12} {:<12} {}",
            s.member_state.as_str(),
            n.status.to_string(),
            n.published_on.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            n.recognition_mandatory_from().map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            attrs
        );
    }
    for lint in reg.lint() {
        println!("{lint}");
    }
}
