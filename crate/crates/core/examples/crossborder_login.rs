//! A German citizen signs in to an Austrian public portal. Prints the hop
//! trace and the attributes that reached the service provider.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trustfed::calendar::SimDate;
use trustfed::eidas::{export_trace, AuthResult, Citizen, EidasNetwork, PersonIdentity, Sector, ServiceProvider};
use trustfed::registry::{AssuranceLevel, AttributeKind, FederationRegistry};

fn main() {
    let clock = SimDate::ymd(2019, 6, 1);
    let reg = FederationRegistry::bundled().with_clock(clock);
    let net = EidasNetwork::proxy_nodes_for(&reg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let sp = ServiceProvider::new("portal", "AT".parse().unwrap(), AssuranceLevel::Substantial, Sector::Public)
        .request(AttributeKind::Gender)
        .request(AttributeKind::PlaceOfBirth);
    let erika = Citizen::new(
        "erika",
        "DE".parse().unwrap(),
        PersonIdentity::new("Mustermann", "Erika", SimDate::ymd(1964, 8, 12), "DE/erika")
            .with(AttributeKind::PlaceOfBirth, "Berlin")
            .with(AttributeKind::Gender, "female"),
        "pin",
    );

    let flow = net.run_full_flow(&reg, &sp, &erika, "pin", clock, &mut rng);
    print!("{}", export_trace(&flow.trace));
    match &flow.result {
        AuthResult::Success { identity, asserting_scheme, assurance } => {
            println!("success via {asserting_scheme} at {assurance}");
            for k in identity.attributes() {
                println!("  {k} = {}", identity.value(k).unwrap_or_default());
            }
        }
        AuthResult::Failure { step, error } => println!("failed at step {step}: {error}"),
    }

    let nl = Citizen::new(
        "sanne",
        "NL".parse().unwrap(),
        PersonIdentity::new("Jansen", "Sanne", SimDate::ymd(1990, 2, 28), "NL/sanne"),
        "pin",
    );
    let flow = net.run_full_flow(&reg, &sp, &nl, "pin", clock, &mut rng);
    println!("NL origin: {:?}", flow.result.error());
}
