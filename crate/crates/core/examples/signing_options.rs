//! Runs the four ways a health platform can obtain a citizen's signature
//! and prints the resulting level and where the content travelled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trustfed::calendar::SimDate;
use trustfed::trust::options::{run_signing_option, SigningOption};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 1..=4 {
        let option: SigningOption = n.to_string().parse().unwrap();
        let out = run_signing_option(option, b"I consent", SimDate::ymd(2020, 3, 1), &mut rng).unwrap();
        println!(
            "option {n} {:<10} level={:<9} verdict={} left-platform={} platform-listed={}",
            option.to_string(),
            out.level.to_string(),
            out.verdict,
            out.content_left_platform,
            out.platform_listed
        );
    }
}
