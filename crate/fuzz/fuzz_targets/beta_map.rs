#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::io::parse_beta_map;

fuzz_target!(|data: &[u8]| {
    if let Ok(beta) = parse_beta_map(data) {
        assert!(beta.iter().all(|b| (-1.0..=1.0).contains(b)));
    }
});
