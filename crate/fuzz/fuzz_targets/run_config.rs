#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::io::RunConfig;

fuzz_target!(|data: &str| {
    // A config that parses must survive a round trip through TOML.
    if let Ok(config) = RunConfig::parse(data) {
        let text = config.to_toml();
        let again = RunConfig::parse(&text).expect("re-parse of serialized config");
        assert_eq!(again.to_toml(), text);
    }
});
