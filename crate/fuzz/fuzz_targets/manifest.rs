#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::io::RunManifest;

fuzz_target!(|data: &str| {
    if let Ok(manifest) = RunManifest::parse(data) {
        let _ = RunManifest::parse(&manifest.to_json()).expect("re-parse of serialized manifest");
    }
});
