//! Fuzzes the JSON run-manifest decoder and the re-dispatch surface a
//! hostile manifest can reach: embedded problem assembly and manifest
//! re-serialization. Every path must return an error instead of panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(manifest) = gbsde::parse_manifest(text) else {
        return;
    };
    let _ = manifest.problem.to_spec();
    let _ = manifest.problem.build_grid();
    if let Some(lo) = &manifest.problem_lo {
        let _ = lo.to_spec();
    }
    let _ = gbsde::config::manifest_to_json(&manifest);
});
