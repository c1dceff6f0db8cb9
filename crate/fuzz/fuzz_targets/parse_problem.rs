//! Fuzzes the TOML problem-file decoder and everything a hostile config
//! can reach before any solver runs: spec assembly, grid construction,
//! schedule resolution, scenario-control building, and the payoff
//! functional. Every path must return an error instead of panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = gbsde::parse_problem_toml(text) else {
        return;
    };
    let _ = cfg.to_spec();
    let _ = cfg.build_grid();
    let _ = cfg.schedule();
    let _ = cfg.scenario_controls();
    if let Some(cyl) = &cfg.cylinder {
        let _ = cyl.to_functional();
    }
});
