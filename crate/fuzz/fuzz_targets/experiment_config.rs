#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::harness::ExperimentConfig;

fuzz_target!(|s: &str| {
    let _ = ExperimentConfig::from_json(s);
});
