#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::consensus::OperatorConfig;

fuzz_target!(|s: &str| {
    if let Ok(cfg) = OperatorConfig::from_json(s) {
        let again = serde_json::to_string(&cfg).unwrap();
        assert_eq!(OperatorConfig::from_json(&again).unwrap(), cfg);
    }
});
