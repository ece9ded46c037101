#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::graph::NetworkConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<NetworkConfig>(data) {
        if let Ok((g, w)) = cfg.build() {
            assert_eq!(g.n(), w.n());
            assert!(w.is_row_stochastic());
        }
    }
});
