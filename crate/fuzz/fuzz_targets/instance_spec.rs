#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::objectives::QuadraticEnsemble;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = QuadraticEnsemble::from_json(s) {
        let back = QuadraticEnsemble::from_json(&q.to_json()).unwrap();
        assert_eq!(back.to_json(), q.to_json());
    }
});
