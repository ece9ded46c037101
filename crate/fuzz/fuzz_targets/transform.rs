#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::transforms::Transform;

fuzz_target!(|data: &[u8]| {
    let Ok(t) = serde_json::from_slice::<Transform>(data) else {
        return;
    };
    let Ok(t) = t.validated() else {
        return;
    };
    for x in [0.5, 1.0, 3.0] {
        let _ = t.inverse(t.forward(x));
    }
    if let Ok((lp, lm)) = t.lipschitz_bounds(0.5, 3.0) {
        assert!(lp >= 0.0 && lm >= 0.0);
    }
});
