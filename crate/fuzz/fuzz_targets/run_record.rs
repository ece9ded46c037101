#![no_main]

use libfuzzer_sys::fuzz_target;
use ncl::optimizers::RunRecord;

fuzz_target!(|s: &str| {
    let Ok(rec) = RunRecord::from_json(s) else {
        return;
    };
    // Non-finite floats have no JSON form, so only finite records must round-trip.
    if let Ok(back) = RunRecord::from_json(&rec.to_json()) {
        assert_eq!(back.to_json(), rec.to_json());
    }
    let _ = rec.last();
});
