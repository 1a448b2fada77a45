#![no_main]

use hmm_fraud::pipeline::FeatureEncoder;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = FeatureEncoder::from_json(text) else { return };
    let json = parsed.to_json().expect("parsed value serializes");
    let again = FeatureEncoder::from_json(&json).expect("serialized value reparses");
    assert_eq!(again, parsed);
});
