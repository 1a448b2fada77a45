#![no_main]

use hmm_fraud::pipeline::FeatureSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(set) = text.parse::<FeatureSet>() else { return };
    assert_eq!(set.to_string().parse::<FeatureSet>().unwrap(), set);
});
