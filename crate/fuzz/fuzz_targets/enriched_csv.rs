#![no_main]

use hmm_fraud::features::{read_enriched_csv, write_enriched_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_enriched_csv(data) else { return };
    let mut buf = Vec::new();
    if write_enriched_csv(&mut buf, &rows).is_ok() {
        let again = read_enriched_csv(buf.as_slice()).expect("written CSV reparses");
        assert_eq!(again, rows);
    }
});
