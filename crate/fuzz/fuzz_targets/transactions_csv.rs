#![no_main]

use hmm_fraud::pipeline::{read_transactions, write_transactions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(txns) = read_transactions(data) else { return };
    let mut buf = Vec::new();
    if write_transactions(&mut buf, &txns).is_ok() {
        let again = read_transactions(buf.as_slice()).expect("written CSV reparses");
        assert_eq!(again, txns);
    }
});
