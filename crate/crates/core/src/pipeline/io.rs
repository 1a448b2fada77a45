//! Transaction CSV ingestion and export.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sequencer::Transaction;

pub const TRANSACTION_HEADER: [&str; 8] = [
    "tx_id",
    "timestamp",
    "card_id",
    "terminal_id",
    "amount",
    "country",
    "card_type",
    "is_fraud",
];

/// Parses and validates a transaction CSV. Rows keep file order.
pub fn read_transactions<R: Read>(reader: R) -> Result<Vec<Transaction>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .from_reader(reader);
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != TRANSACTION_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", TRANSACTION_HEADER.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in r.deserialize::<Transaction>() {
        let t = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let err = |msg: String| Error::Parse { line, msg };
        if t.timestamp < 0 {
            return Err(err(format!("negative timestamp {}", t.timestamp)));
        }
        if !(t.amount.is_finite() && t.amount >= 0.0) {
            return Err(err(format!("amount must be finite and non-negative, got {}", t.amount)));
        }
        if !seen.insert(t.tx_id) {
            return Err(err(format!("duplicate tx_id {}", t.tx_id)));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_transactions<W: Write>(writer: W, txns: &[Transaction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer);
    w.write_record(TRANSACTION_HEADER)?;
    for t in txns {
        for field in [&t.card_id, &t.terminal_id, &t.country, &t.card_type] {
            if field.contains([',', '\n', '\r', '"']) {
                return Err(Error::domain(format!(
                    "field {field:?} cannot be written without quoting"
                )));
            }
        }
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "tx_id,timestamp,card_id,terminal_id,amount,country,card_type,is_fraud\n\
        1,1000,c1,t1,12.5,BE,visa,0\n\
        2,1060,c1,t2,3.0,NL,visa,1\n";

    #[test]
    fn empty_list_round_trips() {
        let mut buf = Vec::new();
        write_transactions(&mut buf, &[]).unwrap();
        assert_eq!(read_transactions(buf.as_slice()).unwrap(), vec![]);
    }

    #[test]
    fn reads_sample() {
        let txns = read_transactions(SAMPLE.as_bytes()).unwrap();
        assert_eq!(txns.len(), 2);
        assert!(txns[1].is_fraud);
        assert_eq!(txns[0].amount, 12.5);
        let mut buf = Vec::new();
        write_transactions(&mut buf, &txns).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_header = SAMPLE.replacen("is_fraud", "fraud", 1);
        assert!(matches!(read_transactions(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let dup = format!("{SAMPLE}1,1100,c1,t1,1,BE,visa,0\n");
        assert!(read_transactions(dup.as_bytes()).is_err());
        let neg = SAMPLE.replace("12.5", "-1");
        assert!(read_transactions(neg.as_bytes()).is_err());
        let label = SAMPLE.replace("visa,1", "visa,2");
        assert!(read_transactions(label.as_bytes()).is_err());
        let short = format!("{SAMPLE}3,5,c\n");
        assert!(read_transactions(short.as_bytes()).is_err());
        let nan = SAMPLE.replace("12.5", "NaN");
        assert!(read_transactions(nan.as_bytes()).is_err());
    }

    #[test]
    fn refuses_unquotable_fields() {
        let mut txns = read_transactions(SAMPLE.as_bytes()).unwrap();
        txns[0].country = "B,E".into();
        assert!(write_transactions(Vec::new(), &txns).is_err());
    }
}
