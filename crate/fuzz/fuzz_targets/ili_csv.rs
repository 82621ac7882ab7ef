#![no_main]

use ilicast::ingest::{parse_canonical, parse_ili_reader, Schema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_ili_reader(data, &Schema::fluview());
    if let Ok(parsed) = parse_canonical(data) {
        // Accepted rows must survive the canonical writer.
        let text = parsed.table.to_csv_string();
        let again = parse_canonical(text.as_bytes()).unwrap();
        assert_eq!(again.table.to_csv_string(), text);
    }
});
