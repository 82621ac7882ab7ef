#![no_main]

use ilicast::scoring::ScoreTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = ScoreTable::read_csv(data) {
        let _ = table.aggregates();
    }
});
