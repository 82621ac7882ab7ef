#![no_main]

use ilicast::epiweek::{Epiweek, Season};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(w) = text.parse::<Epiweek>() {
            assert_eq!(w.to_string().parse::<Epiweek>().unwrap(), w);
            let _ = w.add_weeks(60);
        }
        if let Ok(s) = text.parse::<Season>() {
            let _ = s.weeks();
        }
    }
});
