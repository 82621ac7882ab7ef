#![no_main]

use ilicast::runner::persist::{Manifest, ManifestLine};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Manifest::parse(text);
        for line in text.lines() {
            let _ = ManifestLine::parse(line);
        }
    }
});
