#![no_main]

use ilicast::geography::AdjacencyGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = AdjacencyGraph::parse(text) {
            let _ = g.symmetrized();
        }
    }
});
