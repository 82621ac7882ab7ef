#![no_main]

use ilicast::runner::persist::{forecast_csv, parse_forecast_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cells) = parse_forecast_csv(data) {
        let bytes = forecast_csv(&cells).unwrap();
        let again = parse_forecast_csv(&bytes).unwrap();
        assert_eq!(forecast_csv(&again).unwrap(), bytes);
    }
});
