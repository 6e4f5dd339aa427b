#![no_main]

use ate_fusion::io::{parse_static_historical, static_historical_to_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_static_historical(text) {
        let again = parse_static_historical(&static_historical_to_string(&records)).unwrap();
        assert_eq!(again, records);
    }
});
