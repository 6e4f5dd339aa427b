#![no_main]

use ate_fusion::io::{parse_sequential, sequential_to_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&flag, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let control_only = flag & 1 == 1;
    if let Ok(episodes) = parse_sequential(text, "fuzz", control_only) {
        assert!(episodes
            .iter()
            .all(|e| e.horizon() == episodes[0].horizon()));
        let again =
            parse_sequential(&sequential_to_string(&episodes), "fuzz", control_only).unwrap();
        assert_eq!(again, episodes);
    }
});
