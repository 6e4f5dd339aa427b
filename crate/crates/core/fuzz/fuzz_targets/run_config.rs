#![no_main]

use std::path::Path;

use ate_fusion_cli::config::{parse_str, Mode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let mode = match sel % 4 {
        0 => Mode::EstimateStatic,
        1 => Mode::EstimateSequential,
        2 => Mode::Simulate,
        _ => Mode::Coverage,
    };
    let _ = parse_str(text, mode, None, Path::new("."));
});
