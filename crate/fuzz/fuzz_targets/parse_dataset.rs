#![no_main]

use hmmforge::io::{format_dataset, parse_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    // Anything the strict parser accepts must format back to the same text.
    if let Ok(ds) = parse_dataset(data) {
        let text = format_dataset(&ds);
        assert_eq!(text.trim_end_matches('\n'), data.trim_end_matches('\n'));
        let again = parse_dataset(&text).expect("formatted dataset parses");
        assert_eq!(again.sequences(), ds.sequences());
        assert!(ds.sequences().iter().flatten().all(|&z| z < ds.m()));
    }
});
