#![no_main]

use hmmforge::io::{vocab_from_json, vocab_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(v) = vocab_from_json(data) {
        let back = vocab_from_json(&vocab_to_json(&v)).expect("serialized vocab parses");
        assert_eq!(back.glyphs(), v.glyphs());
    }
});
