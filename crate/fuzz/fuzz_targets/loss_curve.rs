#![no_main]

use hmmforge::io::{format_curve, parse_curve};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(points) = parse_curve(data) {
        assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
        let back = parse_curve(&format_curve(&points)).expect("formatted curve parses");
        assert_eq!(back.len(), points.len());
    }
});
