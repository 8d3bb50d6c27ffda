#![no_main]

use hmmforge::text::{build_vocab, chunk};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, u8, &str)| {
    let (t, stride, corpus) = input;
    let Ok(vocab) = build_vocab(corpus) else {
        return;
    };
    let ids = vocab.encode(corpus).expect("corpus glyphs are in its own vocabulary");
    assert_eq!(vocab.decode(&ids).expect("ids decode"), corpus);
    if let Ok(ds) = chunk(corpus, &vocab, t as usize, stride as usize) {
        let n = corpus.chars().count();
        assert_eq!(ds.len(), (n - t as usize) / stride as usize + 1);
        assert!(ds.sequences().iter().all(|s| s.len() == t as usize));
    }
});
