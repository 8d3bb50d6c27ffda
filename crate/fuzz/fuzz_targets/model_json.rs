#![no_main]

use hmmforge::io::{hmm_to_json, logits_to_json, model_from_json, spectral_to_json, ModelFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(model) = model_from_json(data) else {
        return;
    };
    let text = match &model {
        ModelFile::Hmm(p) => hmm_to_json(p),
        ModelFile::Logits(l) => logits_to_json(l),
        ModelFile::Spectral(s) => spectral_to_json(s),
    };
    let back = model_from_json(&text).expect("serialized model parses");
    assert_eq!(back.m(), model.m());
});
