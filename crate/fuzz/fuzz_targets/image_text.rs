#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsetomo::io::{decode_image_text, encode_image_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = decode_image_text(text) {
        assert_eq!(decode_image_text(&encode_image_text(&x)).unwrap(), x);
    }
});
