#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsetomo::io::{decode_sinogram_text, encode_sinogram_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(b) = decode_sinogram_text(text) {
        assert_eq!(decode_sinogram_text(&encode_sinogram_text(&b)).unwrap(), b);
    }
});
