#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsetomo::io::decode_pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_pgm(data) {
        assert_eq!(g.pixels.len(), g.width * g.height);
        assert!(g.pixels.iter().all(|&p| p <= g.maxval));
    }
});
