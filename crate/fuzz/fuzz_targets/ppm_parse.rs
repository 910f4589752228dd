//! Both Netpbm decoders must reject arbitrary bytes gracefully: no panics,
//! no unbounded allocation, and any accepted input must re-encode.

#![no_main]

use libfuzzer_sys::fuzz_target;

use dehaze::data::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_ppm(data) {
        // Anything the decoder accepts must survive a round trip.
        let bytes = encode_ppm(&img);
        let again = decode_ppm(&bytes).expect("re-decode of encoded image");
        assert_eq!(again.data(), img.data());
    }
    if let Ok(map) = decode_pgm(data) {
        let bytes = encode_pgm(&map);
        let again = decode_pgm(&bytes).expect("re-decode of encoded map");
        assert_eq!(again.data(), map.data());
    }
});
