//! The dataset manifest parser consumes attacker-controllable JSON; it must
//! reject malformed input without panicking and bound what it accepts.

#![no_main]

use libfuzzer_sys::fuzz_target;

use dehaze::data::parse_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(manifest) = parse_manifest(data) {
        // Accepted manifests must describe a usable dataset.
        let [h, w] = manifest.extent;
        assert!(h > 0 && w > 0, "manifest admitted an empty extent");
        manifest.dcp.validate().expect("accepted DCP params validate");
    }
});
