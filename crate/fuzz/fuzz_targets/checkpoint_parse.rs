//! The checkpoint decoder reads length-prefixed binary records; arbitrary
//! bytes must never panic, over-allocate, or yield non-finite tensors.

#![no_main]

use libfuzzer_sys::fuzz_target;

use dehaze::train::checkpoint::decode_checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode_checkpoint(data) {
        // Accepted checkpoints carry a valid embedded config and only
        // finite parameter values.
        ckpt.config.validate().expect("embedded config validates");
        for (name, tensor) in &ckpt.tensors {
            assert!(tensor.all_finite(), "decoder admitted non-finite tensor {name}");
        }
    }
});
