//! The `key = value` config parser must handle arbitrary text without
//! panicking, and everything it accepts must round-trip through its own
//! serializer.

#![no_main]

use libfuzzer_sys::fuzz_target;

use dehaze::net::{config_to_string, parse_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        cfg.validate().expect("accepted config validates");
        let echoed = config_to_string(&cfg);
        let again = parse_config(&echoed).expect("serialized config reparses");
        assert_eq!(again, cfg, "config round-trip changed fields");
    }
});
