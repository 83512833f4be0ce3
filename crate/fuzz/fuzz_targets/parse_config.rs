#![no_main]

use libfuzzer_sys::fuzz_target;
use tollgrid::report::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).expect("round trip"), cfg);
    }
});
