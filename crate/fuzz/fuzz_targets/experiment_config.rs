#![no_main]

use libfuzzer_sys::fuzz_target;
use minifair_core::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let _ = cfg.validate();
        if let Ok(out) = cfg.to_toml_string() {
            let back = ExperimentConfig::from_toml_str(&out).expect("own output parses");
            assert_eq!(back.to_toml_string().unwrap(), out);
        }
    }
});
