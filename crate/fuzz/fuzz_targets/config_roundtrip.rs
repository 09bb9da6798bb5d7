#![no_main]

use libfuzzer_sys::fuzz_target;
use nuisfim_cli::config::RunConfig;

// Any config that parses must survive the canonical echo unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::parse(text) else { return };
    let canonical = cfg.to_canonical();
    let again = RunConfig::parse(&canonical).expect("canonical config must re-parse");
    assert_eq!(again, cfg);
    assert_eq!(again.to_canonical(), canonical);
});
