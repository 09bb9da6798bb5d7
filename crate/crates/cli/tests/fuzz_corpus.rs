//! Replays the fuzz corpus seeds, plus simple mutations of them, through the
//! same checks the fuzz targets make.

use std::path::PathBuf;

use nuisfim_cli::config::RunConfig;
use nuisfim_cli::report::Report;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

fn config_round_trip(text: &str) {
    if let Ok(cfg) = RunConfig::parse(text) {
        let canonical = cfg.to_canonical();
        let again = RunConfig::parse(&canonical).expect("canonical config must re-parse");
        assert_eq!(again, cfg);
        assert_eq!(again.to_canonical(), canonical);
    }
}

fn report_round_trip(text: &str) {
    if let Ok(r) = Report::parse(text) {
        let again = Report::parse(&r.to_json()).expect("re-serialized report must parse");
        assert_eq!(again, r);
    }
}

#[test]
fn config_seeds() {
    let seeds = corpus("config_roundtrip");
    let parsed = seeds.iter().filter(|s| RunConfig::parse(s).is_ok()).count();
    assert!(parsed >= 4 && parsed < seeds.len(), "seeds should mix valid and invalid configs");
    for s in &seeds {
        config_round_trip(s);
    }
    for s in corpus("parse_config") {
        let _ = RunConfig::parse(&s);
    }
}

#[test]
fn report_seeds() {
    let seeds = corpus("parse_report");
    let parsed = seeds.iter().filter(|s| Report::parse(s).is_ok()).count();
    assert_eq!(parsed, seeds.len() - 1, "every generated report should parse");
    for s in &seeds {
        report_round_trip(s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mutated_configs(seed_idx in 0usize..16, at in any::<prop::sample::Index>(), insert in "[ -~\n]{0,12}") {
        let seeds = corpus("config_roundtrip");
        let s = &seeds[seed_idx % seeds.len()];
        let mut cut = at.index(s.len() + 1);
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        let text = format!("{}{}{}", &s[..cut], insert, &s[cut..]);
        config_round_trip(&text);
    }

    #[test]
    fn mutated_reports(seed_idx in 0usize..16, at in any::<prop::sample::Index>(), len in 0usize..8, insert in "[ -~]{0,8}") {
        let seeds = corpus("parse_report");
        let s = &seeds[seed_idx % seeds.len()];
        let start = at.index(s.len() + 1);
        let end = (start + len).min(s.len());
        let text = format!("{}{}{}", &s[..start], insert, &s[end..]);
        report_round_trip(&text);
    }
}
