use std::fs;
use std::path::PathBuf;

use renewal_core::cli::{config_tokens, parse_args, parse_invocation};
use renewal_core::spectral::RootReport;
use renewal_core::{InterArrivalLaw, PrecisionSpec};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn law_json_seeds() {
    for (name, data) in seeds("law_json") {
        match InterArrivalLaw::from_json(text(&data)) {
            Ok(law) => {
                let again = InterArrivalLaw::from_json(&law.to_json()).unwrap();
                assert_eq!(again.density_vec(8), law.density_vec(8), "{name}");
            }
            Err(e) => assert!(name.starts_with("bad"), "{name}: {e}"),
        }
    }
}

#[test]
fn config_token_seeds() {
    for (name, data) in seeds("config_tokens") {
        match config_tokens(text(&data)) {
            Ok(tokens) => {
                assert!(tokens.iter().all(|t| t.starts_with("--")), "{name}");
                parse_args(std::iter::once("law".to_string()).chain(tokens)).unwrap();
            }
            Err(e) => assert_eq!(e.exit_code(), 1, "{name}"),
        }
    }
}

#[test]
fn argv_seeds() {
    for (name, data) in seeds("argv") {
        let res = parse_invocation(text(&data).split('\0'));
        if name.starts_with("negative") {
            assert!(res.is_err(), "{name}");
        } else {
            res.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn precision_spec_seeds() {
    for (name, data) in seeds("precision_spec") {
        if let Ok(spec) = text(&data).parse::<PrecisionSpec>() {
            assert_eq!(spec.to_string().parse::<PrecisionSpec>().unwrap(), spec, "{name}");
        }
    }
    assert!("0".parse::<PrecisionSpec>().is_err());
}

#[test]
fn report_json_seeds() {
    for (name, data) in seeds("report_json") {
        let reports: Vec<RootReport> = serde_json::from_slice(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again: Vec<RootReport> = serde_json::from_str(&serde_json::to_string(&reports).unwrap()).unwrap();
        assert_eq!(again, reports, "{name}");
    }
}
