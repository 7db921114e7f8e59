//! Golden corpus: every file under `corpus/valid` must parse and round-trip,
//! every file under `corpus/invalid` must fail with the message stored next
//! to it in a `.err` file. Set `BLESS=1` to rewrite missing goldens.

use std::fs;
use std::path::{Path, PathBuf};

use stagedur::io::{parse_pomdp, serialize_pomdp};
use stagedur::verify::figure1_model;

fn corpus(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(kind);
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "pomdp"))
        .collect();
    files.sort();
    files
}

#[test]
fn valid_files_parse_and_round_trip() {
    let files = corpus("valid");
    assert!(files.len() >= 10);
    for path in files {
        let text = fs::read_to_string(&path).unwrap();
        let m = parse_pomdp(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let canon = serialize_pomdp(&m);
        let again = parse_pomdp(&canon).unwrap();
        assert_eq!(again, m, "{}", path.display());
        assert_eq!(serialize_pomdp(&again), canon, "{}", path.display());
    }
}

#[test]
fn bundled_figure1_file_matches_builtin_model() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/valid/figure1.pomdp");
    let m = parse_pomdp(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(m, figure1_model());
}

#[test]
fn invalid_files_match_error_goldens() {
    let files = corpus("invalid");
    assert!(files.len() >= 10);
    let bless = std::env::var_os("BLESS").is_some();
    for path in files {
        let text = fs::read_to_string(&path).unwrap();
        let err = match parse_pomdp(&text) {
            Ok(_) => panic!("{} parsed", path.display()),
            Err(e) => format!("{e}\n"),
        };
        let golden = path.with_extension("err");
        if bless && !golden.exists() {
            fs::write(&golden, &err).unwrap();
        }
        let expected = fs::read_to_string(&golden).unwrap_or_else(|_| panic!("missing {}", golden.display()));
        assert_eq!(err, expected, "{}", path.display());
    }
}
