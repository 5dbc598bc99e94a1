#![allow(dead_code)]

pub mod checks;
pub mod props;

use std::path::PathBuf;

use blockgen::model::{generate, Compiled, GenerateOptions, Generated};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn compiled(name: &str) -> Compiled {
    Compiled::from_text(&fixture_text(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn generated(name: &str) -> (Compiled, Generated) {
    let c = compiled(name);
    let g = generate(&c, &GenerateOptions::default()).expect("generate");
    (c, g)
}

pub const FIXTURES: [&str; 3] = ["fig2.json", "coding.json", "kalman.json"];

/// Rename `tmp_<n>` to `t1, t2, ...` in order of first appearance, so
/// expected text does not depend on counter values.
pub fn normalize_temps(text: &str) -> String {
    let mut names: Vec<String> = Vec::new();
    let mut out = String::new();
    let mut rest = text;
    while let Some(pos) = rest.find("tmp_") {
        out.push_str(&rest[..pos]);
        let digits: String = rest[pos + 4..].chars().take_while(char::is_ascii_digit).collect();
        let name = format!("tmp_{digits}");
        let k = match names.iter().position(|n| *n == name) {
            Some(k) => k,
            None => {
                names.push(name.clone());
                names.len() - 1
            }
        };
        out.push_str(&format!("t{}", k + 1));
        rest = &rest[pos + name.len()..];
    }
    out.push_str(rest);
    out
}
