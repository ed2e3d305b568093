#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bayeslink::simulation::{generate_files, SimulatedData, SimulationFactors};
use bayeslink::{FieldValue, RecordFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn bayeslink(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayeslink"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_records(path: &Path, file: &RecordFile) {
    let mut s = String::from("id");
    for name in file.field_names.iter().chain(&file.exclusive_names) {
        write!(s, ",{name}").unwrap();
    }
    s.push('\n');
    let (k, q) = (file.n_fields(), file.exclusive_names.len());
    for r in 0..file.len() {
        s.push_str(&file.ids[r]);
        for f in 0..k {
            match file.value(r, f) {
                FieldValue::Text(t) => write!(s, ",{t}").unwrap(),
                FieldValue::Date(d) => write!(s, ",{d}").unwrap(),
                FieldValue::Missing => s.push(','),
            }
        }
        for v in &file.exclusive[r * q..(r + 1) * q] {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

/// Writes `a.csv` and `b.csv` for a small simulated pair of files.
pub fn write_files(dir: &Path, seed: u64, factors: &SimulationFactors) -> SimulatedData {
    let sim = generate_files(factors, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    write_records(&dir.join("a.csv"), &sim.file_a);
    write_records(&dir.join("b.csv"), &sim.file_b);
    sim
}

pub fn small_factors() -> SimulationFactors {
    SimulationFactors {
        n_a: 50,
        n_b: 80,
        n_m: 30,
        epsilon: 0.2,
        ..SimulationFactors::default()
    }
}

pub const FIELDS: &str = r#"
[[fields]]
name = "gender"
kind = "exact-categorical"

[[fields]]
name = "zip"
kind = "digit-prefix"
digits = 3

[[fields]]
name = "dob"
kind = "date-ymd"
"#;

pub fn link_config(method: &str, iterations: usize, extra: &str) -> String {
    format!(
        r#"method = "{method}"
seed = 7
{extra}

[file_a]
path = "a.csv"
exclusive = ["x_a"]

[file_b]
path = "b.csv"
exclusive = ["x_b1"]

[chain]
iterations = {iterations}
burn_in = {burn}
{FIELDS}"#,
        burn = iterations / 5
    )
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}
