//! Shared fixtures and process plumbing for the CLI end-to-end tests.
#![allow(dead_code)]

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use klfront::io::{write_atomic, write_model, write_samples};
use klfront::oracle::DiscreteModel;
use klfront::rng::stream_rng;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_klfront")
}

/// Fair coin over {lo, hi} with reward channel `r` in {0, 1} and an affine
/// proxy channel `s` = 0.5 + 0.3 r (so the gold-aligned tilt provably
/// dominates the proxy-aligned one).
pub fn coin_model() -> DiscreteModel {
    DiscreteModel::new(
        vec!["lo".into(), "hi".into()],
        vec![0.5, 0.5],
        [
            ("r".to_string(), vec![0.0, 1.0]),
            ("s".to_string(), vec![0.5, 0.8]),
        ],
    )
    .unwrap()
}

pub fn write_model_file(path: &Path) {
    write_atomic(path, |w| write_model(w, &coin_model())).unwrap();
}

/// Write `n` seeded draws from the coin model per prompt, as NDJSON.
pub fn write_sample_file(path: &Path, prompts: &[&str], n: usize, seed: u64) {
    let model = coin_model();
    write_atomic(path, |w| {
        for (i, prompt) in prompts.iter().enumerate() {
            let samples = model.sample_prompt(prompt, n, &mut stream_rng(seed, i as u64))?;
            write_samples(w, samples.records())?;
        }
        Ok(())
    })
    .unwrap();
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn run_with_stdin(args: &[&str], stdin: &[u8]) -> Output {
    let mut child = Command::new(bin())
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(stdin)
        .expect("stdin accepts input");
    child.wait_with_output().expect("binary runs")
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited normally")
}

pub fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn stdout_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Assert success and explain stderr when it is not.
pub fn assert_ok(output: &Output, what: &str) {
    assert_eq!(
        exit_code(output),
        0,
        "{what} failed:\n{}",
        stderr_text(output)
    );
}
