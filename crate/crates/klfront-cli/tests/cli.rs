//! End-to-end behavior of every subcommand: numeric agreement with the
//! enumeration oracle, output formats, the documented exit codes, and the
//! stdin/stdout plumbing.

mod common;

use std::fs;

use common::{
    assert_ok, coin_model, exit_code, run, run_with_stdin, stderr_text, stdout_text,
    write_model_file, write_sample_file,
};
use klfront::io::read_frontier_csv;
use klfront::oracle::{exact_gain, exact_kl, tilt, KlDirection};
use klfront::types::Lambda;

/// Exact coordinates of the coin model's frontier at lambda = 1.
fn reference_point() -> (f64, f64) {
    let model = coin_model();
    let lambda = Lambda::new(1.0).unwrap();
    let tilted = tilt(&model, "r", lambda).unwrap();
    (
        exact_kl(&model, &tilted, KlDirection::TiltFromBase).unwrap(),
        exact_gain(&model, "r", lambda).unwrap(),
    )
}

#[test]
fn frontier_lambda_one_row_matches_the_enumerated_values() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.ndjson");
    let out = dir.path().join("frontier.csv");
    write_sample_file(&samples, &["p"], 20_000, 1);

    let output = run(&[
        "frontier",
        "--input",
        samples.to_str().unwrap(),
        "--align-channel",
        "r",
        "--replicates",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "frontier");

    let rows = read_frontier_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 25, "default grid size");
    let row = rows
        .iter()
        .find(|r| r.lambda == 1.0)
        .expect("default grid contains lambda = 1 exactly");
    let (ref_kl, ref_gain) = reference_point();
    let se = |ci: Option<(f64, f64)>| {
        let (lo, hi) = ci.expect("bootstrap interval present");
        (hi - lo) / (2.0 * 1.959964)
    };
    let kl_err = (row.kl - ref_kl).abs();
    let gain_err = (row.gain - ref_gain).abs();
    assert!(
        kl_err <= 3.0 * se(row.kl_ci),
        "kl {:.6} vs exact {ref_kl:.6}, err {kl_err:.2e} > 3 se",
        row.kl
    );
    assert!(
        gain_err <= 3.0 * se(row.gain_ci),
        "gain {:.6} vs exact {ref_gain:.6}, err {gain_err:.2e} > 3 se",
        row.gain
    );
    assert_eq!(row.n, 20_000);
}

#[test]
fn frontier_without_replicates_leaves_ci_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.ndjson");
    let out = dir.path().join("frontier.csv");
    write_sample_file(&samples, &["p"], 50, 2);

    let output = run(&[
        "frontier",
        "--input",
        samples.to_str().unwrap(),
        "--align-channel",
        "r",
        "--replicates",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "frontier --replicates 0");
    let rows = read_frontier_csv(fs::File::open(&out).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.kl_ci.is_none() && r.gain_ci.is_none()));
}

#[test]
fn frontier_json_output_carries_tables_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.ndjson");
    let out = dir.path().join("frontier.json");
    write_sample_file(&samples, &["a", "b"], 60, 3);

    let output = run(&[
        "frontier",
        "--input",
        samples.to_str().unwrap(),
        "--align-channel",
        "r",
        "--lambda-count",
        "5",
        "--replicates",
        "50",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "frontier json");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let tables = v.as_array().unwrap();
    // Two prompts plus the aggregate.
    assert_eq!(tables.len(), 3);
    assert_eq!(tables[2]["id"], "AGGREGATE");
    assert_eq!(tables[0]["meta"]["seed"], 9);
    assert_eq!(tables[2]["meta"]["ci_aggregated_heuristically"], true);
    assert_eq!(tables[0]["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn reads_stdin_and_writes_stdout_with_dashes() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.ndjson");
    write_sample_file(&samples, &["p"], 40, 4);
    let bytes = fs::read(&samples).unwrap();

    let output = run_with_stdin(
        &[
            "frontier",
            "--input",
            "-",
            "--align-channel",
            "r",
            "--lambda-count",
            "3",
            "--replicates",
            "0",
            "--out",
            "-",
        ],
        &bytes,
    );
    assert_ok(&output, "frontier via stdin/stdout");
    let rows = read_frontier_csv(std::io::Cursor::new(output.stdout)).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.prompt_id == "p"));
}

#[test]
fn usage_and_runtime_errors_use_distinct_exit_codes() {
    // Missing required flag: usage error, exit 2, before any computation.
    let output = run(&["frontier", "--input", "x.ndjson", "--out", "y.csv"]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_text(&output).contains("--align-channel"));

    // Unreadable input: runtime error, exit 1.
    let output = run(&[
        "frontier",
        "--input",
        "/nonexistent/samples.ndjson",
        "--align-channel",
        "r",
        "--out",
        "-",
    ]);
    assert_eq!(exit_code(&output), 1);

    // Malformed NDJSON: runtime error naming the offending line.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ndjson");
    fs::write(
        &bad,
        "{\"prompt_id\":\"p\",\"response_id\":\"a\",\"rewards\":{\"r\":1.0}}\n{oops\n",
    )
    .unwrap();
    let output = run(&[
        "frontier",
        "--input",
        bad.to_str().unwrap(),
        "--align-channel",
        "r",
        "--out",
        "-",
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr_text(&output).contains("line 2"),
        "stderr should name the line: {}",
        stderr_text(&output)
    );
}

#[test]
fn bon_exact_curve_matches_the_library_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = dir.path().join("bon.csv");
    write_model_file(&model);

    let output = run(&[
        "bon",
        "--model",
        model.to_str().unwrap(),
        "--align-channel",
        "r",
        "--bon-ns",
        "1,2,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "bon --model");
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "prompt_id,bon_n,kl,gain,gain_ci_low,gain_ci_high"
    );
    let gains: Vec<f64> = lines
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gains, vec![0.0, 0.25, 0.4375]);
}

#[test]
fn oracle_passes_on_model_and_randomized_modes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    write_model_file(&model);

    let output = run(&["oracle", "--model", model.to_str().unwrap(), "--lambda-count", "9"]);
    assert_ok(&output, "oracle --model");
    assert!(stdout_text(&output).contains("0 failure(s)"));

    let output = run(&["oracle", "--trials", "30", "--k-max", "30", "--seed", "3"]);
    assert_ok(&output, "oracle randomized");
    assert!(stdout_text(&output).contains("0 failure(s)"));

    // With zero tolerance the identities cannot pass: the two sides travel
    // different arithmetic routes, so their rounding differs measurably.
    let output = run(&[
        "oracle",
        "--model",
        model.to_str().unwrap(),
        "--lambda-count",
        "9",
        "--tolerance",
        "0.0",
    ]);
    assert_eq!(exit_code(&output), 3);
    assert!(stderr_text(&output).contains("FAIL"));
}

#[test]
fn hacking_sweep_reports_a_nonnegative_gap_for_an_affine_proxy() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = dir.path().join("sweep.csv");
    write_model_file(&model);

    let output = run(&[
        "hacking",
        "--model",
        model.to_str().unwrap(),
        "--gold-channel",
        "r",
        "--proxy-channel",
        "s",
        "--lambda-count",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "hacking");
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,kl_gold,gold_reward_goldaligned,gold_reward_proxyaligned,gap"
    );
    for line in lines {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 5);
        // s = 0.5 + 0.3 r is a contraction of r, so aligning to r always
        // scores at least as well on r as aligning to s does.
        assert!(fields[4] >= -1e-12, "gap {} negative", fields[4]);
        assert!(
            (fields[2] - fields[3] - fields[4]).abs() < 1e-12,
            "gap column inconsistent"
        );
    }
}

#[test]
fn ensemble_emits_a_rate_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = dir.path().join("rate.json");
    write_model_file(&model);

    let output = run(&[
        "ensemble",
        "--model",
        model.to_str().unwrap(),
        "--gold-channel",
        "r",
        "--sizes",
        "1,8,64",
        "--trials",
        "50",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output, "ensemble");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["ensemble_sizes"], serde_json::json!([1, 8, 64]));
    assert_eq!(v["trials"], 50);
    assert_eq!(v["mean_abs_gap"].as_array().unwrap().len(), 3);
    assert!(v["fitted_slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn compare_scores_checkpoints_against_the_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let frontier = dir.path().join("frontier.csv");
    write_model_file(&model);
    let output = run(&[
        "frontier",
        "--model",
        model.to_str().unwrap(),
        "--align-channel",
        "r",
        "--out",
        frontier.to_str().unwrap(),
    ]);
    assert_ok(&output, "frontier --model");

    // A checkpoint lifted straight off the frontier table: gap exactly 0.
    let rows = read_frontier_csv(fs::File::open(&frontier).unwrap()).unwrap();
    let on = &rows[12];
    let log = dir.path().join("on.ndjson");
    fs::write(
        &log,
        format!(
            "{}\n",
            serde_json::json!({
                "algorithm": "tilt",
                "checkpoint": 1,
                "kl": on.kl,
                "reward_gain": on.gain,
            })
        ),
    )
    .unwrap();
    let gaps = dir.path().join("gaps.csv");
    let output = run(&[
        "compare",
        "--input",
        log.to_str().unwrap(),
        "--frontier",
        frontier.to_str().unwrap(),
        "--out",
        gaps.to_str().unwrap(),
    ]);
    assert_ok(&output, "compare on-frontier");
    let text = fs::read_to_string(&gaps).unwrap();
    let data_line = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = data_line.split(',').collect();
    assert_eq!(fields[5].parse::<f64>().unwrap(), 0.0, "gap: {data_line}");
    assert_eq!(fields[6], "false");

    // The same checkpoint shifted 0.1 above the frontier: flagged, exit 3.
    let above = dir.path().join("above.ndjson");
    fs::write(
        &above,
        format!(
            "{}\n",
            serde_json::json!({
                "algorithm": "magic",
                "checkpoint": 1,
                "kl": on.kl,
                "reward_gain": on.gain + 0.1,
            })
        ),
    )
    .unwrap();
    let output = run(&[
        "compare",
        "--input",
        above.to_str().unwrap(),
        "--frontier",
        frontier.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 3);
    assert!(stdout_text(&output).contains("violation"));
}

#[test]
fn exact_best_of_n_checkpoints_never_violate_the_exact_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let frontier = dir.path().join("frontier.csv");
    let bon = dir.path().join("bon.csv");
    write_model_file(&model);

    // Dense exact frontier, wide enough to reach the largest best-of-n KL.
    let output = run(&[
        "frontier",
        "--model",
        model.to_str().unwrap(),
        "--align-channel",
        "r",
        "--lambda-min",
        "1e-4",
        "--lambda-max",
        "1e4",
        "--lambda-count",
        "400",
        "--out",
        frontier.to_str().unwrap(),
    ]);
    assert_ok(&output, "dense exact frontier");

    let ns: Vec<String> = (1..=64u64).map(|n| n.to_string()).collect();
    let output = run(&[
        "bon",
        "--model",
        model.to_str().unwrap(),
        "--align-channel",
        "r",
        "--bon-ns",
        &ns.join(","),
        "--out",
        bon.to_str().unwrap(),
    ]);
    assert_ok(&output, "exact bon curve");

    // Re-shape the curve into a checkpoint log, one checkpoint per n.
    let bon_text = fs::read_to_string(&bon).unwrap();
    let log: String = bon_text
        .lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            format!(
                "{}\n",
                serde_json::json!({
                    "algorithm": "bon",
                    "checkpoint": fields[1].parse::<u64>().unwrap(),
                    "kl": fields[2].parse::<f64>().unwrap(),
                    "reward_gain": fields[3].parse::<f64>().unwrap(),
                })
            )
        })
        .collect();
    let log_path = dir.path().join("bon.ndjson");
    fs::write(&log_path, log).unwrap();

    let gaps = dir.path().join("gaps.csv");
    let output = run(&[
        "compare",
        "--input",
        log_path.to_str().unwrap(),
        "--frontier",
        frontier.to_str().unwrap(),
        "--tolerance",
        "1e-9",
        "--out",
        gaps.to_str().unwrap(),
    ]);
    assert_ok(&output, "compare bon vs exact frontier");
    for line in fs::read_to_string(&gaps).unwrap().lines().skip(1) {
        let gap: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(gap >= -1e-9, "best-of-n point above the frontier: {line}");
    }
}
