//! Shipping acceptance check for the command-line surface: the same
//! arguments and seed must produce byte-identical output files no matter
//! how many worker threads run the job. Prints a `criterion 11 ...` line
//! like the library's acceptance suite.

mod common;

use common::{assert_ok, run, write_model_file, write_sample_file};

#[test]
fn criterion_11_outputs_do_not_depend_on_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.ndjson");
    let model = dir.path().join("model.json");
    write_sample_file(&samples, &["alpha", "beta"], 400, 7);
    write_model_file(&model);
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();

    // Every subcommand that writes a file, with its parallel sections
    // exercised (bootstrap replicates, ensemble trials, sweep grid).
    let invocations: Vec<(&str, Vec<String>)> = vec![
        (
            "frontier",
            vec![
                "frontier".into(),
                "--input".into(),
                path("samples.ndjson"),
                "--align-channel".into(),
                "r".into(),
                "--lambda-count".into(),
                "9".into(),
                "--replicates".into(),
                "300".into(),
                "--seed".into(),
                "11".into(),
            ],
        ),
        (
            "bon",
            vec![
                "bon".into(),
                "--input".into(),
                path("samples.ndjson"),
                "--align-channel".into(),
                "r".into(),
                "--bon-ns".into(),
                "1,2,4,8,16".into(),
                "--replicates".into(),
                "300".into(),
                "--seed".into(),
                "11".into(),
            ],
        ),
        (
            "ensemble",
            vec![
                "ensemble".into(),
                "--model".into(),
                path("model.json"),
                "--gold-channel".into(),
                "r".into(),
                "--sizes".into(),
                "1,4,16,64".into(),
                "--trials".into(),
                "60".into(),
                "--seed".into(),
                "11".into(),
            ],
        ),
        (
            "hacking",
            vec![
                "hacking".into(),
                "--model".into(),
                path("model.json"),
                "--gold-channel".into(),
                "r".into(),
                "--proxy-channel".into(),
                "s".into(),
                "--lambda-count".into(),
                "9".into(),
            ],
        ),
    ];

    let mut failures = Vec::new();
    for (name, args) in &invocations {
        let mut outputs = Vec::new();
        for jobs in ["1", "4"] {
            let out_path = path(&format!("{name}.jobs{jobs}.out"));
            let mut full: Vec<String> = vec!["--jobs".into(), jobs.into()];
            full.extend(args.iter().cloned());
            full.extend(["--out".into(), out_path.clone()]);
            let argv: Vec<&str> = full.iter().map(String::as_str).collect();
            let output = run(&argv);
            assert_ok(&output, &format!("{name} --jobs {jobs}"));
            outputs.push(std::fs::read(&out_path).unwrap());
        }
        if outputs[0] != outputs[1] {
            failures.push(format!("{name}: outputs differ between --jobs 1 and --jobs 4"));
        }
        if outputs[0].is_empty() {
            failures.push(format!("{name}: output file is empty"));
        }
    }

    if failures.is_empty() {
        println!("criterion 11 outputs do not depend on parallelism: PASS");
    } else {
        println!("criterion 11 outputs do not depend on parallelism: FAIL");
        panic!("{}", failures.join("\n"));
    }
}
