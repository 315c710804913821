use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cstm_core::{Model, ModelVariant};

fn cstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cstm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

/// Copies the bundled spec into `dir`, applying `edit` to its text.
fn spec_copy(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(data_dir().join("sick_sicker.toml")).unwrap();
    fs::copy(
        data_dir().join("us_life_table_2014.csv"),
        dir.join("us_life_table_2014.csv"),
    )
    .unwrap();
    let path = dir.join("model.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn validate_bundled_model() {
    let out = cstm(&["validate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("pass"));

    let out = cstm(&["validate", "--spec", s(&data_dir().join("sick_sicker.toml"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn validate_reports_array_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_copy(dir.path(), |t| {
        t.replace("p_S1S2_scale = 0.08", "p_S1S2_scale = 0.5")
            .replace("p_S1S2_shape = 1.10", "p_S1S2_shape = 3.0")
    });
    let out = cstm(&["validate", "--spec", s(&spec)]);
    assert_eq!(code(&out), 1, "{}{}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("P[S1_"), "{text}");
    assert!(text.contains("cycle"), "{text}");
}

#[test]
fn validate_without_life_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_copy(dir.path(), |t| {
        t.lines()
            .filter(|l| !l.starts_with("life_table"))
            .collect::<Vec<_>>()
            .join("\n")
    });
    let out = cstm(&["validate", "--spec", s(&spec)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("life table coverage"), "{}", stdout(&out));

    let out = cstm(&[
        "validate",
        "--spec",
        s(&spec),
        "--life-table",
        s(&data_dir().join("us_life_table_2014.csv")),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn missing_files_are_io_errors() {
    assert_eq!(code(&cstm(&["validate", "--spec", "/no/such/model.toml"])), 3);
    assert_eq!(code(&cstm(&["run", "--life-table", "/no/such/table.csv"])), 3);
}

#[test]
fn malformed_spec_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = [").unwrap();
    assert_eq!(code(&cstm(&["validate", "--spec", s(&path)])), 1);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&cstm(&["psa", "--samples", "0"])), 2);
    assert_eq!(code(&cstm(&["psa", "--samples", "2", "--wtp-step", "0"])), 2);
    assert_eq!(code(&cstm(&["run", "--variant", "markov"])), 2);
    assert_eq!(code(&cstm(&["frobnicate"])), 2);
}

#[test]
fn run_writes_round_trippable_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("a/b/c");
    let out = cstm(&["run", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model = Model::builtin();
    let results = model.evaluate(ModelVariant::SimTime).unwrap();

    let (header, rows) = read_csv(&out_dir.join("totals.csv"));
    assert_eq!(header, ["strategy", "cost", "qaly", "life_expectancy"]);
    assert_eq!(rows.len(), 4);
    for (row, res) in rows.iter().zip(&results) {
        assert_eq!(row[0], res.strategy);
        assert!(close(row[1].parse().unwrap(), res.total_cost));
        assert!(close(row[2].parse().unwrap(), res.total_qaly));
        assert!(close(row[3].parse().unwrap(), res.life_expectancy));
    }

    let (header, rows) = read_csv(&out_dir.join("standard_of_care/trace.csv"));
    assert_eq!(header, ["cycle", "H", "S1", "S2", "D"]);
    assert_eq!(rows.len(), 76);
    let trace = results[0].trace.values();
    for (t, row) in rows.iter().enumerate() {
        for j in 0..4 {
            assert!(close(row[j + 1].parse().unwrap(), trace[[t, j]]), "{t} {j}");
        }
    }

    for file in ["survival.csv", "prevalence.csv", "outcomes.csv"] {
        assert!(out_dir.join("strategy_ab").join(file).exists(), "{file}");
    }
    let (header, _) = read_csv(&out_dir.join("strategy_a/prevalence.csv"));
    assert_eq!(header, ["cycle", "S1", "S1_S2", "S2"]);
}

#[test]
fn tunnel_run_adds_aggregated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = cstm(&["run", "--variant", "tunnels", "--export-arrays", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (expanded, _) = read_csv(&dir.path().join("strategy_b/trace.csv"));
    assert_eq!(expanded.len(), 79);
    let (aggregated, rows) = read_csv(&dir.path().join("strategy_b/trace_aggregated.csv"));
    assert_eq!(aggregated, ["cycle", "H", "S1", "S2", "D"]);
    assert_eq!(rows.len(), 76);
    let (header, rows) = read_csv(&dir.path().join("strategy_b/transitions.csv"));
    assert_eq!(header, ["origin", "destination", "cycle", "probability"]);
    assert!(rows.iter().any(|r| r[0] == "S1_75Yr" && r[1] == "S1_75Yr"));
}

#[test]
fn cea_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = cstm(&["cea", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&dir.path().join("cea.csv"));
    assert_eq!(header, ["strategy", "cost", "effect", "inc_cost", "inc_effect", "icer", "status"]);
    let order: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[6].as_str())).collect();
    assert_eq!(
        order,
        [
            ("Standard of care", "ND"),
            ("Strategy B", "ND"),
            ("Strategy AB", "ND"),
            ("Strategy A", "D")
        ]
    );
    assert_eq!(rows[0][5], "NA");
    assert_eq!(rows[3][5], "NA");
    let icer_b: f64 = rows[1][5].parse().unwrap();
    assert!((55_000.0..65_000.0).contains(&icer_b));
    let (_, frontier) = read_csv(&dir.path().join("frontier.csv"));
    assert_eq!(frontier.len(), 3);
}

#[test]
fn psa_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = cstm(&["psa", "--samples", "30", "--seed", seed, "--wtp-step", "20000", "--out", s(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out_dir
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    for file in ["psa_samples.csv", "psa_parameters.csv", "ceac.csv", "elc.csv", "evpi.csv"] {
        let fa = fs::read(a.join(file)).unwrap();
        assert_eq!(fa, fs::read(b.join(file)).unwrap(), "{file}");
        if file == "psa_samples.csv" {
            assert_ne!(fa, fs::read(c.join(file)).unwrap());
        }
    }
    let (header, rows) = read_csv(&a.join("evpi.csv"));
    assert_eq!(header, ["wtp", "evpi"]);
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
}
