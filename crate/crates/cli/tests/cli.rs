//! End-to-end tests of the `perfcurve` binary: worked examples, exit-code
//! contract, structured-output determinism, and payload round-trips.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perfcurve"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

/// Runs with `--output structured` prepended and parses the JSON line.
fn structured(args: &[&str]) -> Value {
    let mut full = vec!["--output", "structured"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(stdout_of(&out).trim()).expect("one JSON record")
}

fn temp_file(name: &str, body: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("perfcurve-test-{}-{}", std::process::id(), name));
    fs::write(&path, body).expect("temp file writes");
    path
}

#[test]
fn prepare_reports_order_and_rescaled_degree() {
    let file = temp_file("prep1.series", "X^(5) + X^(1/4)");
    let v = structured(&["prepare", file.to_str().unwrap()]);
    assert_eq!(v["result"]["order"], "5");
    assert_eq!(v["result"]["rescaled_degree"], "20");
    assert_eq!(v["result"]["unit_is_unit"], true);
    assert_eq!(v["result"]["residual_norm"], Value::Null);
}

#[test]
fn prepare_unit_input_has_order_zero() {
    let file = temp_file("prep2.series", "(1*t^(0))*X^(0) + (1*t^(1))*X^(1)");
    let v = structured(&["prepare", file.to_str().unwrap()]);
    assert_eq!(v["result"]["order"], "0");
    assert_eq!(v["result"]["unit_is_unit"], true);
    assert_eq!(v["result"]["residual_norm"], Value::Null);
}

#[test]
fn prepare_rejects_exponent_outside_the_lattice() {
    let file = temp_file("prep3.series", "X^(1/3) + X^(2)");
    let out = run(&["prepare", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cech_plain_and_unit_shifted_dimensions() {
    let v = structured(&["cech"]);
    assert_eq!(v["result"]["h0"], 1);
    assert_eq!(v["result"]["h1"], 1);

    for variant in ["unit-shifted:1", "unit-shifted:1/2"] {
        let v = structured(&["cech", "--variant", variant]);
        assert_eq!(v["result"]["h0"], 0, "variant {variant}");
        assert_eq!(v["result"]["h1"], 0, "variant {variant}");
    }
}

#[test]
fn cech_rejects_unknown_variant() {
    let out = run(&["cech", "--variant", "mystery"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theta_reports_the_transformation_law() {
    let v = structured(&["theta", "--T", "4"]);
    assert_eq!(v["result"]["degree"], "1");
    assert_eq!(v["result"]["extracted_degree"], "1");
    assert_eq!(v["result"]["multiplicator_text"], "1*t^(0)");
    assert_eq!(v["result"]["extracted_multiplicator_text"], "1*t^(0)");
    let resid: i64 = v["result"]["functional_residual_exp"]
        .as_str()
        .expect("nonzero residual")
        .parse()
        .unwrap();
    assert!(resid <= -4, "residual exponent {resid}");
}

#[test]
fn pweier_verdicts_split_by_mode() {
    let v = structured(&["pweier", "--mode", "integers", "--T", "8"]);
    assert_eq!(v["result"]["report"]["verdict"], "converges");
    assert!(v["result"]["report"]["periodicity_residual"].is_string());

    let v = structured(&["pweier", "--mode", "fractional", "--T", "8"]);
    assert_eq!(v["result"]["report"]["verdict"], "diverges");
}

#[test]
fn pweier_rejects_points_off_the_unit_circle() {
    let out = run(&["pweier", "--x0", "t"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn constructed_divisor_round_trips_through_check_and_rr() {
    let v = structured(&["divisor", "construct", "--alpha", "1 + t", "--i", "1"]);
    assert_eq!(v["result"]["deg_q"], "0");
    assert_eq!(v["result"]["mult_at_alpha"], "1/2");
    assert_eq!(v["result"]["principal"], true);

    let file = temp_file("constructed.divisor", &v["result"]["divisor"].to_string());
    let check = structured(&["divisor", "check", file.to_str().unwrap()]);
    assert_eq!(check["result"]["principal"], true);
    assert_eq!(check["result"]["deg_q"], "0");

    let rr = structured(&["divisor", "rr", file.to_str().unwrap(), "--i", "1"]);
    assert_eq!(rr["result"]["dimension"], 1);
}

#[test]
fn construct_avoids_the_named_point() {
    let v = structured(&[
        "divisor", "construct", "--alpha", "1 + t", "--i", "1", "--avoid", "1 + t^(2)",
    ]);
    assert_eq!(v["result"]["mult_at_avoided"], "0");
    assert_eq!(v["result"]["principal"], true);
}

#[test]
fn deg_of_the_empty_divisor_is_zero() {
    let file = temp_file("empty.divisor", r#"{"points":[]}"#);
    let v = structured(&["divisor", "deg", file.to_str().unwrap()]);
    assert_eq!(v["result"]["deg_q"], "0");
    assert_eq!(v["result"]["points"], 0);

    let euler = structured(&["divisor", "euler", file.to_str().unwrap()]);
    assert_eq!(euler["result"]["h0"], 1);
    assert_eq!(euler["result"]["h1"], 1);
    assert_eq!(euler["result"]["chi"], 0);
}

#[test]
fn rr_counts_three_for_multiplicity_three_halves() {
    let body = r#"{"points":[{"label":"x","absval":"0","deg_over_k":1,"insep_deg":1,"norm":[[0,1,1],[1,1,1]],"mult":"3/2"}]}"#;
    let file = temp_file("threehalves.divisor", body);
    let v = structured(&["divisor", "rr", file.to_str().unwrap(), "--i", "1"]);
    assert_eq!(v["result"]["dimension"], 3);

    let negative = r#"{"points":[{"label":"x","absval":"0","deg_over_k":1,"insep_deg":1,"norm":[[0,1,1],[1,1,1]],"mult":"-3/2"}]}"#;
    let file = temp_file("negthreehalves.divisor", negative);
    let v = structured(&["divisor", "rr", file.to_str().unwrap(), "--i", "1"]);
    assert_eq!(v["result"]["dimension"], 0);
}

#[test]
fn synth_realizes_the_divisor_it_is_given() {
    let v = structured(&["--seed", "7", "gen", "--kind", "matched"]);
    let file = temp_file("matched.divisor", &v["result"]["items"][0].to_string());
    let synth = structured(&["divisor", "synth", file.to_str().unwrap()]);
    assert_eq!(synth["result"]["all_match"], true);

    let check = structured(&["divisor", "check", file.to_str().unwrap()]);
    assert_eq!(check["result"]["principal"], true);
}

#[test]
fn unmatched_quotients_fail_the_principality_check() {
    let v = structured(&["--seed", "7", "gen", "--kind", "unmatched"]);
    let file = temp_file("unmatched.divisor", &v["result"]["items"][0].to_string());
    let check = structured(&["divisor", "check", file.to_str().unwrap()]);
    assert_eq!(check["result"]["principal"], false);
    assert_eq!(check["result"]["deg_q"], "0");
}

#[test]
fn structured_output_is_byte_deterministic() {
    let args = ["--output", "structured", "--seed", "5", "gen", "--kind", "divisor", "--count", "3"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);

    let other = run(&["--output", "structured", "--seed", "6", "gen", "--kind", "divisor", "--count", "3"]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn exit_codes_separate_parse_and_kernel_failures() {
    assert_eq!(run(&["cech"]).status.code(), Some(0));
    // Nonsense in the config: q must satisfy 0 < |q| < 1.
    assert_eq!(run(&["--q", "1", "cech"]).status.code(), Some(2));
    // Well-formed input the kernel rejects: |x0| = 1 is required.
    assert_eq!(run(&["pweier", "--x0", "t"]).status.code(), Some(3));
}

#[test]
fn generated_payloads_reparse_as_inputs() {
    let v = structured(&["--seed", "11", "gen", "--kind", "divisor", "--count", "2"]);
    for (k, item) in v["result"]["items"].as_array().unwrap().iter().enumerate() {
        let file = temp_file(&format!("regen{k}.divisor"), &item.to_string());
        let deg = structured(&["divisor", "deg", file.to_str().unwrap()]);
        assert!(deg["result"]["deg_q"].is_string());
    }
}

#[test]
fn text_mode_reports_wall_time_and_structured_mode_does_not() {
    let text = stdout_of(&run(&["cech"]));
    assert!(text.contains("wall-time-ms:"));
    let json = stdout_of(&run(&["--output", "structured", "cech"]));
    assert!(!json.contains("wall-time"));
}
