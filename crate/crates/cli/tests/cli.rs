use std::path::Path;
use std::process::{Command, Output};

const P8: &str = "3.1211471340598313538646595036380865309095421664697601224524789123816403490428894959252350355455226792";

fn maxperim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxperim"))
        .args(args)
        .env_remove("MAXPERIM_CHECKPOINT_DIR")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn leading_digits(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn solve8(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("solution.json");
    std::fs::write(&path, stdout(&maxperim(&["solve", "--n", "8"]))).unwrap();
    path
}

#[test]
fn count_codes() {
    assert_eq!(stdout(&maxperim(&["codes", "--n", "16", "--count-only"])).trim(), "1087");
    let listed = stdout(&maxperim(&["codes", "--n", "8"]));
    assert_eq!(listed.lines().count(), 11);
    assert!(listed.lines().all(|l| l.len() == 16));
}

#[test]
fn solve_octagon_record() {
    let text = stdout(&maxperim(&["solve", "--n", "8"]));
    let rec = json(&text);
    assert_eq!(rec["schema_version"], 1);
    assert_eq!(rec["n"], 8);
    assert_eq!(rec["variant"], "schur");
    assert_eq!(rec["angles"].as_array().unwrap().len(), 9);
    let p = rec["perimeter"].as_str().unwrap();
    assert!(leading_digits(p, P8) >= 92, "{p}");
    // 360 bits -> ceil(360 * 0.302) + 2 significant digits
    assert_eq!(p.len(), 111 + 1);
    let keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
    let expected = [
        "schema_version", "n", "code", "quarter_code", "angles", "multipliers", "perimeter", "gap",
        "precision_bits", "tol_bits", "variant", "iterations", "timings",
    ];
    let mut sorted = expected.to_vec();
    sorted.sort();
    let mut got = keys.clone();
    got.sort();
    assert_eq!(got, sorted);
    let order: Vec<usize> = expected.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]), "key order");
}

#[test]
fn runs_are_reproducible_outside_timings() {
    let strip = |t: String| {
        let mut v = json(&t);
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    let a = strip(stdout(&maxperim(&["solve", "--n", "16"])));
    let b = strip(stdout(&maxperim(&["solve", "--n", "16"])));
    assert_eq!(a, b);
    let c = strip(stdout(&maxperim(&["phase2", "--quarter", "+--+-++-"])));
    assert_eq!(a["perimeter"], c["perimeter"]);
}

#[test]
fn json_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = solve8(dir.path());
    let original = std::fs::read(&path).unwrap();
    let again = maxperim(&["export", "--input", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(stdout(&again).as_bytes(), &original[..]);
}

#[test]
fn figure_exports() {
    let dir = tempfile::tempdir().unwrap();
    let path = solve8(dir.path());
    let p = path.to_str().unwrap();
    let svg = stdout(&maxperim(&["export", "--input", p, "--format", "svg"]));
    assert_eq!(svg.matches(r#"class="side""#).count(), 8);
    assert_eq!(svg.matches(r#"stroke="gray""#).count(), 8);
    let tikz = stdout(&maxperim(&["export", "--input", p, "--format", "tikz"]));
    assert_eq!(tikz.matches("\\draw[gray]").count(), 8);
    let csv = stdout(&maxperim(&["export", "--input", p, "--format", "csv"]));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "index,x,y");
    assert_eq!(rows.len(), 9);
    assert!(rows[2].split(',').nth(1).unwrap().len() > 100);
}

#[test]
fn unverified_records_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = solve8(dir.path());
    let mut rec = json(&std::fs::read_to_string(&path).unwrap());
    rec["angles"] = serde_json::json!([]);
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, serde_json::to_string(&rec).unwrap()).unwrap();
    let out = maxperim(&["export", "--input", empty.to_str().unwrap(), "--format", "svg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unverified-record"));

    // a perimeter that the angles do not produce
    let mut rec = json(&std::fs::read_to_string(&path).unwrap());
    rec["perimeter"] = serde_json::json!("3.2");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&rec).unwrap()).unwrap();
    let out = maxperim(&["export", "--input", bad.to_str().unwrap(), "--format", "tikz"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn polynomial_verification() {
    let dir = tempfile::tempdir().unwrap();
    let path = solve8(dir.path());
    let p = path.to_str().unwrap();
    let squared = stdout(&maxperim(&["verify", "--poly", "q8", "--value-from", p, "--square"]));
    assert!(squared.contains("root confirmed"));
    let plain = maxperim(&["verify", "--poly", "q8", "--value-from", p]);
    assert_eq!(plain.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&plain.stdout).contains("not a root"));
    let e8 = stdout(&maxperim(&[
        "verify", "--poly", "E8", "--value", "0.3869511646846203", "--square", "--refine",
    ]));
    assert!(e8.contains("root confirmed"));
    let at_zero = maxperim(&["verify", "--poly", "E8", "--value", "0"]);
    assert!(String::from_utf8_lossy(&at_zero.stdout).contains("|p(value)|: 1.00000e0"));
}

#[test]
fn phase1_records() {
    let line = stdout(&maxperim(&["phase1", "--n", "32"]));
    let rec = json(line.trim());
    assert_eq!(rec["quarter_code"], "+-++--+-+-+---++");
    assert!(rec["gap_decimal"].as_str().unwrap().starts_with("3.409"));
    let par = json(stdout(&maxperim(&["phase1", "--n", "32", "--jobs", "4"])).trim());
    assert_eq!(par["gap_numerator"], rec["gap_numerator"]);
    let top = stdout(&maxperim(&["phase1", "--n", "32", "--top", "3"]));
    assert_eq!(top.lines().count(), 3);
}

#[test]
fn enumerate_solve_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_maxperim"))
        .args(["enumerate-solve", "--n", "8", "--jobs", "2"])
        .env("MAXPERIM_CHECKPOINT_DIR", dir.path())
        .output()
        .unwrap();
    let text = stdout(&out);
    let lines: Vec<serde_json::Value> = text.lines().map(json).collect();
    assert_eq!(lines.len(), 11);
    assert!(leading_digits(lines[0]["perimeter"].as_str().unwrap(), P8) >= 92);
    assert_eq!(lines[0]["composition"], "1,2,1,2,2");
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["solve", "--n", "12"][..],
        &["solve", "--n", "128"],
        &["phase1", "--n", "8", "--mode", "quad"],
        &["enumerate-solve", "--n", "32"],
        &["phase2", "--code", "+++++++-"],
        &["frobnicate"],
    ] {
        let out = maxperim(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn codes_may_start_with_minus() {
    let q128 = "-+++---+-++++-+++++----+-+---+-++----++++-+-----+--+-+-+--+--+--";
    let rec = json(&stdout(&maxperim(&["solve", "--n", "128", "--quarter-code", q128])));
    assert!(rec["gap"].as_str().unwrap().starts_with("1.816"));
    assert_eq!(rec["quarter_code"], q128);
    let rec = json(&stdout(&maxperim(&["phase2", "--code", "-++-+--+"])));
    assert!(leading_digits(rec["perimeter"].as_str().unwrap(), P8) >= 92);
    assert!(rec["quarter_code"].is_null());
}
