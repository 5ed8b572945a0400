mod common;

use std::process::Output;

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn circle_thickness_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("circle.curve");
    assert!(common::run_cli(&["construct", "circle", "--out", common::path_arg(&curve)]).status.success());
    let v = stdout_json(&common::run_cli(&["thickness", common::path_arg(&curve), "--tau", "1"]));
    let t = v["report"]["thickness"].as_f64().unwrap();
    assert!((t - 2.0).abs() < 0.01, "{v}");
    assert_eq!(v["membership"]["is_member"], true);
}

#[test]
fn exit_codes() {
    assert_eq!(common::run_cli(&["thickness", "/nonexistent/c.curve"]).status.code(), Some(1));
    assert_eq!(common::run_cli(&["construct", "circle", "--bogus"]).status.code(), Some(2));
    assert_eq!(common::run_cli(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("c.curve");
    assert!(common::run_cli(&["construct", "circle", "--out", common::path_arg(&curve)]).status.success());
    let o = common::run_cli(&["thickness", common::path_arg(&curve), "--tau", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert_eq!(common::run_cli(&["tighten", common::path_arg(&curve), "--tau", "1", "--open"]).status.code(), Some(2));
}

#[test]
fn repeated_commands_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = common::all_cli_commands(dir.path(), "a");
    let b = common::all_cli_commands(dir.path(), "b");
    for ((oa, fa), (ob, fb)) in a.iter().zip(&b) {
        assert_eq!(oa.stdout, ob.stdout);
        for (x, y) in fa.iter().zip(fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
}
