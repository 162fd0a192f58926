use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajembed::fixtures;
use trajembed::io::{parse_spec, spec_to_json};
use trajembed::linalg::CMatrix;
use trajembed::process::AnySpec;
use trajembed::embedding::Lindblad;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_traj-embed"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stdout:\n{}", String::from_utf8_lossy(&out.stdout));
        eprintln!("stderr:\n{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn embed(spec: &Path, out: &Path) {
    let o = run(bin().args(["embed", "--spec"]).arg(spec).arg("--out").arg(out));
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn fixture_files_match_library_specs() {
    let cases: Vec<(&str, AnySpec)> = vec![
        ("two_channel.json", AnySpec::Hsmm(fixtures::two_channel(0.25, 2.0, 1.0))),
        ("three_state.json", AnySpec::Hmm(fixtures::three_state_chain())),
        ("poisson.json", AnySpec::Hsmm(fixtures::poisson(1.0))),
    ];
    for (file, expected) in cases {
        let text = fs::read_to_string(fixture(file)).unwrap();
        assert_eq!(parse_spec(&text).unwrap(), expected, "{file}");
    }
}

#[test]
fn spec_json_roundtrip_is_byte_identical() {
    for file in ["two_channel.json", "three_state.json", "poisson.json"] {
        let spec = parse_spec(&fs::read_to_string(fixture(file)).unwrap()).unwrap();
        let once = spec_to_json(&spec);
        let twice = spec_to_json(&parse_spec(&once).unwrap());
        assert_eq!(once, twice, "{file}");
    }
}

#[test]
fn model_json_roundtrip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    embed(&fixture("two_channel.json"), &model);
    let text = fs::read_to_string(&model).unwrap();
    let lb = Lindblad::from_json(&text).unwrap();
    assert_eq!(lb.to_json(), text);
}

#[test]
fn embed_simulate_validate_pipeline_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let events = dir.path().join("ev.jsonl");
    let report = dir.path().join("stats.json");
    embed(&fixture("two_channel.json"), &model);
    let o = run(bin()
        .args(["simulate", "--model"])
        .arg(&model)
        .args(["--trajectories", "1", "--events", "1000", "--seed", "7", "--out"])
        .arg(&events));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&events).unwrap().lines().count(), 1000);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["generator"], "trajectory");

    let o = run(bin()
        .args(["validate", "--spec"])
        .arg(fixture("two_channel.json"))
        .arg("--events")
        .arg(&events)
        .arg("--report")
        .arg(&report));
    assert_eq!(o.status.code(), Some(0));
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(stats["verdict"], "PASS");
}

#[test]
fn every_shipped_fixture_passes_the_pipeline_with_the_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<String> = fs::read_dir(fixture(""))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    assert!(names.len() >= 3, "{names:?}");
    for name in names {
        let model = dir.path().join(format!("{name}.model"));
        let events = dir.path().join(format!("{name}.jsonl"));
        embed(&fixture(&name), &model);
        let o = run(bin()
            .args(["simulate", "--model"])
            .arg(&model)
            .args(["--events", "20000", "--out"])
            .arg(&events));
        assert_eq!(o.status.code(), Some(0), "{name}");
        let o = run(bin()
            .args(["validate", "--spec"])
            .arg(fixture(&name))
            .arg("--events")
            .arg(&events));
        assert_eq!(o.status.code(), Some(0), "{name}");
    }
}

#[test]
fn mixture_dwell_on_a_single_branch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("hyper.json");
    fs::write(
        &spec,
        spec_to_json(&AnySpec::Hsmm(fixtures::hyperexponential_renewal((0.4, 0.6), (3.0, 0.5)))),
    )
    .unwrap();
    let o = bin()
        .args(["embed", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("m.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn validate_against_wrong_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let events = dir.path().join("ev.csv");
    embed(&fixture("two_channel.json"), &model);
    let o = run(bin()
        .args(["simulate", "--model"])
        .arg(&model)
        .args(["--events", "20000", "--out"])
        .arg(&events));
    assert_eq!(o.status.code(), Some(0));
    let wrong = dir.path().join("wrong.json");
    fs::write(
        &wrong,
        spec_to_json(&AnySpec::Hsmm(fixtures::two_channel(0.5, 2.0, 1.0))),
    )
    .unwrap();
    let o = bin()
        .args(["validate", "--spec"])
        .arg(&wrong)
        .arg("--events")
        .arg(&events)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reverse_roundtrip_and_identity_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = dir.path().join("rev.json");
    embed(&fixture("two_channel.json"), &model);
    let o = run(bin().args(["reverse", "--model"]).arg(&model).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(0));
    let recovered = parse_spec(&fs::read_to_string(&out).unwrap()).unwrap();
    let AnySpec::Hsmm(spec) = recovered else {
        panic!("reverse should produce an hsmm spec");
    };
    let p = |g: usize, x: usize| spec.branch(g, x).map_or(0.0, |b| b.prob);
    assert!((p(0, 0) - 0.25).abs() < 1e-6);
    assert!((p(1, 0) - 0.75).abs() < 1e-6);

    let identity = Lindblad::from_hamiltonian(
        vec!["a".into()],
        CMatrix::zeros(2, 2),
        vec![CMatrix::identity(2, 2)],
    );
    let bad = dir.path().join("identity.json");
    fs::write(&bad, identity.to_json()).unwrap();
    let o = bin()
        .args(["reverse", "--model"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("never.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("never.json").exists());
}

#[test]
fn malformed_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"kind\": \"hsmm\", ").unwrap();
    let o = bin()
        .args(["embed", "--spec"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("m.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin()
        .args(["measures", "--spec"])
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    embed(&fixture("three_state.json"), &model);
    let sim = |threads: &str, out: &Path| {
        let o = run(bin()
            .env("TRAJ_EMBED_THREADS", threads)
            .args(["simulate", "--model"])
            .arg(&model)
            .args(["--trajectories", "16", "--events", "200", "--seed", "99", "--out"])
            .arg(out));
        assert_eq!(o.status.code(), Some(0));
        fs::read(out).unwrap()
    };
    let a = sim("1", &dir.path().join("a.jsonl"));
    let b = sim("1", &dir.path().join("b.jsonl"));
    let c = sim("4", &dir.path().join("c.jsonl"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn measures_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = run(bin()
        .args(["measures", "--spec"])
        .arg(fixture("three_state.json"))
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let text = v.to_string();
    assert!(text.contains("quantum"), "{text}");
}
