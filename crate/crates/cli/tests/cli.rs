use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vrg(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrg"))
        .env_remove("VRG_OUT_DIR")
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bundled() -> String {
    configs().join("gmm2d.json").to_string_lossy().into_owned()
}

fn data() -> String {
    configs().join("gmm2d.data.json").to_string_lossy().into_owned()
}

/// Small enough to keep the suite quick.
const FAST: &[&str] = &[
    "--n-train",
    "2000",
    "--train-steps",
    "300",
    "--grid-size",
    "16",
    "--n-draws",
    "1",
    "--n-samples",
    "1000",
    "--n-reference",
    "1000",
    "--n-projections",
    "16",
];

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_gamma_leaves_the_trajectory_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("profile.csv"),
        "alpha_bar,delta\n0.00001,0.5\n0.5,0.2\n0.99999,0.9\n",
    )
    .unwrap();
    for kind in ["uniform", "quadratic", "logSNR"] {
        ok(vrg(d, &["make-traj", "--kind", kind, "-k", "10", "--out", "base.json"]));
        ok(vrg(
            d,
            &[
                "optimize",
                "--trajectory",
                s(&d.join("base.json")),
                "--profile",
                s(&d.join("profile.csv")),
                "--gamma",
                "0",
            ],
        ));
        let base = std::fs::read(d.join("base.json")).unwrap();
        let opt = std::fs::read(d.join("trajectory.opt.json")).unwrap();
        assert_eq!(base, opt, "{kind}");
    }
}

#[test]
fn pipeline_writes_manifest_and_artifacts_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = bundled();
    let mut args = vec!["--config", cfg.as_str(), "pipeline"];
    args.extend_from_slice(FAST);
    ok(vrg(a.path(), &args));
    ok(vrg(b.path(), &args));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("pipeline.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "pipeline");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    // Config values fill in what the flags leave open; flags win.
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["config"]["k"], 10);
    assert_eq!(manifest["config"]["n_train"], 2000);
    assert_eq!(manifest["config"]["gamma"], 0.1);

    let outputs: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(outputs.len() >= 5);
    for name in outputs
        .iter()
        .map(String::as_str)
        .chain(["pipeline.manifest.json", "profile.meta.json"])
    {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn pipeline_artifacts_round_trip_through_their_loaders() {
    use vrg_core::denoiser::MlpDenoiser;
    use vrg_core::profiler::ErrorProfile;
    use vrg_core::sampler::SampleBatch;
    use vrg_core::trajectory::Trajectory;

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = bundled();
    let mut args = vec!["--config", cfg.as_str(), "pipeline"];
    args.extend_from_slice(FAST);
    ok(vrg(d, &args));

    let mlp = MlpDenoiser::load(&d.join("denoiser.bin")).unwrap();
    mlp.save(&d.join("again.bin")).unwrap();
    assert_eq!(
        std::fs::read(d.join("denoiser.bin")).unwrap(),
        std::fs::read(d.join("again.bin")).unwrap()
    );

    let prof = ErrorProfile::read_csv(&d.join("profile.csv")).unwrap();
    assert_eq!(prof.alpha_bars().len(), 16);
    prof.write_csv(&d.join("again.csv")).unwrap();
    assert_eq!(
        std::fs::read(d.join("profile.csv")).unwrap(),
        std::fs::read(d.join("again.csv")).unwrap()
    );

    for name in ["trajectory.base.json", "trajectory.opt.json"] {
        let text = std::fs::read_to_string(d.join(name)).unwrap();
        let t = Trajectory::from_json(&text).unwrap();
        assert_eq!(t.to_json() + "\n", text);
    }
    for name in ["samples.base.bin", "samples.opt.bin"] {
        let batch = SampleBatch::load(&d.join(name)).unwrap();
        assert_eq!((batch.len(), batch.dim()), (1000, 2));
        batch.save(&d.join("again.bin")).unwrap();
        assert_eq!(
            std::fs::read(d.join(name)).unwrap(),
            std::fs::read(d.join("again.bin")).unwrap()
        );
    }
    let eval: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert!(eval["cpe_opt"].as_f64().unwrap() <= eval["cpe_base"].as_f64().unwrap());
}

#[test]
fn sweep_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gmm = data();
    ok(vrg(d, &["make-traj", "-k", "10"]));
    std::fs::write(d.join("exact.json"), std::fs::read(&gmm).unwrap()).unwrap();
    ok(vrg(
        d,
        &[
            "profile",
            "--denoiser",
            s(&d.join("exact.json")),
            "--data",
            &gmm,
            "--n-data",
            "200",
            "--grid-size",
            "12",
            "--n-draws",
            "1",
        ],
    ));
    ok(vrg(
        d,
        &[
            "sweep",
            "--denoiser",
            s(&d.join("exact.json")),
            "--data",
            &gmm,
            "--profile",
            s(&d.join("profile.csv")),
            "--gammas",
            "0,0.01,0.05,0.1",
            "--lambdas",
            "0,1",
            "--kinds",
            "quadratic,uniform",
            "--ks",
            "10",
            "--n-samples",
            "200",
            "--n-reference",
            "200",
            "--n-projections",
            "8",
        ],
    ));
    let mut rdr = csv::Reader::from_path(d.join("sweep.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["gamma", "lambda", "kind", "K", "cpe_base", "cpe_opt", "swd_base", "swd_opt"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4 * 2 * 2);
    for combo in [
        (0.0, "quadratic"),
        (1.0, "quadratic"),
        (0.0, "uniform"),
        (1.0, "uniform"),
    ] {
        let n = rows
            .iter()
            .filter(|r| (r[1].parse::<f64>().unwrap(), &r[2]) == combo)
            .count();
        assert_eq!(n, 4, "{combo:?}");
    }
    for r in &rows {
        let (cb, co): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        if r[0].parse::<f64>().unwrap() == 0.0 {
            assert_eq!(r[4], r[5]);
            assert_eq!(r[6], r[7]);
        } else {
            assert!(co <= cb);
        }
    }
}

#[test]
fn config_fills_unset_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.json"),
        r#"{"seed": 3, "make-traj": {"k": 4, "kind": "uniform"}}"#,
    )
    .unwrap();
    let c = d.join("c.json");
    ok(vrg(d, &["--config", s(&c), "make-traj"]));
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(t["label"], "uniform-4");
    ok(vrg(d, &["--config", s(&c), "make-traj", "-k", "6"]));
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(t["label"], "uniform-6");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("make-traj.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["k"], 6);

    std::fs::write(d.join("bad.json"), r#"{"make-traj": {"kk": 4}}"#).unwrap();
    let out = vrg(d, &["--config", s(&d.join("bad.json")), "make-traj"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vrg"))
        .env("VRG_OUT_DIR", dir.path())
        .args(["make-traj", "-k", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("trajectory.json").exists());
    assert!(dir.path().join("make-traj.manifest.json").exists());
}

#[test]
fn failures_report_json_and_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [(&[&str], i32, &str); 4] = [
        (&["make-traj", "--no-such-flag"], 2, "usage"),
        (
            &[
                "simulate",
                "--trajectory",
                "/nonexistent/t.json",
                "--profile",
                "/nonexistent/p.csv",
            ],
            3,
            "io",
        ),
        (&["make-traj", "-k", "0"], 4, "validation"),
        (&["optimize", "--profile", "p.csv"], 2, "usage"),
    ];
    for (args, code, kind) in cases {
        let out = vrg(d, args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], kind);
        assert_eq!(err["exit_code"], code);
    }

    std::fs::write(
        d.join("t.json"),
        r#"{"label":"x","kind":"custom","alpha_bar":[0.5,0.9]}"#,
    )
    .unwrap();
    std::fs::write(d.join("p.csv"), "alpha_bar,delta\n0.1,1\n0.9,1\n").unwrap();
    let out = vrg(
        d,
        &[
            "optimize",
            "--trajectory",
            s(&d.join("t.json")),
            "--profile",
            s(&d.join("p.csv")),
        ],
    );
    assert_eq!(out.status.code(), Some(4));

    let help = ok(vrg(d, &["--help"]));
    let text = String::from_utf8_lossy(&help.stdout);
    for line in ["2  usage", "3  I/O", "4  validation", "5  numerical"] {
        assert!(text.contains(line), "help lacks `{line}`");
    }
}

#[test]
fn diverging_training_exits_with_the_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Inputs this far out overflow the first layer.
    std::fs::write(d.join("far.json"), r#"{"type":"gaussian","mu0":[1e200],"sigma0":1.0}"#).unwrap();
    let out = vrg(
        d,
        &[
            "train-denoiser",
            "--data",
            s(&d.join("far.json")),
            "--n-train",
            "10",
            "--train-steps",
            "5",
            "--hidden",
            "4",
        ],
    );
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}
