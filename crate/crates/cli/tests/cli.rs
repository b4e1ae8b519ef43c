use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use proxskip_cli::config::{RunConfigFile, FOAM_KEYS, RUN_CONFIG_KEYS};
use proxskip_cli::error::{EXIT_CONFIG, EXIT_DIVERGENCE};
use tempfile::TempDir;

fn proxskip(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_proxskip")).current_dir(dir).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let (code, stdout, stderr) = proxskip(dir, args);
    assert_eq!(code, 0, "proxskip {args:?} failed:\n{stderr}");
    stdout
}

/// A 24x24 foam, its noisy sinogram and a PDHG reference.
fn fixture() -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--kind", "foam", "--size", "24", "--seed", "1", "--out", "f.img"]);
    ok(d, &["project", "--phantom", "f.img", "--angles", "24", "--noise", "0.01", "--noise-seed", "2", "--out", "s.sino"]);
    ok(d, &["reference", "--sinogram", "s.sino", "--ground-truth", "f.img", "--alpha", "1", "--iterations", "4000", "--out", "x.img"]);
    tmp
}

fn leaf_keys(value: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_keys(v, &key, out);
            }
        }
        _ => {
            out.insert(prefix.to_string());
        }
    }
}

#[test]
fn phantom_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["phantom", "--kind", "foam", "--size", "64", "--seed", "1", "--out", "f.img"];
    ok(d, &args);
    let first = (fs::read(d.join("f.img")).unwrap(), fs::read(d.join("f.img.raw")).unwrap());
    ok(d, &args);
    let second = (fs::read(d.join("f.img")).unwrap(), fs::read(d.join("f.img.raw")).unwrap());
    assert_eq!(first, second);
    assert_eq!(first.1.len(), 64 * 64 * 8);
}

#[test]
fn full_estimator_with_p_one_is_ista_bitwise() {
    let tmp = fixture();
    let d = tmp.path();
    let common = ["reconstruct", "--sinogram", "s.sino", "--reference", "x.img", "--alpha", "1", "--max-passes", "25"];
    let run = |extra: &[&str], out: &str| {
        let mut args = common.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out]);
        ok(d, &args);
        fs::read(d.join(format!("{out}.raw"))).unwrap()
    };
    let ista = run(&["--algorithm", "ista"], "ista.img");
    let skip = run(&["--algorithm", "prox-skip", "--p", "1"], "skip.img");
    let svrg_full = run(&["--algorithm", "prox-svrg-skip", "--estimator", "full", "--p", "1"], "full.img");
    assert!(ista == skip, "prox-skip with p = 1 differs from ista");
    assert!(ista == svrg_full, "estimator = full with p = 1 differs from ista");
    let log = fs::read_to_string(d.join("ista.img.csv")).unwrap();
    assert!(log.starts_with("data_passes,wall_seconds,rel_err,psnr,ssim,prox_calls,objective\n"));
}

#[test]
fn sweep_summary_reports_time_and_iterations_to_tolerance() {
    let tmp = fixture();
    let d = tmp.path();
    fs::write(
        d.join("grid.toml"),
        r#"
[problem]
sinogram = "s.sino"
reference = "x.img"

[regularizer]
alpha = 1.0

[stopping]
tolerance = 1e-2
max_data_passes = 60

[sweep]
algorithms = ["prox-svrg", "prox-svrg-skip"]
n_subsets = [4]
probabilities = [0.3]
repetitions = 2
"#,
    )
    .unwrap();
    ok(d, &["sweep", "--config", "grid.toml", "--out", "serial"]);
    ok(d, &["sweep", "--config", "grid.toml", "--out", "parallel", "--jobs", "3"]);
    let summary = fs::read_to_string(d.join("serial/summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("missing column {name}"));
    let (t, k) = (col("time_to_eps"), col("iterations_to_eps"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[t].parse::<f64>().is_ok_and(|v| v > 0.0), "time_to_eps {:?}", r[t]);
        assert!(r[k].parse::<u64>().is_ok_and(|v| v > 0), "iterations_to_eps {:?}", r[k]);
    }

    // Everything except timing-derived columns matches across job counts.
    let timing = [t, col("speedup")];
    let strip = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| !timing.contains(i)).map(|(_, v)| v).collect::<Vec<_>>().join(","))
            .collect()
    };
    let parallel = fs::read_to_string(d.join("parallel/summary.csv")).unwrap();
    assert_eq!(strip(&summary), strip(&parallel));
}

#[test]
fn flags_override_file_values() {
    let tmp = fixture();
    let d = tmp.path();
    fs::write(d.join("run.json"), r#"{"problem": {"sinogram": "s.sino"}, "regularizer": {"kind": "nonneg"}, "stopping": {"max_data_passes": 5}, "output": {"image": "file.img"}}"#).unwrap();
    let last_passes = |log: &str| -> f64 {
        let text = fs::read_to_string(d.join(log)).unwrap();
        text.lines().last().unwrap().split(',').next().unwrap().parse().unwrap()
    };
    ok(d, &["reconstruct", "--config", "run.json", "--width", "24", "--height", "24"]);
    assert_eq!(last_passes("file.img.csv"), 5.0);
    ok(d, &["reconstruct", "--config", "run.json", "--width", "24", "--height", "24", "--max-passes", "3", "--out", "flag.img"]);
    assert_eq!(last_passes("flag.img.csv"), 3.0);
}

#[test]
fn exit_codes() {
    let tmp = fixture();
    let d = tmp.path();
    fs::write(d.join("typo.toml"), "[solver]\ngama = 0.1\n").unwrap();
    let (code, _, err) = proxskip(d, &["reconstruct", "--config", "typo.toml", "--sinogram", "s.sino", "--out", "r.img"]);
    assert_eq!(code, EXIT_CONFIG, "{err}");
    assert!(err.contains("gama"), "{err}");

    let (code, _, err) = proxskip(d, &["reconstruct", "--sinogram", "missing.sino", "--out", "r.img"]);
    assert_eq!(code, EXIT_CONFIG, "{err}");
    let (code, _, _) = proxskip(d, &["reconstruct", "--sinogram", "s.sino", "--width", "24", "--height", "24", "--gamma", "-1", "--out", "r.img"]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = proxskip(d, &["phantom", "--kind", "circle", "--size", "8", "--out", "c.img"]);
    assert_eq!(code, EXIT_CONFIG);

    let (code, _, err) = proxskip(
        d,
        &["reconstruct", "--sinogram", "s.sino", "--width", "24", "--height", "24", "--regularizer", "none", "--gamma", "1e3", "--out", "r.img"],
    );
    assert_eq!(code, EXIT_DIVERGENCE, "{err}");
    assert!(err.contains("diverged"), "{err}");
    // The partial log is kept for diagnosis.
    assert!(fs::read_to_string(d.join("r.img.csv")).unwrap().lines().count() > 1);
}

#[test]
fn help_documents_every_config_key() {
    let tmp = TempDir::new().unwrap();
    let mut keys = BTreeSet::new();
    leaf_keys(&toml::Value::try_from(RunConfigFile::example()).unwrap(), "", &mut keys);
    let documented: BTreeSet<String> = RUN_CONFIG_KEYS.iter().map(|(k, _)| k.to_string()).collect();
    assert_eq!(keys, documented, "schema and key table disagree");
    for command in ["reconstruct", "sweep", "reference"] {
        let help = ok(tmp.path(), &[command, "--help"]);
        for key in &keys {
            assert!(help.contains(key.as_str()), "`{command} --help` does not mention {key}");
        }
    }

    let mut foam = BTreeSet::new();
    leaf_keys(&toml::Value::try_from(proxskip::phantoms::FoamSpec::new(8, 0)).unwrap(), "", &mut foam);
    let documented: BTreeSet<String> = FOAM_KEYS.iter().map(|(k, _)| k.to_string()).collect();
    assert_eq!(foam, documented);
    let help = ok(tmp.path(), &["phantom", "--help"]);
    assert!(foam.iter().all(|k| help.contains(k.as_str())));
}

#[test]
fn validate_passes() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["validate"]);
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

#[test]
fn fbp_and_shepp_logan() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--kind", "shepp-logan", "--size", "32", "--out", "sl.img", "--pgm", "sl.pgm"]);
    assert!(fs::read(d.join("sl.pgm")).unwrap().starts_with(b"P5"));
    ok(d, &["project", "--phantom", "sl.img", "--angles", "90", "--out", "sl.sino"]);
    ok(d, &["fbp", "--sinogram", "sl.sino", "--size", "32", "--out", "fbp.img"]);
    let truth = proxskip::io::load_image(d.join("sl.img")).unwrap();
    let rec = proxskip::io::load_image(d.join("fbp.img")).unwrap();
    let err = proxskip::metrics::relative_error_sq(&rec, &truth).unwrap().sqrt();
    assert!(err < 0.5, "fbp relative error {err}");
}
