use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_fbn");
const EXAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.json");

/// Writes the example config with its output redirected into `dir/out`
/// and with `edit` applied.
fn config_in(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(EXAMPLE).unwrap()).unwrap();
    v["paths"]["output"] = dir.join("out").to_string_lossy().into_owned().into();
    edit(&mut v);
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

fn fbn(config: &Path, args: &[&str]) -> i32 {
    let out = Command::new(BIN)
        .arg("--config")
        .arg(config)
        .args(args)
        .env("FBN_LOG", "warn")
        .output()
        .unwrap();
    out.status.code().unwrap_or(-1)
}

/// Relative path to sha256 of every file under `root`.
fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fbn::cli::hash_file(&p).unwrap());
            }
        }
    }
    out
}

const COMMANDS: &[&[&str]] = &[
    &["synth"],
    &["preprocess"],
    &["sbc"],
    &["ica"],
    &["lstm", "train"],
    &["lstm", "encode"],
    &["regress"],
    &["match", "--method", "sbc"],
    &["match", "--method", "ica"],
    &["match", "--method", "lstm"],
    &["pipeline"],
    &["sweep-c", "--values", "2,4,8"],
    &["sweep-epochs"],
];

fn run_all(config: &Path) -> Result<(), String> {
    let mut cmds: Vec<Vec<&str>> = COMMANDS.iter().map(|c| c.to_vec()).collect();
    for kind in ["dice", "variation", "repro", "epochs", "stdmaps"] {
        for m in ["sbc", "ica", "lstm"] {
            cmds.push(vec!["eval", kind, "--method", m]);
        }
    }
    for c in &cmds {
        let code = fbn(config, c);
        if code != 0 {
            return Err(format!("`fbn {}` exited {code}", c.join(" ")));
        }
    }
    Ok(())
}

/// Runs every command in two fresh directories and compares all output
/// hashes; then regenerates one stage and checks reruns are no-ops.
pub fn determinism_check() -> Result<String, String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = config_in(a.path(), |_| {});
    let cb = config_in(b.path(), |_| {});
    run_all(&ca)?;
    run_all(&cb)?;
    let ha = tree_hashes(&a.path().join("out"));
    let hb = tree_hashes(&b.path().join("out"));
    if ha.keys().ne(hb.keys()) {
        return Err(format!("file sets differ: {} vs {} files", ha.len(), hb.len()));
    }
    let differing: Vec<&String> = ha.keys().filter(|k| ha[*k] != hb[*k]).collect();
    if !differing.is_empty() {
        return Err(format!("{} of {} files differ, first {}", differing.len(), ha.len(), differing[0]));
    }

    std::fs::remove_dir_all(a.path().join("out/ica")).unwrap();
    let code = fbn(&ca, &["ica"]);
    if code != 0 || tree_hashes(&a.path().join("out")) != ha {
        return Err(format!("regenerated ica stage differs (exit {code})"));
    }
    let code = fbn(&ca, &["pipeline"]);
    if code != 0 || tree_hashes(&a.path().join("out")) != ha {
        return Err(format!("up-to-date rerun changed outputs (exit {code})"));
    }
    Ok(format!(
        "{} commands twice: {} files byte-identical; ica regenerated identically; rerun is a no-op",
        COMMANDS.len() + 15,
        ha.len()
    ))
}

#[test]
fn pipeline_writes_indexed_outputs() {
    let d = tempfile::tempdir().unwrap();
    let c = config_in(d.path(), |_| {});
    assert_eq!(fbn(&c, &["synth"]), 0);
    assert_eq!(fbn(&c, &["pipeline"]), 0);
    let out = d.path().join("out");
    let index: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let mut listed: Vec<String> = index["stages"]
        .as_object()
        .unwrap()
        .values()
        .flat_map(|s| s["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()))
        .collect();
    listed.push("manifest.json".into());
    listed.sort();
    let on_disk: Vec<String> = tree_hashes(&out).into_keys().collect();
    assert_eq!(listed, on_disk);
    assert!(on_disk.iter().any(|f| f.starts_with("pipeline/") && f.ends_with("summary.csv")));
}

#[test]
fn user_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let c = config_in(d.path(), |v| v["ica"]["colour"] = 1.into());
    assert_eq!(fbn(&c, &["ica"]), 1);
    let c = config_in(d.path(), |v| v["paths"]["catalog"] = "missing/catalog.json".into());
    assert_eq!(fbn(&c, &["preprocess"]), 1);
    let c = config_in(d.path(), |_| {});
    assert_eq!(fbn(&c, &["no-such-command"]), 1);
}

#[test]
fn changed_config_needs_force() {
    let d = tempfile::tempdir().unwrap();
    let c = config_in(d.path(), |_| {});
    assert_eq!(fbn(&c, &["ica"]), 0);
    let out = d.path().join("out");
    let before = tree_hashes(&out);
    let c = config_in(d.path(), |v| v["ica"]["components"] = 5.into());
    assert_eq!(fbn(&c, &["ica"]), 1);
    assert_eq!(tree_hashes(&out), before);
    assert_eq!(fbn(&c, &["--force", "ica"]), 0);
    assert_ne!(tree_hashes(&out), before);
}

#[test]
fn sweep_c_compares_every_value() {
    let d = tempfile::tempdir().unwrap();
    let c = config_in(d.path(), |v| v["lstm"]["epochs"] = 3.into());
    assert_eq!(fbn(&c, &["sweep-c", "--values", "2,4"]), 0);
    let text = std::fs::read_to_string(d.path().join("out/sweep-c/comparison.csv")).unwrap();
    let mut rows = text.lines();
    assert!(rows.next().unwrap().starts_with("c,"));
    let cs: Vec<&str> = rows.map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(cs, ["2", "4"]);
}
