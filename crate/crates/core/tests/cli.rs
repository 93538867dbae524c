//! The `timemark` binary end to end, through temporary vaults and files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn vault(&self) -> PathBuf {
        self.path("vault.json")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_timemark"))
            .arg("--vault")
            .arg(self.vault())
            .args(["--now", "0"])
            .args(args)
            .env_remove("TIMEMARK_VAULT")
            .output()
            .unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn keyinit_and_advance() {
    let env = Env::new();
    let init = env.run(&["keyinit", "--seed", "7"]);
    assert_eq!(code(&init), 0, "{}", stderr(&init));
    let first = json(&init);
    assert_eq!(first["current_index"], 0);
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(env.vault()).unwrap().permissions().mode();
        assert_eq!(mode & 0o777, 0o600, "vault holds the root key");
    }

    let again = env.run(&["keyinit", "--seed", "7"]);
    assert_eq!(code(&again), 3, "refuses to overwrite");
    let forced = env.run(&["keyinit", "--seed", "7", "--force"]);
    assert_eq!(
        json(&forced)["current_key_digest"],
        first["current_key_digest"]
    );

    let adv = env.run(&["advance", "--windows", "5"]);
    assert_eq!(code(&adv), 0);
    assert_eq!(json(&adv)["current_index"], 5);
    assert_ne!(
        json(&adv)["current_key_digest"],
        first["current_key_digest"]
    );
}

#[test]
fn advance_without_vault_fails() {
    let env = Env::new();
    let out = env.run(&["advance"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
}

#[test]
fn generate_is_reproducible_and_identifiable() {
    let env = Env::new();
    env.run(&["keyinit", "--seed", "11"]);
    env.run(&["advance", "--windows", "3"]);
    let docs = env.path("docs.jsonl");
    let gen = |out: &Path| env.run(&["generate", "--vocab", "64", "--seed", "5", "--out", p(out)]);
    let g = gen(&docs);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let text = std::fs::read_to_string(&docs).unwrap();
    assert_eq!(text.lines().count(), 1);
    let doc: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(doc["tokens"].as_array().unwrap().len(), 945);

    let twin = env.path("twin.jsonl");
    gen(&twin);
    assert_eq!(std::fs::read(&docs).unwrap(), std::fs::read(&twin).unwrap());

    env.run(&["advance", "--windows", "2"]);
    let id = env.run(&[
        "identify",
        "--vocab",
        "64",
        "--doc",
        p(&docs),
        "--center",
        "3",
        "--radius",
        "2",
    ]);
    assert_eq!(code(&id), 0, "{}", stderr(&id));
    let res = json(&id);
    assert_eq!(res["verdict"]["kind"], "identified");
    assert_eq!(res["verdict"]["window"], 3);
    assert_eq!(res["reports"].as_array().unwrap().len(), 5);
}

#[test]
fn unwatermarked_documents_exit_one() {
    let env = Env::new();
    env.run(&["keyinit", "--seed", "12"]);
    let docs = env.path("plain.jsonl");
    let g = env.run(&[
        "generate",
        "--vocab",
        "64",
        "--no-watermark",
        "--count",
        "2",
        "--out",
        p(&docs),
    ]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let id = env.run(&[
        "identify",
        "--vocab",
        "64",
        "--doc",
        p(&docs),
        "--index",
        "1",
        "--from",
        "0",
        "--to",
        "0",
    ]);
    assert_eq!(code(&id), 1);
    assert_eq!(json(&id)["verdict"]["kind"], "no_watermark");
}

#[test]
fn malformed_inputs_exit_three() {
    let env = Env::new();
    env.run(&["keyinit", "--seed", "13"]);
    let short = env.path("short.jsonl");
    std::fs::write(&short, "{\"tokens\":[1,2,3]}\n").unwrap();
    let id = env.run(&[
        "identify",
        "--vocab",
        "64",
        "--doc",
        p(&short),
        "--from",
        "0",
        "--to",
        "0",
    ]);
    assert_eq!(code(&id), 3);
    assert!(stderr(&id).contains("document"), "{}", stderr(&id));

    let garbage = env.path("garbage.jsonl");
    std::fs::write(&garbage, "not json\n").unwrap();
    let id = env.run(&["identify", "--doc", p(&garbage), "--from", "0", "--to", "0"]);
    assert_eq!(code(&id), 3);

    let odd = env.run(&["generate", "--vocab", "63", "--no-watermark"]);
    assert_eq!(code(&odd), 3);

    let unknown = env.run(&["frobnicate"]);
    assert_eq!(code(&unknown), 3);
    let help = env.run(&["--help"]);
    assert_eq!(code(&help), 0);
}

#[test]
fn provider_cannot_generate_in_the_past() {
    let env = Env::new();
    env.run(&["keyinit", "--seed", "14"]);
    env.run(&["advance", "--windows", "4"]);
    let out = env.run(&["generate", "--vocab", "64", "--window", "2"]);
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("may not read past window 2"),
        "{}",
        stderr(&out)
    );
    let vault: Value = serde_json::from_slice(&std::fs::read(env.vault()).unwrap()).unwrap();
    let log = vault["audit"].as_array().unwrap();
    let last = log.last().unwrap();
    assert_eq!(last["granted"], false);
    assert_eq!(last["requested_index"], 2);
}

#[test]
fn analyze_reports_the_default_chain() {
    let env = Env::new();
    let out = env.run(&["analyze"]);
    assert_eq!(code(&out), 0);
    let rep = json(&out);
    assert!((rep["p_tok"]["value"].as_f64().unwrap() - 0.9241418).abs() < 1e-6);
    assert_eq!(rep["acceptance_threshold"], 205);
    let bad = env.run(&["analyze", "--green-mass", "1.5"]);
    assert_eq!(code(&bad), 3);
}

#[test]
fn experiment_and_attack_emit_json() {
    let env = Env::new();
    let out = env.run(&[
        "experiment",
        "--vocab",
        "64",
        "--trials",
        "3",
        "--radius",
        "1",
        "--summary",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rep = json(&out);
    assert_eq!(rep["correct_identifications"]["count"], 3);
    assert!(rep["rows"].as_array().unwrap().is_empty());

    let out = env.run(&[
        "attack", "--mode", "both", "--docs", "20", "--forged", "2", "--epochs", "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cmp = json(&out);
    assert_eq!(cmp["timemark"]["forged_passes"], 0);
    assert!(cmp["baseline"]["heldout"]["balanced"].is_f64());
}
