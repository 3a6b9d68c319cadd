use std::process::Command;

fn colloquy() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_colloquy"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn smoke_demo_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = colloquy()
            .args(["smoke", "--seed", "42", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    }
    for file in ["chat.csv", "surveys.csv"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn smoke_with_empty_scenario_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "").unwrap();
    let out = colloquy()
        .args(["smoke", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));
}

#[test]
fn smoke_runs_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(
        &path,
        r#"
events = '''
at_ms,slot,action,value
0,1,join,
0,2,join,
100,1,chat,hi
'''
[room]
duration_s = 5
require_ready = false
[[slot]]
index = 1
kind = "human"
[[slot]]
index = 2
kind = "human"
"#,
    )
    .unwrap();
    let out = colloquy()
        .args(["smoke", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("invariants: ok"));
}

#[test]
fn serve_with_production_and_no_tls_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("server.toml");
    std::fs::write(&path, "production = true\n").unwrap();
    let out = colloquy()
        .args(["serve", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("production mode requires"));
}

#[test]
fn export_reads_saved_state() {
    use std::sync::Arc;

    use colloquy::auth::Secrets;
    use colloquy::clock::SystemClock;
    use colloquy::platform::{Platform, PlatformConfig, QueuedJobs};
    use colloquy::registry::StudyType;

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("server.toml");
    let data = dir.path().join("state.json");
    std::fs::write(&cfg, format!("data_path = {:?}\n", data.display().to_string())).unwrap();
    let (key, hmac) = ("ab".repeat(32), "cli-test");

    let mut config = PlatformConfig::default();
    config.auth.bcrypt_cost = 4;
    let secrets = Secrets::parse(&key, hmac).unwrap();
    let p = Platform::new(config, &secrets, Arc::new(SystemClock), Arc::new(QueuedJobs::default()));
    let owner = p.register("cli@example.org", "correct horse battery").unwrap();
    let study = p.create_study(owner, "cli", StudyType::Experimental).unwrap();
    let room = p
        .create_rooms_csv(owner, study.id, b"condition_label,slot_count,duration_s\n,2,60\n")
        .unwrap()[0]
        .id;
    p.save(&data).unwrap();

    let export = |room: String, kind: &str, out: &std::path::Path| {
        colloquy()
            .args(["export", "--room", &room, "--kind", kind, "--out"])
            .arg(out)
            .arg("--config")
            .arg(&cfg)
            .env("COLLOQUY_MASTER_KEY", &key)
            .env("COLLOQUY_HMAC_SECRET", hmac)
            .output()
            .unwrap()
    };
    let out = dir.path().join("surveys.csv");
    let ok = export(room.to_string(), "survey", &out);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("study_id,room_id"));

    let missing = export("00000000-0000-4000-8000-000000000000".into(), "chat", &dir.path().join("x.csv"));
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("unknown room"));
}
