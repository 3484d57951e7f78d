use std::path::{Path, PathBuf};
use std::process::Command;

use bpds_cli::artifacts::{ACCESS_LOG, CHAIN, CREDITS, EXECUTION_LOG, ROSTER, SCHEDULES};
use bpds_cli::{
    inspect, load_membership, run, run_scenario, verify_dir, CliError, InspectWhat, RunOptions,
    Scenario,
};
use bpds_core::ledger::{chain_verify, Block, DumpRecord};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bpds"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn happy_path_is_reproducible_and_verifies() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = run(&scenario("happy_path"), RunOptions::default(), a.path()).unwrap();
    run(&scenario("happy_path"), RunOptions::default(), b.path()).unwrap();
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));

    assert_eq!(out.sharing.len(), 1);
    assert_eq!(out.sharing[0].parts, vec![2, 3, 5, 6]);
    assert_eq!(out.sharing[0].verified, Some(true));
    assert_eq!(out.sharing[0].signer.as_deref(), Some("dr-lee"));
    verify_dir(a.path()).unwrap();

    let c = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        seed: Some(43),
        ..RunOptions::default()
    };
    run(&scenario("happy_path"), opts, c.path()).unwrap();
    let chain = |d: &Path| std::fs::read(d.join(CHAIN)).unwrap();
    assert_ne!(chain(a.path()), chain(c.path()));
}

#[test]
fn unauthorized_user_gets_nothing() {
    let dir = tempfile::tempdir().unwrap();
    run(&scenario("unauthorized"), RunOptions::default(), dir.path()).unwrap();
    verify_dir(dir.path()).unwrap();
    let actors = std::fs::read_to_string(dir.path().join("actors.txt")).unwrap();
    let snoop = actors
        .lines()
        .find_map(|l| l.strip_prefix("user snoop "))
        .unwrap()
        .to_owned();

    let exec = std::fs::read_to_string(dir.path().join(EXECUTION_LOG)).unwrap();
    let snoop_lines: Vec<&str> = exec
        .lines()
        .filter(|l| l.contains(&format!(" {snoop} ")))
        .collect();
    assert_eq!(snoop_lines.len(), 2);
    assert!(snoop_lines.iter().all(|l| l.contains("denied:no-grant")));

    // Neither the cloud log nor the sharing results mention the snoop
    // retrieving anything, and no stored url appears in its log lines.
    let access = std::fs::read_to_string(dir.path().join(ACCESS_LOG)).unwrap();
    assert!(!access.lines().any(|l| l.contains(&snoop)));
    let sharing = std::fs::read_to_string(dir.path().join("sharing.txt")).unwrap();
    assert!(!sharing.contains(&snoop));
    assert!(snoop_lines.iter().all(|l| !l.contains("cloud://")));
}

/// First height at which the dumped chain stops verifying, computed
/// directly from the decoded blocks.
fn oracle_first_bad_height(dir: &Path) -> Option<u64> {
    let text = |n: &str| std::fs::read_to_string(dir.join(n)).unwrap();
    let membership = load_membership(&text(ROSTER), &text(SCHEDULES)).unwrap();
    let mut blocks = Vec::new();
    for line in text(CHAIN).lines() {
        let rec = DumpRecord::parse(line).unwrap();
        match Block::from_bytes(&rec.block) {
            Ok(b) if b.dump_line() == line => blocks.push(b),
            _ => return Some(rec.height),
        }
    }
    chain_verify(&blocks, &membership).err().map(|f| f.height)
}

fn reported_height(e: &CliError) -> u64 {
    let CliError::Invariant(msg) = e else {
        panic!("expected an invariant failure, got {e}")
    };
    let rest = msg.split("height ").nth(1).expect("message names a height");
    rest.split(':').next().unwrap().parse().unwrap()
}

#[test]
fn tamper_reports_first_invalid_height() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario("tamper"), RunOptions::default(), dir.path()).unwrap();
    assert!(out.blocks > 7);
    let err = verify_dir(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert_eq!(
        Some(reported_height(&err)),
        oracle_first_bad_height(dir.path())
    );
    assert_eq!(reported_height(&err), 7);

    // The same run without the injected flip is clean.
    let mut s = Scenario::load(&scenario("tamper")).unwrap();
    s.tamper = None;
    let clean = tempfile::tempdir().unwrap();
    run_scenario(&s, RunOptions::default())
        .unwrap()
        .artifacts
        .write_to(clean.path())
        .unwrap();
    verify_dir(clean.path()).unwrap();
}

#[test]
fn byte_edits_to_the_dump_are_located() {
    let dir = tempfile::tempdir().unwrap();
    run(&scenario("happy_path"), RunOptions::default(), dir.path()).unwrap();
    let path = dir.path().join(CHAIN);
    let original = std::fs::read_to_string(&path).unwrap();
    for (height, byte) in [(0u64, 3usize), (4, 60), (11, 200)] {
        let tampered = bpds_cli::tamper_dump(&original, height, byte, 0).unwrap();
        std::fs::write(&path, &tampered).unwrap();
        let err = verify_dir(dir.path()).unwrap_err();
        assert_eq!(reported_height(&err), height);
        assert_eq!(oracle_first_bad_height(dir.path()), Some(height));
    }
}

#[test]
fn bundled_scenarios_verify_after_run() {
    for name in ["happy_path", "unauthorized", "grants"] {
        let dir = tempfile::tempdir().unwrap();
        run(&scenario(name), RunOptions::default(), dir.path()).unwrap();
        verify_dir(dir.path()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn inspect_renderings() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario("happy_path"), RunOptions::default(), dir.path()).unwrap();

    let chain = inspect(dir.path(), InspectWhat::Chain, None).unwrap();
    assert_eq!(chain.lines().count(), out.blocks);

    let credits = inspect(dir.path(), InspectWhat::Credits, None).unwrap();
    let scores: Vec<u64> = credits
        .lines()
        .map(|l| l.rsplit("score=").next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 50);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    // Filtered logs equal a linear scan for the actor's account id.
    let actors = std::fs::read_to_string(dir.path().join("actors.txt")).unwrap();
    for line in actors.lines() {
        let f: Vec<&str> = line.split(' ').collect();
        let (label, id) = (f[1], f[2]);
        let got = inspect(dir.path(), InspectWhat::Logs, Some(label)).unwrap();
        let by_id = inspect(dir.path(), InspectWhat::Logs, Some(id)).unwrap();
        assert_eq!(got, by_id);
        let access = std::fs::read_to_string(dir.path().join(ACCESS_LOG)).unwrap();
        let exec = std::fs::read_to_string(dir.path().join(EXECUTION_LOG)).unwrap();
        let mut expected = String::new();
        for l in access.lines().filter(|l| l.split(' ').nth(2) == Some(id)) {
            expected.push_str(&format!("access {l}\n"));
        }
        for l in exec.lines().filter(|l| l.split(' ').nth(3) == Some(id)) {
            expected.push_str(&format!("contract {l}\n"));
        }
        assert_eq!(got, expected, "{label}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenario("happy_path"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let verify = |d: &Path| {
        bin()
            .arg("verify")
            .arg("--out")
            .arg(d)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(verify(dir.path()), Some(0));

    let tampered = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenario("tamper"))
        .arg("--out")
        .arg(tampered.path())
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert_eq!(verify(tampered.path()), Some(3));

    std::fs::remove_file(dir.path().join(CREDITS)).unwrap();
    assert_eq!(verify(dir.path()), Some(4));

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "until = 1000\n[[timeline]]\nevent = \"visit\"\nt = 5\n",
    )
    .unwrap();
    let status = bin()
        .args(["run", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn crash_faults_in_scenario_keep_replicas_consistent() {
    let text = std::fs::read_to_string(scenario("happy_path"))
        .unwrap()
        .replace(
            "[nodes]",
            "[faults]\nscript = \"crash 3 25000\\nrecover 3 70000\"\n\n[nodes]",
        );
    let s = Scenario::parse(&text).unwrap();
    let out = run_scenario(&s, RunOptions::default()).unwrap();
    assert!(out.violations.is_empty(), "{:?}", out.violations);
    assert_eq!(out.blocks, 11);
    assert_eq!(out.sharing[0].verified, Some(true));
}
