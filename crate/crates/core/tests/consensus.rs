use std::collections::BTreeMap;
use std::time::Instant;

use bpds_core::account::{AccountKeyPair, Role};
use bpds_core::consensus::{Consortium, ConsortiumConfig, CreditConfig, NodeSetup};
use bpds_core::group::GroupProfile;
use bpds_core::ledger::{chain_verify, CYCLE_MS, SLOT_MS};
use bpds_core::sim::{NetConfig, NodeId};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn nodes(n: u32, seed: u64) -> Vec<NodeSetup> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| NodeSetup {
            id: NodeId(i),
            keys: AccountKeyPair::generate(GroupProfile::Test, Role::Node, &mut rng),
            credit: CreditConfig::default().initial,
        })
        .collect()
}

fn consortium(seed: u64, faults: &str) -> Consortium {
    let config = ConsortiumConfig {
        net: NetConfig {
            seed,
            ..NetConfig::default()
        },
        ..ConsortiumConfig::default()
    };
    Consortium::new(config, nodes(50, seed), faults.parse().unwrap()).unwrap()
}

#[test]
fn fault_free_cycle_commits_thirty_blocks() {
    let started = Instant::now();
    let mut c = consortium(1, "");
    c.run_until(CYCLE_MS);
    let elapsed = started.elapsed();

    let r = c.reference();
    let blocks = r.chain.blocks();
    assert_eq!(blocks.len(), 30);
    for (k, b) in blocks.iter().enumerate() {
        assert_eq!(b.t, k as u64 * SLOT_MS);
        assert_eq!(b.producer, NodeId(k as u32));
        assert_eq!(b.approvals(), 20);
    }
    assert_eq!(chain_verify(blocks, r.membership), Ok(()));
    let cycles: Vec<u64> = r
        .membership
        .schedules()
        .iter()
        .map(|s| s.cycle_start)
        .collect();
    assert_eq!(cycles, vec![0, CYCLE_MS]);
    let readjusts: Vec<&String> = c
        .trace()
        .iter()
        .filter(|l| l.contains(" readjust "))
        .collect();
    assert_eq!(readjusts.len(), 1);
    assert!(readjusts[0].starts_with("300000 readjust cycle=1"));
    c.check_replicas().unwrap();
    // Every producer and auditor earned one point per block or audit.
    assert_eq!(r.credits.score(NodeId(0)), Some(101));
    assert_eq!(r.credits.score(NodeId(30)), Some(130));
    eprintln!("fault-free cycle: {elapsed:?}");
}

#[test]
fn crashed_producer_misses_slot_and_is_reranked() {
    let mut c = consortium(2, "crash 29 280000");
    c.run_until(CYCLE_MS);
    let r = c.reference();
    assert_eq!(r.chain.len(), 29);
    assert!(r.chain.blocks().iter().all(|b| b.producer != NodeId(29)));
    assert_eq!(r.credits.score(NodeId(29)), Some(100 - 5));
    // Brute-force re-sort of the final scores.
    let mut oracle: Vec<(NodeId, u64)> = r.credits.scores().iter().map(|(&n, &s)| (n, s)).collect();
    for i in 0..oracle.len() {
        for j in i + 1..oracle.len() {
            let (a, b) = (oracle[i], oracle[j]);
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                oracle.swap(i, j);
            }
        }
    }
    let next = r.membership.schedule_at(CYCLE_MS).unwrap();
    let ids: Vec<NodeId> = oracle.iter().map(|p| p.0).collect();
    assert_eq!(next.rpns, ids[..30]);
    assert_eq!(next.atns, ids[30..50]);
    assert_eq!(next.atns.last(), Some(&NodeId(29)));
    c.check_replicas().unwrap();
}

#[test]
fn recovered_node_resyncs() {
    let mut c = consortium(3, "crash 4 15000\nrecover 4 95000");
    c.run_until(CYCLE_MS - 1);
    let r4 = c.replica(NodeId(4)).unwrap();
    assert!(r4.up);
    assert_eq!(r4.chain.len(), 29);
    assert_eq!(r4.credits.score(NodeId(4)), Some(95));
    c.check_replicas().unwrap();
    assert!(c.trace().iter().any(|l| l.contains("sync node=4")));
}

#[test]
fn quorum_boundary_with_byzantine_auditors() {
    let script = |k: u32| -> String {
        (30..30 + k)
            .map(|n| format!("byzantine-audit {n} 0 5000\n"))
            .collect()
    };
    let mut c = consortium(4, &script(9));
    c.run_until(SLOT_MS - 1);
    let r = c.reference();
    assert_eq!(r.chain.len(), 1);
    assert_eq!(r.chain.blocks()[0].approvals(), 11);

    let mut c = consortium(4, &script(10));
    c.run_until(SLOT_MS - 1);
    assert_eq!(c.reference().chain.len(), 0);
    assert!(c
        .trace()
        .iter()
        .any(|l| l.contains("abort node=0 height=0 approvals=10/11")));
    // The rejecting auditors are penalised against the valid candidate.
    let credits = c.reference().credits.clone();
    assert_eq!(credits.score(NodeId(30)), Some(90));
    assert_eq!(credits.score(NodeId(45)), Some(101));
    assert_eq!(credits.score(NodeId(0)), Some(100));
}

#[test]
fn identical_seeds_identical_runs() {
    let run = |seed| {
        let mut c = consortium(
            seed,
            "crash 7 30000\nrecover 7 120000\nbyzantine-audit 33 0 100000",
        );
        c.run_until(CYCLE_MS);
        let r = c.reference();
        (
            r.chain.dump_lines(),
            r.credits.dump_lines(),
            c.trace().to_vec(),
            c.net_trace()
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9).3, run(10).3);
}

#[test]
fn all_equal_credits_elect_in_id_order() {
    let c = consortium(5, "");
    let r = c.reference();
    let s = &r.membership.schedules()[0];
    assert_eq!(s.rpns, (0..30).map(NodeId).collect::<Vec<_>>());
    let expected: BTreeMap<NodeId, u64> = (0..50).map(|n| (NodeId(n), 100)).collect();
    assert_eq!(r.credits.scores(), &expected);
}
