use std::collections::BTreeSet;

use proptest::prelude::*;
use supplyguard::anomaly::Label;
use supplyguard::coalition::{
    build_graph, check_core_stability, check_strategy_proofness, form_coalitions, AgentId, CoreCheck,
    FriendLists, ProofCheck,
};
use supplyguard::ids::Role;
use supplyguard::par::Exec;
use supplyguard::scenario::{
    derive_friend_lists, generate_with, load, save, write_csv, ChannelStream, Regime, ScenarioConfig,
};

fn cfg(regime: Regime, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_channels: 12,
        events_per_channel: 400,
        regime,
        seed,
        ..Default::default()
    }
}

fn csv_bytes(c: &ScenarioConfig, exec: Exec) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&generate_with(c, exec).unwrap(), &mut buf).unwrap();
    buf
}

fn lists_strategy(max_n: u32) -> impl Strategy<Value = FriendLists> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::btree_set(0..n, 0..n as usize), n as usize).prop_map(
            move |rows| {
                let mut l = FriendLists::new();
                for (i, row) in rows.into_iter().enumerate() {
                    l.declare(i as AgentId, row.into_iter().filter(|&j| j != i as AgentId));
                }
                l
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scc_partition_is_core_stable(lists in lists_strategy(10)) {
        let part = form_coalitions(&lists, 1).unwrap();
        prop_assert_eq!(check_core_stability(&lists, &part).unwrap(), CoreCheck::Stable);
    }

    #[test]
    fn scc_partition_is_strategy_proof(lists in lists_strategy(5)) {
        prop_assert_eq!(check_strategy_proofness(&lists).unwrap(), ProofCheck::Proof);
    }

    #[test]
    fn partition_is_deterministic_and_covers_agents(lists in lists_strategy(30)) {
        let a = form_coalitions(&lists, 2).unwrap();
        let b = form_coalitions(&lists.clone(), 2).unwrap();
        prop_assert_eq!(&a, &b);
        let covered: BTreeSet<AgentId> = a.coalitions.iter().flatten().copied().collect();
        prop_assert_eq!(covered, lists.agents().collect::<BTreeSet<_>>());
        prop_assert_eq!(a.coalitions.iter().map(Vec::len).sum::<usize>(), lists.len());
    }

    #[test]
    fn streams_are_seed_reproducible(seed in 0u64..1000, non_iid in any::<bool>()) {
        let regime = if non_iid { Regime::NonIid } else { Regime::Iid };
        let mut c = cfg(regime, seed);
        c.n_channels = 4;
        c.events_per_channel = 100;
        prop_assert_eq!(csv_bytes(&c, Exec::Sequential), csv_bytes(&c, Exec::Parallel));
    }
}

#[test]
fn injected_labels_follow_profiles() {
    for regime in [Regime::Iid, Regime::NonIid] {
        let s = generate_with(&cfg(regime, 3), Exec::Sequential).unwrap();
        let mut injected = 0;
        for ch in &s.channels {
            for r in &ch.records {
                match r.scenario {
                    Some(sc) => {
                        injected += 1;
                        assert_eq!(r.label, ch.profile.label_for(sc), "{regime:?} {sc:?}");
                    }
                    None => assert_eq!(r.label, Label::Normal),
                }
            }
        }
        assert!(injected > 0);
    }
}

#[test]
fn anomaly_count_is_within_binomial_bound() {
    let c = ScenarioConfig {
        n_channels: 10,
        events_per_channel: 1000,
        regime: Regime::Iid,
        seed: 17,
        ..Default::default()
    };
    let s = generate_with(&c, Exec::Sequential).unwrap();
    let anomalous: usize = s
        .channels
        .iter()
        .map(|ch| ch.records.iter().filter(|r| r.label == Label::Anomalous).count())
        .sum();
    assert!((800..=1200).contains(&anomalous), "{anomalous}");
}

/// Mean log quantity of factory writes and mean log gap, per channel.
fn channel_features(ch: &ChannelStream) -> [f64; 2] {
    let q: Vec<f64> = ch
        .records
        .iter()
        .filter(|r| r.role == Role::Factory && r.scenario.is_none())
        .filter_map(|r| r.value)
        .map(|v| v.abs().ln_1p())
        .collect();
    let gaps: Vec<f64> = ch
        .records
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).max(0.0).ln_1p())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    [mean(&q), mean(&gaps)]
}

fn spread(chs: &[ChannelStream]) -> f64 {
    let feats: Vec<[f64; 2]> = chs.iter().map(channel_features).collect();
    let mut total = 0.0;
    for a in &feats {
        for b in &feats {
            total += (a[0] - b[0]).abs() + (a[1] - b[1]).abs();
        }
    }
    total / (feats.len() * feats.len()) as f64
}

#[test]
fn non_iid_channels_differ_more_than_iid() {
    for seed in 0..5 {
        let iid = generate_with(&cfg(Regime::Iid, seed), Exec::Sequential).unwrap();
        let non = generate_with(&cfg(Regime::NonIid, seed), Exec::Sequential).unwrap();
        let (a, b) = (spread(&iid.channels), spread(&non.channels));
        assert!(b > a, "seed {seed}: non-IID spread {b} vs IID {a}");
    }
}

#[test]
fn two_clusters_give_two_clique_coalitions() {
    let c = ScenarioConfig {
        n_channels: 23,
        events_per_channel: 50,
        regime: Regime::NonIid,
        n_profiles: 2,
        seed: 8,
        ..Default::default()
    };
    let s = generate_with(&c, Exec::Sequential).unwrap();
    let lists = derive_friend_lists(&s, c.friend_threshold);
    let g = build_graph(&lists).unwrap();
    let mut sizes: Vec<usize> = (0..2)
        .map(|k| s.channels.iter().filter(|ch| ch.cluster == k).count())
        .collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![11, 12]);
    // Every within-cluster pair is a mutual arc; nothing crosses clusters.
    let within: usize = sizes.iter().map(|n| n * (n - 1)).sum();
    assert_eq!(g.num_arcs(), within);
    let part = form_coalitions(&lists, 2).unwrap();
    let mut got: Vec<usize> = part.coalitions.iter().map(Vec::len).collect();
    got.sort_unstable();
    assert_eq!(got, vec![11, 12]);
    for coalition in &part.coalitions {
        let clusters: BTreeSet<usize> = coalition.iter().map(|&i| s.channels[i as usize].cluster).collect();
        assert_eq!(clusters.len(), 1);
    }
}

#[test]
fn iid_friendship_is_complete() {
    let s = generate_with(&cfg(Regime::Iid, 1), Exec::Sequential).unwrap();
    let lists = derive_friend_lists(&s, 0.25);
    assert!(lists.agents().all(|a| lists.friends_of(a).unwrap().len() == s.channels.len() - 1));
    assert_eq!(form_coalitions(&lists, 2).unwrap().len(), 1);
}

#[test]
fn saved_streams_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, prof) = (dir.path().join("s.csv"), dir.path().join("p.json"));
    let c = cfg(Regime::NonIid, 5);
    let s = generate_with(&c, Exec::Sequential).unwrap();
    save(&s, &csv, &prof).unwrap();
    let back = load(&csv, &prof).unwrap();
    assert_eq!(back.channels.len(), s.channels.len());
    for (a, b) in s.channels.iter().zip(&back.channels) {
        assert_eq!(a.profile, b.profile);
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!((x.timestamp, x.value, x.label, &x.participant), (y.timestamp, y.value, y.label, &y.participant));
        }
    }
    let mut again = Vec::new();
    write_csv(&back, &mut again).unwrap();
    assert_eq!(again, std::fs::read(&csv).unwrap());
}
