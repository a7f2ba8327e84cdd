//! Self-checks behind the `verify` command: ledger chain verification for a
//! run directory and a fast invariant suite over the library.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::access::{index_of, set_least, AccessRequest};
use crate::anomaly::features::{EventWindow, Standardizer, FEATURE_DIM};
use crate::anomaly::model::{gradient, mean_loss, ModelDims, ModelParams};
use crate::asset::create_asset;
use crate::coalition::{
    check_core_stability, check_strategy_proofness, form_coalitions, CoreCheck, FriendLists,
    ProofCheck,
};
use crate::error::HarnessError;
use crate::fed::{fedavg, fedavg_weights};
use crate::ids::{OpSet, Participant, Role};
use crate::ledger::{ChainStatus, ChannelState, TxLog};
use crate::revoke::{decide, AccessDecision};
use crate::scenario::{generate, write_csv, Regime, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerCheck {
    pub file: String,
    pub entries: usize,
    pub status: String,
}

pub fn verify_ledger_file(path: &Path) -> Result<(usize, ChainStatus), HarnessError> {
    let log = TxLog::read_jsonl(BufReader::new(fs::File::open(path)?))?;
    Ok((log.len(), log.verify()))
}

/// Verifies every `ledger/*.jsonl` under a run directory.
pub fn verify_run_dir(dir: &Path) -> Result<Vec<LedgerCheck>, HarnessError> {
    if !dir.join("manifest.json").is_file() {
        return Err(HarnessError::InvalidSpec(format!(
            "{} has no manifest.json",
            dir.display()
        )));
    }
    let mut files: Vec<_> = fs::read_dir(dir.join("ledger"))?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let (entries, status) = verify_ledger_file(p)?;
            Ok(LedgerCheck {
                file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                entries,
                status: match status {
                    ChainStatus::Valid => "valid".into(),
                    ChainStatus::CorruptAt(i) => format!("corrupt at {i}"),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

fn decision_table() -> Check {
    let mut failures = 0;
    for case in 0..8u8 {
        let (member, listed, permitted) = (case & 4 != 0, case & 2 != 0, case & 1 != 0);
        let mut people = vec![Participant::new("admin", Role::Admin).expect("valid")];
        if member {
            people.push(Participant::new("p", Role::Factory).expect("valid"));
        }
        let mut ch = ChannelState::create("c", &people, &["admin"]).expect("valid channel");
        create_asset(&mut ch, "admin", "a", &["x"], [("x".into(), "0".into())].into())
            .expect("valid asset");
        if member && permitted {
            set_least(&mut ch, "admin", "p", "a", "x", OpSet::ALL).expect("admin call");
        }
        if member && listed {
            ch.prl.insert(crate::ids::Ident::new("p").expect("valid"));
        }
        let expected = match (member, listed, permitted) {
            (false, _, _) => AccessDecision::Deny,
            (true, true, _) => AccessDecision::Pending,
            (true, false, true) => AccessDecision::Allow,
            (true, false, false) => AccessDecision::Deny,
        };
        if decide(&ch, &AccessRequest::read("p", "a", "x")) != expected {
            failures += 1;
        }
    }
    check("decision truth table", failures == 0, format!("{failures} of 8 cases differ"))
}

fn chain_tamper(rng: &mut ChaCha8Rng) -> Check {
    let mut log = TxLog::new();
    for i in 0..200u32 {
        log.append(format!("entry {i}").into_bytes());
    }
    let mut missed = 0;
    for _ in 0..100 {
        let mut t = log.clone();
        let i = rng.random_range(0..t.len());
        let e = &mut t.entries_mut()[i];
        let field = rng.random_range(0..3);
        let buf: &mut [u8] = match field {
            0 => &mut e.prev_hash,
            1 => &mut e.payload,
            _ => &mut e.entry_hash,
        };
        let bit = rng.random_range(0..buf.len() * 8);
        buf[bit / 8] ^= 1 << (bit % 8);
        match t.verify() {
            ChainStatus::CorruptAt(k) if k as usize <= i => {}
            _ => missed += 1,
        }
    }
    check("hash-chain tamper detection", missed == 0, format!("{missed} of 100 flips missed"))
}

fn index_vector() -> Check {
    let got = index_of("P1", "A1").map(hex::encode).unwrap_or_default();
    check(
        "permission index digest",
        got == "9fb504228175cfb757fda959d6479b7388f8d9643fffdbf1add2e8227f4cd5a0",
        got,
    )
}

fn random_lists(rng: &mut ChaCha8Rng, n: u32, p: f64) -> FriendLists {
    let mut lists = FriendLists::new();
    for i in 0..n {
        lists.declare(i, (0..n).filter(|&j| j != i && rng.random_bool(p)));
    }
    lists
}

fn reach(lists: &FriendLists, n: usize) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
        for &j in lists.friends_of(i as u32).into_iter().flatten() {
            row[j as usize] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

fn coalitions(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let (mut scc_bad, mut core_bad, mut proof_bad) = (0, 0, 0);
    for _ in 0..100 {
        let n = rng.random_range(1..=12u32);
        let density = rng.random_range(0.05..0.5);
        let lists = random_lists(rng, n, density);
        let part = form_coalitions(&lists, 1).expect("valid lists");
        let r = reach(&lists, n as usize);
        for i in 0..n {
            let c = part.coalition_of(i).expect("covered");
            for j in 0..n {
                let together = c.contains(&j);
                if together != (r[i as usize][j as usize] && r[j as usize][i as usize]) {
                    scc_bad += 1;
                }
            }
        }
        if n <= 8 && check_core_stability(&lists, &part) != Ok(CoreCheck::Stable) {
            core_bad += 1;
        }
    }
    for _ in 0..50 {
        let n = rng.random_range(1..=4u32);
        let lists = random_lists(rng, n, 0.4);
        if check_strategy_proofness(&lists) != Ok(ProofCheck::Proof) {
            proof_bad += 1;
        }
    }
    vec![
        check("SCC partition equals mutual reachability", scc_bad == 0, format!("{scc_bad} mismatched pairs")),
        check("SCC partition is core stable", core_bad == 0, format!("{core_bad} blocked instances")),
        check("SCC partition is strategy-proof", proof_bad == 0, format!("{proof_bad} manipulable instances")),
    ]
}

fn gradient_check(rng: &mut ChaCha8Rng) -> Check {
    let dims = ModelDims {
        window: 3,
        features: FEATURE_DIM,
        hidden: 5,
    };
    let mut worst: f64 = 0.0;
    for draw in 0..5 {
        let mut p = ModelParams::init(dims, draw);
        for t in p.theta.iter_mut() {
            *t += rng.random_range(-0.1..0.1);
        }
        let w = EventWindow {
            input: (0..dims.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            actor: "a".into(),
            label: None,
            position: 0,
        };
        let ws = std::slice::from_ref(&w);
        let g = gradient(&p, ws).expect("dims match");
        let eps = 1e-5;
        for k in 0..p.theta.len() {
            let orig = p.theta[k];
            p.theta[k] = orig + eps;
            let up = mean_loss(&p, ws).expect("dims match");
            p.theta[k] = orig - eps;
            let down = mean_loss(&p, ws).expect("dims match");
            p.theta[k] = orig;
            let fd = (up - down) / (2.0 * eps);
            let rel = (g[k] - fd).abs() / (g[k].abs() + fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    check("analytic gradient vs finite differences", worst < 1e-4, format!("max relative error {worst:.2e}"))
}

fn fedavg_checks(rng: &mut ChaCha8Rng) -> Check {
    let dims = ModelDims {
        window: 1,
        features: 1,
        hidden: 1,
    };
    let mut ok = true;
    for _ in 0..50 {
        let k = rng.random_range(1..6);
        let clients: Vec<ModelParams> = (0..k)
            .map(|_| ModelParams {
                theta: (0..dims.param_len()).map(|_| rng.random_range(-5.0..5.0)).collect(),
                dims,
                sample_count: rng.random_range(1..1000),
            })
            .collect();
        let w = fedavg_weights(&clients.iter().map(|c| c.sample_count).collect::<Vec<_>>())
            .expect("positive counts");
        ok &= (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        let agg = fedavg(&clients).expect("same dims");
        for (i, v) in agg.theta.iter().enumerate() {
            let lo = clients.iter().map(|c| c.theta[i]).fold(f64::INFINITY, f64::min);
            let hi = clients.iter().map(|c| c.theta[i]).fold(f64::NEG_INFINITY, f64::max);
            ok &= *v >= lo - 1e-12 && *v <= hi + 1e-12;
        }
    }
    check("FedAvg normalization and convexity", ok, "")
}

fn standardization(rng: &mut ChaCha8Rng) -> Check {
    let rows: Vec<[f64; 4]> = (0..200)
        .map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0)))
        .collect();
    let s = Standardizer::fit(&rows);
    let worst = rows
        .iter()
        .flat_map(|r| {
            let back = s.invert(&s.apply(r));
            (0..4).map(move |k| (back[k] - r[k]).abs())
        })
        .fold(0.0, f64::max);
    check("standardization invertibility", worst < 1e-9, format!("max error {worst:.2e}"))
}

fn scenario_determinism(seed: u64) -> Check {
    let cfg = ScenarioConfig {
        n_channels: 4,
        events_per_channel: 200,
        regime: Regime::NonIid,
        seed,
        ..Default::default()
    };
    let bytes = |c: &ScenarioConfig| {
        let mut b = Vec::new();
        write_csv(&generate(c).expect("valid config"), &mut b).expect("in-memory write");
        b
    };
    check("seeded stream reproducibility", bytes(&cfg) == bytes(&cfg), "")
}

/// Runs every check and returns one result per property.
pub fn invariant_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        decision_table(),
        chain_tamper(&mut rng),
        index_vector(),
    ];
    out.extend(coalitions(&mut rng));
    out.push(gradient_check(&mut rng));
    out.push(fedavg_checks(&mut rng));
    out.push(standardization(&mut rng));
    out.push(scenario_determinism(seed));
    out
}
