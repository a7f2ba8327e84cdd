//! End-to-end experiment pipeline.
//!
//! generate (or load) streams → build channels and replay the training split
//! through the contracts → encode windows → local pretraining → coalition
//! formation → federated (or central) rounds → monitored replay of the
//! held-out splits with PRL enforcement → scripted admin review.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::access::{promote, set_least, AccessRequest};
use crate::anomaly::detect::{AgentConfig, Monitor};
use crate::anomaly::features::{
    build_windows, encode_event, FeatureTracker, Label, Standardizer,
};
use crate::anomaly::model::{score, train_local, ModelParams, TrainConfig};
use crate::asset::{create_asset, execute, ExecOutcome};
use crate::coalition::{form_coalitions, CoalitionPartition};
use crate::error::HarnessError;
use crate::fed::{
    fedavg, privacy_leakage, rounds_to_fraction, run_central, run_rounds, BoundaryMeter,
    ClientData, DecayShape, Evaluation, Federation, FlConfig, FlRun, LeakageReport, LrSchedule,
    Metrics,
};
use crate::ids::{OpSet, Operation, Participant, Role};
use crate::ledger::{ChainStatus, ChannelState};
use crate::par::{derive_seed, Exec};
use crate::revoke::{add_prl, review_pending, AccessDecision, ReviewOutcome, Verdict};
use crate::scenario::{
    derive_friend_lists, generate_with, participant_id, ChannelStream, LabeledEventStream,
    RawRecord, Regime, Scenario, ScenarioConfig, ASSET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalitionMode {
    Preference,
    Random { groups: usize },
    AllInclusive,
    CentralBaseline,
}

impl CoalitionMode {
    pub fn name(&self) -> String {
        match self {
            CoalitionMode::Preference => "preference".into(),
            CoalitionMode::Random { groups } => format!("random{groups}"),
            CoalitionMode::AllInclusive => "all_inclusive".into(),
            CoalitionMode::CentralBaseline => "central_baseline".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminPolicy {
    ApproveAll,
    RejectAll,
    ApproveIfNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub fl: FlConfig,
    pub mode: CoalitionMode,
    /// Coalitions smaller than this train locally.
    pub min_coalition_size: usize,
    /// Local epochs every channel trains before coalition formation.
    pub pretrain_epochs: usize,
    pub admin_policy: AdminPolicy,
    pub exec: Exec,
    /// Write a parameter checkpoint per coalition per round.
    pub checkpoints: bool,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    /// One local epoch per round at a fixed rate.
    pub fn iid() -> Self {
        ExperimentSpec {
            scenario: ScenarioConfig {
                regime: Regime::Iid,
                ..Default::default()
            },
            agent: AgentConfig::default(),
            fl: FlConfig {
                rounds: 50,
                local_epochs: 1,
                lr_schedule: LrSchedule::constant(0.01),
                seed: 0,
            },
            mode: CoalitionMode::Preference,
            min_coalition_size: 2,
            pretrain_epochs: 3,
            admin_policy: AdminPolicy::ApproveIfNormal,
            exec: Exec::default(),
            checkpoints: false,
            out_dir: None,
        }
    }

    /// Ten local epochs per round with geometric learning-rate decay.
    pub fn non_iid() -> Self {
        let mut spec = Self::iid();
        spec.scenario.regime = Regime::NonIid;
        spec.fl = FlConfig {
            rounds: 100,
            local_epochs: 10,
            lr_schedule: LrSchedule {
                initial: 0.01,
                final_lr: 0.0004,
                shape: DecayShape::Geometric,
            },
            seed: 0,
        };
        spec
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        self.agent.validate()?;
        self.fl.validate()?;
        if self.min_coalition_size == 0 {
            return Err(HarnessError::InvalidSpec("minimum coalition size must be positive".into()));
        }
        if let CoalitionMode::Random { groups } = self.mode {
            if groups == 0 {
                return Err(HarnessError::InvalidSpec("random mode needs at least one group".into()));
            }
        }
        Ok(())
    }
}

const ROLE_ATTRIBUTES: [(Role, &str); 3] = [
    (Role::Factory, "produced"),
    (Role::Distributor, "shipped"),
    (Role::Retailer, "sold"),
];

fn admin_id(channel: &str) -> String {
    participant_id(channel, Role::Admin)
}

/// Builds a channel from the participants and attributes seen in its stream.
/// Each role gets full rights on its own attribute and read access to the
/// rest; routine resource updates are granted to the distributor as an extra
/// privilege.
pub fn setup_channel(stream: &ChannelStream) -> Result<ChannelState, HarnessError> {
    let admin = admin_id(&stream.channel);
    let mut members: BTreeMap<String, Role> = BTreeMap::new();
    let mut attributes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &stream.records {
        members.entry(r.participant.clone()).or_insert(r.role);
        let attrs = attributes.entry(r.asset.clone()).or_default();
        if !attrs.contains(&r.attribute) {
            attrs.push(r.attribute.clone());
        }
    }
    if stream.records.iter().any(|r| r.asset == ASSET) || attributes.is_empty() {
        let attrs = attributes.entry(ASSET.to_string()).or_default();
        for a in crate::scenario::ATTRIBUTES {
            if !attrs.iter().any(|x| x == a) {
                attrs.push(a.to_string());
            }
        }
    }
    members.entry(admin.clone()).or_insert(Role::Admin);
    let participants = members
        .iter()
        .map(|(id, role)| Participant::new(id, *role))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ch = ChannelState::create(&stream.channel, &participants, &[&admin])?;

    for (asset, attrs) in &attributes {
        let names: Vec<&str> = attrs.iter().map(String::as_str).collect();
        let init = attrs.iter().map(|a| (a.clone(), "0".to_string())).collect();
        create_asset(&mut ch, &admin, asset, &names, init)?;
        for (id, role) in &members {
            if *role == Role::Admin {
                continue;
            }
            for attr in attrs {
                let own = ROLE_ATTRIBUTES.iter().any(|(r, a)| r == role && a == attr);
                let ops = if own {
                    OpSet::ALL
                } else {
                    [Operation::Read].into_iter().collect()
                };
                set_least(&mut ch, &admin, id, asset, attr, ops)?;
            }
        }
    }
    if stream.routine_factors.contains_key(&Scenario::UnauthorizedResource) {
        if let Some((id, _)) = members.iter().find(|(_, r)| **r == Role::Distributor) {
            if attributes.get(ASSET).is_some_and(|a| a.iter().any(|x| x == "resources")) {
                promote(
                    &mut ch,
                    &admin,
                    id,
                    ASSET,
                    "resources",
                    Operation::Update,
                )?;
            }
        }
    }
    Ok(ch)
}

pub fn to_request(r: &RawRecord) -> Result<AccessRequest, HarnessError> {
    Ok(AccessRequest::new(
        &r.participant,
        &r.asset,
        &r.attribute,
        r.operation,
        r.value_string(),
    )?)
}

/// Chronological split boundaries (train end, validation end).
pub fn split_points(n: usize) -> (usize, usize) {
    (n * 6 / 10, n * 8 / 10)
}

/// A channel after the training split has been replayed and its windows built.
#[derive(Debug, Clone)]
pub struct PreparedChannel {
    pub state: ChannelState,
    pub client: ClientData,
    pub standardizer: Standardizer,
}

pub fn prepare_channel(
    index: usize,
    stream: &ChannelStream,
    agent: &AgentConfig,
    seed: u64,
) -> Result<PreparedChannel, HarnessError> {
    let mut state = setup_channel(stream)?;
    let records: Vec<&RawRecord> = stream.records.iter().filter(|r| r.role != Role::Admin).collect();
    let n = records.len();
    let (train_end, val_end) = split_points(n);

    let mut tracker = FeatureTracker::new();
    let raw: Vec<_> = records.iter().map(|r| tracker.observe(&r.to_event())).collect();
    let standardizer = Standardizer::fit(raw[..train_end].iter().map(|f| &f.numeric));
    let vectors = raw
        .iter()
        .map(|f| encode_event(f, &standardizer))
        .collect::<Result<Vec<_>, _>>()?;
    let windows = build_windows(&vectors, agent.window);

    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for w in windows {
        if w.position < train_end {
            train.push(w);
        } else if w.position < val_end {
            if w.label == Some(Label::Normal) {
                validation.push(w);
            }
        } else {
            test.push(w);
        }
    }

    let mut raw_bytes = 0;
    for r in &records[..train_end] {
        raw_bytes += r.encoded_len();
        execute(&mut state, &to_request(r)?)?;
    }

    Ok(PreparedChannel {
        state,
        client: ClientData {
            id: index as u32,
            name: stream.channel.clone(),
            seed: derive_seed(seed, &[0xA6, index as u64]),
            train,
            validation,
            test,
            raw_train_records: train_end as u64,
            raw_train_bytes: raw_bytes,
        },
        standardizer,
    })
}

/// Seeded uniform partition into `groups` near-equal groups.
pub fn random_partition(n: usize, groups: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5A])));
    let groups = groups.clamp(1, n.max(1));
    let mut out = vec![Vec::new(); groups];
    for (i, id) in ids.into_iter().enumerate() {
        out[i % groups].push(id);
    }
    out.retain(|g| !g.is_empty());
    out
}

pub fn partition_for(
    spec: &ExperimentSpec,
    stream: &LabeledEventStream,
) -> Result<CoalitionPartition, HarnessError> {
    let n = stream.channels.len();
    Ok(match spec.mode {
        CoalitionMode::Preference | CoalitionMode::CentralBaseline => form_coalitions(
            &derive_friend_lists(stream, stream.config.friend_threshold),
            spec.min_coalition_size,
        )?,
        CoalitionMode::Random { groups } => {
            CoalitionPartition::from_groups(random_partition(n, groups, spec.scenario.seed))
                .with_min_size(spec.min_coalition_size)
        }
        CoalitionMode::AllInclusive => {
            CoalitionPartition::from_groups(vec![(0..n as u32).collect()])
                .with_min_size(spec.min_coalition_size)
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminReport {
    pub reviewed: u64,
    pub approved: u64,
    pub rejected: u64,
    pub executed: u64,
    pub denied: u64,
    pub remaining: u64,
}

/// Applies a scripted verdict to every pending request, oldest first.
/// `labels` maps tickets to the ground truth of the request behind them.
pub fn replay_interactive_admin(
    channel: &mut ChannelState,
    labels: &BTreeMap<u64, Label>,
    policy: AdminPolicy,
) -> Result<AdminReport, HarnessError> {
    let admin = channel
        .admins
        .iter()
        .next()
        .map(|a| a.to_string())
        .ok_or_else(|| HarnessError::InvalidSpec("channel has no admin".into()))?;
    let tickets: Vec<u64> = channel.pending.iter().map(|p| p.ticket).collect();
    let mut report = AdminReport::default();
    for ticket in tickets {
        let verdict = match policy {
            AdminPolicy::ApproveAll => Verdict::Approve,
            AdminPolicy::RejectAll => Verdict::Reject,
            AdminPolicy::ApproveIfNormal => match labels.get(&ticket) {
                Some(Label::Normal) => Verdict::Approve,
                _ => Verdict::Reject,
            },
        };
        report.reviewed += 1;
        match verdict {
            Verdict::Approve => report.approved += 1,
            Verdict::Reject => report.rejected += 1,
        }
        match review_pending(channel, &admin, ticket, verdict)? {
            ReviewOutcome::Executed(_) => report.executed += 1,
            ReviewOutcome::Denied => report.denied += 1,
            ReviewOutcome::Dropped => {}
        }
    }
    report.remaining = channel.pending.len() as u64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channel: String,
    pub coalition: usize,
    pub tau: f64,
    pub flagged: Vec<String>,
    pub pending_normal: u64,
    pub pending_anomalous: u64,
    pub admin: AdminReport,
    pub log_entries: u64,
    pub chain_valid: bool,
}

/// Replays the validation and test records through the contracts while the
/// agent scores each event; flagged actors go on the PRL, and requests they
/// submit afterwards wait for review.
pub fn monitored_replay(
    prepared: &mut PreparedChannel,
    stream: &ChannelStream,
    params: &ModelParams,
    tau: f64,
    agent: &AgentConfig,
    policy: AdminPolicy,
) -> Result<(Vec<String>, u64, u64, AdminReport), HarnessError> {
    let records: Vec<&RawRecord> = stream.records.iter().filter(|r| r.role != Role::Admin).collect();
    let (train_end, _) = split_points(records.len());
    let mut tracker = FeatureTracker::new();
    let raw: Vec<_> = records.iter().map(|r| tracker.observe(&r.to_event())).collect();
    let vectors = raw
        .iter()
        .map(|f| encode_event(f, &prepared.standardizer))
        .collect::<Result<Vec<_>, _>>()?;
    let all_windows = build_windows(&vectors, agent.window);
    let by_pos: BTreeMap<usize, &crate::anomaly::features::EventWindow> =
        all_windows.iter().map(|w| (w.position, w)).collect();

    let mut monitor = Monitor::new(tau, agent.flag_policy);
    let mut flagged = Vec::new();
    let mut labels = BTreeMap::new();
    let (mut pending_normal, mut pending_anomalous) = (0, 0);
    let state = &mut prepared.state;
    for (i, r) in records.iter().enumerate().skip(train_end) {
        let out = execute(state, &to_request(r)?)?;
        if out == ExecOutcome::Decision(AccessDecision::Pending) {
            let ticket = state.pending.back().expect("just enqueued").ticket;
            labels.insert(ticket, r.label);
            match r.label {
                Label::Normal => pending_normal += 1,
                Label::Anomalous => pending_anomalous += 1,
            }
        }
        if let Some(w) = by_pos.get(&i) {
            if monitor.observe(&w.actor, score(params, w)?) && !state.prl.contains(w.actor.as_str()) {
                add_prl(state, &w.actor)?;
                flagged.push(w.actor.clone());
            }
        }
    }
    let admin = replay_interactive_admin(state, &labels, policy)?;
    Ok((flagged, pending_normal, pending_anomalous, admin))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionReport {
    pub members: Vec<String>,
    pub fl_enabled: bool,
    pub training: String,
    pub final_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub scope: String,
    pub client_losses: Vec<f64>,
    pub metrics: Metrics,
    pub bytes_shared: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub regime: Regime,
    pub seed: u64,
    pub rounds: usize,
    pub final_metrics: Metrics,
    pub rounds_to_90: Option<usize>,
    pub leakage: LeakageReport,
    pub meter: BoundaryMeter,
    pub partition: CoalitionPartition,
    pub coalitions: Vec<CoalitionReport>,
    pub channels: Vec<ChannelReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub rows: Vec<RoundRow>,
    pub states: Vec<ChannelState>,
}

pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome, HarnessError> {
    spec.validate()?;
    let stream = generate_with(&spec.scenario, spec.exec)?;
    run_on_stream(spec, &stream)
}

struct CoalitionRun {
    training: &'static str,
    runs: Vec<(Vec<usize>, FlRun)>,
}

pub fn run_on_stream(
    spec: &ExperimentSpec,
    stream: &LabeledEventStream,
) -> Result<RunOutcome, HarnessError> {
    spec.validate()?;
    if stream.channels.is_empty() {
        return Err(HarnessError::InvalidSpec("stream has no channels".into()));
    }
    let exec = spec.exec;
    let seed = spec.fl.seed;
    let indexed: Vec<(usize, &ChannelStream)> = stream.channels.iter().enumerate().collect();
    let mut prepared = exec
        .map(&indexed, |(i, ch)| prepare_channel(*i, ch, &spec.agent, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let dims = spec.agent.dims();
    let init = ModelParams::init(dims, derive_seed(seed, &[0x1]));
    let pretrained: Vec<ModelParams> = if spec.pretrain_epochs == 0 {
        prepared
            .iter()
            .map(|p| ModelParams {
                sample_count: p.client.train.len() as u64,
                ..init.clone()
            })
            .collect()
    } else {
        exec.map(&prepared, |p| {
            train_local(
                &init,
                &p.client.train,
                &TrainConfig {
                    epochs: spec.pretrain_epochs,
                    learning_rate: spec.fl.lr_schedule.initial,
                    batch_size: spec.agent.batch_size,
                    seed: derive_seed(p.client.seed, &[0xB0]),
                },
            )
            .map(|o| o.params)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
    };

    let partition = partition_for(spec, stream)?;
    let central = spec.mode == CoalitionMode::CentralBaseline;
    let mut meter = BoundaryMeter::default();
    let mut coalition_runs = Vec::with_capacity(partition.len());
    for (members, &enabled) in partition.coalitions.iter().zip(&partition.fl_enabled) {
        let idx: Vec<usize> = members.iter().map(|&m| m as usize).collect();
        let clients: Vec<ClientData> = idx.iter().map(|&i| prepared[i].client.clone()).collect();
        let start = fedavg(&idx.iter().map(|&i| pretrained[i].clone()).collect::<Vec<_>>())?;
        let cr = if enabled && central {
            CoalitionRun {
                training: "central",
                runs: vec![(idx, run_central(&clients, &start, &spec.fl, &spec.agent, &mut meter, exec)?)],
            }
        } else if enabled {
            CoalitionRun {
                training: "federated",
                runs: vec![(
                    idx,
                    run_rounds(&clients, &start, &spec.fl, &spec.agent, Federation::Federated, &mut meter, exec)?,
                )],
            }
        } else {
            let mut runs = Vec::new();
            for (k, &i) in idx.iter().enumerate() {
                runs.push((
                    vec![i],
                    run_rounds(
                        std::slice::from_ref(&clients[k]),
                        &pretrained[i],
                        &spec.fl,
                        &spec.agent,
                        Federation::LocalOnly,
                        &mut meter,
                        exec,
                    )?,
                ));
            }
            CoalitionRun {
                training: "local",
                runs,
            }
        };
        coalition_runs.push(cr);
    }

    if spec.checkpoints {
        if let Some(dir) = &spec.out_dir {
            let ck = dir.join("checkpoints");
            fs::create_dir_all(&ck)?;
            for (c, cr) in coalition_runs.iter().enumerate() {
                for (k, (_, run)) in cr.runs.iter().enumerate() {
                    run.model.save_checkpoint(&ck.join(format!("coalition{c}_{k}")))?;
                }
            }
        }
    }

    let rows = round_rows(&coalition_runs, spec.fl.rounds);
    let f1_curve: Vec<f64> = rows
        .iter()
        .filter(|r| r.scope == "all")
        .map(|r| r.metrics.f1)
        .collect();

    let mut final_model: Vec<Option<(ModelParams, f64, usize)>> = vec![None; prepared.len()];
    let mut coalitions = Vec::new();
    for (c, cr) in coalition_runs.iter().enumerate() {
        let mut ev = Evaluation::default();
        for (idx, run) in &cr.runs {
            for (k, &i) in idx.iter().enumerate() {
                final_model[i] = Some((run.model.clone(), run.taus[k], c));
                ev.merge(&run.member_evals[k]);
            }
        }
        coalitions.push(CoalitionReport {
            members: partition.coalitions[c]
                .iter()
                .map(|&m| stream.channels[m as usize].channel.clone())
                .collect(),
            fl_enabled: partition.fl_enabled[c],
            training: cr.training.to_string(),
            final_metrics: ev.metrics(),
        });
    }

    let mut work: Vec<(usize, &mut PreparedChannel)> = prepared.iter_mut().enumerate().collect();
    let replays = exec.map_mut(&mut work, |(i, p)| {
        let (model, tau, _) = final_model[*i].as_ref().expect("every channel trained");
        monitored_replay(p, &stream.channels[*i], model, *tau, &spec.agent, spec.admin_policy)
    });
    let mut channels = Vec::with_capacity(prepared.len());
    for (i, r) in replays.into_iter().enumerate() {
        let (flagged, pending_normal, pending_anomalous, admin) = r?;
        let (_, tau, coalition) = final_model[i].as_ref().expect("every channel trained");
        let state = &prepared[i].state;
        channels.push(ChannelReport {
            channel: stream.channels[i].channel.clone(),
            coalition: *coalition,
            tau: *tau,
            flagged,
            pending_normal,
            pending_anomalous,
            admin,
            log_entries: state.log().len() as u64,
            chain_valid: state.verify_chain() == ChainStatus::Valid,
        });
    }

    let final_metrics = rows
        .iter()
        .rev()
        .find(|r| r.scope == "all")
        .map(|r| r.metrics)
        .expect("at least one round");
    let summary = RunSummary {
        mode: spec.mode.name(),
        regime: stream.config.regime,
        seed: spec.scenario.seed,
        rounds: spec.fl.rounds,
        final_metrics,
        rounds_to_90: rounds_to_fraction(&f1_curve, 0.9),
        leakage: privacy_leakage(&meter),
        meter,
        partition,
        coalitions,
        channels,
    };
    let outcome = RunOutcome {
        summary,
        rows,
        states: prepared.into_iter().map(|p| p.state).collect(),
    };
    if let Some(dir) = &spec.out_dir {
        write_artifacts(dir, spec, stream, &outcome)?;
    }
    Ok(outcome)
}

fn round_rows(coalition_runs: &[CoalitionRun], rounds: usize) -> Vec<RoundRow> {
    let mut rows = Vec::new();
    for r in 0..rounds {
        let mut all = Evaluation::default();
        let mut all_losses = Vec::new();
        let mut bytes = 0;
        let mut scoped = Vec::new();
        for (c, cr) in coalition_runs.iter().enumerate() {
            let mut ev = Evaluation::default();
            let mut losses = Vec::new();
            let mut cb = 0;
            for (_, run) in &cr.runs {
                let rep = &run.reports[r];
                ev.merge(&rep.evaluation);
                losses.extend_from_slice(&rep.client_losses);
                cb += rep.bytes_shared;
            }
            all.merge(&ev);
            all_losses.extend_from_slice(&losses);
            bytes += cb;
            scoped.push(RoundRow {
                round: r + 1,
                scope: format!("coalition{c}"),
                client_losses: losses,
                metrics: ev.metrics(),
                bytes_shared: cb,
            });
        }
        rows.push(RoundRow {
            round: r + 1,
            scope: "all".into(),
            client_losses: all_losses,
            metrics: all.metrics(),
            bytes_shared: bytes,
        });
        rows.extend(scoped);
    }
    rows
}

pub const METRICS_HEADER: [&str; 9] = [
    "round",
    "scope",
    "client_losses",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "mse_loss",
    "bytes_shared",
];

pub fn write_metrics_csv<W: Write>(rows: &[RoundRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let losses = r
            .client_losses
            .iter()
            .map(|l| format!("{l:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.round.to_string(),
            r.scope.clone(),
            losses,
            format!("{:.6}", r.metrics.accuracy),
            format!("{:.6}", r.metrics.precision),
            format!("{:.6}", r.metrics.recall),
            format!("{:.6}", r.metrics.f1),
            format!("{:.6}", r.metrics.mse_loss),
            r.bytes_shared.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_artifacts(
    dir: &Path,
    spec: &ExperimentSpec,
    stream: &LabeledEventStream,
    outcome: &RunOutcome,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("ledger"))?;
    write_metrics_csv(&outcome.rows, fs::File::create(dir.join("metrics.csv"))?)?;
    fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&outcome.summary)?)?;
    let partition = serde_json::json!({
        "mode": spec.mode.name(),
        "coalitions": outcome.summary.partition.coalitions.iter().map(|c| {
            c.iter().map(|&m| stream.channels[m as usize].channel.clone()).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "fl_enabled": outcome.summary.partition.fl_enabled,
    });
    fs::write(dir.join("partition.json"), serde_json::to_vec_pretty(&partition)?)?;
    for state in &outcome.states {
        let f = fs::File::create(dir.join("ledger").join(format!("{}.jsonl", state.channel_id)))?;
        state.log().write_jsonl(std::io::BufWriter::new(f))?;
    }
    let mut stream_csv = Vec::new();
    crate::scenario::write_csv(stream, &mut stream_csv)?;
    let manifest = serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "parallel_feature": cfg!(feature = "parallel"),
        "spec": spec,
        "stream_sha256": hex::encode(crate::ledger::sha256(&[&stream_csv])),
        "stream_records": stream.channels.iter().map(|c| c.records.len()).sum::<usize>(),
        "stream_note": "synthetic stream: process means, anomaly magnitudes and context profiles are generator configuration, not measured values",
        "artifacts": ["metrics.csv", "summary.json", "partition.json", "ledger/"],
    });
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
