//! Synthetic multi-channel supply-chain event streams with labeled anomalies.
//!
//! Every channel has a factory, a distributor, a retailer and an admin, and a
//! single `inventory` asset whose attributes the three operational roles read
//! and write. Normal behavior follows per-role processes (lognormal gaps and
//! quantities). Anomalies perturb one of four scenario features. Whether a
//! scenario is anomalous depends on the channel's context profile: in a
//! channel where a scenario is part of routine, its perturbation is applied
//! to every event of the affected role and labeled normal.
//!
//! All magnitudes here are configuration for a synthetic benchmark.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::anomaly::features::{Label, RawEvent};
use crate::coalition::FriendLists;
use crate::error::ScenarioError;
use crate::ids::{Operation, Role};
use crate::par::{derive_seed, Exec};

pub const ASSET: &str = "inventory";
pub const ATTRIBUTES: [&str; 4] = ["produced", "shipped", "sold", "resources"];
pub const OPERATIONAL_ROLES: [Role; 3] = [Role::Factory, Role::Distributor, Role::Retailer];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Iid,
    NonIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ShippingDelay,
    InflatedProduction,
    UnauthorizedResource,
    ManipulatedSales,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::ShippingDelay,
        Scenario::InflatedProduction,
        Scenario::UnauthorizedResource,
        Scenario::ManipulatedSales,
    ];

    /// Range of the multiplicative perturbation.
    pub fn factor_range(self) -> (f64, f64) {
        match self {
            Scenario::ShippingDelay => (5.0, 20.0),
            Scenario::InflatedProduction => (3.0, 6.0),
            Scenario::UnauthorizedResource => (5.0, 20.0),
            Scenario::ManipulatedSales => (0.05, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Normal,
    Anomalous,
}

/// Which scenarios count as anomalous in a channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextProfile(pub BTreeMap<Scenario, Context>);

impl ContextProfile {
    pub fn all_anomalous() -> Self {
        ContextProfile(Scenario::ALL.iter().map(|&s| (s, Context::Anomalous)).collect())
    }

    pub fn verdict(&self, s: Scenario) -> Context {
        self.0.get(&s).copied().unwrap_or(Context::Anomalous)
    }

    pub fn label_for(&self, s: Scenario) -> Label {
        match self.verdict(s) {
            Context::Normal => Label::Normal,
            Context::Anomalous => Label::Anomalous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMix {
    pub shipping_delay: f64,
    pub inflated_production: f64,
    pub unauthorized_resource: f64,
    pub manipulated_sales: f64,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        ScenarioMix {
            shipping_delay: 0.25,
            inflated_production: 0.25,
            unauthorized_resource: 0.25,
            manipulated_sales: 0.25,
        }
    }
}

impl ScenarioMix {
    pub fn weight(&self, s: Scenario) -> f64 {
        match s {
            Scenario::ShippingDelay => self.shipping_delay,
            Scenario::InflatedProduction => self.inflated_production,
            Scenario::UnauthorizedResource => self.unauthorized_resource,
            Scenario::ManipulatedSales => self.manipulated_sales,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_channels: usize,
    pub events_per_channel: usize,
    pub anomaly_rate: f64,
    pub regime: Regime,
    pub seed: u64,
    pub mix: ScenarioMix,
    /// Number of behavior clusters under the non-IID regime (2..=4).
    pub n_profiles: usize,
    /// Relative jitter of process means between clusters.
    pub cluster_jitter: f64,
    /// Relative jitter of process means between channels of one cluster.
    pub channel_jitter: f64,
    /// Largest process-mean distance between friends.
    pub friend_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_channels: 23,
            events_per_channel: 1000,
            anomaly_rate: 0.10,
            regime: Regime::Iid,
            seed: 0,
            mix: ScenarioMix::default(),
            n_profiles: 3,
            cluster_jitter: 0.5,
            channel_jitter: 0.05,
            friend_threshold: 0.25,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidConfig(m.to_string()));
        if self.n_channels == 0 {
            return bad("at least one channel is required");
        }
        if !(0.0..1.0).contains(&self.anomaly_rate) {
            return bad("anomaly rate must lie in [0, 1)");
        }
        let weights: Vec<f64> = Scenario::ALL.iter().map(|&s| self.mix.weight(s)).collect();
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("scenario mix weights must be non-negative and sum to 1");
        }
        if !(2..=4).contains(&self.n_profiles) {
            return bad("profile cluster count must be between 2 and 4");
        }
        if !(0.0..1.0).contains(&self.cluster_jitter) || !(0.0..1.0).contains(&self.channel_jitter) {
            return bad("jitter must lie in [0, 1)");
        }
        if !(self.friend_threshold >= 0.0) {
            return bad("friend threshold must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleProcess {
    /// Median reported quantity.
    pub quantity: f64,
    /// Mean hours since the channel's previous event.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub factory: RoleProcess,
    pub distributor: RoleProcess,
    pub retailer: RoleProcess,
}

impl ProcessParams {
    pub fn base() -> Self {
        ProcessParams {
            factory: RoleProcess {
                quantity: 500.0,
                gap: 1.0,
            },
            distributor: RoleProcess {
                quantity: 200.0,
                gap: 1.5,
            },
            retailer: RoleProcess {
                quantity: 50.0,
                gap: 0.5,
            },
        }
    }

    pub fn role(&self, role: Role) -> &RoleProcess {
        match role {
            Role::Factory => &self.factory,
            Role::Distributor => &self.distributor,
            _ => &self.retailer,
        }
    }

    fn means(&self) -> [f64; 6] {
        [
            self.factory.quantity,
            self.factory.gap,
            self.distributor.quantity,
            self.distributor.gap,
            self.retailer.quantity,
            self.retailer.gap,
        ]
    }

    fn from_means(m: [f64; 6]) -> Self {
        let rp = |q, g| RoleProcess { quantity: q, gap: g };
        ProcessParams {
            factory: rp(m[0], m[1]),
            distributor: rp(m[2], m[3]),
            retailer: rp(m[4], m[5]),
        }
    }

    /// Largest absolute log-ratio between corresponding process means.
    pub fn distance(&self, other: &ProcessParams) -> f64 {
        self.means()
            .iter()
            .zip(other.means())
            .map(|(a, b)| (a / b).ln().abs())
            .fold(0.0, f64::max)
    }
}

const QUANTITY_SIGMA: f64 = 0.2;
const GAP_SIGMA: f64 = 0.3;
const ROLE_WEIGHTS: [f64; 3] = [0.3, 0.3, 0.4];
/// Read, write, update.
const OP_WEIGHTS: [f64; 3] = [0.2, 0.55, 0.25];

/// One access request in a stream, with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub channel: String,
    pub timestamp: f64,
    pub participant: String,
    pub role: Role,
    pub asset: String,
    pub attribute: String,
    pub operation: Operation,
    pub value: Option<f64>,
    pub label: Label,
    /// Scenario whose perturbation shaped this event, if any. Not serialized.
    pub scenario: Option<Scenario>,
}

impl RawRecord {
    pub fn value_string(&self) -> Option<String> {
        self.value.map(format_value)
    }

    pub fn to_event(&self) -> RawEvent {
        RawEvent {
            timestamp: self.timestamp,
            actor: self.participant.clone(),
            role: self.role,
            operation: self.operation,
            value: self.value,
            label: Some(self.label),
        }
    }

    fn csv_row(&self) -> [String; 9] {
        [
            self.channel.clone(),
            format_time(self.timestamp),
            self.participant.clone(),
            self.role.as_str().to_string(),
            self.asset.clone(),
            self.attribute.clone(),
            self.operation.as_str().to_string(),
            self.value_string().unwrap_or_default(),
            self.label.as_str().to_string(),
        ]
    }

    /// Size of the record's CSV row including the newline.
    pub fn encoded_len(&self) -> u64 {
        let row = self.csv_row();
        row.iter().map(|f| f.len() as u64).sum::<u64>() + row.len() as u64
    }
}

fn format_value(v: f64) -> String {
    format!("{v:.3}")
}

fn format_time(t: f64) -> String {
    format!("{t:.4}")
}

fn round_to(v: f64, repr: fn(f64) -> String) -> f64 {
    repr(v).parse().expect("formatted float parses")
}

pub fn participant_id(channel: &str, role: Role) -> String {
    format!("{channel}.{}", role.as_str())
}

pub fn channel_name(index: usize) -> String {
    format!("ch{index:02}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStream {
    pub channel: String,
    pub profile: ContextProfile,
    pub process: ProcessParams,
    /// Profile cluster the channel was drawn from (0 under IID).
    pub cluster: usize,
    /// Channel-level factors of the routine (normal-context) scenarios.
    pub routine_factors: BTreeMap<Scenario, f64>,
    pub records: Vec<RawRecord>,
}

impl ChannelStream {
    pub fn anomaly_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.label == Label::Anomalous).count() as f64
            / self.records.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEventStream {
    pub config: ScenarioConfig,
    pub channels: Vec<ChannelStream>,
}

struct ChannelPlan {
    profile: ContextProfile,
    process: ProcessParams,
    cluster: usize,
}

fn plan_channels(cfg: &ScenarioConfig) -> Vec<ChannelPlan> {
    match cfg.regime {
        Regime::Iid => (0..cfg.n_channels)
            .map(|_| ChannelPlan {
                profile: ContextProfile::all_anomalous(),
                process: ProcessParams::base(),
                cluster: 0,
            })
            .collect(),
        Regime::NonIid => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xC1]));
            let mut routine = Scenario::ALL.to_vec();
            routine.shuffle(&mut rng);
            let base = ProcessParams::base().means();
            let clusters: Vec<(ContextProfile, [f64; 6])> = (0..cfg.n_profiles)
                .map(|c| {
                    let mut profile = ContextProfile::all_anomalous();
                    profile.0.insert(routine[c], Context::Normal);
                    let means = base.map(|m| {
                        m * (1.0 + rng.random_range(-cfg.cluster_jitter..=cfg.cluster_jitter))
                    });
                    (profile, means)
                })
                .collect();
            let mut assignment: Vec<usize> = (0..cfg.n_channels).map(|i| i % cfg.n_profiles).collect();
            assignment.shuffle(&mut rng);
            assignment
                .into_iter()
                .map(|c| {
                    let (profile, means) = &clusters[c];
                    let jittered = means.map(|m| {
                        m * (1.0 + rng.random_range(-cfg.channel_jitter..=cfg.channel_jitter))
                    });
                    ChannelPlan {
                        profile: profile.clone(),
                        process: ProcessParams::from_means(jittered),
                        cluster: c,
                    }
                })
                .collect()
        }
    }
}

fn lognormal(rng: &mut ChaCha8Rng, median: f64, sigma: f64) -> f64 {
    LogNormal::new(median.ln(), sigma)
        .expect("valid lognormal")
        .sample(rng)
}

fn generate_channel(cfg: &ScenarioConfig, index: usize, plan: &ChannelPlan) -> ChannelStream {
    let channel = channel_name(index);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[index as u64]));
    let n = cfg.events_per_channel;

    let routine_factors: BTreeMap<Scenario, f64> = Scenario::ALL
        .iter()
        .filter(|&&s| plan.profile.verdict(s) == Context::Normal)
        .map(|&s| {
            let (lo, hi) = s.factor_range();
            (s, rng.random_range(lo..=hi))
        })
        .collect();

    let anomalous: Vec<Scenario> = Scenario::ALL
        .iter()
        .copied()
        .filter(|&s| plan.profile.verdict(s) == Context::Anomalous && cfg.mix.weight(s) > 0.0)
        .collect();
    let n_injected = if anomalous.is_empty() {
        0
    } else {
        (cfg.anomaly_rate * n as f64).round() as usize
    };
    let mut injected = vec![None; n];
    if n_injected > 0 {
        let picker = WeightedIndex::new(anomalous.iter().map(|&s| cfg.mix.weight(s)))
            .expect("positive weights");
        for i in rand::seq::index::sample(&mut rng, n, n_injected) {
            injected[i] = Some(anomalous[picker.sample(&mut rng)]);
        }
    }

    let role_pick = WeightedIndex::new(ROLE_WEIGHTS).expect("weights");
    let op_pick = WeightedIndex::new(OP_WEIGHTS).expect("weights");
    let mut t = 0.0;
    let mut records = Vec::with_capacity(n);
    for slot in injected {
        let mut role = OPERATIONAL_ROLES[role_pick.sample(&mut rng)];
        let mut op = [Operation::Read, Operation::Write, Operation::Update][op_pick.sample(&mut rng)];
        match slot {
            Some(Scenario::ShippingDelay) => role = Role::Distributor,
            Some(Scenario::InflatedProduction) => {
                role = Role::Factory;
                op = Operation::Write;
            }
            Some(Scenario::UnauthorizedResource) => op = Operation::Update,
            Some(Scenario::ManipulatedSales) => {
                role = Role::Retailer;
                op = Operation::Write;
            }
            None => {}
        }
        let process = plan.process.role(role);
        let mut gap = lognormal(&mut rng, process.gap, GAP_SIGMA);
        let mut quantity = lognormal(&mut rng, process.quantity, QUANTITY_SIGMA);
        let read_attr = *ATTRIBUTES[..3].choose(&mut rng).expect("non-empty");
        let mut attribute = match (op, role) {
            (Operation::Read, _) => read_attr,
            (_, Role::Factory) => "produced",
            (_, Role::Distributor) => "shipped",
            _ => "sold",
        };

        let mut scenario = None;
        for (&s, &f) in &routine_factors {
            let applies = match s {
                Scenario::ShippingDelay => role == Role::Distributor,
                Scenario::InflatedProduction => role == Role::Factory && op == Operation::Write,
                Scenario::UnauthorizedResource => role == Role::Distributor && op == Operation::Update,
                Scenario::ManipulatedSales => role == Role::Retailer && op == Operation::Write,
            };
            if !applies {
                continue;
            }
            match s {
                Scenario::ShippingDelay => gap *= f,
                Scenario::UnauthorizedResource => {
                    attribute = "resources";
                    quantity *= f;
                }
                _ => quantity *= f,
            }
            scenario = Some(s);
        }

        let label = match slot {
            Some(s) => {
                let (lo, hi) = s.factor_range();
                let f = rng.random_range(lo..=hi);
                match s {
                    Scenario::ShippingDelay => gap *= f,
                    Scenario::UnauthorizedResource => {
                        attribute = "resources";
                        quantity *= f;
                    }
                    _ => quantity *= f,
                }
                scenario = Some(s);
                plan.profile.label_for(s)
            }
            None => Label::Normal,
        };

        t = round_to(t + gap, format_time);
        records.push(RawRecord {
            channel: channel.clone(),
            timestamp: t,
            participant: participant_id(&channel, role),
            role,
            asset: ASSET.to_string(),
            attribute: attribute.to_string(),
            operation: op,
            value: op.mutates().then(|| round_to(quantity, format_value)),
            label,
            scenario,
        });
    }

    ChannelStream {
        channel,
        profile: plan.profile.clone(),
        process: plan.process,
        cluster: plan.cluster,
        routine_factors,
        records,
    }
}

pub fn generate(cfg: &ScenarioConfig) -> Result<LabeledEventStream, ScenarioError> {
    generate_with(cfg, Exec::default())
}

pub fn generate_with(cfg: &ScenarioConfig, exec: Exec) -> Result<LabeledEventStream, ScenarioError> {
    cfg.validate()?;
    let plans: Vec<(usize, ChannelPlan)> = plan_channels(cfg).into_iter().enumerate().collect();
    let channels = exec.map(&plans, |(i, plan)| generate_channel(cfg, *i, plan));
    Ok(LabeledEventStream {
        config: *cfg,
        channels,
    })
}

/// Channel `i` lists `j` iff their profiles agree on every scenario and their
/// process means are within `threshold` of each other.
pub fn derive_friend_lists(stream: &LabeledEventStream, threshold: f64) -> FriendLists {
    let mut lists = FriendLists::new();
    for (i, a) in stream.channels.iter().enumerate() {
        let friends = stream
            .channels
            .iter()
            .enumerate()
            .filter(|(j, b)| {
                *j != i && a.profile == b.profile && a.process.distance(&b.process) < threshold
            })
            .map(|(j, _)| j as u32);
        lists.declare(i as u32, friends);
    }
    lists
}

pub const CSV_HEADER: [&str; 9] = [
    "channel",
    "timestamp",
    "participant",
    "role",
    "asset",
    "attribute",
    "operation",
    "value",
    "label",
];

pub fn write_csv<W: Write>(stream: &LabeledEventStream, out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for ch in &stream.channels {
        for r in &ch.records {
            w.write_record(r.csv_row())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sidecar describing each channel's context profile and process parameters.
pub fn profiles_json(stream: &LabeledEventStream) -> serde_json::Value {
    let channels: serde_json::Map<String, serde_json::Value> = stream
        .channels
        .iter()
        .map(|c| {
            (
                c.channel.clone(),
                serde_json::json!({
                    "context": c.profile,
                    "process": c.process,
                    "cluster": c.cluster,
                    "routine_factors": c.routine_factors,
                }),
            )
        })
        .collect();
    serde_json::json!({
        "generator": "synthetic",
        "note": "process parameters and anomaly magnitudes are benchmark configuration",
        "config": stream.config,
        "channels": channels,
    })
}

pub fn save(stream: &LabeledEventStream, csv_path: &Path, profiles_path: &Path) -> Result<(), ScenarioError> {
    write_csv(stream, fs::File::create(csv_path)?)?;
    fs::write(profiles_path, serde_json::to_vec_pretty(&profiles_json(stream))?)?;
    Ok(())
}

/// Reads records in the stream CSV schema, grouped by channel in order of
/// first appearance.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<(String, Vec<RawRecord>)>, ScenarioError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ScenarioError::Parse {
            line: 1,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut groups: Vec<(String, Vec<RawRecord>)> = Vec::new();
    let mut position: BTreeMap<String, usize> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let parse_err = |reason: &str| ScenarioError::Parse {
            line,
            reason: reason.to_string(),
        };
        let field = |k: usize| row.get(k).unwrap_or("");
        let role = Role::parse(field(3)).ok_or_else(|| parse_err("unknown role"))?;
        let operation = Operation::parse(field(6)).ok_or_else(|| parse_err("unknown operation"))?;
        let timestamp: f64 = field(1).parse().map_err(|_| parse_err("bad timestamp"))?;
        let value = match field(7) {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|_| parse_err("bad value"))?),
        };
        if value.is_some() != operation.mutates() {
            return Err(parse_err("value must be present exactly for writes and updates"));
        }
        let label = Label::parse(field(8)).ok_or_else(|| parse_err("unknown label"))?;
        let record = RawRecord {
            channel: field(0).to_string(),
            timestamp,
            participant: field(2).to_string(),
            role,
            asset: field(4).to_string(),
            attribute: field(5).to_string(),
            operation,
            value,
            label,
            scenario: None,
        };
        let slot = *position.entry(record.channel.clone()).or_insert_with(|| {
            groups.push((record.channel.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(record);
    }
    Ok(groups)
}

/// Loads a stream written by [`save`]. Scenario tags are not part of the CSV
/// and come back as `None`.
pub fn load(csv_path: &Path, profiles_path: &Path) -> Result<LabeledEventStream, ScenarioError> {
    let groups = read_csv(fs::File::open(csv_path)?)?;
    let sidecar: serde_json::Value = serde_json::from_slice(&fs::read(profiles_path)?)?;
    let config: ScenarioConfig = serde_json::from_value(sidecar["config"].clone())?;
    let mut channels = Vec::with_capacity(groups.len());
    for (name, records) in groups {
        let meta = &sidecar["channels"][&name];
        let profile = if meta.is_null() {
            ContextProfile::all_anomalous()
        } else {
            serde_json::from_value(meta["context"].clone())?
        };
        let process = if meta.is_null() {
            ProcessParams::base()
        } else {
            serde_json::from_value(meta["process"].clone())?
        };
        channels.push(ChannelStream {
            channel: name,
            profile,
            process,
            cluster: meta["cluster"].as_u64().unwrap_or(0) as usize,
            routine_factors: serde_json::from_value(meta["routine_factors"].clone()).unwrap_or_default(),
            records,
        });
    }
    Ok(LabeledEventStream { config, channels })
}
