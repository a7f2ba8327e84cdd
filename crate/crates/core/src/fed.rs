//! Coalition-scoped federated averaging, evaluation and traffic accounting.

use serde::{Deserialize, Serialize};

use crate::anomaly::detect::{calibrate_tau, AgentConfig};
use crate::anomaly::features::{EventWindow, Label};
use crate::anomaly::model::{score, train_local, ModelParams, TrainConfig};
use crate::error::{FedError, ModelError};
use crate::par::{derive_seed, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayShape {
    Constant,
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_lr: f64,
    pub shape: DecayShape,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial: lr,
            final_lr: lr,
            shape: DecayShape::Constant,
        }
    }

    /// Learning rate for 0-based `round` out of `rounds`; the last round uses
    /// `final`.
    pub fn lr_at(&self, round: usize, rounds: usize) -> f64 {
        if rounds <= 1 {
            return self.initial;
        }
        let frac = round.min(rounds - 1) as f64 / (rounds - 1) as f64;
        match self.shape {
            DecayShape::Constant => self.initial,
            DecayShape::Linear => self.initial + (self.final_lr - self.initial) * frac,
            DecayShape::Geometric => {
                if self.initial == 0.0 {
                    0.0
                } else {
                    self.initial * (self.final_lr / self.initial).powf(frac)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl FlConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.rounds < 1 || self.local_epochs < 1 {
            return bad("rounds and local epochs must be positive");
        }
        let s = self.lr_schedule;
        if !(s.initial >= s.final_lr && s.final_lr >= 0.0 && s.initial.is_finite()) {
            return bad("learning-rate schedule needs initial >= final >= 0");
        }
        if s.shape == DecayShape::Geometric && s.final_lr == 0.0 && s.initial > 0.0 {
            return bad("geometric decay needs a positive final rate");
        }
        Ok(())
    }
}

/// One channel's local datasets. Only the orchestrator sees all clients; the
/// windows themselves are only ever read by the client's own training and
/// evaluation calls.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub id: u32,
    pub name: String,
    pub seed: u64,
    pub train: Vec<EventWindow>,
    /// Normal-labeled windows used to calibrate `τ`.
    pub validation: Vec<EventWindow>,
    pub test: Vec<EventWindow>,
    /// Raw training records and their serialized size.
    pub raw_train_records: u64,
    pub raw_train_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean squared prediction error over the evaluated windows.
    pub mse_loss: f64,
}

/// Confusion counts plus the loss sum, mergeable across clients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: Confusion,
    pub loss_sum: f64,
    pub count: u64,
}

impl Evaluation {
    pub fn merge(&mut self, other: &Evaluation) {
        self.confusion.merge(&other.confusion);
        self.loss_sum += other.loss_sum;
        self.count += other.count;
    }

    pub fn metrics(&self) -> Metrics {
        let c = &self.confusion;
        Metrics {
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            mse_loss: if self.count == 0 {
                0.0
            } else {
                self.loss_sum / self.count as f64
            },
        }
    }
}

/// Flags `s_t > τ` and scores the flags against ground truth.
pub fn evaluate(
    params: &ModelParams,
    windows: &[EventWindow],
    tau: f64,
) -> Result<Evaluation, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptyEval);
    }
    let mut ev = Evaluation::default();
    for w in windows {
        let actual = match w.label {
            Some(l) => l == Label::Anomalous,
            None => return Err(ModelError::InvalidConfig("evaluation window has no label".into())),
        };
        let s = score(params, w)?;
        ev.confusion.record(s > tau, actual);
        ev.loss_sum += s;
        ev.count += 1;
    }
    Ok(ev)
}

/// `w_i = N_i / Σ N_k`.
pub fn fedavg_weights(counts: &[u64]) -> Result<Vec<f64>, FedError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(FedError::ZeroSamples);
    }
    Ok(counts.iter().map(|&n| n as f64 / total as f64).collect())
}

/// Sample-count-weighted mean of the clients' parameter vectors.
pub fn fedavg(clients: &[ModelParams]) -> Result<ModelParams, FedError> {
    let first = clients.first().ok_or(FedError::ZeroSamples)?;
    if clients
        .iter()
        .any(|c| c.dims != first.dims || c.theta.len() != first.theta.len())
    {
        return Err(FedError::DimensionMismatch);
    }
    let counts: Vec<u64> = clients.iter().map(|c| c.sample_count).collect();
    let weights = fedavg_weights(&counts)?;
    if clients.len() == 1 {
        return Ok(first.clone());
    }
    let mut theta = vec![0.0; first.theta.len()];
    for (c, w) in clients.iter().zip(&weights) {
        for (t, v) in theta.iter_mut().zip(&c.theta) {
            *t += w * v;
        }
    }
    Ok(ModelParams {
        theta,
        dims: first.dims,
        sample_count: counts.iter().sum(),
    })
}

/// Counts everything that crosses a channel boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryMeter {
    pub raw_records: u64,
    pub raw_bytes: u64,
    pub update_messages: u64,
    pub update_bytes: u64,
    /// Total local training data volume of all participating channels.
    pub local_bytes: u64,
}

impl BoundaryMeter {
    pub fn register_local(&mut self, client: &ClientData) {
        self.local_bytes += client.raw_train_bytes;
    }

    /// Ships a client's raw training records off-channel.
    pub fn transfer_raw<'a>(&mut self, client: &'a ClientData) -> &'a [EventWindow] {
        self.raw_records += client.raw_train_records;
        self.raw_bytes += client.raw_train_bytes;
        &client.train
    }

    /// Serializes, counts and decodes one model update.
    pub fn transfer_update(&mut self, params: &ModelParams) -> ModelParams {
        let bytes: Vec<u8> = params.theta.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.update_messages += 1;
        self.update_bytes += bytes.len() as u64;
        ModelParams {
            theta: bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
            dims: params.dims,
            sample_count: params.sample_count,
        }
    }

    pub fn absorb(&mut self, other: &BoundaryMeter) {
        self.raw_records += other.raw_records;
        self.raw_bytes += other.raw_bytes;
        self.update_messages += other.update_messages;
        self.update_bytes += other.update_bytes;
        self.local_bytes += other.local_bytes;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Raw training bytes sent off-channel over total local data bytes.
    pub raw_data: f64,
    /// Serialized update bytes over total local data bytes.
    pub update_volume: f64,
}

pub fn privacy_leakage(meter: &BoundaryMeter) -> LeakageReport {
    let q = |n: u64| {
        if meter.local_bytes == 0 {
            0.0
        } else {
            n as f64 / meter.local_bytes as f64
        }
    };
    LeakageReport {
        raw_data: q(meter.raw_bytes),
        update_volume: q(meter.update_bytes),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub client_losses: Vec<f64>,
    pub evaluation: Evaluation,
    pub metrics: Metrics,
    /// Cumulative serialized update volume.
    pub bytes_shared: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlRun {
    pub reports: Vec<RoundReport>,
    pub model: ModelParams,
    /// Per-member `τ` calibrated on the final model.
    pub taus: Vec<f64>,
    pub member_evals: Vec<Evaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Federation {
    /// Members upload updates that are averaged.
    Federated,
    /// A single channel training on its own; nothing leaves the channel.
    LocalOnly,
}

fn eval_members(
    params: &ModelParams,
    members: &[ClientData],
    agent: &AgentConfig,
    exec: Exec,
) -> Result<Vec<(f64, Evaluation)>, ModelError> {
    exec.map(members, |m| {
        let tau = calibrate_tau(params, &m.validation, agent.tau_percentile)?;
        Ok((tau, evaluate(params, &m.test, tau)?))
    })
    .into_iter()
    .collect()
}

fn finish_round(
    round: usize,
    client_losses: Vec<f64>,
    evals: &[(f64, Evaluation)],
    bytes_shared: u64,
) -> RoundReport {
    let mut evaluation = Evaluation::default();
    for (_, e) in evals {
        evaluation.merge(e);
    }
    RoundReport {
        round,
        client_losses,
        metrics: evaluation.metrics(),
        evaluation,
        bytes_shared,
    }
}

/// Synchronous rounds: broadcast, local training, weighted aggregation,
/// evaluation on each member's held-out split.
pub fn run_rounds(
    members: &[ClientData],
    initial: &ModelParams,
    cfg: &FlConfig,
    agent: &AgentConfig,
    federation: Federation,
    meter: &mut BoundaryMeter,
    exec: Exec,
) -> Result<FlRun, FedError> {
    cfg.validate()?;
    if members.is_empty() {
        return Err(FedError::ZeroSamples);
    }
    if federation == Federation::LocalOnly && members.len() != 1 {
        return Err(ModelError::InvalidConfig("local-only training takes one client".into()).into());
    }
    for m in members {
        meter.register_local(m);
    }
    let mut global = initial.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut last_evals = Vec::new();
    for r in 0..cfg.rounds {
        let lr = cfg.lr_schedule.lr_at(r, cfg.rounds);
        let outcomes = exec.map(members, |m| {
            let tc = TrainConfig {
                epochs: cfg.local_epochs,
                learning_rate: lr,
                batch_size: agent.batch_size,
                seed: derive_seed(cfg.seed, &[m.seed, r as u64]),
            };
            train_local(&global, &m.train, &tc)
        });
        let mut updates = Vec::with_capacity(members.len());
        let mut client_losses = Vec::with_capacity(members.len());
        for o in outcomes {
            let o = o?;
            client_losses.push(o.epoch_losses.last().copied().unwrap_or(0.0));
            updates.push(match federation {
                Federation::Federated => meter.transfer_update(&o.params),
                Federation::LocalOnly => o.params,
            });
        }
        global = fedavg(&updates)?;
        last_evals = eval_members(&global, members, agent, exec)?;
        reports.push(finish_round(r + 1, client_losses, &last_evals, meter.update_bytes));
    }
    Ok(FlRun {
        reports,
        model: global,
        taus: last_evals.iter().map(|(t, _)| *t).collect(),
        member_evals: last_evals.into_iter().map(|(_, e)| e).collect(),
    })
}

/// Pools every member's raw training records at a central trainer.
pub fn run_central(
    members: &[ClientData],
    initial: &ModelParams,
    cfg: &FlConfig,
    agent: &AgentConfig,
    meter: &mut BoundaryMeter,
    exec: Exec,
) -> Result<FlRun, FedError> {
    cfg.validate()?;
    if members.is_empty() {
        return Err(FedError::ZeroSamples);
    }
    let mut pooled = Vec::new();
    for m in members {
        meter.register_local(m);
        pooled.extend_from_slice(meter.transfer_raw(m));
    }
    let mut model = initial.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut last_evals = Vec::new();
    for r in 0..cfg.rounds {
        let tc = TrainConfig {
            epochs: cfg.local_epochs,
            learning_rate: cfg.lr_schedule.lr_at(r, cfg.rounds),
            batch_size: agent.batch_size,
            seed: derive_seed(cfg.seed, &[u64::MAX, r as u64]),
        };
        let o = train_local(&model, &pooled, &tc)?;
        model = o.params;
        last_evals = eval_members(&model, members, agent, exec)?;
        reports.push(finish_round(
            r + 1,
            vec![o.epoch_losses.last().copied().unwrap_or(0.0)],
            &last_evals,
            meter.update_bytes,
        ));
    }
    Ok(FlRun {
        reports,
        model,
        taus: last_evals.iter().map(|(t, _)| *t).collect(),
        member_evals: last_evals.into_iter().map(|(_, e)| e).collect(),
    })
}

/// First 1-based round whose F1 reaches `fraction` of the final F1.
pub fn rounds_to_fraction(f1_by_round: &[f64], fraction: f64) -> Option<usize> {
    let last = *f1_by_round.last()?;
    f1_by_round
        .iter()
        .position(|&f| f >= fraction * last)
        .map(|i| i + 1)
}
