//! Event feature schema (d = 10).
//!
//! | positions | content                                              |
//! |-----------|------------------------------------------------------|
//! | 0..3      | role one-hot: factory, distributor, retailer         |
//! | 3..6      | operation one-hot: read, write, update               |
//! | 6         | quantity delta, `ln(1 + |value|)` minus its median over the actor's last 10 values |
//! | 7         | inter-event gap, `ln(1 + hours since previous event)` |
//! | 8         | actor's share of the last 10 channel events          |
//! | 9         | value magnitude, `ln(1 + |value|)`                   |
//!
//! The numeric block (6..10) is standardized with statistics fitted on the
//! channel's own training split.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::ids::{Operation, Role};

pub const FEATURE_DIM: usize = 10;
pub const NUMERIC_DIM: usize = 4;
pub const NUMERIC_OFFSET: usize = 6;
pub const NUMERIC_NAMES: [&str; NUMERIC_DIM] = [
    "quantity_delta",
    "inter_event_gap",
    "rolling_frequency",
    "value_magnitude",
];

/// Measured quantities hidden from the predictor in the target slot.
pub const MASKED: [usize; 3] = [6, 7, 9];

const HISTORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "normal" => Some(Label::Normal),
            "anomalous" => Some(Label::Anomalous),
            _ => None,
        }
    }
}

/// The fields of an access record the encoder looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub timestamp: f64,
    pub actor: String,
    pub role: Role,
    pub operation: Operation,
    pub value: Option<f64>,
    pub label: Option<Label>,
}

/// An event with its unstandardized numeric block.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub actor: String,
    pub role: Role,
    pub operation: Operation,
    pub numeric: [f64; NUMERIC_DIM],
    pub label: Option<Label>,
}

/// Derives the numeric block from a channel's event stream in order.
#[derive(Debug, Default, Clone)]
pub struct FeatureTracker {
    last_time: Option<f64>,
    recent_actors: VecDeque<String>,
    values: BTreeMap<String, VecDeque<f64>>,
}

impl FeatureTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, event: &RawEvent) -> RawFeatures {
        let gap = match self.last_time {
            Some(prev) => (event.timestamp - prev).max(0.0),
            None => 0.0,
        };
        self.last_time = Some(event.timestamp);

        self.recent_actors.push_back(event.actor.clone());
        if self.recent_actors.len() > HISTORY {
            self.recent_actors.pop_front();
        }
        let share = self
            .recent_actors
            .iter()
            .filter(|a| **a == event.actor)
            .count() as f64
            / self.recent_actors.len() as f64;

        let (delta, magnitude) = match event.value {
            Some(v) => {
                let magnitude = v.abs().ln_1p();
                let history = self.values.entry(event.actor.clone()).or_default();
                let delta = if history.is_empty() {
                    0.0
                } else {
                    magnitude - median(history.iter().copied())
                };
                history.push_back(magnitude);
                if history.len() > HISTORY {
                    history.pop_front();
                }
                (delta, magnitude)
            }
            None => (0.0, 0.0),
        };

        RawFeatures {
            actor: event.actor.clone(),
            role: event.role,
            operation: event.operation,
            numeric: [delta, gap.ln_1p(), share, magnitude],
            label: event.label,
        }
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Per-feature mean and standard deviation of the numeric block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; NUMERIC_DIM],
    pub std: [f64; NUMERIC_DIM],
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: [0.0; NUMERIC_DIM],
            std: [1.0; NUMERIC_DIM],
        }
    }

    /// Population statistics; zero-variance features keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; NUMERIC_DIM]>) -> Self {
        let rows: Vec<&[f64; NUMERIC_DIM]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Self::identity();
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; NUMERIC_DIM];
        for r in &rows {
            for k in 0..NUMERIC_DIM {
                mean[k] += r[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; NUMERIC_DIM];
        for r in &rows {
            for k in 0..NUMERIC_DIM {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let mut std = [1.0; NUMERIC_DIM];
        for k in 0..NUMERIC_DIM {
            let s = (var[k] / n).sqrt();
            if s > 1e-12 {
                std[k] = s;
            }
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, raw: &[f64; NUMERIC_DIM]) -> [f64; NUMERIC_DIM] {
        std::array::from_fn(|k| (raw[k] - self.mean[k]) / self.std[k])
    }

    pub fn invert(&self, z: &[f64; NUMERIC_DIM]) -> [f64; NUMERIC_DIM] {
        std::array::from_fn(|k| z[k] * self.std[k] + self.mean[k])
    }
}

/// One encoded event `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVector {
    pub features: [f64; FEATURE_DIM],
    pub actor: String,
    pub label: Option<Label>,
}

fn role_slot(role: Role) -> Result<usize, ModelError> {
    match role {
        Role::Factory => Ok(0),
        Role::Distributor => Ok(1),
        Role::Retailer => Ok(2),
        Role::Admin => Err(ModelError::UnknownRole(role.as_str().to_string())),
    }
}

fn op_slot(op: Operation) -> usize {
    match op {
        Operation::Read => 3,
        Operation::Write => 4,
        Operation::Update => 5,
    }
}

pub fn encode_event(raw: &RawFeatures, stats: &Standardizer) -> Result<EventVector, ModelError> {
    for (k, v) in raw.numeric.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::NonFiniteFeature(NUMERIC_NAMES[k]));
        }
    }
    let mut features = [0.0; FEATURE_DIM];
    features[role_slot(raw.role)?] = 1.0;
    features[op_slot(raw.operation)] = 1.0;
    features[NUMERIC_OFFSET..].copy_from_slice(&stats.apply(&raw.numeric));
    Ok(EventVector {
        features,
        actor: raw.actor.clone(),
        label: raw.label,
    })
}

/// A flattened window `X_t` of `T` events ending at the target event, plus
/// the target `x_t`. In the target slot of the input the measured quantities
/// ([`MASKED`]) are zeroed, so the predictor sees who acted, how and how often,
/// but not the values it must predict.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    pub input: Vec<f64>,
    pub target: [f64; FEATURE_DIM],
    pub actor: String,
    pub label: Option<Label>,
    /// Position of the target event in its channel stream.
    pub position: usize,
}

impl EventWindow {
    pub fn len(&self) -> usize {
        self.input.len() / FEATURE_DIM
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn event(&self, i: usize) -> &[f64] {
        &self.input[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    pub fn is_anomalous(&self) -> bool {
        self.label == Some(Label::Anomalous)
    }
}

/// Stride-1 windows of length `window`; the first `window - 1` events only
/// serve as history.
pub fn build_windows(events: &[EventVector], window: usize) -> Vec<EventWindow> {
    if window == 0 || events.len() < window {
        return Vec::new();
    }
    (window - 1..events.len())
        .map(|t| {
            let mut input = Vec::with_capacity(window * FEATURE_DIM);
            for e in &events[t + 1 - window..=t] {
                input.extend_from_slice(&e.features);
            }
            let last = (window - 1) * FEATURE_DIM;
            for k in MASKED {
                input[last + k] = 0.0;
            }
            EventWindow {
                input,
                target: events[t].features,
                actor: events[t].actor.clone(),
                label: events[t].label,
                position: t,
            }
        })
        .collect()
}
