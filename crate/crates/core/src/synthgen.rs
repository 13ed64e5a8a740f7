//! Seeded purchase-to-pay log generator with planted anomalies.
//!
//! Each order follows requisition → order → approval → invoice → payment.
//! Anomalies are planted per order; the order carries the label, and for
//! `MissingPOApproval` its invoices additionally carry `BlockedInvoice`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocel::{time_from_parts, AttributeValue, EventRecord, Object, OcelLog};

pub const CREATE_REQUISITION: &str = "Create Requisition";
pub const APPROVE_REQUISITION: &str = "Approve Requisition";
pub const CHANGE_REQUISITION: &str = "Change Requisition";
pub const CREATE_ORDER: &str = "Create Purchase Order";
pub const SUBMIT_ORDER: &str = "Submit Purchase Order for Approval";
pub const APPROVE_ORDER: &str = "Approve Purchase Order";
pub const RECEIVE_INVOICE: &str = "Receive Invoice";
pub const PAY_INVOICE: &str = "Pay Invoice";
pub const CLOSE_ORDER: &str = "Close Purchase Order";
pub const REOPEN_ORDER: &str = "(Re)Open Purchase Order";

/// Multiple of the mean gap that a reopened order waits at least.
pub const REOPEN_GAP_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyKind {
    MaverickBuying,
    PostMortemPRChange,
    DoubleInvoice,
    ReopenLongGap,
    MissingPOApproval,
    /// Derived label on invoices of orders planted with `MissingPOApproval`.
    BlockedInvoice,
}

impl AnomalyKind {
    /// Kinds that can be requested in a config, in planting order.
    pub const PLANTED: [AnomalyKind; 5] = [
        AnomalyKind::MaverickBuying,
        AnomalyKind::PostMortemPRChange,
        AnomalyKind::DoubleInvoice,
        AnomalyKind::ReopenLongGap,
        AnomalyKind::MissingPOApproval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::MaverickBuying => "MaverickBuying",
            AnomalyKind::PostMortemPRChange => "PostMortemPRChange",
            AnomalyKind::DoubleInvoice => "DoubleInvoice",
            AnomalyKind::ReopenLongGap => "ReopenLongGap",
            AnomalyKind::MissingPOApproval => "MissingPOApproval",
            AnomalyKind::BlockedInvoice => "BlockedInvoice",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnomalyKind::PLANTED
            .into_iter()
            .chain([AnomalyKind::BlockedInvoice])
            .find(|k| k.name() == s)
            .ok_or_else(|| SynthError::InvalidConfig(format!("unknown anomaly kind {s}")))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_orders: usize,
    pub anomaly_rates: BTreeMap<AnomalyKind, f64>,
    pub seed: u64,
    /// First order's creation time, milliseconds since the epoch.
    pub origin_ms: i64,
    /// Mean gap between consecutive events of one order.
    pub mean_gap_secs: f64,
    /// Mean gap between the starts of consecutive orders.
    pub mean_interarrival_secs: f64,
}

impl SynthConfig {
    pub fn new(n_orders: usize, seed: u64) -> Self {
        SynthConfig {
            n_orders,
            anomaly_rates: BTreeMap::new(),
            seed,
            // 2024-01-01T00:00:00Z
            origin_ms: 1_704_067_200_000,
            mean_gap_secs: 86_400.0,
            mean_interarrival_secs: 3_600.0,
        }
    }

    pub fn with_rate(mut self, kind: AnomalyKind, rate: f64) -> Self {
        self.anomaly_rates.insert(kind, rate);
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_orders == 0 {
            return bad("n_orders must be at least 1".into());
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.mean_gap_secs) || !positive(self.mean_interarrival_secs) {
            return bad("mean gaps must be positive".into());
        }
        for (&kind, &rate) in &self.anomaly_rates {
            if kind == AnomalyKind::BlockedInvoice {
                return bad("BlockedInvoice is derived and cannot be planted".into());
            }
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("rate {rate} for {kind} outside [0, 1]"));
            }
        }
        let total: f64 = self.anomaly_rates.values().sum();
        if total > 1.0 + 1e-12 {
            return bad(format!("rates sum to {total}"));
        }
        Ok(())
    }

    fn rate(&self, kind: AnomalyKind) -> f64 {
        self.anomaly_rates.get(&kind).copied().unwrap_or(0.0)
    }
}

/// Labels for every generated object; an empty set means normal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    labels: BTreeMap<String, BTreeSet<AnomalyKind>>,
}

impl GroundTruth {
    pub fn kinds(&self, object: &str) -> Option<&BTreeSet<AnomalyKind>> {
        self.labels.get(object)
    }

    pub fn is_labeled(&self, object: &str) -> bool {
        self.labels.get(object).is_some_and(|k| !k.is_empty())
    }

    pub fn labeled(&self, kind: AnomalyKind) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, k)| k.contains(&kind))
            .map(|(o, _)| o.as_str())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<AnomalyKind>)> {
        self.labels.iter().map(|(o, k)| (o.as_str(), k))
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["object_id", "anomaly_kinds"])
            .expect("in-memory csv");
        for (o, kinds) in &self.labels {
            let joined: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
            w.write_record([o.as_str(), &joined.join(";")])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

fn to_time(ms: i64) -> f64 {
    time_from_parts(ms.div_euclid(1000), (ms.rem_euclid(1000) * 1_000_000) as u32)
}

/// Exponential draw with the given mean, by inverse CDF.
fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = rng.random();
    -mean * (1.0 - u).ln()
}

struct Timeline<'a> {
    events: Vec<EventRecord>,
    rng: &'a mut ChaCha8Rng,
    mean_gap: f64,
}

impl Timeline<'_> {
    fn push(&mut self, activity: &str, at_ms: i64, objects: &[&str]) {
        let id = format!("e{:07}", self.events.len() + 1);
        self.events
            .push(EventRecord::new(id, activity, to_time(at_ms)).with_objects(objects.iter().copied()));
    }

    /// Advance by one exponential gap of at least one second, whole milliseconds.
    fn step(&mut self, t: &mut i64) -> i64 {
        let secs = exponential(self.rng, self.mean_gap);
        *t += ((secs * 1000.0).round() as i64).max(1000);
        *t
    }
}

/// Generate the log and its ground truth. Pure function of `cfg`.
pub fn generate_p2p(cfg: &SynthConfig) -> Result<(OcelLog, GroundTruth), SynthError> {
    cfg.validate()?;
    let n = cfg.n_orders;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut planted: Vec<Option<AnomalyKind>> = vec![None; n];
    let mut cursor = 0;
    for kind in AnomalyKind::PLANTED {
        let count = ((cfg.rate(kind) * n as f64).round() as usize).min(n - cursor);
        for &i in &shuffled[cursor..cursor + count] {
            planted[i] = Some(kind);
        }
        cursor += count;
    }

    let mut objects = Vec::new();
    let mut truth = GroundTruth::default();
    let mut order_start = cfg.origin_ms;
    let mut timeline = Timeline {
        events: Vec::new(),
        rng: &mut rng,
        mean_gap: cfg.mean_gap_secs,
    };

    for (i, kind) in planted.into_iter().enumerate() {
        if i > 0 {
            let secs = exponential(timeline.rng, cfg.mean_interarrival_secs);
            order_start += (secs * 1000.0).round() as i64;
        }
        let req = format!("REQ_{:06}", i + 1);
        let order = format!("PO_{:06}", i + 1);
        let inv = format!("INV_{:06}", i + 1);
        let pay = format!("PAY_{:06}", i + 1);

        let priority = ["low", "normal", "high"][timeline.rng.random_range(0..3)];
        objects.push(
            Object::new(&req, "requisition")
                .with_attribute("priority", AttributeValue::Text(priority.into())),
        );
        objects.push(Object::new(&order, "order"));
        let invoice_amount = |rng: &mut ChaCha8Rng| {
            AttributeValue::Number(rng.random_range(10_000..1_000_000) as f64 / 100.0)
        };
        let amount = invoice_amount(timeline.rng);
        objects.push(Object::new(&inv, "invoice").with_attribute("amount", amount));
        objects.push(Object::new(&pay, "payment"));

        let mut t = order_start;
        timeline.push(CREATE_REQUISITION, t, &[&req]);
        if kind == Some(AnomalyKind::MaverickBuying) {
            let at = timeline.step(&mut t);
            timeline.push(RECEIVE_INVOICE, at, &[&order, &inv]);
        }
        let at = timeline.step(&mut t);
        timeline.push(APPROVE_REQUISITION, at, &[&req]);
        let at = timeline.step(&mut t);
        timeline.push(CREATE_ORDER, at, &[&req, &order]);
        let at = timeline.step(&mut t);
        timeline.push(SUBMIT_ORDER, at, &[&order]);
        if kind != Some(AnomalyKind::MissingPOApproval) {
            let at = timeline.step(&mut t);
            timeline.push(APPROVE_ORDER, at, &[&order]);
        }
        if kind == Some(AnomalyKind::PostMortemPRChange) {
            let at = timeline.step(&mut t);
            timeline.push(CHANGE_REQUISITION, at, &[&req, &order]);
        }
        if kind != Some(AnomalyKind::MaverickBuying) {
            let at = timeline.step(&mut t);
            timeline.push(RECEIVE_INVOICE, at, &[&order, &inv]);
        }
        let at = timeline.step(&mut t);
        timeline.push(PAY_INVOICE, at, &[&inv, &pay, &order]);

        let mut order_objects = vec![req.clone(), order.clone(), inv.clone(), pay.clone()];
        match kind {
            Some(AnomalyKind::DoubleInvoice) => {
                let inv2 = format!("INV_{:06}_2", i + 1);
                let pay2 = format!("PAY_{:06}_2", i + 1);
                let amount = invoice_amount(timeline.rng);
                objects.push(Object::new(&inv2, "invoice").with_attribute("amount", amount));
                objects.push(Object::new(&pay2, "payment"));
                let at = timeline.step(&mut t);
                timeline.push(RECEIVE_INVOICE, at, &[&order, &inv2]);
                let at = timeline.step(&mut t);
                timeline.push(PAY_INVOICE, at, &[&inv2, &pay2, &order]);
                order_objects.extend([inv2, pay2]);
            }
            Some(AnomalyKind::ReopenLongGap) => {
                let at = timeline.step(&mut t);
                timeline.push(CLOSE_ORDER, at, &[&order]);
                t += (REOPEN_GAP_FACTOR * cfg.mean_gap_secs * 1000.0).round() as i64;
                let at = timeline.step(&mut t);
                timeline.push(REOPEN_ORDER, at, &[&order]);
            }
            _ => {}
        }

        for o in &order_objects {
            truth.labels.insert(o.clone(), BTreeSet::new());
        }
        if let Some(kind) = kind {
            truth.labels.get_mut(&order).expect("order inserted").insert(kind);
            if kind == AnomalyKind::MissingPOApproval {
                truth
                    .labels
                    .get_mut(&inv)
                    .expect("invoice inserted")
                    .insert(AnomalyKind::BlockedInvoice);
            }
        }
    }

    let log = OcelLog::new(objects, timeline.events)
        .map_err(|e| SynthError::InvalidConfig(format!("generated log rejected: {e}")))?;
    Ok((log, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn activities<'a>(log: &'a OcelLog, o: &str) -> Vec<&'a str> {
        let idx = log.object_idx(o).unwrap();
        log.lifecycle_of(idx)
            .iter()
            .map(|&e| log.events()[e].activity.as_str())
            .collect()
    }

    #[test]
    fn single_happy_order() {
        let (log, truth) = generate_p2p(&SynthConfig::new(1, 0)).unwrap();
        let acts = log.lifecycle("PO_000001").unwrap();
        assert_eq!(log.events().len(), 7);
        assert_eq!(
            log.events().iter().map(|e| e.activity.as_str()).collect::<Vec<_>>(),
            [
                CREATE_REQUISITION,
                APPROVE_REQUISITION,
                CREATE_ORDER,
                SUBMIT_ORDER,
                APPROVE_ORDER,
                RECEIVE_INVOICE,
                PAY_INVOICE
            ]
        );
        assert_eq!(acts.len(), 5);
        assert!(truth.iter().all(|(_, k)| k.is_empty()));
        assert_eq!(truth.iter().count(), 4);
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = SynthConfig::new(10, 42).with_rate(AnomalyKind::MaverickBuying, 0.1);
        let a = generate_p2p(&cfg).unwrap().0.to_json();
        let b = generate_p2p(&cfg).unwrap().0.to_json();
        assert_eq!(a, b);
        let other = generate_p2p(&SynthConfig { seed: 43, ..cfg }).unwrap().0.to_json();
        assert_ne!(a, other);
    }

    #[test]
    fn label_counts_follow_rates() {
        let cfg = SynthConfig::new(200, 7)
            .with_rate(AnomalyKind::MaverickBuying, 0.05)
            .with_rate(AnomalyKind::DoubleInvoice, 0.05)
            .with_rate(AnomalyKind::ReopenLongGap, 0.02)
            .with_rate(AnomalyKind::MissingPOApproval, 0.03);
        let (_, truth) = generate_p2p(&cfg).unwrap();
        assert_eq!(truth.labeled(AnomalyKind::MaverickBuying).len(), 10);
        assert_eq!(truth.labeled(AnomalyKind::DoubleInvoice).len(), 10);
        assert_eq!(truth.labeled(AnomalyKind::ReopenLongGap).len(), 4);
        assert_eq!(truth.labeled(AnomalyKind::MissingPOApproval).len(), 6);
        assert_eq!(truth.labeled(AnomalyKind::BlockedInvoice).len(), 6);
        assert!(truth.iter().all(|(_, k)| k.len() <= 2));
    }

    #[test]
    fn planted_shapes() {
        let cfg = SynthConfig::new(40, 3)
            .with_rate(AnomalyKind::MaverickBuying, 0.25)
            .with_rate(AnomalyKind::PostMortemPRChange, 0.25)
            .with_rate(AnomalyKind::ReopenLongGap, 0.25)
            .with_rate(AnomalyKind::MissingPOApproval, 0.25);
        let (log, truth) = generate_p2p(&cfg).unwrap();
        for o in truth.labeled(AnomalyKind::MaverickBuying) {
            assert_eq!(activities(&log, o)[0], RECEIVE_INVOICE);
        }
        for o in truth.labeled(AnomalyKind::PostMortemPRChange) {
            assert!(activities(&log, o).contains(&CHANGE_REQUISITION));
        }
        for o in truth.labeled(AnomalyKind::MissingPOApproval) {
            assert!(!activities(&log, o).contains(&APPROVE_ORDER));
        }
        for o in truth.labeled(AnomalyKind::ReopenLongGap) {
            let idx = log.object_idx(o).unwrap();
            let lc = log.lifecycle_of(idx);
            let close = log.events()[lc[lc.len() - 2]].time;
            let reopen = log.events()[lc[lc.len() - 1]].time;
            assert!(reopen - close >= REOPEN_GAP_FACTOR * cfg.mean_gap_secs);
        }
    }

    #[test]
    fn times_are_whole_milliseconds() {
        let (log, _) = generate_p2p(&SynthConfig::new(20, 1)).unwrap();
        for e in log.events() {
            let ms = e.time * 1000.0;
            assert!((ms - ms.round()).abs() < 1e-3);
        }
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::new(10, 0);
        assert!(generate_p2p(&SynthConfig { n_orders: 0, ..base.clone() }).is_err());
        assert!(generate_p2p(&base.clone().with_rate(AnomalyKind::DoubleInvoice, 1.5)).is_err());
        assert!(generate_p2p(
            &base
                .clone()
                .with_rate(AnomalyKind::DoubleInvoice, 0.6)
                .with_rate(AnomalyKind::MaverickBuying, 0.6)
        )
        .is_err());
        assert!(generate_p2p(&base.with_rate(AnomalyKind::BlockedInvoice, 0.1)).is_err());
    }

    #[test]
    fn ground_truth_csv() {
        let cfg = SynthConfig::new(2, 5).with_rate(AnomalyKind::MissingPOApproval, 0.5);
        let (_, truth) = generate_p2p(&cfg).unwrap();
        let csv = truth.to_csv_string();
        assert!(csv.starts_with("object_id,anomaly_kinds\n"));
        assert!(csv.contains(",MissingPOApproval\n"));
        assert!(csv.contains(",BlockedInvoice\n"));
        assert_eq!("DoubleInvoice".parse::<AnomalyKind>().unwrap(), AnomalyKind::DoubleInvoice);
    }
}
