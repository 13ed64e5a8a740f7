//! Brute-force reference implementations shared by integration tests.
//!
//! Everything here works from first principles on plain collections and
//! deliberately avoids the library's own derivations.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ocanomaly::features::{extract_features, ExtractionConfig};
use ocanomaly::ocel::{AttributeValue, EventRecord, Object, OcelLog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RawEvent {
    pub id: String,
    pub activity: String,
    pub time: f64,
    pub objects: BTreeSet<String>,
}

/// A log flattened into unordered events plus object metadata.
pub struct BruteLog {
    pub events: Vec<RawEvent>,
    pub types: BTreeMap<String, String>,
    pub attributes: BTreeMap<String, BTreeMap<String, AttributeValue>>,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Sets {
    pub interact: BTreeSet<String>,
    pub creation: BTreeSet<String>,
    pub continuation: BTreeSet<String>,
    pub cobirth: BTreeSet<String>,
    pub codeath: BTreeSet<String>,
}

impl BruteLog {
    pub fn from_log(log: &OcelLog) -> Self {
        let mut events: Vec<RawEvent> = log
            .events()
            .iter()
            .map(|e| RawEvent {
                id: e.id.clone(),
                activity: e.activity.clone(),
                time: e.time,
                objects: log.omap(e).map(String::from).collect(),
            })
            .collect();
        // Forget the library's ordering.
        events.reverse();
        BruteLog {
            events,
            types: log
                .objects()
                .iter()
                .map(|o| (o.id.clone(), o.object_type.clone()))
                .collect(),
            attributes: log
                .objects()
                .iter()
                .map(|o| (o.id.clone(), o.attributes.clone()))
                .collect(),
        }
    }

    fn before(a: &RawEvent, b: &RawEvent) -> bool {
        a.time < b.time || (a.time == b.time && a.id.as_bytes() < b.id.as_bytes())
    }

    /// Lifecycle events of `o` by insertion sort on the stated order.
    pub fn lifecycle(&self, o: &str) -> Vec<&RawEvent> {
        let mut out: Vec<&RawEvent> = Vec::new();
        for e in self.events.iter().filter(|e| e.objects.contains(o)) {
            let pos = out.iter().position(|x| Self::before(e, x)).unwrap_or(out.len());
            out.insert(pos, e);
        }
        out
    }

    pub fn dfg(&self, o: &str) -> BTreeSet<(String, String)> {
        let lc = self.lifecycle(o);
        (1..lc.len())
            .map(|i| (lc[i - 1].id.clone(), lc[i].id.clone()))
            .collect()
    }

    pub fn efg(&self, o: &str) -> BTreeSet<(String, String)> {
        let lc = self.lifecycle(o);
        let mut out = BTreeSet::new();
        for i in 0..lc.len() {
            for j in i + 1..lc.len() {
                out.insert((lc[i].id.clone(), lc[j].id.clone()));
            }
        }
        out
    }

    fn start_end(&self, o: &str) -> Option<(f64, f64)> {
        let lc = self.lifecycle(o);
        Some((lc.first()?.time, lc.last()?.time))
    }

    pub fn sets(&self, o: &str, ot: &str) -> Sets {
        let mut s = Sets::default();
        let Some((start, end)) = self.start_end(o) else {
            return s;
        };
        for (other, t) in &self.types {
            if t != ot || other == o {
                continue;
            }
            let shares = self
                .events
                .iter()
                .any(|e| e.objects.contains(o) && e.objects.contains(other));
            if !shares {
                continue;
            }
            let (os, oe) = self.start_end(other).expect("shares an event");
            s.interact.insert(other.clone());
            if os > start {
                s.creation.insert(other.clone());
            }
            if end == os {
                s.continuation.insert(other.clone());
            }
            if start == os {
                s.cobirth.insert(other.clone());
            }
            if end == oe {
                s.codeath.insert(other.clone());
            }
        }
        s
    }

    pub fn objects_of(&self, ot: &str) -> Vec<String> {
        self.types
            .iter()
            .filter(|(_, t)| *t == ot)
            .map(|(o, _)| o.clone())
            .collect()
    }

    /// Attribute names shared by every object of the type; empty type gives ∅.
    pub fn common_attributes(&self, ot: &str) -> BTreeSet<String> {
        let objs = self.objects_of(ot);
        let Some(first) = objs.first() else {
            return BTreeSet::new();
        };
        self.attributes[first]
            .keys()
            .filter(|k| objs.iter().all(|o| self.attributes[o].contains_key(*k)))
            .cloned()
            .collect()
    }

    /// Every candidate feature cell per object, zero columns included.
    pub fn feature_map(
        &self,
        ot: &str,
        with_cobirth: bool,
    ) -> BTreeMap<String, BTreeMap<String, f64>> {
        let objs = self.objects_of(ot);
        let all_types: BTreeSet<&String> = self.types.values().collect();
        let mut activities = BTreeSet::new();
        for o in &objs {
            for e in self.lifecycle(o) {
                activities.insert(e.activity.clone());
            }
        }
        let atts = self.common_attributes(ot);
        let mut out = BTreeMap::new();
        for o in &objs {
            let mut row = BTreeMap::new();
            for att in &atts {
                match &self.attributes[o][att] {
                    AttributeValue::Number(v) => {
                        row.insert(format!("numvalue{att}"), *v);
                    }
                    AttributeValue::Text(_) => {
                        for other in &objs {
                            if let AttributeValue::Text(v) = &self.attributes[other][att] {
                                let hit = matches!(&self.attributes[o][att], AttributeValue::Text(m) if m == v);
                                row.insert(format!("strvalue{att}_{v}"), if hit { 1.0 } else { 0.0 });
                            }
                        }
                    }
                }
            }
            let lc = self.lifecycle(o);
            for a in &activities {
                let count = lc.iter().filter(|e| &e.activity == a).count();
                row.insert(format!("lifecyclecontains{a}"), count as f64);
                let starts = lc.first().is_some_and(|e| &e.activity == a);
                row.insert(format!("lifecyclestartswith{a}"), if starts { 1.0 } else { 0.0 });
            }
            let (st, et) = self.start_end(o).unwrap_or((0.0, 0.0));
            row.insert("lifecyclestarttime".into(), st);
            row.insert("lifecycleendtime".into(), et);
            row.insert("lifecycleduration".into(), et - st);
            for w in lc.windows(2) {
                *row.entry(format!("dfg_{}_{}", w[0].activity, w[1].activity))
                    .or_insert(0.0) += 1.0;
            }
            for t in &all_types {
                let s = self.sets(o, t);
                row.insert(format!("interactions{t}"), s.interact.len() as f64);
                row.insert(format!("creation{t}"), s.creation.len() as f64);
                if with_cobirth {
                    row.insert(format!("cobirth{t}"), s.cobirth.len() as f64);
                    row.insert(format!("codeath{t}"), s.codeath.len() as f64);
                }
            }
            out.insert(o.clone(), row);
        }
        out
    }
}

/// Small random log with heavy timestamp ties, several object types and
/// object attributes. At most `max_objects` objects.
pub fn random_log(seed: u64, max_objects: usize) -> OcelLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = ["order", "item", "invoice"];
    let n_objects = rng.random_range(5..=max_objects);
    let mut objects = Vec::new();
    for i in 0..n_objects {
        let ot = types[rng.random_range(0..types.len())];
        let mut o = Object::new(format!("{ot}{i}"), ot);
        match ot {
            "order" => {
                o = o.with_attribute("amount", AttributeValue::Number(rng.random_range(0..50) as f64));
            }
            "item" => {
                let colors = ["red", "green", "blue"];
                o = o.with_attribute(
                    "color",
                    AttributeValue::Text(colors[rng.random_range(0..3)].into()),
                );
                if rng.random_bool(0.5) {
                    o = o.with_attribute("weight", AttributeValue::Number(1.5));
                }
            }
            _ => {}
        }
        objects.push(o);
    }
    let activities = ["place", "pick", "pack", "ship", "bill", "pay"];
    let n_events = rng.random_range(n_objects..3 * n_objects);
    let events = (0..n_events)
        .map(|i| {
            let k = rng.random_range(0..=3usize);
            let related: Vec<String> = (0..k)
                .map(|_| objects[rng.random_range(0..objects.len())].id.clone())
                .collect();
            let time = 1_700_000_000.0 + 60.0 * rng.random_range(0..25) as f64;
            EventRecord::new(
                format!("e{}", rng.random_range(0..10_000) * 1000 + i),
                activities[rng.random_range(0..activities.len())],
                time,
            )
            .with_objects(related)
        })
        .collect();
    OcelLog::new(objects, events).expect("random log is valid")
}

/// Straight-line LOF over a full distance matrix; returns `-LOF` per point.
pub fn brute_lof(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            d[i][j] = s.sqrt();
        }
    }
    let mut kdist = vec![0.0; n];
    let mut hood: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in 0..n {
        let mut others: Vec<f64> = (0..n).filter(|&b| b != a).map(|b| d[a][b]).collect();
        others.sort_by(|x, y| x.partial_cmp(y).unwrap());
        kdist[a] = others[k - 1];
        hood[a] = (0..n).filter(|&b| b != a && d[a][b] <= kdist[a]).collect();
    }
    let mut lrd = vec![0.0; n];
    for a in 0..n {
        let mut total = 0.0;
        for &b in &hood[a] {
            total += if kdist[b] > d[a][b] { kdist[b] } else { d[a][b] };
        }
        lrd[a] = 1.0 / (total / hood[a].len() as f64 + 1e-10);
    }
    (0..n)
        .map(|a| {
            let mut total = 0.0;
            for &b in &hood[a] {
                total += lrd[b];
            }
            -(total / hood[a].len() as f64 / lrd[a])
        })
        .collect()
}

/// Double-loop feature score: Σ_o score(o)·x(o,σ) / n per column.
pub fn brute_fea_scores(norm: &[Vec<f64>], scores: &[f64]) -> Vec<f64> {
    let n = norm.len();
    let d = norm.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for j in 0..d {
        let mut total = 0.0;
        for i in 0..n {
            total += scores[i] * norm[i][j];
        }
        out[j] = total / n as f64;
    }
    out
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues and
/// eigenvectors (as columns), unsorted.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Pairwise check of the rank law: bijection onto 0..n and strict order on
/// distinct scores.
pub fn rank_law_holds(scores: &[f64], ranks: &[usize]) -> bool {
    let n = scores.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        if r >= n || seen[r] {
            return false;
        }
        seen[r] = true;
    }
    for i in 0..n {
        for j in 0..n {
            if scores[i] != scores[j] && ((ranks[i] < ranks[j]) != (scores[i] < scores[j])) {
                return false;
            }
        }
    }
    true
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn owned(pairs: &BTreeSet<(&str, &str)>) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Compare every derivation and feature cell of `log` against the
/// brute-force oracle; the first disagreement is returned.
pub fn definition_mismatch(log: &OcelLog) -> Option<String> {
    let brute = BruteLog::from_log(log);
    let types: Vec<&str> = log.object_types().into_iter().collect();
    let check = |ok: bool, what: String| if ok { None } else { Some(what) };

    for o in log.objects() {
        let expected: Vec<&str> = brute.lifecycle(&o.id).iter().map(|e| e.id.as_str()).collect();
        let got = match log.lifecycle(&o.id) {
            Ok(v) => v,
            Err(e) => return Some(format!("lifecycle {}: {e}", o.id)),
        };
        if let Some(m) = check(got == expected, format!("lifecycle {}", o.id)) {
            return Some(m);
        }
        let g = match log.object_graphs(&o.id) {
            Ok(g) => g,
            Err(e) => return Some(format!("graphs {}: {e}", o.id)),
        };
        if let Some(m) = check(owned(&g.dfg) == brute.dfg(&o.id), format!("dfg {}", o.id))
            .or_else(|| check(owned(&g.efg) == brute.efg(&o.id), format!("efg {}", o.id)))
        {
            return Some(m);
        }
        for ot in &types {
            let got = match log.interaction_sets(&o.id, ot) {
                Ok(s) => s,
                Err(e) => return Some(format!("sets {} {ot}: {e}", o.id)),
            };
            let want = brute.sets(&o.id, ot);
            let pairs = [
                ("interact", got.interact == want.interact),
                ("creation", got.creation == want.creation),
                ("continuation", got.continuation == want.continuation),
                ("cobirth", got.cobirth == want.cobirth),
                ("codeath", got.codeath == want.codeath),
            ];
            if let Some((name, _)) = pairs.iter().find(|(_, ok)| !ok) {
                return Some(format!("{name} {} {ot}", o.id));
            }
        }
    }

    for ot in &types {
        if log.common_attributes(ot) != brute.common_attributes(ot) {
            return Some(format!("attributes {ot}"));
        }
        for with_cobirth in [false, true] {
            let cfg = ExtractionConfig {
                include_cobirth_codeath: with_cobirth,
            };
            let f = match extract_features(log, ot, &cfg) {
                Ok(f) => f,
                Err(e) => return Some(format!("features {ot}: {e}")),
            };
            let want = brute.feature_map(ot, with_cobirth);
            let nonzero: BTreeSet<&String> = want
                .values()
                .flat_map(|row| row.iter().filter(|(_, v)| **v != 0.0).map(|(k, _)| k))
                .collect();
            let got_cols: BTreeSet<&String> = f.columns().iter().collect();
            if got_cols != nonzero {
                return Some(format!("columns {ot}"));
            }
            for (o, row) in &want {
                for col in f.columns() {
                    let Some(got) = f.get(o, col) else {
                        return Some(format!("missing row {o}"));
                    };
                    let exp = row.get(col).copied().unwrap_or(0.0);
                    let is_time = col.starts_with("lifecycle") && col.ends_with("time")
                        || col == "lifecycleduration";
                    let ok = if is_time { (got - exp).abs() <= 1e-9 } else { got == exp };
                    if !ok {
                        return Some(format!("{o} {col}: {got} vs {exp}"));
                    }
                }
            }
        }
    }
    None
}
