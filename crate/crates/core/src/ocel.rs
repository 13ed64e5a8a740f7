//! Object-centric event log model.
//!
//! An [`OcelLog`] holds events related to any number of typed objects. Events
//! are kept in the log's total order: ascending timestamp, ties broken by the
//! lexicographic order of the event identifiers. Every per-object derivation
//! (lifecycle, follows graphs, interaction sets) is computed from that order.
//!
//! The log is immutable once built. Import and export use the OCEL 2.0 JSON
//! layout; event/object qualifiers and object-to-object relationships are read
//! but not modeled.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcelError {
    #[error("malformed OCEL document: {0}")]
    MalformedDocument(String),
    #[error("event {event} references unknown object {object}")]
    DanglingReference { event: String, object: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown object {0}")]
    UnknownObject(String),
}

/// Attribute value attached to an event or an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Number(f64),
    Text(String),
}

impl AttributeValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttributeValue::Number(v) => Some(*v),
            AttributeValue::Text(_) => None,
        }
    }
}

impl std::fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttributeValue::Number(v) => write!(f, "{v}"),
            AttributeValue::Text(s) => f.write_str(s),
        }
    }
}

pub type AttributeMap = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct Object {
    pub id: String,
    pub object_type: String,
    pub attributes: AttributeMap,
}

/// An event as stored in the log. Related objects are held as indices into
/// [`OcelLog::objects`], sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: String,
    pub activity: String,
    /// Seconds since the Unix epoch.
    pub time: f64,
    pub attributes: AttributeMap,
    related: Vec<usize>,
}

impl Event {
    pub fn related(&self) -> &[usize] {
        &self.related
    }

    /// Position of `self` relative to `other` in the log's total order.
    pub fn order(&self, other: &Event) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Input record used to assemble a log; related objects are given by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub id: String,
    pub activity: String,
    pub time: f64,
    pub objects: Vec<String>,
    pub attributes: AttributeMap,
}

impl EventRecord {
    pub fn new(id: impl Into<String>, activity: impl Into<String>, time: f64) -> Self {
        EventRecord {
            id: id.into(),
            activity: activity.into(),
            time,
            objects: Vec::new(),
            attributes: AttributeMap::new(),
        }
    }

    pub fn with_objects<I, S>(mut self, objects: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.objects.extend(objects.into_iter().map(Into::into));
        self
    }
}

impl Object {
    pub fn new(id: impl Into<String>, object_type: impl Into<String>) -> Self {
        Object {
            id: id.into(),
            object_type: object_type.into(),
            attributes: AttributeMap::new(),
        }
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: AttributeValue) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }
}

/// Objects of one target type related to a given object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionSets {
    pub interact: BTreeSet<String>,
    pub creation: BTreeSet<String>,
    pub continuation: BTreeSet<String>,
    pub cobirth: BTreeSet<String>,
    pub codeath: BTreeSet<String>,
}

/// Index-based form of [`InteractionSets`], used on hot paths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionIndices {
    pub interact: Vec<usize>,
    pub creation: Vec<usize>,
    pub continuation: Vec<usize>,
    pub cobirth: Vec<usize>,
    pub codeath: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectGraphs<'a> {
    pub dfg: BTreeSet<(&'a str, &'a str)>,
    pub efg: BTreeSet<(&'a str, &'a str)>,
}

#[derive(Debug, Clone)]
pub struct OcelLog {
    events: Vec<Event>,
    objects: Vec<Object>,
    object_index: HashMap<String, usize>,
    lifecycles: Vec<Vec<usize>>,
}

impl PartialEq for OcelLog {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events && self.objects == other.objects
    }
}

impl OcelLog {
    /// Assemble a log. Events are sorted into the total order; related object
    /// ids must all be declared in `objects`.
    pub fn new(objects: Vec<Object>, events: Vec<EventRecord>) -> Result<Self, OcelError> {
        let mut object_index = HashMap::with_capacity(objects.len());
        for (i, o) in objects.iter().enumerate() {
            if object_index.insert(o.id.clone(), i).is_some() {
                return Err(OcelError::DuplicateId {
                    kind: "object",
                    id: o.id.clone(),
                });
            }
        }

        let mut seen_events = BTreeSet::new();
        let mut stored = Vec::with_capacity(events.len());
        for rec in events {
            if !seen_events.insert(rec.id.clone()) {
                return Err(OcelError::DuplicateId {
                    kind: "event",
                    id: rec.id,
                });
            }
            if !rec.time.is_finite() {
                return Err(OcelError::MalformedDocument(format!(
                    "event {} has a non-finite timestamp",
                    rec.id
                )));
            }
            let mut related = Vec::with_capacity(rec.objects.len());
            for oid in &rec.objects {
                match object_index.get(oid) {
                    Some(&i) => related.push(i),
                    None => {
                        return Err(OcelError::DanglingReference {
                            event: rec.id.clone(),
                            object: oid.clone(),
                        })
                    }
                }
            }
            related.sort_unstable();
            related.dedup();
            stored.push(Event {
                id: rec.id,
                activity: rec.activity,
                time: rec.time,
                attributes: rec.attributes,
                related,
            });
        }
        stored.sort_by(Event::order);

        let mut lifecycles = vec![Vec::new(); objects.len()];
        for (ei, e) in stored.iter().enumerate() {
            for &oi in &e.related {
                lifecycles[oi].push(ei);
            }
        }

        Ok(OcelLog {
            events: stored,
            objects,
            object_index,
            lifecycles,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn objects(&self) -> &[Object] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&Object> {
        self.object_index.get(id).map(|&i| &self.objects[i])
    }

    pub fn object_idx(&self, id: &str) -> Result<usize, OcelError> {
        self.object_index
            .get(id)
            .copied()
            .ok_or_else(|| OcelError::UnknownObject(id.to_string()))
    }

    /// Ids of the objects related to an event.
    pub fn omap<'a>(&'a self, event: &'a Event) -> impl Iterator<Item = &'a str> + 'a {
        event.related.iter().map(|&i| self.objects[i].id.as_str())
    }

    pub fn object_types(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.object_type.as_str()).collect()
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.events.iter().map(|e| e.activity.as_str()).collect()
    }

    /// Indices of the objects of type `ot`, in log order.
    pub fn objects_of_type<'a>(&'a self, ot: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.object_type == ot)
            .map(|(i, _)| i)
    }

    /// Event indices of an object's lifecycle, in total order.
    pub fn lifecycle_of(&self, object_idx: usize) -> &[usize] {
        &self.lifecycles[object_idx]
    }

    /// Event ids in the lifecycle of `o`, in total order.
    pub fn lifecycle(&self, o: &str) -> Result<Vec<&str>, OcelError> {
        let idx = self.object_idx(o)?;
        Ok(self.lifecycles[idx]
            .iter()
            .map(|&e| self.events[e].id.as_str())
            .collect())
    }

    pub fn start_event(&self, object_idx: usize) -> Option<&Event> {
        self.lifecycles[object_idx].first().map(|&e| &self.events[e])
    }

    pub fn end_event(&self, object_idx: usize) -> Option<&Event> {
        self.lifecycles[object_idx].last().map(|&e| &self.events[e])
    }

    pub fn object_graphs(&self, o: &str) -> Result<ObjectGraphs<'_>, OcelError> {
        let idx = self.object_idx(o)?;
        let ids: Vec<&str> = self.lifecycles[idx]
            .iter()
            .map(|&e| self.events[e].id.as_str())
            .collect();
        let mut graphs = ObjectGraphs::default();
        for (i, &a) in ids.iter().enumerate() {
            if let Some(&b) = ids.get(i + 1) {
                graphs.dfg.insert((a, b));
            }
            for &b in &ids[i + 1..] {
                graphs.efg.insert((a, b));
            }
        }
        Ok(graphs)
    }

    /// Activity pairs of consecutive lifecycle events (the directly-follows
    /// edges of one object, labeled by activity).
    pub fn dfg_activity_pairs(&self, object_idx: usize) -> impl Iterator<Item = (&str, &str)> {
        self.lifecycles[object_idx].windows(2).map(move |w| {
            (
                self.events[w[0]].activity.as_str(),
                self.events[w[1]].activity.as_str(),
            )
        })
    }

    /// Every other object sharing at least one event with `object_idx`,
    /// sorted by index.
    pub fn interacting(&self, object_idx: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.lifecycles[object_idx]
            .iter()
            .flat_map(|&e| self.events[e].related.iter().copied())
            .filter(|&o| o != object_idx)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn interaction_indices(&self, object_idx: usize, ot: &str) -> InteractionIndices {
        let mut sets = InteractionIndices::default();
        let (Some(start), Some(end)) = (self.start_event(object_idx), self.end_event(object_idx))
        else {
            return sets;
        };
        for other in self.interacting(object_idx) {
            if self.objects[other].object_type != ot {
                continue;
            }
            sets.interact.push(other);
            // `other` shares an event with `object_idx`, so its lifecycle is nonempty.
            let o_start = self.start_event(other).map(|e| e.time).unwrap_or(f64::NAN);
            let o_end = self.end_event(other).map(|e| e.time).unwrap_or(f64::NAN);
            if start.time < o_start {
                sets.creation.push(other);
            }
            if end.time == o_start {
                sets.continuation.push(other);
            }
            if start.time == o_start {
                sets.cobirth.push(other);
            }
            if end.time == o_end {
                sets.codeath.push(other);
            }
        }
        sets
    }

    pub fn interaction_sets(&self, o: &str, ot: &str) -> Result<InteractionSets, OcelError> {
        let idx = self.object_idx(o)?;
        let ix = self.interaction_indices(idx, ot);
        let ids = |v: &[usize]| -> BTreeSet<String> {
            v.iter().map(|&i| self.objects[i].id.clone()).collect()
        };
        Ok(InteractionSets {
            interact: ids(&ix.interact),
            creation: ids(&ix.creation),
            continuation: ids(&ix.continuation),
            cobirth: ids(&ix.cobirth),
            codeath: ids(&ix.codeath),
        })
    }

    /// Attribute names carried by every object of type `ot`. Empty when the
    /// type has no objects.
    pub fn common_attributes(&self, ot: &str) -> BTreeSet<String> {
        let mut iter = self.objects.iter().filter(|o| o.object_type == ot);
        let Some(first) = iter.next() else {
            return BTreeSet::new();
        };
        let mut common: BTreeSet<String> = first.attributes.keys().cloned().collect();
        for o in iter {
            common.retain(|a| o.attributes.contains_key(a));
        }
        common
    }

    /// New log with only the events satisfying `keep`. All objects are
    /// retained.
    pub fn retain_events<F>(&self, mut keep: F) -> OcelLog
    where
        F: FnMut(&Event) -> bool,
    {
        let events: Vec<Event> = self.events.iter().filter(|e| keep(e)).cloned().collect();
        let mut lifecycles = vec![Vec::new(); self.objects.len()];
        for (ei, e) in events.iter().enumerate() {
            for &oi in &e.related {
                lifecycles[oi].push(ei);
            }
        }
        OcelLog {
            events,
            objects: self.objects.clone(),
            object_index: self.object_index.clone(),
            lifecycles,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, OcelError> {
        parse_ocel_json(bytes)
    }

    pub fn to_json(&self) -> String {
        serialize_ocel_json(self)
    }
}

// ---------------------------------------------------------------------------
// Timestamps

/// Seconds since the epoch from whole seconds plus nanoseconds.
pub fn time_from_parts(secs: i64, nanos: u32) -> f64 {
    secs as f64 + f64::from(nanos) * 1e-9
}

/// Parse an ISO-8601 timestamp. Strings without an offset are read as UTC.
pub fn parse_timestamp(s: &str) -> Result<f64, OcelError> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(time_from_parts(dt.timestamp(), dt.timestamp_subsec_nanos()));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            let dt = naive.and_utc();
            return Ok(time_from_parts(dt.timestamp(), dt.timestamp_subsec_nanos()));
        }
    }
    Err(OcelError::MalformedDocument(format!(
        "invalid timestamp {s:?}"
    )))
}

/// Render seconds since the epoch as ISO-8601 UTC with millisecond precision.
pub fn format_timestamp(t: f64) -> String {
    let mut secs = t.floor();
    let mut millis = ((t - secs) * 1000.0).round();
    if millis >= 1000.0 {
        secs += 1.0;
        millis = 0.0;
    }
    let dt = DateTime::<Utc>::from_timestamp(secs as i64, (millis as u32) * 1_000_000)
        .unwrap_or_default();
    dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

// ---------------------------------------------------------------------------
// OCEL 2.0 JSON

#[derive(Debug, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
struct RawLog {
    #[serde(default)]
    object_types: Vec<RawType>,
    #[serde(default)]
    event_types: Vec<RawType>,
    objects: Vec<RawObject>,
    events: Vec<RawEvent>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawType {
    name: String,
    #[serde(default)]
    attributes: Vec<RawTypeAttribute>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawTypeAttribute {
    name: String,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawObject {
    id: String,
    #[serde(rename = "type")]
    object_type: String,
    #[serde(default)]
    attributes: Vec<RawObjectAttribute>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relationships: Vec<RawRelationship>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawObjectAttribute {
    name: String,
    #[serde(default)]
    time: Option<String>,
    value: serde_json::Value,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawEvent {
    id: String,
    #[serde(rename = "type")]
    activity: String,
    time: String,
    #[serde(default)]
    attributes: Vec<RawEventAttribute>,
    #[serde(default)]
    relationships: Vec<RawRelationship>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawEventAttribute {
    name: String,
    value: serde_json::Value,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
struct RawRelationship {
    object_id: String,
    #[serde(default)]
    qualifier: String,
}

fn attribute_value(value: &serde_json::Value) -> Result<Option<AttributeValue>, OcelError> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => None,
        Value::Number(n) => Some(AttributeValue::Number(n.as_f64().ok_or_else(|| {
            OcelError::MalformedDocument(format!("number {n} out of range"))
        })?)),
        Value::String(s) => Some(AttributeValue::Text(s.clone())),
        Value::Bool(b) => Some(AttributeValue::Text(b.to_string())),
        Value::Array(_) | Value::Object(_) => {
            return Err(OcelError::MalformedDocument(
                "attribute values must be scalars".to_string(),
            ))
        }
    })
}

fn json_value(value: &AttributeValue) -> serde_json::Value {
    match value {
        AttributeValue::Number(v) => serde_json::Number::from_f64(*v)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        AttributeValue::Text(s) => serde_json::Value::String(s.clone()),
    }
}

/// Parse an OCEL 2.0 JSON document.
pub fn parse_ocel_json(bytes: &[u8]) -> Result<OcelLog, OcelError> {
    let raw: RawLog = serde_json::from_slice(bytes)
        .map_err(|e| OcelError::MalformedDocument(e.to_string()))?;

    let mut objects = Vec::with_capacity(raw.objects.len());
    for ro in raw.objects {
        // Latest value per attribute name; later entries win on equal times.
        let mut latest: BTreeMap<String, (f64, AttributeValue)> = BTreeMap::new();
        for attr in ro.attributes {
            let t = match &attr.time {
                Some(s) => parse_timestamp(s)?,
                None => 0.0,
            };
            let Some(v) = attribute_value(&attr.value)? else {
                continue;
            };
            match latest.get(&attr.name) {
                Some((prev, _)) if *prev > t => {}
                _ => {
                    latest.insert(attr.name, (t, v));
                }
            }
        }
        objects.push(Object {
            id: ro.id,
            object_type: ro.object_type,
            attributes: latest.into_iter().map(|(k, (_, v))| (k, v)).collect(),
        });
    }

    let mut events = Vec::with_capacity(raw.events.len());
    for re in raw.events {
        let mut attributes = AttributeMap::new();
        for attr in re.attributes {
            if let Some(v) = attribute_value(&attr.value)? {
                attributes.insert(attr.name, v);
            }
        }
        events.push(EventRecord {
            time: parse_timestamp(&re.time)?,
            id: re.id,
            activity: re.activity,
            objects: re.relationships.into_iter().map(|r| r.object_id).collect(),
            attributes,
        });
    }

    OcelLog::new(objects, events)
}

fn type_declarations<'a, I>(entries: I) -> Vec<RawType>
where
    I: Iterator<Item = (&'a str, &'a AttributeMap)>,
{
    let mut decls: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    for (name, attrs) in entries {
        let slot = decls.entry(name).or_default();
        for (a, v) in attrs {
            let kind = match v {
                AttributeValue::Number(_) => "float",
                AttributeValue::Text(_) => "string",
            };
            let prev = slot.entry(a.as_str()).or_insert(kind);
            if *prev != kind {
                *prev = "string";
            }
        }
    }
    decls
        .into_iter()
        .map(|(name, attrs)| RawType {
            name: name.to_string(),
            attributes: attrs
                .into_iter()
                .map(|(n, k)| RawTypeAttribute {
                    name: n.to_string(),
                    kind: k.to_string(),
                })
                .collect(),
        })
        .collect()
}

/// Serialize to OCEL 2.0 JSON. Object attributes are emitted with the epoch
/// as their change time; qualifiers are empty.
pub fn serialize_ocel_json(log: &OcelLog) -> String {
    let epoch = format_timestamp(0.0);
    let raw = RawLog {
        object_types: type_declarations(
            log.objects
                .iter()
                .map(|o| (o.object_type.as_str(), &o.attributes)),
        ),
        event_types: type_declarations(
            log.events
                .iter()
                .map(|e| (e.activity.as_str(), &e.attributes)),
        ),
        objects: log
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.id.clone(),
                object_type: o.object_type.clone(),
                attributes: o
                    .attributes
                    .iter()
                    .map(|(n, v)| RawObjectAttribute {
                        name: n.clone(),
                        time: Some(epoch.clone()),
                        value: json_value(v),
                    })
                    .collect(),
                relationships: Vec::new(),
            })
            .collect(),
        events: log
            .events
            .iter()
            .map(|e| RawEvent {
                id: e.id.clone(),
                activity: e.activity.clone(),
                time: format_timestamp(e.time),
                attributes: e
                    .attributes
                    .iter()
                    .map(|(n, v)| RawEventAttribute {
                        name: n.clone(),
                        value: json_value(v),
                    })
                    .collect(),
                relationships: e
                    .related
                    .iter()
                    .map(|&i| RawRelationship {
                        object_id: log.objects[i].id.clone(),
                        qualifier: String::new(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("OCEL document serializes")
}
