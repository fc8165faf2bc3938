//! Dataflow DAG data model, validation, and input-rate propagation.
//!
//! A dataflow is a DAG of tasks connected by tuple-stream edges. Input
//! streams interleave (rates sum) and output streams duplicate (every
//! out-edge carries the full output), so the input rate of a task is
//!
//! ```text
//! rate(t) = OMEGA                                  if t has no in-edges
//! rate(t) = sum over in-edges (rate(src) * sel)    otherwise
//! ```
//!
//! evaluated in topological order.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Edge selectivity: output tuples emitted per input tuple, kept as a
/// rational so repeated products do not drift. Evaluated in floating
/// point only when rates are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Selectivity(Ratio<u64>);

impl Selectivity {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!(
                "selectivity must be positive, got {num}:{den}"
            )));
        }
        Ok(Selectivity(Ratio::new(num, den)))
    }

    pub fn one() -> Self {
        Selectivity(Ratio::new(1, 1))
    }

    pub fn as_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Selectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}:{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Selectivity {
    type Err = Error;

    /// Accepts `"a:b"`, an integer, or a plain decimal such as `"0.5"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once(':') {
            let num: u64 = a.trim().parse().map_err(|_| bad_sel(s))?;
            let den: u64 = b.trim().parse().map_err(|_| bad_sel(s))?;
            return Selectivity::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let frac = frac.trim_end_matches('0');
            if frac.len() > 9 {
                return Err(bad_sel(s));
            }
            let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad_sel(s))? };
            let scale = 10u64.pow(frac.len() as u32);
            let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad_sel(s))? };
            return Selectivity::new(int * scale + frac, scale);
        }
        let num: u64 = s.parse().map_err(|_| bad_sel(s))?;
        Selectivity::new(num, 1)
    }
}

fn bad_sel(s: &str) -> Error {
    Error::Config(format!("cannot parse selectivity `{s}`"))
}

impl Serialize for Selectivity {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            ser.serialize_u64(*self.0.numer())
        } else {
            ser.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Selectivity {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Str(s) => s.parse().map_err(DeError::custom),
            Raw::Num(x) => {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(DeError::custom(format!("selectivity must be positive, got {x}")));
                }
                // Round-trip through the decimal text form so 0.5 becomes 1/2.
                format!("{x}").parse().map_err(DeError::custom)
            }
        }
    }
}

/// Static resource override for tasks that are not model-driven
/// (typically the source and sink).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedResources {
    pub cpu: f64,
    pub mem: f64,
    pub threads: u32,
}

/// A task vertex. `kind` names the performance model used for it; a task
/// with `fixed` set is excluded from model-based allocation and its thread
/// count and resources are constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    pub kind: String,
    #[serde(default, rename = "source", skip_serializing_if = "is_false")]
    pub is_source: bool,
    #[serde(default, rename = "sink", skip_serializing_if = "is_false")]
    pub is_sink: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedResources>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl TaskDef {
    pub fn new(id: impl Into<String>, kind: impl Into<String>) -> Self {
        TaskDef { id: id.into(), kind: kind.into(), is_source: false, is_sink: false, fixed: None }
    }

    pub fn source(id: impl Into<String>) -> Self {
        TaskDef {
            id: id.into(),
            kind: "source".into(),
            is_source: true,
            is_sink: false,
            fixed: Some(FixedResources { cpu: 10.0, mem: 15.0, threads: 1 }),
        }
    }

    pub fn sink(id: impl Into<String>) -> Self {
        TaskDef {
            id: id.into(),
            kind: "sink".into(),
            is_source: false,
            is_sink: true,
            fixed: Some(FixedResources { cpu: 10.0, mem: 20.0, threads: 1 }),
        }
    }
}

/// A stream edge from one task to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEdge {
    pub from: String,
    pub to: String,
    pub selectivity: Selectivity,
}

impl StreamEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, selectivity: Selectivity) -> Self {
        StreamEdge { from: from.into(), to: to.into(), selectivity }
    }

    pub fn unit(from: impl Into<String>, to: impl Into<String>) -> Self {
        StreamEdge::new(from, to, Selectivity::one())
    }
}

/// The dataflow DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataflow {
    pub tasks: Vec<TaskDef>,
    pub edges: Vec<StreamEdge>,
}

/// Input rate per task, tuples/sec.
pub type RateMap = BTreeMap<String, f64>;

impl Dataflow {
    pub fn new(tasks: Vec<TaskDef>, edges: Vec<StreamEdge>) -> Self {
        Dataflow { tasks, edges }
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn in_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a StreamEdge> {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn out_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a StreamEdge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Tasks with no in-edges. These receive the DAG input rate.
    pub fn source_ids(&self) -> Vec<&str> {
        self.tasks
            .iter()
            .filter(|t| !self.edges.iter().any(|e| e.to == t.id))
            .map(|t| t.id.as_str())
            .collect()
    }

    /// Tasks with no out-edges.
    pub fn sink_ids(&self) -> Vec<&str> {
        self.tasks
            .iter()
            .filter(|t| !self.edges.iter().any(|e| e.from == t.id))
            .map(|t| t.id.as_str())
            .collect()
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Checks every dataflow invariant. Returns an empty list iff the DAG is
/// well formed; each entry names the offending task or edge. Violations
/// are data, not failures.
pub fn validate(df: &Dataflow) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for t in &df.tasks {
        if !seen.insert(t.id.as_str()) {
            violations.push(format!("duplicate task id `{}`", t.id));
        }
    }

    let mut edge_seen = BTreeSet::new();
    for e in &df.edges {
        if e.from == e.to {
            violations.push(format!("self-loop at `{}`", e.from));
        }
        for end in [&e.from, &e.to] {
            if df.task(end).is_none() {
                violations.push(format!("edge `{}`->`{}` references unknown task `{end}`", e.from, e.to));
            }
        }
        if !edge_seen.insert((e.from.as_str(), e.to.as_str())) {
            violations.push(format!("duplicate edge `{}`->`{}`", e.from, e.to));
        }
        if e.selectivity.as_f64() <= 0.0 {
            violations.push(format!("edge `{}`->`{}` has non-positive selectivity", e.from, e.to));
        }
    }

    if df.tasks.is_empty() {
        violations.push("dataflow has no tasks".to_string());
        return violations;
    }

    if violations.iter().any(|v| v.contains("unknown task") || v.contains("self-loop")) {
        // Structural checks below assume edges are sane.
        return violations;
    }

    if df.source_ids().is_empty() {
        violations.push("no source task (every task has an in-edge)".to_string());
    }
    if df.sink_ids().is_empty() {
        violations.push("no sink task (every task has an out-edge)".to_string());
    }

    for t in &df.tasks {
        if t.is_source && df.in_edges(&t.id).next().is_some() {
            violations.push(format!("task `{}` is flagged source but has in-edges", t.id));
        }
        if t.is_sink && df.out_edges(&t.id).next().is_some() {
            violations.push(format!("task `{}` is flagged sink but has out-edges", t.id));
        }
    }

    if let Err(Error::Cycle(member)) = topo_order(df) {
        violations.push(format!("cycle detected involving `{member}`"));
    }

    violations
}

/// Topological order of the task ids, deterministic: ties are broken by
/// task id ascending so downstream planning is reproducible.
pub fn topo_order(df: &Dataflow) -> Result<Vec<String>> {
    let ids: BTreeSet<&str> = df.tasks.iter().map(|t| t.id.as_str()).collect();
    for e in &df.edges {
        for end in [&e.from, &e.to] {
            if !ids.contains(end.as_str()) {
                return Err(Error::InvalidDag(format!("edge references unknown task `{end}`")));
            }
        }
    }

    let mut indegree: BTreeMap<&str, usize> = df.tasks.iter().map(|t| (t.id.as_str(), 0)).collect();
    for e in &df.edges {
        *indegree.get_mut(e.to.as_str()).unwrap() += 1;
    }

    let mut ready: BinaryHeap<Reverse<&str>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse(*id))
        .collect();

    let mut order = Vec::with_capacity(df.tasks.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id.to_string());
        for e in df.out_edges(id) {
            let d = indegree.get_mut(e.to.as_str()).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(e.to.as_str()));
            }
        }
    }

    if order.len() != df.tasks.len() {
        let member = indegree
            .iter()
            .filter(|(id, _)| !order.iter().any(|o| o == *id))
            .map(|(id, _)| *id)
            .min()
            .unwrap_or("?");
        return Err(Error::Cycle(member.to_string()));
    }
    Ok(order)
}

/// Propagates the DAG input rate through the selectivity recurrence.
/// Source tasks (no in-edges) receive `omega`; every other task receives
/// the sum over its in-edges of the upstream rate times the edge
/// selectivity.
pub fn get_rate(df: &Dataflow, omega: f64) -> Result<RateMap> {
    if omega < 0.0 || !omega.is_finite() {
        return Err(Error::Config(format!("omega must be a non-negative rate, got {omega}")));
    }
    let violations = validate(df);
    if !violations.is_empty() {
        return Err(Error::InvalidDag(violations.join("; ")));
    }

    let order = topo_order(df)?;
    let mut rates = RateMap::new();
    for id in &order {
        let rate = if df.in_edges(id).next().is_none() {
            omega
        } else {
            df.in_edges(id)
                .map(|e| rates[&e.from] * e.selectivity.as_f64())
                .sum()
        };
        rates.insert(id.clone(), rate);
    }
    Ok(rates)
}

/// Canonical micro-DAG shapes. All edges carry selectivity 1:1 and a
/// source/sink pair with the static resource defaults is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    /// `src -> t1 -> t2 -> t3 -> t4 -> t5 -> sink`
    Linear,
    /// `t1` fans out to `t2,t3,t4`, which all join at `t5`.
    Diamond,
    /// Heads `t1,t2` feed hub `t3`, which feeds tails `t4,t5`; the hub
    /// sees twice the DAG input rate.
    Star,
}

impl FromStr for BuiltinKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(BuiltinKind::Linear),
            "diamond" => Ok(BuiltinKind::Diamond),
            "star" => Ok(BuiltinKind::Star),
            other => Err(Error::Config(format!("unknown builtin DAG `{other}`"))),
        }
    }
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BuiltinKind::Linear => "linear",
            BuiltinKind::Diamond => "diamond",
            BuiltinKind::Star => "star",
        };
        f.write_str(s)
    }
}

/// Builds a canonical micro-DAG over exactly five task kinds, assigned to
/// vertices `t1..t5` in order.
pub fn builtin_dag(kind: BuiltinKind, task_kinds: &[&str]) -> Result<Dataflow> {
    if task_kinds.len() != 5 {
        return Err(Error::Config(format!(
            "builtin DAGs take exactly 5 task kinds, got {}",
            task_kinds.len()
        )));
    }
    let mut tasks = vec![TaskDef::source("src")];
    for (i, k) in task_kinds.iter().enumerate() {
        tasks.push(TaskDef::new(format!("t{}", i + 1), *k));
    }
    tasks.push(TaskDef::sink("sink"));

    let e = StreamEdge::unit;
    let edges = match kind {
        BuiltinKind::Linear => vec![
            e("src", "t1"),
            e("t1", "t2"),
            e("t2", "t3"),
            e("t3", "t4"),
            e("t4", "t5"),
            e("t5", "sink"),
        ],
        BuiltinKind::Diamond => vec![
            e("src", "t1"),
            e("t1", "t2"),
            e("t1", "t3"),
            e("t1", "t4"),
            e("t2", "t5"),
            e("t3", "t5"),
            e("t4", "t5"),
            e("t5", "sink"),
        ],
        BuiltinKind::Star => vec![
            e("src", "t1"),
            e("src", "t2"),
            e("t1", "t3"),
            e("t2", "t3"),
            e("t3", "t4"),
            e("t3", "t5"),
            e("t4", "sink"),
            e("t5", "sink"),
        ],
    };
    Ok(Dataflow::new(tasks, edges))
}
