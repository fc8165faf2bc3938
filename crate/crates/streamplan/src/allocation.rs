//! Resource allocation: per-task thread counts and resource estimates for
//! a target DAG input rate, plus the total slot count.
//!
//! Two allocators are provided. LSA assumes one thread's behavior scales
//! linearly and sizes everything from the single-thread model point. MBA
//! packs threads in bundles at each task's best-rate operating point,
//! charging a whole slot per bundle, and sizes only the residual rate
//! from the interpolated model.

use serde::{Deserialize, Serialize};

use crate::dagcore::{self, Dataflow};
use crate::perfmodel::ModelSet;
use crate::{Error, Result};

/// Slack for float comparisons on accumulated rates and percentages.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "LSA")]
    Lsa,
    #[serde(rename = "MBA")]
    Mba,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Lsa => "LSA",
            Algorithm::Mba => "MBA",
        })
    }
}

/// Threads and cumulative resources for one task. Percentages are of one
/// slot, so they exceed 100 when a task needs more than a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAllocation {
    pub id: String,
    pub threads: u32,
    #[serde(rename = "cpu")]
    pub cpu_pct: f64,
    #[serde(rename = "mem")]
    pub mem_pct: f64,
}

/// A complete allocation for a DAG at one input rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub algorithm: Algorithm,
    pub omega: f64,
    /// Total resource slots: `max(ceil(sum cpu / 100), ceil(sum mem / 100))`.
    pub rho: u32,
    pub tasks: Vec<TaskAllocation>,
}

impl AllocationPlan {
    pub fn task(&self, id: &str) -> Option<&TaskAllocation> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ceil_pct(sum: f64) -> u32 {
    (sum / 100.0 - EPS).ceil().max(0.0) as u32
}

/// Slot count for a set of per-task (CPU%, mem%) pairs. Never zero: even
/// a zero-rate DAG still has to be deployed somewhere.
pub fn slot_count<'a>(resources: impl IntoIterator<Item = (&'a f64, &'a f64)>) -> u32 {
    let (mut c, mut m) = (0.0, 0.0);
    for (ci, mi) in resources {
        c += ci;
        m += mi;
    }
    ceil_pct(c).max(ceil_pct(m)).max(1)
}

fn plan_with(
    df: &Dataflow,
    omega: f64,
    models: &ModelSet,
    algorithm: Algorithm,
    per_task: impl Fn(&str, f64) -> Result<(u32, f64, f64)>,
) -> Result<AllocationPlan> {
    let rates = dagcore::get_rate(df, omega)?;
    let order = dagcore::topo_order(df)?;

    let mut tasks = Vec::with_capacity(order.len());
    for id in &order {
        let task = df.task(id).expect("topo ids exist");
        let (threads, cpu, mem) = if let Some(fixed) = &task.fixed {
            (fixed.threads.max(1), fixed.cpu, fixed.mem)
        } else {
            let rate = rates[id];
            if rate <= EPS {
                // Disconnected or zero-rate: keep one thread so the task
                // stays mappable, at no resource charge.
                (1, 0.0, 0.0)
            } else {
                let model = models
                    .get(&task.kind)
                    .ok_or_else(|| Error::MissingModel(task.kind.clone()))?;
                if model.points.is_empty() {
                    return Err(Error::EmptyModel(task.kind.clone()));
                }
                per_task(&task.kind, rate)?
            }
        };
        tasks.push(TaskAllocation { id: id.clone(), threads, cpu_pct: cpu, mem_pct: mem });
    }

    let rho = slot_count(tasks.iter().map(|t| (&t.cpu_pct, &t.mem_pct)));
    Ok(AllocationPlan { algorithm, omega, rho, tasks })
}

/// Linear Scaling Allocation: threads in multiples of the single-thread
/// peak rate, resources extrapolated linearly from one thread (the
/// trailing fraction of a thread is charged pro-rata).
pub fn allocate_lsa(df: &Dataflow, omega: f64, models: &ModelSet) -> Result<AllocationPlan> {
    plan_with(df, omega, models, Algorithm::Lsa, |kind, rate| {
        let model = &models[kind];
        let single = model.peak_rate(1);
        let (c1, m1) = model.resources(1);
        let ratio = rate / single;
        let threads = (ratio - EPS).ceil().max(1.0) as u32;
        Ok((threads, c1 * ratio, m1 * ratio))
    })
}

/// Model Based Allocation: full bundles of the best-rate thread count,
/// each charged a whole slot, plus a residual group sized from the
/// interpolated model (scaled pro-rata when one thread suffices).
pub fn allocate_mba(df: &Dataflow, omega: f64, models: &ModelSet) -> Result<AllocationPlan> {
    plan_with(df, omega, models, Algorithm::Mba, |kind, rate| {
        let model = &models[kind];
        let (best_rate, best_tau) = model.max_peak();

        let bundles = ((rate + EPS) / best_rate).floor() as u32;
        let mut threads = bundles * best_tau;
        let mut cpu = bundles as f64 * 100.0;
        let mut mem = bundles as f64 * 100.0;

        let residual = rate - bundles as f64 * best_rate;
        if residual > EPS {
            let q = model.threads_for_rate(residual).ok_or_else(|| {
                // Unreachable by construction: residual < best_rate.
                Error::Config(format!("model `{kind}` cannot satisfy residual rate {residual}"))
            })?;
            threads += q;
            if q > 1 {
                let (cq, mq) = model.resources(q);
                cpu += cq;
                mem += mq;
            } else {
                let single = model.peak_rate(1);
                let (c1, m1) = model.resources(1);
                cpu += c1 * residual / single;
                mem += m1 * residual / single;
            }
        }
        Ok((threads.max(1), cpu, mem))
    })
}

pub fn allocate(
    algorithm: Algorithm,
    df: &Dataflow,
    omega: f64,
    models: &ModelSet,
) -> Result<AllocationPlan> {
    match algorithm {
        Algorithm::Lsa => allocate_lsa(df, omega, models),
        Algorithm::Mba => allocate_mba(df, omega, models),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagcore::{Dataflow, StreamEdge, TaskDef};
    use crate::perfmodel::{fixtures, ModelPoint, TaskPerfModel};

    fn single_task_dag(kind: &str) -> Dataflow {
        Dataflow::new(
            vec![TaskDef::source("src"), TaskDef::new("t", kind), TaskDef::sink("sink")],
            vec![StreamEdge::unit("src", "t"), StreamEdge::unit("t", "sink")],
        )
    }

    fn model_of(points: &[(u32, f64, f64, f64)]) -> TaskPerfModel {
        TaskPerfModel::new(
            "synth",
            points
                .iter()
                .map(|&(threads, peak_rate, cpu_pct, mem_pct)| ModelPoint {
                    threads,
                    peak_rate,
                    cpu_pct,
                    mem_pct,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lsa_blob_at_100() {
        let df = single_task_dag("azure-blob");
        let plan = allocate_lsa(&df, 100.0, &fixtures::all()).unwrap();
        let b = plan.task("t").unwrap();
        assert_eq!(b.threads, 50);
        assert!((b.cpu_pct - 337.0).abs() < 1e-9);
        assert!((b.mem_pct - 1196.0).abs() < 1e-9);
    }

    #[test]
    fn lsa_exact_single_thread_rate() {
        let mut models = ModelSet::new();
        models.insert("synth".into(), model_of(&[(1, 40.0, 30.0, 12.0)]));
        let df = single_task_dag("synth");
        let plan = allocate_lsa(&df, 40.0, &models).unwrap();
        let t = plan.task("t").unwrap();
        assert_eq!(t.threads, 1);
        assert!((t.cpu_pct - 30.0).abs() < 1e-9);
        assert!((t.mem_pct - 12.0).abs() < 1e-9);
    }

    #[test]
    fn lsa_fractional_thread_scales_down() {
        let mut models = ModelSet::new();
        models.insert("synth".into(), model_of(&[(1, 40.0, 30.0, 12.0)]));
        let df = single_task_dag("synth");
        let plan = allocate_lsa(&df, 60.0, &models).unwrap();
        let t = plan.task("t").unwrap();
        assert_eq!(t.threads, 2);
        assert!((t.cpu_pct - 45.0).abs() < 1e-9);
        assert!((t.mem_pct - 18.0).abs() < 1e-9);
    }

    #[test]
    fn mba_blob_at_100_bundles_and_residual() {
        let df = single_task_dag("azure-blob");
        let plan = allocate_mba(&df, 100.0, &fixtures::all()).unwrap();
        let b = plan.task("t").unwrap();
        // 3 full bundles of 50 threads plus a 20-thread residual group.
        assert_eq!(b.threads, 170);
        assert!((b.cpu_pct - 315.0).abs() < 1e-9);
        assert!((b.mem_pct - 326.0).abs() < 1e-9);
    }

    #[test]
    fn mba_exact_bundle() {
        let df = single_task_dag("azure-blob");
        let plan = allocate_mba(&df, 30.0, &fixtures::all()).unwrap();
        let b = plan.task("t").unwrap();
        assert_eq!(b.threads, 50);
        assert_eq!((b.cpu_pct, b.mem_pct), (100.0, 100.0));
    }

    #[test]
    fn mba_below_single_thread_scales_down() {
        let df = single_task_dag("azure-blob");
        let plan = allocate_mba(&df, 1.0, &fixtures::all()).unwrap();
        let b = plan.task("t").unwrap();
        assert_eq!(b.threads, 1);
        assert!((b.cpu_pct - 6.74 * 0.5).abs() < 1e-9);
        assert!((b.mem_pct - 23.92 * 0.5).abs() < 1e-9);
    }

    #[test]
    fn slot_count_reference_values() {
        assert_eq!(slot_count([(&242.0, &623.0)]), 7);
        assert_eq!(slot_count([(&100.0, &100.0)]), 1);
        assert_eq!(slot_count([(&323.0, &128.0)]), 4);
        // Zero resources still occupy a slot.
        assert_eq!(slot_count([(&0.0, &0.0)]), 1);
    }

    #[test]
    fn missing_model_is_an_error() {
        let df = single_task_dag("no-such-kind");
        assert!(matches!(
            allocate_lsa(&df, 10.0, &fixtures::all()),
            Err(Error::MissingModel(k)) if k == "no-such-kind"
        ));
    }

    #[test]
    fn fixed_tasks_contribute_constants() {
        let df = single_task_dag("azure-table");
        let plan = allocate_mba(&df, 10.0, &fixtures::all()).unwrap();
        let src = plan.task("src").unwrap();
        let sink = plan.task("sink").unwrap();
        assert_eq!((src.threads, src.cpu_pct, src.mem_pct), (1, 10.0, 15.0));
        assert_eq!((sink.threads, sink.cpu_pct, sink.mem_pct), (1, 10.0, 20.0));
    }

    #[test]
    fn zero_rate_tasks_keep_one_thread() {
        // Selectivities never zero a rate out, so task rates hit 0 only
        // when the DAG rate is 0; tasks must stay mappable regardless.
        let df = single_task_dag("azure-table");
        let plan = allocate_lsa(&df, 0.0, &fixtures::all()).unwrap();
        let t = plan.task("t").unwrap();
        assert_eq!((t.threads, t.cpu_pct, t.mem_pct), (1, 0.0, 0.0));
        assert_eq!(plan.rho, 1);
    }

    #[test]
    fn plan_json_round_trip() {
        let df = single_task_dag("azure-blob");
        let plan = allocate_mba(&df, 100.0, &fixtures::all()).unwrap();
        let back = AllocationPlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan, back);
    }
}
