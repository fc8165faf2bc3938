//! Model-based prediction for a mapped plan: per-slot incoming rates
//! under shuffle grouping, per-slot capacities, the largest supported DAG
//! rate, and per-VM CPU%/memory%.
//!
//! Shuffle grouping sends an equal share of a task's tuples to each of
//! its threads, so a slot's incoming rate for a task is proportional to
//! the thread count it hosts. A slot's capacity for a task comes from the
//! performance model at the hosted thread count; on slots shared between
//! tasks the capacity is scaled down by the fraction of the group's
//! modeled resource needs that the mapping actually granted it (cross-task
//! interference is otherwise not modeled, so a binding mixed slot is
//! flagged in the report).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPlan;
use crate::dagcore::{self, Dataflow};
use crate::mapping::{Cluster, MapAlgorithm, MappingPlan};
use crate::perfmodel::ModelSet;
use crate::{Error, Result};

const EPS: f64 = 1e-9;

/// One task's thread group on one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGroup {
    pub vm: String,
    pub slot: u32,
    pub task: String,
    pub kind: String,
    pub threads: u32,
    /// CPU%/mem% the mapping granted this group on its slot, when the
    /// mapper is resource aware. Round-robin mapping records nothing.
    pub grant: Option<(f64, f64)>,
    /// Set for fixed-resource tasks, which have no performance model.
    pub fixed: Option<(f64, f64)>,
}

/// Reconstructs the per-slot thread groups and their resource grants from
/// a mapping plan. Grants follow the mapper's own accounting: per-thread
/// single-thread footprints for RSM, whole slots for SAM full bundles and
/// the allocation residual for SAM partial bundles.
pub fn slot_groups(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    models: &ModelSet,
) -> Result<Vec<SlotGroup>> {
    let mut counts: BTreeMap<(String, u32, String), u32> = BTreeMap::new();
    for a in &plan.assignments {
        *counts.entry((a.vm.clone(), a.slot, a.task.clone())).or_insert(0) += 1;
    }

    let mut groups = Vec::with_capacity(counts.len());
    for ((vm, slot, task), threads) in counts {
        let tdef = df
            .task(&task)
            .ok_or_else(|| Error::Config(format!("mapping references unknown task `{task}`")))?;
        let fixed = tdef.fixed.map(|f| (f.cpu, f.mem));

        let grant = match plan.algorithm {
            MapAlgorithm::Dsm => None,
            MapAlgorithm::Rsm => {
                let (c1, m1) = match fixed {
                    Some(f) => f,
                    None => {
                        let m = models
                            .get(&tdef.kind)
                            .ok_or_else(|| Error::MissingModel(tdef.kind.clone()))?;
                        m.resources(1)
                    }
                };
                Some((threads as f64 * c1, threads as f64 * m1))
            }
            MapAlgorithm::Sam => {
                if let Some(f) = fixed {
                    Some(f)
                } else {
                    let m = models
                        .get(&tdef.kind)
                        .ok_or_else(|| Error::MissingModel(tdef.kind.clone()))?;
                    let (_, tau_hat) = m.max_peak();
                    if threads == tau_hat {
                        // A full bundle owns its slot outright.
                        Some((100.0, 100.0))
                    } else {
                        let ta = alloc.task(&task).ok_or_else(|| {
                            Error::Config(format!("allocation missing task `{task}`"))
                        })?;
                        let fulls = ta.threads / tau_hat;
                        Some((
                            (ta.cpu_pct - fulls as f64 * 100.0).max(0.0),
                            (ta.mem_pct - fulls as f64 * 100.0).max(0.0),
                        ))
                    }
                }
            }
        };

        groups.push(SlotGroup { vm, slot, task, kind: tdef.kind.clone(), threads, grant, fixed });
    }
    Ok(groups)
}

/// Splits a task's input rate over slots in proportion to the threads
/// hosted there (shuffle grouping sends each thread an equal share).
pub fn shuffle_split(omega_task: f64, per_slot_threads: &[u32]) -> Result<Vec<f64>> {
    let total: u32 = per_slot_threads.iter().sum();
    if total == 0 {
        return Err(Error::Config("shuffle split over zero threads".into()));
    }
    Ok(per_slot_threads
        .iter()
        .map(|q| omega_task * *q as f64 / total as f64)
        .collect())
}

/// Capacity of one thread group on its slot, in tuples/sec. `None` for
/// fixed-resource tasks, which the models do not cover.
///
/// On a slot shared by several tasks the model rate is scaled by the
/// fraction of the group's modeled resource needs the mapping granted it
/// (capped at 1); a group alone on its slot gets the full model rate.
pub fn group_capacity(group: &SlotGroup, slot_is_mixed: bool, models: &ModelSet) -> Result<Option<f64>> {
    if group.fixed.is_some() {
        return Ok(None);
    }
    let model = models
        .get(&group.kind)
        .ok_or_else(|| Error::MissingModel(group.kind.clone()))?;
    let base = model.peak_rate(group.threads);
    if !slot_is_mixed {
        return Ok(Some(base));
    }
    let share = match group.grant {
        None => 1.0,
        Some((gc, gm)) => {
            let (need_c, need_m) = model.resources(group.threads);
            let rc = if need_c <= EPS { 1.0 } else { gc / need_c };
            let rm = if need_m <= EPS { 1.0 } else { gm / need_m };
            rc.max(rm).clamp(0.0, 1.0)
        }
    };
    Ok(Some(base * share))
}

/// Per-task load on one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTaskLoad {
    pub task: String,
    pub threads: u32,
    pub incoming: f64,
    /// Absent for fixed-resource tasks.
    pub capacity: Option<f64>,
    pub mixed: bool,
}

/// All task loads on one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLoad {
    pub vm: String,
    pub slot: u32,
    pub entries: Vec<SlotTaskLoad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmUsage {
    pub id: String,
    pub cpu: f64,
    pub mem: f64,
}

/// The group (vm, slot, task) whose capacity binds the predicted rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingGroup {
    pub vm: String,
    pub slot: u32,
    pub task: String,
    /// True when the binding slot is shared between tasks, i.e. the
    /// prediction leans on the declared mixed-slot approximation.
    pub mixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_rate: f64,
    pub vms: Vec<VmUsage>,
    pub slots: Vec<SlotLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<BindingGroup>,
}

impl Prediction {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Whether each group's slot hosts threads of more than one task.
pub fn mixed_flags(groups: &[SlotGroup]) -> Vec<bool> {
    let mut per_slot: BTreeMap<(&str, u32), u32> = BTreeMap::new();
    for g in groups {
        *per_slot.entry((g.vm.as_str(), g.slot)).or_insert(0) += 1;
    }
    groups.iter().map(|g| per_slot[&(g.vm.as_str(), g.slot)] > 1).collect()
}

/// Slot groups of a mapped plan together with each group's capacity
/// (`None` for fixed-resource tasks). This is the service model the
/// simulator runs against, so predictions and simulations stay
/// consistent by construction.
pub fn slot_capacities(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    models: &ModelSet,
) -> Result<(Vec<SlotGroup>, Vec<Option<f64>>)> {
    let groups = slot_groups(df, alloc, plan, models)?;
    let mixed = mixed_flags(&groups);
    let capacities = groups
        .iter()
        .zip(&mixed)
        .map(|(g, m)| group_capacity(g, *m, models))
        .collect::<Result<Vec<_>>>()?;
    Ok((groups, capacities))
}

struct LoadModel {
    groups: Vec<SlotGroup>,
    /// Capacity per group, aligned with `groups`.
    capacities: Vec<Option<f64>>,
    /// Rate multiplier per task at DAG rate 1.
    rate_factor: BTreeMap<String, f64>,
    /// Total threads per task.
    task_threads: BTreeMap<String, u32>,
    /// Whether each group's slot hosts more than one task.
    mixed: Vec<bool>,
}

impl LoadModel {
    fn build(
        df: &Dataflow,
        alloc: &AllocationPlan,
        plan: &MappingPlan,
        models: &ModelSet,
    ) -> Result<Self> {
        let (groups, capacities) = slot_capacities(df, alloc, plan, models)?;
        let mixed = mixed_flags(&groups);

        let rate_factor = dagcore::get_rate(df, 1.0)?;
        let mut task_threads = BTreeMap::new();
        for g in &groups {
            *task_threads.entry(g.task.clone()).or_insert(0) += g.threads;
        }

        Ok(LoadModel { groups, capacities, rate_factor, task_threads, mixed })
    }

    fn incoming(&self, gi: usize, omega: f64) -> f64 {
        let g = &self.groups[gi];
        let task_rate = omega * self.rate_factor[&g.task];
        task_rate * g.threads as f64 / self.task_threads[&g.task] as f64
    }

    fn feasible(&self, omega: f64) -> bool {
        self.groups.iter().enumerate().all(|(gi, _)| match self.capacities[gi] {
            None => true,
            Some(cap) => self.incoming(gi, omega) <= cap + EPS,
        })
    }
}

/// Largest DAG input rate for which every slot group's incoming rate fits
/// its capacity, found by bisection to 0.1 tuples/sec. Infinite when no
/// modeled group constrains the DAG.
pub fn predict_rate(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    models: &ModelSet,
) -> Result<f64> {
    let lm = LoadModel::build(df, alloc, plan, models)?;
    if lm.capacities.iter().all(Option::is_none) {
        return Ok(f64::INFINITY);
    }

    // Bracket the feasibility boundary, then bisect.
    let mut hi = 1.0;
    let mut grow = 0;
    while lm.feasible(hi) && grow < 64 {
        hi *= 2.0;
        grow += 1;
    }
    if grow == 64 {
        return Ok(f64::INFINITY);
    }
    let mut lo = 0.0;
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if lm.feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Shared resource-usage rule: a group receiving rate `r` against model
/// rate `I(q)` is expected to use the model's resources at `q` threads
/// scaled by `r / I(q)` (capped at full). Fixed-resource tasks charge
/// their constants whenever they see traffic. Per-VM totals are capped at
/// the VM's slot count times 100.
pub fn utilization_for_rates(
    groups: &[SlotGroup],
    rates: &[f64],
    cluster: &Cluster,
    models: &ModelSet,
) -> Result<Vec<VmUsage>> {
    let mut per_vm: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (g, &r) in groups.iter().zip(rates) {
        let (c, m) = match g.fixed {
            Some((fc, fm)) => {
                if r > EPS {
                    (fc, fm)
                } else {
                    (0.0, 0.0)
                }
            }
            None => {
                let model = models
                    .get(&g.kind)
                    .ok_or_else(|| Error::MissingModel(g.kind.clone()))?;
                let cap = model.peak_rate(g.threads);
                let scale = if cap <= EPS { 0.0 } else { (r / cap).clamp(0.0, 1.0) };
                let (mc, mm) = model.resources(g.threads);
                (mc * scale, mm * scale)
            }
        };
        let e = per_vm.entry(g.vm.as_str()).or_insert((0.0, 0.0));
        e.0 += c;
        e.1 += m;
    }

    Ok(cluster
        .vms
        .iter()
        .map(|vm| {
            let cap = vm.slots as f64 * 100.0;
            let (c, m) = per_vm.get(vm.id.as_str()).copied().unwrap_or((0.0, 0.0));
            VmUsage { id: vm.id.clone(), cpu: c.min(cap), mem: m.min(cap) }
        })
        .collect())
}

/// Expected per-VM (CPU%, mem%) when the DAG runs at `omega`. Rates above
/// the supported rate saturate each group at its full model resources.
pub fn predict_utilization(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    cluster: &Cluster,
    models: &ModelSet,
    omega: f64,
) -> Result<Vec<VmUsage>> {
    let lm = LoadModel::build(df, alloc, plan, models)?;
    let rates: Vec<f64> = (0..lm.groups.len()).map(|gi| lm.incoming(gi, omega)).collect();
    utilization_for_rates(&lm.groups, &rates, cluster, models)
}

/// Full prediction report for a mapped plan: supported rate, per-slot
/// loads at that rate, per-VM utilization, and the binding group.
pub fn predict(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    cluster: &Cluster,
    models: &ModelSet,
) -> Result<Prediction> {
    let lm = LoadModel::build(df, alloc, plan, models)?;
    let rate = predict_rate(df, alloc, plan, models)?;

    let omega = if rate.is_finite() { rate } else { 0.0 };
    let mut binding: Option<(f64, BindingGroup)> = None;
    let mut slots: BTreeMap<(String, u32), SlotLoad> = BTreeMap::new();
    for (gi, g) in lm.groups.iter().enumerate() {
        let incoming = lm.incoming(gi, omega);
        let capacity = lm.capacities[gi];
        if let Some(cap) = capacity {
            let ratio = if cap > EPS { incoming / cap } else { f64::INFINITY };
            if binding.as_ref().map_or(true, |(best, _)| ratio > *best) {
                binding = Some((
                    ratio,
                    BindingGroup {
                        vm: g.vm.clone(),
                        slot: g.slot,
                        task: g.task.clone(),
                        mixed: lm.mixed[gi],
                    },
                ));
            }
        }
        slots
            .entry((g.vm.clone(), g.slot))
            .or_insert_with(|| SlotLoad { vm: g.vm.clone(), slot: g.slot, entries: Vec::new() })
            .entries
            .push(SlotTaskLoad {
                task: g.task.clone(),
                threads: g.threads,
                incoming,
                capacity,
                mixed: lm.mixed[gi],
            });
    }

    let rates: Vec<f64> = (0..lm.groups.len()).map(|gi| lm.incoming(gi, omega)).collect();
    let vms = utilization_for_rates(&lm.groups, &rates, cluster, models)?;

    Ok(Prediction {
        predicted_rate: rate,
        vms,
        slots: slots.into_values().collect(),
        binding: binding.map(|(_, b)| b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{Algorithm, TaskAllocation};
    use crate::dagcore::{StreamEdge, TaskDef};
    use crate::mapping::{Assignment, ClusterVm};
    use crate::perfmodel::fixtures;

    #[test]
    fn shuffle_split_proportional() {
        let split = shuffle_split(100.0, &[60, 60, 40]).unwrap();
        assert_eq!(split, vec![37.5, 37.5, 25.0]);
    }

    #[test]
    fn shuffle_split_single_slot() {
        assert_eq!(shuffle_split(100.0, &[8]).unwrap(), vec![100.0]);
    }

    #[test]
    fn shuffle_split_zero_rate() {
        assert_eq!(shuffle_split(0.0, &[3, 2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn shuffle_split_zero_threads_errors() {
        assert!(shuffle_split(10.0, &[]).is_err());
        assert!(shuffle_split(10.0, &[0, 0]).is_err());
    }

    fn table_dag() -> Dataflow {
        Dataflow::new(
            vec![TaskDef::source("src"), TaskDef::new("t", "azure-table"), TaskDef::sink("sink")],
            vec![StreamEdge::unit("src", "t"), StreamEdge::unit("t", "sink")],
        )
    }

    /// Hand-built mapping: table threads split (2,2,2,2,9) over five
    /// single-task slots; src/sink parked on a sixth.
    fn table_mapping(threads: &[u32]) -> (AllocationPlan, MappingPlan, Cluster) {
        let total: u32 = threads.iter().sum();
        let alloc = AllocationPlan {
            algorithm: Algorithm::Lsa,
            omega: 0.0,
            rho: threads.len() as u32 + 1,
            tasks: vec![
                TaskAllocation { id: "src".into(), threads: 1, cpu_pct: 10.0, mem_pct: 15.0 },
                TaskAllocation {
                    id: "t".into(),
                    threads: total,
                    cpu_pct: total as f64,
                    mem_pct: total as f64,
                },
                TaskAllocation { id: "sink".into(), threads: 1, cpu_pct: 10.0, mem_pct: 20.0 },
            ],
        };
        let mut assignments = Vec::new();
        let mut ordinal = 1;
        for (slot, &q) in threads.iter().enumerate() {
            for _ in 0..q {
                assignments.push(Assignment {
                    task: "t".into(),
                    ordinal,
                    vm: "v1".into(),
                    slot: slot as u32,
                });
                ordinal += 1;
            }
        }
        let aux = threads.len() as u32;
        assignments.push(Assignment { task: "src".into(), ordinal: 1, vm: "v1".into(), slot: aux });
        assignments.push(Assignment { task: "sink".into(), ordinal: 1, vm: "v1".into(), slot: aux });
        let plan = MappingPlan { algorithm: MapAlgorithm::Rsm, extra_slots: 0, assignments };
        let cluster = Cluster {
            vms: vec![ClusterVm { id: "v1".into(), size: "big".into(), slots: aux + 1, rack: None }],
        };
        (alloc, plan, cluster)
    }

    #[test]
    fn predict_rate_table_split_binds_at_thirty() {
        // Four slots of 2 threads support 5 t/s each and one slot of 9
        // supports 10 t/s; the task tops out at 4*5 + 10 = 30 t/s, and
        // the 2-thread slots bind first (5 / (2/17) = 42.5 vs 10 / (9/17)
        // = 18.9 ... the 9-thread slot actually binds).
        let df = table_dag();
        let (alloc, plan, _cluster) = table_mapping(&[2, 2, 2, 2, 9]);
        let rate = predict_rate(&df, &alloc, &plan, &fixtures::all()).unwrap();
        // Slot-level bound: min over slots of cap / share. Shares are
        // 2/17 and 9/17, caps 5 and 10.
        let expected = f64::min(10.0 / (9.0 / 17.0), 5.0 / (2.0 / 17.0));
        assert!((rate - expected).abs() <= 0.1, "rate {rate} vs {expected}");
        // The slot composition itself supports 30 t/s at the task level.
        let caps: f64 = [2, 2, 2, 2, 9]
            .iter()
            .map(|&q| fixtures::builtin("azure-table").unwrap().peak_rate(q))
            .sum();
        assert_eq!(caps, 30.0);
    }

    #[test]
    fn predict_rate_single_slot_inverts_get_rate() {
        let df = table_dag();
        let (alloc, plan, _) = table_mapping(&[9]);
        let rate = predict_rate(&df, &alloc, &plan, &fixtures::all()).unwrap();
        assert!((rate - 10.0).abs() <= 0.1, "rate {rate}");
    }

    #[test]
    fn predict_rate_scales_with_capacity() {
        // Doubling every capacity doubles the predicted rate on a 1:1
        // chain: compare the table mapping against one with each knot's
        // rate doubled.
        let df = table_dag();
        let (alloc, plan, _) = table_mapping(&[2, 2, 2, 2, 9]);
        let models = fixtures::all();
        let base = predict_rate(&df, &alloc, &plan, &models).unwrap();

        let mut doubled = models.clone();
        let t = doubled.get_mut("azure-table").unwrap();
        for p in &mut t.points {
            p.peak_rate *= 2.0;
        }
        let twice = predict_rate(&df, &alloc, &plan, &doubled).unwrap();
        assert!((twice - 2.0 * base).abs() <= 0.3, "{twice} vs 2*{base}");
    }

    #[test]
    fn utilization_scales_resources_by_rate_share() {
        // One parse thread per slot, two slots, offered 480 total: each
        // thread sees 240 against a 310 peak, so resources scale by
        // 240/310.
        let df = Dataflow::new(
            vec![TaskDef::source("src"), TaskDef::new("t", "parse-xml"), TaskDef::sink("sink")],
            vec![StreamEdge::unit("src", "t"), StreamEdge::unit("t", "sink")],
        );
        let alloc = AllocationPlan {
            algorithm: Algorithm::Lsa,
            omega: 480.0,
            rho: 3,
            tasks: vec![
                TaskAllocation { id: "src".into(), threads: 1, cpu_pct: 10.0, mem_pct: 15.0 },
                TaskAllocation { id: "t".into(), threads: 2, cpu_pct: 170.0, mem_pct: 70.0 },
                TaskAllocation { id: "sink".into(), threads: 1, cpu_pct: 10.0, mem_pct: 20.0 },
            ],
        };
        let assignments = vec![
            Assignment { task: "src".into(), ordinal: 1, vm: "v1".into(), slot: 2 },
            Assignment { task: "t".into(), ordinal: 1, vm: "v1".into(), slot: 0 },
            Assignment { task: "t".into(), ordinal: 2, vm: "v1".into(), slot: 1 },
            Assignment { task: "sink".into(), ordinal: 1, vm: "v1".into(), slot: 2 },
        ];
        let plan = MappingPlan { algorithm: MapAlgorithm::Dsm, extra_slots: 0, assignments };
        let cluster = Cluster {
            vms: vec![ClusterVm { id: "v1".into(), size: "D3".into(), slots: 4, rack: None }],
        };
        let usage =
            predict_utilization(&df, &alloc, &plan, &cluster, &fixtures::all(), 480.0).unwrap();
        let scale = 240.0 / 310.0;
        // Two parse threads plus fixed src/sink constants.
        let want_cpu = 2.0 * 85.0 * scale + 10.0 + 10.0;
        let want_mem = 2.0 * 35.0 * scale + 15.0 + 20.0;
        assert!((usage[0].cpu - want_cpu).abs() < 1e-9);
        assert!((usage[0].mem - want_mem).abs() < 1e-9);
    }

    #[test]
    fn utilization_at_peak_rate_is_unscaled() {
        let df = table_dag();
        let (alloc, plan, cluster) = table_mapping(&[9]);
        let models = fixtures::all();
        let usage = predict_utilization(&df, &alloc, &plan, &cluster, &models, 10.0).unwrap();
        let (c9, m9) = models["azure-table"].resources(9);
        assert!((usage[0].cpu - (c9 + 20.0)).abs() < 1e-9);
        assert!((usage[0].mem - (m9 + 35.0)).abs() < 1e-9);
    }

    #[test]
    fn utilization_zero_rate_is_zero() {
        let df = table_dag();
        let (alloc, plan, cluster) = table_mapping(&[9]);
        let usage =
            predict_utilization(&df, &alloc, &plan, &cluster, &fixtures::all(), 0.0).unwrap();
        assert_eq!((usage[0].cpu, usage[0].mem), (0.0, 0.0));
    }

    #[test]
    fn conservation_of_split_rates() {
        let df = table_dag();
        let (alloc, plan, _) = table_mapping(&[2, 2, 2, 2, 9]);
        let models = fixtures::all();
        let pred = predict(&df, &alloc, &plan, &models_cluster(), &models).unwrap();
        let omega = pred.predicted_rate;
        let total: f64 = pred
            .slots
            .iter()
            .flat_map(|s| &s.entries)
            .filter(|e| e.task == "t")
            .map(|e| e.incoming)
            .sum();
        assert!((total - omega).abs() < 1e-6, "split sums to the task rate");
    }

    fn models_cluster() -> Cluster {
        Cluster {
            vms: vec![ClusterVm { id: "v1".into(), size: "big".into(), slots: 6, rack: None }],
        }
    }

    #[test]
    fn unknown_kind_errors() {
        let df = Dataflow::new(
            vec![TaskDef::new("t", "mystery")],
            vec![],
        );
        let alloc = AllocationPlan {
            algorithm: Algorithm::Lsa,
            omega: 1.0,
            rho: 1,
            tasks: vec![TaskAllocation { id: "t".into(), threads: 1, cpu_pct: 1.0, mem_pct: 1.0 }],
        };
        let plan = MappingPlan {
            algorithm: MapAlgorithm::Rsm,
            extra_slots: 0,
            assignments: vec![Assignment { task: "t".into(), ordinal: 1, vm: "v1".into(), slot: 0 }],
        };
        assert!(matches!(
            predict_rate(&df, &alloc, &plan, &ModelSet::new()),
            Err(Error::MissingModel(_))
        ));
    }
}
