//! Resource mapping: VM acquisition for a slot count and the assignment
//! of every task thread to a (VM, slot) pair.
//!
//! Three mappers are provided. DSM round-robins threads over slots with
//! no resource awareness. RSM places one thread per task per sweep on the
//! minimum-distance VM that still has CPU at the VM level and memory in
//! some slot. SAM places whole bundles of one task's threads onto
//! exclusive slots and best-fits each task's final partial bundle.
//!
//! All tie-breaking is fixed (lowest VM id, then lowest slot index;
//! threads enumerated in task topological order, ordinal ascending) so a
//! given input always produces the same plan.

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPlan;
use crate::dagcore::{self, Dataflow};
use crate::perfmodel::ModelSet;
use crate::{Error, Result};

const EPS: f64 = 1e-9;

/// A VM size in the acquisition catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmSpec {
    pub size: String,
    pub slots: u32,
    pub price_per_hour: f64,
}

/// D-series catalog: slots in powers of two, price proportional to slots.
pub fn default_catalog() -> Vec<VmSpec> {
    vec![
        VmSpec { size: "D1".into(), slots: 1, price_per_hour: 0.098 },
        VmSpec { size: "D2".into(), slots: 2, price_per_hour: 0.196 },
        VmSpec { size: "D3".into(), slots: 4, price_per_hour: 0.392 },
        VmSpec { size: "D4".into(), slots: 8, price_per_hour: 0.784 },
    ]
}

/// Catalog restricted to the sizes used for the reference experiments.
pub fn experiment_catalog() -> Vec<VmSpec> {
    default_catalog().into_iter().filter(|v| v.slots <= 4).collect()
}

/// One acquired VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVm {
    pub id: String,
    pub size: String,
    pub slots: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rack: Option<String>,
}

/// The acquired cluster, VMs in acquisition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub vms: Vec<ClusterVm>,
}

impl Cluster {
    pub fn total_slots(&self) -> u32 {
        self.vms.iter().map(|v| v.slots).sum()
    }

    /// Slots in deterministic order: VM acquisition order, then slot index.
    pub fn slots(&self) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        for (vi, vm) in self.vms.iter().enumerate() {
            for s in 0..vm.slots {
                out.push((vi, s));
            }
        }
        out
    }

    pub fn price_per_hour(&self, catalog: &[VmSpec]) -> f64 {
        self.vms
            .iter()
            .map(|vm| {
                catalog
                    .iter()
                    .find(|c| c.size == vm.size)
                    .map(|c| c.price_per_hour)
                    .unwrap_or(0.0)
            })
            .sum()
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Acquires VMs for `rho` slots: as many of the largest size as fit
/// within `rho`, then the smallest size that covers the remainder. With a
/// powers-of-two catalog the overshoot is at most `2^(p_max - 1) - 1`.
pub fn acquire_vms(rho: u32, catalog: &[VmSpec]) -> Result<Cluster> {
    if rho == 0 {
        return Err(Error::Config("cannot acquire a cluster for 0 slots".into()));
    }
    if catalog.is_empty() {
        return Err(Error::Config("empty VM catalog".into()));
    }
    let largest = catalog.iter().max_by_key(|v| v.slots).unwrap();
    let n = rho / largest.slots;
    let remainder = rho - n * largest.slots;

    let mut sizes: Vec<&VmSpec> = std::iter::repeat(largest).take(n as usize).collect();
    if remainder > 0 {
        let cover = catalog
            .iter()
            .filter(|v| v.slots >= remainder)
            .min_by_key(|v| v.slots)
            .expect("largest size covers any remainder");
        sizes.push(cover);
    }

    let vms = sizes
        .into_iter()
        .enumerate()
        .map(|(i, spec)| ClusterVm {
            id: format!("v{}", i + 1),
            size: spec.size.clone(),
            slots: spec.slots,
            rack: None,
        })
        .collect();
    Ok(Cluster { vms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapAlgorithm {
    #[serde(rename = "DSM")]
    Dsm,
    #[serde(rename = "RSM")]
    Rsm,
    #[serde(rename = "SAM")]
    Sam,
}

impl std::fmt::Display for MapAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapAlgorithm::Dsm => "DSM",
            MapAlgorithm::Rsm => "RSM",
            MapAlgorithm::Sam => "SAM",
        })
    }
}

/// One thread-to-slot assignment. `ordinal` runs 1..=threads within the
/// task; `slot` is the slot index within the VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: String,
    pub ordinal: u32,
    pub vm: String,
    pub slot: u32,
}

/// Total mapping of every allocated thread to a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub algorithm: MapAlgorithm,
    /// Slots added beyond the allocation's slot count by the retry loop.
    pub extra_slots: u32,
    pub assignments: Vec<Assignment>,
}

impl MappingPlan {
    /// Thread counts per (vm, slot, task), in deterministic order.
    pub fn slot_groups(&self) -> Vec<(String, u32, String, u32)> {
        let mut counts: std::collections::BTreeMap<(String, u32, String), u32> =
            std::collections::BTreeMap::new();
        for a in &self.assignments {
            *counts.entry((a.vm.clone(), a.slot, a.task.clone())).or_insert(0) += 1;
        }
        counts.into_iter().map(|((vm, slot, task), n)| (vm, slot, task, n)).collect()
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Threads in enumeration order: tasks topologically, ordinals ascending.
fn thread_order(df: &Dataflow, alloc: &AllocationPlan) -> Result<Vec<(String, u32)>> {
    let order = dagcore::topo_order(df)?;
    let mut threads = Vec::new();
    for id in order {
        let ta = alloc
            .task(&id)
            .ok_or_else(|| Error::Config(format!("allocation missing task `{id}`")))?;
        for k in 1..=ta.threads {
            threads.push((id.clone(), k));
        }
    }
    Ok(threads)
}

/// Round-robin mapping: thread `n` (0-based, enumeration order) goes to
/// slot `n mod |S|`. Not resource aware; cannot fail.
pub fn map_dsm(df: &Dataflow, alloc: &AllocationPlan, cluster: &Cluster) -> Result<MappingPlan> {
    let slots = cluster.slots();
    if slots.is_empty() {
        return Err(Error::Config("cluster has no slots".into()));
    }
    let assignments = thread_order(df, alloc)?
        .into_iter()
        .enumerate()
        .map(|(n, (task, ordinal))| {
            let (vi, slot) = slots[n % slots.len()];
            Assignment { task, ordinal, vm: cluster.vms[vi].id.clone(), slot }
        })
        .collect();
    Ok(MappingPlan { algorithm: MapAlgorithm::Dsm, extra_slots: 0, assignments })
}

/// Distance weights for RSM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_c: f64,
    pub w_m: f64,
    pub w_n: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { w_c: 1.0, w_m: 1.0, w_n: 1.0 }
    }
}

/// Network distance multiplier between a candidate VM and the reference
/// VM (the one that took the previous thread): 0 on the same VM, 0.5 in
/// the same rack, 1.0 across racks. Undeclared racks share one rack.
pub fn nw_dist(candidate: &ClusterVm, reference: &ClusterVm) -> f64 {
    if candidate.id == reference.id {
        0.0
    } else if candidate.rack == reference.rack {
        0.5
    } else {
        1.0
    }
}

/// RSM distance between a VM's free resources and one thread's footprint.
/// Resources enter as fractions of a slot (1.0 = one full slot), keeping
/// the squared terms comparable to the network multiplier.
pub fn rsm_distance(
    avail_cpu: f64,
    avail_mem: f64,
    need_cpu: f64,
    need_mem: f64,
    network: f64,
    w: Weights,
) -> f64 {
    w.w_m * (avail_mem - need_mem).powi(2) + w.w_c * (avail_cpu - need_cpu).powi(2) + w.w_n * network
}

/// Single-thread footprint (CPU%, mem%) per task: the fixed override when
/// present, the single-thread model point otherwise.
fn footprints(df: &Dataflow, models: &ModelSet) -> Result<std::collections::BTreeMap<String, (f64, f64)>> {
    let mut out = std::collections::BTreeMap::new();
    for t in &df.tasks {
        let fp = if let Some(fixed) = &t.fixed {
            (fixed.cpu, fixed.mem)
        } else {
            let m = models.get(&t.kind).ok_or_else(|| Error::MissingModel(t.kind.clone()))?;
            m.resources(1)
        };
        out.insert(t.id.clone(), fp);
    }
    Ok(out)
}

/// Resource-aware mapping with the RSM distance function. CPU is checked
/// and charged at the VM level, memory at both the VM and slot level, so
/// a thread needs a slot with free memory but may draw CPU from anywhere
/// in the VM.
pub fn map_rsm(
    df: &Dataflow,
    alloc: &AllocationPlan,
    cluster: &Cluster,
    models: &ModelSet,
    weights: Weights,
) -> Result<MappingPlan> {
    let order = dagcore::topo_order(df)?;
    let fp = footprints(df, models)?;

    let mut vm_cpu: Vec<f64> = cluster.vms.iter().map(|v| v.slots as f64 * 100.0).collect();
    let mut vm_mem: Vec<f64> = cluster.vms.iter().map(|v| v.slots as f64 * 100.0).collect();
    let mut slot_mem: Vec<Vec<f64>> =
        cluster.vms.iter().map(|v| vec![100.0; v.slots as usize]).collect();

    let mut pending: std::collections::BTreeMap<&str, u32> = std::collections::BTreeMap::new();
    for id in &order {
        let ta = alloc
            .task(id)
            .ok_or_else(|| Error::Config(format!("allocation missing task `{id}`")))?;
        pending.insert(id.as_str(), ta.threads);
    }

    let mut next_ordinal: std::collections::BTreeMap<&str, u32> =
        order.iter().map(|id| (id.as_str(), 1u32)).collect();
    let mut reference = 0usize;
    let mut assignments = Vec::new();

    while pending.values().any(|n| *n > 0) {
        for id in &order {
            if pending[id.as_str()] == 0 {
                continue;
            }
            let (need_c, need_m) = fp[id.as_str()];

            // VMs in ascending distance order; ties by VM index.
            let mut ranked: Vec<(f64, usize)> = (0..cluster.vms.len())
                .map(|vi| {
                    let d = rsm_distance(
                        vm_cpu[vi] / 100.0,
                        vm_mem[vi] / 100.0,
                        need_c / 100.0,
                        need_m / 100.0,
                        nw_dist(&cluster.vms[vi], &cluster.vms[reference]),
                        weights,
                    );
                    (d, vi)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut chosen = None;
            for (_, vi) in ranked {
                if vm_cpu[vi] + EPS < need_c {
                    continue;
                }
                if let Some(si) = slot_mem[vi].iter().position(|m| *m + EPS >= need_m) {
                    chosen = Some((vi, si));
                    break;
                }
            }
            let Some((vi, si)) = chosen else {
                return Err(Error::InsufficientResources { task: id.clone() });
            };

            vm_cpu[vi] -= need_c;
            vm_mem[vi] -= need_m;
            slot_mem[vi][si] -= need_m;
            reference = vi;

            let ordinal = next_ordinal.get_mut(id.as_str()).unwrap();
            assignments.push(Assignment {
                task: id.clone(),
                ordinal: *ordinal,
                vm: cluster.vms[vi].id.clone(),
                slot: si as u32,
            });
            *ordinal += 1;
            *pending.get_mut(id.as_str()).unwrap() -= 1;
        }
    }

    Ok(MappingPlan { algorithm: MapAlgorithm::Rsm, extra_slots: 0, assignments })
}

/// Per-task bundle shape under SAM: how many threads make a full bundle
/// and what the final partial bundle costs.
#[derive(Debug, Clone, Copy)]
struct BundleShape {
    full_size: Option<u32>,
    residual_cpu: f64,
    residual_mem: f64,
}

fn bundle_shapes(
    df: &Dataflow,
    alloc: &AllocationPlan,
    models: &ModelSet,
) -> Result<std::collections::BTreeMap<String, BundleShape>> {
    let mut out = std::collections::BTreeMap::new();
    for t in &df.tasks {
        let ta = alloc
            .task(&t.id)
            .ok_or_else(|| Error::Config(format!("allocation missing task `{}`", t.id)))?;
        let shape = if let Some(fixed) = &t.fixed {
            BundleShape { full_size: None, residual_cpu: fixed.cpu, residual_mem: fixed.mem }
        } else {
            let m = models.get(&t.kind).ok_or_else(|| Error::MissingModel(t.kind.clone()))?;
            let (_, tau_hat) = m.max_peak();
            let fulls = ta.threads / tau_hat;
            BundleShape {
                full_size: Some(tau_hat),
                residual_cpu: (ta.cpu_pct - fulls as f64 * 100.0).max(0.0),
                residual_mem: (ta.mem_pct - fulls as f64 * 100.0).max(0.0),
            }
        };
        out.insert(t.id.clone(), shape);
    }
    Ok(out)
}

/// Slot-aware mapping: while a task still has a full bundle of threads,
/// the bundle takes the next wholly empty slot and all of it; the final
/// partial bundle goes to the best-fit partially used slot (smallest free
/// CPU+memory sum that still fits), falling back to an empty slot so the
/// incremental-slot retry loop can terminate.
pub fn map_sam(
    df: &Dataflow,
    alloc: &AllocationPlan,
    cluster: &Cluster,
    models: &ModelSet,
) -> Result<MappingPlan> {
    let order = dagcore::topo_order(df)?;
    let shapes = bundle_shapes(df, alloc, models)?;
    let slots = cluster.slots();

    let mut avail: Vec<(f64, f64)> = vec![(100.0, 100.0); slots.len()];
    let mut occupied = vec![false; slots.len()];

    let mut pending: std::collections::BTreeMap<&str, u32> = std::collections::BTreeMap::new();
    for id in &order {
        pending.insert(id.as_str(), alloc.task(id).unwrap().threads);
    }
    let mut next_ordinal: std::collections::BTreeMap<&str, u32> =
        order.iter().map(|id| (id.as_str(), 1u32)).collect();
    let mut assignments = Vec::new();

    let assign_group = |task: &str,
                            count: u32,
                            slot_idx: usize,
                            next_ordinal: &mut std::collections::BTreeMap<&str, u32>,
                            assignments: &mut Vec<Assignment>| {
        let (vi, si) = slots[slot_idx];
        let ordinal = next_ordinal.get_mut(task).unwrap();
        for _ in 0..count {
            assignments.push(Assignment {
                task: task.to_string(),
                ordinal: *ordinal,
                vm: cluster.vms[vi].id.clone(),
                slot: si,
            });
            *ordinal += 1;
        }
    };

    while pending.values().any(|n| *n > 0) {
        let mut progressed = false;
        for id in &order {
            let left = pending[id.as_str()];
            if left == 0 {
                continue;
            }
            let shape = &shapes[id.as_str()];

            match shape.full_size {
                Some(full) if left >= full => {
                    // Full bundle onto the next wholly empty slot,
                    // consuming it entirely.
                    let Some(slot_idx) = occupied.iter().position(|o| !*o) else {
                        return Err(Error::InsufficientResources { task: id.clone() });
                    };
                    assign_group(id, full, slot_idx, &mut next_ordinal, &mut assignments);
                    avail[slot_idx] = (0.0, 0.0);
                    occupied[slot_idx] = true;
                    *pending.get_mut(id.as_str()).unwrap() -= full;
                }
                _ => {
                    // Partial bundle: best-fit partially used slot, else
                    // an empty one.
                    let (need_c, need_m) = (shape.residual_cpu, shape.residual_mem);
                    let fits = |i: usize| {
                        avail[i].0 + EPS >= need_c && avail[i].1 + EPS >= need_m
                    };
                    let best_partial = (0..slots.len())
                        .filter(|&i| occupied[i] && (avail[i].0 > EPS || avail[i].1 > EPS))
                        .filter(|&i| fits(i))
                        .min_by(|&a, &b| {
                            let sa = avail[a].0 + avail[a].1;
                            let sb = avail[b].0 + avail[b].1;
                            sa.total_cmp(&sb).then(a.cmp(&b))
                        });
                    let slot_idx = best_partial
                        .or_else(|| (0..slots.len()).find(|&i| !occupied[i]))
                        .ok_or_else(|| Error::InsufficientResources { task: id.clone() })?;

                    assign_group(id, left, slot_idx, &mut next_ordinal, &mut assignments);
                    avail[slot_idx].0 = (avail[slot_idx].0 - need_c).max(0.0);
                    avail[slot_idx].1 = (avail[slot_idx].1 - need_m).max(0.0);
                    occupied[slot_idx] = true;
                    *pending.get_mut(id.as_str()).unwrap() = 0;
                }
            }
            progressed = true;
        }
        debug_assert!(progressed, "every sweep either places threads or errors");
    }

    Ok(MappingPlan { algorithm: MapAlgorithm::Sam, extra_slots: 0, assignments })
}

/// Runs one mapper by name. SAM consumes the MBA residual bookkeeping, so
/// it requires an MBA allocation.
pub fn map(
    algorithm: MapAlgorithm,
    df: &Dataflow,
    alloc: &AllocationPlan,
    cluster: &Cluster,
    models: &ModelSet,
    weights: Weights,
) -> Result<MappingPlan> {
    if algorithm == MapAlgorithm::Sam && alloc.algorithm != crate::allocation::Algorithm::Mba {
        return Err(Error::Config(
            "SAM mapping requires an MBA allocation (it consumes per-task residual resources)"
                .into(),
        ));
    }
    match algorithm {
        MapAlgorithm::Dsm => map_dsm(df, alloc, cluster),
        MapAlgorithm::Rsm => map_rsm(df, alloc, cluster, models, weights),
        MapAlgorithm::Sam => map_sam(df, alloc, cluster, models),
    }
}

/// Maps with the incremental-slot retry loop: on an insufficient-resources
/// failure the cluster is re-acquired with one more slot, up to
/// `max_extra` beyond the allocation's slot count.
pub fn map_with_retry(
    algorithm: MapAlgorithm,
    df: &Dataflow,
    alloc: &AllocationPlan,
    catalog: &[VmSpec],
    models: &ModelSet,
    weights: Weights,
    max_extra: u32,
) -> Result<(MappingPlan, Cluster)> {
    let mut last_err = None;
    for extra in 0..=max_extra {
        let cluster = acquire_vms(alloc.rho + extra, catalog)?;
        match map(algorithm, df, alloc, &cluster, models, weights) {
            Ok(mut plan) => {
                plan.extra_slots = extra;
                return Ok((plan, cluster));
            }
            Err(e @ Error::InsufficientResources { .. }) => last_err = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(Error::RetryExhausted {
        extra: max_extra,
        source: Box::new(last_err.expect("at least one attempt ran")),
    })
}
