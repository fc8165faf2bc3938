//! Deterministic discrete-event simulation of a mapped dataflow.
//!
//! Sources emit tuples with Poisson arrivals at the offered rate. Every
//! (slot, task) thread group is a FIFO queue served at the group's
//! modeled capacity with exponential service times, so overload shows up
//! as the real system's exponential latency blow-up. Tuples route per
//! duplicate semantics across out-edges and round-robin across the
//! downstream task's threads (shuffle grouping). End-to-end latency is
//! recorded at the sinks past warm-up, and the run is stable when the
//! latency slope stays under the ceiling and no queue keeps growing.
//!
//! All randomness comes from counter-derived streams of the config seed,
//! so identical inputs produce identical reports.

use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPlan;
use crate::dagcore::{self, Dataflow};
use crate::mapping::{Cluster, MappingPlan};
use crate::perfmodel::{detect_stability, ModelSet, LAMBDA_LATENCY_MAX};
use crate::predictor::{self, Prediction, VmUsage};
use crate::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated seconds.
    pub duration: f64,
    /// Samples and stats start after this many simulated seconds.
    pub warmup: f64,
    pub seed: u64,
    /// Stats sampling quantum, seconds.
    pub tick: f64,
    /// Offered DAG input rate, tuples/sec.
    pub omega: f64,
    /// Stop emitting at this time but keep serving until `duration`,
    /// letting queues drain (used by conservation checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_stop: Option<f64>,
    /// Latency-slope ceiling for the stability verdict.
    #[serde(default = "default_lambda")]
    pub lambda_max: f64,
    /// Record a per-tuple (id, emit, sink) trace.
    #[serde(default)]
    pub record_trace: bool,
}

fn default_lambda() -> f64 {
    LAMBDA_LATENCY_MAX
}

impl SimConfig {
    /// Desk-scale defaults: 120 simulated seconds with a 20 s warm-up.
    pub fn desk(omega: f64, seed: u64) -> Self {
        SimConfig {
            duration: 120.0,
            warmup: 20.0,
            seed,
            tick: 1.0,
            omega,
            source_stop: None,
            lambda_max: LAMBDA_LATENCY_MAX,
            record_trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.warmup < self.duration) {
            return Err(Error::Config("warmup must be shorter than duration".into()));
        }
        if !(self.tick > 0.0) {
            return Err(Error::Config("tick must be positive".into()));
        }
        if self.omega < 0.0 || !self.omega.is_finite() {
            return Err(Error::Config("omega must be a non-negative rate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    /// Least-squares slope of latency (ms) over sink-arrival index.
    pub slope: f64,
    pub samples: usize,
}

/// Post-run stats for one (slot, task) thread group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub vm: String,
    pub slot: u32,
    pub task: String,
    pub threads: u32,
    /// Modeled service rate; absent for fixed-resource tasks, which
    /// forward instantly.
    pub capacity: Option<f64>,
    pub arrivals: u64,
    pub completions: u64,
    /// Post-warm-up arrival rate, tuples/sec.
    pub observed_rate: f64,
    /// Time-average number in system past warm-up.
    pub mean_in_system: f64,
    /// Mean sojourn (queue + service) in ms past warm-up.
    pub mean_wait_ms: f64,
    pub max_queue: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub offered_rate: f64,
    pub stable: bool,
    pub latency: LatencyStats,
    /// True when some group's queue kept growing through the run.
    pub queue_growth: bool,
    pub vms: Vec<VmUsage>,
    /// Post-warm-up completions per second per task.
    pub task_throughput: BTreeMap<String, f64>,
    pub groups: Vec<GroupReport>,
    pub emitted: u64,
    pub absorbed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

/// One sink arrival: (tuple id, emit time, sink time).
pub type TraceRow = (u64, f64, f64);

#[derive(Debug, Clone, Copy)]
enum EvKind {
    Emit { task: usize },
    Done { group: usize },
    Tick,
}

struct Ev {
    time: f64,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    // Min-heap on (time, seq) under std's max-heap.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Tuple {
    id: u64,
    emit: f64,
    arrived: f64,
}

struct Group {
    task: usize,
    capacity: Option<f64>,
    queue: VecDeque<Tuple>,
    in_service: Option<Tuple>,
    rng: ChaCha8Rng,
    arrivals_total: u64,
    arrivals_post: u64,
    completions_post: u64,
    sojourn_sum: f64,
    area: f64,
    last_t: f64,
    max_queue: usize,
    samples: Vec<u32>,
}

impl Group {
    fn in_system(&self) -> usize {
        self.queue.len() + self.in_service.is_some() as usize
    }

    /// Accumulates the in-system integral up to `t`; call before any
    /// queue change.
    fn advance(&mut self, t: f64, warmup: f64) {
        let lo = self.last_t.max(warmup);
        if t > lo {
            self.area += self.in_system() as f64 * (t - lo);
        }
        self.last_t = self.last_t.max(t);
    }
}

/// Deterministic sub-stream of the run seed for a named entity.
fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a: stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen_range(0.0..1.0);
    -(1.0 - u).ln() / rate
}

struct Sim<'a> {
    config: &'a SimConfig,
    order: Vec<String>,
    groups: Vec<Group>,
    /// Per task: group index of each thread, ordinal ascending.
    thread_groups: Vec<Vec<usize>>,
    /// Per task: (target task, selectivity, fractional credit).
    out_edges: Vec<Vec<(usize, f64, f64)>>,
    rr: Vec<usize>,
    is_fixed: Vec<bool>,
    source_rngs: Vec<(usize, ChaCha8Rng)>,
    heap: BinaryHeap<Ev>,
    seq: u64,
    next_id: u64,
    emitted: u64,
    absorbed: u64,
    latencies: Vec<(f64, f64)>,
    trace: Vec<TraceRow>,
}

impl<'a> Sim<'a> {
    fn push(&mut self, time: f64, kind: EvKind) {
        self.seq += 1;
        self.heap.push(Ev { time, seq: self.seq, kind });
    }

    fn route_out(&mut self, task: usize, tuple: Tuple, now: f64) {
        if self.out_edges[task].is_empty() {
            // Terminal task: the tuple leaves the DAG here.
            self.absorbed += 1;
            if now >= self.config.warmup {
                self.latencies.push((now, (now - tuple.emit) * 1000.0));
            }
            if self.config.record_trace {
                self.trace.push((tuple.id, tuple.emit, now));
            }
            return;
        }
        for ei in 0..self.out_edges[task].len() {
            let (to, sel, _) = self.out_edges[task][ei];
            self.out_edges[task][ei].2 += sel;
            let n = self.out_edges[task][ei].2.floor() as u64;
            self.out_edges[task][ei].2 -= n as f64;
            for _ in 0..n {
                self.deliver(to, Tuple { id: tuple.id, emit: tuple.emit, arrived: now }, now);
            }
        }
    }

    fn deliver(&mut self, task: usize, tuple: Tuple, now: f64) {
        let slot = self.rr[task] % self.thread_groups[task].len();
        self.rr[task] += 1;
        let gid = self.thread_groups[task][slot];
        let warmup = self.config.warmup;

        let instant = {
            let g = &mut self.groups[gid];
            g.arrivals_total += 1;
            if now >= warmup {
                g.arrivals_post += 1;
            }
            self.is_fixed[task] || g.capacity.is_none()
        };

        if instant {
            // Fixed tasks serve instantly: sinks absorb, anything else
            // forwards in place.
            if now >= warmup {
                self.groups[gid].completions_post += 1;
            }
            self.route_out(task, tuple, now);
            return;
        }

        let schedule = {
            let g = &mut self.groups[gid];
            let cap = g.capacity.unwrap();
            g.advance(now, warmup);
            if g.in_service.is_none() {
                g.in_service = Some(tuple);
                (cap > EPS).then(|| exp_sample(&mut g.rng, cap))
            } else {
                g.queue.push_back(tuple);
                g.max_queue = g.max_queue.max(g.queue.len());
                None
            }
        };
        if let Some(dt) = schedule {
            self.push(now + dt, EvKind::Done { group: gid });
        }
    }

    fn on_done(&mut self, gid: usize, now: f64) {
        let warmup = self.config.warmup;
        let (tuple, task, schedule) = {
            let g = &mut self.groups[gid];
            g.advance(now, warmup);
            let Some(tuple) = g.in_service.take() else { return };
            if now >= warmup {
                g.completions_post += 1;
                g.sojourn_sum += now - tuple.arrived;
            }
            let mut schedule = None;
            if let Some(next) = g.queue.pop_front() {
                g.in_service = Some(next);
                let cap = g.capacity.unwrap();
                if cap > EPS {
                    schedule = Some(exp_sample(&mut g.rng, cap));
                }
            }
            (tuple, g.task, schedule)
        };
        if let Some(dt) = schedule {
            self.push(now + dt, EvKind::Done { group: gid });
        }
        self.route_out(task, tuple, now);
    }
}

/// Runs the simulation for one mapped plan at the configured rate.
pub fn simulate(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    cluster: &Cluster,
    models: &ModelSet,
    config: &SimConfig,
) -> Result<SimReport> {
    config.validate()?;

    // Every allocated thread must be mapped exactly once.
    let order = dagcore::topo_order(df)?;
    let mut seen: BTreeMap<(String, u32), u32> = BTreeMap::new();
    for a in &plan.assignments {
        *seen.entry((a.task.clone(), a.ordinal)).or_insert(0) += 1;
    }
    for id in &order {
        let want = alloc
            .task(id)
            .ok_or_else(|| Error::Config(format!("allocation missing task `{id}`")))?
            .threads;
        for k in 1..=want {
            match seen.get(&(id.clone(), k)) {
                Some(1) => {}
                Some(n) => {
                    return Err(Error::Config(format!(
                        "thread {k} of task `{id}` mapped {n} times"
                    )))
                }
                None => {
                    return Err(Error::Config(format!("thread {k} of task `{id}` is unmapped")))
                }
            }
        }
    }

    let (slot_groups, capacities) = predictor::slot_capacities(df, alloc, plan, models)?;

    let task_idx: BTreeMap<String, usize> =
        order.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let is_fixed: Vec<bool> =
        order.iter().map(|id| df.task(id).unwrap().fixed.is_some()).collect();

    let mut groups = Vec::with_capacity(slot_groups.len());
    for (g, cap) in slot_groups.iter().zip(&capacities) {
        groups.push(Group {
            task: task_idx[g.task.as_str()],
            capacity: *cap,
            queue: VecDeque::new(),
            in_service: None,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                &format!("grp:{}:{}:{}", g.vm, g.slot, g.task),
            )),
            arrivals_total: 0,
            arrivals_post: 0,
            completions_post: 0,
            sojourn_sum: 0.0,
            area: 0.0,
            last_t: 0.0,
            max_queue: 0,
            samples: Vec::new(),
        });
    }

    // Per task: group of each thread, ordinal ascending. Round-robin over
    // this list is shuffle grouping at thread granularity.
    let mut thread_slots: Vec<Vec<(u32, usize)>> = vec![Vec::new(); order.len()];
    for a in &plan.assignments {
        let t = task_idx[a.task.as_str()];
        let gid = slot_groups
            .iter()
            .position(|g| g.vm == a.vm && g.slot == a.slot && g.task == a.task)
            .expect("assignment has a group");
        thread_slots[t].push((a.ordinal, gid));
    }
    let thread_groups: Vec<Vec<usize>> = thread_slots
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            v.into_iter().map(|(_, gid)| gid).collect()
        })
        .collect();

    let out_edges: Vec<Vec<(usize, f64, f64)>> = order
        .iter()
        .map(|id| {
            df.out_edges(id)
                .map(|e| (task_idx[e.to.as_str()], e.selectivity.as_f64(), 0.0))
                .collect()
        })
        .collect();

    let source_rngs: Vec<(usize, ChaCha8Rng)> = df
        .source_ids()
        .iter()
        .map(|id| {
            (
                task_idx[*id],
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("src:{id}"))),
            )
        })
        .collect();

    let mut sim = Sim {
        config,
        order,
        groups,
        thread_groups,
        out_edges,
        rr: vec![0; task_idx.len()],
        is_fixed,
        source_rngs,
        heap: BinaryHeap::new(),
        seq: 0,
        next_id: 0,
        emitted: 0,
        absorbed: 0,
        latencies: Vec::new(),
        trace: Vec::new(),
    };

    if config.omega > EPS {
        for si in 0..sim.source_rngs.len() {
            let dt = exp_sample(&mut sim.source_rngs[si].1, config.omega);
            let task = sim.source_rngs[si].0;
            sim.push(dt, EvKind::Emit { task });
        }
    }
    let mut tick_t = config.warmup;
    while tick_t < config.duration {
        sim.push(tick_t, EvKind::Tick);
        tick_t += config.tick;
    }

    let stop = config.source_stop.unwrap_or(config.duration).min(config.duration);

    while let Some(ev) = sim.heap.pop() {
        if ev.time > config.duration {
            break;
        }
        match ev.kind {
            EvKind::Emit { task } => {
                if ev.time < stop {
                    let tuple = Tuple { id: sim.next_id, emit: ev.time, arrived: ev.time };
                    sim.next_id += 1;
                    sim.emitted += 1;
                    // Through the source's own thread group so its fixed
                    // resources show up in the utilization report.
                    sim.deliver(task, tuple, ev.time);
                    let si = sim
                        .source_rngs
                        .iter()
                        .position(|(t, _)| *t == task)
                        .expect("emit events only for sources");
                    let dt = exp_sample(&mut sim.source_rngs[si].1, config.omega);
                    sim.push(ev.time + dt, EvKind::Emit { task });
                }
            }
            EvKind::Done { group } => sim.on_done(group, ev.time),
            EvKind::Tick => {
                for g in &mut sim.groups {
                    g.samples.push(g.in_system() as u32);
                }
            }
        }
    }

    for g in &mut sim.groups {
        g.advance(config.duration, config.warmup);
    }

    // Queue growth: a group is growing when its in-system average over
    // the second half of the window dwarfs the first half.
    let queue_growth = sim.groups.iter().any(|g| {
        let n = g.samples.len();
        if n < 4 {
            return false;
        }
        let (a, b) = g.samples.split_at(n / 2);
        let mean = |xs: &[u32]| xs.iter().map(|x| *x as f64).sum::<f64>() / xs.len() as f64;
        mean(b) > 2.0 * mean(a) + 5.0
    });

    let slope = if sim.latencies.len() >= 2 {
        detect_stability(&sim.latencies, 0.0, config.lambda_max)?.slope
    } else {
        0.0
    };
    let stable = slope <= config.lambda_max && !queue_growth;

    let mut sorted: Vec<f64> = sim.latencies.iter().map(|(_, l)| *l).collect();
    sorted.sort_by(f64::total_cmp);
    let pick = |p: f64| -> f64 {
        if sorted.is_empty() {
            0.0
        } else {
            sorted[((sorted.len() - 1) as f64 * p).round() as usize]
        }
    };
    let latency = LatencyStats {
        mean_ms: if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 },
        p50_ms: pick(0.50),
        p99_ms: pick(0.99),
        slope,
        samples: sorted.len(),
    };

    let window = config.duration - config.warmup;
    let observed: Vec<f64> =
        sim.groups.iter().map(|g| g.arrivals_post as f64 / window).collect();
    let vms = predictor::utilization_for_rates(&slot_groups, &observed, cluster, models)?;

    let mut task_throughput: BTreeMap<String, f64> = BTreeMap::new();
    for (gi, g) in sim.groups.iter().enumerate() {
        let task = sim.order[g.task].clone();
        let _ = gi;
        *task_throughput.entry(task).or_insert(0.0) += g.completions_post as f64 / window;
    }

    let groups_report: Vec<GroupReport> = sim
        .groups
        .iter()
        .zip(&slot_groups)
        .map(|(g, sg)| GroupReport {
            vm: sg.vm.clone(),
            slot: sg.slot,
            task: sg.task.clone(),
            threads: sg.threads,
            capacity: g.capacity,
            arrivals: g.arrivals_total,
            completions: g.completions_post,
            observed_rate: g.arrivals_post as f64 / window,
            mean_in_system: g.area / window,
            mean_wait_ms: if g.completions_post > 0 {
                g.sojourn_sum / g.completions_post as f64 * 1000.0
            } else {
                0.0
            },
            max_queue: g.max_queue,
        })
        .collect();

    Ok(SimReport {
        offered_rate: config.omega,
        stable,
        latency,
        queue_growth,
        vms,
        task_throughput,
        groups: groups_report,
        emitted: sim.emitted,
        absorbed: sim.absorbed,
        trace: if config.record_trace { Some(sim.trace) } else { None },
    })
}

/// Largest multiple of `step` the mapped plan sustains: ascends from
/// `step` and stops at the first unstable rate. Returns 0 when even one
/// step is unstable.
pub fn find_max_stable_rate(
    df: &Dataflow,
    alloc: &AllocationPlan,
    plan: &MappingPlan,
    cluster: &Cluster,
    models: &ModelSet,
    step: f64,
    config: &SimConfig,
) -> Result<f64> {
    if step <= 0.0 {
        return Err(Error::Config("step must be positive".into()));
    }
    let mut last_stable = 0.0;
    let mut rate = step;
    // Hard ceiling so an unconstrained DAG cannot loop forever.
    while rate <= 1e7 {
        let cfg = SimConfig { omega: rate, ..config.clone() };
        let report = simulate(df, alloc, plan, cluster, models, &cfg)?;
        if !report.stable {
            break;
        }
        last_stable = rate;
        rate += step;
    }
    Ok(last_stable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmDelta {
    pub id: String,
    /// Predicted minus observed, percentage points.
    pub cpu_delta: f64,
    pub mem_delta: f64,
}

/// Accuracy summary from comparing a prediction against a simulation run
/// at the empirically found peak stable rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub predicted_rate: f64,
    pub actual_rate: f64,
    /// |predicted - actual| / actual; absent when either side is zero or
    /// infinite.
    pub rate_error_rel: Option<f64>,
    pub vm_deltas: Vec<VmDelta>,
    /// Squared Pearson correlation of predicted vs observed across VMs.
    pub cpu_r2: Option<f64>,
    pub mem_r2: Option<f64>,
}

fn pearson_r2(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= EPS || syy <= EPS {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r * r)
}

/// Compares a prediction against the simulator's report for the same
/// mapping; `sim.offered_rate` carries the actual peak stable rate.
pub fn compare(prediction: &Prediction, sim: &SimReport) -> CompareReport {
    let actual = sim.offered_rate;
    let rate_error_rel = if prediction.predicted_rate.is_finite() && actual > EPS {
        Some((prediction.predicted_rate - actual).abs() / actual)
    } else if prediction.predicted_rate == 0.0 && actual == 0.0 {
        Some(0.0)
    } else {
        None
    };

    let by_id: BTreeMap<&str, &VmUsage> =
        sim.vms.iter().map(|v| (v.id.as_str(), v)).collect();
    let mut vm_deltas = Vec::new();
    let mut pc = Vec::new();
    let mut ac = Vec::new();
    let mut pm = Vec::new();
    let mut am = Vec::new();
    for p in &prediction.vms {
        let (acpu, amem) = by_id.get(p.id.as_str()).map(|v| (v.cpu, v.mem)).unwrap_or((0.0, 0.0));
        vm_deltas.push(VmDelta { id: p.id.clone(), cpu_delta: p.cpu - acpu, mem_delta: p.mem - amem });
        pc.push(p.cpu);
        ac.push(acpu);
        pm.push(p.mem);
        am.push(amem);
    }

    CompareReport {
        predicted_rate: prediction.predicted_rate,
        actual_rate: actual,
        rate_error_rel,
        vm_deltas,
        cpu_r2: pearson_r2(&pc, &ac),
        mem_r2: pearson_r2(&pm, &am),
    }
}
