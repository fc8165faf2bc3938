//! Per-task performance models and the automated model builder.
//!
//! A model maps a thread count on a single resource slot to the peak
//! stable input rate the task sustains there and the CPU%/memory% it uses
//! at that rate. Queries interpolate linearly between sampled thread
//! counts and clamp outside the sampled range; extrapolating would invent
//! behavior the model never observed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

/// One sampled point: with `threads` threads on one slot the task peaked
/// at `peak_rate` tuples/sec using `cpu_pct`/`mem_pct` of the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub threads: u32,
    pub peak_rate: f64,
    #[serde(rename = "cpu")]
    pub cpu_pct: f64,
    #[serde(rename = "mem")]
    pub mem_pct: f64,
}

/// Performance model for one task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct TaskPerfModel {
    pub kind: String,
    /// Sample points, thread counts strictly increasing.
    pub points: Vec<ModelPoint>,
    /// Free-form notes on where the numbers came from; fixture files mark
    /// filled-in curve values as synthetic here.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub provenance: Value,
}

#[derive(Deserialize)]
struct RawModel {
    kind: String,
    points: Vec<ModelPoint>,
    #[serde(default)]
    provenance: Value,
}

impl TryFrom<RawModel> for TaskPerfModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let mut m = TaskPerfModel::new(raw.kind, raw.points)?;
        m.provenance = raw.provenance;
        Ok(m)
    }
}

impl TaskPerfModel {
    pub fn new(kind: impl Into<String>, points: Vec<ModelPoint>) -> Result<Self> {
        let kind = kind.into();
        if points.is_empty() {
            return Err(Error::EmptyModel(kind));
        }
        for (i, p) in points.iter().enumerate() {
            if p.threads < 1 {
                return Err(Error::Config(format!("model `{kind}`: thread count must be >= 1")));
            }
            if i > 0 && points[i - 1].threads >= p.threads {
                return Err(Error::Config(format!(
                    "model `{kind}`: thread counts must be strictly increasing"
                )));
            }
            if p.peak_rate <= 0.0 || p.cpu_pct < 0.0 || p.mem_pct < 0.0 {
                return Err(Error::Config(format!(
                    "model `{kind}`: point at {} threads has out-of-range values",
                    p.threads
                )));
            }
        }
        Ok(TaskPerfModel { kind, points, provenance: Value::Null })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn max_threads(&self) -> u32 {
        self.points.last().unwrap().threads
    }

    /// Linear interpolation of `f(point)` at thread count `q`, clamped to
    /// the sampled range on both sides.
    fn interp(&self, q: u32, f: impl Fn(&ModelPoint) -> f64) -> f64 {
        let pts = &self.points;
        if q <= pts[0].threads {
            return f(&pts[0]);
        }
        if q >= pts[pts.len() - 1].threads {
            return f(&pts[pts.len() - 1]);
        }
        let hi = pts.partition_point(|p| p.threads < q);
        let (a, b) = (&pts[hi - 1], &pts[hi]);
        if a.threads == q {
            return f(a);
        }
        let t = (q - a.threads) as f64 / (b.threads - a.threads) as f64;
        f(a) + (f(b) - f(a)) * t
    }

    /// Peak input rate supported with `q` threads on one slot.
    pub fn peak_rate(&self, q: u32) -> f64 {
        self.interp(q.max(1), |p| p.peak_rate)
    }

    /// Incremental (CPU%, memory%) used with `q` threads at the peak rate.
    pub fn resources(&self, q: u32) -> (f64, f64) {
        let q = q.max(1);
        (self.interp(q, |p| p.cpu_pct), self.interp(q, |p| p.mem_pct))
    }

    /// Smallest thread count whose (interpolated) peak rate satisfies
    /// `omega`, or `None` when the rate exceeds every sampled peak.
    pub fn threads_for_rate(&self, omega: f64) -> Option<u32> {
        (1..=self.max_threads()).find(|q| self.peak_rate(*q) >= omega)
    }

    /// Best peak rate over any sampled thread count, and the smallest
    /// thread count achieving it.
    pub fn max_peak(&self) -> (f64, u32) {
        let best = self
            .points
            .iter()
            .map(|p| p.peak_rate)
            .fold(f64::NEG_INFINITY, f64::max);
        let tau = self
            .threads_for_rate(best)
            .expect("maximum sampled peak is always reachable");
        (best, tau)
    }
}

/// Map from task kind to its performance model.
pub type ModelSet = BTreeMap<String, TaskPerfModel>;

/// Outcome of one benchmark trial at a fixed (threads, rate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub cpu_pct: f64,
    pub mem_pct: f64,
    pub is_stable: bool,
    /// (time, latency-ms) samples past the warm-up period.
    #[serde(default)]
    pub latency_series: Vec<(f64, f64)>,
}

/// Result of the latency-slope stability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// Latency growth in ms per post-warm-up sample index.
    pub slope: f64,
    pub stable: bool,
}

/// Default latency-slope ceiling for a stable run.
pub const LAMBDA_LATENCY_MAX: f64 = 0.001;

/// Least-squares slope of `y` against `x`.
fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Decides whether a latency series is stable: the least-squares slope of
/// latency against post-warm-up sample index must not exceed `lambda_max`
/// (ms per tuple index — the slope unit fixed for this deployment).
pub fn detect_stability(
    series: &[(f64, f64)],
    warmup: f64,
    lambda_max: f64,
) -> Result<StabilityVerdict> {
    let post: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= warmup)
        .map(|(_, lat)| *lat)
        .collect();
    if post.len() < 2 {
        return Err(Error::ShortSeries(post.len()));
    }
    let xs: Vec<f64> = (0..post.len()).map(|i| i as f64).collect();
    let slope = lsq_slope(&xs, &post);
    Ok(StabilityVerdict { slope, stable: slope <= lambda_max })
}

/// Runs one benchmark trial of a task with a given thread count and
/// offered input rate.
pub trait TrialRunner {
    fn run(&mut self, threads: u32, omega: f64) -> Result<TrialResult>;
}

impl<F> TrialRunner for F
where
    F: FnMut(u32, f64) -> Result<TrialResult>,
{
    fn run(&mut self, threads: u32, omega: f64) -> Result<TrialResult> {
        self(threads, omega)
    }
}

/// Thread counts visited by default: dense at the low end where behavior
/// shifts fastest, sparser above.
pub const DEFAULT_TAU_SCHEDULE: [u32; 12] = [1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 60];

/// Rate-step policy for the upward sweep at each thread count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaOmega {
    Fixed(f64),
    /// Step by `pct` of the last stable rate, never below `floor`.
    Relative { pct: f64, floor: f64 },
}

impl Default for DeltaOmega {
    fn default() -> Self {
        DeltaOmega::Relative { pct: 0.05, floor: 1.0 }
    }
}

/// Parameters for the model-building sweep.
#[derive(Debug, Clone)]
pub struct BuildParams {
    /// Thread counts to visit, ascending.
    pub tau_schedule: Vec<u32>,
    pub tau_max: u32,
    pub omega_max: f64,
    pub delta_omega: DeltaOmega,
    /// Threshold on the trailing-window slope of per-thread-count peak
    /// rates. Measured as a drop threshold (negative); the sweep stops
    /// once the window is flat to within its magnitude or falling, since
    /// more threads then no longer buy rate.
    pub lambda_omega_min: f64,
    /// Trailing-window length for the slope test.
    pub window: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            tau_schedule: DEFAULT_TAU_SCHEDULE.to_vec(),
            tau_max: 100,
            omega_max: 1e6,
            delta_omega: DeltaOmega::default(),
            lambda_omega_min: -0.001,
            window: 3,
        }
    }
}

/// Why the thread sweep stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Trailing window of peak rates went flat or negative.
    SlopeWindow,
    /// Thread schedule exhausted or `tau_max` reached.
    TauMax,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub model: TaskPerfModel,
    pub termination: Termination,
    pub trials: u32,
}

/// Builds a performance model by sweeping thread counts and, per thread
/// count, offered rates upward until the trial goes unstable. The last
/// stable trial per thread count becomes that count's sample point.
pub fn build_model(
    kind: impl Into<String>,
    runner: &mut dyn TrialRunner,
    params: &BuildParams,
) -> Result<BuildOutcome> {
    let kind = kind.into();
    let mut points: Vec<ModelPoint> = Vec::new();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut trials = 0u32;
    let mut termination = Termination::TauMax;

    for (ti, &tau) in params.tau_schedule.iter().enumerate() {
        if tau > params.tau_max {
            break;
        }

        let mut omega = 1.0;
        let mut last_stable: Option<(f64, f64, f64)> = None;
        while omega <= params.omega_max {
            let trial = runner.run(tau, omega)?;
            trials += 1;
            if !trial.is_stable {
                break;
            }
            if trial.cpu_pct > 100.0 || trial.mem_pct > 100.0 {
                // Oversubscribed slot: the sample is not a valid
                // single-slot operating point, stop this rate sweep here.
                break;
            }
            last_stable = Some((omega, trial.cpu_pct, trial.mem_pct));
            let step = match params.delta_omega {
                DeltaOmega::Fixed(d) => d,
                DeltaOmega::Relative { pct, floor } => (pct * omega).max(floor),
            };
            omega += step;
        }

        let Some((peak, cpu, mem)) = last_stable else {
            if ti == 0 {
                return Err(Error::Unmodelable);
            }
            // Capacity collapsed below one tuple/sec; no point probing
            // higher thread counts.
            termination = Termination::SlopeWindow;
            break;
        };
        points.push(ModelPoint { threads: tau, peak_rate: peak, cpu_pct: cpu, mem_pct: mem });
        peaks.push((tau as f64, peak));

        if peaks.len() >= params.window {
            let tail = &peaks[peaks.len() - params.window..];
            let xs: Vec<f64> = tail.iter().map(|(t, _)| *t).collect();
            let ys: Vec<f64> = tail.iter().map(|(_, p)| *p).collect();
            if lsq_slope(&xs, &ys) <= params.lambda_omega_min.abs() {
                termination = Termination::SlopeWindow;
                break;
            }
        }
    }

    Ok(BuildOutcome { model: TaskPerfModel::new(kind, points)?, termination, trials })
}

pub mod fixtures {
    //! Performance-model fixtures for the five reference tasks, shipped
    //! as data files. Curve points between the measured values are
    //! synthetic and marked as such in each file's provenance.

    use super::{ModelSet, TaskPerfModel};
    use crate::{Error, Result};

    pub const FIXTURE_KINDS: [&str; 5] =
        ["parse-xml", "pi", "batch-file-write", "azure-blob", "azure-table"];

    /// Loads one shipped fixture model by kind.
    pub fn builtin(kind: &str) -> Result<TaskPerfModel> {
        let json = match kind {
            "parse-xml" => include_str!("../fixtures/parse-xml.json"),
            "pi" => include_str!("../fixtures/pi.json"),
            "batch-file-write" => include_str!("../fixtures/batch-file-write.json"),
            "azure-blob" => include_str!("../fixtures/azure-blob.json"),
            "azure-table" => include_str!("../fixtures/azure-table.json"),
            other => return Err(Error::MissingModel(other.to_string())),
        };
        TaskPerfModel::from_json(json)
    }

    /// All five fixture models keyed by kind.
    pub fn all() -> ModelSet {
        FIXTURE_KINDS
            .iter()
            .map(|k| (k.to_string(), builtin(k).expect("shipped fixture parses")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(kind: &str) -> TaskPerfModel {
        fixtures::builtin(kind).unwrap()
    }

    #[test]
    fn peak_rate_reference_values() {
        assert_eq!(fx("parse-xml").peak_rate(1), 310.0);
        // Interpolated on the shipped curve between the 2- and 9-thread
        // measurements; the curve carries a synthetic knot at 3 threads.
        assert_eq!(fx("azure-table").peak_rate(3), 6.0);
        // Identity at knots.
        assert_eq!(fx("azure-blob").peak_rate(50), 30.0);
        assert_eq!(fx("batch-file-write").peak_rate(3), 45000.0);
    }

    #[test]
    fn peak_rate_clamps_past_last_knot() {
        assert_eq!(fx("parse-xml").peak_rate(7), 255.0);
        assert_eq!(fx("parse-xml").peak_rate(40), 255.0);
    }

    #[test]
    fn resources_reference_values() {
        assert_eq!(fx("azure-blob").resources(1), (6.74, 23.92));
        assert_eq!(fx("parse-xml").resources(1), (85.0, 35.0));
    }

    #[test]
    fn threads_for_rate_table() {
        let t = fx("azure-table");
        assert_eq!(t.threads_for_rate(3.0), Some(1));
        assert_eq!(t.threads_for_rate(60.0), Some(60));
        assert_eq!(t.threads_for_rate(61.0), None);
    }

    #[test]
    fn max_peak_reference_values() {
        assert_eq!(fx("azure-blob").max_peak(), (30.0, 50));
        assert_eq!(fx("parse-xml").max_peak(), (310.0, 1));
        assert_eq!(fx("pi").max_peak(), (110.0, 2));
        assert_eq!(fx("azure-table").max_peak(), (60.0, 60));
    }

    #[test]
    fn threads_for_rate_coherent_with_peak_rate() {
        for kind in fixtures::FIXTURE_KINDS {
            let m = fx(kind);
            for p in &m.points {
                let q = m.threads_for_rate(m.peak_rate(p.threads)).unwrap();
                assert!(q <= p.threads, "{kind}: T(I({})) = {q}", p.threads);
            }
        }
    }

    #[test]
    fn interpolation_continuous_at_knots() {
        let m = fx("azure-blob");
        // Halfway between knots 1 and 20 the rate sits on the segment.
        let mid = m.peak_rate(10);
        assert!((mid - (2.0 + 8.0 * 9.0 / 19.0)).abs() < 1e-12);
    }

    #[test]
    fn stability_constant_series() {
        let series: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, 50.0)).collect();
        let v = detect_stability(&series, 0.0, LAMBDA_LATENCY_MAX).unwrap();
        assert_eq!(v.slope, 0.0);
        assert!(v.stable);
    }

    #[test]
    fn stability_growing_series() {
        let series: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, 10.0 + 0.5 * k as f64)).collect();
        let v = detect_stability(&series, 0.0, LAMBDA_LATENCY_MAX).unwrap();
        assert!((v.slope - 0.5).abs() < 1e-9);
        assert!(!v.stable);
    }

    #[test]
    fn stability_needs_two_samples_past_warmup() {
        let series = vec![(0.0, 10.0), (1.0, 11.0), (2.0, 12.0)];
        assert!(matches!(
            detect_stability(&series, 2.0, LAMBDA_LATENCY_MAX),
            Err(Error::ShortSeries(1))
        ));
    }

    /// Synthetic runner: stable iff the offered rate is at or below an
    /// analytic capacity curve.
    fn cap_runner(cap: impl Fn(u32) -> f64 + 'static) -> impl FnMut(u32, f64) -> crate::Result<TrialResult> {
        move |tau, omega| {
            let c = cap(tau);
            Ok(TrialResult {
                cpu_pct: (80.0 * omega / c.max(1.0)).min(100.0),
                mem_pct: (30.0 * omega / c.max(1.0)).min(100.0),
                is_stable: omega <= c,
                latency_series: Vec::new(),
            })
        }
    }

    #[test]
    fn build_recovers_linear_capacity_within_one_step() {
        let mut runner = cap_runner(|tau| 100.0 * tau as f64);
        let out = build_model("lin", &mut runner, &BuildParams::default()).unwrap();
        assert_eq!(out.termination, Termination::TauMax);
        for p in &out.model.points {
            let cap = 100.0 * p.threads as f64;
            let step = (0.05 * p.peak_rate).max(1.0);
            assert!(p.peak_rate <= cap, "recorded above true capacity");
            assert!(cap - p.peak_rate < step, "more than one step below capacity");
        }
    }

    #[test]
    fn build_stops_on_flat_capacity_by_slope_rule() {
        let mut runner = cap_runner(|_| 300.0);
        let out = build_model("flat", &mut runner, &BuildParams::default()).unwrap();
        assert_eq!(out.termination, Termination::SlopeWindow);
        // Window of 3: stops after visiting thread counts 1, 2, 3.
        assert_eq!(out.model.points.len(), 3);
        let (peak, tau) = out.model.max_peak();
        assert_eq!(tau, 1);
        assert!(300.0 - peak < (0.05 * peak).max(1.0));
    }

    #[test]
    fn build_errors_when_first_trial_unstable() {
        let mut runner = |_tau: u32, _omega: f64| {
            Ok(TrialResult { cpu_pct: 0.0, mem_pct: 0.0, is_stable: false, latency_series: vec![] })
        };
        assert!(matches!(
            build_model("dead", &mut runner, &BuildParams::default()),
            Err(Error::Unmodelable)
        ));
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let m = fx("azure-table");
        let back = TaskPerfModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);

        let bad = r#"{"kind": "x", "points": []}"#;
        assert!(TaskPerfModel::from_json(bad).is_err());
        let unsorted = r#"{"kind": "x", "points": [
            {"threads": 5, "peak_rate": 10, "cpu": 1, "mem": 1},
            {"threads": 2, "peak_rate": 10, "cpu": 1, "mem": 1}
        ]}"#;
        assert!(TaskPerfModel::from_json(unsorted).is_err());
    }
}
