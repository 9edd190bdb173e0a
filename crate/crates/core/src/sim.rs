//! Discrete-event simulation of the finite-`n` system.
//!
//! The engine drives the continuous-time Markov (or semi-Markov, for
//! non-exponential arrivals) dynamics of a multiclass parallel-server system
//! under a routing/scheduling policy.  Each service activity, meaning a
//! (class, pool) edge, carries one aggregate exponential clock whose rate is
//! the per-server rate times the number of busy servers on that edge.  After
//! every event all active clocks are redrawn; by memorylessness this leaves
//! the law of the process unchanged while keeping the replay fully
//! deterministic in the seed.
//!
//! Policy decisions are evaluated on the pre-event state, then the mechanical
//! part of the transition (arrival added, or completed customer removed) is
//! applied, then the decision is applied.  Simultaneous clocks are resolved
//! completions first, then arrivals, each in ascending index order.
//!
//! Alongside the event loop the engine maintains full-resolution online
//! statistics (cost integral, workload integral, state-space-collapse gap,
//! busy-process deviation) so that summary accuracy never depends on the
//! recording grid, and optionally records diffusion-scaled sample paths.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Gamma, LogNormal};

use crate::cost::{kappa_schedule, CostSpec, PerturbedMinimizer};
use crate::error::{Error, Result};
use crate::fluid::FluidSolution;
use crate::model::{initial_allocation, ArrivalFamily, SystemInstance};
use crate::policy::{Decision, Policy, QueueView, TrackingParams};
use crate::rng::{arrival_stream, policy_stream, service_stream, Stream};

/// Default hard cap on processed events per replication.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Threshold on `n` up to which `RecordMode::Auto` keeps full-resolution paths.
pub const AUTO_FULL_THRESHOLD: u64 = 10_000;

/// Number of grid points used by `RecordMode::Auto` above the full-resolution
/// threshold.
pub const AUTO_GRID_POINTS: usize = 5_000;

/// Sample-path recording resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordMode {
    /// Full resolution for small systems, subsampled above
    /// `AUTO_FULL_THRESHOLD`.
    Auto,
    /// One grid point per event (plus the initial state and the horizon).
    Full,
    /// Piecewise-constant path evaluated on an equispaced grid with the given
    /// number of intervals.
    Subsampled { points: usize },
    /// No path is kept; only the online summary statistics.
    SummaryOnly,
}

impl RecordMode {
    fn resolve(self, n: u64) -> RecordMode {
        match self {
            RecordMode::Auto => {
                if n <= AUTO_FULL_THRESHOLD {
                    RecordMode::Full
                } else {
                    RecordMode::Subsampled {
                        points: AUTO_GRID_POINTS,
                    }
                }
            }
            other => other,
        }
    }
}

/// Per-replication run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Simulation horizon in diffusion time units.
    pub horizon: f64,
    /// Replication seed (already derived from the master seed).
    pub seed: u64,
    pub record: RecordMode,
    /// Verify conservation identities after every event and count violations.
    pub debug_checks: bool,
    /// Abort with an error when the event count exceeds this cap.
    pub event_cap: u64,
    /// Keep per-class arrival-time logs (used for common-random-number
    /// audits and arrival-law tests).
    pub log_arrivals: bool,
    /// Test hook: suppress all arrivals so the initial population drains.
    pub disable_arrivals: bool,
    /// Test hook: extra customers queued per class at time zero (empty means
    /// none).  They are seated by the initial dispatch pass where possible.
    pub extra_queue: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 10.0,
            seed: 0,
            record: RecordMode::Auto,
            debug_checks: false,
            event_cap: DEFAULT_EVENT_CAP,
            log_arrivals: false,
            disable_arrivals: false,
            extra_queue: Vec::new(),
        }
    }
}

/// Diffusion-scaled piecewise-constant sample path on a right-continuous grid.
///
/// Row `k` of each component holds the value on `[time[k], time[k+1])`; the
/// final row sits at the horizon.  Equal-time points are coalesced keeping the
/// last (post-event) value.
#[derive(Clone, Debug, Default)]
pub struct PathRecord {
    pub time: Vec<f64>,
    /// Scaled queue lengths, one row per grid point, `class_count` columns.
    pub q_hat: Vec<Vec<f64>>,
    /// Scaled head counts centred at the fluid offsets.
    pub x_hat: Vec<Vec<f64>>,
    /// Scaled busy-server deviations per activity edge.
    pub b_hat: Vec<Vec<f64>>,
    /// Scaled idleness per pool.
    pub i_hat: Vec<Vec<f64>>,
    /// Workload `theta . q_hat` per grid point.
    pub theta_q: Vec<f64>,
    /// Scaled (waiting time, service time) pairs per departed customer.
    /// Populated only in full-resolution mode.
    pub sojourn_samples: Vec<(f64, f64)>,
}

/// Scalar outcomes of one replication.
#[derive(Clone, Debug)]
pub struct RepSummary {
    pub seed: u64,
    pub horizon: f64,
    pub events: u64,
    /// `\int_0^u C(q_hat(t)) dt` accumulated at full resolution.
    pub cost_integral: f64,
    /// Time average of `theta . q_hat`.
    pub theta_q_mean: f64,
    /// `sup_t || q_hat(t) - f^n(theta . q_hat(t)) ||_1`.
    pub ssc_gap_sup: f64,
    /// `sup_t || b_hat(t) ||_1`.
    pub b_hat_sup: f64,
    pub arrivals: Vec<u64>,
    pub departures_by_edge: Vec<u64>,
    /// Cumulative served work per edge: `mu^n_e \int_0^u B_e(t) dt`.
    pub busy_time: Vec<f64>,
    pub initial_in_system: Vec<u64>,
    pub final_queue: Vec<u64>,
    pub final_in_system: Vec<u64>,
    pub final_idle: Vec<u64>,
    pub sojourn_count: u64,
    /// Median scaled waiting time among departures (NaN when none departed).
    pub median_wait: f64,
    pub median_service: f64,
    /// Median of (wait + service) / service, the per-customer slowdown.
    pub median_slowdown: f64,
    pub invariant_violations: u64,
}

/// Everything produced by one replication.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RepSummary,
    /// Present unless the record mode is `SummaryOnly`.
    pub path: Option<PathRecord>,
    /// Per-class arrival times, present when `log_arrivals` is set.
    pub arrival_log: Option<Vec<Vec<f64>>>,
}

/// Unit-mean interarrival sampler for one class.
#[derive(Clone, Debug)]
pub enum InterarrivalSampler {
    Deterministic,
    Exponential,
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
}

impl InterarrivalSampler {
    /// Builds the sampler for a family with squared coefficient of variation
    /// `c * c`.  All families are parameterised to unit mean.
    pub fn new(family: ArrivalFamily, c: f64) -> Result<Self> {
        match family {
            ArrivalFamily::Deterministic => Ok(InterarrivalSampler::Deterministic),
            ArrivalFamily::Exponential => Ok(InterarrivalSampler::Exponential),
            ArrivalFamily::Gamma => {
                let c2 = c * c;
                if c2 <= 0.0 {
                    return Err(Error::Model(
                        "gamma interarrivals require a positive variability coefficient".into(),
                    ));
                }
                Gamma::new(1.0 / c2, c2).map(InterarrivalSampler::Gamma).map_err(|e| {
                    Error::Model(format!("invalid gamma interarrival parameters: {e}"))
                })
            }
            ArrivalFamily::Lognormal => {
                let sigma2 = (1.0 + c * c).ln();
                if !(sigma2 > 0.0) {
                    return Err(Error::Model(
                        "lognormal interarrivals require a positive variability coefficient"
                            .into(),
                    ));
                }
                LogNormal::new(-0.5 * sigma2, sigma2.sqrt())
                    .map(InterarrivalSampler::LogNormal)
                    .map_err(|e| {
                        Error::Model(format!("invalid lognormal interarrival parameters: {e}"))
                    })
            }
        }
    }

    /// Draws one unit-mean interarrival time.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            InterarrivalSampler::Deterministic => 1.0,
            InterarrivalSampler::Exponential => rng.sample(Exp1),
            InterarrivalSampler::Gamma(d) => d.sample(rng),
            InterarrivalSampler::LogNormal(d) => d.sample(rng),
        }
    }
}

/// Convenience wrapper used by tests: build the sampler and draw once.
pub fn sample_interarrival(family: ArrivalFamily, c: f64, rng: &mut Stream) -> Result<f64> {
    Ok(InterarrivalSampler::new(family, c)?.sample(rng))
}

/// Exact integral of the cost along a recorded piecewise-constant path.
pub fn integrate_cost(path: &PathRecord, cost: &CostSpec, horizon: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..path.time.len() {
        let t0 = path.time[k].min(horizon);
        let t1 = if k + 1 < path.time.len() {
            path.time[k + 1].min(horizon)
        } else {
            horizon
        };
        if t1 > t0 {
            total += cost.evaluate(&path.q_hat[k]) * (t1 - t0);
        }
    }
    total
}

/// Writes a recorded path as CSV with 1-based component labels.
pub fn write_paths_csv<W: Write>(w: &mut W, path: &PathRecord, edges: &[(usize, usize)]) -> Result<()> {
    let classes = path.q_hat.first().map_or(0, Vec::len);
    let pools = path.i_hat.first().map_or(0, Vec::len);
    let mut header = String::from("t");
    for i in 0..classes {
        header.push_str(&format!(",q_hat_{}", i + 1));
    }
    for i in 0..classes {
        header.push_str(&format!(",x_hat_{}", i + 1));
    }
    for &(i, j) in edges {
        header.push_str(&format!(",b_hat_{}_{}", i + 1, j + 1));
    }
    for j in 0..pools {
        header.push_str(&format!(",i_hat_{}", j + 1));
    }
    header.push_str(",theta_q\n");
    w.write_all(header.as_bytes())?;
    for k in 0..path.time.len() {
        let mut row = format!("{}", path.time[k]);
        for v in &path.q_hat[k] {
            row.push_str(&format!(",{v}"));
        }
        for v in &path.x_hat[k] {
            row.push_str(&format!(",{v}"));
        }
        for v in &path.b_hat[k] {
            row.push_str(&format!(",{v}"));
        }
        for v in &path.i_hat[k] {
            row.push_str(&format!(",{v}"));
        }
        row.push_str(&format!(",{}\n", path.theta_q[k]));
        w.write_all(row.as_bytes())?;
    }
    Ok(())
}

/// Writes replication summaries as CSV, one row per replication.
pub fn write_summary_csv<W: Write>(w: &mut W, summaries: &[RepSummary]) -> Result<()> {
    w.write_all(b"rep,seed,cost_integral,sup_ssc_gap,sup_b_hat,mean_theta_q\n")?;
    for (rep, s) in summaries.iter().enumerate() {
        w.write_all(
            format!(
                "{},{},{},{},{},{}\n",
                rep, s.seed, s.cost_integral, s.ssc_gap_sup, s.b_hat_sup, s.theta_q_mean
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

enum NextEvent {
    Completion(usize),
    Arrival(usize),
    None,
}

struct Recorder {
    mode: RecordMode,
    horizon: f64,
    grid_points: usize,
    next_grid: usize,
    path: PathRecord,
}

impl Recorder {
    fn new(mode: RecordMode, horizon: f64) -> Recorder {
        let grid_points = match mode {
            RecordMode::Subsampled { points } => points.max(1),
            _ => 0,
        };
        Recorder {
            mode,
            horizon,
            grid_points,
            next_grid: 0,
            path: PathRecord::default(),
        }
    }

    fn keeps_path(&self) -> bool {
        self.mode != RecordMode::SummaryOnly
    }

    fn push(&mut self, t: f64, q: &[f64], x: &[f64], b: &[f64], i: &[f64], theta_q: f64) {
        if let Some(&last) = self.path.time.last() {
            if last == t {
                let k = self.path.time.len() - 1;
                self.path.q_hat[k].copy_from_slice(q);
                self.path.x_hat[k].copy_from_slice(x);
                self.path.b_hat[k].copy_from_slice(b);
                self.path.i_hat[k].copy_from_slice(i);
                self.path.theta_q[k] = theta_q;
                return;
            }
        }
        self.path.time.push(t);
        self.path.q_hat.push(q.to_vec());
        self.path.x_hat.push(x.to_vec());
        self.path.b_hat.push(b.to_vec());
        self.path.i_hat.push(i.to_vec());
        self.path.theta_q.push(theta_q);
    }

    /// Emits grid points strictly before `upto` using the current
    /// (pre-event) state.
    fn flush_grid(&mut self, upto: f64, q: &[f64], x: &[f64], b: &[f64], i: &[f64], theta_q: f64) {
        if self.grid_points == 0 {
            return;
        }
        loop {
            if self.next_grid > self.grid_points {
                return;
            }
            let g = self.horizon * self.next_grid as f64 / self.grid_points as f64;
            if g >= upto {
                return;
            }
            self.push(g, q, x, b, i, theta_q);
            self.next_grid += 1;
        }
    }

    /// Emits all remaining grid points (final state persists to the horizon).
    fn finish_grid(&mut self, q: &[f64], x: &[f64], b: &[f64], i: &[f64], theta_q: f64) {
        if self.grid_points == 0 {
            return;
        }
        while self.next_grid <= self.grid_points {
            let g = self.horizon * self.next_grid as f64 / self.grid_points as f64;
            self.push(g, q, x, b, i, theta_q);
            self.next_grid += 1;
        }
    }
}

/// Runs one replication of the finite-`n` system under the given policy.
///
/// The fluid solution must carry a workload vector (which requires the basic
/// activities to form a spanning tree); heavy traffic itself is not required,
/// so moderately loaded calibration systems can be simulated too.  The cost
/// specification drives both the online cost integral and the perturbed
/// minimizer used for the collapse-gap statistic; `tracking` supplies the
/// perturbation schedule and optional root override so the recorded gap is
/// measured against the same target function the tracking policy uses.
pub fn run_simulation(
    instance: &SystemInstance,
    fluid: &FluidSolution,
    cost: &CostSpec,
    policy: &Policy,
    tracking: &TrackingParams,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let top = &instance.topology;
    let class_count = top.class_count;
    let pool_count = top.pool_count;
    let edge_count = top.edges.len();
    let sqrt_n = instance.sqrt_n;
    let inv_sqrt_n = 1.0 / sqrt_n;

    if !(cfg.horizon > 0.0) {
        return Err(Error::Config("simulation horizon must be positive".into()));
    }
    if !cfg.extra_queue.is_empty() && cfg.extra_queue.len() != class_count {
        return Err(Error::Config(
            "extra_queue must have one entry per class".into(),
        ));
    }

    let theta = fluid
        .theta
        .clone()
        .ok_or_else(|| Error::Fluid("recorder requires a basic-activity spanning tree".into()))?;
    let root = tracking
        .root_class
        .unwrap_or_else(|| cost.default_root(&theta));
    let (kappa, kappa_bar) = (
        kappa_schedule(instance.n, tracking.kappa_coeff, tracking.kappa_exponent),
        kappa_schedule(instance.n, tracking.kappa_bar_coeff, tracking.kappa_bar_exponent),
    );
    let minimizer = PerturbedMinimizer::new(cost.clone(), theta.clone(), root, kappa, kappa_bar)?;

    // Fluid offsets for centring: o_i = sum_j xi*_ij N^n_j and per-edge
    // nominal busy counts xi*_e N^n_j.
    let mut busy_offset = vec![0.0; edge_count];
    let mut class_offset = vec![0.0; class_count];
    for (e, &(i, j)) in top.edges.iter().enumerate() {
        busy_offset[e] = fluid.xi_star[e] * instance.pool_size[j] as f64;
        class_offset[i] += busy_offset[e];
    }

    // Streams: one per class for arrivals, one per edge for service clocks
    // and departure selection, one for policy randomness.
    let mut arr_streams: Vec<Stream> = (0..class_count)
        .map(|i| arrival_stream(cfg.seed, i))
        .collect();
    let mut svc_streams: Vec<Stream> = (0..edge_count)
        .map(|e| service_stream(cfg.seed, e))
        .collect();
    let mut pol_stream = policy_stream(cfg.seed);
    let samplers: Vec<InterarrivalSampler> = (0..class_count)
        .map(|i| InterarrivalSampler::new(instance.params.family[i], instance.params.c_ia[i]))
        .collect::<Result<_>>()?;

    // State.
    let mut busy = initial_allocation(instance, &fluid.xi_star);
    let mut queue = if cfg.extra_queue.is_empty() {
        vec![0u64; class_count]
    } else {
        cfg.extra_queue.clone()
    };
    let mut fifo: Vec<VecDeque<f64>> = queue
        .iter()
        .map(|&q| std::iter::repeat(0.0).take(q as usize).collect())
        .collect();
    let mut idle = vec![0u64; pool_count];
    for j in 0..pool_count {
        let used: u64 = top.pool_edges(j).iter().map(|&e| busy[e]).sum();
        idle[j] = instance.pool_size[j]
            .checked_sub(used)
            .ok_or_else(|| Error::Sim("initial allocation exceeds pool size".into()))?;
    }
    let mut in_system = vec![0u64; class_count];
    for i in 0..class_count {
        let served: u64 = top.class_edges(i).iter().map(|&e| busy[e]).sum();
        in_system[i] = queue[i] + served;
    }
    let mut bags: Vec<Vec<(f64, f64)>> = busy
        .iter()
        .map(|&b| std::iter::repeat((0.0, 0.0)).take(b as usize).collect())
        .collect();

    let mut head_buf = vec![f64::INFINITY; class_count];
    let fill_heads = |fifo: &[VecDeque<f64>], buf: &mut [f64]| {
        for (i, q) in fifo.iter().enumerate() {
            buf[i] = q.front().copied().unwrap_or(f64::INFINITY);
        }
    };

    // Initial dispatch pass: seat queued customers wherever the policy admits
    // them, so the starting state is work conserving.  With empty queues this
    // is a no-op.
    for j in 0..pool_count {
        while idle[j] > 0 {
            fill_heads(&fifo, &mut head_buf);
            let view = QueueView {
                queue: &queue,
                in_system: &in_system,
                idle: &idle,
                head_arrival: &head_buf,
            };
            match policy.on_completion(&view, j, top, &mut pol_stream) {
                Decision::AdmitClass(k) => {
                    let e = top.edge_index(k, j).ok_or_else(|| {
                        Error::Sim(format!("policy admitted class {k} on pool {j} without an edge"))
                    })?;
                    let at = fifo[k]
                        .pop_front()
                        .ok_or_else(|| Error::Sim("policy admitted from an empty queue".into()))?;
                    queue[k] -= 1;
                    idle[j] -= 1;
                    busy[e] += 1;
                    bags[e].push((at, 0.0));
                }
                Decision::StayIdle => break,
                _ => return Err(Error::Sim("completion decision must admit or stay idle".into())),
            }
        }
    }

    let initial_in_system = in_system.clone();

    // Clocks.
    let mut t = 0.0f64;
    let mut next_arrival = vec![f64::INFINITY; class_count];
    if !cfg.disable_arrivals {
        for i in 0..class_count {
            next_arrival[i] = samplers[i].sample(&mut arr_streams[i]) / instance.lambda_n[i];
        }
    }
    let mut clock = vec![f64::INFINITY; edge_count];
    let resample_all = |clock: &mut [f64],
                        svc: &mut [Stream],
                        busy: &[u64],
                        now: f64,
                        mu_n: &[f64]| {
        for e in 0..clock.len() {
            clock[e] = if busy[e] > 0 {
                let exp: f64 = svc[e].sample(Exp1);
                now + exp / (mu_n[e] * busy[e] as f64)
            } else {
                f64::INFINITY
            };
        }
    };
    resample_all(&mut clock, &mut svc_streams, &busy, t, &instance.mu_n);

    // Counters and online statistics.
    let mut arrivals = vec![0u64; class_count];
    let mut departures = vec![0u64; edge_count];
    let mut busy_time = vec![0.0f64; edge_count];
    let mut events: u64 = 0;
    let mut cost_integral = 0.0f64;
    let mut theta_q_integral = 0.0f64;
    let mut ssc_gap_sup = 0.0f64;
    let mut b_hat_sup = 0.0f64;
    let mut violations: u64 = 0;
    let mut sojourns: Vec<(f64, f64)> = Vec::new();
    let mut arrival_log: Option<Vec<Vec<f64>>> = if cfg.log_arrivals {
        Some(vec![Vec::new(); class_count])
    } else {
        None
    };

    // Scaled-state scratch buffers.
    let mut q_hat = vec![0.0; class_count];
    let mut x_hat = vec![0.0; class_count];
    let mut b_hat = vec![0.0; edge_count];
    let mut i_hat = vec![0.0; pool_count];

    // Work-conservation check needs the set of classes each policy may route
    // to a pool.
    let compat: Vec<Vec<usize>> = (0..pool_count)
        .map(|j| policy.compatible_classes(top, j))
        .collect();

    let mode = cfg.record.resolve(instance.n);
    let keep_sojourns = mode == RecordMode::Full;
    let mut rec = Recorder::new(mode, cfg.horizon);

    macro_rules! rescale {
        () => {
            for i in 0..class_count {
                q_hat[i] = queue[i] as f64 * inv_sqrt_n;
                x_hat[i] = (in_system[i] as f64 - class_offset[i]) * inv_sqrt_n;
            }
            for e in 0..edge_count {
                b_hat[e] = (busy[e] as f64 - busy_offset[e]) * inv_sqrt_n;
            }
            for j in 0..pool_count {
                i_hat[j] = idle[j] as f64 * inv_sqrt_n;
            }
        };
    }

    let mut theta_q: f64;
    let mut cost_now: f64;
    let mut fn_target: Vec<f64>;

    macro_rules! refresh_stats {
        () => {
            rescale!();
            theta_q = theta.iter().zip(&q_hat).map(|(a, b)| a * b).sum();
            cost_now = cost.evaluate(&q_hat);
            fn_target = minimizer.evaluate(theta_q);
            let gap: f64 = q_hat
                .iter()
                .zip(&fn_target)
                .map(|(q, f)| (q - f).abs())
                .sum();
            if gap > ssc_gap_sup {
                ssc_gap_sup = gap;
            }
            let bsum: f64 = b_hat.iter().map(|v| v.abs()).sum();
            if bsum > b_hat_sup {
                b_hat_sup = bsum;
            }
        };
    }

    refresh_stats!();
    if rec.keeps_path() && rec.grid_points == 0 {
        rec.push(t, &q_hat, &x_hat, &b_hat, &i_hat, theta_q);
    }

    let debug_check = |queue: &[u64],
                           in_system: &[u64],
                           busy: &[u64],
                           idle: &[u64],
                           arrivals: &[u64],
                           departures: &[u64],
                           violations: &mut u64| {
        for i in 0..class_count {
            let served: u64 = top.class_edges(i).iter().map(|&e| busy[e]).sum();
            if in_system[i] != queue[i] + served {
                *violations += 1;
            }
            let dep: u64 = top.class_edges(i).iter().map(|&e| departures[e]).sum();
            if initial_in_system[i] + arrivals[i] != in_system[i] + dep {
                *violations += 1;
            }
        }
        for j in 0..pool_count {
            let used: u64 = top.pool_edges(j).iter().map(|&e| busy[e]).sum();
            if used + idle[j] != instance.pool_size[j] {
                *violations += 1;
            }
            if idle[j] > 0 {
                let all_waiting =
                    !compat[j].is_empty() && compat[j].iter().all(|&k| queue[k] > 0);
                if all_waiting {
                    *violations += 1;
                }
            }
        }
    };

    loop {
        // Next event: completions first, then arrivals, ascending index.
        let mut te = f64::INFINITY;
        let mut kind = NextEvent::None;
        for e in 0..edge_count {
            if clock[e] < te {
                te = clock[e];
                kind = NextEvent::Completion(e);
            }
        }
        for i in 0..class_count {
            if next_arrival[i] < te {
                te = next_arrival[i];
                kind = NextEvent::Arrival(i);
            }
        }

        let end = te.min(cfg.horizon);
        if end > t {
            let dt = end - t;
            cost_integral += cost_now * dt;
            theta_q_integral += theta_q * dt;
            for e in 0..edge_count {
                busy_time[e] += instance.mu_n[e] * busy[e] as f64 * dt;
            }
        }
        rec.flush_grid(te.min(cfg.horizon), &q_hat, &x_hat, &b_hat, &i_hat, theta_q);

        if te > cfg.horizon {
            break;
        }
        t = te;
        events += 1;
        if events > cfg.event_cap {
            return Err(Error::Sim(format!(
                "event cap {} exceeded at t = {:.6} (horizon {}, n = {})",
                cfg.event_cap, t, cfg.horizon, instance.n
            )));
        }

        match kind {
            NextEvent::Completion(e) => {
                let (ci, pj) = top.edges[e];
                // Decision on the pre-event state.
                fill_heads(&fifo, &mut head_buf);
                let decision = {
                    let view = QueueView {
                        queue: &queue,
                        in_system: &in_system,
                        idle: &idle,
                        head_arrival: &head_buf,
                    };
                    policy.on_completion(&view, pj, top, &mut pol_stream)
                };
                // Mechanical transition: select and remove the departing
                // customer.  The selection draw is always consumed so the
                // service stream advances identically regardless of busy
                // counts.
                let b = busy[e];
                debug_assert!(b > 0 && bags[e].len() == b as usize);
                let sel = (svc_streams[e].next_u64() % b) as usize;
                let (arr_at, start_at) = bags[e].swap_remove(sel);
                busy[e] -= 1;
                idle[pj] += 1;
                in_system[ci] = in_system[ci]
                    .checked_sub(1)
                    .ok_or_else(|| Error::Sim("head count underflow on completion".into()))?;
                departures[e] += 1;
                let service = t - start_at;
                if service > 0.0 {
                    sojourns.push(((start_at - arr_at) * sqrt_n, service * sqrt_n));
                }
                // Apply the decision.
                match decision {
                    Decision::AdmitClass(k) => {
                        let ek = top.edge_index(k, pj).ok_or_else(|| {
                            Error::Sim(format!(
                                "policy admitted class {k} on pool {pj} without an edge"
                            ))
                        })?;
                        let at = fifo[k].pop_front().ok_or_else(|| {
                            Error::Sim("policy admitted from an empty queue".into())
                        })?;
                        queue[k] = queue[k]
                            .checked_sub(1)
                            .ok_or_else(|| Error::Sim("queue underflow on admission".into()))?;
                        idle[pj] -= 1;
                        busy[ek] += 1;
                        bags[ek].push((at, t));
                    }
                    Decision::StayIdle => {}
                    _ => {
                        return Err(Error::Sim(
                            "completion decision must admit or stay idle".into(),
                        ))
                    }
                }
            }
            NextEvent::Arrival(i) => {
                fill_heads(&fifo, &mut head_buf);
                let decision = {
                    let view = QueueView {
                        queue: &queue,
                        in_system: &in_system,
                        idle: &idle,
                        head_arrival: &head_buf,
                    };
                    policy.on_arrival(&view, i, top, &mut pol_stream)
                };
                arrivals[i] += 1;
                in_system[i] += 1;
                if let Some(log) = arrival_log.as_mut() {
                    log[i].push(t);
                }
                match decision {
                    Decision::RouteToPool(j) => {
                        let e = top.edge_index(i, j).ok_or_else(|| {
                            Error::Sim(format!(
                                "policy routed class {i} to pool {j} without an edge"
                            ))
                        })?;
                        idle[j] = idle[j]
                            .checked_sub(1)
                            .ok_or_else(|| Error::Sim("idle underflow on routing".into()))?;
                        busy[e] += 1;
                        bags[e].push((t, t));
                    }
                    Decision::Queue => {
                        queue[i] += 1;
                        fifo[i].push_back(t);
                    }
                    _ => {
                        return Err(Error::Sim(
                            "arrival decision must route or queue".into(),
                        ))
                    }
                }
                next_arrival[i] = t + samplers[i].sample(&mut arr_streams[i]) / instance.lambda_n[i];
            }
            NextEvent::None => {
                unreachable!("a finite event time always carries an event kind")
            }
        }

        resample_all(&mut clock, &mut svc_streams, &busy, t, &instance.mu_n);
        refresh_stats!();
        if cfg.debug_checks {
            debug_check(
                &queue,
                &in_system,
                &busy,
                &idle,
                &arrivals,
                &departures,
                &mut violations,
            );
        }
        if rec.keeps_path() && rec.grid_points == 0 {
            rec.push(t, &q_hat, &x_hat, &b_hat, &i_hat, theta_q);
        }
    }

    // Horizon bookkeeping: the state persists from the last event to u.
    rec.finish_grid(&q_hat, &x_hat, &b_hat, &i_hat, theta_q);
    if rec.keeps_path() && rec.grid_points == 0 {
        rec.push(cfg.horizon, &q_hat, &x_hat, &b_hat, &i_hat, theta_q);
    }

    let sojourn_count = sojourns.len() as u64;
    let (median_wait, median_service, median_slowdown) = if sojourns.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let waits: Vec<f64> = sojourns.iter().map(|&(w, _)| w).collect();
        let services: Vec<f64> = sojourns.iter().map(|&(_, s)| s).collect();
        let ratios: Vec<f64> = sojourns.iter().map(|&(w, s)| (w + s) / s).collect();
        (
            crate::stats::median(&waits),
            crate::stats::median(&services),
            crate::stats::median(&ratios),
        )
    };

    let mut path = if rec.keeps_path() {
        Some(rec.path)
    } else {
        None
    };
    if let Some(p) = path.as_mut() {
        if keep_sojourns {
            p.sojourn_samples = sojourns;
        }
    }

    let summary = RepSummary {
        seed: cfg.seed,
        horizon: cfg.horizon,
        events,
        cost_integral,
        theta_q_mean: theta_q_integral / cfg.horizon,
        ssc_gap_sup,
        b_hat_sup,
        arrivals,
        departures_by_edge: departures,
        busy_time,
        initial_in_system,
        final_queue: queue,
        final_in_system: in_system,
        final_idle: idle,
        sojourn_count,
        median_wait,
        median_service,
        median_slowdown,
        invariant_violations: violations,
    };

    Ok(RunOutput {
        summary,
        path,
        arrival_log,
    })
}
