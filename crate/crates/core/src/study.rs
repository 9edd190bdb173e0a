//! Convergence-study orchestration.
//!
//! A study sweeps system sizes and policies over a shared replication plan,
//! compares every cell against the policy-independent diffusion lower bound,
//! and tests whether the state-space-collapse diagnostics tighten as the
//! system grows.  Replication seeds depend only on the master seed and the
//! replication index, so every policy and every system size sees the same
//! arrival randomness: paired comparisons across cells are common-random-
//! number comparisons by construction.
//!
//! Outputs are a machine-readable `report.json`, the flat `cells.csv`
//! (one row per replication), `lb.json`, a human-readable `report.md`,
//! and one subsampled sample path per cell.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcp::{lower_bound_estimate, LbEstimate, RbmParams};
use crate::config::StudySpec;
use crate::error::{Error, Result};
use crate::fluid::{analyze, FluidSolution};
use crate::model::build_instance;
use crate::policy::Policy;
use crate::rng::rep_seed;
use crate::sim::{run_simulation, write_paths_csv, PathRecord, RecordMode, RunConfig};

/// Grid intervals used for the one archived sample path per cell.
pub const SAMPLE_PATH_POINTS: usize = 2_000;

/// Per-replication scalar results, echoed verbatim into `cells.csv`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub seed: u64,
    /// Time-average holding cost, the cost integral divided by the horizon.
    pub cost: f64,
    pub ssc_gap_sup: f64,
    pub b_hat_sup: f64,
    pub theta_q_mean: f64,
}

/// Aggregates for one (policy, n) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub policy: String,
    pub n: u64,
    pub cost_mean: f64,
    pub cost_sd: f64,
    pub cost_se: f64,
    pub cost_median: f64,
    /// Cell mean over the lower-bound mean.
    pub ratio_to_lb: f64,
    /// Signed distance to the lower bound in pooled standard errors.
    pub lb_gap_sigmas: f64,
    /// Whether the cell mean stays above the bound minus three pooled SEs.
    pub above_lb_within_3se: bool,
    pub ssc_gap_sup_median: f64,
    pub b_hat_sup_median: f64,
    pub theta_q_mean_avg: f64,
    /// Median over replications of the per-replication median slowdown.
    pub slowdown_median: f64,
    pub events: u64,
    pub violations: u64,
    pub reps: Vec<RepRow>,
}

/// One paired step of a convergence trend.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendStep {
    pub from_n: u64,
    pub to_n: u64,
    /// Replications whose metric strictly decreased from `from_n` to `to_n`.
    pub wins: u64,
    pub trials: u64,
    /// One-sided sign-test p-value for a decrease.
    pub p_value: f64,
}

/// Monotonicity verdict for one metric under one policy across the schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendReport {
    pub policy: String,
    pub metric: String,
    /// Per-n medians in schedule order.
    pub medians: Vec<f64>,
    pub strictly_decreasing: bool,
    pub steps: Vec<TrendStep>,
    /// Strictly decreasing medians with every step significant at 0.05.
    pub significant: bool,
}

/// Slowdown diagnostic: in the nondegenerate regime waits are comparable to
/// service times, so the median sojourn-to-service ratio should sit strictly
/// above one without diverging.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlowdownReport {
    pub policy: String,
    pub medians: Vec<f64>,
    pub in_range: bool,
}

/// Common-random-number comparison of two policies at one system size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub n: u64,
    pub first: String,
    pub second: String,
    /// Replications where the first policy paid strictly more.
    pub wins_first_greater: u64,
    pub trials: u64,
    /// One-sided sign-test p-value for "first costs more than second".
    pub p_first_greater: f64,
}

/// Echo of the study plan so a report is self-describing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SettingsEcho {
    pub n_schedule: Vec<u64>,
    pub horizon: f64,
    pub reps: usize,
    pub seed: u64,
    pub policies: Vec<String>,
    pub cost_kind: String,
    pub debug_checks: bool,
    pub lb_reps: usize,
    pub lb_dt: f64,
}

/// Everything a finished study reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub settings: SettingsEcho,
    pub fluid: FluidSolution,
    pub lower_bound: LbEstimate,
    pub cells: Vec<CellReport>,
    pub trends: Vec<TrendReport>,
    pub slowdowns: Vec<SlowdownReport>,
    pub pairwise: Vec<PairwiseReport>,
    pub total_events: u64,
    pub total_violations: u64,
}

/// One archived diffusion-scaled sample path.
#[derive(Clone, Debug)]
pub struct SamplePath {
    pub policy: String,
    pub n: u64,
    pub path: PathRecord,
}

/// A study result: the report plus the archived paths.
#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub sample_paths: Vec<SamplePath>,
}

/// Midpoint-convexity spot check of the instantaneous-cost envelope on a
/// coarse grid; the lower bound is meaningless if the envelope bends the
/// wrong way.
fn check_envelope_convexity(cost: &crate::cost::CostSpec, theta: &[f64]) -> Result<()> {
    let pts: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|&a| cost.c_star(theta, a)).collect();
    for i in 0..pts.len() {
        for j in (i + 2)..pts.len() {
            let mid = 0.5 * (pts[i] + pts[j]);
            let vmid = cost.c_star(theta, mid);
            let chord = 0.5 * (vals[i] + vals[j]);
            let tol = 1e-6 * (1.0 + chord.abs());
            if vmid > chord + tol {
                return Err(Error::Cost(format!(
                    "the instantaneous-cost envelope failed a convexity check between {} and {}: C*({mid}) = {vmid} exceeds the chord value {chord}",
                    pts[i], pts[j]
                )));
            }
        }
    }
    Ok(())
}

/// Runs the full study described by `spec`.
///
/// Aborts before simulating if the fluid analysis does not certify a
/// critically loaded system with complete resource pooling, since neither the
/// workload diffusion nor the collapse diagnostics are meaningful otherwise.
pub fn run_convergence_study(spec: &StudySpec) -> Result<StudyOutcome> {
    let model = &spec.model;
    let fluid = analyze(&model.topology, &model.params)?;
    if !(fluid.ht && fluid.crp) {
        return Err(Error::Fluid(format!(
            "the study assumptions are not certified for this model: {}",
            if fluid.notes.is_empty() {
                "no diagnostic notes".to_string()
            } else {
                fluid.notes.join("; ")
            }
        )));
    }
    let theta = fluid
        .theta
        .clone()
        .ok_or_else(|| Error::Fluid("certified models must carry a workload direction".into()))?;
    check_envelope_convexity(&model.cost, &theta)?;

    // The diffusion lower bound does not depend on n or on the policy:
    // estimate it once per study.
    let drift = fluid
        .workload_drift()
        .ok_or_else(|| Error::Fluid("certified models must have a workload drift".into()))?;
    let variance = fluid
        .workload_variance()
        .ok_or_else(|| Error::Fluid("certified models must have a workload variance".into()))?;
    let rbm = RbmParams::new(drift, variance);
    let lb = lower_bound_estimate(
        &model.cost,
        &theta,
        &rbm,
        spec.horizon,
        spec.horizon * spec.lb_dt_fraction,
        spec.lb_reps,
        spec.seed,
    )?;

    let policy_names: Vec<String> = spec.policies.iter().map(|p| p.name().to_string()).collect();
    let mut cells: Vec<CellReport> = Vec::new();
    let mut sample_paths: Vec<SamplePath> = Vec::new();

    for &n in &spec.n_schedule {
        let instance = build_instance(&model.topology, &model.params, n)?;
        for (pi, &kind) in spec.policies.iter().enumerate() {
            let policy = Policy::build(kind, &instance, &fluid, &model.cost, &model.tracking)?;
            let outputs: Vec<crate::sim::RunOutput> = (0..spec.reps)
                .into_par_iter()
                .map(|r| {
                    let cfg = RunConfig {
                        horizon: spec.horizon,
                        seed: rep_seed(spec.seed, r as u64),
                        record: if r == 0 {
                            RecordMode::Subsampled {
                                points: SAMPLE_PATH_POINTS,
                            }
                        } else {
                            RecordMode::SummaryOnly
                        },
                        debug_checks: spec.debug_checks,
                        ..RunConfig::default()
                    };
                    run_simulation(&instance, &fluid, &model.cost, &policy, &model.tracking, &cfg)
                })
                .collect::<Result<_>>()?;

            let mut rows = Vec::with_capacity(spec.reps);
            let mut events = 0u64;
            let mut violations = 0u64;
            let mut slowdowns = Vec::with_capacity(spec.reps);
            for (r, out) in outputs.iter().enumerate() {
                let s = &out.summary;
                rows.push(RepRow {
                    rep: r,
                    seed: s.seed,
                    cost: s.cost_integral / spec.horizon,
                    ssc_gap_sup: s.ssc_gap_sup,
                    b_hat_sup: s.b_hat_sup,
                    theta_q_mean: s.theta_q_mean,
                });
                events += s.events;
                violations += s.invariant_violations;
                if s.median_slowdown.is_finite() {
                    slowdowns.push(s.median_slowdown);
                }
            }
            if let Some(path) = outputs[0].path.clone() {
                sample_paths.push(SamplePath {
                    policy: policy_names[pi].clone(),
                    n,
                    path,
                });
            }

            let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
            let gaps: Vec<f64> = rows.iter().map(|r| r.ssc_gap_sup).collect();
            let bsups: Vec<f64> = rows.iter().map(|r| r.b_hat_sup).collect();
            let thetas: Vec<f64> = rows.iter().map(|r| r.theta_q_mean).collect();
            let cost_se = crate::stats::se(&costs);
            let pooled_se = (cost_se * cost_se + lb.se * lb.se).sqrt();
            let cost_mean = crate::stats::mean(&costs);
            cells.push(CellReport {
                policy: policy_names[pi].clone(),
                n,
                cost_mean,
                cost_sd: crate::stats::sd(&costs),
                cost_se,
                cost_median: crate::stats::median(&costs),
                ratio_to_lb: cost_mean / lb.mean,
                lb_gap_sigmas: (cost_mean - lb.mean) / pooled_se,
                above_lb_within_3se: cost_mean >= lb.mean - 3.0 * pooled_se,
                ssc_gap_sup_median: crate::stats::median(&gaps),
                b_hat_sup_median: crate::stats::median(&bsups),
                theta_q_mean_avg: crate::stats::mean(&thetas),
                slowdown_median: if slowdowns.is_empty() {
                    f64::NAN
                } else {
                    crate::stats::median(&slowdowns)
                },
                events,
                violations,
                reps: rows,
            });
        }
    }

    let cell_rows = |policy: &str, n: u64| -> &CellReport {
        cells
            .iter()
            .find(|c| c.policy == policy && c.n == n)
            .expect("every (policy, n) cell was just computed")
    };

    // Convergence trends: per-replication paired sign tests between
    // consecutive system sizes.
    let mut trends = Vec::new();
    let mut slowdown_reports = Vec::new();
    for name in &policy_names {
        for (metric, extract) in [
            ("ssc_gap_sup", (|r: &RepRow| r.ssc_gap_sup) as fn(&RepRow) -> f64),
            ("b_hat_sup", |r: &RepRow| r.b_hat_sup),
            ("cost", |r: &RepRow| r.cost),
        ] {
            let series: Vec<Vec<f64>> = spec
                .n_schedule
                .iter()
                .map(|&n| cell_rows(name, n).reps.iter().map(extract).collect())
                .collect();
            let medians: Vec<f64> = series.iter().map(|v| crate::stats::median(v)).collect();
            let strictly_decreasing = medians.windows(2).all(|w| w[1] < w[0]);
            let steps: Vec<TrendStep> = series
                .windows(2)
                .zip(spec.n_schedule.windows(2))
                .map(|(vals, ns)| {
                    let (wins, trials, p_value) =
                        crate::stats::sign_test_decreasing(&vals[0], &vals[1]);
                    TrendStep {
                        from_n: ns[0],
                        to_n: ns[1],
                        wins,
                        trials,
                        p_value,
                    }
                })
                .collect();
            let significant =
                strictly_decreasing && steps.iter().all(|s| s.p_value < 0.05);
            trends.push(TrendReport {
                policy: name.clone(),
                metric: metric.to_string(),
                medians,
                strictly_decreasing,
                steps,
                significant,
            });
        }
        let medians: Vec<f64> = spec
            .n_schedule
            .iter()
            .map(|&n| cell_rows(name, n).slowdown_median)
            .collect();
        let in_range = medians.iter().all(|&m| m.is_finite() && m > 1.0);
        slowdown_reports.push(SlowdownReport {
            policy: name.clone(),
            medians,
            in_range,
        });
    }

    // Paired cost comparisons between policies at each n.
    let mut pairwise = Vec::new();
    for &n in &spec.n_schedule {
        for i in 0..policy_names.len() {
            for j in (i + 1)..policy_names.len() {
                let a: Vec<f64> = cell_rows(&policy_names[i], n)
                    .reps
                    .iter()
                    .map(|r| r.cost)
                    .collect();
                let b: Vec<f64> = cell_rows(&policy_names[j], n)
                    .reps
                    .iter()
                    .map(|r| r.cost)
                    .collect();
                let (wins, trials, p) = crate::stats::sign_test_decreasing(&a, &b);
                pairwise.push(PairwiseReport {
                    n,
                    first: policy_names[i].clone(),
                    second: policy_names[j].clone(),
                    wins_first_greater: wins,
                    trials,
                    p_first_greater: p,
                });
            }
        }
    }

    let total_events = cells.iter().map(|c| c.events).sum();
    let total_violations = cells.iter().map(|c| c.violations).sum();
    let report = StudyReport {
        settings: SettingsEcho {
            n_schedule: spec.n_schedule.clone(),
            horizon: spec.horizon,
            reps: spec.reps,
            seed: spec.seed,
            policies: policy_names,
            cost_kind: model.cost.kind_name().to_string(),
            debug_checks: spec.debug_checks,
            lb_reps: spec.lb_reps,
            lb_dt: spec.horizon * spec.lb_dt_fraction,
        },
        fluid,
        lower_bound: lb,
        cells,
        trends,
        slowdowns: slowdown_reports,
        pairwise,
        total_events,
        total_violations,
    };

    Ok(StudyOutcome {
        report,
        sample_paths,
    })
}

fn fmt_vec(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Renders the human-readable summary of a report.
pub fn render_markdown(report: &StudyReport) -> String {
    let mut md = String::new();
    let s = &report.settings;
    md.push_str("# Convergence study\n\n");
    md.push_str(&format!(
        "Sizes n = {:?}, horizon u = {}, {} replications per cell, master seed {}.\n",
        s.n_schedule, s.horizon, s.reps, s.seed
    ));
    md.push_str(&format!(
        "Policies: {}. Cost: {}. Debug invariant checks: {}.\n\n",
        s.policies.join(", "),
        s.cost_kind,
        if s.debug_checks { "on" } else { "off" }
    ));

    let f = &report.fluid;
    md.push_str("## Fluid analysis\n\n");
    md.push_str(&format!(
        "- utilization rho* = {:.9}; critically loaded and pooled: {}\n",
        f.rho_star,
        if f.ht && f.crp { "yes" } else { "no" }
    ));
    if let Some(theta) = &f.theta {
        md.push_str(&format!("- workload direction theta = {}\n", fmt_vec(theta, 6)));
    }
    if let (Some(m), Some(v)) = (f.workload_drift(), f.workload_variance()) {
        md.push_str(&format!(
            "- workload drift {m:.6}, workload variance {v:.6}\n"
        ));
    }
    for note in &f.notes {
        md.push_str(&format!("- note: {note}\n"));
    }
    md.push('\n');

    let lb = &report.lower_bound;
    md.push_str("## Diffusion lower bound\n\n");
    md.push_str(&format!(
        "Time-average envelope cost {:.6} (se {:.6}), quantiles 5/50/95 = {:.6} / {:.6} / {:.6}, {} replications at step {:.2e}.\n\n",
        lb.mean, lb.se, lb.q05, lb.q50, lb.q95, lb.reps, lb.dt
    ));

    md.push_str("## Cells\n\n");
    md.push_str(
        "| policy | n | time-avg cost | se | ratio to LB | gap (SEs) | med sup SSC gap | med sup busy dev | med slowdown |\n",
    );
    md.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for c in &report.cells {
        md.push_str(&format!(
            "| {} | {} | {:.6} | {:.6} | {:.4} | {:+.2} | {:.4} | {:.4} | {:.3} |\n",
            c.policy,
            c.n,
            c.cost_mean,
            c.cost_se,
            c.ratio_to_lb,
            c.lb_gap_sigmas,
            c.ssc_gap_sup_median,
            c.b_hat_sup_median,
            c.slowdown_median
        ));
    }
    md.push('\n');

    md.push_str("## Convergence trends\n\n");
    md.push_str("| policy | metric | medians across n | decreasing | significant |\n");
    md.push_str("|---|---|---|---|---|\n");
    for t in &report.trends {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            t.policy,
            t.metric,
            fmt_vec(&t.medians, 4),
            if t.strictly_decreasing { "yes" } else { "no" },
            if t.significant { "yes" } else { "no" }
        ));
    }
    md.push('\n');
    md.push_str("Per-step sign tests (wins / trials, one-sided p):\n\n");
    for t in &report.trends {
        for st in &t.steps {
            md.push_str(&format!(
                "- {} {}: n {} -> {}: {}/{} decreases, p = {:.4}\n",
                t.policy, t.metric, st.from_n, st.to_n, st.wins, st.trials, st.p_value
            ));
        }
    }
    md.push('\n');

    md.push_str("## Slowdown diagnostic\n\n");
    for sl in &report.slowdowns {
        md.push_str(&format!(
            "- {}: median sojourn/service across n = {} ({})\n",
            sl.policy,
            fmt_vec(&sl.medians, 3),
            if sl.in_range {
                "inside (1, inf)"
            } else {
                "outside (1, inf)"
            }
        ));
    }
    md.push('\n');

    if !report.pairwise.is_empty() {
        md.push_str("## Paired policy comparisons (common random numbers)\n\n");
        md.push_str("| n | comparison | wins | trials | p (first > second) |\n");
        md.push_str("|---|---|---|---|---|\n");
        for p in &report.pairwise {
            md.push_str(&format!(
                "| {} | {} > {} | {} | {} | {:.4} |\n",
                p.n, p.first, p.second, p.wins_first_greater, p.trials, p.p_first_greater
            ));
        }
        md.push('\n');
    }

    md.push_str("## Bookkeeping\n\n");
    md.push_str(&format!(
        "- total events {}, invariant violations {}\n",
        report.total_events, report.total_violations
    ));
    md
}

fn cells_csv(report: &StudyReport) -> String {
    let mut out = String::from("policy,n,rep,seed,cost,ssc_gap_sup,b_hat_sup,theta_q_mean\n");
    for c in &report.cells {
        for r in &c.reps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.policy, c.n, r.rep, r.seed, r.cost, r.ssc_gap_sup, r.b_hat_sup, r.theta_q_mean
            ));
        }
    }
    out
}

/// Writes `report.json`, `report.md`, `cells.csv`, `lb.json`, and the
/// archived sample paths under `out_dir`, returning the written paths.
pub fn write_study_outputs(
    outcome: &StudyOutcome,
    edges: &[(usize, usize)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let report_json = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(&report_json, text)?;
    written.push(report_json);

    let lb_json = out_dir.join("lb.json");
    let mut text = serde_json::to_string_pretty(&outcome.report.lower_bound)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(&lb_json, text)?;
    written.push(lb_json);

    let report_md = out_dir.join("report.md");
    std::fs::write(&report_md, render_markdown(&outcome.report))?;
    written.push(report_md);

    let csv = out_dir.join("cells.csv");
    std::fs::write(&csv, cells_csv(&outcome.report))?;
    written.push(csv);

    let paths_dir = out_dir.join("sample-paths");
    std::fs::create_dir_all(&paths_dir)?;
    for sp in &outcome.sample_paths {
        let file = paths_dir.join(format!("{}-n{}.csv", sp.policy, sp.n));
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &sp.path, edges)?;
        std::fs::write(&file, buf)?;
        written.push(file);
    }
    Ok(written)
}

/// Reads a previously written `report.json`.
pub fn load_report(dir: &Path) -> Result<StudyReport> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{} is not a study report: {e}", path.display()))
    })
}
