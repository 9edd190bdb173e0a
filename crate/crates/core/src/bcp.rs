//! Workload diffusion: one-dimensional reflected Brownian motion and the
//! associated cost lower bound.
//!
//! In the heavy-traffic limit the scaled workload converges to a reflected
//! Brownian motion with drift equal to the workload drift and variance equal
//! to the workload variance of the fluid solution, regardless of the policy.
//! Composing that limit with the instantaneous-cost envelope `C*` gives a
//! policy-independent lower bound on the achievable time-average cost, which
//! the study harness estimates by Monte Carlo here.
//!
//! Reflection is computed through the Skorohod map.  Two discretizations are
//! offered: `Grid` reflects the free path at grid points only, which biases
//! the regulator low by order `sqrt(dt)`; `BridgeExact` (the default) also
//! samples the within-step minimum of each Brownian bridge, so the reflected
//! values at grid points follow the exact law for every step size.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostKind, CostSpec};
use crate::error::{Error, Result};
use crate::rng::{rbm_stream, Stream};

/// A function of time sampled on an equispaced grid starting at zero.
#[derive(Clone, Debug)]
pub struct DiscretePath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DiscretePath {
    pub fn horizon(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    /// Trapezoid time average of `f` along the path.
    pub fn time_average<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let k = self.values.len();
        if k < 2 {
            return self.values.first().map_or(0.0, |&v| f(v));
        }
        let mut acc = 0.5 * (f(self.values[0]) + f(self.values[k - 1]));
        for &v in &self.values[1..k - 1] {
            acc += f(v);
        }
        acc / (k - 1) as f64
    }
}

/// Applies the one-sided reflection map at zero to a discrete path.
///
/// The reflected value is `zeta_k` plus the running maximum of `(-zeta_j)+`
/// over `j <= k`, computed in a single pass.
pub fn skorohod_map(zeta: &[f64]) -> Vec<f64> {
    skorohod_decomposition(zeta).0
}

/// Reflection together with its regulator (the running pushing term).
pub fn skorohod_decomposition(zeta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut reflected = Vec::with_capacity(zeta.len());
    let mut regulator = Vec::with_capacity(zeta.len());
    let mut running = 0.0f64;
    for &z in zeta {
        if -z > running {
            running = -z;
        }
        reflected.push(z + running);
        regulator.push(running);
    }
    (reflected, regulator)
}

/// Discretization of the reflection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reflection {
    /// Reflect the free path at grid points only.
    Grid,
    /// Additionally sample each step's Brownian-bridge minimum, making the
    /// grid-point law exact.
    #[default]
    BridgeExact,
}

/// Drift, variance, and starting point of the workload diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub drift: f64,
    pub variance: f64,
    pub x0: f64,
}

impl RbmParams {
    /// Parameters started from an empty system.
    pub fn new(drift: f64, variance: f64) -> RbmParams {
        RbmParams {
            drift,
            variance,
            x0: 0.0,
        }
    }

    /// Stationary mean `variance / (2 |drift|)`, defined for negative drift.
    pub fn stationary_mean(&self) -> Option<f64> {
        if self.drift < 0.0 {
            Some(self.variance / (-2.0 * self.drift))
        } else {
            None
        }
    }
}

fn check_rbm_args(params: &RbmParams, horizon: f64, dt: f64) -> Result<()> {
    if !(params.variance >= 0.0) {
        return Err(Error::Config("diffusion variance must be nonnegative".into()));
    }
    if !params.drift.is_finite() || !params.x0.is_finite() {
        return Err(Error::Config("diffusion parameters must be finite".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Config("diffusion horizon must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("diffusion time step must be positive".into()));
    }
    if dt > horizon / 100.0 {
        return Err(Error::Config(
            "diffusion time step must not exceed one hundredth of the horizon".into(),
        ));
    }
    Ok(())
}

/// Simulates reflected Brownian motion on an equispaced grid.
///
/// Every step consumes one standard normal and one uniform draw regardless of
/// the reflection mode, so the two modes stay coupled under a common stream.
/// The step count is `round(horizon / dt)` and the step is adjusted to hit
/// the horizon exactly.
pub fn simulate_rbm(
    params: &RbmParams,
    horizon: f64,
    dt: f64,
    reflection: Reflection,
    rng: &mut Stream,
) -> Result<DiscretePath> {
    check_rbm_args(params, horizon, dt)?;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let s2dt = params.variance * dt;
    let sdt = s2dt.sqrt();
    let drift_dt = params.drift * dt;

    let mut values = Vec::with_capacity(steps + 1);
    let mut free = params.x0;
    let mut running = (-params.x0).max(0.0);
    values.push(free + running);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random::<f64>();
        let prev = free;
        free += drift_dt + sdt * z;
        if reflection == Reflection::BridgeExact {
            // Minimum of the Brownian bridge between the step endpoints:
            // m = prev + (w - sqrt(w^2 - 2 s^2 dt ln U)) / 2 with w the free
            // increment.
            let w = free - prev;
            let m = prev + 0.5 * (w - (w * w - 2.0 * s2dt * u.max(f64::MIN_POSITIVE).ln()).sqrt());
            if -m > running {
                running = -m;
            }
        }
        if -free > running {
            running = -free;
        }
        values.push(free + running);
    }
    Ok(DiscretePath { dt, values })
}

/// Monte Carlo summary of the diffusion cost lower bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LbEstimate {
    /// Mean over replications of the time-average of `C*` along the workload.
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub reps: usize,
    pub horizon: f64,
    pub dt: f64,
}

/// Estimates the policy-independent lower bound on the time-average cost.
///
/// Each replication simulates the workload diffusion with `BridgeExact`
/// reflection and integrates `C*` along it by the trapezoid rule.  The
/// envelope is evaluated through its positive homogeneity for the linear and
/// separable-power families (degree one and `p`), so only one minimization
/// per estimate is needed; custom costs are minimized at every grid point.
pub fn lower_bound_estimate(
    cost: &CostSpec,
    theta: &[f64],
    params: &RbmParams,
    horizon: f64,
    dt: f64,
    reps: usize,
    seed: u64,
) -> Result<LbEstimate> {
    check_rbm_args(params, horizon, dt)?;
    if reps < 2 {
        return Err(Error::Config(
            "lower-bound estimation needs at least two replications".into(),
        ));
    }
    let integrand: Box<dyn Fn(f64) -> f64 + Send + Sync> = match &cost.kind {
        CostKind::Linear { .. } => {
            let k = cost.c_star(theta, 1.0);
            Box::new(move |a: f64| if a > 0.0 { k * a } else { 0.0 })
        }
        CostKind::SeparablePower { p, .. } => {
            let k = cost.c_star(theta, 1.0);
            let p = *p;
            Box::new(move |a: f64| if a > 0.0 { k * a.powf(p) } else { 0.0 })
        }
        CostKind::Custom { .. } => {
            let cost = cost.clone();
            let theta = theta.to_vec();
            Box::new(move |a: f64| cost.c_star(&theta, a))
        }
    };

    let per_rep: Result<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rbm_stream(seed, r as u64);
            let path = simulate_rbm(params, horizon, dt, Reflection::BridgeExact, &mut rng)?;
            Ok(path.time_average(&integrand))
        })
        .collect();
    let values = per_rep?;

    Ok(LbEstimate {
        mean: crate::stats::mean(&values),
        sd: crate::stats::sd(&values),
        se: crate::stats::se(&values),
        q05: crate::stats::quantile(&values, 0.05),
        q50: crate::stats::quantile(&values, 0.50),
        q95: crate::stats::quantile(&values, 0.95),
        reps,
        horizon,
        dt,
    })
}
