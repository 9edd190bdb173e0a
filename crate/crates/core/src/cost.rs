//! Queueing cost functions, the reduced (workload) cost, its minimizer, and
//! the perturbed minimizer driving the tracking policy.
//!
//! The reduced cost of a workload level `a` is the cheapest way to hold that
//! much work: `C*(a) = inf { C(q) : q ≥ 0, θ'q = a }`, and `f(a)` is a queue
//! vector attaining it. The perturbed variant `f^n` bends `f` near zero so
//! every non-root class keeps a strictly positive target, which is what lets
//! the tracking policy hold safety stock in each queue.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::Stream;
use rand::Rng;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ClosedFormMinimizer = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

/// Functional form of the queue-length cost C: R_+^I → R_+.
#[derive(Clone)]
pub enum CostKind {
    /// C(q) = Σ c_i q_i with c_i ≥ 0.
    Linear { c: Vec<f64> },
    /// C(q) = Σ c_i q_i^p with c_i > 0 and p > 1.
    SeparablePower { c: Vec<f64>, p: f64 },
    /// Arbitrary continuous nondecreasing evaluator; minimized numerically
    /// unless a closed-form minimizer is supplied. Much slower than the named
    /// kinds, so meant for small studies and tests.
    Custom { evaluator: Evaluator, minimizer: Option<ClosedFormMinimizer> },
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Linear { c } => f.debug_struct("Linear").field("c", c).finish(),
            CostKind::SeparablePower { c, p } => {
                f.debug_struct("SeparablePower").field("c", c).field("p", p).finish()
            }
            CostKind::Custom { minimizer, .. } => f
                .debug_struct("Custom")
                .field("has_minimizer", &minimizer.is_some())
                .finish(),
        }
    }
}

/// A validated cost function together with its reduced-cost machinery.
#[derive(Clone, Debug)]
pub struct CostSpec {
    pub kind: CostKind,
}

impl CostSpec {
    pub fn linear(c: Vec<f64>) -> Self {
        CostSpec { kind: CostKind::Linear { c } }
    }

    pub fn separable_power(c: Vec<f64>, p: f64) -> Self {
        CostSpec { kind: CostKind::SeparablePower { c, p } }
    }

    pub fn custom(evaluator: Evaluator) -> Self {
        CostSpec { kind: CostKind::Custom { evaluator, minimizer: None } }
    }

    pub fn custom_with_minimizer(evaluator: Evaluator, minimizer: ClosedFormMinimizer) -> Self {
        CostSpec { kind: CostKind::Custom { evaluator, minimizer: Some(minimizer) } }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            CostKind::Linear { .. } => "linear",
            CostKind::SeparablePower { .. } => "separable_power",
            CostKind::Custom { .. } => "custom",
        }
    }

    /// Checks coefficient dimensions and positivity constraints.
    pub fn validate(&self, class_count: usize) -> Result<()> {
        match &self.kind {
            CostKind::Linear { c } => {
                if c.len() != class_count {
                    return Err(Error::Cost(format!(
                        "linear cost has {} coefficients for {} classes",
                        c.len(),
                        class_count
                    )));
                }
                if c.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::Cost("linear cost coefficients must be >= 0".to_string()));
                }
            }
            CostKind::SeparablePower { c, p } => {
                if c.len() != class_count {
                    return Err(Error::Cost(format!(
                        "power cost has {} coefficients for {} classes",
                        c.len(),
                        class_count
                    )));
                }
                if c.iter().any(|&x| !(x > 0.0)) {
                    return Err(Error::Cost("power cost coefficients must be > 0".to_string()));
                }
                if !(*p > 1.0) {
                    return Err(Error::Cost(format!("power cost exponent must exceed 1, got {p}")));
                }
            }
            CostKind::Custom { .. } => {}
        }
        Ok(())
    }

    /// Evaluates C(q).
    pub fn evaluate(&self, q: &[f64]) -> f64 {
        match &self.kind {
            CostKind::Linear { c } => c.iter().zip(q).map(|(ci, qi)| ci * qi).sum(),
            CostKind::SeparablePower { c, p } => {
                c.iter().zip(q).map(|(ci, qi)| ci * qi.powf(*p)).sum()
            }
            CostKind::Custom { evaluator, .. } => evaluator(q),
        }
    }

    /// Reduced cost C*(a) = inf { C(q) : q ≥ 0, θ'q = a }, extended by
    /// C*(a) = C*(0) for a < 0.
    pub fn c_star(&self, theta: &[f64], a: f64) -> f64 {
        self.evaluate(&self.minimizer(theta, a))
    }

    /// A queue vector attaining the reduced cost, with θ'f(a) = a.
    ///
    /// Linear costs put all mass on the cheapest class per unit of workload
    /// (ties to the higher index); separable powers solve the Lagrange
    /// condition by bisection on the multiplier; custom kinds run coordinate
    /// descent over the workload slice unless a closed form was supplied.
    pub fn minimizer(&self, theta: &[f64], a: f64) -> Vec<f64> {
        let a = a.max(0.0);
        if a == 0.0 {
            return vec![0.0; theta.len()];
        }
        match &self.kind {
            CostKind::Linear { c } => {
                let root = linear_root(c, theta);
                let mut q = vec![0.0; theta.len()];
                q[root] = a / theta[root];
                q
            }
            CostKind::SeparablePower { c, p } => power_minimizer(c, *p, theta, a),
            CostKind::Custom { minimizer: Some(m), .. } => m(theta, a),
            CostKind::Custom { evaluator, .. } => descend_on_slice(evaluator, theta, a),
        }
    }

    /// Default root class for the tracking policy: the cheapest class per
    /// unit of workload for linear costs, otherwise the largest class index.
    pub fn default_root(&self, theta: &[f64]) -> usize {
        match &self.kind {
            CostKind::Linear { c } => linear_root(c, theta),
            _ => theta.len() - 1,
        }
    }
}

/// argmin_i c_i/θ_i with ties (to relative tolerance) to the higher index.
fn linear_root(c: &[f64], theta: &[f64]) -> usize {
    let ratios: Vec<f64> = c.iter().zip(theta).map(|(ci, ti)| ci / ti).collect();
    let best = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1e-300);
    (0..ratios.len()).rev().find(|&i| ratios[i] <= best + tol).unwrap()
}

/// Solves p c_i q_i^{p−1} = m θ_i with Σ θ_i q_i = a by bisection on m ≥ 0.
fn power_minimizer(c: &[f64], p: f64, theta: &[f64], a: f64) -> Vec<f64> {
    let q_of = |m: f64| -> Vec<f64> {
        c.iter()
            .zip(theta)
            .map(|(ci, ti)| (m * ti / (p * ci)).powf(1.0 / (p - 1.0)))
            .collect()
    };
    let workload = |m: f64| -> f64 { theta.iter().zip(q_of(m)).map(|(t, q)| t * q).sum() };
    let mut hi = 1.0;
    while workload(hi) < a {
        hi *= 2.0;
        assert!(hi.is_finite(), "multiplier bracket diverged");
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if workload(mid) < a {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    // polish the remaining constraint error by rescaling along the ray
    let mut q = q_of(0.5 * (lo + hi));
    let w: f64 = theta.iter().zip(&q).map(|(t, qi)| t * qi).sum();
    if w > 0.0 {
        for qi in &mut q {
            *qi *= a / w;
        }
    }
    q
}

/// Numeric minimization of an arbitrary evaluator over {q ≥ 0, θ'q = a}.
///
/// Works in the transfer coordinates t_i = θ_i q_i (so the slice is the
/// simplex Σ t_i = a) and repeatedly line-searches pairwise transfers on a
/// refining grid with the segment endpoints included, so minima at corners
/// are hit exactly. Restarted from 16 random points; deterministic in `a`.
fn descend_on_slice(evaluator: &Evaluator, theta: &[f64], a: f64) -> Vec<f64> {
    let n = theta.len();
    let cost_of = |t: &[f64]| -> f64 {
        let q: Vec<f64> = t.iter().zip(theta).map(|(ti, th)| ti / th).collect();
        evaluator(&q)
    };
    let norm2: f64 = theta.iter().map(|t| t * t).sum();
    let mut best_t: Vec<f64> = theta.iter().map(|t| a * t * t / norm2).collect();
    let mut best_v = cost_of(&best_t);
    let mut rng = Stream::from_seed(0xc057_f00d ^ a.to_bits());
    for restart in 0..=16 {
        let mut t = if restart == 0 {
            best_t.clone()
        } else {
            let raw: Vec<f64> = (0..n).map(|_| -(rng.random::<f64>().max(1e-12)).ln()).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|x| a * x / sum).collect()
        };
        let mut v = cost_of(&t);
        for _round in 0..10 {
            let mut improved = false;
            for i in 0..n {
                for k in (i + 1)..n {
                    let s = t[i] + t[k];
                    if s <= 0.0 {
                        continue;
                    }
                    let phi = |x: f64| {
                        let mut probe = t.clone();
                        probe[i] = x;
                        probe[k] = s - x;
                        cost_of(&probe)
                    };
                    let (x, value) = line_minimum(&phi, s);
                    if value < v - 1e-12 {
                        t[i] = x;
                        t[k] = s - x;
                        v = value;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if v < best_v {
            best_v = v;
            best_t = t;
        }
    }
    best_t.iter().zip(theta).map(|(ti, th)| ti / th).collect()
}

/// Minimizes φ over [0, s] by a 33-point scan refined 10 times around the
/// incumbent, shrinking the window to 15% each round.
fn line_minimum(phi: &dyn Fn(f64) -> f64, s: f64) -> (f64, f64) {
    let scan = |lo: f64, hi: f64, best: &mut (f64, f64)| {
        for k in 0..=32 {
            let x = lo + (hi - lo) * k as f64 / 32.0;
            let v = phi(x);
            if v < best.1 {
                *best = (x, v);
            }
        }
    };
    let mut best = (0.0, phi(0.0));
    scan(0.0, s, &mut best);
    let mut width = s;
    for _ in 0..10 {
        width *= 0.15;
        let lo = (best.0 - width).max(0.0);
        let hi = (best.0 + width).min(s);
        scan(lo, hi, &mut best);
    }
    best
}

/// κ_n = coeff · n^{−exponent}.
pub fn kappa_schedule(n: u64, coeff: f64, exponent: f64) -> f64 {
    coeff * (n as f64).powf(-exponent)
}

/// The perturbed minimizer f^n: like f, but every non-root class is floored
/// at a strictly positive target for workloads above κ, with the floor phased
/// in below κ and the true minimizer blended back in above κ̄. The root class
/// absorbs the difference so that θ'f^n(x) = x exactly.
#[derive(Clone, Debug)]
pub struct PerturbedMinimizer {
    cost: CostSpec,
    theta: Vec<f64>,
    root: usize,
    kappa: f64,
    kappa_bar: f64,
    /// Minimizer at workload 1 for positively homogeneous cost families, so
    /// per-call evaluation scales it instead of re-running the search.
    unit_direction: Option<Vec<f64>>,
}

impl PerturbedMinimizer {
    pub fn new(
        cost: CostSpec,
        theta: Vec<f64>,
        root: usize,
        kappa: f64,
        kappa_bar: f64,
    ) -> Result<Self> {
        if root >= theta.len() {
            return Err(Error::Cost(format!("root class {} out of range", root + 1)));
        }
        if theta.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Cost("workload direction must be strictly positive".to_string()));
        }
        if !(kappa > 0.0 && kappa < kappa_bar) {
            return Err(Error::Cost(format!(
                "perturbation thresholds must satisfy 0 < kappa < kappa_bar, got {kappa} and {kappa_bar}"
            )));
        }
        let unit_direction = match cost.kind {
            CostKind::Linear { .. } | CostKind::SeparablePower { .. } => {
                Some(cost.minimizer(&theta, 1.0))
            }
            CostKind::Custom { .. } => None,
        };
        Ok(PerturbedMinimizer { cost, theta, root, kappa, kappa_bar, unit_direction })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kappa_bar(&self) -> f64 {
        self.kappa_bar
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Evaluates f^n(x); zero for x ≤ 0.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let count = self.theta.len();
        if x <= 0.0 {
            return vec![0.0; count];
        }
        let i_count = count as f64;
        let f = if x >= self.kappa_bar {
            match &self.unit_direction {
                Some(unit) => unit.iter().map(|&d| d * x).collect(),
                None => self.cost.minimizer(&self.theta, x),
            }
        } else {
            Vec::new()
        };
        let mut out = vec![0.0; count];
        let mut absorbed = 0.0;
        for i in 0..count {
            if i == self.root {
                continue;
            }
            let floor = |v: f64| v / (i_count * self.theta[i]);
            out[i] = if x < self.kappa {
                floor(x)
            } else if x < self.kappa_bar {
                floor(self.kappa)
            } else {
                f[i] * (1.0 - self.kappa_bar / x) + floor(self.kappa)
            };
            absorbed += self.theta[i] * out[i];
        }
        out[self.root] = (x - absorbed) / self.theta[self.root];
        out
    }
}
