//! System description: routing topology, base-rate parameters, and the n-th
//! member of the scaling sequence.
//!
//! Conventions used throughout the crate: classes and pools are 0-based
//! internally (config files are 1-based), and per-edge quantities are stored
//! in vectors aligned with `Topology::edges`, so anything off the edge set is
//! structurally zero.

use crate::error::{Error, Result};

/// Bipartite compatibility graph between customer classes and server pools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub class_count: usize,
    pub pool_count: usize,
    /// (class, pool) pairs in declaration order.
    pub edges: Vec<(usize, usize)>,
    class_edges: Vec<Vec<usize>>,
    pool_edges: Vec<Vec<usize>>,
}

impl Topology {
    /// Stores the graph and builds adjacency. Out-of-range edges are kept (so
    /// [`validate_topology`] can report them) but excluded from adjacency.
    pub fn new(class_count: usize, pool_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut class_edges = vec![Vec::new(); class_count];
        let mut pool_edges = vec![Vec::new(); pool_count];
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i < class_count && j < pool_count {
                class_edges[i].push(e);
                pool_edges[j].push(e);
            }
        }
        Topology { class_count, pool_count, edges, class_edges, pool_edges }
    }

    /// Edge indices incident to class `i`.
    pub fn class_edges(&self, i: usize) -> &[usize] {
        &self.class_edges[i]
    }

    /// Edge indices incident to pool `j`.
    pub fn pool_edges(&self, j: usize) -> &[usize] {
        &self.pool_edges[j]
    }

    pub fn edge_index(&self, class: usize, pool: usize) -> Option<usize> {
        self.edges.iter().position(|&(i, j)| (i, j) == (class, pool))
    }
}

/// Interarrival distribution family for one class. All families are unit-mean;
/// the squared coefficient of variation is the `c_ia` parameter squared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalFamily {
    Deterministic,
    Exponential,
    Gamma,
    Lognormal,
}

impl ArrivalFamily {
    pub fn name(self) -> &'static str {
        match self {
            ArrivalFamily::Deterministic => "deterministic",
            ArrivalFamily::Exponential => "exponential",
            ArrivalFamily::Gamma => "gamma",
            ArrivalFamily::Lognormal => "lognormal",
        }
    }
}

/// First- and second-order rate parameters of the scaling sequence.
///
/// Per-class: `lambda` (first-order arrival rates, order n), `lambda_hat`
/// (second-order arrival perturbations, order √n), arrival family and
/// interarrival coefficient of variation `c_ia`. Per-pool: `nu` (pool sizes in
/// units of √n). Per-edge: `mu_bar` (first-order aggregate service rates) and
/// `mu_hat` (second-order perturbations).
#[derive(Clone, Debug)]
pub struct BaseParameters {
    pub lambda: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu_bar: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub family: Vec<ArrivalFamily>,
    pub c_ia: Vec<f64>,
}

/// Outcome of structural validation: an empty finding list means the pair
/// (topology, parameters) is usable.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub findings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn to_error(&self) -> Error {
        Error::Model(format!("validation failed: {}", self.findings.join("; ")))
    }
}

/// Checks the compatibility graph and parameter vectors; reports every
/// violation rather than stopping at the first.
pub fn validate_topology(top: &Topology, params: &BaseParameters) -> ValidationReport {
    let mut f = Vec::new();
    let (nc, np, ne) = (top.class_count, top.pool_count, top.edges.len());
    if nc == 0 {
        f.push("no classes".to_string());
    }
    if np == 0 {
        f.push("no pools".to_string());
    }
    if ne == 0 {
        f.push("no edges".to_string());
    }
    for (e, &(i, j)) in top.edges.iter().enumerate() {
        if i >= nc {
            f.push(format!("edge {} references class {} out of range", e + 1, i + 1));
        }
        if j >= np {
            f.push(format!("edge {} references pool {} out of range", e + 1, j + 1));
        }
        if top.edges[..e].contains(&(i, j)) {
            f.push(format!("duplicate edge (class {}, pool {})", i + 1, j + 1));
        }
    }
    for i in 0..nc {
        if top.class_edges(i).is_empty() {
            f.push(format!("class {} has no compatible pool", i + 1));
        }
    }
    for j in 0..np {
        if top.pool_edges(j).is_empty() {
            f.push(format!("pool {} serves no class", j + 1));
        }
    }
    let dims: [(&str, usize, usize); 7] = [
        ("lambda", params.lambda.len(), nc),
        ("lambda_hat", params.lambda_hat.len(), nc),
        ("family", params.family.len(), nc),
        ("c_ia", params.c_ia.len(), nc),
        ("nu", params.nu.len(), np),
        ("mu_bar", params.mu_bar.len(), ne),
        ("mu_hat", params.mu_hat.len(), ne),
    ];
    for (name, got, want) in dims {
        if got != want {
            f.push(format!("{name} has {got} entries, expected {want}"));
        }
    }
    for (i, &l) in params.lambda.iter().enumerate() {
        if !(l > 0.0) {
            f.push(format!("lambda[{}] = {} must be positive", i + 1, l));
        }
    }
    for (j, &v) in params.nu.iter().enumerate() {
        if !(v > 0.0) {
            f.push(format!("nu[{}] = {} must be positive", j + 1, v));
        }
    }
    for (e, &m) in params.mu_bar.iter().enumerate() {
        if !(m > 0.0) {
            f.push(format!("mu_bar on edge {} is {} (zero rate on an edge)", e + 1, m));
        }
    }
    for (x, name) in [(&params.lambda_hat, "lambda_hat"), (&params.mu_hat, "mu_hat")] {
        for (k, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                f.push(format!("{name}[{}] is not finite", k + 1));
            }
        }
    }
    let n_arr = params.family.len().min(params.c_ia.len()).min(nc);
    for i in 0..n_arr {
        let c = params.c_ia[i];
        if !(c >= 0.0) || !c.is_finite() {
            f.push(format!("c_ia[{}] = {} must be finite and nonnegative", i + 1, c));
            continue;
        }
        match params.family[i] {
            ArrivalFamily::Deterministic if c != 0.0 => {
                f.push(format!("class {}: deterministic arrivals require c_ia = 0", i + 1))
            }
            ArrivalFamily::Exponential if (c - 1.0).abs() > 1e-12 => {
                f.push(format!("class {}: exponential arrivals require c_ia = 1", i + 1))
            }
            ArrivalFamily::Gamma | ArrivalFamily::Lognormal if c <= 0.0 => {
                f.push(format!("class {}: {} arrivals require c_ia > 0", i + 1, params.family[i].name()))
            }
            _ => {}
        }
    }
    ValidationReport { findings: f }
}

/// The n-th system: concrete arrival rates, pool sizes, and per-server rates.
#[derive(Clone, Debug)]
pub struct SystemInstance {
    pub n: u64,
    pub sqrt_n: f64,
    pub topology: Topology,
    pub params: BaseParameters,
    /// λ^n_i = n λ_i + √n λ̂_i
    pub lambda_n: Vec<f64>,
    /// N^n_j = round(ν_j √n)
    pub pool_size: Vec<u64>,
    /// Per-server service rates, chosen so the pool aggregate is exact:
    /// μ^n_ij = (n μ̄_ij + √n μ̂_ij) / N^n_j
    pub mu_n: Vec<f64>,
    /// Diffusion-scale per-server rates μ_ij = μ̄_ij / ν_j.
    pub mu_diff: Vec<f64>,
    /// Rounding residue ε^n_ij = n^{-1/2} μ^n_ij − μ_ij.
    pub eps_n: Vec<f64>,
}

/// Builds the n-th system from validated base parameters.
pub fn build_instance(top: &Topology, params: &BaseParameters, n: u64) -> Result<SystemInstance> {
    let report = validate_topology(top, params);
    if !report.is_ok() {
        return Err(report.to_error());
    }
    if n == 0 {
        return Err(Error::Model("n must be positive".to_string()));
    }
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let mut lambda_n = Vec::with_capacity(top.class_count);
    for i in 0..top.class_count {
        let l = nf * params.lambda[i] + sqrt_n * params.lambda_hat[i];
        if !(l > 0.0) {
            return Err(Error::Model(format!(
                "arrival rate for class {} is {l:.6} at n = {n}; second-order term too negative",
                i + 1
            )));
        }
        lambda_n.push(l);
    }
    let mut pool_size = Vec::with_capacity(top.pool_count);
    for j in 0..top.pool_count {
        let s = (params.nu[j] * sqrt_n).round();
        if s < 1.0 {
            return Err(Error::Model(format!(
                "pool {} rounds to zero servers at n = {n} (nu = {})",
                j + 1,
                params.nu[j]
            )));
        }
        pool_size.push(s as u64);
    }
    let mut mu_n = Vec::with_capacity(top.edges.len());
    let mut mu_diff = Vec::with_capacity(top.edges.len());
    let mut eps_n = Vec::with_capacity(top.edges.len());
    for (e, &(_i, j)) in top.edges.iter().enumerate() {
        let m = (nf * params.mu_bar[e] + sqrt_n * params.mu_hat[e]) / pool_size[j] as f64;
        if !(m > 0.0) {
            return Err(Error::Model(format!(
                "service rate on edge {} is {m:.6} at n = {n}; second-order term too negative",
                e + 1
            )));
        }
        let md = params.mu_bar[e] / params.nu[j];
        mu_n.push(m);
        mu_diff.push(md);
        eps_n.push(m / sqrt_n - md);
    }
    Ok(SystemInstance {
        n,
        sqrt_n,
        topology: top.clone(),
        params: params.clone(),
        lambda_n,
        pool_size,
        mu_n,
        mu_diff,
        eps_n,
    })
}

/// Largest-remainder apportionment of `seats` indivisible units to fractional
/// `targets`; remainder ties go to the lower index.
pub fn largest_remainder(targets: &[f64], seats: u64) -> Vec<u64> {
    let mut alloc: Vec<u64> = targets.iter().map(|t| t.max(0.0).floor() as u64).collect();
    let assigned: u64 = alloc.iter().sum();
    assert!(
        assigned <= seats,
        "targets floor to {assigned}, more than the {seats} available seats"
    );
    let mut extra = seats - assigned;
    let mut order: Vec<usize> = (0..targets.len()).collect();
    // descending fractional part, ties by ascending index
    order.sort_by(|&a, &b| {
        let fa = targets[a].max(0.0).fract();
        let fb = targets[b].max(0.0).fract();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while extra > 0 {
        alloc[order[k % order.len()]] += 1;
        k += 1;
        extra -= 1;
    }
    alloc
}

/// Initial busy-server counts per edge: each pool's servers are split among
/// its classes in proportion to ξ*, rounded by largest remainder. Under a
/// critically loaded allocation (saturated columns) every server starts busy;
/// otherwise round(Σ_i ξ*_ij N_j) servers start busy and the rest idle.
pub fn initial_allocation(instance: &SystemInstance, xi_star: &[f64]) -> Vec<u64> {
    let top = &instance.topology;
    let mut b = vec![0u64; top.edges.len()];
    for j in 0..top.pool_count {
        let nj = instance.pool_size[j];
        let edges = top.pool_edges(j);
        let targets: Vec<f64> = edges.iter().map(|&e| xi_star[e] * nj as f64).collect();
        let seats = (targets.iter().sum::<f64>().round() as u64).min(nj);
        let alloc = largest_remainder(&targets, seats);
        for (k, &e) in edges.iter().enumerate() {
            b[e] = alloc[k];
        }
    }
    b
}

/// Shared test fixture: the two-class, two-pool N system with class 1 served
/// by both pools and class 2 by pool 2 only.
#[cfg(test)]
pub(crate) fn n_model() -> (Topology, BaseParameters) {
    let top = Topology::new(2, 2, vec![(0, 0), (0, 1), (1, 1)]);
    let params = BaseParameters {
        lambda: vec![1.2, 1.6],
        lambda_hat: vec![-1.0, 0.0],
        nu: vec![1.0, 1.0],
        mu_bar: vec![1.0, 1.0, 2.0],
        mu_hat: vec![0.0, 0.0, 0.0],
        family: vec![ArrivalFamily::Exponential, ArrivalFamily::Exponential],
        c_ia: vec![1.0, 1.0],
    };
    (top, params)
}
