//! First-order (fluid) analysis: the static allocation LP, heavy-traffic and
//! complete-resource-pooling verdicts, the workload direction, and the
//! diffusion drift/variance coefficients.

use crate::error::{Error, Result};
use crate::model::{validate_topology, BaseParameters, Topology};
use crate::simplex::{self, SimplexError};

/// Threshold below which an optimal allocation entry counts as zero.
pub const BASIC_TOL: f64 = 1e-9;
/// Tolerance for the critical-load and saturation verdicts.
pub const HT_TOL: f64 = 1e-9;

/// Optimal solution of the static allocation LP.
#[derive(Clone, Debug)]
pub struct LpOutcome {
    /// ξ*: per-edge fraction of the pool's servers devoted to the class.
    pub xi_star: Vec<f64>,
    /// ρ*: the minimized utilization bound.
    pub rho_star: f64,
}

/// Minimize ρ over substochastic allocations ξ supported on the edge set,
/// subject to exact flow balance μ̄(ξ) = λ and column sums ≤ ρ.
///
/// Infeasibility means no substochastic allocation balances the load: the
/// system is overloaded.
pub fn solve_static_lp(top: &Topology, params: &BaseParameters) -> Result<LpOutcome> {
    let report = validate_topology(top, params);
    if !report.is_ok() {
        return Err(report.to_error());
    }
    let ne = top.edges.len();
    let nj = top.pool_count;
    // columns: ξ per edge | ρ | slack(col ≤ ρ) per pool | slack(col ≤ 1) per pool
    let ncols = ne + 1 + 2 * nj;
    let mut c = vec![0.0; ncols];
    c[ne] = 1.0;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..top.class_count {
        let mut row = vec![0.0; ncols];
        for &e in top.class_edges(i) {
            row[e] = params.mu_bar[e];
        }
        a.push(row);
        b.push(params.lambda[i]);
    }
    for j in 0..nj {
        let mut row = vec![0.0; ncols];
        for &e in top.pool_edges(j) {
            row[e] = 1.0;
        }
        row[ne] = -1.0;
        row[ne + 1 + j] = 1.0;
        a.push(row);
        b.push(0.0);
        let mut cap = vec![0.0; ncols];
        for &e in top.pool_edges(j) {
            cap[e] = 1.0;
        }
        cap[ne + 1 + nj + j] = 1.0;
        a.push(cap);
        b.push(1.0);
    }
    match simplex::solve(&c, &a, &b) {
        Ok(res) => Ok(LpOutcome {
            xi_star: res.x[..ne].iter().map(|&x| if x.abs() < BASIC_TOL { 0.0 } else { x }).collect(),
            rho_star: res.objective,
        }),
        Err(SimplexError::Infeasible) => Err(Error::Fluid(
            "no balanced allocation; the system is overloaded".to_string(),
        )),
        Err(e) => Err(Error::Fluid(format!("LP solver failed: {e:?}"))),
    }
}

/// Support of the optimal allocation and its graph structure.
#[derive(Clone, Debug)]
pub struct BasicStructure {
    /// Edge indices with ξ* above [`BASIC_TOL`], ascending.
    pub edges: Vec<usize>,
    /// All classes and pools lie in one component of the basic-activity graph.
    pub connected: bool,
    /// Connected with exactly I + J − 1 basic edges.
    pub is_tree: bool,
}

/// Extracts the basic-activity edges (ξ* > tolerance) and checks whether they
/// connect, and span as a tree, the bipartite node set.
pub fn extract_basic_tree(top: &Topology, xi_star: &[f64]) -> BasicStructure {
    let edges: Vec<usize> =
        (0..top.edges.len()).filter(|&e| xi_star[e] > BASIC_TOL).collect();
    let nodes = top.class_count + top.pool_count;
    // BFS over the basic subgraph; classes are 0..I, pools I..I+J
    let mut adj = vec![Vec::new(); nodes];
    for &e in &edges {
        let (i, j) = top.edges[e];
        adj[i].push(top.class_count + j);
        adj[top.class_count + j].push(i);
    }
    let mut seen = vec![false; nodes];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    let connected = nodes > 0 && count == nodes;
    BasicStructure { is_tree: connected && edges.len() == nodes - 1, edges, connected }
}

/// Workload direction θ (per class) and pool values z* from the basic tree.
///
/// Seeds class 1 with value 1 and propagates θ_i μ̄_ij = z_j along tree edges,
/// then normalizes θ to unit Euclidean length (z* scales by the same factor).
/// Requires the basic edges to form a spanning tree.
pub fn compute_theta(
    top: &Topology,
    params: &BaseParameters,
    basic_edges: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nc, np) = (top.class_count, top.pool_count);
    let nodes = nc + np;
    if basic_edges.len() != nodes - 1 {
        return Err(Error::Fluid(format!(
            "basic-activity graph with {} edges over {} nodes is not a spanning tree",
            basic_edges.len(),
            nodes
        )));
    }
    let mut adj = vec![Vec::new(); nodes];
    for &e in basic_edges {
        let (i, j) = top.edges[e];
        adj[i].push((nc + j, e));
        adj[nc + j].push((i, e));
    }
    let mut value = vec![f64::NAN; nodes];
    value[0] = 1.0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adj[v] {
            if value[w].is_nan() {
                // v--w is edge e = (class, pool) with θ_class μ̄ = z_pool
                value[w] = if w >= nc {
                    value[v] * params.mu_bar[e]
                } else {
                    value[v] / params.mu_bar[e]
                };
                queue.push_back(w);
            }
        }
    }
    if value.iter().any(|v| v.is_nan()) {
        return Err(Error::Fluid(
            "basic-activity graph is disconnected; no workload direction".to_string(),
        ));
    }
    let norm = value[..nc].iter().map(|t| t * t).sum::<f64>().sqrt();
    let theta: Vec<f64> = value[..nc].iter().map(|t| t / norm).collect();
    let z_star: Vec<f64> = value[nc..].iter().map(|z| z / norm).collect();
    if theta.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Fluid("workload direction is not strictly positive".to_string()));
    }
    Ok((theta, z_star))
}

/// Per-class diffusion drift ℓ_i = λ̂_i − Σ_j μ̂_ij ξ*_ij and variance
/// coefficient σ_i = (λ_i C²_i + Σ_j μ̄_ij ξ*_ij)^{1/2}.
pub fn compute_diffusion_params(
    top: &Topology,
    params: &BaseParameters,
    xi_star: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut ell = Vec::with_capacity(top.class_count);
    let mut sigma = Vec::with_capacity(top.class_count);
    for i in 0..top.class_count {
        let mut drift = params.lambda_hat[i];
        let mut var = params.lambda[i] * params.c_ia[i] * params.c_ia[i];
        for &e in top.class_edges(i) {
            drift -= params.mu_hat[e] * xi_star[e];
            var += params.mu_bar[e] * xi_star[e];
        }
        ell.push(drift);
        sigma.push(var.sqrt());
    }
    (ell, sigma)
}

/// Solves pool saturation (columns sum to 1) plus class balance on a basic
/// forest by peeling leaves; `None` if the system is inconsistent.
fn tree_flow_solution(top: &Topology, params: &BaseParameters, basic: &[usize]) -> Option<Vec<f64>> {
    let (nc, np) = (top.class_count, top.pool_count);
    let nodes = nc + np;
    let mut incident = vec![Vec::new(); nodes];
    for &e in basic {
        let (i, j) = top.edges[e];
        incident[i].push(e);
        incident[nc + j].push(e);
    }
    let mut degree: Vec<usize> = incident.iter().map(|v| v.len()).collect();
    let mut xi = vec![0.0f64; top.edges.len()];
    let mut resolved = vec![false; top.edges.len()];
    let mut leaves: std::collections::VecDeque<usize> =
        (0..nodes).filter(|&v| degree[v] == 1).collect();
    while let Some(v) = leaves.pop_front() {
        if degree[v] != 1 {
            continue;
        }
        let &e = incident[v].iter().find(|&&e| !resolved[e])?;
        let (i, j) = top.edges[e];
        xi[e] = if v < nc {
            let served: f64 =
                incident[v].iter().filter(|&&d| resolved[d]).map(|&d| params.mu_bar[d] * xi[d]).sum();
            (params.lambda[v] - served) / params.mu_bar[e]
        } else {
            let used: f64 = incident[v].iter().filter(|&&d| resolved[d]).map(|&d| xi[d]).sum();
            1.0 - used
        };
        resolved[e] = true;
        for &w in [i, nc + j].iter() {
            degree[w] -= 1;
            if degree[w] == 1 {
                leaves.push_back(w);
            }
        }
    }
    if !basic.iter().all(|&e| resolved[e]) {
        return None; // a cycle in the support
    }
    // consistency: every class and every touched pool equation must hold
    for i in 0..nc {
        let served: f64 = incident[i].iter().map(|&e| params.mu_bar[e] * xi[e]).sum();
        if (served - params.lambda[i]).abs() > 1e-9 * params.lambda[i].max(1.0) {
            return None;
        }
    }
    for j in 0..np {
        if incident[nc + j].is_empty() {
            continue;
        }
        let used: f64 = incident[nc + j].iter().map(|&e| xi[e]).sum();
        if (used - 1.0).abs() > 1e-9 {
            return None;
        }
    }
    Some(xi)
}

/// Complete fluid-level description of a model, with assumption verdicts.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FluidSolution {
    pub xi_star: Vec<f64>,
    pub rho_star: f64,
    /// Basic-activity edge indices, ascending.
    pub basic_edges: Vec<usize>,
    /// Every pool's allocation column sums to 1.
    pub saturated: bool,
    /// Critical load + saturation + certified uniqueness.
    pub ht: bool,
    /// Basic-activity graph connected (complete resource pooling).
    pub crp: bool,
    /// Basic-activity graph is a spanning tree.
    pub tree: bool,
    /// The basic support admits exactly one saturated balanced allocation.
    pub uniqueness_certified: bool,
    /// Workload direction (unit norm), present when the support is a tree.
    pub theta: Option<Vec<f64>>,
    /// Pool workload values on the same scale as θ.
    pub z_star: Option<Vec<f64>>,
    pub ell: Vec<f64>,
    pub sigma: Vec<f64>,
    pub notes: Vec<String>,
}

impl FluidSolution {
    /// Drift of the one-dimensional workload, θ'ℓ.
    pub fn workload_drift(&self) -> Option<f64> {
        let th = self.theta.as_ref()?;
        Some(th.iter().zip(&self.ell).map(|(t, l)| t * l).sum())
    }

    /// Variance rate of the one-dimensional workload, Σ_i θ_i² σ_i².
    pub fn workload_variance(&self) -> Option<f64> {
        let th = self.theta.as_ref()?;
        Some(th.iter().zip(&self.sigma).map(|(t, s)| t * t * s * s).sum())
    }

    pub fn basic_pairs(&self, top: &Topology) -> Vec<(usize, usize)> {
        self.basic_edges.iter().map(|&e| top.edges[e]).collect()
    }
}

/// Full fluid pipeline: LP, support structure, verdicts, workload direction,
/// and diffusion coefficients. Assumption failures are reported as verdict
/// fields, not errors; only unusable inputs (validation failures, an
/// overloaded system) error out.
pub fn analyze(top: &Topology, params: &BaseParameters) -> Result<FluidSolution> {
    let lp = solve_static_lp(top, params)?;
    let structure = extract_basic_tree(top, &lp.xi_star);
    let mut notes = Vec::new();

    let critically_loaded = (lp.rho_star - 1.0).abs() <= HT_TOL;
    if !critically_loaded {
        notes.push(format!("rho_star = {:.6} differs from 1: not critically loaded", lp.rho_star));
    }
    let mut saturated = true;
    for j in 0..top.pool_count {
        let col: f64 = top.pool_edges(j).iter().map(|&e| lp.xi_star[e]).sum();
        if (col - 1.0).abs() > HT_TOL {
            saturated = false;
            notes.push(format!("pool {} allocation sums to {:.6}, not 1", j + 1, col));
        }
    }
    let uniqueness_certified = if structure.edges.len() > top.class_count + top.pool_count - 1 {
        notes.push("uniqueness not certified: basic support carries a cycle".to_string());
        false
    } else if !saturated {
        false
    } else {
        match tree_flow_solution(top, params, &structure.edges) {
            Some(flow) => {
                let ok = flow
                    .iter()
                    .zip(&lp.xi_star)
                    .all(|(a, b)| (a - b).abs() <= 1e-9);
                if !ok {
                    notes.push("uniqueness not certified: tree flow disagrees with the LP".to_string());
                }
                ok
            }
            None => {
                notes.push("uniqueness not certified: tree flow equations inconsistent".to_string());
                false
            }
        }
    };
    let ht = critically_loaded && saturated && uniqueness_certified;
    if !structure.connected {
        notes.push("basic-activity graph is disconnected: resource pooling fails".to_string());
    }

    let (theta, z_star) = if structure.is_tree {
        let (t, z) = compute_theta(top, params, &structure.edges)?;
        (Some(t), Some(z))
    } else {
        (None, None)
    };
    let (ell, sigma) = compute_diffusion_params(top, params, &lp.xi_star);
    Ok(FluidSolution {
        xi_star: lp.xi_star,
        rho_star: lp.rho_star,
        saturated,
        ht,
        crp: structure.connected,
        tree: structure.is_tree,
        uniqueness_certified,
        theta,
        z_star,
        ell,
        sigma,
        notes,
        basic_edges: structure.edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{n_model, ArrivalFamily};
    use crate::rng::Stream;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn w_model() -> (Topology, BaseParameters) {
        let top = Topology::new(2, 2, vec![(0, 0), (1, 0), (1, 1)]);
        let params = BaseParameters {
            lambda: vec![0.5, 1.5],
            lambda_hat: vec![0.0, 0.0],
            nu: vec![1.0, 1.0],
            mu_bar: vec![1.0, 1.0, 1.0],
            mu_hat: vec![0.0, 0.0, 0.0],
            family: vec![ArrivalFamily::Exponential; 2],
            c_ia: vec![1.0, 1.0],
        };
        (top, params)
    }

    fn chain_model() -> (Topology, BaseParameters) {
        let top = Topology::new(3, 3, vec![(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)]);
        let params = BaseParameters {
            lambda: vec![0.6, 1.3, 1.85],
            lambda_hat: vec![0.0, 0.0, 0.0],
            nu: vec![1.0, 1.0, 1.0],
            mu_bar: vec![1.0, 1.5, 1.0, 2.0, 1.25],
            mu_hat: vec![0.0; 5],
            family: vec![ArrivalFamily::Exponential; 3],
            c_ia: vec![1.0, 1.0, 1.0],
        };
        (top, params)
    }

    #[test]
    fn n_model_exact_values() {
        let (top, params) = n_model();
        let sol = analyze(&top, &params).unwrap();
        let s5 = 5.0f64.sqrt();
        for (got, want) in sol.xi_star.iter().zip([1.0, 0.2, 0.8]) {
            assert!(close(*got, want, 1e-9), "xi {:?}", sol.xi_star);
        }
        assert!(close(sol.rho_star, 1.0, 1e-9));
        assert_eq!(sol.basic_edges, vec![0, 1, 2]);
        assert!(sol.saturated && sol.ht && sol.crp && sol.tree && sol.uniqueness_certified);
        let theta = sol.theta.as_ref().unwrap();
        assert!(close(theta[0], 2.0 / s5, 1e-9) && close(theta[1], 1.0 / s5, 1e-9), "{theta:?}");
        let z = sol.z_star.as_ref().unwrap();
        assert!(close(z[0], 2.0 / s5, 1e-9) && close(z[1], 2.0 / s5, 1e-9), "{z:?}");
        assert!(close(sol.ell[0], -1.0, 1e-9) && close(sol.ell[1], 0.0, 1e-9));
        assert!(close(sol.sigma[0], 2.4f64.sqrt(), 1e-9));
        assert!(close(sol.sigma[1], 3.2f64.sqrt(), 1e-9));
        assert!(close(sol.workload_drift().unwrap(), -2.0 / s5, 1e-9));
        assert!(close(sol.workload_variance().unwrap(), 2.56, 1e-9));
    }

    #[test]
    fn underloaded_is_reported_not_an_error() {
        let (top, mut params) = n_model();
        params.lambda = vec![1.0, 1.0];
        let sol = analyze(&top, &params).unwrap();
        assert!(close(sol.rho_star, 0.75, 1e-9));
        for (got, want) in sol.xi_star.iter().zip([0.75, 0.25, 0.5]) {
            assert!(close(*got, want, 1e-9), "xi {:?}", sol.xi_star);
        }
        assert!(!sol.ht && !sol.saturated);
        assert!(sol.notes.iter().any(|m| m.contains("not critically loaded")), "{:?}", sol.notes);
    }

    #[test]
    fn overloaded_is_an_error() {
        let (top, mut params) = n_model();
        params.lambda = vec![2.5, 2.5];
        let err = analyze(&top, &params).unwrap_err();
        assert!(err.to_string().contains("overloaded"), "{err}");
    }

    #[test]
    fn disjoint_systems_pass_ht_but_fail_pooling() {
        let top = Topology::new(2, 2, vec![(0, 0), (1, 1)]);
        let params = BaseParameters {
            lambda: vec![1.0, 1.0],
            lambda_hat: vec![0.0, 0.0],
            nu: vec![1.0, 1.0],
            mu_bar: vec![1.0, 1.0],
            mu_hat: vec![0.0, 0.0],
            family: vec![ArrivalFamily::Exponential; 2],
            c_ia: vec![1.0, 1.0],
        };
        let sol = analyze(&top, &params).unwrap();
        assert!(sol.ht && sol.saturated && sol.uniqueness_certified);
        assert!(!sol.crp && !sol.tree);
        assert!(sol.theta.is_none());
        assert!(sol.notes.iter().any(|m| m.contains("disconnected")), "{:?}", sol.notes);
    }

    #[test]
    fn w_model_workload_direction() {
        let (top, params) = w_model();
        let sol = analyze(&top, &params).unwrap();
        for (got, want) in sol.xi_star.iter().zip([0.5, 0.5, 1.0]) {
            assert!(close(*got, want, 1e-9), "xi {:?}", sol.xi_star);
        }
        assert!(sol.ht && sol.crp && sol.tree);
        let theta = sol.theta.as_ref().unwrap();
        let r = 0.5f64.sqrt();
        assert!(close(theta[0], r, 1e-9) && close(theta[1], r, 1e-9), "{theta:?}");
    }

    #[test]
    fn chain_model_exact_values() {
        let (top, params) = chain_model();
        let sol = analyze(&top, &params).unwrap();
        for (got, want) in sol.xi_star.iter().zip([0.6, 0.4, 0.7, 0.3, 1.0]) {
            assert!(close(*got, want, 1e-9), "xi {:?}", sol.xi_star);
        }
        assert!(sol.ht && sol.crp && sol.tree && sol.uniqueness_certified);
        let theta = sol.theta.as_ref().unwrap();
        let norm = 14.0f64.sqrt();
        for (got, want) in theta.iter().zip([3.0 / norm, 2.0 / norm, 1.0 / norm]) {
            assert!(close(*got, want, 1e-9), "{theta:?}");
        }
    }

    /// Enumerates every grid allocation (step 0.005) satisfying flow balance
    /// within 1e-9 and returns the utilization-minimizing one. Exponential in
    /// the edge count, so only for tiny instances.
    fn grid_oracle(top: &Topology, params: &BaseParameters, step: f64) -> (f64, Vec<f64>, usize) {
        let per_class: Vec<Vec<Vec<f64>>> = (0..top.class_count)
            .map(|i| {
                let edges = top.class_edges(i);
                let mut rows = Vec::new();
                let mut current = vec![0.0; edges.len()];
                fill_rows(edges, &params.mu_bar, params.lambda[i], step, 0, &mut current, &mut rows);
                assert!(!rows.is_empty(), "class {i} has no grid-balanced row");
                rows
            })
            .collect();
        let mut best = f64::INFINITY;
        let mut best_xi = Vec::new();
        let mut ties = 0usize;
        let mut choice = vec![0usize; top.class_count];
        loop {
            let mut xi = vec![0.0; top.edges.len()];
            for i in 0..top.class_count {
                for (k, &e) in top.class_edges(i).iter().enumerate() {
                    xi[e] = per_class[i][choice[i]][k];
                }
            }
            let rho = (0..top.pool_count)
                .map(|j| top.pool_edges(j).iter().map(|&e| xi[e]).sum::<f64>())
                .fold(0.0f64, f64::max);
            if rho < best - 1e-12 {
                best = rho;
                best_xi = xi;
                ties = 1;
            } else if rho < best + 1e-12 {
                ties += 1;
            }
            // odometer over the per-class row choices
            let mut i = 0;
            loop {
                if i == top.class_count {
                    return (best, best_xi, ties);
                }
                choice[i] += 1;
                if choice[i] < per_class[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn fill_rows(
        edges: &[usize],
        mu_bar: &[f64],
        lambda: f64,
        step: f64,
        depth: usize,
        current: &mut Vec<f64>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if depth == edges.len() {
            let served: f64 =
                edges.iter().zip(current.iter()).map(|(&e, &x)| mu_bar[e] * x).sum();
            if (served - lambda).abs() <= 1e-9 {
                out.push(current.clone());
            }
            return;
        }
        let steps = (1.0 / step).round() as usize;
        for m in 0..=steps {
            current[depth] = m as f64 * step;
            fill_rows(edges, mu_bar, lambda, step, depth + 1, current, out);
        }
        current[depth] = 0.0;
    }

    #[test]
    fn lp_matches_brute_force_grid_oracle() {
        for (top, params) in [n_model(), w_model(), chain_model()] {
            let sol = analyze(&top, &params).unwrap();
            let (rho_grid, xi_grid, ties) = grid_oracle(&top, &params, 0.005);
            assert_eq!(ties, 1, "grid optimum not unique");
            assert!(close(sol.rho_star, rho_grid, 0.01), "{} vs {}", sol.rho_star, rho_grid);
            for e in 0..top.edges.len() {
                assert!(close(sol.xi_star[e], xi_grid[e], 1e-9), "{:?} vs {:?}", sol.xi_star, xi_grid);
                assert_eq!(sol.xi_star[e] > BASIC_TOL, xi_grid[e] > BASIC_TOL);
            }
        }
    }

    /// For any substochastic allocation the service capacity along θ cannot
    /// exceed the arrival workload: θ'(μ̄(ξ) − λ) ≤ 0 up to tolerance.
    #[test]
    fn workload_dominates_any_substochastic_allocation() {
        let (top, params) = n_model();
        let sol = analyze(&top, &params).unwrap();
        let theta = sol.theta.as_ref().unwrap();
        let mut rng = Stream::from_seed(0x5eed0001);
        for _ in 0..1000 {
            let mut xi: Vec<f64> = (0..top.edges.len()).map(|_| rng.random::<f64>()).collect();
            for j in 0..top.pool_count {
                let col: f64 = top.pool_edges(j).iter().map(|&e| xi[e]).sum();
                if col > 1.0 {
                    for &e in top.pool_edges(j) {
                        xi[e] /= col;
                    }
                }
            }
            let mut gap = 0.0;
            for i in 0..top.class_count {
                let served: f64 = top.class_edges(i).iter().map(|&e| params.mu_bar[e] * xi[e]).sum();
                gap += theta[i] * (served - params.lambda[i]);
            }
            assert!(gap <= 1e-9, "gap {gap}");
        }
    }

    #[test]
    fn pool_values_are_max_over_incident_edges() {
        for (top, params) in [n_model(), w_model(), chain_model()] {
            let sol = analyze(&top, &params).unwrap();
            let theta = sol.theta.as_ref().unwrap();
            let z = sol.z_star.as_ref().unwrap();
            for j in 0..top.pool_count {
                let max = top
                    .pool_edges(j)
                    .iter()
                    .map(|&e| theta[top.edges[e].0] * params.mu_bar[e])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(close(z[j], max, 1e-12), "pool {j}: {} vs {max}", z[j]);
            }
        }
    }

    #[test]
    fn theta_is_invariant_under_joint_rate_scaling() {
        let (top, params) = n_model();
        let base = analyze(&top, &params).unwrap();
        let mut scaled = params.clone();
        for m in &mut scaled.mu_bar {
            *m *= 3.0;
        }
        for l in &mut scaled.lambda {
            *l *= 3.0;
        }
        let sol = analyze(&top, &scaled).unwrap();
        for (a, b) in sol.xi_star.iter().zip(&base.xi_star) {
            assert!(close(*a, *b, 1e-9));
        }
        for (a, b) in sol.theta.as_ref().unwrap().iter().zip(base.theta.as_ref().unwrap()) {
            assert!(close(*a, *b, 1e-9));
        }
        for (a, b) in sol.z_star.as_ref().unwrap().iter().zip(base.z_star.as_ref().unwrap()) {
            assert!(close(*a, 3.0 * *b, 1e-9));
        }
    }

    #[test]
    fn edge_declaration_order_does_not_change_the_solution() {
        let top = Topology::new(2, 2, vec![(1, 1), (0, 1), (0, 0)]);
        let params = BaseParameters {
            lambda: vec![1.2, 1.6],
            lambda_hat: vec![-1.0, 0.0],
            nu: vec![1.0, 1.0],
            mu_bar: vec![2.0, 1.0, 1.0],
            mu_hat: vec![0.0; 3],
            family: vec![ArrivalFamily::Exponential; 2],
            c_ia: vec![1.0, 1.0],
        };
        let sol = analyze(&top, &params).unwrap();
        for (got, want) in sol.xi_star.iter().zip([0.8, 0.2, 1.0]) {
            assert!(close(*got, want, 1e-9), "xi {:?}", sol.xi_star);
        }
        let theta = sol.theta.as_ref().unwrap();
        let s5 = 5.0f64.sqrt();
        assert!(close(theta[0], 2.0 / s5, 1e-9) && close(theta[1], 1.0 / s5, 1e-9));
    }

    #[test]
    fn theta_requires_a_spanning_tree() {
        let (top, params) = n_model();
        assert!(compute_theta(&top, &params, &[0, 1]).is_err());
    }

    #[test]
    fn tree_flow_rejects_cyclic_support() {
        let top = Topology::new(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let params = BaseParameters {
            lambda: vec![1.0, 1.0],
            lambda_hat: vec![0.0, 0.0],
            nu: vec![1.0, 1.0],
            mu_bar: vec![1.0; 4],
            mu_hat: vec![0.0; 4],
            family: vec![ArrivalFamily::Exponential; 2],
            c_ia: vec![1.0, 1.0],
        };
        assert!(tree_flow_solution(&top, &params, &[0, 1, 2, 3]).is_none());
    }
}
