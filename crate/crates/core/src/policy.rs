//! Scheduling policies: the workload-tracking policy built on the basic
//! activity tree, plus three reference baselines.
//!
//! The tracking policy labels the tree nodes once, then makes each decision
//! from the pre-event state: arrivals go to the lowest-labeled idle child
//! pool (or queue), and a freed server admits the lowest-labeled child class
//! whose scaled queue exceeds its perturbed target, falling back to the
//! pool's parent class. Everything here is a pure function of the supplied
//! state view, so replaying an event log reproduces identical decisions.

use crate::cost::{kappa_schedule, CostSpec, PerturbedMinimizer};
use crate::error::{Error, Result};
use crate::fluid::FluidSolution;
use crate::model::{SystemInstance, Topology};
use crate::rng::Stream;
use rand::Rng;

/// Node labeling of the basic-activity tree rooted at a class.
///
/// Labels decrease with distance from the root: the two farthest-from-root
/// orderings give classes labels 1..I and pools labels I+1..I+J, with equal
/// distances broken by ascending original index.
#[derive(Clone, Debug)]
pub struct TreeLabeling {
    /// Root class i₀.
    pub root: usize,
    /// Class labels, a bijection onto 1..=I.
    pub class_label: Vec<u32>,
    /// Pool labels, a bijection onto I+1..=I+J.
    pub pool_label: Vec<u32>,
    /// The highest-labeled pool adjacent to the root.
    pub j0: usize,
    /// Tree distance from the root; classes sit at even, pools at odd depth.
    pub class_depth: Vec<u32>,
    pub pool_depth: Vec<u32>,
    /// Pools directly below each class, ascending label.
    pub child_pools: Vec<Vec<usize>>,
    /// The pool directly above each class; `None` for the root.
    pub parent_pool: Vec<Option<usize>>,
    /// Classes directly below each pool, ascending label.
    pub child_classes: Vec<Vec<usize>>,
    /// The class directly above each pool (always exists in a tree rooted at
    /// a class).
    pub parent_class: Vec<usize>,
}

/// Labels the basic-activity spanning tree from the given root class.
pub fn label_tree(top: &Topology, basic_edges: &[usize], root_class: usize) -> Result<TreeLabeling> {
    let (nc, np) = (top.class_count, top.pool_count);
    let nodes = nc + np;
    if root_class >= nc {
        return Err(Error::Fluid(format!("root class {} out of range", root_class + 1)));
    }
    if basic_edges.len() != nodes - 1 {
        return Err(Error::Fluid(format!(
            "cannot label: {} basic edges over {} nodes is not a spanning tree",
            basic_edges.len(),
            nodes
        )));
    }
    let mut adj = vec![Vec::new(); nodes];
    for &e in basic_edges {
        let (i, j) = top.edges[e];
        adj[i].push(nc + j);
        adj[nc + j].push(i);
    }
    let mut depth = vec![u32::MAX; nodes];
    depth[root_class] = 0;
    let mut queue = std::collections::VecDeque::from([root_class]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if depth[w] == u32::MAX {
                depth[w] = depth[v] + 1;
                queue.push_back(w);
            }
        }
    }
    if depth.iter().any(|&d| d == u32::MAX) {
        return Err(Error::Fluid(
            "cannot label: basic-activity graph is not connected".to_string(),
        ));
    }
    let order_by_depth = |count: usize, offset: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..count).collect();
        idx.sort_by_key(|&k| (std::cmp::Reverse(depth[offset + k]), k));
        idx
    };
    let mut class_label = vec![0u32; nc];
    for (pos, &i) in order_by_depth(nc, 0).iter().enumerate() {
        class_label[i] = pos as u32 + 1;
    }
    let mut pool_label = vec![0u32; np];
    for (pos, &j) in order_by_depth(np, nc).iter().enumerate() {
        pool_label[j] = (nc + pos) as u32 + 1;
    }
    let mut child_pools = vec![Vec::new(); nc];
    let mut parent_pool = vec![None; nc];
    let mut child_classes = vec![Vec::new(); np];
    let mut parent_class = vec![usize::MAX; np];
    for &e in basic_edges {
        let (i, j) = top.edges[e];
        if depth[nc + j] == depth[i] + 1 {
            child_pools[i].push(j);
            parent_class[j] = i;
        } else {
            child_classes[j].push(i);
            parent_pool[i] = Some(j);
        }
    }
    for pools in &mut child_pools {
        pools.sort_by_key(|&j| pool_label[j]);
    }
    for classes in &mut child_classes {
        classes.sort_by_key(|&i| class_label[i]);
    }
    debug_assert!(parent_class.iter().all(|&i| i != usize::MAX));
    let j0 = child_pools[root_class]
        .iter()
        .copied()
        .max_by_key(|&j| pool_label[j])
        .ok_or_else(|| Error::Fluid("root class has no adjacent pool".to_string()))?;
    Ok(TreeLabeling {
        root: root_class,
        class_label,
        pool_label,
        j0,
        class_depth: depth[..nc].to_vec(),
        pool_depth: depth[nc..].to_vec(),
        child_pools,
        parent_pool,
        child_classes,
        parent_class,
    })
}

/// What a policy does with the event it was asked about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// Send the arriving customer straight into service at this pool.
    RouteToPool(usize),
    /// Let the arriving customer wait in its class queue.
    Queue,
    /// Put the freed server to work on the head customer of this class.
    AdmitClass(usize),
    /// Leave the freed server idle.
    StayIdle,
}

/// Read-only snapshot of the pre-event state a policy may condition on.
#[derive(Clone, Copy, Debug)]
pub struct QueueView<'a> {
    /// Customers waiting, per class.
    pub queue: &'a [u64],
    /// Customers present (waiting or in service), per class.
    pub in_system: &'a [u64],
    /// Idle servers, per pool.
    pub idle: &'a [u64],
    /// Arrival time of the earliest waiting customer per class; +inf when
    /// the queue is empty.
    pub head_arrival: &'a [f64],
}

/// Which policy to run; parsed from CLI flags and config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Tracking,
    Greedy,
    RandomCompatible,
    FifoPriority,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Tracking => "tracking",
            PolicyKind::Greedy => "greedy",
            PolicyKind::RandomCompatible => "random",
            PolicyKind::FifoPriority => "fifo",
        }
    }

    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Tracking,
        PolicyKind::Greedy,
        PolicyKind::RandomCompatible,
        PolicyKind::FifoPriority,
    ];
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tracking" => Ok(PolicyKind::Tracking),
            "greedy" | "greedy_longest_queue" => Ok(PolicyKind::Greedy),
            "random" | "random_compatible" => Ok(PolicyKind::RandomCompatible),
            "fifo" | "fifo_priority" => Ok(PolicyKind::FifoPriority),
            other => Err(Error::Config(format!(
                "unknown policy '{other}' (expected tracking, greedy, random, or fifo)"
            ))),
        }
    }
}

/// Knobs for the tracking policy; defaults follow the shipped schedule
/// κ_n = n^{-1/20}, κ̄_n = n^{-1/100}.
#[derive(Clone, Copy, Debug)]
pub struct TrackingParams {
    /// Root class override; defaults to the cost function's suggestion.
    pub root_class: Option<usize>,
    pub kappa_coeff: f64,
    pub kappa_exponent: f64,
    pub kappa_bar_coeff: f64,
    pub kappa_bar_exponent: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            root_class: None,
            kappa_coeff: 1.0,
            kappa_exponent: 1.0 / 20.0,
            kappa_bar_coeff: 1.0,
            kappa_bar_exponent: 1.0 / 100.0,
        }
    }
}

/// The workload-tracking policy with its precomputed labeling, perturbed
/// minimizer, and centering offsets o_i = Σ_j ξ*_ij N_j^n.
#[derive(Clone, Debug)]
pub struct TrackingPolicy {
    pub labeling: TreeLabeling,
    pub minimizer: PerturbedMinimizer,
    theta: Vec<f64>,
    offset: Vec<f64>,
    sqrt_n: f64,
}

impl TrackingPolicy {
    /// Diffusion-scaled head-count deviation X̂ = (X − o)/√n and the scalar
    /// workload w = θ'X̂ for the given state.
    pub fn workload(&self, view: &QueueView) -> f64 {
        let mut w = 0.0;
        for i in 0..self.theta.len() {
            w += self.theta[i] * (view.in_system[i] as f64 - self.offset[i]) / self.sqrt_n;
        }
        w
    }
}

/// A ready-to-run policy instance.
#[derive(Clone, Debug)]
pub enum Policy {
    Tracking(TrackingPolicy),
    Greedy,
    RandomCompatible,
    FifoPriority,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Tracking(_) => PolicyKind::Tracking,
            Policy::Greedy => PolicyKind::Greedy,
            Policy::RandomCompatible => PolicyKind::RandomCompatible,
            Policy::FifoPriority => PolicyKind::FifoPriority,
        }
    }

    /// Builds a policy for one system instance. The tracking policy needs the
    /// fluid solution to carry a basic-activity spanning tree and a workload
    /// direction; the baselines work for any model.
    pub fn build(
        kind: PolicyKind,
        instance: &SystemInstance,
        fluid: &FluidSolution,
        cost: &CostSpec,
        params: &TrackingParams,
    ) -> Result<Policy> {
        if kind != PolicyKind::Tracking {
            return Ok(match kind {
                PolicyKind::Greedy => Policy::Greedy,
                PolicyKind::RandomCompatible => Policy::RandomCompatible,
                PolicyKind::FifoPriority => Policy::FifoPriority,
                PolicyKind::Tracking => unreachable!(),
            });
        }
        let theta = fluid.theta.clone().ok_or_else(|| {
            Error::Fluid("tracking policy requires a basic-activity spanning tree".to_string())
        })?;
        if !fluid.tree {
            return Err(Error::Fluid(
                "tracking policy requires a basic-activity spanning tree".to_string(),
            ));
        }
        let root = match params.root_class {
            Some(r) if r < theta.len() => r,
            Some(r) => {
                return Err(Error::Config(format!("root class {} out of range", r + 1)));
            }
            None => cost.default_root(&theta),
        };
        let kappa = kappa_schedule(instance.n, params.kappa_coeff, params.kappa_exponent);
        let kappa_bar =
            kappa_schedule(instance.n, params.kappa_bar_coeff, params.kappa_bar_exponent);
        let minimizer = PerturbedMinimizer::new(cost.clone(), theta.clone(), root, kappa, kappa_bar)?;
        let labeling = label_tree(&instance.topology, &fluid.basic_edges, root)?;
        let offset: Vec<f64> = (0..instance.topology.class_count)
            .map(|i| {
                instance.topology.class_edges(i)
                    .iter()
                    .map(|&e| fluid.xi_star[e] * instance.pool_size[instance.topology.edges[e].1] as f64)
                    .sum()
            })
            .collect();
        Ok(Policy::Tracking(TrackingPolicy {
            labeling,
            minimizer,
            theta,
            offset,
            sqrt_n: instance.sqrt_n,
        }))
    }

    /// Classes whose queues this policy can serve from pool `j`; used by the
    /// work-conservation check. The tracking policy only uses tree edges.
    pub fn compatible_classes(&self, top: &Topology, pool: usize) -> Vec<usize> {
        match self {
            Policy::Tracking(t) => {
                let mut classes = t.labeling.child_classes[pool].clone();
                classes.push(t.labeling.parent_class[pool]);
                classes
            }
            _ => top.pool_edges(pool).iter().map(|&e| top.edges[e].0).collect(),
        }
    }

    /// Decision for a class-`i` arrival, evaluated on the pre-arrival state.
    pub fn on_arrival(
        &self,
        view: &QueueView,
        class: usize,
        top: &Topology,
        rng: &mut Stream,
    ) -> Decision {
        match self {
            Policy::Tracking(t) => {
                // lowest-labeled idle pool below the class; never the parent
                for &j in &t.labeling.child_pools[class] {
                    if view.idle[j] > 0 {
                        return Decision::RouteToPool(j);
                    }
                }
                Decision::Queue
            }
            Policy::Greedy | Policy::FifoPriority => {
                for &e in top.class_edges(class) {
                    let j = top.edges[e].1;
                    if view.idle[j] > 0 {
                        return Decision::RouteToPool(j);
                    }
                }
                Decision::Queue
            }
            Policy::RandomCompatible => {
                let open: Vec<usize> = top
                    .class_edges(class)
                    .iter()
                    .map(|&e| top.edges[e].1)
                    .filter(|&j| view.idle[j] > 0)
                    .collect();
                if open.is_empty() {
                    Decision::Queue
                } else {
                    Decision::RouteToPool(open[rng.random_range(0..open.len())])
                }
            }
        }
    }

    /// Decision for a server about to be freed in pool `j`, evaluated on the
    /// pre-event state (the completing customer still counts as in service).
    pub fn on_completion(
        &self,
        view: &QueueView,
        pool: usize,
        top: &Topology,
        rng: &mut Stream,
    ) -> Decision {
        match self {
            Policy::Tracking(t) => {
                let w = t.workload(view);
                let targets = t.minimizer.evaluate(w);
                // lowest-labeled child class strictly above its target
                for &k in &t.labeling.child_classes[pool] {
                    let q_hat = view.queue[k] as f64 / t.sqrt_n;
                    if q_hat > targets[k] {
                        return Decision::AdmitClass(k);
                    }
                }
                let parent = t.labeling.parent_class[pool];
                if view.queue[parent] > 0 {
                    return Decision::AdmitClass(parent);
                }
                Decision::StayIdle
            }
            Policy::Greedy => {
                let mut best: Option<(u64, usize)> = None;
                for &e in top.pool_edges(pool) {
                    let i = top.edges[e].0;
                    let q = view.queue[i];
                    if q > 0 && best.map_or(true, |(bq, _)| q > bq) {
                        best = Some((q, i));
                    }
                }
                best.map_or(Decision::StayIdle, |(_, i)| Decision::AdmitClass(i))
            }
            Policy::RandomCompatible => {
                let waiting: Vec<usize> = top
                    .pool_edges(pool)
                    .iter()
                    .map(|&e| top.edges[e].0)
                    .filter(|&i| view.queue[i] > 0)
                    .collect();
                if waiting.is_empty() {
                    Decision::StayIdle
                } else {
                    Decision::AdmitClass(waiting[rng.random_range(0..waiting.len())])
                }
            }
            Policy::FifoPriority => {
                let mut best: Option<(f64, usize)> = None;
                for &e in top.pool_edges(pool) {
                    let i = top.edges[e].0;
                    if view.queue[i] > 0 {
                        let t = view.head_arrival[i];
                        if best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, i));
                        }
                    }
                }
                best.map_or(Decision::StayIdle, |(_, i)| Decision::AdmitClass(i))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid;
    use crate::model::{build_instance, n_model};

    fn n_model_tracking(root: usize) -> (Policy, crate::model::SystemInstance) {
        let (top, params) = n_model();
        let sol = fluid::analyze(&top, &params).unwrap();
        let inst = build_instance(&top, &params, 100).unwrap();
        let cost = CostSpec::linear(vec![1.0, 1.0]);
        let tp = TrackingParams { root_class: Some(root), ..TrackingParams::default() };
        let policy = Policy::build(PolicyKind::Tracking, &inst, &sol, &cost, &tp).unwrap();
        (policy, inst)
    }

    #[test]
    fn n_model_labeling_from_class_two() {
        let (top, params) = n_model();
        let sol = fluid::analyze(&top, &params).unwrap();
        let lab = label_tree(&top, &sol.basic_edges, 1).unwrap();
        assert_eq!(lab.class_depth, vec![2, 0]);
        assert_eq!(lab.pool_depth, vec![3, 1]);
        assert_eq!(lab.class_label, vec![1, 2]);
        assert_eq!(lab.pool_label, vec![3, 4]);
        assert_eq!(lab.j0, 1);
        assert_eq!(lab.child_pools, vec![vec![0], vec![1]]);
        assert_eq!(lab.parent_pool, vec![Some(1), None]);
        assert_eq!(lab.child_classes, vec![vec![], vec![0]]);
        assert_eq!(lab.parent_class, vec![0, 1]);
    }

    #[test]
    fn single_activity_labeling() {
        let top = Topology::new(1, 1, vec![(0, 0)]);
        let lab = label_tree(&top, &[0], 0).unwrap();
        assert_eq!(lab.class_label, vec![1]);
        assert_eq!(lab.pool_label, vec![2]);
        assert_eq!(lab.j0, 0);
    }

    #[test]
    fn star_labeling_from_last_class() {
        let top = Topology::new(3, 1, vec![(0, 0), (1, 0), (2, 0)]);
        let lab = label_tree(&top, &[0, 1, 2], 2).unwrap();
        assert_eq!(lab.class_label, vec![1, 2, 3]);
        assert_eq!(lab.pool_label, vec![4]);
        assert_eq!(lab.j0, 0);
        assert_eq!(lab.child_classes[0], vec![0, 1]);
        assert_eq!(lab.parent_class[0], 2);
    }

    #[test]
    fn labeling_rejects_non_trees() {
        let (top, _) = n_model();
        assert!(label_tree(&top, &[0, 1], 0).is_err());
        assert!(label_tree(&top, &[0, 1, 2], 7).is_err());
    }

    #[test]
    fn tracking_requires_a_tree() {
        let top = Topology::new(2, 2, vec![(0, 0), (1, 1)]);
        let params = crate::model::BaseParameters {
            lambda: vec![1.0, 1.0],
            lambda_hat: vec![0.0, 0.0],
            nu: vec![1.0, 1.0],
            mu_bar: vec![1.0, 1.0],
            mu_hat: vec![0.0, 0.0],
            family: vec![crate::model::ArrivalFamily::Exponential; 2],
            c_ia: vec![1.0, 1.0],
        };
        let sol = fluid::analyze(&top, &params).unwrap();
        let inst = build_instance(&top, &params, 100).unwrap();
        let cost = CostSpec::linear(vec![1.0, 1.0]);
        let err = Policy::build(
            PolicyKind::Tracking,
            &inst,
            &sol,
            &cost,
            &TrackingParams::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("spanning tree"), "{err}");
        // baselines are fine on the same model
        assert!(Policy::build(PolicyKind::Greedy, &inst, &sol, &cost, &TrackingParams::default()).is_ok());
    }

    #[test]
    fn tracking_routes_arrivals_only_to_child_pools() {
        let (policy, inst) = n_model_tracking(1);
        let top = &inst.topology;
        let mut rng = Stream::from_seed(1);
        let head = [f64::INFINITY, f64::INFINITY];
        // class 1's only child pool is pool 1; idle there wins
        let view = QueueView { queue: &[0, 0], in_system: &[12, 8], idle: &[2, 3], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 0, top, &mut rng), Decision::RouteToPool(0));
        // no idleness below: queue, even though the parent pool idles
        let view = QueueView { queue: &[0, 0], in_system: &[12, 8], idle: &[0, 3], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 0, top, &mut rng), Decision::Queue);
        // the root's child pool is pool 2
        assert_eq!(policy.on_arrival(&view, 1, top, &mut rng), Decision::RouteToPool(1));
        let view = QueueView { queue: &[0, 0], in_system: &[12, 8], idle: &[5, 0], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 1, top, &mut rng), Decision::Queue);
    }

    #[test]
    fn tracking_admits_by_target_then_parent() {
        let (policy, inst) = n_model_tracking(1);
        let top = &inst.topology;
        let mut rng = Stream::from_seed(1);
        let head = [0.0, 0.0];
        // at zero workload every target is zero, so any waiting child is above it
        let view = QueueView { queue: &[3, 0], in_system: &[12, 8], idle: &[0, 1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 1, top, &mut rng), Decision::AdmitClass(0));
        // child at target, parent waiting: admit the parent
        let view = QueueView { queue: &[0, 5], in_system: &[12, 13], idle: &[0, 1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 1, top, &mut rng), Decision::AdmitClass(1));
        // leaf pool 1 has no child classes; it serves its parent class 1
        let view = QueueView { queue: &[4, 0], in_system: &[16, 8], idle: &[1, 0], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 0, top, &mut rng), Decision::AdmitClass(0));
        // nothing waiting anywhere: idle
        let view = QueueView { queue: &[0, 0], in_system: &[10, 8], idle: &[1, 0], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 0, top, &mut rng), Decision::StayIdle);
    }

    #[test]
    fn tracking_holds_children_at_their_targets() {
        // default root for linear c = (1,1) is class 1, so class 2 is the
        // non-root child of pool 2 and its target above κ̄ is the bounded
        // safety stock κ/(Iθ₂)
        let (top, params) = n_model();
        let sol = fluid::analyze(&top, &params).unwrap();
        let inst = build_instance(&top, &params, 100).unwrap();
        let cost = CostSpec::linear(vec![1.0, 1.0]);
        let policy =
            Policy::build(PolicyKind::Tracking, &inst, &sol, &cost, &TrackingParams::default())
                .unwrap();
        let tracking = match &policy {
            Policy::Tracking(t) => t,
            _ => unreachable!(),
        };
        assert_eq!(tracking.minimizer.root(), 0);
        let mut rng = Stream::from_seed(1);
        let head = [0.0, 0.0];
        // 18 and 12 customers over the offsets (12, 8): w = θ'(1.8, 1.2) ≈ 2.15 > κ̄
        let in_system = [30u64, 20u64];
        let view = QueueView { queue: &[0, 2], in_system: &in_system, idle: &[0, 1], head_arrival: &head };
        let w = tracking.workload(&view);
        assert!(w > tracking.minimizer.kappa_bar());
        let theta2 = 1.0 / 5.0f64.sqrt();
        let expected = tracking.minimizer.kappa() / (2.0 * theta2);
        assert!((tracking.minimizer.evaluate(w)[1] - expected).abs() <= 1e-12);
        // Q̂₂ = 0.2 sits below that target and the root queue is empty: idle
        assert_eq!(policy.on_completion(&view, 1, &top, &mut rng), Decision::StayIdle);
        // a queue well above the safety stock is admitted
        let view = QueueView { queue: &[0, 20], in_system: &[30, 38], idle: &[0, 1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 1, &top, &mut rng), Decision::AdmitClass(1));
    }

    #[test]
    fn greedy_serves_longest_queue_with_low_index_ties() {
        let top = Topology::new(2, 1, vec![(0, 0), (1, 0)]);
        let policy = Policy::Greedy;
        let mut rng = Stream::from_seed(1);
        let head = [0.0, 0.0];
        let view = QueueView { queue: &[3, 7], in_system: &[3, 7], idle: &[1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 0, &top, &mut rng), Decision::AdmitClass(1));
        let view = QueueView { queue: &[5, 5], in_system: &[5, 5], idle: &[1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 0, &top, &mut rng), Decision::AdmitClass(0));
        let view = QueueView { queue: &[0, 0], in_system: &[0, 0], idle: &[1], head_arrival: &head };
        assert_eq!(policy.on_completion(&view, 0, &top, &mut rng), Decision::StayIdle);
    }

    #[test]
    fn greedy_routes_to_lowest_index_idle_pool() {
        let (top, _) = n_model();
        let policy = Policy::Greedy;
        let mut rng = Stream::from_seed(1);
        let head = [f64::INFINITY; 2];
        let view = QueueView { queue: &[0, 0], in_system: &[0, 0], idle: &[1, 1], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 0, &top, &mut rng), Decision::RouteToPool(0));
        let view = QueueView { queue: &[0, 0], in_system: &[0, 0], idle: &[0, 1], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 0, &top, &mut rng), Decision::RouteToPool(1));
        let view = QueueView { queue: &[0, 0], in_system: &[0, 0], idle: &[0, 0], head_arrival: &head };
        assert_eq!(policy.on_arrival(&view, 0, &top, &mut rng), Decision::Queue);
    }

    #[test]
    fn random_takes_single_feasible_action_surely() {
        let (top, _) = n_model();
        let policy = Policy::RandomCompatible;
        let mut rng = Stream::from_seed(9);
        let head = [0.0, 0.0];
        for _ in 0..100 {
            let view = QueueView { queue: &[0, 4], in_system: &[0, 4], idle: &[1, 1], head_arrival: &head };
            assert_eq!(policy.on_completion(&view, 1, &top, &mut rng), Decision::AdmitClass(1));
        }
    }

    #[test]
    fn random_splits_between_feasible_pools() {
        let (top, _) = n_model();
        let policy = Policy::RandomCompatible;
        let mut rng = Stream::from_seed(9);
        let head = [f64::INFINITY; 2];
        let mut to_first = 0;
        for _ in 0..2000 {
            let view =
                QueueView { queue: &[0, 0], in_system: &[0, 0], idle: &[1, 1], head_arrival: &head };
            match policy.on_arrival(&view, 0, &top, &mut rng) {
                Decision::RouteToPool(0) => to_first += 1,
                Decision::RouteToPool(1) => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!((800..1200).contains(&to_first), "split {to_first}/2000");
    }

    #[test]
    fn fifo_serves_earliest_head() {
        let top = Topology::new(2, 1, vec![(0, 0), (1, 0)]);
        let policy = Policy::FifoPriority;
        let mut rng = Stream::from_seed(1);
        let view = QueueView {
            queue: &[2, 2],
            in_system: &[2, 2],
            idle: &[1],
            head_arrival: &[0.4, 0.2],
        };
        assert_eq!(policy.on_completion(&view, 0, &top, &mut rng), Decision::AdmitClass(1));
        let view = QueueView {
            queue: &[2, 2],
            in_system: &[2, 2],
            idle: &[1],
            head_arrival: &[0.3, 0.3],
        };
        assert_eq!(policy.on_completion(&view, 0, &top, &mut rng), Decision::AdmitClass(0));
    }

    #[test]
    fn policy_names_parse() {
        for (text, kind) in [
            ("tracking", PolicyKind::Tracking),
            ("greedy", PolicyKind::Greedy),
            ("greedy_longest_queue", PolicyKind::Greedy),
            ("random", PolicyKind::RandomCompatible),
            ("random_compatible", PolicyKind::RandomCompatible),
            ("fifo", PolicyKind::FifoPriority),
            ("FIFO_priority", PolicyKind::FifoPriority),
        ] {
            assert_eq!(text.parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("lifo".parse::<PolicyKind>().is_err());
        assert_eq!(PolicyKind::Tracking.to_string(), "tracking");
    }

    #[test]
    fn compatible_classes_respect_the_tree() {
        let (policy, inst) = n_model_tracking(1);
        let mut c0 = policy.compatible_classes(&inst.topology, 0);
        c0.sort_unstable();
        assert_eq!(c0, vec![0]);
        let mut c1 = policy.compatible_classes(&inst.topology, 1);
        c1.sort_unstable();
        assert_eq!(c1, vec![0, 1]);
        let greedy = Policy::Greedy;
        assert_eq!(greedy.compatible_classes(&inst.topology, 1), vec![0, 1]);
    }
}
