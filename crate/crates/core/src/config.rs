//! Declarative model and study configuration.
//!
//! Configurations are TOML or JSON documents (chosen by file extension) with
//! 1-based class and pool numbering, converted here to the 0-based indices
//! used everywhere else.  A single file can describe just a model (for the
//! analyze and simulate commands) or a model plus a `[study]` section (for
//! convergence studies); study files therefore load fine as plain models.
//!
//! Unknown keys are rejected so typos fail loudly instead of silently
//! falling back to defaults.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::model::{validate_topology, ArrivalFamily, BaseParameters, Topology};
use crate::policy::{PolicyKind, TrackingParams};

/// A fully validated model: compatibility graph, rates, cost, and the
/// tracking-policy knobs.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub topology: Topology,
    pub params: BaseParameters,
    pub cost: CostSpec,
    pub tracking: TrackingParams,
}

/// A validated convergence-study plan.
#[derive(Clone, Debug)]
pub struct StudySpec {
    pub model: ModelSpec,
    /// Strictly increasing system sizes.
    pub n_schedule: Vec<u64>,
    pub horizon: f64,
    pub reps: usize,
    pub policies: Vec<PolicyKind>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub debug_checks: bool,
    /// Replications for the diffusion lower-bound estimate.
    pub lb_reps: usize,
    /// Diffusion step as a fraction of the horizon.
    pub lb_dt_fraction: f64,
}

/// Supported on-disk formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    /// Chooses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<ConfigFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(ConfigFormat::Toml),
            Some("json") => Ok(ConfigFormat::Json),
            other => Err(Error::Config(format!(
                "unsupported config extension {:?} for {} (expected .toml or .json)",
                other.unwrap_or(""),
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topology: RawTopology,
    first_order: RawFirstOrder,
    second_order: Option<RawSecondOrder>,
    arrivals: Option<RawArrivals>,
    cost: Option<RawCost>,
    policy: Option<RawPolicy>,
    study: Option<RawStudy>,
    lower_bound: Option<RawLowerBound>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    classes: usize,
    pools: usize,
    /// 1-based (class, pool) pairs.
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFirstOrder {
    lambda: Vec<f64>,
    nu: Vec<f64>,
    /// 1-based (class, pool, rate) triples, one per edge.
    mu_bar: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSecondOrder {
    lambda_hat: Option<Vec<f64>>,
    mu_hat: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArrivals {
    /// Per-class family names: deterministic, exponential, gamma, lognormal.
    family: Vec<String>,
    /// Per-class interarrival coefficients of variation.
    c_ia: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: String,
    coefficients: Vec<f64>,
    exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    /// 1-based root class override for the tracking tree.
    root_class: Option<usize>,
    kappa_coeff: Option<f64>,
    kappa_exponent: Option<f64>,
    kappa_bar_coeff: Option<f64>,
    kappa_bar_exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    n_schedule: Vec<u64>,
    horizon: f64,
    reps: usize,
    policies: Vec<String>,
    seed: u64,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    debug_checks: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLowerBound {
    reps: Option<usize>,
    dt_fraction: Option<f64>,
}

/// Default replication count for the lower-bound estimate.
pub const DEFAULT_LB_REPS: usize = 400;

/// Default diffusion step as a fraction of the horizon.
pub const DEFAULT_LB_DT_FRACTION: f64 = 1e-5;

fn parse_raw(text: &str, format: ConfigFormat) -> Result<RawConfig> {
    match format {
        ConfigFormat::Toml => {
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML config: {e}")))
        }
        ConfigFormat::Json => serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid JSON config: {e}"))),
    }
}

fn one_based(idx: usize, count: usize, what: &str) -> Result<usize> {
    if idx == 0 {
        return Err(Error::Config(format!(
            "{what} {idx} is out of range: numbering starts at 1"
        )));
    }
    if idx > count {
        return Err(Error::Config(format!(
            "{what} {idx} is out of range: only {count} declared"
        )));
    }
    Ok(idx - 1)
}

fn parse_family(name: &str) -> Result<ArrivalFamily> {
    match name.to_ascii_lowercase().as_str() {
        "deterministic" => Ok(ArrivalFamily::Deterministic),
        "exponential" => Ok(ArrivalFamily::Exponential),
        "gamma" => Ok(ArrivalFamily::Gamma),
        "lognormal" => Ok(ArrivalFamily::Lognormal),
        other => Err(Error::Config(format!(
            "unknown interarrival family {other:?} (expected deterministic, exponential, gamma, or lognormal)"
        ))),
    }
}

/// Resolves 1-based (class, pool, rate) triples into an edge-ordered vector.
fn edge_rates(
    triples: &[(usize, usize, f64)],
    top: &Topology,
    what: &str,
    require_all: bool,
) -> Result<Vec<f64>> {
    let mut rates = vec![None; top.edges.len()];
    for &(ci, pj, rate) in triples {
        let i = one_based(ci, top.class_count, "class")?;
        let j = one_based(pj, top.pool_count, "pool")?;
        let e = top.edge_index(i, j).ok_or_else(|| {
            Error::Config(format!(
                "{what} names activity ({ci}, {pj}) which is not a declared edge"
            ))
        })?;
        if rates[e].replace(rate).is_some() {
            return Err(Error::Config(format!(
                "{what} lists activity ({ci}, {pj}) more than once"
            )));
        }
    }
    rates
        .into_iter()
        .enumerate()
        .map(|(e, r)| match r {
            Some(v) => Ok(v),
            None if !require_all => Ok(0.0),
            None => {
                let (i, j) = top.edges[e];
                Err(Error::Config(format!(
                    "{what} is missing activity ({}, {})",
                    i + 1,
                    j + 1
                )))
            }
        })
        .collect()
}

fn build_model(raw: &RawConfig) -> Result<ModelSpec> {
    let classes = raw.topology.classes;
    let pools = raw.topology.pools;
    if classes == 0 || pools == 0 {
        return Err(Error::Config(
            "the topology needs at least one class and one pool".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(raw.topology.edges.len());
    for &(ci, pj) in &raw.topology.edges {
        let i = one_based(ci, classes, "class")?;
        let j = one_based(pj, pools, "pool")?;
        if !seen.insert((i, j)) {
            return Err(Error::Config(format!(
                "edge ({ci}, {pj}) is declared more than once"
            )));
        }
        edges.push((i, j));
    }
    let top = Topology::new(classes, pools, edges);

    let mu_bar = edge_rates(&raw.first_order.mu_bar, &top, "mu_bar", true)?;
    let (lambda_hat, mu_hat) = match &raw.second_order {
        Some(s) => {
            let lh = s.lambda_hat.clone().unwrap_or_else(|| vec![0.0; classes]);
            let mh = match &s.mu_hat {
                Some(t) => edge_rates(t, &top, "mu_hat", false)?,
                None => vec![0.0; top.edges.len()],
            };
            (lh, mh)
        }
        None => (vec![0.0; classes], vec![0.0; top.edges.len()]),
    };

    let (family, c_ia) = match &raw.arrivals {
        Some(a) => {
            if a.family.len() != classes {
                return Err(Error::Config(format!(
                    "arrivals.family has {} entries but there are {classes} classes",
                    a.family.len()
                )));
            }
            let family: Vec<ArrivalFamily> =
                a.family.iter().map(|s| parse_family(s)).collect::<Result<_>>()?;
            let c_ia = match &a.c_ia {
                Some(c) => {
                    if c.len() != classes {
                        return Err(Error::Config(format!(
                            "arrivals.c_ia has {} entries but there are {classes} classes",
                            c.len()
                        )));
                    }
                    c.clone()
                }
                None => family
                    .iter()
                    .map(|f| match f {
                        ArrivalFamily::Deterministic => Ok(0.0),
                        ArrivalFamily::Exponential => Ok(1.0),
                        _ => Err(Error::Config(format!(
                            "family {:?} needs an explicit arrivals.c_ia entry",
                            f
                        ))),
                    })
                    .collect::<Result<_>>()?,
            };
            for (i, (f, &c)) in family.iter().zip(&c_ia).enumerate() {
                match f {
                    ArrivalFamily::Deterministic if c != 0.0 => {
                        return Err(Error::Config(format!(
                            "class {}: deterministic interarrivals have coefficient of variation 0, got {c}",
                            i + 1
                        )));
                    }
                    ArrivalFamily::Exponential if c != 1.0 => {
                        return Err(Error::Config(format!(
                            "class {}: exponential interarrivals have coefficient of variation 1, got {c}",
                            i + 1
                        )));
                    }
                    ArrivalFamily::Gamma | ArrivalFamily::Lognormal if c <= 0.0 => {
                        return Err(Error::Config(format!(
                            "class {}: {} interarrivals need a positive coefficient of variation",
                            i + 1,
                            f.name()
                        )));
                    }
                    _ => {}
                }
            }
            (family, c_ia)
        }
        None => (
            vec![ArrivalFamily::Exponential; classes],
            vec![1.0; classes],
        ),
    };

    let params = BaseParameters {
        lambda: raw.first_order.lambda.clone(),
        lambda_hat,
        nu: raw.first_order.nu.clone(),
        mu_bar,
        mu_hat,
        family,
        c_ia,
    };
    let report = validate_topology(&top, &params);
    if !report.is_ok() {
        return Err(report.to_error());
    }

    let cost = match &raw.cost {
        None => CostSpec::linear(vec![1.0; classes]),
        Some(c) => match c.kind.to_ascii_lowercase().as_str() {
            "linear" => {
                if c.exponent.is_some() {
                    return Err(Error::Config(
                        "a linear cost takes no exponent".into(),
                    ));
                }
                CostSpec::linear(c.coefficients.clone())
            }
            "separable_power" | "power" => {
                let p = c.exponent.ok_or_else(|| {
                    Error::Config("a separable power cost needs an exponent".into())
                })?;
                CostSpec::separable_power(c.coefficients.clone(), p)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown cost kind {other:?} (expected linear or separable_power)"
                )))
            }
        },
    };
    cost.validate(classes)?;

    let mut tracking = TrackingParams::default();
    if let Some(p) = &raw.policy {
        if let Some(rc) = p.root_class {
            tracking.root_class = Some(one_based(rc, classes, "root class")?);
        }
        if let Some(v) = p.kappa_coeff {
            tracking.kappa_coeff = v;
        }
        if let Some(v) = p.kappa_exponent {
            tracking.kappa_exponent = v;
        }
        if let Some(v) = p.kappa_bar_coeff {
            tracking.kappa_bar_coeff = v;
        }
        if let Some(v) = p.kappa_bar_exponent {
            tracking.kappa_bar_exponent = v;
        }
        for (name, v) in [
            ("kappa_coeff", tracking.kappa_coeff),
            ("kappa_exponent", tracking.kappa_exponent),
            ("kappa_bar_coeff", tracking.kappa_bar_coeff),
            ("kappa_bar_exponent", tracking.kappa_bar_exponent),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("policy.{name} must be positive, got {v}")));
            }
        }
    }

    Ok(ModelSpec {
        topology: top,
        params,
        cost,
        tracking,
    })
}

fn build_study(raw: &RawConfig) -> Result<StudySpec> {
    let model = build_model(raw)?;
    let s = raw.study.as_ref().ok_or_else(|| {
        Error::Config("this command needs a [study] section in the config".into())
    })?;
    if s.n_schedule.is_empty() {
        return Err(Error::Config("study.n_schedule must not be empty".into()));
    }
    for w in s.n_schedule.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "study.n_schedule must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    if s.n_schedule[0] == 0 {
        return Err(Error::Config("study.n_schedule entries must be positive".into()));
    }
    if !(s.horizon > 0.0) {
        return Err(Error::Config("study.horizon must be positive".into()));
    }
    if s.reps < 2 {
        return Err(Error::Config(
            "study.reps must be at least 2 for paired statistics".into(),
        ));
    }
    if s.policies.is_empty() {
        return Err(Error::Config("study.policies must not be empty".into()));
    }
    let policies: Vec<PolicyKind> = s
        .policies
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_>>()?;

    let (lb_reps, lb_dt_fraction) = match &raw.lower_bound {
        Some(lb) => (
            lb.reps.unwrap_or(DEFAULT_LB_REPS),
            lb.dt_fraction.unwrap_or(DEFAULT_LB_DT_FRACTION),
        ),
        None => (DEFAULT_LB_REPS, DEFAULT_LB_DT_FRACTION),
    };
    if lb_reps < 2 {
        return Err(Error::Config("lower_bound.reps must be at least 2".into()));
    }
    if !(lb_dt_fraction > 0.0 && lb_dt_fraction <= 1e-2) {
        return Err(Error::Config(
            "lower_bound.dt_fraction must lie in (0, 0.01]".into(),
        ));
    }

    Ok(StudySpec {
        model,
        n_schedule: s.n_schedule.clone(),
        horizon: s.horizon,
        reps: s.reps,
        policies,
        seed: s.seed,
        out_dir: s.out_dir.clone(),
        debug_checks: s.debug_checks,
        lb_reps,
        lb_dt_fraction,
    })
}

/// Parses a model from text in the given format.
pub fn parse_model(text: &str, format: ConfigFormat) -> Result<ModelSpec> {
    build_model(&parse_raw(text, format)?)
}

/// Parses a study plan from text in the given format.
pub fn parse_study(text: &str, format: ConfigFormat) -> Result<StudySpec> {
    build_study(&parse_raw(text, format)?)
}

/// Loads a model from a `.toml` or `.json` file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let format = ConfigFormat::from_path(path)?;
    let text = read_config(path)?;
    parse_model(&text, format)
        .map_err(|e| prepend_path(e, path))
}

/// Loads a study plan from a `.toml` or `.json` file.
pub fn load_study(path: impl AsRef<Path>) -> Result<StudySpec> {
    let path = path.as_ref();
    let format = ConfigFormat::from_path(path)?;
    let text = read_config(path)?;
    parse_study(&text, format)
        .map_err(|e| prepend_path(e, path))
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn prepend_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        Error::Model(msg) => Error::Model(format!("{}: {msg}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::analyze;

    const N_MODEL_TOML: &str = r#"
[topology]
classes = 2
pools = 2
edges = [[1, 1], [1, 2], [2, 2]]

[first_order]
lambda = [1.2, 1.6]
nu = [1.0, 1.0]
mu_bar = [[1, 1, 1.0], [1, 2, 1.0], [2, 2, 2.0]]

[second_order]
lambda_hat = [-1.0, 0.0]

[cost]
kind = "linear"
coefficients = [1.0, 1.0]
"#;

    fn study_toml() -> String {
        format!(
            "{N_MODEL_TOML}\n[study]\nn_schedule = [100, 1000]\nhorizon = 10.0\nreps = 4\npolicies = [\"tracking\", \"greedy\"]\nseed = 42\n"
        )
    }

    #[test]
    fn parses_the_reference_model_from_toml() {
        let spec = parse_model(N_MODEL_TOML, ConfigFormat::Toml).unwrap();
        assert_eq!(spec.topology.class_count, 2);
        assert_eq!(spec.topology.edges, vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(spec.params.lambda, vec![1.2, 1.6]);
        assert_eq!(spec.params.lambda_hat, vec![-1.0, 0.0]);
        assert_eq!(spec.params.mu_bar, vec![1.0, 1.0, 2.0]);
        assert_eq!(spec.params.mu_hat, vec![0.0, 0.0, 0.0]);
        assert_eq!(spec.params.family, vec![ArrivalFamily::Exponential; 2]);
        assert_eq!(spec.params.c_ia, vec![1.0, 1.0]);
        assert_eq!(spec.tracking.root_class, None);
        let fluid = analyze(&spec.topology, &spec.params).unwrap();
        assert!(fluid.ht && fluid.crp);
    }

    #[test]
    fn parses_the_same_model_from_json() {
        let text = r#"{
            "topology": {"classes": 2, "pools": 2, "edges": [[1,1],[1,2],[2,2]]},
            "first_order": {
                "lambda": [1.2, 1.6],
                "nu": [1.0, 1.0],
                "mu_bar": [[1,1,1.0],[1,2,1.0],[2,2,2.0]]
            },
            "second_order": {"lambda_hat": [-1.0, 0.0]}
        }"#;
        let spec = parse_model(text, ConfigFormat::Json).unwrap();
        assert_eq!(spec.topology.edges, vec![(0, 0), (0, 1), (1, 1)]);
        // No [cost] section: linear unit costs.
        assert_eq!(spec.cost.kind_name(), "linear");
    }

    #[test]
    fn study_sections_are_parsed_with_defaults() {
        let spec = parse_study(&study_toml(), ConfigFormat::Toml).unwrap();
        assert_eq!(spec.n_schedule, vec![100, 1000]);
        assert_eq!(spec.reps, 4);
        assert_eq!(
            spec.policies,
            vec![PolicyKind::Tracking, PolicyKind::Greedy]
        );
        assert_eq!(spec.seed, 42);
        assert_eq!(spec.lb_reps, DEFAULT_LB_REPS);
        assert_eq!(spec.lb_dt_fraction, DEFAULT_LB_DT_FRACTION);
        assert!(!spec.debug_checks);
        assert!(spec.out_dir.is_none());
    }

    #[test]
    fn a_study_file_still_loads_as_a_plain_model() {
        let spec = parse_model(&study_toml(), ConfigFormat::Toml).unwrap();
        assert_eq!(spec.topology.class_count, 2);
    }

    #[test]
    fn model_without_study_section_cannot_run_a_study() {
        let err = parse_study(N_MODEL_TOML, ConfigFormat::Toml).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("[study]"));
    }

    #[test]
    fn rejects_structural_mistakes() {
        let cases: Vec<(&str, String)> = vec![
            (
                "zero-based edge",
                N_MODEL_TOML.replace("[[1, 1], [1, 2], [2, 2]]", "[[0, 1], [1, 2], [2, 2]]"),
            ),
            (
                "out-of-range pool",
                N_MODEL_TOML.replace("[[1, 1], [1, 2], [2, 2]]", "[[1, 1], [1, 3], [2, 2]]"),
            ),
            (
                "duplicate edge",
                N_MODEL_TOML.replace("[[1, 1], [1, 2], [2, 2]]", "[[1, 1], [1, 1], [2, 2]]"),
            ),
            (
                "missing rate",
                N_MODEL_TOML.replace("[[1, 1, 1.0], [1, 2, 1.0], [2, 2, 2.0]]", "[[1, 1, 1.0], [1, 2, 1.0]]"),
            ),
            (
                "rate on a non-edge",
                N_MODEL_TOML.replace("[[1, 1, 1.0], [1, 2, 1.0], [2, 2, 2.0]]", "[[1, 1, 1.0], [1, 2, 1.0], [2, 2, 2.0], [2, 1, 0.5]]"),
            ),
            (
                "unknown key",
                N_MODEL_TOML.replace("[second_order]", "[second_order]\nmu_tilde = [1.0]"),
            ),
        ];
        for (what, text) in cases {
            let err = parse_model(&text, ConfigFormat::Toml);
            assert!(err.is_err(), "{what} should be rejected");
        }
    }

    #[test]
    fn rejects_inconsistent_arrival_sections() {
        let with_arrivals = |family: &str, cia: &str| {
            format!("{N_MODEL_TOML}\n[arrivals]\nfamily = {family}\n{cia}\n")
        };
        assert!(parse_model(
            &with_arrivals("[\"exponential\", \"gamma\"]", "c_ia = [1.0, 0.5]"),
            ConfigFormat::Toml
        )
        .is_ok());
        // Exponential must have unit coefficient of variation.
        assert!(parse_model(
            &with_arrivals("[\"exponential\", \"exponential\"]", "c_ia = [1.0, 0.5]"),
            ConfigFormat::Toml
        )
        .is_err());
        // Gamma needs an explicit coefficient.
        assert!(parse_model(
            &with_arrivals("[\"gamma\", \"exponential\"]", ""),
            ConfigFormat::Toml
        )
        .is_err());
        // Unknown family name.
        assert!(parse_model(
            &with_arrivals("[\"weibull\", \"exponential\"]", "c_ia = [1.0, 1.0]"),
            ConfigFormat::Toml
        )
        .is_err());
        // Deterministic pins the coefficient at zero.
        assert!(parse_model(
            &with_arrivals("[\"deterministic\", \"exponential\"]", "c_ia = [0.5, 1.0]"),
            ConfigFormat::Toml
        )
        .is_err());
    }

    #[test]
    fn rejects_bad_study_sections() {
        let base = study_toml();
        let cases = vec![
            ("unsorted schedule", base.replace("[100, 1000]", "[1000, 100]")),
            ("single rep", base.replace("reps = 4", "reps = 1")),
            ("no policies", base.replace("[\"tracking\", \"greedy\"]", "[]")),
            (
                "unknown policy",
                base.replace("\"greedy\"", "\"shortest_remaining\""),
            ),
            ("zero horizon", base.replace("horizon = 10.0", "horizon = 0.0")),
        ];
        for (what, text) in cases {
            assert!(
                parse_study(&text, ConfigFormat::Toml).is_err(),
                "{what} should be rejected"
            );
        }
    }

    #[test]
    fn cost_sections_are_validated() {
        let quad = N_MODEL_TOML.replace(
            "kind = \"linear\"\ncoefficients = [1.0, 1.0]",
            "kind = \"separable_power\"\ncoefficients = [1.0, 1.0]\nexponent = 2.0",
        );
        let spec = parse_model(&quad, ConfigFormat::Toml).unwrap();
        assert_eq!(spec.cost.kind_name(), "separable_power");
        // A power cost without its exponent.
        let missing = N_MODEL_TOML.replace("kind = \"linear\"", "kind = \"power\"");
        assert!(parse_model(&missing, ConfigFormat::Toml).is_err());
        // Exponent on a linear cost.
        let extra = N_MODEL_TOML.replace(
            "coefficients = [1.0, 1.0]",
            "coefficients = [1.0, 1.0]\nexponent = 2.0",
        );
        assert!(parse_model(&extra, ConfigFormat::Toml).is_err());
        // Wrong coefficient count.
        let short = N_MODEL_TOML.replace("coefficients = [1.0, 1.0]", "coefficients = [1.0]");
        assert!(parse_model(&short, ConfigFormat::Toml).is_err());
    }

    #[test]
    fn policy_section_overrides_tracking_knobs() {
        let text = format!(
            "{N_MODEL_TOML}\n[policy]\nroot_class = 2\nkappa_coeff = 0.5\n"
        );
        let spec = parse_model(&text, ConfigFormat::Toml).unwrap();
        assert_eq!(spec.tracking.root_class, Some(1));
        assert_eq!(spec.tracking.kappa_coeff, 0.5);
        let bad = format!("{N_MODEL_TOML}\n[policy]\nroot_class = 3\n");
        assert!(parse_model(&bad, ConfigFormat::Toml).is_err());
        let bad = format!("{N_MODEL_TOML}\n[policy]\nkappa_coeff = -1.0\n");
        assert!(parse_model(&bad, ConfigFormat::Toml).is_err());
    }

    #[test]
    fn files_load_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("model.toml");
        std::fs::write(&toml_path, N_MODEL_TOML).unwrap();
        assert!(load_model(&toml_path).is_ok());
        let weird = dir.path().join("model.yaml");
        std::fs::write(&weird, N_MODEL_TOML).unwrap();
        let err = load_model(&weird).unwrap_err();
        assert!(err.to_string().contains("extension"));
        let missing = dir.path().join("nope.toml");
        assert!(matches!(load_model(&missing).unwrap_err(), Error::Io(_)));
        // Errors carry the offending path.
        let broken = dir.path().join("broken.toml");
        std::fs::write(&broken, "not toml at all [").unwrap();
        let err = load_model(&broken).unwrap_err();
        assert!(err.to_string().contains("broken.toml"));
    }
}
