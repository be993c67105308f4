//! TOML instance files: parsing with positioned diagnostics, validation and
//! construction of the objective, constraints, polytope and schemes.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraints::matroid::{Matroid, MatroidKind};
use crate::constraints::packing::{PackingSystem, Request, TreeEdge, UfpTreeInstance};
use crate::constraints::polytope::Polytope;
use crate::error::{Error, Result};
use crate::rng::derive;
use crate::rounding::Algorithm;
use crate::schemes::{
    compose, cpip_grouping_scaling, cpip_sparse_factory, knapsack_small_items_scheme, matroid_optimal_scheme,
    matroid_span_scheme, sparse_packing_scheme, sparse_packing_width_scheme, ufp_general_scheme, ufp_tree_unit_scheme,
    CrScheme, FeasibilityCheck, OptimalSchemeConfig, SpanSchemeConfig,
};
use crate::submodular::{FunctionSpec, SetFunction};
use crate::subset::Subset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub function: FunctionSpec,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineDefaults>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ConstraintSpec {
    Matroid {
        matroid: MatroidKind,
    },
    /// `rows · 1_S <= capacities`.
    Knapsack {
        rows: Vec<Vec<f64>>,
        capacities: Vec<f64>,
    },
    /// `rows · 1_S <= rhs`, with `rhs` defaulting to all ones.
    Sparse {
        rows: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rhs: Option<Vec<f64>>,
    },
    /// Requests are the ground set.
    UfpTree {
        vertices: usize,
        #[serde(default)]
        root: usize,
        edges: Vec<TreeEdge>,
        requests: Vec<Request>,
    },
    /// `A[d] · 1_S <= capacities` for a 0/1 matrix `A` (rows are constraints).
    Cpip {
        incidence: Vec<Vec<u8>>,
        demands: Vec<f64>,
        capacities: Vec<f64>,
    },
}

impl ConstraintSpec {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Matroid { .. } => "matroid",
            Self::Knapsack { .. } => "knapsack",
            Self::Sparse { .. } => "sparse",
            Self::UfpTree { .. } => "ufp-tree",
            Self::Cpip { .. } => "cpip",
        }
    }
}

/// Defaults for the command line; flags override them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algo: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Point used by the diagnostic commands instead of the relaxed optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    MatroidSpan,
    MatroidOpt,
    Knapsack,
    Sparse,
    SparseWidth,
    Ufp,
    Cpip,
    Compose,
}

const SCHEME_NAMES: [(&str, SchemeKind); 8] = [
    ("matroid-span", SchemeKind::MatroidSpan),
    ("matroid-opt", SchemeKind::MatroidOpt),
    ("knapsack", SchemeKind::Knapsack),
    ("sparse", SchemeKind::Sparse),
    ("sparse-width", SchemeKind::SparseWidth),
    ("ufp", SchemeKind::Ufp),
    ("cpip", SchemeKind::Cpip),
    ("compose", SchemeKind::Compose),
];

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SCHEME_NAMES.iter().find(|(n, _)| *n == s).map(|(_, k)| *k).ok_or_else(|| {
            let names: Vec<&str> = SCHEME_NAMES.iter().map(|(n, _)| *n).collect();
            Error::InvalidArgument(format!("unknown scheme '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(SCHEME_NAMES.iter().find(|(_, k)| k == self).map(|(n, _)| *n).unwrap_or("?"))
    }
}

/// A parse or validation problem at a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

#[derive(Deserialize)]
struct Spans {
    n: Option<toml::Spanned<toml::Value>>,
    function: Option<toml::Spanned<toml::Value>>,
    #[serde(default)]
    constraints: Vec<toml::Spanned<toml::Value>>,
}

/// Parse and validate an instance. Every problem found is reported.
pub fn parse_instance(text: &str) -> std::result::Result<InstanceFile, Vec<Diagnostic>> {
    let diag = |offset: usize, message: String| {
        let (line, column) = position(text, offset);
        Diagnostic { line, column, message }
    };
    let file: InstanceFile = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        vec![diag(offset, e.message().trim().to_string())]
    })?;
    let spans: Option<Spans> = toml::from_str(text).ok();
    let at = |pick: &dyn Fn(&Spans) -> Option<usize>| spans.as_ref().and_then(pick).unwrap_or(0);
    let mut errors = Vec::new();
    if let Err(e) = crate::subset::check_ground(file.n) {
        errors.push(diag(at(&|s| s.n.as_ref().map(|v| v.span().start)), e.to_string()));
    } else {
        if let Err(e) = SetFunction::new(file.n, file.function.clone()) {
            errors.push(diag(at(&|s| s.function.as_ref().map(|v| v.span().start)), format!("function: {e}")));
        }
        for (k, c) in file.constraints.iter().enumerate() {
            if let Err(e) = build_constraint(file.n, k, c) {
                errors.push(diag(at(&|s| s.constraints.get(k).map(|v| v.span().start)), e.to_string()));
            }
        }
    }
    if let Some(p) = &file.pipeline {
        if let Some(b) = p.b.filter(|b| !(*b > 0.0 && *b <= 1.0)) {
            errors.push(diag(0, format!("pipeline: b = {b} must lie in (0,1]")));
        }
        if p.reps == Some(0) {
            errors.push(diag(0, "pipeline: reps must be at least 1".into()));
        }
    }
    if errors.is_empty() {
        Ok(file)
    } else {
        Err(errors)
    }
}

impl InstanceFile {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<Instance> {
        let f = SetFunction::new(self.n, self.function.clone())?;
        let constraints =
            self.constraints.iter().enumerate().map(|(k, c)| build_constraint(self.n, k, c)).collect::<Result<_>>()?;
        Ok(Instance { file: self.clone(), f, constraints })
    }
}

/// A validated constraint.
#[derive(Clone, Debug)]
pub enum Built {
    Matroid(Arc<Matroid>),
    /// Rows normalized to unit capacity.
    Knapsack(PackingSystem),
    Sparse(PackingSystem),
    UfpTree { tree: UfpTreeInstance, system: PackingSystem },
    Cpip(PackingSystem),
}

impl Built {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Matroid(_) => "matroid",
            Self::Knapsack(_) => "knapsack",
            Self::Sparse(_) => "sparse",
            Self::UfpTree { .. } => "ufp-tree",
            Self::Cpip(_) => "cpip",
        }
    }

    pub fn is_feasible(&self, s: Subset) -> bool {
        match self {
            Self::Matroid(m) => m.is_independent(s),
            Self::Knapsack(p) | Self::Sparse(p) | Self::Cpip(p) => p.is_feasible(s),
            Self::UfpTree { tree, .. } => tree.is_routable(s),
        }
    }

    pub fn polytope(&self) -> Result<Polytope> {
        match self {
            Self::Matroid(m) => Ok(Polytope::matroid(m.clone())),
            Self::Knapsack(p) | Self::Sparse(p) | Self::Cpip(p) | Self::UfpTree { system: p, .. } => {
                Polytope::packing(p.len(), p.rows().to_vec(), vec![1.0; p.rows().len()])
            }
        }
    }

    fn system(&self) -> Option<&PackingSystem> {
        match self {
            Self::Matroid(_) => None,
            Self::Knapsack(p) | Self::Sparse(p) | Self::Cpip(p) | Self::UfpTree { system: p, .. } => Some(p),
        }
    }
}

fn context(k: usize, family: &str, e: Error) -> Error {
    let at = |m: String| format!("constraint {k} ({family}): {m}");
    match e {
        Error::Dimension(m) => Error::Dimension(at(m)),
        Error::InvalidArgument(m) => Error::InvalidArgument(at(m)),
        Error::Precondition(m) => Error::Precondition(at(m)),
        Error::Capacity { what, n, limit } => Error::Capacity { what, n, limit },
        other => Error::Parse(at(other.to_string())),
    }
}

fn build_constraint(n: usize, k: usize, c: &ConstraintSpec) -> Result<Built> {
    let family = c.family();
    let wrap = |e| context(k, family, e);
    let built = match c {
        ConstraintSpec::Matroid { matroid } => Built::Matroid(Arc::new(Matroid::new(n, matroid.clone()).map_err(wrap)?)),
        ConstraintSpec::Knapsack { rows, capacities } => {
            Built::Knapsack(PackingSystem::from_rows(n, rows.clone(), capacities).map_err(wrap)?)
        }
        ConstraintSpec::Sparse { rows, rhs } => {
            let rhs = rhs.clone().unwrap_or_else(|| vec![1.0; rows.len()]);
            Built::Sparse(PackingSystem::from_rows(n, rows.clone(), &rhs).map_err(wrap)?)
        }
        ConstraintSpec::UfpTree { vertices, root, edges, requests } => {
            if requests.len() != n {
                return Err(wrap(Error::Dimension(format!("{} requests, expected n = {n}", requests.len()))));
            }
            let tree = UfpTreeInstance::new(*vertices, edges.clone(), requests.clone(), *root).map_err(wrap)?;
            let system = tree.packing_system().map_err(wrap)?;
            Built::UfpTree { tree, system }
        }
        ConstraintSpec::Cpip { incidence, demands, capacities } => {
            if demands.len() != n {
                return Err(wrap(Error::Dimension(format!("{} demands, expected n = {n}", demands.len()))));
            }
            Built::Cpip(
                PackingSystem::column_restricted(incidence.clone(), demands.clone(), capacities.clone()).map_err(wrap)?,
            )
        }
    };
    Ok(built)
}

/// Scheme construction parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    pub epsilon: f64,
    pub mc_samples: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { epsilon: 0.02, mc_samples: 20_000, max_iters: 200, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub file: InstanceFile,
    pub f: SetFunction,
    pub constraints: Vec<Built>,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn polytope(&self) -> Result<Polytope> {
        let parts: Vec<Polytope> = self.constraints.iter().map(|c| c.polytope()).collect::<Result<_>>()?;
        match parts.len() {
            0 => Polytope::hypercube(self.len()),
            1 => Ok(parts.into_iter().next().unwrap()),
            _ => Polytope::intersection(parts),
        }
    }

    pub fn feasibility(&self) -> FeasibilityCheck {
        let cs = self.constraints.clone();
        Arc::new(move |s| cs.iter().all(|c| c.is_feasible(s)))
    }

    pub fn is_feasible(&self, s: Subset) -> bool {
        self.constraints.iter().all(|c| c.is_feasible(s))
    }

    /// The family default when no scheme is named: the single family's
    /// scheme, or composition for mixed constraints.
    pub fn default_scheme(&self) -> SchemeKind {
        let fams: Vec<&str> = self.constraints.iter().map(|c| c.family()).collect();
        match fams.first() {
            Some(first) if fams.iter().all(|f| f == first) => family_scheme(&self.constraints[0]),
            _ => SchemeKind::Compose,
        }
    }

    /// A scale trading `b` against the claimed balance of `kind`.
    pub fn default_b(&self, kind: SchemeKind) -> f64 {
        if kind == SchemeKind::Compose || self.constraints.len() > 1 {
            let matroids = self.constraints.iter().filter(|c| matches!(c, Built::Matroid(_))).count();
            if matroids == self.constraints.len() && matroids > 0 {
                return 2.0 / (matroids as f64 + 1.0);
            }
            return self
                .constraints
                .iter()
                .map(|c| family_b(c, if kind == SchemeKind::Compose { family_scheme(c) } else { kind }))
                .fold(1.0, f64::min);
        }
        self.constraints.first().map_or(1.0, |c| family_b(c, kind))
    }

    /// Build `kind` for `x ∈ b·P`. Single-family kinds require every
    /// constraint to belong to that family and compose over them.
    pub fn scheme(&self, kind: SchemeKind, x: &[f64], b: f64, opts: &SchemeOptions) -> Result<CrScheme> {
        if x.len() != self.len() {
            return Err(Error::Dimension(format!("point of length {} for n = {}", x.len(), self.len())));
        }
        if self.constraints.is_empty() {
            return CrScheme::always_accept(x.to_vec(), b);
        }
        let mut parts = Vec::with_capacity(self.constraints.len());
        for (k, c) in self.constraints.iter().enumerate() {
            let which = if kind == SchemeKind::Compose { family_scheme(c) } else { kind };
            let o = SchemeOptions { seed: derive(opts.seed, k as u64), ..*opts };
            parts.push(constraint_scheme(c, which, x, b, &o).map_err(|e| context(k, c.family(), e))?);
        }
        compose(&parts)
    }
}

fn family_scheme(c: &Built) -> SchemeKind {
    match c {
        Built::Matroid(_) => SchemeKind::MatroidOpt,
        Built::Knapsack(_) => SchemeKind::Knapsack,
        Built::Sparse(_) => SchemeKind::Sparse,
        Built::UfpTree { .. } => SchemeKind::Ufp,
        Built::Cpip(_) => SchemeKind::Cpip,
    }
}

/// `argmax b·c(b)` over a grid of the open interval `(0, hi)`.
fn best_scale(hi: f64, c: impl Fn(f64) -> f64) -> f64 {
    const STEPS: usize = 10_000;
    (1..STEPS)
        .map(|i| hi * i as f64 / STEPS as f64)
        .map(|b| (b, b * c(b)))
        .fold((hi / 2.0, f64::NEG_INFINITY), |a, v| if v.1 > a.1 { v } else { a })
        .0
}

fn ufp_unit_scale() -> f64 {
    best_scale(1.0 / (3.0 * E), |b| 1.0 - 2.0 * E * b / (1.0 - E * b))
}

fn family_b(c: &Built, kind: SchemeKind) -> f64 {
    let k = c.system().map_or(1, |s| s.sparsity().max(1)) as f64;
    match (c, kind) {
        (Built::Matroid(_), _) => 1.0,
        (Built::Knapsack(p), SchemeKind::Knapsack) => {
            let delta = p.rows().iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
            best_scale(1.0, |b| 1.0 - (-(1.0 - b) * (1.0 - b) / (6.0 * delta)).exp())
        }
        (Built::UfpTree { tree, .. }, SchemeKind::Ufp) if tree.has_unit_demands() => ufp_unit_scale(),
        (Built::UfpTree { .. }, SchemeKind::Ufp) => ufp_unit_scale() / 6.0,
        (_, SchemeKind::SparseWidth) => {
            let w = c.system().map_or(usize::MAX, |s| s.width());
            if w == usize::MAX {
                return 1.0 / (2.0 * E) * 0.999;
            }
            best_scale(1.0 / (2.0 * E), |b| 1.0 - k * (2.0 * E * b).powf(w.max(2) as f64 - 1.0))
        }
        (Built::Cpip(p), SchemeKind::Cpip) | (Built::UfpTree { system: p, .. }, SchemeKind::Cpip) => {
            let inc_k = p.cpip().map_or(1, |d| {
                (0..p.len()).map(|j| d.incidence.iter().filter(|r| r[j] > 0).count()).max().unwrap_or(1).max(1)
            }) as f64;
            1.0 / (4.0 * inc_k) / 6.0
        }
        _ => 1.0 / (4.0 * k),
    }
}

fn constraint_scheme(c: &Built, kind: SchemeKind, x: &[f64], b: f64, o: &SchemeOptions) -> Result<CrScheme> {
    let mismatch = || Error::InvalidArgument(format!("scheme '{kind}' does not apply to a {} constraint", c.family()));
    match (kind, c) {
        (SchemeKind::MatroidSpan, Built::Matroid(m)) => {
            Ok(matroid_span_scheme(m.clone(), x, b, &SpanSchemeConfig { seed: o.seed, ..Default::default() })?.scheme)
        }
        (SchemeKind::MatroidOpt, Built::Matroid(m)) => {
            let cfg = OptimalSchemeConfig { epsilon: o.epsilon, samples: o.mc_samples, seed: o.seed, max_iters: o.max_iters };
            Ok(matroid_optimal_scheme(m.clone(), x, b, &cfg)?.scheme)
        }
        (SchemeKind::Knapsack, Built::Knapsack(p)) => {
            if b >= 1.0 {
                return Err(Error::InvalidArgument("the knapsack scheme needs b < 1 (b = 1 - epsilon)".into()));
            }
            let rows: Vec<CrScheme> = p
                .rows()
                .iter()
                .map(|r| {
                    let delta = r.iter().copied().fold(0.0, f64::max).max(1e-12);
                    knapsack_small_items_scheme(r, x, 1.0 - b, delta)
                })
                .collect::<Result<_>>()?;
            compose(&rows)
        }
        (SchemeKind::Sparse, Built::Sparse(p) | Built::Knapsack(p) | Built::Cpip(p)) => sparse_packing_scheme(p, x, b),
        (SchemeKind::SparseWidth, Built::Sparse(p) | Built::Knapsack(p) | Built::Cpip(p)) => {
            sparse_packing_width_scheme(p, x, b)
        }
        (SchemeKind::Ufp, Built::UfpTree { tree, .. }) => {
            let integral = tree.edges().iter().all(|e| e.cap.fract() == 0.0);
            if tree.has_unit_demands() && integral {
                ufp_tree_unit_scheme(tree, x, b)
            } else {
                ufp_general_scheme(tree, x, 6.0 * b)
            }
        }
        (SchemeKind::Cpip, Built::Cpip(p) | Built::UfpTree { system: p, .. }) => {
            cpip_grouping_scaling(p, &cpip_sparse_factory(), x, 6.0 * b)
        }
        _ => Err(mismatch()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 3

[function]
type = "modular"
weights = [1.0, 2.0, 3.0]

[[constraints]]
type = "matroid"
matroid = { type = "uniform", k = 2 }
"#;

    #[test]
    fn minimal_round_trip() {
        let f = parse_instance(MINIMAL).unwrap();
        let text = f.to_toml().unwrap();
        assert_eq!(parse_instance(&text).unwrap(), f);
        let inst = f.build().unwrap();
        assert!(inst.is_feasible(Subset::from_elements([0, 2])));
        assert!(!inst.is_feasible(Subset::full(3)));
        assert_eq!(inst.default_scheme(), SchemeKind::MatroidOpt);
    }

    #[test]
    fn long_knapsack_row_names_the_row() {
        let text = MINIMAL.replace(
            "[[constraints]]\ntype = \"matroid\"",
            "[[constraints]]\ntype = \"knapsack\"\nrows = [[0.5, 0.5, 0.5, 0.5]]\ncapacities = [1.0]\n\n[[constraints]]\ntype = \"matroid\"",
        );
        let errs = parse_instance(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("row 0"), "{}", errs[0]);
        assert!(errs[0].message.contains("constraint 0"), "{}", errs[0]);
        assert_eq!(errs[0].line, 8);
    }

    #[test]
    fn syntax_error_has_position() {
        let errs = parse_instance("n = 3\n[function\n").unwrap_err();
        assert_eq!(errs[0].line, 2);
    }

    #[test]
    fn ufp_no_bottleneck_cites_request() {
        let text = r#"
n = 2
[function]
type = "modular"
weights = [1.0, 1.0]
[[constraints]]
type = "ufp-tree"
vertices = 3
edges = [{ u = 0, v = 1, cap = 1.0 }, { u = 1, v = 2, cap = 2.0 }]
requests = [{ s = 0, t = 2, demand = 1.0 }, { s = 1, t = 2, demand = 1.5 }]
"#;
        let errs = parse_instance(text).unwrap_err();
        assert!(errs[0].message.contains("request 1"), "{}", errs[0]);
        assert!(errs[0].message.contains("no-bottleneck"), "{}", errs[0]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for (name, kind) in SCHEME_NAMES {
            assert_eq!(name.parse::<SchemeKind>().unwrap(), kind);
            assert_eq!(kind.to_string(), name);
        }
        assert!("greedy".parse::<SchemeKind>().is_err());
    }
}
