//! Command dispatch for the `submax` binary.
//!
//! All randomness flows from `--seed` through labelled sub-seeds:
//! label 1 drives the local search, 2 the scheme construction, 3
//! strictification, 4 the rounding repetitions, 5 the inequality suite and
//! 6 balance estimation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use submax_core::instance::{parse_instance, Built, Instance, SchemeKind, SchemeOptions};
use submax_core::local_search::LocalSearchParams;
use submax_core::rng::derive;
use submax_core::rounding::{maximize_constrained, relax, Algorithm, Cleanup, PipelineConfig};
use submax_core::schemes::{correlation_gap_lp_link, CrScheme};
use submax_core::submodular::{multilinear_exact, EstimatorConfig, FunctionSpec, EXACT_LIMIT};
use submax_core::verification::{
    balance_estimate, brute_force_max, correlation_gap_estimate, inequality_suite, MatroidPoint, SuiteInput,
    SuiteOptions,
};
use submax_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "submax", version, about = "Submodular maximization with contention-resolution rounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relax, round and report the best feasible set.
    Solve(Flags),
    /// Run the inequality suite on the instance.
    Verify(Flags),
    /// Estimate per-element balance of the chosen scheme.
    Balance(Flags),
    /// Ratio of the multilinear extension to the concave closure.
    CorrGap(Flags),
    /// Exhaustive optimum over feasible sets.
    BruteForce(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Instance file (TOML).
    instance: PathBuf,
    /// Master seed; falls back to the instance file, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per multilinear estimate.
    #[arg(long)]
    samples: Option<usize>,
    /// Vertex-combination granularity of the local search.
    #[arg(long)]
    q: Option<usize>,
    /// Local search stop tolerance.
    #[arg(long)]
    delta: Option<f64>,
    /// Scale of the scheme and of the relaxed polytope.
    #[arg(long)]
    b: Option<f64>,
    /// Error budget of the optimal matroid scheme.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Box cap for ls309 and lsgen.
    #[arg(long)]
    t: Option<f64>,
    /// matroid-span, matroid-opt, knapsack, sparse, sparse-width, ufp, cpip or compose.
    #[arg(long)]
    scheme: Option<String>,
    /// ls25, ls309 or lsgen.
    #[arg(long)]
    algo: Option<String>,
    /// Monte Carlo budget for scheme construction and balance estimates.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Emit one JSON record per line instead of the table.
    #[arg(long)]
    records: bool,
    /// Iteration cap of the local search.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Rounding repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// auto, prune or strictify.
    #[arg(long, default_value = "auto")]
    cleanup: String,
    /// Comma-separated point used instead of the relaxed optimum.
    #[arg(long, value_delimiter = ',')]
    point: Option<Vec<f64>>,
}

/// Captured result of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn usage(msg: impl std::fmt::Display) -> Self {
        Self { code: EXIT_USAGE, stdout: String::new(), stderr: format!("error: {msg}\n") }
    }
}

/// Parse `args` (including the program name) and execute.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code, stdout: String::new(), stderr: text }
            } else {
                Outcome { code, stdout: text, stderr: String::new() }
            };
        }
    };
    let (name, flags) = match &cli.command {
        Command::Solve(f) => ("solve", f),
        Command::Verify(f) => ("verify", f),
        Command::Balance(f) => ("balance", f),
        Command::CorrGap(f) => ("corr-gap", f),
        Command::BruteForce(f) => ("brute-force", f),
    };
    let ctx = match Context::load(flags) {
        Ok(c) => c,
        Err(o) => return o,
    };
    let result = match name {
        "solve" => solve(&ctx),
        "verify" => verify(&ctx),
        "balance" => balance(&ctx),
        "corr-gap" => corr_gap(&ctx),
        _ => brute_force(&ctx),
    };
    result.unwrap_or_else(Outcome::usage)
}

struct Context<'a> {
    flags: &'a Flags,
    inst: Instance,
    seed: u64,
    algo: Algorithm,
    scheme: SchemeKind,
    b: f64,
    reps: usize,
    cleanup: Cleanup,
    local_search: LocalSearchParams,
    scheme_opts: SchemeOptions,
}

impl<'a> Context<'a> {
    fn load(flags: &'a Flags) -> Result<Self, Outcome> {
        let text = std::fs::read_to_string(&flags.instance)
            .map_err(|e| Outcome::usage(format!("cannot read {}: {e}", flags.instance.display())))?;
        let file = parse_instance(&text).map_err(|errs| {
            let mut s = String::new();
            for d in errs {
                let _ = writeln!(s, "{}:{d}", flags.instance.display());
            }
            Outcome { code: EXIT_USAGE, stdout: String::new(), stderr: s }
        })?;
        let inst = file.build().map_err(Outcome::usage)?;
        let defaults = file.pipeline.clone().unwrap_or_default();
        let seed = flags.seed.or(defaults.seed).unwrap_or(0);
        let algo = match &flags.algo {
            Some(a) => a.parse().map_err(Outcome::usage)?,
            None => defaults.algo.unwrap_or(Algorithm::Ls25),
        };
        let scheme = match &flags.scheme {
            Some(s) => s.parse().map_err(Outcome::usage)?,
            None => defaults.scheme.unwrap_or_else(|| inst.default_scheme()),
        };
        let b = flags.b.or(defaults.b).unwrap_or_else(|| inst.default_b(scheme));
        if !(b > 0.0 && b <= 1.0) {
            return Err(Outcome::usage(format!("b = {b} must lie in (0,1]")));
        }
        let reps = flags.reps.or(defaults.reps).unwrap_or(100);
        if reps == 0 {
            return Err(Outcome::usage("reps must be at least 1"));
        }
        let cleanup = match flags.cleanup.as_str() {
            "auto" => Cleanup::Auto,
            "prune" => Cleanup::Prune,
            "strictify" => Cleanup::Strictify,
            other => return Err(Outcome::usage(format!("unknown cleanup '{other}' (expected auto, prune or strictify)"))),
        };
        let mut estimator = EstimatorConfig::default();
        if let Some(h) = flags.samples.or(defaults.samples) {
            estimator.samples = h;
        }
        let local_search = LocalSearchParams {
            q: flags.q.or(defaults.q),
            delta: flags.delta.or(defaults.delta),
            max_iters: flags.max_iters.or(defaults.max_iters).unwrap_or(LocalSearchParams::default().max_iters),
            estimator,
        };
        let scheme_opts = SchemeOptions {
            epsilon: flags.epsilon.or(defaults.epsilon).unwrap_or(SchemeOptions::default().epsilon),
            mc_samples: flags.mc_samples.or(defaults.mc_samples).unwrap_or(SchemeOptions::default().mc_samples),
            seed: derive(seed, 2),
            ..Default::default()
        };
        Ok(Self { flags, inst, seed, algo, scheme, b, reps, cleanup, local_search, scheme_opts })
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            algo: self.algo,
            b: self.b,
            t: self.flags.t.or(self.inst.file.pipeline.as_ref().and_then(|p| p.t)),
            reps: self.reps,
            seed: self.seed,
            cleanup: self.cleanup,
            local_search: self.local_search,
            ..Default::default()
        }
    }

    /// The user's point, or the relaxed optimum over `b·P`.
    fn point(&self) -> Result<Vec<f64>, Error> {
        let fixed = self.flags.point.as_ref().or(self.inst.file.pipeline.as_ref().and_then(|p| p.point.as_ref()));
        if let Some(p) = fixed {
            if p.len() != self.inst.len() {
                return Err(Error::Dimension(format!("point has {} coordinates, expected {}", p.len(), self.inst.len())));
            }
            return Ok(p.clone());
        }
        let lo = relax(&self.inst.f, &self.inst.polytope()?, &self.pipeline())?;
        Ok(lo.point.coords().iter().map(|v| if *v < 1e-12 { 0.0 } else { v.min(1.0) }).collect())
    }

    fn build_scheme(&self, x: &[f64]) -> Result<CrScheme, Error> {
        self.inst.scheme(self.scheme, x, self.b, &self.scheme_opts)
    }
}

fn emit(records: &[serde_json::Value]) -> String {
    records.iter().map(|r| format!("{}\n", serde_json::to_string(r).expect("records are plain JSON"))).collect()
}

fn fmt_set(s: submax_core::Subset) -> String {
    format!("{s}")
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn solve(ctx: &Context) -> Result<Outcome, Error> {
    let inst = &ctx.inst;
    let p = inst.polytope()?;
    let factory = |x: &[f64], b: f64, seed: u64| {
        inst.scheme(ctx.scheme, x, b, &SchemeOptions { seed, ..ctx.scheme_opts })
    };
    let r = maximize_constrained(&inst.f, &p, &factory, &ctx.pipeline())?;
    let feasible = inst.is_feasible(r.set);
    let code = if feasible && r.report.violations == 0 { EXIT_OK } else { EXIT_CHECK_FAILED };
    let stdout = if ctx.flags.records {
        emit(&[json!({
            "record": "solve",
            "set": r.set.to_vec(),
            "value": r.value,
            "feasible": feasible,
            "report": to_value(&r.report),
        })])
    } else {
        let rep = &r.report;
        let mut s = String::new();
        let _ = writeln!(s, "algorithm        {}", rep.algo);
        let _ = writeln!(s, "scheme           {}", rep.scheme);
        let _ = writeln!(s, "b                {:.6}", rep.b);
        let _ = writeln!(s, "F(x*)            {:.6} ± {:.6}{}", rep.relaxed.value, rep.relaxed.stderr, if rep.certified { "" } else { " (not certified)" });
        let _ = writeln!(s, "claimed c        {:.6}", rep.claimed_c);
        let _ = writeln!(s, "cleanup          {}", if rep.strictified { "strictify" } else if rep.pruned { "prune" } else { "none" });
        let _ = writeln!(s, "repetitions      {}", rep.reps);
        let _ = writeln!(s, "single-shot mean {:.6} ± {:.6}", rep.single_shot.value, rep.single_shot.stderr);
        let _ = writeln!(s, "best value       {:.6}", rep.best_value);
        match rep.realized_ratio {
            Some(q) => { let _ = writeln!(s, "realized ratio   {q:.6}"); }
            None => { let _ = writeln!(s, "realized ratio   n/a"); }
        }
        let _ = writeln!(s, "best set         {}", fmt_set(r.set));
        let _ = writeln!(s, "feasible         {}", if feasible { "yes" } else { "NO" });
        s
    };
    Ok(Outcome { code, stdout, stderr: String::new() })
}

fn verify(ctx: &Context) -> Result<Outcome, Error> {
    let inst = &ctx.inst;
    let polytope = inst.polytope()?;
    let x = ctx.point()?;
    let schemes = if inst.constraints.is_empty() { Vec::new() } else { vec![ctx.build_scheme(&x)?] };
    let matroids = inst
        .constraints
        .iter()
        .filter_map(|c| match c {
            Built::Matroid(m) => Some(MatroidPoint { matroid: m.clone(), x: x.clone(), b: ctx.b }),
            _ => None,
        })
        .collect();
    let input = SuiteInput { f: inst.f.clone(), polytope, feasible: inst.feasibility(), schemes, matroids };
    let mut opts = SuiteOptions { seed: derive(ctx.seed, 5), local_search: ctx.local_search, ..Default::default() };
    opts.local_search.estimator.seed = derive(ctx.seed, 1);
    if let Some(t) = ctx.flags.mc_samples {
        opts.balance_trials = t;
        opts.rounding_trials = t;
    }
    let recs = inequality_suite(&input, &opts)?;
    let all = recs.iter().all(|r| r.pass);
    let stdout = if ctx.flags.records {
        emit(&recs.iter().map(to_value).collect::<Vec<_>>())
    } else {
        let mut s = String::new();
        let _ = writeln!(s, "{:<36} {:>14} {:>12}  result", "check", "margin", "sigma");
        for r in &recs {
            let _ = writeln!(s, "{:<36} {:>14.6e} {:>12.4e}  {}", r.name, r.margin + 0.0, r.sigma, if r.pass { "PASS" } else { "FAIL" });
        }
        s
    };
    Ok(Outcome { code: if all { EXIT_OK } else { EXIT_CHECK_FAILED }, stdout, stderr: String::new() })
}

fn balance(ctx: &Context) -> Result<Outcome, Error> {
    let x = ctx.point()?;
    let s = ctx.build_scheme(&x)?;
    let trials = ctx.flags.mc_samples.unwrap_or(100_000);
    let rep = balance_estimate(&s, trials, derive(ctx.seed, 6))?;
    let margin = rep.margin(s.c(), 4.0);
    let pass = margin >= 0.0 && rep.violations == 0;
    let stdout = if ctx.flags.records {
        let mut recs: Vec<serde_json::Value> = rep
            .per_element
            .iter()
            .enumerate()
            .map(|(i, e)| json!({ "record": "element", "element": i, "x": x[i], "balance": e }))
            .collect();
        recs.push(json!({
            "record": "balance",
            "scheme": s.name(),
            "b": s.b(),
            "claimed": s.c(),
            "min": rep.min,
            "trials": rep.trials,
            "violations": rep.violations,
            "pass": pass,
        }));
        emit(&recs)
    } else {
        let mut out = String::new();
        let _ = writeln!(out, "scheme {}  b = {:.6}  claimed c = {:.6}  trials = {}", s.name(), s.b(), s.c(), rep.trials);
        let _ = writeln!(out, "{:>7} {:>10} {:>10} {:>10} {:>9}", "element", "x", "estimate", "stderr", "samples");
        for (i, e) in rep.per_element.iter().enumerate() {
            match e {
                Some(e) => {
                    let _ = writeln!(out, "{i:>7} {:>10.6} {:>10.6} {:>10.6} {:>9}", x[i], e.estimate, e.stderr, e.samples);
                }
                None => {
                    let _ = writeln!(out, "{i:>7} {:>10.6} {:>10} {:>10} {:>9}", x[i], "-", "-", 0);
                }
            }
        }
        if let Some((i, v, se)) = rep.min {
            let _ = writeln!(out, "minimum {v:.6} ± {se:.6} at element {i}");
        }
        let _ = writeln!(out, "infeasible outputs {}", rep.violations);
        let _ = writeln!(out, "{}", if pass { "PASS" } else { "FAIL" });
        out
    };
    Ok(Outcome { code: if pass { EXIT_OK } else { EXIT_CHECK_FAILED }, stdout, stderr: String::new() })
}

fn corr_gap(ctx: &Context) -> Result<Outcome, Error> {
    let inst = &ctx.inst;
    let x = ctx.point()?;
    let n = inst.len();
    let ratio = correlation_gap_estimate(&inst.f, &x)?;
    let f_x = multilinear_exact(&inst.f, &x)?;
    let rank_floor = matches!(inst.file.function, FunctionSpec::WeightedMatroidRank { .. })
        .then(|| 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32));
    let mut links = Vec::new();
    if let FunctionSpec::WeightedMatroidRank { weights, .. } = &inst.file.function {
        for (k, c) in inst.constraints.iter().enumerate() {
            if let Built::Matroid(m) = c {
                let e = correlation_gap_lp_link(m, &x, weights, ctx.flags.mc_samples.unwrap_or(100_000), derive(ctx.seed, 6))?;
                links.push((k, e));
            }
        }
    }
    let pass = rank_floor.map_or(true, |fl| ratio >= fl - 1e-9);
    let stdout = if ctx.flags.records {
        let mut recs = vec![json!({
            "record": "corr-gap",
            "point": x,
            "multilinear": f_x,
            "ratio": ratio,
            "floor": rank_floor,
            "pass": pass,
        })];
        for (k, e) in &links {
            recs.push(json!({ "record": "lp-link", "constraint": k, "ratio": e.value, "stderr": e.stderr }));
        }
        emit(&recs)
    } else {
        let mut s = String::new();
        let _ = writeln!(s, "F(x)             {f_x:.9}");
        let _ = writeln!(s, "F(x) / f+(x)     {ratio:.9}");
        if let Some(fl) = rank_floor {
            let _ = writeln!(s, "floor            {fl:.9}");
        }
        for (k, e) in &links {
            let _ = writeln!(s, "lp link c{k}       {:.9} ± {:.2e}", e.value, e.stderr);
        }
        let _ = writeln!(s, "{}", if pass { "PASS" } else { "FAIL" });
        s
    };
    Ok(Outcome { code: if pass { EXIT_OK } else { EXIT_CHECK_FAILED }, stdout, stderr: String::new() })
}

fn brute_force(ctx: &Context) -> Result<Outcome, Error> {
    let inst = &ctx.inst;
    if inst.len() > EXACT_LIMIT {
        return Err(Error::Capacity { what: "brute-force maximization", n: inst.len(), limit: EXACT_LIMIT });
    }
    let best = brute_force_max(&inst.f, |s| inst.is_feasible(s))?;
    let stdout = match (&best, ctx.flags.records) {
        (Some((s, v)), true) => emit(&[json!({ "record": "brute-force", "set": s.to_vec(), "value": v })]),
        (None, true) => emit(&[json!({ "record": "brute-force", "set": null, "value": null })]),
        (Some((s, v)), false) => format!("optimum {v:.9}\nset     {}\n", fmt_set(*s)),
        (None, false) => "no feasible set\n".to_string(),
    };
    Ok(Outcome { code: EXIT_OK, stdout, stderr: String::new() })
}
