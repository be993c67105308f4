use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use submax_core::constraints::{Matroid, Polytope};
use submax_core::instance::{parse_instance, InstanceFile, SchemeKind, SchemeOptions};
use submax_core::local_search::{fractional_local_search, LocalSearchParams};
use submax_core::rng::{derive, rng_from, sample_set, SchemeRng};
use submax_core::rounding::{maximize_constrained, relax, PipelineConfig};
use submax_core::schemes::{matroid_span_scheme, strictify, SpanSchemeConfig, StrictifyConfig};
use submax_core::submodular::{multilinear_exact, EstimatorConfig, FunctionSpec, MixtureTerm, SetFunction};
use submax_core::verification::brute_force_max;
use submax_core::Subset;

const SEED: u64 = 77_031;

fn corpus_files() -> Vec<(String, String)> {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "instances"].iter().collect();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths.into_iter().map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())).collect()
}

fn non_monotone(n: usize, rng: &mut SchemeRng) -> SetFunction {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.5) {
                edges.push((u, v, rng.gen_range(0.2..1.0)));
            }
        }
    }
    let sets = (0..n).map(|_| (0..5).filter(|_| rng.gen_bool(0.4)).collect()).collect();
    let terms = vec![
        MixtureTerm { weight: 1.0, function: FunctionSpec::Cut { edges } },
        MixtureTerm { weight: 0.5, function: FunctionSpec::Coverage { universe: 5, sets, weights: None } },
    ];
    SetFunction::new(n, FunctionSpec::Mixture { terms }).unwrap()
}

fn random_polytope(n: usize, rng: &mut SchemeRng) -> Polytope {
    match rng.gen_range(0..3) {
        0 => Polytope::matroid(Arc::new(Matroid::uniform(n, rng.gen_range(1..=n)).unwrap())),
        1 => Polytope::matroid(Arc::new(Matroid::complete_graph(4).unwrap())),
        _ => {
            let rows = (0..2).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            Polytope::packing(n, rows, vec![1.0, 1.5]).unwrap()
        }
    }
}

fn exact_params(n: usize) -> LocalSearchParams {
    LocalSearchParams { q: Some(20 * n * n), estimator: EstimatorConfig::exact(), ..Default::default() }
}

#[test]
fn local_optima_are_feasible_and_certified() {
    for t in 0..12u64 {
        let mut rng = rng_from(derive(SEED, t));
        let p = random_polytope(6, &mut rng);
        let n = p.dim();
        let f = non_monotone(n, &mut rng);
        let lo = fractional_local_search(&f, &p, &exact_params(n)).unwrap();
        let x = lo.point.coords();
        assert!(p.contains(x).unwrap(), "case {t}: {x:?} outside P");
        assert!(lo.point.combo_consistent(), "case {t}");
        assert_eq!(lo.point.q(), lo.params.q);
        for w in lo.trajectory.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "case {t}: F fell from {} to {}", w[0], w[1]);
        }
        assert!(lo.certified, "case {t}: stopped after {} iterations", lo.iterations);
        let fx = multilinear_exact(&f, x).unwrap();
        let slack = 5.0 * lo.params.delta * n as f64;
        for _ in 0..100 {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let y = p.maximize(&w).unwrap().unwrap();
            let join: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b).min(1.0)).collect();
            let meet: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.min(*b).max(0.0)).collect();
            let rhs = multilinear_exact(&f, &join).unwrap() + multilinear_exact(&f, &meet).unwrap() - slack;
            assert!(2.0 * fx >= rhs - 1e-9, "case {t}: 2F(x) = {} < {rhs}", 2.0 * fx);
        }
    }
}

#[test]
fn pipeline_outputs_are_feasible() {
    for (k, (name, text)) in corpus_files().into_iter().enumerate() {
        let inst = parse_instance(&text).unwrap().build().unwrap();
        if inst.len() > 10 || inst.constraints.is_empty() {
            continue;
        }
        let kind = inst.default_scheme();
        let b = inst.default_b(kind);
        let cfg = PipelineConfig {
            b,
            reps: 20,
            seed: derive(SEED, 100 + k as u64),
            local_search: LocalSearchParams { estimator: EstimatorConfig::exact(), ..Default::default() },
            ..Default::default()
        };
        let factory = |x: &[f64], b: f64, s: u64| inst.scheme(kind, x, b, &SchemeOptions { seed: s, ..Default::default() });
        let r = maximize_constrained(&inst.f, &inst.polytope().unwrap(), &factory, &cfg).unwrap();
        assert!(inst.is_feasible(r.set), "{name}: {} infeasible", r.set);
        assert_eq!(r.report.violations, 0, "{name}");
        assert!((inst.f.value(r.set) - r.value).abs() <= 1e-12, "{name}");
    }
}

#[test]
fn strict_schemes_need_no_pruning() {
    let trials = 10_000;
    for t in 0..4u64 {
        let mut rng = rng_from(derive(SEED, 200 + t));
        let n = 7;
        let f = non_monotone(n, &mut rng);
        let m = Arc::new(Matroid::uniform(n, 2).unwrap());
        let b = 0.5;
        let cfg = PipelineConfig {
            b,
            seed: derive(SEED, 210 + t),
            local_search: LocalSearchParams { estimator: EstimatorConfig::exact(), ..Default::default() },
            ..Default::default()
        };
        let x = relax(&f, &Polytope::matroid(m.clone()), &cfg).unwrap().point.into_coords();
        let span = matroid_span_scheme(m, &x, b, &SpanSchemeConfig { seed: derive(SEED, 220 + t), ..Default::default() })
            .unwrap()
            .scheme;
        let c = span.c();
        let strict = strictify(&span, c, &StrictifyConfig { seed: derive(SEED, 230 + t), ..Default::default() }).unwrap();
        assert!(strict.is_strict());
        let mut rr = rng_from(derive(SEED, 240 + t));
        let values: Vec<f64> = (0..trials).map(|_| f.value(strict.resolve(sample_set(&x, &mut rr), &mut rr))).collect();
        let mean = values.iter().sum::<f64>() / trials as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        let bound = c * multilinear_exact(&f, &x).unwrap() - 4.0 * se;
        assert!(mean >= bound, "case {t}: mean {mean} below {bound}");
    }
}

#[test]
fn brute_force_agrees_with_vertices() {
    for t in 0..10u64 {
        let mut rng = rng_from(derive(SEED, 300 + t));
        let n = 3 + t as usize % 7;
        let f = non_monotone(n, &mut rng);
        let (set, value) = brute_force_max(&f, |_| true).unwrap().unwrap();
        let best = (0..1u64 << n).map(|s| multilinear_exact(&f, &Subset(s).indicator(n)).unwrap()).fold(f64::MIN, f64::max);
        assert!((value - best).abs() <= 1e-9 && (f.value(set) - value).abs() <= 1e-12);
    }
}

#[test]
fn runs_are_seed_reproducible() {
    let (_, text) = corpus_files().into_iter().find(|(n, _)| n == "knapsack-small").unwrap();
    let inst = parse_instance(&text).unwrap().build().unwrap();
    let cfg = PipelineConfig { b: 0.8, reps: 30, seed: 5, ..Default::default() };
    let factory =
        |x: &[f64], b: f64, s: u64| inst.scheme(SchemeKind::Knapsack, x, b, &SchemeOptions { seed: s, ..Default::default() });
    let p = inst.polytope().unwrap();
    let a = maximize_constrained(&inst.f, &p, &factory, &cfg).unwrap();
    let b = maximize_constrained(&inst.f, &p, &factory, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn corpus_round_trips() {
    for (name, text) in corpus_files() {
        let file = parse_instance(&text).unwrap();
        let again = parse_instance(&file.to_toml().unwrap()).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        assert_eq!(file, again, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_files_round_trip(n in 1usize..=8, seed: u64, with_pipeline: bool) {
        let mut rng = rng_from(seed);
        let sets: Vec<Vec<usize>> = (0..n).map(|_| (0..4).filter(|_| rng.gen_bool(0.5)).collect()).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let text = format!(
            "n = {n}\nname = \"r{seed}\"\n\n[function]\ntype = \"mixture\"\n\n[[function.terms]]\nweight = 0.5\n\
             function = {{ type = \"coverage\", universe = 4, sets = {sets:?} }}\n\n[[function.terms]]\nweight = 1.25\n\
             function = {{ type = \"modular\", weights = {weights:?} }}\n\n[[constraints]]\ntype = \"matroid\"\n\
             matroid = {{ type = \"uniform\", k = {} }}\n{}",
            1 + seed as usize % n,
            if with_pipeline { format!("\n[pipeline]\nseed = {}\nb = 0.5\nscheme = \"matroid-span\"\n", seed >> 1) } else { String::new() },
        );
        let file: InstanceFile = parse_instance(&text).map_err(|d| TestCaseError::fail(format!("{d:?}")))?;
        prop_assert!(file.build().is_ok());
        let again = parse_instance(&file.to_toml().unwrap()).map_err(|d| TestCaseError::fail(format!("{d:?}")))?;
        prop_assert_eq!(file, again);
    }
}
