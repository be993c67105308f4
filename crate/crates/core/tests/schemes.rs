use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;

use submax_core::constraints::{Matroid, Polytope, Request, TreeEdge, UfpTreeInstance};
use submax_core::instance::{parse_instance, Built, Instance, SchemeKind, SchemeOptions};
use submax_core::rng::{derive, rng_from, sample_set, SchemeRng};
use submax_core::schemes::{
    matroid_optimal_scheme, matroid_span_scheme, ufp_tree_unit_scheme, CrScheme, OptimalSchemeConfig, SpanSchemeConfig,
};
use submax_core::verification::balance_estimate;
use submax_core::Subset;

const SEED: u64 = 4_051_977;

fn corpus() -> Vec<(String, Instance)> {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "instances"].iter().collect();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), parse_instance(&text).unwrap().build().unwrap())
        })
        .collect()
}

fn kinds(inst: &Instance) -> Vec<SchemeKind> {
    let mut out = Vec::new();
    if inst.constraints.len() > 1 {
        out.push(SchemeKind::Compose);
    }
    if let [only] = inst.constraints.as_slice() {
        match only {
            Built::Matroid(_) => out.extend([SchemeKind::MatroidOpt, SchemeKind::MatroidSpan]),
            Built::Knapsack(_) => out.push(SchemeKind::Knapsack),
            Built::Sparse(sys) => {
                out.push(SchemeKind::Sparse);
                if sys.width() >= 2 {
                    out.push(SchemeKind::SparseWidth);
                }
            }
            Built::UfpTree { .. } => out.push(SchemeKind::Ufp),
            Built::Cpip(_) => out.push(SchemeKind::Cpip),
        }
    }
    out
}

/// Average of a few random-weight vertices of `P`, scaled by `b`.
fn point_in(p: &Polytope, b: f64, rng: &mut SchemeRng) -> Vec<f64> {
    let n = p.dim();
    let k = 3;
    let mut x = vec![0.0; n];
    for _ in 0..k {
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        for (xi, v) in x.iter_mut().zip(p.maximize(&w).unwrap().unwrap()) {
            *xi += b * v.clamp(0.0, 1.0) / k as f64;
        }
    }
    x
}

fn corpus_schemes() -> Vec<(String, Instance, CrScheme)> {
    let mut out = Vec::new();
    for (k, (name, inst)) in corpus().into_iter().enumerate() {
        if inst.constraints.is_empty() {
            continue;
        }
        let mut rng = rng_from(derive(SEED, k as u64));
        for (j, kind) in kinds(&inst).into_iter().enumerate() {
            let b = inst.default_b(kind);
            let x = point_in(&inst.polytope().unwrap(), b, &mut rng);
            let opts = SchemeOptions { seed: derive(SEED, 100 + 10 * k as u64 + j as u64), ..Default::default() };
            let s = inst.scheme(kind, &x, b, &opts).unwrap();
            out.push((format!("{name} {kind}"), inst.clone(), s));
        }
    }
    out
}

#[test]
fn outputs_are_always_feasible() {
    let schemes = corpus_schemes();
    assert!(schemes.len() >= 15, "only {} schemes built", schemes.len());
    for (label, inst, s) in &schemes {
        let mut rng = rng_from(derive(SEED, 1));
        let support = Subset::support(s.point());
        for _ in 0..10_000 {
            let a = sample_set(s.point(), &mut rng);
            let out = s.resolve(a, &mut rng);
            assert!(out.is_subset_of(a.intersection(support)), "{label}: {out} not inside {a}");
            assert!(inst.is_feasible(out) && s.is_feasible(out), "{label}: {out} infeasible");
        }
    }
}

#[test]
fn balance_meets_claim() {
    for (label, _, s) in corpus_schemes() {
        let rep = balance_estimate(&s, 20_000, derive(SEED, 2)).unwrap();
        assert_eq!(rep.violations, 0, "{label}");
        assert!(rep.margin(s.c(), 4.0) >= 0.0, "{label}: margin {} below claim {}", rep.margin(s.c(), 4.0), s.c());
    }
}

/// `i ∈ π(A₂)` and `i ∈ A₁ ⊆ A₂` imply `i ∈ π(A₁)`, over every pair of
/// subsets of the support.
fn containment_failure(s: &CrScheme) -> Option<(Subset, Subset, usize)> {
    let support = Subset::support(s.point());
    let mut rng = rng_from(0);
    let elems = support.to_vec();
    let subsets: Vec<Subset> = (0..1u64 << elems.len())
        .map(|m| Subset::from_elements(elems.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, &e)| e)))
        .collect();
    let outputs: Vec<Subset> = subsets.iter().map(|&a| s.resolve(a, &mut rng)).collect();
    for (k2, &a2) in subsets.iter().enumerate() {
        let mut sub = k2 as u64;
        loop {
            let a1 = subsets[sub as usize];
            if let Some(i) = outputs[k2].intersection(a1).difference(outputs[sub as usize]).iter().next() {
                return Some((a1, a2, i));
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & k2 as u64;
        }
    }
    None
}

#[test]
fn deterministic_schemes_are_monotone() {
    let mut checked = 0;
    for (label, inst, s) in corpus_schemes() {
        if inst.len() > 10 || !s.is_deterministic() || !s.is_monotone() {
            continue;
        }
        if let Some((a1, a2, i)) = containment_failure(&s) {
            panic!("{label}: {i} kept from {a2} but dropped from {a1}");
        }
        checked += 1;
    }
    assert!(checked >= 6, "{checked} schemes checked");
}

#[test]
fn unit_tree_scheme_is_not_monotone() {
    let edges = vec![TreeEdge { u: 0, v: 1, cap: 1.0 }, TreeEdge { u: 1, v: 2, cap: 1.0 }];
    let requests = vec![
        Request { s: 0, t: 1, demand: 1.0 },
        Request { s: 0, t: 2, demand: 1.0 },
        Request { s: 1, t: 2, demand: 1.0 },
    ];
    let inst = UfpTreeInstance::new(3, edges, requests, 0).unwrap();
    let s = ufp_tree_unit_scheme(&inst, &[0.02; 3], 0.05).unwrap();
    assert!(!s.is_monotone());
    let mut rng = rng_from(0);
    assert_eq!(s.resolve(Subset::full(3), &mut rng), Subset::from_elements([0, 2]));
    assert_eq!(s.resolve(Subset::from_elements([1, 2]), &mut rng), Subset::singleton(1));
    assert!(containment_failure(&s).is_some());
}

#[test]
fn randomized_schemes_are_monotone_in_probability() {
    let trials = 6000;
    let mut checked = 0;
    for (label, _, s) in corpus_schemes() {
        if s.is_deterministic() || !s.is_monotone() || s.len() > 12 {
            continue;
        }
        let mut pick = rng_from(derive(SEED, 3));
        let support = Subset::support(s.point());
        for _ in 0..4 {
            let a2 = sample_set(&vec![0.7; s.len()], &mut pick).intersection(support);
            let Some(i) = a2.iter().nth(pick.gen_range(0..a2.len().max(1))) else { continue };
            let a1 = Subset(a2.0 & pick.gen::<u64>()).with(i);
            let freq = |a: Subset, seed: u64| {
                let mut rng = rng_from(seed);
                (0..trials).filter(|_| s.resolve(a, &mut rng).contains(i)).count() as f64 / trials as f64
            };
            let (p1, p2) = (freq(a1, derive(SEED, 4)), freq(a2, derive(SEED, 5)));
            let sigma = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / trials as f64).sqrt();
            assert!(p1 >= p2 - 4.0 * sigma - 1e-12, "{label}: Pr[{i}] {p1} on {a1} below {p2} on {a2}");
            checked += 1;
        }
    }
    assert!(checked >= 8, "{checked} pairs checked");
}

#[test]
fn span_rounds_stay_below_scale() {
    for (name, inst) in corpus() {
        let [Built::Matroid(m)] = inst.constraints.as_slice() else { continue };
        if inst.len() > 12 {
            continue;
        }
        let m = m.clone();
        let mut rng = rng_from(derive(SEED, 6));
        for b in [0.3, 0.5, 1.0] {
            let x = point_in(&Polytope::matroid(m.clone()), b, &mut rng);
            let s = matroid_span_scheme(m.clone(), &x, b, &SpanSchemeConfig { seed: derive(SEED, 7), ..Default::default() })
                .unwrap();
            for r in &s.rounds {
                assert!(r.estimate <= b + 3.0 * r.stderr, "{name} b={b}: element {} at {}", r.element, r.estimate);
            }
        }
    }
}

#[test]
fn rank_one_balance_never_beats_ceiling() {
    for n in [3usize, 5, 8] {
        let m = Arc::new(Matroid::uniform(n, 1).unwrap());
        for b in [0.4, 1.0] {
            let x = vec![b / n as f64; n];
            let ceiling = (1.0 - (1.0 - b / n as f64).powi(n as i32)) / b;
            let span = matroid_span_scheme(m.clone(), &x, b, &SpanSchemeConfig::default()).unwrap().scheme;
            let opt = matroid_optimal_scheme(m.clone(), &x, b, &OptimalSchemeConfig::default()).unwrap().scheme;
            for s in [span, opt] {
                let rep = balance_estimate(&s, 100_000, derive(SEED, 8)).unwrap();
                let (_, v, se) = rep.min.unwrap();
                assert!(v <= ceiling + 4.0 * se + 1e-12, "{} n={n} b={b}: {v} above {ceiling}", s.name());
            }
        }
    }
}
