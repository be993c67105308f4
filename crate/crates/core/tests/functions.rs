use proptest::prelude::*;
use rand::Rng;

use submax_core::constraints::{Matroid, MatroidKind};
use submax_core::rng::{derive, rng_from, SchemeRng};
use submax_core::submodular::{
    concave_closure, gradient_exact, multilinear_estimate, multilinear_exact, prune, EstimatorConfig, FractionalPoint,
    FunctionSpec, MixtureTerm, SetFunction,
};
use submax_core::Subset;

fn coverage(n: usize, rng: &mut SchemeRng) -> FunctionSpec {
    let universe = 6;
    let sets = (0..n).map(|_| (0..universe).filter(|_| rng.gen_bool(0.35)).collect()).collect();
    let weights = Some((0..universe).map(|_| rng.gen_range(0.1..2.0)).collect());
    FunctionSpec::Coverage { universe, sets, weights }
}

fn cut(n: usize, rng: &mut SchemeRng) -> FunctionSpec {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.4) {
                edges.push((u, v, rng.gen_range(0.1..1.5)));
            }
        }
    }
    FunctionSpec::Cut { edges }
}

fn rank(n: usize, rng: &mut SchemeRng) -> FunctionSpec {
    let matroid = match rng.gen_range(0..3) {
        0 => MatroidKind::Uniform { k: rng.gen_range(1..=n) },
        1 => {
            let split = n / 2;
            MatroidKind::Partition { blocks: vec![(0..split).collect(), (split..n).collect()], caps: vec![1, 2] }
        }
        _ => {
            let vertices = 4;
            let edges = (0..n).map(|_| {
                let u = rng.gen_range(0..vertices);
                (u, (u + rng.gen_range(1..vertices)) % vertices)
            });
            MatroidKind::Graphic { vertices, edges: edges.collect() }
        }
    };
    FunctionSpec::WeightedMatroidRank { matroid, weights: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect() }
}

fn random_function(n: usize, seed: u64) -> SetFunction {
    let mut rng = rng_from(seed);
    let spec = match rng.gen_range(0..4) {
        0 => coverage(n, &mut rng),
        1 => cut(n, &mut rng),
        2 => rank(n, &mut rng),
        _ => FunctionSpec::Mixture {
            terms: vec![
                MixtureTerm { weight: rng.gen_range(0.1..1.0), function: coverage(n, &mut rng) },
                MixtureTerm { weight: rng.gen_range(0.1..1.0), function: cut(n, &mut rng) },
            ],
        },
    };
    SetFunction::new(n, spec).unwrap()
}

fn point(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extension_agrees_at_vertices(n in 1usize..=9, seed: u64, mask: u64) {
        let f = random_function(n, seed);
        let s = Subset(mask & Subset::full(n).0);
        let v = multilinear_exact(&f, &s.indicator(n)).unwrap();
        prop_assert!((v - f.value(s)).abs() <= 1e-9, "F(1_S) = {v}, f(S) = {}", f.value(s));
    }

    #[test]
    fn gradient_inequality(n in 1usize..=8, seed: u64) {
        let f = random_function(n, seed);
        let x = point(n, derive(seed, 1));
        let y = point(n, derive(seed, 2));
        let join: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect();
        let meet: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.min(*b)).collect();
        let g = gradient_exact(&f, &x).unwrap();
        let lhs: f64 = y.iter().zip(&x).zip(&g).map(|((yi, xi), gi)| (yi - xi) * gi).sum();
        let fx = multilinear_exact(&f, &x).unwrap();
        let rhs = multilinear_exact(&f, &join).unwrap() + multilinear_exact(&f, &meet).unwrap() - 2.0 * fx;
        prop_assert!(lhs >= rhs - 1e-9, "{lhs} < {rhs}");
    }

    #[test]
    fn extension_below_concave_closure(n in 1usize..=7, seed: u64) {
        let f = random_function(n, seed);
        let x = point(n, derive(seed, 3));
        let fx = multilinear_exact(&f, &x).unwrap();
        let closure = concave_closure(&f, &x).unwrap();
        prop_assert!(fx <= closure + 1e-7, "F = {fx} above f+ = {closure}");
    }

    #[test]
    fn scaled_rank_bound(n in 2usize..=7, seed: u64, b in 0.05f64..=1.0) {
        let mut rng = rng_from(seed);
        let spec = rank(n, &mut rng);
        let FunctionSpec::WeightedMatroidRank { matroid, .. } = &spec else { unreachable!() };
        let m = Matroid::new(n, matroid.clone()).unwrap();
        let f = SetFunction::new(n, spec.clone()).unwrap();
        let k = 3;
        let mut p = vec![0.0; n];
        for _ in 0..k {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            for (pi, v) in p.iter_mut().zip(m.polytope_maximize(&w)) {
                *pi += v / k as f64;
            }
        }
        let x: Vec<f64> = p.iter().map(|v| b * v).collect();
        let floor = (1.0 - (1.0 - b / n as f64).powi(n as i32)) * concave_closure(&f, &p).unwrap();
        let fx = multilinear_exact(&f, &x).unwrap();
        prop_assert!(fx >= floor - 1e-9, "F(bp) = {fx} < {floor}");
    }

    #[test]
    fn prune_matches_rescan(n in 1usize..=10, seed: u64, mask: u64) {
        let mut rng = rng_from(seed);
        let values: Vec<f64> = (0..1usize << n).map(|s| if s == 0 { 0.0 } else { rng.gen_range(0.0..4.0) }).collect();
        let f = SetFunction::table(n, values.clone()).unwrap();
        let input = mask & ((1u64 << n) - 1);
        let mut kept = 0u64;
        for e in 0..n {
            if input >> e & 1 == 1 && values[(kept | 1 << e) as usize] > values[kept as usize] {
                kept |= 1 << e;
            }
        }
        prop_assert_eq!(prune(&f, Subset(input)), Subset(kept));
    }

    #[test]
    fn combo_average_is_consistent(n in 1usize..=8, seed: u64, parts in 1usize..6) {
        let mut rng = rng_from(seed);
        let combo: Vec<(Vec<f64>, usize)> = (0..parts)
            .map(|_| ((0..n).map(|_| f64::from(rng.gen_bool(0.5) as u8)).collect(), rng.gen_range(1..5)))
            .collect();
        let q: usize = combo.iter().map(|c| c.1).sum();
        let p = FractionalPoint::from_combo(combo.clone()).unwrap();
        prop_assert!(p.combo_consistent());
        prop_assert_eq!(p.q(), q);
        for i in 0..n {
            let avg: f64 = combo.iter().map(|(v, m)| v[i] * *m as f64).sum::<f64>() / q as f64;
            prop_assert!((p.coords()[i] - avg).abs() <= 1e-12);
        }
    }
}

#[test]
fn estimates_cover_exact_value() {
    let trials = 200;
    let mut inside = 0;
    for t in 0..trials {
        let seed = derive(7, t);
        let n = 4 + (t as usize % 7);
        let f = random_function(n, seed);
        let x = point(n, derive(seed, 4));
        let exact = multilinear_exact(&f, &x).unwrap();
        let est = multilinear_estimate(&f, &x, &EstimatorConfig::sampled(10_000, derive(seed, 5))).unwrap();
        if (est.value - exact).abs() <= 4.0 * est.stderr + 1e-12 {
            inside += 1;
        }
    }
    assert!(inside * 100 >= trials * 99, "{inside} of {trials} estimates within 4 stderr");
}

#[test]
fn estimates_are_seed_reproducible() {
    let f = random_function(8, 11);
    let x = point(8, 12);
    let cfg = EstimatorConfig::sampled(5000, 13);
    let a = multilinear_estimate(&f, &x, &cfg).unwrap();
    let b = multilinear_estimate(&f, &x, &cfg).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}
