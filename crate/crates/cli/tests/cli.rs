use std::path::PathBuf;

use submax_cli::{run, Outcome, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};

fn corpus(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "instances", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn submax(args: &[&str]) -> Outcome {
    run(std::iter::once("submax").chain(args.iter().copied()))
}

fn scratch(name: &str, text: &str) -> String {
    let p = std::env::temp_dir().join(format!("submax-cli-{}-{name}", std::process::id()));
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn records(out: &Outcome) -> Vec<serde_json::Value> {
    out.stdout.lines().map(|l| serde_json::from_str(l).expect("one JSON record per line")).collect()
}

#[test]
fn solve_is_byte_reproducible() {
    let inst = corpus("partition-coverage.toml");
    let args = ["solve", inst.as_str(), "--seed", "7", "--scheme", "matroid-opt", "--b", "1"];
    let a = submax(&args);
    let b = submax(&args);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a, b);
    let mut with_records = args.to_vec();
    with_records.push("--records");
    let r1 = submax(&with_records);
    let r2 = submax(&with_records);
    assert_eq!(r1.stdout, r2.stdout);
    let rec = &records(&r1)[0];
    assert_eq!(rec["record"], "solve");
    assert_eq!(rec["feasible"], true);
}

#[test]
fn seed_changes_the_run() {
    let inst = corpus("cut-uniform.toml");
    let a = submax(&["solve", &inst, "--seed", "1", "--records", "--samples", "500"]);
    let b = submax(&["solve", &inst, "--seed", "2", "--records", "--samples", "500"]);
    assert_eq!(a.code, EXIT_OK);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn every_bundled_instance_solves_feasibly() {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "instances"].iter().collect();
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 12);
    for p in names {
        let out = submax(&["solve", p.to_str().unwrap(), "--records", "--reps", "20"]);
        assert_eq!(out.code, EXIT_OK, "{}: {}", p.display(), out.stderr);
        let rec = &records(&out)[0];
        assert_eq!(rec["feasible"], true, "{}", p.display());
        assert_eq!(rec["report"]["violations"], 0, "{}", p.display());
    }
}

#[test]
fn verify_rank_one_tight_passes_with_small_margins() {
    let out = submax(&["verify", &corpus("rank1-tight.toml"), "--records"]);
    assert_eq!(out.code, EXIT_OK, "{}{}", out.stdout, out.stderr);
    let recs = records(&out);
    for r in &recs {
        for key in ["name", "margin", "sigma", "pass"] {
            assert!(r.get(key).is_some(), "{r}");
        }
    }
    let bal = recs.iter().find(|r| r["name"] == "balance:matroid-opt").expect("balance record");
    let margin = bal["margin"].as_f64().unwrap();
    let sigma = bal["sigma"].as_f64().unwrap();
    assert!(margin >= -4.0 * sigma && margin < 0.05, "margin {margin} sigma {sigma}");
}

#[test]
fn verify_table_lists_each_check() {
    let out = submax(&["verify", &corpus("free-modular.toml")]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stdout);
    assert!(out.stdout.lines().skip(1).all(|l| l.ends_with("PASS")), "{}", out.stdout);
}

#[test]
fn brute_force_beyond_limit_is_a_capacity_error() {
    let out = submax(&["brute-force", &corpus("large-n23.toml")]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("exceeds the limit"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn brute_force_matches_assignment_enumeration() {
    // Two crossing partition matroids on a 3x3 grid are bipartite matchings.
    let w = [1.0, 2.0, 0.5, 1.5, 1.0, 2.5, 0.8, 1.2, 1.0];
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms.iter().map(|p| (0..3).map(|r| w[3 * r + p[r]]).sum::<f64>()).fold(0.0, f64::max);
    let out = submax(&["brute-force", &corpus("two-partitions.toml"), "--records"]);
    assert_eq!(out.code, EXIT_OK);
    let rec = &records(&out)[0];
    assert!((rec["value"].as_f64().unwrap() - best).abs() < 1e-12);
}

#[test]
fn corr_gap_on_graphic_matroid_clears_floor() {
    let out = submax(&["corr-gap", &corpus("graphic-k4.toml"), "--point", "0.3,0.3,0.3,0.3,0.3,0.3", "--records"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let recs = records(&out);
    let gap = &recs[0];
    assert!(gap["ratio"].as_f64().unwrap() >= gap["floor"].as_f64().unwrap() - 1e-9);
    assert_eq!(recs[1]["record"], "lp-link");
}

#[test]
fn balance_reports_every_element() {
    let out = submax(&["balance", &corpus("graphic-k4.toml"), "--records", "--mc-samples", "20000"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let recs = records(&out);
    assert_eq!(recs.iter().filter(|r| r["record"] == "element").count(), 6);
    assert_eq!(recs.last().unwrap()["violations"], 0);
}

#[test]
fn parse_errors_carry_positions() {
    let p = scratch("bad.toml", "n = 2\n[function]\ntype = \"modular\"\nweights = [1.0, \"x\"]\n");
    let out = submax(&["solve", &p]);
    assert_eq!(out.code, EXIT_USAGE);
    // Errors inside a tagged table are reported at the table header.
    assert!(out.stderr.contains("line 2, column 1"), "{}", out.stderr);
    assert!(out.stderr.contains("expected f64"), "{}", out.stderr);
    let p = scratch("bad-n.toml", "n = \"two\"\n[function]\ntype = \"modular\"\nweights = [1.0]\n");
    let out = submax(&["verify", &p]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("line 1"), "{}", out.stderr);
}

#[test]
fn usage_errors_exit_two() {
    let inst = corpus("rank1-tight.toml");
    assert_eq!(submax(&["solve", &inst, "--no-such-flag"]).code, EXIT_USAGE);
    assert_eq!(submax(&["solve", &inst, "--scheme", "greedy"]).code, EXIT_USAGE);
    assert_eq!(submax(&["solve", &inst, "--algo", "ls99"]).code, EXIT_USAGE);
    assert_eq!(submax(&["solve", &inst, "--b", "1.5"]).code, EXIT_USAGE);
    assert_eq!(submax(&["balance", &inst, "--point", "0.1,0.1"]).code, EXIT_USAGE);
    assert_eq!(submax(&["solve", "/nonexistent/instance.toml"]).code, EXIT_USAGE);
    assert_eq!(submax(&[]).code, EXIT_USAGE);
    assert_eq!(submax(&["--help"]).code, EXIT_OK);
}

#[test]
fn failed_check_exits_one() {
    let p = scratch("supermodular.toml", "n = 2\n[function]\ntype = \"custom-table\"\nvalues = [0.0, 1.0, 1.0, 3.0]\n");
    let out = submax(&["verify", &p, "--records"]);
    assert_eq!(out.code, EXIT_CHECK_FAILED);
    let recs = records(&out);
    let sub = recs.iter().find(|r| r["name"] == "submodularity").unwrap();
    assert_eq!(sub["pass"], false);
    assert!((sub["margin"].as_f64().unwrap() + 1.0).abs() < 1e-12);
}
