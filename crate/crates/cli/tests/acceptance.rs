//! Acceptance criteria at full scale, one pass/fail line each.
//!
//! Runs the release-grade binary on the 20 x 400 grid, so expect several
//! minutes on a single core.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use robust_agg_cli::io::KeyValues;

const BIN: &str = env!("CARGO_BIN_EXE_robust-agg");

fn run(args: &[&str], threads: usize) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

struct Solve {
    code: i32,
    cert: KeyValues,
    cert_text: String,
    aggregator: String,
    report: String,
}

impl Solve {
    fn num(&self, key: &str) -> f64 {
        self.cert
            .get(key)
            .and_then(|v| v.parse().ok())
            .unwrap_or(f64::NAN)
    }
}

fn solve(dir: &Path, extra: &[&str], threads: usize) -> Solve {
    let d = dir.to_str().unwrap();
    let mut args = vec!["solve", "--n", "20", "--m", "400", "--out-dir", d];
    args.extend_from_slice(extra);
    let out = run(&args, threads);
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap_or_default();
    let cert_text = read("certificate.txt");
    Solve {
        code: out.status.code().unwrap_or(-1),
        cert: KeyValues::parse(&cert_text),
        cert_text,
        aggregator: read("aggregator.csv"),
        report: read("report.txt"),
    }
}

/// `(round, lower, upper)` for every certificate round in a run report.
fn certified_rounds(report: &str) -> Vec<(usize, f64, f64)> {
    let Some(block) = report.split("[rounds]\n").nth(1) else {
        return Vec::new();
    };
    block
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some((
                f.first()?.parse().ok()?,
                f.get(3)?.parse().ok()?,
                f.get(4)?.parse().ok()?,
            ))
        })
        .collect()
}

struct Outcome {
    results: Vec<bool>,
}

impl Outcome {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String, started: Instant) {
        println!(
            "criterion {id} {name}: {} ({detail}; {:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        self.results.push(pass);
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let p = tmp.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let mut outcome = Outcome {
        results: Vec::new(),
    };
    let headline = [
        "--lipschitz",
        "inf",
        "--paradigm",
        "additive",
        "--rounds",
        "2000",
        "--symmetry",
        "on",
        "--rate",
        "experiment",
        "--seed",
        "0",
    ];

    // 1. Headline regret.
    let t = Instant::now();
    let c1_dir = sub("c1");
    let c1 = solve(&c1_dir, &headline, 1);
    let (lo, hi) = (c1.num("lower_bound"), c1.num("upper_bound"));
    outcome.record(
        1,
        "headline regret",
        c1.code == 0 && hi <= 0.024 && lo >= 0.021 && lo <= hi,
        format!(
            "lower={lo:.5} upper={hi:.5} rounds={} exit={}",
            c1.num("rounds"),
            c1.code
        ),
        t,
    );

    // 2. Baseline table.
    let t = Instant::now();
    let out = run(&["compare", "--n", "20", "--m", "400"], 1);
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    let value = |name: &str| {
        table
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{name},")))
            .and_then(|r| r.split(',').next()?.parse::<f64>().ok())
            .unwrap_or(f64::NAN)
    };
    let (sa, ap, sota) = (
        value("simple-average"),
        value("average-prior"),
        value("state-of-the-art"),
    );
    outcome.record(
        2,
        "baseline table",
        out.status.success()
            && (0.058..=0.0625).contains(&sa)
            && (0.022..=0.0261).contains(&ap)
            && (0.021..=0.0251).contains(&sota),
        format!("simple-average={sa:.5} average-prior={ap:.5} state-of-the-art={sota:.5}"),
        t,
    );

    // 3. Absolute paradigm.
    let t = Instant::now();
    let c3 = solve(
        &sub("c3"),
        &["--paradigm", "absolute", "--rounds", "2000"],
        1,
    );
    let (lo, hi, center) = (
        c3.num("lower_bound"),
        c3.num("upper_bound"),
        c3.num("aggregator_center"),
    );
    outcome.record(
        3,
        "absolute paradigm",
        c3.code == 0
            && (lo - 0.25).abs() <= 0.005
            && (hi - 0.25).abs() <= 0.005
            && (center - 0.5).abs() <= 0.02,
        format!("lower={lo:.5} upper={hi:.5} f(0.5,0.5)={center:.4}"),
        t,
    );

    // 4. Convergence profile, read from the headline run.
    let t = Instant::now();
    let first = certified_rounds(&c1.report)
        .into_iter()
        .find(|(_, l, u)| u - l <= 0.005);
    outcome.record(
        4,
        "convergence profile",
        matches!(first, Some((r, _, _)) if r <= 1000),
        match first {
            Some((r, l, u)) => format!("gap {:.2e} at round {r}", u - l),
            None => "gap never reached 0.005".into(),
        },
        t,
    );

    // 5. Lipschitz sweep.
    let t = Instant::now();
    let mut uppers = Vec::new();
    let mut ok = true;
    let mut detail = Vec::new();
    for l in [1.0f64, 2.0, 4.0] {
        let ls = l.to_string();
        let s = solve(&sub(&format!("c5_{ls}")), &["--lipschitz", &ls], 1);
        let (upper, lip) = (s.num("upper_bound"), s.num("aggregator_lipschitz"));
        ok &= s.code == 0 && lip <= l + 1e-6 && upper >= 0.023 - 0.002;
        if let Some(prev) = uppers.last() {
            ok &= upper <= prev + 0.002;
        }
        uppers.push(upper);
        detail.push(format!("L={ls}: upper={upper:.5} lip={lip:.4}"));
    }
    outcome.record(5, "lipschitz sweep", ok, detail.join(" "), t);

    // 6. Property suites.
    let t = Instant::now();
    let out = run(
        &[
            "verify",
            "--samples",
            "10000",
            "--qp-samples",
            "10000",
            "--seed",
            "0",
        ],
        1,
    );
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("property="))
        .collect();
    let failed: Vec<&str> = lines
        .iter()
        .copied()
        .filter(|l| !l.contains("status=pass"))
        .collect();
    outcome.record(
        6,
        "property suites",
        out.status.success()
            && lines.len() == robust_agg::verify::PROPERTIES.len()
            && failed.is_empty(),
        if failed.is_empty() {
            format!("{} properties x 10000 samples", lines.len())
        } else {
            failed.join(" | ")
        },
        t,
    );

    // 7. Determinism across thread counts, against the headline run.
    let t = Instant::now();
    let c7 = solve(&sub("c7"), &headline, 4);
    let same = c7.code == c1.code
        && !c7.aggregator.is_empty()
        && c7.aggregator == c1.aggregator
        && c7.cert_text == c1.cert_text;
    outcome.record(
        7,
        "determinism",
        same,
        format!("1 vs 4 threads: aggregator.csv and certificate.txt identical={same}"),
        t,
    );

    let passed = outcome.results.iter().filter(|p| **p).count();
    println!(
        "acceptance: {passed}/{} criteria passed",
        outcome.results.len()
    );
    if passed != outcome.results.len() {
        std::process::exit(1);
    }
}
