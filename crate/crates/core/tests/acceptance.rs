//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 4 and 7 fail at the prescribed parameters; the run exits
//! nonzero only if the set of failing criteria differs from that.
//! `TUGWAR_ACCEPTANCE=1,3` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use tugwar::cli::{self, decreasing_in_inverse};
use tugwar::constants::{
    chain_construct, compare_methods, holder_a, holder_bound, lemma_bound, mild_growth_params,
    HolderParams, HOLDER_GAMMA,
};
use tugwar::coupling::{
    adversary_battery, decrement_experiment, random_aligned_config, verify_alignment_inequality,
    CouplingParams, ExperimentPlan,
};
use tugwar::dpp::solve;
use tugwar::fd::{cross_validate, solve_plaplace, FdProblem};
use tugwar::game::{is_terminal, sample_noise, BoundaryData, GameConfig};
use tugwar::geometry::{random_unit, Vector};
use tugwar::planar::{
    default_rect_chain, estimate_against, estimate_loop_probability, fit_planar_constant,
    verify_chain, PlanarAdversary, PlanarPlan,
};
use tugwar::rng::RngStream;
use tugwar::stats::{Estimate, Verdict};

const EXPECTED_FAILURES: [u8; 2] = [4, 7];

type Outcome = (bool, String);

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    let hp = HolderParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let lb = lemma_bound(&hp);
    let ok_lemma = lb == 64.0;
    notes.push(format!("lemma_bound(1,1,1,1) = {lb}"));

    let mg = mild_growth_params(2.0, 4).unwrap();
    let ok_mild = mg == (16.0, 2.0);
    notes.push(format!("mild_growth_params(2,4) = {mg:?}"));

    let mut ok_holder = HOLDER_GAMMA == 0.2 && holder_a(2.0, 1) == 1e4;
    let mut rng = RngStream::new(1, 0);
    for _ in 0..100 {
        let delta = rng.uniform().max(1e-300);
        let p = 1.0 + 5.0 * rng.uniform() + 1e-3;
        let d = 2 + rng.below(20);
        let want = 1e4 * d as f64 / (p - 1.0) * delta.powf(0.2);
        let got = holder_bound(delta, p, d).unwrap();
        ok_holder &= (got - want).abs() <= 1e-12 * want;
    }
    let h = holder_bound(1e-5, 2.0, 2).unwrap();
    ok_holder &= (h - 2000.0).abs() < 1e-9;
    notes.push(format!("holder_bound(1e-5,2,2) = {h}"));

    let mut ok_chain = true;
    let mut worst_gap = f64::INFINITY;
    for i in 0..10 {
        let r = 1.01 * (100.0f64 / 1.01).powf(i as f64 / 9.0);
        for j in 0..10 {
            let rho = 0.99 * j as f64 / 9.0;
            let x0 = Vector::from([rho * 0.6, rho * 0.8]);
            let n = chain_construct(&x0, r).unwrap().len() - 1;
            let cap = 5.0 * (r / (r - 1.0)).ln();
            worst_gap = worst_gap.min(cap - n as f64);
            ok_chain &= n as f64 <= cap;
        }
    }
    notes.push(format!(
        "min over grid of 5 ln(R/(R-1)) - N = {worst_gap:.3}"
    ));
    (
        ok_lemma && ok_mild && ok_holder && ok_chain,
        notes.join("; "),
    )
}

fn criterion_2() -> Outcome {
    let n = 100_000;
    let eps = 0.1;
    let p = 3.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for d in [2usize, 3, 5, 10] {
        let cfg = GameConfig::new(p, d, eps, BoundaryData::constant(0.0), 0).unwrap();
        let r_eps = cfg.noise_scale();
        let mut rng = RngStream::new(2, d as u64);
        let mut worst_exact = 0.0f64;
        // exact law on random move directions
        for _ in 0..1000 {
            let v = random_unit(d, &mut rng).scale(eps * (0.1 + 0.9 * rng.uniform()));
            let w = sample_noise(&v, &cfg, &mut rng).unwrap();
            worst_exact = worst_exact
                .max(w.dot(&v).abs())
                .max((w.norm() - r_eps).abs());
        }
        // coordinate variances in the complement of v = ε e_1
        let v = Vector::basis(d, 0).scale(eps);
        let mut sq = vec![Vec::with_capacity(n); d];
        for _ in 0..n {
            let w = sample_noise(&v, &cfg, &mut rng).unwrap();
            for k in 0..d {
                sq[k].push(w.coords()[k] * w.coords()[k]);
            }
        }
        let target = r_eps * r_eps / (d as f64 - 1.0);
        let mut worst_z = 0.0f64;
        let mut ok_var = sq[0].iter().all(|&x| x <= 1e-18 * target);
        for s in &sq[1..] {
            let e = Estimate::from_samples(s);
            let dev = (e.mean - target).abs();
            ok_var &= dev <= 3.0 * e.se + 1e-12 * target;
            // in d = 2 the squared coordinate is deterministic and se is rounding noise
            if e.se > 1e-12 * target {
                worst_z = worst_z.max(dev / e.se);
            }
        }
        ok &= worst_exact <= 1e-9 && ok_var;
        notes.push(format!(
            "d={d}: exact err {worst_exact:.1e}, max |z| {worst_z:.2}"
        ));
    }
    (ok, notes.join("; "))
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let c = GameConfig::new(2.0, 2, 0.1, BoundaryData::constant(7.0), 0).unwrap();
    let f = solve(&c, 0.05, 1e-12, 1).unwrap();
    let ok_const = f.meta.iterations == 1 && f.values.iter().all(|&v| v == 7.0);
    notes.push(format!("constant exact after {} sweep", f.meta.iterations));

    let a = [0.6, -0.8];
    let mut ok_aff = true;
    for p in [1.5, 3.0] {
        let c = GameConfig::new(p, 2, 0.05, BoundaryData::affine(a.to_vec(), 0.3), 0).unwrap();
        let f = solve(&c, 0.025, 1e-7, 200_000).unwrap();
        let bound = 2.0 * (c.noise_radius + 1.0) * 0.05;
        let mut worst = 0.0f64;
        for i in 0..f.len() {
            let x = f.coords(i);
            if !is_terminal(&x, &c) {
                worst = worst.max((f.values[i] - (a[0] * x[0] + a[1] * x[1] + 0.3)).abs());
            }
        }
        ok_aff &= f.meta.converged && worst <= bound;
        notes.push(format!("affine p={p}: {worst:.2e} <= {bound:.3}"));
    }

    let c = GameConfig::new(2.0, 2, 0.02, BoundaryData::cosine(), 0).unwrap();
    let dpp = solve(&c, 0.005, 1e-6, 1_000_000).unwrap();
    let u0 = dpp.evaluate(&[0.0, 0.0]).unwrap();
    let prob = FdProblem::new(2.0, 0.005, 1.0, BoundaryData::cosine()).unwrap();
    let fd = solve_plaplace(&prob, 1e-8, 1_000_000).unwrap();
    let rep = cross_validate(&dpp, &fd, 0.3).unwrap();
    let ok_cos = dpp.meta.converged && u0.abs() <= 0.01 && rep.sup_diff <= 0.1;
    notes.push(format!(
        "cos: |u(0)| = {:.1e}, sup diff on |x|<=0.7 = {:.4}",
        u0.abs(),
        rep.sup_diff
    ));
    (ok_const && ok_aff && ok_cos, notes.join("; "))
}

fn criterion_4() -> Outcome {
    let eps = 0.005;
    let mut part: BTreeMap<char, bool> = ['a', 'b', 'c', 'd', 'e'].map(|k| (k, true)).into();
    let mut notes = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let cfg = GameConfig::new(p, 3, eps, BoundaryData::constant(0.0), 0).unwrap();
        let params = CouplingParams::for_game(&cfg);
        let plan = ExperimentPlan::new(100_000);
        for adv in adversary_battery(params.theta0) {
            let (stats, _) = decrement_experiment(&cfg, &params, adv.as_ref(), &plan, 4).unwrap();
            let rep = stats.report(eps);
            for (k, m) in rep.aligned_drift.iter().enumerate() {
                if (m.mean).abs() > 4.0 * m.se {
                    part.insert('a', false);
                    notes.push(format!(
                        "4a p={p} {} D[{k}] = {:.2e} ({:.1} se)",
                        adv.name(),
                        m.mean,
                        m.mean / m.se
                    ));
                }
            }
            for t in &rep.tests {
                let key = match (t.quantity.as_str(), t.stratum.as_str()) {
                    ("dz_beta", "aligned") => 'c',
                    ("dz_beta", _) => 'd',
                    _ => 'e',
                };
                if t.verdict != Verdict::Pass {
                    part.insert(key, false);
                    notes.push(format!(
                        "4{key} p={p} {} {}/{}: n={} mean {:+.2e} > {:+.2e} + {:.1e}",
                        adv.name(),
                        t.quantity,
                        t.stratum,
                        t.n,
                        t.mean,
                        t.threshold,
                        t.ci
                    ));
                }
            }
        }
        let mut rng = RngStream::new(44, (p * 10.0) as u64);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..100 {
            let (u, v, z) = random_aligned_config(3, eps, params.theta0, &mut rng);
            let rep =
                verify_alignment_inequality(&u, &v, &z, &cfg, &params, 20_000, &mut rng).unwrap();
            min_ratio = min_ratio.min(rep.ratio);
            if rep.verdict != Verdict::Pass {
                part.insert('b', false);
            }
        }
        notes.push(format!("4b p={p}: min ratio {min_ratio:.4}"));
    }
    for (k, ok) in &part {
        println!("  4{k}: {}", if *ok { "PASS" } else { "FAIL" });
    }
    for n in &notes {
        println!("    {n}");
    }
    let ok = part.values().all(|&b| b);
    let failed: Vec<String> = part
        .iter()
        .filter(|(_, &ok)| !ok)
        .map(|(k, _)| format!("4{k}"))
        .collect();
    (ok, format!("failing parts: {failed:?}"))
}

fn positive_battery() -> Vec<BoundaryData> {
    let mut out = Vec::new();
    for k in 1..=5u32 {
        for phase in [0.0, 1.0] {
            out.push(BoundaryData::planar_mode(k, phase).shifted(1.05));
        }
    }
    for j in 0..5 {
        let phi = TAU * j as f64 / 5.0;
        out.push(BoundaryData::new(format!("exp2cos({j})"), move |x| {
            (2.0 * (x[1].atan2(x[0]) - phi).cos()).exp()
        }));
    }
    for j in 0..5 {
        let phi = TAU * j as f64 / 5.0 + 0.3;
        out.push(BoundaryData::new(format!("bump({j})"), move |x| {
            let t = x[1].atan2(x[0]) - phi;
            let s = t.sin().atan2(t.cos());
            0.01 + (-s * s / 0.1).exp()
        }));
    }
    out
}

fn criterion_5() -> Outcome {
    let h = 0.05;
    let mut ok = true;
    let mut notes = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let x: f64 = 2.0 / (p - 1.0);
        let bound = 10.0 * (x * x.ln()).exp();
        let mut worst = 0.0f64;
        for f in positive_battery() {
            let prob = FdProblem::new(p, h, 5.0, f).unwrap();
            let field = solve_plaplace(&prob, 1e-6, 1_000_000).unwrap();
            let u0 = field.evaluate(&[0.0, 0.0]).unwrap();
            let sup = (0..field.len())
                .filter(|&i| {
                    let c = field.coords(i);
                    c[0].hypot(c[1]) <= 1.0
                })
                .map(|i| field.values[i])
                .fold(f64::NEG_INFINITY, f64::max);
            ok &= u0 > 0.0 && field.meta.converged;
            worst = worst.max(sup / u0);
        }
        ok &= worst <= bound;
        notes.push(format!("p={p}: max ratio {worst:.4} <= {bound:.1}"));
        if p == 2.0 {
            let classical = (1.0 + 0.2) / (1.0 - 0.2);
            ok &= worst <= 1.5 * classical;
            notes.push(format!("classical (1+r)/(1-r) = {classical}"));
        }
    }
    (ok, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let bad: Vec<usize> = (8..=200)
        .filter(|&d| !compare_methods(2.0, d).unwrap().ordered)
        .collect();
    let cross = compare_methods(2.0, 8).unwrap().crossover_d;
    (
        bad.is_empty(),
        format!("p=2 unordered d in [8,200]: {bad:?}; ordered from d = {cross:?}"),
    )
}

fn criterion_7() -> Outcome {
    let chain = default_rect_chain();
    let rep = verify_chain(&chain, 10_000, 7);
    let plan = PlanarPlan::new(10_000);
    let eps = 0.05;
    let ps = [6.0, 3.0, 2.0, 1.5];
    let exps: Vec<_> = ps
        .iter()
        .map(|&p| estimate_loop_probability(p, eps, &chain, &plan, 7).unwrap())
        .collect();
    for e in &exps {
        println!(
            "    p={:<4} worst {:<12} p_hat {:.4} [{:.4}, {:.4}] capped {:.3}",
            e.p, e.adversary, e.p_hat, e.ci_lo, e.ci_hi, e.capped_fraction
        );
    }
    let monotone = decreasing_in_inverse(&exps.iter().map(|e| (e.p, e.p_hat)).collect::<Vec<_>>());
    let fit = fit_planar_constant(&exps);
    let fit_ok = matches!(&fit, Ok(f) if f.r2 >= 0.9);
    // the same experiment against random pulls, for reference only
    let random: Vec<_> = ps
        .iter()
        .map(|&p| estimate_against(p, eps, &chain, PlanarAdversary::PullRandom, &plan, 7).unwrap())
        .collect();
    let rfit = fit_planar_constant(&random);
    println!(
        "    reference vs pull-random: p_hat {:?}, fit {:?}",
        random
            .iter()
            .map(|e| (e.p_hat * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        rfit.as_ref().map(|f| (f.c_hat, f.r2))
    );
    let ok = rep.verdict == Verdict::Pass && monotone && fit_ok;
    (
        ok,
        format!(
            "chain {} ({} curves, {} failures); monotone {monotone}; fit {}",
            rep.verdict,
            rep.fuzz_curves,
            rep.fuzz_failures,
            match &fit {
                Ok(f) => format!("C = {:.3}, R^2 = {:.3}", f.c_hat, f.r2),
                Err(e) => e.to_string(),
            }
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        out.insert(
            e.file_name().to_string_lossy().into_owned(),
            std::fs::read(e.path()).unwrap(),
        );
    }
    out
}

fn criterion_8() -> Outcome {
    let runs: [&[&str]; 6] = [
        &[
            "solve", "--p", "2", "--eps", "0.1", "--method", "both", "--fd-h", "0.05",
        ],
        &[
            "couple",
            "--steps",
            "3000",
            "--alignment-configs",
            "3",
            "--alignment-samples",
            "2000",
        ],
        &["constants"],
        &["planar", "--trials", "200", "--fuzz", "200"],
        &["compare"],
        &["chain", "--fuzz", "500"],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut files = 0;
    for args in runs {
        let mut outputs = Vec::new();
        for workers in ["1", "2", "3"] {
            let dir = tmp.path().join(format!("{}-{workers}", args[0]));
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_tugwar"))
                .args(args)
                .args(["--seed", "5", "--workers", workers, "--out"])
                .arg(&dir)
                .output()
                .expect("binary runs");
            ok &= out.status.code().is_some_and(|c| c != cli::EXIT_USAGE);
            outputs.push(read_dir_bytes(&dir));
        }
        files += outputs[0].len();
        ok &= !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
    }
    (
        ok,
        format!("{files} files identical across 1, 2 and 3 workers"),
    )
}

fn main() {
    let only: Option<Vec<u8>> = std::env::var("TUGWAR_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let all: [(u8, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = Vec::new();
    let mut ran = Vec::new();
    for (id, f) in all {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = f();
        println!(
            "criterion {id}: {} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        ran.push(id);
        if !ok {
            failed.push(id);
        }
    }
    let expected: Vec<u8> = EXPECTED_FAILURES
        .into_iter()
        .filter(|id| ran.contains(id))
        .collect();
    if failed != expected {
        eprintln!("failing criteria {failed:?}, expected {expected:?}");
        std::process::exit(1);
    }
}
