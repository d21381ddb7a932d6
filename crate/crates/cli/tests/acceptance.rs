//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use datapricer::{run_experiment, ExperimentConfig, RunRecord};
use datapricer_core::bayes::{Dataset, NoiseModel};
use datapricer_core::mechanisms::{condition_number, first_best, MabMechanism, Mechanism, PerfectMechanism, SvdMechanism};
use datapricer_core::valuation::{coupling_check, ValuationQuery};
use datapricer_core::verification::{
    buyer_surplus, check_ic, envelope_gradient_check, impossibility_demo, regret_audit, EnvelopeOptions,
    ImpossibilityOutcome, TypeGrid, Witness,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_config(name: &str) -> RunRecord {
    let cfg = ExperimentConfig::load(&configs_dir().join(name)).expect("golden config loads");
    run_experiment(&cfg).expect("golden config runs")
}

fn output<'a>(rec: &'a RunRecord, step: &str) -> &'a Value {
    &rec.step(step).unwrap_or_else(|| panic!("step {step} missing")).output
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn basis(d: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[j] = 1.0;
    e
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian rows with per-row noise in [0.2, 3); resampled until full rank.
fn random_designs(count: usize, seed: u64) -> Vec<Dataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d = rng.random_range(2..=4usize);
        let n = rng.random_range(d..=4 * d);
        let x = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
        let s = DVector::from_fn(n, |_, _| rng.random_range(0.2..3.0));
        let ds = Dataset::design(x, s).unwrap();
        if !condition_number(&ds).rank_deficient {
            out.push(ds);
        }
    }
    out
}

fn grid_for(d: usize, seed: u64) -> TypeGrid {
    TypeGrid::default_for(d, seed).unwrap()
}

fn criterion_1() -> Outcome {
    let rec = run_config("ex_process_data_value.toml");
    let v = output(&rec, "value");
    let stat = |name: &str| {
        v["statistics"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["name"] == name)
            .map(|s| num(&s["posterior_variance"]))
            .unwrap_or(f64::NAN)
    };
    let tol = 1e-12;
    let prior = num(&v["prior_variance"]);
    let post = num(&v["posterior_variance"]);
    let avg = stat("average");
    let diff = stat("difference");
    let value = num(&v["value_nats"]);
    let ok = close(prior, 2.0, tol)
        && close(post, 2.0 / 17.0, tol)
        && close(avg, 2.0 / 17.0, tol)
        && close(diff, 2.0, tol)
        && close(value, 0.5 * 17f64.ln(), tol);
    Outcome::new(
        ok,
        format!("prior {prior:.17}, records {post:.17}, average {avg:.17}, difference {diff:.17}, value {value:.17}"),
    )
}

fn criterion_2() -> Outcome {
    let rec = run_config("ex_shapley.toml");
    let s = output(&rec, "shapley");
    let phi2 = num(&s["shapley"][1]);
    let marginal = num(&s["marginal_value"][1]);
    let ok = close(marginal, 0.5 * 1.5f64.ln(), 1e-12) && close(phi2, 3f64.ln() / 4.0, 1e-12) && phi2 > marginal;
    Outcome::new(ok, format!("marginal {marginal:.17}, shapley {phi2:.17}"))
}

fn criterion_3() -> Outcome {
    let grid = TypeGrid::angular_mesh(720).unwrap();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    for n in [1, 5, 20] {
        let m = PerfectMechanism::new(2, n, NoiseModel::constant(1.0)).unwrap();
        let ic = check_ic(&m, &grid, 1e-9).unwrap();
        let surplus = buyer_surplus(&m, &grid).unwrap();
        let ir_gap = surplus.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        let max_surplus = surplus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want = 0.5 * (1.0 + n as f64).ln();
        let pay_gap = grid
            .points()
            .iter()
            .map(|x| (m.quote(x).unwrap().payment_nats - want).abs())
            .fold(0.0f64, f64::max);
        ok &= ic.worst_violation <= 1e-9 && ir_gap <= 1e-10 && max_surplus <= 1e-10 && pay_gap <= 1e-12;
        worst = (
            worst.0.max(ic.worst_violation),
            worst.1.max(ir_gap),
            worst.2.max(max_surplus),
            worst.3.max(pay_gap),
        );
    }
    Outcome::new(
        ok,
        format!(
            "IC {:.3e}, IR slack {:.3e}, surplus {:.3e}, payment error {:.3e}",
            worst.0, worst.1, worst.2, worst.3
        ),
    )
}

fn criterion_4() -> Outcome {
    let cases = [
        (NoiseModel::affine(1.2, vec![0.4, -0.3]), 2usize),
        (NoiseModel::affine(1.0, vec![0.3, 0.2, -0.4]), 3),
    ];
    let (mut g, mut p, mut ok) = (0.0f64, 0.0f64, true);
    for (i, (sigma, d)) in cases.iter().enumerate() {
        let grid = TypeGrid::uniform_random(*d, 100, 400 + i as u64).unwrap();
        let opts = EnvelopeOptions { seed: 77 + i as u64, ..EnvelopeOptions::default() };
        let r = envelope_gradient_check(sigma, 5, &grid, &opts).unwrap();
        ok &= r.passed;
        g = g.max(r.gradient.worst_violation);
        p = p.max(r.path_independence.worst_violation);
    }
    Outcome::new(ok, format!("gradient gap {g:.3e} (tol 1e-4), path gap {p:.3e} (tol 1e-6)"))
}

fn golden_design() -> Dataset {
    Dataset::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], None, vec![1.0; 4]).unwrap()
}

fn criterion_5() -> Outcome {
    let ds = golden_design();
    let m = SvdMechanism::new(&ds).unwrap();
    let e1 = basis(2, 0);
    let diag = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
    let p1 = m.payment(&e1).unwrap();
    let pd = m.payment(&diag).unwrap();
    let regret = first_best(&diag, &ds).unwrap() - pd;
    let regret_e1 = first_best(&e1, &ds).unwrap() - p1;
    let kappa = condition_number(&ds).kappa;
    let audit = regret_audit(&ds, &TypeGrid::angular_mesh(720).unwrap()).unwrap();
    let ok = close(p1, 0.5 * 4f64.ln(), 1e-10)
        && close(regret_e1, 0.0, 1e-10)
        && close(pd, 0.5 * 2.5f64.ln(), 1e-10)
        && close(regret, 0.5 * (16.0f64 / 15.0).ln(), 1e-9)
        && close(kappa, 3f64.sqrt(), 1e-12)
        && audit.max_regret <= 3f64.sqrt().ln();
    Outcome::new(
        ok,
        format!(
            "t(e1) {p1:.17}, t(diag) {pd:.17}, regret {regret:.17}, kappa {kappa:.17}, max regret {:.6}",
            audit.max_regret
        ),
    )
}

fn criterion_6(designs: &[Dataset]) -> Outcome {
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    let mut sharp_excess = f64::NEG_INFINITY;
    for (i, ds) in designs.iter().enumerate() {
        let a = regret_audit(ds, &grid_for(ds.dim(), 1000 + i as u64)).unwrap();
        let excess = a
            .per_point_regret
            .iter()
            .zip(&a.sharp_bound)
            .map(|(r, s)| r - s)
            .fold(f64::NEG_INFINITY, f64::max);
        sharp_excess = sharp_excess.max(excess);
        min_slack = min_slack.min(a.bound_ln_kappa - a.max_regret);
        if !(a.max_regret <= a.bound_ln_kappa + 1e-9 && excess <= 1e-9) {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!(
            "{} designs, {failures} failures, min (ln kappa - max regret) {min_slack:.3e}, max (regret - sharp) {sharp_excess:.3e}",
            designs.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let d = rng.random_range(2..=4usize);
        let n = rng.random_range(d..=4 * d);
        let g = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
        let q = g.qr().q();
        let c: f64 = rng.random_range(0.5..5.0);
        let sigma = DVector::from_fn(n, |_, _| rng.random_range(0.2..3.0));
        let z = q * c.sqrt();
        let x = DMatrix::from_fn(n, d, |r, k| sigma[r] * z[(r, k)]);
        let ds = Dataset::design(x, sigma).unwrap();
        let a = regret_audit(&ds, &grid_for(d, 2000 + i)).unwrap();
        worst = worst.max(a.max_regret);
    }
    Outcome::new(worst <= 1e-9, format!("50 designs, max regret {worst:.3e} (tol 1e-9)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (mut pay_gap, mut regret) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = rng.random_range(1..=6usize);
        let mut rows = Vec::new();
        let mut noise = Vec::new();
        for j in 0..d {
            for _ in 0..rng.random_range(1..=10usize) {
                rows.push(basis(d, j).as_slice().to_vec());
                noise.push(rng.random_range(0.2..3.0));
            }
        }
        let ds = Dataset::from_rows_with_dim(d, &rows, None, noise).unwrap();
        let mab = MabMechanism::new(&ds).unwrap();
        let svd = SvdMechanism::new(&ds).unwrap();
        let grid = TypeGrid::basis(d).unwrap();
        for e in grid.points() {
            let a = mab.quote(e).unwrap().payment_nats;
            let b = svd.quote(e).unwrap().payment_nats;
            pay_gap = pay_gap.max((a - b).abs());
        }
        regret = regret.max(regret_audit(&ds, &grid).unwrap().max_regret);
    }
    Outcome::new(
        pay_gap <= 1e-10 && regret <= 1e-9,
        format!("50 designs, max |mab - svd| {pay_gap:.3e}, max regret {regret:.3e}"),
    )
}

fn criterion_9() -> Outcome {
    let rec = run_config("anisotropic_regret.toml");
    let r = output(&rec, "impossibility");
    let gain = num(&r["deviation_gain"]);
    let w = &r["deviation_witness"];
    let x: Vec<f64> = w["x"].as_array().map(|a| a.iter().map(num).collect()).unwrap_or_default();
    let xh: Vec<f64> = w["x_hat"].as_array().map(|a| a.iter().map(num).collect()).unwrap_or_default();
    let witness_ok = x == [1.0, 0.0] && xh == [0.0, 1.0];
    let iso_rec = run_config("isotropic.toml");
    let iso = output(&iso_rec, "impossibility");

    let iso_ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]], None, vec![1.0, 1.0]).unwrap();
    let iso_direct = impossibility_demo(&iso_ds, &TypeGrid::angular_mesh(720).unwrap()).unwrap();
    let ok = r["outcome"] == "witness"
        && witness_ok
        && close(gain, 0.5 * 2f64.ln(), 1e-9)
        && iso["is_isotropic"] == true
        && iso_direct.is_isotropic
        && iso_direct.outcome == ImpossibilityOutcome::Isotropic
        && iso_direct.deviation_witness == Witness::None;
    Outcome::new(ok, format!("witness {x:?} -> {xh:?}, gain {gain:.17}; isotropic designs flagged"))
}

fn criterion_10(designs: &[Dataset]) -> Outcome {
    let mut worst = 0.0f64;
    for (i, ds) in designs.iter().enumerate() {
        let m = SvdMechanism::new(ds).unwrap();
        let r = check_ic(&m, &grid_for(ds.dim(), 1000 + i as u64), 1e-9).unwrap();
        worst = worst.max(r.worst_violation);
    }
    Outcome::new(worst <= 1e-9, format!("{} designs, worst IC violation {worst:.3e}", designs.len()))
}

fn criterion_11() -> Outcome {
    let cases = [
        (DVector::from_vec(vec![1.0, 1.0]), Dataset::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]], None, vec![1.0, 1.0])),
        (DVector::from_vec(vec![1.0]), Dataset::from_rows(&[vec![1.0], vec![1.0]], None, vec![1.0, 1.0])),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (x, ds)) in cases.into_iter().enumerate() {
        let q = ValuationQuery::standard(x).unwrap();
        let t = Instant::now();
        let r = coupling_check(&q, &ds.unwrap(), 100_000, 11 + i as u64).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let z = (r.empirical_mean - r.deterministic_value) / r.stderr;
        ok &= r.pass && secs <= 5.0;
        parts.push(format!("z = {z:+.2} in {secs:.2}s"));
    }
    Outcome::new(ok, parts.join("; "))
}

fn payload_without_timings(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).expect("run record json");
    v.as_object_mut().unwrap().remove("timings_ms");
    v
}

fn criterion_12() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_datapricer");
    let tmp = std::env::temp_dir().join(format!("datapricer-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    let mut mismatched = Vec::new();
    for name in &names {
        let mut payloads = Vec::new();
        for (k, threads) in ["1", "4"].iter().enumerate() {
            let out = tmp.join(format!("{name}.{k}.json"));
            let status = Command::new(bin)
                .env("DATAPRICER_THREADS", threads)
                .args(["--config", configs_dir().join(name).to_str().unwrap(), "--out", out.to_str().unwrap(), "run"])
                .status()
                .expect("binary runs");
            if !status.success() {
                mismatched.push(format!("{name} exited {status}"));
            }
            payloads.push(payload_without_timings(&std::fs::read_to_string(&out).unwrap_or_default()));
        }
        let in_process = [run_config(name).numeric_payload(), run_config(name).numeric_payload()];
        if payloads[0] != payloads[1] || in_process[0] != in_process[1] {
            mismatched.push(name.clone());
        }
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Outcome::new(
        mismatched.is_empty(),
        format!("{} configs, repeated runs (1 and 4 threads) differing: {mismatched:?}", names.len()),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let designs = random_designs(200, 6);
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("golden process-data value", Box::new(criterion_1)),
        ("golden Shapley comparison", Box::new(criterion_2)),
        ("perfect mechanism extracts full surplus", Box::new(criterion_3)),
        ("envelope gradient and path independence", Box::new(criterion_4)),
        ("SVD mechanism on the anisotropic design", Box::new(criterion_5)),
        ("regret within ln kappa and the sharp bound", Box::new(|| criterion_6(&designs))),
        ("isotropic designs have zero regret", Box::new(criterion_7)),
        ("MAB mechanism equals SVD mechanism", Box::new(criterion_8)),
        ("impossibility witness", Box::new(criterion_9)),
        ("SVD mechanism IC on random designs", Box::new(|| criterion_10(&designs))),
        ("Monte-Carlo coupling check", Box::new(criterion_11)),
        ("run determinism", Box::new(criterion_12)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let status = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!("criterion {:>2} {status} {name} [{:.2}s]: {}", i + 1, t.elapsed().as_secs_f64(), o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
