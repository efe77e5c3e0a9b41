//! Acceptance criteria 1–14. Runs as a plain binary so that every criterion
//! prints exactly one PASS/FAIL line whatever the outcome.

use std::collections::HashSet;
use std::f64::consts::LN_10;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optdesign::design::SensitivityOracle;
use optdesign::generators::{grid, latin_hypercube, sobol, DomainBox, SobolSequence};
use optdesign::models::chebyshev::cheb_block;
use optdesign::models::exponential::ExpOracle;
use optdesign::refine::{criterion_gradient, refine, RefineOptions};
use optdesign::solvers::{maxvol, rect_maxvol, wda, wmaxvol, WdaOptions, WmaxvolOptions, WmaxvolState};
use optdesign::workflow::{run_pipeline_in, run_validation_loop_in, RunConfig};
use optdesign::{
    assemble_information, atom, kw_certificate, AssemblyOptions, CandidateSet, Design, DesignPoint, ModelSpec,
    NoisePrecision,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exp_model() -> ModelSpec {
    ModelSpec::exponential(&[1.0, 3.0]).unwrap()
}

fn exp_pool(extra: Option<f64>) -> CandidateSet {
    let mut set = grid(&DomainBox::symmetric(1), &[11]).unwrap();
    if let Some(x) = extra {
        set = set.with_extra_points(vec![x.into()]).unwrap();
    }
    exp_model().attach(set).unwrap()
}

fn xs(design: &Design) -> Vec<f64> {
    design.points().iter().map(|p| p.coords()[0]).collect()
}

fn det_unscaled(design: &Design) -> f64 {
    let model = exp_model();
    let blocks = model.blocks_for(design.points()).unwrap();
    let info = assemble_information(design, &blocks, &NoisePrecision::identity(1), &AssemblyOptions::unscaled()).unwrap();
    info.matrix().determinant()
}

fn weight_of(design: &Design, x: f64) -> f64 {
    design
        .points()
        .iter()
        .zip(design.weights())
        .filter(|(p, _)| (p.coords()[0] - x).abs() < 1e-9)
        .map(|(_, w)| *w)
        .sum()
}

/// Support `{2/3, 1}`, weights `1/2` within 1e-4, `det I = e¹⁰/36` within 1e-6.
fn optimum_check(design: &Design) -> (bool, String) {
    let x = xs(design);
    let target = -ExpOracle.neg_det();
    let det_err = (det_unscaled(design) - target).abs() / target;
    let ok = x.len() == 2
        && (x[0] - 2.0 / 3.0).abs() < 1e-4
        && (x[1] - 1.0).abs() < 1e-4
        && design.weights().iter().all(|w| (w - 0.5).abs() <= 1e-4)
        && det_err <= 1e-6;
    (ok, format!("support {x:?}, weights {:?}, det rel err {det_err:.2e}", design.weights()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let model = exp_model();
    let noise = NoisePrecision::identity(1);
    let p1 = wda(&exp_pool(None), &noise, &WdaOptions::default()).map_err(|e| e.to_string())?;
    let p2 = refine(&model, &p1.design, &noise, &RefineOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (ok, detail) = optimum_check(&p2.design);
    check(ok && elapsed < Duration::from_secs(1), format!("{detail}, {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let noise = NoisePrecision::identity(1);
    let pool = exp_pool(None);
    let r = wda(&pool, &noise, &WdaOptions::default()).map_err(|e| e.to_string())?;
    let x = xs(&r.design);
    let w = r.design.weights();
    let design_ok = x.len() == 2
        && (x[0] - 0.6).abs() < 1e-12
        && (x[1] - 1.0).abs() < 1e-12
        && w.iter().all(|v| (v - 0.5).abs() <= 1e-3);
    let blocks = exp_model().blocks_for(r.design.points()).unwrap();
    let cert = kw_certificate(&r.design, &blocks, &pool, &noise, &AssemblyOptions::unscaled(), 1e-3)
        .map_err(|e| e.to_string())?;
    check(
        design_ok && cert.is_optimal,
        format!("support {x:?}, weights {w:?}, max d {:.6}, optimal {}", cert.max_d, cert.is_optimal),
    )
}

fn criterion_3() -> Outcome {
    let model = exp_model();
    let noise = NoisePrecision::identity(1);
    let p1 = wda(&exp_pool(Some(0.7333)), &noise, &WdaOptions::default()).map_err(|e| e.to_string())?;
    let w = [weight_of(&p1.design, 0.6), weight_of(&p1.design, 0.7333), weight_of(&p1.design, 1.0)];
    let expected = [0.37, 0.13, 0.5];
    let phase1_ok = w.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 0.02);
    let p2 = refine(&model, &p1.design, &noise, &RefineOptions::default()).map_err(|e| e.to_string())?;
    let dropped = p2.dropped_points.iter().any(|p| (p.coords()[0] - 0.7333).abs() < 1e-12)
        && p2.design.points().iter().all(|p| (p.coords()[0] - 0.7333).abs() > 1e-3);
    let (opt_ok, detail) = optimum_check(&p2.design);
    check(
        phase1_ok && dropped && opt_ok,
        format!("phase-1 weights at 0.6/0.7333/1.0 = {w:.4?}, 0.7333 dropped {dropped}; {detail}"),
    )
}

fn criterion_4() -> Outcome {
    let model = exp_model();
    let noise = NoisePrecision::identity(1);
    let star = ExpOracle.design();
    let blocks = model.blocks_for(star.points()).unwrap();
    let opts = AssemblyOptions::unscaled();
    let info = assemble_information(&star, &blocks, &noise, &opts).unwrap();
    let oracle = SensitivityOracle::new(&info, &noise, &opts).unwrap();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let x = -1.0 + 2.0 * i as f64 / 999.0;
        let d = oracle.at(&model.jacobian_at(&[x]).unwrap()).unwrap();
        worst = worst.max((d - ExpOracle.sensitivity(x)).abs());
    }
    let d23 = oracle.at(&model.jacobian_at(&[2.0 / 3.0]).unwrap()).unwrap();
    let d1 = oracle.at(&model.jacobian_at(&[1.0]).unwrap()).unwrap();
    check(
        worst <= 1e-8 && (d23 - 2.0).abs() <= 1e-8 && (d1 - 2.0).abs() <= 1e-8,
        format!("max |d − closed form| {worst:.2e}, d(2/3) − 2 = {:.2e}, d(1) − 2 = {:.2e}", d23 - 2.0, d1 - 2.0),
    )
}

fn criterion_5() -> Outcome {
    let model = exp_model();
    let noise = NoisePrecision::identity(1);
    let pool = model.attach(grid(model.domain(), &[90]).unwrap()).unwrap();
    let tight = WdaOptions {
        tol: 1e-8,
        max_iter: 1_000_000,
        prune_threshold: 0.0,
        ..WdaOptions::default()
    };
    let uniform = wda(&pool, &noise, &tight).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw: Vec<f64> = (0..pool.len()).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let random = wda(
        &pool,
        &noise,
        &WdaOptions {
            init_weights: Some(raw.iter().map(|v| v / total).collect()),
            ..tight.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let diff = (uniform.phi - random.phi).abs();
    check(
        diff <= 1e-5,
        format!(
            "K={}, Φ uniform {:.10}, Φ random {:.10}, |ΔΦ| {diff:.2e}, iterations {}/{}",
            pool.len(),
            uniform.phi,
            random.phi,
            uniform.iterations,
            random.iterations
        ),
    )
}

fn criterion_6() -> Outcome {
    let pool = exp_pool(None);
    let noise = NoisePrecision::identity(1);
    let n_iter = 1000;
    let opts = WmaxvolOptions { n_iter, ..WmaxvolOptions::default() };
    let wm = wmaxvol(&pool, &noise, &opts).map_err(|e| e.to_string())?;
    let wd = wda(&pool, &noise, &WdaOptions::default()).map_err(|e| e.to_string())?;
    let same_support = xs(&wm.design) == xs(&wd.design);
    let max_w = wm
        .design
        .weights()
        .iter()
        .zip(wd.design.weights())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut state = WmaxvolState::new(&pool, &noise, &opts).map_err(|e| e.to_string())?;
    let mut rule_ok = true;
    for _ in 0..=n_iter {
        let d = state.sensitivities();
        let arg = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
        rule_ok &= state.step().map_err(|e| e.to_string())? == arg;
    }
    check(
        same_support && max_w <= 2.0 / n_iter as f64 && rule_ok,
        format!(
            "support {:?} vs {:?}, max |Δw| {max_w:.2e}, pick = argmax d at every step: {rule_ok}",
            xs(&wm.design),
            xs(&wd.design)
        ),
    )
}

fn criterion_7() -> Outcome {
    let model = ModelSpec::chebyshev(2, 2).unwrap();
    let pts = latin_hypercube(2, 50, 7, &DomainBox::symmetric(2)).unwrap();
    let pool = model.attach(CandidateSet::new(pts, "LHS(50)").unwrap()).unwrap();
    let mut state =
        WmaxvolState::new(&pool, &NoisePrecision::identity(3), &WmaxvolOptions::default()).map_err(|e| e.to_string())?;
    let s0 = state.total_selected();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let before = state.information();
        let j = state.step().map_err(|e| e.to_string())?;
        let after = state.information();
        let dir = state.atom(j) - &before;
        let alpha = (&after - &before).dot(&dir) / dir.norm_squared();
        let law = 1.0 / (s0 + k + 1) as f64;
        worst = worst.max((alpha - law).abs() / law);
    }
    check(worst <= 1e-10, format!("s0 = {s0}, max relative deviation of α from 1/(s0+k+1): {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let model = ModelSpec::chebyshev(2, 3).unwrap();
    let noise = NoisePrecision::identity(3);
    let runs = 20;
    let (mut d0, mut d1, mut q1) = (0.0, 0.0, 0.0);
    for run in 0..runs {
        let pts = latin_hypercube(2, 100, run, &DomainBox::symmetric(2)).unwrap();
        let pool = model.attach(CandidateSet::new(pts, "LHS(100)").unwrap()).unwrap();
        let opts = WmaxvolOptions {
            n_iter: 2000,
            seed: run,
            record_trace: true,
            ..WmaxvolOptions::default()
        };
        let r = wmaxvol(&pool, &noise, &opts).map_err(|e| e.to_string())?;
        let first = r.trace.first().unwrap();
        let last = r.trace.last().unwrap();
        d0 += first.delta_metric / runs as f64;
        d1 += last.delta_metric / runs as f64;
        q1 += last.q_metric / runs as f64;
    }
    let elapsed = start.elapsed();
    check(
        d1 < 0.1 * d0 && q1 <= 0.02 && elapsed < Duration::from_secs(120),
        format!("mean Δ {d0:.3} -> {d1:.4}, mean final q {q1:.4}, {elapsed:.2?}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let delta = 1e-6;
    let mut bad = 0;
    for _ in 0..200 {
        let a = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let s = maxvol(&a, delta, 1000).map_err(|e| e.to_string())?;
        for pos in 0..2 {
            for r in (0..8).filter(|r| !s.indices.contains(r)) {
                let mut alt = s.indices.clone();
                alt[pos] = r;
                let sub = DMatrix::from_fn(2, 2, |i, j| a[(alt[i], j)]);
                if sub.determinant().abs() > s.objective * (1.0 + delta) * (1.0 + 1e-12) {
                    bad += 1;
                }
            }
        }
        let rect = rect_maxvol(&a, 6, delta).map_err(|e| e.to_string())?;
        if rect.history.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{bad} improving swaps or non-monotone expansions over 200 matrices"))
}

fn key(p: &DesignPoint) -> Vec<u64> {
    p.coords().iter().map(|c| c.to_bits()).collect()
}

fn criterion_10() -> Outcome {
    let a: HashSet<_> = sobol(2, 20, 1).unwrap().iter().map(key).collect();
    let b: HashSet<_> = sobol(2, 20, 21).unwrap().iter().map(key).collect();
    let disjoint = a.is_disjoint(&b);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let count = 20;
    let mut pairs_ok = true;
    for _ in 0..10 {
        let lo: u64 = rng.random_range(0..200);
        let hi: u64 = lo + rng.random_range(1..40);
        let sa: HashSet<_> = sobol(2, count, lo).unwrap().iter().map(key).collect();
        let sb: HashSet<_> = sobol(2, count, hi).unwrap().iter().map(key).collect();
        pairs_ok &= sa.difference(&sb).count() as u64 == (hi - lo).min(count as u64);
    }

    let mut intervals_ok = true;
    for k in 0..=6u32 {
        let mut seq = SobolSequence::new(2).unwrap();
        seq.seek(0);
        let raw: Vec<Vec<u32>> = (0..1u64 << k).map(|_| seq.next_raw()).collect();
        for a_bits in 0..=k {
            let b_bits = k - a_bits;
            let mut seen = HashSet::new();
            for r in &raw {
                let bx = if a_bits == 0 { 0 } else { r[0] >> (32 - a_bits) };
                let by = if b_bits == 0 { 0 } else { r[1] >> (32 - b_bits) };
                intervals_ok &= seen.insert((bx, by));
            }
        }
    }
    check(
        disjoint && pairs_ok && intervals_ok,
        format!("skips 1/21 disjoint {disjoint}, overlap rule {pairs_ok}, elementary intervals up to 64 points {intervals_ok}"),
    )
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models = [ModelSpec::chebyshev(2, 2).unwrap(), exp_model()];
    let mut worst = 0.0f64;
    for t in 0..100 {
        let model = &models[t % 2];
        let n_points = model.n_params() + rng.random_range(0..5);
        let points: Vec<DesignPoint> = (0..n_points)
            .map(|_| DesignPoint::new((0..model.n()).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let raw: Vec<f64> = (0..n_points).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let design = Design::new(points, raw.iter().map(|v| v / total).collect()).unwrap();
        let noise = NoisePrecision::identity(model.m());
        let opts = AssemblyOptions::scaled(model.parameters());
        let blocks = model.blocks_for(design.points()).unwrap();
        let info = assemble_information(&design, &blocks, &noise, &opts).map_err(|e| e.to_string())?;
        let oracle = SensitivityOracle::new(&info, &noise, &opts).map_err(|e| e.to_string())?;
        let avg: f64 = design.weights().iter().zip(&blocks).map(|(w, b)| w * oracle.at(b).unwrap()).sum();
        worst = worst.max((avg - model.n_params() as f64).abs());
    }
    check(worst <= 1e-8, format!("max |Σ wᵢ d(xᵢ) − P| = {worst:.2e} over 100 designs"))
}

/// `Φ(w) = −log₁₀ det(Σ wᵢ μᵢ + λI)` for unnormalized weights.
fn phi_of_weights(mus: &[DMatrix<f64>], w: &[f64], lambda: f64) -> f64 {
    let p = mus[0].nrows();
    let mut info = DMatrix::<f64>::identity(p, p) * lambda;
    for (m, wi) in mus.iter().zip(w) {
        info += m * *wi;
    }
    -info.cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0 / LN_10
}

fn criterion_12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let models = [ModelSpec::chebyshev(2, 2).unwrap(), exp_model()];
    let ropts = RefineOptions::default();
    let mut worst_w = 0.0f64;
    for t in 0..50 {
        let model = &models[t % 2];
        let n_points = model.n_params() + 2;
        let points: Vec<DesignPoint> = (0..n_points)
            .map(|_| DesignPoint::new((0..model.n()).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let raw: Vec<f64> = (0..n_points).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let design = Design::new(points, w.clone()).unwrap();
        let noise = NoisePrecision::identity(model.m());
        let g = criterion_gradient(model, &design, &noise, &ropts).map_err(|e| e.to_string())?;
        let assembly = ropts.assembly(model);
        let mus: Vec<DMatrix<f64>> = model
            .blocks_for(design.points())
            .unwrap()
            .iter()
            .map(|b| atom(b, &noise, &assembly).unwrap())
            .collect();
        for i in 0..n_points {
            let h = 1e-6;
            let mut hi = w.clone();
            let mut lo = w.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (phi_of_weights(&mus, &hi, assembly.regularization) - phi_of_weights(&mus, &lo, assembly.regularization))
                / (2.0 * h);
            worst_w = worst_w.max((g.weights[i] - fd).abs() / fd.abs().max(1.0));
        }
    }

    let mut worst_c = 0.0f64;
    for (n, d) in [(1, 3), (2, 2), (3, 2)] {
        let model = ModelSpec::chebyshev(n, d).unwrap();
        let basis = match model.kind() {
            optdesign::models::ModelKind::Chebyshev { basis, .. } => basis.clone(),
            _ => unreachable!(),
        };
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.99..0.99)).collect();
            let block = cheb_block(&x, &basis);
            for j in 0..n {
                let h = 1e-6;
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[j] += h;
                lo[j] -= h;
                let bh = cheb_block(&hi, &basis);
                let bl = cheb_block(&lo, &basis);
                for c in 0..basis.len() {
                    let fd = (bh.matrix()[(0, c)] - bl.matrix()[(0, c)]) / (2.0 * h);
                    let an = block.matrix()[(j + 1, c)];
                    worst_c = worst_c.max((an - fd).abs() / fd.abs().max(1.0));
                }
            }
        }
    }
    check(
        worst_w <= 1e-6 && worst_c <= 1e-6,
        format!("weight gradient max rel err {worst_w:.2e}, Chebyshev derivative rows max rel err {worst_c:.2e}"),
    )
}

fn criterion_13() -> Outcome {
    let cfg = RunConfig::from_json(
        r#"{
            "model": {"kind": "exponential", "parameters": [1, 3]},
            "generator": {"kind": "grid", "counts": [11], "extra_points": [[0.7333]]},
            "phase1": {"solver": "wda", "record_trace": true},
            "seed": 42
        }"#,
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline_in(&cfg, Some(a.path())).map_err(|e| e.to_string())?;
    run_pipeline_in(&cfg, Some(b.path())).map_err(|e| e.to_string())?;
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "timings.json")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .collect();
    check(
        differing.is_empty() && names.len() >= 7,
        format!("{} artifacts compared, differing: {differing:?}", names.len()),
    )
}

/// Seed of the noisy trajectory, fixed before the check was written.
const LOOP_SEED: u64 = 2024;

fn criterion_14() -> Outcome {
    let noiseless = RunConfig::from_json(
        r#"{
            "model": {"kind": "exponential", "parameters": [1, 3]},
            "generator": {"kind": "grid", "counts": [11]},
            "validation": {"p0": [0.8, 2.5], "rounds": 5, "budget": 20}
        }"#,
    )
    .unwrap();
    let t = run_validation_loop_in(&noiseless, None).map_err(|e| e.to_string())?;
    let first = t.rounds.first().ok_or("no rounds")?;
    let exact = first.error <= 1e-8 && t.converged;

    let noisy = RunConfig::from_json(&format!(
        r#"{{
            "model": {{"kind": "exponential", "parameters": [1, 3], "sigma": 0.05}},
            "generator": {{"kind": "grid", "counts": [11]}},
            "validation": {{"p0": [0.8, 2.5], "rounds": 5, "budget": 20}},
            "seed": {LOOP_SEED}
        }}"#
    ))
    .unwrap();
    let t = run_validation_loop_in(&noisy, None).map_err(|e| e.to_string())?;
    let errors: Vec<f64> = t.rounds.iter().map(|r| r.error).collect();
    let monotone = t.failure.is_none() && errors.len() == 5 && errors.windows(2).all(|w| w[1] <= w[0]);
    check(
        exact && monotone,
        format!("noiseless round-1 error {:.2e}; σ=0.05 errors {errors:.4?}", first.error),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 14] = [
        (1, "exponential global optimum", criterion_1),
        (2, "Grid(11) phase-1 design and certificate", criterion_2),
        (3, "Grid(12) phase-1 weights and dropped point", criterion_3),
        (4, "closed-form sensitivity", criterion_4),
        (5, "WDA start independence", criterion_5),
        (6, "wMaxVol agrees with WDA", criterion_6),
        (7, "wMaxVol step-size law", criterion_7),
        (8, "Chebyshev statistical study", criterion_8),
        (9, "MaxVol local optimality", criterion_9),
        (10, "Sobol properties", criterion_10),
        (11, "weighted-average identity", criterion_11),
        (12, "gradient checks", criterion_12),
        (13, "pipeline determinism", criterion_13),
        (14, "validation loop", criterion_14),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 14 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
