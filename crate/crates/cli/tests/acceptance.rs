//! Acceptance criteria 1 to 11. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use vvrkhs::kernels::{block_gram, kappa_estimate};
use vvrkhs::rates::{flambda_diagnostics, sampling_deviation_diagnostics};
use vvrkhs::rkhs::{solve_on_space, verify_representer_identity};
use vvrkhs::rng::{seeded, TrialRng};
use vvrkhs::spectral::rkhs_norm_via_space;
use vvrkhs::synth::{excess_risk_check, sample_dataset, CoefficientSource};
use vvrkhs::{
    build_source_target, eigendecompose, run_rate_experiment, solve_regularization_network, CouplingMatrix, DiscreteSpace,
    MatrixKernel, NoiseSpec, RateExperimentConfig, RateReport, RhoFunction, SampleSet, ScalarKernel,
};

type Verdict = Result<String, String>;

fn gaussian(gamma: f64, b: CouplingMatrix) -> MatrixKernel {
    MatrixKernel::separable(ScalarKernel::gaussian(gamma).unwrap(), b)
}

fn grid(count: usize) -> DiscreteSpace {
    DiscreteSpace::uniform_grid(count, 0.0, 1.0).unwrap()
}

fn random_sample(rng: &mut TrialRng, space: &DiscreteSpace, n: usize, m: usize) -> SampleSet {
    let nodes = (0..n).map(|_| rng.gen_range(0..space.len())).collect();
    let ys = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    SampleSet::on_space(space, nodes, ys).unwrap()
}

fn random_function(rng: &mut TrialRng, space: &DiscreteSpace, m: usize) -> RhoFunction {
    RhoFunction::new(DVector::from_fn(space.len() * m, |_, _| rng.gen_range(-1.0..1.0)), m).unwrap()
}

fn random_space(rng: &mut TrialRng, n: usize) -> DiscreteSpace {
    let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + rng.gen_range(0.1..0.9)) / n as f64).collect();
    xs.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    DiscreteSpace::new(xs.into_iter().map(|x| vec![x]).collect(), w).unwrap()
}

fn scalar_gram(gamma: f64, xs: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
        let d = xs[i][0] - xs[j][0];
        (-gamma * d * d).exp()
    })
}

fn criterion_1() -> Verdict {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let count = rng.gen_range(2..=16);
        let space = random_space(&mut rng, count);
        let gamma = rng.gen_range(1.0..30.0);
        let k = Arc::new(gaussian(gamma, CouplingMatrix::identity(1)));
        let n = rng.gen_range(1..=64);
        let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
        let sample = random_sample(&mut rng, &space, n, 1);
        let model = solve_regularization_network(&k, &sample, lambda).unwrap();
        let sys = scalar_gram(gamma, sample.points()) / n as f64 + DMatrix::identity(n, n) * lambda;
        let c = sys.lu().solve(&(sample.outputs() / n as f64)).unwrap();
        worst = worst.max((model.coefficients() - &c).amax() / c.amax());
    }
    if worst <= 1e-10 {
        Ok(format!("max relative coefficient gap {worst:.2e}"))
    } else {
        Err(format!("relative gap {worst:.2e} > 1e-10"))
    }
}

fn criterion_2() -> Verdict {
    let space = grid(6);
    let k = Arc::new(gaussian(10.0, CouplingMatrix::equicorrelated(2, 0.4).unwrap()));
    let g = block_gram(&k, space.nodes()).unwrap();
    let (mut worst, mut lib_worst): (f64, f64) = (0.0, 0.0);
    for seed in 0..10 {
        let mut rng = seeded(200 + seed);
        let sample = random_sample(&mut rng, &space, 4, 2);
        let lambda = 0.1;
        // Operator route assembled here from the Gram columns.
        let mut op = DMatrix::<f64>::zeros(12, 12);
        let mut rhs = DVector::<f64>::zeros(12);
        for (i, &z) in sample.nodes().unwrap().iter().enumerate() {
            for a in 0..2 {
                let col = g.column(2 * z + a).into_owned();
                for r in 0..12 {
                    op[(r, 2 * z + a)] += col[r] / 4.0;
                }
                rhs += col * sample.output(i)[a] / 4.0;
            }
        }
        let operator = (op + DMatrix::identity(12, 12) * lambda).lu().solve(&rhs).unwrap();
        let coefficient = solve_regularization_network(&k, &sample, lambda).unwrap().node_values(&space).unwrap();
        worst = worst.max((coefficient.values() - operator).amax());
        lib_worst = lib_worst.max(verify_representer_identity(&k, &sample, lambda, &space).unwrap());
    }
    if worst < 1e-9 && lib_worst < 1e-9 {
        Ok(format!("max node discrepancy {worst:.2e} (library check {lib_worst:.2e})"))
    } else {
        Err(format!("discrepancy {worst:.2e} / {lib_worst:.2e} exceeds 1e-9"))
    }
}

fn criterion_3() -> Verdict {
    let mut rng = seeded(303);
    let space = random_space(&mut rng, 16);
    let sum = MatrixKernel::sum(vec![
        (ScalarKernel::gaussian(3.0).unwrap(), CouplingMatrix::equicorrelated(4, 0.3).unwrap()),
        (ScalarKernel::gaussian(30.0).unwrap(), CouplingMatrix::identity(4)),
    ])
    .unwrap();
    let kernels = [
        ("identity", MatrixKernel::identity_lookup(space.nodes().to_vec(), 3).unwrap()),
        (
            "diagonal",
            MatrixKernel::diagonal(vec![ScalarKernel::gaussian(2.0).unwrap(), ScalarKernel::gaussian(20.0).unwrap()]).unwrap(),
        ),
        ("separable", gaussian(15.0, CouplingMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap())),
        ("sum", sum),
    ];
    let mut worst: f64 = 0.0;
    for (name, k) in &kernels {
        let dec = eigendecompose(k, &space).unwrap();
        let scale = block_gram(k, space.nodes()).unwrap().amax();
        for i in 0..space.len() {
            for j in 0..space.len() {
                let gap = (dec.mercer_reconstruct(i, j).unwrap() - k.eval(space.node(i), space.node(j)).unwrap()).amax() / scale;
                if gap > 1e-9 {
                    return Err(format!("{name} kernel at ({i}, {j}): relative gap {gap:.2e}"));
                }
                worst = worst.max(gap);
            }
        }
    }
    Ok(format!("4 kernels on 16 nodes, max relative gap {worst:.2e}"))
}

fn criterion_4() -> Verdict {
    let mut rng = seeded(404);
    let space = random_space(&mut rng, 12);
    let universal = gaussian(8.0, CouplingMatrix::equicorrelated(3, 0.5).unwrap());
    let mut singular_b = DMatrix::identity(3, 3);
    singular_b[(2, 2)] = 0.0;
    let deficient = gaussian(8.0, CouplingMatrix::new(singular_b).unwrap());
    let mut report = Vec::new();
    for (name, k) in [("universal", universal), ("rank-deficient", deficient)] {
        let dec = eigendecompose(&k, &space).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let f = random_function(&mut rng, &space, 3);
            let lhs = rkhs_norm_via_space(&k, &space, &dec.apply_fractional_power(0.5, &f).unwrap()).unwrap();
            let rhs = dec.project(&f).unwrap().norm(&space).unwrap();
            worst = worst.max((lhs - rhs).abs() / rhs);
        }
        if worst > 1e-9 {
            return Err(format!("{name}: relative gap {worst:.2e}"));
        }
        report.push(format!("{name} rank {} gap {worst:.2e}", dec.rank()));
    }
    Ok(report.join(", "))
}

fn criterion_5() -> Verdict {
    let mut rng = seeded(505);
    let space = grid(12);
    let k = gaussian(20.0, CouplingMatrix::equicorrelated(2, 0.5).unwrap());
    let dec = eigendecompose(&k, &space).unwrap();
    let gw = block_gram(&k, space.nodes()).unwrap() * DMatrix::from_diagonal(&space.expanded_weights(2));
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let target = build_source_target(&dec, 1.0, &CoefficientSource::Seeded { seed: t, modes: 6 }, Some(0.8)).unwrap();
        let lambda = 10f64.powf(rng.gen_range(-4.0..0.0));
        let direct = (&gw + DMatrix::identity(24, 24) * lambda).lu().solve(&(&gw * target.f_rho().values())).unwrap();
        let spectral = dec.compute_f_lambda(target.f_rho(), lambda).unwrap();
        worst = worst.max((spectral.values() - direct).amax());
    }
    if worst <= 1e-9 {
        Ok(format!("20 pairs, max gap {worst:.2e}"))
    } else {
        Err(format!("gap {worst:.2e} > 1e-9"))
    }
}

fn criterion_6() -> Verdict {
    let space = grid(16);
    let k = gaussian(40.0, CouplingMatrix::equicorrelated(2, 0.5).unwrap());
    let dec = eigendecompose(&k, &space).unwrap();
    let lambdas: Vec<f64> = (0..13).map(|i| 10f64.powf(-4.0 + i as f64 / 3.0)).collect();
    let (mut checked, mut violations) = (0, 0);
    for r in [0.6, 0.75, 1.0] {
        for t in 0..20 {
            let target = build_source_target(&dec, r, &CoefficientSource::Seeded { seed: 600 + t, modes: 5 }, None).unwrap();
            for &lambda in &lambdas {
                let e = dec.approximation_error(target.f_rho(), lambda, r, target.source_norm()).unwrap();
                checked += 1;
                violations += usize::from(!e.holds());
            }
        }
    }
    if violations == 0 {
        Ok(format!("{checked} (r, λ, target) cases, 0 violations"))
    } else {
        Err(format!("{violations} of {checked} cases violate the bound"))
    }
}

fn criterion_7() -> Verdict {
    let mut rng = seeded(707);
    let (mut checked, mut violations) = (0, 0);
    for t in 0..50 {
        let m = rng.gen_range(1..=4);
        let space = grid(rng.gen_range(6..=16));
        let k = gaussian(rng.gen_range(5.0..40.0), CouplingMatrix::equicorrelated(m, 0.5).unwrap());
        let kappa = kappa_estimate(&k, space.nodes()).unwrap();
        let dec = eigendecompose(&k, &space).unwrap();
        let noise = NoiseSpec::new(0.1, rng.gen_range(0.5..2.0)).unwrap();
        let target = build_source_target(&dec, 1.0, &CoefficientSource::Seeded { seed: t, modes: 4 }, Some(noise.default_budget())).unwrap();
        for e in -4..=2 {
            let d = flambda_diagnostics(&dec, &target, &noise, 10f64.powi(e), kappa).unwrap();
            checked += 3;
            violations += usize::from(!d.k_norm_ok()) + usize::from(!d.risk_ok()) + usize::from(!d.sup_ok());
        }
    }
    if violations == 0 {
        Ok(format!("{checked} bound checks, 0 violations"))
    } else {
        Err(format!("{violations} of {checked} bound checks fail"))
    }
}

fn criterion_8(report: &RateReport) -> Verdict {
    let mut rng = seeded(808);
    let m = 2;
    let space = grid(16);
    let k = gaussian(40.0, CouplingMatrix::equicorrelated(m, 0.5).unwrap());
    let kappa = kappa_estimate(&k, space.nodes()).unwrap();
    let dec = eigendecompose(&k, &space).unwrap();
    let noise = NoiseSpec::new(0.1, 1.0).unwrap();
    let target = build_source_target(&dec, 1.0, &CoefficientSource::Seeded { seed: 1, modes: 4 }, Some(noise.default_budget())).unwrap();
    let mut slack: f64 = f64::INFINITY;
    for trial in 0..100 {
        let n = rng.gen_range(10..400);
        let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
        let sample = sample_dataset(&space, &target, &noise, n, 8000 + trial).unwrap();
        let f_z = solve_on_space(dec.gram(), m, sample.nodes().unwrap(), sample.outputs(), lambda).unwrap().values;
        let f_lambda = dec.compute_f_lambda(target.f_rho(), lambda).unwrap();
        let d = sampling_deviation_diagnostics(&dec, &sample, &f_z, &f_lambda, target.f_rho(), lambda, kappa, 1.0).unwrap();
        if !d.scaling_ok() {
            return Err(format!("trial {trial}: ‖f_z - f_λ‖_K = {} > α/λ = {}", d.sampling_err_k, d.alpha / lambda));
        }
        slack = slack.min(d.alpha / lambda - d.sampling_err_k);
    }
    let worst = report.summaries.iter().map(|s| s.violation_fraction_sampling).fold(0.0, f64::max);
    if worst > 0.05 {
        return Err(format!("sampling bound violated in {:.1}% of trials at some grid point", 100.0 * worst));
    }
    Ok(format!(
        "100 trials, min slack {slack:.2e}; worst sampling-bound violation fraction {worst:.3} over {} grid points",
        report.summaries.len()
    ))
}

fn criterion_9(cfg: &RateExperimentConfig, report: &RateReport) -> Verdict {
    for s in &report.summaries {
        if s.violation_fraction_rho > cfg.delta {
            return Err(format!("(n={}, m={}): err_ρ above bound in {:.1}% of trials", s.n, s.m, 100.0 * s.violation_fraction_rho));
        }
    }
    let threshold = -1.0 / 6.0 + 0.05;
    let mut slopes = Vec::new();
    for f in &report.slopes {
        if f.quantile_slope > threshold {
            return Err(format!("m={}: quantile slope {:.4} > {threshold:.4}", f.m, f.quantile_slope));
        }
        slopes.push(format!("{:.3}", f.quantile_slope));
    }
    if report.slopes.len() != cfg.m_grid.len() {
        return Err("missing slope fits".into());
    }
    let g = report.growth.first().ok_or("no growth summary at n = 400")?;
    let (m0, q0) = (g.m[0] as f64, g.quantile_err_rho[0]);
    for i in 0..g.m.len() {
        let ratio = g.quantile_err_rho[i] / q0;
        let allowed = (g.m[i] as f64 / m0).powf(5.0 / 6.0);
        if g.quantile_err_rho[i] > g.bound_rho[i] || ratio > allowed {
            return Err(format!("m={}: quantile {:.4} (growth ×{ratio:.3}, allowed ×{allowed:.3})", g.m[i], g.quantile_err_rho[i]));
        }
    }
    let last = g.m.len() - 1;
    Ok(format!(
        "0 grid points over δ; slopes [{}]; q(m={})/q(m={}) = {:.2} ≤ {:.2}",
        slopes.join(", "),
        g.m[last],
        g.m[0],
        g.quantile_err_rho[last] / q0,
        (g.m[last] as f64 / m0).powf(5.0 / 6.0)
    ))
}

fn criterion_10() -> Verdict {
    let mut rng = seeded(1010);
    let space = grid(12);
    let k = gaussian(25.0, CouplingMatrix::equicorrelated(3, 0.5).unwrap());
    let dec = eigendecompose(&k, &space).unwrap();
    let noise = NoiseSpec::new(0.2, 1.0).unwrap();
    let target = build_source_target(&dec, 1.0, &CoefficientSource::Seeded { seed: 10, modes: 5 }, Some(noise.default_budget())).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = random_function(&mut rng, &space, 3).scale(rng.gen_range(0.01..10.0));
        let e = excess_risk_check(&space, &target, &noise, &f).unwrap();
        if !e.holds() {
            return Err(format!("gap {:.2e} at scale {:.2e}", e.gap, e.scale));
        }
        worst = worst.max(e.gap / e.scale);
    }
    Ok(format!("50 functions, max relative gap {worst:.2e}"))
}

fn criterion_11() -> Verdict {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let run = |name: &str, parallel: bool| -> Result<Vec<u8>, String> {
        let cfg = dir.path().join(format!("{name}.json"));
        fs::write(&cfg, format!(r#"{{"n_grid": [50], "m_grid": [1], "trials": 200, "parallel": {parallel}}}"#)).map_err(|e| e.to_string())?;
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_vvrkhs"))
            .args(["rate", "--quiet", "--seed", "20240611", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("rate run {name} exited with {status}"));
        }
        fs::read(out.join("rate.csv")).map_err(|e| e.to_string())
    };
    let a = run("parallel_a", true)?;
    let b = run("parallel_b", true)?;
    let c = run("serial", false)?;
    if a != b {
        return Err("two parallel runs differ".into());
    }
    if a != c {
        return Err("parallel and serial runs differ".into());
    }
    Ok(format!("3 runs byte-identical ({} bytes)", a.len()))
}

fn main() {
    let cfg = RateExperimentConfig::default();
    let mut failures = 0;
    let mut report_line = |id: usize, budget: Duration, start: Instant, verdict: Verdict| {
        let elapsed = start.elapsed();
        let verdict = verdict.and_then(|msg| {
            if elapsed <= budget {
                Ok(msg)
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match verdict {
            Ok(msg) => println!("criterion {id:>2}: PASS ({elapsed:.2?}) {msg}"),
            Err(msg) => {
                failures += 1;
                println!("criterion {id:>2}: FAIL ({elapsed:.2?}) {msg}");
            }
        }
    };

    let second = Duration::from_secs(1);
    let criteria: [(usize, fn() -> Verdict); 7] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6), (7, criterion_7)];
    for (id, f) in criteria {
        let t = Instant::now();
        report_line(id, second, t, f());
    }

    let t = Instant::now();
    let experiment = run_rate_experiment(&cfg).map_err(|e| e.to_string());
    let experiment_time = t.elapsed();
    match &experiment {
        Ok(report) => {
            let t8 = Instant::now();
            let v8 = criterion_8(report);
            report_line(8, Duration::from_secs(120), t8 - experiment_time, v8);
            let t9 = Instant::now();
            let v9 = criterion_9(&cfg, report);
            report_line(9, Duration::from_secs(900), t9 - experiment_time, v9);
        }
        Err(e) => {
            report_line(8, Duration::from_secs(120), t, Err(e.clone()));
            report_line(9, Duration::from_secs(900), t, Err(e.clone()));
        }
    }

    let t = Instant::now();
    report_line(10, second, t, criterion_10());
    let t = Instant::now();
    report_line(11, Duration::from_secs(10), t, criterion_11());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
