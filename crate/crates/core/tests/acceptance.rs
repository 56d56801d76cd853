//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::panic;
use std::time::{Duration, Instant};

use minimax_lab::cli;
use minimax_lab::experiments::{
    power_of_two_grid, run_balancer_comparison, run_convergence_study, run_init_comparison,
    run_worstcase_complexity_comparison, ScheduleMode,
};
use minimax_lab::optimizer::{gd_run, projected_gd_run, Ball, Downstream};
use minimax_lab::oracle::{
    analytic_average_minimizer, basin_check, downstream_minimizer, minimax_reference,
    sample_complexity_bound, BasinSpec, ComplexityInputs,
};
use minimax_lab::tasks::{
    gap_family, gap_family_with, quadratic_family, quadratic_family_with, FamilyOptions,
};
use minimax_lab::weighting::{softmax_weights, surrogate_alpha, AlphaSchedule, Balancer};
use minimax_lab::{ParamVector, SimplexPoint, TaskFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{central_difference, random_family, random_point, random_simplex};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const K_LIST: [usize; 4] = [100, 400, 1600, 6400];

/// gap(4) from 0 plus 20 random families, each started at least 0.25 away
/// from its minimax point.
fn convergence_suite() -> Vec<(TaskFamily, ParamVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut out = vec![(gap_family(4).unwrap(), ParamVector::scalar(0.0).unwrap())];
    while out.len() < 21 {
        let fam = random_family(&mut rng, 2, 8);
        let star = minimax_reference(&fam).unwrap().theta_star;
        let theta0 = loop {
            let t = random_point(&mut rng, fam.dim(), 2.0);
            if t.dist(&star) >= 0.25 {
                break t;
            }
        };
        out.push((fam, theta0));
    }
    out
}

fn c1_convergence_bound() -> Outcome {
    let started = Instant::now();
    let mut worst_ratio = f64::INFINITY;
    for (fam, theta0) in convergence_suite() {
        let report =
            run_convergence_study(&fam, &theta0, &K_LIST, ScheduleMode::Theoretical).map_err(err)?;
        for r in &report.rows {
            ensure(r.satisfied, || {
                format!("{} K={}: excess {:.3e} > bound {:.3e}", fam.name(), r.iterations, r.excess, r.bound)
            })?;
        }
        let ratios = report.rate_ratios();
        ensure(ratios.len() == 2, || format!("{}: excess already negligible at K=100", fam.name()))?;
        for (k, k16, ratio) in ratios {
            worst_ratio = worst_ratio.min(ratio);
            ensure(ratio >= 3.0, || {
                format!("{}: excess({k})/excess({k16}) = {ratio:.3}", fam.name())
            })?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("21 families, min ratio {worst_ratio:.3}, {:.1}s", elapsed.as_secs_f64()))
}

fn c2_rate_sanity() -> Outcome {
    let fam = gap_family(4).unwrap();
    let report = run_convergence_study(
        &fam,
        &ParamVector::scalar(0.0).unwrap(),
        &[6400],
        ScheduleMode::Theoretical,
    )
    .map_err(err)?;
    let analytic = 1.0 / (4.0 + 2.0 * 3f64.sqrt());
    ensure((report.oracle.value - analytic).abs() <= 1e-12, || {
        format!("oracle {} vs {analytic}", report.oracle.value)
    })?;
    let excess = report.rows[0].excess;
    ensure(excess <= 0.05, || format!("excess {excess}"))?;
    Ok(format!("excess {excess:.3e} at K=6400"))
}

fn c3_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut min_gap = f64::INFINITY;
    for i in 0..100 {
        let fam = random_family(&mut rng, 2, 8);
        let star = minimax_reference(&fam).map_err(err)?;
        let avg = analytic_average_minimizer(&fam).map_err(err)?;
        let at_max = fam.worst_case_risk(&star.theta_star).map_err(err)?.value;
        let at_avg = fam.worst_case_risk(&avg).map_err(err)?.value;
        min_gap = min_gap.min(at_avg - at_max);
        ensure(at_max <= at_avg + 1e-9, || format!("family {i}: {at_max} > {at_avg}"))?;
    }
    Ok(format!("100/100, smallest margin {min_gap:.2e}"))
}

fn c4_gap_ratio() -> Outcome {
    let mut parts = Vec::new();
    for t in [4usize, 16, 64] {
        let report = run_init_comparison(&gap_family(t).unwrap()).map_err(err)?;
        let expected = (1.0 + ((t - 1) as f64).sqrt()).powi(2) / 4.0;
        let rel = (report.ratio / expected - 1.0).abs();
        ensure(rel <= 0.01, || format!("T={t}: ratio {} vs {expected}", report.ratio))?;
        ensure(report.ratio >= t as f64 / 8.0, || format!("T={t}: ratio below T/8"))?;
        parts.push(format!("T={t} {:.4}", report.ratio));
    }
    Ok(parts.join(", "))
}

fn c5_basin() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0;
    let mut max_ratio: f64 = 0.0;
    for i in 0..50 {
        let fam = random_family(&mut rng, 3, 6);
        let lambda = SimplexPoint::vertex(fam.len(), rng.random_range(0..fam.len())).unwrap();
        let theta0 = random_point(&mut rng, fam.dim(), 3.0);
        let star = downstream_minimizer(&fam, &lambda).map_err(err)?;
        let smooth = fam.downstream_smoothness(&lambda);
        let f0 = fam.downstream_risk(&lambda, &theta0).map_err(err)?;
        let fstar = fam.downstream_risk(&lambda, &star).map_err(err)?;
        let basin = BasinSpec::descent(star, fam.downstream_mu(&lambda), f0 - fstar).map_err(err)?;
        let eta = rng.random_range(0.05..=1.0) / smooth;
        let objective = Downstream::new(&fam, &lambda).map_err(err)?;
        let trace = if i % 2 == 0 {
            gd_run(&objective, &theta0, eta, 200)
        } else {
            let ball = Ball::new(ParamVector::zeros(fam.dim()), fam.domain_radius()).map_err(err)?;
            projected_gd_run(&objective, &ball, &theta0, eta, 200)
        }
        .map_err(err)?;
        let report = basin_check(&trace, &basin, smooth);
        ensure(report.precondition_met, || format!("triple {i}: eta above 1/L"))?;
        ensure(report.first_violation.is_none(), || {
            format!("triple {i}: violation {:?}", report.first_violation)
        })?;
        checked += report.checked;
        max_ratio = max_ratio.max(report.max_ratio);
    }
    Ok(format!("50 triples, {checked} iterates, max dist²/radius² {max_ratio:.3}"))
}

fn c6_oracle_equivalence() -> Outcome {
    let mut families = vec![gap_family(4).unwrap(), gap_family(16).unwrap()];
    families.extend(convergence_suite().into_iter().skip(1).map(|(f, _)| f));
    let mut worst: f64 = 0.0;
    for fam in &families {
        let report = run_init_comparison(fam).map_err(err)?;
        let tol = 1e-3f64.max(report.grid.error_bound);
        let diff = (report.swgd_value - report.grid.value).abs();
        worst = worst.max(diff);
        ensure(diff <= tol, || {
            format!("{}: |{} - {}| > {tol}", fam.name(), report.swgd_value, report.grid.value)
        })?;
    }
    Ok(format!("{} instances, max gap {worst:.2e}", families.len()))
}

fn c7_softmax_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for i in 0..1000 {
        let t = rng.random_range(1..=12);
        let risks: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let alpha = rng.random_range(0.0..20.0);
        let shift = rng.random_range(-1e3..1e3);
        let w = softmax_weights(&risks, alpha).map_err(err)?;
        let shifted: Vec<f64> = risks.iter().map(|r| r + shift).collect();
        let ws = softmax_weights(&shifted, alpha).map_err(err)?;
        let dev = w
            .as_slice()
            .iter()
            .zip(ws.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(dev <= 1e-12, || format!("vector {i}: shift deviation {dev:e}"))?;
        let sum: f64 = w.as_slice().iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("vector {i}: sum {sum}"))?;

        let max = risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hot = softmax_weights(&risks, 1e9).map_err(err)?;
        let mass: f64 = risks
            .iter()
            .zip(hot.as_slice())
            .filter(|(r, _)| **r == max)
            .map(|(_, w)| w)
            .sum();
        ensure(mass >= 1.0 - 1e-6, || format!("vector {i}: argmax mass {mass}"))?;

        let flat = softmax_weights(&risks, 0.0).map_err(err)?;
        let u = 1.0 / t as f64;
        ensure(flat.as_slice().iter().all(|w| (w - u).abs() <= 1e-12), || {
            format!("vector {i}: alpha = 0 not uniform")
        })?;
    }
    Ok("1000 vectors".into())
}

fn c8_surrogate_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut min_slack = f64::INFINITY;
    for eps in [0.1, 0.01] {
        for i in 0..100 {
            let t = rng.random_range(2..=10);
            let scale = rng.random_range(0.1..5.0);
            let risks: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0) * scale).collect();
            let b = risks.iter().cloned().fold(0.0, f64::max);
            let alpha = surrogate_alpha(eps, t, b).map_err(err)?;
            let w = softmax_weights(&risks, alpha).map_err(err)?;
            let value: f64 = w.as_slice().iter().zip(&risks).map(|(w, r)| w * r).sum();
            let slack = value - (b - 2.0 * eps);
            min_slack = min_slack.min(slack);
            ensure(slack >= 0.0, || format!("eps {eps} vector {i}: {value} < {b} - 2eps"))?;
        }
    }
    Ok(format!("200 vectors, min slack {min_slack:.3e}"))
}

fn c9_gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let noisy = FamilyOptions {
        noise_sigma: 0.3,
        domain_radius: Some(5.0),
    };
    let centers = |rng: &mut ChaCha8Rng, t: usize, d: usize| -> Vec<ParamVector> {
        (0..t).map(|_| random_point(rng, d, 1.0)).collect()
    };
    let c1 = centers(&mut rng, 3, 2);
    let c2 = centers(&mut rng, 4, 3);
    let families = vec![
        quadratic_family(c1, vec![1.0, 0.5, 2.0], 0.0).unwrap(),
        quadratic_family_with(c2, vec![0.7, 1.3, 0.9, 1.8], noisy).unwrap(),
        gap_family(5).unwrap(),
        gap_family_with(3, noisy).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for fam in &families {
        let t = fam.len();
        let mut lambdas: Vec<SimplexPoint> =
            (0..t).map(|i| SimplexPoint::vertex(t, i).unwrap()).collect();
        lambdas.push(SimplexPoint::uniform(t).unwrap());
        for _ in 0..3 {
            lambdas.push(random_simplex(&mut rng, t));
        }
        for lambda in &lambdas {
            for _ in 0..100 {
                let theta = random_point(&mut rng, fam.dim(), 3.0);
                let g = fam.downstream_gradient(lambda, &theta).map_err(err)?;
                let fd = central_difference(|x| fam.downstream_risk(lambda, x).unwrap(), &theta);
                let diff: f64 = g
                    .as_slice()
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let rel = diff / g.norm().max(1e-8);
                worst = worst.max(rel);
                probes += 1;
                ensure(rel <= 1e-5, || format!("{}: relative error {rel:e}", fam.name()))?;
            }
        }
    }
    Ok(format!("{probes} probes, worst relative error {worst:.2e}"))
}

fn c10_sample_complexity() -> Outcome {
    let started = Instant::now();
    let fam = gap_family_with(
        8,
        FamilyOptions {
            noise_sigma: 0.5,
            domain_radius: None,
        },
    )
    .unwrap();
    let grid = power_of_two_grid(10);
    let mut holds = 0;
    let mut hats = Vec::new();
    for seed in 0..20u64 {
        let cmp = run_worstcase_complexity_comparison(&fam, 0.05, 0.1, &grid, 200, seed)
            .map_err(err)?;
        if cmp.direction_holds() {
            holds += 1;
        }
        ensure(cmp.within_bounds(), || {
            format!(
                "seed {seed}: N̂ {:?}/{:?} vs bounds {:.0}/{:.0}",
                cmp.max.worst_n_hat(0.1),
                cmp.average.worst_n_hat(0.1),
                cmp.max.bound,
                cmp.average.bound
            )
        })?;
        hats.push((cmp.max.worst_n_hat(0.1), cmp.average.worst_n_hat(0.1)));
    }
    let elapsed = started.elapsed();
    ensure(holds >= 18, || format!("direction held in {holds}/20 seeds: {hats:?}"))?;
    ensure(elapsed <= Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "direction held {holds}/20, first seed N̂ {:?} vs {:?}, {:.1}s",
        hats[0].0,
        hats[0].1,
        elapsed.as_secs_f64()
    ))
}

fn c11_bound_calculator() -> Outcome {
    let value = sample_complexity_bound(ComplexityInputs {
        eps: 0.5,
        delta: 0.1,
        dim: 1,
        bound: 1.0,
        lipschitz: 1.0,
        mu: 1.0,
        init_risk: 0.5,
    })
    .map_err(err)?;
    let expected = 32.0 * 33f64.ln() + 32.0 * 20f64.ln();
    ensure((value - expected).abs() <= 1e-6, || format!("{value} vs {expected}"))?;
    ensure((value - 207.7).abs() < 0.1, || format!("{value}"))?;
    Ok(format!("{value:.6}"))
}

fn c12_balancers() -> Outcome {
    let fam = gap_family(4).unwrap();
    let theta0 = ParamVector::scalar(0.0).unwrap();
    let k = 4000;
    let r0 = theta0.dist(&minimax_reference(&fam).map_err(err)?.theta_star);
    let eta = r0 / (fam.lipschitz() * (k as f64).sqrt());
    let alpha = AlphaSchedule::theoretical(r0, fam.lipschitz(), fam.len(), fam.bound()).map_err(err)?;
    let cmp = run_balancer_comparison(&fam, &theta0, eta, k, &Balancer::ALL, alpha).map_err(err)?;
    let mm = cmp.row(Balancer::Minimax).unwrap().worst_risk;
    for r in &cmp.rows {
        ensure(mm <= r.worst_risk, || {
            format!("minimax {mm} above {} {}", r.balancer, r.worst_risk)
        })?;
    }
    let others: Vec<String> = cmp
        .rows
        .iter()
        .filter(|r| r.balancer != Balancer::Minimax)
        .map(|r| format!("{} {:.4}", r.balancer, r.worst_risk))
        .collect();
    Ok(format!("minimax {mm:.4}; {}", others.join(", ")))
}

fn run_cli(args: &[&str], outdir: &std::path::Path) -> i32 {
    let mut argv = vec!["minimax-lab".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--quiet".into(), "--outdir".into(), outdir.display().to_string()]);
    cli::main(argv)
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.display().to_string()
    };
    let quad = "family.kind = quadratic\nfamily.centers = 0;0, 1;0, 0;1\nfamily.curvatures = 1, 2, 0.5\n";
    let studies: Vec<(String, Vec<String>)> = vec![
        (
            "train".into(),
            vec![write(
                "train.cfg",
                "family.kind = gap\nfamily.T = 4\nfamily.noise_sigma = 0.3\nbalancer = minimax\nK = 300\nbatch_size = 4\nseed = 5\n",
            )],
        ),
        (
            "convergence".into(),
            vec![write("conv.cfg", &format!("{quad}K_list = 100, 1600\ntheta0 = 2;2\n"))],
        ),
        ("compare-init".into(), vec![write("init.cfg", quad)]),
        (
            "sample-complexity".into(),
            vec![write(
                "sc.cfg",
                "family.kind = gap\nfamily.T = 3\nfamily.noise_sigma = 0.5\nN_grid = 1, 4, 16, 64\ntrials = 40\nseed = 9\n",
            )],
        ),
        (
            "compare-balancers".into(),
            vec![write("bal.cfg", &format!("{quad}K = 500\n"))],
        ),
        ("gap".into(), vec!["--T".into(), "6".into()]),
    ];
    for (study, extra) in &studies {
        let mut args: Vec<&str> = vec![study.as_str()];
        if study != "gap" {
            args.push("--config");
        }
        args.extend(extra.iter().map(String::as_str));
        let a = dir.path().join(format!("{study}-a"));
        let b = dir.path().join(format!("{study}-b"));
        let (ca, cb) = (run_cli(&args, &a), run_cli(&args, &b));
        ensure(ca == cb, || format!("{study}: exit {ca} vs {cb}"))?;
        ensure(ca <= 1, || format!("{study}: exit {ca}"))?;
        let files = |d: &std::path::Path| -> Vec<(String, Vec<u8>)> {
            let mut v: Vec<_> = std::fs::read_dir(d)
                .unwrap()
                .map(|e| e.unwrap())
                .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
                .collect();
            v.sort();
            v
        };
        let (fa, fb) = (files(&a), files(&b));
        ensure(fa.len() == 1, || format!("{study}: expected one CSV, found {}", fa.len()))?;
        ensure(fa == fb, || format!("{study}: CSV bodies differ"))?;
    }
    Ok(format!("{} studies byte-identical", studies.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("convergence bound on gap and random families", c1_convergence_bound),
        ("rate sanity on gap_family(4) at K=6400", c2_rate_sanity),
        ("minimax point has lower worst-case risk", c3_ordering),
        ("gap family ratio", c4_gap_ratio),
        ("descent basin", c5_basin),
        ("SWGD matches grid oracle", c6_oracle_equivalence),
        ("softmax weight properties", c7_softmax_properties),
        ("surrogate inequality", c8_surrogate_inequality),
        ("gradient checks", c9_gradient_checks),
        ("sample-complexity direction and bound", c10_sample_complexity),
        ("bound calculator", c11_bound_calculator),
        ("balancer comparison", c12_balancers),
        ("determinism", c13_determinism),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
