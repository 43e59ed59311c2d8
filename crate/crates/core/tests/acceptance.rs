//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modelfree::diagnostics::{
    default_gamma, nonlinearity_detection_data, qq_data, reweight_all, reweight_centers,
    reweighted_estimates, GridKind,
};
use modelfree::inference::{global_wald_test, tidy_csv, tidy_json};
use modelfree::plot::{qq_plot, render_svg, reweight_plot};
use modelfree::sim::{
    coverage_csv, coverage_experiment, simulate_dataset, CoverageRow, Noise, NoiseKind, SimScenario, Truth,
};
use modelfree::special::{chi_square_cdf, chi_square_sf};
use modelfree::variance::{
    var_classical, var_empirical_boot, var_multiplier_boot, var_residual_boot, var_sandwich, DEFAULT_B,
};
use modelfree::{
    build_design, coef_table, comp_var, fit_ols, parse_formula, render_summary, wald_test, Dataset,
    DesignMatrix, EstimatorConfig, Method, SampleSize, WeightsType,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn design_from(cols: Vec<(&str, Vec<f64>)>, formula: &str) -> DesignMatrix {
    let data = Dataset::new(cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect()).unwrap();
    build_design(&parse_formula(formula).unwrap(), &data).unwrap()
}

fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

/// Heteroscedastic data shared by criteria 3 and 4: `y = 1 + x + |x| z`.
fn hetero_design() -> DesignMatrix {
    let sc = SimScenario {
        n: 500,
        truth: Truth::Linear,
        noise: Noise {
            kind: NoiseKind::Heteroscedastic,
            sigma: 1.0,
        },
        reps: 1,
        b_grid: vec![],
        methods: vec![Method::Sandwich],
        level: 0.95,
        seed: 2024,
        weights_type: WeightsType::Rademacher,
        subsample_m: None,
    };
    let d = simulate_dataset(&sc, 0);
    build_design(&parse_formula("y ~ x").unwrap(), &d).unwrap()
}

fn tiny_n() -> Outcome {
    let dm = design_from(vec![("y", vec![1.0, 2.0, 3.0, 4.0])], "y ~ 1");
    let fit = fit_ols(&dm).unwrap();
    let c = var_classical(&fit).unwrap().cov_beta[(0, 0)];
    let s = var_sandwich(&fit).unwrap().cov_beta[(0, 0)];
    let closed = (c - 5.0 / 12.0).abs() <= 1e-12 && (s - 0.3125).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let xm = DMatrix::from_column_slice(5, 2, &x);
        let dm = DesignMatrix::new("y", DVector::from_vec(y.clone()), xm.clone(), vec!["a".into(), "b".into()], false)
            .unwrap();
        let beta = fit_ols(&dm).unwrap().beta_hat;
        // Cramer's rule on the 2x2 normal equations.
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..5 {
            let (a, b) = (xm[(i, 0)], xm[(i, 1)]);
            s11 += a * a;
            s12 += a * b;
            s22 += b * b;
            t1 += a * y[i];
            t2 += b * y[i];
        }
        let det = s11 * s22 - s12 * s12;
        let want = [(s22 * t1 - s12 * t2) / det, (s11 * t2 - s12 * t1) / det];
        for j in 0..2 {
            worst = worst.max((beta[j] - want[j]).abs() / want[j].abs().max(1e-300));
        }
    }
    check(
        closed && worst <= 1e-9,
        format!("classical {c:.15}, sandwich {s:.15}, worst normal-equation rel err {worst:.2e} over 1000 5x2 problems"),
    )
}

fn bootstrap_enumeration() -> Outcome {
    let y = [1.0, 2.0, 4.0];
    let mut means = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                means.push((y[a] + y[b] + y[c]) / 3.0);
            }
        }
    }
    let mu = means.iter().sum::<f64>() / 27.0;
    let exact = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / 27.0;

    let fit = fit_ols(&design_from(vec![("y", y.to_vec())], "y ~ 1")).unwrap();
    let ve = var_empirical_boot(&fit, 100_000, 3, 17).unwrap();
    let got = ve.cov_beta[(0, 0)];
    let rel = (got - exact).abs() / exact;
    check(rel < 0.03, format!("exact {exact:.6}, B=1e5 estimate {got:.6}, rel err {rel:.4}"))
}

fn multiplier_consistency() -> Outcome {
    let fit = fit_ols(&hetero_design()).unwrap();
    let sandwich = var_sandwich(&fit).unwrap().cov_beta;
    let covs: Vec<(WeightsType, DMatrix<f64>)> = WeightsType::ALL
        .iter()
        .map(|&w| (w, var_multiplier_boot(&fit, 5000, w, 3).unwrap().cov_beta))
        .collect();
    let gaussian = &covs.iter().find(|(w, _)| *w == WeightsType::Gaussian).unwrap().1;
    let vs_sandwich = frobenius_rel(gaussian, &sandwich);
    let mut pairwise: f64 = 0.0;
    for (i, (_, a)) in covs.iter().enumerate() {
        for (_, b) in &covs[i + 1..] {
            pairwise = pairwise.max(frobenius_rel(a, b)).max(frobenius_rel(b, a));
        }
    }
    check(
        vs_sandwich < 0.10 && pairwise < 0.15,
        format!("gaussian vs sandwich {vs_sandwich:.4} (< 0.10), max pairwise {pairwise:.4} (< 0.15)"),
    )
}

fn residual_limit() -> Outcome {
    let fit = fit_ols(&hetero_design()).unwrap();
    let target = fit.xtx_inverse() * (fit.rss() / fit.n() as f64);
    let got = var_residual_boot(&fit, 5000, 5).unwrap().cov_beta;
    let rel = frobenius_rel(&got, &target);
    check(rel < 0.10, format!("Frobenius rel err {rel:.4} (< 0.10)"))
}

fn weight_moments() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, &w) in WeightsType::ALL.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let draws = modelfree::variance::sample_weights(w, 1_000_000, &mut rng);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let third = draws.iter().map(|v| v.powi(3)).sum::<f64>() / n;
        let mut ok = mean.abs() < 0.004 && (var - 1.0).abs() < 0.01;
        if w == WeightsType::Mammen {
            ok &= (third - 1.0).abs() < 0.02;
        }
        pass &= ok;
        lines.push(format!("{} mean {mean:+.4} var {var:.4} m3 {third:+.3}", w.as_str()));
    }
    check(pass, lines.join("; "))
}

/// `P(k/2, x/2)` by its power series, summed independently of the library.
fn series_chi2_cdf(x: f64, k: usize) -> f64 {
    let a = k as f64 / 2.0;
    let h = x / 2.0;
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 0.0;
    while term > sum * 1e-18 {
        n += 1.0;
        term *= h / (a + n);
        sum += term;
    }
    (a * h.ln() - h - statrs::function::gamma::ln_gamma(a)).exp() * sum
}

fn wald_identities() -> Outcome {
    let dm = hetero_design();
    let fit = fit_ols(&dm).unwrap();
    let sw = var_sandwich(&fit).unwrap();
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, -2.0]);
    let at_hat = wald_test(&fit, &sw, &r, &(&r * &fit.beta_hat)).unwrap();
    let zero = at_hat.statistic == 0.0 && at_hat.p_value == 1.0;

    let rows = coef_table(&fit, &sw, 0.95).unwrap();
    let mut z_gap: f64 = 0.0;
    for j in 0..2 {
        let mut e = DMatrix::zeros(1, 2);
        e[(0, j)] = 1.0;
        let w = wald_test(&fit, &sw, &e, &DVector::zeros(1)).unwrap();
        z_gap = z_gap.max((w.p_value - rows[j].p_value).abs());
    }

    let mut cdf_gap: f64 = 0.0;
    for k in [1, 2, 5, 10] {
        for x in [0.1, 1.0, 5.0, 20.0] {
            let want = series_chi2_cdf(x, k);
            cdf_gap = cdf_gap.max((chi_square_cdf(x, k) - want).abs());
            cdf_gap = cdf_gap.max((chi_square_sf(x, k) - (1.0 - want)).abs());
        }
    }
    check(
        zero && z_gap <= 1e-12 && cdf_gap <= 1e-10,
        format!(
            "r = R beta_hat gives stat {} p {}; chi2_1 vs z p gap {z_gap:.1e}; CDF vs series gap {cdf_gap:.1e}",
            at_hat.statistic, at_hat.p_value
        ),
    )
}

fn scenario(truth: Truth, kind: NoiseKind, seed: u64) -> SimScenario {
    SimScenario {
        n: 500,
        truth,
        noise: Noise { kind, sigma: 1.0 },
        reps: 1000,
        b_grid: vec![25, 50, 100, 400],
        methods: vec![Method::ClassicalLm, Method::Sandwich, Method::EmpiricalBoot, Method::MultiplierBoot],
        level: 0.95,
        seed,
        weights_type: WeightsType::Rademacher,
        subsample_m: None,
    }
}

fn find<'a>(rows: &'a [CoverageRow], m: Method, b: Option<usize>, coef: &str) -> &'a CoverageRow {
    rows.iter()
        .find(|r| r.method == m && r.b == b && r.coefficient == coef)
        .unwrap()
}

fn coverage() -> Outcome {
    let control = scenario(Truth::Linear, NoiseKind::Homoscedastic, 71);
    let misspec = scenario(Truth::Quadratic, NoiseKind::Heteroscedastic, 72);
    let single = pool(1);
    let (ctrl, mis) = single.install(|| (coverage_experiment(&control).unwrap(), coverage_experiment(&misspec).unwrap()));

    let mut pass = true;
    let mut notes = Vec::new();
    for coef in ["(Intercept)", "x"] {
        for m in [Method::ClassicalLm, Method::Sandwich] {
            let c = find(&ctrl, m, None, coef).coverage;
            pass &= (0.93..=0.97).contains(&c);
            notes.push(format!("control {m} {coef} {c:.3}"));
        }
    }
    let cl = find(&mis, Method::ClassicalLm, None, "x").coverage;
    let sw = find(&mis, Method::Sandwich, None, "x").coverage;
    pass &= sw - cl >= 0.02 && (0.92..=0.98).contains(&sw);
    notes.push(format!("misspecified slope classical {cl:.3} sandwich {sw:.3}"));
    for coef in ["(Intercept)", "x"] {
        for m in [Method::EmpiricalBoot, Method::MultiplierBoot] {
            let c = find(&mis, m, Some(400), coef).coverage;
            pass &= (c - 0.95).abs() <= 0.03;
            let trend: Vec<String> = [25, 50, 100, 400]
                .iter()
                .map(|&b| format!("{:.3}", find(&mis, m, Some(b), coef).coverage))
                .collect();
            notes.push(format!("misspecified {m} {coef} B=25..400 [{}]", trend.join(" ")));
        }
    }
    check(pass, notes.join("; "))
}

fn diagnostics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let dm = design_from(vec![("y", y), ("x", x.clone())], "y ~ x");
    let centers = reweight_centers(&x, GridKind::Deciles).unwrap().centers;
    let grid = reweighted_estimates(&dm, 1, &centers, default_gamma(&x) / 4.0).unwrap();
    let worst = (1..9)
        .map(|l| {
            let c = grid.centers[l];
            (grid.estimates[(l, 1)] - 2.0 * c).abs() / (2.0 * c)
        })
        .fold(0.0, f64::max);

    let x1: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    let x2: Vec<f64> = (0..200).map(|i| (i as f64 * 0.11).cos() + i as f64 / 100.0).collect();
    let yl: Vec<f64> = (0..200).map(|i| 2.0 - x1[i] + 0.25 * x2[i]).collect();
    let lin = design_from(vec![("y", yl), ("x1", x1), ("x2", x2)], "y ~ .");
    let fit = fit_ols(&lin).unwrap();
    let grids = reweight_all(&lin, GridKind::Deciles, None, 50, 1).unwrap();
    let mut flat: f64 = 0.0;
    let mut band: f64 = 0.0;
    for g in &grids {
        for l in 0..g.centers.len() {
            for k in 0..3 {
                flat = flat.max((g.estimates[(l, k)] - fit.beta_hat[k]).abs());
                let vals: Vec<f64> = g.boot_curves.as_ref().unwrap().iter().map(|c| c[(l, k)]).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                band = band.max(hi - lo);
            }
        }
    }
    check(
        worst < 0.15 && flat <= 1e-9 && band <= 1e-9,
        format!(
            "y=x^2, x~U(1,3), gamma=sd/4: worst interior rel err vs 2c {worst:.4}; exact-linear max drift {flat:.1e}, max band width {band:.1e}"
        ),
    )
}

/// Every seeded text artifact the library produces.
fn artifacts() -> Vec<(&'static str, String)> {
    let dm = hetero_design();
    let fit = fit_ols(&dm).unwrap();
    let requests = [
        EstimatorConfig::new(Method::EmpiricalBoot).with_b(200).with_seed(9),
        EstimatorConfig::new(Method::MultiplierBoot).with_b(200).with_weights(WeightsType::Webb).with_seed(9),
        EstimatorConfig::new(Method::ResidualBoot).with_b(200).with_seed(9),
        EstimatorConfig::new(Method::Subsampling).with_b(200).with_m(SampleSize::Rows(100)).with_seed(9),
    ];
    let ves = comp_var(&fit, &requests).unwrap();
    let rows: Vec<_> = ves.iter().flat_map(|v| coef_table(&fit, v, 0.95).unwrap()).collect();
    let grids = reweight_all(&dm, GridKind::Deciles, None, 100, 9).unwrap();
    let panels = nonlinearity_detection_data(&grids, &fit);
    let qq = qq_data(&ves[2], 1, "x").unwrap();
    let mut sc = scenario(Truth::Quadratic, NoiseKind::Heteroscedastic, 9);
    sc.reps = 40;
    sc.b_grid = vec![25, 50];
    vec![
        ("tidy.csv", tidy_csv(&rows).unwrap()),
        ("tidy.json", tidy_json(&rows).unwrap()),
        ("summary.txt", render_summary(&fit, &ves, 0.95).unwrap()),
        ("nonlinearity.svg", render_svg(&reweight_plot("Nonlinearity detection", &panels)).unwrap()),
        ("qq.svg", render_svg(&qq_plot("Empirical bootstrap", &[qq])).unwrap()),
        ("coverage.csv", coverage_csv(&coverage_experiment(&sc).unwrap()).unwrap()),
    ]
}

fn determinism() -> Outcome {
    let one = pool(1).install(artifacts);
    let eight = pool(8).install(artifacts);
    let differing: Vec<&str> = one
        .iter()
        .zip(&eight)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0)
        .collect();
    let bytes: usize = one.iter().map(|a| a.1.len()).sum();
    check(
        differing.is_empty(),
        format!("{} artifacts, {bytes} bytes compared; differing: {differing:?}", one.len()),
    )
}

fn defaults() -> Outcome {
    let fit = fit_ols(&hetero_design()).unwrap();
    let ves = comp_var(&fit, &[]).unwrap();
    let methods: Vec<Method> = ves.iter().map(|v| v.method).collect();
    let summary = render_summary(&fit, &ves, 0.95).unwrap();
    let global = summary.contains("Global Wald test") && global_wald_test(&fit, &ves[1]).is_some();
    let default_b = EstimatorConfig::new(Method::EmpiricalBoot).run(&fit).unwrap().params.b == Some(DEFAULT_B);
    check(
        methods == [Method::ClassicalLm, Method::Sandwich] && global && default_b,
        format!("comp_var() -> {methods:?}; summary has global chi-square block: {global}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("tiny-n oracles", tiny_n, Some(Duration::from_secs(1))),
        ("bootstrap enumeration", bootstrap_enumeration, Some(Duration::from_secs(10))),
        ("multiplier consistency", multiplier_consistency, Some(Duration::from_secs(30))),
        ("residual bootstrap limit", residual_limit, Some(Duration::from_secs(30))),
        ("weight moments", weight_moments, Some(Duration::from_secs(5))),
        ("Wald identities", wald_identities, None),
        ("coverage experiment (1 thread)", coverage, Some(Duration::from_secs(600))),
        ("diagnostics oracle", diagnostics_oracle, None),
        ("determinism 1 vs 8 threads", determinism, None),
        ("default behavior", defaults, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = limit.map_or(true, |l| elapsed < l);
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
