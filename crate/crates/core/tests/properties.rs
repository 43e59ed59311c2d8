use modelfree::diagnostics::default_gamma;
use modelfree::plot::{Layer, PlotPanel};
use modelfree::tabular::column_stats;
use modelfree::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn design(x: &[f64], y: &[f64]) -> DesignMatrix {
    let n = x.len();
    let mut m = DMatrix::from_element(n, 2, 1.0);
    for (i, v) in x.iter().enumerate() {
        m[(i, 1)] = *v;
    }
    DesignMatrix::new("y", DVector::from_row_slice(y), m, vec!["(Intercept)".into(), "x".into()], true).unwrap()
}

fn all_six(b: usize, m: usize, seed: u64) -> Vec<EstimatorConfig> {
    vec![
        EstimatorConfig::new(Method::EmpiricalBoot).with_b(b).with_m(SampleSize::N).with_seed(seed),
        EstimatorConfig::new(Method::MultiplierBoot)
            .with_b(b)
            .with_weights(WeightsType::Rademacher)
            .with_seed(seed),
        EstimatorConfig::new(Method::ResidualBoot).with_b(b).with_seed(seed),
        EstimatorConfig::new(Method::Subsampling).with_b(b).with_m(SampleSize::Rows(m)).with_seed(seed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariances_symmetric_with_nonnegative_diagonal(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 12..40),
        seed in 0u64..1000,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        prop_assume!(tabular::sample_sd(&x) > 1e-3);
        let fit = fit_ols(&design(&x, &y)).unwrap();
        let n = x.len();
        let estimates = comp_var(&fit, &all_six(30, n / 2, seed));
        prop_assume!(estimates.is_ok());
        for ve in estimates.unwrap() {
            let c = &ve.cov_beta;
            let scale = c.amax().max(1.0);
            prop_assert!((c - c.transpose()).amax() <= 1e-12 * scale, "{} not symmetric", ve.method);
            for j in 0..c.nrows() {
                prop_assert!(c[(j, j)] >= 0.0, "{} diagonal {}", ve.method, c[(j, j)]);
            }
        }
    }

    #[test]
    fn default_bandwidth_is_sample_sd(x in prop::collection::vec(-100.0f64..100.0, 2..60)) {
        let d = Dataset::new(vec![("x".into(), x.clone())]).unwrap();
        prop_assert_eq!(default_gamma(&x), column_stats(&d, "x", &[]).unwrap().sample_sd);
    }

    #[test]
    fn svg_points_stay_inside_viewport(
        pts in prop::collection::vec((-1e6f64..1e6, -1e-3f64..1e-3), 1..30),
        h in -1e6f64..1e6,
        panels in 1usize..6,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let spec = PlotSpec {
            title: Some("t".into()),
            panels: (0..panels)
                .map(|_| PlotPanel::new("p", "x", "y").layer(Layer::Points { x: x.clone(), y: y.clone() }).layer(Layer::HLine(h)))
                .collect(),
        };
        let svg = render_svg(&spec).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let root = doc.root_element();
        let w: f64 = root.attribute("width").unwrap().parse().unwrap();
        let hgt: f64 = root.attribute("height").unwrap().parse().unwrap();
        for c in doc.descendants().filter(|n| n.has_tag_name("circle")) {
            let cx: f64 = c.attribute("cx").unwrap().parse().unwrap();
            let cy: f64 = c.attribute("cy").unwrap().parse().unwrap();
            prop_assert!((0.0..=w).contains(&cx) && (0.0..=hgt).contains(&cy));
        }
    }
}

#[test]
fn all_estimators_agree_when_well_specified() {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + v + rng.sample::<f64, _>(StandardNormal)).collect();
    let fit = fit_ols(&design(&x, &y)).unwrap();
    let estimates = comp_var(&fit, &all_six(5000, (n as f64).powf(0.7) as usize, 9)).unwrap();
    assert_eq!(estimates.len(), 6);
    let reference = estimates[0].std_errors();
    for ve in &estimates {
        for (se, r) in ve.std_errors().iter().zip(&reference) {
            let rel = (se * se - r * r).abs() / (r * r);
            assert!(rel < 0.20, "{}: variance off by {rel:.3}", ve.method);
        }
    }
}

#[test]
fn end_to_end_public_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut text = String::from("y,x1,x2\n");
    for _ in 0..200 {
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(0.0..3.0));
        let e: f64 = rng.sample(StandardNormal);
        text.push_str(&format!("{},{a},{b}\n", 2.0 - a + 0.5 * b + e * (1.0 + b)));
    }
    std::fs::write(&path, text).unwrap();
    let data = read_csv(&path).unwrap();
    let d = build_design(&parse_formula("y ~ .").unwrap(), &data).unwrap();
    let fit = fit_ols(&d).unwrap();
    let ves = comp_var(
        &fit,
        &[EstimatorConfig::new(Method::MultiplierBoot).with_b(200).with_seed(1)],
    )
    .unwrap();
    let rows: Vec<CoefRow> = ves.iter().flat_map(|ve| coef_table(&fit, ve, 0.95).unwrap()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert!(r.conf_low <= r.estimate && r.estimate <= r.conf_high);
    }
    let w = wald_test(&fit, &ves[1], &DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]), &DVector::zeros(1)).unwrap();
    assert!(w.statistic >= 0.0 && (0.0..=1.0).contains(&w.p_value));
    let report = render_summary(&fit, &ves, 0.95).unwrap();
    assert!(report.contains("x2"));
    let grids = reweight_all(&d, GridKind::Deciles, None, 20, 3).unwrap();
    assert_eq!(grids.len(), 2);
    let panels = focal_slope_data(&grids, &fit, 1).unwrap();
    let svg = render_svg(&modelfree::plot::reweight_plot("focal", &panels)).unwrap();
    assert!(roxmltree::Document::parse(&svg).is_ok());
}
