//! `modelfree` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data
//! and model errors.

pub mod args;
pub mod job;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use modelfree::diagnostics::{
    ci_width_comparison, focal_reweighting_variable_data, focal_slope_data, lm_diag_data,
    nonlinearity_detection_data, panel_rows, qq_data, reweight_all, GridKind, QqData,
};
use modelfree::inference::{fmt_number, tidy_csv, tidy_json, wald_test, WaldResult};
use modelfree::plot::{lm_diag_plot, qq_plot, render_svg, reweight_plot, Layer, PlotPanel, PlotSpec};
use modelfree::sim::{coverage_csv, coverage_experiment, coverage_plot, SimScenario};
use modelfree::{
    build_design, coef_table, comp_var, fit_ols, parse_formula, read_csv, render_coefficients,
    render_summary, CoefRow, DesignMatrix, FittedOls, Method, VarianceEstimate,
};

use args::{Cli, Command, DiagArgs, DiagKind, GridArg, ModelArgs, TableFormat};
use job::JobConfig;

pub const THREADS_ENV: &str = "MODELFREE_THREADS";

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(modelfree::Error),
}

impl From<modelfree::Error> for Failure {
    fn from(e: modelfree::Error) -> Self {
        match e {
            modelfree::Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// Runs the command line `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let threads = match resolve_threads(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return 1;
        }
    };
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &mut out_buf, &mut err_buf)),
            Err(e) => Err(Failure::Usage(e.to_string())),
        },
        None => dispatch(&cli.command, &mut out_buf, &mut err_buf),
    };
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            let _ = writeln!(err, "Run 'modelfree --help' for usage.");
            1
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?,
            ),
            _ => None,
        },
    };
    match n {
        Some(0) => Err("thread count must be at least 1".into()),
        other => Ok(other),
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Fit(m) => {
            let (fit, ves) = load(m, err)?;
            out.write_all(render_coefficients(&fit, &ves, m.level)?.as_bytes())?;
        }
        Command::Summary(s) => match &s.config {
            Some(path) => run_job(path, out, err)?,
            None => {
                let m = s.model().expect("clap enforces --data and --formula");
                let (fit, ves) = load(&m, err)?;
                out.write_all(render_summary(&fit, &ves, m.level)?.as_bytes())?;
            }
        },
        Command::Confint(c) => {
            let (fit, ves) = load(&c.model, err)?;
            let text = match c.format {
                TableFormat::Csv => tidy_csv(&tidy_rows(&fit, &ves, c.model.level)?)?,
                TableFormat::Json => tidy_json(&tidy_rows(&fit, &ves, c.model.level)?)? + "\n",
                TableFormat::Text => render_coefficients(&fit, &ves, c.model.level)?,
            };
            out.write_all(text.as_bytes())?;
        }
        Command::Waldtest(w) => {
            let r_matrix = read_matrix(&w.r_matrix)?;
            let r_vector = read_vector(&w.r_vector)?;
            let (fit, ves) = load(&w.model, err)?;
            let results = ves
                .iter()
                .map(|ve| wald_test(&fit, ve, &r_matrix, &r_vector))
                .collect::<Result<Vec<_>, _>>()?;
            out.write_all(format_wald(&results, w.format)?.as_bytes())?;
        }
        Command::Diag(d) => run_diag(d, out, err)?,
        Command::Simulate(s) => {
            let text = fs::read_to_string(&s.config)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", s.config.display())))?;
            let sc = SimScenario::from_json(&text)?;
            let rows = coverage_experiment(&sc)?;
            let csv = coverage_csv(&rows)?;
            match &s.out {
                None => out.write_all(csv.as_bytes())?,
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    write_file(&dir.join("coverage.csv"), &csv, out)?;
                    let svg = render_svg(&coverage_plot(&rows, sc.level))?;
                    write_file(&dir.join("coverage.svg"), &svg, out)?;
                }
            }
        }
    }
    Ok(())
}

fn seed_notice(err: &mut dyn Write) {
    let _ = writeln!(err, "note: no seed given; using seed 0");
}

fn read_data(path: &Path) -> CmdResult<modelfree::Dataset> {
    read_csv(path).map_err(|e| match e {
        modelfree::Error::Io(io) => {
            Failure::Data(io::Error::new(io.kind(), format!("{}: {io}", path.display())).into())
        }
        other => other.into(),
    })
}

fn fit_model(data: &Path, formula: &str) -> CmdResult<FittedOls> {
    let spec = parse_formula(formula)?;
    let data = read_data(data)?;
    Ok(fit_ols(&build_design(&spec, &data)?)?)
}

fn load(m: &ModelArgs, err: &mut dyn Write) -> CmdResult<(FittedOls, Vec<VarianceEstimate>)> {
    let (requests, defaulted) = m.requests().map_err(Failure::Usage)?;
    if defaulted {
        seed_notice(err);
    }
    let fit = fit_model(&m.data, &m.formula)?;
    let ves = comp_var(&fit, &requests)?;
    Ok((fit, ves))
}

fn tidy_rows(fit: &FittedOls, ves: &[VarianceEstimate], level: f64) -> CmdResult<Vec<CoefRow>> {
    let mut rows = Vec::new();
    for ve in ves {
        rows.extend(coef_table(fit, ve, level)?);
    }
    Ok(rows)
}

fn write_file(path: &Path, contents: &str, out: &mut dyn Write) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> CmdResult<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r).map_err(modelfree::Error::from)?;
    }
    let bytes = wtr.into_inner().map_err(|e| modelfree::Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writes utf-8"))
}

fn to_json<T: Serialize>(rows: &[T]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
}

fn read_numeric_rows(path: &Path) -> CmdResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Data(io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(modelfree::Error::from)?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| modelfree::Error::NonNumericCell {
                        row: i + 1,
                        col: c + 1,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::Data(modelfree::Error::EmptyFile));
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> CmdResult<DMatrix<f64>> {
    let rows = read_numeric_rows(path)?;
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn read_vector(path: &Path) -> CmdResult<DVector<f64>> {
    let rows = read_numeric_rows(path)?;
    if rows.len() == 1 || rows.iter().all(|r| r.len() == 1) {
        Ok(DVector::from_iterator(rows.iter().map(Vec::len).sum(), rows.into_iter().flatten()))
    } else {
        Err(Failure::Data(modelfree::Error::DimensionMismatch(
            "r must be a single row or a single column".into(),
        )))
    }
}

fn format_wald(results: &[WaldResult], format: TableFormat) -> CmdResult<String> {
    Ok(match format {
        TableFormat::Csv => to_csv(results)?,
        TableFormat::Json => to_json(results),
        TableFormat::Text => {
            let rows: Vec<[String; 4]> = results
                .iter()
                .map(|w| [w.var_type.to_string(), fmt_number(w.statistic), w.df.to_string(), fmt_number(w.p_value)])
                .collect();
            let header = ["var.type", "chi2", "df", "p.value"];
            let widths: Vec<usize> = (0..4)
                .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                .collect();
            let mut s = String::new();
            let mut line = |cells: [&str; 4]| {
                let mut l = format!("{:<w$}", cells[0], w = widths[0]);
                for c in 1..4 {
                    l.push_str(&format!("  {:>w$}", cells[c], w = widths[c]));
                }
                s.push_str(&l);
                s.push('\n');
            };
            line(header);
            for r in &rows {
                line([&r[0], &r[1], &r[2], &r[3]]);
            }
            s
        }
    })
}

fn run_job(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let job = JobConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if job.is_randomized() && job.seed.is_none() && job.variance.iter().any(|v| v.seed.is_none()) {
        seed_notice(err);
    }
    let fit = fit_model(&job.data_path, &job.formula)?;
    let ves = comp_var(&fit, &job.requests())?;
    let summary = render_summary(&fit, &ves, job.level)?;
    let o = &job.outputs;
    if let Some(p) = &o.summary_txt {
        write_file(p, &summary, out)?;
    }
    if o.tidy_csv.is_some() || o.tidy_json.is_some() {
        let rows = tidy_rows(&fit, &ves, job.level)?;
        if let Some(p) = &o.tidy_csv {
            write_file(p, &tidy_csv(&rows)?, out)?;
        }
        if let Some(p) = &o.tidy_json {
            write_file(p, &(tidy_json(&rows)? + "\n"), out)?;
        }
    }
    if let Some(dir) = &o.plots_dir {
        write_file(&dir.join("classic.svg"), &render_svg(&lm_diag_plot(&lm_diag_data(&fit)?))?, out)?;
        let rows = tidy_rows(&fit, &ves, job.level)?;
        write_file(&dir.join("ci_width.svg"), &render_svg(&ci_width_plot(&rows)?)?, out)?;
        let qq = qq_sets(&fit, &ves)?;
        if !qq.is_empty() {
            write_file(&dir.join("qq.svg"), &render_svg(&qq_plot("Bootstrap Q-Q", &qq))?, out)?;
        }
    }
    Ok(())
}

/// Q-Q data for every coefficient of every resampling estimate.
fn qq_sets(fit: &FittedOls, ves: &[VarianceEstimate]) -> CmdResult<Vec<QqData>> {
    let mut sets = Vec::new();
    for ve in ves.iter().filter(|v| v.method.is_resampling()) {
        for (j, term) in fit.design.term_names.iter().enumerate() {
            sets.push(qq_data(ve, j, &format!("{}: {term}", ve.method))?);
        }
    }
    Ok(sets)
}

fn ci_width_plot(rows: &[CoefRow]) -> CmdResult<PlotSpec> {
    let widths = ci_width_comparison(rows)?;
    let mut terms: Vec<&str> = Vec::new();
    for w in &widths {
        if !terms.contains(&w.term.as_str()) {
            terms.push(&w.term);
        }
    }
    let position = |m: Method| Method::ALL.iter().position(|k| *k == m).unwrap() as f64 + 1.0;
    let label = Method::ALL
        .iter()
        .enumerate()
        .map(|(i, m)| format!("{}={}", i + 1, m))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(PlotSpec {
        title: Some(format!("Interval widths ({label})")),
        panels: terms
            .iter()
            .map(|t| {
                let (x, y): (Vec<f64>, Vec<f64>) = widths
                    .iter()
                    .filter(|w| w.term == *t)
                    .map(|w| (position(w.var_type), w.width))
                    .unzip();
                PlotPanel::new(*t, "method", "CI width").layer(Layer::Points { x, y })
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct QqRow<'a> {
    panel: &'a str,
    theoretical: f64,
    sample: f64,
}

#[derive(Serialize)]
struct ClassicRow<'a> {
    plot: &'a str,
    row: usize,
    x: f64,
    y: f64,
}

fn focal_index(design: &DesignMatrix, d: &DiagArgs) -> CmdResult<usize> {
    let name = d
        .focal
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("--kind {} needs --focal NAME", d.kind.file_stem().replace('_', "-"))))?;
    let j = design.term_index(name)?;
    if design.intercept && j == 0 {
        return Err(modelfree::Error::BadRegressor(name.into()).into());
    }
    Ok(j)
}

fn run_diag(d: &DiagArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let m = &d.model;
    let stem = d.kind.file_stem();
    let (csv, json, svg) = match d.kind {
        DiagKind::FocalSlope | DiagKind::Nonlinearity | DiagKind::FocalReweight => {
            let spec = parse_formula(&m.formula)?;
            let design = build_design(&spec, &read_data(&m.data)?)?;
            let fit = fit_ols(&design)?;
            let focal = match d.kind {
                DiagKind::Nonlinearity => None,
                _ => Some(focal_index(&design, d)?),
            };
            let grid = match d.grid {
                GridArg::Deciles => GridKind::Deciles,
                GridArg::Uniform => GridKind::Uniform(d.k),
            };
            if d.boot > 0 && m.seed.is_none() {
                seed_notice(err);
            }
            let grids = reweight_all(&design, grid, d.gamma, d.boot, m.seed.unwrap_or(0))?;
            for g in &grids {
                for w in &g.warnings {
                    writeln!(err, "warning: {}: {w}", g.regressor_name)?;
                }
            }
            let (title, panels) = match (d.kind, focal) {
                (DiagKind::FocalSlope, Some(k)) => (
                    format!("Focal slope: {}", design.term_names[k]),
                    focal_slope_data(&grids, &fit, k)?,
                ),
                (DiagKind::FocalReweight, Some(k)) => {
                    let g = grids.iter().find(|g| g.regressor == k).expect("one grid per regressor");
                    (
                        format!("Focal reweighting variable: {}", design.term_names[k]),
                        focal_reweighting_variable_data(g, &fit),
                    )
                }
                _ => ("Nonlinearity detection".to_string(), nonlinearity_detection_data(&grids, &fit)),
            };
            let rows = panel_rows(&panels);
            (to_csv(&rows)?, to_json(&rows), render_svg(&reweight_plot(&title, &panels))?)
        }
        DiagKind::Qq => {
            if !m.is_randomized() {
                return Err(Failure::Usage("--kind qq needs at least one resampling flag".into()));
            }
            let (fit, ves) = load(m, err)?;
            let sets = qq_sets(&fit, &ves)?;
            let rows: Vec<QqRow> = sets
                .iter()
                .flat_map(|q| {
                    q.theoretical_quantiles
                        .iter()
                        .zip(&q.sample_quantiles)
                        .map(|(t, s)| QqRow { panel: &q.coefficient, theoretical: *t, sample: *s })
                })
                .collect();
            (to_csv(&rows)?, to_json(&rows), render_svg(&qq_plot("Bootstrap Q-Q", &sets))?)
        }
        DiagKind::CiWidth => {
            let (fit, ves) = load(m, err)?;
            let rows = tidy_rows(&fit, &ves, m.level)?;
            let widths = ci_width_comparison(&rows)?;
            (to_csv(&widths)?, to_json(&widths), render_svg(&ci_width_plot(&rows)?)?)
        }
        DiagKind::Classic => {
            let fit = fit_model(&m.data, &m.formula)?;
            let series = lm_diag_data(&fit)?;
            let rows: Vec<ClassicRow> = series
                .iter()
                .flat_map(|s| {
                    (0..s.x.len()).map(move |i| ClassicRow { plot: &s.title, row: s.rows[i], x: s.x[i], y: s.y[i] })
                })
                .collect();
            (to_csv(&rows)?, to_json(&rows), render_svg(&lm_diag_plot(&series))?)
        }
    };
    fs::create_dir_all(&d.out)?;
    let path = |ext: &str| -> PathBuf { d.out.join(format!("{stem}.{ext}")) };
    write_file(&path("csv"), &csv, out)?;
    write_file(&path("json"), &json, out)?;
    write_file(&path("svg"), &svg, out)?;
    Ok(())
}
