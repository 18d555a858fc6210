//! Experiment dispatch and the single writer stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use svelab_core::analytic::{appendix_suite, SequenceCheck};
use svelab_core::diagnostics::{
    holder_scaling_study, limit_law_compare, psi_vanishing_study, qv_convergence, rate_study, run_ensemble,
    EnsembleSettings, LimitLawSettings,
};
use svelab_core::engine::SchemeSolver;
use svelab_core::kernels::{check_admissibility, kernel_order_report, singular_coefficient, GeometricGrid};
use svelab_core::paths::SeedSpec;
use svelab_core::stats::mean_estimate;
use svelab_core::SveError;

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::plot::{histogram, render, PlotError, PlotKind, PlotSpec, Series, Style};
use crate::report::{num, opt, Check, Report, RunManifest, StageTiming, Table, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] SveError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Everything an experiment produces before anything is written.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub result: Value,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, String)>,
}

impl Artifacts {
    fn new<T: Serialize>(result: &T) -> Self {
        Self { result: serde_json::to_value(result).expect("report serializes"), ..Self::default() }
    }
}

/// Report plus the bytes of every output file, keyed by file name.
#[derive(Debug, Clone)]
pub struct RunPayload {
    pub report: Report,
    pub files: BTreeMap<String, Vec<u8>>,
    pub stages: Vec<StageTiming>,
}

pub struct RunOutcome {
    pub report: Report,
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn ensemble(c: &ExperimentConfig) -> EnsembleSettings {
    EnsembleSettings { mode: c.mode, ..EnsembleSettings::new(c.horizon, c.refinement, c.paths, c.master_seed) }
}

fn simulate(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let model = c.model_spec()?;
    let kernel = c.kernel()?;
    let n = c.n_sequence[0];
    let solver = SchemeSolver::new(&model, &kernel, n, c.refinement, c.horizon)?.with_mode(c.mode);
    let d = model.d;
    let first = solver.coupled(SeedSpec::driving(c.master_seed, 0))?;
    let terminals = run_ensemble(0, c.paths, |p| {
        let run = solver.coupled(SeedSpec::driving(c.master_seed, p))?;
        Ok((run.coarse.terminal(), run.error.terminal()))
    })?;
    let summary: Vec<Value> = (0..d)
        .map(|i| {
            let x: Vec<f64> = terminals.iter().map(|t| t.0[i]).collect();
            let u: Vec<f64> = terminals.iter().map(|t| t.1[i]).collect();
            json!({"component": i, "terminal_state": mean_estimate(&x), "terminal_error": mean_estimate(&u)})
        })
        .collect();
    let mut a = Artifacts::new(&json!({
        "n": n,
        "refinement": c.refinement,
        "fine_steps": solver.fine_steps(),
        "paths": c.paths,
        "first_path_seed": first.coarse.seed,
        "components": summary,
    }));
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("X_{i}")));
    for (name, path) in [("reference", &first.reference), ("coarse", &first.coarse)] {
        let mut t = Table::new(&header);
        for (k, time) in path.times.iter().enumerate() {
            let mut row = vec![num(*time)];
            row.extend(path.states.row(k).iter().map(|v| num(*v)));
            t.push(row);
        }
        a.tables.push((format!("path_{name}.csv"), t));
    }
    let mut err_header = vec!["t".to_string()];
    err_header.extend((1..=d).map(|i| format!("U_{i}")));
    let mut t = Table::new(&err_header);
    for (k, time) in first.error.times.iter().enumerate() {
        let mut row = vec![num(*time)];
        row.extend(first.error.values.row(k).iter().map(|v| num(*v)));
        t.push(row);
    }
    a.tables.push(("error_path.csv".into(), t));
    let series = vec![
        Series::new(
            "reference X_1",
            first.reference.times.iter().zip(first.reference.states.column(0)).map(|(t, x)| (*t, *x)).collect(),
            Style { markers: false, ..Style::solid(COLORS[0]) },
        ),
        Series::new(
            format!("scheme n={n} X_1"),
            first.coarse.times.iter().zip(first.coarse.states.column(0)).map(|(t, x)| (*t, *x)).collect(),
            Style::dashed(COLORS[1]),
        ),
    ];
    let spec = PlotSpec { title: "Sample path".into(), x_label: "t".into(), y_label: "X".into(), ..PlotSpec::default() };
    a.plots.push(("path.svg".into(), render(&series, PlotKind::Line, &spec)?));
    let finite = first.coarse.states.iter().all(|v| v.is_finite());
    a.checks.push(Check::new("paths_finite", finite, "first path finite"));
    Ok(a)
}

fn rate(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let tol = c.tolerances.rate_slope.unwrap_or(0.1);
    let r = rate_study(&c.model_spec()?, &c.kernel()?, &c.n_sequence, &ensemble(c), tol)?;
    let mut a = Artifacts::new(&r);
    a.warnings = r.warnings.clone();
    let detail = match (r.exact_zero, r.slope) {
        (true, _) => "all errors vanish exactly (exact-zero case)".to_string(),
        (false, Some(s)) => format!("slope {s:.4}, target {:.4} +- {tol}", r.target_slope),
        (false, None) => "slope undefined".to_string(),
    };
    a.checks.push(Check::new("rate_slope", r.passed(), detail));
    let mut t = Table::new(&["n", "sup_mean", "sup_std_error", "terminal_mean", "terminal_std_error"]);
    for p in &r.points {
        t.push(vec![p.n.to_string(), num(p.sup_mean), num(p.sup_std_error), num(p.terminal_mean), num(p.terminal_std_error)]);
    }
    a.tables.push(("rate.csv".into(), t));
    let mut series = vec![
        Series::new("E sup|X - Xhat|", r.points.iter().map(|p| (p.n as f64, p.sup_mean)).collect(), Style::solid(COLORS[0])),
        Series::new("E|X_T - Xhat_T|", r.points.iter().map(|p| (p.n as f64, p.terminal_mean)).collect(), Style::solid(COLORS[2])),
    ];
    let mut metadata = BTreeMap::new();
    metadata.insert("fitted_slope".into(), json!(r.slope));
    metadata.insert("slope_std_error".into(), json!(r.slope_std_error));
    metadata.insert("slope_ci95".into(), json!(r.slope_ci95));
    metadata.insert("target_slope".into(), json!(r.target_slope));
    metadata.insert("tolerance".into(), json!(tol));
    metadata.insert("proxy_bias_bound".into(), json!(r.proxy_bias_bound));
    metadata.insert("refinement".into(), json!(r.refinement));
    let mut notes = vec![format!("target slope {:.3} +- {tol}", r.target_slope)];
    if let (Some(s), Some(se)) = (r.slope, r.slope_std_error) {
        notes.insert(0, format!("fitted slope {s:.3} +- {se:.3}"));
        let (n0, y0) = (r.points[0].n as f64, r.points[0].sup_mean);
        let fit: Vec<(f64, f64)> = r.points.iter().map(|p| (p.n as f64, y0 * (p.n as f64 / n0).powf(s))).collect();
        series.push(Series::new("fit", fit, Style::dashed(COLORS[1])));
    }
    notes.push(format!("proxy bias M^-H = {:.3}", r.proxy_bias_bound));
    let spec = PlotSpec {
        title: "Strong error of the coarse scheme".into(),
        x_label: "n".into(),
        y_label: "error".into(),
        metadata,
        notes,
    };
    a.plots.push(("rate.svg".into(), render(&series, PlotKind::Loglog, &spec)?));
    Ok(a)
}

fn qv(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let tol = c.tolerances.qv_relative.unwrap_or(0.1);
    let r = qv_convergence(&c.model_spec()?, &c.kernel()?, &c.n_sequence, &ensemble(c), c.t_eval(), tol)?;
    let mut a = Artifacts::new(&json!({
        "report": &r,
        "headline_relative_error": r.headline_relative_error(),
    }));
    a.warnings = r.warnings.clone();
    let d = r.d;
    for p in &r.points {
        let worst = p.relative_error.iter().flatten().fold(0.0f64, |m, e| m.max(*e));
        a.checks.push(Check::new(
            format!("qv_n{}", p.n),
            p.within_tolerance,
            format!("max relative error {worst:.4}, tolerance max({tol}, 3 SE)"),
        ));
        a.checks.push(Check::new(format!("qv_psd_n{}", p.n), p.psd, "estimated matrix symmetric PSD"));
    }
    if let (Some(first), Some(last)) = (r.points.first(), r.points.last()) {
        if r.points.len() > 1 {
            let ratio = c.tolerances.cross_ratio.unwrap_or(1.0);
            let ok = first
                .cross_l1
                .iter()
                .zip(&last.cross_l1)
                .all(|(x, y)| y < &(ratio * x) || (*x == 0.0 && *y == 0.0));
            a.checks.push(Check::new(
                "cross_variation_decay",
                ok,
                format!("L1 at n={} below {ratio} x L1 at n={}: {:?} vs {:?}", last.n, first.n, last.cross_l1, first.cross_l1),
            ));
        }
    }
    let mut t = Table::new(&[
        "n", "k1", "k2", "estimate", "estimate_std_error", "theory", "theory_std_error", "difference_std_error",
        "relative_error",
    ]);
    let mut cross = Table::new(&["n", "k", "cross_l1", "cross_l1_std_error"]);
    for p in &r.points {
        for k1 in 0..d {
            for k2 in 0..d {
                let e = k1 * d + k2;
                t.push(vec![
                    p.n.to_string(),
                    k1.to_string(),
                    k2.to_string(),
                    num(p.estimate[e]),
                    num(p.estimate_std_error[e]),
                    num(p.theory[e]),
                    num(p.theory_std_error[e]),
                    num(p.difference_std_error[e]),
                    opt(p.relative_error[e]),
                ]);
            }
        }
        for k in 0..d {
            cross.push(vec![p.n.to_string(), k.to_string(), num(p.cross_l1[k]), num(p.cross_l1_std_error[k])]);
        }
    }
    a.tables.push(("qv.csv".into(), t));
    a.tables.push(("cross_variation.csv".into(), cross));
    let series = vec![
        Series::new("estimate (1,1)", r.points.iter().map(|p| (p.n as f64, p.estimate[0])).collect(), Style::solid(COLORS[0])),
        Series::new("theory (1,1)", r.points.iter().map(|p| (p.n as f64, p.theory[0])).collect(), Style::dashed(COLORS[1])),
    ];
    let mut metadata = BTreeMap::new();
    metadata.insert("headline_relative_error".into(), json!(r.headline_relative_error()));
    metadata.insert("kappa".into(), json!(r.kappa));
    let spec = PlotSpec {
        title: format!("Quadratic variation at t = {}", r.t),
        x_label: "n".into(),
        y_label: "<V,V>_t".into(),
        metadata,
        notes: vec![format!("kappa(H)^2 = {:.6}", r.kappa * r.kappa)],
    };
    a.plots.push(("qv.svg".into(), render(&series, PlotKind::Line, &spec)?));
    Ok(a)
}

fn psi(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let tol = c.tolerances.psi_identity.unwrap_or(1e-8);
    let r = psi_vanishing_study(&c.model_spec()?, &c.kernel()?, &c.n_sequence, &ensemble(c), tol)?;
    let mut a = Artifacts::new(&r);
    a.warnings = r.warnings.clone();
    a.checks.push(Check::new(
        "psi_identity",
        r.max_identity_residual <= tol,
        format!("max residual {:e}, tolerance {tol:e}", r.max_identity_residual),
    ));
    for t in r.terms.iter().filter(|t| t.theoretical_slope.is_some()) {
        a.checks.push(Check::new(
            format!("{}_vanishing", t.term),
            t.all_zero || t.strictly_decreasing,
            format!("values {:?}, slope {:?}, theory {:?}", t.values, t.slope, t.theoretical_slope),
        ));
    }
    let mut table = Table::new(&["term", "n", "value", "slope", "theoretical_slope"]);
    let mut series = Vec::new();
    for (i, t) in r.terms.iter().enumerate() {
        for (n, v) in r.n_sequence.iter().zip(&t.values) {
            table.push(vec![t.term.clone(), n.to_string(), num(*v), opt(t.slope), opt(t.theoretical_slope)]);
        }
        series.push(Series::new(
            t.term.clone(),
            r.n_sequence.iter().zip(&t.values).map(|(n, v)| (*n as f64, *v)).collect(),
            Style::solid(COLORS[i % COLORS.len()]),
        ));
    }
    a.tables.push(("psi.csv".into(), table));
    let spec = PlotSpec {
        title: "n^H max_s ||psi_s||_L2".into(),
        x_label: "n".into(),
        y_label: "statistic".into(),
        ..PlotSpec::default()
    };
    a.plots.push(("psi.svg".into(), render(&series, PlotKind::Loglog, &spec)?));
    Ok(a)
}

fn limit_law(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let mut s = LimitLawSettings::new(
        c.n_sequence[0],
        c.refinement,
        c.paths,
        c.paths_limit.unwrap_or(c.paths),
        c.master_seed,
    );
    s.horizon = c.horizon;
    s.t = c.t_eval();
    s.limit_steps = c.limit_steps;
    s.mode = c.mode;
    s.variance_tolerance = c.tolerances.limit_variance.unwrap_or(0.15);
    let r = limit_law_compare(&c.model_spec()?, &c.kernel()?, &s)?;
    let mut a = Artifacts::new(&r);
    a.warnings = r.warnings.clone();
    for comp in &r.components {
        a.checks.push(Check::new(
            format!("variance_component{}", comp.component),
            comp.variance_relative_difference <= r.variance_tolerance
                || (comp.scheme_variance == 0.0 && comp.limit_variance == 0.0),
            format!(
                "Var U^n {:.5}, Var U {:.5}, relative difference {:.4} (tolerance {})",
                comp.scheme_variance, comp.limit_variance, comp.variance_relative_difference, r.variance_tolerance
            ),
        ));
        a.checks.push(Check::new(
            format!("split_half_ks_component{}", comp.component),
            comp.scheme_split_half.below_threshold && comp.limit_split_half.below_threshold,
            format!(
                "scheme {:.4} / limit {:.4} against threshold {:.4}",
                comp.scheme_split_half.statistic, comp.limit_split_half.statistic, comp.scheme_split_half.threshold
            ),
        ));
    }
    let mut t = Table::new(&[
        "component", "scheme_mean", "scheme_mean_std_error", "limit_mean", "limit_mean_std_error", "scheme_variance",
        "limit_variance", "variance_relative_difference", "ks_statistic", "ks_threshold",
    ]);
    for comp in &r.components {
        t.push(vec![
            comp.component.to_string(),
            num(comp.scheme_mean),
            num(comp.scheme_mean_std_error),
            num(comp.limit_mean),
            num(comp.limit_mean_std_error),
            num(comp.scheme_variance),
            num(comp.limit_variance),
            num(comp.variance_relative_difference),
            num(comp.ks.statistic),
            num(comp.ks.threshold),
        ]);
    }
    a.tables.push(("limit_law.csv".into(), t));
    let a_col: Vec<f64> = r.scheme_samples.iter().map(|row| row[0]).collect();
    let b_col: Vec<f64> = r.limit_samples.iter().map(|row| row[0]).collect();
    let (lo, hi) = a_col.iter().chain(&b_col).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let series = vec![
        histogram(&format!("U^n_t, n={}", r.n), &a_col, lo, hi, 40, Style::solid(COLORS[0])),
        histogram("U_t (limit)", &b_col, lo, hi, 40, Style::dashed(COLORS[1])),
    ];
    let spec = PlotSpec {
        title: format!("Marginal law of component 1 at t = {}", r.t),
        x_label: "value".into(),
        y_label: "density".into(),
        notes: vec![format!("KS {:.4} (5% threshold {:.4})", r.components[0].ks.statistic, r.components[0].ks.threshold)],
        ..PlotSpec::default()
    };
    a.plots.push(("limit_law.svg".into(), render(&series, PlotKind::Histogram, &spec)?));
    Ok(a)
}

fn kernel_check(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let kernel = c.kernel()?;
    let tol = c.tolerances.kernel_slope.unwrap_or(0.05);
    let adm = check_admissibility(&kernel, &GeometricGrid::default_for_admissibility(c.horizon), tol, c.horizon)?;
    let orders = kernel_order_report(&kernel, &GeometricGrid::default_for_orders(c.horizon), c.horizon, tol);
    let coefficients: Vec<Value> = kernel
        .components
        .iter()
        .map(|comp| match singular_coefficient(comp, c.horizon) {
            Ok(est) => json!({"ok": true, "estimate": est}),
            Err(e) => json!({"ok": false, "error": e.to_string()}),
        })
        .collect();
    let mut a = Artifacts::new(&json!({
        "admissible": adm.admissible,
        "admissibility": &adm,
        "orders": orders.as_ref().ok(),
        "orders_error": orders.as_ref().err().map(ToString::to_string),
        "coefficients": coefficients,
    }));
    let failures: Vec<String> = adm.components.iter().flat_map(|comp| comp.failures.clone()).collect();
    a.checks.push(Check::new(
        "admissible",
        adm.admissible,
        if failures.is_empty() { "all components pass".to_string() } else { failures.join("; ") },
    ));
    let mut t = Table::new(&["component", "quantity", "slope", "threshold", "pass"]);
    match &orders {
        Ok(o) => {
            a.checks.push(Check::new("kernel_orders", o.pass, format!("{} components", o.components.len())));
            for comp in &o.components {
                for q in &comp.quantities {
                    t.push(vec![comp.index.to_string(), q.name.clone(), num(q.slope), num(q.threshold), q.pass.to_string()]);
                }
            }
        }
        Err(e) => a.checks.push(Check::new("kernel_orders", false, e.to_string())),
    }
    a.tables.push(("kernel_orders.csv".into(), t));
    Ok(a)
}

fn appendix(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let settings = c.appendix.clone().unwrap_or_default();
    let r = appendix_suite(&settings)?;
    let mut a = Artifacts::new(&json!({"settings": &settings, "passed": r.passed(), "report": &r}));
    a.checks.push(Check::new(
        "prea_no_violations",
        r.prea.violations == 0,
        format!("{} tuples, {} skipped, {} violations", r.prea.tuples, r.prea.skipped, r.prea.violations),
    ));
    let summarize = |checks: &[SequenceCheck]| {
        let bad: Vec<String> =
            checks.iter().filter(|s| !s.passed()).map(|s| format!("(alpha={}, v={:.4}, s={:.4})", s.alpha, s.v, s.s)).collect();
        (bad.is_empty(), if bad.is_empty() { format!("{} cases pass", checks.len()) } else { bad.join(" ") })
    };
    let (ok_a, det_a) = summarize(&r.a_checks);
    let (ok_b, det_b) = summarize(&r.b_checks);
    a.checks.push(Check::new("a_n_sequences", ok_a, det_a));
    a.checks.push(Check::new("b_n_sequences", ok_b, det_b));
    let mut t = Table::new(&["integral", "alpha", "v", "s", "n", "value", "envelope"]);
    for (label, checks) in [("A", &r.a_checks), ("B", &r.b_checks)] {
        for s in checks {
            for (n, v) in s.ns.iter().zip(&s.values) {
                t.push(vec![label.into(), num(s.alpha), num(s.v), num(s.s), n.to_string(), num(*v), num(s.envelope)]);
            }
        }
    }
    a.tables.push(("appendix.csv".into(), t));
    Ok(a)
}

fn holder(c: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let r = holder_scaling_study(&c.model_spec()?, &c.kernel()?, c.n_sequence[0], &ensemble(c), c.p.unwrap_or(2))?;
    let mut a = Artifacts::new(&r);
    a.warnings = r.warnings.clone();
    a.checks.push(Check::new(
        "holder_slope",
        r.passed(),
        format!("slope {:?} against threshold {:.3} (Hp = {:.3})", r.slope, r.threshold, r.target_slope),
    ));
    let mut t = Table::new(&["lag", "moment"]);
    for (l, m) in r.lags.iter().zip(&r.moments) {
        t.push(vec![num(*l), num(*m)]);
    }
    a.tables.push(("holder.csv".into(), t));
    let mut metadata = BTreeMap::new();
    metadata.insert("fitted_slope".into(), json!(r.slope));
    metadata.insert("target_slope".into(), json!(r.target_slope));
    let spec = PlotSpec {
        title: format!("Increment moments, p = {}", r.p),
        x_label: "lag".into(),
        y_label: "E|dX|^p".into(),
        metadata,
        notes: vec![format!("slope {:.3}", r.slope.unwrap_or(f64::NAN))],
    };
    let series = vec![Series::new("moment", r.lags.iter().copied().zip(r.moments.iter().copied()).collect(), Style::solid(COLORS[0]))];
    a.plots.push(("holder.svg".into(), render(&series, PlotKind::Loglog, &spec)?));
    Ok(a)
}

/// Runs the experiment on the current rayon pool without touching the file system.
pub fn execute(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    config.validate()?;
    match config.experiment {
        Experiment::Simulate => simulate(config),
        Experiment::Rate => rate(config),
        Experiment::Qv => qv(config),
        Experiment::Psi => psi(config),
        Experiment::LimitLaw => limit_law(config),
        Experiment::KernelCheck => kernel_check(config),
        Experiment::AppendixCheck => appendix(config),
        Experiment::Holder => holder(config),
    }
}

/// Config as recorded in reports: the output location is not part of the experiment.
fn recorded(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { output_dir: None, ..config.clone() }
}

/// Runs on a pool of `threads` workers (all cores when `None`) and assembles all payload bytes.
pub fn run_payload(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunPayload, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    let start = Instant::now();
    let artifacts = pool.install(|| execute(config))?;
    let compute = start.elapsed().as_secs_f64();
    let rec = recorded(config);
    let passed = artifacts.checks.iter().all(|c| c.passed);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        experiment: config.experiment.name().to_string(),
        config_hash: rec.hash(),
        config: serde_json::to_value(&rec).expect("config serializes"),
        passed,
        checks: artifacts.checks,
        warnings: artifacts.warnings,
        result: artifacts.result,
    };
    let mut files = BTreeMap::new();
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    files.insert("report.json".to_string(), json);
    let mut checks = Table::new(&["check", "passed", "detail"]);
    for c in &report.checks {
        checks.push(vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]);
    }
    files.insert("checks.csv".to_string(), checks.to_csv());
    for (name, table) in artifacts.tables {
        files.insert(name, table.to_csv());
    }
    for (name, svg) in artifacts.plots {
        files.insert(name, svg.into_bytes());
    }
    let stages = vec![
        StageTiming { stage: "compute".into(), seconds: compute },
        StageTiming { stage: "assemble".into(), seconds: start.elapsed().as_secs_f64() - compute },
    ];
    Ok(RunPayload { report, files, stages })
}

/// Runs the experiment and writes report, tables, plots and manifest into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunOutcome, RunError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut payload = run_payload(config, threads)?;
    let write_start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io { path: out_dir.to_path_buf(), source })?;
    for (name, bytes) in &payload.files {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })?;
    }
    payload.stages.push(StageTiming { stage: "write".into(), seconds: write_start.elapsed().as_secs_f64() });
    let mut outputs: Vec<String> = payload.files.keys().cloned().collect();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: payload.report.experiment.clone(),
        config_hash: payload.report.config_hash.clone(),
        master_seed: config.master_seed,
        threads: threads.unwrap_or_else(rayon::current_num_threads),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        stages: payload.stages,
        outputs,
        passed: payload.report.passed,
    };
    let path = out_dir.join("manifest.json");
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })?;
    Ok(RunOutcome { report: payload.report, manifest, out_dir: out_dir.to_path_buf() })
}
