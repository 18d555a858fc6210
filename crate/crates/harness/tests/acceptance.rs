//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use serde_json::Value;
use statrs::function::gamma::gamma;
use svelab::{run_payload, ExperimentConfig, Report};
use svelab_core::engine::{kappa, DiagonalKernel, ModelSpec, SchemeSolver};
use svelab_core::kernels::{singular_coefficient, KernelComponent};
use svelab_core::paths::SeedSpec;

type Outcome = Result<(bool, String), String>;

fn config(name: &str) -> Result<ExperimentConfig, String> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "acceptance", &format!("{name}.json")]
        .iter()
        .collect();
    ExperimentConfig::from_file(&path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Runs a config once; criteria sharing a configuration reuse its report.
fn report(name: &str) -> Result<Report, String> {
    static CACHE: Mutex<BTreeMap<String, Report>> = Mutex::new(BTreeMap::new());
    if let Some(r) = CACHE.lock().unwrap().get(name) {
        return Ok(r.clone());
    }
    let c = config(name)?;
    let r = run_payload(&c, None).map(|p| p.report).map_err(|e| format!("{name}: {e}"))?;
    CACHE.lock().unwrap().insert(name.to_string(), r.clone());
    Ok(r)
}

fn check<'a>(r: &'a Report, name: &str) -> Result<&'a svelab::Check, String> {
    r.checks.iter().find(|c| c.name == name).ok_or_else(|| format!("{}: no check named {name}", r.experiment))
}

fn f(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("expected a number, found {v}"))
}

fn c1_kappa() -> Outcome {
    let k = kappa(0.5).map_err(|e| e.to_string())?;
    Ok(((k - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12, format!("kappa(0.5) = {k:.15}")))
}

fn c2_classical_qv() -> Outcome {
    let r = report("c2_qv_classical")?;
    let p = &r.result["report"]["points"][0];
    let est = f(&p["estimate"][0])?;
    let se = f(&p["estimate_std_error"][0])?;
    let rel = (est - 0.5).abs() / 0.5;
    Ok((rel <= 0.05, format!("estimate {est:.5} +- {se:.5} vs 0.5, relative error {rel:.4}")))
}

fn c3_nonconstant_qv() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, h) in [("c3_qv_h040", 0.4), ("c3_qv_h050", 0.5), ("c3_qv_h070", 0.7)] {
        let r = report(name)?;
        let c = check(&r, "qv_n512")?;
        ok &= c.passed;
        parts.push(format!("H={h}: {}", c.detail));
    }
    Ok((ok, parts.join("; ")))
}

fn c4_cross_variation() -> Outcome {
    let r = report("c3_qv_h050")?;
    let points = r.result["report"]["points"].as_array().ok_or("missing points")?;
    let at = |n: u64| -> Result<f64, String> {
        let p = points.iter().find(|p| p["n"].as_u64() == Some(n)).ok_or(format!("no point at n={n}"))?;
        f(&p["cross_l1"][0])
    };
    let (coarse, fine) = (at(16)?, at(256)?);
    Ok((fine < 0.5 * coarse, format!("mean |<V,W>_1| {coarse:.4} at n=16, {fine:.4} at n=256")))
}

fn c5_rate() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["c5_rate_h050", "c5_rate_h070"] {
        let r = report(name)?;
        let c = check(&r, "rate_slope")?;
        ok &= c.passed;
        parts.push(c.detail.clone());
    }
    Ok((ok, parts.join("; ")))
}

fn c6_exact_cancellation() -> Outcome {
    let model = ModelSpec::constant(vec![0.2, -0.4], 2, vec![0.3, -0.7], vec![1.0, 0.5, -0.2, 0.8]);
    let kernels = [
        DiagonalKernel::fractional(2, 1.0, 0.3),
        DiagonalKernel::fractional(2, 1.0, 0.5),
        DiagonalKernel::fractional(2, 1.0, 0.7),
        KernelComponent::tempered(1.0, 0.4, 1.0).and_then(|k| DiagonalKernel::new(vec![k, k])),
    ];
    let mut cases = 0;
    let mut worst = 0.0f64;
    for kernel in kernels {
        let kernel = kernel.map_err(|e| e.to_string())?;
        for n in [4, 16, 64] {
            for m in [1, 2, 8, 32] {
                let solver = SchemeSolver::new(&model, &kernel, n, m, 1.0).map_err(|e| e.to_string())?;
                for p in 0..4 {
                    let run = solver.coupled(SeedSpec::driving(6, p)).map_err(|e| e.to_string())?;
                    worst = run.error.values.iter().fold(worst, |w, v| w.max(v.abs()));
                }
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-12, format!("max |U^n| = {worst:.1e} over {cases} kernel/n/M cases, 4 paths each")))
}

fn c7_psi() -> Outcome {
    let r = report("c7_psi_tempered")?;
    let residual = f(&r.result["max_identity_residual"])?;
    let terms: Vec<String> = r
        .checks
        .iter()
        .filter(|c| c.name.ends_with("_vanishing"))
        .map(|c| format!("{} {}", c.name, if c.passed { "decreasing" } else { "not decreasing" }))
        .collect();
    Ok((r.passed && residual < 1e-8, format!("identity residual {residual:.2e}; {}", terms.join(", "))))
}

fn c8_limit_law() -> Outcome {
    let r = report("c8_limit_law")?;
    let details: Vec<String> = r.checks.iter().map(|c| format!("{} {}", c.name, c.detail)).collect();
    Ok((r.passed, details.join("; ")))
}

fn c9_kernels() -> Outcome {
    let frac = report("c9_kernel_fractional")?;
    let temp = report("c9_kernel_tempered")?;
    let bad = report("c9_kernel_inconsistent")?;
    let bad_admissible = check(&bad, "admissible")?.passed;
    let h = 0.3;
    let c = 1.0 / gamma(h + 0.5);
    let comp = KernelComponent::fractional(c, h).map_err(|e| e.to_string())?;
    let est = singular_coefficient(&comp, 1.0).map_err(|e| e.to_string())?;
    let gap = (est.extrapolated - c).abs();
    let ok = frac.passed && temp.passed && !bad_admissible && gap <= 1e-6;
    Ok((
        ok,
        format!(
            "fractional {}, tempered {}, inconsistent power kernel rejected {}, extrapolated c off by {gap:.1e}",
            frac.passed, temp.passed, !bad_admissible
        ),
    ))
}

fn c10_appendix() -> Outcome {
    let r = report("c10_appendix")?;
    let details: Vec<String> = r.checks.iter().map(|c| c.detail.clone()).collect();
    Ok((r.passed, details.join("; ")))
}

fn c11_determinism() -> Outcome {
    let c = config("c2_qv_classical")?;
    let one = run_payload(&c, Some(1)).map_err(|e| e.to_string())?;
    let eight = run_payload(&c, Some(8)).map_err(|e| e.to_string())?;
    let same = one.files == eight.files;
    Ok((same, format!("{} output files compared, 1 vs 8 threads", one.files.len())))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, c1_kappa),
        (2, c2_classical_qv),
        (3, c3_nonconstant_qv),
        (4, c4_cross_variation),
        (5, c5_rate),
        (6, c6_exact_cancellation),
        (7, c7_psi),
        (8, c8_limit_law),
        (9, c9_kernels),
        (10, c10_appendix),
        (11, c11_determinism),
    ];
    let mut failures = 0;
    for (id, run) in criteria {
        let start = Instant::now();
        let (passed, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id}: {} {detail} ({secs:.1}s)", if passed { "PASS" } else { "FAIL" });
        failures += usize::from(!passed);
    }
    println!("acceptance: {} of 11 criteria pass", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
