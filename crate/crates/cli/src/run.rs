//! Mode runners. Each writes its CSV, a gnuplot script, `summary.json`
//! and an echo of the manifest into the output directory.

use std::path::{Path, PathBuf};

use equidist_core::constants::{bound_evaluate, explicit_ledger, BoundLedger, ConstantsError, LedgerMode};
use equidist_core::geometry::{select_direction, tuple_stats, ConeDomain, Direction, ExpFloor, RootAction, TranslationTuple};
use equidist_core::modular::{
    fit_decay, horocycle_stats, twisted_correlation, twisted_correlation_fixed, DecayFit, HorocycleMeasure, ModularError,
    ModularObservable,
};
use equidist_core::selection::choose_window;
use equidist_core::wiener::FourierSeries;
use num_complex::Complex64;
use serde_json::json;

use crate::manifest::{ActionSpec, CorrelateSpec, FitSpec, LedgerSpec, Manifest, Mode, ScheduleSpec, Theorem};
use crate::output::{gnuplot_script, num, num_from_ln, optional, Artifacts};
use crate::verify::run_checks;
use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct Report {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub lines: Vec<String>,
}

/// Loads the manifest, checks it against the requested mode and runs it.
pub fn run_manifest(mode: Mode, path: &Path, options: &Options) -> Result<Report, CliError> {
    let (manifest, raw) = Manifest::load(path)?;
    if manifest.mode != mode {
        return Err(CliError::Schema(format!(
            "manifest mode \"{}\" does not match subcommand \"{}\"",
            manifest.mode.name(),
            mode.name()
        )));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run(&manifest, raw, &base, options)
}

pub fn run(manifest: &Manifest, raw: serde_json::Value, base: &Path, options: &Options) -> Result<Report, CliError> {
    let out_dir = options
        .out
        .clone()
        .or_else(|| manifest.output.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = options.seed.or(manifest.seed).unwrap_or(0);
    let mut artifacts = Artifacts::new(&out_dir)?;

    let mut echo = raw;
    echo["equidist_version"] = json!(env!("CARGO_PKG_VERSION"));
    echo["seed"] = json!(seed);

    let mut lines = Vec::new();
    let outcome = match manifest.mode {
        Mode::Ledger => run_ledger(spec(&manifest.ledger)?, &mut artifacts, &mut lines),
        Mode::Schedule => run_schedule(spec(&manifest.schedule)?, &mut artifacts, &mut lines),
        Mode::Correlate => {
            let mut spec = spec(&manifest.correlate)?.clone();
            if let Some(n) = options.nodes {
                spec.nodes = n;
                echo["correlate"]["nodes"] = json!(n);
            }
            run_correlate(&spec, &mut artifacts, &mut lines)
        }
        Mode::Fit => run_fit(spec(&manifest.fit)?, base, &mut artifacts, &mut lines),
        Mode::Verify => {
            let cases = manifest.verify.as_ref().map_or(500, |v| v.cases);
            run_verify(cases, seed, &mut artifacts, &mut lines)
        }
    };
    artifacts.json("manifest.json", &echo)?;
    outcome?;
    Ok(Report {
        out_dir,
        files: artifacts.written().to_vec(),
        lines,
    })
}

fn spec<T>(block: &Option<T>) -> Result<&T, CliError> {
    block.as_ref().ok_or_else(|| CliError::Schema("missing parameter block".into()))
}

fn constants_error(e: ConstantsError) -> CliError {
    match e {
        ConstantsError::InvalidParameter { .. }
        | ConstantsError::TableShape
        | ConstantsError::TableTooShort { .. }
        | ConstantsError::NotPowerLaw
        | ConstantsError::Json(_) => CliError::Schema(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

fn modular_error(e: ModularError) -> CliError {
    match e {
        ModularError::TooFewNodes(_)
        | ModularError::TimeOutOfRange(_)
        | ModularError::TimesMismatch { .. }
        | ModularError::NoObservables
        | ModularError::BadDensity
        | ModularError::ProfileSupport { .. }
        | ModularError::BadAmplitude(_)
        | ModularError::Wiener(_) => CliError::Schema(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

fn build_ledger(params: &equidist_core::constants::AssumptionParams, r_max: usize, theorem: Theorem) -> Result<BoundLedger, CliError> {
    if r_max == 0 {
        return Err(CliError::Schema("r_max must be at least 1".into()));
    }
    match theorem {
        Theorem::A => BoundLedger::theorem_a(params, r_max),
        Theorem::B => explicit_ledger(params, r_max),
    }
    .map_err(constants_error)
}

const LN10: f64 = std::f64::consts::LN_10;

fn run_ledger(spec: &LedgerSpec, artifacts: &mut Artifacts, lines: &mut Vec<String>) -> Result<(), CliError> {
    let ledger = build_ledger(&spec.params, spec.r_max, spec.theorem)?;
    let rows: Vec<Vec<String>> = ledger
        .rows
        .iter()
        .map(|row| {
            vec![
                row.r.to_string(),
                row.d_r.to_string(),
                num_from_ln(row.log_big_d),
                num(row.log_big_d / LN10),
                num(row.delta),
                optional(row.eps),
                num_from_ln(row.log_threshold),
            ]
        })
        .collect();
    artifacts.csv(
        "ledger.csv",
        &["r", "d_r", "D_r", "log10_D_r", "delta_r", "eps_r", "threshold"],
        &rows,
    )?;
    artifacts.text(
        "ledger.gp",
        &gnuplot_script("ledger.csv", "constant ledger", "r", &["log10_D_r", "delta_r"], false, false),
    )?;
    let explicit = ledger.explicit.as_ref().map(|e| {
        json!({
            "lambda": e.lambda,
            "gamma": e.gamma,
            "H1": e.h1,
            "H2": e.h2,
            "P_cap": e.p_cap,
        })
    });
    artifacts.json(
        "summary.json",
        &json!({
            "mode": "ledger",
            "theorem": match ledger.mode { LedgerMode::TheoremA => "a", LedgerMode::TheoremB => "b" },
            "r_max": ledger.r_max(),
            "c1": ledger.c1,
            "log_P1": ledger.log_p1,
            "log_Q": ledger.log_q,
            "base_case": {
                "d_1": ledger.base.d_1,
                "B_prime": ledger.base.b_prime,
                "D_prime_1": ledger.base.log_d_prime_1.exp(),
                "D_1": ledger.base.log_d_1.exp(),
                "delta_1": ledger.base.delta_1,
            },
            "explicit": explicit,
        }),
    )?;
    lines.push(format!("ledger: r = 1..{} written", ledger.r_max()));
    lines.push(format!("delta_1 = {}, D_1 = {}", num(ledger.base.delta_1), num(ledger.base.log_d_1.exp())));
    if let Some(e) = &ledger.explicit {
        lines.push(format!("lambda = {}, H_1 = {}, H_2 = {}", num(e.lambda), num(e.h1), num(e.h2)));
    }
    Ok(())
}

fn run_schedule(spec: &ScheduleSpec, artifacts: &mut Artifacts, lines: &mut Vec<String>) -> Result<(), CliError> {
    let (action, default_domain) = match &spec.action {
        ActionSpec::Horospherical { m, n } => {
            if *m == 0 || *n == 0 {
                return Err(CliError::Schema("horospherical action needs m, n >= 1".into()));
            }
            (RootAction::horospherical(*m, *n), ConeDomain::Horospherical { m: *m, n: *n })
        }
        ActionSpec::Roots {
            dim_t,
            roots,
            multiplicities,
        } => {
            let mult = multiplicities.clone().unwrap_or_else(|| vec![1; roots.len()]);
            let action = RootAction::new(*dim_t, roots.clone(), mult).map_err(|e| CliError::Schema(e.to_string()))?;
            (action, ConeDomain::Unconstrained)
        }
    };
    let domain = spec.domain.unwrap_or(default_domain);
    if let Some(theta) = spec.theta {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(CliError::Schema(format!("theta must lie in (0, 1), got {theta}")));
        }
    }
    let max_r = spec.tuples.iter().map(Vec::len).max().unwrap_or(0);
    let ledger = match &spec.params {
        Some(params) if max_r >= 2 => Some(build_ledger(params, max_r, Theorem::A)?),
        _ => None,
    };

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (index, entries) in spec.tuples.iter().enumerate() {
        let tuple = TranslationTuple::new(entries.clone(), domain).map_err(|e| CliError::Schema(format!("tuple {index}: {e}")))?;
        let stats = tuple_stats(&action, &tuple, &ExpFloor).map_err(|e| CliError::Schema(format!("tuple {index}: {e}")))?;
        let r = tuple.len();
        let mut row = vec![
            index.to_string(),
            r.to_string(),
            num(stats.rho_r.ln()),
            num(stats.min_separation.ln()),
            num(stats.max_separation.ln()),
            num(stats.delta_r.ln()),
        ];
        if r < 2 {
            row.extend(["single".to_string()]);
            row.extend(std::iter::repeat_n(String::new(), 12));
            rows.push(row);
            continue;
        }
        let selection = match select_direction(&action, &tuple).map_err(|e| CliError::Numeric(e.to_string()))? {
            Direction::Selected(s) => s,
            Direction::Degenerate => {
                row.extend(["degenerate".to_string()]);
                row.extend(std::iter::repeat_n(String::new(), 12));
                rows.push(row);
                continue;
            }
        };
        let log_m = selection.max_separation.ln();
        let theta = match (spec.theta, &ledger) {
            (Some(theta), _) => theta,
            (None, Some(ledger)) => {
                let eps = ledger.row(r).map_err(constants_error)?.eps.expect("r >= 2");
                (-log_m).max(-eps * stats.delta_r.ln()).exp()
            }
            (None, None) => (-0.5 * log_m).exp(),
        };
        let relabeling: Vec<String> = selection.relabeling.iter().map(usize::to_string).collect();
        let common = [
            selection.chosen_root.to_string(),
            selection.source.to_string(),
            selection.anchor.to_string(),
            relabeling.join(" "),
            num(theta),
        ];
        match choose_window(&selection, theta) {
            Ok(window) => {
                let ok = window.checks.all_ok();
                failures += usize::from(!ok);
                row.push(if ok { "ok" } else { "check_failed" }.to_string());
                row.extend(common);
                row.extend([
                    window.p.to_string(),
                    window.q.to_string(),
                    num(window.length()),
                    num(window.checks.leading),
                    num(window.checks.split),
                    num(window.checks.tail),
                    ok.to_string(),
                ]);
            }
            Err(e) => {
                row.push(format!("window_error: {e}"));
                row.extend(common);
                row.extend(std::iter::repeat_n(String::new(), 7));
            }
        }
        rows.push(row);
    }
    artifacts.csv(
        "schedule.csv",
        &[
            "index",
            "r",
            "log_rho_r",
            "log_m_r",
            "log_M_r",
            "log_Delta_r",
            "status",
            "root",
            "source_index",
            "anchor_index",
            "relabeling",
            "theta",
            "p",
            "q",
            "L",
            "L_w1",
            "L_wp",
            "L_wp1",
            "checks_ok",
        ],
        &rows,
    )?;
    artifacts.text(
        "schedule.gp",
        &gnuplot_script("schedule.csv", "window length against separation", "log_M_r", &["L"], false, true),
    )?;
    artifacts.json(
        "summary.json",
        &json!({ "mode": "schedule", "tuples": spec.tuples.len(), "check_failures": failures }),
    )?;
    lines.push(format!("schedule: {} tuples, {failures} window check failures", spec.tuples.len()));
    if failures > 0 {
        return Err(CliError::Numeric(format!("{failures} window checks failed")));
    }
    Ok(())
}

struct CorrelationRow {
    times: Vec<f64>,
    log_delta: f64,
    value: Complex64,
    mu_product: f64,
    abs_error: f64,
    nodes: usize,
}

fn run_correlate(spec: &CorrelateSpec, artifacts: &mut Artifacts, lines: &mut Vec<String>) -> Result<(), CliError> {
    let sigma = match &spec.sigma {
        None => HorocycleMeasure::haar(),
        Some(value) => {
            let series = FourierSeries::from_json(&value.to_string()).map_err(|e| CliError::Schema(format!("sigma: {e}")))?;
            HorocycleMeasure::new(series).map_err(|e| CliError::Schema(format!("sigma: {e}")))?
        }
    };
    let tuples = match (&spec.times, &spec.time_grid) {
        (Some(times), None) => times.clone(),
        (None, Some(grid)) => grid.tuples()?,
        _ => return Err(CliError::Schema("give exactly one of \"times\" and \"time_grid\"".into())),
    };
    if tuples.is_empty() {
        return Err(CliError::Schema("no time tuples".into()));
    }
    let r = tuples[0].len();
    if r == 0 || tuples.iter().any(|t| t.len() != r) {
        return Err(CliError::Schema("all time tuples must have the same positive length".into()));
    }
    let observables: Vec<ModularObservable> = match spec.observables.len() {
        1 => vec![spec.observables[0]; r],
        n if n == r => spec.observables.clone(),
        n => return Err(CliError::Schema(format!("{n} observables for tuples of length {r}"))),
    };
    let means: Vec<f64> = observables
        .iter()
        .map(|o| o.mean().map_err(modular_error))
        .collect::<Result<_, _>>()?;
    let mu_product: f64 = means.iter().product();
    // Limit of the twisted correlation: σ̂(−ξ) ∏ μ(φ_i).
    let limit = sigma.measure().coefficient(&[-spec.xi]) * mu_product;

    let mut rows = Vec::with_capacity(tuples.len());
    for times in &tuples {
        let value = if spec.fixed_nodes {
            twisted_correlation_fixed(&sigma, spec.xi, &observables, times, spec.nodes)
        } else {
            twisted_correlation(&sigma, spec.xi, &observables, times, spec.nodes)
        }
        .map_err(modular_error)?;
        let stats = horocycle_stats(times).map_err(modular_error)?;
        rows.push(CorrelationRow {
            times: times.clone(),
            log_delta: stats.delta_r.ln(),
            value: value.value,
            mu_product,
            abs_error: (value.value - limit).norm(),
            nodes: value.nodes,
        });
    }

    let mut header: Vec<String> = vec!["r".into()];
    header.extend((1..=r).map(|i| format!("t_{i}")));
    header.extend(
        ["Delta_add", "Delta_mult", "value_re", "value_im", "mu_product", "abs_error", "N_nodes"]
            .iter()
            .map(|s| s.to_string()),
    );
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut out = vec![r.to_string()];
            out.extend(row.times.iter().map(|&t| num(t)));
            out.extend([
                num(row.log_delta),
                num(row.log_delta.exp()),
                num(row.value.re),
                num(row.value.im),
                num(row.mu_product),
                num(row.abs_error),
                row.nodes.to_string(),
            ]);
            out
        })
        .collect();
    artifacts.csv("correlation.csv", &header_refs, &csv_rows)?;
    artifacts.text(
        "correlation.gp",
        &gnuplot_script("correlation.csv", "correlation error against Delta", "Delta_mult", &["abs_error"], true, true),
    )?;

    let fit = fit_rows(&rows);
    let bound_rows = bound_summary(spec, &sigma, &observables, &rows)?;
    let mut summary_rows = Vec::with_capacity(rows.len());
    let mut violations = 0usize;
    for (k, row) in rows.iter().enumerate() {
        let (bound, above, holds) = match &bound_rows {
            Some(b) => {
                let (bound, above) = b[k];
                let holds = bound >= row.abs_error;
                if !holds && above.unwrap_or(true) {
                    violations += 1;
                }
                (num(bound), above.map_or("n/a".to_string(), |a| a.to_string()), holds.to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        summary_rows.push(vec![k.to_string(), num(row.log_delta.exp()), num(row.abs_error), bound, above, holds]);
    }
    artifacts.csv(
        "summary.csv",
        &["row", "Delta_mult", "abs_error", "bound", "above_threshold", "bound_holds"],
        &summary_rows,
    )?;
    let fit_json = match &fit {
        Ok(f) => json!({ "exponent": f.exponent, "prefactor": f.prefactor, "residual": f.residual }),
        Err(reason) => json!({ "skipped": reason }),
    };
    artifacts.json(
        "summary.json",
        &json!({
            "mode": "correlate",
            "r": r,
            "rows": rows.len(),
            "xi": spec.xi,
            "mu_product": mu_product,
            "wiener_norm": sigma.wiener_norm(),
            "fit": fit_json,
            "bound_violations": bound_rows.as_ref().map(|_| violations),
        }),
    )?;
    lines.push(format!("correlate: {} rows, r = {r}", rows.len()));
    match fit {
        Ok(f) => lines.push(format!("fitted decay exponent {} (prefactor {})", num(f.exponent), num(f.prefactor))),
        Err(reason) => lines.push(format!("fit skipped: {reason}")),
    }
    if bound_rows.is_some() {
        lines.push(format!("bound violations (soft check): {violations}"));
    }
    Ok(())
}

fn fit_rows(rows: &[CorrelationRow]) -> Result<DecayFit, String> {
    let (deltas, errors): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|row| row.abs_error > 0.0)
        .map(|row| (row.log_delta.exp(), row.abs_error))
        .unzip();
    fit_decay(&deltas, &errors).map_err(|e| e.to_string())
}

type BoundRow = (f64, Option<bool>);

fn bound_summary(
    spec: &CorrelateSpec,
    sigma: &HorocycleMeasure,
    observables: &[ModularObservable],
    rows: &[CorrelationRow],
) -> Result<Option<Vec<BoundRow>>, CliError> {
    let Some(bound) = &spec.bound else {
        return Ok(None);
    };
    let r = observables.len();
    let ledger = build_ledger(&bound.params, r, bound.theorem)?;
    let degree = ledger.row(r).map_err(constants_error)?.d_r;
    let s_norms: Vec<f64> = observables
        .iter()
        .map(|o| match o {
            ModularObservable::Constant { value } => value.abs(),
            ModularObservable::Eisenstein { profile } => profile.derivative_norm(degree, bound.norm_points),
        })
        .collect();
    rows.iter()
        .map(|row| {
            let delta = equidist_core::LogScalar::from_ln(row.log_delta);
            let e = bound_evaluate(&ledger, r, delta, sigma.wiener_norm(), &s_norms).map_err(constants_error)?;
            Ok((e.bound, e.above_threshold))
        })
        .collect::<Result<Vec<_>, CliError>>()
        .map(Some)
}

fn read_fit_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    if !path.exists() {
        return Err(CliError::Schema(format!("fit input {} does not exist", path.display())));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("fit input lacks column {name}")))
    };
    let (di, ei) = (col("Delta_mult")?, col("abs_error")?);
    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| CliError::Schema(format!("fit input: bad number {:?}: {e}", &record[i])))
        };
        deltas.push(parse(di)?);
        errors.push(parse(ei)?);
    }
    Ok((deltas, errors))
}

fn run_fit(spec: &FitSpec, base: &Path, artifacts: &mut Artifacts, lines: &mut Vec<String>) -> Result<(), CliError> {
    let (deltas, errors) = match (&spec.input, &spec.deltas, &spec.errors) {
        (Some(input), None, None) => read_fit_csv(&base.join(input))?,
        (None, Some(d), Some(e)) => (d.clone(), e.clone()),
        _ => return Err(CliError::Schema("give either \"input\" or both \"deltas\" and \"errors\"".into())),
    };
    if deltas.len() != errors.len() {
        return Err(CliError::Schema("deltas and errors differ in length".into()));
    }
    let fit = fit_decay(&deltas, &errors).map_err(|e| match e {
        ModularError::FitTooFewPoints(_) | ModularError::FitNonPositive(_) => CliError::Schema(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    })?;
    let rows: Vec<Vec<String>> = deltas
        .iter()
        .zip(&errors)
        .map(|(&d, &e)| vec![num(d), num(e), num(fit.prefactor * d.powf(-fit.exponent))])
        .collect();
    artifacts.csv("fit.csv", &["Delta_mult", "abs_error", "fitted"], &rows)?;
    artifacts.text(
        "fit.gp",
        &gnuplot_script("fit.csv", "decay fit", "Delta_mult", &["abs_error", "fitted"], true, true),
    )?;
    artifacts.json(
        "summary.json",
        &json!({
            "mode": "fit",
            "points": deltas.len(),
            "exponent": fit.exponent,
            "prefactor": fit.prefactor,
            "residual": fit.residual,
        }),
    )?;
    lines.push(format!(
        "fit: exponent {} prefactor {} residual {}",
        num(fit.exponent),
        num(fit.prefactor),
        num(fit.residual)
    ));
    Ok(())
}

fn run_verify(cases: usize, seed: u64, artifacts: &mut Artifacts, lines: &mut Vec<String>) -> Result<(), CliError> {
    if cases == 0 {
        return Err(CliError::Schema("verify.cases must be positive".into()));
    }
    let checks = run_checks(cases, seed);
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.to_string(),
                c.cases.to_string(),
                c.failures.to_string(),
                num(c.max_defect),
                num(c.tolerance),
                c.pass().to_string(),
            ]
        })
        .collect();
    artifacts.csv("verify.csv", &["check", "cases", "failures", "max_defect", "tolerance", "pass"], &rows)?;
    artifacts.text(
        "verify.gp",
        "# gnuplot script; run from the output directory\nset datafile separator ','\nset style data histograms\nset style fill solid\nset logscale y\nset xtics rotate by -30\nset terminal pngcairo size 900,600\nset output 'verify.png'\nplot 'verify.csv' using (column('max_defect')+1e-300):xtic(1) title 'max defect', '' using (column('tolerance')):xtic(1) title 'tolerance'\n",
    )?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass()).map(|c| c.name).collect();
    artifacts.json(
        "summary.json",
        &json!({ "mode": "verify", "seed": seed, "cases": cases, "failed": failed }),
    )?;
    for c in &checks {
        lines.push(format!(
            "{:<26} {} ({} cases, max defect {:.3e})",
            c.name,
            if c.pass() { "pass" } else { "FAIL" },
            c.cases,
            c.max_defect
        ));
    }
    if !failed.is_empty() {
        return Err(CliError::Numeric(format!("verify checks failed: {}", failed.join(", "))));
    }
    Ok(())
}
