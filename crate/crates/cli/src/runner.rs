//! Dispatch a parsed experiment to the library and collect a run report.

use crate::config::{parse_condition, ExperimentConfig};
use crate::report::{Check, RunBody};
use etalab_core::bvp::{numerical_index, CylinderProblem, Tangential, STABLE_RANK_GAP};
use etalab_core::discretize::{assemble_tangential, OperatorSpec, TrigPolynomial};
use etalab_core::invariants::{
    check_lefschetz_congruence, hirzebruch_model_check, homotopy_scan, ind_tilde,
    random_anticommuting_pair, relative_eta, DefectProblem,
};
use etalab_core::kproj::{
    unnormalized_rotation_defect, verify_projection_family, Ingredients, P2Family,
};
use etalab_core::spectral::{eigendecompose, eta_regularized, spectral_flow};
use etalab_core::symbols::{
    builtins, check_shapiro_lopatinskii, homotopy_invertibility_sweep, shapiro_lopatinskii_oracle,
};
use etalab_core::util::{fnv1a_hex, SplitMix64};
use etalab_core::CMat;
use num_complex::Complex64;
use serde_json::{json, Value};
use std::sync::Arc;

/// Failure modes that abort a run (check failures do not: they produce a
/// failing report instead).
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Numerical-stability failure: exit code 3, no partial results.
    Numerical(String),
}

impl From<etalab_core::Error> for RunError {
    fn from(e: etalab_core::Error) -> Self {
        if e.is_numerical() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Config(e.to_string())
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

type RunResult = std::result::Result<RunBody, RunError>;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Run one experiment. Deterministic for a fixed config and seed.
pub fn run_config(cfg: &ExperimentConfig, seed: u64) -> RunResult {
    let digest = fnv1a_hex(format!("{}\nseed={seed}", cfg.canonical()).as_bytes());
    let (checks, payload) = match cfg.kind.as_str() {
        "eta" => run_eta(cfg)?,
        "spectral-flow" => run_flow(cfg)?,
        "index" => run_index(cfg)?,
        "defect" => run_defect(cfg)?,
        "lefschetz" => run_lefschetz(cfg)?,
        "hirzebruch" => run_hirzebruch(cfg, seed)?,
        "homotopy-scan" => run_homotopy(cfg)?,
        "kproj-verify" => run_kproj(cfg, seed)?,
        "sl-check" => run_sl_check(cfg)?,
        other => return Err(RunError::Config(format!("unknown kind '{other}'"))),
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(RunBody {
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.clone(),
        config_digest: digest,
        seed,
        checks,
        pass,
        payload,
    })
}

fn operator_spec(cfg: &ExperimentConfig) -> std::result::Result<OperatorSpec, RunError> {
    let section = cfg
        .operator_section()
        .map_err(RunError::Config)?;
    section.build().map_err(RunError::from)
}

fn run_eta(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let spec = operator_spec(cfg)?;
    let op = assemble_tangential(&spec)?;
    let eta = eta_regularized(&eigendecompose(&op)?)?;
    let section = cfg.eta.clone().unwrap_or(crate::config::EtaSection {
        expected: None,
        tolerance: 1e-6,
    });
    let mut checks = Vec::new();
    if let Some(expected) = section.expected {
        checks.push(Check::against("eta_value", eta.value, expected, section.tolerance));
    } else {
        checks.push(Check {
            name: "eta_value".into(),
            pass: true,
            value: eta.value,
            target: None,
            tolerance: section.tolerance,
        });
    }
    checks.push(Check::bound(
        "estimated_error",
        eta.estimated_error,
        section.tolerance,
    ));
    let payload = json!({
        "value": eta.value,
        "method": to_value(&eta.method),
        "estimated_error": eta.estimated_error,
        "kernel_dim": eta.kernel_dim,
        "spec_digest": fnv1a_hex(format!("{spec:?}").as_bytes()),
    });
    Ok((checks, payload))
}

fn run_flow(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg
        .flow
        .clone()
        .ok_or_else(|| RunError::Config("missing [flow] section".into()))?;
    let base = operator_spec(cfg)?;
    if base.rank != 1 {
        return Err(RunError::Config("spectral-flow paths are scalar".into()));
    }
    if section.samples < 2 {
        return Err(RunError::Config("need at least two samples".into()));
    }
    let mut path: Vec<CMat> = Vec::with_capacity(section.samples);
    for i in 0..section.samples {
        let a = section.a_start
            + (section.a_end - section.a_start) * i as f64 / (section.samples - 1) as f64;
        let mut terms: Vec<(i64, CMat)> =
            vec![(0, CMat::from_element(1, 1, Complex64::new(a, 0.0)))];
        for (&f, c) in base.potential.terms() {
            terms.push((f, c.clone()));
        }
        let spec = OperatorSpec::new(
            1,
            base.holonomy,
            base.fourier_cutoff,
            TrigPolynomial::new(1, terms)?,
        )?;
        path.push(assemble_tangential(&spec)?.matrix().clone());
    }
    let sf = spectral_flow(&path, section.eps)?;
    let mut checks = Vec::new();
    match section.expected {
        Some(expected) => checks.push(Check::against(
            "spectral_flow",
            sf as f64,
            expected as f64,
            0.0,
        )),
        None => checks.push(Check {
            name: "spectral_flow".into(),
            pass: true,
            value: sf as f64,
            target: None,
            tolerance: 0.0,
        }),
    }
    let payload = json!({
        "spectral_flow": sf,
        "samples": section.samples,
        "a_start": section.a_start,
        "a_end": section.a_end,
        "eps": section.eps,
    });
    Ok((checks, payload))
}

fn run_index(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg
        .index
        .clone()
        .ok_or_else(|| RunError::Config("missing [index] section".into()))?;
    let spec = operator_spec(cfg)?;
    let tangential = if section.lifted {
        Tangential::Lift {
            spec,
            sheets: cfg.covering.sheets,
        }
    } else {
        Tangential::Base(spec)
    };
    let problem = CylinderProblem {
        tangential,
        ramp_rate: section.ramp,
        length: cfg.grid.cylinder_length,
        start: parse_condition(&section.start, section.eps).map_err(RunError::Config)?,
        end: parse_condition(&section.end, section.eps).map_err(RunError::Config)?,
    };
    let result = numerical_index(&problem, cfg.grid.params(), cfg.tolerances.rank)?;
    if !result.stable {
        // An unstable index is an error state, never a result.
        return Err(RunError::Numerical(format!(
            "index did not stabilize under refinement: coarse {} vs fine {} \
             (rank gap {:.2e})",
            result.coarse.index, result.fine.index, result.rank_gap
        )));
    }
    let mut checks = vec![
        Check {
            name: "index".into(),
            pass: section
                .expected
                .map(|e| e == result.index)
                .unwrap_or(true),
            value: result.index as f64,
            target: section.expected.map(|e| e as f64),
            tolerance: 0.0,
        },
        Check::flag("stable_under_refinement", result.stable),
        Check::flag("rank_gap_above_1e4", result.rank_gap > STABLE_RANK_GAP),
    ];
    if section.oracle {
        let oracle = etalab_core::bvp::mode_index_oracle(&problem)?;
        checks.push(Check::against(
            "oracle_agreement",
            result.index as f64,
            oracle as f64,
            0.0,
        ));
    }
    let payload = to_value(&result);
    Ok((checks, payload))
}

fn run_defect(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let spec = operator_spec(cfg)?;
    let sheets = cfg.covering.sheets;
    // The BVP only needs a modest Fourier window; eta keeps the full one.
    let max_freq = spec
        .potential
        .terms()
        .keys()
        .map(|f| f.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    let bvp_cutoff = (2 * max_freq + 6).max(8);
    let problem = DefectProblem {
        sheets,
        base_spec: OperatorSpec::new(
            spec.rank,
            spec.holonomy,
            bvp_cutoff,
            spec.potential.clone(),
        )?,
        length: cfg.grid.cylinder_length,
        eta_cutoff: spec.fourier_cutoff,
        grid: cfg.grid.params(),
        rank_tol: cfg.tolerances.rank,
    };
    let report = ind_tilde(&problem)?;
    let (rel, rel_budget) = relative_eta(&spec, sheets)?;
    let mut checks = vec![
        Check {
            name: "ind_tilde".into(),
            pass: true,
            value: report.ind_tilde.representative,
            target: None,
            tolerance: cfg.tolerances.check,
        },
        Check::bound(
            "fractional_part_matches_relative_eta",
            report.fractional_part - rel.rem_euclid(1.0),
            1e-6,
        ),
        Check::bound("eta_error_budget", report.error_budget, cfg.tolerances.check),
    ];
    if let Some(expected) = cfg.defect.as_ref().and_then(|d| d.expected_relative_eta) {
        checks.push(Check::against("relative_eta", rel, expected, 1e-6));
    }
    let payload = json!({
        "report": to_value(&report),
        "relative_eta": rel,
        "relative_eta_budget": rel_budget,
    });
    Ok((checks, payload))
}

fn run_lefschetz(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg.lefschetz.clone().unwrap_or(crate::config::LefschetzSection {
        mode_window: 12,
    });
    let sheets = cfg.covering.sheets;
    let eta_cutoff = cfg
        .operator
        .as_ref()
        .map(|o| o.fourier_cutoff)
        .unwrap_or(48);
    let report = check_lefschetz_congruence(
        sheets,
        eta_cutoff,
        section.mode_window,
        cfg.tolerances.check,
    )?;
    let checks = vec![
        Check::bound(
            "congruence_distance_mod_n",
            report.congruence_distance,
            cfg.tolerances.check,
        ),
        Check::bound(
            "route_disagreement",
            report.route_disagreement,
            cfg.tolerances.check,
        ),
        Check::against(
            "rhs_value",
            report.rhs,
            -((sheets as f64) - 1.0) / 2.0,
            1e-8,
        ),
    ];
    Ok((checks, to_value(&report)))
}

fn run_hirzebruch(
    cfg: &ExperimentConfig,
    seed: u64,
) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg
        .hirzebruch
        .clone()
        .unwrap_or(crate::config::HirzebruchSection {
            trials: 100,
            max_half_dim: 8,
        });
    let mut rng = SplitMix64::new(seed);
    let mut failures = 0usize;
    let mut mismatches = 0usize;
    for _ in 0..section.trials {
        let half = 2 + rng.below(section.max_half_dim.saturating_sub(1).max(1));
        let kernel = rng.below(half.min(3) + 1);
        let (a, g, oracle) = random_anticommuting_pair(half, kernel, &mut rng);
        let report = hirzebruch_model_check(&a, &g)?;
        if !report.pass {
            failures += 1;
        }
        if report.index != oracle as i64 {
            mismatches += 1;
        }
    }
    let checks = vec![
        Check::bound("trials_failed", failures as f64, 0.0),
        Check::bound("oracle_mismatches", mismatches as f64, 0.0),
    ];
    let payload = json!({
        "trials": section.trials,
        "failures": failures,
        "oracle_mismatches": mismatches,
    });
    Ok((checks, payload))
}

fn run_homotopy(cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg
        .homotopy
        .clone()
        .ok_or_else(|| RunError::Config("missing [homotopy] section".into()))?;
    let eta_cutoff = cfg
        .operator
        .as_ref()
        .map(|o| o.fourier_cutoff)
        .unwrap_or(48);
    let report = homotopy_scan(
        cfg.covering.sheets,
        section.a_start,
        section.a_end,
        section.samples,
        eta_cutoff,
        cfg.grid.params(),
        cfg.tolerances.check,
    )?;
    let checks = vec![
        Check::bound("max_jump_defect", report.max_jump_defect, cfg.tolerances.check),
        Check::bound(
            "max_reduced_drift",
            report.max_reduced_drift,
            cfg.tolerances.check,
        ),
    ];
    Ok((checks, to_value(&report)))
}

fn run_kproj(cfg: &ExperimentConfig, seed: u64) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let section = cfg.kproj.clone().unwrap_or(crate::config::KprojSection {
        base_points: 4,
    });
    let sheets = cfg.covering.sheets;
    let cm = etalab_core::covering::build_covering(
        sheets,
        section.base_points,
        cfg.covering.circumference,
    )?;
    let boundary_ing = Ingredients::standard(1, 2)?;
    let cylinder_ing = boundary_ing.direct_image(sheets)?;

    // Phase family: unitary boundary symbol varying over the cover.
    let boundary_symbol = |theta: f64, _xi: f64| -> CMat {
        let mut s = CMat::zeros(2, 2);
        s[(1, 0)] = Complex64::from_polar(1.0, theta);
        s
    };
    let cm2 = cm.clone();
    let family = P2Family {
        ingredients: cylinder_ing,
        symbol: Arc::new(move |x, _t, xi| {
            let m = cm2.base().num_points();
            let step = cm2.base().circumference() / m as f64;
            let i = ((x / step).round() as usize) % m;
            let dim = 2 * cm2.sheets();
            let mut s = CMat::zeros(dim, dim);
            for (j, &p) in cm2.fiber(i).iter().enumerate() {
                let theta = cm2.cover().points()[p];
                let b = boundary_symbol(theta, xi);
                s.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&b);
            }
            s
        }),
    };
    let report = verify_projection_family(&boundary_ing, &boundary_symbol, &family, &cm)?;

    // Negative control: a non-unitary symbol in the raw formula.
    let mut rng = SplitMix64::new(seed);
    let mut bad = CMat::zeros(2, 2);
    bad[(1, 0)] = Complex64::new(1.0 + rng.range(0.5, 2.0), 0.4);
    let control_defect = unnormalized_rotation_defect(&boundary_ing, &bad, 0.7);

    let checks = vec![
        Check::bound(
            "max_idempotency_defect",
            report.max_idempotency_defect,
            etalab_core::kproj::IDEMPOTENCY_TOL,
        ),
        Check::bound(
            "max_self_adjointness_defect",
            report.max_self_adjointness_defect,
            etalab_core::kproj::IDEMPOTENCY_TOL,
        ),
        Check::bound("max_seam_jump", report.max_seam_jump, etalab_core::kproj::SEAM_TOL),
        Check::bound(
            "max_gluing_defect",
            report.max_gluing_defect,
            etalab_core::kproj::GLUING_TOL,
        ),
        Check::flag("rank_constant", report.rank_constant),
        Check::flag("negative_control_fails", control_defect > 1e-3),
    ];
    let payload = json!({
        "report": to_value(&report),
        "negative_control_defect": control_defect,
    });
    Ok((checks, payload))
}

fn run_sl_check(_cfg: &ExperimentConfig) -> std::result::Result<(Vec<Check>, Value), RunError> {
    let samples = builtins::unit_cosphere_samples(64);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (name, a, b, expected) in builtins::condition_pairs() {
        let report = check_shapiro_lopatinskii(&a, &b, &samples)?;
        let oracle = shapiro_lopatinskii_oracle(&a, &b, &samples)?;
        checks.push(Check::flag(
            &format!("{name}_checker_verdict"),
            report.elliptic == expected,
        ));
        checks.push(Check::flag(
            &format!("{name}_oracle_agrees"),
            oracle == report.elliptic,
        ));
        let mut sweep_min = f64::INFINITY;
        if expected {
            for dir in [1.0, -1.0] {
                let a_unit = a.eval(0.0, dir);
                let p = builtins::condition_projection(&b, 0.0, dir);
                sweep_min = sweep_min.min(homotopy_invertibility_sweep(&a_unit, &p, 101, 101)?);
            }
            checks.push(Check::flag(
                &format!("{name}_homotopy_invertible"),
                sweep_min > 1e-3,
            ));
        }
        rows.push(json!({
            "pair": name,
            "elliptic": report.elliptic,
            "expected": expected,
            "min_singular_value": report.min_singular_value,
            "witness": [report.witness.0, report.witness.1],
            "oracle": oracle,
            "sweep_min_singular_value": if sweep_min.is_finite() { Value::from(sweep_min) } else { Value::Null },
        }));
    }
    Ok((checks, json!({ "pairs": rows })))
}
