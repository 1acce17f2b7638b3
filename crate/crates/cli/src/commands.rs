use std::fs::{self, File};
use std::io::{self, BufWriter, Write};

use pmtp_core::crossfit::DRResult;
use pmtp_core::cv::{crossfit_with_cv, FixedProcedure};
use pmtp_core::ingest::{read_csv_path, write_csv};
use pmtp_core::parametric::{fit_g_param, fit_h_param, psi_parametric, KAPPA_PRINTED};
use pmtp_core::simulation::{find_scenario, generate, scenario_registry, true_psi, TruthSource};
use pmtp_core::{
    ColumnRoles, DGPConfig, Dataset, Error, EstimatorKind, FindingKind, HyperGrid, MissingModel, OutcomeSpec, Policy,
    Result, TreatmentSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::policy_spec::{describe, parse_policy};
use crate::report::{self, EstimateReport, Format, PolicyResult, TruthReport, SCHEMA_VERSION};
use crate::{EstimateArgs, GridArgs, ScenariosArgs, SimEstimator, SimulateArgs, TruthArgs};

const TRUTH_MC_FOR_OVERRIDES: u64 = 2_000_000;

fn io_err(e: io::Error) -> Error {
    Error::Io(e)
}

pub fn build_grid(g: &GridArgs) -> Result<HyperGrid> {
    let mut grid = if g.reduced_grid { HyperGrid::reduced() } else { HyperGrid::default() };
    let set = |dst: &mut Vec<f64>, src: &Option<Vec<f64>>| {
        if let Some(v) = src {
            *dst = v.clone();
        }
    };
    set(&mut grid.c1_list, &g.lm_h_list);
    set(&mut grid.c2_list, &g.lm_gh_list);
    set(&mut grid.c3_list, &g.lm_g_list);
    set(&mut grid.c4_list, &g.lm_hg_list);
    set(&mut grid.c5_list, &g.bw_ext_scale_list);
    if let Some(v) = g.bw_int_scale {
        grid.bw_inner_scale = v;
    }
    if let Some(v) = g.bw_int_fixed_scale {
        grid.bw_risk_scale = v;
    }
    if let Some(v) = g.theta {
        grid.theta = v;
    }
    grid.bw0_h = g.bw0_h.or(grid.bw0_h);
    grid.bw0_g = g.bw0_g.or(grid.bw0_g);
    grid.norm_bound = g.norm_bound.or(grid.norm_bound);
    grid.validate()?;
    Ok(grid)
}

fn check_findings(data: &Dataset) -> Result<()> {
    for f in data.validate() {
        match f.kind {
            FindingKind::NonPositiveWeight | FindingKind::NoCompleteCases => return Err(Error::Schema(f.message)),
            FindingKind::NotStandardized => {}
            _ => log::warn!("{}", f.message),
        }
    }
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    if a.k_folds < 3 {
        return Err(Error::InvalidArgument(format!("--k-folds must be at least 3, got {}", a.k_folds)));
    }
    let policies: Vec<Policy> = a.policies.iter().map(|s| parse_policy(s)).collect::<Result<_>>()?;
    let grid = build_grid(&a.grid)?;
    let roles = ColumnRoles {
        outcome: a.outcome.clone(),
        treatment: a.trt.clone(),
        covariates: a.covariates.iter().filter(|c| !c.is_empty()).cloned().collect(),
        nct: a.nct.clone(),
        nco: a.nco.clone(),
        weights: a.weights.clone(),
        s_member: (a.ind_s != "all").then(|| a.ind_s.clone()),
    };
    let (raw, ingest) = read_csv_path(&a.data, &roles)?;
    log::info!(
        "read {} rows, kept {} ({} with missing treatment)",
        ingest.rows_read,
        ingest.rows_kept,
        ingest.missing_treatment
    );
    check_findings(&raw)?;
    let data = raw.standardize_blocks()?;
    let strat = a.control_folds.then(|| data.a().to_vec());

    let mut results = Vec::with_capacity(policies.len());
    for (k, policy) in policies.iter().enumerate() {
        let label = format!("Policy_q^{}", k + 1);
        log::info!("{label}: {}", describe(policy));
        let s_ind = data.target_indicator(policy);
        let r = crossfit_with_cv(&data, policy, &s_ind, a.k_folds, &grid, a.seed, strat.as_deref()).map_err(|e| {
            log::error!("{label} failed");
            e
        })?;
        results.push(PolicyResult {
            label,
            policy: describe(policy),
            estimate: r.psi_hat,
            std_error: r.se,
            ci_lower: r.ci_lower,
            ci_upper: r.ci_upper,
            image_proportion: r.image_proportion,
            n: r.n,
            n_target: s_ind.iter().filter(|&&s| s).count(),
            n_effective: r.n_effective,
            folds: r.folds,
            influence: if a.emit_influence { r.influence } else { None },
        });
    }
    let rep = EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        estimator: "Proximal doubly-robust cross-fitted",
        n_rows_read: ingest.rows_read,
        n_obs: data.n(),
        n_dropped_incomplete: ingest.dropped_incomplete,
        n_missing_treatment: ingest.missing_treatment,
        n_in_population: data.s_member().iter().filter(|&&s| s).count(),
        k_folds: a.k_folds,
        seed: a.seed,
        stratified_folds: a.control_folds,
        weighted: data.is_two_phase(),
        results,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    report::write_estimate(&mut out, &rep, a.format).map_err(io_err)
}

struct SimSetup {
    name: String,
    config: DGPConfig,
    policy: Policy,
    s_only: bool,
    truth: f64,
}

fn resolve_setup(a: &SimulateArgs) -> Result<SimSetup> {
    let base = a.scenario.as_deref().map(find_scenario).transpose()?;
    let beta = match (&a.beta, &base) {
        (Some(b), _) => {
            let arr: [f64; 12] = b
                .as_slice()
                .try_into()
                .map_err(|_| Error::InvalidArgument(format!("--beta needs 12 values, got {}", b.len())))?;
            arr
        }
        (None, Some(s)) => s.config.beta,
        (None, None) => return Err(Error::InvalidArgument("give --scenario or a full model via --beta".into())),
    };
    let pick = |v: Option<f64>, from: Option<f64>, what: &str| {
        v.or(from).ok_or_else(|| Error::InvalidArgument(format!("custom model needs --{what}")))
    };
    let cfg0 = base.as_ref().map(|s| s.config);
    let config = DGPConfig::new(
        beta,
        pick(a.c, cfg0.map(|c| c.c), "c")?,
        pick(a.d, cfg0.map(|c| c.d), "d")?,
        pick(a.mu, cfg0.map(|c| c.mu), "mu")?,
        pick(a.gamma, cfg0.map(|c| c.gamma_coef), "gamma")?,
    )?;
    let policy = match (&a.policy, &base) {
        (Some(p), _) => parse_policy(p)?,
        (None, Some(s)) => s.policy.into(),
        (None, None) => return Err(Error::InvalidArgument("custom model needs --policy".into())),
    };
    let s_only = a.s_only || base.as_ref().is_some_and(|s| s.s_only);
    let customized = a.beta.is_some()
        || a.c.is_some()
        || a.d.is_some()
        || a.mu.is_some()
        || a.gamma.is_some()
        || a.policy.is_some()
        || (a.s_only && !base.as_ref().is_some_and(|s| s.s_only));
    let truth = match (a.truth, &base) {
        (Some(t), _) => t,
        (None, Some(s)) if !customized => s.true_psi,
        _ => {
            log::info!("computing the ground truth with {TRUTH_MC_FOR_OVERRIDES} draws");
            true_psi(&config, &policy, s_only, TRUTH_MC_FOR_OVERRIDES, a.seed)?.psi
        }
    };
    let name = match &base {
        Some(s) if !customized => s.name.clone(),
        Some(s) => format!("{}_custom", s.name),
        None => "custom".into(),
    };
    Ok(SimSetup { name, config, policy, s_only, truth })
}

#[derive(Debug, Serialize)]
struct SimRow {
    scenario: String,
    estimator: &'static str,
    n: usize,
    rep: usize,
    seed: u64,
    estimate: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    covered: u8,
    truth: f64,
}

fn estimate_replicate(
    d: &Dataset,
    setup: &SimSetup,
    a: &SimulateArgs,
    grid: &HyperGrid,
    seed: u64,
) -> Result<DRResult> {
    let s_ind = d.target_indicator(&setup.policy);
    match a.estimator {
        SimEstimator::Cv => {
            let std = d.standardize_blocks()?;
            crossfit_with_cv(&std, &setup.policy, &s_ind, a.k_folds, grid, seed, None)
        }
        SimEstimator::Fixed => {
            let std = d.standardize_blocks()?;
            let plan = pmtp_core::crossfit::make_folds(std.n(), a.k_folds, seed, None)?;
            let proc_ = FixedProcedure { grid: grid.clone(), use_complement: false };
            pmtp_core::crossfit::dr_crossfit(&std, &setup.policy, &s_ind, &plan, &proc_)
        }
        SimEstimator::Parametric => {
            let tp = setup.policy.as_tapered().ok_or_else(|| {
                Error::InvalidArgument("parametric bridges need a tapered or shift policy".into())
            })?;
            let h = fit_h_param(d, OutcomeSpec::Correct, KAPPA_PRINTED)?;
            let g = fit_g_param(d, tp, &s_ind, TreatmentSpec::Correct)?;
            psi_parametric(d, EstimatorKind::Dr, Some(&h), Some(&g), &setup.policy, &s_ind)
        }
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()));
    }
    let setup = resolve_setup(a)?;
    if setup.s_only {
        log::info!("target restricted to A in S");
    }
    let mut grid = build_grid(&a.grid)?;
    if a.estimator == SimEstimator::Fixed && (grid.h_configs().len() != 1 || grid.g_configs().len() != 1) {
        // middle of the reduced grid unless the user pinned every list
        let mid = HyperGrid::single(1e-3, 1.0, 1e-3, 1.0, 1.0);
        grid = HyperGrid { c1_list: mid.c1_list, c2_list: mid.c2_list, c3_list: mid.c3_list, c4_list: mid.c4_list, c5_list: mid.c5_list, ..grid };
    }
    let missing = a.missing_p0.map(MissingModel::case_cohort).transpose()?;
    fs::create_dir_all(&a.out_dir)?;

    let rows: Vec<SimRow> = (0..a.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = a.seed.wrapping_add(rep as u64);
            let d = generate(&setup.config, a.n, seed, missing.as_ref())?;
            if a.write_data {
                let path = a.out_dir.join(format!("{}_n{}_rep{:04}.csv", setup.name, a.n, rep));
                write_csv(&d, BufWriter::new(File::create(path)?), true)?;
            }
            let r = estimate_replicate(&d, &setup, a, &grid, seed).map_err(|e| {
                log::error!("replicate {rep} (seed {seed}) failed");
                e
            })?;
            Ok(SimRow {
                scenario: setup.name.clone(),
                estimator: match a.estimator {
                    SimEstimator::Cv => "cv",
                    SimEstimator::Fixed => "fixed",
                    SimEstimator::Parametric => "parametric",
                },
                n: a.n,
                rep,
                seed,
                estimate: r.psi_hat,
                se: r.se,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                covered: r.covers(setup.truth) as u8,
                truth: setup.truth,
            })
        })
        .collect::<Result<_>>()?;

    let path = a.out_dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path)?;
    if rows.is_empty() {
        w.write_record([
            "scenario", "estimator", "n", "rep", "seed", "estimate", "se", "ci_lower", "ci_upper", "covered", "truth",
        ])?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let k = rows.len() as f64;
    if rows.is_empty() {
        writeln!(out, "{}: 0 replications, wrote {}", setup.name, path.display()).map_err(io_err)?;
    } else {
        let mean = rows.iter().map(|r| r.estimate).sum::<f64>() / k;
        let cover = rows.iter().map(|r| r.covered as f64).sum::<f64>() / k;
        let mse = rows.iter().map(|r| r.se * r.se).sum::<f64>() / k;
        let emp = if rows.len() > 1 {
            rows.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            f64::NAN
        };
        writeln!(
            out,
            "{}: reps={} n={} mean={:.4} bias={:+.4} var_ratio={:.3} coverage={:.3}",
            setup.name,
            rows.len(),
            a.n,
            mean,
            mean - setup.truth,
            emp / mse,
            cover
        )
        .map_err(io_err)?;
        writeln!(out, "wrote {}", path.display()).map_err(io_err)?;
    }
    Ok(())
}

pub fn truth(a: &TruthArgs) -> Result<()> {
    let s = find_scenario(&a.scenario)?;
    let policy: Policy = s.policy.into();
    let t = true_psi(&s.config, &policy, s.s_only, a.n_mc, a.seed)?;
    let rep = TruthReport {
        schema_version: SCHEMA_VERSION,
        command: "truth",
        scenario: s.name.clone(),
        policy: describe(&policy),
        s_only: s.s_only,
        n_mc: a.n_mc,
        seed: a.seed,
        psi: t.psi,
        mc_se: t.mc_se,
        n_used: t.n_used,
        registered_psi: Some(s.true_psi),
        registered_source: Some(
            match s.source {
                TruthSource::Published => "published",
                TruthSource::MonteCarlo => "monte-carlo",
            }
            .into(),
        ),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    report::write_truth(&mut out, &rep, a.format).map_err(io_err)
}

#[derive(Serialize)]
struct ScenarioRow {
    name: String,
    policy: String,
    s_only: bool,
    true_psi: f64,
    source: &'static str,
    beta: [f64; 12],
}

pub fn scenarios(a: &ScenariosArgs) -> Result<()> {
    let rows: Vec<ScenarioRow> = scenario_registry()
        .into_iter()
        .map(|s| ScenarioRow {
            policy: describe(&s.policy.into()),
            name: s.name,
            s_only: s.s_only,
            true_psi: s.true_psi,
            source: match s.source {
                TruthSource::Published => "published",
                TruthSource::MonteCarlo => "monte-carlo",
            },
            beta: s.config.beta,
        })
        .collect();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "command": "scenarios",
                "scenarios": rows,
            }))
            .map_err(|e| Error::Schema(e.to_string()))?;
            writeln!(out).map_err(io_err)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["name", "policy", "s_only", "true_psi", "source"])?;
            for r in &rows {
                w.write_record([r.name.clone(), r.policy.clone(), r.s_only.to_string(), r.true_psi.to_string(), r.source.into()])?;
            }
            w.flush().map_err(io_err)
        }
        Format::Table => {
            for r in &rows {
                writeln!(out, "{:<20} {:<40} s_only={:<5} psi={} ({})", r.name, r.policy, r.s_only, r.true_psi, r.source)
                    .map_err(io_err)?;
            }
            Ok(())
        }
    }
}
