use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_blocked_scenario, generate_files, metrics_from_pairs, mix_seed, simulation_fields,
    BlockedScenario, ModelForm, SimulatedData, SimulationFactors,
};
use crate::comparison::{build_comparison_table, ComparisonTable};
use crate::error::Result;
use crate::inference::{correlation_per_sample, pool_correlations};
use crate::model::PriorConfig;
use crate::sampler::{run_chain, ChainConfig, ChainData, Kernel, Method};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationChain {
    pub iterations: usize,
    pub burn_in: usize,
    pub kernel: Kernel,
}

impl Default for SimulationChain {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 100,
            kernel: Kernel::AdaptiveMultinomial,
        }
    }
}

/// Posterior summaries of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub n_m: f64,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    /// Pooled correlation estimate and whether its interval covers the target.
    pub rho_hat: Option<f64>,
    pub covered: Option<bool>,
}

/// Runs every method on one simulated data set. Metrics are averaged over
/// the emitted posterior samples.
pub fn run_replication(
    data: &SimulatedData,
    table: &ComparisonTable,
    methods: &[Method],
    chain: &SimulationChain,
    seed: u64,
    rho_true: f64,
) -> Result<Vec<MethodOutcome>> {
    let reg = data.regression_data();
    let x_b1 = data.x_b1();
    let prior = PriorConfig::<f64>::flat(table.levels());
    let mut out = Vec::with_capacity(methods.len());
    for (k, &method) in methods.iter().enumerate() {
        let mut config = ChainConfig::new(
            chain.iterations,
            chain.burn_in,
            chain.kernel,
            method,
            mix_seed(seed, &[k as u64 + 1]),
        );
        config.thin = 1;
        let run = run_chain(
            &config,
            ChainData {
                table,
                regression: Some(&reg),
            },
            &prior,
        )?;
        let n = run.samples.len() as f64;
        let (mut nm, mut tpr, mut ppv, mut f1) = (0.0, 0.0, 0.0, 0.0);
        let mut corr = Vec::with_capacity(run.samples.len());
        for s in &run.samples {
            let m = metrics_from_pairs(
                s.links.iter().map(|&(i, j)| (i as usize, j as usize)),
                &data.truth,
            );
            nm += m.n_m as f64;
            tpr += m.tpr;
            ppv += m.ppv;
            f1 += m.f1;
            let state = s.state(table.n_a(), table.n_b());
            if let Ok(c) = correlation_per_sample(&data.x_a, &x_b1, &state) {
                corr.push(c);
            }
        }
        let pooled = pool_correlations(&corr, 0.95).ok();
        out.push(MethodOutcome {
            method,
            n_m: nm / n,
            tpr: tpr / n,
            ppv: ppv / n,
            f1: f1 / n,
            rho_hat: pooled.as_ref().map(|p| p.estimate),
            covered: pooled
                .as_ref()
                .map(|p| p.lo <= rho_true && rho_true <= p.hi),
        });
    }
    Ok(out)
}

/// One summary line per (cell, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub epsilon: f64,
    pub method: String,
    pub p: usize,
    pub beta_m: f64,
    pub n_m: f64,
    pub n_m_sd: f64,
    pub tpr: f64,
    pub tpr_sd: f64,
    pub ppv: f64,
    pub ppv_sd: f64,
    pub f1: f64,
    pub f1_sd: f64,
    pub bias: f64,
    pub bias_sd: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub sigma: f64,
    pub model: String,
    pub replications: usize,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn summarize(
    factors: &SimulationFactors,
    model: &str,
    method: Method,
    outcomes: &[&MethodOutcome],
    rho_true: f64,
) -> ResultRow {
    let col =
        |f: fn(&MethodOutcome) -> f64| -> Vec<f64> { outcomes.iter().map(|o| f(o)).collect() };
    let (n_m, n_m_sd) = mean_sd(&col(|o| o.n_m));
    let (tpr, tpr_sd) = mean_sd(&col(|o| o.tpr));
    let (ppv, ppv_sd) = mean_sd(&col(|o| o.ppv));
    let (f1, f1_sd) = mean_sd(&col(|o| o.f1));
    let errs: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.rho_hat.map(|r| r - rho_true))
        .collect();
    let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
    let (bias, bias_sd) = mean_sd(&abs);
    let rmse = if errs.is_empty() {
        f64::NAN
    } else {
        (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
    };
    let cov: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.covered.map(|c| f64::from(u8::from(c))))
        .collect();
    ResultRow {
        epsilon: factors.epsilon,
        method: method.name().into(),
        p: factors.p,
        beta_m: factors.beta_m,
        n_m,
        n_m_sd,
        tpr,
        tpr_sd,
        ppv,
        ppv_sd,
        f1,
        f1_sd,
        bias,
        bias_sd,
        rmse,
        coverage: mean_sd(&cov).0,
        sigma: factors.sigma,
        model: model.into(),
        replications: outcomes.len(),
    }
}

/// Runs `replications` data sets per design cell, in parallel across
/// (cell, replication) jobs. Seeds derive from `root_seed`, the cell index and
/// the replication index, so results do not depend on scheduling.
pub fn run_factorial(
    design: &[SimulationFactors],
    replications: usize,
    methods: &[Method],
    chain: &SimulationChain,
    root_seed: u64,
) -> Result<Vec<ResultRow>> {
    for f in design {
        f.validate()?;
    }
    let specs = simulation_fields();
    let jobs: Vec<(usize, usize)> = (0..design.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<Vec<MethodOutcome>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let factors = &design[c];
            let seed = mix_seed(root_seed, &[c as u64, r as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = generate_files(factors, &mut rng)?;
            let table = build_comparison_table(&data.file_a, &data.file_b, &specs)?;
            run_replication(
                &data,
                &table,
                methods,
                chain,
                seed,
                factors.generating_rho(),
            )
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (c, factors) in design.iter().enumerate() {
        for (k, &method) in methods.iter().enumerate() {
            let outs: Vec<&MethodOutcome> = results[c * replications..(c + 1) * replications]
                .iter()
                .map(|r| &r[k])
                .collect();
            rows.push(summarize(
                factors,
                factors.model.name(),
                method,
                &outs,
                factors.generating_rho(),
            ));
        }
    }
    Ok(rows)
}

/// The blocked scenario at error rate `epsilon`.
pub fn run_blocked(
    epsilon: f64,
    replications: usize,
    methods: &[Method],
    chain: &SimulationChain,
    root_seed: u64,
) -> Result<Vec<ResultRow>> {
    let specs = simulation_fields();
    let rho = BlockedScenario::generating_rho();
    let results: Vec<Vec<MethodOutcome>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let seed = mix_seed(root_seed, &[u64::MAX, r as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sc = generate_blocked_scenario(epsilon, &mut rng)?;
            let table = build_comparison_table(&sc.data.file_a, &sc.data.file_b, &specs)?;
            run_replication(&sc.data, &table, methods, chain, seed, rho)
        })
        .collect::<Result<_>>()?;
    let factors = SimulationFactors {
        n_a: 500,
        n_b: 1000,
        n_m: 250,
        p: 1,
        sigma: 0.1,
        beta_m: super::BLOCKED_BETA_M,
        beta_u: super::BLOCKED_DELTA_U,
        epsilon,
        model: ModelForm::Linear,
    };
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let outs: Vec<&MethodOutcome> = results.iter().map(|r| &r[k]).collect();
            summarize(&factors, "blocked", m, &outs, rho)
        })
        .collect())
}
