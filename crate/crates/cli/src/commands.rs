use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bayeslink::diagnostics::{diagnose, ParameterDiagnostic};
use bayeslink::inference::{
    combine_mi, correlation_per_sample, pool_correlations, regress_per_sample, MiFlag,
};
use bayeslink::io::{read_links, read_trace, write_links, write_trace};
use bayeslink::sampler::run_chain;
use bayeslink::simulation::{kl_table, run_blocked, run_factorial, ResultRow, KL_GRID};
use bayeslink::{
    build_comparison_table, ChainConfig, ChainData, LinkageState, MiEstimate, MoveStats,
    PriorConfig, RecordFile, RegressionData, TraceSeries,
};
use serde::Serialize;

use crate::config::{load, resolve, AnalysisConfig, DesignConfig, Estimand, RunConfig};
use crate::error::CliError;

pub const ACF_LAGS: usize = 10;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.display().to_string(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Serialize)]
struct RunSummary {
    samples: usize,
    mean_links: f64,
    moves: MoveStats,
    regression_holds: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
    artifacts: [&'static str; 3],
    summary: RunSummary,
}

pub fn cmd_link(
    path: &Path,
    seed: Option<u64>,
    output: Option<PathBuf>,
    threads: usize,
) -> Result<(), CliError> {
    let mut cfg: RunConfig = load(path)?;
    let base = config_dir(path);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = match output {
        Some(o) => o,
        None => cfg
            .output
            .as_ref()
            .map(|o| resolve(&base, o))
            .unwrap_or_else(|| PathBuf::from("bayeslink-output")),
    };
    cfg.output = Some(out_dir.clone());
    cfg.validate()?;

    let block = cfg.blocking.as_deref();
    let file_a = RecordFile::read_csv(
        &resolve(&base, &cfg.file_a.path),
        &cfg.fields,
        &cfg.file_a.exclusive,
        block,
    )?;
    let file_b = RecordFile::read_csv(
        &resolve(&base, &cfg.file_b.path),
        &cfg.fields,
        &cfg.file_b.exclusive,
        block,
    )?;
    let table = build_comparison_table(&file_a, &file_b, &cfg.fields)?;
    let regression = if cfg.method.variant().is_some() {
        Some(RegressionData::new(
            file_a.exclusive.clone(),
            file_b.exclusive.clone(),
            file_b.exclusive_names.len(),
        )?)
    } else {
        None
    };
    let prior = PriorConfig::symmetric(
        table.levels(),
        cfg.prior.dirichlet,
        cfg.prior.alpha_pi,
        cfg.prior.beta_pi,
    );
    let mut chain = ChainConfig::new(
        cfg.chain.iterations,
        cfg.chain.burn_in,
        cfg.chain.kernel,
        cfg.method,
        cfg.seed,
    );
    chain.thin = cfg.chain.thin;
    chain.initial = cfg.chain.initial.clone();
    if let Some(w) = cfg.chain.warmup {
        chain.warmup = w;
    }
    let run = run_chain(
        &chain,
        ChainData {
            table: &table,
            regression: regression.as_ref(),
        },
        &prior,
    )?;

    let links_path = out_dir.join("links.csv");
    write_links(create(&links_path)?, &run, &file_a.ids, &file_b.ids)?;
    write_trace(create(&out_dir.join("trace.csv"))?, &run)?;
    let series: Vec<TraceSeries> = run
        .parameter_names
        .iter()
        .enumerate()
        .map(|(k, name)| TraceSeries {
            name: name.clone(),
            values: run.trace.iter().map(|r| r[k]).collect(),
        })
        .collect();
    write_json(
        &out_dir.join("diagnostics.json"),
        &diagnose(&series, ACF_LAGS),
    )?;

    let mean_links =
        run.samples.iter().map(|s| s.n_m() as f64).sum::<f64>() / run.samples.len().max(1) as f64;
    let manifest = Manifest {
        tool: "bayeslink",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        threads,
        config: &cfg,
        artifacts: ["links.csv", "trace.csv", "diagnostics.json"],
        summary: RunSummary {
            samples: run.samples.len(),
            mean_links,
            moves: run.moves,
            regression_holds: run.regression_holds,
        },
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!(
        "{} samples, {:.1} links on average; wrote {}",
        run.samples.len(),
        mean_links,
        out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TermResult {
    term: String,
    scale: &'static str,
    estimate: f64,
    lo: f64,
    hi: f64,
    total: f64,
    df: f64,
    m: usize,
    flags: Vec<MiFlag>,
    pooled: MiEstimate,
}

#[derive(Serialize)]
struct AnalysisReport {
    estimand: Estimand,
    outcome: String,
    samples: usize,
    skipped: usize,
    results: Vec<TermResult>,
}

fn id_index(file: &RecordFile) -> HashMap<&str, usize> {
    file.ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect()
}

pub fn cmd_analyze(path: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let cfg: AnalysisConfig = load(path)?;
    let base = config_dir(path);
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(CliError::Usage("level must lie in (0, 1)".into()));
    }
    if cfg.covariates.is_empty() {
        return Err(CliError::Usage("at least one covariate is required".into()));
    }
    if cfg.estimand == Estimand::Correlation && cfg.covariates.len() != 1 {
        return Err(CliError::Usage(
            "a correlation takes exactly one covariate".into(),
        ));
    }
    let links_path = resolve(&base, &cfg.links);
    let file_a = RecordFile::read_csv(
        &resolve(&base, &cfg.file_a),
        &[],
        std::slice::from_ref(&cfg.outcome),
        None,
    )?;
    let file_b = RecordFile::read_csv(&resolve(&base, &cfg.file_b), &[], &cfg.covariates, None)?;
    let links_file = File::open(&links_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", links_path.display())))?;
    let groups = read_links(links_file, &links_path.display().to_string())?;
    let (ia, ib) = (id_index(&file_a), id_index(&file_b));
    let mut states = Vec::with_capacity(groups.len());
    for (it, pairs) in &groups {
        let mut idx = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (Some(&i), Some(&j)) = (ia.get(a.as_str()), ib.get(b.as_str())) else {
                return Err(CliError::Usage(format!(
                    "{}: iteration {it} links unknown ids `{a}`, `{b}`",
                    links_path.display()
                )));
            };
            idx.push((i, j));
        }
        states.push(LinkageState::from_pairs(file_a.len(), file_b.len(), &idx)?);
    }

    let x_a = &file_a.exclusive;
    let q = cfg.covariates.len();
    let mut results = Vec::new();
    let usable;
    match cfg.estimand {
        Estimand::Correlation => {
            let per: Vec<_> = states
                .iter()
                .filter_map(|s| correlation_per_sample(x_a, &file_b.exclusive, s).ok())
                .filter(|c| !c.perfect)
                .collect();
            usable = per.len();
            let pooled = pool_correlations(&per, cfg.level)?;
            results.push(TermResult {
                term: cfg.covariates[0].clone(),
                scale: "fisher_z",
                estimate: pooled.estimate,
                lo: pooled.lo,
                hi: pooled.hi,
                total: pooled.z.total,
                df: pooled.z.df,
                m: pooled.z.m,
                flags: pooled.z.flags.clone(),
                pooled: pooled.z,
            });
        }
        Estimand::Slope => {
            let per: Vec<_> = states
                .iter()
                .filter_map(|s| regress_per_sample(x_a, &file_b.exclusive, q, s).ok())
                .collect();
            usable = per.len();
            for (c, name) in cfg.covariates.iter().enumerate() {
                let est: Vec<(f64, f64)> = per
                    .iter()
                    .map(|o| (o.slopes()[c], o.slope_variances()[c]))
                    .collect();
                let mi = combine_mi(&est, cfg.level)?;
                results.push(TermResult {
                    term: name.clone(),
                    scale: "identity",
                    estimate: mi.estimate,
                    lo: mi.lo,
                    hi: mi.hi,
                    total: mi.total,
                    df: mi.df,
                    m: mi.m,
                    flags: mi.flags.clone(),
                    pooled: mi,
                });
            }
        }
    }
    let report = AnalysisReport {
        estimand: cfg.estimand,
        outcome: cfg.outcome.clone(),
        samples: states.len(),
        skipped: states.len() - usable,
        results,
    };
    let out = output
        .or_else(|| cfg.output.as_ref().map(|o| resolve(&base, o)))
        .unwrap_or_else(|| config_dir(&links_path).join("mi.json"));
    write_json(&out, &report)?;
    eprintln!(
        "pooled {usable} of {} samples; wrote {}",
        states.len(),
        out.display()
    );
    Ok(())
}

fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    for r in rows {
        wr.serialize(r).map_err(bayeslink::Error::from)?;
    }
    wr.flush().map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn cmd_simulate(
    path: &Path,
    blocked: bool,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg: DesignConfig = load(path)?;
    let base = config_dir(path);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let rows = if blocked {
        let mut eps: Vec<f64> = Vec::new();
        for f in cfg.design() {
            if !eps.contains(&f.epsilon) {
                eps.push(f.epsilon);
            }
        }
        let mut rows = Vec::new();
        for e in eps {
            rows.extend(run_blocked(
                e,
                cfg.replications,
                &cfg.methods,
                &cfg.chain,
                cfg.seed,
            )?);
        }
        rows
    } else {
        run_factorial(
            &cfg.design(),
            cfg.replications,
            &cfg.methods,
            &cfg.chain,
            cfg.seed,
        )?
    };
    let out = output
        .or_else(|| cfg.output.as_ref().map(|o| resolve(&base, o)))
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    write_rows(&out, &rows)?;
    eprintln!("{} summary rows; wrote {}", rows.len(), out.display());
    Ok(())
}

fn write_kl<W: Write>(w: W) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["rho_m".to_string()];
    header.extend(KL_GRID.iter().map(|r| format!("{r:.2}")));
    wr.write_record(&header).map_err(bayeslink::Error::from)?;
    for (r, row) in KL_GRID.iter().zip(kl_table()) {
        let mut rec = vec![format!("{r:.2}")];
        rec.extend(row.iter().map(|v| format!("{v:.4}")));
        wr.write_record(&rec).map_err(bayeslink::Error::from)?;
    }
    wr.flush().map_err(bayeslink::Error::from)?;
    Ok(())
}

pub fn cmd_kl_table(output: Option<PathBuf>) -> Result<(), CliError> {
    match output {
        Some(p) => write_kl(create(&p)?),
        None => write_kl(std::io::stdout().lock()),
    }
}

pub fn cmd_diagnose(trace: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let f = File::open(trace)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", trace.display())))?;
    let series = read_trace(f, &trace.display().to_string())?;
    let report: Vec<ParameterDiagnostic> = diagnose(&series, ACF_LAGS);
    match output {
        Some(p) => write_json(&p, &report),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out).map_err(|source| CliError::Write {
                path: "stdout".into(),
                source,
            })
        }
    }
}
