//! CSV tables. Floats carry 17 significant digits; missing values are `NA`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use weighted_ensemble::estimators::{bootstrap_variance, relative_variance_constant, replicate_variance, VarianceReport};
use weighted_ensemble::rng::{Lane, Streams};

use crate::config::ExperimentConfig;
use crate::experiment::Replicate;

pub const MISSING: &str = "NA";

pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn maybe(x: Option<f64>) -> String {
    x.map(float).unwrap_or_else(|| MISSING.to_string())
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub const REPLICATE_HEADER: [&str; 9] = [
    "replicate",
    "seed",
    "estimate",
    "final_weight_sum",
    "iat_variance",
    "iat_lag",
    "iat_clamped",
    "extinct_at",
    "config_hash",
];

pub const SUMMARY_HEADER: [&str; 15] = [
    "id",
    "replicates",
    "particles",
    "steps",
    "step_length",
    "mean",
    "replicate_variance",
    "bootstrap_variance",
    "bootstrap_lo",
    "bootstrap_hi",
    "bootstrap_resamples",
    "median_iat_variance",
    "relative_constant",
    "relative_constant_iat",
    "config_hash",
];

/// Statistics across replicates.
#[derive(Debug, Clone)]
pub struct Summary {
    pub mean: f64,
    pub replicate: Option<VarianceReport>,
    pub bootstrap: Option<VarianceReport>,
    pub median_iat: f64,
    pub relative_constant: Option<f64>,
    pub relative_constant_iat: Option<f64>,
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn summarize(config: &ExperimentConfig, replicates: &[Replicate]) -> Summary {
    let estimates: Vec<f64> = replicates.iter().map(|r| r.estimate).collect();
    let mean = weighted_ensemble::estimators::time_average(&estimates);
    let replicate = replicate_variance(&estimates).ok();
    let bootstrap = if estimates.len() >= 2 {
        let mut rng = Streams::new(config.seed).stream(Lane::Bootstrap, 0, 0);
        bootstrap_variance(&estimates, config.analysis.bootstrap_resamples, estimates.len(), &mut rng).ok()
    } else {
        None
    };
    let median_iat = median(&replicates.iter().map(|r| r.iat.variance).collect::<Vec<_>>());
    let time = config.run.steps as f64 * config.step_length();
    let constant = |v: f64| relative_variance_constant(v, config.run.particles, time, mean).ok();
    Summary {
        mean,
        relative_constant: replicate.as_ref().and_then(|r| constant(r.variance)),
        relative_constant_iat: constant(median_iat),
        replicate,
        bootstrap,
        median_iat,
    }
}

pub fn replicate_rows(replicates: &[Replicate], hash: &str) -> Vec<Vec<String>> {
    replicates
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.seed.to_string(),
                float(r.estimate),
                float(r.final_weight_sum),
                float(r.iat.variance),
                r.iat.auxiliary.to_string(),
                r.iat.clamped.to_string(),
                r.extinct_at.map(|t| t.to_string()).unwrap_or_else(|| MISSING.into()),
                hash.to_string(),
            ]
        })
        .collect()
}

pub fn summary_row(config: &ExperimentConfig, s: &Summary, hash: &str) -> Vec<String> {
    let interval = s.bootstrap.as_ref().and_then(|b| b.interval);
    vec![
        config.id.clone(),
        config.replicates.to_string(),
        config.run.particles.to_string(),
        config.run.steps.to_string(),
        float(config.step_length()),
        float(s.mean),
        maybe(s.replicate.as_ref().map(|r| r.variance)),
        maybe(s.bootstrap.as_ref().map(|b| b.variance)),
        maybe(interval.map(|i| i.0)),
        maybe(interval.map(|i| i.1)),
        s.bootstrap
            .as_ref()
            .map(|b| b.auxiliary.to_string())
            .unwrap_or_else(|| MISSING.into()),
        float(s.median_iat),
        maybe(s.relative_constant),
        maybe(s.relative_constant_iat),
        hash.to_string(),
    ]
}

pub struct Written {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
}

/// Writes `<id>.csv`, `<id>_summary.csv` and the `<id>_timings.csv` sidecar.
pub fn write_run(out: &Path, config: &ExperimentConfig, replicates: &[Replicate]) -> Result<(Written, Summary)> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let hash = config.hash();
    let written = Written {
        results: out.join(format!("{}.csv", config.id)),
        summary: out.join(format!("{}_summary.csv", config.id)),
        timings: out.join(format!("{}_timings.csv", config.id)),
    };
    write_table(&written.results, &REPLICATE_HEADER, &replicate_rows(replicates, &hash))?;
    let summary = summarize(config, replicates);
    write_table(&written.summary, &SUMMARY_HEADER, &[summary_row(config, &summary, &hash)])?;
    let timings: Vec<Vec<String>> = replicates
        .iter()
        .map(|r| vec![r.id.to_string(), format!("{:.6}", r.seconds)])
        .collect();
    write_table(&written.timings, &["replicate", "seconds"], &timings)?;
    Ok((written, summary))
}

/// Weight-sum trajectories: `<id>_weights.csv` (long form) and `<id>_weights_summary.csv`.
pub fn write_weights(out: &Path, config: &ExperimentConfig, replicates: &[Replicate]) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let total = config.run.burn_in + config.run.steps;
    let steps: Vec<usize> = (0..total).step_by(config.stride).collect();
    let value = |r: &Replicate, t: usize| r.weight_sums.as_ref().and_then(|w| w.get(t).copied()).unwrap_or(0.0);

    let long = out.join(format!("{}_weights.csv", config.id));
    let file = File::create(&long).with_context(|| format!("creating {}", long.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "replicate,step,weight_sum")?;
    for r in replicates {
        for &t in &steps {
            writeln!(w, "{},{},{}", r.id, t, float(value(r, t)))?;
        }
    }
    w.flush()?;

    let summary = out.join(format!("{}_weights_summary.csv", config.id));
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|&t| {
            let xs: Vec<f64> = replicates.iter().map(|r| value(r, t)).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 {
                Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            } else {
                None
            };
            vec![t.to_string(), float(mean), maybe(sd), float(median(&xs))]
        })
        .collect();
    write_table(&summary, &["step", "mean", "sd", "median"], &rows)?;
    Ok((long, summary))
}
