//! `presto bench`: run the benchmark protocol on a registered dataset and
//! write trial results (JSON lines), a summary table (CSV), learning curves,
//! and structured-versus-standard comparisons.

use std::fmt::Write as _;
use std::path::PathBuf;

use presto_bench::{
    aggregate, learning_curve, load, lookup, registry, run_trials, tune_max_depth,
    variant_comparison, DatasetConfig, Summary, TrialResult, TrialSpec, COVERAGE_LEVELS,
};
use presto_core::LossConfig;

use crate::config::resolve_output_dir;
use crate::errors::{CliError, Result};
use crate::iofs::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Variant {
    Structured,
    Standard,
}

pub struct BenchArgs {
    pub dataset: Option<String>,
    pub list: bool,
    pub trials: Option<usize>,
    pub seed: u64,
    pub depth: Option<usize>,
    pub variant: Variant,
    pub dump_densities: bool,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub learning_curve: Option<usize>,
    pub compare_variants: bool,
    pub freeze_partitions: bool,
    pub num_classifiers: Option<usize>,
    pub max_trees: Option<usize>,
}

fn fmt_se(se: Option<f64>) -> String {
    match se {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

fn summary_csv(entries: &[&Summary], max_depth: usize) -> String {
    let mut out = String::from(
        "dataset,n_rows,trials,variant,max_depth,nll_mean,nll_se,rmse_mean,rmse_se,\
         cov20,cov50,cov80,cov90,cov95,support_violations\n",
    );
    for s in entries {
        write!(
            out,
            "{},{},{},{},{max_depth},{},{},{},{}",
            s.dataset,
            s.n_rows,
            s.n_trials,
            s.variant,
            s.nll.mean,
            fmt_se(s.nll.se),
            s.rmse.mean,
            fmt_se(s.rmse.se),
        )
        .unwrap();
        for level in &s.coverage {
            write!(out, ",{}", level.mean).unwrap();
        }
        writeln!(out, ",{}", s.support_violations).unwrap();
    }
    out
}

fn trials_jsonl(results: &[TrialResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        let line = serde_json::to_string(r)
            .map_err(|e| CliError::Internal(format!("result serialization: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn print_summary(s: &Summary, max_depth: usize) {
    println!(
        "{} [{}] trials={} depth={} nll={:.4} (se {}) rmse={:.4} coverage@{:?}={:?} violations={}",
        s.dataset,
        s.variant,
        s.n_trials,
        max_depth,
        s.nll.mean,
        fmt_se(s.nll.se),
        s.rmse.mean,
        COVERAGE_LEVELS,
        s.coverage.iter().map(|c| (c.mean * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        s.support_violations,
    );
}

fn resolve_depth(
    entry: &DatasetConfig,
    dataset: &presto_bench::Dataset,
    base: &presto_core::PrestoConfig,
    args: &BenchArgs,
) -> Result<usize> {
    if let Some(depth) = args.depth {
        return Ok(depth);
    }
    if let Some(depth) = entry.max_depth {
        return Ok(depth);
    }
    let (depth, scores) = tune_max_depth(dataset, base, args.seed)?;
    println!(
        "tuned max_depth={depth} on trial 0 (candidates: {})",
        scores
            .iter()
            .map(|(d, nll)| format!("{d}:{nll:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(depth)
}

pub fn run(args: &BenchArgs) -> Result<()> {
    if args.list {
        println!("registered datasets:");
        for entry in registry() {
            println!(
                "  {:<14} trials={:<3} source={}",
                entry.id,
                entry.default_trials,
                match entry.source {
                    presto_bench::DatasetSource::UciFile { file } => file.to_string(),
                    presto_bench::DatasetSource::Synthetic(_) => "synthetic".to_string(),
                }
            );
        }
        return Ok(());
    }
    let id = args
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::Usage("--dataset is required (or use --list)".into()))?;
    let entry = lookup(id)?;
    let dataset = load(&entry, &args.data_dir)?;

    let mut base = entry.presto.clone();
    if args.variant == Variant::Standard {
        base.loss = LossConfig::StandardCe;
    }
    if let Some(m) = args.num_classifiers {
        base.num_classifiers = m;
    }
    if let Some(t) = args.max_trees {
        base.gbdt.max_trees = t;
    }
    let trials = args.trials.unwrap_or(entry.default_trials);
    let out_dir = resolve_output_dir(&args.out_dir);
    let depth = resolve_depth(&entry, &dataset, &base, args)?;

    if let Some(m_max) = args.learning_curve {
        let spec = TrialSpec {
            freeze_partitions: args.freeze_partitions,
            ..TrialSpec::new(id, 0, args.seed, depth)
        };
        let curve = learning_curve(&dataset, &base, &spec, m_max)?;
        let mut csv = String::from("m,nll\n");
        for (m, nll) in &curve {
            writeln!(csv, "{m},{nll}").unwrap();
        }
        let path = out_dir.join(format!("{id}_curve.csv"));
        atomic_write(&path, csv.as_bytes())?;
        println!("wrote {}", path.display());
        if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
            println!("nll m={}: {:.4} -> m={}: {:.4}", first.0, first.1, last.0, last.1);
        }
        return Ok(());
    }

    if args.compare_variants {
        let cmp = variant_comparison(
            &dataset,
            &entry.presto,
            id,
            trials,
            args.seed,
            depth,
            args.freeze_partitions,
        )?;
        let mut csv = String::from(
            "dataset,n_rows,trials,nll_structured,nll_structured_se,nll_standard,nll_standard_se,nll_diff\n",
        );
        writeln!(
            csv,
            "{id},{},{trials},{},{},{},{},{}",
            dataset.n_rows(),
            cmp.structured.nll.mean,
            fmt_se(cmp.structured.nll.se),
            cmp.standard.nll.mean,
            fmt_se(cmp.standard.nll.se),
            cmp.nll_difference,
        )
        .unwrap();
        let path = out_dir.join(format!("{id}_variants.csv"));
        atomic_write(&path, csv.as_bytes())?;
        atomic_write(
            &out_dir.join(format!("{id}_structured_trials.jsonl")),
            trials_jsonl(&cmp.structured_results)?.as_bytes(),
        )?;
        atomic_write(
            &out_dir.join(format!("{id}_standard_trials.jsonl")),
            trials_jsonl(&cmp.standard_results)?.as_bytes(),
        )?;
        print_summary(&cmp.structured, depth);
        print_summary(&cmp.standard, depth);
        println!(
            "structured - standard nll difference: {:+.4}",
            cmp.nll_difference
        );
        println!("wrote {}", path.display());
        return Ok(());
    }

    let results = run_trials(
        &dataset,
        &base,
        id,
        trials,
        args.seed,
        depth,
        args.freeze_partitions,
        args.dump_densities,
    )?;
    let summary = aggregate(id, dataset.n_rows(), &results);
    let variant = &summary.variant;
    let jsonl_path = out_dir.join(format!("{id}_{variant}_trials.jsonl"));
    atomic_write(&jsonl_path, trials_jsonl(&results)?.as_bytes())?;
    let csv_path = out_dir.join(format!("{id}_{variant}_summary.csv"));
    atomic_write(&csv_path, summary_csv(&[&summary], depth).as_bytes())?;
    print_summary(&summary, depth);
    println!("wrote {}", jsonl_path.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}
