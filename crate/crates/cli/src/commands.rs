//! Subcommand drivers. Each returns the text the binary prints on stdout;
//! structured results go to files in the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chainttt_core::evalbench::{self, Variant};
use chainttt_core::policy::feature_dim;
use chainttt_core::{envsim, ttt, PolicyParams, RunConfig};

use crate::artifacts::{self, JsonlWriter, SummaryRow, TaggedMetrics};
use crate::config_file;
use crate::{CliError, Result};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Raw `key=value` overrides, applied in order before `seed`.
    pub overrides: Vec<String>,
}

impl RunOptions {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self
            .overrides
            .iter()
            .map(|o| config_file::parse_override(o))
            .collect::<Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("master_seed".into(), seed.to_string()));
        }
        config_file::load_config(&self.config, &overrides)
    }

    fn out_dir(&self, command: &str, config: &RunConfig) -> PathBuf {
        artifacts::output_dir(
            self.out.as_deref(),
            &format!(
                "{}-{}-seed{}",
                command, config.task.task_id, config.master_seed
            ),
        )
    }
}

/// Which ablation table `ablate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationTable {
    /// Estimator comparison: vanilla, uniform-N and accumulative rewards.
    Estimator,
    /// Fixed horizon against 2- and 3-stage geometric ladders.
    Horizon,
}

/// Seeds `master_seed .. master_seed + count`.
pub fn default_seeds(config: &RunConfig, count: u64) -> Vec<u64> {
    (0..count)
        .map(|i| config.master_seed.wrapping_add(i))
        .collect()
}

fn check_params(params: &PolicyParams, config: &RunConfig) -> Result<()> {
    let world = config.world()?;
    let expected = (
        config.policy.num_slots,
        envsim::NUM_ACTIONS,
        feature_dim(&world),
    );
    let got = (
        params.num_slots(),
        params.vocab_size(),
        params.feature_dim(),
    );
    if expected != got {
        return Err(CliError::Runtime(format!(
            "params shape (slots, vocab, features) = {:?} does not match the config's {:?}",
            got, expected
        )));
    }
    Ok(())
}

/// Behavior cloning from the scripted expert. Writes the params, resolved
/// config and a one-row summary; prints the greedy success rate.
pub fn pretrain(opts: &RunOptions) -> Result<String> {
    let config = opts.resolve()?;
    let dir = opts.out_dir("pretrain", &config);
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(&dir.join(artifacts::CONFIG_FILE), &config)?;
    let start = Instant::now();
    let params = ttt::pretrain_bc(&config)?;
    let sr = evalbench::eval_success_rate(&params, &config, config.eval.episodes)?;
    artifacts::write_params(&dir.join(artifacts::PARAMS_FILE), &params)?;
    artifacts::write_summary(
        &dir.join(artifacts::SUMMARY_FILE),
        &[SummaryRow {
            variant: "bc".into(),
            sr: Some(sr),
            f1: None,
            reward_calls: 0,
            seeds: SummaryRow::join_seeds(&[config.master_seed]),
            wall_time_s: start.elapsed().as_secs_f64(),
        }],
    )?;
    Ok(format!("{}", sr))
}

/// Test-time training. Starts from `init` if given, else from behavior
/// cloning. Leaves exactly four files: params, metrics log, summary and
/// resolved config. Prints the final greedy success rate.
pub fn run_ttt(opts: &RunOptions, init: Option<&Path>) -> Result<String> {
    let config = opts.resolve()?;
    let dir = opts.out_dir("ttt", &config);
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(&dir.join(artifacts::CONFIG_FILE), &config)?;
    let mut log = JsonlWriter::create(&dir.join(artifacts::METRICS_FILE))?;
    let start = Instant::now();
    let params = match init {
        Some(path) => {
            let p = artifacts::read_params(path)?;
            check_params(&p, &config)?;
            p
        }
        None => ttt::pretrain_bc(&config)?,
    };
    let mut sink_error = None;
    let (trained, metrics) = ttt::run_ttt(&params, &config, &mut |m| {
        if sink_error.is_none() {
            sink_error = log.write(m).err();
        }
    })?;
    if let Some(e) = sink_error {
        return Err(e);
    }
    let sr = match metrics.last().and_then(|m| m.eval_sr) {
        Some(sr) => sr,
        None => evalbench::eval_success_rate(&trained, &config, config.eval.episodes)?,
    };
    let f1 = evalbench::seed_fscore(&config, config.master_seed)?.f1;
    artifacts::write_params(&dir.join(artifacts::PARAMS_FILE), &trained)?;
    artifacts::write_summary(
        &dir.join(artifacts::SUMMARY_FILE),
        &[SummaryRow {
            variant: "ttt".into(),
            sr: Some(sr),
            f1: Some(f1),
            reward_calls: evalbench::reward_calls(&config)?,
            seeds: SummaryRow::join_seeds(&[config.master_seed]),
            wall_time_s: start.elapsed().as_secs_f64(),
        }],
    )?;
    Ok(format!("{}", sr))
}

/// Greedy success rate of a params file; writes nothing.
pub fn eval(opts: &RunOptions, params_path: &Path) -> Result<String> {
    let config = opts.resolve()?;
    let params = artifacts::read_params(params_path)?;
    check_params(&params, &config)?;
    let sr = evalbench::eval_success_rate(&params, &config, config.eval.episodes)?;
    Ok(format!("{}", sr))
}

/// Estimator F-scores on balanced validation sets, one row per estimator,
/// averaged over `seeds`.
pub fn critic_bench(opts: &RunOptions, seeds: Option<&[u64]>) -> Result<String> {
    let config = opts.resolve()?;
    let seeds = seeds.map_or_else(|| default_seeds(&config, 5), <[u64]>::to_vec);
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let dir = opts.out_dir("critic-bench", &config);
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(&dir.join(artifacts::CONFIG_FILE), &config)?;
    let mut rows = Vec::new();
    let mut text = String::new();
    for variant in evalbench::estimator_variants(&config) {
        let start = Instant::now();
        let mut total = 0.0;
        for &s in &seeds {
            total += evalbench::seed_fscore(&variant.config, s)?.f1;
        }
        let f1 = total / seeds.len() as f64;
        let calls = evalbench::reward_calls(&variant.config)?;
        let _ = writeln!(text, "{} f1={:.4} reward_calls={}", variant.name, f1, calls);
        rows.push(SummaryRow {
            variant: variant.name,
            sr: None,
            f1: Some(f1),
            reward_calls: calls,
            seeds: SummaryRow::join_seeds(&seeds),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    artifacts::write_summary(&dir.join(artifacts::SUMMARY_FILE), &rows)?;
    Ok(text.trim_end().to_string())
}

/// End-to-end ablation: every variant is pretrained, trained and evaluated
/// on every seed. Writes the summary table, one metrics log per variant and
/// the resolved base config. A failing variant is recorded with empty
/// numbers and the command then fails after the table is written.
pub fn ablate(opts: &RunOptions, table: AblationTable, seeds: Option<&[u64]>) -> Result<String> {
    let config = opts.resolve()?;
    let seeds = seeds.map_or_else(|| default_seeds(&config, 5), <[u64]>::to_vec);
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let variants: Vec<Variant> = match table {
        AblationTable::Estimator => evalbench::estimator_variants(&config),
        AblationTable::Horizon => evalbench::horizon_variants(&config, &[2, 3]),
    };
    let dir = opts.out_dir("ablate", &config);
    artifacts::ensure_dir(&dir)?;
    artifacts::write_config(&dir.join(artifacts::CONFIG_FILE), &config)?;
    let mut rows = Vec::new();
    let mut text = String::new();
    let mut failures = Vec::new();
    for variant in &variants {
        let mut log = JsonlWriter::create(&dir.join(format!("metrics-{}.jsonl", variant.name)))?;
        let mut sink_error = None;
        let start = Instant::now();
        let row = evalbench::run_variant(variant, &seeds, &mut |seed, m| {
            if sink_error.is_none() {
                sink_error = log
                    .write(&TaggedMetrics {
                        variant: &variant.name,
                        seed,
                        metrics: m,
                    })
                    .err();
            }
        });
        if let Some(e) = sink_error {
            return Err(e);
        }
        let ok = row.error.is_none();
        if let Some(e) = &row.error {
            failures.push(format!("{}: {}", row.variant, e));
        }
        let _ = writeln!(
            text,
            "{} sr={:.4} f1={:.4} reward_calls={}",
            row.variant, row.sr, row.f1, row.reward_calls
        );
        rows.push(SummaryRow {
            variant: row.variant,
            sr: ok.then_some(row.sr),
            f1: ok.then_some(row.f1),
            reward_calls: row.reward_calls,
            seeds: SummaryRow::join_seeds(&seeds),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    artifacts::write_summary(&dir.join(artifacts::SUMMARY_FILE), &rows)?;
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} variant(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(text.trim_end().to_string())
}
