//! The five subcommands. Each writes its artifacts plus a manifest under
//! the output directory and returns the lines to print.

use std::fmt::Write as _;
use std::path::Path;

use countmorl_core::dataset::dataset_to_string;
use countmorl_core::{count_audit, exact_counts};

use crate::config::{CountMethod, ExperimentConfig};
use crate::error::{AtStage, Stage, StageError};
use crate::output::{bar_chart, histogram, scatter_with_line, tag_csv, OutputDir};
use crate::pipeline::{hash_ensemble, make_dataset, run_experiment, run_sweep, Environment, SeedStreams};
use crate::theory::{theory_check, SLOPE_RANGE};

/// Lines printed by a command, and whether its check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub lines: Vec<String>,
    pub passed: bool,
}

impl CommandOutput {
    /// `Ok` when the check passed, otherwise a `Check`-stage error.
    pub fn into_result(self) -> Result<Vec<String>, StageError> {
        if self.passed {
            Ok(self.lines)
        } else {
            Err(StageError::new(Stage::Check, self.lines.join("\n")))
        }
    }
}

fn open(cfg: &ExperimentConfig, out: &Path) -> Result<OutputDir, StageError> {
    let mut dir = OutputDir::create(out)?;
    dir.write("config.toml", &cfg.to_toml())?;
    Ok(dir)
}

pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput, StageError> {
    cfg.validate()?;
    let env = Environment::build(cfg)?;
    let hash = cfg.hash();
    let mut dir = open(cfg, out)?;
    let terminal = env.known.terminal.clone().unwrap_or_else(|| vec![false; env.mdp.num_states()]);
    let na = env.mdp.num_actions();
    let mut coverage = String::from("config_hash,seed,transitions,count_total,covered_pairs,total_pairs,uncovered_nonterminal_pairs\n");
    let mut lines = Vec::new();
    for i in 0..cfg.eval.num_seeds {
        let streams = SeedStreams::new(cfg.seed, i);
        let bundle = make_dataset(cfg, &env, &streams)?;
        let counts = exact_counts(&bundle.data);
        let covered = counts.counts().iter().filter(|&&n| n > 0).count();
        let uncovered_nonterminal = counts.zero_pairs().iter().filter(|&&(s, _)| !terminal[s]).count();
        dir.write(&format!("dataset_seed{}.csv", streams.seed), &dataset_to_string(&bundle.data))?;
        let _ = writeln!(
            coverage,
            "{hash},{},{},{},{covered},{},{uncovered_nonterminal}",
            streams.seed,
            bundle.data.len(),
            counts.total(),
            env.num_pairs()
        );
        lines.push(format!(
            "seed {}: {} transitions, {covered}/{} pairs covered ({} pairs x {na} actions), {uncovered_nonterminal} non-terminal pairs uncovered",
            streams.seed,
            bundle.data.len(),
            env.num_pairs(),
            env.mdp.num_states()
        ));
    }
    dir.write("coverage.csv", &coverage)?;
    lines.push(format!("manifest: {}", dir.finish()?.display()));
    Ok(CommandOutput { lines, passed: true })
}

pub fn cmd_count_audit(cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutput, StageError> {
    cfg.validate()?;
    if cfg.counting.method != CountMethod::Hash {
        return Err(StageError::new(Stage::Config, "count-audit needs counting.method = \"hash\""));
    }
    let env = Environment::build(cfg)?;
    let hash = cfg.hash();
    let mut dir = open(cfg, out)?;
    let mut summary = String::from(
        "config_hash,seed,max_err_lc,max_err_avg,max_err_uc,max_member_err,pairs_with_error,colliding_pairs,exact\n",
    );
    let mut errors = Vec::new();
    let mut lines = Vec::new();
    let mut passed = true;
    for i in 0..cfg.eval.num_seeds {
        let streams = SeedStreams::new(cfg.seed, i);
        let bundle = make_dataset(cfg, &env, &streams)?;
        let mut ens = hash_ensemble(cfg, &env, streams.counts)?;
        ens.ingest_dataset(&bundle.data).at(Stage::Counting)?;
        let audit = count_audit(&ens, &exact_counts(&bundle.data)).at(Stage::Counting)?;
        dir.write(&format!("audit_seed{}.csv", streams.seed), &tag_csv(&audit.to_csv(), &hash, streams.seed))?;
        errors.extend(audit.rows.iter().map(|r| (r.avg - r.true_count as f64).abs()));
        let e = audit.max_abs_error;
        let _ = writeln!(
            summary,
            "{hash},{},{:?},{:?},{:?},{},{},{},{}",
            streams.seed,
            e[0],
            e[1],
            e[2],
            audit.max_member_error,
            audit.pairs_with_error,
            audit.colliding_pairs.len(),
            audit.is_exact()
        );
        passed &= audit.is_exact();
        lines.push(format!(
            "seed {}: {} transitions, max |n_hat - n| LC/AVG/UC = {:?}/{:?}/{:?}, {} colliding pairs",
            streams.seed,
            bundle.data.len(),
            e[0],
            e[1],
            e[2],
            audit.colliding_pairs.len()
        ));
    }
    dir.write("audit_summary.csv", &summary)?;
    dir.write("audit_error_hist.svg", &histogram("|AVG count - true count|", &errors, 10))?;
    lines.push(format!("max error zero on every seed: {passed}"));
    lines.push(format!("manifest: {}", dir.finish()?.display()));
    Ok(CommandOutput { lines, passed })
}

pub fn cmd_theory_check(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<CommandOutput, StageError> {
    let report = theory_check(cfg, workers)?;
    let mut dir = open(cfg, out)?;
    dir.write("theory_summary.csv", &report.summary_csv())?;
    dir.write("theory_bins.csv", &report.bins_csv())?;
    dir.write("theory_reps.csv", &report.reps_csv())?;
    let pts: Vec<(f64, f64)> =
        report.scaling.bins.iter().map(|b| (b.median_count.ln(), b.median_tv.ln())).collect();
    dir.write(
        "tv_scaling.svg",
        &scatter_with_line("log median TV vs log count", &pts, Some((report.scaling.intercept, report.scaling.slope))),
    )?;
    let v = report.conditional_violations();
    let lines = vec![
        format!(
            "TV slope {:.4} (accepted range [{}, {}]): {}",
            report.scaling.slope,
            SLOPE_RANGE.0,
            SLOPE_RANGE.1,
            report.slope_ok()
        ),
        format!(
            "coverage {:.4} at delta {} with calibrated log_model_class {:.4} over {} pairs: {}",
            report.coverage,
            report.delta,
            report.calibrated_log_model_class,
            report.coverage_samples,
            report.coverage_ok()
        ),
        format!(
            "coverage with default log_model_class {:.4}: {:.4}",
            report.default_log_model_class, report.default_coverage
        ),
        format!(
            "bound event held in {}/{} reps; conditional violations lemma/pessimism/sub-optimality = {}/{}/{}",
            report.events(),
            report.reps.len(),
            v[0],
            v[1],
            v[2]
        ),
        format!("manifest: {}", dir.finish()?.display()),
    ];
    Ok(CommandOutput { lines, passed: report.passed() })
}

pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<CommandOutput, StageError> {
    let report = run_experiment(cfg, workers)?;
    let mut dir = open(cfg, out)?;
    dir.write("run.csv", &report.to_csv())?;
    for (i, r) in report.seeds.iter().enumerate() {
        dir.write(&format!("policy_seed{}.csv", r.seed), &report.policy_csv(i))?;
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for r in &report.seeds {
        labels.push(format!("s{} learned", r.seed));
        values.push(r.learned_return);
        if let Some(b) = r.behavior_return {
            labels.push(format!("s{} behavior", r.seed));
            values.push(b);
        }
    }
    dir.write("returns.svg", &bar_chart(&format!("returns on {}", report.env_id), &labels, &values))?;
    let mut lines: Vec<String> = report
        .seeds
        .iter()
        .map(|r| {
            format!(
                "seed {}: learned {:.6}, behavior {}, unpenalized {:.6}, optimal {:.6}, mean penalty {:.4}",
                r.seed,
                r.learned_return,
                r.behavior_return.map_or_else(|| "n/a".to_string(), |b| format!("{b:.6}")),
                r.baseline_return,
                r.optimal_return,
                r.penalty.mean
            )
        })
        .collect();
    lines.push(format!("mean learned return {:.6}", report.mean_learned()));
    lines.push(format!("wall clock {:.2}s", report.wall_clock_secs));
    lines.push(format!("manifest: {}", dir.finish()?.display()));
    Ok(CommandOutput { lines, passed: true })
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<CommandOutput, StageError> {
    let report = run_sweep(cfg, workers)?;
    let mut dir = open(cfg, out)?;
    dir.write("sweep_long.csv", &report.long_csv())?;
    dir.write("sweep_summary.csv", &report.summary_csv())?;
    dir.write("sweep_modes.csv", &report.mode_table_csv(cfg.seed))?;
    let labels: Vec<String> = report
        .cells
        .iter()
        .map(|c| format!("{} b{} h{} d{}", c.mode, c.beta, c.horizon, c.code_bits))
        .collect();
    let means: Vec<f64> = (0..report.cells.len()).map(|i| report.cell_mean(i)).collect();
    dir.write("sweep.svg", &bar_chart("mean return per cell", &labels, &means))?;
    let mut lines = vec!["beta,horizon,code_bits,alpha: LC / AVG / UC mean return".to_string()];
    for r in report.mode_table() {
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        lines.push(format!(
            "{},{},{},{}: {} / {} / {}",
            r.beta,
            r.horizon,
            r.code_bits,
            r.alpha,
            f(r.means[0]),
            f(r.means[1]),
            f(r.means[2])
        ));
    }
    lines.push(format!("manifest: {}", dir.finish()?.display()));
    Ok(CommandOutput { lines, passed: true })
}
