//! End-to-end experiment runs: reduce, classify, bias sweeps, challenge
//! sampling and offline re-aggregation.
//!
//! A run directory holds `config.json` (the exact configuration), the
//! append-only `transcripts.jsonl`, `report.json` and flat CSV tables.
//! Transcripts are keyed by (instance, seed, method); re-running into the
//! same directory skips every key already present, so an interrupted run
//! resumes where it stopped.

mod config;
mod transcripts;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{interpolate_env, BackendConfig, BackendKind, ExperimentConfig, Presentation};
pub use transcripts::{read_transcripts, TranscriptLog};

use crate::arena::{self, ComparisonConfig, ComparisonTranscript};
use crate::arrange::{arrange, ArrangementSpec};
use crate::catalog::{LabelCatalog, LabelId};
use crate::dataset::{load_dataset, save_dataset, Instance};
use crate::demos::DemonstrationStore;
use crate::embed::{embed, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{
    self, call_accounting, challenge_sample, load_margins, position_bias_sweep, write_csv, AccuracyRow, BiasReport,
    CallRecord, EvalReport, SampleSize, Summary,
};
use crate::gateway::{Backend, CallStats, Gateway, HttpBackend, ReplyCache, ScriptedOracle};
use crate::prompt::{generate_explanations, render};
use crate::query::ModelQuery;
use crate::reduce::{self, ReductionConfig, ReductionResult, Strategy};
use crate::seed;

pub const CONFIG_FILE: &str = "config.json";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Reduce,
    Classify,
}

/// Everything recorded about one instance in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub repeat: usize,
    pub seed: u64,
    pub method: String,
    pub text: String,
    pub gold: LabelId,
    /// Seed of the option shuffle; `None` when presented in catalog order.
    pub options_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonTranscript>,
    pub prediction: Option<LabelId>,
    pub hit: Option<bool>,
    pub reduction_calls: u64,
    pub comparison_calls: u64,
    pub latency_ms: f64,
}

impl InstanceRecord {
    pub fn key(&self) -> (usize, u64, String) {
        (self.instance, self.seed, self.method.clone())
    }
}

/// Loaded inputs plus a gateway, ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub catalog: LabelCatalog,
    pub instances: Vec<Instance>,
    pub store: DemonstrationStore,
    pub embeddings: Option<EmbeddingMatrix>,
    pub gateway: Gateway,
}

impl Experiment {
    /// Validates `config`, loads its inputs and builds the configured
    /// backend. No backend call is made.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (catalog, instances, train) = load_inputs(&config)?;
        let backend: Arc<dyn Backend> = match config.backend.kind {
            BackendKind::Scripted => {
                let answers = instances
                    .iter()
                    .chain(&train)
                    .map(|i| (i.text.clone(), i.gold.clone()));
                Arc::new(ScriptedOracle::new(config.oracle.clone(), answers)?)
            }
            BackendKind::Http => Arc::new(HttpBackend::new(config.backend.http.clone())?),
        };
        Self::assemble(config, catalog, instances, train, backend)
    }

    /// Like [`Experiment::prepare`] but with a caller-supplied backend.
    pub fn with_backend(config: ExperimentConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        config.validate()?;
        let (catalog, instances, train) = load_inputs(&config)?;
        Self::assemble(config, catalog, instances, train, backend)
    }

    fn assemble(
        config: ExperimentConfig,
        catalog: LabelCatalog,
        instances: Vec<Instance>,
        train: Vec<Instance>,
        backend: Arc<dyn Backend>,
    ) -> Result<Self> {
        let store = match &config.demonstrations {
            Some(p) => DemonstrationStore::load(p)?,
            None => DemonstrationStore::from_instances(&train, &catalog, config.store_capacity, config.seed)?,
        };
        let embeddings = if config.reduction.strategy == Strategy::Cbwr {
            let items: Vec<String> = catalog.ids().iter().map(|l| l.to_string()).collect();
            Some(embed(&items, &config.embedding)?)
        } else {
            None
        };
        let mut gateway = Gateway::new(backend).with_parallelism(config.backend.parallelism);
        if let Some(dir) = &config.cache_dir {
            gateway = gateway.with_cache(ReplyCache::new(dir)?);
        }
        Ok(Experiment {
            config,
            catalog,
            instances,
            store,
            embeddings,
            gateway,
        })
    }

    pub fn stats(&self) -> CallStats {
        self.gateway.stats()
    }

    fn method_key(&self, command: Command) -> String {
        let strategy = self.config.reduction.strategy.name();
        let method = self.config.comparison.method;
        match command {
            Command::Reduce => format!("reduce:{strategy}"),
            Command::Classify if method.is_full_option() && !self.config.full_option_over_reduced => {
                method.name().to_string()
            }
            Command::Classify => format!("{strategy}+{method}"),
        }
    }

    fn options_for(&self, inst: &Instance, repeat_seed: u64) -> Result<(Vec<LabelId>, Option<u64>)> {
        match self.config.presentation {
            Presentation::AsIs => Ok((self.catalog.ids(), None)),
            Presentation::Shuffled => {
                let s = seed::derive(repeat_seed, &[inst.id as u64, 3]);
                Ok((arrange(&self.catalog, &ArrangementSpec::shuffled(s), &inst.gold)?, Some(s)))
            }
        }
    }

    fn reduction_config(&self, inst: &Instance, repeat_seed: u64) -> ReductionConfig {
        ReductionConfig {
            seed: seed::derive(repeat_seed, &[inst.id as u64, 1]),
            ..self.config.reduction.clone()
        }
    }

    fn comparison_config(&self, inst: &Instance, repeat_seed: u64) -> ComparisonConfig {
        ComparisonConfig {
            seed: seed::derive(repeat_seed, &[inst.id as u64, 2]),
            ..self.config.comparison.clone()
        }
    }

    /// Runs one instance over `options` (already in presentation order).
    pub fn process(
        &self,
        command: Command,
        inst: &Instance,
        options: &[LabelId],
        repeat: usize,
        repeat_seed: u64,
    ) -> Result<InstanceRecord> {
        let method = self.config.comparison.method;
        let skip_reduction =
            command == Command::Classify && method.is_full_option() && !self.config.full_option_over_reduced;
        let reduction = if skip_reduction {
            None
        } else {
            Some(reduce::reduce(
                &inst.text,
                options,
                &self.reduction_config(inst, repeat_seed),
                &self.gateway,
                self.embeddings.as_ref(),
            )?)
        };
        let comparison = match command {
            Command::Reduce => None,
            Command::Classify => {
                let candidates = reduction.as_ref().map_or(options, |r| r.reduced.as_slice());
                Some(arena::compare(
                    &inst.text,
                    candidates,
                    &self.store,
                    &self.comparison_config(inst, repeat_seed),
                    &self.gateway,
                )?)
            }
        };
        let reduction_calls = reduction.as_ref().map_or(0, |r| r.calls);
        let comparison_calls = comparison.as_ref().map_or(0, |c| c.calls);
        let latency_ms = reduction.as_ref().map_or(0.0, |r| r.latency_ms)
            + comparison.as_ref().map_or(0.0, |c| c.latency_ms);
        Ok(InstanceRecord {
            instance: inst.id,
            repeat,
            seed: repeat_seed,
            method: self.method_key(command),
            text: inst.text.clone(),
            gold: inst.gold.clone(),
            options_seed: None,
            hit: reduction.as_ref().map(|r| r.reduced.contains(&inst.gold)),
            prediction: comparison.as_ref().and_then(|c| c.final_label.clone()),
            reduction,
            comparison,
            reduction_calls,
            comparison_calls,
            latency_ms,
        })
    }

    /// Annotates demonstrations with explanations when the method needs them.
    fn ensure_explanations(&mut self) -> Result<()> {
        if !self.config.comparison.method.needs_explanations() || self.config.comparison.shots == 0 {
            return Ok(());
        }
        let report = generate_explanations(&mut self.store, &self.gateway);
        if let Some((label, _, err)) = report.failed.first() {
            return Err(Error::Backend {
                backend: self.gateway.backend_id().to_string(),
                attempts: 1,
                message: format!(
                    "{} explanation(s) failed, first for `{label}`: {err}",
                    report.failed.len()
                ),
            });
        }
        Ok(())
    }

    /// Runs `command` for every repeat and instance, resuming from any
    /// transcripts already in the output directory, and writes the report.
    pub fn run(&mut self, command: Command) -> Result<EvalReport> {
        if command == Command::Classify {
            self.ensure_explanations()?;
        }
        let out = self.config.out_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        write_json(out.join(CONFIG_FILE), &self.config)?;

        let log = TranscriptLog::open(out.join(TRANSCRIPTS_FILE))?;
        let done: HashSet<(usize, u64, String)> = log.existing().iter().map(InstanceRecord::key).collect();
        let method = self.method_key(command);
        if !done.is_empty() {
            tracing::info!(completed = done.len(), "resuming from existing transcripts");
        }

        for (repeat, repeat_seed) in self.config.repeat_seeds().into_iter().enumerate() {
            let this = &*self;
            this.instances
                .par_iter()
                .filter(|inst| !done.contains(&(inst.id, repeat_seed, method.clone())))
                .try_for_each(|inst| -> Result<()> {
                    let (options, options_seed) = this.options_for(inst, repeat_seed)?;
                    let mut record = this.process(command, inst, &options, repeat, repeat_seed)?;
                    record.options_seed = options_seed;
                    log.append(&record)
                })?;
        }
        let records = log.finish(|r| r.method == method)?;
        let report = build_report(command, &self.config, &records)?;
        write_report(&out, &report)?;
        Ok(report)
    }

    /// Renders each instance's first-stage prompt into `out_dir/prompts`
    /// without calling any backend. Returns the number of prompts written.
    pub fn dry_run(&self, command: Command) -> Result<usize> {
        let dir = self.config.out_dir.join("prompts");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let repeat_seed = self.config.repeat_seeds()[0];
        let method = self.config.comparison.method;
        let mut written = 0;
        for inst in &self.instances {
            let (options, _) = self.options_for(inst, repeat_seed)?;
            let query = if command == Command::Classify && method.is_full_option() && !self.config.full_option_over_reduced
            {
                Some(ModelQuery::full_choice(&inst.text, options, method.cot(), None))
            } else {
                reduce::first_query(
                    &inst.text,
                    &options,
                    &self.reduction_config(inst, repeat_seed),
                    self.embeddings.as_ref(),
                )?
            };
            if let Some(q) = query {
                let path = dir.join(format!("{:06}.txt", inst.id));
                fs::write(&path, render(&q)?.transcript()).map_err(|e| Error::io(&path, e))?;
                written += 1;
            }
        }
        Ok(written)
    }

    /// Fixed-position sweep of the configured pipeline. Writes
    /// `bias_report.json`, `sweep.csv` and `token_bias.csv`.
    pub fn bias_sweep(&mut self) -> Result<BiasReport> {
        self.ensure_explanations()?;
        let seeds = self.config.repeat_seeds();
        let this = &*self;
        let report = position_bias_sweep(
            &this.instances,
            &this.catalog,
            &this.config.positions,
            &seeds,
            |inst, spec, s| {
                let options = arrange(&this.catalog, spec, &inst.gold)?;
                Ok(this.process(Command::Classify, inst, &options, 0, s)?.prediction)
            },
        )?;
        let out = &self.config.out_dir;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(out.join(CONFIG_FILE), &self.config)?;
        write_json(out.join("bias_report.json"), &report)?;
        #[derive(Serialize)]
        struct SweepRow {
            position: usize,
            accuracy: f64,
            baseline: f64,
            change_rate: Option<f64>,
            std_error: f64,
        }
        let rows: Vec<SweepRow> = report
            .positions
            .iter()
            .map(|r| SweepRow {
                position: r.position,
                accuracy: r.accuracy,
                baseline: report.baseline_accuracy,
                change_rate: r.change_rate,
                std_error: r.std_error,
            })
            .collect();
        write_csv(out.join("sweep.csv"), &rows)?;
        write_csv(out.join("token_bias.csv"), &report.token_bias)?;
        Ok(report)
    }
}

fn load_inputs(config: &ExperimentConfig) -> Result<(LabelCatalog, Vec<Instance>, Vec<Instance>)> {
    let catalog = LabelCatalog::load(&config.catalog)?;
    let instances = load_dataset(&config.dataset, &catalog)?;
    let train = match &config.train {
        Some(p) => load_dataset(p, &catalog)?,
        None => Vec::new(),
    };
    if let Some(&p) = config.positions.iter().find(|&&p| p >= catalog.len()) {
        return Err(Error::PositionOutOfRange {
            position: p,
            len: catalog.len(),
        });
    }
    Ok((catalog, instances, train))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    write_json(out.join(REPORT_FILE), report)?;
    write_csv(out.join("accuracy.csv"), &report.rows)?;
    #[derive(Serialize)]
    struct HitRow {
        repeat: usize,
        seed: u64,
        k: usize,
        hit_at_k: Option<f64>,
    }
    let hits: Vec<HitRow> = report
        .rows
        .iter()
        .map(|r| HitRow {
            repeat: r.repeat,
            seed: r.seed,
            k: report.k,
            hit_at_k: r.hit_at_k,
        })
        .collect();
    write_csv(out.join("hit_at_k.csv"), &hits)
}

/// Aggregates sorted records into a report. Pure: identical records and
/// configuration give an identical report.
pub fn build_report(command: Command, config: &ExperimentConfig, records: &[InstanceRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Empty("transcript set".into()));
    }
    let seeds = config.repeat_seeds();
    let k = config.reduction.n;
    let mut rows = Vec::with_capacity(seeds.len());
    for (repeat, &s) in seeds.iter().enumerate() {
        let recs: Vec<&InstanceRecord> = records.iter().filter(|r| r.seed == s && r.repeat == repeat).collect();
        if recs.is_empty() {
            continue;
        }
        let golds: Vec<LabelId> = recs.iter().map(|r| r.gold.clone()).collect();
        let accuracy = match command {
            Command::Classify => {
                let preds: Vec<Option<LabelId>> = recs.iter().map(|r| r.prediction.clone()).collect();
                Some(eval::accuracy(&preds, &golds)?)
            }
            Command::Reduce => None,
        };
        let hit_at_k = if recs.iter().all(|r| r.reduction.is_some()) {
            let sets: Vec<Vec<LabelId>> = recs
                .iter()
                .map(|r| r.reduction.as_ref().expect("checked").reduced.clone())
                .collect();
            Some(eval::hit_at_k(&sets, &golds, k)?)
        } else {
            None
        };
        rows.push(AccuracyRow {
            repeat,
            seed: s,
            instances: recs.len(),
            accuracy,
            hit_at_k,
            reduction_calls: recs.iter().map(|r| r.reduction_calls).sum(),
            comparison_calls: recs.iter().map(|r| r.comparison_calls).sum(),
            latency_ms: recs.iter().map(|r| r.latency_ms).sum(),
        });
    }
    let summary = |f: &dyn Fn(&AccuracyRow) -> Option<f64>| -> Result<Option<Summary>> {
        let vals: Option<Vec<f64>> = rows.iter().map(f).collect();
        vals.filter(|v| !v.is_empty()).map(|v| Summary::of(&v)).transpose()
    };
    let accuracy = summary(&|r| r.accuracy)?;
    let hit_at_k = summary(&|r| r.hit_at_k)?;

    let mut calls = Vec::new();
    for r in records {
        if let Some(red) = &r.reduction {
            calls.push(CallRecord {
                method: format!("reduction:{}", red.strategy.name()),
                calls: red.calls,
                latency_ms: red.latency_ms,
            });
        }
        if let Some(c) = &r.comparison {
            calls.push(CallRecord {
                method: format!("comparison:{}", c.method),
                calls: c.calls,
                latency_ms: c.latency_ms,
            });
        }
    }
    let reduction_calls = rows.iter().map(|r| r.reduction_calls).sum();
    let comparison_calls = rows.iter().map(|r| r.comparison_calls).sum();
    Ok(EvalReport {
        command: match command {
            Command::Reduce => "reduce".into(),
            Command::Classify => "classify".into(),
        },
        strategy: records.iter().find_map(|r| r.reduction.as_ref()).map(|r| r.strategy.name().to_string()),
        method: records
            .iter()
            .find_map(|r| r.comparison.as_ref())
            .map(|c| c.method.name().to_string()),
        k,
        seeds,
        reduction_calls,
        comparison_calls,
        total_calls: reduction_calls + comparison_calls,
        wall_time_ms: rows.iter().map(|r| r.latency_ms).sum(),
        call_accounting: call_accounting(&calls).unwrap_or_default(),
        rows,
        accuracy,
        hit_at_k,
        config: serde_json::to_value(config)?,
    })
}

/// Rebuilds `report.json` and the CSV tables of a run directory from its
/// persisted transcripts, without any model call.
pub fn report(run_dir: impl AsRef<Path>) -> Result<EvalReport> {
    let dir = run_dir.as_ref();
    let cfg_path = dir.join(CONFIG_FILE);
    let raw = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&raw)?;
    let records = read_transcripts(dir.join(TRANSCRIPTS_FILE))?;
    let command = if records.iter().any(|r| r.comparison.is_some()) {
        Command::Classify
    } else {
        Command::Reduce
    };
    let report = build_report(command, &config, &records)?;
    write_report(dir, &report)?;
    Ok(report)
}

/// Writes the `size` lowest-margin records as a dataset. Records without a
/// label take it from `dataset` by matching text.
pub fn sample_challenge(
    margins: impl AsRef<Path>,
    catalog: &LabelCatalog,
    dataset: Option<&[Instance]>,
    size: SampleSize,
    out: impl AsRef<Path>,
) -> Result<Vec<Instance>> {
    let records = load_margins(margins, catalog)?;
    let picked = challenge_sample(&records, size)?;
    let mut subset = Vec::with_capacity(picked.len());
    for (id, i) in picked.into_iter().enumerate() {
        let r = &records[i];
        let gold = match (&r.label, dataset) {
            (Some(l), _) => l.clone(),
            (None, Some(ds)) => ds
                .iter()
                .find(|inst| inst.text == r.text)
                .map(|inst| inst.gold.clone())
                .ok_or_else(|| Error::Metric(format!("no label for margin record `{}`", r.text)))?,
            (None, None) => {
                return Err(Error::Metric(format!("margin record `{}` has no label", r.text)));
            }
        };
        subset.push(Instance {
            id,
            text: r.text.clone(),
            gold,
            margin: Some(r.margin),
        });
    }
    save_dataset(out, &subset)?;
    Ok(subset)
}
