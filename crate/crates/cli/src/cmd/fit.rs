use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ringfit::data::compute_metrics;
use ringfit::data::io::read_sparse;
use ringfit::gibbs::{GibbsSampler, Init};
use ringfit::online::{select_rank, OnlineTrainer};
use ringfit::{Checkpoint, DataKind, EngineState, ValueTransform};
use serde::Serialize;

use super::{create_dir, join_ranks, write_json, write_text};
use crate::error::{io_error, CliError};
use crate::fit_config::{merge, FileConfig, FitSettings};
use crate::manifest::RunManifest;
use crate::{Context, Engine, FitArgs};

/// Line-delimited JSON log plus a plain `step r1 … rD` rank trace.
struct FitLog {
    log: BufWriter<File>,
    ranks: BufWriter<File>,
    log_path: PathBuf,
    ranks_path: PathBuf,
}

impl FitLog {
    fn open(dir: &Path, append: bool) -> Result<Self, CliError> {
        let log_path = dir.join("log.jsonl");
        let ranks_path = dir.join("ranks.txt");
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(p)
                .map(BufWriter::new)
                .map_err(|e| io_error(p, e))
        };
        Ok(FitLog {
            log: open(&log_path)?,
            ranks: open(&ranks_path)?,
            log_path,
            ranks_path,
        })
    }

    fn line(&mut self, line: &impl Serialize) -> Result<(), CliError> {
        let json = serde_json::to_string(line).map_err(ringfit::Error::from)?;
        writeln!(self.log, "{json}").map_err(|e| io_error(&self.log_path, e))
    }

    fn ranks(&mut self, step: usize, ranks: &[usize]) -> Result<(), CliError> {
        writeln!(self.ranks, "{step} {}", join_ranks(ranks))
            .map_err(|e| io_error(&self.ranks_path, e))
    }

    fn flush(&mut self) -> Result<(), CliError> {
        self.log.flush().map_err(|e| io_error(&self.log_path, e))?;
        self.ranks
            .flush()
            .map_err(|e| io_error(&self.ranks_path, e))
    }
}

#[derive(Serialize)]
struct GibbsLine<'a> {
    #[serde(flatten)]
    record: &'a ringfit::gibbs::SweepRecord,
    seconds: f64,
}

/// Where a fit starts from.
enum Start {
    Fresh(Box<FitSettings>, Engine),
    Resume(Box<Checkpoint>),
}

pub fn fit(ctx: &Context, args: FitArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("fit", ctx);
    manifest.input(&args.data);
    let data = manifest.time("read", || read_sparse(&args.data))?;

    let start = match &args.resume {
        Some(path) => {
            manifest.input(path);
            let ckpt = Checkpoint::load(path)?;
            let stored = match ckpt.engine {
                EngineState::Gibbs(_) => Engine::Gibbs,
                EngineState::Online(_) => Engine::Online,
            };
            if args.engine.is_some_and(|e| e != stored) {
                return Err(CliError::Usage(format!(
                    "--engine does not match the checkpoint ({})",
                    ckpt.engine_name()
                )));
            }
            if ckpt.shape != data.shape() || ckpt.kind != data.kind() {
                return Err(CliError::Usage(
                    "checkpoint shape or kind does not match the data".into(),
                ));
            }
            Start::Resume(Box::new(ckpt))
        }
        None => {
            let engine = args.engine.ok_or_else(|| {
                CliError::Usage("--engine is required unless --resume is given".into())
            })?;
            let file = match &args.config {
                Some(p) => {
                    manifest.input(p);
                    FileConfig::load(p)?
                }
                None => FileConfig::default(),
            };
            let settings = merge(file, &args.overrides, ctx.parallel());
            let check = match engine {
                Engine::Gibbs => settings.gibbs.validate(),
                Engine::Online => settings.online.validate(),
            };
            check.map_err(|e| CliError::Usage(e.to_string()))?;
            Start::Fresh(Box::new(settings), engine)
        }
    };

    create_dir(&args.out)?;
    let ckpt_path = args.out.join("checkpoint.json");
    let append = matches!(start, Start::Resume(_));
    let mut log = FitLog::open(&args.out, append)?;

    let transform = match &start {
        Start::Resume(c) => c.transform,
        Start::Fresh(s, _) => (s.standardize && data.kind() == DataKind::Continuous)
            .then(|| ValueTransform::standardizing(&data))
            .transpose()?,
    };
    let fit_data = match transform {
        Some(t) => t.forward(&data)?,
        None => data.clone(),
    };
    let wrap = |engine: EngineState| {
        Checkpoint::new(data.shape().to_vec(), data.kind(), transform, engine)
    };

    let ckpt = match start {
        Start::Fresh(s, Engine::Gibbs) => {
            manifest.seed = Some(s.gibbs.seed);
            manifest.config(&s)?;
            let sampler =
                GibbsSampler::new(fit_data, Init::Random(s.initial_rank), s.gibbs.clone())?;
            run_gibbs(
                ctx,
                &mut manifest,
                sampler,
                &mut log,
                &wrap,
                &ckpt_path,
                args.checkpoint_every,
            )?
        }
        Start::Fresh(s, Engine::Online) => {
            manifest.seed = Some(s.online.seed);
            let mut online = s.online.clone();
            if !s.select_rank.is_empty() {
                let sel = manifest.time("select_rank", || {
                    select_rank(&fit_data, &s.select_rank, s.validation, &online)
                })?;
                ctx.progress(format_args!(
                    "fit: selected rank {} from {:?}",
                    sel.rank, sel.scores
                ));
                let sel_path = args.out.join("rank_selection.json");
                write_json(&sel_path, &sel)?;
                manifest.output(&sel_path);
                online.rank = sel.rank;
            }
            let settings = FitSettings {
                online: online.clone(),
                ..(*s).clone()
            };
            manifest.config(&settings)?;
            let trainer = OnlineTrainer::new(fit_data, online)?;
            run_online(
                ctx,
                &mut manifest,
                trainer,
                &mut log,
                &wrap,
                &ckpt_path,
                args.checkpoint_every,
            )?
        }
        Start::Resume(c) => match c.engine {
            EngineState::Gibbs(g) => {
                manifest.seed = Some(g.config.seed);
                manifest.config(&g.config)?;
                let sampler = GibbsSampler::resume(fit_data, *g)?;
                run_gibbs(
                    ctx,
                    &mut manifest,
                    sampler,
                    &mut log,
                    &wrap,
                    &ckpt_path,
                    args.checkpoint_every,
                )?
            }
            EngineState::Online(o) => {
                manifest.seed = Some(o.config.seed);
                manifest.config(&o.config)?;
                let trainer = OnlineTrainer::resume(fit_data, *o)?;
                run_online(
                    ctx,
                    &mut manifest,
                    trainer,
                    &mut log,
                    &wrap,
                    &ckpt_path,
                    args.checkpoint_every,
                )?
            }
        },
    };
    log.flush()?;

    manifest.time("write", || ckpt.save(&ckpt_path))?;
    let metrics_path = args.out.join("train_metrics.txt");
    let pred = manifest.time("predict", || ckpt.predict(&data))?;
    let report = compute_metrics(&pred, &data, None)?;
    let ranks = estimated_ranks(&ckpt);
    write_text(
        &metrics_path,
        &format!("{report}ranks = {}\n", join_ranks(&ranks)),
    )?;
    ctx.progress(format_args!(
        "fit: ranks {ranks:?}, train {}",
        report.to_string().trim().replace('\n', ", ")
    ));

    for p in [&ckpt_path, &log.log_path, &log.ranks_path, &metrics_path] {
        manifest.output(p);
    }
    manifest.finish(&args.out.join("manifest.json"))
}

/// Posterior rank mode for Gibbs fits with retained samples, otherwise the
/// current ranks.
pub fn estimated_ranks(ckpt: &Checkpoint) -> Vec<usize> {
    match &ckpt.engine {
        EngineState::Gibbs(g) => g
            .samples
            .estimated_ranks()
            .unwrap_or_else(|| g.model.ranks()),
        EngineState::Online(o) => o.model.ranks(),
    }
}

fn run_gibbs(
    ctx: &Context,
    manifest: &mut RunManifest,
    mut sampler: GibbsSampler,
    log: &mut FitLog,
    wrap: &dyn Fn(EngineState) -> Checkpoint,
    ckpt_path: &Path,
    every: Option<usize>,
) -> Result<Checkpoint, CliError> {
    let clock = Instant::now();
    let total = sampler.total_sweeps();
    while !sampler.is_finished() {
        let record = sampler.step()?.clone();
        let line = GibbsLine {
            record: &record,
            seconds: clock.elapsed().as_secs_f64(),
        };
        log.line(&line)?;
        log.ranks(record.sweep, &record.ranks)?;
        let done = record.sweep;
        if done % 100 == 0 || done == total {
            log.flush()?;
            ctx.progress(format_args!(
                "gibbs: sweep {done}/{total}, ranks {:?}, residual {:.4e}",
                record.ranks, record.residual_norm
            ));
        }
        if every.is_some_and(|k| k > 0 && done % k == 0) {
            wrap(EngineState::Gibbs(Box::new(sampler.checkpoint()))).save(ckpt_path)?;
        }
    }
    manifest
        .timings
        .insert("sample".into(), clock.elapsed().as_secs_f64());
    Ok(wrap(EngineState::Gibbs(Box::new(sampler.checkpoint()))))
}

fn run_online(
    ctx: &Context,
    manifest: &mut RunManifest,
    mut trainer: OnlineTrainer,
    log: &mut FitLog,
    wrap: &dyn Fn(EngineState) -> Checkpoint,
    ckpt_path: &Path,
    every: Option<usize>,
) -> Result<Checkpoint, CliError> {
    let clock = Instant::now();
    while !trainer.is_finished() {
        trainer.run_epoch()?;
        let ranks = trainer.model().ranks();
        let epoch = trainer.epoch();
        let records = trainer.drain_log();
        for r in &records {
            log.line(r)?;
        }
        log.ranks(epoch, &ranks)?;
        log.flush()?;
        if let Some(last) = records.last() {
            ctx.progress(format_args!(
                "online: epoch {epoch}, free energy {:.6e}",
                last.free_energy
            ));
        }
        if every.is_some_and(|k| k > 0 && epoch % k == 0) {
            wrap(EngineState::Online(Box::new(trainer.checkpoint()))).save(ckpt_path)?;
        }
    }
    manifest
        .timings
        .insert("optimize".into(), clock.elapsed().as_secs_f64());
    Ok(wrap(EngineState::Online(Box::new(trainer.checkpoint()))))
}
