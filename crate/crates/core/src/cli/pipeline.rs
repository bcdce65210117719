//! The commands as library functions, so tests can drive them without a
//! subprocess.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::{parse_kv, read_kv_file, DatasetSource, RunConfig};
use crate::data::{
    build_graph, homophily_score, k_core_filter, load_interactions, split, write_interactions, DatasetSplit, Delimiter,
    IndexedGraph, Interaction, LabelTable,
};
use crate::error::{Error, Result};
use crate::eval::{fmt_metric, EvalReport, Evaluator, Stratum, Target, METRIC_KEYS};
use crate::model::{fair_embedding_generation, read_checkpoint, write_checkpoint, ModelParams};
use crate::synthetic::{generate, SyntheticConfig};
use crate::train::{fit_with, TrainLog};

pub const CONFIG_SNAPSHOT: &str = "config.resolved";
pub const CHECKPOINT: &str = "checkpoint.hfr";
pub const TRAIN_LOG: &str = "train.log";
pub const RUN_RECORD: &str = "run_record.txt";
pub const METRICS: &str = "metrics.csv";
pub const REPORT: &str = "report.txt";
pub const STATS: &str = "stats.txt";

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
    pub homophily: Option<f64>,
}

impl DatasetStats {
    pub fn of(graph: &IndexedGraph) -> Result<Self> {
        let homophily = if graph.has_labels() {
            let labels = LabelTable::infer(&graph.graph, graph.item_labels.clone())?;
            match homophily_score(&graph.graph, &labels) {
                Ok(h) => Some(h),
                Err(Error::HomophilyUndefined) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(Self {
            users: graph.graph.num_users(),
            items: graph.graph.num_items(),
            interactions: graph.graph.num_edges(),
            density: graph.density(),
            homophily,
        })
    }

    pub fn to_kv(&self) -> String {
        format!(
            "users={}\nitems={}\ninteractions={}\ndensity={}\ndensity_percent={:.2}\nhomophily={}\n",
            self.users,
            self.items,
            self.interactions,
            self.density,
            100.0 * self.density,
            self.homophily.map_or_else(|| "N/A".to_string(), |h| format!("{h:.4}")),
        )
    }
}

/// Everything derived from the raw interactions before training.
pub struct Prepared {
    pub interactions: Vec<Interaction>,
    pub graph: IndexedGraph,
    pub split: DatasetSplit,
    pub stats: DatasetStats,
}

pub fn load_raw(cfg: &RunConfig) -> Result<Vec<Interaction>> {
    match &cfg.dataset {
        DatasetSource::File(path) => load_interactions(path, &cfg.format),
        DatasetSource::Synthetic { seed } => generate(&SyntheticConfig::beauty_like(), *seed),
    }
}

/// Load, deduplicate, k-core filter, index and split.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let raw = load_raw(cfg)?;
    let interactions = k_core_filter(&raw, cfg.k_core)?;
    let graph = build_graph(&interactions)?;
    let split = split(&graph.graph, cfg.split, cfg.split_seed())?;
    let stats = DatasetStats::of(&graph)?;
    Ok(Prepared {
        interactions,
        graph,
        split,
        stats,
    })
}

/// Content hash of the resolved configuration (output location excluded)
/// and the input bytes.
pub fn run_id(cfg: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    for line in cfg.snapshot().lines().filter(|l| !l.starts_with("output=")) {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    match &cfg.dataset {
        DatasetSource::File(path) => h.update(fs::read(path).map_err(|e| Error::io(path, e))?),
        DatasetSource::Synthetic { seed } => h.update(format!("synthetic:beauty:{seed}").as_bytes()),
    }
    let digest = h.finalize();
    Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn write_pairs(path: &Path, g: &IndexedGraph, pairs: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, i) in pairs {
        writeln!(w, "{}\t{}", g.user_ids[u], g.item_ids[i]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn held_out(sets: &[Vec<usize>]) -> impl Iterator<Item = (usize, usize)> + '_ {
    sets.iter().enumerate().flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
}

/// Writes the filtered interactions, the three split files and the stats sidecar.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> Result<DatasetStats> {
    ensure_dir(out)?;
    let p = prepare(cfg)?;
    let path = out.join("interactions.tsv");
    let mut ordered: Vec<(usize, usize, &Interaction)> = {
        let users = p.graph.user_index();
        let items = p.graph.item_index();
        p.interactions
            .iter()
            .map(|it| (users[it.user.as_str()], items[it.item.as_str()], it))
            .collect()
    };
    ordered.sort_by_key(|&(u, i, _)| (u, i));
    let rows: Vec<Interaction> = ordered.into_iter().map(|(_, _, it)| it.clone()).collect();
    let mut buf = Vec::new();
    write_interactions(&mut buf, &rows, Delimiter::Tsv, p.graph.has_labels()).map_err(|e| Error::io(&path, e))?;
    write_file(&path, &buf)?;
    write_pairs(&out.join("train.tsv"), &p.graph, p.split.train_graph.edges())?;
    write_pairs(&out.join("valid.tsv"), &p.graph, held_out(&p.split.valid_items))?;
    write_pairs(&out.join("test.tsv"), &p.graph, held_out(&p.split.test_items))?;
    write_file(&out.join(STATS), p.stats.to_kv().as_bytes())?;
    write_file(&out.join(CONFIG_SNAPSHOT), cfg.snapshot().as_bytes())?;
    Ok(p.stats)
}

pub fn init_params(cfg: &RunConfig, num_nodes: usize) -> Result<ModelParams> {
    ModelParams::init(
        num_nodes,
        cfg.dim,
        cfg.layers,
        cfg.mode,
        cfg.delta,
        cfg.norm_exponent,
        cfg.init,
        cfg.init_seed(),
        cfg.attention_seed(),
    )
}

pub struct TrainSummary {
    pub run_id: String,
    pub log: TrainLog,
    pub params: ModelParams,
    pub stats: DatasetStats,
}

/// Trains into `cfg.output`: resolved config, per-epoch log, the best
/// checkpoint (rewritten at every new best) and a run record.
pub fn cmd_train(cfg: &RunConfig, echo: bool) -> Result<TrainSummary> {
    let out = &cfg.output;
    ensure_dir(out)?;
    write_file(&out.join(CONFIG_SNAPSHOT), cfg.snapshot().as_bytes())?;
    let id = run_id(cfg)?;
    let started = Instant::now();
    let p = prepare(cfg)?;
    let params = init_params(cfg, p.split.train_graph.num_nodes())?;

    let log_path = out.join(TRAIN_LOG);
    let mut log_file = BufWriter::new(fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let ckpt = out.join(CHECKPOINT);
    let cutoff = cfg.train.cutoff;
    let split = &p.split;
    let outcome = fit_with(
        split,
        params,
        &cfg.train,
        |z| crate::eval::validation_ndcg(z, split, cutoff),
        |rec, best| {
            let line = rec.log_line(cutoff);
            if echo {
                println!("{line}");
            }
            writeln!(log_file, "{line}")
                .and_then(|_| log_file.flush())
                .map_err(|e| Error::io(&log_path, e))?;
            if let Some(params) = best {
                write_checkpoint(&ckpt, params)?;
            }
            Ok(())
        },
    )?;
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    if outcome.log.best_epoch.is_none() {
        write_checkpoint(&ckpt, &outcome.params)?;
    }

    let record = format!(
        "run_id={id}\nusers={}\nitems={}\ninteractions={}\nepochs={}\nbest_epoch={}\nbest_val_ndcg@{cutoff}={}\nearly_stopped={}\nwall_ms={}\n",
        p.stats.users,
        p.stats.items,
        p.stats.interactions,
        outcome.log.epochs.len(),
        outcome.log.best_epoch.map_or("NA".into(), |e| e.to_string()),
        fmt_metric(outcome.log.best_val_ndcg),
        outcome.log.early_stopped,
        started.elapsed().as_millis(),
    );
    write_file(&out.join(RUN_RECORD), record.as_bytes())?;
    Ok(TrainSummary {
        run_id: id,
        log: outcome.log,
        params: outcome.params,
        stats: p.stats,
    })
}

pub struct EvaluateSummary {
    pub run_id: String,
    pub overall: EvalReport,
    /// Long-tail then short-head; present only for stratified runs.
    pub strata: Option<[(Stratum, Option<EvalReport>); 2]>,
}

impl EvaluateSummary {
    /// `run_id,stratum,metric,value` rows; an undefined stratum or metric is `NA`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("run_id,stratum,metric,value\n");
        let mut emit = |stratum: Stratum, report: Option<&EvalReport>| {
            for (i, key) in METRIC_KEYS.iter().enumerate() {
                let value = report.and_then(|r| r.metrics()[i].1);
                let _ = writeln!(out, "{},{stratum},{key},{}", self.run_id, fmt_metric(value));
            }
        };
        emit(Stratum::All, Some(&self.overall));
        if let Some(strata) = &self.strata {
            for (s, r) in strata {
                emit(*s, r.as_ref());
            }
        }
        out
    }

    pub fn report_text(&self) -> String {
        let mut out = self.overall.to_kv();
        if let Some(strata) = &self.strata {
            for (s, r) in strata {
                out.push('\n');
                match r {
                    Some(r) => out.push_str(&r.to_kv()),
                    None => {
                        let _ = writeln!(out, "stratum={s}\nstatus=undefined (no test items in stratum)");
                    }
                }
            }
        }
        out
    }
}

pub fn load_run_config(run_dir: &Path) -> Result<RunConfig> {
    let map = read_kv_file(&run_dir.join(CONFIG_SNAPSHOT))?;
    RunConfig::resolve(&map, &Default::default())
}

/// Reloads a trained run, regenerates the final embeddings and scores the
/// test split; writes `metrics.csv` and `report.txt` into the run directory.
pub fn cmd_evaluate(run_dir: &Path, stratified: bool) -> Result<EvaluateSummary> {
    let cfg = load_run_config(run_dir)?;
    let params = read_checkpoint(&run_dir.join(CHECKPOINT))?;
    let p = prepare(&cfg)?;
    let graph = &p.split.train_graph;
    if params.x.rows() != graph.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint has {} embedding rows but the dataset has {} nodes",
            params.x.rows(),
            graph.num_nodes()
        )));
    }
    let (z, _) = fair_embedding_generation(graph, &params)?;
    let evaluator = Evaluator::new(&z, &p.split, Target::Test)?;
    let n = cfg.train.cutoff;
    let overall = evaluator.overall(n)?;
    let strata = if stratified {
        let s = evaluator.stratified(cfg.short_head_fraction, n)?;
        Some([(Stratum::LongTail, s.long_tail), (Stratum::ShortHead, s.short_head)])
    } else {
        None
    };
    let summary = EvaluateSummary {
        run_id: run_id(&cfg)?,
        overall,
        strata,
    };
    write_file(&run_dir.join(METRICS), summary.metrics_csv().as_bytes())?;
    write_file(&run_dir.join(REPORT), summary.report_text().as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Delta,
    Layers,
    Dim,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::Layers => "layers",
            SweepAxis::Dim => "dim",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(SweepAxis::Delta),
            "K" | "k" | "layers" => Ok(SweepAxis::Layers),
            "d" | "dim" => Ok(SweepAxis::Dim),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis '{other}' (delta, K, d)"))),
        }
    }
}

/// Expands `a,b,c` or an inclusive range `start:end:step`.
pub fn parse_values(spec: &str) -> Result<Vec<String>> {
    let bad = || Error::InvalidArgument(format!("cannot parse sweep values '{spec}'"));
    if let [start, end, step] = spec.split(':').collect::<Vec<_>>()[..] {
        let (start, end, step): (f64, f64, f64) = (
            start.trim().parse().map_err(|_| bad())?,
            end.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count)
            .map(|i| {
                let v = start + i as f64 * step;
                let rounded = (v * 1e10).round() / 1e10;
                format!("{rounded}")
            })
            .collect());
    }
    let values: Vec<String> = spec.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        Err(bad())
    } else {
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub result: std::result::Result<EvalReport, String>,
}

/// One train + evaluate per value, each in `out/<axis>=<value>`. A failed
/// child is recorded and the sweep moves on.
pub fn cmd_sweep(base: &RunConfig, axis: SweepAxis, values: &[String], out: &Path, echo: bool) -> Result<Vec<SweepRow>> {
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for value in values {
        let dir: PathBuf = out.join(format!("{}={value}", axis.key()));
        let result = (|| -> Result<EvalReport> {
            let cfg = base.with(axis.key(), value)?.with("output", &dir.to_string_lossy())?;
            cmd_train(&cfg, false)?;
            Ok(cmd_evaluate(&dir, false)?.overall)
        })()
        .map_err(|e| e.to_string());
        if echo {
            match &result {
                Ok(r) => println!("{}={value} ndcg={} pru={}", axis.key(), r.ndcg, fmt_metric(r.pru)),
                Err(e) => eprintln!("{}={value} failed: {e}", axis.key()),
            }
        }
        rows.push(SweepRow {
            value: value.clone(),
            result,
        });
    }
    let mut csv = String::from("value,ndcg,mrr,map,pru,pri\n");
    let mut failures = String::new();
    for row in &rows {
        match &row.result {
            Ok(r) => {
                let m = r.metrics();
                let cells: Vec<String> = m.iter().map(|(_, v)| fmt_metric(*v)).collect();
                let _ = writeln!(csv, "{},{}", row.value, cells.join(","));
            }
            Err(e) => {
                let _ = writeln!(csv, "{},NA,NA,NA,NA,NA", row.value);
                let _ = writeln!(failures, "{}={}: {e}", axis.key(), row.value);
            }
        }
    }
    write_file(&out.join("summary.csv"), csv.as_bytes())?;
    if !failures.is_empty() {
        write_file(&out.join("failures.txt"), failures.as_bytes())?;
    }
    Ok(rows)
}

/// Parses a metrics file back into `(stratum, metric, value)` triples.
pub fn read_metrics(path: &Path) -> Result<Vec<(String, String, Option<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::MalformedRow {
                row: n + 1,
                reason: format!("expected 4 fields, found {}", cells.len()),
            });
        }
        let value = if cells[3] == "NA" {
            None
        } else {
            Some(cells[3].parse::<f64>().map_err(|_| Error::MalformedRow {
                row: n + 1,
                reason: format!("bad value '{}'", cells[3]),
            })?)
        };
        out.push((cells[1].to_string(), cells[2].to_string(), value));
    }
    Ok(out)
}

/// Reads a `key=value` sidecar such as `stats.txt`.
pub fn read_sidecar(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}
