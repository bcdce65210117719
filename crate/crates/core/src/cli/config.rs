//! Run configuration: flat `key=value` files, layered as
//! flag > config file > default, and written back as a resolved snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{ColumnLayout, Delimiter, InputFormat, SplitRatios};
use crate::error::{Error, Result};
use crate::model::{InitScheme, Mode};
use crate::seed::{sub_seed, Stream};
use crate::train::{Optimizer, TrainConfig};

/// Every recognised key with its default; `None` marks a key without one.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("dataset", None),
    ("delimiter", Some("tsv")),
    ("columns", Some("user,item")),
    ("k_core", Some("10")),
    ("split", Some("0.8,0.1,0.1")),
    ("seed", Some("0")),
    ("mode", Some("hetrofair")),
    ("layers", Some("4")),
    ("dim", Some("128")),
    ("delta", None),
    ("learning_rate", Some("0.0005")),
    ("reg_beta", Some("0.0001")),
    ("batch_size", Some("2048")),
    ("max_epochs", Some("1000")),
    ("patience", Some("15")),
    ("eval_every", Some("1")),
    ("cutoff", Some("20")),
    ("init", Some("xavier")),
    ("norm_exponent", Some("0.5")),
    ("optimizer", Some("adam")),
    ("freeze_w", Some("false")),
    ("short_head_fraction", Some("0.2")),
    ("output", Some("runs/default")),
];

/// Where the interactions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File(PathBuf),
    /// `synthetic:beauty[:seed]`, the built-in surrogate generator.
    Synthetic { seed: u64 },
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("synthetic:") {
            Some(rest) => {
                let mut parts = rest.splitn(2, ':');
                match (parts.next(), parts.next()) {
                    (Some("beauty"), None) => Ok(DatasetSource::Synthetic { seed: 0 }),
                    (Some("beauty"), Some(seed)) => seed
                        .parse()
                        .map(|seed| DatasetSource::Synthetic { seed })
                        .map_err(|_| Error::InvalidArgument(format!("bad synthetic seed '{seed}'"))),
                    _ => Err(Error::InvalidArgument(format!("unknown synthetic dataset '{s}'"))),
                }
            }
            None if s.is_empty() => Err(Error::InvalidArgument("dataset path is empty".into())),
            None => Ok(DatasetSource::File(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub format: InputFormat,
    pub k_core: usize,
    pub split: SplitRatios,
    /// Master seed; init, split and sampling seeds derive from it.
    pub seed: u64,
    pub mode: Mode,
    pub layers: usize,
    pub dim: usize,
    pub delta: f64,
    pub train: TrainConfig,
    pub init: InitScheme,
    pub norm_exponent: f64,
    pub short_head_fraction: f64,
    pub output: PathBuf,
    raw: BTreeMap<String, String>,
}

/// Parses a `key=value` file. Blank lines and `#` comments are ignored.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => problems.push(format!("line {}: expected key=value, got '{line}'", n + 1)),
        }
    }
    if problems.is_empty() {
        Ok(map)
    } else {
        Err(Error::Config(problems))
    }
}

pub fn read_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}

fn parse_split(s: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("split must be three numbers, got '{s}'")))?;
    match parts[..] {
        [a, b, c] => SplitRatios::new(a, b, c),
        _ => Err(Error::InvalidArgument(format!("split must be three numbers, got '{s}'"))),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("expected true/false, got '{s}'"))),
    }
}

impl RunConfig {
    /// Layers `file` over the defaults and `flags` over both, then parses
    /// everything, reporting every problem at once.
    pub fn resolve(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut problems = Vec::new();
        let known = |k: &str| KEYS.iter().any(|(name, _)| *name == k);
        for k in file.keys().chain(flags.keys()) {
            if !known(k) {
                problems.push(format!("unknown key '{k}'"));
            }
        }
        let mut raw: BTreeMap<String, String> = KEYS
            .iter()
            .filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string())))
            .collect();
        raw.extend(file.iter().map(|(k, v)| (k.clone(), v.clone())));
        raw.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));

        macro_rules! field {
            ($key:expr, $parse:expr) => {{
                match raw.get($key) {
                    Some(v) => match $parse(v.as_str()) {
                        Ok(x) => Some(x),
                        Err(e) => {
                            problems.push(format!("{}: {}", $key, e));
                            None
                        }
                    },
                    None => None,
                }
            }};
        }
        fn num<T: FromStr>(s: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| format!("'{s}': {e}"))
        }
        fn lib<T>(r: Result<T>) -> std::result::Result<T, String> {
            r.map_err(|e| e.to_string())
        }

        let dataset = field!("dataset", |s: &str| lib(s.parse::<DatasetSource>()));
        if !raw.contains_key("dataset") {
            problems.push("dataset: required".to_string());
        }
        let delimiter = field!("delimiter", |s: &str| lib(s.parse::<Delimiter>()));
        let columns = field!("columns", |s: &str| lib(s.parse::<ColumnLayout>()));
        let k_core = field!("k_core", num::<usize>);
        let split = field!("split", |s: &str| lib(parse_split(s)));
        let seed = field!("seed", num::<u64>);
        let mode = field!("mode", |s: &str| lib(s.parse::<Mode>()));
        let layers = field!("layers", num::<usize>);
        let dim = field!("dim", num::<usize>);
        let delta = field!("delta", num::<f64>);
        let learning_rate = field!("learning_rate", num::<f64>);
        let reg_beta = field!("reg_beta", num::<f64>);
        let batch_size = field!("batch_size", num::<usize>);
        let max_epochs = field!("max_epochs", num::<usize>);
        let patience = field!("patience", num::<usize>);
        let eval_every = field!("eval_every", num::<usize>);
        let cutoff = field!("cutoff", num::<usize>);
        let init = field!("init", |s: &str| lib(s.parse::<InitScheme>()));
        let norm_exponent = field!("norm_exponent", num::<f64>);
        let optimizer = field!("optimizer", |s: &str| lib(s.parse::<Optimizer>()));
        let freeze_w = field!("freeze_w", |s: &str| lib(parse_bool(s)));
        let short_head_fraction = field!("short_head_fraction", num::<f64>);
        let output = raw.get("output").map(PathBuf::from);

        // delta is only read by the attention modes
        let delta = match (mode, delta) {
            (_, Some(d)) => Some(d),
            (Some(Mode::LightGcn), None) => Some(1.0),
            (Some(_), None) => {
                problems.push("delta: required for the attention modes".to_string());
                None
            }
            (None, None) => None,
        };
        if let Some(d) = delta {
            if !(d > 0.0 && d <= 1.0) {
                problems.push(format!("delta: must lie in (0, 1], got {d}"));
            }
        }
        for (name, v) in [("k_core", k_core), ("layers", layers), ("dim", dim)] {
            if v == Some(0) {
                problems.push(format!("{name}: must be >= 1"));
            }
        }
        if let Some(f) = short_head_fraction {
            if !(f > 0.0 && f <= 1.0) {
                problems.push(format!("short_head_fraction: must lie in (0, 1], got {f}"));
            }
        }
        if norm_exponent.is_some_and(|e: f64| !e.is_finite()) {
            problems.push("norm_exponent: must be finite".to_string());
        }

        let train = match (learning_rate, reg_beta, batch_size, max_epochs, patience, eval_every, optimizer, freeze_w, cutoff, seed) {
            (Some(lr), Some(beta), Some(bs), Some(me), Some(p), Some(ee), Some(opt), Some(fw), Some(n), Some(seed)) => {
                let t = TrainConfig {
                    learning_rate: lr,
                    reg_beta: beta,
                    batch_size: bs,
                    max_epochs: me,
                    patience: p,
                    seed: sub_seed(seed, Stream::Sampling),
                    eval_every: ee,
                    optimizer: opt,
                    freeze_w: fw,
                    cutoff: n,
                };
                if let Err(Error::Config(p)) = t.validate() {
                    problems.extend(p);
                }
                Some(t)
            }
            _ => None,
        };

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut cfg = Self {
            dataset: dataset.expect("checked"),
            format: InputFormat {
                delimiter: delimiter.expect("checked"),
                columns: columns.expect("checked"),
            },
            k_core: k_core.expect("checked"),
            split: split.expect("checked"),
            seed: seed.expect("checked"),
            mode: mode.expect("checked"),
            layers: layers.expect("checked"),
            dim: dim.expect("checked"),
            delta: delta.expect("checked"),
            train: train.expect("checked"),
            init: init.expect("checked"),
            norm_exponent: norm_exponent.expect("checked"),
            short_head_fraction: short_head_fraction.expect("checked"),
            output: output.expect("defaulted"),
            raw: BTreeMap::new(),
        };
        raw.insert("delta".into(), format!("{}", cfg.delta));
        cfg.raw = raw;
        Ok(cfg)
    }

    /// Resolves from an optional file plus flag overrides.
    pub fn load(file: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let base = match file {
            Some(p) => read_kv_file(p)?,
            None => BTreeMap::new(),
        };
        Self::resolve(&base, flags)
    }

    /// Same configuration with one key replaced.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut flags = self.raw.clone();
        flags.insert(key.to_string(), value.to_string());
        Self::resolve(&BTreeMap::new(), &flags)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.raw.get(key).map(String::as_str)
    }

    /// Canonical snapshot: every key, sorted, one `key=value` per line.
    pub fn snapshot(&self) -> String {
        self.raw.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn init_seed(&self) -> u64 {
        sub_seed(self.seed, Stream::Init)
    }

    pub fn attention_seed(&self) -> u64 {
        sub_seed(self.seed, Stream::AttentionInit)
    }

    pub fn split_seed(&self) -> u64 {
        sub_seed(self.seed, Stream::Split)
    }
}
