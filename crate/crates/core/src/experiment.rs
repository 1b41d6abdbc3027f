//! Experiment configuration, run orchestration, and CSV export.
//!
//! Config files are flat key-value text with bracketed sections:
//!
//! ```text
//! [corpus]   path=corpus.txt            # or generator.docs=11 generator.seed=7 ...
//! [features] kind=one_hot               # one_hot | embedding_file | seeded_random
//! [train]    lr=0.0005 gamma=0 episodes=50 batch=16 repeat=15 seeds=0..24
//!            hidden=32 heads=2 policy=gnn
//! [output]   dir=runs/exp1
//! ```
//!
//! All training defaults reproduce the reference configuration, so an empty
//! `[train]` section is a valid experiment. CSV files carry a `# pathrec ...
//! v1` comment line; the column sets never change without a version bump
//! there. Files are written to a temp path and atomically renamed, so a
//! failed run never leaves a partial CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{
    build_graph, compute_stats, generate_linear_corpus, load_corpus, Corpus, CorpusError,
    CorpusStats, Diameter, FeatureProvider, GeneratorConfig,
};
use crate::trainer::{
    aggregate_seeds, run_random_baseline, run_training, LearningCurve, SeedSummary, TrainConfig,
    TrainError,
};

pub const CURVES_HEADER: &str = "# pathrec curves v1\nseed,episode,return\n";
pub const SUMMARY_HEADER: &str = "# pathrec summary v1\nepisode,mean,stddev\n";
pub const STATS_HEADER: &str = "# pathrec stats v1\ndocs,keywords,edges,diameter\n";
pub const COMPARE_HEADER: &str = "# pathrec compare v1\nconfig,final_mean,final_stddev\n";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code: 1 for configuration problems, 2 for runtime or
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Corpus(e) => match e {
                CorpusError::Io(_) => 2,
                _ => 1,
            },
            ExperimentError::Train(TrainError::Config(_)) => 1,
            ExperimentError::Train(_) => 2,
            ExperimentError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusSource {
    Path(PathBuf),
    Generator(GeneratorConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Gnn,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus_source: CorpusSource,
    pub provider: FeatureProvider,
    pub train: TrainConfig,
    pub policy: PolicyKind,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses the sectioned key-value format. Tokens are
    /// whitespace-separated, so keys may share a line with their section
    /// header.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for raw_line in text.lines() {
            let line = raw_line.split('#').next().unwrap_or("");
            for token in line.split_whitespace() {
                if let Some(name) = token.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                    section = name.to_string();
                } else if let Some((key, value)) = token.split_once('=') {
                    values.insert(format!("{section}.{key}"), value.to_string());
                } else {
                    return Err(ExperimentError::Config(format!(
                        "unexpected token {token:?} in section [{section}]"
                    )));
                }
            }
        }
        Self::from_values(&values)
    }

    fn from_values(values: &BTreeMap<String, String>) -> Result<Self, ExperimentError> {
        let field = |key: &str| values.get(key).map(String::as_str);
        let bad = |key: &str, why: String| ExperimentError::Config(format!("{key}: {why}"));
        fn parse_as<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ExperimentError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e| ExperimentError::Config(format!("{key}: invalid value {v:?} ({e})")))
        }

        // Corpus source: exactly one of a file path or a generator spec.
        let has_generator = values.keys().any(|k| k.starts_with("corpus.generator."));
        let corpus_source = match (field("corpus.path"), has_generator) {
            (Some(_), true) => {
                return Err(bad("corpus", "specify either path or generator.*, not both".into()))
            }
            (None, false) => return Err(bad("corpus", "missing path or generator.*".into())),
            (Some(p), false) => CorpusSource::Path(PathBuf::from(p)),
            (None, true) => {
                let get = |key: &str, default: usize| -> Result<usize, ExperimentError> {
                    match field(key) {
                        Some(v) => parse_as(key, v),
                        None => Ok(default),
                    }
                };
                let docs = match field("corpus.generator.docs") {
                    Some(v) => parse_as("corpus.generator.docs", v)?,
                    None => return Err(bad("corpus.generator.docs", "required".into())),
                };
                let seed = match field("corpus.generator.seed") {
                    Some(v) => parse_as("corpus.generator.seed", v)?,
                    None => 0u64,
                };
                CorpusSource::Generator(GeneratorConfig {
                    n_docs: docs,
                    new_kw_per_doc: (
                        get("corpus.generator.new_min", 2)?,
                        get("corpus.generator.new_max", 3)?,
                    ),
                    reuse_per_doc: (
                        get("corpus.generator.reuse_min", 2)?,
                        get("corpus.generator.reuse_max", 3)?,
                    ),
                    reuse_window: get("corpus.generator.window", 3)?,
                    seed,
                })
            }
        };

        let provider = match field("features.kind").unwrap_or("one_hot") {
            "one_hot" => FeatureProvider::OneHot,
            "embedding_file" => {
                let p = field("features.path")
                    .ok_or_else(|| bad("features.path", "required for embedding_file".into()))?;
                FeatureProvider::EmbeddingFile(PathBuf::from(p))
            }
            "seeded_random" => FeatureProvider::SeededRandom {
                dim: match field("features.dim") {
                    Some(v) => parse_as("features.dim", v)?,
                    None => 100,
                },
                seed: match field("features.seed") {
                    Some(v) => parse_as("features.seed", v)?,
                    None => 0,
                },
            },
            other => return Err(bad("features.kind", format!("unknown kind {other:?}"))),
        };
        if let CorpusSource::Path(p) = &corpus_source {
            if !p.exists() {
                return Err(bad("corpus.path", format!("file {} does not exist", p.display())));
            }
        }
        if let FeatureProvider::EmbeddingFile(p) = &provider {
            if !p.exists() {
                return Err(bad("features.path", format!("file {} does not exist", p.display())));
            }
        }

        let mut train = TrainConfig::default();
        if let Some(v) = field("train.lr") {
            train.learning_rate = parse_as("train.lr", v)?;
        }
        if let Some(v) = field("train.gamma") {
            train.gamma = parse_as("train.gamma", v)?;
        }
        if let Some(v) = field("train.episodes") {
            train.episodes = parse_as("train.episodes", v)?;
        }
        if let Some(v) = field("train.batch") {
            train.batch_size = parse_as("train.batch", v)?;
        }
        if let Some(v) = field("train.repeat") {
            train.repeat_per_collect = parse_as("train.repeat", v)?;
        }
        if let Some(v) = field("train.episodes_per_collect") {
            train.episodes_per_collect = parse_as("train.episodes_per_collect", v)?;
        }
        if let Some(v) = field("train.hidden") {
            train.hidden_dim = parse_as("train.hidden", v)?;
        }
        if let Some(v) = field("train.heads") {
            train.heads = parse_as("train.heads", v)?;
        }
        if let Some(v) = field("train.seeds") {
            train.seeds = parse_seeds(v).map_err(|why| bad("train.seeds", why))?;
        }
        train.validate()?;

        let policy = match field("train.policy").unwrap_or("gnn") {
            "gnn" => PolicyKind::Gnn,
            "random" => PolicyKind::Random,
            other => return Err(bad("train.policy", format!("unknown policy {other:?}"))),
        };

        let output_dir = PathBuf::from(field("output.dir").unwrap_or("runs/out"));
        Ok(ExperimentConfig { corpus_source, provider, train, policy, output_dir })
    }

    pub fn corpus(&self) -> Result<Corpus, ExperimentError> {
        match &self.corpus_source {
            CorpusSource::Path(p) => Ok(load_corpus(p)?),
            CorpusSource::Generator(cfg) => Ok(generate_linear_corpus(cfg)?),
        }
    }
}

/// `a..b` (inclusive), a comma list, or a single integer.
fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let lo: u64 = a.parse().map_err(|_| format!("invalid range start {a:?}"))?;
        let hi: u64 = b.parse().map_err(|_| format!("invalid range end {b:?}"))?;
        if lo > hi {
            return Err(format!("empty seed range {v:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("invalid seed {s:?}")))
        .collect()
}

/// Writes via a temp file and atomic rename; no partial files on failure.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), std::io::Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn curves_to_csv(curves: &[LearningCurve]) -> String {
    let mut out = String::from(CURVES_HEADER);
    for curve in curves {
        for (e, r) in curve.returns.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", curve.seed, e + 1, r);
        }
    }
    out
}

pub fn summary_to_csv(summary: &SeedSummary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    for (e, (m, s)) in summary.mean.iter().zip(&summary.stddev).enumerate() {
        let _ = writeln!(out, "{},{},{}", e + 1, m, s);
    }
    let _ = writeln!(out, "# final {} ± {}", summary.final_mean, summary.final_stddev);
    out
}

pub fn stats_to_csv(stats: &CorpusStats) -> String {
    format!(
        "{STATS_HEADER}{},{},{},{}\n",
        stats.n_doc, stats.n_kw, stats.n_edges, stats.diameter
    )
}

pub fn stats_from_csv(text: &str) -> Result<CorpusStats, ExperimentError> {
    let row = text
        .lines()
        .find(|l| !l.starts_with('#') && !l.starts_with("docs,") && !l.trim().is_empty())
        .ok_or_else(|| ExperimentError::Config("stats CSV has no data row".into()))?;
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != 4 {
        return Err(ExperimentError::Config(format!("stats row {row:?} must have 4 fields")));
    }
    let num = |s: &str| -> Result<usize, ExperimentError> {
        s.parse().map_err(|_| ExperimentError::Config(format!("bad stats value {s:?}")))
    };
    Ok(CorpusStats {
        n_doc: num(fields[0])?,
        n_kw: num(fields[1])?,
        n_edges: num(fields[2])?,
        diameter: if fields[3] == "inf" {
            Diameter::Infinite
        } else {
            Diameter::Finite(num(fields[3])?)
        },
    })
}

pub struct TrainOutputs {
    pub curves: Vec<LearningCurve>,
    pub summary: SeedSummary,
}

/// Runs the configured experiment and writes `curves.csv` and
/// `summary.csv` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrainOutputs, ExperimentError> {
    let corpus = cfg.corpus()?;
    let curves = match cfg.policy {
        PolicyKind::Gnn => run_training(&cfg.train, &corpus, &cfg.provider)?,
        PolicyKind::Random => cfg
            .train
            .seeds
            .iter()
            .map(|&seed| run_random_baseline(&corpus, cfg.train.episodes, seed))
            .collect(),
    };
    let summary = aggregate_seeds(&curves);
    write_atomic(&cfg.output_dir.join("curves.csv"), &curves_to_csv(&curves))?;
    write_atomic(&cfg.output_dir.join("summary.csv"), &summary_to_csv(&summary))?;
    Ok(TrainOutputs { curves, summary })
}

/// Runs several configs sharing a corpus and episode count; returns the
/// joined comparison CSV, one row per config.
pub fn run_comparison(
    labels_and_configs: &[(String, ExperimentConfig)],
) -> Result<String, ExperimentError> {
    if labels_and_configs.len() < 2 {
        return Err(ExperimentError::Config("compare needs at least 2 configs".into()));
    }
    let first = &labels_and_configs[0].1;
    let reference = first.corpus()?;
    for (label, cfg) in &labels_and_configs[1..] {
        if cfg.corpus()? != reference {
            return Err(ExperimentError::Config(format!(
                "config {label:?} uses a different corpus than {:?}",
                labels_and_configs[0].0
            )));
        }
        if cfg.train.episodes != first.train.episodes {
            return Err(ExperimentError::Config(format!(
                "config {label:?} uses a different episode count"
            )));
        }
    }
    let mut out = String::from(COMPARE_HEADER);
    for (label, cfg) in labels_and_configs {
        let result = run_experiment(cfg)?;
        let _ = writeln!(out, "{label},{},{}", result.summary.final_mean, result.summary.final_stddev);
    }
    Ok(out)
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    compute_stats(&build_graph(corpus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(dir: &Path) -> String {
        format!(
            "[corpus] generator.docs=3 generator.seed=1 generator.new_min=1 generator.new_max=2 \
             generator.reuse_min=1 generator.reuse_max=1 generator.window=1\n\
             [features] kind=one_hot\n\
             [train] episodes=2 seeds=0..1 hidden=4\n\
             [output] dir={}\n",
            dir.display()
        )
    }

    #[test]
    fn parse_defaults_match_reference_configuration() {
        let cfg = ExperimentConfig::parse(
            "[corpus] generator.docs=11 generator.seed=7\n[features] kind=one_hot\n[train]\n",
        )
        .unwrap();
        assert_eq!(cfg.train.learning_rate, 0.0005);
        assert_eq!(cfg.train.gamma, 0.0);
        assert_eq!(cfg.train.episodes, 50);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.repeat_per_collect, 15);
        assert_eq!(cfg.train.episodes_per_collect, 1);
        assert_eq!(cfg.train.hidden_dim, 32);
        assert_eq!(cfg.train.heads, 2);
        assert_eq!(cfg.train.seeds.len(), 25);
        assert_eq!(cfg.policy, PolicyKind::Gnn);
    }

    #[test]
    fn parse_rejects_ambiguous_and_missing_corpus() {
        let err = ExperimentConfig::parse("[corpus] path=a.txt generator.docs=3\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config(msg) if msg.contains("not both")));
        let err = ExperimentConfig::parse("[features] kind=one_hot\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Config(msg) if msg.starts_with("corpus")));
    }

    #[test]
    fn parse_reports_field_paths() {
        let err = ExperimentConfig::parse(
            "[corpus] generator.docs=3\n[train] gamma=banana\n",
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Config(msg) if msg.contains("train.gamma")));
    }

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..24").unwrap().len(), 25);
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("1,5,9").unwrap(), vec![1, 5, 9]);
        assert!(parse_seeds("9..1").is_err());
    }

    #[test]
    fn stats_csv_round_trip() {
        for stats in [
            CorpusStats { n_doc: 11, n_kw: 31, n_edges: 62, diameter: Diameter::Finite(6) },
            CorpusStats { n_doc: 18, n_kw: 41, n_edges: 66, diameter: Diameter::Infinite },
        ] {
            let csv = stats_to_csv(&stats);
            assert_eq!(stats_from_csv(&csv).unwrap(), stats);
        }
    }

    #[test]
    fn run_experiment_writes_stable_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(&base_config(dir.path())).unwrap();
        run_experiment(&cfg).unwrap();
        let a = std::fs::read_to_string(cfg.output_dir.join("curves.csv")).unwrap();
        assert!(a.starts_with(CURVES_HEADER));
        run_experiment(&cfg).unwrap();
        let b = std::fs::read_to_string(cfg.output_dir.join("curves.csv")).unwrap();
        assert_eq!(a, b);
        assert!(!cfg.output_dir.join("curves.tmp").exists());
    }

    #[test]
    fn random_policy_final_mean_near_one() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[corpus] generator.docs=11 generator.seed=7\n\
             [features] kind=one_hot\n\
             [train] policy=random episodes=400 seeds=0..24\n\
             [output] dir={}\n",
            dir.path().display()
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let out = run_experiment(&cfg).unwrap();
        // 10,000 random episodes in total.
        let all: Vec<f64> = out.curves.iter().flat_map(|c| c.returns.iter().copied()).collect();
        assert_eq!(all.len(), 10_000);
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((0.8..=1.2).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn comparison_requires_shared_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let a = ExperimentConfig::parse(&base_config(dir.path())).unwrap();
        let mut b = a.clone();
        b.corpus_source = CorpusSource::Generator(GeneratorConfig {
            n_docs: 4,
            new_kw_per_doc: (1, 2),
            reuse_per_doc: (1, 1),
            reuse_window: 1,
            seed: 2,
        });
        let err = run_comparison(&[("a".into(), a), ("b".into(), b)]).unwrap_err();
        assert!(matches!(err, ExperimentError::Config(msg) if msg.contains("different corpus")));
    }

    #[test]
    fn identical_configs_compare_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ExperimentConfig::parse(&base_config(dir.path())).unwrap();
        a.policy = PolicyKind::Random;
        let b = a.clone();
        let csv = run_comparison(&[("a".into(), a), ("b".into(), b)]).unwrap();
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].split_once(',').unwrap().1, rows[1].split_once(',').unwrap().1);
    }
}
