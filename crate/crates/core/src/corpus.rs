//! Document–keyword corpora and their bipartite graphs.
//!
//! A corpus is an ordered list of documents, each carrying a set of keyword
//! strings; the document order is the designed "linear" reading order. The
//! bipartite graph links every document to the keywords it contains, and is
//! the structure the policy network passes messages over.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::Real;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document {0:?} has an empty keyword list")]
    EmptyKeywords(String),
    #[error("corpus file has no documents")]
    Empty,
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("embedding file is missing keyword {0:?}")]
    MissingEmbedding(String),
    #[error("embedding at line {line} has {got} values, expected {expected}")]
    EmbeddingWidth { line: usize, got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub keywords: Vec<String>,
}

/// Ordered documents plus a free-text topic label. The order is the linear
/// prerequisite chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub topic: String,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    /// Parses the line-oriented corpus format:
    /// header `#corpus <topic>`, then one `<doc_id> :: <kw1> | <kw2> | ...`
    /// line per document, in reading order.
    pub fn parse(text: &str) -> Result<Corpus, CorpusError> {
        let mut topic = String::new();
        let mut documents: Vec<Document> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut saw_header = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#corpus") {
                topic = rest.trim().to_string();
                saw_header = true;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (id, kw_part) = line.split_once("::").ok_or_else(|| CorpusError::Parse {
                line: lineno,
                message: format!("expected `<doc_id> :: <keywords>`, got {line:?}"),
            })?;
            let id = id.trim().to_string();
            if id.is_empty() {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: "empty document id".into(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(CorpusError::DuplicateId(id));
            }
            let mut keywords = Vec::new();
            for kw in kw_part.split('|') {
                let kw = kw.trim().to_lowercase();
                if !kw.is_empty() && !keywords.contains(&kw) {
                    keywords.push(kw);
                }
            }
            if keywords.is_empty() {
                return Err(CorpusError::EmptyKeywords(id));
            }
            documents.push(Document { id, keywords });
        }

        if documents.is_empty() {
            return Err(CorpusError::Empty);
        }
        let _ = saw_header;
        Ok(Corpus { topic, documents })
    }

    pub fn to_file_format(&self) -> String {
        let mut out = format!("#corpus {}\n", self.topic);
        for doc in &self.documents {
            out.push_str(&format!("{} :: {}\n", doc.id, doc.keywords.join(" | ")));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_file_format())?;
        Ok(())
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    Corpus::parse(&text)
}

/// Bipartite document–keyword graph. Keyword vocabulary is indexed in
/// first-appearance order over the document list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    pub doc_count: usize,
    /// Vocabulary, one entry per keyword node.
    pub keywords: Vec<String>,
    /// Deduplicated `(doc index, keyword index)` pairs.
    pub edges: Vec<(usize, usize)>,
    /// Keyword neighbors of each document, sorted ascending.
    pub doc_neighbors: Vec<Vec<usize>>,
    /// Document neighbors of each keyword, sorted ascending.
    pub kw_neighbors: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn kw_count(&self) -> usize {
        self.keywords.len()
    }
}

pub fn build_graph(corpus: &Corpus) -> BipartiteGraph {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut keywords: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    let mut doc_neighbors = vec![Vec::new(); corpus.doc_count()];

    for (d, doc) in corpus.documents.iter().enumerate() {
        for kw in &doc.keywords {
            let w = *index.entry(kw.as_str()).or_insert_with(|| {
                keywords.push(kw.clone());
                keywords.len() - 1
            });
            if !doc_neighbors[d].contains(&w) {
                doc_neighbors[d].push(w);
                edges.push((d, w));
            }
        }
    }

    let mut kw_neighbors = vec![Vec::new(); keywords.len()];
    for &(d, w) in &edges {
        kw_neighbors[w].push(d);
    }
    for nbrs in doc_neighbors.iter_mut().chain(kw_neighbors.iter_mut()) {
        nbrs.sort_unstable();
    }

    BipartiteGraph { doc_count: corpus.doc_count(), keywords, edges, doc_neighbors, kw_neighbors }
}

/// Graph diameter; infinite iff the undirected bipartite graph is
/// disconnected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diameter {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub n_doc: usize,
    pub n_kw: usize,
    pub n_edges: usize,
    pub diameter: Diameter,
}

/// BFS eccentricity from every node of the undirected bipartite graph.
/// Documents occupy indices `0..doc_count`, keywords follow.
pub fn compute_stats(graph: &BipartiteGraph) -> CorpusStats {
    let n = graph.doc_count + graph.kw_count();
    let neighbor = |v: usize| -> &[usize] {
        if v < graph.doc_count {
            &graph.doc_neighbors[v]
        } else {
            &graph.kw_neighbors[v - graph.doc_count]
        }
    };
    let offset = |v: usize, nbr: usize| -> usize {
        if v < graph.doc_count {
            nbr + graph.doc_count
        } else {
            nbr
        }
    };

    let mut diameter = 0usize;
    let mut disconnected = false;
    let mut dist = vec![usize::MAX; n];
    for start in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &nbr in neighbor(v) {
                let u = offset(v, nbr);
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    diameter = diameter.max(dist[u]);
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        if reached < n {
            disconnected = true;
            break;
        }
    }

    CorpusStats {
        n_doc: graph.doc_count,
        n_kw: graph.kw_count(),
        n_edges: graph.edges.len(),
        diameter: if disconnected { Diameter::Infinite } else { Diameter::Finite(diameter) },
    }
}

/// Configuration for synthetic linear-corpus generation. Document `i`
/// introduces fresh keywords and reuses keywords from the previous
/// `reuse_window` documents, giving the linear keyword-introduction profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub n_docs: usize,
    /// Inclusive range of fresh keywords per document.
    pub new_kw_per_doc: (usize, usize),
    /// Inclusive range of reused keywords per document (clamped to
    /// availability).
    pub reuse_per_doc: (usize, usize),
    pub reuse_window: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Scale preset matching an 11-document corpus with roughly 31 keywords
    /// and 62 edges.
    pub fn corpus2_scale(seed: u64) -> Self {
        GeneratorConfig {
            n_docs: 11,
            new_kw_per_doc: (2, 3),
            reuse_per_doc: (2, 3),
            reuse_window: 3,
            seed,
        }
    }
}

pub fn generate_linear_corpus(cfg: &GeneratorConfig) -> Result<Corpus, CorpusError> {
    if cfg.n_docs < 1 {
        return Err(CorpusError::Config("n_docs must be >= 1".into()));
    }
    if cfg.new_kw_per_doc.0 < 1 || cfg.new_kw_per_doc.0 > cfg.new_kw_per_doc.1 {
        return Err(CorpusError::Config(format!(
            "new_kw_per_doc range {:?} invalid (min >= 1, min <= max)",
            cfg.new_kw_per_doc
        )));
    }
    if cfg.reuse_per_doc.0 > cfg.reuse_per_doc.1 {
        return Err(CorpusError::Config(format!(
            "reuse_per_doc range {:?} invalid",
            cfg.reuse_per_doc
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_doc_keywords: Vec<Vec<String>> = Vec::with_capacity(cfg.n_docs);
    let mut next_kw = 0usize;

    for i in 0..cfg.n_docs {
        let mut keywords = Vec::new();

        if i > 0 && cfg.reuse_window > 0 {
            // Pool: union of keywords from the previous reuse_window docs.
            let lo = i.saturating_sub(cfg.reuse_window);
            let mut pool: Vec<String> = Vec::new();
            for kws in &per_doc_keywords[lo..i] {
                for kw in kws {
                    if !pool.contains(kw) {
                        pool.push(kw.clone());
                    }
                }
            }
            let want = rng.gen_range(cfg.reuse_per_doc.0..=cfg.reuse_per_doc.1);
            let take = want.min(pool.len());
            pool.shuffle(&mut rng);
            pool.truncate(take);
            pool.sort_unstable();
            keywords.extend(pool);
        }

        let fresh = rng.gen_range(cfg.new_kw_per_doc.0..=cfg.new_kw_per_doc.1);
        for _ in 0..fresh {
            keywords.push(format!("w{next_kw:03}"));
            next_kw += 1;
        }
        per_doc_keywords.push(keywords);
    }

    let documents = per_doc_keywords
        .into_iter()
        .enumerate()
        .map(|(i, keywords)| Document { id: format!("d{:03}", i + 1), keywords })
        .collect();

    Ok(Corpus { topic: "synthetic-linear".into(), documents })
}

/// Source of keyword node input vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureProvider {
    /// Identity features; dimension equals the vocabulary size.
    OneHot,
    /// Pretrained embeddings loaded from a file, one
    /// `<keyword> <f1> <f2> ...` line per keyword.
    EmbeddingFile(PathBuf),
    /// Deterministic unit-norm vectors derived from `(seed, keyword)`;
    /// stands in for pretrained embeddings at desk scale.
    SeededRandom { dim: usize, seed: u64 },
}

impl FeatureProvider {
    /// Feature width for a given vocabulary size. `None` for embedding
    /// files before they are read.
    pub fn dim_for(&self, kw_count: usize) -> Option<usize> {
        match self {
            FeatureProvider::OneHot => Some(kw_count),
            FeatureProvider::SeededRandom { dim, .. } => Some(*dim),
            FeatureProvider::EmbeddingFile(_) => None,
        }
    }
}

/// One feature row per keyword node, `M x K_w`. Companion document features
/// are always zero vectors and are built by the policy.
pub fn keyword_features(
    provider: &FeatureProvider,
    graph: &BipartiteGraph,
) -> Result<Tensor<Real>, CorpusError> {
    let m = graph.kw_count();
    match provider {
        FeatureProvider::OneHot => {
            let mut data = vec![0.0; m * m];
            for i in 0..m {
                data[i * m + i] = 1.0;
            }
            Ok(Tensor::new(vec![m, m], data))
        }
        FeatureProvider::SeededRandom { dim, seed } => {
            let mut data = Vec::with_capacity(m * dim);
            for kw in &graph.keywords {
                data.extend(seeded_unit_vector(*seed, kw, *dim));
            }
            Ok(Tensor::new(vec![m, *dim], data))
        }
        FeatureProvider::EmbeddingFile(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut table: BTreeMap<String, Vec<Real>> = BTreeMap::new();
            let mut dim: Option<usize> = None;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let kw = parts.next().unwrap().to_lowercase();
                let values: Vec<Real> = parts
                    .map(|v| {
                        v.parse::<Real>().map_err(|e| CorpusError::Parse {
                            line: lineno + 1,
                            message: format!("bad embedding value {v:?}: {e}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                match dim {
                    None => dim = Some(values.len()),
                    Some(d) if d != values.len() => {
                        return Err(CorpusError::EmbeddingWidth {
                            line: lineno + 1,
                            got: values.len(),
                            expected: d,
                        })
                    }
                    _ => {}
                }
                table.insert(kw, values);
            }
            let dim = dim.ok_or(CorpusError::Empty)?;
            let mut data = Vec::with_capacity(m * dim);
            for kw in &graph.keywords {
                let row = table
                    .get(kw)
                    .ok_or_else(|| CorpusError::MissingEmbedding(kw.clone()))?;
                data.extend_from_slice(row);
            }
            Ok(Tensor::new(vec![m, dim], data))
        }
    }
}

/// Unit-norm vector determined by `(seed, keyword)` via SHA-256, so the
/// result is stable across platforms and runs.
fn seeded_unit_vector(seed: u64, keyword: &str, dim: usize) -> Vec<Real> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(keyword.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes));
    let mut v: Vec<Real> = (0..dim).map(|_| rng.gen::<Real>() * 2.0 - 1.0).collect();
    let norm = v.iter().map(|x| x * x).sum::<Real>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}
