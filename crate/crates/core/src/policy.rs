//! Bipartite graph-attention recommendation policy.
//!
//! The policy builds document and keyword embeddings by alternating
//! attention-weighted message passing between the two node types, injects
//! the learner's per-document feedback and the remaining session time via
//! gated MLPs, and scores every document with a final MLP followed by a
//! softmax. The parameter count depends only on the embedding dimensions
//! and head count, never on the graph size.
//!
//! Layout of one forward pass:
//!
//! ```text
//! features --proj--> h_w
//! BLOCK1:  kw->doc, doc->kw, kw->doc          -> h_d2
//! feedback gate:  h_d2 (x) MLP(feedback)      -> h_phi
//! BLOCK2:  doc->kw (knowledge state), kw->doc -> h_d3
//! time gate:      h_d3 (x) MLP(T - t)         -> h_tau
//! scoring MLP + softmax over documents        -> action distribution
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParameterSet, Tensor, Var};
use crate::corpus::BipartiteGraph;
use crate::learner::Feedback;
use crate::Real;

/// Number of feedback categories (too hard, too easy, right level, not
/// visited).
pub const FEEDBACK_DIM: usize = 4;
/// The remaining time is a raw 1-dimensional counter.
pub const TIME_DIM: usize = 1;
/// Distinct GAT applications across both blocks, each with its own
/// parameters.
const GAT_LAYER_NAMES: [&str; 5] =
    ["block1.l0", "block1.l1", "block1.l2", "block2.l0", "block2.l1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    /// Keyword feature width `K_w` (e.g. vocabulary size for one-hot, 100
    /// for pretrained embeddings).
    pub feature_dim: usize,
    /// Embedding width `K`.
    pub hidden_dim: usize,
    /// Feedback encoding width `K_d`.
    pub feedback_dim: usize,
    /// Remaining-time encoding width.
    pub time_dim: usize,
    pub heads: usize,
}

impl PolicyDims {
    pub fn new(feature_dim: usize, hidden_dim: usize, heads: usize) -> Self {
        PolicyDims {
            feature_dim,
            hidden_dim,
            feedback_dim: FEEDBACK_DIM,
            time_dim: TIME_DIM,
            heads,
        }
    }

    /// Total trainable scalar count; a function of the dims only.
    pub fn parameter_count(&self) -> usize {
        let k = self.hidden_dim;
        let per_head = k * k + k + k; // W, B, attention vector v
        let gat = GAT_LAYER_NAMES.len() * self.heads * per_head;
        let proj = self.feature_dim * k;
        let mlp = |k1: usize, k2: usize| k1 * k + k + k * k2 + k2;
        gat + proj + mlp(self.feedback_dim, k) + mlp(self.time_dim, k) + mlp(k, 1)
    }
}

/// Per-document feedback record: the policy's observation summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFeedback {
    NotVisited,
    Seen(Feedback),
}

impl DocFeedback {
    /// Index into the `K_d = 4` one-hot encoding.
    fn one_hot_index(self) -> usize {
        match self {
            DocFeedback::Seen(Feedback::TooHard) => 0,
            DocFeedback::Seen(Feedback::TooEasy) => 1,
            DocFeedback::Seen(Feedback::RightLevel) => 2,
            DocFeedback::NotVisited => 3,
        }
    }
}

/// Feedback per document plus the step counter within a fixed horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub feedback: Vec<DocFeedback>,
    pub step: usize,
    pub horizon: usize,
}

impl SessionState {
    pub fn new(doc_count: usize, horizon: usize) -> Self {
        SessionState { feedback: vec![DocFeedback::NotVisited; doc_count], step: 0, horizon }
    }

    /// Records an observation: the latest feedback for the selected
    /// document, then advances the step counter.
    pub fn observe(&mut self, doc: usize, feedback: Feedback) {
        self.feedback[doc] = DocFeedback::Seen(feedback);
        self.step += 1;
        assert!(self.step <= self.horizon);
    }

    pub fn remaining(&self) -> usize {
        self.horizon - self.step
    }

    fn one_hot_matrix(&self) -> Tensor<Real> {
        let n = self.feedback.len();
        let mut data = vec![0.0; n * FEEDBACK_DIM];
        for (d, fb) in self.feedback.iter().enumerate() {
            data[d * FEEDBACK_DIM + fb.one_hot_index()] = 1.0;
        }
        Tensor::new(vec![n, FEEDBACK_DIM], data)
    }
}

/// Softmax output over documents.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<Real>,
    pub log_probs: Vec<Real>,
}

/// Forward-pass result. `graph` retains the computation record so a loss
/// built on `log_probs` can be backpropagated to the parameters.
pub struct PolicyOutput {
    pub graph: Graph<Real>,
    /// `[doc_count]` probabilities.
    pub probs: Var,
    /// `[doc_count]` log-probabilities in the recorded graph.
    pub log_probs: Var,
    pub dist: ActionDistribution,
    /// Estimated knowledge state: keyword embeddings after BLOCK2's
    /// doc->kw pass, `M x K`.
    pub knowledge_state: Tensor<Real>,
    /// Pre-softmax document scores, `[doc_count]`.
    pub scores: Tensor<Real>,
}

/// Glorot-uniform initialization of all policy parameters; biases zero.
/// Deterministic per seed.
pub fn init_policy(dims: &PolicyDims, seed: u64) -> ParameterSet<Real> {
    assert!(
        dims.feature_dim >= 1
            && dims.hidden_dim >= 1
            && dims.feedback_dim >= 1
            && dims.time_dim >= 1
            && dims.heads >= 1,
        "invalid policy dims {dims:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let k = dims.hidden_dim;

    let glorot = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| -> Tensor<Real> {
        let bound = (6.0 / (rows + cols) as Real).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen::<Real>() * 2.0 * bound - bound).collect();
        Tensor::new(vec![rows, cols], data)
    };

    params.insert("proj.w", glorot(&mut rng, dims.feature_dim, k));
    for layer in GAT_LAYER_NAMES {
        for h in 0..dims.heads {
            params.insert(&format!("{layer}.h{h}.w"), glorot(&mut rng, k, k));
            params.insert(&format!("{layer}.h{h}.b"), Tensor::zeros(vec![1, k]));
            params.insert(&format!("{layer}.h{h}.v"), glorot(&mut rng, k, 1));
        }
    }
    let mlp = |rng: &mut ChaCha8Rng, params: &mut ParameterSet<Real>, name: &str, k1: usize, k2: usize| {
        params.insert(&format!("{name}.a1"), glorot(rng, k1, k));
        params.insert(&format!("{name}.b1"), Tensor::zeros(vec![1, k]));
        params.insert(&format!("{name}.a2"), glorot(rng, k, k2));
        params.insert(&format!("{name}.b2"), Tensor::zeros(vec![1, k2]));
    };
    mlp(&mut rng, &mut params, "mlp_feedback", dims.feedback_dim, k);
    mlp(&mut rng, &mut params, "mlp_time", dims.time_dim, k);
    mlp(&mut rng, &mut params, "mlp_score", k, 1);

    debug_assert_eq!(params.num_scalars(), dims.parameter_count());
    params
}

/// Attention coefficients of one receiver over its neighborhood:
/// `softmax_i( v^T tanh(W h_i + W h_recv) )`. `neighbor_embs` is `n x K`,
/// `receiver_emb` is `1 x K`.
pub fn attention_coefficients(
    g: &mut Graph<Real>,
    w: Var,
    v: Var,
    neighbor_embs: Var,
    receiver_emb: Var,
) -> Var {
    let n = g.shape(neighbor_embs)[0];
    let p = g.matmul(neighbor_embs, w);
    let q0 = g.matmul(receiver_emb, w);
    let q = g.repeat_row(q0, n);
    let s = g.add(p, q);
    let t = g.tanh(s);
    let e = g.matmul(t, v);
    let e = g.reshape(e, vec![n]);
    let all: Vec<usize> = (0..n).collect();
    g.masked_softmax(e, &all)
}

/// One bipartite GAT application: per receiver, an attention-weighted sum
/// of transformed source-node embeddings plus bias, heads averaged, then
/// ReLU. Empty neighborhoods contribute a zero aggregate; bias and
/// activation still apply.
fn gat_apply(
    g: &mut Graph<Real>,
    params: &ParameterSet<Real>,
    layer: &str,
    heads: usize,
    src: Var,
    recv: Var,
    neighbors: &[Vec<usize>],
) -> Var {
    let k = g.shape(src)[1];
    let n_recv = neighbors.len();
    let mut head_outputs = Vec::with_capacity(heads);

    for h in 0..heads {
        let w = g.param(params, &format!("{layer}.h{h}.w"));
        let b = g.param(params, &format!("{layer}.h{h}.b"));
        let v = g.param(params, &format!("{layer}.h{h}.v"));
        let msgs = g.matmul(src, w);
        let recv_t = g.matmul(recv, w);

        let mut rows = Vec::with_capacity(n_recv);
        for (r, nbrs) in neighbors.iter().enumerate() {
            if nbrs.is_empty() {
                rows.push(g.zeros(vec![1, k]));
                continue;
            }
            let n = nbrs.len();
            let p = g.gather_rows(msgs, nbrs);
            let q0 = g.gather_rows(recv_t, &[r]);
            let q = g.repeat_row(q0, n);
            let s = g.add(p, q);
            let t = g.tanh(s);
            let e = g.matmul(t, v);
            let e = g.reshape(e, vec![n]);
            let all: Vec<usize> = (0..n).collect();
            let alpha = g.masked_softmax(e, &all);
            let alpha_row = g.reshape(alpha, vec![1, n]);
            rows.push(g.matmul(alpha_row, p));
        }
        let agg = g.concat_rows(&rows);
        let bias = g.repeat_row(b, n_recv);
        head_outputs.push(g.add(agg, bias));
    }

    let mut acc = head_outputs[0];
    for &h in &head_outputs[1..] {
        acc = g.add(acc, h);
    }
    let avg = g.scale(acc, 1.0 / heads as Real);
    g.relu(avg)
}

/// One-hidden-layer MLP applied row-wise: `relu(x·A1 + B1)·A2 + B2`.
pub fn mlp_apply(g: &mut Graph<Real>, params: &ParameterSet<Real>, name: &str, x: Var) -> Var {
    let n = g.shape(x)[0];
    let a1 = g.param(params, &format!("{name}.a1"));
    let b1 = g.param(params, &format!("{name}.b1"));
    let a2 = g.param(params, &format!("{name}.a2"));
    let b2 = g.param(params, &format!("{name}.b2"));
    let h = g.matmul(x, a1);
    let b1r = g.repeat_row(b1, n);
    let h = g.add(h, b1r);
    let h = g.relu(h);
    let out = g.matmul(h, a2);
    let b2r = g.repeat_row(b2, n);
    g.add(out, b2r)
}

/// Full policy forward pass; see the module docs for the pipeline.
pub fn forward(
    params: &ParameterSet<Real>,
    dims: &PolicyDims,
    graph: &BipartiteGraph,
    features: &Tensor<Real>,
    session: &SessionState,
) -> PolicyOutput {
    assert!(session.step < session.horizon, "session already at horizon");
    assert_eq!(session.feedback.len(), graph.doc_count);
    assert_eq!(
        features.shape,
        vec![graph.kw_count(), dims.feature_dim],
        "feature matrix {:?} does not match {} keywords x K_w={}",
        features.shape,
        graph.kw_count(),
        dims.feature_dim
    );
    let n_doc = graph.doc_count;
    let heads = dims.heads;
    let mut g = Graph::new();

    // Input projection; document features are zero vectors.
    let x_w = g.input(features.clone());
    let proj = g.param(params, "proj.w");
    let h_w0 = g.matmul(x_w, proj);
    let h_d0 = g.zeros(vec![n_doc, dims.hidden_dim]);

    // BLOCK1: kw->doc, doc->kw, kw->doc.
    let h_d1 = gat_apply(&mut g, params, "block1.l0", heads, h_w0, h_d0, &graph.doc_neighbors);
    let h_w1 = gat_apply(&mut g, params, "block1.l1", heads, h_d1, h_w0, &graph.kw_neighbors);
    let h_d2 = gat_apply(&mut g, params, "block1.l2", heads, h_w1, h_d1, &graph.doc_neighbors);

    // Feedback gate.
    let fb = g.input(session.one_hot_matrix());
    let fb_emb = mlp_apply(&mut g, params, "mlp_feedback", fb);
    let h_phi = g.hadamard(h_d2, fb_emb);

    // BLOCK2: doc->kw (the knowledge state), kw->doc.
    let h_w2 = gat_apply(&mut g, params, "block2.l0", heads, h_phi, h_w1, &graph.kw_neighbors);
    let h_d3 = gat_apply(&mut g, params, "block2.l1", heads, h_w2, h_phi, &graph.doc_neighbors);

    // Remaining-time gate; the counter T - t is shared by all documents.
    let dt = g.input(Tensor::new(vec![1, 1], vec![session.remaining() as Real]));
    let t_emb = mlp_apply(&mut g, params, "mlp_time", dt);
    let t_rep = g.repeat_row(t_emb, n_doc);
    let h_tau = g.hadamard(h_d3, t_rep);

    // Score and softmax over all document nodes.
    let score_col = mlp_apply(&mut g, params, "mlp_score", h_tau);
    let scores = g.reshape(score_col, vec![n_doc]);
    let all: Vec<usize> = (0..n_doc).collect();
    let probs = g.masked_softmax(scores, &all);
    let log_probs = g.ln(probs);

    let dist = ActionDistribution {
        probs: g.data(probs).to_vec(),
        log_probs: g.data(log_probs).to_vec(),
    };
    let knowledge_state = g.tensor(h_w2);
    let scores_t = g.tensor(scores);
    PolicyOutput { graph: g, probs, log_probs, dist, knowledge_state, scores: scores_t }
}

/// Categorical sample from the distribution; returns the document index and
/// its log-probability.
pub fn sample_action<R: Rng>(dist: &ActionDistribution, rng: &mut R) -> (usize, Real) {
    let u: Real = rng.gen();
    let mut cum = 0.0;
    for (i, &p) in dist.probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return (i, dist.log_probs[i]);
        }
    }
    let last = dist.probs.len() - 1;
    (last, dist.log_probs[last])
}

/// Argmax action for evaluation; training always samples.
pub fn greedy_action(dist: &ActionDistribution) -> usize {
    dist.probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}
