//! REINFORCE training loop and the uniform-random baseline.
//!
//! One collect cycle gathers `episodes_per_collect` episodes, then performs
//! `repeat_per_collect` passes over the collected transitions in shuffled
//! minibatches, re-running the forward pass per minibatch so gradients are
//! always with respect to the current parameters. Plain gradient ascent on
//! `log pi(a|o) * v_t`: no baseline, no entropy bonus, no clipping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{ParameterSet, Tensor};
use crate::corpus::{build_graph, BipartiteGraph, Corpus, CorpusError, FeatureProvider};
use crate::learner::LearnerEnv;
use crate::policy::{forward, init_policy, sample_action, PolicyDims, SessionState};
use crate::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("non-finite parameter or probability at seed {seed}, episode {episode}")]
    NumericalFailure { seed: u64, episode: usize },
}

/// Training hyperparameters; the defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: Real,
    pub gamma: Real,
    pub episodes: usize,
    pub batch_size: usize,
    pub repeat_per_collect: usize,
    pub episodes_per_collect: usize,
    pub seeds: Vec<u64>,
    pub hidden_dim: usize,
    pub heads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0005,
            gamma: 0.0,
            episodes: 50,
            batch_size: 16,
            repeat_per_collect: 15,
            episodes_per_collect: 1,
            seeds: (0..25).collect(),
            hidden_dim: 32,
            heads: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(TrainError::Config("gamma must be in [0, 1]".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("repeat_per_collect", self.repeat_per_collect),
            ("episodes_per_collect", self.episodes_per_collect),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(TrainError::Config("at least one seed required".into()));
        }
        Ok(())
    }
}

/// One recorded step of an episode. The pre-action session state is kept so
/// the forward pass can be re-run during updates.
#[derive(Debug, Clone)]
pub struct Transition {
    pub step: usize,
    pub action: usize,
    pub log_prob: Real,
    pub reward: Real,
    pub session: SessionState,
}

/// Ordered transitions of one learning path. Consumed by
/// [`reinforce_update`], which invalidates it (transitions collected under
/// old parameters are never reused).
#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    pub transitions: Vec<Transition>,
    pub episode_return: Real,
}

/// Per-episode returns of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub seed: u64,
    pub returns: Vec<Real>,
}

/// `v_t = sum_{t' >= t} gamma^(t'-t) r_t'` by reverse accumulation.
pub fn compute_returns(rewards: &[Real], gamma: Real) -> Vec<Real> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// Plays one full episode with the current policy, sampling every action.
pub fn collect_episode<R: Rng>(
    params: &ParameterSet<Real>,
    dims: &PolicyDims,
    graph: &BipartiteGraph,
    features: &Tensor<Real>,
    env: &mut LearnerEnv,
    rng: &mut R,
) -> EpisodeBuffer {
    let mut session = SessionState::new(graph.doc_count, env.horizon());
    let mut transitions = Vec::with_capacity(env.horizon());
    let mut total = 0.0;
    for t in 0..env.horizon() {
        let snapshot = session.clone();
        let out = forward(params, dims, graph, features, &session);
        let (action, log_prob) = sample_action(&out.dist, rng);
        let result = env.step(action);
        session.observe(action, result.observation.1);
        total += result.reward;
        transitions.push(Transition { step: t, action, log_prob, reward: result.reward, session: snapshot });
    }
    EpisodeBuffer { transitions, episode_return: total }
}

/// One update cycle over freshly collected buffers. Buffers are consumed:
/// they are invalid once parameters move.
pub fn reinforce_update<R: Rng>(
    params: &mut ParameterSet<Real>,
    dims: &PolicyDims,
    graph: &BipartiteGraph,
    features: &Tensor<Real>,
    buffers: Vec<EpisodeBuffer>,
    config: &TrainConfig,
    rng: &mut R,
) {
    // Flatten transitions, pairing each with its return.
    let mut pool: Vec<(Transition, Real)> = Vec::new();
    for buffer in buffers {
        let rewards: Vec<Real> = buffer.transitions.iter().map(|t| t.reward).collect();
        let returns = compute_returns(&rewards, config.gamma);
        for (t, v) in buffer.transitions.into_iter().zip(returns) {
            pool.push((t, v));
        }
    }

    let mut order: Vec<usize> = (0..pool.len()).collect();
    for _ in 0..config.repeat_per_collect {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let mut any = false;
            for &i in chunk {
                let (transition, v) = &pool[i];
                // A zero return contributes exactly zero gradient; skip the
                // forward pass.
                if *v == 0.0 {
                    continue;
                }
                any = true;
                let out = forward(params, dims, graph, features, &transition.session);
                let mut g = out.graph;
                let logp = g.select(out.log_probs, transition.action);
                let loss = g.scale(logp, -*v);
                g.backward(loss, params);
            }
            if any {
                params.sgd_step(config.learning_rate);
                params.zero_grads();
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Independent RNG stream for one purpose within a seeded run.
pub fn derive_seed(base: u64, purpose: u64) -> u64 {
    splitmix64(base ^ splitmix64(purpose))
}

fn train_one_seed(
    seed: u64,
    config: &TrainConfig,
    dims: &PolicyDims,
    graph: &BipartiteGraph,
    features: &Tensor<Real>,
) -> Result<LearningCurve, TrainError> {
    let mut params = init_policy(dims, derive_seed(seed, 0));
    let mut rng_sample = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut rng_shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let horizon = graph.doc_count;

    let mut returns = Vec::with_capacity(config.episodes);
    while returns.len() < config.episodes {
        let n = config.episodes_per_collect.min(config.episodes - returns.len());
        let mut buffers = Vec::with_capacity(n);
        for _ in 0..n {
            let mut env = LearnerEnv::reset_chain(horizon, Some(horizon));
            let buffer =
                collect_episode(&params, dims, graph, features, &mut env, &mut rng_sample);
            returns.push(buffer.episode_return);
            buffers.push(buffer);
        }
        reinforce_update(&mut params, dims, graph, features, buffers, config, &mut rng_shuffle);
        if !params.is_finite() {
            return Err(TrainError::NumericalFailure { seed, episode: returns.len() });
        }
    }
    Ok(LearningCurve { seed, returns })
}

/// Trains one policy per seed; curves are returned in seed order regardless
/// of scheduling.
pub fn run_training(
    config: &TrainConfig,
    corpus: &Corpus,
    provider: &FeatureProvider,
) -> Result<Vec<LearningCurve>, TrainError> {
    config.validate()?;
    let graph = build_graph(corpus);
    let features = crate::corpus::keyword_features(provider, &graph)?;
    let dims = PolicyDims::new(features.shape[1], config.hidden_dim, config.heads);

    let mut results: Vec<Option<Result<LearningCurve, TrainError>>> =
        (0..config.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &seed in &config.seeds {
            let (graph, features, dims, config) = (&graph, &features, &dims, &config);
            handles.push(scope.spawn(move || train_one_seed(seed, config, dims, graph, features)));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("training thread panicked"));
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}

/// Uniform-random policy over the same episode mechanics.
pub fn run_random_baseline(corpus: &Corpus, episodes: usize, seed: u64) -> LearningCurve {
    let n = corpus.doc_count();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut env = LearnerEnv::reset_chain(n, Some(n));
        let mut total = 0.0;
        for _ in 0..n {
            total += env.step(rng.gen_range(0..n)).reward;
        }
        returns.push(total);
    }
    LearningCurve { seed, returns }
}

/// Per-episode mean and sample standard deviation across seeds, plus final
/// episode statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub mean: Vec<Real>,
    pub stddev: Vec<Real>,
    pub final_mean: Real,
    pub final_stddev: Real,
    pub final_stderr: Real,
}

pub fn aggregate_seeds(curves: &[LearningCurve]) -> SeedSummary {
    assert!(!curves.is_empty(), "aggregate_seeds: no curves");
    let episodes = curves[0].returns.len();
    assert!(
        curves.iter().all(|c| c.returns.len() == episodes),
        "aggregate_seeds: curves of unequal length"
    );
    let n = curves.len() as Real;
    let mut mean = vec![0.0; episodes];
    let mut stddev = vec![0.0; episodes];
    for e in 0..episodes {
        let m: Real = curves.iter().map(|c| c.returns[e]).sum::<Real>() / n;
        mean[e] = m;
        if curves.len() > 1 {
            let var: Real =
                curves.iter().map(|c| (c.returns[e] - m).powi(2)).sum::<Real>() / (n - 1.0);
            stddev[e] = var.sqrt();
        }
    }
    let final_mean = *mean.last().unwrap_or(&0.0);
    let final_stddev = *stddev.last().unwrap_or(&0.0);
    SeedSummary { mean, stddev, final_mean, final_stddev, final_stderr: final_stddev / n.sqrt() }
}
