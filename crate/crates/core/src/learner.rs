//! Simulated learners over a linear corpus.
//!
//! A learner understands a document only once its predecessor in the
//! reading order is understood, so the understood set is always a prefix of
//! the chain. Feedback is ternary: too hard, too easy, or right level; only
//! the right level counts as a learning gain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::Real;

/// Ternary learner feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// `f_<`: the learner did not understand the document.
    TooHard,
    /// `f_>`: understood, but found it too easy.
    TooEasy,
    /// `f_o`: the document was at the right level.
    RightLevel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: (usize, Feedback),
    pub reward: Real,
    pub done: bool,
}

/// Environment for one episode over a linear chain of `chain_len`
/// documents. One instance per episode; not shared.
#[derive(Debug, Clone)]
pub struct LearnerEnv {
    chain_len: usize,
    horizon: usize,
    /// Understood documents form the prefix `0..understood`.
    understood: usize,
    step: usize,
    /// Optional feedback noise (probability, rng); disabled by default and
    /// an extension beyond perfectly accurate feedback.
    noise: Option<(f64, ChaCha8Rng)>,
}

impl LearnerEnv {
    /// Fresh episode. `horizon` defaults to the corpus size when `None`.
    pub fn reset(corpus: &Corpus, horizon: Option<usize>) -> Self {
        Self::reset_chain(corpus.doc_count(), horizon)
    }

    pub fn reset_chain(chain_len: usize, horizon: Option<usize>) -> Self {
        let horizon = horizon.unwrap_or(chain_len);
        assert!(horizon >= 1, "horizon must be >= 1");
        LearnerEnv { chain_len, horizon, understood: 0, step: 0, noise: None }
    }

    /// Flips each feedback with probability `epsilon`. Off by default.
    pub fn with_noise(mut self, epsilon: f64, seed: u64) -> Self {
        self.noise = Some((epsilon, ChaCha8Rng::seed_from_u64(seed)));
        self
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Indices of understood documents (a prefix of the chain).
    pub fn understood(&self) -> Vec<usize> {
        (0..self.understood).collect()
    }

    /// Feedback as a pure function of the current understood set.
    pub fn feedback_for(&self, action: usize) -> Feedback {
        assert!(action < self.chain_len, "action {action} out of range for chain of {}", self.chain_len);
        if action < self.understood {
            Feedback::TooEasy
        } else if action == self.understood {
            // Predecessor (if any) is understood.
            Feedback::RightLevel
        } else {
            Feedback::TooHard
        }
    }

    pub fn step(&mut self, action: usize) -> StepResult {
        assert!(self.step < self.horizon, "episode already finished");
        let mut feedback = self.feedback_for(action);
        if feedback == Feedback::RightLevel {
            self.understood += 1;
        }
        if let Some((eps, rng)) = &mut self.noise {
            if rng.gen::<f64>() < *eps {
                feedback = match feedback {
                    Feedback::RightLevel => Feedback::TooHard,
                    Feedback::TooHard | Feedback::TooEasy => Feedback::RightLevel,
                };
            }
        }
        self.step += 1;
        StepResult {
            observation: (action, feedback),
            reward: if feedback == Feedback::RightLevel { 1.0 } else { 0.0 },
            done: self.step == self.horizon,
        }
    }
}

/// Sum of per-step rewards; bounded above by the corpus size.
pub fn episode_return(rewards: &[Real]) -> Real {
    rewards.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn reset_starts_empty_with_default_horizon() {
        let c = Corpus::parse("d1 :: a\nd2 :: b\nd3 :: c\n").unwrap();
        let env = LearnerEnv::reset(&c, None);
        assert_eq!(env.understood(), Vec::<usize>::new());
        assert_eq!(env.horizon(), 3);
        let env2 = LearnerEnv::reset(&c, None);
        assert_eq!(env.understood, env2.understood);
        assert_eq!(env.step, env2.step);
    }

    #[test]
    fn three_document_trace() {
        // Actions d2,d1,d3,d2,d1,d3 with T=6.
        let mut env = LearnerEnv::reset_chain(3, Some(6));
        let actions = [1, 0, 2, 1, 0, 2];
        let expect_fb = [
            Feedback::TooHard,
            Feedback::RightLevel,
            Feedback::TooHard,
            Feedback::RightLevel,
            Feedback::TooEasy,
            Feedback::RightLevel,
        ];
        let expect_reward = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let expect_understood = [0, 1, 1, 2, 2, 3];
        let mut rewards = Vec::new();
        for (i, &a) in actions.iter().enumerate() {
            let r = env.step(a);
            assert_eq!(r.observation, (a, expect_fb[i]), "step {}", i + 1);
            assert_eq!(r.reward, expect_reward[i], "step {}", i + 1);
            assert_eq!(env.understood().len(), expect_understood[i], "step {}", i + 1);
            assert_eq!(r.done, i == 5);
            rewards.push(r.reward);
        }
        assert_eq!(episode_return(&rewards), 3.0);
    }

    #[test]
    fn first_document_has_no_prerequisite() {
        let mut env = LearnerEnv::reset_chain(3, None);
        let r = env.step(0);
        assert_eq!(r.observation.1, Feedback::RightLevel);
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn repeating_an_understood_document_is_too_easy() {
        let mut env = LearnerEnv::reset_chain(3, None);
        env.step(0);
        let r = env.step(0);
        assert_eq!(r.observation.1, Feedback::TooEasy);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn feedback_is_pure() {
        let env = {
            let mut e = LearnerEnv::reset_chain(4, None);
            e.step(0);
            e
        };
        assert_eq!(env.feedback_for(2), env.feedback_for(2));
        assert_eq!(env.feedback_for(1), Feedback::RightLevel);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_action_panics() {
        let mut env = LearnerEnv::reset_chain(2, None);
        env.step(5);
    }

    #[test]
    fn optimal_policy_reaches_corpus_size_return() {
        for n in [1, 3, 11, 33] {
            let mut env = LearnerEnv::reset_chain(n, None);
            let mut total = 0.0;
            for a in 0..n {
                total += env.step(a).reward;
            }
            assert_eq!(total, n as Real);
        }
    }

    #[test]
    fn understood_set_is_monotone_prefix() {
        let mut env = LearnerEnv::reset_chain(5, Some(20));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut last = 0;
        for _ in 0..20 {
            env.step(rng.gen_range(0..5));
            let u = env.understood();
            assert_eq!(u, (0..u.len()).collect::<Vec<_>>());
            assert!(u.len() >= last);
            last = u.len();
        }
    }

    #[test]
    fn empty_episode_return_is_zero() {
        assert_eq!(episode_return(&[]), 0.0);
    }
}
