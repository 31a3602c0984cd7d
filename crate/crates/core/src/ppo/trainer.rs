//! On-policy training loop: rollout collection, reward normalisation, GAE and
//! clipped PPO updates, with curriculum-driven origin-destination sampling.

use std::collections::{HashMap, VecDeque};
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::buffer::{gae, standardize, RolloutBuffer};
use super::loss::{actor_loss, critic_loss, ActorBatch};
use super::normalizer::NormalizerState;
use super::policy::{ActMode, Policy};
use crate::curriculum::{partition, DistanceClass, OdSampler, StageConfig, StageState};
use crate::environment::{AircraftParams, Cause, CityMap, EpisodeLimits, Environment, RewardWeights, OBS_LEN};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::windfield::WindField;

/// `lr0 · (1 − step/total)`, clamped at 0.
pub fn lr_at(step: f64, total: f64, lr0: f64) -> f64 {
    if total <= 0.0 {
        return lr0;
    }
    lr0 * (1.0 - (step / total).clamp(0.0, 1.0))
}

/// Where training origin-destination pairs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdSchedule {
    /// Near → mid → far stage training.
    Staged,
    /// A single distance class throughout.
    Class(DistanceClass),
    /// Cycle through fixed pairs.
    Pairs(Vec<(Cell, Cell)>),
}

/// When to end training before the episode budget runs out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Never,
    /// Success rate over the last `window` episodes of the final stage.
    SuccessRate { rate: f64, window: usize },
    /// First successful episode of the given class.
    FirstSuccess(DistanceClass),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    pub rollout_len: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub total_episodes: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub normalize_rewards: bool,
    pub schedule: OdSchedule,
    pub stage: StageConfig,
    pub stop: StopRule,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            adam_eps: 1e-5,
            max_grad_norm: 0.5,
            rollout_len: 4096,
            minibatch: 256,
            epochs: 10,
            total_episodes: 20_000,
            hidden: vec![128, 128],
            dropout: 0.1,
            normalize_rewards: true,
            schedule: OdSchedule::Staged,
            stage: StageConfig::default(),
            stop: StopRule::Never,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} must lie in (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} must lie in [0, 1]", self.gae_lambda));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip {} must be > 0", self.clip));
        }
        if self.minibatch == 0 || self.rollout_len == 0 || !self.rollout_len.is_multiple_of(self.minibatch) {
            return bad(format!(
                "rollout_len {} must be a positive multiple of minibatch {}",
                self.rollout_len, self.minibatch
            ));
        }
        if self.epochs == 0 || self.total_episodes == 0 {
            return bad("epochs and total_episodes must be positive".into());
        }
        if let OdSchedule::Pairs(p) = &self.schedule {
            if p.is_empty() {
                return bad("pair schedule is empty".into());
            }
        }
        Ok(())
    }
}

/// Everything about the world a training run needs.
#[derive(Debug, Clone)]
pub struct TrainingWorld<'a> {
    pub map: &'a CityMap,
    pub field: &'a WindField,
    pub params: AircraftParams,
    pub weights: RewardWeights,
    pub limits: EpisodeLimits,
    /// Pairs never used for training.
    pub held_out: Vec<(Cell, Cell)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub class: DistanceClass,
    pub stage: DistanceClass,
    pub origin: Cell,
    pub destination: Cell,
    pub cause: Cause,
    pub steps: usize,
    pub energy_j: f64,
    pub time_s: f64,
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub episode: usize,
    pub from: DistanceClass,
    pub to: DistanceClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub episodes: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: Policy,
    pub episodes: Vec<EpisodeLog>,
    pub stage_events: Vec<StageEvent>,
    pub updates: Vec<UpdateStats>,
    pub stopped_early: bool,
}

impl TrainingOutcome {
    /// Index (1-based count of episodes) of the first success of `class`.
    pub fn first_success(&self, class: DistanceClass) -> Option<usize> {
        self.episodes
            .iter()
            .find(|e| e.class == class && e.cause == Cause::Success)
            .map(|e| e.episode + 1)
    }

    /// Success rate over the last `n` episodes.
    pub fn recent_success_rate(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|e| e.cause == Cause::Success).count() as f64 / tail.len() as f64
    }
}

/// Independent random streams derived from one seed.
struct Streams {
    env: ChaCha8Rng,
    act: ChaCha8Rng,
    update: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> (ChaCha8Rng, Self) {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        (
            stream(0),
            Streams {
                env: stream(1),
                act: stream(2),
                update: stream(3),
            },
        )
    }
}

pub struct Trainer<'a> {
    config: TrainerConfig,
    world: TrainingWorld<'a>,
    policy: Policy,
    actor_opt: Adam,
    critic_opt: Adam,
    rngs: Streams,
    normalizer: NormalizerState,
    stage: StageState,
    sampler: OdSampler,
    pair_cursor: usize,
    best_costs: HashMap<(Cell, Cell), f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainerConfig, world: TrainingWorld<'a>) -> Result<Self> {
        config.validate()?;
        let (mut init, rngs) = Streams::new(config.seed);
        let policy = Policy::new(&config.hidden, config.dropout, &mut init)?;
        let sampler = OdSampler::new(&partition(world.map.spec())?, world.map).with_excluded(world.held_out.clone());
        Ok(Trainer {
            actor_opt: Adam::new(policy.actor.param_count(), config.adam_eps),
            critic_opt: Adam::new(policy.critic.param_count(), config.adam_eps),
            stage: StageState::new(config.stage.clone()),
            config,
            world,
            policy,
            rngs,
            normalizer: NormalizerState::new(),
            sampler,
            pair_cursor: 0,
            best_costs: HashMap::new(),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    fn next_od(&mut self) -> Result<(Cell, Cell)> {
        match &self.config.schedule {
            OdSchedule::Staged => self.sampler.sample(self.stage.class(), &mut self.rngs.env),
            OdSchedule::Class(c) => self.sampler.sample(*c, &mut self.rngs.env),
            OdSchedule::Pairs(pairs) => {
                let p = pairs[self.pair_cursor % pairs.len()];
                self.pair_cursor += 1;
                Ok(p)
            }
        }
    }

    pub fn train(self) -> Result<TrainingOutcome> {
        self.train_with(|_, _, _| ControlFlow::Continue(()))
    }

    /// Like [`Trainer::train`], calling `on_update` after every update with
    /// its statistics, the episodes so far and the updated policy. Returning
    /// `Break` ends training and marks the outcome as stopped early.
    pub fn train_with(
        mut self,
        mut on_update: impl FnMut(&UpdateStats, &[EpisodeLog], &Policy) -> ControlFlow<()>,
    ) -> Result<TrainingOutcome> {
        let cfg = self.config.clone();
        let world = self.world.clone();
        let mut env = Environment::new(world.map, world.field, world.params.clone(), world.weights.clone(), world.limits.clone())?;
        let diagonal = world.map.spec().diagonal();
        let mut buffer = RolloutBuffer::new(cfg.rollout_len);
        let mut episodes = Vec::new();
        let mut stage_events = Vec::new();
        let mut updates = Vec::new();
        let mut recent: VecDeque<bool> = VecDeque::new();

        let mut od = self.next_od()?;
        let mut obs = env.reset(od.0, od.1)?;
        let mut ep_return = 0.0;
        let mut stopped_early = false;

        'outer: while episodes.len() < cfg.total_episodes {
            buffer.clear();
            while !buffer.is_full() {
                let (action, logp, value) = self.policy.act(&obs, ActMode::Sample, &mut self.rngs.act)?;
                let best = self.best_costs.get(&od).copied();
                let mut best_slot = best;
                let (outcome, next) = env.step(action, &mut best_slot)?;
                if let Some(b) = best_slot {
                    self.best_costs.insert(od, b);
                }
                ep_return += outcome.reward;
                let reward = if cfg.normalize_rewards {
                    self.normalizer.normalize(outcome.reward, cfg.gamma)
                } else {
                    outcome.reward
                };
                buffer.push(&obs.0, action.index(), logp, value, reward as f32, outcome.done);
                obs = next;
                if !outcome.done {
                    continue;
                }

                self.normalizer.end_episode();
                let success = outcome.cause == Cause::Success;
                let class = DistanceClass::classify(world.map.spec().center_distance(od.0, od.1), diagonal);
                let stage_before = self.stage.class();
                episodes.push(EpisodeLog {
                    episode: episodes.len(),
                    class,
                    stage: stage_before,
                    origin: od.0,
                    destination: od.1,
                    cause: outcome.cause,
                    steps: env.steps(),
                    energy_j: outcome.cost_so_far.0,
                    time_s: outcome.cost_so_far.1,
                    episode_return: ep_return,
                });
                ep_return = 0.0;
                if cfg.schedule == OdSchedule::Staged && self.stage.record_and_advance(success) {
                    stage_events.push(StageEvent {
                        episode: episodes.len(),
                        from: stage_before,
                        to: self.stage.class(),
                    });
                    recent.clear();
                }
                recent.push_back(success);
                let final_stage = cfg.schedule != OdSchedule::Staged || self.stage.class() == DistanceClass::Far;
                let stop = match &cfg.stop {
                    StopRule::Never => false,
                    StopRule::SuccessRate { rate, window } => {
                        while recent.len() > *window {
                            recent.pop_front();
                        }
                        final_stage
                            && recent.len() == *window
                            && recent.iter().filter(|s| **s).count() as f64 / *window as f64 >= *rate
                    }
                    StopRule::FirstSuccess(c) => success && class == *c,
                };
                if stop {
                    stopped_early = true;
                    break 'outer;
                }
                if episodes.len() >= cfg.total_episodes {
                    break 'outer;
                }
                od = self.next_od()?;
                obs = env.reset(od.0, od.1)?;
            }
            let bootstrap = if env.is_done() { 0.0 } else { self.policy.value(&obs) as f64 };
            let stats = self.update(&buffer, bootstrap, episodes.len(), updates.len())?;
            let flow = on_update(&stats, &episodes, &self.policy);
            updates.push(stats);
            if flow.is_break() {
                stopped_early = true;
                break;
            }
        }

        Ok(TrainingOutcome {
            policy: self.policy,
            episodes,
            stage_events,
            updates,
            stopped_early,
        })
    }

    fn update(&mut self, buffer: &RolloutBuffer, bootstrap: f64, episodes_done: usize, index: usize) -> Result<UpdateStats> {
        let cfg = &self.config;
        let n = buffer.len();
        let rewards: Vec<f64> = buffer.rewards.iter().map(|&r| r as f64).collect();
        let values: Vec<f64> = buffer.values.iter().map(|&v| v as f64).collect();
        let (mut adv, returns) = gae(&rewards, &values, &buffer.dones, bootstrap, cfg.gamma, cfg.gae_lambda);
        standardize(&mut adv);
        let adv: Vec<f32> = adv.into_iter().map(|a| a as f32).collect();
        let returns: Vec<f32> = returns.into_iter().map(|r| r as f32).collect();

        let total = cfg.total_episodes as f64;
        let actor_lr = lr_at(episodes_done as f64, total, cfg.actor_lr);
        let critic_lr = lr_at(episodes_done as f64, total, cfg.critic_lr);
        let mut stats = UpdateStats {
            update: index,
            episodes: episodes_done,
            actor_lr,
            critic_lr,
            ..Default::default()
        };

        let mb = cfg.minibatch;
        let mut order: Vec<usize> = (0..n).collect();
        let mut obs = vec![0f32; mb * OBS_LEN];
        let mut actions = vec![0usize; mb];
        let mut old_logp = vec![0f32; mb];
        let mut mb_adv = vec![0f32; mb];
        let mut mb_ret = vec![0f32; mb];
        let mut a_grads = vec![0f32; self.policy.actor.param_count()];
        let mut c_grads = vec![0f32; self.policy.critic.param_count()];
        let mut batches = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rngs.update);
            for chunk in order.chunks_exact(mb) {
                for (j, &i) in chunk.iter().enumerate() {
                    obs[j * OBS_LEN..(j + 1) * OBS_LEN].copy_from_slice(&buffer.observations[i * OBS_LEN..(i + 1) * OBS_LEN]);
                    actions[j] = buffer.actions[i];
                    old_logp[j] = buffer.log_probs[i];
                    mb_adv[j] = adv[i];
                    mb_ret[j] = returns[i];
                }
                a_grads.iter_mut().for_each(|g| *g = 0.0);
                let a = actor_loss(
                    &self.policy.actor,
                    ActorBatch {
                        obs: &obs,
                        actions: &actions,
                        old_log_probs: &old_logp,
                        advantages: &mb_adv,
                    },
                    cfg.clip,
                    cfg.entropy_coef,
                    Some(&mut self.rngs.update),
                    Some(&mut a_grads),
                );
                c_grads.iter_mut().for_each(|g| *g = 0.0);
                let c = critic_loss(&self.policy.critic, &obs, &mb_ret, Some(&mut self.rngs.update), Some(&mut c_grads));
                if !a.loss.is_finite() || !c.is_finite() || a_grads.iter().chain(&c_grads).any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "update {index}: actor loss {}, critic loss {c}",
                        a.loss
                    )));
                }
                clip_grad_norm(&mut a_grads, cfg.max_grad_norm);
                clip_grad_norm(&mut c_grads, cfg.max_grad_norm);
                self.actor_opt.step(self.policy.actor.params_mut(), &a_grads, actor_lr);
                self.critic_opt.step(self.policy.critic.params_mut(), &c_grads, critic_lr);
                stats.actor_loss += a.loss;
                stats.critic_loss += c;
                stats.entropy += a.entropy;
                stats.approx_kl += a.approx_kl;
                stats.clip_fraction += a.clip_fraction;
                batches += 1;
            }
        }
        let k = batches.max(1) as f64;
        stats.actor_loss /= k;
        stats.critic_loss /= k;
        stats.entropy /= k;
        stats.approx_kl /= k;
        stats.clip_fraction /= k;
        Ok(stats)
    }
}
