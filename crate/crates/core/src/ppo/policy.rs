//! Actor-critic pair, action selection and the `APOL` policy file.

use std::path::Path;

use rand::Rng;

use super::net::{log_softmax, Mlp, NetworkSpec};
use crate::environment::{Action, Environment, Observation, ACTION_COUNT, OBS_LEN};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::trace::EpisodeRun;

pub const POLICY_MAGIC: [u8; 4] = *b"APOL";
pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
}

/// Index of the largest entry; the first one wins ties.
fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        let actor = Mlp::new(NetworkSpec::actor(hidden.to_vec(), dropout), 0.01, rng)?;
        let critic = Mlp::new(NetworkSpec::critic(hidden.to_vec(), dropout), 1.0, rng)?;
        Ok(Policy { actor, critic })
    }

    pub fn logits(&self, obs: &Observation) -> Result<Vec<f32>> {
        let logits = self.actor.forward::<rand_chacha::ChaCha8Rng>(&obs.0, 1, None, None);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(logits)
    }

    pub fn value(&self, obs: &Observation) -> f32 {
        self.critic.forward::<rand_chacha::ChaCha8Rng>(&obs.0, 1, None, None)[0]
    }

    /// Choose an action; returns the action, its log-probability under the
    /// current policy and the critic's value estimate.
    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, mode: ActMode, rng: &mut R) -> Result<(Action, f32, f32)> {
        let logits = self.logits(obs)?;
        let (index, logp) = select(&logits, mode, rng);
        Ok((Action::new(index)?, logp, self.value(obs)))
    }

    /// Greedy episode from `origin` to `destination`.
    pub fn rollout_greedy(&self, env: &mut Environment<'_>, origin: Cell, destination: Cell) -> Result<EpisodeRun> {
        let mut obs = env.reset(origin, destination)?;
        let mut run = EpisodeRun::new(origin, destination);
        let mut best = None;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        loop {
            let (action, _, _) = self.act(&obs, ActMode::Greedy, &mut rng)?;
            let (outcome, next) = env.step(action, &mut best)?;
            run.push(action, &outcome);
            if outcome.done {
                return Ok(run);
            }
            obs = next;
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&POLICY_MAGIC);
        buf.extend_from_slice(&POLICY_VERSION.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        for net in [&self.actor, &self.critic] {
            let dims = net.spec().dims();
            buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in dims {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            buf.extend_from_slice(&net.spec().dropout.to_le_bytes());
        }
        for net in [&self.actor, &self.critic] {
            for p in net.params() {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != POLICY_MAGIC {
            return Err(Error::Malformed("bad policy magic".into()));
        }
        let version = r.u32()?;
        if version != POLICY_VERSION {
            return Err(Error::Version {
                found: version,
                expected: POLICY_VERSION,
            });
        }
        if r.u32()? != 2 {
            return Err(Error::Malformed("policy file must hold two networks".into()));
        }
        let mut specs = Vec::new();
        for expected_out in [ACTION_COUNT, 1] {
            let n = r.u32()? as usize;
            if !(2..=16).contains(&n) {
                return Err(Error::Malformed(format!("{n} layer dimensions")));
            }
            let dims: Vec<usize> = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let dropout = r.f64()?;
            if dims[0] != OBS_LEN || dims[n - 1] != expected_out {
                return Err(Error::DimensionMismatch(format!(
                    "network dims {dims:?} (expected input {OBS_LEN}, output {expected_out})"
                )));
            }
            specs.push(NetworkSpec {
                input: dims[0],
                hidden: dims[1..n - 1].to_vec(),
                output: dims[n - 1],
                dropout,
            });
        }
        let mut nets = Vec::new();
        for spec in specs {
            let count = Mlp::<f32>::new(spec.clone(), 1.0, &mut rand::rngs::mock::StepRng::new(0, 0))?.param_count();
            let params = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            nets.push(Mlp::from_params(spec, params)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::PayloadLength {
                expected: r.pos,
                found: bytes.len(),
            });
        }
        let critic = nets.pop().unwrap();
        let actor = nets.pop().unwrap();
        Ok(Policy { actor, critic })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Policy::from_bytes(&bytes)
    }
}

/// Categorical choice over `logits`: sampled or argmax. Returns the index and
/// its log-probability.
pub fn select<R: Rng + ?Sized>(logits: &[f32], mode: ActMode, rng: &mut R) -> (usize, f32) {
    let logp = log_softmax(logits);
    let index = match mode {
        ActMode::Greedy => argmax(logits),
        ActMode::Sample => {
            let u: f64 = rng.gen();
            let mut cum = 0.0f64;
            let mut chosen = logp.len() - 1;
            for (i, lp) in logp.iter().enumerate() {
                cum += (*lp as f64).exp();
                if u < cum {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    (index, logp[index])
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::PayloadLength {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
