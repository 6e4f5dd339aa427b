//! Domain data model for both settings.
//!
//! The non-dynamic setting works with single context-action-reward records
//! (experimental) and context-reward pairs (historical). The sequential
//! setting works with day-long episodes. All containers validate on
//! construction and are immutable afterwards.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary action: the baseline control policy or the target policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn from_bit(bit: u8) -> Option<Arm> {
        match bit {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    pub fn index(self) -> usize {
        self.bit() as usize
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }

    /// (-1)^(a-1): +1 for the target arm, -1 for control.
    pub fn sign(self) -> f64 {
        match self {
            Arm::Control => -1.0,
            Arm::Treatment => 1.0,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bit())
    }
}

/// Finite, non-empty context (state) vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("context", "dimension must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("context", "entries must be finite"));
        }
        Ok(ContextVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for ContextVector {
    /// One-dimensional context; panics on non-finite input.
    fn from(v: f64) -> Self {
        ContextVector::new(vec![v]).expect("finite scalar context")
    }
}

fn check_reward(reward: f64) -> Result<()> {
    if reward.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("reward", "must be finite"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalRecord {
    pub context: ContextVector,
    pub action: Arm,
    pub reward: f64,
}

impl ExperimentalRecord {
    pub fn new(context: ContextVector, action: Arm, reward: f64) -> Result<Self> {
        check_reward(reward)?;
        Ok(Self {
            context,
            action,
            reward,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalRecord {
    pub context: ContextVector,
    pub reward: f64,
}

impl HistoricalRecord {
    pub fn new(context: ContextVector, reward: f64) -> Result<Self> {
        check_reward(reward)?;
        Ok(Self { context, reward })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub context: ContextVector,
    pub action: Arm,
    pub reward: f64,
}

/// One day: `steps[t-1]` holds (S_t, A_t, R_t) and `terminal` holds S_{T+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    steps: Vec<Step>,
    terminal: ContextVector,
}

impl Episode {
    pub fn new(steps: Vec<Step>, terminal: ContextVector) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("episode", "horizon must be at least 1"));
        }
        let d = terminal.dim();
        for s in &steps {
            check_reward(s.reward)?;
            if s.context.dim() != d {
                return Err(Error::invalid(
                    "episode",
                    "state dimension varies within episode",
                ));
            }
        }
        Ok(Self { steps, terminal })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn terminal(&self) -> &ContextVector {
        &self.terminal
    }

    pub fn state_dim(&self) -> usize {
        self.terminal.dim()
    }

    /// S_t for t in 1..=T+1.
    pub fn state(&self, t: usize) -> &[f64] {
        debug_assert!(t >= 1 && t <= self.horizon() + 1);
        if t == self.horizon() + 1 {
            self.terminal.as_slice()
        } else {
            self.steps[t - 1].context.as_slice()
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Experimental triplets plus historical control-only pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticDataset {
    experimental: Vec<ExperimentalRecord>,
    historical: Vec<HistoricalRecord>,
}

impl StaticDataset {
    pub fn new(
        experimental: Vec<ExperimentalRecord>,
        historical: Vec<HistoricalRecord>,
    ) -> Result<Self> {
        if experimental.is_empty() {
            return Err(Error::EmptyDataset("experimental"));
        }
        if historical.is_empty() {
            return Err(Error::EmptyDataset("historical"));
        }
        let d = experimental[0].context.dim();
        let dims = experimental
            .iter()
            .map(|r| r.context.dim())
            .chain(historical.iter().map(|r| r.context.dim()));
        if dims.into_iter().any(|k| k != d) {
            return Err(Error::invalid(
                "dataset",
                "context dimension differs across records",
            ));
        }
        for arm in Arm::BOTH {
            if !experimental.iter().any(|r| r.action == arm) {
                return Err(Error::MissingArm(arm));
            }
        }
        Ok(Self {
            experimental,
            historical,
        })
    }

    pub fn experimental(&self) -> &[ExperimentalRecord] {
        &self.experimental
    }

    pub fn historical(&self) -> &[HistoricalRecord] {
        &self.historical
    }

    pub fn context_dim(&self) -> usize {
        self.experimental[0].context.dim()
    }

    pub fn n_min(&self) -> usize {
        self.experimental.len().min(self.historical.len())
    }
}

/// Experimental episodes plus historical global-control episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialDataset {
    experimental: Vec<Episode>,
    historical: Vec<Episode>,
}

impl SequentialDataset {
    pub fn new(experimental: Vec<Episode>, historical: Vec<Episode>) -> Result<Self> {
        if experimental.is_empty() {
            return Err(Error::EmptyDataset("experimental"));
        }
        if historical.is_empty() {
            return Err(Error::EmptyDataset("historical"));
        }
        let horizon = experimental[0].horizon();
        let d = experimental[0].state_dim();
        for (i, ep) in experimental.iter().chain(historical.iter()).enumerate() {
            if ep.horizon() != horizon {
                return Err(Error::InconsistentHorizon {
                    episode: (i + 1).to_string(),
                    expected: horizon,
                    found: ep.horizon(),
                });
            }
            if ep.state_dim() != d {
                return Err(Error::invalid(
                    "dataset",
                    "state dimension differs across episodes",
                ));
            }
        }
        for ep in &historical {
            if ep.steps().iter().any(|s| s.action != Arm::Control) {
                return Err(Error::invalid("historical", "historical action must be 0"));
            }
        }
        Ok(Self {
            experimental,
            historical,
        })
    }

    pub fn experimental(&self) -> &[Episode] {
        &self.experimental
    }

    pub fn historical(&self) -> &[Episode] {
        &self.historical
    }

    pub fn horizon(&self) -> usize {
        self.experimental[0].horizon()
    }

    pub fn state_dim(&self) -> usize {
        self.experimental[0].state_dim()
    }

    pub fn n_min(&self) -> usize {
        self.experimental.len().min(self.historical.len())
    }

    /// Largest absolute reward observed in either dataset.
    pub fn max_abs_reward(&self) -> f64 {
        self.experimental
            .iter()
            .chain(self.historical.iter())
            .flat_map(|e| e.steps().iter().map(|s| s.reward.abs()))
            .fold(0.0, f64::max)
    }
}

/// Two disjoint halves whose union is the input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair<D> {
    /// Weight-learning half; receives the extra record when a size is odd.
    pub first_half: D,
    pub second_half: D,
}

/// Datasets that can be halved by [`sample_split`].
pub trait Splittable: Sized {
    fn split_with(&self, rng: &mut ChaCha8Rng) -> Result<SplitPair<Self>>;
}

fn halve<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    let cut = items.len().div_ceil(2);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    (pick(&order[..cut]), pick(&order[cut..]))
}

impl Splittable for StaticDataset {
    fn split_with(&self, rng: &mut ChaCha8Rng) -> Result<SplitPair<Self>> {
        if self.experimental.len() < 2 || self.historical.len() < 2 {
            return Err(Error::InsufficientSample {
                needed: 2,
                found: self.n_min(),
            });
        }
        let (e1, e2) = halve(&self.experimental, rng);
        let (h1, h2) = halve(&self.historical, rng);
        // halves may lose an arm; estimation reports that downstream
        Ok(SplitPair {
            first_half: StaticDataset {
                experimental: e1,
                historical: h1,
            },
            second_half: StaticDataset {
                experimental: e2,
                historical: h2,
            },
        })
    }
}

impl Splittable for SequentialDataset {
    fn split_with(&self, rng: &mut ChaCha8Rng) -> Result<SplitPair<Self>> {
        if self.experimental.len() < 2 || self.historical.len() < 2 {
            return Err(Error::InsufficientSample {
                needed: 2,
                found: self.n_min(),
            });
        }
        let (e1, e2) = halve(&self.experimental, rng);
        let (h1, h2) = halve(&self.historical, rng);
        Ok(SplitPair {
            first_half: SequentialDataset {
                experimental: e1,
                historical: h1,
            },
            second_half: SequentialDataset {
                experimental: e2,
                historical: h2,
            },
        })
    }
}

/// Permute-then-halve each sub-dataset, deterministically in `seed`.
pub fn sample_split<D: Splittable>(dataset: &D, seed: u64) -> Result<SplitPair<D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset.split_with(&mut rng)
}
