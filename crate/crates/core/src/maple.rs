//! The adaptive sequencer: a weight vector over a personalized difficulty
//! ranking, initialized by a softmax favoring easier questions, sampled with
//! a uniform-noise exploration mixture, and updated asymmetrically from each
//! grade.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DifficultyRanking, Grade, QuestionId};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MapleError {
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("all questions have been answered")]
    ExhaustedPool,
    #[error("position {position} is out of range for {n} questions")]
    PositionOutOfRange { position: usize, n: usize },
    #[error("invalid sequencer parameter: {0}")]
    InvalidParams(String),
    #[error("invalid state snapshot: {0}")]
    InvalidSnapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapleParams {
    /// Passing threshold: a grade strictly above it counts as success.
    pub eta: f64,
    /// Initial exploration rate.
    pub gamma0: f64,
    /// Success weight boost for harder questions.
    pub alpha1: f64,
    /// Exploration growth on success; at least 1.
    pub alpha2: f64,
    /// Failure weight damping for harder questions.
    pub alpha3: f64,
    /// Exploration decay on failure; at most 1.
    pub alpha4: f64,
    /// Sharpness of the initial easy-question preference; 0 gives uniform
    /// weights.
    pub softmax_scale: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Lower clamp applied to selection weights before normalization.
    pub pi_floor: f64,
    /// Mask questions already answered this session.
    pub no_repeat: bool,
}

impl Default for MapleParams {
    fn default() -> Self {
        Self {
            eta: 0.7,
            gamma0: 0.10,
            alpha1: 1.2,
            alpha2: 1.05,
            alpha3: 0.8,
            alpha4: 0.95,
            softmax_scale: 3.0,
            gamma_min: 0.01,
            gamma_max: 0.5,
            pi_floor: 1e-9,
            no_repeat: true,
        }
    }
}

impl MapleParams {
    pub fn validate(&self) -> Result<(), MapleError> {
        let fail = |msg: String| Err(MapleError::InvalidParams(msg));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return fail(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.alpha1 > 0.0 && self.alpha3 > 0.0) {
            return fail(format!(
                "alpha1 and alpha3 must be positive, got {} and {}",
                self.alpha1, self.alpha3
            ));
        }
        if !(self.alpha2 >= 1.0) {
            return fail(format!("alpha2 must be at least 1, got {}", self.alpha2));
        }
        if !(self.alpha4 > 0.0 && self.alpha4 <= 1.0) {
            return fail(format!("alpha4 must lie in (0, 1], got {}", self.alpha4));
        }
        if !(self.softmax_scale >= 0.0) {
            return fail(format!(
                "softmax_scale must be nonnegative, got {}",
                self.softmax_scale
            ));
        }
        if !(self.gamma_min >= 0.0
            && self.gamma_min <= self.gamma0
            && self.gamma0 <= self.gamma_max
            && self.gamma_max <= 1.0)
        {
            return fail(format!(
                "need 0 <= gamma_min <= gamma0 <= gamma_max <= 1, got {} / {} / {}",
                self.gamma_min, self.gamma0, self.gamma_max
            ));
        }
        if !(self.pi_floor > 0.0) {
            return fail(format!("pi_floor must be positive, got {}", self.pi_floor));
        }
        Ok(())
    }
}

/// Sequencer state: selection weights aligned position-for-position with a
/// difficulty ranking (position 0 = easiest), the current exploration rate,
/// and the answered mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateSnapshot", into = "StateSnapshot")]
pub struct MapleState {
    order: DifficultyRanking,
    w: Vec<f64>,
    gamma: f64,
    answered: Vec<bool>,
    params: MapleParams,
}

/// Serialized form of [`MapleState`]; the JSON object carries exactly these
/// fields.
#[derive(Serialize, Deserialize)]
struct StateSnapshot {
    order: DifficultyRanking,
    w: Vec<f64>,
    gamma: f64,
    answered: Vec<bool>,
    params: MapleParams,
}

impl From<MapleState> for StateSnapshot {
    fn from(s: MapleState) -> Self {
        Self {
            order: s.order,
            w: s.w,
            gamma: s.gamma,
            answered: s.answered,
            params: s.params,
        }
    }
}

impl TryFrom<StateSnapshot> for MapleState {
    type Error = MapleError;

    fn try_from(s: StateSnapshot) -> Result<Self, Self::Error> {
        MapleState::restore(s.order, s.w, s.gamma, s.answered, s.params)
    }
}

/// Weight of 1-based rank position `j` of `n` before normalization:
/// `exp(c (n - j) / n)`.
fn softmax_weights(n: usize, c: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (1..=n)
        .map(|j| (c * (n - j) as f64 / n as f64).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

impl MapleState {
    /// Fresh session state over a ranking: softmax weights sloped toward the
    /// easy end, exploration at `gamma0`, nothing answered.
    pub fn initialize(order: DifficultyRanking, params: MapleParams) -> Result<Self, MapleError> {
        params.validate()?;
        let n = order.len();
        if n == 0 {
            return Err(MapleError::EmptyRanking);
        }
        Ok(Self {
            w: softmax_weights(n, params.softmax_scale),
            gamma: params.gamma0,
            answered: vec![false; n],
            order,
            params,
        })
    }

    /// Rebuild a state from snapshot fields, revalidating every invariant.
    pub fn restore(
        order: DifficultyRanking,
        w: Vec<f64>,
        gamma: f64,
        answered: Vec<bool>,
        params: MapleParams,
    ) -> Result<Self, MapleError> {
        params
            .validate()
            .map_err(|e| MapleError::InvalidSnapshot(e.to_string()))?;
        let n = order.len();
        if n == 0 {
            return Err(MapleError::EmptyRanking);
        }
        if w.len() != n || answered.len() != n {
            return Err(MapleError::InvalidSnapshot(format!(
                "ranking has {n} questions but got {} weights and {} answered flags",
                w.len(),
                answered.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MapleError::InvalidSnapshot(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MapleError::InvalidSnapshot(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        if !(params.gamma_min..=params.gamma_max).contains(&gamma) {
            return Err(MapleError::InvalidSnapshot(format!(
                "gamma {gamma} is outside [{}, {}]",
                params.gamma_min, params.gamma_max
            )));
        }
        Ok(Self {
            order,
            w,
            gamma,
            answered,
            params,
        })
    }

    pub fn order(&self) -> &DifficultyRanking {
        &self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn answered(&self) -> &[bool] {
        &self.answered
    }

    pub fn params(&self) -> &MapleParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// True when `no_repeat` is set and every question has been answered.
    pub fn is_exhausted(&self) -> bool {
        self.params.no_repeat && self.answered.iter().all(|&a| a)
    }

    /// Sample the next question. Per position: a fresh U(-1, 1) noise draw,
    /// selection weight `w (1 - gamma) + noise * gamma` clamped up to
    /// `pi_floor`, zeroed if already answered under `no_repeat`; one
    /// categorical draw over the normalized result. Does not modify state:
    /// replaying the same rng replays the choice.
    pub fn next_question<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<(QuestionId, usize), MapleError> {
        if self.is_exhausted() {
            return Err(MapleError::ExhaustedPool);
        }
        let mut pi: Vec<f64> = self
            .w
            .iter()
            .map(|&w| {
                let eps: f64 = rng.gen_range(-1.0..1.0);
                (w * (1.0 - self.gamma) + eps * self.gamma).max(self.params.pi_floor)
            })
            .collect();
        if self.params.no_repeat {
            for (p, &done) in pi.iter_mut().zip(&self.answered) {
                if done {
                    *p = 0.0;
                }
            }
        }
        let total: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= total;
        }
        let dist = WeightedIndex::new(&pi).expect("an unanswered position keeps positive weight");
        let position = dist.sample(rng);
        let question = self
            .order
            .question_at(position)
            .expect("sampled position lies within the ranking");
        Ok((question, position))
    }

    /// Fold in the grade of the question at `position`. Reward is the
    /// grade's distance from `eta`; a passing grade scales every weight
    /// after `position` by `alpha1 e^R` and grows exploration by `alpha2`,
    /// anything else scales them by `alpha3 e^R` and shrinks exploration by
    /// `alpha4`. Weights renormalize to the simplex, exploration stays
    /// clamped, the position is marked answered.
    pub fn update(&mut self, position: usize, grade: Grade) -> Result<(), MapleError> {
        let n = self.w.len();
        if position >= n {
            return Err(MapleError::PositionOutOfRange { position, n });
        }
        let reward = grade.value() - self.params.eta;
        let (scale, gamma) = if grade.value() > self.params.eta {
            (
                self.params.alpha1 * reward.exp(),
                (self.params.alpha2 * self.gamma).min(self.params.gamma_max),
            )
        } else {
            (
                self.params.alpha3 * reward.exp(),
                (self.params.alpha4 * self.gamma).max(self.params.gamma_min),
            )
        };
        for w in &mut self.w[position + 1..] {
            *w *= scale;
        }
        let total: f64 = self.w.iter().sum();
        for w in &mut self.w {
            *w /= total;
        }
        self.gamma = gamma;
        self.answered[position] = true;
        Ok(())
    }
}
