//! The comparison sequencers: a fixed easy-to-hard expert schedule, a pure
//! personalized-difficulty order, and an uninformed variant of the adaptive
//! sequencer. All of them, and the adaptive sequencer itself, drive a
//! session through the shared [`Sequencer`] interface.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DifficultyRanking, Grade, Question, QuestionId, StudentId, NUM_LEVELS};
use crate::maple::{MapleError, MapleParams, MapleState};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SequencerError {
    #[error("question pool is exhausted at step {step}")]
    Exhausted { step: usize },
    #[error("step {step} is outside the session of length {session}")]
    StepOutOfRange { step: usize, session: usize },
    #[error("no question is awaiting a grade")]
    NoPendingQuestion,
    #[error(transparent)]
    Maple(#[from] MapleError),
}

/// One session-scoped question source. `step` counts from 0.
pub trait Sequencer {
    fn next_question(
        &mut self,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<QuestionId, SequencerError>;

    /// Feed back the grade of the most recently returned question.
    fn record_grade(&mut self, grade: Grade) -> Result<(), SequencerError>;
}

/// Share of a session spent on each difficulty level, easiest to hardest.
pub const LEVEL_PROPORTIONS: [f64; NUM_LEVELS as usize] = [0.10, 0.20, 0.30, 0.30, 0.10];

/// Difficulty level scheduled for a step (counted from 0) of a session:
/// cumulative tenths 1/3/6/9 of the length, upper boundaries taken by
/// ceiling. Integer arithmetic; no float rounding at the boundaries.
pub fn scheduled_level(step: usize, session_length: usize) -> u8 {
    let t = step + 1;
    let bounds = [1usize, 3, 6, 9].map(|k| (k * session_length + 9) / 10);
    for (i, bound) in bounds.into_iter().enumerate() {
        if t <= bound {
            return (i + 1) as u8;
        }
    }
    NUM_LEVELS
}

/// Expert schedule state: the not-yet-asked questions of each level.
#[derive(Debug, Clone, PartialEq)]
pub struct AscendingSchedule {
    pools: [Vec<QuestionId>; NUM_LEVELS as usize],
}

impl AscendingSchedule {
    pub fn new(questions: &[Question]) -> Self {
        let mut pools: [Vec<QuestionId>; NUM_LEVELS as usize] = Default::default();
        for q in questions {
            pools[(q.level() - 1) as usize].push(q.id());
        }
        Self { pools }
    }

    pub fn remaining(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    /// A uniformly random not-yet-asked question of the level scheduled for
    /// `step`. An empty pool falls forward to harder levels first, then back
    /// to easier ones.
    pub fn next_question<R: Rng + ?Sized>(
        &mut self,
        session_length: usize,
        step: usize,
        rng: &mut R,
    ) -> Result<QuestionId, SequencerError> {
        if step >= session_length {
            return Err(SequencerError::StepOutOfRange {
                step,
                session: session_length,
            });
        }
        let target = (scheduled_level(step, session_length) - 1) as usize;
        let levels = (target..NUM_LEVELS as usize).chain((0..target).rev());
        for level in levels {
            let pool = &mut self.pools[level];
            if !pool.is_empty() {
                let pick = rng.gen_range(0..pool.len());
                return Ok(pool.swap_remove(pick));
            }
        }
        Err(SequencerError::Exhausted { step })
    }
}

/// The question at position `step` (from 0) of a difficulty ranking.
pub fn edurank_next(
    ranking: &DifficultyRanking,
    step: usize,
) -> Result<QuestionId, SequencerError> {
    ranking
        .question_at(step)
        .ok_or(SequencerError::StepOutOfRange {
            step,
            session: ranking.len(),
        })
}

/// How the uninformed sequencer starts: always a uniformly random question
/// order, with either uniform or Dirichlet-sampled weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveInit {
    UniformRandomOrder,
    DirichletWeights,
}

/// Sequencer state with no difficulty knowledge: a random permutation of
/// the question set in place of a ranking. Every subsequent operation is the
/// shared adaptive-sequencer behavior.
pub fn naive_maple_initialize<R: Rng + ?Sized>(
    student: StudentId,
    question_set: &[QuestionId],
    params: MapleParams,
    mode: NaiveInit,
    rng: &mut R,
) -> Result<MapleState, MapleError> {
    if question_set.is_empty() {
        return Err(MapleError::EmptyRanking);
    }
    let mut order = question_set.to_vec();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n = order.len();
    let mut w = match mode {
        NaiveInit::UniformRandomOrder => vec![1.0 / n as f64; n],
        NaiveInit::DirichletWeights => (0..n)
            .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
            .collect(),
    };
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    let ranking = DifficultyRanking::new(student, order)
        .expect("a permutation of a deduplicated set has no duplicates");
    MapleState::restore(ranking, w, params.gamma0, vec![false; n], params)
}

/// Adapter pairing selection with the grade fed back one step later.
#[derive(Debug, Clone, PartialEq)]
pub struct MapleSequencer {
    state: MapleState,
    pending: Option<usize>,
}

impl MapleSequencer {
    pub fn new(state: MapleState) -> Self {
        Self {
            state,
            pending: None,
        }
    }

    pub fn state(&self) -> &MapleState {
        &self.state
    }
}

impl Sequencer for MapleSequencer {
    fn next_question(
        &mut self,
        _step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<QuestionId, SequencerError> {
        let (question, position) = self.state.next_question(rng)?;
        self.pending = Some(position);
        Ok(question)
    }

    fn record_grade(&mut self, grade: Grade) -> Result<(), SequencerError> {
        let position = self
            .pending
            .take()
            .ok_or(SequencerError::NoPendingQuestion)?;
        self.state.update(position, grade)?;
        Ok(())
    }
}

/// Expert schedule behind the shared interface; grades are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct AscendingSequencer {
    schedule: AscendingSchedule,
    session_length: usize,
}

impl AscendingSequencer {
    pub fn new(questions: &[Question], session_length: usize) -> Self {
        Self {
            schedule: AscendingSchedule::new(questions),
            session_length,
        }
    }
}

impl Sequencer for AscendingSequencer {
    fn next_question(
        &mut self,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<QuestionId, SequencerError> {
        self.schedule.next_question(self.session_length, step, rng)
    }

    fn record_grade(&mut self, _grade: Grade) -> Result<(), SequencerError> {
        Ok(())
    }
}

/// Fixed easiest-to-hardest replay of a ranking; grades are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct EdurankSequencer {
    ranking: DifficultyRanking,
}

impl EdurankSequencer {
    pub fn new(ranking: DifficultyRanking) -> Self {
        Self { ranking }
    }
}

impl Sequencer for EdurankSequencer {
    fn next_question(
        &mut self,
        step: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<QuestionId, SequencerError> {
        edurank_next(&self.ranking, step)
    }

    fn record_grade(&mut self, _grade: Grade) -> Result<(), SequencerError> {
        Ok(())
    }
}
