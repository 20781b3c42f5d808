//! Core identifiers, records, and validated value types shared by every
//! other module: questions, grades, interaction histories, and per-student
//! difficulty rankings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DomainError {
    #[error("grade {0} is outside [0, 1]")]
    GradeOutOfRange(f64),
    #[error("difficulty level {0} is outside 1..=5")]
    LevelOutOfRange(u8),
    #[error("latent difficulty {0} is outside (0, 1]")]
    LatentDifficultyOutOfRange(f64),
    #[error("attempt index {index} for student {student} is not strictly increasing (last seen {last})")]
    NonIncreasingAttemptIndex {
        student: StudentId,
        index: u64,
        last: u64,
    },
    #[error("ranking for student {student} contains duplicate question {question}")]
    DuplicateInRanking {
        student: StudentId,
        question: QuestionId,
    },
}

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(u32);

        impl $name {
            pub const fn new(value: u32) -> Self {
                Self(value)
            }

            pub const fn value(self) -> u32 {
                self.0
            }

            /// Index into a dense `[0, N)` collection keyed by this id.
            pub const fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u32> for $name {
            fn from(value: u32) -> Self {
                Self(value)
            }
        }
    };
}

id_type!(
    /// Identifier of a practice question, dense in `[0, N)` within one experiment.
    QuestionId
);
id_type!(
    /// Identifier of a student.
    StudentId
);
id_type!(
    /// Identifier of a skill a question exercises.
    SkillId
);

/// Number of discrete difficulty levels questions are labeled with.
pub const NUM_LEVELS: u8 = 5;

/// Default bridge from a discrete difficulty level to latent difficulty:
/// `level / 5`, giving values in `{0.2, 0.4, 0.6, 0.8, 1.0}`. Callers that
/// need a different bridge construct [`Question`]s with an explicit `ql`.
pub fn default_level_ql(level: u8) -> f64 {
    f64::from(level) / f64::from(NUM_LEVELS)
}

/// A practice question: one skill, a 1..=5 difficulty label, and a latent
/// difficulty `ql` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Question {
    id: QuestionId,
    skill: SkillId,
    level: u8,
    ql: f64,
}

impl Question {
    pub fn new(id: QuestionId, skill: SkillId, level: u8, ql: f64) -> Result<Self, DomainError> {
        if !(1..=NUM_LEVELS).contains(&level) {
            return Err(DomainError::LevelOutOfRange(level));
        }
        if !(ql > 0.0 && ql <= 1.0) {
            return Err(DomainError::LatentDifficultyOutOfRange(ql));
        }
        Ok(Self {
            id,
            skill,
            level,
            ql,
        })
    }

    /// Construct with the default level-to-latent-difficulty bridge.
    pub fn from_level(id: QuestionId, skill: SkillId, level: u8) -> Result<Self, DomainError> {
        Self::new(id, skill, level, default_level_ql(level))
    }

    pub fn id(&self) -> QuestionId {
        self.id
    }

    pub fn skill(&self) -> SkillId {
        self.skill
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    /// Latent difficulty in `(0, 1]`.
    pub fn ql(&self) -> f64 {
        self.ql
    }
}

/// A solution grade in `[0, 1]`. Construction through [`Grade::new`] (and
/// deserialization) rejects out-of-range and non-finite values.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Grade(f64);

impl Grade {
    pub const MIN: Grade = Grade(0.0);
    pub const MAX: Grade = Grade(1.0);

    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(DomainError::GradeOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Grade {
    type Error = DomainError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Grade::new(value)
    }
}

impl From<Grade> for f64 {
    fn from(grade: Grade) -> f64 {
        grade.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One graded attempt by a student on a question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub student: StudentId,
    pub question: QuestionId,
    pub grade: Grade,
    /// Ordinal of this attempt within the student's history; strictly
    /// increasing per student.
    pub attempt_index: u64,
}

/// Append-only log of attempts, indexable by student and by question.
/// Retrieval by `(student, question)` yields records in attempt order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionHistory {
    records: Vec<AttemptRecord>,
    by_student: BTreeMap<StudentId, Vec<usize>>,
    by_question: BTreeMap<QuestionId, Vec<usize>>,
}

impl InteractionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a record, enforcing strictly increasing attempt indices per
    /// student.
    pub fn push(&mut self, record: AttemptRecord) -> Result<(), DomainError> {
        if let Some(indices) = self.by_student.get(&record.student) {
            if let Some(&last) = indices.last() {
                let last_index = self.records[last].attempt_index;
                if record.attempt_index <= last_index {
                    return Err(DomainError::NonIncreasingAttemptIndex {
                        student: record.student,
                        index: record.attempt_index,
                        last: last_index,
                    });
                }
            }
        }
        let slot = self.records.len();
        self.by_student
            .entry(record.student)
            .or_default()
            .push(slot);
        self.by_question
            .entry(record.question)
            .or_default()
            .push(slot);
        self.records.push(record);
        Ok(())
    }

    /// Append an attempt, assigning the next attempt index for the student.
    pub fn record(&mut self, student: StudentId, question: QuestionId, grade: Grade) {
        let attempt_index = self
            .by_student
            .get(&student)
            .and_then(|v| v.last())
            .map(|&i| self.records[i].attempt_index + 1)
            .unwrap_or(0);
        self.push(AttemptRecord {
            student,
            question,
            grade,
            attempt_index,
        })
        .expect("auto-assigned attempt index is strictly increasing");
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AttemptRecord] {
        &self.records
    }

    pub fn students(&self) -> impl Iterator<Item = StudentId> + '_ {
        self.by_student.keys().copied()
    }

    pub fn contains_student(&self, student: StudentId) -> bool {
        self.by_student.contains_key(&student)
    }

    /// Records for one student, in attempt order.
    pub fn student_records(&self, student: StudentId) -> impl Iterator<Item = &AttemptRecord> {
        self.by_student
            .get(&student)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Records for one question, across all students, in insertion order.
    pub fn question_records(&self, question: QuestionId) -> impl Iterator<Item = &AttemptRecord> {
        self.by_question
            .get(&question)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Records for one `(student, question)` pair, in attempt order.
    pub fn student_question_records(
        &self,
        student: StudentId,
        question: QuestionId,
    ) -> impl Iterator<Item = &AttemptRecord> {
        self.student_records(student)
            .filter(move |r| r.question == question)
    }
}

/// A per-student total order over a question set, easiest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RankingRepr", into = "RankingRepr")]
pub struct DifficultyRanking {
    student: StudentId,
    order: Vec<QuestionId>,
    inverse: BTreeMap<QuestionId, usize>,
}

#[derive(Serialize, Deserialize)]
struct RankingRepr {
    student: StudentId,
    order: Vec<QuestionId>,
}

impl TryFrom<RankingRepr> for DifficultyRanking {
    type Error = DomainError;

    fn try_from(repr: RankingRepr) -> Result<Self, Self::Error> {
        DifficultyRanking::new(repr.student, repr.order)
    }
}

impl From<DifficultyRanking> for RankingRepr {
    fn from(r: DifficultyRanking) -> Self {
        RankingRepr {
            student: r.student,
            order: r.order,
        }
    }
}

impl DifficultyRanking {
    pub fn new(student: StudentId, order: Vec<QuestionId>) -> Result<Self, DomainError> {
        let mut inverse = BTreeMap::new();
        for (pos, &q) in order.iter().enumerate() {
            if inverse.insert(q, pos).is_some() {
                return Err(DomainError::DuplicateInRanking {
                    student,
                    question: q,
                });
            }
        }
        Ok(Self {
            student,
            order,
            inverse,
        })
    }

    pub fn student(&self) -> StudentId {
        self.student
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Question at a 0-based rank position (0 = easiest).
    pub fn question_at(&self, position: usize) -> Option<QuestionId> {
        self.order.get(position).copied()
    }

    /// 0-based rank position of a question, if ranked.
    pub fn position_of(&self, question: QuestionId) -> Option<usize> {
        self.inverse.get(&question).copied()
    }

    /// Questions easiest to hardest.
    pub fn iter(&self) -> impl Iterator<Item = QuestionId> + '_ {
        self.order.iter().copied()
    }

    pub fn as_slice(&self) -> &[QuestionId] {
        &self.order
    }
}

/// A single dataset invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateQuestionId(QuestionId),
    LevelOutOfRange {
        question: QuestionId,
        level: u8,
    },
    LatentDifficultyOutOfRange {
        question: QuestionId,
        ql: f64,
    },
    UnknownQuestion {
        record: usize,
        question: QuestionId,
    },
    GradeOutOfRange {
        record: usize,
        value: f64,
    },
    NonIncreasingAttemptIndex {
        student: StudentId,
        record: usize,
        index: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateQuestionId(q) => write!(f, "duplicate question id {q}"),
            Violation::LevelOutOfRange { question, level } => {
                write!(f, "question {question} has level {level} outside 1..=5")
            }
            Violation::LatentDifficultyOutOfRange { question, ql } => {
                write!(f, "question {question} has latent difficulty {ql} outside (0, 1]")
            }
            Violation::UnknownQuestion { record, question } => {
                write!(f, "record {record} references unknown question {question}")
            }
            Violation::GradeOutOfRange { record, value } => {
                write!(f, "record {record} has grade {value} outside [0, 1]")
            }
            Violation::NonIncreasingAttemptIndex {
                student,
                record,
                index,
            } => write!(
                f,
                "record {record}: attempt index {index} for student {student} is not strictly increasing"
            ),
        }
    }
}

/// Outcome of a dataset check; empty iff the dataset is well-formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "dataset is well-formed");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check every dataset invariant and report all violations found: duplicate
/// question ids, out-of-range levels/difficulties/grades, dangling question
/// references, and non-increasing attempt indices.
pub fn validate_dataset(questions: &[Question], history: &InteractionHistory) -> ValidationReport {
    let mut violations = Vec::new();
    let mut known = BTreeMap::new();
    for q in questions {
        if known.insert(q.id(), q).is_some() {
            violations.push(Violation::DuplicateQuestionId(q.id()));
        }
        if !(1..=NUM_LEVELS).contains(&q.level()) {
            violations.push(Violation::LevelOutOfRange {
                question: q.id(),
                level: q.level(),
            });
        }
        if !(q.ql() > 0.0 && q.ql() <= 1.0) {
            violations.push(Violation::LatentDifficultyOutOfRange {
                question: q.id(),
                ql: q.ql(),
            });
        }
    }

    let mut last_attempt: BTreeMap<StudentId, u64> = BTreeMap::new();
    for (i, r) in history.records().iter().enumerate() {
        if !known.contains_key(&r.question) {
            violations.push(Violation::UnknownQuestion {
                record: i,
                question: r.question,
            });
        }
        let value = r.grade.value();
        if !(0.0..=1.0).contains(&value) {
            violations.push(Violation::GradeOutOfRange { record: i, value });
        }
        match last_attempt.get(&r.student) {
            Some(&last) if r.attempt_index <= last => {
                violations.push(Violation::NonIncreasingAttemptIndex {
                    student: r.student,
                    record: i,
                    index: r.attempt_index,
                });
            }
            _ => {
                last_attempt.insert(r.student, r.attempt_index);
            }
        }
    }

    ValidationReport { violations }
}
