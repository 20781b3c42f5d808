//! Cohort experiments: run the configured sequencing algorithms over the
//! same simulated student population, track skill progression and the
//! difficulty mix of served questions step by step, and summarize final
//! skills by student segment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    naive_maple_initialize, AscendingSequencer, EdurankSequencer, MapleSequencer, NaiveInit,
    Sequencer, SequencerError,
};
use crate::domain::{
    DifficultyRanking, Grade, InteractionHistory, Question, QuestionId, StudentId, NUM_LEVELS,
};
use crate::maple::{MapleError, MapleParams, MapleState};
use crate::ranking::{rank_questions, RankingError, RankingParams};
use crate::seeds::{mix, rng_for, tag};
use crate::simulator::{
    attempt, generate_history, generate_population, update_skill, SimError, SimParams,
    StudentProfile,
};

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("sequencer returned question {0}, which is not in the bank")]
    UnknownQuestion(QuestionId),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Maple(#[from] MapleError),
}

/// The sequencing algorithms an experiment can compare.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Maple,
    Ascending,
    Edurank,
    NaiveMaple,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Maple,
        Algorithm::Ascending,
        Algorithm::Edurank,
        Algorithm::NaiveMaple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Maple => "maple",
            Algorithm::Ascending => "ascending",
            Algorithm::Edurank => "edurank",
            Algorithm::NaiveMaple => "naive_maple",
        }
    }

    /// Stable per-algorithm stream tag: session randomness depends on the
    /// algorithm identity, never on its position in the configured set.
    fn stream_tag(self) -> u64 {
        match self {
            Algorithm::Maple => 0,
            Algorithm::Ascending => 1,
            Algorithm::Edurank => 2,
            Algorithm::NaiveMaple => 3,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maple" => Ok(Algorithm::Maple),
            "ascending" => Ok(Algorithm::Ascending),
            "edurank" => Ok(Algorithm::Edurank),
            "naive_maple" => Ok(Algorithm::NaiveMaple),
            other => Err(format!(
                "unknown algorithm {other:?}; expected maple, ascending, edurank, or naive_maple"
            )),
        }
    }
}

/// Student segment by mean initial skill: weak below 0.33, strong above
/// 0.67, average inside the closed middle band.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Weak,
    Average,
    Strong,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Weak, Segment::Average, Segment::Strong];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Weak => "weak",
            Segment::Average => "average",
            Segment::Strong => "strong",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak" => Ok(Segment::Weak),
            "average" => Ok(Segment::Average),
            "strong" => Ok(Segment::Strong),
            other => Err(format!(
                "unknown segment {other:?}; expected weak, average, or strong"
            )),
        }
    }
}

pub fn classify_student(profile: &StudentProfile) -> Segment {
    let m = profile.mean_skill();
    if m < 0.33 {
        Segment::Weak
    } else if m <= 0.67 {
        Segment::Average
    } else {
        Segment::Strong
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_questions: usize,
    pub n_skills: usize,
    pub session_length: usize,
    /// Attempts per student in the pre-generated practice history.
    pub history_attempts: usize,
    pub replications: usize,
    pub algorithms: Vec<Algorithm>,
    pub maple: MapleParams,
    pub sim: SimParams,
    pub ranking: RankingParams,
    pub naive_init: NaiveInit,
}

impl ExperimentConfig {
    pub const DEFAULT_SEED: u64 = 42;

    /// Desk scale: minutes on one core, all four algorithms.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            n_students: 300,
            n_questions: 100,
            n_skills: 10,
            session_length: 100,
            history_attempts: 150,
            replications: 3,
            algorithms: Algorithm::ALL.to_vec(),
            maple: MapleParams::default(),
            sim: SimParams::default(),
            ranking: RankingParams::default(),
            naive_init: NaiveInit::UniformRandomOrder,
        }
    }

    /// Full scale: 1000 students, 200-question sessions, 500-attempt
    /// histories.
    pub fn paper(seed: u64) -> Self {
        Self {
            n_students: 1000,
            n_questions: 200,
            session_length: 200,
            history_attempts: 500,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::InvalidConfig(msg));
        for (name, value) in [
            ("n_students", self.n_students),
            ("n_questions", self.n_questions),
            ("n_skills", self.n_skills),
            ("session_length", self.session_length),
            ("history_attempts", self.history_attempts),
            ("replications", self.replications),
        ] {
            if value == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.algorithms.is_empty() {
            return fail("algorithms must name at least one sequencer".into());
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return fail("algorithms must not repeat".into());
        }
        if self.session_length > self.n_questions {
            let repeat_free = self.maple.no_repeat
                && self
                    .algorithms
                    .iter()
                    .any(|a| matches!(a, Algorithm::Maple | Algorithm::NaiveMaple));
            let fixed_pool = self
                .algorithms
                .iter()
                .any(|a| matches!(a, Algorithm::Ascending | Algorithm::Edurank));
            if repeat_free || fixed_pool {
                return fail(format!(
                    "session_length {} exceeds n_questions {} but the configured \
                     sequencers cannot repeat questions",
                    self.session_length, self.n_questions
                ));
            }
        }
        if !self.sim.sample_with_replacement && self.history_attempts > self.n_questions {
            return fail(format!(
                "history_attempts {} exceeds n_questions {} without replacement",
                self.history_attempts, self.n_questions
            ));
        }
        self.maple
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.sim
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.ranking
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(Self::DEFAULT_SEED)
    }
}

/// One step of a session: what was asked and how the student stood
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub question: QuestionId,
    pub level: u8,
    pub grade: Grade,
    /// Mean skill across all the student's skills, after this attempt.
    pub mean_skill: f64,
}

/// Drive one student through a session: select, attempt, feed the grade
/// back, apply the skill update; `session_length` times.
pub fn run_session(
    student: &mut StudentProfile,
    questions: &BTreeMap<QuestionId, Question>,
    sequencer: &mut dyn Sequencer,
    sim: &SimParams,
    session_length: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<TraceStep>, HarnessError> {
    let mut trace = Vec::with_capacity(session_length);
    for step in 0..session_length {
        let qid = sequencer.next_question(step, rng)?;
        let question = questions
            .get(&qid)
            .ok_or(HarnessError::UnknownQuestion(qid))?;
        let grade = attempt(student, question, sim, rng)?;
        sequencer.record_grade(grade)?;
        let sl = student
            .skill(question.skill())
            .expect("attempt validated the skill entry");
        student.skills.insert(
            question.skill(),
            update_skill(sl, question.ql(), grade, sim),
        );
        trace.push(TraceStep {
            question: qid,
            level: question.level(),
            grade,
            mean_skill: student.mean_skill(),
        });
    }
    Ok(trace)
}

/// Mean skill of one student segment after a step. `step` counts from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillRow {
    pub algorithm: Algorithm,
    pub replication: usize,
    pub step: usize,
    pub segment: Segment,
    pub mean_skill: f64,
    pub n: usize,
}

/// How many students were served a question of a level at a step.
#[derive(Debug, Clone, PartialEq)]
pub struct MixRow {
    pub algorithm: Algorithm,
    pub replication: usize,
    pub step: usize,
    pub level: u8,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    /// Students pooled across replications.
    pub n_students: usize,
    pub final_mean_skill: f64,
    pub final_skill_std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub final_mean_skill: f64,
    pub final_mean_skill_by_replication: Vec<f64>,
    pub segments: BTreeMap<String, SegmentSummary>,
}

/// Final-skill statistics per arm, plus the run's identifying parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub replications: usize,
    pub n_students: usize,
    pub session_length: usize,
    /// Every arm starts from bit-identical student profiles.
    pub paired_population: bool,
    pub arms: BTreeMap<String, ArmSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub skill_rows: Vec<SkillRow>,
    pub mix_rows: Vec<MixRow>,
    pub summary: Summary,
}

impl ExperimentResult {
    /// Segment mean skill after the last step of a replication.
    pub fn final_segment_mean(
        &self,
        algorithm: Algorithm,
        replication: usize,
        segment: Segment,
    ) -> Option<f64> {
        self.skill_rows
            .iter()
            .filter(|r| {
                r.algorithm == algorithm && r.replication == replication && r.segment == segment
            })
            .max_by_key(|r| r.step)
            .map(|r| r.mean_skill)
    }

    /// Fraction of questions served within a step window (1-based,
    /// inclusive) whose level falls in `levels`.
    pub fn level_fraction(
        &self,
        algorithm: Algorithm,
        replication: usize,
        steps: std::ops::RangeInclusive<usize>,
        levels: std::ops::RangeInclusive<u8>,
    ) -> f64 {
        let mut hit = 0usize;
        let mut total = 0usize;
        for r in &self.mix_rows {
            if r.algorithm == algorithm && r.replication == replication && steps.contains(&r.step) {
                total += r.count;
                if levels.contains(&r.level) {
                    hit += r.count;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// The deterministic world of one replication: population, question bank,
/// and pre-generated practice history.
pub fn replication_world(
    config: &ExperimentConfig,
    replication: usize,
) -> Result<(Vec<StudentProfile>, Vec<Question>, InteractionHistory), HarnessError> {
    config.validate()?;
    let rep_root = mix(config.seed, &[tag::REP, replication as u64]);
    let mut rng = rng_for(rep_root, &[tag::PROFILE]);
    let (students, questions) = generate_population(
        config.n_students,
        config.n_questions,
        config.n_skills,
        &mut rng,
    )?;
    let history = generate_history(
        &students,
        &questions,
        config.history_attempts,
        &config.sim,
        rep_root,
    )?;
    Ok((students, questions, history))
}

struct ArmOutput {
    skill_rows: Vec<SkillRow>,
    mix_rows: Vec<MixRow>,
    /// Final mean skill per student, with the student's segment.
    finals: Vec<(Segment, f64)>,
}

/// Aggregate one arm's traces. Keyed maps make the outcome independent of
/// the order sessions completed in.
fn aggregate_arm(
    algorithm: Algorithm,
    replication: usize,
    traces: &BTreeMap<StudentId, (Segment, Vec<TraceStep>)>,
    session_length: usize,
) -> ArmOutput {
    let mut skill_rows = Vec::new();
    let mut mix_rows = Vec::new();
    for step in 0..session_length {
        let mut sums: BTreeMap<Segment, (f64, usize)> = BTreeMap::new();
        let mut counts = [0usize; NUM_LEVELS as usize];
        for (segment, trace) in traces.values() {
            let t = &trace[step];
            let entry = sums.entry(*segment).or_insert((0.0, 0));
            entry.0 += t.mean_skill;
            entry.1 += 1;
            counts[(t.level - 1) as usize] += 1;
        }
        for (segment, (sum, n)) in sums {
            skill_rows.push(SkillRow {
                algorithm,
                replication,
                step: step + 1,
                segment,
                mean_skill: sum / n as f64,
                n,
            });
        }
        for (i, &count) in counts.iter().enumerate() {
            mix_rows.push(MixRow {
                algorithm,
                replication,
                step: step + 1,
                level: (i + 1) as u8,
                count,
            });
        }
    }
    let finals = traces
        .values()
        .map(|(segment, trace)| {
            let last = trace.last().expect("sessions have at least one step");
            (*segment, last.mean_skill)
        })
        .collect();
    ArmOutput {
        skill_rows,
        mix_rows,
        finals,
    }
}

fn build_sequencer(
    algorithm: Algorithm,
    config: &ExperimentConfig,
    profile: &StudentProfile,
    questions: &[Question],
    question_set: &[QuestionId],
    rankings: Option<&BTreeMap<StudentId, DifficultyRanking>>,
    rng: &mut dyn RngCore,
) -> Result<Box<dyn Sequencer>, HarnessError> {
    let ranking_for = |id: StudentId| -> DifficultyRanking {
        rankings
            .expect("rankings are precomputed for ranking-based arms")
            .get(&id)
            .expect("every student has a ranking")
            .clone()
    };
    Ok(match algorithm {
        Algorithm::Maple => Box::new(MapleSequencer::new(MapleState::initialize(
            ranking_for(profile.id),
            config.maple,
        )?)),
        Algorithm::Ascending => {
            Box::new(AscendingSequencer::new(questions, config.session_length))
        }
        Algorithm::Edurank => Box::new(EdurankSequencer::new(ranking_for(profile.id))),
        Algorithm::NaiveMaple => Box::new(MapleSequencer::new(naive_maple_initialize(
            profile.id,
            question_set,
            config.maple,
            config.naive_init,
            rng,
        )?)),
    })
}

fn run_replication(
    config: &ExperimentConfig,
    replication: usize,
) -> Result<Vec<(Algorithm, ArmOutput)>, HarnessError> {
    let rep_root = mix(config.seed, &[tag::REP, replication as u64]);
    let (students, questions, history) = replication_world(config, replication)?;
    let question_index: BTreeMap<QuestionId, Question> =
        questions.iter().map(|q| (q.id(), *q)).collect();
    let question_set: Vec<QuestionId> = questions.iter().map(|q| q.id()).collect();

    let needs_rankings = config
        .algorithms
        .iter()
        .any(|a| matches!(a, Algorithm::Maple | Algorithm::Edurank));
    let rankings: Option<BTreeMap<StudentId, DifficultyRanking>> = if needs_rankings {
        log::debug!("replication {replication}: computing {} rankings", students.len());
        Some(
            students
                .par_iter()
                .map(|s| {
                    rank_questions(&history, s.id, &question_set, &config.ranking)
                        .map(|r| (s.id, r))
                })
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };

    let mut outputs = Vec::new();
    for &algorithm in &config.algorithms {
        log::debug!("replication {replication}: running {algorithm}");
        let sessions: Vec<(StudentId, (Segment, Vec<TraceStep>))> = students
            .par_iter()
            .map(|profile| {
                let mut rng = rng_for(
                    rep_root,
                    &[
                        tag::SESSION,
                        algorithm.stream_tag(),
                        u64::from(profile.id.value()),
                    ],
                );
                let mut sequencer = build_sequencer(
                    algorithm,
                    config,
                    profile,
                    &questions,
                    &question_set,
                    rankings.as_ref(),
                    &mut rng,
                )?;
                let segment = classify_student(profile);
                let mut student = profile.clone();
                let trace = run_session(
                    &mut student,
                    &question_index,
                    sequencer.as_mut(),
                    &config.sim,
                    config.session_length,
                    &mut rng,
                )?;
                Ok((profile.id, (segment, trace)))
            })
            .collect::<Result<_, HarnessError>>()?;
        let traces: BTreeMap<StudentId, (Segment, Vec<TraceStep>)> =
            sessions.into_iter().collect();
        outputs.push((
            algorithm,
            aggregate_arm(algorithm, replication, &traces, config.session_length),
        ));
    }
    Ok(outputs)
}

fn summarize(
    config: &ExperimentConfig,
    finals: &BTreeMap<Algorithm, Vec<Vec<(Segment, f64)>>>,
) -> Summary {
    let mut arms = BTreeMap::new();
    for (&algorithm, per_rep) in finals {
        let by_replication: Vec<f64> = per_rep
            .iter()
            .map(|students| {
                students.iter().map(|(_, sl)| sl).sum::<f64>() / students.len() as f64
            })
            .collect();
        let all: Vec<(Segment, f64)> = per_rep.iter().flatten().copied().collect();
        let overall = all.iter().map(|(_, sl)| sl).sum::<f64>() / all.len() as f64;
        let mut segments = BTreeMap::new();
        for segment in Segment::ALL {
            let values: Vec<f64> = all
                .iter()
                .filter(|(s, _)| *s == segment)
                .map(|(_, sl)| *sl)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            segments.insert(
                segment.name().to_string(),
                SegmentSummary {
                    n_students: n,
                    final_mean_skill: mean,
                    final_skill_std_dev: var.sqrt(),
                },
            );
        }
        arms.insert(
            algorithm.name().to_string(),
            ArmSummary {
                final_mean_skill: overall,
                final_mean_skill_by_replication: by_replication,
                segments,
            },
        );
    }
    Summary {
        seed: config.seed,
        replications: config.replications,
        n_students: config.n_students,
        session_length: config.session_length,
        paired_population: true,
        arms,
    }
}

/// Run the full experiment: per replication, one deterministic world and a
/// session per (algorithm, student), arms paired on identical populations.
/// Rows come out sorted by (algorithm, replication, step, segment or level).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let mut skill_rows = Vec::new();
    let mut mix_rows = Vec::new();
    let mut finals: BTreeMap<Algorithm, Vec<Vec<(Segment, f64)>>> = BTreeMap::new();
    for replication in 0..config.replications {
        log::info!("replication {replication} of {}", config.replications);
        for (algorithm, output) in run_replication(config, replication)? {
            skill_rows.extend(output.skill_rows);
            mix_rows.extend(output.mix_rows);
            finals.entry(algorithm).or_default().push(output.finals);
        }
    }
    skill_rows.sort_by_key(|r| (r.algorithm, r.replication, r.step, r.segment));
    mix_rows.sort_by_key(|r| (r.algorithm, r.replication, r.step, r.level));
    let summary = summarize(config, &finals);
    Ok(ExperimentResult {
        skill_rows,
        mix_rows,
        summary,
    })
}
