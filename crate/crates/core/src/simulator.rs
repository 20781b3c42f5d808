//! Synthetic student population: logistic answer model with a tunable noise
//! mixture, multiplicative skill dynamics, and bulk generation of practice
//! histories.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    default_level_ql, Grade, InteractionHistory, Question, QuestionId, SkillId, StudentId,
    NUM_LEVELS,
};
use crate::seeds::{rng_for, tag};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("student {student} has no entry for skill {skill}")]
    MissingSkill { student: StudentId, skill: SkillId },
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("question set is empty")]
    EmptyQuestionSet,
    #[error("cannot draw {requested} distinct questions from a bank of {available}")]
    BankTooSmall { requested: usize, available: usize },
    #[error("invalid simulation parameter: {0}")]
    InvalidParams(String),
}

/// How an attempt's probability of success becomes a grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeMode {
    /// Grade 1.0 with the computed probability, else 0.0.
    Bernoulli,
    /// Grade equals the probability itself.
    Continuous,
}

/// Student-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Logistic shape constant; larger values sharpen the skill-difficulty
    /// response.
    pub theta: f64,
    /// Weight of the deterministic term in the noise mixture, in [0, 1].
    pub beta: f64,
    /// Learning rate applied on success.
    pub delta1: f64,
    /// Decay rate applied on failure.
    pub delta2: f64,
    /// Passing threshold: a grade strictly above it counts as success.
    pub eta: f64,
    /// Grade realization mode.
    pub grade_mode: GradeMode,
    /// Whether history generation samples questions with replacement.
    pub sample_with_replacement: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            theta: 5.0,
            beta: 0.8,
            delta1: 0.10,
            delta2: 0.05,
            eta: 0.7,
            grade_mode: GradeMode::Bernoulli,
            sample_with_replacement: true,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.theta > 0.0) {
            return Err(SimError::InvalidParams(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(SimError::InvalidParams(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        for (name, value) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(SimError::InvalidParams(format!(
                    "{name} must lie in (0, 1), got {value}"
                )));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(SimError::InvalidParams(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// One simulated student: an id and a skill level in [0, 1] per skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub id: StudentId,
    pub skills: BTreeMap<SkillId, f64>,
}

impl StudentProfile {
    pub fn skill(&self, skill: SkillId) -> Option<f64> {
        self.skills.get(&skill).copied()
    }

    pub fn mean_skill(&self) -> f64 {
        if self.skills.is_empty() {
            return 0.0;
        }
        self.skills.values().sum::<f64>() / self.skills.len() as f64
    }
}

/// Success probability of a student with skill `sl` on a question of latent
/// difficulty `ql`: logistic in the gap, `1 / (1 + e^{theta (ql - sl)})`.
pub fn p_success_deterministic(sl: f64, ql: f64, theta: f64) -> f64 {
    1.0 / (1.0 + (theta * (ql - sl)).exp())
}

/// Noise-mixed success probability: `beta` parts the logistic term, the rest
/// a fresh U(0, 1) draw. Always in [0, 1].
pub fn p_success<R: Rng + ?Sized>(sl: f64, ql: f64, params: &SimParams, rng: &mut R) -> f64 {
    let eps: f64 = rng.gen();
    params.beta * p_success_deterministic(sl, ql, params.theta) + (1.0 - params.beta) * eps
}

/// Grade one attempt. Consumes exactly two draws from `rng` in Bernoulli
/// mode (noise term, then the realization) and one in continuous mode, so
/// replaying a seed replays the grades.
pub fn attempt<R: Rng + ?Sized>(
    student: &StudentProfile,
    question: &Question,
    params: &SimParams,
    rng: &mut R,
) -> Result<Grade, SimError> {
    let sl = student
        .skill(question.skill())
        .ok_or(SimError::MissingSkill {
            student: student.id,
            skill: question.skill(),
        })?;
    let p = p_success(sl, question.ql(), params, rng);
    let grade = match params.grade_mode {
        GradeMode::Bernoulli => {
            if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        GradeMode::Continuous => p,
    };
    Ok(Grade::new(grade).expect("mixture of unit-interval terms stays in range"))
}

/// Post-attempt skill level. Success (grade strictly above `eta`) adds
/// `delta1 * ql * (1 - sl)`; anything else subtracts `delta2 * (1 - ql) * sl`.
/// Both moves keep the level in [0, 1].
pub fn update_skill(sl: f64, ql: f64, grade: Grade, params: &SimParams) -> f64 {
    if grade.value() > params.eta {
        sl + params.delta1 * ql * (1.0 - sl)
    } else {
        sl - params.delta2 * (1.0 - ql) * sl
    }
}

/// A fresh population: questions with uniformly assigned skills and levels,
/// students with i.i.d. U(0, 1) entries for every skill.
pub fn generate_population<R: Rng + ?Sized>(
    n_students: usize,
    n_questions: usize,
    n_skills: usize,
    rng: &mut R,
) -> Result<(Vec<StudentProfile>, Vec<Question>), SimError> {
    if n_students == 0 {
        return Err(SimError::ZeroCount("n_students"));
    }
    if n_questions == 0 {
        return Err(SimError::ZeroCount("n_questions"));
    }
    if n_skills == 0 {
        return Err(SimError::ZeroCount("n_skills"));
    }

    let questions = (0..n_questions)
        .map(|i| {
            let skill = SkillId::new(rng.gen_range(0..n_skills as u32));
            let level = rng.gen_range(1..=NUM_LEVELS);
            Question::new(
                QuestionId::new(i as u32),
                skill,
                level,
                default_level_ql(level),
            )
            .expect("generated level and difficulty are in range")
        })
        .collect();

    let students = (0..n_students)
        .map(|i| {
            let skills = (0..n_skills as u32)
                .map(|k| (SkillId::new(k), rng.gen::<f64>()))
                .collect();
            StudentProfile {
                id: StudentId::new(i as u32),
                skills,
            }
        })
        .collect();

    Ok((students, questions))
}

/// Bulk practice history: every student answers `attempts_per_student`
/// randomly chosen questions, skills evolving as they go. The input profiles
/// are left untouched; each student runs on its own substream of `seed`, so
/// results do not depend on scheduling.
pub fn generate_history(
    students: &[StudentProfile],
    questions: &[Question],
    attempts_per_student: usize,
    params: &SimParams,
    seed: u64,
) -> Result<InteractionHistory, SimError> {
    if attempts_per_student == 0 {
        return Err(SimError::ZeroCount("attempts_per_student"));
    }
    if questions.is_empty() {
        return Err(SimError::EmptyQuestionSet);
    }
    if !params.sample_with_replacement && attempts_per_student > questions.len() {
        return Err(SimError::BankTooSmall {
            requested: attempts_per_student,
            available: questions.len(),
        });
    }
    params.validate()?;

    let per_student: Vec<Vec<(QuestionId, Grade)>> = students
        .par_iter()
        .map(|profile| {
            let mut rng = rng_for(seed, &[tag::HISTORY, u64::from(profile.id.value())]);
            let mut student = profile.clone();
            let order: Vec<usize> = if params.sample_with_replacement {
                (0..attempts_per_student)
                    .map(|_| rng.gen_range(0..questions.len()))
                    .collect()
            } else {
                index::sample(&mut rng, questions.len(), attempts_per_student).into_vec()
            };
            let mut attempts = Vec::with_capacity(attempts_per_student);
            for qi in order {
                let question = &questions[qi];
                let grade = attempt(&student, question, params, &mut rng)?;
                let sl = student
                    .skill(question.skill())
                    .expect("attempt already checked the skill entry");
                student
                    .skills
                    .insert(question.skill(), update_skill(sl, question.ql(), grade, params));
                attempts.push((question.id(), grade));
            }
            Ok(attempts)
        })
        .collect::<Result<_, SimError>>()?;

    let mut history = InteractionHistory::new();
    for (profile, attempts) in students.iter().zip(per_student) {
        for (question, grade) in attempts {
            history.record(profile.id, question, grade);
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(sl: f64) -> StudentProfile {
        StudentProfile {
            id: StudentId::new(0),
            skills: [(SkillId::new(0), sl)].into_iter().collect(),
        }
    }

    fn question(ql: f64) -> Question {
        Question::new(QuestionId::new(0), SkillId::new(0), 1, ql).unwrap()
    }

    /// Two-sided Kolmogorov-Smirnov distance from U(0, 1).
    fn ks_uniform(samples: &mut [f64]) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let hi = (i as f64 + 1.0) / n - x;
                let lo = x - i as f64 / n;
                hi.max(lo)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn logistic_is_half_at_matched_difficulty() {
        for theta in [0.5, 5.0, 50.0] {
            assert_eq!(p_success_deterministic(0.3, 0.3, theta), 0.5);
        }
    }

    #[test]
    fn logistic_matches_hand_evaluation() {
        // 1 / (1 + e^1) with theta = 5 and a 0.2 difficulty surplus.
        assert_relative_eq!(
            p_success_deterministic(0.5, 0.7, 5.0),
            0.2689414213699951,
            max_relative = 1e-15
        );
    }

    #[test]
    fn logistic_is_symmetric_around_half() {
        let lo = p_success_deterministic(0.5, 0.7, 5.0);
        let hi = p_success_deterministic(0.7, 0.5, 5.0);
        assert_relative_eq!(lo + hi, 1.0, max_relative = 1e-15);
        assert_relative_eq!(hi, 0.7310585786300049, max_relative = 1e-15);
    }

    #[test]
    fn logistic_is_monotone_in_skill_and_difficulty() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        for &sl in &grid {
            for w in grid.windows(2) {
                assert!(
                    p_success_deterministic(sl, w[1], 5.0) < p_success_deterministic(sl, w[0], 5.0)
                );
                assert!(
                    p_success_deterministic(w[1], sl, 5.0) > p_success_deterministic(w[0], sl, 5.0)
                );
            }
        }
    }

    #[test]
    fn pure_deterministic_mixture_ignores_noise() {
        let params = SimParams {
            beta: 1.0,
            ..SimParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(
                p_success(0.4, 0.9, &params, &mut rng),
                p_success_deterministic(0.4, 0.9, 5.0)
            );
        }
    }

    #[test]
    fn pure_noise_mixture_is_uniform() {
        let params = SimParams {
            beta: 0.0,
            ..SimParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut samples: Vec<f64> = (0..10_000)
            .map(|_| p_success(0.4, 0.9, &params, &mut rng))
            .collect();
        // Critical KS distance at alpha = 0.001 for n = 10^4.
        assert!(ks_uniform(&mut samples) < 0.0195);
    }

    #[test]
    fn mixture_mean_at_matched_difficulty_is_half() {
        let params = SimParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| p_success(0.5, 0.5, &params, &mut rng))
            .sum();
        // Var = (1 - beta)^2 / 12 = 1/300; 3 sigma of the mean for n = 1e5.
        assert!((sum / n as f64 - 0.5).abs() < 5.5e-4);
    }

    #[test]
    fn attempt_rejects_missing_skill() {
        let student = profile(0.5);
        let q = Question::new(QuestionId::new(0), SkillId::new(9), 1, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            attempt(&student, &q, &SimParams::default(), &mut rng),
            Err(SimError::MissingSkill { .. })
        ));
    }

    #[test]
    fn strong_student_on_easy_question_almost_always_succeeds() {
        // beta = 1, sl = 1, ql = 0.2: success probability 1/(1 + e^{-4}) = 0.982.
        let params = SimParams {
            beta: 1.0,
            ..SimParams::default()
        };
        let student = profile(1.0);
        let q = question(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let successes = (0..n)
            .filter(|_| {
                attempt(&student, &q, &params, &mut rng).unwrap() == Grade::MAX
            })
            .count();
        let rate = successes as f64 / n as f64;
        assert!((rate - 0.9820137900379085).abs() < 0.004);
    }

    #[test]
    fn matched_difficulty_attempts_are_fair_coin() {
        let params = SimParams {
            beta: 1.0,
            ..SimParams::default()
        };
        let student = profile(0.5);
        let q = question(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let successes = (0..n)
            .filter(|_| attempt(&student, &q, &params, &mut rng).unwrap() == Grade::MAX)
            .count();
        assert!((successes as f64 / n as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn attempts_replay_under_a_fixed_seed() {
        let params = SimParams::default();
        let student = profile(0.5);
        let q = question(0.6);
        let run = |seed| -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| attempt(&student, &q, &params, &mut rng).unwrap().value())
                .collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn continuous_mode_returns_the_probability() {
        let params = SimParams {
            beta: 1.0,
            grade_mode: GradeMode::Continuous,
            ..SimParams::default()
        };
        let student = profile(0.5);
        let q = question(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let grade = attempt(&student, &q, &params, &mut rng).unwrap();
        assert_relative_eq!(grade.value(), 0.2689414213699951, max_relative = 1e-15);
    }

    #[test]
    fn skill_update_matches_hand_evaluation() {
        let params = SimParams::default();
        let up = update_skill(0.5, 0.8, Grade::new(1.0).unwrap(), &params);
        assert_relative_eq!(up, 0.54, max_relative = 1e-15);
    }

    #[test]
    fn skill_update_fixed_points() {
        let params = SimParams::default();
        assert_eq!(update_skill(1.0, 0.5, Grade::MAX, &params), 1.0);
        assert_eq!(update_skill(0.0, 0.5, Grade::MIN, &params), 0.0);
    }

    #[test]
    fn grade_at_threshold_counts_as_failure() {
        let params = SimParams::default();
        let sl = update_skill(0.5, 0.5, Grade::new(0.7).unwrap(), &params);
        assert_relative_eq!(sl, 0.5 - 0.05 * 0.5 * 0.5, max_relative = 1e-15);
    }

    #[test]
    fn gain_peaks_low_skill_high_difficulty_loss_peaks_opposite() {
        let params = SimParams::default();
        let grid: Vec<f64> = (0..=4).map(|i| 0.2 + 0.2 * i as f64).collect();
        let mut best_gain = (f64::MIN, 0.0, 0.0);
        let mut best_loss = (f64::MIN, 0.0, 0.0);
        for &sl in &grid {
            for &ql in &grid {
                let gain = update_skill(sl, ql, Grade::MAX, &params) - sl;
                let loss = sl - update_skill(sl, ql, Grade::MIN, &params);
                if gain > best_gain.0 {
                    best_gain = (gain, sl, ql);
                }
                if loss > best_loss.0 {
                    best_loss = (loss, sl, ql);
                }
            }
        }
        assert_eq!((best_gain.1, best_gain.2), (0.2, 1.0));
        assert_eq!((best_loss.1, best_loss.2), (1.0, 0.2));
    }

    proptest! {
        #[test]
        fn skill_updates_stay_in_unit_interval(
            sl in 0.0f64..=1.0,
            ql in 0.001f64..=1.0,
            grade in 0.0f64..=1.0,
        ) {
            let params = SimParams::default();
            let next = update_skill(sl, ql, Grade::new(grade).unwrap(), &params);
            prop_assert!((0.0..=1.0).contains(&next));
        }
    }

    #[test]
    fn population_rejects_zero_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_population(0, 10, 2, &mut rng).is_err());
        assert!(generate_population(10, 0, 2, &mut rng).is_err());
        assert!(generate_population(10, 10, 0, &mut rng).is_err());
    }

    #[test]
    fn single_skill_population_is_forced_onto_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (students, questions) = generate_population(5, 30, 1, &mut rng).unwrap();
        assert!(questions.iter().all(|q| q.skill() == SkillId::new(0)));
        assert!(students.iter().all(|s| s.skills.len() == 1));
    }

    #[test]
    fn question_levels_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, questions) = generate_population(1, 10_000, 10, &mut rng).unwrap();
        for level in 1..=NUM_LEVELS {
            let freq = questions.iter().filter(|q| q.level() == level).count() as f64 / 10_000.0;
            assert!((freq - 0.2).abs() < 0.012, "level {level}: {freq}");
        }
    }

    #[test]
    fn initial_skills_are_uniform_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (students, _) = generate_population(1000, 1, 10, &mut rng).unwrap();
        let values: Vec<f64> = students
            .iter()
            .flat_map(|s| s.skills.values().copied())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - 0.5).abs() < 0.009);
    }

    #[test]
    fn history_rejects_zero_attempts() {
        let (students, questions) = small_population();
        assert!(matches!(
            generate_history(&students, &questions, 0, &SimParams::default(), 0),
            Err(SimError::ZeroCount(_))
        ));
    }

    fn small_population() -> (Vec<StudentProfile>, Vec<Question>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        generate_population(20, 15, 3, &mut rng).unwrap()
    }

    #[test]
    fn history_has_one_record_per_requested_attempt() {
        let (students, questions) = small_population();
        let history =
            generate_history(&students, &questions, 7, &SimParams::default(), 42).unwrap();
        assert_eq!(history.len(), 20 * 7);
        for s in &students {
            assert_eq!(history.student_records(s.id).count(), 7);
        }
    }

    #[test]
    fn history_generation_does_not_touch_input_profiles() {
        let (students, questions) = small_population();
        let before = students.clone();
        generate_history(&students, &questions, 10, &SimParams::default(), 42).unwrap();
        assert_eq!(students, before);
    }

    #[test]
    fn history_generation_is_reproducible() {
        let (students, questions) = small_population();
        let a = generate_history(&students, &questions, 9, &SimParams::default(), 1).unwrap();
        let b = generate_history(&students, &questions, 9, &SimParams::default(), 1).unwrap();
        let c = generate_history(&students, &questions, 9, &SimParams::default(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn without_replacement_draws_distinct_questions() {
        let (students, questions) = small_population();
        let params = SimParams {
            sample_with_replacement: false,
            ..SimParams::default()
        };
        let history = generate_history(&students, &questions, 15, &params, 3).unwrap();
        for s in &students {
            let mut seen: Vec<QuestionId> =
                history.student_records(s.id).map(|r| r.question).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 15);
        }
        assert!(matches!(
            generate_history(&students, &questions, 16, &params, 3),
            Err(SimError::BankTooSmall { .. })
        ));
    }

    #[test]
    fn stronger_students_earn_higher_grades() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (students, questions) = generate_population(200, 50, 5, &mut rng).unwrap();
        let history =
            generate_history(&students, &questions, 50, &SimParams::default(), 13).unwrap();
        let mean_grade = |ids: Vec<StudentId>| -> f64 {
            let grades: Vec<f64> = ids
                .iter()
                .flat_map(|&id| history.student_records(id).map(|r| r.grade.value()))
                .collect();
            grades.iter().sum::<f64>() / grades.len() as f64
        };
        let strong: Vec<StudentId> = students
            .iter()
            .filter(|s| s.mean_skill() > 0.67)
            .map(|s| s.id)
            .collect();
        let weak: Vec<StudentId> = students
            .iter()
            .filter(|s| s.mean_skill() < 0.33)
            .map(|s| s.id)
            .collect();
        assert!(strong.len() > 10 && weak.len() > 10);
        assert!(mean_grade(strong) > mean_grade(weak));
    }

    #[test]
    fn params_validation_catches_out_of_range_values() {
        assert!(SimParams::default().validate().is_ok());
        for bad in [
            SimParams {
                theta: 0.0,
                ..SimParams::default()
            },
            SimParams {
                beta: 1.5,
                ..SimParams::default()
            },
            SimParams {
                delta1: 0.0,
                ..SimParams::default()
            },
            SimParams {
                delta2: 1.0,
                ..SimParams::default()
            },
            SimParams {
                eta: 1.0,
                ..SimParams::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(SimError::InvalidParams(_))));
        }
    }
}
