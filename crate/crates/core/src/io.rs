//! File formats: interaction histories as CSV, experiment configuration as
//! a flat JSON object, and result files (two CSVs plus a JSON summary).
//! Every writer is deterministic: identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::baselines::NaiveInit;
use crate::domain::{AttemptRecord, Grade, InteractionHistory, Question, QuestionId};
use crate::harness::{Algorithm, ExperimentConfig, ExperimentResult, HarnessError};
use crate::ranking::TieBreak;
use crate::simulator::GradeMode;

pub const SKILL_FILE: &str = "skill_progression.csv";
pub const MIX_FILE: &str = "difficulty_mix.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const HISTORY_HEADER: &str = "student_id,question_id,skill_id,level,grade,attempt_index";
const SKILL_HEADER: &str = "algorithm,replication,step,segment,mean_skill,n";
const MIX_HEADER: &str = "algorithm,step,level,count";

#[derive(Error, Debug)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {problem}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        problem: String,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("history references question {0}, which is missing from the bank")]
    UnknownQuestion(QuestionId),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A history file carries question metadata on every row, so loading
/// recovers both the records and the question bank they mention.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedHistory {
    pub questions: Vec<Question>,
    pub history: InteractionHistory,
}

pub fn save_history(
    path: &Path,
    questions: &[Question],
    history: &InteractionHistory,
) -> Result<(), IoError> {
    let by_id: BTreeMap<QuestionId, &Question> = questions.iter().map(|q| (q.id(), q)).collect();
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history.records() {
        let q = by_id
            .get(&r.question)
            .ok_or(IoError::UnknownQuestion(r.question))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.student,
            r.question,
            q.skill(),
            q.level(),
            r.grade.value(),
            r.attempt_index
        );
    }
    fs::write(path, out).map_err(io_err(path))
}

fn parse_field<T: FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| IoError::Malformed {
        path: path.to_path_buf(),
        line,
        problem: format!("field {name}: {e} (got {raw:?})"),
    })
}

pub fn load_history(path: &Path) -> Result<LoadedHistory, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let malformed = |line: usize, problem: String| IoError::Malformed {
        path: path.to_path_buf(),
        line,
        problem,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == HISTORY_HEADER => {}
        Some((_, header)) => {
            return Err(malformed(1, format!("expected header {HISTORY_HEADER:?}, got {header:?}")))
        }
        None => return Err(malformed(1, "empty file".into())),
    }
    let mut questions: BTreeMap<QuestionId, Question> = BTreeMap::new();
    let mut history = InteractionHistory::new();
    for (idx, row) in lines {
        let line = idx + 1;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 6 {
            return Err(malformed(
                line,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let student = parse_field::<u32>(path, line, "student_id", fields[0])?.into();
        let question: QuestionId = parse_field::<u32>(path, line, "question_id", fields[1])?.into();
        let skill = parse_field::<u32>(path, line, "skill_id", fields[2])?.into();
        let level: u8 = parse_field(path, line, "level", fields[3])?;
        let grade_raw: f64 = parse_field(path, line, "grade", fields[4])?;
        let attempt_index: u64 = parse_field(path, line, "attempt_index", fields[5])?;

        let parsed = Question::from_level(question, skill, level)
            .map_err(|e| malformed(line, format!("field level: {e}")))?;
        match questions.get(&question) {
            Some(known) if *known != parsed => {
                return Err(malformed(
                    line,
                    format!("question {question} conflicts with an earlier row's metadata"),
                ))
            }
            Some(_) => {}
            None => {
                questions.insert(question, parsed);
            }
        }
        let grade =
            Grade::new(grade_raw).map_err(|e| malformed(line, format!("field grade: {e}")))?;
        history
            .push(AttemptRecord {
                student,
                question,
                grade,
                attempt_index,
            })
            .map_err(|e| malformed(line, e.to_string()))?;
    }
    Ok(LoadedHistory {
        questions: questions.into_values().collect(),
        history,
    })
}

/// Partial experiment config as found in a JSON file: every key optional,
/// flat, unknown keys rejected. `eta` feeds both the selection threshold
/// and the simulator's pass threshold, which the model keeps equal.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub seed: Option<u64>,
    pub n_students: Option<usize>,
    pub n_questions: Option<usize>,
    pub n_skills: Option<usize>,
    pub session_length: Option<usize>,
    pub history_attempts: Option<usize>,
    pub replications: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub eta: Option<f64>,
    pub gamma0: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub alpha4: Option<f64>,
    pub softmax_scale: Option<f64>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub pi_floor: Option<f64>,
    pub no_repeat: Option<bool>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub grade_mode: Option<GradeMode>,
    pub sample_with_replacement: Option<bool>,
    pub k_neighbors: Option<usize>,
    pub min_common_questions: Option<usize>,
    pub tie_break: Option<TieBreak>,
    pub naive_init: Option<NaiveInit>,
}

impl ConfigOverlay {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut config = base.clone();
        macro_rules! set {
            ($($target:expr => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            config.seed => seed,
            config.n_students => n_students,
            config.n_questions => n_questions,
            config.n_skills => n_skills,
            config.session_length => session_length,
            config.history_attempts => history_attempts,
            config.replications => replications,
            config.algorithms => algorithms,
            config.maple.eta => eta,
            config.sim.eta => eta,
            config.maple.gamma0 => gamma0,
            config.maple.alpha1 => alpha1,
            config.maple.alpha2 => alpha2,
            config.maple.alpha3 => alpha3,
            config.maple.alpha4 => alpha4,
            config.maple.softmax_scale => softmax_scale,
            config.maple.gamma_min => gamma_min,
            config.maple.gamma_max => gamma_max,
            config.maple.pi_floor => pi_floor,
            config.maple.no_repeat => no_repeat,
            config.sim.theta => theta,
            config.sim.beta => beta,
            config.sim.delta1 => delta1,
            config.sim.delta2 => delta2,
            config.sim.grade_mode => grade_mode,
            config.sim.sample_with_replacement => sample_with_replacement,
            config.ranking.k_neighbors => k_neighbors,
            config.ranking.min_common_questions => min_common_questions,
            config.ranking.tie_break => tie_break,
            config.naive_init => naive_init,
        }
        config
    }
}

/// Read a JSON overlay and apply it to `base`, validating the result.
pub fn load_config(path: &Path, base: &ExperimentConfig) -> Result<ExperimentConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let overlay: ConfigOverlay = serde_json::from_str(&text)
        .map_err(|e| IoError::Config(format!("{}: {e}", path.display())))?;
    let config = overlay.apply(base);
    config.validate().map_err(|e| match e {
        HarnessError::InvalidConfig(msg) => IoError::Config(msg),
        other => IoError::Config(other.to_string()),
    })?;
    Ok(config)
}

/// Write the three result files. The difficulty mix is summed across
/// replications; the skill table keeps them separate.
pub fn write_results(out_dir: &Path, result: &ExperimentResult) -> Result<(), IoError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut skill = String::from(SKILL_HEADER);
    skill.push('\n');
    for r in &result.skill_rows {
        let _ = writeln!(
            skill,
            "{},{},{},{},{},{}",
            r.algorithm, r.replication, r.step, r.segment, r.mean_skill, r.n
        );
    }
    let path = out_dir.join(SKILL_FILE);
    fs::write(&path, skill).map_err(io_err(&path))?;

    let mut mix_totals: BTreeMap<(Algorithm, usize, u8), usize> = BTreeMap::new();
    for r in &result.mix_rows {
        *mix_totals.entry((r.algorithm, r.step, r.level)).or_default() += r.count;
    }
    let mut mix = String::from(MIX_HEADER);
    mix.push('\n');
    for ((algorithm, step, level), count) in mix_totals {
        let _ = writeln!(mix, "{algorithm},{step},{level},{count}");
    }
    let path = out_dir.join(MIX_FILE);
    fs::write(&path, mix).map_err(io_err(&path))?;

    let mut summary =
        serde_json::to_string_pretty(&result.summary).expect("summary serialization is total");
    summary.push('\n');
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, summary).map_err(io_err(&path))?;
    Ok(())
}
