//! `maple`: reproducible question-sequencing experiments from the command
//! line. Tables go to standard output; diagnostics, controlled by the
//! `MAPLE_LOG` environment variable, go to standard error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use maple_core::harness::{self, Algorithm, ExperimentConfig, HarnessError, Segment, Summary};
use maple_core::io::{self, IoError, MIX_FILE, SKILL_FILE, SUMMARY_FILE};
use maple_core::ranking::{rank_questions_with_scores, RankingError};
use maple_core::StudentId;

const USAGE_EXIT: u8 = 1;
const VALIDATION_EXIT: u8 = 2;
const RUNTIME_EXIT: u8 = 3;

#[derive(Error, Debug)]
enum AppError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Validation(_) => VALIDATION_EXIT,
            AppError::Runtime(_) => RUNTIME_EXIT,
        }
    }
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => AppError::Runtime(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_) => AppError::Validation(e.to_string()),
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<RankingError> for AppError {
    fn from(e: RankingError) -> Self {
        AppError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "maple",
    version,
    about = "Adaptive question sequencing: simulate, rank, run, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

impl Preset {
    fn config(self) -> ExperimentConfig {
        match self {
            Preset::Desk => ExperimentConfig::desk(ExperimentConfig::DEFAULT_SEED),
            Preset::Paper => ExperimentConfig::paper(ExperimentConfig::DEFAULT_SEED),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a practice history and write it as CSV
    GenHistory {
        /// JSON config overriding the preset's defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for history.csv
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Base scale to start from
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
    /// Run the paired sequencing experiment and write result files
    Run {
        /// JSON config overriding the preset's defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the result files
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Restrict to one algorithm (repeatable)
        #[arg(long = "algo", value_parser = Algorithm::from_str)]
        algo: Vec<Algorithm>,
        /// Base scale to start from
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
    /// Print a student's difficulty ranking from a history file
    Rank {
        /// JSON config (ranking parameters)
        #[arg(long)]
        config: Option<PathBuf>,
        /// History CSV to rank from
        #[arg(long)]
        history: PathBuf,
        /// Student to rank for
        #[arg(long)]
        student_id: u32,
    },
    /// Summarize previously written result files as text tables
    Report {
        /// Directory holding the result files
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAPLE_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => USAGE_EXIT,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::GenHistory {
            config,
            seed,
            out_dir,
            preset,
        } => gen_history(&effective_config(preset, config.as_deref(), seed, &[])?, &out_dir),
        Command::Run {
            config,
            seed,
            out_dir,
            algo,
            preset,
        } => run(&effective_config(preset, config.as_deref(), seed, &algo)?, &out_dir),
        Command::Rank {
            config,
            history,
            student_id,
        } => rank(
            &effective_config(Preset::Desk, config.as_deref(), None, &[])?,
            &history,
            StudentId::new(student_id),
        ),
        Command::Report { out_dir } => report(&out_dir),
    }
}

fn effective_config(
    preset: Preset,
    config: Option<&Path>,
    seed: Option<u64>,
    algorithms: &[Algorithm],
) -> Result<ExperimentConfig, AppError> {
    let base = preset.config();
    let mut effective = match config {
        Some(path) => io::load_config(path, &base)?,
        None => base,
    };
    if let Some(seed) = seed {
        effective.seed = seed;
    }
    if !algorithms.is_empty() {
        effective.algorithms = algorithms.to_vec();
    }
    effective.validate()?;
    Ok(effective)
}

fn gen_history(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let (_, questions, history) = harness::replication_world(config, 0)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| AppError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join("history.csv");
    io::save_history(&path, &questions, &history)?;
    let mean_grade = history
        .records()
        .iter()
        .map(|r| r.grade.value())
        .sum::<f64>()
        / history.len() as f64;
    println!(
        "wrote {}: {} records, mean grade {:.6}",
        path.display(),
        history.len(),
        mean_grade
    );
    Ok(())
}

fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let result = harness::run_experiment(config)?;
    io::write_results(out_dir, &result)?;
    log::info!("result files written to {}", out_dir.display());
    print!("{}", final_skill_table(&result.summary));
    Ok(())
}

fn rank(config: &ExperimentConfig, history_path: &Path, student: StudentId) -> Result<(), AppError> {
    let loaded = io::load_history(history_path)?;
    if !loaded.history.contains_student(student) {
        return Err(AppError::Validation(format!(
            "student {student} does not appear in {}",
            history_path.display()
        )));
    }
    let question_set: Vec<_> = loaded.questions.iter().map(|q| q.id()).collect();
    let scored =
        rank_questions_with_scores(&loaded.history, student, &question_set, &config.ranking)?;
    println!("ranking for student {student}, easiest first");
    println!("{:>8}  {:>11}  {:>8}", "position", "question_id", "copeland");
    for (i, (question, score)) in scored.iter().enumerate() {
        println!("{:>8}  {:>11}  {:>8}", i + 1, question, score);
    }
    Ok(())
}

fn final_skill_table(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>8}",
        "algorithm", "overall", "weak", "average", "strong"
    );
    for (name, arm) in &summary.arms {
        let cell = |segment: Segment| -> String {
            arm.segments
                .get(segment.name())
                .map_or_else(|| "-".into(), |s| format!("{:.4}", s.final_mean_skill))
        };
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>8} {:>8} {:>8}",
            name,
            arm.final_mean_skill,
            cell(Segment::Weak),
            cell(Segment::Average),
            cell(Segment::Strong),
        );
    }
    out
}

struct SkillRecord {
    algorithm: Algorithm,
    step: usize,
    segment: Segment,
    mean_skill: f64,
    n: usize,
}

fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<String>>, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Runtime(format!("{}: {e} (run `maple run` first)", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(AppError::Validation(format!(
            "{}: expected header {header:?}",
            path.display()
        )));
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn parse_cell<T: FromStr>(path: &Path, row: &[String], idx: usize) -> Result<T, AppError>
where
    T::Err: std::fmt::Display,
{
    row.get(idx)
        .ok_or_else(|| AppError::Validation(format!("{}: truncated row", path.display())))?
        .parse()
        .map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))
}

fn report(out_dir: &Path) -> Result<(), AppError> {
    let summary_path = out_dir.join(SUMMARY_FILE);
    let summary_text = fs::read_to_string(&summary_path).map_err(|e| {
        AppError::Runtime(format!("{}: {e} (run `maple run` first)", summary_path.display()))
    })?;
    let summary: Summary = serde_json::from_str(&summary_text)
        .map_err(|e| AppError::Validation(format!("{}: {e}", summary_path.display())))?;

    let skill_path = out_dir.join(SKILL_FILE);
    let mut skills = Vec::new();
    for row in read_table(&skill_path, "algorithm,replication,step,segment,mean_skill,n")? {
        skills.push(SkillRecord {
            algorithm: parse_cell(&skill_path, &row, 0)?,
            step: parse_cell(&skill_path, &row, 2)?,
            segment: parse_cell(&skill_path, &row, 3)?,
            mean_skill: parse_cell(&skill_path, &row, 4)?,
            n: parse_cell(&skill_path, &row, 5)?,
        });
    }

    let mix_path = out_dir.join(MIX_FILE);
    // (algorithm, step, level) -> count, summed over replications upstream.
    let mut mix: BTreeMap<(Algorithm, usize, u8), usize> = BTreeMap::new();
    for row in read_table(&mix_path, "algorithm,step,level,count")? {
        mix.insert(
            (
                parse_cell(&mix_path, &row, 0)?,
                parse_cell(&mix_path, &row, 1)?,
                parse_cell(&mix_path, &row, 2)?,
            ),
            parse_cell(&mix_path, &row, 3)?,
        );
    }

    println!(
        "experiment: seed {}, {} replications, {} students, {}-step sessions",
        summary.seed, summary.replications, summary.n_students, summary.session_length
    );
    println!();
    println!("final mean skill");
    print!("{}", final_skill_table(&summary));

    let last_step = skills.iter().map(|r| r.step).max().unwrap_or(0);
    if last_step > 0 {
        let checkpoints: Vec<usize> = [1, last_step / 4, last_step / 2, 3 * last_step / 4, last_step]
            .into_iter()
            .filter(|&s| s >= 1)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        println!();
        println!("mean skill by step and segment (pooled over replications)");
        print!("{:<12} {:<8}", "algorithm", "segment");
        for step in &checkpoints {
            print!(" {:>8}", format!("t={step}"));
        }
        println!();
        for name in summary.arms.keys() {
            let algorithm = Algorithm::from_str(name)
                .map_err(AppError::Validation)?;
            for segment in Segment::ALL {
                let at = |step: usize| -> Option<f64> {
                    let rows: Vec<&SkillRecord> = skills
                        .iter()
                        .filter(|r| {
                            r.algorithm == algorithm && r.segment == segment && r.step == step
                        })
                        .collect();
                    let total: usize = rows.iter().map(|r| r.n).sum();
                    (total > 0).then(|| {
                        rows.iter().map(|r| r.mean_skill * r.n as f64).sum::<f64>()
                            / total as f64
                    })
                };
                if checkpoints.iter().all(|&s| at(s).is_none()) {
                    continue;
                }
                print!("{algorithm:<12} {segment:<8}");
                for &step in &checkpoints {
                    match at(step) {
                        Some(v) => print!(" {v:>8.4}"),
                        None => print!(" {:>8}", "-"),
                    }
                }
                println!();
            }
        }

        let window = (last_step / 10).max(1);
        println!();
        println!("share of easy questions (levels 1-2), first vs last {window} steps");
        println!("{:<12} {:>8} {:>8}", "algorithm", "early", "late");
        for name in summary.arms.keys() {
            let algorithm = Algorithm::from_str(name)
                .map_err(AppError::Validation)?;
            let share = |lo: usize, hi: usize| -> f64 {
                let mut easy = 0usize;
                let mut total = 0usize;
                for (&(a, step, level), &count) in &mix {
                    if a == algorithm && (lo..=hi).contains(&step) {
                        total += count;
                        if level <= 2 {
                            easy += count;
                        }
                    }
                }
                easy as f64 / total.max(1) as f64
            };
            println!(
                "{algorithm:<12} {:>8.4} {:>8.4}",
                share(1, window),
                share(last_step - window + 1, last_step)
            );
        }
    }
    Ok(())
}
