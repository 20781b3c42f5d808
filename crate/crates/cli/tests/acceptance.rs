//! Acceptance suite: ten numbered checks, each printing one
//! `ACCEPTANCE NN PASS|FAIL` line (run with `--nocapture` to see them all).
//! Tolerances and golden values are pinned in place with their derivations.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use maple_core::baselines::scheduled_level;
use maple_core::domain::DifficultyRanking;
use maple_core::harness::replication_world;
use maple_core::ranking::{rank_questions, rank_questions_with_scores, RankingParams};
use maple_core::simulator::{p_success, p_success_deterministic, update_skill};
use maple_core::{
    run_experiment, Algorithm, ExperimentConfig, ExperimentResult, Grade, InteractionHistory,
    MapleParams, MapleState, QuestionId, Segment, SimParams, StudentId,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn criterion(number: u32, what: &str, body: impl FnOnce()) {
    let outcome = panic::catch_unwind(AssertUnwindSafe(body));
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number:02} {verdict} {what}");
    if let Err(cause) = outcome {
        panic::resume_unwind(cause);
    }
}

fn identity_ranking(n: u32) -> DifficultyRanking {
    DifficultyRanking::new(StudentId::new(0), (0..n).map(QuestionId::new).collect()).unwrap()
}

fn assert_simplex(state: &MapleState) {
    let sum: f64 = state.weights().iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9, "weights sum to {sum}");
    assert!(
        state.weights().iter().all(|&w| w >= 0.0),
        "negative weight in {:?}",
        state.weights()
    );
    let params = state.params();
    assert!(
        (params.gamma_min..=params.gamma_max).contains(&state.gamma()),
        "gamma {} escaped [{}, {}]",
        state.gamma(),
        params.gamma_min,
        params.gamma_max
    );
}

#[test]
fn accept_01_simplex_fuzz() {
    criterion(1, "weights stay on the simplex through 1e5 fuzzed calls", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF0221);
        let start = Instant::now();
        let mut calls = 0u64;
        while calls < 100_000 {
            let n = rng.gen_range(2..=40usize);
            let mut ids: Vec<QuestionId> = (0..n as u32).map(QuestionId::new).collect();
            ids.shuffle(&mut rng);
            let params = MapleParams {
                eta: rng.gen_range(0.1..0.9),
                gamma0: rng.gen_range(0.01..0.5),
                alpha1: rng.gen_range(0.5..2.0),
                alpha2: rng.gen_range(1.0..1.2),
                alpha3: rng.gen_range(0.2..1.5),
                alpha4: rng.gen_range(0.7..1.0),
                softmax_scale: rng.gen_range(0.0..5.0),
                no_repeat: rng.gen_bool(0.5),
                ..MapleParams::default()
            };
            let order = DifficultyRanking::new(StudentId::new(0), ids).unwrap();
            let mut state = MapleState::initialize(order, params).unwrap();
            assert_simplex(&state);
            for _ in 0..2 * n {
                if state.is_exhausted() {
                    break;
                }
                let (_, position) = state.next_question(&mut rng).unwrap();
                calls += 1;
                assert_simplex(&state);
                state
                    .update(position, Grade::new(rng.gen()).unwrap())
                    .unwrap();
                calls += 1;
                assert_simplex(&state);
            }
        }
        let elapsed = start.elapsed();
        assert!(
            elapsed < Duration::from_secs(10),
            "{calls} calls took {elapsed:?}"
        );
    });
}

#[test]
fn accept_02_equation_checks() {
    criterion(2, "success and skill-update formulas hit their pinned constants", || {
        // Matched skill and difficulty sit exactly at the logistic midpoint.
        for theta in [0.5, 5.0, 50.0] {
            assert_eq!(p_success_deterministic(0.4, 0.4, theta), 0.5);
        }
        // Difficulty 0.2 above skill at theta 5: 1 / (1 + e^1).
        assert!((p_success_deterministic(0.5, 0.7, 5.0) - 0.268941).abs() <= 1e-6);
        // Success gain 0.5 + 0.1 * 0.8 * 0.5; failure loss 0.5 - 0.05 * 0.8 * 0.5.
        let params = SimParams::default();
        assert!((update_skill(0.5, 0.8, Grade::MAX, &params) - 0.54).abs() <= 1e-12);
        assert!((update_skill(0.5, 0.2, Grade::MIN, &params) - 0.48).abs() <= 1e-12);
        // No headroom and no floor to fall through.
        assert_eq!(update_skill(1.0, 0.5, Grade::MAX, &params), 1.0);
        assert_eq!(update_skill(0.0, 0.5, Grade::MIN, &params), 0.0);
        // Full weight on the deterministic term erases the noise draw.
        let sure = SimParams {
            beta: 1.0,
            ..SimParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let sl: f64 = rng.gen();
            let ql: f64 = rng.gen();
            let collapsed = p_success(sl, ql, &sure, &mut rng);
            assert_eq!(collapsed, p_success_deterministic(sl, ql, sure.theta));
        }
    });
}

#[test]
fn accept_03_update_goldens() {
    criterion(3, "three-question update goldens reproduce to 1e-9", || {
        let start = || {
            MapleState::restore(
                identity_ranking(3),
                vec![0.5, 0.3, 0.2],
                0.1,
                vec![false; 3],
                MapleParams::default(),
            )
            .unwrap()
        };

        // Success at the easiest position with grade 0.9: reward 0.2, the two
        // harder weights scale by 1.2 e^0.2 = 1.465683309792204, and the
        // normalizer is 0.5 + 0.5 * 1.465683309792204 = 1.232841654896102.
        let mut state = start();
        state.update(0, Grade::new(0.9).unwrap()).unwrap();
        let expected = [0.40556708804760305, 0.35665974717143817, 0.23777316478095878];
        for (j, (&got, want)) in state.weights().iter().zip(expected).enumerate() {
            assert!(
                (got - want).abs() <= 1e-9,
                "success weight {j}: {got} vs {want}"
            );
        }
        // Exploration grows by alpha2: 1.05 * 0.1.
        assert!((state.gamma() - 0.105).abs() <= 1e-12);

        // Failure with grade 0.5: reward -0.2, scale 0.8 e^-0.2 =
        // 0.6549846024623855, normalizer 0.5 + 0.5 * 0.6549846024623855.
        let mut state = start();
        state.update(0, Grade::new(0.5).unwrap()).unwrap();
        let expected = [0.6042352288426973, 0.2374588626943816, 0.15830590846292106];
        for (j, (&got, want)) in state.weights().iter().zip(expected).enumerate() {
            assert!(
                (got - want).abs() <= 1e-9,
                "failure weight {j}: {got} vs {want}"
            );
        }
        // Exploration shrinks by alpha4: 0.95 * 0.1.
        assert!((state.gamma() - 0.095).abs() <= 1e-12);
    });
}

#[test]
fn accept_04_sampling_distributions() {
    criterion(4, "selection frequencies match exact and simulated distributions", || {
        // Without exploration the selection distribution is the weight
        // vector itself; chi-square over 1e5 draws, 3 degrees of freedom.
        let params = MapleParams {
            gamma0: 0.0,
            gamma_min: 0.0,
            ..MapleParams::default()
        };
        let state = MapleState::initialize(identity_ranking(4), params).unwrap();
        let w = state.weights().to_vec();
        let draws = 100_000usize;
        let mut counts = [0usize; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0xACC401);
        for _ in 0..draws {
            let (_, position) = state.next_question(&mut rng).unwrap();
            counts[position] += 1;
        }
        // Upper 0.001 quantile of chi-square with 3 degrees of freedom.
        const CHI2_CRIT: f64 = 16.266;
        let stat: f64 = counts
            .iter()
            .zip(&w)
            .map(|(&c, &p)| {
                let expected = draws as f64 * p;
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        assert!(stat < CHI2_CRIT, "chi-square {stat} with weights {w:?}");

        // With exploration, compare against a Monte-Carlo estimate of the
        // clamp-then-normalize mixture, averaged over 1e6 noise vectors.
        let params = MapleParams::default();
        let weights = vec![0.35, 0.25, 0.2, 0.15, 0.05];
        let answered = vec![false, false, true, false, false];
        let gamma = 0.3;
        let state = MapleState::restore(
            identity_ranking(5),
            weights.clone(),
            gamma,
            answered.clone(),
            params.clone(),
        )
        .unwrap();
        let mut counts = [0usize; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0xACC402);
        for _ in 0..draws {
            let (_, position) = state.next_question(&mut rng).unwrap();
            counts[position] += 1;
        }
        let reps = 1_000_000usize;
        let mut oracle = [0.0f64; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0xACC403);
        for _ in 0..reps {
            let mut pi = [0.0f64; 5];
            for (slot, &wj) in pi.iter_mut().zip(&weights) {
                let eps: f64 = rng.gen_range(-1.0..1.0);
                *slot = (wj * (1.0 - gamma) + eps * gamma).max(params.pi_floor);
            }
            for (slot, &done) in pi.iter_mut().zip(&answered) {
                if done {
                    *slot = 0.0;
                }
            }
            let total: f64 = pi.iter().sum();
            for (slot, p) in oracle.iter_mut().zip(&pi) {
                *slot += p / total;
            }
        }
        for slot in &mut oracle {
            *slot /= reps as f64;
        }
        for (position, &expected) in oracle.iter().enumerate() {
            let freq = counts[position] as f64 / draws as f64;
            assert!(
                (freq - expected).abs() <= 0.01,
                "position {position}: frequency {freq:.4} vs oracle {expected:.4}"
            );
        }
    });
}

#[test]
fn accept_05_ascending_schedule_goldens() {
    criterion(5, "ascending level schedule matches the golden table", || {
        // Counts follow from ceiling boundaries at 1/3/6/9 tenths of the
        // session; level 5 gets nothing at length 5 because ceil(4.5) = 5.
        let golden: [(usize, [usize; 5]); 4] = [
            (5, [1, 1, 1, 2, 0]),
            (10, [1, 2, 3, 3, 1]),
            (100, [10, 20, 30, 30, 10]),
            (200, [20, 40, 60, 60, 20]),
        ];
        for (length, expected) in golden {
            let mut counts = [0usize; 5];
            for step in 0..length {
                counts[(scheduled_level(step, length) - 1) as usize] += 1;
            }
            assert_eq!(counts, expected, "session length {length}");
        }
    });
}

/// Tau-b for a strict produced order against tied true difficulties:
/// concordant minus discordant over sqrt(n0 (n0 - ties)), with n0 all pairs.
fn kendall_tau_b(order: &[QuestionId], ql: &BTreeMap<QuestionId, f64>) -> f64 {
    let n = order.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let earlier = ql[&order[i]];
            let later = ql[&order[j]];
            if earlier < later {
                concordant += 1;
            } else if earlier > later {
                discordant += 1;
            } else {
                ties += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    (concordant - discordant) as f64 / (n0 * (n0 - ties as f64)).sqrt()
}

#[test]
fn accept_06_ranking_tracks_true_difficulty() {
    criterion(6, "peer rankings track true difficulty on a desk cohort", || {
        let config = ExperimentConfig::desk(ExperimentConfig::DEFAULT_SEED);
        let (students, questions, history) = replication_world(&config, 0).unwrap();
        let set: Vec<QuestionId> = questions.iter().map(|q| q.id()).collect();
        let ql: BTreeMap<QuestionId, f64> = questions.iter().map(|q| (q.id(), q.ql())).collect();
        let params = RankingParams::default();
        let mut total = 0.0;
        for student in &students {
            let ranking = rank_questions(&history, student.id, &set, &params).unwrap();
            total += kendall_tau_b(ranking.as_slice(), &ql);
        }
        let mean = total / students.len() as f64;
        assert!(mean > 0.3, "mean rank correlation {mean:.4}");

        // Toy instance: two informative neighbors (similarities 1 and 1/3)
        // vote questions 0..=3 into Copeland scores (1, -1, -3, 3); 6 and 4
        // order by global difficulty (0.1 vs 0.7); 5 is never attempted.
        let mut h = InteractionHistory::new();
        for (student, question, grade) in [
            (0, 0, 0.9),
            (0, 1, 0.5),
            (0, 2, 0.2),
            (1, 0, 0.8),
            (1, 1, 0.6),
            (1, 2, 0.3),
            (1, 3, 1.0),
            (2, 0, 0.9),
            (2, 1, 0.3),
            (2, 2, 0.4),
            (2, 3, 0.0),
            (3, 0, 1.0),
            (3, 4, 0.3),
            (3, 6, 0.9),
        ] {
            h.record(
                StudentId::new(student),
                QuestionId::new(question),
                Grade::new(grade).unwrap(),
            );
        }
        let set: Vec<QuestionId> = (0..=6).map(QuestionId::new).collect();
        let scored =
            rank_questions_with_scores(&h, StudentId::new(0), &set, &RankingParams::default())
                .unwrap();
        let got: Vec<(u32, i64)> = scored.iter().map(|&(q, c)| (q.value(), c)).collect();
        let expected = [(3, 3), (0, 1), (1, -1), (2, -3), (6, 0), (4, 0), (5, 0)];
        assert_eq!(got, expected);
    });
}

static DESK: OnceLock<(ExperimentResult, Duration)> = OnceLock::new();

fn desk_run() -> &'static (ExperimentResult, Duration) {
    DESK.get_or_init(|| {
        let config = ExperimentConfig::desk(ExperimentConfig::DEFAULT_SEED);
        let start = Instant::now();
        let result = run_experiment(&config).expect("desk preset runs");
        (result, start.elapsed())
    })
}

#[test]
fn accept_07_final_skill_orderings() {
    criterion(7, "desk run: maple ends above ascending and naive in every replication", || {
        let (result, elapsed) = desk_run();
        assert!(
            *elapsed < Duration::from_secs(300),
            "desk run took {elapsed:?}"
        );
        let mean = |algorithm: Algorithm, replication: usize, segment: Segment| {
            result
                .final_segment_mean(algorithm, replication, segment)
                .unwrap_or_else(|| panic!("no {algorithm} {segment} rows in replication {replication}"))
        };
        let mut violations = Vec::new();
        for replication in 0..3 {
            for segment in [Segment::Strong, Segment::Average] {
                let ours = mean(Algorithm::Maple, replication, segment);
                for rival in [Algorithm::Ascending, Algorithm::NaiveMaple] {
                    let theirs = mean(rival, replication, segment);
                    if ours <= theirs {
                        violations.push(format!(
                            "replication {replication}, {segment}: maple {ours:.4} <= {rival} {theirs:.4}"
                        ));
                    }
                }
            }
            let ours = mean(Algorithm::Maple, replication, Segment::Weak);
            let theirs = mean(Algorithm::Ascending, replication, Segment::Weak);
            if theirs >= ours {
                violations.push(format!(
                    "replication {replication}, weak: ascending {theirs:.4} >= maple {ours:.4}"
                ));
            }
        }
        assert!(
            violations.is_empty(),
            "final-skill orderings violated:\n{}",
            violations.join("\n")
        );
    });
}

#[test]
fn accept_08_easy_first_progression() {
    criterion(8, "maple shifts from easy questions early to harder ones late", || {
        let (result, _) = desk_run();
        let session = 100usize;
        let tenth = session / 10;
        for replication in 0..3 {
            let early = result.level_fraction(Algorithm::Maple, replication, 1..=tenth, 1..=2);
            let late = result.level_fraction(
                Algorithm::Maple,
                replication,
                session - tenth + 1..=session,
                1..=2,
            );
            assert!(
                early > late,
                "replication {replication}: easy share {early:.3} early vs {late:.3} late"
            );
        }
    });
}

#[test]
fn accept_09_byte_identical_runs() {
    criterion(9, "repeated run invocations write byte-identical files", || {
        let dir = tempdir().unwrap();
        let config = dir.path().join("config.json");
        fs::write(
            &config,
            r#"{
                "n_students": 12,
                "n_questions": 10,
                "n_skills": 2,
                "session_length": 10,
                "history_attempts": 8,
                "replications": 2
            }"#,
        )
        .unwrap();
        let mut runs = Vec::new();
        for sub in ["first", "second"] {
            let out = dir.path().join(sub);
            let output = Command::new(env!("CARGO_BIN_EXE_maple"))
                .args([
                    "run",
                    "--config",
                    config.to_str().unwrap(),
                    "--seed",
                    "7",
                    "--out-dir",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap();
            assert!(
                output.status.success(),
                "{}",
                String::from_utf8_lossy(&output.stderr)
            );
            let files: Vec<Vec<u8>> = ["skill_progression.csv", "difficulty_mix.csv", "summary.json"]
                .iter()
                .map(|name| fs::read(out.join(name)).unwrap())
                .collect();
            runs.push(files);
        }
        assert_eq!(runs[0], runs[1], "result files differ between identical runs");
    });
}

#[test]
fn accept_10_property_sweep() {
    criterion(10, "skill range, weight-ratio direction, and repeat-free permutations", || {
        // Skill updates stay inside [0, 1] and move toward the branch's
        // direction, over 1e5 random triples.
        let params = SimParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xA101);
        for _ in 0..100_000 {
            let sl: f64 = rng.gen();
            let ql: f64 = rng.gen();
            let grade = Grade::new(rng.gen()).unwrap();
            let next = update_skill(sl, ql, grade, &params);
            assert!(
                (0.0..=1.0).contains(&next),
                "({sl}, {ql}, {}) left the unit interval: {next}",
                grade.value()
            );
            if grade.value() > params.eta {
                assert!(next >= sl);
            } else {
                assert!(next <= sl);
            }
        }

        // A success never shifts weight toward easier positions relative to
        // harder ones, and a failure never shifts it away; 1e4 random
        // updates, compared by cross-multiplication.
        let mut rng = ChaCha8Rng::seed_from_u64(0xA102);
        for trial in 0..10_000 {
            let n = rng.gen_range(2..=20usize);
            let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            let before = weights.clone();
            let mut state = MapleState::restore(
                identity_ranking(n as u32),
                weights,
                rng.gen_range(0.01..0.5),
                vec![false; n],
                MapleParams::default(),
            )
            .unwrap();
            let position = rng.gen_range(0..n);
            let success = trial % 2 == 0;
            let grade = if success {
                rng.gen_range(0.71..1.0)
            } else {
                rng.gen_range(0.0..=0.7)
            };
            state.update(position, Grade::new(grade).unwrap()).unwrap();
            let after = state.weights();
            for i in 0..=position {
                for j in position + 1..n {
                    let moved = after[j] * before[i];
                    let stayed = before[j] * after[i];
                    if success {
                        assert!(
                            moved >= stayed - 1e-12,
                            "success lowered w[{j}]/w[{i}] (position {position})"
                        );
                    } else {
                        assert!(
                            moved <= stayed + 1e-12,
                            "failure raised w[{j}]/w[{i}] (position {position})"
                        );
                    }
                }
            }
        }

        // Repeat-free sessions serve each question exactly once.
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(0xA103 + seed);
            let n = 30u32;
            let mut ids: Vec<QuestionId> = (0..n).map(QuestionId::new).collect();
            ids.shuffle(&mut rng);
            let order = DifficultyRanking::new(StudentId::new(0), ids).unwrap();
            let mut state = MapleState::initialize(order, MapleParams::default()).unwrap();
            let mut served = Vec::new();
            for _ in 0..n {
                let (question, position) = state.next_question(&mut rng).unwrap();
                state
                    .update(position, Grade::new(rng.gen()).unwrap())
                    .unwrap();
                served.push(question.value());
            }
            assert!(state.is_exhausted());
            served.sort_unstable();
            let expected: Vec<u32> = (0..n).collect();
            assert_eq!(served, expected, "seed {seed}");
        }
    });
}
