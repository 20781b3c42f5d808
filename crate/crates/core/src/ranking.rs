//! Personalized difficulty rankings from historical interaction data.
//! Pipeline: per-student difficulty scores, rank-correlation similarity
//! between students, then a neighbor vote aggregated into a total order
//! over a target question set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DifficultyRanking, InteractionHistory, QuestionId, StudentId};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RankingError {
    #[error("student {0} has no recorded attempts")]
    UnknownStudent(StudentId),
    #[error("question set is empty")]
    EmptyQuestionSet,
    #[error("interaction history is empty")]
    EmptyHistory,
    #[error("invalid ranking parameter: {0}")]
    InvalidParams(String),
}

/// Deterministic rule for ordering questions no other criterion separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    AscendingId,
    DescendingId,
}

impl TieBreak {
    fn compare(self, a: QuestionId, b: QuestionId) -> Ordering {
        match self {
            TieBreak::AscendingId => a.cmp(&b),
            TieBreak::DescendingId => b.cmp(&a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingParams {
    /// How many most-similar students vote.
    pub k_neighbors: usize,
    /// Similarity is forced to 0 below this many commonly attempted questions.
    pub min_common_questions: usize,
    pub tie_break: TieBreak,
}

impl Default for RankingParams {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            min_common_questions: 3,
            tie_break: TieBreak::AscendingId,
        }
    }
}

impl RankingParams {
    pub fn validate(&self) -> Result<(), RankingError> {
        if self.k_neighbors == 0 {
            return Err(RankingError::InvalidParams(
                "k_neighbors must be at least 1".into(),
            ));
        }
        if self.min_common_questions == 0 {
            return Err(RankingError::InvalidParams(
                "min_common_questions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Difficulty scores of one student: per attempted question,
/// `1 - mean grade` (higher = harder). Unattempted questions are absent.
pub fn per_student_difficulty(
    history: &InteractionHistory,
    student: StudentId,
) -> Result<BTreeMap<QuestionId, f64>, RankingError> {
    if !history.contains_student(student) {
        return Err(RankingError::UnknownStudent(student));
    }
    let mut sums: BTreeMap<QuestionId, (f64, usize)> = BTreeMap::new();
    for r in history.student_records(student) {
        let entry = sums.entry(r.question).or_insert((0.0, 0));
        entry.0 += r.grade.value();
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(q, (sum, n))| (q, 1.0 - sum / n as f64))
        .collect())
}

/// Kendall tau-b over paired scores: `(C - D) / sqrt((C+D+Ty)(C+D+Tx))`
/// with C/D the concordant/discordant pair counts and Tx/Ty the pairs tied
/// only in the first/second coordinate. 0 when the denominator vanishes.
fn kendall_tau_b(pairs: &[(f64, f64)]) -> f64 {
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut tied_x = 0u64;
    let mut tied_y = 0u64;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let dx = pairs[i].0.partial_cmp(&pairs[j].0).expect("finite scores");
            let dy = pairs[i].1.partial_cmp(&pairs[j].1).expect("finite scores");
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tied_x += 1,
                (_, Ordering::Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom =
        (((concordant + discordant + tied_y) as f64) * ((concordant + discordant + tied_x) as f64))
            .sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant as f64 - discordant as f64) / denom
    }
}

/// Similarity of two students in [-1, 1]: rank correlation of their
/// difficulty scores over commonly attempted questions, 0 when they share
/// fewer than `min_common_questions`.
pub fn student_similarity(
    history: &InteractionHistory,
    a: StudentId,
    b: StudentId,
    params: &RankingParams,
) -> Result<f64, RankingError> {
    let scores_a = per_student_difficulty(history, a)?;
    let scores_b = per_student_difficulty(history, b)?;
    let pairs: Vec<(f64, f64)> = scores_a
        .iter()
        .filter_map(|(q, &sa)| scores_b.get(q).map(|&sb| (sa, sb)))
        .collect();
    if pairs.len() < params.min_common_questions {
        return Ok(0.0);
    }
    Ok(kendall_tau_b(&pairs))
}

/// `1 - mean grade` per question over every student's attempts.
fn global_difficulty(history: &InteractionHistory) -> BTreeMap<QuestionId, f64> {
    let mut sums: BTreeMap<QuestionId, (f64, usize)> = BTreeMap::new();
    for r in history.records() {
        let entry = sums.entry(r.question).or_insert((0.0, 0));
        entry.0 += r.grade.value();
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(q, (sum, n))| (q, 1.0 - sum / n as f64))
        .collect()
}

/// Total difficulty order over `question_set` for `target`, easiest first.
///
/// The `k_neighbors` most similar students with strictly positive similarity
/// vote on every question pair; a question beats another when the
/// similarity-weighted majority of neighbors who attempted both scores it
/// strictly easier. Questions some neighbor attempted are ordered by
/// Copeland score (wins minus losses, descending). Questions without
/// neighbor evidence follow, ordered by ascending global mean difficulty;
/// questions nobody ever attempted come last, by ascending id.
pub fn rank_questions(
    history: &InteractionHistory,
    target: StudentId,
    question_set: &[QuestionId],
    params: &RankingParams,
) -> Result<DifficultyRanking, RankingError> {
    let scored = rank_questions_with_scores(history, target, question_set, params)?;
    let order: Vec<QuestionId> = scored.into_iter().map(|(q, _)| q).collect();
    Ok(DifficultyRanking::new(target, order).expect("tiers partition the deduplicated set"))
}

/// Like [`rank_questions`], but pairing each question with its Copeland
/// score. Questions ranked by the fallback tiers carry a score of 0: no
/// neighbor gave them a pairwise win or loss.
pub fn rank_questions_with_scores(
    history: &InteractionHistory,
    target: StudentId,
    question_set: &[QuestionId],
    params: &RankingParams,
) -> Result<Vec<(QuestionId, i64)>, RankingError> {
    params.validate()?;
    if question_set.is_empty() {
        return Err(RankingError::EmptyQuestionSet);
    }
    if history.is_empty() {
        return Err(RankingError::EmptyHistory);
    }
    let questions: BTreeSet<QuestionId> = question_set.iter().copied().collect();

    // (similarity, difficulty scores) of each selected neighbor.
    let neighbors: Vec<(f64, BTreeMap<QuestionId, f64>)> = if history.contains_student(target) {
        let mut sims: Vec<(StudentId, f64)> = history
            .students()
            .filter(|&s| s != target)
            .map(|s| Ok((s, student_similarity(history, target, s, params)?)))
            .collect::<Result<Vec<_>, RankingError>>()?
            .into_iter()
            .filter(|&(_, sim)| sim > 0.0)
            .collect();
        sims.sort_by(|x, y| {
            y.1.partial_cmp(&x.1)
                .expect("finite similarity")
                .then(x.0.cmp(&y.0))
        });
        sims.truncate(params.k_neighbors);
        sims.into_iter()
            .map(|(s, sim)| Ok((sim, per_student_difficulty(history, s)?)))
            .collect::<Result<_, RankingError>>()?
    } else {
        Vec::new()
    };

    let ordered: Vec<QuestionId> = questions.iter().copied().collect();
    let mut copeland: BTreeMap<QuestionId, i64> = ordered.iter().map(|&q| (q, 0)).collect();
    for i in 0..ordered.len() {
        for j in i + 1..ordered.len() {
            let (qi, qj) = (ordered[i], ordered[j]);
            let mut weight_easier = 0.0;
            let mut weight_harder = 0.0;
            for (sim, scores) in &neighbors {
                match (scores.get(&qi), scores.get(&qj)) {
                    (Some(a), Some(b)) if a < b => weight_easier += sim,
                    (Some(a), Some(b)) if a > b => weight_harder += sim,
                    _ => {}
                }
            }
            let (winner, loser) = match weight_easier
                .partial_cmp(&weight_harder)
                .expect("finite weights")
            {
                Ordering::Greater => (qi, qj),
                Ordering::Less => (qj, qi),
                Ordering::Equal => continue,
            };
            *copeland.get_mut(&winner).unwrap() += 1;
            *copeland.get_mut(&loser).unwrap() -= 1;
        }
    }

    let evidenced: BTreeSet<QuestionId> = questions
        .iter()
        .copied()
        .filter(|q| neighbors.iter().any(|(_, scores)| scores.contains_key(q)))
        .collect();
    let global = global_difficulty(history);

    let mut voted: Vec<QuestionId> = evidenced.iter().copied().collect();
    voted.sort_by(|&a, &b| {
        copeland[&b]
            .cmp(&copeland[&a])
            .then(params.tie_break.compare(a, b))
    });

    let mut observed: Vec<QuestionId> = questions
        .iter()
        .copied()
        .filter(|q| !evidenced.contains(q) && global.contains_key(q))
        .collect();
    observed.sort_by(|&a, &b| {
        global[&a]
            .partial_cmp(&global[&b])
            .expect("finite difficulty")
            .then(params.tie_break.compare(a, b))
    });

    let unobserved: Vec<QuestionId> = questions
        .iter()
        .copied()
        .filter(|q| !evidenced.contains(q) && !global.contains_key(q))
        .collect();

    Ok(voted
        .into_iter()
        .chain(observed)
        .chain(unobserved)
        .map(|q| (q, copeland[&q]))
        .collect())
}
