//! Filtered entity ranking: for each test triple both `k(?, e)` and `k(e, ?)`
//! are answered by scoring every entity; known true answers other than the
//! gold one are removed before the gold entity's rank is taken.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kgdata::{FilterIndex, Slot, Triple};
use crate::rtucker::RtModel;

/// How the gold entity is placed among candidates with an equal score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Mean position within the tie group.
    #[default]
    Mean,
    /// Gold ranked first among ties.
    Optimistic,
    /// Gold ranked last among ties.
    Pessimistic,
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(TiePolicy::Mean),
            "optimistic" => Ok(TiePolicy::Optimistic),
            "pessimistic" => Ok(TiePolicy::Pessimistic),
            other => Err(Error::InvalidArgument(format!("unknown tie policy `{other}`"))),
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Mean => "mean",
            TiePolicy::Optimistic => "optimistic",
            TiePolicy::Pessimistic => "pessimistic",
        })
    }
}

/// Rank of `gold` among all candidates outside `filter` (1 = best).
///
/// `filter` must not contain `gold`; duplicates in it are ignored.
pub fn filtered_rank(scores: &[f64], gold: usize, filter: &[usize], tie: TiePolicy) -> Result<f64> {
    if filter.contains(&gold) {
        return Err(Error::InvalidArgument(format!(
            "gold entity {gold} is in the filter set"
        )));
    }
    rank_skipping(scores, gold, filter, tie)
}

/// Like [`filtered_rank`] but silently keeps `gold` if it shows up in `answers`.
fn rank_skipping(scores: &[f64], gold: usize, answers: &[usize], tie: TiePolicy) -> Result<f64> {
    let target = *scores
        .get(gold)
        .ok_or_else(|| Error::OutOfRange(format!("gold {gold} with {} scores", scores.len())))?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("candidate scores".into()));
    }
    let mut greater = 0usize;
    let mut ties = 0usize;
    for &s in scores {
        if s > target {
            greater += 1;
        } else if s == target {
            ties += 1;
        }
    }
    let mut seen: Vec<usize> = answers.iter().copied().filter(|&a| a != gold).collect();
    seen.sort_unstable();
    seen.dedup();
    for a in seen {
        let s = *scores
            .get(a)
            .ok_or_else(|| Error::OutOfRange(format!("filtered entity {a} with {} scores", scores.len())))?;
        if s > target {
            greater -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    let base = 1.0 + greater as f64;
    Ok(match tie {
        TiePolicy::Optimistic => base,
        TiePolicy::Pessimistic => base + (ties - 1) as f64,
        TiePolicy::Mean => base + (ties - 1) as f64 / 2.0,
    })
}

/// Rank of the gold answer of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankResult {
    pub triple: Triple,
    /// The slot that was hidden and ranked.
    pub slot: Slot,
    pub rank: f64,
}

impl RankResult {
    pub fn reciprocal_rank(&self) -> f64 {
        1.0 / self.rank
    }
}

/// Mean reciprocal rank and HITS@{1,3,10}, all as fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
}

impl MetricsReport {
    pub fn from_ranks(ranks: &[RankResult]) -> Self {
        if ranks.is_empty() {
            return MetricsReport::default();
        }
        let n = ranks.len() as f64;
        let mut mrr = 0.0;
        let mut hits = [0usize; 3];
        for r in ranks {
            mrr += r.reciprocal_rank();
            for (h, k) in hits.iter_mut().zip([1.0, 3.0, 10.0]) {
                if r.rank <= k {
                    *h += 1;
                }
            }
        }
        MetricsReport {
            mrr: mrr / n,
            hits1: hits[0] as f64 / n,
            hits3: hits[1] as f64 / n,
            hits10: hits[2] as f64 / n,
            num_queries: ranks.len(),
        }
    }

    /// `MRR<TAB>H1<TAB>H3<TAB>H10<TAB>num_queries`, full precision fractions.
    pub fn machine_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.mrr, self.hits1, self.hits3, self.hits10, self.num_queries
        )
    }

    /// Percentages to one decimal.
    pub fn human_line(&self) -> String {
        format!(
            "MRR {:.1}  HITS@1 {:.1}  HITS@3 {:.1}  HITS@10 {:.1}  ({} queries)",
            100.0 * self.mrr,
            100.0 * self.hits1,
            100.0 * self.hits3,
            100.0 * self.hits10,
            self.num_queries
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.human_line())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalConfig {
    pub tie: TiePolicy,
}

/// Filtered ranks of both queries of every triple, subject query first.
pub fn rank_queries(
    model: &RtModel,
    triples: &[Triple],
    filter: &FilterIndex,
    config: &EvalConfig,
) -> Result<Vec<RankResult>> {
    let mixing = model.mixing_matrices()?;
    for t in triples {
        if t.relation >= model.num_relations() {
            return Err(Error::OutOfRange(format!(
                "relation {} with K={}",
                t.relation,
                model.num_relations()
            )));
        }
    }
    let per_triple: Vec<Result<[RankResult; 2]>> = triples
        .par_iter()
        .map(|t| {
            let m = &mixing[t.relation];
            let mut out = [RankResult {
                triple: *t,
                slot: Slot::Subject,
                rank: 0.0,
            }; 2];
            for (slot_pos, slot) in [Slot::Subject, Slot::Object].into_iter().enumerate() {
                let scores = model.score_all_with(m, t.entity(slot.other()), slot)?;
                let scores = scores.as_slice().expect("contiguous scores");
                let gold = t.entity(slot);
                let rank = rank_skipping(scores, gold, filter.answers(t, slot), config.tie)?;
                out[slot_pos] = RankResult { triple: *t, slot, rank };
            }
            Ok(out)
        })
        .collect();
    let mut ranks = Vec::with_capacity(2 * triples.len());
    for r in per_triple {
        ranks.extend(r?);
    }
    Ok(ranks)
}

/// MRR and HITS@k over `2 · |triples|` filtered queries.
pub fn evaluate(
    model: &RtModel,
    triples: &[Triple],
    filter: &FilterIndex,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    Ok(MetricsReport::from_ranks(&rank_queries(
        model, triples, filter, config,
    )?))
}
