//! Tag translation: score every tag of a target tag system against a set of
//! source tags.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compose::ConceptEmbeddingMatrix;
use crate::error::{Error, Result};
use crate::genregraph::{path_similarity, GenreGraph};

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Sum of the cosines between each source and the target.
pub fn score_sum(sources: &[&[f64]], target: &[f64]) -> Result<f64> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("empty source set".into()));
    }
    sources.iter().map(|s| cosine(s, target)).sum()
}

/// Mean of the cosines between each source and the target.
pub fn score_avg(sources: &[&[f64]], target: &[f64]) -> Result<f64> {
    Ok(score_sum(sources, target)? / sources.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Sum,
    #[default]
    Avg,
    /// Mean shortest-path similarity in the genre graph.
    Baseline,
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scorer::Sum => "sum",
            Scorer::Avg => "avg",
            Scorer::Baseline => "baseline",
        })
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Scorer::Sum),
            "avg" => Ok(Scorer::Avg),
            "baseline" => Ok(Scorer::Baseline),
            _ => Err(Error::InvalidArgument(format!("unknown scorer `{s}`"))),
        }
    }
}

/// Anything that scores a list of target tags from a set of source tags.
pub trait TagScorer: Sync {
    /// Scores aligned with `targets`.
    fn score(&self, sources: &[String], targets: &[String]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub enum TranslationModel<'a> {
    Embedding {
        embeddings: &'a ConceptEmbeddingMatrix,
        average: bool,
    },
    ShortestPath(&'a GenreGraph),
}

impl<'a> TranslationModel<'a> {
    /// Builds the model for `scorer`; embedding scorers need `embeddings`,
    /// the baseline needs `graph`.
    pub fn new(
        scorer: Scorer,
        embeddings: Option<&'a ConceptEmbeddingMatrix>,
        graph: Option<&'a GenreGraph>,
    ) -> Result<Self> {
        let need = |what: &str| Error::InvalidArgument(format!("scorer `{scorer}` needs {what}"));
        Ok(match scorer {
            Scorer::Sum | Scorer::Avg => TranslationModel::Embedding {
                embeddings: embeddings.ok_or_else(|| need("embeddings"))?,
                average: scorer == Scorer::Avg,
            },
            Scorer::Baseline => TranslationModel::ShortestPath(graph.ok_or_else(|| need("a graph"))?),
        })
    }

    /// Scores every target. Duplicate sources count once and are processed
    /// in id order, so the result does not depend on source order. Sources
    /// that cannot be resolved are dropped; if none is left every target
    /// scores 0. Unresolvable targets are an error.
    pub fn translate<S: AsRef<str>>(&self, sources: &[S], targets: &[S]) -> Result<TranslationResult> {
        let sources: BTreeSet<&str> = sources.iter().map(AsRef::as_ref).collect();
        if sources.is_empty() {
            return Err(Error::InvalidArgument("empty source set".into()));
        }
        let targets: Vec<&str> = targets.iter().map(AsRef::as_ref).collect();
        let (scores, dropped) = match *self {
            TranslationModel::Embedding { embeddings, average } => {
                embedding_scores(embeddings, &sources, &targets, average)?
            }
            TranslationModel::ShortestPath(graph) => path_scores(graph, &sources, &targets)?,
        };
        Ok(TranslationResult::new(
            targets.iter().map(|t| t.to_string()).zip(scores).collect(),
            dropped,
        ))
    }
}

impl TagScorer for TranslationModel<'_> {
    fn score(&self, sources: &[String], targets: &[String]) -> Result<Vec<f64>> {
        let result = self.translate(sources, targets)?;
        Ok(targets.iter().map(|t| result.target_scores[t]).collect())
    }
}

fn embedding_scores(
    embeddings: &ConceptEmbeddingMatrix,
    sources: &BTreeSet<&str>,
    targets: &[&str],
    average: bool,
) -> Result<(Vec<f64>, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &s in sources {
        match embeddings.index_of(s) {
            Some(i) if embeddings.known()[i] => kept.push(embeddings.row(i).to_vec()),
            _ => dropped.push(s.to_owned()),
        }
    }
    let kept: Vec<&[f64]> = kept.iter().map(Vec::as_slice).collect();
    let scores = targets
        .iter()
        .map(|&t| {
            let i = embeddings
                .index_of(t)
                .ok_or_else(|| Error::UnknownId(t.to_owned()))?;
            if kept.is_empty() {
                return Ok(0.0);
            }
            let target = embeddings.row(i);
            let target = target.as_slice().expect("standard layout");
            if average {
                score_avg(&kept, target)
            } else {
                score_sum(&kept, target)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scores, dropped))
}

fn path_scores(
    graph: &GenreGraph,
    sources: &BTreeSet<&str>,
    targets: &[&str],
) -> Result<(Vec<f64>, Vec<String>)> {
    if let Some(t) = targets.iter().find(|t| !graph.contains(t)) {
        return Err(Error::UnknownId(t.to_string()));
    }
    let (present, dropped): (Vec<&str>, Vec<&str>) = sources.iter().partition(|s| graph.contains(s));
    let dropped = dropped.into_iter().map(str::to_owned).collect();
    if present.is_empty() {
        return Ok((vec![0.0; targets.len()], dropped));
    }
    let mut totals = vec![0.0; targets.len()];
    for &s in &present {
        let dist = graph.hop_distances(s)?;
        for (total, t) in totals.iter_mut().zip(targets) {
            *total += dist.get(t).map_or(0.0, |&l| path_similarity(l));
        }
    }
    let k = present.len() as f64;
    Ok((totals.into_iter().map(|t| t / k).collect(), dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationResult {
    pub target_scores: BTreeMap<String, f64>,
    /// Targets by descending score, ties by ascending id.
    pub ranking: Vec<String>,
    /// Sources skipped because they have no (known) embedding, or for the
    /// baseline, no graph node.
    pub dropped_sources: Vec<String>,
}

impl TranslationResult {
    fn new(scores: Vec<(String, f64)>, dropped_sources: Vec<String>) -> Self {
        let mut ranked: Vec<&(String, f64)> = scores.iter().collect();
        ranked.sort_by(|a, b| compare_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
        let ranking = ranked.into_iter().map(|(t, _)| t.clone()).collect();
        TranslationResult {
            target_scores: scores.into_iter().collect(),
            ranking,
            dropped_sources,
        }
    }

    /// 1-based position of `target` in the ranking.
    pub fn rank_of(&self, target: &str) -> Option<usize> {
        self.ranking.iter().position(|t| t == target).map(|p| p + 1)
    }
}

fn compare_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn score_examples() {
        let t = [1.0, 0.0];
        let perp = [0.0, 1.0];
        assert_eq!(score_sum(&[&t], &t).unwrap(), 1.0);
        assert_eq!(score_sum(&[&t, &t, &t], &t).unwrap(), 3.0);
        assert_eq!(score_sum(&[&t, &perp], &t).unwrap(), 1.0);
        assert_eq!(score_avg(&[&t, &perp], &t).unwrap(), 0.5);
        assert_eq!(score_avg(&[&perp], &t).unwrap(), score_sum(&[&perp], &t).unwrap());
        let neg = [-1.0, 0.0];
        assert_eq!(score_avg(&[&t, &perp, &neg], &t).unwrap(), 0.0);
        assert!(score_sum(&[], &t).is_err());
        assert!(score_avg(&[], &t).is_err());
    }

    fn fixture() -> ConceptEmbeddingMatrix {
        ConceptEmbeddingMatrix::new(
            vec!["s".into(), "t1".into(), "t2".into(), "u".into()],
            array![[1.0, 0.0], [1.0, 0.0], [0.6, 0.8], [0.0, 0.0]],
            vec![true, true, true, false],
        )
        .unwrap()
    }

    #[test]
    fn translate_ranks_and_scores() {
        let m = fixture();
        let model = TranslationModel::new(Scorer::Avg, Some(&m), None).unwrap();
        let r = model.translate(&["s"], &["t2", "t1"]).unwrap();
        assert_eq!(r.ranking, vec!["t1", "t2"]);
        assert_eq!(r.target_scores["t1"], 1.0);
        assert!((r.target_scores["t2"] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_sources_are_dropped() {
        let m = fixture();
        let model = TranslationModel::new(Scorer::Avg, Some(&m), None).unwrap();
        let r = model.translate(&["s", "u"], &["t1"]).unwrap();
        assert_eq!(r.target_scores["t1"], 1.0);
        assert_eq!(r.dropped_sources, vec!["u"]);
        let r = model.translate(&["u"], &["t1", "t2"]).unwrap();
        assert!(r.target_scores.values().all(|&s| s == 0.0));
        // ties fall back to id order
        assert_eq!(r.ranking, vec!["t1", "t2"]);
    }

    #[test]
    fn unresolvable_ids_fail() {
        let m = fixture();
        let model = TranslationModel::new(Scorer::Sum, Some(&m), None).unwrap();
        let r = model.translate(&["nope", "s"], &["t1"]).unwrap();
        assert_eq!(r.dropped_sources, vec!["nope"]);
        assert_eq!(r.target_scores["t1"], 1.0);
        assert!(matches!(
            model.translate(&["s"], &["nope"]),
            Err(Error::UnknownId(_))
        ));
        let empty: [&str; 0] = [];
        assert!(model.translate(&empty, &["t1"]).is_err());
        assert!(TranslationModel::new(Scorer::Baseline, Some(&m), None).is_err());
        assert!(TranslationModel::new(Scorer::Avg, None, None).is_err());
    }

    #[test]
    fn duplicate_sources_count_once() {
        let m = fixture();
        let model = TranslationModel::new(Scorer::Sum, Some(&m), None).unwrap();
        let once = model.translate(&["s", "t2"], &["t1", "t2"]).unwrap();
        let twice = model.translate(&["t2", "s", "s"], &["t1", "t2"]).unwrap();
        assert_eq!(once.target_scores, twice.target_scores);
    }

    #[test]
    fn baseline_on_chain() {
        use crate::genregraph::{GenreNode, Relation};
        let mut g = GenreGraph::new();
        for id in ["a", "b", "c", "d"] {
            g.insert_node(GenreNode {
                id: id.into(),
                lang: "en".into(),
                label: id.into(),
                tokens: vec![id.into()],
                system: None,
            });
        }
        g.add_edge("a", "b", Relation::StylisticOrigin).unwrap();
        g.add_edge("c", "b", Relation::MusicSubgenre).unwrap();
        let model = TranslationModel::new(Scorer::Baseline, None, Some(&g)).unwrap();
        let r = model.translate(&["a"], &["c", "b", "d"]).unwrap();
        assert_eq!(r.target_scores["b"], 0.5);
        assert_eq!(r.target_scores["c"], 1.0 / 3.0);
        assert_eq!(r.target_scores["d"], 0.0);
        assert_eq!(r.ranking, vec!["b", "c", "d"]);

        let r = model.translate(&["a", "c"], &["b"]).unwrap();
        assert_eq!(r.target_scores["b"], 0.5);
        let r = model.translate(&["zz", "a"], &["a"]).unwrap();
        assert_eq!(r.target_scores["a"], 1.0);
        assert_eq!(r.dropped_sources, vec!["zz"]);
        assert!(model.translate(&["a"], &["zz"]).is_err());
    }

    #[test]
    fn scorer_names() {
        for s in [Scorer::Sum, Scorer::Avg, Scorer::Baseline] {
            assert_eq!(s.to_string().parse::<Scorer>().unwrap(), s);
        }
    }
}
