//! Translation experiments over a multi-label parallel corpus: iterative
//! stratification into folds, per-tag ROC AUC and macro averaging.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use log::{debug, warn};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genregraph::tag_node_id;
use crate::translate::TagScorer;

/// Default minimum number of occurrences for a tag to be kept.
pub const DEFAULT_MIN_TAG_COUNT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    /// Tag system name → tags.
    pub annotations: BTreeMap<String, Vec<String>>,
}

impl CorpusItem {
    fn systems_with_tags(&self) -> usize {
        self.annotations.values().filter(|t| !t.is_empty()).count()
    }

    pub fn tags(&self, system: &str) -> &[String] {
        self.annotations.get(system).map_or(&[], Vec::as_slice)
    }

    /// `(system, tag)` labels of the item.
    pub fn labels(&self) -> impl Iterator<Item = (&str, &str)> {
        self.annotations
            .iter()
            .flat_map(|(s, tags)| tags.iter().map(move |t| (s.as_str(), t.as_str())))
    }
}

/// Music items jointly annotated by several tag systems. Every item carries
/// tags from at least two systems; tag lists hold no duplicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelCorpus {
    items: Vec<CorpusItem>,
    systems: Vec<String>,
}

impl ParallelCorpus {
    /// Deduplicates tag lists, drops empty systems and keeps only items
    /// annotated by at least two systems. Returns the number of dropped
    /// items alongside the corpus.
    pub fn new(items: Vec<CorpusItem>) -> Result<(Self, usize)> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(items.len());
        let mut dropped = 0;
        for (i, mut item) in items.into_iter().enumerate() {
            if !seen.insert(item.id.clone()) {
                return Err(Error::Duplicate {
                    line: i + 1,
                    key: item.id,
                });
            }
            for tags in item.annotations.values_mut() {
                let mut unique = HashSet::new();
                tags.retain(|t| unique.insert(t.clone()));
            }
            item.annotations.retain(|_, tags| !tags.is_empty());
            if item.systems_with_tags() < 2 {
                dropped += 1;
                continue;
            }
            kept.push(item);
        }
        let systems: BTreeSet<String> = kept.iter().flat_map(|i| i.annotations.keys().cloned()).collect();
        Ok((
            ParallelCorpus {
                items: kept,
                systems: systems.into_iter().collect(),
            },
            dropped,
        ))
    }

    /// Reads `{"id": ..., "annotations": {"<system>": [...]}}` lines.
    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: CorpusItem =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            items.push(item);
        }
        let (corpus, dropped) = Self::new(items)?;
        if dropped > 0 {
            warn!("dropped {dropped} corpus items annotated by fewer than two tag systems");
        }
        Ok(corpus)
    }

    pub fn items(&self) -> &[CorpusItem] {
        &self.items
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorted distinct tags used by `system`.
    pub fn tags_of(&self, system: &str) -> Vec<String> {
        let tags: BTreeSet<&String> = self.items.iter().flat_map(|i| i.tags(system)).collect();
        tags.into_iter().cloned().collect()
    }

    /// Keeps the tags for which `keep(system, tag)` holds, then drops items
    /// left with fewer than two annotating systems.
    pub fn retain_tags(&self, mut keep: impl FnMut(&str, &str) -> bool) -> Self {
        let items = self
            .items
            .iter()
            .map(|item| {
                let mut item = item.clone();
                for (system, tags) in item.annotations.iter_mut() {
                    tags.retain(|t| keep(system, t));
                }
                item
            })
            .collect();
        let (corpus, dropped) = Self::new(items).expect("ids already unique");
        if dropped > 0 {
            debug!("tag filter dropped {dropped} items");
        }
        corpus
    }

    /// Removes tags seen fewer than `min_count` times within their system,
    /// then drops items left with fewer than two annotating systems.
    pub fn filter_min_count(&self, min_count: usize) -> Self {
        let mut counts: HashMap<(String, String), usize> = HashMap::new();
        for item in &self.items {
            for (s, t) in item.labels() {
                *counts.entry((s.to_owned(), t.to_owned())).or_insert(0) += 1;
            }
        }
        self.retain_tags(|s, t| counts[&(s.to_owned(), t.to_owned())] >= min_count)
    }
}

/// Fold index of every corpus item, aligned with [`ParallelCorpus::items`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    /// Indices of the items in `fold`.
    pub fn members(&self, fold: usize) -> impl Iterator<Item = usize> + '_ {
        self.folds
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f == fold)
            .map(|(i, _)| i)
    }
}

/// Iterative stratification over all `(system, tag)` labels.
///
/// The rarest label still carried by unassigned items is processed first.
/// Each of its items goes to the fold with the largest remaining demand for
/// that label, then the largest remaining capacity, then a seeded random
/// pick among the tied folds.
pub fn stratified_split(corpus: &ParallelCorpus, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let n = corpus.len();
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} items into {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut label_ids: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for item in corpus.items() {
        for label in item.labels() {
            let next = label_ids.len();
            label_ids.entry(label).or_insert(next);
        }
    }
    // Renumber in sorted label order so that ties on rarity are broken
    // deterministically by label.
    let order: HashMap<usize, usize> = label_ids
        .values()
        .enumerate()
        .map(|(rank, &id)| (id, rank))
        .collect();
    let item_labels: Vec<Vec<usize>> = corpus
        .items()
        .iter()
        .map(|item| item.labels().map(|l| order[&label_ids[&l]]).collect())
        .collect();
    let n_labels = label_ids.len();

    let mut label_items: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, labels) in item_labels.iter().enumerate() {
        for &l in labels {
            label_items[l].push(i);
        }
    }
    let share = 1.0 / k as f64;
    let mut capacity = vec![n as f64 * share; k];
    let mut demand: Vec<Vec<f64>> = label_items
        .iter()
        .map(|items| vec![items.len() as f64 * share; k])
        .collect();
    let mut remaining: Vec<usize> = label_items.iter().map(Vec::len).collect();
    let mut folds = vec![usize::MAX; n];

    let pick = |candidates: &[usize], rng: &mut ChaCha8Rng| -> usize {
        *candidates.choose(rng).expect("at least one fold")
    };
    let argmax = |values: &dyn Fn(usize) -> f64, among: &[usize]| -> Vec<usize> {
        let best = among.iter().map(|&j| values(j)).fold(f64::NEG_INFINITY, f64::max);
        among.iter().copied().filter(|&j| values(j) == best).collect()
    };

    while let Some(label) = (0..n_labels)
        .filter(|&l| remaining[l] > 0)
        .min_by_key(|&l| (remaining[l], l))
    {
        for &item in &label_items[label] {
            if folds[item] != usize::MAX {
                continue;
            }
            let all: Vec<usize> = (0..k).collect();
            let tied = argmax(&|j| demand[label][j], &all);
            let tied = if tied.len() > 1 {
                argmax(&|j| capacity[j], &tied)
            } else {
                tied
            };
            let fold = if tied.len() > 1 {
                pick(&tied, &mut rng)
            } else {
                tied[0]
            };
            folds[item] = fold;
            capacity[fold] -= 1.0;
            for &l in &item_labels[item] {
                demand[l][fold] -= 1.0;
                remaining[l] -= 1;
            }
        }
    }
    // Items without any label.
    for slot in folds.iter_mut().filter(|f| **f == usize::MAX) {
        let all: Vec<usize> = (0..k).collect();
        let tied = argmax(&|j| capacity[j], &all);
        let fold = pick(&tied, &mut rng);
        *slot = fold;
        capacity[fold] -= 1.0;
    }
    let mut item_labels = item_labels;
    item_labels.iter_mut().for_each(|l| l.sort_unstable());
    let repairs = rebalance(&item_labels, n_labels, k, &mut folds);
    if repairs > 0 {
        debug!("stratification repair applied {repairs} moves/swaps");
    }
    Ok(FoldAssignment { k, seed, folds })
}

/// Upper bound on candidate evaluations spent on one violation.
const REPAIR_BUDGET: usize = 200_000;

/// Greedy repair after the iterative pass. The greedy pass can leave a
/// frequent label (or the fold sizes) more than one away from its ideal
/// per-fold count, because most of its items were placed on behalf of rarer
/// labels. Items are moved or swapped between folds only when this strictly
/// lowers the total excess: `Σ max(0, |count − ideal| − 1)` over all
/// `(label, fold)` cells plus the distance of each fold size from
/// `[⌊n/k⌋, ⌈n/k⌉]`. Returns the number of changes.
fn rebalance(item_labels: &[Vec<usize>], n_labels: usize, k: usize, folds: &mut [usize]) -> usize {
    let n = folds.len();
    let mut counts = vec![vec![0i64; k]; n_labels];
    let mut sizes = vec![0i64; k];
    for (item, labels) in item_labels.iter().enumerate() {
        sizes[folds[item]] += 1;
        for &l in labels {
            counts[l][folds[item]] += 1;
        }
    }
    let ideal: Vec<f64> = counts
        .iter()
        .map(|c| c.iter().sum::<i64>() as f64 / k as f64)
        .collect();
    let size_ideal = n as f64 / k as f64;
    let excess = |c: i64, ideal: f64| ((c as f64 - ideal).abs() - 1.0).max(0.0);
    // Fold sizes must stay within floor/ceil of n/k, i.e. differ by ≤ 1.
    let (size_lo, size_hi) = ((n / k) as i64, n.div_ceil(k) as i64);
    let size_excess = |s: i64| ((size_lo - s).max(0) + (s - size_hi).max(0)) as f64;

    // Change in total excess when `labels` leave fold `a` for fold `b`.
    let shift = |counts: &[Vec<i64>], labels: &[usize], skip: &[usize], a: usize, b: usize| -> f64 {
        labels
            .iter()
            .filter(|l| skip.binary_search(l).is_err())
            .map(|&l| {
                let (ca, cb) = (counts[l][a], counts[l][b]);
                excess(ca - 1, ideal[l]) + excess(cb + 1, ideal[l])
                    - excess(ca, ideal[l])
                    - excess(cb, ideal[l])
            })
            .sum()
    };

    let mut changes = 0;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (item, &f) in folds.iter().enumerate() {
        members[f].push(item);
    }
    for _round in 0..n.max(16) {
        // Violations, worst first: label cells, then fold sizes (`None`).
        let mut violations: Vec<(f64, Option<usize>, usize)> = Vec::new();
        for (l, row) in counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let e = excess(c, ideal[l]);
                if e > 0.0 {
                    violations.push((e, Some(l), j));
                }
            }
        }
        for (j, &s) in sizes.iter().enumerate() {
            let e = size_excess(s);
            if e > 0.0 {
                violations.push((e, None, j));
            }
        }
        if violations.is_empty() {
            break;
        }
        violations.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

        let mut best: Option<(usize, Option<usize>, usize, usize)> = None;
        'violations: for &(_, label, fold) in &violations {
            let (row, target) = match label {
                Some(l) => (&counts[l], ideal[l]),
                None => (&sizes, size_ideal),
            };
            // An overfull cell gives an item away, emptiest partner first;
            // an underfull one takes an item, fullest partner first.
            let over = (row[fold] as f64) > target;
            let mut partners: Vec<usize> = (0..k).filter(|&j| j != fold).collect();
            partners.sort_by_key(|&j| if over { (row[j], j) } else { (-row[j], j) });
            let carries = |item: usize| label.is_none_or(|l| item_labels[item].binary_search(&l).is_ok());
            for partner in partners {
                let (src, dst) = if over { (fold, partner) } else { (partner, fold) };
                let mut budget = REPAIR_BUDGET;
                for &x in members[src].iter().filter(|&&x| carries(x)) {
                    let moved = shift(&counts, &item_labels[x], &[], src, dst)
                        + size_excess(sizes[src] - 1)
                        + size_excess(sizes[dst] + 1)
                        - size_excess(sizes[src])
                        - size_excess(sizes[dst]);
                    if moved < -1e-9 {
                        best = Some((x, None, src, dst));
                        break 'violations;
                    }
                    if label.is_none() {
                        continue;
                    }
                    for &y in members[dst].iter().filter(|&&y| !carries(y)) {
                        if budget == 0 {
                            break;
                        }
                        budget -= 1;
                        let (lx, ly) = (&item_labels[x], &item_labels[y]);
                        let delta = shift(&counts, lx, ly, src, dst) + shift(&counts, ly, lx, dst, src);
                        if delta < -1e-9 {
                            best = Some((x, Some(y), src, dst));
                            break 'violations;
                        }
                    }
                }
            }
        }
        let Some((x, y, src, dst)) = best else { break };

        let mut relocate = |item: usize, from: usize, to: usize| {
            folds[item] = to;
            sizes[from] -= 1;
            sizes[to] += 1;
            for &l in &item_labels[item] {
                counts[l][from] -= 1;
                counts[l][to] += 1;
            }
            members[from].retain(|&i| i != item);
            members[to].push(item);
        };
        relocate(x, src, dst);
        if let Some(y) = y {
            relocate(y, dst, src);
        }
        changes += 1;
    }
    changes
}

/// ROC AUC via the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, tied pairs counting half.
pub fn auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1; midrank*2 = start + end + 2
        let twice_mid = (start + end + 2) as u64;
        let pos_in_group = order[start..=end].iter().filter(|&&i| labels[i]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end + 1;
    }
    let p = positives as u64;
    // 2U = 2R − P(P+1)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Items scored in this fold.
    pub items: usize,
    pub macro_auc: f64,
    /// AUC of every target tag with both classes present.
    pub per_tag: BTreeMap<String, f64>,
    /// Target tags without a positive or without a negative item.
    pub excluded_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub target_system: String,
    pub source_systems: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl EvalReport {
    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} -> {}",
            self.source_systems.join(" + "),
            self.target_system
        );
        let _ = writeln!(
            out,
            "{:>5} {:>7} {:>6} {:>9}",
            "fold", "items", "tags", "macroAUC"
        );
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:>5} {:>7} {:>6} {:>9.4}",
                f.fold,
                f.items,
                f.per_tag.len(),
                f.macro_auc
            );
        }
        let _ = writeln!(
            out,
            "macro-AUC {:.1} ± {:.1} (%)",
            100.0 * self.mean,
            100.0 * self.std
        );
        out
    }
}

/// Translates each test item's source tags into the target tag system and
/// scores the ranking of every target tag with macro-AUC, fold by fold.
///
/// Tag `t` of system `s` is looked up as the concept `"s:t"`. Items without
/// a source tag or without a target tag are skipped.
pub fn evaluate<S: TagScorer + ?Sized>(
    corpus: &ParallelCorpus,
    folds: &FoldAssignment,
    target_system: &str,
    source_systems: &[String],
    scorer: &S,
) -> Result<EvalReport> {
    if source_systems.iter().any(|s| s == target_system) {
        return Err(Error::InvalidArgument(format!(
            "target system `{target_system}` is also a source"
        )));
    }
    if source_systems.is_empty() {
        return Err(Error::InvalidArgument("no source systems".into()));
    }
    if folds.folds.len() != corpus.len() {
        return Err(Error::DimensionMismatch {
            expected: corpus.len(),
            actual: folds.folds.len(),
        });
    }
    let target_tags = corpus.tags_of(target_system);
    let target_ids: Vec<String> = target_tags
        .iter()
        .map(|t| tag_node_id(target_system, t))
        .collect();

    let mut reports = Vec::with_capacity(folds.k);
    for fold in 0..folds.k {
        let mut members: Vec<&CorpusItem> = folds.members(fold).map(|i| &corpus.items()[i]).collect();
        members.sort_by(|a, b| a.id.cmp(&b.id));

        let cases: Vec<(Vec<String>, HashSet<&str>)> = members
            .iter()
            .filter_map(|item| {
                let sources: Vec<String> = source_systems
                    .iter()
                    .flat_map(|s| item.tags(s).iter().map(move |t| tag_node_id(s, t)))
                    .collect();
                let truth: HashSet<&str> = item.tags(target_system).iter().map(String::as_str).collect();
                (!sources.is_empty() && !truth.is_empty()).then_some((sources, truth))
            })
            .collect();

        let scores: Vec<Vec<f64>> = cases
            .par_iter()
            .map(|(sources, _)| scorer.score(sources, &target_ids))
            .collect::<Result<_>>()?;

        let mut per_tag = BTreeMap::new();
        let mut excluded = Vec::new();
        for (t, tag) in target_tags.iter().enumerate() {
            let labels: Vec<bool> = cases
                .iter()
                .map(|(_, truth)| truth.contains(tag.as_str()))
                .collect();
            let column: Vec<f64> = scores.iter().map(|s| s[t]).collect();
            match auc_binary(&column, &labels) {
                Ok(auc) => {
                    per_tag.insert(tag.clone(), auc);
                }
                Err(Error::UndefinedAuc { .. }) => excluded.push(tag.clone()),
                Err(e) => return Err(e),
            }
        }
        if per_tag.is_empty() {
            return Err(Error::NoQualifyingTag(fold));
        }
        if !excluded.is_empty() {
            debug!(
                "fold {fold}: {} target tags excluded from the macro average",
                excluded.len()
            );
        }
        let macro_auc = per_tag.values().sum::<f64>() / per_tag.len() as f64;
        reports.push(FoldReport {
            fold,
            items: cases.len(),
            macro_auc,
            per_tag,
            excluded_tags: excluded,
        });
    }

    let k = reports.len() as f64;
    let mean = reports.iter().map(|r| r.macro_auc).sum::<f64>() / k;
    let var = reports.iter().map(|r| (r.macro_auc - mean).powi(2)).sum::<f64>() / k;
    Ok(EvalReport {
        target_system: target_system.to_owned(),
        source_systems: source_systems.to_vec(),
        folds: reports,
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, annotations: &[(&str, &[&str])]) -> CorpusItem {
        CorpusItem {
            id: id.into(),
            annotations: annotations
                .iter()
                .map(|(s, tags)| (s.to_string(), tags.iter().map(|t| t.to_string()).collect()))
                .collect(),
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_binary(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc_binary(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(
            auc_binary(&[0.4; 5], &[true, false, true, false, false]).unwrap(),
            0.5
        );
        assert_eq!(auc_binary(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(
            auc_binary(&[0.1, 0.9], &[true, true]),
            Err(Error::UndefinedAuc {
                positives: 2,
                negatives: 0
            })
        ));
        assert!(auc_binary(&[0.1], &[false]).is_err());
        assert!(auc_binary(&[f64::NAN, 0.1], &[true, false]).is_err());
        assert!(auc_binary(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn corpus_normalization() {
        let (c, dropped) = ParallelCorpus::new(vec![
            item("a", &[("en", &["rock", "rock"]), ("fr", &["rock"])]),
            item("b", &[("en", &["pop"]), ("fr", &[])]),
        ])
        .unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c.items()[0].tags("en"), &["rock".to_string()]);
        assert_eq!(c.systems(), &["en".to_string(), "fr".to_string()]);
        let dup = ParallelCorpus::new(vec![
            item("a", &[("en", &["x"]), ("fr", &["y"])]),
            item("a", &[("en", &["x"]), ("fr", &["y"])]),
        ]);
        assert!(matches!(dup, Err(Error::Duplicate { line: 2, .. })));
    }

    #[test]
    fn corpus_load_jsonl() {
        let data = r#"{"id":"1","annotations":{"en":["Rock"],"fr":["Rock_alternatif"]}}

{"id":"2","annotations":{"en":["Pop"]}}
"#;
        let c = ParallelCorpus::load(data.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(matches!(
            ParallelCorpus::load("{\"id\":1}\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn min_count_filter() {
        let mut items = Vec::new();
        for i in 0..3 {
            items.push(item(
                &i.to_string(),
                &[("en", &["rock", "rare"]), ("fr", &["rock"])],
            ));
        }
        items.push(item("x", &[("en", &["unique"]), ("fr", &["rock"])]));
        let (c, _) = ParallelCorpus::new(items).unwrap();
        let f = c.filter_min_count(2);
        assert_eq!(f.len(), 3);
        assert_eq!(f.tags_of("en"), vec!["rare", "rock"]);
        let f = c.filter_min_count(4);
        assert_eq!(f.len(), 0);
    }

    #[test]
    fn split_single_label_balance() {
        let items = (0..8)
            .map(|i| item(&format!("i{i}"), &[("en", &["rock"]), ("fr", &["rock"])]))
            .collect();
        let (c, _) = ParallelCorpus::new(items).unwrap();
        let a = stratified_split(&c, 4, 7).unwrap();
        assert_eq!(a.fold_sizes(), vec![2, 2, 2, 2]);
        assert_eq!(a, stratified_split(&c, 4, 7).unwrap());
    }

    #[test]
    fn split_four_occurrences_one_per_fold() {
        let mut items = Vec::new();
        for i in 0..12 {
            let en: &[&str] = if i % 3 == 0 { &["jazz", "rock"] } else { &["rock"] };
            items.push(item(&format!("i{i:02}"), &[("en", en), ("fr", &["rock"])]));
        }
        let (c, _) = ParallelCorpus::new(items).unwrap();
        for seed in 0..20 {
            let a = stratified_split(&c, 4, seed).unwrap();
            let mut per_fold = [0; 4];
            for (idx, it) in c.items().iter().enumerate() {
                if it.tags("en").iter().any(|t| t == "jazz") {
                    per_fold[a.folds[idx]] += 1;
                }
            }
            assert_eq!(per_fold, [1, 1, 1, 1], "seed {seed}");
            assert_eq!(a.fold_sizes(), vec![3, 3, 3, 3]);
        }
    }

    #[test]
    fn split_errors() {
        let (c, _) = ParallelCorpus::new(vec![item("a", &[("en", &["x"]), ("fr", &["y"])])]).unwrap();
        assert!(stratified_split(&c, 1, 0).is_err());
        assert!(stratified_split(&c, 2, 0).is_err());
    }

    struct Truth<'a>(&'a ParallelCorpus, &'a str);

    impl TagScorer for Truth<'_> {
        fn score(&self, sources: &[String], targets: &[String]) -> Result<Vec<f64>> {
            let item = self
                .0
                .items()
                .iter()
                .find(|i| {
                    i.labels()
                        .any(|(s, t)| sources.first() == Some(&tag_node_id(s, t)))
                })
                .unwrap();
            Ok(targets
                .iter()
                .map(|t| {
                    let hit = item.tags(self.1).iter().any(|x| &tag_node_id(self.1, x) == t);
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect())
        }
    }

    struct Constant;

    impl TagScorer for Constant {
        fn score(&self, _: &[String], targets: &[String]) -> Result<Vec<f64>> {
            Ok(vec![0.3; targets.len()])
        }
    }

    fn toy_corpus() -> ParallelCorpus {
        let genres = ["rock", "pop", "jazz"];
        let items = (0..16)
            .map(|i| {
                let g = genres[i % 3];
                let g2 = genres[(i / 3) % 3];
                CorpusItem {
                    id: format!("item{i:02}"),
                    annotations: BTreeMap::from([
                        ("src".to_string(), vec![format!("s{i}")]),
                        ("tgt".to_string(), vec![g.to_string(), g2.to_string()]),
                    ]),
                }
            })
            .collect();
        ParallelCorpus::new(items).unwrap().0
    }

    #[test]
    fn oracle_and_constant_scorers() {
        let c = toy_corpus();
        let folds = stratified_split(&c, 4, 1).unwrap();
        let sources = vec!["src".to_string()];
        let r = evaluate(&c, &folds, "tgt", &sources, &Truth(&c, "tgt")).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.std, 0.0);
        let r = evaluate(&c, &folds, "tgt", &sources, &Constant).unwrap();
        assert_eq!(r.mean, 0.5);
        for f in &r.folds {
            assert!(f.per_tag.values().all(|&a| a == 0.5));
        }
        assert!(r.table().contains("macro-AUC 50.0"));
    }

    #[test]
    fn evaluate_rejects_bad_setup() {
        let c = toy_corpus();
        let folds = stratified_split(&c, 4, 1).unwrap();
        let err = evaluate(&c, &folds, "tgt", &["tgt".to_string()], &Constant);
        assert!(err.is_err());
        assert!(evaluate(&c, &folds, "tgt", &[], &Constant).is_err());
        // a target system nobody uses leaves no qualifying tag
        let err = evaluate(&c, &folds, "nope", &["src".to_string()], &Constant).unwrap_err();
        assert!(matches!(err, Error::NoQualifyingTag(0)));
    }
}
