#![allow(dead_code)]

use genre_embed::compose::ConceptEmbeddingMatrix;
use genre_embed::genregraph::{GenreGraph, GenreNode, Relation};
use ndarray::Array2;
use rand::Rng;

pub fn node(id: &str, lang: &str) -> GenreNode {
    GenreNode {
        id: id.to_string(),
        lang: lang.to_string(),
        label: id.to_string(),
        tokens: vec![id.to_lowercase()],
        system: None,
    }
}

pub fn graph(nodes: &[(&str, &str)], edges: &[(&str, &str, Relation)]) -> GenreGraph {
    let mut g = GenreGraph::new();
    for (id, lang) in nodes {
        g.insert_node(node(id, lang));
    }
    for (a, b, r) in edges {
        g.add_edge(a, b, *r).unwrap();
    }
    g
}

pub fn matrix(ids: &[&str], rows: &[&[f64]], known: &[bool]) -> ConceptEmbeddingMatrix {
    let d = rows[0].len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    ConceptEmbeddingMatrix::new(
        ids.iter().map(|s| s.to_string()).collect(),
        Array2::from_shape_vec((ids.len(), d), flat).unwrap(),
        known.to_vec(),
    )
    .unwrap()
}

/// Random retrofitting instance: `n` nodes, dimension `d`, a random spanning
/// forest plus extra chords with mixed relations (including parallel ones),
/// and roughly `unknown_rate` unknown nodes. Every connected component keeps
/// at least one known node.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    d: usize,
    unknown_rate: f64,
) -> (GenreGraph, ConceptEmbeddingMatrix) {
    let ids: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();
    let mut g = GenreGraph::new();
    for id in &ids {
        g.insert_node(node(id, "en"));
    }
    let relation = |rng: &mut R| Relation::ALL[rng.random_range(0..Relation::ALL.len())];
    for i in 1..n {
        if rng.random_bool(0.85) {
            let j = rng.random_range(0..i);
            let r = relation(rng);
            let (a, b) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            g.add_edge(&ids[a], &ids[b], r).unwrap();
        }
    }
    for _ in 0..n / 2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            let r = relation(rng);
            g.add_edge(&ids[a], &ids[b], r).unwrap();
        }
    }

    let mut known: Vec<bool> = (0..n).map(|_| !rng.random_bool(unknown_rate)).collect();
    for component in g.components() {
        let idx: Vec<usize> = component
            .iter()
            .map(|id| ids.iter().position(|x| x == id).unwrap())
            .collect();
        if idx.iter().all(|&i| !known[i]) {
            known[idx[0]] = true;
        }
    }
    let vectors = Array2::from_shape_fn((n, d), |(i, _)| {
        if known[i] {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    let m = ConceptEmbeddingMatrix::new(ids, vectors, known).unwrap();
    (g, m)
}

/// Pair-counting AUC with half credit for ties.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut credit = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    (pairs > 0).then(|| credit / pairs as f64)
}
