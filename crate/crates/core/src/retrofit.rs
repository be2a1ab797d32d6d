//! Graph-constrained refinement of concept embeddings.
//!
//! Minimizes
//!
//! ```text
//! Φ(Q) = Σ_i α_i ‖q_i − q̂_i‖² + Σ_i Σ_{j ∈ N(i)} β_ij ‖q_i − q_j‖²
//! ```
//!
//! with the Jacobi update
//!
//! ```text
//! q_i ← (Σ_j (β_ij + β_ji) q_j + α_i q̂_i) / (Σ_j (β_ij + β_ji) + α_i)
//! ```
//!
//! Both neighbour directions enter the update because `q_i` appears as the
//! source and as the target of edge terms in Φ.
//!
//! α_i is `alpha_known` for concepts with at least one in-vocabulary word
//! and `alpha_unknown` (default 0) otherwise, so unknown concepts end up as
//! the average of their neighbours. β follows one of two schemes:
//!
//! * [`Scheme::Uniform`]: `β_ij = 1 / degree(i)` for every relation.
//! * [`Scheme::Typed`]: `β_ij = 1` for equivalence relations (`sameAs`,
//!   `wikiPageRedirects`), `1 / degree(i)` for the others.
//!
//! `degree(i)` counts distinct neighbours. When several relations connect the
//! same pair, their coefficients add up.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::ConceptEmbeddingMatrix;
use crate::error::{Error, Result};
use crate::genregraph::{GenreGraph, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    #[default]
    Typed,
}

impl Scheme {
    /// Coefficient of one relation edge leaving a node with `degree`
    /// distinct neighbours.
    pub fn beta(self, relation: Relation, degree: usize) -> f64 {
        match self {
            Scheme::Typed if relation.is_equivalence() => 1.0,
            _ => 1.0 / degree as f64,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Uniform => "uniform",
            Scheme::Typed => "typed",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Scheme::Uniform),
            "typed" => Ok(Scheme::Typed),
            _ => Err(Error::InvalidArgument(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrofitConfig {
    pub scheme: Scheme,
    pub alpha_known: f64,
    pub alpha_unknown: f64,
    pub max_iters: usize,
    /// Stop once no node moves by more than this (L2) in one iteration.
    pub tolerance: f64,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        RetrofitConfig {
            scheme: Scheme::Typed,
            alpha_known: 1.0,
            alpha_unknown: 0.0,
            max_iters: 100,
            tolerance: 1e-5,
        }
    }
}

impl RetrofitConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        RetrofitConfig {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha_known.is_finite() || self.alpha_known <= 0.0 {
            return Err(Error::InvalidArgument("alpha_known must be > 0".into()));
        }
        if !self.alpha_unknown.is_finite() || self.alpha_unknown < 0.0 {
            return Err(Error::InvalidArgument("alpha_unknown must be >= 0".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument("tolerance must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub delta: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RetrofitOutcome {
    /// Refined embeddings. A concept is known if it was known before or
    /// its refined vector is nonzero.
    pub embeddings: ConceptEmbeddingMatrix,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Unknown concepts without neighbours; left at their initial vector.
    pub isolated_unknown: Vec<String>,
    /// Concepts in connected components that contain no anchored node.
    pub unanchored: Vec<String>,
    pub trace: Vec<TraceEntry>,
}

/// A retrofitting problem with coefficients resolved to concept indices.
#[derive(Debug)]
pub struct Retrofitter<'a> {
    q_hat: &'a ConceptEmbeddingMatrix,
    cfg: RetrofitConfig,
    alpha: Vec<f64>,
    /// Directed β_ij, neighbours ordered by node id.
    beta: Vec<Vec<(usize, f64)>>,
    /// β_ij + β_ji, same order as `beta`.
    weight: Vec<Vec<(usize, f64)>>,
}

impl<'a> Retrofitter<'a> {
    /// The graph's node set must equal the matrix's concept set.
    pub fn new(q_hat: &'a ConceptEmbeddingMatrix, graph: &GenreGraph, cfg: &RetrofitConfig) -> Result<Self> {
        cfg.validate()?;
        if graph.node_count() != q_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: q_hat.len(),
                actual: graph.node_count(),
            });
        }
        if let Some(node) = graph.nodes().find(|n| q_hat.index_of(&n.id).is_none()) {
            return Err(Error::UnknownId(node.id.clone()));
        }

        let n = q_hat.len();
        let alpha = q_hat
            .known()
            .iter()
            .map(|&k| if k { cfg.alpha_known } else { cfg.alpha_unknown })
            .collect();

        let relations = graph.pair_relations();

        let mut beta = vec![Vec::new(); n];
        for (i, id) in q_hat.concepts().iter().enumerate() {
            let degree = graph.degree(id);
            for nb in graph.neighbors(id) {
                let key = if id.as_str() <= nb {
                    (id.as_str(), nb)
                } else {
                    (nb, id.as_str())
                };
                let rels = &relations[&key];
                let b: f64 = rels.iter().map(|&r| cfg.scheme.beta(r, degree)).sum();
                let j = q_hat.index_of(nb).expect("node set checked");
                beta[i].push((j, b));
            }
        }
        let weight = beta
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|&(j, b_ij)| {
                        let b_ji = beta[j]
                            .iter()
                            .find(|&&(k, _)| k == i)
                            .map(|&(_, b)| b)
                            .expect("adjacency is symmetric");
                        (j, b_ij + b_ji)
                    })
                    .collect()
            })
            .collect();

        Ok(Retrofitter {
            q_hat,
            cfg: *cfg,
            alpha,
            beta,
            weight,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Directed coefficients β_ij of node `i`.
    pub fn beta(&self, i: usize) -> &[(usize, f64)] {
        &self.beta[i]
    }

    fn check_shape(&self, q: &Array2<f64>) -> Result<()> {
        if q.dim() != self.q_hat.vectors().dim() {
            return Err(Error::DimensionMismatch {
                expected: self.q_hat.len() * self.q_hat.dim(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, q: &Array2<f64>) -> Result<f64> {
        self.check_shape(q)?;
        let q_hat = self.q_hat.vectors();
        let mut total = 0.0;
        for i in 0..q.nrows() {
            let qi = q.row(i);
            if self.alpha[i] != 0.0 {
                let d = &qi - &q_hat.row(i);
                total += self.alpha[i] * d.dot(&d);
            }
            for &(j, b) in &self.beta[i] {
                let d = &qi - &q.row(j);
                total += b * d.dot(&d);
            }
        }
        Ok(total)
    }

    /// ∂Φ/∂q_i = 2 α_i (q_i − q̂_i) + 2 Σ_j (β_ij + β_ji)(q_i − q_j).
    pub fn gradient(&self, q: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_shape(q)?;
        let q_hat = self.q_hat.vectors();
        let mut grad = Array2::zeros(q.dim());
        for i in 0..q.nrows() {
            let qi = q.row(i);
            let mut g = grad.row_mut(i);
            g.scaled_add(2.0 * self.alpha[i], &(&qi - &q_hat.row(i)));
            for &(j, w) in &self.weight[i] {
                g.scaled_add(2.0 * w, &(&qi - &q.row(j)));
            }
        }
        Ok(grad)
    }

    /// One simultaneous Jacobi update of every node. Fails on a node with
    /// neither anchor nor neighbours.
    pub fn update_step(&self, q: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
        self.check_shape(q)?;
        if let Some(i) = (0..q.nrows()).find(|&i| self.denominator(i) == 0.0) {
            return Err(Error::ZeroDenominator(self.q_hat.concepts()[i].clone()));
        }
        Ok(self.step(q))
    }

    fn denominator(&self, i: usize) -> f64 {
        self.weight[i].iter().map(|&(_, w)| w).sum::<f64>() + self.alpha[i]
    }

    /// Jacobi update; nodes with a zero denominator keep their value.
    fn step(&self, q: &Array2<f64>) -> (Array2<f64>, f64) {
        let dim = q.ncols();
        let q_hat = self.q_hat.vectors();
        let rows: Vec<(Vec<f64>, f64)> = (0..q.nrows())
            .into_par_iter()
            .map(|i| {
                let old = q.row(i);
                let denom = self.denominator(i);
                if denom == 0.0 {
                    return (old.to_vec(), 0.0);
                }
                let mut num = vec![0.0; dim];
                for &(j, w) in &self.weight[i] {
                    for (acc, x) in num.iter_mut().zip(q.row(j)) {
                        *acc += w * x;
                    }
                }
                let a = self.alpha[i];
                for (acc, x) in num.iter_mut().zip(q_hat.row(i)) {
                    *acc += a * x;
                }
                let mut moved = 0.0;
                for (acc, x) in num.iter_mut().zip(old) {
                    *acc /= denom;
                    moved += (*acc - x) * (*acc - x);
                }
                (num, moved.sqrt())
            })
            .collect();
        let mut data = Vec::with_capacity(q.len());
        let mut delta = 0.0f64;
        for (row, moved) in rows {
            data.extend(row);
            delta = delta.max(moved);
        }
        let next = Array2::from_shape_vec(q.dim(), data).expect("shape preserved");
        (next, delta)
    }

    /// Iterates from Q̂ until the largest per-node displacement is at most
    /// the tolerance or the iteration cap is reached.
    pub fn run(&self, trace: bool) -> Result<RetrofitOutcome> {
        let concepts = self.q_hat.concepts();
        let isolated_unknown: Vec<String> = (0..concepts.len())
            .filter(|&i| self.denominator(i) == 0.0)
            .map(|i| concepts[i].clone())
            .collect();
        let unanchored = self.unanchored();
        if !unanchored.is_empty() {
            warn!(
                "{} concepts sit in components without any known concept and stay at zero",
                unanchored.len()
            );
        }

        let mut q = self.q_hat.vectors().clone();
        let mut entries = Vec::new();
        let mut iterations = 0;
        let mut delta = f64::INFINITY;
        while iterations < self.cfg.max_iters {
            let (next, d) = self.step(&q);
            q = next;
            delta = d;
            iterations += 1;
            if trace {
                let objective = self.objective(&q)?;
                debug!("iteration {iterations}: delta {delta:.3e}, objective {objective:.6e}");
                entries.push(TraceEntry {
                    iteration: iterations,
                    delta,
                    objective,
                });
            }
            if delta <= self.cfg.tolerance {
                break;
            }
        }

        if delta > self.cfg.tolerance {
            warn!(
                "retrofitting stopped after {iterations} iterations with displacement {delta:.3e} > {:.1e}",
                self.cfg.tolerance
            );
        }
        let known = self
            .q_hat
            .known()
            .iter()
            .zip(q.rows())
            .map(|(&k, row)| k || row.iter().any(|&x| x != 0.0))
            .collect();
        Ok(RetrofitOutcome {
            embeddings: self.q_hat.with_vectors(q, known)?,
            iterations,
            final_delta: delta,
            converged: delta <= self.cfg.tolerance,
            isolated_unknown,
            unanchored,
            trace: entries,
        })
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.alpha.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut component = Vec::new();
            while let Some(i) = stack.pop() {
                component.push(i);
                for &(j, _) in &self.weight[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            out.push(component);
        }
        out
    }

    fn unanchored(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .components()
            .into_iter()
            .filter(|c| c.iter().all(|&i| self.alpha[i] == 0.0))
            .flatten()
            .map(|i| self.q_hat.concepts()[i].clone())
            .collect();
        out.sort();
        out
    }

    /// Solves the stationarity system
    /// `α_i (q_i − q̂_i) + Σ_j (β_ij + β_ji)(q_i − q_j) = 0` directly with a
    /// dense LU factorization.
    pub fn solve_direct(&self) -> Result<Array2<f64>> {
        let n = self.alpha.len();
        let d = self.q_hat.dim();
        for component in self.components() {
            if component.iter().all(|&i| self.alpha[i] == 0.0) {
                let first = component.iter().map(|&i| &self.q_hat.concepts()[i]).min();
                return Err(Error::Singular(first.cloned().unwrap_or_default()));
            }
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, d);
        let q_hat = self.q_hat.vectors();
        for i in 0..n {
            a[(i, i)] = self.denominator(i);
            for &(j, w) in &self.weight[i] {
                a[(i, j)] -= w;
            }
            for k in 0..d {
                b[(i, k)] = self.alpha[i] * q_hat[(i, k)];
            }
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular(self.q_hat.concepts().first().cloned().unwrap_or_default()))?;
        Ok(Array2::from_shape_fn((n, d), |(i, k)| x[(i, k)]))
    }
}

pub fn objective(
    q: &Array2<f64>,
    q_hat: &ConceptEmbeddingMatrix,
    graph: &GenreGraph,
    cfg: &RetrofitConfig,
) -> Result<f64> {
    Retrofitter::new(q_hat, graph, cfg)?.objective(q)
}

pub fn update_step(
    q: &Array2<f64>,
    q_hat: &ConceptEmbeddingMatrix,
    graph: &GenreGraph,
    cfg: &RetrofitConfig,
) -> Result<(Array2<f64>, f64)> {
    Retrofitter::new(q_hat, graph, cfg)?.update_step(q)
}

pub fn retrofit(
    q_hat: &ConceptEmbeddingMatrix,
    graph: &GenreGraph,
    cfg: &RetrofitConfig,
) -> Result<RetrofitOutcome> {
    Retrofitter::new(q_hat, graph, cfg)?.run(false)
}

pub fn solve_direct(
    q_hat: &ConceptEmbeddingMatrix,
    graph: &GenreGraph,
    cfg: &RetrofitConfig,
) -> Result<Array2<f64>> {
    Retrofitter::new(q_hat, graph, cfg)?.solve_direct()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genregraph::GenreNode;
    use ndarray::array;

    fn graph(ids: &[&str], edges: &[(&str, &str, Relation)]) -> GenreGraph {
        let mut g = GenreGraph::new();
        for id in ids {
            g.insert_node(GenreNode {
                id: id.to_string(),
                lang: "en".into(),
                label: id.to_string(),
                tokens: vec![id.to_lowercase()],
                system: None,
            });
        }
        for (a, b, r) in edges {
            g.add_edge(a, b, *r).unwrap();
        }
        g
    }

    fn matrix(ids: &[&str], vectors: Array2<f64>, known: &[bool]) -> ConceptEmbeddingMatrix {
        ConceptEmbeddingMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            vectors,
            known.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn objective_examples() {
        let g = graph(&["A", "B"], &[]);
        let m = matrix(&["A", "B"], array![[1.0, 0.0], [0.0, 0.0]], &[true, true]);
        let cfg = RetrofitConfig::default();
        assert_eq!(objective(m.vectors(), &m, &g, &cfg).unwrap(), 0.0);

        let g = graph(&["A", "B"], &[("A", "B", Relation::SameAs)]);
        assert_eq!(objective(m.vectors(), &m, &g, &cfg).unwrap(), 2.0);

        let c = 3.0;
        let scaled = matrix(&["A", "B"], m.vectors() * c, &[true, true]);
        let q = m.vectors() * c + array![[0.5, -1.0], [2.0, 0.25]] * c;
        let base = objective(&(m.vectors() + array![[0.5, -1.0], [2.0, 0.25]]), &m, &g, &cfg).unwrap();
        assert!((objective(&q, &scaled, &g, &cfg).unwrap() - c * c * base).abs() < 1e-12);
    }

    #[test]
    fn update_examples() {
        let cfg = RetrofitConfig::default();
        // unknown node with one neighbour copies it
        let g = graph(&["A", "U"], &[("A", "U", Relation::Derivative)]);
        let m = matrix(&["A", "U"], array![[0.3, 0.7], [0.0, 0.0]], &[true, false]);
        let (next, _) = update_step(m.vectors(), &m, &g, &cfg).unwrap();
        assert_eq!(next.row(1).to_vec(), vec![0.3, 0.7]);

        // known node with one equivalence neighbour
        let g = graph(&["A", "B"], &[("A", "B", Relation::SameAs)]);
        let m = matrix(&["A", "B"], array![[1.0, 0.0], [0.0, 1.0]], &[true, true]);
        let q = array![[5.0, 5.0], [2.0, -1.0]];
        let (next, _) = update_step(&q, &m, &g, &cfg).unwrap();
        assert_eq!(
            next.row(0).to_vec(),
            vec![(2.0 * 2.0 + 1.0) / 3.0, (-2.0 + 0.0) / 3.0]
        );

        // edgeless known node snaps back to its anchor
        let g = graph(&["A"], &[]);
        let m = matrix(&["A"], array![[1.0, 2.0]], &[true]);
        let (next, delta) = update_step(&array![[0.0, 0.0]], &m, &g, &cfg).unwrap();
        assert_eq!(next.row(0).to_vec(), vec![1.0, 2.0]);
        assert!((delta - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let g = graph(&["A", "U"], &[]);
        let m = matrix(&["A", "U"], array![[1.0], [0.0]], &[true, false]);
        let err = update_step(m.vectors(), &m, &g, &RetrofitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator(ref id) if id == "U"));
        // the full run pins the node instead
        let out = retrofit(&m, &g, &RetrofitConfig::default()).unwrap();
        assert_eq!(out.isolated_unknown, vec!["U"]);
        assert_eq!(out.unanchored, vec!["U"]);
        assert!(!out.embeddings.known()[1]);
        assert!(matches!(
            solve_direct(&m, &g, &RetrofitConfig::default()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn two_node_fixed_point() {
        let g = graph(&["A", "B"], &[("A", "B", Relation::SameAs)]);
        let m = matrix(&["A", "B"], array![[1.0, 0.0], [0.0, 1.0]], &[true, true]);
        let cfg = RetrofitConfig {
            tolerance: 1e-12,
            max_iters: 1000,
            ..RetrofitConfig::default()
        };
        let out = retrofit(&m, &g, &cfg).unwrap();
        assert!(out.converged);
        let expected = array![[0.6, 0.4], [0.4, 0.6]];
        assert!((out.embeddings.vectors() - &expected)
            .iter()
            .all(|x| x.abs() < 1e-9));
        let direct = solve_direct(&m, &g, &cfg).unwrap();
        assert!((direct - &expected).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn edgeless_graph_is_identity() {
        let g = graph(&["A", "B"], &[]);
        let m = matrix(&["A", "B"], array![[1.0, 3.0], [-2.0, 0.5]], &[true, true]);
        let out = retrofit(&m, &g, &RetrofitConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.embeddings.vectors(), m.vectors());
        assert_eq!(
            solve_direct(&m, &g, &RetrofitConfig::default()).unwrap(),
            *m.vectors()
        );
    }

    #[test]
    fn unknown_tail_follows_known_head() {
        let g = graph(&["K", "U"], &[("K", "U", Relation::MusicSubgenre)]);
        let m = matrix(&["K", "U"], array![[1.0, -1.0], [0.0, 0.0]], &[true, false]);
        let out = retrofit(&m, &g, &RetrofitConfig::with_scheme(Scheme::Uniform)).unwrap();
        let q = out.embeddings.vectors();
        // U copies K's previous iterate, so they agree to within one step
        assert!((&q.row(0) - &q.row(1)).iter().all(|x| x.abs() <= 1e-5));
        assert!((&q.row(1) - &m.row(0)).iter().all(|x| x.abs() <= 1e-4));
        assert!(out.embeddings.known()[1]);
    }

    #[test]
    fn parallel_relations_add_up() {
        let g = graph(
            &["A", "B", "C"],
            &[
                ("A", "B", Relation::SameAs),
                ("A", "B", Relation::StylisticOrigin),
                ("A", "C", Relation::Derivative),
            ],
        );
        let m = matrix(&["A", "B", "C"], Array2::zeros((3, 1)), &[true; 3]);
        let r = Retrofitter::new(&m, &g, &RetrofitConfig::default()).unwrap();
        assert_eq!(r.beta(0), &[(1, 1.5), (2, 0.5)]);
        assert_eq!(r.beta(1), &[(0, 2.0)]);
        let r = Retrofitter::new(&m, &g, &RetrofitConfig::with_scheme(Scheme::Uniform)).unwrap();
        assert_eq!(r.beta(0), &[(1, 1.0), (2, 0.5)]);
    }

    #[test]
    fn node_set_must_match() {
        let g = graph(&["A", "B"], &[]);
        let m = matrix(&["A", "C"], Array2::zeros((2, 1)), &[true; 2]);
        assert!(matches!(
            Retrofitter::new(&m, &g, &RetrofitConfig::default()),
            Err(Error::UnknownId(_))
        ));
        let m = matrix(&["A"], Array2::zeros((1, 1)), &[true]);
        assert!(Retrofitter::new(&m, &g, &RetrofitConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [
            RetrofitConfig {
                alpha_known: 0.0,
                ..Default::default()
            },
            RetrofitConfig {
                alpha_unknown: -1.0,
                ..Default::default()
            },
            RetrofitConfig {
                tolerance: 0.0,
                ..Default::default()
            },
            RetrofitConfig {
                max_iters: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert_eq!("typed".parse::<Scheme>().unwrap(), Scheme::Typed);
        assert!("faruqui".parse::<Scheme>().is_err());
    }
}
