//! One function per subcommand. Every command reads its inputs from the
//! configured paths or from earlier outputs in `output_dir`, and writes
//! deterministic files there.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use genre_embed::compose::{compose_avg, compose_sif, ConceptEmbeddingMatrix, MultilingualVectors};
use genre_embed::eval::{evaluate, stratified_split, EvalReport, ParallelCorpus};
use genre_embed::genregraph::{tag_node_id, GenreGraph, LemmaTable};
use genre_embed::retrofit::{RetrofitConfig, Retrofitter, TraceEntry};
use genre_embed::translate::{Scorer, TranslationModel};
use genre_embed::wordvec::WordVectorStore;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{Composition, PipelineConfig};

pub const GRAPH_NODES: &str = "graph.nodes.jsonl";
pub const GRAPH_EDGES: &str = "graph.edges.jsonl";
pub const Q_HAT: &str = "q_hat.txt";
pub const Q_HAT_META: &str = "q_hat.json";
pub const Q: &str = "q.txt";
pub const Q_META: &str = "q.json";
pub const RETROFIT_LOG: &str = "retrofit.log.json";
pub const FOLDS: &str = "folds.json";
pub const EVAL: &str = "eval.json";

/// Which embedding matrix a scoring command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Composed from word vectors only.
    Composed,
    /// Composed, then retrofitted to the graph.
    #[default]
    Retrofitted,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("{}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Opens the output of an earlier step.
fn open_output(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path)
        .with_context(|| format!("{} (run the earlier pipeline step first)", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("{}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush().with_context(|| format!("{}", path.display()))?;
    Ok(())
}

/// Loads a graph. Nodes are parsed on their own first so that a format
/// error names the file it comes from.
fn load_graph(nodes: &Path, edges: &Path, lemmas: &LemmaTable) -> Result<GenreGraph> {
    GenreGraph::load(open(nodes)?, io::empty(), lemmas).with_context(|| format!("{}", nodes.display()))?;
    GenreGraph::load(open(nodes)?, open(edges)?, lemmas).with_context(|| format!("{}", edges.display()))
}

fn load_built_graph(cfg: &PipelineConfig) -> Result<GenreGraph> {
    let nodes = cfg.output(GRAPH_NODES);
    open_output(&nodes)?;
    load_graph(&nodes, &cfg.output(GRAPH_EDGES), &LemmaTable::new())
}

/// Corpus with the minimum tag count applied.
fn load_corpus(cfg: &PipelineConfig) -> Result<ParallelCorpus> {
    let path = &cfg.paths.corpus;
    let raw = ParallelCorpus::load(open(path)?).with_context(|| format!("{}", path.display()))?;
    let corpus = raw.filter_min_count(cfg.min_tag_count);
    info!(
        "corpus: {} items, {} after dropping tags seen fewer than {} times",
        raw.len(),
        corpus.len(),
        cfg.min_tag_count
    );
    Ok(corpus)
}

pub fn build_graph(cfg: &PipelineConfig) -> Result<()> {
    let lemmas = match &cfg.paths.lemmas {
        Some(path) => LemmaTable::load(open(path)?).with_context(|| format!("{}", path.display()))?,
        None => LemmaTable::new(),
    };
    let mut graph = load_graph(&cfg.paths.nodes, &cfg.paths.edges, &lemmas)?;
    info!(
        "loaded {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    let corpus = load_corpus(cfg)?;

    let mut summary = Vec::new();
    for system in &cfg.tag_systems {
        let tags = corpus.tags_of(&system.name);
        if tags.is_empty() {
            warn!("tag system `{}` has no tags in the corpus", system.name);
        }
        let report = graph
            .attach_tag_system(&system.name, &system.lang, &tags)
            .with_context(|| format!("tag system `{}`", system.name))?;
        summary.push(format!(
            "{} ({}): {} tags attached, {} linked to a base node, {} skipped",
            system.name,
            system.lang,
            report.added,
            report.linked,
            report.skipped.len()
        ));
    }

    let mut high_confidence: HashSet<String> = cfg
        .tag_systems
        .iter()
        .flat_map(|s| graph.system_nodes(&s.name).map(|n| n.id.clone()))
        .collect();
    if let Some(path) = &cfg.paths.high_confidence {
        for line in open(path)?.lines() {
            let line = line.with_context(|| format!("{}", path.display()))?;
            let id = line.trim();
            if id.is_empty() || id.starts_with('#') {
                continue;
            }
            if !graph.contains(id) {
                warn!("high-confidence id `{id}` is not in the graph");
            }
            high_confidence.insert(id.to_owned());
        }
    }
    let before = (graph.node_count(), graph.edge_count());
    let graph = graph.filter(&high_confidence);

    let nodes_path = cfg.output(GRAPH_NODES);
    let edges_path = cfg.output(GRAPH_EDGES);
    let mut out = create(&nodes_path)?;
    graph
        .write_nodes(&mut out)
        .with_context(|| format!("{}", nodes_path.display()))?;
    let mut out = create(&edges_path)?;
    graph
        .write_edges(&mut out)
        .with_context(|| format!("{}", edges_path.display()))?;

    println!(
        "graph: {} nodes, {} edges ({} nodes and {} edges removed by filtering)",
        graph.node_count(),
        graph.edge_count(),
        before.0 - graph.node_count(),
        before.1 - graph.edge_count()
    );
    for (lang, n) in graph.node_count_by_lang() {
        println!("  {lang}: {n} nodes");
    }
    for line in summary {
        println!("  {line}");
    }
    println!("wrote {} and {}", nodes_path.display(), edges_path.display());
    Ok(())
}

/// Sidecar of a serialized embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub composition: Composition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sif_a: Option<f64>,
    pub dim: usize,
    pub concepts: usize,
    pub known: usize,
    /// Concepts without a usable vector, in id order.
    pub unknown: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrofit: Option<RetrofitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitSummary {
    pub config: RetrofitConfig,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Concepts in components without any known concept.
    pub unanchored: Vec<String>,
}

fn unknown_ids(m: &ConceptEmbeddingMatrix) -> Vec<String> {
    let mut ids: Vec<String> = m
        .concepts()
        .iter()
        .zip(m.known())
        .filter(|(_, &k)| !k)
        .map(|(c, _)| c.clone())
        .collect();
    ids.sort();
    ids
}

fn write_matrix(
    cfg: &PipelineConfig,
    name: &str,
    meta_name: &str,
    m: &ConceptEmbeddingMatrix,
    meta: &MatrixMeta,
) -> Result<()> {
    let path = cfg.output(name);
    let mut out = create(&path)?;
    m.write_text(&mut out)
        .with_context(|| format!("{}", path.display()))?;
    write_json(&cfg.output(meta_name), meta)
}

/// Reads a matrix and restores its known flags from the sidecar.
fn read_matrix(
    cfg: &PipelineConfig,
    name: &str,
    meta_name: &str,
) -> Result<(ConceptEmbeddingMatrix, MatrixMeta)> {
    let path = cfg.output(name);
    let matrix = ConceptEmbeddingMatrix::read_text(open_output(&path)?)
        .with_context(|| format!("{}", path.display()))?;
    let meta_path = cfg.output(meta_name);
    let meta: MatrixMeta = serde_json::from_reader(open_output(&meta_path)?)
        .with_context(|| format!("{}", meta_path.display()))?;
    let unknown: HashSet<&str> = meta.unknown.iter().map(String::as_str).collect();
    let known = matrix
        .concepts()
        .iter()
        .map(|c| !unknown.contains(c.as_str()))
        .collect();
    let matrix = matrix.with_vectors(matrix.vectors().clone(), known)?;
    Ok((matrix, meta))
}

pub fn embed(cfg: &PipelineConfig) -> Result<()> {
    let graph = load_built_graph(cfg)?;
    let mut vectors = MultilingualVectors::new();
    for (lang, path) in &cfg.paths.vectors {
        let store = WordVectorStore::load(open(path)?, cfg.paths.vector_limit)
            .with_context(|| format!("{}", path.display()))?;
        info!(
            "{lang}: {} word vectors of dimension {}",
            store.len(),
            store.dim()
        );
        vectors
            .insert(lang.clone(), store)
            .with_context(|| format!("{}", path.display()))?;
    }
    for lang in graph.node_count_by_lang().keys() {
        if vectors.get(lang).is_none() {
            warn!("no word vectors for language `{lang}`; its concepts stay unknown");
        }
    }

    let concepts = graph.concept_tokens();
    if concepts.is_empty() {
        bail!("the graph has no nodes");
    }
    let matrix = match cfg.composition {
        Composition::Avg => compose_avg(&concepts, &vectors)?,
        Composition::Sif => compose_sif(&concepts, &vectors, cfg.sif_a)?,
    };
    if matrix.known_count() == 0 {
        bail!("no concept has an in-vocabulary token");
    }
    let meta = MatrixMeta {
        composition: cfg.composition,
        sif_a: (cfg.composition == Composition::Sif).then_some(cfg.sif_a),
        dim: matrix.dim(),
        concepts: matrix.len(),
        known: matrix.known_count(),
        unknown: unknown_ids(&matrix),
        retrofit: None,
    };
    write_matrix(cfg, Q_HAT, Q_HAT_META, &matrix, &meta)?;
    println!(
        "composed {} concepts ({}, dim {}): {} known, {} unknown",
        meta.concepts,
        meta.composition,
        meta.dim,
        meta.known,
        meta.unknown.len()
    );
    println!("wrote {}", cfg.output(Q_HAT).display());
    Ok(())
}

pub fn retrofit(cfg: &PipelineConfig) -> Result<()> {
    let graph = load_built_graph(cfg)?;
    let (q_hat, composed) = read_matrix(cfg, Q_HAT, Q_HAT_META)?;
    let outcome = Retrofitter::new(&q_hat, &graph, &cfg.retrofit)?.run(true)?;
    let q = &outcome.embeddings;
    let meta = MatrixMeta {
        known: q.known_count(),
        unknown: unknown_ids(q),
        retrofit: Some(RetrofitSummary {
            config: cfg.retrofit,
            iterations: outcome.iterations,
            final_delta: outcome.final_delta,
            converged: outcome.converged,
            unanchored: outcome.unanchored.clone(),
        }),
        ..composed
    };
    write_matrix(cfg, Q, Q_META, q, &meta)?;
    let trace: &[TraceEntry] = &outcome.trace;
    write_json(&cfg.output(RETROFIT_LOG), &trace)?;

    println!(
        "retrofitted {} concepts ({} scheme): {} after {} iterations, final displacement {:.3e}",
        q.len(),
        cfg.retrofit.scheme,
        if outcome.converged {
            "converged"
        } else {
            "NOT converged"
        },
        outcome.iterations,
        outcome.final_delta
    );
    println!("wrote {}", cfg.output(Q).display());
    Ok(())
}

/// Arguments of `translate` after parsing.
#[derive(Debug, Clone, Default)]
pub struct TranslateArgs {
    pub sources: Vec<String>,
    /// Tag system of the sources; when set they are tag names, not node ids.
    pub from: Option<String>,
    pub target_system: Option<String>,
    pub target_lang: Option<String>,
    pub targets: Vec<String>,
    pub top: Option<usize>,
    pub embeddings: Stage,
}

fn matrix_for(cfg: &PipelineConfig, stage: Stage) -> Result<ConceptEmbeddingMatrix> {
    Ok(match stage {
        Stage::Composed => read_matrix(cfg, Q_HAT, Q_HAT_META)?.0,
        Stage::Retrofitted => read_matrix(cfg, Q, Q_META)?.0,
    })
}

pub fn translate(cfg: &PipelineConfig, args: &TranslateArgs) -> Result<()> {
    let graph = load_built_graph(cfg)?;
    let sources: Vec<String> = match &args.from {
        Some(system) => args.sources.iter().map(|t| tag_node_id(system, t)).collect(),
        None => args.sources.clone(),
    };
    let source_set: BTreeSet<&str> = sources.iter().map(String::as_str).collect();
    let targets: Vec<String> = if !args.targets.is_empty() {
        args.targets.clone()
    } else if let Some(system) = &args.target_system {
        graph.system_nodes(system).map(|n| n.id.clone()).collect()
    } else if let Some(lang) = &args.target_lang {
        graph
            .nodes()
            .filter(|n| &n.lang == lang && !source_set.contains(n.id.as_str()))
            .map(|n| n.id.clone())
            .collect()
    } else {
        bail!("no targets: pass --target-system, --target-lang or --target");
    };
    if targets.is_empty() {
        bail!("the target set is empty");
    }

    let matrix;
    let model = match cfg.scorer {
        Scorer::Baseline => TranslationModel::new(cfg.scorer, None, Some(&graph))?,
        scorer => {
            matrix = matrix_for(cfg, args.embeddings)?;
            TranslationModel::new(scorer, Some(&matrix), None)?
        }
    };
    let result = model.translate(&sources, &targets)?;
    for s in &result.dropped_sources {
        warn!("source `{s}` has no usable representation and is ignored");
    }
    if result.dropped_sources.len() == source_set.len() {
        warn!("no usable source; every target scores 0");
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let shown = args.top.unwrap_or(usize::MAX);
    for (rank, id) in result.ranking.iter().take(shown).enumerate() {
        writeln!(out, "{}\t{:.6}\t{}", rank + 1, result.target_scores[id], id)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FoldsFile<'a> {
    k: usize,
    seed: u64,
    sizes: Vec<usize>,
    /// Item id to fold index.
    folds: BTreeMap<&'a str, usize>,
}

#[derive(Debug, Serialize)]
struct EvalFile<'a> {
    scorer: Scorer,
    #[serde(skip_serializing_if = "Option::is_none")]
    embeddings: Option<&'a MatrixMeta>,
    items: usize,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn run_evaluation(cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    let setup = cfg.evaluation()?;
    let graph = load_built_graph(cfg)?;
    let loaded = match cfg.scorer {
        Scorer::Baseline => None,
        _ => Some(match stage {
            Stage::Composed => read_matrix(cfg, Q_HAT, Q_HAT_META)?,
            Stage::Retrofitted => read_matrix(cfg, Q, Q_META)?,
        }),
    };

    // Tags without a concept cannot be scored; drop them up front so that
    // target tags missing from the model do not abort the run.
    let corpus = load_corpus(cfg)?;
    let mut missing = 0usize;
    let corpus = corpus.retain_tags(|system, tag| {
        let id = tag_node_id(system, tag);
        let present = match &loaded {
            Some((m, _)) => m.index_of(&id).is_some(),
            None => graph.contains(&id),
        };
        missing += usize::from(!present);
        present
    });
    if missing > 0 {
        warn!("{missing} tag annotations have no concept in the model and were dropped");
    }
    if corpus.len() < cfg.folds {
        bail!(
            "{} usable corpus items, fewer than {} folds",
            corpus.len(),
            cfg.folds
        );
    }

    let folds = stratified_split(&corpus, cfg.folds, cfg.seed)?;
    write_json(
        &cfg.output(FOLDS),
        &FoldsFile {
            k: folds.k,
            seed: folds.seed,
            sizes: folds.fold_sizes(),
            folds: corpus
                .items()
                .iter()
                .zip(&folds.folds)
                .map(|(item, &f)| (item.id.as_str(), f))
                .collect(),
        },
    )?;

    let report = match &loaded {
        Some((m, _)) => {
            let model = TranslationModel::new(cfg.scorer, Some(m), None)?;
            evaluate(&corpus, &folds, &setup.target, &setup.sources, &model)?
        }
        None => {
            let model = TranslationModel::new(cfg.scorer, None, Some(&graph))?;
            evaluate(&corpus, &folds, &setup.target, &setup.sources, &model)?
        }
    };
    write_json(
        &cfg.output(EVAL),
        &EvalFile {
            scorer: cfg.scorer,
            embeddings: loaded.as_ref().map(|(_, meta)| meta),
            items: corpus.len(),
            report: &report,
        },
    )?;
    print!("{}", report.table());
    Ok(())
}
