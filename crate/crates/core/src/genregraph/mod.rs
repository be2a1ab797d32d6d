//! Multilingual music-genre graph with typed relations.
//!
//! Nodes are genre tags of one language; edges carry one of six DBpedia
//! relation types. Storage keeps edge direction, while retrofitting and
//! path search use the undirected view.

mod normalize;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::compose::ConceptTokens;
use crate::error::{Error, Result};

pub use normalize::{is_normalized_token, normalize_tag, split_tokens, LemmaTable, SplitVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    SameAs,
    WikiPageRedirects,
    StylisticOrigin,
    MusicSubgenre,
    Derivative,
    MusicFusionGenre,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::SameAs,
        Relation::WikiPageRedirects,
        Relation::StylisticOrigin,
        Relation::MusicSubgenre,
        Relation::Derivative,
        Relation::MusicFusionGenre,
    ];

    /// `sameAs` and `wikiPageRedirects` assert that both ends denote the
    /// same genre.
    pub fn is_equivalence(self) -> bool {
        matches!(self, Relation::SameAs | Relation::WikiPageRedirects)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::SameAs => "sameAs",
            Relation::WikiPageRedirects => "wikiPageRedirects",
            Relation::StylisticOrigin => "stylisticOrigin",
            Relation::MusicSubgenre => "musicSubgenre",
            Relation::Derivative => "derivative",
            Relation::MusicFusionGenre => "musicFusionGenre",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreNode {
    pub id: String,
    pub lang: String,
    pub label: String,
    pub tokens: Vec<String>,
    /// Tag system the node was attached from; `None` for base graph nodes.
    pub system: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenreEdge {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    lang: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    rel: String,
}

/// Summary of [`GenreGraph::attach_tag_system`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttachReport {
    pub added: usize,
    pub linked: usize,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct GenreGraph {
    nodes: BTreeMap<String, GenreNode>,
    edges: Vec<GenreEdge>,
    edge_set: HashSet<GenreEdge>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
    vocabulary: BTreeMap<String, SplitVocabulary>,
}

impl PartialEq for GenreGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

fn valid_lang(lang: &str) -> bool {
    lang.len() == 2 && lang.bytes().all(|b| b.is_ascii_lowercase())
}

impl GenreGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads nodes and edges from JSON-lines streams.
    ///
    /// The split vocabulary of each language is the set of words (and their
    /// lemmas) found in that language's base node labels.
    pub fn load<N: BufRead, E: BufRead>(nodes: N, edges: E, lemmas: &LemmaTable) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in nodes.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: NodeRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if !valid_lang(&record.lang) {
                return Err(Error::parse(
                    i + 1,
                    format!("invalid language code `{}`", record.lang),
                ));
            }
            if !seen.insert(record.id.clone()) {
                return Err(Error::Duplicate {
                    line: i + 1,
                    key: record.id,
                });
            }
            records.push((i + 1, record));
        }

        let mut graph = GenreGraph::new();
        for (_, record) in records.iter().filter(|(_, r)| r.system.is_none()) {
            let vocab = graph.vocabulary.entry(record.lang.clone()).or_default();
            for word in split_tokens(&record.label) {
                vocab.insert(lemmas.lemma(&word));
                vocab.insert(&word);
            }
        }

        for (line, record) in records {
            let tokens = match record.tokens {
                Some(tokens) => {
                    if tokens.is_empty() || !tokens.iter().all(|t| is_normalized_token(t)) {
                        return Err(Error::parse(line, "tokens must be normalized and nonempty"));
                    }
                    tokens
                }
                None => normalize_tag(&record.label, graph.vocabulary_for(&record.lang))
                    .map_err(|e| Error::parse(line, e.to_string()))?,
            };
            graph.insert_node(GenreNode {
                id: record.id,
                lang: record.lang,
                label: record.label,
                tokens,
                system: record.system,
            });
        }

        for (i, line) in edges.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EdgeRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            let relation: Relation = record
                .rel
                .parse()
                .map_err(|e: Error| Error::parse(i + 1, e.to_string()))?;
            for end in [&record.src, &record.dst] {
                if !graph.nodes.contains_key(end) {
                    return Err(Error::parse(
                        i + 1,
                        format!("edge references unknown node `{end}`"),
                    ));
                }
            }
            if record.src == record.dst {
                warn!("line {}: dropping self-loop on `{}`", i + 1, record.src);
                continue;
            }
            graph.insert_edge(GenreEdge {
                src: record.src,
                dst: record.dst,
                relation,
            });
        }
        Ok(graph)
    }

    /// Adds a node. An existing node with the same id is replaced.
    pub fn insert_node(&mut self, node: GenreNode) {
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
    }

    /// Adds an edge between existing, distinct nodes. Returns `false` for an
    /// exact duplicate.
    pub fn add_edge(&mut self, src: &str, dst: &str, relation: Relation) -> Result<bool> {
        for end in [src, dst] {
            if !self.nodes.contains_key(end) {
                return Err(Error::UnknownId(end.to_owned()));
            }
        }
        if src == dst {
            return Err(Error::InvalidArgument(format!("self-loop on `{src}`")));
        }
        Ok(self.insert_edge(GenreEdge {
            src: src.to_owned(),
            dst: dst.to_owned(),
            relation,
        }))
    }

    fn insert_edge(&mut self, edge: GenreEdge) -> bool {
        if !self.edge_set.insert(edge.clone()) {
            return false;
        }
        self.adjacency
            .entry(edge.src.clone())
            .or_default()
            .insert(edge.dst.clone());
        self.adjacency
            .entry(edge.dst.clone())
            .or_default()
            .insert(edge.src.clone());
        self.edges.push(edge);
        true
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&GenreNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes sorted by id.
    pub fn nodes(&self) -> impl Iterator<Item = &GenreNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[GenreEdge] {
        &self.edges
    }

    /// Undirected neighbours, sorted by id.
    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &str> {
        self.adjacency
            .get(id)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn degree(&self, id: &str) -> usize {
        self.adjacency.get(id).map_or(0, BTreeSet::len)
    }

    pub fn node_count_by_lang(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for n in self.nodes.values() {
            *counts.entry(n.lang.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Ids of nodes attached from `system`, sorted.
    pub fn system_nodes<'a>(&'a self, system: &'a str) -> impl Iterator<Item = &'a GenreNode> + 'a {
        self.nodes
            .values()
            .filter(move |n| n.system.as_deref() == Some(system))
    }

    pub fn vocabulary_for(&self, lang: &str) -> &SplitVocabulary {
        static EMPTY: std::sync::OnceLock<SplitVocabulary> = std::sync::OnceLock::new();
        self.vocabulary
            .get(lang)
            .unwrap_or_else(|| EMPTY.get_or_init(SplitVocabulary::new))
    }

    pub fn concept_tokens(&self) -> Vec<ConceptTokens> {
        self.nodes
            .values()
            .map(|n| ConceptTokens::new(n.id.clone(), n.lang.clone(), n.tokens.clone()))
            .collect()
    }

    /// Distinct relations between each unordered pair of nodes, keyed by
    /// `(smaller id, larger id)`.
    pub fn pair_relations(&self) -> BTreeMap<(&str, &str), BTreeSet<Relation>> {
        let mut out: BTreeMap<(&str, &str), BTreeSet<Relation>> = BTreeMap::new();
        for e in &self.edges {
            let (a, b) = if e.src <= e.dst {
                (e.src.as_str(), e.dst.as_str())
            } else {
                (e.dst.as_str(), e.src.as_str())
            };
            out.entry((a, b)).or_default().insert(e.relation);
        }
        out
    }

    /// Connected components of the undirected view. Each component is
    /// sorted, and components are ordered by their smallest id.
    pub fn components(&self) -> Vec<Vec<&str>> {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut out = Vec::new();
        for start in self.nodes.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut component = vec![start.as_str()];
            let mut queue = VecDeque::from([start.as_str()]);
            while let Some(id) = queue.pop_front() {
                for nb in self.neighbors(id) {
                    if seen.insert(nb) {
                        component.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
            component.sort_unstable();
            out.push(component);
        }
        out
    }

    /// Keeps exactly the connected components that contain at least one id
    /// from `high_confidence`.
    pub fn filter(&self, high_confidence: &HashSet<String>) -> GenreGraph {
        let keep: HashSet<&str> = self
            .components()
            .into_iter()
            .filter(|c| c.iter().any(|id| high_confidence.contains(*id)))
            .flatten()
            .collect();
        let mut out = GenreGraph {
            vocabulary: self.vocabulary.clone(),
            ..GenreGraph::default()
        };
        for node in self.nodes.values().filter(|n| keep.contains(n.id.as_str())) {
            out.insert_node(node.clone());
        }
        for edge in self.edges.iter().filter(|e| keep.contains(e.src.as_str())) {
            out.insert_edge(edge.clone());
        }
        out
    }

    /// Adds the tags of a tag system as nodes with ids `"{system}:{tag}"`.
    ///
    /// Each tag is normalized against the base vocabulary of `lang`. When its
    /// tokens equal those of a pre-existing node of the same language, a
    /// `sameAs` edge links the two. Tags that normalize to nothing and tags
    /// already attached are skipped.
    pub fn attach_tag_system<S: AsRef<str>>(
        &mut self,
        system: &str,
        lang: &str,
        tags: &[S],
    ) -> Result<AttachReport> {
        if !valid_lang(lang) {
            return Err(Error::InvalidArgument(format!("invalid language code `{lang}`")));
        }
        let mut by_tokens: HashMap<&[String], Vec<String>> = HashMap::new();
        for n in self.nodes.values().filter(|n| n.lang == lang) {
            by_tokens.entry(&n.tokens).or_default().push(n.id.clone());
        }
        let by_tokens: HashMap<Vec<String>, Vec<String>> =
            by_tokens.into_iter().map(|(k, v)| (k.to_vec(), v)).collect();

        let mut report = AttachReport::default();
        let mut pending = Vec::new();
        let mut pending_ids = HashSet::new();
        for tag in tags {
            let tag = tag.as_ref();
            let id = tag_node_id(system, tag);
            if self.nodes.contains_key(&id) || !pending_ids.insert(id.clone()) {
                continue;
            }
            let tokens = match normalize_tag(tag, self.vocabulary_for(lang)) {
                Ok(t) => t,
                Err(_) => {
                    warn!("{system}: tag `{tag}` has no alphanumeric content, skipped");
                    report.skipped.push(tag.to_owned());
                    continue;
                }
            };
            let twins = by_tokens.get(&tokens).cloned().unwrap_or_default();
            pending.push((
                GenreNode {
                    id,
                    lang: lang.to_owned(),
                    label: tag.to_owned(),
                    tokens,
                    system: Some(system.to_owned()),
                },
                twins,
            ));
        }
        for (node, twins) in pending {
            let id = node.id.clone();
            self.insert_node(node);
            report.added += 1;
            if !twins.is_empty() {
                report.linked += 1;
            }
            for twin in twins {
                self.insert_edge(GenreEdge {
                    src: id.clone(),
                    dst: twin,
                    relation: Relation::SameAs,
                });
            }
        }
        Ok(report)
    }

    /// Hop counts from `source` over the undirected view.
    pub fn hop_distances(&self, source: &str) -> Result<HashMap<&str, usize>> {
        let (start, _) = self
            .nodes
            .get_key_value(source)
            .ok_or_else(|| Error::UnknownId(source.to_owned()))?;
        let mut dist = HashMap::from([(start.as_str(), 0usize)]);
        let mut queue = VecDeque::from([start.as_str()]);
        while let Some(id) = queue.pop_front() {
            let d = dist[id];
            for nb in self.neighbors(id) {
                if !dist.contains_key(nb) {
                    dist.insert(nb, d + 1);
                    queue.push_back(nb);
                }
            }
        }
        Ok(dist)
    }

    /// `1 / (1 + L)` where `L` is the undirected hop distance; 0 when
    /// unreachable.
    pub fn shortest_path_similarity(&self, a: &str, b: &str) -> Result<f64> {
        if !self.contains(b) {
            return Err(Error::UnknownId(b.to_owned()));
        }
        let dist = self.hop_distances(a)?;
        Ok(dist.get(b).map_or(0.0, |&l| path_similarity(l)))
    }

    pub fn write_nodes<W: Write>(&self, mut out: W) -> Result<()> {
        for n in self.nodes.values() {
            let record = NodeRecord {
                id: n.id.clone(),
                lang: n.lang.clone(),
                label: n.label.clone(),
                tokens: Some(n.tokens.clone()),
                system: n.system.clone(),
            };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.edges {
            let record = EdgeRecord {
                src: e.src.clone(),
                dst: e.dst.clone(),
                rel: e.relation.as_str().to_owned(),
            };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Graph id of tag `tag` from tag system `system`.
pub fn tag_node_id(system: &str, tag: &str) -> String {
    format!("{system}:{tag}")
}

pub fn path_similarity(hops: usize) -> f64 {
    1.0 / (1.0 + hops as f64)
}
