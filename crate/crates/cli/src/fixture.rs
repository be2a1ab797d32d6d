//! Synthetic multilingual genre data for trying the pipeline end to end.
//!
//! Genres are bases ("rock") and modifier compounds ("alternative rock",
//! "rock alternatif", "rock alternativo"). Every word is a shared latent
//! meaning vector plus per-language noise, so the three vector files are
//! aligned. Three tag systems annotate the same items with different
//! surface conventions, one per language.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use genre_embed::text::write_text_vectors;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

pub const LANGS: [&str; 3] = ["en", "fr", "es"];

const BASES: [[&str; 3]; 12] = [
    ["rock", "rock", "rock"],
    ["pop", "pop", "pop"],
    ["jazz", "jazz", "jazz"],
    ["blues", "blues", "blues"],
    ["metal", "métal", "metal"],
    ["punk", "punk", "punk"],
    ["folk", "folk", "folk"],
    ["soul", "soul", "soul"],
    ["funk", "funk", "funk"],
    ["reggae", "reggae", "reggae"],
    ["electronic", "électronique", "electrónica"],
    ["country", "country", "country"],
];

const MODIFIERS: [[&str; 3]; 8] = [
    ["alternative", "alternatif", "alternativo"],
    ["progressive", "progressif", "progresivo"],
    ["psychedelic", "psychédélique", "psicodélico"],
    ["gothic", "gothique", "gótico"],
    ["experimental", "expérimental", "experimental"],
    ["industrial", "industriel", "industrial"],
    ["acoustic", "acoustique", "acústico"],
    ["latin", "latin", "latino"],
];

/// A genre with no word vectors in any language.
const UNKNOWN_BASE: [&str; 3] = ["zouk", "zouk", "zouk"];

const MUSIC: [&str; 3] = ["music", "musique", "música"];

/// Name and language of each generated tag system.
pub const SYSTEMS: [(&str, &str); 3] = [("en_tags", "en"), ("fr_tags", "fr"), ("es_tags", "es")];

#[derive(Debug, Clone)]
pub struct FixtureOptions {
    pub seed: u64,
    pub items: usize,
    pub dim: usize,
    pub fillers: usize,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            seed: 7,
            items: 2000,
            dim: 24,
            fillers: 60,
        }
    }
}

#[derive(Debug, Clone)]
struct Genre {
    /// Index into BASES, or BASES.len() for the unknown base.
    base: usize,
    modifier: Option<usize>,
}

impl Genre {
    fn base_words(&self) -> [&'static str; 3] {
        BASES.get(self.base).copied().unwrap_or(UNKNOWN_BASE)
    }

    /// Words of the label in language `l`, in natural order.
    fn words(&self, l: usize) -> Vec<&'static str> {
        let base = self.base_words()[l];
        match self.modifier {
            None => vec![base],
            Some(m) if l == 0 => vec![MODIFIERS[m][l], base],
            Some(m) => vec![base, MODIFIERS[m][l]],
        }
    }
}

fn wiki_label(words: &[&str]) -> String {
    let mut label = words.join("_");
    if let Some(first) = label.chars().next() {
        label.replace_range(..first.len_utf8(), &first.to_uppercase().to_string());
    }
    label
}

fn node_id(lang: &str, words: &[&str]) -> String {
    format!("dbpedia-{lang}:{}", wiki_label(words))
}

fn title_case(words: &[&str]) -> String {
    words
        .iter()
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// The tag string system `s` uses for a genre.
fn surface(s: usize, words: &[&str]) -> String {
    match s {
        0 => words.concat(),
        1 => words.join("-"),
        _ => title_case(words),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("{}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Writes vectors, graph, lemmas, corpus and `pipeline.toml` into `dir`.
pub fn generate(dir: &Path, opts: &FixtureOptions) -> Result<()> {
    anyhow::ensure!(opts.dim > 0, "dimension must be positive");
    anyhow::ensure!(opts.items > 0, "item count must be positive");
    fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut genres: Vec<Genre> = (0..=BASES.len())
        .map(|base| Genre { base, modifier: None })
        .collect();
    for base in 0..BASES.len() {
        for m in 0..MODIFIERS.len() {
            if rng.random_bool(0.3) {
                genres.push(Genre {
                    base,
                    modifier: Some(m),
                });
            }
        }
    }

    write_vectors(dir, opts, &mut rng)?;
    write_graph(dir, &genres, &mut rng)?;

    let mut lemmas = create(&dir.join("lemmas.tsv"))?;
    for (word, lemma) in [
        ("rocks", "rock"),
        ("métaux", "métal"),
        ("punks", "punk"),
        ("musiques", "musique"),
    ] {
        writeln!(lemmas, "{word}\t{lemma}")?;
    }
    lemmas.flush()?;

    write_corpus(dir, opts, &genres, &mut rng)?;

    let config = format!(
        r#"output_dir = "out"
composition = "sif"
sif_a = 1e-3
scorer = "avg"
folds = 4
seed = {seed}
min_tag_count = 16

[paths]
nodes = "graph/nodes.jsonl"
edges = "graph/edges.jsonl"
lemmas = "lemmas.tsv"
corpus = "corpus.jsonl"

[paths.vectors]
en = "vectors/en.txt"
fr = "vectors/fr.txt"
es = "vectors/es.txt"

[retrofit]
scheme = "typed"
alpha_known = 1.0
alpha_unknown = 0.0
tolerance = 1e-5
max_iters = 1000

[[tag_systems]]
name = "en_tags"
lang = "en"

[[tag_systems]]
name = "fr_tags"
lang = "fr"

[[tag_systems]]
name = "es_tags"
lang = "es"

[evaluation]
target = "fr_tags"
sources = ["en_tags", "es_tags"]
"#,
        seed = opts.seed
    );
    fs::write(dir.join("pipeline.toml"), config).with_context(|| format!("{}", dir.display()))?;
    Ok(())
}

fn round(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn write_vectors(dir: &Path, opts: &FixtureOptions, rng: &mut ChaCha8Rng) -> Result<()> {
    let d = opts.dim;
    let scale = 1.0 / (d as f64).sqrt();
    // Shared by every word, as in real embeddings; SIF removes it.
    let common = gaussian(rng, d, 0.5 * scale);
    let fillers: Vec<Vec<f64>> = (0..opts.fillers).map(|_| gaussian(rng, d, scale)).collect();
    let bases: Vec<Vec<f64>> = BASES.iter().map(|_| gaussian(rng, d, scale)).collect();
    let modifiers: Vec<Vec<f64>> = MODIFIERS.iter().map(|_| gaussian(rng, d, scale)).collect();
    let music = gaussian(rng, d, scale);

    let vectors_dir = dir.join("vectors");
    fs::create_dir_all(&vectors_dir).with_context(|| format!("{}", vectors_dir.display()))?;
    for (l, lang) in LANGS.iter().enumerate() {
        // Frequent words first: fillers, then "music", bases and modifiers.
        let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
        let mut push = |word: String, latent: &[f64], rng: &mut ChaCha8Rng| {
            let noise = gaussian(rng, d, 0.15 * scale);
            let v = latent
                .iter()
                .zip(&noise)
                .zip(&common)
                .map(|((a, b), c)| a + b + c)
                .collect();
            rows.push((word, round(v)));
        };
        for (i, f) in fillers.iter().enumerate() {
            push(format!("{lang}{i:03}"), f, rng);
        }
        push(MUSIC[l].to_owned(), &music, rng);
        for (words, latent) in BASES.iter().zip(&bases) {
            push(words[l].to_owned(), latent, rng);
        }
        for (words, latent) in MODIFIERS.iter().zip(&modifiers) {
            // One out-of-vocabulary modifier in Spanish.
            if !(l == 2 && words[0] == "psychedelic") {
                push(words[l].to_owned(), latent, rng);
            }
        }
        let mut out = create(&vectors_dir.join(format!("{lang}.txt")))?;
        write_text_vectors(&mut out, d, rows.iter().map(|(w, v)| (w.as_str(), v.as_slice())))?;
    }
    Ok(())
}

fn write_graph(dir: &Path, genres: &[Genre], rng: &mut ChaCha8Rng) -> Result<()> {
    // Nodes per language; compounds are missing in some languages.
    let mut nodes: BTreeMap<String, (&str, String)> = BTreeMap::new();
    let mut present = vec![[false; 3]; genres.len()];
    for (g, genre) in genres.iter().enumerate() {
        for (l, lang) in LANGS.iter().enumerate() {
            if l > 0 && genre.modifier.is_some() && rng.random_bool(0.15) {
                continue;
            }
            let words = genre.words(l);
            present[g][l] = true;
            nodes.insert(node_id(lang, &words), (lang, words.join(" ")));
        }
    }

    let mut edges: Vec<(String, String, &str)> = Vec::new();
    let id = |g: usize, l: usize| node_id(LANGS[l], &genres[g].words(l));
    let base_of = |g: usize| {
        genres
            .iter()
            .position(|x| x.base == genres[g].base && x.modifier.is_none())
            .unwrap()
    };
    for (g, langs) in present.iter().enumerate() {
        let here = || (0..3).filter(|&l| langs[l]);
        for l in here().skip(1) {
            edges.push((id(g, 0), id(g, l), "sameAs"));
        }
        if genres[g].modifier.is_some() {
            let parent = base_of(g);
            for l in here() {
                edges.push((id(parent, l), id(g, l), "musicSubgenre"));
            }
            let other = rng.random_range(0..BASES.len());
            if other != genres[g].base {
                let rel = if rng.random_bool(0.5) {
                    "stylisticOrigin"
                } else {
                    "musicFusionGenre"
                };
                edges.push((id(g, 0), id(other, 0), rel));
            }
        }
    }
    let zouk = BASES.len();
    edges.push((id(zouk, 0), id(9, 0), "stylisticOrigin"));
    let mut base_ids: Vec<usize> = (0..=BASES.len()).collect();
    base_ids.shuffle(rng);
    for pair in base_ids.windows(2).take(8) {
        edges.push((id(pair[0], 0), id(pair[1], 0), "derivative"));
    }
    for (b, words) in BASES.iter().enumerate() {
        let alias = node_id("en", &[words[0], MUSIC[0]]);
        nodes.insert(alias.clone(), ("en", format!("{} {}", words[0], MUSIC[0])));
        edges.push((alias, id(b, 0), "wikiPageRedirects"));
    }
    // A component no tag reaches; filtering removes it.
    for label in ["shoegaze", "dream pop"] {
        let words: Vec<&str> = label.split(' ').collect();
        nodes.insert(node_id("en", &words), ("en", label.to_owned()));
    }
    edges.push((
        node_id("en", &["dream", "pop"]),
        node_id("en", &["shoegaze"]),
        "derivative",
    ));

    let graph_dir = dir.join("graph");
    fs::create_dir_all(&graph_dir).with_context(|| format!("{}", graph_dir.display()))?;
    let mut out = create(&graph_dir.join("nodes.jsonl"))?;
    for (id, (lang, label)) in &nodes {
        writeln!(out, "{}", json!({"id": id, "lang": lang, "label": label}))?;
    }
    out.flush()?;
    let mut out = create(&graph_dir.join("edges.jsonl"))?;
    for (src, dst, rel) in &edges {
        writeln!(out, "{}", json!({"src": src, "dst": dst, "rel": rel}))?;
    }
    out.flush()?;
    Ok(())
}

fn write_corpus(dir: &Path, opts: &FixtureOptions, genres: &[Genre], rng: &mut ChaCha8Rng) -> Result<()> {
    // Zipf-like popularity over a shuffled genre order.
    let mut order: Vec<usize> = (0..genres.len()).collect();
    order.shuffle(rng);
    let weights: Vec<f64> = (0..order.len())
        .map(|r| 1.0 / (r as f64 + 1.0).powf(0.7))
        .collect();
    let total: f64 = weights.iter().sum();
    let draw = |rng: &mut ChaCha8Rng| {
        let mut x = rng.random::<f64>() * total;
        for (r, w) in weights.iter().enumerate() {
            if x < *w {
                return order[r];
            }
            x -= w;
        }
        order[order.len() - 1]
    };

    let mut out = create(&dir.join("corpus.jsonl"))?;
    for i in 0..opts.items {
        let mut picked = vec![draw(rng)];
        if rng.random_bool(0.4) {
            let second = draw(rng);
            if !picked.contains(&second) {
                picked.push(second);
            }
        }
        let mut annotations = BTreeMap::new();
        for (s, (name, _)) in SYSTEMS.iter().enumerate() {
            let mut tags: Vec<String> = Vec::new();
            for &g in &picked {
                if rng.random_bool(0.85) {
                    tags.push(surface(s, &genres[g].words(s)));
                }
                if genres[g].modifier.is_some() && rng.random_bool(0.35) {
                    tags.push(surface(s, &[genres[g].base_words()[s]]));
                }
            }
            if rng.random_bool(0.05) {
                let noise = rng.random_range(0..genres.len());
                tags.push(surface(s, &genres[noise].words(s)));
            }
            tags.dedup();
            if !tags.is_empty() {
                annotations.insert(*name, tags);
            }
        }
        writeln!(
            out,
            "{}",
            json!({"id": format!("item{i:05}"), "annotations": annotations})
        )?;
    }
    out.flush()?;
    Ok(())
}
