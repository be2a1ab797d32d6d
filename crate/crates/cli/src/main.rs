use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use genre_embed::retrofit::Scheme;
use genre_embed::translate::Scorer;
use log::LevelFilter;

mod commands;
mod config;
mod fixture;

use commands::{Stage, TranslateArgs};
use config::{Composition, PipelineConfig};

/// Multilingual music-genre embeddings: build the genre graph, compose and
/// retrofit concept embeddings, translate tags and evaluate translations.
#[derive(Debug, Parser)]
#[command(name = "genre-embed", version)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "pipeline.toml")]
    config: PathBuf,

    /// Override the composition strategy.
    #[arg(long, global = true, value_enum)]
    composition: Option<Composition>,

    /// Override the retrofitting coefficient scheme.
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<Scheme>,

    /// Override the translation scorer.
    #[arg(long, global = true, value_parser = parse_scorer)]
    scorer: Option<Scorer>,

    /// Override the fold-assignment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: genre_embed::Error| e.to_string())
}

fn parse_scorer(s: &str) -> Result<Scorer, String> {
    s.parse().map_err(|e: genre_embed::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the genre graph, attach the corpus tag systems and filter.
    BuildGraph,
    /// Compose concept embeddings from word vectors.
    Embed,
    /// Refine the composed embeddings against the graph.
    Retrofit,
    /// Rank target tags for a set of source tags.
    Translate(TranslateCli),
    /// Cross-validated macro-AUC of tag translation.
    Evaluate {
        #[arg(long, value_enum, default_value_t)]
        embeddings: Stage,
    },
    /// Write a small synthetic dataset and its pipeline.toml.
    GenerateFixture {
        /// Destination directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        fixture_seed: u64,
        #[arg(long, default_value_t = 2000)]
        items: usize,
        #[arg(long, default_value_t = 24)]
        dim: usize,
    },
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target_set").required(true).args(["target_system", "target_lang", "target"])))]
struct TranslateCli {
    /// Source concept id, or tag name when --from is given. Repeatable.
    #[arg(long = "source", required = true)]
    sources: Vec<String>,
    /// Tag system the sources belong to.
    #[arg(long)]
    from: Option<String>,
    /// Rank every tag of this tag system.
    #[arg(long)]
    target_system: Option<String>,
    /// Rank every concept of this language.
    #[arg(long)]
    target_lang: Option<String>,
    /// Rank these concept ids. Repeatable.
    #[arg(long)]
    target: Vec<String>,
    /// Print only the best N.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    embeddings: Stage,
}

impl Cli {
    fn pipeline(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(c) = self.composition {
            cfg.composition = c;
        }
        if let Some(s) = self.scheme {
            cfg.retrofit.scheme = s;
        }
        if let Some(s) = self.scorer {
            cfg.scorer = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()
            .with_context(|| format!("{}", self.config.display()))?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::GenerateFixture {
            out,
            fixture_seed,
            items,
            dim,
        } => {
            let opts = fixture::FixtureOptions {
                seed: *fixture_seed,
                items: *items,
                dim: *dim,
                ..Default::default()
            };
            fixture::generate(out, &opts)?;
            println!("wrote fixture to {}", out.display());
            Ok(())
        }
        Command::BuildGraph => commands::build_graph(&cli.pipeline()?),
        Command::Embed => commands::embed(&cli.pipeline()?),
        Command::Retrofit => commands::retrofit(&cli.pipeline()?),
        Command::Evaluate { embeddings } => commands::run_evaluation(&cli.pipeline()?, *embeddings),
        Command::Translate(t) => {
            let args = TranslateArgs {
                sources: t.sources.clone(),
                from: t.from.clone(),
                target_system: t.target_system.clone(),
                target_lang: t.target_lang.clone(),
                targets: t.target.clone(),
                top: t.top,
                embeddings: t.embeddings,
            };
            commands::translate(&cli.pipeline()?, &args)
        }
    }
}

/// Usage errors as one line: the message without the usage block.
fn usage_error(e: &clap::Error) -> String {
    let rendered = e.render().to_string();
    let body: Vec<&str> = rendered
        .lines()
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    body.join(" ").trim_start_matches("error: ").to_owned()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: {}", usage_error(&e));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format(|buf, record| {
            writeln!(
                buf,
                "{}: {}",
                record.level().as_str().to_lowercase(),
                record.args()
            )
        })
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One line, so scripts can parse it.
            let message = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
