//! Command-line entry points.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pagescan_core::eval::{
    run_benchmark, unbounded_analysis, validate_benchmark, Category, MetricsReport, RunOptions, STANDARD_CATEGORY_COUNTS,
};
use pagescan_core::index::{DEFAULT_CANDIDATES, DEFAULT_K};
use pagescan_core::{Catalog, Collection, Metric, MockEmbedder, QueryEmbedding, SearchRequest};

use crate::bench_files::{read_benchmark, read_ground_truth};
use crate::client::{mock_model_id, Embedder, EmbedderConfig, HttpEmbedder};
use crate::format::{self, Manifest};
use crate::ingest::{self, Renderer};
use crate::report;
use crate::server::{self, RegisteredBenchmark, ServerConfig};

#[derive(Parser)]
#[command(name = "pagescan", version, about = "Multi-vector page retrieval: ingest, embed, index, search, evaluate, serve")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize every PDF in a directory to images/<volume>/<page>.png.
    Ingest {
        #[arg(long)]
        pdf_dir: PathBuf,
        #[arg(long, default_value_t = ingest::DEFAULT_DPI)]
        dpi: u32,
        #[arg(long)]
        out: PathBuf,
        /// Renderer executable with pdftoppm-compatible flags.
        #[arg(long, default_value = "pdftoppm")]
        renderer: PathBuf,
    },
    /// Embed page images into an embedding file.
    Embed {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Build a collection snapshot from an embedding file.
    Index {
        #[arg(long)]
        embeddings: Vec<PathBuf>,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "cosine")]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search a collection snapshot with a text query.
    Search {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(short, long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
        candidates: usize,
        /// Print the best patch for every query token.
        #[arg(long)]
        explain: bool,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Check a benchmark and its ground truth for consistency.
    Validate {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Expected category counts: `standard` or e.g. `Visual=9,Textual=14`.
        #[arg(long)]
        expect_counts: Option<String>,
    },
    /// Run the benchmark against one or more collections.
    Bench {
        #[arg(long, required = true)]
        collection: Vec<PathBuf>,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Restrict to categories, comma separated.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<Category>,
        #[arg(short, long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
        candidates: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Rank whole collections and list unjudged pages above a score threshold.
    Tail {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        threshold: f64,
        #[arg(long, value_delimiter = ',')]
        subset: Vec<Category>,
        #[arg(short, long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Collection snapshots to load at startup.
        #[arg(long)]
        collection: Vec<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, requires = "ground_truth")]
        benchmark: Option<PathBuf>,
        #[arg(long, requires = "benchmark")]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Serve the mock embedding model over the embedding-service protocol.
    ServeEmbedder {
        #[arg(long, default_value = "127.0.0.1:8090")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        query_rows: Option<usize>,
    },
}

#[derive(Args, Clone, Debug)]
struct EmbedderArgs {
    /// Use the deterministic mock embedder.
    #[arg(long, conflicts_with = "endpoint")]
    mock: bool,
    /// Mock rows per page.
    #[arg(long, default_value_t = 32)]
    rows: usize,
    /// Mock width; defaults to the collection width, else 16.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Mock rows per query; defaults to the whitespace token count.
    #[arg(long)]
    query_rows: Option<usize>,
    /// Embedding service base URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "")]
    model_id: String,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

impl EmbedderArgs {
    fn mock(&self, default_dims: Option<usize>) -> MockEmbedder {
        let m = MockEmbedder::new(self.rows, self.dims.or(default_dims).unwrap_or(16), self.seed);
        match self.query_rows {
            Some(r) => m.with_query_rows(r),
            None => m,
        }
    }

    async fn build(&self, default_dims: Option<usize>) -> anyhow::Result<Option<Embedder>> {
        if self.mock {
            return Ok(Some(Embedder::Mock(self.mock(default_dims))));
        }
        let Some(endpoint) = &self.endpoint else { return Ok(None) };
        let mut config = EmbedderConfig::new(endpoint.as_str());
        config.model_id = self.model_id.clone();
        config.max_in_flight = self.max_in_flight;
        config.timeout = Duration::from_secs(self.timeout_secs);
        config.retries = self.retries;
        let client = HttpEmbedder::new(config.clone())?;
        config.model_id = client.health().await.with_context(|| format!("embedding service at {endpoint}"))?;
        Ok(Some(Embedder::Http(HttpEmbedder::new(config)?)))
    }

    async fn require(&self, default_dims: Option<usize>) -> anyhow::Result<Embedder> {
        self.build(default_dims).await?.context("an embedder is required: pass --mock or --endpoint URL")
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest { pdf_dir, dpi, out, renderer } => {
            let volumes = ingest::rasterize_dir(&pdf_dir, dpi, &Renderer::new(renderer))?;
            if volumes.is_empty() {
                bail!("no PDF files in {}", pdf_dir.display());
            }
            for pages in &volumes {
                ingest::write_page_images(&out, pages)?;
                println!("{}\t{} pages", pages[0].page().volume_id(), pages.len());
            }
        }
        Command::Embed { images, out, embedder } => {
            let pages = ingest::read_page_images(&images, ingest::DEFAULT_DPI)?;
            if pages.is_empty() {
                bail!("no page images under {}", images.display());
            }
            let embedder = embedder.require(None).await?;
            let entries = embedder.embed_pages(&pages).await?;
            format::write_embedding_file(&out, &entries)?;
            Manifest {
                source: images.display().to_string(),
                dpi: pages.first().map(|p| p.dpi()),
                model: embedder.model_id(),
                created: now(),
                extra: Default::default(),
            }
            .write_for(&out)?;
            println!("embedded {} pages into {}", entries.len(), out.display());
        }
        Command::Index { embeddings, name, metric, out } => {
            let mut entries = Vec::new();
            for path in &embeddings {
                entries.extend(format::read_embedding_file(path)?);
            }
            let Some(first) = entries.first() else { bail!("no embeddings to index") };
            let mut collection = Collection::new(name, metric, first.embedding.dims())?;
            let n = collection.upsert(entries)?;
            format::save_collection(&collection, &out)?;
            println!("indexed {n} pages into `{}` ({metric}, dims {})", collection.name(), collection.dims());
        }
        Command::Search { collection, text, k, candidates, explain, embedder } => {
            let collection = load(&collection)?;
            let embedder = embedder.require(Some(collection.dims())).await?;
            let query = QueryEmbedding::new("query", embedder.embed_text(&text).await?);
            let request = SearchRequest::new(query).with_k(k).with_candidates(candidates).with_explain(explain);
            let ranked = collection.search(&request)?;
            println!("rank\tvolume_id\tpage_number\traw_score\tnormalized_score");
            for e in &ranked.entries {
                println!(
                    "{}\t{}\t{}\t{:.6}\t{:.6}",
                    e.rank,
                    e.page.volume_id(),
                    e.page.page_number(),
                    e.raw_score,
                    e.normalized_score
                );
                if let Some(x) = &e.explanation {
                    for t in &x.per_token {
                        println!("\ttoken {}\tpatch {}\t{:.6}", t.token_index, t.best_patch_index, t.best_similarity);
                    }
                }
            }
        }
        Command::Validate { benchmark, ground_truth, expect_counts } => {
            let queries = read_benchmark(&benchmark)?;
            let gt = read_ground_truth(&ground_truth)?;
            let expected = expect_counts.as_deref().map(parse_counts).transpose()?;
            let report = validate_benchmark(&queries, &gt, expected.as_deref());
            for (c, n) in &report.category_counts {
                println!("{}\t{n}", c.label());
            }
            println!("Total\t{}", report.total_queries);
            for issue in &report.issues {
                println!("{issue}");
            }
            if !report.is_ok() {
                println!("{} issue(s)", report.issues.len());
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Command::Bench { collection, benchmark, ground_truth, subset, k, candidates, out, embedder } => {
            let queries = read_benchmark(&benchmark)?;
            let gt = read_ground_truth(&ground_truth)?;
            let collections = collection.iter().map(|p| load(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let embedder = embedder.require(Some(collections[0].dims())).await?;
            let options = RunOptions { k, candidates, subset: (!subset.is_empty()).then_some(subset) };
            let selected: Vec<_> = queries
                .iter()
                .filter(|q| options.subset.as_ref().is_none_or(|s| s.contains(&q.category)))
                .cloned()
                .collect();
            let embedded = embedder.embed_queries(&selected).await;
            let mut reports: Vec<MetricsReport> = Vec::new();
            for c in &collections {
                let mut r = run_benchmark(c, &queries, &gt, &options, &embedded)?;
                r.metadata.timestamp = Some(now());
                report::write_report(&out, c.name(), &r)?;
                for w in &r.warnings {
                    eprintln!("warning: {}: {w}", c.name());
                }
                reports.push(r);
            }
            let refs: Vec<&MetricsReport> = reports.iter().collect();
            let comparison = report::render_comparison("Benchmark comparison across similarity functions", &refs);
            let path = out.join("comparison.md");
            std::fs::write(&path, &comparison).with_context(|| path.display().to_string())?;
            print!("{comparison}");
        }
        Command::Tail { collection, benchmark, ground_truth, threshold, subset, k, out, embedder } => {
            let queries = read_benchmark(&benchmark)?;
            let gt = read_ground_truth(&ground_truth)?;
            let collection = load(&collection)?;
            let embedder = embedder.require(Some(collection.dims())).await?;
            let options = RunOptions { k, subset: (!subset.is_empty()).then_some(subset), ..RunOptions::default() };
            let embedded = embedder.embed_queries(&queries).await;
            let tail = unbounded_analysis(&collection, &queries, &gt, threshold, &options, &embedded)?;
            report::write_tail_report(&out, &tail)?;
            print!("{}", report::render_candidates(&tail));
            println!("{} of {} queries have unlabeled pages above {threshold}", tail.affected_queries(), tail.per_query.len());
        }
        Command::Serve { addr, collection, images, benchmark, ground_truth, embedder } => {
            let mut catalog = Catalog::new();
            for path in &collection {
                catalog.insert(load(path)?)?;
            }
            let default_dims = catalog.iter().next().map(|c| c.dims());
            let benchmark = match (benchmark, ground_truth) {
                (Some(b), Some(g)) => Some(RegisteredBenchmark { queries: read_benchmark(b)?, ground_truth: read_ground_truth(g)? }),
                _ => None,
            };
            let config = ServerConfig { embedder: embedder.build(default_dims).await?, images, benchmark };
            let app = server::router(server::AppState::new(catalog, config));
            let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("bind {addr}"))?;
            tracing::info!("listening on http://{}", listener.local_addr()?);
            axum::serve(listener, app).await?;
        }
        Command::ServeEmbedder { addr, rows, dims, seed, query_rows } => {
            let mut mock = MockEmbedder::new(rows, dims, seed);
            mock.query_rows = query_rows;
            let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("bind {addr}"))?;
            tracing::info!("mock embedder {} on http://{}", mock_model_id(&mock), listener.local_addr()?);
            axum::serve(listener, crate::embed_server::embedder_router(mock)).await?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &Path) -> anyhow::Result<Collection> {
    Ok(format::load_collection(path)?)
}

fn parse_counts(arg: &str) -> anyhow::Result<Vec<(Category, usize)>> {
    if arg == "standard" {
        return Ok(STANDARD_CATEGORY_COUNTS.to_vec());
    }
    arg.split(',')
        .map(|part| {
            let (c, n) = part.split_once('=').with_context(|| format!("expected Category=count, found `{part}`"))?;
            let c: Category = c.trim().parse().map_err(|_| anyhow::anyhow!("unknown category `{c}`"))?;
            Ok((c, n.trim().parse().with_context(|| format!("bad count `{n}`"))?))
        })
        .collect()
}
