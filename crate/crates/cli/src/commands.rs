use std::fmt::Display;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mailtriage_core::corpus::{write_atomic, CategoryRegistry, CorpusStore, IngestFormat};
use mailtriage_core::eval::{render_report, run_grid, synth_corpus, GridConfig, ReportFormat};
use mailtriage_core::features::build_relevancy;
use mailtriage_core::learners::{ClassifierSpec, Family};
use mailtriage_core::pipeline::Classifier;
use mailtriage_core::stp::{extract, ExtractionResult, Mode, Resources};
use mailtriage_service::{build_state, Config, RelearnRequest};
use serde_json::json;

use crate::{Cli, Command, Global, TextInput};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    fn usage(message: impl Display) -> Self {
        Self::new("usage", message)
    }

    pub fn exit_code(&self) -> u8 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }

    pub fn to_json_line(&self) -> String {
        json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

trait Kind<T> {
    fn kind(self, kind: &'static str) -> Result<T, CliError>;
}

impl<T, E: Display> Kind<T> for Result<T, E> {
    fn kind(self, kind: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(kind, e))
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn parse<T: std::str::FromStr>(what: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse().map_err(|e| CliError::usage(format!("--{what}: {e}")))
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::usage(format!("no such file or directory: {}", path.display())))
    }
}

struct Ctx {
    config: Config,
    resources: Arc<Resources>,
}

impl Ctx {
    fn new(g: &Global) -> Result<Self> {
        if let Some(p) = &g.config {
            existing(p)?;
        }
        let mut config = Config::load(g.config.as_deref()).kind("config")?;
        if let Some(s) = g.seed {
            config.seed = s;
        }
        if let Some(s) = &g.store {
            config.store = s.clone();
        }
        if let Some(r) = &g.resources {
            config.resources = Some(existing(r)?.to_path_buf());
        }
        let resources = match &config.resources {
            Some(dir) => Arc::new(Resources::load_dir(dir).kind("resources")?),
            None => Resources::builtin(),
        };
        Ok(Self { config, resources })
    }

    fn mode(&self, flag: &Option<String>) -> Result<Mode> {
        flag.as_deref().map_or(Ok(self.config.mode), |m| parse("mode", m))
    }

    fn family(&self, flag: &Option<String>) -> Result<Family> {
        flag.as_deref().map_or(Ok(self.config.family), |f| parse("family", f))
    }

    fn open_store(&self) -> Result<CorpusStore> {
        CorpusStore::open(&self.config.store).kind("store")
    }

    fn model_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.config.model.clone())
            .ok_or_else(|| CliError::usage("no model path: pass --model or set `model` in the config"))
    }
}

fn spec_with(family: Family, seed: u64, params: &[String]) -> Result<ClassifierSpec> {
    let mut spec = ClassifierSpec::new(family, seed);
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--param expects KEY=VALUE, got `{p}`")))?;
        spec = spec.with_param(k.trim(), v.trim()).map_err(CliError::usage)?;
    }
    spec.params.validate().map_err(CliError::usage)?;
    Ok(spec)
}

fn read_text(input: &TextInput) -> Result<String> {
    if let Some(t) = &input.text {
        return Ok(t.clone());
    }
    match input.file.as_deref() {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(existing(p)?).kind("io"),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).kind("io")?;
            Ok(s)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).kind("io")?;
    writeln!(out).kind("io")
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Ingest { input, format, categories } => {
            let format: IngestFormat = match format {
                Some(f) => parse("format", &f)?,
                None => match input.extension().and_then(|e| e.to_str()) {
                    Some("csv") => IngestFormat::Csv,
                    _ => IngestFormat::Jsonl,
                },
            };
            existing(&input)?;
            let mut store = ctx.open_store()?;
            if let Some(path) = categories {
                let reg = CategoryRegistry::load(existing(&path)?).kind("store")?;
                for c in reg.iter() {
                    store.upsert_category(c.clone()).kind("store")?;
                }
            }
            let report = store.ingest(&input, format).kind("store")?;
            print_json(&report)
        }
        Command::Stats { min_docs } => {
            let store = ctx.open_store()?;
            print_json(&store.stats(min_docs.unwrap_or(ctx.config.min_docs)).kind("store")?)
        }
        Command::Extract { mode, input } => {
            let mode = ctx.mode(&mode)?;
            let text = read_text(&input)?;
            print_json(&extract(&text, mode, &ctx.resources))
        }
        Command::BuildFeatures { mode, top_k, min_docs, out } => {
            let mode = ctx.mode(&mode)?;
            let snap = ctx.open_store()?.snapshot(min_docs.unwrap_or(ctx.config.min_docs)).kind("store")?;
            let extracted: Vec<ExtractionResult> =
                snap.documents().iter().map(|d| extract(&d.text, mode, &ctx.resources)).collect();
            let labels = snap.documents().iter().map(|d| d.category_id.as_deref().unwrap_or(""));
            let rv = build_relevancy(extracted.iter().zip(labels), top_k.unwrap_or(ctx.config.top_k)).kind("features")?;
            write_atomic(&out, rv.to_json().as_bytes()).kind("io")?;
            print_json(&json!({
                "out": out,
                "mode": rv.mode,
                "features": rv.len(),
                "categories": rv.per_category_top.len(),
                "fingerprint": rv.fingerprint(),
            }))
        }
        Command::Train { mode, family, params, top_k, min_docs, out } => {
            let mode = ctx.mode(&mode)?;
            let spec = spec_with(ctx.family(&family)?, ctx.config.seed, &params)?;
            let out = ctx.model_path(&out)?;
            let snap = ctx.open_store()?.snapshot(min_docs.unwrap_or(ctx.config.min_docs)).kind("store")?;
            let classifier = Classifier::train(&snap, mode, &spec, top_k.unwrap_or(ctx.config.top_k), &ctx.resources)
                .kind("train")?;
            write_atomic(&out, &classifier.to_bytes()).kind("io")?;
            print_json(&json!({
                "out": out,
                "mode": mode,
                "family": spec.family(),
                "documents": snap.len(),
                "categories": snap.categories().len(),
                "features": classifier.relevancy.len(),
                "fingerprint": classifier.relevancy.fingerprint(),
            }))
        }
        Command::Predict { model, input, top, json } => {
            let path = ctx.model_path(&model)?;
            let bytes = std::fs::read(existing(&path)?).kind("io")?;
            let classifier = Classifier::from_bytes(&bytes).kind("model")?;
            let text = read_text(&input)?;
            if text.trim().is_empty() {
                return Err(CliError::new("input", "text is empty"));
            }
            let ranked = classifier.classify(&text, &ctx.resources).kind("predict")?;
            let top = ranked.top(top);
            if json {
                return print_json(&top);
            }
            let mut out = std::io::stdout().lock();
            for (i, r) in top.iter().enumerate() {
                writeln!(out, "{}\t{}\t{:.6}", i + 1, r.category, r.score).kind("io")?;
            }
            Ok(())
        }
        Command::Evaluate {
            preset,
            modes,
            families,
            params,
            folds,
            top_k,
            min_docs,
            format,
            out,
        } => {
            let format: ReportFormat = parse("format", &format)?;
            let seed = ctx.config.seed;
            let mut grid = GridConfig::full(seed);
            grid.n_folds = folds.unwrap_or(ctx.config.folds);
            grid.top_k = top_k.unwrap_or(ctx.config.top_k);
            if !modes.is_empty() {
                grid.modes = modes.iter().map(|m| parse("modes", m)).collect::<Result<_>>()?;
            }
            if !families.is_empty() {
                let fams: Vec<Family> = families.iter().map(|f| parse("families", f)).collect::<Result<_>>()?;
                grid.specs = fams.iter().map(|&f| ClassifierSpec::new(f, seed)).collect();
            }
            for p in &params {
                let (fam, rest) = p
                    .split_once('.')
                    .ok_or_else(|| CliError::usage(format!("--param expects FAMILY.KEY=VALUE, got `{p}`")))?;
                let fam: Family = parse("param", fam)?;
                let spec = grid
                    .specs
                    .iter_mut()
                    .find(|s| s.family() == fam)
                    .ok_or_else(|| CliError::usage(format!("--param names {fam}, which is not in the grid")))?;
                *spec = spec_with(fam, seed, &[rest.to_string()])
                    .map(|s| ClassifierSpec { params: s.params, ..spec.clone() })?;
            }
            let min_docs = min_docs.unwrap_or(ctx.config.min_docs);
            let store = match &preset {
                Some(name) => synth_corpus(name, seed).map_err(CliError::usage)?.store(),
                None => ctx.open_store()?,
            };
            let stats = store.stats(min_docs).kind("store")?;
            let snap = store.snapshot(min_docs).kind("store")?;
            let report = run_grid(&snap, stats.coverage, &grid, &ctx.resources).kind("evaluate")?;
            if let Some(out) = out {
                write_atomic(&out, &render_report(&report, format)).kind("io")?;
            }
            std::io::stdout()
                .write_all(&render_report(&report, ReportFormat::Text))
                .kind("io")
        }
        Command::Synth { preset, out } => {
            let corpus = synth_corpus(&preset, ctx.config.seed).map_err(CliError::usage)?;
            std::fs::create_dir_all(&out).kind("io")?;
            if out.join("documents.jsonl").exists() {
                return Err(CliError::new("io", format!("{} already holds a store", out.display())));
            }
            write_atomic(&out.join("categories.jsonl"), corpus.categories_jsonl().as_bytes()).kind("io")?;
            write_atomic(&out.join("documents.jsonl"), corpus.documents_jsonl().as_bytes()).kind("io")?;
            print_json(&json!({
                "out": out,
                "preset": preset,
                "seed": ctx.config.seed,
                "categories": corpus.categories.len(),
                "documents": corpus.documents.len(),
            }))
        }
        Command::Serve { bind, port, model } => {
            let mut config = ctx.config.clone();
            if let Some(b) = bind {
                config.bind = b;
            }
            if let Some(p) = port {
                config.port = p;
            }
            if model.is_some() {
                config.model = model;
            }
            let addr = format!("{}:{}", config.bind, config.port);
            let state = Arc::new(build_state(config).kind("serve")?);
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.kind("serve")?;
                eprintln!("listening on http://{}", listener.local_addr().kind("serve")?);
                mailtriage_service::serve(state, listener).await.kind("serve")
            })
        }
        Command::Relearn { url, model, mode, family, params, min_docs } => {
            let mut p = std::collections::BTreeMap::new();
            for kv in &params {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| CliError::usage(format!("--param expects KEY=VALUE, got `{kv}`")))?;
                p.insert(k.trim().to_string(), v.trim().to_string());
            }
            let body = json!({
                "min_docs": min_docs,
                "mode": mode,
                "family": family,
                "params": p,
                "seed": ctx.config.seed,
            });
            let rt = runtime()?;
            if let Some(url) = url {
                let out: serde_json::Value = rt.block_on(async move {
                    let r = reqwest::Client::new()
                        .post(format!("{}/admin/relearn", url.trim_end_matches('/')))
                        .json(&body)
                        .send()
                        .await
                        .kind("http")?;
                    let ok = r.status().is_success();
                    let v: serde_json::Value = r.json().await.kind("http")?;
                    if ok {
                        Ok(v)
                    } else {
                        Err(CliError::new("relearn", v["error"]["message"].as_str().unwrap_or("request failed")))
                    }
                })?;
                return print_json(&out);
            }
            let mut config = ctx.config.clone();
            config.model = Some(ctx.model_path(&model)?);
            let req: RelearnRequest = serde_json::from_value(body).kind("relearn")?;
            let state = Arc::new(build_state(config).kind("relearn")?);
            let outcome = rt.block_on(state.relearn(req)).kind("relearn")?;
            print_json(&outcome)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().kind("runtime")
}
