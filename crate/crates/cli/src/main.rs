use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use npc_gateway::{AppState, SegmentationSource, ServerConfig};
use npc_spatial::chat::mock::ScriptedBackend;
use npc_spatial::chat::{run_ablation, write_transcripts, BackendKind, Clock, FixedClock, SystemClock};
use npc_spatial::direction::SectorCount;
use npc_spatial::panorama::{HttpSegmentation, DEFAULT_SEGMENTATION_TIMEOUT};
use npc_spatial::radial::DEFAULT_RADIUS_M;
use npc_spatial::{load_scene_file, preset, ChatSession, ContextPipeline, LlmBackendConfig};
use tokio::io::{AsyncBufReadExt, BufReader};

#[derive(Parser)]
#[command(name = "npc-spatial", version, about = "Spatial context and chat for game NPCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Print the composed context for a scene and preset.
    Context(ContextArgs),
    /// Talk to the NPC on stdin/stdout; EOF ends the session.
    Chat(ChatArgs),
    /// Run every preset over a query list and write one transcript per preset.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Mock,
    Http,
}

#[derive(Args)]
struct BackendArgs {
    /// Completion backend; mock unless a config file says otherwise.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Base URL of an OpenAI-compatible API, e.g. https://api.openai.com/v1
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Q:/A: script of canned replies for the mock backend.
    #[arg(long)]
    script: Option<PathBuf>,
}

impl BackendArgs {
    fn apply(&self, cfg: &mut LlmBackendConfig) -> Result<()> {
        match self.backend {
            Some(BackendChoice::Mock) => cfg.kind = BackendKind::Mock,
            Some(BackendChoice::Http) => cfg.kind = BackendKind::Http,
            None => {}
        }
        if let Some(v) = &self.llm_endpoint {
            cfg.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.llm_model {
            cfg.model = Some(v.clone());
        }
        if let Some(v) = &self.api_key_env {
            cfg.api_key_env = v.clone();
        }
        if let Some(v) = self.timeout_secs {
            cfg.timeout_secs = v;
        }
        if let Some(path) = &self.script {
            let text = read(path)?;
            cfg.script = ScriptedBackend::parse_script(&text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        }
        cfg.validate()?;
        Ok(())
    }

    fn config(&self) -> Result<LlmBackendConfig> {
        let mut cfg = LlmBackendConfig::default();
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Support prompt file; defaults to the bundled quest-giver prompt.
    #[arg(long)]
    prompt: Option<PathBuf>,
    /// Query radius in metres.
    #[arg(long, default_value_t = DEFAULT_RADIUS_M)]
    radius: f64,
    /// Tagging service base URL; without it the scene's tag fixture is used.
    #[arg(long)]
    tagger: Option<String>,
}

impl PipelineArgs {
    fn pipeline(&self) -> Result<ContextPipeline> {
        let mut p = ContextPipeline {
            radius_m: self.radius,
            ..ContextPipeline::default()
        };
        if let Some(path) = &self.prompt {
            p.support_prompt = read(path)?;
        }
        if let Some(url) = &self.tagger {
            p.segmentation = Arc::new(HttpSegmentation::new(url.clone(), DEFAULT_SEGMENTATION_TIMEOUT));
        }
        Ok(p)
    }
}

fn parse_sectors(s: &str) -> Result<SectorCount, String> {
    let n: u8 = s.parse().map_err(|_| format!("expected 4, 8 or 16, got {s:?}"))?;
    SectorCount::try_from(n).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    preset: u8,
    /// Replace raw vectors with 4, 8 or 16 direction sectors.
    #[arg(long, value_parser = parse_sectors)]
    quantize: Option<SectorCount>,
    /// Express directions from the player's side.
    #[arg(long)]
    player_view: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

impl SessionArgs {
    fn config(&self) -> Result<npc_spatial::AblationConfig> {
        let mut config = preset(self.preset)?;
        config.quantize_directions = self.quantize;
        config.pre_flip_to_player = self.player_view;
        Ok(config)
    }
}

#[derive(Args)]
struct ServeArgs {
    /// Key-value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    tagger: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ContextArgs {
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct ChatArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// One player message per line; blank lines are skipped.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stamp every message with this RFC 3339 time, for reproducible output.
    #[arg(long, value_parser = parse_time)]
    fixed_time: Option<DateTime<Utc>>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_scene(path: &Path) -> Result<npc_spatial::Scene> {
    Ok(load_scene_file(path)?)
}

async fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    if let Some(v) = args.scenes {
        cfg.scenes_dir = v;
    }
    if let Some(v) = args.host {
        cfg.host = v;
    }
    if let Some(v) = args.port {
        cfg.port = v;
    }
    if let Some(url) = args.tagger {
        cfg.segmentation = SegmentationSource::Http {
            url,
            timeout: DEFAULT_SEGMENTATION_TIMEOUT,
        };
    }
    args.backend.apply(&mut cfg.backend)?;
    let state = Arc::new(AppState::from_config(&cfg)?);
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", cfg.host, cfg.port))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot bind {addr}"))?;
    eprintln!(
        "listening on http://{} ({} scenes)",
        listener.local_addr()?,
        state.scenes.len()
    );
    npc_gateway::serve(state, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

async fn context(args: ContextArgs) -> Result<()> {
    let scene = load_scene(&args.session.scene)?;
    let config = args.session.config()?;
    let (bundle, _) = args.session.pipeline.pipeline()?.build(&scene, &config).await?;
    print!("{}", bundle.text());
    Ok(())
}

async fn chat(args: ChatArgs) -> Result<()> {
    let scene = load_scene(&args.session.scene)?;
    let config = args.session.config()?;
    let backend = args.backend.config()?.build()?;
    let pipeline = args.session.pipeline.pipeline()?;
    let mut session = ChatSession::create(&scene, config, backend, &pipeline).await?;
    let interactive = std::io::stdin().is_terminal();
    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    loop {
        if interactive {
            eprint!("> ");
        }
        let Some(line) = lines.next_line().await? else {
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        match session.send_player_message(&line).await {
            Ok(reply) => println!("{}", reply.content),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    session.end();
    eprintln!("session ended");
    Ok(())
}

async fn ablate(args: AblateArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let queries: Vec<String> = read(&args.queries)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let backend = args.backend.config()?.build()?;
    let pipeline = args.pipeline.pipeline()?;
    let clock: Arc<dyn Clock> = match args.fixed_time {
        Some(t) => Arc::new(FixedClock(t)),
        None => Arc::new(SystemClock),
    };
    let run = run_ablation(&scene, &queries, backend, &pipeline, clock).await?;
    let paths = write_transcripts(&args.out, &run.transcripts)?;
    for p in &paths {
        println!("{}", p.display());
    }
    if let Some((preset, err)) = run.failure {
        bail!("preset {preset} failed: {err} ({} transcripts written)", paths.len());
    }
    Ok(())
}

/// Like `Cli::parse`, but every flag error also shows the usage line.
fn parse_args() -> Result<Cli, ExitCode> {
    Cli::try_parse().map_err(|e| {
        if !e.use_stderr() {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        let mut text = e.render().to_string();
        if !text.contains("Usage:") {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(sub) => sub.render_usage().to_string(),
                None => cmd.render_usage().to_string(),
            };
            text = format!("{}\n\n{usage}\n", text.trim_end());
        }
        eprint!("{text}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = rt.block_on(async {
        match cli.command {
            Command::Serve(a) => serve(a).await,
            Command::Context(a) => context(a).await,
            Command::Chat(a) => chat(a).await,
            Command::Ablate(a) => ablate(a).await,
        }
    });
    rt.shutdown_timeout(Duration::from_secs(1));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // many causes already embed their source in their own message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
