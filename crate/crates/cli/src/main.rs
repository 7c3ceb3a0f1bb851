//! `talkspell`: acquaint objects, talk to them, and run scripted sessions.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use talkspell::backends::BackendKind;
use talkspell::clock::{SharedClock, SystemClock, VirtualClock};
use talkspell::config::{Config, ConfigError};
use talkspell::devsim::{SceneRenderer, SceneScript, VirtualScope, WandScript};
use talkspell::orchestrator::{
    acquaint_scene_objects, simulate, AcquaintOptions, ApiServer, CycleOutcome, Session, SessionError,
    TypedMicrophone,
};
use talkspell::persona::Language;
use talkspell::protocol::{FrameSource, TcpFrameClient};
use talkspell::vision::{evaluate_stream, STANDARD_EVAL_FRAMES};

#[derive(Parser, Debug)]
#[command(name = "talkspell", version, about = "Give everyday objects a voice")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Route every capability to `mock` or `http`.
    #[arg(long, global = true, value_parser = ["mock", "http"])]
    backends: Option<String>,
    /// Base URL for HTTP backends.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Workspace directory holding profiles, histories and the model.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Meet a new object: collect frames, register it and give it a persona.
    Acquaint {
        /// Scope address (`host:port`) or a scene script (`*.json`).
        #[arg(long)]
        source: String,
        #[arg(long, value_parser = ["en", "zh"])]
        language: Option<String>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Talk to an object by typing; each line is one press of the wand.
    Talk {
        /// Class id or label; defaults to the only registered object.
        #[arg(long)]
        profile: Option<String>,
        /// Directory for reply clips.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted session and write transcript, clips and metrics.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        wand: PathBuf,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
    },
    /// Continuous-detection report over a scripted scene.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        /// Class id or label of the object in the scene.
        #[arg(long)]
        truth: String,
        #[arg(long, default_value_t = STANDARD_EVAL_FRAMES)]
        frames: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Scope address or scene script feeding the session.
        #[arg(long)]
        source: Option<String>,
        /// Directory for reply clips.
        #[arg(long)]
        audio_dir: Option<PathBuf>,
    },
    /// Inspect or edit personas.
    Persona {
        #[command(subcommand)]
        action: PersonaCmd,
    },
}

#[derive(Subcommand, Debug)]
enum PersonaCmd {
    Show {
        profile: String,
    },
    Edit {
        profile: String,
        /// `field=value`; repeatable.
        #[arg(long = "set", value_name = "K=V", required = true)]
        set: Vec<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(g: &Global) -> Result<Config, Failure> {
    let mut cfg = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(kind) = &g.backends {
        let kind: BackendKind = kind.parse().map_err(|e: talkspell::backends::BackendError| Failure::Usage(e.to_string()))?;
        cfg.set_all_backends(kind, None);
    }
    if let Some(endpoint) = &g.endpoint {
        cfg.set("endpoint", endpoint)?;
    }
    if let Some(root) = &g.root {
        cfg.root = root.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_session(cfg: &Config, clock: SharedClock) -> Result<Session, Failure> {
    let caps = cfg.capabilities(Arc::clone(&clock))?;
    Ok(Session::open(&cfg.root, caps, clock, cfg.session_config())?)
}

fn open_source(spec: &str, seed: u64) -> Result<Box<dyn FrameSource>, Failure> {
    if spec.ends_with(".json") || Path::new(spec).is_file() {
        let scene = SceneScript::load(Path::new(spec)).map_err(|e| Failure::Usage(e.to_string()))?;
        let renderer = SceneRenderer::new(scene, seed).map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(Box::new(VirtualScope::new(renderer)))
    } else {
        Ok(Box::new(TcpFrameClient::new(spec)))
    }
}

fn resolve_profile(session: &Session, spec: Option<&str>) -> Result<u32, Failure> {
    let registry = session.registry();
    if registry.is_empty() {
        return Err(SessionError::NoProfiles.into());
    }
    match spec {
        None if registry.len() == 1 => Ok(*registry.profiles.keys().next().unwrap()),
        None => Err(Failure::Usage(format!(
            "{} objects are registered; pick one with --profile",
            registry.len()
        ))),
        Some(s) => match s.parse::<u32>() {
            Ok(id) if registry.contains(id) => Ok(id),
            Ok(id) => Err(SessionError::UnknownProfile(id).into()),
            Err(_) => registry
                .by_label(s)
                .map(|p| p.class_id)
                .ok_or_else(|| Failure::Runtime(format!("no object labelled `{s}`"))),
        },
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Cmd::Acquaint { source, language, label } => {
            let clock = SystemClock::shared();
            let mut session = open_session(&cfg, clock)?;
            let language: Language = match language {
                Some(l) => l.parse().map_err(|e: talkspell::persona::PersonaError| Failure::Usage(e.to_string()))?,
                None => cfg.language,
            };
            let mut options = AcquaintOptions::new(language, cfg.seed);
            options.label = label;
            let mut src = open_source(&source, cfg.seed)?;
            let done = session.acquaint(&mut src, &options)?;
            println!(
                "registered class {} `{}` as {} ({}, voice {})",
                done.profile.class_id,
                done.profile.label,
                done.persona.name,
                done.persona.language,
                done.persona.voice.as_str()
            );
            println!("{}", done.persona.to_pretty_json());
        }
        Cmd::Talk { profile, out } => {
            let audio_dir = out.unwrap_or_else(|| cfg.root.join("talk"));
            let mut config = cfg.session_config();
            config.audio_dir = Some(audio_dir.clone());
            let clock = SystemClock::shared();
            let caps = cfg.capabilities(Arc::clone(&clock))?;
            let mut session = Session::open(&cfg.root, caps, clock, config)?;
            let class_id = resolve_profile(&session, profile.as_deref())?;
            let persona = session.force_active(class_id)?;
            println!("talking to {} (type a line and press Enter; Ctrl-D ends)", persona.name);
            let mut mic = TypedMicrophone::default();
            let stdin = io::stdin();
            for line in stdin.lock().lines() {
                let line = line.map_err(runtime)?;
                if line.trim().is_empty() {
                    continue;
                }
                match session.say(&line, &mut mic) {
                    Ok(Some(CycleOutcome::Completed(r))) => {
                        println!("{}: {}", r.object_name, r.segments.join(" "));
                        println!("  ({} clips in {}, rtf {:.3})", r.segments.len(), audio_dir.display(), r.total_rtf);
                    }
                    Ok(_) => println!("  (nothing heard)"),
                    Err(e) => eprintln!("  cycle failed: {e}"),
                }
                let _ = session.force_active(class_id);
                io::stdout().flush().map_err(runtime)?;
            }
        }
        Cmd::Simulate { scene, wand, out } => {
            let scene_script = SceneScript::load(&scene).map_err(|e| Failure::Usage(e.to_string()))?;
            let wand_script = WandScript::load(&wand).map_err(|e| Failure::Usage(e.to_string()))?;
            let clock: SharedClock = Arc::new(VirtualClock::new());
            let caps = cfg.capabilities(clock)?;
            let report = simulate(&scene_script, &wand_script, cfg.seed, caps, &cfg.root, &out, cfg.session_config())?;
            print!("{}", report.transcript);
            println!("{} cycles; outputs in {}", report.cycles.len(), out.display());
        }
        Cmd::Eval { scene, truth, frames, out } => {
            let scene_script = SceneScript::load(&scene).map_err(|e| Failure::Usage(e.to_string()))?;
            let virtual_clock = Arc::new(VirtualClock::new());
            let mut session = open_session(&cfg, virtual_clock.clone())?;
            acquaint_scene_objects(&mut session, &scene_script, cfg.seed)?;
            let truth = resolve_profile(&session, Some(&truth))?;
            let renderer = SceneRenderer::new(scene_script, cfg.seed).map_err(runtime)?;
            let mut scope = VirtualScope::new(renderer);
            let model = session.model().ok_or(SessionError::NoProfiles)?;
            let report = evaluate_stream(
                &mut scope,
                model,
                truth,
                frames,
                cfg.confidence_threshold,
                session.capabilities().detector.as_ref(),
                virtual_clock.as_ref(),
            )
            .map_err(runtime)?;
            let text = report.to_kv();
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(&path, &text).map_err(runtime)?;
            }
        }
        Cmd::Serve { bind, source, audio_dir } => {
            let clock = SystemClock::shared();
            let caps = cfg.capabilities(Arc::clone(&clock))?;
            let mut config = cfg.session_config();
            config.audio_dir = Some(audio_dir.unwrap_or_else(|| cfg.root.join("serve-audio")));
            let session = Session::open(&cfg.root, caps, clock, config)?;
            let frames = source.map(|s| open_source(&s, cfg.seed)).transpose()?;
            let server = ApiServer::spawn(session, &bind, frames, Duration::from_millis(50)).map_err(runtime)?;
            println!("session API listening on {}", server.local_addr());
            server.wait();
        }
        Cmd::Persona { action } => {
            let mut session = open_session(&cfg, SystemClock::shared())?;
            match action {
                PersonaCmd::Show { profile } => {
                    let id = resolve_profile(&session, Some(&profile))?;
                    println!("{}", session.workspace().persona(id)?.to_pretty_json());
                }
                PersonaCmd::Edit { profile, set } => {
                    let id = resolve_profile(&session, Some(&profile))?;
                    let mut overrides = BTreeMap::new();
                    for kv in set {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| Failure::Usage(format!("--set expects K=V, got `{kv}`")))?;
                        overrides.insert(k.trim().to_string(), v.to_string());
                    }
                    let persona = session.edit_persona(id, &overrides)?;
                    println!("{}", persona.to_pretty_json());
                }
            }
        }
    }
    Ok(())
}
