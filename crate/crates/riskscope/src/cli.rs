use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use riskscope_core::engine::{self, EngineConfig};
use riskscope_core::questionnaire::AssessmentSession;
use riskscope_core::taxonomy::EntityKind;
use riskscope_core::{bundled, Framework};

use crate::app::{self, App};
use crate::sessions;
use crate::view::ApiSessionView;

#[derive(Debug, Parser)]
#[command(
    name = "riskscope",
    version,
    about = "Use-based potential-risk identification for foundation-model applications"
)]
pub struct Cli {
    #[command(flatten)]
    pub packs: PackArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Alternative pack files; each defaults to the bundled one.
#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long, global = true, value_name = "PATH")]
    pub pack: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub questionnaires: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check pack, questionnaire and rule files; one diagnostic per line.
    Validate,
    #[command(subcommand)]
    Session(SessionCommand),
    /// Evaluate a session and render the potential-risk report.
    Assess(AssessArgs),
    #[command(subcommand)]
    Profile(ProfileCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Start a session and make it current.
    New {
        #[arg(long)]
        use_title: String,
    },
    /// Record an answer. Tri-state questions also take "unknown".
    Answer {
        question_id: String,
        value: String,
        #[arg(long)]
        session: Option<String>,
        /// Role answering; defaults to the questionnaire's role.
        #[arg(long)]
        actor: Option<String>,
    },
    /// Print progress, eligible questions and live statuses as JSON.
    Show {
        #[arg(long)]
        session: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Markdown,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long, conflicts_with = "session_file")]
    pub session: Option<String>,
    /// Read a session file instead of the store.
    #[arg(long, value_name = "PATH")]
    pub session_file: Option<PathBuf>,
    /// Extra answers as a JSON object of question id to value, applied in
    /// questionnaire order without touching the stored session.
    #[arg(long, value_name = "PATH")]
    pub answers: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Take timestamps from the session instead of the clock.
    #[arg(long)]
    pub reproducible: bool,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Whether undetermined conditions flag their risk.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub unknown_flags: bool,
}

#[derive(Debug, Subcommand)]
pub enum ProfileCommand {
    /// Save the session's answers for an entity as a reusable profile.
    Save {
        #[arg(long, default_value = "model")]
        kind: EntityKind,
        #[arg(long)]
        entity_id: String,
        #[arg(long)]
        session: Option<String>,
        #[arg(long)]
        actor: Option<String>,
    },
    /// Attach a saved profile to a session.
    Attach {
        #[arg(long, default_value = "model")]
        kind: EntityKind,
        #[arg(long)]
        entity_id: String,
        /// A specific revision; defaults to the latest.
        #[arg(long)]
        hash: Option<String>,
        #[arg(long)]
        session: Option<String>,
    },
    /// List the latest profile of every entity.
    List,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<ExitCode> {
    if let Command::Validate = cli.command {
        return validate(&cli.packs, out);
    }
    let framework = load_framework(&cli.packs)?;
    let home = app::home_from_env();
    let app = App::new(framework, &home);
    match cli.command {
        Command::Validate => unreachable!("handled above"),
        Command::Session(cmd) => session_command(&app, &home, cmd, out)?,
        Command::Assess(args) => assess(&app, &home, &args, out)?,
        Command::Profile(cmd) => profile_command(&app, &home, cmd, out)?,
        Command::Serve { addr } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::api::serve(app, EngineConfig::default(), addr))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_or_bundled(path: Option<&Path>, bundled: &'static str) -> Result<Vec<u8>, String> {
    match path {
        None => Ok(bundled.as_bytes().to_vec()),
        Some(p) => std::fs::read(p).map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn load_framework(packs: &PackArgs) -> anyhow::Result<Framework> {
    let read =
        |p: &Option<PathBuf>, b| read_or_bundled(p.as_deref(), b).map_err(anyhow::Error::msg);
    let pack = read(&packs.pack, bundled::PACK)?;
    let questionnaires = read(&packs.questionnaires, bundled::QUESTIONNAIRES)?;
    let rules = read(&packs.rules, bundled::RULES)?;
    Framework::load(&pack, &questionnaires, &rules).context("loading packs")
}

fn validate(packs: &PackArgs, out: &mut dyn Write) -> anyhow::Result<ExitCode> {
    let files = [
        read_or_bundled(packs.pack.as_deref(), bundled::PACK),
        read_or_bundled(packs.questionnaires.as_deref(), bundled::QUESTIONNAIRES),
        read_or_bundled(packs.rules.as_deref(), bundled::RULES),
    ];
    let unreadable: Vec<&String> = files.iter().filter_map(|f| f.as_ref().err()).collect();
    if !unreadable.is_empty() {
        for msg in unreadable {
            writeln!(out, "{msg}")?;
        }
        return Ok(ExitCode::FAILURE);
    }
    let [pack, questionnaires, rules] = files.map(Result::unwrap);
    match Framework::load_with_diagnostics(&pack, &questionnaires, &rules) {
        Ok(fw) => {
            writeln!(
                out,
                "{} risks, {} questionnaires, {} rules OK",
                fw.pack().risks().len(),
                fw.questionnaires().questionnaires().len(),
                fw.rules().len()
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Err(errors) => {
            for e in errors {
                writeln!(out, "{e}")?;
            }
            Ok(ExitCode::FAILURE)
        }
    }
}

fn current_path(home: &Path) -> PathBuf {
    home.join("current")
}

fn session_id(home: &Path, explicit: Option<String>) -> anyhow::Result<String> {
    if let Some(id) = explicit {
        return Ok(id);
    }
    let path = current_path(home);
    let id = std::fs::read_to_string(&path).with_context(|| {
        format!(
            "no --session given and no current session in {}",
            path.display()
        )
    })?;
    Ok(id.trim().to_owned())
}

fn session_command(
    app: &App,
    home: &Path,
    cmd: SessionCommand,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    match cmd {
        SessionCommand::New { use_title } => {
            let session = app.create_session(&use_title)?;
            crate::fsio::Storage::write_atomic(
                &crate::fsio::Fs,
                &current_path(home),
                session.session_id().as_bytes(),
            )?;
            writeln!(out, "{}", session.session_id())?;
        }
        SessionCommand::Answer {
            question_id,
            value,
            session,
            actor,
        } => {
            let id = session_id(home, session)?;
            let mut session = app.load_session(&id)?;
            app.answer(&mut session, &question_id, &value, actor.as_deref())?;
            let view = ApiSessionView::project(&app.framework, &session, &EngineConfig::default())?;
            let next: Vec<&str> = view
                .eligible_questions
                .iter()
                .map(|q| q.question_id.as_str())
                .collect();
            writeln!(
                out,
                "recorded {question_id}; next: {}",
                if next.is_empty() {
                    "none".into()
                } else {
                    next.join(", ")
                }
            )?;
        }
        SessionCommand::Show { session } => {
            let session = app.load_session(&session_id(home, session)?)?;
            let view = ApiSessionView::project(&app.framework, &session, &EngineConfig::default())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&view)?)?;
        }
    }
    Ok(())
}

fn assess(app: &App, home: &Path, args: &AssessArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut session = match &args.session_file {
        Some(path) => sessions::load_session_file(&app.framework, path)?,
        None => app.load_session(&session_id(home, args.session.clone())?)?,
    };
    if let Some(path) = &args.answers {
        apply_answers_file(&app.framework, &mut session, path, args.reproducible)?;
    }
    let config = EngineConfig::with_unknown_flags(args.unknown_flags);
    let report = app.report(&session, &config, args.reproducible)?;
    let rendered = match args.format {
        Format::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
        Format::Markdown => engine::render_markdown(&report),
    };
    match &args.out {
        Some(path) => {
            crate::fsio::Storage::write_atomic(&crate::fsio::Fs, path, rendered.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?
        }
        None => out.write_all(rendered.as_bytes())?,
    }
    Ok(())
}

fn apply_answers_file(
    framework: &Framework,
    session: &mut AssessmentSession,
    path: &Path,
    reproducible: bool,
) -> anyhow::Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let answers: std::collections::BTreeMap<String, String> =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    for id in answers.keys() {
        if framework.questionnaires().question(id).is_none() {
            bail!("answers file names unknown question `{id}`");
        }
    }
    let at = if reproducible {
        session.last_modified().to_owned()
    } else {
        crate::time::now()
    };
    for (_, q) in framework.questionnaires().all_questions() {
        if let Some(raw) = answers.get(q.id.as_str()) {
            app::apply_answer(framework, session, q.id.as_str(), raw, None, &at)
                .with_context(|| format!("applying answer for {}", q.id))?;
        }
    }
    Ok(())
}

fn profile_command(
    app: &App,
    home: &Path,
    cmd: ProfileCommand,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    match cmd {
        ProfileCommand::Save {
            kind,
            entity_id,
            session,
            actor,
        } => {
            let session = app.load_session(&session_id(home, session)?)?;
            let profile = app.save_profile(&session, kind, &entity_id, actor.as_deref())?;
            writeln!(
                out,
                "{} {} {} ({} answers)",
                kind,
                entity_id,
                profile.profile_hash,
                profile.answers.len()
            )?;
        }
        ProfileCommand::Attach {
            kind,
            entity_id,
            hash,
            session,
        } => {
            let mut session = app.load_session(&session_id(home, session)?)?;
            let attached = app.attach_profile(&mut session, kind, &entity_id, hash.as_deref())?;
            writeln!(
                out,
                "{}",
                if attached {
                    "attached"
                } else {
                    "already attached"
                }
            )?;
        }
        ProfileCommand::List => {
            for e in app.profiles.index()?.entries {
                writeln!(
                    out,
                    "{} {} {} {}",
                    e.entity_kind, e.entity_id, e.profile_hash, e.created_at
                )?;
            }
        }
    }
    Ok(())
}
