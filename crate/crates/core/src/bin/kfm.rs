use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use keyframe_memory::datagen::{generate_demo_with, write_dataset};
use keyframe_memory::eval::{log_outcome, offline_eval, report, BoundarySpec};
use keyframe_memory::orchestrator::{
    replay_actions, rerun, run_task_paced, EpisodeLog, Event, RunConfig, Virtual, WallClock,
};
use keyframe_memory::policies::{FailureProfile, HlSpec};
use keyframe_memory::simenv::{EpisodeStatus, TaskKind};
use keyframe_memory::weights::{load, merge, save, MergeConfig};

#[derive(Parser)]
#[command(name = "kfm", version, about = "Keyframe-memory policy runner")]
struct Cli {
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run closed-loop episodes and write their logs.
    Run(RunArgs),
    /// Score logs and measure offline subtask accuracy.
    Eval(EvalArgs),
    /// Generate demonstrations and export training prompts.
    Datagen(DatagenArgs),
    /// Interpolate two weight files.
    Merge(MergeArgs),
    /// Re-execute a log and compare final states.
    Replay(ReplayArgs),
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    merge_distance: Option<u64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    max_ticks: Option<u64>,
    #[arg(long)]
    chunk_len: Option<usize>,
    #[arg(long)]
    open_loop_exec: Option<usize>,
    #[arg(long)]
    hl_period_ms: Option<u64>,
    #[arg(long)]
    ll_period_ms: Option<u64>,
    #[arg(long)]
    obs_period_ms: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: TaskKind,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// oracle | none | short | text | noisy:<jitter>
    #[arg(long)]
    hl: Option<HlSpec>,
    /// Probability that a low-level chunk freezes.
    #[arg(long)]
    ll_fail: Option<f64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Pace events in wall-clock time at this speed-up instead of virtual time.
    #[arg(long)]
    realtime: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    logs: PathBuf,
    /// Only logs whose high-level policy has this spec.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    boundary_w: Option<usize>,
    /// Skip the offline accuracy pass.
    #[arg(long)]
    no_offline: bool,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long, default_value_t = 50)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    pre: PathBuf,
    #[arg(long)]
    ft: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Also rebuild the policies and compare the whole log byte for byte.
    #[arg(long)]
    rerun: bool,
}

/// Everything a config file may set.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    run: Option<RunConfig>,
    hl: Option<String>,
    ll_fail: Option<f64>,
    alpha: Option<f64>,
    boundary_w: Option<usize>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config: serde_json::Value,
    seeds: Vec<u64>,
    outputs: Vec<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn apply(mut cfg: RunConfig, o: &Overrides) -> RunConfig {
    let m = &mut cfg.memory;
    m.window_len = o.window.unwrap_or(m.window_len);
    m.merge_distance = o.merge_distance.unwrap_or(m.merge_distance);
    m.cap = o.cap.unwrap_or(m.cap);
    cfg.max_ticks = o.max_ticks.unwrap_or(cfg.max_ticks);
    cfg.chunk_len = o.chunk_len.unwrap_or(cfg.chunk_len);
    cfg.open_loop_exec = o.open_loop_exec.unwrap_or(cfg.open_loop_exec);
    cfg.hl_period_ms = o.hl_period_ms.unwrap_or(cfg.hl_period_ms);
    cfg.ll_period_ms = o.ll_period_ms.unwrap_or(cfg.ll_period_ms);
    cfg.obs_period_ms = o.obs_period_ms.unwrap_or(cfg.obs_period_ms);
    cfg
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)? + "\n")?;
    Ok(())
}

/// Returns whether every episode reached a terminal state.
fn cmd_run(a: RunArgs, file: FileConfig) -> Result<bool> {
    let hl = match (a.hl, &file.hl) {
        (Some(h), _) => h,
        (None, Some(h)) => h.parse().with_context(|| format!("config hl {h:?}"))?,
        (None, None) => "oracle".parse().expect("valid spec"),
    };
    let p = a.ll_fail.or(file.ll_fail).unwrap_or(0.0);
    let base = apply(file.run.unwrap_or_default(), &a.overrides);
    base.validate()?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut all_terminal = true;
    let seeds: Vec<u64> = (a.seed..a.seed + a.count).collect();
    for &seed in &seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        let profile = FailureProfile::uniform(p, seed);
        let ep = match a.realtime {
            Some(speed) => run_task_paced(a.task, hl, profile, &cfg, &mut WallClock::new(speed))?,
            None => run_task_paced(a.task, hl, profile, &cfg, &mut Virtual)?,
        };
        let path = a.out.join(format!("{}-{}-{}.jsonl", a.task.name(), hl.to_string().replace(':', "_"), seed));
        ep.log.write_jsonl(std::io::BufWriter::new(fs::File::create(&path)?))?;
        println!(
            "{}",
            json!({ "task": a.task.name(), "seed": seed, "hl": hl.to_string(), "status": ep.status,
                    "score": ep.score, "total": ep.score.total(), "log": path })
        );
        all_terminal &= ep.status == EpisodeStatus::Terminal;
        outputs.push(path);
    }
    let config = json!({ "run": base, "hl": hl.to_string(), "ll_fail": p, "task": a.task.name() });
    write_manifest(
        &a.out,
        &RunManifest { command: "run", version: env!("CARGO_PKG_VERSION"), config, seeds, outputs },
    )?;
    Ok(all_terminal)
}

fn cmd_eval(a: EvalArgs, file: FileConfig) -> Result<bool> {
    let w = a.boundary_w.or(file.boundary_w).unwrap_or(BoundarySpec::default().half_width);
    let spec = BoundarySpec { half_width: w };
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.logs)
        .with_context(|| format!("reading {}", a.logs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut outcomes = Vec::new();
    let mut offline = Vec::new();
    for path in &paths {
        let log = EpisodeLog::read_jsonl(BufReader::new(fs::File::open(path)?))
            .with_context(|| format!("parsing {}", path.display()))?;
        let Some((method, score)) = log_outcome(&log) else { continue };
        if a.method.as_ref().is_some_and(|m| *m != method) {
            continue;
        }
        if !a.no_offline {
            if let Some(Event::EpisodeStart { task, seed, config, .. }) = log.start() {
                let demo = generate_demo_with(*task, &RunConfig { seed: *seed, ..config.clone() })?;
                let spec_hl: HlSpec = method.parse()?;
                let mut hl = spec_hl.build(*seed);
                let r = offline_eval(&demo, hl.as_mut(), config.memory, spec)?;
                offline
                    .push(json!({ "log": path, "method": method, "trajectory": r.trajectory, "boundary": r.boundary }));
            }
        }
        outcomes.push((method, score));
    }
    let table = report(outcomes.iter().map(|(m, s)| (m.as_str(), *s)));
    print!("{}", table.to_text());
    println!("{}", json!({ "report": table, "boundary_w": w, "offline": offline }));
    Ok(true)
}

fn cmd_datagen(a: DatagenArgs, file: FileConfig) -> Result<bool> {
    let cfg = apply(file.run.unwrap_or_default(), &a.overrides);
    cfg.validate()?;
    let seeds: Vec<u64> = (a.seed..a.seed + a.count).collect();
    let m = write_dataset(&a.out, a.task, &seeds, &cfg)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(true)
}

fn cmd_merge(a: MergeArgs, file: FileConfig) -> Result<bool> {
    let cfg = MergeConfig { alpha: a.alpha.or(file.alpha).unwrap_or(MergeConfig::default().alpha) };
    let merged = merge(&load(&a.pre)?, &load(&a.ft)?, cfg)?;
    save(&merged, &a.out)?;
    println!("{}", json!({ "alpha": cfg.alpha, "entries": merged.len(), "out": a.out }));
    Ok(true)
}

fn cmd_replay(a: ReplayArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.log).with_context(|| format!("reading {}", a.log.display()))?;
    let log = EpisodeLog::from_jsonl(&text)?;
    let r = replay_actions(&log)?;
    let mut identical = r.matches();
    let mut rerun_identical = None;
    if a.rerun {
        let same = rerun(&log)?.to_jsonl() == text;
        identical &= same;
        rerun_identical = Some(same);
    }
    let verdict = if identical { "identical" } else { "differs" };
    println!("{}", json!({ "verdict": verdict, "replay": r, "rerun_identical": rerun_identical }));
    Ok(identical)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = read_config(cli.config.as_deref()).and_then(|file| match cli.cmd {
        Cmd::Run(a) => cmd_run(a, file),
        Cmd::Eval(a) => cmd_eval(a, file),
        Cmd::Datagen(a) => cmd_datagen(a, file),
        Cmd::Merge(a) => cmd_merge(a, file),
        Cmd::Replay(a) => cmd_replay(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
