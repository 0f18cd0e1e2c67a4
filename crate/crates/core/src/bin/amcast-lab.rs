use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amcast_lab::config::{ProtocolKind, RunConfig, WorkloadKind};
use amcast_lab::runner::{self, RunOutcome};
use amcast_lab::scenarios;
use amcast_lab::trace::{parse_trace, write_trace};
use amcast_lab::verify;

#[derive(Parser)]
#[command(
    name = "amcast-lab",
    version,
    about = "Atomic multicast laboratory: simulate, verify, measure"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a seeded experiment and emit CSV (plus optional traces).
    Run(RunArgs),
    /// Replay the fixed message-pattern walkthroughs and check their
    /// exact delivery orders.
    Scenarios,
    /// Re-check a saved trace file against the delivery properties.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; the flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flexcast, skeen, or hierarchical.
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    /// Preset (o1, o2, t1, t2, t3) or path to an overlay file.
    #[arg(long)]
    overlay: Option<String>,
    /// Latency matrix file; built-in 12-region WAN if absent.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Closed-loop clients per group.
    #[arg(long)]
    clients: Option<u32>,
    /// Fraction of transaction weight kept at the home region [0,1].
    #[arg(long)]
    locality: Option<f64>,
    /// Issuing window in simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Stop after this many client multicasts.
    #[arg(long)]
    max_msgs: Option<u64>,
    /// Seed for the run; repeat the flag for several.
    #[arg(long)]
    seed: Vec<u64>,
    /// Comma-separated seed list (merged with --seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Fraction trimmed from each end of the sorted-by-issue-time
    /// transaction window before computing latency stats.
    #[arg(long)]
    trim: Option<f64>,
    /// Inject a history flush every N client multicasts; 0 disables.
    #[arg(long)]
    flush_every: Option<u64>,
    /// full (tpcc), global-only (tpcc-global), or uniform.
    #[arg(long)]
    workload: Option<WorkloadKind>,
    /// CSV output path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace output path; sweeps write one file per seed as
    /// <path>.<seed>.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Skip the correctness checkers (large sweeps).
    #[arg(long)]
    no_verify: bool,
    /// Client think time between reply and next request, ms.
    #[arg(long)]
    think_ms: Option<f64>,
    /// Uniform latency jitter fraction (still deterministic per seed).
    #[arg(long)]
    jitter: Option<f64>,
    /// Client-to-entry link one-way latency, ms.
    #[arg(long)]
    client_link_ms: Option<f64>,
    /// Probability a payment spans a second warehouse.
    #[arg(long)]
    payment_remote: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trace file produced by `run --trace-out`.
    trace: PathBuf,
    /// Accept minimality violations (tree-relayed traces).
    #[arg(long)]
    waive_minimality: bool,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run(a) => run_main(a),
        Cmd::Scenarios => scenarios_main(),
        Cmd::Verify(a) => verify_main(a),
    }
}

fn build_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("config {}: {}", p.display(), e))?;
            RunConfig::from_toml(&text).map_err(|e| format!("config {}: {}", p.display(), e))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = args.protocol {
        cfg.protocol = v;
    }
    if let Some(v) = &args.overlay {
        cfg.overlay = v.clone();
    }
    if let Some(v) = &args.matrix {
        cfg.matrix = Some(v.clone());
    }
    if let Some(v) = args.clients {
        cfg.clients = v;
    }
    if let Some(v) = args.locality {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("locality: {} is outside [0,1]", v));
        }
        cfg.locality = v;
    }
    if let Some(v) = args.duration {
        cfg.duration_s = Some(v);
    }
    if let Some(v) = args.max_msgs {
        cfg.max_msgs = Some(v);
    }
    if let Some(v) = args.trim {
        if !(0.0..0.5).contains(&v) {
            return Err(format!("trim: {} is outside [0,0.5)", v));
        }
        cfg.trim = v;
    }
    if let Some(v) = args.flush_every {
        cfg.flush_every = v;
    }
    if let Some(v) = args.workload {
        cfg.workload = v;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = &args.trace_out {
        cfg.trace_out = Some(v.clone());
    }
    if args.no_verify {
        cfg.verify = false;
    }
    if let Some(v) = args.think_ms {
        cfg.think_ms = v;
    }
    if let Some(v) = args.jitter {
        cfg.jitter = Some(v);
    }
    if let Some(v) = args.client_link_ms {
        cfg.client_link_ms = v;
    }
    if let Some(v) = args.payment_remote {
        cfg.payment_remote = v;
    }

    // Seed precedence: flags, then AMCAST_LAB_SEED, then config file,
    // then the built-in default.
    let mut flag_seeds = args.seed.clone();
    flag_seeds.extend_from_slice(&args.seeds);
    if !flag_seeds.is_empty() {
        cfg.seeds = flag_seeds;
    } else if let Ok(raw) = std::env::var("AMCAST_LAB_SEED") {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| format!("AMCAST_LAB_SEED: {:?} is not a seed", raw))?;
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn write_outputs(cfg: &RunConfig, out: &RunOutcome) -> Result<(), String> {
    let csv = out.csv(cfg);
    match &cfg.out {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| format!("{}: {}", p.display(), e))?;
            eprintln!("csv: {}", p.display());
        }
        None => print!("{}", csv),
    }
    if let Some(base) = &cfg.trace_out {
        for r in &out.runs {
            let path = if out.runs.len() == 1 {
                base.clone()
            } else {
                let mut s = base.as_os_str().to_owned();
                s.push(format!(".{}", r.seed));
                PathBuf::from(s)
            };
            std::fs::write(&path, write_trace(&r.trace))
                .map_err(|e| format!("{}: {}", path.display(), e))?;
            eprintln!("trace: {}", path.display());
        }
    }
    Ok(())
}

fn run_main(args: RunArgs) -> ExitCode {
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(2);
        }
    };
    let out = match runner::run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(2);
        }
    };
    for r in &out.runs {
        eprintln!(
            "seed {}: {} issued, {} completed, {} transactions in stats",
            r.seed, r.issued, r.completed, r.stats.kept
        );
        let Some(rep) = &r.report else { continue };
        for (name, check) in rep.failures() {
            if name == "minimality" && cfg.protocol == ProtocolKind::Hier {
                eprintln!(
                    "seed {}: minimality {} violations (expected non-genuine)",
                    r.seed, check.violations
                );
                continue;
            }
            eprintln!(
                "seed {}: {} FAILED, {} violations{}",
                r.seed,
                name,
                check.violations,
                check
                    .witness
                    .as_deref()
                    .map(|w| format!(", witness: {}", w))
                    .unwrap_or_default()
            );
        }
    }
    if let Err(e) = write_outputs(&cfg, &out) {
        eprintln!("error: {}", e);
        return ExitCode::from(2);
    }
    if out.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: correctness checks failed");
        ExitCode::FAILURE
    }
}

fn scenarios_main() -> ExitCode {
    let mut ok = true;
    for r in scenarios::run_all() {
        println!("{}: {}", r.name, if r.ok { "ok" } else { "FAIL" });
        if !r.ok {
            eprintln!("{}", r.detail);
            ok = false;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn verify_main(args: VerifyArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {}", args.trace.display(), e);
            return ExitCode::from(2);
        }
    };
    let trace = match parse_trace(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {}", args.trace.display(), e);
            return ExitCode::from(2);
        }
    };
    let n = runner::trace_group_count(&trace);
    let rep = verify::verify(&trace, n);
    for (name, check) in [
        ("validity", &rep.validity),
        ("agreement", &rep.agreement),
        ("integrity", &rep.integrity),
        ("prefix", &rep.prefix),
        ("acyclic", &rep.acyclic),
        ("minimality", &rep.minimality),
    ] {
        if check.ok {
            println!("{}: ok", name);
        } else {
            println!(
                "{}: FAIL ({} violations){}",
                name,
                check.violations,
                check
                    .witness
                    .as_deref()
                    .map(|w| format!(" witness: {}", w))
                    .unwrap_or_default()
            );
        }
    }
    let oh = verify::overhead(&trace, n);
    println!(
        "overhead: {}",
        oh.iter()
            .map(|v| format!("{:.3}", v))
            .collect::<Vec<_>>()
            .join(",")
    );
    let pass = if args.waive_minimality {
        rep.ok_except_minimality()
    } else {
        rep.all_ok()
    };
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
