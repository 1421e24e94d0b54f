//! `ari`: dissect, convert, diff, fuzz and summarize ARI traces.

use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ari_toolkit::defs::{diff_registries, emit_wireshark_dissector, load_registry, DefinitionRegistry};
use ari_toolkit::dissect::{Dissector, Selector, SubDissector};
use ari_toolkit::fuzz::{generate_campaign, write_campaign, CampaignConfig, CorpusEntry, Order, Strategy};
use ari_toolkit::ingest::{export_pcap, load_trace, save_trace, LoadedTrace, TraceFormat, TraceRecord};
use ari_toolkit::packet::{parse_packet, ParseMode};
use ari_toolkit::stats::{group_histogram, ngram_rarity_score, subsample_indices, DEFAULT_NGRAM, DEFAULT_RARITY};

#[derive(Parser)]
#[command(name = "ari", version, about = "Toolkit for Apple Remote Invocation baseband traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print an annotated field tree for every packet in a trace.
    Dissect(DissectArgs),
    /// Convert a trace to pcap (link type USER0).
    ExportPcap(ConvertArgs),
    /// Convert a trace to a corpus directory, or to the format implied by `--out`.
    Import(ConvertArgs),
    /// Compare two definition files.
    DefsDiff(DiffArgs),
    /// Write a Wireshark Lua dissector for a definition file.
    EmitDissector(EmitArgs),
    /// Generate a deterministic fuzz campaign from a corpus.
    Fuzz(FuzzArgs),
    /// Trace statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Hex,
    Pcap,
    Dir,
    Raw,
}

impl From<InputFormat> for TraceFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Hex => TraceFormat::Hex,
            InputFormat::Pcap => TraceFormat::Pcap,
            InputFormat::Dir => TraceFormat::Dir,
            InputFormat::Raw => TraceFormat::Raw,
        }
    }
}

#[derive(Args)]
struct TraceInput {
    /// Trace file or corpus directory.
    #[arg(long = "in", value_name = "TRACE")]
    input: PathBuf,
    /// Skip format detection.
    #[arg(long, value_enum)]
    input_format: Option<InputFormat>,
}

impl TraceInput {
    fn load(&self) -> Result<LoadedTrace> {
        let trace = load_trace(&self.input, self.input_format.map(Into::into))?;
        if trace.skipped > 0 {
            let what = if trace.format == TraceFormat::Raw { "bytes" } else { "lines" };
            eprintln!("{}: skipped {} {what} without a packet", self.input.display(), trace.skipped);
        }
        Ok(trace)
    }
}

#[derive(Args)]
struct DissectArgs {
    #[arg(long)]
    defs: PathBuf,
    #[command(flatten)]
    trace: TraceInput,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
    /// Fail on the first packet that does not parse cleanly.
    #[arg(long)]
    strict: bool,
    /// TLV name whose value is decoded as an SMS-DELIVER TPDU.
    #[arg(long, default_value = "sms_pdu")]
    sms_tlv: String,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    trace: TraceInput,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiffArgs {
    old: PathBuf,
    new: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    defs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Bitflip,
    Tlv,
    Replay,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Bitflip => Strategy::Bitflip,
            StrategyArg::Tlv => Strategy::TlvAware,
            StrategyArg::Replay => Strategy::CorpusReplayMutate,
        }
    }
}

#[derive(Args)]
struct FuzzArgs {
    /// Seed packets: a corpus directory or any trace file.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: u64,
    /// Probability that a packet is mutated.
    #[arg(long)]
    rate: Option<f64>,
    /// Bit flips per mutated packet.
    #[arg(long)]
    flips: Option<u32>,
    /// Leave the 12-byte header alone (tlv and replay strategies).
    #[arg(long)]
    preserve_header: bool,
    /// Visit the corpus in a seeded shuffle instead of cyclically.
    #[arg(long)]
    unordered: bool,
    /// Definitions whose TLV type ids seed type substitution.
    #[arg(long)]
    defs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Keep the packets with the most corpus-rare byte n-grams.
    Subsample(SubsampleArgs),
    /// Packet counts per message group.
    Groups(GroupsArgs),
}

#[derive(Args)]
struct SubsampleArgs {
    #[command(flatten)]
    trace: TraceInput,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_NGRAM)]
    ngram: usize,
    /// Corpus-wide count at or below which an n-gram is rare.
    #[arg(long, default_value_t = DEFAULT_RARITY)]
    rarity: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroupsArgs {
    #[command(flatten)]
    trace: TraceInput,
    #[arg(long)]
    defs: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

/// ANSI styling for text output, off when stdout is not a terminal or
/// `NO_COLOR` is set.
#[derive(Clone, Copy)]
struct Style {
    enabled: bool,
}

impl Style {
    fn detect() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Style { enabled: !no_color && io::stdout().is_terminal() }
    }

    fn paint(self, code: &str, text: &str) -> String {
        if self.enabled {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

fn read_defs(path: &Path) -> Result<DefinitionRegistry> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_registry(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn dissect(args: &DissectArgs, style: Style) -> Result<()> {
    let reg = read_defs(&args.defs)?;
    let trace = args.trace.load()?;
    let mut dissector = Dissector::new();
    dissector.register_subdissector(SubDissector::sms_deliver(Selector::tlv_name(&args.sms_tlv)))?;
    let mode = if args.strict { ParseMode::Strict } else { ParseMode::Lenient };

    let mut failures = 0;
    let mut docs = Vec::new();
    let mut out = io::stdout().lock();
    for r in &trace.records {
        let parsed = parse_packet(&r.bytes, mode);
        if args.strict {
            if let Err(e) = &parsed {
                bail!("packet {}: {e}", r.index);
            }
        }
        let tree = parsed.as_ref().map(|p| dissector.dissect(p, &reg));
        if tree.is_err() {
            failures += 1;
        }
        match args.format {
            OutputFormat::Json => docs.push(match &tree {
                Ok(t) => json!({ "index": r.index, "timestamp_us": r.timestamp_us, "direction": r.direction, "tree": t }),
                Err(e) => json!({ "index": r.index, "timestamp_us": r.timestamp_us, "direction": r.direction,
                                  "error": e.to_string(), "bytes": hex::encode(&r.bytes) }),
            }),
            OutputFormat::Text => {
                let mut heading = format!("#{}", r.index);
                if let Some(d) = r.direction {
                    heading.push_str(&format!(" {}", serde_json::to_value(d)?.as_str().unwrap_or_default()));
                }
                if let Some(ts) = r.timestamp_us {
                    heading.push_str(&format!(" t={ts}us"));
                }
                writeln!(out, "{}", style.paint("1", &heading))?;
                match &tree {
                    Ok(t) => write!(out, "{}", t.render_text())?,
                    Err(e) => writeln!(out, "{} {}", style.paint("31", &format!("unparseable: {e}")), hex::encode(&r.bytes))?,
                }
            }
        }
    }
    if matches!(args.format, OutputFormat::Json) {
        drop(out);
        print_json(&docs)?;
    }
    if failures > 0 {
        eprintln!("{failures} of {} packets failed to parse", trace.records.len());
    }
    Ok(())
}

fn export(args: &ConvertArgs) -> Result<()> {
    let trace = args.trace.load()?;
    let bytes = export_pcap(&trace.records)?;
    fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} packets to {}", trace.records.len(), args.out.display());
    Ok(())
}

fn import(args: &ConvertArgs) -> Result<()> {
    let trace = args.trace.load()?;
    let format = save_trace(&args.out, &trace.records)?;
    eprintln!("wrote {} packets to {} ({format:?})", trace.records.len(), args.out.display());
    Ok(())
}

fn defs_diff(args: &DiffArgs, style: Style) -> Result<()> {
    let report = diff_registries(&read_defs(&args.old)?, &read_defs(&args.new)?);
    match args.format {
        OutputFormat::Json => print_json(&report),
        OutputFormat::Text => {
            let mut out = io::stdout().lock();
            for line in report.to_string().lines() {
                let painted = match line.as_bytes().first() {
                    Some(b'+') => style.paint("32", line),
                    Some(b'-') => style.paint("31", line),
                    Some(b'~' | b'*') => style.paint("33", line),
                    _ => line.to_string(),
                };
                writeln!(out, "{painted}")?;
            }
            Ok(())
        }
    }
}

fn emit(args: &EmitArgs) -> Result<()> {
    let script = emit_wireshark_dissector(&read_defs(&args.defs)?);
    fs::write(&args.out, script).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn fuzz(args: &FuzzArgs) -> Result<()> {
    let trace = load_trace(&args.corpus, None)?;
    let corpus: Vec<Vec<u8>> = trace.records.iter().map(|r| r.bytes.clone()).collect();
    let entries = trace.records.iter().map(|r| CorpusEntry::new(format!("packet {}", r.index), &r.bytes)).collect();
    let reg = args.defs.as_deref().map(read_defs).transpose()?;

    let mut cfg = CampaignConfig::new(args.seed, args.strategy.into(), args.count);
    if let Some(rate) = args.rate {
        cfg.mutation_rate = rate;
    }
    if let Some(flips) = args.flips {
        cfg.flips_per_packet = flips;
    }
    cfg.preserve_header = args.preserve_header;
    if args.unordered {
        cfg.order = Order::Unordered;
    }
    let cases = generate_campaign(&corpus, &cfg, reg.as_ref())?;
    let manifest = write_campaign(&args.out, &cfg, entries, cases)?;
    eprintln!("wrote {} cases to {}", manifest.cases.len(), args.out.display());
    Ok(())
}

fn subsample(args: &SubsampleArgs) -> Result<()> {
    let trace = args.trace.load()?;
    let packets: Vec<&[u8]> = trace.records.iter().map(|r| r.bytes.as_slice()).collect();
    let scores = ngram_rarity_score(&packets, args.ngram, args.rarity)?;
    let kept: Vec<TraceRecord> = subsample_indices(&scores, args.n)?
        .into_iter()
        .enumerate()
        .map(|(index, i)| TraceRecord { index, ..trace.records[i].clone() })
        .collect();
    save_trace(&args.out, &kept)?;
    eprintln!("kept {} of {} packets", kept.len(), trace.records.len());
    Ok(())
}

fn groups(args: &GroupsArgs) -> Result<()> {
    let reg = read_defs(&args.defs)?;
    let trace = args.trace.load()?;
    let packets: Vec<&[u8]> = trace.records.iter().map(|r| r.bytes.as_slice()).collect();
    let hist = group_histogram(&packets, &reg);
    match args.format {
        OutputFormat::Json => print_json(&hist),
        OutputFormat::Text => {
            let width = hist.buckets.iter().map(|b| b.name.len()).max().unwrap_or(0).max("group".len());
            let mut out = io::stdout().lock();
            writeln!(out, "{:<width$} {:>8} {:>7}", "group", "packets", "share")?;
            for b in &hist.buckets {
                let share = 100.0 * b.count as f64 / hist.total.max(1) as f64;
                writeln!(out, "{:<width$} {:>8} {:>6.1}%", b.name, b.count, share)?;
            }
            writeln!(out, "{:<width$} {:>8}", "total", hist.total)?;
            writeln!(out, "{} groups cover 95% of packets", hist.coverage_95)?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let style = Style::detect();
    match cli.command {
        Command::Dissect(a) => dissect(&a, style),
        Command::ExportPcap(a) => export(&a),
        Command::Import(a) => import(&a),
        Command::DefsDiff(a) => defs_diff(&a, style),
        Command::EmitDissector(a) => emit(&a),
        Command::Fuzz(a) => fuzz(&a),
        Command::Stats(StatsCommand::Subsample(a)) => subsample(&a),
        Command::Stats(StatsCommand::Groups(a)) => groups(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into `head` and the like.
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
