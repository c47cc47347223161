use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use longdoc_cli::commands::{cmd_preprocess, cmd_report, cmd_run, cmd_split, cmd_synth, RunOverrides};
use longdoc_cli::{CliError, CliResult};
use longdoc_core::corpus::{Format, TaskName};
use longdoc_core::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "longdoc", version, about = "Long-document classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strip footnotes and print token statistics before and after.
    Preprocess {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Footnote rule file, one regex per line.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Write a seeded train/test split as JSON.
    Split {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stratify by the labels of this task.
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskName>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Generate a synthetic corpus with a planted class signal.
    Synth(SynthArgs),
    /// Train and evaluate every strategy in a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskName>,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Render a results CSV as Markdown tables.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML file with synthesis parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the fine,broad ontology CSV here.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    fine_per_class: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Token range `START..END` for the signal; repeatable.
    #[arg(long = "signal", value_parser = parse_range)]
    signal: Vec<(usize, usize)>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long)]
    filler_vocab: Option<usize>,
    #[arg(long)]
    footnote_rate: Option<f64>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: longdoc_core::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<TaskName, String> {
    s.parse().map_err(|e: longdoc_core::Error| e.to_string())
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad start {a:?}"))?,
        b.trim().parse().map_err(|_| format!("bad end {b:?}"))?,
    ))
}

fn synth_spec(args: &SynthArgs) -> CliResult<SynthSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => SynthSpec::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$( if let Some(v) = args.$field { spec.$field = v; } )*};
    }
    set!(seed, classes, fine_per_class, docs, min_len, max_len, filler_vocab, footnote_rate);
    if let Some(c) = args.copies {
        spec.signal_copies = c;
    }
    if !args.signal.is_empty() {
        spec.signal_ranges = args.signal.clone();
    }
    Ok(spec)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess { input, out, rules, format } => {
            let format = format.unwrap_or_else(|| Format::from_path(&input));
            let summary = cmd_preprocess(&input, format, rules.as_deref(), &out)?;
            print!("{}", summary.table());
        }
        Command::Split { input, out, fraction, seed, task, format } => {
            let format = format.unwrap_or_else(|| Format::from_path(&input));
            let plan = cmd_split(&input, format, fraction, seed, task, &out)?;
            println!("train {} / test {}", plan.train_ids.len(), plan.test_ids.len());
        }
        Command::Synth(args) => {
            let spec = synth_spec(&args)?;
            let n = cmd_synth(&spec, &args.out, args.ontology.as_deref())?;
            println!("wrote {n} documents to {}", args.out.display());
        }
        Command::Run { config, seed, out, task, format } => {
            let overrides = RunOverrides { seed, output: out, task, format };
            let rows = cmd_run(&config, &overrides)?;
            print!("{}", longdoc_cli::report::render_markdown(&rows));
        }
        Command::Report { results, out } => {
            let md = cmd_report(&results)?;
            match out {
                Some(path) => std::fs::write(&path, md)
                    .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?,
                None => print!("{md}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as configuration errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
