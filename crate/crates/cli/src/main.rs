//! `tap`: ingest trajectories, learn thresholds, label behaviors and search
//! the labels.

mod config;
mod error;
mod report;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tap_core::actions::Level;
use tap_core::optimizer::optimize_all;
use tap_core::partition::{build_distributions, Channel};
use tap_core::pipeline::run_pipeline;
use tap_core::sdl::{parse_jsonl, to_sdl, write_jsonl, SdlLabel};
use tap_core::search::{find_unique, search, stats, LabeledCorpus, Reference, SearchQuery};
use tap_core::synth::{assemble, generate_with, plan_corpus};
use tap_core::trajectory::{export, ingest_with, Corpus, Format, IngestOptions, DEFAULT_SAMPLE_RATE_HZ};
use tap_core::ThresholdSet;

use config::RunConfig;
use error::{from_ingest, invalid, read_text, write_bytes, CliError};

#[derive(Parser)]
#[command(name = "tap", version, about = "Label vehicle trajectories with hierarchical driving actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat dotted key/value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Read JSONL or CSV trajectories into a binary corpus.
    Ingest {
        path: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Rate assumed when rows carry no timestamps.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: f64,
    },
    /// Learn partition thresholds from a corpus.
    Optimize {
        corpus: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Threshold file to write; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of J per epoch for the winning seed of each channel.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for one J-vs-epoch SVG per channel.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Label every trajectory of a corpus.
    Label {
        corpus: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, default_value = "action")]
        level: Level,
        /// Label JSONL to write; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Records similar to a reference behavior.
    Search {
        labels: PathBuf,
        /// Label file holding one record, or `scenario_id:vehicle_id`.
        #[arg(long = "ref")]
        reference: String,
        #[arg(long, default_value_t = 0.0)]
        dsim: f64,
        #[arg(long, default_value = "action")]
        level: Level,
        /// Print hits as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Records whose behavior no other record shares.
    Unique {
        labels: PathBuf,
        #[arg(long, default_value = "action")]
        level: Level,
    },
    /// Label frequencies and signature histogram.
    Stats {
        labels: PathBuf,
        /// Defaults to the level the labels were written at.
        #[arg(long)]
        level: Option<Level>,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic corpus with ground-truth labels.
    Synth {
        /// Corpus mix config (`synth.*` keys plus thresholds).
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus file; `.csv`, `.bin` or JSONL by extension.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth label JSONL.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "action")]
        truth_level: Level,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn out_format(path: &Path) -> Option<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Some(Format::Csv),
        Some("jsonl") | Some("json") => Some(Format::Jsonl),
        _ => None,
    }
}

/// Binary snapshot, or JSONL/CSV by extension.
fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    match out_format(path) {
        Some(format) => ingest_with(path, format, IngestOptions::default()).map_err(|e| from_ingest(path, e)),
        None => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            Corpus::from_bytes(&bytes).map_err(|e| from_ingest(path, e))
        }
    }
}

fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CliError> {
    match out_format(path) {
        Some(format) => {
            let mut buf = Vec::new();
            export(corpus, format, &mut buf).map_err(|e| from_ingest(path, e))?;
            write_bytes(path, &buf)
        }
        None => write_bytes(path, &corpus.to_bytes()),
    }
}

fn load_labels(path: &Path) -> Result<Vec<SdlLabel>, CliError> {
    parse_jsonl(&read_text(path)?).map_err(invalid)
}

fn labeled_corpus(path: &Path, level: Level) -> Result<LabeledCorpus, CliError> {
    LabeledCorpus::from_labels(level, load_labels(path)?).map_err(invalid)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::invalid("ThreadPool", e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { path, format, out, sample_rate } => {
            let corpus = ingest_with(&path, format, IngestOptions { default_sample_rate_hz: sample_rate }).map_err(|e| from_ingest(&path, e))?;
            write_bytes(&out, &corpus.to_bytes())?;
            println!("ingested {} trajectories, {} frames -> {}", corpus.len(), corpus.total_frames(), out.display());
        }
        Command::Optimize { corpus, config, out, trace, plot } => {
            let rc = RunConfig::resolve(config.config.as_deref(), &config.set)?;
            let corpus = load_corpus(&corpus)?;
            let dists = build_distributions(&corpus).map_err(invalid)?;
            let result = optimize_all(&dists, &rc.optimizer).map_err(invalid)?;
            let text = result.thresholds().to_config_string();
            if let Some(path) = &trace {
                write_bytes(path, &report::trace_csv(&result).map_err(|e| CliError::io(path, e))?)?;
            }
            if let Some(dir) = &plot {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                for c in Channel::ALL {
                    write_bytes(&dir.join(format!("{}.svg", c.key())), report::convergence_svg(result.get(c)).as_bytes())?;
                }
            }
            match &out {
                Some(path) => {
                    write_bytes(path, text.as_bytes())?;
                    print!("{}", report::optimize_table(&result));
                }
                None => print!("{text}"),
            }
        }
        Command::Label { corpus, thresholds, level, out, jobs, config } => {
            let mut rc = RunConfig::resolve(config.config.as_deref(), &config.set)?;
            rc.pipeline.thresholds = ThresholdSet::from_config_str(&read_text(&thresholds)?).map_err(invalid)?;
            let corpus = load_corpus(&corpus)?;
            let labels: Vec<SdlLabel> = pool(jobs)?.install(|| {
                corpus
                    .trajectories
                    .par_iter()
                    .map(|t| {
                        let levels = run_pipeline(t, &rc.pipeline).map_err(|e| {
                            CliError::invalid("Pipeline", format!("{}:{}: {e}", t.scenario_id, t.vehicle_id))
                        })?;
                        Ok(to_sdl(levels.get(level), &t.scenario_id, &t.vehicle_id))
                    })
                    .collect::<Result<_, CliError>>()
            })?;
            emit(out.as_deref(), &write_jsonl(&labels))?;
            if let Some(path) = &out {
                println!("labeled {} trajectories at level {level} -> {}", labels.len(), path.display());
            }
        }
        Command::Search { labels, reference, dsim, level, json } => {
            let corpus = labeled_corpus(&labels, level)?;
            let reference = if Path::new(&reference).is_file() {
                let mut refs = load_labels(Path::new(&reference))?;
                if refs.len() != 1 {
                    return Err(CliError::usage(format!("reference file must hold exactly one record, found {}", refs.len())));
                }
                Reference::Label(refs.remove(0))
            } else {
                let (s, v) = reference
                    .split_once(':')
                    .ok_or_else(|| CliError::usage(format!("--ref `{reference}` is neither a file nor scenario_id:vehicle_id")))?;
                Reference::Record((s.to_string(), v.to_string()))
            };
            let hits = search(&corpus, &SearchQuery { reference, d_sim: dsim, level }).map_err(invalid)?;
            if json {
                println!("{}", serde_json::to_string(&hits).expect("hits serialize"));
            } else {
                print!("{}", report::hits_table(&hits));
                println!("{} matches at d_sim {dsim}, level {level}", hits.len());
                if hits.is_empty() && dsim == 0.0 {
                    println!("unique: no other record shares this behavior");
                }
            }
        }
        Command::Unique { labels, level } => {
            let corpus = labeled_corpus(&labels, level)?;
            let ids = find_unique(&corpus);
            for (s, v) in &ids {
                println!("{s}:{v}");
            }
            println!("count: {} of {} records", ids.len(), corpus.len());
        }
        Command::Stats { labels, level, json } => {
            let records = load_labels(&labels)?;
            let level = level.or_else(|| records.iter().map(|r| r.level).min()).unwrap_or(Level::Action);
            let corpus = LabeledCorpus::from_labels(level, records).map_err(invalid)?;
            let st = stats(&corpus);
            if json {
                println!("{}", serde_json::to_string(&st).expect("stats serialize"));
            } else {
                print!("{}", report::stats_report(&st));
            }
        }
        Command::Synth { scripts, n, seed, out, truth, truth_level, jobs, set } => {
            let mut rc = RunConfig::resolve(scripts.as_deref(), &set)?;
            if let Some(n) = n {
                rc.synth.n = n;
            }
            if let Some(seed) = seed {
                rc.synth.seed = seed;
            }
            let spec = rc.synth;
            let scripts = plan_corpus(&spec).map_err(invalid)?;
            let generated = pool(jobs)?.install(|| {
                scripts.par_iter().map(|s| generate_with(s, &spec.pipeline, spec.sample_rate_hz)).collect::<Result<Vec<_>, _>>()
            });
            let synth = assemble(&spec, scripts, generated.map_err(invalid)?).map_err(invalid)?;
            save_corpus(&synth.corpus, &out)?;
            if let Some(path) = &truth {
                let labels: Vec<SdlLabel> = synth.generated.iter().map(|g| g.truth_label(truth_level)).collect();
                write_bytes(path, write_jsonl(&labels).as_bytes())?;
            }
            println!(
                "generated {} trajectories, {} frames, {} with a unique behavior -> {}",
                synth.corpus.len(),
                synth.corpus.total_frames(),
                synth.unique.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("{}", CliError::usage(message.join(" ")).to_json());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
