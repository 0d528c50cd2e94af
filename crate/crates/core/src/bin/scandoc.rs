use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use scandoc::deid::{deidentify_report, LookupTable, MissingLookupPolicy};
use scandoc::eval::{evaluate, write_comparisons_csv};
use scandoc::image_prep::{apply_recipe, GrayImage, PrepRecipe};
use scandoc::ocr::{load_word_table, overlay_path, render_overlay, run_ocr, write_word_table, CommandEngine};
use scandoc::pipeline::{run_ablation, DatasetSplit, run_experiment, ExperimentConfig, ModelConfig, RunOptions, RunRecord};
use scandoc::segment::{assign_labels, build_instances, write_instances_csv, DEFAULT_EPSILON, DEFAULT_RADIUS};
use scandoc::synth::{read_manifest, write_corpus, SynthConfig};
use scandoc::{Error, GoldRecord, Result};

#[derive(Parser)]
#[command(name = "scandoc", version, about = "Extract AHI and SaO2 values from scanned sleep-study reports")]
struct Cli {
    /// Experiment (or, for `synth`, corpus) configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the working directory in the configuration.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Re-run completed runs.
    #[arg(long, global = true)]
    force: bool,
    /// Concurrent runs in an ablation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Draw train-size subsets independently rather than nested.
    #[arg(long, global = true)]
    independent_subsets: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (word tables, manifest, lookup).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_reports: Option<usize>,
        #[arg(long)]
        noise_rate: Option<f64>,
    },
    /// Apply a preprocessing recipe to a page image.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "gray")]
        recipe: PrepRecipe,
    },
    /// OCR a page image into a word table (engine from SCANDOC_OCR_CMD).
    Ocr {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "gray")]
        recipe: PrepRecipe,
        #[arg(long, default_value_t = 1)]
        page: u32,
        /// Also write a box overlay next to the input.
        #[arg(long)]
        overlay: bool,
    },
    /// Scrub names, MRNs and dates from a report's word tables.
    Deid {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report_id: String,
        #[arg(long)]
        lookup: Option<PathBuf>,
        /// Fail when the report has no lookup row.
        #[arg(long)]
        strict: bool,
    },
    /// Emit the candidate instance table of one report.
    Segment {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report_id: String,
        #[arg(long, num_args = 0..)]
        gold_ahi: Vec<f64>,
        #[arg(long, num_args = 0..)]
        gold_sao2: Vec<f64>,
    },
    /// Run one experiment end to end.
    Train,
    /// Re-score a completed run at another confidence level.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Run the ablation batch described by the config.
    Ablate,
    /// Print the stored report of a run or ablation directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        if let ModelConfig::Neural { train, .. } = &mut config.model {
            train.seed = seed;
        }
    }
    if let Some(w) = &cli.workdir {
        config.paths.workdir = w.clone();
    }
    if cli.independent_subsets {
        config.split.independent_subsets = true;
    }
    config.validate()?;
    Ok(config)
}

fn run_options(cli: &Cli) -> Result<RunOptions> {
    let engine = CommandEngine::from_env()?;
    let tag = std::iter::once(engine.program.clone())
        .chain(engine.extra_args.iter().cloned())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(RunOptions {
        force: cli.force,
        engine: Some(Arc::new(engine)),
        engine_tag: tag,
    })
}

fn load_pages(inputs: &[PathBuf]) -> Result<Vec<scandoc::ocr::PageWords>> {
    let mut pages = Vec::new();
    for p in inputs {
        pages.extend(load_word_table(p)?);
    }
    Ok(pages)
}

fn print_record(record: &RunRecord) {
    println!("run {} ({}) in {}", record.run_id, record.model, record.run_dir.display());
    if let Some(m) = &record.metrics {
        print!("{}", m.to_text());
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth {
            out,
            n_reports,
            noise_rate,
        } => {
            let mut config = match &cli.config {
                Some(p) => serde_json::from_str::<SynthConfig>(&fs::read_to_string(p)?)?,
                None => SynthConfig::default(),
            };
            if let Some(n) = n_reports {
                config.n_reports = *n;
            }
            if let Some(r) = noise_rate {
                config.noise_rate = *r;
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            fs::create_dir_all(out)?;
            let entries = write_corpus(&config, out)?;
            println!("{} reports written to {}", entries.len(), out.display());
        }
        Command::Preprocess { input, output, recipe } => {
            apply_recipe(&GrayImage::load(input)?, *recipe).save(output)?;
        }
        Command::Ocr {
            input,
            output,
            recipe,
            page,
            overlay,
        } => {
            let prepared = apply_recipe(&GrayImage::load(input)?, *recipe);
            let words = run_ocr(&prepared, *page, &CommandEngine::from_env()?)?;
            fs::write(output, write_word_table(std::slice::from_ref(&words)))?;
            if *overlay {
                render_overlay(&prepared, &words).save(&overlay_path(input))?;
            }
            println!("{} words", words.words.len());
        }
        Command::Deid {
            input,
            output,
            report_id,
            lookup,
            strict,
        } => {
            let table = match lookup {
                Some(p) => LookupTable::load(p)?,
                None => LookupTable::default(),
            };
            let policy = if *strict {
                MissingLookupPolicy::Strict
            } else {
                MissingLookupPolicy::Lenient
            };
            let pages = deidentify_report(report_id, &load_pages(input)?, &table, policy)?;
            fs::write(output, write_word_table(&pages))?;
        }
        Command::Segment {
            input,
            output,
            report_id,
            gold_ahi,
            gold_sao2,
        } => {
            let pages = load_pages(input)?;
            let (instances, dropped) = build_instances(report_id, &pages, DEFAULT_RADIUS);
            let gold = GoldRecord {
                report_id: report_id.clone(),
                ahi_values: gold_ahi.clone(),
                sao2_values: gold_sao2.clone(),
            };
            let (instances, collisions) = assign_labels(instances, &gold, DEFAULT_EPSILON);
            write_instances_csv(&instances, fs::File::create(output)?)?;
            println!(
                "{} instances, {} unparseable, {} label collisions",
                instances.len(),
                dropped.len(),
                collisions.len()
            );
        }
        Command::Train => {
            let config = experiment_config(cli)?;
            print_record(&run_experiment(&config, &run_options(cli)?)?);
        }
        Command::Evaluate { run, level } => {
            let record = RunRecord::load(run)?;
            let scored = record.load_scores()?;
            let split: DatasetSplit = serde_json::from_str(&fs::read_to_string(run.join("split.json"))?)?;
            let test = split.test;
            let gold: Vec<GoldRecord> = read_manifest(&record.config.paths.manifest)?
                .into_iter()
                .filter(|e| test.contains(&e.report_id))
                .map(|e| e.gold())
                .collect();
            print!("{}", evaluate(&scored, &gold, *level)?.to_text());
        }
        Command::Ablate => {
            let config = experiment_config(cli)?;
            let out = run_ablation(&config, &run_options(cli)?, cli.jobs)?;
            for (label, r) in out.labels.iter().zip(&out.runs) {
                println!("== {label}");
                print_record(r);
            }
            let mut csv = Vec::new();
            write_comparisons_csv(&out.comparisons, &mut csv)?;
            println!("== comparisons ({})", out.dir.display());
            print!("{}", String::from_utf8_lossy(&csv));
        }
        Command::Report { dir } => report(dir)?,
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let comparisons = dir.join("comparisons.csv");
    if comparisons.exists() {
        print!("{}", fs::read_to_string(comparisons)?);
        return Ok(());
    }
    print_record(&RunRecord::load(dir)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
