use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use careerlink::corpus::{load_corpus, FrequencyTables, MedianBasis, Source};
use careerlink::disambig::{disambiguate, write_careers, DisambigOptions, ScoringScheme, SchemeId};
use careerlink::econometrics::Column;
use careerlink::pipeline::{
    disambig_stage, estimate_stage, ingest_stage, link_stage, run_pipeline, sensitivity_stage, survival_stage,
    treat_stage, with_workers, workers_from_env, EstimateSpec, PipelineConfig, PipelineError,
};
use careerlink::synth::{self, DgpSpec, LinkageCorpusSpec};

#[derive(Parser)]
#[command(name = "careerlink", version, about = "Inventor-career linkage and IV estimation pipeline")]
struct Cli {
    /// Worker threads; overrides CAREERLINK_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the number of bootstrap replicates.
    #[arg(long)]
    bootstrap_reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate both patent corpora.
    Ingest(ConfigArgs),
    /// Disambiguate inventor mentions into careers.
    ///
    /// With --config, runs the pipeline stage. With --input, scores a single
    /// corpus file and prints every pair's score breakdown.
    Disambig {
        #[arg(long, short, conflicts_with = "input")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        input: Option<PathBuf>,
        /// gdr1989, dpma, gdr1980-abstract, or a scoring-table CSV path.
        #[arg(long, default_value = "gdr1989")]
        scheme: String,
        /// Schema of --input; defaults to the scheme's source.
        #[arg(long)]
        source: Option<SourceArg>,
        /// Write careers here instead of only printing them.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link GDR to DPMA careers and build outcome rows.
    Link(ConfigArgs),
    /// Build treatments and instruments per career.
    Treat(ConfigArgs),
    /// Run one estimation and print the table.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        spec: SpecArg,
    },
    /// Reduced-form sensitivity analysis.
    Sensitivity(ConfigArgs),
    /// Kaplan-Meier curve of GDR careers.
    Survival {
        #[command(flatten)]
        config: ConfigArgs,
        /// Careers with a filing in this year or later are censored.
        #[arg(long)]
        censor_from: Option<i32>,
    },
    /// Write synthetic inputs with known ground truth.
    Synth {
        /// Spec file (TOML); defaults apply to omitted keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for a pipeline fixture, or CSV file for --dgp.
        #[arg(long)]
        out: PathBuf,
        /// Emit an estimator design instead of a pipeline fixture.
        #[arg(long, value_enum)]
        dgp: Option<DgpArg>,
        /// Bootstrap replicates written into the fixture config.
        #[arg(long, default_value_t = 300)]
        bootstrap_reps: usize,
    },
    /// Run every stage and write the run manifest.
    Run(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Gdr,
    Dpma,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecArg {
    Table2,
    Table3,
    FirstStage,
    Counts,
    Summary,
}

impl From<SpecArg> for EstimateSpec {
    fn from(s: SpecArg) -> Self {
        match s {
            SpecArg::Table2 => EstimateSpec::Table2,
            SpecArg::Table3 => EstimateSpec::Table3,
            SpecArg::FirstStage => EstimateSpec::FirstStage,
            SpecArg::Counts => EstimateSpec::Counts,
            SpecArg::Summary => EstimateSpec::Summary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    Iv,
    Selection,
    Count,
}

fn config(args: &ConfigArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::from_path(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = &args.output_dir {
        cfg.output_dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
    }
    if let Some(r) = args.bootstrap_reps {
        cfg.estimation.bootstrap_reps = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn data_err(stage: &'static str) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Data { stage, message }
}

fn standalone_disambig(
    input: &Path,
    scheme: &str,
    source: Option<SourceArg>,
    out: Option<&Path>,
) -> Result<(), PipelineError> {
    let (scheme, default_source) = match scheme.parse::<SchemeId>() {
        Ok(id) => {
            let src = if id == SchemeId::DpmaPost90 { Source::Dpma } else { Source::Gdr };
            (ScoringScheme::by_id(id).map_err(config_err)?, src)
        }
        Err(_) if Path::new(scheme).is_file() => {
            let f = fs::File::open(scheme).map_err(config_err)?;
            (ScoringScheme::from_csv(f).map_err(config_err)?, Source::Gdr)
        }
        Err(e) => return Err(config_err(e)),
    };
    let source = match source {
        Some(SourceArg::Gdr) => Source::Gdr,
        Some(SourceArg::Dpma) => Source::Dpma,
        None => default_source,
    };
    let records = load_corpus(input, source).map_err(|e| data_err("disambig")(e.to_string()))?;
    let tables = FrequencyTables::build(&records, MedianBasis::DistinctValues).map_err(|e| data_err("disambig")(e.to_string()))?;
    let result = disambiguate(&records, &scheme, &tables, &DisambigOptions { id_prefix: "C".into() })
        .map_err(|e| data_err("disambig")(e.to_string()))?;

    let mut stdout = std::io::stdout().lock();
    for p in &result.pairs {
        let items: Vec<String> = p.breakdown.iter().map(|(c, pts)| format!("{c}={pts}")).collect();
        let verdict = if p.total >= scheme.threshold { "match" } else { "no match" };
        let _ = writeln!(stdout, "{} ~ {}: {} ({}) [{}]", p.record_a, p.record_b, p.total, verdict, items.join(", "));
    }
    for c in &result.careers {
        let members: Vec<String> = c.members.iter().map(ToString::to_string).collect();
        let _ = writeln!(stdout, "{} {}: {}", c.career_id, c.name_key.normalized, members.join(" "));
    }
    if let Some(path) = out {
        let f = fs::File::create(path).map_err(|e| data_err("disambig")(e.to_string()))?;
        write_careers(f, &result.careers).map_err(|e| data_err("disambig")(e.to_string()))?;
    }
    Ok(())
}

fn write_columns(path: &Path, cols: &[&Column]) -> Result<(), PipelineError> {
    let mut text = cols.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(",");
    text.push('\n');
    let n = cols.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = cols.iter().map(|c| c.values[i].to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| data_err("synth")(e.to_string()))
}

fn synth_cmd(spec: Option<&Path>, seed: Option<u64>, out: &Path, dgp: Option<DgpArg>, reps: usize) -> Result<(), PipelineError> {
    let text = match spec {
        Some(p) => fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    match dgp {
        None => {
            let mut s = LinkageCorpusSpec::from_toml(&text).map_err(config_err)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let cfg = synth::write_pipeline_fixture(out, &s, reps).map_err(|e| data_err("synth")(e.to_string()))?;
            println!("{}", cfg.display());
        }
        Some(kind) => {
            let mut s = DgpSpec::from_toml(&text).map_err(config_err)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            match kind {
                DgpArg::Iv | DgpArg::Count => {
                    let dm = if matches!(kind, DgpArg::Iv) { synth::gen_iv_dgp(&s) } else { synth::gen_count_dgp(&s) }
                        .map_err(config_err)?;
                    let mut cols = vec![&dm.outcome];
                    cols.extend(dm.treatments.iter().chain(&dm.instruments).chain(&dm.controls));
                    write_columns(out, &cols)?;
                }
                DgpArg::Selection => {
                    let h = synth::gen_selection_dgp(&s).map_err(config_err)?;
                    let s_col = Column::new("s", h.selected.iter().map(|&b| f64::from(u8::from(b))).collect());
                    let mut cols = vec![&s_col, &h.outcome, &h.treatment, &h.instrument, &h.exclusion];
                    cols.extend(&h.controls);
                    write_columns(out, &cols)?;
                }
            }
        }
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(a) => {
            for r in ingest_stage(&config(&a)?)? {
                println!("{}: {} records, {} mentions, {}-{}", r.sample, r.records, r.mentions, r.first_year, r.last_year);
            }
        }
        Command::Disambig { config: Some(path), .. } => {
            let args = ConfigArgs { config: path, seed: None, output_dir: None, bootstrap_reps: None };
            let c = disambig_stage(&config(&args)?)?;
            println!("{} GDR careers, {} DPMA careers, {} history careers", c.gdr.len(), c.dpma.len(), c.history.len());
        }
        Command::Disambig { input, scheme, source, out, .. } => {
            let input = input.ok_or_else(|| config_err("--input or --config is required"))?;
            standalone_disambig(&input, &scheme, source, out.as_deref())?;
        }
        Command::Link(a) => {
            let rows = link_stage(&config(&a)?)?;
            let continued = rows.iter().filter(|r| r.continued == 1).count();
            println!("{} careers, {continued} continued after 1990", rows.len());
        }
        Command::Treat(a) => {
            let rows = treat_stage(&config(&a)?)?;
            println!("{} treatment rows", rows.len());
        }
        Command::Estimate { config: a, spec } => {
            let cfg = config(&a)?;
            match estimate_stage(&cfg, spec.into())? {
                Some(table) => print!("{}", table.to_markdown()),
                None => print!("{}", fs::read_to_string(cfg.output_path("summary_stats.csv")).map_err(config_err)?),
            }
        }
        Command::Sensitivity(a) => {
            for r in sensitivity_stage(&config(&a)?)? {
                println!("{}: robustness value {:.2}%", r.instrument, 100.0 * r.robustness_value);
            }
        }
        Command::Survival { config: a, censor_from } => {
            let cfg = config(&a)?;
            let curve = survival_stage(&cfg, censor_from.unwrap_or(cfg.estimation.censor_from))?;
            for p in &curve.points {
                println!("{}\t{:.4}", p.time, p.survival);
            }
        }
        Command::Synth { spec, seed, out, dgp, bootstrap_reps } => {
            synth_cmd(spec.as_deref(), seed, &out, dgp, bootstrap_reps)?;
        }
        Command::Run(a) => {
            let cfg = config(&a)?;
            let m = run_pipeline(&cfg)?;
            println!("wrote {} files to {}", m.outputs.len() + 1, cfg.resolve(&cfg.output_dir).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.workers.map(Ok).or_else(|| workers_from_env().transpose()).transpose() {
        Ok(workers) => with_workers(workers, || execute(cli.command)).and_then(|r| r),
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

