//! Configuration and stage execution. Every stage reads its inputs from the
//! configured files and from upstream artifacts in the output directory, so
//! any stage can be rerun on its own.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{load_corpus, FrequencyTables, MedianBasis, PatentRecord, Source};
use crate::disambig::{
    disambiguate, read_career_assignments, write_careers, CareerCluster, DisambigOptions, ScoringScheme, SchemeId,
};
use crate::econometrics::tables::{RegressionTable, SecondRow, TableColumn};
use crate::econometrics::{
    anderson_rubin_test, cragg_donald_f, first_stage, gap_times_from_careers, heckman_iv, iv_poisson_gmm,
    kaplan_meier, tsls, write_survival, Column, DesignBuilder, DesignMatrix, EconError, HeckmanData,
    HeckmanOptions, ResampleUnit, INTERCEPT, IMR_LABEL,
};
use crate::instruments::{
    build_treatments, read_flows, read_sector_output, read_treatments, write_treatments, Concordance, ElectionTable,
    InstrumentOptions, ReceptionTable, TreatmentInputs, TreatmentRow,
};
use crate::linkage::{
    build_outcomes, link_careers, read_outcomes, write_links, write_outcomes, GenderTable, GeoTable, MatchingScheme,
    OutcomeInputs, OutcomeOptions, OutcomeRow, SectorTable,
};
use crate::sensitivity::{sensitivity_report, write_sensitivity};

/// Environment variable that overrides the worker-thread count.
pub const ENV_WORKERS: &str = "CAREERLINK_WORKERS";

/// Filing years of the main GDR analysis sample.
pub const ANALYSIS_YEARS: std::ops::RangeInclusive<i32> = 1989..=1990;

pub const CONTINUED: &str = "Continued Inventing";
pub const CONTINUED_WEST: &str = "Continued in West Germany";
pub const GDR_PATENTS: &str = "GDR Patents";
pub const ACADEMIC: &str = "Academic";
pub const FEMALE: &str = "Female";
pub const DISTANCE_WEST: &str = "Distance West";
pub const POPULATION_DENSITY: &str = "Population Density";
pub const PATENT_STOCK: &str = "Patent Stock";
pub const CAREER_AGE: &str = "Career Age";
pub const KNOWLEDGE_INFLOW: &str = "Knowledge Inflow";
pub const PDS_SHARE: &str = "PDS Voting Share";
pub const OLD_INFORMANTS: &str = "Old Informants";
pub const DEACTIVATED_INFORMANTS: &str = "Deactivated Informants";
pub const NO_RECEPTION: &str = "No Reception";
pub const DRESDEN: &str = "Dresden";
pub const DPMA_PATENTS: &str = "DPMA Patents";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: EconError,
    },
}

impl PipelineError {
    /// 2 for configuration problems, 3 for bad input data, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Numerical { .. } => 4,
        }
    }
}

fn data<E: Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Data { stage, message: e.to_string() }
}

fn numerical(stage: &'static str) -> impl Fn(EconError) -> PipelineError {
    move |source| PipelineError::Numerical { stage, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub gdr_patents: PathBuf,
    pub dpma_patents: PathBuf,
    pub flows: PathBuf,
    pub concordance: PathBuf,
    pub sector_output: PathBuf,
    pub elections: PathBuf,
    pub reception: PathBuf,
    pub geo: PathBuf,
    pub academic: PathBuf,
    pub names: PathBuf,
}

impl InputPaths {
    fn named(&self) -> [(&'static str, &PathBuf); 10] {
        [
            ("gdr_patents", &self.gdr_patents),
            ("dpma_patents", &self.dpma_patents),
            ("flows", &self.flows),
            ("concordance", &self.concordance),
            ("sector_output", &self.sector_output),
            ("elections", &self.elections),
            ("reception", &self.reception),
            ("geo", &self.geo),
            ("academic", &self.academic),
            ("names", &self.names),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisambigConfig {
    pub gdr_scheme: String,
    pub dpma_scheme: String,
    /// Scheme for the 1980–1990 GDR careers behind patent stock, career age
    /// and the survival curve.
    pub history_scheme: String,
    /// Scoring tables loaded from CSV; these replace the named schemes.
    pub gdr_scheme_file: Option<PathBuf>,
    pub dpma_scheme_file: Option<PathBuf>,
    pub history_scheme_file: Option<PathBuf>,
    pub median_basis: MedianBasis,
}

impl Default for DisambigConfig {
    fn default() -> Self {
        Self {
            gdr_scheme: "gdr1989".into(),
            dpma_scheme: "dpma".into(),
            history_scheme: "gdr1980-abstract".into(),
            gdr_scheme_file: None,
            dpma_scheme_file: None,
            history_scheme_file: None,
            median_basis: MedianBasis::DistinctValues,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageConfig {
    pub threshold: u32,
}

impl Default for LinkageConfig {
    fn default() -> Self {
        Self { threshold: MatchingScheme::default().threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentConfig {
    pub strict_exit_filter: bool,
    pub scale_instruments: bool,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        let o = InstrumentOptions::default();
        Self { strict_exit_filter: o.strict_exit_filter, scale_instruments: o.scale_instruments }
    }
}

impl From<&InstrumentConfig> for InstrumentOptions {
    fn from(c: &InstrumentConfig) -> Self {
        InstrumentOptions { strict_exit_filter: c.strict_exit_filter, scale_instruments: c.scale_instruments }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    Rows,
    /// Whole electoral districts of the home municipality.
    Districts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub bootstrap_reps: usize,
    pub resample: Resample,
    pub level: f64,
    pub depreciation: f64,
    pub reference_year: i32,
    /// Add patent stock and career age to every control set.
    pub history_controls: bool,
    pub censor_from: i32,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let o = OutcomeOptions::default();
        Self {
            bootstrap_reps: 300,
            resample: Resample::Rows,
            level: 0.95,
            depreciation: o.depreciation,
            reference_year: o.reference_year,
            history_controls: false,
            censor_from: 1988,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; required when the bootstrap is enabled.
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub inputs: InputPaths,
    #[serde(default)]
    pub disambiguation: DisambigConfig,
    #[serde(default)]
    pub linkage: LinkageConfig,
    #[serde(default)]
    pub instruments: InstrumentConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self, file: &str) -> PathBuf {
        self.resolve(&self.output_dir).join(file)
    }

    /// Checks that every input exists and every setting is usable, before
    /// any stage runs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, p) in self.inputs.named() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(PipelineError::Config(format!("inputs.{name}: {} does not exist", full.display())));
            }
        }
        let d = &self.disambiguation;
        for (id, file) in [
            (&d.gdr_scheme, &d.gdr_scheme_file),
            (&d.dpma_scheme, &d.dpma_scheme_file),
            (&d.history_scheme, &d.history_scheme_file),
        ] {
            self.scheme(id, file.as_ref())?;
        }
        let e = &self.estimation;
        if e.bootstrap_reps > 0 && self.seed.is_none() {
            return Err(PipelineError::Config("seed is required when estimation.bootstrap_reps > 0".into()));
        }
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(PipelineError::Config(format!("estimation.level = {} outside (0, 1)", e.level)));
        }
        if !(0.0..1.0).contains(&e.depreciation) {
            return Err(PipelineError::Config(format!("estimation.depreciation = {} outside [0, 1)", e.depreciation)));
        }
        Ok(())
    }

    fn scheme(&self, id: &str, file: Option<&PathBuf>) -> Result<ScoringScheme, PipelineError> {
        match file {
            Some(p) => {
                let f = File::open(self.resolve(p)).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                ScoringScheme::from_csv(f).map_err(|e| PipelineError::Config(e.to_string()))
            }
            None => id
                .parse::<SchemeId>()
                .and_then(ScoringScheme::by_id)
                .map_err(|e| PipelineError::Config(e.to_string())),
        }
    }

    /// SHA-256 of the effective settings, independent of where the output goes.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Worker count from [`ENV_WORKERS`], if set.
pub fn workers_from_env() -> Result<Option<usize>, PipelineError> {
    match std::env::var(ENV_WORKERS) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| PipelineError::Config(format!("{ENV_WORKERS}={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    match workers {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| PipelineError::Config(e.to_string())),
    }
}

fn create(path: &Path, stage: &'static str) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(data(stage))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| PipelineError::Data {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

fn open(path: &Path, stage: &'static str) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| PipelineError::Data { stage, message: format!("{}: {e}", path.display()) })
}

/// Raw inputs of the disambiguation and linkage stages.
pub struct Corpora {
    /// All GDR records, 1980–1990.
    pub gdr_all: Vec<PatentRecord>,
    /// GDR records of the analysis years.
    pub gdr: Vec<PatentRecord>,
    pub dpma: Vec<PatentRecord>,
}

pub fn load_corpora(cfg: &PipelineConfig) -> Result<Corpora, PipelineError> {
    const STAGE: &str = "ingest";
    let gdr_all: Vec<PatentRecord> = load_corpus(&cfg.resolve(&cfg.inputs.gdr_patents), Source::Gdr)
        .map_err(data(STAGE))?
        .into_iter()
        .filter(|r| r.filing_year <= 1990)
        .collect();
    let gdr = gdr_all.iter().filter(|r| ANALYSIS_YEARS.contains(&r.filing_year)).cloned().collect();
    let dpma = load_corpus(&cfg.resolve(&cfg.inputs.dpma_patents), Source::Dpma)
        .map_err(data(STAGE))?
        .into_iter()
        .filter(|r| r.filing_year >= 1990)
        .collect();
    Ok(Corpora { gdr_all, gdr, dpma })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub sample: &'static str,
    pub records: usize,
    pub mentions: usize,
    pub first_year: i32,
    pub last_year: i32,
}

/// Loads and validates both corpora and writes `corpus_summary.csv`.
pub fn ingest_stage(cfg: &PipelineConfig) -> Result<Vec<CorpusSummary>, PipelineError> {
    const STAGE: &str = "ingest";
    let c = load_corpora(cfg)?;
    let summarize = |sample, recs: &[PatentRecord]| CorpusSummary {
        sample,
        records: recs.len(),
        mentions: recs.iter().map(|r| r.inventors.len()).sum(),
        first_year: recs.iter().map(|r| r.filing_year).min().unwrap_or_default(),
        last_year: recs.iter().map(|r| r.filing_year).max().unwrap_or_default(),
    };
    let rows = vec![summarize("gdr_all", &c.gdr_all), summarize("gdr", &c.gdr), summarize("dpma", &c.dpma)];
    if rows[1].records == 0 || rows[2].records == 0 {
        return Err(PipelineError::Data { stage: STAGE, message: "a corpus has no records in range".into() });
    }
    let mut w = csv::Writer::from_writer(create(&cfg.output_path("corpus_summary.csv"), STAGE)?);
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(["sample", "records", "mentions", "first_year", "last_year"])?;
        for r in &rows {
            w.write_record([
                r.sample.to_string(),
                r.records.to_string(),
                r.mentions.to_string(),
                r.first_year.to_string(),
                r.last_year.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(data(STAGE))?;
    Ok(rows)
}

/// Careers of the three disambiguation runs.
pub struct Careers {
    pub gdr: Vec<CareerCluster>,
    pub dpma: Vec<CareerCluster>,
    /// 1980–1990 GDR careers.
    pub history: Vec<CareerCluster>,
}

fn tables(records: &[PatentRecord], cfg: &PipelineConfig, stage: &'static str) -> Result<FrequencyTables, PipelineError> {
    FrequencyTables::build(records, cfg.disambiguation.median_basis).map_err(data(stage))
}

/// Disambiguates both corpora and the long GDR history; writes
/// `careers.csv` (GDR and DPMA) and `careers_history.csv`.
pub fn disambig_stage(cfg: &PipelineConfig) -> Result<Careers, PipelineError> {
    const STAGE: &str = "disambig";
    let c = load_corpora(cfg)?;
    let d = &cfg.disambiguation;
    let run = |records: &[PatentRecord], id: &str, file: Option<&PathBuf>, prefix: &str| {
        let scheme = cfg.scheme(id, file)?;
        let t = tables(records, cfg, STAGE)?;
        disambiguate(records, &scheme, &t, &DisambigOptions { id_prefix: prefix.into() })
            .map(|r| r.careers)
            .map_err(data(STAGE))
    };
    let careers = Careers {
        gdr: run(&c.gdr, &d.gdr_scheme, d.gdr_scheme_file.as_ref(), "G")?,
        dpma: run(&c.dpma, &d.dpma_scheme, d.dpma_scheme_file.as_ref(), "D")?,
        history: run(&c.gdr_all, &d.history_scheme, d.history_scheme_file.as_ref(), "H")?,
    };
    let mut both = careers.gdr.clone();
    both.extend(careers.dpma.iter().cloned());
    write_careers(create(&cfg.output_path("careers.csv"), STAGE)?, &both).map_err(data(STAGE))?;
    write_careers(create(&cfg.output_path("careers_history.csv"), STAGE)?, &careers.history).map_err(data(STAGE))?;
    Ok(careers)
}

fn rebuild(
    path: &Path,
    records: &[PatentRecord],
    prefix: char,
    t: &FrequencyTables,
    stage: &'static str,
) -> Result<Vec<CareerCluster>, PipelineError> {
    let assignments = read_career_assignments(open(path, stage)?, records).map_err(data(stage))?;
    let by_id: BTreeMap<&str, &PatentRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let names = t.name.as_ref().ok_or_else(|| PipelineError::Data { stage, message: "no name table".into() })?;
    Ok(assignments
        .into_iter()
        .filter(|(id, _)| id.starts_with(prefix))
        .map(|(id, (name, mut members))| {
            members.sort();
            CareerCluster::from_members(id, names.name_key(&name), &members, &by_id)
        })
        .collect())
}

/// Reads the careers written by [`disambig_stage`].
pub fn load_careers(cfg: &PipelineConfig, c: &Corpora, stage: &'static str) -> Result<Careers, PipelineError> {
    let careers = cfg.output_path("careers.csv");
    let mut gdr_dpma: Vec<PatentRecord> = c.gdr.clone();
    gdr_dpma.extend(c.dpma.iter().cloned());
    Ok(Careers {
        gdr: rebuild(&careers, &gdr_dpma, 'G', &tables(&c.gdr, cfg, stage)?, stage)?,
        dpma: rebuild(&careers, &gdr_dpma, 'D', &tables(&c.dpma, cfg, stage)?, stage)?,
        history: rebuild(&cfg.output_path("careers_history.csv"), &c.gdr_all, 'H', &tables(&c.gdr_all, cfg, stage)?, stage)?,
    })
}

fn read_table<T>(path: &Path, stage: &'static str, f: impl FnOnce(File) -> Result<T, String>) -> Result<T, PipelineError> {
    f(open(path, stage)?).map_err(|message| PipelineError::Data { stage, message })
}

/// Filing years of the long career containing each analysis career.
fn history_years(careers: &Careers) -> BTreeMap<String, Vec<i32>> {
    let mut owner = BTreeMap::new();
    for h in &careers.history {
        for m in &h.members {
            owner.insert(m, &h.filing_years);
        }
    }
    careers
        .gdr
        .iter()
        .map(|g| {
            let years = g
                .members
                .iter()
                .find_map(|m| owner.get(m).map(|y| (*y).clone()))
                .unwrap_or_else(|| g.filing_years.clone());
            (g.career_id.clone(), years)
        })
        .collect()
}

/// Links GDR to DPMA careers and builds the outcome rows; writes `links.csv`
/// and `outcomes.csv`.
pub fn link_stage(cfg: &PipelineConfig) -> Result<Vec<OutcomeRow>, PipelineError> {
    const STAGE: &str = "link";
    let c = load_corpora(cfg)?;
    let careers = load_careers(cfg, &c, STAGE)?;
    let scheme = MatchingScheme { threshold: cfg.linkage.threshold, ..MatchingScheme::default() };
    let links = link_careers(&careers.gdr, &careers.dpma, &scheme, &tables(&c.dpma, cfg, STAGE)?).map_err(data(STAGE))?;
    write_links(create(&cfg.output_path("links.csv"), STAGE)?, &links).map_err(data(STAGE))?;

    let i = &cfg.inputs;
    let geo = read_table(&cfg.resolve(&i.geo), STAGE, |f| GeoTable::from_csv(f).map_err(|e| e.to_string()))?;
    let sectors = read_table(&cfg.resolve(&i.academic), STAGE, |f| SectorTable::from_csv(f).map_err(|e| e.to_string()))?;
    let gender = read_table(&cfg.resolve(&i.names), STAGE, |f| GenderTable::from_csv(f).map_err(|e| e.to_string()))?;
    let history = history_years(&careers);
    let inputs = OutcomeInputs { geo: &geo, sectors: &sectors, gender: &gender, history: Some(&history) };
    let options = OutcomeOptions { reference_year: cfg.estimation.reference_year, depreciation: cfg.estimation.depreciation };
    let rows = build_outcomes(&careers.gdr, &careers.dpma, &links, &inputs, options).map_err(data(STAGE))?;
    write_outcomes(create(&cfg.output_path("outcomes.csv"), STAGE)?, &rows).map_err(data(STAGE))?;
    Ok(rows)
}

/// Espionage and community treatments per GDR career; writes `treatments.csv`.
pub fn treat_stage(cfg: &PipelineConfig) -> Result<Vec<TreatmentRow>, PipelineError> {
    const STAGE: &str = "treat";
    let c = load_corpora(cfg)?;
    let careers = load_careers(cfg, &c, STAGE)?;
    let i = &cfg.inputs;
    let flows = read_table(&cfg.resolve(&i.flows), STAGE, |f| read_flows(f).map_err(|e| e.to_string()))?;
    let concordance = read_table(&cfg.resolve(&i.concordance), STAGE, |f| Concordance::from_csv(f).map_err(|e| e.to_string()))?;
    let output = read_table(&cfg.resolve(&i.sector_output), STAGE, |f| read_sector_output(f).map_err(|e| e.to_string()))?;
    let elections = read_table(&cfg.resolve(&i.elections), STAGE, |f| ElectionTable::from_csv(f).map_err(|e| e.to_string()))?;
    let reception = read_table(&cfg.resolve(&i.reception), STAGE, |f| ReceptionTable::from_csv(f).map_err(|e| e.to_string()))?;
    let geo = read_table(&cfg.resolve(&i.geo), STAGE, |f| GeoTable::from_csv(f).map_err(|e| e.to_string()))?;
    let inputs = TreatmentInputs {
        flows: &flows,
        concordance: &concordance,
        sector_output: &output,
        elections: &elections,
        reception: &reception,
        geo: &geo,
    };
    let rows = build_treatments(&careers.gdr, &inputs, (&cfg.instruments).into()).map_err(data(STAGE))?;
    write_treatments(create(&cfg.output_path("treatments.csv"), STAGE)?, &rows).map_err(data(STAGE))?;
    Ok(rows)
}

/// Outcome and treatment rows joined by career, as nullable columns.
pub struct AnalysisData {
    pub career_ids: Vec<String>,
    columns: BTreeMap<&'static str, Vec<Option<f64>>>,
}

impl AnalysisData {
    pub fn join(outcomes: &[OutcomeRow], treatments: &[TreatmentRow]) -> Result<Self, String> {
        let by_id: BTreeMap<&str, &TreatmentRow> = treatments.iter().map(|t| (t.career_id.as_str(), t)).collect();
        let mut columns: BTreeMap<&'static str, Vec<Option<f64>>> = BTreeMap::new();
        let mut career_ids = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let t = by_id.get(o.career_id.as_str()).ok_or_else(|| format!("career {} has no treatment row", o.career_id))?;
            career_ids.push(o.career_id.clone());
            let cells = [
                (CONTINUED, Some(f64::from(o.continued))),
                (CONTINUED_WEST, o.continued_west.map(f64::from)),
                (GDR_PATENTS, Some(f64::from(o.gdr_patents))),
                (ACADEMIC, Some(f64::from(o.academic))),
                (FEMALE, Some(f64::from(o.female))),
                (DISTANCE_WEST, Some(o.distance_west_km)),
                (POPULATION_DENSITY, Some(o.population_density)),
                (PATENT_STOCK, o.patent_stock),
                (CAREER_AGE, o.career_age.map(f64::from)),
                (DPMA_PATENTS, Some(f64::from(o.dpma_patents))),
                (KNOWLEDGE_INFLOW, t.knowledge_inflow),
                (PDS_SHARE, Some(t.pds_share)),
                (OLD_INFORMANTS, t.old_informants),
                (DEACTIVATED_INFORMANTS, t.deactivated_informants),
                (NO_RECEPTION, Some(f64::from(t.no_reception))),
                (DRESDEN, Some(f64::from(t.dresden))),
            ];
            for (label, v) in cells {
                columns.entry(label).or_default().push(v);
            }
        }
        if career_ids.is_empty() {
            return Err("no outcome rows".into());
        }
        Ok(Self { career_ids, columns })
    }

    pub fn column(&self, label: &str) -> &[Option<f64>] {
        self.columns.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.career_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.career_ids.is_empty()
    }
}

/// Reads `outcomes.csv` and `treatments.csv` from the output directory.
pub fn load_analysis(cfg: &PipelineConfig, stage: &'static str) -> Result<AnalysisData, PipelineError> {
    let outcomes = read_table(&cfg.output_path("outcomes.csv"), stage, |f| read_outcomes(f).map_err(|e| e.to_string()))?;
    let treatments =
        read_table(&cfg.output_path("treatments.csv"), stage, |f| read_treatments(f).map_err(|e| e.to_string()))?;
    AnalysisData::join(&outcomes, &treatments).map_err(|message| PipelineError::Data { stage, message })
}

pub fn control_labels(cfg: &PipelineConfig) -> Vec<&'static str> {
    let mut c = vec![GDR_PATENTS, ACADEMIC, FEMALE, DISTANCE_WEST, POPULATION_DENSITY];
    if cfg.estimation.history_controls {
        c.extend([PATENT_STOCK, CAREER_AGE]);
    }
    c
}

/// One IV column: endogenous treatments, their instruments and a label for the table.
#[derive(Debug, Clone, Copy)]
pub struct IvColumn {
    pub treatments: &'static [&'static str],
    pub instruments: &'static [&'static str],
    pub label: &'static str,
}

/// Treatment and instrument pairs of the five main IV columns.
pub const IV_COLUMNS: [IvColumn; 5] = [
    IvColumn { treatments: &[KNOWLEDGE_INFLOW], instruments: &[OLD_INFORMANTS], label: "Old Inform." },
    IvColumn { treatments: &[KNOWLEDGE_INFLOW], instruments: &[DEACTIVATED_INFORMANTS], label: "Deactivated Inform." },
    IvColumn { treatments: &[PDS_SHARE], instruments: &[NO_RECEPTION], label: "No Reception" },
    IvColumn { treatments: &[PDS_SHARE], instruments: &[DRESDEN], label: "Dresden" },
    IvColumn {
        treatments: &[KNOWLEDGE_INFLOW, PDS_SHARE],
        instruments: &[DEACTIVATED_INFORMANTS, NO_RECEPTION],
        label: "Deactivated Inform., No Reception",
    },
];

fn design(a: &AnalysisData, outcome: &str, col: &IvColumn, controls: &[&str]) -> Result<DesignMatrix, EconError> {
    let mut b = DesignBuilder::new().outcome(outcome, a.column(outcome).to_vec());
    for t in col.treatments {
        b = b.treatment(t, a.column(t).to_vec());
    }
    for z in col.instruments {
        b = b.instrument(z, a.column(z).to_vec());
    }
    for x in controls {
        b = b.control(x, a.column(x).to_vec());
    }
    b.build()
}

fn refs(cols: &[Column]) -> Vec<&Column> {
    cols.iter().collect()
}

fn row_labels(treatments: &[&str], controls: &[&str], extra: &[&str]) -> Vec<String> {
    treatments
        .iter()
        .chain(controls)
        .chain(extra)
        .map(|s| s.to_string())
        .chain(std::iter::once(INTERCEPT.to_string()))
        .collect()
}

/// 2SLS of continued inventing on the five treatment/instrument columns.
pub fn table2(a: &AnalysisData, controls: &[&str]) -> Result<RegressionTable, EconError> {
    let mut columns = Vec::new();
    for (j, col) in IV_COLUMNS.iter().enumerate() {
        let dm = design(a, CONTINUED, col, controls)?;
        let (t, z, x) = (refs(&dm.treatments), refs(&dm.instruments), refs(&dm.controls));
        let mut report = tsls(&dm.outcome, &t, &z, &x)?;
        if report.diagnostics.ar_pvalue.is_none() {
            report.diagnostics.ar_pvalue = Some(anderson_rubin_test(&dm.outcome, &t, &z, &x, &vec![0.0; t.len()])?);
        }
        columns.push(TableColumn { header: format!("({})", j + 1), report, instruments: col.label.into() });
    }
    Ok(RegressionTable {
        title: format!("Instrumental variable results: {CONTINUED}"),
        rows: row_labels(&[KNOWLEDGE_INFLOW, PDS_SHARE], controls, &[]),
        columns,
        second_row: SecondRow::PValue,
    })
}

/// First-stage regressions of the four single-instrument columns.
pub fn first_stage_table(a: &AnalysisData, controls: &[&str]) -> Result<RegressionTable, EconError> {
    let mut columns = Vec::new();
    for (j, col) in IV_COLUMNS[..4].iter().enumerate() {
        let dm = design(a, CONTINUED, col, controls)?;
        let (z, x) = (refs(&dm.instruments), refs(&dm.controls));
        let d = &dm.treatments[0];
        let mut report = first_stage(d, &z, &x)?;
        report.diagnostics.cragg_donald_f = Some(cragg_donald_f(d, &z, &x)?);
        columns.push(TableColumn { header: format!("({}) {}", j + 1, d.label), report, instruments: col.label.into() });
    }
    Ok(RegressionTable {
        title: "First-stage regression results".into(),
        rows: row_labels(&[OLD_INFORMANTS, DEACTIVATED_INFORMANTS, NO_RECEPTION, DRESDEN], controls, &[]),
        columns,
        second_row: SecondRow::PValue,
    })
}

/// GMM IV-Poisson of DPMA patent counts on the five IV columns.
pub fn count_table(a: &AnalysisData, controls: &[&str]) -> Result<RegressionTable, EconError> {
    let mut columns = Vec::new();
    for (j, col) in IV_COLUMNS.iter().enumerate() {
        let dm = design(a, DPMA_PATENTS, col, controls)?;
        let report = iv_poisson_gmm(&dm.outcome, &refs(&dm.treatments), &refs(&dm.instruments), &refs(&dm.controls))?;
        columns.push(TableColumn { header: format!("({})", j + 1), report, instruments: col.label.into() });
    }
    Ok(RegressionTable {
        title: format!("Count data model: {DPMA_PATENTS}"),
        rows: row_labels(&[KNOWLEDGE_INFLOW, PDS_SHARE], controls, &[]),
        columns,
        second_row: SecondRow::PValue,
    })
}

/// Selection-corrected 2SLS of moving West among continuing inventors, with
/// deactivated informants as the exclusion restriction.
pub fn table3(
    a: &AnalysisData,
    controls: &[&str],
    options: &HeckmanOptions,
    districts: Option<&[String]>,
) -> Result<RegressionTable, EconError> {
    let required = [PDS_SHARE, NO_RECEPTION, DEACTIVATED_INFORMANTS];
    let continued = a.column(CONTINUED);
    let west = a.column(CONTINUED_WEST);
    let keep: Vec<usize> = (0..a.len())
        .filter(|&i| {
            let selected = continued[i] == Some(1.0);
            required.iter().chain(controls).all(|l| a.column(l)[i].is_some_and(f64::is_finite))
                && (!selected || west[i].is_some())
        })
        .collect();
    let take = |label: &str| Column::new(label, keep.iter().map(|&i| a.column(label)[i].unwrap_or(0.0)).collect());
    let data = HeckmanData {
        selected: keep.iter().map(|&i| continued[i] == Some(1.0)).collect(),
        outcome: take(CONTINUED_WEST),
        treatment: take(PDS_SHARE),
        instrument: take(NO_RECEPTION),
        exclusion: take(DEACTIVATED_INFORMANTS),
        controls: controls.iter().map(|l| take(l)).collect(),
        clusters: districts.map(|d| keep.iter().map(|&i| d[i].clone()).collect()),
    };
    let report = heckman_iv(&data, options)?;
    Ok(RegressionTable {
        title: format!("Sample selection model results: {CONTINUED_WEST}"),
        rows: row_labels(&[PDS_SHARE], controls, &[IMR_LABEL]),
        columns: vec![TableColumn {
            header: "beta / 95% CI".into(),
            report,
            instruments: format!("{NO_RECEPTION} (exclusion: {DEACTIVATED_INFORMANTS})"),
        }],
        second_row: SecondRow::Interval,
    })
}

/// Which estimation output to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSpec {
    Table2,
    Table3,
    FirstStage,
    Counts,
    Summary,
}

impl std::str::FromStr for EstimateSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "table2" => Ok(Self::Table2),
            "table3" => Ok(Self::Table3),
            "first-stage" => Ok(Self::FirstStage),
            "counts" => Ok(Self::Counts),
            "summary" => Ok(Self::Summary),
            other => Err(PipelineError::Config(format!(
                "unknown estimate spec {other:?}; expected table2, table3, first-stage, counts or summary"
            ))),
        }
    }
}

impl EstimateSpec {
    pub fn file_stem(self) -> &'static str {
        match self {
            Self::Table2 => "table2",
            Self::Table3 => "table3",
            Self::FirstStage => "first_stage",
            Self::Counts => "counts",
            Self::Summary => "summary_stats",
        }
    }
}

fn career_districts(cfg: &PipelineConfig, a: &AnalysisData, stage: &'static str) -> Result<Vec<String>, PipelineError> {
    let c = load_corpora(cfg)?;
    let careers = load_careers(cfg, &c, stage)?;
    let geo = read_table(&cfg.resolve(&cfg.inputs.geo), stage, |f| GeoTable::from_csv(f).map_err(|e| e.to_string()))?;
    let home: BTreeMap<&str, String> =
        careers.gdr.iter().map(|k| (k.career_id.as_str(), k.home_municipality().unwrap_or_default())).collect();
    a.career_ids
        .iter()
        .map(|id| {
            let m = home.get(id.as_str()).ok_or_else(|| PipelineError::Data { stage, message: format!("unknown career {id}") })?;
            geo.get(m).map(|g| g.district_id.clone()).map_err(data(stage))
        })
        .collect()
}

fn write_table(cfg: &PipelineConfig, stem: &str, table: &RegressionTable, stage: &'static str) -> Result<(), PipelineError> {
    fs::create_dir_all(cfg.resolve(&cfg.output_dir)).map_err(data(stage))?;
    fs::write(cfg.output_path(&format!("{stem}.csv")), table.to_csv()).map_err(data(stage))?;
    fs::write(cfg.output_path(&format!("{stem}.md")), table.to_markdown()).map_err(data(stage))?;
    Ok(())
}

/// Runs one estimation spec and writes `<stem>.csv` and `<stem>.md`
/// (`summary_stats.csv` for the summary).
pub fn estimate_stage(cfg: &PipelineConfig, spec: EstimateSpec) -> Result<Option<RegressionTable>, PipelineError> {
    const STAGE: &str = "estimate";
    let a = load_analysis(cfg, STAGE)?;
    let controls = control_labels(cfg);
    let table = match spec {
        EstimateSpec::Summary => {
            let stats = summary_stats(&a);
            write_summary(create(&cfg.output_path("summary_stats.csv"), STAGE)?, &stats).map_err(data(STAGE))?;
            return Ok(None);
        }
        EstimateSpec::Table2 => table2(&a, &controls),
        EstimateSpec::FirstStage => first_stage_table(&a, &controls),
        EstimateSpec::Counts => count_table(&a, &controls),
        EstimateSpec::Table3 => {
            let e = &cfg.estimation;
            let districts = match e.resample {
                Resample::Rows => None,
                Resample::Districts => Some(career_districts(cfg, &a, STAGE)?),
            };
            let options = HeckmanOptions {
                bootstrap_reps: e.bootstrap_reps,
                seed: cfg.seed.unwrap_or_default(),
                resample: if districts.is_some() { ResampleUnit::Clusters } else { ResampleUnit::Rows },
                level: e.level,
            };
            table3(&a, &controls, &options, districts.as_deref())
        }
    }
    .map_err(numerical(STAGE))?;
    write_table(cfg, spec.file_stem(), &table, STAGE)?;
    Ok(Some(table))
}

/// Reduced-form sensitivity of the four single-instrument columns,
/// benchmarked against the female and academic indicators.
pub fn sensitivity_stage(cfg: &PipelineConfig) -> Result<Vec<crate::sensitivity::SensitivityReport>, PipelineError> {
    const STAGE: &str = "sensitivity";
    let a = load_analysis(cfg, STAGE)?;
    let controls = control_labels(cfg);
    let mut reports = Vec::new();
    for col in &IV_COLUMNS[..4] {
        let dm = design(&a, CONTINUED, col, &controls).map_err(numerical(STAGE))?;
        let r = sensitivity_report(&dm.outcome, &dm.instruments[0], &refs(&dm.controls), &[FEMALE, ACADEMIC])
            .map_err(numerical(STAGE))?;
        reports.push(r);
    }
    write_sensitivity(create(&cfg.output_path("sensitivity.csv"), STAGE)?, &reports).map_err(data(STAGE))?;
    Ok(reports)
}

/// Kaplan–Meier curve of the 1980–1989 GDR careers; writes `survival.csv`.
pub fn survival_stage(cfg: &PipelineConfig, censor_from: i32) -> Result<crate::econometrics::SurvivalCurve, PipelineError> {
    const STAGE: &str = "survival";
    let c = load_corpora(cfg)?;
    let t = tables(&c.gdr_all, cfg, STAGE)?;
    let history = rebuild(&cfg.output_path("careers_history.csv"), &c.gdr_all, 'H', &t, STAGE)?;
    let spells: Vec<Vec<i32>> = history
        .iter()
        .map(|k| k.filing_years.iter().copied().filter(|y| *y < 1990).collect())
        .collect();
    let curve = kaplan_meier(&gap_times_from_careers(&spells, censor_from)).map_err(numerical(STAGE))?;
    write_survival(create(&cfg.output_path("survival.csv"), STAGE)?, &curve).map_err(data(STAGE))?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variable: &'static str,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub const SUMMARY_VARIABLES: [&str; 13] = [
    CONTINUED,
    CONTINUED_WEST,
    GDR_PATENTS,
    ACADEMIC,
    FEMALE,
    DISTANCE_WEST,
    POPULATION_DENSITY,
    KNOWLEDGE_INFLOW,
    PDS_SHARE,
    OLD_INFORMANTS,
    DEACTIVATED_INFORMANTS,
    NO_RECEPTION,
    DRESDEN,
];

/// Moments of each variable over its non-missing cells.
pub fn summary_stats(a: &AnalysisData) -> Vec<SummaryRow> {
    SUMMARY_VARIABLES
        .iter()
        .map(|&variable| {
            let v: Vec<f64> = a.column(variable).iter().flatten().copied().collect();
            let n = v.len();
            let mean = if n > 0 { v.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            SummaryRow {
                variable,
                n,
                mean,
                sd,
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Full-precision CSV so downstream checks can compare exactly.
pub fn write_summary<W: std::io::Write>(writer: W, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "n", "mean", "sd", "min", "max"])?;
    for r in rows {
        w.write_record([
            r.variable.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.min.to_string(),
            r.max.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files every full run writes, in manifest order.
pub const BUNDLE_FILES: &[&str] = &[
    "corpus_summary.csv",
    "careers.csv",
    "careers_history.csv",
    "links.csv",
    "outcomes.csv",
    "treatments.csv",
    "summary_stats.csv",
    "first_stage.csv",
    "first_stage.md",
    "table2.csv",
    "table2.md",
    "table3.csv",
    "table3.md",
    "counts.csv",
    "counts.md",
    "sensitivity.csv",
    "survival.csv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path, stage: &'static str) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Data { stage, message: format!("{}: {e}", path.display()) })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Validates the config, runs every stage in order and writes
/// `run_manifest.json` with content hashes of all inputs and outputs.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    const STAGE: &str = "manifest";
    cfg.validate()?;
    ingest_stage(cfg)?;
    disambig_stage(cfg)?;
    link_stage(cfg)?;
    treat_stage(cfg)?;
    for spec in [EstimateSpec::Summary, EstimateSpec::FirstStage, EstimateSpec::Table2, EstimateSpec::Table3, EstimateSpec::Counts] {
        estimate_stage(cfg, spec)?;
    }
    sensitivity_stage(cfg)?;
    survival_stage(cfg, cfg.estimation.censor_from)?;

    let mut inputs = BTreeMap::new();
    for (name, p) in cfg.inputs.named() {
        inputs.insert(name.to_string(), sha256_file(&cfg.resolve(p), STAGE)?);
    }
    let mut outputs = BTreeMap::new();
    for f in BUNDLE_FILES {
        outputs.insert(f.to_string(), sha256_file(&cfg.output_path(f), STAGE)?);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: cfg.fingerprint(),
        inputs,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(data(STAGE))?;
    fs::write(cfg.output_path("run_manifest.json"), json + "\n").map_err(data(STAGE))?;
    Ok(manifest)
}
