//! Synthetic fixtures with known ground truth: a two-database patent corpus
//! with planted name collisions and movers, the lookup tables the pipeline
//! consumes, and parameterized data-generating processes for the estimators.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_corpus, PatentRecord, Source};
use crate::disambig::MentionId;
use crate::econometrics::{Column, DesignMatrix, HeckmanData};
use crate::instruments::{scale_by_output, sector_inflow, Concordance, ConcordanceEntry, InformantFlow, INFLOW_YEARS};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Instrument(#[from] crate::instruments::InstrumentError),
    #[error("spec file: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Parameters of the synthetic linkage corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageCorpusSpec {
    /// East German inventors with a 1989–1990 patent.
    pub n_inventors: usize,
    /// Mean of the zero-truncated geometric count of 1989–1990 patents.
    pub mean_patents: f64,
    /// Share of inventors that reuse the name of an earlier, different inventor.
    pub name_collision_rate: f64,
    /// Share of continuing inventors who relocate to the West after 1990.
    pub move_rate: f64,
    /// Baseline share of inventors who patent again after 1990.
    pub continue_rate: f64,
    /// West German inventors that appear only in the post-1990 database.
    pub n_west_inventors: usize,
    /// Probability that a patent carries a colleague as co-inventor.
    pub coinventor_rate: f64,
    pub abstract_vocab_size: usize,
    pub seed: u64,
}

impl Default for LinkageCorpusSpec {
    fn default() -> Self {
        Self {
            n_inventors: 400,
            mean_patents: 1.886,
            name_collision_rate: 0.05,
            move_rate: 0.3,
            continue_rate: 0.25,
            n_west_inventors: 150,
            coinventor_rate: 0.15,
            abstract_vocab_size: 400,
            seed: 1,
        }
    }
}

impl LinkageCorpusSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let rates = [
            ("name_collision_rate", self.name_collision_rate),
            ("move_rate", self.move_rate),
            ("continue_rate", self.continue_rate),
            ("coinventor_rate", self.coinventor_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::InvalidSpec(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.n_inventors == 0 {
            return Err(SynthError::InvalidSpec("n_inventors must be positive".into()));
        }
        if self.mean_patents < 1.0 {
            return Err(SynthError::InvalidSpec("mean_patents must be at least 1".into()));
        }
        if self.abstract_vocab_size < 30 {
            return Err(SynthError::InvalidSpec("abstract_vocab_size must be at least 30".into()));
        }
        Ok(())
    }
}

/// Ground-truth assignment of a mention to a person.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthRow {
    pub mention: MentionId,
    pub person_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageCorpus {
    /// GDR records 1980–1990.
    pub gdr: Vec<PatentRecord>,
    /// DPMA records 1990–2000.
    pub dpma: Vec<PatentRecord>,
    pub truth: Vec<TruthRow>,
}

impl LinkageCorpus {
    /// Truth partition of the mentions on `records`, as sorted clusters.
    pub fn truth_partition(&self, records: &[PatentRecord]) -> Vec<Vec<MentionId>> {
        let ids: std::collections::BTreeSet<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
        let mut by_person: BTreeMap<&str, Vec<MentionId>> = BTreeMap::new();
        for t in &self.truth {
            if ids.contains(t.mention.record_id.as_str()) {
                by_person.entry(t.person_id.as_str()).or_default().push(t.mention.clone());
            }
        }
        let mut out: Vec<Vec<MentionId>> = by_person
            .into_values()
            .map(|mut v| {
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }
}

pub fn write_truth<W: Write>(writer: W, truth: &[TruthRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mention_id", "career_id"])?;
    for t in truth {
        w.write_record([t.mention.to_string(), t.person_id.clone()])?;
    }
    w.flush()?;
    Ok(())
}

struct Place {
    name: &'static str,
    state: &'static str,
    distance_km: f64,
    density: f64,
    no_reception: u8,
    dresden: u8,
}

const fn east(name: &'static str, state: &'static str, distance_km: f64, density: f64, nr: u8, dd: u8) -> Place {
    Place { name, state, distance_km, density, no_reception: nr, dresden: dd }
}

const EAST: &[Place] = &[
    east("Dresden", "SN", 310.0, 1550.0, 1, 1),
    east("Leipzig", "SN", 220.0, 1800.0, 0, 0),
    east("Karl-Marx-Stadt", "SN", 200.0, 1700.0, 0, 0),
    east("Jena", "TH", 110.0, 1000.0, 0, 0),
    east("Erfurt", "TH", 90.0, 820.0, 0, 0),
    east("Halle", "ST", 190.0, 1700.0, 0, 0),
    east("Magdeburg", "ST", 110.0, 1150.0, 0, 0),
    east("Rostock", "MV", 190.0, 1100.0, 0, 0),
    east("Greifswald", "MV", 300.0, 1200.0, 1, 0),
    east("Berlin (Ost)", "BE-O", 160.0, 2900.0, 0, 0),
    east("Potsdam", "BB", 150.0, 750.0, 0, 0),
    east("Frankfurt (Oder)", "BB", 260.0, 580.0, 0, 0),
    east("Cottbus", "BB", 300.0, 730.0, 0, 0),
    east("Dessau", "ST", 170.0, 600.0, 0, 0),
    east("Gera", "TH", 150.0, 1140.0, 0, 0),
    east("Suhl", "TH", 40.0, 560.0, 0, 0),
    east("Zwickau", "SN", 170.0, 1370.0, 0, 0),
    east("Bautzen", "SN", 360.0, 670.0, 1, 1),
    east("Goerlitz", "SN", 400.0, 910.0, 1, 1),
    east("Meissen", "SN", 290.0, 880.0, 1, 1),
    east("Freiberg", "SN", 250.0, 880.0, 0, 0),
    east("Ilmenau", "TH", 60.0, 260.0, 0, 0),
    east("Bitterfeld", "ST", 200.0, 780.0, 0, 0),
    east("Schwedt", "BB", 250.0, 170.0, 0, 0),
];

const WEST: &[(&str, &str)] = &[
    ("Muenchen", "BY"),
    ("Erlangen", "BY"),
    ("Stuttgart", "BW"),
    ("Karlsruhe", "BW"),
    ("Frankfurt am Main", "HE"),
    ("Darmstadt", "HE"),
    ("Koeln", "NW"),
    ("Leverkusen", "NW"),
    ("Hamburg", "HH"),
    ("Hannover", "NI"),
    ("Berlin (West)", "BE-W"),
    ("Ludwigshafen", "RP"),
];

const IPCS: &[&str] = &[
    "A61K", "A61B", "B01J", "B01D", "B23K", "B29C", "B60K", "C01B", "C07C", "C07D", "C08F", "C08L", "C12N",
    "E21B", "F02M", "F16H", "G01N", "G01R", "G02B", "G06F", "H01L", "H01M", "H02K", "H04B",
];

const N_SECTORS: usize = 12;

const MALE: &[&str] = &[
    "Klaus", "Juergen", "Wolfgang", "Peter", "Hans", "Dieter", "Manfred", "Bernd", "Uwe", "Frank", "Gerhard",
    "Horst", "Lothar", "Rainer", "Siegfried", "Thomas", "Werner", "Joachim",
];
const FEMALE: &[&str] = &["Monika", "Karin", "Renate", "Ursula", "Christa", "Brigitte", "Petra", "Sabine", "Ingrid"];
const LAST_A: &[&str] = &[
    "Berg", "Schmi", "Wag", "Kraus", "Lehm", "Hoff", "Rich", "Neu", "Wolf", "Zimm", "Kell", "Brau", "Hart", "Lang",
    "Fisch", "Walt", "Seid", "Schul", "Frie", "Voig",
];
const LAST_B: &[&str] = &[
    "mann", "er", "ert", "hardt", "ke", "el", "ig", "ner", "berg", "feld", "rich", "sch", "stein", "hof", "ler", "tz",
];
const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ter", "sor", "ven", "dra", "lux", "pen", "tri", "gal", "bor"];

fn last_name(i: usize) -> String {
    let base = LAST_A.len() * LAST_B.len();
    let part = |k: usize| format!("{}{}", LAST_A[k % LAST_A.len()], LAST_B[(k / LAST_A.len()) % LAST_B.len()]);
    if i < base {
        part(i)
    } else {
        format!("{}-{}", part(i % base), part(i / base))
    }
}

fn vocabulary(size: usize) -> Vec<String> {
    let s = SYLLABLES.len();
    (0..size)
        .map(|i| format!("{}{}{}", SYLLABLES[i % s], SYLLABLES[(i / s) % s], SYLLABLES[(i / (s * s)) % s]))
        .collect()
}

fn east_applicants(place: &Place) -> Vec<String> {
    let short = place.name.split([' ', '-', '(']).next().unwrap_or(place.name);
    vec![
        format!("VEB Kombinat Chemie {short}"),
        format!("VEB Maschinenbau {short}"),
        format!("Akademie der Wissenschaften Institut {short}"),
        format!("Technische Hochschule {short}"),
    ]
}

fn is_academic_name(applicant: &str) -> bool {
    applicant.starts_with("Akademie") || applicant.starts_with("Technische Hochschule")
}

/// Zero-truncated geometric count with the given mean.
fn zt_geometric(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    let g = Geometric::new(1.0 / mean).expect("mean >= 1");
    1 + g.sample(rng) as u32
}

#[derive(Debug, Clone)]
struct Person {
    id: String,
    first: &'static str,
    last: String,
    female: bool,
    place: usize,
    applicant: String,
    ipc: usize,
    topic: Vec<usize>,
}

impl Person {
    fn name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }
}

/// Environment the pipeline fixture adds on top of the corpus.
#[derive(Debug, Clone, Default)]
struct Effects {
    /// Standardized knowledge inflow by IPC index.
    inflow: Vec<f64>,
    /// PDS share by place index.
    pds: Vec<f64>,
}

fn abstract_for(rng: &mut ChaCha8Rng, topic: &[usize], vocab: &[String]) -> String {
    (0..14)
        .map(|_| {
            if rng.random_bool(0.8) {
                vocab[*topic.choose(rng).expect("topic")].as_str()
            } else {
                vocab[rng.random_range(0..vocab.len())].as_str()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn generate(spec: &LinkageCorpusSpec, effects: Option<&Effects>) -> Result<LinkageCorpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary(spec.abstract_vocab_size);
    let applicants: Vec<Vec<String>> = EAST.iter().map(east_applicants).collect();

    let new_person = |rng: &mut ChaCha8Rng, idx: usize, prefix: &str| -> Person {
        let female = rng.random_bool(0.1);
        let first = if female { *FEMALE.choose(rng).unwrap() } else { *MALE.choose(rng).unwrap() };
        let place = rng.random_range(0..EAST.len());
        let applicant = applicants[place].choose(rng).unwrap().clone();
        let ipc = rng.random_range(0..IPCS.len());
        let topic = (0..20).map(|_| rng.random_range(0..vocab.len())).collect();
        Person { id: format!("{prefix}{idx:05}"), first, last: last_name(idx), female, place, applicant, ipc, topic }
    };

    let mut east_people: Vec<Person> = Vec::with_capacity(spec.n_inventors);
    for i in 0..spec.n_inventors {
        let mut p = new_person(&mut rng, i, "P");
        if i > 0 && rng.random_bool(spec.name_collision_rate) {
            let donor = rng.random_range(0..i);
            p.first = east_people[donor].first;
            p.female = east_people[donor].female;
            p.last = east_people[donor].last.clone();
        }
        east_people.push(p);
    }
    let mut colleagues: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in east_people.iter().enumerate() {
        colleagues.entry(p.applicant.as_str()).or_default().push(i);
    }

    let mut gdr = Vec::new();
    let mut dpma = Vec::new();
    let mut truth = Vec::new();

    let push = |records: &mut Vec<PatentRecord>,
                truth: &mut Vec<TruthRow>,
                rng: &mut ChaCha8Rng,
                source: Source,
                year: i32,
                authors: Vec<(&Person, String)>,
                place_name: &str,
                applicant: &str,
                ipc: usize,
                topic: &[usize]| {
        let prefix = if source == Source::Gdr { "G" } else { "D" };
        let record_id = format!("{prefix}{:06}", records.len() + 1);
        let secondary = if rng.random_bool(0.3) { vec![IPCS[(ipc + 1) % IPCS.len()].to_string()] } else { vec![] };
        for (pos, (person, _)) in authors.iter().enumerate() {
            truth.push(TruthRow { mention: MentionId::new(record_id.clone(), pos), person_id: person.id.clone() });
        }
        records.push(PatentRecord {
            record_id,
            source,
            filing_year: year,
            inventors: authors.into_iter().map(|(_, raw)| raw).collect(),
            applicant: Some(applicant.to_string()),
            ipc_main: IPCS[ipc].to_string(),
            ipc_secondary: secondary,
            municipality: Some(place_name.to_string()),
            abstract_text: Some(abstract_for(rng, topic, &vocab)),
            cited_record_ids: Vec::new(),
        });
    };

    for (i, p) in east_people.iter().enumerate() {
        let raw = |rng: &mut ChaCha8Rng, person: &Person| -> String {
            if rng.random_bool(0.15) {
                format!("Dr. {}", person.name())
            } else {
                person.name()
            }
        };
        let recent = zt_geometric(&mut rng, spec.mean_patents);
        let earlier = Geometric::new(0.5).unwrap().sample(&mut rng) as u32;
        let mut years: Vec<i32> = (0..recent).map(|_| rng.random_range(1989..=1990)).collect();
        years.extend((0..earlier).map(|_| rng.random_range(1980..=1988)));
        years.sort_unstable();
        for year in years {
            let mut authors = vec![(p, raw(&mut rng, p))];
            if rng.random_bool(spec.coinventor_rate) {
                let team = &colleagues[p.applicant.as_str()];
                let pick = team[rng.random_range(0..team.len())];
                let q = &east_people[pick];
                if pick != i && q.name() != p.name() {
                    authors.push((q, raw(&mut rng, q)));
                }
            }
            push(&mut gdr, &mut truth, &mut rng, Source::Gdr, year, authors, EAST[p.place].name, &p.applicant, p.ipc, &p.topic);
        }

        let academic = is_academic_name(&p.applicant);
        let mut p_continue = spec.continue_rate;
        let mut p_move = spec.move_rate;
        if let Some(e) = effects {
            p_continue += 0.06 * e.inflow[p.ipc] - 0.02 * (e.pds[p.place] - 15.0);
            p_continue += if academic { 0.02 } else { 0.0 } - if p.female { 0.025 } else { 0.0 };
            p_move += 0.025 * (e.pds[p.place] - 15.0);
        }
        if !rng.random_bool(p_continue.clamp(0.02, 0.98)) {
            continue;
        }
        let moves = rng.random_bool(p_move.clamp(0.0, 1.0));
        let (place_name, applicant) = if moves {
            let (w, _) = WEST[rng.random_range(0..WEST.len())];
            (w.to_string(), format!("Siemens AG {w}"))
        } else {
            (EAST[p.place].name.to_string(), format!("{} GmbH", p.applicant.replace("VEB ", "")))
        };
        let ipc = if rng.random_bool(0.1) { rng.random_range(0..IPCS.len()) } else { p.ipc };
        let start = if rng.random_bool(0.7) { rng.random_range(1990..=1993) } else { rng.random_range(1994..=1999) };
        let k = zt_geometric(&mut rng, spec.mean_patents);
        let mut years: Vec<i32> = (0..k).map(|_| rng.random_range(start..=2000)).collect();
        years[0] = start;
        years.sort_unstable();
        for year in years {
            let authors = vec![(p, raw(&mut rng, p))];
            push(&mut dpma, &mut truth, &mut rng, Source::Dpma, year, authors, &place_name, &applicant, ipc, &p.topic);
        }
    }

    let offset = spec.n_inventors + 5000;
    for j in 0..spec.n_west_inventors {
        let mut p = new_person(&mut rng, offset + j, "W");
        p.id = format!("W{j:05}");
        if rng.random_bool(spec.name_collision_rate) {
            let donor = &east_people[rng.random_range(0..east_people.len())];
            p.first = donor.first;
            p.last = donor.last.clone();
        }
        let (w, _) = WEST[rng.random_range(0..WEST.len())];
        let applicant = format!("Bayer AG {w}");
        let k = zt_geometric(&mut rng, spec.mean_patents);
        let start = rng.random_range(1990..=1999);
        let mut years: Vec<i32> = (0..k).map(|_| rng.random_range(start..=2000)).collect();
        years.sort_unstable();
        for year in years {
            let authors = vec![(&p, p.name())];
            push(&mut dpma, &mut truth, &mut rng, Source::Dpma, year, authors, w, &applicant, p.ipc, &p.topic);
        }
    }

    Ok(LinkageCorpus { gdr, dpma, truth })
}

/// GDR and DPMA records with mention-level ground truth. Collisions reuse an
/// earlier inventor's full name; movers file from a West municipality after
/// 1990.
pub fn gen_linkage_corpus(spec: &LinkageCorpusSpec) -> Result<LinkageCorpus, SynthError> {
    generate(spec, None)
}

fn gen_flows(rng: &mut ChaCha8Rng) -> Vec<InformantFlow> {
    let mut flows = Vec::new();
    for i in 0..160 {
        let id = format!("I{i:04}");
        let sector = rng.random_range(0..N_SECTORS);
        let start = if i < 100 { rng.random_range(1968..=1970) } else { rng.random_range(1971..=1982) };
        let deactivated = i % 5 == 0;
        let end = if deactivated { rng.random_range(1984..=1986) } else { 1990 };
        let mean = if deactivated { rng.random_range(22.0..45.0) } else { rng.random_range(3.0..30.0) };
        let pois = Poisson::new(mean).expect("positive mean");
        for year in start..=end {
            let pieces = pois.sample(rng) as u64;
            if pieces > 0 {
                flows.push(InformantFlow { informant_id: id.clone(), year, sector_id: format!("S{sector:02}"), pieces });
            }
            if rng.random_bool(0.2) {
                let other = rng.random_range(0..N_SECTORS);
                flows.push(InformantFlow {
                    informant_id: id.clone(),
                    year,
                    sector_id: format!("S{other:02}"),
                    pieces: 1 + (pois.sample(rng) as u64) / 4,
                });
            }
        }
    }
    flows
}

fn concordance_entries() -> Vec<ConcordanceEntry> {
    let n = IPCS.len();
    (0..N_SECTORS)
        .flat_map(|s| {
            [(2 * s, 0.5), (2 * s + 1, 0.3), ((2 * s + 5) % n, 0.2)].map(|(ipc, weight)| ConcordanceEntry {
                sector_id: format!("S{s:02}"),
                ipc_subclass: IPCS[ipc].to_string(),
                weight,
            })
        })
        .collect()
}

fn sector_output(rng: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
    (0..N_SECTORS).map(|s| (format!("S{s:02}"), rng.random_range(200.0..1200.0_f64).round())).collect()
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 }).collect()
}

/// Relative input paths inside a fixture directory.
pub const FIXTURE_FILES: &[&str] = &[
    "gdr.csv",
    "dpma.csv",
    "flows.csv",
    "concordance.csv",
    "sector_output.csv",
    "elections.csv",
    "reception.csv",
    "geo.csv",
    "academic.csv",
    "names.csv",
    "truth.csv",
    "pipeline.toml",
];

/// Writes a complete pipeline input bundle plus `pipeline.toml` into `dir`
/// and returns the config path. Post-1990 continuation rises with the
/// knowledge inflow of the inventor's field and falls with the local PDS
/// vote share; relocation West rises with the PDS share. Television
/// reception acts only through the PDS share.
pub fn write_pipeline_fixture(dir: &Path, spec: &LinkageCorpusSpec, bootstrap_reps: usize) -> Result<PathBuf, SynthError> {
    spec.validate()?;
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_f1c5);
    let flows = gen_flows(&mut rng);
    let entries = concordance_entries();
    let concordance = Concordance::new(entries.clone())?;
    let output = sector_output(&mut rng);
    let inflow_by_sector = sector_inflow(&flows, INFLOW_YEARS);
    let mut inflow = Vec::with_capacity(IPCS.len());
    for ipc in IPCS {
        inflow.push(scale_by_output(&inflow_by_sector, &concordance, &output, ipc)?.unwrap_or(0.0));
    }
    // Regions without West German television voted less for the PDS.
    let pds: Vec<f64> = EAST
        .iter()
        .map(|p| (rng.random_range(13.0..21.0_f64) - 6.0 * f64::from(p.no_reception)) * 10.0)
        .map(|x: f64| x.round() / 10.0)
        .collect();
    let effects = Effects { inflow: standardize(&inflow), pds: pds.clone() };
    let corpus = generate(spec, Some(&effects))?;

    write_corpus(fs::File::create(dir.join("gdr.csv"))?, Source::Gdr, &corpus.gdr)?;
    write_corpus(fs::File::create(dir.join("dpma.csv"))?, Source::Dpma, &corpus.dpma)?;
    crate::instruments::write_flows(fs::File::create(dir.join("flows.csv"))?, &flows)?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("concordance.csv"))?);
    for e in &entries {
        w.serialize(e)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("sector_output.csv"))?);
    w.write_record(["sector_id", "output"])?;
    for (s, o) in &output {
        w.write_record([s.clone(), o.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("elections.csv"))?);
    w.write_record(["district_id", "pds_share"])?;
    for (i, share) in pds.iter().enumerate() {
        w.write_record([format!("K{i:02}"), share.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("reception.csv"))?);
    w.write_record(["municipality", "no_reception", "dresden"])?;
    for p in EAST.iter().filter(|p| p.no_reception == 1) {
        w.write_record([p.name.to_string(), p.no_reception.to_string(), p.dresden.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("geo.csv"))?);
    w.write_record(["municipality", "state", "distance_west_km", "population_density", "district_id"])?;
    for (i, p) in EAST.iter().enumerate() {
        w.write_record([p.name.to_string(), p.state.to_string(), p.distance_km.to_string(), p.density.to_string(), format!("K{i:02}")])?;
    }
    for (i, (name, state)) in WEST.iter().enumerate() {
        w.write_record([name.to_string(), state.to_string(), "0".into(), "1500".into(), format!("W{i:02}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("academic.csv"))?);
    w.write_record(["applicant", "academic"])?;
    for a in EAST.iter().flat_map(east_applicants) {
        w.write_record([a.clone(), u8::from(is_academic_name(&a)).to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(fs::File::create(dir.join("names.csv"))?);
    w.write_record(["first_name", "female"])?;
    for n in MALE {
        w.write_record([*n, "0"])?;
    }
    for n in FEMALE {
        w.write_record([*n, "1"])?;
    }
    w.flush()?;

    write_truth(fs::File::create(dir.join("truth.csv"))?, &corpus.truth)?;

    let config = format!(
        r#"seed = {seed}
output_dir = "out"

[inputs]
gdr_patents = "gdr.csv"
dpma_patents = "dpma.csv"
flows = "flows.csv"
concordance = "concordance.csv"
sector_output = "sector_output.csv"
elections = "elections.csv"
reception = "reception.csv"
geo = "geo.csv"
academic = "academic.csv"
names = "names.csv"

[estimation]
bootstrap_reps = {bootstrap_reps}
"#,
        seed = spec.seed
    );
    let path = dir.join("pipeline.toml");
    fs::write(&path, config)?;
    Ok(path)
}

/// Parameters shared by the estimator DGPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub beta_treatment: f64,
    /// First-stage coefficient on the instrument.
    pub instrument_strength: f64,
    /// Correlation between structural and first-stage errors.
    pub endogeneity_rho: f64,
    /// Correlation between selection and outcome errors.
    pub selection_rho: f64,
    /// Log-scale standard deviation of the multiplicative count error.
    pub count_sigma: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            beta_treatment: 0.5,
            instrument_strength: 1.0,
            endogeneity_rho: 0.5,
            selection_rho: 0.0,
            count_sigma: 0.5,
            seed: 0,
        }
    }
}

impl DgpSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 100 {
            return Err(SynthError::InvalidSpec(format!("n = {} below 100", self.n)));
        }
        for (name, r) in [("endogeneity_rho", self.endogeneity_rho), ("selection_rho", self.selection_rho)] {
            if r.abs() >= 1.0 {
                return Err(SynthError::InvalidSpec(format!("|{name}| = {} must be below 1", r.abs())));
            }
        }
        if self.count_sigma < 0.0 {
            return Err(SynthError::InvalidSpec("count_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Linear IV design: `d = pi z + 0.3 x1 + v`,
/// `y = 1 + beta d + 0.2 x1 - 0.1 x2 + u`, `corr(u, v) = rho`, with a
/// continuous control `x1` and a binary control `x2`.
pub fn gen_iv_dgp(spec: &DgpSpec) -> Result<DesignMatrix, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rho = spec.endogeneity_rho;
    let mut cols: [Vec<f64>; 5] = Default::default();
    for _ in 0..spec.n {
        let z = std_normal(&mut rng);
        let x1 = std_normal(&mut rng);
        let x2 = f64::from(u8::from(rng.random_bool(0.3)));
        let v = std_normal(&mut rng);
        let u = rho * v + (1.0 - rho * rho).sqrt() * std_normal(&mut rng);
        let d = spec.instrument_strength * z + 0.3 * x1 + v;
        let y = 1.0 + spec.beta_treatment * d + 0.2 * x1 - 0.1 * x2 + u;
        for (c, val) in cols.iter_mut().zip([y, d, z, x1, x2]) {
            c.push(val);
        }
    }
    let [y, d, z, x1, x2] = cols;
    Ok(DesignMatrix {
        outcome: Column::new("y", y),
        treatments: vec![Column::new("d", d)],
        instruments: vec![Column::new("z", z)],
        controls: vec![Column::new("x1", x1), Column::new("x2", x2)],
        selection: None,
        dropped: 0,
    })
}

/// Selection design for [`crate::econometrics::heckman_iv`]. Errors
/// `(v, u, e)` of the selection, outcome and first-stage equations are joint
/// normal with `corr(v, u) = selection_rho`, `corr(u, e) = endogeneity_rho`
/// and `corr(v, e) = 0`. The exclusion variable `w` enters selection only.
pub fn gen_selection_dgp(spec: &DgpSpec) -> Result<HeckmanData, SynthError> {
    spec.validate()?;
    let (rs, re) = (spec.selection_rho, spec.endogeneity_rho);
    // Cholesky factor of [[1, rs, 0], [rs, 1, re], [0, re, 1]].
    let l22 = (1.0 - rs * rs).sqrt();
    let l32 = re / l22;
    let l33sq = 1.0 - l32 * l32;
    if l33sq <= 0.0 {
        return Err(SynthError::InvalidSpec("error correlation matrix is not positive definite".into()));
    }
    let l33 = l33sq.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cols: [Vec<f64>; 6] = Default::default();
    let mut selected = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (a, b, c) = (std_normal(&mut rng), std_normal(&mut rng), std_normal(&mut rng));
        let v = a;
        let u = rs * a + l22 * b;
        let e = l32 * b + l33 * c;
        let z = std_normal(&mut rng);
        let w = std_normal(&mut rng);
        let x1 = std_normal(&mut rng);
        let x2 = f64::from(u8::from(rng.random_bool(0.3)));
        let d = spec.instrument_strength * z + 0.3 * x1 + e;
        let s = 0.3 + 0.8 * w + 0.4 * z + 0.3 * x1 - 0.2 * x2 + v > 0.0;
        let y = if s { 1.0 + spec.beta_treatment * d + 0.2 * x1 - 0.1 * x2 + u } else { 0.0 };
        selected.push(s);
        for (col, val) in cols.iter_mut().zip([y, d, z, w, x1, x2]) {
            col.push(val);
        }
    }
    let [y, d, z, w, x1, x2] = cols;
    Ok(HeckmanData {
        selected,
        outcome: Column::new("y", y),
        treatment: Column::new("d", d),
        instrument: Column::new("z", z),
        exclusion: Column::new("w", w),
        controls: vec![Column::new("x1", x1), Column::new("x2", x2)],
        clusters: None,
    })
}

/// Count design for [`crate::econometrics::iv_poisson_gmm`]:
/// `y ~ Poisson(exp(0.3 + beta d + 0.1 x1) eta)` with
/// `eta = exp(sigma u - sigma^2 / 2)`, `d = pi z + 0.3 x1 + v` and
/// `corr(u, v) = rho`, so `E[eta | z, x1] = 1`.
pub fn gen_count_dgp(spec: &DgpSpec) -> Result<DesignMatrix, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rho = spec.endogeneity_rho;
    let sigma = spec.count_sigma;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cols: [Vec<f64>; 4] = Default::default();
    for _ in 0..spec.n {
        let z = noise.sample(&mut rng);
        let x1 = noise.sample(&mut rng);
        let v = noise.sample(&mut rng);
        let u = rho * v + (1.0 - rho * rho).sqrt() * noise.sample(&mut rng);
        let d = spec.instrument_strength * z + 0.3 * x1 + v;
        let eta = (sigma * u - 0.5 * sigma * sigma).exp();
        let mu = (0.3 + spec.beta_treatment * d + 0.1 * x1).exp() * eta;
        let y = if mu > 0.0 { Poisson::new(mu).expect("positive mean").sample(&mut rng) } else { 0.0 };
        for (c, val) in cols.iter_mut().zip([y, d, z, x1]) {
            c.push(val);
        }
    }
    let [y, d, z, x1] = cols;
    Ok(DesignMatrix {
        outcome: Column::new("y", y),
        treatments: vec![Column::new("d", d)],
        instruments: vec![Column::new("z", z)],
        controls: vec![Column::new("x1", x1)],
        selection: None,
        dropped: 0,
    })
}
