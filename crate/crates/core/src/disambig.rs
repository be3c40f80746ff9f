//! Inventor-career disambiguation within exact-name blocks.
//!
//! Mentions (one inventor position on one patent) are blocked on their
//! normalized name. Inside a block every pair of mentions is scored against a
//! [`ScoringScheme`]; pairs at or above the threshold are linked and careers
//! are the connected components of the resulting match graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Attribute, FrequencyTables, NameKey, PatentRecord, Rarity};

/// Score a pair needs to be linked.
pub const MATCH_THRESHOLD: u32 = 100;

#[derive(Debug, Error)]
pub enum DisambigError {
    #[error("frequency table for {0} is missing")]
    MissingFrequencyTable(Attribute),
    #[error("record {0} has no abstract")]
    MissingAbstract(String),
    #[error("mentions {0} and {1} do not share a normalized name")]
    DifferentNames(String, String),
    #[error("mention {0} is not part of the clustered universe")]
    UnknownMention(String),
    #[error("predicted and true partitions cover different mentions")]
    UniverseMismatch,
    #[error("invalid scheme definition: {0}")]
    InvalidScheme(String),
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Identifies one inventor position on one record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MentionId {
    pub record_id: String,
    pub position: usize,
}

impl MentionId {
    pub fn new(record_id: impl Into<String>, position: usize) -> Self {
        Self {
            record_id: record_id.into(),
            position,
        }
    }
}

impl fmt::Display for MentionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.record_id, self.position)
    }
}

impl FromStr for MentionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (rid, pos) = s.rsplit_once(':').ok_or_else(|| format!("bad mention id {s:?}"))?;
        let position = pos.parse().map_err(|_| format!("bad mention position in {s:?}"))?;
        Ok(Self::new(rid, position))
    }
}

/// A record seen through one of its inventors.
#[derive(Debug, Clone)]
pub struct Mention<'a> {
    pub id: MentionId,
    pub name: String,
    pub record: &'a PatentRecord,
    /// Normalized names of the other inventors on the record.
    pub co_inventors: BTreeSet<String>,
}

impl<'a> Mention<'a> {
    /// All mentions of a record whose names survive normalization.
    pub fn from_record(record: &'a PatentRecord) -> Vec<Mention<'a>> {
        let names: Vec<Option<String>> = record
            .inventors
            .iter()
            .map(|raw| crate::corpus::normalize_name(raw).ok())
            .collect();
        names
            .iter()
            .enumerate()
            .filter_map(|(pos, name)| {
                let name = name.clone()?;
                let co_inventors = names
                    .iter()
                    .enumerate()
                    .filter(|(other, n)| *other != pos && n.as_deref() != Some(name.as_str()))
                    .filter_map(|(_, n)| n.clone())
                    .collect();
                Some(Mention {
                    id: MentionId::new(record.record_id.clone(), pos),
                    name,
                    record,
                    co_inventors,
                })
            })
            .collect()
    }
}

/// Mentions sharing one normalized name.
#[derive(Debug, Clone)]
pub struct NameBlock<'a> {
    pub name: String,
    pub mentions: Vec<Mention<'a>>,
}

/// Splits all mentions of `records` into disjoint exact-name blocks, ordered
/// by name.
pub fn block_by_name(records: &[PatentRecord]) -> Vec<NameBlock<'_>> {
    let mut blocks: BTreeMap<String, Vec<Mention<'_>>> = BTreeMap::new();
    for record in records {
        for mention in Mention::from_record(record) {
            blocks.entry(mention.name.clone()).or_default().push(mention);
        }
    }
    blocks
        .into_iter()
        .map(|(name, mut mentions)| {
            mentions.sort_by(|a, b| a.id.cmp(&b.id));
            NameBlock { name, mentions }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Municipality,
    Assignee,
    TechnologyClass,
    CoInventor,
    Citation,
    Abstract,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Municipality,
        Criterion::Assignee,
        Criterion::TechnologyClass,
        Criterion::CoInventor,
        Criterion::Citation,
        Criterion::Abstract,
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Municipality => "municipality",
            Criterion::Assignee => "assignee",
            Criterion::TechnologyClass => "technology_class",
            Criterion::CoInventor => "co_inventor",
            Criterion::Citation => "citation",
            Criterion::Abstract => "abstract",
        })
    }
}

impl FromStr for Criterion {
    type Err = DisambigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| DisambigError::InvalidScheme(format!("unknown criterion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    /// GDR records filed 1989–1990.
    Gdr1989,
    /// DPMA records after 1990, with citations.
    DpmaPost90,
    /// GDR records back to 1980, abstracts replacing address and assignee.
    Gdr1980Abstract,
    /// Loaded from a file.
    Custom,
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeId::Gdr1989 => "gdr1989",
            SchemeId::DpmaPost90 => "dpma",
            SchemeId::Gdr1980Abstract => "gdr1980-abstract",
            SchemeId::Custom => "custom",
        })
    }
}

impl FromStr for SchemeId {
    type Err = DisambigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "gdr1989" | "gdr-1989" => Ok(SchemeId::Gdr1989),
            "dpma" | "dpma-post90" => Ok(SchemeId::DpmaPost90),
            "gdr1980-abstract" | "gdr-1980-abstract" => Ok(SchemeId::Gdr1980Abstract),
            "custom" => Ok(SchemeId::Custom),
            other => Err(DisambigError::UnknownScheme(other.to_string())),
        }
    }
}

/// Integer scores per (criterion, name rarity, attribute rarity).
///
/// Criteria whose score does not depend on rarity (co-inventors, citations)
/// carry the same value in all four cells. For [`Criterion::Abstract`] the
/// cell holds the multiplier applied to the cosine similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringScheme {
    pub id: SchemeId,
    pub cells: BTreeMap<(Criterion, Rarity, Rarity), u32>,
    pub threshold: u32,
    /// Count a shared secondary IPC subclass toward the technology criterion.
    pub use_secondary_ipc: bool,
}

impl ScoringScheme {
    fn with_cells(id: SchemeId, rows: &[(Criterion, [u32; 4])]) -> Self {
        use Rarity::{Common, Rare};
        let mut cells = BTreeMap::new();
        for &(criterion, [cc, cr, rc, rr]) in rows {
            // [name common/attr common, name common/attr rare, name rare/attr common, rare/rare]
            cells.insert((criterion, Common, Common), cc);
            cells.insert((criterion, Common, Rare), cr);
            cells.insert((criterion, Rare, Common), rc);
            cells.insert((criterion, Rare, Rare), rr);
        }
        Self {
            id,
            cells,
            threshold: MATCH_THRESHOLD,
            use_secondary_ipc: false,
        }
    }

    /// Scores for GDR records 1989–1990.
    pub fn gdr_1989() -> Self {
        Self::with_cells(
            SchemeId::Gdr1989,
            &[
                (Criterion::Municipality, [80, 80, 80, 100]),
                (Criterion::Assignee, [80, 80, 80, 100]),
                (Criterion::TechnologyClass, [50, 50, 50, 80]),
                (Criterion::CoInventor, [120; 4]),
            ],
        )
    }

    /// Scores for DPMA records after 1990.
    pub fn dpma_post90() -> Self {
        Self::with_cells(
            SchemeId::DpmaPost90,
            &[
                (Criterion::Municipality, [80, 80, 80, 100]),
                (Criterion::Assignee, [80, 80, 80, 100]),
                (Criterion::TechnologyClass, [50, 50, 50, 80]),
                (Criterion::Citation, [120; 4]),
                (Criterion::CoInventor, [120; 4]),
            ],
        )
    }

    /// Scores for GDR records 1980–1990 where abstracts stand in for address
    /// and assignee.
    pub fn gdr_1980_abstract() -> Self {
        Self::with_cells(
            SchemeId::Gdr1980Abstract,
            &[
                (Criterion::TechnologyClass, [50, 50, 50, 80]),
                (Criterion::CoInventor, [120; 4]),
                (Criterion::Abstract, [80, 80, 100, 100]),
            ],
        )
    }

    pub fn by_id(id: SchemeId) -> Result<Self, DisambigError> {
        match id {
            SchemeId::Gdr1989 => Ok(Self::gdr_1989()),
            SchemeId::DpmaPost90 => Ok(Self::dpma_post90()),
            SchemeId::Gdr1980Abstract => Ok(Self::gdr_1980_abstract()),
            SchemeId::Custom => Err(DisambigError::UnknownScheme("custom".into())),
        }
    }

    pub fn score(&self, criterion: Criterion, name: Rarity, attr: Rarity) -> Option<u32> {
        self.cells.get(&(criterion, name, attr)).copied()
    }

    pub fn has(&self, criterion: Criterion) -> bool {
        self.cells.keys().any(|(c, _, _)| *c == criterion)
    }

    /// Parses a scheme table with columns
    /// `criterion,name_rarity,attr_rarity,score,threshold`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DisambigError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut cells = BTreeMap::new();
        let mut threshold = None;
        for row in rdr.records() {
            let row = row?;
            if row.len() != 5 {
                return Err(DisambigError::InvalidScheme(format!("expected 5 fields, got {}", row.len())));
            }
            let criterion: Criterion = row[0].parse()?;
            let parse_rarity = |s: &str| {
                s.parse::<Rarity>()
                    .map_err(|_| DisambigError::InvalidScheme(format!("bad rarity {s:?}")))
            };
            let name = parse_rarity(&row[1])?;
            let attr = parse_rarity(&row[2])?;
            let score: u32 = row[3]
                .trim()
                .parse()
                .map_err(|_| DisambigError::InvalidScheme(format!("bad score {:?}", &row[3])))?;
            let t: u32 = row[4]
                .trim()
                .parse()
                .map_err(|_| DisambigError::InvalidScheme(format!("bad threshold {:?}", &row[4])))?;
            if threshold.is_some_and(|prev| prev != t) {
                return Err(DisambigError::InvalidScheme("threshold differs between rows".into()));
            }
            threshold = Some(t);
            if cells.insert((criterion, name, attr), score).is_some() {
                return Err(DisambigError::InvalidScheme(format!(
                    "duplicate cell {criterion}/{name}/{attr}"
                )));
            }
        }
        let threshold = threshold.ok_or_else(|| DisambigError::InvalidScheme("no rows".into()))?;
        Ok(Self {
            id: SchemeId::Custom,
            cells,
            threshold,
            use_secondary_ipc: false,
        })
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), DisambigError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["criterion", "name_rarity", "attr_rarity", "score", "threshold"])?;
        for ((c, n, a), s) in &self.cells {
            wtr.write_record([c.to_string(), n.to_string(), a.to_string(), s.to_string(), self.threshold.to_string()])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Score of one mention pair, itemized by criterion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairScore {
    pub record_a: MentionId,
    pub record_b: MentionId,
    pub total: u32,
    pub breakdown: Vec<(Criterion, u32)>,
}

impl PairScore {
    fn new(a: &MentionId, b: &MentionId, breakdown: Vec<(Criterion, u32)>) -> Self {
        let (record_a, record_b) = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        Self {
            record_a,
            record_b,
            total: breakdown.iter().map(|(_, p)| p).sum(),
            breakdown,
        }
    }
}

fn table(tables: &FrequencyTables, attribute: Attribute) -> Result<&crate::corpus::FrequencyTable, DisambigError> {
    tables
        .get(attribute)
        .ok_or(DisambigError::MissingFrequencyTable(attribute))
}

fn shared_value_rarity(
    a: Option<String>,
    b: Option<String>,
    tables: &FrequencyTables,
    attribute: Attribute,
) -> Result<Option<Rarity>, DisambigError> {
    match (a, b) {
        (Some(x), Some(y)) if x == y => Ok(Some(table(tables, attribute)?.rarity(&x))),
        _ => Ok(None),
    }
}

/// Scores a pair of same-name mentions on every criterion of `scheme` except
/// the abstract similarity term.
pub fn score_pair(
    a: &Mention<'_>,
    b: &Mention<'_>,
    scheme: &ScoringScheme,
    tables: &FrequencyTables,
) -> Result<PairScore, DisambigError> {
    if a.name != b.name {
        return Err(DisambigError::DifferentNames(a.id.to_string(), b.id.to_string()));
    }
    let name_rarity = table(tables, Attribute::Name)?.rarity(&a.name);
    let mut breakdown = Vec::new();
    let mut add = |criterion: Criterion, attr: Rarity| {
        if let Some(points) = scheme.score(criterion, name_rarity, attr) {
            breakdown.push((criterion, points));
        }
    };

    if scheme.has(Criterion::Municipality) {
        let shared = shared_value_rarity(
            a.record.normalized_municipality(),
            b.record.normalized_municipality(),
            tables,
            Attribute::Municipality,
        )?;
        if let Some(r) = shared {
            add(Criterion::Municipality, r);
        }
    }
    if scheme.has(Criterion::Assignee) {
        let shared = shared_value_rarity(
            a.record.normalized_applicant(),
            b.record.normalized_applicant(),
            tables,
            Attribute::Assignee,
        )?;
        if let Some(r) = shared {
            add(Criterion::Assignee, r);
        }
    }
    if scheme.has(Criterion::TechnologyClass) {
        let ipc = table(tables, Attribute::IpcClass)?;
        let classes = |m: &Mention<'_>| -> BTreeSet<String> {
            let mut set = BTreeSet::new();
            set.extend(crate::corpus::normalize_value(&m.record.ipc_main));
            if scheme.use_secondary_ipc {
                set.extend(m.record.ipc_secondary.iter().filter_map(|c| crate::corpus::normalize_value(c)));
            }
            set
        };
        let (ca, cb) = (classes(a), classes(b));
        // a rare shared class scores at least as much as a common one
        let best = ca.intersection(&cb).map(|c| ipc.rarity(c)).max();
        if let Some(r) = best {
            add(Criterion::TechnologyClass, r);
        }
    }
    if scheme.has(Criterion::CoInventor) && !a.co_inventors.is_disjoint(&b.co_inventors) {
        add(Criterion::CoInventor, Rarity::Common);
    }
    if scheme.has(Criterion::Citation) {
        let cites = |x: &Mention<'_>, y: &Mention<'_>| x.record.cited_record_ids.contains(&y.record.record_id);
        if cites(a, b) || cites(b, a) {
            add(Criterion::Citation, Rarity::Common);
        }
    }
    Ok(PairScore::new(&a.id, &b.id, breakdown))
}

const GERMAN_STOPWORDS: &[&str] = &[
    "aber", "als", "am", "an", "auch", "auf", "aus", "bei", "bis", "das", "dass", "dem", "den",
    "der", "des", "die", "dies", "diese", "dieser", "durch", "ein", "eine", "einem", "einen",
    "einer", "eines", "es", "fuer", "für", "hat", "im", "in", "ist", "mit", "nach", "nicht",
    "oder", "sich", "sie", "sind", "so", "um", "und", "unter", "von", "vor", "wird", "werden",
    "wie", "zu", "zum", "zur", "über", "ueber", "wobei", "welche", "welcher", "dass", "kann",
];

/// Lowercase unigram tokens with German stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .filter(|t| !GERMAN_STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// TF-IDF weighting fitted on the abstracts of one name block.
#[derive(Debug, Clone, Default)]
pub struct TfIdf {
    idf: BTreeMap<String, f64>,
    n_docs: usize,
}

impl TfIdf {
    /// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`, so terms present in every
    /// document keep a positive weight.
    pub fn fit<'s>(docs: impl IntoIterator<Item = &'s str>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let terms: BTreeSet<String> = tokenize(doc).into_iter().collect();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n_docs as f64) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        Self { idf, n_docs }
    }

    pub fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        let unseen = ((1.0 + self.n_docs as f64) / 1.0).ln() + 1.0;
        tf.into_iter()
            .map(|(t, c)| {
                let w = self.idf.get(&t).copied().unwrap_or(unseen);
                (t, c * w)
            })
            .collect()
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        cosine(&self.vector(a), &self.vector(b))
    }
}

/// Cosine similarity of two sparse nonnegative vectors, 0 when either is zero.
pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

pub fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor().max(0.0) as u32
}

/// Like [`score_pair`] plus the abstract-similarity term: the cosine
/// similarity times the scheme's multiplier for the name's rarity, rounded
/// half up.
pub fn score_pair_abstract(
    a: &Mention<'_>,
    b: &Mention<'_>,
    scheme: &ScoringScheme,
    tables: &FrequencyTables,
    tfidf: &TfIdf,
) -> Result<PairScore, DisambigError> {
    let text_a = a
        .record
        .abstract_text
        .as_deref()
        .ok_or_else(|| DisambigError::MissingAbstract(a.record.record_id.clone()))?;
    let text_b = b
        .record
        .abstract_text
        .as_deref()
        .ok_or_else(|| DisambigError::MissingAbstract(b.record.record_id.clone()))?;
    let base = score_pair(a, b, scheme, tables)?;
    let name_rarity = table(tables, Attribute::Name)?.rarity(&a.name);
    let Some(multiplier) = scheme.score(Criterion::Abstract, name_rarity, Rarity::Common) else {
        return Ok(base);
    };
    let sim = tfidf.cosine(text_a, text_b);
    let mut breakdown = base.breakdown;
    breakdown.push((Criterion::Abstract, round_half_up(sim * multiplier as f64)));
    Ok(PairScore::new(&a.id, &b.id, breakdown))
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Transitive closure of all pairs scoring at least `threshold`.
///
/// Returns a partition of `universe`: each cluster sorted, clusters ordered
/// by their smallest member. Unmatched mentions become singletons.
pub fn cluster<T: Ord + Clone + fmt::Display>(
    universe: &[T],
    matches: impl IntoIterator<Item = (T, T, u32)>,
    threshold: u32,
) -> Result<Vec<Vec<T>>, DisambigError> {
    let index: BTreeMap<&T, usize> = universe.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut uf = UnionFind::new(universe.len());
    for (a, b, total) in matches {
        if total < threshold {
            continue;
        }
        let ia = *index.get(&a).ok_or_else(|| DisambigError::UnknownMention(a.to_string()))?;
        let ib = *index.get(&b).ok_or_else(|| DisambigError::UnknownMention(b.to_string()))?;
        uf.union(ia, ib);
    }
    let mut groups: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for (i, m) in universe.iter().enumerate() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(m.clone());
    }
    let mut clusters: Vec<Vec<T>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g.dedup();
            g
        })
        .collect();
    clusters.sort();
    Ok(clusters)
}

/// Clusters scored pairs over the given mention universe.
pub fn cluster_pairs(
    universe: &[MentionId],
    pairs: &[PairScore],
    threshold: u32,
) -> Result<Vec<Vec<MentionId>>, DisambigError> {
    cluster(
        universe,
        pairs.iter().map(|p| (p.record_a.clone(), p.record_b.clone(), p.total)),
        threshold,
    )
}

/// A disambiguated inventor career.
#[derive(Debug, Clone, PartialEq)]
pub struct CareerCluster {
    pub career_id: String,
    pub name_key: NameKey,
    pub members: BTreeSet<MentionId>,
    pub member_records: BTreeSet<String>,
    pub ipc_main_mode: String,
    pub ipc_secondary_mode: Option<String>,
    pub first_year: i32,
    pub last_year: i32,
    /// Filing year of every member record, sorted.
    pub filing_years: Vec<i32>,
    /// (filing year, normalized municipality) of member records with an address.
    pub locations: Vec<(i32, String)>,
    pub applicants: BTreeSet<String>,
}

/// Most frequent value; ties go to the lexicographically smallest.
pub fn mode<'s>(values: impl IntoIterator<Item = &'s str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(v, _)| v.to_string())
}

impl CareerCluster {
    /// Builds the career summary for one cluster of mentions.
    pub fn from_members(
        career_id: String,
        name_key: NameKey,
        members: &[MentionId],
        records: &BTreeMap<&str, &PatentRecord>,
    ) -> Self {
        let recs: Vec<&PatentRecord> = members
            .iter()
            .filter_map(|m| records.get(m.record_id.as_str()).copied())
            .collect();
        let mut filing_years: Vec<i32> = recs.iter().map(|r| r.filing_year).collect();
        filing_years.sort_unstable();
        let mut locations: Vec<(i32, String)> = recs
            .iter()
            .filter_map(|r| r.normalized_municipality().map(|m| (r.filing_year, m)))
            .collect();
        locations.sort();
        Self {
            career_id,
            name_key,
            members: members.iter().cloned().collect(),
            member_records: recs.iter().map(|r| r.record_id.clone()).collect(),
            ipc_main_mode: mode(recs.iter().map(|r| r.ipc_main.as_str())).unwrap_or_default(),
            ipc_secondary_mode: mode(recs.iter().flat_map(|r| r.ipc_secondary.iter().map(String::as_str))),
            first_year: filing_years.first().copied().unwrap_or_default(),
            last_year: filing_years.last().copied().unwrap_or_default(),
            filing_years,
            locations,
            applicants: recs.iter().filter_map(|r| r.normalized_applicant()).collect(),
        }
    }

    /// Modal municipality over the member records.
    pub fn home_municipality(&self) -> Option<String> {
        mode(self.locations.iter().map(|(_, m)| m.as_str()))
    }
}

#[derive(Debug, Clone)]
pub struct DisambigOptions {
    /// Prefix of generated career IDs, e.g. `G` or `D`.
    pub id_prefix: String,
}

impl Default for DisambigOptions {
    fn default() -> Self {
        Self { id_prefix: "C".into() }
    }
}

#[derive(Debug, Clone)]
pub struct Disambiguation {
    pub careers: Vec<CareerCluster>,
    pub pairs: Vec<PairScore>,
}

fn score_block(
    block: &NameBlock<'_>,
    scheme: &ScoringScheme,
    tables: &FrequencyTables,
) -> Result<Vec<PairScore>, DisambigError> {
    let tfidf = scheme.has(Criterion::Abstract).then(|| {
        TfIdf::fit(block.mentions.iter().filter_map(|m| m.record.abstract_text.as_deref()))
    });
    let mut out = Vec::new();
    for (i, a) in block.mentions.iter().enumerate() {
        for b in &block.mentions[i + 1..] {
            let score = match &tfidf {
                Some(model) => match score_pair_abstract(a, b, scheme, tables, model) {
                    Err(DisambigError::MissingAbstract(_)) => score_pair(a, b, scheme, tables)?,
                    other => other?,
                },
                None => score_pair(a, b, scheme, tables)?,
            };
            out.push(score);
        }
    }
    Ok(out)
}

/// Runs blocking, scoring and clustering over a record population.
///
/// Blocks are scored in parallel; the result does not depend on the number
/// of worker threads.
pub fn disambiguate(
    records: &[PatentRecord],
    scheme: &ScoringScheme,
    tables: &FrequencyTables,
    options: &DisambigOptions,
) -> Result<Disambiguation, DisambigError> {
    let name_table = table(tables, Attribute::Name)?;
    let blocks = block_by_name(records);
    let scored: Vec<Vec<PairScore>> = blocks
        .par_iter()
        .map(|b| score_block(b, scheme, tables))
        .collect::<Result<_, _>>()?;

    let by_id: BTreeMap<&str, &PatentRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut careers = Vec::new();
    let mut counter = 0usize;
    for (block, pairs) in blocks.iter().zip(&scored) {
        let universe: Vec<MentionId> = block.mentions.iter().map(|m| m.id.clone()).collect();
        for members in cluster_pairs(&universe, pairs, scheme.threshold)? {
            counter += 1;
            careers.push(CareerCluster::from_members(
                format!("{}{:06}", options.id_prefix, counter),
                name_table.name_key(&block.name),
                &members,
                &by_id,
            ));
        }
    }
    Ok(Disambiguation {
        careers,
        pairs: scored.into_iter().flatten().collect(),
    })
}

/// Pairwise precision, recall and F1 of a predicted partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseMetrics {
    pub pairwise_precision: f64,
    pub pairwise_recall: f64,
    pub f1: f64,
}

fn pairs_in(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

/// Compares two partitions of the same mention universe on the set of
/// same-cluster pairs. Precision is 1 when no pair is predicted, recall is 1
/// when the truth has no pair.
pub fn evaluate_clustering<T: Ord + Clone>(
    predicted: &[Vec<T>],
    truth: &[Vec<T>],
) -> Result<PairwiseMetrics, DisambigError> {
    let label = |partition: &[Vec<T>]| -> Result<BTreeMap<T, usize>, DisambigError> {
        let mut map = BTreeMap::new();
        for (i, c) in partition.iter().enumerate() {
            for m in c {
                if map.insert(m.clone(), i).is_some() {
                    return Err(DisambigError::UniverseMismatch);
                }
            }
        }
        Ok(map)
    };
    let p = label(predicted)?;
    let t = label(truth)?;
    if p.len() != t.len() || p.keys().zip(t.keys()).any(|(a, b)| a != b) {
        return Err(DisambigError::UniverseMismatch);
    }
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (m, &pc) in &p {
        *joint.entry((pc, t[m])).or_default() += 1;
    }
    let true_pos: u64 = joint.values().map(|&n| pairs_in(n)).sum();
    let pred_pairs: u64 = predicted.iter().map(|c| pairs_in(c.len())).sum();
    let truth_pairs: u64 = truth.iter().map(|c| pairs_in(c.len())).sum();
    let precision = if pred_pairs == 0 { 1.0 } else { true_pos as f64 / pred_pairs as f64 };
    let recall = if truth_pairs == 0 { 1.0 } else { true_pos as f64 / truth_pairs as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PairwiseMetrics {
        pairwise_precision: precision,
        pairwise_recall: recall,
        f1,
    })
}

/// Writes `career_id,record_id,name`, one row per member mention.
pub fn write_careers<W: Write>(writer: W, careers: &[CareerCluster]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["career_id", "record_id", "name"])?;
    for c in careers {
        for m in &c.members {
            wtr.write_record([c.career_id.as_str(), m.record_id.as_str(), c.name_key.normalized.as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a careers table back into (career_id → member mentions), resolving
/// each member record to the inventor position carrying the career's name.
pub fn read_career_assignments<R: Read>(
    reader: R,
    records: &[PatentRecord],
) -> Result<BTreeMap<String, (String, Vec<MentionId>)>, DisambigError> {
    let positions: HashMap<(&str, String), usize> = records
        .iter()
        .flat_map(|r| Mention::from_record(r).into_iter().map(move |m| ((r.record_id.as_str(), m.name), m.id.position)))
        .collect();
    let mut out: BTreeMap<String, (String, Vec<MentionId>)> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(reader);
    for row in rdr.records() {
        let row = row?;
        let (career, record, name) = (&row[0], &row[1], &row[2]);
        let pos = positions
            .get(&(record, name.to_string()))
            .ok_or_else(|| DisambigError::UnknownMention(format!("{record}/{name}")))?;
        let entry = out.entry(career.to_string()).or_insert_with(|| (name.to_string(), Vec::new()));
        entry.1.push(MentionId::new(record, *pos));
    }
    Ok(out)
}
