//! Patent record ingestion, inventor-name normalization and attribute
//! frequency tables.
//!
//! Rarity of a value is judged against the median count of all distinct
//! values of the same attribute within one source population. Values counted
//! strictly below the median are [`Rarity::Rare`]; everything else is
//! [`Rarity::Common`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earliest filing year accepted on ingest.
pub const MIN_FILING_YEAR: i32 = 1980;
/// Latest filing year accepted on ingest.
pub const MAX_FILING_YEAR: i32 = 2000;

/// Academic and professional titles removed from inventor name fields.
pub const TITLE_STOPLIST: &[&str] = &[
    "DR", "PROF", "DIPL", "ING", "MED", "HABIL", "RER", "NAT", "PHIL", "DD", "OBERING",
];

const GDR_HEADER: &[&str] = &[
    "record_id",
    "filing_year",
    "inventors",
    "applicant",
    "ipc_main",
    "ipc_secondary",
    "municipality",
    "abstract",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("name is empty after normalization: {0:?}")]
    EmptyAfterNormalization(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("no records supplied")]
    EmptyInput,
    #[error("attribute {0} has no non-empty values")]
    AllNull(Attribute),
    #[error("header does not match the {schema} schema: {detail}")]
    SchemaMismatch { schema: Source, detail: String },
    #[error("row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which patent office a record was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// East German patent office, 1980–1990.
    Gdr,
    /// German Patent and Trademark Office, post-1990.
    Dpma,
}

impl Source {
    pub fn header(self) -> Vec<&'static str> {
        let mut cols = GDR_HEADER.to_vec();
        if self == Source::Dpma {
            cols.push("cited_record_ids");
        }
        cols
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Gdr => "GDR",
            Source::Dpma => "DPMA",
        })
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gdr" => Ok(Source::Gdr),
            "dpma" => Ok(Source::Dpma),
            other => Err(CorpusError::UnknownAttribute(other.to_string())),
        }
    }
}

/// One patent document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentRecord {
    pub record_id: String,
    pub source: Source,
    pub filing_year: i32,
    /// Raw inventor name strings in document order.
    pub inventors: Vec<String>,
    pub applicant: Option<String>,
    /// Main IPC subclass, e.g. `C08F`.
    pub ipc_main: String,
    pub ipc_secondary: Vec<String>,
    pub municipality: Option<String>,
    pub abstract_text: Option<String>,
    /// Records cited by this one (DPMA only).
    pub cited_record_ids: Vec<String>,
}

impl PatentRecord {
    /// Normalized names of all inventors that survive normalization.
    pub fn normalized_inventors(&self) -> Vec<String> {
        self.inventors
            .iter()
            .filter_map(|raw| normalize_name(raw).ok())
            .collect()
    }

    pub fn normalized_municipality(&self) -> Option<String> {
        self.municipality.as_deref().and_then(normalize_value)
    }

    pub fn normalized_applicant(&self) -> Option<String> {
        self.applicant.as_deref().and_then(normalize_value)
    }

    fn check(&self) -> Result<(), String> {
        if !(MIN_FILING_YEAR..=MAX_FILING_YEAR).contains(&self.filing_year) {
            return Err(format!(
                "filing_year {} outside [{MIN_FILING_YEAR}, {MAX_FILING_YEAR}]",
                self.filing_year
            ));
        }
        if self.ipc_main.is_empty() {
            return Err("ipc_main is empty".into());
        }
        if self.source == Source::Gdr && !self.cited_record_ids.is_empty() {
            return Err("GDR records carry no citations".into());
        }
        if self.inventors.is_empty() {
            return Err("no inventors".into());
        }
        Ok(())
    }
}

/// Two-way classification of how often a value occurs in its population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rarity {
    Common,
    Rare,
}

impl fmt::Display for Rarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rarity::Common => "common",
            Rarity::Rare => "rare",
        })
    }
}

impl FromStr for Rarity {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "common" => Ok(Rarity::Common),
            "rare" => Ok(Rarity::Rare),
            other => Err(CorpusError::UnknownAttribute(other.to_string())),
        }
    }
}

/// A normalized inventor name together with its population frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameKey {
    pub normalized: String,
    pub frequency: u64,
    pub rarity: Rarity,
}

/// Normalizes a raw inventor name: titles dropped, upper case, umlauts
/// transliterated, punctuation other than hyphens removed, whitespace
/// collapsed.
///
/// ```
/// use careerlink::corpus::normalize_name;
/// assert_eq!(normalize_name("Dr. Jörg Müßig").unwrap(), "JOERG MUESSIG");
/// ```
pub fn normalize_name(raw: &str) -> Result<String, CorpusError> {
    let mut folded = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            'ä' | 'Ä' => folded.push_str("AE"),
            'ö' | 'Ö' => folded.push_str("OE"),
            'ü' | 'Ü' => folded.push_str("UE"),
            'ß' | 'ẞ' => folded.push_str("SS"),
            '-' | '‐' | '–' => folded.push('-'),
            c if c.is_ascii_alphabetic() => folded.push(c.to_ascii_uppercase()),
            c if c.is_alphabetic() => {
                if let Some(base) = fold_accent(c) {
                    folded.push(base);
                }
            }
            // everything else separates tokens
            _ => folded.push(' '),
        }
    }

    let tokens: Vec<String> = folded
        .split_whitespace()
        .filter_map(|tok| {
            let parts: Vec<&str> = tok.split('-').filter(|p| !p.is_empty()).collect();
            if parts.is_empty() || parts.iter().all(|p| TITLE_STOPLIST.contains(p)) {
                None
            } else {
                Some(parts.join("-"))
            }
        })
        .collect();

    if tokens.is_empty() {
        return Err(CorpusError::EmptyAfterNormalization(raw.to_string()));
    }
    Ok(tokens.join(" "))
}

fn fold_accent(c: char) -> Option<char> {
    let upper = c.to_uppercase().next()?;
    let base = match upper {
        'À' | 'Á' | 'Â' | 'Ã' | 'Å' | 'Ą' => 'A',
        'Ç' | 'Ć' | 'Č' => 'C',
        'Ď' => 'D',
        'È' | 'É' | 'Ê' | 'Ë' | 'Ę' | 'Ě' => 'E',
        'Ì' | 'Í' | 'Î' | 'Ï' => 'I',
        'Ł' => 'L',
        'Ñ' | 'Ń' | 'Ň' => 'N',
        'Ò' | 'Ó' | 'Ô' | 'Õ' | 'Ø' => 'O',
        'Ř' => 'R',
        'Ś' | 'Š' => 'S',
        'Ť' => 'T',
        'Ù' | 'Ú' | 'Û' | 'Ů' => 'U',
        'Ý' => 'Y',
        'Ź' | 'Ż' | 'Ž' => 'Z',
        _ => return None,
    };
    Some(base)
}

/// Normalization for municipality/assignee strings: trimmed, upper case,
/// single spaces. Empty strings map to `None`.
pub fn normalize_value(raw: &str) -> Option<String> {
    let joined = raw
        .split_whitespace()
        .map(|t| t.to_uppercase())
        .collect::<Vec<_>>()
        .join(" ");
    (!joined.is_empty()).then_some(joined)
}

/// Attributes with a population frequency table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    Name,
    Municipality,
    Assignee,
    IpcClass,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Name,
        Attribute::Municipality,
        Attribute::Assignee,
        Attribute::IpcClass,
    ];

    fn values(self, record: &PatentRecord) -> Vec<String> {
        match self {
            Attribute::Name => record.normalized_inventors(),
            Attribute::Municipality => record.normalized_municipality().into_iter().collect(),
            Attribute::Assignee => record.normalized_applicant().into_iter().collect(),
            Attribute::IpcClass => normalize_value(&record.ipc_main).into_iter().collect(),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Name => "name",
            Attribute::Municipality => "municipality",
            Attribute::Assignee => "assignee",
            Attribute::IpcClass => "ipc_class",
        })
    }
}

impl FromStr for Attribute {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "name" => Ok(Attribute::Name),
            "municipality" => Ok(Attribute::Municipality),
            "assignee" | "applicant" => Ok(Attribute::Assignee),
            "ipc" | "ipc_class" | "technology_class" => Ok(Attribute::IpcClass),
            other => Err(CorpusError::UnknownAttribute(other.to_string())),
        }
    }
}

/// What the median of a frequency table is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianBasis {
    /// One count per distinct value.
    #[default]
    DistinctValues,
    /// One count per mention, so frequent values weigh more.
    Mentions,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyOptions {
    pub median_basis: MedianBasis,
    /// Return an empty table instead of [`CorpusError::AllNull`] when no
    /// record carries the attribute.
    pub allow_empty: bool,
}

/// Counts of every normalized value of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub attribute: Attribute,
    pub counts: BTreeMap<String, u64>,
    pub median: f64,
}

impl FrequencyTable {
    pub fn count(&self, value: &str) -> u64 {
        self.counts.get(value).copied().unwrap_or(0)
    }

    pub fn rarity(&self, value: &str) -> Rarity {
        rarity_for(self.count(value), self.median)
    }

    pub fn name_key(&self, normalized: &str) -> NameKey {
        let frequency = self.count(normalized);
        NameKey {
            normalized: normalized.to_string(),
            frequency,
            rarity: rarity_for(frequency, self.median),
        }
    }
}

/// Strictly below the median is rare; ties go to common.
pub fn rarity_for(count: u64, median: f64) -> Rarity {
    if (count as f64) < median {
        Rarity::Rare
    } else {
        Rarity::Common
    }
}

/// Median of a multiset of counts (mean of the two middle elements for even
/// sizes). Empty input yields 0.
pub fn median_of(counts: &mut [u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.sort_unstable();
    let mid = counts.len() / 2;
    if counts.len() % 2 == 1 {
        counts[mid] as f64
    } else {
        (counts[mid - 1] as f64 + counts[mid] as f64) / 2.0
    }
}

pub fn build_frequency_table(
    records: &[PatentRecord],
    attribute: Attribute,
    options: FrequencyOptions,
) -> Result<FrequencyTable, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for record in records {
        for value in attribute.values(record) {
            *counts.entry(value).or_default() += 1;
        }
    }
    if counts.is_empty() && !options.allow_empty {
        return Err(CorpusError::AllNull(attribute));
    }
    let mut basis: Vec<u64> = match options.median_basis {
        MedianBasis::DistinctValues => counts.values().copied().collect(),
        MedianBasis::Mentions => counts
            .values()
            .flat_map(|&c| std::iter::repeat_n(c, c as usize))
            .collect(),
    };
    let median = median_of(&mut basis);
    Ok(FrequencyTable {
        attribute,
        counts,
        median,
    })
}

/// One frequency table per attribute for a single source population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTables {
    pub name: Option<FrequencyTable>,
    pub municipality: Option<FrequencyTable>,
    pub assignee: Option<FrequencyTable>,
    pub ipc: Option<FrequencyTable>,
}

impl FrequencyTables {
    /// Builds all four tables; attributes absent from the population get an
    /// empty table.
    pub fn build(records: &[PatentRecord], median_basis: MedianBasis) -> Result<Self, CorpusError> {
        let options = FrequencyOptions {
            median_basis,
            allow_empty: true,
        };
        Ok(Self {
            name: Some(build_frequency_table(records, Attribute::Name, options)?),
            municipality: Some(build_frequency_table(records, Attribute::Municipality, options)?),
            assignee: Some(build_frequency_table(records, Attribute::Assignee, options)?),
            ipc: Some(build_frequency_table(records, Attribute::IpcClass, options)?),
        })
    }

    pub fn get(&self, attribute: Attribute) -> Option<&FrequencyTable> {
        match attribute {
            Attribute::Name => self.name.as_ref(),
            Attribute::Municipality => self.municipality.as_ref(),
            Attribute::Assignee => self.assignee.as_ref(),
            Attribute::IpcClass => self.ipc.as_ref(),
        }
    }
}

fn split_multi(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn optional(cell: &str) -> Option<String> {
    let t = cell.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Reads patent records from any reader holding a CSV table in the given
/// schema.
pub fn read_corpus<R: Read>(reader: R, schema: Source) -> Result<Vec<PatentRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = schema.header();
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != expected {
        let detail = if schema == Source::Gdr && header.iter().any(|h| h == "cited_record_ids") {
            "GDR tables carry no citation column".to_string()
        } else {
            format!("expected [{}], found [{}]", expected.join(","), header.join(","))
        };
        return Err(CorpusError::SchemaMismatch { schema, detail });
    }

    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row_no = idx as u64 + 1;
        let row = row.map_err(|e| CorpusError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        if row.len() != expected.len() {
            return Err(CorpusError::MalformedRow {
                row: row_no,
                reason: format!("expected {} fields, found {}", expected.len(), row.len()),
            });
        }
        let filing_year: i32 = row[1].trim().parse().map_err(|_| CorpusError::MalformedRow {
            row: row_no,
            reason: format!("filing_year {:?} is not an integer", &row[1]),
        })?;
        let record = PatentRecord {
            record_id: row[0].trim().to_string(),
            source: schema,
            filing_year,
            inventors: split_multi(&row[2]),
            applicant: optional(&row[3]),
            ipc_main: row[4].trim().to_string(),
            ipc_secondary: split_multi(&row[5]),
            municipality: optional(&row[6]),
            abstract_text: optional(&row[7]),
            cited_record_ids: if schema == Source::Dpma {
                split_multi(&row[8])
            } else {
                Vec::new()
            },
        };
        if record.record_id.is_empty() {
            return Err(CorpusError::MalformedRow {
                row: row_no,
                reason: "record_id is empty".into(),
            });
        }
        record.check().map_err(|reason| CorpusError::MalformedRow { row: row_no, reason })?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_corpus(path: &Path, schema: Source) -> Result<Vec<PatentRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file), schema)
}

/// Writes records in the CSV schema of `schema`.
pub fn write_corpus<W: Write>(writer: W, schema: Source, records: &[PatentRecord]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.header())?;
    for r in records {
        let mut row = vec![
            r.record_id.clone(),
            r.filing_year.to_string(),
            r.inventors.join(";"),
            r.applicant.clone().unwrap_or_default(),
            r.ipc_main.clone(),
            r.ipc_secondary.join(";"),
            r.municipality.clone().unwrap_or_default(),
            r.abstract_text.clone().unwrap_or_default(),
        ];
        if schema == Source::Dpma {
            row.push(r.cited_record_ids.join(";"));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, names: &[&str], municipality: Option<&str>) -> PatentRecord {
        PatentRecord {
            record_id: id.into(),
            source: Source::Gdr,
            filing_year: 1989,
            inventors: names.iter().map(|s| s.to_string()).collect(),
            applicant: None,
            ipc_main: "C08F".into(),
            ipc_secondary: vec![],
            municipality: municipality.map(str::to_string),
            abstract_text: None,
            cited_record_ids: vec![],
        }
    }

    #[test]
    fn normalizes_titles_and_umlauts() {
        assert_eq!(normalize_name("Dr. Jörg Müßig").unwrap(), "JOERG MUESSIG");
        assert_eq!(normalize_name("PETER MUELLER").unwrap(), "PETER MUELLER");
        assert_eq!(
            normalize_name("Prof. Dipl.-Ing. Ulrike Jainta").unwrap(),
            "ULRIKE JAINTA"
        );
        assert_eq!(normalize_name("Dr. rer. nat. habil. Hans  Schulze").unwrap(), "HANS SCHULZE");
    }

    #[test]
    fn keeps_double_surnames() {
        assert_eq!(
            normalize_name("Anna Müller-Lüdenscheidt").unwrap(),
            "ANNA MUELLER-LUEDENSCHEIDT"
        );
    }

    #[test]
    fn titles_only_is_an_error() {
        assert!(matches!(
            normalize_name("Prof. Dr.-Ing."),
            Err(CorpusError::EmptyAfterNormalization(_))
        ));
        assert!(normalize_name("  ., ").is_err());
    }

    #[test]
    fn frequency_table_median_and_rarity() {
        let recs = vec![
            record("1", &["A"], Some("x")),
            record("2", &["A"], None),
            record("3", &["A"], None),
            record("4", &["B"], None),
        ];
        let t = build_frequency_table(&recs, Attribute::Name, FrequencyOptions::default()).unwrap();
        assert_eq!(t.count("A"), 3);
        assert_eq!(t.count("B"), 1);
        assert_eq!(t.median, 2.0);
        assert_eq!(t.rarity("A"), Rarity::Common);
        assert_eq!(t.rarity("B"), Rarity::Rare);
    }

    #[test]
    fn single_value_is_common() {
        let recs = vec![record("1", &["A"], None), record("2", &["A"], None)];
        let t = build_frequency_table(&recs, Attribute::Name, FrequencyOptions::default()).unwrap();
        assert_eq!(t.rarity("A"), Rarity::Common);
    }

    #[test]
    fn mention_median_basis() {
        // counts {A:3, B:1}; per-mention multiset {3,3,3,1} has median 3
        let recs = vec![
            record("1", &["A"], None),
            record("2", &["A"], None),
            record("3", &["A"], None),
            record("4", &["B"], None),
        ];
        let opts = FrequencyOptions {
            median_basis: MedianBasis::Mentions,
            allow_empty: false,
        };
        let t = build_frequency_table(&recs, Attribute::Name, opts).unwrap();
        assert_eq!(t.median, 3.0);
        assert_eq!(t.rarity("A"), Rarity::Common);
    }

    #[test]
    fn null_column_policy() {
        let recs = vec![record("1", &["A"], None)];
        let strict = build_frequency_table(&recs, Attribute::Municipality, FrequencyOptions::default());
        assert!(matches!(strict, Err(CorpusError::AllNull(Attribute::Municipality))));
        let lenient = build_frequency_table(
            &recs,
            Attribute::Municipality,
            FrequencyOptions {
                allow_empty: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(lenient.counts.is_empty());
        assert!(matches!(
            build_frequency_table(&[], Attribute::Name, FrequencyOptions::default()),
            Err(CorpusError::EmptyInput)
        ));
        assert!(matches!("colour".parse::<Attribute>(), Err(CorpusError::UnknownAttribute(_))));
    }

    const FIXTURE: &str = "\
record_id,filing_year,inventors,applicant,ipc_main,ipc_secondary,municipality,abstract
G1,1989,Dr. Jörg Müßig;Anna Schmidt,VEB Carl Zeiss Jena,G02B,G01N;G03B,Jena,Optisches Geraet
G2,1990,Anna Schmidt,,C08F,,Leuna,
G3,1990,\"Prof. Dipl.-Ing. Ulrike Jainta\",TU Dresden,H01L,H01S,Dresden,\"Halbleiter, Laser\"
";

    #[test]
    fn loads_fixture() {
        let recs = read_corpus(FIXTURE.as_bytes(), Source::Gdr).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].inventors, vec!["Dr. Jörg Müßig", "Anna Schmidt"]);
        assert_eq!(recs[0].ipc_secondary, vec!["G01N", "G03B"]);
        assert_eq!(recs[1].applicant, None);
        assert_eq!(recs[2].abstract_text.as_deref(), Some("Halbleiter, Laser"));
    }

    #[test]
    fn rejects_out_of_range_year() {
        let csv = FIXTURE.replace("G2,1990", "G2,2050");
        match read_corpus(csv.as_bytes(), Source::Gdr) {
            Err(CorpusError::MalformedRow { row, reason }) => {
                assert_eq!(row, 2);
                assert!(reason.contains("2050"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gdr_with_citation_column_is_schema_mismatch() {
        let csv = "record_id,filing_year,inventors,applicant,ipc_main,ipc_secondary,municipality,abstract,cited_record_ids\n";
        assert!(matches!(
            read_corpus(csv.as_bytes(), Source::Gdr),
            Err(CorpusError::SchemaMismatch { .. })
        ));
    }

    fn arb_record(source: Source) -> impl Strategy<Value = PatentRecord> {
        let cell = "[A-Za-zäöü ]{1,12}";
        (
            "[A-Z][0-9]{1,5}",
            1980i32..=2000,
            prop::collection::vec("[A-Za-zäöü][A-Za-zäöü .-]{0,14}[a-z]", 1..4),
            prop::option::of(cell),
            "[A-H][0-9]{2}[A-Z]",
            prop::collection::vec("[A-H][0-9]{2}[A-Z]", 0..3),
            prop::option::of(cell),
            prop::option::of("[a-z ,]{0,20}[a-z]"),
            prop::collection::vec("[A-Z][0-9]{1,5}", 0..3),
        )
            .prop_map(move |(id, y, inv, app, ipc, sec, mun, abs, cites)| PatentRecord {
                record_id: id,
                source,
                filing_year: y,
                inventors: inv.into_iter().map(|s| s.trim().to_string()).collect(),
                applicant: app.and_then(|s| optional(&s)),
                ipc_main: ipc,
                ipc_secondary: sec,
                municipality: mun.and_then(|s| optional(&s)),
                abstract_text: abs.and_then(|s| optional(&s)),
                cited_record_ids: if source == Source::Dpma { cites } else { vec![] },
            })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "\\PC{0,30}") {
            if let Ok(once) = normalize_name(&raw) {
                prop_assert_eq!(normalize_name(&once).unwrap(), once.clone());
                prop_assert!(once.chars().all(|c| c.is_ascii_uppercase() || c == ' ' || c == '-'));
            }
        }

        #[test]
        fn frequency_table_is_permutation_invariant(
            names in prop::collection::vec("[A-D]", 1..30),
            seed in any::<u64>(),
        ) {
            let recs: Vec<_> = names.iter().enumerate()
                .map(|(i, n)| record(&i.to_string(), &[n.as_str()], None)).collect();
            let mut shuffled = recs.clone();
            // deterministic Fisher-Yates from the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = build_frequency_table(&recs, Attribute::Name, FrequencyOptions::default()).unwrap();
            let b = build_frequency_table(&shuffled, Attribute::Name, FrequencyOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raising_a_count_never_makes_it_rare(
            mut counts in prop::collection::vec(1u64..50, 2..20),
            which in any::<prop::sample::Index>(),
            bump in 1u64..20,
        ) {
            let i = which.index(counts.len());
            let before = rarity_for(counts[i], median_of(&mut counts.clone()));
            counts[i] += bump;
            let after = rarity_for(counts[i], median_of(&mut counts.clone()));
            prop_assert!(!(before == Rarity::Common && after == Rarity::Rare));
        }

        #[test]
        fn csv_round_trip(
            gdr in prop::collection::vec(arb_record(Source::Gdr), 0..6),
            dpma in prop::collection::vec(arb_record(Source::Dpma), 0..6),
        ) {
            for (schema, recs) in [(Source::Gdr, gdr), (Source::Dpma, dpma)] {
                let mut buf = Vec::new();
                write_corpus(&mut buf, schema, &recs).unwrap();
                let back = read_corpus(buf.as_slice(), schema).unwrap();
                prop_assert_eq!(back, recs);
            }
        }
    }
}
