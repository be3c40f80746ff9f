//! Matching of disambiguated GDR careers to post-1990 DPMA careers and
//! construction of the mobility outcomes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_value, Attribute, FrequencyTables, Rarity};
use crate::disambig::{CareerCluster, MATCH_THRESHOLD};

/// Federal states counted as West Germany for the relocation outcome.
/// `BE-W` is West Berlin.
pub const WEST_STATES: &[&str] = &["SH", "HH", "NI", "HB", "NW", "HE", "RP", "BW", "BY", "SL", "BE-W"];

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("first DPMA year {0} is outside 1990-1999")]
    OutOfRange(i32),
    #[error("careers {0} and {1} have different names")]
    DifferentNames(String, String),
    #[error("frequency table for {0} is missing")]
    MissingFrequencyTable(Attribute),
    #[error("municipality {0:?} is missing from the geo table")]
    MissingGeoEntry(String),
    #[error("career {0} has no patent filed in 1989-1990")]
    NoBaseYearPatents(String),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// When a career first appears in the DPMA records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryWindow {
    /// 1990–1993.
    Early,
    /// 1994–1999.
    Late,
}

impl fmt::Display for EntryWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryWindow::Early => "early",
            EntryWindow::Late => "late",
        })
    }
}

pub fn classify_entry_window(first_dpma_year: i32) -> Result<EntryWindow, LinkageError> {
    match first_dpma_year {
        1990..=1993 => Ok(EntryWindow::Early),
        1994..=1999 => Ok(EntryWindow::Late),
        other => Err(LinkageError::OutOfRange(other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkCriterion {
    PrimaryClass,
    SecondaryClass,
    CareerStart,
}

/// Scores for matching a GDR career to a DPMA career. Arrays are indexed by
/// `[name rarity][attribute rarity]` with 0 = common, 1 = rare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingScheme {
    pub primary_class: [[u32; 2]; 2],
    pub secondary_class: [[u32; 2]; 2],
    /// Indexed by name rarity.
    pub early_start: [u32; 2],
    pub late_start: [u32; 2],
    pub threshold: u32,
}

impl Default for MatchingScheme {
    fn default() -> Self {
        Self {
            primary_class: [[80, 100], [80, 120]],
            secondary_class: [[60, 80], [60, 100]],
            early_start: [40, 100],
            late_start: [0, 0],
            threshold: MATCH_THRESHOLD,
        }
    }
}

fn idx(r: Rarity) -> usize {
    match r {
        Rarity::Common => 0,
        Rarity::Rare => 1,
    }
}

/// Result of comparing one GDR career with one DPMA career.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CareerLink {
    pub gdr_career_id: String,
    pub dpma_career_id: String,
    pub total_score: u32,
    /// `None` when the DPMA career starts outside 1990–1999.
    pub entry_window: Option<EntryWindow>,
    pub matched: bool,
    pub breakdown: Vec<(LinkCriterion, u32)>,
    /// Another candidate reached the same score and the choice fell to the
    /// tie-breaking order.
    pub tie_broken: bool,
}

/// Scores a GDR career against a DPMA career of the same name.
///
/// `tables` supplies the name and IPC rarities of the population searched.
pub fn match_careers(
    gdr: &CareerCluster,
    dpma: &CareerCluster,
    scheme: &MatchingScheme,
    tables: &FrequencyTables,
) -> Result<CareerLink, LinkageError> {
    if gdr.name_key.normalized != dpma.name_key.normalized {
        return Err(LinkageError::DifferentNames(gdr.career_id.clone(), dpma.career_id.clone()));
    }
    let names = tables.name.as_ref().ok_or(LinkageError::MissingFrequencyTable(Attribute::Name))?;
    let ipc = tables.ipc.as_ref().ok_or(LinkageError::MissingFrequencyTable(Attribute::IpcClass))?;
    let name = idx(names.rarity(&gdr.name_key.normalized));

    let mut breakdown = Vec::new();
    let primary = normalize_value(&gdr.ipc_main_mode);
    if primary.is_some() && primary == normalize_value(&dpma.ipc_main_mode) {
        let class = idx(ipc.rarity(primary.as_deref().unwrap_or_default()));
        breakdown.push((LinkCriterion::PrimaryClass, scheme.primary_class[name][class]));
    }
    let secondary = gdr.ipc_secondary_mode.as_deref().and_then(normalize_value);
    if secondary.is_some() && secondary == dpma.ipc_secondary_mode.as_deref().and_then(normalize_value) {
        let class = idx(ipc.rarity(secondary.as_deref().unwrap_or_default()));
        breakdown.push((LinkCriterion::SecondaryClass, scheme.secondary_class[name][class]));
    }
    let entry_window = classify_entry_window(dpma.first_year).ok();
    match entry_window {
        Some(EntryWindow::Early) => breakdown.push((LinkCriterion::CareerStart, scheme.early_start[name])),
        Some(EntryWindow::Late) => breakdown.push((LinkCriterion::CareerStart, scheme.late_start[name])),
        None => {}
    }
    let total_score = breakdown.iter().map(|(_, p)| p).sum();
    Ok(CareerLink {
        gdr_career_id: gdr.career_id.clone(),
        dpma_career_id: dpma.career_id.clone(),
        total_score,
        entry_window,
        matched: total_score >= scheme.threshold,
        breakdown,
        tie_broken: false,
    })
}

/// Picks, for every GDR career with at least one same-name DPMA career, the
/// best candidate: matched first, then highest score, then earliest DPMA
/// entry year, then smallest career ID. Output is ordered by GDR career ID.
pub fn link_careers(
    gdr: &[CareerCluster],
    dpma: &[CareerCluster],
    scheme: &MatchingScheme,
    tables: &FrequencyTables,
) -> Result<Vec<CareerLink>, LinkageError> {
    let mut by_name: HashMap<&str, Vec<&CareerCluster>> = HashMap::new();
    for d in dpma {
        by_name.entry(d.name_key.normalized.as_str()).or_default().push(d);
    }
    let mut ordered: Vec<&CareerCluster> = gdr.iter().collect();
    ordered.sort_by(|a, b| a.career_id.cmp(&b.career_id));

    let links: Vec<Option<CareerLink>> = ordered
        .par_iter()
        .map(|g| -> Result<Option<CareerLink>, LinkageError> {
            let Some(candidates) = by_name.get(g.name_key.normalized.as_str()) else {
                return Ok(None);
            };
            let mut scored = candidates
                .iter()
                .map(|d| match_careers(g, d, scheme, tables).map(|l| (l, d.first_year)))
                .collect::<Result<Vec<_>, _>>()?;
            scored.sort_by(|(a, ya), (b, yb)| {
                b.matched
                    .cmp(&a.matched)
                    .then(b.total_score.cmp(&a.total_score))
                    .then(ya.cmp(yb))
                    .then(a.dpma_career_id.cmp(&b.dpma_career_id))
            });
            let mut best = scored[0].0.clone();
            best.tie_broken = best.matched
                && scored
                    .iter()
                    .skip(1)
                    .any(|(l, _)| l.matched && l.total_score == best.total_score);
            Ok(Some(best))
        })
        .collect::<Result<_, _>>()?;
    Ok(links.into_iter().flatten().collect())
}

pub fn write_links<W: Write>(writer: W, links: &[CareerLink]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["gdr_career_id", "dpma_career_id", "score", "entry_window", "matched"])?;
    for l in links {
        wtr.write_record([
            l.gdr_career_id.clone(),
            l.dpma_career_id.clone(),
            l.total_score.to_string(),
            l.entry_window.map(|w| w.to_string()).unwrap_or_default(),
            u8::from(l.matched).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_links<R: Read>(reader: R) -> Result<Vec<CareerLink>, LinkageError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let entry_window = match &row[3] {
            "early" => Some(EntryWindow::Early),
            "late" => Some(EntryWindow::Late),
            "" => None,
            other => return Err(LinkageError::Parse(format!("bad entry window {other:?}"))),
        };
        out.push(CareerLink {
            gdr_career_id: row[0].to_string(),
            dpma_career_id: row[1].to_string(),
            total_score: row[2].parse().map_err(|_| LinkageError::Parse(format!("bad score {:?}", &row[2])))?,
            entry_window,
            matched: &row[4] == "1",
            breakdown: Vec::new(),
            tie_broken: false,
        });
    }
    Ok(out)
}

/// Geographic attributes of one municipality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoEntry {
    pub municipality: String,
    /// Federal state code, e.g. `BY`, `SN`, `BE-W`.
    pub state: String,
    pub distance_west_km: f64,
    pub population_density: f64,
    pub district_id: String,
}

impl GeoEntry {
    pub fn is_west(&self) -> bool {
        WEST_STATES.contains(&self.state.trim().to_ascii_uppercase().as_str())
    }
}

/// Municipality → geography, keyed by normalized municipality name.
#[derive(Debug, Clone, Default)]
pub struct GeoTable {
    pub entries: BTreeMap<String, GeoEntry>,
}

impl GeoTable {
    /// Reads `municipality,state,distance_west_km,population_density,district_id`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, LinkageError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize() {
            let e: GeoEntry = row?;
            let key = normalize_value(&e.municipality)
                .ok_or_else(|| LinkageError::Parse("empty municipality in geo table".into()))?;
            entries.insert(key, e);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, municipality: &str) -> Result<&GeoEntry, LinkageError> {
        let key = normalize_value(municipality).unwrap_or_default();
        self.entries
            .get(&key)
            .ok_or_else(|| LinkageError::MissingGeoEntry(municipality.to_string()))
    }
}

/// Applicants flagged as universities or public research organizations.
#[derive(Debug, Clone, Default)]
pub struct SectorTable {
    pub academic: BTreeMap<String, bool>,
}

#[derive(Deserialize)]
struct SectorRow {
    applicant: String,
    academic: u8,
}

impl SectorTable {
    /// Reads `applicant,academic`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, LinkageError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut academic = BTreeMap::new();
        for row in rdr.deserialize() {
            let r: SectorRow = row?;
            if let Some(key) = normalize_value(&r.applicant) {
                academic.insert(key, r.academic == 1);
            }
        }
        Ok(Self { academic })
    }

    pub fn is_academic(&self, applicant: &str) -> bool {
        normalize_value(applicant)
            .and_then(|k| self.academic.get(&k).copied())
            .unwrap_or(false)
    }
}

/// Given names flagged female; unknown names count as not female.
#[derive(Debug, Clone, Default)]
pub struct GenderTable {
    pub female: BTreeMap<String, bool>,
}

#[derive(Deserialize)]
struct GenderRow {
    first_name: String,
    female: u8,
}

impl GenderTable {
    /// Reads `first_name,female`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, LinkageError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut female = BTreeMap::new();
        for row in rdr.deserialize() {
            let r: GenderRow = row?;
            if let Ok(n) = crate::corpus::normalize_name(&r.first_name) {
                female.insert(n, r.female == 1);
            }
        }
        Ok(Self { female })
    }

    pub fn is_female(&self, normalized_full_name: &str) -> bool {
        normalized_full_name
            .split(' ')
            .next()
            .and_then(|first| self.female.get(first).copied())
            .unwrap_or(false)
    }
}

/// One analysis row per GDR career.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub career_id: String,
    pub continued: u8,
    pub continued_west: Option<u8>,
    pub gdr_patents: u32,
    pub academic: u8,
    pub female: u8,
    pub distance_west_km: f64,
    pub population_density: f64,
    pub patent_stock: Option<f64>,
    pub career_age: Option<u32>,
    /// Patents of the linked DPMA career (0 if unmatched).
    pub dpma_patents: u32,
}

/// Discounted patent count at `reference_year`: each filing contributes
/// `(1 - depreciation)^(reference_year - year)`. Later filings are ignored.
pub fn patent_stock(filing_years: &[i32], reference_year: i32, depreciation: f64) -> f64 {
    filing_years
        .iter()
        .filter(|&&y| y <= reference_year)
        .map(|&y| (1.0 - depreciation).powi(reference_year - y))
        .sum()
}

/// Years since the first filing, capped at ten.
pub fn career_age(first_year: i32, reference_year: i32) -> u32 {
    (reference_year - first_year).clamp(0, 10) as u32
}

#[derive(Debug, Clone, Copy)]
pub struct OutcomeOptions {
    pub reference_year: i32,
    pub depreciation: f64,
}

impl Default for OutcomeOptions {
    fn default() -> Self {
        Self {
            reference_year: 1990,
            depreciation: 0.30,
        }
    }
}

pub struct OutcomeInputs<'a> {
    pub geo: &'a GeoTable,
    pub sectors: &'a SectorTable,
    pub gender: &'a GenderTable,
    /// Filing years of the long (1980–1990) career containing each GDR
    /// career, for patent stock and career age.
    pub history: Option<&'a BTreeMap<String, Vec<i32>>>,
}

/// Builds outcome rows, ordered by career ID. Careers without a 1989–1990
/// patent are an error.
pub fn build_outcomes(
    gdr_careers: &[CareerCluster],
    dpma_careers: &[CareerCluster],
    links: &[CareerLink],
    inputs: &OutcomeInputs<'_>,
    options: OutcomeOptions,
) -> Result<Vec<OutcomeRow>, LinkageError> {
    let matched: HashMap<&str, &str> = links
        .iter()
        .filter(|l| l.matched)
        .map(|l| (l.gdr_career_id.as_str(), l.dpma_career_id.as_str()))
        .collect();
    let dpma: HashMap<&str, &CareerCluster> = dpma_careers.iter().map(|c| (c.career_id.as_str(), c)).collect();

    let mut ordered: Vec<&CareerCluster> = gdr_careers.iter().collect();
    ordered.sort_by(|a, b| a.career_id.cmp(&b.career_id));
    let mut rows = Vec::with_capacity(ordered.len());
    for career in ordered {
        let gdr_patents = career.filing_years.iter().filter(|y| (1989..=1990).contains(*y)).count() as u32;
        if gdr_patents == 0 {
            return Err(LinkageError::NoBaseYearPatents(career.career_id.clone()));
        }
        let home = career
            .home_municipality()
            .ok_or_else(|| LinkageError::MissingGeoEntry(format!("<none> for career {}", career.career_id)))?;
        let geo = inputs.geo.get(&home)?;

        let linked = matched.get(career.career_id.as_str()).and_then(|id| dpma.get(id));
        let (continued, continued_west, dpma_patents) = match linked {
            None => (0, None, 0),
            Some(d) => {
                let mut west = 0;
                for (year, municipality) in &d.locations {
                    if *year >= 1990 && inputs.geo.get(municipality)?.is_west() {
                        west = 1;
                    }
                }
                (1, Some(west), d.member_records.len() as u32)
            }
        };
        let history = inputs.history.and_then(|h| h.get(&career.career_id));
        rows.push(OutcomeRow {
            career_id: career.career_id.clone(),
            continued,
            continued_west,
            gdr_patents,
            academic: u8::from(career.applicants.iter().any(|a| inputs.sectors.is_academic(a))),
            female: u8::from(inputs.gender.is_female(&career.name_key.normalized)),
            distance_west_km: geo.distance_west_km,
            population_density: geo.population_density,
            patent_stock: history.map(|years| patent_stock(years, options.reference_year, options.depreciation)),
            career_age: history.and_then(|years| years.first().map(|&f| career_age(f, options.reference_year))),
            dpma_patents,
        });
    }
    Ok(rows)
}

pub fn write_outcomes<W: Write>(writer: W, rows: &[OutcomeRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record([
            "career_id", "continued", "continued_west", "gdr_patents", "academic", "female",
            "distance_west_km", "population_density", "patent_stock", "career_age", "dpma_patents",
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_outcomes<R: Read>(reader: R) -> Result<Vec<OutcomeRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FrequencyTable, NameKey};
    use std::collections::BTreeSet;

    pub(crate) fn career(id: &str, name: &str, ipc: &str, sec: Option<&str>, years: &[i32], locs: &[(i32, &str)]) -> CareerCluster {
        CareerCluster {
            career_id: id.into(),
            name_key: NameKey {
                normalized: name.into(),
                frequency: 1,
                rarity: Rarity::Rare,
            },
            members: BTreeSet::new(),
            member_records: years.iter().enumerate().map(|(i, _)| format!("{id}-{i}")).collect(),
            ipc_main_mode: ipc.into(),
            ipc_secondary_mode: sec.map(str::to_string),
            first_year: *years.first().unwrap(),
            last_year: *years.last().unwrap(),
            filing_years: years.to_vec(),
            locations: locs.iter().map(|(y, m)| (*y, m.to_string())).collect(),
            applicants: BTreeSet::new(),
        }
    }

    fn tables(name_rare: bool, class_rare: bool) -> FrequencyTables {
        let t = |attr, key: &str, rare: bool| FrequencyTable {
            attribute: attr,
            counts: [(key.to_string(), if rare { 1 } else { 9 })].into(),
            median: 5.0,
        };
        FrequencyTables {
            name: Some(t(Attribute::Name, "ULRIKE JAINTA", name_rare)),
            municipality: None,
            assignee: None,
            ipc: Some(t(Attribute::IpcClass, "H01L", class_rare)),
        }
    }

    #[test]
    fn entry_windows() {
        assert_eq!(classify_entry_window(1990).unwrap(), EntryWindow::Early);
        assert_eq!(classify_entry_window(1993).unwrap(), EntryWindow::Early);
        assert_eq!(classify_entry_window(1994).unwrap(), EntryWindow::Late);
        assert!(matches!(classify_entry_window(2000), Err(LinkageError::OutOfRange(2000))));
    }

    #[test]
    fn rare_name_rare_primary_class() {
        let g = career("G1", "ULRIKE JAINTA", "H01L", None, &[1989], &[]);
        let d = career("D1", "ULRIKE JAINTA", "H01L", None, &[1996], &[]);
        let l = match_careers(&g, &d, &MatchingScheme::default(), &tables(true, true)).unwrap();
        assert_eq!(l.total_score, 120);
        assert!(l.matched);
    }

    #[test]
    fn common_name_early_start() {
        let g = career("G1", "ULRIKE JAINTA", "H01L", None, &[1989], &[]);
        let d = career("D1", "ULRIKE JAINTA", "H01L", None, &[1991], &[]);
        let l = match_careers(&g, &d, &MatchingScheme::default(), &tables(false, false)).unwrap();
        assert_eq!(l.total_score, 120);
        assert_eq!(l.entry_window, Some(EntryWindow::Early));
    }

    #[test]
    fn common_name_late_secondary_only() {
        let g = career("G1", "ULRIKE JAINTA", "C08F", Some("H01L"), &[1989], &[]);
        let d = career("D1", "ULRIKE JAINTA", "G02B", Some("H01L"), &[1995], &[]);
        let l = match_careers(&g, &d, &MatchingScheme::default(), &tables(false, false)).unwrap();
        assert_eq!(l.total_score, 60);
        assert!(!l.matched);
    }

    #[test]
    fn ties_prefer_earlier_entry_then_id() {
        let g = career("G1", "ULRIKE JAINTA", "H01L", None, &[1989], &[]);
        let d1 = career("D2", "ULRIKE JAINTA", "H01L", None, &[1995], &[]);
        let d2 = career("D1", "ULRIKE JAINTA", "H01L", None, &[1996], &[]);
        let d3 = career("D0", "ULRIKE JAINTA", "H01L", None, &[1995], &[]);
        let links = link_careers(&[g], &[d1, d2, d3], &MatchingScheme::default(), &tables(true, true)).unwrap();
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].dpma_career_id, "D0");
        assert!(links[0].tie_broken);
    }

    #[test]
    fn stock_and_age() {
        let s = patent_stock(&[1990, 1989, 1989], 1990, 0.3);
        assert!((s - (1.0 + 0.7 + 0.7)).abs() < 1e-12);
        assert_eq!(career_age(1975, 1990), 10);
        assert_eq!(career_age(1986, 1990), 4);
    }

    #[test]
    fn outcomes_for_unmatched_and_west_mover() {
        let geo = GeoTable::from_csv(
            "municipality,state,distance_west_km,population_density,district_id\n\
             Jena,TH,120.5,900,D07\nMuenchen,BY,0,4700,\nDresden,SN,210,1700,D11\n"
                .as_bytes(),
        )
        .unwrap();
        let g1 = career("G1", "ULRIKE JAINTA", "H01L", None, &[1989], &[(1989, "JENA")]);
        let g2 = career("G2", "PETER MUELLER", "H01L", None, &[1989, 1990], &[(1989, "DRESDEN")]);
        let d = career("D1", "PETER MUELLER", "H01L", None, &[1992], &[(1992, "MUENCHEN")]);
        let link = CareerLink {
            gdr_career_id: "G2".into(),
            dpma_career_id: "D1".into(),
            total_score: 120,
            entry_window: Some(EntryWindow::Early),
            matched: true,
            breakdown: vec![],
            tie_broken: false,
        };
        let gender = GenderTable::from_csv("first_name,female\nUlrike,1\nPeter,0\n".as_bytes()).unwrap();
        let inputs = OutcomeInputs {
            geo: &geo,
            sectors: &SectorTable::default(),
            gender: &gender,
            history: None,
        };
        let rows = build_outcomes(&[g2, g1], &[d], &[link], &inputs, Default::default()).unwrap();
        assert_eq!(rows[0].career_id, "G1");
        assert_eq!((rows[0].continued, rows[0].continued_west, rows[0].female), (0, None, 1));
        assert_eq!((rows[1].continued, rows[1].continued_west, rows[1].gdr_patents), (1, Some(1), 2));
        assert_eq!(rows[1].distance_west_km, 210.0);

        let mut buf = Vec::new();
        write_outcomes(&mut buf, &rows).unwrap();
        assert_eq!(read_outcomes(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn missing_geo_entry() {
        let g = career("G1", "ULRIKE JAINTA", "H01L", None, &[1989], &[(1989, "ATLANTIS")]);
        let inputs = OutcomeInputs {
            geo: &GeoTable::default(),
            sectors: &SectorTable::default(),
            gender: &GenderTable::default(),
            history: None,
        };
        assert!(matches!(
            build_outcomes(&[g], &[], &[], &inputs, Default::default()),
            Err(LinkageError::MissingGeoEntry(_))
        ));
    }
}
