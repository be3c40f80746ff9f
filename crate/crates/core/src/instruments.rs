//! Treatment variables and their instruments.
//!
//! Informant flows are aggregated per sector and mapped onto IPC subclasses
//! through a sector→IPC concordance. Every IPC-level quantity is linear in
//! the sector-level inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::normalize_value;
use crate::disambig::CareerCluster;
use crate::linkage::GeoTable;

/// Years whose flows make up the knowledge-inflow treatment.
pub const INFLOW_YEARS: std::ops::RangeInclusive<i32> = 1987..=1989;
/// Base year of the informant shares.
pub const BASE_YEAR: i32 = 1970;
/// Exit years considered for deactivated informants.
pub const EXIT_YEARS: std::ops::RangeInclusive<i32> = 1984..=1986;
/// Minimum mean annual pieces for an exiting informant to count.
pub const EXIT_MIN_PIECES: f64 = 20.0;

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("no informant flows in the base year {BASE_YEAR}")]
    NoBasePeriodData,
    #[error("concordance weights of sector {sector} sum to {sum}, not 1")]
    InvalidConcordance { sector: String, sum: f64 },
    #[error("sector {0} has no output figure")]
    MissingSectorOutput(String),
    #[error("municipality {0:?} has no electoral district")]
    MissingDistrict(String),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("reception table row {0:?}: dresden=1 requires no_reception=1")]
    InvalidReception(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Pieces of information delivered by one informant for one sector in one
/// year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformantFlow {
    pub informant_id: String,
    pub year: i32,
    pub sector_id: String,
    pub pieces: u64,
}

pub fn read_flows<R: Read>(reader: R) -> Result<Vec<InformantFlow>, InstrumentError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let f: InformantFlow = row?;
        if !(1968..=1990).contains(&f.year) {
            return Err(InstrumentError::InvalidFlow(format!(
                "informant {} year {} outside 1968-1990",
                f.informant_id, f.year
            )));
        }
        out.push(f);
    }
    Ok(out)
}

pub fn write_flows<W: Write>(writer: W, flows: &[InformantFlow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for f in flows {
        wtr.serialize(f)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceEntry {
    pub sector_id: String,
    pub ipc_subclass: String,
    pub weight: f64,
}

/// Sector → IPC weights; each sector's weights sum to one.
#[derive(Debug, Clone, Default)]
pub struct Concordance {
    by_ipc: BTreeMap<String, Vec<(String, f64)>>,
}

impl Concordance {
    pub fn new(entries: Vec<ConcordanceEntry>) -> Result<Self, InstrumentError> {
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for e in &entries {
            *sums.entry(e.sector_id.as_str()).or_default() += e.weight;
        }
        for (sector, sum) in sums {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(InstrumentError::InvalidConcordance {
                    sector: sector.to_string(),
                    sum,
                });
            }
        }
        let mut by_ipc: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for e in entries {
            let key = normalize_value(&e.ipc_subclass).unwrap_or_default();
            by_ipc.entry(key).or_default().push((e.sector_id, e.weight));
        }
        Ok(Self { by_ipc })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, InstrumentError> {
        let entries = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<Result<Vec<ConcordanceEntry>, _>>()?;
        Self::new(entries)
    }

    /// Sectors feeding `ipc` with their weights; `None` if unmapped.
    pub fn sectors_of(&self, ipc: &str) -> Option<&[(String, f64)]> {
        let key = normalize_value(ipc)?;
        self.by_ipc.get(&key).map(Vec::as_slice)
    }

    /// `Σ_sector weight(sector→ipc) · value(sector)`; sectors without a value
    /// contribute 0. `None` if `ipc` is unmapped.
    pub fn map_to_ipc(&self, values: &BTreeMap<String, f64>, ipc: &str) -> Option<f64> {
        self.sectors_of(ipc)
            .map(|s| s.iter().map(|(sector, w)| w * values.get(sector).copied().unwrap_or(0.0)).sum())
    }
}

/// Scale used to normalize sector inflows: sector output, read from
/// `sector_id,output`.
pub fn read_sector_output<R: Read>(reader: R) -> Result<BTreeMap<String, f64>, InstrumentError> {
    #[derive(Deserialize)]
    struct Row {
        sector_id: String,
        output: f64,
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: Row = row?;
        out.insert(r.sector_id, r.output);
    }
    Ok(out)
}

/// Pieces per sector summed over `years`.
pub fn sector_inflow(flows: &[InformantFlow], years: std::ops::RangeInclusive<i32>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for f in flows.iter().filter(|f| years.contains(&f.year)) {
        *out.entry(f.sector_id.clone()).or_default() += f.pieces as f64;
    }
    out
}

/// Divides an IPC-mapped numerator by sector output mapped through the same
/// concordance. `None` when the IPC is unmapped or the scale is zero.
pub fn scale_by_output(
    numerators: &BTreeMap<String, f64>,
    concordance: &Concordance,
    sector_output: &BTreeMap<String, f64>,
    ipc: &str,
) -> Result<Option<f64>, InstrumentError> {
    let Some(sectors) = concordance.sectors_of(ipc) else {
        return Ok(None);
    };
    if let Some((missing, _)) = sectors.iter().find(|(s, _)| !sector_output.contains_key(s)) {
        return Err(InstrumentError::MissingSectorOutput(missing.clone()));
    }
    let num = concordance.map_to_ipc(numerators, ipc).unwrap_or(0.0);
    let den = concordance.map_to_ipc(sector_output, ipc).unwrap_or(0.0);
    Ok((den > 0.0).then(|| num / den))
}

/// 1987–1989 inflow mapped to `ipc` and scaled by mapped sector output.
pub fn knowledge_inflow(
    flows: &[InformantFlow],
    concordance: &Concordance,
    sector_output: &BTreeMap<String, f64>,
    ipc: &str,
) -> Result<Option<f64>, InstrumentError> {
    scale_by_output(&sector_inflow(flows, INFLOW_YEARS), concordance, sector_output, ipc)
}

/// Sector numerators of the shift-share instrument:
/// `Σ_i θ_i · λ_ij · Σ_{1987..1989} I_s`, where θ_i is informant i's share of
/// all 1970 pieces, λ_ij the share of i's 1970 pieces going to sector j, and
/// I_s the yearly inflow from informants already active in 1970.
pub fn old_informant_numerators(flows: &[InformantFlow]) -> Result<BTreeMap<String, f64>, InstrumentError> {
    let mut base_by_informant: BTreeMap<&str, f64> = BTreeMap::new();
    let mut base_by_pair: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for f in flows.iter().filter(|f| f.year == BASE_YEAR) {
        *base_by_informant.entry(&f.informant_id).or_default() += f.pieces as f64;
        *base_by_pair.entry((&f.informant_id, &f.sector_id)).or_default() += f.pieces as f64;
    }
    let total_base: f64 = base_by_informant.values().sum();
    if total_base <= 0.0 {
        return Err(InstrumentError::NoBasePeriodData);
    }
    let shift: f64 = flows
        .iter()
        .filter(|f| INFLOW_YEARS.contains(&f.year) && base_by_informant.contains_key(f.informant_id.as_str()))
        .map(|f| f.pieces as f64)
        .sum();

    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for ((informant, sector), pieces) in base_by_pair {
        let informant_total = base_by_informant[informant];
        if informant_total <= 0.0 {
            continue;
        }
        let theta = informant_total / total_base;
        let lambda = pieces / informant_total;
        *out.entry(sector.to_string()).or_default() += theta * lambda * shift;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InstrumentOptions {
    /// Require strictly more than 20 mean annual pieces instead of at least 20.
    pub strict_exit_filter: bool,
    /// Scale instruments by mapped sector output like the treatment.
    pub scale_instruments: bool,
}

impl Default for InstrumentOptions {
    fn default() -> Self {
        Self {
            strict_exit_filter: false,
            scale_instruments: true,
        }
    }
}

/// Sector numerators of the deactivated-informant instrument: for informants
/// last observed in 1984–1986, the mean annual pieces per sector over their
/// active span, kept when it reaches the productivity filter.
pub fn deactivated_numerators(flows: &[InformantFlow], options: InstrumentOptions) -> BTreeMap<String, f64> {
    let mut span: BTreeMap<&str, (i32, i32)> = BTreeMap::new();
    let mut per_sector: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for f in flows {
        let e = span.entry(&f.informant_id).or_insert((f.year, f.year));
        e.0 = e.0.min(f.year);
        e.1 = e.1.max(f.year);
        *per_sector.entry((&f.informant_id, &f.sector_id)).or_default() += f.pieces as f64;
    }
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for ((informant, sector), pieces) in per_sector {
        let (first, last) = span[informant];
        if !EXIT_YEARS.contains(&last) {
            continue;
        }
        let mean = pieces / f64::from(last - first + 1);
        let passes = if options.strict_exit_filter {
            mean > EXIT_MIN_PIECES
        } else {
            mean >= EXIT_MIN_PIECES
        };
        if passes {
            *out.entry(sector.to_string()).or_default() += mean;
        }
    }
    out
}

fn finish(
    numerators: &BTreeMap<String, f64>,
    concordance: &Concordance,
    sector_output: &BTreeMap<String, f64>,
    ipc: &str,
    options: InstrumentOptions,
) -> Result<Option<f64>, InstrumentError> {
    if options.scale_instruments {
        scale_by_output(numerators, concordance, sector_output, ipc)
    } else {
        Ok(concordance.map_to_ipc(numerators, ipc))
    }
}

pub fn old_informant_instrument(
    flows: &[InformantFlow],
    concordance: &Concordance,
    sector_output: &BTreeMap<String, f64>,
    ipc: &str,
    options: InstrumentOptions,
) -> Result<Option<f64>, InstrumentError> {
    finish(&old_informant_numerators(flows)?, concordance, sector_output, ipc, options)
}

pub fn deactivated_informant_instrument(
    flows: &[InformantFlow],
    concordance: &Concordance,
    sector_output: &BTreeMap<String, f64>,
    ipc: &str,
    options: InstrumentOptions,
) -> Result<Option<f64>, InstrumentError> {
    finish(&deactivated_numerators(flows, options), concordance, sector_output, ipc, options)
}

/// PDS vote share (percent) per electoral district.
#[derive(Debug, Clone, Default)]
pub struct ElectionTable {
    pub pds_share: BTreeMap<String, f64>,
}

impl ElectionTable {
    /// Reads `district_id,pds_share`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, InstrumentError> {
        #[derive(Deserialize)]
        struct Row {
            district_id: String,
            pds_share: f64,
        }
        let mut pds_share = BTreeMap::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let r: Row = row?;
            pds_share.insert(r.district_id, r.pds_share);
        }
        Ok(Self { pds_share })
    }
}

/// Municipalities without West German television reception.
#[derive(Debug, Clone, Default)]
pub struct ReceptionTable {
    pub entries: BTreeMap<String, (u8, u8)>,
}

impl ReceptionTable {
    /// Reads `municipality,no_reception,dresden`. Municipalities absent from
    /// the table have reception.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, InstrumentError> {
        #[derive(Deserialize)]
        struct Row {
            municipality: String,
            no_reception: u8,
            dresden: u8,
        }
        let mut entries = BTreeMap::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let r: Row = row?;
            if r.dresden == 1 && r.no_reception != 1 {
                return Err(InstrumentError::InvalidReception(r.municipality));
            }
            if let Some(key) = normalize_value(&r.municipality) {
                entries.insert(key, (r.no_reception, r.dresden));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, municipality: &str) -> (u8, u8) {
        normalize_value(municipality)
            .and_then(|k| self.entries.get(&k).copied())
            .unwrap_or((0, 0))
    }
}

/// Returns `(pds_share, no_reception, dresden)` for a municipality.
pub fn community_treatments(
    elections: &ElectionTable,
    reception: &ReceptionTable,
    geo: &GeoTable,
    municipality: &str,
) -> Result<(f64, u8, u8), InstrumentError> {
    let district = geo
        .get(municipality)
        .map_err(|_| InstrumentError::MissingDistrict(municipality.to_string()))?
        .district_id
        .clone();
    let pds = elections
        .pds_share
        .get(&district)
        .copied()
        .ok_or_else(|| InstrumentError::MissingDistrict(municipality.to_string()))?;
    let (no_reception, dresden) = reception.get(municipality);
    Ok((pds, no_reception, dresden))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRow {
    pub career_id: String,
    pub knowledge_inflow: Option<f64>,
    pub pds_share: f64,
    pub old_informants: Option<f64>,
    pub deactivated_informants: Option<f64>,
    pub no_reception: u8,
    pub dresden: u8,
}

pub struct TreatmentInputs<'a> {
    pub flows: &'a [InformantFlow],
    pub concordance: &'a Concordance,
    pub sector_output: &'a BTreeMap<String, f64>,
    pub elections: &'a ElectionTable,
    pub reception: &'a ReceptionTable,
    pub geo: &'a GeoTable,
}

/// Treatment rows for every career, ordered by career ID. Careers whose
/// modal IPC subclass is unmapped get null espionage variables.
pub fn build_treatments(
    careers: &[CareerCluster],
    inputs: &TreatmentInputs<'_>,
    options: InstrumentOptions,
) -> Result<Vec<TreatmentRow>, InstrumentError> {
    let inflow = sector_inflow(inputs.flows, INFLOW_YEARS);
    let old = old_informant_numerators(inputs.flows)?;
    let deact = deactivated_numerators(inputs.flows, options);

    let mut ordered: Vec<&CareerCluster> = careers.iter().collect();
    ordered.sort_by(|a, b| a.career_id.cmp(&b.career_id));
    let mut rows = Vec::with_capacity(ordered.len());
    for c in ordered {
        let ipc = c.ipc_main_mode.as_str();
        let home = c.home_municipality().unwrap_or_default();
        let (pds_share, no_reception, dresden) =
            community_treatments(inputs.elections, inputs.reception, inputs.geo, &home)?;
        rows.push(TreatmentRow {
            career_id: c.career_id.clone(),
            knowledge_inflow: scale_by_output(&inflow, inputs.concordance, inputs.sector_output, ipc)?,
            pds_share,
            old_informants: finish(&old, inputs.concordance, inputs.sector_output, ipc, options)?,
            deactivated_informants: finish(&deact, inputs.concordance, inputs.sector_output, ipc, options)?,
            no_reception,
            dresden,
        });
    }
    Ok(rows)
}

pub fn write_treatments<W: Write>(writer: W, rows: &[TreatmentRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_treatments<R: Read>(reader: R) -> Result<Vec<TreatmentRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

/// IPC subclasses covered by the concordance.
pub fn mapped_ipcs(concordance: &Concordance) -> BTreeSet<String> {
    concordance.by_ipc.keys().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flow(i: &str, year: i32, sector: &str, pieces: u64) -> InformantFlow {
        InformantFlow {
            informant_id: i.into(),
            year,
            sector_id: sector.into(),
            pieces,
        }
    }

    fn conc(entries: &[(&str, &str, f64)]) -> Concordance {
        Concordance::new(
            entries
                .iter()
                .map(|(s, i, w)| ConcordanceEntry {
                    sector_id: s.to_string(),
                    ipc_subclass: i.to_string(),
                    weight: *w,
                })
                .collect(),
        )
        .unwrap()
    }

    fn output(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
        entries.iter().map(|(s, v)| (s.to_string(), *v)).collect()
    }

    #[test]
    fn single_sector_inflow() {
        let flows = vec![flow("a", 1987, "S", 10), flow("a", 1988, "S", 10), flow("a", 1989, "S", 10)];
        let v = knowledge_inflow(&flows, &conc(&[("S", "H01L", 1.0)]), &output(&[("S", 30.0)]), "H01L").unwrap();
        assert_eq!(v, Some(1.0));
    }

    #[test]
    fn two_sector_weighted_inflow() {
        let flows = vec![flow("a", 1988, "A", 20), flow("b", 1988, "B", 40)];
        let c = conc(&[("A", "H01L", 0.5), ("A", "X99Z", 0.5), ("B", "H01L", 0.5), ("B", "Y99Z", 0.5)]);
        let v = knowledge_inflow(&flows, &c, &output(&[("A", 30.0), ("B", 30.0)]), "H01L").unwrap().unwrap();
        // (0.5·20 + 0.5·40) / (0.5·30 + 0.5·30)
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unmapped_ipc_is_null() {
        let flows = vec![flow("a", 1988, "S", 20)];
        let v = knowledge_inflow(&flows, &conc(&[("S", "H01L", 1.0)]), &output(&[("S", 1.0)]), "C08F").unwrap();
        assert_eq!(v, None);
    }

    #[test]
    fn bad_concordance_weights() {
        let r = Concordance::new(vec![ConcordanceEntry {
            sector_id: "S".into(),
            ipc_subclass: "H01L".into(),
            weight: 0.9,
        }]);
        assert!(matches!(r, Err(InstrumentError::InvalidConcordance { .. })));
    }

    #[test]
    fn shift_share_degenerate_and_two_informants() {
        let flows = vec![flow("a", 1970, "A", 5), flow("a", 1988, "A", 10)];
        assert_eq!(old_informant_numerators(&flows).unwrap()["A"], 10.0);

        let flows = vec![
            flow("a", 1970, "A", 3),
            flow("b", 1970, "B", 1),
            flow("a", 1987, "A", 5),
            flow("b", 1989, "A", 3),
            // active only from 1980, outside the base set
            flow("c", 1980, "B", 50),
            flow("c", 1988, "B", 50),
        ];
        let n = old_informant_numerators(&flows).unwrap();
        assert!((n["A"] - 6.0).abs() < 1e-12);
        assert!((n["B"] - 2.0).abs() < 1e-12);
        assert!(matches!(
            old_informant_numerators(&[flow("c", 1980, "B", 1)]),
            Err(InstrumentError::NoBasePeriodData)
        ));
    }

    #[test]
    fn deactivated_filters() {
        let opts = InstrumentOptions::default();
        // active 1984-1985, 50 pieces over two years: mean 25
        let flows = vec![flow("a", 1984, "A", 25), flow("a", 1985, "A", 25)];
        assert_eq!(deactivated_numerators(&flows, opts)["A"], 25.0);
        let flows = vec![flow("a", 1984, "A", 15), flow("a", 1985, "A", 15)];
        assert!(deactivated_numerators(&flows, opts).is_empty());
        let flows = vec![flow("a", 1987, "A", 25), flow("a", 1988, "A", 25)];
        assert!(deactivated_numerators(&flows, opts).is_empty());
        let flows = vec![flow("a", 1985, "A", 20)];
        assert_eq!(deactivated_numerators(&flows, opts)["A"], 20.0);
        let strict = InstrumentOptions {
            strict_exit_filter: true,
            ..opts
        };
        assert!(deactivated_numerators(&flows, strict).is_empty());
    }

    #[test]
    fn community_lookup() {
        let geo = GeoTable::from_csv(
            "municipality,state,distance_west_km,population_density,district_id\n\
             Dresden,SN,210,1700,D11\nEisenach,TH,5,600,D08\nNowhere,TH,5,600,D99\n"
                .as_bytes(),
        )
        .unwrap();
        let elections = ElectionTable::from_csv("district_id,pds_share\nD11,37.9\nD08,10.2\n".as_bytes()).unwrap();
        let reception = ReceptionTable::from_csv("municipality,no_reception,dresden\nDresden,1,1\n".as_bytes()).unwrap();
        assert_eq!(community_treatments(&elections, &reception, &geo, "Dresden").unwrap(), (37.9, 1, 1));
        assert_eq!(community_treatments(&elections, &reception, &geo, "Eisenach").unwrap(), (10.2, 0, 0));
        assert!(matches!(
            community_treatments(&elections, &reception, &geo, "Nowhere"),
            Err(InstrumentError::MissingDistrict(_))
        ));
        assert!(ReceptionTable::from_csv("municipality,no_reception,dresden\nX,0,1\n".as_bytes()).is_err());
    }

    fn arb_flows() -> impl Strategy<Value = Vec<InformantFlow>> {
        prop::collection::vec(
            (0..6u8, prop::sample::select(vec![1970, 1975, 1984, 1985, 1986, 1987, 1988, 1989]), 0..3u8, 0u64..60),
            1..40,
        )
        .prop_map(|v| {
            let mut flows: Vec<_> = v
                .into_iter()
                .map(|(i, y, s, p)| flow(&format!("i{i}"), y, &format!("S{s}"), p))
                .collect();
            flows.push(flow("base", 1970, "S0", 1));
            flows
        })
    }

    proptest! {
        #[test]
        fn base_shares_sum_to_one(flows in arb_flows()) {
            let mut per_informant: BTreeMap<&str, f64> = BTreeMap::new();
            for f in flows.iter().filter(|f| f.year == BASE_YEAR) {
                *per_informant.entry(&f.informant_id).or_default() += f.pieces as f64;
            }
            let total: f64 = per_informant.values().sum();
            let theta_sum: f64 = per_informant.values().map(|v| v / total).sum();
            prop_assert!((theta_sum - 1.0).abs() < 1e-9);
            // with θ and λ summing to one, the sector numerators add up to the shift
            let shift: f64 = flows.iter()
                .filter(|f| INFLOW_YEARS.contains(&f.year) && per_informant.contains_key(f.informant_id.as_str()))
                .map(|f| f.pieces as f64).sum();
            let n = old_informant_numerators(&flows).unwrap();
            prop_assert!((n.values().sum::<f64>() - shift).abs() < 1e-9 * (1.0 + shift));
        }

        #[test]
        fn doubling_flows_doubles_ipc_values(flows in arb_flows()) {
            let c = conc(&[("S0", "A01B", 0.6), ("S0", "B01B", 0.4), ("S1", "A01B", 1.0), ("S2", "B01B", 1.0)]);
            let out = output(&[("S0", 10.0), ("S1", 20.0), ("S2", 5.0)]);
            let doubled: Vec<_> = flows.iter().map(|f| InformantFlow { pieces: f.pieces * 2, ..f.clone() }).collect();
            let opts = InstrumentOptions::default();
            for ipc in ["A01B", "B01B"] {
                let a = knowledge_inflow(&flows, &c, &out, ipc).unwrap().unwrap();
                let b = knowledge_inflow(&doubled, &c, &out, ipc).unwrap().unwrap();
                prop_assert!((b - 2.0 * a).abs() < 1e-9 * (1.0 + a));
                let a = old_informant_instrument(&flows, &c, &out, ipc, opts).unwrap().unwrap();
                let b = old_informant_instrument(&doubled, &c, &out, ipc, opts).unwrap().unwrap();
                prop_assert!((b - 2.0 * a).abs() < 1e-9 * (1.0 + a));
                prop_assert!(a >= 0.0);
            }
        }
    }
}
