//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use careerlink::corpus::{Attribute, FrequencyTable, FrequencyTables, MedianBasis, NameKey, PatentRecord, Rarity, Source};
use careerlink::disambig::{
    block_by_name, disambiguate, evaluate_clustering, score_pair, score_pair_abstract, CareerCluster, Criterion,
    DisambigOptions, Mention, MentionId, ScoringScheme, TfIdf,
};
use careerlink::econometrics::{
    anderson_rubin_test, cragg_donald_f, heckman_iv, iv_poisson_gmm, kaplan_meier, ols_hc, ols_homoskedastic,
    probit_loglik, probit_score, tsls, Column, GapTime, HeckmanOptions, IMR_LABEL, INTERCEPT,
};
use careerlink::linkage::{match_careers, MatchingScheme};
use careerlink::pipeline::{run_pipeline, with_workers, PipelineConfig, BUNDLE_FILES};
use careerlink::sensitivity::{extreme_confounder, robustness_value, sensitivity_report};
use careerlink::synth::{gen_count_dgp, gen_iv_dgp, gen_linkage_corpus, gen_selection_dgp, DgpSpec, LinkageCorpusSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Named<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic/pipeline.toml")
}

// ---------------------------------------------------------------- scoring

const NAME: &str = "A B";

fn rarity_tables(name: Rarity, attr: Rarity) -> FrequencyTables {
    // median 5: a count of 1 is rare, 9 is common
    let c = |r: Rarity| if r == Rarity::Rare { 1 } else { 9 };
    let t = |attribute, keys: &[&str], r: Rarity| FrequencyTable {
        attribute,
        counts: keys.iter().map(|k| (k.to_string(), c(r))).collect(),
        median: 5.0,
    };
    FrequencyTables {
        name: Some(t(Attribute::Name, &[NAME], name)),
        municipality: Some(t(Attribute::Municipality, &["JENA"], attr)),
        assignee: Some(t(Attribute::Assignee, &["VEB ZEISS"], attr)),
        ipc: Some(t(Attribute::IpcClass, &["H01L"], attr)),
    }
}

fn bare(id: &str, source: Source, ipc: &str) -> PatentRecord {
    PatentRecord {
        record_id: id.into(),
        source,
        filing_year: 1989,
        inventors: vec![NAME.into()],
        applicant: None,
        ipc_main: ipc.into(),
        ipc_secondary: vec![],
        municipality: None,
        abstract_text: None,
        cited_record_ids: vec![],
    }
}

/// A pair of records that agree on exactly one criterion.
fn pair_sharing(criterion: Criterion, source: Source) -> (PatentRecord, PatentRecord) {
    let mut a = bare("1", source, "C08F");
    let mut b = bare("2", source, "G02B");
    match criterion {
        Criterion::Municipality => {
            a.municipality = Some("Jena".into());
            b.municipality = Some("Jena".into());
        }
        Criterion::Assignee => {
            a.applicant = Some("VEB Zeiss".into());
            b.applicant = Some("VEB Zeiss".into());
        }
        Criterion::TechnologyClass => {
            a.ipc_main = "H01L".into();
            b.ipc_main = "H01L".into();
        }
        Criterion::CoInventor => {
            a.inventors.push("X Y".into());
            b.inventors.push("X Y".into());
        }
        Criterion::Citation => a.cited_record_ids.push("2".into()),
        Criterion::Abstract => {
            a.abstract_text = Some("Halbleiterlaser mit Resonator".into());
            b.abstract_text = Some("Halbleiterlaser mit Resonator".into());
        }
    }
    (a, b)
}

fn score_cell(scheme: &ScoringScheme, criterion: Criterion, name: Rarity, attr: Rarity) -> u32 {
    let source = if scheme.has(Criterion::Citation) { Source::Dpma } else { Source::Gdr };
    let (a, b) = pair_sharing(criterion, source);
    let tables = rarity_tables(name, attr);
    let (ma, mb) = (&Mention::from_record(&a)[0], &Mention::from_record(&b)[0]);
    if criterion == Criterion::Abstract {
        let texts = [a.abstract_text.as_deref().unwrap(), b.abstract_text.as_deref().unwrap()];
        let tf = TfIdf::fit(texts);
        score_pair_abstract(ma, mb, scheme, &tables, &tf).unwrap().total
    } else {
        score_pair(ma, mb, scheme, &tables).unwrap().total
    }
}

fn career(id: &str, ipc: &str, sec: Option<&str>, year: i32) -> CareerCluster {
    CareerCluster {
        career_id: id.into(),
        name_key: NameKey { normalized: NAME.into(), frequency: 1, rarity: Rarity::Rare },
        members: BTreeSet::new(),
        member_records: BTreeSet::from([format!("{id}-0")]),
        ipc_main_mode: ipc.into(),
        ipc_secondary_mode: sec.map(str::to_string),
        first_year: year,
        last_year: year,
        filing_years: vec![year],
        locations: vec![],
        applicants: BTreeSet::new(),
    }
}

fn scoring_table_cells() -> Check {
    use Rarity::{Common as C, Rare as R};
    let (gdr, dpma, hist) = (ScoringScheme::gdr_1989(), ScoringScheme::dpma_post90(), ScoringScheme::gdr_1980_abstract());
    let graded = |vals: [u32; 4]| [(C, C, vals[0]), (C, R, vals[1]), (R, C, vals[2]), (R, R, vals[3])];
    let mut expected: Vec<(&str, &ScoringScheme, Criterion, Rarity, Rarity, u32)> = Vec::new();
    for (label, scheme) in [("gdr1989", &gdr), ("dpma", &dpma)] {
        for (crit, vals) in [
            (Criterion::Municipality, [80, 80, 80, 100]),
            (Criterion::Assignee, [80, 80, 80, 100]),
            (Criterion::TechnologyClass, [50, 50, 50, 80]),
        ] {
            for (n, a, v) in graded(vals) {
                expected.push((label, scheme, crit, n, a, v));
            }
        }
        expected.push((label, scheme, Criterion::CoInventor, C, C, 120));
        expected.push((label, scheme, Criterion::CoInventor, R, C, 120));
    }
    expected.push(("dpma", &dpma, Criterion::Citation, C, C, 120));
    expected.push(("dpma", &dpma, Criterion::Citation, R, C, 120));
    expected.push(("gdr1980-abstract", &hist, Criterion::Abstract, C, C, 80));
    expected.push(("gdr1980-abstract", &hist, Criterion::Abstract, R, C, 100));
    for (n, a, v) in graded([50, 50, 50, 80]) {
        expected.push(("gdr1980-abstract", &hist, Criterion::TechnologyClass, n, a, v));
    }
    expected.push(("gdr1980-abstract", &hist, Criterion::CoInventor, R, C, 120));

    let mut cells = 0;
    for (label, scheme, crit, n, a, want) in &expected {
        let got = score_cell(scheme, *crit, *n, *a);
        ensure(got == *want, || format!("{label} {crit:?} name={n} attr={a}: {got} != {want}"))?;
        cells += 1;
    }

    // Career matching: primary class, secondary class, entry window.
    let m = MatchingScheme::default();
    let link = |name: Rarity, class: Rarity, g: &CareerCluster, d: &CareerCluster| {
        match_careers(g, d, &m, &rarity_tables(name, class)).unwrap().total_score
    };
    let mut link_cells = Vec::new();
    for (n, a, v) in graded([80, 100, 80, 120]) {
        link_cells.push(("primary", n, a, v, career("G", "H01L", None, 1989), career("D", "H01L", None, 2000)));
    }
    for (n, a, v) in graded([60, 80, 60, 100]) {
        link_cells.push(("secondary", n, a, v, career("G", "C08F", Some("H01L"), 1989), career("D", "G02B", Some("H01L"), 2000)));
    }
    for (label, year, vals) in [("early start", 1991, [40, 100]), ("late start", 1996, [0, 0])] {
        for (n, v) in [(C, vals[0]), (R, vals[1])] {
            link_cells.push((label, n, C, v, career("G", "C08F", None, 1989), career("D", "G02B", None, year)));
        }
    }
    for (label, n, class, want, g, d) in &link_cells {
        let got = link(*n, *class, g, d);
        ensure(got == *want, || format!("matching {label} name={n} class={class}: {got} != {want}"))?;
        cells += 1;
    }
    Ok(format!("{cells} cells reproduced"))
}

// ---------------------------------------------------------------- clustering

fn random_block(rng: &mut ChaCha8Rng, block: usize) -> Vec<PatentRecord> {
    let n = rng.random_range(2..=12);
    let towns = ["Jena", "Leuna", "Dresden", "Halle"];
    let firms = ["VEB Zeiss", "VEB Leuna", "TU Dresden"];
    let classes = ["C08F", "H01L", "G02B", "A61K"];
    let colleagues = ["X Y", "U V", "P Q"];
    (0..n)
        .map(|i| {
            let mut inventors = vec![NAME.to_string()];
            if rng.random_bool(0.3) {
                inventors.push(colleagues[rng.random_range(0..colleagues.len())].to_string());
            }
            let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs[rng.random_range(0..xs.len())].to_string();
            PatentRecord {
                record_id: format!("B{block}-{i:02}"),
                source: Source::Dpma,
                filing_year: 1989,
                inventors,
                applicant: rng.random_bool(0.8).then(|| pick(rng, &firms)),
                ipc_main: pick(rng, &classes),
                ipc_secondary: vec![],
                municipality: rng.random_bool(0.8).then(|| pick(rng, &towns)),
                abstract_text: None,
                cited_record_ids: if i > 0 && rng.random_bool(0.1) {
                    vec![format!("B{block}-{:02}", rng.random_range(0..i))]
                } else {
                    vec![]
                },
            }
        })
        .collect()
}

/// Connected components by repeated depth-first search over an adjacency matrix.
fn components(n: usize, adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for w in 0..n {
                if adj[v][w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}

fn transitivity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut merged = 0;
    for block in 0..1000 {
        let recs = random_block(&mut rng, block);
        let scheme = if block % 2 == 0 { ScoringScheme::gdr_1989() } else { ScoringScheme::dpma_post90() };
        let tables = FrequencyTables::build(&recs, MedianBasis::DistinctValues).unwrap();
        let d = disambiguate(&recs, &scheme, &tables, &DisambigOptions::default()).unwrap();
        let mut got: Vec<Vec<usize>> = d
            .careers
            .iter()
            .filter(|c| c.name_key.normalized == NAME)
            .map(|c| c.members.iter().map(|m| recs.iter().position(|r| r.record_id == m.record_id).unwrap()).collect())
            .collect();
        got.iter_mut().for_each(|c| c.sort());
        got.sort();

        let blocks = block_by_name(&recs);
        let mentions = &blocks.iter().find(|b| b.name == NAME).unwrap().mentions;
        let n = mentions.len();
        let mut adj = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    adj[i][j] = score_pair(&mentions[i], &mentions[j], &scheme, &tables).unwrap().total >= 100;
                }
            }
        }
        let want = components(n, &adj);
        ensure(got == want, || format!("block {block}: {got:?} != {want:?}"))?;
        merged += usize::from(want.len() < n);
    }
    Ok(format!("1000 blocks agree ({merged} with at least one merge)"))
}

// ---------------------------------------------------------------- linkage

/// Pairwise precision and recall by enumerating every mention pair.
fn exhaustive_pairs(pred: &[Vec<MentionId>], truth: &[Vec<MentionId>]) -> (f64, f64) {
    let label = |p: &[Vec<MentionId>]| -> BTreeMap<MentionId, usize> {
        p.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |m| (m.clone(), i))).collect()
    };
    let (lp, lt) = (label(pred), label(truth));
    let ids: Vec<&MentionId> = lp.keys().collect();
    let (mut tp, mut pp, mut tt) = (0u64, 0u64, 0u64);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let same_p = lp[ids[i]] == lp[ids[j]];
            let same_t = lt[ids[i]] == lt[ids[j]];
            tp += u64::from(same_p && same_t);
            pp += u64::from(same_p);
            tt += u64::from(same_t);
        }
    }
    let p = if pp == 0 { 1.0 } else { tp as f64 / pp as f64 };
    let r = if tt == 0 { 1.0 } else { tp as f64 / tt as f64 };
    (p, r)
}

fn linkage_oracle() -> Check {
    let mut notes = vec![];
    for (rate, label) in [(0.0, "clean"), (0.15, "collisions")] {
        let spec = LinkageCorpusSpec { n_inventors: 600, name_collision_rate: rate, seed: 3, ..Default::default() };
        let corpus = gen_linkage_corpus(&spec).unwrap();
        let recent: Vec<PatentRecord> = corpus.gdr.iter().filter(|r| r.filing_year >= 1989).cloned().collect();
        for (source, recs, scheme) in [
            ("gdr", &recent, ScoringScheme::gdr_1989()),
            ("dpma", &corpus.dpma, ScoringScheme::dpma_post90()),
        ] {
            let tables = FrequencyTables::build(recs, MedianBasis::DistinctValues).unwrap();
            let d = disambiguate(recs, &scheme, &tables, &DisambigOptions::default()).unwrap();
            let pred: Vec<Vec<MentionId>> = d.careers.iter().map(|c| c.members.iter().cloned().collect()).collect();
            let truth = corpus.truth_partition(recs);
            let m = evaluate_clustering(&pred, &truth).unwrap();
            let (p, r) = exhaustive_pairs(&pred, &truth);
            ensure(m.pairwise_precision == p && m.pairwise_recall == r, || {
                format!("{label}/{source}: ({}, {}) != oracle ({p}, {r})", m.pairwise_precision, m.pairwise_recall)
            })?;
            if rate == 0.0 {
                ensure(m.f1 == 1.0, || format!("{source}: F1 {} without collisions", m.f1))?;
            }
            notes.push(format!("{label}/{source} P={p:.4} R={r:.4}"));
        }
    }
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------- IV

fn residualize(v: &[f64], controls: &[&Column]) -> DVector<f64> {
    let n = v.len();
    let x = DMatrix::from_fn(n, controls.len() + 1, |i, j| if j == 0 { 1.0 } else { controls[j - 1].values[i] });
    let y = DVector::from_column_slice(v);
    let b = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
    y - x * b
}

fn tsls_monte_carlo() -> Check {
    let reps = 200;
    let (mut sum, mut covered, mut worst_fwl) = (0.0, 0, 0.0f64);
    for r in 0..reps {
        let dm = gen_iv_dgp(&DgpSpec { n: 10_000, seed: 1000 + r, ..Default::default() }).unwrap();
        let ctl: Vec<&Column> = dm.controls.iter().collect();
        let rep = tsls(&dm.outcome, &[&dm.treatments[0]], &[&dm.instruments[0]], &ctl).unwrap();
        let c = rep.get("d").unwrap();
        sum += c.estimate;
        covered += usize::from((c.estimate - 0.5).abs() <= 1.959_963_984_540_054 * c.std_error);
        let zt = residualize(&dm.instruments[0].values, &ctl);
        let yv = DVector::from_column_slice(&dm.outcome.values);
        let dv = DVector::from_column_slice(&dm.treatments[0].values);
        let ratio = zt.dot(&yv) / zt.dot(&dv);
        worst_fwl = worst_fwl.max((ratio - c.estimate).abs() / c.estimate.abs());
    }
    let mean = sum / reps as f64;
    let coverage = covered as f64 / reps as f64;
    let detail = format!("mean {mean:.4}, coverage {coverage:.3}, max FWL rel. gap {worst_fwl:.1e}");
    ensure((mean - 0.5).abs() <= 0.02, || detail.clone())?;
    ensure((0.90..=0.99).contains(&coverage), || detail.clone())?;
    ensure(worst_fwl <= 1e-9, || detail.clone())?;
    Ok(detail)
}

fn ar_equivalence() -> Check {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for r in 0..100 {
        let spec = DgpSpec {
            n: rng.random_range(200..2000),
            instrument_strength: rng.random_range(0.1..1.5),
            seed: r,
            ..Default::default()
        };
        let dm = gen_iv_dgp(&spec).unwrap();
        let ctl: Vec<&Column> = dm.controls.iter().collect();
        let beta0: f64 = rng.random_range(-1.0..1.0);
        let d = &dm.treatments[0];
        let z = &dm.instruments[0];
        let ar = anderson_rubin_test(&dm.outcome, &[d], &[z], &ctl, &[beta0]).unwrap();
        let shifted = Column::new("y0", dm.outcome.values.iter().zip(&d.values).map(|(y, dv)| y - beta0 * dv).collect());
        let mut regs = vec![z];
        regs.extend(ctl.iter().copied());
        let rf = ols_hc(&shifted, &regs).unwrap();
        let p = rf.get("z").unwrap().p_value;
        worst = worst.max((ar - p).abs());
    }
    ensure(worst <= 1e-12, || format!("max gap {worst:e}"))?;
    Ok(format!("100 datasets, max gap {worst:.1e}"))
}

fn cragg_donald_identity() -> Check {
    let mut worst = 0.0f64;
    for r in 0..50 {
        let spec = DgpSpec { n: 500, instrument_strength: 0.05 + 0.04 * r as f64, seed: 70 + r, ..Default::default() };
        let dm = gen_iv_dgp(&spec).unwrap();
        let ctl: Vec<&Column> = dm.controls.iter().collect();
        let f = cragg_donald_f(&dm.treatments[0], &[&dm.instruments[0]], &ctl).unwrap();
        let mut regs = vec![&dm.instruments[0]];
        regs.extend(ctl.iter().copied());
        let t = ols_homoskedastic(&dm.treatments[0], &regs).unwrap().t_stat("z").unwrap();
        worst = worst.max((f - t * t).abs() / (t * t));
    }
    ensure(worst <= 1e-9, || format!("max rel. gap {worst:e}"))?;
    Ok(format!("50 designs, max rel. gap {worst:.1e}"))
}

fn heckman_coverage() -> Check {
    let runs = 100;
    let opts = |seed| HeckmanOptions { bootstrap_reps: 300, seed, ..Default::default() };
    let (mut beta_cover, mut imr_cover) = (0, 0);
    for r in 0..runs {
        let data = gen_selection_dgp(&DgpSpec { selection_rho: 0.5, seed: 500 + r, ..Default::default() }).unwrap();
        let (lo, hi) = heckman_iv(&data, &opts(r)).unwrap().get("d").unwrap().ci.unwrap();
        beta_cover += usize::from(lo <= 0.5 && 0.5 <= hi);

        let data = gen_selection_dgp(&DgpSpec { selection_rho: 0.0, seed: 900 + r, ..Default::default() }).unwrap();
        let (lo, hi) = heckman_iv(&data, &opts(r)).unwrap().get(IMR_LABEL).unwrap().ci.unwrap();
        imr_cover += usize::from(lo <= 0.0 && 0.0 <= hi);
    }
    let detail = format!("treatment CI covers 0.5 in {beta_cover}/{runs}, IMR CI covers 0 in {imr_cover}/{runs}");
    ensure(beta_cover >= 90 && imr_cover >= 90, || detail.clone())?;
    Ok(detail)
}

fn iv_poisson() -> Check {
    let dm = gen_count_dgp(&DgpSpec { n: 20_000, beta_treatment: 0.2, seed: 42, ..Default::default() }).unwrap();
    let ctl: Vec<&Column> = dm.controls.iter().collect();
    let (d, z) = (&dm.treatments[0], &dm.instruments[0]);
    let fit = iv_poisson_gmm(&dm.outcome, &[d], &[z], &ctl).unwrap();
    let moment = fit.diagnostics.moment_norm.unwrap();
    ensure(moment < 1e-8, || format!("moment norm {moment:e}"))?;
    let b = fit.get("d").unwrap();
    ensure((b.estimate - 0.2).abs() <= 3.0 * b.std_error, || format!("beta {} se {}", b.estimate, b.std_error))?;

    let c = 3.7;
    let scaled = iv_poisson_gmm(&dm.outcome.scaled(c), &[d], &[z], &ctl).unwrap();
    let mut worst = 0.0f64;
    for (a, s) in fit.coefficients.iter().zip(&scaled.coefficients) {
        let shift = if a.label == INTERCEPT { c.ln() } else { 0.0 };
        worst = worst.max((s.estimate - a.estimate - shift).abs());
    }
    ensure(worst <= 1e-9, || format!("scale equivariance gap {worst:e}"))?;
    Ok(format!(
        "beta {:.4} (se {:.4}), moment {moment:.1e}, equivariance gap {worst:.1e}",
        b.estimate, b.std_error
    ))
}

fn kaplan_meier_examples() -> Check {
    let ev = |d| GapTime { duration: d, censored: false };
    let curve = kaplan_meier(&[ev(1), ev(2), ev(3)]).unwrap();
    ensure(curve.at(1) == 2.0 / 3.0 && curve.at(2) == 1.0 / 3.0 && curve.at(3) == 0.0, || {
        format!("S = {:?}", curve.points.iter().map(|p| p.survival).collect::<Vec<_>>())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..60);
        let gaps: Vec<GapTime> = (0..n).map(|_| ev(rng.random_range(1..12))).collect();
        let curve = kaplan_meier(&gaps).unwrap();
        for t in 0..13 {
            let share = gaps.iter().filter(|g| g.duration > t).count() as f64 / n as f64;
            ensure(curve.at(t) == share, || format!("S({t}) = {} != {share}", curve.at(t)))?;
        }
    }
    Ok("3-observation example and 200 uncensored samples exact".into())
}

// ---------------------------------------------------------------- sensitivity

fn sensitivity(bundle: &Path) -> Check {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let rv = robustness_value(3.0, 9.0);
    ensure((rv - golden).abs() <= 1e-12, || format!("RV(f2 = 1) = {rv}"))?;

    let mut worst = 0.0f64;
    for seed in 0..10 {
        let dm = gen_iv_dgp(&DgpSpec { n: 2000, seed, ..Default::default() }).unwrap();
        let ctl: Vec<&Column> = dm.controls.iter().collect();
        let z = &dm.instruments[0];
        let u = extreme_confounder(&dm.outcome, z, &ctl).unwrap();
        let rep = sensitivity_report(&dm.outcome, z, &ctl, &[]).unwrap();
        ensure(rep.robustness_value > 0.0, || "zero robustness value".into())?;
        let mut regs = vec![z];
        regs.extend(ctl.iter().copied());
        regs.push(&u);
        let est = ols_homoskedastic(&dm.outcome, &regs).unwrap().estimate("z").unwrap();
        worst = worst.max(est.abs());
    }
    ensure(worst <= 1e-8, || format!("residual coefficient {worst:e}"))?;

    let text = std::fs::read_to_string(bundle.join("sensitivity.csv")).map_err(|e| e.to_string())?;
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut ratios = Vec::new();
    for row in rows.records() {
        let row = row.map_err(|e| e.to_string())?;
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let (rv, zw, yw) = (f(1), f(3), f(4));
        ensure(10.0 * zw.max(yw) < rv, || format!("{} / {}: RV {rv}% vs benchmark {zw}%, {yw}%", &row[0], &row[2]))?;
        ratios.push(rv / zw.max(yw).max(0.01));
    }
    ensure(!ratios.is_empty(), || "no sensitivity rows".into())?;
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("golden RV exact, zeroing gap {worst:.1e}, fixture RV/benchmark >= {min:.1}"))
}

// ---------------------------------------------------------------- probit

fn probit_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(20..300);
        let k = rng.random_range(1..6);
        let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
        let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        let s: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let g = probit_score(&beta, &s, &x);
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..k {
            let h = 1e-5;
            let (mut up, mut dn) = (beta.clone(), beta.clone());
            up[j] += h;
            dn[j] -= h;
            let num = (probit_loglik(&up, &s, &x) - probit_loglik(&dn, &s, &x)) / (2.0 * h);
            worst = worst.max((num - g[j]).abs() / scale);
        }
    }
    ensure(worst <= 1e-5, || format!("max rel. error {worst:e}"))?;
    Ok(format!("50 instances, max rel. error {worst:.1e}"))
}

// ---------------------------------------------------------------- pipeline

fn run_bundle(out: &Path, workers: usize) -> Result<(), String> {
    let mut cfg = PipelineConfig::from_path(&fixture_config()).map_err(|e| e.to_string())?;
    cfg.output_dir = out.to_path_buf();
    with_workers(Some(workers), || run_pipeline(&cfg))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism(a: &Path, b: &Path) -> Check {
    run_bundle(a, 1)?;
    run_bundle(b, 4)?;
    let mut files: Vec<&str> = BUNDLE_FILES.to_vec();
    files.push("run_manifest.json");
    for f in &files {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs"))?;
    }
    Ok(format!("{} files byte-identical across 1 and 4 workers", files.len()))
}

fn main() -> ExitCode {
    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (dirs.0.path().to_path_buf(), dirs.1.path().to_path_buf());
    let criteria: Vec<Named> = vec![
        ("scoring tables", Box::new(scoring_table_cells)),
        ("transitivity", Box::new(transitivity)),
        ("linkage oracle", Box::new(linkage_oracle)),
        ("2SLS Monte Carlo", Box::new(tsls_monte_carlo)),
        ("Anderson-Rubin equivalence", Box::new(ar_equivalence)),
        ("Cragg-Donald identity", Box::new(cragg_donald_identity)),
        ("Heckman-IV coverage", Box::new(heckman_coverage)),
        ("IV-Poisson", Box::new(iv_poisson)),
        ("Kaplan-Meier", Box::new(kaplan_meier_examples)),
        ("end-to-end determinism", Box::new(|| determinism(&a, &b))),
        ("sensitivity", Box::new(|| sensitivity(&a))),
        ("probit gradient", Box::new(probit_gradient)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
