//! Publication credit per locality, metro and institution.
//!
//! All regimes are folds over records into integer tallies: whole-paper
//! counts for the integer and deduplicated regimes, and numerators keyed by
//! denominator for fractional shares. Partial tallies merge by addition, so
//! results are identical however the records were split across workers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::delineation::Partition;
use crate::gazetteer::{InstitutionRegistry, LocalityId};
use crate::record::{Corpus, PublicationRecord};
use crate::scalar::{sum_ratios, Credit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKind {
    Locality,
    Metro,
    Institution,
}

impl UnitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::Locality => "locality",
            UnitKind::Metro => "metro",
            UnitKind::Institution => "institution",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Integer,
    Dedup,
    Fractional,
    IntegerSum,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Integer => "integer",
            Regime::Dedup => "dedup",
            Regime::Fractional => "fractional",
            Regime::IntegerSum => "integer_sum",
        }
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "integer" => Ok(Regime::Integer),
            "dedup" | "or" => Ok(Regime::Dedup),
            "fractional" => Ok(Regime::Fractional),
            "integer_sum" => Ok(Regime::IntegerSum),
            other => Err(format!("unknown regime '{other}'")),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Denominator of a paper's fractional shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FractionalBasis {
    /// Equal shares over the paper's distinct localities.
    #[default]
    DistinctLocality,
    /// Equal shares over address instances.
    AddressInstance,
}

impl FractionalBasis {
    pub fn as_str(&self) -> &'static str {
        match self {
            FractionalBasis::DistinctLocality => "distinct_locality",
            FractionalBasis::AddressInstance => "address_instance",
        }
    }
}

impl FromStr for FractionalBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "distinct_locality" => Ok(FractionalBasis::DistinctLocality),
            "address_instance" => Ok(FractionalBasis::AddressInstance),
            other => Err(format!("unknown fractional basis '{other}'")),
        }
    }
}

impl fmt::Display for FractionalBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AttributionPolicy<'a> {
    pub fractional_basis: FractionalBasis,
    /// `None` counts localities as they are.
    pub metro_mapping: Option<&'a Partition>,
}

impl<'a> AttributionPolicy<'a> {
    pub fn localities(basis: FractionalBasis) -> Self {
        AttributionPolicy {
            fractional_basis: basis,
            metro_mapping: None,
        }
    }

    pub fn metros(basis: FractionalBasis, partition: &'a Partition) -> Self {
        AttributionPolicy {
            fractional_basis: basis,
            metro_mapping: Some(partition),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "basis={}; mapping={}",
            self.fractional_basis,
            self.metro_mapping
                .map_or_else(|| "identity".to_string(), Partition::describe)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    /// Inclusive year range applied before counting.
    pub year_filter: Option<(i32, i32)>,
    /// Largest tolerated share of unresolved affiliations, in `[0, 1]`.
    pub unresolved_tolerance: f64,
    /// Evaluate over this many contiguous record chunks, merged afterwards.
    /// `None` lets the thread pool split the work.
    pub chunks: Option<usize>,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            year_filter: None,
            unresolved_tolerance: 0.0,
            chunks: None,
        }
    }
}

impl CountOptions {
    pub(crate) fn admits(&self, r: &PublicationRecord) -> bool {
        self.year_filter.is_none_or(|(lo, hi)| (lo..=hi).contains(&r.year))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CountError {
    #[error("{unresolved} of {total} affiliations are unresolved, above the tolerated ratio {tolerance}")]
    UnresolvedAffiliations {
        unresolved: usize,
        total: usize,
        tolerance: f64,
        /// First few offending (record id, affiliation index) pairs.
        sample: Vec<(String, usize)>,
    },
    #[error("locality '{0}' is not covered by the partition")]
    UnknownLocality(String),
    #[error("unknown institution '{0}'")]
    UnknownInstitution(String),
    #[error("report mismatch: {0}")]
    Mismatch(String),
}

/// Per-unit credit under one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct CountReport<S> {
    pub unit_kind: UnitKind,
    pub regime: Regime,
    pub year_filter: Option<(i32, i32)>,
    /// Units with non-zero credit; absent units have credit zero.
    pub credits: BTreeMap<String, S>,
    /// Papers that contributed credit.
    pub paper_total: u64,
    pub corpus_hash: String,
    pub policy: String,
    pub unresolved_count: usize,
    pub notes: Vec<String>,
}

impl<S: Credit> CountReport<S> {
    pub fn credit(&self, unit: &str) -> S {
        self.credits.get(unit).copied().unwrap_or_else(S::zero)
    }

    pub fn total(&self) -> S {
        self.credits.values().fold(S::zero(), |a, &b| a + b)
    }

    /// Same corpus, filter and mapping; regimes and kinds may differ.
    pub fn comparable_with<T>(&self, other: &CountReport<T>) -> Result<(), CountError> {
        if self.corpus_hash != other.corpus_hash {
            return Err(CountError::Mismatch("corpus hashes differ".into()));
        }
        if self.year_filter != other.year_filter {
            return Err(CountError::Mismatch("year filters differ".into()));
        }
        Ok(())
    }

    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("corpus_hash: {}", self.corpus_hash),
            format!(
                "year_filter: {}",
                self.year_filter
                    .map_or_else(|| "none".to_string(), |(a, b)| format!("{a}-{b}"))
            ),
            format!("policy: {}", self.policy),
            format!("unresolved_count: {}", self.unresolved_count),
            format!("paper_total: {}", self.paper_total),
        ];
        lines.extend(self.notes.iter().map(|n| format!("note: {n}")));
        lines
    }

    /// `unit_id,unit_kind,regime,credit` preceded by `# key: value` header lines.
    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header.iter().chain(&self.header_lines()) {
            writeln!(w, "# {line}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit_id", "unit_kind", "regime", "credit"])?;
        for (unit, credit) in &self.credits {
            out.write_record([
                unit.as_str(),
                self.unit_kind.as_str(),
                self.regime.as_str(),
                &credit.to_string(),
            ])?;
        }
        out.flush()
    }
}

/// Maps resolved locality ids to counting units.
pub(crate) struct Units<'a> {
    pub kind: UnitKind,
    pub ids: Vec<String>,
    own: HashMap<LocalityId, usize>,
    partition: Option<&'a Partition>,
}

impl<'a> Units<'a> {
    /// One unit per locality appearing in the admitted records.
    pub fn localities(corpus: &Corpus, opts: &CountOptions) -> Self {
        let ids: BTreeSet<&LocalityId> = corpus
            .records
            .par_iter()
            .filter(|r| opts.admits(r))
            .fold(BTreeSet::new, |mut acc, r| {
                acc.extend(r.affiliations.iter().filter_map(|a| a.resolved_locality.as_ref()));
                acc
            })
            .reduce(BTreeSet::new, |mut a, mut b| {
                a.append(&mut b);
                a
            });
        let own = ids.iter().enumerate().map(|(i, l)| ((*l).clone(), i)).collect();
        Units {
            kind: UnitKind::Locality,
            ids: ids.into_iter().map(|l| l.to_string()).collect(),
            own,
            partition: None,
        }
    }

    pub fn partition(p: &'a Partition) -> Self {
        Units {
            kind: UnitKind::Metro,
            ids: p.unit_ids().to_vec(),
            own: HashMap::new(),
            partition: Some(p),
        }
    }

    pub fn for_policy(corpus: &Corpus, opts: &CountOptions, mapping: Option<&'a Partition>) -> Self {
        match mapping {
            Some(p) => Units::partition(p),
            None => Units::localities(corpus, opts),
        }
    }

    pub fn unit(&self, locality: &LocalityId) -> Result<usize, CountError> {
        let found = match self.partition {
            Some(p) => p.unit_of(locality.as_str()),
            None => self.own.get(locality).copied(),
        };
        found.ok_or_else(|| CountError::UnknownLocality(locality.to_string()))
    }

    /// Address instances of a record as `(locality, unit)`, unresolved skipped.
    pub fn instances<'r>(&self, r: &'r PublicationRecord) -> Result<Vec<(&'r LocalityId, usize)>, CountError> {
        r.affiliations
            .iter()
            .filter_map(|a| a.resolved_locality.as_ref())
            .map(|l| self.unit(l).map(|u| (l, u)))
            .collect()
    }
}

/// Fails when unresolved affiliations of admitted records exceed the tolerance.
pub(crate) fn check_unresolved(corpus: &Corpus, opts: &CountOptions) -> Result<usize, CountError> {
    let (unresolved, total) = corpus
        .records
        .par_iter()
        .filter(|r| opts.admits(r))
        .map(|r| {
            let u = r.affiliations.iter().filter(|a| a.resolved_locality.is_none()).count();
            (u, r.affiliations.len())
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let ratio = if total == 0 {
        0.0
    } else {
        unresolved as f64 / total as f64
    };
    if unresolved > 0 && ratio > opts.unresolved_tolerance {
        let sample = corpus
            .records
            .iter()
            .filter(|r| opts.admits(r))
            .flat_map(|r| {
                r.affiliations
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.resolved_locality.is_none())
                    .map(move |(i, _)| (r.id.clone(), i))
            })
            .take(10)
            .collect();
        return Err(CountError::UnresolvedAffiliations {
            unresolved,
            total,
            tolerance: opts.unresolved_tolerance,
            sample,
        });
    }
    Ok(unresolved)
}

/// Integer tallies; `shares` holds numerators keyed by (unit, denominator).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    whole: BTreeMap<usize, u64>,
    shares: BTreeMap<(usize, u64), u64>,
    papers: u64,
}

impl Tally {
    pub fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in other.whole {
            *self.whole.entry(k).or_default() += v;
        }
        for (k, v) in other.shares {
            *self.shares.entry(k).or_default() += v;
        }
        self.papers += other.papers;
        self
    }

    fn finish<S: Credit>(self, ids: &[String]) -> (BTreeMap<String, S>, u64) {
        let mut credits: BTreeMap<String, S> = self
            .whole
            .into_iter()
            .filter(|(_, v)| *v > 0)
            .map(|(u, v)| (ids[u].clone(), S::from_count(v)))
            .collect();
        let mut grouped: BTreeMap<usize, Vec<(u64, u64)>> = BTreeMap::new();
        for ((u, den), num) in self.shares {
            grouped.entry(u).or_default().push((den, num));
        }
        for (u, parts) in grouped {
            credits.insert(ids[u].clone(), sum_ratios(parts));
        }
        (credits, self.papers)
    }
}

/// Folds `per_paper` over admitted records, honouring `opts.chunks`.
pub(crate) fn fold_records<F>(corpus: &Corpus, opts: &CountOptions, per_paper: F) -> Result<Tally, CountError>
where
    F: Fn(&PublicationRecord, &mut Tally) -> Result<(), CountError> + Sync,
{
    fold_chunks(corpus, opts, per_paper, Tally::merge)
}

/// Chunked fold with an associative `merge`; chunk results merge in order.
pub(crate) fn fold_chunks<T, F, M>(
    corpus: &Corpus,
    opts: &CountOptions,
    per_paper: F,
    merge: M,
) -> Result<T, CountError>
where
    T: Default + Send,
    F: Fn(&PublicationRecord, &mut T) -> Result<(), CountError> + Sync,
    M: Fn(T, T) -> T + Sync,
{
    let records = &corpus.records;
    let run = |chunk: &[PublicationRecord]| -> Result<T, CountError> {
        let mut t = T::default();
        for r in chunk.iter().filter(|r| opts.admits(r)) {
            per_paper(r, &mut t)?;
        }
        Ok(t)
    };
    match opts.chunks {
        Some(n) if n > 0 => {
            let size = records.len().div_ceil(n).max(1);
            let parts: Vec<T> = records.par_chunks(size).map(run).collect::<Result<_, _>>()?;
            Ok(parts.into_iter().fold(T::default(), &merge))
        }
        _ => records
            .par_chunks(4096)
            .map(run)
            .try_reduce(T::default, |a, b| Ok(merge(a, b))),
    }
}

/// Fractional shares of one paper as `(unit, numerator, denominator)`.
/// Numerators sum to the denominator, so a paper's credit is exactly 1.
pub fn paper_shares(instances: &[(&LocalityId, usize)], basis: FractionalBasis) -> Vec<(usize, u64, u64)> {
    let mut per_unit: BTreeMap<usize, u64> = BTreeMap::new();
    let den = match basis {
        FractionalBasis::AddressInstance => {
            for &(_, u) in instances {
                *per_unit.entry(u).or_default() += 1;
            }
            instances.len() as u64
        }
        FractionalBasis::DistinctLocality => {
            let distinct: BTreeSet<(&LocalityId, usize)> = instances.iter().copied().collect();
            for &(_, u) in &distinct {
                *per_unit.entry(u).or_default() += 1;
            }
            distinct.len() as u64
        }
    };
    per_unit.into_iter().map(|(u, n)| (u, n, den)).collect()
}

fn distinct_units(instances: &[(&LocalityId, usize)]) -> BTreeSet<usize> {
    instances.iter().map(|&(_, u)| u).collect()
}

#[allow(clippy::too_many_arguments)]
fn report<S: Credit>(
    corpus: &Corpus,
    opts: &CountOptions,
    kind: UnitKind,
    regime: Regime,
    policy: String,
    unresolved: usize,
    tally: Tally,
    ids: &[String],
) -> CountReport<S> {
    let (credits, paper_total) = tally.finish(ids);
    CountReport {
        unit_kind: kind,
        regime,
        year_filter: opts.year_filter,
        credits,
        paper_total,
        corpus_hash: corpus.fingerprint().to_string(),
        policy,
        unresolved_count: unresolved,
        notes: Vec::new(),
    }
}

/// Each distinct resolved locality of a paper receives credit 1.
pub fn integer_count<S: Credit>(corpus: &Corpus, opts: &CountOptions) -> Result<CountReport<S>, CountError> {
    let unresolved = check_unresolved(corpus, opts)?;
    let units = Units::localities(corpus, opts);
    let tally = fold_records(corpus, opts, |r, t| {
        let inst = units.instances(r)?;
        if inst.is_empty() {
            return Ok(());
        }
        t.papers += 1;
        for u in distinct_units(&inst) {
            *t.whole.entry(u).or_default() += 1;
        }
        Ok(())
    })?;
    Ok(report(
        corpus,
        opts,
        UnitKind::Locality,
        Regime::Integer,
        "mapping=identity".into(),
        unresolved,
        tally,
        &units.ids,
    ))
}

/// Sums member-locality credits into metros. Reproduces the double counting
/// of papers that span several member localities.
pub fn metro_integer_sum<S: Credit>(
    locality_report: &CountReport<S>,
    partition: &Partition,
) -> Result<CountReport<S>, CountError> {
    if locality_report.unit_kind != UnitKind::Locality {
        return Err(CountError::Mismatch(format!(
            "expected a locality report, got {}",
            locality_report.unit_kind
        )));
    }
    let mut credits: BTreeMap<String, S> = BTreeMap::new();
    for (loc, &c) in &locality_report.credits {
        let u = partition
            .unit_of(loc)
            .ok_or_else(|| CountError::UnknownLocality(loc.clone()))?;
        let e = credits.entry(partition.unit_ids()[u].clone()).or_insert_with(S::zero);
        *e = *e + c;
    }
    Ok(CountReport {
        unit_kind: UnitKind::Metro,
        regime: Regime::IntegerSum,
        year_filter: locality_report.year_filter,
        credits,
        paper_total: locality_report.paper_total,
        corpus_hash: locality_report.corpus_hash.clone(),
        policy: format!("mapping={}", partition.describe()),
        unresolved_count: locality_report.unresolved_count,
        notes: vec!["papers spanning several member localities are counted once per locality".into()],
    })
}

/// Papers with at least one affiliation in a unit count once for that unit.
pub fn dedup_count<S: Credit>(
    corpus: &Corpus,
    partition: &Partition,
    opts: &CountOptions,
) -> Result<CountReport<S>, CountError> {
    let unresolved = check_unresolved(corpus, opts)?;
    let units = Units::partition(partition);
    let tally = fold_records(corpus, opts, |r, t| {
        let inst = units.instances(r)?;
        if inst.is_empty() {
            return Ok(());
        }
        t.papers += 1;
        for u in distinct_units(&inst) {
            *t.whole.entry(u).or_default() += 1;
        }
        Ok(())
    })?;
    Ok(report(
        corpus,
        opts,
        UnitKind::Metro,
        Regime::Dedup,
        format!("mapping={}", partition.describe()),
        unresolved,
        tally,
        &units.ids,
    ))
}

/// Splits each paper's single unit of credit over its localities (or address
/// instances) and sums the shares into the policy's units.
pub fn fractional_count<S: Credit>(
    corpus: &Corpus,
    policy: &AttributionPolicy<'_>,
    opts: &CountOptions,
) -> Result<CountReport<S>, CountError> {
    let unresolved = check_unresolved(corpus, opts)?;
    let units = Units::for_policy(corpus, opts, policy.metro_mapping);
    let tally = fold_records(corpus, opts, |r, t| {
        let inst = units.instances(r)?;
        if inst.is_empty() {
            return Ok(());
        }
        t.papers += 1;
        for (u, num, den) in paper_shares(&inst, policy.fractional_basis) {
            if num == den {
                *t.whole.entry(u).or_default() += 1;
            } else {
                *t.shares.entry((u, den)).or_default() += num;
            }
        }
        Ok(())
    })?;
    let mut rep: CountReport<S> = report(
        corpus,
        opts,
        units.kind,
        Regime::Fractional,
        policy.describe(),
        unresolved,
        Tally::default(),
        &units.ids,
    );
    // whole and partial credit for the same unit are summed exactly
    let mut merged: BTreeMap<usize, Vec<(u64, u64)>> = BTreeMap::new();
    for (u, n) in tally.whole {
        merged.entry(u).or_default().push((1, n));
    }
    for ((u, den), num) in tally.shares {
        merged.entry(u).or_default().push((den, num));
    }
    rep.credits = merged
        .into_iter()
        .map(|(u, parts)| (units.ids[u].clone(), sum_ratios(parts)))
        .collect();
    rep.paper_total = tally.papers;
    debug_assert!(rep
        .credits
        .values()
        .all(|c| c.to_f64() <= rep.paper_total as f64 + 1e-9));
    Ok(rep)
}

/// Institutions named on each affiliation of a record, as registry indices.
pub(crate) fn record_institutions(r: &PublicationRecord, registry: &InstitutionRegistry) -> Vec<Option<usize>> {
    r.affiliations.iter().map(|a| registry.match_entry(a)).collect()
}

/// Papers mentioning each registry institution, counted once per paper.
pub fn institution_count<S: Credit>(
    corpus: &Corpus,
    registry: &InstitutionRegistry,
    opts: &CountOptions,
) -> Result<CountReport<S>, CountError> {
    let ids: Vec<String> = registry.institutions().iter().map(|i| i.id.to_string()).collect();
    let tally = fold_records(corpus, opts, |r, t| {
        let found: BTreeSet<usize> = record_institutions(r, registry).into_iter().flatten().collect();
        if !found.is_empty() {
            t.papers += 1;
        }
        for i in found {
            *t.whole.entry(i).or_default() += 1;
        }
        Ok(())
    })?;
    Ok(report(
        corpus,
        opts,
        UnitKind::Institution,
        Regime::Integer,
        "institution matching".into(),
        0,
        tally,
        &ids,
    ))
}

/// Credits each institution's count to its headquarters locality.
pub fn institution_rollup<S: Credit>(
    inst_counts: &BTreeMap<String, S>,
    registry: &InstitutionRegistry,
) -> Result<CountReport<S>, CountError> {
    let mut credits: BTreeMap<String, S> = BTreeMap::new();
    for (inst, &c) in inst_counts {
        let hq = registry
            .get(inst)
            .ok_or_else(|| CountError::UnknownInstitution(inst.clone()))?
            .hq_locality
            .to_string();
        let e = credits.entry(hq).or_insert_with(S::zero);
        *e = *e + c;
    }
    credits.retain(|_, c| !c.is_zero());
    Ok(CountReport {
        unit_kind: UnitKind::Locality,
        regime: Regime::IntegerSum,
        year_filter: None,
        credits,
        paper_total: 0,
        corpus_hash: String::new(),
        policy: "institution rollup to headquarters locality".into(),
        unresolved_count: 0,
        notes: vec![
            "papers co-affiliated with several institutions of one locality are counted once per institution".into(),
        ],
    })
}

/// Rollup of an institution count report, keeping its provenance.
pub fn rollup_report<S: Credit>(
    inst_report: &CountReport<S>,
    registry: &InstitutionRegistry,
) -> Result<CountReport<S>, CountError> {
    if inst_report.unit_kind != UnitKind::Institution {
        return Err(CountError::Mismatch("expected an institution report".into()));
    }
    let mut rep = institution_rollup(&inst_report.credits, registry)?;
    rep.year_filter = inst_report.year_filter;
    rep.corpus_hash = inst_report.corpus_hash.clone();
    rep.paper_total = inst_report.paper_total;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchRow {
    pub institution_id: String,
    pub total: u64,
    pub at_hq: u64,
    pub hq_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    /// Ascending by `hq_share`, ties by institution id.
    pub rows: Vec<MismatchRow>,
    /// Institution strings matching no registry entry, with paper counts.
    pub unmatched: Vec<(String, u64)>,
    pub corpus_hash: String,
}

impl MismatchReport {
    pub fn row(&self, institution: &str) -> Option<&MismatchRow> {
        self.rows.iter().find(|r| r.institution_id == institution)
    }

    /// `institution_id,total,at_hq,hq_share`.
    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# corpus_hash: {}", self.corpus_hash)?;
        for (name, n) in &self.unmatched {
            writeln!(w, "# unmatched_institution: {name} ({n} papers)")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["institution_id", "total", "at_hq", "hq_share"])?;
        for r in &self.rows {
            out.write_record([
                r.institution_id.as_str(),
                &r.total.to_string(),
                &r.at_hq.to_string(),
                &r.hq_share.to_string(),
            ])?;
        }
        out.flush()
    }
}

/// Share of each institution's papers that were produced at its headquarters.
pub fn hq_mismatch(corpus: &Corpus, registry: &InstitutionRegistry, opts: &CountOptions) -> MismatchReport {
    let insts = registry.institutions();
    let per_paper = |r: &PublicationRecord| {
        let matches = record_institutions(r, registry);
        let mut seen: BTreeMap<usize, bool> = BTreeMap::new();
        let mut unmatched: BTreeSet<String> = BTreeSet::new();
        for (a, m) in r.affiliations.iter().zip(matches) {
            match m {
                Some(i) => {
                    let at_hq = a.resolved_locality.as_ref() == Some(&insts[i].hq_locality);
                    *seen.entry(i).or_default() |= at_hq;
                }
                None if a.is_parsed() => {
                    unmatched.insert(a.institution.clone());
                }
                None => {}
            }
        }
        (seen, unmatched)
    };
    let (counts, unmatched) = corpus
        .records
        .par_iter()
        .filter(|r| opts.admits(r))
        .map(per_paper)
        .fold(
            || (BTreeMap::<usize, (u64, u64)>::new(), BTreeMap::<String, u64>::new()),
            |(mut c, mut u), (seen, names)| {
                for (i, at_hq) in seen {
                    let e = c.entry(i).or_default();
                    e.0 += 1;
                    e.1 += at_hq as u64;
                }
                for n in names {
                    *u.entry(n).or_default() += 1;
                }
                (c, u)
            },
        )
        .reduce(
            || (BTreeMap::new(), BTreeMap::new()),
            |(mut c1, mut u1), (c2, u2)| {
                for (k, v) in c2 {
                    let e = c1.entry(k).or_default();
                    e.0 += v.0;
                    e.1 += v.1;
                }
                for (k, v) in u2 {
                    *u1.entry(k).or_default() += v;
                }
                (c1, u1)
            },
        );
    let mut rows: Vec<MismatchRow> = counts
        .into_iter()
        .map(|(i, (total, at_hq))| MismatchRow {
            institution_id: insts[i].id.to_string(),
            total,
            at_hq,
            hq_share: at_hq as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.hq_share
            .total_cmp(&b.hq_share)
            .then_with(|| a.institution_id.cmp(&b.institution_id))
    });
    MismatchReport {
        rows,
        unmatched: unmatched.into_iter().collect(),
        corpus_hash: corpus.fingerprint().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delineation::{MetroArea, Strategy};
    use crate::gazetteer::{Gazetteer, Institution, Locality};
    use crate::record::AffiliationEntry;
    use crate::scalar::Rational;

    fn aff(loc: &str) -> AffiliationEntry {
        let mut a = AffiliationEntry::structured("Inst", loc, None, "X");
        a.resolved_locality = Some(LocalityId::from(loc));
        a
    }

    fn paper(id: &str, locs: &[&str]) -> PublicationRecord {
        PublicationRecord {
            id: id.into(),
            year: 2016,
            affiliations: locs.iter().map(|l| aff(l)).collect(),
        }
    }

    fn corpus(papers: Vec<PublicationRecord>) -> Corpus {
        Corpus::with_records(papers, Vec::new(), Vec::new())
    }

    fn gaz(ids: &[&str]) -> Gazetteer {
        Gazetteer::new(
            ids.iter()
                .enumerate()
                .map(|(i, id)| Locality::new(id, id, "X", 0.0, i as f64))
                .collect(),
        )
        .unwrap()
    }

    fn partition(g: &Gazetteer, groups: &[(&str, &[&str])]) -> Partition {
        let metros: Vec<MetroArea> = groups
            .iter()
            .map(|(id, m)| MetroArea {
                id: id.to_string(),
                members: m.iter().map(|l| LocalityId::from(*l)).collect(),
                strategy: Strategy::Lookup,
                params: "test".into(),
            })
            .collect();
        let inside: BTreeSet<&str> = groups.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        let singletons = g
            .localities()
            .iter()
            .filter(|l| !inside.contains(l.id.as_str()))
            .map(|l| l.id.clone())
            .collect();
        Partition::new(metros, singletons, Strategy::Lookup, "test", g).unwrap()
    }

    #[test]
    fn integer_credits_each_distinct_locality() {
        let c = corpus(vec![paper("p1", &["A", "B"])]);
        let r: CountReport<f64> = integer_count(&c, &CountOptions::default()).unwrap();
        assert_eq!(r.credit("A"), 1.0);
        assert_eq!(r.credit("B"), 1.0);
        assert_eq!(r.paper_total, 1);
    }

    #[test]
    fn metro_sum_double_counts_and_dedup_does_not() {
        let g = gaz(&["A", "B", "C"]);
        let p = partition(&g, &[("M", &["A", "B"])]);
        let c = corpus(vec![paper("p1", &["A", "B"])]);
        let opts = CountOptions::default();
        let loc: CountReport<f64> = integer_count(&c, &opts).unwrap();
        let sum = metro_integer_sum(&loc, &p).unwrap();
        assert_eq!(sum.credit("M"), 2.0);
        let dedup: CountReport<f64> = dedup_count(&c, &p, &opts).unwrap();
        assert_eq!(dedup.credit("M"), 1.0);
        assert_eq!(dedup.credit("C"), 0.0);
    }

    #[test]
    fn fractional_halves_and_wholes() {
        let c = corpus(vec![paper("p1", &["Tokyo", "Beijing"]), paper("p2", &["Tokyo"])]);
        let r: CountReport<f64> = fractional_count(
            &c,
            &AttributionPolicy::localities(FractionalBasis::DistinctLocality),
            &CountOptions::default(),
        )
        .unwrap();
        assert_eq!(r.credit("Beijing"), 0.5);
        assert_eq!(r.credit("Tokyo"), 1.5);
        assert_eq!(r.paper_total, 2);
    }

    #[test]
    fn both_bases_on_repeated_instances() {
        // address instances A, A, B come from distinct raw strings in one locality
        let mut p = paper("p1", &["A", "B"]);
        let mut extra = aff("A");
        extra.raw = "Other Inst, A, X".into();
        p.affiliations.insert(1, extra);
        let c = corpus(vec![p]);
        let opts = CountOptions::default();
        let distinct: CountReport<Rational> = fractional_count(
            &c,
            &AttributionPolicy::localities(FractionalBasis::DistinctLocality),
            &opts,
        )
        .unwrap();
        assert_eq!(distinct.credit("A"), Rational::new(1, 2));
        assert_eq!(distinct.credit("B"), Rational::new(1, 2));
        let inst: CountReport<Rational> = fractional_count(
            &c,
            &AttributionPolicy::localities(FractionalBasis::AddressInstance),
            &opts,
        )
        .unwrap();
        assert_eq!(inst.credit("A"), Rational::new(2, 3));
        assert_eq!(inst.credit("B"), Rational::new(1, 3));
    }

    #[test]
    fn unresolved_tolerance() {
        let mut p = paper("p1", &["A", "B"]);
        p.affiliations[1].resolved_locality = None;
        let c = corpus(vec![p, paper("p2", &["A"])]);
        let err = integer_count::<f64>(&c, &CountOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            CountError::UnresolvedAffiliations {
                unresolved: 1,
                total: 3,
                ..
            }
        ));
        let lenient = CountOptions {
            unresolved_tolerance: 0.5,
            ..Default::default()
        };
        let r: CountReport<f64> = integer_count(&c, &lenient).unwrap();
        assert_eq!(r.credit("A"), 2.0);
        assert_eq!(r.unresolved_count, 1);
    }

    #[test]
    fn year_filter_applies_before_counting() {
        let mut old = paper("p0", &["A"]);
        old.year = 2001;
        let c = corpus(vec![old, paper("p1", &["A"])]);
        let opts = CountOptions {
            year_filter: Some((2010, 2020)),
            ..Default::default()
        };
        let r: CountReport<f64> = integer_count(&c, &opts).unwrap();
        assert_eq!(r.credit("A"), 1.0);
        assert_eq!(r.year_filter, Some((2010, 2020)));
    }

    #[test]
    fn locality_outside_partition() {
        let g = gaz(&["A"]);
        let p = partition(&g, &[]);
        let c = corpus(vec![paper("p1", &["Z"])]);
        assert_eq!(
            dedup_count::<f64>(&c, &p, &CountOptions::default()),
            Err(CountError::UnknownLocality("Z".into()))
        );
    }

    fn inst_fixture() -> (Gazetteer, InstitutionRegistry) {
        let g = gaz(&["armonk", "yorktown", "melbourne", "creswick"]);
        let reg = InstitutionRegistry::new(
            vec![
                Institution::new("ibm", "IBM Corp", "armonk").with_alt_name("IBM"),
                Institution::new("unimelb", "Univ Melbourne", "melbourne"),
                Institution::new("x1", "Inst One", "melbourne"),
                Institution::new("x2", "Inst Two", "melbourne"),
            ],
            &g,
        )
        .unwrap();
        (g, reg)
    }

    #[test]
    fn rollup_sums_by_headquarters() {
        let (_, reg) = inst_fixture();
        let counts = BTreeMap::from([("x1".to_string(), 10.0), ("x2".to_string(), 5.0)]);
        let r = institution_rollup(&counts, &reg).unwrap();
        assert_eq!(r.credit("melbourne"), 15.0);
        assert_eq!(r.regime, Regime::IntegerSum);
        let bad = BTreeMap::from([("nope".to_string(), 1.0)]);
        assert_eq!(
            institution_rollup(&bad, &reg),
            Err(CountError::UnknownInstitution("nope".into()))
        );
    }

    fn inst_paper(id: &str, entries: &[(&str, &str)]) -> PublicationRecord {
        PublicationRecord {
            id: id.into(),
            year: 2016,
            affiliations: entries
                .iter()
                .map(|(inst, loc)| {
                    let mut a = AffiliationEntry::structured(inst, loc, None, "X");
                    a.resolved_locality = Some(LocalityId::from(*loc));
                    a
                })
                .collect(),
        }
    }

    #[test]
    fn hq_share_sorted_ascending() {
        let (_, reg) = inst_fixture();
        let c = corpus(vec![
            inst_paper("p1", &[("IBM", "yorktown")]),
            inst_paper("p2", &[("IBM Corp", "armonk")]),
            inst_paper("p3", &[("IBM", "yorktown"), ("Univ Melbourne", "melbourne")]),
            inst_paper("p4", &[("Unknown Lab", "creswick")]),
        ]);
        let m = hq_mismatch(&c, &reg, &CountOptions::default());
        assert_eq!(m.rows[0].institution_id, "ibm");
        assert_eq!((m.rows[0].total, m.rows[0].at_hq), (3, 1));
        assert_eq!(m.rows[1].hq_share, 1.0);
        assert_eq!(m.unmatched, vec![("Unknown Lab".to_string(), 1)]);
    }
}
