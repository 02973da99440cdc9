//! Collaboration dyads between localities, metros and institutions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::counting::{check_unresolved, fold_chunks, CountError, CountOptions, UnitKind, Units};
use crate::delineation::Partition;
use crate::gazetteer::{Gazetteer, InstitutionRegistry, LocalityId};
use crate::record::Corpus;
use crate::scalar::{sum_ratios, Credit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DyadRegime {
    Integer,
    Fractional,
}

impl DyadRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            DyadRegime::Integer => "integer",
            DyadRegime::Fractional => "fractional",
        }
    }
}

impl FromStr for DyadRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "integer" => Ok(DyadRegime::Integer),
            "fractional" => Ok(DyadRegime::Fractional),
            other => Err(format!("unknown dyad regime '{other}'")),
        }
    }
}

impl fmt::Display for DyadRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CollabError {
    #[error(transparent)]
    Count(#[from] CountError),
    #[error("unknown metro '{0}'")]
    UnknownMetro(String),
    #[error("unknown city '{0}'")]
    UnknownCity(String),
}

/// Unordered pair in canonical order.
pub fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Symmetric collaboration counts keyed by canonically ordered unit pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadMatrix<S> {
    pub unit_kind: UnitKind,
    pub regime: DyadRegime,
    pub cells: BTreeMap<(String, String), S>,
    pub include_diagonal: bool,
    pub corpus_hash: String,
    pub year_filter: Option<(i32, i32)>,
    pub notes: Vec<String>,
}

impl<S: Credit> DyadMatrix<S> {
    pub fn cell(&self, a: &str, b: &str) -> S {
        self.cells.get(&canonical_pair(a, b)).copied().unwrap_or_else(S::zero)
    }

    pub fn total_weight(&self) -> S {
        self.cells.values().fold(S::zero(), |a, &b| a + b)
    }

    /// `unit_a,unit_b,weight,regime`, rows in canonical pair order.
    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# corpus_hash: {}", self.corpus_hash)?;
        writeln!(w, "# unit_kind: {}", self.unit_kind)?;
        writeln!(w, "# include_diagonal: {}", self.include_diagonal)?;
        for n in &self.notes {
            writeln!(w, "# note: {n}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["unit_a", "unit_b", "weight", "regime"])?;
        for ((a, b), weight) in &self.cells {
            out.write_record([a.as_str(), b.as_str(), &weight.to_string(), self.regime.as_str()])?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadOptions {
    pub include_diagonal: bool,
    pub count: CountOptions,
}

impl Default for DyadOptions {
    fn default() -> Self {
        DyadOptions {
            include_diagonal: true,
            count: CountOptions::default(),
        }
    }
}

#[derive(Default)]
struct PairTally {
    whole: HashMap<(usize, usize), u64>,
    // numerators keyed by (pair, denominator)
    shares: HashMap<((usize, usize), u64), u64>,
}

impl PairTally {
    fn merge(mut self, other: PairTally) -> PairTally {
        let (mut big, small) = if self.whole.len() + self.shares.len() >= other.whole.len() + other.shares.len() {
            (std::mem::take(&mut self), other)
        } else {
            (other, std::mem::take(&mut self))
        };
        for (k, v) in small.whole {
            *big.whole.entry(k).or_default() += v;
        }
        for (k, v) in small.shares {
            *big.shares.entry(k).or_default() += v;
        }
        big
    }
}

/// Dyad matrix over localities (`mapping = None`) or partition units.
pub fn dyad_matrix<S: Credit>(
    corpus: &Corpus,
    mapping: Option<&Partition>,
    regime: DyadRegime,
    opts: &DyadOptions,
) -> Result<DyadMatrix<S>, CollabError> {
    check_unresolved(corpus, &opts.count)?;
    let units = Units::for_policy(corpus, &opts.count, mapping);
    let diagonal = opts.include_diagonal && regime == DyadRegime::Integer && mapping.is_some();
    let tally = fold_chunks(
        corpus,
        &opts.count,
        |r, t: &mut PairTally| {
            let inst = units.instances(r)?;
            let distinct: BTreeSet<(&LocalityId, usize)> = inst.into_iter().collect();
            let mut per_unit: BTreeMap<usize, usize> = BTreeMap::new();
            for &(_, u) in &distinct {
                *per_unit.entry(u).or_default() += 1;
            }
            let us: Vec<usize> = per_unit.keys().copied().collect();
            let k = us.len() as u64;
            if k >= 2 {
                let den = k * (k - 1) / 2;
                for (i, &a) in us.iter().enumerate() {
                    for &b in &us[i + 1..] {
                        match regime {
                            DyadRegime::Integer => *t.whole.entry((a, b)).or_default() += 1,
                            DyadRegime::Fractional => *t.shares.entry(((a, b), den)).or_default() += 1,
                        }
                    }
                }
            }
            if diagonal {
                for (&u, &n) in &per_unit {
                    if n >= 2 {
                        *t.whole.entry((u, u)).or_default() += 1;
                    }
                }
            }
            Ok(())
        },
        PairTally::merge,
    )?;
    let ids = &units.ids;
    let key = |(a, b): (usize, usize)| canonical_pair(&ids[a], &ids[b]);
    let mut cells: BTreeMap<(String, String), S> = tally
        .whole
        .into_iter()
        .map(|(p, n)| (key(p), S::from_count(n)))
        .collect();
    let mut grouped: BTreeMap<(usize, usize), Vec<(u64, u64)>> = BTreeMap::new();
    for ((p, den), num) in tally.shares {
        grouped.entry(p).or_default().push((den, num));
    }
    for (p, parts) in grouped {
        cells.insert(key(p), sum_ratios(parts));
    }
    let mut notes = Vec::new();
    if opts.include_diagonal && regime == DyadRegime::Fractional {
        notes.push("diagonal cells are not defined under the fractional regime".into());
    }
    Ok(DyadMatrix {
        unit_kind: units.kind,
        regime,
        cells,
        include_diagonal: diagonal,
        corpus_hash: corpus.fingerprint().to_string(),
        year_filter: opts.count.year_filter,
        notes,
    })
}

/// Locality-level links behind one metro dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkExpansion {
    pub metro_pair: (String, String),
    /// For distinct metros the first locality lies in `metro_pair.0`.
    pub locality_links: BTreeMap<(String, String), u64>,
    /// Papers with a locality in each metro (the integer dyad cell).
    pub metro_cell: u64,
    /// Contributing papers touching two or more localities of one metro.
    pub multi_locality_papers: u64,
    pub note: Option<String>,
}

impl LinkExpansion {
    pub fn link_total(&self) -> u64 {
        self.locality_links.values().sum()
    }

    /// `locality_a,locality_b,joint_papers`.
    pub fn write_csv<W: Write>(&self, mut w: W, extra_header: &[String]) -> std::io::Result<()> {
        for line in extra_header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# metro_pair: {},{}", self.metro_pair.0, self.metro_pair.1)?;
        writeln!(w, "# metro_cell: {}", self.metro_cell)?;
        if let Some(n) = &self.note {
            writeln!(w, "# note: {n}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["locality_a", "locality_b", "joint_papers"])?;
        for ((a, b), n) in &self.locality_links {
            out.write_record([a.as_str(), b.as_str(), &n.to_string()])?;
        }
        out.flush()
    }
}

#[derive(Default)]
struct LinkTally {
    links: BTreeMap<(String, String), u64>,
    cell: u64,
    multi: u64,
}

impl LinkTally {
    fn merge(mut self, other: LinkTally) -> LinkTally {
        for (k, v) in other.links {
            *self.links.entry(k).or_default() += v;
        }
        self.cell += other.cell;
        self.multi += other.multi;
        self
    }
}

/// Enumerates locality pairs joining two metros (or one metro with itself).
pub fn expand_links(
    corpus: &Corpus,
    partition: &Partition,
    metro_pair: (&str, &str),
    opts: &CountOptions,
) -> Result<LinkExpansion, CollabError> {
    let (m1, m2) = if metro_pair.0 <= metro_pair.1 {
        metro_pair
    } else {
        (metro_pair.1, metro_pair.0)
    };
    let u1 = partition
        .unit_index(m1)
        .ok_or_else(|| CollabError::UnknownMetro(m1.to_string()))?;
    let u2 = partition
        .unit_index(m2)
        .ok_or_else(|| CollabError::UnknownMetro(m2.to_string()))?;
    let t = fold_chunks(
        corpus,
        opts,
        |r, t: &mut LinkTally| {
            let mut in1: BTreeSet<&str> = BTreeSet::new();
            let mut in2: BTreeSet<&str> = BTreeSet::new();
            for l in r.affiliations.iter().filter_map(|a| a.resolved_locality.as_ref()) {
                match partition.unit_of(l.as_str()) {
                    Some(u) if u == u1 => {
                        in1.insert(l.as_str());
                    }
                    Some(u) if u == u2 => {
                        in2.insert(l.as_str());
                    }
                    _ => {}
                }
            }
            if u1 == u2 {
                let ls: Vec<&str> = in1.into_iter().collect();
                if ls.len() < 2 {
                    return Ok(());
                }
                t.cell += 1;
                t.multi += (ls.len() > 2) as u64;
                for (i, a) in ls.iter().enumerate() {
                    for b in &ls[i + 1..] {
                        *t.links.entry((a.to_string(), b.to_string())).or_default() += 1;
                    }
                }
            } else {
                if in1.is_empty() || in2.is_empty() {
                    return Ok(());
                }
                t.cell += 1;
                t.multi += (in1.len() > 1 || in2.len() > 1) as u64;
                for a in &in1 {
                    for b in &in2 {
                        *t.links.entry((a.to_string(), b.to_string())).or_default() += 1;
                    }
                }
            }
            Ok(())
        },
        LinkTally::merge,
    )?;
    let note = (t.multi > 0).then(|| {
        format!(
            "{} papers touch several localities of one metro; link total {} exceeds the metro cell {}",
            t.multi,
            t.links.values().sum::<u64>(),
            t.cell
        )
    });
    Ok(LinkExpansion {
        metro_pair: (m1.to_string(), m2.to_string()),
        locality_links: t.links,
        metro_cell: t.cell,
        multi_locality_papers: t.multi,
        note,
    })
}

/// A locality or a metro whose institutions are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub id: String,
    pub members: BTreeSet<LocalityId>,
}

impl City {
    pub fn locality(gazetteer: &Gazetteer, id: &str) -> Result<City, CollabError> {
        let l = gazetteer
            .get(id)
            .ok_or_else(|| CollabError::UnknownCity(id.to_string()))?;
        Ok(City {
            id: id.to_string(),
            members: BTreeSet::from([l.id.clone()]),
        })
    }

    /// Any partition unit, metro or singleton.
    pub fn unit(partition: &Partition, id: &str) -> Result<City, CollabError> {
        let u = partition
            .unit_index(id)
            .ok_or_else(|| CollabError::UnknownCity(id.to_string()))?;
        Ok(City {
            id: id.to_string(),
            members: partition.unit_members(u).into_iter().collect(),
        })
    }
}

/// Institution pairs co-affiliated on papers produced in `city`. Pairs of
/// institutions headquartered in the city appear even when zero.
pub fn intra_city_matrix<S: Credit>(
    corpus: &Corpus,
    city: &City,
    registry: &InstitutionRegistry,
    opts: &CountOptions,
) -> Result<DyadMatrix<S>, CollabError> {
    let insts = registry.institutions();
    let t = fold_chunks(
        corpus,
        opts,
        |r, t: &mut PairTally| {
            let here: BTreeSet<usize> = r
                .affiliations
                .iter()
                .filter(|a| a.resolved_locality.as_ref().is_some_and(|l| city.members.contains(l)))
                .filter_map(|a| registry.match_entry(a))
                .collect();
            let here: Vec<usize> = here.into_iter().collect();
            for (i, &a) in here.iter().enumerate() {
                for &b in &here[i + 1..] {
                    *t.whole.entry((a, b)).or_default() += 1;
                }
            }
            Ok(())
        },
        PairTally::merge,
    )?;
    let mut cells: BTreeMap<(String, String), S> = BTreeMap::new();
    let local: Vec<&str> = insts
        .iter()
        .filter(|i| city.members.contains(&i.hq_locality))
        .map(|i| i.id.as_str())
        .collect();
    for (i, a) in local.iter().enumerate() {
        for b in &local[i + 1..] {
            cells.insert(canonical_pair(a, b), S::zero());
        }
    }
    for ((a, b), n) in t.whole {
        cells.insert(
            canonical_pair(insts[a].id.as_str(), insts[b].id.as_str()),
            S::from_count(n),
        );
    }
    Ok(DyadMatrix {
        unit_kind: UnitKind::Institution,
        regime: DyadRegime::Integer,
        cells,
        include_diagonal: false,
        corpus_hash: corpus.fingerprint().to_string(),
        year_filter: opts.year_filter,
        notes: vec![format!(
            "city {}: no expected-collaboration baseline is applied",
            city.id
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delineation::{MetroArea, Strategy};
    use crate::gazetteer::{Institution, Locality};
    use crate::record::{AffiliationEntry, PublicationRecord};
    use crate::scalar::Rational;

    fn paper(id: &str, entries: &[(&str, &str)]) -> PublicationRecord {
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

    fn locs(id: &str, ls: &[&str]) -> PublicationRecord {
        let e: Vec<(&str, &str)> = ls.iter().map(|l| ("Inst", *l)).collect();
        paper(id, &e)
    }

    fn setup() -> (Gazetteer, Partition) {
        let ids = ["a1", "a2", "b1", "c1"];
        let g = Gazetteer::new(
            ids.iter()
                .enumerate()
                .map(|(i, id)| Locality::new(id, id, "X", 0.0, i as f64))
                .collect(),
        )
        .unwrap();
        let metro = MetroArea {
            id: "A".into(),
            members: ["a1", "a2"].into_iter().map(LocalityId::from).collect(),
            strategy: Strategy::Lookup,
            params: "test".into(),
        };
        let singles = ["b1", "c1"].into_iter().map(LocalityId::from).collect();
        let p = Partition::new(vec![metro], singles, Strategy::Lookup, "test", &g).unwrap();
        (g, p)
    }

    #[test]
    fn three_units_fractional_thirds() {
        let c = Corpus::with_records(vec![locs("p", &["a1", "b1", "c1"])], vec![], vec![]);
        let m: DyadMatrix<Rational> = dyad_matrix(&c, None, DyadRegime::Fractional, &DyadOptions::default()).unwrap();
        for (a, b) in [("a1", "b1"), ("a1", "c1"), ("b1", "c1")] {
            assert_eq!(m.cell(a, b), Rational::new(1, 3));
        }
        assert_eq!(m.total_weight(), Rational::from_integer(1));
    }

    #[test]
    fn metro_diagonal_and_pairs() {
        let (_, p) = setup();
        let c = Corpus::with_records(
            vec![locs("p1", &["a1", "a2", "b1"]), locs("p2", &["a1"])],
            vec![],
            vec![],
        );
        let m: DyadMatrix<f64> = dyad_matrix(&c, Some(&p), DyadRegime::Integer, &DyadOptions::default()).unwrap();
        assert_eq!(m.cell("A", "b1"), 1.0);
        assert_eq!(m.cell("A", "A"), 1.0);
        assert_eq!(m.cells.len(), 2);
        let off = DyadOptions {
            include_diagonal: false,
            ..Default::default()
        };
        let m: DyadMatrix<f64> = dyad_matrix(&c, Some(&p), DyadRegime::Integer, &off).unwrap();
        assert_eq!(m.cell("A", "A"), 0.0);
    }

    #[test]
    fn expansion_reconciles() {
        let (_, p) = setup();
        let c = Corpus::with_records(
            vec![locs("p1", &["a1", "a2", "b1"]), locs("p2", &["a1", "b1"])],
            vec![],
            vec![],
        );
        let e = expand_links(&c, &p, ("b1", "A"), &CountOptions::default()).unwrap();
        assert_eq!(e.metro_pair, ("A".to_string(), "b1".to_string()));
        assert_eq!(e.metro_cell, 2);
        assert_eq!(e.link_total(), 3);
        assert_eq!(e.multi_locality_papers, 1);
        assert!(e.note.is_some());
        let none = expand_links(&c, &p, ("A", "c1"), &CountOptions::default()).unwrap();
        assert!(none.locality_links.is_empty());
        assert_eq!(
            expand_links(&c, &p, ("A", "zz"), &CountOptions::default()),
            Err(CollabError::UnknownMetro("zz".into()))
        );
    }

    #[test]
    fn intra_city_emits_zero_cells() {
        let (g, _) = setup();
        let reg = InstitutionRegistry::new(
            vec![
                Institution::new("i1", "One", "a1"),
                Institution::new("i2", "Two", "a1"),
                Institution::new("i3", "Three", "a1"),
            ],
            &g,
        )
        .unwrap();
        let c = Corpus::with_records(
            vec![
                paper("p1", &[("One", "a1"), ("Two", "a1")]),
                paper("p2", &[("One", "a1"), ("Three", "b1")]),
            ],
            vec![],
            vec![],
        );
        let city = City::locality(&g, "a1").unwrap();
        let m: DyadMatrix<f64> = intra_city_matrix(&c, &city, &reg, &CountOptions::default()).unwrap();
        assert_eq!(m.cell("i1", "i2"), 1.0);
        assert_eq!(m.cells.get(&canonical_pair("i1", "i3")), Some(&0.0));
        assert_eq!(m.cells.len(), 3);
    }
}
