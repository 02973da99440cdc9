//! Metropolitan-area partitions of the locality set.
//!
//! Three strategies build a [`Partition`]: membership lookup against a
//! statistical-area table, single-linkage agglomeration under a distance
//! threshold, and merging of existing metros joined by short travel times.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::gazetteer::{
    distance_km, Gazetteer, Locality, LocalityId, MembershipTable, Tier, TravelTimeEdge, EARTH_MEAN_RADIUS_KM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Lookup,
    Distance,
    TravelTime,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Lookup => "lookup",
            Strategy::Distance => "distance",
            Strategy::TravelTime => "travel_time",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "lookup" => Ok(Strategy::Lookup),
            "distance" => Ok(Strategy::Distance),
            "travel_time" => Ok(Strategy::TravelTime),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetroArea {
    pub id: String,
    pub members: BTreeSet<LocalityId>,
    pub strategy: Strategy,
    pub params: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum DelineationError {
    #[error("membership table has no entries for tier {0}")]
    EmptyTier(Tier),
    #[error("locality '{0}' has no population but a core population was requested")]
    MissingPopulation(LocalityId),
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("partitions were built over different gazetteers")]
    GazetteerMismatch,
    #[error("invalid partition: {0}")]
    Invalid(String),
}

/// Assignment of every gazetteer locality to exactly one metro, or to the
/// singleton set when it belongs to none.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    metros: Vec<MetroArea>,
    singletons: BTreeSet<LocalityId>,
    strategy: Strategy,
    params: String,
    gazetteer_fingerprint: String,
    unit_of: HashMap<LocalityId, usize>,
    unit_ids: Vec<String>,
}

impl Partition {
    /// Checks the partition property against `gazetteer` and indexes units.
    pub fn new(
        mut metros: Vec<MetroArea>,
        singletons: BTreeSet<LocalityId>,
        strategy: Strategy,
        params: impl Into<String>,
        gazetteer: &Gazetteer,
    ) -> Result<Self, DelineationError> {
        metros.sort_by(|a, b| a.id.cmp(&b.id));
        let mut unit_of = HashMap::with_capacity(gazetteer.len());
        let mut unit_ids = Vec::with_capacity(metros.len() + singletons.len());
        for (u, m) in metros.iter().enumerate() {
            if m.members.is_empty() {
                return Err(DelineationError::Invalid(format!("metro '{}' is empty", m.id)));
            }
            for l in &m.members {
                if !gazetteer.contains(l.as_str()) {
                    return Err(DelineationError::Invalid(format!("unknown locality '{l}'")));
                }
                if unit_of.insert(l.clone(), u).is_some() {
                    return Err(DelineationError::Invalid(format!(
                        "locality '{l}' is in more than one metro"
                    )));
                }
            }
            unit_ids.push(m.id.clone());
        }
        for l in &singletons {
            if !gazetteer.contains(l.as_str()) {
                return Err(DelineationError::Invalid(format!("unknown locality '{l}'")));
            }
            if unit_of.insert(l.clone(), unit_ids.len()).is_some() {
                return Err(DelineationError::Invalid(format!(
                    "locality '{l}' is both a singleton and a metro member"
                )));
            }
            unit_ids.push(l.to_string());
        }
        if unit_of.len() != gazetteer.len() {
            let missing = gazetteer
                .localities()
                .iter()
                .find(|l| !unit_of.contains_key(&l.id))
                .map(|l| l.id.to_string())
                .unwrap_or_default();
            return Err(DelineationError::Invalid(format!(
                "locality '{missing}' is in no metro and not a singleton"
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &unit_ids {
            if !seen.insert(id.as_str()) {
                return Err(DelineationError::Invalid(format!("unit id '{id}' is used twice")));
            }
        }
        Ok(Partition {
            metros,
            singletons,
            strategy,
            params: params.into(),
            gazetteer_fingerprint: gazetteer.fingerprint(),
            unit_of,
            unit_ids,
        })
    }

    /// Every locality as its own singleton.
    pub fn identity(gazetteer: &Gazetteer) -> Self {
        let singletons = gazetteer.localities().iter().map(|l| l.id.clone()).collect();
        Partition::new(Vec::new(), singletons, Strategy::Lookup, "identity", gazetteer)
            .expect("identity partition is valid")
    }

    /// Metros in ascending id order.
    pub fn metros(&self) -> &[MetroArea] {
        &self.metros
    }

    pub fn singletons(&self) -> &BTreeSet<LocalityId> {
        &self.singletons
    }

    pub fn metro(&self, id: &str) -> Option<&MetroArea> {
        self.metros
            .binary_search_by(|m| m.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.metros[i])
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn params(&self) -> &str {
        &self.params
    }

    pub fn describe(&self) -> String {
        format!("{}({})", self.strategy, self.params)
    }

    pub fn gazetteer_fingerprint(&self) -> &str {
        &self.gazetteer_fingerprint
    }

    /// Counting units: metros first (by id), then singletons (by id).
    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_of(&self, locality: &str) -> Option<usize> {
        self.unit_of.get(locality).copied()
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        if let Ok(i) = self.metros.binary_search_by(|m| m.id.as_str().cmp(unit_id)) {
            return Some(i);
        }
        self.singletons
            .contains(unit_id)
            .then(|| self.unit_of(unit_id))
            .flatten()
    }

    /// Member localities of a unit, in id order.
    pub fn unit_members(&self, unit: usize) -> Vec<LocalityId> {
        match self.metros.get(unit) {
            Some(m) => m.members.iter().cloned().collect(),
            None => vec![LocalityId::from(self.unit_ids[unit].as_str())],
        }
    }

    /// Metro id a locality belongs to, `None` for singletons.
    pub fn metro_of(&self, locality: &str) -> Option<&MetroArea> {
        self.unit_of(locality).and_then(|u| self.metros.get(u))
    }

    pub fn is_metro_unit(&self, unit: usize) -> bool {
        unit < self.metros.len()
    }

    /// Re-checks that every locality appears exactly once.
    pub fn check(&self, gazetteer: &Gazetteer) -> Result<(), DelineationError> {
        Partition::new(
            self.metros.clone(),
            self.singletons.clone(),
            self.strategy,
            self.params.clone(),
            gazetteer,
        )
        .map(|_| ())
    }

    /// `locality_id,metro_id,strategy,params`, one row per locality.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut rows: Vec<[&str; 4]> = Vec::with_capacity(self.unit_of.len());
        for m in &self.metros {
            for l in &m.members {
                rows.push([l.as_str(), &m.id, m.strategy.as_str(), &m.params]);
            }
        }
        for l in &self.singletons {
            rows.push([l.as_str(), "", self.strategy.as_str(), "singleton"]);
        }
        rows.sort_unstable();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["locality_id", "metro_id", "strategy", "params"])?;
        for r in rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a partition written by [`Partition::write_csv`].
    pub fn from_reader<R: Read>(reader: R, gazetteer: &Gazetteer) -> Result<Self, DelineationError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let bad = |e: csv::Error| DelineationError::Invalid(e.to_string());
        let headers = rdr.headers().map_err(bad)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["locality_id", "metro_id", "strategy", "params"] {
            return Err(DelineationError::Invalid(
                "expected header locality_id,metro_id,strategy,params".into(),
            ));
        }
        let mut metros: BTreeMap<String, MetroArea> = BTreeMap::new();
        let mut singletons = BTreeSet::new();
        let mut strategies = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(bad)?;
            if rec.len() != 4 {
                return Err(DelineationError::Invalid(format!("bad row {rec:?}")));
            }
            let strategy: Strategy = rec[2].parse().map_err(DelineationError::Invalid)?;
            let loc = LocalityId::from(rec[0].trim());
            if rec[1].is_empty() {
                singletons.insert(loc);
                *strategies.entry(strategy).or_insert(0usize) += 1;
                continue;
            }
            let m = metros.entry(rec[1].to_string()).or_insert_with(|| MetroArea {
                id: rec[1].to_string(),
                members: BTreeSet::new(),
                strategy,
                params: rec[3].to_string(),
            });
            if m.strategy != strategy || m.params != rec[3] {
                return Err(DelineationError::Invalid(format!(
                    "metro '{}' has inconsistent strategy/params",
                    m.id
                )));
            }
            m.members.insert(loc);
            *strategies.entry(strategy).or_insert(0usize) += 1;
        }
        let metros: Vec<MetroArea> = metros.into_values().collect();
        let strategy = metros
            .iter()
            .map(|m| m.strategy)
            .max()
            .or_else(|| strategies.keys().next().copied())
            .unwrap_or(Strategy::Lookup);
        let params = metros
            .iter()
            .filter(|m| m.strategy == strategy)
            .map(|m| m.params.clone())
            .min()
            .unwrap_or_else(|| "identity".into());
        Partition::new(metros, singletons, strategy, params, gazetteer)
    }
}

/// Disjoint sets over `0..n` with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Components as sorted index lists, ordered by their smallest element.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// Largest population wins; missing population ranks lowest; ties go to the
/// smallest id.
fn representative<'a>(members: impl IntoIterator<Item = &'a Locality>) -> &'a Locality {
    members
        .into_iter()
        .min_by(|a, b| b.population.cmp(&a.population).then_with(|| a.id.cmp(&b.id)))
        .expect("non-empty member set")
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Delineation from a statistical-area membership table.
///
/// A completely empty table yields the all-singletons partition; a table that
/// has entries, but none for `tier`, is an error.
pub fn delineate_lookup(
    gazetteer: &Gazetteer,
    memberships: &MembershipTable,
    tier: Tier,
) -> Result<Partition, DelineationError> {
    let params = format!("tier={tier}");
    let Some(table) = memberships.tier(tier) else {
        if memberships.is_empty() {
            let all = gazetteer.localities().iter().map(|l| l.id.clone()).collect();
            return Partition::new(Vec::new(), all, Strategy::Lookup, params, gazetteer);
        }
        return Err(DelineationError::EmptyTier(tier));
    };
    let mut groups: BTreeMap<&str, BTreeSet<LocalityId>> = BTreeMap::new();
    for (loc, metro) in table {
        groups.entry(metro.as_str()).or_default().insert(loc.clone());
    }
    let singletons = gazetteer
        .localities()
        .iter()
        .filter(|l| !table.contains_key(&l.id))
        .map(|l| l.id.clone())
        .collect();
    let metros = groups
        .into_iter()
        .map(|(id, members)| MetroArea {
            id: id.to_string(),
            members,
            strategy: Strategy::Lookup,
            params: params.clone(),
        })
        .collect();
    Partition::new(metros, singletons, Strategy::Lookup, params, gazetteer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOptions {
    pub threshold_km: f64,
    pub core_population: Option<u64>,
    /// Join pairs at exactly the threshold (`<=`), the default.
    pub inclusive: bool,
}

impl DistanceOptions {
    pub fn new(threshold_km: f64) -> Self {
        DistanceOptions {
            threshold_km,
            core_population: None,
            inclusive: true,
        }
    }

    pub fn with_core_population(mut self, p: u64) -> Self {
        self.core_population = Some(p);
        self
    }

    fn joins(&self, d: f64) -> bool {
        if self.inclusive {
            d <= self.threshold_km
        } else {
            d < self.threshold_km
        }
    }
}

/// Pairs of gazetteer indices within the distance threshold, `i < j`.
pub fn close_pairs(gazetteer: &Gazetteer, opts: &DistanceOptions) -> Vec<(usize, usize)> {
    let locs = gazetteer.localities();
    let mut by_lat: Vec<usize> = (0..locs.len()).collect();
    by_lat.sort_by(|&a, &b| locs[a].lat.total_cmp(&locs[b].lat).then(a.cmp(&b)));
    // great-circle distance is at least the meridian arc between the latitudes
    let lat_window = opts.threshold_km / (EARTH_MEAN_RADIUS_KM.to_radians()) + 1e-9;
    let mut pairs: Vec<(usize, usize)> = (0..by_lat.len())
        .into_par_iter()
        .flat_map_iter(|pos| {
            let i = by_lat[pos];
            by_lat[pos + 1..]
                .iter()
                .take_while(move |&&j| locs[j].lat - locs[i].lat <= lat_window)
                .filter(move |&&j| opts.joins(distance_km(&locs[i], &locs[j])))
                .map(move |&j| (i.min(j), i.max(j)))
        })
        .collect();
    pairs.par_sort_unstable();
    pairs
}

/// Single-linkage agglomeration: metros are the connected components of the
/// graph joining localities within `threshold_km` of each other.
pub fn delineate_distance(gazetteer: &Gazetteer, opts: DistanceOptions) -> Result<Partition, DelineationError> {
    if !(opts.threshold_km.is_finite() && opts.threshold_km > 0.0) {
        return Err(DelineationError::BadThreshold(opts.threshold_km));
    }
    let locs = gazetteer.localities();
    if opts.core_population.is_some() {
        if let Some(l) = locs.iter().find(|l| l.population.is_none()) {
            return Err(DelineationError::MissingPopulation(l.id.clone()));
        }
    }
    let mut uf = UnionFind::new(locs.len());
    for (i, j) in close_pairs(gazetteer, &opts) {
        uf.union(i, j);
    }
    let op = if opts.inclusive { "" } else { "<" };
    let params = match opts.core_population {
        Some(core) => format!("D{op}={}km;core_population={core}", fmt_num(opts.threshold_km)),
        None => format!("D{op}={}km", fmt_num(opts.threshold_km)),
    };
    let mut metros = Vec::new();
    for comp in uf.components() {
        let qualifies = match opts.core_population {
            None => true,
            Some(core) => comp.iter().any(|&i| locs[i].population.unwrap_or(0) >= core),
        };
        if qualifies {
            let rep = representative(comp.iter().map(|&i| &locs[i]));
            metros.push(MetroArea {
                id: rep.id.to_string(),
                members: comp.iter().map(|&i| locs[i].id.clone()).collect(),
                strategy: Strategy::Distance,
                params: params.clone(),
            });
        } else {
            for &i in &comp {
                metros.push(MetroArea {
                    id: locs[i].id.to_string(),
                    members: BTreeSet::from([locs[i].id.clone()]),
                    strategy: Strategy::Distance,
                    params: format!("{params};below core"),
                });
            }
        }
    }
    Partition::new(metros, BTreeSet::new(), Strategy::Distance, params, gazetteer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelTimeOptions {
    pub threshold_minutes: f64,
    /// Merge only strictly below the threshold, the default.
    pub strict: bool,
}

impl TravelTimeOptions {
    pub fn new(threshold_minutes: f64) -> Self {
        TravelTimeOptions {
            threshold_minutes,
            strict: true,
        }
    }

    fn merges(&self, minutes: f64) -> bool {
        if self.strict {
            minutes < self.threshold_minutes
        } else {
            minutes <= self.threshold_minutes
        }
    }
}

/// An edge ignored because an endpoint is not a metro representative.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedEdge {
    pub edge: TravelTimeEdge,
    pub reason: String,
}

/// Locality standing in for a metro: the metro id when it names a member,
/// otherwise the most populous member.
pub fn metro_representative<'a>(metro: &MetroArea, gazetteer: &'a Gazetteer) -> &'a Locality {
    if metro.members.contains(metro.id.as_str()) {
        if let Some(l) = gazetteer.get(&metro.id) {
            return l;
        }
    }
    representative(metro.members.iter().filter_map(|m| gazetteer.get(m.as_str())))
}

/// Merges base metros whose representatives are joined by a fast edge;
/// merging is transitive. Returns the merged partition and skipped edges.
pub fn delineate_travel_time(
    base: &Partition,
    gazetteer: &Gazetteer,
    edges: &[TravelTimeEdge],
    opts: TravelTimeOptions,
) -> Result<(Partition, Vec<SkippedEdge>), DelineationError> {
    if !(opts.threshold_minutes.is_finite() && opts.threshold_minutes > 0.0) {
        return Err(DelineationError::BadThreshold(opts.threshold_minutes));
    }
    if base.gazetteer_fingerprint() != gazetteer.fingerprint() {
        return Err(DelineationError::GazetteerMismatch);
    }
    let n_units = base.unit_ids().len();
    let mut rep_unit: HashMap<&str, usize> = HashMap::with_capacity(n_units);
    for (u, m) in base.metros().iter().enumerate() {
        rep_unit.insert(metro_representative(m, gazetteer).id.as_str(), u);
    }
    for s in base.singletons() {
        rep_unit.insert(s.as_str(), base.unit_of(s.as_str()).expect("indexed singleton"));
    }

    let mut uf = UnionFind::new(n_units);
    let mut skipped = Vec::new();
    for e in edges {
        let (ua, ub) = (rep_unit.get(e.a.as_str()), rep_unit.get(e.b.as_str()));
        match (ua, ub) {
            (Some(&ua), Some(&ub)) => {
                if ua != ub && opts.merges(e.minutes) {
                    uf.union(ua, ub);
                }
            }
            _ => {
                let missing = if ua.is_none() { &e.a } else { &e.b };
                skipped.push(SkippedEdge {
                    edge: e.clone(),
                    reason: format!("dangling edge: '{missing}' is not a metro representative"),
                });
            }
        }
    }

    let op = if opts.strict { "<" } else { "<=" };
    let params = format!("T{op}{}min;base={}", fmt_num(opts.threshold_minutes), base.describe());
    let size = |u: usize| base.metros().get(u).map_or(1, |m| m.members.len());
    let mut metros = Vec::new();
    let mut singletons = BTreeSet::new();
    for comp in uf.components() {
        if let [u] = comp[..] {
            match base.metros().get(u) {
                Some(m) => metros.push(m.clone()),
                None => {
                    singletons.insert(LocalityId::from(base.unit_ids()[u].as_str()));
                }
            }
            continue;
        }
        let lead = comp
            .iter()
            .copied()
            .min_by(|&a, &b| {
                size(b)
                    .cmp(&size(a))
                    .then_with(|| base.unit_ids()[a].cmp(&base.unit_ids()[b]))
            })
            .expect("non-empty component");
        let members = comp.iter().flat_map(|&u| base.unit_members(u)).collect();
        metros.push(MetroArea {
            id: base.unit_ids()[lead].clone(),
            members,
            strategy: Strategy::TravelTime,
            params: params.clone(),
        });
    }
    let partition = Partition::new(metros, singletons, Strategy::TravelTime, params, gazetteer)?;
    Ok((partition, skipped))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffRow {
    pub locality: LocalityId,
    /// Empty when the locality is in no metro.
    pub metro_p1: String,
    pub metro_p2: String,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffEvent {
    /// Several p1 groups end up in one p2 group.
    Merge { into: String, from: Vec<String> },
    /// One p1 group is spread over several p2 groups.
    Split { from: String, into: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionDiff {
    pub rows: Vec<DiffRow>,
    pub events: Vec<DiffEvent>,
    pub changed: usize,
}

impl PartitionDiff {
    pub fn changed_localities(&self) -> Vec<&LocalityId> {
        self.rows.iter().filter(|r| r.changed).map(|r| &r.locality).collect()
    }

    /// `locality_id,metro_id_p1,metro_id_p2,changed`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["locality_id", "metro_id_p1", "metro_id_p2", "changed"])?;
        for r in &self.rows {
            out.write_record([
                r.locality.as_str(),
                &r.metro_p1,
                &r.metro_p2,
                if r.changed { "true" } else { "false" },
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Compares two partitions of the same gazetteer.
///
/// Metro ids are not comparable across strategies, so groups are paired by a
/// greedy one-to-one maximum-overlap matching; a locality has changed when
/// its group under `p2` is not the partner of its group under `p1`.
pub fn compare_partitions(p1: &Partition, p2: &Partition) -> Result<PartitionDiff, DelineationError> {
    if p1.gazetteer_fingerprint() != p2.gazetteer_fingerprint() || p1.unit_of.len() != p2.unit_of.len() {
        return Err(DelineationError::GazetteerMismatch);
    }
    let mut localities: Vec<&LocalityId> = p1.unit_of.keys().collect();
    localities.sort();

    let mut overlap: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut assignment = Vec::with_capacity(localities.len());
    for l in &localities {
        let u1 = p1.unit_of(l.as_str()).expect("same gazetteer");
        let u2 = p2.unit_of(l.as_str()).ok_or(DelineationError::GazetteerMismatch)?;
        *overlap.entry((u1, u2)).or_default() += 1;
        assignment.push((u1, u2));
    }

    let mut candidates: Vec<(usize, usize, usize)> = overlap.iter().map(|(&(a, b), &n)| (n, a, b)).collect();
    candidates.sort_by(|x, y| {
        y.0.cmp(&x.0)
            .then_with(|| p1.unit_ids[x.1].cmp(&p1.unit_ids[y.1]))
            .then_with(|| p2.unit_ids[x.2].cmp(&p2.unit_ids[y.2]))
    });
    let mut partner_of_1: HashMap<usize, usize> = HashMap::new();
    let mut taken_2 = BTreeSet::new();
    for (_, a, b) in candidates {
        if partner_of_1.contains_key(&a) || taken_2.contains(&b) {
            continue;
        }
        partner_of_1.insert(a, b);
        taken_2.insert(b);
    }

    let metro_label = |p: &Partition, u: usize| {
        if p.is_metro_unit(u) {
            p.unit_ids[u].clone()
        } else {
            String::new()
        }
    };
    let rows: Vec<DiffRow> = localities
        .iter()
        .zip(&assignment)
        .map(|(l, &(u1, u2))| DiffRow {
            locality: (*l).clone(),
            metro_p1: metro_label(p1, u1),
            metro_p2: metro_label(p2, u2),
            changed: partner_of_1.get(&u1) != Some(&u2),
        })
        .collect();

    let mut into: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut from: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in overlap.keys() {
        into.entry(b).or_default().insert(a);
        from.entry(a).or_default().insert(b);
    }
    let mut events = Vec::new();
    for (b, sources) in &into {
        if sources.len() > 1 {
            let mut ids: Vec<String> = sources.iter().map(|&a| p1.unit_ids[a].clone()).collect();
            ids.sort();
            events.push(DiffEvent::Merge {
                into: p2.unit_ids[*b].clone(),
                from: ids,
            });
        }
    }
    for (a, targets) in &from {
        if targets.len() > 1 {
            let mut ids: Vec<String> = targets.iter().map(|&b| p2.unit_ids[b].clone()).collect();
            ids.sort();
            events.push(DiffEvent::Split {
                from: p1.unit_ids[*a].clone(),
                into: ids,
            });
        }
    }
    let changed = rows.iter().filter(|r| r.changed).count();
    Ok(PartitionDiff { rows, events, changed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::EARTH_MEAN_RADIUS_KM;

    /// Longitude offset (degrees, on the equator) for a given arc length.
    fn lon_for_km(km: f64) -> f64 {
        (km / EARTH_MEAN_RADIUS_KM).to_degrees()
    }

    fn line(spacing: &[f64]) -> Gazetteer {
        let mut lon = 0.0;
        let mut locs = vec![Locality::new("L0", "L0", "X", 0.0, 0.0).with_population(10)];
        for (i, s) in spacing.iter().enumerate() {
            lon += lon_for_km(*s);
            locs.push(
                Locality::new(&format!("L{}", i + 1), &format!("L{}", i + 1), "X", 0.0, lon)
                    .with_population(10 + i as u64 + 1),
            );
        }
        Gazetteer::new(locs).unwrap()
    }

    #[test]
    fn ten_km_apart_merge() {
        let p = delineate_distance(&line(&[10.0]), DistanceOptions::new(40.0)).unwrap();
        assert_eq!(p.metros().len(), 1);
        // most populous member names the metro
        assert_eq!(p.metros()[0].id, "L1");
    }

    #[test]
    fn forty_one_km_apart_stay_separate() {
        let p = delineate_distance(&line(&[41.0]), DistanceOptions::new(40.0)).unwrap();
        assert_eq!(p.metros().len(), 2);
    }

    #[test]
    fn chain_is_single_linkage() {
        let p = delineate_distance(&line(&[30.0, 30.0]), DistanceOptions::new(40.0)).unwrap();
        assert_eq!(p.metros().len(), 1);
        assert_eq!(p.metros()[0].members.len(), 3);
    }

    #[test]
    fn core_population_splits_small_components() {
        let g = line(&[10.0, 100.0, 10.0]);
        // components {L0,L1} pops 10,11 and {L2,L3} pops 12,13
        let p = delineate_distance(&g, DistanceOptions::new(40.0).with_core_population(13)).unwrap();
        assert_eq!(p.metros().len(), 3);
        assert_eq!(p.metro("L3").unwrap().members.len(), 2);
        assert!(p.metro("L0").unwrap().params.ends_with("below core"));

        let mut locs = g.localities().to_vec();
        locs[0].population = None;
        let g = Gazetteer::new(locs).unwrap();
        assert!(matches!(
            delineate_distance(&g, DistanceOptions::new(40.0).with_core_population(1)),
            Err(DelineationError::MissingPopulation(_))
        ));
    }

    #[test]
    fn population_tie_goes_to_smallest_id() {
        let g = Gazetteer::new(vec![
            Locality::new("b", "B", "X", 0.0, 0.0).with_population(5),
            Locality::new("a", "A", "X", 0.0, 0.01).with_population(5),
        ])
        .unwrap();
        let p = delineate_distance(&g, DistanceOptions::new(40.0)).unwrap();
        assert_eq!(p.metros()[0].id, "a");
    }

    fn lookup_fixture() -> (Gazetteer, MembershipTable) {
        let g = Gazetteer::new(
            ["a", "b", "c", "d"]
                .iter()
                .enumerate()
                .map(|(i, id)| Locality::new(id, id, "X", 0.0, i as f64))
                .collect(),
        )
        .unwrap();
        let mut t = MembershipTable::new();
        t.insert("a".into(), "M1", Tier::Msa).unwrap();
        t.insert("b".into(), "M2", Tier::Msa).unwrap();
        t.insert("a".into(), "C1", Tier::Csa).unwrap();
        t.insert("b".into(), "C1", Tier::Csa).unwrap();
        t.insert("c".into(), "C1", Tier::Csa).unwrap();
        (g, t)
    }

    #[test]
    fn lookup_tier_is_exact() {
        let (g, t) = lookup_fixture();
        let msa = delineate_lookup(&g, &t, Tier::Msa).unwrap();
        assert_eq!(msa.metros().len(), 2);
        assert_eq!(msa.singletons().len(), 2);
        let csa = delineate_lookup(&g, &t, Tier::Csa).unwrap();
        assert_eq!(csa.metros().len(), 1);
        assert_eq!(csa.metro_of("b").unwrap().id, "C1");
        assert_eq!(
            delineate_lookup(&g, &t, Tier::Custom),
            Err(DelineationError::EmptyTier(Tier::Custom))
        );
        let empty = delineate_lookup(&g, &MembershipTable::new(), Tier::Msa).unwrap();
        assert!(empty.metros().is_empty());
        assert_eq!(empty.singletons().len(), 4);
    }

    fn two_metros() -> (Gazetteer, Partition) {
        let g = Gazetteer::new(vec![
            Locality::new("edi", "Edinburgh", "UK", 55.95, -3.19).with_population(500),
            Locality::new("lei", "Leith", "UK", 55.97, -3.17).with_population(50),
            Locality::new("gla", "Glasgow", "UK", 55.86, -4.25).with_population(600),
            Locality::new("pai", "Paisley", "UK", 55.84, -4.42).with_population(70),
        ])
        .unwrap();
        let p = delineate_distance(&g, DistanceOptions::new(15.0)).unwrap();
        assert_eq!(p.metros().len(), 2);
        (g, p)
    }

    #[test]
    fn travel_time_merges_below_threshold() {
        let (g, base) = two_metros();
        let edges = [TravelTimeEdge::new("edi", "gla", 44.0)];
        let (p, skipped) = delineate_travel_time(&base, &g, &edges, TravelTimeOptions::new(45.0)).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(p.metros().len(), 1);
        // equal member counts: lexicographic tie-break
        assert_eq!(p.metros()[0].id, "edi");
        assert_eq!(p.metros()[0].members.len(), 4);
    }

    #[test]
    fn travel_time_threshold_is_strict() {
        let (g, base) = two_metros();
        let edges = [TravelTimeEdge::new("edi", "gla", 45.0)];
        let (p, _) = delineate_travel_time(&base, &g, &edges, TravelTimeOptions::new(45.0)).unwrap();
        assert_eq!(p.metros().len(), 2);
        let inclusive = TravelTimeOptions {
            strict: false,
            ..TravelTimeOptions::new(45.0)
        };
        let (p, _) = delineate_travel_time(&base, &g, &edges, inclusive).unwrap();
        assert_eq!(p.metros().len(), 1);
    }

    #[test]
    fn non_representative_edges_are_skipped() {
        let (g, base) = two_metros();
        let edges = [TravelTimeEdge::new("lei", "gla", 10.0)];
        let (p, skipped) = delineate_travel_time(&base, &g, &edges, TravelTimeOptions::new(45.0)).unwrap();
        assert_eq!(p.metros().len(), 2);
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].reason.contains("lei"));
    }

    #[test]
    fn partition_csv_round_trip() {
        let (g, t) = lookup_fixture();
        let p = delineate_lookup(&g, &t, Tier::Msa).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = Partition::from_reader(buf.as_slice(), &g).unwrap();
        assert_eq!(back.metros(), p.metros());
        assert_eq!(back.singletons(), p.singletons());
    }

    #[test]
    fn identical_partitions_have_no_diff() {
        let (g, t) = lookup_fixture();
        let p = delineate_lookup(&g, &t, Tier::Csa).unwrap();
        let d = compare_partitions(&p, &p).unwrap();
        assert_eq!(d.changed, 0);
        assert!(d.events.is_empty());
    }

    #[test]
    fn gazetteer_mismatch() {
        let (g, t) = lookup_fixture();
        let p = delineate_lookup(&g, &t, Tier::Csa).unwrap();
        let other = Partition::identity(&line(&[1.0]));
        assert_eq!(compare_partitions(&p, &other), Err(DelineationError::GazetteerMismatch));
    }
}
