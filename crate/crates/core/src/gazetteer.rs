//! Locality and institution registries, statistical-area memberships,
//! travel-time edges, name resolution and great-circle distance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{AffiliationEntry, Corpus, PublicationRecord, UnresolvedAffiliation};
use crate::text::{canonical_admin, canonical_country, normalize};

/// Mean Earth radius (IUGG), kilometres.
pub const EARTH_MEAN_RADIUS_KM: f64 = 6371.0088;

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(Arc::from(s))
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(Arc::from(s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque gazetteer locality identifier.
    LocalityId
);
string_id!(InstitutionId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettlementType {
    City,
    Town,
    Borough,
    Township,
    Village,
    Hamlet,
    CensusDesignatedPlace,
    District,
    Other,
}

impl SettlementType {
    pub fn as_str(&self) -> &'static str {
        match self {
            SettlementType::City => "city",
            SettlementType::Town => "town",
            SettlementType::Borough => "borough",
            SettlementType::Township => "township",
            SettlementType::Village => "village",
            SettlementType::Hamlet => "hamlet",
            SettlementType::CensusDesignatedPlace => "census_designated_place",
            SettlementType::District => "district",
            SettlementType::Other => "other",
        }
    }
}

impl FromStr for SettlementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match normalize(s).replace([' ', '-'], "_").as_str() {
            "city" => SettlementType::City,
            "town" => SettlementType::Town,
            "borough" => SettlementType::Borough,
            "township" => SettlementType::Township,
            "village" => SettlementType::Village,
            "hamlet" => SettlementType::Hamlet,
            "census_designated_place" | "cdp" => SettlementType::CensusDesignatedPlace,
            "district" => SettlementType::District,
            "other" | "" => SettlementType::Other,
            other => return Err(format!("unknown settlement type '{other}'")),
        })
    }
}

impl fmt::Display for SettlementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Locality {
    pub id: LocalityId,
    pub name: String,
    pub alt_names: BTreeSet<String>,
    pub admin_name: Option<String>,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
    pub population: Option<u64>,
    pub settlement_type: SettlementType,
}

impl Locality {
    /// Minimal locality, mostly for fixtures.
    pub fn new(id: &str, name: &str, country: &str, lat: f64, lon: f64) -> Self {
        Locality {
            id: LocalityId::from(id),
            name: name.to_string(),
            alt_names: BTreeSet::new(),
            admin_name: None,
            country: country.to_string(),
            lat,
            lon,
            population: None,
            settlement_type: SettlementType::City,
        }
    }

    pub fn with_admin(mut self, admin: &str) -> Self {
        self.admin_name = Some(admin.to_string());
        self
    }

    pub fn with_population(mut self, population: u64) -> Self {
        self.population = Some(population);
        self
    }

    pub fn with_type(mut self, t: SettlementType) -> Self {
        self.settlement_type = t;
        self
    }

    pub fn with_alt_name(mut self, alt: &str) -> Self {
        self.alt_names.insert(alt.to_string());
        self
    }

    fn key(&self) -> NameKey {
        NameKey::new(&self.name, self.admin_name.as_deref(), &self.country)
    }
}

/// Great-circle distance between two points given in degrees.
pub fn haversine_km<T: Float>(lat1: T, lon1: T, lat2: T, lon2: T) -> T {
    let radius = T::from(EARTH_MEAN_RADIUS_KM).expect("radius representable");
    let two = T::one() + T::one();
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let h = (dphi / two).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / two).sin().powi(2);
    two * radius * h.sqrt().min(T::one()).asin()
}

pub fn distance_km(a: &Locality, b: &Locality) -> f64 {
    if a.lat == b.lat && a.lon == b.lon {
        return 0.0;
    }
    haversine_km(a.lat, a.lon, b.lat, b.lon)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NameKey {
    name: String,
    admin: Option<String>,
    country: String,
}

impl NameKey {
    fn new(name: &str, admin: Option<&str>, country: &str) -> Self {
        NameKey {
            name: normalize(name),
            admin: admin
                .filter(|a| !a.trim().is_empty())
                .map(|a| canonical_admin(a, country)),
            country: canonical_country(country),
        }
    }

    fn without_admin(&self) -> (String, String) {
        (self.name.clone(), self.country.clone())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GazetteerError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("row {row}: {message}")]
    Schema { row: u64, message: String },
    #[error("row {row}: unknown locality id '{id}'")]
    DanglingReference { row: u64, id: String },
    #[error("duplicate key {key} at rows {first} and {second}")]
    DuplicateKey { key: String, first: u64, second: u64 },
}

fn row_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn schema(row: u64, message: impl Into<String>) -> GazetteerError {
    GazetteerError::Schema {
        row,
        message: message.into(),
    }
}

fn csv_rows<R: Read>(reader: R, expected: &[&str]) -> Result<Vec<csv::StringRecord>, GazetteerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(schema(
            1,
            format!("expected header {}, got {}", expected.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(schema(
                row_of(&rec),
                format!("expected {} fields, got {}", expected.len(), rec.len()),
            ));
        }
        rows.push(rec);
    }
    Ok(rows)
}

fn open(path: &Path) -> Result<std::fs::File, GazetteerError> {
    std::fs::File::open(path).map_err(|e| GazetteerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unresolved {
    MissingFields,
    NotFound,
    AmbiguousName(Vec<LocalityId>),
}

impl Unresolved {
    pub fn code(&self) -> &'static str {
        match self {
            Unresolved::MissingFields => "missing_fields",
            Unresolved::NotFound => "not_found",
            Unresolved::AmbiguousName(_) => "ambiguous_name",
        }
    }
}

impl fmt::Display for Unresolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unresolved::AmbiguousName(c) => {
                let ids: Vec<&str> = c.iter().map(LocalityId::as_str).collect();
                write!(f, "ambiguous_name: {}", ids.join("|"))
            }
            other => f.write_str(other.code()),
        }
    }
}

/// The locality registry. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    localities: Vec<Locality>,
    by_id: HashMap<LocalityId, usize>,
    by_key: HashMap<NameKey, usize>,
    by_name_country: HashMap<(String, String), Vec<usize>>,
    alt_by_key: HashMap<NameKey, Vec<usize>>,
    alt_by_name_country: HashMap<(String, String), Vec<usize>>,
    aliases: HashMap<(String, String), usize>,
}

impl Gazetteer {
    /// Validates and indexes localities. `rows` gives the source row of each
    /// locality for error messages; when `None`, positions are 1-based.
    fn build(mut localities: Vec<Locality>, rows: Option<Vec<u64>>) -> Result<Self, GazetteerError> {
        let rows = rows.unwrap_or_else(|| (1..=localities.len() as u64).collect());
        let mut order: Vec<usize> = (0..localities.len()).collect();
        order.sort_by(|&a, &b| localities[a].id.cmp(&localities[b].id));

        for (l, &row) in localities.iter().zip(&rows) {
            if !(-90.0..=90.0).contains(&l.lat) || !l.lat.is_finite() {
                return Err(schema(row, format!("latitude {} out of [-90, 90]", l.lat)));
            }
            if !(l.lon > -180.0 && l.lon <= 180.0) {
                return Err(schema(row, format!("longitude {} out of (-180, 180]", l.lon)));
            }
            if l.name.trim().is_empty() || l.id.as_str().trim().is_empty() {
                return Err(schema(row, "empty id or name"));
            }
        }

        let mut seen_id: HashMap<&LocalityId, u64> = HashMap::new();
        let mut seen_key: HashMap<NameKey, u64> = HashMap::new();
        for (l, &row) in localities.iter().zip(&rows) {
            if let Some(&first) = seen_id.get(&l.id) {
                return Err(GazetteerError::DuplicateKey {
                    key: format!("id '{}'", l.id),
                    first,
                    second: row,
                });
            }
            seen_id.insert(&l.id, row);
            if let Some(first) = seen_key.insert(l.key(), row) {
                return Err(GazetteerError::DuplicateKey {
                    key: format!("({}, {}, {})", l.name, l.admin_name.as_deref().unwrap_or(""), l.country),
                    first,
                    second: row,
                });
            }
        }

        let mut sorted = Vec::with_capacity(localities.len());
        let mut taken: Vec<Option<Locality>> = localities.drain(..).map(Some).collect();
        for i in order {
            sorted.push(taken[i].take().expect("each index once"));
        }

        let mut g = Gazetteer {
            localities: sorted,
            ..Default::default()
        };
        for (i, l) in g.localities.iter().enumerate() {
            g.by_id.insert(l.id.clone(), i);
            let key = l.key();
            g.by_name_country.entry(key.without_admin()).or_default().push(i);
            g.by_key.insert(key, i);
            for alt in &l.alt_names {
                let k = NameKey::new(alt, l.admin_name.as_deref(), &l.country);
                g.alt_by_name_country.entry(k.without_admin()).or_default().push(i);
                g.alt_by_key.entry(k).or_default().push(i);
            }
        }
        for v in g.alt_by_name_country.values_mut().chain(g.alt_by_key.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Ok(g)
    }

    pub fn new(localities: Vec<Locality>) -> Result<Self, GazetteerError> {
        Self::build(localities, None)
    }

    pub fn len(&self) -> usize {
        self.localities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.localities.is_empty()
    }

    /// Localities in ascending id order.
    pub fn localities(&self) -> &[Locality] {
        &self.localities
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Locality> {
        self.index_of(id).map(|i| &self.localities[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// SHA-256 over the sorted locality ids.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.localities {
            h.update(l.id.as_str().as_bytes());
            h.update([0x1f]);
        }
        hex::encode(h.finalize())
    }

    /// Adds curated alias equivalences: `(alias, country, locality_id)`.
    pub fn with_aliases<I, S>(mut self, aliases: I) -> Result<Self, GazetteerError>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        for (row, (alias, country, id)) in aliases.into_iter().enumerate() {
            let row = row as u64 + 1;
            let idx = self
                .index_of(id.as_ref())
                .ok_or_else(|| GazetteerError::DanglingReference {
                    row,
                    id: id.as_ref().to_string(),
                })?;
            self.aliases
                .insert((normalize(alias.as_ref()), canonical_country(country.as_ref())), idx);
        }
        Ok(self)
    }

    /// Reads the gazetteer CSV:
    /// `id,name,alt_names,admin,country,lat,lon,population,settlement_type`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, GazetteerError> {
        let rows = csv_rows(
            reader,
            &[
                "id",
                "name",
                "alt_names",
                "admin",
                "country",
                "lat",
                "lon",
                "population",
                "settlement_type",
            ],
        )?;
        let mut localities = Vec::with_capacity(rows.len());
        let mut positions = Vec::with_capacity(rows.len());
        for rec in &rows {
            let row = row_of(rec);
            let float = |i: usize, what: &str| {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| schema(row, format!("bad {what} '{}': {e}", &rec[i])))
            };
            let population = match rec[7].trim() {
                "" => None,
                p => Some(
                    p.parse::<u64>()
                        .map_err(|e| schema(row, format!("bad population '{p}': {e}")))?,
                ),
            };
            localities.push(Locality {
                id: LocalityId::from(rec[0].trim()),
                name: rec[1].trim().to_string(),
                alt_names: rec[2]
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                admin_name: Some(rec[3].trim()).filter(|a| !a.is_empty()).map(String::from),
                country: rec[4].trim().to_string(),
                lat: float(5, "lat")?,
                lon: float(6, "lon")?,
                population,
                settlement_type: rec[8].parse().map_err(|e: String| schema(row, e))?,
            });
            positions.push(row);
        }
        Self::build(localities, Some(positions))
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        Self::from_reader(open(path)?)
    }

    /// Reads an alias CSV `alias,country,locality_id` into this registry.
    pub fn load_aliases<R: Read>(self, reader: R) -> Result<Self, GazetteerError> {
        let rows = csv_rows(reader, &["alias", "country", "locality_id"])?;
        let mut out = self;
        for rec in &rows {
            let row = row_of(rec);
            let triple = [(rec[0].trim(), rec[1].trim(), rec[2].trim())];
            out = out.with_aliases(triple).map_err(|e| match e {
                GazetteerError::DanglingReference { id, .. } => GazetteerError::DanglingReference { row, id },
                other => other,
            })?;
        }
        Ok(out)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "id",
            "name",
            "alt_names",
            "admin",
            "country",
            "lat",
            "lon",
            "population",
            "settlement_type",
        ])?;
        for l in &self.localities {
            let alts: Vec<&str> = l.alt_names.iter().map(String::as_str).collect();
            out.write_record([
                l.id.as_str(),
                &l.name,
                &alts.join("|"),
                l.admin_name.as_deref().unwrap_or(""),
                &l.country,
                &l.lat.to_string(),
                &l.lon.to_string(),
                &l.population.map(|p| p.to_string()).unwrap_or_default(),
                l.settlement_type.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    fn pick(&self, candidates: &[usize]) -> Result<usize, Unresolved> {
        match candidates {
            [one] => Ok(*one),
            many => Err(Unresolved::AmbiguousName(
                many.iter().map(|&i| self.localities[i].id.clone()).collect(),
            )),
        }
    }

    /// Resolves a parsed affiliation to a locality index. Exact matching only:
    /// curated alias, then (name, admin, country), then (name, country) when
    /// unique, then the same two steps over alternate names.
    pub fn resolve_index(&self, entry: &AffiliationEntry) -> Result<usize, Unresolved> {
        if entry.locality_name.trim().is_empty() || entry.country_name.trim().is_empty() {
            return Err(Unresolved::MissingFields);
        }
        let key = NameKey::new(&entry.locality_name, entry.admin_name.as_deref(), &entry.country_name);
        if let Some(&i) = self.aliases.get(&key.without_admin()) {
            return Ok(i);
        }

        let mut ambiguous: Option<Unresolved> = None;
        if key.admin.is_some() {
            if let Some(&i) = self.by_key.get(&key) {
                return Ok(i);
            }
        }
        if let Some(c) = self.by_name_country.get(&key.without_admin()) {
            match self.pick(c) {
                Ok(i) => return Ok(i),
                Err(e) => ambiguous = Some(e),
            }
        }
        if key.admin.is_some() {
            if let Some(c) = self.alt_by_key.get(&key) {
                match self.pick(c) {
                    Ok(i) => return Ok(i),
                    Err(e) => {
                        ambiguous.get_or_insert(e);
                    }
                }
            }
        }
        if let Some(c) = self.alt_by_name_country.get(&key.without_admin()) {
            match self.pick(c) {
                Ok(i) => return Ok(i),
                Err(e) => {
                    ambiguous.get_or_insert(e);
                }
            }
        }
        Err(ambiguous.unwrap_or(Unresolved::NotFound))
    }

    pub fn resolve(&self, entry: &AffiliationEntry) -> Result<LocalityId, Unresolved> {
        self.resolve_index(entry).map(|i| self.localities[i].id.clone())
    }

    /// Resolves every parsed affiliation of the corpus. Entries that already
    /// carry a locality id present in this registry keep it.
    pub fn resolve_corpus(&self, corpus: &Corpus) -> Corpus {
        self.resolve_owned(corpus.clone())
    }

    /// As [`Gazetteer::resolve_corpus`], reusing the records' storage.
    pub fn resolve_owned(&self, corpus: Corpus) -> Corpus {
        let resolved: Vec<(PublicationRecord, Vec<UnresolvedAffiliation>)> = corpus
            .records
            .into_par_iter()
            .map(|mut rec| {
                let mut failures = Vec::new();
                for (i, a) in rec.affiliations.iter_mut().enumerate() {
                    if !a.is_parsed() {
                        failures.push(UnresolvedAffiliation {
                            record_id: rec.id.clone(),
                            index: i,
                            reason: crate::record::parse_affiliation(&a.raw)
                                .err()
                                .map_or_else(|| "parse_failure".to_string(), |e| e.to_string()),
                        });
                        continue;
                    }
                    if let Some(existing) = &a.resolved_locality {
                        if let Some(idx) = self.index_of(existing.as_str()) {
                            a.resolved_locality = Some(self.localities[idx].id.clone());
                            continue;
                        }
                    }
                    match self.resolve(a) {
                        Ok(id) => a.resolved_locality = Some(id),
                        Err(e) => {
                            a.resolved_locality = None;
                            failures.push(UnresolvedAffiliation {
                                record_id: rec.id.clone(),
                                index: i,
                                reason: e.to_string(),
                            });
                        }
                    }
                }
                (rec, failures)
            })
            .collect();
        let mut records = Vec::with_capacity(resolved.len());
        let mut unresolved = Vec::new();
        for (r, mut f) in resolved {
            records.push(r);
            unresolved.append(&mut f);
        }
        Corpus::with_records(records, unresolved, corpus.quarantine)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Institution {
    pub id: InstitutionId,
    pub name: String,
    pub alt_names: BTreeSet<String>,
    pub hq_locality: LocalityId,
}

impl Institution {
    pub fn new(id: &str, name: &str, hq: &str) -> Self {
        Institution {
            id: InstitutionId::from(id),
            name: name.to_string(),
            alt_names: BTreeSet::new(),
            hq_locality: LocalityId::from(hq),
        }
    }

    pub fn with_alt_name(mut self, alt: &str) -> Self {
        self.alt_names.insert(alt.to_string());
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct InstitutionRegistry {
    institutions: Vec<Institution>,
    by_id: HashMap<InstitutionId, usize>,
    by_name: HashMap<String, Vec<usize>>,
}

impl InstitutionRegistry {
    fn build(
        mut institutions: Vec<Institution>,
        rows: Vec<u64>,
        gazetteer: &Gazetteer,
    ) -> Result<Self, GazetteerError> {
        let mut seen: HashMap<InstitutionId, u64> = HashMap::new();
        for (inst, &row) in institutions.iter().zip(&rows) {
            if !gazetteer.contains(inst.hq_locality.as_str()) {
                return Err(GazetteerError::DanglingReference {
                    row,
                    id: inst.hq_locality.to_string(),
                });
            }
            if let Some(first) = seen.insert(inst.id.clone(), row) {
                return Err(GazetteerError::DuplicateKey {
                    key: format!("institution id '{}'", inst.id),
                    first,
                    second: row,
                });
            }
        }
        institutions.sort_by(|a, b| a.id.cmp(&b.id));
        let mut reg = InstitutionRegistry {
            institutions,
            ..Default::default()
        };
        for (i, inst) in reg.institutions.iter().enumerate() {
            reg.by_id.insert(inst.id.clone(), i);
            for name in std::iter::once(&inst.name).chain(&inst.alt_names) {
                let v = reg.by_name.entry(normalize(name)).or_default();
                if !v.contains(&i) {
                    v.push(i);
                }
            }
        }
        Ok(reg)
    }

    pub fn new(institutions: Vec<Institution>, gazetteer: &Gazetteer) -> Result<Self, GazetteerError> {
        let rows = (1..=institutions.len() as u64).collect();
        Self::build(institutions, rows, gazetteer)
    }

    /// Reads `id,name,alt_names,hq_locality_id`.
    pub fn from_reader<R: Read>(reader: R, gazetteer: &Gazetteer) -> Result<Self, GazetteerError> {
        let rows = csv_rows(reader, &["id", "name", "alt_names", "hq_locality_id"])?;
        let mut insts = Vec::with_capacity(rows.len());
        let mut positions = Vec::with_capacity(rows.len());
        for rec in &rows {
            if rec[0].trim().is_empty() || rec[1].trim().is_empty() {
                return Err(schema(row_of(rec), "empty id or name"));
            }
            insts.push(Institution {
                id: InstitutionId::from(rec[0].trim()),
                name: rec[1].trim().to_string(),
                alt_names: rec[2]
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                hq_locality: LocalityId::from(rec[3].trim()),
            });
            positions.push(row_of(rec));
        }
        Self::build(insts, positions, gazetteer)
    }

    pub fn load(path: &Path, gazetteer: &Gazetteer) -> Result<Self, GazetteerError> {
        Self::from_reader(open(path)?, gazetteer)
    }

    pub fn institutions(&self) -> &[Institution] {
        &self.institutions
    }

    pub fn len(&self) -> usize {
        self.institutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.institutions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Institution> {
        self.by_id.get(id).map(|&i| &self.institutions[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Finds the institution an affiliation names. The institution segment
    /// and then the intermediate segments are tried left to right; when a
    /// name is shared, the institution headquartered at the entry's resolved
    /// locality wins, else the smallest id.
    pub fn match_entry(&self, entry: &AffiliationEntry) -> Option<usize> {
        let segments = std::iter::once(entry.institution.as_str()).chain(entry.intermediate_segments());
        for seg in segments {
            if let Some(c) = self.by_name.get(&normalize(seg)) {
                let at_site = c
                    .iter()
                    .copied()
                    .find(|&i| entry.resolved_locality.as_ref() == Some(&self.institutions[i].hq_locality));
                return at_site.or_else(|| c.iter().copied().min());
            }
        }
        None
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "name", "alt_names", "hq_locality_id"])?;
        for i in &self.institutions {
            let alts: Vec<&str> = i.alt_names.iter().map(String::as_str).collect();
            out.write_record([i.id.as_str(), &i.name, &alts.join("|"), i.hq_locality.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Msa,
    Csa,
    Custom,
}

impl Tier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Msa => "MSA",
            Tier::Csa => "CSA",
            Tier::Custom => "custom",
        }
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "msa" => Ok(Tier::Msa),
            "csa" => Ok(Tier::Csa),
            "custom" => Ok(Tier::Custom),
            other => Err(format!("unknown tier '{other}'")),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Statistical-area membership: per tier, locality id to metro id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MembershipTable {
    entries: BTreeMap<Tier, BTreeMap<LocalityId, String>>,
}

impl MembershipTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one membership; a locality may belong to one metro per tier.
    pub fn insert(&mut self, locality: LocalityId, metro: &str, tier: Tier) -> Result<(), String> {
        let tier_map = self.entries.entry(tier).or_default();
        if let Some(prev) = tier_map.get(&locality) {
            return Err(format!("locality '{locality}' already in {tier} metro '{prev}'"));
        }
        tier_map.insert(locality, metro.to_string());
        Ok(())
    }

    pub fn tier(&self, tier: Tier) -> Option<&BTreeMap<LocalityId, String>> {
        self.entries.get(&tier).filter(|m| !m.is_empty())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads `locality_id,metro_id,tier`.
    pub fn from_reader<R: Read>(reader: R, gazetteer: &Gazetteer) -> Result<Self, GazetteerError> {
        let rows = csv_rows(reader, &["locality_id", "metro_id", "tier"])?;
        let mut table = MembershipTable::new();
        let mut first_row: HashMap<(Tier, String), u64> = HashMap::new();
        for rec in &rows {
            let row = row_of(rec);
            let loc = rec[0].trim();
            if !gazetteer.contains(loc) {
                return Err(GazetteerError::DanglingReference {
                    row,
                    id: loc.to_string(),
                });
            }
            let metro = rec[1].trim();
            if metro.is_empty() {
                return Err(schema(row, "empty metro_id"));
            }
            let tier: Tier = rec[2].parse().map_err(|e: String| schema(row, e))?;
            if let Some(&first) = first_row.get(&(tier, loc.to_string())) {
                return Err(GazetteerError::DuplicateKey {
                    key: format!("({loc}, {tier})"),
                    first,
                    second: row,
                });
            }
            first_row.insert((tier, loc.to_string()), row);
            table
                .insert(LocalityId::from(loc), metro, tier)
                .map_err(|e| schema(row, e))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path, gazetteer: &Gazetteer) -> Result<Self, GazetteerError> {
        Self::from_reader(open(path)?, gazetteer)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["locality_id", "metro_id", "tier"])?;
        for (tier, m) in &self.entries {
            for (loc, metro) in m {
                out.write_record([loc.as_str(), metro, tier.as_str()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeEdge {
    pub a: LocalityId,
    pub b: LocalityId,
    pub minutes: f64,
}

impl TravelTimeEdge {
    pub fn new(a: &str, b: &str, minutes: f64) -> Self {
        TravelTimeEdge {
            a: LocalityId::from(a),
            b: LocalityId::from(b),
            minutes,
        }
    }
}

/// Reads `locality_a,locality_b,minutes`.
pub fn read_travel_times<R: Read>(reader: R, gazetteer: &Gazetteer) -> Result<Vec<TravelTimeEdge>, GazetteerError> {
    let rows = csv_rows(reader, &["locality_a", "locality_b", "minutes"])?;
    let mut edges = Vec::with_capacity(rows.len());
    for rec in &rows {
        let row = row_of(rec);
        let (a, b) = (rec[0].trim(), rec[1].trim());
        for id in [a, b] {
            if !gazetteer.contains(id) {
                return Err(GazetteerError::DanglingReference {
                    row,
                    id: id.to_string(),
                });
            }
        }
        if a == b {
            return Err(schema(row, "edge joins a locality to itself"));
        }
        let minutes: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|e| schema(row, format!("bad minutes '{}': {e}", &rec[2])))?;
        if !(minutes.is_finite() && minutes > 0.0) {
            return Err(schema(row, format!("minutes must be positive, got {minutes}")));
        }
        edges.push(TravelTimeEdge::new(a, b, minutes));
    }
    Ok(edges)
}

pub fn load_travel_times(path: &Path, gazetteer: &Gazetteer) -> Result<Vec<TravelTimeEdge>, GazetteerError> {
    read_travel_times(open(path)?, gazetteer)
}

pub fn write_travel_times<W: std::io::Write>(edges: &[TravelTimeEdge], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["locality_a", "locality_b", "minutes"])?;
    for e in edges {
        out.write_record([e.a.as_str(), e.b.as_str(), &e.minutes.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
