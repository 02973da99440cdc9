//! Publication records, corpus ingestion and affiliation-string parsing.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gazetteer::LocalityId;
use crate::text;

/// One address as printed on a paper.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AffiliationEntry {
    pub raw: String,
    pub institution: String,
    pub locality_name: String,
    pub admin_name: Option<String>,
    pub country_name: String,
    pub resolved_locality: Option<LocalityId>,
}

impl AffiliationEntry {
    /// Entry built from already-separated fields; `raw` is synthesized.
    pub fn structured(institution: &str, locality: &str, admin: Option<&str>, country: &str) -> Self {
        let raw = [Some(institution), Some(locality), admin, Some(country)]
            .into_iter()
            .flatten()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(", ");
        AffiliationEntry {
            raw,
            institution: institution.trim().to_string(),
            locality_name: locality.trim().to_string(),
            admin_name: admin.map(str::trim).filter(|a| !a.is_empty()).map(String::from),
            country_name: country.trim().to_string(),
            resolved_locality: None,
        }
    }

    fn unparsed(raw: &str) -> Self {
        AffiliationEntry {
            raw: raw.to_string(),
            institution: String::new(),
            locality_name: String::new(),
            admin_name: None,
            country_name: String::new(),
            resolved_locality: None,
        }
    }

    /// Whether positional parsing produced a country.
    pub fn is_parsed(&self) -> bool {
        !self.country_name.is_empty()
    }

    /// Comma segments of `raw` that sit between the institution and the locality.
    pub fn intermediate_segments(&self) -> Vec<&str> {
        let segs = split_segments(&self.raw);
        if segs.len() < 3 {
            return Vec::new();
        }
        let loc = segs
            .iter()
            .rposition(|s| strip_postal(s) == self.locality_name)
            .unwrap_or(segs.len() - 1);
        segs[1..loc.max(1)].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicationRecord {
    pub id: String,
    pub year: i32,
    pub affiliations: Vec<AffiliationEntry>,
}

/// An affiliation that could not be parsed or resolved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnresolvedAffiliation {
    pub record_id: String,
    pub index: usize,
    pub reason: String,
}

/// An input line that did not yield a record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuarantineEntry {
    pub source: String,
    pub line_no: usize,
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseFailure {
    Empty,
    TooFewSegments,
    EmptyCountry,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseFailure::Empty => "parse_failure: empty affiliation",
            ParseFailure::TooFewSegments => "parse_failure: fewer than 2 segments",
            ParseFailure::EmptyCountry => "parse_failure: empty country segment",
        })
    }
}

impl std::error::Error for ParseFailure {}

/// Splits on commas outside of brackets, trimming and dropping empty segments.
fn split_segments(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in raw.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = (depth - 1).max(0),
            ',' if depth == 0 => {
                out.push(raw[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(raw[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

fn is_postal_token(tok: &str) -> bool {
    if !tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return false;
    }
    let mut run = 0;
    for c in tok.chars() {
        if c.is_ascii_digit() {
            run += 1;
            if run >= 4 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Drops one leading and one trailing postal-code token.
fn strip_postal(segment: &str) -> &str {
    let mut s = segment.trim();
    if let Some((first, rest)) = s.split_once(char::is_whitespace) {
        if is_postal_token(first) {
            s = rest.trim_start();
        }
    }
    if let Some((rest, last)) = s.rsplit_once(char::is_whitespace) {
        if is_postal_token(last) {
            s = rest.trim_end();
        }
    }
    if is_postal_token(s) {
        return "";
    }
    s
}

/// Positional parse of a single affiliation string.
///
/// The last segment is the country; walking left past postal-only segments,
/// the next segment is the locality unless it is a known admin region of that
/// country, in which case the segment left of it is the locality.
pub fn parse_affiliation(raw: &str) -> Result<AffiliationEntry, ParseFailure> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(ParseFailure::Empty);
    }
    let segs = split_segments(raw);
    if segs.len() < 2 {
        return Err(ParseFailure::TooFewSegments);
    }
    let country = strip_postal(segs[segs.len() - 1]);
    if country.is_empty() {
        return Err(ParseFailure::EmptyCountry);
    }

    let mut idx = segs.len() - 2;
    let mut candidate = strip_postal(segs[idx]);
    while candidate.is_empty() && idx > 0 {
        idx -= 1;
        candidate = strip_postal(segs[idx]);
    }

    let mut admin = None;
    let mut locality = candidate;
    if idx > 0 && text::known_admin(candidate, country).is_some() {
        admin = Some(candidate.to_string());
        idx -= 1;
        locality = strip_postal(segs[idx]);
    }

    Ok(AffiliationEntry {
        raw: raw.to_string(),
        institution: segs[0].to_string(),
        locality_name: locality.to_string(),
        admin_name: admin,
        country_name: country.to_string(),
        resolved_locality: None,
    })
}

/// Splits a raw affiliation field into its semicolon-separated addresses.
pub fn split_affiliations(field: &str) -> impl Iterator<Item = &str> {
    field.split(';').map(str::trim).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(InputFormat::Jsonl),
            "csv" => Some(InputFormat::Csv),
            _ => None,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!("unknown input format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Location {
    pub source: Arc<str>,
    pub line_no: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.line_no)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate record id '{id}' at {first} and {second}")]
    DuplicateId {
        id: String,
        first: Location,
        second: Location,
    },
    #[error("cannot infer input format of {0}; use .jsonl or .csv")]
    UnknownFormat(PathBuf),
    #[error("{source_name}: bad CSV header, expected id,year,raw_affiliations")]
    BadHeader { source_name: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// Ingested, validated set of publication records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// Sorted by id.
    pub records: Vec<PublicationRecord>,
    pub year_range: Option<(i32, i32)>,
    pub unresolved: Vec<UnresolvedAffiliation>,
    pub quarantine: Vec<QuarantineEntry>,
    fingerprint: OnceLock<String>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.year_range == other.year_range
            && self.unresolved == other.unresolved
            && self.quarantine == other.quarantine
    }
}

impl Corpus {
    /// Builds a corpus from records, checking id uniqueness and parse state.
    pub fn from_records(records: Vec<PublicationRecord>) -> Result<Self, IngestError> {
        let located = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    r,
                    Location {
                        source: Arc::from("<memory>"),
                        line_no: i + 1,
                    },
                )
            })
            .collect();
        PartialCorpus {
            records: located,
            quarantine: Vec::new(),
        }
        .finish()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: &str) -> Option<&PublicationRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Replaces the records, recomputing year range and fingerprint.
    pub fn with_records(
        mut records: Vec<PublicationRecord>,
        mut unresolved: Vec<UnresolvedAffiliation>,
        quarantine: Vec<QuarantineEntry>,
    ) -> Self {
        records.sort_unstable_by(|a, b| a.id.cmp(&b.id));
        unresolved.sort_unstable();
        let year_range = year_range(&records);
        Corpus {
            records,
            year_range,
            unresolved,
            quarantine,
            fingerprint: OnceLock::new(),
        }
    }

    /// Records whose year lies in `[from, to]`.
    pub fn filter_years(&self, from: i32, to: i32) -> Corpus {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| (from..=to).contains(&r.year))
            .cloned()
            .collect();
        let unresolved = self
            .unresolved
            .iter()
            .filter(|u| self.record(&u.record_id).is_some_and(|r| (from..=to).contains(&r.year)))
            .cloned()
            .collect();
        Corpus::with_records(records, unresolved, self.quarantine.clone())
    }

    /// SHA-256 over the records' content, hex encoded.
    pub fn fingerprint(&self) -> &str {
        self.fingerprint.get_or_init(|| {
            let mut h = Sha256::new();
            for r in &self.records {
                h.update(r.id.as_bytes());
                h.update([0x1e]);
                h.update(r.year.to_le_bytes());
                for a in &r.affiliations {
                    for field in [
                        a.raw.as_str(),
                        &a.institution,
                        &a.locality_name,
                        a.admin_name.as_deref().unwrap_or("\u{0}"),
                        &a.country_name,
                        a.resolved_locality.as_ref().map_or("\u{0}", |l| l.as_str()),
                    ] {
                        h.update(field.as_bytes());
                        h.update([0x1f]);
                    }
                }
                h.update([0x1d]);
            }
            hex::encode(h.finalize())
        })
    }

    /// Writes records as JSONL in the structured input form.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            write_record_jsonl(r, &mut w)?;
        }
        Ok(())
    }

    pub fn write_quarantine_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["record_id", "line_no", "reason"])?;
        for q in &self.quarantine {
            out.write_record([
                q.record_id.as_str(),
                &q.line_no.to_string(),
                &format!("{}: {}", q.source, q.reason),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_unresolved_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["record_id", "affiliation_index", "reason"])?;
        for u in &self.unresolved {
            out.write_record([u.record_id.as_str(), &u.index.to_string(), &u.reason])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One record as a JSONL line in the structured input form.
pub fn write_record_jsonl<W: Write>(r: &PublicationRecord, mut w: W) -> std::io::Result<()> {
    let line = JsonRecordOut {
        id: &r.id,
        year: r.year,
        affiliations: r.affiliations.iter().map(JsonAffiliationOut::from).collect(),
    };
    serde_json::to_writer(&mut w, &line)?;
    w.write_all(b"\n")
}

fn year_range(records: &[PublicationRecord]) -> Option<(i32, i32)> {
    records.iter().fold(None, |acc, r| match acc {
        None => Some((r.year, r.year)),
        Some((lo, hi)) => Some((lo.min(r.year), hi.max(r.year))),
    })
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    year: i32,
    affiliations: Vec<JsonAffiliationOut<'a>>,
}

#[derive(Serialize)]
struct JsonAffiliationOut<'a> {
    raw: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    institution: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    locality: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    admin: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    country: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    locality_id: Option<&'a str>,
}

impl<'a> From<&'a AffiliationEntry> for JsonAffiliationOut<'a> {
    fn from(a: &'a AffiliationEntry) -> Self {
        if !a.is_parsed() {
            return JsonAffiliationOut {
                raw: &a.raw,
                institution: None,
                locality: None,
                admin: None,
                country: None,
                locality_id: None,
            };
        }
        JsonAffiliationOut {
            raw: &a.raw,
            institution: Some(&a.institution),
            locality: Some(&a.locality_name),
            admin: a.admin_name.as_deref(),
            country: Some(&a.country_name),
            locality_id: a.resolved_locality.as_ref().map(|l| l.as_str()),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecordIn {
    id: String,
    year: i64,
    affiliations: Vec<JsonAffiliationIn>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonAffiliationIn {
    Structured {
        institution: String,
        locality: String,
        #[serde(default)]
        admin: Option<String>,
        country: String,
        #[serde(default)]
        raw: Option<String>,
        #[serde(default)]
        locality_id: Option<String>,
    },
    Raw {
        raw: String,
    },
}

/// Records with their input positions, before validation.
#[derive(Debug, Default)]
pub struct PartialCorpus {
    records: Vec<(PublicationRecord, Location)>,
    quarantine: Vec<QuarantineEntry>,
}

impl PartialCorpus {
    /// Associative, commutative combination of two partial corpora.
    pub fn merge(mut self, mut other: PartialCorpus) -> PartialCorpus {
        self.records.append(&mut other.records);
        self.quarantine.append(&mut other.quarantine);
        self
    }

    pub fn line_count(&self) -> usize {
        self.records.len() + self.quarantine.len()
    }

    /// Sorts, checks id uniqueness and collects parse failures.
    pub fn finish(mut self) -> Result<Corpus, IngestError> {
        self.records
            .par_sort_unstable_by(|a, b| a.0.id.cmp(&b.0.id).then_with(|| a.1.cmp(&b.1)));
        for pair in self.records.windows(2) {
            if pair[0].0.id == pair[1].0.id {
                return Err(IngestError::DuplicateId {
                    id: pair[0].0.id.clone(),
                    first: pair[0].1.clone(),
                    second: pair[1].1.clone(),
                });
            }
        }
        let records: Vec<PublicationRecord> = self.records.into_iter().map(|(r, _)| r).collect();
        let unresolved = records
            .par_iter()
            .flat_map_iter(|r| {
                r.affiliations
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| !a.is_parsed())
                    .map(|(i, a)| UnresolvedAffiliation {
                        record_id: r.id.clone(),
                        index: i,
                        reason: match parse_affiliation(&a.raw) {
                            Err(e) => e.to_string(),
                            Ok(_) => ParseFailure::EmptyCountry.to_string(),
                        },
                    })
            })
            .collect();
        self.quarantine.sort_unstable();
        Ok(Corpus::with_records(records, unresolved, self.quarantine))
    }
}

fn build_entry(raw: &str) -> AffiliationEntry {
    parse_affiliation(raw).unwrap_or_else(|_| AffiliationEntry::unparsed(raw.trim()))
}

/// Drops repeated identical address strings, keeping first occurrences.
fn collapse_duplicates(entries: Vec<AffiliationEntry>) -> Vec<AffiliationEntry> {
    let mut out: Vec<AffiliationEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        if !out.iter().any(|o| o.raw == e.raw) {
            out.push(e);
        }
    }
    out
}

fn check_year(year: i64) -> Result<i32, String> {
    i32::try_from(year).map_err(|_| format!("year {year} out of range"))
}

/// A parsed record, or the record id and reason for quarantine.
type LineResult = Result<PublicationRecord, (String, String)>;

fn parse_jsonl_line(line: &str) -> LineResult {
    let rec: JsonRecordIn = serde_json::from_str(line).map_err(|e| {
        let id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(String::from))
            .unwrap_or_default();
        (id, format!("malformed line: {e}"))
    })?;
    let id = rec.id.trim().to_string();
    if id.is_empty() {
        return Err((id, "malformed line: empty id".into()));
    }
    let year = check_year(rec.year).map_err(|e| (id.clone(), format!("malformed line: {e}")))?;
    let mut entries = Vec::new();
    for a in rec.affiliations {
        match a {
            JsonAffiliationIn::Structured {
                institution,
                locality,
                admin,
                country,
                raw,
                locality_id,
            } => {
                let mut e = AffiliationEntry::structured(&institution, &locality, admin.as_deref(), &country);
                if let Some(raw) = raw.filter(|r| !r.trim().is_empty()) {
                    e.raw = raw;
                }
                e.resolved_locality = locality_id.filter(|l| !l.is_empty()).map(LocalityId::from);
                if e.country_name.is_empty() {
                    return Err((id, "malformed line: structured affiliation without country".into()));
                }
                entries.push(e);
            }
            JsonAffiliationIn::Raw { raw } => {
                entries.extend(split_affiliations(&raw).map(build_entry));
            }
        }
    }
    finish_record(id, year, entries)
}

fn finish_record(id: String, year: i32, entries: Vec<AffiliationEntry>) -> LineResult {
    let affiliations = collapse_duplicates(entries);
    if affiliations.is_empty() {
        return Err((id, "malformed line: no affiliations".into()));
    }
    Ok(PublicationRecord { id, year, affiliations })
}

fn parse_csv_row(row: &csv::StringRecord) -> LineResult {
    let id = row.get(0).unwrap_or("").trim().to_string();
    if row.len() != 3 {
        return Err((id, format!("malformed line: expected 3 fields, got {}", row.len())));
    }
    if id.is_empty() {
        return Err((id, "malformed line: empty id".into()));
    }
    let year = row[1]
        .trim()
        .parse::<i64>()
        .map_err(|e| format!("bad year '{}': {e}", &row[1]))
        .and_then(check_year)
        .map_err(|e| (id.clone(), format!("malformed line: {e}")))?;
    let entries = split_affiliations(&row[2]).map(build_entry).collect();
    finish_record(id, year, entries)
}

const CHUNK_LINES: usize = 65_536;

fn push_results(out: &mut PartialCorpus, source: &Arc<str>, results: Vec<(usize, LineResult)>) {
    for (line_no, res) in results {
        match res {
            Ok(r) => out.records.push((
                r,
                Location {
                    source: Arc::clone(source),
                    line_no,
                },
            )),
            Err((record_id, reason)) => out.quarantine.push(QuarantineEntry {
                source: source.to_string(),
                line_no,
                record_id,
                reason,
            }),
        }
    }
}

/// Reads one input stream. Blank lines and `#` comment lines are not records.
pub fn read_partial<R: Read>(reader: R, source: &str, format: InputFormat) -> Result<PartialCorpus, IngestError> {
    let source: Arc<str> = Arc::from(source);
    let mut out = PartialCorpus::default();
    match format {
        InputFormat::Jsonl => {
            let mut lines = BufReader::new(reader).lines();
            let mut line_no = 0usize;
            loop {
                let mut chunk = Vec::with_capacity(CHUNK_LINES);
                for line in lines.by_ref() {
                    let line = line.map_err(|e| IngestError::Io {
                        path: PathBuf::from(&*source),
                        source: e,
                    })?;
                    line_no += 1;
                    let t = line.trim_start();
                    if !t.is_empty() && !t.starts_with('#') {
                        chunk.push((line_no, line));
                    }
                    if chunk.len() == CHUNK_LINES {
                        break;
                    }
                }
                if chunk.is_empty() {
                    break;
                }
                let results = chunk.into_par_iter().map(|(n, l)| (n, parse_jsonl_line(&l))).collect();
                push_results(&mut out, &source, results);
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(true)
                .comment(Some(b'#'))
                .from_reader(reader);
            let headers = rdr.headers()?.clone();
            let expected = ["id", "year", "raw_affiliations"];
            if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
                return Err(IngestError::BadHeader {
                    source_name: source.to_string(),
                });
            }
            let mut rows = rdr.into_records();
            loop {
                let mut chunk = Vec::with_capacity(CHUNK_LINES);
                for row in rows.by_ref() {
                    let row = row?;
                    let line_no = row.position().map_or(0, |p| p.line() as usize);
                    chunk.push((line_no, row));
                    if chunk.len() == CHUNK_LINES {
                        break;
                    }
                }
                if chunk.is_empty() {
                    break;
                }
                let results = chunk.into_par_iter().map(|(n, row)| (n, parse_csv_row(&row))).collect();
                push_results(&mut out, &source, results);
            }
        }
    }
    Ok(out)
}

/// Ingests one or more corpus files into a single corpus.
///
/// `format` overrides extension-based detection. Files are read in parallel
/// and the result does not depend on their order.
pub fn ingest<P: AsRef<Path> + Sync>(paths: &[P], format: Option<InputFormat>) -> Result<Corpus, IngestError> {
    let partials: Vec<PartialCorpus> = paths
        .par_iter()
        .map(|p| {
            let path = p.as_ref();
            let fmt = format
                .or_else(|| InputFormat::from_path(path))
                .ok_or_else(|| IngestError::UnknownFormat(path.to_path_buf()))?;
            let file = File::open(path).map_err(|e| IngestError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            read_partial(file, &path.display().to_string(), fmt)
        })
        .collect::<Result<_, _>>()?;
    partials
        .into_iter()
        .fold(PartialCorpus::default(), PartialCorpus::merge)
        .finish()
}

/// Ingests from an in-memory reader.
pub fn ingest_reader<R: Read>(reader: R, source: &str, format: InputFormat) -> Result<Corpus, IngestError> {
    read_partial(reader, source, format)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_rule() {
        let e = parse_affiliation("Dept of Civil Engineering, University of Debrecen, Debrecen, Hungary").unwrap();
        assert_eq!(e.institution, "Dept of Civil Engineering");
        assert_eq!(e.locality_name, "Debrecen");
        assert_eq!(e.admin_name, None);
        assert_eq!(e.country_name, "Hungary");
        assert_eq!(e.intermediate_segments(), vec!["University of Debrecen"]);
    }

    #[test]
    fn postal_code_and_admin() {
        let e = parse_affiliation("Stanford Univ, Stanford, CA 94305, USA").unwrap();
        assert_eq!(e.institution, "Stanford Univ");
        assert_eq!(e.locality_name, "Stanford");
        assert_eq!(e.admin_name.as_deref(), Some("CA"));
        assert_eq!(e.country_name, "USA");
    }

    #[test]
    fn reported_locality_is_kept() {
        let e = parse_affiliation("CERN, Geneva, Switzerland").unwrap();
        assert_eq!(e.institution, "CERN");
        assert_eq!(e.locality_name, "Geneva");
        assert_eq!(e.country_name, "Switzerland");
    }

    #[test]
    fn leading_postal_token() {
        let e = parse_affiliation("Univ Debrecen, Egyet Ter 1, H-4032 Debrecen, Hungary").unwrap();
        assert_eq!(e.locality_name, "Debrecen");
        let e = parse_affiliation("Lab, Berkeley, 94720, USA").unwrap();
        assert_eq!(e.locality_name, "Berkeley");
    }

    #[test]
    fn commas_inside_brackets_do_not_split() {
        let e = parse_affiliation("Inst (Physics, Optics), Szeged, Hungary").unwrap();
        assert_eq!(e.institution, "Inst (Physics, Optics)");
        assert_eq!(e.locality_name, "Szeged");
    }

    #[test]
    fn too_few_segments() {
        assert_eq!(parse_affiliation("Nowhere").unwrap_err(), ParseFailure::TooFewSegments);
        assert_eq!(parse_affiliation("   ").unwrap_err(), ParseFailure::Empty);
        assert_eq!(parse_affiliation("A, 12345").unwrap_err(), ParseFailure::EmptyCountry);
    }

    #[test]
    fn two_segments() {
        let e = parse_affiliation("Geneva, Switzerland").unwrap();
        assert_eq!(e.institution, "Geneva");
        assert_eq!(e.locality_name, "Geneva");
    }

    #[test]
    fn jsonl_three_records() {
        let input = r#"{"id":"p1","year":2016,"affiliations":[{"raw":"CERN, Geneva, Switzerland"}]}
{"id":"p2","year":2015,"affiliations":[{"institution":"WHO","locality":"Geneva","country":"Switzerland"}]}
{"id":"p3","year":2017,"affiliations":[{"raw":"A, Debrecen, Hungary; B, Szeged, Hungary"}],"authors":["x"]}
"#;
        let c = ingest_reader(input.as_bytes(), "t.jsonl", InputFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.unresolved.is_empty());
        assert!(c.quarantine.is_empty());
        assert_eq!(c.year_range, Some((2015, 2017)));
        assert_eq!(c.record("p3").unwrap().affiliations.len(), 2);
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let input = r#"{"id":"p1","year":2016,"affiliations":[{"raw":"A, B, C"}]}
{"id":"p2","year":2016,"affiliations":[{"raw":"A, B, C"}]}
{"id":"p1","year":2016,"affiliations":[{"raw":"A, B, C"}]}
"#;
        match ingest_reader(input.as_bytes(), "d.jsonl", InputFormat::Jsonl) {
            Err(IngestError::DuplicateId { id, first, second }) => {
                assert_eq!(id, "p1");
                assert_eq!(first.line_no, 1);
                assert_eq!(second.line_no, 3);
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_quarantined() {
        let input = "{\"id\":\"p1\",\"year\":2016,\"affiliations\":[{\"raw\":\"A, B, C\"}]}\n\
                     not json\n\
                     {\"id\":\"p2\",\"year\":2016,\"affiliations\":[]}\n\
                     {\"id\":\"p3\",\"year\":2016,\"affiliations\":[{\"raw\":\"Nowhere\"}]}\n";
        let c = ingest_reader(input.as_bytes(), "m.jsonl", InputFormat::Jsonl).unwrap();
        assert_eq!(c.len() + c.quarantine.len(), 4);
        assert_eq!(c.quarantine.len(), 2);
        assert_eq!(c.quarantine[0].line_no, 2);
        assert_eq!(c.quarantine[1].record_id, "p2");
        // the unparseable address is kept on its record and listed
        assert_eq!(c.unresolved.len(), 1);
        assert_eq!(c.unresolved[0].record_id, "p3");
        assert_eq!(c.record("p3").unwrap().affiliations[0].raw, "Nowhere");
    }

    #[test]
    fn csv_input_and_duplicate_collapse() {
        let input = "id,year,raw_affiliations\n\
                     p1,2016,\"CERN, Geneva, Switzerland; CERN, Geneva, Switzerland\"\n\
                     p2,notayear,\"A, B, C\"\n";
        let c = ingest_reader(input.as_bytes(), "c.csv", InputFormat::Csv).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records[0].affiliations.len(), 1);
        assert_eq!(c.quarantine.len(), 1);
        assert_eq!(c.quarantine[0].line_no, 3);
    }

    #[test]
    fn csv_bad_header() {
        let input = "id,raw\np1,x\n";
        assert!(matches!(
            ingest_reader(input.as_bytes(), "c.csv", InputFormat::Csv),
            Err(IngestError::BadHeader { .. })
        ));
    }
}
