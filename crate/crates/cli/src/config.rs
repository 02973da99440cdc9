//! Declarative run file.

use std::fs;
use std::path::{Path, PathBuf};

use cityometrics::collab::DyadRegime;
use cityometrics::counting::{FractionalBasis, Regime};
use cityometrics::delineation::{DistanceOptions, TravelTimeOptions};
use cityometrics::gazetteer::Tier;
use cityometrics::report::DEFAULT_TOP_N;
use serde::Deserialize;

use crate::error::CliError;
use crate::output::sha256_hex;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    corpus_paths: Vec<String>,
    corpus_format: Option<String>,
    gazetteer_path: Option<String>,
    alias_path: Option<String>,
    membership_path: Option<String>,
    institution_path: Option<String>,
    travel_time_path: Option<String>,
    output_dir: Option<String>,
    regimes: Option<Vec<String>>,
    year_range: Option<Vec<i64>>,
    fractional_basis: Option<String>,
    unresolved_tolerance: Option<f64>,
    seed: Option<u64>,
    strategy: Option<RawStrategy>,
    report: Option<RawReport>,
    collab: Option<RawCollab>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: String,
    tier: Option<String>,
    threshold_km: Option<f64>,
    core_population: Option<u64>,
    inclusive: Option<bool>,
    threshold_minutes: Option<f64>,
    strict: Option<bool>,
    base: Option<Box<RawStrategy>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    metros: Option<Vec<String>>,
    top_n: Option<i64>,
    format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCollab {
    regimes: Option<Vec<String>>,
    include_diagonal: Option<bool>,
    metro_pairs: Option<Vec<Vec<String>>>,
    city: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyConfig {
    Identity,
    Lookup(Tier),
    Distance(DistanceOptions),
    TravelTime {
        base: Box<StrategyConfig>,
        opts: TravelTimeOptions,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            other => Err(format!("unknown format '{other}', expected csv or text")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputFile {
    /// As written in the run file.
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hash: String,
    pub corpus: Vec<InputFile>,
    pub corpus_format: Option<cityometrics::record::InputFormat>,
    pub gazetteer: Option<InputFile>,
    pub aliases: Option<InputFile>,
    pub membership: Option<InputFile>,
    pub institutions: Option<InputFile>,
    pub travel_times: Option<InputFile>,
    pub output_dir: PathBuf,
    pub regimes: Vec<Regime>,
    pub year_range: Option<(i32, i32)>,
    pub fractional_basis: FractionalBasis,
    pub unresolved_tolerance: f64,
    pub seed: Option<u64>,
    pub strategy: StrategyConfig,
    pub report_metros: Vec<String>,
    pub top_n: usize,
    pub format: Format,
    pub dyad_regimes: Vec<DyadRegime>,
    pub include_diagonal: bool,
    pub metro_pairs: Vec<(String, String)>,
    pub city: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())).exit(2))?;
        let text =
            String::from_utf8(bytes.clone()).map_err(|_| CliError::new("config", "run file is not UTF-8").exit(2))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base, sha256_hex(&bytes))
    }

    pub fn parse(text: &str, base: &Path, hash: String) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| CliError::new("config", format!("cannot parse run file: {}", e.message().trim())).exit(2))?;
        let mut errors = Vec::new();
        let input = |key: &str, value: &Option<String>, errors: &mut Vec<String>| -> Option<InputFile> {
            let label = value.clone()?;
            let path = base.join(&label);
            if !path.is_file() {
                errors.push(format!("{key}: file not found: {label}"));
            }
            Some(InputFile { label, path })
        };

        let mut corpus = Vec::new();
        for p in &raw.corpus_paths {
            if let Some(f) = input("corpus_paths", &Some(p.clone()), &mut errors) {
                corpus.push(f);
            }
        }
        let corpus_format = raw.corpus_format.as_deref().and_then(|f| {
            f.parse()
                .map_err(|e: String| errors.push(format!("corpus_format: {e}")))
                .ok()
        });
        let gazetteer = input("gazetteer_path", &raw.gazetteer_path, &mut errors);
        if gazetteer.is_none() {
            errors.push("gazetteer_path: missing".into());
        }
        let aliases = input("alias_path", &raw.alias_path, &mut errors);
        let membership = input("membership_path", &raw.membership_path, &mut errors);
        let institutions = input("institution_path", &raw.institution_path, &mut errors);
        let travel_times = input("travel_time_path", &raw.travel_time_path, &mut errors);

        let output_dir = match &raw.output_dir {
            Some(d) => base.join(d),
            None => {
                errors.push("output_dir: missing".into());
                PathBuf::new()
            }
        };

        let regimes = match &raw.regimes {
            None => vec![Regime::Integer, Regime::IntegerSum, Regime::Dedup, Regime::Fractional],
            Some(list) => {
                let mut out = Vec::new();
                for r in list {
                    match r.parse::<Regime>() {
                        Ok(r) if !out.contains(&r) => out.push(r),
                        Ok(_) => errors.push(format!("regimes: '{r}' listed twice")),
                        Err(e) => errors.push(format!("regimes: {e}")),
                    }
                }
                if list.is_empty() {
                    errors.push("regimes: empty list".into());
                }
                out
            }
        };

        let year_range = match raw.year_range.as_deref() {
            None => None,
            Some([lo, hi]) => match (i32::try_from(*lo), i32::try_from(*hi)) {
                (Ok(lo), Ok(hi)) if lo <= hi => Some((lo, hi)),
                _ => {
                    errors.push(format!("year_range: [{lo}, {hi}] is not an ordered pair of years"));
                    None
                }
            },
            Some(other) => {
                errors.push(format!("year_range: expected [from, to], got {} values", other.len()));
                None
            }
        };

        let fractional_basis = match &raw.fractional_basis {
            None => FractionalBasis::default(),
            Some(s) => s.parse().unwrap_or_else(|e| {
                errors.push(format!("fractional_basis: {e}"));
                FractionalBasis::default()
            }),
        };

        let unresolved_tolerance = raw.unresolved_tolerance.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&unresolved_tolerance) {
            errors.push(format!(
                "unresolved_tolerance: {unresolved_tolerance} is outside [0, 1]"
            ));
        }

        let strategy = match &raw.strategy {
            None => StrategyConfig::Identity,
            Some(s) => strategy(s, "strategy", &raw, &mut errors),
        };

        let rep = raw.report.unwrap_or_default();
        let top_n = match rep.top_n {
            None => DEFAULT_TOP_N,
            Some(n) if n >= 1 => n as usize,
            Some(n) => {
                errors.push(format!("report.top_n: must be at least 1, got {n}"));
                DEFAULT_TOP_N
            }
        };
        let format = match &rep.format {
            None => Format::Csv,
            Some(f) => f.parse().unwrap_or_else(|e| {
                errors.push(format!("report.format: {e}"));
                Format::Csv
            }),
        };
        let report_metros = rep.metros.unwrap_or_default();

        let col = raw.collab.unwrap_or_default();
        let dyad_regimes = match &col.regimes {
            None => vec![DyadRegime::Integer, DyadRegime::Fractional],
            Some(list) => list
                .iter()
                .filter_map(|r| r.parse().map_err(|e| errors.push(format!("collab.regimes: {e}"))).ok())
                .collect(),
        };
        let mut metro_pairs = Vec::new();
        for pair in col.metro_pairs.unwrap_or_default() {
            match pair.as_slice() {
                [a, b] => metro_pairs.push((a.clone(), b.clone())),
                _ => errors.push(format!("collab.metro_pairs: expected two metro ids, got {pair:?}")),
            }
        }
        if col.city.is_some() && institutions.is_none() {
            errors.push("collab.city: requires institution_path".into());
        }

        if !errors.is_empty() {
            return Err(
                CliError::new("config", format!("{} problem(s) in run file", errors.len()))
                    .details(errors)
                    .exit(2),
            );
        }
        Ok(RunConfig {
            hash,
            corpus,
            corpus_format,
            gazetteer,
            aliases,
            membership,
            institutions,
            travel_times,
            output_dir,
            regimes,
            year_range,
            fractional_basis,
            unresolved_tolerance,
            seed: raw.seed,
            strategy,
            report_metros,
            top_n,
            format,
            dyad_regimes,
            include_diagonal: col.include_diagonal.unwrap_or(true),
            metro_pairs,
            city: col.city,
        })
    }

    /// Every configured input file, in a fixed order.
    pub fn inputs(&self) -> Vec<&InputFile> {
        [
            &self.gazetteer,
            &self.aliases,
            &self.membership,
            &self.institutions,
            &self.travel_times,
        ]
        .into_iter()
        .flatten()
        .chain(self.corpus.iter())
        .collect()
    }

    pub fn count_options(&self) -> cityometrics::counting::CountOptions {
        cityometrics::counting::CountOptions {
            year_filter: self.year_range,
            unresolved_tolerance: self.unresolved_tolerance,
            chunks: None,
        }
    }
}

fn strategy(s: &RawStrategy, key: &str, raw: &RawConfig, errors: &mut Vec<String>) -> StrategyConfig {
    let kind = s.kind.trim().to_ascii_lowercase().replace('-', "_");
    let mut unexpected = |field: &str, present: bool| {
        if present {
            errors.push(format!("{key}.{field}: not a parameter of strategy '{kind}'"));
        }
    };
    match kind.as_str() {
        "identity" => {
            unexpected("tier", s.tier.is_some());
            unexpected("threshold_km", s.threshold_km.is_some());
            unexpected("threshold_minutes", s.threshold_minutes.is_some());
            unexpected("base", s.base.is_some());
            StrategyConfig::Identity
        }
        "lookup" => {
            unexpected("threshold_km", s.threshold_km.is_some());
            unexpected("threshold_minutes", s.threshold_minutes.is_some());
            unexpected("base", s.base.is_some());
            if raw.membership_path.is_none() {
                errors.push(format!("{key}: lookup requires membership_path"));
            }
            let tier = match &s.tier {
                None => {
                    errors.push(format!("{key}.tier: missing"));
                    Tier::Csa
                }
                Some(t) => t.parse().unwrap_or_else(|e| {
                    errors.push(format!("{key}.tier: {e}"));
                    Tier::Csa
                }),
            };
            StrategyConfig::Lookup(tier)
        }
        "distance" => {
            unexpected("tier", s.tier.is_some());
            unexpected("threshold_minutes", s.threshold_minutes.is_some());
            unexpected("base", s.base.is_some());
            let km = match s.threshold_km {
                Some(d) if d.is_finite() && d > 0.0 => d,
                Some(d) => {
                    errors.push(format!("{key}.threshold_km: must be positive, got {d}"));
                    1.0
                }
                None => {
                    errors.push(format!("{key}.threshold_km: missing"));
                    1.0
                }
            };
            let mut opts = DistanceOptions::new(km);
            if let Some(p) = s.core_population {
                opts = opts.with_core_population(p);
            }
            if let Some(inc) = s.inclusive {
                opts.inclusive = inc;
            }
            StrategyConfig::Distance(opts)
        }
        "travel_time" => {
            unexpected("tier", s.tier.is_some());
            unexpected("threshold_km", s.threshold_km.is_some());
            if raw.travel_time_path.is_none() {
                errors.push(format!("{key}: travel_time requires travel_time_path"));
            }
            let minutes = match s.threshold_minutes {
                Some(m) if m.is_finite() && m > 0.0 => m,
                Some(m) => {
                    errors.push(format!("{key}.threshold_minutes: must be positive, got {m}"));
                    1.0
                }
                None => {
                    errors.push(format!("{key}.threshold_minutes: missing"));
                    1.0
                }
            };
            let mut opts = TravelTimeOptions::new(minutes);
            if let Some(strict) = s.strict {
                opts.strict = strict;
            }
            let base = match &s.base {
                None => StrategyConfig::Identity,
                Some(b) if b.kind.trim().eq_ignore_ascii_case("travel_time") => {
                    errors.push(format!("{key}.base: cannot itself be travel_time"));
                    StrategyConfig::Identity
                }
                Some(b) => strategy(b, &format!("{key}.base"), raw, errors),
            };
            StrategyConfig::TravelTime {
                base: Box::new(base),
                opts,
            }
        }
        other => {
            errors.push(format!(
                "{key}.kind: unknown strategy '{other}', expected identity, lookup, distance or travel_time"
            ));
            StrategyConfig::Identity
        }
    }
}
