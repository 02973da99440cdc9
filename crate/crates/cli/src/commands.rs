use std::cell::OnceCell;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cityometrics::collab::{dyad_matrix, expand_links, intra_city_matrix, City, DyadOptions};
use cityometrics::counting::{
    dedup_count, fractional_count, hq_mismatch, institution_count, integer_count, metro_integer_sum, rollup_report,
    AttributionPolicy, Regime,
};
use cityometrics::delineation::{
    compare_partitions, delineate_distance, delineate_lookup, delineate_travel_time, Partition, SkippedEdge,
};
use cityometrics::fixture::{generate, Fixture, Profile};
use cityometrics::gazetteer::{load_travel_times, Gazetteer, InstitutionRegistry, MembershipTable};
use cityometrics::record::{ingest, Corpus, InputFormat};
use cityometrics::report::{ranked_table, regime_summary};
use cityometrics::{CountReport, DyadMatrix};

use crate::config::{Format, RunConfig, StrategyConfig};
use crate::error::CliError;
use crate::output::{write_atomic, Provenance};

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// File-name fragment for an id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn empty_corpus() -> CliError {
    CliError::new("empty_corpus", "empty corpus")
}

/// Loaded inputs of one configured run, shared by the stages.
pub struct Session {
    cfg: RunConfig,
    prov: Provenance,
    gazetteer: Gazetteer,
    corpus: OnceCell<Corpus>,
    partition: OnceCell<(Partition, Vec<SkippedEdge>)>,
    registry: OnceCell<InstitutionRegistry>,
}

impl Session {
    pub fn open(command: &str, cfg: RunConfig) -> Result<Self, CliError> {
        let mut prov = Provenance::new(command, Some(&cfg.hash));
        if let Some(seed) = cfg.seed {
            prov.push(format!("seed: {seed}"));
        }
        for f in cfg.inputs() {
            prov.input(&f.label, &f.path)?;
        }
        let gz = cfg
            .gazetteer
            .as_ref()
            .ok_or_else(|| CliError::new("config", "gazetteer_path is required").exit(2))?;
        let mut gazetteer = Gazetteer::load(&gz.path)?;
        if let Some(a) = &cfg.aliases {
            gazetteer = gazetteer.load_aliases(File::open(&a.path)?)?;
        }
        Ok(Session {
            cfg,
            prov,
            gazetteer,
            corpus: OnceCell::new(),
            partition: OnceCell::new(),
            registry: OnceCell::new(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn corpus(&self) -> Result<&Corpus, CliError> {
        if let Some(c) = self.corpus.get() {
            return Ok(c);
        }
        if self.cfg.corpus.is_empty() {
            return Err(CliError::new("config", "corpus_paths is empty").exit(2));
        }
        let paths: Vec<&Path> = self.cfg.corpus.iter().map(|f| f.path.as_path()).collect();
        let raw = ingest(&paths, self.cfg.corpus_format)?;
        let admitted = match self.cfg.year_range {
            None => raw.len(),
            Some((lo, hi)) => raw.records.iter().filter(|r| (lo..=hi).contains(&r.year)).count(),
        };
        if admitted == 0 {
            return Err(empty_corpus());
        }
        Ok(self.corpus.get_or_init(|| self.gazetteer.resolve_owned(raw)))
    }

    fn partition(&self) -> Result<&(Partition, Vec<SkippedEdge>), CliError> {
        if let Some(p) = self.partition.get() {
            return Ok(p);
        }
        let p = self.build(&self.cfg.strategy)?;
        Ok(self.partition.get_or_init(|| p))
    }

    fn build(&self, s: &StrategyConfig) -> Result<(Partition, Vec<SkippedEdge>), CliError> {
        let g = &self.gazetteer;
        Ok(match s {
            StrategyConfig::Identity => (Partition::identity(g), vec![]),
            StrategyConfig::Lookup(tier) => {
                let m = self.cfg.membership.as_ref().expect("validated");
                let table = MembershipTable::load(&m.path, g)?;
                (delineate_lookup(g, &table, *tier)?, vec![])
            }
            StrategyConfig::Distance(opts) => (delineate_distance(g, *opts)?, vec![]),
            StrategyConfig::TravelTime { base, opts } => {
                let (base, _) = self.build(base)?;
                let t = self.cfg.travel_times.as_ref().expect("validated");
                let edges = load_travel_times(&t.path, g)?;
                delineate_travel_time(&base, g, &edges, *opts)?
            }
        })
    }

    fn registry(&self) -> Result<&InstitutionRegistry, CliError> {
        if let Some(r) = self.registry.get() {
            return Ok(r);
        }
        let f = self
            .cfg
            .institutions
            .as_ref()
            .ok_or_else(|| CliError::new("config", "institution_path is required").exit(2))?;
        let r = InstitutionRegistry::load(&f.path, &self.gazetteer)?;
        Ok(self.registry.get_or_init(|| r))
    }

    fn write_report(&self, name: &str, r: &CountReport) -> Result<(), CliError> {
        write_atomic(&self.out(name), |w| r.write_csv(w, self.prov.lines()))
    }

    pub fn delineate(&self) -> Result<(), CliError> {
        let (p, skipped) = self.partition()?;
        write_atomic(&self.out("partition.csv"), |w| {
            self.prov.write(&mut *w)?;
            p.write_csv(w).map_err(csv_err)
        })?;
        if let StrategyConfig::TravelTime { .. } = self.cfg.strategy {
            write_atomic(&self.out("skipped_edges.csv"), |w| {
                self.prov.write(&mut *w)?;
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["locality_a", "locality_b", "minutes", "reason"])
                    .map_err(csv_err)?;
                for s in skipped {
                    c.write_record([
                        s.edge.a.as_str(),
                        s.edge.b.as_str(),
                        &s.edge.minutes.to_string(),
                        &s.reason,
                    ])
                    .map_err(csv_err)?;
                }
                c.flush()
            })?;
        }
        Ok(())
    }

    /// Locality, metro integer-sum, dedup and fractional reports.
    fn regime_reports(&self) -> Result<Vec<(Regime, CountReport)>, CliError> {
        let corpus = self.corpus()?;
        let (p, _) = self.partition()?;
        let opts = self.cfg.count_options();
        let mut out = Vec::new();
        let needs_loc = self
            .cfg
            .regimes
            .iter()
            .any(|r| matches!(r, Regime::Integer | Regime::IntegerSum));
        let loc: Option<CountReport> = if needs_loc {
            Some(integer_count(corpus, &opts)?)
        } else {
            None
        };
        for &regime in &self.cfg.regimes {
            let r = match regime {
                Regime::Integer => loc.clone().expect("computed"),
                Regime::IntegerSum => metro_integer_sum(loc.as_ref().expect("computed"), p)?,
                Regime::Dedup => dedup_count(corpus, p, &opts)?,
                Regime::Fractional => {
                    fractional_count(corpus, &AttributionPolicy::metros(self.cfg.fractional_basis, p), &opts)?
                }
            };
            out.push((regime, r));
        }
        Ok(out)
    }

    pub fn count(&self) -> Result<(), CliError> {
        for (regime, r) in self.regime_reports()? {
            self.write_report(&format!("counts_{}.csv", regime.as_str()), &r)?;
        }
        if self.cfg.institutions.is_some() {
            let reg = self.registry()?;
            let inst: CountReport = institution_count(self.corpus()?, reg, &self.cfg.count_options())?;
            self.write_report("counts_institution.csv", &inst)?;
            self.write_report("counts_institution_rollup.csv", &rollup_report(&inst, reg)?)?;
        }
        Ok(())
    }

    pub fn collab(&self) -> Result<(), CliError> {
        let corpus = self.corpus()?;
        let (p, _) = self.partition()?;
        let opts = DyadOptions {
            include_diagonal: self.cfg.include_diagonal,
            count: self.cfg.count_options(),
        };
        let metro_level = self.cfg.strategy != StrategyConfig::Identity;
        for &regime in &self.cfg.dyad_regimes {
            let loc: DyadMatrix = dyad_matrix(corpus, None, regime, &opts)?;
            self.write_dyads(&format!("dyads_locality_{}.csv", regime.as_str()), &loc)?;
            if metro_level {
                let m: DyadMatrix = dyad_matrix(corpus, Some(p), regime, &opts)?;
                self.write_dyads(&format!("dyads_metro_{}.csv", regime.as_str()), &m)?;
            }
        }
        for (a, b) in &self.cfg.metro_pairs {
            let e = expand_links(corpus, p, (a, b), &opts.count)?;
            let name = format!("links_{}__{}.csv", slug(&e.metro_pair.0), slug(&e.metro_pair.1));
            write_atomic(&self.out(&name), |w| e.write_csv(w, self.prov.lines()))?;
        }
        if let Some(id) = &self.cfg.city {
            let city = City::unit(p, id).or_else(|_| City::locality(&self.gazetteer, id))?;
            let m: DyadMatrix = intra_city_matrix(corpus, &city, self.registry()?, &opts.count)?;
            self.write_dyads(&format!("intra_city_{}.csv", slug(id)), &m)?;
        }
        Ok(())
    }

    fn write_dyads(&self, name: &str, m: &DyadMatrix) -> Result<(), CliError> {
        write_atomic(&self.out(name), |w| m.write_csv(w, self.prov.lines()))
    }

    pub fn report(&self, format: Option<Format>) -> Result<(), CliError> {
        let format = format.unwrap_or(self.cfg.format);
        let corpus = self.corpus()?;
        let (p, _) = self.partition()?;
        let opts = self.cfg.count_options();
        let loc: CountReport = integer_count(corpus, &opts)?;
        let sum = metro_integer_sum(&loc, p)?;
        let dedup: CountReport = dedup_count(corpus, p, &opts)?;
        let frac: CountReport =
            fractional_count(corpus, &AttributionPolicy::metros(self.cfg.fractional_basis, p), &opts)?;

        let metros: Vec<String> = if self.cfg.report_metros.is_empty() {
            p.metros().iter().map(|m| m.id.clone()).collect()
        } else {
            self.cfg.report_metros.clone()
        };
        for id in &metros {
            let t = ranked_table(id, p, &self.gazetteer, &loc, &dedup, &frac, self.cfg.top_n)?;
            self.emit(&format!("ranked_{}", slug(id)), format, |w| match format {
                Format::Csv => t.write_csv(w, self.prov.lines()),
                Format::Text => w.write_all(t.render_text().as_bytes()),
            })?;
        }
        let s = regime_summary(&[&sum, &dedup, &frac])?;
        self.emit("regime_summary", format, |w| match format {
            Format::Csv => s.write_csv(w, self.prov.lines()),
            Format::Text => w.write_all(s.render_text().as_bytes()),
        })
    }

    fn emit<F>(&self, stem: &str, format: Format, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let (ext, header) = match format {
            Format::Csv => ("csv", false),
            Format::Text => ("txt", true),
        };
        write_atomic(&self.out(&format!("{stem}.{ext}")), |w| {
            if header {
                self.prov.write(&mut *w)?;
                writeln!(w)?;
            }
            body(w)
        })
    }

    pub fn mismatch(&self) -> Result<(), CliError> {
        let m = hq_mismatch(self.corpus()?, self.registry()?, &self.cfg.count_options());
        write_atomic(&self.out("hq_mismatch.csv"), |w| m.write_csv(w, self.prov.lines()))
    }

    pub fn run(&self) -> Result<(), CliError> {
        self.delineate()?;
        self.count()?;
        self.collab()?;
        self.report(None)?;
        if self.cfg.institutions.is_some() {
            self.mismatch()?;
        }
        Ok(())
    }
}

pub fn cmd_ingest(paths: &[PathBuf], out_dir: &Path, format: Option<InputFormat>) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::new("usage", "no input files given").exit(2));
    }
    let mut prov = Provenance::new("ingest", None);
    for p in paths {
        prov.input(&p.display().to_string(), p)?;
    }
    let corpus = ingest(paths, format)?;
    write_corpus_files(&corpus, out_dir, "corpus.jsonl", &prov)
}

pub fn cmd_resolve(
    paths: &[PathBuf],
    gazetteer: &Path,
    aliases: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::new("usage", "no corpus files given").exit(2));
    }
    let mut prov = Provenance::new("resolve", None);
    prov.input(&gazetteer.display().to_string(), gazetteer)?;
    let mut g = Gazetteer::load(gazetteer)?;
    if let Some(a) = aliases {
        prov.input(&a.display().to_string(), a)?;
        g = g.load_aliases(File::open(a)?)?;
    }
    for p in paths {
        prov.input(&p.display().to_string(), p)?;
    }
    let corpus = g.resolve_owned(ingest(paths, None)?);
    write_corpus_files(&corpus, out_dir, "resolved.jsonl", &prov)
}

fn write_corpus_files(corpus: &Corpus, out_dir: &Path, name: &str, prov: &Provenance) -> Result<(), CliError> {
    write_atomic(&out_dir.join(name), |w| {
        prov.write(&mut *w)?;
        corpus.write_jsonl(w)
    })?;
    write_atomic(&out_dir.join("quarantine.csv"), |w| {
        prov.write(&mut *w)?;
        corpus.write_quarantine_csv(w).map_err(csv_err)
    })?;
    write_atomic(&out_dir.join("unresolved.csv"), |w| {
        prov.write(&mut *w)?;
        corpus.write_unresolved_csv(w).map_err(csv_err)
    })
}

pub fn cmd_compare(gazetteer: &Path, p1: &Path, p2: &Path, out_dir: &Path) -> Result<(), CliError> {
    let mut prov = Provenance::new("compare", None);
    for p in [gazetteer, p1, p2] {
        prov.input(&p.display().to_string(), p)?;
    }
    let g = Gazetteer::load(gazetteer)?;
    let a = Partition::from_reader(File::open(p1)?, &g)?;
    let b = Partition::from_reader(File::open(p2)?, &g)?;
    let diff = compare_partitions(&a, &b)?;
    write_atomic(&out_dir.join("diff.csv"), |w| {
        prov.write(&mut *w)?;
        diff.write_csv(w).map_err(csv_err)
    })
}

pub fn cmd_fixture(profile: &str, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let profile: Profile = profile.parse().map_err(|e: String| {
        CliError::new("usage", e)
            .details(Profile::NAMES.iter().map(|s| s.to_string()).collect())
            .exit(2)
    })?;
    let f = generate(profile, seed);
    let mut prov = Provenance::new("fixture", None);
    prov.push(format!("profile: {} seed={seed}", f.profile.name()));
    for (name, bytes) in f.files()? {
        write_atomic(&out_dir.join(name), |w| {
            if name.ends_with(".json") {
                let expected: serde_json::Value = serde_json::from_slice(&bytes)?;
                let doc = serde_json::json!({ "header": prov.lines(), "expected": expected });
                serde_json::to_writer_pretty(&mut *w, &doc)?;
                return writeln!(w);
            }
            prov.write(&mut *w)?;
            w.write_all(&bytes)
        })?;
    }
    write_atomic(&out_dir.join("run.toml"), |w| {
        prov.write(&mut *w)?;
        w.write_all(run_file(&f).as_bytes())
    })
}

/// Run file wiring a fixture's files into the pipeline.
fn run_file(f: &Fixture) -> String {
    let mut s = String::from("corpus_paths = [\"corpus.jsonl\"]\ngazetteer_path = \"gazetteer.csv\"\n");
    if f.membership.is_some() {
        s += "membership_path = \"membership.csv\"\n";
    }
    if f.institutions.is_some() {
        s += "institution_path = \"institutions.csv\"\n";
    }
    if !f.travel_times.is_empty() {
        s += "travel_time_path = \"travel_times.csv\"\n";
    }
    s += &format!("output_dir = \"out\"\nseed = {}\n", f.seed);
    if !f.resolved_corpus().unresolved.is_empty() {
        s += "unresolved_tolerance = 1.0\n";
    }
    let (strategy, extra) = match f.profile {
        Profile::MiniNy => (
            "kind = \"lookup\"\ntier = \"csa\"\n",
            "\n[report]\nmetros = [\"NY-CSA\"]\n",
        ),
        Profile::NyMembership => ("kind = \"lookup\"\ntier = \"msa\"\n", ""),
        Profile::UptonBerkeley => (
            "kind = \"lookup\"\ntier = \"csa\"\n",
            "\n[collab]\nmetro_pairs = [[\"NY-CSA\", \"SF-CSA\"]]\n",
        ),
        Profile::Geneva => (
            "kind = \"lookup\"\ntier = \"custom\"\n",
            "\n[collab]\ncity = \"geneva-metro\"\n",
        ),
        Profile::AnnArborDetroit => ("kind = \"lookup\"\ntier = \"csa\"\n", ""),
        Profile::Random(_) => ("kind = \"lookup\"\ntier = \"csa\"\n", ""),
        Profile::Ibm | Profile::Creswick => ("kind = \"identity\"\n", ""),
    };
    format!("{s}\n[strategy]\n{strategy}{extra}")
}
