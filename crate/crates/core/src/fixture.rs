//! Seeded synthetic corpora with known answers.
//!
//! Each profile builds a gazetteer, optional membership, institution and
//! travel-time tables, a corpus of raw affiliation strings, and the values the
//! generator engineered into it (`expected`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gazetteer::{
    write_travel_times, Gazetteer, Institution, InstitutionRegistry, Locality, LocalityId, MembershipTable,
    SettlementType, Tier, TravelTimeEdge,
};
use crate::record::{parse_affiliation, write_record_jsonl, Corpus, PublicationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    pub papers: usize,
    pub localities: usize,
    pub clusters: usize,
    pub max_affiliations: usize,
    /// Probability that an affiliation names a place missing from the gazetteer, in 1/1000.
    pub unresolved_per_mille: u32,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            papers: 1000,
            localities: 200,
            clusters: 20,
            max_affiliations: 6,
            unresolved_per_mille: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    MiniNy,
    NyMembership,
    Ibm,
    Creswick,
    Geneva,
    UptonBerkeley,
    AnnArborDetroit,
    Random(RandomSpec),
}

impl Profile {
    pub const NAMES: [&'static str; 8] = [
        "mini-ny",
        "ny-membership",
        "ibm",
        "creswick",
        "geneva",
        "upton-berkeley",
        "ann-arbor-detroit",
        "random",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Profile::MiniNy => "mini-ny",
            Profile::NyMembership => "ny-membership",
            Profile::Ibm => "ibm",
            Profile::Creswick => "creswick",
            Profile::Geneva => "geneva",
            Profile::UptonBerkeley => "upton-berkeley",
            Profile::AnnArborDetroit => "ann-arbor-detroit",
            Profile::Random(_) => "random",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `random` takes an optional paper count, as in `random:5000`.
impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "mini-ny" => Profile::MiniNy,
            "ny-membership" => Profile::NyMembership,
            "ibm" => Profile::Ibm,
            "creswick" => Profile::Creswick,
            "geneva" => Profile::Geneva,
            "upton-berkeley" => Profile::UptonBerkeley,
            "ann-arbor-detroit" => Profile::AnnArborDetroit,
            "random" => Profile::Random(RandomSpec::default()),
            other => match other.strip_prefix("random:") {
                Some(n) => Profile::Random(RandomSpec {
                    papers: n.parse().map_err(|_| format!("bad paper count '{n}'"))?,
                    ..RandomSpec::default()
                }),
                None => {
                    return Err(format!(
                        "unknown profile '{other}' (expected one of {})",
                        Profile::NAMES.join(", ")
                    ))
                }
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub profile: Profile,
    pub seed: u64,
    pub gazetteer: Gazetteer,
    pub membership: Option<MembershipTable>,
    pub institutions: Option<InstitutionRegistry>,
    pub travel_times: Vec<TravelTimeEdge>,
    /// Parsed but unresolved records.
    pub records: Vec<PublicationRecord>,
    pub expected: BTreeMap<String, f64>,
}

impl Fixture {
    pub fn corpus(&self) -> Corpus {
        Corpus::with_records(self.records.clone(), Vec::new(), Vec::new())
    }

    pub fn resolved_corpus(&self) -> Corpus {
        self.gazetteer.resolve_corpus(&self.corpus())
    }

    pub fn expect(&self, key: &str) -> f64 {
        self.expected[key]
    }

    /// File name and content of every artifact.
    pub fn files(&self) -> io::Result<Vec<(&'static str, Vec<u8>)>> {
        let mut out = Vec::new();
        let mut corpus = Vec::new();
        for r in &self.records {
            write_record_jsonl(r, &mut corpus)?;
        }
        out.push(("corpus.jsonl", corpus));
        let mut g = Vec::new();
        self.gazetteer.write_csv(&mut g).map_err(io::Error::other)?;
        out.push(("gazetteer.csv", g));
        if let Some(m) = &self.membership {
            let mut buf = Vec::new();
            m.write_csv(&mut buf).map_err(io::Error::other)?;
            out.push(("membership.csv", buf));
        }
        if let Some(i) = &self.institutions {
            let mut buf = Vec::new();
            i.write_csv(&mut buf).map_err(io::Error::other)?;
            out.push(("institutions.csv", buf));
        }
        if !self.travel_times.is_empty() {
            let mut buf = Vec::new();
            write_travel_times(&self.travel_times, &mut buf).map_err(io::Error::other)?;
            out.push(("travel_times.csv", buf));
        }
        let mut expected = serde_json::to_vec_pretty(&self.expected)?;
        expected.push(b'\n');
        out.push(("expected.json", expected));
        Ok(out)
    }
}

pub fn generate(profile: Profile, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = match profile {
        Profile::MiniNy => mini_ny(&mut rng),
        Profile::NyMembership => ny_membership(&mut rng),
        Profile::Ibm => ibm(&mut rng),
        Profile::Creswick => creswick(&mut rng),
        Profile::Geneva => geneva(&mut rng),
        Profile::UptonBerkeley => upton_berkeley(&mut rng),
        Profile::AnnArborDetroit => ann_arbor_detroit(&mut rng),
        Profile::Random(spec) => {
            let world = RandomWorld::new(spec, seed);
            let records: Vec<PublicationRecord> = world.records(seed).collect();
            let mut expected = BTreeMap::new();
            expected.insert("papers".into(), records.len() as f64);
            Fixture {
                profile,
                seed,
                membership: Some(world.membership.clone()),
                gazetteer: world.gazetteer,
                institutions: None,
                travel_times: Vec::new(),
                records,
                expected,
            }
        }
    };
    f.profile = profile;
    f.seed = seed;
    f
}

struct Place {
    id: &'static str,
    name: &'static str,
    admin: Option<&'static str>,
    country: &'static str,
    lat: f64,
    lon: f64,
    population: u64,
    kind: SettlementType,
}

const fn us(
    id: &'static str,
    name: &'static str,
    admin: &'static str,
    lat: f64,
    lon: f64,
    population: u64,
    kind: SettlementType,
) -> Place {
    Place {
        id,
        name,
        admin: Some(admin),
        country: "USA",
        lat,
        lon,
        population,
        kind,
    }
}

impl Place {
    fn locality(&self) -> Locality {
        let mut l = Locality::new(self.id, self.name, self.country, self.lat, self.lon)
            .with_population(self.population)
            .with_type(self.kind);
        if let Some(a) = self.admin {
            l = l.with_admin(a);
        }
        l
    }

    fn raw(&self, institution: &str) -> String {
        match self.admin {
            Some(a) => format!("{institution}, {}, {a}, {}", self.name, self.country),
            None => format!("{institution}, {}, {}", self.name, self.country),
        }
    }
}

use SettlementType::{Borough, City, Hamlet, Town, Township};

// members of the metro, the first 25 of which publish
const NY_PLACES: [Place; 30] = [
    us(
        "new-york-city-ny",
        "New York City",
        "NY",
        40.7128,
        -74.0060,
        8_336_817,
        City,
    ),
    us("new-haven-ct", "New Haven", "CT", 41.3083, -72.9279, 134_023, City),
    us("princeton-nj", "Princeton", "NJ", 40.3573, -74.6672, 30_681, Borough),
    us("rochester-ny", "Rochester", "NY", 41.7826, -74.2549, 7_500, Town),
    us(
        "new-brunswick-nj",
        "New Brunswick",
        "NJ",
        40.4862,
        -74.4518,
        55_266,
        City,
    ),
    us("piscataway-nj", "Piscataway", "NJ", 40.5549, -74.4643, 60_804, Township),
    us("newark-nj", "Newark", "NJ", 40.7357, -74.1724, 311_549, City),
    us("bethlehem-pa", "Bethlehem", "PA", 40.6259, -75.3705, 75_781, City),
    us("west-haven-ct", "West Haven", "CT", 41.2707, -72.9470, 55_584, City),
    us(
        "east-hanover-nj",
        "East Hanover",
        "NJ",
        40.8201,
        -74.3649,
        11_157,
        Township,
    ),
    us("kenilworth-nj", "Kenilworth", "NJ", 40.6765, -74.2907, 8_427, Borough),
    us("hempstead-ny", "Hempstead", "NY", 40.7062, -73.6187, 793_409, Town),
    us("orange-nj", "Orange", "NJ", 40.7707, -74.2326, 34_447, Township),
    us("hyde-park-ny", "Hyde Park", "NY", 41.7843, -73.9332, 21_021, Town),
    us("hoboken-nj", "Hoboken", "NJ", 40.7440, -74.0324, 60_419, City),
    us("hackensack-nj", "Hackensack", "NJ", 40.8859, -74.0435, 46_030, City),
    us("raritan-nj", "Raritan", "NJ", 40.5695, -74.6329, 8_247, Borough),
    us("summit-nj", "Summit", "NJ", 40.7157, -74.3646, 22_719, City),
    us("rahway-nj", "Rahway", "NJ", 40.6082, -74.2776, 29_556, City),
    us("montclair-nj", "Montclair", "NJ", 40.8259, -74.2090, 40_921, Township),
    us("allentown-pa", "Allentown", "PA", 40.6023, -75.4714, 125_845, City),
    us(
        "bridgewater-nj",
        "Bridgewater",
        "NJ",
        40.5940,
        -74.6049,
        45_977,
        Township,
    ),
    us("ridgefield-ct", "Ridgefield", "CT", 41.2815, -73.4982, 25_207, Town),
    us("white-plains-ny", "White Plains", "NY", 41.0340, -73.7629, 59_559, City),
    us("morristown-nj", "Morristown", "NJ", 40.7968, -74.4815, 20_180, Town),
    us("yonkers-ny", "Yonkers", "NY", 40.9312, -73.8988, 211_569, City),
    us("paterson-nj", "Paterson", "NJ", 40.9168, -74.1718, 159_732, City),
    us("stamford-ct", "Stamford", "CT", 41.0534, -73.5387, 135_470, City),
    us("trenton-nj", "Trenton", "NJ", 40.2171, -74.7429, 90_871, City),
    us("edison-nj", "Edison", "NJ", 40.5187, -74.4121, 107_588, Township),
];

const NY_OUTPUT: [u64; 25] = [
    39_646, 9_578, 5_020, 4_311, 2_651, 2_357, 2_215, 839, 806, 722, 722, 412, 341, 338, 326, 318, 313, 311, 299, 298,
    298, 269, 220, 216, 212,
];

// CSA-only members; the rest are also in the MSA
const NY_CSA_ONLY: [&str; 8] = [
    "new-haven-ct",
    "princeton-nj",
    "rochester-ny",
    "bethlehem-pa",
    "west-haven-ct",
    "allentown-pa",
    "ridgefield-ct",
    "stamford-ct",
];

const OUTSIDE_PLACES: [Place; 3] = [
    us("boston-ma", "Boston", "MA", 42.3601, -71.0589, 675_647, City),
    us(
        "philadelphia-pa",
        "Philadelphia",
        "PA",
        39.9526,
        -75.1652,
        1_603_797,
        City,
    ),
    us("washington-dc", "Washington", "DC", 38.9072, -77.0369, 689_545, City),
];

const UNIVERSITIES: [&str; 6] = [
    "Columbia Univ",
    "Rutgers State Univ",
    "Yale Univ",
    "Princeton Univ",
    "Merck & Co Inc",
    "Lehigh Univ",
];

fn record(id: String, year: i32, raws: &[String]) -> PublicationRecord {
    PublicationRecord {
        id,
        year,
        affiliations: raws
            .iter()
            .map(|r| parse_affiliation(r).expect("fixture affiliation parses"))
            .collect(),
    }
}

fn empty_fixture(gazetteer: Gazetteer) -> Fixture {
    Fixture {
        profile: Profile::MiniNy,
        seed: 0,
        gazetteer,
        membership: None,
        institutions: None,
        travel_times: Vec::new(),
        records: Vec::new(),
        expected: BTreeMap::new(),
    }
}

fn gazetteer_of<'a>(places: impl IntoIterator<Item = &'a Place>) -> Gazetteer {
    Gazetteer::new(places.into_iter().map(Place::locality).collect()).expect("fixture gazetteer is valid")
}

/// 92 papers over a 30-locality metro: 76 single-locality, 8 joining two
/// member localities, 8 joining a member with an outside city.
fn mini_ny(rng: &mut ChaCha8Rng) -> Fixture {
    let mut f = empty_fixture(gazetteer_of(NY_PLACES.iter().chain(&OUTSIDE_PLACES)));
    let mut membership = MembershipTable::new();
    for p in &NY_PLACES {
        let id = LocalityId::from(p.id);
        membership.insert(id.clone(), "NY-CSA", Tier::Csa).expect("unique");
        if !NY_CSA_ONLY.contains(&p.id) {
            membership.insert(id, "NY-MSA", Tier::Msa).expect("unique");
        }
    }
    f.membership = Some(membership);

    let active = &NY_PLACES[..25];
    let mut n = 0;
    let mut next_id = || {
        n += 1;
        format!("mini-ny-{n:04}")
    };
    let inst = |rng: &mut ChaCha8Rng| UNIVERSITIES[rng.gen_range(0..UNIVERSITIES.len())];

    // one paper per active place, the rest apportioned by reported output
    let mut singles: Vec<usize> = (0..active.len()).collect();
    let total: u64 = NY_OUTPUT.iter().sum();
    let extra = 76 - active.len() as u64;
    let mut quotas: Vec<(u64, u64, usize)> = NY_OUTPUT
        .iter()
        .enumerate()
        .map(|(i, &w)| (w * extra / total, w * extra % total, i))
        .collect();
    let short = extra - quotas.iter().map(|q| q.0).sum::<u64>();
    quotas.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    for q in quotas.iter_mut().take(short as usize) {
        q.0 += 1;
    }
    quotas.sort_by_key(|q| q.2);
    for (q, _, i) in quotas {
        singles.extend(std::iter::repeat_n(i, q as usize));
    }
    singles.shuffle(rng);
    for i in singles {
        let raws = [active[i].raw(inst(rng))];
        f.records.push(record(next_id(), 2016, &raws));
    }
    for _ in 0..8 {
        let pair: Vec<&Place> = active.choose_multiple(rng, 2).collect();
        let raws = [pair[0].raw(inst(rng)), pair[1].raw(inst(rng))];
        f.records.push(record(next_id(), 2016, &raws));
    }
    for _ in 0..8 {
        let inside = active.choose(rng).expect("non-empty");
        let outside = OUTSIDE_PLACES.choose(rng).expect("non-empty");
        let raws = [inside.raw(inst(rng)), outside.raw("Harvard Univ")];
        f.records.push(record(next_id(), 2016, &raws));
    }
    f.expected = BTreeMap::from([
        ("metro_members".to_string(), 30.0),
        ("zero_paper_members".to_string(), 5.0),
        ("integer_sum".to_string(), 100.0),
        ("dedup".to_string(), 92.0),
        ("fractional".to_string(), 88.0),
        ("papers".to_string(), 92.0),
        ("dedup_over_integer_ratio".to_string(), 0.92),
    ]);
    f
}

/// Lowercase letter syllables encoding `i`, capitalized.
fn syllable_name(mut i: usize) -> String {
    const SYL: [&str; 16] = [
        "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "ba", "de", "fo", "gu", "ha", "ji", "pe", "zo",
    ];
    let mut s = String::new();
    loop {
        s.push_str(SYL[i % SYL.len()]);
        i /= SYL.len();
        if i == 0 {
            break;
        }
    }
    let mut c = s.chars();
    let first = c.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

/// 466 MSA members plus 242 CSA-only members.
fn ny_membership(rng: &mut ChaCha8Rng) -> Fixture {
    const STATES: [&str; 4] = ["NY", "NJ", "CT", "PA"];
    let mut localities = Vec::new();
    let mut membership = MembershipTable::new();
    for i in 0..708 {
        let msa = i < 466;
        let id = if msa {
            format!("ny-msa-{:03}", i + 1)
        } else {
            format!("ny-csa-{:03}", i - 465)
        };
        let lat = 40.7 + rng.gen_range(-0.6..0.6);
        let lon = -74.0 + rng.gen_range(-0.8..0.8);
        let kind = [City, Town, Borough, Township][i % 4];
        localities.push(
            Locality::new(&id, &format!("{}ville", syllable_name(i)), "USA", lat, lon)
                .with_admin(STATES[i % 4])
                .with_population(rng.gen_range(1_000..200_000))
                .with_type(kind),
        );
        let lid = LocalityId::from(id.as_str());
        membership.insert(lid.clone(), "NY-CSA", Tier::Csa).expect("unique");
        if msa {
            membership.insert(lid, "NY-MSA", Tier::Msa).expect("unique");
        }
    }
    let mut f = empty_fixture(Gazetteer::new(localities).expect("fixture gazetteer is valid"));
    f.membership = Some(membership);
    for n in 0..300 {
        let l = &f.gazetteer.localities()[rng.gen_range(0..708)];
        let raws = [format!(
            "Inst {}, {}, {}, USA",
            syllable_name(n % 7),
            l.name,
            l.admin_name.as_deref().unwrap_or_default()
        )];
        f.records.push(record(format!("ny-membership-{n:04}"), 2016, &raws));
    }
    f.expected = BTreeMap::from([
        ("msa_members".to_string(), 466.0),
        ("csa_members".to_string(), 708.0),
        ("papers".to_string(), 300.0),
    ]);
    f
}

const IBM_PLACES: [Place; 7] = [
    us("armonk-ny", "Armonk", "NY", 41.1265, -73.7140, 4_330, Hamlet),
    us(
        "yorktown-heights-ny",
        "Yorktown Heights",
        "NY",
        41.2709,
        -73.7776,
        1_781,
        Hamlet,
    ),
    us("san-jose-ca", "San Jose", "CA", 37.3382, -121.8863, 1_013_240, City),
    us("san-diego-ca", "San Diego", "CA", 32.7157, -117.1611, 1_386_932, City),
    us("cambridge-ma", "Cambridge", "MA", 42.3736, -71.1097, 118_403, City),
    us("austin-tx", "Austin", "TX", 30.2672, -97.7431, 961_855, City),
    us(
        "new-york-city-ny",
        "New York City",
        "NY",
        40.7128,
        -74.0060,
        8_336_817,
        City,
    ),
];

/// 876 papers mentioning IBM, 30 of them reported from Armonk.
fn ibm(rng: &mut ChaCha8Rng) -> Fixture {
    let mut places: Vec<Place> = IBM_PLACES.into_iter().collect();
    places.push(Place {
        id: "ruschlikon-ch",
        name: "Rüschlikon",
        admin: None,
        country: "Switzerland",
        lat: 47.3070,
        lon: 8.5560,
        population: 6_000,
        kind: SettlementType::Village,
    });
    let mut f = empty_fixture(gazetteer_of(&places));
    f.institutions = Some(
        InstitutionRegistry::new(
            vec![
                Institution::new("ibm", "IBM Corp", "armonk-ny")
                    .with_alt_name("IBM")
                    .with_alt_name("IBM Res"),
                Institution::new("columbia", "Columbia Univ", "new-york-city-ny"),
                Institution::new("mit", "MIT", "cambridge-ma"),
            ],
            &f.gazetteer,
        )
        .expect("fixture registry is valid"),
    );
    let elsewhere: Vec<&Place> = places.iter().filter(|p| p.id != "armonk-ny").collect();
    let mut at_hq: Vec<bool> = (0..876).map(|i| i < 30).collect();
    at_hq.shuffle(rng);
    for (n, hq) in at_hq.into_iter().enumerate() {
        let place = if hq {
            &places[0]
        } else {
            *elsewhere.choose(rng).expect("non-empty")
        };
        let name = ["IBM Corp", "IBM", "IBM Res"][rng.gen_range(0..3)];
        let mut raws = vec![place.raw(name)];
        match rng.gen_range(0..4) {
            0 => raws.push(places[6].raw("Columbia Univ")),
            1 => raws.push(places[4].raw("MIT")),
            _ => {}
        }
        f.records.push(record(format!("ibm-{n:04}"), 2016, &raws));
    }
    for n in 0..40 {
        let raws = [places[4].raw("MIT"), places[6].raw("Columbia Univ")];
        f.records.push(record(format!("other-{n:04}"), 2016, &raws));
    }
    f.expected = BTreeMap::from([("ibm_total".to_string(), 876.0), ("ibm_at_hq".to_string(), 30.0)]);
    f
}

/// 49 University of Melbourne papers reported from Creswick, 151 from Melbourne.
fn creswick(rng: &mut ChaCha8Rng) -> Fixture {
    let places = [
        Place {
            id: "melbourne-au",
            name: "Melbourne",
            admin: Some("VIC"),
            country: "Australia",
            lat: -37.8136,
            lon: 144.9631,
            population: 5_078_193,
            kind: City,
        },
        Place {
            id: "creswick-au",
            name: "Creswick",
            admin: Some("VIC"),
            country: "Australia",
            lat: -37.4240,
            lon: 143.8940,
            population: 3_170,
            kind: Town,
        },
    ];
    let mut f = empty_fixture(gazetteer_of(&places));
    f.institutions =
        Some(
            InstitutionRegistry::new(
                vec![Institution::new("unimelb", "Univ Melbourne", "melbourne-au")
                    .with_alt_name("University of Melbourne")],
                &f.gazetteer,
            )
            .expect("fixture registry is valid"),
        );
    let mut from_creswick: Vec<bool> = (0..200).map(|i| i < 49).collect();
    from_creswick.shuffle(rng);
    for (n, c) in from_creswick.into_iter().enumerate() {
        let raw = if c {
            "Univ Melbourne, Sch Ecosyst & Forest Sci, Creswick, VIC 3363, Australia".to_string()
        } else {
            format!(
                "Univ Melbourne, Dept {}, Parkville, Melbourne, VIC 3010, Australia",
                syllable_name(n % 9)
            )
        };
        f.records.push(record(format!("creswick-{n:04}"), 2016, &[raw]));
    }
    f.expected = BTreeMap::from([
        ("unimelb_total".to_string(), 200.0),
        ("unimelb_at_hq".to_string(), 151.0),
        ("creswick_off_hq".to_string(), 49.0),
    ]);
    f
}

/// CERN and the University of Geneva co-author 340 papers, the University
/// and WHO 45, CERN and WHO none.
fn geneva(rng: &mut ChaCha8Rng) -> Fixture {
    let ch = |id, name, lat, lon, population, kind| Place {
        id,
        name,
        admin: None,
        country: "Switzerland",
        lat,
        lon,
        population,
        kind,
    };
    let places = [
        ch("geneva-ch", "Geneva", 46.2044, 6.1432, 203_856, City),
        ch("meyrin-ch", "Meyrin", 46.2342, 6.0800, 26_000, Town),
        ch("lausanne-ch", "Lausanne", 46.5197, 6.6323, 140_202, City),
    ];
    let mut f = empty_fixture(
        Gazetteer::new(
            places
                .iter()
                .map(|p| {
                    let l = p.locality();
                    if p.id == "geneva-ch" {
                        l.with_alt_name("Genève")
                    } else {
                        l
                    }
                })
                .collect(),
        )
        .expect("fixture gazetteer is valid"),
    );
    let mut membership = MembershipTable::new();
    for id in ["geneva-ch", "meyrin-ch"] {
        membership
            .insert(LocalityId::from(id), "geneva-metro", Tier::Custom)
            .expect("unique");
    }
    f.membership = Some(membership);
    f.institutions = Some(
        InstitutionRegistry::new(
            vec![
                Institution::new("cern", "CERN", "meyrin-ch")
                    .with_alt_name("European Organization for Nuclear Research"),
                Institution::new("unige", "Univ Geneva", "geneva-ch"),
                Institution::new("who", "World Health Org", "geneva-ch").with_alt_name("WHO"),
                Institution::new("epfl", "EPFL", "lausanne-ch"),
            ],
            &f.gazetteer,
        )
        .expect("fixture registry is valid"),
    );
    // most CERN authors report Geneva rather than Meyrin
    let cern = |rng: &mut ChaCha8Rng| {
        if rng.gen_range(0..20) == 0 {
            "CERN, Meyrin, Switzerland".to_string()
        } else {
            "CERN, Geneva, Switzerland".to_string()
        }
    };
    let unige = |rng: &mut ChaCha8Rng| {
        format!(
            "Univ Geneva, Dept {}, Geneva, Switzerland",
            syllable_name(rng.gen_range(0..5))
        )
    };
    let who = "World Health Org, Geneva, Switzerland".to_string();
    let epfl = "EPFL, Lausanne, Switzerland".to_string();
    let mut kinds: Vec<u8> = std::iter::repeat_n(0u8, 340)
        .chain(std::iter::repeat_n(1, 45))
        .chain(std::iter::repeat_n(2, 120))
        .chain(std::iter::repeat_n(3, 200))
        .chain(std::iter::repeat_n(4, 100))
        .chain(std::iter::repeat_n(5, 30))
        .collect();
    kinds.shuffle(rng);
    for (n, k) in kinds.into_iter().enumerate() {
        let raws = match k {
            0 => vec![cern(rng), unige(rng)],
            1 => vec![unige(rng), who.clone()],
            2 => vec![cern(rng)],
            3 => vec![unige(rng)],
            4 => vec![who.clone()],
            _ => vec![cern(rng), epfl.clone()],
        };
        f.records.push(record(format!("geneva-{n:04}"), 2016, &raws));
    }
    f.expected = BTreeMap::from([
        ("cern_unige".to_string(), 340.0),
        ("unige_who".to_string(), 45.0),
        ("cern_who".to_string(), 0.0),
    ]);
    f
}

/// 228 papers joining Upton with Berkeley and no other cross-metro links.
fn upton_berkeley(rng: &mut ChaCha8Rng) -> Fixture {
    let places = [
        us("upton-ny", "Upton", "NY", 40.8690, -72.8868, 1_000, Hamlet),
        us("stony-brook-ny", "Stony Brook", "NY", 40.9257, -73.1409, 13_740, Hamlet),
        us(
            "new-york-city-ny",
            "New York City",
            "NY",
            40.7128,
            -74.0060,
            8_336_817,
            City,
        ),
        us("berkeley-ca", "Berkeley", "CA", 37.8715, -122.2730, 121_643, City),
        us("oakland-ca", "Oakland", "CA", 37.8044, -122.2712, 433_031, City),
        us(
            "san-francisco-ca",
            "San Francisco",
            "CA",
            37.7749,
            -122.4194,
            873_965,
            City,
        ),
    ];
    let mut f = empty_fixture(gazetteer_of(&places));
    let mut membership = MembershipTable::new();
    for (i, p) in places.iter().enumerate() {
        let metro = if i < 3 { "NY-CSA" } else { "SF-CSA" };
        membership
            .insert(LocalityId::from(p.id), metro, Tier::Csa)
            .expect("unique");
    }
    f.membership = Some(membership);
    let bnl = |p: &Place| p.raw("Brookhaven Natl Lab");
    let lbnl = |rng: &mut ChaCha8Rng, p: &Place| {
        p.raw(["Lawrence Berkeley Natl Lab", "Univ Calif Berkeley"][rng.gen_range(0..2)])
    };
    let mut kinds: Vec<u8> = std::iter::repeat_n(0u8, 228)
        .chain(std::iter::repeat_n(1, 150))
        .chain(std::iter::repeat_n(2, 250))
        .chain(std::iter::repeat_n(3, 60))
        .collect();
    kinds.shuffle(rng);
    for (n, k) in kinds.into_iter().enumerate() {
        let raws = match k {
            0 => vec![bnl(&places[0]), lbnl(rng, &places[3])],
            1 => vec![bnl(&places[0])],
            2 => vec![lbnl(rng, &places[3])],
            _ => vec![bnl(&places[0]), places[1].raw("SUNY Stony Brook")],
        };
        f.records.push(record(format!("upton-berkeley-{n:04}"), 2016, &raws));
    }
    f.expected = BTreeMap::from([
        ("upton_berkeley".to_string(), 228.0),
        ("ny_sf_cell".to_string(), 228.0),
        ("upton_berkeley_links".to_string(), 1.0),
    ]);
    f
}

/// Ann Arbor sits in the Detroit combined area but beyond 40 km of any member.
fn ann_arbor_detroit(rng: &mut ChaCha8Rng) -> Fixture {
    let places = [
        us("detroit-mi", "Detroit", "MI", 42.3314, -83.0458, 639_111, City),
        us("dearborn-mi", "Dearborn", "MI", 42.3223, -83.1763, 109_976, City),
        us("warren-mi", "Warren", "MI", 42.5145, -83.0147, 139_387, City),
        us("ann-arbor-mi", "Ann Arbor", "MI", 42.2808, -83.7430, 123_851, City),
        us("lansing-mi", "Lansing", "MI", 42.7325, -84.5555, 112_644, City),
    ];
    let mut f = empty_fixture(gazetteer_of(&places));
    let mut membership = MembershipTable::new();
    for p in &places[..4] {
        membership
            .insert(LocalityId::from(p.id), "detroit-csa", Tier::Csa)
            .expect("unique");
    }
    f.membership = Some(membership);
    f.travel_times = vec![
        TravelTimeEdge::new("ann-arbor-mi", "detroit-mi", 42.0),
        TravelTimeEdge::new("detroit-mi", "lansing-mi", 85.0),
    ];
    for n in 0..120 {
        let a = &places[rng.gen_range(0..places.len())];
        let mut raws = vec![a.raw("Univ Michigan")];
        if rng.gen_bool(0.3) {
            let b = &places[rng.gen_range(0..places.len())];
            if b.id != a.id {
                raws.push(b.raw("Wayne State Univ"));
            }
        }
        f.records.push(record(format!("ann-arbor-{n:04}"), 2016, &raws));
    }
    f.expected = BTreeMap::from([("changed_localities".to_string(), 1.0)]);
    f
}

/// Random gazetteer and membership from which record streams are drawn.
#[derive(Debug, Clone)]
pub struct RandomWorld {
    pub spec: RandomSpec,
    pub gazetteer: Gazetteer,
    pub membership: MembershipTable,
    clusters: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
}

const RANDOM_COUNTRIES: [&str; 4] = ["USA", "Germany", "Japan", "Hungary"];
const RANDOM_STATES: [&str; 5] = ["NY", "CA", "TX", "MA", "IL"];

impl RandomWorld {
    pub fn new(spec: RandomSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = spec.clusters.clamp(1, spec.localities.max(1));
        let centers: Vec<(f64, f64, usize)> = (0..k)
            .map(|c| {
                (
                    rng.gen_range(-50.0..60.0),
                    rng.gen_range(-170.0..170.0),
                    c % RANDOM_COUNTRIES.len(),
                )
            })
            .collect();
        let mut clusters = vec![Vec::new(); k];
        let mut cluster_of = Vec::with_capacity(spec.localities);
        let mut localities = Vec::with_capacity(spec.localities);
        for i in 0..spec.localities {
            let c = i % k;
            let (clat, clon, country) = centers[c];
            let lat: f64 = clat + rng.gen_range(-0.3..0.3);
            let lon = clon + rng.gen_range(-0.3..0.3) / lat.to_radians().cos();
            let mut l = Locality::new(
                &format!("loc-{i:05}"),
                &syllable_name(i + 16),
                RANDOM_COUNTRIES[country],
                lat,
                lon,
            )
            .with_type([City, Town, Borough, Township, Hamlet][rng.gen_range(0..5)]);
            if rng.gen_range(0..20) != 0 {
                l = l.with_population(rng.gen_range(500..3_000_000));
            }
            if country == 0 {
                l = l.with_admin(RANDOM_STATES[c % RANDOM_STATES.len()]);
            }
            clusters[c].push(i);
            cluster_of.push(c);
            localities.push(l);
        }
        let mut membership = MembershipTable::new();
        for (c, members) in clusters.iter().enumerate() {
            if c % 3 == 0 {
                continue;
            }
            for (j, &i) in members.iter().enumerate() {
                let id = localities[i].id.clone();
                membership
                    .insert(id.clone(), &format!("M{c:03}"), Tier::Csa)
                    .expect("unique");
                if j % 2 == 0 {
                    membership.insert(id, &format!("M{c:03}"), Tier::Msa).expect("unique");
                }
            }
        }
        RandomWorld {
            spec,
            gazetteer: Gazetteer::new(localities).expect("random gazetteer is valid"),
            membership,
            clusters,
            cluster_of,
        }
    }

    fn raw(&self, rng: &mut ChaCha8Rng, i: usize) -> String {
        let l = &self.gazetteer.localities()[i];
        let inst = format!("Inst {}", syllable_name(rng.gen_range(0..40)));
        match l.country.as_str() {
            "USA" => format!(
                "{inst}, {}, {}, USA",
                l.name,
                l.admin_name.as_deref().unwrap_or_default()
            ),
            "Germany" => format!(
                "{inst}, Dept {}, D-{:05} {}, Germany",
                syllable_name(rng.gen_range(0..8)),
                rng.gen_range(10_000..99_999),
                l.name
            ),
            "Japan" => format!("{inst}, {}, {:07}, Japan", l.name, rng.gen_range(1_000_000..9_999_999)),
            _ => format!("{inst}, {}, {}", l.name, l.country),
        }
    }

    fn paper(&self, rng: &mut ChaCha8Rng, n: usize) -> PublicationRecord {
        let locs = self.gazetteer.len();
        let k = rng.gen_range(1..=self.spec.max_affiliations.max(1));
        let first = rng.gen_range(0..locs);
        let mut raws: Vec<String> = Vec::with_capacity(k);
        let mut seen = BTreeSet::new();
        for j in 0..k {
            let raw = if rng.gen_range(0..1000) < self.spec.unresolved_per_mille {
                format!("Lab {}, Atlantis City, Atlantis", syllable_name(rng.gen_range(0..30)))
            } else {
                let i = if j == 0 {
                    first
                } else if rng.gen_bool(0.6) {
                    *self.clusters[self.cluster_of[first]].choose(rng).expect("non-empty")
                } else {
                    rng.gen_range(0..locs)
                };
                self.raw(rng, i)
            };
            if seen.insert(raw.clone()) {
                raws.push(raw);
            }
        }
        record(format!("r{n:08}"), rng.gen_range(2014..=2018), &raws)
    }

    /// Deterministic record stream for `seed`, independent of the world seed.
    pub fn records(&self, seed: u64) -> impl Iterator<Item = PublicationRecord> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        (0..self.spec.papers).map(move |n| self.paper(&mut rng, n))
    }
}
