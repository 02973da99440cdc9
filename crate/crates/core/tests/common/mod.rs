//! Brute-force oracles written independently of the library code paths.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use cityometrics::delineation::Partition;
use cityometrics::gazetteer::{Gazetteer, Locality};
use cityometrics::record::Corpus;
use cityometrics::Rational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn great_circle_km(a: &Locality, b: &Locality) -> f64 {
    let r = 6371.0088_f64;
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

/// Connected components of the graph joining localities at most `d` km apart.
pub fn bfs_components(g: &Gazetteer, d: f64) -> BTreeSet<BTreeSet<String>> {
    let ls = g.localities();
    let n = ls.len();
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = BTreeSet::new();
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            comp.insert(ls[i].id.to_string());
            for j in 0..n {
                if !seen[j] && great_circle_km(&ls[i], &ls[j]) <= d {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        out.insert(comp);
    }
    out
}

/// Member sets of every unit of a partition.
pub fn groups(p: &Partition) -> BTreeSet<BTreeSet<String>> {
    (0..p.unit_ids().len())
        .map(|u| p.unit_members(u).iter().map(|l| l.to_string()).collect())
        .collect()
}

/// Up to `max` localities in one of a few small regions, including one that
/// straddles the antimeridian.
pub fn random_gazetteer(rng: &mut ChaCha8Rng, max: usize) -> Gazetteer {
    let n = rng.gen_range(1..=max);
    let region = rng.gen_range(0..3);
    let ls = (0..n)
        .map(|i| {
            let (lat, lon): (f64, f64) = match region {
                0 => (rng.gen_range(40.0..41.0), rng.gen_range(10.0..11.3)),
                1 => (rng.gen_range(-1.0..1.0), rng.gen_range(-0.6..0.6)),
                _ => {
                    let lon: f64 = rng.gen_range(179.4..180.6);
                    (rng.gen_range(64.0..65.0), if lon > 180.0 { lon - 360.0 } else { lon })
                }
            };
            let mut l = Locality::new(&format!("g{i:03}"), &format!("Place{i}"), "Testland", lat, lon);
            if rng.gen_bool(0.9) {
                l = l.with_population(rng.gen_range(100..1_000_000));
            }
            l
        })
        .collect();
    Gazetteer::new(ls).unwrap()
}

#[derive(Debug, Default, PartialEq)]
pub struct BruteCounts {
    pub integer: BTreeMap<String, u64>,
    pub integer_sum: BTreeMap<String, u64>,
    pub dedup: BTreeMap<String, u64>,
    pub fractional: BTreeMap<String, Rational>,
    pub papers: u64,
}

/// Locality and unit credits tallied paper by paper.
pub fn brute_counts(corpus: &Corpus, unit: &dyn Fn(&str) -> String, by_instance: bool) -> BruteCounts {
    let mut c = BruteCounts::default();
    for r in &corpus.records {
        let inst: Vec<String> = r
            .affiliations
            .iter()
            .filter_map(|a| a.resolved_locality.as_ref().map(|l| l.to_string()))
            .collect();
        if inst.is_empty() {
            continue;
        }
        c.papers += 1;
        let locs: BTreeSet<String> = inst.iter().cloned().collect();
        for l in &locs {
            *c.integer.entry(l.clone()).or_default() += 1;
            *c.integer_sum.entry(unit(l)).or_default() += 1;
        }
        let units: BTreeSet<String> = locs.iter().map(|l| unit(l)).collect();
        for u in units {
            *c.dedup.entry(u).or_default() += 1;
        }
        let basis: Vec<&String> = if by_instance {
            inst.iter().collect()
        } else {
            locs.iter().collect()
        };
        let share = Rational::new(1, basis.len() as i128);
        for l in basis {
            *c.fractional.entry(unit(l)).or_insert(Rational::from_integer(0)) += share;
        }
    }
    c
}

pub type Cells<T> = BTreeMap<(String, String), T>;

/// Per-pair integer and fractional weights, plus diagonal counts.
pub fn brute_dyads(corpus: &Corpus, unit: &dyn Fn(&str) -> String) -> (Cells<u64>, Cells<Rational>) {
    let mut int = BTreeMap::new();
    let mut frac = BTreeMap::new();
    for r in &corpus.records {
        let locs: BTreeSet<String> = r
            .affiliations
            .iter()
            .filter_map(|a| a.resolved_locality.as_ref().map(|l| l.to_string()))
            .collect();
        let mut per_unit: BTreeMap<String, usize> = BTreeMap::new();
        for l in &locs {
            *per_unit.entry(unit(l)).or_default() += 1;
        }
        let us: Vec<&String> = per_unit.keys().collect();
        let k = us.len() as i128;
        for i in 0..us.len() {
            for j in i + 1..us.len() {
                let key = (us[i].clone(), us[j].clone());
                *int.entry(key.clone()).or_default() += 1;
                *frac.entry(key).or_insert(Rational::from_integer(0)) += Rational::new(2, k * (k - 1));
            }
        }
        for (u, n) in &per_unit {
            if *n >= 2 {
                *int.entry((u.clone(), u.clone())).or_default() += 1;
            }
        }
    }
    (int, frac)
}
