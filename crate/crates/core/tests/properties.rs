mod common;

use std::collections::{BTreeMap, BTreeSet};

use cityometrics::collab::{dyad_matrix, expand_links, DyadOptions, DyadRegime};
use cityometrics::counting::{
    dedup_count, fractional_count, integer_count, metro_integer_sum, paper_shares, AttributionPolicy, CountOptions,
    FractionalBasis,
};
use cityometrics::delineation::{delineate_distance, delineate_lookup, DistanceOptions, Partition};
use cityometrics::fixture::{RandomSpec, RandomWorld};
use cityometrics::gazetteer::{LocalityId, Tier};
use cityometrics::record::Corpus;
use cityometrics::{ExactCountReport, ExactDyadMatrix, Rational};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn world(seed: u64, papers: usize) -> (RandomWorld, Corpus, Partition) {
    let spec = RandomSpec {
        papers,
        localities: 60,
        clusters: 9,
        ..RandomSpec::default()
    };
    let w = RandomWorld::new(spec, seed);
    let raw = Corpus::with_records(w.records(seed).collect(), vec![], vec![]);
    let corpus = w.gazetteer.resolve_corpus(&raw);
    let p = delineate_lookup(&w.gazetteer, &w.membership, Tier::Csa).unwrap();
    (w, corpus, p)
}

fn unit_fn(p: &Partition) -> impl Fn(&str) -> String + '_ {
    move |l: &str| p.unit_ids()[p.unit_of(l).unwrap()].clone()
}

fn exact(m: &BTreeMap<String, u64>) -> BTreeMap<String, Rational> {
    m.iter()
        .map(|(k, &v)| (k.clone(), Rational::from_integer(v as i128)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shares_of_each_paper_sum_to_one(seed in any::<u64>()) {
        let (_, corpus, _) = world(seed, 150);
        for r in &corpus.records {
            let ids: Vec<&LocalityId> = r.affiliations.iter().filter_map(|a| a.resolved_locality.as_ref()).collect();
            let order: Vec<&LocalityId> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let inst: Vec<(&LocalityId, usize)> =
                ids.iter().map(|l| (*l, order.iter().position(|o| o == l).unwrap())).collect();
            for basis in [FractionalBasis::DistinctLocality, FractionalBasis::AddressInstance] {
                let total: Rational = paper_shares(&inst, basis)
                    .into_iter()
                    .map(|(_, n, d)| Rational::new(n as i128, d as i128))
                    .sum();
                prop_assert_eq!(total, Rational::from_integer(1));
            }
        }
    }

    #[test]
    fn counts_match_brute_force(seed in any::<u64>(), by_instance in any::<bool>()) {
        let (_, corpus, p) = world(seed, 200);
        let opts = CountOptions::default();
        let basis = if by_instance { FractionalBasis::AddressInstance } else { FractionalBasis::DistinctLocality };
        let unit = unit_fn(&p);
        let oracle = brute_counts(&corpus, &unit, by_instance);

        let loc: ExactCountReport = integer_count(&corpus, &opts).unwrap();
        prop_assert_eq!(&loc.credits, &exact(&oracle.integer));
        let sum = metro_integer_sum(&loc, &p).unwrap();
        prop_assert_eq!(&sum.credits, &exact(&oracle.integer_sum));
        let dedup: ExactCountReport = dedup_count(&corpus, &p, &opts).unwrap();
        prop_assert_eq!(&dedup.credits, &exact(&oracle.dedup));
        let frac: ExactCountReport =
            fractional_count(&corpus, &AttributionPolicy::metros(basis, &p), &opts).unwrap();
        prop_assert_eq!(&frac.credits, &oracle.fractional);
        prop_assert_eq!(frac.total(), Rational::from_integer(oracle.papers as i128));

        for u in p.unit_ids() {
            let (f, d, s) = (frac.credit(u), dedup.credit(u), sum.credit(u));
            prop_assert!(f <= d && d <= s, "{} {} {} {}", u, f, d, s);
        }
    }

    #[test]
    fn float_and_exact_reports_agree(seed in any::<u64>()) {
        let (_, corpus, p) = world(seed, 120);
        let policy = AttributionPolicy::metros(FractionalBasis::DistinctLocality, &p);
        let opts = CountOptions::default();
        let a: ExactCountReport = fractional_count(&corpus, &policy, &opts).unwrap();
        let b: cityometrics::CountReport = fractional_count(&corpus, &policy, &opts).unwrap();
        prop_assert_eq!(a.credits.len(), b.credits.len());
        for (k, v) in &a.credits {
            let x = *v.numer() as f64 / *v.denom() as f64;
            prop_assert!((x - b.credit(k)).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_partition_equals_bfs_components(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gazetteer(&mut rng, 100);
        let mut previous: Option<BTreeSet<BTreeSet<String>>> = None;
        for d in [10.0, 20.0, 40.0, 80.0] {
            let p = delineate_distance(&g, DistanceOptions::new(d)).unwrap();
            let got = groups(&p);
            prop_assert_eq!(&got, &bfs_components(&g, d));
            if let Some(prev) = &previous {
                for small in prev {
                    prop_assert!(got.iter().any(|big| small.is_subset(big)));
                }
            }
            previous = Some(got);
        }
    }

    #[test]
    fn dyads_match_pair_enumeration(seed in any::<u64>(), metro in any::<bool>(), diagonal in any::<bool>()) {
        let (_, corpus, p) = world(seed, 250);
        let mapping = metro.then_some(&p);
        let opts = DyadOptions { include_diagonal: diagonal, ..DyadOptions::default() };
        let unit: Box<dyn Fn(&str) -> String> = if metro {
            Box::new(unit_fn(&p))
        } else {
            Box::new(|l: &str| l.to_string())
        };
        let (mut int, frac) = brute_dyads(&corpus, &unit);
        if !(diagonal && metro) {
            int.retain(|(a, b), _| a != b);
        }
        let m: ExactDyadMatrix = dyad_matrix(&corpus, mapping, DyadRegime::Integer, &opts).unwrap();
        prop_assert_eq!(&m.cells, &exact_pairs(&int));
        let f: ExactDyadMatrix = dyad_matrix(&corpus, mapping, DyadRegime::Fractional, &opts).unwrap();
        prop_assert_eq!(&f.cells, &frac);
        let collaborative = corpus
            .records
            .iter()
            .filter(|r| {
                r.affiliations
                    .iter()
                    .filter_map(|a| a.resolved_locality.as_ref())
                    .map(|l| unit(l.as_str()))
                    .collect::<BTreeSet<_>>()
                    .len()
                    >= 2
            })
            .count();
        prop_assert_eq!(f.total_weight(), Rational::from_integer(collaborative as i128));
    }

    #[test]
    fn expansion_matches_enumeration(seed in any::<u64>()) {
        let (_, corpus, p) = world(seed, 300);
        let metros: Vec<&str> = p.metros().iter().map(|m| m.id.as_str()).collect();
        prop_assume!(metros.len() >= 2);
        let (m1, m2) = (metros[0], metros[1]);
        for (a, b) in [(m1, m2), (m1, m1)] {
            let e = expand_links(&corpus, &p, (a, b), &CountOptions::default()).unwrap();
            let mut oracle: BTreeMap<(String, String), u64> = BTreeMap::new();
            let mut cell = 0;
            for r in &corpus.records {
                let locs: BTreeSet<String> = r
                    .affiliations
                    .iter()
                    .filter_map(|x| x.resolved_locality.as_ref().map(|l| l.to_string()))
                    .collect();
                let in_a: Vec<&String> = locs.iter().filter(|l| p.metro_of(l).is_some_and(|m| m.id == a)).collect();
                let in_b: Vec<&String> = locs.iter().filter(|l| p.metro_of(l).is_some_and(|m| m.id == b)).collect();
                let mut touched = false;
                for x in &in_a {
                    for y in &in_b {
                        if a != b || x < y {
                            *oracle.entry(((*x).clone(), (*y).clone())).or_default() += 1;
                            touched = true;
                        }
                    }
                }
                cell += touched as u64;
            }
            prop_assert_eq!(&e.locality_links, &oracle);
            prop_assert_eq!(e.metro_cell, cell);
            prop_assert!(e.link_total() >= e.metro_cell);
            prop_assert_eq!(e.link_total() == e.metro_cell, e.multi_locality_papers == 0);
        }
    }
}

fn exact_pairs(m: &BTreeMap<(String, String), u64>) -> BTreeMap<(String, String), Rational> {
    m.iter()
        .map(|(k, &v)| (k.clone(), Rational::from_integer(v as i128)))
        .collect()
}

fn report_bytes(corpus: &Corpus, p: &Partition, chunks: Option<usize>) -> Vec<u8> {
    let opts = CountOptions {
        chunks,
        ..CountOptions::default()
    };
    let mut out = Vec::new();
    let loc: cityometrics::CountReport = integer_count(corpus, &opts).unwrap();
    loc.write_csv(&mut out, &[]).unwrap();
    let dedup: cityometrics::CountReport = dedup_count(corpus, p, &opts).unwrap();
    dedup.write_csv(&mut out, &[]).unwrap();
    for basis in [FractionalBasis::DistinctLocality, FractionalBasis::AddressInstance] {
        let f: cityometrics::CountReport =
            fractional_count(corpus, &AttributionPolicy::metros(basis, p), &opts).unwrap();
        f.write_csv(&mut out, &[]).unwrap();
    }
    let dy = DyadOptions {
        count: opts,
        ..DyadOptions::default()
    };
    for regime in [DyadRegime::Integer, DyadRegime::Fractional] {
        let m: cityometrics::DyadMatrix = dyad_matrix(corpus, Some(p), regime, &dy).unwrap();
        m.write_csv(&mut out, &[]).unwrap();
    }
    out
}

#[test]
fn reports_are_identical_across_chunks_threads_and_order() {
    let (_, corpus, p) = world(42, 3000);
    let reference = report_bytes(&corpus, &p, Some(1));
    for chunks in [Some(2), Some(8), None] {
        assert_eq!(report_bytes(&corpus, &p, chunks), reference);
    }
    for threads in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(|| report_bytes(&corpus, &p, None)), reference);
    }
    let mut shuffled = corpus.records.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let reordered = Corpus::with_records(shuffled, vec![], vec![]);
    assert_eq!(report_bytes(&reordered, &p, Some(8)), reference);
}

#[test]
fn dedup_equals_sum_exactly_when_no_paper_spans_members() {
    let (_, corpus, p) = world(7, 400);
    // keep one affiliation per paper: no paper can span two member localities
    let single: Vec<_> = corpus
        .records
        .iter()
        .cloned()
        .map(|mut r| {
            r.affiliations.truncate(1);
            r
        })
        .collect();
    let single = Corpus::with_records(single, vec![], vec![]);
    let opts = CountOptions::default();
    let loc: ExactCountReport = integer_count(&single, &opts).unwrap();
    let sum = metro_integer_sum(&loc, &p).unwrap();
    let dedup: ExactCountReport = dedup_count(&single, &p, &opts).unwrap();
    let frac: ExactCountReport = fractional_count(
        &single,
        &AttributionPolicy::metros(FractionalBasis::DistinctLocality, &p),
        &opts,
    )
    .unwrap();
    assert_eq!(sum.credits, dedup.credits);
    assert_eq!(dedup.credits, frac.credits);
}
