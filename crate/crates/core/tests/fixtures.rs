use cityometrics::collab::{dyad_matrix, expand_links, intra_city_matrix, City, DyadOptions, DyadRegime};
use cityometrics::counting::{
    dedup_count, fractional_count, hq_mismatch, institution_count, integer_count, metro_integer_sum, rollup_report,
    AttributionPolicy, CountOptions, FractionalBasis,
};
use cityometrics::delineation::{compare_partitions, delineate_distance, delineate_lookup, DistanceOptions};
use cityometrics::fixture::{generate, Profile};
use cityometrics::gazetteer::Tier;
use cityometrics::report::{format_percent, ranked_table, DEFAULT_TOP_N};
use cityometrics::{CountReport, DyadMatrix};

#[test]
fn mini_ny_regimes_match_generator_bookkeeping() {
    for seed in [1, 2, 3] {
        let f = generate(Profile::MiniNy, seed);
        let corpus = f.resolved_corpus();
        let p = delineate_lookup(&f.gazetteer, f.membership.as_ref().unwrap(), Tier::Csa).unwrap();
        let opts = CountOptions::default();
        let loc: CountReport = integer_count(&corpus, &opts).unwrap();
        let sum = metro_integer_sum(&loc, &p).unwrap();
        let dedup: CountReport = dedup_count(&corpus, &p, &opts).unwrap();
        let frac: CountReport = fractional_count(
            &corpus,
            &AttributionPolicy::metros(FractionalBasis::DistinctLocality, &p),
            &opts,
        )
        .unwrap();
        assert_eq!(sum.credit("NY-CSA"), f.expect("integer_sum"));
        assert_eq!(dedup.credit("NY-CSA"), f.expect("dedup"));
        assert_eq!(frac.credit("NY-CSA"), f.expect("fractional"));

        let t = ranked_table("NY-CSA", &p, &f.gazetteer, &loc, &dedup, &frac, DEFAULT_TOP_N).unwrap();
        assert_eq!(t.rows.len(), 25);
        assert_eq!(t.ratio_display(), "92.0%");
        assert_eq!(t.footer.integer_sum_total, sum.credit("NY-CSA"));
        let zero = p
            .metro("NY-CSA")
            .unwrap()
            .members
            .iter()
            .filter(|m| loc.credit(m.as_str()) == 0.0)
            .count();
        assert_eq!(zero as f64, f.expect("zero_paper_members"));
    }
}

#[test]
fn ranked_rows_follow_sort_oracle() {
    let f = generate(Profile::MiniNy, 11);
    let corpus = f.resolved_corpus();
    let p = delineate_lookup(&f.gazetteer, f.membership.as_ref().unwrap(), Tier::Csa).unwrap();
    let opts = CountOptions::default();
    let loc: CountReport = integer_count(&corpus, &opts).unwrap();
    let dedup: CountReport = dedup_count(&corpus, &p, &opts).unwrap();
    let frac: CountReport = fractional_count(
        &corpus,
        &AttributionPolicy::metros(FractionalBasis::DistinctLocality, &p),
        &opts,
    )
    .unwrap();
    let t = ranked_table("NY-CSA", &p, &f.gazetteer, &loc, &dedup, &frac, 25).unwrap();

    // independent tally straight from the records
    let mut tally: std::collections::BTreeMap<String, u64> = p
        .metro("NY-CSA")
        .unwrap()
        .members
        .iter()
        .map(|m| (m.to_string(), 0))
        .collect();
    for r in &corpus.records {
        let mut seen = std::collections::BTreeSet::new();
        for a in &r.affiliations {
            let l = a.resolved_locality.as_ref().unwrap().to_string();
            if tally.contains_key(&l) && seen.insert(l.clone()) {
                *tally.get_mut(&l).unwrap() += 1;
            }
        }
    }
    let mut oracle: Vec<(String, u64)> = tally.into_iter().collect();
    oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<(String, u64)> = t
        .rows
        .iter()
        .map(|r| (r.locality_id.clone(), r.credit as u64))
        .collect();
    assert_eq!(got, oracle[..25].to_vec());
    assert_eq!(t.rows[0].locality_id, "new-york-city-ny");
    assert!(t.rows.iter().enumerate().all(|(i, r)| r.rank == i + 1));
}

#[test]
fn ny_membership_tiers() {
    let f = generate(Profile::NyMembership, 5);
    let m = f.membership.as_ref().unwrap();
    let msa = delineate_lookup(&f.gazetteer, m, Tier::Msa).unwrap();
    let csa = delineate_lookup(&f.gazetteer, m, Tier::Csa).unwrap();
    assert_eq!(
        msa.metro("NY-MSA").unwrap().members.len() as f64,
        f.expect("msa_members")
    );
    assert_eq!(
        csa.metro("NY-CSA").unwrap().members.len() as f64,
        f.expect("csa_members")
    );
    assert_eq!(msa.singletons().len(), 242);
}

#[test]
fn ibm_hq_share() {
    let f = generate(Profile::Ibm, 9);
    let corpus = f.resolved_corpus();
    let reg = f.institutions.as_ref().unwrap();
    let m = hq_mismatch(&corpus, reg, &CountOptions::default());
    let ibm = m.row("ibm").unwrap();
    assert_eq!(ibm.total as f64, f.expect("ibm_total"));
    assert_eq!(ibm.at_hq as f64, f.expect("ibm_at_hq"));
    assert_eq!(format_percent(ibm.hq_share), "3.4%");
    assert_eq!(m.rows[0].institution_id, "ibm");
    assert!(m.unmatched.is_empty());
}

#[test]
fn creswick_papers_are_off_headquarters() {
    let f = generate(Profile::Creswick, 2);
    let corpus = f.resolved_corpus();
    let reg = f.institutions.as_ref().unwrap();
    let m = hq_mismatch(&corpus, reg, &CountOptions::default());
    let row = m.row("unimelb").unwrap();
    assert_eq!(row.total as f64, f.expect("unimelb_total"));
    assert_eq!((row.total - row.at_hq) as f64, f.expect("creswick_off_hq"));

    let inst: CountReport = institution_count(&corpus, reg, &CountOptions::default()).unwrap();
    let rolled = rollup_report(&inst, reg).unwrap();
    assert_eq!(rolled.credit("melbourne-au"), 200.0);
    assert_eq!(rolled.credit("creswick-au"), 0.0);
    let by_place: CountReport = integer_count(&corpus, &CountOptions::default()).unwrap();
    assert_eq!(by_place.credit("creswick-au"), 49.0);
}

#[test]
fn geneva_intra_city_cells() {
    let f = generate(Profile::Geneva, 4);
    let corpus = f.resolved_corpus();
    let reg = f.institutions.as_ref().unwrap();
    let p = delineate_lookup(&f.gazetteer, f.membership.as_ref().unwrap(), Tier::Custom).unwrap();
    let city = City::unit(&p, "geneva-metro").unwrap();
    let m: DyadMatrix = intra_city_matrix(&corpus, &city, reg, &CountOptions::default()).unwrap();
    assert_eq!(m.cell("cern", "unige"), f.expect("cern_unige"));
    assert_eq!(m.cell("unige", "who"), f.expect("unige_who"));
    assert_eq!(m.cell("cern", "who"), f.expect("cern_who"));
    assert!(m.cells.contains_key(&("cern".to_string(), "who".to_string())));
    assert!(!m.cells.keys().any(|(a, b)| a == "epfl" || b == "epfl"));
}

#[test]
fn upton_berkeley_dyad_and_single_link() {
    let f = generate(Profile::UptonBerkeley, 8);
    let corpus = f.resolved_corpus();
    let p = delineate_lookup(&f.gazetteer, f.membership.as_ref().unwrap(), Tier::Csa).unwrap();
    let loc: DyadMatrix = dyad_matrix(&corpus, None, DyadRegime::Integer, &DyadOptions::default()).unwrap();
    assert_eq!(loc.cell("upton-ny", "berkeley-ca"), f.expect("upton_berkeley"));
    let metro: DyadMatrix = dyad_matrix(&corpus, Some(&p), DyadRegime::Integer, &DyadOptions::default()).unwrap();
    assert_eq!(metro.cell("NY-CSA", "SF-CSA"), f.expect("ny_sf_cell"));
    assert_eq!(metro.cell("NY-CSA", "NY-CSA"), 60.0);

    let e = expand_links(&corpus, &p, ("NY-CSA", "SF-CSA"), &CountOptions::default()).unwrap();
    assert_eq!(e.metro_cell as f64, f.expect("ny_sf_cell"));
    assert_eq!(e.locality_links[&("upton-ny".into(), "berkeley-ca".into())], 228);
}

#[test]
fn ann_arbor_split_by_distance_rule() {
    let f = generate(Profile::AnnArborDetroit, 6);
    let lookup = delineate_lookup(&f.gazetteer, f.membership.as_ref().unwrap(), Tier::Csa).unwrap();
    let dist = delineate_distance(&f.gazetteer, DistanceOptions::new(40.0)).unwrap();
    let diff = compare_partitions(&lookup, &dist).unwrap();
    let changed: Vec<&str> = diff.changed_localities().iter().map(|l| l.as_str()).collect();
    assert_eq!(changed.len() as f64, f.expect("changed_localities"));
    assert_eq!(changed, ["ann-arbor-mi"]);
}
