use std::fs;

use cityometrics::delineation::Partition;
use cityometrics::fixture::{generate, Profile, RandomSpec};
use cityometrics::gazetteer::{Gazetteer, InstitutionRegistry, MembershipTable};
use cityometrics::record::{ingest, ingest_reader, Corpus, InputFormat};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixture_files_load_back_to_the_same_objects() {
    for name in ["mini-ny", "ibm", "geneva", "ann-arbor-detroit", "random:400"] {
        let f = generate(name.parse().unwrap(), 13);
        let dir = tempfile::tempdir().unwrap();
        for (file, bytes) in f.files().unwrap() {
            fs::write(dir.path().join(file), bytes).unwrap();
        }
        let g = Gazetteer::load(&dir.path().join("gazetteer.csv")).unwrap();
        assert_eq!(g.fingerprint(), f.gazetteer.fingerprint());
        if f.membership.is_some() {
            let m = MembershipTable::load(&dir.path().join("membership.csv"), &g).unwrap();
            assert_eq!(Some(&m), f.membership.as_ref());
        }
        if let Some(reg) = &f.institutions {
            let back = InstitutionRegistry::load(&dir.path().join("institutions.csv"), &g).unwrap();
            assert_eq!(back.institutions(), reg.institutions());
        }
        let corpus = ingest(&[dir.path().join("corpus.jsonl")], None).unwrap();
        assert_eq!(corpus, f.corpus());
        assert_eq!(g.resolve_corpus(&corpus), f.resolved_corpus());
    }
}

#[test]
fn resolved_corpus_survives_a_write_read_cycle() {
    let f = generate(Profile::MiniNy, 1);
    let resolved = f.resolved_corpus();
    let mut buf = Vec::new();
    resolved.write_jsonl(&mut buf).unwrap();
    let back = ingest_reader(buf.as_slice(), "resolved.jsonl", InputFormat::Jsonl).unwrap();
    assert_eq!(back, resolved);
    assert_eq!(back.fingerprint(), resolved.fingerprint());
}

#[test]
fn line_order_and_file_split_do_not_matter() {
    let f = generate(
        Profile::Random(RandomSpec {
            papers: 2000,
            ..RandomSpec::default()
        }),
        21,
    );
    let files = f.files().unwrap();
    let text = String::from_utf8(files[0].1.clone()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = lines.split_at(lines.len() / 3);
    fs::write(dir.path().join("a.jsonl"), a.join("\n")).unwrap();
    fs::write(dir.path().join("b.jsonl"), b.join("\n")).unwrap();
    let split = ingest(&[dir.path().join("b.jsonl"), dir.path().join("a.jsonl")], None).unwrap();
    assert_eq!(split, f.corpus());
    assert_eq!(split.fingerprint(), f.corpus().fingerprint());
}

#[test]
fn partition_written_and_read_is_unchanged() {
    let f = generate(Profile::UptonBerkeley, 2);
    let p = cityometrics::delineation::delineate_lookup(
        &f.gazetteer,
        f.membership.as_ref().unwrap(),
        cityometrics::gazetteer::Tier::Csa,
    )
    .unwrap();
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let back = Partition::from_reader(buf.as_slice(), &f.gazetteer).unwrap();
    assert_eq!(back.unit_ids(), p.unit_ids());
    let mut again = Vec::new();
    back.write_csv(&mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn empty_input_gives_empty_corpus() {
    let c: Corpus = ingest_reader("\n\n".as_bytes(), "empty.jsonl", InputFormat::Jsonl).unwrap();
    assert!(c.is_empty());
    assert_eq!(c.year_range, None);
}
