use gentau::kernels::TraitKind;
use gentau::pedigree::{parse_cohort, validate_mendelian, write_cohort};
use gentau::sim::{corrupt_leaves, even_sizes, simulate_cohort, CohortSim, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn large_cohort() -> gentau::pedigree::Cohort {
    let cfg = CohortSim {
        layout: Layout::Extended(even_sizes(143, 1614).unwrap()),
        markers: 5,
        traits: vec![TraitKind::Ordinal { levels: 4 }, TraitKind::Quantitative, TraitKind::Binary],
        covariate_effect: Some(0.5),
        ..CohortSim::default()
    };
    simulate_cohort(&cfg, &mut ChaCha8Rng::seed_from_u64(400)).unwrap()
}

#[test]
fn write_then_parse_is_identity() {
    let cohort = large_cohort();
    assert_eq!(cohort.pedigrees().len(), 143);
    assert_eq!(cohort.n_individuals(), 1614);
    let dir = tempfile::tempdir().unwrap();
    let (ped, phen, cov) = (dir.path().join("a.ped"), dir.path().join("a.phen"), dir.path().join("a.cov"));
    write_cohort(&cohort, &ped, &phen, Some(&cov)).unwrap();
    let back = parse_cohort(&ped, &phen, Some(&cov)).unwrap();
    assert_eq!(back.pedigrees(), cohort.pedigrees());
    assert_eq!(back.markers, cohort.markers);
    assert_eq!(back.phenotypes.names, cohort.phenotypes.names);
    for (a, b) in back.phenotypes.values.iter().flatten().zip(cohort.phenotypes.values.iter().flatten()) {
        match (a, b) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0)),
            (None, None) => {}
            _ => panic!("missingness changed"),
        }
    }
    assert!(back.covariates.is_some());
}

#[test]
fn corrupted_leaves_are_all_reported() {
    let mut cohort = large_cohort();
    assert!(validate_mendelian(&cohort, "m1").unwrap().is_empty());
    let hit = corrupt_leaves(&mut cohort, 0, 0.05, &mut ChaCha8Rng::seed_from_u64(401)).unwrap();
    assert!(!hit.is_empty());
    let found = validate_mendelian(&cohort, "m1").unwrap();
    assert_eq!(found.len(), hit.len());
    let mut ids: Vec<usize> = found.iter().map(|v| cohort.index_of(&v.individual_id).unwrap()).collect();
    ids.sort_unstable();
    assert_eq!(ids, hit);
    assert!(validate_mendelian(&cohort, "m2").unwrap().is_empty());
}
