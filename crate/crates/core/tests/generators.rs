mod common;

use proptest::prelude::*;
use terw_core::generators::{
    folded_cube, folded_cube_capped, load_scheme, odd_cycle, odd_graph, odd_graph_capped, FamilySpec,
};
use terw_core::{Error, Family, SchemeFile};

use common::spectral;

#[test]
fn odd_cycles() {
    let c7 = odd_cycle(3).unwrap();
    assert_eq!((c7.n(), c7.classes()), (7, 3));
    assert_eq!(c7.tensor().valencies()[1], 2);
    assert!(spectral(&c7).pp.is_almost_bipartite());
    assert_eq!(odd_cycle(4).unwrap().n(), 9);
}

#[test]
fn odd_graphs() {
    let o4 = odd_graph(3).unwrap();
    assert_eq!((o4.n(), o4.classes()), (35, 3));
    let sp = spectral(&o4);
    assert_eq!(sp.pp.valency(), 4);
    assert_eq!(sp.pp.a, vec![0, 0, 0, 2]);
    let petersen = odd_graph(2).unwrap();
    assert_eq!((petersen.n(), petersen.classes()), (10, 2));
}

#[test]
fn folded_cubes() {
    let f7 = folded_cube(3).unwrap();
    assert_eq!((f7.n(), f7.classes()), (64, 3));
    let sp = spectral(&f7);
    assert_eq!(sp.pp.valency(), 7);
    assert!(sp.pp.is_almost_bipartite());
    assert_ne!(sp.pp.a[3], 0);
    let clebsch = folded_cube(2).unwrap();
    assert_eq!((clebsch.n(), clebsch.classes()), (16, 2));
}

#[test]
fn vertex_cap_is_enforced_before_construction() {
    assert!(matches!(odd_graph_capped(9, 5000), Err(Error::ResourceLimit { .. })));
    assert!(matches!(folded_cube_capped(7, 5000), Err(Error::ResourceLimit { .. })));
    assert!(matches!(odd_cycle(0), Err(Error::InvalidParameter(_))));
}

#[test]
fn cycle_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c7.json");
    let adj: Vec<Vec<usize>> = (0..7).map(|x| vec![(x + 1) % 7, (x + 6) % 7]).collect();
    std::fs::write(&path, SchemeFile::from_adjacency(adj).unwrap().to_json()).unwrap();
    let s = load_scheme(&path).unwrap();
    assert_eq!(s.relation_table(), odd_cycle(3).unwrap().relation_table());
}

#[test]
fn malformed_json_is_a_parse_error() {
    assert!(matches!(SchemeFile::parse("{\"n\": 3,"), Err(Error::Parse(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "not json").unwrap();
    assert!(matches!(load_scheme(&path), Err(Error::Parse(_))));
    assert!(matches!(load_scheme(dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn explicit_trivial_scheme_file() {
    let file = SchemeFile::parse(r#"{"n": 1, "D": 0, "relation": {"explicit": [[0]]}}"#).unwrap();
    let s = file.into_scheme().unwrap();
    assert_eq!((s.n(), s.classes()), (1, 0));
}

#[test]
fn family_names_parse() {
    for f in [Family::OddCycle, Family::OddGraph, Family::FoldedCube] {
        assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
    }
    assert!("petersen".parse::<Family>().is_err());
}

fn family() -> impl Strategy<Value = FamilySpec> {
    prop_oneof![
        (1usize..=6).prop_map(|d| FamilySpec { family: Family::OddCycle, diameter: d }),
        (2usize..=3).prop_map(|d| FamilySpec { family: Family::OddGraph, diameter: d }),
        (2usize..=3).prop_map(|d| FamilySpec { family: Family::FoldedCube, diameter: d }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scheme_file_round_trip(spec in family()) {
        let scheme = spec.build(5000).unwrap();
        let graph_file = SchemeFile::generate(spec, 5000).unwrap();
        let reparsed = SchemeFile::parse(&graph_file.to_json()).unwrap();
        prop_assert_eq!(&reparsed, &graph_file);
        prop_assert_eq!(reparsed.into_scheme().unwrap().relation_table(), scheme.relation_table());

        let explicit = SchemeFile::from_scheme(&scheme);
        let back = SchemeFile::parse(&explicit.to_json()).unwrap().into_scheme().unwrap();
        prop_assert_eq!(back.relation_table(), scheme.relation_table());
        prop_assert_eq!(back.classes(), spec.diameter);
    }
}
