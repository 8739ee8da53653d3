#![allow(dead_code)]

use terw_core::generators::{folded_cube, odd_cycle, odd_graph};
use terw_core::scheme::spectral_data;
use terw_core::{AssociationScheme, SpectralData, Tolerances};

/// The five desk-scale test schemes, by short name.
pub fn test_schemes() -> Vec<(&'static str, AssociationScheme)> {
    vec![
        ("C7", odd_cycle(3).unwrap()),
        ("C9", odd_cycle(4).unwrap()),
        ("O4", odd_graph(3).unwrap()),
        ("F7", folded_cube(3).unwrap()),
        ("F9", folded_cube(4).unwrap()),
    ]
}

/// The schemes small enough for exhaustive per-test sweeps.
pub fn small_schemes() -> Vec<(&'static str, AssociationScheme)> {
    test_schemes().into_iter().filter(|(name, _)| *name != "F9").collect()
}

pub fn spectral(s: &AssociationScheme) -> SpectralData {
    spectral_data(s, &Tolerances::default()).unwrap()
}

/// The one-vertex scheme with no nontrivial classes.
pub fn trivial_scheme() -> AssociationScheme {
    AssociationScheme::validate(1, 0, vec![0]).unwrap()
}
