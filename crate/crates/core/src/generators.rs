//! Test-instance families and the JSON scheme file format.
//!
//! All three families are distance-regular graphs; the scheme is the
//! distance partition, found by breadth-first search from every vertex.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{validate_scheme, AssociationScheme};

pub const DEFAULT_VERTEX_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    OddCycle,
    OddGraph,
    FoldedCube,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::OddCycle => "odd_cycle",
            Family::OddGraph => "odd_graph",
            Family::FoldedCube => "folded_cube",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odd_cycle" => Ok(Family::OddCycle),
            "odd_graph" => Ok(Family::OddGraph),
            "folded_cube" => Ok(Family::FoldedCube),
            other => Err(Error::InvalidParameter(format!("unknown family {other:?}"))),
        }
    }
}

/// A family together with its diameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    #[serde(rename = "D")]
    pub diameter: usize,
}

impl FamilySpec {
    pub fn adjacency(&self, vertex_cap: usize) -> Result<Vec<Vec<usize>>> {
        match self.family {
            Family::OddCycle => odd_cycle_adjacency(self.diameter),
            Family::OddGraph => odd_graph_adjacency(self.diameter, vertex_cap),
            Family::FoldedCube => folded_cube_adjacency(self.diameter, vertex_cap),
        }
    }

    pub fn build(&self, vertex_cap: usize) -> Result<AssociationScheme> {
        distance_scheme(&self.adjacency(vertex_cap)?)
    }
}

fn odd_cycle_adjacency(diameter: usize) -> Result<Vec<Vec<usize>>> {
    if diameter < 1 {
        return Err(Error::InvalidParameter("odd_cycle needs D >= 1".into()));
    }
    let n = 2 * diameter + 1;
    Ok((0..n).map(|x| vec![(x + 1) % n, (x + n - 1) % n]).collect())
}

/// Distance scheme of the cycle `C_{2D+1}`.
pub fn odd_cycle(diameter: usize) -> Result<AssociationScheme> {
    distance_scheme(&odd_cycle_adjacency(diameter)?)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn odd_graph_adjacency(diameter: usize, vertex_cap: usize) -> Result<Vec<Vec<usize>>> {
    if diameter < 2 {
        return Err(Error::InvalidParameter("odd_graph needs D >= 2".into()));
    }
    let ground = 2 * diameter + 1;
    let needed = binomial(ground as u128, diameter as u128);
    if needed > vertex_cap as u128 {
        return Err(Error::ResourceLimit {
            what: format!("odd_graph(D={diameter})"),
            needed,
            cap: vertex_cap,
        });
    }
    // Colexicographic order of D-subsets is increasing order of their bitmasks.
    let mut subsets: Vec<u64> = Vec::with_capacity(needed as usize);
    let mut mask: u64 = (1 << diameter) - 1;
    let limit: u64 = 1 << ground;
    while mask < limit {
        subsets.push(mask);
        // Gosper's hack: next integer with the same popcount.
        let low = mask & mask.wrapping_neg();
        let ripple = mask + low;
        mask = (((ripple ^ mask) >> 2) / low) | ripple;
    }
    Ok(subsets
        .iter()
        .map(|&a| {
            subsets
                .iter()
                .enumerate()
                .filter(|(_, &b)| a & b == 0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect())
}

/// The Odd graph `O_{D+1}`: Kneser graph `K(2D+1, D)`, diameter `D`.
pub fn odd_graph(diameter: usize) -> Result<AssociationScheme> {
    odd_graph_capped(diameter, DEFAULT_VERTEX_CAP)
}

pub fn odd_graph_capped(diameter: usize, vertex_cap: usize) -> Result<AssociationScheme> {
    distance_scheme(&odd_graph_adjacency(diameter, vertex_cap)?)
}

fn folded_cube_adjacency(diameter: usize, vertex_cap: usize) -> Result<Vec<Vec<usize>>> {
    if diameter < 2 {
        return Err(Error::InvalidParameter("folded_cube needs D >= 2".into()));
    }
    let dim = 2 * diameter + 1;
    let needed = 1u128 << (2 * diameter);
    if needed > vertex_cap as u128 {
        return Err(Error::ResourceLimit {
            what: format!("folded_cube(D={diameter})"),
            needed,
            cap: vertex_cap,
        });
    }
    let n = needed as usize;
    let full: u64 = (1 << dim) - 1;
    // Vertex i stands for the antipodal pair of the bitmask i << 1 (bit 0 clear).
    Ok((0..n)
        .map(|i| {
            let v = (i as u64) << 1;
            let mut nb: Vec<usize> = (1..dim).map(|b| ((v ^ (1 << b)) >> 1) as usize).collect();
            // Flipping bit 0 lands on the complement class; its representative
            // flips every other bit instead.
            nb.push(((v ^ (full ^ 1)) >> 1) as usize);
            nb
        })
        .collect())
}

/// The folded `(2D+1)`-cube, diameter `D`, on `2^{2D}` vertices.
pub fn folded_cube(diameter: usize) -> Result<AssociationScheme> {
    folded_cube_capped(diameter, DEFAULT_VERTEX_CAP)
}

pub fn folded_cube_capped(diameter: usize, vertex_cap: usize) -> Result<AssociationScheme> {
    distance_scheme(&folded_cube_adjacency(diameter, vertex_cap)?)
}

/// BFS distance matrix of a connected graph, row-major; returns `(table, diameter)`.
pub fn distance_table(adjacency: &[Vec<usize>]) -> Result<(Vec<usize>, usize)> {
    let n = adjacency.len();
    for (x, nbrs) in adjacency.iter().enumerate() {
        for &y in nbrs {
            if y >= n {
                return Err(Error::InvalidInput(format!("vertex {x} lists neighbour {y} >= n")));
            }
            if y == x {
                return Err(Error::InvalidInput(format!("vertex {x} has a loop")));
            }
            if !adjacency[y].contains(&x) {
                return Err(Error::InvalidInput(format!("edge {x}-{y} is not symmetric")));
            }
        }
    }
    let mut table = vec![usize::MAX; n * n];
    let mut diameter = 0;
    let mut queue = VecDeque::new();
    for source in 0..n {
        let row = &mut table[source * n..(source + 1) * n];
        row[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if row[w] == usize::MAX {
                    row[w] = row[u] + 1;
                    diameter = diameter.max(row[w]);
                    queue.push_back(w);
                }
            }
        }
        if row.contains(&usize::MAX) {
            return Err(Error::InvalidInput("graph is disconnected".into()));
        }
    }
    Ok((table, diameter))
}

/// Validated distance scheme of a connected graph.
pub fn distance_scheme(adjacency: &[Vec<usize>]) -> Result<AssociationScheme> {
    let (table, diameter) = distance_table(adjacency)?;
    validate_scheme(adjacency.len(), diameter, table)
}

/// How the class table is given in a scheme file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationSpec {
    /// Adjacency lists; classes are BFS distances.
    DistanceGraph(Vec<Vec<usize>>),
    /// Rows of the `n x n` class matrix, 0-based class indices.
    Explicit(Vec<Vec<usize>>),
}

/// On-disk scheme description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub n: usize,
    #[serde(rename = "D")]
    pub classes: usize,
    pub relation: RelationSpec,
}

impl SchemeFile {
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let (_, diameter) = distance_table(&adjacency)?;
        Ok(Self {
            n: adjacency.len(),
            classes: diameter,
            relation: RelationSpec::DistanceGraph(adjacency),
        })
    }

    pub fn from_scheme(scheme: &AssociationScheme) -> Self {
        let n = scheme.n();
        let table = scheme.relation_table();
        Self {
            n,
            classes: scheme.classes(),
            relation: RelationSpec::Explicit(table.chunks(n.max(1)).map(|r| r.to_vec()).collect()),
        }
    }

    pub fn generate(spec: FamilySpec, vertex_cap: usize) -> Result<Self> {
        Self::from_adjacency(spec.adjacency(vertex_cap)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scheme files always serialize")
    }

    /// Builds and validates the scheme described by the file.
    pub fn into_scheme(self) -> Result<AssociationScheme> {
        let (table, classes) = match self.relation {
            RelationSpec::DistanceGraph(adj) => {
                if adj.len() != self.n {
                    return Err(Error::InvalidInput(format!(
                        "adjacency has {} rows, n = {}",
                        adj.len(),
                        self.n
                    )));
                }
                let (table, diameter) = distance_table(&adj)?;
                (table, diameter)
            }
            RelationSpec::Explicit(rows) => {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(Error::InvalidInput(format!(
                        "explicit class matrix must be {0} x {0}",
                        self.n
                    )));
                }
                (rows.concat(), self.classes)
            }
        };
        if classes != self.classes {
            return Err(Error::InvalidInput(format!(
                "file declares D = {} but the relation has {} classes",
                self.classes, classes
            )));
        }
        validate_scheme(self.n, classes, table)
    }
}

/// Reads, parses and validates a scheme file.
pub fn load_scheme(path: impl AsRef<Path>) -> Result<AssociationScheme> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    SchemeFile::parse(&text)?.into_scheme()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{is_almost_bipartite, PPolyArray};

    fn array(s: &AssociationScheme) -> PPolyArray {
        PPolyArray::from_tensor(s.tensor(), &(0..=s.classes()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cycles() {
        let c7 = odd_cycle(3).unwrap();
        assert_eq!((c7.n(), c7.classes()), (7, 3));
        assert_eq!(c7.tensor().valencies(), &[1, 2, 2, 2]);
        assert!(is_almost_bipartite(&array(&c7)));
        assert_eq!(odd_cycle(4).unwrap().n(), 9);
        assert!(matches!(odd_cycle(0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn odd_graphs() {
        let o4 = odd_graph(3).unwrap();
        assert_eq!((o4.n(), o4.classes()), (35, 3));
        let pp = array(&o4);
        assert_eq!(pp.b, vec![4, 3, 3, 0]);
        assert_eq!(pp.c, vec![0, 1, 1, 2]);
        assert_eq!(pp.a, vec![0, 0, 0, 2]);
        let petersen = odd_graph(2).unwrap();
        assert_eq!((petersen.n(), petersen.classes()), (10, 2));
        assert!(matches!(odd_graph(1), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            odd_graph_capped(6, 100),
            Err(Error::ResourceLimit { needed: 1716, .. })
        ));
    }

    #[test]
    fn folded_cubes() {
        let f7 = folded_cube(3).unwrap();
        assert_eq!((f7.n(), f7.classes()), (64, 3));
        let pp = array(&f7);
        assert_eq!(pp.valency(), 7);
        assert!(is_almost_bipartite(&pp));
        let clebsch = folded_cube(2).unwrap();
        assert_eq!((clebsch.n(), clebsch.classes()), (16, 2));
        assert!(matches!(
            folded_cube_capped(7, 5000),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn scheme_file_round_trip() {
        let file = SchemeFile::generate(
            FamilySpec {
                family: Family::OddCycle,
                diameter: 3,
            },
            DEFAULT_VERTEX_CAP,
        )
        .unwrap();
        let text = file.to_json();
        assert!(text.contains("\"distance_graph\""));
        let back = SchemeFile::parse(&text).unwrap().into_scheme().unwrap();
        assert_eq!(back, odd_cycle(3).unwrap());
        let explicit = SchemeFile::from_scheme(&back);
        assert_eq!(explicit.into_scheme().unwrap(), back);
    }

    #[test]
    fn trivial_explicit_file() {
        let s = SchemeFile::parse(r#"{"n":1,"D":0,"relation":{"explicit":[[0]]}}"#)
            .unwrap()
            .into_scheme()
            .unwrap();
        assert_eq!(s.n(), 1);
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(SchemeFile::parse("{\"n\": 3,"), Err(Error::Parse(_))));
        assert!(matches!(
            SchemeFile::parse(r#"{"n":1,"D":0,"relation":{"weird":[]}}"#),
            Err(Error::Parse(_))
        ));
    }
}
