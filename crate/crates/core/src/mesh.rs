//! Physical mesh sizing for a logical core count, and core placement.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::partition::Mapping;

/// Widest `1 x n` strip the loose-area scheme accepts before padding.
pub const DEFAULT_MAX_STRIP: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("mesh {rows}x{cols} has {slots} slots, {n_cores} cores need placing")]
    TooSmall {
        rows: usize,
        cols: usize,
        slots: usize,
        n_cores: usize,
    },
    #[error("core count must be at least 1")]
    Empty,
    #[error("placement file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    StrictArea,
    LooseArea,
    StrictSquare,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::StrictArea, Scheme::LooseArea, Scheme::StrictSquare];

    pub fn shape(self, n_cores: usize) -> (usize, usize) {
        match self {
            Scheme::StrictArea => mesh_strict_area(n_cores),
            Scheme::LooseArea => mesh_loose_area(n_cores, DEFAULT_MAX_STRIP),
            Scheme::StrictSquare => mesh_strict_square(n_cores),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::StrictArea => "strict-area",
            Scheme::LooseArea => "loose-area",
            Scheme::StrictSquare => "strict-square",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict-area" => Ok(Scheme::StrictArea),
            "loose-area" => Ok(Scheme::LooseArea),
            "strict-square" => Ok(Scheme::StrictSquare),
            other => Err(format!("unknown scheme `{other}` (strict-area, loose-area, strict-square)")),
        }
    }
}

/// Factor pair of `n` with the smallest sum, rows <= cols.
pub fn mesh_strict_area(n_cores: usize) -> (usize, usize) {
    let n = n_cores.max(1);
    let mut a = n.isqrt();
    while !n.is_multiple_of(a) {
        a -= 1;
    }
    (a, n / a)
}

/// Strict-area shape, padding the core count while the result is a strip
/// wider than `max_strip`.
pub fn mesh_loose_area(n_cores: usize, max_strip: usize) -> (usize, usize) {
    let mut n = n_cores.max(1);
    loop {
        let (r, c) = mesh_strict_area(n);
        if r > 1 || c <= max_strip {
            return (r, c);
        }
        n += 1;
    }
}

/// Square-like shape: rows = round(sqrt(n)), cols = ceil(n / rows).
pub fn mesh_strict_square(n_cores: usize) -> (usize, usize) {
    let n = n_cores.max(1);
    let rows = ((n as f64).sqrt().round() as usize).max(1);
    (rows, n.div_ceil(rows))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshPlacement {
    pub rows: usize,
    pub cols: usize,
    /// Indexed by core id.
    pub coords: Vec<(usize, usize)>,
    pub unused_slots: usize,
}

impl MeshPlacement {
    pub fn n_cores(&self) -> usize {
        self.coords.len()
    }

    pub fn coord(&self, core: usize) -> (usize, usize) {
        self.coords[core]
    }

    pub fn hops(&self, a: usize, b: usize) -> usize {
        manhattan(self.coords[a], self.coords[b])
    }

    pub fn area(&self) -> usize {
        self.rows * self.cols
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MeshError> {
        let err = |e: csv::Error| MeshError::File(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["core_id", "row", "col"]).map_err(err)?;
        for (id, (r, c)) in self.coords.iter().enumerate() {
            w.write_record([id.to_string(), r.to_string(), c.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| MeshError::File(e.to_string()))
    }
}

pub fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Serpentine slot of the `i`-th core: even rows run left to right, odd rows
/// right to left.
pub fn serpentine(i: usize, cols: usize) -> (usize, usize) {
    let r = i / cols;
    let k = i % cols;
    (r, if r.is_multiple_of(2) { k } else { cols - 1 - k })
}

pub fn place_cores(n_cores: usize, shape: (usize, usize)) -> Result<MeshPlacement, MeshError> {
    let (rows, cols) = shape;
    if n_cores == 0 {
        return Err(MeshError::Empty);
    }
    if rows * cols < n_cores {
        return Err(MeshError::TooSmall {
            rows,
            cols,
            slots: rows * cols,
            n_cores,
        });
    }
    Ok(MeshPlacement {
        rows,
        cols,
        coords: (0..n_cores).map(|i| serpentine(i, cols)).collect(),
        unused_slots: rows * cols - n_cores,
    })
}

pub fn place(mapping: &Mapping, shape: (usize, usize)) -> Result<MeshPlacement, MeshError> {
    place_cores(mapping.n_cores_total, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strict_area_examples() {
        assert_eq!(mesh_strict_area(30), (5, 6));
        assert_eq!(mesh_strict_area(1), (1, 1));
        assert_eq!(mesh_strict_area(36), (6, 6));
        assert_eq!(mesh_strict_area(31), (1, 31));
    }

    #[test]
    fn loose_area_examples() {
        assert_eq!(mesh_loose_area(31, DEFAULT_MAX_STRIP), (4, 8));
        assert_eq!(mesh_loose_area(30, DEFAULT_MAX_STRIP), (5, 6));
        assert_eq!(mesh_loose_area(2, DEFAULT_MAX_STRIP), (1, 2));
        assert_eq!(mesh_loose_area(5, DEFAULT_MAX_STRIP), (2, 3));
    }

    #[test]
    fn strict_square_examples() {
        assert_eq!(mesh_strict_square(26), (5, 6));
        let p = place_cores(26, mesh_strict_square(26)).unwrap();
        assert_eq!(p.unused_slots, 4);
        assert_eq!(mesh_strict_square(25), (5, 5));
        assert_eq!(mesh_strict_square(2), (1, 2));
    }

    #[test]
    fn serpentine_two_by_two() {
        let p = place_cores(4, (2, 2)).unwrap();
        assert_eq!(p.coords, vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
    }

    #[test]
    fn chain_hops() {
        let line = place_cores(7, (1, 7)).unwrap();
        assert_eq!((1..7).map(|i| line.hops(i - 1, i)).sum::<usize>(), 6);
        let grid = place_cores(30, (5, 6)).unwrap();
        let total: usize = (1..30).map(|i| manhattan(grid.coords[i - 1], grid.coords[i])).sum();
        assert_eq!(total, 29);
    }

    #[test]
    fn too_small_shape_is_an_error() {
        assert!(matches!(place_cores(7, (2, 3)), Err(MeshError::TooSmall { .. })));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!("square".parse::<Scheme>().is_err());
    }

    proptest! {
        #[test]
        fn schemes_cover_core_count(n in 1usize..5000) {
            let (r, c) = mesh_strict_area(n);
            prop_assert_eq!(r * c, n);
            prop_assert!(r <= c);
            for (r, c) in [mesh_loose_area(n, DEFAULT_MAX_STRIP), mesh_strict_square(n)] {
                prop_assert!(r * c >= n);
            }
        }

        #[test]
        fn placement_is_distinct_and_adjacent(n in 1usize..400, extra in 0usize..5) {
            let (r, c) = mesh_strict_square(n + extra);
            let p = place_cores(n, (r, c)).unwrap();
            let mut seen = std::collections::HashSet::new();
            for &(y, x) in &p.coords {
                prop_assert!(y < r && x < c);
                prop_assert!(seen.insert((y, x)));
            }
            for i in 1..n {
                prop_assert_eq!(p.hops(i - 1, i), 1);
            }
            prop_assert_eq!(p.unused_slots, r * c - n);
        }
    }
}
