//! Dimension-ordered (XY) routing on the mesh with per-link reservation.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkId {
    /// Network interface of a core: one injection per message.
    Inject(usize),
    /// Router-to-router link between neighbouring (row, col) positions.
    Hop { from: Coord, to: Coord },
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkId::Inject(core) => write!(f, "inject_{core}"),
            LinkId::Hop { from, to } => write!(f, "hop_{}_{}-{}_{}", from.0, from.1, to.0, to.1),
        }
    }
}

/// Links visited from `src` to `dst`, column (X) first, then row (Y).
pub fn xy_path(src: Coord, dst: Coord) -> Vec<(Coord, Coord)> {
    let mut path = Vec::with_capacity(src.0.abs_diff(dst.0) + src.1.abs_diff(dst.1));
    let (mut r, mut c) = src;
    while c != dst.1 {
        let next = if dst.1 > c { c + 1 } else { c - 1 };
        path.push(((r, c), (r, next)));
        c = next;
    }
    while r != dst.0 {
        let next = if dst.0 > r { r + 1 } else { r - 1 };
        path.push(((r, c), (next, c)));
        r = next;
    }
    path
}

#[derive(Debug, Default, Clone)]
struct LinkState {
    free_at: f64,
    /// Completion times of reservations that may still be queued.
    pending: VecDeque<f64>,
    max_depth: usize,
    energy: f64,
}

/// Timing and energy state of every router link.
#[derive(Debug, Default)]
pub struct Noc {
    links: HashMap<(Coord, Coord), LinkState>,
}

/// Outcome of routing one multicast message.
pub struct Routed {
    /// Arrival time at each destination, in the order given.
    pub arrivals: Vec<f64>,
    /// Links paid for by this message (each once), with their energy.
    pub charged: Vec<(LinkId, f64)>,
}

impl Noc {
    pub fn new() -> Self {
        Self::default()
    }

    /// Routes one message from `src` to every destination along the union of
    /// their XY paths. A link shared by several destinations is traversed
    /// and paid for once. Links serve reservations first come, first served;
    /// a message occupies each link for `flits` x `t_hop` (store and forward).
    pub fn multicast(&mut self, src: Coord, dests: &[Coord], t_depart: f64, flits: u32, t_hop: f64, e_hop_per_flit: f64) -> Routed {
        let mut reached: HashMap<Coord, f64> = HashMap::new();
        reached.insert(src, t_depart);
        let mut charged = Vec::new();
        let service = f64::from(flits) * t_hop;
        let mut arrivals = Vec::with_capacity(dests.len());
        for &dst in dests {
            let mut t = t_depart;
            for (from, to) in xy_path(src, dst) {
                if let Some(&seen) = reached.get(&to) {
                    t = seen;
                    continue;
                }
                let link = self.links.entry((from, to)).or_default();
                while link.pending.front().is_some_and(|&end| end <= t) {
                    link.pending.pop_front();
                }
                let start = t.max(link.free_at);
                link.free_at = start + service;
                link.pending.push_back(link.free_at);
                link.max_depth = link.max_depth.max(link.pending.len());
                let e = e_hop_per_flit * f64::from(flits);
                link.energy += e;
                charged.push((LinkId::Hop { from, to }, e));
                t = start + service;
                reached.insert(to, t);
            }
            arrivals.push(t);
        }
        Routed { arrivals, charged }
    }

    pub fn energy(&self) -> BTreeMap<LinkId, f64> {
        self.links
            .iter()
            .map(|(&(from, to), s)| (LinkId::Hop { from, to }, s.energy))
            .collect()
    }

    pub fn congestion(&self) -> BTreeMap<LinkId, usize> {
        self.links
            .iter()
            .map(|(&(from, to), s)| (LinkId::Hop { from, to }, s.max_depth))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::manhattan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_goes_x_then_y() {
        let p = xy_path((0, 0), (2, 1));
        assert_eq!(p, vec![((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (2, 1))]);
        assert!(xy_path((3, 3), (3, 3)).is_empty());
    }

    #[test]
    fn hop_count_is_manhattan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a = (rng.gen_range(0..40), rng.gen_range(0..40));
            let b = (rng.gen_range(0..40), rng.gen_range(0..40));
            let p = xy_path(a, b);
            assert_eq!(p.len(), manhattan(a, b));
            for (from, to) in &p {
                assert_eq!(manhattan(*from, *to), 1);
            }
        }
    }

    #[test]
    fn multicast_pays_shared_links_once() {
        let mut noc = Noc::new();
        // (0,0) -> (0,2) and (0,0) -> (1,2) share the two row-0 links.
        let r = noc.multicast((0, 0), &[(0, 2), (1, 2)], 0.0, 2, 1.0, 3.0);
        assert_eq!(r.charged.len(), 3);
        assert_eq!(r.charged.iter().map(|c| c.1).sum::<f64>(), 18.0);
        assert_eq!(r.arrivals, vec![4.0, 6.0]);
    }

    #[test]
    fn contention_serializes_a_link() {
        let mut noc = Noc::new();
        let a = noc.multicast((0, 0), &[(0, 1)], 0.0, 1, 5.0, 1.0);
        let b = noc.multicast((0, 0), &[(0, 1)], 1.0, 1, 5.0, 1.0);
        assert_eq!(a.arrivals[0], 5.0);
        assert_eq!(b.arrivals[0], 10.0);
        assert_eq!(noc.congestion().values().copied().max(), Some(2));
    }
}
