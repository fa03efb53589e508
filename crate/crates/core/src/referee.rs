//! Referee decoders: given a perfect syndrome, propose a correction back to
//! the codespace. The environment uses the referee to decide whether the
//! agent is still alive after each action.
//!
//! Decoders are registered by name (see [`REFEREES`]) and selected at run
//! time from the experiment configuration.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{CodeLayout, ErrorConfig, Syndrome};

/// Set of qubits to flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Correction(pub ErrorConfig);

impl Correction {
    pub fn flips(&self) -> &ErrorConfig {
        &self.0
    }

    pub fn weight(&self) -> usize {
        self.0.weight()
    }
}

pub trait Referee: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// A correction whose syndrome equals `syndrome`.
    fn correction(&self, syndrome: &Syndrome) -> Result<Correction>;
}

/// Whether the referee keeps the encoded qubit alive for hidden error `hidden`.
pub fn survives(layout: &CodeLayout, referee: &dyn Referee, hidden: &ErrorConfig) -> Result<bool> {
    let syndrome = layout.z_syndrome(hidden)?;
    let correction = referee.correction(&syndrome)?;
    let residual = hidden.compose(correction.flips())?;
    Ok(!layout.is_logical_x(&residual)?)
}

type RefereeCtor = fn(&CodeLayout) -> Result<Box<dyn Referee>>;

/// Registered referee decoders.
pub const REFEREES: &[(&str, RefereeCtor)] = &[
    ("matching", |layout| Ok(Box::new(MatchingReferee::new(layout)))),
    ("lookup", |layout| Ok(Box::new(LookupReferee::new(layout)?))),
];

pub fn referee_by_name(name: &str, layout: &CodeLayout) -> Result<Box<dyn Referee>> {
    REFEREES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor(layout))
        .unwrap_or_else(|| {
            Err(Error::UnknownStrategy {
                kind: "referee",
                name: name.to_string(),
                available: REFEREES.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
            })
        })
}

/// Exact minimum-weight matching of syndrome defects.
///
/// The defect graph has one node per Z check plus a single boundary node;
/// every data qubit is an edge (between its two checks, or between its only
/// check and the boundary). Shortest paths are precomputed by BFS. Pairings
/// are enumerated by a memoised recursion that always matches the
/// lowest-index open defect, either to the boundary or to a later defect.
#[derive(Clone, Debug)]
pub struct MatchingReferee {
    num_qubits: usize,
    num_checks: usize,
    /// `dist[a][b]` over nodes `0..=num_checks` (last is the boundary).
    dist: Vec<Vec<u32>>,
    /// Qubits on the chosen shortest path between two nodes.
    path: Vec<Vec<u128>>,
}

impl MatchingReferee {
    pub fn new(layout: &CodeLayout) -> Self {
        let num_checks = layout.num_z_checks();
        let boundary = num_checks;
        let nodes = num_checks + 1;

        // adjacency: (neighbour, qubit), qubit-index order
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for q in 0..layout.num_qubits() {
            let mask = layout.z_checks_of_qubit(q);
            let checks: Vec<usize> = (0..num_checks).filter(|j| mask >> j & 1 == 1).collect();
            let (a, b) = match checks.as_slice() {
                [a] => (*a, boundary),
                [a, b] => (*a, *b),
                other => panic!("qubit {q} touches {} Z checks", other.len()),
            };
            adjacency[a].push((b, q));
            adjacency[b].push((a, q));
        }
        for adj in &mut adjacency {
            adj.sort_unstable_by_key(|&(_, q)| q);
        }

        let mut dist = vec![vec![u32::MAX; nodes]; nodes];
        let mut path = vec![vec![0u128; nodes]; nodes];
        for source in 0..nodes {
            let d = &mut dist[source];
            let p = &mut path[source];
            d[source] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                for &(v, q) in &adjacency[u] {
                    if d[v] == u32::MAX {
                        d[v] = d[u] + 1;
                        p[v] = p[u] | 1 << q;
                        queue.push_back(v);
                    }
                }
            }
        }
        Self {
            num_qubits: layout.num_qubits(),
            num_checks,
            dist,
            path,
        }
    }

    /// Shortest-path length between two checks, or to the boundary when `b` is `None`.
    pub fn distance(&self, a: usize, b: Option<usize>) -> u32 {
        self.dist[a][b.unwrap_or(self.num_checks)]
    }

    fn solve(&self, defects: &[usize]) -> u128 {
        let boundary = self.num_checks;
        let full: u64 = if defects.len() == 64 {
            u64::MAX
        } else {
            (1u64 << defects.len()) - 1
        };
        // memo: open-set -> (cost, partner of lowest open defect; None = boundary)
        let mut memo: HashMap<u64, (u32, Option<usize>)> = HashMap::new();

        fn best(
            open: u64,
            defects: &[usize],
            dist: &[Vec<u32>],
            boundary: usize,
            memo: &mut HashMap<u64, (u32, Option<usize>)>,
        ) -> u32 {
            if open == 0 {
                return 0;
            }
            if let Some(&(cost, _)) = memo.get(&open) {
                return cost;
            }
            let i = open.trailing_zeros() as usize;
            let rest = open & !(1 << i);
            let mut choice = (
                dist[defects[i]][boundary] + best(rest, defects, dist, boundary, memo),
                None,
            );
            let mut others = rest;
            while others != 0 {
                let j = others.trailing_zeros() as usize;
                others &= others - 1;
                let cost = dist[defects[i]][defects[j]]
                    + best(rest & !(1 << j), defects, dist, boundary, memo);
                if cost < choice.0 {
                    choice = (cost, Some(j));
                }
            }
            memo.insert(open, choice);
            choice.0
        }

        best(full, defects, &self.dist, boundary, &mut memo);

        let mut flips = 0u128;
        let mut open = full;
        while open != 0 {
            let i = open.trailing_zeros() as usize;
            let (_, partner) = memo[&open];
            open &= !(1 << i);
            match partner {
                None => flips ^= self.path[defects[i]][boundary],
                Some(j) => {
                    flips ^= self.path[defects[i]][defects[j]];
                    open &= !(1 << j);
                }
            }
        }
        flips
    }
}

impl Referee for MatchingReferee {
    fn name(&self) -> &'static str {
        "matching"
    }

    fn correction(&self, syndrome: &Syndrome) -> Result<Correction> {
        if syndrome.len() != self.num_checks {
            return Err(Error::LengthMismatch {
                expected: self.num_checks,
                actual: syndrome.len(),
            });
        }
        let defects: Vec<usize> = syndrome.defects().collect();
        let flips = self.solve(&defects);
        Ok(Correction(ErrorConfig::from_bits(self.num_qubits, flips)))
    }
}

/// Syndrome-indexed table of matching corrections. Only for layouts with at
/// most [`LookupReferee::MAX_CHECKS`] Z checks (d <= 5).
#[derive(Clone, Debug)]
pub struct LookupReferee {
    num_qubits: usize,
    num_checks: usize,
    table: Vec<u128>,
}

impl LookupReferee {
    pub const MAX_CHECKS: usize = 16;

    pub fn new(layout: &CodeLayout) -> Result<Self> {
        let num_checks = layout.num_z_checks();
        if num_checks > Self::MAX_CHECKS {
            return Err(Error::Config(format!(
                "lookup referee supports at most {} checks, layout has {num_checks}",
                Self::MAX_CHECKS
            )));
        }
        let matching = MatchingReferee::new(layout);
        let table = (0..1u64 << num_checks)
            .map(|bits| {
                let defects: Vec<usize> = (0..num_checks).filter(|j| bits >> j & 1 == 1).collect();
                matching.solve(&defects)
            })
            .collect();
        Ok(Self {
            num_qubits: layout.num_qubits(),
            num_checks,
            table,
        })
    }
}

impl Referee for LookupReferee {
    fn name(&self) -> &'static str {
        "lookup"
    }

    fn correction(&self, syndrome: &Syndrome) -> Result<Correction> {
        if syndrome.len() != self.num_checks {
            return Err(Error::LengthMismatch {
                expected: self.num_checks,
                actual: syndrome.len(),
            });
        }
        Ok(Correction(ErrorConfig::from_bits(
            self.num_qubits,
            self.table[syndrome.bits() as usize],
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_layout;

    #[test]
    fn zero_syndrome_gives_empty_correction() {
        for d in [3, 5, 7] {
            let layout = build_layout(d).unwrap();
            let r = MatchingReferee::new(&layout);
            assert!(r.correction(&layout.empty_syndrome()).unwrap().flips().is_empty());
        }
    }

    #[test]
    fn adjacent_defects_use_shared_qubit() {
        let layout = build_layout(3).unwrap();
        let r = MatchingReferee::new(&layout);
        // Centre qubit sits between two bulk Z plaquettes.
        let q = layout.qubit_index(1, 1);
        let s = layout.z_syndrome(&ErrorConfig::from_qubits(9, [q])).unwrap();
        assert_eq!(s.weight(), 2);
        let c = r.correction(&s).unwrap();
        assert_eq!(c.flips().qubits().collect::<Vec<_>>(), vec![q]);
    }

    #[test]
    fn single_defect_matches_to_boundary() {
        let layout = build_layout(3).unwrap();
        let r = MatchingReferee::new(&layout);
        // Corner qubit touches a single Z check.
        let s = layout.z_syndrome(&ErrorConfig::from_qubits(9, [0])).unwrap();
        assert_eq!(s.weight(), 1);
        let c = r.correction(&s).unwrap();
        assert_eq!(c.weight(), 1);
        assert_eq!(layout.z_syndrome(c.flips()).unwrap(), s);
    }

    #[test]
    fn weight_one_errors_survive() {
        for d in [3, 5] {
            let layout = build_layout(d).unwrap();
            let r = MatchingReferee::new(&layout);
            assert!(survives(&layout, &r, &layout.empty_errors()).unwrap());
            for q in 0..layout.num_qubits() {
                let e = ErrorConfig::from_qubits(layout.num_qubits(), [q]);
                assert!(survives(&layout, &r, &e).unwrap(), "d={d} q={q}");
            }
        }
    }

    #[test]
    fn logical_error_is_fatal() {
        let layout = build_layout(5).unwrap();
        let r = MatchingReferee::new(&layout);
        assert!(!survives(&layout, &r, &layout.logical_x()).unwrap());
    }

    #[test]
    fn lookup_agrees_with_matching() {
        let layout = build_layout(5).unwrap();
        let matching = MatchingReferee::new(&layout);
        let lookup = LookupReferee::new(&layout).unwrap();
        for bits in (0..1u64 << 12).step_by(7) {
            let s = Syndrome::from_bits(12, bits);
            assert_eq!(matching.correction(&s).unwrap(), lookup.correction(&s).unwrap());
        }
        assert!(LookupReferee::new(&build_layout(7).unwrap()).is_err());
    }

    #[test]
    fn registry_resolves_names() {
        let layout = build_layout(3).unwrap();
        for (name, _) in REFEREES {
            assert_eq!(referee_by_name(name, &layout).unwrap().name(), *name);
        }
        let err = referee_by_name("neural", &layout).unwrap_err();
        assert!(err.to_string().contains("matching"));
    }

    #[test]
    fn rejects_wrong_length() {
        let layout = build_layout(3).unwrap();
        let r = MatchingReferee::new(&layout);
        assert!(r.correction(&Syndrome::zeros(12)).is_err());
    }
}
