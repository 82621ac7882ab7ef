//! Covariate-neighbor sets for each state.
//!
//! The shipped file lists contiguous-state land borders in both directions
//! plus one-directional assignments for Alaska (WA) and Hawaii (CA, OR,
//! WA). Those two states receive their assigned neighbors as covariates;
//! the reverse edges are added only by [`AdjacencyGraph::symmetrized`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::states::{is_state, state_codes};

/// The adjacency file bundled with the crate.
pub const DEFAULT_ADJACENCY_CSV: &str = include_str!("../data/adjacency.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    edges: BTreeMap<String, BTreeSet<String>>,
}

impl Default for AdjacencyGraph {
    fn default() -> Self {
        Self::parse(DEFAULT_ADJACENCY_CSV).expect("bundled adjacency file is valid")
    }
}

impl AdjacencyGraph {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `target,neighbor` CSV with a header row; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.len() != 2
            || !headers[0].eq_ignore_ascii_case("target")
            || !headers[1].eq_ignore_ascii_case("neighbor")
        {
            return Err(Error::Parse("adjacency header must be `target,neighbor`".into()));
        }
        let mut edges: BTreeMap<String, BTreeSet<String>> =
            state_codes().map(|c| (c.to_string(), BTreeSet::new())).collect();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(Error::Parse(format!("adjacency line {line}: expected 2 fields")));
            }
            let (a, b) = (rec[0].to_ascii_uppercase(), rec[1].to_ascii_uppercase());
            for code in [&a, &b] {
                if !is_state(code) {
                    return Err(Error::Parse(format!("adjacency line {line}: unknown state {code:?}")));
                }
            }
            if a == b {
                return Err(Error::Parse(format!("adjacency line {line}: self-loop on {a}")));
            }
            edges.get_mut(&a).expect("all states seeded").insert(b);
        }
        Ok(Self { edges })
    }

    /// Neighbor set of `state`, alphabetically ordered.
    pub fn neighbors(&self, state: &str) -> Result<&BTreeSet<String>> {
        self.edges
            .get(state)
            .ok_or_else(|| Error::Domain(format!("unknown state code {state:?}")))
    }

    /// Adds the reverse of every edge.
    pub fn symmetrized(&self) -> Self {
        let mut edges = self.edges.clone();
        for (a, ns) in &self.edges {
            for b in ns {
                edges.get_mut(b).expect("validated").insert(a.clone());
            }
        }
        Self { edges }
    }

    /// Drops every state outside `keep` from all neighbor sets (and as keys).
    pub fn restricted(&self, keep: &[&str]) -> Self {
        let edges = self
            .edges
            .iter()
            .filter(|(a, _)| keep.contains(&a.as_str()))
            .map(|(a, ns)| {
                let ns = ns.iter().filter(|b| keep.contains(&b.as_str())).cloned().collect();
                (a.clone(), ns)
            })
            .collect();
        Self { edges }
    }

    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.edges.keys().map(String::as_str)
    }

    /// Directed edge list, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .flat_map(|(a, ns)| ns.iter().map(move |b| (a.as_str(), b.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(g: &AdjacencyGraph, s: &str) -> Vec<String> {
        g.neighbors(s).unwrap().iter().cloned().collect()
    }

    #[test]
    fn alaska_and_hawaii() {
        let g = AdjacencyGraph::default();
        assert_eq!(names(&g, "AK"), ["WA"]);
        assert_eq!(names(&g, "HI"), ["CA", "OR", "WA"]);
        assert!(!g.neighbors("WA").unwrap().contains("AK"));
        assert!(!g.neighbors("CA").unwrap().contains("HI"));
        let s = g.symmetrized();
        assert!(s.neighbors("WA").unwrap().contains("AK"));
        assert!(s.neighbors("OR").unwrap().contains("HI"));
    }

    #[test]
    fn missouri() {
        let g = AdjacencyGraph::default();
        assert_eq!(names(&g, "MO"), ["AR", "IA", "IL", "KS", "KY", "NE", "OK", "TN"]);
    }

    #[test]
    fn unknown_code() {
        let g = AdjacencyGraph::default();
        assert!(matches!(g.neighbors("DC"), Err(Error::Domain(_))));
    }

    #[test]
    fn mainland_symmetric_and_nonempty() {
        let g = AdjacencyGraph::default();
        for (a, b) in g.edges() {
            assert_ne!(a, b);
            if a != "AK" && a != "HI" {
                assert!(g.neighbors(b).unwrap().contains(a), "{a}-{b}");
            }
        }
        for s in state_codes() {
            assert!(!g.neighbors(s).unwrap().is_empty(), "{s}");
        }
        let mainland = g.edges().filter(|(a, _)| *a != "AK" && *a != "HI").count();
        assert_eq!(mainland, 2 * 105);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(AdjacencyGraph::parse("a,b\nGA,FL\n").is_err());
        assert!(AdjacencyGraph::parse("target,neighbor\nGA,GA\n").is_err());
        assert!(AdjacencyGraph::parse("target,neighbor\nGA,XX\n").is_err());
    }

    #[test]
    fn restriction() {
        let g = AdjacencyGraph::default().restricted(&["WA", "OR", "ID"]);
        assert_eq!(names(&g, "WA"), ["ID", "OR"]);
        assert!(g.neighbors("CA").is_err());
    }
}
