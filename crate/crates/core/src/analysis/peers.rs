//! Relational peers: units whose treatment has a directed path to another
//! unit's response.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::ground::CausalGraph;
use crate::instance::Tuple;

/// unit -> ordered peer units. A unit is never its own peer.
#[derive(Debug, Clone, Default)]
pub struct PeerMap {
    peers: BTreeMap<Tuple, Vec<Tuple>>,
}

impl PeerMap {
    pub fn peers(&self, unit: &[String]) -> &[Tuple] {
        self.peers.get(unit).map_or(&[], Vec::as_slice)
    }

    pub fn units(&self) -> impl Iterator<Item = &Tuple> {
        self.peers.keys()
    }

    pub fn insert(&mut self, unit: Tuple, peers: Vec<Tuple>) {
        self.peers.insert(unit, peers);
    }
}

/// For each grounded response node `Y[x]`, the peers are the units `p != x`
/// with a directed path from `T[p]` to `Y[x]` in the (aggregate-extended)
/// graph.
pub fn compute_peers(graph: &CausalGraph, treatment_attr: &str, response_attr: &str) -> PeerMap {
    let entries: Vec<(Tuple, Vec<Tuple>)> = graph
        .nodes_of_attr(response_attr)
        .par_iter()
        .map(|&y| {
            let unit = graph.node(y).args.clone();
            let peers: Vec<Tuple> = graph
                .ancestors(y)
                .into_iter()
                .filter(|&n| graph.node(n).attr == treatment_attr)
                .map(|n| graph.node(n).args.clone())
                .filter(|args| *args != unit)
                .collect();
            (unit, peers)
        })
        .collect();
    let mut map = PeerMap::default();
    for (unit, peers) in entries {
        map.insert(unit, peers);
    }
    map
}
