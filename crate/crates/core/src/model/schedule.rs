//! Block execution order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{Endpoint, Model};
use crate::blocks::Registry;
use crate::error::{Error, Result};

/// One unit of the output phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Block(u64),
    /// A conditional region: evaluate the IfThenElse input, run one side,
    /// then the Select.
    Region {
        index: usize,
        ifthenelse: u64,
        then: Vec<u64>,
        other: Vec<u64>,
        select: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// Stateful blocks, initialized in this order.
    pub init: Vec<u64>,
    pub output: Vec<Step>,
    /// Stateful blocks, updated in this order after all outputs.
    pub state: Vec<u64>,
}

impl Schedule {
    /// Every block of the output phase in execution order.
    pub fn output_blocks(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for s in &self.output {
            match s {
                Step::Block(b) => out.push(*b),
                Step::Region {
                    ifthenelse,
                    then,
                    other,
                    select,
                    ..
                } => {
                    out.push(*ifthenelse);
                    out.extend(then);
                    out.extend(other);
                    out.push(*select);
                }
            }
        }
        out
    }
}

/// Kahn's algorithm over `nodes`, smallest key first among ready nodes.
fn topo(nodes: &BTreeSet<u64>, edges: &BTreeSet<(u64, u64)>) -> std::result::Result<Vec<u64>, Vec<u64>> {
    let mut indeg: BTreeMap<u64, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    for (_, b) in edges {
        *indeg.get_mut(b).expect("edge within nodes") += 1;
    }
    let mut ready: BinaryHeap<Reverse<u64>> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| Reverse(n))
        .collect();
    let mut order = Vec::new();
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n);
        for (_, b) in edges.range((n, 0)..=(n, u64::MAX)) {
            let d = indeg.get_mut(b).expect("edge within nodes");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(*b));
            }
        }
    }
    if order.len() == nodes.len() {
        Ok(order)
    } else {
        let done: BTreeSet<u64> = order.into_iter().collect();
        Err(nodes.difference(&done).copied().collect())
    }
}

/// Order the output phase by direct-feedthrough dependencies, ties broken
/// by ascending block id. A region is scheduled as one unit keyed by its
/// IfThenElse block.
pub fn schedule(model: &Model, reg: &Registry) -> Result<Schedule> {
    let mut node_of: BTreeMap<u64, u64> = model.blocks.keys().map(|&b| (b, b)).collect();
    for r in &model.regions {
        for &b in r.then.iter().chain(&r.other).chain([&r.select]) {
            node_of.insert(b, r.ifthenelse);
        }
    }
    let mut feeds: BTreeSet<(u64, u64)> = BTreeSet::new();
    for l in model.links.values() {
        let Endpoint::Block { block: a, .. } = l.from else { continue };
        for to in &l.to {
            if let Endpoint::Block { block: b, .. } = *to {
                if reg.get(&model.block(b)?.kind)?.arity.feedthrough {
                    feeds.insert((a, b));
                }
            }
        }
    }

    let nodes: BTreeSet<u64> = node_of.values().copied().collect();
    let edges: BTreeSet<(u64, u64)> = feeds
        .iter()
        .map(|&(a, b)| (node_of[&a], node_of[&b]))
        .filter(|(a, b)| a != b)
        .collect();
    let order = topo(&nodes, &edges).map_err(Error::AlgebraicLoop)?;

    let within = |side: &[u64]| -> Result<Vec<u64>> {
        let set: BTreeSet<u64> = side.iter().copied().collect();
        let e: BTreeSet<(u64, u64)> = feeds
            .iter()
            .filter(|(a, b)| set.contains(a) && set.contains(b))
            .copied()
            .collect();
        topo(&set, &e).map_err(Error::AlgebraicLoop)
    };
    let mut output = Vec::new();
    for n in order {
        match model.regions.iter().position(|r| r.ifthenelse == n) {
            Some(index) => {
                let r = &model.regions[index];
                output.push(Step::Region {
                    index,
                    ifthenelse: n,
                    then: within(&r.then)?,
                    other: within(&r.other)?,
                    select: r.select,
                });
            }
            None => output.push(Step::Block(n)),
        }
    }
    let stateful = model.stateful(reg)?;
    Ok(Schedule {
        init: stateful.clone(),
        output,
        state: stateful,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[u64]) -> BTreeSet<u64> {
        xs.iter().copied().collect()
    }

    #[test]
    fn ties_break_by_id() {
        let e: BTreeSet<_> = [(3, 1)].into_iter().collect();
        assert_eq!(topo(&set(&[1, 2, 3]), &e).unwrap(), vec![2, 3, 1]);
    }

    #[test]
    fn cycle_reports_members() {
        let e: BTreeSet<_> = [(1, 2), (2, 1), (3, 1)].into_iter().collect();
        assert_eq!(topo(&set(&[1, 2, 3]), &e).unwrap_err(), vec![1, 2]);
    }
}
