//! Block-diagram models: file format, compilation (type inference,
//! constant propagation, scheduling), code generation and direct simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use serde::Deserialize;

use crate::blocks::{Arity, BlockKind, Registry};
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};

mod format;
mod generate;
mod infer;
mod schedule;
mod simulate;

pub use format::parse_model;
pub use generate::{generate, GenerateOptions, Generated};
pub use infer::{infer, propagate_constants};
pub use schedule::{schedule, Schedule, Step};
pub use simulate::simulate;

/// Type and shape of a signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
pub struct Sig {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
}

impl Sig {
    pub fn new(dtype: Dtype, rows: usize, cols: usize) -> Self {
        Sig { dtype, rows, cols }
    }

    pub fn of(v: &MatValue) -> Self {
        Sig::new(v.dtype(), v.rows(), v.cols())
    }

    pub fn zeros(&self) -> MatValue {
        MatValue::zeros(self.dtype, self.rows, self.cols)
    }
}

impl fmt::Display for Sig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}x{}", self.dtype, self.rows, self.cols)
    }
}

/// One end of a link; ports are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Block { block: u64, port: usize },
    /// Super Block input port.
    Input(usize),
    /// Super Block output port.
    Output(usize),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Block { block, port } => write!(f, "{block}.{}", port + 1),
            Endpoint::Input(k) => write!(f, "in.{}", k + 1),
            Endpoint::Output(k) => write!(f, "out.{}", k + 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub id: u64,
    pub kind: BlockKind,
    pub params: IndexMap<String, MatValue>,
    pub n_in: usize,
    pub n_out: usize,
    /// Declared output signatures; inferred when absent.
    pub outputs: Vec<Option<Sig>>,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub id: u64,
    pub from: Endpoint,
    pub to: Vec<Endpoint>,
    /// Filled by [`infer`].
    pub sig: Option<Sig>,
    /// Filled by [`propagate_constants`].
    pub constant: Option<MatValue>,
}

/// Blocks run only when the IfThenElse input is positive (`then`) or not
/// (`other`); the Select merges one output from each side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub ifthenelse: u64,
    pub then: Vec<u64>,
    pub other: Vec<u64>,
    pub select: u64,
}

#[derive(Clone, Debug)]
pub struct Model {
    /// Super Block id; prefixes every generated name.
    pub id: u64,
    pub blocks: BTreeMap<u64, Block>,
    pub links: BTreeMap<u64, Link>,
    pub inputs: Vec<Sig>,
    /// Declared output signatures; inferred when absent.
    pub outputs: Vec<Option<Sig>>,
    pub regions: Vec<Region>,
}

impl Model {
    pub fn block(&self, id: u64) -> Result<&Block> {
        self.blocks
            .get(&id)
            .ok_or_else(|| Error::UnknownName(format!("block {id}")))
    }

    /// The link driving `to`, if any.
    pub fn link_into(&self, to: Endpoint) -> Option<&Link> {
        self.links.values().find(|l| l.to.contains(&to))
    }

    /// The link driven by `from`, if any.
    pub fn link_from(&self, from: Endpoint) -> Option<&Link> {
        self.links.values().find(|l| l.from == from)
    }

    /// Links feeding each input of `block`, in port order.
    pub fn input_links(&self, block: u64) -> Result<Vec<&Link>> {
        let b = self.block(block)?;
        (0..b.n_in)
            .map(|port| {
                self.link_into(Endpoint::Block { block, port })
                    .ok_or_else(|| Error::Parse(format!("input {} of block {block} is unconnected", port + 1)))
            })
            .collect()
    }

    /// Links driven by each output of `block`; unconnected outputs are `None`.
    pub fn output_links(&self, block: u64) -> Result<Vec<Option<&Link>>> {
        let b = self.block(block)?;
        Ok((0..b.n_out)
            .map(|port| self.link_from(Endpoint::Block { block, port }))
            .collect())
    }

    /// The region a block belongs to, and whether it is on the `then` side.
    /// The Select and IfThenElse themselves belong to no branch.
    pub fn branch_of(&self, block: u64) -> Option<(usize, bool)> {
        self.regions.iter().enumerate().find_map(|(i, r)| {
            if r.then.contains(&block) {
                Some((i, true))
            } else if r.other.contains(&block) {
                Some((i, false))
            } else {
                None
            }
        })
    }

    /// Blocks that hold state, in id order.
    pub fn stateful(&self, reg: &Registry) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for b in self.blocks.values() {
            if reg.get(&b.kind)?.arity.states > 0 {
                out.push(b.id);
            }
        }
        Ok(out)
    }

    /// Structural checks against block arities and region rules.
    pub fn check(&self, reg: &Registry) -> Result<()> {
        for b in self.blocks.values() {
            let a: Arity = reg.get(&b.kind)?.arity;
            if !a.accepts(b.n_in, b.n_out) {
                return Err(Error::Parse(format!(
                    "block {} ({}) cannot have {} inputs and {} outputs",
                    b.id, b.kind, b.n_in, b.n_out
                )));
            }
            if b.outputs.len() != b.n_out {
                return Err(Error::Parse(format!("block {} declares {} output signatures", b.id, b.outputs.len())));
            }
        }
        let mut driven = BTreeSet::new();
        for l in self.links.values() {
            self.check_endpoint(l, l.from, true)?;
            if l.to.is_empty() {
                return Err(Error::Parse(format!("link {} has no destination", l.id)));
            }
            for &to in &l.to {
                self.check_endpoint(l, to, false)?;
                if !driven.insert(to) {
                    return Err(Error::Parse(format!("{to} is driven by more than one link")));
                }
            }
        }
        for b in self.blocks.values() {
            self.input_links(b.id)?;
        }
        for k in 0..self.outputs.len() {
            if self.link_into(Endpoint::Output(k)).is_none() {
                return Err(Error::Parse(format!("output port {} is unconnected", k + 1)));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.regions {
            let ite = self.block(r.ifthenelse)?;
            let sel = self.block(r.select)?;
            if ite.kind != BlockKind::IfThenElse || sel.kind != BlockKind::Select || sel.n_in != 2 {
                return Err(Error::Parse(format!(
                    "region of block {} needs an IfThenElse and a two-input Select",
                    r.ifthenelse
                )));
            }
            for &id in r.then.iter().chain(&r.other).chain([&r.ifthenelse, &r.select]) {
                let b = self.block(id)?;
                if !seen.insert(id) {
                    return Err(Error::Parse(format!("block {id} appears in two regions")));
                }
                if id != r.ifthenelse && id != r.select && reg.get(&b.kind)?.arity.states > 0 {
                    return Err(Error::Parse(format!("block {id} has state inside a conditional branch")));
                }
            }
        }
        for b in self.blocks.values() {
            let in_region = seen.contains(&b.id);
            if matches!(b.kind, BlockKind::IfThenElse | BlockKind::Select) && !in_region {
                return Err(Error::Parse(format!("{} block {} belongs to no region", b.kind, b.id)));
            }
        }
        Ok(())
    }

    fn check_endpoint(&self, l: &Link, e: Endpoint, source: bool) -> Result<()> {
        let ok = match e {
            Endpoint::Block { block, port } => match self.blocks.get(&block) {
                Some(b) => port < if source { b.n_out } else { b.n_in },
                None => false,
            },
            Endpoint::Input(k) => source && k < self.inputs.len(),
            Endpoint::Output(k) => !source && k < self.outputs.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parse(format!("link {}: bad endpoint {e}", l.id)))
        }
    }
}

/// A model ready for generation and simulation.
#[derive(Clone)]
pub struct Compiled {
    pub model: Model,
    pub registry: Registry,
    pub schedule: Schedule,
}

impl Compiled {
    /// Check, infer, fold constants and schedule.
    pub fn new(mut model: Model, registry: Registry) -> Result<Self> {
        model.check(&registry)?;
        infer(&mut model, &registry)?;
        let schedule = schedule(&model, &registry)?;
        propagate_constants(&mut model, &registry, &schedule)?;
        Ok(Compiled {
            model,
            registry,
            schedule,
        })
    }

    /// Parse and compile with the standard registry.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(parse_model(text)?, Registry::standard())
    }

    pub fn input_sigs(&self) -> &[Sig] {
        &self.model.inputs
    }

    /// Inferred output port signatures.
    pub fn output_sigs(&self) -> Vec<Sig> {
        (0..self.model.outputs.len())
            .map(|k| {
                self.model
                    .link_into(Endpoint::Output(k))
                    .and_then(|l| l.sig)
                    .expect("compiled model has typed outputs")
            })
            .collect()
    }
}
