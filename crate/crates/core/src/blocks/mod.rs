//! Block behaviors under the flag protocol.
//!
//! A behavior receives a [`BlockRecord`] whose `io` and `state` entries are
//! [`BVar`]s. The same behavior therefore simulates (every entry numeric) and
//! generates code (entries symbolic) without knowing which.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::matval::MatValue;
use crate::trace::{BVar, Tracer};

pub mod kalman;
pub mod library;

/// What a behavior call should compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flag {
    /// Compute initial states from parameters.
    Init = -1,
    /// Compute outputs from inputs and states.
    Output = 1,
    /// Compute next states from inputs and states.
    State = 2,
}

/// Block type tag; user behaviors are `SciBlk(name)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    UnitDelay,
    Gain,
    Summation,
    Mux,
    RelationalOp,
    Select,
    IfThenElse,
    Const,
    SciBlk(String),
}

impl BlockKind {
    /// Parse the model-file spelling: a built-in name or `sciblk:<name>`.
    pub fn parse(s: &str) -> Result<BlockKind> {
        Ok(match s {
            "UnitDelay" => BlockKind::UnitDelay,
            "Gain" => BlockKind::Gain,
            "Summation" => BlockKind::Summation,
            "Mux" => BlockKind::Mux,
            "RelationalOp" => BlockKind::RelationalOp,
            "Select" => BlockKind::Select,
            "IfThenElse" => BlockKind::IfThenElse,
            "Const" => BlockKind::Const,
            _ => match s.strip_prefix("sciblk:") {
                Some(name) if !name.is_empty() => BlockKind::SciBlk(name.to_string()),
                _ => return Err(Error::Parse(format!("unknown block kind `{s}`"))),
            },
        })
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKind::SciBlk(name) => write!(f, "sciblk:{name}"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// One block instance as seen by its behavior.
#[derive(Clone, Debug)]
pub struct BlockRecord {
    pub id: u64,
    /// Inputs first, then outputs.
    pub io: Vec<BVar>,
    pub n_in: usize,
    pub state: Vec<BVar>,
    /// Always numeric: parameters are known at generation time.
    pub params: IndexMap<String, MatValue>,
}

impl BlockRecord {
    /// A record with `n_out` empty output slots and no state.
    pub fn new(id: u64, inputs: Vec<BVar>, n_out: usize) -> Self {
        let n_in = inputs.len();
        let mut io = inputs;
        io.extend((0..n_out).map(|_| BVar::numeric(MatValue::empty())));
        BlockRecord {
            id,
            io,
            n_in,
            state: Vec::new(),
            params: IndexMap::new(),
        }
    }

    pub fn with_param(mut self, name: &str, v: MatValue) -> Self {
        self.params.insert(name.to_string(), v);
        self
    }

    pub fn inputs(&self) -> &[BVar] {
        &self.io[..self.n_in]
    }

    pub fn outputs(&self) -> &[BVar] {
        &self.io[self.n_in..]
    }

    pub fn n_out(&self) -> usize {
        self.io.len() - self.n_in
    }

    /// Input `k`, 0-based.
    pub fn input(&self, k: usize) -> Result<&BVar> {
        self.inputs()
            .get(k)
            .ok_or_else(|| Error::IndexOutOfRange(format!("input {} of block {}", k + 1, self.id)))
    }

    /// Output `k`, 0-based.
    pub fn output(&self, k: usize) -> Result<&BVar> {
        self.outputs()
            .get(k)
            .ok_or_else(|| Error::IndexOutOfRange(format!("output {} of block {}", k + 1, self.id)))
    }

    pub fn set_output(&mut self, k: usize, v: BVar) -> Result<()> {
        if k >= self.n_out() {
            return Err(Error::IndexOutOfRange(format!(
                "output {} of block {}",
                k + 1,
                self.id
            )));
        }
        self.io[self.n_in + k] = v;
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&MatValue> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Param(format!("block {} has no parameter `{name}`", self.id)))
    }
}

/// Behavior of one block kind. Errors raised through [`crate::Val`]
/// operators are collected by the tracer and reported after the call.
pub type Behavior = Arc<dyn Fn(&Tracer, &mut BlockRecord, Flag) -> Result<()> + Send + Sync>;

/// Port and state counts a block kind accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arity {
    pub min_inputs: usize,
    /// `None` for unbounded.
    pub max_inputs: Option<usize>,
    pub outputs: usize,
    pub states: usize,
    /// Whether an output depends on same-step inputs.
    pub feedthrough: bool,
}

impl Arity {
    pub fn fixed(inputs: usize, outputs: usize, states: usize) -> Self {
        Arity {
            min_inputs: inputs,
            max_inputs: Some(inputs),
            outputs,
            states,
            feedthrough: true,
        }
    }

    pub fn accepts(&self, inputs: usize, outputs: usize) -> bool {
        inputs >= self.min_inputs
            && self.max_inputs.is_none_or(|m| inputs <= m)
            && outputs == self.outputs
    }
}

#[derive(Clone)]
pub struct BlockDef {
    pub arity: Arity,
    pub behavior: Behavior,
}

/// Behaviors keyed by block kind.
#[derive(Clone, Default)]
pub struct Registry {
    defs: HashMap<BlockKind, BlockDef>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The built-in library plus the `ekf` user block.
    pub fn standard() -> Self {
        let mut r = Registry::new();
        library::register(&mut r);
        r.register_sciblk("ekf", kalman::arity(), kalman::behavior);
        r
    }

    pub fn register(
        &mut self,
        kind: BlockKind,
        arity: Arity,
        f: impl Fn(&Tracer, &mut BlockRecord, Flag) -> Result<()> + Send + Sync + 'static,
    ) {
        self.defs.insert(
            kind,
            BlockDef {
                arity,
                behavior: Arc::new(f),
            },
        );
    }

    pub fn register_sciblk(
        &mut self,
        name: &str,
        arity: Arity,
        f: impl Fn(&Tracer, &mut BlockRecord, Flag) -> Result<()> + Send + Sync + 'static,
    ) {
        self.register(BlockKind::SciBlk(name.to_string()), arity, f);
    }

    pub fn get(&self, kind: &BlockKind) -> Result<&BlockDef> {
        self.defs
            .get(kind)
            .ok_or_else(|| Error::UnknownName(format!("block kind `{kind}`")))
    }
}

/// Call a behavior and surface any error it raised, tagged with the block id.
pub fn run_block(t: &Tracer, def: &BlockDef, rec: &mut BlockRecord, flag: Flag) -> Result<()> {
    let id = rec.id;
    (def.behavior)(t, rec, flag)
        .and_then(|()| t.check())
        .map_err(|e| e.in_block(id))
}
