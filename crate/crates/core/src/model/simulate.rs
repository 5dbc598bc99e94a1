//! Direct numeric simulation: the block behaviors run on numeric values.

use std::collections::BTreeMap;

use super::{Block, Compiled, Endpoint, Sig, Step};
use crate::blocks::{run_block, BlockKind, BlockRecord, Flag, Registry};
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};
use crate::trace::{BVar, Tracer};

/// Run one behavior call on numeric values; returns outputs and states.
pub(crate) fn run_numeric(
    reg: &Registry,
    b: &Block,
    inputs: Vec<MatValue>,
    state: Vec<MatValue>,
    flag: Flag,
) -> Result<(Vec<MatValue>, Vec<MatValue>)> {
    let def = reg.get(&b.kind)?;
    let mut rec = BlockRecord::new(b.id, inputs.into_iter().map(BVar::numeric).collect(), b.n_out);
    rec.params = b.params.clone();
    rec.state = state.into_iter().map(BVar::numeric).collect();
    let t = Tracer::default();
    run_block(&t, def, &mut rec, flag)?;
    let numeric = |v: &BVar| {
        v.as_numeric()
            .cloned()
            .ok_or_else(|| Error::Block {
                block: b.id,
                source: Box::new(Error::MalformedIR("symbolic value in numeric run".into())),
            })
    };
    let outs = rec.outputs().iter().map(numeric).collect::<Result<_>>()?;
    let states = rec.state.iter().map(numeric).collect::<Result<_>>()?;
    Ok((outs, states))
}

/// Initial states of every stateful block, from a numeric `Init` call.
pub(crate) fn initial_states(c: &Compiled) -> Result<BTreeMap<u64, Vec<MatValue>>> {
    let m = &c.model;
    let mut states = BTreeMap::new();
    for &id in &c.schedule.init {
        let ins = m
            .input_links(id)?
            .iter()
            .map(|l| l.sig.expect("inferred").zeros())
            .collect();
        let (_, z) = run_numeric(&c.registry, m.block(id)?, ins, Vec::new(), Flag::Init)?;
        states.insert(id, z);
    }
    Ok(states)
}

/// Check one step's inputs against the port signatures.
pub(crate) fn check_inputs(sigs: &[Sig], step: &[MatValue]) -> Result<()> {
    if step.len() != sigs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} input values for {} ports",
            step.len(),
            sigs.len()
        )));
    }
    for (k, (s, v)) in sigs.iter().zip(step).enumerate() {
        if Sig::of(v) != *s {
            return Err(Error::ShapeMismatch(format!(
                "input port {} expects {s}, got {}",
                k + 1,
                Sig::of(v)
            )));
        }
    }
    Ok(())
}

struct Sim<'c> {
    c: &'c Compiled,
    links: BTreeMap<u64, MatValue>,
    states: BTreeMap<u64, Vec<MatValue>>,
}

impl Sim<'_> {
    fn inputs(&self, id: u64) -> Result<Vec<MatValue>> {
        Ok(self
            .c
            .model
            .input_links(id)?
            .iter()
            .map(|l| self.links[&l.id].clone())
            .collect())
    }

    fn run(&mut self, id: u64, flag: Flag, selector: Option<usize>) -> Result<()> {
        let m = &self.c.model;
        let b = m.block(id)?;
        let mut ins = self.inputs(id)?;
        if let Some(k) = selector {
            ins.insert(0, MatValue::scalar_of(Dtype::I32, k as f64)?);
        }
        let state = self.states.get(&id).cloned().unwrap_or_default();
        let (outs, state) = run_numeric(&self.c.registry, b, ins, state, flag)?;
        match flag {
            Flag::Output => {
                for (l, v) in m.output_links(id)?.iter().zip(outs) {
                    if let Some(l) = l {
                        self.links.insert(l.id, v);
                    }
                }
            }
            Flag::State => {
                self.states.insert(id, state);
            }
            Flag::Init => unreachable!("initial states come from initial_states"),
        }
        Ok(())
    }
}

/// Simulate one step per entry of `inputs`: every block's output update in
/// schedule order, then every state update. Returns the output port values
/// after each step's output phase.
pub fn simulate(c: &Compiled, inputs: &[Vec<MatValue>]) -> Result<Vec<Vec<MatValue>>> {
    let m = &c.model;
    let links = m
        .links
        .values()
        .map(|l| {
            let v = l.constant.clone().unwrap_or_else(|| l.sig.expect("inferred").zeros());
            (l.id, v)
        })
        .collect();
    let mut sim = Sim {
        c,
        links,
        states: initial_states(c)?,
    };
    let out_links: Vec<u64> = (0..m.outputs.len())
        .map(|k| m.link_into(Endpoint::Output(k)).expect("checked").id)
        .collect();
    let mut result = Vec::with_capacity(inputs.len());
    for step in inputs {
        check_inputs(&m.inputs, step)?;
        for l in m.links.values() {
            if let Endpoint::Input(k) = l.from {
                sim.links.insert(l.id, step[k].clone());
            }
        }
        for s in &c.schedule.output {
            match s {
                Step::Block(id) => {
                    if m.block(*id)?.kind != BlockKind::IfThenElse {
                        sim.run(*id, Flag::Output, None)?;
                    }
                }
                Step::Region {
                    ifthenelse,
                    then,
                    other,
                    select,
                    ..
                } => {
                    let cond = sim.inputs(*ifthenelse)?.remove(0);
                    if !cond.is_scalar() {
                        return Err(Error::ShapeMismatch("IfThenElse input must be 1x1".into()));
                    }
                    let (side, k) = if cond.at(0) > 0.0 { (then, 1) } else { (other, 2) };
                    for &id in side {
                        sim.run(id, Flag::Output, None)?;
                    }
                    sim.run(*select, Flag::Output, Some(k))?;
                }
            }
        }
        result.push(out_links.iter().map(|l| sim.links[l].clone()).collect());
        for &id in &c.schedule.state {
            sim.run(id, Flag::State, None)?;
        }
    }
    Ok(result)
}
