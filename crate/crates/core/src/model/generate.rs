//! The code generation script: block behaviors traced on symbolic values.
//!
//! Naming: states are `z_<id><k>` (k counts states from 1 in block id
//! order), persistent links `link<id><link>`, functions
//! `updateOutput<id><n>` (conditional branches first, then the main output
//! function), `updateState<id><n>` and `initialize<id>`. Arguments are
//! `inouts1..`, inputs first, then outputs.

use std::collections::{BTreeMap, BTreeSet};

use super::simulate::initial_states;
use super::{Compiled, Endpoint, Link, Step};
use crate::blocks::library::ifthenelse;
use crate::blocks::{run_block, BlockKind, BlockRecord, Flag};
use crate::cemit::{self, Dispatch, EmitConfig, EmitMode};
use crate::directives::{
    end_function, inouts, inouts_insert, persistent_create, persistent_extract, persistent_insert,
    start_function, FinalizeOptions, IoSeq, PersistentPool,
};
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};
use crate::optimizer::OptOptions;
use crate::trace::{BVar, Program, TraceContext, Tracer};

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub opt: OptOptions,
    pub mode: EmitMode,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            opt: OptOptions::default(),
            mode: EmitMode::Runtime,
        }
    }
}

/// Result of [`generate`].
#[derive(Clone, Debug)]
pub struct Generated {
    /// Optimized IR, `initialize<id>` first.
    pub program: Program,
    pub c: String,
    pub dispatch: Dispatch,
    /// State names per stateful block.
    pub states: BTreeMap<u64, Vec<String>>,
    /// Links kept in statics.
    pub persistent_links: Vec<String>,
    pub warnings: Vec<String>,
}

/// Where a block's output code runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    Main,
    /// Region index and side (`true` for then).
    Branch(usize, bool),
    /// A Select runs in both branch functions of its region.
    Merge(usize),
}

fn producer_place(c: &Compiled, block: u64) -> Place {
    let m = &c.model;
    if let Some((i, side)) = m.branch_of(block) {
        return Place::Branch(i, side);
    }
    match m.regions.iter().position(|r| r.select == block) {
        Some(i) => Place::Merge(i),
        None => Place::Main,
    }
}

fn consumer_place(c: &Compiled, block: u64, port: usize) -> Place {
    match producer_place(c, block) {
        Place::Merge(i) => Place::Branch(i, port == 0),
        p => p,
    }
}

/// Links whose value must survive a function boundary: read by a state
/// update, or produced and consumed in different generated functions.
/// Constants and links touching Super Block ports never need a static.
fn persistent_links(c: &Compiled) -> Result<BTreeSet<u64>> {
    let m = &c.model;
    let mut out = BTreeSet::new();
    for l in m.links.values() {
        let Endpoint::Block { block: a, .. } = l.from else { continue };
        if l.constant.is_some() || l.to.iter().any(|e| matches!(e, Endpoint::Output(_))) {
            continue;
        }
        let from = producer_place(c, a);
        for to in &l.to {
            let Endpoint::Block { block: b, port } = *to else { continue };
            let stateful = c.registry.get(&m.block(b)?.kind)?.arity.states > 0;
            if stateful || consumer_place(c, b, port) != from {
                out.insert(l.id);
            }
        }
    }
    Ok(out)
}

struct Gen<'c> {
    c: &'c Compiled,
    t: Tracer,
    pool: PersistentPool,
    io: IoSeq,
    values: BTreeMap<u64, BVar>,
    persistent: BTreeSet<u64>,
    states: BTreeMap<u64, Vec<String>>,
}

impl Gen<'_> {
    fn link_name(&self, l: &Link) -> String {
        format!("link{}{}", self.c.model.id, l.id)
    }

    fn value_of(&self, l: &Link) -> Result<BVar> {
        if let Some(v) = &l.constant {
            return Ok(BVar::numeric(v.clone()));
        }
        if let Endpoint::Input(k) = l.from {
            return self.io.get(&format!("inouts{}", k + 1));
        }
        if let Some(k) = l.to.iter().find_map(|e| match e {
            Endpoint::Output(k) => Some(*k),
            _ => None,
        }) {
            return self.io.get(&self.out_name(k));
        }
        if self.persistent.contains(&l.id) {
            return persistent_extract(&self.pool, &self.link_name(l));
        }
        self.values
            .get(&l.id)
            .cloned()
            .ok_or_else(|| Error::MalformedIR(format!("link {} read before it is written", l.id)))
    }

    fn out_name(&self, k: usize) -> String {
        format!("inouts{}", self.c.model.inputs.len() + k + 1)
    }

    fn bind(&mut self, l: &Link, v: BVar) -> Result<()> {
        if l.constant.is_some() {
            return Ok(());
        }
        let mut ctx = self.t.ctx_mut();
        for e in &l.to {
            if let Endpoint::Output(k) = e {
                let name = self.out_name(*k);
                inouts_insert(&mut ctx, &mut self.io, &name, &v)?;
            }
        }
        if self.persistent.contains(&l.id) {
            let name = self.link_name(l);
            persistent_insert(&mut ctx, &mut self.pool, &name, &v)?;
        }
        drop(ctx);
        self.values.insert(l.id, v);
        Ok(())
    }

    fn run(&mut self, id: u64, flag: Flag, selector: Option<usize>) -> Result<()> {
        let c = self.c;
        let b = c.model.block(id)?;
        let mut ins = c
            .model
            .input_links(id)?
            .into_iter()
            .map(|l| self.value_of(l))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = selector {
            ins.insert(0, BVar::numeric(MatValue::scalar_of(Dtype::I32, k as f64)?));
        }
        let mut rec = BlockRecord::new(id, ins, b.n_out);
        rec.params = b.params.clone();
        if let Some(names) = self.states.get(&id) {
            rec.state = names
                .iter()
                .map(|n| persistent_extract(&self.pool, n))
                .collect::<Result<_>>()?;
        }
        run_block(&self.t, c.registry.get(&b.kind)?, &mut rec, flag)?;
        match flag {
            Flag::Output => {
                for (l, v) in c.model.output_links(id)?.into_iter().zip(rec.outputs().to_vec()) {
                    if let Some(l) = l {
                        self.bind(l, v).map_err(|e| e.in_block(id))?;
                    }
                }
            }
            Flag::State => {
                let names = self.states.get(&id).cloned().unwrap_or_default();
                let mut ctx = self.t.ctx_mut();
                for (n, v) in names.iter().zip(&rec.state) {
                    persistent_insert(&mut ctx, &mut self.pool, n, v).map_err(|e| e.in_block(id))?;
                }
            }
            Flag::Init => unreachable!("initial states are computed numerically"),
        }
        Ok(())
    }

    fn function(&mut self, name: &str, body: impl FnOnce(&mut Self) -> Result<()>) -> Result<()> {
        start_function(&mut self.t.ctx_mut(), name, &self.io)?;
        body(self)?;
        end_function(&mut self.t.ctx_mut(), name)
    }
}

/// Generate the optimized program and its C text.
pub fn generate(c: &Compiled, opts: &GenerateOptions) -> Result<Generated> {
    let m = &c.model;
    let mut g = Gen {
        c,
        t: Tracer::new(TraceContext::new()),
        pool: persistent_create(),
        io: inouts(),
        values: BTreeMap::new(),
        persistent: persistent_links(c)?,
        states: BTreeMap::new(),
    };

    // Initialization pass: numeric, no code.
    let mut k = 0;
    for (id, zs) in initial_states(c)? {
        let mut names = Vec::new();
        for z in zs {
            k += 1;
            let name = format!("z_{}{k}", m.id);
            persistent_insert(&mut g.t.ctx_mut(), &mut g.pool, &name, &BVar::numeric(z))?;
            names.push(name);
        }
        g.states.insert(id, names);
    }
    let mut persistent_links = Vec::new();
    for id in g.persistent.clone() {
        let l = &m.links[&id];
        let name = g.link_name(l);
        let zero = BVar::numeric(l.sig.expect("inferred").zeros());
        persistent_insert(&mut g.t.ctx_mut(), &mut g.pool, &name, &zero)?;
        persistent_links.push(name);
    }
    for (k, s) in m.inputs.iter().enumerate() {
        let v = BVar::numeric(s.zeros());
        inouts_insert(&mut g.t.ctx_mut(), &mut g.io, &format!("inouts{}", k + 1), &v)?;
    }
    for (k, s) in c.output_sigs().iter().enumerate() {
        let name = g.out_name(k);
        inouts_insert(&mut g.t.ctx_mut(), &mut g.io, &name, &BVar::numeric(s.zeros()))?;
    }

    // Branch functions, then the main output function.
    let mut n = 0;
    let mut fname = || {
        n += 1;
        format!("updateOutput{}{n}", m.id)
    };
    let mut branches = BTreeMap::new();
    for s in &c.schedule.output {
        if let Step::Region { index, .. } = s {
            branches.insert(*index, (fname(), fname()));
        }
    }
    let main = fname();
    for s in &c.schedule.output {
        let Step::Region {
            index,
            then,
            other,
            select,
            ..
        } = s
        else {
            continue;
        };
        let (f1, f2) = branches[index].clone();
        for (name, side, k) in [(f1, then, 1), (f2, other, 2)] {
            g.function(&name, |g| {
                for &id in side {
                    g.run(id, Flag::Output, None)?;
                }
                g.run(*select, Flag::Output, Some(k))
            })?;
        }
    }
    g.function(&main, |g| {
        for s in &c.schedule.output {
            match s {
                Step::Block(id) => {
                    if m.block(*id)?.kind != BlockKind::IfThenElse {
                        g.run(*id, Flag::Output, None)?;
                    }
                }
                Step::Region {
                    index,
                    ifthenelse: ite,
                    ..
                } => {
                    let cond = g.value_of(m.input_links(*ite)?[0])?;
                    let (f1, f2) = &branches[index];
                    ifthenelse(&g.t, &cond, g.io.call(f1), g.io.call(f2)).map_err(|e| e.in_block(*ite))?;
                }
            }
        }
        Ok(())
    })?;
    let state_fn = format!("updateState{}{}", m.id, main.trim_start_matches(&format!("updateOutput{}", m.id)));
    g.function(&state_fn, |g| {
        for &id in &c.schedule.state {
            g.run(id, Flag::State, None)?;
        }
        Ok(())
    })?;

    let params = g.io.params();
    let states = g.states;
    let mut ctx = g.t.into_inner()?;
    let warnings = ctx.warnings().to_vec();
    let program = crate::directives::finalize_program(
        &mut ctx,
        &FinalizeOptions {
            opt: opts.opt.clone(),
            suffix: m.id.to_string(),
        },
    )?;
    let n_in = m.inputs.len();
    let dispatch = Dispatch {
        output_fn: main,
        state_fn,
        init_fn: format!("initialize{}", m.id),
        inputs: params[..n_in].to_vec(),
        outputs: params[n_in..].to_vec(),
    };
    let c_text = match opts.mode {
        EmitMode::Fragment => cemit::emit_program(&program, &EmitConfig::fragment()),
        mode => cemit::emit_program(&program, &EmitConfig::unit(m.id, mode, dispatch.clone())),
    };
    Ok(Generated {
        program,
        c: c_text,
        dispatch,
        states,
        persistent_links,
        warnings,
    })
}
