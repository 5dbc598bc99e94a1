//! Link type inference and constant folding.

use std::collections::{BTreeMap, BTreeSet};

use super::simulate::run_numeric;
use super::{Block, Endpoint, Model, Schedule, Sig};
use crate::blocks::{BlockKind, Flag, Registry};
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};

/// Output signatures of `b` given its input signatures, found by running the
/// behavior on zeros. Declared signatures take precedence.
fn output_sigs(reg: &Registry, b: &Block, ins: &[Sig]) -> Result<Vec<Sig>> {
    if let Some(declared) = b.outputs.iter().copied().collect::<Option<Vec<Sig>>>() {
        return Ok(declared);
    }
    if b.kind == BlockKind::Select && ins.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Conflict(format!(
            "Select block {} merges {} and {}",
            b.id, ins[0], ins[1]
        )));
    }
    let mut inputs: Vec<MatValue> = ins.iter().map(Sig::zeros).collect();
    if b.kind == BlockKind::Select {
        inputs.insert(0, MatValue::scalar_of(Dtype::I32, 1.0)?);
    }
    let state = if reg.get(&b.kind)?.arity.states > 0 {
        run_numeric(reg, b, inputs.clone(), Vec::new(), Flag::Init)?.1
    } else {
        Vec::new()
    };
    let (outs, _) = run_numeric(reg, b, inputs, state, Flag::Output)?;
    Ok(outs.iter().map(Sig::of).collect())
}

/// A guess for outputs when inputs are not yet known, breaking cycles
/// through delays: declared signatures, else the delay's initial value.
fn seed_sigs(b: &Block) -> Option<Vec<Sig>> {
    if let Some(declared) = b.outputs.iter().copied().collect::<Option<Vec<Sig>>>() {
        return Some(declared);
    }
    match b.kind {
        BlockKind::UnitDelay => b.params.get("p1").map(|p| vec![Sig::of(p)]),
        _ => None,
    }
}

fn assign(sigs: &mut BTreeMap<u64, Sig>, link: u64, sig: Sig) -> Result<bool> {
    match sigs.get(&link) {
        Some(old) if *old == sig => Ok(false),
        Some(old) => Err(Error::Conflict(format!("link {link} is {old} and {sig}"))),
        None => {
            sigs.insert(link, sig);
            Ok(true)
        }
    }
}

/// Annotate every link with its type and shape.
pub fn infer(model: &mut Model, reg: &Registry) -> Result<()> {
    let mut sigs: BTreeMap<u64, Sig> = BTreeMap::new();
    for l in model.links.values() {
        if let Endpoint::Input(k) = l.from {
            sigs.insert(l.id, model.inputs[k]);
        }
    }
    let input_sigs = |sigs: &BTreeMap<u64, Sig>, b: &Block| -> Result<Option<Vec<Sig>>> {
        Ok(model
            .input_links(b.id)?
            .iter()
            .map(|l| sigs.get(&l.id).copied())
            .collect())
    };
    let mut done = BTreeSet::new();
    let mut seeded = BTreeSet::new();
    loop {
        let mut progress = false;
        for b in model.blocks.values() {
            if done.contains(&b.id) {
                continue;
            }
            let Some(ins) = input_sigs(&sigs, b)? else { continue };
            let outs = output_sigs(reg, b, &ins).map_err(|e| e.in_block(b.id))?;
            for (l, s) in model.output_links(b.id)?.iter().zip(outs) {
                if let Some(l) = l {
                    assign(&mut sigs, l.id, s)?;
                }
            }
            done.insert(b.id);
            progress = true;
        }
        if progress {
            continue;
        }
        let seed = model
            .blocks
            .values()
            .filter(|b| !done.contains(&b.id) && !seeded.contains(&b.id))
            .find_map(|b| seed_sigs(b).map(|s| (b.id, s)));
        let Some((id, outs)) = seed else { break };
        seeded.insert(id);
        for (l, s) in model.output_links(id)?.iter().zip(outs) {
            if let Some(l) = l {
                assign(&mut sigs, l.id, s)?;
            }
        }
    }
    if let Some(l) = model.links.values().find(|l| !sigs.contains_key(&l.id)) {
        return Err(Error::Undetermined(format!("link {}", l.id)));
    }
    for (k, declared) in model.outputs.iter().enumerate() {
        let l = model.link_into(Endpoint::Output(k)).expect("checked");
        if let Some(d) = declared {
            if sigs[&l.id] != *d {
                return Err(Error::Conflict(format!(
                    "output port {} declared {d}, link {} is {}",
                    k + 1,
                    l.id,
                    sigs[&l.id]
                )));
            }
        }
    }
    for l in model.links.values_mut() {
        l.sig = Some(sigs[&l.id]);
    }
    Ok(())
}

/// Mark links whose value is fixed at generation time: outputs of
/// stateless blocks fed only by constants. Delay outputs, Select outputs
/// and IfThenElse controls never fold.
pub fn propagate_constants(model: &mut Model, reg: &Registry, schedule: &Schedule) -> Result<()> {
    for id in schedule.output_blocks() {
        let b = model.block(id)?.clone();
        if matches!(b.kind, BlockKind::Select | BlockKind::IfThenElse)
            || reg.get(&b.kind)?.arity.states > 0
        {
            continue;
        }
        let ins: Option<Vec<MatValue>> = model
            .input_links(id)?
            .iter()
            .map(|l| l.constant.clone())
            .collect();
        let Some(ins) = ins else { continue };
        let (outs, _) = run_numeric(reg, &b, ins, Vec::new(), Flag::Output)?;
        let targets: Vec<Option<u64>> = model
            .output_links(id)?
            .iter()
            .map(|l| l.map(|l| l.id))
            .collect();
        for (l, v) in targets.into_iter().zip(outs) {
            if let Some(l) = l {
                model.links.get_mut(&l).expect("link exists").constant = Some(v);
            }
        }
    }
    Ok(())
}
