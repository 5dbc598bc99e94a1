//! JSON model files.
//!
//! ```json
//! {
//!   "id": 1000,
//!   "ports": { "inputs": [{"dtype": "f64", "rows": 1, "cols": 1}], "outputs": [null] },
//!   "blocks": [
//!     {"id": 1, "kind": "UnitDelay", "params": {"p1": 0}},
//!     {"id": 2, "kind": "Gain", "params": {"p1": {"dtype": "f64", "rows": 2, "cols": 2, "data": [1, 2, 3, 4]}}}
//!   ],
//!   "links": [{"id": 4, "from": "1.1", "to": ["2.1", "out.1"]}],
//!   "regions": [{"ifthenelse": 5, "then": [6], "else": [], "select": 7}]
//! }
//! ```
//!
//! Endpoints are `block.port`, `in.k` or `out.k`, all 1-based. Matrix
//! literals list `data` row by row; a bare number is an f64 scalar. Block
//! port counts follow from the links unless given as `inputs`/`outputs`;
//! `signatures` declares output types that inference cannot derive.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::Deserialize;

use super::{Block, Endpoint, Link, Model, Region, Sig};
use crate::blocks::BlockKind;
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    id: u64,
    #[serde(default)]
    ports: RawPorts,
    blocks: Vec<RawBlock>,
    links: Vec<RawLink>,
    #[serde(default)]
    regions: Vec<RawRegion>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPorts {
    #[serde(default)]
    inputs: Vec<Sig>,
    #[serde(default)]
    outputs: Vec<Option<Sig>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    id: u64,
    kind: String,
    #[serde(default)]
    params: IndexMap<String, RawMat>,
    inputs: Option<usize>,
    outputs: Option<usize>,
    signatures: Option<Vec<Option<Sig>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMat {
    Scalar(f64),
    Full {
        #[serde(default = "default_dtype")]
        dtype: Dtype,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
}

fn default_dtype() -> Dtype {
    Dtype::F64
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    id: u64,
    from: String,
    to: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    ifthenelse: u64,
    then: Vec<u64>,
    #[serde(rename = "else")]
    other: Vec<u64>,
    select: u64,
}

impl RawMat {
    fn into_value(self) -> Result<MatValue> {
        match self {
            RawMat::Scalar(x) => Ok(MatValue::scalar(x)),
            RawMat::Full {
                dtype,
                rows,
                cols,
                data,
            } => {
                if data.len() != rows * cols {
                    return Err(Error::Parse(format!(
                        "{rows}x{cols} literal with {} entries",
                        data.len()
                    )));
                }
                let rows_data: Vec<&[f64]> = if cols == 0 { Vec::new() } else { data.chunks(cols).collect() };
                if rows_data.is_empty() {
                    return Ok(MatValue::zeros(dtype, rows, cols));
                }
                MatValue::from_rows(dtype, &rows_data)
            }
        }
    }
}

fn parse_endpoint(s: &str) -> Result<Endpoint> {
    let bad = || Error::Parse(format!("bad endpoint `{s}`"));
    let (head, port) = s.split_once('.').ok_or_else(bad)?;
    let port: usize = port.parse().map_err(|_| bad())?;
    let port = port.checked_sub(1).ok_or_else(bad)?;
    Ok(match head {
        "in" => Endpoint::Input(port),
        "out" => Endpoint::Output(port),
        id => Endpoint::Block {
            block: id.parse().map_err(|_| bad())?,
            port,
        },
    })
}

/// Parse a model file. Structural checks against block arities happen in
/// [`Model::check`].
pub fn parse_model(text: &str) -> Result<Model> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let mut links = BTreeMap::new();
    for l in raw.links {
        let link = Link {
            id: l.id,
            from: parse_endpoint(&l.from)?,
            to: l.to.iter().map(|s| parse_endpoint(s)).collect::<Result<_>>()?,
            sig: None,
            constant: None,
        };
        if links.insert(l.id, link).is_some() {
            return Err(Error::Parse(format!("duplicate link id {}", l.id)));
        }
    }

    let mut blocks = BTreeMap::new();
    for b in raw.blocks {
        let kind = BlockKind::parse(&b.kind)?;
        let mut params = IndexMap::new();
        for (name, m) in b.params {
            params.insert(name, m.into_value()?);
        }
        let used = |input: bool| {
            links
                .values()
                .flat_map(|l: &Link| {
                    let ends: Vec<Endpoint> = if input { l.to.clone() } else { vec![l.from] };
                    ends
                })
                .filter_map(|e| match e {
                    Endpoint::Block { block, port } if block == b.id => Some(port + 1),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
        };
        let n_in = b.inputs.unwrap_or_else(|| used(true));
        let n_out = b
            .outputs
            .or(b.signatures.as_ref().map(Vec::len))
            .unwrap_or_else(|| used(false).max(usize::from(kind == BlockKind::Const)));
        let outputs = b.signatures.unwrap_or_else(|| vec![None; n_out]);
        let block = Block {
            id: b.id,
            kind,
            params,
            n_in,
            n_out,
            outputs,
        };
        if blocks.insert(b.id, block).is_some() {
            return Err(Error::Parse(format!("duplicate block id {}", b.id)));
        }
    }

    let regions = raw
        .regions
        .into_iter()
        .map(|r| Region {
            ifthenelse: r.ifthenelse,
            then: r.then,
            other: r.other,
            select: r.select,
        })
        .collect();

    Ok(Model {
        id: raw.id,
        blocks,
        links,
        inputs: raw.ports.inputs,
        outputs: raw.ports.outputs,
        regions,
    })
}
