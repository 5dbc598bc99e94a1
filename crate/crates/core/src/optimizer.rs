//! Post-trace cleanup: literal folding, inlining of single-use scalar
//! temporaries, optional copy propagation and dead-code elimination.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::trace::ir::ANY;
use crate::trace::{Decl, Expr, Instr, Param, Program, Storage};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptOptions {
    pub dce: bool,
    pub fold: bool,
    pub copy_propagation: bool,
    /// Substitute scalar temporaries read exactly once into their reader.
    pub inline_scalars: bool,
    /// Extra liveness roots: writes to these names are never removed.
    pub keep: BTreeSet<String>,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            dce: true,
            fold: true,
            copy_propagation: false,
            inline_scalars: true,
            keep: BTreeSet::new(),
        }
    }
}

impl OptOptions {
    /// Every pass off: the output equals the input.
    pub fn none() -> Self {
        OptOptions {
            dce: false,
            fold: false,
            copy_propagation: false,
            inline_scalars: false,
            keep: BTreeSet::new(),
        }
    }

    pub fn keep(mut self, names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.keep.extend(names.into_iter().map(Into::into));
        self
    }
}

/// Scope a body is optimized in: which names are locals of the body.
struct Scope<'a> {
    decls: &'a IndexMap<String, Decl>,
    statics: &'a IndexMap<String, Decl>,
    params: &'a [Param],
}

impl Scope<'_> {
    fn is_local(&self, name: &str) -> bool {
        self.decls
            .get(name)
            .is_some_and(|d| matches!(d.storage, Storage::Local | Storage::LocalStatic))
    }

    fn is_known(&self, name: &str) -> bool {
        self.decls.contains_key(name)
            || self.statics.contains_key(name)
            || self.params.iter().any(|p| p.name == name)
    }
}

/// Optimize one instruction sequence. Returns the new code and the
/// declarations still referenced by it.
pub fn code_optimize(
    code: &[Instr],
    decls: &IndexMap<String, Decl>,
    statics: &IndexMap<String, Decl>,
    params: &[Param],
    opts: &OptOptions,
) -> Result<(Vec<Instr>, IndexMap<String, Decl>)> {
    let scope = Scope {
        decls,
        statics,
        params,
    };
    check_well_formed(code, &scope)?;
    let mut code = code.to_vec();
    loop {
        let before = code.clone();
        if opts.fold {
            fold(&mut code, &scope);
        }
        if opts.inline_scalars {
            inline_single_use(&mut code, &scope);
        }
        if opts.copy_propagation {
            propagate_copies(&mut code, &scope);
        }
        if opts.dce {
            dead_code(&mut code, &scope, &opts.keep);
        }
        if code == before {
            break;
        }
    }
    let used = referenced(&code);
    let decls = decls
        .iter()
        .filter(|(n, d)| {
            !opts.dce || used.contains(n.as_str()) || d.storage == Storage::External
        })
        .map(|(n, d)| (n.clone(), d.clone()))
        .collect();
    Ok((code, decls))
}

/// Optimize every function, then drop statics no function references.
pub fn optimize_program(program: &mut Program, opts: &OptOptions) -> Result<()> {
    for f in &mut program.functions {
        let (code, decls) = code_optimize(&f.code, &f.decls, &program.statics, &f.params, opts)?;
        f.code = code;
        f.decls = decls;
    }
    if opts.dce {
        let used: BTreeSet<String> = program
            .functions
            .iter()
            .flat_map(|f| referenced(&f.code))
            .collect();
        program
            .statics
            .retain(|n, _| used.contains(n) || opts.keep.contains(n));
    }
    Ok(())
}

fn check_well_formed(code: &[Instr], scope: &Scope) -> Result<()> {
    for instr in code {
        let mut names: BTreeSet<String> = instr.reads();
        names.extend(instr.writes().into_iter().filter(|w| *w != ANY).map(String::from));
        if let Some(n) = names.iter().find(|n| !scope.is_known(n)) {
            return Err(Error::MalformedIR(format!("`{n}` is not declared (in `{instr}`)")));
        }
    }
    Ok(())
}

/// Every name an instruction list mentions.
pub fn referenced(code: &[Instr]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for instr in code {
        out.extend(instr.reads());
        out.extend(instr.writes().into_iter().filter(|w| *w != ANY).map(String::from));
    }
    out
}

fn refold(e: Expr) -> Expr {
    e.rewrite(&mut |e| match e {
        Expr::Neg(d, a) => Expr::neg(d, *a),
        Expr::Bin { op, dtype, lhs, rhs } => Expr::bin(op, dtype, *lhs, *rhs),
        Expr::Cmp { op, lhs, rhs } => Expr::cmp(op, *lhs, *rhs),
        Expr::Math(f, args) => Expr::math(f, args),
        Expr::Cast { from, to, arg } => Expr::cast(from, to, *arg),
        Expr::Select {
            dtype,
            cond,
            then,
            other,
        } => Expr::select(dtype, *cond, *then, *other),
        e => e,
    })
}

/// Fold literal subexpressions and substitute scalar temporaries bound to
/// a literal.
fn fold(code: &mut [Instr], scope: &Scope) {
    let mut lits: HashMap<String, Expr> = HashMap::new();
    for instr in code.iter_mut() {
        if let Some(e) = instr.expr_mut() {
            let subst = std::mem::replace(e, Expr::Lit(crate::Dtype::F64, 0.0));
            let subst = if lits.is_empty() {
                subst
            } else {
                subst.rewrite(&mut |x| match x {
                    Expr::Var(ref n) => lits.get(n).cloned().unwrap_or(x),
                    x => x,
                })
            };
            *e = refold(subst);
        }
        if let Instr::Def { name, expr: e @ Expr::Lit(..) } = instr {
            if scope.is_local(name) {
                lits.insert(name.clone(), e.clone());
            }
        }
    }
}

/// Uses of each name that block inlining (array copies, helper operands,
/// call arguments) count as many.
fn use_counts(code: &[Instr]) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for instr in code {
        match instr {
            Instr::Def { expr, .. } | Instr::SetElem { expr, .. } | Instr::Assign { expr, .. } => {
                expr.visit(&mut |e| {
                    if let Expr::Var(n) | Expr::Elem(n, _) = e {
                        *counts.entry(n.clone()).or_default() += 1;
                    }
                });
            }
            other => {
                for n in other.reads() {
                    *counts.entry(n).or_default() += 1000;
                }
            }
        }
    }
    counts
}

fn inline_single_use(code: &mut Vec<Instr>, scope: &Scope) {
    let mut p = 0;
    while p < code.len() {
        let Instr::Def { name, expr } = &code[p] else {
            p += 1;
            continue;
        };
        if !scope.is_local(name) || use_counts(code).get(name).copied() != Some(1) {
            p += 1;
            continue;
        }
        let (name, expr) = (name.clone(), expr.clone());
        let mut deps = BTreeSet::new();
        expr.reads(&mut deps);
        let mut target = None;
        for (q, instr) in code.iter().enumerate().skip(p + 1) {
            let uses = match instr {
                Instr::Def { expr, .. } | Instr::SetElem { expr, .. } | Instr::Assign { expr, .. } => {
                    expr.count_var(&name)
                }
                _ => 0,
            };
            if uses > 0 {
                target = Some(q);
                break;
            }
            let writes = instr.writes();
            if writes.iter().any(|w| *w == ANY || deps.contains(*w) || *w == name) {
                break;
            }
        }
        let Some(q) = target else {
            p += 1;
            continue;
        };
        if let Some(e) = code[q].expr_mut() {
            let old = std::mem::replace(e, Expr::Lit(crate::Dtype::F64, 0.0));
            *e = old.rewrite(&mut |x| match x {
                Expr::Var(ref n) if *n == name => expr.clone(),
                x => x,
            });
        }
        code.remove(p);
    }
}

/// Replace reads of `t` where `def t = s` and neither `t` nor `s` is
/// written again.
fn propagate_copies(code: &mut [Instr], scope: &Scope) {
    let mut writes: HashMap<String, usize> = HashMap::new();
    let mut wildcard = false;
    for instr in code.iter() {
        for w in instr.writes() {
            if w == ANY {
                wildcard = true;
            } else {
                *writes.entry(w.to_string()).or_default() += 1;
            }
        }
    }
    let mut subst: HashMap<String, Expr> = HashMap::new();
    for instr in code.iter() {
        if let Instr::Def {
            name,
            expr: Expr::Var(src),
        } = instr
        {
            let src_stable = writes.get(src).copied().unwrap_or(0) == 0
                && (scope.is_local(src) || !wildcard);
            if scope.is_local(name) && writes.get(name) == Some(&1) && src_stable {
                subst.insert(name.clone(), Expr::Var(src.clone()));
            }
        }
    }
    if subst.is_empty() {
        return;
    }
    for instr in code.iter_mut() {
        if matches!(instr, Instr::IfExpr { .. }) {
            continue;
        }
        if let Some(e) = instr.expr_mut() {
            let old = std::mem::replace(e, Expr::Lit(crate::Dtype::F64, 0.0));
            *e = old.rewrite(&mut |x| match x {
                Expr::Var(ref n) => subst.get(n).cloned().unwrap_or(x),
                x => x,
            });
        }
    }
}

/// Backward liveness at whole-name granularity. Writes to anything that
/// outlives the body (statics, arguments, externals), calls, conditionals
/// and annotations are roots.
fn dead_code(code: &mut Vec<Instr>, scope: &Scope, keep: &BTreeSet<String>) {
    let mut live: BTreeSet<String> = BTreeSet::new();
    let mut needed = vec![false; code.len()];
    for (i, instr) in code.iter().enumerate().rev() {
        let root = match instr {
            Instr::Annotation(_) | Instr::Call(_) | Instr::IfExpr { .. } => true,
            _ => instr
                .writes()
                .iter()
                .any(|w| !scope.is_local(w) || keep.contains(*w)),
        };
        if root || instr.writes().iter().any(|w| live.contains(*w)) {
            needed[i] = true;
            live.extend(instr.reads());
        }
    }
    let mut it = needed.into_iter();
    code.retain(|_| it.next().unwrap_or(true));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matval::{BinOp, Dtype};

    fn local(name: &str) -> (String, Decl) {
        (
            name.to_string(),
            Decl {
                name: name.to_string(),
                dtype: Dtype::F64,
                rows: 1,
                cols: 1,
                init: None,
                storage: Storage::Local,
            },
        )
    }

    fn stat(name: &str) -> (String, Decl) {
        let (n, mut d) = local(name);
        d.storage = Storage::Static;
        (n, d)
    }

    fn lit(x: f64) -> Expr {
        Expr::Lit(Dtype::F64, x)
    }

    #[test]
    fn literal_fold() {
        let decls: IndexMap<_, _> = [local("t")].into_iter().collect();
        let statics: IndexMap<_, _> = [stat("y")].into_iter().collect();
        let code = vec![
            Instr::Def {
                name: "t".into(),
                expr: Expr::Bin {
                    op: BinOp::Add,
                    dtype: Dtype::F64,
                    lhs: Box::new(lit(2.0)),
                    rhs: Box::new(lit(3.0)),
                },
            },
            Instr::Assign {
                name: "y".into(),
                expr: Expr::Var("t".into()),
            },
        ];
        let opts = OptOptions {
            inline_scalars: false,
            dce: false,
            ..OptOptions::default()
        };
        let (out, _) = code_optimize(&code, &decls, &statics, &[], &opts).unwrap();
        assert_eq!(
            out[0],
            Instr::Def {
                name: "t".into(),
                expr: lit(5.0)
            }
        );
        let (out, decls) =
            code_optimize(&code, &decls, &statics, &[], &OptOptions::default()).unwrap();
        assert_eq!(
            out,
            vec![Instr::Assign {
                name: "y".into(),
                expr: lit(5.0)
            }]
        );
        assert!(decls.is_empty());
    }

    #[test]
    fn dead_temporaries_are_removed_but_annotations_stay() {
        let decls: IndexMap<_, _> = [local("a"), local("b")].into_iter().collect();
        let statics = IndexMap::new();
        let code = vec![
            Instr::Annotation("note".into()),
            Instr::Def {
                name: "a".into(),
                expr: Expr::Var("x".into()),
            },
        ];
        assert!(matches!(
            code_optimize(&code, &decls, &statics, &[], &OptOptions::default()),
            Err(Error::MalformedIR(_))
        ));
        let code = vec![
            Instr::Annotation("note".into()),
            Instr::Def {
                name: "a".into(),
                expr: lit(1.0),
            },
        ];
        let (out, d) = code_optimize(&code, &decls, &statics, &[], &OptOptions::default()).unwrap();
        assert_eq!(out, vec![Instr::Annotation("note".into())]);
        assert!(d.is_empty());
    }

    #[test]
    fn inlining_stops_at_intervening_write() {
        let decls: IndexMap<_, _> = [local("t")].into_iter().collect();
        let statics: IndexMap<_, _> = [stat("s"), stat("y")].into_iter().collect();
        let code = vec![
            Instr::Def {
                name: "t".into(),
                expr: Expr::Var("s".into()),
            },
            Instr::Assign {
                name: "s".into(),
                expr: lit(1.0),
            },
            Instr::Assign {
                name: "y".into(),
                expr: Expr::Var("t".into()),
            },
        ];
        let (out, _) = code_optimize(&code, &decls, &statics, &[], &OptOptions::default()).unwrap();
        assert_eq!(out, code);
    }

    #[test]
    fn options_none_is_identity() {
        let decls: IndexMap<_, _> = [local("t")].into_iter().collect();
        let code = vec![Instr::Def {
            name: "t".into(),
            expr: lit(1.0),
        }];
        let (out, d) = code_optimize(&code, &decls, &IndexMap::new(), &[], &OptOptions::none()).unwrap();
        assert_eq!(out, code);
        assert_eq!(d, decls);
    }

    #[test]
    fn unused_statics_dropped() {
        let mut p = Program {
            statics: [stat("x1"), stat("x3")].into_iter().collect(),
            functions: vec![crate::trace::Function {
                name: "foo".into(),
                params: vec![],
                decls: IndexMap::new(),
                code: vec![Instr::Assign {
                    name: "x1".into(),
                    expr: lit(2.0),
                }],
            }],
        };
        optimize_program(&mut p, &OptOptions::default()).unwrap();
        assert_eq!(p.statics.keys().collect::<Vec<_>>(), vec!["x1"]);
    }
}
