//! Successive-cancellation code: precoded messages, group-wise MDS coding,
//! layered sums, and layer-by-layer interference cancellation.
//!
//! With `K1 = K2` and `T1 = T2 = T` this is the plain T-private code.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{next_prime_above, random_full_rank, Field, Matrix};
use crate::capacity::SystemParams;
use crate::error::{params, Error, Result};
use crate::mds::{make_code, MdsCode};
use crate::ns_params::{build_table, NsParameterTable};
use crate::plan::{
    compositions_within, mask_of, members, Coeffs, PlacedSymbol, PlanParts, QueryPlan, Recipe, Scheme, SymbolTag, Term,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Field modulus; chosen automatically when absent.
    pub modulus: Option<u64>,
    /// Divide every size by the largest admissible common factor.
    pub reduce: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { modulus: None, reduce: true }
    }
}

/// The modulus in effect: the given one (checked), else the smallest prime
/// above the longest code, and never below 3.
pub fn choose_field(modulus: Option<u64>, max_code_len: usize) -> Result<Field> {
    match modulus {
        Some(q) => {
            let f = Field::new(q)?;
            if q <= max_code_len as u64 {
                return params(format!("modulus {q} must exceed the longest code length {max_code_len}"));
            }
            Ok(f)
        }
        None => Field::new(next_prime_above(max_code_len as u64).max(3)),
    }
}

pub(crate) fn check_target(p: &SystemParams, k_star: usize) -> Result<()> {
    if k_star == 0 || k_star > p.k2 {
        return params(format!("target {k_star} outside 1..={}", p.k2));
    }
    Ok(())
}

/// Group sizes of a layered code over `members`, scaled by `stack` and
/// divided by `reduction`. The first `table.params.k1` members form the
/// high class of `table`.
#[derive(Clone, Debug)]
pub(crate) struct Sizing {
    pub table: NsParameterTable,
    pub members: Vec<usize>,
    pub stack: u64,
    pub reduction: u64,
}

impl Sizing {
    pub fn for_system(p: &SystemParams, reduce: bool) -> Result<Self> {
        let table = build_table(p)?;
        let reduction = if reduce { table.reduction_factor() } else { 1 };
        Ok(Sizing { table, members: (1..=p.k2).collect(), stack: 1, reduction })
    }

    pub fn member_mask(&self) -> u64 {
        mask_of(self.members.iter().copied())
    }

    fn counts(&self, comp: u64) -> (usize, usize) {
        let hi = self.table.params.k1;
        let i = self.members[..hi].iter().filter(|&&k| comp >> (k - 1) & 1 == 1).count();
        let j = self.members[hi..].iter().filter(|&&k| comp >> (k - 1) & 1 == 1).count();
        (i, j)
    }

    fn scale(&self, x: u64) -> Result<usize> {
        let s = x.checked_mul(self.stack).ok_or_else(|| Error::Params("sizes overflow".into()))?;
        if s % self.reduction != 0 {
            return Err(Error::Internal(format!("size {s} not divisible by reduction {}", self.reduction)));
        }
        Ok((s / self.reduction) as usize)
    }

    pub fn l(&self) -> Result<usize> {
        self.scale(self.table.l)
    }

    pub fn m(&self, comp: u64) -> Result<usize> {
        let (i, j) = self.counts(comp);
        self.scale(self.table.m(i, j))
    }

    /// Whether `k_star` is in the high class of this table.
    pub fn is_high(&self, k_star: usize) -> bool {
        self.members[..self.table.params.k1].contains(&k_star)
    }

    /// `(n, k)` of group `comp` when the desired message has class `high`.
    pub fn nk(&self, comp: u64, high: bool) -> Result<(usize, usize)> {
        let (i, j) = self.counts(comp);
        let c = self
            .table
            .class(i, j)
            .ok_or_else(|| Error::Internal(format!("no class ({i},{j})")))?;
        let (n, k) = if high { (c.n1, c.k1) } else { (c.n2, c.k2) };
        match (n, k) {
            (Some(n), Some(k)) => Ok((self.scale(n)?, self.scale(k)?)),
            _ => Err(Error::Internal(format!("class ({i},{j}) has no code for this target"))),
        }
    }

    pub fn max_code_len(&self) -> Result<usize> {
        let mut best = 0;
        for c in &self.table.classes {
            for n in [c.n1, c.n2].into_iter().flatten() {
                best = best.max(self.scale(n)?);
            }
        }
        Ok(best)
    }
}

/// A symbol of a layered or pure-interference table, before placement.
#[derive(Clone, Debug)]
pub(crate) struct TableSymbol {
    pub comp: u64,
    pub index: usize,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingGroup {
    /// Members, 1-based.
    pub composition: Vec<usize>,
    pub layer: usize,
    /// Symbols in layer `|composition|`; the rest go one layer up.
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// `(message, start)` of each member's segment in its precoded stream.
    pub segment_offsets: Vec<(usize, usize)>,
}

#[derive(Debug)]
struct Group {
    info: CodingGroup,
    code: Arc<MdsCode>,
    /// Table symbols holding coordinates `0..m`.
    pure: Vec<usize>,
}

#[derive(Debug)]
pub(crate) struct LayeredTable {
    pub l: usize,
    pub symbols: Vec<TableSymbol>,
    groups: Vec<Group>,
    /// For each desired stream position: the table symbol carrying it and,
    /// when mixed, the (group, coordinate) of the interference to remove.
    desired: Vec<(usize, Option<(usize, usize)>)>,
}

impl LayeredTable {
    pub fn build(sizing: &Sizing, k_star: usize, field: &Field) -> Result<Self> {
        let all = sizing.member_mask();
        let star = 1u64 << (k_star - 1);
        if all & star == 0 {
            return Err(Error::Internal(format!("message {k_star} is not in this table")));
        }
        let high = sizing.is_high(k_star);
        let l = sizing.l()?;
        let comps = compositions_within(all);

        let mut seg_start = HashMap::new();
        let mut next = 0;
        for &c in comps.iter().filter(|&&c| c & star != 0) {
            seg_start.insert(c, next);
            next += sizing.m(c)?;
        }
        if next != l {
            return Err(Error::Internal(format!("desired segments cover {next} of {l}")));
        }

        let mut groups = Vec::new();
        let mut group_of = HashMap::new();
        let mut cursor: HashMap<usize, usize> = HashMap::new();
        for &c in comps.iter().filter(|&&c| c & star == 0) {
            let (n, k) = sizing.nk(c, high)?;
            let (m, up) = (sizing.m(c)?, sizing.m(c | star)?);
            if n != m + up {
                return Err(Error::Internal(format!("group {:?}: n = {n} but m + m' = {}", members(c), m + up)));
            }
            if n == 0 {
                continue;
            }
            if k == 0 || k > m {
                return Err(Error::Internal(format!("group {:?}: k = {k} with m = {m}", members(c))));
            }
            let code = make_code(n, k, field)?;
            let mut offsets = Vec::new();
            for msg in members(c) {
                let at = cursor.entry(msg).or_insert(0);
                offsets.push((msg, *at));
                *at += k;
                if *at > l {
                    return Err(Error::Internal(format!("message {msg} stream exhausted")));
                }
            }
            group_of.insert(c, groups.len());
            groups.push(Group {
                info: CodingGroup {
                    composition: members(c),
                    layer: c.count_ones() as usize,
                    m,
                    n,
                    k,
                    segment_offsets: offsets,
                },
                code,
                pure: Vec::new(),
            });
        }

        let coded = |g: &Group, col: usize| -> Vec<Term> {
            g.info
                .segment_offsets
                .iter()
                .map(|&(msg, offset)| Term {
                    message: msg,
                    offset,
                    coeffs: Coeffs::Column { code: g.code.clone(), col },
                })
                .collect()
        };
        let mut symbols = Vec::new();
        let mut desired = vec![(usize::MAX, None); l];
        for &c in &comps {
            let size = sizing.m(c)?;
            if c & star == 0 {
                let Some(&g) = group_of.get(&c) else { continue };
                for t in 0..size {
                    groups[g].pure.push(symbols.len());
                    symbols.push(TableSymbol { comp: c, index: t, terms: coded(&groups[g], t) });
                }
            } else {
                let start = seg_start[&c];
                let below = group_of.get(&(c & !star)).copied();
                for t in 0..size {
                    let mut terms = vec![Term::unit(k_star, start + t)];
                    let mut cancel = None;
                    if let Some(g) = below {
                        let col = groups[g].info.m + t;
                        terms.extend(coded(&groups[g], col));
                        cancel = Some((g, col));
                    }
                    desired[start + t] = (symbols.len(), cancel);
                    symbols.push(TableSymbol { comp: c, index: t, terms });
                }
            }
        }
        Ok(LayeredTable { l, symbols, groups, desired })
    }

    pub fn coding_groups(&self) -> Vec<CodingGroup> {
        self.groups.iter().map(|g| g.info.clone()).collect()
    }

    /// Cancels every group's upper-layer interference using its lower-layer
    /// symbols, column-wise over `y` (rows indexed by table symbol).
    pub fn desired_stream(&self, field: &Field, y: &Matrix) -> Result<Matrix> {
        if y.rows() != self.symbols.len() {
            return Err(Error::Internal(format!("{} rows for {} table symbols", y.rows(), self.symbols.len())));
        }
        let mut full = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let positions: Vec<usize> = (0..g.pure.len()).collect();
            full.push(g.code.complete_columns(&positions, &y.select_rows(&g.pure))?);
        }
        let mut out = Matrix::zeros(self.l, y.cols());
        for (pos, &(id, cancel)) in self.desired.iter().enumerate() {
            let dst = out.row_mut(pos);
            dst.copy_from_slice(y.row(id));
            if let Some((g, col)) = cancel {
                for (d, &v) in dst.iter_mut().zip(full[g].row(col)) {
                    *d = field.sub(*d, v);
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn draw_precoders<R: Rng>(field: &Field, k2: usize, l: usize, rng: &mut R) -> Vec<Matrix> {
    (0..k2).map(|_| random_full_rank(field, l, rng)).collect()
}

/// Reduction factor and field used for `p` under `opts`; independent of the target.
pub fn setup(p: &SystemParams, opts: &BuildOptions) -> Result<(u64, usize, Field)> {
    let sizing = Sizing::for_system(p, opts.reduce)?;
    let field = choose_field(opts.modulus, sizing.max_code_len()?)?;
    Ok((sizing.reduction, sizing.l()?, field))
}

/// Coding groups in effect when retrieving `k_star`.
pub fn coding_groups(p: &SystemParams, k_star: usize, opts: &BuildOptions) -> Result<Vec<CodingGroup>> {
    check_target(p, k_star)?;
    let sizing = Sizing::for_system(p, opts.reduce)?;
    let field = choose_field(opts.modulus, sizing.max_code_len()?)?;
    Ok(LayeredTable::build(&sizing, k_star, &field)?.coding_groups())
}

pub fn build_query<R: Rng>(p: &SystemParams, k_star: usize, rng: &mut R) -> Result<QueryPlan> {
    build_query_with(p, k_star, rng, &BuildOptions::default())
}

pub fn build_query_with<R: Rng>(p: &SystemParams, k_star: usize, rng: &mut R, opts: &BuildOptions) -> Result<QueryPlan> {
    p.validate()?;
    check_target(p, k_star)?;
    let sizing = Sizing::for_system(p, opts.reduce)?;
    let field = choose_field(opts.modulus, sizing.max_code_len()?)?;
    let table = LayeredTable::build(&sizing, k_star, &field)?;
    let l = table.l;
    let precoders = draw_precoders(&field, p.k2, l, rng);
    let symbols = table
        .symbols
        .iter()
        .map(|s| {
            if sizing.m(s.comp)? % p.n != 0 {
                return Err(Error::Internal(format!("composition {:?} not spread evenly", members(s.comp))));
            }
            Ok(PlacedSymbol {
                tag: SymbolTag {
                    server: s.index % p.n,
                    section: 0,
                    layer: s.comp.count_ones() as usize,
                    composition: s.comp,
                    index: s.index,
                },
                terms: s.terms.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    QueryPlan::assemble(PlanParts {
        params: *p,
        scheme: Scheme::Ns,
        k_star,
        l,
        field,
        reduction: sizing.reduction,
        precoders,
        symbols,
        recipe: Recipe::Ns(table),
    })
}
