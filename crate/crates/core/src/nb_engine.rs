//! Block-cancellation code: two precoded tables, one per privacy class,
//! mixed into three blocks so that the dedicated blocks cancel the mixed one.

use std::collections::HashMap;
use std::sync::Arc;

use num::integer::gcd;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Field, Matrix};
use crate::capacity::SystemParams;
use crate::error::{Error, Result};
use crate::mds::{make_code, MdsCode};
use crate::ns_engine::{check_target, choose_field, draw_precoders, BuildOptions, CodingGroup, LayeredTable, Sizing, TableSymbol};
use crate::ns_params::build_table;
use crate::plan::{compositions_within, mask_of, members, Coeffs, PlacedSymbol, PlanParts, QueryPlan, Recipe, Scheme, SymbolTag, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// Carries the desired message: a stacked layered code.
    Active,
    PureInterference,
}

#[derive(Debug)]
pub(crate) struct PureTable {
    symbols: Vec<TableSymbol>,
    /// Per group: the code and the table symbols of coordinates `0..n`.
    groups: Vec<(Arc<MdsCode>, Vec<usize>)>,
}

#[derive(Debug)]
enum Inner {
    Active(LayeredTable),
    Pure(PureTable),
}

#[derive(Debug)]
pub struct PrecodedTable {
    pub kind: TableKind,
    pub messages: Vec<usize>,
    /// Per composition: the MDS code and segments in effect.
    pub groups: Vec<CodingGroup>,
    inner: Inner,
}

impl PrecodedTable {
    fn symbols(&self) -> &[TableSymbol] {
        match &self.inner {
            Inner::Active(t) => &t.symbols,
            Inner::Pure(t) => &t.symbols,
        }
    }

    /// Number of symbols in the table.
    pub fn size(&self) -> usize {
        self.symbols().len()
    }

    /// Symbol count of each composition, in canonical order.
    pub fn composition_sizes(&self) -> Vec<(Vec<usize>, usize)> {
        let mut counts: Vec<(u64, usize)> = Vec::new();
        for s in self.symbols() {
            match counts.iter_mut().find(|(c, _)| *c == s.comp) {
                Some(e) => e.1 += 1,
                None => counts.push((s.comp, 1)),
            }
        }
        counts.sort_by(|a, b| crate::plan::cmp_compositions(a.0, b.0));
        counts.into_iter().map(|(c, n)| (members(c), n)).collect()
    }
}

#[derive(Debug)]
pub struct NbTables {
    pub params: SystemParams,
    pub k_star: usize,
    pub l: usize,
    pub field: Field,
    pub reduction: u64,
    /// Messages `1..=K1`.
    pub a: PrecodedTable,
    /// Messages `K1+1..=K2`.
    pub b: PrecodedTable,
}

/// Size of a composition of `size` messages in table A (`high`) or B,
/// before reduction.
pub fn table_composition_size(p: &SystemParams, high: bool, size: usize) -> u64 {
    let (n, t1, t2) = (p.n as u64, p.t1 as u64, p.t2 as u64);
    let (k1, k2) = (p.k1 as u32, p.k2 as u32);
    let s = size as u32;
    if high {
        n.pow(k2 - k1 + 1) * (n - t1).pow(s - 1) * t1.pow(k1 - s)
    } else {
        n.pow(k1 + 1) * (n - t2).pow(s - 1) * t2.pow(k2 - k1 - s)
    }
}

/// `t1` and `t2`, the table sizes before reduction.
pub fn table_totals(p: &SystemParams) -> (u64, u64) {
    let total = |high: bool, count: usize| -> u64 {
        (1..=count)
            .map(|s| crate::ns_params::binom(count, s) * table_composition_size(p, high, s))
            .sum()
    };
    (total(true, p.k1), total(false, p.k2 - p.k1))
}

fn active_sizing(p: &SystemParams, high: bool, reduction: u64) -> Result<Sizing> {
    let n = p.n as u64;
    let (sub, members, stack) = if high {
        (SystemParams::new(p.n, p.t1, p.k1, p.t1, p.k1)?, (1..=p.k1).collect(), n.pow((p.k2 - p.k1) as u32))
    } else {
        let kk = p.k2 - p.k1;
        (SystemParams::new(p.n, p.t2, kk, p.t2, kk)?, (p.k1 + 1..=p.k2).collect(), n.pow(p.k1 as u32))
    };
    Ok(Sizing { table: build_table(&sub)?, members, stack, reduction })
}

fn check_supported(p: &SystemParams) -> Result<()> {
    p.validate()?;
    if p.k1 == p.k2 {
        return Err(Error::Unsupported("the block code needs both message classes non-empty; use NS".into()));
    }
    if p.k2 > 20 {
        return Err(Error::Params("block code limited to 20 messages".into()));
    }
    Ok(())
}

/// Whether every size divided by `r` still splits evenly into the dedicated
/// and mixed parts across `N` servers, with integral MDS message lengths.
fn reduction_ok(p: &SystemParams, r: u64) -> Result<bool> {
    let (n, t2) = (p.n as u64, p.t2 as u64);
    for (high, count) in [(true, p.k1), (false, p.k2 - p.k1)] {
        for s in 1..=count {
            let m = table_composition_size(p, high, s);
            if m % r != 0 {
                return Ok(false);
            }
            let c = m / r;
            if c * t2 % n != 0 {
                return Ok(false);
            }
            let ded = c * t2 / n;
            if ded % n != 0 || (c - ded) % n != 0 {
                return Ok(false);
            }
        }
        let sizing = active_sizing(p, high, 1)?;
        for cl in &sizing.table.classes {
            for k in [cl.k1, cl.k2].into_iter().flatten() {
                if k * sizing.stack % r != 0 {
                    return Ok(false);
                }
            }
        }
    }
    Ok((p.n as u64).pow(p.k2 as u32) % r == 0)
}

/// Largest admissible common divisor of all block-code sizes.
pub fn nb_reduction(p: &SystemParams) -> Result<u64> {
    check_supported(p)?;
    let mut g = (p.n as u64).pow(p.k2 as u32);
    for (high, count) in [(true, p.k1), (false, p.k2 - p.k1)] {
        for s in 1..=count {
            g = gcd(g, table_composition_size(p, high, s));
        }
    }
    let mut divisors = Vec::new();
    let mut d = 1;
    while d * d <= g {
        if g % d == 0 {
            divisors.push(d);
            divisors.push(g / d);
        }
        d += 1;
    }
    divisors.sort_unstable_by(|a, b| b.cmp(a));
    for r in divisors {
        if reduction_ok(p, r)? {
            return Ok(r);
        }
    }
    Err(Error::Internal("no admissible reduction".into()))
}

/// Reduction, message length and field of the block code; independent of the target.
pub fn setup(p: &SystemParams, opts: &BuildOptions) -> Result<(u64, usize, Field)> {
    check_supported(p)?;
    let r = if opts.reduce { nb_reduction(p)? } else { 1 };
    if !reduction_ok(p, r)? {
        return Err(Error::Internal(format!("reduction {r} is not admissible")));
    }
    let mut longest = 0;
    for high in [true, false] {
        longest = longest.max(active_sizing(p, high, r)?.max_code_len()?);
    }
    for (high, count) in [(true, p.k1), (false, p.k2 - p.k1)] {
        for s in 1..=count {
            longest = longest.max((table_composition_size(p, high, s) / r) as usize);
        }
    }
    let l = ((p.n as u64).pow(p.k2 as u32) / r) as usize;
    Ok((r, l, choose_field(opts.modulus, longest)?))
}

fn pure_table(p: &SystemParams, high: bool, r: u64, l: usize, field: &Field) -> Result<(PureTable, Vec<CodingGroup>)> {
    let msgs: Vec<usize> = if high { (1..=p.k1).collect() } else { (p.k1 + 1..=p.k2).collect() };
    let mut cursor: HashMap<usize, usize> = HashMap::new();
    let mut symbols = Vec::new();
    let mut groups = Vec::new();
    let mut infos = Vec::new();
    for comp in compositions_within(mask_of(msgs.iter().copied())) {
        let size = comp.count_ones() as usize;
        let n = (table_composition_size(p, high, size) / r) as usize;
        // empty when the level equals N and the composition has two or more members
        if n == 0 {
            continue;
        }
        let k = n * p.t2 / p.n;
        let code = make_code(n, k, field)?;
        let mut offsets = Vec::new();
        for msg in members(comp) {
            let at = cursor.entry(msg).or_insert(0);
            offsets.push((msg, *at));
            *at += k;
            if *at > l {
                return Err(Error::Internal(format!("message {msg} stream exhausted")));
            }
        }
        let mut ids = Vec::new();
        for t in 0..n {
            ids.push(symbols.len());
            let terms = offsets
                .iter()
                .map(|&(message, offset)| Term { message, offset, coeffs: Coeffs::Column { code: code.clone(), col: t } })
                .collect();
            symbols.push(TableSymbol { comp, index: t, terms });
        }
        infos.push(CodingGroup { composition: members(comp), layer: size, m: n, n, k, segment_offsets: offsets });
        groups.push((code, ids));
    }
    Ok((PureTable { symbols, groups }, infos))
}

/// Both precoded tables for retrieving `k_star`.
pub fn build_tables(p: &SystemParams, k_star: usize, opts: &BuildOptions) -> Result<NbTables> {
    check_target(p, k_star)?;
    let (r, l, field) = setup(p, opts)?;
    let make = |high: bool| -> Result<PrecodedTable> {
        let msgs: Vec<usize> = if high { (1..=p.k1).collect() } else { (p.k1 + 1..=p.k2).collect() };
        if msgs.contains(&k_star) {
            let sizing = active_sizing(p, high, r)?;
            let table = LayeredTable::build(&sizing, k_star, &field)?;
            for comp in compositions_within(mask_of(msgs.iter().copied())) {
                let want = table_composition_size(p, high, comp.count_ones() as usize) / r;
                if sizing.m(comp)? as u64 != want {
                    return Err(Error::Internal(format!("stacked size of {:?} differs", members(comp))));
                }
            }
            Ok(PrecodedTable { kind: TableKind::Active, messages: msgs, groups: table.coding_groups(), inner: Inner::Active(table) })
        } else {
            let (table, groups) = pure_table(p, high, r, l, &field)?;
            Ok(PrecodedTable { kind: TableKind::PureInterference, messages: msgs, groups, inner: Inner::Pure(table) })
        }
    };
    Ok(NbTables { params: *p, k_star, l, field, reduction: r, a: make(true)?, b: make(false)? })
}

#[derive(Debug)]
pub(crate) struct NbRecipe {
    active: LayeredTable,
    pure: PureTable,
    active_is_a: bool,
    /// Per plan symbol: the table-A and table-B symbols summed in it.
    entries: Vec<(Option<usize>, Option<usize>)>,
}

impl NbRecipe {
    fn split(&self, e: (Option<usize>, Option<usize>)) -> (Option<usize>, Option<usize>) {
        if self.active_is_a {
            e
        } else {
            (e.1, e.0)
        }
    }

    /// Rows of the active table, with the pure-interference contributions
    /// reconstructed from the dedicated block and removed.
    pub fn active_rows(&self, field: &Field, y: &Matrix) -> Result<Matrix> {
        let w = y.cols();
        let mut pure_alone = Matrix::zeros(self.pure.symbols.len(), w);
        for (id, &e) in self.entries.iter().enumerate() {
            if let (None, Some(p)) = self.split(e) {
                pure_alone.row_mut(p).copy_from_slice(y.row(id));
            }
        }
        let mut pure_full = Matrix::zeros(self.pure.symbols.len(), w);
        for (code, ids) in &self.pure.groups {
            let k = code.k();
            let positions: Vec<usize> = (0..k).collect();
            let full = code.complete_columns(&positions, &pure_alone.select_rows(&ids[..k]))?;
            for (coord, &id) in ids.iter().enumerate() {
                pure_full.row_mut(id).copy_from_slice(full.row(coord));
            }
        }
        let mut active = Matrix::zeros(self.active.symbols.len(), w);
        for (id, &e) in self.entries.iter().enumerate() {
            let (a, p) = self.split(e);
            if let Some(a) = a {
                let dst = active.row_mut(a);
                dst.copy_from_slice(y.row(id));
                if let Some(p) = p {
                    for (d, &v) in dst.iter_mut().zip(pure_full.row(p)) {
                        *d = field.sub(*d, v);
                    }
                }
            }
        }
        Ok(active)
    }

    pub fn desired_stream(&self, field: &Field, y: &Matrix) -> Result<Matrix> {
        let active = self.active_rows(field, y)?;
        self.active.desired_stream(field, &active)
    }

    pub fn active_messages(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.active.symbols.iter().flat_map(|s| members(s.comp)).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Splits each table into its dedicated block and its mixed remainder,
/// pairs the remainders, spreads every block across the servers, and draws
/// the precoders.
pub fn assemble_blocks<R: Rng>(tables: NbTables, rng: &mut R) -> Result<QueryPlan> {
    let NbTables { params: p, k_star, l, field, reduction, a, b } = tables;
    let n = p.n;
    let mut symbols = Vec::new();
    let mut entries = Vec::new();
    let mut rest: [Vec<(u64, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (side, table) in [&a, &b].into_iter().enumerate() {
        let mut sizes: HashMap<u64, usize> = HashMap::new();
        for s in table.symbols() {
            *sizes.entry(s.comp).or_default() += 1;
        }
        for (id, s) in table.symbols().iter().enumerate() {
            let ded = sizes[&s.comp] * p.t2 / p.n;
            if s.index < ded {
                symbols.push(PlacedSymbol {
                    tag: SymbolTag {
                        server: s.index % n,
                        section: side as u8 + 1,
                        layer: s.comp.count_ones() as usize,
                        composition: s.comp,
                        index: s.index,
                    },
                    terms: s.terms.clone(),
                });
                entries.push(if side == 0 { (Some(id), None) } else { (None, Some(id)) });
            } else {
                rest[side].push((s.comp, s.index, id));
            }
        }
        rest[side].sort_by(|x, y| crate::plan::cmp_compositions(x.0, y.0).then(x.1.cmp(&y.1)));
    }
    let mixed = rest[0].len().max(rest[1].len());
    for i in 0..mixed {
        let ea = rest[0].get(i).copied();
        let eb = rest[1].get(i).copied();
        let mut terms = Vec::new();
        let mut comp = 0;
        if let Some((c, _, id)) = ea {
            comp |= c;
            terms.extend(a.symbols()[id].terms.iter().cloned());
        }
        if let Some((c, _, id)) = eb {
            comp |= c;
            terms.extend(b.symbols()[id].terms.iter().cloned());
        }
        symbols.push(PlacedSymbol {
            tag: SymbolTag { server: i % n, section: 3, layer: comp.count_ones() as usize, composition: comp, index: i },
            terms,
        });
        entries.push((ea.map(|e| e.2), eb.map(|e| e.2)));
    }
    for section in 1..=3u8 {
        let count = symbols.iter().filter(|s| s.tag.section == section).count();
        if count % n != 0 {
            return Err(Error::Internal(format!("block {section} has {count} symbols for {n} servers")));
        }
    }
    let (active, pure, active_is_a) = match (a.inner, b.inner) {
        (Inner::Active(t), Inner::Pure(u)) => (t, u, true),
        (Inner::Pure(u), Inner::Active(t)) => (t, u, false),
        _ => return Err(Error::Internal("exactly one table must be active".into())),
    };
    let precoders = draw_precoders(&field, p.k2, l, rng);
    QueryPlan::assemble(PlanParts {
        params: p,
        scheme: Scheme::Nb,
        k_star,
        l,
        field,
        reduction,
        precoders,
        symbols,
        recipe: Recipe::Nb(NbRecipe { active, pure, active_is_a, entries }),
    })
}

pub fn build_query<R: Rng>(p: &SystemParams, k_star: usize, rng: &mut R) -> Result<QueryPlan> {
    build_query_with(p, k_star, rng, &BuildOptions::default())
}

pub fn build_query_with<R: Rng>(p: &SystemParams, k_star: usize, rng: &mut R, opts: &BuildOptions) -> Result<QueryPlan> {
    assemble_blocks(build_tables(p, k_star, opts)?, rng)
}

/// Applies the cancellation step to the query rows themselves. Returns the
/// active-table rows (over all `K2 * L` message columns) and the active
/// messages; every column of the other messages must come out zero.
pub fn cancelled_query_rows(plan: &QueryPlan) -> Result<(Matrix, Vec<usize>)> {
    match plan.recipe() {
        Recipe::Nb(r) => Ok((r.active_rows(plan.field(), &plan.stacked_queries())?, r.active_messages())),
        _ => Err(Error::Unsupported("not a block-code plan".into())),
    }
}
