//! Query plans: what each server is asked, how answers are formed, and the
//! bookkeeping the user keeps for decoding.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{seeded_rng, solve_square, Field, FieldElement, Matrix};
use crate::capacity::SystemParams;
use crate::error::{Error, Result};
use crate::mds::MdsCode;
use crate::nb_engine::NbRecipe;
use crate::ns_engine::{BuildOptions, LayeredTable};
use crate::{audit, nb_engine, ns_engine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ns,
    Nb,
    /// Hand-built plans used as audit fixtures.
    Fixture,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ns => "NS",
            Scheme::Nb => "NB",
            Scheme::Fixture => "fixture",
        })
    }
}

/// Members of a composition bitmask (bit `k - 1` for message `k`), ascending.
pub fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect()
}

/// Canonical composition order: by size, then by sorted member list.
pub fn cmp_compositions(a: u64, b: u64) -> Ordering {
    a.count_ones().cmp(&b.count_ones()).then_with(|| members(a).cmp(&members(b)))
}

/// All non-empty subsets of `set` in canonical order.
pub fn compositions_within(set: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = set;
    while s != 0 {
        out.push(s);
        s = (s - 1) & set;
    }
    out.sort_by(|&a, &b| cmp_compositions(a, b));
    out
}

pub fn mask_of(messages: impl IntoIterator<Item = usize>) -> u64 {
    messages.into_iter().fold(0, |m, k| m | 1 << (k - 1))
}

/// Coefficients a term applies to a segment of a precoded message.
#[derive(Clone, Debug)]
pub enum Coeffs {
    /// The single symbol at the offset.
    Unit,
    /// Codeword coordinate `col` of `code`, applied to `code.k()` symbols.
    Column { code: Arc<MdsCode>, col: usize },
}

/// One message's contribution to an answer symbol: the coefficient vector
/// applied to the precoded stream of `message` starting at `offset`.
#[derive(Clone, Debug)]
pub struct Term {
    pub message: usize,
    pub offset: usize,
    pub coeffs: Coeffs,
}

impl Term {
    pub fn unit(message: usize, offset: usize) -> Self {
        Term { message, offset, coeffs: Coeffs::Unit }
    }

    pub fn coefficients(&self) -> Vec<FieldElement> {
        match &self.coeffs {
            Coeffs::Unit => vec![1],
            Coeffs::Column { code, col } => code.column(*col),
        }
    }
}

/// Where a symbol sits, as visible to anyone watching the servers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolTag {
    pub server: usize,
    /// 0 for layered codes; 1, 2, 3 for the three blocks of the block code.
    pub section: u8,
    pub layer: usize,
    /// Bitmask, bit `k - 1` for message `k`.
    pub composition: u64,
    pub index: usize,
}

impl SymbolTag {
    fn order_key(&self, other: &Self) -> Ordering {
        (self.section, self.layer)
            .cmp(&(other.section, other.layer))
            .then_with(|| cmp_compositions(self.composition, other.composition))
            .then_with(|| self.index.cmp(&other.index))
    }
}

#[derive(Clone, Debug)]
pub struct PlacedSymbol {
    pub tag: SymbolTag,
    pub terms: Vec<Term>,
}

#[derive(Debug)]
pub(crate) enum Recipe {
    /// Symbol `i` of the plan is position `i` of the precoded desired stream.
    Direct,
    Ns(LayeredTable),
    Nb(NbRecipe),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerVector {
    pub server: usize,
    pub symbols: Vec<FieldElement>,
}

/// `Q_n * concat(W_1..W_K2)`.
pub fn answer(server: usize, query: &Matrix, field: &Field, messages: &[FieldElement]) -> Result<AnswerVector> {
    if messages.len() != query.cols() {
        return Err(Error::Protocol(format!(
            "query expects {} message symbols, store holds {}",
            query.cols(),
            messages.len()
        )));
    }
    Ok(AnswerVector { server, symbols: query.mul_vec(field, messages)? })
}

/// Everything the user derives for one retrieval. Only [`QueryPlan::query`]
/// is sent to servers; the rest stays with the user.
#[derive(Debug)]
pub struct QueryPlan {
    params: SystemParams,
    scheme: Scheme,
    k_star: usize,
    l: usize,
    field: Field,
    reduction: u64,
    precoders: Vec<Matrix>,
    /// Plan symbols in server-row order, server by server.
    symbols: Vec<PlacedSymbol>,
    /// `server_rows[n]` = global symbol ids of server `n`'s rows.
    server_rows: Vec<Vec<usize>>,
    queries: Vec<Matrix>,
    recipe: Recipe,
}

pub(crate) struct PlanParts {
    pub params: SystemParams,
    pub scheme: Scheme,
    pub k_star: usize,
    pub l: usize,
    pub field: Field,
    pub reduction: u64,
    pub precoders: Vec<Matrix>,
    /// In the builder's own order; `recipe` refers to these positions.
    pub symbols: Vec<PlacedSymbol>,
    pub recipe: Recipe,
}

impl QueryPlan {
    /// Orders symbols per server, then composes `Q_n` rows from the terms
    /// and the precoders. Symbol ids in the recipe stay builder positions.
    pub(crate) fn assemble(parts: PlanParts) -> Result<Self> {
        let PlanParts { params, scheme, k_star, l, field, reduction, precoders, symbols, recipe } = parts;
        let n = params.n;
        if precoders.len() != params.k2 || precoders.iter().any(|s| s.rows() != l || s.cols() != l) {
            return Err(Error::Internal("precoder shapes disagree with the plan".into()));
        }
        let mut server_rows = vec![Vec::new(); n];
        let mut order: Vec<usize> = (0..symbols.len()).collect();
        order.sort_by(|&a, &b| symbols[a].tag.order_key(&symbols[b].tag));
        for id in order {
            let s = symbols[id].tag.server;
            if s >= n {
                return Err(Error::Internal(format!("symbol placed on server {s} of {n}")));
            }
            server_rows[s].push(id);
        }
        let width = params.k2 * l;
        let queries = server_rows
            .iter()
            .map(|rows| {
                let mut q = Matrix::zeros(rows.len(), width);
                for (r, &id) in rows.iter().enumerate() {
                    let dst = q.row_mut(r);
                    for t in &symbols[id].terms {
                        let base = (t.message - 1) * l;
                        let s = &precoders[t.message - 1];
                        for (i, c) in t.coefficients().into_iter().enumerate() {
                            field.axpy(&mut dst[base..base + l], c, s.row(t.offset + i));
                        }
                    }
                }
                q
            })
            .collect();
        Ok(QueryPlan { params, scheme, k_star, l, field, reduction, precoders, symbols, server_rows, queries, recipe })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    /// Message length after reduction.
    pub fn message_len(&self) -> usize {
        self.l
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn reduction(&self) -> u64 {
        self.reduction
    }

    pub fn servers(&self) -> usize {
        self.params.n
    }

    pub fn query(&self, server: usize) -> &Matrix {
        &self.queries[server]
    }

    pub fn rows(&self, server: usize) -> usize {
        self.server_rows[server].len()
    }

    pub fn download_total(&self) -> usize {
        self.server_rows.iter().map(Vec::len).sum()
    }

    pub fn tag(&self, server: usize, row: usize) -> &SymbolTag {
        &self.symbols[self.server_rows[server][row]].tag
    }

    pub fn manifest(&self, server: usize) -> Vec<SymbolTag> {
        self.server_rows[server].iter().map(|&id| self.symbols[id].tag).collect()
    }

    pub fn terms(&self, server: usize, row: usize) -> &[Term] {
        &self.symbols[self.server_rows[server][row]].terms
    }

    pub fn precoder(&self, message: usize) -> &Matrix {
        &self.precoders[message - 1]
    }

    /// Deterministic coefficients `C` of one row on one message, so that the
    /// transmitted block on that message is `C * S_message`.
    pub fn coefficient_row(&self, server: usize, row: usize, message: usize) -> Vec<FieldElement> {
        let mut out = vec![0; self.l];
        for t in self.terms(server, row).iter().filter(|t| t.message == message) {
            for (i, c) in t.coefficients().into_iter().enumerate() {
                out[t.offset + i] = self.field.add(out[t.offset + i], c);
            }
        }
        out
    }

    pub fn answer(&self, server: usize, messages: &[FieldElement]) -> Result<AnswerVector> {
        answer(server, &self.queries[server], &self.field, messages)
    }

    /// Answers of every server, stacked by builder symbol id.
    fn stack_answers(&self, answers: &[AnswerVector]) -> Result<Matrix> {
        if answers.len() != self.params.n {
            return Err(Error::Protocol(format!("{} answers for {} servers", answers.len(), self.params.n)));
        }
        let mut y = vec![0; self.symbols.len()];
        for (n, a) in answers.iter().enumerate() {
            if a.server != n {
                return Err(Error::Protocol(format!("answer {n} is attributed to server {}", a.server)));
            }
            let rows = &self.server_rows[n];
            if a.symbols.len() != rows.len() {
                return Err(Error::Protocol(format!(
                    "server {n} returned {} symbols, expected {}",
                    a.symbols.len(),
                    rows.len()
                )));
            }
            for (&id, &v) in rows.iter().zip(&a.symbols) {
                if v >= self.field.q() {
                    return Err(Error::Protocol(format!("symbol {v} outside the field")));
                }
                y[id] = v;
            }
        }
        Ok(Matrix::column(y))
    }

    /// Linear decoding applied column-wise to `y`, whose row `i` stands for
    /// builder symbol `i`: returns the precoded desired stream (`L` rows).
    pub(crate) fn desired_stream(&self, y: &Matrix) -> Result<Matrix> {
        match &self.recipe {
            Recipe::Direct => Ok(y.clone()),
            Recipe::Ns(t) => t.desired_stream(&self.field, y),
            Recipe::Nb(r) => r.desired_stream(&self.field, y),
        }
    }

    /// Query rows stacked in builder order, as a `symbols x K2*L` matrix.
    pub fn stacked_queries(&self) -> Matrix {
        let mut m = Matrix::zeros(self.symbols.len(), self.params.k2 * self.l);
        for (n, rows) in self.server_rows.iter().enumerate() {
            for (r, &id) in rows.iter().enumerate() {
                m.row_mut(id).copy_from_slice(self.queries[n].row(r));
            }
        }
        m
    }

    /// Runs the decoder on the query rows themselves. The result maps the
    /// concatenated messages to the recovered message, so it must equal the
    /// selector of `W_k*`.
    pub fn decoder_on_queries(&self) -> Result<Matrix> {
        let stream = self.desired_stream(&self.stacked_queries())?;
        solve_square(&self.field, &self.precoders[self.k_star - 1], &stream)
    }

    pub fn decode(&self, answers: &[AnswerVector]) -> Result<Vec<FieldElement>> {
        let y = self.stack_answers(answers)?;
        let stream = self.desired_stream(&y)?;
        Ok(solve_square(&self.field, &self.precoders[self.k_star - 1], &stream)?.into_data())
    }

    pub(crate) fn recipe(&self) -> &Recipe {
        &self.recipe
    }
}

/// Builds the plan of `scheme` for `k_star`, drawing all randomness from `seed`.
pub fn build_plan(p: &SystemParams, scheme: Scheme, k_star: usize, seed: u64, opts: &BuildOptions) -> Result<QueryPlan> {
    let mut rng = seeded_rng(seed);
    match scheme {
        Scheme::Ns => ns_engine::build_query_with(p, k_star, &mut rng, opts),
        Scheme::Nb => nb_engine::build_query_with(p, k_star, &mut rng, opts),
        Scheme::Fixture => audit::broken_plan(p, k_star, seed),
    }
}
