//! Structural privacy audit over query plans.
//!
//! Every transmitted row is `sum_k C_k S_k` with `S_k` a private uniform
//! full-rank precoder drawn independently per message. Restricted to a set of
//! colluding servers, the block `C_k S_k` is distributed as a uniformly random
//! matrix subject to exactly the row dependencies of `C_k`. Two retrievals are
//! therefore indistinguishable to the set whenever the same rows touch each
//! message and each `C_k` has the same left null space in both; for full-row-rank
//! blocks that is just "full rank with equal row counts".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{random_full_rank, rank, seeded_rng, Matrix};
use crate::capacity::SystemParams;
use crate::error::{params, Result};
use crate::ns_engine::{choose_field, BuildOptions};
use crate::plan::{build_plan, mask_of, PlacedSymbol, PlanParts, QueryPlan, Recipe, Scheme, SymbolTag, Term};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTarget {
    pub params: SystemParams,
    pub scheme: Scheme,
    /// Message indices, 1-based.
    pub protected_set: Vec<usize>,
    /// Number of colluding servers.
    pub level: usize,
}

impl AuditTarget {
    pub fn new(params: SystemParams, scheme: Scheme, protected_set: Vec<usize>, level: usize) -> Self {
        AuditTarget { params, scheme, protected_set, level }
    }

    /// `(S = 1:K1, T = T1)`.
    pub fn high(params: SystemParams, scheme: Scheme) -> Self {
        AuditTarget::new(params, scheme, (1..=params.k1).collect(), params.t1)
    }

    /// `(S = 1:K2, T = T2)`.
    pub fn low(params: SystemParams, scheme: Scheme) -> Self {
        AuditTarget::new(params, scheme, (1..=params.k2).collect(), params.t2)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.level == 0 || self.level > self.params.n {
            return params(format!("collusion level {} outside 1..={}", self.level, self.params.n));
        }
        if self.protected_set.is_empty() {
            return params("empty protected set");
        }
        if let Some(k) = self.protected_set.iter().find(|&&k| k == 0 || k > self.params.k2) {
            return params(format!("protected message {k} outside 1..={}", self.params.k2));
        }
        Ok(())
    }
}

/// One `(k*, message, colluding set)` block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub k_star: usize,
    pub message: usize,
    /// 0-based server ids.
    pub colluding: Vec<usize>,
    pub rows: usize,
    pub rank: usize,
    /// Rank the block must have: that of the same block under the first
    /// protected target, which for full-rank schemes is the row count.
    pub required_rank: usize,
    pub full_row_rank: bool,
    pub positions_match: bool,
    pub null_space_match: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub k_star: usize,
    pub seed: u64,
    /// SHA-256 of the canonical signature bytes.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub target: AuditTarget,
    pub seeds: Vec<u64>,
    pub pattern_ok: bool,
    pub patterns: Vec<PatternEntry>,
    pub colluding_sets: usize,
    pub checks: Vec<BlockCheck>,
    pub pass: bool,
    pub counterexample: Option<String>,
    pub justification: String,
}

impl AuditReport {
    /// "certified" or "not certified": a failed audit does not prove a leak.
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "certified"
        } else {
            "not certified"
        }
    }

    pub fn all_full_row_rank(&self) -> bool {
        self.checks.iter().all(|c| c.full_row_rank)
    }
}

const JUSTIFICATION: &str = "each message is multiplied by an independent uniform full-rank precoder, so on \
any colluding set the queries are a fixed row pattern applied to those precoders; identical placement \
patterns, identical rows touching each message and identical row dependencies within each message block \
give identical joint query distributions";

/// Canonical bytes of the placement pattern: the multiset of
/// `(server, section, layer, composition)` with multiplicities, prefixed by
/// the system and the message length. Coefficients are not part of it.
pub fn pattern_signature(plan: &QueryPlan) -> Vec<u8> {
    let mut counts: BTreeMap<(usize, u8, usize, u64), u64> = BTreeMap::new();
    for s in 0..plan.servers() {
        for tag in plan.manifest(s) {
            *counts.entry((tag.server, tag.section, tag.layer, tag.composition)).or_default() += 1;
        }
    }
    let p = plan.params();
    let mut out = Vec::with_capacity(8 * (6 + 5 * counts.len()));
    for v in [p.n, p.t1, p.k1, p.t2, p.k2, plan.message_len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for ((server, section, layer, comp), count) in counts {
        for v in [server as u64, section as u64, layer as u64, comp, count] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn signature_digest(sig: &[u8]) -> String {
    hex::encode(Sha256::digest(sig))
}

/// `(server, row)` of every row on `colluding` that involves `message`, in
/// manifest order.
pub fn block_positions(plan: &QueryPlan, message: usize, colluding: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &s in colluding {
        for r in 0..plan.rows(s) {
            if plan.terms(s, r).iter().any(|t| t.message == message) {
                out.push((s, r));
            }
        }
    }
    out
}

/// Deterministic coefficients on `message` of every row on `colluding` that
/// involves it, so that the transmitted block is `C * S_message`. Rows that
/// do not touch the message carry no part of it and are left out.
pub fn collusion_block(plan: &QueryPlan, message: usize, colluding: &[usize]) -> Matrix {
    let pos = block_positions(plan, message, colluding);
    let mut m = Matrix::zeros(pos.len(), plan.message_len());
    for (i, &(s, r)) in pos.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&plan.coefficient_row(s, r, message));
    }
    m
}

/// All `t`-subsets of `0..n`, each ascending, in lexicographic order.
pub fn subsets(n: usize, t: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, t: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < t - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, t, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, t, &mut Vec::new(), &mut out);
    out
}

/// Audits plans produced by `build(k_star, seed)`. Only the public plan
/// surface is consulted.
pub fn audit_with<F>(target: &AuditTarget, seeds: &[u64], build: F) -> Result<AuditReport>
where
    F: Fn(usize, u64) -> Result<QueryPlan>,
{
    target.validate()?;
    if seeds.is_empty() {
        return params("audit needs at least one seed");
    }
    let p = target.params;
    let sets = subsets(p.n, target.level);
    let mut patterns = Vec::new();
    let mut checks = Vec::new();
    let mut counterexample = None;
    let mut reference_sig: Option<(usize, Vec<u8>)> = None;
    let mut pattern_ok = true;

    for &seed in seeds {
        let plans = target.protected_set.iter().map(|&k| build(k, seed)).collect::<Result<Vec<_>>>()?;
        for (plan, &k) in plans.iter().zip(&target.protected_set) {
            let sig = pattern_signature(plan);
            patterns.push(PatternEntry { k_star: k, seed, digest: signature_digest(&sig) });
            match &reference_sig {
                None => reference_sig = Some((k, sig)),
                Some((k0, s0)) if *s0 != sig => {
                    pattern_ok = false;
                    counterexample.get_or_insert_with(|| {
                        format!("placement pattern for k*={k} (seed {seed}) differs from k*={k0}")
                    });
                }
                _ => {}
            }
        }
        if !pattern_ok {
            continue;
        }
        let reference = &plans[0];
        let field = *reference.field();
        for message in 1..=p.k2 {
            for set in &sets {
                let pos0 = block_positions(reference, message, set);
                let c0 = collusion_block(reference, message, set);
                let r0 = rank(&field, &c0);
                for (plan, &k) in plans.iter().zip(&target.protected_set) {
                    let (positions_match, null_space_match, c_rows, r) = if plan.field() != reference.field()
                        || plan.message_len() != reference.message_len()
                    {
                        (false, false, 0, 0)
                    } else {
                        let pos = block_positions(plan, message, set);
                        let c = collusion_block(plan, message, set);
                        let r = rank(&field, &c);
                        let same_pos = pos == pos0;
                        let same_null = same_pos && r == r0 && rank(&field, &c.hstack(&c0)?) == r;
                        (same_pos, same_null, c.rows(), r)
                    };
                    let pass = positions_match && null_space_match;
                    if !pass {
                        counterexample.get_or_insert_with(|| {
                            format!(
                                "k*={k}, message {message}, servers {set:?}: {c_rows} rows of rank {r}, \
                                 expected {} rows of rank {r0} with matching dependencies",
                                pos0.len()
                            )
                        });
                    }
                    checks.push(BlockCheck {
                        k_star: k,
                        message,
                        colluding: set.clone(),
                        rows: c_rows,
                        rank: r,
                        required_rank: r0,
                        full_row_rank: r == c_rows,
                        positions_match,
                        null_space_match,
                        pass,
                    });
                }
            }
        }
    }
    let pass = pattern_ok && checks.iter().all(|c| c.pass);
    Ok(AuditReport {
        target: target.clone(),
        seeds: seeds.to_vec(),
        pattern_ok,
        patterns,
        colluding_sets: sets.len(),
        checks,
        pass,
        counterexample: if pass { None } else { counterexample },
        justification: JUSTIFICATION.into(),
    })
}

pub fn audit(target: &AuditTarget, seeds: &[u64], opts: &BuildOptions) -> Result<AuditReport> {
    audit_with(target, seeds, |k, seed| build_plan(&target.params, target.scheme, k, seed, opts))
}

/// Negative control: fetches `W_k*` by downloading its precoded symbols in
/// the clear, one per server in turn. Recovers correctly, leaks the target.
pub fn broken_plan(p: &SystemParams, k_star: usize, seed: u64) -> Result<QueryPlan> {
    p.validate()?;
    crate::ns_engine::check_target(p, k_star)?;
    let l = p.n;
    let field = choose_field(None, l)?;
    let mut rng = seeded_rng(seed);
    let precoders = (0..p.k2).map(|_| random_full_rank(&field, l, &mut rng)).collect();
    let symbols = (0..l)
        .map(|i| PlacedSymbol {
            tag: SymbolTag { server: i % p.n, section: 0, layer: 1, composition: mask_of([k_star]), index: i },
            terms: vec![Term::unit(k_star, i)],
        })
        .collect();
    QueryPlan::assemble(PlanParts {
        params: *p,
        scheme: Scheme::Fixture,
        k_star,
        l,
        field,
        reduction: 1,
        precoders,
        symbols,
        recipe: Recipe::Direct,
    })
}
