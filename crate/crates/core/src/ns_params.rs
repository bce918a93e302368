//! Coding-group sizes of the successive-cancellation code and the
//! properties they must satisfy.

use num::integer::gcd;
use num::{BigInt, BigRational};
use serde::{Deserialize, Serialize};

use crate::capacity::SystemParams;
use crate::error::{Error, Result};

fn overflow() -> Error {
    Error::Params("group sizes overflow 64 bits".into())
}

fn cpow(b: u64, e: usize) -> Result<u64> {
    b.checked_pow(e as u32).ok_or_else(overflow)
}

fn cmul(xs: &[u64]) -> Result<u64> {
    xs.iter().try_fold(1u64, |a, &b| a.checked_mul(b)).ok_or_else(overflow)
}

pub fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Sizes for compositions with `i` high and `j` low members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassParams {
    pub i: usize,
    pub j: usize,
    pub m: u64,
    /// Defined while a high message can still join (`i < K1`).
    pub n1: Option<u64>,
    pub k1: Option<u64>,
    /// Defined while a low message can still join (`j < K2 - K1`).
    pub n2: Option<u64>,
    pub k2: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsParameterTable {
    pub params: SystemParams,
    #[serde(rename = "M")]
    pub big_m: u64,
    /// `d[i][j]` for `i` in `0..=K1`, `j` in `0..=K2-K1`.
    pub d: Vec<Vec<u64>>,
    pub classes: Vec<ClassParams>,
    /// `N^K2`, before any reduction.
    pub l: u64,
}

/// `T2^a + (T1 - T2) * sum_{i<a} N^i T2^(a-1-i)`, which equals the
/// fractional definition and stays valid at `T2 = N`.
fn big_m(p: &SystemParams) -> Result<u64> {
    let a = p.k2 - p.k1;
    let (n, t1, t2) = (p.n as u64, p.t1 as u64, p.t2 as u64);
    let mut geo = 0u64;
    for i in 0..a {
        let term = cmul(&[cpow(n, i)?, cpow(t2, a - 1 - i)?])?;
        geo = geo.checked_add(term).ok_or_else(overflow)?;
    }
    cpow(t2, a)?
        .checked_add((t1 - t2).checked_mul(geo).ok_or_else(overflow)?)
        .ok_or_else(overflow)
}

/// The fractional form of `M`, kept for the integrality check.
pub fn big_m_fraction(p: &SystemParams) -> Option<BigRational> {
    if p.n == p.t2 {
        return None;
    }
    let a = p.k2 - p.k1;
    let b = |x: usize| BigInt::from(x);
    let t2a = num::pow::pow(b(p.t2), a);
    let na = num::pow::pow(b(p.n), a);
    Some(
        BigRational::from_integer(t2a.clone())
            + BigRational::new(b(p.t1 - p.t2), b(p.n - p.t2)) * BigRational::from_integer(na - t2a),
    )
}

pub fn build_table(p: &SystemParams) -> Result<NsParameterTable> {
    p.validate()?;
    let a = p.k2 - p.k1;
    let (n, t1, t2) = (p.n as u64, p.t1 as u64, p.t2 as u64);
    let m_big = big_m(p)?;
    let mut d = vec![vec![0u64; a + 1]; p.k1 + 1];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i + j == 0 {
                continue;
            }
            *cell = if j == 0 {
                cmul(&[m_big, cpow(t1, p.k1 - i)?, cpow(n - t1, i - 1)?])?
            } else {
                cmul(&[
                    cpow(t1, p.k1 - i)?,
                    cpow(n - t1, i)?,
                    cpow(t2, a - j)?,
                    cpow(n - t2, j - 1)?,
                ])?
            };
        }
    }
    let nd = |x: u64| x.checked_mul(n).ok_or_else(overflow);
    let mut classes = Vec::new();
    for i in 0..=p.k1 {
        for j in 0..=a {
            if i + j == 0 {
                continue;
            }
            let m = nd(d[i][j])?;
            let (n1, k1) = if i < p.k1 {
                let n1 = m.checked_add(nd(d[i + 1][j])?).ok_or_else(overflow)?;
                let k1 = t1.checked_mul(d[i][j] + d[i + 1][j]).ok_or_else(overflow)?;
                (Some(n1), Some(k1))
            } else {
                (None, None)
            };
            let (n2, k2) = if j < a {
                let n2 = m.checked_add(nd(d[i][j + 1])?).ok_or_else(overflow)?;
                let k2 = t2.checked_mul(d[i][j] + d[i][j + 1]).ok_or_else(overflow)?;
                (Some(n2), Some(k2))
            } else {
                (None, None)
            };
            classes.push(ClassParams { i, j, m, n1, k1, n2, k2 });
        }
    }
    Ok(NsParameterTable { params: *p, big_m: m_big, d, classes, l: cpow(n, p.k2)? })
}

impl NsParameterTable {
    pub fn class(&self, i: usize, j: usize) -> Option<&ClassParams> {
        self.classes.iter().find(|c| c.i == i && c.j == j)
    }

    /// `m` of a composition with `i` high and `j` low members; zero when empty.
    pub fn m(&self, i: usize, j: usize) -> u64 {
        self.d[i][j] * self.params.n as u64
    }

    /// Largest `r` dividing `L` such that every `d` (hence every placed
    /// segment `m / r`) stays a multiple of `N` after division, and every
    /// MDS message length stays integral.
    pub fn reduction_factor(&self) -> u64 {
        let mut g = self.l;
        for row in &self.d {
            for &x in row {
                g = gcd(g, x);
            }
        }
        for c in &self.classes {
            for k in [c.k1, c.k2].into_iter().flatten() {
                g = gcd(g, k);
            }
        }
        g.max(1)
    }

    /// Every composition size summed over compositions containing `k_star`.
    pub fn total_m_containing(&self, k_star: usize) -> u64 {
        let p = &self.params;
        subsets_of(p.k2)
            .filter(|&s| s >> (k_star - 1) & 1 == 1)
            .map(|s| {
                let (i, j) = split_counts(p, s);
                self.m(i, j)
            })
            .sum()
    }
}

/// Non-empty bitmask subsets of `0..k2`.
fn subsets_of(k2: usize) -> impl Iterator<Item = u64> {
    1u64..(1u64 << k2)
}

/// `(|K & 1:K1|, |K & K1+1:K2|)` for a bitmask over 1-based indices.
pub fn split_counts(p: &SystemParams, mask: u64) -> (usize, usize) {
    let high_mask = (1u64 << p.k1) - 1;
    ((mask & high_mask).count_ones() as usize, (mask & !high_mask).count_ones() as usize)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma3Item {
    pub name: String,
    pub detail: String,
    pub lhs: String,
    pub relation: String,
    pub rhs: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub params: SystemParams,
    pub items: Vec<Lemma3Item>,
}

impl Lemma3Report {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Lemma3Item> {
        self.items.iter().filter(|i| !i.pass)
    }

    /// Items whose name starts with `prefix`.
    pub fn group(&self, prefix: &str) -> impl Iterator<Item = &Lemma3Item> + '_ {
        let prefix = prefix.to_string();
        self.items.iter().filter(move |i| i.name.starts_with(&prefix))
    }

    fn push(&mut self, name: &str, detail: String, lhs: impl ToString, relation: &str, rhs: impl ToString, pass: bool) {
        self.items.push(Lemma3Item {
            name: name.into(),
            detail,
            lhs: lhs.to_string(),
            relation: relation.into(),
            rhs: rhs.to_string(),
            pass,
        });
    }
}

/// Evaluates every listed property of the group sizes, reporting both sides.
/// Item names:
/// `integrality`, `ratio.high`, `ratio.low`, `k1_eq_m`, `k2_le_m`,
/// `sum_m.enumerated`, `sum_m.binomial`, `sum_k.closed_form`,
/// `sum_k.derived_form`, `sum_k.strict`, `sum_k.fits`.
pub fn verify_lemma3(p: &SystemParams) -> Result<Lemma3Report> {
    let t = build_table(p)?;
    let mut r = Lemma3Report { params: *p, items: Vec::new() };
    let (n, t1, t2) = (p.n as u64, p.t1 as u64, p.t2 as u64);
    let a = p.k2 - p.k1;
    let l = t.l;

    match big_m_fraction(p) {
        Some(frac) => r.push(
            "integrality",
            "M from its fractional definition".into(),
            format!("{frac}"),
            "=",
            t.big_m,
            frac.is_integer() && frac.to_integer() == BigInt::from(t.big_m),
        ),
        // 0/0 at T1 = T2 = N; the polynomial form gives the limit N^(K2-K1)
        None => {
            let lim = n.pow(a as u32);
            r.push("integrality", "M at T1 = T2 = N".into(), t.big_m, "=", lim, t.big_m == lim)
        }
    }
    for c in &t.classes {
        if let Some(n1) = c.n1 {
            let ok = (t1 * n1) % n == 0 && Some(t1 * n1 / n) == c.k1;
            r.push("integrality", format!("k1 = T1/N n1 at ({},{})", c.i, c.j), t1 * n1, "divisible by", n, ok);
        }
        if let Some(n2) = c.n2 {
            let ok = (t2 * n2) % n == 0 && Some(t2 * n2 / n) == c.k2;
            r.push("integrality", format!("k2 = T2/N n2 at ({},{})", c.i, c.j), t2 * n2, "divisible by", n, ok);
        }
    }

    for i in 0..=p.k1 {
        for j in 0..=a {
            if i + j == 0 {
                continue;
            }
            if i < p.k1 {
                let (lhs, rhs) = (t.d[i][j] * (n - t1), t.d[i + 1][j] * t1);
                r.push("ratio.high", format!("d({i},{j}) (N-T1) vs d({},{j}) T1", i + 1), lhs, "=", rhs, lhs == rhs);
            }
            if j < a {
                let (lhs, rhs) = (t.d[i][j] * (n - t2), t.d[i][j + 1] * t2);
                r.push("ratio.low", format!("d({i},{j}) (N-T2) vs d({i},{}) T2", j + 1), lhs, ">=", rhs, lhs >= rhs);
            }
        }
    }

    for c in &t.classes {
        if let Some(k1) = c.k1 {
            r.push("k1_eq_m", format!("class ({},{})", c.i, c.j), k1, "=", c.m, k1 == c.m);
        }
        if let Some(k2) = c.k2 {
            r.push("k2_le_m", format!("class ({},{})", c.i, c.j), k2, "<=", c.m, k2 <= c.m);
        }
    }

    let mut stars = vec![1];
    if p.k2 > p.k1 {
        stars.push(p.k1 + 1);
    }
    for &ks in &stars {
        let enumerated = t.total_m_containing(ks);
        r.push("sum_m.enumerated", format!("k* = {ks}"), enumerated, "=", l, enumerated == l);
        let mut binomial = 0u64;
        if p.is_high(ks) {
            for i in 0..p.k1 {
                for j in 0..=a {
                    binomial += binom(p.k1 - 1, i) * binom(a, j) * t.m(i + 1, j);
                }
            }
        } else {
            for i in 0..=p.k1 {
                for j in 0..a {
                    binomial += binom(p.k1, i) * binom(a - 1, j) * t.m(i, j + 1);
                }
            }
        }
        r.push("sum_m.binomial", format!("k* = {ks}"), binomial, "=", l, binomial == l);
    }

    // Per-message budgets: for k* and an interfering k, the stream of k
    // must hold one segment per group containing k.
    for &ks in &stars {
        let high_star = p.is_high(ks);
        for k in (1..=p.k2).filter(|&k| k != ks) {
            let mut sum = 0u64;
            for s in subsets_of(p.k2) {
                if s >> (ks - 1) & 1 == 1 || s >> (k - 1) & 1 == 0 {
                    continue;
                }
                let (i, j) = split_counts(p, s);
                let c = t.class(i, j).expect("class exists");
                sum += if high_star { c.k1 } else { c.k2 }.expect("defined when k* can join");
            }
            let which = if high_star { "k1" } else { "k2" };
            let detail = format!("sum of {which} over groups with k = {k}, k* = {ks}");
            let printed = if high_star {
                t1 * n.pow(p.k2 as u32 - 1)
            } else if p.is_high(k) {
                t2 * n.pow(p.k2 as u32 - 1) + (n - t1) * t2 * n.pow(p.k2 as u32 - 2)
            } else {
                t2 * n.pow(p.k2 as u32 - 1)
            };
            let derived = if high_star { t1 } else { t2 } * n.pow(p.k2 as u32 - 1);
            r.push("sum_k.closed_form", detail.clone(), sum, "=", printed, sum == printed);
            r.push("sum_k.derived_form", detail.clone(), sum, "=", derived, sum == derived);
            r.push("sum_k.strict", detail.clone(), sum, "<", l, sum < l);
            r.push("sum_k.fits", detail, sum, "<=", l, sum <= l);
        }
    }
    Ok(r)
}
