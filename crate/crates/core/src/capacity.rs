//! Exact download costs and rates for two-level PIR, in big rationals.

use std::fmt;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{params, Result};

/// The system `(N, T1:K1, T2:K2)`; messages `1..=K1` get level T1, all get T2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    pub t1: usize,
    pub k1: usize,
    pub t2: usize,
    pub k2: usize,
}

impl SystemParams {
    pub fn new(n: usize, t1: usize, k1: usize, t2: usize, k2: usize) -> Result<Self> {
        let p = SystemParams { n, t1, k1, t2, k2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let SystemParams { n, t1, k1, t2, k2 } = *self;
        if !(1 <= t2 && t2 <= t1 && t1 <= n) {
            return params(format!("need 1 <= T2 <= T1 <= N, got N={n} T1={t1} T2={t2}"));
        }
        if !(1 <= k1 && k1 <= k2) {
            return params(format!("need 1 <= K1 <= K2, got K1={k1} K2={k2}"));
        }
        if k2 > 63 {
            return params("at most 63 messages");
        }
        Ok(())
    }

    /// Whether 1-based message `k` belongs to the high-privacy class.
    pub fn is_high(&self, k: usize) -> bool {
        k <= self.k1
    }
}

impl fmt::Display for SystemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}:{},{}:{})", self.n, self.t1, self.k1, self.t2, self.k2)
    }
}

/// Renders rationals as `p/q` strings in serialized documents.
pub mod ratio_str {
    use super::*;
    use serde::{de::Error as _, Deserializer, Serializer};

    pub fn to_string(r: &BigRational) -> String {
        if r.denom().is_one() {
            r.numer().to_string()
        } else {
            format!("{}/{}", r.numer(), r.denom())
        }
    }

    pub fn parse(s: &str) -> Option<BigRational> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(BigRational::new(n, d))
    }

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).ok_or_else(|| D::Error::custom(format!("bad rational {s:?}")))
    }
}

fn ratio(a: usize, b: usize) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn pow(r: &BigRational, e: usize) -> BigRational {
    num::pow::pow(r.clone(), e)
}

/// `sum_{i<K} (T/N)^i`; zero for `K = 0`.
pub fn dstar(n: usize, k: usize, t: usize) -> BigRational {
    let x = ratio(t, n);
    let mut term = BigRational::one();
    let mut acc = BigRational::zero();
    for _ in 0..k {
        acc += &term;
        term *= &x;
    }
    acc
}

struct Parts {
    d1: BigRational,
    d2: BigRational,
    x: BigRational,
    y: BigRational,
}

fn parts(p: &SystemParams) -> Parts {
    Parts {
        d1: dstar(p.n, p.k1, p.t1),
        d2: dstar(p.n, p.k2 - p.k1, p.t2),
        x: ratio(p.t2, p.n),
        y: pow(&ratio(p.t1, p.n), p.k1),
    }
}

/// Lower bound on the download cost of any scheme.
pub fn cost_lower(p: &SystemParams) -> BigRational {
    let q = parts(p);
    q.d1 + ratio(p.t2, p.n) * pow(&ratio(p.t1, p.n), p.k1 - 1) * q.d2
}

pub fn cost_ns(p: &SystemParams) -> BigRational {
    let q = parts(p);
    q.d1 + q.y * q.d2
}

pub fn cost_nb(p: &SystemParams) -> BigRational {
    let q = parts(p);
    let a = &q.d1 + &q.x * &q.d2;
    let b = &q.d2 + &q.x * &q.d1;
    a.max(b)
}

pub fn naive_cost(p: &SystemParams) -> BigRational {
    dstar(p.n, p.k2, p.t1)
}

pub fn rate_upper(p: &SystemParams) -> BigRational {
    cost_lower(p).recip()
}

pub fn rate_ns(p: &SystemParams) -> BigRational {
    cost_ns(p).recip()
}

pub fn rate_nb(p: &SystemParams) -> BigRational {
    cost_nb(p).recip()
}

pub fn rate_naive(p: &SystemParams) -> BigRational {
    naive_cost(p).recip()
}

/// `D_NS` minus the lower bound, in closed form.
pub fn gap_closed_form(p: &SystemParams) -> BigRational {
    let q = parts(p);
    ratio(p.t1 - p.t2, p.n) * pow(&ratio(p.t1, p.n), p.k1 - 1) * q.d2
}

/// Naive cost minus `D_NS`, in closed form.
pub fn coding_gain_closed_form(p: &SystemParams) -> BigRational {
    let q = parts(p);
    q.y * (dstar(p.n, p.k2 - p.k1, p.t1) - q.d2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Best {
    Ns,
    Nb,
    Tie,
}

impl fmt::Display for Best {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Best::Ns => "NS",
            Best::Nb => "NB",
            Best::Tie => "tie",
        })
    }
}

/// The case analysis comparing the two schemes symbolically: `Some(true)`
/// when NB is strictly better. Not applicable when `K1 = K2`.
pub fn nb_conditions(p: &SystemParams) -> Option<bool> {
    if p.k1 == p.k2 {
        return None;
    }
    let q = parts(p);
    let one = BigRational::one();
    let first = q.d1 >= q.d2 && q.x < q.y;
    // d1 / (1 - y) > d2 / (1 - x), cleared of denominators (y may be 1)
    let second = q.d1 < q.d2 && &q.d2 * (&one - &q.y) < &q.d1 * (&one - &q.x);
    Some(first || second)
}

pub fn best_scheme(p: &SystemParams) -> Best {
    let (ns, nb) = (rate_ns(p), rate_nb(p));
    let best = match nb.cmp(&ns) {
        std::cmp::Ordering::Greater => Best::Nb,
        std::cmp::Ordering::Less => Best::Ns,
        std::cmp::Ordering::Equal => Best::Tie,
    };
    debug_assert_eq!(nb_conditions(p).unwrap_or(false), best == Best::Nb, "{p}");
    best
}

pub fn prop1_bound() -> BigRational {
    let b = ratio(11, 21);
    debug_assert!(b < ratio(9, 17));
    b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateReport {
    pub params: SystemParams,
    #[serde(with = "ratio_str")]
    pub r_ns: BigRational,
    #[serde(with = "ratio_str")]
    pub r_nb: BigRational,
    #[serde(with = "ratio_str")]
    pub r_upper: BigRational,
    #[serde(with = "ratio_str")]
    pub r_naive: BigRational,
    #[serde(with = "ratio_str")]
    pub d_gap: BigRational,
    #[serde(with = "ratio_str")]
    pub coding_gain: BigRational,
    pub best: Best,
}

pub fn report(p: &SystemParams) -> RateReport {
    RateReport {
        params: *p,
        r_ns: rate_ns(p),
        r_nb: rate_nb(p),
        r_upper: rate_upper(p),
        r_naive: rate_naive(p),
        d_gap: cost_ns(p) - cost_lower(p),
        coding_gain: naive_cost(p) - cost_ns(p),
        best: best_scheme(p),
    }
}

/// Decimal rendering with `sig` significant digits, rounded half up, computed
/// from the exact value.
pub fn decimal(r: &BigRational, sig: usize) -> String {
    assert!(sig >= 1);
    if r.is_zero() {
        return "0".into();
    }
    let neg = r.is_negative();
    let a = r.abs();
    let ten = BigInt::from(10);
    let ten_pow = |e: usize| num::pow::pow(ten.clone(), e);
    // e = floor(log10 a), starting from the digit-count estimate
    let mut e = a.numer().to_string().len() as i64 - a.denom().to_string().len() as i64;
    let scale = |e: i64| -> BigRational {
        if e >= 0 {
            BigRational::from_integer(ten_pow(e as usize))
        } else {
            BigRational::new(BigInt::one(), ten_pow((-e) as usize))
        }
    };
    while scale(e) > a {
        e -= 1;
    }
    while scale(e + 1) <= a {
        e += 1;
    }
    let shifted = &a * scale(sig as i64 - 1 - e);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut digits = (shifted + half).floor().to_integer();
    if digits >= ten_pow(sig) {
        digits /= &ten;
        e += 1;
    }
    let s = digits.to_string();
    let body = if e >= 0 && (e as usize) < sig {
        let int_len = e as usize + 1;
        if int_len == sig {
            s
        } else {
            format!("{}.{}", &s[..int_len], &s[int_len..])
        }
    } else if e < 0 && e >= -7 {
        format!("0.{}{}", "0".repeat((-e - 1) as usize), s)
    } else {
        let mantissa = if sig == 1 { s.clone() } else { format!("{}.{}", &s[..1], &s[1..]) };
        format!("{mantissa}e{e}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vary {
    K1,
    T1,
}

/// One varying coordinate over `from..=to`; with `k2_offset`, K2 tracks K1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub vary: Vary,
    pub from: usize,
    pub to: usize,
    pub k2_offset: Option<usize>,
}

impl SweepSpec {
    /// `(10, 6:K1, 2:K1+4)` for `K1 = 1..=8`.
    pub fn figure_a() -> Self {
        SweepSpec {
            base: SystemParams { n: 10, t1: 6, k1: 1, t2: 2, k2: 5 },
            vary: Vary::K1,
            from: 1,
            to: 8,
            k2_offset: Some(4),
        }
    }

    /// `(10, T1:2, 2:6)` for `T1 = 2..=10`.
    pub fn figure_b() -> Self {
        SweepSpec {
            base: SystemParams { n: 10, t1: 2, k1: 2, t2: 2, k2: 6 },
            vary: Vary::T1,
            from: 2,
            to: 10,
            k2_offset: None,
        }
    }

    pub fn points(&self) -> Result<Vec<SystemParams>> {
        if self.from > self.to {
            return params(format!("empty sweep range {}..={}", self.from, self.to));
        }
        (self.from..=self.to)
            .map(|v| {
                let mut p = self.base;
                match self.vary {
                    Vary::K1 => p.k1 = v,
                    Vary::T1 => p.t1 = v,
                }
                if let Some(off) = self.k2_offset {
                    p.k2 = p.k1 + off;
                }
                p.validate().map(|_| p)
            })
            .collect()
    }
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<RateReport>> {
    Ok(spec.points()?.iter().map(report).collect())
}

pub const CSV_HEADER: &str = "N,T1,K1,T2,K2,r_ns,r_nb,r_upper,r_naive,best,r_ns_dec,r_nb_dec,r_upper_dec,r_naive_dec";

pub fn csv_row(r: &RateReport) -> String {
    let p = &r.params;
    let rates = [&r.r_ns, &r.r_nb, &r.r_upper, &r.r_naive];
    let exact: Vec<String> = rates.iter().map(|x| ratio_str::to_string(x)).collect();
    let dec: Vec<String> = rates.iter().map(|x| decimal(x, 12)).collect();
    format!(
        "{},{},{},{},{},{},{},{}",
        p.n,
        p.t1,
        p.k1,
        p.t2,
        p.k2,
        exact.join(","),
        r.best,
        dec.join(",")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(n: usize, t1: usize, k1: usize, t2: usize, k2: usize) -> SystemParams {
        SystemParams::new(n, t1, k1, t2, k2).unwrap()
    }

    /// Direct float-free oracle: the sum with a common denominator N^(K-1).
    fn dstar_oracle(n: usize, k: usize, t: usize) -> BigRational {
        if k == 0 {
            return BigRational::zero();
        }
        let mut num = BigInt::zero();
        for i in 0..k {
            num += BigInt::from(t).pow(i as u32) * BigInt::from(n).pow((k - 1 - i) as u32);
        }
        BigRational::new(num, BigInt::from(n).pow((k - 1) as u32))
    }

    fn all_params(max_n: usize, max_k: usize) -> Vec<SystemParams> {
        let mut v = Vec::new();
        for n in 1..=max_n {
            for t1 in 1..=n {
                for t2 in 1..=t1 {
                    for k2 in 1..=max_k {
                        for k1 in 1..=k2 {
                            v.push(sp(n, t1, k1, t2, k2));
                        }
                    }
                }
            }
        }
        v
    }

    #[test]
    fn dstar_examples() {
        assert_eq!(dstar(4, 2, 2), ratio(3, 2));
        assert_eq!(dstar(4, 4, 2), ratio(15, 8));
        assert_eq!(dstar(7, 1, 3), BigRational::one());
        assert_eq!(dstar(7, 0, 3), BigRational::zero());
        for n in 1..8 {
            for t in 0..=n {
                for k in 0..7 {
                    assert_eq!(dstar(n, k, t), dstar_oracle(n, k, t));
                }
            }
        }
    }

    #[test]
    fn worked_example_rates() {
        let p = sp(4, 2, 2, 1, 4);
        assert_eq!(rate_ns(&p), ratio(16, 29));
        assert_eq!(rate_nb(&p), ratio(16, 29));
        assert_eq!(naive_cost(&p), ratio(15, 8));
        assert_eq!(best_scheme(&p), Best::Tie);
        let q = sp(3, 2, 2, 1, 3);
        assert_eq!(rate_upper(&q), ratio(9, 17));
        assert_eq!(prop1_bound(), ratio(11, 21));
        assert!(prop1_bound() < rate_upper(&q));
        assert!(rate_ns(&q).max(rate_nb(&q)) <= prop1_bound());
    }

    #[test]
    fn degenerate_cases() {
        let p = sp(5, 3, 3, 3, 3);
        assert_eq!(rate_ns(&p), dstar(5, 3, 3).recip());
        assert_eq!(rate_upper(&sp(5, 3, 3, 2, 3)), dstar(5, 3, 3).recip());
        let sym = sp(6, 3, 2, 3, 4);
        let x = parts(&sym);
        assert_eq!(&x.d1 + &x.x * &x.d2, &x.d2 + &x.x * &x.d1);
        let mid = sp(10, 6, 2, 2, 6);
        assert!(rate_naive(&mid) < rate_ns(&mid) && rate_ns(&mid) < rate_upper(&mid));
    }

    #[test]
    fn sweep_invariants() {
        for p in all_params(12, 8).into_iter().filter(|p| p.n <= 12) {
            let r = report(&p);
            let best = r.r_ns.clone().max(r.r_nb.clone());
            assert!(r.r_naive <= best && best <= r.r_upper, "{p}");
            if p.t1 == p.t2 {
                assert_eq!(r.r_ns, r.r_upper, "{p}");
            }
            if p.t1 == p.n && p.k1 < p.k2 {
                let q = parts(&p);
                if q.d1 >= q.d2 {
                    assert_eq!(r.r_nb, r.r_upper, "{p}");
                }
            }
            assert_eq!(r.d_gap, gap_closed_form(&p), "{p}");
            assert_eq!(r.coding_gain, coding_gain_closed_form(&p), "{p}");
            assert_eq!(r.coding_gain.is_positive(), p.k2 - p.k1 >= 2 && p.t1 > p.t2, "{p}");
            assert_eq!(nb_conditions(&p).unwrap_or(false), r.best == Best::Nb, "{p}");
            if p.k1 == p.k2 {
                assert_eq!(r.best, Best::Tie);
            }
        }
    }

    #[test]
    fn figure_sweeps() {
        let a = sweep(&SweepSpec::figure_a()).unwrap();
        assert_eq!(a.len(), 8);
        for w in a.windows(2) {
            assert!(w[1].d_gap < w[0].d_gap);
        }
        let b = sweep(&SweepSpec::figure_b()).unwrap();
        assert_eq!(b.first().unwrap().r_ns, b.first().unwrap().r_upper);
        assert_eq!(b.last().unwrap().r_nb, b.last().unwrap().r_upper);
        assert_eq!(b.first().unwrap().best, Best::Ns);
        assert_eq!(b.last().unwrap().best, Best::Nb);
        let bad = SweepSpec { from: 5, to: 4, ..SweepSpec::figure_a() };
        assert!(sweep(&bad).is_err());
        let beyond = SweepSpec { to: 11, ..SweepSpec::figure_b() };
        assert!(sweep(&beyond).is_err());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal(&ratio(16, 29), 12), "0.551724137931");
        assert_eq!(decimal(&ratio(9, 17), 12), "0.529411764706");
        assert_eq!(decimal(&ratio(1, 1), 12), "1.00000000000");
        assert_eq!(decimal(&ratio(2, 3), 3), "0.667");
        assert_eq!(decimal(&ratio(999_999, 1_000_000), 3), "1.00");
        assert_eq!(decimal(&ratio(1, 800), 4), "0.001250");
        assert_eq!(decimal(&ratio(123_456, 1), 3), "1.23e5");
        assert_eq!(decimal(&-ratio(1, 4), 2), "-0.25");
        assert_eq!(decimal(&BigRational::zero(), 12), "0");
    }

    #[test]
    fn csv_and_json() {
        let r = report(&sp(4, 2, 2, 1, 4));
        let row = csv_row(&r);
        assert!(row.starts_with("4,2,2,1,4,16/29,16/29,"));
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        let json = serde_json::to_string(&r).unwrap();
        let back: RateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(4, 1, 2, 2, 4).is_err());
        assert!(SystemParams::new(4, 5, 2, 1, 4).is_err());
        assert!(SystemParams::new(4, 2, 3, 1, 2).is_err());
        assert!(SystemParams::new(4, 2, 0, 1, 2).is_err());
        assert_eq!(sp(4, 2, 2, 1, 4).to_string(), "(4,2:2,1:4)");
    }

    proptest! {
        #[test]
        fn decimal_matches_float(a in 1u64..1_000_000, b in 1u64..1_000_000) {
            let r = BigRational::new(BigInt::from(a), BigInt::from(b));
            let s = decimal(&r, 12);
            let parsed: f64 = s.parse().unwrap();
            let exact = a as f64 / b as f64;
            prop_assert!((parsed - exact).abs() <= exact * 1e-11);
        }
    }
}
