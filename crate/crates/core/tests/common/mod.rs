//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's formula code.
#![allow(dead_code)]

use num::{BigInt, BigRational, One};
use twolevel_pir::capacity::SystemParams;

pub fn sys(n: usize, t1: usize, k1: usize, t2: usize, k2: usize) -> SystemParams {
    SystemParams::new(n, t1, k1, t2, k2).unwrap()
}

pub fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn powq(x: &BigRational, e: usize) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

/// Geometric closed form `(1 - x^K) / (1 - x)`, or `K` at `x = 1`.
pub fn dstar(n: usize, k: usize, t: usize) -> BigRational {
    let x = q(t as i64, n as i64);
    if x.is_one() {
        return BigRational::from_integer(BigInt::from(k));
    }
    (BigRational::one() - powq(&x, k)) / (BigRational::one() - x)
}

pub fn cost_ns(p: &SystemParams) -> BigRational {
    dstar(p.n, p.k1, p.t1) + powq(&q(p.t1 as i64, p.n as i64), p.k1) * dstar(p.n, p.k2 - p.k1, p.t2)
}

pub fn cost_nb(p: &SystemParams) -> BigRational {
    let x = q(p.t2 as i64, p.n as i64);
    let (d1, d2) = (dstar(p.n, p.k1, p.t1), dstar(p.n, p.k2 - p.k1, p.t2));
    let a = &d1 + &x * &d2;
    let b = &d2 + &x * &d1;
    if a > b {
        a
    } else {
        b
    }
}

pub fn cost_lower(p: &SystemParams) -> BigRational {
    let x = q(p.t2 as i64, p.n as i64);
    dstar(p.n, p.k1, p.t1) + x * powq(&q(p.t1 as i64, p.n as i64), p.k1 - 1) * dstar(p.n, p.k2 - p.k1, p.t2)
}

/// `(T1 - T2)/N (T1/N)^(K1-1) D*(K2-K1, T2)`.
pub fn gap(p: &SystemParams) -> BigRational {
    q((p.t1 - p.t2) as i64, p.n as i64)
        * powq(&q(p.t1 as i64, p.n as i64), p.k1 - 1)
        * dstar(p.n, p.k2 - p.k1, p.t2)
}



/// The five systems exercised end to end.
pub fn matrix() -> Vec<SystemParams> {
    vec![sys(4, 2, 2, 1, 4), sys(3, 2, 2, 1, 3), sys(4, 2, 2, 2, 2), sys(4, 1, 2, 1, 2), sys(6, 3, 2, 1, 4)]
}
