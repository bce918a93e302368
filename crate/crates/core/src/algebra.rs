//! Prime-field arithmetic and dense matrices over GF(q).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{params, Error, Result};

/// A symbol of GF(q), always kept reduced into `[0, q)`.
pub type FieldElement = u64;

/// The PRNG behind every random choice in the crate.
pub type SeededRng = ChaCha8Rng;

pub const MAX_MODULUS: u64 = 1 << 61;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mul_mod_u128(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u128(acc, b, m);
        }
        b = mul_mod_u128(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the base set is exact for every u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u128(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `n`.
pub fn next_prime_above(n: u64) -> u64 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// The field context GF(q).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    q: u64,
}

impl Field {
    pub fn new(q: u64) -> Result<Self> {
        if q < 3 {
            return params(format!("modulus {q} is below 3"));
        }
        if q >= MAX_MODULUS {
            return params(format!("modulus {q} exceeds 61 bits"));
        }
        if !is_prime(q) {
            return params(format!("modulus {q} is not prime"));
        }
        Ok(Field { q })
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> FieldElement {
        a % self.q
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if self.q < (1 << 32) {
            a * b % self.q
        } else {
            mul_mod_u128(a, b, self.q)
        }
    }

    /// `acc + a * b`; the small-modulus path reduces once.
    #[inline]
    fn mul_add(&self, acc: FieldElement, a: FieldElement, b: FieldElement) -> FieldElement {
        if self.q < (1 << 32) {
            (acc + a * b) % self.q
        } else {
            self.add(acc, mul_mod_u128(a, b, self.q))
        }
    }

    pub fn pow(&self, a: FieldElement, e: u64) -> FieldElement {
        pow_mod(a, e, self.q)
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a % self.q == 0 {
            return Err(Error::Singular("inverse of zero".into()));
        }
        Ok(pow_mod(a, self.q - 2, self.q))
    }

    pub fn random<R: Rng>(&self, rng: &mut R) -> FieldElement {
        rng.random_range(0..self.q)
    }

    /// `dst[i] += c * src[i]` over the whole slice.
    pub fn axpy(&self, dst: &mut [FieldElement], c: FieldElement, src: &[FieldElement]) {
        if c == 0 {
            return;
        }
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.mul_add(*d, c, s);
        }
    }

    pub fn dot(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        a.iter().zip(b).fold(0, |acc, (&x, &y)| self.mul_add(acc, x, y))
    }
}

/// Dense row-major matrix over GF(q).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<FieldElement>) -> Result<Self> {
        if data.len() != rows * cols {
            return params(format!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from explicit rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<FieldElement>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return params("ragged rows");
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn column(values: Vec<FieldElement>) -> Self {
        Matrix { rows: values.len(), cols: 1, data: values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[FieldElement] {
        &self.data
    }

    pub fn into_data(self) -> Vec<FieldElement> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: FieldElement) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [FieldElement] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn push_row(&mut self, row: &[FieldElement]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return params(format!("row of length {} pushed onto {} columns", row.len(), self.cols));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn mul(&self, f: &Field, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return params(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                f.axpy(dst, a, other.row(k));
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, f: &Field, v: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if v.len() != self.cols {
            return params(format!("vector of length {} against {} columns", v.len(), self.cols));
        }
        Ok((0..self.rows).map(|r| f.dot(self.row(r), v)).collect())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Matrix { rows: self.rows, cols: idx.len(), data }
    }

    /// Columns `start..start + len`.
    pub fn col_range(&self, start: usize, len: usize) -> Matrix {
        let mut data = Vec::with_capacity(len * self.rows);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Matrix { rows: self.rows, cols: len, data }
    }

    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return params("hstack with differing row counts");
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix { rows: self.rows, cols: self.cols + other.cols, data })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// Forward elimination in place; returns the pivot columns.
fn eliminate(f: &Field, m: &mut Matrix, reduce_above: bool) -> Vec<usize> {
    let (rows, cols) = (m.rows, m.cols);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| m.get(i, c) != 0) else {
            continue;
        };
        if p != r {
            for j in 0..cols {
                m.data.swap(p * cols + j, r * cols + j);
            }
        }
        let inv = f.inv(m.get(r, c)).expect("pivot is nonzero");
        for v in m.row_mut(r) {
            *v = f.mul(*v, inv);
        }
        let pivot_row = m.row(r)[c..].to_vec();
        let start = if reduce_above { 0 } else { r + 1 };
        for i in start..rows {
            if i == r {
                continue;
            }
            let factor = m.get(i, c);
            if factor != 0 {
                f.axpy(&mut m.row_mut(i)[c..], f.neg(factor), &pivot_row);
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(f: &Field, m: &Matrix) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    let mut work = m.clone();
    eliminate(f, &mut work, false).len()
}

/// Solves `a * x = b` for square invertible `a`.
pub fn solve_square(f: &Field, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return params(format!("solve_square on a {}x{} matrix", a.rows, a.cols));
    }
    if b.rows != a.rows {
        return params("right-hand side row count differs");
    }
    let n = a.rows;
    let mut aug = a.hstack(b)?;
    let pivots = eliminate(f, &mut aug, true);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return Err(Error::Singular(format!("{n}x{n} system has rank below {n}")));
    }
    Ok(aug.col_range(n, b.cols))
}

pub fn inverse(f: &Field, a: &Matrix) -> Result<Matrix> {
    solve_square(f, a, &Matrix::identity(a.rows))
}

/// Uniform sample over the full-rank `dim` x `dim` matrices, by rejection.
pub fn random_full_rank<R: Rng>(f: &Field, dim: usize, rng: &mut R) -> Matrix {
    assert!(dim >= 1, "random_full_rank needs dim >= 1");
    loop {
        let data = (0..dim * dim).map(|_| f.random(rng)).collect();
        let m = Matrix { rows: dim, cols: dim, data };
        if rank(f, &m) == dim {
            return m;
        }
    }
}

pub fn random_vector<R: Rng>(f: &Field, len: usize, rng: &mut R) -> Vec<FieldElement> {
    (0..len).map(|_| f.random(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn f(q: u64) -> Field {
        Field::new(q).unwrap()
    }

    #[test]
    fn small_field_examples() {
        let f7 = f(7);
        assert_eq!(f7.mul(3, 5), 1);
        assert_eq!(f7.inv(3).unwrap(), 5);
        assert!(matches!(f7.inv(0), Err(Error::Singular(_))));
    }

    #[test]
    fn inverses_mod_101() {
        let f101 = f(101);
        let mut rng = seeded_rng(1);
        for _ in 0..1000 {
            let a = rng.random_range(1..101u64);
            let b = f101.inv(a).unwrap();
            assert_eq!(a * b % 101, 1);
            assert_eq!(f101.mul(a, b), 1);
        }
    }

    #[test]
    fn field_axioms_exhaustive() {
        for q in [5u64, 7] {
            let fq = f(q);
            for a in 0..q {
                assert_eq!(fq.add(a, fq.neg(a)), 0);
                if a != 0 {
                    assert_eq!(fq.mul(a, fq.inv(a).unwrap()), 1);
                }
                for b in 0..q {
                    assert_eq!(fq.add(a, b), (a + b) % q);
                    assert_eq!(fq.sub(a, b), (a + q - b) % q);
                    for c in 0..q {
                        assert_eq!(fq.mul(fq.mul(a, b), c), fq.mul(a, fq.mul(b, c)));
                        assert_eq!(fq.add(fq.add(a, b), c), fq.add(a, fq.add(b, c)));
                        assert_eq!(fq.mul(a, fq.add(b, c)), fq.add(fq.mul(a, b), fq.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn large_modulus_uses_wide_products() {
        let q = (1u64 << 61) - 1;
        let fq = f(q);
        let a = q - 2;
        assert_eq!(fq.mul(a, a), 4);
        assert_eq!(fq.mul(a, fq.inv(a).unwrap()), 1);
    }

    #[test]
    fn modulus_validation() {
        assert!(Field::new(2).is_err());
        assert!(Field::new(9).is_err());
        assert!(Field::new(1 << 61).is_err());
        assert_eq!(next_prime_above(96), 97);
        assert_eq!(next_prime_above(97), 101);
        assert!(is_prime(2_305_843_009_213_693_951));
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn rank_examples() {
        let f11 = f(11);
        assert_eq!(rank(&f11, &Matrix::identity(4)), 4);
        assert_eq!(rank(&f11, &Matrix::zeros(0, 0)), 0);
        let rep = Matrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6], vec![1, 2, 3]]).unwrap();
        assert!(rank(&f11, &rep) < 3);
        // x^r at x = 1..5, reduced by hand: rows stay independent
        let v = Matrix::from_rows(&[
            vec![1, 1, 1, 1, 1],
            vec![1, 2, 3, 4, 5],
            vec![1, 4, 9, 5, 3],
        ])
        .unwrap();
        assert_eq!(rank(&f11, &v), 3);
    }

    #[test]
    fn solve_examples() {
        let f7 = f(7);
        let a = Matrix::from_rows(&[vec![1, 1], vec![1, 2]]).unwrap();
        let b = Matrix::column(vec![3, 5]);
        let x = solve_square(&f7, &a, &b).unwrap();
        assert_eq!(x, Matrix::column(vec![1, 2]));
        assert_eq!(a.mul(&f7, &x).unwrap(), b);
        let b2 = Matrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        assert_eq!(solve_square(&f7, &Matrix::identity(2), &b2).unwrap(), b2);
        let sing = Matrix::from_rows(&[vec![1, 2], vec![2, 4]]).unwrap();
        assert!(matches!(solve_square(&f7, &sing, &b), Err(Error::Singular(_))));
    }

    #[test]
    fn full_rank_sampling() {
        let f257 = f(257);
        let m = random_full_rank(&f257, 16, &mut seeded_rng(42));
        assert_eq!(rank(&f257, &m), 16);
        let one = random_full_rank(&f(5), 1, &mut seeded_rng(3));
        assert_ne!(one.get(0, 0), 0);
        for s in 0..100u64 {
            let a = random_full_rank(&f257, 4, &mut seeded_rng(2 * s));
            let b = random_full_rank(&f257, 4, &mut seeded_rng(2 * s + 1));
            assert_ne!(a, b);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let f31 = f(31);
        let a = random_full_rank(&f31, 9, &mut seeded_rng(5));
        let inv = inverse(&f31, &a).unwrap();
        assert_eq!(a.mul(&f31, &inv).unwrap(), Matrix::identity(9));
    }

    proptest! {
        #[test]
        fn solve_square_satisfies_system(seed in any::<u64>(), n in 1usize..12, w in 1usize..4) {
            let fq = f(10007);
            let mut rng = seeded_rng(seed);
            let a = random_full_rank(&fq, n, &mut rng);
            let b = Matrix::from_vec(n, w, random_vector(&fq, n * w, &mut rng)).unwrap();
            let x = solve_square(&fq, &a, &b).unwrap();
            prop_assert_eq!(a.mul(&fq, &x).unwrap(), b);
        }

        #[test]
        fn sampled_matrices_are_full_rank(seed in any::<u64>(), n in 1usize..10) {
            let fq = f(5);
            let m = random_full_rank(&fq, n, &mut seeded_rng(seed));
            prop_assert_eq!(rank(&fq, &m), n);
        }
    }
}
