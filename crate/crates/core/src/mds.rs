//! Systematic Vandermonde MDS codes with erasure completion.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::algebra::{inverse, FieldElement, Field, Matrix};
use crate::error::{params, Error, Result};

/// An `(n, k)` code with a `k` x `n` generator whose first `k` columns are the identity.
#[derive(Debug, PartialEq, Eq)]
pub struct MdsCode {
    n: usize,
    k: usize,
    field: Field,
    generator: Matrix,
}

type Cache = Mutex<HashMap<(usize, usize, u64), Arc<MdsCode>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The fixed code for `(n, k)` over `field`, shared process-wide.
pub fn make_code(n: usize, k: usize, field: &Field) -> Result<Arc<MdsCode>> {
    if k == 0 || k > n {
        return params(format!("no ({n}, {k}) code"));
    }
    if field.q() <= n as u64 {
        return params(format!("modulus {} too small for code length {n}", field.q()));
    }
    let key = (n, k, field.q());
    // The lock is held while building so each code is constructed once.
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(code) = map.get(&key) {
        return Ok(code.clone());
    }
    let code = Arc::new(MdsCode::build(n, k, *field)?);
    map.insert(key, code.clone());
    Ok(code)
}

impl MdsCode {
    fn build(n: usize, k: usize, field: Field) -> Result<Self> {
        // V[r][c] = c^r on the points 0..n
        let mut v = Matrix::zeros(k, n);
        for c in 0..n {
            let mut x = 1;
            for r in 0..k {
                v.set(r, c, x);
                x = field.mul(x, c as u64);
            }
        }
        let head = v.col_range(0, k);
        let generator = inverse(&field, &head)?.mul(&field, &v)?;
        Ok(MdsCode { n, k, field, generator })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    /// Coefficients of coordinate `col` as a function of the message.
    pub fn column(&self, col: usize) -> Vec<FieldElement> {
        (0..self.k).map(|r| self.generator.get(r, col)).collect()
    }

    pub fn encode(&self, message: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if message.len() != self.k {
            return params(format!("message of length {} for a ({}, {}) code", message.len(), self.n, self.k));
        }
        let f = &self.field;
        let mut out = vec![0; self.n];
        for (r, &m) in message.iter().enumerate() {
            f.axpy(&mut out, m, self.generator.row(r));
        }
        Ok(out)
    }

    /// `n` x `k` matrix mapping the symbols at `positions` to the whole codeword.
    pub fn completion_matrix(&self, positions: &[usize]) -> Result<Matrix> {
        if positions.len() != self.k {
            return Err(Error::InsufficientInformation(format!(
                "{} positions given, exactly {} needed",
                positions.len(),
                self.k
            )));
        }
        if positions.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.generator.transpose());
        }
        let sub = self.generator.select_cols(positions);
        let sub_inv = inverse(&self.field, &sub)?;
        Ok(sub_inv.mul(&self.field, &self.generator)?.transpose())
    }

    /// Completes a batch of codewords at once: row `i` of `known` holds the
    /// symbols at `positions[i]`, one column per codeword. Rows beyond the
    /// first `k` are checked against the completion.
    pub fn complete_columns(&self, positions: &[usize], known: &Matrix) -> Result<Matrix> {
        if positions.len() != known.rows() {
            return params("positions and known rows differ in count");
        }
        if positions.len() < self.k {
            return Err(Error::InsufficientInformation(format!(
                "{} coordinates known, {} needed",
                positions.len(),
                self.k
            )));
        }
        let mut seen = vec![false; self.n];
        for &p in positions {
            if p >= self.n || seen[p] {
                return params(format!("bad or repeated position {p}"));
            }
            seen[p] = true;
        }
        let basis = &positions[..self.k];
        let lambda = self.completion_matrix(basis)?;
        let head = known.select_rows(&(0..self.k).collect::<Vec<_>>());
        let full = lambda.mul(&self.field, &head)?;
        for (i, &p) in positions.iter().enumerate().skip(self.k) {
            if full.row(p) != known.row(i) {
                return Err(Error::Corruption(format!(
                    "coordinate {p} disagrees with the ({}, {}) codeword",
                    self.n, self.k
                )));
            }
        }
        Ok(full)
    }

    pub fn complete(&self, known: &[(usize, FieldElement)]) -> Result<Vec<FieldElement>> {
        let positions: Vec<usize> = known.iter().map(|&(p, _)| p).collect();
        let values = Matrix::column(known.iter().map(|&(_, v)| self.field.reduce(v)).collect());
        Ok(self.complete_columns(&positions, &values)?.into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_vector, rank, seeded_rng};
    use proptest::prelude::*;

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect()
    }

    #[test]
    fn square_code_is_identity() {
        let f = Field::new(11).unwrap();
        let c = make_code(4, 4, &f).unwrap();
        assert_eq!(c.generator(), &Matrix::identity(4));
        assert_eq!(c.encode(&[1, 2, 3, 4]).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn every_square_submatrix_of_8_4_is_invertible() {
        let f = Field::new(11).unwrap();
        let c = make_code(8, 4, &f).unwrap();
        let sets = subsets(8, 4);
        assert_eq!(sets.len(), 70);
        for s in sets {
            assert_eq!(rank(&f, &c.generator().select_cols(&s)), 4, "{s:?}");
        }
    }

    #[test]
    fn repetition_like_code() {
        let f = Field::new(7).unwrap();
        let c = make_code(5, 1, &f).unwrap();
        let word = c.encode(&[3]).unwrap();
        for p in 0..5 {
            assert_eq!(c.complete(&[(p, word[p])]).unwrap(), word);
        }
    }

    #[test]
    fn systematic_prefix_and_zero() {
        let f = Field::new(11).unwrap();
        let c = make_code(8, 4, &f).unwrap();
        assert_eq!(c.encode(&[0; 4]).unwrap(), vec![0; 8]);
        let msg = random_vector(&f, 4, &mut seeded_rng(9));
        let word = c.encode(&msg).unwrap();
        assert_eq!(&word[..4], &msg[..]);
        let known: Vec<_> = (0..4).map(|p| (p, word[p])).collect();
        assert_eq!(c.complete(&known).unwrap(), word);
    }

    #[test]
    fn exhaustive_erasure_sweep() {
        let f = Field::new(11).unwrap();
        let c = make_code(8, 4, &f).unwrap();
        let word = c.encode(&random_vector(&f, 4, &mut seeded_rng(17))).unwrap();
        for kept in subsets(8, 4) {
            let known: Vec<_> = kept.iter().map(|&p| (p, word[p])).collect();
            assert_eq!(c.complete(&known).unwrap(), word);
        }
    }

    #[test]
    fn mds_property_for_small_lengths() {
        let f = Field::new(11).unwrap();
        for n in 1..=10 {
            for k in 1..=n {
                let c = make_code(n, k, &f).unwrap();
                for s in subsets(n, k) {
                    assert_eq!(rank(&f, &c.generator().select_cols(&s)), k, "({n},{k}) {s:?}");
                }
            }
        }
    }

    #[test]
    fn failure_modes() {
        let f = Field::new(11).unwrap();
        assert!(make_code(3, 4, &f).is_err());
        assert!(make_code(11, 4, &f).is_err());
        let c = make_code(8, 4, &f).unwrap();
        let word = c.encode(&[1, 2, 3, 4]).unwrap();
        let few: Vec<_> = (0..3).map(|p| (p, word[p])).collect();
        assert!(matches!(c.complete(&few), Err(Error::InsufficientInformation(_))));
        let mut over: Vec<_> = (0..6).map(|p| (p, word[p])).collect();
        over[5].1 = f.add(over[5].1, 1);
        assert!(matches!(c.complete(&over), Err(Error::Corruption(_))));
        assert!(c.encode(&[1, 2]).is_err());
    }

    #[test]
    fn construction_is_deterministic_and_shared() {
        let f = Field::new(13).unwrap();
        let a = make_code(9, 3, &f).unwrap();
        let b = MdsCode::build(9, 3, f).unwrap();
        assert_eq!(a.generator(), b.generator());
        assert!(Arc::ptr_eq(&a, &make_code(9, 3, &f).unwrap()));
    }

    #[test]
    fn concurrent_lookups_return_one_instance() {
        let f = Field::new(101).unwrap();
        let codes: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8).map(|_| s.spawn(|| make_code(40, 17, &f).unwrap())).collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(codes.iter().all(|c| Arc::ptr_eq(c, &codes[0])));
    }

    proptest! {
        #[test]
        fn encoding_is_linear(seed in any::<u64>()) {
            let f = Field::new(97).unwrap();
            let c = make_code(12, 5, &f).unwrap();
            let mut rng = seeded_rng(seed);
            let a = random_vector(&f, 5, &mut rng);
            let b = random_vector(&f, 5, &mut rng);
            let sum: Vec<_> = a.iter().zip(&b).map(|(&x, &y)| f.add(x, y)).collect();
            let lhs = c.encode(&sum).unwrap();
            let ea = c.encode(&a).unwrap();
            let eb = c.encode(&b).unwrap();
            let rhs: Vec<_> = ea.iter().zip(&eb).map(|(&x, &y)| f.add(x, y)).collect();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
