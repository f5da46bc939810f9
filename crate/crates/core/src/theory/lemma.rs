use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn binomial(n: u64, k: u64) -> BigInt {
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, j| acc * BigInt::from(n - j) / BigInt::from(j + 1))
}

/// Both sides of `(1/n)(1/C(n-1,k) + 1/C(n-1,k+1)) = 1/((n-1) C(n-2,k))`.
pub fn lemma1_identity(n: u64, k: u64) -> Result<(BigRational, BigRational)> {
    if n < 2 || k > n - 2 {
        return Err(Error::Precondition(alloc::format!("identity needs n >= 2 and 0 <= k <= n - 2, got n = {n}, k = {k}")));
    }
    let inv = |d: BigInt| BigRational::new(BigInt::one(), d);
    let lhs = (inv(binomial(n - 1, k)) + inv(binomial(n - 1, k + 1))) / BigRational::from(BigInt::from(n));
    let rhs = inv(BigInt::from(n - 1) * binomial(n - 2, k));
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub max_n: u64,
    pub cases: usize,
    /// `(n, k)` pairs where the two sides differ.
    pub failures: alloc::vec::Vec<(u64, u64)>,
}

/// Checks the identity for every `n` in `2..=max_n` and every valid `k`.
pub fn lemma1_sweep(max_n: u64) -> Result<Lemma1Report> {
    let mut cases = 0;
    let mut failures = alloc::vec::Vec::new();
    for n in 2..=max_n {
        for k in 0..=n - 2 {
            let (l, r) = lemma1_identity(n, k)?;
            cases += 1;
            if l != r {
                failures.push((n, k));
            }
        }
    }
    Ok(Lemma1Report { max_n, cases, failures })
}
