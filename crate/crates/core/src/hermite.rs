//! Probabilists' Hermite polynomials and the 1D Gaussian-Hermite basis.
//!
//! Everything here uses the He convention (`H_2 = x^2 - 1`), evaluated with
//! the three-term recurrence `H_{n+1} = x H_n - n H_{n-1}`.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported Hermite index.
pub const MAX_RANK: usize = 9;
/// Number of basis functions `H_0..=H_9`.
pub const BASIS_LEN: usize = MAX_RANK + 1;

/// Integration half-width and interval count used by [`orthogonality_integral`].
pub const QUADRATURE_HALF_WIDTH: f64 = 12.0;
pub const QUADRATURE_INTERVALS: usize = 4096;

/// A Hermite rank in `0..=9`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct HermiteRank(u8);

impl HermiteRank {
    pub const ZERO: HermiteRank = HermiteRank(0);
    pub const MAX: HermiteRank = HermiteRank(MAX_RANK as u8);

    pub fn new(value: usize) -> Result<Self> {
        if value > MAX_RANK {
            return Err(Error::Argument(format!(
                "hermite rank {value} exceeds maximum {MAX_RANK}"
            )));
        }
        Ok(HermiteRank(value as u8))
    }

    /// Clamps to the supported range instead of failing.
    pub fn saturating(value: usize) -> Self {
        HermiteRank(value.min(MAX_RANK) as u8)
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for HermiteRank {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        HermiteRank::new(value as usize)
    }
}

impl From<HermiteRank> for u8 {
    fn from(r: HermiteRank) -> u8 {
        r.0
    }
}

impl fmt::Display for HermiteRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Values of `H_0..=H_9` (or their derivatives) at a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub values: [f64; BASIS_LEN],
}

impl Index<usize> for BasisValues {
    type Output = f64;
    fn index(&self, n: usize) -> &f64 {
        &self.values[n]
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "hermite argument must be finite, got {x}"
        )))
    }
}

/// Fills `out[0..=rank]` with `H_n(x)`; entries above `rank` are left untouched.
#[inline]
pub fn fill_hermite(x: f64, rank: usize, out: &mut [f64; BASIS_LEN]) {
    out[0] = 1.0;
    if rank == 0 {
        return;
    }
    out[1] = x;
    for n in 1..rank {
        out[n + 1] = x * out[n] - n as f64 * out[n - 1];
    }
}

/// `H_0(x)..=H_9(x)` by recurrence.
pub fn hermite_eval_all(x: f64) -> Result<BasisValues> {
    check_finite(x)?;
    let mut values = [0.0; BASIS_LEN];
    fill_hermite(x, MAX_RANK, &mut values);
    Ok(BasisValues { values })
}

/// `H'_0(x)..=H'_9(x)` using `H'_n = n H_{n-1}`.
pub fn hermite_derivative_all(x: f64) -> Result<BasisValues> {
    let h = hermite_eval_all(x)?;
    let mut values = [0.0; BASIS_LEN];
    for n in 1..BASIS_LEN {
        values[n] = n as f64 * h.values[n - 1];
    }
    Ok(BasisValues { values })
}

/// `GH_n(x) = exp(-x^2/2) H_n(x)`.
pub fn gh_basis_eval(n: HermiteRank, x: f64) -> Result<f64> {
    let h = hermite_eval_all(x)?;
    Ok((-0.5 * x * x).exp() * h.values[n.get()])
}

/// `∫ H_m H_n exp(-x^2/2) dx` by composite Simpson on `[-12, 12]`.
///
/// The exact value is `n! sqrt(2π)` on the diagonal and zero elsewhere.
pub fn orthogonality_integral(m: HermiteRank, n: HermiteRank) -> f64 {
    let a = -QUADRATURE_HALF_WIDTH;
    let h = 2.0 * QUADRATURE_HALF_WIDTH / QUADRATURE_INTERVALS as f64;
    let mut basis = [0.0; BASIS_LEN];
    let mut sum = 0.0;
    for i in 0..=QUADRATURE_INTERVALS {
        let x = a + i as f64 * h;
        fill_hermite(x, MAX_RANK, &mut basis);
        let f = basis[m.get()] * basis[n.get()] * (-0.5 * x * x).exp();
        let w = if i == 0 || i == QUADRATURE_INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * f;
    }
    sum * h / 3.0
}

/// Full 10×10 table of [`orthogonality_integral`], row `m`, column `n`.
pub fn orthogonality_matrix() -> [[f64; BASIS_LEN]; BASIS_LEN] {
    let mut out = [[0.0; BASIS_LEN]; BASIS_LEN];
    for (m, row) in out.iter_mut().enumerate() {
        for (n, cell) in row.iter_mut().enumerate() {
            *cell = orthogonality_integral(HermiteRank(m as u8), HermiteRank(n as u8));
        }
    }
    out
}

/// Largest off-diagonal magnitude relative to the diagonal at `max(m, n)`.
pub fn max_relative_off_diagonal(matrix: &[[f64; BASIS_LEN]; BASIS_LEN]) -> f64 {
    let mut worst: f64 = 0.0;
    for m in 0..BASIS_LEN {
        for n in 0..BASIS_LEN {
            if m != n {
                let k = m.max(n);
                worst = worst.max(matrix[m][n].abs() / matrix[k][k].abs());
            }
        }
    }
    worst
}
