use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression basis description: all monomials in the ranked coordinates up
/// to `degree`, optionally augmented with the obstacle (or terminal) value as
/// one extra column. The extra column lets a low-degree basis capture payoff
/// kinks exactly where they matter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub degree: usize,
    #[serde(default)]
    pub obstacle_feature: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            degree: 2,
            obstacle_feature: false,
        }
    }
}

impl BasisSpec {
    pub fn new(degree: usize, obstacle_feature: bool) -> Result<Self> {
        if degree == 0 {
            return Err(Error::validation(
                "basis degree must be at least 1 (the intercept is always present)",
            ));
        }
        if degree > 8 {
            return Err(Error::validation(
                "basis degree above 8 is numerically pointless with standardized monomials",
            ));
        }
        Ok(BasisSpec {
            degree,
            obstacle_feature,
        })
    }

    /// Exponent tuples of every non-constant monomial with total degree at
    /// most `degree`, in a fixed deterministic order.
    pub fn exponents(&self, n: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill(&mut out, &mut cur, 0, self.degree as u32);
        out.retain(|e| e.iter().any(|&a| a > 0));
        out
    }

    /// Number of raw columns excluding the intercept.
    pub fn columns(&self, n: usize) -> usize {
        self.exponents(n).len() + usize::from(self.obstacle_feature)
    }

    /// Evaluates the monomial block for one ranked state.
    pub fn eval_monomials(exponents: &[Vec<u32>], ranked: &[f64], out: &mut [f64]) {
        debug_assert_eq!(exponents.len(), out.len());
        for (col, exps) in exponents.iter().enumerate() {
            let mut v = 1.0;
            for (i, &a) in exps.iter().enumerate() {
                for _ in 0..a {
                    v *= ranked[i];
                }
            }
            out[col] = v;
        }
    }
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, budget: u32) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for a in 0..=budget {
        cur[pos] = a;
        fill(out, cur, pos + 1, budget - a);
    }
    cur[pos] = 0;
}
