use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::Label;
use crate::{Error, Result};

/// Exact two-sided sign test on the discordant pairs of two prediction
/// vectors: pairs where exactly one of `a`, `b` matches `gold`.
///
/// Returns 1 when there are no discordant pairs.
pub fn binomial_test(a: &[Label], b: &[Label], gold: &[Label]) -> Result<f64> {
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(Error::Argument(format!(
            "prediction lengths {} and {} differ from {} gold labels",
            a.len(),
            b.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Argument("binomial test on zero instances".into()));
    }
    let (mut a_only, mut b_only) = (0u64, 0u64);
    for ((x, y), g) in a.iter().zip(b).zip(gold) {
        match (x == g, y == g) {
            (true, false) => a_only += 1,
            (false, true) => b_only += 1,
            _ => {}
        }
    }
    let n = a_only + b_only;
    if n == 0 {
        return Ok(1.0);
    }
    Ok((2.0 * lower_tail_half(n, a_only.min(b_only))?).min(1.0))
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`.
fn lower_tail_half(n: u64, k: u64) -> Result<f64> {
    // direct summation is exact enough while 2^-n stays a normal float
    if n <= 1000 {
        let mut term = 0.5f64.powi(n as i32);
        let mut total = term;
        for i in 0..k {
            term *= (n - i) as f64 / (i + 1) as f64;
            total += term;
        }
        return Ok(total);
    }
    let dist = Binomial::new(0.5, n).map_err(|e| Error::Argument(e.to_string()))?;
    Ok(dist.cdf(k))
}

/// `**` below 0.001, `*` below 0.01, empty otherwise.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.01 {
        "*"
    } else {
        ""
    }
}
