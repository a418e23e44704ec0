use std::collections::HashMap;

use crate::error::{Error, Result};

fn choose2(n: u64) -> i128 {
    let n = n as i128;
    n * (n - 1).max(0) / 2
}

/// Hubert-Arabie adjusted Rand index.
///
/// Pair counts are combined in integer arithmetic, so the result is the
/// correctly rounded value of the exact rational index. When the expected and
/// maximal indices coincide (both partitions trivial) the result is 1 for
/// identical partitions and 0 otherwise.
pub fn adjusted_rand_index(p1: &[usize], p2: &[usize]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch(format!(
            "partitions of length {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    let n = p1.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in p1.iter().zip(p2) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: i128 = table.values().map(|&v| choose2(v)).sum();
    let sa: i128 = rows.values().map(|&v| choose2(v)).sum();
    let sb: i128 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n);
    // (index − sa·sb/total) / ((sa+sb)/2 − sa·sb/total), scaled by 2·total
    let num = 2 * (index * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        let same = table.len() == rows.len() && table.len() == cols.len();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok(ratio(num, den))
}

/// `num / den` rounded once, exact whenever both fit in 53 bits.
fn ratio(num: i128, den: i128) -> f64 {
    const EXACT: i128 = 1 << 53;
    if num.abs() < EXACT && den.abs() < EXACT {
        num as f64 / den as f64
    } else {
        // large N: reduce first so the quotient stays accurate
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        (num / g) as f64 / (den / g) as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
