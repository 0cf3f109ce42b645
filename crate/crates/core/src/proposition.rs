//! Expected Dice overlap between a fixed n-subset of `[N]` and a uniformly
//! drawn one, which equals `n / N`.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::SeededStream;

/// Largest `N` accepted by the exact path.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Largest `N` for which the subset-enumeration cross-check runs.
pub const ENUMERATION_LIMIT: usize = 12;

/// `2|A ∩ B| / (|A| + |B|)`
pub fn dice(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::invalid("dice", "both sets are empty"));
    }
    let inter = a.intersection(b).count();
    Ok(2.0 * inter as f64 / (a.len() + b.len()) as f64)
}

fn check(n: usize, n_ref: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    if n > n_ref {
        return Err(Error::invalid("n", format!("n = {n} exceeds N = {n_ref}")));
    }
    Ok(())
}

pub fn expected_dice_closed_form(n: usize, n_ref: usize) -> Result<f64> {
    check(n, n_ref)?;
    Ok(n as f64 / n_ref as f64)
}

/// Reduced fraction with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact mean over all `C(N, n)` subsets, grouped by overlap size `k`:
/// `sum_k C(n,k) C(N-n,n-k) (k/n) / C(N,n)`.
pub fn expected_dice_exhaustive(n: usize, n_ref: usize) -> Result<Ratio> {
    check(n, n_ref)?;
    if n_ref > EXHAUSTIVE_LIMIT {
        return Err(Error::Overflow {
            n_ref,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut num: u128 = 0;
    for k in 0..=n {
        num += k as u128 * binom(n, k) * binom(n_ref - n, n - k);
    }
    Ok(Ratio::new(num, n as u128 * binom(n_ref, n)))
}

/// Brute force over every n-bit mask below `2^N`, with `I* = {0..n}`.
pub fn expected_dice_enumerated(n: usize, n_ref: usize) -> Result<Ratio> {
    check(n, n_ref)?;
    if n_ref > ENUMERATION_LIMIT {
        return Err(Error::Overflow {
            n_ref,
            limit: ENUMERATION_LIMIT,
        });
    }
    let target: u32 = (1u32 << n) - 1;
    let (mut overlap, mut subsets) = (0u128, 0u128);
    for mask in 0u32..(1u32 << n_ref) {
        if mask.count_ones() as usize == n {
            overlap += (mask & target).count_ones() as u128;
            subsets += 1;
        }
    }
    // each subset contributes 2k / 2n
    Ok(Ratio::new(overlap, subsets * n as u128))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_ref: usize,
    pub closed_form: f64,
    pub exhaustive_mean: Option<f64>,
    pub mc_mean: f64,
    pub mc_trials: usize,
    pub mc_stderr: f64,
}

impl DiceReport {
    pub fn within_band(&self, sigmas: f64) -> bool {
        (self.mc_mean - self.closed_form).abs() <= sigmas * self.mc_stderr
    }
}

/// Trial `t` draws its subset from `stream.split(t)`.
pub fn expected_dice_monte_carlo(n: usize, n_ref: usize, trials: usize, stream: SeededStream) -> Result<DiceReport> {
    check(n, n_ref)?;
    if trials == 0 {
        return Err(Error::invalid("trials", "must be >= 1"));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for t in 0..trials {
        let mut rng = stream.split(t as u64).rng();
        let hits = sample(&mut rng, n_ref, n).iter().filter(|i| *i < n).count();
        let s = hits as f64 / n as f64;
        sum += s;
        sum_sq += s * s;
    }
    let m = trials as f64;
    let mean = sum / m;
    let var = if trials > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    let exhaustive_mean = if n_ref <= EXHAUSTIVE_LIMIT {
        Some(expected_dice_exhaustive(n, n_ref)?.to_f64())
    } else {
        None
    };
    Ok(DiceReport {
        n,
        n_ref,
        closed_form: expected_dice_closed_form(n, n_ref)?,
        exhaustive_mean,
        mc_mean: mean,
        mc_trials: trials,
        mc_stderr: (var / m).sqrt(),
    })
}

pub fn write_dice_csv<W: Write>(mut out: W, rows: &[DiceReport]) -> std::io::Result<()> {
    writeln!(out, "n,N,closed_form,exhaustive,mc_mean,mc_stderr,trials")?;
    for r in rows {
        let ex = r.exhaustive_mean.map(|v| format!("{v:.17e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.17e},{},{:.17e},{:.17e},{}",
            r.n, r.n_ref, r.closed_form, ex, r.mc_mean, r.mc_stderr, r.mc_trials
        )?;
    }
    Ok(())
}
