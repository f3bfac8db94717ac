//! Rank correlation.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Kendall's tau-b.
///
/// `(C - D) / sqrt((C + D + Tx) * (C + D + Ty))` where `C`/`D` count
/// concordant/discordant pairs and `Tx`/`Ty` count pairs tied only in `x` /
/// only in `y`. Runs in O(n log n): sort by `(x, y)`, then count the
/// inversions left in `y` with a merge sort.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let n = x.len();
    let total = pair_count(n as u64);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let tied_x = tied_pairs(order.iter().map(|&i| x[i]));
    let tied_xy = tied_pairs_by(order.iter().map(|&i| (x[i], y[i])), |a, b| a.0 == b.0 && a.1 == b.1);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut scratch);
    // `ys` is now sorted, so ties in y are adjacent.
    let tied_y = tied_pairs(ys.iter().copied());

    let untied_x = total - tied_x;
    let untied_y = total - tied_y;
    if untied_x == 0 || untied_y == 0 {
        return Err(Error::DegenerateRanking(format!(
            "{} is constant, so the rank correlation is undefined",
            if untied_x == 0 { "x" } else { "y" }
        )));
    }
    // C + D = total - tied_x - tied_y + tied_xy;  C - D = (C + D) - 2D
    let comparable = (total + tied_xy) - tied_x - tied_y;
    let numerator = comparable as f64 - 2.0 * discordant as f64;
    let tau = numerator / ((untied_x as f64) * (untied_y as f64)).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateRanking("constant input has no ranking".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receive the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp(values[a], values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Stat(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Stat("rank correlation needs at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Stat("NaN in rank correlation input".into()));
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("inputs are NaN-free")
}

fn pair_count(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn tied_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    tied_pairs_by(sorted, |a, b| a == b)
}

fn tied_pairs_by<T: Copy>(sorted: impl Iterator<Item = T>, same: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 0_u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        match prev {
            Some(p) if same(&p, &v) => run += 1,
            _ => {
                total += pair_count(run);
                run = 1;
            }
        }
        prev = Some(v);
    }
    total + pair_count(run)
}

/// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        merge_count(left, sl) + merge_count(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            scratch[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            scratch[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + (n - j)].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    swaps
}
