//! Bar ordering by minimum-cost open Hamiltonian path under the ℓ1 metric.
//!
//! Objectives, in lexicographic priority:
//! 1. minimum total ℓ1 distance between successive bars,
//! 2. maximum ℓ1 distance between the first and the last bar,
//! 3. lexicographically smallest index sequence.
//!
//! Values within [`Real::tie_eps`] of each other are treated as tied.

use crate::freqtable::{FreqTable, ProportionMatrix, TableError};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest bar count handed to the exact solver by [`seriate`].
pub const DEFAULT_EXACT_LIMIT: usize = 10;

/// Hard cap for the exact solver: the state table is `n * 2^n * n`.
const EXACT_HARD_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriationError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("{n} bars exceed the exact solver limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("nothing to order")]
    Empty,
    #[error(transparent)]
    Table(#[from] TableError),
}

impl SeriationError {
    pub fn code(&self) -> &'static str {
        match self {
            SeriationError::LengthMismatch(..) => "LengthMismatch",
            SeriationError::NotAPermutation(_) => "NotAPermutation",
            SeriationError::TooLarge { .. } => "TooLarge",
            SeriationError::Empty => "Empty",
            SeriationError::Table(e) => e.code(),
        }
    }
}

/// A permutation of one variable's categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering<T> {
    pub variable: String,
    /// Original category indices in display order.
    pub perm: Vec<usize>,
    pub cost: T,
    pub endpoint_separation: T,
    pub exact: bool,
}

impl<T: Real> Ordering<T> {
    pub fn identity(variable: impl Into<String>, n: usize) -> Self {
        Ordering {
            variable: variable.into(),
            perm: (0..n).collect(),
            cost: T::zero(),
            endpoint_separation: T::zero(),
            exact: false,
        }
    }

    /// Apply to a slice indexed by original category.
    pub fn apply<'a, U>(&self, items: &'a [U]) -> Vec<&'a U> {
        self.perm.iter().map(|&i| &items[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriationConfig {
    pub exact_limit: usize,
}

impl Default for SeriationConfig {
    fn default() -> Self {
        SeriationConfig {
            exact_limit: DEFAULT_EXACT_LIMIT,
        }
    }
}

pub fn l1<T: Real>(u: &[T], v: &[T]) -> Result<T, SeriationError> {
    if u.len() != v.len() {
        return Err(SeriationError::LengthMismatch(u.len(), v.len()));
    }
    Ok(l1_unchecked(u, v))
}

fn l1_unchecked<T: Real>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| (a - b).abs()).sum()
}

fn check_perm(perm: &[usize], n: usize) -> Result<(), SeriationError> {
    if perm.len() != n {
        return Err(SeriationError::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(SeriationError::NotAPermutation(n));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn path_cost<T: Real>(m: &ProportionMatrix<T>, perm: &[usize]) -> Result<T, SeriationError> {
    check_perm(perm, m.n_bars())?;
    Ok(perm
        .windows(2)
        .map(|w| l1_unchecked(&m.rows[w[0]], &m.rows[w[1]]))
        .sum())
}

struct Distances<T> {
    n: usize,
    d: Vec<T>,
}

impl<T: Real> Distances<T> {
    fn new(m: &ProportionMatrix<T>) -> Self {
        let n = m.n_bars();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let x = l1_unchecked(&m.rows[i], &m.rows[j]);
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        Distances { n, d }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }

    fn path(&self, perm: &[usize]) -> T {
        perm.windows(2).map(|w| self.get(w[0], w[1])).sum()
    }
}

fn finish<T: Real>(m: &ProportionMatrix<T>, perm: Vec<usize>, exact: bool) -> Ordering<T> {
    let cost = path_cost(m, &perm).expect("solver returns a permutation");
    let endpoint_separation = match (perm.first(), perm.last()) {
        (Some(&a), Some(&b)) => l1_unchecked(&m.rows[a], &m.rows[b]),
        _ => T::zero(),
    };
    Ordering {
        variable: m.bar_variable.clone(),
        perm,
        cost,
        endpoint_separation,
        exact,
    }
}

fn check_rows<T: Real>(m: &ProportionMatrix<T>) -> Result<(), SeriationError> {
    if m.n_bars() == 0 {
        return Err(SeriationError::Empty);
    }
    let width = m.rows[0].len();
    if let Some(bad) = m.rows.iter().find(|r| r.len() != width) {
        return Err(SeriationError::LengthMismatch(width, bad.len()));
    }
    Ok(())
}

/// Exact solver for up to [`DEFAULT_EXACT_LIMIT`] bars.
pub fn seriate_exact<T: Real>(m: &ProportionMatrix<T>) -> Result<Ordering<T>, SeriationError> {
    seriate_exact_with_limit(m, DEFAULT_EXACT_LIMIT)
}

/// Held-Karp over subsets, rooted at every possible end bar.
///
/// `table[root][set][j]` is the cheapest path that starts at `root`, visits
/// exactly `set` and stops at `j`. Read backwards it is the cheapest way to
/// finish at `root` from `j`, which is what the lexicographic reconstruction
/// needs.
pub fn seriate_exact_with_limit<T: Real>(
    m: &ProportionMatrix<T>,
    limit: usize,
) -> Result<Ordering<T>, SeriationError> {
    check_rows(m)?;
    let n = m.n_bars();
    let limit = limit.min(EXACT_HARD_CAP);
    if n > limit {
        return Err(SeriationError::TooLarge { n, limit });
    }
    if n == 1 {
        return Ok(finish(m, vec![0], true));
    }

    let dist = Distances::new(m);
    let full = (1usize << n) - 1;
    let tol = T::tie_eps();
    let inf = T::infinity();
    let at = |set: usize, j: usize| set * n + j;

    let mut tables: Vec<Vec<T>> = Vec::with_capacity(n);
    for root in 0..n {
        let mut dp = vec![inf; (full + 1) * n];
        dp[at(1 << root, root)] = T::zero();
        for set in 1..=full {
            if set & (1 << root) == 0 {
                continue;
            }
            for j in 0..n {
                let here = dp[at(set, j)];
                if here == inf {
                    continue;
                }
                for k in 0..n {
                    if set & (1 << k) != 0 {
                        continue;
                    }
                    let next = at(set | (1 << k), k);
                    let cand = here + dist.get(j, k);
                    if cand < dp[next] {
                        dp[next] = cand;
                    }
                }
            }
        }
        tables.push(dp);
    }

    // Best cost per (start, end) pair.
    let pair_cost = |s: usize, e: usize| tables[e][at(full, s)];
    let mut best = inf;
    for s in 0..n {
        for e in (0..n).filter(|&e| e != s) {
            best = best.min(pair_cost(s, e));
        }
    }
    let bound = best + tol;
    let tied: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).filter(move |&e| e != s).map(move |e| (s, e)))
        .filter(|&(s, e)| pair_cost(s, e) <= bound)
        .collect();
    let max_sep = tied
        .iter()
        .map(|&(s, e)| dist.get(s, e))
        .fold(T::neg_infinity(), T::max);
    let finalists = tied
        .into_iter()
        .filter(|&(s, e)| dist.get(s, e) >= max_sep - tol);

    let mut winner: Option<Vec<usize>> = None;
    for (s, e) in finalists {
        let suffix = &tables[e];
        let mut path = vec![s];
        let mut spent = T::zero();
        let mut remaining = full & !(1 << s);
        let mut cur = s;
        while remaining != 0 {
            let next = if remaining == 1 << e {
                e
            } else {
                (0..n)
                    .filter(|&k| k != e && remaining & (1 << k) != 0)
                    .find(|&k| spent + dist.get(cur, k) + suffix[at(remaining, k)] <= bound)
                    .expect("an optimal continuation exists")
            };
            spent += dist.get(cur, next);
            remaining &= !(1 << next);
            path.push(next);
            cur = next;
        }
        if winner.as_ref().is_none_or(|w| path < *w) {
            winner = Some(path);
        }
    }
    Ok(finish(m, winner.expect("at least one optimal pair"), true))
}

/// Best-of-all-starts nearest neighbor, each start polished by 2-opt.
pub fn seriate_heuristic<T: Real>(m: &ProportionMatrix<T>) -> Result<Ordering<T>, SeriationError> {
    check_rows(m)?;
    let n = m.n_bars();
    let dist = Distances::new(m);
    let tol = T::tie_eps();

    let mut optima: Vec<(T, T, Vec<usize>)> = Vec::with_capacity(n);
    for start in 0..n {
        let mut path = nearest_neighbor_path(&dist, start);
        two_opt(&dist, &mut path, tol);
        let mut rev = path.clone();
        rev.reverse();
        let path = path.min(rev);
        let cost = dist.path(&path);
        let sep = dist.get(path[0], path[n - 1]);
        optima.push((cost, sep, path));
    }

    let best = optima.iter().map(|o| o.0).fold(T::infinity(), T::min);
    optima.retain(|o| o.0 <= best + tol);
    let max_sep = optima.iter().map(|o| o.1).fold(T::neg_infinity(), T::max);
    let winner = optima
        .into_iter()
        .filter(|o| o.1 >= max_sep - tol)
        .map(|o| o.2)
        .min()
        .expect("at least one start");
    Ok(finish(m, winner, false))
}

fn nearest_neighbor_path<T: Real>(dist: &Distances<T>, start: usize) -> Vec<usize> {
    let n = dist.n;
    let mut visited = vec![false; n];
    let mut path = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    path.push(cur);
    for _ in 1..n {
        let mut next = usize::MAX;
        for k in (0..n).filter(|&k| !visited[k]) {
            if next == usize::MAX || dist.get(cur, k) < dist.get(cur, next) {
                next = k;
            }
        }
        visited[next] = true;
        path.push(next);
        cur = next;
    }
    path
}

/// Segment reversal on an open path. Reversing a prefix or suffix changes
/// a single edge, so those moves are included.
fn two_opt<T: Real>(dist: &Distances<T>, path: &mut [usize], tol: T) {
    let n = path.len();
    if n < 3 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in (i + 1)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let mut delta = T::zero();
                if i > 0 {
                    delta += dist.get(path[i - 1], path[j]) - dist.get(path[i - 1], path[i]);
                }
                if j < n - 1 {
                    delta += dist.get(path[i], path[j + 1]) - dist.get(path[j], path[j + 1]);
                }
                if delta < -tol {
                    path[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}

/// Exact solver when the bar count allows it, heuristic otherwise.
pub fn seriate<T: Real>(m: &ProportionMatrix<T>, config: SeriationConfig) -> Result<Ordering<T>, SeriationError> {
    if m.n_bars() <= config.exact_limit.min(EXACT_HARD_CAP) {
        seriate_exact_with_limit(m, config.exact_limit)
    } else {
        seriate_heuristic(m)
    }
}

/// Decreasing count, ties by original index.
pub fn order_by_count<T: Real>(t: &FreqTable) -> Result<Ordering<T>, SeriationError> {
    if t.arity() != 1 {
        return Err(TableError::WrongArity {
            expected: 1,
            found: t.arity(),
        }
        .into());
    }
    let counts = t.counts();
    let mut perm: Vec<usize> = (0..counts.len()).collect();
    perm.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(Ordering {
        variable: t.variables()[0].name.clone(),
        perm,
        cost: T::zero(),
        endpoint_separation: T::zero(),
        exact: false,
    })
}
