//! Statistics drawn by the plots: Pearson residuals and weighted quantiles.

use super::PlotError;
use crate::freqtable::FreqTable;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Standardized residuals `(O - E) / sqrt(E)` of a two-way table, rows along
/// the table's first axis. Cells with `E = 0` get 0.
pub fn pearson_residuals<T: Real>(t: &FreqTable) -> Result<Vec<Vec<T>>, PlotError> {
    if t.arity() != 2 {
        return Err(PlotError::WrongArity {
            expected: 2,
            found: t.arity(),
        });
    }
    let name = t.variables()[0].name.clone();
    let counts = t.oriented_counts(&name)?;
    residuals_from_counts(&counts)
}

pub(crate) fn expected_counts<T: Real>(counts: &[Vec<u64>]) -> Result<Vec<Vec<T>>, PlotError> {
    let m = counts.first().map_or(0, Vec::len);
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..m).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let total: u64 = rows.iter().sum();
    if total == 0 {
        return Err(PlotError::EmptyTable);
    }
    let total = T::from_count(total);
    Ok(rows
        .iter()
        .map(|&r| {
            cols.iter()
                .map(|&c| T::from_count(r) * T::from_count(c) / total)
                .collect()
        })
        .collect())
}

pub(crate) fn residuals_from_counts<T: Real>(counts: &[Vec<u64>]) -> Result<Vec<Vec<T>>, PlotError> {
    let expected = expected_counts::<T>(counts)?;
    Ok(counts
        .iter()
        .zip(&expected)
        .map(|(obs, exp)| {
            obs.iter()
                .zip(exp)
                .map(|(&o, &e)| {
                    if e > T::zero() {
                        (T::from_count(o) - e) / e.sqrt()
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect())
}

/// Quantiles of the discrete distribution putting mass `w_i / sum(w)` on
/// `scores[i]`. The q-th quantile is the smallest score whose cumulative
/// mass reaches q; zero-weight scores are never returned.
pub fn weighted_quantiles<T: Real>(scores: &[T], weights: &[u64], qs: &[T]) -> Result<Vec<T>, PlotError> {
    if scores.len() != weights.len() {
        return Err(PlotError::LengthMismatch(scores.len(), weights.len()));
    }
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return Err(PlotError::ZeroMass);
    }
    if let Some(&bad) = qs.iter().find(|q| !(**q >= T::zero() && **q <= T::one())) {
        return Err(PlotError::InvalidQuantile(bad.as_f64()));
    }
    let mut support: Vec<(T, u64)> = scores
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|&(_, w)| w > 0)
        .collect();
    support.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let total_f = T::from_count(total);
    Ok(qs
        .iter()
        .map(|&q| {
            let target = q * total_f;
            let mut cum = 0u64;
            for &(s, w) in &support {
                cum += w;
                if T::from_count(cum) >= target {
                    return s;
                }
            }
            support.last().expect("positive mass").0
        })
        .collect())
}

/// Five-number summary of frequency-weighted scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    pub n: u64,
}

impl<T: Real> BoxStats<T> {
    pub fn from_weighted(scores: &[T], weights: &[u64]) -> Result<Self, PlotError> {
        let qs = [0.0, 0.25, 0.5, 0.75, 1.0].map(T::lit);
        let v = weighted_quantiles(scores, weights, &qs)?;
        Ok(BoxStats {
            min: v[0],
            q1: v[1],
            median: v[2],
            q3: v[3],
            max: v[4],
            n: weights.iter().sum(),
        })
    }
}

pub fn chi_square<T: Real>(counts: &[Vec<u64>]) -> Result<T, PlotError> {
    let r = residuals_from_counts::<T>(counts)?;
    Ok(r.iter().flatten().map(|&x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Schema, Variable};

    fn two_by_two(c: [u64; 4]) -> FreqTable {
        let schema = Schema::new(vec![
            Variable::new("A", vec!["a1".into(), "a2".into()]),
            Variable::new("B", vec!["b1".into(), "b2".into()]),
        ])
        .unwrap();
        FreqTable::from_counts(schema, c.to_vec()).unwrap()
    }

    #[test]
    fn independence_gives_zero_residuals() {
        let r: Vec<Vec<f64>> = pearson_residuals(&two_by_two([1, 1, 1, 1])).unwrap();
        assert!(r.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn diagonal_table_residuals() {
        let r: Vec<Vec<f64>> = pearson_residuals(&two_by_two([10, 0, 0, 10])).unwrap();
        let s5 = 5f64.sqrt();
        let expected = [[s5, -s5], [-s5, s5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[i][j] - expected[i][j]).abs() < 1e-12);
            }
        }
        assert!((s5 - 2.2360679).abs() < 1e-7);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(matches!(
            pearson_residuals::<f64>(&two_by_two([0; 4])),
            Err(PlotError::EmptyTable)
        ));
    }

    #[test]
    fn zero_expected_cells_give_zero() {
        // Second column is empty, so E = 0 there.
        let r: Vec<Vec<f64>> = residuals_from_counts(&[vec![3, 0], vec![5, 0]]).unwrap();
        assert_eq!(r[0][1], 0.0);
        assert_eq!(r[1][1], 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(weighted_quantiles(&[1.0, 2.0, 3.0], &[1, 1, 1], &[0.5]).unwrap(), vec![2.0]);
        // Expanded multiset [1,1,1,4]: lower-cumulative median is 1.
        assert_eq!(weighted_quantiles(&[1.0, 4.0], &[3, 1], &[0.5]).unwrap(), vec![1.0]);
        let ends = weighted_quantiles(&[5.0, 1.0, 3.0, 9.0], &[2, 0, 1, 0], &[0.0, 1.0]).unwrap();
        assert_eq!(ends, vec![3.0, 5.0]);
        assert!(matches!(weighted_quantiles(&[1.0], &[0], &[0.5]), Err(PlotError::ZeroMass)));
        assert!(matches!(
            weighted_quantiles(&[1.0], &[1, 2], &[0.5]),
            Err(PlotError::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            weighted_quantiles(&[1.0], &[1], &[1.5]),
            Err(PlotError::InvalidQuantile(_))
        ));
    }

    #[test]
    fn quantiles_match_expanded_multiset() {
        let scores = [1.0, 2.0, 3.0, 4.0];
        let weights = [3u64, 0, 5, 2];
        let mut expanded: Vec<f64> = Vec::new();
        for (s, &w) in scores.iter().zip(&weights) {
            expanded.extend(std::iter::repeat_n(*s, w as usize));
        }
        for q in [0.1, 0.25, 0.3, 0.5, 0.8, 0.9] {
            let k = ((q * expanded.len() as f64).ceil() as usize).max(1);
            let got = weighted_quantiles(&scores, &weights, &[q]).unwrap()[0];
            assert_eq!(got, expanded[k - 1], "q = {q}");
        }
    }

    #[test]
    fn box_stats_are_ordered() {
        let b = BoxStats::from_weighted(&[1.0f64, 2.0, 3.0, 4.0], &[4, 3, 2, 1]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 1.0, 2.0, 3.0, 4.0));
        assert_eq!(b.n, 10);
    }

    #[test]
    fn residuals_in_f32() {
        let r: Vec<Vec<f32>> = pearson_residuals(&two_by_two([10, 0, 0, 10])).unwrap();
        assert!((r[0][0] - 5f32.sqrt()).abs() < 1e-5);
    }
}
