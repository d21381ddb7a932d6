use nalgebra::DMatrix;
use rayon::prelude::*;

use super::canonical::{log_variance_ratio, ShapleyAllocation, ValuationQuery};
use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, quad_form};

/// Largest dataset accepted by exact enumeration (2ⁿ coalitions).
pub const MAX_SHAPLEY_RECORDS: usize = 20;

/// Exact Data Shapley values with the canonical value as the coalition
/// function, enumerating every subset of records.
///
/// Coalition values are evaluated in parallel into a table indexed by the
/// subset bitmask; the weighted sums are then accumulated serially in
/// bitmask order, so the result does not depend on the thread count.
pub fn data_shapley(query: &ValuationQuery, data: &Dataset) -> Result<ShapleyAllocation> {
    let n = data.len();
    if n > MAX_SHAPLEY_RECORDS {
        return Err(Error::TooManyRecords {
            n,
            max: MAX_SHAPLEY_RECORDS,
        });
    }
    if data.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features",
            expected: query.dim(),
            found: data.dim(),
        });
    }
    let vq = query.prior_variance()?;
    let prior_precision = query.prior().precision()?;
    let z = data.normalized_features();
    let x = query.context();

    let coalitions = 1usize << n;
    let values: Vec<f64> = (0..coalitions)
        .into_par_iter()
        .map(|mask| -> Result<f64> {
            if mask == 0 {
                return Ok(0.0);
            }
            let mut precision: DMatrix<f64> = prior_precision.clone();
            for i in (0..n).filter(|i| mask >> i & 1 == 1) {
                let row = z.row(i).transpose();
                precision += &row * row.transpose();
            }
            let cov = linalg::sym_inverse(&precision, "coalition posterior precision")?;
            log_variance_ratio(vq, quad_form(&cov, x))
        })
        .collect::<Result<_>>()?;

    // weight(s) = s!(n-s-1)!/n! = 1 / (n · C(n-1, s))
    let weights: Vec<f64> = (0..n)
        .map(|s| 1.0 / (n as f64 * binomial(n - 1, s)))
        .collect();
    let mut phi = vec![0.0; n];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in (0..coalitions).filter(|m| m & bit == 0) {
            let s = mask.count_ones() as usize;
            acc += weights[s] * (values[mask | bit] - values[mask]);
        }
        *slot = acc;
    }
    Ok(ShapleyAllocation {
        per_datum_value: phi,
        coalition_value_fn_evals: coalitions,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::canonical_value;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn scalar(k: usize) -> Dataset {
        Dataset::from_rows(&vec![vec![1.0]; k], None, vec![1.0; k]).unwrap()
    }

    /// Permutation-average oracle, independent of the subset weights above.
    fn shapley_by_permutations(query: &ValuationQuery, data: &Dataset) -> Vec<f64> {
        fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permutations(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let n = data.len();
        let mut perms = Vec::new();
        permutations(&mut (0..n).collect(), 0, &mut perms);
        let mut phi = vec![0.0; n];
        for p in &perms {
            for (pos, &i) in p.iter().enumerate() {
                let before = canonical_value(query, &data.subset(&p[..pos])).unwrap();
                let after = canonical_value(query, &data.subset(&p[..=pos])).unwrap();
                phi[i] += after - before;
            }
        }
        phi.iter().map(|v| v / perms.len() as f64).collect()
    }

    #[test]
    fn replicated_scalar_pair() {
        let q = ValuationQuery::standard(DVector::from_vec(vec![1.0])).unwrap();
        let a = data_shapley(&q, &scalar(2)).unwrap();
        assert!((a.per_datum_value[1] - 3f64.ln() / 4.0).abs() < 1e-12);
        assert_eq!(a.coalition_value_fn_evals, 4);
    }

    #[test]
    fn single_record_gets_its_full_value() {
        let q = ValuationQuery::standard(DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let ds = Dataset::from_rows(&[vec![2.0, 0.5]], None, vec![0.7]).unwrap();
        let a = data_shapley(&q, &ds).unwrap();
        assert!((a.per_datum_value[0] - canonical_value(&q, &ds).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset() {
        let q = ValuationQuery::standard(DVector::from_vec(vec![1.0])).unwrap();
        let a = data_shapley(&q, &Dataset::empty(1)).unwrap();
        assert!(a.per_datum_value.is_empty());
        assert_eq!(a.coalition_value_fn_evals, 1);
    }

    #[test]
    fn too_many_records() {
        let q = ValuationQuery::standard(DVector::from_vec(vec![1.0])).unwrap();
        assert!(matches!(
            data_shapley(&q, &scalar(21)),
            Err(Error::TooManyRecords { n: 21, .. })
        ));
    }

    #[test]
    fn shapley_overstates_last_of_replicated_records() {
        let q = ValuationQuery::standard(DVector::from_vec(vec![1.0])).unwrap();
        for n in 2..=8 {
            let a = data_shapley(&q, &scalar(n)).unwrap();
            let last = marginal_last(&q, n);
            assert!(a.per_datum_value[n - 1] > last, "n={n}");
        }
    }

    fn marginal_last(q: &ValuationQuery, n: usize) -> f64 {
        crate::valuation::marginal_value(q, &scalar(n - 1), &scalar(1)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matches_permutation_oracle_and_is_efficient(
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..6),
            noise in prop::collection::vec(0.3f64..2.0, 6),
            x in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
            let n = rows.len();
            let ds = Dataset::from_rows(&rows, None, noise[..n].to_vec()).unwrap();
            let q = ValuationQuery::standard(DVector::from_vec(x)).unwrap();
            let a = data_shapley(&q, &ds).unwrap();
            let oracle = shapley_by_permutations(&q, &ds);
            for (p, o) in a.per_datum_value.iter().zip(&oracle) {
                prop_assert!((p - o).abs() < 1e-10);
            }
            let full = canonical_value(&q, &ds).unwrap();
            prop_assert!((a.total() - full).abs() < 1e-9);
        }
    }
}
