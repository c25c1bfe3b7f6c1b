use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{BinaryClass, Distance, LabeledPoint};
use crate::error::{Error, Result};
use crate::matrix::{cosine_distance, squared_euclidean};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Position in the training set.
    pub index: usize,
    /// Euclidean or cosine distance to the query.
    pub distance: f64,
    pub class: BinaryClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: BinaryClass,
    /// Nearest first.
    pub neighbors: Vec<Neighbor>,
}

fn ordering_key<T: Scalar>(distance: Distance, a: &[T], b: &[T]) -> T {
    match distance {
        // squared distance orders identically and skips the sqrt
        Distance::Euclidean => squared_euclidean(a, b),
        Distance::Cosine => cosine_distance(a, b),
    }
}

/// Majority vote over the `k` nearest training points.
///
/// Equal distances go to the earlier training point; an even split of
/// votes goes to non-earnest.
pub fn knn_predict<T: Scalar>(train: &[LabeledPoint<T>], query: &[T], k: usize, distance: Distance) -> Result<Prediction> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > train.len() {
        return Err(Error::invalid(format!("k = {k} exceeds training size {}", train.len())));
    }
    if let Some(bad) = train.iter().find(|p| p.values.len() != query.len()) {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: bad.values.len(),
        });
    }
    let mut scored: Vec<(T, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, p)| (ordering_key(distance, &p.values, query), i))
        .collect();
    if scored.iter().any(|(d, _)| !d.is_finite()) {
        return Err(Error::NonFinite);
    }
    let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);

    let non_earnest = scored.iter().filter(|(_, i)| train[*i].class == BinaryClass::NonEarnest).count();
    let class = if 2 * non_earnest >= k {
        BinaryClass::NonEarnest
    } else {
        BinaryClass::Earnest
    };
    let neighbors = scored
        .into_iter()
        .map(|(d, index)| Neighbor {
            index,
            distance: match distance {
                Distance::Euclidean => d.sqrt().as_f64(),
                Distance::Cosine => d.as_f64(),
            },
            class: train[index].class,
        })
        .collect();
    Ok(Prediction { class, neighbors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64], class: BinaryClass) -> LabeledPoint<f64> {
        LabeledPoint::new("", v.to_vec(), class)
    }

    #[test]
    fn exact_match_at_k1() {
        let train = vec![pt(&[0.0, 0.0], BinaryClass::Earnest), pt(&[5.0, 5.0], BinaryClass::NonEarnest)];
        assert_eq!(knn_predict(&train, &[5.0, 5.0], 1, Distance::Euclidean).unwrap().class, BinaryClass::NonEarnest);
        assert_eq!(knn_predict(&train, &[0.0, 0.0], 1, Distance::Euclidean).unwrap().class, BinaryClass::Earnest);
    }

    #[test]
    fn even_split_goes_non_earnest() {
        let train = vec![pt(&[1.0], BinaryClass::Earnest), pt(&[-1.0], BinaryClass::NonEarnest), pt(&[9.0], BinaryClass::Earnest)];
        let p = knn_predict(&train, &[0.0], 2, Distance::Euclidean).unwrap();
        assert_eq!(p.class, BinaryClass::NonEarnest);
        // equal distances: earlier index first
        assert_eq!(p.neighbors.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(p.neighbors[0].distance, 1.0);
    }

    #[test]
    fn errors() {
        let train = vec![pt(&[1.0], BinaryClass::Earnest)];
        assert!(knn_predict(&train, &[0.0], 2, Distance::Euclidean).is_err());
        assert!(knn_predict(&train, &[0.0, 1.0], 1, Distance::Euclidean).is_err());
        assert!(knn_predict(&train, &[0.0], 0, Distance::Euclidean).is_err());
    }

    #[test]
    fn cosine_ignores_scale() {
        let train = vec![pt(&[1.0, 0.0], BinaryClass::Earnest), pt(&[0.0, 1.0], BinaryClass::NonEarnest)];
        let p = knn_predict(&train, &[100.0, 1.0], 1, Distance::Cosine).unwrap();
        assert_eq!(p.class, BinaryClass::Earnest);
    }

    fn train_strategy() -> impl Strategy<Value = (Vec<LabeledPoint<f64>>, Vec<f64>)> {
        (1usize..6, 2usize..30).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(
                    (proptest::collection::vec(-3i32..3, d), any::<bool>()).prop_map(|(v, b)| {
                        let class = if b { BinaryClass::Earnest } else { BinaryClass::NonEarnest };
                        LabeledPoint::new("", v.into_iter().map(f64::from).collect(), class)
                    }),
                    n,
                ),
                proptest::collection::vec((-3i32..3).prop_map(f64::from), d),
            )
        })
    }

    proptest! {
        #[test]
        fn duplicates_never_change_k1((train, query) in train_strategy(), dup in proptest::collection::vec(any::<prop::sample::Index>(), 1..10)) {
            let before = knn_predict(&train, &query, 1, Distance::Euclidean).unwrap().class;
            let mut grown = train.clone();
            for i in dup {
                grown.push(train[i.index(train.len())].clone());
            }
            prop_assert_eq!(knn_predict(&grown, &query, 1, Distance::Euclidean).unwrap().class, before);
        }
    }
}
