use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Document, TextDocument};
use crate::error::{Error, Result};

pub trait HasId {
    fn doc_id(&self) -> &str;
}

impl HasId for Document {
    fn doc_id(&self) -> &str {
        &self.id
    }
}

impl HasId for TextDocument {
    fn doc_id(&self) -> &str {
        &self.id
    }
}

/// Split sizes for `n` items: valid and test are floored, train takes the
/// remainder.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "split ratios must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    if n < 3 {
        return Err(Error::Input(format!("cannot split {n} documents three ways")));
    }
    // The epsilon keeps e.g. 300/2800 * 2800 from flooring to 299.
    let valid = (b * n as f64 + 1e-9).floor() as usize;
    let test = (c * n as f64 + 1e-9).floor() as usize;
    Ok((n - valid - test, valid, test))
}

/// Sorts by id, shuffles with a seeded permutation and cuts into
/// train/valid/test.
pub fn split_dataset<T: HasId + Clone>(
    docs: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (n_train, n_valid, _) = split_sizes(docs.len(), ratios)?;
    let mut order: Vec<&T> = docs.iter().collect();
    order.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = order[..n_train].iter().map(|&d| d.clone()).collect();
    let valid = order[n_train..n_train + n_valid].iter().map(|&d| d.clone()).collect();
    let test = order[n_train + n_valid..].iter().map(|&d| d.clone()).collect();
    Ok((train, valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn docs(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document {
                id: format!("d{i:04}"),
                tokens: vec![3],
                gold: vec![],
            })
            .collect()
    }

    #[test]
    fn exact_division() {
        let (a, b, c) = split_dataset(&docs(100), (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
    }

    #[test]
    fn remainder_goes_to_train() {
        assert_eq!(split_sizes(101, (0.8, 0.1, 0.1)).unwrap(), (81, 10, 10));
        let r = (2000.0 / 2800.0, 300.0 / 2800.0, 500.0 / 2800.0);
        assert_eq!(split_sizes(2800, r).unwrap(), (2000, 300, 500));
    }

    #[test]
    fn same_seed_same_split_regardless_of_input_order() {
        let d = docs(30);
        let mut rev = d.clone();
        rev.reverse();
        assert_eq!(
            split_dataset(&d, (0.6, 0.2, 0.2), 5).unwrap(),
            split_dataset(&rev, (0.6, 0.2, 0.2), 5).unwrap()
        );
    }

    #[test]
    fn errors() {
        assert!(split_dataset(&docs(2), (0.8, 0.1, 0.1), 0).is_err());
        assert!(split_dataset(&docs(10), (0.8, 0.3, 0.1), 0).is_err());
        assert!(split_dataset(&docs(10), (1.0, 0.0, 0.0), 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn disjoint_and_covering(n in 3usize..300, seed in 0u64..10_000) {
            let d = docs(n);
            let (a, b, c) = split_dataset(&d, (0.7, 0.2, 0.1), seed).unwrap();
            let ids: Vec<&str> = a.iter().chain(&b).chain(&c).map(|x| x.id.as_str()).collect();
            let set: HashSet<&str> = ids.iter().copied().collect();
            proptest::prop_assert_eq!(ids.len(), n);
            proptest::prop_assert_eq!(set.len(), n);
        }
    }
}
