use std::collections::HashSet;
use std::hash::Hash;

use crate::error::RankError;

/// Batches for one trial plus the items left out of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition<T> {
    pub batches: Vec<Vec<T>>,
    /// Items excluded by the floor division; they are owed a slot next trial.
    pub remainder: Vec<T>,
}

/// Split a shuffled sequence into `floor(n / S)` disjoint batches of exactly `S`.
///
/// Every item in `owed` is guaranteed a slot; the excluded remainder is drawn
/// from the tail of the non-owed items, and everything else keeps its shuffled
/// order. A sequence shorter than `S` becomes a single undersized batch.
pub fn partition_into_batches<T>(
    shuffled: &[T],
    batch_size: usize,
    owed: &HashSet<T>,
) -> Result<Partition<T>, RankError>
where
    T: Copy + Eq + Hash,
{
    if batch_size < 2 {
        return Err(RankError::InvalidConfig(format!(
            "batch size must be at least 2, got {batch_size}"
        )));
    }
    let n = shuffled.len();
    if n == 0 {
        return Ok(Partition {
            batches: Vec::new(),
            remainder: Vec::new(),
        });
    }
    if n < batch_size {
        return Ok(Partition {
            batches: vec![shuffled.to_vec()],
            remainder: Vec::new(),
        });
    }

    let slots = (n / batch_size) * batch_size;
    let owed_present = shuffled.iter().filter(|x| owed.contains(x)).count();
    if owed_present > slots {
        return Err(RankError::PriorityOverflow {
            owed: owed_present,
            slots,
        });
    }

    let mut excluded = n - slots;
    let mut keep = vec![true; n];
    for i in (0..n).rev() {
        if excluded == 0 {
            break;
        }
        if !owed.contains(&shuffled[i]) {
            keep[i] = false;
            excluded -= 1;
        }
    }

    let mut placed = Vec::with_capacity(slots);
    let mut remainder = Vec::with_capacity(n - slots);
    for (item, kept) in shuffled.iter().zip(&keep) {
        if *kept {
            placed.push(*item);
        } else {
            remainder.push(*item);
        }
    }
    Ok(Partition {
        batches: placed.chunks(batch_size).map(<[T]>::to_vec).collect(),
        remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn none() -> HashSet<usize> {
        HashSet::new()
    }

    #[test]
    fn exact_division() {
        let items: Vec<usize> = (0..25).collect();
        let p = partition_into_batches(&items, 5, &none()).unwrap();
        assert_eq!(p.batches.len(), 5);
        assert!(p.remainder.is_empty());
        let items: Vec<usize> = (0..20).collect();
        let p = partition_into_batches(&items, 10, &none()).unwrap();
        assert_eq!(p.batches.len(), 2);
        assert!(p.remainder.is_empty());
    }

    #[test]
    fn tld_sized_corpus() {
        let items: Vec<usize> = (0..536).collect();
        let p = partition_into_batches(&items, 10, &none()).unwrap();
        assert_eq!(p.batches.len(), 53);
        assert_eq!(p.remainder.len(), 6);
        assert!(p.batches.iter().all(|b| b.len() == 10));
    }

    #[test]
    fn owed_items_are_placed() {
        let items: Vec<usize> = (0..23).collect();
        // the owed items sit at the very tail, where exclusion would otherwise land
        let owed: HashSet<usize> = [20, 21, 22].into();
        let p = partition_into_batches(&items, 10, &owed).unwrap();
        assert_eq!(p.batches.len(), 2);
        let placed: HashSet<usize> = p.batches.iter().flatten().copied().collect();
        assert!(owed.is_subset(&placed));
        assert_eq!(p.remainder.len(), 3);
        assert!(p.remainder.iter().all(|x| !owed.contains(x)));
    }

    #[test]
    fn remainders_get_a_slot_next_trial() {
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut items: Vec<usize> = (0..23).collect();
            items.shuffle(&mut rng);
            let first = partition_into_batches(&items, 10, &none()).unwrap();
            let owed: HashSet<usize> = first.remainder.iter().copied().collect();
            assert_eq!(owed.len(), 3);
            items.shuffle(&mut rng);
            let second = partition_into_batches(&items, 10, &owed).unwrap();
            let placed: HashSet<usize> = second.batches.iter().flatten().copied().collect();
            assert!(owed.is_subset(&placed), "seed {seed}");
        }
    }

    #[test]
    fn undersized_corpus_is_one_batch() {
        let items: Vec<usize> = (0..9).collect();
        let p = partition_into_batches(&items, 10, &none()).unwrap();
        assert_eq!(p.batches, vec![items]);
        assert!(p.remainder.is_empty());
    }

    #[test]
    fn too_many_owed_items() {
        let items: Vec<usize> = (0..12).collect();
        let owed: HashSet<usize> = (0..11).collect();
        assert!(matches!(
            partition_into_batches(&items, 10, &owed),
            Err(RankError::PriorityOverflow { owed: 11, slots: 10 })
        ));
    }

    proptest! {
        #[test]
        fn batches_and_remainder_cover_input(n in 0usize..200, s in 2usize..15, owed_mask in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let slots = if n < s { n } else { n / s * s };
            let owed: HashSet<usize> = items.iter().copied().filter(|i| *i < 64 && owed_mask >> i & 1 == 1).take(slots).collect();
            let p = partition_into_batches(&items, s, &owed).unwrap();
            let mut all: Vec<usize> = p.batches.iter().flatten().chain(&p.remainder).copied().collect();
            all.sort();
            prop_assert_eq!(all, items);
            if n >= s {
                prop_assert_eq!(p.batches.len(), n / s);
                prop_assert!(p.batches.iter().all(|b| b.len() == s));
                prop_assert!(p.remainder.len() < s);
            }
            prop_assert!(p.remainder.iter().all(|x| !owed.contains(x)));
        }
    }
}
