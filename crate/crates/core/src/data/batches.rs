//! Mini-batch streams over a labeled training set, optionally mixed with
//! label-stripped samples from other families.

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{Label, Sample};

/// Shuffled epochs over the primary samples plus any foreign ones.
#[derive(Clone, Debug)]
pub struct BatchStream<'a> {
    primary: &'a [Sample],
    foreign: Vec<Sample>,
    batch_size: usize,
    shuffle: Rng,
}

impl<'a> BatchStream<'a> {
    pub fn len(&self) -> usize {
        self.primary.len() + self.foreign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Sample at a pool index: primary samples first, then foreign ones.
    pub fn get(&self, i: usize) -> &Sample {
        match i.checked_sub(self.primary.len()) {
            None => &self.primary[i],
            Some(j) => &self.foreign[j],
        }
    }

    pub fn foreign(&self) -> &[Sample] {
        &self.foreign
    }

    /// Batches of pool indices for the next epoch. The last batch may be
    /// shorter than `batch_size`.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        self.shuffle.shuffle(&mut order);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Draw `k` items of `pool` without replacement.
fn draw<'s>(pool: &[&'s Sample], k: usize, rng: &mut Rng) -> Vec<&'s Sample> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..k {
        let j = i + rng.below((idx.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| pool[i]).collect()
}

/// Build the batch stream. `⌊ratio·|primary|⌋` foreign samples are split
/// evenly over the foreign families (remainder to the first), each share
/// half fake and half real, and stripped of labels. The selection and the
/// epoch shuffles use two streams split off `rng`, so a zero ratio leaves
/// the epoch order identical to training without foreign data.
pub fn assemble_batches<'a>(
    primary: &'a [Sample],
    foreign: &[&[Sample]],
    batch_size: usize,
    ratio: f64,
    rng: &mut Rng,
) -> Result<BatchStream<'a>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::invalid(format!("foreign ratio must be finite and non-negative, got {ratio}")));
    }
    if primary.is_empty() {
        return Err(Error::invalid("primary training set is empty"));
    }
    if primary.iter().any(|s| s.label.is_none()) {
        return Err(Error::invalid("primary training samples must all be labeled"));
    }
    let mut select = Rng::new(rng.next_u64());
    let shuffle = Rng::new(rng.next_u64());

    let k = (ratio * primary.len() as f64 + 1e-9).floor() as usize;
    let mut extra = Vec::with_capacity(k);
    if ratio > 0.0 {
        if foreign.is_empty() {
            return Err(Error::invalid("foreign ratio is positive but no foreign families were given"));
        }
        let per = k / foreign.len();
        for (f, family) in foreign.iter().enumerate() {
            let share = per + if f == 0 { k % foreign.len() } else { 0 };
            let fakes: Vec<&Sample> = family.iter().filter(|s| s.label == Some(Label::Fake)).collect();
            let reals: Vec<&Sample> = family.iter().filter(|s| s.label != Some(Label::Fake)).collect();
            let n_fake = share / 2;
            let n_real = share - n_fake;
            if fakes.len() < n_fake || reals.len() < n_real {
                return Err(Error::invalid(format!(
                    "foreign family {f} has {} real / {} fake samples, {n_real} / {n_fake} requested",
                    reals.len(),
                    fakes.len()
                )));
            }
            extra.extend(draw(&reals, n_real, &mut select).into_iter().map(Sample::unlabeled));
            extra.extend(draw(&fakes, n_fake, &mut select).into_iter().map(Sample::unlabeled));
        }
    }
    Ok(BatchStream { primary, foreign: extra, batch_size, shuffle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn family(name: &str, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                image: Tensor::zeros(Shape::new(1, 3, 1, 1)),
                label: Some(if i % 2 == 0 { Label::Real } else { Label::Fake }),
                family: name.into(),
                id: i as u64,
            })
            .collect()
    }

    #[test]
    fn zero_ratio_is_a_permutation() {
        let p = family("F", 10);
        let mut s = assemble_batches(&p, &[], 4, 0.0, &mut Rng::new(1)).unwrap();
        let batches = s.next_epoch();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut ids: Vec<u64> = batches.iter().flatten().map(|&i| s.get(i).id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn zero_ratio_matches_plain_order_with_foreign_present() {
        let p = family("F", 12);
        let u = family("U", 20);
        let mut a = assemble_batches(&p, &[], 4, 0.0, &mut Rng::new(7)).unwrap();
        let mut b = assemble_batches(&p, &[&u], 4, 0.0, &mut Rng::new(7)).unwrap();
        for _ in 0..3 {
            assert_eq!(a.next_epoch(), b.next_epoch());
        }
    }

    #[test]
    fn foreign_share_arithmetic() {
        let p = family("F", 1000);
        let u = family("U", 400);
        let c = family("C", 400);
        let s = assemble_batches(&p, &[&u, &c], 4, 0.15, &mut Rng::new(3)).unwrap();
        assert_eq!(s.foreign().len(), 150);
        assert_eq!(s.foreign().iter().filter(|x| x.family == "U").count(), 75);
        assert_eq!(s.foreign().iter().filter(|x| x.family == "C").count(), 75);
        assert!(s.foreign().iter().all(|x| x.label.is_none()));
        let mut ids: Vec<u64> = s.foreign().iter().filter(|x| x.family == "U").map(|x| x.id).collect();
        let fakes = ids.iter().filter(|&&i| i % 2 == 1).count();
        assert_eq!(fakes, 37);
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 75);
        assert_eq!(s.len(), 1150);
    }

    #[test]
    fn positive_ratio_needs_foreign_data() {
        let p = family("F", 10);
        assert!(assemble_batches(&p, &[], 4, 0.1, &mut Rng::new(0)).is_err());
        assert!(assemble_batches(&p, &[], 0, 0.0, &mut Rng::new(0)).is_err());
    }
}
