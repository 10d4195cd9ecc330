//! Permutations of `{0, .., d-1}` stored as image sequences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{frac, Error, Frac, Result};

/// Below this degree counting loops stay sequential.
pub(crate) const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Permutation {
    img: Vec<u32>,
}

impl TryFrom<Vec<u32>> for Permutation {
    type Error = Error;

    fn try_from(img: Vec<u32>) -> Result<Self> {
        Self::from_images(img)
    }
}

impl From<Permutation> for Vec<u32> {
    fn from(p: Permutation) -> Self {
        p.img
    }
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Self {
            img: (0..d as u32).collect(),
        }
    }

    pub fn from_images(img: Vec<u32>) -> Result<Self> {
        let d = img.len();
        if d > u32::MAX as usize {
            return Err(Error::DegreeCap {
                degree: d,
                cap: u32::MAX as usize,
            });
        }
        let mut seen = vec![false; d];
        for &x in &img {
            let x = x as usize;
            if x >= d || seen[x] {
                return Err(Error::NotABijection(d));
            }
            seen[x] = true;
        }
        Ok(Self { img })
    }

    /// Caller guarantees `img` is a bijection.
    pub(crate) fn from_images_unchecked(img: Vec<u32>) -> Self {
        debug_assert!(Self::from_images(img.clone()).is_ok());
        Self { img }
    }

    /// Product of disjoint cycles, e.g. `[[0, 1, 2]]` maps 0→1→2→0.
    pub fn from_cycles(d: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut img: Vec<u32> = (0..d as u32).collect();
        let mut touched = vec![false; d];
        for c in cycles {
            for (i, &a) in c.iter().enumerate() {
                if a >= d || touched[a] {
                    return Err(Error::NotABijection(d));
                }
                touched[a] = true;
                img[a] = c[(i + 1) % c.len()] as u32;
            }
        }
        Ok(Self { img })
    }

    /// `j -> j + k mod d`.
    pub fn rotation(d: usize, k: i64) -> Self {
        let d64 = d as i64;
        let k = k.rem_euclid(d64.max(1));
        Self {
            img: (0..d64).map(|j| ((j + k) % d64) as u32).collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.img.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.img
    }

    #[inline]
    pub fn apply(&self, j: usize) -> usize {
        self.img[j] as usize
    }

    pub fn is_identity(&self) -> bool {
        self.img.iter().enumerate().all(|(j, &x)| j == x as usize)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.img.len()];
        for (j, &x) in self.img.iter().enumerate() {
            inv[x as usize] = j as u32;
        }
        Self { img: inv }
    }

    /// `(self ∘ q)(j) = self(q(j))`.
    pub fn compose(&self, q: &Permutation) -> Result<Self> {
        check_degrees(self, q)?;
        Ok(self.compose_unchecked(q))
    }

    pub(crate) fn compose_unchecked(&self, q: &Permutation) -> Self {
        let img = if q.img.len() >= PAR_THRESHOLD {
            q.img.par_iter().map(|&x| self.img[x as usize]).collect()
        } else {
            q.img.iter().map(|&x| self.img[x as usize]).collect()
        };
        Self { img }
    }

    /// `self ∘ q ∘ self⁻¹`.
    pub fn conjugate(&self, q: &Permutation) -> Result<Self> {
        check_degrees(self, q)?;
        let mut img = vec![0u32; q.degree()];
        for j in 0..q.degree() {
            img[self.apply(j)] = self.img[q.apply(j)];
        }
        Ok(Self { img })
    }

    /// Number of points where the two permutations disagree.
    pub fn disagreements(&self, q: &Permutation) -> Result<usize> {
        check_degrees(self, q)?;
        Ok(count_where(self.degree(), |j| self.img[j] != q.img[j]))
    }

    pub fn fixed_points(&self) -> usize {
        count_where(self.degree(), |j| self.img[j] as usize == j)
    }
}

fn check_degrees(p: &Permutation, q: &Permutation) -> Result<()> {
    if p.degree() != q.degree() {
        Err(Error::DegreeMismatch(p.degree(), q.degree()))
    } else {
        Ok(())
    }
}

/// Exact parallel count of `j < d` satisfying `pred`.
pub(crate) fn count_where<F>(d: usize, pred: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    if d >= PAR_THRESHOLD {
        (0..d).into_par_iter().filter(|&j| pred(j)).count()
    } else {
        (0..d).filter(|&j| pred(j)).count()
    }
}

/// Normalized Hamming distance `|{i : p(i) != q(i)}| / d`.
pub fn hamming(p: &Permutation, q: &Permutation) -> Result<Frac> {
    let n = p.disagreements(q)?;
    Ok(ratio(n, p.degree()))
}

/// `|⋂ Fix(p)| / d`; the empty list gives 1.
pub fn fixed_fraction_joint(ps: &[&Permutation]) -> Result<Frac> {
    let Some(first) = ps.first() else {
        return Ok(frac(1, 1));
    };
    for p in ps {
        check_degrees(first, p)?;
    }
    let d = first.degree();
    let n = count_where(d, |j| ps.iter().all(|p| p.apply(j) == j));
    Ok(ratio(n, d))
}

pub(crate) fn ratio(n: usize, d: usize) -> Frac {
    if d == 0 {
        frac(0, 1)
    } else {
        frac(n as i128, d as i128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn random_perm(d: usize, seed: u64) -> Permutation {
        let mut v: Vec<u32> = (0..d as u32).collect();
        v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        Permutation::from_images(v).unwrap()
    }

    #[test]
    fn construction_checks_bijectivity() {
        assert!(Permutation::from_images(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_images(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_images(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn compose_examples() {
        let c = Permutation::from_cycles(3, &[vec![0, 1, 2]]).unwrap();
        let c2 = c.compose(&c).unwrap();
        assert_eq!(c2, Permutation::from_cycles(3, &[vec![0, 2, 1]]).unwrap());
        let id = Permutation::identity(3);
        assert_eq!(id.compose(&c).unwrap(), c);
        let p = random_perm(50, 1);
        assert!(p.compose(&p.inverse()).unwrap().is_identity());
        assert!(matches!(
            id.compose(&Permutation::identity(4)),
            Err(Error::DegreeMismatch(3, 4))
        ));
    }

    #[test]
    fn hamming_examples() {
        let id2 = Permutation::identity(2);
        let swap = Permutation::from_images(vec![1, 0]).unwrap();
        assert_eq!(hamming(&id2, &id2).unwrap(), frac(0, 1));
        assert_eq!(hamming(&swap, &id2).unwrap(), frac(1, 1));
        let c = Permutation::from_cycles(3, &[vec![0, 1, 2]]).unwrap();
        assert_eq!(hamming(&c, &Permutation::identity(3)).unwrap(), frac(1, 1));
    }

    #[test]
    fn joint_fixed_fraction_examples() {
        assert_eq!(fixed_fraction_joint(&[]).unwrap(), frac(1, 1));
        let t = Permutation::from_cycles(4, &[vec![0, 1]]).unwrap();
        assert_eq!(fixed_fraction_joint(&[&t]).unwrap(), frac(1, 2));
        let a = Permutation::from_cycles(6, &[vec![0, 1]]).unwrap();
        let b = Permutation::from_cycles(6, &[vec![2, 3]]).unwrap();
        assert_eq!(fixed_fraction_joint(&[&a, &b]).unwrap(), frac(2, 6));
    }

    #[test]
    fn conjugate_matches_compose() {
        let p = random_perm(40, 3);
        let q = random_perm(40, 4);
        let direct = p.compose(&q).unwrap().compose(&p.inverse()).unwrap();
        assert_eq!(p.conjugate(&q).unwrap(), direct);
    }

    #[test]
    fn large_degree_counts_in_parallel() {
        let d = 100_000;
        let p = Permutation::rotation(d, 7);
        assert_eq!(p.fixed_points(), 0);
        assert_eq!(hamming(&p, &Permutation::identity(d)).unwrap(), frac(1, 1));
    }

    proptest! {
        #[test]
        fn hamming_is_bi_invariant(d in 1usize..40, s in any::<[u64; 3]>()) {
            let (p, q, r) = (random_perm(d, s[0]), random_perm(d, s[1]), random_perm(d, s[2]));
            let base = hamming(&p, &q).unwrap();
            prop_assert_eq!(hamming(&r.compose(&p).unwrap(), &r.compose(&q).unwrap()).unwrap(), base);
            prop_assert_eq!(hamming(&p.compose(&r).unwrap(), &q.compose(&r).unwrap()).unwrap(), base);
            // triangle inequality
            let via = hamming(&p, &r).unwrap() + hamming(&r, &q).unwrap();
            prop_assert!(base <= via);
            prop_assert_eq!(hamming(&q, &p).unwrap(), base);
        }

        #[test]
        fn joint_fix_is_antitone(d in 1usize..30, seeds in prop::collection::vec(any::<u64>(), 1..5)) {
            // sparse permutations so fixed sets are nontrivial
            let perms: Vec<Permutation> = seeds
                .iter()
                .map(|&s| {
                    let mut img: Vec<u32> = (0..d as u32).collect();
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
                    let k = (d / 3).max(1);
                    img[..k].shuffle(&mut rng);
                    Permutation::from_images(img).unwrap()
                })
                .collect();
            let refs: Vec<&Permutation> = perms.iter().collect();
            for i in 1..refs.len() {
                prop_assert!(fixed_fraction_joint(&refs[..=i]).unwrap() <= fixed_fraction_joint(&refs[..i]).unwrap());
            }
            let id = Permutation::identity(d);
            prop_assert_eq!(frac(1, 1) - hamming(&perms[0], &id).unwrap(), fixed_fraction_joint(&refs[..1]).unwrap());
        }
    }
}
