//! Benchmark fixtures shared by the criterion harnesses.

use soficlab_core::{ActionSpec, ApproxHom, GroupSpec, Permutation};

/// `Z` rotating `Z/d`, images stored on ball(`radius`).
pub fn rotation(d: usize, radius: usize) -> ApproxHom {
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(radius).unwrap();
    ApproxHom::from_action(
        &spec,
        &ActionSpec::Torus {
            moduli: vec![d as u64],
        },
        d,
        &w,
    )
    .unwrap()
}

/// `Z^2` on `(Z/n)^2`, images stored on ball(`radius`).
pub fn torus(n: u64, radius: usize) -> ApproxHom {
    let spec = GroupSpec::lattice(2);
    let w = spec.ball(radius).unwrap();
    let a = ActionSpec::Torus { moduli: vec![n, n] };
    ApproxHom::from_action(&spec, &a, a.degree(&spec).unwrap(), &w).unwrap()
}

/// A uniformly random permutation, deterministic in `seed`.
pub fn shuffled(d: usize, seed: u64) -> Permutation {
    use rand::seq::SliceRandom;
    let mut v: Vec<u32> = (0..d as u32).collect();
    v.shuffle(&mut soficlab_core::rng::stream(seed));
    Permutation::from_images(v).unwrap()
}
