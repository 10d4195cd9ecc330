//! Search for `χ ∈ Sym(d)` minimizing `Σ_{g∈E} d_Hamm(χ σ(g) χ^-1, ψ(g))`.
//!
//! [`align`] refines colors on the two edge-coloured graphs, grows a coupling
//! by breadth-first propagation inside matching colour classes, and polishes
//! it with transposition moves. Several seeded starts (plus the identity
//! coupling) run concurrently; the best result wins, ties going to the lowest
//! start index.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::ApproxHom;
use crate::group::Element;
use crate::irs::{stats_match, StatsMatchReport};
use crate::perm::{count_where, ratio, Permutation};
use crate::{frac_to_f64, rng, Error, Frac, Result};

/// Largest degree accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX: usize = 8;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignParams {
    pub rounds: usize,
    /// Upper bound on local-search passes per start.
    pub max_passes: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            rounds: 6,
            max_passes: 64,
            restarts: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlignmentProblem {
    sigma: Vec<Permutation>,
    psi: Vec<Permutation>,
    pub elements: Vec<Element>,
    pub params: AlignParams,
}

impl AlignmentProblem {
    pub fn new(
        sigma: &ApproxHom,
        psi: &ApproxHom,
        elements: &[Element],
        params: AlignParams,
    ) -> Result<Self> {
        if sigma.spec() != psi.spec() {
            return Err(Error::GroupMismatch(format!(
                "{} vs {}",
                sigma.spec().name(),
                psi.spec().name()
            )));
        }
        let s = sigma
            .evaluate_many(elements)?
            .into_iter()
            .map(|c| c.into_owned())
            .collect();
        let p = psi
            .evaluate_many(elements)?
            .into_iter()
            .map(|c| c.into_owned())
            .collect();
        Self::from_images(s, p, elements.to_vec(), params)
    }

    pub fn from_images(
        sigma: Vec<Permutation>,
        psi: Vec<Permutation>,
        elements: Vec<Element>,
        params: AlignParams,
    ) -> Result<Self> {
        if sigma.len() != psi.len() {
            return Err(Error::InvalidParameter(format!(
                "{} vs {} images",
                sigma.len(),
                psi.len()
            )));
        }
        let d = sigma.first().or(psi.first()).map_or(0, Permutation::degree);
        for p in sigma.iter().chain(&psi) {
            if p.degree() != d {
                return Err(Error::DegreeMismatch(d, p.degree()));
            }
        }
        Ok(Self {
            sigma,
            psi,
            elements,
            params,
        })
    }

    pub fn degree(&self) -> usize {
        self.sigma.first().map_or(0, Permutation::degree)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartTrace {
    pub start: String,
    pub initial: Frac,
    pub objective: Frac,
    pub moves: usize,
    pub passes: usize,
    /// Disagreement count after each pass.
    pub history: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignTrace {
    pub rounds_used: usize,
    pub classes: usize,
    /// `Σ_c |#σ-points − #ψ-points| / 2` over colour classes.
    pub class_slack: usize,
    pub starts: Vec<StartTrace>,
    pub best_start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub chi: Permutation,
    pub objective: Frac,
    pub trace: Option<AlignTrace>,
}

/// `Σ_{g∈E} hamming(χ σ(g) χ^-1, ψ(g))`, exact.
pub fn objective(sigma: &[Permutation], psi: &[Permutation], chi: &Permutation) -> Result<Frac> {
    if sigma.len() != psi.len() {
        return Err(Error::InvalidParameter(format!(
            "{} vs {} images",
            sigma.len(),
            psi.len()
        )));
    }
    let d = chi.degree();
    let mut total = Frac::from(0);
    for (s, p) in sigma.iter().zip(psi) {
        if s.degree() != d || p.degree() != d {
            return Err(Error::DegreeMismatch(d, s.degree().max(p.degree())));
        }
        total += ratio(
            count_where(d, |j| chi.apply(s.apply(j)) != p.apply(chi.apply(j))),
            d,
        );
    }
    Ok(total)
}

/// Objective for approximate homomorphisms evaluated on `elements`.
pub fn objective_on(
    sigma: &ApproxHom,
    psi: &ApproxHom,
    chi: &Permutation,
    elements: &[Element],
) -> Result<Frac> {
    let p = AlignmentProblem::new(sigma, psi, elements, AlignParams::default())?;
    objective(&p.sigma, &p.psi, chi)
}

/// Exhaustive minimum over `Sym(d)` for `d <= 8`; the lexicographically first
/// optimal image sequence wins.
pub fn brute_force(problem: &AlignmentProblem) -> Result<AlignmentResult> {
    let d = problem.degree();
    if d > BRUTE_FORCE_MAX {
        return Err(Error::TooLargeForBruteForce {
            max: BRUTE_FORCE_MAX,
            got: d,
        });
    }
    let mut img: Vec<usize> = (0..d).collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    loop {
        let bad: usize = problem
            .sigma
            .iter()
            .zip(&problem.psi)
            .map(|(s, p)| {
                (0..d)
                    .filter(|&j| img[s.apply(j)] != p.apply(img[j]))
                    .count()
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| bad < *b) {
            best = Some((bad, img.clone()));
        }
        if !next_permutation(&mut img) {
            break;
        }
    }
    let (bad, img) = best.expect("Sym(d) is nonempty");
    let chi = Permutation::from_images_unchecked(img.into_iter().map(|x| x as u32).collect());
    Ok(AlignmentResult {
        chi,
        objective: ratio(bad, d.max(1)),
        trace: None,
    })
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let k = (i + 1..n)
        .rev()
        .find(|&k| v[k] > v[i])
        .expect("suffix has a larger element");
    v.swap(i, k);
    v[i + 1..].reverse();
    true
}

/// Joint colour refinement: a point's new colour is the rank of its signature
/// `(colour, (colour of σ(g) j, colour of σ(g)^-1 j) for g ∈ E)` among all
/// signatures of both sides. Exact — no hashing.
pub fn refine_colors(
    sigma: &[Permutation],
    psi: &[Permutation],
    rounds: usize,
) -> (Vec<u32>, Vec<u32>, usize) {
    let d = sigma.first().map_or(0, Permutation::degree);
    let sinv: Vec<Permutation> = sigma.iter().map(Permutation::inverse).collect();
    let pinv: Vec<Permutation> = psi.iter().map(Permutation::inverse).collect();
    let mut cs = vec![0u32; d];
    let mut cp = vec![0u32; d];
    let mut classes = usize::from(d > 0);
    let mut used = 0;
    for _ in 0..rounds {
        let sig = |c: &[u32], fwd: &[Permutation], inv: &[Permutation]| -> Vec<Vec<u32>> {
            (0..d)
                .into_par_iter()
                .map(|j| {
                    let mut s = Vec::with_capacity(1 + 2 * fwd.len());
                    s.push(c[j]);
                    for (f, i) in fwd.iter().zip(inv) {
                        s.push(c[f.apply(j)]);
                        s.push(c[i.apply(j)]);
                    }
                    s
                })
                .collect()
        };
        let ss = sig(&cs, sigma, &sinv);
        let sp = sig(&cp, psi, &pinv);
        let mut palette: Vec<&Vec<u32>> = ss.iter().chain(&sp).collect();
        palette.par_sort_unstable();
        palette.dedup();
        let rank = |s: &Vec<u32>| palette.binary_search(&s).expect("signature in palette") as u32;
        let ncs: Vec<u32> = ss.par_iter().map(rank).collect();
        let ncp: Vec<u32> = sp.par_iter().map(rank).collect();
        let n = palette.len();
        used += 1;
        cs = ncs;
        cp = ncp;
        if n == classes {
            break;
        }
        classes = n;
    }
    (cs, cp, used)
}

/// Mutable coupling with incremental disagreement counts.
struct Coupling<'a> {
    s: &'a [Permutation],
    p: &'a [Permutation],
    s_inv: &'a [Permutation],
    p_inv: &'a [Permutation],
    chi: Vec<u32>,
    chi_inv: Vec<u32>,
    bad: usize,
}

impl<'a> Coupling<'a> {
    fn new(
        s: &'a [Permutation],
        p: &'a [Permutation],
        s_inv: &'a [Permutation],
        p_inv: &'a [Permutation],
        chi: Vec<u32>,
    ) -> Self {
        let mut chi_inv = vec![0u32; chi.len()];
        for (j, &c) in chi.iter().enumerate() {
            chi_inv[c as usize] = j as u32;
        }
        let mut c = Self {
            s,
            p,
            s_inv,
            p_inv,
            chi,
            chi_inv,
            bad: 0,
        };
        c.bad = (0..c.s.len())
            .map(|g| (0..c.chi.len()).filter(|&j| c.is_bad(j, g)).count())
            .sum();
        c
    }

    #[inline]
    fn is_bad(&self, j: usize, g: usize) -> bool {
        self.chi[self.s[g].apply(j)] as usize != self.p[g].apply(self.chi[j] as usize)
    }

    /// Terms `(j, g)` touched by swapping the images of `a` and `b`.
    fn local_bad(&self, a: usize, b: usize) -> usize {
        let mut n = 0;
        for g in 0..self.s.len() {
            let mut js = [a, b, self.s_inv[g].apply(a), self.s_inv[g].apply(b)];
            js.sort_unstable();
            for (i, &j) in js.iter().enumerate() {
                if (i == 0 || js[i - 1] != j) && self.is_bad(j, g) {
                    n += 1;
                }
            }
        }
        n
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.chi.swap(a, b);
        self.chi_inv[self.chi[a] as usize] = a as u32;
        self.chi_inv[self.chi[b] as usize] = b as u32;
    }

    /// Applies the swap if it strictly lowers the disagreement count.
    fn try_swap(&mut self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let before = self.local_bad(a, b);
        self.swap(a, b);
        let after = self.local_bad(a, b);
        if after < before {
            self.bad -= before - after;
            true
        } else {
            self.swap(a, b);
            false
        }
    }

    fn bad_points(&self) -> Vec<usize> {
        (0..self.chi.len())
            .filter(|&j| (0..self.s.len()).any(|g| self.is_bad(j, g)))
            .collect()
    }
}

/// Full neighbourhoods are scanned only while `#bad · d` stays below this.
const FULL_SCAN_CAP: usize = 1 << 20;

fn local_search(c: &mut Coupling<'_>, max_passes: usize) -> (usize, usize, Vec<usize>) {
    let d = c.chi.len();
    let mut moves = 0;
    let mut history = Vec::new();
    let mut passes = 0;
    while passes < max_passes && c.bad > 0 {
        passes += 1;
        let mut improved = false;
        for j in c.bad_points() {
            for g in 0..c.s.len() {
                if !c.is_bad(j, g) {
                    continue;
                }
                // make χ(σ(g) j) = ψ(g) χ(j)
                let a = c.s[g].apply(j);
                let b = c.chi_inv[c.p[g].apply(c.chi[j] as usize)] as usize;
                if c.try_swap(a, b) {
                    moves += 1;
                    improved = true;
                    continue;
                }
                // or make χ(j) = ψ(g)^-1 χ(σ(g) j)
                let t = c.p_inv[g].apply(c.chi[c.s[g].apply(j)] as usize);
                let b = c.chi_inv[t] as usize;
                if c.try_swap(j, b) {
                    moves += 1;
                    improved = true;
                }
            }
        }
        if !improved {
            let bad = c.bad_points();
            if bad.len() * d <= FULL_SCAN_CAP {
                for a in bad {
                    for b in 0..d {
                        if c.try_swap(a, b) {
                            moves += 1;
                            improved = true;
                        }
                    }
                }
            }
        }
        history.push(c.bad);
        if !improved {
            break;
        }
    }
    (moves, passes, history)
}

/// Breadth-first coupling inside colour classes. `order` fixes which σ-points
/// seed new components and `pools[c]` the order in which ψ-points of colour `c`
/// are offered.
#[allow(clippy::too_many_arguments)]
fn propagate(
    s: &[Permutation],
    s_inv: &[Permutation],
    p: &[Permutation],
    p_inv: &[Permutation],
    cs: &[u32],
    cp: &[u32],
    order: &[usize],
    pools: &mut [Vec<u32>],
) -> Vec<u32> {
    let d = cs.len();
    let mut chi = vec![NONE; d];
    let mut used = vec![false; d];
    let mut cursor = vec![0usize; pools.len()];
    let mut queue = std::collections::VecDeque::new();
    for &a in order {
        if chi[a] != NONE {
            continue;
        }
        let c = cs[a] as usize;
        let pool = &pools[c];
        while cursor[c] < pool.len() && used[pool[cursor[c]] as usize] {
            cursor[c] += 1;
        }
        let Some(&b) = pool.get(cursor[c]) else {
            continue;
        };
        chi[a] = b;
        used[b as usize] = true;
        queue.push_back((a, b as usize));
        while let Some((u, v)) = queue.pop_front() {
            for g in 0..s.len() {
                for (x, y) in [
                    (s[g].apply(u), p[g].apply(v)),
                    (s_inv[g].apply(u), p_inv[g].apply(v)),
                ] {
                    if chi[x] == NONE && !used[y] && cs[x] == cp[y] {
                        chi[x] = y as u32;
                        used[y] = true;
                        queue.push_back((x, y));
                    }
                }
            }
        }
    }
    // leftovers from mismatched class sizes, in index order
    let mut free: Vec<u32> = (0..d as u32).filter(|&y| !used[y as usize]).collect();
    free.reverse();
    for x in chi.iter_mut().filter(|x| **x == NONE) {
        *x = free.pop().expect("as many free images as unmatched points");
    }
    chi
}

pub fn align(problem: &AlignmentProblem) -> Result<AlignmentResult> {
    let d = problem.degree();
    let (s, p) = (&problem.sigma, &problem.psi);
    let params = &problem.params;
    if d == 0 || s.is_empty() {
        let chi = Permutation::identity(d);
        return Ok(AlignmentResult {
            objective: objective(s, p, &chi)?,
            chi,
            trace: None,
        });
    }
    let s_inv: Vec<Permutation> = s.iter().map(Permutation::inverse).collect();
    let p_inv: Vec<Permutation> = p.iter().map(Permutation::inverse).collect();
    let (cs, cp, rounds_used) = refine_colors(s, p, params.rounds);
    let classes = cs.iter().chain(&cp).max().map_or(0, |&m| m as usize + 1);
    let mut size_s = vec![0i64; classes];
    let mut size_p = vec![0i64; classes];
    cs.iter().for_each(|&c| size_s[c as usize] += 1);
    cp.iter().for_each(|&c| size_p[c as usize] += 1);
    let class_slack = size_s
        .iter()
        .zip(&size_p)
        .map(|(a, b)| (a - b).unsigned_abs() as usize)
        .sum::<usize>()
        / 2;

    // rare classes first: their points are the most constrained anchors
    let mut base_order: Vec<usize> = (0..d).collect();
    base_order.sort_by_key(|&j| (size_s[cs[j] as usize], j));
    let mut base_pools: Vec<Vec<u32>> = vec![Vec::new(); classes];
    for (y, &c) in cp.iter().enumerate() {
        base_pools[c as usize].push(y as u32);
    }

    let starts = params.restarts.max(2);
    let runs: Vec<(Vec<u32>, StartTrace)> = (0..starts)
        .into_par_iter()
        .map(|r| {
            let (name, chi) = match r {
                0 => (
                    "refinement".to_string(),
                    propagate(
                        s,
                        &s_inv,
                        p,
                        &p_inv,
                        &cs,
                        &cp,
                        &base_order,
                        &mut base_pools.clone(),
                    ),
                ),
                1 => ("identity".to_string(), (0..d as u32).collect()),
                _ => {
                    let mut g = rng::stream(rng::derive_seed(params.seed, r as u64));
                    let mut pools = base_pools.clone();
                    for pool in &mut pools {
                        pool.shuffle(&mut g);
                    }
                    let mut order = base_order.clone();
                    // keep rare classes first but vary the anchor inside each class
                    let keys: Vec<u64> = (0..d).map(|_| g.gen()).collect();
                    order.sort_by_key(|&j| (size_s[cs[j] as usize], keys[j]));
                    (
                        format!("seeded-{r}"),
                        propagate(s, &s_inv, p, &p_inv, &cs, &cp, &order, &mut pools),
                    )
                }
            };
            let mut c = Coupling::new(s, p, &s_inv, &p_inv, chi);
            let initial = ratio(c.bad, d);
            let (moves, passes, history) = local_search(&mut c, params.max_passes);
            let trace = StartTrace {
                start: name,
                initial,
                objective: ratio(c.bad, d),
                moves,
                passes,
                history,
            };
            (c.chi, trace)
        })
        .collect();

    let best_start = (0..runs.len())
        .min_by_key(|&i| (runs[i].1.objective, i))
        .expect("at least one start");
    let chi = Permutation::from_images_unchecked(runs[best_start].0.clone());
    let obj = objective(s, p, &chi)?;
    debug_assert_eq!(obj, runs[best_start].1.objective);
    Ok(AlignmentResult {
        chi,
        objective: obj,
        trace: Some(AlignTrace {
            rounds_used,
            classes,
            class_slack,
            starts: runs.into_iter().map(|(_, t)| t).collect(),
            best_start,
        }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendRow {
    pub degree: Option<usize>,
    pub size: usize,
    pub stats: Option<StatsMatchReport>,
    pub max_stats_difference: Option<f64>,
    pub objective: Option<Frac>,
    pub objective_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendTable {
    pub rows: Vec<TrendRow>,
    pub amenable: bool,
    pub irs_mismatch: bool,
    /// Objective non-increasing along the schedule.
    pub non_increasing: bool,
    pub annotation: String,
}

/// For each size, builds `(σ, ψ)`, compares fixed-point statistics on `family`
/// and aligns on `elements`.
pub fn conjugacy_trend<F>(
    sizes: &[usize],
    build: F,
    elements: &[Element],
    family: &[Vec<Element>],
    stats_tol: f64,
    params: &AlignParams,
) -> TrendTable
where
    F: Fn(usize) -> Result<(ApproxHom, ApproxHom)>,
{
    let mut rows = Vec::new();
    let mut amenable = true;
    for &n in sizes {
        let row = (|| -> Result<TrendRow> {
            let (sigma, psi) = build(n)?;
            amenable &= sigma.spec().is_amenable();
            let stats = stats_match(&sigma, &psi, family, stats_tol)?;
            let max_diff = stats
                .rows
                .iter()
                .map(|r| frac_to_f64(&r.difference))
                .fold(0.0, f64::max);
            let res = align(&AlignmentProblem::new(
                &sigma,
                &psi,
                elements,
                params.clone(),
            )?)?;
            Ok(TrendRow {
                degree: Some(sigma.degree()),
                size: n,
                stats: Some(stats),
                max_stats_difference: Some(max_diff),
                objective_value: Some(frac_to_f64(&res.objective)),
                objective: Some(res.objective),
                error: None,
            })
        })();
        rows.push(row.unwrap_or_else(|e| TrendRow {
            degree: None,
            size: n,
            stats: None,
            max_stats_difference: None,
            objective: None,
            objective_value: None,
            error: Some(e.to_string()),
        }));
    }
    let irs_mismatch = rows
        .iter()
        .any(|r| r.stats.as_ref().is_some_and(|s| !s.pass));
    let objs: Vec<Frac> = rows.iter().filter_map(|r| r.objective).collect();
    let non_increasing = objs.windows(2).all(|w| w[1] <= w[0]);
    let annotation = if amenable {
        "amenable group: matching statistics should force asymptotic conjugacy".into()
    } else {
        "non-amenable group: alignment reported without theoretical guarantee".into()
    };
    TrendTable {
        rows,
        amenable,
        irs_mismatch,
        non_increasing,
        annotation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ActionSpec;
    use crate::group::GroupSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn random_perm(d: usize, seed: u64) -> Permutation {
        let mut v: Vec<u32> = (0..d as u32).collect();
        v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        Permutation::from_images(v).unwrap()
    }

    fn problem(s: Vec<Permutation>, p: Vec<Permutation>) -> AlignmentProblem {
        AlignmentProblem::from_images(s, p, vec![], AlignParams::default()).unwrap()
    }

    #[test]
    fn objective_examples() {
        let s = vec![random_perm(20, 1), random_perm(20, 2)];
        assert_eq!(
            objective(&s, &s, &Permutation::identity(20)).unwrap(),
            Frac::from(0)
        );
        let chi = random_perm(20, 3);
        let p: Vec<Permutation> = s.iter().map(|x| chi.conjugate(x).unwrap()).collect();
        assert_eq!(objective(&s, &p, &chi).unwrap(), Frac::from(0));
        let id = vec![Permutation::identity(2)];
        let swap = vec![Permutation::from_images(vec![1, 0]).unwrap()];
        for c in [Permutation::identity(2), swap[0].clone()] {
            assert_eq!(objective(&id, &swap, &c).unwrap(), Frac::from(1));
        }
    }

    #[test]
    fn brute_force_examples() {
        let c1 = Permutation::from_cycles(3, &[vec![0, 1, 2]]).unwrap();
        let c2 = Permutation::from_cycles(3, &[vec![0, 2, 1]]).unwrap();
        assert_eq!(
            brute_force(&problem(vec![c1.clone()], vec![c2]))
                .unwrap()
                .objective,
            Frac::from(0)
        );
        let four = Permutation::rotation(4, 1);
        let r = brute_force(&problem(vec![four], vec![Permutation::identity(4)])).unwrap();
        assert_eq!(r.objective, Frac::from(1));
        let r = brute_force(&problem(vec![c1.clone()], vec![c1])).unwrap();
        assert!(r.chi.is_identity());
        let big = vec![Permutation::identity(9)];
        assert!(matches!(
            brute_force(&problem(big.clone(), big)),
            Err(Error::TooLargeForBruteForce { .. })
        ));
    }

    #[test]
    fn cycles_align_exactly() {
        let d = 10_000;
        let s = vec![Permutation::rotation(d, 1)];
        let pi = random_perm(d, 7);
        let p = vec![pi.conjugate(&s[0]).unwrap()];
        let r = align(&problem(s, p)).unwrap();
        assert_eq!(r.objective, Frac::from(0));
    }

    #[test]
    fn align_never_undercuts_brute_force() {
        let mut matches = 0;
        for t in 0..40u64 {
            let s = vec![random_perm(6, 2 * t), random_perm(6, 1000 + t)];
            let p = vec![random_perm(6, 2 * t + 1), random_perm(6, 2000 + t)];
            let pr = problem(s, p);
            let bf = brute_force(&pr).unwrap();
            let al = align(&pr).unwrap();
            assert!(al.objective >= bf.objective);
            matches += usize::from(al.objective == bf.objective);
        }
        assert!(matches >= 36, "{matches}/40");
    }

    #[test]
    fn identity_coupling_bounds_perturbation() {
        let spec = GroupSpec::lattice(2);
        let w = spec.ball(1).unwrap();
        let sigma = ApproxHom::from_action(
            &spec,
            &ActionSpec::Torus {
                moduli: vec![20, 20],
            },
            400,
            &w,
        )
        .unwrap();
        let rate = 0.1;
        let psi = sigma.perturb(rate, 4).unwrap();
        let gens = spec.generators().to_vec();
        let r = align(&AlignmentProblem::new(&sigma, &psi, &gens, AlignParams::default()).unwrap())
            .unwrap();
        let bound = 2.0 * gens.len() as f64 * rate + 2.0 * gens.len() as f64 / 400.0;
        assert!(frac_to_f64(&r.objective) <= bound);
    }

    #[test]
    fn refinement_is_conjugation_sound() {
        let d = 300;
        let s = vec![
            random_perm(d, 1),
            Permutation::from_cycles(d, &[vec![0, 1], vec![5, 6, 7]]).unwrap(),
        ];
        let chi = random_perm(d, 2);
        let p: Vec<Permutation> = s.iter().map(|x| chi.conjugate(x).unwrap()).collect();
        let (cs, cp, _) = refine_colors(&s, &p, 6);
        for j in 0..d {
            assert_eq!(cs[j], cp[chi.apply(j)]);
        }
    }

    #[test]
    fn torus_trend_decreases() {
        let spec = GroupSpec::lattice(2);
        let gens = spec.generators().to_vec();
        let family: Vec<Vec<Element>> = spec
            .ball(3)
            .unwrap()
            .elements()
            .iter()
            .map(|g| vec![g.clone()])
            .collect();
        let t = conjugacy_trend(
            &[8, 16, 32],
            |n| {
                let w = spec.ball(3)?;
                let a = ApproxHom::from_action(
                    &spec,
                    &ActionSpec::Torus {
                        moduli: vec![n as u64, n as u64],
                    },
                    n * n,
                    &w,
                )?;
                let b = ApproxHom::from_action(
                    &spec,
                    &ActionSpec::Embedding { n: n as u64 },
                    n * n,
                    &w,
                )?;
                Ok((a, b))
            },
            &gens,
            &family,
            0.0,
            &AlignParams::default(),
        );
        assert!(t.rows.iter().all(|r| r.error.is_none()), "{:?}", t.rows);
        assert!(!t.irs_mismatch);
        assert!(
            t.non_increasing,
            "{:?}",
            t.rows.iter().map(|r| r.objective_value).collect::<Vec<_>>()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_symmetries(d in 1usize..30, seeds in any::<[u64; 5]>()) {
            let s = vec![random_perm(d, seeds[0]), random_perm(d, seeds[1])];
            let p = vec![random_perm(d, seeds[2]), random_perm(d, seeds[3])];
            let chi = random_perm(d, seeds[4]);
            let base = objective(&s, &p, &chi).unwrap();
            prop_assert_eq!(objective(&p, &s, &chi.inverse()).unwrap(), base);
            let pi = random_perm(d, seeds[0] ^ seeds[4]);
            let rel: Vec<Permutation> = s.iter().map(|x| pi.conjugate(x).unwrap()).collect();
            let chi2 = chi.compose(&pi.inverse()).unwrap();
            prop_assert_eq!(objective(&rel, &p, &chi2).unwrap(), base);
        }
    }
}
