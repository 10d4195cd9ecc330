//! Stabilizer-pattern statistics on finite windows.
//!
//! For a point `j` the pattern on a window `W` records, for each `g ∈ W`,
//! whether `σ(g)` fixes `j`. The empirical IRS of `σ` restricted to `W` is the
//! distribution of patterns under the uniform measure on points.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::approx::ApproxHom;
use crate::group::{Element, GroupSpec, Window, WindowTable};
use crate::perm::{fixed_fraction_joint, Permutation, PAR_THRESHOLD};
use crate::{frac, frac_to_f64, Error, Frac, Result};

/// Bit vector indexed by window positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    len: u32,
    words: SmallVec<[u64; 2]>,
}

impl Pattern {
    pub fn zeros(len: usize) -> Self {
        Self {
            len: len as u32,
            words: SmallVec::from_elem(0, len.div_ceil(64)),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut p = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.set(i, b);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: bool) {
        let m = 1u64 << (i % 64);
        if b {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn all(&self, idx: &[usize]) -> bool {
        idx.iter().all(|&i| self.get(i))
    }

    /// Pattern on positions `idx` (in that order).
    pub fn restrict(&self, idx: &[usize]) -> Pattern {
        let mut p = Pattern::zeros(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            p.set(k, self.get(i));
        }
        p
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidParameter(format!(
                    "pattern {s:?} is not a bit string"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Pattern::from_bits(&bits))
    }
}

/// First violated subgroup axiom of `y` on the window, if any.
pub fn subgroup_violation(window: &Window, table: &WindowTable, y: &Pattern) -> Option<String> {
    let n = window.len();
    if !y.get(window.identity_index()) {
        return Some("identity bit is 0".into());
    }
    for i in 0..n {
        if let Some(k) = table.inverse(i) {
            if y.get(i) != y.get(k) {
                return Some(format!("bits of {} and its inverse differ", window.get(i)));
            }
        }
    }
    for i in (0..n).filter(|&i| y.get(i)) {
        for k in (0..n).filter(|&k| y.get(k)) {
            if let Some(l) = table.product(i, k) {
                if !y.get(l) {
                    return Some(format!(
                        "{} and {} set but their product is not",
                        window.get(i),
                        window.get(k)
                    ));
                }
            }
        }
    }
    None
}

/// Distribution of patterns on a window, stored sparsely and sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMeasure {
    window: Window,
    entries: Vec<(Pattern, Frac)>,
}

impl PatternMeasure {
    /// Aggregates duplicate patterns; masses must be nonnegative and sum to 1.
    pub fn new(window: Window, entries: Vec<(Pattern, Frac)>) -> Result<Self> {
        let mut map: BTreeMap<Pattern, Frac> = BTreeMap::new();
        for (p, m) in entries {
            if p.len() != window.len() {
                return Err(Error::InvalidParameter(format!(
                    "pattern {p} has the wrong length"
                )));
            }
            if m < frac(0, 1) {
                return Err(Error::InvalidParameter(format!("negative mass on {p}")));
            }
            *map.entry(p).or_insert(frac(0, 1)) += m;
        }
        let total: Frac = map.values().sum();
        if total != frac(1, 1) {
            return Err(Error::InvalidParameter(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self {
            window,
            entries: map.into_iter().filter(|(_, m)| *m != frac(0, 1)).collect(),
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn entries(&self) -> &[(Pattern, Frac)] {
        &self.entries
    }

    pub fn mass(&self, y: &Pattern) -> Frac {
        match self.entries.binary_search_by(|(p, _)| p.cmp(y)) {
            Ok(i) => self.entries[i].1,
            Err(_) => frac(0, 1),
        }
    }

    /// `∫ 𝓔_F dμ` for window positions `idx`.
    pub fn fixed_mass_indices(&self, idx: &[usize]) -> Frac {
        self.entries
            .iter()
            .filter(|(p, _)| p.all(idx))
            .map(|(_, m)| *m)
            .sum()
    }

    /// `∫ 𝓔_F dμ`.
    pub fn fixed_mass(&self, f: &[Element]) -> Result<Frac> {
        Ok(self.fixed_mass_indices(&self.window.indices_of(f)?))
    }

    /// Restriction to a sub-window.
    pub fn marginal(&self, sub: &Window) -> Result<PatternMeasure> {
        let idx = self.window.indices_of(sub.elements())?;
        let mut map: BTreeMap<Pattern, Frac> = BTreeMap::new();
        for (p, m) in &self.entries {
            *map.entry(p.restrict(&idx)).or_insert(frac(0, 1)) += *m;
        }
        Ok(PatternMeasure {
            window: sub.clone(),
            entries: map.into_iter().collect(),
        })
    }

    /// Mass of patterns whose identity bit is 0.
    pub fn identity_violation_mass(&self) -> Frac {
        let e = self.window.identity_index();
        self.entries
            .iter()
            .filter(|(p, _)| !p.get(e))
            .map(|(_, m)| *m)
            .sum()
    }

    /// Mass of patterns that are not subgroup-consistent on the window.
    pub fn inconsistent_mass(&self, spec: &GroupSpec) -> Frac {
        let table = self.window.table(spec);
        self.entries
            .iter()
            .filter(|(p, _)| subgroup_violation(&self.window, &table, p).is_some())
            .map(|(_, m)| *m)
            .sum()
    }

    /// CSV rows `(bits, numerator, denominator)`.
    pub fn csv_rows(&self) -> Vec<(String, i128, i128)> {
        self.entries
            .iter()
            .map(|(p, m)| (p.to_string(), *m.numer(), *m.denom()))
            .collect()
    }
}

/// Stabilizer pattern of `j` on the given images.
fn pattern_of(images: &[&Permutation], j: usize) -> Pattern {
    let mut p = Pattern::zeros(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.apply(j) == j {
            p.set(i, true);
        }
    }
    p
}

/// `Θ = (S_σ)_*(u_d)` restricted to `window`.
pub fn empirical_irs(sigma: &ApproxHom, window: &Window) -> Result<PatternMeasure> {
    let imgs = sigma.evaluate_many(window.elements())?;
    let refs: Vec<&Permutation> = imgs.iter().map(|c| c.as_ref()).collect();
    let d = sigma.degree();
    let counts: HashMap<Pattern, u64> = if d >= PAR_THRESHOLD {
        (0..d)
            .into_par_iter()
            .fold(HashMap::new, |mut acc: HashMap<Pattern, u64>, j| {
                *acc.entry(pattern_of(&refs, j)).or_default() += 1;
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            })
    } else {
        let mut acc = HashMap::new();
        for j in 0..d {
            *acc.entry(pattern_of(&refs, j)).or_default() += 1;
        }
        acc
    };
    let mut entries: Vec<(Pattern, Frac)> = counts
        .into_iter()
        .map(|(p, c)| (p, frac(c as i128, d as i128)))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(PatternMeasure {
        window: window.clone(),
        entries,
    })
}

/// `|⋂_{g∈F} Fix σ(g)| / d`.
pub fn fixed_fraction(sigma: &ApproxHom, f: &[Element]) -> Result<Frac> {
    let imgs = sigma.evaluate_many(f)?;
    let refs: Vec<&Permutation> = imgs.iter().map(|c| c.as_ref()).collect();
    fixed_fraction_joint(&refs)
}

/// Total variation distance `½ Σ |μ1 - μ2|`.
pub fn tv_distance(a: &PatternMeasure, b: &PatternMeasure) -> Result<Frac> {
    if a.window.elements() != b.window.elements() {
        return Err(Error::WindowMismatch);
    }
    let mut map: BTreeMap<&Pattern, Frac> = BTreeMap::new();
    for (p, m) in &a.entries {
        *map.entry(p).or_insert(frac(0, 1)) += *m;
    }
    for (p, m) in &b.entries {
        *map.entry(p).or_insert(frac(0, 1)) -= *m;
    }
    Ok(map
        .values()
        .map(|v| if *v < frac(0, 1) { -*v } else { *v })
        .sum::<Frac>()
        / frac(2, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub set: Vec<Element>,
    pub sigma: Frac,
    pub psi: Frac,
    pub difference: Frac,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsMatchReport {
    pub rows: Vec<StatsRow>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares fixed-point statistics `θ_σ(F)` and `θ_ψ(F)` over a family of sets.
pub fn stats_match(
    sigma: &ApproxHom,
    psi: &ApproxHom,
    family: &[Vec<Element>],
    tol: f64,
) -> Result<StatsMatchReport> {
    let rows: Vec<StatsRow> = family
        .iter()
        .map(|f| {
            let (a, b) = (fixed_fraction(sigma, f)?, fixed_fraction(psi, f)?);
            let difference = if a > b { a - b } else { b - a };
            Ok(StatsRow {
                set: f.clone(),
                sigma: a,
                psi: b,
                difference,
                pass: frac_to_f64(&difference) <= tol,
            })
        })
        .collect::<Result<_>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(StatsMatchReport {
        rows,
        tolerance: tol,
        pass,
    })
}

/// Every subset of `window` with at most `max_size` elements, in index order.
pub fn subsets_up_to(window: &Window, max_size: usize) -> Vec<Vec<Element>> {
    fn rec(
        els: &[Element],
        start: usize,
        left: usize,
        cur: &mut Vec<Element>,
        out: &mut Vec<Vec<Element>>,
    ) {
        out.push(cur.clone());
        if left == 0 {
            return;
        }
        for i in start..els.len() {
            cur.push(els[i].clone());
            rec(els, i + 1, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(window.elements(), 0, max_size, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugationDefect {
    pub value: Frac,
    /// `|W_g| / |W|`.
    pub coverage: Frac,
}

/// TV distance between `μ` and its image under `y ↦ (h ↦ y(g^-1 h g))`, both
/// restricted to `W_g = {h ∈ W : g^-1 h g ∈ W}`.
pub fn conjugation_invariance_defect(
    spec: &GroupSpec,
    mu: &PatternMeasure,
    g: &Element,
) -> Result<ConjugationDefect> {
    let w = &mu.window;
    let gi = spec.inverse(g)?;
    let mut sub = Vec::new();
    let mut src = Vec::new();
    for (i, h) in w.elements().iter().enumerate() {
        let c = spec.multiply(&spec.multiply(&gi, h)?, g)?;
        if let Some(k) = w.index_of(&c) {
            sub.push(i);
            src.push(k);
        }
    }
    if sub.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no window element stays in the window under conjugation by {g}"
        )));
    }
    let mut diff: BTreeMap<Pattern, Frac> = BTreeMap::new();
    for (p, m) in &mu.entries {
        *diff.entry(p.restrict(&sub)).or_insert(frac(0, 1)) += *m;
        *diff.entry(p.restrict(&src)).or_insert(frac(0, 1)) -= *m;
    }
    let value = diff
        .values()
        .map(|v| if *v < frac(0, 1) { -*v } else { *v })
        .sum::<Frac>()
        / frac(2, 1);
    Ok(ConjugationDefect {
        value,
        coverage: frac(sub.len() as i128, w.len() as i128),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Empirical,
    SubgroupList,
    UserSupplied,
}

/// A window restriction of an IRS: subgroup-consistent patterns with weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrsWindowSpec {
    spec: GroupSpec,
    window: Window,
    entries: Vec<(Pattern, f64)>,
    provenance: Provenance,
}

impl IrsWindowSpec {
    pub fn new(
        spec: &GroupSpec,
        window: &Window,
        entries: Vec<(Pattern, f64)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let table = window.table(spec);
        for (p, wgt) in &entries {
            if p.len() != window.len() {
                return Err(Error::InvalidParameter(format!(
                    "pattern {p} has the wrong length"
                )));
            }
            if !(wgt.is_finite() && *wgt >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weight {wgt} is not a nonnegative number"
                )));
            }
            if let Some(why) = subgroup_violation(window, &table, p) {
                return Err(Error::InconsistentPattern(format!("{p}: {why}")));
            }
        }
        let total = crate::sum::exact_sum(&entries.iter().map(|e| e.1).collect::<Vec<_>>());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            window: window.clone(),
            entries,
            provenance,
        })
    }

    pub fn from_measure(spec: &GroupSpec, mu: &PatternMeasure) -> Result<Self> {
        let entries = mu
            .entries
            .iter()
            .map(|(p, m)| (p.clone(), frac_to_f64(m)))
            .collect();
        Self::new(spec, &mu.window, entries, Provenance::Empirical)
    }

    pub fn point_mass(spec: &GroupSpec, window: &Window, pattern: Pattern) -> Result<Self> {
        Self::new(spec, window, vec![(pattern, 1.0)], Provenance::SubgroupList)
    }

    /// Point mass at the trivial subgroup.
    pub fn trivial_subgroup(spec: &GroupSpec, window: &Window) -> Result<Self> {
        let mut p = Pattern::zeros(window.len());
        p.set(window.identity_index(), true);
        Self::point_mass(spec, window, p)
    }

    /// Pattern of the subgroup `{g : member(g)}` on the window.
    pub fn subgroup_pattern(window: &Window, member: impl Fn(&Element) -> bool) -> Pattern {
        let bits: Vec<bool> = window.elements().iter().map(member).collect();
        Pattern::from_bits(&bits)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn entries(&self) -> &[(Pattern, f64)] {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ActionSpec;

    fn z(v: i64) -> Element {
        Element::Lattice(vec![v])
    }

    fn rotation(n: usize, r: usize) -> ApproxHom {
        let spec = GroupSpec::lattice(1);
        ApproxHom::from_action(
            &spec,
            &ActionSpec::Torus {
                moduli: vec![n as u64],
            },
            n,
            &spec.ball(r).unwrap(),
        )
        .unwrap()
    }

    /// `Z` acting on `2n` points as `n` disjoint 2-cycles.
    fn two_cycles(n: usize) -> ApproxHom {
        let spec = GroupSpec::lattice(1);
        let cycles: Vec<Vec<usize>> = (0..n).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let g = Permutation::from_cycles(2 * n, &cycles).unwrap();
        ApproxHom::from_generator_images(&spec, &[g], &spec.ball(2).unwrap()).unwrap()
    }

    #[test]
    fn rotation_has_trivial_stabilizers() {
        let s = rotation(50, 3);
        let mu = empirical_irs(&s, s.window()).unwrap();
        assert_eq!(mu.entries().len(), 1);
        assert_eq!(mu.entries()[0].0.to_string(), "1000000");
        assert_eq!(mu.entries()[0].1, frac(1, 1));
    }

    #[test]
    fn trivial_action_is_all_ones() {
        let spec = GroupSpec::lattice(2);
        let w = spec.ball(2).unwrap();
        let s = ApproxHom::from_action(&spec, &ActionSpec::Trivial { d: 7 }, 7, &w).unwrap();
        let mu = empirical_irs(&s, &w).unwrap();
        assert_eq!(mu.entries().len(), 1);
        assert!(mu.entries()[0].0.all(&(0..w.len()).collect::<Vec<_>>()));
    }

    #[test]
    fn two_cycle_pattern() {
        let s = two_cycles(10);
        let w = s.spec().ball(2).unwrap();
        let mu = empirical_irs(&s, &w).unwrap();
        // window order (0, 1, -1, 2, -2)
        assert_eq!(mu.entries(), &[("10011".parse().unwrap(), frac(1, 1))]);
        assert_eq!(fixed_fraction(&s, &[z(1)]).unwrap(), frac(0, 1));
        assert_eq!(fixed_fraction(&s, &[z(2)]).unwrap(), frac(1, 1));
        assert_eq!(fixed_fraction(&s, &[]).unwrap(), frac(1, 1));
        assert_eq!(mu.inconsistent_mass(s.spec()), frac(0, 1));
    }

    #[test]
    fn fixed_fraction_two_ways() {
        let s = rotation(12, 2).perturb(0.4, 9).unwrap();
        let w = s.window().clone();
        let mu = empirical_irs(&s, &w).unwrap();
        for f in subsets_up_to(&w, 3) {
            assert_eq!(fixed_fraction(&s, &f).unwrap(), mu.fixed_mass(&f).unwrap());
        }
    }

    #[test]
    fn tv_examples() {
        let s = rotation(9, 2).perturb(0.5, 1).unwrap();
        let w = s.window().clone();
        let mu = empirical_irs(&s, &w).unwrap();
        assert_eq!(tv_distance(&mu, &mu).unwrap(), frac(0, 1));
        assert_eq!(
            tv_distance(&mu, &empirical_irs(&s.block_sum(3).unwrap(), &w).unwrap()).unwrap(),
            frac(0, 1)
        );
        let a =
            PatternMeasure::new(w.clone(), vec![("10000".parse().unwrap(), frac(1, 1))]).unwrap();
        let b =
            PatternMeasure::new(w.clone(), vec![("11111".parse().unwrap(), frac(1, 1))]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), frac(1, 1));
        let other = GroupSpec::lattice(1).ball(1).unwrap();
        let c = PatternMeasure::new(other, vec![("100".parse().unwrap(), frac(1, 1))]).unwrap();
        assert!(matches!(tv_distance(&a, &c), Err(Error::WindowMismatch)));
    }

    #[test]
    fn stats_match_padding() {
        let s = rotation(20, 2);
        let fam = vec![vec![], vec![z(1)], vec![z(1), z(2)]];
        assert!(stats_match(&s, &s, &fam, 0.0).unwrap().pass);
        let p = s.pad_trivial(10).unwrap();
        let rep = stats_match(&s, &p, &fam, 0.0).unwrap();
        assert_eq!(rep.rows[1].difference, frac(10, 30));
        assert!(!rep.pass);
        // a 20-cycle generated by +3 instead of +1
        let spec = GroupSpec::lattice(1);
        let q = ApproxHom::from_generator_images(
            &spec,
            &[Permutation::rotation(20, 3)],
            &spec.ball(2).unwrap(),
        )
        .unwrap();
        assert!(stats_match(&s, &q, &fam, 0.0).unwrap().pass);
    }

    #[test]
    fn conjugation_defects() {
        let s = rotation(10, 2);
        let mu = empirical_irs(&s, s.window()).unwrap();
        let d = conjugation_invariance_defect(s.spec(), &mu, &z(1)).unwrap();
        assert_eq!(d.value, frac(0, 1));
        assert_eq!(d.coverage, frac(1, 1));

        let spec = GroupSpec::heisenberg();
        let w = spec.ball(2).unwrap();
        let h =
            ApproxHom::from_action(&spec, &ActionSpec::HeisenbergAffine { n: 6 }, 36, &w).unwrap();
        let mu = empirical_irs(&h, &w).unwrap();
        assert!(
            mu.entries().len() > 1,
            "affine action has several stabilizer types"
        );
        for g in spec.ball(1).unwrap().elements() {
            let d = conjugation_invariance_defect(&spec, &mu, g).unwrap();
            assert_eq!(d.value, frac(0, 1), "{g}");
            assert!(d.coverage < frac(1, 1) || g.is_identity());
        }
    }

    #[test]
    fn inconsistent_mass_is_bounded_by_violation_masses() {
        let s = rotation(40, 2);
        let w = s.window().clone();
        for seed in 0..10 {
            let p = s.perturb(0.3, seed).unwrap();
            let mu = empirical_irs(&p, &w).unwrap();
            let rep = p.subgroup_consistency_defects(&w).unwrap();
            assert!(mu.inconsistent_mass(p.spec()) <= rep.total_mass());
        }
    }

    #[test]
    fn irs_spec_validation() {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(2).unwrap();
        let even = IrsWindowSpec::subgroup_pattern(
            &w,
            |g| matches!(g, Element::Lattice(v) if v[0] % 2 == 0),
        );
        assert_eq!(even.to_string(), "10011");
        assert!(IrsWindowSpec::point_mass(&spec, &w, even).is_ok());
        assert!(IrsWindowSpec::point_mass(&spec, &w, "11000".parse().unwrap()).is_err());
        assert!(IrsWindowSpec::point_mass(&spec, &w, "01111".parse().unwrap()).is_err());
        // 1 and 1 set but 2 not
        assert!(IrsWindowSpec::point_mass(&spec, &w, "11100".parse().unwrap()).is_err());
        let t = IrsWindowSpec::trivial_subgroup(&spec, &w).unwrap();
        assert!(IrsWindowSpec::new(
            &spec,
            &w,
            vec![(t.entries()[0].0.clone(), 0.5)],
            Provenance::UserSupplied
        )
        .is_err());
    }
}
