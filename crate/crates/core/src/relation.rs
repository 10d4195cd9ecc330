//! Defect metrics for sequential sofic approximations of the orbit
//! equivalence relation: a family of cylinder sets `B` with point sets
//! `ρ(B) ⊆ [d]` together with `σ`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::ApproxHom;
use crate::bernoulli::{mu_theta, CylinderFunction, StepFunction};
use crate::group::{Element, GroupSpec};
use crate::irs::IrsWindowSpec;
use crate::perm::{count_where, ratio, Permutation};
use crate::{frac_to_f64, Error, Frac, Result};

/// Zero bits above this count make the trace target too expensive
/// (inclusion–exclusion is exponential in them).
pub const MAX_ZERO_BITS: usize = 16;

/// Union of bins `[i/m, (i+1)/m)` given as a mask, `m <= 64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinSet {
    pub m: u32,
    pub mask: u64,
}

impl BinSet {
    pub fn new(m: u32, mask: u64) -> Result<Self> {
        if m == 0 || m > 64 {
            return Err(Error::InvalidParameter(format!(
                "bin count must be in 1..=64, got {m}"
            )));
        }
        let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        if mask & !full != 0 {
            return Err(Error::InvalidParameter(format!(
                "bin mask {mask:#x} exceeds {m} bins"
            )));
        }
        Ok(Self { m, mask })
    }

    pub fn single(m: u32, bin: u32) -> Result<Self> {
        if bin >= m {
            return Err(Error::InvalidParameter(format!(
                "bin {bin} out of range for {m} bins"
            )));
        }
        Self::new(m, 1 << bin)
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    #[inline]
    pub fn contains_value(&self, x: f64) -> bool {
        self.mask >> crate::bernoulli::bin_of(x, self.m as usize) & 1 == 1
    }

    pub fn intersect(&self, other: &BinSet) -> Result<BinSet> {
        if self.m != other.m {
            return Err(Error::InvalidParameter(format!(
                "bin counts differ: {} vs {}",
                self.m, other.m
            )));
        }
        Ok(BinSet {
            m: self.m,
            mask: self.mask & other.mask,
        })
    }

    pub fn indicator(&self) -> Result<StepFunction> {
        StepFunction::bin_indicator(self.m as usize, self.mask)
    }
}

/// Finite conjunction of bit constraints `y(g) = b` and label constraints
/// `x(h) ∈ S`. Contradictory conjunctions collapse to a single empty set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CylinderSet {
    bits: BTreeMap<Element, bool>,
    labels: BTreeMap<Element, BinSet>,
    contradictory: bool,
}

impl CylinderSet {
    /// No constraints: the whole space.
    pub fn full() -> Self {
        Self::default()
    }

    pub fn empty() -> Self {
        Self {
            contradictory: true,
            ..Self::default()
        }
    }

    pub fn bit(g: Element, value: bool) -> Self {
        Self::full().with_bit(g, value)
    }

    pub fn label(h: Element, set: BinSet) -> Self {
        Self::full()
            .with_label(h, set)
            .expect("single constraint cannot conflict")
    }

    pub fn with_bit(mut self, g: Element, value: bool) -> Self {
        if self.contradictory {
            return self;
        }
        match self.bits.get(&g) {
            Some(&v) if v != value => Self::empty(),
            _ => {
                self.bits.insert(g, value);
                self
            }
        }
    }

    pub fn with_label(mut self, h: Element, set: BinSet) -> Result<Self> {
        if self.contradictory {
            return Ok(self);
        }
        let set = match self.labels.get(&h) {
            Some(s) => s.intersect(&set)?,
            None => set,
        };
        if set.is_empty() {
            return Ok(Self::empty());
        }
        self.labels.insert(h, set);
        Ok(self)
    }

    pub fn bits(&self) -> &BTreeMap<Element, bool> {
        &self.bits
    }

    pub fn labels(&self) -> &BTreeMap<Element, BinSet> {
        &self.labels
    }

    pub fn is_contradictory(&self) -> bool {
        self.contradictory
    }

    pub fn arity(&self) -> usize {
        self.bits.len() + self.labels.len()
    }

    pub fn intersect(&self, other: &CylinderSet) -> Result<CylinderSet> {
        let mut out = self.clone();
        for (g, &v) in &other.bits {
            out = out.with_bit(g.clone(), v);
        }
        for (h, s) in &other.labels {
            out = out.with_label(h.clone(), *s)?;
        }
        if other.contradictory {
            out = Self::empty();
        }
        Ok(out)
    }

    /// `gB`: bit `b` moves to `g b g^-1`, label `h` to `g h`.
    pub fn translate(&self, spec: &GroupSpec, g: &Element) -> Result<CylinderSet> {
        if self.contradictory {
            return Ok(self.clone());
        }
        let bits = self
            .bits
            .iter()
            .map(|(b, &v)| Ok((spec.conjugate(g, b)?, v)))
            .collect::<Result<_>>()?;
        let labels = self
            .labels
            .iter()
            .map(|(h, &s)| Ok((spec.multiply(g, h)?, s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            bits,
            labels,
            contradictory: false,
        })
    }

    /// Every group element the set refers to.
    pub fn elements(&self) -> Vec<Element> {
        self.bits
            .keys()
            .chain(self.labels.keys())
            .cloned()
            .collect()
    }
}

impl fmt::Display for CylinderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.contradictory {
            return write!(f, "∅");
        }
        if self.arity() == 0 {
            return write!(f, "⊤");
        }
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| {
            let r = if first { Ok(()) } else { write!(f, " & ") };
            first = false;
            r
        };
        for (g, v) in &self.bits {
            sep(f)?;
            write!(f, "y{g}={}", u8::from(*v))?;
        }
        for (h, s) in &self.labels {
            sep(f)?;
            let bins: Vec<String> = (0..s.m)
                .filter(|b| s.mask >> b & 1 == 1)
                .map(|b| b.to_string())
                .collect();
            write!(f, "x{h}∈{{{}}}/{}", bins.join(","), s.m)?;
        }
        Ok(())
    }
}

/// Subset of `{0, .., d-1}` as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointSet {
    d: usize,
    words: Vec<u64>,
}

impl PointSet {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            words: vec![0; d.div_ceil(64)],
        }
    }

    pub fn full(d: usize) -> Self {
        Self::from_predicate(d, |_| true)
    }

    pub fn from_predicate<F>(d: usize, pred: F) -> Self
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        let words = (0..d.div_ceil(64))
            .into_par_iter()
            .map(|w| {
                let mut word = 0u64;
                for b in 0..64 {
                    let j = w * 64 + b;
                    if j < d && pred(j) {
                        word |= 1 << b;
                    }
                }
                word
            })
            .collect();
        Self { d, words }
    }

    pub fn from_points(d: usize, points: &[usize]) -> Result<Self> {
        let mut s = Self::empty(d);
        for &j in points {
            if j >= d {
                return Err(Error::InvalidParameter(format!(
                    "point {j} out of range for degree {d}"
                )));
            }
            s.insert(j);
        }
        Ok(s)
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn insert(&mut self, j: usize) {
        self.words[j / 64] |= 1 << (j % 64);
    }

    pub fn toggle(&mut self, j: usize) {
        self.words[j / 64] ^= 1 << (j % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn points(&self) -> Vec<usize> {
        (0..self.d).filter(|&j| self.contains(j)).collect()
    }

    pub fn intersection(&self, other: &PointSet) -> Result<PointSet> {
        self.check(other)?;
        Ok(Self {
            d: self.d,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        })
    }

    pub fn symmetric_difference_count(&self, other: &PointSet) -> Result<usize> {
        self.check(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// `{p(j) : j ∈ self}`.
    pub fn image(&self, p: &Permutation) -> Result<PointSet> {
        if p.degree() != self.d {
            return Err(Error::DegreeMismatch(self.d, p.degree()));
        }
        let inv = p.inverse();
        Ok(Self::from_predicate(self.d, |j| {
            self.contains(inv.apply(j))
        }))
    }

    fn check(&self, other: &PointSet) -> Result<()> {
        if self.d != other.d {
            Err(Error::DegreeMismatch(self.d, other.d))
        } else {
            Ok(())
        }
    }
}

/// The pair `(ρ, σ)` on a declared family of cylinder sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoficApproxData {
    sigma: ApproxHom,
    family: Vec<CylinderSet>,
    rho: Vec<PointSet>,
    #[serde(skip)]
    index: HashMap<CylinderSet, usize>,
}

impl SoficApproxData {
    pub fn new(sigma: ApproxHom, family: Vec<CylinderSet>, rho: Vec<PointSet>) -> Result<Self> {
        if family.len() != rho.len() {
            return Err(Error::InvalidParameter(format!(
                "{} sets but {} point sets",
                family.len(),
                rho.len()
            )));
        }
        if let Some(r) = rho.iter().find(|r| r.degree() != sigma.degree()) {
            return Err(Error::DegreeMismatch(sigma.degree(), r.degree()));
        }
        let mut data = Self {
            sigma,
            family,
            rho,
            index: HashMap::new(),
        };
        data.reindex()?;
        Ok(data)
    }

    fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, b) in self.family.iter().enumerate() {
            if self.index.insert(b.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("set {b} declared twice")));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.sigma.degree()
    }

    pub fn sigma(&self) -> &ApproxHom {
        &self.sigma
    }

    pub fn spec(&self) -> &GroupSpec {
        self.sigma.spec()
    }

    pub fn family(&self) -> &[CylinderSet] {
        &self.family
    }

    pub fn contains(&self, b: &CylinderSet) -> bool {
        self.index.contains_key(b)
    }

    pub fn rho(&self, b: &CylinderSet) -> Result<&PointSet> {
        self.index
            .get(b)
            .map(|&i| &self.rho[i])
            .ok_or_else(|| Error::MissingSet(b.to_string()))
    }

    /// Replaces `ρ(B)`, e.g. to inject corruption.
    pub fn set_rho(&mut self, b: &CylinderSet, set: PointSet) -> Result<()> {
        let i = *self
            .index
            .get(b)
            .ok_or_else(|| Error::MissingSet(b.to_string()))?;
        if set.degree() != self.degree() {
            return Err(Error::DegreeMismatch(self.degree(), set.degree()));
        }
        self.rho[i] = set;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self).map_err(|e| Error::Decode(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut data: Self =
            bincode::deserialize(&bytes).map_err(|e| Error::Decode(e.to_string()))?;
        data.reindex()?;
        Ok(data)
    }
}

/// `u_d(ρ(B1∩B2) Δ (ρ(B1) ∩ ρ(B2)))`.
pub fn intersection_defect(
    data: &SoficApproxData,
    b1: &CylinderSet,
    b2: &CylinderSet,
) -> Result<Frac> {
    let both = b1.intersect(b2)?;
    let lhs = data.rho(&both)?;
    let rhs = data.rho(b1)?.intersection(data.rho(b2)?)?;
    Ok(ratio(lhs.symmetric_difference_count(&rhs)?, data.degree()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceDefect {
    /// `u_d({j ∈ ρ(B) : σ(g) j = j})`.
    pub empirical: Frac,
    /// `μ_Θ(B ∩ {y(g) = 1})`.
    pub target: f64,
    pub value: f64,
}

/// `|u_d({j ∈ ρ(B) : σ(g) j = j}) − μ_Θ(B ∩ {y(g) = 1})|`; zero-bit
/// constraints are expanded by inclusion–exclusion into positive cylinders.
pub fn trace_defect(
    data: &SoficApproxData,
    b: &CylinderSet,
    g: &Element,
    theta: &IrsWindowSpec,
) -> Result<TraceDefect> {
    let rho = data.rho(b)?;
    let sg = data.sigma().evaluate(g)?;
    let empirical = ratio(
        count_where(data.degree(), |j| rho.contains(j) && sg.apply(j) == j),
        data.degree(),
    );
    let target = cylinder_measure(&b.clone().with_bit(g.clone(), true), theta)?;
    Ok(TraceDefect {
        value: (frac_to_f64(&empirical) - target).abs(),
        empirical,
        target,
    })
}

/// `μ_Θ(B)` for a cylinder set.
pub fn cylinder_measure(b: &CylinderSet, theta: &IrsWindowSpec) -> Result<f64> {
    if b.is_contradictory() {
        return Ok(0.0);
    }
    let ones: Vec<Element> = b
        .bits()
        .iter()
        .filter(|(_, &v)| v)
        .map(|(g, _)| g.clone())
        .collect();
    let zeros: Vec<Element> = b
        .bits()
        .iter()
        .filter(|(_, &v)| !v)
        .map(|(g, _)| g.clone())
        .collect();
    if zeros.len() > MAX_ZERO_BITS {
        return Err(Error::InvalidParameter(format!(
            "{} zero-bit constraints exceed {MAX_ZERO_BITS}",
            zeros.len()
        )));
    }
    let labels: Vec<(Element, StepFunction)> = b
        .labels()
        .iter()
        .map(|(h, s)| Ok((h.clone(), s.indicator()?)))
        .collect::<Result<_>>()?;
    let mut total = crate::sum::ExactSum::new();
    for t in 0u32..1 << zeros.len() {
        let mut bits = ones.clone();
        bits.extend(
            zeros
                .iter()
                .enumerate()
                .filter(|(i, _)| t >> i & 1 == 1)
                .map(|(_, z)| z.clone()),
        );
        let v = mu_theta(&CylinderFunction::new(labels.clone(), bits)?, theta)?;
        total.add(if t.count_ones() % 2 == 0 { v } else { -v });
    }
    Ok(total.value().max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetEquivariance {
    /// `u_d(ρ(gB) Δ σ(g) ρ(B))`.
    pub value: Frac,
    /// Mass of points where a constraint of `gB` is read through a composition
    /// of `σ` that disagrees with the corresponding image; off this set the two
    /// memberships coincide for data exported from labels.
    pub composition_mass: Frac,
}

pub fn equivariance_defect(
    data: &SoficApproxData,
    b: &CylinderSet,
    g: &Element,
) -> Result<SetEquivariance> {
    let spec = data.spec();
    let gb = b.translate(spec, g)?;
    let lhs = data.rho(&gb)?;
    let sg = data.sigma().evaluate(g)?.into_owned();
    let rhs = data.rho(b)?.image(&sg)?;
    let d = data.degree();
    let value = ratio(lhs.symmetric_difference_count(&rhs)?, d);

    let sigma = data.sigma();
    let g_inv = sg.inverse();
    let inv_of = |e: &Element| -> Result<Permutation> { Ok(sigma.evaluate(e)?.inverse()) };
    let mut label_pairs = Vec::new();
    for h in b.labels().keys() {
        label_pairs.push((inv_of(h)?, inv_of(&spec.multiply(g, h)?)?));
    }
    let mut bit_pairs = Vec::new();
    for c in b.bits().keys() {
        bit_pairs.push((
            sigma.evaluate(c)?.into_owned(),
            sigma.evaluate(&spec.conjugate(g, c)?)?.into_owned(),
        ));
    }
    let bad = count_where(d, |j| {
        let i = g_inv.apply(j);
        label_pairs.iter().any(|(h, gh)| h.apply(i) != gh.apply(j))
            || bit_pairs
                .iter()
                .any(|(c, gc)| sg.apply(c.apply(i)) != gc.apply(j))
    });
    Ok(SetEquivariance {
        value,
        composition_mass: ratio(bad, d),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub kind: String,
    pub parameters: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RelationReport {
    pub rows: Vec<CheckRow>,
    pub closure_violations: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl RelationReport {
    pub fn max_of(&self, kind: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.value)
            .reduce(f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTolerances {
    pub homomorphism: f64,
    pub intersection: f64,
    pub trace: f64,
    pub equivariance: f64,
}

impl RelationTolerances {
    pub fn uniform(t: f64) -> Self {
        Self {
            homomorphism: t,
            intersection: t,
            trace: t,
            equivariance: t,
        }
    }
}

/// Every check on the supplied family: homomorphism defects over pairs of test
/// elements, intersections of pairs of `atoms`, traces of every family member
/// against every test element, and translates of every atom.
pub fn full_report(
    data: &SoficApproxData,
    atoms: &[CylinderSet],
    elements: &[Element],
    theta: &IrsWindowSpec,
    tol: &RelationTolerances,
) -> Result<RelationReport> {
    let mut rep = RelationReport {
        notes: vec![
            "complements are not required: only the supplied family is checked".into(),
            "trace conditions are checked for group translations only, not general full-group elements".into(),
        ],
        ..RelationReport::default()
    };
    if data.family().is_empty() {
        rep.warnings
            .push("empty family: checks pass vacuously".into());
    }
    let push =
        |rep: &mut RelationReport, kind: &str, parameters: String, value: f64, tolerance: f64| {
            let pass = value <= tolerance;
            rep.rows.push(CheckRow {
                kind: kind.into(),
                parameters,
                value,
                tolerance,
                pass,
            });
        };

    let pairs: Vec<(Element, Element)> = elements
        .iter()
        .flat_map(|g| elements.iter().map(move |h| (g.clone(), h.clone())))
        .collect();
    if !pairs.is_empty() {
        let hom = data.sigma().defect(&pairs)?;
        for e in &hom.entries {
            push(
                &mut rep,
                "homomorphism",
                format!("g={} h={}", e.g, e.h),
                frac_to_f64(&e.value),
                tol.homomorphism,
            );
        }
    }

    for (i, b1) in atoms.iter().enumerate() {
        for b2 in &atoms[i + 1..] {
            match intersection_defect(data, b1, b2) {
                Ok(v) => push(
                    &mut rep,
                    "intersection",
                    format!("{b1} | {b2}"),
                    frac_to_f64(&v),
                    tol.intersection,
                ),
                Err(Error::MissingSet(s)) => rep
                    .closure_violations
                    .push(format!("intersection {s} missing")),
                Err(e) => return Err(e),
            }
        }
    }

    let traces: Vec<Result<(String, f64)>> = data
        .family()
        .par_iter()
        .flat_map_iter(|b| {
            elements.iter().map(move |g| {
                let t = trace_defect(data, b, g, theta)?;
                Ok((format!("{b} g={g}"), t.value))
            })
        })
        .collect();
    for t in traces {
        let (p, v) = t?;
        push(&mut rep, "trace", p, v, tol.trace);
    }

    for b in atoms {
        for g in elements {
            match equivariance_defect(data, b, g) {
                Ok(v) => push(
                    &mut rep,
                    "equivariance",
                    format!("{b} g={g}"),
                    frac_to_f64(&v.value),
                    tol.equivariance,
                ),
                Err(Error::MissingSet(s)) => rep
                    .closure_violations
                    .push(format!("translate {s} missing")),
                Err(e) => return Err(e),
            }
        }
    }

    rep.pass = rep.closure_violations.is_empty() && rep.rows.iter().all(|r| r.pass);
    Ok(rep)
}

/// Atoms over `bit_window ∪ label_window` with `m` bins: the full set, each bit
/// constraint `y(g) ∈ {0, 1}` and each single-bin label constraint.
pub fn atoms(bit_window: &[Element], label_window: &[Element], m: u32) -> Result<Vec<CylinderSet>> {
    let mut out = vec![CylinderSet::full()];
    for g in bit_window {
        out.push(CylinderSet::bit(g.clone(), true));
        out.push(CylinderSet::bit(g.clone(), false));
    }
    for h in label_window {
        for b in 0..m {
            out.push(CylinderSet::label(h.clone(), BinSet::single(m, b)?));
        }
    }
    Ok(out)
}

/// Closes `atoms` under the checks of [`full_report`]: pairwise intersections
/// and translates of atoms by each test element.
pub fn close_family(
    spec: &GroupSpec,
    atoms: &[CylinderSet],
    elements: &[Element],
) -> Result<Vec<CylinderSet>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut add = |b: CylinderSet| {
        if seen.insert(b.clone()) {
            out.push(b);
        }
    };
    for b in atoms {
        add(b.clone());
    }
    for (i, b1) in atoms.iter().enumerate() {
        for b2 in &atoms[i + 1..] {
            add(b1.intersect(b2)?);
        }
    }
    for b in atoms {
        for g in elements {
            add(b.translate(spec, g)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ActionSpec;
    use crate::bernoulli::{export_relation_data, sample_labels};

    fn z(v: i64) -> Element {
        Element::Lattice(vec![v])
    }

    fn rotation_data(d: usize, seed: u64) -> (SoficApproxData, Vec<CylinderSet>, Vec<Element>) {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(2).unwrap();
        let sigma = ApproxHom::from_action(
            &spec,
            &ActionSpec::Torus {
                moduli: vec![d as u64],
            },
            d,
            &w,
        )
        .unwrap();
        let els: Vec<Element> = spec.ball(1).unwrap().elements().to_vec();
        let atoms = atoms(w.elements(), w.elements(), 4).unwrap();
        let fam = close_family(&spec, &atoms, &els).unwrap();
        let x = sample_labels(d, seed);
        (export_relation_data(&sigma, &x, &fam).unwrap(), atoms, els)
    }

    #[test]
    fn cylinder_set_algebra() {
        let a = CylinderSet::bit(z(1), true);
        let b = CylinderSet::bit(z(1), false);
        assert!(a.intersect(&b).unwrap().is_contradictory());
        assert_eq!(a.intersect(&CylinderSet::full()).unwrap(), a);
        let l1 = CylinderSet::label(z(0), BinSet::new(4, 0b0011).unwrap());
        let l2 = CylinderSet::label(z(0), BinSet::new(4, 0b0110).unwrap());
        assert_eq!(
            l1.intersect(&l2).unwrap(),
            CylinderSet::label(z(0), BinSet::new(4, 0b0010).unwrap())
        );
        let l3 = CylinderSet::label(z(0), BinSet::new(4, 0b1000).unwrap());
        assert_eq!(l1.intersect(&l3).unwrap(), CylinderSet::empty());
        let l8 = CylinderSet::label(z(0), BinSet::new(8, 1).unwrap());
        assert!(l1.intersect(&l8).is_err());
        let spec = GroupSpec::lattice(1);
        let t = l1.intersect(&a).unwrap().translate(&spec, &z(2)).unwrap();
        assert_eq!(t.to_string(), "y(1)=1 & x(2)∈{0,1}/4");
    }

    #[test]
    fn point_sets() {
        let s = PointSet::from_points(130, &[0, 64, 129]).unwrap();
        assert_eq!(s.count(), 3);
        let r = s.image(&Permutation::rotation(130, 1)).unwrap();
        assert_eq!(r.points(), vec![0, 1, 65]);
        assert_eq!(s.symmetric_difference_count(&r).unwrap(), 4);
        assert_eq!(PointSet::full(130).count(), 130);
    }

    #[test]
    fn exported_data_is_exact() {
        let (data, atoms, els) = rotation_data(500, 1);
        let full = CylinderSet::full();
        assert_eq!(data.rho(&full).unwrap().count(), 500);
        for (i, a) in atoms.iter().enumerate() {
            assert_eq!(intersection_defect(&data, a, &full).unwrap(), Frac::from(0));
            for b in &atoms[i + 1..] {
                assert_eq!(intersection_defect(&data, a, b).unwrap(), Frac::from(0));
            }
            for g in &els {
                let e = equivariance_defect(&data, a, g).unwrap();
                assert_eq!(e.value, Frac::from(0));
            }
        }
        // trivial action: ρ(x(e) ∈ [0,1/2)) is exactly {j : x(j) < 1/2}
        let spec = GroupSpec::lattice(1);
        let t = ApproxHom::from_action(
            &spec,
            &ActionSpec::Trivial { d: 300 },
            300,
            &spec.ball(1).unwrap(),
        )
        .unwrap();
        let x = sample_labels(300, 4);
        let half = CylinderSet::label(z(0), BinSet::new(2, 1).unwrap());
        let d = export_relation_data(&t, &x, std::slice::from_ref(&half)).unwrap();
        assert_eq!(
            d.rho(&half).unwrap().points(),
            (0..300).filter(|&j| x.values[j] < 0.5).collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupted_point_is_counted() {
        let (mut data, _, _) = rotation_data(200, 2);
        let b1 = CylinderSet::bit(z(0), true);
        let b2 = CylinderSet::label(z(1), BinSet::single(4, 2).unwrap());
        let both = b1.intersect(&b2).unwrap();
        let mut r = data.rho(&both).unwrap().clone();
        r.toggle(17);
        data.set_rho(&both, r).unwrap();
        assert_eq!(
            intersection_defect(&data, &b1, &b2).unwrap(),
            Frac::new(1, 200)
        );
    }

    #[test]
    fn trace_examples() {
        let (data, _, _) = rotation_data(400, 3);
        let spec = data.spec().clone();
        let theta = IrsWindowSpec::trivial_subgroup(&spec, &spec.ball(6).unwrap()).unwrap();
        let full = CylinderSet::full();
        assert_eq!(
            trace_defect(&data, &full, &z(0), &theta).unwrap().value,
            0.0
        );
        let b = CylinderSet::label(z(1), BinSet::single(4, 0).unwrap());
        let t = trace_defect(&data, &b, &z(1), &theta).unwrap();
        assert_eq!((t.empirical, t.target), (Frac::from(0), 0.0));
        // zero bits: μ(y(1)=0) = 1 under the trivial subgroup
        let t = trace_defect(&data, &CylinderSet::bit(z(1), false), &z(0), &theta).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn report_passes_and_flags_corruption() {
        let (data, atoms, els) = rotation_data(10_000, 5);
        let spec = data.spec().clone();
        let theta = IrsWindowSpec::trivial_subgroup(&spec, &spec.ball(6).unwrap()).unwrap();
        let tol = RelationTolerances::uniform(0.05);
        let rep = full_report(&data, &atoms, &els, &theta, &tol).unwrap();
        assert!(
            rep.pass,
            "{:?}",
            rep.rows
                .iter()
                .filter(|r| !r.pass)
                .take(3)
                .collect::<Vec<_>>()
        );
        assert!(rep.closure_violations.is_empty());

        let mut bad = data.clone();
        let b = CylinderSet::bit(z(0), true)
            .intersect(&CylinderSet::label(z(0), BinSet::single(4, 1).unwrap()))
            .unwrap();
        let corrupted = PointSet::from_predicate(10_000, |j| j % 10 == 0);
        bad.set_rho(&b, corrupted).unwrap();
        let rep = full_report(&bad, &atoms, &els, &theta, &tol).unwrap();
        assert!(!rep.pass);

        let sigma = data.sigma().clone();
        let empty = SoficApproxData::new(sigma, vec![], vec![]).unwrap();
        let rep = full_report(&empty, &[], &[], &theta, &tol).unwrap();
        assert!(rep.pass && !rep.warnings.is_empty());
    }

    #[test]
    fn missing_translates_are_enumerated() {
        let (data, atoms, els) = rotation_data(100, 1);
        let spec = data.spec().clone();
        let two = vec![spec.identity(), z(2)];
        let theta = IrsWindowSpec::trivial_subgroup(&spec, &spec.ball(6).unwrap()).unwrap();
        let rep = full_report(
            &data,
            &atoms,
            &two,
            &theta,
            &RelationTolerances::uniform(1.0),
        )
        .unwrap();
        assert!(!rep.closure_violations.is_empty() && !rep.pass);
        let _ = els;
    }

    #[test]
    fn perturbed_equivariance_within_composition_mass() {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(2).unwrap();
        let sigma =
            ApproxHom::from_action(&spec, &ActionSpec::Torus { moduli: vec![1000] }, 1000, &w)
                .unwrap()
                .perturb(0.05, 3)
                .unwrap();
        let els: Vec<Element> = spec.ball(1).unwrap().elements().to_vec();
        let atoms = atoms(w.elements(), w.elements(), 4).unwrap();
        let fam = close_family(&spec, &atoms, &els).unwrap();
        let data = export_relation_data(&sigma, &sample_labels(1000, 9), &fam).unwrap();
        for a in &atoms {
            for g in &els {
                let e = equivariance_defect(&data, a, g).unwrap();
                assert!(e.value <= e.composition_mass, "{a} {g}: {e:?}");
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let (data, atoms, _) = rotation_data(100, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        data.save(&path).unwrap();
        let back = SoficApproxData::load(&path).unwrap();
        for a in &atoms {
            assert_eq!(back.rho(a).unwrap(), data.rho(a).unwrap());
        }
    }
}
