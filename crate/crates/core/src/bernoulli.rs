//! Cylinder functions, the labelled microstate map and exact oracles for the
//! IRS-Bernoulli measure.
//!
//! A point `j` with labels `x ∈ [0,1]^d` is sent to
//! `φ_x(j)(g) = ([σ(g) j = j], x(σ(g)^-1 j))`. Cylinder functions
//! `f = (⊗_{g∈E} f_g) 𝓔_F` are integrated against `(φ_x)_*(u_d)` directly,
//! against its expectation over `x` in closed form, and against `μ_Θ` through
//! the coset-product formula.

use serde::{Deserialize, Serialize};

use crate::approx::ApproxHom;
use crate::group::{validate_closure, ClosureRequirement, Element, GroupSpec, Window};
use crate::irs::{IrsWindowSpec, Pattern, PatternMeasure};
use crate::perm::{count_where, Permutation};
use crate::relation::{CylinderSet, PointSet, SoficApproxData};
use crate::sum::{exact_sum, par_sum, ExactSum};
use crate::{frac_to_f64, rng, Error, Result};

/// Largest common grid used to integrate products of step functions.
pub const GRID_CAP: usize = 1 << 16;

/// Nonnegative function constant on each bin `[i/m, (i+1)/m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StepFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for StepFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<StepFunction> for Vec<f64> {
    fn from(f: StepFunction) -> Self {
        f.values
    }
}

impl StepFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "a step function needs at least one bin".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "step values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![c])
    }

    /// Indicator of `[lo, hi)` on a grid of `m` bins; endpoints must be bin edges.
    pub fn indicator(m: usize, lo_bin: usize, hi_bin: usize) -> Result<Self> {
        Self::new(
            (0..m)
                .map(|i| {
                    if (lo_bin..hi_bin).contains(&i) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    /// Indicator of a union of bins given as a bit mask.
    pub fn bin_indicator(m: usize, mask: u64) -> Result<Self> {
        Self::new(
            (0..m)
                .map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn bin_of(&self, x: f64) -> usize {
        bin_of(x, self.values.len())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.bin_of(x)]
    }

    pub fn integral(&self) -> f64 {
        exact_sum(&self.values) / self.values.len() as f64
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn bin_of(x: f64, m: usize) -> usize {
    ((x * m as f64) as usize).min(m - 1)
}

/// `f = (⊗_{g∈E} f_g) 𝓔_F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunction {
    pub labels: Vec<(Element, StepFunction)>,
    pub bits: Vec<Element>,
}

impl CylinderFunction {
    pub fn new(labels: Vec<(Element, StepFunction)>, bits: Vec<Element>) -> Result<Self> {
        if labels.len() > 64 {
            return Err(Error::InvalidParameter(
                "at most 64 label coordinates are supported".into(),
            ));
        }
        for (i, (g, _)) in labels.iter().enumerate() {
            if labels[..i].iter().any(|(h, _)| h == g) {
                return Err(Error::InvalidParameter(format!(
                    "label coordinate {g} repeated"
                )));
            }
        }
        Ok(Self { labels, bits })
    }

    /// Label window `E`.
    pub fn label_elements(&self) -> Vec<Element> {
        self.labels.iter().map(|(g, _)| g.clone()).collect()
    }

    /// `sup |f| = Π sup f_g`.
    pub fn sup(&self) -> f64 {
        self.labels.iter().map(|(_, f)| f.sup()).product()
    }

    /// `Π_g max_k sup f_k`, an upper bound for `Φ_f` on arbitrary patterns.
    pub fn phi_bound(&self) -> f64 {
        let m = self.labels.iter().map(|(_, f)| f.sup()).fold(0.0, f64::max);
        m.powi(self.labels.len() as i32)
    }

    fn check(&self, spec: &GroupSpec) -> Result<()> {
        for (g, _) in &self.labels {
            spec.check(g)?;
        }
        for b in &self.bits {
            spec.check(b)?;
        }
        Ok(())
    }
}

/// Integrals of products of the label functions on a common grid.
struct Integrator {
    grid: usize,
    /// `table[g][i]`: value of `f_g` on grid cell `i`.
    table: Vec<Vec<f64>>,
}

impl Integrator {
    fn new(f: &CylinderFunction) -> Result<Self> {
        let mut grid = 1usize;
        for (_, s) in &f.labels {
            grid = lcm(grid, s.bins());
            if grid > GRID_CAP {
                return Err(Error::InvalidParameter(format!(
                    "common bin grid exceeds {GRID_CAP}"
                )));
            }
        }
        let table = f
            .labels
            .iter()
            .map(|(_, s)| (0..grid).map(|i| s.values[i * s.bins() / grid]).collect())
            .collect();
        Ok(Self { grid, table })
    }

    /// `∫ Π_{g∈a} f_g Π_{h∈b} f_h dm` for bit masks `a`, `b` over label indices.
    fn integral(&self, a: u64, b: u64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid {
            let mut p = 1.0;
            for (g, col) in self.table.iter().enumerate() {
                if a >> g & 1 == 1 {
                    p *= col[i];
                }
                if b >> g & 1 == 1 {
                    p *= col[i];
                }
            }
            total += p;
        }
        total / self.grid as f64
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Classes of `E` under `g ~ k ⟺ y(g k^-1) = 1`, as masks; `None` if the
/// relation is not an equivalence (or a product leaves the window).
fn coset_classes(
    spec: &GroupSpec,
    window: &Window,
    e: &[Element],
    y: &Pattern,
) -> Result<Vec<u64>> {
    let rel = relation_matrix(spec, window, e, y)?;
    let n = e.len();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for g in 0..n {
        if assigned[g] {
            continue;
        }
        let mask = rel[g];
        for k in 0..n {
            if mask >> k & 1 == 1 {
                if assigned[k] || rel[k] != mask {
                    return Err(Error::InconsistentPattern(format!(
                        "{y}: coset relation on the label window is not an equivalence"
                    )));
                }
                assigned[k] = true;
            }
        }
        classes.push(mask);
    }
    Ok(classes)
}

/// `rel[g]` = mask of `k ∈ E` with `y(g k^-1) = 1`.
fn relation_matrix(
    spec: &GroupSpec,
    window: &Window,
    e: &[Element],
    y: &Pattern,
) -> Result<Vec<u64>> {
    let mut rel = vec![0u64; e.len()];
    for (g, eg) in e.iter().enumerate() {
        for (k, ek) in e.iter().enumerate() {
            let p = spec.multiply(eg, &spec.inverse(ek)?)?;
            let i = window
                .index_of(&p)
                .ok_or(Error::ClosureViolation { missing: vec![p] })?;
            if y.get(i) {
                rel[g] |= 1 << k;
            }
        }
    }
    Ok(rel)
}

fn require_closure(spec: &GroupSpec, window: &Window, f: &CylinderFunction) -> Result<()> {
    let rep = validate_closure(
        spec,
        window,
        &ClosureRequirement::DifferenceSet(f.label_elements()),
    )?;
    let mut missing = rep.missing;
    for b in &f.bits {
        if !window.contains(b) && !missing.contains(b) {
            missing.push(b.clone());
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::ClosureViolation { missing })
    }
}

/// Mass of the coset-product factor `𝓔_F(y) Π_{c} ∫ Π_{g∈c} f_g`.
fn coset_factor(
    spec: &GroupSpec,
    window: &Window,
    f: &CylinderFunction,
    integ: &Integrator,
    y: &Pattern,
) -> Result<f64> {
    let bits = window.indices_of(&f.bits)?;
    if !y.all(&bits) {
        return Ok(0.0);
    }
    let e = f.label_elements();
    Ok(coset_classes(spec, window, &e, y)?
        .iter()
        .map(|&c| integ.integral(c, 0))
        .product())
}

/// `μ_Θ(f) = Σ_y Θ(y) 𝓔_F(y) Π_{classes c} ∫ Π_{g∈c} f_g dm`.
pub fn mu_theta(f: &CylinderFunction, theta: &IrsWindowSpec) -> Result<f64> {
    let spec = theta.spec();
    f.check(spec)?;
    require_closure(spec, theta.window(), f)?;
    let integ = Integrator::new(f)?;
    let mut acc = ExactSum::new();
    for (y, w) in theta.entries() {
        acc.add(w * coset_factor(spec, theta.window(), f, &integ, y)?);
    }
    Ok(acc.value())
}

/// The coset-product factor of `μ_Θ` for a single subgroup-consistent pattern.
pub fn coset_product(
    spec: &GroupSpec,
    window: &Window,
    y: &Pattern,
    f: &CylinderFunction,
) -> Result<f64> {
    f.check(spec)?;
    require_closure(spec, window, f)?;
    coset_factor(spec, window, f, &Integrator::new(f)?, y)
}

/// `Φ_f(y) = 𝓔_F(y) Π_{g∈E} (∫ Π_{k: y(g k^-1)=1} f_k)^{1/|{a: y(g a^-1)=1}|}`,
/// defined for any pattern on a window containing `E E^-1 ∪ F`.
pub fn phi_f(spec: &GroupSpec, window: &Window, y: &Pattern, f: &CylinderFunction) -> Result<f64> {
    f.check(spec)?;
    require_closure(spec, window, f)?;
    phi_with(spec, window, f, &Integrator::new(f)?, y)
}

fn phi_with(
    spec: &GroupSpec,
    window: &Window,
    f: &CylinderFunction,
    integ: &Integrator,
    y: &Pattern,
) -> Result<f64> {
    let bits = window.indices_of(&f.bits)?;
    if !y.all(&bits) {
        return Ok(0.0);
    }
    let rel = relation_matrix(spec, window, &f.label_elements(), y)?;
    Ok(rel
        .iter()
        .map(|&m| {
            let n = m.count_ones();
            let v = integ.integral(m, 0);
            if n == 1 {
                v
            } else {
                v.powf(1.0 / n as f64)
            }
        })
        .product())
}

/// `∫ Φ_f dμ` for an arbitrary pattern measure (e.g. an empirical IRS that is
/// not subgroup-consistent).
pub fn phi_integral(spec: &GroupSpec, mu: &PatternMeasure, f: &CylinderFunction) -> Result<f64> {
    f.check(spec)?;
    require_closure(spec, mu.window(), f)?;
    let integ = Integrator::new(f)?;
    let mut acc = ExactSum::new();
    for (y, m) in mu.entries() {
        acc.add(frac_to_f64(m) * phi_with(spec, mu.window(), f, &integ, y)?);
    }
    Ok(acc.value())
}

/// Labels `x(0), .., x(d-1)`, reproducible from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub seed: u64,
    pub values: Vec<f64>,
}

impl Labels {
    pub fn degree(&self) -> usize {
        self.values.len()
    }

    /// Number of coordinates sharing a value with another coordinate.
    pub fn tie_count(&self) -> usize {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let mut ties = 0;
        let mut i = 0;
        while i < v.len() {
            let mut k = i + 1;
            while k < v.len() && v[k] == v[i] {
                k += 1;
            }
            if k - i > 1 {
                ties += k - i;
            }
            i = k;
        }
        ties
    }
}

/// Label `j` is the `j`-th output of a counter-based stream keyed by `seed`.
pub fn sample_labels(d: usize, seed: u64) -> Labels {
    Labels {
        seed,
        values: rng::uniforms(seed, d),
    }
}

/// Evaluated images needed to read `φ_x` on a window.
pub struct Microstate<'a> {
    window: Vec<Element>,
    images: Vec<Permutation>,
    inverses: Vec<Permutation>,
    labels: &'a Labels,
}

impl<'a> Microstate<'a> {
    pub fn new(sigma: &ApproxHom, labels: &'a Labels, window: &[Element]) -> Result<Self> {
        if labels.degree() != sigma.degree() {
            return Err(Error::DegreeMismatch(sigma.degree(), labels.degree()));
        }
        let images: Vec<Permutation> = sigma
            .evaluate_many(window)?
            .into_iter()
            .map(|c| c.into_owned())
            .collect();
        let inverses = images.iter().map(Permutation::inverse).collect();
        Ok(Self {
            window: window.to_vec(),
            images,
            inverses,
            labels,
        })
    }

    pub fn window(&self) -> &[Element] {
        &self.window
    }

    /// `φ_x(j)(g_i) = ([σ(g_i) j = j], x(σ(g_i)^-1 j))`.
    pub fn get(&self, j: usize, i: usize) -> (bool, f64) {
        (
            self.images[i].apply(j) == j,
            self.labels.values[self.inverses[i].apply(j)],
        )
    }
}

/// Per-`f` evaluation data: inverse label images and bit images.
struct Prepared {
    d: usize,
    label_inv: Vec<Permutation>,
    bit_imgs: Vec<Permutation>,
    integ: Integrator,
}

impl Prepared {
    fn new(sigma: &ApproxHom, f: &CylinderFunction) -> Result<Self> {
        f.check(sigma.spec())?;
        let e = f.label_elements();
        let label_inv = sigma
            .evaluate_many(&e)?
            .iter()
            .map(|p| p.inverse())
            .collect();
        let bit_imgs = sigma
            .evaluate_many(&f.bits)?
            .into_iter()
            .map(|c| c.into_owned())
            .collect();
        Ok(Self {
            d: sigma.degree(),
            label_inv,
            bit_imgs,
            integ: Integrator::new(f)?,
        })
    }

    #[inline]
    fn fixed(&self, j: usize) -> bool {
        self.bit_imgs.iter().all(|p| p.apply(j) == j)
    }

    /// Preimages `σ(g)^-1 j` for `g ∈ E`.
    #[inline]
    fn preimages(&self, j: usize) -> Vec<usize> {
        self.label_inv.iter().map(|p| p.apply(j)).collect()
    }

    /// `Ψ(j) = Π_{distinct s} ∫ Π_{g: σ(g)^-1 j = s} f_g`.
    fn psi(&self, pre: &[usize]) -> f64 {
        group_by_point(pre)
            .iter()
            .map(|&(_, m)| self.integ.integral(m, 0))
            .product()
    }
}

/// Groups label indices by point, in order of first appearance.
fn group_by_point(pre: &[usize]) -> Vec<(usize, u64)> {
    let mut out: Vec<(usize, u64)> = Vec::with_capacity(pre.len());
    for (g, &s) in pre.iter().enumerate() {
        match out.iter_mut().find(|(t, _)| *t == s) {
            Some((_, m)) => *m |= 1 << g,
            None => out.push((s, 1 << g)),
        }
    }
    out
}

/// `(φ_x)_*(u_d)(f) = (1/d) Σ_j 𝓔_F(φ_x(j)) Π_g f_g(x(σ(g)^-1 j))`.
pub fn pushforward(sigma: &ApproxHom, x: &Labels, f: &CylinderFunction) -> Result<f64> {
    if x.degree() != sigma.degree() {
        return Err(Error::DegreeMismatch(sigma.degree(), x.degree()));
    }
    let prep = Prepared::new(sigma, f)?;
    Ok(pushforward_prepared(&prep, x, f))
}

fn pushforward_prepared(prep: &Prepared, x: &Labels, f: &CylinderFunction) -> f64 {
    let total = par_sum(prep.d, |j| {
        if !prep.fixed(j) {
            return 0.0;
        }
        let mut p = 1.0;
        for ((_, s), inv) in f.labels.iter().zip(&prep.label_inv) {
            p *= s.eval(x.values[inv.apply(j)]);
        }
        p
    });
    total / prep.d as f64
}

/// `J = ∫ (φ_x)_*(u_d)(f) dx`, evaluated exactly point by point.
pub fn exact_mean(sigma: &ApproxHom, f: &CylinderFunction) -> Result<f64> {
    let prep = Prepared::new(sigma, f)?;
    Ok(exact_mean_prepared(&prep))
}

fn exact_mean_prepared(prep: &Prepared) -> f64 {
    par_sum(prep.d, |j| {
        if prep.fixed(j) {
            prep.psi(&prep.preimages(j))
        } else {
            0.0
        }
    }) / prep.d as f64
}

/// `Var_x (φ_x)_*(u_d)(f)`, summing covariances over pairs `(j, k)` whose
/// preimage sets overlap; disjoint pairs are independent.
pub fn exact_variance(sigma: &ApproxHom, f: &CylinderFunction) -> Result<f64> {
    let prep = Prepared::new(sigma, f)?;
    let images: Vec<Permutation> = prep.label_inv.iter().map(Permutation::inverse).collect();
    Ok(exact_variance_prepared(&prep, &images))
}

fn exact_variance_prepared(prep: &Prepared, images: &[Permutation]) -> f64 {
    if images.is_empty() {
        return 0.0;
    }
    let total = par_sum(prep.d, |j| {
        if !prep.fixed(j) {
            return 0.0;
        }
        let pre_j = prep.preimages(j);
        let classes_j = group_by_point(&pre_j);
        let psi_j: f64 = classes_j
            .iter()
            .map(|&(_, m)| prep.integ.integral(m, 0))
            .product();
        let mut ks: Vec<usize> = Vec::with_capacity(pre_j.len() * images.len());
        for &s in &pre_j {
            for img in images {
                ks.push(img.apply(s));
            }
        }
        ks.sort_unstable();
        ks.dedup();
        let mut acc = 0.0;
        for k in ks {
            if !prep.fixed(k) {
                continue;
            }
            let pre_k = prep.preimages(k);
            let classes_k = group_by_point(&pre_k);
            let psi_k: f64 = classes_k
                .iter()
                .map(|&(_, m)| prep.integ.integral(m, 0))
                .product();
            // joint classes: points carrying factors from j, from k, or both
            let mut joint: Vec<(usize, u64, u64)> =
                classes_j.iter().map(|&(s, m)| (s, m, 0)).collect();
            for &(s, m) in &classes_k {
                match joint.iter_mut().find(|(t, _, _)| *t == s) {
                    Some((_, _, b)) => *b = m,
                    None => joint.push((s, 0, m)),
                }
            }
            let mut e_jk = 1.0;
            for (_, a, b) in joint {
                e_jk *= if a <= b {
                    prep.integ.integral(a, b)
                } else {
                    prep.integ.integral(b, a)
                };
            }
            acc += e_jk - psi_j * psi_k;
        }
        acc
    });
    total / (prep.d as f64 * prep.d as f64)
}

/// `(2/d) |E|^2 Π ‖f_g‖∞^2`.
pub fn variance_bound(d: usize, f: &CylinderFunction) -> f64 {
    let e = f.labels.len() as f64;
    2.0 / d as f64 * e * e * f.sup().powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McStats {
    pub mean: f64,
    pub variance: f64,
    /// `3 sqrt(variance / S)`.
    pub radius: f64,
    pub samples: usize,
}

/// Mean and unbiased variance of the pushforward over `samples` label draws;
/// draw `s` uses seed `derive_seed(seed, s)`.
pub fn mc_stats(
    sigma: &ApproxHom,
    f: &CylinderFunction,
    samples: usize,
    seed: u64,
) -> Result<McStats> {
    use rayon::prelude::*;
    if samples < 2 {
        return Err(Error::InvalidParameter(
            "at least two samples are required".into(),
        ));
    }
    let prep = Prepared::new(sigma, f)?;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let x = sample_labels(prep.d, rng::derive_seed(seed, s as u64));
            pushforward_prepared(&prep, &x, f)
        })
        .collect();
    let mean = exact_sum(&values) / samples as f64;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = exact_sum(&sq) / (samples - 1) as f64;
    Ok(McStats {
        mean,
        variance,
        radius: 3.0 * (variance / samples as f64).sqrt(),
        samples,
    })
}

/// `α_g(f) = (⊗_{h∈E} f_h(x(g h))) 𝓔_{g F g^-1}`: label `gh` carries `f_h`.
/// With a window, `gE` and `gFg^-1` must lie in it.
pub fn translate_cylinder(
    spec: &GroupSpec,
    f: &CylinderFunction,
    g: &Element,
    window: Option<&Window>,
) -> Result<CylinderFunction> {
    let labels: Vec<(Element, StepFunction)> = f
        .labels
        .iter()
        .map(|(h, s)| Ok((spec.multiply(g, h)?, s.clone())))
        .collect::<Result<_>>()?;
    let bits: Vec<Element> = f
        .bits
        .iter()
        .map(|b| spec.conjugate(g, b))
        .collect::<Result<_>>()?;
    if let Some(w) = window {
        let missing: Vec<Element> = labels
            .iter()
            .map(|(h, _)| h)
            .chain(&bits)
            .filter(|h| !w.contains(h))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::ClosureViolation { missing });
        }
    }
    CylinderFunction::new(labels, bits)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivarianceDefect {
    /// `‖f∘φ_x∘σ(g)^-1 − α_g(f)∘φ_x‖_{ℓ²(u_d)}`.
    pub value: f64,
    /// `2 C sqrt(u_d(M))`.
    pub bound: f64,
    /// `u_d(M)`: points where a coordinate of the two sides comes from disagreeing compositions.
    pub bad_mass: f64,
    pub holds: bool,
}

pub fn equivariance_defect(
    sigma: &ApproxHom,
    x: &Labels,
    f: &CylinderFunction,
    g: &Element,
) -> Result<EquivarianceDefect> {
    let spec = sigma.spec();
    let d = sigma.degree();
    if x.degree() != d {
        return Err(Error::DegreeMismatch(d, x.degree()));
    }
    let tf = translate_cylinder(spec, f, g, None)?;
    let inv = |els: &[Element]| -> Result<Vec<Permutation>> {
        Ok(sigma
            .evaluate_many(els)?
            .iter()
            .map(|p| p.inverse())
            .collect())
    };
    let g_img = sigma.evaluate(g)?.into_owned();
    let g_inv = g_img.inverse();
    let h_inv = inv(&f.label_elements())?;
    let gh_inv = inv(&tf.label_elements())?;
    let b_imgs: Vec<Permutation> = sigma
        .evaluate_many(&f.bits)?
        .into_iter()
        .map(|c| c.into_owned())
        .collect();
    let gbg_imgs: Vec<Permutation> = sigma
        .evaluate_many(&tf.bits)?
        .into_iter()
        .map(|c| c.into_owned())
        .collect();
    let steps: Vec<&StepFunction> = f.labels.iter().map(|(_, s)| s).collect();

    let sq = par_sum(d, |j| {
        let i = g_inv.apply(j);
        let mut lhs = if b_imgs.iter().all(|p| p.apply(i) == i) {
            1.0
        } else {
            0.0
        };
        let mut rhs = if gbg_imgs.iter().all(|p| p.apply(j) == j) {
            1.0
        } else {
            0.0
        };
        for (k, s) in steps.iter().enumerate() {
            lhs *= s.eval(x.values[h_inv[k].apply(i)]);
            rhs *= s.eval(x.values[gh_inv[k].apply(j)]);
        }
        (lhs - rhs) * (lhs - rhs)
    });
    let bad = count_where(d, |j| {
        let i = g_inv.apply(j);
        (0..steps.len()).any(|k| gh_inv[k].apply(j) != h_inv[k].apply(i))
            || b_imgs
                .iter()
                .zip(&gbg_imgs)
                .any(|(b, c)| g_img.apply(b.apply(i)) != c.apply(j))
    });
    let value = (sq / d as f64).sqrt();
    let bad_mass = bad as f64 / d as f64;
    let bound = 2.0 * f.sup().max(if f.labels.is_empty() { 1.0 } else { 0.0 }) * bad_mass.sqrt();
    Ok(EquivarianceDefect {
        value,
        bound,
        bad_mass,
        holds: value <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodSample {
    pub labels: Labels,
    pub tries: usize,
    pub residuals: Vec<f64>,
    pub total_residual: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Chebyshev bound `(Σ_f sqrt(Var_f))² / tol²` on the failure probability of one try.
    pub failure_bound: f64,
    pub ties: usize,
}

/// Draws labels until `Σ_f |pushforward − exact_mean| < tol`; try `t` uses
/// seed `derive_seed(seed, t)`.
pub fn select_good_sample(
    sigma: &ApproxHom,
    fs: &[CylinderFunction],
    tol: f64,
    max_tries: usize,
    seed: u64,
) -> Result<GoodSample> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let preps: Vec<Prepared> = fs
        .iter()
        .map(|f| Prepared::new(sigma, f))
        .collect::<Result<_>>()?;
    let means: Vec<f64> = preps.iter().map(exact_mean_prepared).collect();
    let variances: Vec<f64> = preps
        .iter()
        .map(|p| {
            let images: Vec<Permutation> = p.label_inv.iter().map(Permutation::inverse).collect();
            exact_variance_prepared(p, &images)
        })
        .collect();
    let root_sum: f64 = variances.iter().map(|v| v.max(0.0).sqrt()).sum();
    let failure_bound = (root_sum * root_sum / (tol * tol)).min(1.0);
    let mut best = f64::INFINITY;
    for t in 0..max_tries {
        let x = sample_labels(sigma.degree(), rng::derive_seed(seed, t as u64));
        let residuals: Vec<f64> = preps
            .iter()
            .zip(fs)
            .zip(&means)
            .map(|((p, f), m)| (pushforward_prepared(p, &x, f) - m).abs())
            .collect();
        let total_residual = exact_sum(&residuals);
        if total_residual < tol {
            let ties = x.tie_count();
            return Ok(GoodSample {
                labels: x,
                tries: t + 1,
                residuals,
                total_residual,
                means,
                variances,
                failure_bound,
                ties,
            });
        }
        best = best.min(total_residual);
    }
    Err(Error::MaxTriesExhausted {
        tries: max_tries,
        best_residual: best,
        tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteScaleSlack {
    /// `u_d(ς_F \ Ω)`: `F`-fixed points where some `σ(g)σ(k)^-1` and `σ(g k^-1)`
    /// disagree about fixing the point, for `g, k ∈ E`.
    pub bad_mass: f64,
    pub sup: f64,
    pub phi_bound: f64,
    /// `bad_mass · (sup + phi_bound)`.
    pub value: f64,
}

/// Bound on `|exact_mean(σ, f) − ∫ Φ_f dΘ_σ|` with `Θ_σ` the empirical IRS of `σ`:
/// off the bad set the per-point factor equals `Φ_f` of the point's pattern.
pub fn finite_scale_slack(sigma: &ApproxHom, f: &CylinderFunction) -> Result<FiniteScaleSlack> {
    let spec = sigma.spec();
    let e = f.label_elements();
    let prep = Prepared::new(sigma, f)?;
    let imgs: Vec<Permutation> = sigma
        .evaluate_many(&e)?
        .into_iter()
        .map(|c| c.into_owned())
        .collect();
    let mut diffs = Vec::with_capacity(e.len() * e.len());
    for (g, eg) in e.iter().enumerate() {
        for (k, ek) in e.iter().enumerate() {
            let p = spec.multiply(eg, &spec.inverse(ek)?)?;
            diffs.push((g, k, sigma.evaluate(&p)?.into_owned()));
        }
    }
    let bad = count_where(sigma.degree(), |j| {
        prep.fixed(j)
            && diffs.iter().any(|(g, k, p)| {
                let composed = imgs[*g].apply(prep.label_inv[*k].apply(j)) == j;
                composed != (p.apply(j) == j)
            })
    });
    let bad_mass = bad as f64 / sigma.degree() as f64;
    let (sup, phi_bound) = (
        f.sup(),
        f.phi_bound().max(if e.is_empty() { 1.0 } else { 0.0 }),
    );
    Ok(FiniteScaleSlack {
        bad_mass,
        sup,
        phi_bound,
        value: bad_mass * (sup + phi_bound),
    })
}

/// `ρ(B) = {j : φ_x(j) ∈ B}` for every set of the family, plus `σ`.
pub fn export_relation_data(
    sigma: &ApproxHom,
    x: &Labels,
    family: &[CylinderSet],
) -> Result<SoficApproxData> {
    let d = sigma.degree();
    if x.degree() != d {
        return Err(Error::DegreeMismatch(d, x.degree()));
    }
    let rho = family
        .iter()
        .map(|b| rho_of(sigma, x, b))
        .collect::<Result<Vec<_>>>()?;
    SoficApproxData::new(sigma.clone(), family.to_vec(), rho)
}

/// Preimage of one cylinder set under `φ_x`.
pub fn rho_of(sigma: &ApproxHom, x: &Labels, b: &CylinderSet) -> Result<PointSet> {
    let d = sigma.degree();
    if b.is_contradictory() {
        return Ok(PointSet::empty(d));
    }
    let bit_els: Vec<Element> = b.bits().keys().cloned().collect();
    let bit_vals: Vec<bool> = b.bits().values().copied().collect();
    let bit_imgs = sigma.evaluate_many(&bit_els)?;
    let lab_els: Vec<Element> = b.labels().keys().cloned().collect();
    let lab_sets: Vec<_> = b.labels().values().copied().collect();
    let lab_inv: Vec<Permutation> = sigma
        .evaluate_many(&lab_els)?
        .iter()
        .map(|p| p.inverse())
        .collect();
    Ok(PointSet::from_predicate(d, |j| {
        bit_imgs
            .iter()
            .zip(&bit_vals)
            .all(|(p, &v)| (p.apply(j) == j) == v)
            && lab_inv
                .iter()
                .zip(&lab_sets)
                .all(|(p, s)| s.contains_value(x.values[p.apply(j)]))
    }))
}

/// Deterministic test family over the generators of `spec` with `m` bins.
pub fn standard_family(spec: &GroupSpec, m: usize) -> Result<Vec<CylinderFunction>> {
    let e = spec.identity();
    let gens = spec.generators();
    let s = gens.first().cloned().unwrap_or_else(|| e.clone());
    let s_inv = spec.inverse(&s)?;
    let ramp = StepFunction::new((0..m).map(|i| (i as f64 + 0.5) / m as f64).collect())?;
    let half = StepFunction::indicator(m, 0, m / 2)?;
    let middle = StepFunction::indicator(m, m / 4, 3 * m / 4)?;
    let bump = StepFunction::new(
        (0..m)
            .map(|i| 1.0 + ((i * 7) % m) as f64 / m as f64)
            .collect(),
    )?;
    let mut fam = vec![
        CylinderFunction::new(vec![(e.clone(), half.clone())], vec![])?,
        CylinderFunction::new(
            vec![(e.clone(), ramp.clone()), (s.clone(), middle.clone())],
            vec![],
        )?,
        CylinderFunction::new(
            vec![(s.clone(), bump.clone()), (s_inv.clone(), half.clone())],
            vec![e.clone()],
        )?,
    ];
    let mut ball: Vec<(Element, StepFunction)> = vec![(e.clone(), ramp.clone())];
    for (i, g) in gens.iter().enumerate() {
        let f = match i % 3 {
            0 => middle.clone(),
            1 => bump.clone(),
            _ => half.clone(),
        };
        if s != e {
            ball.push((g.clone(), f));
        }
    }
    fam.push(CylinderFunction::new(ball, vec![])?);
    Ok(fam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ActionSpec;
    use crate::irs::empirical_irs;

    fn z(v: i64) -> Element {
        Element::Lattice(vec![v])
    }

    fn rotation(n: usize) -> ApproxHom {
        let spec = GroupSpec::lattice(1);
        ApproxHom::from_action(
            &spec,
            &ActionSpec::Torus {
                moduli: vec![n as u64],
            },
            n,
            &spec.ball(3).unwrap(),
        )
        .unwrap()
    }

    fn half() -> StepFunction {
        StepFunction::indicator(16, 0, 8).unwrap()
    }

    #[test]
    fn step_function_basics() {
        let f = StepFunction::new(vec![0.0, 2.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.integral(), 1.0);
        assert_eq!(f.sup(), 2.0);
        assert_eq!(f.eval(0.3), 2.0);
        assert_eq!(f.eval(1.0), 1.0);
        assert!(StepFunction::new(vec![-1.0]).is_err());
    }

    #[test]
    fn mu_theta_examples() {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(4).unwrap();
        let trivial = IrsWindowSpec::trivial_subgroup(&spec, &w).unwrap();
        let f = CylinderFunction::new(vec![(z(0), half()), (z(2), half())], vec![]).unwrap();
        assert!((mu_theta(&f, &trivial).unwrap() - 0.25).abs() < 1e-15);
        let even = IrsWindowSpec::subgroup_pattern(
            &w,
            |g| matches!(g, Element::Lattice(v) if v[0] % 2 == 0),
        );
        let theta = IrsWindowSpec::point_mass(&spec, &w, even).unwrap();
        assert!((mu_theta(&f, &theta).unwrap() - 0.5).abs() < 1e-15);
        let ones = CylinderFunction::new(
            vec![
                (z(0), StepFunction::constant(1.0).unwrap()),
                (z(1), StepFunction::constant(1.0).unwrap()),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(mu_theta(&ones, &theta).unwrap(), 1.0);
        // closure: E E^-1 = {0, ±2} needs radius 2, bits need their own element
        let small = spec.ball(1).unwrap();
        let t1 = IrsWindowSpec::trivial_subgroup(&spec, &small).unwrap();
        assert!(matches!(
            mu_theta(&f, &t1),
            Err(Error::ClosureViolation { .. })
        ));
    }

    #[test]
    fn phi_matches_coset_product() {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(4).unwrap();
        let f = CylinderFunction::new(
            vec![
                (z(0), half()),
                (z(1), StepFunction::new(vec![0.2, 1.5, 0.7]).unwrap()),
                (z(2), StepFunction::new(vec![1.0, 3.0]).unwrap()),
            ],
            vec![z(0)],
        )
        .unwrap();
        for m in [1i64, 2, 3, 5] {
            let y = IrsWindowSpec::subgroup_pattern(
                &w,
                |g| matches!(g, Element::Lattice(v) if v[0] % m == 0),
            );
            let a = phi_f(&spec, &w, &y, &f).unwrap();
            let b = coset_product(&spec, &w, &y, &f).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * b.abs().max(1e-300),
                "m={m}: {a} vs {b}"
            );
        }
        let trivial = IrsWindowSpec::subgroup_pattern(&w, |g| g.is_identity());
        let prod: f64 = f.labels.iter().map(|(_, s)| s.integral()).product();
        assert!((phi_f(&spec, &w, &trivial, &f).unwrap() - prod).abs() < 1e-15);
    }

    #[test]
    fn pushforward_examples() {
        let s = rotation(50);
        let x = sample_labels(50, 3);
        let ones =
            CylinderFunction::new(vec![(z(0), StepFunction::constant(1.0).unwrap())], vec![])
                .unwrap();
        assert_eq!(pushforward(&s, &x, &ones).unwrap(), 1.0);
        let f = CylinderFunction::new(vec![(z(0), half())], vec![z(1)]).unwrap();
        assert_eq!(pushforward(&s, &x, &f).unwrap(), 0.0);
        let spec = GroupSpec::lattice(1);
        let t = ApproxHom::from_action(
            &spec,
            &ActionSpec::Trivial { d: 1 },
            1,
            &spec.ball(1).unwrap(),
        )
        .unwrap();
        let f = CylinderFunction::new(vec![(z(0), half())], vec![]).unwrap();
        for seed in 0..20 {
            let x = sample_labels(1, seed);
            let expect = if x.values[0] < 0.5 { 1.0 } else { 0.0 };
            assert_eq!(pushforward(&t, &x, &f).unwrap(), expect);
        }
    }

    #[test]
    fn exact_mean_examples() {
        let s = rotation(40);
        let f = CylinderFunction::new(
            vec![
                (z(0), half()),
                (z(1), StepFunction::new(vec![0.5, 2.0]).unwrap()),
            ],
            vec![],
        )
        .unwrap();
        let prod: f64 = f.labels.iter().map(|(_, s)| s.integral()).product();
        assert!((exact_mean(&s, &f).unwrap() - prod).abs() < 1e-15);
        let spec = GroupSpec::lattice(1);
        let t = ApproxHom::from_action(
            &spec,
            &ActionSpec::Trivial { d: 1 },
            1,
            &spec.ball(1).unwrap(),
        )
        .unwrap();
        let g = CylinderFunction::new(vec![(z(0), half()), (z(1), half())], vec![]).unwrap();
        assert_eq!(exact_mean(&t, &g).unwrap(), 0.5);
    }

    /// Brute-force variance over all label assignments of a tiny instance,
    /// each label restricted to bin midpoints (exact for step functions).
    fn brute_variance(sigma: &ApproxHom, f: &CylinderFunction, m: usize) -> (f64, f64) {
        let d = sigma.degree();
        let total = m.pow(d as u32);
        let mut vals = Vec::with_capacity(total);
        for code in 0..total {
            let mut c = code;
            let values = (0..d)
                .map(|_| {
                    let b = c % m;
                    c /= m;
                    (b as f64 + 0.5) / m as f64
                })
                .collect();
            vals.push(pushforward(sigma, &Labels { seed: 0, values }, f).unwrap());
        }
        let mean = exact_sum(&vals) / total as f64;
        let var = exact_sum(
            &vals
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<Vec<_>>(),
        ) / total as f64;
        (mean, var)
    }

    #[test]
    fn exact_oracles_match_enumeration() {
        let spec = GroupSpec::lattice(1);
        let w = spec.ball(2).unwrap();
        let base =
            ApproxHom::from_action(&spec, &ActionSpec::Torus { moduli: vec![5] }, 5, &w).unwrap();
        let f = CylinderFunction::new(
            vec![
                (z(0), StepFunction::new(vec![0.3, 1.0, 2.0]).unwrap()),
                (z(1), StepFunction::new(vec![1.0, 0.0, 0.5]).unwrap()),
            ],
            vec![],
        )
        .unwrap();
        for sigma in [
            base.clone(),
            base.perturb(0.6, 5).unwrap(),
            base.perturb(1.0, 8).unwrap(),
        ] {
            let (m, v) = brute_variance(&sigma, &f, 3);
            assert!((exact_mean(&sigma, &f).unwrap() - m).abs() < 1e-12);
            assert!((exact_variance(&sigma, &f).unwrap() - v).abs() < 1e-12);
        }
        // bit constraints and a non-free instance
        let g = CylinderFunction::new(
            vec![(z(1), StepFunction::new(vec![0.0, 1.0, 3.0]).unwrap())],
            vec![z(2)],
        )
        .unwrap();
        let two = Permutation::from_cycles(5, &[vec![0, 1]]).unwrap();
        let sigma = ApproxHom::from_generator_images(&spec, &[two], &w).unwrap();
        let (m, v) = brute_variance(&sigma, &g, 3);
        assert!((exact_mean(&sigma, &g).unwrap() - m).abs() < 1e-12);
        assert!((exact_variance(&sigma, &g).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let s = rotation(100);
        let bits_only = CylinderFunction::new(vec![], vec![z(0)]).unwrap();
        assert_eq!(exact_variance(&s, &bits_only).unwrap(), 0.0);
        for f in standard_family(s.spec(), 16).unwrap() {
            let v = exact_variance(&s, &f).unwrap();
            assert!(v <= variance_bound(100, &f), "{v}");
            let v4 = exact_variance(&s.block_sum(4).unwrap(), &f).unwrap();
            assert_eq!(v4 * 4.0, v);
        }
    }

    #[test]
    fn mc_constant_integrand() {
        let s = rotation(20);
        let c = CylinderFunction::new(vec![], vec![]).unwrap();
        let st = mc_stats(&s, &c, 16, 1).unwrap();
        assert_eq!(st.mean, 1.0);
        assert_eq!(st.variance, 0.0);
        assert!(mc_stats(&s, &c, 1, 1).is_err());
    }

    #[test]
    fn labels_are_reproducible() {
        let a = sample_labels(10_000, 5);
        assert_eq!(a, sample_labels(10_000, 5));
        let b = sample_labels(10_000, 6);
        let differ = a
            .values
            .iter()
            .zip(&b.values)
            .filter(|(x, y)| x != y)
            .count();
        assert!(differ >= 9_900);
        assert_eq!(a.tie_count(), 0);
        let c = sample_labels(100_000, 7);
        let mean = exact_sum(&c.values) / 1e5;
        assert!((mean - 0.5).abs() <= 4.0 / (12.0f64 * 1e5).sqrt());
    }

    #[test]
    fn translation() {
        let spec = GroupSpec::lattice(1);
        let f = CylinderFunction::new(vec![(z(0), half()), (z(1), half())], vec![z(2)]).unwrap();
        assert_eq!(translate_cylinder(&spec, &f, &z(0), None).unwrap(), f);
        let t = translate_cylinder(&spec, &f, &z(3), None).unwrap();
        assert_eq!(t.bits, f.bits);
        assert_eq!(t.label_elements(), vec![z(3), z(4)]);
        assert_eq!(translate_cylinder(&spec, &t, &z(-3), None).unwrap(), f);
        assert!(translate_cylinder(&spec, &f, &z(3), Some(&spec.ball(3).unwrap())).is_err());
        let h = GroupSpec::heisenberg();
        let x = Element::Heisenberg([1, 0, 0]);
        let fy = CylinderFunction::new(vec![], vec![Element::Heisenberg([0, 1, 0])]).unwrap();
        assert_eq!(
            translate_cylinder(&h, &fy, &x, None).unwrap().bits,
            vec![Element::Heisenberg([0, 1, 1])]
        );
    }

    #[test]
    fn equivariance() {
        let s = rotation(200);
        let x = sample_labels(200, 1);
        for f in standard_family(s.spec(), 16).unwrap() {
            let e = equivariance_defect(&s, &x, &f, &z(1)).unwrap();
            assert_eq!(e.value, 0.0);
            assert_eq!(e.bad_mass, 0.0);
            let p = s.perturb(0.05, 2).unwrap();
            let e = equivariance_defect(&p, &x, &f, &z(1)).unwrap();
            assert!(e.holds, "{e:?}");
        }
        let c = CylinderFunction::new(vec![], vec![]).unwrap();
        assert_eq!(
            equivariance_defect(&s.perturb(0.3, 1).unwrap(), &x, &c, &z(1))
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn honest_mean_equals_mu_theta() {
        let s = rotation(300);
        let w = s.spec().ball(4).unwrap();
        let theta = IrsWindowSpec::from_measure(s.spec(), &empirical_irs(&s, &w).unwrap()).unwrap();
        for f in standard_family(s.spec(), 16).unwrap() {
            let a = exact_mean(&s, &f).unwrap();
            let b = mu_theta(&f, &theta).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            assert_eq!(finite_scale_slack(&s, &f).unwrap().bad_mass, 0.0);
        }
    }

    #[test]
    fn perturbed_mean_within_slack() {
        let s = rotation(500).perturb(0.05, 11).unwrap();
        let w = s.spec().ball(4).unwrap();
        let mu = empirical_irs(&s, &w).unwrap();
        for f in standard_family(s.spec(), 16).unwrap() {
            let a = exact_mean(&s, &f).unwrap();
            let b = phi_integral(s.spec(), &mu, &f).unwrap();
            let slack = finite_scale_slack(&s, &f).unwrap();
            assert!((a - b).abs() <= slack.value + 1e-12, "{a} {b} {slack:?}");
        }
    }

    #[test]
    fn good_sample_with_loose_tolerance() {
        let s = rotation(1000);
        let fam = standard_family(s.spec(), 16).unwrap();
        let tol: f64 = fam.iter().map(|f| f.sup()).sum::<f64>() + 1.0;
        let g = select_good_sample(&s, &fam, tol, 1, 9).unwrap();
        assert_eq!(g.tries, 1);
        let bits = CylinderFunction::new(vec![], vec![z(0)]).unwrap();
        let g = select_good_sample(&s, &[bits], 1e-9, 1, 9).unwrap();
        assert_eq!(g.total_residual, 0.0);
        assert!(matches!(
            select_good_sample(&s, &fam, 1e-9, 3, 1),
            Err(Error::MaxTriesExhausted { tries: 3, .. })
        ));
    }

    #[test]
    fn microstate_reads_phi() {
        let s = rotation(10);
        let x = sample_labels(10, 2);
        let ms = Microstate::new(&s, &x, &[z(0), z(1)]).unwrap();
        assert_eq!(ms.get(3, 0), (true, x.values[3]));
        assert_eq!(ms.get(3, 1), (false, x.values[2]));
    }
}
