//! Approximate homomorphisms `σ: G -> Sym(d)`.
//!
//! An [`ApproxHom`] stores one permutation per element of a window plus the
//! images of the generators. Elements outside the window are evaluated by
//! composing generator images left to right along the least geodesic word:
//! `σ(s_1 s_2 .. s_k) = σ(s_1) ∘ σ(s_2) ∘ .. ∘ σ(s_k)`.

use std::borrow::Cow;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::group::{Element, GroupKind, GroupSpec, Window, WORD_LENGTH_CAP};
use crate::perm::{count_where, hamming, ratio, Permutation};
use crate::{frac, rng, Error, Frac, Result, DEGREE_CAP};

/// Built-in constructions. `d` is implied by the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionSpec {
    /// `Z^k` translating `Z/m_1 x .. x Z/m_k`; point `x` has index `Σ x_i Π_{l<i} m_l`.
    Torus { moduli: Vec<u64> },
    /// `Z^k` on `Z/n^k` with `e_i ↦ +n^i`.
    Embedding { n: u64 },
    /// A finite abelian group acting on itself by translation.
    Regular,
    /// `H3(Z)` acting on `H3(Z/n)` by left multiplication; `d = n^3`.
    HeisenbergQuotient { n: u64 },
    /// `H3(Z)` acting on `(Z/n)^2` through `(a,b,c)·(u,v) = (u + a v + c, v + b)`; `d = n^2`.
    HeisenbergAffine { n: u64 },
    /// Arbitrary images of the primary generators (one per inverse pair),
    /// extended along geodesic words. Not a homomorphism in general.
    GeneratorImages { images: Vec<Vec<u32>> },
    /// Uniformly random primary generator images.
    RandomGenerators { d: usize, seed: u64 },
    /// Every element acts as the identity.
    Trivial { d: usize },
}

impl ActionSpec {
    pub fn degree(&self, spec: &GroupSpec) -> Result<usize> {
        let d = match (self, spec.kind()) {
            (ActionSpec::Torus { moduli }, GroupKind::Lattice { rank })
                if moduli.len() == *rank =>
            {
                checked_product(moduli.iter().copied())?
            }
            (ActionSpec::Embedding { n }, GroupKind::Lattice { rank }) => {
                checked_product(std::iter::repeat_n(*n, *rank))?
            }
            (ActionSpec::Regular, GroupKind::FiniteAbelian { moduli }) => {
                checked_product(moduli.iter().copied())?
            }
            (ActionSpec::HeisenbergQuotient { n }, GroupKind::Heisenberg) => {
                checked_product([*n, *n, *n])?
            }
            (ActionSpec::HeisenbergAffine { n }, GroupKind::Heisenberg) => {
                checked_product([*n, *n])?
            }
            (ActionSpec::GeneratorImages { images }, _) => {
                let primaries = primary_generators(spec).len();
                if images.len() != primaries {
                    return Err(Error::InvalidParameter(format!(
                        "expected {primaries} generator images, got {}",
                        images.len()
                    )));
                }
                images.first().map(Vec::len).unwrap_or(1)
            }
            (ActionSpec::RandomGenerators { d, .. } | ActionSpec::Trivial { d }, _) => *d,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "action {self:?} does not apply to {}",
                    spec.name()
                )))
            }
        };
        if d == 0 {
            return Err(Error::InvalidParameter("degree must be positive".into()));
        }
        if d > DEGREE_CAP {
            return Err(Error::DegreeCap {
                degree: d,
                cap: DEGREE_CAP,
            });
        }
        Ok(d)
    }

    /// True when the construction is an honest action of the group.
    pub fn is_honest(&self) -> bool {
        !matches!(
            self,
            ActionSpec::GeneratorImages { .. } | ActionSpec::RandomGenerators { .. }
        )
    }

    /// Direct image of `g` under an honest action.
    pub fn image(&self, spec: &GroupSpec, g: &Element) -> Result<Permutation> {
        spec.check(g)?;
        let d = self.degree(spec)?;
        let img: Vec<u32> = match (self, g) {
            (ActionSpec::Torus { moduli }, Element::Lattice(v)) => {
                let shift: Vec<u64> = v
                    .iter()
                    .zip(moduli)
                    .map(|(&x, &m)| x.rem_euclid(m as i64) as u64)
                    .collect();
                mixed_radix_translation(moduli, &shift)
            }
            (ActionSpec::Embedding { n }, Element::Lattice(v)) => {
                let modulus = d as i128;
                let mut k: i128 = 0;
                let mut place: i128 = 1;
                for &x in v {
                    k = (k + x as i128 * place).rem_euclid(modulus);
                    place *= *n as i128;
                }
                return Ok(Permutation::rotation(d, k as i64));
            }
            (ActionSpec::Regular, Element::Residues(r)) => {
                let GroupKind::FiniteAbelian { moduli } = spec.kind() else {
                    unreachable!()
                };
                mixed_radix_translation(moduli, r)
            }
            (ActionSpec::HeisenbergQuotient { n }, Element::Heisenberg([a, b, c])) => {
                let n = *n as i64;
                let (a, b, c) = (a.rem_euclid(n), b.rem_euclid(n), c.rem_euclid(n));
                (0..d as i64)
                    .map(|p| {
                        let (u, v, w) = (p % n, (p / n) % n, p / (n * n));
                        // (a,b,c)(u,v,w) = (a+u, b+v, c+w+a v)
                        let (x, y, z) = ((a + u) % n, (b + v) % n, (c + w + a * v) % n);
                        (x + n * y + n * n * z) as u32
                    })
                    .collect()
            }
            (ActionSpec::HeisenbergAffine { n }, Element::Heisenberg([a, b, c])) => {
                let n = *n as i64;
                let (a, b, c) = (a.rem_euclid(n), b.rem_euclid(n), c.rem_euclid(n));
                (0..d as i64)
                    .map(|p| {
                        let (u, v) = (p % n, p / n);
                        let (x, y) = ((u + a * v + c) % n, (v + b) % n);
                        (x + n * y) as u32
                    })
                    .collect()
            }
            (ActionSpec::Trivial { .. }, _) => return Ok(Permutation::identity(d)),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "action {self:?} has no direct image for {g}"
                )))
            }
        };
        Ok(Permutation::from_images_unchecked(img))
    }

    fn primary_images(&self, spec: &GroupSpec) -> Result<Vec<Permutation>> {
        let d = self.degree(spec)?;
        let primaries = primary_generators(spec);
        match self {
            ActionSpec::GeneratorImages { images } => images
                .iter()
                .map(|img| Permutation::from_images(img.clone()))
                .collect::<Result<_>>(),
            ActionSpec::RandomGenerators { seed, .. } => Ok((0..primaries.len())
                .map(|i| {
                    let mut img: Vec<u32> = (0..d as u32).collect();
                    img.shuffle(&mut rng::stream(rng::derive_seed(*seed, i as u64)));
                    Permutation::from_images_unchecked(img)
                })
                .collect()),
            _ => primaries
                .iter()
                .map(|&s| self.image(spec, &spec.generators()[s]))
                .collect(),
        }
    }
}

fn checked_product(xs: impl IntoIterator<Item = u64>) -> Result<usize> {
    let mut acc: u128 = 1;
    for x in xs {
        if x == 0 {
            return Err(Error::InvalidParameter("moduli must be positive".into()));
        }
        acc = acc.saturating_mul(x as u128);
    }
    if acc > DEGREE_CAP as u128 {
        return Err(Error::DegreeCap {
            degree: acc.min(usize::MAX as u128) as usize,
            cap: DEGREE_CAP,
        });
    }
    Ok(acc as usize)
}

fn mixed_radix_translation(moduli: &[u64], shift: &[u64]) -> Vec<u32> {
    let d: u64 = moduli.iter().product();
    (0..d)
        .map(|p| {
            let (mut rest, mut out, mut place) = (p, 0u64, 1u64);
            for (&m, &s) in moduli.iter().zip(shift) {
                out += ((rest % m + s) % m) * place;
                rest /= m;
                place *= m;
            }
            out as u32
        })
        .collect()
}

/// Generator indices with one representative per inverse pair, in generator order.
pub fn primary_generators(spec: &GroupSpec) -> Vec<usize> {
    let gens = spec.generators();
    let mut out = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        let inv = spec.inverse(g).expect("generators belong to the group");
        if !gens[..i].contains(&inv) {
            out.push(i);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxHom {
    spec: GroupSpec,
    degree: usize,
    window: Window,
    /// Window images first, then images of generators outside the window.
    images: Vec<Permutation>,
    /// Slot in `images` of each generator.
    gen_slot: Vec<usize>,
    length_cap: usize,
    honest: bool,
    description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectEntry {
    pub g: Element,
    pub h: Element,
    pub value: Frac,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    pub entries: Vec<DefectEntry>,
    pub max: Frac,
    pub mean: Frac,
    /// `d_H(σ(e), id)`.
    pub identity_defect: Frac,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductViolation {
    pub g: Element,
    pub h: Element,
    /// Mass of points fixed by `σ(g)` and `σ(h)` but not by `σ(gh)`.
    pub mass: Frac,
    /// `d_H(σ(gh), σ(g)σ(h))`.
    pub bound: Frac,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InverseViolation {
    pub g: Element,
    /// Mass of points fixed by exactly one of `σ(g)`, `σ(g^-1)`.
    pub mass: Frac,
    /// `d_H(σ(g^-1)σ(g), σ(e)) + d_H(σ(e), id)`.
    pub bound: Frac,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub products: Vec<ProductViolation>,
    pub inverses: Vec<InverseViolation>,
    /// Mass of points moved by `σ(e)`.
    pub identity_moved: Frac,
}

impl ConsistencyReport {
    pub fn bounds_hold(&self) -> bool {
        self.products.iter().all(|p| p.mass <= p.bound)
            && self.inverses.iter().all(|i| i.mass <= i.bound)
    }

    pub fn all_zero(&self) -> bool {
        let zero = frac(0, 1);
        self.identity_moved == zero
            && self.products.iter().all(|p| p.mass == zero)
            && self.inverses.iter().all(|i| i.mass == zero)
    }

    /// Sum of all violation masses (bounds the mass of inconsistent patterns).
    pub fn total_mass(&self) -> Frac {
        self.products
            .iter()
            .map(|p| p.mass)
            .chain(self.inverses.iter().map(|i| i.mass))
            .sum::<Frac>()
            + self.identity_moved
    }
}

impl ApproxHom {
    /// Builds `σ` from a construction, storing images of every window element.
    /// For honest actions the stored images are the exact action images.
    pub fn from_action(
        spec: &GroupSpec,
        action: &ActionSpec,
        d: usize,
        window: &Window,
    ) -> Result<Self> {
        let degree = action.degree(spec)?;
        if degree != d {
            return Err(Error::InvalidParameter(format!(
                "action {action:?} has degree {degree}, requested {d}"
            )));
        }
        if action.is_honest() {
            let mut images: Vec<Permutation> = window
                .elements()
                .iter()
                .map(|g| action.image(spec, g))
                .collect::<Result<_>>()?;
            let mut gen_slot = Vec::new();
            for g in spec.generators() {
                match window.index_of(g) {
                    Some(i) => gen_slot.push(i),
                    None => {
                        gen_slot.push(images.len());
                        images.push(action.image(spec, g)?);
                    }
                }
            }
            Ok(Self {
                spec: spec.clone(),
                degree,
                window: window.clone(),
                images,
                gen_slot,
                length_cap: WORD_LENGTH_CAP,
                honest: true,
                description: format!("{action:?}"),
            })
        } else {
            let prim = action.primary_images(spec)?;
            let mut hom = Self::from_generator_images(spec, &prim, window)?;
            hom.description = format!("{action:?}");
            Ok(hom)
        }
    }

    /// Extends images of the primary generators along geodesic words.
    pub fn from_generator_images(
        spec: &GroupSpec,
        primary: &[Permutation],
        window: &Window,
    ) -> Result<Self> {
        let prim = primary_generators(spec);
        if prim.len() != primary.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} generator images, got {}",
                prim.len(),
                primary.len()
            )));
        }
        let degree = primary.first().map(Permutation::degree).unwrap_or(1);
        for p in primary {
            if p.degree() != degree {
                return Err(Error::DegreeMismatch(degree, p.degree()));
            }
        }
        let gens = spec.generators();
        let mut gen_images: Vec<Option<Permutation>> = vec![None; gens.len()];
        for (&s, p) in prim.iter().zip(primary) {
            let inv = spec.inverse(&gens[s])?;
            let t = gens
                .iter()
                .position(|g| *g == inv)
                .expect("symmetric generating set");
            if t != s {
                gen_images[t] = Some(p.inverse());
            }
            gen_images[s] = Some(p.clone());
        }
        let gen_images: Vec<Permutation> = gen_images
            .into_iter()
            .map(|p| p.expect("every generator covered"))
            .collect();
        let words = spec.geodesic_words(window.elements(), WORD_LENGTH_CAP)?;
        let mut images: Vec<Permutation> = words
            .iter()
            .map(|w| compose_word(degree, w, |s| &gen_images[s]))
            .collect();
        let mut gen_slot = Vec::new();
        for (s, g) in gens.iter().enumerate() {
            match window.index_of(g) {
                Some(i) => gen_slot.push(i),
                None => {
                    gen_slot.push(images.len());
                    images.push(gen_images[s].clone());
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            degree,
            window: window.clone(),
            images,
            gen_slot,
            length_cap: WORD_LENGTH_CAP,
            honest: false,
            description: "generator images".into(),
        })
    }

    /// Stores an explicit image for every window element. Generators outside
    /// the window must be supplied through `generator_images` (in generator order).
    pub fn from_images(
        spec: &GroupSpec,
        window: &Window,
        images: Vec<Permutation>,
        generator_images: Option<Vec<Permutation>>,
    ) -> Result<Self> {
        if images.len() != window.len() {
            return Err(Error::InvalidParameter(
                "one image per window element required".into(),
            ));
        }
        let degree = images[0].degree();
        let mut images = images;
        for p in &images {
            if p.degree() != degree {
                return Err(Error::DegreeMismatch(degree, p.degree()));
            }
        }
        let mut gen_slot = Vec::new();
        for (s, g) in spec.generators().iter().enumerate() {
            match (window.index_of(g), &generator_images) {
                (Some(i), _) => gen_slot.push(i),
                (None, Some(extra)) => {
                    gen_slot.push(images.len());
                    images.push(extra[s].clone());
                }
                (None, None) => return Err(Error::NotInWindow(g.clone())),
            }
        }
        Ok(Self {
            spec: spec.clone(),
            degree,
            window: window.clone(),
            images,
            gen_slot,
            length_cap: WORD_LENGTH_CAP,
            honest: false,
            description: "explicit images".into(),
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn is_honest(&self) -> bool {
        self.honest
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn with_length_cap(mut self, cap: usize) -> Self {
        self.length_cap = cap;
        self
    }

    /// Stored image of window element `i`.
    pub fn image(&self, i: usize) -> &Permutation {
        &self.images[i]
    }

    pub fn generator_image(&self, s: usize) -> &Permutation {
        &self.images[self.gen_slot[s]]
    }

    /// Conventions that affect every finite-scale statistic.
    pub fn conventions(&self) -> Vec<String> {
        vec![format!(
            "elements outside the stored window are evaluated by composing generator images left to right \
             along the least geodesic word (length cap {})",
            self.length_cap
        )]
    }

    pub fn evaluate(&self, g: &Element) -> Result<Cow<'_, Permutation>> {
        Ok(self
            .evaluate_many(std::slice::from_ref(g))?
            .pop()
            .expect("one result"))
    }

    pub fn evaluate_many(&self, gs: &[Element]) -> Result<Vec<Cow<'_, Permutation>>> {
        let outside: Vec<Element> = gs
            .iter()
            .filter(|g| !self.window.contains(g))
            .cloned()
            .collect();
        let words = if outside.is_empty() {
            Vec::new()
        } else {
            self.spec.geodesic_words(&outside, self.length_cap)?
        };
        let mut words = words.into_iter();
        gs.iter()
            .map(|g| {
                self.spec.check(g)?;
                Ok(match self.window.index_of(g) {
                    Some(i) => Cow::Borrowed(&self.images[i]),
                    None => {
                        let w = words.next().expect("one word per outside element");
                        Cow::Owned(compose_word(self.degree, &w, |s| self.generator_image(s)))
                    }
                })
            })
            .collect()
    }

    /// `d_H(σ(gh), σ(g)σ(h))` for each pair.
    pub fn defect(&self, pairs: &[(Element, Element)]) -> Result<DefectReport> {
        let mut entries = Vec::with_capacity(pairs.len());
        for (g, h) in pairs {
            let gh = self.spec.multiply(g, h)?;
            let ev = self.evaluate_many(&[g.clone(), h.clone(), gh])?;
            let (pg, ph, pgh) = (&ev[0], &ev[1], &ev[2]);
            let n = count_where(self.degree, |j| pgh.apply(j) != pg.apply(ph.apply(j)));
            entries.push(DefectEntry {
                g: g.clone(),
                h: h.clone(),
                value: ratio(n, self.degree),
            });
        }
        let max = entries.iter().map(|e| e.value).max().unwrap_or(frac(0, 1));
        let mean = if entries.is_empty() {
            frac(0, 1)
        } else {
            entries.iter().map(|e| e.value).sum::<Frac>() / Frac::from(entries.len() as i128)
        };
        let e = self.evaluate(&self.spec.identity())?;
        let identity_defect = hamming(&e, &Permutation::identity(self.degree))?;
        Ok(DefectReport {
            entries,
            max,
            mean,
            identity_defect,
        })
    }

    /// Post-composes every stored image with an independent random permutation
    /// supported on `⌈rate·d⌉` uniformly chosen points.
    pub fn perturb(&self, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "perturbation rate {rate} outside [0,1]"
            )));
        }
        let d = self.degree;
        let k = ((rate * d as f64) - 1e-9).ceil().clamp(0.0, d as f64) as usize;
        let images = self
            .images
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if k < 2 {
                    return p.clone();
                }
                let mut rng = rng::stream(rng::derive_seed(seed, i as u64));
                let support = index::sample(&mut rng, d, k).into_vec();
                let mut shuffled = support.clone();
                shuffled.shuffle(&mut rng);
                let mut noise: Vec<u32> = (0..d as u32).collect();
                for (&a, &b) in support.iter().zip(&shuffled) {
                    noise[a] = b as u32;
                }
                let img = p.images().iter().map(|&x| noise[x as usize]).collect();
                Permutation::from_images_unchecked(img)
            })
            .collect();
        Ok(Self {
            images,
            honest: self.honest && k < 2,
            description: format!("perturb({}, rate={rate}, seed={seed})", self.description),
            ..self.clone()
        })
    }

    /// `σ^{⊕q}(g)(j + r d) = σ(g)(j) + r d`.
    pub fn block_sum(&self, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter(
                "block count must be positive".into(),
            ));
        }
        let degree = self
            .degree
            .checked_mul(q)
            .filter(|&n| n <= DEGREE_CAP)
            .ok_or(Error::DegreeCap {
                degree: self.degree.saturating_mul(q),
                cap: DEGREE_CAP,
            })?;
        let d = self.degree as u32;
        let images = self
            .images
            .iter()
            .map(|p| {
                let img = (0..q as u32)
                    .flat_map(|r| p.images().iter().map(move |&x| x + r * d))
                    .collect();
                Permutation::from_images_unchecked(img)
            })
            .collect();
        Ok(Self {
            degree,
            images,
            description: format!("block_sum({}, q={q})", self.description),
            ..self.clone()
        })
    }

    /// Adds `r` points fixed by every image.
    pub fn pad_trivial(&self, r: usize) -> Result<Self> {
        let degree = self.degree + r;
        if degree > DEGREE_CAP {
            return Err(Error::DegreeCap {
                degree,
                cap: DEGREE_CAP,
            });
        }
        let images = self
            .images
            .iter()
            .map(|p| {
                let mut img = p.images().to_vec();
                img.extend(self.degree as u32..degree as u32);
                Permutation::from_images_unchecked(img)
            })
            .collect();
        Ok(Self {
            degree,
            images,
            description: format!("pad_trivial({}, r={r})", self.description),
            ..self.clone()
        })
    }

    /// Block sum with `q = ⌊target/d⌋` followed by padding with `target mod d` points.
    pub fn redimension(&self, target: usize) -> Result<Self> {
        if target < self.degree {
            return Err(Error::InvalidParameter(format!(
                "target degree {target} is below the current degree {}",
                self.degree
            )));
        }
        self.block_sum(target / self.degree)?
            .pad_trivial(target % self.degree)
    }

    /// Relabels points: every image becomes `π σ(g) π^-1`.
    pub fn relabel(&self, pi: &Permutation) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|p| pi.conjugate(p))
            .collect::<Result<_>>()?;
        Ok(Self {
            images,
            ..self.clone()
        })
    }

    /// Replaces the stored image of window element `g`.
    pub fn with_image(&self, g: &Element, p: Permutation) -> Result<Self> {
        let i = self
            .window
            .index_of(g)
            .ok_or_else(|| Error::NotInWindow(g.clone()))?;
        if p.degree() != self.degree {
            return Err(Error::DegreeMismatch(self.degree, p.degree()));
        }
        let mut images = self.images.clone();
        images[i] = p;
        Ok(Self {
            images,
            honest: false,
            ..self.clone()
        })
    }

    /// Masses of the three ways a point's stabilizer pattern on `window` can
    /// fail to look like a subgroup, with their pointwise bounds.
    pub fn subgroup_consistency_defects(&self, window: &Window) -> Result<ConsistencyReport> {
        let spec = &self.spec;
        let d = self.degree;
        let inverses: Vec<Element> = window
            .elements()
            .iter()
            .map(|g| spec.inverse(g))
            .collect::<Result<_>>()?;
        let imgs = self.evaluate_many(window.elements())?;
        let inv_imgs = self.evaluate_many(&inverses)?;
        let e = self.evaluate(&spec.identity())?;
        let fixed = |p: &Permutation, j: usize| p.apply(j) == j;

        let mut products = Vec::new();
        for (i, g) in window.elements().iter().enumerate() {
            for (k, h) in window.elements().iter().enumerate() {
                let gh = spec.multiply(g, h)?;
                let Some(l) = window.index_of(&gh) else {
                    continue;
                };
                let (pg, ph, pgh) = (&imgs[i], &imgs[k], &imgs[l]);
                let mass = count_where(d, |j| fixed(pg, j) && fixed(ph, j) && !fixed(pgh, j));
                let bound = count_where(d, |j| pgh.apply(j) != pg.apply(ph.apply(j)));
                products.push(ProductViolation {
                    g: g.clone(),
                    h: h.clone(),
                    mass: ratio(mass, d),
                    bound: ratio(bound, d),
                });
            }
        }
        let moved_by_e = count_where(d, |j| !fixed(&e, j));
        let mut inverses_out = Vec::new();
        for (i, g) in window.elements().iter().enumerate() {
            let (pg, pgi) = (&imgs[i], &inv_imgs[i]);
            let mass = count_where(d, |j| fixed(pg, j) != fixed(pgi, j));
            let first = count_where(d, |j| pgi.apply(pg.apply(j)) != e.apply(j));
            inverses_out.push(InverseViolation {
                g: g.clone(),
                mass: ratio(mass, d),
                bound: ratio(first + moved_by_e, d),
            });
        }
        Ok(ConsistencyReport {
            products,
            inverses: inverses_out,
            identity_moved: ratio(moved_by_e, d),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self).map_err(|e| Error::Decode(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        bincode::deserialize(&bytes).map_err(|e| Error::Decode(e.to_string()))
    }
}

fn compose_word<'a, F>(d: usize, word: &[usize], image: F) -> Permutation
where
    F: Fn(usize) -> &'a Permutation,
{
    match word {
        [] => Permutation::identity(d),
        [s] => image(*s).clone(),
        [first, rest @ ..] => rest.iter().fold(image(*first).clone(), |acc, &s| {
            acc.compose_unchecked(image(s))
        }),
    }
}

/// All ordered pairs of window elements.
pub fn all_pairs(window: &Window) -> Vec<(Element, Element)> {
    let els = window.elements();
    els.iter()
        .flat_map(|g| els.iter().map(move |h| (g.clone(), h.clone())))
        .collect()
}
