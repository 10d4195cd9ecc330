//! A closed catalog of countable groups with exact normal forms.
//!
//! Supported groups are the integer lattices `Z^k`, finite abelian products
//! `Z/m_1 x .. x Z/m_r`, the discrete Heisenberg group `H_3(Z)` and free groups
//! `F_k`. Every group carries an explicit symmetric generating set; windows are
//! balls in the word metric enumerated breadth-first, generators in order, so
//! the order of a ball is the shortlex order of the least geodesic words.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the number of elements a window or a BFS may visit.
pub const WINDOW_CAP: usize = 1 << 20;

/// Default cap on the length of geodesic words used for evaluation.
pub const WORD_LENGTH_CAP: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Lattice { rank: usize },
    FiniteAbelian { moduli: Vec<u64> },
    Heisenberg,
    Free { rank: usize },
}

/// Group element in canonical normal form.
///
/// * `Lattice`: integer vector.
/// * `Residues`: residues `0 <= r_i < m_i`.
/// * `Heisenberg`: `(a, b, c)` with `(a,b,c)(a',b',c') = (a+a', b+b', c+c'+ab')`.
/// * `Word`: freely reduced word; letter `+i` is generator `i` (1-based), `-i` its inverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    Lattice(Vec<i64>),
    Residues(Vec<u64>),
    Heisenberg([i64; 3]),
    Word(Vec<i32>),
}

impl Element {
    pub fn is_identity(&self) -> bool {
        match self {
            Element::Lattice(v) => v.iter().all(|&x| x == 0),
            Element::Residues(v) => v.iter().all(|&x| x == 0),
            Element::Heisenberg(h) => *h == [0, 0, 0],
            Element::Word(w) => w.is_empty(),
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn tuple<T: fmt::Display>(f: &mut fmt::Formatter<'_>, xs: &[T]) -> fmt::Result {
            write!(f, "(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        }
        match self {
            Element::Lattice(v) => tuple(f, v),
            Element::Residues(v) => tuple(f, v),
            Element::Heisenberg(h) => tuple(f, h),
            Element::Word(w) if w.is_empty() => write!(f, "e"),
            Element::Word(w) => {
                for &l in w {
                    let c = (b'a' + (l.unsigned_abs() - 1) as u8) as char;
                    if l > 0 {
                        write!(f, "{c}")?;
                    } else {
                        write!(f, "{}", c.to_ascii_uppercase())?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    kind: GroupKind,
    generators: Vec<Element>,
    standard: bool,
}

impl GroupSpec {
    pub fn lattice(rank: usize) -> Self {
        let mut generators = Vec::with_capacity(2 * rank);
        for i in 0..rank {
            let mut v = vec![0; rank];
            v[i] = 1;
            generators.push(Element::Lattice(v.clone()));
            v[i] = -1;
            generators.push(Element::Lattice(v));
        }
        Self {
            kind: GroupKind::Lattice { rank },
            generators,
            standard: true,
        }
    }

    pub fn finite_abelian(moduli: Vec<u64>) -> Result<Self> {
        if moduli.is_empty() || moduli.contains(&0) {
            return Err(Error::InvalidParameter(
                "moduli must be a nonempty list of positive integers".into(),
            ));
        }
        let mut generators = Vec::new();
        for (i, &m) in moduli.iter().enumerate() {
            if m > 1 {
                let mut v = vec![0; moduli.len()];
                v[i] = 1;
                generators.push(Element::Residues(v.clone()));
                if m > 2 {
                    v[i] = m - 1;
                    generators.push(Element::Residues(v));
                }
            }
        }
        Ok(Self {
            kind: GroupKind::FiniteAbelian { moduli },
            generators,
            standard: true,
        })
    }

    pub fn heisenberg() -> Self {
        let generators = vec![
            Element::Heisenberg([1, 0, 0]),
            Element::Heisenberg([-1, 0, 0]),
            Element::Heisenberg([0, 1, 0]),
            Element::Heisenberg([0, -1, 0]),
        ];
        Self {
            kind: GroupKind::Heisenberg,
            generators,
            standard: true,
        }
    }

    pub fn free(rank: usize) -> Result<Self> {
        if rank == 0 || rank > 26 {
            return Err(Error::InvalidParameter(format!(
                "free group rank must be in 1..=26, got {rank}"
            )));
        }
        let mut generators = Vec::with_capacity(2 * rank);
        for i in 1..=rank as i32 {
            generators.push(Element::Word(vec![i]));
            generators.push(Element::Word(vec![-i]));
        }
        Ok(Self {
            kind: GroupKind::Free { rank },
            generators,
            standard: true,
        })
    }

    pub fn from_kind(kind: &GroupKind) -> Result<Self> {
        match kind {
            GroupKind::Lattice { rank } => Ok(Self::lattice(*rank)),
            GroupKind::FiniteAbelian { moduli } => Self::finite_abelian(moduli.clone()),
            GroupKind::Heisenberg => Ok(Self::heisenberg()),
            GroupKind::Free { rank } => Self::free(*rank),
        }
    }

    /// Replaces the standard generating set. The set must be symmetric, free of
    /// duplicates and of the identity.
    pub fn with_generators(mut self, generators: Vec<Element>) -> Result<Self> {
        for g in &generators {
            self.check(g)?;
            if g.is_identity() {
                return Err(Error::InvalidParameter(
                    "generating set contains the identity".into(),
                ));
            }
            let inv = self.inverse(g)?;
            if !generators.contains(&inv) {
                return Err(Error::InvalidParameter(format!(
                    "generating set is not symmetric: {inv} missing"
                )));
            }
        }
        let mut seen = generators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != generators.len() {
            return Err(Error::InvalidParameter("duplicate generators".into()));
        }
        self.standard = generators == self.generators;
        self.generators = generators;
        Ok(self)
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn generators(&self) -> &[Element] {
        &self.generators
    }

    /// Amenability is catalog metadata: everything except free groups of rank >= 2.
    pub fn is_amenable(&self) -> bool {
        !matches!(self.kind, GroupKind::Free { rank } if rank >= 2)
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GroupKind::Lattice { rank } => format!("Z^{rank}"),
            GroupKind::FiniteAbelian { moduli } => moduli
                .iter()
                .map(|m| format!("Z/{m}"))
                .collect::<Vec<_>>()
                .join(" x "),
            GroupKind::Heisenberg => "H3(Z)".to_string(),
            GroupKind::Free { rank } => format!("F_{rank}"),
        }
    }

    pub fn identity(&self) -> Element {
        match &self.kind {
            GroupKind::Lattice { rank } => Element::Lattice(vec![0; *rank]),
            GroupKind::FiniteAbelian { moduli } => Element::Residues(vec![0; moduli.len()]),
            GroupKind::Heisenberg => Element::Heisenberg([0; 3]),
            GroupKind::Free { .. } => Element::Word(Vec::new()),
        }
    }

    /// Verifies that `a` is a normal form of this group.
    pub fn check(&self, a: &Element) -> Result<()> {
        let ok = match (&self.kind, a) {
            (GroupKind::Lattice { rank }, Element::Lattice(v)) => v.len() == *rank,
            (GroupKind::FiniteAbelian { moduli }, Element::Residues(v)) => {
                v.len() == moduli.len() && v.iter().zip(moduli).all(|(x, m)| x < m)
            }
            (GroupKind::Heisenberg, Element::Heisenberg(_)) => true,
            (GroupKind::Free { rank }, Element::Word(w)) => {
                w.iter()
                    .all(|&l| l != 0 && l.unsigned_abs() as usize <= *rank)
                    && w.windows(2).all(|p| p[0] != -p[1])
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GroupMismatch(a.to_string()))
        }
    }

    pub fn multiply(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub(crate) fn mul_unchecked(&self, a: &Element, b: &Element) -> Element {
        match (&self.kind, a, b) {
            (_, Element::Lattice(x), Element::Lattice(y)) => {
                Element::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GroupKind::FiniteAbelian { moduli }, Element::Residues(x), Element::Residues(y)) => {
                Element::Residues(
                    x.iter()
                        .zip(y)
                        .zip(moduli)
                        .map(|((p, q), m)| (p + q) % m)
                        .collect(),
                )
            }
            (_, Element::Heisenberg([a1, b1, c1]), Element::Heisenberg([a2, b2, c2])) => {
                Element::Heisenberg([a1 + a2, b1 + b2, c1 + c2 + a1 * b2])
            }
            (_, Element::Word(x), Element::Word(y)) => {
                let mut w = x.clone();
                for &l in y {
                    if w.last() == Some(&-l) {
                        w.pop();
                    } else {
                        w.push(l);
                    }
                }
                Element::Word(w)
            }
            _ => unreachable!("operands checked against the group"),
        }
    }

    pub fn inverse(&self, a: &Element) -> Result<Element> {
        self.check(a)?;
        Ok(self.inv_unchecked(a))
    }

    pub(crate) fn inv_unchecked(&self, a: &Element) -> Element {
        match (&self.kind, a) {
            (_, Element::Lattice(x)) => Element::Lattice(x.iter().map(|p| -p).collect()),
            (GroupKind::FiniteAbelian { moduli }, Element::Residues(x)) => {
                Element::Residues(x.iter().zip(moduli).map(|(p, m)| (m - p) % m).collect())
            }
            (_, Element::Heisenberg([a, b, c])) => Element::Heisenberg([-a, -b, a * b - c]),
            (_, Element::Word(w)) => Element::Word(w.iter().rev().map(|l| -l).collect()),
            _ => unreachable!("operand checked against the group"),
        }
    }

    /// `g h g^-1`.
    pub fn conjugate(&self, g: &Element, h: &Element) -> Result<Element> {
        let gh = self.multiply(g, h)?;
        Ok(self.mul_unchecked(&gh, &self.inv_unchecked(g)))
    }

    /// Element represented by a word over generator indices.
    pub fn evaluate_word(&self, word: &[usize]) -> Element {
        word.iter().fold(self.identity(), |acc, &s| {
            self.mul_unchecked(&acc, &self.generators[s])
        })
    }

    /// Element from integer coordinates: lattice vector, residues (reduced),
    /// or Heisenberg triple.
    pub fn element_from_ints(&self, xs: &[i64]) -> Result<Element> {
        let e = match &self.kind {
            GroupKind::Lattice { .. } => Element::Lattice(xs.to_vec()),
            GroupKind::FiniteAbelian { moduli } if xs.len() == moduli.len() => Element::Residues(
                xs.iter()
                    .zip(moduli)
                    .map(|(&x, &m)| x.rem_euclid(m as i64) as u64)
                    .collect(),
            ),
            GroupKind::Heisenberg if xs.len() == 3 => Element::Heisenberg([xs[0], xs[1], xs[2]]),
            _ => return Err(Error::GroupMismatch(format!("{xs:?}"))),
        };
        self.check(&e)?;
        Ok(e)
    }

    /// Free-group word from letters: `a`..`z` are generators, upper case their
    /// inverses, `e` alone or an empty string the identity. Whitespace and
    /// `⁻¹` suffixes are accepted (`"a a⁻¹ b"`).
    pub fn parse_word(&self, s: &str) -> Result<Element> {
        let GroupKind::Free { rank } = self.kind else {
            return Err(Error::GroupMismatch(s.to_string()));
        };
        let t = s.trim();
        if t == "e" || t.is_empty() {
            return Ok(Element::Word(Vec::new()));
        }
        let mut letters: Vec<i32> = Vec::new();
        let chars: Vec<char> = t.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            i += 1;
            if c.is_whitespace() {
                continue;
            }
            if !c.is_ascii_alphabetic() {
                return Err(Error::GroupMismatch(s.to_string()));
            }
            let idx = (c.to_ascii_lowercase() as u8 - b'a') as i32 + 1;
            if idx as usize > rank {
                return Err(Error::GroupMismatch(s.to_string()));
            }
            let mut l = if c.is_ascii_uppercase() { -idx } else { idx };
            if chars[i..].starts_with(&['⁻', '¹']) {
                l = -l;
                i += 2;
            }
            letters.push(l);
        }
        let w = letters
            .into_iter()
            .fold(Element::Word(Vec::new()), |acc, l| {
                self.mul_unchecked(&acc, &Element::Word(vec![l]))
            });
        Ok(w)
    }

    /// All elements of word length at most `radius`, identity first, in
    /// shortlex order of their least geodesic words.
    pub fn ball(&self, radius: usize) -> Result<Window> {
        self.ball_capped(radius, WINDOW_CAP)
    }

    pub fn ball_capped(&self, radius: usize, cap: usize) -> Result<Window> {
        let mut elements = vec![self.identity()];
        let mut words: Vec<Vec<usize>> = vec![Vec::new()];
        let mut index: HashMap<Element, usize> = HashMap::new();
        index.insert(self.identity(), 0);
        let mut frontier = vec![0usize];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &p in &frontier {
                for (s, gen) in self.generators.iter().enumerate() {
                    let h = self.mul_unchecked(&elements[p], gen);
                    if index.contains_key(&h) {
                        continue;
                    }
                    if elements.len() >= cap {
                        return Err(Error::WindowTooLarge { cap });
                    }
                    let mut w = words[p].clone();
                    w.push(s);
                    index.insert(h.clone(), elements.len());
                    next.push(elements.len());
                    elements.push(h);
                    words.push(w);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(Window {
            elements,
            words: Some(words),
            index,
            identity: 0,
            radius: Some(radius),
        })
    }

    /// Least (shortlex) geodesic word of each target, as generator indices.
    pub fn geodesic_words(&self, targets: &[Element], max_len: usize) -> Result<Vec<Vec<usize>>> {
        for t in targets {
            self.check(t)?;
        }
        if self.standard {
            match &self.kind {
                GroupKind::Lattice { .. } => {
                    return targets
                        .iter()
                        .map(|t| {
                            let Element::Lattice(v) = t else {
                                unreachable!()
                            };
                            let mut w = Vec::new();
                            for (i, &x) in v.iter().enumerate() {
                                let s = if x > 0 { 2 * i } else { 2 * i + 1 };
                                w.extend(std::iter::repeat_n(s, x.unsigned_abs() as usize));
                            }
                            length_checked(t, w, max_len)
                        })
                        .collect();
                }
                GroupKind::Free { .. } => {
                    return targets
                        .iter()
                        .map(|t| {
                            let Element::Word(letters) = t else {
                                unreachable!()
                            };
                            let w = letters
                                .iter()
                                .map(|&l| 2 * (l.unsigned_abs() as usize - 1) + usize::from(l < 0))
                                .collect();
                            length_checked(t, w, max_len)
                        })
                        .collect();
                }
                _ => {}
            }
        }
        self.bfs_words(targets, max_len)
    }

    fn bfs_words(&self, targets: &[Element], max_len: usize) -> Result<Vec<Vec<usize>>> {
        let mut out: Vec<Option<Vec<usize>>> = vec![None; targets.len()];
        let mut wanted: HashMap<&Element, Vec<usize>> = HashMap::new();
        for (i, t) in targets.iter().enumerate() {
            wanted.entry(t).or_default().push(i);
        }
        let mut remaining = targets.len();
        // parent pointers: (parent index, generator)
        let mut elements = vec![self.identity()];
        let mut parent: Vec<(usize, usize)> = vec![(usize::MAX, 0)];
        let mut depth = vec![0usize];
        let mut seen: HashMap<Element, usize> = HashMap::new();
        seen.insert(self.identity(), 0);
        let mut queue = VecDeque::from([0usize]);
        let word_of = |idx: usize, parent: &[(usize, usize)]| {
            let mut w = Vec::new();
            let mut k = idx;
            while parent[k].0 != usize::MAX {
                w.push(parent[k].1);
                k = parent[k].0;
            }
            w.reverse();
            w
        };
        if let Some(is) = wanted.get(&self.identity()) {
            for &i in is {
                out[i] = Some(Vec::new());
                remaining -= 1;
            }
        }
        while remaining > 0 {
            let Some(p) = queue.pop_front() else { break };
            if depth[p] >= max_len {
                break;
            }
            for (s, gen) in self.generators.iter().enumerate() {
                let h = self.mul_unchecked(&elements[p], gen);
                if seen.contains_key(&h) {
                    continue;
                }
                if elements.len() >= WINDOW_CAP {
                    return Err(Error::WindowTooLarge { cap: WINDOW_CAP });
                }
                let idx = elements.len();
                seen.insert(h.clone(), idx);
                parent.push((p, s));
                depth.push(depth[p] + 1);
                if let Some(is) = wanted.get(&h) {
                    let w = word_of(idx, &parent);
                    for &i in is {
                        out[i] = Some(w.clone());
                        remaining -= 1;
                    }
                }
                elements.push(h);
                queue.push_back(idx);
            }
        }
        out.into_iter()
            .zip(targets)
            .map(|(w, t)| {
                w.ok_or_else(|| Error::LengthCapExceeded {
                    element: t.to_string(),
                    cap: max_len,
                })
            })
            .collect()
    }

    pub fn word_length(&self, g: &Element) -> Result<usize> {
        Ok(self.geodesic_words(std::slice::from_ref(g), WORD_LENGTH_CAP)?[0].len())
    }
}

fn length_checked(t: &Element, w: Vec<usize>, max_len: usize) -> Result<Vec<usize>> {
    if w.len() > max_len {
        Err(Error::LengthCapExceeded {
            element: t.to_string(),
            cap: max_len,
        })
    } else {
        Ok(w)
    }
}

/// An ordered finite set of distinct elements containing the identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "WindowRepr", into = "WindowRepr")]
pub struct Window {
    elements: Vec<Element>,
    words: Option<Vec<Vec<usize>>>,
    index: HashMap<Element, usize>,
    identity: usize,
    radius: Option<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct WindowRepr {
    elements: Vec<Element>,
    words: Option<Vec<Vec<usize>>>,
    radius: Option<usize>,
}

impl From<WindowRepr> for Window {
    fn from(r: WindowRepr) -> Self {
        let index: HashMap<Element, usize> = r
            .elements
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        let identity = r
            .elements
            .iter()
            .position(Element::is_identity)
            .unwrap_or(0);
        Window {
            elements: r.elements,
            words: r.words,
            index,
            identity,
            radius: r.radius,
        }
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        WindowRepr {
            elements: w.elements,
            words: w.words,
            radius: w.radius,
        }
    }
}

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl Window {
    /// Window from an explicit element list; must contain the identity and no duplicates.
    pub fn new(spec: &GroupSpec, elements: Vec<Element>) -> Result<Self> {
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            spec.check(e)?;
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate window element {e}"
                )));
            }
        }
        let identity = elements
            .iter()
            .position(Element::is_identity)
            .ok_or_else(|| Error::InvalidParameter("window must contain the identity".into()))?;
        Ok(Window {
            elements,
            words: None,
            index,
            identity,
            radius: None,
        })
    }

    /// Window containing `elements` plus the identity (prepended if absent),
    /// duplicates dropped, order otherwise preserved.
    pub fn spanning(spec: &GroupSpec, elements: &[Element]) -> Result<Self> {
        let mut out = vec![spec.identity()];
        for e in elements {
            if !out.contains(e) {
                out.push(e.clone());
            }
        }
        Self::new(spec, out)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn get(&self, i: usize) -> &Element {
        &self.elements[i]
    }

    pub fn index_of(&self, g: &Element) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &Element) -> bool {
        self.index.contains_key(g)
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }

    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    /// Least geodesic word of element `i`, when the window came from [`GroupSpec::ball`].
    pub fn word(&self, i: usize) -> Option<&[usize]> {
        self.words.as_ref().map(|w| w[i].as_slice())
    }

    pub fn indices_of(&self, subset: &[Element]) -> Result<Vec<usize>> {
        subset
            .iter()
            .map(|g| {
                self.index_of(g)
                    .ok_or_else(|| Error::NotInWindow(g.clone()))
            })
            .collect()
    }

    pub fn is_subset_of(&self, other: &Window) -> bool {
        self.elements.iter().all(|e| other.contains(e))
    }

    /// Multiplication and inversion restricted to the window.
    pub fn table(&self, spec: &GroupSpec) -> WindowTable {
        let n = self.len();
        let mut prod = vec![None; n * n];
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate() {
                prod[i * n + j] = self.index_of(&spec.mul_unchecked(a, b));
            }
        }
        let inv = self
            .elements
            .iter()
            .map(|a| self.index_of(&spec.inv_unchecked(a)))
            .collect();
        WindowTable { n, prod, inv }
    }
}

/// Partial multiplication table of a window.
#[derive(Clone, Debug)]
pub struct WindowTable {
    n: usize,
    prod: Vec<Option<usize>>,
    inv: Vec<Option<usize>>,
}

impl WindowTable {
    pub fn product(&self, i: usize, j: usize) -> Option<usize> {
        self.prod[i * self.n + j]
    }

    pub fn inverse(&self, i: usize) -> Option<usize> {
        self.inv[i]
    }
}

/// Closure requirements checked by [`validate_closure`].
#[derive(Clone, Debug)]
pub enum ClosureRequirement {
    /// Every product of at most `L` generators lies in the window.
    ProductsUpToLength(usize),
    /// `E E^-1` lies in the window.
    DifferenceSet(Vec<Element>),
    /// `g W` lies in `target`.
    Translate { g: Element, target: Window },
    /// `g F g^-1` lies in the window.
    Conjugate { g: Element, subset: Vec<Element> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureReport {
    pub pass: bool,
    pub missing: Vec<Element>,
}

pub fn validate_closure(
    spec: &GroupSpec,
    window: &Window,
    requirement: &ClosureRequirement,
) -> Result<ClosureReport> {
    let mut missing: Vec<Element> = Vec::new();
    let mut need = |e: Element, within: &Window| {
        if !within.contains(&e) && !missing.contains(&e) {
            missing.push(e);
        }
    };
    match requirement {
        ClosureRequirement::ProductsUpToLength(len) => {
            for e in spec.ball(*len)?.elements {
                need(e, window);
            }
        }
        ClosureRequirement::DifferenceSet(set) => {
            for a in set {
                for b in set {
                    need(spec.multiply(a, &spec.inverse(b)?)?, window);
                }
            }
        }
        ClosureRequirement::Translate { g, target } => {
            for w in window.elements() {
                need(spec.multiply(g, w)?, target);
            }
        }
        ClosureRequirement::Conjugate { g, subset } => {
            for f in subset {
                need(spec.conjugate(g, f)?, window);
            }
        }
    }
    Ok(ClosureReport {
        pass: missing.is_empty(),
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(v: i64) -> Element {
        Element::Lattice(vec![v])
    }

    fn mat(h: &Element) -> [[i64; 3]; 3] {
        let Element::Heisenberg([a, b, c]) = *h else {
            panic!()
        };
        [[1, a, c], [0, 1, b], [0, 0, 1]]
    }

    fn matmul(x: [[i64; 3]; 3], y: [[i64; 3]; 3]) -> [[i64; 3]; 3] {
        let mut r = [[0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
            }
        }
        r
    }

    #[test]
    fn lattice_multiplication() {
        let g = GroupSpec::lattice(2);
        let p = g
            .multiply(
                &Element::Lattice(vec![1, 2]),
                &Element::Lattice(vec![3, -1]),
            )
            .unwrap();
        assert_eq!(p, Element::Lattice(vec![4, 1]));
        assert_eq!(
            g.inverse(&Element::Lattice(vec![1, 2])).unwrap(),
            Element::Lattice(vec![-1, -2])
        );
    }

    #[test]
    fn heisenberg_matches_matrix_model() {
        let h = GroupSpec::heisenberg();
        let x = Element::Heisenberg([1, 0, 0]);
        let y = Element::Heisenberg([0, 1, 0]);
        assert_eq!(h.multiply(&x, &y).unwrap(), Element::Heisenberg([1, 1, 1]));
        let samples = [[2, -3, 5], [-1, 4, 0], [7, 7, -2], [0, 0, 9]];
        for a in samples {
            for b in samples {
                let (ea, eb) = (Element::Heisenberg(a), Element::Heisenberg(b));
                let prod = h.multiply(&ea, &eb).unwrap();
                assert_eq!(mat(&prod), matmul(mat(&ea), mat(&eb)));
            }
            let ea = Element::Heisenberg(a);
            let inv = h.inverse(&ea).unwrap();
            assert_eq!(inv, Element::Heisenberg([-a[0], -a[1], a[0] * a[1] - a[2]]));
            assert_eq!(
                matmul(mat(&ea), mat(&inv)),
                [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
            );
        }
    }

    #[test]
    fn free_reduction() {
        let f = GroupSpec::free(2).unwrap();
        let w = f.parse_word("a a⁻¹ b").unwrap();
        assert_eq!(w, Element::Word(vec![2]));
        let p = f.multiply(&w, &f.parse_word("b⁻¹").unwrap()).unwrap();
        assert!(p.is_identity());
        let ab = f.parse_word("ab").unwrap();
        assert_eq!(f.inverse(&ab).unwrap(), f.parse_word("BA").unwrap());
        assert_eq!(f.inverse(&ab).unwrap().to_string(), "BA");
    }

    #[test]
    fn mismatched_groups_are_rejected() {
        let g = GroupSpec::lattice(2);
        assert!(g
            .multiply(&Element::Lattice(vec![1]), &Element::Lattice(vec![1, 2]))
            .is_err());
        assert!(g
            .multiply(&Element::Heisenberg([0; 3]), &g.identity())
            .is_err());
        let f = GroupSpec::free(2).unwrap();
        assert!(f.check(&Element::Word(vec![1, -1])).is_err());
        assert!(f.check(&Element::Word(vec![3])).is_err());
    }

    #[test]
    fn balls_in_z() {
        let g = GroupSpec::lattice(1);
        assert_eq!(g.ball(0).unwrap().elements(), &[z(0)]);
        assert_eq!(
            g.ball(2).unwrap().elements(),
            &[z(0), z(1), z(-1), z(2), z(-2)]
        );
    }

    #[test]
    fn ball_sizes() {
        let f = GroupSpec::free(2).unwrap();
        assert_eq!(f.ball(2).unwrap().len(), 1 + 4 + 12);
        assert_eq!(GroupSpec::lattice(2).ball(3).unwrap().len(), 25);
        let c = GroupSpec::finite_abelian(vec![2, 3]).unwrap();
        assert_eq!(c.ball(10).unwrap().len(), 6);
        // H3 ball of radius 1 has 5 elements, radius 2 has 1 + 4 + 12 + 4 = 21?
        let h = GroupSpec::heisenberg();
        let b2 = h.ball(2).unwrap();
        // brute check: every element has word length <= 2
        for (i, e) in b2.elements().iter().enumerate() {
            assert_eq!(&h.evaluate_word(b2.word(i).unwrap()), e);
            assert!(b2.word(i).unwrap().len() <= 2);
        }
    }

    #[test]
    fn window_words_agree_with_geodesic_words() {
        for spec in [
            GroupSpec::lattice(2),
            GroupSpec::free(2).unwrap(),
            GroupSpec::heisenberg(),
        ] {
            let w = spec.ball(3).unwrap();
            let words = spec.geodesic_words(w.elements(), 10).unwrap();
            for (i, word) in words.iter().enumerate() {
                assert_eq!(
                    Some(word.as_slice()),
                    w.word(i),
                    "{} {}",
                    spec.name(),
                    w.get(i)
                );
            }
        }
    }

    #[test]
    fn geodesic_length_cap() {
        let z = GroupSpec::lattice(1);
        let err = z
            .geodesic_words(&[Element::Lattice(vec![100])], 10)
            .unwrap_err();
        assert!(matches!(err, Error::LengthCapExceeded { .. }));
        let h = GroupSpec::heisenberg();
        assert!(h
            .geodesic_words(&[Element::Heisenberg([0, 0, 50])], 4)
            .is_err());
    }

    #[test]
    fn window_cap() {
        let f = GroupSpec::free(3).unwrap();
        assert!(matches!(
            f.ball_capped(6, 1000),
            Err(Error::WindowTooLarge { cap: 1000 })
        ));
    }

    #[test]
    fn closure_checks() {
        let z1 = GroupSpec::lattice(1);
        let b1 = z1.ball(1).unwrap();
        let b2 = z1.ball(2).unwrap();
        let e = b1.elements().to_vec();
        let r = validate_closure(&z1, &b2, &ClosureRequirement::DifferenceSet(e.clone())).unwrap();
        assert!(r.pass);
        let r = validate_closure(&z1, &b1, &ClosureRequirement::ProductsUpToLength(2)).unwrap();
        assert!(!r.pass);
        assert_eq!(r.missing, vec![z(2), z(-2)]);

        let f2 = GroupSpec::free(2).unwrap();
        let fb1 = f2.ball(1).unwrap();
        let r = validate_closure(
            &f2,
            &fb1,
            &ClosureRequirement::DifferenceSet(fb1.elements().to_vec()),
        )
        .unwrap();
        assert!(!r.pass);
        // oracle: enumerate E E^-1 and keep the length-2 words
        let mut expected: Vec<Element> = Vec::new();
        for a in fb1.elements() {
            for b in fb1.elements() {
                let p = f2.multiply(a, &f2.inverse(b).unwrap()).unwrap();
                if !fb1.contains(&p) && !expected.contains(&p) {
                    expected.push(p);
                }
            }
        }
        assert_eq!(r.missing.len(), expected.len());
        assert!(r
            .missing
            .iter()
            .all(|m| matches!(m, Element::Word(w) if w.len() == 2)));

        let r = validate_closure(
            &z1,
            &b1,
            &ClosureRequirement::Translate {
                g: z(1),
                target: b2.clone(),
            },
        )
        .unwrap();
        assert!(r.pass);
        let h = GroupSpec::heisenberg();
        let hb = h.ball(1).unwrap();
        let r = validate_closure(
            &h,
            &hb,
            &ClosureRequirement::Conjugate {
                g: Element::Heisenberg([1, 0, 0]),
                subset: vec![Element::Heisenberg([0, 1, 0])],
            },
        )
        .unwrap();
        // x y x^-1 = (0,1,1) has length 3
        assert_eq!(r.missing, vec![Element::Heisenberg([0, 1, 1])]);
    }

    #[test]
    fn window_table() {
        let z1 = GroupSpec::lattice(1);
        let w = z1.ball(1).unwrap();
        let t = w.table(&z1);
        assert_eq!(t.product(1, 2), Some(0));
        assert_eq!(t.product(1, 1), None);
        assert_eq!(t.inverse(1), Some(2));
    }

    #[test]
    fn custom_generators_must_be_symmetric() {
        let z1 = GroupSpec::lattice(1);
        assert!(z1.clone().with_generators(vec![z(1)]).is_err());
        let s = z1.with_generators(vec![z(2), z(-2), z(3), z(-3)]).unwrap();
        let b = s.ball(1).unwrap();
        assert_eq!(b.elements(), &[z(0), z(2), z(-2), z(3), z(-3)]);
        let w = s.geodesic_words(&[z(1)], 4).unwrap();
        assert_eq!(s.evaluate_word(&w[0]), z(1));
        assert_eq!(w[0].len(), 2);
    }
}
