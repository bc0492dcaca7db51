//! Binary words and the self-similar H-tree `I_ω = [z_ω, z_ω + ζ_ω]`.
//!
//! Each segment spawns two perpendicular children of relative length λ at
//! its `(1−ε)`-point; digit 1 turns by `+i`, digit 0 by `−i`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{box_count_auto, point_in_convex_polygon, segment_distance, BoxCountReport, Containment};
use crate::ratmap::Complex;

pub const MAX_DEPTH: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HTreeError {
    #[error("depth {0} exceeds the cap {MAX_DEPTH}")]
    DepthTooLarge(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid word {0:?}")]
    InvalidWord(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    digits: Vec<u8>,
}

impl Word {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self, HTreeError> {
        if digits.iter().any(|&d| d > 1) {
            return Err(HTreeError::InvalidWord(format!("{digits:?}")));
        }
        Ok(Self { digits: digits.to_vec() })
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digit_sum(&self) -> usize {
        self.digits.iter().map(|&d| d as usize).sum()
    }

    /// `|ω| − Σω`, the number of zeros.
    pub fn sign(&self) -> usize {
        self.len() - self.digit_sum()
    }

    pub fn child(&self, s: u8) -> Word {
        let mut d = self.digits.clone();
        d.push(s);
        Word { digits: d }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut d = self.digits.clone();
        d.extend_from_slice(&other.digits);
        Word { digits: d }
    }

    /// `ω̃`: the word with its last digit removed.
    pub fn parent(&self) -> Option<Word> {
        if self.is_empty() {
            None
        } else {
            Some(Word { digits: self.digits[..self.len() - 1].to_vec() })
        }
    }

    pub fn last(&self) -> Option<u8> {
        self.digits.last().copied()
    }

    /// Sibling `ω̃·(1−s)` of a non-empty word.
    pub fn sibling(&self) -> Option<Word> {
        let s = self.last()?;
        Some(self.parent()?.child(1 - s))
    }

    pub fn is_parent_of(&self, other: &Word) -> bool {
        other.parent().as_ref() == Some(self)
    }

    /// Breadth-first position: `2^{|ω|} − 1 + value(ω)` (first digit most
    /// significant).
    pub fn heap_index(&self) -> usize {
        let v = self.digits.iter().fold(0usize, |acc, &d| 2 * acc + d as usize);
        (1usize << self.len()) - 1 + v
    }

    pub fn from_heap_index(idx: usize) -> Word {
        let len = (usize::BITS - (idx + 1).leading_zeros() - 1) as usize;
        let v = idx + 1 - (1usize << len);
        let digits = (0..len).rev().map(|k| ((v >> k) & 1) as u8).collect();
        Word { digits }
    }

    /// All words of length ≤ depth, shorter words first, then in
    /// lexicographic order.
    pub fn enumerate(depth: usize) -> Vec<Word> {
        (0..(1usize << (depth + 1)) - 1).map(Word::from_heap_index).collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "e");
        }
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = HTreeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "e" || s.is_empty() {
            return Ok(Word::empty());
        }
        let digits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(HTreeError::InvalidWord(s.to_string())),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(Word { digits })
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub base: Complex,
    pub dir: Complex,
}

impl Segment {
    pub fn tip(&self) -> Complex {
        self.base + self.dir
    }

    /// The affine similarity `ψ_ω(u) = z_ω + ζ_ω·u` mapping `[0,1]` onto
    /// this segment.
    pub fn psi(&self, u: Complex) -> Complex {
        self.base + self.dir * u
    }

    /// `Ω_ω`: image of the rectangle `[−ε/100, 1+ε/100] × [−ε/100, ε/100]`,
    /// vertices counter-clockwise.
    pub fn omega(&self, eps: f64) -> [Complex; 4] {
        let m = eps / 100.0;
        [
            self.psi(Complex::new(-m, -m)),
            self.psi(Complex::new(1.0 + m, -m)),
            self.psi(Complex::new(1.0 + m, m)),
            self.psi(Complex::new(-m, m)),
        ]
    }

    pub fn child(&self, s: u8, eps: f64, lambda: f64) -> Segment {
        let turn = if s == 1 { Complex::new(0.0, lambda) } else { Complex::new(0.0, -lambda) };
        Segment { base: self.base + (1.0 - eps) * self.dir, dir: turn * self.dir }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HTreeConfig {
    pub eps: f64,
    pub lambda: f64,
    pub depth: usize,
}

pub fn lambda_cap() -> f64 {
    2f64.powf(-0.5) - 1e-6
}

impl HTreeConfig {
    /// `λ = 2^{−1/2} − ε`.
    pub fn from_eps(eps: f64, depth: usize) -> Result<Self, HTreeError> {
        let c = Self { eps, lambda: 2f64.powf(-0.5) - eps, depth };
        c.validate()?;
        Ok(c)
    }

    /// `λ = 2^{−1/β}` clipped to the separation cap; the similarity
    /// dimension of the tip set is then `β`.
    pub fn from_beta(beta: f64, eps: f64, depth: usize) -> Result<Self, HTreeError> {
        if !(beta > 0.0) {
            return Err(HTreeError::InvalidConfig(format!("beta = {beta}")));
        }
        let c = Self { eps, lambda: 2f64.powf(-1.0 / beta).min(lambda_cap()), depth };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HTreeError> {
        if !(self.eps > 0.0 && self.eps <= 0.2) {
            return Err(HTreeError::InvalidConfig(format!("eps = {} not in (0, 0.2]", self.eps)));
        }
        if !(self.lambda > 0.0 && self.lambda <= lambda_cap()) {
            return Err(HTreeError::InvalidConfig(format!("lambda = {} not in (0, 2^-1/2 - 1e-6]", self.lambda)));
        }
        if self.depth > MAX_DEPTH {
            return Err(HTreeError::DepthTooLarge(self.depth));
        }
        Ok(())
    }

    pub fn similarity_dimension(&self) -> f64 {
        2f64.ln() / (1.0 / self.lambda).ln()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HTree {
    pub config: HTreeConfig,
    /// Segments in heap order (see `Word::heap_index`).
    pub segments: Vec<Segment>,
}

pub fn build_tree(config: &HTreeConfig) -> Result<HTree, HTreeError> {
    config.validate()?;
    let count = (1usize << (config.depth + 1)) - 1;
    let mut segments = Vec::with_capacity(count);
    segments.push(Segment { base: Complex::new(0.0, 0.0), dir: Complex::new(1.0, 0.0) });
    for idx in 1..count {
        let parent = segments[(idx - 1) / 2];
        // odd heap index ↔ last digit 0
        let s = if idx % 2 == 1 { 0 } else { 1 };
        segments.push(parent.child(s, config.eps, config.lambda));
    }
    Ok(HTree { config: *config, segments })
}

impl HTree {
    pub fn segment(&self, w: &Word) -> Option<&Segment> {
        self.segments.get(w.heap_index())
    }

    pub fn words(&self) -> Vec<Word> {
        Word::enumerate(self.config.depth)
    }

    pub fn omega(&self, w: &Word) -> Option<[Complex; 4]> {
        self.segment(w).map(|s| s.omega(self.config.eps))
    }
}

/// Far endpoints of the deepest generation.
pub fn endpoint_sample(tree: &HTree) -> Vec<Complex> {
    let d = tree.config.depth;
    let start = (1usize << d) - 1;
    tree.segments[start..].iter().map(Segment::tip).collect()
}

pub fn dimension_estimate(tree: &HTree) -> Result<BoxCountReport, crate::analysis::AnalysisError> {
    box_count_auto(&endpoint_sample(tree))
}

pub fn rect_distance(a: &[Complex; 4], b: &[Complex; 4]) -> f64 {
    for &p in a {
        if point_in_convex_polygon(p, b).is_ok_and(|c| c != Containment::Outside) {
            return 0.0;
        }
    }
    for &p in b {
        if point_in_convex_polygon(p, a).is_ok_and(|c| c != Containment::Outside) {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            best = best.min(segment_distance(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4]));
        }
    }
    best
}

pub fn rect_diameter(r: &[Complex; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((r[i] - r[j]).norm());
        }
    }
    d
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub depth: usize,
    /// min over admissible pairs of `dist(Ω_ω₁, Ω_ω₂)/λ^{min(|ω₁|,|ω₂|)}`.
    pub min_separation_ratio: f64,
    pub min_separation_pair: Option<(Word, Word)>,
    pub min_diam_ratio: f64,
    pub max_diam_ratio: f64,
    /// Siblings share their base point, so this is always 0; reported for
    /// completeness and excluded from the separation minimum.
    pub sibling_separation_ratio: f64,
    pub pairs_checked: usize,
    pub pass: bool,
}

/// Separation and diameter ratios of the `Ω_ω` over all word pairs up to
/// the tree depth. Parent–child and sibling pairs touch by construction and
/// are excluded from the separation minimum.
pub fn check_geometry(tree: &HTree) -> Result<GeometryReport, HTreeError> {
    let depth = tree.config.depth;
    if depth < 2 {
        return Err(HTreeError::InvalidConfig(format!("geometry check needs depth >= 2, got {depth}")));
    }
    let lam = tree.config.lambda;
    let words = tree.words();
    let rects: Vec<[Complex; 4]> = tree.segments.iter().map(|s| s.omega(tree.config.eps)).collect();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for w in &words {
        let r = rect_diameter(&rects[w.heap_index()]) / lam.powi(w.len() as i32);
        dmin = dmin.min(r);
        dmax = dmax.max(r);
    }
    let n = words.len();
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX, 0usize);
            for j in i + 1..n {
                let (a, b) = (&words[i], &words[j]);
                if a.is_parent_of(b) || b.is_parent_of(a) || a.sibling().as_ref() == Some(b) {
                    continue;
                }
                best.3 += 1;
                let r = rect_distance(&rects[i], &rects[j]) / lam.powi(a.len().min(b.len()) as i32);
                if r < best.0 {
                    best = (r, i, j, best.3);
                }
            }
            best
        })
        .collect::<Vec<_>>();
    let pairs_checked = best.iter().map(|b| b.3).sum();
    let min = best.iter().filter(|b| b.1 != usize::MAX).min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let (ratio, pair) = match min {
        Some(&(r, i, j, _)) => (r, Some((words[i].clone(), words[j].clone()))),
        None => (f64::INFINITY, None),
    };
    let sib = rect_distance(&rects[1], &rects[2]) / lam;
    Ok(GeometryReport {
        depth,
        min_separation_ratio: ratio,
        min_separation_pair: pair,
        min_diam_ratio: dmin,
        max_diam_ratio: dmax,
        sibling_separation_ratio: sib,
        pairs_checked,
        pass: ratio > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn word_basics() {
        let x = w("0110");
        assert_eq!(x.len(), 4);
        assert_eq!(x.digit_sum(), 2);
        assert_eq!(x.sign(), 2);
        assert_eq!(x.parent().unwrap(), w("011"));
        assert_eq!(x.sibling().unwrap(), w("0111"));
        assert_eq!(Word::empty().to_string(), "e");
        assert_eq!(w("e"), Word::empty());
        assert!(w("01").is_parent_of(&w("010")));
        assert!("012".parse::<Word>().is_err());
        let all = Word::enumerate(3);
        assert_eq!(all.len(), 15);
        for (i, x) in all.iter().enumerate() {
            assert_eq!(x.heap_index(), i);
        }
    }

    #[test]
    fn depth_zero_and_one() {
        let t = build_tree(&HTreeConfig::from_eps(0.01, 0).unwrap()).unwrap();
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.segments[0].base, Complex::new(0.0, 0.0));
        assert_eq!(t.segments[0].tip(), Complex::new(1.0, 0.0));

        let t = build_tree(&HTreeConfig::from_eps(0.01, 1).unwrap()).unwrap();
        let lam = 2f64.powf(-0.5) - 0.01;
        assert!((lam - 0.69710678).abs() < 1e-8);
        let s1 = t.segment(&w("1")).unwrap();
        assert!((s1.base - Complex::new(0.99, 0.0)).norm() < 1e-15);
        assert!((s1.tip() - Complex::new(0.99, lam)).norm() < 1e-15);
        let pts = endpoint_sample(&t);
        assert_eq!(pts.len(), 2);
        assert!((pts[0] - Complex::new(0.99, -lam)).norm() < 1e-15);
        assert!((pts[1] - Complex::new(0.99, lam)).norm() < 1e-15);
    }

    #[test]
    fn lengths_contract() {
        let c = HTreeConfig::from_eps(0.01, 6).unwrap();
        let t = build_tree(&c).unwrap();
        for x in t.words() {
            let len = t.segment(&x).unwrap().dir.norm();
            let expect = c.lambda.powi(x.len() as i32);
            assert!((len - expect).abs() <= 1e-12 * expect);
        }
        assert!((c.lambda.powi(2) - 0.48596).abs() < 1e-5);
        let bound = 1.0 / (1.0 - c.lambda);
        assert!(endpoint_sample(&t).iter().all(|p| p.norm() < bound));
        assert_eq!(endpoint_sample(&t).len(), 64);
    }

    #[test]
    fn config_rules() {
        assert!(HTreeConfig::from_eps(0.0, 3).is_err());
        assert!(HTreeConfig::from_eps(0.3, 3).is_err());
        assert!(matches!(HTreeConfig::from_eps(0.01, 25), Err(HTreeError::DepthTooLarge(25))));
        let c = HTreeConfig::from_beta(2.0, 0.01, 3).unwrap();
        assert_eq!(c.lambda, lambda_cap());
        let c = HTreeConfig::from_beta(1.5, 0.01, 3).unwrap();
        assert!((c.similarity_dimension() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn geometry_ratios() {
        let c = HTreeConfig::from_eps(0.01, 5).unwrap();
        let t = build_tree(&c).unwrap();
        let r = check_geometry(&t).unwrap();
        let diag = ((1.0f64 + 0.01 / 50.0).powi(2) + (0.01f64 / 50.0).powi(2)).sqrt();
        assert!((r.min_diam_ratio - diag).abs() < 1e-12 && (r.max_diam_ratio - diag).abs() < 1e-12);
        assert!(r.min_diam_ratio >= 1.0 && r.max_diam_ratio <= 1.0 + 0.01 / 25.0);
        assert!(r.pass && r.min_separation_ratio > 0.0);
        // siblings meet at their common base point
        assert_eq!(r.sibling_separation_ratio, 0.0);

        // At small ε deep spirals creep towards ancestor segments for many
        // generations before the ratio settles; ε = 0.2 is settled by depth 4.
        let r4 = check_geometry(&build_tree(&HTreeConfig::from_eps(0.2, 4).unwrap()).unwrap()).unwrap();
        let r8 = check_geometry(&build_tree(&HTreeConfig::from_eps(0.2, 8).unwrap()).unwrap()).unwrap();
        assert!((r8.min_separation_ratio / r4.min_separation_ratio - 1.0).abs() < 0.1);
    }

    #[test]
    fn prefix_self_similarity() {
        // Ω_{s·ω} = ψ_s(Ω_ω): separation ratios are invariant under a common prefix.
        let c = HTreeConfig::from_eps(0.01, 6).unwrap();
        let t = build_tree(&c).unwrap();
        let lam = c.lambda;
        let pairs = [("00", "11"), ("010", "1"), ("0011", "0110"), ("", "101")];
        for (a, b) in pairs {
            let (a, b) = (w(a), w(b));
            let (pa, pb) = (w("1").concat(&a), w("1").concat(&b));
            let m = a.len().min(b.len()) as i32;
            let r0 = rect_distance(&t.omega(&a).unwrap(), &t.omega(&b).unwrap()) / lam.powi(m);
            let r1 = rect_distance(&t.omega(&pa).unwrap(), &t.omega(&pb).unwrap()) / lam.powi(m + 1);
            assert!((r0 - r1).abs() <= 1e-9 * (1.0 + r0), "{a} {b}: {r0} {r1}");
        }
    }

    #[test]
    fn box_slope_survives_rigid_and_affine_maps() {
        let t = build_tree(&HTreeConfig::from_beta(1.5, 0.01, 12).unwrap()).unwrap();
        let pts = endpoint_sample(&t);
        let base = dimension_estimate(&t).unwrap().slope;
        for (rot, scale, shear) in [(0.3, 1.0, 0.0), (1.0, 0.5, 0.1), (2.0, 2.0, -0.2), (0.7, 1.3, 0.0)] {
            let img: Vec<Complex> =
                pts.iter().map(|&z| Complex::from_polar(scale, rot) * Complex::new(z.re + shear * z.im, z.im)).collect();
            let s = box_count_auto(&img).unwrap().slope;
            assert!((s - base).abs() < 0.05, "{rot} {scale} {shear}: {s} vs {base}");
        }
    }

    proptest! {
        #[test]
        fn subtree_is_image_of_tree(s in 0u8..2, depth in 1usize..7, eps in 0.001f64..0.2) {
            let c = HTreeConfig::from_eps(eps, depth).unwrap();
            let small = build_tree(&c).unwrap();
            let big = build_tree(&HTreeConfig { depth: depth + 1, ..c }).unwrap();
            let root = *big.segment(&Word::from_digits(&[s]).unwrap()).unwrap();
            for x in small.words() {
                let seg = small.segment(&x).unwrap();
                let img = big.segment(&Word::from_digits(&[s]).unwrap().concat(&x)).unwrap();
                prop_assert!((root.psi(seg.base) - img.base).norm() < 1e-12);
                prop_assert!((root.dir * seg.dir - img.dir).norm() < 1e-12);
            }
        }

        #[test]
        fn heap_index_roundtrip(idx in 0usize..100_000) {
            prop_assert_eq!(Word::from_heap_index(idx).heap_index(), idx);
        }
    }
}
