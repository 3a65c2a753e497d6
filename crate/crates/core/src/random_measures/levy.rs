use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre_on;
use crate::error::{Error, Result};

/// λ(u): intensity tilt applied to a Lévy measure.
pub type LambdaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub const DEFAULT_GL_NODES: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkNorm {
    #[default]
    Euclidean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkSpace {
    pub dimension: usize,
    pub norm: MarkNorm,
}

impl MarkSpace {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            norm: MarkNorm::Euclidean,
        }
    }

    pub fn norm_of(&self, u: &[f64]) -> f64 {
        match self.norm {
            MarkNorm::Euclidean => u.iter().map(|x| x * x).sum::<f64>().sqrt(),
            MarkNorm::Max => u.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm_of(&d)
    }
}

/// Mark region `{u : min_norm ≤ ‖u‖ < max_norm, u ≠ 0}`.
///
/// The full region is `U₀`; annuli give the finite-mass subsets `U` used by
/// the auxiliary processes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min_norm: f64,
    pub max_norm: f64,
}

impl Region {
    pub fn full() -> Self {
        Self {
            min_norm: 0.0,
            max_norm: f64::INFINITY,
        }
    }

    pub fn annulus(min_norm: f64, max_norm: f64) -> Self {
        Self { min_norm, max_norm }
    }

    pub fn empty() -> Self {
        Self {
            min_norm: f64::INFINITY,
            max_norm: f64::INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.min_norm < self.max_norm)
    }

    pub fn contains_norm(&self, norm: f64) -> bool {
        norm > 0.0 && norm >= self.min_norm && norm < self.max_norm
    }

    /// Intersection of two regions.
    pub fn intersect(&self, other: &Region) -> Region {
        Region {
            min_norm: self.min_norm.max(other.min_norm),
            max_norm: self.max_norm.min(other.max_norm),
        }
    }
}

impl Default for Region {
    fn default() -> Self {
        Region::full()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mark: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Discrete(Vec<Atom>),
    /// Constant density on a finite union of disjoint 1-D intervals.
    Uniform { pieces: Vec<(f64, f64)>, density: f64 },
}

/// Finite-activity Lévy measure ν with sampling, mass and quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyMeasure {
    space: MarkSpace,
    kind: Kind,
    gl_nodes: usize,
}

/// Weighted mark nodes; `Σ w f(u)` approximates `∫ f dν` on a region.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    marks: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            marks: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.marks
            .chunks_exact(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(u, w)| w * f(u)).sum()
    }

    /// Rule for the measure `g(u) ν(du)`.
    pub fn weighted(&self, g: impl Fn(&[f64]) -> f64) -> Self {
        let weights = self.iter().map(|(u, w)| w * g(u)).collect();
        Self {
            dim: self.dim,
            marks: self.marks.clone(),
            weights,
        }
    }
}

impl LevyMeasure {
    pub fn discrete(atoms: Vec<Atom>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(|a| a.mark.len())
            .ok_or_else(|| Error::config("discrete Lévy measure needs at least one atom"))?;
        if dim == 0 {
            return Err(Error::config("marks must have positive dimension"));
        }
        let space = MarkSpace::new(dim);
        for a in &atoms {
            if a.mark.len() != dim {
                return Err(Error::config("all atoms must share one mark dimension"));
            }
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::config(format!("atom weight {} is not a finite nonnegative number", a.weight)));
            }
            if !(space.norm_of(&a.mark) > 0.0) {
                return Err(Error::config("atoms must avoid the origin of the mark space"));
            }
        }
        Ok(Self {
            space,
            kind: Kind::Discrete(atoms),
            gl_nodes: DEFAULT_GL_NODES,
        })
    }

    pub fn point_mass(mark: Vec<f64>, weight: f64) -> Result<Self> {
        Self::discrete(vec![Atom { mark, weight }])
    }

    /// Uniform measure of the given total mass on `[lo, hi]`.
    pub fn uniform_interval(lo: f64, hi: f64, total_mass: f64) -> Result<Self> {
        Self::uniform_pieces(vec![(lo, hi)], total_mass)
    }

    /// Uniform measure on `[lo, hi] ∖ (hole_lo, hole_hi)`.
    pub fn uniform_with_hole(lo: f64, hi: f64, hole_lo: f64, hole_hi: f64, total_mass: f64) -> Result<Self> {
        if !(lo <= hole_lo && hole_lo < hole_hi && hole_hi <= hi) {
            return Err(Error::config("hole must lie inside the interval"));
        }
        let pieces: Vec<_> = [(lo, hole_lo), (hole_hi, hi)]
            .into_iter()
            .filter(|(a, b)| b > a)
            .collect();
        Self::uniform_pieces(pieces, total_mass)
    }

    pub fn uniform_pieces(mut pieces: Vec<(f64, f64)>, total_mass: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::config("uniform Lévy measure needs at least one interval"));
        }
        if !(total_mass.is_finite() && total_mass >= 0.0) {
            return Err(Error::config(format!("total mass {total_mass} must be finite and nonnegative")));
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(a, b)) in pieces.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::config(format!("bad interval [{a}, {b}]")));
            }
            if i > 0 && a < pieces[i - 1].1 {
                return Err(Error::config("uniform intervals overlap"));
            }
        }
        let length: f64 = pieces.iter().map(|(a, b)| b - a).sum();
        Ok(Self {
            space: MarkSpace::new(1),
            kind: Kind::Uniform {
                pieces,
                density: total_mass / length,
            },
            gl_nodes: DEFAULT_GL_NODES,
        })
    }

    pub fn with_quadrature_nodes(mut self, n: usize) -> Self {
        self.gl_nodes = n.max(1);
        self
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.gl_nodes
    }

    pub fn mark_space(&self) -> MarkSpace {
        self.space
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, Kind::Discrete(_))
    }

    fn atoms_in<'a>(&'a self, atoms: &'a [Atom], region: &'a Region) -> impl Iterator<Item = &'a Atom> + 'a {
        atoms
            .iter()
            .filter(move |a| region.contains_norm(self.space.norm_of(&a.mark)))
    }

    /// Pieces of a uniform measure intersected with `{min ≤ |u| < max}`.
    fn clipped_pieces(pieces: &[(f64, f64)], region: &Region) -> Vec<(f64, f64)> {
        if region.is_empty() {
            return Vec::new();
        }
        let bands = [(-region.max_norm, -region.min_norm), (region.min_norm, region.max_norm)];
        let mut out = Vec::new();
        for &(a, b) in pieces {
            for &(lo, hi) in &bands {
                let l = a.max(lo);
                let h = b.min(hi);
                if h > l {
                    out.push((l, h));
                }
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out
    }

    pub fn mass(&self, region: &Region) -> f64 {
        match &self.kind {
            Kind::Discrete(atoms) => self.atoms_in(atoms, region).map(|a| a.weight).sum(),
            Kind::Uniform { pieces, density } => {
                density * Self::clipped_pieces(pieces, region).iter().map(|(a, b)| b - a).sum::<f64>()
            }
        }
    }

    /// Draws one mark from ν restricted to `region` and normalised.
    pub fn sample<R: Rng + ?Sized>(&self, region: &Region, rng: &mut R) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Discrete(atoms) => {
                let inside: Vec<&Atom> = self.atoms_in(atoms, region).filter(|a| a.weight > 0.0).collect();
                let total: f64 = inside.iter().map(|a| a.weight).sum();
                if inside.is_empty() || total <= 0.0 {
                    return Err(Error::config("cannot sample from a region of zero mass"));
                }
                let mut target = rng.random::<f64>() * total;
                for a in &inside {
                    if target < a.weight {
                        return Ok(a.mark.clone());
                    }
                    target -= a.weight;
                }
                Ok(inside[inside.len() - 1].mark.clone())
            }
            Kind::Uniform { pieces, .. } => {
                let clipped = Self::clipped_pieces(pieces, region);
                let total: f64 = clipped.iter().map(|(a, b)| b - a).sum();
                if !(total > 0.0) {
                    return Err(Error::config("cannot sample from a region of zero mass"));
                }
                let mut target = rng.random::<f64>() * total;
                for &(a, b) in &clipped {
                    let len = b - a;
                    if target < len {
                        return Ok(vec![a + target]);
                    }
                    target -= len;
                }
                let (a, b) = clipped[clipped.len() - 1];
                Ok(vec![0.5 * (a + b)])
            }
        }
    }

    /// Quadrature rule on `region` using the default node count.
    pub fn rule(&self, region: &Region) -> QuadratureRule {
        self.rule_with_nodes(region, self.gl_nodes)
    }

    /// Discrete measures sum exactly over atoms; uniform measures use
    /// `nodes`-point Gauss–Legendre on every clipped interval.
    pub fn rule_with_nodes(&self, region: &Region, nodes: usize) -> QuadratureRule {
        let dim = self.dimension();
        match &self.kind {
            Kind::Discrete(atoms) => {
                let mut marks = Vec::new();
                let mut weights = Vec::new();
                for a in self.atoms_in(atoms, region) {
                    marks.extend_from_slice(&a.mark);
                    weights.push(a.weight);
                }
                QuadratureRule { dim, marks, weights }
            }
            Kind::Uniform { pieces, density } => {
                let mut marks = Vec::new();
                let mut weights = Vec::new();
                for (a, b) in Self::clipped_pieces(pieces, region) {
                    for (x, w) in gauss_legendre_on(nodes, a, b) {
                        marks.push(x);
                        weights.push(w * density);
                    }
                }
                QuadratureRule { dim, marks, weights }
            }
        }
    }

    pub fn integrate(&self, region: &Region, f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.rule(region).integrate(f)
    }

    /// `ν({u ∈ region : ‖u − center‖ < radius})`.
    pub fn mass_within(&self, region: &Region, center: &[f64], radius: f64) -> f64 {
        match &self.kind {
            Kind::Discrete(atoms) => self
                .atoms_in(atoms, region)
                .filter(|a| self.space.distance(&a.mark, center) < radius)
                .map(|a| a.weight)
                .sum(),
            Kind::Uniform { pieces, density } => {
                let (lo, hi) = (center[0] - radius, center[0] + radius);
                density
                    * Self::clipped_pieces(pieces, region)
                        .iter()
                        .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                        .sum::<f64>()
            }
        }
    }

    /// `∫ ‖u‖² ν(du)` over the region.
    pub fn second_moment(&self, region: &Region) -> f64 {
        let space = self.space;
        self.integrate(region, |u| space.norm_of(u).powi(2))
    }

    /// Whether `u` lies in the closed support of ν restricted to `region`.
    pub fn in_support(&self, region: &Region, u: &[f64]) -> bool {
        if u.len() != self.dimension() {
            return false;
        }
        match &self.kind {
            Kind::Discrete(atoms) => self
                .atoms_in(atoms, region)
                .any(|a| a.weight > 0.0 && self.space.distance(&a.mark, u) <= 1e-12),
            Kind::Uniform { pieces, density } => {
                *density > 0.0
                    && Self::clipped_pieces(pieces, region)
                        .iter()
                        .any(|&(a, b)| u[0] >= a && u[0] <= b)
            }
        }
    }
}

/// The measure `λ(u) ν(du)` on a region: the compensator of the driving noise.
#[derive(Clone)]
pub struct Compensator {
    pub measure: Arc<LevyMeasure>,
    pub region: Region,
    pub tilt: Option<LambdaFn>,
}

impl fmt::Debug for Compensator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Compensator")
            .field("measure", &self.measure)
            .field("region", &self.region)
            .field("tilted", &self.tilt.is_some())
            .finish()
    }
}

impl Compensator {
    pub fn new(measure: Arc<LevyMeasure>, region: Region) -> Self {
        Self {
            measure,
            region,
            tilt: None,
        }
    }

    pub fn tilted(mut self, lambda: LambdaFn) -> Self {
        self.tilt = Some(lambda);
        self
    }

    pub fn restricted(&self, region: &Region) -> Self {
        Self {
            measure: self.measure.clone(),
            region: self.region.intersect(region),
            tilt: self.tilt.clone(),
        }
    }

    pub fn rule(&self) -> QuadratureRule {
        let base = self.measure.rule(&self.region);
        match &self.tilt {
            Some(l) => base.weighted(|u| l(u)),
            None => base,
        }
    }

    pub fn mass(&self) -> f64 {
        self.rule().total()
    }
}
