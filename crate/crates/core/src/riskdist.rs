//! Discrete return distributions and quantile-weighted risk functionals.
//!
//! A risk objective is described by a weighting function `G`, itself a CDF
//! over quantile levels `τ ∈ [0, 1]`. The objective of a return distribution
//! `F` is the Stieltjes integral `Φ = ∫ F†(τ) dG(τ)` of its quantile function.
//! For discrete distributions the integral is an exact finite sum, and it can
//! be evaluated two ways: over quantile levels ([`phi_quantile`]) or over the
//! return axis ([`phi_cdf`]), using `Φ = z_max − ∫ G(F(x)) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability mass below this threshold is dropped when building
/// distributions from lattice histograms.
pub const PRUNE_MASS: f64 = 1e-15;

const MASS_TOL: f64 = 1e-12;

/// Probability mass on a strictly increasing finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    grid: Vec<f64>,
    mass: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    grid: Vec<f64>,
    mass: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DiscreteDistribution::new(raw.grid, raw.mass)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution {
            grid: d.grid,
            mass: d.mass,
        }
    }
}

impl DiscreteDistribution {
    pub fn new(grid: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if grid.len() != mass.len() {
            return Err(Error::InvalidDistribution(format!(
                "grid has {} points but mass has {}",
                grid.len(),
                mass.len()
            )));
        }
        if grid.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite grid value".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution(
                "grid must be strictly increasing".into(),
            ));
        }
        if mass.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or NaN mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {total}, expected 1"
            )));
        }
        Ok(Self::from_parts(grid, mass))
    }

    fn from_parts(grid: Vec<f64>, mass: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for p in &mass {
            acc += p;
            cumulative.push(acc.min(1.0));
        }
        // F(z_m) = 1 exactly, so F†(1) is always the top support point.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        DiscreteDistribution {
            grid,
            mass,
            cumulative,
        }
    }

    pub fn point_mass(value: f64) -> Self {
        Self::from_parts(vec![value], vec![1.0])
    }

    /// Builds a distribution from a histogram over lattice indices, where
    /// index `i` carries the value `i * eta`. Entries below [`PRUNE_MASS`]
    /// are dropped and the remainder renormalized.
    pub fn from_lattice(eta: f64, hist: &[f64]) -> Result<Self> {
        let mut grid = Vec::new();
        let mut mass = Vec::new();
        for (i, &p) in hist.iter().enumerate() {
            if p < -MASS_TOL || p.is_nan() {
                return Err(Error::InvalidDistribution(format!(
                    "negative mass {p} at lattice index {i}"
                )));
            }
            if p > PRUNE_MASS {
                grid.push(i as f64 * eta);
                mass.push(p);
            }
        }
        let total: f64 = mass.iter().sum();
        if grid.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "lattice histogram sums to {total}, expected 1"
            )));
        }
        mass.iter_mut().for_each(|p| *p /= total);
        Ok(Self::from_parts(grid, mass))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `F_j = P(Z ≤ z_j)` at every support point.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.grid[0]
    }

    pub fn max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.mass).map(|(z, p)| z * p).sum()
    }

    /// Right-continuous CDF `F(x) = P(Z ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.grid.partition_point(|z| *z <= x) {
            0 => 0.0,
            n => self.cumulative[n - 1],
        }
    }

    /// Generalized inverse `F†(τ) = inf{x : F(x) ≥ τ}`; `τ = 0` maps to the
    /// bottom support point.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::domain(format!("quantile level {tau} not in [0, 1]")));
        }
        let j = self.cumulative.partition_point(|f| *f < tau);
        Ok(self.grid[j.min(self.grid.len() - 1)])
    }

    /// Largest CDF gap over the union of both supports.
    pub fn cdf_distance(&self, other: &DiscreteDistribution) -> f64 {
        self.grid
            .iter()
            .chain(other.grid.iter())
            .map(|&x| (self.cdf(x) - other.cdf(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// The family of a weighting function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightingKind {
    /// `G(τ) = min(τ/α, 1)`.
    Cvar { alpha: f64 },
    /// Unit step at `α`; evaluates the `α`-quantile.
    Var { alpha: f64 },
    /// `G(τ) = τ`.
    Expectation,
    /// Linear interpolation through `(τ, G(τ))` knots from `(0, 0)` to `(1, 1)`.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

/// A CDF over quantile levels defining the risk objective, with its
/// Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightingKind", into = "WeightingKind")]
pub struct WeightingFunction {
    kind: WeightingKind,
    lipschitz: f64,
}

impl TryFrom<WeightingKind> for WeightingFunction {
    type Error = Error;

    fn try_from(kind: WeightingKind) -> Result<Self> {
        make_weighting(kind)
    }
}

impl From<WeightingFunction> for WeightingKind {
    fn from(w: WeightingFunction) -> Self {
        w.kind
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} not in (0, 1]")))
    }
}

/// Validates parameters and attaches Lipschitz metadata.
pub fn make_weighting(kind: WeightingKind) -> Result<WeightingFunction> {
    let lipschitz = match &kind {
        WeightingKind::Cvar { alpha } => {
            check_level(*alpha)?;
            1.0 / alpha
        }
        WeightingKind::Var { alpha } => {
            check_level(*alpha)?;
            f64::INFINITY
        }
        WeightingKind::Expectation => 1.0,
        WeightingKind::PiecewiseLinear { knots } => {
            if knots.len() < 2 {
                return Err(Error::domain("piecewise-linear weighting needs two knots"));
            }
            let first = knots[0];
            let last = knots[knots.len() - 1];
            if first != (0.0, 0.0) || last != (1.0, 1.0) {
                return Err(Error::domain(
                    "piecewise-linear weighting must run from (0, 0) to (1, 1)",
                ));
            }
            let mut slope = 0.0f64;
            for w in knots.windows(2) {
                let (t0, g0) = w[0];
                let (t1, g1) = w[1];
                if t1 <= t0 {
                    return Err(Error::domain("knot levels must be strictly increasing"));
                }
                if g1 < g0 || !(0.0..=1.0).contains(&g1) {
                    return Err(Error::domain("knot values must be nondecreasing in [0, 1]"));
                }
                slope = slope.max((g1 - g0) / (t1 - t0));
            }
            slope
        }
    };
    Ok(WeightingFunction { kind, lipschitz })
}

impl WeightingFunction {
    pub fn cvar(alpha: f64) -> Result<Self> {
        make_weighting(WeightingKind::Cvar { alpha })
    }

    pub fn var(alpha: f64) -> Result<Self> {
        make_weighting(WeightingKind::Var { alpha })
    }

    pub fn expectation() -> Self {
        WeightingFunction {
            kind: WeightingKind::Expectation,
            lipschitz: 1.0,
        }
    }

    pub fn kind(&self) -> &WeightingKind {
        &self.kind
    }

    /// `L_G`; infinite for VaR.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz.is_finite()
    }

    /// The CVaR level if this is a CVaR weighting; expectation is CVaR at 1.
    pub fn cvar_level(&self) -> Option<f64> {
        match self.kind {
            WeightingKind::Cvar { alpha } => Some(alpha),
            WeightingKind::Expectation => Some(1.0),
            _ => None,
        }
    }

    /// Evaluates `G(τ)`, clamping `τ` into `[0, 1]`.
    pub fn eval(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match &self.kind {
            WeightingKind::Cvar { alpha } => (tau / alpha).min(1.0),
            WeightingKind::Var { alpha } => {
                if tau >= *alpha {
                    1.0
                } else {
                    0.0
                }
            }
            WeightingKind::Expectation => tau,
            WeightingKind::PiecewiseLinear { knots } => {
                let i = knots.partition_point(|(t, _)| *t <= tau);
                if i >= knots.len() {
                    return 1.0;
                }
                let (t0, g0) = knots[i - 1];
                let (t1, g1) = knots[i];
                g0 + (g1 - g0) * (tau - t0) / (t1 - t0)
            }
        }
    }
}

/// `Φ = Σ_j z_j · (G(F_j) − G(F_{j−1}))`, the quantile-integral form.
pub fn phi_quantile(dist: &DiscreteDistribution, g: &WeightingFunction) -> f64 {
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (z, f) in dist.grid().iter().zip(dist.cumulative()) {
        let gf = g.eval(*f);
        acc += z * (gf - prev);
        prev = gf;
    }
    acc
}

/// `Φ = z_max − Σ_{j<m} (z_{j+1} − z_j) · G(F_j)`, the CDF-integral form.
pub fn phi_cdf(dist: &DiscreteDistribution, g: &WeightingFunction) -> f64 {
    let grid = dist.grid();
    let cum = dist.cumulative();
    let integral: f64 = grid
        .windows(2)
        .zip(cum)
        .map(|(w, f)| (w[1] - w[0]) * g.eval(*f))
        .sum();
    dist.max() - integral
}
