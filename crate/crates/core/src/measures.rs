//! Finite measures on grids, Kullback-Leibler primitives, and shift-stabilized softmin/softmax.

use crate::error::{check_len, Error, Result};
use crate::scalar::{min_value, ordered_sum, Real};

/// Equidistant Cartesian grid. Point ids are row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry<T> {
    shape: Vec<usize>,
    spacing: T,
    origin: Vec<T>,
}

impl<T: Real> GridGeometry<T> {
    pub fn new(shape: Vec<usize>, spacing: T) -> Result<Self> {
        let origin = vec![T::zero(); shape.len()];
        Self::with_origin(shape, spacing, origin)
    }

    pub fn with_origin(shape: Vec<usize>, spacing: T, origin: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidInput(format!("grid axis of length 0 in shape {shape:?}")));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {spacing}")));
        }
        check_len("grid origin", shape.len(), origin.len())?;
        Ok(GridGeometry { shape, spacing, origin })
    }

    /// Cell-centred grid on the unit cube: spacing `1/max(shape)`, first point at `h/2`.
    pub fn unit(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().copied().max().unwrap_or(1).max(1);
        let h = T::one() / T::from_usize_lossy(n);
        let origin = vec![h / T::lit(2.0); shape.len()];
        Self::with_origin(shape, h, origin)
    }

    /// 1-d grid with unit spacing, used when a problem has no geometry of its own.
    pub fn index_line(n: usize) -> Result<Self> {
        Self::new(vec![n], T::one())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut id: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = id % self.shape[k];
            id /= self.shape[k];
        }
        idx
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> T {
        self.origin[axis] + self.spacing * T::from_usize_lossy(index)
    }

    pub fn point(&self, id: usize) -> Vec<T> {
        self.multi_index(id)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coordinate(k, i))
            .collect()
    }

    /// All point coordinates, flattened with stride `dim`.
    pub fn coordinates(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * self.dim());
        for id in 0..self.len() {
            out.extend(self.point(id));
        }
        out
    }
}

/// Non-negative weights over a finite point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    weights: Vec<T>,
    geometry: Option<GridGeometry<T>>,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= T::zero())) {
            return Err(Error::InvalidInput(format!("weight {i} is {w}; weights must be finite and >= 0")));
        }
        Ok(DiscreteMeasure { weights, geometry: None })
    }

    pub fn on_grid(weights: Vec<T>, geometry: GridGeometry<T>) -> Result<Self> {
        check_len("measure on grid", geometry.len(), weights.len())?;
        let mut m = Self::new(weights)?;
        m.geometry = Some(geometry);
        Ok(m)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }

    pub fn geometry(&self) -> Option<&GridGeometry<T>> {
        self.geometry.as_ref()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> T {
        ordered_sum(&self.weights)
    }

    /// Rescales to total mass one. Fails on a zero measure.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.total_mass();
        if !(m > T::zero()) {
            return Err(Error::InvalidInput("cannot normalize a zero measure".into()));
        }
        Ok(DiscreteMeasure {
            weights: self.weights.iter().map(|&w| w / m).collect(),
            geometry: self.geometry.clone(),
        })
    }
}

/// KL(μ|ν) = Σ_{μ>0} μ log(μ/ν) − μ(Z) + ν(Z), or +∞ if μ is not absolutely continuous w.r.t. ν.
pub fn kl_divergence<T: Real>(mu: &[T], nu: &[T]) -> Result<T> {
    check_len("kl_divergence", mu.len(), nu.len())?;
    let mut acc = T::zero();
    for (&m, &n) in mu.iter().zip(nu) {
        if m < T::zero() || n < T::zero() {
            return Ok(T::infinity());
        }
        if m > T::zero() {
            if n == T::zero() {
                return Ok(T::infinity());
            }
            acc = acc + m * (m / n).ln();
        }
        acc = acc - m + n;
    }
    Ok(acc)
}

/// KL*(α|ν) = Σ (exp α − 1) ν, the conjugate in the first argument.
pub fn kl_conjugate<T: Real>(alpha: &[T], nu: &[T]) -> Result<T> {
    check_len("kl_conjugate", alpha.len(), nu.len())?;
    Ok(alpha
        .iter()
        .zip(nu)
        .fold(T::zero(), |acc, (&a, &n)| acc + a.exp_m1() * n))
}

/// −ε log Σ exp(−a/ε), evaluated after subtracting min(a).
pub fn softmin<T: Real>(a: &[T], eps: T) -> Result<T> {
    if a.is_empty() {
        return Err(Error::InvalidInput("softmin of an empty vector".into()));
    }
    if !(eps > T::zero()) {
        return Err(Error::InvalidInput(format!("softmin needs eps > 0, got {eps}")));
    }
    let m = min_value(a);
    if !m.is_finite() {
        return Ok(m);
    }
    let s = a.iter().fold(T::zero(), |acc, &x| acc + (-(x - m) / eps).exp());
    Ok(m - eps * s.ln())
}

/// softmax(a, ε) = −softmin(−a, ε).
pub fn softmax<T: Real>(a: &[T], eps: T) -> Result<T> {
    let neg: Vec<T> = a.iter().map(|&x| -x).collect();
    Ok(-softmin(&neg, eps)?)
}
