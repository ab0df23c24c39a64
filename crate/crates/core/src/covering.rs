//! Discretized circles, n-fold covering maps, the direct-image isomorphism
//! beta and its inverse, deck transformations, and the flat-bundle
//! decomposition of the direct image of the trivial line bundle.
//!
//! Conventions, fixed once:
//! - base and cover share the same circumference (default 2*pi) and the
//!   covering is the angle map `theta -> n*theta`;
//! - the cover grid always has `n *` the base points, so the covering maps
//!   grid points to grid points exactly and beta involves no interpolation;
//! - preimages of a base point are ordered by increasing cover angle.

use crate::error::{Error, Result};
use crate::util::periodic_grid;
use crate::CVec;
use num_complex::Complex64;
use std::f64::consts::TAU;

/// An equispaced grid on a circle. First point at angle 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleGrid {
    num_points: usize,
    circumference: f64,
    points: Vec<f64>,
}

impl CircleGrid {
    pub fn new(num_points: usize, circumference: f64) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::Domain(format!(
                "circle grid needs at least 2 points, got {num_points}"
            )));
        }
        if !(circumference > 0.0) {
            return Err(Error::Domain(format!(
                "circumference must be positive, got {circumference}"
            )));
        }
        Ok(Self {
            num_points,
            circumference,
            points: periodic_grid(num_points, 0.0, circumference),
        })
    }

    /// Grid with the default circumference 2*pi.
    pub fn unit(num_points: usize) -> Result<Self> {
        Self::new(num_points, TAU)
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn circumference(&self) -> f64 {
        self.circumference
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn step(&self) -> f64 {
        self.circumference / self.num_points as f64
    }
}

/// Complex vector-valued function sampled on a [`CircleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: CircleGrid,
    rank: usize,
    values: Vec<CVec>,
}

impl GridFunction {
    pub fn new(grid: CircleGrid, rank: usize, values: Vec<CVec>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Domain("rank must be positive".into()));
        }
        if values.len() != grid.num_points() {
            return Err(Error::Domain(format!(
                "expected {} values, got {}",
                grid.num_points(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != rank) {
            return Err(Error::Domain(format!(
                "value of length {} does not match rank {rank}",
                bad.len()
            )));
        }
        Ok(Self { grid, rank, values })
    }

    /// Sample a scalar function of the angle.
    pub fn sample_scalar(grid: &CircleGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid
            .points()
            .iter()
            .map(|&x| CVec::from_element(1, f(x)))
            .collect();
        Self {
            grid: grid.clone(),
            rank: 1,
            values,
        }
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn values(&self) -> &[CVec] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &CVec {
        &self.values[i]
    }
}

/// The n-th roots of unity: holonomies of the flat line bundles into which
/// the direct image of the trivial bundle decomposes.
#[derive(Debug, Clone)]
pub struct FlatBundleDecomposition {
    holonomies: Vec<Complex64>,
}

impl FlatBundleDecomposition {
    pub fn holonomies(&self) -> &[Complex64] {
        &self.holonomies
    }

    /// Twist exponents `j/n` in [0, 1), one per flat line bundle.
    pub fn twist_exponents(&self) -> Vec<f64> {
        let n = self.holonomies.len() as f64;
        (0..self.holonomies.len()).map(|j| j as f64 / n).collect()
    }
}

/// An n-fold covering of one circle grid by another, realized by the angle
/// map `theta -> n*theta` on matched grids.
#[derive(Debug, Clone)]
pub struct CoveringMap {
    sheets: usize,
    base: CircleGrid,
    cover: CircleGrid,
    /// `fiber_index[i]` lists the cover indices over base point `i`,
    /// ordered by increasing cover angle.
    fiber_index: Vec<Vec<usize>>,
}

/// Build the covering with `n` sheets over a base grid of `base_points`
/// points. Rejects `n = 0` and `base_points < 2`.
pub fn build_covering(n: usize, base_points: usize, circumference: f64) -> Result<CoveringMap> {
    if n == 0 {
        return Err(Error::Domain("covering must have at least one sheet".into()));
    }
    let base = CircleGrid::new(base_points, circumference)?;
    let cover = CircleGrid::new(n * base_points, circumference)?;
    // Cover point p has angle p*C/(n*m); its image under theta -> n*theta is
    // the base angle (n*p mod n*m) * C/(n*m) = (p mod m) * C/m, i.e. base
    // point p mod m. The fiber over base point i is therefore
    // {i, i+m, ..., i+(n-1)m}, already in increasing-angle order.
    let fiber_index = (0..base_points)
        .map(|i| (0..n).map(|j| i + j * base_points).collect())
        .collect();
    Ok(CoveringMap {
        sheets: n,
        base,
        cover,
        fiber_index,
    })
}

impl CoveringMap {
    pub fn sheets(&self) -> usize {
        self.sheets
    }

    pub fn base(&self) -> &CircleGrid {
        &self.base
    }

    pub fn cover(&self) -> &CircleGrid {
        &self.cover
    }

    pub fn fiber(&self, base_index: usize) -> &[usize] {
        &self.fiber_index[base_index]
    }

    /// Index of the base point under the cover point.
    pub fn project(&self, cover_index: usize) -> usize {
        cover_index % self.base.num_points()
    }

    /// Direct image beta: a rank-r function on the cover becomes a rank-n*r
    /// function on the base by stacking the values over each ordered fiber.
    pub fn direct_image(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != &self.cover {
            return Err(Error::Domain(
                "direct_image: function does not live on the cover grid".into(),
            ));
        }
        let r = u.rank();
        let values = self
            .fiber_index
            .iter()
            .map(|fiber| {
                let mut v = CVec::zeros(self.sheets * r);
                for (j, &p) in fiber.iter().enumerate() {
                    v.rows_mut(j * r, r).copy_from(u.value(p));
                }
                v
            })
            .collect();
        GridFunction::new(self.base.clone(), self.sheets * r, values)
    }

    /// Inverse of [`CoveringMap::direct_image`]. The base function must have
    /// rank divisible by the sheet count.
    pub fn inverse_image(&self, v: &GridFunction) -> Result<GridFunction> {
        if v.grid() != &self.base {
            return Err(Error::Domain(
                "inverse_image: function does not live on the base grid".into(),
            ));
        }
        if !v.rank().is_multiple_of(self.sheets) {
            return Err(Error::Domain(format!(
                "inverse_image: rank {} not divisible by {} sheets",
                v.rank(),
                self.sheets
            )));
        }
        let r = v.rank() / self.sheets;
        let mut values = vec![CVec::zeros(r); self.cover.num_points()];
        for (i, fiber) in self.fiber_index.iter().enumerate() {
            for (j, &p) in fiber.iter().enumerate() {
                values[p] = v.value(i).rows(j * r, r).into_owned();
            }
        }
        GridFunction::new(self.cover.clone(), r, values)
    }

    /// Action of the deck transformation `g`: pulls the function back along
    /// the rotation by `g * circumference / n`. Composition satisfies
    /// `deck(g1) . deck(g2) = deck(g1 + g2 mod n)`.
    pub fn deck_action(&self, g: usize, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != &self.cover {
            return Err(Error::Domain(
                "deck_action: function does not live on the cover grid".into(),
            ));
        }
        let shift = (g % self.sheets) * self.base.num_points();
        let total = self.cover.num_points();
        let values = (0..total)
            .map(|p| u.value((p + shift) % total).clone())
            .collect();
        GridFunction::new(self.cover.clone(), u.rank(), values)
    }

    /// The decomposition of the direct image of the trivial line bundle into
    /// flat line bundles: holonomies are exactly the n-th roots of unity.
    pub fn flat_decomposition(&self) -> FlatBundleDecomposition {
        let n = self.sheets;
        FlatBundleDecomposition {
            holonomies: (0..n)
                .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / n as f64))
                .collect(),
        }
    }
}
