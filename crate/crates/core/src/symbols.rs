//! Principal-symbol calculus on the circle: Calderon (positive-eigenvalue)
//! subspaces, Shapiro-Lopatinskii ellipticity checks for boundary
//! conditions, the order-reduction homotopy at symbol level, and the
//! compatibility condition for admissible symbols over a covering.
//!
//! The base is one-dimensional, so the unit cosphere over each point is the
//! pair of directions `xi = +1, -1`; sampling both directions over an
//! x-grid is exhaustive in this geometry.

use crate::covering::CoveringMap;
use crate::error::{Error, Result};
use crate::util::{fro_norm, hermitian_defect, periodic_grid};
use crate::CMat;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

/// Relative singular-value threshold deciding "isomorphism" in the SL check.
pub const SL_RANK_THRESHOLD: f64 = 1e-8;
/// Relative band around zero in which a symbol eigenvalue makes the
/// Calderon bundle ill-defined.
pub const DEGENERACY_BAND: f64 = 1e-10;

type MatrixEval = Arc<dyn Fn(f64, f64) -> CMat + Send + Sync>;

/// A principal symbol `(x, xi) -> matrix`, positively homogeneous of the
/// declared order.
#[derive(Clone)]
pub struct SymbolFunction {
    rank_in: usize,
    rank_out: usize,
    order: i32,
    eval: MatrixEval,
}

impl SymbolFunction {
    pub fn new(
        rank_in: usize,
        rank_out: usize,
        order: i32,
        eval: impl Fn(f64, f64) -> CMat + Send + Sync + 'static,
    ) -> Self {
        Self {
            rank_in,
            rank_out,
            order,
            eval: Arc::new(eval),
        }
    }

    pub fn rank_in(&self) -> usize {
        self.rank_in
    }

    pub fn rank_out(&self) -> usize {
        self.rank_out
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn eval(&self, x: f64, xi: f64) -> CMat {
        (self.eval)(x, xi)
    }

    /// Sampled homogeneity check: `sigma(x, s*xi) = s^m sigma(x, xi)` for
    /// positive scalings.
    pub fn check_homogeneity(&self, samples: &[(f64, f64)], scalings: &[f64]) -> Result<()> {
        for &(x, xi) in samples {
            let base = self.eval(x, xi);
            for &s in scalings {
                if !(s > 0.0) {
                    return Err(Error::Domain("scalings must be positive".into()));
                }
                let scaled = self.eval(x, s * xi);
                let expected = &base * Complex64::new(s.powi(self.order), 0.0);
                let defect = fro_norm(&(scaled - expected)) / fro_norm(&base).max(1e-300);
                if defect > 1e-10 {
                    return Err(Error::Domain(format!(
                        "symbol is not homogeneous of order {} at (x={x}, xi={xi}, s={s}): \
                         defect {defect:.2e}",
                        self.order
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A boundary-condition symbol `(x, xi) -> matrix` with a fixed target rank.
#[derive(Clone)]
pub struct BoundarySymbol {
    target_rank: usize,
    eval: MatrixEval,
}

impl BoundarySymbol {
    pub fn new(
        target_rank: usize,
        eval: impl Fn(f64, f64) -> CMat + Send + Sync + 'static,
    ) -> Self {
        Self {
            target_rank,
            eval: Arc::new(eval),
        }
    }

    /// Constant boundary matrix.
    pub fn constant(matrix: CMat) -> Self {
        let rank = matrix.nrows();
        Self::new(rank, move |_, _| matrix.clone())
    }

    pub fn target_rank(&self) -> usize {
        self.target_rank
    }

    pub fn eval(&self, x: f64, xi: f64) -> CMat {
        (self.eval)(x, xi)
    }
}

/// Outcome of a Shapiro-Lopatinskii check.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub elliptic: bool,
    /// Smallest singular value of the restricted boundary symbol over all
    /// samples.
    pub min_singular_value: f64,
    /// Worst-case sample point (x, xi).
    pub witness: (f64, f64),
}

/// Orthonormal basis of the span of eigenvectors of a Hermitian symbol
/// value with positive eigenvalues. Eigenvalues inside the relative zero
/// band make the Calderon bundle ill-defined and are an error.
pub fn calderon_subspace(a: &CMat) -> Result<CMat> {
    let scale = fro_norm(a).max(1e-300);
    if hermitian_defect(a) > 1e-12 {
        return Err(Error::Domain(
            "calderon_subspace: symbol value is not Hermitian".into(),
        ));
    }
    let spec = crate::spectral::eigendecompose_matrix(a, f64::INFINITY)?;
    let mut cols = Vec::new();
    for (i, &l) in spec.eigenvalues().iter().enumerate() {
        if l.abs() < DEGENERACY_BAND * scale {
            return Err(Error::DegenerateSymbol(format!(
                "eigenvalue {l:.3e} inside the zero band {:.1e}",
                DEGENERACY_BAND * scale
            )));
        }
        if l > 0.0 {
            cols.push(spec.eigenvectors().column(i).into_owned());
        }
    }
    let mut basis = CMat::zeros(a.nrows(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        basis.column_mut(j).copy_from(c);
    }
    Ok(basis)
}

/// Decaying-solution subspace of `d/dt + a` on the half-line, found without
/// an eigendecomposition: the Newton iteration `X <- (X + X^{-1})/2`
/// converges to the matrix sign of `a`, and the decaying solutions span the
/// `+1` eigenspace `(1 + sign(a))/2`. Serves as an independent oracle for
/// the Calderon subspace.
pub fn decay_subspace_oracle(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let scale = (fro_norm(a) / (n as f64).sqrt()).max(1e-300);
    let mut x = a / Complex64::new(scale, 0.0);
    let mut converged = false;
    for _ in 0..80 {
        let inv = x.clone().try_inverse().ok_or_else(|| {
            Error::DegenerateSymbol("sign iteration hit a singular iterate".into())
        })?;
        let next = (&x + inv) * Complex64::new(0.5, 0.0);
        let step = fro_norm(&(&next - &x));
        x = next;
        if step < 1e-13 * (n as f64).sqrt() {
            converged = true;
            break;
        }
    }
    let involution_defect = fro_norm(&(&x * &x - identity_mat(n)));
    if !converged || involution_defect > 1e-8 {
        return Err(Error::DegenerateSymbol(format!(
            "sign iteration did not converge to an involution (defect {involution_defect:.2e})"
        )));
    }
    // Orthonormal basis of the range of (1 + sign)/2 via its SVD.
    let projector = (&x + identity_mat(n)) * Complex64::new(0.5, 0.0);
    let svd = nalgebra::SVD::new(projector, true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Domain("svd failed".into()))?;
    let cols: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.5)
        .map(|(i, _)| i)
        .collect();
    let mut basis = CMat::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.column_mut(j).copy_from(&u.column(i));
    }
    Ok(basis)
}

fn identity_mat(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Check the Shapiro-Lopatinskii condition by sampling: at each `(x, xi)`
/// the boundary symbol restricted to the Calderon subspace of the
/// tangential symbol must be an isomorphism onto the target. The verdict
/// uses the singular-value ratio, so rescaling the condition does not
/// change it.
pub fn check_shapiro_lopatinskii(
    a: &SymbolFunction,
    b: &BoundarySymbol,
    samples: &[(f64, f64)],
) -> Result<EllipticityReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples supplied".into()));
    }
    let mut elliptic = true;
    let mut min_sv = f64::INFINITY;
    let mut witness = samples[0];
    for &(x, xi) in samples {
        let aval = a.eval(x, xi);
        let basis = calderon_subspace(&aval)?;
        let restricted = b.eval(x, xi) * &basis;
        let (rows, cols) = (restricted.nrows(), restricted.ncols());
        let (smin, smax) = if rows == 0 || cols == 0 {
            // An empty restriction is an isomorphism only between two
            // empty spaces.
            if rows == cols {
                (f64::INFINITY, 1.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            let svd = nalgebra::SVD::new(restricted, false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let smin = if rows == cols {
                svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
            } else {
                0.0 // non-square restriction is never an isomorphism
            };
            (smin, smax)
        };
        let ok = smin > SL_RANK_THRESHOLD * smax.max(1e-300) && smin > 0.0;
        if smin < min_sv {
            min_sv = smin;
            witness = (x, xi);
        }
        elliptic &= ok;
    }
    Ok(EllipticityReport {
        elliptic,
        min_singular_value: if min_sv.is_finite() { min_sv } else { 0.0 },
        witness,
    })
}

/// Brute-force Shapiro-Lopatinskii verdict: replaces the Calderon basis by
/// the matrix-exponential decay oracle and decides invertibility of the
/// restricted condition by its singular values. Independent of the
/// eigendecomposition route.
pub fn shapiro_lopatinskii_oracle(
    a: &SymbolFunction,
    b: &BoundarySymbol,
    samples: &[(f64, f64)],
) -> Result<bool> {
    for &(x, xi) in samples {
        let basis = decay_subspace_oracle(&a.eval(x, xi))?;
        let restricted = b.eval(x, xi) * &basis;
        if restricted.nrows() != restricted.ncols() {
            return Ok(false);
        }
        if restricted.ncols() == 0 {
            continue;
        }
        let svd = nalgebra::SVD::new(restricted, false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smin > SL_RANK_THRESHOLD * smax.max(1e-300)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One value of the order-reduction homotopy
/// `(1 - eps)(i tau + a) + eps (2P - 1)` on the unit cosphere
/// `tau^2 + xi_norm^2 = 1`.
///
/// At `eps = 0` this is the boundary symbol of the first-order operator; at
/// `eps = 1` it no longer depends on the cotangent variables. For an
/// SL-elliptic pair the value stays invertible for every `eps`;
/// invertibility failure is a finding for the caller, not an error here.
pub fn order_reduction_homotopy(
    a: &CMat,
    p: &CMat,
    eps: f64,
    tau: f64,
    xi_norm: f64,
) -> Result<CMat> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("eps must lie in [0,1], got {eps}")));
    }
    if (tau * tau + xi_norm * xi_norm - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "(tau, xi) = ({tau}, {xi_norm}) is not on the unit cosphere"
        )));
    }
    let n = a.nrows();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Domain("projection has mismatched dimension".into()));
    }
    let reflect = p * Complex64::new(2.0, 0.0) - CMat::identity(n, n);
    let first = (CMat::identity(n, n) * Complex64::new(0.0, tau) + a)
        * Complex64::new(1.0 - eps, 0.0);
    Ok(first + reflect * Complex64::new(eps, 0.0))
}

/// Minimum singular value of the order-reduction homotopy over an
/// `(eps, cosphere)` grid, for a fixed direction's symbol value and
/// projection. The cosphere is parametrized as
/// `(tau, xi_norm) = (cos psi, sin psi)`, `psi` in `[0, pi]`, so
/// `xi_norm >= 0`; `a_unit` must be the symbol evaluated at the unit
/// covector of the chosen direction.
pub fn homotopy_invertibility_sweep(
    a_unit: &CMat,
    p: &CMat,
    n_eps: usize,
    n_cosphere: usize,
) -> Result<f64> {
    let mut min_sv = f64::INFINITY;
    for i in 0..n_eps {
        let eps = i as f64 / (n_eps - 1) as f64;
        for j in 0..n_cosphere {
            let psi = std::f64::consts::PI * j as f64 / (n_cosphere - 1) as f64;
            let (tau, xi_norm) = (psi.cos(), psi.sin());
            let a_scaled = a_unit * Complex64::new(xi_norm, 0.0);
            let m = order_reduction_homotopy(&a_scaled, p, eps, tau, xi_norm)?;
            let svd = nalgebra::SVD::new(m, false, false);
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            min_sv = min_sv.min(smin);
        }
    }
    Ok(min_sv)
}

/// Compatibility of an admissible symbol pair over a covering: the direct
/// image of the cover symbol (block diagonal over each ordered fiber) must
/// equal the cylinder symbol at every sample.
pub fn check_admissible_compatibility(
    sigma_m: &SymbolFunction,
    sigma_x: &SymbolFunction,
    cm: &CoveringMap,
    samples: &[(usize, f64)],
) -> Result<bool> {
    let n = cm.sheets();
    let r = sigma_m.rank_in();
    if sigma_m.rank_out() != r {
        return Err(Error::Domain(
            "compatibility check expects a square cover symbol".into(),
        ));
    }
    if sigma_x.rank_in() != n * r || sigma_x.rank_out() != n * r {
        return Err(Error::Domain(format!(
            "cylinder symbol must have rank {} to match the block structure",
            n * r
        )));
    }
    for &(base_idx, xi) in samples {
        if base_idx >= cm.base().num_points() {
            return Err(Error::Domain(format!(
                "sample base index {base_idx} out of range"
            )));
        }
        let x = cm.base().points()[base_idx];
        let mut direct = CMat::zeros(n * r, n * r);
        for (j, &p) in cm.fiber(base_idx).iter().enumerate() {
            let theta = cm.cover().points()[p];
            let block = sigma_m.eval(theta, xi);
            for a in 0..r {
                for b in 0..r {
                    direct[(j * r + a, j * r + b)] = block[(a, b)];
                }
            }
        }
        let target = sigma_x.eval(x, xi);
        if fro_norm(&(direct - target)) > 1e-10 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Built-in symbol/condition pairs used by configs and the checker suite.
pub mod builtins {
    use super::*;

    /// Unit-cosphere samples over an equispaced x-grid: both directions
    /// `xi = +1, -1` at each of `nx` base points.
    pub fn unit_cosphere_samples(nx: usize) -> Vec<(f64, f64)> {
        periodic_grid(nx, 0.0, std::f64::consts::TAU)
            .into_iter()
            .flat_map(|x| [(x, 1.0), (x, -1.0)])
            .collect()
    }

    /// Two-mode APS model: tangential symbol `xi * diag(1, -1)`. The
    /// normalization `a* a = xi^2` holds exactly.
    pub fn aps_model() -> SymbolFunction {
        SymbolFunction::new(2, 2, 1, |_, xi| {
            CMat::from_fn(2, 2, move |i, j| {
                if i == j {
                    Complex64::new(if i == 0 { xi } else { -xi }, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        })
    }

    fn spectral_row(a: &SymbolFunction, x: f64, xi: f64, positive: bool) -> CMat {
        let aval = a.eval(x, xi);
        let spec = crate::spectral::eigendecompose_matrix(&aval, f64::INFINITY)
            .expect("built-in symbol values are Hermitian");
        let mut rows = Vec::new();
        for (i, &l) in spec.eigenvalues().iter().enumerate() {
            if (l > 0.0) == positive && l.abs() > 1e-12 {
                rows.push(spec.eigenvectors().column(i).adjoint());
            }
        }
        let mut m = CMat::zeros(rows.len(), aval.nrows());
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).copy_from(r);
        }
        m
    }

    /// The APS condition symbol: project the trace onto the positive
    /// spectral subspace of the tangential symbol. Elliptic against
    /// [`aps_model`] in both directions.
    pub fn aps_condition_plus() -> BoundarySymbol {
        let a = aps_model();
        BoundarySymbol::new(1, move |x, xi| spectral_row(&a, x, xi, true))
    }

    /// Projection onto the wrong spectral side: restriction to the Calderon
    /// subspace is zero. The standard non-elliptic control.
    pub fn aps_condition_minus() -> BoundarySymbol {
        let a = aps_model();
        BoundarySymbol::new(1, move |x, xi| spectral_row(&a, x, xi, false))
    }

    /// Two-mode model of the reflecting boundary: the unfolded operator
    /// pair gives the tangential symbol `diag(xi, -xi)`.
    pub fn reflecting_model() -> SymbolFunction {
        aps_model()
    }

    /// Invariant-part condition `(v1 + v2)/sqrt(2) = 0`, the two-sheet form
    /// of averaging over the covering fiber. Elliptic.
    pub fn reflecting_invariant_condition() -> BoundarySymbol {
        let inv_sqrt2 = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        BoundarySymbol::constant(CMat::from_fn(1, 2, move |_, _| inv_sqrt2))
    }

    /// Anti-invariant condition `(v1 - v2)/sqrt(2) = 0`; equally elliptic.
    pub fn reflecting_antiinvariant_condition() -> BoundarySymbol {
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        BoundarySymbol::constant(CMat::from_fn(1, 2, move |_, j| {
            Complex64::new(if j == 0 { inv_sqrt2 } else { -inv_sqrt2 }, 0.0)
        }))
    }

    /// Dirichlet on a single sheet: a classical condition on one leaf of
    /// the covering. Fails Shapiro-Lopatinskii in one direction.
    pub fn reflecting_single_sheet_condition() -> BoundarySymbol {
        BoundarySymbol::constant(CMat::from_fn(1, 2, |_, j| {
            Complex64::new(if j == 0 { 1.0 } else { 0.0 }, 0.0)
        }))
    }

    /// Boundary tangential symbol of the Cauchy-Riemann operator on the
    /// disk: the scalar `a(theta, xi) = xi`. Its Calderon rank jumps
    /// between the two covector directions, so no boundary condition
    /// symbol can be elliptic for it -- the classical obstruction that
    /// motivates spectral and non-local conditions. Used by the disk mode
    /// machinery and compatibility checks, never as an elliptic pair.
    pub fn dbar_disk() -> SymbolFunction {
        SymbolFunction::new(1, 1, 1, |_, xi| {
            CMat::from_element(1, 1, Complex64::new(xi, 0.0))
        })
    }

    /// Orthogonal projection onto the row space of a condition's value:
    /// the `P` fed to the order-reduction homotopy.
    pub fn condition_projection(b: &BoundarySymbol, x: f64, xi: f64) -> CMat {
        let row = b.eval(x, xi);
        let gram = &row * row.adjoint();
        let inv = gram
            .try_inverse()
            .expect("condition rows are linearly independent");
        row.adjoint() * inv * row
    }

    /// Named elliptic and non-elliptic pairs: (name, symbol, condition,
    /// expected ellipticity).
    pub fn condition_pairs() -> Vec<(&'static str, SymbolFunction, BoundarySymbol, bool)> {
        vec![
            ("aps_plus", aps_model(), aps_condition_plus(), true),
            ("aps_minus", aps_model(), aps_condition_minus(), false),
            (
                "reflecting_invariant",
                reflecting_model(),
                reflecting_invariant_condition(),
                true,
            ),
            (
                "reflecting_antiinvariant",
                reflecting_model(),
                reflecting_antiinvariant_condition(),
                true,
            ),
            (
                "reflecting_single_sheet",
                reflecting_model(),
                reflecting_single_sheet_condition(),
                false,
            ),
        ]
    }
}
