//! Difference-construction projection families: explicit matrix-valued
//! projections interpolating between two orthogonal subbundle projections
//! through a unitary-normalized symbol, with verified idempotency, seam
//! continuity, and the gluing over the boundary covering.
//!
//! The symbol is polar-normalized to a partial isometry before it enters
//! any formula: the printed expressions are projections only in that case.

use crate::covering::CoveringMap;
use crate::error::{Error, Result};
use crate::util::{fro_norm, linspace};
use crate::CMat;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

/// The two trivializing projections of a difference construction: `P_E`
/// and `P_Ck` are orthogonal projections onto mutually orthogonal
/// subbundles of the same ambient space.
#[derive(Debug, Clone)]
pub struct Ingredients {
    p_e: CMat,
    p_ck: CMat,
}

impl Ingredients {
    pub fn new(p_e: CMat, p_ck: CMat) -> Result<Self> {
        let n = p_e.nrows();
        if p_ck.nrows() != n || p_e.ncols() != n || p_ck.ncols() != n {
            return Err(Error::Domain("ingredient projections must share shape".into()));
        }
        for (name, p) in [("P_E", &p_e), ("P_Ck", &p_ck)] {
            let idem = fro_norm(&(p * p - p));
            let sym = fro_norm(&(p.adjoint() - p));
            if idem > 1e-12 || sym > 1e-12 {
                return Err(Error::Domain(format!(
                    "{name} is not an orthogonal projection (idempotency {idem:.2e}, \
                     symmetry {sym:.2e})"
                )));
            }
        }
        let overlap = fro_norm(&(&p_e * &p_ck));
        if overlap > 1e-12 {
            return Err(Error::Domain(format!(
                "subbundles are not orthogonal: |P_E P_Ck| = {overlap:.2e}"
            )));
        }
        Ok(Self { p_e, p_ck })
    }

    /// Standard embedding: `E = C^k` in the first `k` coordinates,
    /// `C^k` in the following `k`, ambient dimension `ambient`.
    pub fn standard(k: usize, ambient: usize) -> Result<Self> {
        if ambient < 2 * k {
            return Err(Error::Domain("ambient dimension too small".into()));
        }
        let mut p_e = CMat::zeros(ambient, ambient);
        let mut p_ck = CMat::zeros(ambient, ambient);
        for i in 0..k {
            p_e[(i, i)] = Complex64::new(1.0, 0.0);
            p_ck[(k + i, k + i)] = Complex64::new(1.0, 0.0);
        }
        Self::new(p_e, p_ck)
    }

    pub fn ambient_dim(&self) -> usize {
        self.p_e.nrows()
    }

    pub fn p_e(&self) -> &CMat {
        &self.p_e
    }

    pub fn p_ck(&self) -> &CMat {
        &self.p_ck
    }

    /// Direct image over an n-point fiber: block-diagonal copies.
    pub fn direct_image(&self, sheets: usize) -> Result<Self> {
        Self::new(block_diag_copies(&self.p_e, sheets), block_diag_copies(&self.p_ck, sheets))
    }
}

fn block_diag_copies(m: &CMat, copies: usize) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(n * copies, n * copies);
    for c in 0..copies {
        out.view_mut((c * n, c * n), (n, n)).copy_from(m);
    }
    out
}

/// Polar-normalize a symbol into a partial isometry from `Im P_E` to
/// `Im P_Ck`: `sigma (sigma* sigma)^(-1/2)` on the source subspace.
pub fn normalize_symbol(sigma: &CMat, ing: &Ingredients) -> Result<CMat> {
    let restricted = ing.p_ck() * sigma * ing.p_e();
    let svd = nalgebra::SVD::new(restricted.clone(), true, true);
    let rank_e = ing.p_e().trace().re.round() as usize;
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Domain("svd failed".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Domain("svd failed".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let significant = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(1e-300))
        .count();
    if significant < rank_e {
        return Err(Error::DegenerateSymbol(format!(
            "symbol has rank {significant} < {rank_e} between the subbundles"
        )));
    }
    // Replace singular values by 1 on the significant block.
    let mut iso = CMat::zeros(sigma.nrows(), sigma.ncols());
    for i in 0..significant {
        let ui = u.column(i).into_owned();
        let vi = v_t.row(i).adjoint();
        iso += &ui * vi.adjoint();
    }
    Ok(iso)
}

/// The first difference-construction projection: rotates `Im P_E` to
/// `Im P_Ck` through the (normalized) symbol as `|xi|` runs from 0 to
/// pi/2, and equals `P_Ck` beyond.
pub fn projection_p1(ing: &Ingredients, sigma: &CMat, xi_norm: f64) -> Result<CMat> {
    if xi_norm < 0.0 {
        return Err(Error::Domain("|xi| must be nonnegative".into()));
    }
    if xi_norm >= FRAC_PI_2 {
        return Ok(ing.p_ck().clone());
    }
    let iso = normalize_symbol(sigma, ing)?;
    Ok(rotation_formula(ing.p_e(), ing.p_ck(), &iso, xi_norm))
}

/// `P_E cos^2 phi + P_Ck sin^2 phi + (sigma^{-1} P_Ck + sigma P_E)
///  sin phi cos phi` for a partial isometry `sigma`, whose inverse on the
/// relevant subspace is its adjoint.
fn rotation_formula(p_e: &CMat, p_ck: &CMat, iso: &CMat, phi: f64) -> CMat {
    let (c, s) = (phi.cos(), phi.sin());
    p_e * Complex64::new(c * c, 0.0)
        + p_ck * Complex64::new(s * s, 0.0)
        + (iso.adjoint() * p_ck + iso * p_e) * Complex64::new(s * c, 0.0)
}

/// Symbol data of the cylinder-side projection family: evaluates the
/// direct-imaged symbol at `(x, t, xi)`. At `t = 1` it must equal the
/// direct image of the boundary symbol; the region with `t <= 1/2` only
/// ever sees its value at `xi = 0`.
pub type CylinderSymbol = Arc<dyn Fn(f64, f64, f64) -> CMat + Send + Sync>;

/// The second projection family, over `X x [0, 1]` with the direct-imaged
/// ingredients. Regions:
/// * `t >= 1/2`, `|xi| <= pi/2`: rotation by `|xi|` with the symbol at
///   `(x, t, xi)`;
/// * `t < 1/2`, `phi = |xi| + (pi/2)(1 - 2t) <= pi/2`: rotation by `phi`
///   with the symbol frozen at `xi = 0`;
/// * otherwise `P_Ck`. (The printed second-region inequality `|xi| < pi/2`
///   would leave a jump against the third region; the rotation is complete
///   exactly when `phi` reaches `pi/2`, so that is the boundary used.)
pub struct P2Family {
    pub ingredients: Ingredients,
    pub symbol: CylinderSymbol,
}

impl P2Family {
    /// The rotation formula of the region containing `(x, xi, t)`:
    /// `frozen = true` selects the small-t region (angle
    /// `phi = |xi| + (pi/2)(1 - 2t)`, symbol frozen at `xi = 0`).
    fn rotation_value(&self, x: f64, xi_norm: f64, t: f64, frozen: bool) -> Result<CMat> {
        let ing = &self.ingredients;
        let (phi, sym_xi) = if frozen {
            (xi_norm + FRAC_PI_2 * (1.0 - 2.0 * t), 0.0)
        } else {
            (xi_norm, xi_norm)
        };
        let iso = normalize_symbol(&(self.symbol)(x, t, sym_xi), ing)?;
        Ok(rotation_formula(ing.p_e(), ing.p_ck(), &iso, phi))
    }

    pub fn eval(&self, x: f64, xi_norm: f64, t: f64) -> Result<CMat> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t must lie in [0,1], got {t}")));
        }
        if xi_norm < 0.0 {
            return Err(Error::Domain("|xi| must be nonnegative".into()));
        }
        if t >= 0.5 {
            if xi_norm >= FRAC_PI_2 {
                return Ok(self.ingredients.p_ck().clone());
            }
            self.rotation_value(x, xi_norm, t, false)
        } else {
            let phi = xi_norm + FRAC_PI_2 * (1.0 - 2.0 * t);
            if phi >= FRAC_PI_2 {
                return Ok(self.ingredients.p_ck().clone());
            }
            self.rotation_value(x, xi_norm, t, true)
        }
    }
}

/// Idempotency defect of the rotation formula with the symbol substituted
/// as-is, skipping the polar normalization. Nonzero for non-unitary
/// symbols: the negative control of the family verification.
pub fn unnormalized_rotation_defect(ing: &Ingredients, sigma: &CMat, phi: f64) -> f64 {
    let p = rotation_formula(ing.p_e(), ing.p_ck(), sigma, phi);
    fro_norm(&(&p * &p - &p))
}

/// The flat-case projection family of the boundary pairing: pure rotation
/// in `t` with a fixed bundle isomorphism, `phi = (pi/2)(1 - t)`. Equals
/// `P_E` at `t = 1` and `P_Ck` at `t = 0`. The cross term is symmetrized
/// through the normalized isometry so the value is a projection.
pub fn projection_p2_flat(ing: &Ingredients, sigma: &CMat, t: f64) -> Result<CMat> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t must lie in [0,1], got {t}")));
    }
    let iso = normalize_symbol(sigma, ing)?;
    let phi = FRAC_PI_2 * (1.0 - t);
    Ok(rotation_formula(ing.p_e(), ing.p_ck(), &iso, phi))
}

/// Defect summary of a projection-family verification.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub max_idempotency_defect: f64,
    pub max_self_adjointness_defect: f64,
    pub max_seam_jump: f64,
    pub max_gluing_defect: f64,
    pub rank_constant: bool,
    pub pass: bool,
}

/// Verification thresholds (from the acceptance contract).
pub const IDEMPOTENCY_TOL: f64 = 1e-12;
pub const SEAM_TOL: f64 = 1e-10;
pub const GLUING_TOL: f64 = 1e-12;

/// Sampling densities for family verification.
pub const XI_SAMPLES: usize = 257;
pub const T_SAMPLES: usize = 101;

/// Verify a matched pair (P1 over the boundary, P2 over the cylinder):
/// idempotency and self-adjointness on the full grids, rank constancy of
/// P1, continuity across the region seams, and the gluing
/// `P2(., ., 1) = direct image of P1` over the covering.
pub fn verify_projection_family(
    boundary_ing: &Ingredients,
    boundary_symbol: &dyn Fn(f64, f64) -> CMat,
    family: &P2Family,
    cm: &CoveringMap,
) -> Result<FamilyReport> {
    let xi_grid = linspace(0.0, PI, XI_SAMPLES);
    let t_grid = linspace(0.0, 1.0, T_SAMPLES);
    let mut idem: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut seam: f64 = 0.0;
    let mut glue: f64 = 0.0;
    let mut rank_constant = true;
    let mut p1_rank: Option<usize> = None;

    // P1 on the cover grid points.
    for &theta in cm.cover().points() {
        for &xi in &xi_grid {
            let p = projection_p1(boundary_ing, &boundary_symbol(theta, xi), xi)?;
            idem = idem.max(fro_norm(&(&p * &p - &p)));
            sym = sym.max(fro_norm(&(p.adjoint() - &p)));
            let rank = p.trace().re.round() as usize;
            if xi < FRAC_PI_2 {
                match p1_rank {
                    None => p1_rank = Some(rank),
                    Some(r) => rank_constant &= r == rank,
                }
            }
        }
    }

    // P2 on the base grid.
    for &x in cm.base().points() {
        for &t in &t_grid {
            for &xi in &xi_grid {
                let p = family.eval(x, xi, t)?;
                idem = idem.max(fro_norm(&(&p * &p - &p)));
                sym = sym.max(fro_norm(&(p.adjoint() - &p)));
            }
        }
        // Seams: the adjoining region formulas evaluated at the same seam
        // point must agree. |xi| = pi/2 for t >= 1/2 and phi = pi/2 for
        // t < 1/2 border the constant region; t = 1/2 joins the two
        // rotation regions.
        for &t in &t_grid {
            let inner = if t >= 0.5 {
                family.rotation_value(x, FRAC_PI_2, t, false)?
            } else {
                family.rotation_value(x, PI * t, t, true)?
            };
            seam = seam.max(fro_norm(&(inner - family.ingredients.p_ck())));
        }
        for &xi in xi_grid.iter().filter(|&&v| v < FRAC_PI_2) {
            let upper = family.rotation_value(x, xi, 0.5, false)?;
            let lower = family.rotation_value(x, xi, 0.5, true)?;
            seam = seam.max(fro_norm(&(upper - lower)));
        }
    }

    // Gluing at t = 1: P2 equals the direct image of P1, blockwise over
    // the ordered fiber.
    for (i, &x) in cm.base().points().iter().enumerate() {
        for &xi in &xi_grid {
            let p2 = family.eval(x, xi, 1.0)?;
            let n = boundary_ing.ambient_dim();
            let mut direct = CMat::zeros(p2.nrows(), p2.ncols());
            for (j, &p) in cm.fiber(i).iter().enumerate() {
                let theta = cm.cover().points()[p];
                let p1 = projection_p1(boundary_ing, &boundary_symbol(theta, xi), xi)?;
                direct.view_mut((j * n, j * n), (n, n)).copy_from(&p1);
            }
            glue = glue.max(fro_norm(&(p2 - direct)));
        }
    }

    let pass = idem < IDEMPOTENCY_TOL
        && sym < IDEMPOTENCY_TOL
        && seam < SEAM_TOL
        && glue < GLUING_TOL
        && rank_constant;
    Ok(FamilyReport {
        max_idempotency_defect: idem,
        max_self_adjointness_defect: sym,
        max_seam_jump: seam,
        max_gluing_defect: glue,
        rank_constant,
        pass,
    })
}
