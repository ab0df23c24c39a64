//! Fourier-basis discretization of tangential operators `-i d/dx + V(x)` on
//! the circle, with flat holonomy twists and covering lifts.
//!
//! The basis is the shifted exponential family `exp(i (k + alpha) x)` for
//! `k = -K..K`, tensored with the bundle components. In that basis the
//! derivative is exactly diagonal and a trigonometric-polynomial potential
//! contributes its convolution blocks with no quadrature error, so the
//! assembled matrices are exactly Hermitian and constant-coefficient model
//! operators have closed-form spectra.

use crate::covering::CoveringMap;
use crate::error::{Error, Result};
use crate::util::{fro_norm, hermitian_defect};
use crate::CMat;
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Matrix-valued trigonometric polynomial `V(x) = sum_f c_f exp(i f x)`.
#[derive(Debug, Clone)]
pub struct TrigPolynomial {
    rank: usize,
    terms: BTreeMap<i64, CMat>,
}

impl TrigPolynomial {
    pub fn zero(rank: usize) -> Self {
        Self {
            rank,
            terms: BTreeMap::new(),
        }
    }

    pub fn new(rank: usize, terms: Vec<(i64, CMat)>) -> Result<Self> {
        let mut map: BTreeMap<i64, CMat> = BTreeMap::new();
        for (f, c) in terms {
            if c.nrows() != rank || c.ncols() != rank {
                return Err(Error::Domain(format!(
                    "potential coefficient at frequency {f} is {}x{}, expected {rank}x{rank}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            *map.entry(f).or_insert_with(|| CMat::zeros(rank, rank)) += c;
        }
        Ok(Self { rank, terms: map })
    }

    /// Scalar potential from a coefficient list.
    pub fn scalar_terms(terms: &[(i64, Complex64)]) -> Self {
        let map = terms
            .iter()
            .map(|&(f, c)| (f, CMat::from_element(1, 1, c)))
            .fold(BTreeMap::<i64, CMat>::new(), |mut m, (f, c)| {
                *m.entry(f).or_insert_with(|| CMat::zeros(1, 1)) += c;
                m
            });
        Self { rank: 1, terms: map }
    }

    /// Constant scalar potential `V = a`.
    pub fn scalar_constant(a: f64) -> Self {
        Self::scalar_terms(&[(0, Complex64::new(a, 0.0))])
    }

    /// Add `amp * cos(freq x)` to a scalar potential.
    pub fn add_scalar_cos(mut self, freq: i64, amp: f64) -> Self {
        let half = CMat::from_element(1, 1, Complex64::new(amp / 2.0, 0.0));
        *self
            .terms
            .entry(freq)
            .or_insert_with(|| CMat::zeros(1, 1)) += &half;
        *self
            .terms
            .entry(-freq)
            .or_insert_with(|| CMat::zeros(1, 1)) += &half;
        self
    }

    /// Add `amp * sin(freq x)` to a scalar potential.
    pub fn add_scalar_sin(mut self, freq: i64, amp: f64) -> Self {
        let c = Complex64::new(0.0, -amp / 2.0);
        *self
            .terms
            .entry(freq)
            .or_insert_with(|| CMat::zeros(1, 1)) += CMat::from_element(1, 1, c);
        *self
            .terms
            .entry(-freq)
            .or_insert_with(|| CMat::zeros(1, 1)) += CMat::from_element(1, 1, c.conj());
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn terms(&self) -> &BTreeMap<i64, CMat> {
        &self.terms
    }

    pub fn eval(&self, x: f64) -> CMat {
        let mut v = CMat::zeros(self.rank, self.rank);
        for (&f, c) in &self.terms {
            v += c * Complex64::from_polar(1.0, f as f64 * x);
        }
        v
    }

    /// Largest deviation from pointwise Hermitian symmetry, checked
    /// structurally: the coefficient at `-f` must be the adjoint of the
    /// coefficient at `f`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self
            .terms
            .values()
            .map(fro_norm)
            .fold(1e-300, f64::max);
        let mut worst: f64 = 0.0;
        for (&f, c) in &self.terms {
            let partner = self.terms.get(&-f).cloned().unwrap_or_else(|| {
                CMat::zeros(self.rank, self.rank)
            });
            worst = worst.max(fro_norm(&(partner.adjoint() - c)) / scale);
        }
        worst
    }

    pub fn mean(&self) -> CMat {
        self.terms
            .get(&0)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.rank, self.rank))
    }
}

/// Declarative description of a tangential operator `-i d/dx + V(x)` on the
/// base circle: bundle rank, flat holonomy twist `alpha` (sections satisfy
/// `u(x + 2 pi) = exp(2 pi i alpha) u(x)`), and a Fourier truncation.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub rank: usize,
    pub holonomy: f64,
    pub fourier_cutoff: usize,
    pub potential: TrigPolynomial,
}

impl OperatorSpec {
    pub fn new(
        rank: usize,
        holonomy: f64,
        fourier_cutoff: usize,
        potential: TrigPolynomial,
    ) -> Result<Self> {
        let spec = Self {
            rank,
            holonomy,
            fourier_cutoff,
            potential,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar spec `-i d/dx + a`, no holonomy.
    pub fn scalar(a: f64, fourier_cutoff: usize) -> Result<Self> {
        Self::new(1, 0.0, fourier_cutoff, TrigPolynomial::scalar_constant(a))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Domain("rank must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holonomy) {
            return Err(Error::Domain(format!(
                "holonomy must lie in [0, 1), got {}",
                self.holonomy
            )));
        }
        if self.fourier_cutoff < 4 {
            return Err(Error::Domain(format!(
                "fourier cutoff must be at least 4, got {}",
                self.fourier_cutoff
            )));
        }
        if self.potential.rank() != self.rank {
            return Err(Error::Domain(format!(
                "potential rank {} does not match bundle rank {}",
                self.potential.rank(),
                self.rank
            )));
        }
        let defect = self.potential.hermitian_defect();
        if defect > 1e-12 {
            return Err(Error::Domain(format!(
                "potential is not Hermitian-valued (defect {defect:.2e})"
            )));
        }
        Ok(())
    }

    pub fn with_holonomy(&self, holonomy: f64) -> Result<Self> {
        Self::new(
            self.rank,
            holonomy,
            self.fourier_cutoff,
            self.potential.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.rank * (2 * self.fourier_cutoff + 1)
    }
}

/// A finite Hermitian matrix with its Fourier-basis provenance.
///
/// Basis vector `(k, c)` stands for `exp(i (k + exponent_offset) x) e_c`;
/// the derivative part of the operator contributes
/// `deriv_scale * (k + exponent_offset)` on the diagonal. Base operators
/// have `deriv_scale = 1`; an n-sheet covering lift has `deriv_scale = 1/n`
/// and a label window stretched to `n` times the base window.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: CMat,
    labels: Vec<(i64, usize)>,
    resolved_window: f64,
    provenance: String,
}

impl HermitianOperator {
    fn validate(self) -> Result<Self> {
        let defect = hermitian_defect(&self.matrix);
        if defect > 1e-12 {
            return Err(Error::Domain(format!(
                "assembled matrix is not Hermitian (relative defect {defect:.2e})"
            )));
        }
        Ok(self)
    }

    /// Wrap an explicitly-built Hermitian matrix (finite models, scaled
    /// operators). The resolved window must be supplied by the caller.
    pub fn from_matrix(matrix: CMat, resolved_window: f64, provenance: &str) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Domain("matrix must be square".into()));
        }
        let n = matrix.nrows();
        Self {
            matrix,
            labels: (0..n).map(|i| (i as i64, 0)).collect(),
            resolved_window,
            provenance: provenance.to_string(),
        }
        .validate()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn labels(&self) -> &[(i64, usize)] {
        &self.labels
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Half the largest derivative-diagonal magnitude: eigenvalues beyond
    /// this are treated as polluted by the truncation and never used by
    /// downstream eta or flow computations.
    pub fn resolved_window(&self) -> f64 {
        self.resolved_window
    }

    /// True when the matrix is numerically diagonal (constant potential);
    /// enables closed-form fast paths downstream.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        let scale = fro_norm(&self.matrix).max(1e-300);
        let mut off = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if i != j {
                    off += self.matrix[(i, j)].norm_sqr();
                }
            }
        }
        off.sqrt() / scale < tol
    }

    /// Scale the operator by a real constant (spectrum scales accordingly).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
            labels: self.labels.clone(),
            resolved_window: self.resolved_window * factor.abs(),
            provenance: format!("{} * {factor}", self.provenance),
        }
    }
}

/// Assemble the tangential operator of a spec on the base circle.
///
/// In the shifted Fourier basis the derivative is `diag(k + alpha)` per
/// bundle component and each potential term couples `k -> k + f` with its
/// coefficient block.
pub fn assemble_tangential(spec: &OperatorSpec) -> Result<HermitianOperator> {
    spec.validate()?;
    let k_max = spec.fourier_cutoff as i64;
    let window: Vec<i64> = (-k_max..=k_max).collect();
    assemble_on_window(spec, &window, 1.0, spec.holonomy, 1, "tangential")
}

/// Assemble the lift of a base spec along an n-fold covering: the operator
/// on the cover whose direct image is the base operator with coefficients
/// in the flat bundle of the covering. For constant `V = a` the spectrum is
/// exactly `{ k/n + a }` over the stretched window.
pub fn lift_operator(spec: &OperatorSpec, cm: &CoveringMap) -> Result<HermitianOperator> {
    spec.validate()?;
    let n = cm.sheets() as i64;
    let k_max = spec.fourier_cutoff as i64;
    // Window chosen so cover modes biject with (base mode, flat sector)
    // pairs: k_cover = n*k + j, k = -K..K, j = 0..n-1.
    let window: Vec<i64> = (-n * k_max..=n * k_max + n - 1).collect();
    assemble_on_window(
        spec,
        &window,
        1.0 / n as f64,
        n as f64 * spec.holonomy,
        n,
        &format!("lift[n={n}]"),
    )
}

/// Tangential operator twisted by an extra flat holonomy `alpha'` in [0, 1):
/// identical to assembling with holonomy `alpha + alpha'` reduced mod 1.
pub fn twist_with_flat_bundle(spec: &OperatorSpec, extra: f64) -> Result<HermitianOperator> {
    if !(0.0..1.0).contains(&extra) {
        return Err(Error::Domain(format!(
            "twist exponent must lie in [0, 1), got {extra}"
        )));
    }
    let alpha = (spec.holonomy + extra).rem_euclid(1.0);
    let twisted = spec.with_holonomy(alpha)?;
    let mut op = assemble_tangential(&twisted)?;
    op.provenance = format!("twist[{extra}]");
    Ok(op)
}

/// Conjugate transpose. Involutive; fixes Hermitian matrices.
pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

fn assemble_on_window(
    spec: &OperatorSpec,
    window: &[i64],
    deriv_scale: f64,
    exponent_offset: f64,
    freq_stretch: i64,
    provenance: &str,
) -> Result<HermitianOperator> {
    let r = spec.rank;
    let dim = r * window.len();
    let mut m = CMat::zeros(dim, dim);
    let pos: BTreeMap<i64, usize> = window.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    for (i, &k) in window.iter().enumerate() {
        let diag = Complex64::new(deriv_scale * (k as f64 + exponent_offset), 0.0);
        for c in 0..r {
            m[(i * r + c, i * r + c)] += diag;
        }
    }
    for (&f, coeff) in spec.potential.terms() {
        let shift = f * freq_stretch;
        for (col_block, &k) in window.iter().enumerate() {
            if let Some(&row_block) = pos.get(&(k + shift)) {
                for a in 0..r {
                    for b in 0..r {
                        m[(row_block * r + a, col_block * r + b)] += coeff[(a, b)];
                    }
                }
            }
        }
    }

    let labels: Vec<(i64, usize)> = window
        .iter()
        .flat_map(|&k| (0..r).map(move |c| (k, c)))
        .collect();
    let max_diag = window
        .iter()
        .map(|&k| (k as f64 + exponent_offset).abs() * deriv_scale)
        .fold(0.0, f64::max);
    HermitianOperator {
        matrix: m,
        labels,
        resolved_window: max_diag / 2.0,
        provenance: provenance.to_string(),
    }
    .validate()
}
