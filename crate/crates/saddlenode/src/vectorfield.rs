//! Fibered vector fields and diffeomorphisms: push-forward, Lie derivative,
//! residue, and the structural predicates of the classification.
//!
//! All vector fields here have x-component fixed to `x^2`; all maps preserve
//! the `x` coordinate. The push-forward action is `Phi_*(Y) = (DPhi . Y) o
//! Phi^{-1}`, with the inverse computed exactly at jet level by graded
//! fixed-point iteration.

use crate::series::{cr, Scalar, SeriesError, TruncatedSeries, UniSeries, C};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("y-linear part of the map is singular at the origin (det = {0:.3e})")]
    SingularLinearPart(Scalar),
    #[error("y-linear part at x=0 is not diag(-lambda, lambda); apply a constant diagonalization first")]
    NotDiagonalizable,
    #[error("eigenvalues of the y-linear part are not opposite nonzero numbers")]
    ResonanceViolation,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Singular vector field `x^2 d/dx + X1 d/dy1 + X2 d/dy2`.
///
/// The x-component is `x^2` by construction and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedVectorField {
    pub x1: TruncatedSeries,
    pub x2: TruncatedSeries,
}

impl FiberedVectorField {
    pub fn new(x1: TruncatedSeries, x2: TruncatedSeries) -> Self {
        FiberedVectorField { x1, x2 }
    }

    pub fn trunc_x(&self) -> u32 {
        self.x1.trunc_x().min(self.x2.trunc_x())
    }

    pub fn trunc_y(&self) -> u32 {
        self.x1.trunc_y().min(self.x2.trunc_y())
    }

    /// Diagonal linear model `Y_norm` with profile `c(v)`:
    /// `x^2 d/dx + (-lambda + a1 x - c(v)) y1 d/dy1 + (lambda + a2 x + c(v)) y2 d/dy2`.
    pub fn normal_form(lambda: C, a1: C, a2: C, c: &UniSeries, trunc_x: u32, trunc_y: u32) -> Self {
        let y1 = TruncatedSeries::var_y1(trunc_x, trunc_y);
        let y2 = TruncatedSeries::var_y2(trunc_x, trunc_y);
        let x = TruncatedSeries::var_x(trunc_x, trunc_y);
        let cv = TruncatedSeries::from_v_series(c, trunc_x, trunc_y);
        let u1 = TruncatedSeries::constant(-lambda, trunc_x, trunc_y)
            .add(&x.scale(a1))
            .sub(&cv);
        let u2 = TruncatedSeries::constant(lambda, trunc_x, trunc_y)
            .add(&x.scale(a2))
            .add(&cv);
        FiberedVectorField { x1: u1.mul(&y1), x2: u2.mul(&y2) }
    }

    /// Lie derivative `x^2 df/dx + X1 df/dy1 + X2 df/dy2`.
    pub fn lie_derivative(&self, f: &TruncatedSeries) -> TruncatedSeries {
        let x2 = TruncatedSeries::monomial((2, 0, 0), cr(1.0), f.trunc_x(), f.trunc_y());
        x2.mul(&f.dx()).add(&self.x1.mul(&f.dy1())).add(&self.x2.mul(&f.dy2()))
    }

    /// The 2x2 matrix of x-profiles of the y-linear part: `A[i][j](x)` is the
    /// coefficient series of `y_{j+1}` in `X_{i+1}`.
    pub fn linear_part(&self) -> [[UniSeries; 2]; 2] {
        [
            [self.x1.x_profile(1, 0), self.x1.x_profile(0, 1)],
            [self.x2.x_profile(1, 0), self.x2.x_profile(0, 1)],
        ]
    }

    /// Residue `(Tr A(x)/x)|_{x=0}`, requiring `A(0) = diag(-lambda, lambda)`.
    pub fn residue(&self) -> Result<C, FieldError> {
        let a = self.linear_part();
        let tol = 1e-12
            * (1.0 + a.iter().flatten().map(|u| u.max_coeff_norm()).fold(0.0, Scalar::max));
        let lambda = a[1][1].get(0);
        if (a[0][0].get(0) + lambda).norm() > tol
            || a[0][1].get(0).norm() > tol
            || a[1][0].get(0).norm() > tol
            || lambda.norm() <= tol
        {
            return Err(FieldError::NotDiagonalizable);
        }
        Ok(a[0][0].get(1) + a[1][1].get(1))
    }

    /// `dX1/dy1 + dX2/dy2 - x`; the field is transversally Hamiltonian with
    /// respect to `dy1^dy2/x` iff this series vanishes.
    pub fn divergence_defect(&self) -> TruncatedSeries {
        let x = TruncatedSeries::var_x(self.trunc_x(), self.trunc_y());
        self.x1.dy1().add(&self.x2.dy2()).sub(&x)
    }

    /// Push-forward `(DPhi . Y) o Phi^{-1}`.
    pub fn push_forward(&self, phi: &FiberedDiffeo) -> Result<Self, FieldError> {
        let inv = phi.inverse()?;
        let g1 = self.lie_derivative(&phi.phi1);
        let g2 = self.lie_derivative(&phi.phi2);
        let x1 = g1.compose_fibered(&inv.phi1, &inv.phi2)?;
        let x2 = g2.compose_fibered(&inv.phi1, &inv.phi2)?;
        Ok(FiberedVectorField { x1, x2 })
    }

    /// Numeric evaluation of `(X1, X2)` at a point.
    pub fn eval(&self, x: C, y1: C, y2: C) -> (C, C) {
        (self.x1.eval(x, y1, y2), self.x2.eval(x, y1, y2))
    }

    pub fn max_diff(&self, other: &Self) -> Scalar {
        self.x1.max_diff(&other.x1).max(self.x2.max_diff(&other.x2))
    }

    pub fn to_json(&self, lambda: Option<C>) -> serde_json::Value {
        match lambda {
            Some(l) => serde_json::json!({
                "lambda": { "re": l.re, "im": l.im },
                "X1": self.x1.to_json(),
                "X2": self.x2.to_json(),
            }),
            None => serde_json::json!({
                "components": [self.x1.to_json(), self.x2.to_json()],
            }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Self> {
        if let Some(components) = v.get("components").and_then(|c| c.as_array()) {
            let x1 = TruncatedSeries::from_json(components.first()?)?;
            let x2 = TruncatedSeries::from_json(components.get(1)?)?;
            return Some(FiberedVectorField { x1, x2 });
        }
        let x1 = TruncatedSeries::from_json(v.get("X1")?)?;
        let x2 = TruncatedSeries::from_json(v.get("X2")?)?;
        Some(FiberedVectorField { x1, x2 })
    }
}

/// Fibered map `(x, y) -> (x, phi1(x,y), phi2(x,y))` with invertible y-linear
/// part.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedDiffeo {
    pub phi1: TruncatedSeries,
    pub phi2: TruncatedSeries,
    pub tangent_to_identity: bool,
}

impl FiberedDiffeo {
    pub fn new(phi1: TruncatedSeries, phi2: TruncatedSeries) -> Self {
        let tangent = Self::check_tangent(&phi1, &phi2);
        FiberedDiffeo { phi1, phi2, tangent_to_identity: tangent }
    }

    fn check_tangent(phi1: &TruncatedSeries, phi2: &TruncatedSeries) -> bool {
        let y1 = TruncatedSeries::var_y1(phi1.trunc_x(), phi1.trunc_y());
        let y2 = TruncatedSeries::var_y2(phi2.trunc_x(), phi2.trunc_y());
        let d1 = phi1.sub(&y1);
        let d2 = phi2.sub(&y2);
        d1.total_order().map_or(true, |o| o >= 2) && d2.total_order().map_or(true, |o| o >= 2)
    }

    pub fn identity(trunc_x: u32, trunc_y: u32) -> Self {
        Self::new(TruncatedSeries::var_y1(trunc_x, trunc_y), TruncatedSeries::var_y2(trunc_x, trunc_y))
    }

    /// Constant linear map `y -> M y`.
    pub fn linear(m: [[C; 2]; 2], trunc_x: u32, trunc_y: u32) -> Self {
        let y1 = TruncatedSeries::var_y1(trunc_x, trunc_y);
        let y2 = TruncatedSeries::var_y2(trunc_x, trunc_y);
        Self::new(
            y1.scale(m[0][0]).add(&y2.scale(m[0][1])),
            y1.scale(m[1][0]).add(&y2.scale(m[1][1])),
        )
    }

    pub fn trunc_x(&self) -> u32 {
        self.phi1.trunc_x().min(self.phi2.trunc_x())
    }

    pub fn trunc_y(&self) -> u32 {
        self.phi1.trunc_y().min(self.phi2.trunc_y())
    }

    /// Composition `self o other`.
    pub fn compose(&self, other: &Self) -> Result<Self, FieldError> {
        let p1 = self.phi1.compose_fibered(&other.phi1, &other.phi2)?;
        let p2 = self.phi2.compose_fibered(&other.phi1, &other.phi2)?;
        Ok(Self::new(p1, p2))
    }

    /// Applies the map to a series: `f o Phi`.
    pub fn apply_to(&self, f: &TruncatedSeries) -> Result<TruncatedSeries, FieldError> {
        Ok(f.compose_fibered(&self.phi1, &self.phi2)?)
    }

    /// Numeric evaluation.
    pub fn eval(&self, x: C, y1: C, y2: C) -> (C, C) {
        (self.phi1.eval(x, y1, y2), self.phi2.eval(x, y1, y2))
    }

    /// Jacobian determinant in the y-variables (equals `det DPhi` of the full
    /// fibered map) as a series.
    pub fn det_jacobian(&self) -> TruncatedSeries {
        let j11 = self.phi1.dy1();
        let j12 = self.phi1.dy2();
        let j21 = self.phi2.dy1();
        let j22 = self.phi2.dy2();
        j11.mul(&j22).sub(&j12.mul(&j21))
    }

    /// Inverse by degree-graded fixed-point iteration, exact at each jet
    /// level. Writing `phi = t(x) + M(x) y + H(x,y)` with `H` of y-order at
    /// least two, the inverse solves `psi = M^{-1}(z - t - H(psi))`.
    pub fn inverse(&self) -> Result<Self, FieldError> {
        let tx = self.trunc_x();
        let ty = self.trunc_y();
        // Split into translation, linear part and higher-order part.
        let t1 = TruncatedSeries::from_x_series(&self.phi1.x_profile(0, 0), tx, ty);
        let t2 = TruncatedSeries::from_x_series(&self.phi2.x_profile(0, 0), tx, ty);
        let m = [
            [self.phi1.x_profile(1, 0), self.phi1.x_profile(0, 1)],
            [self.phi2.x_profile(1, 0), self.phi2.x_profile(0, 1)],
        ];
        let det0 = m[0][0].get(0) * m[1][1].get(0) - m[0][1].get(0) * m[1][0].get(0);
        if det0.norm() < 1e-12 {
            return Err(FieldError::SingularLinearPart(det0.norm()));
        }
        let ms = |u: &UniSeries| TruncatedSeries::from_x_series(u, tx, ty);
        let y1 = TruncatedSeries::var_y1(tx, ty);
        let y2 = TruncatedSeries::var_y2(tx, ty);
        let lin1 = ms(&m[0][0]).mul(&y1).add(&ms(&m[0][1]).mul(&y2));
        let lin2 = ms(&m[1][0]).mul(&y1).add(&ms(&m[1][1]).mul(&y2));
        let h1 = self.phi1.sub(&t1).sub(&lin1);
        let h2 = self.phi2.sub(&t2).sub(&lin2);
        // Series inverse of M(x) via the adjugate.
        let det = ms(&m[0][0]).mul(&ms(&m[1][1])).sub(&ms(&m[0][1]).mul(&ms(&m[1][0])));
        let det_inv = det.inverse_unit()?;
        let mi = [
            [ms(&m[1][1]).mul(&det_inv), ms(&m[0][1]).neg().mul(&det_inv)],
            [ms(&m[1][0]).neg().mul(&det_inv), ms(&m[0][0]).mul(&det_inv)],
        ];
        let apply_mi = |u1: &TruncatedSeries, u2: &TruncatedSeries| {
            (
                mi[0][0].mul(u1).add(&mi[0][1].mul(u2)),
                mi[1][0].mul(u1).add(&mi[1][1].mul(u2)),
            )
        };
        let (mut psi1, mut psi2) = apply_mi(&y1.sub(&t1), &y2.sub(&t2));
        let scale = 1.0 + self.phi1.max_coeff_norm().max(self.phi2.max_coeff_norm());
        for _ in 0..=(tx + ty + 2) {
            let e1 = h1.compose_fibered(&psi1, &psi2)?;
            let e2 = h2.compose_fibered(&psi1, &psi2)?;
            let (n1, n2) = apply_mi(&y1.sub(&t1).sub(&e1), &y2.sub(&t2).sub(&e2));
            let delta = n1.max_diff(&psi1).max(n2.max_diff(&psi2));
            psi1 = n1;
            psi2 = n2;
            if delta < 1e-15 * scale {
                break;
            }
        }
        Ok(Self::new(psi1, psi2))
    }
}

/// Two-dimensional irregular system view `x^2 y' = alpha(x) + A(x) y + F(x,y)`.
#[derive(Debug, Clone)]
pub struct SystemForm {
    pub alpha: [UniSeries; 2],
    pub a: [[UniSeries; 2]; 2],
    pub f: [TruncatedSeries; 2],
    pub trunc_x: u32,
    pub trunc_y: u32,
}

impl SystemForm {
    /// Decomposes a fibered field into affine, linear and higher-order parts.
    pub fn from_field(y: &FiberedVectorField) -> Self {
        let tx = y.trunc_x();
        let ty = y.trunc_y();
        let alpha = [y.x1.x_profile(0, 0), y.x2.x_profile(0, 0)];
        let a = y.linear_part();
        let rebuild = |alpha: &UniSeries, a1: &UniSeries, a2: &UniSeries, total: &TruncatedSeries| {
            let y1 = TruncatedSeries::var_y1(tx, ty);
            let y2 = TruncatedSeries::var_y2(tx, ty);
            total
                .sub(&TruncatedSeries::from_x_series(alpha, tx, ty))
                .sub(&TruncatedSeries::from_x_series(a1, tx, ty).mul(&y1))
                .sub(&TruncatedSeries::from_x_series(a2, tx, ty).mul(&y2))
        };
        let f = [
            rebuild(&alpha[0], &a[0][0], &a[0][1], &y.x1),
            rebuild(&alpha[1], &a[1][0], &a[1][1], &y.x2),
        ];
        SystemForm { alpha, a, f, trunc_x: tx, trunc_y: ty }
    }

    pub fn to_field(&self) -> FiberedVectorField {
        let tx = self.trunc_x;
        let ty = self.trunc_y;
        let y1 = TruncatedSeries::var_y1(tx, ty);
        let y2 = TruncatedSeries::var_y2(tx, ty);
        let x1 = TruncatedSeries::from_x_series(&self.alpha[0], tx, ty)
            .add(&TruncatedSeries::from_x_series(&self.a[0][0], tx, ty).mul(&y1))
            .add(&TruncatedSeries::from_x_series(&self.a[0][1], tx, ty).mul(&y2))
            .add(&self.f[0]);
        let x2 = TruncatedSeries::from_x_series(&self.alpha[1], tx, ty)
            .add(&TruncatedSeries::from_x_series(&self.a[1][0], tx, ty).mul(&y1))
            .add(&TruncatedSeries::from_x_series(&self.a[1][1], tx, ty).mul(&y2))
            .add(&self.f[1]);
        FiberedVectorField { x1, x2 }
    }

    /// The eigenvalue `lambda` read off `A(0) = diag(-lambda, lambda)`.
    pub fn lambda(&self) -> Result<C, FieldError> {
        let tol = 1e-10 * (1.0 + self.a[1][1].get(0).norm());
        if (self.a[0][0].get(0) + self.a[1][1].get(0)).norm() > tol
            || self.a[0][1].get(0).norm() > tol
            || self.a[1][0].get(0).norm() > tol
        {
            return Err(FieldError::NotDiagonalizable);
        }
        Ok(self.a[1][1].get(0))
    }

    /// Residue `Tr(A(x))/x` at `x = 0`.
    pub fn residue(&self) -> C {
        self.a[0][0].get(1) + self.a[1][1].get(1)
    }
}

/// Classification of the residue per the degeneracy conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueClass {
    pub residue: C,
    /// `res` is not (numerically close to) a non-positive rational.
    pub non_degenerate: bool,
    /// `Re(res) > 0`.
    pub strictly_non_degenerate: bool,
}

/// Flags a residue against the non-degeneracy conditions. Proximity to
/// `Q_{<=0}` is only decidable on a finite lattice: we test rationals `-p/q`
/// with `q <= 64`, `p/q <= 64`, at tolerance `1e-9`.
pub fn classify_residue(res: C) -> ResidueClass {
    let mut non_degenerate = true;
    if res.im.abs() < 1e-9 {
        let r = res.re;
        if r < 1e-9 {
            'outer: for q in 1..=64u32 {
                for p in 0..=(64 * q) {
                    if (r + p as Scalar / q as Scalar).abs() < 1e-9 {
                        non_degenerate = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    ResidueClass { residue: res, non_degenerate, strictly_non_degenerate: res.re > 0.0 }
}
