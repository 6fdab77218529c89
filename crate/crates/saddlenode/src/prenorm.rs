//! Formal preparation stages: normalization of the restriction to `{x=0}`,
//! center-manifold flattening, diagonalization of the x-dependent linear
//! part, and reduction of the linear diagonal to constant residue
//! coefficients.
//!
//! After the full chain the field has shape
//! `x^2 d/dx + ((-lambda + a1 x) y1 + F1) d/dy1 + ((lambda + a2 x) y2 + F2) d/dy2`
//! with `F_i` of y-order at least two and restriction `(lambda + d(v)) L`,
//! `L = -y1 d/dy1 + y2 d/dy2`.

use crate::series::{cr, Scalar, TruncatedSeries, UniSeries, C};
use crate::vectorfield::{FiberedDiffeo, FiberedVectorField, FieldError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrenormError {
    #[error("quadratic part of the restriction Hamiltonian is degenerate (disc = {0:.3e})")]
    DegenerateQuadraticPart(Scalar),
    #[error("eigenvalues of the y-linear part are not opposite nonzero numbers (sum = {0:.3e})")]
    ResonanceViolation(Scalar),
    #[error("restriction to x=0 is neither factored, Hamiltonian, nor removable by the resonant normalization (residual {0:.3e})")]
    UnsupportedRestriction(Scalar),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
}

/// Restriction of a field to `{x = 0}` in factored form `U(y) . L` with
/// `U(0) = lambda != 0`.
#[derive(Debug, Clone)]
pub struct RestrictionFactored {
    /// Unit `U`, a series in `y` only.
    pub unit: TruncatedSeries,
}

impl RestrictionFactored {
    pub fn lambda(&self) -> C {
        self.unit.coeff((0, 0, 0))
    }
}

/// Output of a restriction-normalization stage.
#[derive(Debug, Clone)]
pub struct RestrictionNormalization {
    /// x-independent fibered map whose push-forward linearizes the
    /// restriction orbitally.
    pub phi: FiberedDiffeo,
    /// Resonant profile: the restriction becomes `(lambda + d(v)) L`.
    pub d: UniSeries,
    /// The gauge function of the factored route (zero resonant part), when
    /// that route was taken.
    pub gamma: Option<TruncatedSeries>,
    /// Leftover symmetric profile `(f1 + f2)/2` of the resonant normal form;
    /// vanishes for div-integrable restrictions.
    pub symmetric_residual: UniSeries,
}

const JET_TOL: Scalar = 1e-9;

/// `L = -y1 d/dy1 + y2 d/dy2` acting on a series: `L(y^k) = (k2 - k1) y^k`.
fn lie_l(f: &TruncatedSeries) -> TruncatedSeries {
    let mut out = TruncatedSeries::zero(f.trunc_x(), f.trunc_y());
    for (&k, &c) in f.terms() {
        out.add_term(k, c * cr(k.2 as Scalar - k.1 as Scalar));
    }
    out
}

/// Solves `L(gamma) = rhs` on non-resonant monomials (resonant part of the
/// gauge fixed to zero).
fn solve_lie_l(rhs: &TruncatedSeries) -> TruncatedSeries {
    let mut gamma = TruncatedSeries::zero(rhs.trunc_x(), rhs.trunc_y());
    for (&k, &c) in rhs.terms() {
        if k.1 != k.2 {
            gamma.add_term(k, c / cr(k.2 as Scalar - k.1 as Scalar));
        }
    }
    gamma
}

/// Linearizes a factored restriction `U(y) . L` by the gauge recursion on
/// `L(gamma) = U_nres / U`, degree by degree, with the zero-resonant-part
/// gauge. Returns the gauge, the resulting profile `d(v) = U_res - lambda`,
/// and the normalizing map.
pub fn linearize_restriction(
    restriction: &RestrictionFactored,
    trunc_y: u32,
) -> Result<RestrictionNormalization, PrenormError> {
    let u = restriction.unit.truncate_to(restriction.unit.trunc_x(), trunc_y);
    let lambda = restriction.lambda();
    let ty = trunc_y;
    let tx = u.trunc_x();
    let mut gamma = TruncatedSeries::zero(tx, ty);
    // Current transformed unit, recomputed per degree sweep: for
    // phi = (y1 e^{g}, y2 e^{-g}) the unit becomes [U (1 - L(g))] o phi^{-1}.
    let unit_for = |g: &TruncatedSeries| -> Result<TruncatedSeries, PrenormError> {
        let one = TruncatedSeries::constant(cr(1.0), tx, ty);
        let w = u.mul(&one.sub(&lie_l(g)));
        let phi = gauge_diffeo(g)?;
        let inv = phi.inverse()?;
        Ok(w.compose_fibered(&inv.phi1, &inv.phi2)?)
    };
    for degree in 1..=ty {
        let w = unit_for(&gamma)?;
        let (_, nonres) = w.split_resonant();
        let slice = nonres.y_degree_slice(degree);
        if slice.max_coeff_norm() < 1e-15 {
            continue;
        }
        // Linear response of the unit at this degree is -lambda L(dgamma).
        for (&k, &c) in slice.terms() {
            gamma.add_term(k, c / (lambda * cr(k.2 as Scalar - k.1 as Scalar)));
        }
    }
    let w = unit_for(&gamma)?;
    let (res, nonres) = w.split_resonant();
    let residual = nonres.max_coeff_norm();
    if residual > JET_TOL {
        return Err(PrenormError::UnsupportedRestriction(residual));
    }
    let mut d = res.resonant_profile_x0();
    d.set(0, cr(0.0));
    let phi = gauge_diffeo(&gamma)?;
    Ok(RestrictionNormalization {
        phi,
        d,
        gamma: Some(gamma),
        symmetric_residual: UniSeries::zero((ty / 2) as usize),
    })
}

/// The gauge map `(y1 e^{gamma}, y2 e^{-gamma})`.
fn gauge_diffeo(gamma: &TruncatedSeries) -> Result<FiberedDiffeo, PrenormError> {
    let ep = gamma.exp_series()?;
    let em = gamma.neg().exp_series()?;
    let y1 = TruncatedSeries::var_y1(gamma.trunc_x(), gamma.trunc_y());
    let y2 = TruncatedSeries::var_y2(gamma.trunc_x(), gamma.trunc_y());
    Ok(FiberedDiffeo::new(y1.mul(&ep), y2.mul(&em)))
}

/// Morse normalization of a planar Hamiltonian with nondegenerate quadratic
/// part: returns `phi` with `H o phi^{-1} = lambda y1 y2` exactly on
/// retained degrees. The internal linear change is unimodular, preserving
/// the transversal symplectic structure.
pub fn morse_normalize_hamiltonian(
    h: &TruncatedSeries,
    trunc_y: u32,
) -> Result<FiberedDiffeo, PrenormError> {
    let tx = h.trunc_x();
    let ty = trunc_y;
    let h = h.truncate_to(tx, ty);
    let q20 = h.coeff((0, 2, 0));
    let q11 = h.coeff((0, 1, 1));
    let q02 = h.coeff((0, 0, 2));
    let disc = q11 * q11 - cr(4.0) * q20 * q02;
    if disc.norm() < 1e-12 {
        return Err(PrenormError::DegenerateQuadraticPart(disc.norm()));
    }
    let lambda = disc.sqrt();
    // Shear y2 <- t y1 + y2 (unimodular) until the y1^2 coefficient of the
    // transformed quadratic part is nonzero, so the two linear factors are
    // transverse to {y2 = 0}.
    let mut shear_t = cr(0.0);
    for t in [0.0, 1.0, -1.0, 2.0] {
        let tt = cr(t);
        if (q20 + q11 * tt + q02 * tt * tt).norm() > 1e-9 * (1.0 + disc.norm()) {
            shear_t = tt;
            break;
        }
    }
    let a20 = q20 + q11 * shear_t + q02 * shear_t * shear_t;
    let a11 = q11 + cr(2.0) * q02 * shear_t;
    // Q o shear = a20 (z1 - w+ z2)(z1 - w- z2) with w roots of
    // a20 w^2 + a11 w + q02.
    let root_disc = (a11 * a11 - cr(4.0) * a20 * q02).sqrt();
    let wp = (-a11 + root_disc) / (cr(2.0) * a20);
    let wm = (-a11 - root_disc) / (cr(2.0) * a20);
    // rho_lin = shear o m^{-1} with m(z) = ((z1 - w+ z2)/s, s a20 (z1 - w- z2)/lambda);
    // s free, det(rho_lin) = lambda / (a20 (w+ - w-)) = 1 by the choice of lambda.
    let s = cr(1.0);
    let m = [[cr(1.0) / s, -wp / s], [s * a20 / lambda, -s * a20 * wm / lambda]];
    let det_m = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let minv = [[m[1][1] / det_m, -m[0][1] / det_m], [-m[1][0] / det_m, m[0][0] / det_m]];
    let shear = FiberedDiffeo::linear([[cr(1.0), cr(0.0)], [shear_t, cr(1.0)]], tx, ty);
    let mut rho = shear.compose(&FiberedDiffeo::linear(minv, tx, ty))?;

    // Graded Morse recursion: kill degree-d defects of H o rho by
    // rho <- rho o (Id + g) with lambda (y1 g2 + y2 g1) = -defect.
    for degree in 3..=ty {
        let cur = rho.apply_to(&h)?;
        let target = TruncatedSeries::monomial((0, 1, 1), lambda, tx, ty);
        let defect = cur.sub(&target).y_degree_slice(degree);
        if defect.max_coeff_norm() < 1e-15 {
            continue;
        }
        let y1 = TruncatedSeries::var_y1(tx, ty);
        let y2 = TruncatedSeries::var_y2(tx, ty);
        let mut g1 = TruncatedSeries::zero(tx, ty);
        let mut g2 = TruncatedSeries::zero(tx, ty);
        for (&(k0, k1, k2), &c) in defect.terms() {
            if k1 >= 1 {
                g2.add_term((k0, k1 - 1, k2), -c / lambda);
            } else {
                g1.add_term((k0, k1, k2 - 1), -c / lambda);
            }
        }
        let step = FiberedDiffeo::new(y1.add(&g1), y2.add(&g2));
        rho = rho.compose(&step)?;
    }
    let final_defect = rho
        .apply_to(&h)?
        .sub(&TruncatedSeries::monomial((0, 1, 1), lambda, tx, ty))
        .max_coeff_norm();
    debug_assert!(final_defect < JET_TOL, "Morse recursion left defect {final_defect}");
    Ok(rho.inverse()?)
}

/// Resonant (Poincare-Dulac) normalization of a planar restriction with
/// linear part `diag(-lambda, lambda)`: removes all non-resonant terms,
/// leaving `y1(-lambda + f1(v)) d/dy1 + y2(lambda + f2(v)) d/dy2`. For
/// div-integrable restrictions `f1 + f2 = 0` and the output is
/// `(lambda + d(v)) L` with `d = (f2 - f1)/2`.
pub fn resonant_normalize_restriction(
    x1: &TruncatedSeries,
    x2: &TruncatedSeries,
    lambda: C,
    trunc_y: u32,
) -> Result<RestrictionNormalization, PrenormError> {
    let tx = x1.trunc_x();
    let ty = trunc_y;
    let mut field = FiberedVectorField::new(x1.truncate_to(tx, ty), x2.truncate_to(tx, ty));
    let mut phi = FiberedDiffeo::identity(tx, ty);
    let y1 = TruncatedSeries::var_y1(tx, ty);
    let y2 = TruncatedSeries::var_y2(tx, ty);
    for degree in 2..=ty {
        let lin1 = y1.scale(-lambda);
        let lin2 = y2.scale(lambda);
        let s1 = field.x1.sub(&lin1).y_degree_slice(degree);
        let s2 = field.x2.sub(&lin2).y_degree_slice(degree);
        let mut g1 = TruncatedSeries::zero(tx, ty);
        let mut g2 = TruncatedSeries::zero(tx, ty);
        // ad_{lambda L} eigenvalue on y^k e_i is lambda (k2 - k1 +- 1); kill
        // everything outside the kernel.
        for (&k, &c) in s1.terms() {
            let eig = lambda * cr(k.2 as Scalar - k.1 as Scalar + 1.0);
            if eig.norm() > 1e-12 {
                g1.add_term(k, -c / eig);
            }
        }
        for (&k, &c) in s2.terms() {
            let eig = lambda * cr(k.2 as Scalar - k.1 as Scalar - 1.0);
            if eig.norm() > 1e-12 {
                g2.add_term(k, -c / eig);
            }
        }
        if g1.is_zero() && g2.is_zero() {
            continue;
        }
        let step = FiberedDiffeo::new(y1.add(&g1), y2.add(&g2));
        field = field.push_forward(&step)?;
        phi = step.compose(&phi)?;
    }
    // Extract the resonant profiles f1, f2 and check nothing else is left.
    let u1 = extract_unit(&field.x1, true, tx, ty)?;
    let u2 = extract_unit(&field.x2, false, tx, ty)?;
    let f1 = u1.sub(&TruncatedSeries::constant(-lambda, tx, ty));
    let f2 = u2.sub(&TruncatedSeries::constant(lambda, tx, ty));
    let (f1r, f1n) = f1.split_resonant();
    let (f2r, f2n) = f2.split_resonant();
    let residual = f1n.max_coeff_norm().max(f2n.max_coeff_norm());
    if residual > JET_TOL {
        return Err(PrenormError::UnsupportedRestriction(residual));
    }
    let p1 = f1r.resonant_profile_x0();
    let p2 = f2r.resonant_profile_x0();
    let d = p2.sub(&p1).scale(cr(0.5));
    let symmetric_residual = p2.add(&p1).scale(cr(0.5));
    Ok(RestrictionNormalization { phi, d, gamma: None, symmetric_residual })
}

/// Divides `X_i` by its distinguished variable (`y1` for the first
/// component), failing if the component is not in the ideal.
fn extract_unit(
    x: &TruncatedSeries,
    first: bool,
    tx: u32,
    ty: u32,
) -> Result<TruncatedSeries, PrenormError> {
    let mut out = TruncatedSeries::zero(tx, ty);
    let mut bad: Scalar = 0.0;
    for (&(k0, k1, k2), &c) in x.terms() {
        if first {
            if k1 == 0 {
                bad = bad.max(c.norm());
            } else {
                out.add_term((k0, k1 - 1, k2), c);
            }
        } else if k2 == 0 {
            bad = bad.max(c.norm());
        } else {
            out.add_term((k0, k1, k2 - 1), c);
        }
    }
    if bad > JET_TOL {
        return Err(PrenormError::UnsupportedRestriction(bad));
    }
    Ok(out)
}

/// Constant diagonalization of the y-linear part at the origin: returns a
/// unimodular `P` (det 1) and the transformed field with linear part
/// `diag(-lambda, lambda)` at `x = 0`.
pub fn diagonalize_y_linear_part(
    y: &FiberedVectorField,
) -> Result<([[C; 2]; 2], FiberedVectorField, C), PrenormError> {
    let a = y.linear_part();
    let b = [[a[0][0].get(0), a[0][1].get(0)], [a[1][0].get(0), a[1][1].get(0)]];
    let tr = b[0][0] + b[1][1];
    let scale = b.iter().flatten().map(|c| c.norm()).fold(0.0, Scalar::max);
    if tr.norm() > 1e-10 * (1.0 + scale) {
        return Err(PrenormError::ResonanceViolation(tr.norm()));
    }
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let lambda = (-det).sqrt();
    if lambda.norm() < 1e-10 * (1.0 + scale) {
        return Err(PrenormError::ResonanceViolation(0.0));
    }
    // Eigenvectors for -lambda (first column) and +lambda (second column).
    let col = |mu: C| -> [C; 2] {
        // (B - mu) v = 0; pick the larger row combination for stability.
        let r1 = [b[0][0] - mu, b[0][1]];
        let r2 = [b[1][0], b[1][1] - mu];
        let v1 = [-r1[1], r1[0]];
        let v2 = [-r2[1], r2[0]];
        let n1 = v1[0].norm().max(v1[1].norm());
        let n2 = v2[0].norm().max(v2[1].norm());
        if n1 >= n2 {
            v1
        } else {
            v2
        }
    };
    let vm = col(-lambda);
    let vp = col(lambda);
    let mut p = [[vm[0], vp[0]], [vm[1], vp[1]]];
    let detp = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    if detp.norm() < 1e-12 * (1.0 + scale) {
        return Err(PrenormError::ResonanceViolation(detp.norm()));
    }
    // Normalize to det P = 1 (preserves transversal symplecticity).
    let root = detp.sqrt();
    for row in &mut p {
        for entry in row.iter_mut() {
            *entry /= root;
        }
    }
    let pinv = [[p[1][1], -p[0][1]], [-p[1][0], p[0][0]]];
    let map = FiberedDiffeo::linear(pinv, y.trunc_x(), y.trunc_y());
    let transformed = y.push_forward(&map)?;
    // The transformed linear part must now be diagonal with -lambda first.
    let la = transformed.linear_part();
    let off = la[0][1].get(0).norm().max(la[1][0].get(0).norm());
    debug_assert!(off < 1e-9 * (1.0 + scale), "diagonalization left off-diagonal {off}");
    Ok((p, transformed, lambda))
}

/// Center-manifold flattening: solves `x^2 y' = X(x, y(x))` for the unique
/// formal curve with `y(0) = 0` and translates it to `y = 0`.
///
/// Returns the curve `(yhat1, yhat2)`, the translation map, and the
/// transformed field (whose components vanish at `y = 0`).
pub fn flatten_center_manifold(
    y: &FiberedVectorField,
    lambda: C,
) -> Result<([UniSeries; 2], FiberedDiffeo, FiberedVectorField), PrenormError> {
    let tx = y.trunc_x();
    let ty = y.trunc_y();
    let trunc = tx as usize;
    let mut y1 = UniSeries::zero(trunc);
    let mut y2 = UniSeries::zero(trunc);
    // G_i = X_i -+ lambda y_i: everything except the constant diagonal term.
    let g1 = y.x1.add(&TruncatedSeries::var_y1(tx, ty).scale(lambda));
    let g2 = y.x2.sub(&TruncatedSeries::var_y2(tx, ty).scale(lambda));
    for n in 1..=trunc {
        // Evaluate G(x, yhat(x)) exactly at degree n (lower coefficients of
        // yhat are already final and yhat has no constant term).
        let e1 = TruncatedSeries::from_x_series(&y1, tx, ty);
        let e2 = TruncatedSeries::from_x_series(&y2, tx, ty);
        let g1n = g1.compose_fibered(&e1, &e2)?.coeff((n as u32, 0, 0));
        let g2n = g2.compose_fibered(&e1, &e2)?.coeff((n as u32, 0, 0));
        let prev1 = y1.get(n - 1);
        let prev2 = y2.get(n - 1);
        y1.set(n, (g1n - cr(n as Scalar - 1.0) * prev1) / lambda);
        y2.set(n, (cr(n as Scalar - 1.0) * prev2 - g2n) / lambda);
    }
    let e1 = TruncatedSeries::from_x_series(&y1, tx, ty);
    let e2 = TruncatedSeries::from_x_series(&y2, tx, ty);
    let phi = FiberedDiffeo::new(
        TruncatedSeries::var_y1(tx, ty).sub(&e1),
        TruncatedSeries::var_y2(tx, ty).sub(&e2),
    );
    let transformed = y.push_forward(&phi)?;
    let affine = transformed.x1.x_profile(0, 0).max_coeff_norm()
        .max(transformed.x2.x_profile(0, 0).max_coeff_norm());
    debug_assert!(affine < JET_TOL, "flattening left affine part {affine}");
    Ok(([y1, y2], phi, transformed))
}

/// Diagonalization of the x-dependent linear part by the Riccati pair
/// `(p1, p2)`: the conjugating matrix is `P(x) = [[1, x p2], [x p1, 1]]`
/// acting as `old = P(x) . new`.
pub fn diagonalize_linear(
    y: &FiberedVectorField,
    lambda: C,
) -> Result<([UniSeries; 2], FiberedDiffeo, FiberedVectorField), PrenormError> {
    let tx = y.trunc_x();
    let ty = y.trunc_y();
    let trunc = tx as usize;
    let a = y.linear_part();
    // A11 = -lambda + x b1(x), A12 = x c1(x), A21 = x c2(x), A22 = lambda + x b2(x).
    let shift = |u: &UniSeries| {
        let mut s = UniSeries::zero(trunc);
        for k in 0..trunc {
            s.set(k, u.get(k + 1));
        }
        s
    };
    let b1 = shift(&a[0][0]);
    let b2 = shift(&a[1][1]);
    let c1 = shift(&a[0][1]);
    let c2 = shift(&a[1][0]);
    let two_lambda = cr(2.0) * lambda;
    let mut p1 = UniSeries::zero(trunc);
    let mut p2 = UniSeries::zero(trunc);
    let d21 = b2.sub(&b1);
    let d12 = b1.sub(&b2);
    for n in 0..=trunc {
        // 2 lambda p1_n = n p1_{n-1} - [(b2 - b1) p1]_{n-1} - c2_n + [c1 p1^2]_{n-2}
        let mut rhs1 = -c2.get(n);
        let mut rhs2 = -c1.get(n);
        if n >= 1 {
            rhs1 += cr(n as Scalar) * p1.get(n - 1) - d21.mul(&p1).get(n - 1);
            rhs2 += cr(n as Scalar) * p2.get(n - 1) - d12.mul(&p2).get(n - 1);
        }
        if n >= 2 {
            rhs1 += c1.mul(&p1).mul(&p1).get(n - 2);
            rhs2 += c2.mul(&p2).mul(&p2).get(n - 2);
        }
        p1.set(n, rhs1 / two_lambda);
        p2.set(n, -rhs2 / two_lambda);
    }
    // Map: new = P^{-1} old with P = [[1, x p2],[x p1, 1]].
    let xp1 = TruncatedSeries::from_x_series(&p1, tx, ty).mul_xpow(1);
    let xp2 = TruncatedSeries::from_x_series(&p2, tx, ty).mul_xpow(1);
    let one = TruncatedSeries::constant(cr(1.0), tx, ty);
    let det = one.sub(&xp1.mul(&xp2));
    let det_inv = det.inverse_unit()?;
    let y1 = TruncatedSeries::var_y1(tx, ty);
    let y2 = TruncatedSeries::var_y2(tx, ty);
    let phi = FiberedDiffeo::new(
        y1.sub(&xp2.mul(&y2)).mul(&det_inv),
        y2.sub(&xp1.mul(&y1)).mul(&det_inv),
    );
    let transformed = y.push_forward(&phi)?;
    let la = transformed.linear_part();
    let off: Scalar = (0..=trunc)
        .map(|k| la[0][1].get(k).norm().max(la[1][0].get(k).norm()))
        .fold(0.0, Scalar::max);
    debug_assert!(off < JET_TOL, "off-diagonal linear part {off} after Riccati step");
    Ok(([p1, p2], phi, transformed))
}

/// Reduces the diagonal linear coefficients `a_i(x)` to their constant
/// leading values via `q_i = exp` of the constant-free antiderivative of
/// `(a_i(x) - a_i)/x`; the map divides each component by `q_i`.
pub fn constant_residue_coeffs(
    y: &FiberedVectorField,
    lambda: C,
) -> Result<([UniSeries; 2], (C, C), FiberedDiffeo, FiberedVectorField), PrenormError> {
    let tx = y.trunc_x();
    let ty = y.trunc_y();
    let trunc = tx as usize;
    let a = y.linear_part();
    // a1(x) with A11 = -lambda + x a1(x); a2 with A22 = lambda + x a2(x).
    let mut q = Vec::new();
    let mut consts = Vec::new();
    for (idx, sign) in [(0usize, -1.0), (1usize, 1.0)] {
        let diag = &a[idx][idx];
        debug_assert!((diag.get(0) - lambda * cr(sign)).norm() < 1e-9 * (1.0 + lambda.norm()));
        let ai = diag.get(1);
        let mut anti = UniSeries::zero(trunc);
        for n in 1..=trunc {
            // Coefficient of x^n in the antiderivative of (a_i(x) - a_i)/x.
            if n >= 1 {
                anti.set(n, diag.get(n + 1) / cr(n as Scalar));
            }
        }
        q.push(anti.exp()?);
        consts.push(ai);
    }
    let q1s = TruncatedSeries::from_x_series(&q[0], tx, ty);
    let q2s = TruncatedSeries::from_x_series(&q[1], tx, ty);
    let phi = FiberedDiffeo::new(
        TruncatedSeries::var_y1(tx, ty).mul(&q1s.inverse_unit()?),
        TruncatedSeries::var_y2(tx, ty).mul(&q2s.inverse_unit()?),
    );
    let transformed = y.push_forward(&phi)?;
    let la = transformed.linear_part();
    let mut defect: Scalar = 0.0;
    for k in 2..=trunc {
        defect = defect.max(la[0][0].get(k).norm()).max(la[1][1].get(k).norm());
    }
    debug_assert!(defect < JET_TOL, "non-constant diagonal left: {defect}");
    Ok(([q[0].clone(), q[1].clone()], (consts[0], consts[1]), phi, transformed))
}

/// Full preparation result.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Composition of all tangent-to-identity stages (excludes `p_const`).
    pub phi: FiberedDiffeo,
    /// The constant unimodular diagonalization applied first (identity when
    /// the input linear part was already diagonal).
    pub p_const: [[C; 2]; 2],
    pub field: FiberedVectorField,
    pub lambda: C,
    pub a1: C,
    pub a2: C,
    /// Resonant profile of the restriction after preparation.
    pub d: UniSeries,
    /// `(f1 + f2)/2` leftover of the restriction normalization (zero for
    /// div-integrable inputs).
    pub restriction_symmetric_residual: UniSeries,
}

/// Runs the whole preparation chain: constant diagonalization, restriction
/// normalization (factored, Hamiltonian, or resonant route), center-manifold
/// flattening, Riccati diagonalization, constant residue coefficients.
pub fn prepare(y: &FiberedVectorField) -> Result<Prepared, PrenormError> {
    let tx = y.trunc_x();
    let ty = y.trunc_y();
    // Stage 0: constant diagonalization if needed.
    let a0 = y.linear_part();
    let off0 = a0[0][1].get(0).norm().max(a0[1][0].get(0).norm());
    let scale = a0.iter().flatten().map(|u| u.get(0).norm()).fold(0.0, Scalar::max);
    let (p_const, mut field, lambda) = if off0 > 1e-12 * (1.0 + scale) {
        diagonalize_y_linear_part(y)?
    } else {
        let lambda = a0[1][1].get(0);
        if lambda.norm() < 1e-12 || (a0[0][0].get(0) + lambda).norm() > 1e-10 * (1.0 + scale) {
            return Err(PrenormError::ResonanceViolation((a0[0][0].get(0) + lambda).norm()));
        }
        ([[cr(1.0), cr(0.0)], [cr(0.0), cr(1.0)]], y.clone(), lambda)
    };
    let mut phi = FiberedDiffeo::identity(tx, ty);

    // Stage 1: restriction normalization on {x = 0}. The restriction data is
    // y-only, so the stage runs at trunc_x = 0 and the resulting map is
    // re-hosted on the full box (exact: no x-dependence anywhere).
    let r1 = field.x1.x_slice(0).truncate_to(0, ty);
    let r2 = field.x2.x_slice(0).truncate_to(0, ty);
    let norm = restriction_normalization(&r1, &r2, lambda, ty)?;
    let phi0 = FiberedDiffeo::new(
        norm.phi.phi1.with_bounds(tx, ty),
        norm.phi.phi2.with_bounds(tx, ty),
    );
    field = field.push_forward(&phi0)?;
    phi = phi0.compose(&phi)?;

    // Stage 2: center manifold.
    let (_, phi1, f1) = flatten_center_manifold(&field, lambda)?;
    field = f1;
    phi = phi1.compose(&phi)?;

    // Stage 3: Riccati diagonalization of the linear part.
    let (_, phi2, f2) = diagonalize_linear(&field, lambda)?;
    field = f2;
    phi = phi2.compose(&phi)?;

    // Stage 4: constant residue coefficients.
    let (_, (a1, a2), phi3, f3) = constant_residue_coeffs(&field, lambda)?;
    field = f3;
    phi = phi3.compose(&phi)?;

    Ok(Prepared {
        phi,
        p_const,
        field,
        lambda,
        a1,
        a2,
        d: norm.d,
        restriction_symmetric_residual: norm.symmetric_residual,
    })
}

/// Dispatches the restriction to the factored, Hamiltonian, or resonant
/// normalization route.
pub fn restriction_normalization(
    x1: &TruncatedSeries,
    x2: &TruncatedSeries,
    lambda: C,
    trunc_y: u32,
) -> Result<RestrictionNormalization, PrenormError> {
    // Factored route: X1 = -U y1, X2 = U y2 for a common unit U.
    if let (Ok(u1), Ok(u2)) = (
        extract_unit(x1, true, x1.trunc_x(), trunc_y),
        extract_unit(x2, false, x2.trunc_x(), trunc_y),
    ) {
        if u1.neg().max_diff(&u2) < JET_TOL {
            return linearize_restriction(&RestrictionFactored { unit: u2 }, trunc_y);
        }
    }
    // Hamiltonian route: divergence-free restriction integrates to H with
    // X1 = -dH/dy2, X2 = dH/dy1; Morse brings H to lambda y1 y2 and the
    // push-forward factors the restriction, handled by the resonant sweep.
    let divergence = x1.dy1().add(&x2.dy2()).max_coeff_norm();
    if divergence < JET_TOL {
        let h = hamiltonian_from_restriction(x1, x2, trunc_y);
        let morse = morse_normalize_hamiltonian(&h, trunc_y)?;
        let tx = x1.trunc_x();
        let pushed = FiberedVectorField::new(x1.clone(), x2.clone()).push_forward(&morse)?;
        let rest = resonant_normalize_restriction(&pushed.x1, &pushed.x2, lambda, trunc_y)?;
        let phi = rest.phi.compose(&morse)?;
        let _ = tx;
        return Ok(RestrictionNormalization { phi, ..rest });
    }
    // General route: resonant normalization (div-integrability shows up as a
    // vanishing symmetric profile).
    resonant_normalize_restriction(x1, x2, lambda, trunc_y)
}

/// Reconstructs the Hamiltonian of a divergence-free planar restriction:
/// `H = -int X1 dy2 + g(y1)` with `g' = X2 + d/dy1 int X1 dy2`.
pub fn hamiltonian_from_restriction(
    x1: &TruncatedSeries,
    x2: &TruncatedSeries,
    trunc_y: u32,
) -> TruncatedSeries {
    let tx = x1.trunc_x();
    let ty = trunc_y;
    let mut h = TruncatedSeries::zero(tx, ty);
    // -int X1 dy2
    for (&(k0, k1, k2), &c) in x1.terms() {
        h.add_term((k0, k1, k2 + 1), -c / cr(k2 as Scalar + 1.0));
    }
    // g'(y1) = X2|_{y2=0} + (d/dy1 of the part already in h)|_{y2=0};
    // the y2-free part of h is zero by construction, so g' = X2|_{y2=0}.
    for (&(k0, k1, k2), &c) in x2.terms() {
        if k2 == 0 {
            h.add_term((k0, k1 + 1, 0), c / cr(k1 as Scalar + 1.0));
        }
    }
    h
}
