//! Borel transforms, convolution, directional Laplace summation by
//! quadrature, weighted norms on ray domains, and the two model-ODE solvers
//! for irregular and regular singular linear equations.

use crate::numerics::{integrate_panel_adaptive, solve_dense};
use crate::series::{cr, Scalar, UniSeries, C};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BorelError {
    #[error("both operands of a convolution must use the shifted (bis) transform")]
    VariantMismatch,
    #[error("Laplace integrand violates the growth bound: Re(e^{{i theta}}/x) = {0:.3e} <= {1:.3e}")]
    DivergentIntegrand(Scalar, Scalar),
    #[error("model equation requires k != 0")]
    ZeroEigenvalue,
    #[error("regular model equation requires Re(k) > 0, got {0:.3e}")]
    NonpositiveRealPart(Scalar),
    #[error("Pade continuation has a pole on the sampled grid (|den| = {0:.3e})")]
    ContinuationFailure(Scalar),
}

/// Which Borel transform a coefficient vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorelVariant {
    /// `B(f)(t) = sum f_k t^k / k!`
    Standard,
    /// `B~(f)(t) = sum f_{k+1} t^k / k!` (turns products into convolutions)
    Bis,
}

/// A Borel-transformed series with a crude radius-of-convergence estimate.
#[derive(Debug, Clone)]
pub struct BorelSeries {
    pub coeffs: UniSeries,
    pub variant: BorelVariant,
    pub radius_estimate: Option<Scalar>,
}

fn factorial(k: usize) -> Scalar {
    (1..=k).fold(1.0, |acc, j| acc * j as Scalar)
}

/// Coefficientwise Borel transform.
pub fn borel(f: &UniSeries, variant: BorelVariant) -> BorelSeries {
    let trunc = f.trunc();
    let n = match variant {
        BorelVariant::Standard => trunc,
        BorelVariant::Bis => trunc.saturating_sub(1),
    };
    let mut coeffs = UniSeries::zero(n);
    for k in 0..=n {
        let src = match variant {
            BorelVariant::Standard => f.get(k),
            BorelVariant::Bis => f.get(k + 1),
        };
        coeffs.set(k, src / cr(factorial(k)));
    }
    // Root-test radius estimate from the tail coefficients.
    let radius_estimate = (n >= 4).then(|| {
        let mut est: Scalar = 0.0;
        for k in n.saturating_sub(4)..=n {
            let c = coeffs.get(k).norm();
            if c > 0.0 {
                est = est.max(c.powf(1.0 / k.max(1) as Scalar));
            }
        }
        if est > 0.0 {
            1.0 / est
        } else {
            Scalar::INFINITY
        }
    });
    BorelSeries { coeffs, variant, radius_estimate }
}

/// Term-by-term inverse of [`borel`].
pub fn inverse_borel(b: &BorelSeries) -> UniSeries {
    match b.variant {
        BorelVariant::Standard => {
            let mut f = UniSeries::zero(b.coeffs.trunc());
            for k in 0..=b.coeffs.trunc() {
                f.set(k, b.coeffs.get(k) * cr(factorial(k)));
            }
            f
        }
        BorelVariant::Bis => {
            let mut f = UniSeries::zero(b.coeffs.trunc() + 1);
            for k in 0..=b.coeffs.trunc() {
                f.set(k + 1, b.coeffs.get(k) * cr(factorial(k)));
            }
            f
        }
    }
}

/// Convolution `(g * h)(t) = int_0^t g(s) h(t-s) ds`, coefficientwise; the
/// shifted-transform identity `B~(fg) = B~(f) * B~(g)` holds for series
/// without constant term.
pub fn convolve(g: &BorelSeries, h: &BorelSeries) -> Result<BorelSeries, BorelError> {
    if g.variant != BorelVariant::Bis || h.variant != BorelVariant::Bis {
        return Err(BorelError::VariantMismatch);
    }
    // In the t^k/k! basis: coefficient m of g*h is sum_{k+l=m-1} g_k h_l.
    let trunc = g.coeffs.trunc().min(h.coeffs.trunc()) + 1;
    let mut out = UniSeries::zero(trunc);
    for m in 1..=trunc {
        let mut acc = cr(0.0);
        for k in 0..m {
            let gk = g.coeffs.get(k) * cr(factorial(k));
            let hl = h.coeffs.get(m - 1 - k) * cr(factorial(m - 1 - k));
            acc += gk * hl;
        }
        out.set(m, acc / cr(factorial(m)));
    }
    Ok(BorelSeries { coeffs: out, variant: BorelVariant::Bis, radius_estimate: None })
}

/// Diagonal(ish) Pade approximant of a truncated series, used as the
/// analytic continuation of Borel transforms along rays.
#[derive(Debug, Clone)]
pub struct PadeApproximant {
    pub num: UniSeries,
    pub den: UniSeries,
}

impl PadeApproximant {
    /// Builds the `[m/m]` approximant from `2m+1` coefficients, reducing `m`
    /// when the Toeplitz system is singular.
    pub fn diagonal(f: &UniSeries) -> Self {
        let mmax = f.trunc() / 2;
        for m in (1..=mmax).rev() {
            if let Some(p) = Self::try_order(f, m) {
                return p;
            }
        }
        PadeApproximant {
            num: UniSeries::from_coeffs(vec![f.get(0)], 0),
            den: UniSeries::constant(cr(1.0), 0),
        }
    }

    fn try_order(f: &UniSeries, m: usize) -> Option<Self> {
        // Denominator q (q_0 = 1) solves sum_{j=1..m} q_j c_{m+i-j} = -c_{m+i}.
        let mut a = vec![vec![cr(0.0); m]; m];
        let mut b = vec![cr(0.0); m];
        for i in 1..=m {
            for j in 1..=m {
                let idx = m as i64 + i as i64 - j as i64;
                a[i - 1][j - 1] = if idx >= 0 { f.get(idx as usize) } else { cr(0.0) };
            }
            b[i - 1] = -f.get(m + i);
        }
        let q = solve_dense(&mut a, &mut b).ok()?;
        let mut den = UniSeries::zero(m);
        den.set(0, cr(1.0));
        for (j, qj) in q.iter().enumerate() {
            den.set(j + 1, *qj);
        }
        let mut num = UniSeries::zero(m);
        for k in 0..=m {
            let mut acc = cr(0.0);
            for j in 0..=k {
                acc += den.get(j) * f.get(k - j);
            }
            num.set(k, acc);
        }
        Some(PadeApproximant { num, den })
    }

    pub fn eval(&self, t: C) -> C {
        self.num.eval(t) / self.den.eval(t)
    }

    /// Evaluation that reports near-pole samples instead of returning junk.
    pub fn eval_checked(&self, t: C) -> Result<C, BorelError> {
        let d = self.den.eval(t);
        if d.norm() < 1e-8 {
            return Err(BorelError::ContinuationFailure(d.norm()));
        }
        Ok(self.num.eval(t) / d)
    }
}

/// Which Laplace kernel normalization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplaceVariant {
    /// `L_theta(g)(x) = int g(t) e^{-t/x} dt / x` (pairs with the standard Borel transform)
    Standard,
    /// `L~_theta(g)(x) = int g(t) e^{-t/x} dt` (pairs with the shifted transform, plus the constant term)
    Bis,
}

/// Quadrature controls for [`laplace_sum`].
#[derive(Debug, Clone, Copy)]
pub struct LaplaceParams {
    pub rtol: Scalar,
    /// Panels stop once their contribution falls below this fraction of the
    /// accumulated integral.
    pub decay_cutoff: Scalar,
    /// Growth rate bound of the integrand (`lambda` in `|g| <= M e^{lambda|t|}`).
    pub growth_bound: Scalar,
}

impl Default for LaplaceParams {
    fn default() -> Self {
        LaplaceParams { rtol: 1e-10, decay_cutoff: 1e-16, growth_bound: 0.0 }
    }
}

/// Directional Laplace transform of `g` (callable on the ray `e^{i theta} R+`)
/// evaluated at `x`, by adaptive panel quadrature along the ray.
///
/// Returns the value and an error estimate.
pub fn laplace_sum(
    g: &dyn Fn(C) -> C,
    theta: Scalar,
    x: C,
    variant: LaplaceVariant,
    params: &LaplaceParams,
) -> Result<(C, Scalar), BorelError> {
    let dir = C::from_polar(1.0, theta);
    let kappa = dir / x;
    if kappa.re <= params.growth_bound {
        return Err(BorelError::DivergentIntegrand(kappa.re, params.growth_bound));
    }
    // Integrand along arclength s: g(dir s) e^{-kappa s} * dir [/ x].
    let prefactor = match variant {
        LaplaceVariant::Standard => dir / x,
        LaplaceVariant::Bis => dir,
    };
    let f = |s: Scalar| g(dir * cr(s)) * (-kappa * cr(s)).exp() * prefactor;
    let scale = 1.0 / (kappa.re - params.growth_bound);
    let mut total = cr(0.0);
    let mut err_total = 0.0;
    let mut a = 0.0;
    let mut len = scale;
    for _ in 0..60 {
        let (v, e) = integrate_panel_adaptive(&f, a, a + len, params.rtol, 24);
        total += v;
        err_total += e;
        a += len;
        len *= 2.0;
        if v.norm() < params.decay_cutoff * total.norm().max(1e-300) && a > 4.0 * scale {
            break;
        }
    }
    Ok((total, err_total))
}

/// Borel-Laplace sum of a truncated series: Pade-continues the Borel
/// transform and Laplace-integrates it in the direction `theta`.
pub fn borel_sum_series(
    f: &UniSeries,
    theta: Scalar,
    x: C,
    params: &LaplaceParams,
) -> Result<(C, Scalar), BorelError> {
    let b = borel(f, BorelVariant::Bis);
    let pade = PadeApproximant::diagonal(&b.coeffs);
    // Probe for poles on the ray before integrating.
    let dir = C::from_polar(1.0, theta);
    for k in 0..200 {
        let t = dir * cr(0.05 * k as Scalar);
        pade.eval_checked(t)?;
    }
    let g = |t: C| pade.eval(t);
    let (v, e) = laplace_sum(&g, theta, x, LaplaceVariant::Bis, params)?;
    Ok((v + f.get(0), e))
}

/// Unique formal solution of the irregular model `x^2 a' + (1 + alpha x) k a = b`,
/// with `a(0) = b(0)/k`, via the triangular recursion
/// `k a_n = b_n - (n - 1 + alpha k) a_{n-1}`.
pub fn solve_irregular_model(k: C, alpha: C, b: &UniSeries) -> Result<UniSeries, BorelError> {
    if k.norm() == 0.0 {
        return Err(BorelError::ZeroEigenvalue);
    }
    let mut a = UniSeries::zero(b.trunc());
    a.set(0, b.get(0) / k);
    for n in 1..=b.trunc() {
        let prev = a.get(n - 1);
        a.set(n, (b.get(n) - (cr(n as Scalar - 1.0) + alpha * k) * prev) / k);
    }
    Ok(a)
}

/// Unique formal solution of the regular model `x a' + k a = b` for
/// `Re(k) > 0`: coefficientwise `a_j = b_j / (j + k)`.
pub fn solve_regular_model(k: C, b: &UniSeries) -> Result<UniSeries, BorelError> {
    if k.re <= 0.0 {
        return Err(BorelError::NonpositiveRealPart(k.re));
    }
    let mut a = UniSeries::zero(b.trunc());
    for j in 0..=b.trunc() {
        a.set(j, b.get(j) / (cr(j as Scalar) + k));
    }
    Ok(a)
}

/// Ray domain `Delta_{theta, delta, rho}`: the infinite sector of opening
/// `delta` bisected by `e^{i theta} R+`, union the disc of radius `rho`.
#[derive(Debug, Clone, Copy)]
pub struct RayDomain {
    pub theta: Scalar,
    pub delta: Scalar,
    pub rho: Scalar,
}

impl RayDomain {
    pub fn contains(&self, t: C) -> bool {
        if t.norm() <= self.rho {
            return true;
        }
        let mut d = (t.arg() - self.theta) % (2.0 * std::f64::consts::PI);
        if d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        if d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        d.abs() < self.delta / 2.0
    }

    /// Euclidean distance from a point to the domain (used as `d_k =
    /// dist(-k, Delta)` in the model-equation norm bound).
    pub fn distance(&self, p: C) -> Scalar {
        if self.contains(p) {
            return 0.0;
        }
        let to_disc = (p.norm() - self.rho).max(0.0);
        // Distance to the infinite sector: project onto the nearest boundary ray.
        let half = self.delta / 2.0;
        let mut rel = (p.arg() - self.theta) % (2.0 * std::f64::consts::PI);
        if rel > std::f64::consts::PI {
            rel -= 2.0 * std::f64::consts::PI;
        }
        if rel < -std::f64::consts::PI {
            rel += 2.0 * std::f64::consts::PI;
        }
        let ang = rel.abs() - half;
        let to_sector = if ang <= 0.0 {
            0.0
        } else if ang >= std::f64::consts::FRAC_PI_2 {
            p.norm()
        } else {
            p.norm() * ang.sin()
        };
        to_disc.min(to_sector)
    }

    /// Sample grid covering the domain up to radius `t_max`.
    pub fn grid(&self, t_max: Scalar, n_radial: usize, n_angular: usize) -> Vec<C> {
        let mut pts = Vec::new();
        for i in 0..n_angular {
            let frac = if n_angular == 1 { 0.0 } else { i as Scalar / (n_angular - 1) as Scalar - 0.5 };
            let ang = self.theta + frac * self.delta * 0.98;
            for j in 1..=n_radial {
                let r = t_max * (j as Scalar / n_radial as Scalar).powi(2);
                pts.push(C::from_polar(r, ang));
            }
        }
        // Disc part.
        for i in 0..n_angular {
            let ang = 2.0 * std::f64::consts::PI * i as Scalar / n_angular as Scalar;
            for j in 1..=(n_radial / 2).max(1) {
                let r = self.rho * j as Scalar / ((n_radial / 2).max(1)) as Scalar * 0.98;
                pts.push(C::from_polar(r, ang));
            }
        }
        pts
    }
}

/// Grid-estimated weighted norm of a series over a ray domain: the sup of
/// `|B(f)(t)| e^{-beta |t|}` (standard) or `|B~(f)(t)| (1 + beta^2 |t|^2)
/// e^{-beta |t|}` (bis), reported as a lower bound of the true sup.
pub fn borel_norm(
    f: &UniSeries,
    beta: Scalar,
    domain: &RayDomain,
    variant: BorelVariant,
) -> Result<Scalar, BorelError> {
    let b = borel(f, variant);
    let pade = PadeApproximant::diagonal(&b.coeffs);
    // Weight decays like e^{-beta t}; values beyond ~60/beta are negligible.
    let t_max = 60.0 / beta;
    let mut sup: Scalar = 0.0;
    for t in domain.grid(t_max, 48, 9) {
        let v = pade.eval_checked(t)?;
        let w = match variant {
            BorelVariant::Standard => (-beta * t.norm()).exp(),
            BorelVariant::Bis => (1.0 + beta * beta * t.norm_sqr()) * (-beta * t.norm()).exp(),
        };
        sup = sup.max(v.norm() * w);
    }
    Ok(sup)
}

/// The explicit admissible constant in the irregular-model norm bound.
pub fn model_bound_constant() -> Scalar {
    2.0 * (2.0f64).exp() / 5.0 + 5.0
}

/// Euler's divergent series `sum_{k>=0} (-1)^k k! x^{k+1}`, the formal
/// solution of `x^2 y' + y = x`.
pub fn euler_series(trunc: usize) -> UniSeries {
    let mut f = UniSeries::zero(trunc);
    for k in 0..trunc {
        f.set(k + 1, cr(if k % 2 == 0 { 1.0 } else { -1.0 } * factorial(k)));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_adaptive;
    use crate::series::cc;

    #[test]
    fn borel_cancels_factorials() {
        let mut f = UniSeries::zero(8);
        for k in 0..=8 {
            f.set(k, cr(factorial(k)));
        }
        let b = borel(&f, BorelVariant::Standard);
        for k in 0..=8 {
            assert!((b.coeffs.get(k) - cr(1.0)).norm() < 1e-12);
        }
        assert!(b.radius_estimate.unwrap() > 0.5);
    }

    #[test]
    fn borel_of_one() {
        let f = UniSeries::constant(cr(1.0), 6);
        let b = borel(&f, BorelVariant::Standard);
        assert_eq!(b.coeffs.get(0), cr(1.0));
        for k in 1..=6 {
            assert_eq!(b.coeffs.get(k), cr(0.0));
        }
    }

    #[test]
    fn euler_series_bis_transform_is_geometric() {
        let f = euler_series(10);
        let b = borel(&f, BorelVariant::Bis);
        for k in 0..=9 {
            let expect = cr(if k % 2 == 0 { 1.0 } else { -1.0 });
            assert!((b.coeffs.get(k) - expect).norm() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn borel_inverse_roundtrip() {
        let mut f = UniSeries::zero(7);
        for k in 0..=7 {
            f.set(k, cc(0.3 * k as f64 + 0.1, -0.2 * k as f64));
        }
        for variant in [BorelVariant::Standard, BorelVariant::Bis] {
            let back = inverse_borel(&borel(&f, variant));
            let lo = if variant == BorelVariant::Bis { 1 } else { 0 };
            for k in lo..=7 {
                assert!((back.get(k) - f.get(k)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn convolution_with_borel_of_x_integrates() {
        // g = B~(x) = 1; (1 * h)(t) = int_0^t h(s) ds.
        let x_series = {
            let mut u = UniSeries::zero(6);
            u.set(1, cr(1.0));
            u
        };
        let g = borel(&x_series, BorelVariant::Bis);
        let mut hf = UniSeries::zero(6);
        for k in 1..=6 {
            hf.set(k, cc(0.4 * k as f64, 0.1));
        }
        let h = borel(&hf, BorelVariant::Bis);
        let conv = convolve(&g, &h).unwrap();
        // Check at sample t against numeric integration of h.
        let tval = cr(0.7);
        let h_eval = |t: C| h.coeffs.eval(t);
        let numeric =
            integrate_panel_adaptive(&|s| h_eval(cr(s)), 0.0, tval.re, 1e-12, 20).0;
        assert!((conv.coeffs.eval(tval) - numeric).norm() < 1e-10);
    }

    #[test]
    fn convolution_is_product_dual_and_commutative() {
        let mut f = UniSeries::zero(8);
        let mut g = UniSeries::zero(8);
        for k in 1..=8 {
            f.set(k, cc(0.3 * k as f64, -0.1));
            g.set(k, cc(-0.2, 0.05 * k as f64));
        }
        let prod = f.mul(&g);
        let bf = borel(&f, BorelVariant::Bis);
        let bg = borel(&g, BorelVariant::Bis);
        let conv = convolve(&bf, &bg).unwrap();
        let expect = borel(&prod, BorelVariant::Bis);
        for k in 0..=7 {
            assert!((conv.coeffs.get(k) - expect.coeffs.get(k)).norm() < 1e-10, "k = {k}");
        }
        let conv_rev = convolve(&bg, &bf).unwrap();
        for k in 0..=7 {
            assert!((conv.coeffs.get(k) - conv_rev.coeffs.get(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn convolve_rejects_standard_variant() {
        let f = UniSeries::constant(cr(1.0), 4);
        let std = borel(&f, BorelVariant::Standard);
        let bis = borel(&f, BorelVariant::Bis);
        assert!(matches!(convolve(&std, &bis), Err(BorelError::VariantMismatch)));
    }

    #[test]
    fn laplace_of_one_is_one() {
        let g = |_t: C| cr(1.0);
        for theta in [0.0, 0.5, -1.0] {
            let x = C::from_polar(0.2, theta); // Re(e^{i theta}/x) = 5 > 0
            let (v, _) = laplace_sum(&g, theta, x, LaplaceVariant::Standard, &LaplaceParams::default())
                .unwrap();
            assert!((v - cr(1.0)).norm() < 1e-9, "theta = {theta}: {v}");
        }
    }

    #[test]
    fn laplace_of_t_is_x() {
        let g = |t: C| t;
        let x = cc(0.15, 0.04);
        let (v, _) =
            laplace_sum(&g, 0.0, x, LaplaceVariant::Standard, &LaplaceParams::default()).unwrap();
        assert!((v - x).norm() < 1e-9);
    }

    #[test]
    fn laplace_rejects_growth_violation() {
        let g = |_t: C| cr(1.0);
        let params = LaplaceParams { growth_bound: 20.0, ..Default::default() };
        let res = laplace_sum(&g, 0.0, cr(0.1), LaplaceVariant::Standard, &params);
        assert!(matches!(res, Err(BorelError::DivergentIntegrand(_, _))));
    }

    /// Bounded solution of the Euler equation `x^2 y' + y = x` by forward
    /// high-accuracy integration from a tiny base point (the flat solution is
    /// forward-attracting; contamination decays like `e^{1/x - 1/x0}`).
    fn euler_flat_reference(x_target: Scalar) -> C {
        let x0 = 1e-3;
        let y0 = cr(x0 - x0 * x0); // two-term asymptotics at the base point
        let f = |t: Scalar, y: &[C]| {
            let x = x0 + t;
            vec![(cr(x) - y[0]) / cr(x * x)]
        };
        let (_, y) = integrate_adaptive(f, vec![y0], x_target - x0, 1e-13, |_, _| {}, |_, _| false)
            .unwrap();
        y[0]
    }

    #[test]
    fn euler_borel_sum_matches_ode_oracle() {
        let f = euler_series(24);
        for x in [0.05, 0.1, 0.2] {
            let (v, _) = borel_sum_series(&f, 0.0, cr(x), &LaplaceParams::default()).unwrap();
            let reference = euler_flat_reference(x);
            assert!(
                (v - reference).norm() < 1e-8,
                "x = {x}: sum {v}, ode {reference}, diff {:.3e}",
                (v - reference).norm()
            );
        }
    }

    #[test]
    fn laplace_of_polynomial_borel_reproduces_polynomial() {
        // L_theta(B(p)) = p for polynomials, within quadrature tolerance.
        let mut p = UniSeries::zero(5);
        p.set(0, cr(0.7));
        p.set(1, cc(-0.3, 0.2));
        p.set(3, cr(0.05));
        let b = borel(&p, BorelVariant::Standard);
        let g = |t: C| b.coeffs.eval(t);
        let x = cc(0.12, -0.03);
        let (v, _) =
            laplace_sum(&g, 0.0, x, LaplaceVariant::Standard, &LaplaceParams::default()).unwrap();
        assert!((v - p.eval(x)).norm() < 1e-12);
    }

    #[test]
    fn irregular_model_trivial_and_unrolled() {
        let trunc = 10;
        // b = 0 -> a = 0.
        let a0 = solve_irregular_model(cr(1.5), cr(0.3), &UniSeries::zero(trunc)).unwrap();
        assert!(a0.is_zero_within(0.0));

        // b = 1, alpha = 0, k = 1: unrolling k a_n = b_n - (n-1) a_{n-1}
        // gives a_0 = 1 and a_n = 0 for n >= 1 (a_1 = -0*a_0 = 0).
        let b = UniSeries::constant(cr(1.0), trunc);
        let a = solve_irregular_model(cr(1.0), cr(0.0), &b).unwrap();
        assert_eq!(a.get(0), cr(1.0));
        for n in 1..=trunc {
            assert_eq!(a.get(n), cr(0.0), "n = {n}");
        }

        // b = x, alpha = 0, k = 1 produces the Euler series.
        let mut bx = UniSeries::zero(trunc);
        bx.set(1, cr(1.0));
        let a = solve_irregular_model(cr(1.0), cr(0.0), &bx).unwrap();
        assert!(a.max_diff(&euler_series(trunc)) < 1e-12);
    }

    #[test]
    fn irregular_model_residual_vanishes() {
        let trunc = 12;
        let mut b = UniSeries::zero(trunc);
        for n in 0..=trunc {
            b.set(n, cc(0.3 * n as f64 - 0.5, 0.2));
        }
        let k = cc(1.2, -0.4);
        let alpha = cc(0.25, 0.1);
        let a = solve_irregular_model(k, alpha, &b).unwrap();
        // x^2 a' + (1 + alpha x) k a - b must vanish through degree trunc;
        // the coefficients grow factorially, so compare relative to scale.
        for n in 0..=trunc {
            let xsq_da = if n >= 1 { cr(n as f64 - 1.0) * a.get(n - 1) } else { cr(0.0) };
            let lin = k * a.get(n) + if n >= 1 { alpha * k * a.get(n - 1) } else { cr(0.0) };
            let scale = 1.0 + xsq_da.norm().max(lin.norm());
            assert!(
                (xsq_da + lin - b.get(n)).norm() / scale < 1e-13,
                "residual at degree {n}"
            );
        }
    }

    #[test]
    fn irregular_model_rejects_zero_eigenvalue() {
        let b = UniSeries::constant(cr(1.0), 4);
        assert!(matches!(
            solve_irregular_model(cr(0.0), cr(0.0), &b),
            Err(BorelError::ZeroEigenvalue)
        ));
    }

    #[test]
    fn regular_model_examples() {
        let b = UniSeries::constant(cr(1.0), 6);
        let a = solve_regular_model(cr(2.0), &b).unwrap();
        assert!((a.get(0) - cr(0.5)).norm() < 1e-14);

        let mut bx = UniSeries::zero(6);
        bx.set(1, cr(1.0));
        let a = solve_regular_model(cr(1.0), &bx).unwrap();
        assert!((a.get(1) - cr(0.5)).norm() < 1e-14);
        assert!(matches!(
            solve_regular_model(cr(-1.0), &b),
            Err(BorelError::NonpositiveRealPart(_))
        ));
    }

    #[test]
    fn regular_model_preserves_gevrey_growth() {
        // Euler-type input: b_n = n! stays n!-bounded with bounded ratio.
        let trunc = 14;
        let mut b = UniSeries::zero(trunc);
        for n in 0..=trunc {
            b.set(n, cr(factorial(n)));
        }
        let a = solve_regular_model(cr(1.0), &b).unwrap();
        for n in 1..=trunc {
            let ratio = a.get(n).norm() / factorial(n);
            assert!(ratio <= 1.0 + 1e-12, "n = {n}, ratio = {ratio}");
        }
    }

    #[test]
    fn borel_norm_of_zero() {
        let domain = RayDomain { theta: 0.0, delta: 0.8, rho: 0.4 };
        let z = UniSeries::zero(10);
        assert_eq!(borel_norm(&z, 6.0, &domain, BorelVariant::Standard).unwrap(), 0.0);
    }

    #[test]
    fn bis_norm_submultiplicative_for_large_beta() {
        // beta >= 4 pi makes the bis norm sub-multiplicative.
        let domain = RayDomain { theta: 0.0, delta: 0.6, rho: 0.4 };
        let beta = 4.0 * std::f64::consts::PI + 1.0;
        let mk = |seed: u64| {
            let mut state = seed;
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            let mut f = UniSeries::zero(12);
            for k in 1..=12usize {
                // Gevrey-1 style growth.
                f.set(k, cc(next(), next()) * cr(factorial(k - 1)));
            }
            f
        };
        for seed in [3u64, 17, 99] {
            let f = mk(seed);
            let g = mk(seed.wrapping_mul(31).wrapping_add(7));
            let nf = borel_norm(&f, beta, &domain, BorelVariant::Bis).unwrap();
            let ng = borel_norm(&g, beta, &domain, BorelVariant::Bis).unwrap();
            let nfg = borel_norm(&f.mul(&g), beta, &domain, BorelVariant::Bis).unwrap();
            // Grid estimates are lower bounds; allow tiny numerical headroom.
            assert!(nfg <= nf * ng * (1.0 + 1e-6), "seed {seed}: {nfg} > {nf} * {ng}");
        }
    }

    #[test]
    fn irregular_model_norm_bound_on_grid() {
        // ||a||_bis <= beta / (beta d_k - C |alpha k|) ||b||_bis for
        // parameter triples satisfying beta d_k > C |alpha k|.
        let c_const = model_bound_constant();
        let domain = RayDomain { theta: 0.0, delta: std::f64::consts::PI / 3.0, rho: 0.5 };
        let b = euler_series(24);
        let triples = [
            (cr(1.0), cr(0.01), 16.0),
            (cr(2.0), cr(0.02), 14.0),
            (cc(1.0, 0.4), cc(0.01, 0.005), 18.0),
        ];
        for (k, alpha, beta) in triples {
            let d_k = domain.distance(-k);
            assert!(beta * d_k > c_const * (alpha * k).norm(), "triple not admissible");
            let a = solve_irregular_model(k, alpha, &b).unwrap();
            let na = borel_norm(&a, beta, &domain, BorelVariant::Bis).unwrap();
            let nb = borel_norm(&b, beta, &domain, BorelVariant::Bis).unwrap();
            let bound = beta / (beta * d_k - c_const * (alpha * k).norm()) * nb;
            assert!(na <= bound * (1.0 + 1e-6), "k={k}: {na} > {bound}");
        }
    }
}
