//! Small numeric kernels shared across modules: dense complex linear solves,
//! an adaptive embedded Runge-Kutta integrator over complex state vectors,
//! and adaptive Gauss-Legendre quadrature panels.

use crate::series::{cr, Scalar, C};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("singular linear system (pivot {0:.3e})")]
    SingularSystem(Scalar),
    #[error("step size underflow at t = {0:.6e}")]
    StepSizeUnderflow(Scalar),
}

/// Solves `A x = b` in place by partial-pivoted Gaussian elimination.
pub fn solve_dense(a: &mut [Vec<C>], b: &mut [C]) -> Result<Vec<C>, NumericsError> {
    let n = b.len();
    for col in 0..n {
        let (mut pivot, mut pnorm) = (col, a[col][col].norm());
        for row in col + 1..n {
            let v = a[row][col].norm();
            if v > pnorm {
                pivot = row;
                pnorm = v;
            }
        }
        if pnorm < 1e-14 {
            return Err(NumericsError::SingularSystem(pnorm));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == cr(0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let bv = b[col];
            b[row] -= factor * bv;
        }
    }
    let mut x = vec![cr(0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Dormand-Prince 5(4) coefficients.
const DP_A: [[Scalar; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [Scalar; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [Scalar; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) over a complex state vector with real time.
///
/// Calls `observer(t, state)` after every accepted step (and once at t = 0).
/// The `stop` predicate ends integration early when it returns true.
pub fn integrate_adaptive<F, O, S>(
    f: F,
    mut state: Vec<C>,
    t_end: Scalar,
    rtol: Scalar,
    mut observer: O,
    mut stop: S,
) -> Result<(Scalar, Vec<C>), NumericsError>
where
    F: Fn(Scalar, &[C]) -> Vec<C>,
    O: FnMut(Scalar, &[C]),
    S: FnMut(Scalar, &[C]) -> bool,
{
    let mut t = 0.0;
    let mut h: Scalar = 1e-3;
    let atol = 1e-14;
    observer(t, &state);
    let mut k0 = f(t, &state);
    while t < t_end {
        if stop(t, &state) {
            break;
        }
        h = h.min(t_end - t);
        if h < 1e-300 {
            return Err(NumericsError::StepSizeUnderflow(t));
        }
        let mut ks: Vec<Vec<C>> = Vec::with_capacity(7);
        ks.push(k0.clone());
        for stage in 0..6 {
            let mut ytmp = state.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    for (yv, kv) in ytmp.iter_mut().zip(kj) {
                        *yv += cr(h * a) * kv;
                    }
                }
            }
            let c_nodes = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
            ks.push(f(t + c_nodes[stage] * h, &ytmp));
        }
        let mut y5 = state.clone();
        let mut err: Scalar = 0.0;
        let mut scale_max: Scalar = atol;
        for i in 0..state.len() {
            let mut acc5 = cr(0.0);
            let mut acc4 = cr(0.0);
            for (j, kj) in ks.iter().enumerate() {
                acc5 += cr(DP_B5[j]) * kj[i];
                acc4 += cr(DP_B4[j]) * kj[i];
            }
            y5[i] += cr(h) * acc5;
            let sc = atol + rtol * state[i].norm().max(y5[i].norm());
            err = err.max((cr(h) * (acc5 - acc4)).norm() / sc);
            scale_max = scale_max.max(sc);
        }
        if err <= 1.0 {
            t += h;
            state = y5;
            observer(t, &state);
            k0 = ks.pop().unwrap(); // FSAL
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok((t, state))
}

const GL15_NODES: [Scalar; 15] = [
    -0.9879925180204854,
    -0.9372733924007060,
    -0.8482065834104272,
    -0.7244177313601701,
    -0.5709721726085388,
    -0.3941513470775634,
    -0.2011940939974345,
    0.0,
    0.2011940939974345,
    0.3941513470775634,
    0.5709721726085388,
    0.7244177313601701,
    0.8482065834104272,
    0.9372733924007060,
    0.9879925180204854,
];
const GL15_WEIGHTS: [Scalar; 15] = [
    0.0307532419961173,
    0.0703660474881081,
    0.1071592204671719,
    0.1395706779261543,
    0.1662692058169939,
    0.1861610000155622,
    0.1984314853271116,
    0.2025782419255613,
    0.1984314853271116,
    0.1861610000155622,
    0.1662692058169939,
    0.1395706779261543,
    0.1071592204671719,
    0.0703660474881081,
    0.0307532419961173,
];
const GL7_NODES: [Scalar; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL7_WEIGHTS: [Scalar; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

fn gauss_panel<F: Fn(Scalar) -> C>(f: &F, a: Scalar, b: Scalar) -> (C, Scalar) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut v15 = cr(0.0);
    for (x, w) in GL15_NODES.iter().zip(GL15_WEIGHTS) {
        v15 += cr(w) * f(mid + half * x);
    }
    let mut v7 = cr(0.0);
    for (x, w) in GL7_NODES.iter().zip(GL7_WEIGHTS) {
        v7 += cr(w) * f(mid + half * x);
    }
    (v15 * cr(half), (v15 - v7).norm() * half.abs())
}

/// Adaptive quadrature of `f` over `[a, b]` by panel bisection, comparing
/// embedded 7- and 15-point Gauss rules. Returns (value, error estimate).
pub fn integrate_panel_adaptive<F: Fn(Scalar) -> C>(
    f: &F,
    a: Scalar,
    b: Scalar,
    rtol: Scalar,
    max_depth: u32,
) -> (C, Scalar) {
    fn recurse<F: Fn(Scalar) -> C>(
        f: &F,
        a: Scalar,
        b: Scalar,
        tol_abs: Scalar,
        depth: u32,
    ) -> (C, Scalar) {
        let (v, e) = gauss_panel(f, a, b);
        if e <= tol_abs || depth == 0 {
            return (v, e);
        }
        let mid = 0.5 * (a + b);
        let (v1, e1) = recurse(f, a, mid, tol_abs * 0.5, depth - 1);
        let (v2, e2) = recurse(f, mid, b, tol_abs * 0.5, depth - 1);
        (v1 + v2, e1 + e2)
    }
    let (coarse, _) = gauss_panel(f, a, b);
    let tol_abs = rtol * coarse.norm().max(1e-30);
    recurse(f, a, b, tol_abs, max_depth)
}
