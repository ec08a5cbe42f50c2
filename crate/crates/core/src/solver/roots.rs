//! Bracketed scalar root finding for monotone residuals.
//!
//! Both methods keep a sign-changing bracket for the whole run and return
//! it, so callers can pick the endpoint on the feasible side of a budget.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootMethod {
    /// Plain interval halving.
    Bisection,
    /// Brent–Dekker: inverse quadratic interpolation and secant steps with a
    /// bisection fallback. Same bracket guarantee, far fewer evaluations.
    #[default]
    Brent,
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub method: RootMethod,
    /// Stop once the bracket is narrower than `x_rel_tol·max(|x|, x_abs_floor)`.
    pub x_rel_tol: f64,
    pub x_abs_floor: f64,
    /// Stop once an iterate lands in `[-f_tol, 0]`. One-sided so that the
    /// nonpositive endpoint of the returned bracket is always the close one.
    pub f_tol: f64,
    pub max_iter: usize,
}

/// A sign-changing bracket `f(a)·f(b) ≤ 0`.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub a: f64,
    pub fa: f64,
    pub b: f64,
    pub fb: f64,
    pub iterations: usize,
}

impl Bracket {
    /// Endpoint with the smaller residual magnitude.
    pub fn best(&self) -> f64 {
        if self.fa.abs() <= self.fb.abs() {
            self.a
        } else {
            self.b
        }
    }

    /// Endpoint whose residual is `≤ 0`.
    pub fn nonpositive_side(&self) -> f64 {
        if self.fa <= 0.0 {
            self.a
        } else {
            self.b
        }
    }

    /// Endpoint whose residual is `≥ 0`.
    pub fn nonnegative_side(&self) -> f64 {
        if self.fa >= 0.0 {
            self.a
        } else {
            self.b
        }
    }
}

/// Narrows `[a, b]` around a root of `f`. The caller supplies `f(a)` and
/// `f(b)`, which must not share a strict sign.
pub fn find_root<F>(mut f: F, a: f64, fa: f64, b: f64, fb: f64, opts: &RootOptions) -> Bracket
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(fa * fb <= 0.0, "root not bracketed: f({a})={fa}, f({b})={fb}");
    match opts.method {
        RootMethod::Bisection => bisect(&mut f, a, fa, b, fb, opts),
        RootMethod::Brent => brent(&mut f, a, fa, b, fb, opts),
    }
}

/// Narrows the bracket `[lo, hi]` to one around `x0` by stepping outward
/// from it with geometrically growing steps, starting at `step·|x0|`. Falls
/// back to the full bracket when `x0` is not strictly inside. Cheap when the
/// root has moved little since `x0` was found.
pub fn bracket_near<F>(mut f: F, x0: f64, lo: f64, f_lo: f64, hi: f64, f_hi: f64, step: f64) -> Bracket
where
    F: FnMut(f64) -> f64,
{
    let full = Bracket {
        a: lo,
        fa: f_lo,
        b: hi,
        fb: f_hi,
        iterations: 0,
    };
    if !(x0 > lo && x0 < hi) {
        return full;
    }
    let f0 = f(x0);
    let mut iterations = 1;
    if f0 == 0.0 {
        return Bracket {
            a: x0,
            fa: f0,
            b: x0,
            fb: f0,
            iterations,
        };
    }
    if f0.is_nan() {
        return full;
    }
    // root lies on the side whose endpoint has the opposite sign
    let upward = (f0 > 0.0) == (f_lo > 0.0);
    let (mut x, mut fx) = (x0, f0);
    let mut d = step * x0.abs();
    loop {
        let next = if upward { (x + d).min(hi) } else { (x - d).max(lo) };
        let f_next = if next == hi {
            f_hi
        } else if next == lo {
            f_lo
        } else {
            iterations += 1;
            f(next)
        };
        if f_next.is_nan() {
            return full;
        }
        if f_next == 0.0 || (f_next > 0.0) != (fx > 0.0) || next == hi || next == lo {
            let (a, fa, b, fb) = if upward { (x, fx, next, f_next) } else { (next, f_next, x, fx) };
            return Bracket { a, fa, b, fb, iterations };
        }
        (x, fx) = (next, f_next);
        d *= 8.0;
    }
}

fn within_f_tol(f: f64, opts: &RootOptions) -> bool {
    f <= 0.0 && f >= -opts.f_tol
}

fn width_tol(x: f64, opts: &RootOptions) -> f64 {
    opts.x_rel_tol * x.abs().max(opts.x_abs_floor)
}

fn bisect<F: FnMut(f64) -> f64>(
    f: &mut F,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    opts: &RootOptions,
) -> Bracket {
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if within_f_tol(fa, opts) || within_f_tol(fb, opts) || fa == 0.0 || fb == 0.0 {
            break;
        }
        if (b - a).abs() <= width_tol(a.abs().max(b.abs()), opts) {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        iterations += 1;
        if (fm <= 0.0) == (fa <= 0.0) && fm != 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Bracket {
        a,
        fa,
        b,
        fb,
        iterations,
    }
}

fn brent<F: FnMut(f64) -> f64>(
    f: &mut F,
    a0: f64,
    fa0: f64,
    b0: f64,
    fb0: f64,
    opts: &RootOptions,
) -> Bracket {
    // b: current best, c: contrapoint with f(b)·f(c) ≤ 0, a: previous b.
    let (mut a, mut fa, mut b, mut fb) = (a0, fa0, b0, fb0);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    let mut iterations = 0;

    loop {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * width_tol(b, opts);
        let m = 0.5 * (c - b);
        if fb == 0.0 || within_f_tol(fb, opts) || m.abs() <= tol || iterations >= opts.max_iter {
            return Bracket {
                a: b,
                fa: fb,
                b: c,
                fb: fc,
                iterations,
            };
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(method: RootMethod) -> RootOptions {
        RootOptions {
            method,
            x_rel_tol: 1e-12,
            x_abs_floor: 1e-300,
            f_tol: 0.0,
            max_iter: 200,
        }
    }

    #[test]
    fn both_methods_find_cube_root() {
        let f = |x: f64| x * x * x - 2.0;
        for m in [RootMethod::Bisection, RootMethod::Brent] {
            let br = find_root(f, 0.0, f(0.0), 2.0, f(2.0), &opts(m));
            assert!((br.best() - 2f64.cbrt()).abs() < 1e-11, "{m:?}");
            assert!(br.fa * br.fb <= 0.0);
        }
    }

    #[test]
    fn brent_uses_fewer_evaluations_than_bisection() {
        let f = |x: f64| (x - 0.3).exp() - 1.0;
        let bi = find_root(f, -5.0, f(-5.0), 5.0, f(5.0), &opts(RootMethod::Bisection));
        let br = find_root(f, -5.0, f(-5.0), 5.0, f(5.0), &opts(RootMethod::Brent));
        assert!(br.iterations < bi.iterations / 2, "{} vs {}", br.iterations, bi.iterations);
        assert!((br.best() - 0.3).abs() < 1e-11);
    }

    #[test]
    fn sides_respect_sign() {
        let f = |x: f64| 1.0 - x; // decreasing
        for m in [RootMethod::Bisection, RootMethod::Brent] {
            let mut o = opts(m);
            o.x_rel_tol = 1e-3;
            let br = find_root(f, 0.0, 1.0, 3.0, -2.0, &o);
            assert!(f(br.nonpositive_side()) <= 0.0);
            assert!(f(br.nonnegative_side()) >= 0.0);
        }
    }

    #[test]
    fn flat_discontinuous_residual_still_brackets() {
        let f = |x: f64| if x < 0.7 { 1.0 } else { -1.0 };
        let br = find_root(f, 0.0, 1.0, 1.0, -1.0, &opts(RootMethod::Brent));
        assert!((br.a - 0.7).abs() < 1e-10 && (br.b - 0.7).abs() < 1e-10);
    }
}
