//! Projected Levenberg-Marquardt minimization over `{c ∈ [lo, hi], ‖(φ, ψ)‖₁ ≤ r}`.
//!
//! The curvature model is the exact Hessian where it is positive definite and the
//! Gauss-Newton matrix otherwise. Each trial point is the projection of the damped step onto the
//! feasible set; large damping turns the step into a short projected gradient step.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Feasible {
    pub c_lo: f64,
    pub c_hi: f64,
    pub radius: f64,
}

impl Feasible {
    pub fn project(&self, x: &mut [f64]) {
        x[0] = x[0].clamp(self.c_lo, self.c_hi);
        project_l1_ball(&mut x[1..], self.radius);
    }

    /// Whether `x` touches the box or the ℓ₁ sphere.
    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        let l1: f64 = x[1..].iter().map(|v| v.abs()).sum();
        x[0] - self.c_lo < tol || self.c_hi - x[0] < tol || self.radius - l1 < tol
    }
}

/// Euclidean projection onto `{v : ‖v‖₁ ≤ r}` by sorting.
pub(crate) fn project_l1_ball(v: &mut [f64], r: f64) {
    let l1: f64 = v.iter().map(|a| a.abs()).sum();
    if l1 <= r {
        return;
    }
    let mut u: Vec<f64> = v.iter().map(|a| a.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let candidate = (cum - r) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            shift = candidate;
        }
    }
    for a in v.iter_mut() {
        *a = a.signum() * (a.abs() - shift).max(0.0);
    }
}

/// Objective with gradient and a positive semidefinite curvature model.
pub(crate) trait Objective {
    /// Value only.
    fn value(&mut self, x: &[f64]) -> f64;
    /// Value, gradient `g`, Hessian `h` and a positive semidefinite model `h_psd`
    /// (both row-major `d × d`).
    fn full(&mut self, x: &[f64], g: &mut [f64], h: &mut [f64], h_psd: &mut [f64]) -> f64;
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
    pub reason: String,
}

fn projected_gradient_norm(x: &[f64], g: &[f64], set: &Feasible) -> f64 {
    let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    set.project(&mut y);
    y.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn cholesky(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = t / l;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], d: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[i * d + k] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            y[i] -= l[k * d + i] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    y
}

/// Minimizer of `gᵀδ + ½δᵀ(H + μ diag(H) + μεI)δ` over the coordinates in `free`,
/// optionally subject to `aᵀδ = 0`. `None` if the damped matrix is not positive definite.
fn damped_step(h: &[f64], g: &[f64], mu: f64, free: &[usize], a: Option<&[f64]>) -> Option<Vec<f64>> {
    let d = g.len();
    let m = free.len();
    let mut step = vec![0.0; d];
    if m == 0 {
        return Some(step);
    }
    let mut sub = vec![0.0; m * m];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            sub[r * m + c] = h[i * d + j];
        }
        sub[r * m + r] += mu * (h[i * d + i] + 1e-12);
    }
    if !cholesky(&mut sub, m) {
        return None;
    }
    let neg_g: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
    let mut y = cholesky_solve(&sub, m, &neg_g);
    if let Some(a) = a {
        let af: Vec<f64> = free.iter().map(|&i| a[i]).collect();
        let z = cholesky_solve(&sub, m, &af);
        let az: f64 = af.iter().zip(&z).map(|(p, q)| p * q).sum();
        if az > 0.0 {
            let ay: f64 = af.iter().zip(&y).map(|(p, q)| p * q).sum();
            for (yk, zk) in y.iter_mut().zip(&z) {
                *yk -= ay / az * zk;
            }
        }
    }
    for (r, &i) in free.iter().enumerate() {
        step[i] = y[r];
    }
    Some(step)
}

/// Coordinates and sign vector of the face of the feasible set containing `x`
/// on which the negative gradient does not point outward; `None` for an interior point.
fn active_face(x: &[f64], g: &[f64], set: &Feasible) -> Option<(Vec<usize>, Option<Vec<f64>>)> {
    let d = x.len();
    let l1: f64 = x[1..].iter().map(|v| v.abs()).sum();
    let on_sphere = set.radius - l1 <= 1e-12 * set.radius.max(1.0);
    let c_blocked = (x[0] <= set.c_lo && g[0] > 0.0) || (x[0] >= set.c_hi && g[0] < 0.0);
    if !on_sphere && !c_blocked {
        return None;
    }
    let mut free = Vec::with_capacity(d);
    if !c_blocked {
        free.push(0);
    }
    let mut a = None;
    if on_sphere {
        let mut s = vec![0.0; d];
        for k in 1..d {
            if x[k] != 0.0 {
                s[k] = x[k].signum();
                free.push(k);
            }
        }
        a = Some(s);
    } else {
        free.extend(1..d);
    }
    Some((free, a))
}

/// The Hessian when it is positive definite, else the semidefinite model.
fn curvature_model<'a>(h: &'a [f64], h_psd: &'a [f64]) -> &'a [f64] {
    let d = (h.len() as f64).sqrt() as usize;
    let mut a = h.to_vec();
    if cholesky(&mut a, d) {
        h
    } else {
        h_psd
    }
}

pub(crate) fn minimize<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    set: &Feasible,
    grad_tol: f64,
    max_iter: usize,
) -> Outcome {
    let d = x0.len();
    let mut x = x0.to_vec();
    set.project(&mut x);
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut h_psd = vec![0.0; d * d];
    let mut fx = obj.full(&x, &mut g, &mut h, &mut h_psd);
    let mut model = curvature_model(&h, &h_psd);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Outcome {
            x,
            f: fx,
            iterations: 0,
            converged: false,
            pg_norm: f64::INFINITY,
            reason: "non-finite objective at the start".into(),
        };
    }
    let mut damping = 1e-3;
    let mut pg = projected_gradient_norm(&x, &g, set);
    let mut stall = 0;
    for it in 0..max_iter {
        if pg < grad_tol {
            return Outcome { x, f: fx, iterations: it, converged: true, pg_norm: pg, reason: "projected gradient".into() };
        }
        let all: Vec<usize> = (0..d).collect();
        let face = active_face(&x, &g, set);
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        while damping < 1e20 {
            let mut steps = Vec::with_capacity(2);
            if let Some((free, a)) = &face {
                steps.extend(damped_step(model, &g, damping, free, a.as_deref()));
            }
            steps.extend(damped_step(model, &g, damping, &all, None));
            for step in steps {
                let mut xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                set.project(&mut xn);
                if xn == x {
                    continue;
                }
                let fn_ = obj.value(&xn);
                if fn_.is_finite() && fn_ < accepted.as_ref().map_or(fx, |a| a.1) {
                    accepted = Some((xn, fn_));
                }
            }
            if accepted.is_some() {
                break;
            }
            damping *= 10.0;
        }
        let Some((xn, fn_)) = accepted else {
            // no decrease at any damping: stationary up to rounding
            return Outcome {
                converged: pg < grad_tol.max(1e-6),
                x,
                f: fx,
                iterations: it,
                pg_norm: pg,
                reason: "no descent at maximal damping".into(),
            };
        };
        damping = (damping * 0.1).max(1e-12);
        let rel = (fx - fn_) / fx.abs().max(1e-300);
        x = xn;
        fx = obj.full(&x, &mut g, &mut h, &mut h_psd);
        model = curvature_model(&h, &h_psd);
        pg = projected_gradient_norm(&x, &g, set);
        if rel < 1e-15 {
            stall += 1;
            if stall >= 3 {
                return Outcome {
                    converged: pg < grad_tol.max(1e-6),
                    x,
                    f: fx,
                    iterations: it + 1,
                    pg_norm: pg,
                    reason: "relative change".into(),
                };
            }
        } else {
            stall = 0;
        }
    }
    Outcome {
        converged: pg < grad_tol,
        x,
        f: fx,
        iterations: max_iter,
        pg_norm: pg,
        reason: "iteration limit".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ rᵢ(x)²` with Jacobian supplied by the closure.
    struct Lsq<F: Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>)>(F);

    impl<F: Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>)> Objective for Lsq<F> {
        fn value(&mut self, x: &[f64]) -> f64 {
            (self.0)(x).0.iter().map(|r| r * r).sum()
        }
        fn full(&mut self, x: &[f64], g: &mut [f64], h: &mut [f64], h_psd: &mut [f64]) -> f64 {
            let (r, j) = (self.0)(x);
            let d = x.len();
            g.fill(0.0);
            h.fill(0.0);
            for (ri, ji) in r.iter().zip(&j) {
                for a in 0..d {
                    g[a] += 2.0 * ri * ji[a];
                    for b in 0..d {
                        h[a * d + b] += 2.0 * ji[a] * ji[b];
                    }
                }
            }
            h_psd.copy_from_slice(h);
            r.iter().map(|r| r * r).sum()
        }
    }

    #[test]
    fn l1_projection() {
        let mut v = vec![0.8, -0.6];
        project_l1_ball(&mut v, 1.0);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] + 0.4).abs() < 1e-15);
        let mut v = vec![2.0, 0.1, -0.05];
        project_l1_ball(&mut v, 0.5);
        assert_eq!(v, vec![0.5, 0.0, 0.0]);
        let mut v = vec![0.1, 0.2];
        project_l1_ball(&mut v, 1.0);
        assert_eq!(v, vec![0.1, 0.2]);
    }

    #[test]
    fn quadratic_interior_and_boundary() {
        let set = Feasible { c_lo: -5.0, c_hi: 5.0, radius: 0.999 };
        let target = [1.5, 0.3, -0.2];
        let mut f = Lsq(|x: &[f64]| {
            let r = (0..3).map(|k| ((k + 1) as f64).sqrt() * (x[k] - target[k])).collect();
            let j = (0..3)
                .map(|k| (0..3).map(|l| if l == k { ((k + 1) as f64).sqrt() } else { 0.0 }).collect())
                .collect();
            (r, j)
        });
        let out = minimize(&mut f, &[0.0, 0.0, 0.0], &set, 1e-10, 500);
        assert!(out.converged);
        for (got, want) in out.x.iter().zip(&target) {
            assert!((got - want).abs() < 1e-8);
        }
        let far = [9.0, 2.0, 0.0];
        let mut f = Lsq(|x: &[f64]| {
            let r = (0..3).map(|k| x[k] - far[k]).collect();
            let j = (0..3).map(|k| (0..3).map(|l| if l == k { 1.0 } else { 0.0 }).collect()).collect();
            (r, j)
        });
        let out = minimize(&mut f, &[0.0, 0.0, 0.0], &set, 1e-10, 500);
        assert!((out.x[0] - 5.0).abs() < 1e-12);
        assert!((out.x[1] - 0.999).abs() < 1e-8 && out.x[2].abs() < 1e-8, "{out:?}");
        assert!(set.on_boundary(&out.x, 1e-6));
    }

    #[test]
    fn curved_valley() {
        let set = Feasible { c_lo: -10.0, c_hi: 10.0, radius: 0.999 };
        let s = 20f64.sqrt();
        let mut f = Lsq(|x: &[f64]| {
            let r = vec![x[0] - 0.5, s * (x[1] - 0.5 * x[0] * x[0])];
            let j = vec![vec![1.0, 0.0], vec![-s * x[0], s]];
            (r, j)
        });
        let out = minimize(&mut f, &[-3.0, 0.0], &set, 1e-9, 500);
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 0.5).abs() < 1e-6 && (out.x[1] - 0.125).abs() < 1e-6);
    }

    #[test]
    fn correlated_optimum_on_sphere() {
        let set = Feasible { c_lo: -10.0, c_hi: 10.0, radius: 0.999 };
        // unconstrained minimizer (c, a, b) = (1, -0.6, -0.6) lies outside the ball
        let mut f = Lsq(|x: &[f64]| {
            let r = vec![x[0] - 1.0, 10.0 * (x[1] + x[2] + 1.2), 0.1 * (x[1] - x[2]) + 0.3 * (x[0] - 1.0)];
            let j = vec![vec![1.0, 0.0, 0.0], vec![0.0, 10.0, 10.0], vec![0.3, 0.1, -0.1]];
            (r, j)
        });
        let out = minimize(&mut f, &[0.0, 0.2, 0.1], &set, 1e-10, 200);
        assert!(out.converged, "{out:?}");
        assert!(out.iterations < 50, "{out:?}");
        let l1 = out.x[1].abs() + out.x[2].abs();
        assert!((l1 - 0.999).abs() < 1e-9);
    }
}
