use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::LinkFunction;
use crate::process::{ModelOrder, ThetaParams};

/// Truncated mean path `μ̃_t(θ)` and its pre-link argument `ξ̃_t`, `t = 1..n`.
///
/// Observations and means before the sample are taken as zero.
pub fn mu_tilde_path(theta: &ThetaParams, link: &LinkFunction, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut mu = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    for t in 0..n {
        let mut s = theta.c;
        for (i, phi) in theta.phi.iter().enumerate() {
            if t > i {
                s += phi * x[t - 1 - i];
            }
        }
        for (j, psi) in theta.psi.iter().enumerate() {
            if t > j {
                s += psi * mu[t - 1 - j];
            }
        }
        xi.push(s);
        mu.push(link.eval(s));
    }
    (mu, xi)
}

/// Mean path together with the Jacobian `∂μ̃_t/∂θ` stored row-major (`n × dim θ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPath {
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub dim: usize,
    pub grad: Vec<f64>,
}

impl GradientPath {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.grad[t * self.dim..(t + 1) * self.dim]
    }
}

/// Exact derivative of the truncated recursion; requires a smooth link.
pub fn mu_gradient_path(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
) -> Result<GradientPath> {
    if !link.is_differentiable() {
        return Err(Error::NotApplicable(
            "analytic gradient requires a differentiable link (laplace or softplus)".into(),
        ));
    }
    Ok(gradient_path_unchecked(theta, link, x))
}

/// Same as [`mu_gradient_path`] but uses the almost-everywhere derivative for ReLU.
pub(crate) fn gradient_path_unchecked(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
) -> GradientPath {
    let mut ws = Workspace::new(theta.order(), x.len());
    ws.run(&theta.to_vec(), link, x, true);
    GradientPath { mu: ws.mu, xi: ws.xi, dim: ws.dim, grad: ws.grad }
}

/// `(1/n) Σ W_t (X_t − μ̃_t(θ))²`.
pub fn wls_objective(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
    weights: &[f64],
) -> Result<f64> {
    if weights.len() != x.len() {
        return Err(Error::Domain(format!(
            "{} weights for {} observations",
            weights.len(),
            x.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Domain(format!("weights must be positive, found {w}")));
    }
    if x.is_empty() {
        return Err(Error::Domain("objective of an empty series".into()));
    }
    let (mu, _) = mu_tilde_path(theta, link, x);
    Ok(x.iter()
        .zip(&mu)
        .zip(weights)
        .map(|((x, m), w)| w * (x - m) * (x - m))
        .sum::<f64>()
        / x.len() as f64)
}

/// Reusable buffers for repeated objective/gradient evaluations.
pub(crate) struct Workspace {
    p1: usize,
    p2: usize,
    pub dim: usize,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub grad: Vec<f64>,
    second: Vec<f64>,
}

impl Workspace {
    pub fn new(order: ModelOrder, n: usize) -> Self {
        let dim = order.dim();
        Workspace {
            p1: order.p1,
            p2: order.p2,
            dim,
            mu: vec![0.0; n],
            xi: vec![0.0; n],
            grad: vec![0.0; n * dim],
            second: Vec::new(),
        }
    }

    /// Fill `mu`, `xi` and, if requested, `grad` for flattened `θ`.
    pub fn run(&mut self, theta: &[f64], link: &LinkFunction, x: &[f64], with_grad: bool) {
        let (p1, p2, d) = (self.p1, self.p2, self.dim);
        let c = theta[0];
        let phi = &theta[1..1 + p1];
        let psi = &theta[1 + p1..];
        for t in 0..x.len() {
            let mut s = c;
            for i in 0..p1.min(t) {
                s += phi[i] * x[t - 1 - i];
            }
            for (j, psi_j) in psi.iter().enumerate().take(p2.min(t)) {
                s += psi_j * self.mu[t - 1 - j];
            }
            self.xi[t] = s;
            self.mu[t] = link.eval(s);
            if with_grad {
                let (done, rest) = self.grad.split_at_mut(t * d);
                let row = &mut rest[..d];
                row.fill(0.0);
                row[0] = 1.0;
                for i in 0..p1.min(t) {
                    row[1 + i] = x[t - 1 - i];
                }
                for j in 0..p2.min(t) {
                    row[1 + p1 + j] += self.mu[t - 1 - j];
                    let prev = &done[(t - 1 - j) * d..(t - j) * d];
                    for (r, g) in row.iter_mut().zip(prev) {
                        *r += psi[j] * g;
                    }
                }
                let dl = link.deriv(s);
                for r in row.iter_mut() {
                    *r *= dl;
                }
            }
        }
    }

    /// Objective `(1/n)ΣW(X−μ̃)²` and its gradient written into `g`.
    pub fn objective(
        &mut self,
        theta: &[f64],
        link: &LinkFunction,
        x: &[f64],
        w: &[f64],
        g: Option<&mut [f64]>,
    ) -> f64 {
        let with_grad = g.is_some();
        self.run(theta, link, x, with_grad);
        let n = x.len() as f64;
        let mut f = 0.0;
        match g {
            Some(g) => {
                g.fill(0.0);
                for t in 0..x.len() {
                    let e = x[t] - self.mu[t];
                    f += w[t] * e * e;
                    let scale = -2.0 * w[t] * e / n;
                    for (gk, rk) in g.iter_mut().zip(&self.grad[t * self.dim..(t + 1) * self.dim]) {
                        *gk += scale * rk;
                    }
                }
            }
            None => {
                for t in 0..x.len() {
                    let e = x[t] - self.mu[t];
                    f += w[t] * e * e;
                }
            }
        }
        f / n
    }

    /// Second derivatives `∂²μ̃_t/∂θ∂θᵀ` (row-major `d × d` per `t`) after a `run` with gradients.
    fn run_second(&mut self, theta: &[f64], link: &LinkFunction, x: &[f64]) {
        let (p1, p2, d) = (self.p1, self.p2, self.dim);
        let psi = &theta[1 + p1..];
        let dd = d * d;
        if self.second.len() != x.len() * dd {
            self.second = vec![0.0; x.len() * dd];
        }
        let mut b = vec![0.0; d];
        for t in 0..x.len() {
            b.fill(0.0);
            b[0] = 1.0;
            for i in 0..p1.min(t) {
                b[1 + i] = x[t - 1 - i];
            }
            for j in 0..p2.min(t) {
                b[1 + p1 + j] += self.mu[t - 1 - j];
                let prev = &self.grad[(t - 1 - j) * d..(t - j) * d];
                for (bk, g) in b.iter_mut().zip(prev) {
                    *bk += psi[j] * g;
                }
            }
            let (done, rest) = self.second.split_at_mut(t * dd);
            let s = &mut rest[..dd];
            s.fill(0.0);
            for j in 0..p2.min(t) {
                let k = 1 + p1 + j;
                let gprev = &self.grad[(t - 1 - j) * d..(t - j) * d];
                for a in 0..d {
                    s[k * d + a] += gprev[a];
                    s[a * d + k] += gprev[a];
                }
                let sprev = &done[(t - 1 - j) * dd..(t - j) * dd];
                for (sv, pv) in s.iter_mut().zip(sprev) {
                    *sv += psi[j] * pv;
                }
            }
            let (d1, d2) = (link.deriv(self.xi[t]), link.deriv2(self.xi[t]));
            for a in 0..d {
                for c in 0..d {
                    s[a * d + c] = d1 * s[a * d + c] + d2 * b[a] * b[c];
                }
            }
        }
    }

    /// Objective, gradient `g`, exact Hessian `h` and Gauss-Newton matrix
    /// `h_gn = (2/n) Σ W ∇μ̃ ∇μ̃ᵀ`.
    #[allow(clippy::too_many_arguments)]
    pub fn objective_newton(
        &mut self,
        theta: &[f64],
        link: &LinkFunction,
        x: &[f64],
        w: &[f64],
        g: &mut [f64],
        h: &mut [f64],
        h_gn: &mut [f64],
    ) -> f64 {
        let f = self.objective_gn(theta, link, x, w, g, h_gn);
        self.run_second(theta, link, x);
        let n = x.len() as f64;
        let dd = self.dim * self.dim;
        h.copy_from_slice(h_gn);
        for t in 0..x.len() {
            let scale = 2.0 * w[t] * (x[t] - self.mu[t]) / n;
            for (hk, sk) in h.iter_mut().zip(&self.second[t * dd..(t + 1) * dd]) {
                *hk -= scale * sk;
            }
        }
        f
    }

    /// Objective, gradient `g` and Gauss-Newton matrix `h = (2/n) Σ W ∇μ̃ ∇μ̃ᵀ`.
    pub fn objective_gn(
        &mut self,
        theta: &[f64],
        link: &LinkFunction,
        x: &[f64],
        w: &[f64],
        g: &mut [f64],
        h: &mut [f64],
    ) -> f64 {
        self.run(theta, link, x, true);
        let n = x.len() as f64;
        let d = self.dim;
        let mut f = 0.0;
        g.fill(0.0);
        h.fill(0.0);
        for t in 0..x.len() {
            let e = x[t] - self.mu[t];
            f += w[t] * e * e;
            let row = &self.grad[t * d..(t + 1) * d];
            let scale = 2.0 * w[t] / n;
            for a in 0..d {
                g[a] -= scale * e * row[a];
                for b in 0..=a {
                    h[a * d + b] += scale * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[b * d + a] = h[a * d + b];
            }
        }
        f / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAPLACE: LinkFunction = LinkFunction::Laplace { sigma: 1.0 };

    #[test]
    fn constant_mean() {
        let theta = ThetaParams::new(1.0, vec![0.0], vec![]);
        let (mu, _) = mu_tilde_path(&theta, &LAPLACE, &[3.0, 0.0, 5.0]);
        for m in mu {
            assert!((m - (1.0 + std::f64::consts::LN_2)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_initialization() {
        let theta = ThetaParams::new(-0.4, vec![0.5], vec![]);
        let (mu, xi) = mu_tilde_path(&theta, &LAPLACE, &[2.0, 4.0]);
        assert_eq!(xi[0], -0.4);
        assert!((mu[0] - LAPLACE.eval(-0.4)).abs() < 1e-15);
        assert!((xi[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hand_unrolled_garch11() {
        let (c, a, b) = (0.3, 0.2, 0.5);
        let theta = ThetaParams::new(c, vec![a], vec![b]);
        let x = [2.0, 5.0, 1.0];
        let l = |u: f64| LAPLACE.eval(u);
        let dl = |u: f64| LAPLACE.deriv(u);
        let xi1 = c;
        let m1 = l(xi1);
        let xi2 = c + a * x[0] + b * m1;
        let m2 = l(xi2);
        let xi3 = c + a * x[1] + b * m2;
        let m3 = l(xi3);
        let path = mu_gradient_path(&theta, &LAPLACE, &x).unwrap();
        assert!((path.mu[2] - m3).abs() < 1e-14);
        // symbolic derivatives
        let g1 = [dl(xi1), 0.0, 0.0];
        let g2 = [
            dl(xi2) * (1.0 + b * g1[0]),
            dl(xi2) * (x[0] + b * g1[1]),
            dl(xi2) * (m1 + b * g1[2]),
        ];
        let g3 = [
            dl(xi3) * (1.0 + b * g2[0]),
            dl(xi3) * (x[1] + b * g2[1]),
            dl(xi3) * (m2 + b * g2[2]),
        ];
        for (got, want) in [path.row(0), path.row(1), path.row(2)].iter().zip([g1, g2, g3]) {
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn iid_gradient() {
        let theta = ThetaParams::new(0.7, vec![0.0], vec![]);
        let path = mu_gradient_path(&theta, &LAPLACE, &[1.0, 2.0, 3.0]).unwrap();
        for t in 0..3 {
            assert!((path.row(t)[0] - LAPLACE.deriv(0.7)).abs() < 1e-15);
        }
        assert!(mu_gradient_path(&theta, &LinkFunction::Relu, &[1.0]).is_err());
    }

    #[test]
    fn objective_properties() {
        let theta = ThetaParams::new(0.2, vec![0.3], vec![0.2]);
        let x = [1.0, 0.0, 4.0, 2.0, 3.0];
        let ones = [1.0; 5];
        let twos = [2.0; 5];
        let a = wls_objective(&theta, &LAPLACE, &x, &ones).unwrap();
        let b = wls_objective(&theta, &LAPLACE, &x, &twos).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-14);
        assert!(wls_objective(&theta, &LAPLACE, &x, &[1.0, 1.0, 0.0, 1.0, 1.0]).is_err());

        let mut ws = Workspace::new(theta.order(), x.len());
        let mut g = vec![0.0; 3];
        let f = ws.objective(&theta.to_vec(), &LAPLACE, &x, &ones, Some(&mut g));
        assert!((f - a).abs() < 1e-15);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += h;
            dn[k] -= h;
            let fd = (ws.objective(&up, &LAPLACE, &x, &ones, None)
                - ws.objective(&dn, &LAPLACE, &x, &ones, None))
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn higher_order_gradient_and_gauss_newton() {
        let theta = ThetaParams::new(-0.3, vec![0.3, 0.1], vec![0.15, 0.3]);
        let x = [2.0, 0.0, 1.0, 4.0, 2.0, 3.0, 0.0, 1.0, 5.0, 2.0];
        let w: Vec<f64> = (0..x.len()).map(|t| 0.5 + 0.1 * t as f64).collect();
        let mut ws = Workspace::new(theta.order(), x.len());
        let d = 5;
        let (mut g, mut h) = (vec![0.0; d], vec![0.0; d * d]);
        ws.objective_gn(&theta.to_vec(), &LAPLACE, &x, &w, &mut g, &mut h);
        let path = mu_gradient_path(&theta, &LAPLACE, &x).unwrap();
        for k in 0..d {
            let step = 1e-6;
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += step;
            dn[k] -= step;
            let fd = (ws.objective(&up, &LAPLACE, &x, &w, None) - ws.objective(&dn, &LAPLACE, &x, &w, None))
                / (2.0 * step);
            assert!((fd - g[k]).abs() < 1e-7, "component {k}: {fd} vs {}", g[k]);
            let (mu_up, _) = mu_tilde_path(&ThetaParams::from_slice(theta.order(), &up), &LAPLACE, &x);
            let (mu_dn, _) = mu_tilde_path(&ThetaParams::from_slice(theta.order(), &dn), &LAPLACE, &x);
            for t in 0..x.len() {
                let fd = (mu_up[t] - mu_dn[t]) / (2.0 * step);
                assert!((fd - path.row(t)[k]).abs() < 1e-7, "t={t} k={k}");
            }
        }
        for a in 0..d {
            for b in 0..d {
                let want: f64 = (0..x.len())
                    .map(|t| 2.0 * w[t] * path.row(t)[a] * path.row(t)[b])
                    .sum::<f64>()
                    / x.len() as f64;
                assert!((h[a * d + b] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_hessian_matches_finite_differences() {
        for link in [LAPLACE, LinkFunction::Softplus { sigma: 0.7 }] {
            let theta = ThetaParams::new(-0.2, vec![0.3, 0.1], vec![0.15, 0.3]);
            let x = [2.0, 0.0, 1.0, 4.0, 2.0, 3.0, 0.0, 1.0, 5.0, 2.0, 0.0, 0.0, 1.0];
            let w: Vec<f64> = (0..x.len()).map(|t| 0.5 + 0.1 * t as f64).collect();
            let mut ws = Workspace::new(theta.order(), x.len());
            let d = 5;
            let (mut g, mut h, mut hg) = (vec![0.0; d], vec![0.0; d * d], vec![0.0; d * d]);
            ws.objective_newton(&theta.to_vec(), &link, &x, &w, &mut g, &mut h, &mut hg);
            for k in 0..d {
                let step = 1e-6;
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[k] += step;
                dn[k] -= step;
                let (mut gu, mut gd, mut tmp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d * d]);
                ws.objective_gn(&up, &link, &x, &w, &mut gu, &mut tmp);
                ws.objective_gn(&dn, &link, &x, &w, &mut gd, &mut tmp);
                for a in 0..d {
                    let fd = (gu[a] - gd[a]) / (2.0 * step);
                    assert!((fd - h[a * d + k]).abs() < 1e-5, "{link:?} ({a},{k}): {fd} vs {}", h[a * d + k]);
                }
            }
        }
    }
}
