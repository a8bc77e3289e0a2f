//! Main terms of twisted second and fourth moments by contour quadrature, with
//! direct oracles and the diagonal Euler-product main term.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::SEPARATION_CONSTANT;
use crate::numeric::{complex_sum, gauss_legendre_on, integrate_adaptive, simpson_complex, ComplexSum};
use crate::primes::{b_coeff, BlockSchedule, PrimeTable, ScheduleVariant};
use crate::proxy::DirichletPoly;
use crate::zeta::{ln_y_factor, same_sign_gamma, ZetaEvaluator};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ramp_sigma(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// C∞ step from 0 at x ≤ 0 to 1 at x ≥ 1.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let up = ramp_sigma(x);
    up / (up + ramp_sigma(1.0 - x))
}

/// Bump equal to 1 on [b, c], vanishing outside (a, d), with smooth ramps between.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothWeight {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub height: f64,
    mass: f64,
}

impl SmoothWeight {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if !(a < b && b < c && c < d) || !a.is_finite() || !d.is_finite() {
            return Err(Error::InvalidParameter(format!("weight needs a < b < c < d, got ({a}, {b}, {c}, {d})")));
        }
        let mut w = Self { a, b, c, d, height: 1.0, mass: 0.0 };
        let ramps = integrate_adaptive(|x| w.shape(x), a, b, 1e-12)? + integrate_adaptive(|x| w.shape(x), c, d, 1e-12)?;
        w.mass = ramps + (c - b);
        Ok(w)
    }

    /// Support [1.1, 1.9] with plateau [1.2, 1.8].
    pub fn standard() -> Self {
        Self::new(1.1, 1.2, 1.8, 1.9).expect("valid weight")
    }

    /// The same shape multiplied by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            height: self.height * factor,
            mass: self.mass * factor,
            ..self.clone()
        }
    }

    fn shape(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.d {
            0.0
        } else if x < self.b {
            smooth_step((x - self.a) / (self.b - self.a))
        } else if x <= self.c {
            1.0
        } else {
            smooth_step((self.d - x) / (self.d - self.c))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.height * self.shape(x)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Gauss–Legendre nodes and weights in t for ∫ g(t) w(t/T) dt, split at the plateau ends.
    pub fn t_nodes(&self, t_height: f64, per_piece: usize) -> (Vec<f64>, Vec<f64>) {
        let cuts = [self.a, self.b, self.c, self.d];
        let mut nodes = Vec::with_capacity(3 * per_piece);
        let mut weights = Vec::with_capacity(3 * per_piece);
        for pair in cuts.windows(2) {
            let (x, w) = gauss_legendre_on(per_piece, pair[0] * t_height, pair[1] * t_height);
            for (t, g) in x.into_iter().zip(w) {
                nodes.push(t);
                weights.push(g * self.eval(t / t_height));
            }
        }
        (nodes, weights)
    }
}

pub fn weight_eval(w: &SmoothWeight, x: f64) -> f64 {
    w.eval(x)
}

pub fn weight_mass(w: &SmoothWeight) -> f64 {
    w.mass()
}

/// Twisting Dirichlet polynomials A = Σ a(n) n^{−s}, B = Σ b(n) n^{−s} of length T^η.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistSpec {
    pub a: DirichletPoly,
    pub b: DirichletPoly,
    pub eta: f64,
}

impl TwistSpec {
    pub fn trivial() -> Self {
        Self {
            a: DirichletPoly::one(),
            b: DirichletPoly::one(),
            eta: 0.0,
        }
    }

    pub fn new(a: DirichletPoly, b: DirichletPoly, eta: f64) -> Self {
        Self { a, b, eta }
    }

    pub fn is_trivial(&self) -> bool {
        self.a == DirichletPoly::one() && self.b == DirichletPoly::one()
    }

    /// Checks the length exponent against the moment order and the supports against T^η.
    pub fn validate(&self, t_height: f64, order: usize) -> Result<()> {
        let limit = match order {
            2 => 0.5,
            4 => 1.0 / 11.0,
            _ => return Err(Error::InvalidParameter(format!("moment order {order}"))),
        };
        if !(self.eta >= 0.0 && self.eta < limit) {
            return Err(Error::InvalidParameter(format!("length exponent {} not below {limit:.6}", self.eta)));
        }
        let cap = t_height.powf(self.eta) * (1.0 + 1e-12);
        let longest = self.a.length_bound.max(self.b.length_bound);
        if longest as f64 > cap {
            return Err(Error::InvalidParameter(format!("twist length {longest} exceeds T^eta = {cap:.3}")));
        }
        Ok(())
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// F(z1, z2) for the second-moment twist.
pub fn f_second(z1: Complex64, z2: Complex64, twist: &TwistSpec) -> Complex64 {
    let mut acc = ComplexSum::new();
    for (n, an) in twist.a.iter() {
        let ln_n = (n as f64).ln();
        for (m, bm) in twist.b.iter() {
            let g = gcd(n, m);
            let lcm = (n / g) as f64 * m as f64;
            let ln_g = (g as f64).ln();
            let phase = (z1 + z2) * ln_g - z2 * ln_n - z1 * (m as f64).ln();
            acc.add(an * bm.conj() * phase.exp() / lcm);
        }
    }
    acc.value()
}

/// F for the fourth-moment twist, built from B-coefficients.
pub fn f_fourth(z: [Complex64; 4], twist: &TwistSpec, table: &PrimeTable) -> Result<Complex64> {
    let reflected = [-z[2], -z[3], -z[0], -z[1]];
    let mut acc = ComplexSum::new();
    for (n, an) in twist.a.iter() {
        for (m, am) in twist.a.iter() {
            let g = gcd(n, m);
            let lcm = (n / g) as f64 * m as f64;
            let left = b_coeff(z, n / g, table)?;
            let right = b_coeff(reflected, m / g, table)?;
            acc.add(an * am.conj() * left * right / lcm);
        }
    }
    Ok(acc.value())
}

fn check_pole(x: Complex64, tol: f64) -> Result<()> {
    if x.norm() < tol {
        return Err(Error::PoleProximity(x.norm()));
    }
    Ok(())
}

/// A(z) = Π ζ(1 + z_i + z_j) over i ∈ {1,2}, j ∈ {3,4}, divided by ζ(2 + Σz).
pub fn a_ratio(z: [Complex64; 4], zeta: &ZetaEvaluator) -> Result<Complex64> {
    let mut num = c(1.0, 0.0);
    for i in 0..2 {
        for j in 2..4 {
            let x = z[i] + z[j];
            check_pole(x, 1e-8)?;
            num *= zeta.zeta(x + 1.0)?;
        }
    }
    let total: Complex64 = z.iter().sum();
    Ok(num / zeta.zeta(total + 2.0)?)
}

/// Π_{j<k} (z_k − z_j).
pub fn vandermonde(z: &[Complex64]) -> Complex64 {
    let mut prod = c(1.0, 0.0);
    for j in 0..z.len() {
        for k in j + 1..z.len() {
            prod *= z[k] - z[j];
        }
    }
    prod
}

/// Trapezoid approximation of (1/2πi)∮ f over the circle |u − center| = radius.
pub fn circle_integral<F: Fn(Complex64) -> Complex64>(f: F, center: Complex64, radius: f64, nodes: usize) -> Complex64 {
    complex_sum((0..nodes).map(|k| {
        let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / nodes as f64);
        f(center + e * radius) * e * radius
    })) / nodes as f64
}

/// Radii (in units of 1/log T) and nodes per circle for the contour quadrature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourSpec {
    pub kappa: Vec<f64>,
    pub nodes_per_circle: usize,
}

impl ContourSpec {
    pub fn second_order() -> Self {
        Self { kappa: vec![3.0, 9.0], nodes_per_circle: 64 }
    }

    pub fn fourth_order() -> Self {
        Self {
            kappa: vec![1.0, 1.5, 3.0, 3.5],
            nodes_per_circle: 24,
        }
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Self { nodes_per_circle: nodes, ..self.clone() }
    }

    fn validate(&self, vars: usize) -> Result<()> {
        if self.kappa.len() != vars {
            return Err(Error::InvalidParameter(format!("{} radii for {vars} variables", self.kappa.len())));
        }
        if self.nodes_per_circle < 16 || self.nodes_per_circle % 2 != 0 {
            return Err(Error::InvalidParameter(format!("nodes per circle {} must be even and at least 16", self.nodes_per_circle)));
        }
        for (i, a) in self.kappa.iter().enumerate() {
            if !(*a > 0.0) || self.kappa[..i].iter().any(|b| (a - b).abs() < 1e-9) {
                return Err(Error::InvalidParameter("contour radii must be positive and distinct".into()));
            }
        }
        Ok(())
    }
}

/// Concentric circles enclosing every pole: radius ρ + κ_j/log T about the pole centroid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourGeometry {
    pub center: Complex64,
    pub spread: f64,
    pub radii: Vec<f64>,
    pub nodes_per_circle: usize,
}

impl ContourGeometry {
    pub fn new(poles: &[Complex64], spec: &ContourSpec, log_t: f64) -> Result<Self> {
        spec.validate(spec.kappa.len())?;
        let center = poles.iter().sum::<Complex64>() / poles.len() as f64;
        let spread = poles.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
        let radii = spec.kappa.iter().map(|k| spread + k / log_t).collect();
        Ok(Self {
            center,
            spread,
            radii,
            nodes_per_circle: spec.nodes_per_circle,
        })
    }

    /// Nodes u and quadrature weights (including 1/2πi) on circle j.
    pub fn circle(&self, j: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let m = self.nodes_per_circle;
        (0..m)
            .map(|k| {
                let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64);
                (self.center + e * self.radii[j], e * self.radii[j] / m as f64)
            })
            .unzip()
    }

    /// Product-rule quadrature of (1/2πi)^n ∮…∮ f over all circles.
    pub fn integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(&[Complex64]) -> Complex64 + Sync,
    {
        let circles: Vec<_> = (0..self.radii.len()).map(|j| self.circle(j)).collect();
        let m = self.nodes_per_circle;
        let n = circles.len();
        let partial: Vec<Complex64> = (0..m)
            .into_par_iter()
            .map(|first| {
                let mut idx = vec![0usize; n];
                idx[0] = first;
                let mut u = vec![c(0.0, 0.0); n];
                let mut acc = ComplexSum::new();
                loop {
                    let mut weight = c(1.0, 0.0);
                    for j in 0..n {
                        u[j] = circles[j].0[idx[j]];
                        weight *= circles[j].1[idx[j]];
                    }
                    acc.add(f(&u) * weight);
                    let mut j = n - 1;
                    loop {
                        if j == 0 {
                            return acc.value();
                        }
                        idx[j] += 1;
                        if idx[j] < m {
                            break;
                        }
                        idx[j] = 0;
                        j -= 1;
                    }
                }
            })
            .collect();
        complex_sum(partial)
    }
}

/// Σ over ways of choosing which k of the 2k poles feed the first k arguments, via contours.
///
/// `kernel` must be symmetric in its first k and in its last k arguments and analytic near the poles.
pub fn swap_sum_contour<F>(poles: &[Complex64], kernel: F, spec: &ContourSpec, log_t: f64) -> Result<Complex64>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let n = poles.len();
    if n % 2 != 0 || n == 0 {
        return Err(Error::InvalidParameter("swap sums need an even number of poles".into()));
    }
    let k = n / 2;
    let geom = ContourGeometry::new(poles, spec, log_t)?;
    let fact: f64 = (1..=k).map(|x| x as f64).product();
    let prefactor = if k % 2 == 0 { 1.0 } else { -1.0 } / (fact * fact);
    let value = geom.integrate(|u| {
        let vd = vandermonde(u);
        let mut den = c(1.0, 0.0);
        for &ui in u {
            for &p in poles {
                den *= ui - p;
            }
        }
        kernel(u) * vd * vd / den
    });
    Ok(value * prefactor)
}

/// Result of a main-term quadrature with its node-doubling check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MainTerm {
    pub value: Complex64,
    pub doubled: Complex64,
    pub rel_change: f64,
    pub nodes_per_circle: usize,
    pub geometry: ContourGeometry,
}

/// Gauss–Legendre nodes per piece of the weight's support (three pieces).
pub const T_NODES_PER_PIECE: usize = 80;

fn check_shifts(shifts: &[Complex64], log_t: f64) -> Result<()> {
    for a in shifts {
        if a.re.abs() > 5.0 / log_t + 1e-15 || a.im.abs() > log_t * log_t {
            return Err(Error::InvalidParameter(format!("shift {a} outside |Re| <= 5/log T, |Im| <= (log T)^2")));
        }
    }
    Ok(())
}

fn e_plus(a: Complex64, t: f64) -> Complex64 {
    ln_y_factor(a, c(0.0, 0.0), t).exp()
}

fn e_minus(b: Complex64, t: f64) -> Complex64 {
    ln_y_factor(c(0.0, 0.0), b, t).exp()
}

struct SecondSetup<'a> {
    alpha: [Complex64; 2],
    poles: [Complex64; 2],
    twist: &'a TwistSpec,
    t_nodes: Vec<f64>,
    t_weights: Vec<Complex64>,
    log_t: f64,
}

impl SecondSetup<'_> {
    fn run(&self, spec: &ContourSpec, zeta: &ZetaEvaluator) -> Result<(Complex64, ContourGeometry)> {
        let geom = ContourGeometry::new(&self.poles, spec, self.log_t)?;
        let (u1, w1) = geom.circle(0);
        let (u2, w2) = geom.circle(1);
        let floor = 1e-3 / self.log_t;
        let left: Vec<Vec<Complex64>> = u1.par_iter().map(|&u| self.t_nodes.iter().map(|&t| e_minus(-u, t)).collect()).collect();
        let right: Vec<Vec<Complex64>> = u2.par_iter().map(|&u| self.t_nodes.iter().map(|&t| e_plus(u, t)).collect()).collect();
        let den1: Vec<Complex64> = u1.iter().map(|u| (u - self.poles[0]) * (u - self.poles[1])).collect();
        let den2: Vec<Complex64> = u2.iter().map(|u| (u - self.poles[0]) * (u - self.poles[1])).collect();
        let rows: Vec<Result<Complex64>> = (0..u1.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = ComplexSum::new();
                for j in 0..u2.len() {
                    let x = u1[i] - u2[j];
                    check_pole(x, floor)?;
                    let zeta_part = zeta.zeta(x + 1.0)? * x * x;
                    let twist = if self.twist.is_trivial() { c(1.0, 0.0) } else { f_second(u1[i], -u2[j], self.twist) };
                    let y = complex_sum((0..self.t_nodes.len()).map(|k| self.t_weights[k] * left[i][k] * right[j][k]));
                    acc.add(zeta_part * twist * y / (den1[i] * den2[j]) * w1[i] * w2[j]);
                }
                Ok(acc.value())
            })
            .collect();
        let mut total = ComplexSum::new();
        for r in rows {
            total.add(r?);
        }
        Ok((-total.value(), geom))
    }
}

/// Smoothed twisted second moment main term for ζ(1/2 + α1 + it) ζ(1/2 + α2 − it) A conj(B).
pub fn second_main_term(
    alpha1: Complex64,
    alpha2: Complex64,
    twist: &TwistSpec,
    w: &SmoothWeight,
    t_height: f64,
    spec: &ContourSpec,
    zeta: &ZetaEvaluator,
) -> Result<MainTerm> {
    let log_t = t_height.ln();
    check_shifts(&[alpha1, alpha2], log_t)?;
    twist.validate(t_height, 2)?;
    let (t_nodes, gl) = w.t_nodes(t_height, T_NODES_PER_PIECE);
    let t_weights = t_nodes.iter().zip(&gl).map(|(&t, &g)| ln_y_factor(alpha1, alpha2, t).exp() * g).collect();
    let setup = SecondSetup {
        alpha: [alpha1, alpha2],
        poles: [alpha1, -alpha2],
        twist,
        t_nodes,
        t_weights,
        log_t,
    };
    debug_assert_eq!(setup.alpha[0], alpha1);
    let (value, geometry) = setup.run(spec, zeta)?;
    let (doubled, _) = setup.run(&spec.with_nodes(2 * spec.nodes_per_circle), zeta)?;
    finish(value, doubled, 0.01, spec.nodes_per_circle, geometry)
}

fn finish(value: Complex64, doubled: Complex64, tol: f64, nodes: usize, geometry: ContourGeometry) -> Result<MainTerm> {
    let rel_change = (value - doubled).norm() / doubled.norm().max(1e-300);
    if rel_change > tol || !rel_change.is_finite() {
        return Err(Error::QuadratureNotConverged(format!("node doubling changed the main term by {rel_change:.3e}")));
    }
    Ok(MainTerm {
        value,
        doubled,
        rel_change,
        nodes_per_circle: nodes,
        geometry,
    })
}

struct FourthSetup<'a> {
    poles: [Complex64; 4],
    twist: &'a TwistSpec,
    table: PrimeTable,
    t_nodes: Vec<f64>,
    t_weights: Vec<Complex64>,
    log_t: f64,
}

impl FourthSetup<'_> {
    fn run(&self, spec: &ContourSpec, zeta: &ZetaEvaluator) -> Result<(Complex64, ContourGeometry)> {
        let geom = ContourGeometry::new(&self.poles, spec, self.log_t)?;
        let circles: Vec<_> = (0..4).map(|j| geom.circle(j)).collect();
        let m = geom.nodes_per_circle;
        let nt = self.t_nodes.len();
        let floor = 1e-3 / self.log_t;
        let den: Vec<Vec<Complex64>> = circles
            .iter()
            .map(|(u, _)| u.iter().map(|&x| self.poles.iter().map(|p| x - p).product()).collect())
            .collect();
        let pair = |a: usize, b: usize| -> Result<Vec<Complex64>> {
            let mut out = Vec::with_capacity(m * m);
            for &x in &circles[a].0 {
                for &y in &circles[b].0 {
                    let d = x - y;
                    check_pole(d, floor)?;
                    out.push(zeta.zeta(d + 1.0)? * d * d);
                }
            }
            Ok(out)
        };
        let z13 = pair(0, 2)?;
        let z14 = pair(0, 3)?;
        let z23 = pair(1, 2)?;
        let z24 = pair(1, 3)?;
        let minus: Vec<Vec<Complex64>> = [0, 1]
            .iter()
            .map(|&j| circles[j].0.iter().flat_map(|&u| self.t_nodes.iter().map(move |&t| e_minus(-u, t))).collect())
            .collect();
        let plus: Vec<Vec<Complex64>> = [2, 3]
            .iter()
            .map(|&j| circles[j].0.iter().flat_map(|&u| self.t_nodes.iter().map(move |&t| e_plus(u, t))).collect())
            .collect();
        // Tensor of the t-integrand split into the (u1, u2) and (u3, u4) halves.
        let low: Vec<Complex64> = (0..m * m)
            .flat_map(|ij| {
                let (i, j) = (ij / m, ij % m);
                let (minus, tw) = (&minus, &self.t_weights);
                (0..nt).map(move |k| minus[0][i * nt + k] * minus[1][j * nt + k] * tw[k])
            })
            .collect();
        let high: Vec<Complex64> = (0..m * m)
            .flat_map(|ij| {
                let (i, j) = (ij / m, ij % m);
                let plus = &plus;
                (0..nt).map(move |k| plus[0][i * nt + k] * plus[1][j * nt + k])
            })
            .collect();
        let rows: Vec<Result<Complex64>> = (0..m)
            .into_par_iter()
            .map(|i1| {
                let (u1, w1) = (circles[0].0[i1], circles[0].1[i1]);
                let mut acc = ComplexSum::new();
                for i2 in 0..m {
                    let (u2, w2) = (circles[1].0[i2], circles[1].1[i2]);
                    let d12 = u1 - u2;
                    let lo = &low[(i1 * m + i2) * nt..(i1 * m + i2 + 1) * nt];
                    let head = d12 * d12 * w1 * w2 / (den[0][i1] * den[1][i2]);
                    for i3 in 0..m {
                        let (u3, w3) = (circles[2].0[i3], circles[2].1[i3]);
                        let mid = head * z13[i1 * m + i3] * z23[i2 * m + i3] * w3 / den[2][i3];
                        for i4 in 0..m {
                            let (u4, w4) = (circles[3].0[i4], circles[3].1[i4]);
                            let d34 = u3 - u4;
                            let hi = &high[(i3 * m + i4) * nt..(i3 * m + i4 + 1) * nt];
                            let mut y = c(0.0, 0.0);
                            for k in 0..nt {
                                y += lo[k] * hi[k];
                            }
                            let twist = if self.twist.is_trivial() {
                                c(1.0, 0.0)
                            } else {
                                f_fourth([u1, u2, -u3, -u4], self.twist, &self.table)?
                            };
                            let denom = zeta.zeta(u1 + u2 - u3 - u4 + 2.0)? * den[3][i4];
                            acc.add(mid * z14[i1 * m + i4] * z24[i2 * m + i4] * d34 * d34 * w4 * twist * y / denom);
                        }
                    }
                }
                Ok(acc.value())
            })
            .collect();
        let mut total = ComplexSum::new();
        for r in rows {
            total.add(r?);
        }
        Ok((total.value() * 0.25, geom))
    }
}

/// Smoothed twisted fourth moment main term for ζ(1/2+α1+it)ζ(1/2+α2+it)ζ(1/2+α3−it)ζ(1/2+α4−it)|A|².
pub fn fourth_main_term(
    shifts: [Complex64; 4],
    twist: &TwistSpec,
    w: &SmoothWeight,
    t_height: f64,
    spec: &ContourSpec,
    zeta: &ZetaEvaluator,
) -> Result<MainTerm> {
    let log_t = t_height.ln();
    check_shifts(&shifts, log_t)?;
    twist.validate(t_height, 4)?;
    let [a1, a2, a3, a4] = shifts;
    let (t_nodes, gl) = w.t_nodes(t_height, T_NODES_PER_PIECE);
    let t_weights = t_nodes
        .iter()
        .zip(&gl)
        .map(|(&t, &g)| (ln_y_factor(a1, a3, t) + ln_y_factor(a2, a4, t)).exp() * g)
        .collect();
    let table = PrimeTable::sieve(twist.a.length_bound.max(2))?;
    let setup = FourthSetup {
        poles: [a1, a2, -a3, -a4],
        twist,
        table,
        t_nodes,
        t_weights,
        log_t,
    };
    let (value, geometry) = setup.run(spec, zeta)?;
    let (doubled, _) = setup.run(&spec.with_nodes(2 * spec.nodes_per_circle), zeta)?;
    finish(value, doubled, 0.02, spec.nodes_per_circle, geometry)
}

/// Direct integral with its step-halving comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: Complex64,
    pub coarse: Complex64,
    pub rel_step_error: f64,
    pub dt: f64,
}

/// ζ(1/2 + α ± it) on a grid, sharing evaluations between shifts that coincide.
struct ShiftedZeta<'a> {
    zeta: &'a ZetaEvaluator,
    keys: Vec<(Complex64, bool)>,
    slots: Vec<usize>,
}

impl<'a> ShiftedZeta<'a> {
    fn new(zeta: &'a ZetaEvaluator, shifts: &[(Complex64, bool)]) -> Self {
        let mut keys: Vec<(Complex64, bool)> = Vec::new();
        let mut slots = Vec::new();
        for &(alpha, minus) in shifts {
            // ζ(1/2 + α − it) = conj ζ(1/2 + conj α + it)
            let key = if minus { (alpha.conj(), true) } else { (alpha, false) };
            let slot = match keys.iter().position(|k| k.0 == key.0) {
                Some(s) => s,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            };
            slots.push(slot);
        }
        Self { zeta, keys, slots }
    }

    fn product(&self, t: f64, conj_flags: &[bool]) -> Result<Complex64> {
        let mut vals = Vec::with_capacity(self.keys.len());
        for (alpha, _) in &self.keys {
            let v = if alpha.re == 0.0 {
                self.zeta.critical(t + alpha.im)?
            } else {
                self.zeta.zeta(c(0.5 + alpha.re, t + alpha.im))?
            };
            vals.push(v);
        }
        let mut prod = c(1.0, 0.0);
        for (slot, &minus) in self.slots.iter().zip(conj_flags) {
            prod *= if minus { vals[*slot].conj() } else { vals[*slot] };
        }
        Ok(prod)
    }
}

/// Direct Simpson integral of the twisted moment's left side over the weight's support.
///
/// Two shifts give ζ(1/2+α1+it)ζ(1/2+α2−it)A conj(B); four give
/// ζ(1/2+α1+it)ζ(1/2+α2+it)ζ(1/2+α3−it)ζ(1/2+α4−it)|A|².
pub fn lhs_oracle(t_height: f64, shifts: &[Complex64], twist: &TwistSpec, w: &SmoothWeight, zeta: &ZetaEvaluator, dt: f64) -> Result<OracleValue> {
    let signs: Vec<bool> = match shifts.len() {
        2 if t_height <= 1e6 => vec![false, true],
        4 if t_height <= 1e5 => vec![false, false, true, true],
        2 | 4 => return Err(Error::InvalidParameter(format!("oracle height {t_height} too large"))),
        n => return Err(Error::InvalidParameter(format!("{n} shifts; expected 2 or 4"))),
    };
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(Error::InvalidParameter(format!("oracle step {dt} outside (0, 0.02]")));
    }
    let lo = w.a * t_height;
    let hi = w.d * t_height;
    let n = (((hi - lo) / dt / 4.0).ceil() as usize).max(1) * 4;
    let h = (hi - lo) / n as f64;
    let tagged: Vec<(Complex64, bool)> = shifts.iter().copied().zip(signs.iter().copied()).collect();
    let zetas = ShiftedZeta::new(zeta, &tagged);
    let order = shifts.len();
    let values: Vec<Result<Complex64>> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = lo + h * k as f64;
            let weight = w.eval(t / t_height);
            if weight == 0.0 {
                return Ok(c(0.0, 0.0));
            }
            let twist = if order == 2 {
                twist.a.eval(0.5, t) * twist.b.eval(0.5, t).conj()
            } else {
                c(twist.a.eval(0.5, t).norm_sqr(), 0.0)
            };
            Ok(zetas.product(t, &signs)? * twist * weight)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let value = simpson_complex(&values, h);
    let coarse_vals: Vec<Complex64> = values.iter().step_by(2).copied().collect();
    let coarse = simpson_complex(&coarse_vals, 2.0 * h);
    let rel_step_error = (value - coarse).norm() / value.norm().max(1e-300);
    if rel_step_error > 0.005 {
        return Err(Error::StepTooCoarse(format!("halving the step changed the oracle by {rel_step_error:.3e}")));
    }
    Ok(OracleValue {
        value,
        coarse,
        rel_step_error,
        dt: h,
    })
}

/// Diagonal Euler-product main term and its truncation diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalMain {
    /// T-normalized main term including mass(w).
    pub value: f64,
    /// Product of the full local factors (all prime powers) times mass(w).
    pub full_series: f64,
    /// Σ_j e^{−100 P_j}, the size of the discarded Ω-truncation terms.
    pub rankin_bound: f64,
}

/// Number of prime-power orders kept in the full local factor.
const LOCAL_SERIES_ORDER: usize = 24;

fn local_factor(p: f64, beta: f64, h1: f64, h2: f64, order: usize) -> Complex64 {
    let ln_p = p.ln();
    let unit1 = Complex64::from_polar(1.0, -h1 * ln_p);
    let unit2 = Complex64::from_polar(1.0, -h2 * ln_p);
    let mut fact = vec![1.0f64; order + 1];
    for k in 1..=order {
        fact[k] = fact[k - 1] * k as f64;
    }
    // Σ_{i+j=s} u1^i u2^j / (i! j!) = (u1 + u2)^s / s!
    let twisted = |s: usize, scale: f64| (unit1 + unit2).powu(s as u32) * scale.powi(s as i32) / fact[s];
    let sigma = |r: usize| complex_sum((0..=r).map(|i| unit1.powu(i as u32) * unit2.powu((r - i) as u32)));
    let mut acc = ComplexSum::new();
    for r in 0..=order {
        for s in 0..=order - r {
            let term = sigma(r) * twisted(s, beta - 1.0) * twisted(r + s, beta).conj() / p.powi((r + s) as i32);
            acc.add(term);
        }
    }
    acc.value()
}

/// Diagonal main term Π_j Π_{p ∈ block j} (local factor truncated at p^{−2}) · mass(w).
pub fn diagonal_euler_main(beta: f64, h1: f64, h2: f64, t_height: f64, schedule: &BlockSchedule, w: &SmoothWeight) -> Result<DiagonalMain> {
    if schedule.variant != ScheduleVariant::LowerSubunit {
        return Err(Error::InvalidParameter("diagonal main term needs the sub-unit lower-bound schedule".into()));
    }
    if (h1 - h2).abs() < SEPARATION_CONSTANT / t_height.ln() {
        return Err(Error::InvalidParameter(format!("|h1 - h2| = {} below {SEPARATION_CONSTANT}/log T", (h1 - h2).abs())));
    }
    if beta == 0.0 {
        return Ok(DiagonalMain {
            value: w.mass(),
            full_series: w.mass(),
            rankin_bound: 0.0,
        });
    }
    let mut ln_value = c(0.0, 0.0);
    let mut ln_full = c(0.0, 0.0);
    for j in 1..=schedule.blocks() {
        for &p in schedule.primes(j) {
            ln_value += local_factor(p as f64, beta, h1, h2, 2).ln();
            ln_full += local_factor(p as f64, beta, h1, h2, LOCAL_SERIES_ORDER).ln();
        }
    }
    let rankin_bound = schedule.p.iter().map(|pj| (-100.0 * pj).exp()).sum();
    Ok(DiagonalMain {
        value: ln_value.exp().re * w.mass(),
        full_series: ln_full.exp().re * w.mass(),
        rankin_bound,
    })
}

/// ∫ λ(1/2+α1+it)λ(1/2+α2+it) w(t/T) dt by Simpson with at least 20 points per oscillation.
pub fn oscillatory_integral(alpha1: Complex64, alpha2: Complex64, t_height: f64, w: &SmoothWeight) -> Result<Complex64> {
    let log_t = t_height.ln();
    if alpha1.im.abs() > log_t * log_t || alpha2.im.abs() > log_t * log_t {
        return Err(Error::InvalidParameter("shift beyond (log T)^2".into()));
    }
    if w.height == 0.0 {
        return Ok(c(0.0, 0.0));
    }
    let lo = w.a * t_height;
    let hi = w.d * t_height;
    let freq = 2.0 * (hi / (2.0 * PI)).ln().max(1.0) + alpha1.im.abs() + alpha2.im.abs();
    let step = (2.0 * PI / (20.0 * log_t)).min(2.0 * PI / (20.0 * freq));
    let n = (((hi - lo) / step / 4.0).ceil() as usize).max(1) * 4;
    let h = (hi - lo) / n as f64;
    let values: Vec<Result<Complex64>> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = lo + h * k as f64;
            let weight = w.eval(t / t_height);
            if weight == 0.0 {
                return Ok(c(0.0, 0.0));
            }
            Ok(same_sign_gamma(alpha1, alpha2, t)? * weight)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let fine = simpson_complex(&values, h);
    let coarse_vals: Vec<Complex64> = values.iter().step_by(2).copied().collect();
    let coarse = simpson_complex(&coarse_vals, 2.0 * h);
    let scale = w.mass() * t_height / log_t;
    if (fine - coarse).norm() > 1e-3 * scale {
        return Err(Error::StepTooCoarse(format!("oscillatory integral moved by {:.3e} on step halving", (fine - coarse).norm())));
    }
    Ok(fine)
}

/// One main-term comparison record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MainTermRecord {
    #[serde(rename = "T")]
    pub t_height: f64,
    pub shifts: Vec<Complex64>,
    pub main_term: Complex64,
    pub oracle: Complex64,
    pub ratio: Complex64,
    #[serde(rename = "M")]
    pub nodes_per_circle: usize,
    pub dt: f64,
}

impl MainTermRecord {
    pub fn new(t_height: f64, shifts: &[Complex64], main: &MainTerm, oracle: &OracleValue) -> Self {
        Self {
            t_height,
            shifts: shifts.to_vec(),
            main_term: main.value,
            oracle: oracle.value,
            ratio: main.value / oracle.value,
            nodes_per_circle: main.nodes_per_circle,
            dt: oracle.dt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeta() -> ZetaEvaluator {
        ZetaEvaluator::default()
    }

    #[test]
    fn weight_shape() {
        let w = SmoothWeight::standard();
        assert_eq!(w.eval(1.5), 1.0);
        assert_eq!(w.eval(5.0), 0.0);
        assert_eq!(w.eval(1.1), 0.0);
        assert!((w.eval(1.15) - 0.5).abs() < 1e-12);
        assert!(w.mass() > 0.6 && w.mass() <= 0.8);
        assert!((w.mass() - 0.7).abs() < 1e-10);
        assert!((w.scaled(2.0).mass() - 1.4).abs() < 1e-10);
        let (t, g) = w.t_nodes(1000.0, T_NODES_PER_PIECE);
        let mass: f64 = g.iter().sum();
        assert!((mass / 1000.0 - 0.7).abs() < 1e-9, "{mass}");
        assert!(t.iter().all(|&x| x > 1100.0 && x < 1900.0));
    }

    #[test]
    fn twist_factors() {
        let one = TwistSpec::trivial();
        assert_eq!(f_second(c(0.3, 1.0), c(-0.2, 0.5), &one), c(1.0, 0.0));
        let two = DirichletPoly::from_terms([(1, c(1.0, 0.0)), (2, c(1.0, 0.0))]).unwrap();
        let tw = TwistSpec::new(two.clone(), two, 0.3);
        assert!((f_second(c(0.0, 0.0), c(0.0, 0.0), &tw) - 2.5).norm() < 1e-15);
        let z1 = c(0.1, 0.4);
        let z2 = c(-0.05, 0.2);
        let lhs = f_second(z2.conj(), z1.conj(), &tw);
        assert!((lhs - f_second(z1, z2, &tw).conj()).norm() < 1e-14);

        let table = PrimeTable::sieve(100).unwrap();
        let z = [c(0.1, 0.2), c(-0.05, 0.3), c(0.02, -0.1), c(0.07, 0.05)];
        assert!((f_fourth(z, &one, &table).unwrap() - 1.0).norm() < 1e-15);
        let cc = c(0.4, -0.7);
        let a = DirichletPoly::from_terms([(1, c(1.0, 0.0)), (2, cc)]).unwrap();
        let tw = TwistSpec::new(a.clone(), a, 0.05);
        let reflected = [-z[2], -z[3], -z[0], -z[1]];
        let b2 = b_coeff(z, 2, &table).unwrap();
        let b2r = b_coeff(reflected, 2, &table).unwrap();
        let expect = 1.0 + cc.norm_sqr() / 2.0 + (cc * b2 + cc.conj() * b2r) / 2.0;
        assert!((f_fourth(z, &tw, &table).unwrap() - expect).norm() < 1e-14);
        let sym = [c(0.05, 0.3), c(0.0, -0.2), c(-0.05, 0.3), c(0.0, -0.2)];
        assert!(f_fourth(sym, &tw, &table).unwrap().im.abs() < 1e-10);
    }

    #[test]
    fn ratio_and_vandermonde() {
        let z: Vec<Complex64> = (0..4).map(|k| c(k as f64, 0.0)).collect();
        assert_eq!(vandermonde(&z), c(12.0, 0.0));
        let w = [c(0.3, 1.0), c(-0.2, 0.5), c(0.7, -0.1), c(0.05, 0.05)];
        let swapped = [w[1], w[0], w[2], w[3]];
        assert!((vandermonde(&w) + vandermonde(&swapped)).norm() < 1e-14);
        let zeta = zeta();
        let (a, b) = (c(0.1, 0.2), c(0.05, -0.3));
        let lhs = a_ratio([a, a, b, b], &zeta).unwrap();
        let rhs = zeta.zeta(a + b + 1.0).unwrap().powu(4) / zeta.zeta((a + b) * 2.0 + 2.0).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm());
        assert!(matches!(a_ratio([a, a, -a, b], &zeta), Err(Error::PoleProximity(_))));
    }

    #[test]
    fn circle_rule_recovers_residue() {
        let m = 32;
        let center = c(0.2, -0.1);
        let coeffs: Vec<Complex64> = (-15..=15).map(|k| c(1.0 / (1.0 + (k as f64).abs()), 0.3 * k as f64)).collect();
        let f = |z: Complex64| {
            let x = z - center;
            let mut s = c(0.0, 0.0);
            for (idx, a) in coeffs.iter().enumerate() {
                s += a * x.powi(idx as i32 - 15);
            }
            s
        };
        let got = circle_integral(f, center, 0.7, m);
        assert!((got - coeffs[14]).norm() < 1e-12, "{got}");
    }

    fn swap_reference(poles: &[Complex64], kernel: &dyn Fn(&[Complex64]) -> Complex64) -> Complex64 {
        let n = poles.len();
        let k = n / 2;
        let mut total = c(0.0, 0.0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let mut args: Vec<Complex64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| poles[i]).collect();
            args.extend((0..n).filter(|i| mask & (1 << i) == 0).map(|i| poles[i]));
            total += kernel(&args);
        }
        total
    }

    #[test]
    fn contour_reproduces_swap_sum() {
        let log_t = 10.0;
        let kernel2 = |u: &[Complex64]| ((u[0] * 1.3 - u[1] * 0.7) * 4.0).exp() / (u[0] - u[1] + 2.0);
        let poles2 = [c(0.01, 0.2), c(-0.02, -0.1)];
        let got = swap_sum_contour(&poles2, kernel2, &ContourSpec::second_order(), log_t).unwrap();
        let want = swap_reference(&poles2, &kernel2);
        assert!((got - want).norm() < 1e-10 * want.norm(), "{got} vs {want}");

        let kernel4 = |u: &[Complex64]| {
            let s = u[0] + u[1];
            let d = u[2] + u[3];
            (s * 3.0 - d * 2.0).exp() * (u[0] * u[1] + 1.0) / (u[2] * u[3] + 2.0)
        };
        let poles4 = [c(0.0, 0.05), c(0.01, 0.02), c(-0.01, 0.04), c(0.0, 0.0)];
        let got = swap_sum_contour(&poles4, kernel4, &ContourSpec::fourth_order().with_nodes(16), log_t).unwrap();
        let want = swap_reference(&poles4, &kernel4);
        assert!((got - want).norm() < 1e-9 * want.norm(), "{got} vs {want}");
    }

    #[test]
    fn second_main_term_matches_residues() {
        let zeta = zeta();
        let w = SmoothWeight::standard();
        let t_height = 2000.0;
        let alpha1 = c(0.0, 0.3);
        let alpha2 = c(0.0, 0.1);
        let main = second_main_term(alpha1, alpha2, &TwistSpec::trivial(), &w, t_height, &ContourSpec::second_order(), &zeta).unwrap();
        let (t, g) = w.t_nodes(t_height, T_NODES_PER_PIECE);
        let y2: Complex64 = t.iter().zip(&g).map(|(&t, &g)| (ln_y_factor(alpha1, alpha2, t) * 2.0).exp() * g).sum();
        let mass = w.mass() * t_height;
        let expect = zeta.zeta(alpha1 + alpha2 + 1.0).unwrap() * mass + zeta.zeta(1.0 - alpha1 - alpha2).unwrap() * y2;
        assert!((main.value - expect).norm() < 1e-9 * expect.norm(), "{} vs {expect}", main.value);
        assert!(main.rel_change < 1e-10);

        let flipped = second_main_term(alpha2.conj(), alpha1.conj(), &TwistSpec::trivial(), &w, t_height, &ContourSpec::second_order(), &zeta).unwrap();
        assert!((flipped.value - main.value.conj()).norm() < 1e-9 * main.value.norm());
    }

    #[test]
    fn fourth_main_term_matches_generic_engine() {
        let zeta = zeta();
        let w = SmoothWeight::standard();
        let t_height: f64 = 1000.0;
        let log_t = t_height.ln();
        let shifts = [c(0.0, 0.2), c(0.0, 0.15), c(0.0, -0.2), c(0.0, -0.1)];
        let spec = ContourSpec::fourth_order().with_nodes(16);
        let main = fourth_main_term(shifts, &TwistSpec::trivial(), &w, t_height, &spec, &zeta).unwrap();
        let (t, g) = w.t_nodes(t_height, T_NODES_PER_PIECE);
        let poles = [shifts[0], shifts[1], -shifts[2], -shifts[3]];
        let kernel = |u: &[Complex64]| {
            let z = [u[0], u[1], -u[2], -u[3]];
            let a = a_ratio(z, &zeta).unwrap();
            let y: Complex64 = t
                .iter()
                .zip(&g)
                .map(|(&t, &g)| {
                    let ln = ln_y_factor(shifts[0], shifts[2], t)
                        + ln_y_factor(shifts[1], shifts[3], t)
                        + ln_y_factor(u[2], -u[0], t)
                        + ln_y_factor(u[3], -u[1], t);
                    ln.exp() * g
                })
                .sum();
            a * y
        };
        let geom = ContourGeometry::new(&poles, &spec, log_t).unwrap();
        let generic = geom.integrate(|u| {
            let vd = vandermonde(u);
            let den: Complex64 = u.iter().flat_map(|&x| poles.iter().map(move |&p| x - p)).product();
            kernel(u) * vd * vd / den
        }) * 0.25;
        let reference = swap_sum_contour(&poles, kernel, &spec, log_t).unwrap();
        assert!((generic - reference).norm() < 1e-12 * reference.norm());
        assert!((main.value - generic).norm() < 1e-9 * generic.norm(), "{} vs {generic}", main.value);

        let swapped = [shifts[1], shifts[0], shifts[3], shifts[2]];
        let other = fourth_main_term(swapped, &TwistSpec::trivial(), &w, t_height, &spec, &zeta).unwrap();
        assert!((other.value - main.value).norm() < 1e-8 * main.value.norm());
    }

    #[test]
    fn twist_validation() {
        let two = DirichletPoly::from_terms([(1, c(1.0, 0.0)), (3, c(1.0, 0.0))]).unwrap();
        let tw = TwistSpec::new(two.clone(), two, 0.09);
        assert!(tw.validate(1e5, 4).is_err());
        assert!(TwistSpec::new(tw.a.clone(), tw.b.clone(), 0.3).validate(1e5, 2).is_ok());
        assert!(TwistSpec::new(tw.a.clone(), tw.b.clone(), 0.1).validate(1e5, 4).is_err());
    }

    #[test]
    fn oracle_linearity_and_reality() {
        let zeta = zeta();
        let w = SmoothWeight::new(1.0, 1.05, 1.15, 1.2).unwrap();
        let shifts = [c(0.0, 0.2), c(0.0, -0.2)];
        let base = lhs_oracle(500.0, &shifts, &TwistSpec::trivial(), &w, &zeta, 0.01).unwrap();
        assert!(base.value.im.abs() < 1e-10 * base.value.re.abs());
        let doubled = lhs_oracle(500.0, &shifts, &TwistSpec::trivial(), &w.scaled(2.0), &zeta, 0.01).unwrap();
        assert!((doubled.value - base.value * 2.0).norm() < 1e-12 * base.value.norm());
        assert!(lhs_oracle(500.0, &shifts, &TwistSpec::trivial(), &w, &zeta, 0.05).is_err());
    }

    #[test]
    fn oscillatory_integral_small() {
        let w = SmoothWeight::standard();
        let t_height = 1e4;
        let v = oscillatory_integral(c(0.0, 0.0), c(0.0, 0.0), t_height, &w).unwrap();
        assert!(v.norm() <= 5.0 * t_height / t_height.ln());
        assert_eq!(oscillatory_integral(c(0.0, 0.0), c(0.0, 0.0), t_height, &w.scaled(0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn diagonal_main_limits() {
        let w = SmoothWeight::standard();
        let table = PrimeTable::sieve(10_000).unwrap();
        let schedule = BlockSchedule::from_boundaries(ScheduleVariant::LowerSubunit, 1e6, 0.5, &[7.4, 100.0, 10_000.0], &table).unwrap();
        let zero = diagonal_euler_main(0.0, 0.5, -0.5, 1e6, &schedule, &w).unwrap();
        assert_eq!(zero.value, w.mass());
        let d = diagonal_euler_main(0.5, 0.5, -0.5, 1e6, &schedule, &w).unwrap();
        assert!(d.value > w.mass());
        assert!((d.value - d.full_series).abs() < 0.05 * d.full_series);
        let direct = local_factor(3.0, 0.5, 0.5, -0.5, 2).re;
        assert!((direct - 1.275_550_939_924_096_5).abs() < 1e-14);
        let leading = 1.0 + 2.0 * 0.25 * (1.0 + (3.0f64.ln()).cos()) / 3.0;
        assert!((direct - leading).abs() < 0.5 / 9.0);
        assert!(diagonal_euler_main(0.5, 0.01, 0.0, 1e6, &schedule, &w).is_err());
    }
}
