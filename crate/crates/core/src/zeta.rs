//! Riemann zeta evaluation and the gamma-factor apparatus of the approximate
//! functional equations.

use crate::numeric::{ln_gamma, Chebyshev, ComplexSum};
use crate::primes::{multiplicative_block_indexed, sigma_prime_power, PrimeTable};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

const MAX_EM_ORDER: usize = 60;
const RS_MIN_HEIGHT: f64 = 50.0;
const EM_MAX_HEIGHT: f64 = 1e6;
const RS_MAX_HEIGHT: f64 = 1e8;

#[inline]
fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Immutable configuration for ζ evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaEvaluator {
    /// Heights up to this value use Euler–Maclaurin on the critical line.
    pub em_cutoff: f64,
    /// Number of Bernoulli correction terms.
    pub em_order: usize,
    /// Riemann–Siegel correction terms beyond the leading one (0, 1 or 2).
    pub rs_corrections: usize,
    pub target_abs_error: f64,
}

impl Default for ZetaEvaluator {
    fn default() -> Self {
        Self {
            em_cutoff: 1e5,
            em_order: 30,
            rs_corrections: 2,
            target_abs_error: 1e-12,
        }
    }
}

impl ZetaEvaluator {
    /// Evaluator that switches to Riemann–Siegel from `cutoff` upwards.
    pub fn with_cutoff(cutoff: f64) -> Self {
        Self {
            em_cutoff: cutoff,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=MAX_EM_ORDER).contains(&self.em_order) {
            return Err(Error::InvalidParameter(format!("em_order {} outside 4..=60", self.em_order)));
        }
        if self.rs_corrections > 2 {
            return Err(Error::InvalidParameter("rs_corrections must be 0, 1 or 2".into()));
        }
        if !(self.target_abs_error > 0.0) {
            return Err(Error::InvalidParameter("target_abs_error must be positive".into()));
        }
        Ok(())
    }

    /// ζ(s) anywhere off the pole, choosing the method by location.
    pub fn zeta(&self, s: Complex64) -> Result<Complex64> {
        if (s - 1.0).norm() < 1e-12 {
            return Err(Error::PoleAtOne);
        }
        if s.re == 0.5 && s.im.abs() > self.em_cutoff && s.im.abs() >= RS_MIN_HEIGHT {
            return self.critical(s.im);
        }
        if s.re > -1.0 {
            return self.zeta_em(s);
        }
        let k = (s.re / 2.0).round();
        if s.im.abs() < 1e-12 && (s.re - 2.0 * k).abs() < 1e-12 {
            return Ok(c(0.0, 0.0));
        }
        Ok(lambda_chi(s)? * self.zeta_em(1.0 - s)?)
    }

    /// ζ(1/2 + it) for any real t.
    pub fn critical(&self, t: f64) -> Result<Complex64> {
        if t < 0.0 {
            return Ok(self.critical(-t)?.conj());
        }
        if t < RS_MIN_HEIGHT || t <= self.em_cutoff {
            self.zeta_em(c(0.5, t))
        } else {
            self.zeta_rs(t)
        }
    }

    /// |ζ(1/2 + it)|, avoiding the phase factor on the Riemann–Siegel path.
    pub fn critical_abs(&self, t: f64) -> Result<f64> {
        let t = t.abs();
        if t < RS_MIN_HEIGHT || t <= self.em_cutoff {
            Ok(self.zeta_em(c(0.5, t))?.norm())
        } else {
            Ok(self.hardy_z(t)?.abs())
        }
    }

    /// Euler–Maclaurin summation.
    pub fn zeta_em(&self, s: Complex64) -> Result<Complex64> {
        if (s - 1.0).norm() < 1e-12 {
            return Err(Error::PoleAtOne);
        }
        if s.im.abs() > EM_MAX_HEIGHT {
            return Err(Error::HeightOutOfRange(s.im));
        }
        if s.re <= -1.0 {
            return Err(Error::OutOfDomain(format!("Re s = {} <= -1", s.re)));
        }
        let n = self.em_terms(s);
        Ok(em_sum(s, n, self.em_order.min(MAX_EM_ORDER)))
    }

    /// Number of direct terms needed for the requested accuracy.
    pub fn em_terms(&self, s: Complex64) -> usize {
        let m = self.em_order.min(MAX_EM_ORDER);
        let coef = bernoulli_ratios()[m + 1].abs();
        let mut ln_est = coef.ln();
        for j in 0..=2 * m {
            ln_est += (s + j as f64).norm().ln();
        }
        let decay = s.re + (2 * m + 1) as f64;
        ln_est += ((s + (2 * m + 1) as f64).norm() / decay).ln();
        let ln_n = (ln_est - self.target_abs_error.ln()) / decay;
        let n = ln_n.exp().ceil();
        if n.is_finite() {
            (n as usize).max(10)
        } else {
            10
        }
    }

    /// Riemann–Siegel evaluation of ζ(1/2 + it).
    pub fn zeta_rs(&self, t: f64) -> Result<Complex64> {
        let z = self.hardy_z(t)?;
        let th = theta(t);
        Ok(Complex64::from_polar(z, -th))
    }

    /// Hardy's Z(t) by the Riemann–Siegel formula.
    pub fn hardy_z(&self, t: f64) -> Result<f64> {
        if t < RS_MIN_HEIGHT {
            return Err(Error::HeightTooLow(t));
        }
        if t > RS_MAX_HEIGHT {
            return Err(Error::HeightOutOfRange(t));
        }
        let a = (t / (2.0 * PI)).sqrt();
        let n = a.floor() as usize;
        let p = a - n as f64;
        let th = theta(t);
        let logs = log_table(n);
        let mut sum = 0.0;
        for k in 1..=n {
            let (ln_k, inv_sqrt) = logs[k];
            sum += inv_sqrt * (th - t * ln_k).cos();
        }
        let coeffs = rs_coefficients();
        let mut corr = coeffs[0].eval(p);
        let mut scale = 1.0;
        for coeff in coeffs.iter().take(self.rs_corrections + 1).skip(1) {
            scale /= a;
            corr += coeff.eval(p) * scale;
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        Ok(2.0 * sum + sign * corr / a.sqrt())
    }
}

fn em_sum(s: Complex64, n: usize, order: usize) -> Complex64 {
    let mut acc = ComplexSum::new();
    for k in (2..n).rev() {
        acc.add((-s * (k as f64).ln()).exp());
    }
    acc.add(c(1.0, 0.0));
    let nf = n as f64;
    let ln_n = nf.ln();
    let n_pow = (-s * ln_n).exp();
    acc.add(n_pow * nf / (s - 1.0));
    acc.add(n_pow * 0.5);
    let ratios = bernoulli_ratios();
    let mut factor = n_pow / nf;
    let mut poch = s;
    acc.add(poch * factor * ratios[1]);
    for k in 2..=order {
        let j = (2 * k) as f64;
        poch *= (s + (j - 3.0)) * (s + (j - 2.0));
        factor /= nf * nf;
        acc.add(poch * factor * ratios[k]);
    }
    acc.value()
}

/// B_{2k}/(2k)! for k = 0..=MAX_EM_ORDER + 1.
fn bernoulli_ratios() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = vec![1.0];
        for k in 1..=MAX_EM_ORDER + 1 {
            let zeta_2k = if k == 1 { PI * PI / 6.0 } else { zeta_even(k) };
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let ln_mag = (2.0 * zeta_2k).ln() - 2.0 * k as f64 * (2.0 * PI).ln();
            out.push(sign * ln_mag.exp());
        }
        out
    })
}

fn zeta_even(k: usize) -> f64 {
    let p = (2 * k) as f64;
    let n = 1000usize;
    let mut s = 0.0;
    for j in (1..n).rev() {
        s += (j as f64).powf(-p);
    }
    let nf = n as f64;
    s + nf.powf(1.0 - p) / (p - 1.0) + 0.5 * nf.powf(-p) + p * nf.powf(-p - 1.0) / 12.0
}

/// (log n, n^{-1/2}) for n = 0..=len, indexed by n.
fn log_table(len: usize) -> std::borrow::Cow<'static, [(f64, f64)]> {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (0..=5000usize)
            .map(|k| {
                let x = k.max(1) as f64;
                (x.ln(), 1.0 / x.sqrt())
            })
            .collect()
    });
    if len < table.len() {
        std::borrow::Cow::Borrowed(&table[..=len])
    } else {
        std::borrow::Cow::Owned(
            (0..=len)
                .map(|k| {
                    let x = k.max(1) as f64;
                    (x.ln(), 1.0 / x.sqrt())
                })
                .collect(),
        )
    }
}

/// Riemann–Siegel theta function.
pub fn theta(t: f64) -> f64 {
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    0.5 * t * (t / (2.0 * PI)).ln() - 0.5 * t - PI / 8.0
        + inv * (1.0 / 48.0 + inv2 * (7.0 / 5760.0 + inv2 * (31.0 / 80640.0 + inv2 * 127.0 / 430080.0)))
}

fn psi(z: Complex64) -> Complex64 {
    (2.0 * PI * (z * z - z - 1.0 / 16.0)).cos() / (2.0 * PI * z).cos()
}

/// Ψ, Ψ'', Ψ''' and Ψ⁽⁶⁾ at real p via Cauchy integrals on a circle.
fn psi_derivatives(p: f64) -> [f64; 4] {
    const NODES: usize = 64;
    const RADIUS: f64 = 0.25;
    let orders = [0usize, 2, 3, 6];
    let mut acc = [c(0.0, 0.0); 4];
    for j in 0..NODES {
        let phi = 2.0 * PI * (j as f64 + 0.5) / NODES as f64;
        let e = Complex64::from_polar(1.0, phi);
        let f = psi(p + e * RADIUS);
        for (slot, &k) in acc.iter_mut().zip(&orders) {
            *slot += f * Complex64::from_polar(1.0, -(k as f64) * phi);
        }
    }
    let mut out = [0.0; 4];
    for (i, &k) in orders.iter().enumerate() {
        let fact: f64 = (1..=k).map(|x| x as f64).product();
        out[i] = fact / (RADIUS.powi(k as i32) * NODES as f64) * acc[i].re;
    }
    out
}

fn rs_coefficients() -> &'static [Chebyshev; 3] {
    static TABLE: OnceLock<[Chebyshev; 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let pi2 = PI * PI;
        [
            Chebyshev::fit(|p| psi_derivatives(p)[0], 0.0, 1.0, 48),
            Chebyshev::fit(|p| -psi_derivatives(p)[2] / (96.0 * pi2), 0.0, 1.0, 48),
            Chebyshev::fit(
                |p| {
                    let d = psi_derivatives(p);
                    d[1] / (64.0 * pi2) + d[3] / (18432.0 * pi2 * pi2)
                },
                0.0,
                1.0,
                48,
            ),
        ]
    })
}

/// λ(s) = π^{s−1/2} Γ((1−s)/2) / Γ(s/2), so that ζ(s) = λ(s) ζ(1−s).
pub fn lambda_chi(s: Complex64) -> Result<Complex64> {
    let upper = ln_gamma((1.0 - s) * 0.5)?;
    let lower = ln_gamma(s * 0.5)?;
    Ok(((s - 0.5) * PI.ln() + upper - lower).exp())
}

/// λ-values, their product X and the symmetrizing factor Y at one height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaFactors {
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub t: f64,
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    pub x: Complex64,
    pub y: Complex64,
}

fn check_shift(alpha: Complex64, t: f64) -> Result<()> {
    if alpha.im.abs() >= t / 10.0 {
        return Err(Error::ShiftTooLarge { shift: alpha.im, t });
    }
    Ok(())
}

/// log Y_{a,b,t}; Y_{a,b,t}^2 = X_{a,b,t}(1 + O(1/t)) and Y_{a,b,t} Y_{−b,−a,t} = 1.
pub fn ln_y_factor(a: Complex64, b: Complex64, t: f64) -> Complex64 {
    let i = Complex64::i();
    let two_pi = c(2.0 * PI, 0.0);
    let l1 = (two_pi / (t - i * a)).ln();
    let l2 = (two_pi / (t + i * b)).ln();
    0.5 * ((a + i * t) * l1 + (b - i * t) * l2 + a + b)
}

pub fn y_factor(a: Complex64, b: Complex64, t: f64) -> Complex64 {
    ln_y_factor(a, b, t).exp()
}

pub fn gamma_factor_pair(alpha1: Complex64, alpha2: Complex64, t: f64) -> Result<GammaFactors> {
    if t < 10.0 {
        return Err(Error::HeightTooLow(t));
    }
    check_shift(alpha1, t)?;
    check_shift(alpha2, t)?;
    let lambda1 = lambda_chi(c(0.5, t) + alpha1)?;
    let lambda2 = lambda_chi(c(0.5, -t) + alpha2)?;
    Ok(GammaFactors {
        alpha1,
        alpha2,
        t,
        lambda1,
        lambda2,
        x: lambda1 * lambda2,
        y: y_factor(alpha1, alpha2, t),
    })
}

/// X̃ = λ(1/2 + α1 + it) λ(1/2 + α2 + it).
pub fn same_sign_gamma(alpha1: Complex64, alpha2: Complex64, t: f64) -> Result<Complex64> {
    if t < 10.0 {
        return Err(Error::HeightTooLow(t));
    }
    check_shift(alpha1, t)?;
    check_shift(alpha2, t)?;
    Ok(lambda_chi(c(0.5, t) + alpha1)? * lambda_chi(c(0.5, t) + alpha2)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelVariant {
    OppositeSign,
    SameSign,
}

/// Parameters of the V kernel contour integral on Re s = `line_abscissa`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VKernelSpec {
    pub shifts: Vec<Complex64>,
    pub variant: KernelVariant,
    pub line_abscissa: f64,
    pub truncation: f64,
    pub step: f64,
    /// Drop G factors whose shift sum vanishes instead of rejecting them.
    pub drop_degenerate: bool,
}

impl VKernelSpec {
    pub fn opposite(shifts: &[Complex64]) -> Self {
        Self {
            shifts: shifts.to_vec(),
            variant: KernelVariant::OppositeSign,
            line_abscissa: 1.0,
            truncation: 12.0,
            step: 0.05,
            drop_degenerate: false,
        }
    }

    pub fn same_sign(alpha1: Complex64, alpha2: Complex64) -> Self {
        Self {
            variant: KernelVariant::SameSign,
            ..Self::opposite(&[alpha1, alpha2])
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.variant, self.shifts.len()) {
            (KernelVariant::OppositeSign, 2 | 4) | (KernelVariant::SameSign, 2) => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "{:?} kernel with {} shifts",
                    self.variant,
                    self.shifts.len()
                )))
            }
        }
        if self.truncation < 10.0 || self.step > 0.1 || self.step <= 0.0 || self.line_abscissa <= 0.0 {
            return Err(Error::InvalidParameter("kernel needs U >= 10, 0 < step <= 0.1, abscissa > 0".into()));
        }
        Ok(())
    }

    fn g_factor_sums(&self) -> Result<Vec<Complex64>> {
        let a = &self.shifts;
        let sums = match (self.variant, a.len()) {
            (KernelVariant::SameSign, _) => vec![],
            (_, 2) => vec![a[0] + a[1]],
            _ => vec![a[0] + a[2], a[0] + a[3], a[1] + a[2], a[1] + a[3]],
        };
        let mut kept = Vec::new();
        for s in sums {
            if s.norm() < 1e-14 {
                if !self.drop_degenerate {
                    return Err(Error::DegenerateShifts(format!("{s}")));
                }
            } else {
                kept.push(s);
            }
        }
        Ok(kept)
    }

    /// Orders of growth in t: V(x, t) is essentially 1 up to x ≈ (t/2π)^order.
    pub fn order(&self) -> usize {
        self.shifts.len() / 2
    }

    /// Gamma-ratio pairs (shift, sign of t) entering g(s, t).
    fn gamma_args(&self) -> Vec<(Complex64, f64)> {
        let a = &self.shifts;
        match (self.variant, a.len()) {
            (KernelVariant::SameSign, _) => vec![(a[0], 1.0), (a[1], 1.0)],
            (_, 2) => vec![(a[0], 1.0), (a[1], -1.0)],
            _ => vec![(a[0], 1.0), (a[2], -1.0), (a[1], 1.0), (a[3], -1.0)],
        }
    }
}

/// Trapezoid nodes s_k and weights c_k with V(x) = Σ c_k x^{-s_k}.
#[derive(Clone, Debug)]
pub struct VKernel {
    nodes: Vec<(Complex64, Complex64)>,
}

impl VKernel {
    pub fn new(spec: &VKernelSpec, t: f64) -> Result<Self> {
        Self::with_step(spec, t, spec.step)
    }

    fn with_step(spec: &VKernelSpec, t: f64, step: f64) -> Result<Self> {
        spec.validate()?;
        let sums = spec.g_factor_sums()?;
        let args: Vec<(Complex64, f64)> = spec.gamma_args();
        let mut base = c(0.0, 0.0);
        for &(alpha, sign) in &args {
            base += ln_gamma((c(0.5, sign * t) + alpha) * 0.5)?;
        }
        let half = (spec.truncation / step).round() as i64;
        let mut nodes = Vec::with_capacity(2 * half as usize + 1);
        for k in -half..=half {
            let s = c(spec.line_abscissa, k as f64 * step);
            let mut ln_g = -(args.len() as f64 / 2.0) * s * PI.ln() - base;
            for &(alpha, sign) in &args {
                ln_g += ln_gamma((c(0.5, sign * t) + alpha + s) * 0.5)?;
            }
            let mut g_poly = c(1.0, 0.0);
            for &sum in &sums {
                let r = 2.0 * s / sum;
                g_poly *= 1.0 - r * r;
            }
            let weight = (s * s + ln_g).exp() * g_poly / s * (step / (2.0 * PI));
            nodes.push((s, weight));
        }
        Ok(Self { nodes })
    }

    /// V at log x = y.
    pub fn eval_log(&self, y: f64) -> Complex64 {
        self.nodes.iter().map(|&(s, w)| w * (-s * y).exp()).sum()
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.eval_log(x.ln())
    }

    fn coarse_eval_log(&self, y: f64) -> Complex64 {
        let mid = self.nodes.len() / 2;
        self.nodes
            .iter()
            .enumerate()
            .filter(|(k, _)| (k % 2) == (mid % 2))
            .map(|(_, &(s, w))| 2.0 * w * (-s * y).exp())
            .sum()
    }

    /// Tabulate V and dV/dy on an equally spaced grid in y = log x.
    pub fn tabulate(&self, y_hi: f64, dy: f64) -> VTable {
        let n = (y_hi / dy).ceil() as usize + 2;
        let mut vals = vec![c(0.0, 0.0); n];
        let mut ders = vec![c(0.0, 0.0); n];
        const ANCHOR: usize = 256;
        for &(s, w) in &self.nodes {
            let step = (-s * dy).exp();
            let mut cur = w;
            for i in 0..n {
                if i % ANCHOR == 0 {
                    cur = w * (-s * (i as f64 * dy)).exp();
                }
                vals[i] += cur;
                ders[i] -= s * cur;
                cur *= step;
            }
        }
        VTable { dy, vals, ders }
    }
}

/// Evaluate V(x, t) with a node-doubling convergence check.
pub fn v_kernel(x: f64, t: f64, spec: &VKernelSpec) -> Result<Complex64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("x = {x} must be positive")));
    }
    if t < RS_MIN_HEIGHT {
        return Err(Error::HeightTooLow(t));
    }
    let fine = VKernel::with_step(spec, t, spec.step / 2.0)?;
    let y = x.ln();
    let v_fine = fine.eval_log(y);
    let v_coarse = fine.coarse_eval_log(y);
    if (v_fine - v_coarse).norm() > 1e-8 {
        return Err(Error::QuadratureNotConverged(format!(
            "V kernel at x = {x}, t = {t}: change {:e}",
            (v_fine - v_coarse).norm()
        )));
    }
    Ok(v_fine)
}

/// Cubic Hermite table of V over y = log x ≥ 0.
#[derive(Clone, Debug)]
pub struct VTable {
    dy: f64,
    vals: Vec<Complex64>,
    ders: Vec<Complex64>,
}

impl VTable {
    #[inline]
    pub fn eval(&self, y: f64) -> Complex64 {
        let u = y / self.dy;
        let i = (u as usize).min(self.vals.len() - 2);
        let tau = u - i as f64;
        let tau2 = tau * tau;
        let tau3 = tau2 * tau;
        let h00 = 2.0 * tau3 - 3.0 * tau2 + 1.0;
        let h10 = tau3 - 2.0 * tau2 + tau;
        let h01 = -2.0 * tau3 + 3.0 * tau2;
        let h11 = tau3 - tau2;
        self.vals[i] * h00 + self.vals[i + 1] * h01 + (self.ders[i] * h10 + self.ders[i + 1] * h11) * self.dy
    }

    /// Smallest tabulated y beyond which |V| stays below `tol`.
    pub fn tail_start(&self, tol: f64) -> f64 {
        let mut idx = self.vals.len() - 1;
        while idx > 0 && self.vals[idx - 1].norm() <= tol {
            idx -= 1;
        }
        idx as f64 * self.dy
    }

    /// max |V(y')| over tabulated y' ≥ y.
    pub fn tail_bound(&self, y: f64) -> f64 {
        let start = ((y / self.dy).floor() as usize).min(self.vals.len() - 1);
        self.vals[start..].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn y_max(&self) -> f64 {
        (self.vals.len() - 1) as f64 * self.dy
    }
}

/// Options for the approximate-functional-equation residual checks.
#[derive(Clone, Copy, Debug)]
pub struct AfeOptions {
    /// Target for |V| beyond the truncation point.
    pub tail: f64,
    /// Hard cap on mn.
    pub max_terms: u64,
    /// Grid spacing of the V table in log x.
    pub dy: f64,
    /// Long-index block length for streaming sums.
    pub block: usize,
}

impl Default for AfeOptions {
    fn default() -> Self {
        Self {
            tail: 1e-6,
            max_terms: 1_000_000_000,
            dy: 0.004,
            block: 1 << 15,
        }
    }
}

/// Both sides of an approximate functional equation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AfeReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub terms: u64,
    pub tail_bound: f64,
}

impl AfeReport {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).norm()
    }
}

struct PreparedSum {
    table: VTable,
    k_max: u64,
    tail_bound: f64,
}

fn prepare_sum(spec: &VKernelSpec, t: f64, opts: &AfeOptions) -> Result<PreparedSum> {
    let kernel = VKernel::new(spec, t)?;
    let y0 = spec.order() as f64 * (t / (2.0 * PI)).ln().max(0.0);
    let table = kernel.tabulate(y0 + 40.0, opts.dy);
    let y_tail = table.tail_start(opts.tail);
    let cap = opts.max_terms as f64;
    let (k_max, tail_bound) = if y_tail.exp() > cap {
        let bound = table.tail_bound(cap.ln());
        if bound > 1e-6 {
            return Err(Error::TruncationTooShort(bound));
        }
        (opts.max_terms, bound)
    } else {
        (y_tail.exp().ceil() as u64, table.tail_bound(y_tail))
    };
    Ok(PreparedSum {
        table,
        k_max: k_max.max(1),
        tail_bound,
    })
}

/// Σ_{mn ≤ K} a_m b_n V(log m + log n) by the hyperbola method, streaming the
/// long index in blocks. `coeffs(start, len)` returns (a_j, b_j) for j = start..start+len.
fn hyperbola_sum<F>(prep: &PreparedSum, block: usize, coeffs: F) -> Complex64
where
    F: Fn(u64, usize) -> (Vec<Complex64>, Vec<Complex64>) + Sync,
{
    let k_max = prep.k_max;
    let r = (k_max as f64).sqrt().floor() as u64;
    let r = if (r + 1) * (r + 1) <= k_max { r + 1 } else if r * r > k_max { r - 1 } else { r };
    let (short_a, short_b) = coeffs(1, r as usize);
    let short_ln: Vec<f64> = (1..=r).map(|i| (i as f64).ln()).collect();
    let n_blocks = k_max.div_ceil(block as u64);
    let parts: Vec<Complex64> = (0..n_blocks)
        .into_par_iter()
        .map(|bi| {
            let lo = 1 + bi * block as u64;
            let hi = (lo + block as u64 - 1).min(k_max);
            let len = (hi - lo + 1) as usize;
            let (long_a, long_b) = coeffs(lo, len);
            let long_ln: Vec<f64> = (lo..=hi).map(|j| (j as f64).ln()).collect();
            let mut total = ComplexSum::new();
            for i in 1..=r.min(k_max / lo) {
                let j_hi = (k_max / i).min(hi);
                let j_lo = lo.max(i);
                if j_lo > j_hi {
                    continue;
                }
                let li = short_ln[(i - 1) as usize];
                let mut acc_b = c(0.0, 0.0);
                let mut acc_a = c(0.0, 0.0);
                for j in j_lo..=j_hi {
                    let idx = (j - lo) as usize;
                    let v = prep.table.eval(li + long_ln[idx]);
                    acc_b += long_b[idx] * v;
                    if j > i {
                        acc_a += long_a[idx] * v;
                    }
                }
                let ii = (i - 1) as usize;
                total.add(short_a[ii] * acc_b + short_b[ii] * acc_a);
            }
            total.value()
        })
        .collect();
    parts.into_iter().collect::<ComplexSum>().value()
}

/// Values of a twisted multiplicative coefficient f(p^e) p^{−e·twist}, cached for
/// primes up to √K so that only the large prime factor of each n costs an exponential.
struct PowerCache<'a, F> {
    primes: &'a PrimeTable,
    small: Vec<Vec<Complex64>>,
    twist: Complex64,
    f: F,
}

impl<'a, F> PowerCache<'a, F>
where
    F: Fn(u64, u32) -> Complex64 + Sync,
{
    fn new(primes: &'a PrimeTable, k_max: u64, twist: Complex64, f: F) -> Self {
        let small = primes
            .primes
            .iter()
            .map(|&p| {
                let mut row = vec![c(1.0, 0.0)];
                let mut pe = 1u64;
                let mut e = 0;
                while pe <= k_max / p {
                    pe *= p;
                    e += 1;
                    row.push(f(p, e) * (-twist * (e as f64 * (p as f64).ln())).exp());
                }
                row
            })
            .collect();
        Self { primes, small, twist, f }
    }

    fn direct(&self, p: u64, e: u32) -> Complex64 {
        (self.f)(p, e) * (-self.twist * (e as f64 * (p as f64).ln())).exp()
    }

    fn block(&self, lo: u64, len: usize) -> Vec<Complex64> {
        multiplicative_block_indexed(
            self.primes,
            lo,
            len,
            |i, e| match self.small[i].get(e as usize) {
                Some(&v) => v,
                None => self.direct(self.primes.primes[i], e),
            },
            |r| self.direct(r, 1),
        )
    }
}

fn sieve_for(k_max: u64) -> Result<PrimeTable> {
    PrimeTable::sieve(((k_max as f64).sqrt() as u64 + 2).max(2))
}

fn check_afe_shift(alpha: Complex64, t: f64) -> Result<()> {
    let lt = t.ln();
    if alpha.im.abs() > lt * lt {
        return Err(Error::ShiftTooLarge { shift: alpha.im, t });
    }
    Ok(())
}

/// Both sides of the two-factor opposite-sign approximate functional equation.
pub fn afe_pair_report(
    t: f64,
    alpha1: Complex64,
    alpha2: Complex64,
    eval: &ZetaEvaluator,
    opts: &AfeOptions,
) -> Result<AfeReport> {
    if !(50.0..=1e5).contains(&t) {
        return Err(Error::HeightOutOfRange(t));
    }
    check_afe_shift(alpha1, t)?;
    check_afe_shift(alpha2, t)?;
    let lhs = eval.zeta(c(0.5, t) + alpha1)? * eval.zeta(c(0.5, -t) + alpha2)?;
    let x = gamma_factor_pair(alpha1, alpha2, t)?.x;
    let it = c(0.0, t);
    let mut spec = VKernelSpec::opposite(&[alpha1, alpha2]);
    spec.drop_degenerate = true;
    let first = prepare_sum(&spec, t, opts)?;
    spec.shifts = vec![-alpha2, -alpha1];
    let second = prepare_sum(&spec, t, opts)?;
    let primes = sieve_for(first.k_max.max(second.k_max))?;
    let one = |_: u64, _: u32| c(1.0, 0.0);
    let coeffs = |k_max: u64, wa: Complex64, wb: Complex64| {
        (PowerCache::new(&primes, k_max, wa, one), PowerCache::new(&primes, k_max, wb, one))
    };
    let (ca, cb) = coeffs(first.k_max, 0.5 + alpha1 + it, 0.5 + alpha2 - it);
    let s1 = hyperbola_sum(&first, opts.block, |lo, len| (ca.block(lo, len), cb.block(lo, len)));
    let (ca, cb) = coeffs(second.k_max, 0.5 - alpha2 + it, 0.5 - alpha1 - it);
    let s2 = hyperbola_sum(&second, opts.block, |lo, len| (ca.block(lo, len), cb.block(lo, len)));
    Ok(AfeReport {
        lhs,
        rhs: s1 + x * s2,
        terms: first.k_max.max(second.k_max),
        tail_bound: first.tail_bound.max(second.tail_bound),
    })
}

pub fn afe_pair_residual(t: f64, alpha1: Complex64, alpha2: Complex64, eval: &ZetaEvaluator) -> Result<f64> {
    Ok(afe_pair_report(t, alpha1, alpha2, eval, &AfeOptions::default())?.residual())
}

/// Both sides of the four-factor approximate functional equation.
pub fn afe_quad_report(t: f64, shifts: [Complex64; 4], eval: &ZetaEvaluator, opts: &AfeOptions) -> Result<AfeReport> {
    if !(50.0..=5000.0).contains(&t) {
        return Err(Error::HeightOutOfRange(t));
    }
    for &a in &shifts {
        check_afe_shift(a, t)?;
    }
    let ordered = |x: Complex64, y: Complex64| {
        if (x.re, x.im) <= (y.re, y.im) {
            (x, y)
        } else {
            (y, x)
        }
    };
    let ((a1, a2), (a3, a4)) = (ordered(shifts[0], shifts[1]), ordered(shifts[2], shifts[3]));
    let shifts = [a1, a2, a3, a4];
    let lhs = eval.zeta(c(0.5, t) + a1)?
        * eval.zeta(c(0.5, t) + a2)?
        * eval.zeta(c(0.5, -t) + a3)?
        * eval.zeta(c(0.5, -t) + a4)?;
    let x = gamma_factor_pair(a1, a3, t)?.x * gamma_factor_pair(a2, a4, t)?.x;
    let it = c(0.0, t);
    let half = c(0.5, 0.0);
    let mut spec = VKernelSpec::opposite(&shifts);
    spec.drop_degenerate = true;
    let first = prepare_sum(&spec, t, opts)?;
    spec.shifts = vec![-a3, -a4, -a1, -a2];
    let second = prepare_sum(&spec, t, opts)?;
    let k_max = first.k_max.max(second.k_max);
    let primes = sieve_for(k_max)?;
    let sigma = |z1: Complex64, z2: Complex64, twist: Complex64, k: u64| {
        PowerCache::new(&primes, k, twist, move |p, e| sigma_prime_power(z1, z2, p, e))
    };
    let (ca, cb) = (sigma(a1, a2, half + it, first.k_max), sigma(a3, a4, half - it, first.k_max));
    let s1 = hyperbola_sum(&first, opts.block, |lo, len| (ca.block(lo, len), cb.block(lo, len)));
    let (ca, cb) = (sigma(-a3, -a4, half + it, second.k_max), sigma(-a1, -a2, half - it, second.k_max));
    let s2 = hyperbola_sum(&second, opts.block, |lo, len| (ca.block(lo, len), cb.block(lo, len)));
    Ok(AfeReport {
        lhs,
        rhs: s1 + x * s2,
        terms: k_max,
        tail_bound: first.tail_bound.max(second.tail_bound),
    })
}

pub fn afe_quad_residual(t: f64, shifts: [Complex64; 4], eval: &ZetaEvaluator) -> Result<f64> {
    Ok(afe_quad_report(t, shifts, eval, &AfeOptions::default())?.residual())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zeta_two_and_half() {
        let ev = ZetaEvaluator::default();
        let z2 = ev.zeta_em(c(2.0, 0.0)).unwrap();
        assert!(close(z2, c(PI * PI / 6.0, 0.0), 1e-14));
        let zh = ev.zeta_em(c(0.5, 0.0)).unwrap();
        assert!(close(zh, c(-1.460_354_508_809_586_8, 0.0), 1e-13));
        assert!(matches!(ev.zeta_em(c(1.0, 0.0)), Err(Error::PoleAtOne)));
        assert!(matches!(ev.zeta_em(c(0.5, 2e6)), Err(Error::HeightOutOfRange(_))));
    }

    #[test]
    fn zeta_one_plus_i_two_truncations_agree() {
        let mut ev = ZetaEvaluator::default();
        let a = ev.zeta_em(c(1.0, 1.0)).unwrap();
        ev.target_abs_error = 1e-15;
        ev.em_order = 8;
        let b = ev.zeta_em(c(1.0, 1.0)).unwrap();
        assert!(close(a, b, 1e-10));
        // ζ(1+i) = 0.5821580597520036 - 0.9268485643308071i
        assert!(close(a, c(0.582_158_059_752_003_6, -0.926_848_564_330_807_1), 1e-12));
    }

    #[test]
    fn zeta_negative_axis_by_reflection() {
        let ev = ZetaEvaluator::default();
        assert!(close(ev.zeta(c(-1.0, 0.0)).unwrap(), c(-1.0 / 12.0, 0.0), 1e-13));
        assert!(close(ev.zeta(c(-2.0, 0.0)).unwrap(), c(0.0, 0.0), 1e-15));
        assert!(close(ev.zeta(c(-3.0, 0.0)).unwrap(), c(1.0 / 120.0, 0.0), 1e-13));
        let s = c(-1.7, 3.2);
        let via_em = ev.zeta_em(c(-0.99, 3.2)).unwrap();
        let via_ref = lambda_chi(c(-0.99, 3.2)).unwrap() * ev.zeta_em(c(1.99, -3.2)).unwrap();
        assert!(close(via_em, via_ref, 1e-11));
        assert!(ev.zeta(s).unwrap().norm().is_finite());
    }

    #[test]
    fn riemann_siegel_coefficients_at_zero() {
        // C0(0) = cos(π/8), C1(0) = 0 by symmetry of Ψ about 1/2 ... evaluated directly.
        let c0 = rs_coefficients()[0].eval(0.0);
        assert!((c0 - (PI / 8.0).cos()).abs() < 1e-13);
        let c0_half = rs_coefficients()[0].eval(0.5);
        let direct = psi(c(0.5, 0.0)).re;
        assert!((c0_half - direct).abs() < 1e-13);
    }

    #[test]
    fn riemann_siegel_matches_euler_maclaurin() {
        let ev = ZetaEvaluator::default();
        for &t in &[1000.0, 1234.5, 5000.25, 20_000.0] {
            let rs = ev.zeta_rs(t).unwrap();
            let em = ev.zeta_em(c(0.5, t)).unwrap();
            assert!(close(rs, em, 1e-6), "t = {t}: {rs} vs {em}");
        }
        let low = ZetaEvaluator { rs_corrections: 0, ..ev };
        let err0 = (low.zeta_rs(1000.0).unwrap() - ev.zeta_em(c(0.5, 1000.0)).unwrap()).norm();
        let err2 = (ev.zeta_rs(1000.0).unwrap() - ev.zeta_em(c(0.5, 1000.0)).unwrap()).norm();
        assert!(err2 < err0);
        assert!(matches!(ev.zeta_rs(20.0), Err(Error::HeightTooLow(_))));
    }

    #[test]
    fn first_zero_through_fallback() {
        let ev = ZetaEvaluator::default();
        let z = ev.critical(14.134_725_141_734_693).unwrap();
        assert!(z.norm() < 1e-4);
        let rs = ev.zeta_rs(1e6).unwrap();
        let neg = ZetaEvaluator::with_cutoff(100.0).critical(-1e6).unwrap();
        assert!(close(rs, neg.conj(), 1e-15));
    }

    #[test]
    fn lambda_properties() {
        assert!(close(lambda_chi(c(0.5, 0.0)).unwrap(), c(1.0, 0.0), 1e-15));
        let s = c(0.3, 7.0);
        let prod = lambda_chi(s).unwrap() * lambda_chi(1.0 - s).unwrap();
        assert!(close(prod, c(1.0, 0.0), 1e-10));
        let ev = ZetaEvaluator::default();
        let s = c(0.5, 100.0);
        let lhs = ev.zeta(s).unwrap();
        let rhs = lambda_chi(s).unwrap() * ev.zeta(1.0 - s).unwrap();
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-8);
        assert!(matches!(lambda_chi(c(0.0, 0.0)), Err(Error::GammaPole(_))));
        assert!(matches!(lambda_chi(c(3.0, 0.0)), Err(Error::GammaPole(_))));
    }

    #[test]
    fn gamma_factor_examples() {
        let g = gamma_factor_pair(c(0.0, 0.0), c(0.0, 0.0), 1000.0).unwrap();
        assert!((g.x.norm() - 1.0).abs() < 1e-10);
        assert_eq!(g.x, g.lambda1 * g.lambda2);
        let t = 1e4;
        let g = gamma_factor_pair(c(0.0, 0.5), c(0.0, -0.5), t).unwrap();
        assert!((g.x / (g.y * g.y) - 1.0).norm() <= 10.0 / t);
        let a = c(1.0 / 1e6f64.ln(), 0.0);
        let y = y_factor(a, a, 1e6);
        let y_inv = y_factor(-a, -a, 1e6);
        assert!(y.norm() > 0.0);
        assert!(close(y.inv(), y_inv, 1e-10 * y_inv.norm()));
        assert!(matches!(
            gamma_factor_pair(c(0.0, 200.0), c(0.0, 0.0), 1000.0),
            Err(Error::ShiftTooLarge { .. })
        ));
    }

    #[test]
    fn same_sign_examples() {
        let x = same_sign_gamma(c(0.0, 0.0), c(0.0, 0.0), 1000.0).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-10);
        let (a1, a2, t) = (c(0.0, 0.2), c(0.0, -0.2), 1e4);
        let x = same_sign_gamma(a1, a2, t).unwrap();
        assert_eq!(x, lambda_chi(c(0.5, t) + a1).unwrap() * lambda_chi(c(0.5, t) + a2).unwrap());
        let h = 1e-3;
        let phase = |t: f64| same_sign_gamma(c(0.0, 0.0), c(0.0, 0.0), t).unwrap().arg();
        let mut d = phase(t + h) - phase(t - h);
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        let deriv = d / (2.0 * h);
        let expected = -2.0 * (t / (2.0 * PI)).ln();
        assert!((deriv / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn v_kernel_examples() {
        let zero = VKernelSpec {
            drop_degenerate: true,
            ..VKernelSpec::opposite(&[c(0.0, 0.0), c(0.0, 0.0)])
        };
        let v = v_kernel(1.0, 1e4, &zero).unwrap();
        assert!((v - 1.0).norm() < 1e-3);
        let spec = VKernelSpec::opposite(&[c(0.05, 0.3), c(0.02, -0.1)]);
        let v = v_kernel(1e6, 1e3, &spec).unwrap();
        assert!(v.norm() <= 1e-6);
        let wide = VKernelSpec { truncation: 24.0, ..spec.clone() };
        for &x in &[1.0, 50.0, 300.0, 3e3] {
            let a = v_kernel(x, 1e3, &spec).unwrap();
            let b = v_kernel(x, 1e3, &wide).unwrap();
            assert!((a - b).norm() <= 1e-10);
        }
        assert!(matches!(
            VKernel::new(&VKernelSpec::opposite(&[c(0.0, 0.3), c(0.0, -0.3)]), 100.0),
            Err(Error::DegenerateShifts(_))
        ));
    }

    #[test]
    fn v_table_matches_direct() {
        let spec = VKernelSpec::opposite(&[c(0.01, 0.4), c(-0.02, 0.1)]);
        let kernel = VKernel::new(&spec, 500.0).unwrap();
        let table = kernel.tabulate(20.0, 0.004);
        for k in 0..200 {
            let y = 0.0713 * k as f64;
            assert!((table.eval(y) - kernel.eval_log(y)).norm() < 1e-10, "y = {y}");
        }
    }

    #[test]
    fn afe_pair_examples() {
        let ev = ZetaEvaluator::default();
        let r = afe_pair_residual(500.0, c(0.0, 0.0), c(0.0, 0.0), &ev).unwrap();
        assert!(r <= 1e-4, "{r}");
        let r2 = afe_pair_residual(500.0, c(0.0, 0.3), c(0.0, -0.3), &ev).unwrap();
        assert!(r2 <= 1e-4, "{r2}");
        let r3 = afe_pair_residual(1000.0, c(0.0, 0.0), c(0.0, 0.0), &ev).unwrap();
        assert!(r3 <= 100.0 * r + 1e-8);
    }

    #[test]
    fn afe_quad_examples() {
        let ev = ZetaEvaluator::default();
        let z = c(0.0, 0.0);
        let r = afe_quad_residual(200.0, [z, z, z, z], &ev).unwrap();
        assert!(r <= 1e-3, "{r}");
        let h = c(0.0, 0.5);
        let r = afe_quad_residual(200.0, [h, h, -h, -h], &ev).unwrap();
        assert!(r <= 1e-3, "{r}");
        let shifts = [c(0.01, 0.3), c(-0.02, 0.7), c(0.0, -0.2), c(0.01, 0.4)];
        let opts = AfeOptions { tail: 1e-3, ..AfeOptions::default() };
        let a = afe_quad_report(60.0, shifts, &ev, &opts).unwrap();
        let b = afe_quad_report(60.0, [shifts[1], shifts[0], shifts[2], shifts[3]], &ev, &opts).unwrap();
        assert!((a.rhs - b.rhs).norm() <= 1e-12 * a.rhs.norm().max(1.0));
    }
}
