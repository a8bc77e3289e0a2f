//! Sparse Dirichlet polynomials built from prime blocks.

use crate::numeric::{ln_gamma, CompensatedSum, ComplexSum};
use crate::primes::{g_mult, is_prime, omega_big, BlockSchedule, PrimeTable};
use crate::zeta::ZetaEvaluator;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// Default cap on the support size of intermediate polynomials.
pub const DEFAULT_SUPPORT_BUDGET: usize = 5_000_000;
/// Evaluation points per unit t used by the numeric mean values.
pub const DEFAULT_DENSITY: f64 = 20.0;
/// Explicit constant of the interpolation inequality.
pub const INTERPOLATION_CONSTANT: f64 = 64.0;

/// Σ a_n n^{−s} with strictly ascending support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirichletPoly {
    support: Vec<u64>,
    coeffs: Vec<Complex64>,
    pub length_bound: u64,
}

impl DirichletPoly {
    /// Build from (n, a_n) pairs; duplicates are summed and zero coefficients dropped.
    pub fn from_terms<I: IntoIterator<Item = (u64, Complex64)>>(terms: I) -> Result<Self> {
        let mut map: HashMap<u64, Complex64> = HashMap::new();
        for (n, a) in terms {
            if n == 0 {
                return Err(Error::InvalidParameter("support element 0".into()));
            }
            *map.entry(n).or_default() += a;
        }
        Ok(Self::from_map(map))
    }

    fn from_map(map: HashMap<u64, Complex64>) -> Self {
        let mut terms: Vec<(u64, Complex64)> = map.into_iter().filter(|(_, a)| *a != Complex64::new(0.0, 0.0)).collect();
        terms.sort_unstable_by_key(|&(n, _)| n);
        let length_bound = terms.last().map_or(1, |&(n, _)| n);
        let (support, coeffs) = terms.into_iter().unzip();
        Self { support, coeffs, length_bound }
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        Self {
            support: vec![1],
            coeffs: vec![Complex64::new(1.0, 0.0)],
            length_bound: 1,
        }
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn coeff(&self, n: u64) -> Complex64 {
        self.support
            .binary_search(&n)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.support.iter().copied().zip(self.coeffs.iter().copied())
    }

    /// Multiply each a_n by n^{−ih}.
    pub fn twist(&self, h: f64) -> Self {
        Self {
            support: self.support.clone(),
            coeffs: self
                .iter()
                .map(|(n, a)| a * Complex64::from_polar(1.0, -h * (n as f64).ln()))
                .collect(),
            length_bound: self.length_bound,
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let map = self.iter().map(|(n, a)| (n, a * c)).collect();
        Self::from_map(map)
    }

    /// Sparse product, discarding n above `cap`.
    pub fn mul_capped(&self, other: &Self, cap: u64, budget: usize) -> Result<Self> {
        let mut map: HashMap<u64, Complex64> = HashMap::new();
        for (m, a) in self.iter() {
            for (n, b) in other.iter() {
                let Some(k) = m.checked_mul(n) else { break };
                if k > cap {
                    break;
                }
                *map.entry(k).or_default() += a * b;
            }
            if map.len() > budget {
                return Err(Error::SupportOverflow(map.len()));
            }
        }
        Ok(Self::from_map(map))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.mul_capped(other, u64::MAX, DEFAULT_SUPPORT_BUDGET)
    }

    /// Σ a_n n^{−σ−it}.
    pub fn eval(&self, sigma: f64, t: f64) -> Complex64 {
        self.iter()
            .map(|(n, a)| {
                let ln = (n as f64).ln();
                a * (-sigma * ln).exp() * Complex64::from_polar(1.0, -t * ln)
            })
            .collect::<ComplexSum>()
            .value()
    }

    /// Σ |a_n|² n^{−2σ}.
    pub fn diagonal_mass(&self, sigma: f64) -> f64 {
        self.iter()
            .map(|(n, a)| a.norm_sqr() * (n as f64).powf(-2.0 * sigma))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Two-column (n, re, im) CSV dump.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "n,re,im")?;
        for (n, a) in self.iter() {
            writeln!(out, "{n},{:.16e},{:.16e}", a.re, a.im)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluate at σ + it for every t in the grid, in parallel over grid points.
pub fn eval_grid(poly: &DirichletPoly, sigma: f64, t_grid: &[f64]) -> Vec<Complex64> {
    let terms: Vec<(f64, Complex64)> = poly
        .iter()
        .map(|(n, a)| {
            let ln = (n as f64).ln();
            (ln, a * (-sigma * ln).exp())
        })
        .collect();
    t_grid
        .par_iter()
        .map(|&t| {
            terms
                .iter()
                .map(|&(ln, a)| a * Complex64::from_polar(1.0, -t * ln))
                .collect::<ComplexSum>()
                .value()
        })
        .collect()
}

/// 𝒫_j: the primes of block j with coefficients p^{−i Im(shift)}.
pub fn prime_block_poly(schedule: &BlockSchedule, j: usize, shift: Complex64) -> Result<DirichletPoly> {
    schedule.check_block(j)?;
    let h = shift.im;
    DirichletPoly::from_terms(
        schedule
            .primes(j)
            .iter()
            .map(|&p| (p, Complex64::from_polar(1.0, -h * (p as f64).ln()))),
    )
}

/// Σ_{m ≤ K} (β·poly)^m / m!, keeping only n ≤ `length_cap`.
pub fn truncated_exp(poly: &DirichletPoly, beta: f64, k: u32, length_cap: u64) -> Result<DirichletPoly> {
    truncated_exp_with_budget(poly, beta, k, length_cap, DEFAULT_SUPPORT_BUDGET)
}

pub fn truncated_exp_with_budget(
    poly: &DirichletPoly,
    beta: f64,
    k: u32,
    length_cap: u64,
    budget: usize,
) -> Result<DirichletPoly> {
    if k == 0 {
        return Err(Error::InvalidParameter("truncation order K must be at least 1".into()));
    }
    if let Some(&n) = poly.support().iter().find(|&&n| !is_prime(n)) {
        return Err(Error::NotPrimeSupported(n));
    }
    let base = poly.scale(Complex64::new(beta, 0.0));
    let mut total: HashMap<u64, Complex64> = HashMap::from([(1, Complex64::new(1.0, 0.0))]);
    let mut power = DirichletPoly::one();
    for m in 1..=k {
        power = power
            .mul_capped(&base, length_cap, budget)?
            .scale(Complex64::new(1.0 / m as f64, 0.0));
        if power.is_empty() {
            break;
        }
        for (n, a) in power.iter() {
            *total.entry(n).or_default() += a;
        }
        if total.len() > budget {
            return Err(Error::SupportOverflow(total.len()));
        }
    }
    Ok(DirichletPoly::from_map(total))
}

/// Coefficient of n in 𝒩(s+ih1; α)𝒩(s+ih2; α), computed from the divisor sum
/// Σ_{cd=n} α^{Ω(c)+Ω(d)} g(c)g(d) c^{−ih1} d^{−ih2} with c, d admissible in `base`.
pub fn twisted_coeff_direct(n: u64, alpha: f64, h1: f64, h2: f64, base: &DirichletPoly, table: &PrimeTable) -> Result<Complex64> {
    let factors = table.factorize(n)?;
    let mut divisors = vec![1u64];
    for &(p, e) in &factors {
        let mut next = Vec::with_capacity(divisors.len() * (e as usize + 1));
        for &d in &divisors {
            let mut pk = 1;
            for _ in 0..=e {
                next.push(d * pk);
                pk *= p;
            }
        }
        divisors = next;
    }
    let mut acc = ComplexSum::new();
    for c in divisors {
        let d = n / c;
        if base.coeff(c) == Complex64::new(0.0, 0.0) || base.coeff(d) == Complex64::new(0.0, 0.0) {
            continue;
        }
        let weight = alpha.powi((omega_big(c, table)? + omega_big(d, table)?) as i32) * g_mult(c, table)? * g_mult(d, table)?;
        let phase = -h1 * (c as f64).ln() - h2 * (d as f64).ln();
        acc.add(Complex64::from_polar(weight, phase));
    }
    Ok(acc.value())
}

/// Per-block proxies for one (β, h1, h2) configuration.
#[derive(Clone, Debug)]
pub struct ProxyFamily {
    pub beta: f64,
    pub schedule: BlockSchedule,
    pub h1: f64,
    pub h2: f64,
    pub length_cap: u64,
    /// 𝒫_j, untwisted.
    pub prime_polys: Vec<DirichletPoly>,
    /// 𝒩_j(s; β−1), untwisted.
    pub n_minus: Vec<DirichletPoly>,
    /// 𝒩_j(s; β), untwisted.
    pub n_plus: Vec<DirichletPoly>,
    /// 𝒩_j(s+ih1; β−1)𝒩_j(s+ih2; β−1).
    pub a_twisted: Vec<DirichletPoly>,
    /// 𝒩_j(s+ih1; β)𝒩_j(s+ih2; β).
    pub b_twisted: Vec<DirichletPoly>,
}

impl ProxyFamily {
    pub fn new(schedule: BlockSchedule, beta: f64, h1: f64, h2: f64, length_cap: u64) -> Result<Self> {
        let mut fam = Self {
            beta,
            h1,
            h2,
            length_cap,
            prime_polys: Vec::new(),
            n_minus: Vec::new(),
            n_plus: Vec::new(),
            a_twisted: Vec::new(),
            b_twisted: Vec::new(),
            schedule,
        };
        for j in 1..=fam.schedule.blocks() {
            let p = prime_block_poly(&fam.schedule, j, Complex64::new(0.0, 0.0))?;
            let k = fam.schedule.k_int(j);
            let minus = truncated_exp(&p, beta - 1.0, k, length_cap)?;
            let plus = truncated_exp(&p, beta, k, length_cap)?;
            fam.a_twisted.push(minus.twist(h1).mul(&minus.twist(h2))?);
            fam.b_twisted.push(plus.twist(h1).mul(&plus.twist(h2))?);
            fam.prime_polys.push(p);
            fam.n_minus.push(minus);
            fam.n_plus.push(plus);
        }
        Ok(fam)
    }

    pub fn blocks(&self) -> usize {
        self.prime_polys.len()
    }

    /// Block values at 1/2 + i(t + h).
    pub fn values_at(&self, t: f64, h: f64) -> BlockValues {
        let at = |p: &DirichletPoly| p.eval(0.5, t + h);
        BlockValues {
            prime: self.prime_polys.iter().map(at).collect(),
            minus: self.n_minus.iter().map(at).collect(),
            plus: self.n_plus.iter().map(at).collect(),
        }
    }
}

/// 𝒫_j, 𝒩_j(·; β−1) and 𝒩_j(·; β) evaluated at one point.
#[derive(Clone, Debug)]
pub struct BlockValues {
    pub prime: Vec<Complex64>,
    pub minus: Vec<Complex64>,
    pub plus: Vec<Complex64>,
}

impl BlockValues {
    fn ln_prod(vals: &[Complex64], upto: usize) -> f64 {
        vals[..upto].iter().map(|v| v.norm().ln()).sum()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn block_abs(schedule: &BlockSchedule, j: usize, t: f64, h: f64) -> Result<f64> {
    Ok(prime_block_poly(schedule, j, Complex64::new(0.0, 0.0))?.eval(0.5, t + h).norm())
}

/// ln Q_j from |𝒫_j|, K_j and β.
pub fn ln_q_from_abs(p_abs: f64, k: f64, beta: f64) -> f64 {
    let lead = 2.0 * k * (12.0 * p_abs / k).ln();
    let r_max = (k / beta).floor() as usize;
    let terms: Vec<f64> = (0..=r_max)
        .map(|r| {
            if r == 0 {
                0.0
            } else {
                2.0 * r as f64 * (2.0 * std::f64::consts::E * p_abs / (r as f64 + 1.0)).ln()
            }
        })
        .collect();
    lead + log_sum_exp(&terms)
}

/// ln R_j from |𝒫_j|, K_j and β.
pub fn ln_r_from_abs(p_abs: f64, k: f64, beta: f64) -> f64 {
    2.0 * k * (12.0 * beta * p_abs / k).ln()
}

pub fn ln_q_majorant(schedule: &BlockSchedule, j: usize, t: f64, h: f64) -> Result<f64> {
    schedule.check_block(j)?;
    Ok(ln_q_from_abs(block_abs(schedule, j, t, h)?, schedule.k[j - 1], schedule.beta))
}

pub fn q_majorant(schedule: &BlockSchedule, j: usize, t: f64, h: f64) -> Result<f64> {
    ln_q_majorant(schedule, j, t, h).map(f64::exp)
}

pub fn ln_r_majorant(schedule: &BlockSchedule, j: usize, t: f64, h: f64) -> Result<f64> {
    schedule.check_block(j)?;
    Ok(ln_r_from_abs(block_abs(schedule, j, t, h)?, schedule.k[j - 1], schedule.beta))
}

pub fn r_majorant(schedule: &BlockSchedule, j: usize, t: f64, h: f64) -> Result<f64> {
    ln_r_majorant(schedule, j, t, h).map(f64::exp)
}

/// |e^z − Σ_{m≤K} z^m/m!|, summed directly from the tail.
pub fn trunc_exp_gap(z: Complex64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    let m0 = k as f64 + 1.0;
    let ln_first = m0 * z.ln() - ln_gamma(Complex64::new(m0 + 1.0, 0.0))?;
    let scale = ln_first.re;
    let mut term = Complex64::from_polar(1.0, ln_first.im);
    let mut acc = ComplexSum::new();
    let mut m = m0;
    loop {
        acc.add(term);
        term *= z / (m + 1.0);
        m += 1.0;
        if m > z.norm() && term.norm() <= 1e-18 * acc.value().norm() {
            break;
        }
    }
    Ok((acc.value().norm().ln() + scale).exp())
}

/// Taylor-remainder bound (e|z|/(K+1))^{K+1}/(1 − e|z|/(K+1)), when e|z| < K+1.
pub fn trunc_exp_bound(z: Complex64, k: u32) -> Option<f64> {
    let r = std::f64::consts::E * z.norm() / (k as f64 + 1.0);
    (r < 1.0).then(|| ((k as f64 + 1.0) * r.ln()).exp() / (1.0 - r))
}

/// (1/T)∫_T^{2T} |poly(1/2+it)|² dt by composite Simpson at `density` points per unit t.
pub fn mean_square(poly: &DirichletPoly, t: f64, density: f64) -> f64 {
    let n = ((t * density).ceil() as usize).max(2);
    let n = n + n % 2;
    let h = t / n as f64;
    let terms: Vec<(f64, Complex64)> = poly
        .iter()
        .map(|(m, a)| {
            let ln = (m as f64).ln();
            (ln, a / (m as f64).sqrt())
        })
        .collect();
    const CHUNK: usize = 4096;
    let chunks = (n + 1).div_ceil(CHUNK);
    let parts: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = (lo + CHUNK).min(n + 1);
            let mut rot: Vec<Complex64> = terms
                .iter()
                .map(|&(ln, a)| a * Complex64::from_polar(1.0, -(t + lo as f64 * h) * ln))
                .collect();
            let step: Vec<Complex64> = terms.iter().map(|&(ln, _)| Complex64::from_polar(1.0, -h * ln)).collect();
            let mut acc = CompensatedSum::new();
            for k in lo..hi {
                let v: Complex64 = rot.iter().sum();
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc.add(w * v.norm_sqr());
                for (r, s) in rot.iter_mut().zip(&step) {
                    *r *= s;
                }
            }
            acc.value()
        })
        .collect();
    parts.into_iter().collect::<CompensatedSum>().value() * h / 3.0 / t
}

/// |numeric mean square − Σ|a_n|²/n| on [T, 2T].
pub fn mean_value_gap(poly: &DirichletPoly, t: f64, density: f64) -> Result<f64> {
    if poly.length_bound as f64 > t / 10.0 {
        return Err(Error::LengthExceedsWindow { length: poly.length_bound, limit: t / 10.0 });
    }
    Ok((mean_square(poly, t, density) - poly.diagonal_mass(0.5)).abs())
}

fn prime_support(poly: &DirichletPoly, table: &PrimeTable) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for &n in poly.support() {
        out.extend(table.factorize(n)?.into_iter().map(|(p, _)| p));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Relative gap between the mean square of a product and the product of mean squares.
pub fn splitting_gap(polys: &[DirichletPoly], t: f64) -> Result<f64> {
    splitting_gap_with_density(polys, t, DEFAULT_DENSITY)
}

pub fn splitting_gap_with_density(polys: &[DirichletPoly], t: f64, density: f64) -> Result<f64> {
    if polys.len() <= 1 {
        return Ok(0.0);
    }
    let top = polys.iter().map(|p| p.length_bound).max().unwrap_or(1);
    let table = PrimeTable::sieve(((top as f64).sqrt() as u64 + 2).max(2))?;
    let mut seen: Vec<u64> = Vec::new();
    for poly in polys {
        let primes = prime_support(poly, &table)?;
        if primes.iter().any(|p| seen.binary_search(p).is_ok()) {
            return Err(Error::BlocksNotDisjoint);
        }
        seen.extend(primes);
        seen.sort_unstable();
    }
    let mut product = DirichletPoly::one();
    for poly in polys {
        product = product.mul(poly)?;
    }
    if product.length_bound as f64 > t / 10.0 {
        return Err(Error::LengthExceedsWindow { length: product.length_bound, limit: t / 10.0 });
    }
    let joint = mean_square(&product, t, density);
    let separate: f64 = polys.iter().map(|p| mean_square(p, t, density)).product();
    Ok((joint - separate).abs() / separate)
}

/// Both sides of the interpolation inequality at one t.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationWitness {
    pub lhs: f64,
    pub rhs: f64,
    pub v_star: usize,
}

pub fn interpolation_witness(t: f64, h1: f64, h2: f64, beta: f64, family: &ProxyFamily, zeta: &ZetaEvaluator) -> Result<InterpolationWitness> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta = {beta} outside [0, 1]")));
    }
    let zs = zeta.critical_abs(t + h1)?;
    let zw = zeta.critical_abs(t + h2)?;
    let vs = family.values_at(t, h1);
    let vw = family.values_at(t, h2);
    let ell = family.blocks();
    let p = &family.schedule.p;
    let v_star = (1..=ell)
        .find(|&v| vs.prime[v - 1].norm() > 50.0 * p[v - 1] || vw.prime[v - 1].norm() > 50.0 * p[v - 1])
        .unwrap_or(ell + 1);
    let ln_zz = 2.0 * (zs.ln() + zw.ln());
    let ln_minus = |upto: usize| 2.0 * (BlockValues::ln_prod(&vs.minus, upto) + BlockValues::ln_prod(&vw.minus, upto));
    let ln_plus = |upto: usize| 2.0 * (BlockValues::ln_prod(&vs.plus, upto) + BlockValues::ln_prod(&vw.plus, upto));
    let mut terms = vec![ln_zz + ln_minus(ell), ln_plus(ell)];
    for v in 1..=ell {
        let e = 2.0 * (50.0 * p[v - 1]).ceil();
        let ratio = |x: Complex64| e * (x.norm() / (50.0 * p[v - 1])).ln();
        let ln_sel = log_sum_exp(&[ratio(vs.prime[v - 1]), ratio(vw.prime[v - 1])]);
        terms.push(ln_zz + ln_minus(v - 1) + ln_sel);
        terms.push(ln_plus(v - 1) + ln_sel);
    }
    let lhs = (beta * ln_zz).exp();
    let rhs = INTERPOLATION_CONSTANT * log_sum_exp(&terms).exp();
    Ok(InterpolationWitness { lhs, rhs, v_star })
}

/// Both sides of the pointwise weighted AM–GM form of the Hölder split.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HolderWitness {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn holder_witness_lower(t: f64, h1: f64, h2: f64, beta: f64, family: &ProxyFamily, zeta: &ZetaEvaluator) -> Result<HolderWitness> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    let zz = zeta.critical_abs(t + h1)? * zeta.critical_abs(t + h2)?;
    let vs = family.values_at(t, h1);
    let vw = family.values_at(t, h2);
    let prod = |a: &[Complex64], b: &[Complex64]| a.iter().chain(b).map(|v| v.norm()).product::<f64>();
    let minus = prod(&vs.minus, &vw.minus);
    let plus = prod(&vs.plus, &vw.plus);
    // (G_k, θ_k) with Π G_k^{θ_k} = the integrand and Σ θ_k = 1.
    let parts: Vec<(f64, f64)> = if beta <= 1.0 {
        vec![
            (zz.powf(2.0 * beta), 0.5),
            ((zz * minus).powi(2), (1.0 - beta) / 2.0),
            (minus.powi(2) * plus.powf(2.0 / beta), beta / 2.0),
        ]
    } else {
        let q = 2.0 * beta / (2.0 * beta - 1.0);
        vec![(zz.powf(2.0 * beta), 1.0 / (2.0 * beta)), ((minus * plus).powf(q), 1.0 - 1.0 / (2.0 * beta))]
    };
    let lhs = parts
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(g, w)| g.powf(w))
        .product();
    let rhs = parts.iter().map(|&(g, w)| w * g).sum();
    Ok(HolderWitness { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::ScheduleVariant;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(terms: &[(u64, f64)]) -> DirichletPoly {
        DirichletPoly::from_terms(terms.iter().map(|&(n, a)| (n, c(a, 0.0)))).unwrap()
    }

    fn desk_schedule(beta: f64, bounds: &[f64]) -> BlockSchedule {
        let table = PrimeTable::sieve(10_000).unwrap();
        BlockSchedule::from_boundaries(ScheduleVariant::LowerSubunit, 1e5, beta, bounds, &table).unwrap()
    }

    #[test]
    fn prime_block_examples() {
        let s = desk_schedule(1.0, &[2.0, 10.0, 30.0]);
        let p = prime_block_poly(&s, 1, c(0.0, 0.0)).unwrap();
        assert_eq!(p.support(), &[3, 5, 7]);
        let s = desk_schedule(1.0, &[1.5, 10.0]);
        let p = prime_block_poly(&s, 1, c(0.0, 0.0)).unwrap();
        assert_eq!(p.support(), &[2, 3, 5, 7]);
        assert!(p.coeffs().iter().all(|&a| a == c(1.0, 0.0)));
        let tw = prime_block_poly(&s, 1, c(0.5, 3.7)).unwrap();
        assert!(tw.coeffs().iter().all(|a| (a.norm() - 1.0).abs() < 1e-15));
        assert!((p.eval(1.0, 0.0).re - s.p[0]).abs() < 1e-15);
        assert!(matches!(prime_block_poly(&s, 2, c(0.0, 0.0)), Err(Error::BlockOutOfRange { .. })));
    }

    #[test]
    fn truncated_exp_examples() {
        let e = truncated_exp(&poly(&[(2, 1.0)]), 1.0, 3, 1000).unwrap();
        assert_eq!(e.support(), &[1, 2, 4, 8]);
        for (got, want) in e.coeffs().iter().zip([1.0, 1.0, 0.5, 1.0 / 6.0]) {
            assert!((got.re - want).abs() < 1e-15);
        }
        let e = truncated_exp(&poly(&[(2, 1.0), (3, 1.0)]), 2.0, 2, 1000).unwrap();
        assert!((e.coeff(6) - 4.0).norm() < 1e-14);
        let e = truncated_exp(&poly(&[(2, 1.0), (3, 1.0), (5, 1.0), (7, 1.0)]), 1.0, 4, 10_000).unwrap();
        assert!((e.coeff(210) - 1.0).norm() < 1e-14);
        assert!(matches!(truncated_exp(&poly(&[(4, 1.0)]), 1.0, 2, 100), Err(Error::NotPrimeSupported(4))));
        assert!(matches!(
            truncated_exp_with_budget(&poly(&[(2, 1.0), (3, 1.0), (5, 1.0)]), 1.0, 20, u64::MAX, 50),
            Err(Error::SupportOverflow(_))
        ));
    }

    #[test]
    fn eval_grid_examples() {
        let ones = eval_grid(&DirichletPoly::one(), 0.5, &[0.0, 1.0, 1e5]);
        assert!(ones.iter().all(|&v| v == c(1.0, 0.0)));
        let a = c(0.3, -1.1);
        let p = DirichletPoly::from_terms([(4, a)]).unwrap();
        let t = 17.25;
        let v = eval_grid(&p, 0.5, &[t])[0];
        let want = a * 0.5 * Complex64::from_polar(1.0, -t * 4f64.ln());
        assert!((v - want).norm() < 1e-15);
    }

    #[test]
    fn majorant_examples() {
        assert_eq!(ln_q_from_abs(0.0, 5.0, 0.7).exp(), 0.0);
        let k = 12.0;
        assert!(ln_q_from_abs(k / 12.0, k, 0.5) >= 0.0);
        let beta = 0.8;
        let r = ln_r_from_abs(k / 10.0, k, beta);
        assert!((r - 2.0 * k * (1.2 * beta).ln()).abs() < 1e-10);
    }

    #[test]
    fn trunc_exp_gap_examples() {
        assert_eq!(trunc_exp_gap(c(0.0, 0.0), 5).unwrap(), 0.0);
        let g = trunc_exp_gap(c(1.0, 0.0), 1).unwrap();
        assert!((g - (std::f64::consts::E - 2.0)).abs() < 1e-14);
        let z = c(6.0, 8.0);
        let g = trunc_exp_gap(z, 100).unwrap();
        let bound = trunc_exp_bound(z, 100).unwrap();
        assert!(g <= bound && bound < 1e-30, "{g} {bound}");
    }

    #[test]
    fn mean_value_examples() {
        assert!(mean_value_gap(&DirichletPoly::one(), 1e3, 20.0).unwrap() < 1e-12);
        let p = poly(&[(2, 1.0), (3, 1.0)]);
        let m = mean_square(&p, 1e5, 10.0);
        assert!((m / (0.5 + 1.0 / 3.0) - 1.0).abs() < 0.01);
        assert!(matches!(
            mean_value_gap(&poly(&[(200, 1.0)]), 1e3, 10.0),
            Err(Error::LengthExceedsWindow { .. })
        ));
    }

    #[test]
    fn splitting_examples() {
        assert_eq!(splitting_gap(&[poly(&[(2, 1.0)])], 1e5).unwrap(), 0.0);
        let g = splitting_gap(&[poly(&[(2, 1.0)]), poly(&[(3, 1.0)])], 1e5).unwrap();
        assert!(g <= 0.02);
        assert!(matches!(
            splitting_gap(&[poly(&[(2, 1.0)]), poly(&[(6, 1.0)])], 1e5),
            Err(Error::BlocksNotDisjoint)
        ));
    }

    #[test]
    fn twisted_product_two_paths() {
        let s = desk_schedule(0.7, &[7.5, 12.0, 20.0]);
        let fam = ProxyFamily::new(s, 0.7, 0.4, -1.3, 100_000).unwrap();
        let table = PrimeTable::sieve(1000).unwrap();
        for j in 0..fam.blocks() {
            for (n, a) in fam.a_twisted[j].iter().take(300) {
                let direct = twisted_coeff_direct(n, -0.3, 0.4, -1.3, &fam.n_minus[j], &table).unwrap();
                assert!((a - direct).norm() <= 1e-12 * a.norm().max(1.0), "n = {n}");
            }
        }
    }

    #[test]
    fn witnesses_at_extreme_beta() {
        let ev = ZetaEvaluator::default();
        let s = desk_schedule(1.0, &[7.5, 12.0, 20.0]);
        let fam0 = ProxyFamily::new(s.clone(), 0.0, 0.1, 0.9, 1_000_000_000).unwrap();
        let w = interpolation_witness(1e5 + 3.3, 0.1, 0.9, 0.0, &fam0, &ev).unwrap();
        assert_eq!(w.lhs, 1.0);
        assert!(w.rhs >= 1.0);
        let fam1 = ProxyFamily::new(s.clone(), 1.0, 0.1, 0.9, 1_000_000_000).unwrap();
        let w = interpolation_witness(1e5 + 3.3, 0.1, 0.9, 1.0, &fam1, &ev).unwrap();
        assert!(w.lhs <= w.rhs);
        for beta in [0.5, 1.0, 2.0] {
            let fam = ProxyFamily::new(s.clone(), beta, 0.1, 0.9, 1_000_000_000).unwrap();
            let hw = holder_witness_lower(1e5 + 7.1, 0.1, 0.9, beta, &fam, &ev).unwrap();
            assert!(hw.lhs <= hw.rhs * (1.0 + 1e-12), "{beta}: {hw:?}");
        }
    }
}
