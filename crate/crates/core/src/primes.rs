//! Prime sieving, block schedules and multiplicative functions.

use crate::numeric::CompensatedSum;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAX_SIEVE_LIMIT: u64 = 1_000_000_000;
const CACHE_MAGIC: &[u8; 8] = b"PTAB0001";
const SEGMENT: usize = 1 << 18;

/// All primes up to `limit`, with cached logarithms.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimeTable {
    pub limit: u64,
    pub primes: Vec<u64>,
    pub logs: Vec<f64>,
}

fn simple_sieve(limit: usize) -> Vec<u64> {
    let mut composite = vec![false; limit + 1];
    let mut out = Vec::new();
    for n in 2..=limit {
        if !composite[n] {
            out.push(n as u64);
            let mut m = n * n;
            while m <= limit {
                composite[m] = true;
                m += n;
            }
        }
    }
    out
}

impl PrimeTable {
    /// Segmented sieve of Eratosthenes.
    pub fn sieve(limit: u64) -> Result<Self> {
        if limit > MAX_SIEVE_LIMIT {
            return Err(Error::LimitTooLarge(limit));
        }
        if limit < 2 {
            return Err(Error::InvalidParameter(format!("sieve limit {limit} below 2")));
        }
        let root = (limit as f64).sqrt() as u64 + 1;
        let base = simple_sieve(root as usize);
        let mut primes: Vec<u64> = base.iter().copied().filter(|&p| p <= limit).collect();
        let mut lo = root + 1;
        let mut flags = vec![true; SEGMENT];
        while lo <= limit {
            let hi = (lo + SEGMENT as u64 - 1).min(limit);
            let len = (hi - lo + 1) as usize;
            flags[..len].iter_mut().for_each(|f| *f = true);
            for &p in &base {
                if p * p > hi {
                    break;
                }
                let mut m = lo.div_ceil(p) * p;
                m = m.max(p * p);
                while m <= hi {
                    flags[(m - lo) as usize] = false;
                    m += p;
                }
            }
            primes.extend((0..len).filter(|&i| flags[i]).map(|i| lo + i as u64));
            lo = hi + 1;
        }
        Ok(Self::from_primes(limit, primes))
    }

    fn from_primes(limit: u64, primes: Vec<u64>) -> Self {
        let logs = primes.iter().map(|&p| (p as f64).ln()).collect();
        Self { limit, primes, logs }
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Index range of primes p with lo < p ≤ hi.
    pub fn range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.primes.partition_point(|&p| (p as f64) <= lo);
        let b = self.primes.partition_point(|&p| (p as f64) <= hi);
        a..b.max(a)
    }

    pub fn primes_in(&self, lo: f64, hi: f64) -> &[u64] {
        &self.primes[self.range(lo, hi)]
    }

    fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        if hi > self.limit as f64 {
            return Err(Error::RangeBeyondTable { lo, hi, limit: self.limit });
        }
        Ok(())
    }

    /// Σ_{lo < p ≤ hi} 1/p.
    pub fn block_variance(&self, lo: f64, hi: f64) -> Result<f64> {
        self.check_range(lo, hi)?;
        Ok(self.primes_in(lo, hi).iter().map(|&p| 1.0 / p as f64).collect::<CompensatedSum>().value())
    }

    /// Σ_{p ≤ x} cos(h log p)/p.
    pub fn prime_cos_sum(&self, h: f64, x: f64) -> Result<f64> {
        if x < 2.0 {
            return Err(Error::InvalidParameter(format!("X = {x} below 2")));
        }
        self.check_range(0.0, x)?;
        let r = self.range(0.0, x);
        Ok(self.primes[r.clone()]
            .iter()
            .zip(&self.logs[r])
            .map(|(&p, &lp)| (h * lp).cos() / p as f64)
            .collect::<CompensatedSum>()
            .value())
    }

    /// Prime factorization by trial division against the table.
    pub fn factorize(&self, n: u64) -> Result<Vec<(u64, u32)>> {
        if n == 0 {
            return Err(Error::InvalidParameter("cannot factor 0".into()));
        }
        let mut rem = n;
        let mut out = Vec::new();
        let mut exhausted = true;
        for &p in &self.primes {
            if p * p > rem {
                exhausted = false;
                break;
            }
            if rem % p == 0 {
                let mut e = 0;
                while rem % p == 0 {
                    rem /= p;
                    e += 1;
                }
                out.push((p, e));
            }
        }
        if rem > 1 {
            let lim = self.limit as u128;
            if exhausted && (rem as u128) > lim * lim {
                return Err(Error::FactorizationIncomplete(n));
            }
            out.push((rem, 1));
        }
        Ok(out)
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * (self.primes.len() + 1));
        buf.extend_from_slice(CACHE_MAGIC);
        for &p in &self.primes {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Load a cached table; `limit` is the sieve limit it was built with.
    pub fn read_cache(path: &Path, limit: u64) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 8 || &buf[..8] != CACHE_MAGIC || buf.len() % 8 != 0 {
            return Err(Error::Io(format!("{} is not a prime table cache", path.display())));
        }
        let primes: Vec<u64> = buf[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if primes.windows(2).any(|w| w[0] >= w[1]) || primes.last().is_some_and(|&p| p > limit) {
            return Err(Error::Io(format!("{} is inconsistent with limit {limit}", path.display())));
        }
        Ok(Self::from_primes(limit, primes))
    }
}

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut a: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, a);
            }
            a = mul(a, a);
            e >>= 1;
        }
        r
    };
    let d = (n - 1) >> (n - 1).trailing_zeros();
    let s = (n - 1).trailing_zeros();
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Values of a multiplicative function on lo..lo+len, given on prime powers.
/// The table must contain every prime up to √(lo + len).
pub fn multiplicative_block<F>(table: &PrimeTable, lo: u64, len: usize, f: F) -> Vec<Complex64>
where
    F: Fn(u64, u32) -> Complex64,
{
    multiplicative_block_indexed(table, lo, len, |i, e| f(table.primes[i], e), |r| f(r, 1))
}

/// As [`multiplicative_block`], with small primes passed by table index and the
/// single prime factor above √(lo + len), if any, passed separately.
pub fn multiplicative_block_indexed<S, L>(table: &PrimeTable, lo: u64, len: usize, small: S, large: L) -> Vec<Complex64>
where
    S: Fn(usize, u32) -> Complex64,
    L: Fn(u64) -> Complex64,
{
    let hi = lo + len as u64;
    let mut rem: Vec<u64> = (lo..hi).collect();
    let mut vals = vec![Complex64::new(1.0, 0.0); len];
    assert!(
        (table.limit as u128 + 1).pow(2) >= hi as u128,
        "prime table too small for block"
    );
    for (pi, &p) in table.primes.iter().enumerate() {
        if p * p >= hi {
            break;
        }
        let mut m = lo.div_ceil(p) * p;
        while m < hi {
            let idx = (m - lo) as usize;
            let mut e = 0;
            while rem[idx] % p == 0 {
                rem[idx] /= p;
                e += 1;
            }
            vals[idx] *= small(pi, e);
            m += p;
        }
    }
    for (v, &r) in vals.iter_mut().zip(&rem) {
        if r > 1 {
            *v *= large(r);
        }
    }
    vals
}

/// Ω(n), prime factors counted with multiplicity.
pub fn omega_big(n: u64, table: &PrimeTable) -> Result<u32> {
    Ok(table.factorize(n)?.iter().map(|&(_, e)| e).sum())
}

/// ω(n), distinct prime factors.
pub fn omega_small(n: u64, table: &PrimeTable) -> Result<u32> {
    Ok(table.factorize(n)?.len() as u32)
}

/// Denominator of g(n) = Π 1/a! over p^a ‖ n.
pub fn g_denominator(n: u64, table: &PrimeTable) -> Result<u128> {
    Ok(table
        .factorize(n)?
        .iter()
        .map(|&(_, e)| (1..=e as u128).product::<u128>())
        .product())
}

pub fn g_mult(n: u64, table: &PrimeTable) -> Result<f64> {
    Ok(1.0 / g_denominator(n, table)? as f64)
}

pub fn divisor_d(n: u64, table: &PrimeTable) -> Result<u64> {
    Ok(table.factorize(n)?.iter().map(|&(_, e)| e as u64 + 1).product())
}

pub fn divisor_d3(n: u64, table: &PrimeTable) -> Result<u64> {
    Ok(table
        .factorize(n)?
        .iter()
        .map(|&(_, e)| (e as u64 + 1) * (e as u64 + 2) / 2)
        .product())
}

/// σ_{z1,z2}(p^m) = Σ_{j=0}^{m} p^{−j z1 − (m−j) z2}.
pub fn sigma_prime_power(z1: Complex64, z2: Complex64, p: u64, m: u32) -> Complex64 {
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let lp = (p as f64).ln();
    let mf = m as f64;
    if z1 == z2 {
        return (-z1 * (mf * lp)).exp() * (mf + 1.0);
    }
    if ((z1 - z2) * lp).norm() < 1e-2 {
        return (0..=m)
            .map(|j| (-(z1 * j as f64 + z2 * (mf - j as f64)) * lp).exp())
            .sum();
    }
    let top1 = (-z1 * ((mf + 1.0) * lp)).exp();
    let top2 = (-z2 * ((mf + 1.0) * lp)).exp();
    (top1 - top2) / ((-z1 * lp).exp() - (-z2 * lp).exp())
}

/// σ_{z1,z2}(n) = Σ_{ab=n} a^{−z1} b^{−z2}.
pub fn sigma_shifted(z1: Complex64, z2: Complex64, n: u64, table: &PrimeTable) -> Result<Complex64> {
    Ok(table
        .factorize(n)?
        .iter()
        .map(|&(p, e)| sigma_prime_power(z1, z2, p, e))
        .product())
}

/// Closed form of B_z(p^m).
pub fn b_prime_power(z: [Complex64; 4], p: u64, m: u32) -> Result<Complex64> {
    if m == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let lp = (p as f64).ln();
    let pw = |e: Complex64| (-e * lp).exp();
    let [z1, z2, z3, z4] = z;
    let den = 1.0 - pw(2.0 + z1 + z2 + z3 + z4);
    if den.norm() < 1e-12 {
        return Err(Error::DenominatorVanishes(p));
    }
    let sig = |k: i64| {
        if k < 0 {
            Complex64::new(0.0, 0.0)
        } else {
            sigma_prime_power(z3, z4, p, k as u32)
        }
    };
    let m = m as i64;
    let num = sig(m) - sig(m - 1) * pw(1.0 + z3 + z4) * (pw(z1) + pw(z2))
        + sig(m - 2) * pw(2.0 + z1 + z2 + 2.0 * z3 + 2.0 * z4);
    Ok(num / den)
}

/// B_z(n), multiplicative over prime powers.
pub fn b_coeff(z: [Complex64; 4], n: u64, table: &PrimeTable) -> Result<Complex64> {
    let mut out = Complex64::new(1.0, 0.0);
    for (p, e) in table.factorize(n)? {
        out *= b_prime_power(z, p, e)?;
    }
    Ok(out)
}

/// Reference value of B_z(p^m) from its defining ratio of series, truncated after `terms` terms.
pub fn b_coeff_series(z: [Complex64; 4], p: u64, m: u32, terms: u32) -> Complex64 {
    let [z1, z2, z3, z4] = z;
    let inv_p = 1.0 / p as f64;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    let mut scale = 1.0;
    for j in 0..=terms {
        let s12 = sigma_prime_power(z1, z2, p, j);
        let dn = s12 * sigma_prime_power(z3, z4, p, j + m) * scale;
        let dd = s12 * sigma_prime_power(z3, z4, p, j) * scale;
        num += dn;
        den += dd;
        if j > 0 && dn.norm() <= 1e-18 * num.norm() && dd.norm() <= 1e-18 * den.norm() {
            break;
        }
        scale *= inv_p;
    }
    num / den
}

/// |B_z(p) − B_w(p)|.
pub fn b_continuity_gap(p: u64, z: [Complex64; 4], w: [Complex64; 4]) -> Result<f64> {
    Ok((b_prime_power(z, p, 1)? - b_prime_power(w, p, 1)?).norm())
}

/// Iterated natural logarithm; log_0 x = x. None once the iterate leaves (0, ∞).
pub fn iterated_log(x: f64, j: usize) -> Option<f64> {
    let mut v = x;
    for _ in 0..j {
        if v <= 0.0 {
            return None;
        }
        v = v.ln();
    }
    Some(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleVariant {
    UpperBound,
    LowerSubunit,
    LowerSuperunit,
}

/// Prime blocks (T_{j−1}, T_j] with variances P_j and truncation orders K_j.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSchedule {
    pub variant: ScheduleVariant,
    pub t: f64,
    pub beta: f64,
    pub ell_threshold: f64,
    pub t0: f64,
    /// Number of formula blocks before merging.
    pub ell: usize,
    /// Formula boundaries T_0, T_1, …, T_ℓ before merging.
    pub formula_boundaries: Vec<f64>,
    /// Effective boundaries after merging empty or inverted blocks.
    pub boundaries: Vec<f64>,
    pub p: Vec<f64>,
    pub k: Vec<f64>,
    #[serde(skip)]
    pub block_primes: Vec<Vec<u64>>,
}

impl BlockSchedule {
    /// Schedule from the variant formulas, sieving as far as needed.
    pub fn new(t: f64, beta: f64, variant: ScheduleVariant, ell_threshold: f64) -> Result<Self> {
        let formula = Self::formula_boundaries(t, beta, variant, ell_threshold)?;
        let top = formula.iter().copied().fold(0.0, f64::max);
        if top > MAX_SIEVE_LIMIT as f64 {
            return Err(Error::LimitTooLarge(top as u64));
        }
        let table = PrimeTable::sieve((top.ceil() as u64).max(2))?;
        Self::assemble(t, beta, variant, ell_threshold, formula, &table)
    }

    /// Schedule from the variant formulas using an existing table.
    pub fn with_table(t: f64, beta: f64, variant: ScheduleVariant, ell_threshold: f64, table: &PrimeTable) -> Result<Self> {
        let formula = Self::formula_boundaries(t, beta, variant, ell_threshold)?;
        Self::assemble(t, beta, variant, ell_threshold, formula, table)
    }

    /// Schedule with explicitly chosen boundaries T_0 < T_1 < … (desk-scale experiments).
    pub fn from_boundaries(variant: ScheduleVariant, t: f64, beta: f64, boundaries: &[f64], table: &PrimeTable) -> Result<Self> {
        if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateSchedule("boundaries must increase".into()));
        }
        Self::assemble(t, beta, variant, 2.0, boundaries.to_vec(), table)
    }

    fn formula_boundaries(t: f64, beta: f64, variant: ScheduleVariant, ell_threshold: f64) -> Result<Vec<f64>> {
        if t < 100.0 || !(beta > 0.0 && beta <= 4.0) || ell_threshold < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs T >= 100, beta in (0, 4], threshold >= 2 (got {t}, {beta}, {ell_threshold})"
            )));
        }
        let mut ell = 0;
        while iterated_log(t, ell + 1).is_some_and(|v| v >= ell_threshold) {
            ell += 1;
        }
        if ell == 0 {
            return Err(Error::DegenerateSchedule(format!(
                "log T = {:.3} below threshold {ell_threshold}",
                t.ln()
            )));
        }
        let e2 = std::f64::consts::E.powi(2);
        let log_t = t.ln();
        let t0 = match variant {
            ScheduleVariant::LowerSuperunit => beta.powi(4) * e2,
            _ => e2,
        };
        let mut out = vec![t0];
        for j in 1..=ell {
            let lj = |k: usize| iterated_log(t, k).expect("iterated log inside schedule range");
            let v = match variant {
                ScheduleVariant::UpperBound => (log_t / lj(j + 1).powi(2)).exp(),
                ScheduleVariant::LowerSubunit => (beta * log_t / lj(j).powi(2)).exp(),
                ScheduleVariant::LowerSuperunit => (log_t / (beta * beta * lj(j).powi(2))).exp(),
            };
            out.push(v);
        }
        Ok(out)
    }

    fn assemble(
        t: f64,
        beta: f64,
        variant: ScheduleVariant,
        ell_threshold: f64,
        formula: Vec<f64>,
        table: &PrimeTable,
    ) -> Result<Self> {
        let top = formula.iter().copied().fold(0.0, f64::max);
        if top > table.limit as f64 {
            return Err(Error::RangeBeyondTable { lo: formula[0], hi: top, limit: table.limit });
        }
        let t0 = formula[0];
        let mut boundaries = vec![t0];
        let mut p = Vec::new();
        let mut k = Vec::new();
        let mut block_primes = Vec::new();
        let mut prev = t0;
        for &tj in &formula[1..] {
            if tj <= prev || table.primes_in(prev, tj).is_empty() {
                continue;
            }
            let pj = table.block_variance(prev, tj)?;
            let kj = match variant {
                ScheduleVariant::LowerSuperunit => 250.0 * beta * beta * pj,
                _ => 250.0 * pj,
            };
            boundaries.push(tj);
            p.push(pj);
            k.push(kj);
            block_primes.push(table.primes_in(prev, tj).to_vec());
            prev = tj;
        }
        if p.is_empty() {
            return Err(Error::DegenerateSchedule(format!(
                "no primes in any formula block {formula:?}"
            )));
        }
        Ok(Self {
            variant,
            t,
            beta,
            ell_threshold,
            t0,
            ell: formula.len() - 1,
            formula_boundaries: formula,
            boundaries,
            p,
            k,
            block_primes,
        })
    }

    /// Number of effective blocks.
    pub fn blocks(&self) -> usize {
        self.p.len()
    }

    /// Integer truncation order ⌊K_j⌋ of block j (1-based).
    pub fn k_int(&self, j: usize) -> u32 {
        self.k[j - 1].floor().max(1.0) as u32
    }

    pub fn check_block(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.blocks() {
            return Err(Error::BlockOutOfRange { index: j, ell: self.blocks() });
        }
        Ok(())
    }

    /// Primes of block j (1-based).
    pub fn primes(&self, j: usize) -> &[u64] {
        &self.block_primes[j - 1]
    }

    /// Default length cap: T^{β/18} for the lower bound below β = 1, T^{1/18} otherwise.
    pub fn default_length_cap(&self) -> u64 {
        let e = match self.variant {
            ScheduleVariant::LowerSubunit => self.beta / 18.0,
            _ => 1.0 / 18.0,
        };
        self.t.powf(e).floor().max(1.0) as u64
    }
}

/// Free-function form of [`BlockSchedule::new`].
pub fn block_schedule(t: f64, beta: f64, variant: ScheduleVariant, ell_threshold: f64) -> Result<BlockSchedule> {
    BlockSchedule::new(t, beta, variant, ell_threshold)
}
