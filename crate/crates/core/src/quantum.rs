//! Exact quantum propagation in a truncated Fock space: either the sector of
//! fixed total excitation (photons plus qubit) or a product basis with a
//! per-cavity photon cutoff for coherent initial states.
//!
//! `H = sum_j D_j n_j + D_q q + g (c^dag s^- + c s^+) - sum_i J_i(t) (a_i^dag a_{i+1} + h.c.)`

use std::collections::HashMap;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csv;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{ChainParams, PulseProtocol};
use crate::ode::{self, IntegratorOptions, OdeSystem};

pub type StateVector = Vec<Complex64>;

/// Default cap on basis dimension.
pub const DEFAULT_BASIS_CAP: usize = 1_000_000;

/// An ordered set of occupation tuples `(n_1, .., n_k, q)`.
pub trait FockBasis: Sync {
    fn dim(&self) -> usize;
    fn n_cavities(&self) -> usize;
    /// Writes the photon numbers of state `i` into `occ` and returns `q`.
    fn occupation(&self, i: usize, occ: &mut [u32]) -> u32;
    fn index_of(&self, occ: &[u32], q: u32) -> Option<usize>;
}

/// Fixed-excitation sector in lexicographic order of `(n_1, .., n_k, q)`.
#[derive(Debug, Clone)]
pub struct ExcitationBasis {
    n_cavities: usize,
    excitation: u32,
    /// Row-major `(n_1, .., n_k, q)` tuples.
    tuples: Vec<u32>,
    index: HashMap<Vec<u32>, usize>,
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n.saturating_sub(k));
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.checked_mul(n - i)? / (i + 1);
    }
    Some(r)
}

/// Number of weak compositions of `m` into `k` parts.
fn compositions(m: u64, k: u64) -> Option<u64> {
    if k == 0 {
        return Some(u64::from(m == 0));
    }
    binomial(m + k - 1, k - 1)
}

impl ExcitationBasis {
    /// Expected dimension, computed without enumerating.
    pub fn count(n_cavities: usize, excitation: u32) -> Option<u64> {
        let k = n_cavities as u64;
        let m = excitation as u64;
        let with_q = if m == 0 { 0 } else { compositions(m - 1, k)? };
        compositions(m, k)?.checked_add(with_q)
    }

    pub fn new(n_cavities: usize, excitation: u32, cap: usize) -> Result<Self> {
        if n_cavities == 0 {
            return Err(Error::Invalid("basis needs at least one cavity".into()));
        }
        let dim = Self::count(n_cavities, excitation).unwrap_or(u64::MAX);
        if dim > cap as u64 {
            return Err(Error::BasisTooLarge {
                dim: usize::try_from(dim).unwrap_or(usize::MAX),
                cap,
            });
        }
        let width = n_cavities + 1;
        let mut tuples = Vec::with_capacity(dim as usize * width);
        let mut cur = vec![0u32; width];
        fn fill(pos: usize, left: u32, k: usize, cur: &mut [u32], out: &mut Vec<u32>) {
            if pos == k {
                // q takes whatever is left, if it can
                if left <= 1 {
                    cur[k] = left;
                    out.extend_from_slice(cur);
                }
                return;
            }
            for n in 0..=left {
                cur[pos] = n;
                fill(pos + 1, left - n, k, cur, out);
            }
        }
        fill(0, excitation, n_cavities, &mut cur, &mut tuples);
        let index = tuples
            .chunks(width)
            .enumerate()
            .map(|(i, t)| (t.to_vec(), i))
            .collect();
        Ok(Self {
            n_cavities,
            excitation,
            tuples,
            index,
        })
    }

    pub fn excitation(&self) -> u32 {
        self.excitation
    }

    /// Lines `index n_1 .. n_k q`, for debugging.
    pub fn dump<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (i, t) in self.tuples.chunks(self.n_cavities + 1).enumerate() {
            let cells: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i} {}", cells.join(" "))?;
        }
        Ok(())
    }
}

impl FockBasis for ExcitationBasis {
    fn dim(&self) -> usize {
        self.tuples.len() / (self.n_cavities + 1)
    }

    fn n_cavities(&self) -> usize {
        self.n_cavities
    }

    fn occupation(&self, i: usize, occ: &mut [u32]) -> u32 {
        let w = self.n_cavities + 1;
        let t = &self.tuples[i * w..(i + 1) * w];
        occ.copy_from_slice(&t[..self.n_cavities]);
        t[self.n_cavities]
    }

    fn index_of(&self, occ: &[u32], q: u32) -> Option<usize> {
        let mut key = occ.to_vec();
        key.push(q);
        self.index.get(&key).copied()
    }
}

/// `0..=cutoff` photons in every cavity times the two qubit states; index
/// `((n_1 (c+1) + n_2) (c+1) + ..) * 2 + q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductBasis {
    pub n_cavities: usize,
    pub cutoff: u32,
}

impl ProductBasis {
    pub fn new(n_cavities: usize, cutoff: u32, cap: usize) -> Result<Self> {
        let dim = (cutoff as u64 + 1)
            .checked_pow(n_cavities as u32)
            .and_then(|d| d.checked_mul(2))
            .unwrap_or(u64::MAX);
        if dim > cap as u64 {
            return Err(Error::BasisTooLarge {
                dim: usize::try_from(dim).unwrap_or(usize::MAX),
                cap,
            });
        }
        Ok(Self { n_cavities, cutoff })
    }

    /// `N + 4 sqrt(N)`, rounded up.
    pub fn default_cutoff(n_total: f64) -> u32 {
        (n_total + 4.0 * n_total.sqrt()).ceil() as u32
    }

    /// Smallest cutoff, not below [`ProductBasis::default_cutoff`], keeping
    /// every truncated coherent amplitude within [`COHERENT_TRUNCATION`].
    pub fn required_cutoff(alphas: &[Complex64]) -> u32 {
        let n: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
        let mut cutoff = Self::default_cutoff(n);
        while alphas
            .iter()
            .any(|a| coherent_amplitudes(*a, cutoff).1 > COHERENT_TRUNCATION)
        {
            cutoff += 1;
        }
        cutoff
    }
}

impl FockBasis for ProductBasis {
    fn dim(&self) -> usize {
        (self.cutoff as usize + 1).pow(self.n_cavities as u32) * 2
    }

    fn n_cavities(&self) -> usize {
        self.n_cavities
    }

    fn occupation(&self, i: usize, occ: &mut [u32]) -> u32 {
        let base = self.cutoff as usize + 1;
        let q = (i % 2) as u32;
        let mut rest = i / 2;
        for o in occ.iter_mut().rev() {
            *o = (rest % base) as u32;
            rest /= base;
        }
        q
    }

    fn index_of(&self, occ: &[u32], q: u32) -> Option<usize> {
        if q > 1 || occ.len() != self.n_cavities || occ.iter().any(|&n| n > self.cutoff) {
            return None;
        }
        let base = self.cutoff as usize + 1;
        let mut idx = 0usize;
        for &n in occ {
            idx = idx * base + n as usize;
        }
        Some(idx * 2 + q as usize)
    }
}

/// Build the excitation sector with the default cap.
pub fn build_basis(n_cavities: usize, excitation: u32) -> Result<ExcitationBasis> {
    ExcitationBasis::new(n_cavities, excitation, DEFAULT_BASIS_CAP)
}

/// Hamiltonian split into a static diagonal, the static qubit exchange and
/// one hopping operator per bond, each stored as unique `(i, j, value)` pairs
/// of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    diagonal: Vec<f64>,
    exchange: Vec<(u32, u32, f64)>,
    hops: Vec<Vec<(u32, u32, f64)>>,
    /// Photon numbers per cavity and `q` per basis state, for expectations.
    occupations: Vec<Vec<f64>>,
    qubit: Vec<f64>,
}

impl SparseHamiltonian {
    pub fn new(basis: &dyn FockBasis, params: &ChainParams) -> Result<Self> {
        let k = basis.n_cavities();
        if k != params.n_cavities {
            return Err(Error::DimensionMismatch {
                expected: params.n_cavities,
                got: k,
            });
        }
        if !params.is_hermitian() {
            return Err(Error::Invalid("quantum propagation is closed-system; kappa and gamma must be 0".into()));
        }
        let dim = basis.dim();
        let g = params.g_terminal();
        let dq = params.qubit_detuning();
        let mut diagonal = vec![0.0; dim];
        let mut exchange = Vec::new();
        let mut hops = vec![Vec::new(); k.saturating_sub(1)];
        let mut occupations = vec![vec![0.0; dim]; k];
        let mut qubit = vec![0.0; dim];
        let mut occ = vec![0u32; k];
        let mut tgt = vec![0u32; k];
        for i in 0..dim {
            let q = basis.occupation(i, &mut occ);
            let mut d = dq * q as f64;
            for j in 0..k {
                d += params.detuning[j] * occ[j] as f64;
                occupations[j][i] = occ[j] as f64;
            }
            diagonal[i] = d;
            qubit[i] = q as f64;
            // c^dag s^-: q = 1 -> 0, terminal photon +1
            if q == 1 && g != 0.0 {
                tgt.copy_from_slice(&occ);
                tgt[k - 1] += 1;
                if let Some(j) = basis.index_of(&tgt, 0) {
                    exchange.push((i as u32, j as u32, g * (tgt[k - 1] as f64).sqrt()));
                }
            }
            // a_b^dag a_{b+1}: photon moves from b+1 to b
            for (b, hop) in hops.iter_mut().enumerate() {
                if occ[b + 1] == 0 {
                    continue;
                }
                tgt.copy_from_slice(&occ);
                tgt[b] += 1;
                tgt[b + 1] -= 1;
                if let Some(j) = basis.index_of(&tgt, q) {
                    let amp = ((occ[b + 1] as f64) * (tgt[b] as f64)).sqrt();
                    hop.push((i as u32, j as u32, amp));
                }
            }
        }
        Ok(Self {
            dim,
            diagonal,
            exchange,
            hops,
            occupations,
            qubit,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = H(j) psi` for bond couplings `j`.
    pub fn apply(&self, j: &[f64], psi: &[Complex64], out: &mut [Complex64]) {
        for ((o, d), p) in out.iter_mut().zip(&self.diagonal).zip(psi) {
            *o = p * *d;
        }
        for &(a, b, v) in &self.exchange {
            let (a, b) = (a as usize, b as usize);
            out[b] += psi[a] * v;
            out[a] += psi[b] * v;
        }
        for (hop, &jb) in self.hops.iter().zip(j) {
            if jb == 0.0 {
                continue;
            }
            for &(a, b, v) in hop {
                let (a, b) = (a as usize, b as usize);
                let c = -jb * v;
                out[b] += psi[a] * c;
                out[a] += psi[b] * c;
            }
        }
    }

    /// Real-flat `d/dt [Re psi, Im psi] = -i H psi`.
    fn apply_flat(&self, j: &[f64], y: &[f64], dy: &mut [f64]) {
        let n = self.dim;
        let (re, im) = y.split_at(n);
        let (dre, dim) = dy.split_at_mut(n);
        // -i (x + i y) h = h y - i h x
        for i in 0..n {
            let d = self.diagonal[i];
            dre[i] = d * im[i];
            dim[i] = -d * re[i];
        }
        let mut pair = |a: usize, b: usize, c: f64| {
            dre[b] += c * im[a];
            dim[b] -= c * re[a];
            dre[a] += c * im[b];
            dim[a] -= c * re[b];
        };
        for &(a, b, v) in &self.exchange {
            pair(a as usize, b as usize, v);
        }
        for (hop, &jb) in self.hops.iter().zip(j) {
            if jb == 0.0 {
                continue;
            }
            for &(a, b, v) in hop {
                pair(a as usize, b as usize, -jb * v);
            }
        }
    }

    pub fn norm_sqr(&self, psi: &[Complex64]) -> f64 {
        psi.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `(<n_1>, .., <n_k>, <sz>)` of a normalised state.
    pub fn expectations(&self, psi: &[Complex64]) -> (Vec<f64>, f64) {
        let p: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let ns = self
            .occupations
            .iter()
            .map(|occ| occ.iter().zip(&p).map(|(n, w)| n * w).sum())
            .collect();
        let q: f64 = self.qubit.iter().zip(&p).map(|(q, w)| q * w).sum();
        (ns, q - 0.5 * p.iter().sum::<f64>())
    }
}

/// `H(t) psi` with the pulsed couplings at time `t`.
pub fn apply_hamiltonian(
    psi: &[Complex64],
    basis: &dyn FockBasis,
    params: &ChainParams,
    protocol: &PulseProtocol,
    t: f64,
) -> Result<StateVector> {
    if psi.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: psi.len(),
        });
    }
    let h = SparseHamiltonian::new(basis, params)?;
    let mut j = vec![0.0; protocol.bonds()];
    protocol.fill_couplings(t, &mut j);
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    h.apply(&j, psi, &mut out);
    Ok(out)
}

struct Schrodinger<'a> {
    h: &'a SparseHamiltonian,
    protocol: &'a PulseProtocol,
}

impl OdeSystem for Schrodinger<'_> {
    fn dim(&self) -> usize {
        2 * self.h.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let mut j = [0.0; 16];
        let nb = self.protocol.bonds();
        let mut jv;
        let js: &mut [f64] = if nb <= j.len() {
            &mut j[..nb]
        } else {
            jv = vec![0.0; nb];
            &mut jv
        };
        self.protocol.fill_couplings(t, js);
        self.h.apply_flat(js, y, dy);
    }
}

/// Expectation values sampled along a quantum run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSeries {
    pub tau: f64,
    pub times: Vec<f64>,
    /// `n[j][i]`: cavity `j` at sample `i`.
    pub n: Vec<Vec<f64>>,
    pub sz: Vec<f64>,
    pub norm: Vec<f64>,
}

impl QuantumSeries {
    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `<sum n + sz + 1/2>` per sample.
    pub fn conserved(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| self.n.iter().map(|c| c[i]).sum::<f64>() + self.sz[i] + 0.5 * self.norm[i])
            .collect()
    }

    /// Columns `t, ttilde, n_1..n_k, sz, norm`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut header = vec!["t".to_string(), "ttilde".to_string()];
        header.extend((1..=self.n.len()).map(|i| format!("n_{i}")));
        header.extend(["sz", "norm"].map(String::from));
        csv::write_header(w, &header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i], self.times[i] / self.tau];
            row.extend(self.n.iter().map(|c| c[i]));
            row.extend([self.sz[i], self.norm[i]]);
            csv::write_row(w, &row)?;
        }
        Ok(())
    }
}

/// Largest tolerated `|norm - 1|` during a run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Default tolerances for quantum runs.
pub fn quantum_options() -> IntegratorOptions {
    IntegratorOptions::default().with_tolerances(1e-10, 1e-12)
}

/// Integrate the Schrodinger equation over `t_span`, sampling expectation
/// values every `options.sample_dt` (default `tau/100`).
pub fn propagate(
    psi0: &[Complex64],
    basis: &dyn FockBasis,
    params: &ChainParams,
    protocol: &PulseProtocol,
    t_span: (f64, f64),
    options: &IntegratorOptions,
) -> Result<QuantumSeries> {
    if psi0.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: psi0.len(),
        });
    }
    let h = SparseHamiltonian::new(basis, params)?;
    let n0 = h.norm_sqr(psi0);
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("initial state not normalised (norm^2 = {n0})")));
    }
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::Invalid("t_span must be increasing".into()));
    }
    let mut opts = options.clone();
    if opts.max_step.is_none() {
        opts.max_step = Some(protocol.tau / 50.0);
    }
    let dt = opts.sample_dt.unwrap_or(protocol.tau / 100.0);
    let mut samples = Vec::new();
    let mut i = 0usize;
    loop {
        let t = t0 + i as f64 * dt;
        if t >= t1 {
            break;
        }
        samples.push(t);
        i += 1;
    }
    samples.push(t1);

    let d = h.dim;
    let mut y0 = vec![0.0; 2 * d];
    for (i, z) in psi0.iter().enumerate() {
        y0[i] = z.re;
        y0[d + i] = z.im;
    }
    let sys = Schrodinger {
        h: &h,
        protocol,
    };
    let k = basis.n_cavities();
    let mut series = QuantumSeries {
        tau: protocol.tau,
        times: Vec::with_capacity(samples.len()),
        n: vec![Vec::with_capacity(samples.len()); k],
        sz: Vec::with_capacity(samples.len()),
        norm: Vec::with_capacity(samples.len()),
    };
    let mut drift: Option<(f64, f64)> = None;
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    ode::integrate(&sys, t0, &y0, t1, &opts, &samples, |t, y| {
        for (i, z) in psi.iter_mut().enumerate() {
            *z = Complex64::new(y[i], y[d + i]);
        }
        let norm = h.norm_sqr(&psi);
        if drift.is_none() && (norm - 1.0).abs() > NORM_DRIFT_LIMIT {
            drift = Some((t, (norm - 1.0).abs()));
        }
        let (ns, sz) = h.expectations(&psi);
        series.times.push(t);
        for (c, v) in series.n.iter_mut().zip(ns) {
            c.push(v);
        }
        series.sz.push(sz);
        series.norm.push(norm);
    })?;
    if let Some((t, drift)) = drift {
        return Err(Error::NormDrift { t, drift });
    }
    Ok(series)
}

/// Fock state with the given occupations.
pub fn fock_state(basis: &dyn FockBasis, occ: &[u32], q: u32) -> Result<StateVector> {
    let idx = basis
        .index_of(occ, q)
        .ok_or_else(|| Error::Invalid(format!("occupation {occ:?}, q = {q} not in basis")))?;
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
    psi[idx] = Complex64::new(1.0, 0.0);
    Ok(psi)
}

/// Largest tolerated discarded probability of a truncated coherent state.
pub const COHERENT_TRUNCATION: f64 = 1e-8;

/// Truncated coherent-state amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)` and the
/// discarded probability.
pub fn coherent_amplitudes(alpha: Complex64, cutoff: u32) -> (Vec<Complex64>, f64) {
    let mut c = Vec::with_capacity(cutoff as usize + 1);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=cutoff {
        if n > 0 {
            cur = cur * alpha / (n as f64).sqrt();
        }
        c.push(cur);
    }
    let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    (c, (1.0 - kept).max(0.0))
}

/// Normalised product of truncated coherent states with the qubit in its
/// ground state.
pub fn coherent_initial_state(alphas: &[Complex64], cutoff: u32) -> Result<(ProductBasis, StateVector)> {
    let basis = ProductBasis::new(alphas.len(), cutoff, DEFAULT_BASIS_CAP)?;
    let mut factors = Vec::with_capacity(alphas.len());
    for a in alphas {
        let (c, err) = coherent_amplitudes(*a, cutoff);
        if err > COHERENT_TRUNCATION {
            return Err(Error::CutoffTooSmall { cutoff: cutoff as usize, error: err });
        }
        let nrm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        factors.push(c.into_iter().map(|z| z / nrm).collect::<Vec<_>>());
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
    let mut occ = vec![0u32; alphas.len()];
    for (i, z) in psi.iter_mut().enumerate() {
        if basis.occupation(i, &mut occ) != 0 {
            continue;
        }
        *z = occ
            .iter()
            .zip(&factors)
            .fold(Complex64::new(1.0, 0.0), |acc, (n, f)| acc * f[*n as usize]);
    }
    Ok((basis, psi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Per cavity occupation.
    pub occupations: Vec<Deviation>,
    /// `(n_terminal^quantum - n_terminal^semiclassical)(t_end) / N`.
    pub final_t_difference: f64,
    /// First `ttilde` at which any occupation deviates by more than
    /// `onset_fraction * N`.
    pub divergence_onset: Option<f64>,
    pub onset_fraction: f64,
}

/// Default divergence-onset level, as a fraction of `N`.
pub const ONSET_FRACTION: f64 = 0.05;

fn interp(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let i = ts.partition_point(|x| *x < t);
    if i == 0 {
        return ys[0];
    }
    if i == ts.len() {
        return ys[ts.len() - 1];
    }
    let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Compare on the quantum time grid inside the overlap of both runs, with
/// the semiclassical series linearly interpolated.
pub fn compare_semiclassical(
    quantum: &QuantumSeries,
    semiclassical: &Trajectory,
    n_total: f64,
    onset_fraction: f64,
) -> Result<DeviationReport> {
    let (qs, qe) = match (quantum.times.first(), quantum.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::NoOverlap),
    };
    let (ss, se) = match (semiclassical.times.first(), semiclassical.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::NoOverlap),
    };
    let (lo, hi) = (qs.max(ss), qe.min(se));
    if lo > hi {
        return Err(Error::NoOverlap);
    }
    let k = quantum.n.len();
    if semiclassical.initial().n_cavities() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: semiclassical.initial().n_cavities(),
        });
    }
    let sc: Vec<Vec<f64>> = (0..k).map(|j| semiclassical.photon_series(j)).collect();
    let idx: Vec<usize> = (0..quantum.times.len())
        .filter(|&i| quantum.times[i] >= lo && quantum.times[i] <= hi)
        .collect();
    let mut occupations = Vec::with_capacity(k);
    let mut onset: Option<f64> = None;
    let level = onset_fraction * n_total;
    for j in 0..k {
        let mut max: f64 = 0.0;
        let mut sq = 0.0;
        for &i in &idx {
            let t = quantum.times[i];
            let d = (quantum.n[j][i] - interp(&semiclassical.times, &sc[j], t)).abs();
            max = max.max(d);
            sq += d * d;
            if d > level && onset.is_none_or(|o| t / quantum.tau < o) {
                onset = Some(t / quantum.tau);
            }
        }
        occupations.push(Deviation {
            max,
            rms: (sq / idx.len().max(1) as f64).sqrt(),
        });
    }
    let t_end = quantum.times[*idx.last().unwrap_or(&0)];
    let qn = quantum.n[k - 1][*idx.last().unwrap_or(&0)];
    let sn = interp(&semiclassical.times, &sc[k - 1], t_end);
    Ok(DeviationReport {
        occupations,
        final_t_difference: (qn - sn) / n_total,
        divergence_onset: onset,
        onset_fraction,
    })
}
