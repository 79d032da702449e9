//! Finite-window determinantal point processes: exact configuration
//! probabilities, correlation functions, exhaustive enumeration and exact
//! sampling.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::kernel::{KernelMatrix, Site, Window};
use crate::linalg::{det, Matrix};
use crate::rng::SeededRng;

/// Largest window [`enumerate_distribution`] accepts.
pub const MAX_ENUMERATION: usize = 20;

/// Negative probabilities down to this value are floating noise and are
/// clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;

/// Largest tolerated `‖K V − V Λ‖_max` before sampling.
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Occupancy of every site in a window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    window: Window,
    occupancy: Vec<bool>,
}

impl Configuration {
    pub fn new(window: Window, occupancy: Vec<bool>) -> Result<Self> {
        if occupancy.len() != window.size() {
            return Err(Error::DimensionMismatch {
                expected: window.size(),
                got: occupancy.len(),
            });
        }
        Ok(Self { window, occupancy })
    }

    pub fn empty(window: Window) -> Self {
        Self {
            occupancy: vec![false; window.size()],
            window,
        }
    }

    /// Bit `i` of `mask` is the occupancy of the `i`-th site from the left.
    pub fn from_bits(window: Window, mask: u64) -> Self {
        assert!(
            window.size() <= 64,
            "bitmask encoding needs at most 64 sites"
        );
        let occupancy = (0..window.size()).map(|i| mask >> i & 1 == 1).collect();
        Self { window, occupancy }
    }

    pub fn to_bits(&self) -> Option<u64> {
        (self.occupancy.len() <= 64).then(|| {
            self.occupancy
                .iter()
                .enumerate()
                .fold(0u64, |m, (i, &o)| m | (u64::from(o) << i))
        })
    }

    /// Parse a `0`/`1` string, leftmost character = leftmost site.
    pub fn parse(window: Window, text: &str) -> Result<Self> {
        let occupancy = text
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidParameter(format!(
                    "occupancy string {text:?} may only contain 0 and 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(window, occupancy)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn particle_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn is_occupied(&self, s: Site) -> Result<bool> {
        let pos = self.window.position(s).ok_or_else(|| {
            Error::WindowMismatch(format!("site {s} outside window {}", self.window))
        })?;
        Ok(self.occupancy[pos])
    }

    pub fn occupied_at(&self, pos: usize) -> bool {
        self.occupancy[pos]
    }

    pub fn set(&mut self, pos: usize, value: bool) {
        self.occupancy[pos] = value;
    }

    pub fn swap_positions(&mut self, i: usize, j: usize) {
        self.occupancy.swap(i, j);
    }

    pub fn occupied_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.window.site(i))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &o in &self.occupancy {
            f.write_str(if o { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn check_window(k: &KernelMatrix, w: &Window) -> Result<()> {
    if k.window() != w {
        return Err(Error::WindowMismatch(format!(
            "kernel window {} vs configuration window {w}",
            k.window()
        )));
    }
    Ok(())
}

/// `P(γ_Λ = η)` together with whether a tiny negative value was clamped.
pub fn config_probability_detailed(k: &KernelMatrix, eta: &Configuration) -> Result<(f64, bool)> {
    check_window(k, eta.window())?;
    Ok(probability_from_occupancy(k.matrix(), eta.occupancy()))
}

fn probability_from_occupancy(k: &Matrix, occ: &[bool]) -> (f64, bool) {
    let n = occ.len();
    // column y is K's column where occupied and (I - K)'s column elsewhere
    let m = Matrix::from_fn(n, n, |i, j| {
        if occ[j] {
            k[(i, j)]
        } else if i == j {
            1.0 - k[(i, j)]
        } else {
            -k[(i, j)]
        }
    });
    let p = det(&m);
    if (-CLAMP_TOL..0.0).contains(&p) {
        (0.0, true)
    } else {
        (p, false)
    }
}

/// Exact probability that the window DPP realises exactly `eta`.
pub fn config_probability(k: &KernelMatrix, eta: &Configuration) -> Result<f64> {
    config_probability_detailed(k, eta).map(|(p, _)| p)
}

fn positions(k: &KernelMatrix, sites: &[Site]) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(sites.len());
    for &s in sites {
        let pos = k.window().position(s).ok_or_else(|| {
            Error::WindowMismatch(format!("site {s} outside window {}", k.window()))
        })?;
        if idx.contains(&pos) {
            return Err(Error::DuplicateSite(s.index()));
        }
        idx.push(pos);
    }
    Ok(idx)
}

/// `det[K(x_i, x_j)]`, the probability that every listed site is occupied.
pub fn correlation(k: &KernelMatrix, sites: &[Site]) -> Result<f64> {
    let idx = positions(k, sites)?;
    Ok(det(&k.matrix().submatrix(&idx)))
}

/// Exact law of the window configuration, indexed by bitmask.
#[derive(Debug, Clone)]
pub struct Pmf {
    window: Window,
    probs: Vec<f64>,
    clamped: usize,
}

impl Pmf {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of_mask(&self, mask: u64) -> f64 {
        self.probs[mask as usize]
    }

    pub fn prob(&self, eta: &Configuration) -> Result<f64> {
        if eta.window() != &self.window {
            return Err(Error::WindowMismatch(format!(
                "pmf window {} vs configuration window {}",
                self.window,
                eta.window()
            )));
        }
        Ok(self.probs[eta.to_bits().expect("enumerated windows are small") as usize])
    }

    /// Number of entries that were clamped from tiny negatives to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Probability that every listed site is occupied.
    pub fn marginal(&self, sites: &[Site]) -> Result<f64> {
        let mut mask = 0u64;
        for &s in sites {
            let pos = self.window.position(s).ok_or_else(|| {
                Error::WindowMismatch(format!("site {s} outside window {}", self.window))
            })?;
            mask |= 1 << pos;
        }
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| *m as u64 & mask == mask)
            .map(|(_, p)| p)
            .sum())
    }

    /// The law conditioned on holding exactly `count` particles, as
    /// `(bitmask, probability)` pairs in increasing bitmask order.
    pub fn conditioned_on_count(&self, count: usize) -> Vec<(u64, f64)> {
        let sector: Vec<(u64, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m.count_ones() as usize == count)
            .map(|(m, &p)| (m as u64, p))
            .collect();
        let z: f64 = sector.iter().map(|(_, p)| p).sum();
        sector.into_iter().map(|(m, p)| (m, p / z)).collect()
    }

    /// `bitmask,probability` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bitmask,probability\n");
        for (m, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{m},{}\n", fmt_g17(*p)));
        }
        out
    }
}

/// Probabilities of all `2^n` configurations of the kernel's window.
pub fn enumerate_distribution(k: &KernelMatrix) -> Result<Pmf> {
    let n = k.size();
    if n > MAX_ENUMERATION {
        return Err(Error::Size {
            what: "enumeration window",
            size: n,
            limit: MAX_ENUMERATION,
        });
    }
    let results: Vec<(f64, bool)> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let occ: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            probability_from_occupancy(k.matrix(), &occ)
        })
        .collect();
    let clamped = results.iter().filter(|(_, c)| *c).count();
    Ok(Pmf {
        window: *k.window(),
        probs: results.into_iter().map(|(p, _)| p).collect(),
        clamped,
    })
}

/// Exact sampler: pick eigenvectors by independent Bernoulli(λ) trials,
/// then place one point per selected vector, projecting the spanned
/// subspace away from each chosen site.
#[derive(Debug, Clone)]
pub struct DppSampler {
    window: Window,
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
}

impl DppSampler {
    pub fn new(k: &KernelMatrix) -> Result<Self> {
        let eig = k.eigen()?;
        let residual = eig.residual(k.matrix());
        if residual > EIGEN_RESIDUAL_TOL {
            return Err(Error::Numerical(format!(
                "eigendecomposition residual {residual:e} exceeds {EIGEN_RESIDUAL_TOL:e}"
            )));
        }
        Ok(Self {
            window: *k.window(),
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Configuration {
        let n = self.window.size();
        let mut basis: Vec<Vec<f64>> = self
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &lambda)| rng.uniform() < lambda.clamp(0.0, 1.0))
            .map(|(c, _)| self.eigenvectors.column(c))
            .collect();

        let mut config = Configuration::empty(self.window);
        while !basis.is_empty() {
            let k = basis.len() as f64;
            let target = rng.uniform() * k;
            let mut acc = 0.0;
            let mut chosen = None;
            for j in 0..n {
                if config.occupied_at(j) {
                    continue;
                }
                let mass: f64 = basis.iter().map(|v| v[j] * v[j]).sum();
                if mass <= 0.0 {
                    continue;
                }
                acc += mass;
                chosen = Some(j);
                if acc > target {
                    break;
                }
            }
            let j = chosen.expect("non-empty basis has mass on some free site");
            config.set(j, true);

            let pivot = (0..basis.len())
                .max_by(|&a, &b| basis[a][j].abs().total_cmp(&basis[b][j].abs()))
                .expect("non-empty basis");
            let pv = basis.swap_remove(pivot);
            for v in basis.iter_mut() {
                let f = v[j] / pv[j];
                for (vi, pi) in v.iter_mut().zip(&pv) {
                    *vi -= f * pi;
                }
                v[j] = 0.0;
            }
            orthonormalize(&mut basis);
        }
        config
    }
}

/// Modified Gram-Schmidt in place.
fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for j in 0..i {
            let (head, tail) = vs.split_at_mut(i);
            let d: f64 = head[j].iter().zip(tail[0].iter()).map(|(a, b)| a * b).sum();
            for (t, h) in tail[0].iter_mut().zip(head[j].iter()) {
                *t -= d * h;
            }
        }
        let norm = vs[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in vs[i].iter_mut() {
            *v /= norm;
        }
    }
}

/// One exact draw from the window DPP.
pub fn sample(k: &KernelMatrix, rng: &mut SeededRng) -> Result<Configuration> {
    Ok(DppSampler::new(k)?.sample(rng))
}

/// Fraction of samples in which every listed site is occupied.
pub fn empirical_correlation(samples: &[Configuration], sites: &[Site]) -> Result<f64> {
    let first = samples.first().ok_or(Error::EmptyInput("sample list"))?;
    let window = *first.window();
    if let Some(bad) = samples.iter().find(|s| s.window() != &window) {
        return Err(Error::WindowMismatch(format!(
            "samples mix windows {window} and {}",
            bad.window()
        )));
    }
    let idx = sites
        .iter()
        .map(|&s| {
            window
                .position(s)
                .ok_or_else(|| Error::WindowMismatch(format!("site {s} outside window {window}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = samples
        .iter()
        .filter(|c| idx.iter().all(|&i| c.occupied_at(i)))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Samples CSV: `sample_index,<site x values>` with 0/1 entries.
pub fn samples_to_csv(window: &Window, samples: &[Configuration]) -> String {
    let mut out = String::from("sample_index");
    for s in window.sites() {
        out.push(',');
        out.push_str(&fmt_g17(s.x()));
    }
    out.push('\n');
    for (i, c) in samples.iter().enumerate() {
        out.push_str(&i.to_string());
        for &o in c.occupancy() {
            out.push_str(if o { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    out
}
