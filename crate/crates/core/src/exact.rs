//! Exact finite-state analysis of the swap dynamics: the generator on a
//! window (all of `{0,1}^Λ` or one particle-number sector), reversibility,
//! the Dirichlet form and the spectrum.
//!
//! The generator is stored sparsely. A swap changes two sites, so each row
//! holds at most `n²/4` off-diagonal entries while the state space grows
//! like `2^n`; dense copies are only produced on request for small chains.

use rayon::prelude::*;
use serde::Serialize;

use crate::dpp::{config_probability, Configuration};
use crate::dynamics::{rate, RateEngine, RateModel};
use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, Window};
use crate::linalg::{expm, symmetric_eigen, Matrix};
use crate::rn::SwapPair;

/// Largest window for a generator on the full configuration space.
pub const MAX_FULL_SITES: usize = 14;

/// Largest window for a sectored generator.
pub const MAX_SECTOR_SITES: usize = 18;

/// Largest state space converted to a dense matrix.
pub const MAX_DENSE_STATES: usize = 1024;

/// Largest reversibility residual for which the symmetrised spectrum is used.
pub const SPECTRUM_REVERSIBILITY_TOL: f64 = 1e-8;

/// Markov generator `Q = −A` of the swap dynamics on a finite state list.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    kernel: KernelMatrix,
    model: RateModel,
    sector: Option<usize>,
    binomial: Vec<Vec<u64>>,
    states: Vec<u64>,
    measure: Vec<f64>,
    /// Off-diagonal entries `(column, Q[row, column])` per row.
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

fn binomial_table(n: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; n + 2]; n + 1];
    for i in 0..=n {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0 };
        }
    }
    c
}

/// Rank of `mask` among masks of the same popcount in increasing order:
/// `Σ_i C(p_i, i + 1)` over set-bit positions `p_0 < p_1 < …`.
fn combinadic_rank(binomial: &[Vec<u64>], mask: u64) -> usize {
    let mut rank = 0;
    let mut m = mask;
    let mut i = 0;
    while m != 0 {
        let p = m.trailing_zeros() as usize;
        rank += binomial[p][i + 1];
        m &= m - 1;
        i += 1;
    }
    rank as usize
}

/// Build the generator of the swap dynamics on `k`'s window.
///
/// `Q[η, σ_{x,y} η] = 2 c(η, x, y)` for unordered pairs with unequal
/// occupancy; the diagonal makes each row sum to zero. `μ` is the window DPP
/// law, renormalised over the sector when one is given.
pub fn build_generator(
    model: &RateModel,
    k: &KernelMatrix,
    sector: Option<usize>,
) -> Result<GeneratorMatrix> {
    let w = *k.window();
    let n = w.size();
    let limit = if sector.is_some() {
        MAX_SECTOR_SITES
    } else {
        MAX_FULL_SITES
    };
    if n > limit {
        return Err(Error::Size {
            what: if sector.is_some() {
                "sectored generator window"
            } else {
                "full generator window"
            },
            size: n,
            limit,
        });
    }
    if let Some(c) = sector {
        if c > n {
            return Err(Error::InvalidParameter(format!(
                "sector {c} exceeds the {n} sites of window {w}"
            )));
        }
    }
    let states: Vec<u64> = (0..1u64 << n)
        .filter(|m| sector.is_none_or(|c| m.count_ones() as usize == c))
        .collect();
    let binomial = binomial_table(n);
    let engine = RateEngine::new(*model, k.clone());

    let built: Vec<(f64, Vec<(u64, f64)>)> = states
        .par_iter()
        .map(|&m| {
            let gamma = Configuration::from_bits(w, m);
            let p = config_probability(k, &gamma)?;
            let rates = engine.compute(&gamma)?;
            let targets = rates
                .per_pair
                .iter()
                .map(|(pair, r)| {
                    let i = w.position(pair.x()).expect("pair in window");
                    let j = w.position(pair.y()).expect("pair in window");
                    (m ^ (1 << i) ^ (1 << j), *r)
                })
                .collect();
            Ok((p, targets))
        })
        .collect::<Result<_>>()?;

    let total: f64 = built.iter().map(|b| b.0).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroProbability(total));
    }
    let mut g = GeneratorMatrix {
        kernel: k.clone(),
        model: *model,
        sector,
        binomial,
        measure: built.iter().map(|b| b.0 / total).collect(),
        rows: Vec::with_capacity(states.len()),
        diagonal: Vec::with_capacity(states.len()),
        states,
    };
    for (_, targets) in built {
        let row: Vec<(usize, f64)> = targets
            .into_iter()
            .filter(|&(_, r)| r != 0.0)
            .map(|(t, r)| (g.index_of(t).expect("swaps stay in the sector"), r))
            .collect();
        g.diagonal.push(-row.iter().map(|e| e.1).sum::<f64>());
        g.rows.push(row);
    }
    Ok(g)
}

impl GeneratorMatrix {
    pub fn window(&self) -> &Window {
        self.kernel.window()
    }

    pub fn sector(&self) -> Option<usize> {
        self.sector
    }

    pub fn model(&self) -> &RateModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State bitmasks in increasing order.
    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> Configuration {
        Configuration::from_bits(*self.window(), self.states[i])
    }

    /// `μ` over the state list.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// Position of `mask` in the state list.
    pub fn index_of(&self, mask: u64) -> Option<usize> {
        if mask >> self.window().size() != 0 {
            return None;
        }
        match self.sector {
            None => Some(mask as usize),
            Some(c) if mask.count_ones() as usize == c => {
                Some(combinadic_rank(&self.binomial, mask))
            }
            Some(_) => None,
        }
    }

    /// `Q[i, j]`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal[i]
        } else {
            self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
        }
    }

    /// Off-diagonal entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `Q F`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        Ok((0..self.len())
            .map(|i| {
                self.diagonal[i] * f[i] + self.rows[i].iter().map(|&(j, q)| q * f[j]).sum::<f64>()
            })
            .collect())
    }

    /// `v Q` for a row vector `v`.
    pub fn apply_left(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let mut out: Vec<f64> = (0..self.len()).map(|i| v[i] * self.diagonal[i]).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, q) in row {
                out[j] += v[i] * q;
            }
        }
        Ok(out)
    }

    /// `⟨−Q F, H⟩_μ`.
    pub fn generator_form(&self, f: &[f64], h: &[f64]) -> Result<f64> {
        self.check_len(h)?;
        let qf = self.apply(f)?;
        Ok(-(0..self.len())
            .map(|i| self.measure[i] * qf[i] * h[i])
            .sum::<f64>())
    }

    /// `‖Q 1‖_∞`.
    pub fn conservativity_residual(&self) -> f64 {
        self.apply(&vec![1.0; self.len()])
            .expect("matching length")
            .iter()
            .fold(0.0, |a, x| a.max(x.abs()))
    }

    /// `‖μ Q‖_∞`.
    pub fn stationarity_residual(&self) -> f64 {
        self.apply_left(&self.measure)
            .expect("matching length")
            .iter()
            .fold(0.0, |a, x| a.max(x.abs()))
    }

    /// Smallest off-diagonal entry; `+∞` when there are none.
    pub fn min_off_diagonal(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|e| e.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> Result<Matrix> {
        self.check_dense()?;
        let mut m = Matrix::zeros(self.len(), self.len());
        for i in 0..self.len() {
            m[(i, i)] = self.diagonal[i];
            for &(j, q) in &self.rows[i] {
                m[(i, j)] = q;
            }
        }
        Ok(m)
    }

    /// `exp(t Q)`.
    pub fn semigroup(&self, t: f64) -> Result<Matrix> {
        expm(&self.to_dense()?.scale(t))
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn check_dense(&self) -> Result<()> {
        if self.len() > MAX_DENSE_STATES {
            return Err(Error::Size {
                what: "dense generator states",
                size: self.len(),
                limit: MAX_DENSE_STATES,
            });
        }
        Ok(())
    }
}

/// `max |μ(η) Q(η, η') − μ(η') Q(η', η)| / max(flux, 1e-300)` over state pairs.
pub fn check_reversibility(g: &GeneratorMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in g.rows.iter().enumerate() {
        for &(j, q) in row {
            let f1 = g.measure[i] * q;
            let f2 = g.measure[j] * g.get(j, i);
            let diff = (f1 - f2).abs();
            if diff > 0.0 {
                worst = worst.max(diff / f1.max(f2).max(1e-300));
            }
        }
    }
    worst
}

/// `½ Σ_η μ(η) Σ_{x≠y} c(η, x, y) (∇_{x,y} F)(η) (∇_{x,y} H)(η)`, with the
/// rates evaluated afresh from the model rather than read off `Q`.
pub fn dirichlet_form(g: &GeneratorMatrix, f: &[f64], h: &[f64]) -> Result<f64> {
    g.check_len(f)?;
    g.check_len(h)?;
    let w = *g.window();
    let n = w.size();
    let mut total = 0.0;
    for (idx, &m) in g.states.iter().enumerate() {
        let gamma = Configuration::from_bits(w, m);
        let mut inner = 0.0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                if (m >> i & 1) == (m >> j & 1) {
                    continue;
                }
                let s = SwapPair::new(w.site(i), w.site(j))?;
                let c = rate(&g.model, &g.kernel, &gamma, s)?;
                if c == 0.0 {
                    continue;
                }
                let t = g
                    .index_of(m ^ (1 << i) ^ (1 << j))
                    .expect("swaps stay in the sector");
                inner += c * (f[t] - f[idx]) * (h[t] - h[idx]);
            }
        }
        total += g.measure[idx] * inner;
    }
    Ok(0.5 * total)
}

/// Eigenvalues of the reversible generator, largest first.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Minus the second-largest eigenvalue; 0 for a single-state chain.
    pub spectral_gap: f64,
}

/// Spectrum of `Q` through the symmetric matrix `D^{1/2} Q D^{-1/2}`,
/// `D = diag(μ)`.
pub fn spectrum(g: &GeneratorMatrix) -> Result<Spectrum> {
    g.check_dense()?;
    let residual = check_reversibility(g);
    if residual > SPECTRUM_REVERSIBILITY_TOL {
        return Err(Error::NotReversible(residual));
    }
    if let Some(&m) = g.measure.iter().find(|&&m| m.is_nan() || m <= 0.0) {
        return Err(Error::ZeroProbability(m));
    }
    let sq: Vec<f64> = g.measure.iter().map(|m| m.sqrt()).collect();
    let n = g.len();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = g.diagonal[i];
        for &(j, q) in &g.rows[i] {
            if i < j {
                let sym = 0.5 * (sq[i] / sq[j] * q + sq[j] / sq[i] * g.get(j, i));
                s[(i, j)] = sym;
                s[(j, i)] = sym;
            }
        }
    }
    let mut eigenvalues = symmetric_eigen(&s)?.values;
    eigenvalues.reverse();
    let spectral_gap = eigenvalues.get(1).map_or(0.0, |&l| -l);
    Ok(Spectrum {
        eigenvalues,
        spectral_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp::enumerate_distribution;
    use crate::dynamics::{ProximityKind, ProximitySpec, RateKind};
    use crate::kernel::{kernel_matrix, AdmissiblePair, Site};
    use crate::rn::rn_derivative;
    use crate::rng::SeededRng;

    fn kernel(lo: i64, hi: i64) -> KernelMatrix {
        kernel_matrix(
            &AdmissiblePair::real(1.5, 1.7).unwrap(),
            &Window::new(lo, hi).unwrap(),
        )
        .unwrap()
    }

    fn nn(kind: RateKind) -> RateModel {
        RateModel::new(kind, ProximitySpec::nearest_neighbor(1.0))
    }

    fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect()
    }

    #[test]
    fn combinadic_rank_matches_sorted_order() {
        let k = kernel(0, 7);
        let g = build_generator(&nn(RateKind::Metropolis), &k, Some(3)).unwrap();
        assert_eq!(g.len(), 56);
        for (i, &m) in g.states().iter().enumerate() {
            assert_eq!(g.index_of(m), Some(i));
        }
        assert_eq!(g.index_of(0b1111), None);
    }

    #[test]
    fn two_site_generator() {
        let k = kernel(0, 1);
        let g = build_generator(&nn(RateKind::Metropolis), &k, Some(1)).unwrap();
        assert_eq!(g.states(), &[0b01, 0b10]);
        let from = g.state(0);
        let s = SwapPair::new(Site(0), Site(1)).unwrap();
        let phi = rn_derivative(&k, &from, s).unwrap();
        assert_eq!(g.get(0, 1), 2.0 * phi.min(1.0));
        assert_eq!(g.get(0, 0), -g.get(0, 1));
    }

    #[test]
    fn rows_sum_to_zero_and_rates_are_nonnegative() {
        let k = kernel(-3, 4);
        for kind in RateKind::ALL {
            let g = build_generator(&nn(kind), &k, None).unwrap();
            assert_eq!(g.len(), 256);
            assert!(g.conservativity_residual() < 1e-12);
            assert!(g.min_off_diagonal() >= 0.0);
            let total: f64 = g.measure().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_measure_matches_enumeration() {
        let k = kernel(-2, 3);
        let g = build_generator(&nn(RateKind::SqrtRatio), &k, None).unwrap();
        let pmf = enumerate_distribution(&k).unwrap();
        let total = pmf.total();
        for (m, &p) in pmf.probs().iter().enumerate() {
            assert!((g.measure()[m] - p / total).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_and_reversible_on_eight_site_sector() {
        let k = kernel(-4, 3);
        for kind in RateKind::ALL {
            let g = build_generator(&nn(kind), &k, Some(3)).unwrap();
            assert!(g.stationarity_residual() < 1e-10, "{kind}");
            let r = check_reversibility(&g);
            let tol = if kind == RateKind::Metropolis {
                1e-12
            } else {
                1e-10
            };
            assert!(r < tol, "{kind}: {r:e}");
        }
    }

    #[test]
    fn symmetric_two_state_chain_is_reversible() {
        // any two-state chain is reversible with respect to its stationary law
        let g = build_generator(&nn(RateKind::GlauberLike), &kernel(-1, 0), Some(1)).unwrap();
        assert!(check_reversibility(&g) < 1e-12);
    }

    #[test]
    fn dirichlet_form_matches_generator() {
        let k = kernel(-4, 3);
        let mut rng = SeededRng::new(11);
        for kind in RateKind::ALL {
            let model = RateModel::new(
                kind,
                ProximitySpec::new(ProximityKind::ExpDecay { alpha: 0.7 }, 1.3).unwrap(),
            );
            let g = build_generator(&model, &k, Some(4)).unwrap();
            let ones = vec![1.0; g.len()];
            assert_eq!(dirichlet_form(&g, &ones, &ones).unwrap(), 0.0);
            for _ in 0..10 {
                let f = random_vec(&mut rng, g.len());
                let h = random_vec(&mut rng, g.len());
                let e = dirichlet_form(&g, &f, &h).unwrap();
                let a = g.generator_form(&f, &h).unwrap();
                assert!((e - a).abs() < 1e-10, "{kind}: {e} vs {a}");
                assert!(dirichlet_form(&g, &f, &f).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn dirichlet_form_rejects_wrong_length() {
        let g = build_generator(&nn(RateKind::Metropolis), &kernel(0, 3), Some(2)).unwrap();
        assert!(matches!(
            dirichlet_form(&g, &[1.0; 5], &[1.0; 6]),
            Err(Error::DimensionMismatch {
                expected: 6,
                got: 5
            })
        ));
    }

    #[test]
    fn spectrum_is_nonpositive_with_zero_top() {
        let k = kernel(-4, 3);
        for kind in RateKind::ALL {
            let g = build_generator(&nn(kind), &k, Some(3)).unwrap();
            let s = spectrum(&g).unwrap();
            assert!(s.eigenvalues[0].abs() < 1e-10);
            assert!(s.eigenvalues.iter().all(|&l| l <= 1e-10));
            assert!(s.spectral_gap > 0.0);
            // √μ spans the kernel of the symmetrised matrix, i.e. Q 1 = 0
            let q = g.to_dense().unwrap();
            assert!(q
                .matvec(&vec![1.0; g.len()])
                .iter()
                .all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn semigroup_is_markov() {
        let g = build_generator(&nn(RateKind::GlauberLike), &kernel(-4, 3), Some(3)).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let p = g.semigroup(t).unwrap();
            for i in 0..g.len() {
                let row = p.row(i);
                assert!(row.iter().all(|&x| x >= -1e-9));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn size_limits() {
        let big = kernel(0, 14);
        let model = nn(RateKind::Metropolis);
        assert!(matches!(
            build_generator(&model, &big, None),
            Err(Error::Size { limit: 14, .. })
        ));
        let huge = kernel(0, 18);
        assert!(matches!(
            build_generator(&model, &huge, Some(2)),
            Err(Error::Size { limit: 18, .. })
        ));
        assert!(build_generator(&model, &kernel(0, 3), Some(5)).is_err());
        // independent sites keep every one of the C(13, 6) states likely
        let w = Window::new(0, 12).unwrap();
        let flat = KernelMatrix::from_matrix(w, Matrix::identity(13).scale(0.4)).unwrap();
        let g = build_generator(&model, &flat, Some(6)).unwrap();
        assert_eq!(g.len(), 1716);
        assert!(matches!(spectrum(&g), Err(Error::Size { .. })));
    }

    #[test]
    fn spectral_gap_baseline() {
        // six sites, three particles, nearest-neighbour Metropolis at (1.5, 1.7)
        let g = build_generator(&nn(RateKind::Metropolis), &kernel(-3, 2), Some(3)).unwrap();
        let s = spectrum(&g).unwrap();
        assert_eq!(s.eigenvalues.len(), 20);
        assert!(
            (s.spectral_gap - GAP_BASELINE).abs() < 1e-10,
            "{}",
            s.spectral_gap
        );
    }

    const GAP_BASELINE: f64 = 1.0763065511680991;
}
