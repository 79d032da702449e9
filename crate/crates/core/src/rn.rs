//! Swap ratios `φ(γ, x, y) = P(σ_{x,y} γ) / P(γ)` of the window DPP and
//! diagnostics of how they settle as the window grows.

use rayon::prelude::*;
use serde::Serialize;

use crate::dpp::{config_probability, enumerate_distribution, Configuration, DppSampler};
use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::kernel::{kernel_matrix, AdmissiblePair, KernelMatrix, Site, Window};
use crate::rng::SeededRng;

/// Probabilities below this are treated as zero when dividing.
pub const MIN_PROBABILITY: f64 = 1e-300;

/// Rejection attempts allowed per conditioned sample.
pub const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

/// An unordered pair of distinct sites, the transposition `σ_{x,y}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SwapPair {
    x: Site,
    y: Site,
}

impl SwapPair {
    pub fn new(x: Site, y: Site) -> Result<Self> {
        if x == y {
            return Err(Error::SamePoint(x.index()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> Site {
        self.x
    }

    pub fn y(&self) -> Site {
        self.y
    }
}

/// `σ_{x,y} γ`: exchange the occupancies at `x` and `y`.
pub fn apply_transposition(gamma: &Configuration, s: SwapPair) -> Result<Configuration> {
    let w = gamma.window();
    let (i, j) = match (w.position(s.x), w.position(s.y)) {
        (Some(i), Some(j)) => (i, j),
        _ => {
            return Err(Error::WindowMismatch(format!(
                "swap {}<->{} not inside window {w}",
                s.x, s.y
            )))
        }
    };
    let mut out = gamma.clone();
    out.swap_positions(i, j);
    Ok(out)
}

/// Exact Radon-Nikodym derivative of the swapped window DPP.
pub fn rn_derivative(k: &KernelMatrix, gamma: &Configuration, s: SwapPair) -> Result<f64> {
    let p = config_probability(k, gamma)?;
    if p < MIN_PROBABILITY {
        return Err(Error::ZeroProbability(p));
    }
    let swapped = apply_transposition(gamma, s)?;
    if swapped == *gamma {
        return Ok(1.0);
    }
    Ok(config_probability(k, &swapped)? / p)
}

/// First and second moments of `φ(·, s)` under the window DPP.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RnMoments {
    /// `Σ_η P(η) φ(η, s)`; equals 1 when every configuration has positive mass.
    pub mean: f64,
    /// `Σ_η P(η) φ(η, s)²`.
    pub second_moment: f64,
    /// `max |φ(η) φ(σ η) − 1|` over positive-probability `η`.
    pub max_inversion_residual: f64,
}

/// Moments of the swap ratio by full enumeration of the window.
pub fn rn_moments(k: &KernelMatrix, s: SwapPair) -> Result<RnMoments> {
    let pmf = enumerate_distribution(k)?;
    let w = *k.window();
    let (i, j) = (
        w.position(s.x)
            .ok_or_else(|| Error::WindowMismatch(format!("{} outside {w}", s.x)))?,
        w.position(s.y)
            .ok_or_else(|| Error::WindowMismatch(format!("{} outside {w}", s.y)))?,
    );
    let swap_mask = |m: u64| {
        let (bi, bj) = (m >> i & 1, m >> j & 1);
        if bi == bj {
            m
        } else {
            m ^ (1 << i) ^ (1 << j)
        }
    };
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut residual: f64 = 0.0;
    for (m, &p) in pmf.probs().iter().enumerate() {
        if p < MIN_PROBABILITY {
            continue;
        }
        let q = pmf.prob_of_mask(swap_mask(m as u64));
        let phi = q / p;
        mean += p * phi;
        second += p * phi * phi;
        if q >= MIN_PROBABILITY {
            residual = residual.max((phi * (p / q) - 1.0).abs());
        }
    }
    Ok(RnMoments {
        mean,
        second_moment: second,
        max_inversion_residual: residual,
    })
}

/// Occupancies fixed at a handful of sites; everything else is left to the DPP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SitePattern {
    entries: Vec<(Site, bool)>,
}

impl SitePattern {
    pub fn new(mut entries: Vec<(Site, bool)>) -> Result<Self> {
        entries.sort();
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateSite(w[0].0.index()));
        }
        Ok(Self { entries })
    }

    /// Parse `index:occupancy` items separated by commas, e.g. `-1:1,0:0`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse pattern {text:?}"));
        let mut entries = Vec::new();
        for item in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (site, occ) = item.split_once(':').ok_or_else(bad)?;
            let site: i64 = site.trim().parse().map_err(|_| bad())?;
            let occ = match occ.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            entries.push((Site(site), occ));
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(Site, bool)] {
        &self.entries
    }

    pub fn matches(&self, c: &Configuration) -> bool {
        self.entries
            .iter()
            .all(|&(s, occ)| c.is_occupied(s).map(|o| o == occ).unwrap_or(false))
    }

    /// The same pattern with the occupancies at `x` and `y` exchanged.
    pub fn swapped(&self, s: SwapPair) -> Self {
        let lookup = |site: Site| self.entries.iter().find(|e| e.0 == site).map(|e| e.1);
        let (ox, oy) = (lookup(s.x), lookup(s.y));
        let mut entries: Vec<(Site, bool)> = self
            .entries
            .iter()
            .filter(|e| e.0 != s.x && e.0 != s.y)
            .copied()
            .collect();
        if let Some(o) = oy {
            entries.push((s.x, o));
        }
        if let Some(o) = ox {
            entries.push((s.y, o));
        }
        entries.sort();
        Self { entries }
    }
}

/// One line of the stabilization table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilizationRow {
    pub window_size: usize,
    pub window: Window,
    pub phi_mean: f64,
    pub phi_std: f64,
    pub n_samples: usize,
    /// `|φ̂(this size) − φ̂(previous size)|`; `None` on the first row.
    pub delta: Option<f64>,
    /// `max |φ(γ) φ(σγ) − 1|` over the conditioned samples.
    pub max_inversion_residual: f64,
}

/// The window of `size` sites centred on the hull of the swap and pattern.
pub fn stabilization_window(pattern: &SitePattern, s: SwapPair, size: usize) -> Result<Window> {
    let sites = pattern.entries.iter().map(|e| e.0).chain([s.x, s.y]);
    let lo = sites.clone().min().expect("swap sites").index();
    let hi = sites.max().expect("swap sites").index();
    let hull = (hi - lo + 1) as usize;
    if size < hull {
        return Err(Error::InvalidParameter(format!(
            "window size {size} cannot hold the swap and pattern (span {hull})"
        )));
    }
    let left = lo - ((size - hull) / 2) as i64;
    Window::new(left, left + size as i64 - 1)
}

fn conditioned_sample(
    sampler: &DppSampler,
    pattern: &SitePattern,
    rng: &mut SeededRng,
) -> Result<Configuration> {
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let c = sampler.sample(rng);
        if pattern.matches(&c) {
            return Ok(c);
        }
    }
    Err(Error::PatternTooRare(MAX_REJECTION_ATTEMPTS))
}

/// Mean and spread of `φ(γ, s)` over window-DPP samples conditioned on
/// `pattern`, for each window size. Sizes run in parallel; size `i` uses
/// stream `i` of `rng`'s seed.
pub fn rn_stabilization(
    p: &AdmissiblePair,
    pattern: &SitePattern,
    s: SwapPair,
    window_sizes: &[usize],
    n_samples: usize,
    rng: &SeededRng,
) -> Result<Vec<StabilizationRow>> {
    if n_samples == 0 {
        return Err(Error::EmptyInput("n_samples"));
    }
    let mut rows = window_sizes
        .par_iter()
        .enumerate()
        .map(|(i, &size)| {
            let w = stabilization_window(pattern, s, size)?;
            let k = kernel_matrix(p, &w)?;
            let sampler = DppSampler::new(&k)?;
            let mut stream = rng.stream(i as u64);
            let mut phis = Vec::with_capacity(n_samples);
            let mut residual: f64 = 0.0;
            for _ in 0..n_samples {
                let gamma = conditioned_sample(&sampler, pattern, &mut stream)?;
                let phi = rn_derivative(&k, &gamma, s)?;
                let back = rn_derivative(&k, &apply_transposition(&gamma, s)?, s)?;
                residual = residual.max((phi * back - 1.0).abs());
                phis.push(phi);
            }
            let mean = phis.iter().sum::<f64>() / n_samples as f64;
            let var = if n_samples > 1 {
                phis.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_samples - 1) as f64
            } else {
                0.0
            };
            Ok(StabilizationRow {
                window_size: size,
                window: w,
                phi_mean: mean,
                phi_std: var.sqrt(),
                n_samples,
                delta: None,
                max_inversion_residual: residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 1..rows.len() {
        rows[i].delta = Some((rows[i].phi_mean - rows[i - 1].phi_mean).abs());
    }
    Ok(rows)
}

/// `window_size,phi_mean,phi_std,n_samples`
pub fn stabilization_csv(rows: &[StabilizationRow]) -> String {
    let mut out = String::from("window_size,phi_mean,phi_std,n_samples\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.window_size,
            fmt_g17(r.phi_mean),
            fmt_g17(r.phi_std),
            r.n_samples
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp::enumerate_distribution;

    fn pair() -> AdmissiblePair {
        AdmissiblePair::real(1.5, 1.7).unwrap()
    }

    #[test]
    fn transposition_examples() {
        let w = Window::new(0, 3).unwrap();
        let g = Configuration::parse(w, "1010").unwrap();
        let s = SwapPair::new(Site(1), Site(2)).unwrap();
        assert_eq!(apply_transposition(&g, s).unwrap().to_string(), "1100");
        let fixed = SwapPair::new(Site(0), Site(2)).unwrap();
        assert_eq!(apply_transposition(&g, fixed).unwrap(), g);
        let twice = apply_transposition(&apply_transposition(&g, s).unwrap(), s).unwrap();
        assert_eq!(twice, g);
        let outside = SwapPair::new(Site(0), Site(9)).unwrap();
        assert!(matches!(
            apply_transposition(&g, outside),
            Err(Error::WindowMismatch(_))
        ));
        assert_eq!(SwapPair::new(Site(1), Site(1)), Err(Error::SamePoint(1)));
    }

    #[test]
    fn rn_on_fixed_points_is_one() {
        let k = kernel_matrix(&pair(), &Window::new(0, 5).unwrap()).unwrap();
        let g = Configuration::parse(*k.window(), "110010").unwrap();
        let s = SwapPair::new(Site(0), Site(1)).unwrap();
        assert_eq!(rn_derivative(&k, &g, s).unwrap(), 1.0);
    }

    #[test]
    fn rn_matches_enumeration_ratio_and_inverts() {
        let w = Window::new(0, 5).unwrap();
        let k = kernel_matrix(&pair(), &w).unwrap();
        let pmf = enumerate_distribution(&k).unwrap();
        let g = Configuration::parse(w, "100000").unwrap();
        let s = SwapPair::new(Site(0), Site(5)).unwrap();
        let phi = rn_derivative(&k, &g, s).unwrap();
        let expected = pmf.prob_of_mask(0b100000) / pmf.prob_of_mask(0b000001);
        assert!((phi / expected - 1.0).abs() < 1e-12);
        // baseline from an inclusion-exclusion evaluation of the same ratio
        assert!((phi - 0.299_790_092_735_347_35).abs() < 1e-10, "{phi}");
        let back = rn_derivative(&k, &apply_transposition(&g, s).unwrap(), s).unwrap();
        assert!((phi * back - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_on_small_window() {
        let k = kernel_matrix(&pair(), &Window::new(-4, 3).unwrap()).unwrap();
        let s = SwapPair::new(Site(-2), Site(1)).unwrap();
        let m = rn_moments(&k, s).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-9);
        assert!(m.second_moment.is_finite() && m.second_moment >= 1.0);
        assert!(m.max_inversion_residual < 1e-9);
    }

    #[test]
    fn pattern_parsing_and_swapping() {
        let p = SitePattern::parse("0:1, -1:0").unwrap();
        assert_eq!(p.entries(), &[(Site(-1), false), (Site(0), true)]);
        let s = SwapPair::new(Site(0), Site(2)).unwrap();
        assert_eq!(
            p.swapped(s).entries(),
            &[(Site(-1), false), (Site(2), true)]
        );
        assert!(SitePattern::parse("0:1,0:0").is_err());
        assert!(SitePattern::parse("0=1").is_err());
        assert_eq!(SitePattern::parse("").unwrap().entries(), &[]);
    }

    #[test]
    fn stabilization_windows_are_centred() {
        let p = SitePattern::parse("0:1").unwrap();
        let s = SwapPair::new(Site(0), Site(3)).unwrap();
        assert_eq!(
            stabilization_window(&p, s, 8).unwrap(),
            Window::new(-2, 5).unwrap()
        );
        assert!(stabilization_window(&p, s, 3).is_err());
    }

    #[test]
    fn stabilization_equal_pattern_gives_one() {
        let pat = SitePattern::parse("0:1,1:1").unwrap();
        let s = SwapPair::new(Site(0), Site(1)).unwrap();
        let rows = rn_stabilization(&pair(), &pat, s, &[6, 10], 20, &SeededRng::new(1)).unwrap();
        for r in &rows {
            assert_eq!(r.phi_mean, 1.0);
            assert_eq!(r.phi_std, 0.0);
        }
        assert_eq!(rows[1].delta, Some(0.0));
    }

    #[test]
    fn stabilization_inversion_and_determinism() {
        let pat = SitePattern::parse("0:1,1:0").unwrap();
        let s = SwapPair::new(Site(0), Site(1)).unwrap();
        let rng = SeededRng::new(9);
        let rows = rn_stabilization(&pair(), &pat, s, &[6, 10, 14], 30, &rng).unwrap();
        let again = rn_stabilization(&pair(), &pat, s, &[6, 10, 14], 30, &rng).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert!(a.max_inversion_residual < 1e-10);
            assert_eq!(a.phi_mean.to_bits(), b.phi_mean.to_bits());
        }
        let csv = stabilization_csv(&rows);
        assert!(csv.starts_with("window_size,phi_mean,phi_std,n_samples\n6,"));
    }
}
