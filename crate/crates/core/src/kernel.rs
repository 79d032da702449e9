//! The gamma kernel on the half-integer lattice.
//!
//! For an admissible parameter pair `(z, z')` the kernel is
//!
//! ```text
//! K(x, y) = S · (A(x) B(y) − B(x) A(y)) / (x − y),   x ≠ y
//! K(x, x) = S · (ψ(z + x + ½) − ψ(z' + x + ½))
//! S       = sin(πz) sin(πz') / (π sin(π(z − z')))
//! A(x)    = Γ(z + x + ½) / √(Γ(z + x + ½) Γ(z' + x + ½)),   B(x) likewise with z'
//! ```
//!
//! On the real branch `A(x) = s·e^{L(x)}` and `B(x) = s·e^{−L(x)}` with
//! `L(x) = ½(ln|Γ(z+x+½)| − ln|Γ(z'+x+½)|)` and `s` the common sign of the
//! two gamma values, so the off-diagonal numerator is `2 s_x s_y sinh(L(x) − L(y))`
//! and nothing overflows however far the window reaches. On the conjugate
//! branch `A(x) = e^{iθ(x)}` with `θ = arg Γ(z + x + ½)` and `B = conj(A)`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::linalg::{symmetric_eigen, Matrix, SymmetricEigen};
use crate::specfun::{
    digamma, digamma_complex, log_gamma_complex, log_gamma_signed, sin_pi, sin_pi_complex,
};

/// Largest window accepted by [`kernel_matrix`].
pub const MAX_WINDOW: usize = 4096;

/// Largest tolerated imaginary residue of a conjugate-branch kernel value.
const REALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Both parameters real, inside a common open interval `(m, m + 1)`.
    RealInterval,
    /// `z` non-real and `z' = conj(z)`.
    ConjugatePair,
}

/// Whether `(z, z')` falls in one of the two supported admissible families:
/// a non-integer `z` with `z' = conj(z)`, or real `z, z'` in a common open
/// unit interval. Both families satisfy `(z + n)(z' + n) > 0` for every integer `n`.
pub fn is_admissible(z: Complex64, z_prime: Complex64) -> bool {
    let conj_pair = z_prime == z.conj() && !(z.im == 0.0 && z.re == z.re.floor());
    let real_interval = z.im == 0.0
        && z_prime.im == 0.0
        && z.re.is_finite()
        && z_prime.re.is_finite()
        && z.re != z.re.floor()
        && z_prime.re != z_prime.re.floor()
        && z.re.floor() == z_prime.re.floor();
    conj_pair || real_interval
}

/// A validated parameter pair with `z ≠ z'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissiblePair {
    branch: Branch,
    z: Complex64,
    z_prime: Complex64,
    prefactor: Complex64,
}

impl AdmissiblePair {
    pub fn new(z: Complex64, z_prime: Complex64) -> Result<Self> {
        if !is_admissible(z, z_prime) {
            return Err(Error::InvalidParameter(format!(
                "(z, z') = ({z}, {z_prime}) is not admissible"
            )));
        }
        if z == z_prime {
            return Err(Error::InvalidParameter(format!(
                "z = z' = {z} is the degenerate limit and is not supported; \
                 try z' = z + 1e-6"
            )));
        }
        Ok(Self::new_unchecked(z, z_prime))
    }

    pub fn real(z: f64, z_prime: f64) -> Result<Self> {
        Self::new(Complex64::new(z, 0.0), Complex64::new(z_prime, 0.0))
    }

    /// Skips validation. Only for exercising the error paths of the
    /// evaluation routines.
    #[doc(hidden)]
    pub fn new_unchecked(z: Complex64, z_prime: Complex64) -> Self {
        let branch = if z.im == 0.0 && z_prime.im == 0.0 {
            Branch::RealInterval
        } else {
            Branch::ConjugatePair
        };
        let prefactor = match branch {
            Branch::RealInterval => Complex64::new(
                sin_pi(z.re) * sin_pi(z_prime.re)
                    / (std::f64::consts::PI * sin_pi(z.re - z_prime.re)),
                0.0,
            ),
            Branch::ConjugatePair => {
                sin_pi_complex(z) * sin_pi_complex(z_prime)
                    / (std::f64::consts::PI * sin_pi_complex(z - z_prime))
            }
        };
        Self {
            branch,
            z,
            z_prime,
            prefactor,
        }
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn z_prime(&self) -> Complex64 {
        self.z_prime
    }

    /// `sin(πz) sin(πz') / (π sin(π(z − z')))`; purely imaginary on the
    /// conjugate branch.
    pub fn prefactor(&self) -> Complex64 {
        self.prefactor
    }
}

/// A lattice point `x = index + ½` of `ℤ + ½`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site(pub i64);

impl Site {
    pub fn index(self) -> i64 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0 as f64 + 0.5
    }

    pub fn from_x(x: f64) -> Result<Self> {
        let m = x - 0.5;
        if m != m.floor() || !m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{x} is not a half-integer"
            )));
        }
        Ok(Site(m as i64))
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.x())
    }
}

/// An inclusive contiguous block of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    lo: Site,
    hi: Site,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidParameter(format!("empty window {lo}..{hi}")));
        }
        Ok(Self {
            lo: Site(lo),
            hi: Site(hi),
        })
    }

    /// `size` sites centred on the bond between indices -1 and 0.
    pub fn centered(size: usize) -> Result<Self> {
        let size = size as i64;
        Self::new(-size / 2, size - size / 2 - 1)
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    pub fn size(&self) -> usize {
        (self.hi.0 - self.lo.0 + 1) as usize
    }

    pub fn contains(&self, s: Site) -> bool {
        self.lo <= s && s <= self.hi
    }

    pub fn position(&self, s: Site) -> Option<usize> {
        self.contains(s).then(|| (s.0 - self.lo.0) as usize)
    }

    pub fn site(&self, pos: usize) -> Site {
        debug_assert!(pos < self.size());
        Site(self.lo.0 + pos as i64)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        (self.lo.0..=self.hi.0).map(Site)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo.0, self.hi.0)
    }
}

/// Everything about one site that the kernel formula needs.
#[derive(Debug, Clone, Copy)]
enum SiteFactor {
    Real {
        sign: i8,
        half_log_ratio: f64,
        psi_diff: f64,
    },
    Conjugate {
        a: Complex64,
        psi_diff: Complex64,
    },
}

fn site_factor(p: &AdmissiblePair, s: Site) -> Result<SiteFactor> {
    let shift = s.x() + 0.5;
    match p.branch {
        Branch::RealInterval => {
            let ga = log_gamma_signed(p.z.re + shift)?;
            let gb = log_gamma_signed(p.z_prime.re + shift)?;
            if ga.sign != gb.sign {
                return Err(Error::Domain(format!(
                    "Γ(z + x + ½) Γ(z' + x + ½) < 0 at x = {}",
                    s.x()
                )));
            }
            Ok(SiteFactor::Real {
                sign: ga.sign,
                half_log_ratio: 0.5 * (ga.log_abs - gb.log_abs),
                psi_diff: digamma(p.z.re + shift)? - digamma(p.z_prime.re + shift)?,
            })
        }
        Branch::ConjugatePair => {
            let w = p.z + shift;
            let w_prime = p.z_prime + shift;
            // Γ(w)/√(Γ(w)Γ(w')) with w' = conj(w) is Γ(w)/|Γ(w)|; only the
            // phase of ln Γ(w) matters, so its branch does not.
            let lg = log_gamma_complex(w)?;
            let a = Complex64::from_polar(1.0, lg.im);
            Ok(SiteFactor::Conjugate {
                a,
                psi_diff: digamma_complex(w)? - digamma_complex(w_prime)?,
            })
        }
    }
}

fn ab_from_factor(f: &SiteFactor) -> (Complex64, Complex64) {
    match *f {
        SiteFactor::Real {
            sign,
            half_log_ratio,
            ..
        } => {
            let s = f64::from(sign);
            (
                Complex64::new(s * half_log_ratio.exp(), 0.0),
                Complex64::new(s * (-half_log_ratio).exp(), 0.0),
            )
        }
        SiteFactor::Conjugate { a, .. } => {
            let b = a.conj();
            (a, b)
        }
    }
}

/// `(A(x), B(x))`. Real on the real branch (imaginary parts zero);
/// `B = conj(A)` with `|A| = 1` on the conjugate branch.
pub fn ab_values(p: &AdmissiblePair, x: Site) -> Result<(Complex64, Complex64)> {
    Ok(ab_from_factor(&site_factor(p, x)?))
}

fn entry_complex(
    p: &AdmissiblePair,
    x: Site,
    fx: &SiteFactor,
    y: Site,
    fy: &SiteFactor,
) -> Complex64 {
    let pre = p.prefactor;
    if x == y {
        return match *fx {
            SiteFactor::Real { psi_diff, .. } => pre * psi_diff,
            SiteFactor::Conjugate { psi_diff, .. } => pre * psi_diff,
        };
    }
    let dx = x.x() - y.x();
    match (*fx, *fy) {
        (
            SiteFactor::Real {
                sign: sx,
                half_log_ratio: lx,
                ..
            },
            SiteFactor::Real {
                sign: sy,
                half_log_ratio: ly,
                ..
            },
        ) => {
            let numer = f64::from(sx * sy) * 2.0 * (lx - ly).sinh();
            Complex64::new(pre.re * numer / dx, 0.0)
        }
        (SiteFactor::Conjugate { a: ax, .. }, SiteFactor::Conjugate { a: ay, .. }) => {
            let numer = ax * ay.conj() - ax.conj() * ay;
            pre * numer / dx
        }
        _ => unreachable!("site factors from one parameter pair share a branch"),
    }
}

fn real_part_checked(v: Complex64) -> f64 {
    debug_assert!(
        v.im.abs() <= REALITY_TOL * v.re.abs().max(1.0),
        "kernel value {v} is not real"
    );
    v.re
}

/// `K(x, y)` including the digamma diagonal.
pub fn kernel_entry(p: &AdmissiblePair, x: Site, y: Site) -> f64 {
    real_part_checked(kernel_entry_complex(p, x, y))
}

/// The kernel value before discarding the (rounding-level) imaginary part.
pub fn kernel_entry_complex(p: &AdmissiblePair, x: Site, y: Site) -> Complex64 {
    let fx = site_factor(p, x).expect("admissible pair");
    let fy = if x == y {
        fx
    } else {
        site_factor(p, y).expect("admissible pair")
    };
    entry_complex(p, x, &fx, y, &fy)
}

/// The kernel restricted to a window: `K_Λ = [K(x, y)]_{x, y ∈ Λ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    window: Window,
    matrix: Matrix,
}

/// Summary numbers for the kernel-matrix invariants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelDiagnostics {
    pub max_asymmetry: f64,
    pub diag_min: f64,
    pub diag_max: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub trace: f64,
    pub eig_sum: f64,
}

impl KernelMatrix {
    /// Wrap an arbitrary symmetric matrix as a window kernel. Used for
    /// synthetic kernels (zero, identity, product measures).
    pub fn from_matrix(window: Window, matrix: Matrix) -> Result<Self> {
        if matrix.rows() != window.size() || !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: window.size(),
                got: matrix.rows(),
            });
        }
        Ok(Self { window, matrix })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.window.size()
    }

    /// Entry by site; panics if either site is outside the window.
    pub fn get(&self, x: Site, y: Site) -> f64 {
        let i = self.window.position(x).expect("site outside window");
        let j = self.window.position(y).expect("site outside window");
        self.matrix[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigen(&self) -> Result<SymmetricEigen> {
        symmetric_eigen(&self.matrix)
    }

    pub fn diagnostics(&self) -> Result<KernelDiagnostics> {
        let n = self.size();
        let diag: Vec<f64> = (0..n).map(|i| self.matrix[(i, i)]).collect();
        let eig = self.eigen()?;
        Ok(KernelDiagnostics {
            max_asymmetry: self.matrix.max_asymmetry(),
            diag_min: diag.iter().copied().fold(f64::INFINITY, f64::min),
            diag_max: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            eig_min: eig.values[0],
            eig_max: eig.values[n - 1],
            trace: self.trace(),
            eig_sum: eig.values.iter().sum(),
        })
    }

    /// CSV with header `x\y,<sites>` and one row per site, `%.17g` entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x\\y");
        for s in self.window.sites() {
            out.push(',');
            out.push_str(&fmt_g17(s.x()));
        }
        out.push('\n');
        for (i, s) in self.window.sites().enumerate() {
            out.push_str(&fmt_g17(s.x()));
            for v in self.matrix.row(i) {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
            out.push('\n');
        }
        out
    }
}

pub fn kernel_matrix(p: &AdmissiblePair, w: &Window) -> Result<KernelMatrix> {
    let n = w.size();
    if n > MAX_WINDOW {
        return Err(Error::Size {
            what: "kernel window",
            size: n,
            limit: MAX_WINDOW,
        });
    }
    let factors = w
        .sites()
        .map(|s| site_factor(p, s))
        .collect::<Result<Vec<_>>>()?;
    let matrix = Matrix::from_fn(n, n, |i, j| {
        real_part_checked(entry_complex(
            p,
            w.site(i),
            &factors[i],
            w.site(j),
            &factors[j],
        ))
    });
    Ok(KernelMatrix { window: *w, matrix })
}

/// The three-term difference operator truncated to `w` with zero boundary
/// values: diagonal `−(2x + z + z')`, off-diagonal `√((z + x + ½)(z' + x + ½))`
/// between `x` and `x + 1`.
pub fn difference_operator_matrix(p: &AdmissiblePair, w: &Window) -> Matrix {
    let n = w.size();
    let mut d = Matrix::zeros(n, n);
    let zsum = (p.z + p.z_prime).re;
    for i in 0..n {
        let x = w.site(i).x();
        d[(i, i)] = -(2.0 * x + zsum);
        if i + 1 < n {
            let prod = (p.z + x + 0.5) * (p.z_prime + x + 0.5);
            let off = prod.re.sqrt();
            d[(i, i + 1)] = off;
            d[(i + 1, i)] = off;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralProjectionReport {
    /// `max |P(x, y) − K(x, y)|` over the central sub-window.
    pub max_abs_deviation: f64,
    /// `‖K_Λ D_Λ − D_Λ K_Λ‖_max` over the central sub-window.
    pub commutator_norm: f64,
}

/// Compare `K_Λ` with the projection onto the positive spectrum of the
/// truncated difference operator, away from the truncation boundary.
pub fn spectral_projection_check(
    p: &AdmissiblePair,
    w: &Window,
    margin: usize,
) -> Result<SpectralProjectionReport> {
    let n = w.size();
    if n <= 2 * margin {
        return Err(Error::InvalidParameter(format!(
            "margin {margin} leaves no interior in a {n}-site window"
        )));
    }
    let k = kernel_matrix(p, w)?;
    let d = difference_operator_matrix(p, w);
    let eig = symmetric_eigen(&d)?;
    let mut proj = Matrix::zeros(n, n);
    for (c, &lambda) in eig.values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = eig.vectors[(i, c)];
            for j in 0..n {
                proj[(i, j)] += vi * eig.vectors[(j, c)];
            }
        }
    }
    let kd = k.matrix().matmul(&d);
    let dk = d.matmul(k.matrix());

    let mut deviation: f64 = 0.0;
    let mut commutator: f64 = 0.0;
    for i in margin..n - margin {
        for j in margin..n - margin {
            deviation = deviation.max((proj[(i, j)] - k.matrix()[(i, j)]).abs());
            commutator = commutator.max((kd[(i, j)] - dk[(i, j)]).abs());
        }
    }
    Ok(SpectralProjectionReport {
        max_abs_deviation: deviation,
        commutator_norm: commutator,
    })
}
