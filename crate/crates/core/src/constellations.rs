//! Modulation alphabets and their exact moments and cumulants.
//!
//! All alphabets are scaled to unit average power and symbols are taken to be
//! equiprobable, so every moment is an exact arithmetic mean over the points.
//! Notation follows the usual convention `M_ki = E[y^(k-i) (y*)^i]`, with
//! `C_ki` the joint cumulant of `k - i` copies of `y` and `i` copies of `y*`.
//! Odd-order moments vanish for every supported alphabet (all are symmetric
//! under negation), so only even orders are carried.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Modulation identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Modulation {
    Bpsk,
    /// M-PSK with M >= 4, a power of two.
    Psk(u32),
    /// M-PAM, M in {4, 8, 16, 32, 64}.
    Pam(u32),
    /// Square M-QAM, M in {4, 16, 64, 256, 1024}.
    Qam(u32),
    V29,
    V32,
}

/// Rotational structure of an alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    Real,
    FourFold,
    None,
}

impl Modulation {
    pub fn validate(self) -> Result<Self> {
        let ok = match self {
            Modulation::Bpsk | Modulation::V29 | Modulation::V32 => true,
            Modulation::Psk(m) => m >= 4 && m.is_power_of_two() && m <= 1 << 16,
            Modulation::Pam(m) => matches!(m, 4 | 8 | 16 | 32 | 64),
            Modulation::Qam(m) => matches!(m, 4 | 16 | 64 | 256 | 1024),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Config(format!("unsupported modulation order: {self}")))
        }
    }

    /// Number of points in the alphabet.
    pub fn order(self) -> usize {
        match self {
            Modulation::Bpsk => 2,
            Modulation::Psk(m) | Modulation::Pam(m) | Modulation::Qam(m) => m as usize,
            Modulation::V29 => 16,
            Modulation::V32 => 32,
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulation::Bpsk => write!(f, "BPSK"),
            Modulation::Psk(4) => write!(f, "QPSK"),
            Modulation::Psk(m) => write!(f, "{m}-PSK"),
            Modulation::Pam(m) => write!(f, "{m}-PAM"),
            Modulation::Qam(m) => write!(f, "{m}-QAM"),
            Modulation::V29 => write!(f, "V29"),
            Modulation::V32 => write!(f, "V32"),
        }
    }
}

impl FromStr for Modulation {
    type Err = Error;

    /// Accepts `BPSK`, `QPSK`, `8-PSK`, `4-PAM`, `16-QAM`, `QAM(4,4)`,
    /// `PAM(8)`, `PSK(16)`, `V29`, `V32` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().to_ascii_uppercase().chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("unknown modulation identifier '{s}'"));
        let parse_u32 = |t: &str| t.parse::<u32>().map_err(|_| bad());

        let m = match norm.as_str() {
            "BPSK" | "2-PSK" | "PSK(2)" => Modulation::Bpsk,
            "QPSK" => Modulation::Psk(4),
            "V29" | "V.29" => Modulation::V29,
            "V32" | "V.32" => Modulation::V32,
            _ => {
                if let Some(inner) = norm.strip_prefix("QAM(").and_then(|t| t.strip_suffix(')')) {
                    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
                    let (a, b) = (parse_u32(a)?, parse_u32(b)?);
                    if a != b {
                        return Err(Error::Config(format!("only square QAM is supported, got '{s}'")));
                    }
                    Modulation::Qam(a.checked_mul(b).ok_or_else(bad)?)
                } else if let Some(inner) = norm.strip_prefix("PAM(").and_then(|t| t.strip_suffix(')')) {
                    Modulation::Pam(parse_u32(inner)?)
                } else if let Some(inner) = norm.strip_prefix("PSK(").and_then(|t| t.strip_suffix(')')) {
                    match parse_u32(inner)? {
                        2 => Modulation::Bpsk,
                        m => Modulation::Psk(m),
                    }
                } else if let Some((order, family)) = norm.split_once('-') {
                    let order = parse_u32(order)?;
                    match family {
                        "PSK" if order == 2 => Modulation::Bpsk,
                        "PSK" => Modulation::Psk(order),
                        "PAM" => Modulation::Pam(order),
                        "QAM" => Modulation::Qam(order),
                        _ => return Err(bad()),
                    }
                } else {
                    return Err(bad());
                }
            }
        };
        m.validate()
    }
}

impl TryFrom<String> for Modulation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Modulation> for String {
    fn from(m: Modulation) -> String {
        m.to_string()
    }
}

/// A finite unit-power alphabet.
#[derive(Debug, Clone)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Complex64>,
    symmetry: Symmetry,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Result<Self> {
        let modulation = modulation.validate()?;
        let raw = raw_points(modulation);
        let power = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / raw.len() as f64;
        let scale = power.sqrt().recip();
        let points: Vec<Complex64> = raw.into_iter().map(|p| p * scale).collect();
        let symmetry = detect_symmetry(&points);
        Ok(Self { modulation, points, symmetry })
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn moments(&self) -> MomentSet {
        alphabet_moments(self)
    }

    pub fn cumulants(&self) -> CumulantSet {
        moments_to_cumulants(&self.moments())
    }
}

/// Builds the unit-power alphabet for `modulation`.
pub fn build_constellation(modulation: Modulation) -> Result<Constellation> {
    Constellation::new(modulation)
}

fn odd_levels(m: u32) -> impl Iterator<Item = f64> {
    let m = m as i64;
    (0..m).map(move |k| (2 * k - (m - 1)) as f64)
}

fn raw_points(modulation: Modulation) -> Vec<Complex64> {
    match modulation {
        Modulation::Bpsk => vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
        Modulation::Psk(m) => {
            // offset by pi/M so QPSK lands on (+-1 +-j)/sqrt(2)
            let step = std::f64::consts::TAU / m as f64;
            (0..m).map(|k| Complex64::from_polar(1.0, step * (k as f64 + 0.5))).collect()
        }
        Modulation::Pam(m) => odd_levels(m).map(|x| Complex64::new(x, 0.0)).collect(),
        Modulation::Qam(m) => {
            let side = (m as f64).sqrt().round() as u32;
            odd_levels(side)
                .flat_map(|re| odd_levels(side).map(move |im| Complex64::new(re, im)))
                .collect()
        }
        Modulation::V29 => {
            let mut pts = Vec::with_capacity(16);
            for r in [3.0, 5.0] {
                for k in 0..4 {
                    pts.push(Complex64::new(r, 0.0) * Complex64::i().powu(k));
                }
            }
            for r in [1.0, 3.0] {
                for (s, t) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                    pts.push(Complex64::new(r * s, r * t));
                }
            }
            pts
        }
        Modulation::V32 => {
            // 6x6 odd grid minus the four corners
            let levels: Vec<f64> = odd_levels(6).collect();
            let mut pts = Vec::with_capacity(32);
            for &re in &levels {
                for &im in &levels {
                    if re.abs() == 5.0 && im.abs() == 5.0 {
                        continue;
                    }
                    pts.push(Complex64::new(re, im));
                }
            }
            pts
        }
    }
}

fn detect_symmetry(points: &[Complex64]) -> Symmetry {
    const TOL: f64 = 1e-9;
    if points.iter().all(|p| p.im.abs() < TOL) {
        return Symmetry::Real;
    }
    let rotated_in_set = points.iter().all(|p| {
        let q = p * Complex64::i();
        points.iter().any(|r| (r - q).norm() < TOL)
    });
    if rotated_in_set {
        Symmetry::FourFold
    } else {
        Symmetry::None
    }
}

/// Even-order moments `M_ki = E[y^(k-i) (y*)^i]` up to eighth order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub m20: Complex64,
    pub m21: Complex64,
    pub m40: Complex64,
    pub m41: Complex64,
    pub m42: Complex64,
    pub m43: Complex64,
    pub m62: Complex64,
    pub m63: Complex64,
    pub m64: Complex64,
    pub m84: Complex64,
}

impl MomentSet {
    /// Exact moments of an equiprobable point set (or sample moments of a
    /// sequence).
    pub fn from_points(points: &[Complex64]) -> Self {
        let n = points.len() as f64;
        let mut acc = [Complex64::new(0.0, 0.0); 10];
        for &y in points {
            let yc = y.conj();
            let p2 = y.norm_sqr();
            let y2 = y * y;
            let y2c = y2.conj();
            acc[0] += y2;
            acc[1] += p2;
            acc[2] += y2 * y2;
            acc[3] += y2 * p2;
            acc[4] += p2 * p2;
            acc[5] += y2c * p2;
            acc[6] += y2 * y2 * yc * yc;
            acc[7] += p2 * p2 * p2;
            acc[8] += y2c * p2 * p2;
            acc[9] += p2 * p2 * p2 * p2;
        }
        let [m20, m21, m40, m41, m42, m43, m62, m63, m64, m84] = acc.map(|v| v / n);
        Self { m20, m21, m40, m41, m42, m43, m62, m63, m64, m84 }
    }

    /// Moments of a real random variable given `E[x^2], E[x^4], E[x^6], E[x^8]`.
    pub fn from_real_even_moments(e2: f64, e4: f64, e6: f64, e8: f64) -> Self {
        let c = |v: f64| Complex64::new(v, 0.0);
        Self {
            m20: c(e2),
            m21: c(e2),
            m40: c(e4),
            m41: c(e4),
            m42: c(e4),
            m43: c(e4),
            m62: c(e6),
            m63: c(e6),
            m64: c(e6),
            m84: c(e8),
        }
    }

    /// Moments of `a + jb` with `a`, `b` i.i.d. symmetric real variables whose
    /// even moments are `[E a^0, E a^2, E a^4, E a^6, E a^8]`.
    pub fn from_iid_quadrature(even: [f64; 5]) -> Self {
        let raw = |k: usize| if k % 2 == 1 { 0.0 } else { even[k / 2] };
        let moment = |p: usize, q: usize| -> Complex64 {
            // expand (a + jb)^p (a - jb)^q
            let mut total = Complex64::new(0.0, 0.0);
            for s in 0..=p {
                for t in 0..=q {
                    let coeff = binomial(p, s) * binomial(q, t);
                    let phase = Complex64::i().powu((p - s) as u32) * (-Complex64::i()).powu((q - t) as u32);
                    let a_pow = s + t;
                    let b_pow = (p - s) + (q - t);
                    total += phase * coeff * raw(a_pow) * raw(b_pow);
                }
            }
            total
        };
        Self {
            m20: moment(2, 0),
            m21: moment(1, 1),
            m40: moment(4, 0),
            m41: moment(3, 1),
            m42: moment(2, 2),
            m43: moment(1, 3),
            m62: moment(4, 2),
            m63: moment(3, 3),
            m64: moment(2, 4),
            m84: moment(4, 4),
        }
    }

    /// Moments after scaling the signal by a real `a > 0`: `M_ki -> a^k M_ki`.
    pub fn scaled(&self, a: f64) -> Self {
        let (a2, a4, a6, a8) = (a * a, a.powi(4), a.powi(6), a.powi(8));
        Self {
            m20: self.m20 * a2,
            m21: self.m21 * a2,
            m40: self.m40 * a4,
            m41: self.m41 * a4,
            m42: self.m42 * a4,
            m43: self.m43 * a4,
            m62: self.m62 * a6,
            m63: self.m63 * a6,
            m64: self.m64 * a6,
            m84: self.m84 * a8,
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Even-order cumulants `C_ki` up to eighth order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub c20: Complex64,
    pub c21: Complex64,
    pub c40: Complex64,
    pub c41: Complex64,
    pub c42: Complex64,
    pub c43: Complex64,
    pub c62: Complex64,
    pub c63: Complex64,
    pub c64: Complex64,
    pub c84: Complex64,
}

impl CumulantSet {
    /// Circular complex Gaussian of power `c21`: everything above order two vanishes.
    pub fn gaussian(c21: f64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self { c20: z, c21: Complex64::new(c21, 0.0), c40: z, c41: z, c42: z, c43: z, c62: z, c63: z, c64: z, c84: z }
    }

    /// Cumulants of `sum_i x_i / sqrt(n)` for `n` i.i.d. copies of `x`:
    /// order-k cumulants scale by `n^(1 - k/2)`.
    pub fn normalized_sum(&self, n: usize) -> Self {
        let n = n as f64;
        let (s4, s6, s8) = (n.powi(-1), n.powi(-2), n.powi(-3));
        Self {
            c20: self.c20,
            c21: self.c21,
            c40: self.c40 * s4,
            c41: self.c41 * s4,
            c42: self.c42 * s4,
            c43: self.c43 * s4,
            c62: self.c62 * s6,
            c63: self.c63 * s6,
            c64: self.c64 * s6,
            c84: self.c84 * s8,
        }
    }

    /// Same cumulants with `C21` replaced (the additive-noise rewrite).
    pub fn with_c21(&self, c21: f64) -> Self {
        Self { c21: Complex64::new(c21, 0.0), ..*self }
    }

    /// Symmetry class implied by the cumulants themselves.
    pub fn symmetry(&self) -> Symmetry {
        const TOL: f64 = 1e-9;
        let all = [self.c20, self.c21, self.c40, self.c41, self.c42, self.c43, self.c62, self.c63, self.c64, self.c84];
        let real_valued = all.iter().all(|c| c.im.abs() < TOL);
        let scale = self.c21.re.abs().max(TOL);
        if real_valued
            && (self.c20 - self.c21).norm() < TOL * scale
            && (self.c40 - self.c42).norm() < TOL * scale * scale
            && (self.c41 - self.c42).norm() < TOL * scale * scale
            && (self.c43 - self.c42).norm() < TOL * scale * scale
        {
            Symmetry::Real
        } else if self.c20.norm() < TOL * scale && self.c41.norm() < TOL * scale * scale && self.c43.norm() < TOL * scale * scale
        {
            Symmetry::FourFold
        } else {
            Symmetry::None
        }
    }
}

/// Exact moments of an equiprobable alphabet.
pub fn alphabet_moments(c: &Constellation) -> MomentSet {
    MomentSet::from_points(c.points())
}

/// Inverts the zero-mean moment/cumulant relations.
pub fn moments_to_cumulants(m: &MomentSet) -> CumulantSet {
    let c20 = m.m20;
    let c21 = m.m21;
    let c40 = m.m40 - 3.0 * c20 * c20;
    let c41 = m.m41 - 3.0 * c20 * c21;
    let c42 = m.m42 - c20.norm_sqr() - 2.0 * c21 * c21;
    let c43 = m.m43 - 3.0 * c21 * c20.conj();
    let c62 = m.m62
        - c40 * c20.conj()
        - 8.0 * c41 * c21
        - 6.0 * c42 * c20
        - 3.0 * c20 * c20 * c20.conj()
        - 12.0 * c20 * c21 * c21;
    let c64 = m.m64
        - c40.conj() * c20
        - 8.0 * c43 * c21
        - 6.0 * c42 * c20.conj()
        - 3.0 * c20.conj() * c20.conj() * c20
        - 12.0 * c20.conj() * c21 * c21;
    let c63 = m.m63 - 6.0 * (c20 * c43).re - 9.0 * c20.norm_sqr() * c21 - 6.0 * c21.powu(3) - 9.0 * c21 * c42;
    let c84 = m.m84 - m84_lower_order_terms(c20, c21, c40, c41, c42, c63, c64);
    CumulantSet { c20, c21, c40, c41, c42, c43, c62, c63, c64, c84 }
}

/// Moments from cumulants (zero-mean relations, odd orders zero).
pub fn cumulants_to_moments(c: &CumulantSet) -> MomentSet {
    let CumulantSet { c20, c21, c40, c41, c42, c43, c62, c63, c64, c84 } = *c;
    MomentSet {
        m20: c20,
        m21: c21,
        m40: c40 + 3.0 * c20 * c20,
        m41: c41 + 3.0 * c20 * c21,
        m42: c42 + c20.norm_sqr() + 2.0 * c21 * c21,
        m43: c43 + 3.0 * c21 * c20.conj(),
        m62: c62 + c40 * c20.conj() + 8.0 * c41 * c21 + 6.0 * c42 * c20 + 3.0 * c20 * c20 * c20.conj() + 12.0 * c20 * c21 * c21,
        m63: c63 + 6.0 * (c20 * c43).re + 9.0 * c20.norm_sqr() * c21 + 6.0 * c21.powu(3) + 9.0 * c21 * c42,
        m64: c64
            + c40.conj() * c20
            + 8.0 * c43 * c21
            + 6.0 * c42 * c20.conj()
            + 3.0 * c20.conj() * c20.conj() * c20
            + 12.0 * c20.conj() * c21 * c21,
        m84: c84 + m84_lower_order_terms(c20, c21, c40, c41, c42, c63, c64),
    }
}

fn m84_lower_order_terms(
    c20: Complex64,
    c21: Complex64,
    c40: Complex64,
    c41: Complex64,
    c42: Complex64,
    c63: Complex64,
    c64: Complex64,
) -> Complex64 {
    let a20 = c20.norm_sqr();
    16.0 * c63 * c21
        + 12.0 * (c64 * c20).re
        + 72.0 * c21 * c21 * c42
        + 18.0 * c42 * c42
        + 16.0 * c41.norm_sqr()
        + c40.norm_sqr()
        + 6.0 * (c40.conj() * c20 * c20).re
        + 96.0 * (c41.conj() * c20).re * c21
        + 36.0 * a20 * c42
        + 72.0 * a20 * c21 * c21
        + 24.0 * c21.powu(4)
        + 9.0 * a20 * a20
}

/// Moments of the uniform density on `[-sqrt(3), sqrt(3)]` (PAM with infinitely many levels).
pub fn continuous_pam_moments() -> MomentSet {
    // E x^{2k} = 3^k / (2k + 1)
    MomentSet::from_real_even_moments(1.0, 9.0 / 5.0, 27.0 / 7.0, 81.0 / 9.0)
}

/// Moments of the uniform density on a square of unit power (QAM with infinitely many points).
pub fn continuous_qam_moments() -> MomentSet {
    // per-axis uniform on [-sqrt(3/2), sqrt(3/2)]: E a^{2k} = (3/2)^k / (2k + 1)
    let e = |k: i32| 1.5f64.powi(k) / (2 * k + 1) as f64;
    MomentSet::from_iid_quadrature([1.0, e(1), e(2), e(3), e(4)])
}

/// Labelled constellation rows in the order of the classic C42 reference table.
pub fn reference_alphabets() -> Vec<(String, MomentSet)> {
    let mut rows = Vec::new();
    let alpha = |m: Modulation| alphabet_moments(&Constellation::new(m).expect("table modulation is valid"));
    rows.push(("BPSK".to_string(), alpha(Modulation::Bpsk)));
    for m in [4, 8, 16, 32, 64] {
        rows.push((format!("PAM({m})"), alpha(Modulation::Pam(m))));
    }
    rows.push(("PAM(inf)".to_string(), continuous_pam_moments()));
    rows.push(("PSK(>=4)".to_string(), alpha(Modulation::Psk(4))));
    rows.push(("V32".to_string(), alpha(Modulation::V32)));
    rows.push(("V29".to_string(), alpha(Modulation::V29)));
    for side in [4u32, 8, 16, 32] {
        rows.push((format!("QAM({side},{side})"), alpha(Modulation::Qam(side * side))));
    }
    rows.push(("QAM(inf)".to_string(), continuous_qam_moments()));
    rows
}

/// Analytic C42 for every reference alphabet, computed from exact moments.
pub fn reference_c42_table() -> Vec<(String, f64)> {
    reference_alphabets()
        .into_iter()
        .map(|(name, m)| (name, moments_to_cumulants(&m).c42.re))
        .collect()
}
