//! Theoretical mean and variance of the per-frame normalized C42 for each
//! hypothesis class.
//!
//! The core result is the asymptotic variance of the plug-in C42 estimator
//! expressed in moments ([`general_c42_variance`]). Rewriting it in cumulants
//! lets additive circular Gaussian noise enter only through `C21`, which after
//! power normalization becomes the ratio `rho = C21_y / (C21_y - noise_var)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constellations::{
    binomial, cumulants_to_moments, moments_to_cumulants, reference_alphabets, Constellation, CumulantSet,
    Modulation, MomentSet, Symmetry,
};
use crate::error::{Error, Result};

/// `C21_y / (C21_y - noise_var)`, equal to `1 + 1/snr` for a unit-power signal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoisyPowerRatio(f64);

impl NoisyPowerRatio {
    pub const NOISELESS: Self = Self(1.0);

    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho >= 1.0 {
            Ok(Self(rho))
        } else {
            Err(Error::Argument(format!("noisy power ratio must be finite and >= 1, got {rho}")))
        }
    }

    /// From an average SNR in dB; `+inf` gives the noiseless ratio.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        if snr_db == f64::INFINITY {
            return Ok(Self::NOISELESS);
        }
        Self::new(1.0 + 10f64.powf(-snr_db / 10.0))
    }

    pub fn from_powers(c21_y: f64, noise_var: f64) -> Result<Self> {
        if !(c21_y > noise_var) || noise_var < 0.0 {
            return Err(Error::Argument(format!("received power {c21_y} must exceed noise variance {noise_var}")));
        }
        Self::new(c21_y / (c21_y - noise_var))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NoisyPowerRatio {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NoisyPowerRatio> for f64 {
    fn from(r: NoisyPowerRatio) -> f64 {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AccessMethod {
    Tdma,
    Ofdma,
    Cdma,
    Contention,
}

impl fmt::Display for AccessMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessMethod::Tdma => "TDMA",
            AccessMethod::Ofdma => "OFDMA",
            AccessMethod::Cdma => "CDMA",
            AccessMethod::Contention => "CONTENTION",
        })
    }
}

impl FromStr for AccessMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TDMA" => Ok(AccessMethod::Tdma),
            "OFDMA" => Ok(AccessMethod::Ofdma),
            "CDMA" => Ok(AccessMethod::Cdma),
            "CONTENTION" | "CONTENTION-BASED" => Ok(AccessMethod::Contention),
            _ => Err(Error::Config(format!("unknown access method '{s}'"))),
        }
    }
}

/// Non-contention hypothesis class `M1`..`M15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassLabel(u8);

pub const NUM_CLASSES: usize = 15;

impl ClassLabel {
    pub fn new(index: u8) -> Result<Self> {
        if (1..=NUM_CLASSES as u8).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::Argument(format!("class index {index} outside 1..={NUM_CLASSES}")))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (1..=NUM_CLASSES as u8).map(ClassLabel)
    }

    pub fn access_method(self) -> AccessMethod {
        match self.0 {
            1..=10 => AccessMethod::Tdma,
            11 | 12 => AccessMethod::Ofdma,
            _ => AccessMethod::Cdma,
        }
    }

    /// Representative modulation; `M2` covers every PSK order >= 4 and is
    /// represented by QPSK, whose statistics all higher orders share.
    pub fn modulation(self) -> Modulation {
        match self.0 {
            1 => Modulation::Bpsk,
            2 => Modulation::Psk(4),
            3..=7 => Modulation::Pam(4 << (self.0 - 3)),
            8 => Modulation::Qam(16),
            9 => Modulation::Qam(64),
            10 => Modulation::Qam(256),
            11 => Modulation::Qam(4),
            12 => Modulation::Qam(16),
            13 => Modulation::Bpsk,
            14 => Modulation::Qam(4),
            _ => Modulation::Qam(16),
        }
    }

    /// Class of a non-contention scenario.
    pub fn for_scenario(method: AccessMethod, modulation: Modulation) -> Result<Self> {
        let unsupported = || Error::Config(format!("{method} with {modulation} is not a listed class"));
        let index = match (method, modulation) {
            (AccessMethod::Tdma, Modulation::Bpsk) => 1,
            (AccessMethod::Tdma, Modulation::Psk(_)) => 2,
            (AccessMethod::Tdma, Modulation::Qam(4)) => 2,
            (AccessMethod::Tdma, Modulation::Pam(m)) => 3 + m.trailing_zeros() as u8 - 2,
            (AccessMethod::Tdma, Modulation::Qam(16)) => 8,
            (AccessMethod::Tdma, Modulation::Qam(64)) => 9,
            (AccessMethod::Tdma, Modulation::Qam(256)) => 10,
            (AccessMethod::Ofdma, Modulation::Qam(4) | Modulation::Psk(4)) => 11,
            (AccessMethod::Ofdma, Modulation::Qam(16)) => 12,
            (AccessMethod::Cdma, Modulation::Bpsk) => 13,
            (AccessMethod::Cdma, Modulation::Qam(4) | Modulation::Psk(4)) => 14,
            (AccessMethod::Cdma, Modulation::Qam(16)) => 15,
            _ => return Err(unsupported()),
        };
        modulation.validate()?;
        Ok(Self(index))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.0)
    }
}

impl FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().strip_prefix(['M', 'm']).unwrap_or(s.trim());
        let n: u8 = digits.parse().map_err(|_| Error::Argument(format!("bad class label '{s}'")))?;
        Self::new(n)
    }
}

impl TryFrom<String> for ClassLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClassLabel> for String {
    fn from(l: ClassLabel) -> String {
        l.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    pub var: f64,
}

/// Theoretical per-frame statistics of one class at a given `rho` and `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub label: ClassLabel,
    pub mean: f64,
    pub var: f64,
    pub j: usize,
}

/// `J * var[C42^]` from moments of a zero-mean signal.
pub fn c42_variance_times_j(m: &MomentSet) -> f64 {
    let (m20, m21, m40, m41, m42, m62, m63, m84) = (m.m20, m.m21.re, m.m40, m.m41, m.m42.re, m.m62, m.m63.re, m.m84.re);
    let a20 = m20.norm_sqr();
    m84 - m42 * m42
        + 8.0 * m21 * (2.0 * m21 * (m42 - m21 * m21 - a20) + 2.0 * (m41 * m20.conj()).re - m63 + m21 * m42)
        + 2.0 * (m20.conj() * (m40 * m20.conj() - 2.0 * m62)).re
        + 2.0 * a20 * (3.0 * m42 - 2.0 * a20)
}

/// Asymptotic variance of the C42 estimate over `j` samples.
pub fn general_c42_variance(m: &MomentSet, j: usize) -> f64 {
    c42_variance_times_j(m) / j as f64
}

fn check_j(j: usize) -> Result<f64> {
    if j == 0 {
        Err(Error::Argument("frame length must be positive".into()))
    } else {
        Ok(j as f64)
    }
}

/// Normalized-estimate variance for a unit-power real alphabet in circular
/// Gaussian noise.
pub fn noisy_variance_real(c: &CumulantSet, rho: NoisyPowerRatio, j: usize) -> Result<f64> {
    if c.symmetry() != Symmetry::Real {
        return Err(Error::Argument("cumulant set is not that of a real constellation".into()));
    }
    let j = check_j(j)?;
    let r = rho.value();
    let (c20, c40, c41, c42, c62, c63, c84) = (c.c20, c.c40, c.c41, c.c42.re, c.c62, c.c63.re, c.c84.re);
    let a20 = c20.norm_sqr();
    let jv = c84
        + 8.0 * c63 * r
        + 8.0 * (c62.conj() * c20).re
        + 17.0 * c42 * c42
        + 20.0 * r * r * c42
        + 16.0 * a20 * c42
        + 16.0 * c41.norm_sqr()
        + 32.0 * (c41.conj() * c20).re * r
        + c40.norm_sqr()
        + 4.0 * (c40.conj() * c20 * c20).re
        + 4.0 * r.powi(4)
        + 16.0 * a20 * r * r
        + 4.0 * a20 * a20;
    Ok(jv / j)
}

/// Normalized-estimate variance for a four-fold symmetric unit-power alphabet
/// in circular Gaussian noise.
pub fn noisy_variance_fourfold(c: &CumulantSet, rho: NoisyPowerRatio, j: usize) -> Result<f64> {
    if c.symmetry() != Symmetry::FourFold {
        return Err(Error::Argument("cumulant set is not four-fold symmetric".into()));
    }
    let j = check_j(j)?;
    let r = rho.value();
    let (c40, c42, c63, c84) = (c.c40, c.c42.re, c.c63.re, c.c84.re);
    let jv = c84 + c40.norm_sqr() + 8.0 * r * c63 + 20.0 * r * r * c42 + 4.0 * r.powi(4) + 17.0 * c42 * c42;
    Ok(jv / j)
}

/// Noisy variance for any unit-power cumulant set: substitute `C21 -> rho`,
/// convert back to moments and evaluate the moment form.
pub fn noisy_variance_general(c: &CumulantSet, rho: NoisyPowerRatio, j: usize) -> Result<f64> {
    let j = check_j(j)?;
    Ok(c42_variance_times_j(&cumulants_to_moments(&c.with_c21(rho.value()))) / j)
}

/// Dispatches on the symmetry of `c`.
pub fn noisy_variance(c: &CumulantSet, rho: NoisyPowerRatio, j: usize) -> Result<f64> {
    match c.symmetry() {
        Symmetry::Real => noisy_variance_real(c, rho, j),
        Symmetry::FourFold => noisy_variance_fourfold(c, rho, j),
        Symmetry::None => noisy_variance_general(c, rho, j),
    }
}

fn ofdm_j_var(sub: Modulation, rho: f64) -> Result<f64> {
    let symmetry = Constellation::new(sub)?.symmetry();
    match symmetry {
        // circular Gaussian limit: every cumulant above order two vanishes
        Symmetry::FourFold => Ok(4.0 * rho.powi(4)),
        // real subcarrier symbols make the time-domain signal conjugate
        // symmetric, so samples come in pairs x(N - n) = conj(x(n)); the
        // pair's signal parts are fully correlated, its noise parts are not
        Symmetry::Real => Ok(4.0 * rho.powi(4) + 4.0),
        Symmetry::None => Err(Error::Config(format!("OFDM statistics unavailable for {sub} subcarriers"))),
    }
}

/// Large-subcarrier-count statistics of OFDM with `sub` subcarrier symbols.
pub fn ofdm_statistics(sub: Modulation, rho: NoisyPowerRatio, j: usize) -> Result<MeanVar> {
    let jf = check_j(j)?;
    Ok(MeanVar { mean: 0.0, var: ofdm_j_var(sub, rho.value())? / jf })
}

/// Moments of a unit-power sum of `n` i.i.d. BPSK streams, by counting
/// index coincidences in the expanded powers.
pub fn cdma_bpsk_moments(n: usize) -> Result<MomentSet> {
    if n < 1 {
        return Err(Error::Argument("CDMA needs at least one user".into()));
    }
    let nf = n as f64;
    let b = |k: usize| binomial(n, k);
    let m42 = binomial(4, 2) * b(2) / (nf * nf) + 1.0 / nf;
    let m63 = binomial(6, 2) * binomial(4, 2) * b(3) / nf.powi(3) + binomial(6, 4) * b(2) * 2.0 / nf.powi(3) + 1.0 / (nf * nf);
    let m84 = binomial(8, 2) * binomial(6, 2) * binomial(4, 2) * b(4) / nf.powi(4)
        + binomial(8, 4) * binomial(4, 2) * b(3) * 3.0 / nf.powi(4)
        + (binomial(8, 6) + 0.5 * binomial(8, 4)) * b(2) * 2.0 / nf.powi(4)
        + 1.0 / nf.powi(3);
    Ok(MomentSet::from_real_even_moments(1.0, m42, m63, m84))
}

/// Cumulants of the unit-power composite of `n_total` i.i.d. chip streams.
pub fn cdma_cumulants(chip: Modulation, n_total: usize) -> Result<CumulantSet> {
    if n_total < 1 {
        return Err(Error::Argument("CDMA needs at least one user".into()));
    }
    if chip == Modulation::Bpsk {
        return Ok(moments_to_cumulants(&cdma_bpsk_moments(n_total)?));
    }
    Ok(Constellation::new(chip)?.cumulants().normalized_sum(n_total))
}

/// BPSK-chip CDMA with `n_total` equal-power users.
pub fn cdma_statistics(n_total: usize, rho: NoisyPowerRatio, j: usize) -> Result<MeanVar> {
    cdma_statistics_with_chips(Modulation::Bpsk, n_total, rho, j)
}

/// CDMA whose per-user chips follow `chip`, chip correlations neglected.
pub fn cdma_statistics_with_chips(chip: Modulation, n_total: usize, rho: NoisyPowerRatio, j: usize) -> Result<MeanVar> {
    let c = cdma_cumulants(chip, n_total)?;
    Ok(MeanVar { mean: c.c42.re, var: noisy_variance(&c, rho, j)? })
}

/// One simultaneously active user: power, normalized C42 and its variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserStat {
    pub c21: f64,
    pub c42: f64,
    pub var: f64,
}

/// Mean and variance of the normalized C42 of a sum of independent users.
pub fn multiuser_statistics(users: &[UserStat], noise_var: f64, j: usize) -> Result<MeanVar> {
    if users.is_empty() {
        return Err(Error::Argument("at least one user is required".into()));
    }
    if users.iter().any(|u| !(u.c21 > 0.0)) {
        return Err(Error::Argument("user powers must be positive".into()));
    }
    let jf = check_j(j)?;
    let total: f64 = users.iter().map(|u| u.c21).sum();
    let mean = users.iter().map(|u| u.c21 * u.c21 * u.c42).sum::<f64>() / (total * total);
    let noise_frame_var = 4.0 / jf;
    let var = (users.iter().map(|u| u.c21.powi(4) * u.var).sum::<f64>() + noise_var.powi(4) * noise_frame_var) / total.powi(4);
    Ok(MeanVar { mean, var })
}

/// Law of total variance over `(probability, component)` pairs.
pub fn mixture_statistics(components: &[(f64, MeanVar)]) -> Result<MeanVar> {
    if components.is_empty() {
        return Err(Error::Argument("mixture needs at least one component".into()));
    }
    let total: f64 = components.iter().map(|(p, _)| *p).sum();
    if components.iter().any(|(p, _)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("mixture probabilities must be non-negative and sum to 1 (sum {total})")));
    }
    let mean = components.iter().map(|(p, c)| p * c.mean).sum::<f64>();
    let var = components.iter().map(|(p, c)| p * (c.var + (c.mean - mean).powi(2))).sum::<f64>();
    Ok(MeanVar { mean, var })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarianceModel {
    /// Single signal described by its unit-power cumulants.
    Cumulants(CumulantSet),
    /// OFDM in the many-subcarrier limit.
    Ofdm(Modulation),
}

/// A class's mean together with its variance as a function of `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassModel {
    pub label: ClassLabel,
    pub mean: f64,
    model: VarianceModel,
}

impl ClassModel {
    pub fn new(label: ClassLabel, cdma_users: usize) -> Result<Self> {
        let modulation = label.modulation();
        let (mean, model) = match label.access_method() {
            AccessMethod::Tdma => {
                let c = Constellation::new(modulation)?.cumulants();
                (c.c42.re, VarianceModel::Cumulants(c))
            }
            AccessMethod::Ofdma => (0.0, VarianceModel::Ofdm(modulation)),
            AccessMethod::Cdma => {
                let c = cdma_cumulants(modulation, cdma_users)?;
                (c.c42.re, VarianceModel::Cumulants(c))
            }
            AccessMethod::Contention => unreachable!("contention is not a listed class"),
        };
        Ok(Self { label, mean, model })
    }

    /// `J * var[C42~(f)]` at noisy power ratio `rho`.
    pub fn j_var(&self, rho: NoisyPowerRatio) -> f64 {
        match &self.model {
            VarianceModel::Cumulants(c) => noisy_variance(c, rho, 1).expect("j = 1 is valid"),
            VarianceModel::Ofdm(sub) => ofdm_j_var(*sub, rho.value()).expect("class sub-modulation is supported"),
        }
    }

    pub fn statistics(&self, rho: NoisyPowerRatio, j: usize) -> ClassStatistics {
        ClassStatistics { label: self.label, mean: self.mean, var: self.j_var(rho) / j as f64, j }
    }
}

/// Models for all fifteen classes; CDMA classes assume `cdma_users` users.
pub fn class_models(cdma_users: usize) -> Result<Vec<ClassModel>> {
    if cdma_users < 1 {
        return Err(Error::Argument("CDMA user count must be at least 1".into()));
    }
    ClassLabel::all().map(|l| ClassModel::new(l, cdma_users)).collect()
}

/// Statistics of every class at one `rho` and `j`.
pub fn build_class_table(cdma_users: usize, rho: NoisyPowerRatio, j: usize) -> Result<Vec<ClassStatistics>> {
    check_j(j)?;
    Ok(class_models(cdma_users)?.iter().map(|m| m.statistics(rho, j)).collect())
}

/// One row of the noiseless reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub name: String,
    pub c42: f64,
    pub j_var: f64,
}

/// Analytic C42 and noiseless `J var` of every reference alphabet plus the
/// two OFDM rows.
pub fn reference_table() -> Vec<ReferenceRow> {
    let mut rows: Vec<ReferenceRow> = reference_alphabets()
        .into_iter()
        .map(|(name, m)| ReferenceRow { name, c42: moments_to_cumulants(&m).c42.re, j_var: c42_variance_times_j(&m) })
        .collect();
    for (name, sub) in [("BPSK-OFDM", Modulation::Bpsk), ("QPSK-OFDM", Modulation::Psk(4))] {
        let s = ofdm_statistics(sub, NoisyPowerRatio::NOISELESS, 1).expect("supported sub-modulation");
        rows.push(ReferenceRow { name: name.to_string(), c42: s.mean, j_var: s.var });
    }
    rows
}

pub fn write_reference_csv<W: Write>(w: W, rows: &[ReferenceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["constellation", "c42", "j_var"])?;
    for r in rows {
        // rounding residue of exact zeros would otherwise print as -0.00
        let clean = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
        out.write_record([r.name.clone(), format!("{:.4}", clean(r.c42)), format!("{:.2}", clean(r.j_var))])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_class_table_csv<W: Write>(w: W, table: &[ClassStatistics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "method", "modulation", "mean", "j_var"])?;
    for s in table {
        out.write_record([
            s.label.to_string(),
            s.label.access_method().to_string(),
            s.label.modulation().to_string(),
            format!("{:.6}", s.mean),
            format!("{:.6}", s.var * s.j as f64),
        ])?;
    }
    out.flush()?;
    Ok(())
}
