#![allow(dead_code)]

use cam_core::constellations::{Constellation, Modulation};
use cam_core::estimation::{center_signal, estimate_c42_frame};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// `n` equiprobable unit-power symbols plus circular noise of variance `noise`.
pub fn symbols(m: Modulation, n: usize, noise: f64, rng: &mut impl Rng) -> Vec<Complex64> {
    let pts = Constellation::new(m).unwrap().points().to_vec();
    (0..n)
        .map(|_| {
            let x = pts[rng.random_range(0..pts.len())];
            if noise > 0.0 { x + cgauss(rng, noise) } else { x }
        })
        .collect()
}

/// Raw (unnormalized) C42 estimate of every centered `j`-sample frame.
pub fn raw_c42_frames(r: &[Complex64], j: usize) -> Vec<f64> {
    r.chunks_exact(j)
        .map(|f| estimate_c42_frame(&center_signal(f).unwrap()).unwrap().c42)
        .collect()
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}
