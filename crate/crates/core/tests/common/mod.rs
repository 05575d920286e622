#![allow(dead_code)]

use sagnac_sim::{ApdSpec, HeraldedSourceSpec};

/// Per-gate click probability of one port when each photon independently
/// reaches it with probability `p_route`, by explicit enumeration over the
/// photon number and the number of photons routed to the port.
pub fn click_probability_oracle(src: &HeraldedSourceSpec, det: &ApdSpec, p_route: f64) -> f64 {
    let per_photon = src.loop_injection_transmission * p_route;
    let dark = det.dark_prob_per_ns * det.gate_ns;
    let weights = [src.p0, src.p1, 1.0 - src.p0 - src.p1];
    let mut total = 0.0;
    for (n, &pn) in weights.iter().enumerate() {
        for k in 0..=n {
            let binom = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]][n][k];
            let pk = binom * per_photon.powi(k as i32) * (1.0 - per_photon).powi((n - k) as i32);
            let miss = (1.0 - det.efficiency).powi(k as i32) * (1.0 - dark);
            total += pn * pk * (1.0 - miss);
        }
    }
    total
}

/// Sample standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
