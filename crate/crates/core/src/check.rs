//! Independent numerical oracles used to cross-check analytic code paths:
//! finite-difference gradients, brute-force projections and minimizers, and a
//! least-squares fit for geometric decay. These deliberately avoid the
//! implementation paths they are used to verify.

use alloc::vec;
use alloc::vec::Vec;

use crate::game::AggregativeGame;
use crate::math;

/// Central finite-difference estimate of the pseudo-gradient block
/// `F_i = grad_own f_i + (1/n) grad_z f_i`, built only from cost evaluations.
///
/// The step is generous (1e-2 of the coordinate scale): the cost families
/// here are quadratic, so central differences carry no truncation error and
/// a wide step only suppresses cancellation noise against large cost values.
pub fn finite_difference_gradient(
    game: &dyn AggregativeGame,
    player: usize,
    own: &[f64],
    aggregate: &[f64],
) -> Vec<f64> {
    let p = game.block_len();
    let n = game.player_count() as f64;
    let mut out = vec![0.0; p];
    let mut xp = own.to_vec();
    let mut xm = own.to_vec();
    let mut zp = aggregate.to_vec();
    let mut zm = aggregate.to_vec();
    for k in 0..p {
        let h = 1e-2 * math::fmax(1.0, math::abs(own[k]));
        xp[k] = own[k] + h;
        xm[k] = own[k] - h;
        let d_own =
            (game.cost(player, &xp, aggregate) - game.cost(player, &xm, aggregate)) / (2.0 * h);
        xp[k] = own[k];
        xm[k] = own[k];

        let hz = 1e-2 * math::fmax(1.0, math::abs(aggregate[k]));
        zp[k] = aggregate[k] + hz;
        zm[k] = aggregate[k] - hz;
        let d_agg = (game.cost(player, own, &zp) - game.cost(player, own, &zm)) / (2.0 * hz);
        zp[k] = aggregate[k];
        zm[k] = aggregate[k];

        out[k] = d_own + d_agg / n;
    }
    out
}

/// Brute-force projection of `v` onto the segment `{(t, t) : t in [lo, hi]}`,
/// by coarse grid scan plus two rounds of local refinement.
pub fn segment_projection_oracle(v: &[f64; 2], lo: f64, hi: f64) -> [f64; 2] {
    let score = |t: f64| {
        let d0 = v[0] - t;
        let d1 = v[1] - t;
        d0 * d0 + d1 * d1
    };
    let mut best_t = lo;
    let mut best = score(lo);
    let scan = |a: f64, b: f64, steps: usize, best_t: &mut f64, best: &mut f64| {
        for s in 0..=steps {
            let t = a + (b - a) * s as f64 / steps as f64;
            let c = score(t);
            if c < *best {
                *best = c;
                *best_t = t;
            }
        }
    };
    scan(lo, hi, 10_000, &mut best_t, &mut best);
    let width = (hi - lo) / 10_000.0;
    scan(
        math::fmax(lo, best_t - width),
        math::fmin(hi, best_t + width),
        10_000,
        &mut best_t,
        &mut best,
    );
    [best_t, best_t]
}

/// Brute-force minimizer of a scalar function over `[lo, hi]` by grid scan
/// with refinement. Used as an oracle for one-dimensional solves.
pub fn scalar_grid_minimizer(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best_t = lo;
    let mut best = f(lo);
    let steps = 20_000usize;
    for s in 0..=steps {
        let t = lo + (hi - lo) * s as f64 / steps as f64;
        let c = f(t);
        if c < best {
            best = c;
            best_t = t;
        }
    }
    let mut a = math::fmax(lo, best_t - (hi - lo) / steps as f64);
    let mut b = math::fmin(hi, best_t + (hi - lo) / steps as f64);
    for _ in 0..3 {
        for s in 0..=steps {
            let t = a + (b - a) * s as f64 / steps as f64;
            let c = f(t);
            if c < best {
                best = c;
                best_t = t;
            }
        }
        let w = (b - a) / steps as f64;
        a = math::fmax(lo, best_t - w);
        b = math::fmin(hi, best_t + w);
    }
    best_t
}

/// Least-squares fit of `ln(y) = c + r k` over the given samples; returns
/// `(rate r, r_squared)`. Samples with nonpositive `y` are skipped.
pub fn log_linear_fit(samples: &[(f64, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|(k, y)| (*k, math::ln(*y)))
        .collect();
    let m = pts.len() as f64;
    if pts.len() < 3 {
        return (0.0, 0.0);
    }
    let sx: f64 = pts.iter().map(|(x, _)| *x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| *y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let mean_y = sy / m;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &pts {
        let pred = intercept + slope * x;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, r2)
}
