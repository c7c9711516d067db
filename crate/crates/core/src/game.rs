//! Aggregative-game primitives: action vectors, compact action sets with an
//! exact projection, per-player pseudo-gradients and the variational
//! inequality residual that certifies a Nash equilibrium.
//!
//! An aggregative game has `n` players, each owning a block `x_i` of fixed
//! dimension `p`. Player `i`'s cost `f_i(x_i, z)` depends on its own block and
//! on an aggregate `z` which, at a Nash equilibrium, equals the block average
//! of all actions. The per-player mapping
//!
//! ```text
//! F_i(x_i, z) = grad_{x_i} f_i(x_i, z) + (1/n) grad_z f_i(x_i, z)
//! ```
//!
//! stacked over players at `z = mean(x)` is the pseudo-gradient of the game;
//! a feasible `x` is an equilibrium exactly when the projected fixed-point
//! residual of that mapping vanishes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::rng;

/// Stacked action profile: `n` blocks of dimension `p` in player order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    players: usize,
    block: usize,
    data: Vec<f64>,
}

impl ActionVector {
    pub fn zeros(players: usize, block: usize) -> Self {
        Self {
            players,
            block,
            data: vec![0.0; players * block],
        }
    }

    /// Panics if `data.len() != players * block`.
    pub fn from_stacked(players: usize, block: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), players * block, "stacked dimension mismatch");
        Self {
            players,
            block,
            data,
        }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn block_len(&self) -> usize {
        self.block
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.block..(i + 1) * self.block]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.block..(i + 1) * self.block]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Block mean of the profile, the exact aggregate `z = (1/n) sum x_i`.
    pub fn mean_block(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.block];
        for i in 0..self.players {
            let b = self.block(i);
            for (o, v) in out.iter_mut().zip(b) {
                *o += *v;
            }
        }
        let inv = 1.0 / self.players as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        out
    }

    pub fn inf_dist(&self, other: &ActionVector) -> f64 {
        math::inf_dist(&self.data, &other.data)
    }
}

/// Error raised when an action set cannot be constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum SetError {
    /// A lower bound exceeds the matching upper bound, or a bound is not finite.
    BadBounds { coord: usize },
    /// The equality hyperplane does not intersect the box.
    DisjointPlane,
    /// The hyperplane normal is zero or of the wrong dimension.
    BadNormal,
}

impl fmt::Display for SetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetError::BadBounds { coord } => {
                write!(f, "infeasible or non-finite bounds at coordinate {coord}")
            }
            SetError::DisjointPlane => write!(f, "equality hyperplane does not meet the box"),
            SetError::BadNormal => write!(f, "hyperplane normal must be nonzero and match the box"),
        }
    }
}

impl core::error::Error for SetError {}

const PLANE_TOL: f64 = 1e-12;
const MAX_BISECT: usize = 200;

/// Compact convex action set: a finite box, optionally intersected with a
/// single homogeneous hyperplane `a . x = 0`.
///
/// Projection onto the box is a coordinate-wise clamp; with the hyperplane it
/// is a clamp composed with a scalar dual multiplier found by bisection, which
/// covers the production/sales balance constraint of the Cournot family
/// exactly and needs no general QP machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    normal: Option<Vec<f64>>,
    sample_upper: Option<Vec<f64>>,
}

impl ActionSet {
    /// Box `[lower_k, upper_k]` per coordinate. All bounds must be finite.
    pub fn bounded_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        assert_eq!(lower.len(), upper.len(), "bound dimension mismatch");
        for k in 0..lower.len() {
            if !lower[k].is_finite() || !upper[k].is_finite() || lower[k] > upper[k] {
                return Err(SetError::BadBounds { coord: k });
            }
        }
        Ok(Self {
            lower,
            upper,
            normal: None,
            sample_upper: None,
        })
    }

    /// Restricts [`Self::sample_feasible`] draws to `[lower, cap]` per
    /// coordinate without changing the set itself. Useful when a box bound
    /// is a loose implied one and uniform draws over it would start far from
    /// any plausible action.
    pub fn with_sampling_upper(mut self, cap: Vec<f64>) -> Result<Self, SetError> {
        assert_eq!(cap.len(), self.lower.len(), "bound dimension mismatch");
        for (k, c) in cap.iter().enumerate() {
            if !c.is_finite() || *c < self.lower[k] {
                return Err(SetError::BadBounds { coord: k });
            }
        }
        self.sample_upper = Some(cap);
        Ok(self)
    }

    /// Intersects the box with `normal . x = 0`.
    ///
    /// Fails if the plane misses the box, checked by interval arithmetic on
    /// `normal . x` over the box.
    pub fn with_equality(mut self, normal: Vec<f64>) -> Result<Self, SetError> {
        if normal.len() != self.lower.len() || math::inf_norm(&normal) == 0.0 {
            return Err(SetError::BadNormal);
        }
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (k, &a) in normal.iter().enumerate() {
            if a >= 0.0 {
                lo += a * self.lower[k];
                hi += a * self.upper[k];
            } else {
                lo += a * self.upper[k];
                hi += a * self.lower[k];
            }
        }
        if lo > 0.0 || hi < 0.0 {
            return Err(SetError::DisjointPlane);
        }
        self.normal = Some(normal);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn equality_normal(&self) -> Option<&[f64]> {
        self.normal.as_deref()
    }

    fn clamp_shifted(&self, v: &[f64], lambda: f64, normal: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = math::clamp(v[k] - lambda * normal[k], self.lower[k], self.upper[k]);
        }
    }

    /// Euclidean projection of `v` onto the set, written into `out`.
    pub fn project_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim(), "projection dimension mismatch");
        assert_eq!(out.len(), self.dim(), "projection dimension mismatch");
        match &self.normal {
            None => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = math::clamp(v[k], self.lower[k], self.upper[k]);
                }
            }
            Some(a) => {
                // residual(lambda) = a . clamp(v - lambda a) is nonincreasing in
                // lambda; its zero gives the KKT multiplier of the equality.
                let residual = |lambda: f64, buf: &mut [f64]| -> f64 {
                    self.clamp_shifted(v, lambda, a, buf);
                    math::dot(a, buf)
                };
                let r0 = residual(0.0, out);
                if math::abs(r0) <= PLANE_TOL {
                    return;
                }
                let mut step = 1.0;
                let (mut lo, mut hi);
                if r0 > 0.0 {
                    lo = 0.0;
                    hi = step;
                    while residual(hi, out) > 0.0 {
                        lo = hi;
                        step *= 2.0;
                        hi = step;
                        debug_assert!(step.is_finite());
                    }
                } else {
                    hi = 0.0;
                    lo = -step;
                    while residual(lo, out) < 0.0 {
                        hi = lo;
                        step *= 2.0;
                        lo = -step;
                        debug_assert!(step.is_finite());
                    }
                }
                for _ in 0..MAX_BISECT {
                    let mid = 0.5 * (lo + hi);
                    let r = residual(mid, out);
                    if r > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= PLANE_TOL * math::fmax(1.0, math::abs(mid)) {
                        break;
                    }
                }
                let lambda = 0.5 * (lo + hi);
                self.clamp_shifted(v, lambda, a, out);
            }
        }
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.project_into(v, &mut out);
        out
    }

    /// Whether `v` lies in the set up to `tol` on each constraint.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        for (k, value) in v.iter().enumerate() {
            if *value < self.lower[k] - tol || *value > self.upper[k] + tol {
                return false;
            }
        }
        if let Some(a) = &self.normal {
            let scale = math::fmax(1.0, math::norm2(a) * math::norm2(v));
            if math::abs(math::dot(a, v)) > tol * scale {
                return false;
            }
        }
        true
    }

    /// Uniform draw in the (sampling) box, projected onto the set.
    /// Guaranteed feasible and reproducible from the generator state.
    pub fn sample_feasible(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let upper = self.sample_upper.as_ref().unwrap_or(&self.upper);
        let mut v = vec![0.0; self.dim()];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rng::uniform(rng, self.lower[k], upper[k]);
        }
        self.project(&v)
    }
}

/// An aggregative game: per-player costs, pseudo-gradient blocks and action
/// sets. Implementations must be pure; all engine and solver code treats the
/// game as immutable shared state.
pub trait AggregativeGame: Sync {
    fn player_count(&self) -> usize;

    fn block_len(&self) -> usize;

    /// Cost `f_i(own, aggregate)` of one player.
    fn cost(&self, player: usize, own: &[f64], aggregate: &[f64]) -> f64;

    /// Pseudo-gradient block `F_i(own, aggregate)` written into `out`.
    fn player_gradient(&self, player: usize, own: &[f64], aggregate: &[f64], out: &mut [f64]);

    fn action_set(&self, player: usize) -> &ActionSet;

    /// Short human-readable descriptor used in reports.
    fn describe(&self) -> String {
        String::from("aggregative game")
    }
}

/// Stacked pseudo-gradient at `x`, with the aggregate taken as the exact
/// block mean of `x`.
pub fn pseudo_gradient(game: &dyn AggregativeGame, x: &ActionVector) -> Vec<f64> {
    assert_eq!(x.players(), game.player_count(), "player count mismatch");
    assert_eq!(x.block_len(), game.block_len(), "block dimension mismatch");
    let mean = x.mean_block();
    let p = game.block_len();
    let mut out = vec![0.0; x.players() * p];
    for i in 0..x.players() {
        game.player_gradient(i, x.block(i), &mean, &mut out[i * p..(i + 1) * p]);
    }
    out
}

/// Norm of the projected fixed-point residual `x - proj(x - step * grad)`.
/// Zero exactly at a solution of the game's variational inequality.
pub fn vi_residual(game: &dyn AggregativeGame, x: &ActionVector, step: f64) -> f64 {
    assert!(step > 0.0, "step must be positive");
    let grad = pseudo_gradient(game, x);
    let p = game.block_len();
    let mut shifted = vec![0.0; p];
    let mut proj = vec![0.0; p];
    let mut sum = 0.0;
    for i in 0..x.players() {
        let b = x.block(i);
        for k in 0..p {
            shifted[k] = b[k] - step * grad[i * p + k];
        }
        game.action_set(i).project_into(&shifted, &mut proj);
        for k in 0..p {
            let d = b[k] - proj[k];
            sum += d * d;
        }
    }
    math::sqrt(sum)
}

/// Outcome of a monotonicity probe over sampled feasible pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    /// Smallest observed `(grad(x) - grad(x')) . (x - x') / |x - x'|^2`.
    pub min_ratio: f64,
    /// True if any sampled ratio was nonpositive.
    pub violation: bool,
}

/// Samples `samples` feasible pairs and reports the worst monotonicity ratio
/// of the stacked pseudo-gradient. Degenerate pairs are redrawn.
pub fn monotonicity_probe(game: &dyn AggregativeGame, samples: usize, seed: u64) -> ProbeResult {
    assert!(samples >= 2, "need at least two samples");
    const TAG: u64 = 0x6d6f6e6f;
    let n = game.player_count();
    let p = game.block_len();
    let mut rng = rng::stream(seed, TAG, 0);
    let draw = |rng: &mut ChaCha8Rng| -> ActionVector {
        let mut x = ActionVector::zeros(n, p);
        for i in 0..n {
            let b = game.action_set(i).sample_feasible(rng);
            x.block_mut(i).copy_from_slice(&b);
        }
        x
    };
    let mut min_ratio = f64::INFINITY;
    let mut violation = false;
    let mut produced = 0;
    let mut attempts = 0;
    while produced < samples && attempts < 100 * samples {
        attempts += 1;
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let mut diff_sq = 0.0;
        for k in 0..n * p {
            let d = x.as_slice()[k] - y.as_slice()[k];
            diff_sq += d * d;
        }
        if diff_sq < 1e-24 {
            continue;
        }
        let gx = pseudo_gradient(game, &x);
        let gy = pseudo_gradient(game, &y);
        let mut inner = 0.0;
        for k in 0..n * p {
            inner += (gx[k] - gy[k]) * (x.as_slice()[k] - y.as_slice()[k]);
        }
        let ratio = inner / diff_sq;
        if ratio < min_ratio {
            min_ratio = ratio;
        }
        if ratio <= 0.0 {
            violation = true;
        }
        produced += 1;
    }
    ProbeResult {
        min_ratio,
        violation,
    }
}

/// Separable quadratic test game `f_i = |x_i - c_i|^2 / 2` on a box. With all
/// centers at zero its pseudo-gradient is the identity map.
pub struct QuadraticGame {
    players: usize,
    block: usize,
    centers: Vec<f64>,
    sets: Vec<ActionSet>,
}

impl QuadraticGame {
    pub fn new(players: usize, block: usize, half_width: f64) -> Self {
        Self::with_centers(players, block, vec![0.0; players * block], half_width)
    }

    pub fn with_centers(players: usize, block: usize, centers: Vec<f64>, half_width: f64) -> Self {
        assert_eq!(centers.len(), players * block);
        let sets = (0..players)
            .map(|_| {
                ActionSet::bounded_box(vec![-half_width; block], vec![half_width; block])
                    .expect("valid box")
            })
            .collect();
        Self {
            players,
            block,
            centers,
            sets,
        }
    }
}

impl AggregativeGame for QuadraticGame {
    fn player_count(&self) -> usize {
        self.players
    }

    fn block_len(&self) -> usize {
        self.block
    }

    fn cost(&self, player: usize, own: &[f64], _aggregate: &[f64]) -> f64 {
        let c = &self.centers[player * self.block..(player + 1) * self.block];
        let d = math::dist2(own, c);
        0.5 * d * d
    }

    fn player_gradient(&self, player: usize, own: &[f64], _aggregate: &[f64], out: &mut [f64]) {
        let c = &self.centers[player * self.block..(player + 1) * self.block];
        for k in 0..self.block {
            out[k] = own[k] - c[k];
        }
    }

    fn action_set(&self, player: usize) -> &ActionSet {
        &self.sets[player]
    }

    fn describe(&self) -> String {
        String::from("separable quadratic game")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check;

    #[test]
    fn box_projection_clamps() {
        let set = ActionSet::bounded_box(vec![0.0], vec![500.0]).unwrap();
        assert_eq!(set.project(&[600.0]), vec![500.0]);
        assert_eq!(set.project(&[-3.0]), vec![0.0]);
        assert_eq!(set.project(&[123.0]), vec![123.0]);
    }

    #[test]
    fn projection_is_idempotent_on_feasible_points() {
        let set = ActionSet::bounded_box(vec![0.0, 0.0], vec![10.0, 10.0])
            .unwrap()
            .with_equality(vec![1.0, -1.0])
            .unwrap();
        let u = set.project(&[8.0, 2.0]);
        let again = set.project(&u);
        assert!(math::inf_dist(&u, &again) <= 1e-12);
    }

    #[test]
    fn plane_projection_matches_grid_oracle() {
        // 2-D box with the diagonal equality; oracle scans the feasible
        // segment and refines around the best grid point.
        let set = ActionSet::bounded_box(vec![0.0, 0.0], vec![10.0, 10.0])
            .unwrap()
            .with_equality(vec![1.0, -1.0])
            .unwrap();
        let v = [8.0, 2.0];
        let u = set.project(&v);
        let oracle = check::segment_projection_oracle(&v, 0.0, 10.0);
        assert!(math::abs(u[0] - 5.0) <= 1e-9, "u = {u:?}");
        assert!(math::abs(u[1] - 5.0) <= 1e-9);
        assert!(math::inf_dist(&u, &oracle) <= 1e-6, "oracle {oracle:?}");
        // Hyperplane residual bound.
        let a = [1.0, -1.0];
        let res = math::abs(math::dot(&a, &u));
        assert!(res <= 1e-10 * math::norm2(&a) * math::fmax(1.0, math::norm2(&u)));
    }

    #[test]
    fn infeasible_sets_are_rejected_at_construction() {
        assert_eq!(
            ActionSet::bounded_box(vec![1.0], vec![0.0]),
            Err(SetError::BadBounds { coord: 0 })
        );
        let err = ActionSet::bounded_box(vec![1.0, 1.0], vec![2.0, 2.0])
            .unwrap()
            .with_equality(vec![1.0, 1.0]);
        assert_eq!(err, Err(SetError::DisjointPlane));
        let err = ActionSet::bounded_box(vec![0.0], vec![1.0])
            .unwrap()
            .with_equality(vec![0.0]);
        assert_eq!(err, Err(SetError::BadNormal));
    }

    #[test]
    fn quadratic_game_pseudo_gradient_is_identity() {
        let game = QuadraticGame::new(4, 2, 100.0);
        let x = ActionVector::from_stacked(4, 2, (0..8).map(|k| k as f64).collect());
        let g = pseudo_gradient(&game, &x);
        assert_eq!(g, x.as_slice().to_vec());
    }

    #[test]
    fn single_player_aggregate_is_own_block() {
        let game = QuadraticGame::new(1, 3, 10.0);
        let x = ActionVector::from_stacked(1, 3, vec![1.0, -2.0, 3.0]);
        assert_eq!(x.mean_block(), vec![1.0, -2.0, 3.0]);
        let g = pseudo_gradient(&game, &x);
        assert_eq!(g, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn probe_flags_anti_monotone_map() {
        // Test double whose stacked mapping is -x.
        struct AntiMonotone {
            set: ActionSet,
        }
        impl AggregativeGame for AntiMonotone {
            fn player_count(&self) -> usize {
                2
            }
            fn block_len(&self) -> usize {
                1
            }
            fn cost(&self, _p: usize, own: &[f64], _z: &[f64]) -> f64 {
                -0.5 * own[0] * own[0]
            }
            fn player_gradient(&self, _p: usize, own: &[f64], _z: &[f64], out: &mut [f64]) {
                out[0] = -own[0];
            }
            fn action_set(&self, _p: usize) -> &ActionSet {
                &self.set
            }
        }
        let g = AntiMonotone {
            set: ActionSet::bounded_box(vec![-1.0], vec![1.0]).unwrap(),
        };
        let probe = monotonicity_probe(&g, 32, 5);
        assert!(probe.violation);
        assert!(probe.min_ratio < 0.0);
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let game = QuadraticGame::with_centers(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.5], 20.0);
        let mut rng = crate::rng::stream(17, 0x716664, 0);
        for trial in 0..100 {
            let i = trial % 3;
            let own = game.action_set(i).sample_feasible(&mut rng);
            let z = game.action_set(i).sample_feasible(&mut rng);
            let mut analytic = vec![0.0; 2];
            game.player_gradient(i, &own, &z, &mut analytic);
            let fd = crate::check::finite_difference_gradient(&game, i, &own, &z);
            for c in 0..2 {
                let scale = math::fmax(1.0, math::abs(analytic[c]));
                assert!(
                    math::abs(analytic[c] - fd[c]) <= 1e-6 * scale,
                    "trial {trial} coord {c}"
                );
            }
        }
    }

    #[test]
    fn probe_on_identity_map_is_one() {
        let game = QuadraticGame::new(3, 2, 50.0);
        let probe = monotonicity_probe(&game, 64, 11);
        assert!(!probe.violation);
        assert!(math::abs(probe.min_ratio - 1.0) <= 1e-9);
    }

    #[test]
    fn vi_residual_zero_at_interior_minimizer() {
        // f_i = |x_i - c_i|^2/2 with interior centers: x = c is the
        // unconstrained minimizer, hence the unique equilibrium.
        let centers = vec![1.0, -1.5, 2.0, 0.5];
        let game = QuadraticGame::with_centers(2, 2, centers.clone(), 10.0);
        let x = ActionVector::from_stacked(2, 2, centers);
        assert!(vi_residual(&game, &x, 0.01) <= 1e-14);
        let y = ActionVector::from_stacked(2, 2, vec![0.0; 4]);
        assert!(vi_residual(&game, &y, 0.01) > 1e-3);
    }
}
