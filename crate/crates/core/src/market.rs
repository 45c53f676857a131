//! AMM trade-cost functions and return distributions.
//!
//! A pool is described by the value of its risky-asset reserves `L`
//! (numéraire at CEX prices), the CEX reference price `P0` and the
//! pre-trade gap `δ = (P0 - P'(0)) / P0`. Sell-side pools are priced as
//! buys in the reflected market: the gap flips sign and so do returns.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Side {
    #[default]
    Buy,
    Sell,
}

/// Shape of the DEX cost function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Curve {
    /// Second-order expansion of a constant product pool:
    /// `P(x) = m0 x + m0 x² / (L/P0)`.
    #[default]
    Quadratic,
    /// Exact `x·y = k` pool with risky reserve `L/P0` and spot `m0`.
    ConstantProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PoolState {
    /// Risky-asset reserves valued in numéraire at the CEX price.
    pub liquidity: f64,
    /// CEX price, numéraire per risky unit.
    pub cex_price: f64,
    /// Pre-trade gap `δ`; positive when the DEX under-prices the asset.
    pub price_gap: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub side: Side,
    #[cfg_attr(feature = "serde", serde(default))]
    pub curve: Curve,
}

impl PoolState {
    pub fn new(liquidity: f64, cex_price: f64, price_gap: f64) -> Result<Self> {
        let pool = PoolState {
            liquidity,
            cex_price,
            price_gap,
            side: Side::Buy,
            curve: Curve::Quadratic,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn with_curve(mut self, curve: Curve) -> Self {
        self.curve = curve;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.liquidity > 0.0 && self.liquidity.is_finite()) {
            return Err(Error::config("liquidity", "must be finite and > 0"));
        }
        if !(self.cex_price > 0.0 && self.cex_price.is_finite()) {
            return Err(Error::config("cex_price", "must be finite and > 0"));
        }
        if !(self.price_gap.abs() < 1.0) {
            return Err(Error::config("price_gap", "must satisfy |δ| < 1"));
        }
        Ok(())
    }

    /// Gap seen by the (mirrored) buyer.
    pub fn effective_gap(&self) -> f64 {
        match self.side {
            Side::Buy => self.price_gap,
            Side::Sell => -self.price_gap,
        }
    }

    /// Marginal DEX price at zero size, `P0 (1 - δ)` in buy coordinates.
    pub fn spot_price(&self) -> f64 {
        self.cex_price * (1.0 - self.effective_gap())
    }

    /// Risky-asset reserve `L / P0` in units.
    pub fn risky_reserve(&self) -> f64 {
        self.liquidity / self.cex_price
    }

    /// Total numéraire cost of buying `x` risky units.
    pub fn dex_cost(&self, x: f64) -> Result<f64> {
        self.check_size(x)?;
        Ok(self.cost_unchecked(x))
    }

    /// Derivative of [`dex_cost`](Self::dex_cost) at `x`.
    pub fn dex_marginal_price(&self, x: f64) -> Result<f64> {
        self.check_size(x)?;
        Ok(self.marginal_unchecked(x))
    }

    fn check_size(&self, x: f64) -> Result<()> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::domain("trade size must be >= 0"));
        }
        if self.curve == Curve::ConstantProduct && x >= self.risky_reserve() {
            return Err(Error::domain("trade size exhausts the pool's risky reserve"));
        }
        Ok(())
    }

    pub(crate) fn cost_unchecked(&self, x: f64) -> f64 {
        let m0 = self.spot_price();
        let r = self.risky_reserve();
        match self.curve {
            Curve::Quadratic => m0 * x + m0 * x * x / r,
            Curve::ConstantProduct => m0 * r * x / (r - x),
        }
    }

    pub(crate) fn marginal_unchecked(&self, x: f64) -> f64 {
        let m0 = self.spot_price();
        let r = self.risky_reserve();
        match self.curve {
            Curve::Quadratic => m0 * (1.0 + 2.0 * x / r),
            Curve::ConstantProduct => {
                let d = r - x;
                m0 * r * r / (d * d)
            }
        }
    }

    pub(crate) fn curvature_unchecked(&self, x: f64) -> f64 {
        let m0 = self.spot_price();
        let r = self.risky_reserve();
        match self.curve {
            Curve::Quadratic => 2.0 * m0 / r,
            Curve::ConstantProduct => {
                let d = r - x;
                2.0 * m0 * r * r / (d * d * d)
            }
        }
    }

    /// Units at which the marginal price reaches `ratio · P0`.
    pub fn size_at_marginal_ratio(&self, ratio: f64) -> f64 {
        let m0 = self.spot_price();
        let r = self.risky_reserve();
        let target = ratio * self.cex_price;
        if target <= m0 {
            return 0.0;
        }
        match self.curve {
            Curve::Quadratic => 0.5 * r * (target / m0 - 1.0),
            Curve::ConstantProduct => r * (1.0 - libm::sqrt(m0 / target)),
        }
    }
}

/// One Gaussian component of a return mixture; `sd = 0` gives an atom.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ReturnKind {
    Normal { sigma: f64 },
    Empirical { samples: Vec<f64> },
    Mixture { components: Vec<MixtureComponent> },
}

#[cfg(feature = "serde")]
fn default_floor() -> f64 {
    -1.0
}

/// Distribution of one-second CEX returns. Windows rescale it by `τ^s`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReturnModel {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: ReturnKind,
    #[cfg_attr(feature = "serde", serde(default = "default_floor"))]
    pub truncation_floor: f64,
}

const MEAN_TOLERANCE: f64 = 1e-9;
const MAX_REJECTIONS: usize = 1024;

impl ReturnModel {
    pub fn normal(sigma: f64) -> Self {
        ReturnModel { kind: ReturnKind::Normal { sigma }, truncation_floor: -1.0 }
    }

    /// Bootstrap distribution over observed returns, re-centred to mean 0.
    pub fn empirical(mut samples: Vec<f64>) -> Self {
        if !samples.is_empty() {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            samples.iter_mut().for_each(|s| *s -= mean);
        }
        ReturnModel { kind: ReturnKind::Empirical { samples }, truncation_floor: -1.0 }
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Self {
        ReturnModel { kind: ReturnKind::Mixture { components }, truncation_floor: -1.0 }
    }

    /// Equal-weight atoms at `±magnitude`.
    pub fn two_point(magnitude: f64) -> Self {
        Self::mixture(alloc::vec![
            MixtureComponent { weight: 0.5, mean: -magnitude, sd: 0.0 },
            MixtureComponent { weight: 0.5, mean: magnitude, sd: 0.0 },
        ])
    }

    pub fn is_normal(&self) -> bool {
        matches!(self.kind, ReturnKind::Normal { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_floor <= 0.0) {
            return Err(Error::config("truncation_floor", "must be <= 0"));
        }
        match &self.kind {
            ReturnKind::Normal { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::config("sigma", "must be finite and >= 0"));
                }
            }
            ReturnKind::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::config("samples", "empirical set is empty"));
                }
                if samples.iter().any(|s| !s.is_finite()) {
                    return Err(Error::config("samples", "must be finite"));
                }
                if samples.iter().any(|&s| s < self.truncation_floor) {
                    return Err(Error::config("samples", "below truncation floor"));
                }
            }
            ReturnKind::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::config("components", "mixture is empty"));
                }
                for c in components {
                    if !(c.weight > 0.0 && c.weight.is_finite()) {
                        return Err(Error::config("components.weight", "must be > 0"));
                    }
                    if !(c.sd >= 0.0 && c.sd.is_finite() && c.mean.is_finite()) {
                        return Err(Error::config("components.sd", "must be finite and >= 0"));
                    }
                    if c.sd == 0.0 && c.mean < self.truncation_floor {
                        return Err(Error::config("components.mean", "atom below truncation floor"));
                    }
                }
            }
        }
        let scale = self.std_dev().max(1e-300);
        if self.mean().abs() > MEAN_TOLERANCE * scale.max(1.0) {
            return Err(Error::config("kind", "modeled returns must have mean 0"));
        }
        Ok(())
    }

    /// Mean of the untruncated distribution.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            ReturnKind::Normal { .. } => 0.0,
            ReturnKind::Empirical { samples } => {
                samples.iter().sum::<f64>() / samples.len().max(1) as f64
            }
            ReturnKind::Mixture { components } => {
                let w: f64 = components.iter().map(|c| c.weight).sum();
                components.iter().map(|c| c.weight * c.mean).sum::<f64>() / w
            }
        }
    }

    /// Standard deviation of the untruncated distribution.
    pub fn std_dev(&self) -> f64 {
        match &self.kind {
            ReturnKind::Normal { sigma } => *sigma,
            ReturnKind::Empirical { samples } => {
                let m = self.mean();
                let n = samples.len().max(1) as f64;
                libm::sqrt(samples.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / n)
            }
            ReturnKind::Mixture { components } => {
                let m = self.mean();
                let w: f64 = components.iter().map(|c| c.weight).sum();
                let second: f64 = components
                    .iter()
                    .map(|c| c.weight * (c.sd * c.sd + (c.mean - m) * (c.mean - m)))
                    .sum();
                libm::sqrt(second / w)
            }
        }
    }

    /// Draws one return, rejecting values below the truncation floor.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        for _ in 0..MAX_REJECTIONS {
            let r = self.draw_untruncated(rng);
            if r >= self.truncation_floor {
                return r;
            }
        }
        self.truncation_floor
    }

    fn draw_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ReturnKind::Normal { sigma } => {
                if *sigma == 0.0 {
                    return 0.0;
                }
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            ReturnKind::Empirical { samples } => samples[rng.random_range(0..samples.len())],
            ReturnKind::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = components[components.len() - 1];
                for c in components {
                    if u < c.weight {
                        pick = *c;
                        break;
                    }
                    u -= c.weight;
                }
                if pick.sd == 0.0 {
                    pick.mean
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    pick.mean + pick.sd * z
                }
            }
        }
    }
}

/// Seeded generator used throughout the crate: ChaCha8 keyed by
/// `seed_from_u64`. Fixtures produced with a given seed are portable
/// across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` deterministic draws from `model` under `seed`.
pub fn sample_returns(model: &ReturnModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("n", "must be >= 1"));
    }
    model.validate()?;
    let mut rng = seeded_rng(seed);
    Ok((0..n).map(|_| model.draw(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_pool() -> PoolState {
        PoolState::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn cost_examples() {
        assert_eq!(unit_pool().dex_cost(0.0).unwrap(), 0.0);
        assert!((unit_pool().dex_cost(0.5).unwrap() - 0.75).abs() < 1e-15);
        let pool = PoolState::new(100.0, 2.0, 0.01).unwrap();
        assert!((pool.dex_cost(1.0).unwrap() - 2.0196).abs() < 1e-12);
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(unit_pool().dex_marginal_price(0.0).unwrap(), 1.0);
        let sigma = 0.01;
        let p = unit_pool().dex_marginal_price(0.61 * sigma).unwrap();
        assert!((p - 1.0122).abs() < 1e-12);
        assert!(((p - 1.0) / sigma - 1.22).abs() < 1e-9);
        let pool = PoolState::new(10.0, 1.0, 0.0).unwrap();
        assert!((pool.dex_marginal_price(1.0).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn negative_size_is_domain_error() {
        assert!(matches!(unit_pool().dex_cost(-1.0), Err(Error::Domain(_))));
        assert!(matches!(unit_pool().dex_marginal_price(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_product_exhaustion_is_domain_error() {
        let pool = unit_pool().with_curve(Curve::ConstantProduct);
        assert!(pool.dex_cost(1.0).is_err());
        assert!(pool.dex_cost(0.999).is_ok());
    }

    #[test]
    fn invalid_pools_rejected() {
        assert!(PoolState::new(0.0, 1.0, 0.0).is_err());
        assert!(PoolState::new(1.0, -1.0, 0.0).is_err());
        assert!(PoolState::new(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sell_side_mirrors_gap() {
        let pool = PoolState::new(10.0, 1.0, -0.02).unwrap().with_side(Side::Sell);
        assert!((pool.spot_price() - 0.98).abs() < 1e-15);
    }

    #[test]
    fn curves_agree_to_second_order() {
        let q = PoolState::new(1e4, 2.0, 0.003).unwrap();
        let c = q.with_curve(Curve::ConstantProduct);
        for x in [1e-3, 1e-2, 1e-1, 1.0] {
            let rel_gap = x / q.risky_reserve();
            let a = q.dex_cost(x).unwrap();
            let b = c.dex_cost(x).unwrap();
            assert!((a - b).abs() / a < 2.0 * rel_gap * rel_gap, "x={x}");
        }
    }

    #[test]
    fn max_position_hits_three_times_spot() {
        for curve in [Curve::Quadratic, Curve::ConstantProduct] {
            let pool = PoolState::new(500.0, 3.0, 0.01).unwrap().with_curve(curve);
            let x = pool.size_at_marginal_ratio(3.0);
            assert!((pool.dex_marginal_price(x).unwrap() - 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_normal_draws_zero() {
        let v = sample_returns(&ReturnModel::normal(0.0), 5, 42).unwrap();
        assert_eq!(v, alloc::vec![0.0; 5]);
    }

    #[test]
    fn normal_moments_converge() {
        let v = sample_returns(&ReturnModel::normal(0.01), 1_000_000, 1).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n);
        assert!(mean.abs() < 5e-5, "mean {mean}");
        assert!((sd / 0.01 - 1.0).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn two_point_support() {
        let v = sample_returns(&ReturnModel::two_point(0.02), 4, 7).unwrap();
        assert!(v.iter().all(|&r| r == 0.02 || r == -0.02));
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(sample_returns(&ReturnModel::normal(-0.1), 3, 0).is_err());
        assert!(sample_returns(&ReturnModel::empirical(alloc::vec![]), 3, 0).is_err());
        assert!(sample_returns(&ReturnModel::normal(0.1), 0, 0).is_err());
        let skewed = ReturnModel::mixture(alloc::vec![MixtureComponent {
            weight: 1.0,
            mean: 0.01,
            sd: 0.0
        }]);
        assert!(skewed.validate().is_err());
    }

    #[test]
    fn empirical_is_centred() {
        let m = ReturnModel::empirical(alloc::vec![0.1, 0.2, 0.3]);
        assert!(m.mean().abs() < 1e-15);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn truncation_respected() {
        let v = sample_returns(&ReturnModel::normal(2.0), 20_000, 3).unwrap();
        assert!(v.iter().all(|&r| r >= -1.0));
    }

    proptest! {
        #[test]
        fn cost_is_convex(l in 1.0f64..1e4, gap in -0.5f64..0.5, a in 0.0f64..1.0, b in 0.0f64..1.0, t in 0.01f64..0.99) {
            let pool = PoolState::new(l, 1.7, gap).unwrap();
            let (x1, x2) = (a * l, b * l);
            let mid = pool.dex_cost(t * x1 + (1.0 - t) * x2).unwrap();
            let chord = t * pool.dex_cost(x1).unwrap() + (1.0 - t) * pool.dex_cost(x2).unwrap();
            prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn marginal_matches_central_difference(l in 1.0f64..1e4, gap in -0.5f64..0.5, frac in 0.0f64..0.5, cp in any::<bool>()) {
            let curve = if cp { Curve::ConstantProduct } else { Curve::Quadratic };
            let pool = PoolState::new(l, 2.5, gap).unwrap().with_curve(curve);
            let x = frac * pool.risky_reserve() + 1e-3;
            let h = 1e-5 * x.max(1.0);
            let fd = (pool.dex_cost(x + h).unwrap() - pool.dex_cost(x - h).unwrap()) / (2.0 * h);
            let exact = pool.dex_marginal_price(x).unwrap();
            prop_assert!(((fd - exact) / exact).abs() < 1e-8, "fd {} exact {}", fd, exact);
        }

        #[test]
        fn sampling_is_reproducible(seed in any::<u64>(), sigma in 0.0f64..0.5) {
            let m = ReturnModel::normal(sigma);
            prop_assert_eq!(sample_returns(&m, 64, seed).unwrap(), sample_returns(&m, 64, seed).unwrap());
        }
    }
}
