//! Single-item inventory control with Poisson demand and lost sales.
//!
//! Each morning the manager holds `s` items and orders `a`; stock is capped
//! at the warehouse capacity `N`. Demand `D ~ Poisson(lambda)` arrives during
//! the day, unmet demand is lost, and the leftover `max(min(s+a, N) - D, 0)`
//! becomes tomorrow's state. The daily reward is
//!
//! ```text
//! R = -k 1{a>0} - c min(a, N-s) - h s' + p (min(s+a, N) - s') - rent
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Environment, TabularMdp};
use crate::rng::RngStream;

/// How the variable purchase cost is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurchaseCost {
    /// `c * min(a, N - s)`: only items that fit are paid for.
    #[default]
    Clamped,
    /// `c * a`: every ordered item is paid for, including overflow.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InventoryParams {
    pub capacity: usize,
    pub fixed_cost: f64,
    pub unit_cost: f64,
    pub holding_cost: f64,
    pub unit_price: f64,
    pub rent: f64,
    pub purchase_cost: PurchaseCost,
}

impl Default for InventoryParams {
    fn default() -> Self {
        Self {
            capacity: 5,
            fixed_cost: 0.5,
            unit_cost: 3.0,
            holding_cost: 2.0,
            unit_price: 8.0,
            rent: 4.8,
            purchase_cost: PurchaseCost::Clamped,
        }
    }
}

impl InventoryParams {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be positive".into()));
        }
        let costs = [
            self.fixed_cost,
            self.unit_cost,
            self.holding_cost,
            self.unit_price,
            self.rent,
        ];
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("inventory costs must be finite and nonnegative".into()));
        }
        if self.unit_price <= self.holding_cost {
            return Err(Error::Config(format!(
                "unit price {} must exceed holding cost {}",
                self.unit_price, self.holding_cost
            )));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.capacity + 1
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        let n = self.capacity;
        if s > n {
            return Err(Error::Argument(format!("inventory level {s} exceeds capacity {n}")));
        }
        if a > n {
            return Err(Error::Argument(format!("order {a} exceeds capacity {n}")));
        }
        Ok(())
    }

    /// Stock on hand after the morning delivery.
    #[inline]
    pub fn stock(&self, s: usize, a: usize) -> usize {
        (s + a).min(self.capacity)
    }

    pub fn next_state(&self, s: usize, a: usize, demand: u64) -> Result<usize> {
        self.check(s, a)?;
        Ok(self.stock(s, a).saturating_sub(demand.min(usize::MAX as u64) as usize))
    }

    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> Result<f64> {
        self.check(s, a)?;
        let stock = self.stock(s, a);
        if s_next > stock {
            return Err(Error::Argument(format!(
                "leftover {s_next} exceeds stock {stock} for s={s}, a={a}"
            )));
        }
        Ok(self.reward_unchecked(s, a, s_next))
    }

    fn reward_unchecked(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let n = self.capacity;
        let stock = self.stock(s, a);
        let bought = match self.purchase_cost {
            PurchaseCost::Clamped => a.min(n - s),
            PurchaseCost::Ordered => a,
        };
        let fixed = if a > 0 { self.fixed_cost } else { 0.0 };
        let sold = stock.saturating_sub(s_next);
        -fixed - self.unit_cost * bought as f64 - self.holding_cost * s_next as f64 + self.unit_price * sold as f64
            - self.rent
    }

    /// Loose bound on `|R|`.
    pub fn reward_bound(&self) -> f64 {
        let n = self.capacity as f64;
        self.fixed_cost + (self.unit_cost + self.holding_cost + self.unit_price) * n + self.rent
    }
}

/// Poisson daily demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub rate: f64,
}

impl DemandModel {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Argument(format!(
                "demand rate {rate} must be finite and nonnegative"
            )));
        }
        Ok(Self { rate })
    }

    /// `P(D = d)`.
    pub fn pmf(&self, d: u64) -> f64 {
        if self.rate == 0.0 {
            return if d == 0 { 1.0 } else { 0.0 };
        }
        let mut p = (-self.rate).exp();
        for i in 1..=d {
            p *= self.rate / i as f64;
        }
        p
    }

    /// `P(D >= m)`.
    pub fn tail(&self, m: u64) -> f64 {
        let below: f64 = (0..m).map(|d| self.pmf(d)).sum();
        (1.0 - below).max(0.0)
    }

    /// Exact draw by sequential inverse CDF (one uniform per call).
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        let u = rng.uniform();
        if self.rate == 0.0 {
            return 0;
        }
        let mut p = (-self.rate).exp();
        let mut cdf = p;
        let mut d = 0u64;
        while u >= cdf {
            d += 1;
            p *= self.rate / d as f64;
            if p == 0.0 && d as f64 > self.rate {
                // cdf stalled below u through rounding; the remaining mass is nil.
                break;
            }
            cdf += p;
        }
        d
    }
}

pub fn sample_poisson(model: &DemandModel, rng: &mut RngStream) -> u64 {
    model.sample(rng)
}

/// Exact transition kernel and reward table on states and actions `0..=N`.
///
/// Demand values that would take stock below zero collapse onto state 0.
pub fn exact_inventory_kernel(params: &InventoryParams, model: &DemandModel) -> Result<TabularMdp> {
    params.validate()?;
    let n = params.n_levels();
    let mut kernel = vec![0.0; n * n * n];
    let mut reward = vec![0.0; n * n * n];
    for s in 0..n {
        for a in 0..n {
            let base = (s * n + a) * n;
            let stock = params.stock(s, a);
            for d in 0..stock {
                kernel[base + stock - d] = model.pmf(d as u64);
            }
            // Tail mass: everything sold.
            let below: f64 = kernel[base + 1..base + n].iter().sum();
            kernel[base] = (1.0 - below).max(0.0);
            for s2 in 0..n {
                reward[base + s2] = params.reward_unchecked(s, a, s2);
            }
        }
    }
    TabularMdp::new(n, n, kernel, reward)
}

/// Keep the warehouse full: order exactly the free space.
pub fn full_stock_policy(s: usize, capacity: usize) -> usize {
    capacity.saturating_sub(s)
}

/// The full-stock map over all inventory levels.
pub fn full_stock_map(capacity: usize) -> Vec<usize> {
    (0..=capacity).map(|s| full_stock_policy(s, capacity)).collect()
}

/// Inventory dynamics simulated from sampled demand rather than the kernel,
/// with the demand rate switching at `change_point`.
#[derive(Debug, Clone)]
pub struct InventoryEnv {
    pub params: InventoryParams,
    pub pre: DemandModel,
    pub post: DemandModel,
    pub change_point: usize,
}

impl Environment for InventoryEnv {
    fn n_states(&self) -> usize {
        self.params.n_levels()
    }

    fn n_actions(&self) -> usize {
        self.params.n_levels()
    }

    fn step(&self, t: usize, s: usize, a: usize, rng: &mut RngStream) -> Result<(usize, f64)> {
        let model = if t < self.change_point { &self.pre } else { &self.post };
        let d = model.sample(rng);
        let s2 = self.params.next_state(s, a, d)?;
        Ok((s2, self.params.reward_unchecked(s, a, s2)))
    }
}
