use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, AgentKind, Thresholds};
use crate::detect::Direction;
use crate::error::{Error, Result};
use crate::inventory::{exact_inventory_kernel, full_stock_map, DemandModel, InventoryParams, PurchaseCost};
use crate::mdp::NonstationaryProcess;
use crate::qlearn::{InitKind, InitStrategy, LearningSchedule};

/// Q-table initialisation as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    /// Smart (monotone) for the higher-demand phase, random for the lower.
    Auto,
    Random,
    Pyramid,
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionChoice {
    /// Decrease detector when demand drops, increase detector when it rises.
    Auto,
    LowToHigh,
    HighToLow,
    TwoSided,
}

/// One experiment, as a flat set of keys. Every field has a default; the
/// defaults are the N = 5 inventory scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,

    // inventory model
    pub capacity: usize,
    pub fixed_cost: f64,
    pub unit_cost: f64,
    pub holding_cost: f64,
    pub unit_price: f64,
    pub rent: f64,
    pub purchase_cost: PurchaseCost,

    // change
    pub rate_pre: f64,
    pub rate_post: f64,
    pub change_point: usize,
    pub horizon: usize,

    pub agents: Vec<AgentKind>,

    // learning
    pub tau: usize,
    pub delta: usize,
    pub start_state: usize,
    pub alpha0: f64,
    pub alpha_cut: f64,
    pub eps0: f64,
    pub eps_cut: f64,
    pub step_decrement: f64,
    pub beta: f64,
    pub pre_init: InitChoice,
    pub post_init: InitChoice,
    /// Order-up-to level of the smart map; unset means `capacity - 1`.
    pub smart_level: Option<usize>,
    /// Amplitude of the smart map; unset means one day's expected revenue
    /// `unit_price * rate` of the phase being initialised.
    pub smart_scale: Option<f64>,
    pub random_scale: f64,

    // detection (thresholds in multiples of sd0)
    pub direction: DirectionChoice,
    pub eta: f64,
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub threshold_a_tilde: f64,
    /// TTAQL suspect-band map; unset means keep the warehouse full.
    pub qcd_policy: Option<Vec<usize>>,

    // execution
    pub n_runs: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
    /// Also write the discounted cumulative post-change series.
    pub discounted_series: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let inv = InventoryParams::default();
        let sched = LearningSchedule::default();
        Self {
            scenario: "inventory_n5".into(),
            capacity: inv.capacity,
            fixed_cost: inv.fixed_cost,
            unit_cost: inv.unit_cost,
            holding_cost: inv.holding_cost,
            unit_price: inv.unit_price,
            rent: inv.rent,
            purchase_cost: inv.purchase_cost,
            rate_pre: 4.0,
            rate_post: 1.8,
            change_point: 1000,
            horizon: 5000,
            agents: AgentKind::ALL.to_vec(),
            tau: 500,
            delta: 600,
            start_state: 0,
            alpha0: sched.alpha0,
            alpha_cut: sched.alpha_cut,
            eps0: sched.eps0,
            eps_cut: sched.eps_cut,
            step_decrement: sched.delta,
            beta: sched.beta,
            pre_init: InitChoice::Auto,
            post_init: InitChoice::Auto,
            smart_level: None,
            smart_scale: None,
            random_scale: 1.0,
            direction: DirectionChoice::Auto,
            eta: 0.92,
            threshold_a: 6.0,
            threshold_b: 3.35,
            threshold_a_tilde: 6.67,
            qcd_policy: None,
            n_runs: 10_000,
            seed: 2024,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            discounted_series: false,
        }
    }
}

impl ExperimentConfig {
    /// N = 5, demand 4 -> 1.8.
    pub fn inventory_n5() -> Self {
        Self::default()
    }

    /// N = 7, demand 6 -> 2.5.
    pub fn inventory_n7() -> Self {
        Self {
            scenario: "inventory_n7".into(),
            capacity: 7,
            rate_pre: 6.0,
            rate_post: 2.5,
            eta: 1.2,
            threshold_a: 8.0,
            threshold_b: 4.0,
            threshold_a_tilde: 6.9,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.change_point >= self.horizon {
            return Err(Error::Config(format!(
                "change point {} must precede the horizon {}",
                self.change_point, self.horizon
            )));
        }
        self.inventory().validate()?;
        DemandModel::new(self.rate_pre)?;
        DemandModel::new(self.rate_post)?;
        self.schedule().validate()?;
        if let Some(level) = self.smart_level {
            if level > self.capacity {
                return Err(Error::Config(format!(
                    "smart_level {level} exceeds capacity {}",
                    self.capacity
                )));
            }
        }
        let n = self.capacity + 1;
        self.agent_config()?.validate(n, n)
    }

    pub fn inventory(&self) -> InventoryParams {
        InventoryParams {
            capacity: self.capacity,
            fixed_cost: self.fixed_cost,
            unit_cost: self.unit_cost,
            holding_cost: self.holding_cost,
            unit_price: self.unit_price,
            rent: self.rent,
            purchase_cost: self.purchase_cost,
        }
    }

    pub fn schedule(&self) -> LearningSchedule {
        LearningSchedule {
            alpha0: self.alpha0,
            alpha_cut: self.alpha_cut,
            eps0: self.eps0,
            eps_cut: self.eps_cut,
            delta: self.step_decrement,
            beta: self.beta,
        }
    }

    pub fn process(&self) -> Result<NonstationaryProcess> {
        let inv = self.inventory();
        let pre = exact_inventory_kernel(&inv, &DemandModel::new(self.rate_pre)?)?;
        let post = exact_inventory_kernel(&inv, &DemandModel::new(self.rate_post)?)?;
        NonstationaryProcess::new(pre, post, self.change_point)
    }

    fn init_for(&self, choice: InitChoice, rate: f64, is_higher_demand: bool) -> InitStrategy {
        let smart = || {
            let level = self.smart_level.unwrap_or(self.capacity.saturating_sub(1));
            let scale = self.smart_scale.unwrap_or(self.unit_price * rate);
            InitStrategy::new(InitKind::Monotone, scale).with_level(level)
        };
        match choice {
            InitChoice::Auto if is_higher_demand => smart(),
            InitChoice::Monotone => smart(),
            InitChoice::Auto | InitChoice::Random => InitStrategy::new(InitKind::Random, self.random_scale),
            InitChoice::Pyramid => {
                InitStrategy::new(InitKind::Pyramid, self.smart_scale.unwrap_or(self.unit_price * rate))
            }
        }
    }

    pub fn pre_init_strategy(&self) -> InitStrategy {
        self.init_for(self.pre_init, self.rate_pre, self.rate_pre >= self.rate_post)
    }

    pub fn post_init_strategy(&self) -> InitStrategy {
        self.init_for(self.post_init, self.rate_post, self.rate_post > self.rate_pre)
    }

    pub fn resolved_direction(&self) -> Direction {
        match self.direction {
            DirectionChoice::LowToHigh => Direction::LowToHigh,
            DirectionChoice::HighToLow => Direction::HighToLow,
            DirectionChoice::TwoSided => Direction::TwoSided,
            DirectionChoice::Auto if self.rate_post < self.rate_pre => Direction::HighToLow,
            DirectionChoice::Auto if self.rate_post > self.rate_pre => Direction::LowToHigh,
            DirectionChoice::Auto => Direction::TwoSided,
        }
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        Ok(AgentConfig {
            horizon: self.horizon,
            tau: self.tau,
            delta: self.delta,
            start_state: self.start_state,
            schedule: self.schedule(),
            pre_init: self.pre_init_strategy(),
            post_init: self.post_init_strategy(),
            direction: self.resolved_direction(),
            eta: self.eta,
            thresholds: Thresholds {
                single: self.threshold_a,
                suspect: self.threshold_b,
                confirm: self.threshold_a_tilde,
            },
            qcd_policy: self.qcd_policy.clone().unwrap_or_else(|| full_stock_map(self.capacity)),
        })
    }
}
