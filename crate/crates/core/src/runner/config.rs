use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::contract::{ContractBook, Symbol};
use crate::econometrics::{Deterministic, LagRule, UnitRootOptions};
use crate::exec::FillPolicy;
use crate::signals::Thresholds;
use crate::spread::{Scenario, SelectionPolicy, UnitRootTest};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub enter: f64,
    pub exit: f64,
    /// Enter when |z| first crosses the entry level instead of on the way back.
    pub first_touch: bool,
}

impl Default for SignalConfig {
    fn default() -> Self {
        let t = Thresholds::default();
        SignalConfig {
            enter: t.enter,
            exit: t.exit,
            first_touch: false,
        }
    }
}

impl SignalConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            enter: self.enter,
            exit: self.exit,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Defaults to 0.01 for pair tests and 0.10 for baskets.
    pub test_alpha: Option<f64>,
    pub unit_value_soft_cap: Option<f64>,
    pub unit_value_hard_cap: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitRootConfig {
    pub max_lag: Option<usize>,
    pub lag_rule: LagRule,
    pub deterministic: Deterministic,
}

impl UnitRootConfig {
    pub fn options(&self) -> UnitRootOptions {
        UnitRootOptions {
            max_lag: self.max_lag,
            lag_rule: self.lag_rule,
            deterministic: self.deterministic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JohansenConfig {
    /// VAR order in levels; the VECM carries `lag_p - 1` lagged differences.
    pub lag_p: usize,
    pub alpha: f64,
}

impl Default for JohansenConfig {
    fn default() -> Self {
        JohansenConfig {
            lag_p: 2,
            alpha: 0.10,
        }
    }
}

/// Replace the fee and funding rates of every contract.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeeOverrides {
    pub maker: Option<f64>,
    pub taker: Option<f64>,
    pub funding_rate: Option<f64>,
}

impl FeeOverrides {
    pub fn apply(&self, book: &mut ContractBook) {
        let symbols: Vec<Symbol> = book.symbols().cloned().collect();
        for s in symbols {
            let spec = book.get_mut(&s).expect("symbol listed by the book");
            if let Some(v) = self.maker {
                spec.maker_fee_rate = v;
            }
            if let Some(v) = self.taker {
                spec.taker_fee_rate = v;
            }
            if let Some(v) = self.funding_rate {
                spec.funding_rate = v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// 1: best pair each window, 2: Johansen basket each window,
    /// 3: one fixed pair over the whole range.
    pub scenario: u8,
    pub test: Option<UnitRootTest>,
    pub pair: Option<[Symbol; 2]>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Inclusive range start; defaults to the latest first bar over symbols.
    pub start: Option<String>,
    /// Range end; defaults to the earliest last bar over symbols.
    pub end: Option<String>,
    pub formation_days: u32,
    pub trading_days: u32,
    /// Recorded with the outputs; the backtest itself draws no random numbers.
    pub seed: u64,
    /// Universe; defaults to every contract in the data directory.
    pub symbols: Option<Vec<Symbol>>,
    pub initial_capital: f64,
    /// XBT value of one traded lot of the spread.
    pub lot_target_xbt: f64,
    pub thresholds: SignalConfig,
    pub fill: FillPolicy,
    pub selection: SelectionConfig,
    pub unit_root: UnitRootConfig,
    pub johansen: JohansenConfig,
    /// Fixed z-score look-back for scenario 3, in minutes.
    pub scenario3_lookback: usize,
    pub fees: FeeOverrides,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: 1,
            test: Some(UnitRootTest::Adf),
            pair: None,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            start: None,
            end: None,
            formation_days: 90,
            trading_days: 7,
            seed: 0,
            symbols: None,
            initial_capital: 1.0,
            lot_target_xbt: 1.0,
            thresholds: SignalConfig::default(),
            fill: FillPolicy::default(),
            selection: SelectionConfig::default(),
            unit_root: UnitRootConfig::default(),
            johansen: JohansenConfig::default(),
            scenario3_lookback: 1440,
            fees: FeeOverrides::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn scenario_kind(&self) -> Result<Scenario, RunError> {
        match (self.scenario, self.test) {
            (1, Some(UnitRootTest::Adf)) => Ok(Scenario::PairAdf),
            (1, Some(UnitRootTest::Kss)) => Ok(Scenario::PairKss),
            (1, None) => Err(RunError::Config(
                "scenario 1 needs a unit-root test (adf or kss)".into(),
            )),
            (2, _) => Ok(Scenario::Basket),
            (3, _) => Ok(Scenario::FixedPair),
            (s, _) => Err(RunError::Config(format!(
                "unknown scenario {s}; expected 1, 2 or 3"
            ))),
        }
    }

    pub fn selection_policy(&self) -> Result<SelectionPolicy, RunError> {
        let mut p = SelectionPolicy::for_scenario(self.scenario_kind()?);
        if let Some(a) = self.selection.test_alpha {
            p.test_alpha = a;
        }
        if let Some(v) = self.selection.unit_value_soft_cap {
            p.unit_value_soft_cap = v;
        }
        if let Some(v) = self.selection.unit_value_hard_cap {
            p.unit_value_hard_cap = v;
        }
        p.validate().map_err(RunError::Config)?;
        Ok(p)
    }

    pub fn range(&self) -> Result<(Option<Timestamp>, Option<Timestamp>), RunError> {
        let parse = |s: &Option<String>| -> Result<Option<Timestamp>, RunError> {
            s.as_deref()
                .map(Timestamp::parse)
                .transpose()
                .map_err(|e| RunError::Config(e.to_string()))
        };
        Ok((parse(&self.start)?, parse(&self.end)?))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let scenario = self.scenario_kind()?;
        if scenario == Scenario::FixedPair {
            match &self.pair {
                None => return Err(RunError::Config("scenario 3 needs a fixed pair".into())),
                Some([a, b]) if a == b => {
                    return Err(RunError::Config(format!(
                        "pair legs must differ, got {a} twice"
                    )))
                }
                _ => {}
            }
            if self.scenario3_lookback < 2 {
                return Err(RunError::Config(
                    "scenario 3 look-back must be at least 2 minutes".into(),
                ));
            }
        }
        self.selection_policy()?;
        self.thresholds
            .thresholds()
            .validate()
            .map_err(RunError::Config)?;
        self.fill.validate().map_err(RunError::Config)?;
        if !(self.initial_capital > 0.0) || !(self.lot_target_xbt > 0.0) {
            return Err(RunError::Config(
                "initial capital and lot target must be positive".into(),
            ));
        }
        if self.johansen.lag_p < 1 {
            return Err(RunError::Config("johansen lag_p must be at least 1".into()));
        }
        if let Some(syms) = &self.symbols {
            if syms.len() < 2 {
                return Err(RunError::Config(
                    "the universe needs at least two symbols".into(),
                ));
            }
        }
        if let (Some(s), Some(e)) = self.range()? {
            if e <= s {
                return Err(RunError::Config(format!(
                    "range end {e} is not after start {s}"
                )));
            }
        }
        Ok(())
    }
}
