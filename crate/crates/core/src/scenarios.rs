//! Built-in generating parameter sets for simulation and recovery studies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::background::{Background, SeasonalBackground};
use crate::calendar::{parse_tz, CalendarGrid};
use crate::gibbs::BackgroundSpec;
use crate::model::{AncestorParams, InfluenceMatrix, KernelSpec, ModelError, ModelParams};
use crate::simulate::StopRule;

/// Events per replicate in the constant-background scenarios.
pub const SCENARIO_EVENTS: usize = 5000;

/// Time zone of the group-chat preset calendar.
pub const GROUPCHAT_TZ: &str = "Europe/London";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Scenario1,
    Scenario2,
    Scenario3,
    /// Nine participants with a seasonal background over calendar 2021.
    GroupChat,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::Scenario1, Self::Scenario2, Self::Scenario3, Self::GroupChat];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Scenario1 => "scenario1",
            Self::Scenario2 => "scenario2",
            Self::Scenario3 => "scenario3",
            Self::GroupChat => "groupchat",
        }
    }

    pub fn spec(&self) -> Result<ScenarioSpec, ModelError> {
        match self {
            Self::Scenario1 => scenario1(),
            Self::Scenario2 => scenario2(),
            Self::Scenario3 => scenario3(),
            Self::GroupChat => groupchat(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scenario1" | "1" => Ok(Self::Scenario1),
            "scenario2" | "2" => Ok(Self::Scenario2),
            "scenario3" | "3" => Ok(Self::Scenario3),
            "groupchat" => Ok(Self::GroupChat),
            other => Err(format!("unknown preset `{other}` (expected scenario1, scenario2, scenario3 or groupchat)")),
        }
    }
}

/// Generating parameters, how much to simulate, and the background shape to
/// fit back.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: &'static str,
    pub params: AncestorParams,
    pub stop: StopRule,
    pub fit_background: BackgroundSpec,
}

impl ScenarioSpec {
    pub fn model_params(&self) -> ModelParams {
        ModelParams::Ancestor(self.params.clone())
    }

    /// Same scenario with `n` events instead of the default; only meaningful
    /// for event-count scenarios.
    pub fn with_events(mut self, n: usize) -> Self {
        if matches!(self.stop, StopRule::EventCount(_)) {
            self.stop = StopRule::EventCount(n);
        }
        self
    }
}

pub fn scenario1() -> Result<ScenarioSpec, ModelError> {
    Ok(ScenarioSpec {
        name: "scenario1",
        params: AncestorParams::new(
            Background::constant(vec![0.05; 3])?,
            InfluenceMatrix::filled(3, 0.6),
            InfluenceMatrix::diag_off(3, 0.3, 0.05),
            KernelSpec::uniform(2.0)?,
            KernelSpec::uniform(0.5)?,
            false,
        )?,
        stop: StopRule::EventCount(SCENARIO_EVENTS),
        fit_background: BackgroundSpec::Constant,
    })
}

fn scenario2_matrices() -> Result<(Background, InfluenceMatrix, InfluenceMatrix), ModelError> {
    let k = InfluenceMatrix::from_source_rows(&[
        vec![0.18, 0.12, 0.00, 0.10],
        vec![0.00, 0.16, 0.12, 0.00],
        vec![0.10, 0.00, 0.17, 0.12],
        vec![0.12, 0.10, 0.00, 0.15],
    ])?;
    let l = InfluenceMatrix::from_source_rows(&[
        vec![0.30, 0.22, 0.20, 0.00],
        vec![0.20, 0.28, 0.00, 0.18],
        vec![0.22, 0.20, 0.26, 0.00],
        vec![0.00, 0.22, 0.20, 0.30],
    ])?;
    Ok((Background::constant(vec![0.05, 0.07, 0.04, 0.06])?, k, l))
}

pub fn scenario2() -> Result<ScenarioSpec, ModelError> {
    let (background, k, l) = scenario2_matrices()?;
    Ok(ScenarioSpec {
        name: "scenario2",
        params: AncestorParams::new(background, k, l, KernelSpec::new(4.0, 3.0)?, KernelSpec::new(0.8, 0.5)?, false)?,
        stop: StopRule::EventCount(SCENARIO_EVENTS),
        fit_background: BackgroundSpec::Constant,
    })
}

pub fn scenario3() -> Result<ScenarioSpec, ModelError> {
    let (background, k, l) = scenario2_matrices()?;
    Ok(ScenarioSpec {
        name: "scenario3",
        params: AncestorParams::new(background, k, l, KernelSpec::uniform(2.4)?, KernelSpec::uniform(2.4)?, false)?,
        stop: StopRule::EventCount(SCENARIO_EVENTS),
        fit_background: BackgroundSpec::Constant,
    })
}

/// Calendar year 2021 in the preset time zone.
pub fn groupchat_calendar() -> Result<Arc<CalendarGrid>, ModelError> {
    let tz = parse_tz(GROUPCHAT_TZ).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    let day = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid date");
    let grid = CalendarGrid::from_local(day(2021, 1, 1), day(2022, 1, 1), tz)
        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    Ok(Arc::new(grid))
}

/// A nine-participant group chat: diurnal activity peaking in the evening,
/// busier weekends, a summer lull, strong self-excitation and sparse
/// cross-excitation.
pub fn groupchat() -> Result<ScenarioSpec, ModelError> {
    let calendar = groupchat_calendar()?;
    let alpha = [0.30, 0.22, 0.35, 0.18, 0.25, 0.33, 0.32, 0.20, 0.27].map(|a| a / 24.0).to_vec();
    let theta_hour = (0..24)
        .map(|h| {
            let h = h as f64;
            0.15 + 1.6 * (-((h - 20.0) / 4.0).powi(2)).exp() + 0.8 * (-((h - 12.0) / 3.0).powi(2)).exp()
        })
        .collect();
    let theta_wday = vec![1.0, 1.0, 1.0, 1.0, 1.1, 1.3, 1.2];
    let theta_month = vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.9, 0.8, 0.8, 0.9, 1.0, 1.1, 1.2];
    let background = Background::Seasonal(SeasonalBackground::new(
        alpha,
        theta_hour,
        theta_wday,
        theta_month,
        calendar.clone(),
    )?);
    let k = InfluenceMatrix::from_source_rows(&[
        vec![0.31, 0.07, 0.22, 0.08, 0.03, 0.11, 0.02, 0.02, 0.13],
        vec![0.24, 0.28, 0.12, 0.03, 0.08, 0.03, 0.02, 0.06, 0.08],
        vec![0.08, 0.07, 0.36, 0.25, 0.18, 0.04, 0.27, 0.16, 0.18],
        vec![0.23, 0.02, 0.21, 0.30, 0.24, 0.02, 0.16, 0.02, 0.23],
        vec![0.02, 0.02, 0.17, 0.09, 0.33, 0.03, 0.05, 0.02, 0.03],
        vec![0.24, 0.04, 0.03, 0.19, 0.02, 0.29, 0.03, 0.16, 0.04],
        vec![0.02, 0.03, 0.05, 0.23, 0.10, 0.03, 0.37, 0.21, 0.03],
        vec![0.15, 0.03, 0.20, 0.06, 0.02, 0.03, 0.04, 0.34, 0.10],
        vec![0.03, 0.02, 0.09, 0.11, 0.21, 0.02, 0.07, 0.03, 0.32],
    ])?;
    let l = InfluenceMatrix::from_source_rows(&[
        vec![0.18, 0.04, 0.03, 0.04, 0.03, 0.07, 0.02, 0.07, 0.01],
        vec![0.09, 0.16, 0.04, 0.01, 0.01, 0.02, 0.03, 0.07, 0.05],
        vec![0.05, 0.02, 0.20, 0.10, 0.06, 0.01, 0.11, 0.02, 0.02],
        vec![0.07, 0.01, 0.03, 0.17, 0.02, 0.05, 0.02, 0.02, 0.06],
        vec![0.02, 0.01, 0.01, 0.03, 0.21, 0.06, 0.05, 0.03, 0.02],
        vec![0.07, 0.08, 0.02, 0.05, 0.10, 0.19, 0.02, 0.02, 0.01],
        vec![0.04, 0.04, 0.03, 0.03, 0.08, 0.01, 0.22, 0.07, 0.01],
        vec![0.09, 0.09, 0.04, 0.01, 0.09, 0.05, 0.07, 0.16, 0.02],
        vec![0.06, 0.01, 0.08, 0.02, 0.01, 0.02, 0.01, 0.02, 0.18],
    ])?;
    Ok(ScenarioSpec {
        name: "groupchat",
        params: AncestorParams::new(background, k, l, KernelSpec::new(6.0, 3.0)?, KernelSpec::new(4.0, 2.0)?, false)?,
        stop: StopRule::Horizon(calendar.horizon()),
        fit_background: BackgroundSpec::Seasonal { calendar },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{spectral_radius, stability_report};

    #[test]
    fn presets_are_stable_and_named() {
        for p in Preset::ALL {
            let spec = p.spec().unwrap();
            assert_eq!(spec.name, p.as_str());
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
            assert!(spectral_radius(spec.params.l.column_convention()) < 1.0, "{p}");
        }
        assert!("scenario4".parse::<Preset>().is_err());
    }

    #[test]
    fn scenario1_stationary_rate() {
        let s = scenario1().unwrap();
        let report = stability_report(&s.params);
        assert!((report.spectral_radius_l - 0.4).abs() < 1e-12);
        for r in report.stationary_total_rate.unwrap() {
            assert!((r - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario2_reads_rows_as_sources() {
        let s = scenario2().unwrap();
        assert_eq!(s.params.k.get(0, 1), 0.12);
        assert_eq!(s.params.k.get(1, 0), 0.0);
        assert_eq!(s.params.l.get(3, 1), 0.22);
        assert_eq!(s.params.g.rate(0, 0), 4.0);
        assert_eq!(s.params.h.rate(0, 1), 0.5);
    }

    #[test]
    fn groupchat_covers_2021() {
        let s = groupchat().unwrap();
        assert_eq!(s.stop, StopRule::Horizon(8760.0));
        assert_eq!(s.params.k.get(2, 6), 0.27);
        assert_eq!(s.params.l.get(2, 6), 0.11);
        assert_eq!(s.params.num_dims(), 9);
    }
}
