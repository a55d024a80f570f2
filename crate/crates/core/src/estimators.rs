//! Online estimators refreshed at episode boundaries: UCB payoff
//! statistics per line, Holt linear-trend arrival forecasts per type,
//! empirical service-rate pooling per line, and the MASE forecast
//! diagnostic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    /// The naive-forecast denominator of MASE is zero (constant actuals).
    #[error("actual series is constant; MASE denominator is zero")]
    DegenerateSeries,
    #[error("series lengths differ or are shorter than 2")]
    SeriesShape,
}

/// Per-line UCB payoff statistics.
///
/// The optimistic estimate is `θ̄ + sqrt(ln k / T)` once a line has been
/// pulled and `+∞` while it has not, so unexplored lines dominate any
/// finite estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    pull_count: Vec<u64>,
    success_count: Vec<u64>,
    ucb_value: Vec<f64>,
}

impl UcbState {
    pub fn new(num_lines: usize) -> Self {
        Self {
            pull_count: vec![0; num_lines],
            success_count: vec![0; num_lines],
            ucb_value: vec![f64::INFINITY; num_lines],
        }
    }

    pub fn num_lines(&self) -> usize {
        self.pull_count.len()
    }

    pub fn pull_count(&self, line: usize) -> u64 {
        self.pull_count[line]
    }

    /// Empirical mean payoff; 0 while the line is unexplored.
    pub fn empirical_mean(&self, line: usize) -> f64 {
        if self.pull_count[line] == 0 {
            0.0
        } else {
            self.success_count[line] as f64 / self.pull_count[line] as f64
        }
    }

    pub fn ucb_value(&self, line: usize) -> f64 {
        self.ucb_value[line]
    }

    pub fn ucb_values(&self) -> &[f64] {
        &self.ucb_value
    }

    /// Folds one episode's Bernoulli samples into the statistics and
    /// recomputes every line's optimistic estimate with `ln(episode)`.
    /// Lines without new samples still pick up the episode-index change.
    pub fn update(&mut self, episode: u64, samples: &[Vec<bool>]) {
        assert_eq!(samples.len(), self.pull_count.len());
        assert!(episode >= 1);
        let log_k = (episode as f64).ln();
        for (line, outcomes) in samples.iter().enumerate() {
            self.pull_count[line] += outcomes.len() as u64;
            self.success_count[line] += outcomes.iter().filter(|y| **y).count() as u64;
            self.ucb_value[line] = if self.pull_count[line] == 0 {
                f64::INFINITY
            } else {
                self.empirical_mean(line) + (log_k / self.pull_count[line] as f64).sqrt()
            };
        }
    }
}

/// Holt linear-trend state for one customer type.
///
/// Zero initialization realizes a zero first forecast; the smoothing term
/// uses the one-step-ahead forecast made at the previous update, i.e.
/// `ℓ + b` of the prior state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoltState {
    pub level: f64,
    pub trend: f64,
    /// Forecast for the upcoming period, produced by the latest update.
    pub last_forecast: f64,
    pub episode: u64,
}

impl Default for HoltState {
    fn default() -> Self {
        Self::new()
    }
}

impl HoltState {
    pub fn new() -> Self {
        Self {
            level: 0.0,
            trend: 0.0,
            last_forecast: 0.0,
            episode: 0,
        }
    }

    /// Folds in the observed count of the period that just ended and
    /// returns the forecast for the next one. The forecast may be
    /// negative; clamping happens only in the rate conversion.
    pub fn update(&mut self, observed: f64, alpha: f64, beta: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&alpha) && (0.0..=1.0).contains(&beta));
        let prev_level = self.level;
        let prev_trend = self.trend;
        self.level = alpha * observed + (1.0 - alpha) * (prev_level + prev_trend);
        self.trend = beta * (self.level - prev_level) + (1.0 - beta) * prev_trend;
        self.last_forecast = self.level + self.trend;
        self.episode += 1;
        self.last_forecast
    }

    pub fn forecast(&self) -> f64 {
        self.last_forecast
    }
}

/// Converts a forecasted per-episode count into a nonnegative rate.
pub fn forecast_to_rate(forecast: f64, episode_length: f64) -> f64 {
    debug_assert!(episode_length > 0.0);
    (forecast / episode_length).max(0.0)
}

/// Per-line running mean of realized service durations, inverted into a
/// rate. Lines with no completions report `mu_init`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRateState {
    completion_count: Vec<u64>,
    total_duration: Vec<f64>,
    mu_init: f64,
}

impl ServiceRateState {
    pub fn new(num_lines: usize, mu_init: f64) -> Self {
        assert!(mu_init > 0.0);
        Self {
            completion_count: vec![0; num_lines],
            total_duration: vec![0.0; num_lines],
            mu_init,
        }
    }

    pub fn completion_count(&self, line: usize) -> u64 {
        self.completion_count[line]
    }

    pub fn update(&mut self, completed: &[Vec<f64>]) {
        assert_eq!(completed.len(), self.completion_count.len());
        for (line, durations) in completed.iter().enumerate() {
            self.record(line, durations);
        }
    }

    pub fn record(&mut self, line: usize, durations: &[f64]) {
        debug_assert!(durations.iter().all(|d| *d > 0.0));
        self.completion_count[line] += durations.len() as u64;
        self.total_duration[line] += durations.iter().sum::<f64>();
    }

    pub fn estimate(&self, line: usize) -> f64 {
        if self.completion_count[line] == 0 {
            self.mu_init
        } else {
            self.completion_count[line] as f64 / self.total_duration[line]
        }
    }

    pub fn estimates(&self) -> Vec<f64> {
        (0..self.completion_count.len())
            .map(|line| self.estimate(line))
            .collect()
    }
}

/// Mean absolute scaled error of a forecast series against actuals:
/// forecast MAE over the mean absolute one-step naive difference.
pub fn mase(forecasts: &[f64], actuals: &[f64]) -> Result<f64, EstimatorError> {
    if forecasts.len() != actuals.len() || actuals.len() < 2 {
        return Err(EstimatorError::SeriesShape);
    }
    let n = actuals.len();
    let mae = forecasts
        .iter()
        .zip(actuals)
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / n as f64;
    let naive = actuals.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    if naive == 0.0 {
        return Err(EstimatorError::DegenerateSeries);
    }
    Ok(mae / naive)
}
