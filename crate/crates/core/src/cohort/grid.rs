//! Non-uniform timestep grid around the index date.
//!
//! 30-day steps from three years before the index date, 15-day steps on
//! `[-180, +180]`, then 30-day steps again up to five years after. The left
//! arm starts at day −1095 and reaches −195, which sits one 15-day step
//! before the dense region; the right arm runs 210..=1800. That gives 110
//! steps with every gap either 15 or 30 days. Observations on
//! `(1800, 1825]` are assigned to the last step.

use serde::{Deserialize, Serialize};

pub const WINDOW_START_DAY: i32 = -1095;
pub const WINDOW_END_DAY: i32 = 1825;
pub const DENSE_HALF_WIDTH: i32 = 180;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    days: Vec<i32>,
    end_day: i32,
}

impl TimeGrid {
    pub fn standard() -> Self {
        let mut days: Vec<i32> = (0..=30).map(|k| WINDOW_START_DAY + 30 * k).collect();
        days.extend((-DENSE_HALF_WIDTH..=DENSE_HALF_WIDTH).step_by(15));
        days.extend((DENSE_HALF_WIDTH + 30..=1800).step_by(30));
        Self {
            days,
            end_day: WINDOW_END_DAY,
        }
    }

    /// Grid with explicit step days; used for small fixtures.
    pub fn from_days(days: Vec<i32>, end_day: i32) -> Self {
        assert!(!days.is_empty(), "grid needs at least one step");
        assert!(days.windows(2).all(|w| w[0] < w[1]), "grid days must increase");
        assert!(end_day >= *days.last().unwrap());
        Self { days, end_day }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[i32] {
        &self.days
    }

    pub fn day(&self, step: usize) -> i32 {
        self.days[step]
    }

    pub fn start_day(&self) -> i32 {
        self.days[0]
    }

    pub fn end_day(&self) -> i32 {
        self.end_day
    }

    /// Days elapsed since the previous step; zero at the first step.
    pub fn gap_days(&self, step: usize) -> i32 {
        if step == 0 {
            0
        } else {
            self.days[step] - self.days[step - 1]
        }
    }

    /// Step whose interval `(day[t-1], day[t]]` contains `day`; `None`
    /// outside the observation window.
    pub fn bucket(&self, day: i32) -> Option<usize> {
        if day < self.start_day() || day > self.end_day {
            return None;
        }
        let t = self.days.partition_point(|&d| d < day);
        Some(t.min(self.days.len() - 1))
    }

    /// Number of steps strictly before `followup_end_day`.
    pub fn valid_steps(&self, followup_end_day: i32) -> usize {
        self.days.partition_point(|&d| d < followup_end_day)
    }

    /// Index of the step at exactly `day`.
    pub fn step_at(&self, day: i32) -> Option<usize> {
        self.days.binary_search(&day).ok()
    }

    /// Index of the step at or just before `day`.
    pub fn step_at_or_before(&self, day: i32) -> Option<usize> {
        let t = self.days.partition_point(|&d| d <= day);
        t.checked_sub(1)
    }
}
