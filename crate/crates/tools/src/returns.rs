//! Negative weekly log-returns from dated price panels.

use crate::io::DatedPanel;
use chrono::{Datelike, NaiveDate};
use expectile_core::{Error, Result};

/// Resamples to the last observation of each ISO-8601 week and returns
/// `-log(P_t / P_{t-1})` between consecutive week ends. Weeks without
/// observations are skipped, so a return may span a gap.
pub fn to_negative_weekly_log_returns(prices: &DatedPanel) -> Result<DatedPanel> {
    let dates = &prices.dates;
    for col in &prices.columns {
        if col.len() != dates.len() {
            return Err(Error::DimensionMismatch { expected: dates.len(), got: col.len() });
        }
    }
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSample(format!("dates must be strictly increasing: {} then {}", w[0], w[1])));
    }
    for (label, col) in prices.labels.iter().zip(&prices.columns) {
        if let Some(i) = col.iter().position(|&p| p <= 0.0 || p.is_nan()) {
            return Err(Error::Domain(format!("non-positive price {} at row {} of {label}", col[i], i + 1)));
        }
    }
    let week = |d: &NaiveDate| {
        let w = d.iso_week();
        (w.year(), w.week())
    };
    let ends: Vec<usize> = (0..dates.len()).filter(|&i| i + 1 == dates.len() || week(&dates[i]) != week(&dates[i + 1])).collect();
    if ends.len() < 2 {
        return Err(Error::InvalidSample("need at least two ISO weeks of prices".into()));
    }
    Ok(DatedPanel {
        dates: ends[1..].iter().map(|&i| dates[i]).collect(),
        labels: prices.labels.clone(),
        columns: prices.columns.iter().map(|col| ends.windows(2).map(|w| -(col[w[1]] / col[w[0]]).ln()).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dated(start: NaiveDate, days: &[i64], columns: Vec<Vec<f64>>) -> DatedPanel {
        DatedPanel {
            dates: days.iter().map(|&d| start + chrono::Duration::days(d)).collect(),
            labels: (0..columns.len()).map(|j| format!("c{j}")).collect(),
            columns,
        }
    }

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let days: Vec<i64> = (0..40).collect();
        let r = to_negative_weekly_log_returns(&dated(monday(), &days, vec![vec![3.0; 40]])).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.columns[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_weekly_prices() {
        let r = to_negative_weekly_log_returns(&dated(monday(), &[0, 7], vec![vec![1.0, std::f64::consts::E]])).unwrap();
        assert_eq!(r.columns[0], [-1.0]);
    }

    #[test]
    fn ten_day_calendar_by_hand() {
        // Mon 1 Jan 2024 .. Wed 10 Jan: week ends fall on Sun 7 Jan and Wed 10 Jan.
        let days: Vec<i64> = (0..10).collect();
        let prices: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = to_negative_weekly_log_returns(&dated(monday(), &days, vec![prices])).unwrap();
        assert_eq!(r.columns[0], [-(10.0f64 / 7.0).ln()]);
        assert_eq!(r.dates, [monday() + chrono::Duration::days(9)]);
    }

    #[test]
    fn weekly_resampling_skips_empty_weeks() {
        let mut days = Vec::new();
        for w in [0i64, 1, 3, 4, 5, 6] {
            days.extend((0..5).map(|d| 7 * w + d));
        }
        let prices: Vec<f64> = days.iter().map(|&d| 1.0 + d as f64).collect();
        let r = to_negative_weekly_log_returns(&dated(monday(), &days, vec![prices])).unwrap();
        assert_eq!(r.len(), 5);
        let fri = |w: i64| 1.0 + (7 * w + 4) as f64;
        assert_eq!(r.columns[0][0], -(fri(1) / fri(0)).ln());
        assert_eq!(r.columns[0][1], -(fri(3) / fri(1)).ln());
        assert_eq!(r.dates[1], monday() + chrono::Duration::days(25));
    }

    #[test]
    fn iso_weeks_straddle_new_year() {
        // Sun 29 Dec 2024 ends ISO week 52; Mon 30 Dec opens week 1 of 2025.
        let start = NaiveDate::from_ymd_opt(2024, 12, 27).unwrap();
        let r = to_negative_weekly_log_returns(&dated(start, &[0, 2, 3, 6], vec![vec![1.0, 2.0, 3.0, 4.0]])).unwrap();
        assert_eq!(r.columns[0], [-(4.0f64 / 2.0).ln()]);
    }

    #[test]
    fn scale_invariance_and_domain_errors() {
        let days: Vec<i64> = (0..60).collect();
        let prices: Vec<f64> = (0..60).map(|i| 2.0 + (i as f64 * 0.7).sin()).collect();
        let a = to_negative_weekly_log_returns(&dated(monday(), &days, vec![prices.clone()])).unwrap();
        let b = to_negative_weekly_log_returns(&dated(monday(), &days, vec![prices.iter().map(|p| p * 8.0).collect()])).unwrap();
        for (x, y) in a.columns[0].iter().zip(&b.columns[0]) {
            assert!((x - y).abs() < 1e-13);
        }
        let mut bad = prices.clone();
        bad[3] = 0.0;
        assert!(matches!(to_negative_weekly_log_returns(&dated(monday(), &days, vec![bad])), Err(Error::Domain(_))));
        let mut back = days.clone();
        back[5] = 4;
        assert!(to_negative_weekly_log_returns(&dated(monday(), &back, vec![prices])).is_err());
    }
}
