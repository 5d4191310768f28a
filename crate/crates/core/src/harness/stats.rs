use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trailing moving average. Element `k` is the mean of inputs
/// `max(0, k + 1 - w)..=k`, so the head uses a shorter window.
pub fn moving_average(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::Contract("smoothing window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    for k in 0..series.len() {
        let lo = (k + 1).saturating_sub(w);
        let window = &series[lo..=k];
        out.push(window.iter().sum::<f64>() / window.len() as f64);
    }
    Ok(out)
}

/// Cross-seed statistics for one episode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Aligns series by index and aggregates each position over the series long
/// enough to have it.
pub fn aggregate_seeds<S: AsRef<[f64]>>(series: &[S]) -> Result<Vec<EpisodeStats>> {
    if series.is_empty() {
        return Err(Error::Contract("cannot aggregate zero runs".into()));
    }
    let len = series.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for episode in 0..len {
        let values: Vec<f64> = series.iter().filter_map(|s| s.as_ref().get(episode).copied()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        out.push(EpisodeStats {
            episode,
            mean,
            std: var.sqrt(),
            count: values.len(),
        });
    }
    Ok(out)
}

/// Mean of `series[lo..hi]`, clamped to the series length. `None` when the
/// clamped range is empty.
pub fn window_mean(series: &[f64], lo: usize, hi: usize) -> Option<f64> {
    let hi = hi.min(series.len());
    if lo >= hi {
        return None;
    }
    Some(series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_window_head_is_partial() {
        let out = moving_average(&[2.0, 4.0, 6.0, 8.0], 2).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 5.0, 7.0]);
        assert!(moving_average(&[1.0], 0).is_err());
        assert!(moving_average(&[], 3).unwrap().is_empty());
    }

    #[test]
    fn ragged_series_use_true_counts() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![3.0];
        let agg = aggregate_seeds(&[a, b]).unwrap();
        assert_eq!(agg.len(), 3);
        assert_eq!((agg[0].mean, agg[0].std, agg[0].count), (2.0, 1.0, 2));
        assert_eq!((agg[2].mean, agg[2].std, agg[2].count), (3.0, 0.0, 1));
        assert!(aggregate_seeds::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn window_mean_clamps() {
        let s = [1.0, 2.0, 3.0];
        assert_eq!(window_mean(&s, 1, 10), Some(2.5));
        assert_eq!(window_mean(&s, 3, 10), None);
    }
}
