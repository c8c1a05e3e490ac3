use super::TrainRecord;

/// Thresholds for [`detect_kick_in`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickInConfig {
    /// Relative drop of `R` below its running maximum.
    pub drop_fraction: f64,
    /// `L` must be below this value at the detected epoch.
    pub loss_threshold: f64,
}

impl Default for KickInConfig {
    fn default() -> Self {
        Self {
            drop_fraction: 0.2,
            loss_threshold: 0.5,
        }
    }
}

/// First epoch at which the regularizer starts to fall quickly once the
/// task loss is already low: `R[e] <= (1 - drop) * max(R[..e])` and
/// `L[e] < loss_threshold`. Returns the record's epoch number; `None` if
/// no epoch qualifies or fewer than three records are given.
pub fn detect_kick_in(records: &[TrainRecord], cfg: &KickInConfig) -> Option<usize> {
    if records.len() < 3 {
        return None;
    }
    let mut running_max = records[0].r;
    for rec in &records[1..] {
        if running_max > 0.0 && rec.r <= (1.0 - cfg.drop_fraction) * running_max && rec.loss < cfg.loss_threshold {
            return Some(rec.epoch);
        }
        running_max = running_max.max(rec.r);
    }
    None
}
