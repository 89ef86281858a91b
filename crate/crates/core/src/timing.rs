use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Per-stage latency (milliseconds, monotonic clock) and call counts.
/// Provider wait time is charged to the stage that issued the call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub t_nli_ms: f64,
    pub t_atom_ms: f64,
    pub t_embed_ms: f64,
    pub t_cluster_ms: f64,
    pub t_total_ms: f64,
    pub decomposer_calls: usize,
    pub nli_pairs: usize,
    pub embed_calls: usize,
}

impl TimingBreakdown {
    pub fn add(&mut self, other: &TimingBreakdown) {
        self.t_nli_ms += other.t_nli_ms;
        self.t_atom_ms += other.t_atom_ms;
        self.t_embed_ms += other.t_embed_ms;
        self.t_cluster_ms += other.t_cluster_ms;
        self.t_total_ms += other.t_total_ms;
        self.decomposer_calls += other.decomposer_calls;
        self.nli_pairs += other.nli_pairs;
        self.embed_calls += other.embed_calls;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Nli,
    Atom,
    Embed,
    Cluster,
}

/// Accumulates stage durations. When disabled only counts are recorded,
/// which keeps reports byte-reproducible.
#[derive(Debug, Clone)]
pub struct StageClock {
    enabled: bool,
    started: Instant,
    breakdown: TimingBreakdown,
}

impl StageClock {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            started: Instant::now(),
            breakdown: TimingBreakdown::default(),
        }
    }

    pub fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        if self.enabled {
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            let slot = match stage {
                Stage::Nli => &mut self.breakdown.t_nli_ms,
                Stage::Atom => &mut self.breakdown.t_atom_ms,
                Stage::Embed => &mut self.breakdown.t_embed_ms,
                Stage::Cluster => &mut self.breakdown.t_cluster_ms,
            };
            *slot += ms;
        }
        out
    }

    pub fn counts(&mut self) -> &mut TimingBreakdown {
        &mut self.breakdown
    }

    pub fn finish(mut self) -> TimingBreakdown {
        if self.enabled {
            let b = &mut self.breakdown;
            let stages = b.t_nli_ms + b.t_atom_ms + b.t_embed_ms + b.t_cluster_ms;
            b.t_total_ms = (self.started.elapsed().as_secs_f64() * 1e3).max(stages);
        }
        self.breakdown
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_bounds_every_stage() {
        let mut clock = StageClock::new(true);
        clock.time(Stage::Atom, || std::thread::sleep(std::time::Duration::from_millis(2)));
        clock.time(Stage::Nli, || ());
        let t = clock.finish();
        assert!(t.t_atom_ms >= 2.0);
        assert!(t.t_total_ms >= t.t_atom_ms && t.t_total_ms >= t.t_nli_ms);
    }

    #[test]
    fn disabled_clock_records_zero_durations() {
        let mut clock = StageClock::new(false);
        clock.time(Stage::Atom, || std::thread::sleep(std::time::Duration::from_millis(1)));
        clock.counts().decomposer_calls += 1;
        let t = clock.finish();
        assert_eq!(t.t_atom_ms, 0.0);
        assert_eq!(t.t_total_ms, 0.0);
        assert_eq!(t.decomposer_calls, 1);
    }
}
