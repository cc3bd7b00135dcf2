//! Router-side load-factor computation.
//!
//! Every outgoing link evaluates, once per measurement window, how loaded
//! it is on a 0–100 % scale. The load factor combines the traffic offered
//! to the link during the window with a smoothed ("persistent") queue
//! backlog, relative to what the link could have served in that window:
//!
//! ```text
//! load = 100 · (λ + κ_q · q̂) / (γ · C · t_ρ)      clamped to [0, 100]
//! ```
//!
//! where `λ` counts packets offered to the queue during the window
//! (accepted or dropped), `q̂` is an exponentially weighted moving average
//! of the instantaneous queue length, `C` the link capacity in packets per
//! second, `t_ρ` the window length and `γ < 1` a target-utilisation
//! headroom. The resulting percentage doubles as the marking probability
//! for eligible packets, so it is the quantity the estimation pipeline
//! ultimately tries to recover.

/// Parameters of the load-factor computation, with conventional defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadFactorParams {
    /// Weight `κ_q` of the persistent queue term: how many packets of
    /// backlog count as much as one freshly arrived packet.
    pub queue_weight: f64,
    /// Target utilisation `γ`: fraction of capacity regarded as "full".
    pub target_utilization: f64,
    /// Measurement window length `t_ρ` in seconds.
    pub window: f64,
    /// Smoothing weight of the persistent-queue moving average.
    pub ewma_weight: f64,
    /// Interval in seconds between queue-length samples feeding the
    /// moving average.
    pub sample_interval: f64,
    /// Gain of the affine calibration applied to the raw percentage
    /// before clamping (identity by default).
    pub scale: f64,
    /// Offset of the affine calibration.
    pub offset: f64,
}

impl Default for LoadFactorParams {
    fn default() -> Self {
        LoadFactorParams {
            queue_weight: 0.5,
            target_utilization: 0.98,
            window: 0.2,
            ewma_weight: 0.125,
            sample_interval: 0.01,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

/// The load-factor formula for one closed window.
///
/// `offered_packets` is `λ`, `persistent_queue` is `q̂` in packets and
/// `capacity_pps` is `C` in packets per second; `capacity_pps · window`
/// must be positive. Returns a percentage in `[0, 100]`.
pub fn compute_load_factor(
    offered_packets: f64,
    persistent_queue: f64,
    capacity_pps: f64,
    params: &LoadFactorParams,
) -> f64 {
    let serviceable = params.target_utilization * capacity_pps * params.window;
    assert!(
        serviceable > 0.0,
        "link must have positive capacity and window"
    );
    let raw = 100.0 * (offered_packets + params.queue_weight * persistent_queue) / serviceable;
    (params.scale * raw + params.offset).clamp(0.0, 100.0)
}

/// Exponentially weighted moving average of a queue length.
///
/// Starts at zero (an idle link) and moves a fraction `weight` of the way
/// towards each new sample, so transient bursts decay while standing
/// backlog persists in the estimate.
#[derive(Debug, Clone, Copy)]
pub struct PersistentQueue {
    estimate: f64,
    weight: f64,
}

impl PersistentQueue {
    /// New estimator with the given smoothing weight in `(0, 1]`.
    pub fn new(weight: f64) -> Self {
        PersistentQueue {
            estimate: 0.0,
            weight,
        }
    }

    /// Fold in one instantaneous queue-length sample.
    pub fn sample(&mut self, queue_len: f64) {
        self.estimate += self.weight * (queue_len - self.estimate);
    }

    /// Current smoothed backlog in packets.
    pub fn value(&self) -> f64 {
        self.estimate
    }
}

/// Per-link bookkeeping tying the pieces together across windows.
///
/// The owner reports every packet offered to the link via
/// [`LinkLoadTracker::record_offered`], feeds periodic queue-length
/// samples to [`LinkLoadTracker::sample_queue`], and closes each
/// measurement window with [`LinkLoadTracker::close_window`]. The load of
/// the most recently *closed* window is what the link uses as its marking
/// probability — the window still in progress is unknowable until it ends.
#[derive(Debug, Clone)]
pub struct LinkLoadTracker {
    params: LoadFactorParams,
    capacity_pps: f64,
    offered: u64,
    queue: PersistentQueue,
    last_load: f64,
}

impl LinkLoadTracker {
    /// Tracker for a link serving `capacity_pps` packets per second.
    pub fn new(capacity_pps: f64, params: LoadFactorParams) -> Self {
        LinkLoadTracker {
            params,
            capacity_pps,
            offered: 0,
            queue: PersistentQueue::new(params.ewma_weight),
            last_load: 0.0,
        }
    }

    /// Account one packet offered to the link queue (whether it was
    /// accepted or dropped).
    pub fn record_offered(&mut self) {
        self.offered += 1;
    }

    /// Feed one instantaneous queue-length sample into the persistent
    /// queue average.
    pub fn sample_queue(&mut self, queue_len: usize) {
        self.queue.sample(queue_len as f64);
    }

    /// Close the current measurement window: compute its load factor,
    /// make it the active marking probability, and reset the arrival
    /// counter for the next window.
    pub fn close_window(&mut self) -> f64 {
        let load = compute_load_factor(
            self.offered as f64,
            self.queue.value(),
            self.capacity_pps,
            &self.params,
        );
        self.offered = 0;
        self.last_load = load;
        load
    }

    /// Load factor of the most recently closed window (zero before any
    /// window has closed): the link's current marking probability.
    pub fn current_load(&self) -> f64 {
        self.last_load
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_for(capacity_window_packets: f64, capacity_pps: f64) -> LoadFactorParams {
        // Helper: pick a window so that C · t_ρ equals the requested
        // packet budget.
        LoadFactorParams {
            window: capacity_window_packets / capacity_pps,
            ..LoadFactorParams::default()
        }
    }

    #[test]
    fn worked_example() {
        // 500 packets offered, smoothed backlog of 100, a window budget
        // of 1000 packets: 100 · (500 + 0.5 · 100) / (0.98 · 1000).
        let params = params_for(1000.0, 5000.0);
        let load = compute_load_factor(500.0, 100.0, 5000.0, &params);
        assert!((load - 56.122_448_979_591_83).abs() < 1e-9);
        assert!((load - 56.12).abs() < 0.01);
    }

    #[test]
    fn clamps_to_percentage_range() {
        let params = params_for(1000.0, 5000.0);
        assert_eq!(compute_load_factor(0.0, 0.0, 5000.0, &params), 0.0);
        assert_eq!(compute_load_factor(5000.0, 0.0, 5000.0, &params), 100.0);
        assert_eq!(compute_load_factor(0.0, 1_000_000.0, 5000.0, &params), 100.0);
    }

    #[test]
    fn target_utilization_reaches_full_load() {
        // Offering exactly γ · C · t_ρ packets with no backlog is 100 %.
        let params = params_for(1000.0, 5000.0);
        let load = compute_load_factor(980.0, 0.0, 5000.0, &params);
        assert!((load - 100.0).abs() < 1e-9);
        // One packet less stays just under.
        assert!(compute_load_factor(979.0, 0.0, 5000.0, &params) < 100.0);
    }

    #[test]
    fn affine_calibration_applies_before_clamp() {
        let base = params_for(1000.0, 5000.0);
        let halved = LoadFactorParams {
            scale: 0.5,
            ..base
        };
        let load = compute_load_factor(500.0, 100.0, 5000.0, &halved);
        assert!((load - 56.122_448_979_591_83 / 2.0).abs() < 1e-9);

        let hot = LoadFactorParams {
            scale: 2.0,
            offset: -10.0,
            ..base
        };
        // 2 · 56.12… − 10 ≈ 102.2 clamps to 100.
        assert_eq!(compute_load_factor(500.0, 100.0, 5000.0, &hot), 100.0);
    }

    #[test]
    fn persistent_queue_smooths_towards_samples() {
        let mut q = PersistentQueue::new(0.125);
        assert_eq!(q.value(), 0.0);
        q.sample(800.0);
        assert!((q.value() - 100.0).abs() < 1e-12);

        // Constant input converges geometrically: after k samples the
        // estimate is q · (1 − (1 − w)^k).
        let mut q = PersistentQueue::new(0.125);
        for _ in 0..20 {
            q.sample(64.0);
        }
        let expected = 64.0 * (1.0 - 0.875f64.powi(20));
        assert!((q.value() - expected).abs() < 1e-9);
        assert!(q.value() < 64.0);

        // A single spike decays back towards the steady level.
        q.sample(10_000.0);
        let spiked = q.value();
        for _ in 0..40 {
            q.sample(64.0);
        }
        assert!(q.value() - 64.0 < (spiked - 64.0) * 0.02);
        assert!(q.value() > 64.0);
    }

    #[test]
    fn tracker_resets_arrivals_but_keeps_queue_state() {
        let params = params_for(1000.0, 5000.0);
        let mut t = LinkLoadTracker::new(5000.0, params);
        assert_eq!(t.current_load(), 0.0);

        for _ in 0..500 {
            t.record_offered();
        }
        // Eight samples of a steady 100-packet backlog.
        for _ in 0..8 {
            t.sample_queue(100);
        }
        let q_hat = 100.0 * (1.0 - 0.875f64.powi(8));
        let expected = 100.0 * (500.0 + 0.5 * q_hat) / 980.0;
        let first = t.close_window();
        assert!((first - expected).abs() < 1e-9);
        assert_eq!(t.current_load(), first);

        // New window starts from zero arrivals, but the smoothed queue
        // carries over.
        let second = t.close_window();
        let expected2 = 100.0 * (0.5 * q_hat) / 980.0;
        assert!((second - expected2).abs() < 1e-9);
    }

    #[test]
    fn marking_probability_lags_one_window() {
        let params = params_for(1000.0, 5000.0);
        let mut t = LinkLoadTracker::new(5000.0, params);
        for _ in 0..980 {
            t.record_offered();
        }
        // Mid-window the link still advertises the previous (here:
        // initial) load.
        assert_eq!(t.current_load(), 0.0);
        t.close_window();
        assert!((t.current_load() - 100.0).abs() < 1e-9);
    }

    proptest::proptest! {
        /// The load factor is a percentage for any nonnegative inputs and
        /// cannot decrease when more traffic is offered.
        #[test]
        fn load_factor_is_clamped_and_monotone(
            offered in 0.0f64..1e7,
            extra in 0.0f64..1e6,
            queue in 0.0f64..1e5,
            capacity in 1.0f64..1e6,
        ) {
            let params = LoadFactorParams::default();
            let low = compute_load_factor(offered, queue, capacity, &params);
            let high = compute_load_factor(offered + extra, queue, capacity, &params);
            proptest::prop_assert!((0.0..=100.0).contains(&low));
            proptest::prop_assert!((0.0..=100.0).contains(&high));
            proptest::prop_assert!(high >= low);
        }
    }
}
