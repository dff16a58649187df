//! CIL metrics: Avg, Last, performance drop and harmonic accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Printed wherever simulator results are emitted.
pub const DISCLOSURE: &str = "NOTE: accuracies come from a simulated generator and a hashing text \
encoder, not from a multimodal LLM on real images. Headline dataset accuracies (for example \
ImageNet-R Last 84.29%) are NOT reproduced by this harness.";

/// Harmonic mean of base-class and all-class accuracy; 0 when either is 0.
///
/// Written as `2 / (1/a + 1/b)`, which keeps `hacc(x, x) == x` exact.
pub fn compute_hacc(base: f64, all: f64) -> f64 {
    if base <= 0.0 || all <= 0.0 {
        0.0
    } else {
        2.0 / (1.0 / base + 1.0 / all)
    }
}

/// First-session minus last-session accuracy, signed.
pub fn compute_pd(first: f64, last: f64) -> f64 {
    first - last
}

pub fn average(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean with population standard deviation and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub var: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let mean = average(values);
        let var = average(&values.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>());
        Self { mean, std: var.sqrt(), var }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub generation_ms: f64,
    pub graph_vote_ms: f64,
    pub classify_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub correct: usize,
    pub total: usize,
}

/// Evaluation of all seen classes after one session. Accuracies in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub new_classes: usize,
    pub seen_classes: usize,
    pub per_class: Vec<ClassScore>,
    pub accuracy: f64,
    /// Accuracy on the base-session classes (A_0).
    pub base_accuracy: f64,
    /// Accuracy on all seen classes (A_n).
    pub all_accuracy: f64,
    pub shortfall_classes: usize,
    pub subgraph_bytes: u64,
    pub timing: Timing,
}

/// Per-order metrics, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMetrics {
    pub order_seed: u64,
    pub session_accuracy: Vec<f64>,
    pub avg: f64,
    pub last: f64,
    pub pd: f64,
    pub hacc: f64,
}

impl OrderMetrics {
    pub fn from_sessions(order_seed: u64, sessions: &[SessionResult]) -> Self {
        let session_accuracy: Vec<f64> = sessions.iter().map(|s| s.accuracy * 100.0).collect();
        let first = session_accuracy.first().copied().unwrap_or(0.0);
        let last = session_accuracy.last().copied().unwrap_or(0.0);
        let (base, all) = sessions
            .last()
            .map_or((0.0, 0.0), |s| (s.base_accuracy * 100.0, s.all_accuracy * 100.0));
        Self {
            order_seed,
            avg: average(&session_accuracy),
            last,
            pd: compute_pd(first, last),
            hacc: compute_hacc(base, all),
            session_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub order_seed: u64,
    pub class_order: Vec<String>,
    pub sessions: Vec<SessionResult>,
    pub metrics: OrderMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg: MeanStd,
    pub last: MeanStd,
    pub pd: MeanStd,
    pub hacc: MeanStd,
    pub per_session: Vec<MeanStd>,
}

impl Summary {
    pub fn of(orders: &[OrderMetrics]) -> Self {
        let col = |f: &dyn Fn(&OrderMetrics) -> f64| MeanStd::of(&orders.iter().map(f).collect::<Vec<_>>());
        let n_sessions = orders.iter().map(|o| o.session_accuracy.len()).min().unwrap_or(0);
        Self {
            avg: col(&|o| o.avg),
            last: col(&|o| o.last),
            pd: col(&|o| o.pd),
            hacc: col(&|o| o.hacc),
            per_session: (0..n_sessions).map(|s| col(&|o| o.session_accuracy[s])).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub split: String,
    pub classes: usize,
    pub samples_per_class: usize,
    pub r_target: usize,
    pub encoder: String,
    pub generator: crate::generator_sim::GeneratorConfig,
    pub orders: Vec<u64>,
    pub notes: Vec<String>,
    pub disclosure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub header: ReportHeader,
    pub orders: Vec<OrderResult>,
    pub summary: Summary,
}

impl MetricsReport {
    /// Human-readable table in the `mean±std` style, caveat included.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let h = &self.header;
        let _ = writeln!(s, "{}", h.disclosure);
        let _ = writeln!(
            s,
            "split: {} | classes: {} | samples/class: {} | r: {} | encoder: {} | mode: {:?}",
            h.split, h.classes, h.samples_per_class, h.r_target, h.encoder, h.generator.mode
        );
        for o in &self.orders {
            let m = &o.metrics;
            let sessions: Vec<String> = m.session_accuracy.iter().map(|a| format!("{a:.2}")).collect();
            let _ = writeln!(
                s,
                "order {:>6}: [{}] Avg {:.2} Last {:.2} PD {:.2} HAcc {:.2}",
                m.order_seed,
                sessions.join(", "),
                m.avg,
                m.last,
                m.pd,
                m.hacc
            );
        }
        let sm = &self.summary;
        let _ = writeln!(s, "mean±std: Avg {} Last {} PD {} HAcc {}", sm.avg, sm.last, sm.pd, sm.hacc);
        s
    }
}

/// Paired graph-augmented vs baseline comparison on identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub augmented: Summary,
    pub baseline: Summary,
    pub margin_avg: f64,
    pub margin_last: f64,
    pub augmented_ge_baseline: bool,
}

impl Comparison {
    pub fn new(augmented: &MetricsReport, baseline: &MetricsReport) -> Self {
        let margin_avg = augmented.summary.avg.mean - baseline.summary.avg.mean;
        let margin_last = augmented.summary.last.mean - baseline.summary.last.mean;
        Self {
            augmented: augmented.summary.clone(),
            baseline: baseline.summary.clone(),
            margin_avg,
            margin_last,
            augmented_ge_baseline: margin_avg >= 0.0 && margin_last >= 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hacc_examples() {
        assert_eq!(compute_hacc(0.8, 0.8), 0.8);
        assert_eq!(compute_hacc(1.0, 0.0), 0.0);
        assert!((compute_hacc(0.9, 0.6) - 0.72).abs() < 1e-12);
        assert_eq!(compute_hacc(0.0, 0.0), 0.0);
    }

    #[test]
    fn pd_examples() {
        assert_eq!(format!("{:.2}", compute_pd(91.32, 77.82)), "13.50");
        assert_eq!(format!("{:.2}", compute_pd(58.08, 54.95)), "3.13");
        assert_eq!(compute_pd(42.0, 42.0), 0.0);
        assert!(compute_pd(50.0, 60.0) < 0.0);
    }

    fn session(i: usize, acc: f64) -> SessionResult {
        SessionResult {
            session: i,
            new_classes: 1,
            seen_classes: i + 1,
            per_class: vec![],
            accuracy: acc,
            base_accuracy: acc,
            all_accuracy: acc,
            shortfall_classes: 0,
            subgraph_bytes: 0,
            timing: Timing::default(),
        }
    }

    #[test]
    fn avg_last_from_sessions() {
        let sessions: Vec<SessionResult> =
            [0.8, 0.7, 0.6].iter().enumerate().map(|(i, &a)| session(i, a)).collect();
        let m = OrderMetrics::from_sessions(1, &sessions);
        assert_eq!(m.avg, 70.0);
        assert_eq!(m.last, 60.0);
        assert_eq!(m.session_accuracy, [80.0, 70.0, 60.0]);
        assert_eq!(format!("{:.2}", m.pd), "20.00");
        assert!((m.hacc - 60.0).abs() < 1e-9);
    }

    // Three order rows 91.32/91.54/90.12: mean 90.99, population var 0.39.
    #[test]
    fn mean_std_population() {
        let ms = MeanStd::of(&[91.32, 91.54, 90.12]);
        assert_eq!(format!("{:.2}", ms.mean), "90.99");
        assert_eq!(format!("{:.2}", ms.var), "0.39");
        assert_eq!(format!("{:.2}", ms.std), "0.62");
        assert_eq!(MeanStd::of(&[5.0]).std, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn hacc_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let h = compute_hacc(a, b);
            proptest::prop_assert!(h <= 2.0 * a.min(b) + 1e-12);
            proptest::prop_assert!(h <= a.max(b) + 1e-12);
            proptest::prop_assert!(h >= 0.0);
        }
    }
}
