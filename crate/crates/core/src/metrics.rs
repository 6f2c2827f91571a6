//! Coverage, de-sequencing, end-to-end delay and transmission counts, per run
//! and aggregated over seeds.

use thiserror::Error;

use crate::channel::{NodeId, NODE_COUNT};
use crate::engine::{RunRecord, SimTime};

/// Destinations of a broadcast: every node but the sink.
pub const DESTINATIONS: usize = NODE_COUNT - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("coverage is undefined for a run without messages")]
    NoMessages,
}

/// Mean over packets of the fraction of destinations that got the packet, in percent.
pub fn coverage(receivers_per_packet: &[usize]) -> Result<f64, MetricsError> {
    if receivers_per_packet.is_empty() {
        return Err(MetricsError::NoMessages);
    }
    let sum: f64 = receivers_per_packet.iter().map(|&r| r as f64 / DESTINATIONS as f64).sum();
    Ok(100.0 * sum / receivers_per_packet.len() as f64)
}

/// Share of first-copy receptions that arrive after a larger seq, averaged
/// over the nodes that received anything. Zero for single-packet runs.
pub fn desequencing(orders: &[Vec<u32>], messages: u32) -> f64 {
    if messages <= 1 {
        return 0.0;
    }
    let per_node: Vec<f64> = orders
        .iter()
        .filter(|o| !o.is_empty())
        .map(|order| {
            let mut max_seen: Option<u32> = None;
            let mut late = 0usize;
            for &s in order {
                if max_seen.is_some_and(|m| m > s) {
                    late += 1;
                }
                max_seen = Some(max_seen.map_or(s, |m| m.max(s)));
            }
            late as f64 / order.len() as f64
        })
        .collect();
    if per_node.is_empty() {
        return 0.0;
    }
    100.0 * per_node.iter().sum::<f64>() / per_node.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    /// Pooled over delivered (node, packet) pairs; `None` when nothing arrived.
    pub mean_s: Option<f64>,
    /// Pooled over all pairs, uncovered ones counting as the horizon.
    pub penalized_mean_s: f64,
    pub per_node_s: [Option<f64>; NODE_COUNT],
    pub per_node_penalized_s: [Option<f64>; NODE_COUNT],
}

pub fn end_to_end_delay(
    first_rx: &[Vec<Option<SimTime>>],
    arrivals: &[SimTime],
    sink: NodeId,
    penalty: SimTime,
) -> DelayStats {
    let mut per_node_s = [None; NODE_COUNT];
    let mut per_node_penalized_s = [None; NODE_COUNT];
    let (mut clean_sum, mut clean_n, mut pen_sum, mut pen_n) = (0.0, 0usize, 0.0, 0usize);
    for node in NodeId::ALL {
        if node == sink || arrivals.is_empty() {
            continue;
        }
        let (mut c_sum, mut c_n, mut p_sum) = (0.0, 0usize, 0.0);
        for (seq, &sent) in arrivals.iter().enumerate() {
            match first_rx[node.index()].get(seq).copied().flatten() {
                Some(t) => {
                    let d = (t - sent).as_secs_f64();
                    c_sum += d;
                    c_n += 1;
                    p_sum += d;
                }
                None => p_sum += penalty.as_secs_f64(),
            }
        }
        per_node_s[node.index()] = (c_n > 0).then(|| c_sum / c_n as f64);
        per_node_penalized_s[node.index()] = Some(p_sum / arrivals.len() as f64);
        clean_sum += c_sum;
        clean_n += c_n;
        pen_sum += p_sum;
        pen_n += arrivals.len();
    }
    DelayStats {
        mean_s: (clean_n > 0).then(|| clean_sum / clean_n as f64),
        penalized_mean_s: if pen_n > 0 { pen_sum / pen_n as f64 } else { 0.0 },
        per_node_s,
        per_node_penalized_s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub coverage_pct: f64,
    pub deseq_pct: f64,
    pub delay: DelayStats,
    /// Packets each node got at least one copy of.
    pub received: [u32; NODE_COUNT],
    pub tx: [u64; NODE_COUNT],
    pub rx: [u64; NODE_COUNT],
    pub collisions: u64,
    pub drops: u64,
}

impl RunMetrics {
    pub fn from_record(rec: &RunRecord) -> Result<Self, MetricsError> {
        let sink = rec.config.sink;
        let m = rec.messages as usize;
        let per_packet: Vec<usize> = (0..m)
            .map(|seq| {
                NodeId::ALL
                    .iter()
                    .filter(|&&n| n != sink && rec.first_rx[n.index()].get(seq).is_some_and(|t| t.is_some()))
                    .count()
            })
            .collect();
        let received =
            std::array::from_fn(|i| rec.first_rx[i].iter().filter(|t| t.is_some()).count() as u32);
        Ok(RunMetrics {
            coverage_pct: coverage(&per_packet)?,
            deseq_pct: desequencing(&rec.rx_order, rec.messages),
            delay: end_to_end_delay(&rec.first_rx, &rec.app_arrivals, sink, rec.horizon),
            received,
            tx: rec.tx,
            rx: rec.rx,
            collisions: rec.collisions,
            drops: rec.drops.iter().sum(),
        })
    }

    pub fn tx_total(&self) -> u64 {
        self.tx.iter().sum()
    }

    pub fn rx_total(&self) -> u64 {
        self.rx.iter().sum()
    }

    /// Transmissions plus receptions of one node.
    pub fn energy(&self, node: NodeId) -> u64 {
        self.tx[node.index()] + self.rx[node.index()]
    }

    /// Mean transmissions plus receptions per node.
    pub fn energy_per_node(&self) -> f64 {
        (self.tx_total() + self.rx_total()) as f64 / NODE_COUNT as f64
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// `None` for an empty sample. A single value has zero spread.
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage(&[6]).unwrap(), 100.0);
        assert_eq!(coverage(&[3]).unwrap(), 50.0);
        assert_eq!(coverage(&[6, 3]).unwrap(), 75.0);
        assert_eq!(coverage(&[]), Err(MetricsError::NoMessages));
    }

    #[test]
    fn desequencing_examples() {
        assert_eq!(desequencing(&[vec![0, 1, 2]], 3), 0.0);
        assert!((desequencing(&[vec![1, 0, 2]], 3) - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(desequencing(&[vec![0]], 1), 0.0);
        // Averaged per node, empty nodes ignored.
        let d = desequencing(&[vec![1, 0], vec![0, 1], vec![]], 2);
        assert!((d - 25.0).abs() < 1e-12);
    }

    #[test]
    fn delay_clean_and_penalized() {
        let sink = NodeId::THIGH;
        let mut first_rx = vec![vec![None]; NODE_COUNT];
        first_rx[0][0] = Some(t(30));
        let d = end_to_end_delay(&first_rx, &[t(25)], sink, t(1000));
        assert!((d.mean_s.unwrap() - 0.005).abs() < 1e-12);
        assert!((d.per_node_s[0].unwrap() - 0.005).abs() < 1e-12);
        assert_eq!(d.per_node_s[1], None);
        assert_eq!(d.per_node_penalized_s[1], Some(1.0));
        assert_eq!(d.per_node_s[sink.index()], None);
        assert_eq!(d.per_node_penalized_s[sink.index()], None);
        assert!((d.penalized_mean_s - (0.005 + 5.0) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_has_zero_spread() {
        let s = Summary::of(&[42.0; 50]).unwrap();
        assert_eq!(s.mean, 42.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(Summary::of(&[]), None);
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
    }
}
