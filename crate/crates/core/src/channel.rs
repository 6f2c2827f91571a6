//! Stochastic on-body channel.
//!
//! Every node pair has, per posture, an attenuation mean and spread in dB.
//! A transmission is receivable when the attenuation drawn for it stays
//! within the link budget (transmit power minus receiver sensitivity).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Number of on-body nodes.
pub const NODE_COUNT: usize = 7;

/// Number of unordered node pairs.
pub const PAIR_COUNT: usize = NODE_COUNT * (NODE_COUNT - 1) / 2;

/// On-body node position.
///
/// 0 navel, 1 chest, 2 head, 3 upper arm, 4 ankle, 5 thigh, 6 wrist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u8);

impl NodeId {
    pub const NAVEL: NodeId = NodeId(0);
    pub const CHEST: NodeId = NodeId(1);
    pub const HEAD: NodeId = NodeId(2);
    pub const UPPER_ARM: NodeId = NodeId(3);
    pub const ANKLE: NodeId = NodeId(4);
    pub const THIGH: NodeId = NodeId(5);
    pub const WRIST: NodeId = NodeId(6);

    pub const ALL: [NodeId; NODE_COUNT] = [
        NodeId(0),
        NodeId(1),
        NodeId(2),
        NodeId(3),
        NodeId(4),
        NodeId(5),
        NodeId(6),
    ];

    pub fn new(id: u8) -> Option<Self> {
        ((id as usize) < NODE_COUNT).then_some(NodeId(id))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn body_position(self) -> &'static str {
        match self.0 {
            0 => "navel",
            1 => "chest",
            2 => "head",
            3 => "upper arm",
            4 => "ankle",
            5 => "thigh",
            _ => "wrist",
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Body posture; each induces its own attenuation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Posture {
    Walk,
    Weak,
    Run,
    Sit,
    Wear,
    Sleep,
    Lie,
}

impl Posture {
    pub const ALL: [Posture; 7] = [
        Posture::Walk,
        Posture::Weak,
        Posture::Run,
        Posture::Sit,
        Posture::Wear,
        Posture::Sleep,
        Posture::Lie,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Posture::Walk => "walk",
            Posture::Weak => "weak",
            Posture::Run => "run",
            Posture::Sit => "sit",
            Posture::Wear => "wear",
            Posture::Sleep => "sleep",
            Posture::Lie => "lie",
        }
    }
}

impl fmt::Display for Posture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown posture `{0}`")]
pub struct UnknownPosture(pub String);

impl FromStr for Posture {
    type Err = UnknownPosture;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Posture::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownPosture(s.trim().to_string()))
    }
}

/// Attenuation statistics of one link, both in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    pub mean_db: f64,
    pub std_db: f64,
}

impl LinkStats {
    /// Returns `None` unless the mean is finite and the spread finite and non-negative.
    pub fn new(mean_db: f64, std_db: f64) -> Option<Self> {
        (mean_db.is_finite() && std_db.is_finite() && std_db >= 0.0)
            .then_some(LinkStats { mean_db, std_db })
    }
}

/// Transmit power and receiver sensitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: -55.0,
            sensitivity_dbm: -100.0,
        }
    }
}

impl LinkBudget {
    /// Largest attenuation a frame can suffer and still be decoded.
    pub fn threshold_db(&self) -> f64 {
        self.tx_power_dbm - self.sensitivity_dbm
    }
}

/// `P[attenuation < threshold]` under a Normal(mean, std) attenuation law.
pub fn link_success_probability(stats: LinkStats, threshold_db: f64) -> f64 {
    if stats.std_db == 0.0 {
        return if stats.mean_db < threshold_db { 1.0 } else { 0.0 };
    }
    let z = (threshold_db - stats.mean_db) / (stats.std_db * std::f64::consts::SQRT_2);
    (0.5 * libm::erfc(-z)).clamp(0.0, 1.0)
}

/// One attenuation draw for a single (transmission, receiver) pair.
pub fn sample_attenuation<R: Rng + ?Sized>(stats: LinkStats, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    stats.mean_db + stats.std_db * z
}

/// Whether a frame suffering `attenuation_db` still arrives above sensitivity.
pub fn frame_receivable(attenuation_db: f64, budget: &LinkBudget) -> bool {
    budget.tx_power_dbm - attenuation_db >= budget.sensitivity_dbm
}

fn pair_index(a: NodeId, b: NodeId) -> usize {
    let (i, j) = if a < b { (a.index(), b.index()) } else { (b.index(), a.index()) };
    debug_assert!(i != j, "no self links");
    // Row-major offset into the strict upper triangle.
    i * (2 * NODE_COUNT - i - 1) / 2 + (j - i - 1)
}

/// Complete symmetric link statistics for one posture.
#[derive(Debug, Clone, PartialEq)]
pub struct PostureLinks {
    links: [LinkStats; PAIR_COUNT],
}

impl PostureLinks {
    pub fn from_fn(mut f: impl FnMut(NodeId, NodeId) -> LinkStats) -> Self {
        let mut links = [LinkStats { mean_db: 0.0, std_db: 0.0 }; PAIR_COUNT];
        for (a, b) in node_pairs() {
            links[pair_index(a, b)] = f(a, b);
        }
        PostureLinks { links }
    }

    pub fn uniform(stats: LinkStats) -> Self {
        PostureLinks::from_fn(|_, _| stats)
    }

    /// Statistics of the (undirected) link between two distinct nodes.
    pub fn get(&self, a: NodeId, b: NodeId) -> LinkStats {
        assert_ne!(a, b, "no self links");
        self.links[pair_index(a, b)]
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, stats: LinkStats) {
        assert_ne!(a, b, "no self links");
        self.links[pair_index(a, b)] = stats;
    }
}

/// All unordered pairs `(i, j)` with `i < j`, in canonical order.
pub fn node_pairs() -> impl Iterator<Item = (NodeId, NodeId)> {
    NodeId::ALL
        .into_iter()
        .flat_map(|a| NodeId::ALL.into_iter().filter(move |b| a < *b).map(move |b| (a, b)))
}

/// Per-posture link statistics for the whole body network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelTable {
    postures: BTreeMap<Posture, PostureLinks>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("line {line}: expected `posture node_i node_j mean_db std_db`, got {fields} field(s)")]
    FieldCount { line: usize, fields: usize },
    #[error("line {line}: {source}")]
    UnknownPosture { line: usize, source: UnknownPosture },
    #[error("line {line}: invalid node id `{value}` (expected 0..=6)")]
    BadNode { line: usize, value: String },
    #[error("line {line}: self link ({node},{node}) in `{posture}`")]
    SelfLink { line: usize, posture: Posture, node: NodeId },
    #[error("line {line}: invalid number `{value}`")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: negative std {std_db} dB for pair ({a},{b}) in `{posture}`")]
    NegativeStd { line: usize, posture: Posture, a: NodeId, b: NodeId, std_db: f64 },
    #[error("line {line}: non-finite statistics for pair ({a},{b}) in `{posture}`")]
    NonFinite { line: usize, posture: Posture, a: NodeId, b: NodeId },
    #[error("line {line}: asymmetric entry for pair ({a},{b}) in `{posture}`: first given on line {first_line} with different values")]
    Asymmetric { line: usize, first_line: usize, posture: Posture, a: NodeId, b: NodeId },
    #[error("line {line}: duplicate record for pair ({a},{b}) in `{posture}` (first on line {first_line})")]
    DuplicatePair { line: usize, first_line: usize, posture: Posture, a: NodeId, b: NodeId },
    #[error("posture `{posture}` is missing pair ({a},{b})")]
    MissingPair { posture: Posture, a: NodeId, b: NodeId },
    #[error("table contains no records")]
    Empty,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

struct Record {
    line: usize,
    stats: LinkStats,
    reversed: bool,
}

impl ChannelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_posture(mut self, posture: Posture, links: PostureLinks) -> Self {
        self.postures.insert(posture, links);
        self
    }

    pub fn insert(&mut self, posture: Posture, links: PostureLinks) {
        self.postures.insert(posture, links);
    }

    pub fn posture(&self, posture: Posture) -> Option<&PostureLinks> {
        self.postures.get(&posture)
    }

    pub fn postures(&self) -> impl Iterator<Item = Posture> + '_ {
        self.postures.keys().copied()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TableError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    /// Renders the table in the line-oriented file format, one canonical
    /// `i < j` record per pair.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# posture node_i node_j mean_db std_db\n");
        for (posture, links) in &self.postures {
            for (a, b) in node_pairs() {
                let s = links.get(a, b);
                out.push_str(&format!("{posture} {a} {b} {} {}\n", s.mean_db, s.std_db));
            }
        }
        out
    }
}

impl FromStr for ChannelTable {
    type Err = TableError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut records: BTreeMap<Posture, BTreeMap<(NodeId, NodeId), Record>> = BTreeMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(TableError::FieldCount { line, fields: fields.len() });
            }
            let posture: Posture = fields[0]
                .parse()
                .map_err(|source| TableError::UnknownPosture { line, source })?;
            let node = |v: &str| {
                v.parse::<u8>()
                    .ok()
                    .and_then(NodeId::new)
                    .ok_or_else(|| TableError::BadNode { line, value: v.to_string() })
            };
            let (a, b) = (node(fields[1])?, node(fields[2])?);
            if a == b {
                return Err(TableError::SelfLink { line, posture, node: a });
            }
            let number = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| TableError::BadNumber { line, value: v.to_string() })
            };
            let (mean_db, std_db) = (number(fields[3])?, number(fields[4])?);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if !mean_db.is_finite() || !std_db.is_finite() {
                return Err(TableError::NonFinite { line, posture, a: lo, b: hi });
            }
            if std_db < 0.0 {
                return Err(TableError::NegativeStd { line, posture, a: lo, b: hi, std_db });
            }
            let stats = LinkStats { mean_db, std_db };
            let reversed = a > b;

            let per_posture = records.entry(posture).or_default();
            if let Some(first) = per_posture.get(&(lo, hi)) {
                let err = if first.reversed != reversed && first.stats != stats {
                    TableError::Asymmetric { line, first_line: first.line, posture, a: lo, b: hi }
                } else {
                    TableError::DuplicatePair { line, first_line: first.line, posture, a: lo, b: hi }
                };
                return Err(err);
            }
            per_posture.insert((lo, hi), Record { line, stats, reversed });
        }

        if records.is_empty() {
            return Err(TableError::Empty);
        }

        let mut table = ChannelTable::new();
        for (posture, pairs) in records {
            if let Some((a, b)) = node_pairs().find(|p| !pairs.contains_key(p)) {
                return Err(TableError::MissingPair { posture, a, b });
            }
            table.insert(posture, PostureLinks::from_fn(|a, b| pairs[&(a, b)].stats));
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats(mean: f64, std: f64) -> LinkStats {
        LinkStats::new(mean, std).unwrap()
    }

    #[test]
    fn threshold_is_budget_difference() {
        assert_eq!(LinkBudget::default().threshold_db(), 45.0);
    }

    #[test]
    fn pair_index_is_a_bijection() {
        let mut seen = [false; PAIR_COUNT];
        for (a, b) in node_pairs() {
            let i = pair_index(a, b);
            assert!(!seen[i]);
            assert_eq!(i, pair_index(b, a));
            seen[i] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn degenerate_spread_is_a_step() {
        assert_eq!(link_success_probability(stats(44.0, 0.0), 45.0), 1.0);
        assert_eq!(link_success_probability(stats(45.0, 0.0), 45.0), 0.0);
        assert_eq!(link_success_probability(stats(46.0, 0.0), 45.0), 0.0);
    }

    #[test]
    fn median_is_the_mean() {
        assert_eq!(link_success_probability(stats(45.0, 5.0), 45.0), 0.5);
    }

    #[test]
    fn receivable_boundary_is_inclusive() {
        let budget = LinkBudget::default();
        assert!(frame_receivable(44.9, &budget));
        assert!(frame_receivable(45.0, &budget));
        assert!(!frame_receivable(45.0 + 1e-9, &budget));
        assert!(!frame_receivable(100.0, &budget));
    }

    #[test]
    fn zero_spread_draws_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_attenuation(stats(41.5, 0.0), &mut rng), 41.5);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let s = stats(40.0, 5.0);
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..64).map(|_| sample_attenuation(s, &mut a)).collect();
        let ys: Vec<f64> = (0..64).map(|_| sample_attenuation(s, &mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sample_mean_converges() {
        let s = stats(40.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_attenuation(s, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 40.0).abs() < 0.1, "mean {mean}");
    }

    fn complete_walk_text() -> String {
        let mut text = String::from("# synthetic\n");
        for (a, b) in node_pairs() {
            text.push_str(&format!("walk {a} {b} 40 5\n"));
        }
        text
    }

    #[test]
    fn parses_complete_posture() {
        let table: ChannelTable = complete_walk_text().parse().unwrap();
        let walk = table.posture(Posture::Walk).unwrap();
        assert_eq!(walk.get(NodeId::CHEST, NodeId::NAVEL), stats(40.0, 5.0));
        assert!(table.posture(Posture::Run).is_none());
    }

    #[test]
    fn missing_pair_names_posture_and_pair() {
        let mut text = String::new();
        for (a, b) in node_pairs() {
            if (a.index(), b.index()) != (2, 4) {
                text.push_str(&format!("sleep {a} {b} 50 4\n"));
            }
        }
        let err = text.parse::<ChannelTable>().unwrap_err();
        assert_eq!(
            err,
            TableError::MissingPair { posture: Posture::Sleep, a: NodeId::HEAD, b: NodeId::ANKLE }
        );
        assert!(err.to_string().contains("sleep"));
        assert!(err.to_string().contains("(2,4)"));
    }

    #[test]
    fn reversed_record_with_other_values_is_asymmetric() {
        let text = complete_walk_text() + "walk 1 0 41 5\n";
        match text.parse::<ChannelTable>().unwrap_err() {
            TableError::Asymmetric { line, first_line, posture, a, b } => {
                assert_eq!((line, first_line), (23, 2));
                assert_eq!((posture, a, b), (Posture::Walk, NodeId::NAVEL, NodeId::CHEST));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn both_orientations_are_rejected_even_when_equal() {
        let text = complete_walk_text() + "walk 1 0 40 5\n";
        assert!(matches!(
            text.parse::<ChannelTable>(),
            Err(TableError::DuplicatePair { .. })
        ));
    }

    #[test]
    fn rejects_malformed_records() {
        assert!(matches!(
            "walk 0 1 40".parse::<ChannelTable>(),
            Err(TableError::FieldCount { line: 1, fields: 4 })
        ));
        assert!(matches!(
            "dance 0 1 40 5".parse::<ChannelTable>(),
            Err(TableError::UnknownPosture { line: 1, .. })
        ));
        assert!(matches!(
            "walk 0 7 40 5".parse::<ChannelTable>(),
            Err(TableError::BadNode { line: 1, .. })
        ));
        assert!(matches!(
            "walk 3 3 40 5".parse::<ChannelTable>(),
            Err(TableError::SelfLink { line: 1, .. })
        ));
        assert!(matches!(
            "walk 0 1 40 -1".parse::<ChannelTable>(),
            Err(TableError::NegativeStd { line: 1, .. })
        ));
        assert!(matches!(
            "walk 0 1 forty 1".parse::<ChannelTable>(),
            Err(TableError::BadNumber { line: 1, .. })
        ));
        assert!(matches!("# only comments\n\n".parse::<ChannelTable>(), Err(TableError::Empty)));
    }

    #[test]
    fn posture_names_round_trip() {
        for p in Posture::ALL {
            assert_eq!(p.as_str().parse::<Posture>().unwrap(), p);
        }
        assert!("crawl".parse::<Posture>().is_err());
    }
}
