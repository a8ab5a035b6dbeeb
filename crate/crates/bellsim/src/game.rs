//! Game definition: settings, outcomes, the win rule, counterfactual tables,
//! and the exhaustive enumeration of deterministic strategies.
//!
//! One round of the game: a referee hands Alice a setting `a` and Bob a
//! setting `b`, each uniform on {1, 2} by default. The players answer with
//! outcomes `x` and `y` in {+1, -1}. They win the round when both settings
//! are 1 and the outcomes agree, or when at least one setting is 2 and the
//! outcomes differ.
//!
//! Under a classical worldview every round has a well-defined
//! [`CounterfactualTable`]: the four outputs the players *would* produce
//! for each possible own setting. The parity identities on that table are
//! what cap every classical strategy at a 3/4 win rate.

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Errors from game-level validation.
#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    /// A setting distribution was not a probability vector.
    #[error("setting distribution must have nonnegative entries summing to 1, got sum {sum}")]
    InvalidDistribution { sum: f64 },
    /// A counterfactual-table sign string could not be parsed.
    #[error("counterfactual table must be four characters over '+'/'-', got {0:?}")]
    BadTableString(String),
}

/// A measurement setting: the binary input handed to one party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    S1,
    S2,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::S1, Setting::S2];

    /// 0 for S1, 1 for S2. Also the serialization order.
    pub fn index(self) -> usize {
        match self {
            Setting::S1 => 0,
            Setting::S2 => 1,
        }
    }

    pub fn label(self) -> char {
        match self {
            Setting::S1 => '1',
            Setting::S2 => '2',
        }
    }

    pub fn from_label(c: char) -> Option<Setting> {
        match c {
            '1' => Some(Setting::S1),
            '2' => Some(Setting::S2),
            _ => None,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_char(self.label())
    }
}

/// A party's answer in one round, a signed unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// +1 or -1.
    pub fn value(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i32) -> Option<Outcome> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    pub fn negate(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        }
    }

    pub fn sign_char(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }

    pub fn from_sign_char(c: char) -> Option<Outcome> {
        match c {
            '+' => Some(Outcome::Plus),
            '-' => Some(Outcome::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_i32(self.value())
    }
}

/// One of the two players.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Alice => f.write_str("Alice"),
            Party::Bob => f.write_str("Bob"),
        }
    }
}

/// The joint setting of a round: Alice's input and Bob's input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SettingPair {
    pub a: Setting,
    pub b: Setting,
}

impl SettingPair {
    /// All four pairs in serialization order: 11, 12, 21, 22.
    pub const ALL: [SettingPair; 4] = [
        SettingPair {
            a: Setting::S1,
            b: Setting::S1,
        },
        SettingPair {
            a: Setting::S1,
            b: Setting::S2,
        },
        SettingPair {
            a: Setting::S2,
            b: Setting::S1,
        },
        SettingPair {
            a: Setting::S2,
            b: Setting::S2,
        },
    ];

    pub fn new(a: Setting, b: Setting) -> SettingPair {
        SettingPair { a, b }
    }

    /// Position in [`SettingPair::ALL`].
    pub fn index(self) -> usize {
        self.a.index() * 2 + self.b.index()
    }

    pub fn label(self) -> &'static str {
        match (self.a, self.b) {
            (Setting::S1, Setting::S1) => "11",
            (Setting::S1, Setting::S2) => "12",
            (Setting::S2, Setting::S1) => "21",
            (Setting::S2, Setting::S2) => "22",
        }
    }

    pub fn both_one(self) -> bool {
        self.a == Setting::S1 && self.b == Setting::S1
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for SettingPair {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

/// Did the players win the round?
///
/// Winning combinations: equal outcomes on setting pair 11, differing
/// outcomes on 12, 21, and 22. The complement (the four losing events) is
/// what the counterfactual parity lemma bounds from below.
pub fn win_rule(pair: SettingPair, x: Outcome, y: Outcome) -> bool {
    if pair.both_one() {
        x == y
    } else {
        x != y
    }
}

/// The four potential outputs of one round under a classical worldview.
///
/// `x1` is what Alice would answer to setting 1, `x2` to setting 2, and
/// `y1`/`y2` likewise for Bob. The actual round outputs are the entries
/// selected by the actual settings. A deterministic strategy *is* such a
/// table, so there are exactly sixteen of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CounterfactualTable {
    pub x1: Outcome,
    pub x2: Outcome,
    pub y1: Outcome,
    pub y2: Outcome,
}

impl CounterfactualTable {
    pub fn new(x1: Outcome, x2: Outcome, y1: Outcome, y2: Outcome) -> CounterfactualTable {
        CounterfactualTable { x1, x2, y1, y2 }
    }

    /// Table number in 0..16. Bit 3 is x1, bit 2 is x2, bit 1 is y1,
    /// bit 0 is y2; a set bit means Minus. Enumeration therefore runs
    /// through the four Alice response functions times the four Bob ones.
    pub fn from_index(index: usize) -> CounterfactualTable {
        assert!(index < 16, "table index out of range: {index}");
        let bit = |b: usize| {
            if index >> b & 1 == 0 {
                Outcome::Plus
            } else {
                Outcome::Minus
            }
        };
        CounterfactualTable {
            x1: bit(3),
            x2: bit(2),
            y1: bit(1),
            y2: bit(0),
        }
    }

    pub fn index(self) -> usize {
        let bit = |o: Outcome| usize::from(o == Outcome::Minus);
        bit(self.x1) << 3 | bit(self.x2) << 2 | bit(self.y1) << 1 | bit(self.y2)
    }

    /// All sixteen tables in index order.
    pub fn all() -> impl Iterator<Item = CounterfactualTable> {
        (0..16).map(CounterfactualTable::from_index)
    }

    pub fn alice_response(self, setting: Setting) -> Outcome {
        match setting {
            Setting::S1 => self.x1,
            Setting::S2 => self.x2,
        }
    }

    pub fn bob_response(self, setting: Setting) -> Outcome {
        match setting {
            Setting::S1 => self.y1,
            Setting::S2 => self.y2,
        }
    }

    /// The product (x1·y1)(x2·y1)(x2·y2)(x1·y2); identically +1 because
    /// every entry appears twice.
    pub fn parity_product(self) -> i32 {
        let p = |u: Outcome, v: Outcome| u.value() * v.value();
        p(self.x1, self.y1) * p(self.x2, self.y1) * p(self.x2, self.y2) * p(self.x1, self.y2)
    }

    /// Compact form like `+++-`, entries ordered x1, x2, y1, y2.
    pub fn sign_string(self) -> String {
        [self.x1, self.x2, self.y1, self.y2]
            .iter()
            .map(|o| o.sign_char())
            .collect()
    }

    pub fn from_sign_string(s: &str) -> Result<CounterfactualTable, GameError> {
        let signs: Vec<Outcome> = s
            .chars()
            .map(Outcome::from_sign_char)
            .collect::<Option<_>>()
            .ok_or_else(|| GameError::BadTableString(s.to_string()))?;
        match signs.as_slice() {
            [x1, x2, y1, y2] => Ok(CounterfactualTable::new(*x1, *x2, *y1, *y2)),
            _ => Err(GameError::BadTableString(s.to_string())),
        }
    }
}

impl fmt::Display for CounterfactualTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sign_string())
    }
}

impl Serialize for CounterfactualTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.sign_string())
    }
}

/// I{x1 != y1} + I{x2 = y1} + I{x2 = y2} + I{x1 = y2}.
///
/// Odd and at least 1 for every table; the weighted version of ">= 1" is
/// exactly the statement that every classical round loses with probability
/// at least 1/4 under fair-coin settings.
pub fn indicator_sum(t: CounterfactualTable) -> u32 {
    u32::from(t.x1 != t.y1)
        + u32::from(t.x2 == t.y1)
        + u32::from(t.x2 == t.y2)
        + u32::from(t.x1 == t.y2)
}

/// How many of the equalities x1=y1, x2=y1, x2=y2, x1=y2 hold. Always even.
pub fn equality_count(t: CounterfactualTable) -> u32 {
    u32::from(t.x1 == t.y1)
        + u32::from(t.x2 == t.y1)
        + u32::from(t.x2 == t.y2)
        + u32::from(t.x1 == t.y2)
}

/// A probability distribution over the four setting pairs, in
/// [`SettingPair::ALL`] order. Uniform (independent fair coins) by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettingDistribution {
    probs: [f64; 4],
}

impl SettingDistribution {
    /// Absolute slack allowed on the sum-to-one check.
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probs: [f64; 4]) -> Result<SettingDistribution, GameError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (sum - 1.0).abs() > Self::SUM_TOLERANCE
        {
            return Err(GameError::InvalidDistribution { sum });
        }
        Ok(SettingDistribution { probs })
    }

    pub fn uniform() -> SettingDistribution {
        SettingDistribution { probs: [0.25; 4] }
    }

    pub fn point_mass(pair: SettingPair) -> SettingDistribution {
        let mut probs = [0.0; 4];
        probs[pair.index()] = 1.0;
        SettingDistribution { probs }
    }

    pub fn probability(&self, pair: SettingPair) -> f64 {
        self.probs[pair.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.probs
    }

    pub fn is_uniform(&self) -> bool {
        self.probs == [0.25; 4]
    }
}

impl Default for SettingDistribution {
    fn default() -> Self {
        SettingDistribution::uniform()
    }
}

/// Probability that the table `t` loses a round when the setting pair is
/// drawn from `dist`.
///
/// The four losing events are: pair 11 with x1 != y1, pair 21 with x2 = y1,
/// pair 22 with x2 = y2, and pair 12 with x1 = y2. Under the uniform
/// distribution this equals `indicator_sum(t) / 4`, hence is at least 1/4.
pub fn loss_probability(t: CounterfactualTable, dist: &SettingDistribution) -> f64 {
    let mut p = 0.0;
    for pair in SettingPair::ALL {
        let x = t.alice_response(pair.a);
        let y = t.bob_response(pair.b);
        if !win_rule(pair, x, y) {
            p += dist.probability(pair);
        }
    }
    p
}

/// Number of setting pairs (out of 4) the table wins. Either 1 or 3.
pub fn deterministic_win_count(t: CounterfactualTable) -> u8 {
    SettingPair::ALL
        .iter()
        .filter(|pair| win_rule(**pair, t.alice_response(pair.a), t.bob_response(pair.b)))
        .count() as u8
}

/// One row of the deterministic-strategy enumeration. The win probability
/// is kept exact as a count of winning pairs out of four.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeterministicStrategySummary {
    pub table: CounterfactualTable,
    pub wins_of_four: u8,
}

impl DeterministicStrategySummary {
    pub fn win_probability(&self) -> f64 {
        f64::from(self.wins_of_four) / 4.0
    }

    /// The probability as an exact fraction string, "1/4" or "3/4".
    pub fn fraction_label(&self) -> String {
        format!("{}/4", self.wins_of_four)
    }
}

impl Serialize for DeterministicStrategySummary {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DeterministicStrategySummary", 3)?;
        s.serialize_field("table", &self.table)?;
        s.serialize_field("wins_of_four", &self.wins_of_four)?;
        s.serialize_field("win_probability", &self.win_probability())?;
        s.end()
    }
}

/// Every deterministic strategy with its exact uniform-settings win
/// probability. Sixteen rows; the maximum win probability is 3/4.
pub fn enumerate_deterministic_strategies() -> Vec<DeterministicStrategySummary> {
    CounterfactualTable::all()
        .map(|table| DeterministicStrategySummary {
            table,
            wins_of_four: deterministic_win_count(table),
        })
        .collect()
}

/// Simulated-clock timestamps of one round's four observable events,
/// nanoseconds on a shared logical clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventTimes {
    pub setting_issued_a_ns: u64,
    pub setting_issued_b_ns: u64,
    pub output_committed_a_ns: u64,
    pub output_committed_b_ns: u64,
}

impl EventTimes {
    /// Each party commits its output no earlier than it received its setting.
    pub fn is_causal(&self) -> bool {
        self.output_committed_a_ns >= self.setting_issued_a_ns
            && self.output_committed_b_ns >= self.setting_issued_b_ns
    }
}

/// One played round as recorded in an experiment log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    pub index: u64,
    pub pair: SettingPair,
    pub x: Outcome,
    pub y: Outcome,
    pub win: bool,
    pub events: Option<EventTimes>,
}

impl RoundRecord {
    /// The win flag is derived from the win rule, never stored separately.
    pub fn new(
        index: u64,
        pair: SettingPair,
        x: Outcome,
        y: Outcome,
        events: Option<EventTimes>,
    ) -> RoundRecord {
        RoundRecord {
            index,
            pair,
            x,
            y,
            win: win_rule(pair, x, y),
            events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn win_rule_examples() {
        let p = |a, b| SettingPair::new(a, b);
        assert!(win_rule(
            p(Setting::S1, Setting::S1),
            Outcome::Plus,
            Outcome::Plus
        ));
        assert!(win_rule(
            p(Setting::S2, Setting::S2),
            Outcome::Plus,
            Outcome::Minus
        ));
        assert!(!win_rule(
            p(Setting::S1, Setting::S2),
            Outcome::Plus,
            Outcome::Plus
        ));
        assert!(!win_rule(
            p(Setting::S2, Setting::S1),
            Outcome::Minus,
            Outcome::Minus
        ));
    }

    #[test]
    fn win_rule_is_complement_of_loss_events() {
        // The losing events, stated directly from the weighted inequality.
        for pair in SettingPair::ALL {
            for x in Outcome::ALL {
                for y in Outcome::ALL {
                    let loses = match pair.label() {
                        "11" => x != y,
                        "21" | "22" | "12" => x == y,
                        _ => unreachable!(),
                    };
                    assert_eq!(win_rule(pair, x, y), !loses, "pair {pair} x {x} y {y}");
                }
            }
        }
    }

    #[test]
    fn indicator_sum_examples() {
        let t = |s: &str| CounterfactualTable::from_sign_string(s).unwrap();
        assert_eq!(indicator_sum(t("++++")), 3);
        assert_eq!(indicator_sum(t("+++-")), 1);
        assert_eq!(indicator_sum(t("+--+")), 3);
    }

    #[test]
    fn equality_count_examples() {
        let t = |s: &str| CounterfactualTable::from_sign_string(s).unwrap();
        assert_eq!(equality_count(t("++++")), 4);
        assert_eq!(equality_count(t("+++-")), 2);
        assert_eq!(equality_count(t("+-+-")), 2);
    }

    #[test]
    fn parity_lemma_exhaustive() {
        let mut min_indicator = u32::MAX;
        for t in CounterfactualTable::all() {
            assert_eq!(t.parity_product(), 1, "table {t}");
            let ind = indicator_sum(t);
            let eq = equality_count(t);
            assert!(ind % 2 == 1 && ind >= 1, "table {t}: indicator sum {ind}");
            assert!(eq.is_multiple_of(2), "table {t}: equality count {eq}");
            // The indicator sum is the equality count with the first term flipped.
            let first_eq = u32::from(t.x1 == t.y1);
            assert_eq!(ind, eq - first_eq + (1 - first_eq), "table {t}");
            min_indicator = min_indicator.min(ind);
        }
        assert_eq!(min_indicator, 1);
    }

    #[test]
    fn loss_probability_examples() {
        let t = |s: &str| CounterfactualTable::from_sign_string(s).unwrap();
        let uniform = SettingDistribution::uniform();
        assert_eq!(loss_probability(t("+++-"), &uniform), 0.25);
        assert_eq!(loss_probability(t("++++"), &uniform), 0.75);
        let pair11 = SettingPair::new(Setting::S1, Setting::S1);
        assert_eq!(
            loss_probability(t("+++-"), &SettingDistribution::point_mass(pair11)),
            0.0
        );
    }

    #[test]
    fn loss_probability_matches_indicator_sum_under_uniform() {
        let uniform = SettingDistribution::uniform();
        for t in CounterfactualTable::all() {
            let expected = f64::from(indicator_sum(t)) / 4.0;
            assert!((loss_probability(t, &uniform) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn distribution_rejects_non_probability_vectors() {
        assert!(SettingDistribution::new([0.3, 0.3, 0.3, 0.3]).is_err());
        assert!(SettingDistribution::new([0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(SettingDistribution::new([f64::NAN, 0.25, 0.25, 0.25]).is_err());
        assert!(SettingDistribution::new([0.1, 0.2, 0.3, 0.4]).is_ok());
    }

    #[test]
    fn enumeration_is_exactly_sixteen_with_known_split() {
        let rows = enumerate_deterministic_strategies();
        assert_eq!(rows.len(), 16);
        let at_three = rows.iter().filter(|r| r.wins_of_four == 3).count();
        let at_one = rows.iter().filter(|r| r.wins_of_four == 1).count();
        assert_eq!(at_three, 8);
        assert_eq!(at_one, 8);
        assert_eq!(rows.iter().map(|r| r.wins_of_four).max(), Some(3));
    }

    #[test]
    fn enumeration_examples() {
        let t = |s: &str| CounterfactualTable::from_sign_string(s).unwrap();
        assert_eq!(deterministic_win_count(t("+++-")), 3);
        // All-plus agrees everywhere, so it only wins pair 11.
        assert_eq!(deterministic_win_count(t("++++")), 1);
    }

    #[test]
    fn table_index_round_trip() {
        for (i, t) in CounterfactualTable::all().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(
                CounterfactualTable::from_sign_string(&t.sign_string()).unwrap(),
                t
            );
        }
        assert!(CounterfactualTable::from_sign_string("++").is_err());
        assert!(CounterfactualTable::from_sign_string("++x-").is_err());
    }

    #[test]
    fn round_record_win_is_derived() {
        for pair in SettingPair::ALL {
            for x in Outcome::ALL {
                for y in Outcome::ALL {
                    let r = RoundRecord::new(0, pair, x, y, None);
                    assert_eq!(r.win, win_rule(pair, x, y));
                }
            }
        }
    }
}
