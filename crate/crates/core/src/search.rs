//! Similarity search and unique-behavior mining over labeled corpora.
//!
//! Two labels are compared by their action sequences only: the distance is
//! the Levenshtein distance of the lateral sequences plus that of the
//! longitudinal sequences. Exact matches go through a signature index.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::actions::{LateralAction, Level, LongitudinalAction};
use crate::sdl::{SdlError, SdlLabel};

pub type RecordId = (String, String);

/// Duration-free action sequences of a label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub lateral: Vec<LateralAction>,
    pub longitudinal: Vec<LongitudinalAction>,
}

impl Signature {
    pub fn of(label: &SdlLabel) -> Signature {
        Signature { lateral: label.lateral_labels(), longitudinal: label.longitudinal_labels() }
    }
}

impl std::fmt::Display for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: Vec<String>| v.join(",");
        write!(
            f,
            "{} | {}",
            join(self.lateral.iter().map(|l| l.to_string()).collect()),
            join(self.longitudinal.iter().map(|l| l.to_string()).collect())
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("level mismatch: expected {expected}, got {got}")]
    LevelMismatch { expected: Level, got: Level },
    #[error("duplicate record {0}:{1}")]
    DuplicateRecord(String, String),
    #[error("unknown record {0}:{1}")]
    UnknownRecord(String, String),
    #[error("d_sim must be a non-negative number")]
    InvalidRadius,
    #[error(transparent)]
    Label(#[from] SdlError),
}

/// Labels of one hierarchy level keyed by (scenario, vehicle), with an
/// exact-match index on signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    level: Level,
    records: BTreeMap<RecordId, SdlLabel>,
    index: HashMap<Signature, Vec<RecordId>>,
}

impl LabeledCorpus {
    pub fn new(level: Level) -> Self {
        LabeledCorpus { level, records: BTreeMap::new(), index: HashMap::new() }
    }

    /// Builds a corpus at `level`, projecting finer labels down to it.
    pub fn from_labels(level: Level, labels: impl IntoIterator<Item = SdlLabel>) -> Result<Self, SearchError> {
        let mut c = LabeledCorpus::new(level);
        for l in labels {
            let l = if l.level > level { l.project(level)? } else { l };
            c.insert(l)?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, label: SdlLabel) -> Result<(), SearchError> {
        if label.level != self.level {
            return Err(SearchError::LevelMismatch { expected: self.level, got: label.level });
        }
        let key = label.key();
        if self.records.contains_key(&key) {
            return Err(SearchError::DuplicateRecord(key.0, key.1));
        }
        let ids = self.index.entry(Signature::of(&label)).or_default();
        let at = ids.partition_point(|k| *k < key);
        ids.insert(at, key.clone());
        self.records.insert(key, label);
        Ok(())
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, scenario_id: &str, vehicle_id: &str) -> Option<&SdlLabel> {
        self.records.get(&(scenario_id.to_string(), vehicle_id.to_string()))
    }

    /// Records in id order.
    pub fn iter(&self) -> impl Iterator<Item = &SdlLabel> {
        self.records.values()
    }

    /// Ids sharing exactly this signature, in id order.
    pub fn exact(&self, signature: &Signature) -> &[RecordId] {
        self.index.get(signature).map_or(&[], Vec::as_slice)
    }

    /// Signature frequencies, most frequent first (ties by signature).
    pub fn signature_counts(&self) -> Vec<(Signature, usize)> {
        let mut out: Vec<(Signature, usize)> = self.index.iter().map(|(s, ids)| (s.clone(), ids.len())).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Levenshtein distance of two signatures, summed over both streams.
pub fn signature_distance(a: &Signature, b: &Signature) -> usize {
    strsim::generic_levenshtein(&a.lateral, &b.lateral) + strsim::generic_levenshtein(&a.longitudinal, &b.longitudinal)
}

pub fn distance(a: &SdlLabel, b: &SdlLabel) -> Result<usize, SearchError> {
    if a.level != b.level {
        return Err(SearchError::LevelMismatch { expected: a.level, got: b.level });
    }
    Ok(signature_distance(&Signature::of(a), &Signature::of(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// A record of the searched corpus; it is excluded from its own result.
    Record(RecordId),
    /// A label from elsewhere. A corpus record with the same id is excluded.
    Label(SdlLabel),
    Sequences(Signature),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchQuery {
    pub reference: Reference,
    pub d_sim: f64,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SearchHit {
    pub distance: usize,
    pub scenario_id: String,
    pub vehicle_id: String,
}

/// Records within `d_sim` of the reference, sorted by distance then id.
///
/// `d_sim = 0` means exact sequence match (index lookup); any positive
/// radius keeps records with distance strictly below it.
pub fn search(corpus: &LabeledCorpus, query: &SearchQuery) -> Result<Vec<SearchHit>, SearchError> {
    if !(query.d_sim >= 0.0 && query.d_sim.is_finite()) {
        return Err(SearchError::InvalidRadius);
    }
    if query.level != corpus.level {
        return Err(SearchError::LevelMismatch { expected: corpus.level, got: query.level });
    }
    let (signature, own) = match &query.reference {
        Reference::Record((s, v)) => {
            let label = corpus.get(s, v).ok_or_else(|| SearchError::UnknownRecord(s.clone(), v.clone()))?;
            (Signature::of(label), Some((s.clone(), v.clone())))
        }
        Reference::Label(label) => {
            if label.level < query.level {
                return Err(SearchError::LevelMismatch { expected: query.level, got: label.level });
            }
            (Signature::of(&label.project(query.level)?), Some(label.key()))
        }
        Reference::Sequences(s) => (s.clone(), None),
    };
    let keep = |id: &RecordId| own.as_ref() != Some(id);
    let hit = |(s, v): &RecordId, distance| SearchHit { distance, scenario_id: s.clone(), vehicle_id: v.clone() };
    let mut hits: Vec<SearchHit> = if query.d_sim == 0.0 {
        corpus.exact(&signature).iter().filter(|id| keep(id)).map(|id| hit(id, 0)).collect()
    } else {
        corpus
            .records
            .iter()
            .filter(|(id, _)| keep(id))
            .filter_map(|(id, l)| {
                let d = signature_distance(&signature, &Signature::of(l));
                ((d as f64) < query.d_sim).then(|| hit(id, d))
            })
            .collect()
    };
    hits.sort();
    Ok(hits)
}

/// Records whose signature no other record shares.
pub fn find_unique(corpus: &LabeledCorpus) -> Vec<RecordId> {
    let mut out: Vec<RecordId> = corpus.index.values().filter(|ids| ids.len() == 1).map(|ids| ids[0].clone()).collect();
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub level: Level,
    pub records: usize,
    /// Number of records containing each lateral label.
    pub lateral: BTreeMap<String, usize>,
    pub longitudinal: BTreeMap<String, usize>,
    /// Records per signature; the counts sum to `records`.
    pub signatures: Vec<(String, usize)>,
    pub unique: usize,
}

pub fn stats(corpus: &LabeledCorpus) -> CorpusStats {
    let mut lateral = BTreeMap::new();
    let mut longitudinal = BTreeMap::new();
    for l in corpus.iter() {
        let mut lat: Vec<String> = l.lateral.iter().map(|s| s.label.to_string()).collect();
        lat.sort();
        lat.dedup();
        for name in lat {
            *lateral.entry(name).or_insert(0) += 1;
        }
        let mut long: Vec<String> = l.longitudinal.iter().map(|s| s.label.to_string()).collect();
        long.sort();
        long.dedup();
        for name in long {
            *longitudinal.entry(name).or_insert(0) += 1;
        }
    }
    let signatures = corpus.signature_counts().into_iter().map(|(s, n)| (s.to_string(), n)).collect();
    CorpusStats { level: corpus.level, records: corpus.len(), lateral, longitudinal, signatures, unique: find_unique(corpus).len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{Direction, StreamLabel};
    use crate::sdl::ActionSegment;
    use proptest::prelude::*;

    fn label(id: &str, lateral: &[LateralAction], longitudinal: &[LongitudinalAction]) -> SdlLabel {
        fn segs<L: Copy>(ls: &[L]) -> Vec<ActionSegment<L>> {
            ls.iter()
                .enumerate()
                .map(|(i, &label)| ActionSegment { label, start_ms: i as u64 * 1000, end_ms: (i as u64 + 1) * 1000 })
                .collect()
        }
        let mut long = segs(longitudinal);
        // both streams must end together
        long.last_mut().unwrap().end_ms = lateral.len().max(longitudinal.len()) as u64 * 1000;
        let mut lat = segs(lateral);
        lat.last_mut().unwrap().end_ms = long.last().unwrap().end_ms;
        SdlLabel { scenario_id: id.into(), vehicle_id: "0".into(), level: Level::Trend, lateral: lat, longitudinal: long }
    }

    const S: LateralAction = LateralAction::Straight;
    const R: LateralAction = LateralAction::Turn(Direction::Right, None);
    const L: LateralAction = LateralAction::Turn(Direction::Left, None);
    const M: LongitudinalAction = LongitudinalAction::MAINTAIN;
    const A: LongitudinalAction = LongitudinalAction::ACCELERATE;

    #[test]
    fn distance_examples() {
        let a = label("a", &[S], &[M]);
        assert_eq!(distance(&a, &a).unwrap(), 0);
        assert_eq!(distance(&a, &label("b", &[S, R], &[M])).unwrap(), 1);
        assert_eq!(distance(&a, &label("c", &[L, S, R], &[A, M])).unwrap(), 3);
        let coarse = a.project(Level::Trace).unwrap();
        assert!(matches!(distance(&a, &coarse), Err(SearchError::LevelMismatch { .. })));
    }

    #[test]
    fn exact_search_excludes_self() {
        let c = LabeledCorpus::from_labels(
            Level::Trend,
            [label("a", &[S, R], &[M]), label("b", &[S, R], &[M]), label("c", &[S], &[M]), label("d", &[S, R], &[A])],
        )
        .unwrap();
        let q = |id: &str, d_sim| SearchQuery { reference: Reference::Record((id.into(), "0".into())), d_sim, level: Level::Trend };
        let ids = |hits: Vec<SearchHit>| hits.into_iter().map(|h| h.scenario_id).collect::<Vec<_>>();
        assert_eq!(ids(search(&c, &q("a", 0.0)).unwrap()), vec!["b"]);
        assert_eq!(ids(search(&c, &q("a", 0.5)).unwrap()), vec!["b"]);
        assert_eq!(ids(search(&c, &q("a", 2.0)).unwrap()), vec!["b", "c", "d"]);
        assert!(search(&c, &q("c", 0.0)).unwrap().is_empty());
        assert_eq!(find_unique(&c), vec![("c".into(), "0".into()), ("d".into(), "0".into())]);
        assert!(matches!(search(&c, &q("zz", 0.0)), Err(SearchError::UnknownRecord(..))));
        assert!(matches!(search(&c, &q("a", -1.0)), Err(SearchError::InvalidRadius)));
        let external = SearchQuery { reference: Reference::Sequences(Signature { lateral: vec![S], longitudinal: vec![M] }), d_sim: 0.0, level: Level::Trend };
        assert_eq!(ids(search(&c, &external).unwrap()), vec!["c"]);
    }

    #[test]
    fn empty_and_identical_corpora() {
        let empty = LabeledCorpus::new(Level::Trend);
        let q = SearchQuery { reference: Reference::Sequences(Signature { lateral: vec![S], longitudinal: vec![M] }), d_sim: 3.0, level: Level::Trend };
        assert!(search(&empty, &q).unwrap().is_empty());
        let same = LabeledCorpus::from_labels(Level::Trend, (0..5).map(|i| label(&i.to_string(), &[S, L], &[A, M]))).unwrap();
        assert!(find_unique(&same).is_empty());
        let st = stats(&same);
        assert_eq!(st.signatures.iter().map(|s| s.1).sum::<usize>(), 5);
        assert_eq!(st.lateral["LeftTurn"], 5);
    }

    #[test]
    fn duplicates_and_levels_are_checked() {
        let mut c = LabeledCorpus::new(Level::Trend);
        c.insert(label("a", &[S], &[M])).unwrap();
        assert!(matches!(c.insert(label("a", &[S], &[M])), Err(SearchError::DuplicateRecord(..))));
        assert!(matches!(c.insert(label("b", &[S], &[M]).project(Level::Trace).unwrap()), Err(SearchError::LevelMismatch { .. })));
        let coarse = LabeledCorpus::from_labels(Level::Trace, [label("a", &[S], &[LongitudinalAction::Stopped])]).unwrap();
        assert_eq!(coarse.iter().next().unwrap().longitudinal[0].label, M);
    }

    fn arb_signature() -> impl Strategy<Value = Signature> {
        let lat = LateralAction::legal_set(Level::Maneuver);
        let long = LongitudinalAction::legal_set(Level::Maneuver);
        (proptest::collection::vec(0..lat.len(), 0..6), proptest::collection::vec(0..long.len(), 0..6)).prop_map(move |(a, b)| Signature {
            lateral: a.into_iter().map(|i| lat[i]).collect(),
            longitudinal: b.into_iter().map(|i| long[i]).collect(),
        })
    }

    proptest! {
        #[test]
        fn metric_axioms(a in arb_signature(), b in arb_signature(), c in arb_signature()) {
            prop_assert_eq!(signature_distance(&a, &a), 0);
            prop_assert_eq!(signature_distance(&a, &b) == 0, a == b);
            prop_assert_eq!(signature_distance(&a, &b), signature_distance(&b, &a));
            prop_assert!(signature_distance(&a, &c) <= signature_distance(&a, &b) + signature_distance(&b, &c));
        }
    }
}
