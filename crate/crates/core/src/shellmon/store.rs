use std::collections::BTreeMap;
use std::sync::RwLock;

use super::{KpiBatch, KpiSample, KpiSnapshot, ShellmonError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Stored(usize),
    /// `(source_id, batch_seq)` already seen; nothing written.
    Duplicate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub samples: usize,
    pub batches: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

#[derive(Debug, Default)]
struct Inner {
    /// (source_id, id) -> samples in timestamp order.
    series: BTreeMap<(String, String), Vec<KpiSample>>,
    last_seq: BTreeMap<String, u64>,
    stats: StoreStats,
}

/// Shared KPI store. Writes are serialized; snapshots take a read lock and
/// copy out, so a snapshot never observes a half-applied batch.
#[derive(Debug, Default)]
pub struct KpiStore {
    inner: RwLock<Inner>,
}

impl KpiStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and stores a batch. Replayed batch sequence numbers are
    /// dropped; a malformed batch is discarded whole and counted.
    pub fn ingest(&self, batch: &KpiBatch) -> Result<IngestOutcome, ShellmonError> {
        let mut inner = self.inner.write().expect("store lock poisoned");
        if inner
            .last_seq
            .get(&batch.source_id)
            .is_some_and(|&last| batch.batch_seq <= last)
        {
            inner.stats.duplicates += 1;
            return Ok(IngestOutcome::Duplicate);
        }
        if let Err(e) = batch.check() {
            inner.stats.malformed += 1;
            return Err(e);
        }
        for r in &batch.samples {
            let key = (batch.source_id.clone(), r.id.clone());
            let last = inner
                .series
                .get(&key)
                .and_then(|s| s.last())
                .map(|s| s.ts_ms);
            if let Some(last) = last.filter(|&last| r.ts_ms <= last) {
                inner.stats.malformed += 1;
                return Err(ShellmonError::MalformedBatch {
                    source_id: batch.source_id.clone(),
                    reason: format!("timestamp {} on {} not after stored {last}", r.ts_ms, r.id),
                });
            }
        }
        for s in batch.to_samples() {
            inner
                .series
                .entry((s.source_id.clone(), s.id.clone()))
                .or_default()
                .push(s);
        }
        inner
            .last_seq
            .insert(batch.source_id.clone(), batch.batch_seq);
        inner.stats.samples += batch.samples.len();
        inner.stats.batches += 1;
        Ok(IngestOutcome::Stored(batch.samples.len()))
    }

    pub fn snapshot(&self, as_of: u64) -> KpiSnapshot {
        let inner = self.inner.read().expect("store lock poisoned");
        let mut snap = KpiSnapshot::empty(as_of);
        for series in inner.series.values() {
            let n = series.partition_point(|s| s.ts_ms <= as_of);
            if n > 0 {
                snap.insert(series[n - 1].clone());
            }
        }
        snap
    }

    pub fn stats(&self) -> StoreStats {
        self.inner.read().expect("store lock poisoned").stats
    }

    /// All samples, ordered by (source, id, timestamp).
    pub fn all_samples(&self) -> Vec<KpiSample> {
        let inner = self.inner.read().expect("store lock poisoned");
        inner.series.values().flatten().cloned().collect()
    }

    pub fn series(&self, source_id: &str, id: &str) -> Vec<KpiSample> {
        let inner = self.inner.read().expect("store lock poisoned");
        inner
            .series
            .get(&(source_id.to_string(), id.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    /// Ids reported by a source.
    pub fn ids_of(&self, source_id: &str) -> Vec<String> {
        let inner = self.inner.read().expect("store lock poisoned");
        inner
            .series
            .keys()
            .filter(|(s, _)| s == source_id)
            .map(|(_, id)| id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::thread;

    use super::*;
    use crate::shellmon::KpiRecord;

    fn batch(seq: u64, ts: &[(&str, u64)]) -> KpiBatch {
        KpiBatch {
            source_id: "src".into(),
            batch_seq: seq,
            samples: ts
                .iter()
                .map(|(id, t)| KpiRecord {
                    id: id.to_string(),
                    ts_ms: *t,
                    values: [("latency".to_string(), *t as f64)].into(),
                })
                .collect(),
            partial: false,
        }
    }

    #[test]
    fn snapshot_takes_latest_before() {
        let store = KpiStore::new();
        for (i, t) in [10, 20, 30].iter().enumerate() {
            store.ingest(&batch(i as u64, &[("l", *t)])).unwrap();
        }
        let snap = store.snapshot(25);
        assert_eq!(snap.get("l").unwrap().ts_ms, 20);
        assert!(store.snapshot(5).is_empty());
        assert_eq!(store.snapshot(30).get("l").unwrap().ts_ms, 30);
    }

    #[test]
    fn duplicate_batches_are_idempotent() {
        let store = KpiStore::new();
        assert_eq!(
            store.ingest(&batch(1, &[("l", 10)])).unwrap(),
            IngestOutcome::Stored(1)
        );
        assert_eq!(
            store.ingest(&batch(1, &[("l", 10)])).unwrap(),
            IngestOutcome::Duplicate
        );
        assert_eq!(store.stats().samples, 1);
        assert_eq!(store.stats().duplicates, 1);
    }

    #[test]
    fn regressing_timestamp_is_discarded_and_counted() {
        let store = KpiStore::new();
        store.ingest(&batch(1, &[("l", 10)])).unwrap();
        assert!(matches!(
            store.ingest(&batch(2, &[("l", 10)])),
            Err(ShellmonError::MalformedBatch { .. })
        ));
        assert!(matches!(
            store.ingest(&batch(3, &[("l", 30), ("l", 20)])),
            Err(ShellmonError::MalformedBatch { .. })
        ));
        assert_eq!(store.stats().malformed, 2);
        assert_eq!(store.series("src", "l").len(), 1);
    }

    #[test]
    fn snapshot_under_concurrent_writes_is_a_consistent_prefix() {
        let store = Arc::new(KpiStore::new());
        let writer = {
            let store = store.clone();
            thread::spawn(move || {
                for seq in 1..=2000u64 {
                    // two ids per batch share a timestamp; a torn read would
                    // show them at different timestamps
                    store
                        .ingest(&batch(seq, &[("a", seq * 10), ("b", seq * 10)]))
                        .unwrap();
                }
            })
        };
        let mut checked = 0;
        while !writer.is_finished() || checked == 0 {
            let snap = store.snapshot(u64::MAX);
            if let (Some(a), Some(b)) = (snap.get("a"), snap.get("b")) {
                assert_eq!(a.ts_ms, b.ts_ms, "torn batch in snapshot");
            }
            let as_of = 7_000;
            let bounded = store.snapshot(as_of);
            assert!(bounded.iter().all(|(_, s)| s.ts_ms <= as_of));
            checked += 1;
        }
        writer.join().unwrap();
        assert_eq!(store.snapshot(u64::MAX).get("a").unwrap().ts_ms, 20_000);
    }
}
