use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{
    Agent, ConnectionMode, HostRecord, HostRegistry, IngestOutcome, KpiBatch, KpiStore,
    ShellmonError,
};

/// Body of a `/poll` request. The poll carries the collector's clock so
/// simulated agents stamp samples with logical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollRequest {
    pub at_ms: u64,
}

/// Request-response telemetry transport (pull mode).
pub trait PollTransport: Send + Sync {
    fn poll(&self, host: &HostRecord, req: &PollRequest) -> Result<KpiBatch, ShellmonError>;
}

/// In-process request-response transport. Batches go through their JSON
/// wire form exactly as they would over a socket.
#[derive(Debug, Default, Clone)]
pub struct LoopbackPoll {
    agents: BTreeMap<String, Arc<Mutex<Agent>>>,
}

impl LoopbackPoll {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, agent: Arc<Mutex<Agent>>) {
        let id = agent.lock().expect("agent lock").source_id().to_string();
        self.agents.insert(id, agent);
    }
}

/// Runs the agent's cycle for one poll and returns the wire bytes.
pub(crate) fn serve_poll(
    agent: &Mutex<Agent>,
    req: &PollRequest,
) -> Result<Vec<u8>, ShellmonError> {
    let mut agent = agent.lock().expect("agent lock");
    if !agent.is_up() {
        return Err(ShellmonError::HostUnreachable(
            agent.source_id().to_string(),
        ));
    }
    let batch = agent.collect_cycle(req.at_ms)?;
    Ok(serde_json::to_vec(&batch).expect("batch serializes"))
}

pub(crate) fn decode_batch(source_id: &str, bytes: &[u8]) -> Result<KpiBatch, ShellmonError> {
    serde_json::from_slice(bytes).map_err(|e| ShellmonError::MalformedBatch {
        source_id: source_id.to_string(),
        reason: e.to_string(),
    })
}

impl PollTransport for LoopbackPoll {
    fn poll(&self, host: &HostRecord, req: &PollRequest) -> Result<KpiBatch, ShellmonError> {
        let agent = self
            .agents
            .get(&host.source_id)
            .ok_or_else(|| ShellmonError::HostUnreachable(host.source_id.clone()))?;
        let bytes = serve_poll(agent, req)?;
        decode_batch(&host.source_id, &bytes)
    }
}

/// `telemetry.<domain>.<source_id>`
pub fn topic_for(domain: &str, source_id: &str) -> String {
    format!("telemetry.{domain}.{source_id}")
}

fn topic_matches(pattern: &str, topic: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => topic.starts_with(prefix),
        None => pattern == topic,
    }
}

struct SubEntry {
    topics: Vec<String>,
    tx: Sender<(String, Vec<u8>)>,
    pending: Arc<AtomicUsize>,
}

#[derive(Default)]
struct BusInner {
    closed: bool,
    subs: Vec<SubEntry>,
}

/// In-process publish-subscribe bus. Delivery per subscriber is FIFO, so
/// batches from one source arrive in publish order.
#[derive(Default)]
pub struct MessageBus {
    inner: Mutex<BusInner>,
}

impl std::fmt::Debug for MessageBus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.lock().expect("bus lock");
        f.debug_struct("MessageBus")
            .field("closed", &inner.closed)
            .field("subscribers", &inner.subs.len())
            .finish()
    }
}

impl MessageBus {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Returns the number of subscribers the message was delivered to.
    pub fn publish(&self, topic: &str, payload: Vec<u8>) -> Result<usize, ShellmonError> {
        let mut inner = self.inner.lock().expect("bus lock");
        if inner.closed {
            return Err(ShellmonError::BusUnreachable);
        }
        let mut delivered = 0;
        inner.subs.retain(|s| {
            if !s.topics.iter().any(|p| topic_matches(p, topic)) {
                return true;
            }
            s.pending.fetch_add(1, Ordering::SeqCst);
            if s.tx.send((topic.to_string(), payload.clone())).is_ok() {
                delivered += 1;
                true
            } else {
                false
            }
        });
        Ok(delivered)
    }

    pub fn publish_batch(&self, domain: &str, batch: &KpiBatch) -> Result<usize, ShellmonError> {
        let payload = serde_json::to_vec(batch).expect("batch serializes");
        self.publish(&topic_for(domain, &batch.source_id), payload)
    }

    pub fn subscribe(&self, topics: &[String]) -> Result<Subscription, ShellmonError> {
        let mut inner = self.inner.lock().expect("bus lock");
        if inner.closed {
            return Err(ShellmonError::BusUnreachable);
        }
        let (tx, rx) = mpsc::channel();
        let pending = Arc::new(AtomicUsize::new(0));
        inner.subs.push(SubEntry {
            topics: topics.to_vec(),
            tx,
            pending: pending.clone(),
        });
        Ok(Subscription { rx, pending })
    }

    pub fn close(&self) {
        let mut inner = self.inner.lock().expect("bus lock");
        inner.closed = true;
        inner.subs.clear();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrainReport {
    pub stored: usize,
    pub duplicates: usize,
    pub malformed: usize,
}

/// Consumer side of a bus subscription.
#[derive(Debug)]
pub struct Subscription {
    rx: Receiver<(String, Vec<u8>)>,
    pending: Arc<AtomicUsize>,
}

impl Subscription {
    /// Messages published but not yet consumed.
    pub fn lag(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    /// Next decoded batch without blocking. Malformed payloads decode to an error.
    pub fn try_next(&self) -> Option<Result<KpiBatch, ShellmonError>> {
        match self.rx.try_recv() {
            Ok((topic, payload)) => {
                self.pending.fetch_sub(1, Ordering::SeqCst);
                let source = topic.rsplit('.').next().unwrap_or("").to_string();
                Some(decode_batch(&source, &payload))
            }
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => None,
        }
    }

    /// Consumes everything currently queued into the store.
    pub fn drain_into(&self, store: &KpiStore) -> DrainReport {
        let mut report = DrainReport::default();
        while let Some(next) = self.try_next() {
            match next.and_then(|b| store.ingest(&b)) {
                Ok(IngestOutcome::Stored(_)) => report.stored += 1,
                Ok(IngestOutcome::Duplicate) => report.duplicates += 1,
                Err(e) => {
                    warn!("dropping pushed batch: {e}");
                    report.malformed += 1;
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellMonConfig {
    pub domain: String,
    pub poll_interval_ms: u64,
    pub liveness_threshold: u32,
}

impl Default for ShellMonConfig {
    fn default() -> Self {
        ShellMonConfig {
            domain: "iraas".into(),
            poll_interval_ms: 1000,
            liveness_threshold: 3,
        }
    }
}

/// The collecting server: host registry with liveness, pull collectors and
/// bus consumers feeding one store.
#[derive(Debug)]
pub struct ShellMon {
    config: ShellMonConfig,
    registry: Mutex<HostRegistry>,
    store: Arc<KpiStore>,
}

impl ShellMon {
    pub fn new(config: ShellMonConfig, registry: HostRegistry) -> Self {
        ShellMon {
            config,
            registry: Mutex::new(registry),
            store: Arc::new(KpiStore::new()),
        }
    }

    pub fn config(&self) -> &ShellMonConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<KpiStore> {
        &self.store
    }

    pub fn registry(&self) -> HostRegistry {
        self.registry.lock().expect("registry lock").clone()
    }

    pub fn is_down(&self, source_id: &str) -> bool {
        self.registry
            .lock()
            .expect("registry lock")
            .is_down(source_id)
    }

    /// Polls one pull host and stores its batch. Transport failures count
    /// towards the liveness threshold; a successful poll resets it.
    pub fn poll_once(
        &self,
        source_id: &str,
        transport: &dyn PollTransport,
        at_ms: u64,
    ) -> Result<KpiBatch, ShellmonError> {
        let host = self
            .registry
            .lock()
            .expect("registry lock")
            .get(source_id)
            .cloned()
            .ok_or_else(|| ShellmonError::UnknownSource(source_id.to_string()))?;
        if host.connection_mode != ConnectionMode::Pull {
            return Err(ShellmonError::WrongMode(host.source_id, "pull"));
        }
        match transport.poll(&host, &PollRequest { at_ms }) {
            Ok(batch) => {
                self.registry
                    .lock()
                    .expect("registry lock")
                    .record_success(source_id);
                if batch.source_id != host.source_id {
                    return Err(ShellmonError::MalformedBatch {
                        source_id: host.source_id,
                        reason: format!("batch claims source {}", batch.source_id),
                    });
                }
                self.store.ingest(&batch)?;
                Ok(batch)
            }
            Err(e @ ShellmonError::HostUnreachable(_)) => {
                let newly_down = self
                    .registry
                    .lock()
                    .expect("registry lock")
                    .record_miss(source_id, self.config.liveness_threshold);
                if newly_down {
                    warn!("host {source_id} marked down");
                }
                Err(e)
            }
            Err(e) => Err(e),
        }
    }

    /// One poll round over every pull host, one collector thread per host.
    /// Results come back in source_id order.
    pub fn poll_all(
        &self,
        transport: &dyn PollTransport,
        at_ms: u64,
    ) -> Vec<(String, Result<KpiBatch, ShellmonError>)> {
        let ids: Vec<String> = self
            .registry()
            .hosts()
            .filter(|h| h.connection_mode == ConnectionMode::Pull)
            .map(|h| h.source_id.clone())
            .collect();
        thread::scope(|s| {
            let handles: Vec<_> = ids
                .iter()
                .map(|id| s.spawn(move || (id.clone(), self.poll_once(id, transport, at_ms))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("collector thread panicked"))
                .collect()
        })
    }

    /// Topics of every push host in the registry.
    pub fn push_topics(&self) -> Vec<String> {
        self.registry()
            .hosts()
            .filter(|h| h.connection_mode == ConnectionMode::Push)
            .map(|h| topic_for(&self.config.domain, &h.source_id))
            .collect()
    }

    pub fn run_subscription(
        &self,
        topics: &[String],
        bus: &MessageBus,
    ) -> Result<Subscription, ShellmonError> {
        debug!("subscribing to {} topics", topics.len());
        bus.subscribe(topics)
    }
}
