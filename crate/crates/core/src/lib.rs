//! Application-layer Routing-as-a-Service.
//!
//! * [`graph`]: controller topologies, fusion through a pseudo-node and
//!   node-cost normalization.
//! * [`metric`]: the customizable cost function, rolling windows and
//!   Sharpe-ratio reliability.
//! * [`route`]: shortest-path-tree forests, route ranking, the sealed policy
//!   package and the route server.
//! * [`shellmon`]: pull/push telemetry collection into a KPI store.
//! * [`client`]: intents, controller adapters and topology deltas.
//! * [`netsim`]: the discrete-event network simulator behind the controllers.
//! * [`wire`]: TCP framing and services for the distributed mode.
//! * [`pipeline`]: the end-to-end harness that produces run reports.

pub mod client;
pub mod ext;
pub mod graph;
pub mod metric;
pub mod netsim;
pub mod pipeline;
pub mod route;
pub mod shellmon;
pub mod wire;
