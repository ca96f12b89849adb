//! Socket transports for running the client, the route server, telemetry
//! and the controllers as separate endpoints.
//!
//! Framing over TCP, one request per exchange:
//!
//! ```text
//! request:  <VERB> <path>[?k=v&...] <len>\n<len bytes of body>
//! response: ok <len>\n<body>  |  err <len>\n{"code":..,"message":..}
//! ```
//!
//! A connection may carry any number of exchanges.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::client::{
    AdapterError, ControllerAdapter, ControllerEndpoint, ControllerSection, RouteTransport,
    TransportError,
};
use crate::route::{RouteServer, TopologyDelta};
use crate::shellmon::{
    decode_batch, serve_poll, Agent, HostRecord, KpiBatch, MessageBus, PollRequest, PollTransport,
    ShellmonError,
};

/// Largest accepted body.
pub const MAX_BODY: usize = 256 << 20;

/// An error answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub code: String,
    pub message: String,
}

impl Fault {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Fault {
            code: code.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub verb: String,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn param(&self, key: &str) -> Result<&str, Fault> {
        self.query
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Fault::new("BadRequest", format!("missing parameter {key}")))
    }

    pub fn param_u64(&self, key: &str) -> Result<u64, Fault> {
        self.param(key)?
            .parse()
            .map_err(|_| Fault::new("BadRequest", format!("parameter {key} is not an integer")))
    }
}

fn bad_frame(msg: impl Into<String>) -> io::Error {
    io::Error::new(ErrorKind::InvalidData, msg.into())
}

fn read_header(r: &mut impl BufRead) -> io::Result<Option<String>> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    if !line.ends_with('\n') {
        return Err(bad_frame("truncated header"));
    }
    line.pop();
    Ok(Some(line))
}

fn read_body(r: &mut impl Read, len: &str) -> io::Result<Vec<u8>> {
    let len: usize = len.parse().map_err(|_| bad_frame("bad length"))?;
    if len > MAX_BODY {
        return Err(bad_frame("body too large"));
    }
    let mut body = vec![0; len];
    r.read_exact(&mut body)?;
    Ok(body)
}

fn parse_target(target: &str) -> (String, BTreeMap<String, String>) {
    let (path, q) = target.split_once('?').unwrap_or((target, ""));
    let query = q
        .split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            (k.to_string(), v.to_string())
        })
        .collect();
    (path.to_string(), query)
}

pub fn read_request(r: &mut impl BufRead) -> io::Result<Option<Request>> {
    let Some(header) = read_header(r)? else {
        return Ok(None);
    };
    let parts: Vec<&str> = header.split(' ').collect();
    let [verb, target, len] = parts[..] else {
        return Err(bad_frame(format!("bad request line {header:?}")));
    };
    let body = read_body(r, len)?;
    let (path, query) = parse_target(target);
    Ok(Some(Request {
        verb: verb.to_string(),
        path,
        query,
        body,
    }))
}

pub fn write_request(w: &mut impl Write, verb: &str, target: &str, body: &[u8]) -> io::Result<()> {
    write!(w, "{verb} {target} {}\n", body.len())?;
    w.write_all(body)?;
    w.flush()
}

pub fn write_response(w: &mut impl Write, r: &Result<Vec<u8>, Fault>) -> io::Result<()> {
    let (status, body) = match r {
        Ok(b) => ("ok", b.clone()),
        Err(f) => ("err", serde_json::to_vec(f).expect("fault serializes")),
    };
    write!(w, "{status} {}\n", body.len())?;
    w.write_all(&body)?;
    w.flush()
}

pub fn read_response(r: &mut impl BufRead) -> io::Result<Result<Vec<u8>, Fault>> {
    let header = read_header(r)?
        .ok_or_else(|| io::Error::new(ErrorKind::UnexpectedEof, "connection closed"))?;
    let (status, len) = header
        .split_once(' ')
        .ok_or_else(|| bad_frame("bad status line"))?;
    let body = read_body(r, len)?;
    match status {
        "ok" => Ok(Ok(body)),
        "err" => serde_json::from_slice(&body)
            .map(Err)
            .map_err(|e| bad_frame(e.to_string())),
        other => Err(bad_frame(format!("bad status {other}"))),
    }
}

pub type Handler = Arc<dyn Fn(&Request) -> Result<Vec<u8>, Fault> + Send + Sync>;

/// A listening endpoint on the loopback interface. Dropping it stops the
/// accept loop.
pub struct WireServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl WireServer {
    pub fn bind(handler: Handler) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let accept = thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let h = Arc::clone(&handler);
                        thread::spawn(move || serve_connection(stream, h));
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        });
        debug!("listening on {addr}");
        Ok(WireServer {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for WireServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve_connection(stream: TcpStream, handler: Handler) {
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    loop {
        match read_request(&mut reader) {
            Ok(Some(req)) => {
                let r = handler(&req);
                if write_response(&mut writer, &r).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = write_response(&mut writer, &Err(Fault::new("BadFrame", e.to_string())));
                let _ = writer.shutdown(Shutdown::Both);
                return;
            }
        }
    }
}

#[derive(Debug)]
pub enum CallError {
    Unreachable(String),
    Timeout,
    Io(String),
}

/// One request-response exchange on a fresh connection.
pub fn call(
    addr: &str,
    verb: &str,
    target: &str,
    body: &[u8],
    timeout: Option<Duration>,
) -> Result<Result<Vec<u8>, Fault>, CallError> {
    let stream =
        TcpStream::connect(addr).map_err(|e| CallError::Unreachable(format!("{addr}: {e}")))?;
    stream
        .set_read_timeout(timeout)
        .map_err(|e| CallError::Io(e.to_string()))?;
    let mut writer = stream
        .try_clone()
        .map_err(|e| CallError::Io(e.to_string()))?;
    write_request(&mut writer, verb, target, body)
        .map_err(|e| CallError::Unreachable(e.to_string()))?;
    let mut reader = BufReader::new(stream);
    read_response(&mut reader).map_err(|e| match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => CallError::Timeout,
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset => {
            CallError::Unreachable(e.to_string())
        }
        _ => CallError::Io(e.to_string()),
    })
}

// ---------------------------------------------------------------------------
// Route server
// ---------------------------------------------------------------------------

fn route_result(
    r: Result<crate::route::RouteResponse, crate::route::RouteError>,
) -> Result<Vec<u8>, Fault> {
    r.map(|resp| serde_json::to_vec(&resp).expect("response serializes"))
        .map_err(|e| Fault::new(e.code(), e.to_string()))
}

/// `POST /route_request?as_of=`, `POST /refresh?intent=&as_of=`,
/// `POST /delta?intent=&as_of=`.
pub fn route_service(server: Arc<RouteServer>) -> Handler {
    Arc::new(move |req| {
        let as_of = req.param_u64("as_of")?;
        match req.path.as_str() {
            "/route_request" => route_result(server.route_request(&req.body, as_of)),
            "/refresh" => route_result(server.refresh(req.param("intent")?, as_of)),
            "/delta" => {
                let delta: TopologyDelta = serde_json::from_slice(&req.body)
                    .map_err(|e| Fault::new("BadRequest", e.to_string()))?;
                route_result(server.delta(req.param("intent")?, &delta, as_of))
            }
            other => Err(Fault::new("NotFound", other)),
        }
    })
}

/// Client side of [`route_service`].
#[derive(Debug, Clone)]
pub struct TcpRouteTransport {
    pub addr: String,
    pub timeout: Option<Duration>,
}

impl TcpRouteTransport {
    fn exchange(&self, target: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        match call(&self.addr, "POST", target, body, self.timeout) {
            Ok(Ok(b)) => Ok(b),
            Ok(Err(f)) => Err(TransportError::Remote {
                code: f.code,
                message: f.message,
            }),
            Err(CallError::Timeout) => Err(TransportError::Timeout),
            Err(CallError::Unreachable(m)) | Err(CallError::Io(m)) => {
                Err(TransportError::Unreachable(m))
            }
        }
    }
}

impl RouteTransport for TcpRouteTransport {
    fn route_request(&self, wire: &[u8], as_of: u64) -> Result<Vec<u8>, TransportError> {
        self.exchange(&format!("/route_request?as_of={as_of}"), wire)
    }

    fn refresh(&self, intent_id: &str, as_of: u64) -> Result<Vec<u8>, TransportError> {
        self.exchange(&format!("/refresh?intent={intent_id}&as_of={as_of}"), &[])
    }

    fn delta(
        &self,
        intent_id: &str,
        delta: &TopologyDelta,
        as_of: u64,
    ) -> Result<Vec<u8>, TransportError> {
        let body = serde_json::to_vec(delta).expect("delta serializes");
        self.exchange(&format!("/delta?intent={intent_id}&as_of={as_of}"), &body)
    }
}

// ---------------------------------------------------------------------------
// Controller management
// ---------------------------------------------------------------------------

fn endpoint_for(controller: &str) -> ControllerEndpoint {
    ControllerEndpoint {
        controller_id: controller.to_string(),
        kind: crate::client::ControllerKind::Sdn,
        address: String::new(),
        credentials: String::new(),
    }
}

/// `GET /topology?controller=`, `POST /install?controller=` in front of any
/// adapter (the simulator in practice).
pub fn controller_service(adapter: Arc<dyn ControllerAdapter>) -> Handler {
    Arc::new(move |req| {
        let ep = endpoint_for(req.param("controller")?);
        let fault = |e: AdapterError| match e {
            AdapterError::Unreachable(m) => Fault::new("Unreachable", m),
            AdapterError::Rejected(m) => Fault::new("Rejected", m),
        };
        match req.path.as_str() {
            "/topology" => adapter
                .fetch_topology(&ep)
                .map(String::into_bytes)
                .map_err(fault),
            "/install" => {
                let section: ControllerSection = serde_json::from_slice(&req.body)
                    .map_err(|e| Fault::new("BadRequest", e.to_string()))?;
                adapter
                    .install(&ep, &section)
                    .map(|_| Vec::new())
                    .map_err(fault)
            }
            other => Err(Fault::new("NotFound", other)),
        }
    })
}

/// Client side of [`controller_service`]. Every controller is reached
/// through the one management address.
#[derive(Debug, Clone)]
pub struct TcpControllerAdapter {
    pub addr: String,
}

impl TcpControllerAdapter {
    fn exchange(&self, verb: &str, target: &str, body: &[u8]) -> Result<Vec<u8>, AdapterError> {
        match call(&self.addr, verb, target, body, None) {
            Ok(Ok(b)) => Ok(b),
            Ok(Err(f)) if f.code == "Unreachable" => Err(AdapterError::Unreachable(f.message)),
            Ok(Err(f)) => Err(AdapterError::Rejected(f.message)),
            Err(CallError::Timeout) => Err(AdapterError::Unreachable("timeout".into())),
            Err(CallError::Unreachable(m)) | Err(CallError::Io(m)) => {
                Err(AdapterError::Unreachable(m))
            }
        }
    }
}

impl ControllerAdapter for TcpControllerAdapter {
    fn fetch_topology(&self, ep: &ControllerEndpoint) -> Result<String, AdapterError> {
        let b = self.exchange(
            "GET",
            &format!("/topology?controller={}", ep.controller_id),
            &[],
        )?;
        String::from_utf8(b).map_err(|e| AdapterError::Rejected(e.to_string()))
    }

    fn install(
        &self,
        ep: &ControllerEndpoint,
        section: &ControllerSection,
    ) -> Result<(), AdapterError> {
        let body = serde_json::to_vec(section).expect("section serializes");
        self.exchange(
            "POST",
            &format!("/install?controller={}", ep.controller_id),
            &body,
        )
        .map(|_| ())
    }
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

fn shellmon_fault(e: &ShellmonError) -> Fault {
    let code = match e {
        ShellmonError::HostUnreachable(_) => "HostUnreachable",
        ShellmonError::DeviceReadFailure(_) => "DeviceReadFailure",
        ShellmonError::BusUnreachable => "BusUnreachable",
        _ => "TelemetryError",
    };
    Fault::new(code, e.to_string())
}

/// `POST /poll?source=` for a set of agents hosted behind one address.
pub fn agent_service(agents: BTreeMap<String, Arc<Mutex<Agent>>>) -> Handler {
    Arc::new(move |req| {
        if req.path != "/poll" {
            return Err(Fault::new("NotFound", req.path.clone()));
        }
        let source = req.param("source")?;
        let agent = agents
            .get(source)
            .ok_or_else(|| Fault::new("HostUnreachable", source))?;
        let poll: PollRequest = serde_json::from_slice(&req.body)
            .map_err(|e| Fault::new("BadRequest", e.to_string()))?;
        serve_poll(agent, &poll).map_err(|e| shellmon_fault(&e))
    })
}

/// Pull transport reaching each host at its registry `hostname:port`.
#[derive(Debug, Clone, Default)]
pub struct TcpPoll;

impl PollTransport for TcpPoll {
    fn poll(&self, host: &HostRecord, req: &PollRequest) -> Result<KpiBatch, ShellmonError> {
        let addr = format!("{}:{}", host.hostname, host.port);
        let body = serde_json::to_vec(req).expect("poll request serializes");
        let target = format!("/poll?source={}", host.source_id);
        match call(&addr, "POST", &target, &body, Some(Duration::from_secs(30))) {
            Ok(Ok(bytes)) => decode_batch(&host.source_id, &bytes),
            Ok(Err(f)) => Err(match f.code.as_str() {
                "HostUnreachable" => ShellmonError::HostUnreachable(host.source_id.clone()),
                "DeviceReadFailure" => ShellmonError::DeviceReadFailure(host.source_id.clone()),
                _ => ShellmonError::MalformedBatch {
                    source_id: host.source_id.clone(),
                    reason: f.message,
                },
            }),
            Err(_) => Err(ShellmonError::HostUnreachable(host.source_id.clone())),
        }
    }
}

/// `POST /publish?topic=` forwarding payloads onto a bus.
pub fn bus_service(bus: Arc<MessageBus>) -> Handler {
    Arc::new(move |req| {
        if req.path != "/publish" {
            return Err(Fault::new("NotFound", req.path.clone()));
        }
        let topic = req.param("topic")?;
        bus.publish(topic, req.body.clone())
            .map(|n| n.to_string().into_bytes())
            .map_err(|e| shellmon_fault(&e))
    })
}

/// Agent side of [`bus_service`].
#[derive(Debug, Clone)]
pub struct TcpPublisher {
    pub addr: String,
}

impl TcpPublisher {
    pub fn publish_batch(&self, domain: &str, batch: &KpiBatch) -> Result<(), ShellmonError> {
        let body = serde_json::to_vec(batch).expect("batch serializes");
        let topic = crate::shellmon::topic_for(domain, &batch.source_id);
        match call(
            &self.addr,
            "POST",
            &format!("/publish?topic={topic}"),
            &body,
            None,
        ) {
            Ok(Ok(_)) => Ok(()),
            _ => Err(ShellmonError::BusUnreachable),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientConfig, LocalTransport, RouteIntent};
    use crate::graph::NodeId;
    use crate::route::ServerConfig;

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_request(&mut buf, "POST", "/delta?intent=i1&as_of=5", b"{\"x\":1}").unwrap();
        write_request(&mut buf, "GET", "/topology?controller=c1", b"").unwrap();
        let mut r = BufReader::new(&buf[..]);
        let a = read_request(&mut r).unwrap().unwrap();
        assert_eq!(a.path, "/delta");
        assert_eq!(a.param("intent").unwrap(), "i1");
        assert_eq!(a.param_u64("as_of").unwrap(), 5);
        assert_eq!(a.body, b"{\"x\":1}");
        let b = read_request(&mut r).unwrap().unwrap();
        assert_eq!((b.verb.as_str(), b.body.len()), ("GET", 0));
        assert!(read_request(&mut r).unwrap().is_none());

        let mut out = Vec::new();
        write_response(&mut out, &Ok(b"hello".to_vec())).unwrap();
        write_response(&mut out, &Err(Fault::new("ChecksumMismatch", "bad"))).unwrap();
        let mut r = BufReader::new(&out[..]);
        assert_eq!(read_response(&mut r).unwrap(), Ok(b"hello".to_vec()));
        assert_eq!(
            read_response(&mut r).unwrap(),
            Err(Fault::new("ChecksumMismatch", "bad"))
        );
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut r = BufReader::new(&b"POST /x 10\nabc"[..]);
        assert!(read_request(&mut r).is_err());
        let mut r = BufReader::new(&b"POST /x\n"[..]);
        assert!(read_request(&mut r).is_err());
    }

    fn intent() -> RouteIntent {
        serde_json::from_str(
            r#"{"intent_id":"w","controllers":[{"controller_id":"c1","kind":"sdn","address":"x:1"}],
            "metric":{"name":"lat","kind":"weighted_sum","attributes":["latency"],"weights":[1.0],"transforms":["identity"]},
            "algorithm":"spf","pseudo_cost":10}"#,
        )
        .unwrap()
    }

    #[test]
    fn socket_and_local_transports_agree() {
        let doc = crate::client::tests::doc(
            "c1",
            &[("a", "b", 1.0), ("b", "c", 2.0), ("a", "c", 4.0)],
            None,
        );
        let topo = crate::graph::ControllerTopology::from_document(&doc).unwrap();
        let pkg = crate::client::build_policy(&intent(), &[topo]).unwrap();

        let remote = WireServer::bind(route_service(Arc::new(RouteServer::new(
            ServerConfig::default(),
            None,
        ))))
        .unwrap();
        let tcp = TcpRouteTransport {
            addr: remote.addr().to_string(),
            timeout: Some(Duration::from_secs(5)),
        };
        let local = LocalTransport(Arc::new(RouteServer::new(ServerConfig::default(), None)));
        let a = tcp.route_request(&pkg.to_bytes(), 7).unwrap();
        let b = local.route_request(&pkg.to_bytes(), 7).unwrap();
        assert_eq!(a, b);

        let delta = TopologyDelta::LinkRemoved {
            link: crate::graph::LinkId::new("c1:l1"),
        };
        assert_eq!(
            tcp.delta("w", &delta, 8).unwrap(),
            local.delta("w", &delta, 8).unwrap()
        );

        let mut corrupt = pkg.to_bytes();
        corrupt[3] ^= 1;
        assert!(matches!(
            tcp.route_request(&corrupt, 0),
            Err(TransportError::Remote { code, .. }) if code == "ChecksumMismatch"
        ));
        assert!(matches!(
            tcp.refresh("nope", 0),
            Err(TransportError::Remote { code, .. }) if code == "UnknownIntent"
        ));
        let resp =
            crate::client::request_routes(&ClientConfig::default(), Arc::new(tcp), &pkg).unwrap();
        let ac = resp
            .pair(
                &NodeId::parse("c1:a").unwrap(),
                &NodeId::parse("c1:c").unwrap(),
            )
            .unwrap();
        assert_eq!(ac.routes[0].cost, 3.0);
    }

    #[test]
    fn closed_port_is_unreachable() {
        let addr = {
            let s = WireServer::bind(Arc::new(|_: &Request| Ok(Vec::new()))).unwrap();
            s.addr().to_string()
        };
        let tcp = TcpRouteTransport {
            addr,
            timeout: None,
        };
        assert!(matches!(
            tcp.route_request(b"x", 0),
            Err(TransportError::Unreachable(_))
        ));
    }
}
