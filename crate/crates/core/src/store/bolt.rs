//! Minimal Bolt 4.x client: handshake, chunked framing, HELLO/RUN/PULL,
//! and failure recovery with RESET. Enough to drive parameterized Cypher
//! against Neo4j.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::packstream::{self, Decoder, Value};
use super::{GraphStore, StoreError};
use crate::model::{Edge, Node, NodeId, Orientation, PathSample};

pub const MAGIC: [u8; 4] = [0x60, 0x60, 0xB0, 0x17];
/// 4.4 with a range of 3 (4.4 down to 4.1), then nothing else.
pub const PROPOSALS: [[u8; 4]; 4] = [[0, 3, 4, 4], [0; 4], [0; 4], [0; 4]];

pub const HELLO: u8 = 0x01;
pub const GOODBYE: u8 = 0x02;
pub const RESET: u8 = 0x0F;
pub const RUN: u8 = 0x10;
pub const PULL: u8 = 0x3F;
pub const SUCCESS: u8 = 0x70;
pub const RECORD: u8 = 0x71;
pub const IGNORED: u8 = 0x7E;
pub const FAILURE: u8 = 0x7F;

pub const DEFAULT_PORT: u16 = 7687;

pub const CLEAR: &str = "MATCH (n:KgNode) DETACH DELETE n";
pub const CREATE_NODE: &str = "MERGE (n:KgNode {id: $id}) SET n += $props";
pub const CREATE_EDGE: &str =
    "MATCH (a:KgNode {id: $head}), (b:KgNode {id: $tail}) MERGE (a)-[:REL {label: $label}]->(b)";
pub const ALL_NODES: &str = "MATCH (n:KgNode) RETURN properties(n) ORDER BY n.id";
pub const ALL_EDGES: &str =
    "MATCH (a:KgNode)-[r:REL]->(b:KgNode) RETURN a.id, r.label, b.id ORDER BY a.id, r.label, b.id";
const PATHS_HEAD: &str = "MATCH p = (a:KgNode {id: $id})-[:REL*";
const PATHS_TAIL: &str = "]->(:KgNode) RETURN [x IN nodes(p) | x.id], [r IN relationships(p) | r.label]";

/// Variable-length bounds cannot be parameters, so the hop count is
/// written into the statement.
pub fn paths_query(hops: usize) -> String {
    format!("{PATHS_HEAD}{hops}..{hops}{PATHS_TAIL}")
}

/// Hop count of a statement produced by [`paths_query`].
pub fn parse_paths_query(q: &str) -> Option<usize> {
    let range = q.strip_prefix(PATHS_HEAD)?.strip_suffix(PATHS_TAIL)?;
    let (lo, hi) = range.split_once("..")?;
    (lo == hi).then(|| lo.parse().ok()).flatten()
}

/// `bolt://host[:port]` or `neo4j://host[:port]`; TLS schemes are refused.
pub fn parse_uri(uri: &str) -> Result<(String, u16), StoreError> {
    let (scheme, rest) = uri.split_once("://").ok_or_else(|| StoreError::Config(format!("not a URI: {uri}")))?;
    match scheme {
        "bolt" | "neo4j" => {}
        "bolt+s" | "bolt+ssc" | "neo4j+s" | "neo4j+ssc" => {
            return Err(StoreError::Config(format!("{scheme}:// needs TLS, which this client does not support")));
        }
        _ => return Err(StoreError::Config(format!("unsupported scheme {scheme}://"))),
    }
    let authority = rest.split(['/', '?']).next().unwrap_or("");
    let bad_port = || StoreError::Config(format!("bad port in {uri}"));
    let (host, port) = match authority.strip_prefix('[') {
        Some(v6) => {
            let (h, after) = v6.split_once(']').ok_or_else(|| StoreError::Config(format!("unclosed [ in {uri}")))?;
            match after.strip_prefix(':') {
                Some(p) => (h, p.parse().map_err(|_| bad_port())?),
                None if after.is_empty() => (h, DEFAULT_PORT),
                None => return Err(bad_port()),
            }
        }
        None => match authority.split_once(':') {
            Some((h, p)) => (h, p.parse().map_err(|_| bad_port())?),
            None => (authority, DEFAULT_PORT),
        },
    };
    if host.is_empty() {
        return Err(StoreError::Config(format!("no host in {uri}")));
    }
    Ok((host.to_string(), port))
}

fn protocol(msg: impl Into<String>) -> StoreError {
    StoreError::Protocol(msg.into())
}

/// Writes one message as chunks followed by the zero-length terminator.
pub fn write_message(w: &mut impl Write, tag: u8, fields: Vec<Value>) -> Result<(), StoreError> {
    let mut body = Vec::new();
    packstream::encode(&Value::Struct { tag, fields }, &mut body).map_err(|e| protocol(e.to_string()))?;
    let mut framed = Vec::with_capacity(body.len() + 4);
    for chunk in body.chunks(u16::MAX as usize) {
        framed.extend((chunk.len() as u16).to_be_bytes());
        framed.extend(chunk);
    }
    framed.extend([0, 0]);
    w.write_all(&framed)?;
    w.flush()?;
    Ok(())
}

/// Reads one message, skipping empty keep-alive frames.
pub fn read_message(r: &mut impl Read) -> Result<(u8, Vec<Value>), StoreError> {
    let mut body = Vec::new();
    loop {
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        let n = u16::from_be_bytes(head) as usize;
        if n == 0 {
            if body.is_empty() {
                continue;
            }
            break;
        }
        let start = body.len();
        body.resize(start + n, 0);
        r.read_exact(&mut body[start..])?;
    }
    let mut d = Decoder::new(&body);
    match d.value().map_err(|e| protocol(e.to_string()))? {
        Value::Struct { tag, fields } if d.is_done() => Ok((tag, fields)),
        other => Err(protocol(format!("expected a message structure, got {other:?}"))),
    }
}

fn failure(fields: &[Value]) -> (String, String) {
    let meta = fields.first().and_then(Value::as_map);
    let get = |k: &str| meta.and_then(|m| m.get(k)).and_then(Value::as_str).unwrap_or("").to_string();
    (get("code"), get("message"))
}

pub struct BoltClient {
    stream: TcpStream,
    pub version: (u8, u8),
}

impl BoltClient {
    pub fn connect(uri: &str, user: &str, pass: &str, timeout: Duration) -> Result<Self, StoreError> {
        let (host, port) = parse_uri(uri)?;
        let addr = (host.as_str(), port)
            .to_socket_addrs()
            .map_err(|e| StoreError::Connect(format!("{host}:{port}: {e}")))?
            .next()
            .ok_or_else(|| StoreError::Connect(format!("{host}:{port} did not resolve")))?;
        let mut stream =
            TcpStream::connect_timeout(&addr, timeout).map_err(|e| StoreError::Connect(format!("{addr}: {e}")))?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let mut hs = MAGIC.to_vec();
        for p in PROPOSALS {
            hs.extend(p);
        }
        stream.write_all(&hs)?;
        let mut chosen = [0u8; 4];
        stream.read_exact(&mut chosen)?;
        if chosen == [0; 4] {
            return Err(StoreError::Connect("server supports none of the offered Bolt versions".into()));
        }
        let mut client = BoltClient { stream, version: (chosen[3], chosen[2]) };
        let auth = BTreeMap::from([
            ("user_agent".to_string(), Value::from(concat!("knight/", env!("CARGO_PKG_VERSION")))),
            ("scheme".to_string(), Value::from("basic")),
            ("principal".to_string(), Value::from(user)),
            ("credentials".to_string(), Value::from(pass)),
        ]);
        write_message(&mut client.stream, HELLO, vec![Value::Map(auth)])?;
        match read_message(&mut client.stream)? {
            (SUCCESS, _) => Ok(client),
            (FAILURE, f) => {
                let (code, message) = failure(&f);
                if code.contains("Security") {
                    Err(StoreError::Auth(message))
                } else {
                    Err(StoreError::Query { code, message })
                }
            }
            (tag, _) => Err(protocol(format!("unexpected reply 0x{tag:02X} to HELLO"))),
        }
    }

    fn reset(&mut self) -> Result<(), StoreError> {
        write_message(&mut self.stream, RESET, vec![])?;
        loop {
            match read_message(&mut self.stream)? {
                (SUCCESS, _) => return Ok(()),
                (IGNORED, _) => continue,
                (tag, _) => return Err(protocol(format!("unexpected reply 0x{tag:02X} to RESET"))),
            }
        }
    }

    /// Runs one statement and pulls every record.
    pub fn run(&mut self, query: &str, params: BTreeMap<String, Value>) -> Result<Vec<Vec<Value>>, StoreError> {
        write_message(&mut self.stream, RUN, vec![query.into(), Value::Map(params), Value::Map(BTreeMap::new())])?;
        let pull = BTreeMap::from([("n".to_string(), Value::Int(-1))]);
        write_message(&mut self.stream, PULL, vec![Value::Map(pull)])?;
        let mut failed = None;
        match read_message(&mut self.stream)? {
            (SUCCESS, _) => {}
            (FAILURE, f) => failed = Some(failure(&f)),
            (tag, _) => return Err(protocol(format!("unexpected reply 0x{tag:02X} to RUN"))),
        }
        let mut records = Vec::new();
        loop {
            match read_message(&mut self.stream)? {
                (RECORD, mut f) => match f.pop() {
                    Some(Value::List(row)) if failed.is_none() => records.push(row),
                    _ => return Err(protocol("RECORD without a field list")),
                },
                (SUCCESS, _) => break,
                (IGNORED, _) => break,
                (FAILURE, f) => {
                    failed = Some(failure(&f));
                    break;
                }
                (tag, _) => return Err(protocol(format!("unexpected reply 0x{tag:02X} to PULL"))),
            }
        }
        match failed {
            Some((code, message)) => {
                self.reset()?;
                Err(StoreError::Query { code, message })
            }
            None => Ok(records),
        }
    }

    pub fn close(mut self) -> Result<(), StoreError> {
        write_message(&mut self.stream, GOODBYE, vec![])
    }
}

fn params<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn int_field(v: &Value, what: &str) -> Result<i64, StoreError> {
    v.as_int().ok_or_else(|| protocol(format!("{what} is not an integer")))
}

fn node_id(v: &Value) -> Result<NodeId, StoreError> {
    let i = int_field(v, "node id")?;
    u32::try_from(i).map(NodeId).map_err(|_| protocol(format!("node id {i} out of range")))
}

/// Graph store backed by a Neo4j database over Bolt. Nodes are `:KgNode`
/// with their fields as properties; edges are `:REL {label}`.
pub struct BoltStore {
    client: BoltClient,
}

impl BoltStore {
    pub fn open(uri: &str, user: &str, pass: &str, timeout: Duration) -> Result<Self, StoreError> {
        Ok(BoltStore { client: BoltClient::connect(uri, user, pass, timeout)? })
    }

    pub fn close(self) -> Result<(), StoreError> {
        self.client.close()
    }
}

impl GraphStore for BoltStore {
    fn clear(&mut self) -> Result<(), StoreError> {
        self.client.run(CLEAR, BTreeMap::new()).map(|_| ())
    }

    fn create_node(&mut self, node: &Node) -> Result<(), StoreError> {
        let props = packstream::from_json(&serde_json::to_value(node)?);
        let p = params([("id", Value::Int(node.id.0 as i64)), ("props", props)]);
        self.client.run(CREATE_NODE, p).map(|_| ())
    }

    fn create_edge(&mut self, edge: &Edge) -> Result<(), StoreError> {
        let p = params([
            ("head", Value::Int(edge.head.0 as i64)),
            ("label", edge.relation.as_str().into()),
            ("tail", Value::Int(edge.tail.0 as i64)),
        ]);
        self.client.run(CREATE_EDGE, p).map(|_| ())
    }

    fn nodes(&mut self) -> Result<Vec<Node>, StoreError> {
        let rows = self.client.run(ALL_NODES, BTreeMap::new())?;
        rows.iter()
            .map(|r| {
                let v = r.first().ok_or_else(|| protocol("empty node row"))?;
                Ok(serde_json::from_value(packstream::to_json(v))?)
            })
            .collect()
    }

    fn edges(&mut self) -> Result<Vec<Edge>, StoreError> {
        let rows = self.client.run(ALL_EDGES, BTreeMap::new())?;
        rows.iter()
            .map(|r| match r.as_slice() {
                [h, l, t] => Ok(Edge {
                    head: node_id(h)?,
                    relation: l.as_str().ok_or_else(|| protocol("label is not a string"))?.to_string(),
                    tail: node_id(t)?,
                }),
                _ => Err(protocol("edge row needs three fields")),
            })
            .collect()
    }

    fn query_paths(&mut self, from: NodeId, hops: usize) -> Result<Vec<PathSample>, StoreError> {
        if hops == 0 {
            return Ok(Vec::new());
        }
        let rows = self.client.run(&paths_query(hops), params([("id", Value::Int(from.0 as i64))]))?;
        let mut out = Vec::new();
        for r in &rows {
            let [ids, labels] = r.as_slice() else {
                return Err(protocol("path row needs two fields"));
            };
            let node_ids = ids.as_list().ok_or_else(|| protocol("path ids"))?.iter().map(node_id).collect::<Result<_, _>>()?;
            let relations = labels
                .as_list()
                .ok_or_else(|| protocol("path labels"))?
                .iter()
                .map(|l| l.as_str().map(str::to_string).ok_or_else(|| protocol("label is not a string")))
                .collect::<Result<_, _>>()?;
            let p = PathSample { node_ids, relations, orientation: Orientation::Forward };
            // Cypher only forbids repeated relationships; keep simple paths.
            if p.is_simple() {
                out.push(p);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// An in-process Bolt server holding a graph in memory. It understands
/// exactly the statements [`BoltStore`] sends, which makes the client
/// testable without a database.
pub mod fake {
    use super::*;
    use std::collections::BTreeSet;
    use std::net::{SocketAddr, TcpListener};
    use std::sync::{Arc, Mutex};
    use std::thread;

    #[derive(Default)]
    struct Db {
        nodes: BTreeMap<i64, BTreeMap<String, Value>>,
        edges: BTreeSet<(i64, String, i64)>,
    }

    pub struct FakeServer {
        pub addr: SocketAddr,
    }

    impl FakeServer {
        /// Serves connections on a background thread until the process
        /// exits. Only `user`/`pass` are accepted.
        pub fn start(user: &str, pass: &str) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let db = Arc::new(Mutex::new(Db::default()));
            let creds = (user.to_string(), pass.to_string());
            thread::spawn(move || {
                for conn in listener.incoming().flatten() {
                    let db = Arc::clone(&db);
                    let creds = creds.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve(conn, &db, &creds) {
                            log::debug!("fake bolt connection ended: {e}");
                        }
                    });
                }
            });
            Ok(FakeServer { addr })
        }

        pub fn uri(&self) -> String {
            format!("bolt://{}", self.addr)
        }
    }

    fn meta(pairs: Vec<(&str, Value)>) -> Vec<Value> {
        vec![Value::Map(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())]
    }

    fn fail(code: &str, message: &str) -> Vec<Value> {
        meta(vec![("code", code.into()), ("message", message.into())])
    }

    fn serve(mut s: TcpStream, db: &Mutex<Db>, creds: &(String, String)) -> Result<(), StoreError> {
        let mut hs = [0u8; 20];
        s.read_exact(&mut hs)?;
        if hs[..4] != MAGIC {
            return Err(protocol("bad magic"));
        }
        let offers_44 = hs[4..].chunks(4).any(|p| p[3] == 4 && p[2] >= 4 && p[2].saturating_sub(p[1]) <= 4);
        s.write_all(if offers_44 { &[0, 0, 4, 4] } else { &[0; 4] })?;
        if !offers_44 {
            return Ok(());
        }
        let mut failed = false;
        let mut pending: Option<Result<Vec<Vec<Value>>, (String, String)>> = None;
        loop {
            let (tag, fields) = read_message(&mut s)?;
            match tag {
                HELLO => {
                    let m = fields.first().and_then(Value::as_map);
                    let get = |k: &str| m.and_then(|m| m.get(k)).and_then(Value::as_str).unwrap_or("").to_string();
                    if (get("principal"), get("credentials")) == *creds {
                        write_message(&mut s, SUCCESS, meta(vec![("server", "Fake/4.4".into())]))?;
                    } else {
                        write_message(&mut s, FAILURE, fail("Neo.ClientError.Security.Unauthorized", "bad credentials"))?;
                        return Ok(());
                    }
                }
                GOODBYE => return Ok(()),
                RESET => {
                    failed = false;
                    pending = None;
                    write_message(&mut s, SUCCESS, meta(vec![]))?;
                }
                _ if failed => write_message(&mut s, IGNORED, vec![])?,
                RUN => {
                    let query = fields.first().and_then(Value::as_str).unwrap_or("").to_string();
                    let params = fields.get(1).and_then(Value::as_map).cloned().unwrap_or_default();
                    let result = execute(&mut db.lock().expect("fake db lock"), &query, &params);
                    match result {
                        Ok(rows) => {
                            write_message(&mut s, SUCCESS, meta(vec![("fields", Value::List(vec![]))]))?;
                            pending = Some(Ok(rows));
                        }
                        Err((code, message)) => {
                            write_message(&mut s, FAILURE, fail(&code, &message))?;
                            failed = true;
                        }
                    }
                }
                PULL => {
                    for row in pending.take().and_then(Result::ok).unwrap_or_default() {
                        write_message(&mut s, RECORD, vec![Value::List(row)])?;
                    }
                    write_message(&mut s, SUCCESS, meta(vec![("has_more", false.into())]))?;
                }
                other => return Err(protocol(format!("fake server got 0x{other:02X}"))),
            }
        }
    }

    type Exec = Result<Vec<Vec<Value>>, (String, String)>;

    fn execute(db: &mut Db, query: &str, params: &BTreeMap<String, Value>) -> Exec {
        let int = |k: &str| {
            params.get(k).and_then(Value::as_int).ok_or_else(|| ("Neo.ClientError.Statement.ParameterMissing".to_string(), k.to_string()))
        };
        match query {
            CLEAR => {
                db.nodes.clear();
                db.edges.clear();
                Ok(vec![])
            }
            CREATE_NODE => {
                let id = int("id")?;
                let props = params.get("props").and_then(Value::as_map).cloned().unwrap_or_default();
                let entry = db.nodes.entry(id).or_insert_with(|| BTreeMap::from([("id".to_string(), Value::Int(id))]));
                for (k, v) in props {
                    // Cypher SET removes properties assigned null
                    if v == Value::Null {
                        entry.remove(&k);
                    } else {
                        entry.insert(k, v);
                    }
                }
                Ok(vec![])
            }
            CREATE_EDGE => {
                let (h, t) = (int("head")?, int("tail")?);
                let label = params.get("label").and_then(Value::as_str).unwrap_or("").to_string();
                if db.nodes.contains_key(&h) && db.nodes.contains_key(&t) {
                    db.edges.insert((h, label, t));
                }
                Ok(vec![])
            }
            ALL_NODES => Ok(db.nodes.values().map(|p| vec![Value::Map(p.clone())]).collect()),
            ALL_EDGES => Ok(db
                .edges
                .iter()
                .map(|(h, l, t)| vec![Value::Int(*h), l.as_str().into(), Value::Int(*t)])
                .collect()),
            q => match parse_paths_query(q) {
                Some(hops) => {
                    let mut out = Vec::new();
                    walk(db, &mut vec![int("id")?], &mut vec![], hops, &mut out);
                    Ok(out)
                }
                None => Err(("Neo.ClientError.Statement.SyntaxError".into(), format!("fake server cannot run: {q}"))),
            },
        }
    }

    fn walk(db: &Db, nodes: &mut Vec<i64>, rels: &mut Vec<String>, hops: usize, out: &mut Vec<Vec<Value>>) {
        if rels.len() == hops {
            out.push(vec![
                Value::List(nodes.iter().map(|&n| Value::Int(n)).collect()),
                Value::List(rels.iter().map(|r| r.as_str().into()).collect()),
            ]);
            return;
        }
        let last = *nodes.last().expect("walk starts at a node");
        let next: Vec<(String, i64)> =
            db.edges.iter().filter(|(h, _, _)| *h == last).map(|(_, l, t)| (l.clone(), *t)).collect();
        for (l, t) in next {
            nodes.push(t);
            rels.push(l);
            walk(db, nodes, rels, hops, out);
            nodes.pop();
            rels.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fake::FakeServer;
    use super::*;
    use crate::store::{load_graph, save_graph, MemoryStore};
    use crate::synthesis::Triple;
    use crate::model::KnowledgeGraph;

    const T: Duration = Duration::from_secs(5);

    fn three_nodes() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new("Hafez");
        let ts = [Triple::new("Hafez", "born_in", "Shiraz").unwrap(), Triple::new("Hafez", "wrote", "Divan of Hafez").unwrap()];
        g.add_curated(g.seed_id(), &ts, 2).unwrap();
        g.node_mut(NodeId(1)).unwrap().gloss = Some("A city in Iran.".into());
        g.node_mut(NodeId(1)).unwrap().mixture_weights = vec![0.75, 0.25];
        g.node_mut(NodeId(1)).unwrap().provenance = vec!["Shiraz#summary".into(), "Shiraz#0".into()];
        g
    }

    #[test]
    fn uris() {
        assert_eq!(parse_uri("bolt://localhost:7687").unwrap(), ("localhost".into(), 7687));
        assert_eq!(parse_uri("neo4j://db.example").unwrap(), ("db.example".into(), 7687));
        assert_eq!(parse_uri("bolt://[::1]:7000").unwrap(), ("::1".into(), 7000));
        assert_eq!(parse_uri("bolt://[::1]").unwrap(), ("::1".into(), 7687));
        assert!(matches!(parse_uri("bolt+s://x"), Err(StoreError::Config(_))));
        assert!(matches!(parse_uri("http://x"), Err(StoreError::Config(_))));
        assert!(matches!(parse_uri("localhost:7687"), Err(StoreError::Config(_))));
    }

    #[test]
    fn framing_splits_large_messages() {
        let big = "x".repeat(70_000);
        let mut buf = Vec::new();
        write_message(&mut buf, RUN, vec![big.as_str().into()]).unwrap();
        // two chunks: 65535 bytes then the rest, then the terminator
        assert_eq!(&buf[..2], &[0xFF, 0xFF]);
        assert_eq!(&buf[buf.len() - 2..], &[0, 0]);
        let (tag, fields) = read_message(&mut buf.as_slice()).unwrap();
        assert_eq!((tag, fields[0].as_str().map(str::len)), (RUN, Some(70_000)));
        // keep-alive frames before a message are skipped
        let mut noop = vec![0, 0];
        noop.extend(&buf);
        assert_eq!(read_message(&mut noop.as_slice()).unwrap().0, RUN);
    }

    #[test]
    fn paths_query_round_trip() {
        assert_eq!(parse_paths_query(&paths_query(3)), Some(3));
        assert_eq!(parse_paths_query("MATCH (n) RETURN n"), None);
    }

    #[test]
    fn round_trip_against_fake_server() {
        let server = FakeServer::start("neo4j", "secret").unwrap();
        let g = three_nodes();
        let mut store = BoltStore::open(&server.uri(), "neo4j", "secret", T).unwrap();
        assert_eq!(store.client.version, (4, 4));
        save_graph(&mut store, &g).unwrap();
        let back = load_graph(&mut store, g.seed_id()).unwrap();
        assert_eq!(back, g);
        let mut mem = MemoryStore::default();
        save_graph(&mut mem, &g).unwrap();
        assert_eq!(store.query_paths(NodeId(0), 1).unwrap(), mem.query_paths(NodeId(0), 1).unwrap());
        assert_eq!(store.query_paths(NodeId(0), 1).unwrap().len(), 2);
        store.close().unwrap();
    }

    #[test]
    fn bad_credentials_fail_at_open() {
        let server = FakeServer::start("neo4j", "secret").unwrap();
        let err = BoltStore::open(&server.uri(), "neo4j", "wrong", T).err().unwrap();
        assert!(matches!(err, StoreError::Auth(_)));
    }

    #[test]
    fn query_failure_recovers_with_reset() {
        let server = FakeServer::start("u", "p").unwrap();
        let mut c = BoltClient::connect(&server.uri(), "u", "p", T).unwrap();
        let err = c.run("RETURN nonsense", BTreeMap::new()).unwrap_err();
        assert!(matches!(err, StoreError::Query { ref code, .. } if code.ends_with("SyntaxError")));
        assert!(c.run(ALL_NODES, BTreeMap::new()).unwrap().is_empty());
    }

    #[test]
    fn unreachable_server_is_a_connect_error() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let err = BoltStore::open(&format!("bolt://127.0.0.1:{port}"), "u", "p", T).err().unwrap();
        assert!(matches!(err, StoreError::Connect(_)));
    }

    /// Runs only when a real server is configured through the environment.
    #[test]
    fn live_round_trip() {
        let (Ok(uri), Ok(user), Ok(pass)) =
            (std::env::var("NEO4J_URI"), std::env::var("NEO4J_USER"), std::env::var("NEO4J_PASS"))
        else {
            eprintln!("NEO4J_URI/NEO4J_USER/NEO4J_PASS not set; skipping live Bolt test");
            return;
        };
        let g = three_nodes();
        let mut store = BoltStore::open(&uri, &user, &pass, T).unwrap();
        save_graph(&mut store, &g).unwrap();
        assert_eq!(load_graph(&mut store, g.seed_id()).unwrap(), g);
        store.clear().unwrap();
    }
}
