//! Client for a detector running in another process.
//!
//! Wire format: one UTF-8 JSON object per line in each direction.
//!
//! ```text
//! -> {"type":"hello","protocol_version":1}
//! <- {"type":"capabilities","model_id":"F1","input_w":1280,"input_h":1280,"protocol_version":1}
//! -> {"type":"detect","request_id":7,"image":"<id>","region":[x,y,w,h]}
//! <- {"type":"detections","request_id":7,"detections":[{"bbox":[x,y,w,h],"conf":0.93,"class":"defect"}]}
//! <- {"type":"error","request_id":7,"message":"..."}
//! ```
//!
//! One request is in flight per connection at a time.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{BackendKind, Capabilities, Detector, Region};
use crate::error::{InspectError, Result};
use crate::geometry::{BoundingBox, Detection};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Reply {
    Capabilities {
        model_id: String,
        input_w: u32,
        input_h: u32,
        protocol_version: u32,
    },
    Detections {
        request_id: u64,
        detections: Vec<WireDetection>,
    },
    Error {
        #[serde(default)]
        request_id: Option<u64>,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
struct WireDetection {
    bbox: [f64; 4],
    conf: f64,
    #[serde(default)]
    class: Option<String>,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_request: u64,
    capabilities: Option<Capabilities>,
    /// Set once the stream can no longer be trusted (timeout, EOF).
    broken: Option<String>,
    child: Option<Child>,
}

/// Detector backend speaking the line protocol over pipes or TCP.
pub struct ExternalDetector {
    model_id: String,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl ExternalDetector {
    /// Wrap an already-open byte stream pair.
    pub fn from_streams<R, W>(model_id: impl Into<String>, reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::with_child(model_id.into(), reader, writer, timeout, None)
    }

    /// Launch `program` and talk to it over its stdin/stdout.
    pub fn spawn(model_id: impl Into<String>, program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| io::Error::other("detector stdin unavailable"))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| io::Error::other("detector stdout unavailable"))?;
        Ok(Self::with_child(model_id.into(), stdout, stdin, timeout, Some(child)))
    }

    /// Connect to a detector listening on a TCP socket.
    pub fn connect(model_id: impl Into<String>, addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(model_id, reader, stream, timeout))
    }

    fn with_child<R, W>(model_id: String, reader: R, writer: W, timeout: Duration, child: Option<Child>) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => {
                        let _ = tx.send(Err(io::Error::new(
                            io::ErrorKind::UnexpectedEof,
                            "detector closed the stream",
                        )));
                        break;
                    }
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            model_id,
            timeout,
            conn: Mutex::new(Connection {
                writer: Box::new(writer),
                lines: rx,
                next_request: 1,
                capabilities: None,
                broken: None,
                child,
            }),
        }
    }

    fn violation(&self, what: impl std::fmt::Display, payload: &str) -> InspectError {
        InspectError::backend(
            &self.model_id,
            format!("protocol violation: {what}"),
            Some(payload.to_string()),
        )
    }

    fn exchange(&self, conn: &mut Connection, request: &serde_json::Value) -> Result<(Reply, String)> {
        if let Some(reason) = &conn.broken {
            return Err(InspectError::backend(
                &self.model_id,
                format!("connection unusable: {reason}"),
                None,
            ));
        }
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        if let Err(e) = conn.writer.write_all(line.as_bytes()).and_then(|_| conn.writer.flush()) {
            conn.broken = Some(e.to_string());
            return Err(InspectError::backend(
                &self.model_id,
                format!("write failed: {e}"),
                None,
            ));
        }

        let raw = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => {
                conn.broken = Some(e.to_string());
                return Err(InspectError::backend(&self.model_id, format!("read failed: {e}"), None));
            }
            Err(RecvTimeoutError::Timeout) => {
                conn.broken = Some("timed out".to_string());
                return Err(InspectError::backend(
                    &self.model_id,
                    format!("no response within {} ms", self.timeout.as_millis()),
                    None,
                ));
            }
            Err(RecvTimeoutError::Disconnected) => {
                conn.broken = Some("reader stopped".to_string());
                return Err(InspectError::backend(&self.model_id, "detector stream closed", None));
            }
        };
        let payload = raw.trim_end_matches(['\r', '\n']).to_string();
        let reply: Reply = serde_json::from_str(&payload).map_err(|e| self.violation(e, &payload))?;
        Ok((reply, payload))
    }

    fn handshake_locked(&self, conn: &mut Connection) -> Result<Capabilities> {
        let hello = json!({"type": "hello", "protocol_version": PROTOCOL_VERSION});
        let (reply, payload) = self.exchange(conn, &hello)?;
        match reply {
            Reply::Capabilities {
                model_id,
                input_w,
                input_h,
                protocol_version,
            } => {
                if protocol_version != PROTOCOL_VERSION {
                    return Err(InspectError::backend(
                        &self.model_id,
                        format!("protocol version mismatch: expected {PROTOCOL_VERSION}, got {protocol_version}"),
                        Some(payload),
                    ));
                }
                if model_id != self.model_id {
                    return Err(self.violation(format!("detector identifies as {model_id}"), &payload));
                }
                let caps = Capabilities {
                    model_id,
                    input_w,
                    input_h,
                    protocol_version,
                };
                conn.capabilities = Some(caps.clone());
                Ok(caps)
            }
            Reply::Error { message, .. } => Err(InspectError::backend(&self.model_id, message, Some(payload))),
            Reply::Detections { .. } => Err(self.violation("expected capabilities", &payload)),
        }
    }
}

impl Detector for ExternalDetector {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::External
    }

    fn handshake(&self) -> Result<Capabilities> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        self.handshake_locked(&mut conn)
    }

    fn detect(&self, image_id: &str, region: &Region) -> Result<Vec<Detection>> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if conn.capabilities.is_none() {
            self.handshake_locked(&mut conn)?;
        }
        let request_id = conn.next_request;
        conn.next_request += 1;
        let request = json!({
            "type": "detect",
            "request_id": request_id,
            "image": image_id,
            "region": region.rect(),
        });
        let (reply, payload) = self.exchange(&mut conn, &request)?;
        let detections = match reply {
            Reply::Detections {
                request_id: rid,
                detections,
            } if rid == request_id => detections,
            Reply::Detections { request_id: rid, .. } => {
                return Err(self.violation(format!("response for request {rid}, expected {request_id}"), &payload))
            }
            Reply::Error {
                request_id: Some(rid), ..
            } if rid != request_id => {
                return Err(self.violation(format!("error for request {rid}, expected {request_id}"), &payload))
            }
            Reply::Error { message, .. } => return Err(InspectError::backend(&self.model_id, message, Some(payload))),
            Reply::Capabilities { .. } => return Err(self.violation("unexpected capabilities", &payload)),
        };

        let [_, _, rw, rh] = region.rect().map(f64::from);
        let mut out = Vec::with_capacity(detections.len());
        for wire in detections {
            let bbox = BoundingBox::try_from(wire.bbox).map_err(|e| self.violation(e, &payload))?;
            if bbox.right() > rw || bbox.bottom() > rh {
                return Err(self.violation(format!("box {bbox} outside the {rw}x{rh} region"), &payload));
            }
            let mut det =
                Detection::new(bbox, wire.conf, &self.model_id, image_id).map_err(|e| self.violation(e, &payload))?;
            if let Some(class) = wire.class {
                det.class_label = class;
            }
            out.push(det);
        }
        Ok(out)
    }
}

impl Drop for ExternalDetector {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(child) = conn.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
