//! Client for out-of-process predictors speaking a length-prefixed JSON
//! protocol over the child's stdin/stdout.

use std::io::{BufReader, BufWriter};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{PredictError, Predictor, PredictorOutput, StepContext};

pub const PROTOCOL_VERSION: u32 = 1;

pub mod protocol {
    //! Message types and framing. Each frame is a 4-byte little-endian
    //! length followed by that many bytes of UTF-8 JSON.

    use std::io::{self, Read, Write};

    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Serialize};

    use crate::predict::RoiVertex;

    /// Frames larger than this are rejected as corrupt.
    pub const MAX_FRAME: usize = 64 << 20;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
    pub enum Message {
        Hello { version: u32, dims: [usize; 3] },
        HelloAck { version: u32, dims: [usize; 3] },
        Request(Request),
        Response(Response),
        Shutdown,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Request {
        pub run_id: String,
        pub step_id: u64,
        /// channels, height, width
        pub dims: [usize; 3],
        /// Row-major f32 little-endian, base64.
        pub payload: String,
        pub theta_v: f64,
        pub max_vertices: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Response {
        pub step_id: u64,
        pub vertices: Vec<RoiVertex>,
    }

    pub fn encode_payload(data: &[f32]) -> String {
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        STANDARD.encode(bytes)
    }

    pub fn decode_payload(s: &str) -> Result<Vec<f32>, String> {
        let bytes = STANDARD.decode(s).map_err(|e| e.to_string())?;
        if bytes.len() % 4 != 0 {
            return Err(format!("payload length {} is not a multiple of 4", bytes.len()));
        }
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    /// Reference answer of the bundled echo server: one vertex whose
    /// position hashes the step id and every payload bit.
    pub fn echo_vertices(req: &Request, data: &[f32]) -> Vec<RoiVertex> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ req.step_id;
        for v in data {
            h = (h ^ v.to_bits() as u64).wrapping_mul(0x100_0000_01b3);
        }
        let half = (req.dims[1] / 2) as f64;
        let x = (h % 2001) as f64 / 1000.0 - 1.0;
        let y = ((h >> 20) % 2001) as f64 / 1000.0 - 1.0;
        if req.max_vertices == 0 {
            return Vec::new();
        }
        vec![RoiVertex { x: x * half, y: y * half, p: 1.0 }]
    }

    pub fn write_frame(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
        let len = u32::try_from(bytes.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.flush()
    }

    pub fn write_message(w: &mut impl Write, msg: &Message) -> io::Result<()> {
        let bytes = serde_json::to_vec(msg).map_err(io::Error::other)?;
        write_frame(w, &bytes)
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream.
    pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let n = u32::from_le_bytes(len) as usize;
        if n > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes")));
        }
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)?;
        Ok(Some(buf))
    }
}

use protocol::{Message, Request};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalConfig {
    /// Program and arguments of the predictor process.
    pub command: Vec<String>,
    pub timeout_ms: u64,
    pub run_id: String,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self { command: Vec::new(), timeout_ms: 5000, run_id: "run".into() }
    }
}

/// One session with a child predictor process.
pub struct ExternalPredictor {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    rx: Receiver<std::io::Result<Vec<u8>>>,
    timeout: Duration,
    dims: [usize; 3],
    run_id: String,
    next_step: u64,
}

impl ExternalPredictor {
    /// Starts the process and completes the handshake for ROIs of `dims`
    /// (channels, height, width).
    pub fn spawn(cfg: &ExternalConfig, dims: [usize; 3]) -> Result<Self, PredictError> {
        let (prog, args) = cfg.command.split_first().ok_or_else(|| PredictError::Unavailable("empty predictor command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PredictError::Unavailable(format!("cannot start `{prog}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || loop {
            match protocol::read_frame(&mut stdout) {
                Ok(Some(frame)) => {
                    if tx.send(Ok(frame)).is_err() {
                        return;
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        });
        let mut s =
            Self { child, stdin, rx, timeout: Duration::from_millis(cfg.timeout_ms), dims, run_id: cfg.run_id.clone(), next_step: 0 };
        s.handshake()?;
        Ok(s)
    }

    fn send(&mut self, msg: &Message) -> Result<(), PredictError> {
        protocol::write_message(&mut self.stdin, msg).map_err(|e| PredictError::Unavailable(format!("write failed: {e}")))
    }

    fn recv(&mut self, deadline: Instant) -> Result<Message, PredictError> {
        let left = deadline.saturating_duration_since(Instant::now());
        match self.rx.recv_timeout(left) {
            Ok(Ok(frame)) => serde_json::from_slice(&frame).map_err(|e| PredictError::Malformed(e.to_string())),
            Ok(Err(e)) => Err(PredictError::Malformed(e.to_string())),
            // a closed pipe is indistinguishable from a silent peer
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => Err(PredictError::Timeout(self.timeout)),
        }
    }

    fn handshake(&mut self) -> Result<(), PredictError> {
        self.send(&Message::Hello { version: PROTOCOL_VERSION, dims: self.dims })?;
        match self.recv(Instant::now() + self.timeout)? {
            Message::HelloAck { version, dims } => {
                if version != PROTOCOL_VERSION {
                    return Err(PredictError::Malformed(format!("protocol version {version}, expected {PROTOCOL_VERSION}")));
                }
                if dims != self.dims {
                    return Err(PredictError::Dimension(format!("peer expects {dims:?}, ROI is {:?}", self.dims)));
                }
                Ok(())
            }
            other => Err(PredictError::Malformed(format!("expected hello_ack, got {other:?}"))),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Sends one ROI and waits for the matching response.
    pub fn request(&mut self, data: &[f32], dims: [usize; 3], theta_v: f64, max_vertices: usize) -> Result<PredictorOutput, PredictError> {
        if dims != self.dims {
            return Err(PredictError::Dimension(format!("ROI is {dims:?}, session pinned {:?}", self.dims)));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(PredictError::Dimension(format!("payload has {} values for {dims:?}", data.len())));
        }
        let step_id = self.next_step;
        self.next_step += 1;
        let req = Request { run_id: self.run_id.clone(), step_id, dims, payload: protocol::encode_payload(data), theta_v, max_vertices };
        self.send(&Message::Request(req))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.recv(deadline)? {
                // late answers to abandoned steps
                Message::Response(r) if r.step_id < step_id => continue,
                Message::Response(r) if r.step_id == step_id => {
                    let out = PredictorOutput { vertices: r.vertices };
                    out.validate((dims[1] / 2) as f64, max_vertices)?;
                    return Ok(out);
                }
                other => return Err(PredictError::Malformed(format!("unexpected message {other:?}"))),
            }
        }
    }
}

impl Predictor for ExternalPredictor {
    fn predict(&mut self, ctx: &StepContext<'_>) -> Result<PredictorOutput, PredictError> {
        let r = ctx.roi;
        self.request(&r.data, [r.channels, r.size, r.size], ctx.theta_v, ctx.max_vertices)
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let _ = protocol::write_message(&mut self.stdin, &Message::Shutdown);
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::protocol::*;

    #[test]
    fn payload_round_trip_is_bit_exact() {
        let v = vec![0.0f32, -1.5, f32::MIN_POSITIVE, 1e-30, 3.25];
        let back = decode_payload(&encode_payload(&v)).unwrap();
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn frame_round_trip() {
        let msg = Message::Hello { version: 1, dims: [3, 64, 64] };
        let mut buf = Vec::new();
        write_message(&mut buf, &msg).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        let frame = read_frame(&mut cur).unwrap().unwrap();
        assert_eq!(serde_json::from_slice::<Message>(&frame).unwrap(), msg);
        assert!(read_frame(&mut cur).unwrap().is_none());
    }
}
