//! Test predictor: answers every request with a deterministic hash of the
//! payload. Fault flags make it misbehave on selected steps.

use std::io::{self, BufReader, BufWriter, Write};
use std::time::Duration;

use clap::Parser;
use lanegraph::predict::protocol::{decode_payload, echo_vertices, read_frame, write_frame, write_message, Message, Response};
use lanegraph::predict::PROTOCOL_VERSION;

#[derive(Parser, Debug)]
#[command(about = "Echo predictor for protocol tests")]
struct Args {
    /// Sleep this long before answering every k-th request (see --slow-every).
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
    /// Requests with step_id % N == N-1 are answered late. 0 disables.
    #[arg(long, default_value_t = 0)]
    slow_every: u64,
    /// Requests with step_id % N == N-1 get a frame that is not JSON. 0 disables.
    #[arg(long, default_value_t = 0)]
    malformed_every: u64,
    /// Exit without answering after this many requests. 0 disables.
    #[arg(long, default_value_t = 0)]
    exit_after: u64,
    /// Acknowledge the handshake with another version.
    #[arg(long)]
    wrong_version: bool,
    /// Acknowledge the handshake with other dimensions.
    #[arg(long)]
    wrong_dims: bool,
}

fn hits(every: u64, step: u64) -> bool {
    every > 0 && step % every == every - 1
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    let mut input = BufReader::new(io::stdin().lock());
    let mut out = BufWriter::new(io::stdout().lock());
    let mut served = 0u64;
    while let Some(frame) = read_frame(&mut input)? {
        let msg: Message = match serde_json::from_slice(&frame) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("predictor-echo: bad frame: {e}");
                continue;
            }
        };
        match msg {
            Message::Hello { version, mut dims } => {
                let version = if args.wrong_version { version + 1 } else { version.min(PROTOCOL_VERSION) };
                if args.wrong_dims {
                    dims[0] += 1;
                }
                write_message(&mut out, &Message::HelloAck { version, dims })?;
            }
            Message::Request(req) => {
                if args.exit_after > 0 && served >= args.exit_after {
                    return Ok(());
                }
                served += 1;
                if hits(args.malformed_every, req.step_id) {
                    write_frame(&mut out, b"{not json")?;
                    continue;
                }
                if hits(args.slow_every, req.step_id) {
                    std::thread::sleep(Duration::from_millis(args.sleep_ms));
                }
                let data = match decode_payload(&req.payload) {
                    Ok(d) => d,
                    Err(e) => {
                        eprintln!("predictor-echo: {e}");
                        continue;
                    }
                };
                let vertices = echo_vertices(&req, &data);
                write_message(&mut out, &Message::Response(Response { step_id: req.step_id, vertices }))?;
            }
            Message::Shutdown => return Ok(()),
            Message::HelloAck { .. } | Message::Response(_) => {}
        }
        out.flush()?;
    }
    Ok(())
}
