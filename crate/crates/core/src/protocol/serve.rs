use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;

use super::{encode_response, Codec, Command, ErrCode, Response, WireError};
use crate::device::{CrossbarModel, PulseCommand};
use crate::error::Error;

/// Firmware-side session state: the crossbar plus its grammar.
#[derive(Debug)]
pub struct Firmware {
    model: CrossbarModel,
    codec: Codec,
}

impl Firmware {
    pub fn new(model: CrossbarModel) -> Self {
        let codec = Codec::new(model.rows(), model.cols());
        Self { model, codec }
    }

    pub fn model(&self) -> &CrossbarModel {
        &self.model
    }

    pub fn into_model(self) -> CrossbarModel {
        self.model
    }

    pub fn handle(&mut self, cmd: Command) -> Response {
        let result = match cmd {
            Command::Ping => return Response::Pong,
            Command::Reset => {
                self.model.reset();
                return Response::Ack;
            }
            Command::Infer(x) => self.model.read_mac(&x).map(Response::Out),
            Command::Write {
                x,
                y,
                c_pulse,
                v_delta,
            } => self
                .model
                .write_pulse(&PulseCommand {
                    x,
                    y,
                    c_pulse,
                    v_delta,
                })
                .map(|_| Response::Ack),
        };
        result.unwrap_or_else(|e| {
            let code = match e {
                Error::Dimension { .. } => ErrCode::Dim,
                Error::Range(_) | Error::Protocol(_) => ErrCode::Range,
                _ => ErrCode::State,
            };
            Response::Err(WireError {
                code,
                detail: e.to_string(),
            })
        })
    }

    /// Handles one raw line (terminator optional).
    pub fn handle_line(&mut self, line: &[u8]) -> Response {
        match self.codec.parse_command_bytes(line) {
            Ok(cmd) => self.handle(cmd),
            Err(e) => Response::Err(e),
        }
    }
}

/// Request/response loop; returns when `input` reaches EOF.
pub fn serve<R: BufRead, W: Write>(firmware: &mut Firmware, mut input: R, mut output: W) -> io::Result<()> {
    let mut line = Vec::new();
    loop {
        line.clear();
        if input.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        let resp = firmware.handle_line(&line);
        output.write_all(encode_response(&resp).as_bytes())?;
        output.flush()?;
    }
}

/// Serves TCP clients one after another on the same crossbar.
///
/// State persists across connections; `max_sessions` bounds the number of
/// accepted connections (`None` serves forever).
pub fn serve_tcp(firmware: &mut Firmware, listener: &TcpListener, max_sessions: Option<usize>) -> io::Result<()> {
    let mut served = 0;
    while max_sessions.is_none_or(|m| served < m) {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let writer = BufWriter::new(stream);
        // A dropped client ends its session, not the server.
        let _ = serve(firmware, reader, writer);
        served += 1;
    }
    Ok(())
}
