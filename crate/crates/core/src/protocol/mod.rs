//! Line-oriented ASCII protocol between a host and the crossbar firmware.
//!
//! ```text
//! INFER v0 … v{rows-1}          -> OUT o0 … o{cols-1} | ERR <code> <detail>
//! WRITE x y c_pulse v_delta     -> ACK | ERR …
//! RESET                         -> ACK
//! PING                          -> PONG
//! ```
//!
//! Fields are separated by spaces, numbers are rendered with six decimals and
//! every line ends in `\n`.

mod pipe;
mod serve;

pub use pipe::{duplex, PipeReader, PipeWriter};
pub use serve::{serve, serve_tcp, Firmware};

use std::fmt;
use std::str::FromStr;

/// Error classes carried by `ERR` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrCode {
    Parse,
    Range,
    Dim,
    State,
}

impl fmt::Display for ErrCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrCode::Parse => "PARSE",
            ErrCode::Range => "RANGE",
            ErrCode::Dim => "DIM",
            ErrCode::State => "STATE",
        })
    }
}

impl FromStr for ErrCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "PARSE" => Ok(ErrCode::Parse),
            "RANGE" => Ok(ErrCode::Range),
            "DIM" => Ok(ErrCode::Dim),
            "STATE" => Ok(ErrCode::State),
            _ => Err(()),
        }
    }
}

/// A rejected line, reported on the wire as `ERR <code> <detail>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: ErrCode,
    pub detail: String,
}

impl WireError {
    fn new(code: ErrCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Infer(Vec<f64>),
    Write {
        x: usize,
        y: usize,
        c_pulse: f64,
        v_delta: f64,
    },
    Reset,
    Ping,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Out(Vec<f64>),
    Ack,
    Pong,
    Err(WireError),
}

/// Crossbar dimensions the grammar is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for Codec {
    fn default() -> Self {
        Self { rows: 8, cols: 8 }
    }
}

fn push_values(line: &mut String, values: &[f64]) {
    use fmt::Write;
    for v in values {
        write!(line, " {v:.6}").expect("writing to a String");
    }
}

/// Renders a command as one protocol line.
pub fn encode_command(cmd: &Command) -> String {
    match cmd {
        Command::Infer(values) => {
            let mut line = String::from("INFER");
            push_values(&mut line, values);
            line.push('\n');
            line
        }
        Command::Write {
            x,
            y,
            c_pulse,
            v_delta,
        } => format!("WRITE {x} {y} {c_pulse:.6} {v_delta:.6}\n"),
        Command::Reset => "RESET\n".into(),
        Command::Ping => "PING\n".into(),
    }
}

pub fn encode_response(resp: &Response) -> String {
    match resp {
        Response::Out(values) => {
            let mut line = String::from("OUT");
            push_values(&mut line, values);
            line.push('\n');
            line
        }
        Response::Ack => "ACK\n".into(),
        Response::Pong => "PONG\n".into(),
        Response::Err(e) => {
            // Details must stay on one line.
            let detail: String = e
                .detail
                .chars()
                .map(|c| if c.is_control() { ' ' } else { c })
                .collect();
            format!("ERR {} {}\n", e.code, detail.trim())
        }
    }
}

/// Parses a command for the default 8×8 grammar.
pub fn parse_command(line: &str) -> Result<Command, WireError> {
    Codec::default().parse_command(line)
}

fn number(field: &str) -> Result<f64, WireError> {
    field
        .parse::<f64>()
        .map_err(|_| WireError::new(ErrCode::Parse, format!("non-numeric field {field:?}")))
}

fn index(field: &str) -> Result<usize, WireError> {
    field
        .parse::<usize>()
        .map_err(|_| WireError::new(ErrCode::Parse, format!("bad coordinate {field:?}")))
}

fn arity(name: &str, fields: &[&str], expected: usize) -> Result<(), WireError> {
    if fields.len() != expected {
        return Err(WireError::new(
            ErrCode::Dim,
            format!("{name} takes {expected} fields, got {}", fields.len()),
        ));
    }
    Ok(())
}

impl Codec {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    /// Parses arbitrary bytes; non-UTF-8 input is a parse error.
    pub fn parse_command_bytes(&self, line: &[u8]) -> Result<Command, WireError> {
        match std::str::from_utf8(line) {
            Ok(s) => self.parse_command(s),
            Err(_) => Err(WireError::new(ErrCode::Parse, "line is not valid UTF-8")),
        }
    }

    pub fn parse_command(&self, line: &str) -> Result<Command, WireError> {
        let mut tokens = line.split_ascii_whitespace();
        let Some(keyword) = tokens.next() else {
            return Err(WireError::new(ErrCode::Parse, "empty line"));
        };
        let fields: Vec<&str> = tokens.collect();
        match keyword {
            "PING" => arity("PING", &fields, 0).map(|_| Command::Ping),
            "RESET" => arity("RESET", &fields, 0).map(|_| Command::Reset),
            "INFER" => {
                arity("INFER", &fields, self.rows)?;
                let values = fields.iter().map(|f| number(f)).collect::<Result<Vec<_>, _>>()?;
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(WireError::new(ErrCode::Range, format!("input {v} outside [0, 1]")));
                }
                Ok(Command::Infer(values))
            }
            "WRITE" => {
                arity("WRITE", &fields, 4)?;
                let x = index(fields[0])?;
                let y = index(fields[1])?;
                let c_pulse = number(fields[2])?;
                let v_delta = number(fields[3])?;
                if x >= self.rows || y >= self.cols {
                    return Err(WireError::new(
                        ErrCode::Range,
                        format!("cell ({x}, {y}) outside {}x{}", self.rows, self.cols),
                    ));
                }
                if !c_pulse.is_finite() || !v_delta.is_finite() || v_delta < 0.0 {
                    return Err(WireError::new(
                        ErrCode::Range,
                        format!("invalid pulse {c_pulse} ms at {v_delta} V"),
                    ));
                }
                Ok(Command::Write {
                    x,
                    y,
                    c_pulse,
                    v_delta,
                })
            }
            other => {
                let shown: String = other.chars().take(32).collect();
                Err(WireError::new(ErrCode::Parse, format!("unknown command {shown:?}")))
            }
        }
    }

    /// Parses a firmware reply on the host side.
    pub fn parse_response(&self, line: &str) -> Result<Response, WireError> {
        let line = line.trim_end_matches(['\r', '\n']);
        let mut tokens = line.split_ascii_whitespace();
        match tokens.next() {
            Some("ACK") => Ok(Response::Ack),
            Some("PONG") => Ok(Response::Pong),
            Some("OUT") => {
                let fields: Vec<&str> = tokens.collect();
                arity("OUT", &fields, self.cols)?;
                fields
                    .iter()
                    .map(|f| number(f))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Response::Out)
            }
            Some("ERR") => {
                let code = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| WireError::new(ErrCode::Parse, "malformed ERR line"))?;
                let detail = tokens.collect::<Vec<_>>().join(" ");
                Ok(Response::Err(WireError { code, detail }))
            }
            _ => Err(WireError::new(ErrCode::Parse, format!("unexpected reply {line:?}"))),
        }
    }
}
