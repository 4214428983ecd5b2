//! Inference and write access to a crossbar, either by direct simulator calls
//! or through the line protocol.
//!
//! Callers work in normalized units throughout: inputs in `[0, 1]`, outputs in
//! weight units. Conversion to read voltages happens inside the backend.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::thread::JoinHandle;

use crate::device::{CrossbarModel, PulseCommand, MIN_THRESHOLD};
use crate::error::{Error, Result};
use crate::protocol::{self, Codec, Command, ErrCode, Firmware, PipeReader, PipeWriter, Response};

/// Maximum read amplitude (V); kept below every admissible switching threshold.
pub const V_READ_MAX: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Direct,
    Protocol,
}

pub trait Backend: Send {
    fn kind(&self) -> BackendKind;

    /// `(rows, cols)` of the attached crossbar.
    fn dims(&self) -> (usize, usize);

    fn v_read_max(&self) -> f64 {
        V_READ_MAX
    }

    /// One noisy multiply-accumulate readout.
    fn infer(&mut self, x_norm: &[f64]) -> Result<Vec<f64>>;

    /// One half-select write episode on `(x, y)`.
    fn write_weight(&mut self, x: usize, y: usize, c_pulse: f64, v_delta: f64) -> Result<()>;
}

pub type BackendHandle = Box<dyn Backend>;

fn check_input(dims: (usize, usize), x_norm: &[f64]) -> Result<()> {
    if x_norm.len() != dims.0 {
        return Err(Error::Dimension {
            expected: dims.0,
            got: x_norm.len(),
        });
    }
    if let Some(v) = x_norm.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("input component {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_write(dims: (usize, usize), x: usize, y: usize, c_pulse: f64, v_delta: f64) -> Result<()> {
    if x >= dims.0 || y >= dims.1 {
        return Err(Error::Range(format!(
            "cell ({x}, {y}) outside {}x{} crossbar",
            dims.0, dims.1
        )));
    }
    if !v_delta.is_finite() || v_delta < 0.0 || !c_pulse.is_finite() {
        return Err(Error::Range(format!("invalid pulse {c_pulse} ms at {v_delta} V")));
    }
    Ok(())
}

/// Backend that calls the simulator directly.
#[derive(Debug)]
pub struct DirectBackend {
    model: CrossbarModel,
    v_read_max: f64,
}

impl DirectBackend {
    pub fn new(model: CrossbarModel) -> Self {
        Self {
            model,
            v_read_max: V_READ_MAX,
        }
    }

    pub fn with_read_voltage(model: CrossbarModel, v_read_max: f64) -> Result<Self> {
        if !(v_read_max > 0.0 && v_read_max < MIN_THRESHOLD) {
            return Err(Error::Config(format!(
                "read voltage {v_read_max} V must lie in (0, {MIN_THRESHOLD})"
            )));
        }
        Ok(Self { model, v_read_max })
    }

    pub fn model(&self) -> &CrossbarModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut CrossbarModel {
        &mut self.model
    }

    pub fn into_model(self) -> CrossbarModel {
        self.model
    }
}

impl Backend for DirectBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Direct
    }

    fn dims(&self) -> (usize, usize) {
        (self.model.rows(), self.model.cols())
    }

    fn v_read_max(&self) -> f64 {
        self.v_read_max
    }

    fn infer(&mut self, x_norm: &[f64]) -> Result<Vec<f64>> {
        check_input(self.dims(), x_norm)?;
        // Drive rows with subthreshold voltages, then map the readout back to
        // normalized units.
        let volts: Vec<f64> = x_norm.iter().map(|x| x * self.v_read_max).collect();
        let normalized: Vec<f64> = volts.iter().map(|v| (v / self.v_read_max).clamp(0.0, 1.0)).collect();
        self.model.read_mac(&normalized)
    }

    fn write_weight(&mut self, x: usize, y: usize, c_pulse: f64, v_delta: f64) -> Result<()> {
        check_write(self.dims(), x, y, c_pulse, v_delta)?;
        self.model.write_pulse(&PulseCommand {
            x,
            y,
            c_pulse,
            v_delta,
        })
    }
}

/// Backend speaking the line protocol over any ordered byte stream.
pub struct ProtocolBackend {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    codec: Codec,
    server: Option<JoinHandle<Firmware>>,
}

impl std::fmt::Debug for ProtocolBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtocolBackend").field("codec", &self.codec).finish()
    }
}

fn unavailable(e: impl std::fmt::Display) -> Error {
    Error::BackendUnavailable(e.to_string())
}

impl ProtocolBackend {
    /// Wraps an existing transport.
    pub fn from_stream<R, W>(reader: R, writer: W, rows: usize, cols: usize) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Self {
            reader: Box::new(reader),
            writer: Box::new(writer),
            codec: Codec::new(rows, cols),
            server: None,
        }
    }

    /// Runs the firmware on a background thread connected by an in-memory pipe.
    pub fn in_process(model: CrossbarModel) -> Self {
        let (rows, cols) = (model.rows(), model.cols());
        let ((host_w, host_r), (dev_r, dev_w)): ((PipeWriter, PipeReader), (PipeReader, PipeWriter)) =
            protocol::duplex();
        let server = std::thread::spawn(move || {
            let mut fw = Firmware::new(model);
            let _ = protocol::serve(&mut fw, BufReader::new(dev_r), dev_w);
            fw
        });
        let mut backend = Self::from_stream(BufReader::new(host_r), host_w, rows, cols);
        backend.server = Some(server);
        backend
    }

    /// Connects to a firmware endpoint over TCP and checks it answers `PING`.
    pub fn connect_tcp<A: ToSocketAddrs>(addr: A, rows: usize, cols: usize) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(unavailable)?;
        stream.set_nodelay(true).map_err(unavailable)?;
        let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
        let mut backend = Self::from_stream(reader, BufWriter::new(stream), rows, cols);
        match backend.request(&Command::Ping)? {
            Response::Pong => Ok(backend),
            other => Err(unavailable(format!("unexpected handshake reply {other:?}"))),
        }
    }

    /// Sends one command and waits for its reply.
    pub fn request(&mut self, cmd: &Command) -> Result<Response> {
        let line = protocol::encode_command(cmd);
        self.writer.write_all(line.as_bytes()).map_err(unavailable)?;
        self.writer.flush().map_err(unavailable)?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(unavailable)?;
        if n == 0 {
            return Err(unavailable("connection closed"));
        }
        self.codec
            .parse_response(&reply)
            .map_err(|e| unavailable(format!("malformed reply: {}", e.detail)))
    }

    /// Re-initializes the remote crossbar to its seeded fresh state.
    pub fn reset(&mut self) -> Result<()> {
        match self.request(&Command::Reset)? {
            Response::Ack => Ok(()),
            other => Err(reply_error(other)),
        }
    }

    /// Closes the stream and, for in-process firmware, returns the final model.
    pub fn shutdown(mut self) -> Option<CrossbarModel> {
        self.writer = Box::new(std::io::sink());
        self.server.take().and_then(|h| h.join().ok()).map(Firmware::into_model)
    }
}

fn reply_error(resp: Response) -> Error {
    match resp {
        Response::Err(e) => match e.code {
            ErrCode::Range => Error::Range(e.detail),
            ErrCode::Dim => Error::Protocol(format!("dimension error: {}", e.detail)),
            ErrCode::Parse | ErrCode::State => Error::Protocol(e.detail),
        },
        other => unavailable(format!("unexpected reply {other:?}")),
    }
}

impl Drop for ProtocolBackend {
    fn drop(&mut self) {
        if let Some(h) = self.server.take() {
            self.writer = Box::new(std::io::sink());
            let _ = h.join();
        }
    }
}

impl Backend for ProtocolBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Protocol
    }

    fn dims(&self) -> (usize, usize) {
        (self.codec.rows, self.codec.cols)
    }

    fn infer(&mut self, x_norm: &[f64]) -> Result<Vec<f64>> {
        check_input(self.dims(), x_norm)?;
        match self.request(&Command::Infer(x_norm.to_vec()))? {
            Response::Out(values) => Ok(values),
            other => Err(reply_error(other)),
        }
    }

    fn write_weight(&mut self, x: usize, y: usize, c_pulse: f64, v_delta: f64) -> Result<()> {
        check_write(self.dims(), x, y, c_pulse, v_delta)?;
        match self.request(&Command::Write {
            x,
            y,
            c_pulse,
            v_delta,
        })? {
            Response::Ack => Ok(()),
            other => Err(reply_error(other)),
        }
    }
}

/// Which backend a pipeline should attach to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Direct,
    /// Firmware emulated in-process behind the line protocol.
    InProcess,
    /// Remote firmware at `host:port`.
    Tcp(String),
}

impl std::str::FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(BackendSpec::Direct),
            "protocol" | "pipe" => Ok(BackendSpec::InProcess),
            _ => match s.strip_prefix("tcp:") {
                Some(addr) if !addr.is_empty() => Ok(BackendSpec::Tcp(addr.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown backend {s:?} (expected direct, protocol or tcp:<host:port>)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Direct => f.write_str("direct"),
            BackendSpec::InProcess => f.write_str("protocol"),
            BackendSpec::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

impl BackendSpec {
    /// Opens a backend; `model` seeds local backends and is ignored for TCP,
    /// where the remote endpoint owns its own crossbar.
    pub fn open(&self, model: CrossbarModel) -> Result<BackendHandle> {
        Ok(match self {
            BackendSpec::Direct => Box::new(DirectBackend::new(model)),
            BackendSpec::InProcess => Box::new(ProtocolBackend::in_process(model)),
            BackendSpec::Tcp(addr) => {
                let mut b = ProtocolBackend::connect_tcp(addr.as_str(), model.rows(), model.cols())?;
                b.reset()?;
                Box::new(b)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::VariabilitySpec;

    fn one_hot(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; 8];
        v[i] = 1.0;
        v
    }

    #[test]
    fn zero_input_reads_zero() {
        let mut b = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::ideal(0.1), 1).unwrap());
        assert_eq!(b.infer(&[0.0; 8]).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn one_hot_reads_a_row() {
        let model = CrossbarModel::with_seed(VariabilitySpec::ideal(0.1), 1).unwrap();
        let row = model.weights()[3].clone();
        let mut b = DirectBackend::new(model);
        assert_eq!(b.infer(&one_hot(3)).unwrap(), row);
    }

    #[test]
    fn write_follows_device_law() {
        let model = CrossbarModel::with_seed(VariabilitySpec::ideal(0.07), 1).unwrap();
        let cell = *model.cell(2, 5);
        let mut b = DirectBackend::new(model);
        b.write_weight(2, 5, 1.5, 0.1).unwrap();
        let expected = cell.pulsed(0.1, 1.5).weight;
        assert_eq!(b.infer(&one_hot(2)).unwrap()[5], expected);
    }

    #[test]
    fn subthreshold_write_leaves_reads_unchanged() {
        let mut b = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::ideal(0.2), 1).unwrap());
        let before = b.infer(&one_hot(0)).unwrap();
        b.write_weight(0, 0, 5.0, 0.15).unwrap();
        assert_eq!(b.infer(&one_hot(0)).unwrap(), before);
    }

    #[test]
    fn write_out_of_range_is_a_range_error() {
        let mut b = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap());
        assert!(matches!(b.write_weight(9, 0, 1.0, 0.1), Err(Error::Range(_))));
        let mut p = ProtocolBackend::in_process(CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap());
        assert!(matches!(p.write_weight(9, 0, 1.0, 0.1), Err(Error::Range(_))));
        assert!(matches!(p.infer(&[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn direct_and_protocol_agree() {
        let model = CrossbarModel::with_seed(VariabilitySpec::default(), 42).unwrap();
        let mut d = DirectBackend::new(model.clone());
        let mut p = ProtocolBackend::in_process(model);
        let x = [0.1, 0.9, 0.3, 0.0, 1.0, 0.5, 0.25, 0.75];
        for step in 0..20 {
            let (i, j) = (step % 8, (step * 3) % 8);
            let c = if step % 2 == 0 { 1.25 } else { -0.75 };
            d.write_weight(i, j, c, 0.2).unwrap();
            p.write_weight(i, j, c, 0.2).unwrap();
            let a = d.infer(&x).unwrap();
            let b = p.infer(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-5, "{u} vs {v}");
            }
        }
        let final_model = p.shutdown().unwrap();
        assert_eq!(final_model.weights(), d.model().weights());
    }

    #[test]
    fn read_voltage_must_stay_subthreshold() {
        let m = CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap();
        assert!(DirectBackend::with_read_voltage(m.clone(), 0.07).is_err());
        assert!(DirectBackend::with_read_voltage(m, 0.04).is_ok());
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!("direct".parse::<BackendSpec>().unwrap(), BackendSpec::Direct);
        assert_eq!(
            "tcp:127.0.0.1:7000".parse::<BackendSpec>().unwrap(),
            BackendSpec::Tcp("127.0.0.1:7000".into())
        );
        assert!("tcp:".parse::<BackendSpec>().is_err());
        assert!("serial".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn unreachable_tcp_endpoint_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        assert!(matches!(
            ProtocolBackend::connect_tcp(addr, 8, 8),
            Err(Error::BackendUnavailable(_))
        ));
    }
}
