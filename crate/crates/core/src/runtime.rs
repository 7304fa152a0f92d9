//! Edge client and cloud server speaking the framed protocol over TCP.

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::collector::DistributionCollection;
use crate::error::{Error, Result};
use crate::network::Split;
use crate::planner::DeviceProfile;
use crate::sampler::{add_noise, Sampler};
use crate::tensor_core::Tensor;
use crate::wire::{encode_message, read_frame, write_message, Frame, Message, MAX_FRAME_BYTES};

/// Deterministic link delay derived from message size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSimulator {
    pub bandwidth_bytes_per_s: f64,
    pub latency_ms: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl LinkSimulator {
    pub fn new(bandwidth_bytes_per_s: f64, latency_ms: f64) -> Result<Self> {
        if !(bandwidth_bytes_per_s > 0.0 && bandwidth_bytes_per_s.is_finite()) {
            return Err(Error::InvalidArgument(
                "link bandwidth must be positive".into(),
            ));
        }
        if !(latency_ms >= 0.0 && latency_ms.is_finite()) {
            return Err(Error::InvalidArgument(
                "link latency must be non-negative".into(),
            ));
        }
        Ok(LinkSimulator {
            bandwidth_bytes_per_s,
            latency_ms,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        LinkSimulator {
            bandwidth_bytes_per_s: f64::INFINITY,
            latency_ms: 0.0,
            enabled: false,
        }
    }

    pub fn from_profile(profile: &DeviceProfile) -> Result<Self> {
        Self::new(profile.bandwidth_bytes_per_s, profile.latency_ms)
    }

    /// `latency + bytes / bandwidth`, or zero when disabled.
    pub fn delay(&self, bytes: usize) -> Duration {
        if !self.enabled {
            return Duration::ZERO;
        }
        let ms = self.latency_ms + bytes as f64 / self.bandwidth_bytes_per_s * 1000.0;
        Duration::from_secs_f64(ms / 1000.0)
    }

    /// Sleeps for [`delay`](Self::delay) and returns it.
    pub fn apply(&self, bytes: usize) -> Duration {
        let d = self.delay(bytes);
        if !d.is_zero() {
            thread::sleep(d);
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub max_frame_bytes: usize,
    /// Delay applied before each response is written.
    pub link: LinkSimulator,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_frame_bytes: MAX_FRAME_BYTES,
            link: LinkSimulator::disabled(),
        }
    }
}

/// Computes the reply to one decoded frame.
pub fn respond(split: &Split, frame: Frame) -> Option<Message> {
    let msg = match frame {
        Frame::Closed => return None,
        Frame::Rejected(e) => return Some(Message::Error(e.to_string())),
        Frame::Message(m) => m,
    };
    Some(match msg {
        Message::Activation(a) => {
            if a.shape() != split.activation_shape() {
                Message::Error(format!(
                    "activation shape {:?} does not match the cut-point shape {:?}",
                    a.shape(),
                    split.activation_shape()
                ))
            } else {
                match split.run_cloud(&a) {
                    Ok(logits) => Message::Response {
                        label: logits.argmax() as u32,
                        logits: logits.into_data(),
                    },
                    Err(e) => Message::Error(e.to_string()),
                }
            }
        }
        other => Message::Error(format!("unexpected message kind {:#04x}", other.kind())),
    })
}

fn handle_connection(split: &Split, stream: TcpStream, cfg: &ServerConfig) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let frame = read_frame(&mut reader, cfg.max_frame_bytes)?;
        let Some(reply) = respond(split, frame) else {
            return Ok(());
        };
        let bytes = encode_message(&reply)?;
        cfg.link.apply(bytes.len());
        write_message(&mut writer, &reply)?;
    }
}

/// A running cloud server. Dropping it without calling
/// [`shutdown`](Self::shutdown) leaves the accept thread running.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// Binds `addr` and serves the cloud partition of `split`, one thread per
/// connection over shared weights.
pub fn serve(
    split: Arc<Split>,
    addr: impl ToSocketAddrs,
    cfg: ServerConfig,
) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let accept = thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let split = Arc::clone(&split);
            let cfg = cfg.clone();
            thread::spawn(move || {
                let _ = stream.set_nodelay(true);
                let _ = handle_connection(&split, stream, &cfg);
            });
        }
    });
    Ok(ServerHandle {
        addr: local,
        stop,
        accept: Some(accept),
    })
}

/// Source of the perturbation added on the edge.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Sampled(Sampler),
    /// Sends the clean activation. For debugging only.
    Zero,
}

impl NoiseSource {
    pub fn sampled(collection: DistributionCollection, split: &Split, seed: u64) -> Result<Self> {
        collection.check_matches(split)?;
        Ok(NoiseSource::Sampled(Sampler::new(collection, seed)?))
    }

    pub fn perturb(&mut self, a: &Tensor) -> Result<Tensor> {
        match self {
            NoiseSource::Sampled(s) => add_noise(a, &s.sample()?),
            NoiseSource::Zero => Ok(a.clone()),
        }
    }
}

/// Wall-clock breakdown of one remote inference, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timing {
    pub edge_ms: f64,
    pub sample_add_ms: f64,
    /// Simulated link delay plus the socket write.
    pub transmit_ms: f64,
    /// From the start of transmission to the decoded response.
    pub round_trip_ms: f64,
}

impl Timing {
    pub fn total_ms(&self) -> f64 {
        self.edge_ms + self.sample_add_ms + self.round_trip_ms
    }
}

/// The edge side of a request, ready to send.
#[derive(Debug, Clone)]
pub struct PreparedRequest {
    pub activation: Tensor,
    pub noisy: Tensor,
    pub frame: Vec<u8>,
    pub edge_ms: f64,
    pub sample_add_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RemoteInference {
    pub label: usize,
    pub logits: Vec<f32>,
    pub frame_bytes: usize,
    pub timing: Timing,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Runs the edge partition and perturbs its output.
pub fn prepare_request(
    split: &Split,
    noise: &mut NoiseSource,
    x: &Tensor,
) -> Result<PreparedRequest> {
    let t0 = Instant::now();
    let activation = split.run_edge(x)?;
    let t1 = Instant::now();
    let noisy = noise.perturb(&activation)?;
    let t2 = Instant::now();
    let frame = encode_message(&Message::Activation(noisy.clone()))?;
    Ok(PreparedRequest {
        activation,
        noisy,
        frame,
        edge_ms: ms(t1 - t0),
        sample_add_ms: ms(t2 - t1),
    })
}

pub struct EdgeClient {
    split: Arc<Split>,
    noise: NoiseSource,
    link: LinkSimulator,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl EdgeClient {
    pub fn connect(
        split: Arc<Split>,
        noise: NoiseSource,
        addr: impl ToSocketAddrs,
        timeout: Option<Duration>,
    ) -> Result<Self> {
        if let NoiseSource::Sampled(s) = &noise {
            s.collection().check_matches(&split)?;
        }
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(timeout)?;
        stream.set_write_timeout(timeout)?;
        Ok(EdgeClient {
            split,
            noise,
            link: LinkSimulator::disabled(),
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    pub fn with_link(mut self, link: LinkSimulator) -> Self {
        self.link = link;
        self
    }

    pub fn prepare(&mut self, x: &Tensor) -> Result<PreparedRequest> {
        prepare_request(&self.split, &mut self.noise, x)
    }

    /// Sends an already encoded frame and waits for the reply.
    pub fn exchange(&mut self, frame: &[u8]) -> Result<(Message, f64, f64)> {
        use std::io::Write;
        let start = Instant::now();
        self.link.apply(frame.len());
        self.writer.write_all(frame)?;
        self.writer.flush()?;
        let transmit = ms(start.elapsed());
        let reply = match read_frame(&mut self.reader, MAX_FRAME_BYTES)? {
            Frame::Message(m) => m,
            Frame::Rejected(e) => return Err(e),
            Frame::Closed => return Err(Error::Protocol("server closed the connection".into())),
        };
        Ok((reply, transmit, ms(start.elapsed())))
    }

    pub fn infer(&mut self, x: &Tensor) -> Result<RemoteInference> {
        let req = self.prepare(x)?;
        let (reply, transmit_ms, round_trip_ms) = self.exchange(&req.frame)?;
        match reply {
            Message::Response { label, logits } => Ok(RemoteInference {
                label: label as usize,
                logits,
                frame_bytes: req.frame.len(),
                timing: Timing {
                    edge_ms: req.edge_ms,
                    sample_add_ms: req.sample_add_ms,
                    transmit_ms,
                    round_trip_ms,
                },
            }),
            Message::Error(reason) => Err(Error::Remote(reason)),
            Message::Activation(_) => Err(Error::Protocol(
                "server replied with an activation frame".into(),
            )),
        }
    }

    pub fn close(self) {
        let _ = self.writer.shutdown(Shutdown::Both);
    }
}

/// Edge, perturbation and cloud in one process. Returns the logits.
pub fn infer_local(split: &Split, noise: &mut NoiseSource, x: &Tensor) -> Result<Tensor> {
    let a = split.run_edge(x)?;
    split.run_cloud(&noise.perturb(&a)?)
}
