//! Scope frame transport.
//!
//! The scope exposes its newest frame on a TCP address. A client sends a
//! single request byte and receives one frame:
//!
//! ```text
//! sequence: u32 BE | width: u16 BE | height: u16 BE | width*height*3 bytes RGB8
//! ```
//!
//! Delivery is "latest frame wins": the server never queues. A request is
//! answered with the newest frame whose sequence is greater than the last one
//! delivered on that connection, waiting for the producer if necessary.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

pub const DEVICE_FRAME_SIZE: u32 = 320;
pub const HEADER_LEN: usize = 8;
pub const REQUEST_LATEST: u8 = b'F';
pub const DEFAULT_FETCH_TIMEOUT: Duration = Duration::from_millis(1000);

/// One RGB8 frame from the scope camera.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeFrame {
    pub sequence: u32,
    /// Milliseconds since session start.
    pub timestamp_ms: u64,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB8, `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl ScopeFrame {
    pub fn new(
        sequence: u32,
        timestamp_ms: u64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        let frame = Self {
            sequence,
            timestamp_ms,
            width,
            height,
            pixels,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Solid-colour frame; mostly useful in tests.
    pub fn filled(sequence: u32, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take((width * height * 3) as usize)
            .collect();
        Self {
            sequence,
            timestamp_ms: 0,
            width,
            height,
            pixels,
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.width == 0
            || self.height == 0
            || self.width > u16::MAX as u32
            || self.height > u16::MAX as u32
        {
            return Err(FrameError::Malformed(format!(
                "bad dimensions {}x{}",
                self.width, self.height
            )));
        }
        let expected = self.width as usize * self.height as usize * 3;
        if self.pixels.len() != expected {
            return Err(FrameError::Malformed(format!(
                "payload is {} bytes, expected {expected}",
                self.pixels.len()
            )));
        }
        Ok(())
    }

    /// Device frames are additionally pinned to 320x320.
    pub fn validate_device(&self) -> Result<(), FrameError> {
        self.validate()?;
        if self.width != DEVICE_FRAME_SIZE || self.height != DEVICE_FRAME_SIZE {
            return Err(FrameError::Malformed(format!(
                "device frame must be 320x320, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Copies out the `w`x`h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Vec<u8> {
        let mut out = Vec::with_capacity((w * h * 3) as usize);
        for row in y..y + h {
            let start = ((row * self.width + x) * 3) as usize;
            out.extend_from_slice(&self.pixels[start..start + (w * 3) as usize]);
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&(self.width as u16).to_be_bytes());
        out.extend_from_slice(&(self.height as u16).to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Parsed wire header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub sequence: u32,
    pub width: u16,
    pub height: u16,
}

impl FrameHeader {
    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Self {
        Self {
            sequence: u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            width: u16::from_be_bytes([bytes[4], bytes[5]]),
            height: u16::from_be_bytes([bytes[6], bytes[7]]),
        }
    }

    pub fn payload_len(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }
}

/// Decodes a complete wire frame held in memory.
pub fn decode_frame(bytes: &[u8], timestamp_ms: u64) -> Result<ScopeFrame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Malformed(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    let header = FrameHeader::parse(bytes[..HEADER_LEN].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(FrameError::Malformed(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            header.payload_len()
        )));
    }
    ScopeFrame::new(
        header.sequence,
        timestamp_ms,
        header.width as u32,
        header.height as u32,
        payload.to_vec(),
    )
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame source unreachable: {0}")]
    Unreachable(String),
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame stream ended")]
    EndOfStream,
}

/// Anything that yields scope frames in arrival order.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Result<ScopeFrame, FrameError>;
}

impl<S: FrameSource + ?Sized> FrameSource for Box<S> {
    fn next_frame(&mut self) -> Result<ScopeFrame, FrameError> {
        (**self).next_frame()
    }
}

/// Client for a networked scope.
pub struct TcpFrameClient {
    addr: String,
    timeout: Duration,
    stream: Option<TcpStream>,
    epoch: Instant,
    last_sequence: Option<u32>,
}

impl TcpFrameClient {
    /// `addr` is a `host:port` string. No connection is made until the
    /// first fetch.
    pub fn new(addr: impl Into<String>) -> Self {
        Self::with_timeout(addr, DEFAULT_FETCH_TIMEOUT)
    }

    pub fn with_timeout(addr: impl Into<String>, timeout: Duration) -> Self {
        Self {
            addr: addr.into(),
            timeout,
            stream: None,
            epoch: Instant::now(),
            last_sequence: None,
        }
    }

    fn connect(&self) -> Result<TcpStream, FrameError> {
        let addrs: Vec<SocketAddr> = self
            .addr
            .to_socket_addrs()
            .map_err(|e| FrameError::Unreachable(format!("{}: {e}", self.addr)))?
            .collect();
        let mut last_err = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(stream) => {
                    stream
                        .set_read_timeout(Some(self.timeout))
                        .and_then(|_| stream.set_write_timeout(Some(self.timeout)))
                        .map_err(|e| FrameError::Unreachable(e.to_string()))?;
                    let _ = stream.set_nodelay(true);
                    return Ok(stream);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(FrameError::Unreachable(match last_err {
            Some(e) => format!("{}: {e}", self.addr),
            None => format!("{}: no addresses", self.addr),
        }))
    }

    /// Pulls the most recent frame from the scope.
    pub fn fetch_frame(&mut self) -> Result<ScopeFrame, FrameError> {
        if self.stream.is_none() {
            self.stream = Some(self.connect()?);
        }
        let result = self.fetch_on_open_stream();
        if result.is_err() {
            // Connection state is unknown after a failure.
            self.stream = None;
        }
        let frame = result?;
        frame.validate_device()?;
        if let Some(last) = self.last_sequence {
            if frame.sequence <= last {
                return Err(FrameError::Malformed(format!(
                    "sequence went from {last} to {}",
                    frame.sequence
                )));
            }
        }
        self.last_sequence = Some(frame.sequence);
        Ok(frame)
    }

    fn fetch_on_open_stream(&mut self) -> Result<ScopeFrame, FrameError> {
        let stream = self.stream.as_mut().expect("connected");
        stream.write_all(&[REQUEST_LATEST]).map_err(io_to_frame)?;
        let mut header = [0u8; HEADER_LEN];
        read_exact_or(stream, &mut header)?;
        let header = FrameHeader::parse(&header);
        let mut pixels = vec![0u8; header.payload_len()];
        read_exact_or(stream, &mut pixels)?;
        let timestamp_ms = self.epoch.elapsed().as_millis() as u64;
        ScopeFrame::new(
            header.sequence,
            timestamp_ms,
            header.width as u32,
            header.height as u32,
            pixels,
        )
    }
}

impl FrameSource for TcpFrameClient {
    fn next_frame(&mut self) -> Result<ScopeFrame, FrameError> {
        self.fetch_frame()
    }
}

fn read_exact_or(stream: &mut TcpStream, buf: &mut [u8]) -> Result<(), FrameError> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Err(FrameError::EndOfStream),
            Ok(0) => {
                return Err(FrameError::Malformed(format!(
                    "stream closed after {filled} of {} bytes",
                    buf.len()
                )))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(io_to_frame(e)),
        }
    }
    Ok(())
}

fn io_to_frame(e: io::Error) -> FrameError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => FrameError::Timeout,
        io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::UnexpectedEof => FrameError::EndOfStream,
        _ => FrameError::Unreachable(e.to_string()),
    }
}

#[derive(Default)]
struct Slot {
    latest: Option<Arc<Vec<u8>>>,
    latest_sequence: Option<u32>,
    ended: bool,
}

struct Shared {
    slot: Mutex<Slot>,
    ready: Condvar,
    stop: AtomicBool,
}

/// Serves frames from a producer over TCP with latest-frame-wins semantics.
pub struct FrameServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl FrameServer {
    /// Starts the server. `producer` is polled every `interval`; returning
    /// `None` ends the stream, after which connections are closed once they
    /// have drained the final frame.
    pub fn spawn<P>(bind: &str, interval: Duration, mut producer: P) -> io::Result<Self>
    where
        P: FnMut() -> Option<ScopeFrame> + Send + 'static,
    {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            slot: Mutex::new(Slot::default()),
            ready: Condvar::new(),
            stop: AtomicBool::new(false),
        });

        let producer_shared = Arc::clone(&shared);
        let producer_thread = thread::spawn(move || {
            let mut next_tick = Instant::now();
            while !producer_shared.stop.load(Ordering::Acquire) {
                let frame = producer();
                {
                    let mut slot = producer_shared.slot.lock().unwrap();
                    match frame {
                        Some(frame) => {
                            slot.latest_sequence = Some(frame.sequence);
                            slot.latest = Some(Arc::new(frame.encode()));
                        }
                        None => slot.ended = true,
                    }
                }
                producer_shared.ready.notify_all();
                if producer_shared.slot.lock().unwrap().ended {
                    break;
                }
                next_tick += interval;
                let now = Instant::now();
                if next_tick > now {
                    thread::sleep(next_tick - now);
                } else {
                    next_tick = now;
                }
            }
        });

        let accept_shared = Arc::clone(&shared);
        let accept_thread = thread::spawn(move || {
            let mut workers = Vec::new();
            while !accept_shared.stop.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let conn_shared = Arc::clone(&accept_shared);
                        workers.push(thread::spawn(move || serve_connection(stream, conn_shared)));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
            drop(listener);
            for w in workers {
                let _ = w.join();
            }
        });

        Ok(Self {
            addr,
            shared,
            threads: vec![producer_thread, accept_thread],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops producing and closes the listener and every open connection.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        self.shared.ready.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for FrameServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(mut stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let _ = stream.set_nodelay(true);
    let mut last_sent: Option<u32> = None;
    let mut request = [0u8; 1];
    loop {
        if shared.stop.load(Ordering::Acquire) {
            return;
        }
        match stream.read(&mut request) {
            Ok(0) => return,
            Ok(_) if request[0] == REQUEST_LATEST => {}
            Ok(_) => return,
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut =>
            {
                continue
            }
            Err(_) => return,
        }
        let payload = {
            let mut slot = shared.slot.lock().unwrap();
            loop {
                if shared.stop.load(Ordering::Acquire) {
                    return;
                }
                let fresh = match (slot.latest_sequence, last_sent) {
                    (Some(seq), Some(last)) => seq > last,
                    (Some(_), None) => true,
                    (None, _) => false,
                };
                if fresh {
                    last_sent = slot.latest_sequence;
                    break Arc::clone(slot.latest.as_ref().unwrap());
                }
                if slot.ended {
                    return;
                }
                slot = shared
                    .ready
                    .wait_timeout(slot, Duration::from_millis(50))
                    .unwrap()
                    .0;
            }
        };
        if stream.write_all(&payload).is_err() {
            return;
        }
    }
}
