use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use super::message::ProtocolMessage;
use super::wire::{read_frame, write_frame, WirePrecision};
use crate::{Error, Result};

/// One half of an in-process byte pipe. Dropping it closes the stream for
/// the peer.
#[derive(Debug)]
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

/// Two connected in-process endpoints.
pub fn duplex_pipe() -> (PipeEnd, PipeEnd) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    let end = |tx, rx| PipeEnd {
        tx,
        rx,
        buf: Vec::new(),
        pos: 0,
    };
    (end(a_tx, a_rx), end(b_tx, b_rx))
}

impl Read for PipeEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        while self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        if data.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(data.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer endpoint dropped"))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Message-level view of a byte stream.
#[derive(Debug)]
pub struct FramedLink<S> {
    stream: S,
    precision: WirePrecision,
    bytes_sent: u64,
    bytes_received: u64,
}

impl<S: Read + Write> FramedLink<S> {
    pub fn new(stream: S, precision: WirePrecision) -> Self {
        Self {
            stream,
            precision,
            bytes_sent: 0,
            bytes_received: 0,
        }
    }

    pub fn precision(&self) -> WirePrecision {
        self.precision
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let frame = msg.to_frame(self.precision);
        write_frame(&mut self.stream, &frame)?;
        self.bytes_sent += frame.encoded_len() as u64;
        Ok(())
    }

    /// Next message; the peer closing the stream is a protocol error.
    pub fn recv(&mut self) -> Result<ProtocolMessage> {
        let frame = read_frame(&mut self.stream)?.ok_or_else(|| Error::protocol("peer closed the stream"))?;
        self.bytes_received += frame.encoded_len() as u64;
        ProtocolMessage::from_frame(&frame)
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

/// Connects to a listening peer, retrying while it comes up.
pub fn tcp_connect(addr: impl ToSocketAddrs + Copy, attempts: usize) -> Result<TcpStream> {
    let mut last = None;
    for i in 0..attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => {
                last = Some(e);
                std::thread::sleep(Duration::from_millis(50 * (i as u64 + 1).min(10)));
            }
        }
    }
    Err(last.map(Error::from).unwrap_or_else(|| Error::protocol("no connection attempt made")))
}

/// Accepts one peer.
pub fn tcp_accept(listener: &TcpListener) -> Result<TcpStream> {
    let (s, _) = listener.accept()?;
    s.set_nodelay(true)?;
    Ok(s)
}
