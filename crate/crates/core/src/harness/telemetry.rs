//! TCP telemetry: every metrics line is fanned out to connected clients.
//!
//! Publishing never blocks. Each client has a bounded queue drained by its
//! own writer thread; a client whose queue fills up, or whose socket fails,
//! is dropped.

use std::io::{BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};

pub const DEFAULT_CLIENT_QUEUE: usize = 4096;

const ACCEPT_POLL: Duration = Duration::from_millis(10);

struct Client {
    tx: SyncSender<Arc<str>>,
    writer: JoinHandle<()>,
}

#[derive(Default)]
struct Shared {
    clients: Mutex<Vec<Client>>,
    stop: AtomicBool,
}

pub struct TelemetryServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    retired: Vec<JoinHandle<()>>,
}

impl TelemetryServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Self::bind_with_queue(addr, DEFAULT_CLIENT_QUEUE)
    }

    /// Bind with a per-client queue of `queue` lines.
    pub fn bind_with_queue(addr: impl ToSocketAddrs, queue: usize) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let s = Arc::clone(&shared);
        let acceptor = thread::Builder::new()
            .name("telemetry-accept".into())
            .spawn(move || accept_loop(listener, s, queue.max(1)))
            .map_err(Error::Net)?;
        Ok(Self {
            addr,
            shared,
            acceptor: Some(acceptor),
            retired: Vec::new(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients.lock().unwrap().len()
    }

    /// Queue one line (without trailing newline) for every connected client.
    pub fn publish(&self, line: impl Into<Arc<str>>) {
        let line = line.into();
        let mut clients = self.shared.clients.lock().unwrap();
        clients.retain(|c| match c.tx.try_send(Arc::clone(&line)) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => false,
        });
    }

    /// Stop accepting, deliver everything already queued and close all clients.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        let clients = std::mem::take(&mut *self.shared.clients.lock().unwrap());
        for c in clients {
            drop(c.tx);
            self.retired.push(c.writer);
        }
        for w in self.retired.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, queue: usize) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let _ = stream.set_nodelay(true);
                let (tx, rx) = sync_channel(queue);
                let spawned = thread::Builder::new()
                    .name("telemetry-client".into())
                    .spawn(move || write_loop(stream, rx));
                if let Ok(writer) = spawned {
                    shared.clients.lock().unwrap().push(Client { tx, writer });
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(_) => thread::sleep(ACCEPT_POLL),
        }
    }
}

fn write_loop(stream: TcpStream, rx: Receiver<Arc<str>>) {
    let mut out = BufWriter::new(stream);
    loop {
        let line = match rx.try_recv() {
            Ok(line) => line,
            Err(_) => {
                // queue drained: push buffered bytes before blocking
                if out.flush().is_err() {
                    return;
                }
                match rx.recv() {
                    Ok(line) => line,
                    Err(_) => break,
                }
            }
        };
        if out.write_all(line.as_bytes()).and_then(|_| out.write_all(b"\n")).is_err() {
            return;
        }
    }
    if out.flush().is_ok() {
        let _ = out.get_ref().shutdown(std::net::Shutdown::Write);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::time::Instant;

    fn wait_for(server: &TelemetryServer, n: usize) {
        let deadline = Instant::now() + Duration::from_secs(5);
        while server.client_count() != n {
            assert!(Instant::now() < deadline, "client count stuck at {}", server.client_count());
            thread::sleep(Duration::from_millis(2));
        }
    }

    #[test]
    fn client_receives_lines_after_connect() {
        let server = TelemetryServer::bind("127.0.0.1:0").unwrap();
        server.publish("before");
        let stream = TcpStream::connect(server.local_addr()).unwrap();
        wait_for(&server, 1);
        for i in 0..100 {
            server.publish(format!("{{\"i\":{i}}}"));
        }
        server.shutdown();
        let lines: Vec<String> = BufReader::new(stream).lines().map(|l| l.unwrap()).collect();
        let want: Vec<String> = (0..100).map(|i| format!("{{\"i\":{i}}}")).collect();
        assert_eq!(lines, want);
    }

    #[test]
    fn stalled_client_is_dropped_without_blocking() {
        let server = TelemetryServer::bind_with_queue("127.0.0.1:0", 4).unwrap();
        let _stalled = TcpStream::connect(server.local_addr()).unwrap();
        wait_for(&server, 1);
        let big = "x".repeat(64 * 1024);
        let start = Instant::now();
        for _ in 0..2000 {
            server.publish(big.as_str());
        }
        assert!(start.elapsed() < Duration::from_secs(5));
        assert_eq!(server.client_count(), 0);
    }

    #[test]
    fn closed_client_does_not_affect_others() {
        let server = TelemetryServer::bind("127.0.0.1:0").unwrap();
        let gone = TcpStream::connect(server.local_addr()).unwrap();
        let mut keep = TcpStream::connect(server.local_addr()).unwrap();
        wait_for(&server, 2);
        drop(gone);
        for i in 0..50 {
            server.publish(i.to_string());
            thread::sleep(Duration::from_millis(1));
        }
        server.shutdown();
        let mut text = String::new();
        keep.read_to_string(&mut text).unwrap();
        assert_eq!(text.lines().count(), 50);
    }

    #[test]
    fn bind_failure_is_reported() {
        let a = TelemetryServer::bind("127.0.0.1:0").unwrap();
        assert!(TelemetryServer::bind(a.local_addr()).is_err());
    }
}
