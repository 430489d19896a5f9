use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use log::{info, warn};
use thiserror::Error;

use super::message::{read_client_message, ProtocolError, ServiceMessage};
use super::session::{step, Engine, SessionState};

/// Environment variable overriding the listen address.
pub const LISTEN_ENV: &str = "VOCMD_LISTEN";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn send<W: Write>(w: &mut W, msgs: &[ServiceMessage]) -> io::Result<()> {
    for m in msgs {
        writeln!(w, "{m}")?;
    }
    w.flush()
}

/// Drives one client session until BYE or end of stream. Malformed lines
/// are answered with `ERROR malformed` and the session continues.
pub fn run_session<R: BufRead, W: Write>(reader: &mut R, writer: &mut W, engine: &dyn Engine) -> io::Result<()> {
    let mut state = SessionState::default();
    loop {
        match read_client_message(reader) {
            Ok(None) => return Ok(()),
            Ok(Some(msg)) => {
                let s = step(state, &msg, engine);
                send(writer, &s.out)?;
                state = s.state;
                if s.close {
                    return Ok(());
                }
            }
            Err(ProtocolError::Malformed(line)) => send(writer, &[ServiceMessage::error("malformed", line)])?,
            Err(e @ ProtocolError::TooLarge(_)) => {
                return send(writer, &[ServiceMessage::error("too_large", e.to_string())]);
            }
            Err(ProtocolError::Io(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(ProtocolError::Io(e)) => return Err(e),
        }
    }
}

/// A listening service handling one client session at a time; clients that
/// connect while a session is active get `ERROR busy` and are closed.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn bind(addr: &str, engine: Arc<dyn Engine + Send + Sync>) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr: addr.to_string(), source })?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = stop.clone();
        let thread = std::thread::spawn(move || accept_loop(listener, engine, stop2));
        info!("listening on {local}");
        Ok(Self { addr: local, stop, thread: Some(thread) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn accept_loop(listener: TcpListener, engine: Arc<dyn Engine + Send + Sync>, stop: Arc<AtomicBool>) {
    let busy = Arc::new(AtomicBool::new(false));
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let mut stream = match conn {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        if busy.swap(true, Ordering::SeqCst) {
            let _ = send(&mut stream, &[ServiceMessage::error("busy", "")]);
            continue;
        }
        let engine = engine.clone();
        let busy = busy.clone();
        std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            info!("session from {peer} started");
            let read_half = stream.try_clone();
            let mut writer = BufWriter::new(stream);
            let result = read_half
                .and_then(|r| run_session(&mut BufReader::new(r), &mut writer, engine.as_ref()));
            // free the slot before the client can observe the close
            busy.store(false, Ordering::SeqCst);
            drop(writer);
            if let Err(e) = result {
                warn!("session from {peer} ended with error: {e}");
            }
            info!("session from {peer} ended");
        });
    }
}
