//! Network front-end. One listening port serves both WebSocket clients
//! (detected by an HTTP `GET ` preamble) and native clients speaking
//! 4-byte big-endian length-prefixed JSON frames.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use super::protocol::{HelloRequest, MessageType, WireMessage};
use super::service::{Service, ServiceError};

/// Largest accepted frame body.
pub const MAX_FRAME_BYTES: usize = 16 << 20;

pub fn encode_frame(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + text.len());
    out.extend_from_slice(&(text.len() as u32).to_be_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> io::Result<Option<String>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {n} bytes exceeds limit"),
        ));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).await?;
    String::from_utf8(body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, text: &str) -> io::Result<()> {
    w.write_all(&encode_frame(text)).await?;
    w.flush().await
}

/// Spawns the accept loop and a housekeeping ticker.
pub async fn spawn_server(
    addr: &str,
    service: Arc<Service>,
    tick: Duration,
) -> io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, service, tick));
    Ok((local, handle))
}

pub async fn serve(listener: TcpListener, service: Arc<Service>, tick: Duration) {
    let mut ticker = tokio::time::interval(tick);
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                service.tick();
            }
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let service = service.clone();
                    tokio::spawn(async move {
                        if let Err(e) = handle_connection(stream, service).await {
                            tracing::debug!(%peer, error = %e, "connection closed with error");
                        }
                    });
                }
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            },
        }
    }
}

async fn sniff(stream: &TcpStream) -> io::Result<Option<[u8; 4]>> {
    let mut buf = [0u8; 4];
    for _ in 0..200 {
        let n = stream.peek(&mut buf).await?;
        if n == 0 {
            return Ok(None);
        }
        if n == 4 {
            return Ok(Some(buf));
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    Err(io::Error::new(io::ErrorKind::TimedOut, "short preamble"))
}

async fn handle_connection(stream: TcpStream, service: Arc<Service>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let Some(head) = sniff(&stream).await? else {
        return Ok(());
    };
    let (in_tx, in_rx) = unbounded_channel::<String>();
    let (out_tx, out_rx) = unbounded_channel::<String>();
    if &head == b"GET " {
        let ws = tokio_tungstenite::accept_async(stream)
            .await
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let (mut sink, mut source) = ws.split();
        let reader = tokio::spawn(async move {
            while let Some(Ok(msg)) = source.next().await {
                let text = match msg {
                    Message::Text(t) => t.to_string(),
                    Message::Binary(b) => match String::from_utf8(b.to_vec()) {
                        Ok(t) => t,
                        Err(_) => continue,
                    },
                    Message::Close(_) => break,
                    _ => continue,
                };
                if in_tx.send(text).is_err() {
                    break;
                }
            }
        });
        let writer = tokio::spawn(async move {
            let mut out_rx = out_rx;
            while let Some(text) = out_rx.recv().await {
                if sink.send(Message::text(text)).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });
        drive(&service, in_rx, out_tx).await;
        reader.abort();
        let _ = writer.await;
    } else {
        let (mut rd, mut wr) = stream.into_split();
        let reader = tokio::spawn(async move {
            while let Ok(Some(text)) = read_frame(&mut rd).await {
                if in_tx.send(text).is_err() {
                    break;
                }
            }
        });
        let writer = tokio::spawn(async move {
            let mut out_rx = out_rx;
            while let Some(text) = out_rx.recv().await {
                if write_frame(&mut wr, &text).await.is_err() {
                    break;
                }
            }
            let _ = wr.shutdown().await;
        });
        drive(&service, in_rx, out_tx).await;
        reader.abort();
        let _ = writer.await;
    }
    Ok(())
}

/// Runs one client: `hello` handshake, then pumps messages both ways until
/// either side goes away.
async fn drive(service: &Service, mut incoming: UnboundedReceiver<String>, outgoing: UnboundedSender<String>) {
    let mut handle = loop {
        let Some(text) = incoming.recv().await else {
            return;
        };
        let hello = WireMessage::decode(&text).map_err(ServiceError::from).and_then(|m| {
            if m.kind != MessageType::Hello {
                return Err(ServiceError::HandshakeRequired);
            }
            let req: HelloRequest = m.payload_as()?;
            service.connect(req.kind, req.client_id)
        });
        match hello {
            Ok(h) => break h,
            Err(e) => {
                let _ = outgoing.send(e.to_message(None).encode());
            }
        }
    };
    let id = handle.id.clone();
    loop {
        tokio::select! {
            text = incoming.recv() => match text {
                Some(text) => service.handle_text(&id, &text),
                None => break,
            },
            msg = handle.recv() => match msg {
                Some(msg) => {
                    if outgoing.send(msg.encode()).is_err() {
                        break;
                    }
                }
                None => break,
            },
        }
    }
    service.disconnect(&id);
}
