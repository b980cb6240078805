//! Minimal HTTP/1.1 message handling: fixed-length bodies only, no chunked
//! transfer, one message per buffer.

use std::io::{self, Read};

use thiserror::Error;

const MAX_HEADERS: usize = 64;
pub const MAX_MESSAGE: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HttpError {
    #[error("malformed HTTP message: {0}")]
    Malformed(String),
    #[error("incomplete HTTP message")]
    Incomplete,
    #[error("{0} trailing bytes after message")]
    Trailing(usize),
}

/// Application logic behind a server: one complete request in, one complete
/// response out.
pub trait HttpHandler: Send {
    fn handle(&mut self, request: &[u8]) -> Vec<u8>;
}

impl<F: FnMut(&[u8]) -> Vec<u8> + Send> HttpHandler for F {
    fn handle(&mut self, request: &[u8]) -> Vec<u8> {
        self(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

fn find_header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }

    /// Path without the query string.
    pub fn path(&self) -> &str {
        self.target.split_once('?').map_or(&self.target, |(p, _)| p)
    }

    /// Decoded query parameters in order of appearance.
    pub fn query(&self) -> Vec<(String, String)> {
        match self.target.split_once('?') {
            Some((_, q)) => url::form_urlencoded::parse(q.as_bytes()).into_owned().collect(),
            None => Vec::new(),
        }
    }

    pub fn query_param(&self, name: &str) -> Option<String> {
        self.query().into_iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

impl Response {
    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

fn collect_headers(raw: &[httparse::Header<'_>]) -> Result<Vec<(String, String)>, HttpError> {
    raw.iter()
        .map(|h| {
            let value = std::str::from_utf8(h.value).map_err(|_| HttpError::Malformed(format!("header {} is not UTF-8", h.name)))?;
            Ok((h.name.to_ascii_lowercase(), value.trim_matches([' ', '\t']).to_string()))
        })
        .collect()
}

fn content_length(headers: &[(String, String)]) -> Result<usize, HttpError> {
    if find_header(headers, "transfer-encoding").is_some() {
        return Err(HttpError::Malformed("transfer-encoding is not supported".into()));
    }
    match find_header(headers, "content-length") {
        None => Ok(0),
        Some(v) => v.parse().map_err(|_| HttpError::Malformed(format!("bad content-length {v:?}"))),
    }
}

/// Total length of the first complete request in `buf`, if there is one.
pub fn request_len(buf: &[u8]) -> Result<Option<usize>, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut req = httparse::Request::new(&mut headers);
    match req.parse(buf).map_err(|e| HttpError::Malformed(e.to_string()))? {
        httparse::Status::Partial => Ok(None),
        httparse::Status::Complete(head) => {
            let body = content_length(&collect_headers(req.headers)?)?;
            Ok((buf.len() >= head + body).then_some(head + body))
        }
    }
}

/// Total length of the first complete response in `buf`, if there is one.
pub fn response_len(buf: &[u8]) -> Result<Option<usize>, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut resp = httparse::Response::new(&mut headers);
    match resp.parse(buf).map_err(|e| HttpError::Malformed(e.to_string()))? {
        httparse::Status::Partial => Ok(None),
        httparse::Status::Complete(head) => {
            let body = content_length(&collect_headers(resp.headers)?)?;
            Ok((buf.len() >= head + body).then_some(head + body))
        }
    }
}

pub fn parse_request(buf: &[u8]) -> Result<Request, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut req = httparse::Request::new(&mut headers);
    let head = match req.parse(buf).map_err(|e| HttpError::Malformed(e.to_string()))? {
        httparse::Status::Complete(n) => n,
        httparse::Status::Partial => return Err(HttpError::Incomplete),
    };
    let headers = collect_headers(req.headers)?;
    let len = content_length(&headers)?;
    let end = head + len;
    if buf.len() < end {
        return Err(HttpError::Incomplete);
    }
    if buf.len() > end {
        return Err(HttpError::Trailing(buf.len() - end));
    }
    Ok(Request {
        method: req.method.unwrap_or_default().to_string(),
        target: req.path.unwrap_or_default().to_string(),
        headers,
        body: buf[head..end].to_vec(),
    })
}

pub fn parse_response(buf: &[u8]) -> Result<Response, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut resp = httparse::Response::new(&mut headers);
    let head = match resp.parse(buf).map_err(|e| HttpError::Malformed(e.to_string()))? {
        httparse::Status::Complete(n) => n,
        httparse::Status::Partial => return Err(HttpError::Incomplete),
    };
    let headers = collect_headers(resp.headers)?;
    let len = content_length(&headers)?;
    let end = head + len;
    if buf.len() < end {
        return Err(HttpError::Incomplete);
    }
    if buf.len() > end {
        return Err(HttpError::Trailing(buf.len() - end));
    }
    Ok(Response { status: resp.code.unwrap_or_default(), headers, body: buf[head..end].to_vec() })
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        405 => "Method Not Allowed",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        _ => "Unknown",
    }
}

/// A JSON response with an explicit content length.
pub fn json_response(status: u16, body: &[u8]) -> Vec<u8> {
    let mut out =
        format!("HTTP/1.1 {status} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n", reason(status), body.len()).into_bytes();
    out.extend_from_slice(body);
    out
}

/// Reads exactly one request or response from `reader`.
pub fn read_message<R: Read>(reader: &mut R, is_request: bool) -> io::Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 4096];
    loop {
        let len = if is_request { request_len(&buf) } else { response_len(&buf) }.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if let Some(len) = len {
            buf.truncate(len);
            return Ok(buf);
        }
        if buf.len() > MAX_MESSAGE {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "HTTP message too large"));
        }
        let n = reader.read(&mut chunk)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed mid-message"));
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}
