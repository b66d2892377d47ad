//! Backend served by child processes over newline-delimited JSON.
//!
//! Each child handles one request at a time:
//!
//! ```text
//! -> {"type":"detect","image":"<path>"}
//! <- {"detections":[{"bbox":[x,y,w,h],"score":s}, ...]}
//! -> {"type":"segment","image":"<path>","bbox":[x,y,w,h]}
//! <- {"candidates":[{"segmentation":{"size":[h,w],"counts":[...]},"quality":q}, ...]}
//! ```
//!
//! A response of the form `{"error": "..."}` is reported as a backend
//! failure for that image. Concurrency comes from running several children.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendError, Candidate, Detector, ImageRef, Segmenter};
use crate::dataset::{Detection, RleJson};
use crate::raster::BBox;

#[derive(Serialize)]
struct Request<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    image: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<BBox>,
}

#[derive(Deserialize)]
struct ErrorResponse {
    error: String,
}

#[derive(Deserialize)]
struct DetectResponse {
    detections: Vec<WireDetection>,
}

#[derive(Deserialize)]
struct WireDetection {
    bbox: BBox,
    score: f64,
}

#[derive(Deserialize)]
struct SegmentResponse {
    candidates: Vec<WireCandidate>,
}

#[derive(Deserialize)]
struct WireCandidate {
    segmentation: RleJson,
    quality: f64,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    /// Response lines read so far.
    lines: usize,
}

impl Worker {
    fn spawn(command: &[String]) -> std::io::Result<Self> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
            lines: 0,
        })
    }

    fn round_trip(&mut self, request: &str) -> Result<(usize, String), BackendError> {
        self.stdin.write_all(request.as_bytes())?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()?;
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line)?;
        self.lines += 1;
        if n == 0 {
            return Err(BackendError::Protocol {
                line: self.lines,
                message: "worker closed its output".into(),
            });
        }
        Ok((self.lines, line))
    }
}

pub struct ProcessBackend {
    workers: Vec<Mutex<Worker>>,
    next: AtomicUsize,
}

impl std::fmt::Debug for ProcessBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessBackend")
            .field("workers", &self.workers.len())
            .finish()
    }
}

impl ProcessBackend {
    /// Starts `processes` copies of `command` (program followed by arguments).
    pub fn spawn(command: &[String], processes: usize) -> Result<Self, BackendError> {
        if command.is_empty() || processes == 0 {
            return Err(BackendError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "empty command or zero processes",
            )));
        }
        let workers = (0..processes)
            .map(|_| Worker::spawn(command).map(Mutex::new))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            workers,
            next: AtomicUsize::new(0),
        })
    }

    /// A free worker if any, otherwise waits on one chosen round-robin.
    fn acquire(&self) -> MutexGuard<'_, Worker> {
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        let n = self.workers.len();
        for k in 0..n {
            if let Ok(w) = self.workers[(start + k) % n].try_lock() {
                return w;
            }
        }
        self.workers[start % n]
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn call<T: DeserializeOwned>(
        &self,
        image: &ImageRef,
        request: &Request<'_>,
    ) -> Result<(usize, T), BackendError> {
        let text = serde_json::to_string(request).expect("request serializes");
        let (line_no, line) = self.acquire().round_trip(&text)?;
        let protocol = |message: String| BackendError::Protocol {
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
        if let Ok(err) = serde_json::from_value::<ErrorResponse>(value.clone()) {
            return Err(BackendError::Failed {
                image_id: image.image_id,
                message: err.error,
            });
        }
        let parsed = serde_json::from_value(value)
            .map_err(|e| protocol(format!("unexpected {} response: {e}", request.kind)))?;
        Ok((line_no, parsed))
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        for w in &mut self.workers {
            let w = w.get_mut().unwrap_or_else(|p| p.into_inner());
            let _ = w.child.kill();
            let _ = w.child.wait();
        }
    }
}

impl Detector for ProcessBackend {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        let locator = image.locator();
        let request = Request {
            kind: "detect",
            image: &locator,
            bbox: None,
        };
        let (line, resp): (usize, DetectResponse) = self.call(image, &request)?;
        resp.detections
            .into_iter()
            .map(|d| {
                Detection::new(image.image_id, d.bbox, d.score).map_err(|e| {
                    BackendError::Protocol {
                        line,
                        message: e.to_string(),
                    }
                })
            })
            .collect()
    }
}

impl Segmenter for ProcessBackend {
    fn segment(
        &self,
        image: &ImageRef,
        prompt: &BBox,
        max_candidates: usize,
    ) -> Result<Vec<Candidate>, BackendError> {
        let locator = image.locator();
        let request = Request {
            kind: "segment",
            image: &locator,
            bbox: Some(*prompt),
        };
        let (line, resp): (usize, SegmentResponse) = self.call(image, &request)?;
        let protocol = |message: String| BackendError::Protocol { line, message };
        resp.candidates
            .into_iter()
            .take(max_candidates)
            .map(|c| {
                if !(0.0..=1.0).contains(&c.quality) {
                    return Err(protocol(format!("quality {} outside [0, 1]", c.quality)));
                }
                let mask = c
                    .segmentation
                    .decode_for(image.width, image.height)
                    .map_err(|e| protocol(e.to_string()))?;
                Ok(Candidate::new(mask, c.quality))
            })
            .collect()
    }
}
