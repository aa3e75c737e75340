//! External matcher processes.
//!
//! Wire protocol, parent to child on stdin:
//!
//! ```text
//! MMREG/1 <wa> <ha> <wb> <hb>\n
//! wa*ha little-endian f32 (image A, row-major, [0, 1])
//! wb*hb little-endian f32 (image B)
//! ```
//!
//! Child to parent on stdout:
//!
//! ```text
//! MATCHES <n>\n
//! xa ya xb yb conf\n      (n lines)
//! ```
//!
//! Exit status 0 means success. Stderr is kept for diagnostics.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::image::RasterImage;

use super::{Keypoint, MatchPair, MatchSet, Matcher};

const POLL_INTERVAL: Duration = Duration::from_millis(5);

/// A matcher backed by a child process speaking the `MMREG/1` protocol.
#[derive(Debug, Clone)]
pub struct ExternalMatcher {
    pub name: String,
    pub command: String,
    pub timeout: Duration,
}

impl ExternalMatcher {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        let command = command.into();
        Self {
            name: command.clone(),
            command,
            timeout,
        }
    }
}

impl Matcher for ExternalMatcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn match_images(&self, a: &RasterImage, b: &RasterImage) -> Result<MatchSet> {
        run_external_matcher(a, b, &self.command, self.timeout)
    }
}

pub(crate) fn encode_request(a: &RasterImage, b: &RasterImage) -> Vec<u8> {
    let header = format!("MMREG/1 {} {} {} {}\n", a.width(), a.height(), b.width(), b.height());
    let mut buf = Vec::with_capacity(header.len() + 4 * (a.data().len() + b.data().len()));
    buf.extend_from_slice(header.as_bytes());
    for img in [a, b] {
        for &v in img.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

/// Runs `plugin` through the shell, feeds it both single-channel images and
/// parses the returned correspondences.
pub fn run_external_matcher(a: &RasterImage, b: &RasterImage, plugin: &str, timeout: Duration) -> Result<MatchSet> {
    a.require_channels(1)?;
    b.require_channels(1)?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(plugin)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Matcher(format!("cannot spawn `{plugin}`: {e}")))?;

    let request = encode_request(a, b);
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = thread::spawn(move || {
        // A plugin may exit without draining stdin; a broken pipe is not our error.
        let _ = stdin.write_all(&request);
    });
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                let _ = writer.join();
                return Err(Error::Matcher(format!(
                    "`{plugin}` timed out after {:.1} s",
                    timeout.as_secs_f64()
                )));
            }
            Ok(None) => thread::sleep(POLL_INTERVAL),
            Err(e) => return Err(Error::Matcher(format!("waiting for `{plugin}`: {e}"))),
        }
    };
    let _ = writer.join();
    let stdout = out_reader
        .join()
        .map_err(|_| Error::Matcher("stdout reader panicked".into()))?
        .map_err(|e| Error::Matcher(format!("reading plugin output: {e}")))?;
    let stderr = err_reader.join().unwrap_or_default();
    let diagnostics = String::from_utf8_lossy(&stderr).trim().to_string();

    if !status.success() {
        return Err(Error::Matcher(format!(
            "`{plugin}` exited with {status}{}",
            if diagnostics.is_empty() {
                String::new()
            } else {
                format!(": {diagnostics}")
            }
        )));
    }
    let set = parse_response(&String::from_utf8_lossy(&stdout))?;
    check_bounds(&set, a, b)?;
    Ok(set)
}

/// Parses a `MATCHES` response. Repeated coordinates map to the same keypoint,
/// so a point matched twice surfaces as a non-injective matching.
pub(crate) fn parse_response(text: &str) -> Result<MatchSet> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Matcher("empty plugin output".into()))?;
    let n: usize = header
        .strip_prefix("MATCHES ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Matcher(format!("malformed header `{header}`")))?;

    let mut set = MatchSet::default();
    let mut index_a: HashMap<(u64, u64), usize> = HashMap::new();
    let mut index_b: HashMap<(u64, u64), usize> = HashMap::new();
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Matcher(format!("expected {n} matches, got {i}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Matcher(format!("malformed match line {}: `{line}`", i + 2)))?;
        let [xa, ya, xb, yb, conf] = values[..] else {
            return Err(Error::Matcher(format!("match line {} needs 5 values: `{line}`", i + 2)));
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Matcher(format!("non-finite value on match line {}", i + 2)));
        }
        let ia = intern(&mut index_a, &mut set.keypoints_a, Point::new(xa, ya));
        let ib = intern(&mut index_b, &mut set.keypoints_b, Point::new(xb, yb));
        set.pairs.push(MatchPair {
            index_a: ia,
            index_b: ib,
            confidence: conf,
        });
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Matcher(format!("trailing output after {n} matches")));
    }
    set.validate()?;
    Ok(set)
}

fn intern(index: &mut HashMap<(u64, u64), usize>, keypoints: &mut Vec<Keypoint>, p: Point) -> usize {
    *index.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
        keypoints.push(Keypoint::at(p));
        keypoints.len() - 1
    })
}

fn check_bounds(set: &MatchSet, a: &RasterImage, b: &RasterImage) -> Result<()> {
    let inside = |p: Point, img: &RasterImage| {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (img.width() - 1) as f64 && p.y <= (img.height() - 1) as f64
    };
    for (k, img, label) in set
        .keypoints_a
        .iter()
        .map(|k| (k, a, "a"))
        .chain(set.keypoints_b.iter().map(|k| (k, b, "b")))
    {
        if !inside(k.position, img) {
            return Err(Error::Matcher(format!(
                "point ({}, {}) outside image {label}",
                k.position.x, k.position.y
            )));
        }
    }
    Ok(())
}
