//! DVS event parsing and event-to-frame aggregation.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::round_shift_half_even;
use crate::tensor::Tensor;

pub const BINARY_MAGIC: &[u8; 8] = b"JEVT0001";
pub const FRAME_MAGIC: &[u8; 8] = b"JFRM0001";
pub const BINARY_RECORD_BYTES: usize = 13;

/// Default time window, microseconds.
pub const DEFAULT_DT_US: u64 = 10_000;
/// Default events per frame in count mode.
pub const DEFAULT_N_EVT: usize = 5000;
/// Number of frame channels: positive count, negative count, signed sum.
pub const FRAME_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry { width: 640, height: 480 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// Guess from leading bytes: binary files carry a magic.
    pub fn sniff(bytes: &[u8]) -> EventFormat {
        if bytes.starts_with(BINARY_MAGIC) {
            EventFormat::Binary
        } else {
            EventFormat::Csv
        }
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("malformed record at {location}: {reason}")]
    Malformed { location: String, reason: String },
    #[error("timestamp regression at {location}: {current} follows {previous}")]
    TimestampRegression { location: String, previous: u64, current: u64 },
    #[error("event at {location} out of sensor bounds: ({x}, {y}) not inside {width}x{height}")]
    OutOfBounds { location: String, x: u64, y: u64, width: u16, height: u16 },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("frame dims {height}x{width} not divisible by {factor}")]
    NotDivisible { height: usize, width: usize, factor: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Validator {
    geom: SensorGeometry,
    last_t: Option<u64>,
}

impl Validator {
    fn check(&mut self, ev: Event, location: impl Fn() -> String) -> Result<(), EventError> {
        if ev.x >= self.geom.width || ev.y >= self.geom.height {
            return Err(EventError::OutOfBounds { location: location(), x: ev.x as u64, y: ev.y as u64, width: self.geom.width, height: self.geom.height });
        }
        if ev.p != 1 && ev.p != -1 {
            return Err(EventError::Malformed { location: location(), reason: format!("polarity {} not in {{-1, 1}}", ev.p) });
        }
        if let Some(prev) = self.last_t {
            if ev.t < prev {
                return Err(EventError::TimestampRegression { location: location(), previous: prev, current: ev.t });
            }
        }
        self.last_t = Some(ev.t);
        Ok(())
    }
}

/// Check bounds, polarity and timestamp order of in-memory events.
pub fn validate_events(events: &[Event], geom: SensorGeometry) -> Result<(), EventError> {
    let mut v = Validator { geom, last_t: None };
    for (i, &ev) in events.iter().enumerate() {
        v.check(ev, || format!("event {i}"))?;
    }
    Ok(())
}

/// Parse `t_us,x,y,p` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_csv<R: BufRead>(reader: R, geom: SensorGeometry) -> Result<Vec<Event>, EventError> {
    let mut out = Vec::new();
    let mut v = Validator { geom, last_t: None };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let loc = || format!("line {lineno}");
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(EventError::Malformed { location: loc(), reason: format!("expected 4 fields, found {}", fields.len()) });
        }
        let bad = |what: &str, f: &str| EventError::Malformed { location: loc(), reason: format!("invalid {what} '{f}'") };
        let t: u64 = fields[0].parse().map_err(|_| bad("timestamp", fields[0]))?;
        let x: u64 = fields[1].parse().map_err(|_| bad("x", fields[1]))?;
        let y: u64 = fields[2].parse().map_err(|_| bad("y", fields[2]))?;
        let p: i64 = fields[3].parse().map_err(|_| bad("polarity", fields[3]))?;
        if x >= geom.width as u64 || y >= geom.height as u64 {
            return Err(EventError::OutOfBounds { location: loc(), x, y, width: geom.width, height: geom.height });
        }
        if p != 1 && p != -1 {
            return Err(EventError::Malformed { location: loc(), reason: format!("polarity {p} not in {{-1, 1}}") });
        }
        let ev = Event::new(t, x as u16, y as u16, p as i8);
        v.check(ev, loc)?;
        out.push(ev);
    }
    Ok(out)
}

/// Parse the binary format: magic then 13-byte little-endian records.
pub fn parse_binary<R: Read>(mut reader: R, geom: SensorGeometry) -> Result<Vec<Event>, EventError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    if bytes.len() < BINARY_MAGIC.len() || &bytes[..8] != BINARY_MAGIC {
        return Err(EventError::BadMagic { expected: "JEVT0001".into() });
    }
    let body = &bytes[8..];
    if body.len() % BINARY_RECORD_BYTES != 0 {
        let offset = 8 + body.len() / BINARY_RECORD_BYTES * BINARY_RECORD_BYTES;
        return Err(EventError::Malformed {
            location: format!("byte offset {offset}"),
            reason: format!("trailing {} bytes do not form a record", body.len() % BINARY_RECORD_BYTES),
        });
    }
    let mut out = Vec::with_capacity(body.len() / BINARY_RECORD_BYTES);
    let mut v = Validator { geom, last_t: None };
    for (i, rec) in body.chunks_exact(BINARY_RECORD_BYTES).enumerate() {
        let ev = Event {
            t: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(rec[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(rec[10..12].try_into().unwrap()),
            p: rec[12] as i8,
        };
        v.check(ev, || format!("byte offset {}", 8 + i * BINARY_RECORD_BYTES))?;
        out.push(ev);
    }
    Ok(out)
}

pub fn parse_events(bytes: &[u8], format: EventFormat, geom: SensorGeometry) -> Result<Vec<Event>, EventError> {
    match format {
        EventFormat::Csv => parse_csv(bytes, geom),
        EventFormat::Binary => parse_binary(bytes, geom),
    }
}

pub fn write_csv<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    writeln!(w, "# t_us,x,y,p")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    for e in events {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&[e.p as u8])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindowMeta {
    /// Window `(t_start, t_start + dt]`.
    Time { index: u64, t_start: i64, dt: u64 },
    /// Events `[first_index, first_index + n_evt)` of the stream.
    Count { index: u64, first_index: u64, n_evt: u64 },
}

/// A 3-channel accumulated frame: positive count, negative count, signed sum.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub data: Tensor<i32>,
    pub meta: WindowMeta,
}

impl EventFrame {
    pub fn zeros(height: usize, width: usize, meta: WindowMeta) -> Self {
        EventFrame { data: Tensor::zeros(FRAME_CHANNELS, height, width), meta }
    }

    pub fn height(&self) -> usize {
        self.data.h
    }

    pub fn width(&self) -> usize {
        self.data.w
    }

    #[inline]
    pub fn accumulate(&mut self, e: &Event) {
        let plane = self.data.h * self.data.w;
        let i = e.y as usize * self.data.w + e.x as usize;
        if e.p > 0 {
            self.data.data[i] += 1;
        } else {
            self.data.data[plane + i] += 1;
        }
        self.data.data[2 * plane + i] += e.p as i32;
    }

    /// Number of events, from the two count planes.
    pub fn event_count(&self) -> u64 {
        let plane = self.data.h * self.data.w;
        self.data.data[..2 * plane].iter().map(|&v| v as u64).sum()
    }

    pub fn is_consistent(&self) -> bool {
        let plane = self.data.h * self.data.w;
        let d = &self.data.data;
        (0..plane).all(|i| d[i] >= 0 && d[plane + i] >= 0 && d[2 * plane + i] == d[i] - d[plane + i])
    }
}

/// Index of the time window holding timestamp `t`, or `None` if `t <= t0`.
#[inline]
pub fn time_window_index(t: u64, t0: i64, dt: u64) -> Option<u64> {
    let rel = t as i128 - t0 as i128;
    if rel <= 0 {
        return None;
    }
    Some(((rel - 1) / dt as i128) as u64)
}

/// Lazily yields time-window frames from a sorted event slice.
pub struct TimeFrames<'a> {
    events: &'a [Event],
    pos: usize,
    next_k: u64,
    n_frames: u64,
    t0: i64,
    dt: u64,
    geom: SensorGeometry,
}

impl<'a> TimeFrames<'a> {
    pub fn new(events: &'a [Event], dt: u64, t0: i64, geom: SensorGeometry) -> Result<Self, EventError> {
        if dt == 0 {
            return Err(EventError::InvalidParameter("dt must be positive".into()));
        }
        let pos = events.partition_point(|e| (e.t as i128) <= t0 as i128);
        let n_frames = events.last().and_then(|e| time_window_index(e.t, t0, dt)).map_or(0, |k| k + 1);
        Ok(TimeFrames { events, pos, next_k: 0, n_frames, t0, dt, geom })
    }

    /// Events at or before `t0`, which belong to no window.
    pub fn excluded(&self) -> usize {
        self.events.partition_point(|e| (e.t as i128) <= self.t0 as i128)
    }

    pub fn frame_count(&self) -> u64 {
        self.n_frames
    }
}

impl Iterator for TimeFrames<'_> {
    type Item = EventFrame;

    fn next(&mut self) -> Option<EventFrame> {
        if self.next_k >= self.n_frames {
            return None;
        }
        let k = self.next_k;
        self.next_k += 1;
        let t_start = self.t0 + (k * self.dt) as i64;
        let mut frame = EventFrame::zeros(self.geom.height as usize, self.geom.width as usize, WindowMeta::Time { index: k, t_start, dt: self.dt });
        let t_end = t_start as i128 + self.dt as i128;
        while self.pos < self.events.len() && (self.events[self.pos].t as i128) <= t_end {
            frame.accumulate(&self.events[self.pos]);
            self.pos += 1;
        }
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.n_frames - self.next_k) as usize;
        (n, Some(n))
    }
}

/// Lazily yields count-mode frames; the trailing partial group is dropped.
pub struct CountFrames<'a> {
    events: &'a [Event],
    n_evt: usize,
    next_k: usize,
    geom: SensorGeometry,
}

impl<'a> CountFrames<'a> {
    pub fn new(events: &'a [Event], n_evt: usize, geom: SensorGeometry) -> Result<Self, EventError> {
        if n_evt == 0 {
            return Err(EventError::InvalidParameter("n_evt must be at least 1".into()));
        }
        Ok(CountFrames { events, n_evt, next_k: 0, geom })
    }

    pub fn frame_count(&self) -> usize {
        self.events.len() / self.n_evt
    }

    pub fn unconsumed(&self) -> usize {
        self.events.len() % self.n_evt
    }
}

impl Iterator for CountFrames<'_> {
    type Item = EventFrame;

    fn next(&mut self) -> Option<EventFrame> {
        if self.next_k >= self.frame_count() {
            return None;
        }
        let k = self.next_k;
        self.next_k += 1;
        let first = k * self.n_evt;
        let mut frame = EventFrame::zeros(
            self.geom.height as usize,
            self.geom.width as usize,
            WindowMeta::Count { index: k as u64, first_index: first as u64, n_evt: self.n_evt as u64 },
        );
        for e in &self.events[first..first + self.n_evt] {
            frame.accumulate(e);
        }
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.frame_count() - self.next_k;
        (n, Some(n))
    }
}

/// Time-window aggregation: frame `k` holds events with `t` in
/// `(t0 + k*dt, t0 + (k+1)*dt]`. Frames run up to the window of the last
/// event; events at or before `t0` are ignored.
pub fn aggregate_time(events: &[Event], dt: u64, t0: i64, geom: SensorGeometry) -> Result<Vec<EventFrame>, EventError> {
    Ok(TimeFrames::new(events, dt, t0, geom)?.collect())
}

/// Fixed-count aggregation into groups of `n_evt` events.
pub fn aggregate_count(events: &[Event], n_evt: usize, geom: SensorGeometry) -> Result<Vec<EventFrame>, EventError> {
    Ok(CountFrames::new(events, n_evt, geom)?.collect())
}

/// Frames per second implied by count mode at a given event rate.
pub fn count_mode_frame_rate(event_rate_hz: f64, n_evt: usize) -> f64 {
    event_rate_hz / n_evt as f64
}

/// Box-average downsampling by `factor` in both axes.
///
/// The two count planes are block means rounded half-to-even; the signed
/// plane is recomputed as their difference so frames stay consistent.
pub fn downsample(frame: &EventFrame, factor: usize) -> Result<EventFrame, EventError> {
    let (c, h, w) = frame.data.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(EventError::NotDivisible { height: h, width: w, factor });
    }
    assert_eq!(c, FRAME_CHANNELS);
    let (oh, ow) = (h / factor, w / factor);
    let area = (factor * factor) as i64;
    let mut out = Tensor::<i32>::zeros(FRAME_CHANNELS, oh, ow);
    for ch in 0..2 {
        let plane = frame.data.plane(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0i64;
                for y in oy * factor..(oy + 1) * factor {
                    let row = &plane[y * w + ox * factor..y * w + (ox + 1) * factor];
                    s += row.iter().map(|&v| v as i64).sum::<i64>();
                }
                out.set(ch, oy, ox, round_div_half_even(s, area) as i32);
            }
        }
    }
    let plane = oh * ow;
    for i in 0..plane {
        out.data[2 * plane + i] = out.data[i] - out.data[plane + i];
    }
    Ok(EventFrame { data: out, meta: frame.meta })
}

/// `num / den` rounded half-to-even, `den > 0`.
pub fn round_div_half_even(num: i64, den: i64) -> i64 {
    if den > 0 && (den as u64).is_power_of_two() {
        return round_shift_half_even(num, den.trailing_zeros());
    }
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Write one frame dump: magic, u16 H, u16 W, u16 C, then planar i32 LE.
pub fn write_frame<W: Write>(mut w: W, frame: &Tensor<i32>) -> std::io::Result<()> {
    w.write_all(FRAME_MAGIC)?;
    for d in [frame.h, frame.w, frame.c] {
        let v = u16::try_from(d).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame dim exceeds u16"))?;
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(frame.len() * 4);
    for v in &frame.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Read a sequence of concatenated frame dumps.
pub fn read_frames(bytes: &[u8]) -> Result<Vec<Tensor<i32>>, EventError> {
    let mut out = Vec::new();
    let mut off = 0usize;
    while off < bytes.len() {
        let loc = |o: usize| format!("byte offset {o}");
        if bytes.len() - off < 14 {
            return Err(EventError::Malformed { location: loc(off), reason: "truncated frame header".into() });
        }
        if &bytes[off..off + 8] != FRAME_MAGIC {
            return Err(EventError::BadMagic { expected: "JFRM0001".into() });
        }
        let rd = |i: usize| u16::from_le_bytes([bytes[off + 8 + 2 * i], bytes[off + 9 + 2 * i]]) as usize;
        let (h, w, c) = (rd(0), rd(1), rd(2));
        let n = c * h * w;
        let start = off + 14;
        if bytes.len() - start < n * 4 {
            return Err(EventError::Malformed { location: loc(off), reason: format!("frame body needs {} bytes, {} remain", n * 4, bytes.len() - start) });
        }
        let data = bytes[start..start + n * 4].chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect();
        out.push(Tensor::from_vec(c, h, w, data));
        off = start + n * 4;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    fn small() -> SensorGeometry {
        SensorGeometry { width: 16, height: 8 }
    }

    #[test]
    fn csv_basics() {
        let ev = parse_csv("# header\n100,3,4,1\n\n101,5,6,-1\n".as_bytes(), SensorGeometry::default()).unwrap();
        assert_eq!(ev, vec![Event::new(100, 3, 4, 1), Event::new(101, 5, 6, -1)]);
        assert!(parse_csv("".as_bytes(), SensorGeometry::default()).unwrap().is_empty());
    }

    #[test]
    fn csv_errors() {
        let g = SensorGeometry::default();
        let e = parse_csv("1,2,3\n".as_bytes(), g).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        let e = parse_csv("1,2,3,1\n2,2,3,0\n".as_bytes(), g).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse_csv("10,2,3,1\n9,2,3,1\n".as_bytes(), g).unwrap_err();
        assert!(matches!(e, EventError::TimestampRegression { previous: 10, current: 9, .. }));
        let e = parse_csv("1,640,3,1\n".as_bytes(), g).unwrap_err();
        assert!(matches!(e, EventError::OutOfBounds { x: 640, .. }));
    }

    #[test]
    fn binary_round_trip() {
        let evs = vec![Event::new(1, 639, 479, -1), Event::new(1, 0, 0, 1), Event::new(u64::MAX, 5, 7, 1)];
        let mut buf = Vec::new();
        write_binary(&mut buf, &evs).unwrap();
        assert_eq!(buf.len(), 8 + 13 * 3);
        assert_eq!(EventFormat::sniff(&buf), EventFormat::Binary);
        assert_eq!(parse_binary(&buf[..], SensorGeometry::default()).unwrap(), evs);
        let e = parse_binary(&buf[..buf.len() - 1], SensorGeometry::default()).unwrap_err();
        assert!(e.to_string().contains("byte offset 34"), "{e}");
    }

    #[test]
    fn time_window_edges() {
        assert_eq!(time_window_index(0, 0, 10), None);
        assert_eq!(time_window_index(1, 0, 10), Some(0));
        assert_eq!(time_window_index(10, 0, 10), Some(0));
        assert_eq!(time_window_index(11, 0, 10), Some(1));
        assert_eq!(time_window_index(0, -1, 10), Some(0));
    }

    #[test]
    fn opposite_polarities_cancel() {
        let evs = [Event::new(1, 3, 4, 1), Event::new(2, 3, 4, -1)];
        let f = aggregate_time(&evs, 10_000, 0, small()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].data.get(0, 4, 3), 1);
        assert_eq!(f[0].data.get(1, 4, 3), 1);
        assert_eq!(f[0].data.get(2, 4, 3), 0);
    }

    #[test]
    fn empty_windows_are_zero() {
        let evs = [Event::new(5, 0, 0, 1), Event::new(35, 1, 1, 1)];
        let f = aggregate_time(&evs, 10, 0, small()).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f[1].event_count(), 0);
        assert_eq!(f[2].event_count(), 0);
        assert!(f[1].data.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn count_mode_drops_partial() {
        let evs: Vec<Event> = (0..12_500).map(|i| Event::new(i, 0, 0, 1)).collect();
        let it = CountFrames::new(&evs, 5000, small()).unwrap();
        assert_eq!((it.frame_count(), it.unconsumed()), (2, 2500));
        let frames: Vec<_> = it.collect();
        assert_eq!(frames.len(), 2);
        assert!(frames.iter().all(|f| f.event_count() == 5000));
    }

    #[test]
    fn count_mode_rates() {
        assert_eq!(count_mode_frame_rate(8750.0, 5000), 1.75);
        assert_eq!(count_mode_frame_rate(6.25e6, 5000), 1250.0);
    }

    #[test]
    fn downsample_examples() {
        let meta = WindowMeta::Count { index: 0, first_index: 0, n_evt: 1 };
        let mut f = EventFrame::zeros(16, 16, meta);
        f.accumulate(&Event::new(0, 0, 0, 1));
        let d = downsample(&f, 8).unwrap();
        assert_eq!((d.height(), d.width()), (2, 2));
        assert_eq!(d.data.get(0, 0, 0), 0);

        let mut f = EventFrame::zeros(16, 16, meta);
        for y in 0..8 {
            for x in 0..8 {
                f.accumulate(&Event::new(0, x, y, 1));
            }
        }
        let d = downsample(&f, 8).unwrap();
        assert_eq!(d.data.get(0, 0, 0), 1);
        assert_eq!(d.data.get(2, 0, 0), 1);
        assert_eq!(d.data.get(0, 1, 1), 0);

        let mut f = EventFrame::zeros(16, 24, meta);
        for i in 0..16 * 24 {
            f.data.data[i] = 7;
            f.data.data[16 * 24 + i] = 3;
            f.data.data[2 * 16 * 24 + i] = 4;
        }
        let d = downsample(&f, 8).unwrap();
        assert!(d.data.plane(0).iter().all(|&v| v == 7));
        assert!(d.data.plane(1).iter().all(|&v| v == 3));
        assert!(d.data.plane(2).iter().all(|&v| v == 4));

        assert!(downsample(&EventFrame::zeros(12, 16, meta), 8).is_err());
    }

    #[test]
    fn downsample_matches_rational_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let meta = WindowMeta::Count { index: 0, first_index: 0, n_evt: 1 };
        let mut f = EventFrame::zeros(16, 16, meta);
        for _ in 0..2000 {
            let e = Event::new(0, rng.gen_range(0..16), rng.gen_range(0..16), if rng.gen() { 1 } else { -1 });
            f.accumulate(&e);
        }
        let d = downsample(&f, 8).unwrap();
        for ch in 0..2 {
            for by in 0..2 {
                for bx in 0..2 {
                    let mut s = 0i64;
                    for y in 0..8 {
                        for x in 0..8 {
                            s += f.data.get(ch, by * 8 + y, bx * 8 + x) as i64;
                        }
                    }
                    let exact = s as f64 / 64.0;
                    let got = d.data.get(ch, by, bx) as f64;
                    assert!((got - exact).abs() <= 0.5);
                    if (exact - exact.floor() - 0.5).abs() < 1e-12 {
                        assert_eq!(got as i64 % 2, 0);
                    }
                }
            }
        }
        assert!(d.is_consistent());
    }

    #[test]
    fn frame_dump_round_trip() {
        let t = Tensor::from_vec(3, 2, 2, (0..12).map(|v| v - 6).collect());
        let mut buf = Vec::new();
        write_frame(&mut buf, &t).unwrap();
        write_frame(&mut buf, &t).unwrap();
        let back = read_frames(&buf).unwrap();
        assert_eq!(back, vec![t.clone(), t]);
        assert!(read_frames(&buf[..buf.len() - 2]).is_err());
    }

    fn oracle_time(events: &[Event], dt: u64, t0: i64) -> HashMap<(u64, u16, u16), (i32, i32)> {
        let mut m = HashMap::new();
        for e in events {
            if (e.t as i128) <= t0 as i128 {
                continue;
            }
            let mut k = 0u64;
            while !((e.t as i128) > t0 as i128 + (k * dt) as i128 && (e.t as i128) <= t0 as i128 + ((k + 1) * dt) as i128) {
                k += 1;
            }
            let ent = m.entry((k, e.x, e.y)).or_insert((0, 0));
            if e.p > 0 {
                ent.0 += 1
            } else {
                ent.1 += 1
            }
        }
        m
    }

    proptest! {
        #[test]
        fn time_aggregation_partitions_events(
            mut ts in prop::collection::vec(0u64..2000, 0..300),
            dt in 1u64..300,
            t0 in -50i64..100,
            seed in any::<u64>(),
        ) {
            ts.sort();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = small();
            let evs: Vec<Event> = ts.iter().map(|&t| Event::new(t, rng.gen_range(0..g.width), rng.gen_range(0..g.height), if rng.gen() { 1 } else { -1 })).collect();
            let frames = aggregate_time(&evs, dt, t0, g).unwrap();
            let oracle = oracle_time(&evs, dt, t0);
            let kept = evs.iter().filter(|e| e.t as i64 > t0).count() as u64;
            prop_assert_eq!(frames.iter().map(|f| f.event_count()).sum::<u64>(), kept);
            for (k, f) in frames.iter().enumerate() {
                prop_assert!(f.is_consistent());
                for y in 0..g.height {
                    for x in 0..g.width {
                        let (p, n) = oracle.get(&(k as u64, x, y)).copied().unwrap_or((0, 0));
                        prop_assert_eq!(f.data.get(0, y as usize, x as usize), p);
                        prop_assert_eq!(f.data.get(1, y as usize, x as usize), n);
                    }
                }
            }
        }

        #[test]
        fn downsample_preserves_consistency(seed in any::<u64>(), n in 0usize..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = SensorGeometry { width: 32, height: 16 };
            let evs: Vec<Event> = (0..n).map(|i| Event::new(i as u64, rng.gen_range(0..32), rng.gen_range(0..16), if rng.gen() { 1 } else { -1 })).collect();
            for f in aggregate_count(&evs, 50, g).unwrap() {
                let d = downsample(&f, 8).unwrap();
                prop_assert!(d.is_consistent());
            }
        }
    }
}
