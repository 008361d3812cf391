//! Per-step trace records and their JSON-Lines / CSV forms.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::controller::Event;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(rename = "E")]
    pub energy: f64,
    pub h_e: f64,
    pub h_b: f64,
    pub h_d: f64,
    pub s: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub u: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    pub power: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

impl TraceRecord {
    pub fn has(&self, e: Event) -> bool {
        self.events.contains(&e)
    }
}

pub fn write_jsonl<W: Write>(mut w: W, trace: &[TraceRecord]) -> Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_jsonl(trace: &[TraceRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, trace).expect("writing to memory cannot fail");
    buf
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    x1: f64,
    x2: f64,
    theta: Option<f64>,
    #[serde(rename = "E")]
    energy: f64,
    h_e: f64,
    h_b: f64,
    h_d: f64,
    s: f64,
    #[serde(rename = "L")]
    length: f64,
    u1: f64,
    u2: f64,
    v: Option<f64>,
    omega: Option<f64>,
    power: f64,
    events: String,
}

/// Same columns as the JSON form with vectors split into components and events joined by `|`.
pub fn write_csv<W: Write>(w: W, trace: &[TraceRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in trace {
        let events = r.events.iter().map(|e| e.name()).collect::<Vec<_>>().join("|");
        wr.serialize(CsvRow {
            t: r.t,
            x1: r.x.x,
            x2: r.x.y,
            theta: r.theta,
            energy: r.energy,
            h_e: r.h_e,
            h_b: r.h_b,
            h_d: r.h_d,
            s: r.s,
            length: r.length,
            u1: r.u.x,
            u2: r.u.y,
            v: r.v,
            omega: r.omega,
            power: r.power,
            events,
        })
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let rec = TraceRecord {
            t: 0.001,
            x: Vec2::new(1.0, -2.5),
            theta: Some(0.3),
            energy: 12.5,
            h_e: 100.0,
            h_b: 0.0,
            h_d: 0.02,
            s: 0.0,
            length: 14.0,
            u: Vec2::new(0.1, 0.2),
            v: Some(0.2),
            omega: Some(-0.1),
            power: 20.0,
            events: vec![Event::Frozen],
        };
        let bytes = to_jsonl(std::slice::from_ref(&rec));
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"E\":12.5") && text.contains("\"L\":14.0"));
        let back = read_jsonl(bytes.as_slice()).unwrap();
        assert_eq!(back, vec![rec.clone()]);
        let mut csv = Vec::new();
        write_csv(&mut csv, &[rec]).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("t,x1,x2,theta,E,h_e,h_b,h_d,s,L,u1,u2,v,omega,power,events\n"));
        assert!(csv.trim_end().ends_with("frozen"));
    }
}
