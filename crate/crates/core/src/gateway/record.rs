//! Trial logs on disk: newline-delimited JSON.
//!
//! The first line is the header, then samples and events in time order
//! (samples before events at equal times), then one `end` line once the
//! trial has ended.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::metrics::{Event, LogHeader, Sample, TrialLog, LOG_FORMAT_VERSION};
use crate::tasks::Outcome;

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(LogHeader),
    Sample(Sample),
    Event(Event),
    End { end_time: f64, outcome: Outcome },
}

pub fn write_log(log: &TrialLog, out: impl Write) -> Result<(), GatewayError> {
    let mut out = BufWriter::new(out);
    let mut line = |r: &Record| -> Result<(), GatewayError> {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    line(&Record::Header(log.header.clone()))?;
    let (mut s, mut e) = (0, 0);
    while s < log.samples.len() || e < log.events.len() {
        let take_sample = match (log.samples.get(s), log.events.get(e)) {
            (Some(a), Some(b)) => a.t <= b.t,
            (Some(_), None) => true,
            _ => false,
        };
        if take_sample {
            line(&Record::Sample(log.samples[s].clone()))?;
            s += 1;
        } else {
            line(&Record::Event(log.events[e].clone()))?;
            e += 1;
        }
    }
    if let (Some(end_time), Some(outcome)) = (log.end_time, &log.outcome) {
        line(&Record::End {
            end_time,
            outcome: outcome.clone(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log(input: impl Read) -> Result<TrialLog, GatewayError> {
    let mut log: Option<TrialLog> = None;
    let mut offset = 0;
    for line in BufReader::new(input).split(b'\n') {
        let line = line?;
        let start = offset;
        offset += line.len() + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parse_err = |e: serde_json::Error| GatewayError::Parse {
            offset: start + e.column().saturating_sub(1),
            message: e.to_string(),
        };
        if log.is_none() {
            let v: serde_json::Value = serde_json::from_slice(&line).map_err(parse_err)?;
            let found = v.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
            if found > LOG_FORMAT_VERSION {
                return Err(GatewayError::UnsupportedVersion {
                    found,
                    supported: LOG_FORMAT_VERSION,
                });
            }
        }
        let record: Record = serde_json::from_slice(&line).map_err(parse_err)?;
        match (record, &mut log) {
            (Record::Header(h), None) => log = Some(TrialLog::new(h)),
            (Record::Header(_), Some(_)) => {
                return Err(GatewayError::Parse {
                    offset: start,
                    message: "second header".into(),
                })
            }
            (_, None) => {
                return Err(GatewayError::Parse {
                    offset: start,
                    message: "log must start with a header".into(),
                })
            }
            (_, Some(l)) if l.end_time.is_some() => {
                return Err(GatewayError::Parse {
                    offset: start,
                    message: "record after the end".into(),
                })
            }
            (Record::Sample(s), Some(l)) => l.samples.push(s),
            (Record::Event(e), Some(l)) => l.events.push(e),
            (Record::End { end_time, outcome }, Some(l)) => {
                l.end_time = Some(end_time);
                l.outcome = Some(outcome);
            }
        }
    }
    let log = log.ok_or(GatewayError::Parse {
        offset: 0,
        message: "empty log".into(),
    })?;
    log.check().map_err(GatewayError::Protocol)?;
    Ok(log)
}

pub fn record_log(log: &TrialLog, path: impl AsRef<Path>) -> Result<(), GatewayError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_log(log, File::create(path)?)
}

pub fn replay_log(path: impl AsRef<Path>) -> Result<TrialLog, GatewayError> {
    read_log(File::open(path)?)
}
