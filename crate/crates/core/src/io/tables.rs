use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::FormatError;
use crate::engine::MatchEvent;
use crate::synth::GroundTruth;
use crate::trace::Trace;

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> FormatError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => FormatError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        FormatError::parse(path.display().to_string(), e)
    }
}

fn write_rows<T: serde::Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    reader(path)?
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Writes the event log: `start_index,lane,score,trigger_index`.
pub fn write_events(path: &Path, events: &[MatchEvent]) -> Result<(), FormatError> {
    if events
        .windows(2)
        .any(|w| w[0].start_index >= w[1].start_index)
    {
        return Err(FormatError::parse(
            "event log",
            "events are not strictly sorted by start index",
        ));
    }
    write_rows(path, events)
}

pub fn read_events(path: &Path) -> Result<Vec<MatchEvent>, FormatError> {
    let events: Vec<MatchEvent> = read_rows(path)?;
    if events
        .windows(2)
        .any(|w| w[0].start_index >= w[1].start_index)
    {
        return Err(FormatError::parse(
            path.display().to_string(),
            "rows are not strictly sorted by start_index",
        ));
    }
    Ok(events)
}

/// Half-open `[rise, fall)` intervals where the trigger is high.
pub fn trigger_runs(trigger: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut rise = None;
    for (i, &b) in trigger.iter().enumerate() {
        match (b, rise) {
            (true, None) => rise = Some(i),
            (false, Some(r)) => {
                runs.push((r, i));
                rise = None;
            }
            _ => {}
        }
    }
    if let Some(r) = rise {
        runs.push((r, trigger.len()));
    }
    runs
}

pub fn trigger_from_runs(runs: &[(usize, usize)], len: usize) -> Vec<bool> {
    let mut t = vec![false; len];
    for &(rise, fall) in runs {
        t[rise.min(len)..fall.min(len)].fill(true);
    }
    t
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Run {
    rise: usize,
    fall: usize,
}

/// Writes the trigger waveform run-length encoded as `rise,fall` rows.
pub fn write_trigger_runs(path: &Path, trigger: &[bool]) -> Result<(), FormatError> {
    write_rows(
        path,
        trigger_runs(trigger)
            .into_iter()
            .map(|(rise, fall)| Run { rise, fall }),
    )
}

pub fn read_trigger_runs(path: &Path) -> Result<Vec<(usize, usize)>, FormatError> {
    let runs: Vec<Run> = read_rows(path)?;
    Ok(runs.into_iter().map(|r| (r.rise, r.fall)).collect())
}

pub fn write_ground_truth(path: &Path, truth: &[GroundTruth]) -> Result<(), FormatError> {
    write_rows(path, truth)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, FormatError> {
    read_rows(path)
}

#[derive(serde::Serialize)]
struct PlotRow {
    start: usize,
    min: i16,
    max: i16,
    trigger: u8,
    events: usize,
}

/// Decimated trace for plotting: per bucket of `bucket` samples the min, max,
/// whether the trigger was high anywhere in it, and how many events start in it.
pub fn write_plot(
    path: &Path,
    trace: &Trace,
    trigger: Option<&[bool]>,
    events: &[MatchEvent],
    bucket: usize,
) -> Result<(), FormatError> {
    if bucket == 0 {
        return Err(FormatError::parse("plot", "bucket size must be positive"));
    }
    let mut starts = events.iter().map(|e| e.start_index).peekable();
    let rows = trace
        .samples()
        .chunks(bucket)
        .enumerate()
        .map(|(k, chunk)| {
            let start = k * bucket;
            let end = start + chunk.len();
            let mut count = 0;
            while starts.next_if(|&s| s < end).is_some() {
                count += 1;
            }
            PlotRow {
                start,
                min: *chunk.iter().min().unwrap(),
                max: *chunk.iter().max().unwrap(),
                trigger: trigger.is_some_and(|t| {
                    t.get(start..end.min(t.len()))
                        .is_some_and(|w| w.contains(&true))
                }) as u8,
                events: count,
            }
        });
    write_rows(path, rows)
}
