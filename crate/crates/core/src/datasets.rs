//! JSON Lines task input, shaped output, and length statistics.
//!
//! Task line:
//!
//! ```text
//! {"task_id": str, "instruction": str, "n_ref": int?,
//!  "steps": [{"gt": Action, "candidates": [Action, ...]}]}
//! ```
//!
//! Shaped line:
//!
//! ```text
//! {"task_id", "rollout_index", "breakdown_step", "success", "aligned",
//!  "r_traj", "delta", "sum_r_final",
//!  "steps": [{"s_raw", "valid", "s_signed", "r_base", "r_final", "advantage"?}]}
//! ```
//!
//! Readers skip blank lines and provenance header lines (objects with a
//! top-level `header` key).

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::Action;
use crate::error::{Error, Result};
use crate::reconstruction::{StepRecord, TaskRecord};
use crate::shaping::{aggregate, ShapedStep, ShapedTrajectory};

pub const HEADER_KEY: &str = "header";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Iterates the JSON object lines of a reader, yielding `(line_no, value)`.
fn json_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, Value)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::domain(e.to_string()).at_line(line_no))),
        };
        if line.trim().is_empty() {
            return None;
        }
        match serde_json::from_str::<Value>(&line) {
            Ok(v) if v.get(HEADER_KEY).is_some() => None,
            Ok(v) => Some(Ok((line_no, v))),
            Err(e) => Some(Err(
                Error::schema("", format!("invalid JSON: {e}")).at_line(line_no)
            )),
        }
    })
}

pub fn parse_task(value: &Value) -> Result<TaskRecord> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("", "task must be a JSON object"))?;
    let task_id = req_str(obj, "task_id")?;
    let instruction = req_str(obj, "instruction")?;
    let n_ref = match obj.get("n_ref") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::schema("n_ref", "expected positive integer for field"))?
                as usize,
        ),
    };
    let steps_val = obj
        .get("steps")
        .ok_or_else(|| Error::schema("steps", "missing field"))?
        .as_array()
        .ok_or_else(|| Error::schema("steps", "expected array for field"))?;
    let mut steps = Vec::with_capacity(steps_val.len());
    for (t, sv) in steps_val.iter().enumerate() {
        let at = format!("steps[{t}]");
        let so = sv
            .as_object()
            .ok_or_else(|| Error::schema(at.clone(), "expected object for field"))?;
        let gt = Action::from_json(
            so.get("gt")
                .ok_or_else(|| Error::schema(format!("{at}.gt"), "missing field"))?,
        )
        .map_err(|e| e.within(&format!("{at}.gt")))?;
        let cands = so
            .get("candidates")
            .ok_or_else(|| Error::schema(format!("{at}.candidates"), "missing field"))?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{at}.candidates"), "expected array for field"))?;
        let candidates = cands
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Action::from_json(c).map_err(|e| e.within(&format!("{at}.candidates[{i}]")))
            })
            .collect::<Result<Vec<_>>>()?;
        steps.push(StepRecord { gt, candidates });
    }
    TaskRecord::new(task_id, instruction, steps, n_ref)
}

fn req_str(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::schema(key, "expected string for field")),
        None => Err(Error::schema(key, "missing field")),
    }
}

pub fn task_to_json(task: &TaskRecord) -> Value {
    let steps: Vec<Value> = task
        .steps
        .iter()
        .map(|s| {
            serde_json::json!({
                "gt": s.gt.to_json(),
                "candidates": s.candidates.iter().map(Action::to_json).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({
        "task_id": task.task_id,
        "instruction": task.instruction,
        "n_ref": task.n_ref,
        "steps": steps,
    })
}

/// Reads tasks from any buffered reader, preserving order. Duplicate task ids
/// are logged and kept.
pub fn read_tasks_from<R: BufRead>(reader: R) -> Result<Vec<TaskRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in json_lines(reader) {
        let (line_no, value) = item?;
        let task = parse_task(&value).map_err(|e| e.at_line(line_no))?;
        if !seen.insert(task.task_id.clone()) {
            log::warn!("line {line_no}: duplicate task_id `{}`", task.task_id);
        }
        out.push(task);
    }
    Ok(out)
}

pub fn read_tasks(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_tasks_from(BufReader::new(file))
}

pub fn write_tasks_to<W: Write>(mut w: W, tasks: &[TaskRecord]) -> std::io::Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut w, &task_to_json(t))?;
        writeln!(w)?;
    }
    w.flush()
}

#[derive(Serialize, Deserialize)]
struct ShapedRecord {
    task_id: String,
    rollout_index: usize,
    breakdown_step: Option<usize>,
    success: bool,
    aligned: bool,
    r_traj: f64,
    delta: f64,
    sum_r_final: f64,
    steps: Vec<ShapedStep>,
}

pub fn shaped_to_json(s: &ShapedTrajectory) -> Value {
    serde_json::to_value(ShapedRecord {
        task_id: s.task_id.clone(),
        rollout_index: s.rollout_index,
        breakdown_step: s.breakdown_step,
        success: s.success,
        aligned: s.aligned,
        r_traj: s.r_target,
        delta: s.delta,
        sum_r_final: s.sum_r_final(),
        steps: s.steps.clone(),
    })
    .expect("shaped record is always representable")
}

/// Parses a shaped line, recomputing the aggregate diagnostics from the
/// signed scores and checking `sum_r_final` against the steps.
pub fn parse_shaped(value: &Value) -> Result<ShapedTrajectory> {
    let rec: ShapedRecord = serde_json::from_value(value.clone())
        .map_err(|e| Error::schema("", format!("invalid shaped record: {e}")))?;
    let s: Vec<f64> = rec.steps.iter().map(|st| st.s_signed).collect();
    let agg = aggregate(&s, rec.breakdown_step);
    let sum: f64 = rec.steps.iter().map(|st| st.r_final).sum();
    let tol = 1e-9 * sum.abs().max(1.0);
    if (sum - rec.sum_r_final).abs() > tol {
        return Err(Error::schema(
            "sum_r_final",
            format!("{} disagrees with step sum {sum} in field", rec.sum_r_final),
        ));
    }
    Ok(ShapedTrajectory {
        task_id: rec.task_id,
        rollout_index: rec.rollout_index,
        breakdown_step: rec.breakdown_step,
        success: rec.success,
        r_target: rec.r_traj,
        delta: rec.delta,
        n_pos: agg.n_pos,
        n_err: agg.n_err,
        s_pos_sum: agg.s_pos,
        s_neg_sum: agg.s_neg,
        aligned: rec.aligned,
        steps: rec.steps,
    })
}

pub fn write_shaped_to<W: Write>(mut w: W, results: &[ShapedTrajectory]) -> std::io::Result<()> {
    for s in results {
        serde_json::to_writer(&mut w, &shaped_to_json(s))?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_shaped(path: impl AsRef<Path>, results: &[ShapedTrajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_shaped_to(BufWriter::new(file), results).map_err(io_err(path))
}

pub fn read_shaped_from<R: BufRead>(reader: R) -> Result<Vec<ShapedTrajectory>> {
    json_lines(reader)
        .map(|item| {
            let (line_no, value) = item?;
            parse_shaped(&value).map_err(|e| e.at_line(line_no))
        })
        .collect()
}

pub fn read_shaped(path: impl AsRef<Path>) -> Result<Vec<ShapedTrajectory>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_shaped_from(BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBucket {
    /// 1..=5
    Short,
    /// 6..=13
    Long,
    /// 14 and above
    SuperLong,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Long, LengthBucket::SuperLong];

    pub fn as_str(&self) -> &'static str {
        match self {
            LengthBucket::Short => "short",
            LengthBucket::Long => "long",
            LengthBucket::SuperLong => "super_long",
        }
    }

    /// Inclusive bounds; `None` upper means unbounded.
    pub fn range(&self) -> (usize, Option<usize>) {
        match self {
            LengthBucket::Short => (1, Some(5)),
            LengthBucket::Long => (6, Some(13)),
            LengthBucket::SuperLong => (14, None),
        }
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bucket_of(length: usize) -> Result<LengthBucket> {
    match length {
        0 => Err(Error::domain("trajectory length must be at least 1")),
        1..=5 => Ok(LengthBucket::Short),
        6..=13 => Ok(LengthBucket::Long),
        _ => Ok(LengthBucket::SuperLong),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub count: usize,
    pub short: usize,
    pub long: usize,
    pub super_long: usize,
    pub min: usize,
    pub q1: usize,
    pub median: usize,
    pub q3: usize,
    pub max: usize,
}

impl DatasetStats {
    pub fn bucket_count(&self, b: LengthBucket) -> usize {
        match b {
            LengthBucket::Short => self.short,
            LengthBucket::Long => self.long,
            LengthBucket::SuperLong => self.super_long,
        }
    }
}

fn lower_median(sorted: &[usize]) -> Option<usize> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[(sorted.len() - 1) / 2])
    }
}

/// Quartiles by the lower-median, exclusive-halves convention: the median is
/// the element at `(n-1)/2`; Q1 and Q3 are the lower medians of the halves
/// strictly below and above it (for even `n`, the first and last `n/2`).
/// A single value is its own Q1 and Q3.
pub fn quartiles(lengths: &[usize]) -> Result<(usize, usize, usize)> {
    let mut v = lengths.to_vec();
    v.sort_unstable();
    let median = lower_median(&v).ok_or_else(|| Error::domain("quartiles of an empty list"))?;
    let n = v.len();
    let half = n / 2;
    let (lower, upper) = (&v[..half], &v[n - half..]);
    Ok((
        lower_median(lower).unwrap_or(median),
        median,
        lower_median(upper).unwrap_or(median),
    ))
}

pub fn length_stats(lengths: &[usize]) -> Result<DatasetStats> {
    if lengths.is_empty() {
        return Err(Error::domain("dataset statistics need at least one task"));
    }
    let (q1, median, q3) = quartiles(lengths)?;
    let mut stats = DatasetStats {
        count: lengths.len(),
        short: 0,
        long: 0,
        super_long: 0,
        min: *lengths.iter().min().unwrap(),
        q1,
        median,
        q3,
        max: *lengths.iter().max().unwrap(),
    };
    for &l in lengths {
        match bucket_of(l)? {
            LengthBucket::Short => stats.short += 1,
            LengthBucket::Long => stats.long += 1,
            LengthBucket::SuperLong => stats.super_long += 1,
        }
    }
    Ok(stats)
}

pub fn dataset_stats(tasks: &[TaskRecord]) -> Result<DatasetStats> {
    length_stats(&tasks.iter().map(TaskRecord::len).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    const TASK: &str = r#"{"task_id":"a","instruction":"open","steps":[{"gt":{"type":"launch","app":"Chrome"},"candidates":[{"type":"launch","app":"chrome"},{"type":"wait"}]},{"gt":{"type":"finished"},"candidates":[{"type":"finished"},{"type":"finished"}]}]}"#;

    #[test]
    fn reads_tasks() {
        assert!(read_tasks_from(Cursor::new("")).unwrap().is_empty());
        let tasks = read_tasks_from(Cursor::new(TASK)).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].n_rollouts, 2);
        assert_eq!(tasks[0].n_ref, 2);
    }

    #[test]
    fn reports_line_and_field() {
        let input = format!("{TASK}\n\n{{\"task_id\":\"b\",\"instruction\":\"\"}}\n");
        let err = read_tasks_from(Cursor::new(input)).unwrap_err();
        assert_eq!(err.to_string(), "line 3: missing field steps");

        let bad = TASK.replace(r#"{"type":"wait"}"#, r#"{"type":"click","x":0.1}"#);
        let err = read_tasks_from(Cursor::new(bad)).unwrap_err();
        assert_eq!(err.to_string(), "line 1: missing field steps[0].candidates[1].y");
    }

    #[test]
    fn duplicates_are_kept_and_headers_skipped() {
        let input = format!("{{\"header\":{{\"command\":\"simulate\"}}}}\n{TASK}\n{TASK}\n");
        let tasks = read_tasks_from(Cursor::new(input)).unwrap();
        assert_eq!(tasks.len(), 2);
    }

    #[test]
    fn task_json_round_trip() {
        let tasks = read_tasks_from(Cursor::new(TASK)).unwrap();
        let mut buf = Vec::new();
        write_tasks_to(&mut buf, &tasks).unwrap();
        assert_eq!(read_tasks_from(Cursor::new(buf)).unwrap(), tasks);
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket_of(14).unwrap(), LengthBucket::SuperLong);
        assert_eq!(bucket_of(6).unwrap(), LengthBucket::Long);
        assert_eq!(bucket_of(13).unwrap(), LengthBucket::Long);
        assert_eq!(bucket_of(5).unwrap(), LengthBucket::Short);
        assert_eq!(bucket_of(1).unwrap(), LengthBucket::Short);
        assert!(bucket_of(0).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = length_stats(&[4, 4, 6, 6, 8, 8]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (4, 6, 8));
        let s = length_stats(&[20; 7]).unwrap();
        assert_eq!(s.super_long, 7);
        assert_eq!(s.short + s.long, 0);
        assert_eq!(quartiles(&[5]).unwrap(), (5, 5, 5));
        assert_eq!(quartiles(&[1, 2, 3, 4, 5]).unwrap(), (1, 3, 4));
        assert!(length_stats(&[]).is_err());
    }

    fn arb_shaped() -> impl Strategy<Value = ShapedTrajectory> {
        use crate::scoring::StepScore;
        use crate::shaping::{shape_input, BatchStats, ShapingConfig, ShapingInput};
        (
            prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..12),
            1.0f64..20.0,
            any::<bool>(),
            prop::option::of(-5.0f64..5.0),
        )
            .prop_map(|(scores, t_bar, success, adv)| {
                let n = scores.len();
                let input = ShapingInput::from_scores(
                    scores.into_iter().map(|(s_raw, valid)| StepScore { s_raw, valid }).collect(),
                    n,
                    success,
                );
                let mut out = shape_input(
                    &input,
                    &BatchStats { t_bar, n_trajectories: 1 },
                    &ShapingConfig::default(),
                )
                .unwrap();
                out.task_id = "task".into();
                if let Some(a) = adv {
                    out.steps.iter_mut().for_each(|s| s.advantage = Some(a));
                }
                out
            })
    }

    proptest! {
        #[test]
        fn shaped_write_read_identity(items in prop::collection::vec(arb_shaped(), 0..5)) {
            let mut buf = Vec::new();
            write_shaped_to(&mut buf, &items).unwrap();
            for line in std::str::from_utf8(&buf).unwrap().lines() {
                let v: Value = serde_json::from_str(line).unwrap();
                let sum: f64 = v["steps"].as_array().unwrap().iter()
                    .map(|s| s["r_final"].as_f64().unwrap()).sum();
                prop_assert_eq!(sum, v["sum_r_final"].as_f64().unwrap());
            }
            let back = read_shaped_from(Cursor::new(buf)).unwrap();
            prop_assert_eq!(back, items);
        }

        #[test]
        fn buckets_partition(len in 1usize..500) {
            let b = bucket_of(len).unwrap();
            let hits = LengthBucket::ALL.iter().filter(|x| {
                let (lo, hi) = x.range();
                len >= lo && hi.is_none_or(|h| len <= h)
            }).count();
            prop_assert_eq!(hits, 1);
            let (lo, hi) = b.range();
            prop_assert!(len >= lo && hi.is_none_or(|h| len <= h));
        }
    }

    #[test]
    fn empty_shaped_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.jsonl");
        write_shaped(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
        assert!(read_shaped(&p).unwrap().is_empty());
    }
}
