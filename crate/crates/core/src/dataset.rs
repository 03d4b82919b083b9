//! ETH/UCY- and SDD-style trajectory text files.
//!
//! One record per line, whitespace separated: `frame pedestrian x y`, any
//! trailing columns ignored. Blank lines and lines starting with `#` are
//! skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::traj::{Point, Scene, SceneMeta, ScenePast, Trajectory, Unit};
use crate::{Error, Result};

/// Frame step between consecutive 2.5 fps annotations in ETH/UCY files.
pub const ETH_UCY_STRIDE: i64 = 10;
/// Frame step used by the common SDD preprocessing.
pub const SDD_STRIDE: i64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub frame: i64,
    pub pedestrian: i64,
    pub x: f64,
    pub y: f64,
}

/// Records indexed by `(frame, pedestrian)` and by pedestrian.
#[derive(Debug, Clone, Default)]
pub struct RecordStore {
    name: String,
    unit: Unit,
    by_frame: BTreeMap<i64, BTreeMap<i64, Point>>,
    by_pedestrian: BTreeMap<i64, BTreeMap<i64, Point>>,
}

fn parse_integral(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = field.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

impl RecordStore {
    pub fn load(path: impl AsRef<Path>, unit: Unit) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&text, unit, name, path)
    }

    pub fn parse(text: &str, unit: Unit, name: String, path: &Path) -> Result<Self> {
        let mut store = RecordStore {
            name,
            unit,
            ..Default::default()
        };
        let err = |line: usize, msg: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            msg,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 4 {
                return Err(err(line_no, format!("expected 4 fields, found {}", fields.len())));
            }
            let frame = parse_integral(fields[0])
                .ok_or_else(|| err(line_no, format!("bad frame id {:?}", fields[0])))?;
            let pedestrian = parse_integral(fields[1])
                .ok_or_else(|| err(line_no, format!("bad pedestrian id {:?}", fields[1])))?;
            let coord = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line_no, format!("bad coordinate {s:?}")))
            };
            let (x, y) = (coord(fields[2])?, coord(fields[3])?);
            if frame < 0 {
                return Err(err(line_no, format!("negative frame id {frame}")));
            }
            store.insert(RawRecord { frame, pedestrian, x, y }, line_no)?;
        }
        Ok(store)
    }

    pub fn from_records(
        records: impl IntoIterator<Item = RawRecord>,
        unit: Unit,
        name: impl Into<String>,
    ) -> Result<Self> {
        let mut store = RecordStore {
            name: name.into(),
            unit,
            ..Default::default()
        };
        for (i, r) in records.into_iter().enumerate() {
            store.insert(r, i + 1)?;
        }
        Ok(store)
    }

    fn insert(&mut self, r: RawRecord, line: usize) -> Result<()> {
        let slot = self.by_frame.entry(r.frame).or_default();
        if slot.contains_key(&r.pedestrian) {
            return Err(Error::DuplicateRecord {
                frame: r.frame,
                pedestrian: r.pedestrian,
                line,
            });
        }
        slot.insert(r.pedestrian, [r.x, r.y]);
        self.by_pedestrian
            .entry(r.pedestrian)
            .or_default()
            .insert(r.frame, [r.x, r.y]);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_frame.is_empty()
    }

    pub fn get(&self, frame: i64, pedestrian: i64) -> Option<Point> {
        self.by_frame.get(&frame)?.get(&pedestrian).copied()
    }

    pub fn pedestrian_count(&self, pedestrian: i64) -> usize {
        self.by_pedestrian.get(&pedestrian).map_or(0, BTreeMap::len)
    }

    pub fn pedestrians(&self) -> impl Iterator<Item = i64> + '_ {
        self.by_pedestrian.keys().copied()
    }

    /// All records ordered by frame, then pedestrian.
    pub fn records(&self) -> impl Iterator<Item = RawRecord> + '_ {
        self.by_frame.iter().flat_map(|(&frame, peds)| {
            peds.iter().map(move |(&pedestrian, p)| RawRecord {
                frame,
                pedestrian,
                x: p[0],
                y: p[1],
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneQuery {
    pub frame: i64,
    pub pedestrian: i64,
    pub t_past: usize,
    pub t_future: usize,
    pub frame_stride: i64,
}

impl SceneQuery {
    pub fn new(frame: i64, pedestrian: i64) -> Self {
        Self {
            frame,
            pedestrian,
            t_past: 8,
            t_future: 12,
            frame_stride: ETH_UCY_STRIDE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_past < 2 {
            return Err(Error::invalid("t_past must be at least 2"));
        }
        if self.t_future < 1 {
            return Err(Error::invalid("t_future must be at least 1"));
        }
        if self.frame_stride < 1 {
            return Err(Error::invalid("frame_stride must be at least 1"));
        }
        Ok(())
    }

    pub fn past_frames(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.t_past as i64)
            .rev()
            .map(move |back| self.frame - back * self.frame_stride)
    }

    pub fn future_frames(&self) -> impl Iterator<Item = i64> + '_ {
        (1..=self.t_future as i64).map(move |ahead| self.frame + ahead * self.frame_stride)
    }
}

fn path_at(store: &RecordStore, pedestrian: i64, frames: &[i64]) -> Option<Vec<Point>> {
    frames.iter().map(|&f| store.get(f, pedestrian)).collect()
}

/// Cut the scene ending at `query.frame` for `query.pedestrian`.
///
/// Neighbours are the other pedestrians observed at every past frame,
/// ordered by id. Missing future frames yield a scene without ground truth.
pub fn extract_scene(store: &RecordStore, query: &SceneQuery) -> Result<Scene> {
    query.validate()?;
    let past: Vec<i64> = query.past_frames().collect();
    let unit = store.unit();
    let agent = path_at(store, query.pedestrian, &past).ok_or_else(|| {
        let missing = past
            .iter()
            .filter(|&&f| store.get(f, query.pedestrian).is_none())
            .map(i64::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        Error::SceneExtraction(format!(
            "pedestrian {} not observed at past frame(s) {missing}",
            query.pedestrian
        ))
    })?;

    let candidates = store
        .by_frame
        .get(&query.frame)
        .map(|peds| peds.keys().copied().collect::<Vec<_>>())
        .unwrap_or_default();
    let mut neighbors = Vec::new();
    for ped in candidates {
        if ped == query.pedestrian {
            continue;
        }
        if let Some(points) = path_at(store, ped, &past) {
            neighbors.push(Trajectory::new(points, unit)?);
        }
    }

    let future: Vec<i64> = query.future_frames().collect();
    let future_truth = match path_at(store, query.pedestrian, &future) {
        Some(points) => Some(Trajectory::new(points, unit)?),
        None => None,
    };

    Scene::new(
        ScenePast::new(Trajectory::new(agent, unit)?, neighbors)?,
        future_truth,
        SceneMeta {
            name: store.name().to_string(),
            frame: query.frame,
            pedestrian: query.pedestrian,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RecordStore> {
        RecordStore::parse(text, Unit::Meters, "t".into(), Path::new("t.txt"))
    }

    #[test]
    fn parses_two_records() {
        let s = parse("0 1 0.0 0.0\n10 1 1.0 0.0\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.pedestrian_count(1), 2);
        assert_eq!(s.get(10, 1), Some([1.0, 0.0]));
    }

    #[test]
    fn empty_file_is_empty_store() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn accepts_float_ids_and_tabs() {
        let s = parse("0.0\t1.0\t2.5\t-3\n").unwrap();
        assert_eq!(s.get(0, 1), Some([2.5, -3.0]));
    }

    #[test]
    fn malformed_lines_name_their_line() {
        match parse("0 1 0 0\n\n10 1 abc 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0 1 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("0 1 0 0\n0 1 1 1\n"),
            Err(Error::DuplicateRecord { line: 2, .. })
        ));
    }

    fn single_ped() -> RecordStore {
        let text: String = (0..20)
            .map(|i| format!("{} 1 {} 0.0\n", i * 10, i as f64 * 0.4))
            .collect();
        parse(&text).unwrap()
    }

    #[test]
    fn extracts_single_pedestrian_scene() {
        let scene = extract_scene(&single_ped(), &SceneQuery::new(70, 1)).unwrap();
        assert_eq!(scene.past.neighbors.len(), 0);
        assert_eq!(scene.past.t_past(), 8);
        assert_eq!(scene.t_future(), Some(12));
        assert_eq!(scene.past.agent.last(), [7.0 * 0.4, 0.0]);
    }

    #[test]
    fn missing_future_drops_truth() {
        let scene = extract_scene(&single_ped(), &SceneQuery::new(100, 1)).unwrap();
        assert!(scene.future_truth.is_none());
    }

    #[test]
    fn missing_agent_is_an_error() {
        assert!(matches!(
            extract_scene(&single_ped(), &SceneQuery::new(75, 1)),
            Err(Error::SceneExtraction(_))
        ));
        assert!(matches!(
            extract_scene(&single_ped(), &SceneQuery::new(70, 2)),
            Err(Error::SceneExtraction(_))
        ));
    }

    #[test]
    fn partial_neighbors_are_dropped() {
        let mut text = String::new();
        for i in 0..8 {
            text += &format!("{} 1 {i} 0\n", i * 10);
            text += &format!("{} 2 {i} 1\n", i * 10);
            if i > 0 {
                text += &format!("{} 3 {i} 2\n", i * 10);
            }
        }
        let scene = extract_scene(&parse(&text).unwrap(), &SceneQuery::new(70, 1)).unwrap();
        assert_eq!(scene.past.neighbors.len(), 1);
        assert_eq!(scene.past.neighbors[0].points()[3], [3.0, 1.0]);
    }
}
