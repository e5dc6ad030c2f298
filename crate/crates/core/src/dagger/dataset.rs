//! Aggregated dataset and its on-disk form: a JSONL manifest plus one
//! little-endian binary block per rollout (records) and per frame store,
//! appended round by round.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dagger::{BlendOutcome, PlatformDraw, Rollout, RolloutRecord};
use crate::dynamics::QuadState;
use crate::error::{Error, Result};
use crate::policy::{ExampleRef, InputSnapshot, TrackFrame, HIST};
use crate::trajectory::Maneuver;

const FORMAT: &str = "acro-dataset-v1";
pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// In-memory aggregate. Records reference camera frames by index into their
/// rollout's frame store; index -1 resolves to the zero frame.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub maneuver: Maneuver,
    pub rollouts: Vec<Rollout>,
    zero_frame: TrackFrame<f32>,
}

impl Dataset {
    pub fn new(maneuver: Maneuver) -> Self {
        Self {
            maneuver,
            rollouts: Vec::new(),
            zero_frame: [[0.0; 5]; crate::sensing::TRACKS_PER_FRAME],
        }
    }

    pub fn append(&mut self, rollout: Rollout) {
        self.rollouts.push(rollout);
    }

    pub fn record_count(&self) -> usize {
        self.rollouts.iter().map(|r| r.records.len()).sum()
    }

    pub fn train_indices(&self) -> Vec<(usize, usize)> {
        self.rollouts
            .iter()
            .enumerate()
            .flat_map(|(ri, r)| r.train_picks.iter().map(move |&k| (ri, k)))
            .collect()
    }

    pub fn holdout_indices(&self) -> Vec<(usize, usize)> {
        self.rollouts
            .iter()
            .enumerate()
            .flat_map(|(ri, r)| r.holdout_picks.iter().map(move |&k| (ri, k)))
            .collect()
    }

    /// Resolve picked records into borrowed training examples.
    pub fn examples(&self, picks: &[(usize, usize)]) -> Vec<ExampleRef<'_, f32>> {
        picks
            .iter()
            .map(|&(ri, ki)| {
                let rollout = &self.rollouts[ri];
                let rec = &rollout.records[ki];
                let vis = std::array::from_fn(|j| {
                    let idx = rec.snapshot.visual_frames[j];
                    if idx < 0 {
                        &self.zero_frame
                    } else {
                        &rollout.frames[idx as usize]
                    }
                });
                ExampleRef {
                    vis,
                    imu: &rec.snapshot.inertial,
                    reference: &rec.snapshot.reference,
                    label: rec.expert,
                }
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    maneuver: Maneuver,
}

#[derive(Debug, Serialize, Deserialize)]
struct RolloutEntry {
    round: usize,
    seed: u64,
    crashed: bool,
    records: usize,
    frames: usize,
    records_file: String,
    frames_file: String,
    draw: PlatformDraw,
    train_picks: Vec<usize>,
    holdout_picks: Vec<usize>,
}

const RECORD_BYTES: usize = 8 + 13 * 8 + HIST * 8 + HIST * 10 * 4 * 2 + 16 + 16 + 4;

fn pack_record(rec: &RolloutRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&rec.stamp.to_le_bytes());
    let s = &rec.true_state;
    let q = s.q.quaternion();
    for v in [s.p.x, s.p.y, s.p.z, q.w, q.i, q.j, q.k, s.v.x, s.v.y, s.v.z, s.w.x, s.w.y, s.w.z] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for idx in rec.snapshot.visual_frames {
        out.extend_from_slice(&idx.to_le_bytes());
    }
    for row in &rec.snapshot.inertial {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for row in &rec.snapshot.reference {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in rec.expert {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in rec.executed {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let outcome: u32 = match rec.outcome {
        BlendOutcome::Student => 0,
        BlendOutcome::Expert => 1,
        BlendOutcome::Explored => 2,
    };
    out.extend_from_slice(&outcome.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn f64(&mut self) -> f64 {
        let v = f64::from_le_bytes(self.buf[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }

    fn f32(&mut self) -> f32 {
        let v = f32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn i64(&mut self) -> i64 {
        let v = i64::from_le_bytes(self.buf[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }

    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }
}

fn unpack_record(buf: &[u8]) -> Result<RolloutRecord> {
    let mut c = Cursor { buf, pos: 0 };
    let stamp = c.f64();
    let p = nalgebra::Vector3::new(c.f64(), c.f64(), c.f64());
    let q = nalgebra::Quaternion::new(c.f64(), c.f64(), c.f64(), c.f64());
    let v = nalgebra::Vector3::new(c.f64(), c.f64(), c.f64());
    let w = nalgebra::Vector3::new(c.f64(), c.f64(), c.f64());
    let true_state = QuadState {
        p,
        q: nalgebra::UnitQuaternion::new_unchecked(q),
        v,
        w,
    };
    let visual_frames = std::array::from_fn(|_| c.i64());
    let inertial = std::array::from_fn(|_| std::array::from_fn(|_| c.f32()));
    let reference = std::array::from_fn(|_| std::array::from_fn(|_| c.f32()));
    let expert = std::array::from_fn(|_| c.f32());
    let executed = std::array::from_fn(|_| c.f32());
    let outcome = match c.u32() {
        0 => BlendOutcome::Student,
        1 => BlendOutcome::Expert,
        2 => BlendOutcome::Explored,
        other => {
            return Err(Error::Format {
                path: "records".into(),
                reason: format!("bad outcome tag {other}"),
            })
        }
    };
    Ok(RolloutRecord {
        stamp,
        snapshot: InputSnapshot { visual_frames, inertial, reference },
        expert,
        executed,
        outcome,
        true_state,
    })
}

/// Append one round of rollouts to the dataset directory (creating it and
/// the manifest header on first use).
pub fn append_round(
    dir: &Path,
    maneuver: Maneuver,
    round: usize,
    rollouts: &[Rollout],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join(MANIFEST_NAME);
    let fresh = !manifest_path.exists();
    let mut manifest = OpenOptions::new().create(true).append(true).open(&manifest_path)?;
    if fresh {
        let header = Header { format: FORMAT.into(), maneuver };
        writeln!(manifest, "{}", serde_json::to_string(&header)?)?;
    }
    for rollout in rollouts {
        let tag = format!("r{:016x}", rollout.seed);
        let records_file = format!("{tag}.rec");
        let frames_file = format!("{tag}.frm");
        let mut buf = Vec::with_capacity(rollout.records.len() * RECORD_BYTES);
        for rec in &rollout.records {
            pack_record(rec, &mut buf);
        }
        std::fs::write(dir.join(&records_file), &buf)?;
        let mut fbuf = Vec::with_capacity(rollout.frames.len() * 200 * 4);
        for frame in &rollout.frames {
            for row in frame {
                for v in row {
                    fbuf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        std::fs::write(dir.join(&frames_file), &fbuf)?;
        let entry = RolloutEntry {
            round,
            seed: rollout.seed,
            crashed: rollout.crashed,
            records: rollout.records.len(),
            frames: rollout.frames.len(),
            records_file,
            frames_file,
            draw: rollout.draw,
            train_picks: rollout.train_picks.clone(),
            holdout_picks: rollout.holdout_picks.clone(),
        };
        writeln!(manifest, "{}", serde_json::to_string(&entry)?)?;
    }
    Ok(())
}

/// Load a dataset directory written by [`append_round`]; returns the dataset
/// and the number of completed rounds.
pub fn load(dir: &Path) -> Result<(Dataset, usize)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let reader = BufReader::new(File::open(&manifest_path)?);
    let mut lines = reader.lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: "empty manifest".into(),
            })
        }
    };
    if header.format != FORMAT {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            reason: format!("unknown format '{}'", header.format),
        });
    }
    let mut dataset = Dataset::new(header.maneuver);
    let mut rounds = 0;
    for line in lines {
        let entry: RolloutEntry = serde_json::from_str(&line?)?;
        rounds = rounds.max(entry.round + 1);
        let mut buf = Vec::new();
        File::open(dir.join(&entry.records_file))?.read_to_end(&mut buf)?;
        if buf.len() != entry.records * RECORD_BYTES {
            return Err(Error::Format {
                path: entry.records_file.clone(),
                reason: format!("expected {} bytes, got {}", entry.records * RECORD_BYTES, buf.len()),
            });
        }
        let records: Vec<RolloutRecord> = buf
            .chunks_exact(RECORD_BYTES)
            .map(unpack_record)
            .collect::<Result<_>>()?;
        let mut fbuf = Vec::new();
        File::open(dir.join(&entry.frames_file))?.read_to_end(&mut fbuf)?;
        if fbuf.len() != entry.frames * 200 * 4 {
            return Err(Error::Format {
                path: entry.frames_file.clone(),
                reason: "frame block size mismatch".into(),
            });
        }
        let frames: Vec<TrackFrame<f32>> = fbuf
            .chunks_exact(200 * 4)
            .map(|chunk| {
                let mut frame = [[0.0f32; 5]; crate::sensing::TRACKS_PER_FRAME];
                for (i, quad) in chunk.chunks_exact(4).enumerate() {
                    frame[i / 5][i % 5] = f32::from_le_bytes(quad.try_into().unwrap());
                }
                frame
            })
            .collect();
        dataset.append(Rollout {
            maneuver: header.maneuver,
            seed: entry.seed,
            records,
            frames,
            crashed: entry.crashed,
            draw: entry.draw,
            train_picks: entry.train_picks,
            holdout_picks: entry.holdout_picks,
        });
    }
    Ok((dataset, rounds))
}
