//! Trajectory persistence.
//!
//! Binary frame file, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"SWTRAJ\0\x01"
//! 8       8     u64    N (sites)
//! 16      8     u64    frame count
//! 24      8     u64    sample stride (steps)
//! 32      8     f64    dt
//! 40      8     f64    t0 (time of frame 0)
//! 48      8     f64    h
//! 56      1     u8     drive kind (0 none, 1 ideal-tw, 2 decaying-tw)
//! 57      1     u8     direction (0 forward, 1 backward)
//! 58      6     zero padding
//! 64      8     f64    beta
//! 72      8     f64    phi0
//! 80      8     f64    window Ξ
//! 88      8     f64    ell (0 when unused)
//! 96      8     f64    decaying-drive strength (0 when unused)
//! 104     ...   frames, each 3N f64 (s_1^x, s_1^y, s_1^z, s_2^x, ...)
//! ```
//!
//! Frame `k` is at `t0 + k·stride·dt`. The sidecar `<file>.meta` is a TOML
//! record with the same header fields plus the energy ledger.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::drive::{DriveDescriptor, DriveKind};
use super::injection::{EnergyLedger, Trajectory};
use crate::chain::{ChainParams, SpinConfig};
use crate::error::{Error, Result};
use crate::soliton::Direction;

pub const MAGIC: [u8; 8] = *b"SWTRAJ\0\x01";
pub const HEADER_BYTES: usize = 104;
pub const META_FORMAT: &str = "spinwire-trajectory";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub format: String,
    pub version: u32,
    pub n_sites: usize,
    pub n_frames: usize,
    pub dt: f64,
    pub stride: usize,
    pub t0: f64,
    pub chain: ChainParams,
    pub drive: DriveDescriptor,
    pub ledger: EnergyLedger,
}

impl TrajectoryMeta {
    pub fn of(traj: &Trajectory) -> Self {
        TrajectoryMeta {
            format: META_FORMAT.to_string(),
            version: 1,
            n_sites: traj.params.n,
            n_frames: traj.len(),
            dt: traj.dt,
            stride: traj.stride,
            t0: traj.t0(),
            chain: traj.params,
            drive: DriveDescriptor::from(&traj.drive),
            ledger: traj.ledger,
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    PathBuf::from(os)
}

pub fn write_frames<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    let drive = &traj.drive;
    w.write_all(&MAGIC)?;
    w.write_u64::<LittleEndian>(traj.params.n as u64)?;
    w.write_u64::<LittleEndian>(traj.len() as u64)?;
    w.write_u64::<LittleEndian>(traj.stride as u64)?;
    w.write_f64::<LittleEndian>(traj.dt)?;
    w.write_f64::<LittleEndian>(traj.t0())?;
    w.write_f64::<LittleEndian>(traj.params.h)?;
    w.write_u8(drive.kind.code())?;
    w.write_u8(match drive.spec.direction {
        Direction::Forward => 0,
        Direction::Backward => 1,
    })?;
    w.write_all(&[0u8; 6])?;
    w.write_f64::<LittleEndian>(drive.spec.beta)?;
    w.write_f64::<LittleEndian>(drive.spec.phi0)?;
    w.write_f64::<LittleEndian>(drive.window)?;
    w.write_f64::<LittleEndian>(drive.ell.unwrap_or(0.0))?;
    w.write_f64::<LittleEndian>(if drive.kind == DriveKind::DecayingTw { drive.strength } else { 0.0 })?;
    for frame in &traj.frames {
        for s in frame.spins() {
            for c in s {
                w.write_f64::<LittleEndian>(*c)?;
            }
        }
    }
    w.flush()
}

/// Writes `path` and its `.meta` sidecar.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_frames(traj, BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    let meta = toml::to_string(&TrajectoryMeta::of(traj))
        .map_err(|e| Error::Format(format!("cannot encode sidecar: {e}")))?;
    let mpath = meta_path(path);
    std::fs::write(&mpath, meta).map_err(|e| Error::io(mpath, e))
}

struct Header {
    n: usize,
    n_frames: usize,
    stride: usize,
    dt: f64,
    t0: f64,
    h: f64,
    drive: DriveDescriptor,
}

fn read_header<R: Read>(r: &mut R) -> std::io::Result<std::result::Result<Header, String>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Ok(Err("bad magic".into()));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let n_frames = r.read_u64::<LittleEndian>()? as usize;
    let stride = r.read_u64::<LittleEndian>()? as usize;
    let dt = r.read_f64::<LittleEndian>()?;
    let t0 = r.read_f64::<LittleEndian>()?;
    let h = r.read_f64::<LittleEndian>()?;
    let kind = r.read_u8()?;
    let dir = r.read_u8()?;
    let mut pad = [0u8; 6];
    r.read_exact(&mut pad)?;
    let beta = r.read_f64::<LittleEndian>()?;
    let phi0 = r.read_f64::<LittleEndian>()?;
    let window = r.read_f64::<LittleEndian>()?;
    let ell = r.read_f64::<LittleEndian>()?;
    let strength = r.read_f64::<LittleEndian>()?;
    let Some(kind) = DriveKind::from_code(kind) else {
        return Ok(Err(format!("unknown drive kind code {kind}")));
    };
    let direction = match dir {
        0 => Direction::Forward,
        1 => Direction::Backward,
        other => return Ok(Err(format!("unknown direction code {other}"))),
    };
    let drive = if kind == DriveKind::None {
        DriveDescriptor::none()
    } else {
        DriveDescriptor {
            kind,
            beta: Some(beta),
            tan_beta: None,
            phi0,
            direction,
            ell: (kind == DriveKind::DecayingTw).then_some(ell),
            window,
            strength: (kind == DriveKind::DecayingTw).then_some(strength),
        }
    };
    Ok(Ok(Header {
        n,
        n_frames,
        stride,
        dt,
        t0,
        h,
        drive,
    }))
}

/// Reads a frame file; the ledger comes from the sidecar when present.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)
        .map_err(|e| Error::io(path, e))?
        .map_err(Error::Format)?;
    let mut params = ChainParams::new(header.n, header.h)?;
    let mpath = meta_path(path);
    let ledger = match std::fs::read_to_string(&mpath) {
        Ok(text) => {
            let meta: TrajectoryMeta =
                toml::from_str(&text).map_err(|e| Error::Format(format!("sidecar: {e}")))?;
            if meta.n_sites != header.n || meta.n_frames != header.n_frames {
                return Err(Error::Format("sidecar disagrees with frame header".into()));
            }
            params = meta.chain;
            meta.ledger
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => EnergyLedger {
            e_initial: f64::NAN,
            e_final: f64::NAN,
            work_integral: f64::NAN,
            coupling_initial: f64::NAN,
            coupling_final: f64::NAN,
        },
        Err(e) => return Err(Error::io(mpath, e)),
    };
    let drive = header.drive.build(header.h)?;
    let mut frames = Vec::with_capacity(header.n_frames);
    let mut times = Vec::with_capacity(header.n_frames);
    let mut drive_record = Vec::with_capacity(header.n_frames);
    let mut buf = vec![0f64; 3 * header.n];
    for k in 0..header.n_frames {
        r.read_f64_into::<LittleEndian>(&mut buf)
            .map_err(|e| Error::Format(format!("frame {k}: {e}")))?;
        let spins = buf.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        frames.push(SpinConfig::from_raw(spins));
        let t = Trajectory::sample_time(header.t0, header.dt, header.stride, k);
        times.push(t);
        drive_record.push(drive.waveform(t));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after last frame".into()));
    }
    Ok(Trajectory {
        params,
        drive,
        dt: header.dt,
        stride: header.stride,
        times,
        frames,
        drive_record,
        ledger,
    })
}

/// Long-form `t,n,sz` rows for density plots, keeping every
/// `frame_every`-th frame and `site_every`-th site (sites numbered from 1).
pub fn write_density_csv<W: Write>(
    traj: &Trajectory,
    mut w: W,
    frame_every: usize,
    site_every: usize,
) -> std::io::Result<()> {
    writeln!(w, "t,n,sz")?;
    let (fe, se) = (frame_every.max(1), site_every.max(1));
    for (t, frame) in traj.times.iter().zip(&traj.frames).step_by(fe) {
        for (i, s) in frame.spins().iter().enumerate().step_by(se) {
            writeln!(w, "{},{},{}", t, i + 1, s[2])?;
        }
    }
    w.flush()
}
