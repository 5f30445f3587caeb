//! Deterministic artifact writers. Numbers are written with 17 significant
//! digits so regression baselines round-trip exactly, and every output
//! file gets a JSON sidecar carrying the artifact version and the full
//! resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use otoc_core::hartree::HartreeTrajectory;

pub const ARTIFACT_VERSION: &str = concat!("otoc-", env!("CARGO_PKG_VERSION"));

/// 17 significant digits, scientific.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

pub struct OutputWriter {
    dir: PathBuf,
    pipeline: String,
    resolved_config: String,
}

impl OutputWriter {
    pub fn new(dir: &str, pipeline: &str, resolved_config: &str) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputWriter {
            dir: PathBuf::from(dir),
            pipeline: pipeline.to_string(),
            resolved_config: resolved_config.to_string(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn sidecar(&self, name: &str, extra: &[(String, String)]) -> std::io::Result<()> {
        let mut body = String::new();
        body.push_str("{\n");
        body.push_str(&format!(
            "  \"artifact_version\": \"{}\",\n",
            ARTIFACT_VERSION
        ));
        body.push_str(&format!(
            "  \"pipeline\": \"{}\",\n",
            json_escape(&self.pipeline)
        ));
        body.push_str(&format!("  \"file\": \"{}\",\n", json_escape(name)));
        for (k, v) in extra {
            body.push_str(&format!("  \"{}\": {},\n", json_escape(k), v));
        }
        body.push_str(&format!(
            "  \"resolved_config\": \"{}\"\n",
            json_escape(&self.resolved_config)
        ));
        body.push_str("}\n");
        fs::write(self.dir.join(format!("{name}.meta.json")), body)
    }

    /// Write a CSV with a header row and per-row string cells, plus its
    /// sidecar.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut body = String::new();
        body.push_str(&header.join(","));
        body.push('\n');
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        fs::write(self.path(name), body)?;
        self.sidecar(name, &[])
    }

    /// Flat JSON object from already-serialized values, plus sidecar.
    pub fn json(&self, name: &str, fields: &[(String, String)]) -> std::io::Result<()> {
        let mut body = String::new();
        body.push_str("{\n");
        for (i, (k, v)) in fields.iter().enumerate() {
            let comma = if i + 1 == fields.len() { "" } else { "," };
            body.push_str(&format!("  \"{}\": {}{}\n", json_escape(k), v, comma));
        }
        body.push_str("}\n");
        fs::write(self.path(name), body)?;
        self.sidecar(name, &[])
    }

    /// Binary snapshot dump: little-endian header (u32 d, u32 M, f64 L,
    /// f64 dt, u64 count) followed by count * M^d interleaved re/im f64
    /// amplitude pairs.
    pub fn snapshots(&self, name: &str, traj: &HartreeTrajectory) -> std::io::Result<()> {
        let space = traj.space();
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(&(space.dim() as u32).to_le_bytes())?;
        f.write_all(&(space.grid_points() as u32).to_le_bytes())?;
        f.write_all(&space.box_length().to_le_bytes())?;
        f.write_all(&traj.dt().to_le_bytes())?;
        f.write_all(&(traj.snapshots().len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(space.len() * 16);
        for snap in traj.snapshots() {
            buf.clear();
            for z in snap.amplitudes() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            f.write_all(&buf)?;
        }
        drop(f);
        self.sidecar(
            name,
            &[(
                "snapshot_count".to_string(),
                traj.snapshots().len().to_string(),
            )],
        )
    }
}

/// Read back a snapshot dump header (diagnostic / test support).
pub fn read_snapshot_header(path: &Path) -> std::io::Result<(u32, u32, f64, f64, u64)> {
    let data = fs::read(path)?;
    if data.len() < 32 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "short header",
        ));
    }
    let d = u32::from_le_bytes(data[0..4].try_into().unwrap());
    let m = u32::from_le_bytes(data[4..8].try_into().unwrap());
    let l = f64::from_le_bytes(data[8..16].try_into().unwrap());
    let dt = f64::from_le_bytes(data[16..24].try_into().unwrap());
    let count = u64::from_le_bytes(data[24..32].try_into().unwrap());
    Ok((d, m, l, dt, count))
}
