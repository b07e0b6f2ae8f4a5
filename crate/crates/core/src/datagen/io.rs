//! Dataset CSV (`id,t,x1..xp,a,y_next`) and the `.noise.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::types::{Dataset, NoiseBundle, Trajectory};
use crate::error::{Error, Result};

/// `data.csv` → `data.noise.json`.
pub fn noise_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("noise.json")
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text of the observed trajectories.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::from("id,t");
    for j in 1..=dataset.p {
        write!(out, ",x{j}").unwrap();
    }
    out.push_str(",a,y_next\n");
    for tr in &dataset.trajectories {
        for t in 0..dataset.horizon {
            write!(out, "{},{}", tr.id, t + 1).unwrap();
            for v in &tr.x[t] {
                out.push(',');
                out.push_str(&fmt_float(*v));
            }
            writeln!(out, ",{},{}", tr.a[t], fmt_float(tr.y[t])).unwrap();
        }
    }
    out
}

/// Writes the CSV and, when present, the noise sidecar.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, dataset_to_csv(dataset)).map_err(|e| Error::io(path, e))?;
    if let Some(noise) = &dataset.noise {
        let side = noise_sidecar_path(path);
        let json = serde_json::to_string(noise)?;
        fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Reads a dataset; the sidecar is picked up when it exists.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trajectories = parse_csv(&text, path)?;
    let side = noise_sidecar_path(path);
    let noise = if side.exists() {
        let raw = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(serde_json::from_str::<NoiseBundle>(&raw)?)
    } else {
        None
    };
    Dataset::new(trajectories, noise)
}

pub(crate) fn parse_csv(text: &str, path: &Path) -> Result<Vec<Trajectory>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let p = cols.len().saturating_sub(4);
    let header_ok = cols.len() >= 5
        && cols[0] == "id"
        && cols[1] == "t"
        && cols[cols.len() - 2] == "a"
        && cols[cols.len() - 1] == "y_next"
        && (1..=p).all(|j| cols[j + 1] == format!("x{j}"));
    if !header_ok {
        return Err(err(
            1,
            format!("expected header `id,t,x1..xp,a,y_next`, got `{header}`"),
        ));
    }

    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != p + 4 {
            return Err(err(line_no, format!("expected {} fields, got {}", p + 4, fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.parse::<usize>()
                .map_err(|_| err(line_no, format!("invalid {name} `{s}`")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line_no, format!("invalid number `{s}`")))
        };
        let id = int(fields[0], "id")?;
        let t = int(fields[1], "t")?;
        let x = fields[2..2 + p].iter().map(|s| float(s)).collect::<Result<Vec<_>>>()?;
        let a = match fields[p + 2] {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(err(line_no, format!("non-binary treatment `{other}`"))),
        };
        let y = float(fields[p + 3])?;

        let start_new = trajectories.last().is_none_or(|tr| tr.id != id);
        if start_new {
            if t != 1 {
                return Err(err(line_no, format!("patient {id} starts at t={t}, expected t=1")));
            }
            if trajectories.iter().any(|tr| tr.id == id) {
                return Err(err(line_no, format!("rows of patient {id} are not contiguous")));
            }
            trajectories.push(Trajectory {
                id,
                x: Vec::new(),
                a: Vec::new(),
                y: Vec::new(),
            });
        }
        let tr = trajectories.last_mut().expect("just pushed");
        if t != tr.a.len() + 1 {
            return Err(err(
                line_no,
                format!("patient {id}: expected t={}, got t={t}", tr.a.len() + 1),
            ));
        }
        tr.x.push(x);
        tr.a.push(a);
        tr.y.push(y);
    }
    if let Some(first) = trajectories.first() {
        let horizon = first.a.len();
        if let Some(bad) = trajectories.iter().find(|tr| tr.a.len() != horizon) {
            return Err(err(
                text.lines().count(),
                format!("patient {} has {} steps, expected {horizon}", bad.id, bad.a.len()),
            ));
        }
    }
    Ok(trajectories)
}
