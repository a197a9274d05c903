//! Game and configuration files.
//!
//! Files are JSON with sorted keys, shortest round-trip numbers and a
//! trailing newline, so `save(load(bytes)) == bytes` for any file written here.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::points::{transpose, Boundary, Move, Orientation};
use crate::profile::GridSpec;
use crate::search::{PenTipg, QpSettings, SearchConfig};

use super::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Transcribed from printed six-decimal tables.
    Golden,
    /// Produced by `search`.
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_approx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step2_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qp: Option<QpFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub schema_version: u32,
    pub lambda: f64,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    /// Offset of the final point `[Λ+½+ε, Λ+½+ε]`.
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub orientation: Orientation,
    pub v_star: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_star: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn to_matrix(rows: &[Vec<f64>], n: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Input(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl GameFile {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.s.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::Input("S must be strictly increasing".into()));
        }
        to_matrix(&self.v_star, self.s.len(), "v_star")?;
        if let Some(h) = &self.h_star {
            to_matrix(h, self.s.len(), "h_star")?;
        }
        Ok(())
    }

    pub fn is_golden(&self) -> bool {
        self.provenance.as_ref().is_some_and(|p| p.source == Source::Golden)
    }

    pub fn boundary(&self) -> Result<Boundary, CliError> {
        Boundary::on_grid(self.lambda, self.epsilon, &self.s)
            .map_err(|e| CliError::Input(format!("final point not on S: {e}")))
    }

    /// `(h*, v*)`; `h* = v*ᵀ` when the file stores only `v*`.
    pub fn moves(&self) -> Result<(Move, Move), CliError> {
        let n = self.s.len();
        let v = Move::from_matrix(&self.s, &to_matrix(&self.v_star, n, "v_star")?, self.orientation)
            .map_err(|e| CliError::Input(e.to_string()))?;
        let h = match &self.h_star {
            Some(rows) => Move::from_matrix(&self.s, &to_matrix(rows, n, "h_star")?, self.orientation)
                .map_err(|e| CliError::Input(e.to_string()))?,
            None => transpose(&v),
        };
        Ok((h, v))
    }

    pub fn game(&self) -> Result<PenTipg, CliError> {
        let (h, v) = self.moves()?;
        Ok(PenTipg::from_moves(h, v, &self.boundary()?, &self.t))
    }

    /// Stores a search result with `v*` as a `row=x` matrix.
    pub fn from_search(game: &PenTipg, cfg: &SearchConfig) -> Result<GameFile, CliError> {
        let s = &cfg.grid.s;
        let v = game.v_star.to_matrix(s).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(GameFile {
            schema_version: SCHEMA_VERSION,
            lambda: cfg.grid.lambda,
            s: s.clone(),
            t: cfg.grid.t.clone(),
            epsilon: cfg.boundary.epsilon,
            truncation: cfg.grid.truncation,
            delta: cfg.grid.truncation.is_none().then_some(cfg.grid.delta),
            orientation: Orientation::RowX,
            v_star: from_matrix(&v),
            h_star: None,
            provenance: Some(Provenance {
                source: Source::Search,
                eps_approx: Some(game.eps_approx),
                step2_objective: game.step2_objective,
                qp: Some(QpFile::from(&cfg.qp)),
                weight_bound: cfg.weight_bound,
                note: None,
            }),
        })
    }
}

/// Solver settings as stored in files; absent fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QpFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<bool>,
}

impl QpFile {
    pub fn settings(&self) -> QpSettings {
        let d = QpSettings::default();
        QpSettings {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            eps_abs: self.eps_abs.unwrap_or(d.eps_abs),
            eps_rel: self.eps_rel.unwrap_or(d.eps_rel),
            polish: self.polish.unwrap_or(d.polish),
            ..d
        }
    }
}

impl From<&QpSettings> for QpFile {
    fn from(q: &QpSettings) -> QpFile {
        QpFile {
            max_iterations: Some(q.max_iterations),
            eps_abs: Some(q.eps_abs),
            eps_rel: Some(q.eps_rel),
            polish: Some(q.polish),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfigFile {
    pub lambda: f64,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub epsilon: f64,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub weight_bound: Option<f64>,
    #[serde(default)]
    pub qp: QpFile,
}

/// Placeholder threshold when the rank is fixed by `truncation`.
const UNUSED_DELTA: f64 = 1e-6;

impl SearchConfigFile {
    pub fn config(&self) -> Result<SearchConfig, CliError> {
        let delta = match (self.truncation, self.delta) {
            (None, None) => return Err(CliError::Input("config needs `truncation` or `delta`".into())),
            (_, Some(d)) => d,
            (Some(_), None) => UNUSED_DELTA,
        };
        let grid = GridSpec::new(self.s.clone(), self.t.clone(), delta, self.truncation, self.lambda)
            .map_err(|e| CliError::Input(format!("grid: {e}")))?;
        SearchConfig::new(grid, self.epsilon, self.qp.settings(), self.weight_bound)
            .map_err(|e| CliError::Input(e.to_string()))
    }
}

/// Canonical text: sorted keys, two-space indent, trailing newline.
pub fn to_canonical<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Numerical(format!("serialize: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Numerical(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Input(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
    })
}

pub fn load_game(path: &Path) -> Result<GameFile, CliError> {
    let g: GameFile = parse(&read_text(path)?, path)?;
    g.validate()?;
    Ok(g)
}

pub fn load_config(path: &Path) -> Result<SearchConfigFile, CliError> {
    parse(&read_text(path)?, path)
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn save_game(path: &Path, g: &GameFile) -> Result<(), CliError> {
    write_atomic(path, to_canonical(g)?.as_bytes())
}
