//! TOML experiment files, dotted `key=value` overrides and spin-system files.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{build_heisenberg_square, build_nmr_hamiltonian, build_random_ising, Hamiltonian, ModelTag, SpinSystemSpec};

pub fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string (`mode=direct`).
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = table;
    for (i, p) in parents.iter().enumerate() {
        let slot = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = slot.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override key {key:?}: `{}` is not a table", path[..=i].join(".")))
        })?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Deserializes `table`, naming the offending key on failure.
pub fn from_table<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        // toml appends its own "in `key`" line; the path already says where
        let inner = e.inner().to_string();
        let msg = inner.lines().next().unwrap_or_default().trim();
        if path == "." {
            Error::Config(msg.to_string())
        } else {
            Error::Config(format!("{path}: {msg}"))
        }
    })
}

/// A parsed config file plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct Loaded<T> {
    pub config: T,
    pub base_dir: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<Loaded<T>> {
    let mut table = read_table(path)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(Loaded {
        config: from_table(table)?,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// A spin system, inline or by `file` reference.
///
/// Spins are numbered from 1 in `couplings_hz`; `larmor_hz` and the
/// couplings are in Hz.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub larmor_hz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings_hz: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bz: Option<f64>,
    /// Keep only the first `qubits` spins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

impl SystemConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let sys: SystemConfig = from_table(read_table(path)?)?;
        if sys.file.is_some() {
            return Err(Error::Config(format!(
                "{}: system files cannot reference other files",
                path.display()
            )));
        }
        Ok(sys)
    }

    /// Inlines a `file` reference; fields set alongside `file` win.
    pub fn resolve(&self, base_dir: &Path) -> Result<SystemConfig> {
        let Some(file) = &self.file else {
            return Ok(self.clone());
        };
        let mut out = Self::from_file(&base_dir.join(file))?;
        macro_rules! overlay {
            ($($f:ident),*) => {$(if self.$f.is_some() { out.$f = self.$f.clone(); })*};
        }
        overlay!(description, model, n, larmor_hz, couplings_hz, seed, j, bz, qubits);
        Ok(out)
    }

    /// NMR parameters in library units (rad/s Larmor, Hz couplings).
    pub fn nmr_spec(&self) -> Result<SpinSystemSpec> {
        let larmor = need(&self.larmor_hz, "system.larmor_hz")?;
        let full = self.n.unwrap_or(larmor.len());
        if larmor.len() != full {
            return Err(Error::Config(format!(
                "system.larmor_hz has {} entries but n = {full}",
                larmor.len()
            )));
        }
        let mut couplings = vec![vec![0.0; full]; full];
        for &(i, j, v) in self.couplings_hz.as_deref().unwrap_or(&[]) {
            if i == 0 || j == 0 || i > full || j > full || i == j {
                return Err(Error::Config(format!(
                    "system.couplings_hz entry [{i}, {j}, {v}] needs distinct spins in 1..={full}"
                )));
            }
            couplings[i - 1][j - 1] = v;
            couplings[j - 1][i - 1] = v;
        }
        let n = self.qubits.unwrap_or(full);
        if n == 0 || n > full {
            return Err(Error::Config(format!("system.qubits must be in 1..={full}, got {n}")));
        }
        let spec = SpinSystemSpec {
            n,
            larmor: larmor[..n].iter().map(|f| 2.0 * PI * f).collect(),
            couplings: couplings[..n].iter().map(|r| r[..n].to_vec()).collect(),
            model: ModelTag::Nmr,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the Hamiltonian of an already resolved system.
    pub fn hamiltonian(&self) -> Result<Hamiltonian> {
        match need(&self.model, "system.model")? {
            ModelTag::Nmr => build_nmr_hamiltonian(&self.nmr_spec()?),
            ModelTag::RandomIsing => {
                let n = self.qubits.or(self.n);
                build_random_ising(need(&n, "system.n")?, need(&self.seed, "system.seed")?)
            }
            ModelTag::HeisenbergSquare => {
                if self.qubits.or(self.n).is_some_and(|n| n != 4) {
                    return Err(Error::Config("heisenberg-square is a 4-qubit model".into()));
                }
                build_heisenberg_square(need(&self.j, "system.j")?, need(&self.bz, "system.bz")?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_create_tables() {
        let mut t: toml::Table = "a = 1\n[b]\nc = \"x\"".parse().unwrap();
        apply_override(&mut t, "a=2.5").unwrap();
        apply_override(&mut t, "b.c=direct").unwrap();
        apply_override(&mut t, "d.e.f=[1, 2]").unwrap();
        apply_override(&mut t, "g = true").unwrap();
        assert_eq!(t["a"].as_float(), Some(2.5));
        assert_eq!(t["b"]["c"].as_str(), Some("direct"));
        assert_eq!(t["d"]["e"]["f"].as_array().unwrap().len(), 2);
        assert_eq!(t["g"].as_bool(), Some(true));
        assert!(apply_override(&mut t, "nokey").is_err());
        assert!(apply_override(&mut t, "a.x=1").is_err());
        assert!(apply_override(&mut t, "a..b=1").is_err());
    }

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Outer {
        inner: Inner,
    }
    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Inner {
        orders: Vec<u8>,
    }

    #[test]
    fn missing_key_is_named_with_its_path() {
        let t: toml::Table = "[inner]\nother = 1".parse().unwrap();
        let e = from_table::<Outer>(t).unwrap_err().to_string();
        assert!(e.contains("inner") && e.contains("orders"), "{e}");
    }

    #[test]
    fn nmr_system_converts_units_and_truncates() {
        let sys = SystemConfig {
            model: Some(ModelTag::Nmr),
            larmor_hz: Some(vec![100.0, -50.0, 10.0]),
            couplings_hz: Some(vec![(1, 2, 7.0), (2, 3, 4.0)]),
            qubits: Some(2),
            ..Default::default()
        };
        let spec = sys.nmr_spec().unwrap();
        assert_eq!(spec.n, 2);
        assert!((spec.larmor[0] - 200.0 * PI).abs() < 1e-12);
        assert_eq!(spec.couplings, vec![vec![0.0, 7.0], vec![7.0, 0.0]]);
        let bad = SystemConfig {
            couplings_hz: Some(vec![(0, 1, 1.0)]),
            ..sys.clone()
        };
        assert!(bad.nmr_spec().is_err());
        assert!(SystemConfig::default().hamiltonian().unwrap_err().to_string().contains("system.model"));
    }

    #[test]
    fn heisenberg_and_ising_models() {
        let h = SystemConfig {
            model: Some(ModelTag::HeisenbergSquare),
            j: Some(1.0),
            bz: Some(0.5),
            ..Default::default()
        };
        assert_eq!(h.hamiltonian().unwrap().n(), 4);
        let r = SystemConfig {
            model: Some(ModelTag::RandomIsing),
            n: Some(3),
            seed: Some(1),
            ..Default::default()
        };
        assert_eq!(r.hamiltonian().unwrap().n(), 3);
    }
}
