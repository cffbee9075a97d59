//! Result directories: every run writes its resolved config, a summary of
//! scalar outcomes and plot-ready tables into one directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::defect::DefectProfile;
use crate::error::Result;
use crate::experiments::cessi::TippingRun;
use crate::experiments::diagnostics::Spectrum;
use crate::reduce::Trajectory;

#[derive(Debug, Clone)]
pub struct ResultDir {
    path: PathBuf,
    binary: bool,
}

impl ResultDir {
    /// Creates `path` (and parents). Trajectories are written as binary
    /// when `binary` is set, as CSV otherwise.
    pub fn create(path: &Path, binary: bool) -> Result<Self> {
        std::fs::create_dir_all(path)?;
        Ok(Self { path: path.to_path_buf(), binary })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    /// Pretty JSON with a trailing newline. Object keys come out sorted, so
    /// equal values give equal bytes.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value)?;
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, &v)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// `<stem>.csv` or `<stem>.bin`; returns the file name.
    pub fn trajectory(&self, stem: &str, traj: &Trajectory) -> Result<String> {
        let name = format!("{stem}.{}", if self.binary { "bin" } else { "csv" });
        traj.save(&self.path.join(&name), self.binary)?;
        Ok(name)
    }

    /// `psd_<label>.csv` with columns `freq,power,db`.
    pub fn psd(&self, label: &str, s: &Spectrum) -> Result<()> {
        let mut w = self.file(&format!("psd_{label}.csv"))?;
        writeln!(w, "freq,power,db")?;
        for ((f, p), d) in s.freq.iter().zip(&s.power).zip(&s.db) {
            writeln!(w, "{f},{p},{d}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// `defect_profiles.csv` in long format: `mode,tau,q`.
    pub fn defect_profiles<'a, I: IntoIterator<Item = &'a DefectProfile>>(&self, profiles: I) -> Result<()> {
        let mut w = self.file("defect_profiles.csv")?;
        writeln!(w, "mode,tau,q")?;
        for p in profiles {
            for (t, q) in p.taus.iter().zip(&p.values) {
                writeln!(w, "{},{t},{q}", p.mode)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `histogram.csv` in long format: `model,realization,f_transition`, one
    /// row per model and realization, the value left empty when the model
    /// did not tip.
    pub fn transitions(&self, runs: &[TippingRun]) -> Result<()> {
        let mut w = self.file("histogram.csv")?;
        writeln!(w, "model,realization,f_transition")?;
        let models: [(&str, fn(&TippingRun) -> Option<f64>); 3] =
            [("full", |r| r.f_full), ("reduced", |r| r.f_reduced), ("slow", |r| r.f_slow)];
        for (name, get) in models {
            for (i, r) in runs.iter().enumerate() {
                match get(r) {
                    Some(f) => writeln!(w, "{name},{i},{f}")?,
                    None => writeln!(w, "{name},{i},")?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plain numeric table with the given header.
    pub fn table(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = self.file(name)?;
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_has_one_row_per_model_and_realization() {
        let dir = tempfile::tempdir().unwrap();
        let out = ResultDir::create(dir.path(), false).unwrap();
        let run = |f: Option<f64>| TippingRun {
            seed: 0,
            f_full: f,
            f_reduced: f,
            f_slow: None,
            reduced_error: None,
            noise_checksum: 0,
        };
        out.transitions(&[run(Some(0.88)), run(None)]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "full,0,0.88");
        assert_eq!(lines[2], "full,1,");
        assert_eq!(lines[5], "slow,0,");
    }

    #[test]
    fn json_keys_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let out = ResultDir::create(dir.path(), false).unwrap();
        out.json("s.json", &serde_json::json!({"b": 1, "a": 2})).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
