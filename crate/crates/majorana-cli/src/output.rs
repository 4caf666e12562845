//! CSV and JSON writers under the output directory.

use std::path::{Path, PathBuf};

use majorana_lab::dynamics::Trajectory;
use serde::Serialize;

use crate::error::{CliError, Result};

pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Out> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    pub fn child(&self, name: &str) -> Result<Out> {
        Out::new(&self.dir.join(name))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let f = std::fs::File::create(&p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(name.to_string(), e))?;
        Ok(())
    }

    /// t, occupation, coherence_re, coherence_im, fidelity; NaN where a trace is absent.
    pub fn trajectory(&self, name: &str, t: &Trajectory) -> Result<()> {
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(f64::NAN);
        let rows = (0..t.times.len()).map(|k| {
            let c = t.coherence.get(k).copied().unwrap_or(num_complex::Complex64::new(f64::NAN, f64::NAN));
            vec![t.times[k], at(&t.occupation, k), c.re, c.im, at(&t.fidelity, k)]
        });
        self.csv(name, &["t", "occupation", "coherence_re", "coherence_im", "fidelity"], rows)
    }
}
