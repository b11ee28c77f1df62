//! Optimization path log.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub par: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Accepted iterates of a run, starting with the initial parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    dim: usize,
    rows: Vec<LogRow>,
}

impl IterationLog {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn append(&mut self, par: &[f64], value: f64, gradient: &[f64]) -> Result<()> {
        for len in [par.len(), gradient.len()] {
            if len != self.dim {
                return Err(Error::Internal(format!(
                    "log row of length {len} in a log of dimension {}",
                    self.dim
                )));
            }
        }
        self.rows.push(LogRow {
            iter: self.rows.len() + 1,
            par: par.to_vec(),
            value,
            gradient: gradient.to_vec(),
        });
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["iter".to_string()];
        h.extend((1..=self.dim).map(|i| format!("par{i}")));
        h.push("fn".into());
        h.extend((1..=self.dim).map(|i| format!("gr{i}")));
        h
    }

    /// Serializes as CSV with `iter,par1..parp,fn,gr1..grp` columns. Numbers
    /// use the shortest representation that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.header()).expect("write to memory");
        for row in &self.rows {
            let mut rec = vec![row.iter.to_string()];
            rec.extend(row.par.iter().map(f64::to_string));
            rec.push(row.value.to_string());
            rec.extend(row.gradient.iter().map(f64::to_string));
            w.write_record(&rec).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = r
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                token: e.to_string(),
            })?
            .clone();
        if headers.len() < 2 || (headers.len() - 2) % 2 != 0 {
            return Err(Error::Parse {
                line: 1,
                token: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut log = Self::new((headers.len() - 2) / 2);
        if log.header().iter().map(String::as_str).ne(headers.iter()) {
            return Err(Error::Parse {
                line: 1,
                token: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        for (n, rec) in r.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                token: e.to_string(),
            })?;
            let nums = rec
                .iter()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        token: t.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let d = log.dim;
            log.append(&nums[1..1 + d], nums[1 + d], &nums[2 + d..])?;
            if log.rows.last().map(|r| r.iter as f64) != Some(nums[0]) {
                return Err(Error::Parse {
                    line,
                    token: rec[0].to_string(),
                });
            }
        }
        Ok(log)
    }
}
