//! Logged bandit data and potential-outcome tables, plus their CSV formats.
//!
//! * Dataset CSV: header `x1,...,xd,a,y` with `a` a 1-based action label.
//! * Potential-outcome CSV: `x1..xd,y1..yM` optionally followed by
//!   `mu1..muM,sigma1..sigmaM` describing each row's Gaussian reward law.
//!
//! Floats are written with 17 significant digits so files round-trip exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::policy::Policy;
use crate::{Error, Result};

/// Format a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Rows of `(covariates, action, reward)`; covariates stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_actions: usize,
    x: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, num_actions: usize, x: Vec<f64>, actions: Vec<usize>, rewards: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("covariate dimension must be positive"));
        }
        if num_actions == 0 {
            return Err(Error::invalid("need at least one action"));
        }
        let n = actions.len();
        if x.len() != n * dim || rewards.len() != n {
            return Err(Error::invalid("covariate, action and reward lengths disagree"));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::invalid(format!("action index {a} out of range for {num_actions} actions")));
        }
        if x.iter().chain(&rewards).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset entries"));
        }
        Ok(Self {
            dim,
            num_actions,
            x,
            actions,
            rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn action(&self, i: usize) -> usize {
        self.actions[i]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            num_actions: self.num_actions,
            x,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
        }
    }

    /// Same rows with a different reward column.
    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.dim, self.num_actions, self.x.clone(), self.actions.clone(), rewards)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push("a".into());
        header.push("y".into());
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            rec.push((self.actions[i] + 1).to_string());
            rec.push(fmt_f64(self.rewards[i]));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse a dataset CSV. `num_actions` defaults to the largest label seen.
    pub fn read_csv<R: Read>(r: R, num_actions: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let dim = cols.iter().take_while(|c| c.starts_with('x')).count();
        if dim == 0 || cols.len() != dim + 2 || cols[dim] != "a" || cols[dim + 1] != "y" {
            return Err(Error::invalid(format!("dataset header must be x1..xd,a,y; got {cols:?}")));
        }
        let mut x = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            for j in 0..dim {
                x.push(parse_f64(&rec[j], line + 2)?);
            }
            let a: usize = rec[dim]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: bad action label {:?}", line + 2, &rec[dim])))?;
            if a == 0 {
                return Err(Error::invalid(format!("line {}: action labels are 1-based", line + 2)));
            }
            actions.push(a - 1);
            rewards.push(parse_f64(&rec[dim + 1], line + 2)?);
        }
        if actions.is_empty() {
            return Err(Error::EmptyInput("dataset rows"));
        }
        let seen = actions.iter().max().map_or(0, |&a| a + 1);
        let m = num_actions.unwrap_or(seen).max(seen);
        Dataset::new(dim, m, x, actions, rewards)
    }

    pub fn load(path: impl AsRef<Path>, num_actions: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), num_actions)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("line {line}: cannot parse {s:?} as a number")))
}

/// Test-time table carrying every potential outcome, and optionally the
/// Gaussian law `(mu, sigma)` each outcome was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable {
    pub dim: usize,
    pub num_actions: usize,
    /// Row-major `n × dim`.
    pub x: Vec<f64>,
    /// Row-major `n × num_actions`.
    pub outcomes: Vec<f64>,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
}

impl PotentialOutcomeTable {
    pub fn new(dim: usize, num_actions: usize, x: Vec<f64>, outcomes: Vec<f64>) -> Result<Self> {
        if dim == 0 || num_actions == 0 {
            return Err(Error::invalid("dimension and action count must be positive"));
        }
        if x.len() % dim != 0 || outcomes.len() != (x.len() / dim) * num_actions {
            return Err(Error::invalid("covariate and outcome shapes disagree"));
        }
        Ok(Self {
            dim,
            num_actions,
            x,
            outcomes,
            mu: None,
            sigma: None,
        })
    }

    pub fn with_gaussian_metadata(mut self, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != self.outcomes.len() || sigma.len() != self.outcomes.len() {
            return Err(Error::invalid("metadata shape must match outcomes"));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("sigma must be positive"));
        }
        self.mu = Some(mu);
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn outcome(&self, i: usize, a: usize) -> f64 {
        self.outcomes[i * self.num_actions + a]
    }

    /// Outcome of the action the policy picks in every row.
    pub fn chosen_outcomes<P: Policy + ?Sized>(&self, policy: &P) -> Vec<f64> {
        (0..self.len()).map(|i| self.outcome(i, policy.action(self.row(i)))).collect()
    }

    pub fn mean_reward<P: Policy + ?Sized>(&self, policy: &P) -> f64 {
        let v = self.chosen_outcomes(policy);
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// A logged dataset in which each row's action was `actions[i]`.
    pub fn observe(&self, actions: Vec<usize>) -> Result<Dataset> {
        let rewards = actions.iter().enumerate().map(|(i, &a)| self.outcome(i, a)).collect();
        Dataset::new(self.dim, self.num_actions, self.x.clone(), actions, rewards)
    }

    pub fn write_csv<W: Write>(&self, w: W, include_metadata: bool) -> Result<()> {
        let meta = include_metadata && self.mu.is_some() && self.sigma.is_some();
        let m = self.num_actions;
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.extend((1..=m).map(|a| format!("y{a}")));
        if meta {
            header.extend((1..=m).map(|a| format!("mu{a}")));
            header.extend((1..=m).map(|a| format!("sigma{a}")));
        }
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            rec.extend(self.outcomes[i * m..(i + 1) * m].iter().map(|&v| fmt_f64(v)));
            if meta {
                let (mu, sigma) = (self.mu.as_ref().unwrap(), self.sigma.as_ref().unwrap());
                rec.extend(mu[i * m..(i + 1) * m].iter().map(|&v| fmt_f64(v)));
                rec.extend(sigma[i * m..(i + 1) * m].iter().map(|&v| fmt_f64(v)));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, include_metadata: bool) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), include_metadata)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|c| c.strip_prefix(prefix).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())))
                .count()
        };
        let dim = count("x");
        let m = count("y");
        let n_mu = count("mu");
        let n_sigma = count("sigma");
        if dim == 0 || m == 0 {
            return Err(Error::invalid("potential-outcome header needs x1..xd and y1..yM columns"));
        }
        let meta = match (n_mu, n_sigma) {
            (0, 0) => false,
            (a, b) if a == m && b == m => true,
            _ => return Err(Error::invalid("metadata needs mu1..muM and sigma1..sigmaM")),
        };
        if header.len() != dim + m * if meta { 3 } else { 1 } {
            return Err(Error::invalid("unexpected columns in potential-outcome header"));
        }
        let (mut x, mut y, mut mu, mut sigma) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            for j in 0..dim {
                x.push(parse_f64(&rec[j], line)?);
            }
            for a in 0..m {
                y.push(parse_f64(&rec[dim + a], line)?);
            }
            if meta {
                for a in 0..m {
                    mu.push(parse_f64(&rec[dim + m + a], line)?);
                    sigma.push(parse_f64(&rec[dim + 2 * m + a], line)?);
                }
            }
        }
        if x.is_empty() {
            return Err(Error::EmptyInput("potential-outcome rows"));
        }
        let t = Self::new(dim, m, x, y)?;
        if meta {
            t.with_gaussian_metadata(mu, sigma)
        } else {
            Ok(t)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_csv_round_trip_is_exact() {
        let d = Dataset::new(2, 3, vec![0.1, -1.0 / 3.0, 1e-300, 2.5], vec![0, 2], vec![std::f64::consts::PI, -0.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,a,y\n"));
        assert!(text.lines().nth(1).unwrap().contains(",1,"));
        let back = Dataset::read_csv(&buf[..], Some(3)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_zero_based_labels() {
        let text = "x1,a,y\n0.5,0,1.0\n";
        assert!(Dataset::read_csv(text.as_bytes(), None).is_err());
    }

    #[test]
    fn table_metadata_round_trip() {
        let t = PotentialOutcomeTable::new(1, 2, vec![0.25], vec![1.0, 2.0])
            .unwrap()
            .with_gaussian_metadata(vec![0.9, 2.1], vec![0.2, 0.5])
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, true).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,y1,y2,mu1,mu2,sigma1,sigma2"));
        assert_eq!(PotentialOutcomeTable::read_csv(&buf[..]).unwrap(), t);
        let mut bare = Vec::new();
        t.write_csv(&mut bare, false).unwrap();
        let back = PotentialOutcomeTable::read_csv(&bare[..]).unwrap();
        assert!(back.mu.is_none());
    }
}
