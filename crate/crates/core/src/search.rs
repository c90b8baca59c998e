//! Energy scan and bisection on an integer-valued, non-decreasing node count.

use rayon::prelude::*;
use thiserror::Error;

/// Scan and bisection settings shared by the single- and multi-channel
/// solvers. Energies are in units of the mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub scan_step: f64,
    pub bisect_tol: f64,
    pub max_bisect: usize,
}

pub const DEFAULT_SCAN_STEP: f64 = 0.05;
pub const DEFAULT_BISECT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_BISECT: usize = 200;

impl ShootingConfig {
    pub fn new(e_min: f64, e_max: f64) -> Self {
        Self {
            e_min,
            e_max,
            scan_step: DEFAULT_SCAN_STEP,
            bisect_tol: DEFAULT_BISECT_TOL,
            max_bisect: DEFAULT_MAX_BISECT,
        }
    }

    pub fn with_scan_step(mut self, step: f64) -> Self {
        self.scan_step = step;
        self
    }

    pub fn with_bisect_tol(mut self, tol: f64) -> Self {
        self.bisect_tol = tol;
        self
    }

    pub fn with_max_bisect(mut self, max: usize) -> Self {
        self.max_bisect = max;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::InvalidConfig(msg));
        if !(self.e_min.is_finite() && self.e_max.is_finite() && self.e_min < self.e_max) {
            return bad(format!(
                "need finite e_min < e_max, got [{}, {}]",
                self.e_min, self.e_max
            ));
        }
        if !(self.scan_step > 0.0 && self.scan_step.is_finite()) {
            return bad(format!("scan_step must be positive, got {}", self.scan_step));
        }
        if !(self.bisect_tol > 0.0 && self.bisect_tol.is_finite()) {
            return bad(format!("bisect_tol must be positive, got {}", self.bisect_tol));
        }
        Ok(())
    }

    /// Scan energies `e_min + k·step`, closed by `e_max`.
    fn grid_len(&self) -> usize {
        ((self.e_max - self.e_min) / self.scan_step).ceil() as usize + 1
    }

    fn grid(&self, k: usize) -> f64 {
        (self.e_min + k as f64 * self.scan_step).min(self.e_max)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "eigenvalue not bracketed: level {n} needs a node-count step from <= {n} to >= {}, \
         but counts run from {count_min} at E = {e_min} to {count_max} at E = {e_max}",
        n + 1
    )]
    NotBracketed {
        n: usize,
        e_min: f64,
        e_max: f64,
        count_min: usize,
        count_max: usize,
    },
    #[error("bisection did not reach tolerance after {iterations} steps; best bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },
}

/// Energy interval over which the node count steps past a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub count_lo: usize,
    pub count_hi: usize,
}

const CHUNK_PER_THREAD: usize = 4;

/// Brackets for levels `0..=n_max` from a single upward scan. Counts for a
/// chunk of energies are evaluated in parallel; the result does not depend on
/// scheduling.
pub fn scan_brackets<F>(count: F, cfg: &ShootingConfig, levels: &[usize]) -> Result<Vec<Bracket>, SearchError>
where
    F: Fn(f64) -> usize + Sync,
{
    cfg.validate()?;
    let Some(&top) = levels.iter().max() else {
        return Ok(Vec::new());
    };
    let total = cfg.grid_len();
    let chunk = (rayon::current_num_threads() * CHUNK_PER_THREAD).max(1);

    let mut counts: Vec<usize> = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + chunk).min(total);
        let block: Vec<usize> = (start..end).into_par_iter().map(|k| count(cfg.grid(k))).collect();
        counts.extend(block);
        if counts.last().is_some_and(|&c| c > top) {
            break;
        }
        start = end;
    }

    levels
        .iter()
        .map(|&n| {
            let first_above = counts.iter().position(|&c| c > n);
            match first_above {
                Some(k) if k > 0 => Ok(Bracket {
                    lo: cfg.grid(k - 1),
                    hi: cfg.grid(k),
                    count_lo: counts[k - 1],
                    count_hi: counts[k],
                }),
                _ => Err(SearchError::NotBracketed {
                    n,
                    e_min: cfg.e_min,
                    e_max: cfg.e_max,
                    count_min: counts[0],
                    count_max: *counts.last().expect("scan is never empty"),
                }),
            }
        })
        .collect()
}

/// Narrows `bracket` until `hi - lo <= bisect_tol`, keeping
/// `count(lo) <= n < count(hi)`.
pub fn bisect_transition<F>(
    count: F,
    mut bracket: Bracket,
    n: usize,
    cfg: &ShootingConfig,
) -> Result<(Bracket, usize), SearchError>
where
    F: Fn(f64) -> usize,
{
    let mut iterations = 0;
    while bracket.hi - bracket.lo > cfg.bisect_tol {
        let mid = bracket.lo + 0.5 * (bracket.hi - bracket.lo);
        if iterations >= cfg.max_bisect || !(mid > bracket.lo && mid < bracket.hi) {
            return Err(SearchError::NoConvergence {
                lo: bracket.lo,
                hi: bracket.hi,
                iterations,
            });
        }
        let c = count(mid);
        if c <= n {
            bracket.lo = mid;
            bracket.count_lo = c;
        } else {
            bracket.hi = mid;
            bracket.count_hi = c;
        }
        iterations += 1;
    }
    Ok((bracket, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    // staircase with steps at sqrt(2), e, pi
    fn stairs(e: f64) -> usize {
        [2.0_f64.sqrt(), std::f64::consts::E, std::f64::consts::PI]
            .iter()
            .filter(|&&s| e > s)
            .count()
    }

    #[test]
    fn brackets_satisfy_contract() {
        let cfg = ShootingConfig::new(0.0, 5.0).with_scan_step(0.1);
        let b = scan_brackets(stairs, &cfg, &[0, 1, 2]).unwrap();
        for (n, br) in b.iter().enumerate() {
            assert!(br.count_lo <= n && n < br.count_hi);
            assert!(br.hi - br.lo <= 0.1 + 1e-12);
            assert_eq!(stairs(br.lo), br.count_lo);
        }
        assert!(b[0].lo < 2.0_f64.sqrt() && 2.0_f64.sqrt() <= b[0].hi);
    }

    #[test]
    fn bisection_converges_to_step() {
        let cfg = ShootingConfig::new(0.0, 5.0).with_scan_step(0.1).with_bisect_tol(1e-12);
        let b = scan_brackets(stairs, &cfg, &[1]).unwrap()[0];
        let (fin, iters) = bisect_transition(stairs, b, 1, &cfg).unwrap();
        assert!((fin.lo - std::f64::consts::E).abs() < 1e-12);
        assert!(iters > 30);
    }

    #[test]
    fn unbracketed_levels_fail() {
        let cfg = ShootingConfig::new(0.1, 0.2);
        assert!(matches!(
            scan_brackets(stairs, &cfg, &[20]),
            Err(SearchError::NotBracketed { n: 20, .. })
        ));
        // level already passed at e_min
        let cfg = ShootingConfig::new(2.0, 3.0);
        assert!(matches!(
            scan_brackets(stairs, &cfg, &[0]),
            Err(SearchError::NotBracketed { n: 0, .. })
        ));
    }

    #[test]
    fn bisection_cap_reports_best_bracket() {
        let cfg = ShootingConfig::new(0.0, 5.0).with_bisect_tol(1e-12).with_max_bisect(5);
        let b = scan_brackets(stairs, &cfg, &[0]).unwrap()[0];
        match bisect_transition(stairs, b, 0, &cfg) {
            Err(SearchError::NoConvergence { lo, hi, iterations }) => {
                assert_eq!(iterations, 5);
                assert!(lo < 2.0_f64.sqrt() && 2.0_f64.sqrt() <= hi);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(ShootingConfig::new(1.0, 1.0).validate().is_err());
        assert!(ShootingConfig::new(0.0, 1.0).with_scan_step(0.0).validate().is_err());
        assert!(ShootingConfig::new(0.0, 1.0).with_bisect_tol(-1.0).validate().is_err());
        assert!(ShootingConfig::new(f64::NAN, 1.0).validate().is_err());
    }
}
