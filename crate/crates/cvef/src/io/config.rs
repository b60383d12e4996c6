//! Flat `key = value` configuration files with dotted keys.
//!
//! Unknown keys are rejected, every parse failure names the offending key,
//! and all physical-parameter invariants are revalidated after parsing.
//! Lines starting with `#` and blank lines are ignored.

use crate::diagnostics::NormSpec;
use crate::error::{CvefError, Result};
use crate::grid::Grid;
use crate::momentum::MomentumOptions;
use crate::picard::{PicardOptions, RunConfig};
use crate::state::{ICSpec, PhysParams};
use crate::transport::{Scheme, TransportOptions};

/// Parsed configuration with every field defaulted.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub grid_n: [usize; 3],
    pub grid_length: [f64; 3],
    pub params: PhysParams,
    pub ic: ICSpec,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub stride: usize,
    pub out_dir: String,
    pub q: f64,
    pub theta: f64,
    pub scheme: Scheme,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            grid_n: [32, 32, 32],
            grid_length: [2.0 * std::f64::consts::PI; 3],
            params: PhysParams::default(),
            ic: ICSpec::default(),
            dt: 1e-3,
            t_end: 1e-2,
            picard_tol: 1e-10,
            picard_max_iter: 50,
            stride: 1,
            out_dir: "out".into(),
            q: 4.0,
            theta: 1.0,
            scheme: Scheme::SpectralRk4,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CvefError {
    CvefError::Config(format!("{key}: {msg}"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| bad(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(bad(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| bad(key, format!("`{v}` is not a nonnegative integer")))
}

/// `"32"` or `"32,16,8"`.
fn parse_triple_usize(key: &str, v: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = v.split(',').map(|s| s.trim()).collect();
    match parts.len() {
        1 => {
            let n = parse_usize(key, parts[0])?;
            Ok([n, n, n])
        }
        3 => Ok([
            parse_usize(key, parts[0])?,
            parse_usize(key, parts[1])?,
            parse_usize(key, parts[2])?,
        ]),
        _ => Err(bad(key, "expected one value or three comma-separated values")),
    }
}

fn parse_triple_f64(key: &str, v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').map(|s| s.trim()).collect();
    match parts.len() {
        1 => {
            let x = parse_f64(key, parts[0])?;
            Ok([x, x, x])
        }
        3 => Ok([
            parse_f64(key, parts[0])?,
            parse_f64(key, parts[1])?,
            parse_f64(key, parts[2])?,
        ]),
        _ => Err(bad(key, "expected one value or three comma-separated values")),
    }
}

/// Wavevector list: semicolon-separated integer triples, `"1,0,0; 0,1,1"`.
fn parse_modes(key: &str, v: &str) -> Result<Vec<[i64; 3]>> {
    let mut out = Vec::new();
    for part in v.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let nums: Vec<&str> = part.split(',').map(|s| s.trim()).collect();
        if nums.len() != 3 {
            return Err(bad(key, format!("mode `{part}` is not an integer triple")));
        }
        let mut m = [0i64; 3];
        for (d, n) in nums.iter().enumerate() {
            m[d] = n
                .parse()
                .map_err(|_| bad(key, format!("`{n}` is not an integer")))?;
        }
        out.push(m);
    }
    Ok(out)
}

impl ConfigFile {
    /// Parse and validate a config file body.
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut cfg = ConfigFile::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CvefError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(bad(key, "duplicate key"));
            }
            seen.push(key.to_string());
            match key {
                "grid.n" => cfg.grid_n = parse_triple_usize(key, value)?,
                "grid.length" => cfg.grid_length = parse_triple_f64(key, value)?,
                "params.mu" => cfg.params.mu = parse_f64(key, value)?,
                "params.lambda" => cfg.params.lambda = parse_f64(key, value)?,
                "params.gamma" => cfg.params.gamma = parse_f64(key, value)?,
                "params.nu" => cfg.params.nu = parse_f64(key, value)?,
                "ic.amplitude" => cfg.ic.amplitude = parse_f64(key, value)?,
                "ic.modes" => cfg.ic.modes = parse_modes(key, value)?,
                "ic.seed" => {
                    cfg.ic.seed = value
                        .parse()
                        .map_err(|_| bad(key, format!("`{value}` is not a u64 seed")))?
                }
                "ic.velocity_amplitude" => {
                    cfg.ic.velocity_amplitude = parse_f64(key, value)?
                }
                "time.dt" => cfg.dt = parse_f64(key, value)?,
                "time.t_end" => cfg.t_end = parse_f64(key, value)?,
                "picard.tol" => cfg.picard_tol = parse_f64(key, value)?,
                "picard.max_iter" => cfg.picard_max_iter = parse_usize(key, value)?,
                "output.stride" => cfg.stride = parse_usize(key, value)?,
                "output.dir" => cfg.out_dir = value.to_string(),
                "norms.q" => cfg.q = parse_f64(key, value)?,
                "momentum.theta" => cfg.theta = parse_f64(key, value)?,
                "transport.scheme" => {
                    cfg.scheme = match value {
                        "spectral-rk4" => Scheme::SpectralRk4,
                        "semi-lagrangian-rk2" => Scheme::SemiLagrangianRk2,
                        other => {
                            return Err(bad(
                                key,
                                format!(
                                    "`{other}` is not a scheme (spectral-rk4 | semi-lagrangian-rk2)"
                                ),
                            ))
                        }
                    }
                }
                other => {
                    return Err(CvefError::Config(format!("unknown key `{other}`")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Revalidate every invariant, naming the key on failure.
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid_n, self.grid_length)?;
        self.params.validate()?;
        self.ic.validate()?;
        self.run_config()?.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_n, self.grid_length)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut momentum = MomentumOptions::new(self.theta)?;
        momentum.density_lagging = crate::momentum::DensityLagging::FreezeRho;
        Ok(RunConfig {
            dt: self.dt,
            t_end: self.t_end,
            stride: self.stride,
            picard: PicardOptions {
                tol: self.picard_tol,
                max_iter: self.picard_max_iter,
                ..Default::default()
            },
            transport: TransportOptions {
                scheme: self.scheme,
                ..Default::default()
            },
            momentum,
            norms: NormSpec::new(self.q)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample configuration
grid.n = 16
grid.length = 6.283185307179586
params.mu = 1.0
params.lambda = 0.0
params.gamma = 2.0
params.nu = 1.0
ic.amplitude = 0.01
ic.modes = 1,0,0; 0,1,1
ic.seed = 28
ic.velocity_amplitude = 0.01
time.dt = 1e-3
time.t_end = 0.01
picard.tol = 1e-10
picard.max_iter = 50
output.stride = 1
output.dir = out
norms.q = 4
momentum.theta = 0.5
transport.scheme = spectral-rk4
";

    #[test]
    fn parses_the_full_key_set() {
        let cfg = ConfigFile::parse(SAMPLE).unwrap();
        assert_eq!(cfg.grid_n, [16, 16, 16]);
        assert_eq!(cfg.ic.modes, vec![[1, 0, 0], [0, 1, 1]]);
        assert_eq!(cfg.ic.seed, 28);
        assert_eq!(cfg.theta, 0.5);
        assert!(cfg.grid().is_ok());
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = ConfigFile::parse("grid.m = 16\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grid.m"), "{msg}");
    }

    #[test]
    fn invariant_violations_name_the_key() {
        for (body, needle) in [
            ("params.mu = -1\n", "mu"),
            ("params.gamma = 1.0\n", "gamma"),
            ("params.nu = 0.5\n", "nu"),
            ("grid.n = 7\n", "grid.n"),
            ("time.dt = 0\n", "time.dt"),
            ("picard.tol = 0\n", "picard.tol"),
            ("norms.q = 2\n", "norms.q"),
            ("momentum.theta = 0.2\n", "momentum.theta"),
            ("ic.amplitude = 0.1\nic.modes =\n", "ic.modes"),
            ("output.stride = 0\n", "output.stride"),
        ] {
            let err = ConfigFile::parse(body).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(needle), "body {body:?} gave: {msg}");
        }
    }

    #[test]
    fn duplicate_and_malformed_lines_are_rejected() {
        assert!(ConfigFile::parse("time.dt = 1e-3\ntime.dt = 1e-4\n").is_err());
        assert!(ConfigFile::parse("just some words\n").is_err());
        assert!(ConfigFile::parse("grid.n = 1,2\n").is_err());
        assert!(ConfigFile::parse("ic.modes = 1,0\n").is_err());
    }

    #[test]
    fn defaults_round_trip_into_a_valid_run_config() {
        let cfg = ConfigFile::parse("").unwrap();
        let rc = cfg.run_config().unwrap();
        assert!(rc.validate().is_ok());
    }
}
