//! Flat `key = value` run configuration shared by every subcommand.
//!
//! Files hold one assignment per line; `#` starts a comment. Unknown keys are
//! rejected. Command-line flags are applied on top of the file in the order
//! given, so a flag always wins over the file.

use std::fmt;
use std::path::Path;

use svsnltv::{
    gaussian_kernel, motion_kernel, BlurKernel, Fidelity, NoiseSpec, PatchParams, Reweight,
    SolverConfig,
};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Saturation-value similarity NLTV.
    Svs,
    /// Per-channel NLTV baseline.
    Nltv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    None,
    Gaussian,
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Blur {
    None,
    Gaussian { sigma: f64, radius: Option<usize> },
    Motion { length: usize, angle: f64 },
}

impl Blur {
    pub fn kernel(&self) -> Result<BlurKernel<f64>, CliError> {
        Ok(match *self {
            Blur::None => BlurKernel::identity(),
            Blur::Gaussian { sigma, radius } => gaussian_kernel(sigma, radius)?,
            Blur::Motion { length, angle } => motion_kernel(length, angle)?,
        })
    }
}

impl fmt::Display for Blur {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Blur::None => write!(f, "none"),
            Blur::Gaussian {
                sigma,
                radius: None,
            } => write!(f, "gaussian:{sigma}"),
            Blur::Gaussian {
                sigma,
                radius: Some(r),
            } => write!(f, "gaussian:{sigma}:{r}"),
            Blur::Motion { length, angle } => write!(f, "motion:{length}:{angle}"),
        }
    }
}

/// Every tunable of a run, fully resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub patch: PatchParams,
    /// Derive `h0` from the noise model instead of `patch.h0`.
    pub h0_auto: bool,
    pub reweight_every: usize,
    pub method: Method,
    pub fidelity: Fidelity,
    pub noise: Noise,
    /// Gaussian noise standard deviation.
    pub sigma: f64,
    /// Poisson scale: observations are `poisson(I / d^2) d^2`.
    pub d: f64,
    pub seed: u64,
    pub blur: Blur,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub scielab_threshold: f64,
    pub samples_per_degree: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            patch: PatchParams::default(),
            h0_auto: true,
            reweight_every: 0,
            method: Method::Svs,
            fidelity: Fidelity::L2,
            noise: Noise::None,
            sigma: 0.0,
            d: 0.0,
            seed: 0,
            blur: Blur::None,
            threads: 0,
            scielab_threshold: 15.0,
            samples_per_degree: 23.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "method",
    "fidelity",
    "alpha",
    "mu",
    "lambda",
    "delta",
    "beta",
    "outer_max",
    "inner_max",
    "gs_sweeps",
    "tol",
    "clamp_each_iter",
    "clamp_output",
    "reweight_every",
    "patch_radius",
    "search_radius",
    "neighbors",
    "kernel_sigma",
    "h0",
    "noise",
    "sigma",
    "d",
    "seed",
    "blur",
    "threads",
    "scielab_threshold",
    "samples_per_degree",
];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses a real number, accepting fractions such as `30/255` and `inf`.
pub fn parse_real(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || usage(format!("'{s}' is not a number"));
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            n / d
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_nan() {
        return Err(bad());
    }
    Ok(v)
}

fn parse_count(s: &str) -> Result<usize, CliError> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("'{s}' is not a nonnegative integer")))
}

fn parse_bool(s: &str) -> Result<bool, CliError> {
    match s.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(usage(format!("'{other}' is not a boolean"))),
    }
}

pub fn parse_blur(s: &str) -> Result<Blur, CliError> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    match parts.as_slice() {
        ["none"] => Ok(Blur::None),
        ["gaussian", sigma] => Ok(Blur::Gaussian {
            sigma: parse_real(sigma)?,
            radius: None,
        }),
        ["gaussian", sigma, radius] => Ok(Blur::Gaussian {
            sigma: parse_real(sigma)?,
            radius: Some(parse_count(radius)?),
        }),
        ["motion", length, angle] => Ok(Blur::Motion {
            length: parse_count(length)?,
            angle: parse_real(angle)?,
        }),
        _ => Err(usage(format!(
            "blur '{s}' must be none, gaussian:SIGMA[:RADIUS] or motion:LENGTH:ANGLE"
        ))),
    }
}

impl RunConfig {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let s = &mut self.solver;
        let p = &mut self.patch;
        match key.trim() {
            "method" => {
                self.method = match value {
                    "svs" => Method::Svs,
                    "nltv" => Method::Nltv,
                    _ => return Err(usage(format!("method '{value}' must be svs or nltv"))),
                }
            }
            "fidelity" => {
                self.fidelity = match value {
                    "l2" => Fidelity::L2,
                    "l1" => Fidelity::L1,
                    _ => return Err(usage(format!("fidelity '{value}' must be l2 or l1"))),
                }
            }
            "alpha" => s.alpha = parse_real(value)?,
            "mu" => s.mu = parse_real(value)?,
            "lambda" => s.lambda = parse_real(value)?,
            "delta" => s.delta = parse_real(value)?,
            "beta" => s.beta = parse_real(value)?,
            "outer_max" => s.outer_max = parse_count(value)?,
            "inner_max" => s.inner_max = parse_count(value)?,
            "gs_sweeps" => s.gs_sweeps = parse_count(value)?,
            "tol" => s.tol = parse_real(value)?,
            "clamp_each_iter" => s.clamp_each_iter = parse_bool(value)?,
            "clamp_output" => s.clamp_output = parse_bool(value)?,
            "reweight_every" => self.reweight_every = parse_count(value)?,
            "patch_radius" => p.patch_radius = parse_count(value)?,
            "search_radius" => p.search_radius = parse_count(value)?,
            "neighbors" => p.neighbors = parse_count(value)?,
            "kernel_sigma" => p.kernel_sigma = parse_real(value)?,
            "h0" => {
                if value == "auto" {
                    self.h0_auto = true;
                } else {
                    p.h0 = parse_real(value)?;
                    self.h0_auto = false;
                }
            }
            "noise" => {
                self.noise = match value {
                    "none" => Noise::None,
                    "gaussian" => Noise::Gaussian,
                    "poisson" => Noise::Poisson,
                    _ => {
                        return Err(usage(format!(
                            "noise '{value}' must be none, gaussian or poisson"
                        )))
                    }
                }
            }
            "sigma" => self.sigma = parse_real(value)?,
            "d" => self.d = parse_real(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| usage(format!("seed '{value}' is not an unsigned integer")))?
            }
            "blur" => self.blur = parse_blur(value)?,
            "threads" => self.threads = parse_count(value)?,
            "scielab_threshold" => self.scielab_threshold = parse_real(value)?,
            "samples_per_degree" => self.samples_per_degree = parse_real(value)?,
            other => return Err(usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies the assignments of a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| usage(format!("line {}: {}", n + 1, e)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), CliError> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| usage(format!("override '{pair}' must be key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Graph filtering parameter: the noise level when known, else `patch.h0`.
    ///
    /// For Poisson noise of scale `d` the per-pixel standard deviation is
    /// `d sqrt(I)`; `mean_intensity` stands in for `I`.
    pub fn resolved_h0(&self, mean_intensity: f64) -> f64 {
        if !self.h0_auto {
            return self.patch.h0;
        }
        match self.noise {
            Noise::Gaussian if self.sigma > 0.0 => self.sigma,
            Noise::Poisson if self.d > 0.0 && mean_intensity > 0.0 => {
                self.d * mean_intensity.sqrt()
            }
            _ => PatchParams::default().h0,
        }
    }

    pub fn noise_spec(&self) -> Option<NoiseSpec> {
        match self.noise {
            Noise::None => None,
            Noise::Gaussian => Some(NoiseSpec::gaussian(self.sigma, self.seed)),
            Noise::Poisson => Some(NoiseSpec::poisson(self.d, self.seed)),
        }
    }

    pub fn solver_config(&self, patch: &PatchParams) -> SolverConfig {
        let mut cfg = self.solver.clone();
        cfg.reweight = (self.reweight_every > 0).then(|| Reweight {
            every: self.reweight_every,
            patch: patch.clone(),
        });
        cfg
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.solver_config(&self.patch).validate()?;
        self.patch.validate()?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(usage(format!(
                "sigma {} must be finite and nonnegative",
                self.sigma
            )));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(usage(format!(
                "d {} must be finite and nonnegative",
                self.d
            )));
        }
        if self.noise == Noise::Poisson && self.d == 0.0 {
            return Err(usage("poisson noise needs d > 0"));
        }
        if !(self.scielab_threshold >= 0.0) {
            return Err(usage("scielab_threshold must be nonnegative"));
        }
        if !(self.samples_per_degree >= 1.0 && self.samples_per_degree.is_finite()) {
            return Err(usage("samples_per_degree must be at least 1"));
        }
        self.blur.kernel()?;
        Ok(())
    }

    /// Resolved values in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.solver;
        let p = &self.patch;
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "method" => match self.method {
                        Method::Svs => "svs".into(),
                        Method::Nltv => "nltv".into(),
                    },
                    "fidelity" => match self.fidelity {
                        Fidelity::L2 => "l2".into(),
                        Fidelity::L1 => "l1".into(),
                    },
                    "alpha" => s.alpha.to_string(),
                    "mu" => s.mu.to_string(),
                    "lambda" => s.lambda.to_string(),
                    "delta" => s.delta.to_string(),
                    "beta" => s.beta.to_string(),
                    "outer_max" => s.outer_max.to_string(),
                    "inner_max" => s.inner_max.to_string(),
                    "gs_sweeps" => s.gs_sweeps.to_string(),
                    "tol" => s.tol.to_string(),
                    "clamp_each_iter" => s.clamp_each_iter.to_string(),
                    "clamp_output" => s.clamp_output.to_string(),
                    "reweight_every" => self.reweight_every.to_string(),
                    "patch_radius" => p.patch_radius.to_string(),
                    "search_radius" => p.search_radius.to_string(),
                    "neighbors" => p.neighbors.to_string(),
                    "kernel_sigma" => p.kernel_sigma.to_string(),
                    "h0" => {
                        if self.h0_auto {
                            "auto".into()
                        } else {
                            p.h0.to_string()
                        }
                    }
                    "noise" => match self.noise {
                        Noise::None => "none".into(),
                        Noise::Gaussian => "gaussian".into(),
                        Noise::Poisson => "poisson".into(),
                    },
                    "sigma" => self.sigma.to_string(),
                    "d" => self.d.to_string(),
                    "seed" => self.seed.to_string(),
                    "blur" => self.blur.to_string(),
                    "threads" => self.threads.to_string(),
                    "scielab_threshold" => self.scielab_threshold.to_string(),
                    "samples_per_degree" => self.samples_per_degree.to_string(),
                    _ => unreachable!("every key has an entry"),
                };
                (k, v)
            })
            .collect()
    }

    /// `# key = value` lines for CSV headers.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_specials() {
        assert_eq!(parse_real("30/255").unwrap(), 30.0 / 255.0);
        assert_eq!(parse_real(" 0.5 ").unwrap(), 0.5);
        assert_eq!(parse_real("inf").unwrap(), f64::INFINITY);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("abc").is_err());
        assert!(parse_real("nan").is_err());
    }

    #[test]
    fn blur_specs() {
        assert_eq!(parse_blur("none").unwrap(), Blur::None);
        assert_eq!(
            parse_blur("gaussian:1.5").unwrap(),
            Blur::Gaussian {
                sigma: 1.5,
                radius: None
            }
        );
        assert_eq!(
            parse_blur("motion:3:45").unwrap(),
            Blur::Motion {
                length: 3,
                angle: 45.0
            }
        );
        assert!(parse_blur("box:3").is_err());
        for s in ["none", "gaussian:1.5", "gaussian:2:4", "motion:3:45"] {
            assert_eq!(parse_blur(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\nalpha = 0.3  # trailing\n\nnoise = gaussian\nsigma = 30/255\nmethod=nltv\n",
        )
        .unwrap();
        assert_eq!(cfg.solver.alpha, 0.3);
        assert_eq!(cfg.method, Method::Nltv);
        assert_eq!(cfg.noise, Noise::Gaussian);
        assert_eq!(cfg.sigma, 30.0 / 255.0);
        cfg.apply_overrides(["alpha=0.7"]).unwrap();
        assert_eq!(cfg.solver.alpha, 0.7);
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("alpha 1").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides([
            "noise=poisson",
            "d=0.3",
            "sigma=0.1",
            "blur=motion:3:45",
            "h0=0.2",
            "tol=inf",
            "fidelity=l1",
        ])
        .unwrap();
        let text: String = cfg
            .echo()
            .lines()
            .map(|l| l.trim_start_matches("# ").to_string() + "\n")
            .collect();
        let mut again = RunConfig::default();
        again.apply_text(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(cfg.entries().len(), KEYS.len());
    }

    #[test]
    fn h0_resolution() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.resolved_h0(0.5), 0.1);
        cfg.apply_overrides(["noise=gaussian", "sigma=0.2", "d=0.3"])
            .unwrap();
        assert_eq!(cfg.resolved_h0(0.5), 0.2);
        cfg.set("noise", "poisson").unwrap();
        assert!((cfg.resolved_h0(0.25) - 0.15).abs() < 1e-15);
        cfg.set("h0", "0.05").unwrap();
        assert_eq!(cfg.resolved_h0(0.25), 0.05);
    }
}
