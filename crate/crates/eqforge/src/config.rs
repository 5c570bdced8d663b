//! Flat `key = value` run configuration with defaults, validation, and a
//! canonical echo used as the comment header of every output file.

use crate::cocycle::PotentialSpec;
use crate::error::{EqError, Result};
use crate::systems::{SystemSpec, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemChoice {
    Cat,
    Katok,
}

/// Resolved run configuration. Defaults:
///
/// | key              | default     | meaning                                          |
/// |------------------|-------------|--------------------------------------------------|
/// | system           | cat         | `cat` linear automorphism, `katok` slowdown      |
/// | matrix           | 2,1,1,1     | integer matrix a,b,c,d                           |
/// | katok_r0         | 0.1         | slowdown disk radius                             |
/// | katok_alpha      | 0.5         | slowdown exponent                                |
/// | ode_step         | 0.001       | integrator step for the slowdown flow            |
/// | potential        | zero        | zero, constant:<c>, tgeo:<t>, trig:<k1,k2,a>[;…] |
/// | x0               | 0.5,0.5     | leaf base point                                  |
/// | delta            | 0.3         | leaf radius                                      |
/// | n_max            | 25          | deepest iterate                                  |
/// | max_spacing      | 0.000025    | seed sample spacing along the leaf               |
/// | refine_tol       | 0.02        | pushforward sag tolerance                        |
/// | back_steps       | 0           | direction cocycle depth; 0 picks the system default |
/// | kmax             | 4           | Fourier dictionary radius                        |
/// | epsilon          | 0.05        | Bowen-metric scale                               |
/// | mesh             | 0.02        | covering grid cell size                          |
/// | grid_n           | 200         | Ulam grid side                                   |
/// | samples_per_cell | 64          | stratified samples per Ulam cell                 |
/// | iters            | 500         | power-iteration cap                              |
/// | tol              | 1e-9        | spectral residual target                         |
/// | seed             | 7           | RNG stream for sampled condition checks          |
/// | out              | out         | output directory                                 |
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemChoice,
    pub matrix: [i64; 4],
    pub katok_r0: f64,
    pub katok_alpha: f64,
    pub ode_step: f64,
    pub potential: PotentialSpec,
    pub x0: (f64, f64),
    pub delta: f64,
    pub n_max: usize,
    pub max_spacing: f64,
    pub refine_tol: f64,
    pub back_steps: usize,
    pub kmax: i64,
    pub epsilon: f64,
    pub mesh: f64,
    pub grid_n: usize,
    pub samples_per_cell: usize,
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: String,
    /// The potential exactly as configured, for the echo header.
    potential_text: String,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            system: SystemChoice::Cat,
            matrix: [2, 1, 1, 1],
            katok_r0: 0.1,
            katok_alpha: 0.5,
            ode_step: 0.001,
            potential: PotentialSpec::Zero,
            x0: (0.5, 0.5),
            delta: 0.3,
            n_max: 25,
            max_spacing: 0.000025,
            refine_tol: 0.02,
            back_steps: 0,
            kmax: 4,
            epsilon: 0.05,
            mesh: 0.02,
            grid_n: 200,
            samples_per_cell: 64,
            iters: 500,
            tol: 1e-9,
            seed: 7,
            out: "out".to_string(),
            potential_text: "zero".to_string(),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> EqError {
    EqError::ParseError {
        line,
        msg: msg.into(),
    }
}

fn float(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("{key}: expected a number, got '{v}'")))
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("{key}: expected an integer, got '{v}'")))
}

fn parse_potential(line: usize, v: &str) -> Result<PotentialSpec> {
    let v = v.trim();
    if v == "zero" {
        return Ok(PotentialSpec::Zero);
    }
    if let Some(c) = v.strip_prefix("constant:") {
        return Ok(PotentialSpec::Constant(float(line, "potential", c)?));
    }
    if let Some(t) = v.strip_prefix("tgeo:") {
        return Ok(PotentialSpec::TGeometric(float(line, "potential", t)?));
    }
    if let Some(terms) = v.strip_prefix("trig:") {
        let mut coeffs = Vec::new();
        for term in terms.split(';') {
            let parts: Vec<&str> = term.split(',').collect();
            if parts.len() != 3 {
                return Err(parse_err(
                    line,
                    format!("potential: trig term '{term}' is not k1,k2,amp"),
                ));
            }
            let k1: i64 = integer(line, "potential", parts[0])?;
            let k2: i64 = integer(line, "potential", parts[1])?;
            let amp = float(line, "potential", parts[2])?;
            coeffs.push(((k1, k2), amp));
        }
        return Ok(PotentialSpec::TrigPoly(coeffs));
    }
    Err(parse_err(
        line,
        format!("potential: unknown form '{v}' (want zero, constant:<c>, tgeo:<t>, trig:<k1,k2,amp>[;...])"),
    ))
}

fn parse_pair(line: usize, key: &str, v: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(parse_err(line, format!("{key}: expected 'x,y', got '{v}'")));
    }
    Ok((float(line, key, parts[0])?, float(line, key, parts[1])?))
}

fn parse_matrix(line: usize, v: &str) -> Result<[i64; 4]> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 4 {
        return Err(parse_err(
            line,
            format!("matrix: expected 'a,b,c,d', got '{v}'"),
        ));
    }
    Ok([
        integer(line, "matrix", parts[0])?,
        integer(line, "matrix", parts[1])?,
        integer(line, "matrix", parts[2])?,
        integer(line, "matrix", parts[3])?,
    ])
}

/// Parse a flat `key = value` configuration. Blank lines and `#` comments
/// are ignored; unknown keys are hard errors; the resolved configuration is
/// validated field by field and against the system constructor.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = match content.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => {
                return Err(parse_err(
                    line,
                    format!("expected 'key = value', got '{content}'"),
                ))
            }
        };
        if value.is_empty() {
            return Err(parse_err(line, format!("{key}: empty value")));
        }
        match key {
            "system" => {
                cfg.system = match value {
                    "cat" => SystemChoice::Cat,
                    "katok" => SystemChoice::Katok,
                    other => {
                        return Err(parse_err(
                            line,
                            format!("system: expected cat or katok, got '{other}'"),
                        ))
                    }
                }
            }
            "matrix" => cfg.matrix = parse_matrix(line, value)?,
            "katok_r0" => cfg.katok_r0 = float(line, key, value)?,
            "katok_alpha" => cfg.katok_alpha = float(line, key, value)?,
            "ode_step" => cfg.ode_step = float(line, key, value)?,
            "potential" => {
                cfg.potential = parse_potential(line, value)?;
                cfg.potential_text = value.to_string();
            }
            "x0" => cfg.x0 = parse_pair(line, key, value)?,
            "delta" => cfg.delta = float(line, key, value)?,
            "n_max" => cfg.n_max = integer(line, key, value)?,
            "max_spacing" => cfg.max_spacing = float(line, key, value)?,
            "refine_tol" => cfg.refine_tol = float(line, key, value)?,
            "back_steps" => cfg.back_steps = integer(line, key, value)?,
            "kmax" => cfg.kmax = integer(line, key, value)?,
            "epsilon" => cfg.epsilon = float(line, key, value)?,
            "mesh" => cfg.mesh = float(line, key, value)?,
            "grid_n" => cfg.grid_n = integer(line, key, value)?,
            "samples_per_cell" => cfg.samples_per_cell = integer(line, key, value)?,
            "iters" => cfg.iters = integer(line, key, value)?,
            "tol" => cfg.tol = float(line, key, value)?,
            "seed" => cfg.seed = integer(line, key, value)?,
            "out" => cfg.out = value.to_string(),
            other => {
                return Err(EqError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |ok: bool, msg: String| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(EqError::RangeError(msg))
            }
        };
        range(
            self.delta > 0.0 && self.delta < 0.5,
            format!("delta = {} outside (0, 0.5)", self.delta),
        )?;
        range(
            self.max_spacing > 0.0 && self.max_spacing <= self.delta / 10.0,
            format!(
                "max_spacing = {} outside (0, delta/10 = {}]",
                self.max_spacing,
                self.delta / 10.0
            ),
        )?;
        range(
            self.refine_tol > 0.0,
            format!("refine_tol = {} must be positive", self.refine_tol),
        )?;
        range(self.n_max >= 1, "n_max must be >= 1".to_string())?;
        range(self.kmax >= 1, format!("kmax = {} must be >= 1", self.kmax))?;
        range(
            self.epsilon > 0.0,
            format!("epsilon = {} must be positive", self.epsilon),
        )?;
        range(
            self.mesh > 0.0 && self.mesh < 0.1,
            format!("mesh = {} outside (0, 0.1)", self.mesh),
        )?;
        range(
            (2..=2000).contains(&self.grid_n),
            format!("grid_n = {} outside [2, 2000]", self.grid_n),
        )?;
        range(
            self.samples_per_cell >= 1,
            "samples_per_cell must be >= 1".to_string(),
        )?;
        range(self.iters >= 1, "iters must be >= 1".to_string())?;
        range(
            self.tol > 0.0,
            format!("tol = {} must be positive", self.tol),
        )?;
        if self.system == SystemChoice::Katok {
            range(
                self.katok_r0 > 0.0 && self.katok_r0 <= 0.2,
                format!("katok_r0 = {} outside (0, 0.2]", self.katok_r0),
            )?;
            range(
                self.katok_alpha > 0.0 && self.katok_alpha < 1.0,
                format!("katok_alpha = {} outside (0, 1)", self.katok_alpha),
            )?;
            range(
                self.ode_step > 0.0 && self.ode_step <= 0.1,
                format!("ode_step = {} outside (0, 0.1]", self.ode_step),
            )?;
        }
        // The constructor carries the hyperbolicity checks.
        self.build_system().map(|_| ())
    }

    /// Construct the configured dynamical system.
    pub fn build_system(&self) -> Result<SystemSpec> {
        let [a, b, c, d] = self.matrix;
        match self.system {
            SystemChoice::Cat => SystemSpec::linear_anosov(a, b, c, d),
            SystemChoice::Katok => {
                SystemSpec::katok(a, b, c, d, self.katok_r0, self.katok_alpha, self.ode_step)
            }
        }
    }

    pub fn base_point(&self) -> TorusPoint {
        TorusPoint::new(self.x0.0, self.x0.1)
    }

    /// The canonical echo: one comment line per key, fixed order, shortest
    /// round-trip number formatting.
    pub fn echo_lines(&self) -> Vec<String> {
        let system = match self.system {
            SystemChoice::Cat => "cat",
            SystemChoice::Katok => "katok",
        };
        vec![
            format!("# system = {system}"),
            format!(
                "# matrix = {},{},{},{}",
                self.matrix[0], self.matrix[1], self.matrix[2], self.matrix[3]
            ),
            format!("# katok_r0 = {}", self.katok_r0),
            format!("# katok_alpha = {}", self.katok_alpha),
            format!("# ode_step = {}", self.ode_step),
            format!("# potential = {}", self.potential_text),
            format!("# x0 = {},{}", self.x0.0, self.x0.1),
            format!("# delta = {}", self.delta),
            format!("# n_max = {}", self.n_max),
            format!("# max_spacing = {}", self.max_spacing),
            format!("# refine_tol = {}", self.refine_tol),
            format!("# back_steps = {}", self.back_steps),
            format!("# kmax = {}", self.kmax),
            format!("# epsilon = {}", self.epsilon),
            format!("# mesh = {}", self.mesh),
            format!("# grid_n = {}", self.grid_n),
            format!("# samples_per_cell = {}", self.samples_per_cell),
            format!("# iters = {}", self.iters),
            format!("# tol = {}", self.tol),
            format!("# seed = {}", self.seed),
            format!("# out = {}", self.out),
        ]
    }
}
