//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{KgzError, Result};
use crate::grid::{make_grid, Grid};
use crate::kgz::{DataProfile, InitialData, ProfileKind};

/// Everything one run needs. Defaults are the reference desk run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub points_per_axis: usize,
    pub half_width: f64,
    pub profile: DataProfile,
    pub dt: f64,
    pub horizon: f64,
    pub snap_every: usize,
    pub energies: bool,
    pub xnorm: bool,
    pub inequalities: bool,
    pub scattering: bool,
    pub picard: bool,
    pub dumps: bool,
    pub delta: f64,
    pub kappa: f64,
    pub eta: f64,
    pub scatter_s: Vec<f64>,
    /// Scattering truncation; `None` means `0.8 (L - R)` clipped to the run.
    pub t_max: Option<f64>,
    pub fit_window: (f64, f64),
    /// Window for the source-norm and residual slopes.
    pub scatter_window: (f64, f64),
    pub output: PathBuf,
    pub seed: u64,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            points_per_axis: 256,
            half_width: 40.0,
            profile: DataProfile::gaussian(1e-2, 1.0),
            dt: 0.15,
            horizon: 30.0,
            snap_every: 2,
            energies: true,
            xnorm: false,
            inequalities: false,
            scattering: true,
            picard: false,
            dumps: true,
            delta: 0.1,
            kappa: 0.05,
            eta: 0.5,
            scatter_s: vec![1.0, 2.0],
            t_max: None,
            fit_window: (5.0, 28.0),
            scatter_window: (10.0, 28.0),
            output: PathBuf::from("kgz-out"),
            seed: 0,
            picard_max_iter: 20,
            picard_tol: 1e-10,
        }
    }
}

const KEYS: &[&str] = &[
    "points_per_axis",
    "L",
    "profile",
    "amplitude",
    "width",
    "center",
    "ring_radius",
    "dt",
    "T",
    "snap_every",
    "energies",
    "xnorm",
    "inequalities",
    "scattering",
    "picard",
    "dumps",
    "delta",
    "kappa",
    "eta",
    "scatter_s",
    "t_max",
    "fit_window",
    "scatter_window",
    "output",
    "seed",
    "picard_max_iter",
    "picard_tol",
];

fn cfg_err(line: usize, msg: impl std::fmt::Display) -> KgzError {
    KgzError::Config(format!("line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(line, format!("`{key}` expects a number, got `{v}`")))
}

fn list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| num(line, key, p.trim())).collect()
}

fn pair(line: usize, key: &str, v: &str) -> Result<(f64, f64)> {
    match list(line, key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(cfg_err(line, format!("`{key}` expects two comma-separated numbers"))),
    }
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(line, format!("`{key}` expects true or false, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        let mut ring_radius = None;
        let mut profile_name = String::from("gaussian");
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(ln, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(cfg_err(ln, format!("unknown key `{k}`")));
            }
            if seen.contains(&k) {
                return Err(cfg_err(ln, format!("duplicate key `{k}`")));
            }
            seen.push(k);
            match k {
                "points_per_axis" => c.points_per_axis = num(ln, k, v)?,
                "L" => c.half_width = num(ln, k, v)?,
                "profile" => profile_name = v.to_string(),
                "amplitude" => c.profile.amplitude = num(ln, k, v)?,
                "width" => c.profile.width = num(ln, k, v)?,
                "center" => c.profile.center = pair(ln, k, v)?,
                "ring_radius" => ring_radius = Some(num(ln, k, v)?),
                "dt" => c.dt = num(ln, k, v)?,
                "T" => c.horizon = num(ln, k, v)?,
                "snap_every" => c.snap_every = num(ln, k, v)?,
                "energies" => c.energies = flag(ln, k, v)?,
                "xnorm" => c.xnorm = flag(ln, k, v)?,
                "inequalities" => c.inequalities = flag(ln, k, v)?,
                "scattering" => c.scattering = flag(ln, k, v)?,
                "picard" => c.picard = flag(ln, k, v)?,
                "dumps" => c.dumps = flag(ln, k, v)?,
                "delta" => c.delta = num(ln, k, v)?,
                "kappa" => c.kappa = num(ln, k, v)?,
                "eta" => c.eta = num(ln, k, v)?,
                "scatter_s" => c.scatter_s = list(ln, k, v)?,
                "t_max" => c.t_max = Some(num(ln, k, v)?),
                "fit_window" => c.fit_window = pair(ln, k, v)?,
                "scatter_window" => c.scatter_window = pair(ln, k, v)?,
                "output" => c.output = PathBuf::from(v),
                "seed" => c.seed = num(ln, k, v)?,
                "picard_max_iter" => c.picard_max_iter = num(ln, k, v)?,
                "picard_tol" => c.picard_tol = num(ln, k, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        c.profile.kind = match (profile_name.as_str(), ring_radius) {
            ("gaussian", None) => ProfileKind::Gaussian,
            ("gaussian", Some(_)) => return Err(KgzError::Config("`ring_radius` needs `profile = ring`".into())),
            ("ring", Some(radius)) => ProfileKind::Ring { radius },
            ("ring", None) => return Err(KgzError::Config("`profile = ring` needs `ring_radius`".into())),
            (other, _) => return Err(KgzError::Config(format!("unknown profile `{other}`"))),
        };
        c.validate_fields()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KgzError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    fn validate_fields(&self) -> Result<()> {
        let bad = |m: String| Err(KgzError::Config(m));
        if self.points_per_axis < 8 || self.points_per_axis % 2 != 0 {
            return bad(format!("points_per_axis must be even and >= 8, got {}", self.points_per_axis));
        }
        if !(self.half_width > 0.0) {
            return bad(format!("L must be positive, got {}", self.half_width));
        }
        if !(self.profile.amplitude >= 0.0) {
            return bad(format!("amplitude must be >= 0, got {}", self.profile.amplitude));
        }
        if !(self.profile.width > 0.0) {
            return bad(format!("width must be positive, got {}", self.profile.width));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad("dt and T must be positive".into());
        }
        if self.snap_every == 0 {
            return bad("snap_every must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.kappa >= 0.0) || !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("kappa must be >= 0 and eta must lie in (0, 1]".into());
        }
        if self.scatter_s.is_empty() || self.scatter_s.iter().any(|s| ![1.0, 2.0].contains(s)) {
            return bad(format!("scatter_s entries must be 1 or 2, got {:?}", self.scatter_s));
        }
        for (name, (t1, t2)) in [("fit_window", self.fit_window), ("scatter_window", self.scatter_window)] {
            if !(t1 > 0.0) || t2 < 2.0 * t1 {
                return bad(format!("{name} [{t1}, {t2}] must span at least one octave"));
            }
        }
        if self.picard_max_iter < 2 || !(self.picard_tol > 0.0) {
            return bad("picard_max_iter must be >= 2 and picard_tol > 0".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        make_grid(self.points_per_axis, self.half_width).map_err(|e| KgzError::Config(e.to_string()))
    }

    /// Initial data, checking the wrap-free window `T + R < L`.
    pub fn initial_data(&self) -> Result<InitialData> {
        let data = InitialData::from_profile(&self.grid()?, &self.profile)?;
        let r = data.support_radius();
        if self.horizon + r >= self.half_width {
            return Err(KgzError::Config(format!(
                "T + R = {} + {r:.3} must stay below L = {}",
                self.horizon, self.half_width
            )));
        }
        Ok(data)
    }

    /// Canonical text form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.profile;
        let _ = writeln!(s, "points_per_axis = {}", self.points_per_axis);
        let _ = writeln!(s, "L = {}", self.half_width);
        match p.kind {
            ProfileKind::Gaussian => {
                let _ = writeln!(s, "profile = gaussian");
            }
            ProfileKind::Ring { radius } => {
                let _ = writeln!(s, "profile = ring\nring_radius = {radius}");
            }
        }
        let _ = writeln!(s, "amplitude = {}\nwidth = {}", p.amplitude, p.width);
        let _ = writeln!(s, "center = {}, {}", p.center.0, p.center.1);
        let _ = writeln!(s, "dt = {}\nT = {}\nsnap_every = {}", self.dt, self.horizon, self.snap_every);
        for (k, v) in [
            ("energies", self.energies),
            ("xnorm", self.xnorm),
            ("inequalities", self.inequalities),
            ("scattering", self.scattering),
            ("picard", self.picard),
            ("dumps", self.dumps),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "delta = {}\nkappa = {}\neta = {}", self.delta, self.kappa, self.eta);
        let sl: Vec<String> = self.scatter_s.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "scatter_s = {}", sl.join(", "));
        if let Some(t) = self.t_max {
            let _ = writeln!(s, "t_max = {t}");
        }
        let _ = writeln!(s, "fit_window = {}, {}", self.fit_window.0, self.fit_window.1);
        let _ = writeln!(s, "scatter_window = {}, {}", self.scatter_window.0, self.scatter_window.1);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "picard_max_iter = {}\npicard_tol = {}", self.picard_max_iter, self.picard_tol);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let c = RunConfig::parse(
            "# small run\npoints_per_axis = 64\nL = 12  # box\n\namplitude = 1e-3\nprofile = ring\nring_radius = 3\nscatter_s = 1\nfit_window = 2, 5\n",
        )
        .unwrap();
        assert_eq!(c.points_per_axis, 64);
        assert_eq!(c.half_width, 12.0);
        assert_eq!(c.profile.kind, ProfileKind::Ring { radius: 3.0 });
        assert_eq!(c.scatter_s, vec![1.0]);
        assert_eq!(c.fit_window, (2.0, 5.0));
        assert_eq!(c.dt, 0.15);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        for text in [
            "grid = 5",
            "dt = 0.1\ndt = 0.2",
            "dt 0.1",
            "dt = fast",
            "profile = square",
            "profile = ring",
            "amplitude = -1",
            "scatter_s = 3",
            "fit_window = 5, 6",
            "points_per_axis = 63",
            "xnorm = maybe",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(KgzError::Config(_))), "{text}");
        }
    }

    #[test]
    fn text_form_round_trips() {
        let mut c = RunConfig::default();
        c.t_max = Some(20.0);
        c.profile.center = (1.5, -0.25);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn window_violation_is_a_config_error() {
        let c = RunConfig::parse("points_per_axis = 64\nL = 10\nT = 5").unwrap();
        assert!(matches!(c.initial_data(), Err(KgzError::Config(_))));
    }
}
