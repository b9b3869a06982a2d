//! Run configuration: a flat INI file with one section per concern. Every
//! key has a default, unknown keys are rejected, and `emit` writes a file
//! that parses back to the same configuration.

use std::f64::consts::PI;
use std::path::PathBuf;

use arnold::highway::HighwayBranch;
use arnold::model::PendulumSign;
use ini::{Ini, WriteOption};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{}unknown section [{section}]", at(*.line))]
    UnknownSection { section: String, line: Option<usize> },
    #[error("{}unknown key `{key}` in [{section}]", at(*.line))]
    UnknownKey { section: String, key: String, line: Option<usize> },
    #[error("{}invalid value for `{key}` in [{section}]: {msg}", at(*.line))]
    Value { section: String, key: String, msg: String, line: Option<usize> },
    #[error("invalid [{section}] settings: {msg}")]
    Invalid { section: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

fn at(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// One config value, written so that `parse(emit(x)) == x`.
pub trait Field: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn emit(&self) -> String;
}

impl Field for f64 {
    fn parse(s: &str) -> Result<Self, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("`{s}` is not finite"))
        }
    }
    fn emit(&self) -> String {
        format!("{self:?}")
    }
}

impl Field for usize {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
    }
    fn emit(&self) -> String {
        self.to_string()
    }
}

impl Field for u64 {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
    }
    fn emit(&self) -> String {
        self.to_string()
    }
}

impl Field for i32 {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|_| format!("`{s}` is not an integer"))
    }
    fn emit(&self) -> String {
        self.to_string()
    }
}

impl Field for bool {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("`{s}` is not a boolean")),
        }
    }
    fn emit(&self) -> String {
        self.to_string()
    }
}

impl Field for PathBuf {
    fn parse(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            Err("empty path".into())
        } else {
            Ok(PathBuf::from(s.trim()))
        }
    }
    fn emit(&self) -> String {
        self.display().to_string()
    }
}

/// `auto` or a number.
impl Field for Option<f64> {
    fn parse(s: &str) -> Result<Self, String> {
        if s.trim() == "auto" {
            Ok(None)
        } else {
            f64::parse(s).map(Some)
        }
    }
    fn emit(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.emit())
    }
}

/// Comma-separated numbers.
impl Field for Vec<f64> {
    fn parse(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(f64::parse).collect()
    }
    fn emit(&self) -> String {
        self.iter().map(|v| v.emit()).collect::<Vec<_>>().join(", ")
    }
}

/// Points `x, y; x, y; ...`.
impl Field for Vec<[f64; 2]> {
    fn parse(s: &str) -> Result<Self, String> {
        s.split(';')
            .map(|p| {
                let v = Vec::<f64>::parse(p)?;
                <[f64; 2]>::try_from(v).map_err(|_| format!("`{}` is not a point `x, y`", p.trim()))
            })
            .collect()
    }
    fn emit(&self) -> String {
        self.iter().map(|p| format!("{}, {}", p[0].emit(), p[1].emit())).collect::<Vec<_>>().join("; ")
    }
}

impl Field for PendulumSign {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "plus" | "+1" | "1" => Ok(PendulumSign::Plus),
            "minus" | "-1" => Ok(PendulumSign::Minus),
            _ => Err(format!("`{s}` is not `plus` or `minus`")),
        }
    }
    fn emit(&self) -> String {
        match self {
            PendulumSign::Plus => "plus",
            PendulumSign::Minus => "minus",
        }
        .into()
    }
}

impl Field for HighwayBranch {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "lower" => Ok(HighwayBranch::Lower),
            "upper" => Ok(HighwayBranch::Upper),
            _ => Err(format!("`{s}` is not `lower` or `upper`")),
        }
    }
    fn emit(&self) -> String {
        match self {
            HighwayBranch::Lower => "lower",
            HighwayBranch::Upper => "upper",
        }
        .into()
    }
}

macro_rules! section {
    ($(#[$doc:meta])* $name:ident, $title:literal { $($field:ident : $ty:ty = $default:expr,)* }) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                $name { $($field: $default,)* }
            }
        }

        impl $name {
            pub const NAME: &'static str = $title;

            fn read(props: &ini::Properties, text: &str) -> Result<Self, ConfigError> {
                let mut out = Self::default();
                for (key, value) in props.iter() {
                    match key {
                        $(stringify!($field) => {
                            out.$field = Field::parse(value).map_err(|msg| ConfigError::Value {
                                section: $title.into(),
                                key: key.into(),
                                msg,
                                line: find_line(text, $title, key),
                            })?
                        })*
                        _ => {
                            return Err(ConfigError::UnknownKey {
                                section: $title.into(),
                                key: key.into(),
                                line: find_line(text, $title, key),
                            })
                        }
                    }
                }
                Ok(out)
            }

            fn write(&self, ini: &mut Ini) {
                let mut s = ini.with_section(Some($title));
                $(s.set(stringify!($field), self.$field.emit());)*
            }
        }
    };
}

const FIVE_QUARTER_PI: f64 = 1.25 * PI;

section!(
    /// Perturbation amplitudes, rotor frequencies, ε and the pendulum sign.
    ModelSection, "model" {
        a1: f64 = 0.3,
        a2: f64 = 0.1,
        a3: f64 = 1.0,
        omega1: f64 = 1.0,
        omega2: f64 = 1.0,
        eps: f64 = 1e-3,
        sign: PendulumSign = PendulumSign::Plus,
    }
);

section!(IntegratorSection, "integrator" {
    abs_tol: f64 = 1e-12,
    rel_tol: f64 = 1e-12,
    h_init: f64 = 1e-2,
    h_min: f64 = 1e-12,
    h_max: f64 = 10.0,
    max_steps: usize = 1_000_000,
});

section!(RunSection, "run" {
    out_dir: PathBuf = PathBuf::from("out"),
    seed: u64 = 0,
});

section!(CrestSection, "crest" {
    i1: f64 = 1.0,
    i2: f64 = 1.0,
    grid: usize = 128,
});

section!(TauSection, "tau" {
    i1: f64 = 1.0,
    i2: f64 = 1.0,
    theta1: f64 = FIVE_QUARTER_PI,
    theta2: f64 = FIVE_QUARTER_PI,
    branch: i32 = 0,
});

section!(
    /// Seeds sit at `(level_i1, level_i2)` with `θ₂` spread over
    /// `theta2_center ± theta2_halfwidth`; `θ₁` is solved to reach the level
    /// of the point `(level_*)`.
    PoincareSection, "poincare" {
        level_i1: f64 = 0.0,
        level_i2: f64 = 0.0,
        level_theta1: f64 = FIVE_QUARTER_PI,
        level_theta2: f64 = FIVE_QUARTER_PI,
        section: f64 = 0.0,
        seeds: usize = 20,
        theta2_center: f64 = FIVE_QUARTER_PI,
        theta2_halfwidth: f64 = 0.2,
        t_max: f64 = 500.0,
    }
);

section!(HighwaySection, "highway" {
    seeds: Vec<f64> = vec![-10.5, -10.0, -9.5, -9.0, -8.5, -6.5, -6.0, 6.0],
    start_i2: f64 = -7.0,
    stop_i1: f64 = 12.0,
    sections: Vec<f64> = vec![0.0, 7.0],
    branch: HighwayBranch = HighwayBranch::Upper,
    t_max: f64 = 1e9,
    h_max: f64 = 1e7,
    max_drift: f64 = 1e-7,
});

section!(
    /// `eps = auto` picks half the computed threshold.
    DiffuseSection, "diffuse" {
        waypoints: Vec<[f64; 2]> = vec![[1.0, 1.0], [3.0, 2.0]],
        delta: f64 = 0.1,
        stairstep: bool = true,
        theta1: f64 = 0.3,
        theta2: f64 = 2.0,
        eps: Option<f64> = Some(1e-3),
        calibration_radius: Option<f64> = None,
        calibration_points: usize = 6,
    }
);

section!(VerifySection, "verify" {
    i1: f64 = 1.0,
    i2: f64 = 1.0,
    theta1: f64 = FIVE_QUARTER_PI,
    theta2: f64 = FIVE_QUARTER_PI,
    eps: Vec<f64> = vec![1e-3, 5e-4, 1e-4],
    excursion: Option<f64> = None,
});

section!(TimeSection, "time" {
    omega_lo: f64 = 1.0,
    omega_hi: f64 = 7.0,
    seed_i1: f64 = -10.0,
    start_i2: f64 = -7.0,
    branch: HighwayBranch = HighwayBranch::Upper,
});

section!(CheckSection, "check" {
    samples: usize = 50,
});

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub integrator: IntegratorSection,
    pub run: RunSection,
    pub crest: CrestSection,
    pub tau: TauSection,
    pub poincare: PoincareSection,
    pub highway: HighwaySection,
    pub diffuse: DiffuseSection,
    pub verify: VerifySection,
    pub time: TimeSection,
    pub check: CheckSection,
}

/// Line (1-based) of `key` inside `[section]`, for diagnostics.
fn find_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section && line.split('=').next().map(str::trim) == Some(key) {
            return Some(n + 1);
        }
    }
    None
}

fn find_section_line(text: &str, section: &str) -> Option<usize> {
    text.lines()
        .position(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')).map(str::trim) == Some(section))
        .map(|n| n + 1)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line,
            msg: e.msg.to_string(),
        })?;
        let mut cfg = RunConfig::default();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey {
                        section: "<none>".into(),
                        key: key.into(),
                        line: None,
                    });
                }
                continue;
            };
            match name {
                ModelSection::NAME => cfg.model = ModelSection::read(props, text)?,
                IntegratorSection::NAME => cfg.integrator = IntegratorSection::read(props, text)?,
                RunSection::NAME => cfg.run = RunSection::read(props, text)?,
                CrestSection::NAME => cfg.crest = CrestSection::read(props, text)?,
                TauSection::NAME => cfg.tau = TauSection::read(props, text)?,
                PoincareSection::NAME => cfg.poincare = PoincareSection::read(props, text)?,
                HighwaySection::NAME => cfg.highway = HighwaySection::read(props, text)?,
                DiffuseSection::NAME => cfg.diffuse = DiffuseSection::read(props, text)?,
                VerifySection::NAME => cfg.verify = VerifySection::read(props, text)?,
                TimeSection::NAME => cfg.time = TimeSection::read(props, text)?,
                CheckSection::NAME => cfg.check = CheckSection::read(props, text)?,
                other => {
                    return Err(ConfigError::UnknownSection {
                        section: other.into(),
                        line: find_section_line(text, other),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Canonical text form; also the input of the config hash.
    pub fn emit(&self) -> String {
        let mut ini = Ini::new();
        self.model.write(&mut ini);
        self.integrator.write(&mut ini);
        self.run.write(&mut ini);
        self.crest.write(&mut ini);
        self.tau.write(&mut ini);
        self.poincare.write(&mut ini);
        self.highway.write(&mut ini);
        self.diffuse.write(&mut ini);
        self.verify.write(&mut ini);
        self.time.write(&mut ini);
        self.check.write(&mut ini);
        let mut buf = Vec::new();
        let opt = WriteOption {
            kv_separator: " = ",
            ..WriteOption::default()
        };
        ini.write_to_opt(&mut buf, opt).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::parse("[model]\na1 = 0.2\na2=0.3\n\n[diffuse]\nwaypoints = 1,1; 3,1\neps = auto\n").unwrap();
        assert_eq!(cfg.model.a1, 0.2);
        assert_eq!(cfg.model.a3, 1.0);
        assert_eq!(cfg.diffuse.waypoints, vec![[1.0, 1.0], [3.0, 1.0]]);
        assert_eq!(cfg.diffuse.eps, None);
    }

    #[test]
    fn diagnostics_name_the_key() {
        let err = RunConfig::parse("[model]\na1 = 0.2\nepsilon = 1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                section: "model".into(),
                key: "epsilon".into(),
                line: Some(3)
            }
        );
        let err = RunConfig::parse("[run]\nseed = 1\n[model]\n\neps = abc\n").unwrap_err();
        assert!(err.to_string().contains("line 5") && err.to_string().contains("`eps`"), "{err}");
        let err = RunConfig::parse("[models]\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: Some(1), .. }));
        assert!(RunConfig::parse("[model]\na1 = inf\n").is_err());
        assert!(RunConfig::parse("[diffuse]\nwaypoints = 1,2,3\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn emitted_config_parses_back(
            a in proptest::array::uniform3(-10.0..10.0f64),
            eps in 1e-9..1e-1f64,
            seed in proptest::num::u64::ANY,
            grid in 2usize..1000,
            branch in -3i32..3,
            seeds in proptest::collection::vec(-1e3..1e3f64, 0..6),
            waypoints in proptest::collection::vec(proptest::array::uniform2(-1e2..1e2f64), 1..5),
            auto in proptest::bool::ANY,
            stairstep in proptest::bool::ANY,
        ) {
            let mut cfg = RunConfig::default();
            cfg.model.a1 = a[0];
            cfg.model.a2 = a[1];
            cfg.model.a3 = a[2];
            cfg.model.eps = eps;
            cfg.model.sign = if stairstep { PendulumSign::Minus } else { PendulumSign::Plus };
            cfg.run.seed = seed;
            cfg.crest.grid = grid;
            cfg.tau.branch = branch;
            cfg.highway.seeds = seeds;
            cfg.highway.branch = if auto { HighwayBranch::Lower } else { HighwayBranch::Upper };
            cfg.diffuse.waypoints = waypoints;
            cfg.diffuse.eps = if auto { None } else { Some(eps) };
            cfg.diffuse.stairstep = stairstep;
            let text = cfg.emit();
            let back = RunConfig::parse(&text).unwrap();
            proptest::prop_assert_eq!(&back, &cfg);
            proptest::prop_assert_eq!(back.emit(), text);
        }
    }
}
