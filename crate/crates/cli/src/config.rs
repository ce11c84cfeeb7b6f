//! Run settings: built-in defaults, then a `key=value` file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use gacl_core::experiment::RunConfig;

pub fn parse_ratio(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("ratio must lie in [0, 1], got {v}"));
    }
    Ok(v)
}

pub fn parse_gamma(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("gamma must be finite and non-negative, got {v}"));
    }
    Ok(v)
}

pub fn parse_positive(s: &str) -> Result<usize, String> {
    let v: usize = s.trim().parse().map_err(|e| format!("{s:?} is not a count: {e}"))?;
    if v == 0 {
        return Err("value must be at least 1".into());
    }
    Ok(v)
}

pub fn parse_separation(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("separation must be finite and non-negative, got {v}"));
    }
    Ok(v)
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.trim()
        .parse()
        .map_err(|e| format!("{s:?} is not an unsigned integer: {e}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("{other:?} is not a boolean")),
    }
}

/// Every field optional, so layers can be merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub buffer_width: Option<usize>,
    pub num_tasks: Option<usize>,
    pub disjoint_ratio: Option<f64>,
    pub blurry_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub eval_interval: Option<usize>,
    pub eclg: Option<bool>,
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub input_dim: Option<usize>,
    pub separation: Option<f64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Parses a flat config file. Blank lines and `#` comments are skipped;
    /// keys use flag names with `-` or `_`.
    pub fn parse_file(text: &str) -> Result<Overrides, String> {
        let mut o = Overrides::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", n + 1))?;
            let value = value.trim();
            let err = |e: String| format!("line {}: {}: {e}", n + 1, key.trim());
            match key.trim().replace('-', "_").as_str() {
                "gamma" => o.gamma = Some(parse_gamma(value).map_err(err)?),
                "buffer_width" | "db" => o.buffer_width = Some(parse_positive(value).map_err(err)?),
                "k" | "tasks" | "num_tasks" => o.num_tasks = Some(parse_positive(value).map_err(err)?),
                "rd" | "disjoint_ratio" => o.disjoint_ratio = Some(parse_ratio(value).map_err(err)?),
                "rb" | "blurry_ratio" => o.blurry_ratio = Some(parse_ratio(value).map_err(err)?),
                "seed" => o.seed = Some(parse_u64(value).map_err(err)?),
                "eval_interval" => o.eval_interval = Some(parse_positive(value).map_err(err)?),
                "eclg" => o.eclg = Some(parse_bool(value).map_err(err)?),
                "classes" => o.classes = Some(parse_positive(value).map_err(err)?),
                "per_class" => o.per_class = Some(parse_positive(value).map_err(err)?),
                "input_dim" => o.input_dim = Some(parse_positive(value).map_err(err)?),
                "separation" => o.separation = Some(parse_separation(value).map_err(err)?),
                "data" => o.data = Some(PathBuf::from(value)),
                "out" => o.out = Some(PathBuf::from(value)),
                other => return Err(format!("line {}: unknown key {other:?}", n + 1)),
            }
        }
        Ok(o)
    }

    pub fn load(path: &Path) -> Result<Overrides, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse_file(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Fields set in `top` win.
    pub fn layer(self, top: Overrides) -> Overrides {
        Overrides {
            gamma: top.gamma.or(self.gamma),
            buffer_width: top.buffer_width.or(self.buffer_width),
            num_tasks: top.num_tasks.or(self.num_tasks),
            disjoint_ratio: top.disjoint_ratio.or(self.disjoint_ratio),
            blurry_ratio: top.blurry_ratio.or(self.blurry_ratio),
            seed: top.seed.or(self.seed),
            eval_interval: top.eval_interval.or(self.eval_interval),
            eclg: top.eclg.or(self.eclg),
            classes: top.classes.or(self.classes),
            per_class: top.per_class.or(self.per_class),
            input_dim: top.input_dim.or(self.input_dim),
            separation: top.separation.or(self.separation),
            data: top.data.or(self.data),
            out: top.out.or(self.out),
        }
    }

    pub fn apply(&self, base: RunConfig) -> RunConfig {
        RunConfig {
            gamma: self.gamma.unwrap_or(base.gamma),
            buffer_width: self.buffer_width.unwrap_or(base.buffer_width),
            num_tasks: self.num_tasks.unwrap_or(base.num_tasks),
            disjoint_ratio: self.disjoint_ratio.unwrap_or(base.disjoint_ratio),
            blurry_ratio: self.blurry_ratio.unwrap_or(base.blurry_ratio),
            seed: self.seed.unwrap_or(base.seed),
            eval_interval: self.eval_interval.unwrap_or(base.eval_interval),
            eclg: self.eclg.unwrap_or(base.eclg),
            classes: self.classes.unwrap_or(base.classes),
            per_class: self.per_class.unwrap_or(base.per_class),
            input_dim: self.input_dim.unwrap_or(base.input_dim),
            separation: self.separation.unwrap_or(base.separation),
        }
    }
}

/// Echo of a resolved config, same `key=value` style as the report.
pub fn config_text(c: &RunConfig) -> String {
    format!(
        "gamma={}\nbuffer_width={}\nnum_tasks={}\ndisjoint_ratio={}\nblurry_ratio={}\nseed={}\neval_interval={}\neclg={}\nclasses={}\nper_class={}\ninput_dim={}\nseparation={}\n",
        c.gamma,
        c.buffer_width,
        c.num_tasks,
        c.disjoint_ratio,
        c.blurry_ratio,
        c.seed,
        c.eval_interval,
        c.eclg,
        c.classes,
        c.per_class,
        c.input_dim,
        c.separation
    )
}
