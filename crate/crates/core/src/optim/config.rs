use std::fmt::Write as _;

use crate::loss::LossWeights;
use crate::optim::OptimError;

/// Everything that controls a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,

    pub lr_position: f64,
    pub lr_position_final: f64,
    pub lr_time: f64,
    pub lr_time_final: f64,
    pub lr_scale: f64,
    pub lr_rotor: f64,
    pub lr_sh_dc: f64,
    pub lr_sh_rest: f64,
    pub lr_opacity: f64,
    /// Multiply spatial position rates by the scene extent.
    pub position_lr_scaled: bool,

    pub densify_grad_threshold: f64,
    pub densify_from: usize,
    pub densify_until: usize,
    pub densify_interval: usize,
    pub opacity_reset_interval: usize,
    pub prune_opacity: f64,
    /// Gaussians no larger than this fraction of the scene extent are cloned,
    /// larger ones split.
    pub clone_scale_fraction: f64,
    pub split_factor: f64,
    /// 3D scales above this fraction of the scene extent are pruned.
    pub max_scale_fraction: f64,
    pub min_gaussians: usize,
    pub max_gaussians: usize,

    pub loss: LossWeights,
    pub knn_interval: usize,
    /// Steps between spherical-harmonic degree increments (0 = all at once).
    pub sh_degree_interval: usize,

    pub background: [f64; 3],
    pub static_mode: bool,

    pub init_count: usize,
    /// `[xmin, ymin, zmin, xmax, ymax, zmax]` for uniform initialization.
    pub init_box: [f64; 6],
    pub init_temporal_scale: f64,
    pub init_opacity: f64,
    /// Temporal scale used for every Gaussian in static mode.
    pub static_temporal_scale: f64,

    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch: 3,
            seed: 0,
            lr_position: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_time: 1.6e-4,
            lr_time_final: 1.6e-6,
            lr_scale: 5e-3,
            lr_rotor: 1e-3,
            lr_sh_dc: 2.5e-3,
            lr_sh_rest: 2.5e-3 / 20.0,
            lr_opacity: 0.05,
            position_lr_scaled: true,
            densify_grad_threshold: 2e-4,
            densify_from: 500,
            densify_until: 15_000,
            densify_interval: 100,
            opacity_reset_interval: 3000,
            prune_opacity: 0.005,
            clone_scale_fraction: 0.01,
            split_factor: 1.6,
            max_scale_fraction: 0.5,
            min_gaussians: 16,
            max_gaussians: 200_000,
            loss: LossWeights::default(),
            knn_interval: 100,
            sh_degree_interval: 1000,
            background: [0.0; 3],
            static_mode: false,
            init_count: 10_000,
            init_box: [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0],
            init_temporal_scale: 0.1414,
            init_opacity: 0.1,
            static_temporal_scale: 1e6,
            log_interval: 100,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, OptimError> {
    v.parse().map_err(|_| OptimError::BadValue { key: key.into(), value: v.into() })
}

fn parse_usize(key: &str, v: &str) -> Result<usize, OptimError> {
    v.parse().map_err(|_| OptimError::BadValue { key: key.into(), value: v.into() })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, OptimError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(OptimError::BadValue { key: key.into(), value: v.into() }),
    }
}

fn parse_array<const N: usize>(key: &str, v: &str) -> Result<[f64; N], OptimError> {
    let parts: Vec<&str> = v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    if parts.len() != N {
        return Err(OptimError::BadValue { key: key.into(), value: v.into() });
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p)?;
    }
    Ok(out)
}

impl TrainConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), OptimError> {
        let v = value.trim();
        match key.trim() {
            "steps" => self.steps = parse_usize(key, v)?,
            "batch" => self.batch = parse_usize(key, v)?,
            "seed" => self.seed = parse_usize(key, v)? as u64,
            "lr_position" => self.lr_position = parse_f64(key, v)?,
            "lr_position_final" => self.lr_position_final = parse_f64(key, v)?,
            "lr_time" => self.lr_time = parse_f64(key, v)?,
            "lr_time_final" => self.lr_time_final = parse_f64(key, v)?,
            "lr_scale" => self.lr_scale = parse_f64(key, v)?,
            "lr_rotor" => self.lr_rotor = parse_f64(key, v)?,
            "lr_sh_dc" => self.lr_sh_dc = parse_f64(key, v)?,
            "lr_sh_rest" => self.lr_sh_rest = parse_f64(key, v)?,
            "lr_opacity" => self.lr_opacity = parse_f64(key, v)?,
            "position_lr_scaled" => self.position_lr_scaled = parse_bool(key, v)?,
            "densify_grad_threshold" => self.densify_grad_threshold = parse_f64(key, v)?,
            "densify_from" => self.densify_from = parse_usize(key, v)?,
            "densify_until" => self.densify_until = parse_usize(key, v)?,
            "densify_interval" => self.densify_interval = parse_usize(key, v)?,
            "opacity_reset_interval" => self.opacity_reset_interval = parse_usize(key, v)?,
            "prune_opacity" => self.prune_opacity = parse_f64(key, v)?,
            "clone_scale_fraction" => self.clone_scale_fraction = parse_f64(key, v)?,
            "split_factor" => self.split_factor = parse_f64(key, v)?,
            "max_scale_fraction" => self.max_scale_fraction = parse_f64(key, v)?,
            "min_gaussians" => self.min_gaussians = parse_usize(key, v)?,
            "max_gaussians" => self.max_gaussians = parse_usize(key, v)?,
            "lambda_ssim" => self.loss.ssim = parse_f64(key, v)?,
            "lambda_entropy" => self.loss.entropy = parse_f64(key, v)?,
            "lambda_consistency" => self.loss.consistency = parse_f64(key, v)?,
            "knn_k" => self.loss.k = parse_usize(key, v)?,
            "knn_interval" => self.knn_interval = parse_usize(key, v)?,
            "sh_degree_interval" => self.sh_degree_interval = parse_usize(key, v)?,
            "background" => self.background = parse_array(key, v)?,
            "static_mode" => self.static_mode = parse_bool(key, v)?,
            "init_count" => self.init_count = parse_usize(key, v)?,
            "init_box" => self.init_box = parse_array(key, v)?,
            "init_temporal_scale" => self.init_temporal_scale = parse_f64(key, v)?,
            "init_opacity" => self.init_opacity = parse_f64(key, v)?,
            "static_temporal_scale" => self.static_temporal_scale = parse_f64(key, v)?,
            "log_interval" => self.log_interval = parse_usize(key, v)?,
            other => return Err(OptimError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Parses flat `key = value` text on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_kv_str(text: &str) -> Result<Self, OptimError> {
        let mut cfg = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| OptimError::Syntax { line: n + 1, text: line.into() })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config back into the text format.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let b = self.init_box;
        let bg = self.background;
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "lr_position = {:e}", self.lr_position);
        let _ = writeln!(s, "lr_position_final = {:e}", self.lr_position_final);
        let _ = writeln!(s, "lr_time = {:e}", self.lr_time);
        let _ = writeln!(s, "lr_time_final = {:e}", self.lr_time_final);
        let _ = writeln!(s, "lr_scale = {:e}", self.lr_scale);
        let _ = writeln!(s, "lr_rotor = {:e}", self.lr_rotor);
        let _ = writeln!(s, "lr_sh_dc = {:e}", self.lr_sh_dc);
        let _ = writeln!(s, "lr_sh_rest = {:e}", self.lr_sh_rest);
        let _ = writeln!(s, "lr_opacity = {:e}", self.lr_opacity);
        let _ = writeln!(s, "position_lr_scaled = {}", self.position_lr_scaled);
        let _ = writeln!(s, "densify_grad_threshold = {:e}", self.densify_grad_threshold);
        let _ = writeln!(s, "densify_from = {}", self.densify_from);
        let _ = writeln!(s, "densify_until = {}", self.densify_until);
        let _ = writeln!(s, "densify_interval = {}", self.densify_interval);
        let _ = writeln!(s, "opacity_reset_interval = {}", self.opacity_reset_interval);
        let _ = writeln!(s, "prune_opacity = {}", self.prune_opacity);
        let _ = writeln!(s, "clone_scale_fraction = {}", self.clone_scale_fraction);
        let _ = writeln!(s, "split_factor = {}", self.split_factor);
        let _ = writeln!(s, "max_scale_fraction = {}", self.max_scale_fraction);
        let _ = writeln!(s, "min_gaussians = {}", self.min_gaussians);
        let _ = writeln!(s, "max_gaussians = {}", self.max_gaussians);
        let _ = writeln!(s, "lambda_ssim = {}", self.loss.ssim);
        let _ = writeln!(s, "lambda_entropy = {}", self.loss.entropy);
        let _ = writeln!(s, "lambda_consistency = {}", self.loss.consistency);
        let _ = writeln!(s, "knn_k = {}", self.loss.k);
        let _ = writeln!(s, "knn_interval = {}", self.knn_interval);
        let _ = writeln!(s, "sh_degree_interval = {}", self.sh_degree_interval);
        let _ = writeln!(s, "background = {} {} {}", bg[0], bg[1], bg[2]);
        let _ = writeln!(s, "static_mode = {}", self.static_mode);
        let _ = writeln!(s, "init_count = {}", self.init_count);
        let _ = writeln!(s, "init_box = {} {} {} {} {} {}", b[0], b[1], b[2], b[3], b[4], b[5]);
        let _ = writeln!(s, "init_temporal_scale = {}", self.init_temporal_scale);
        let _ = writeln!(s, "init_opacity = {}", self.init_opacity);
        let _ = writeln!(s, "static_temporal_scale = {:e}", self.static_temporal_scale);
        let _ = writeln!(s, "log_interval = {}", self.log_interval);
        s
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let rates = [
            self.lr_position,
            self.lr_position_final,
            self.lr_time,
            self.lr_time_final,
            self.lr_scale,
            self.lr_rotor,
            self.lr_sh_dc,
            self.lr_sh_rest,
            self.lr_opacity,
        ];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(OptimError::InvalidConfig("learning rates must be positive".into()));
        }
        if self.batch == 0 {
            return Err(OptimError::InvalidConfig("batch must be at least 1".into()));
        }
        if self.densify_interval == 0 || self.knn_interval == 0 || self.opacity_reset_interval == 0 {
            return Err(OptimError::InvalidConfig("intervals must be positive".into()));
        }
        if self.min_gaussians > self.max_gaussians {
            return Err(OptimError::InvalidConfig("min_gaussians exceeds max_gaussians".into()));
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return Err(OptimError::InvalidConfig("init_opacity must be in (0, 1)".into()));
        }
        self.loss.validate().map_err(|e| OptimError::InvalidConfig(e.to_string()))
    }
}
