//! Run configuration: TOML with one table per command, plus dotted
//! `key=value` overrides.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::analysis::{ConvergenceConfig, EvalGrid, Reference};
use crate::drift::{DriftSpec, ProbeConfig};
use crate::duhamel::BridgeMode;
use crate::error::{Error, Result};
use crate::fokker_planck::TimeScheme;
use crate::gauss_sum::Summation;
use crate::initial::{GaussianComponent, InitialDensity, DEFAULT_ALPHA};
use crate::scheme::{DensityMode, RecordCadence, SchemeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scheme: SchemeSection,
    pub drift: DriftSection,
    pub initial: InitialSection,
    pub converge: ConvergeSection,
    pub fp: FpSection,
    pub duhamel: DuhamelSection,
    pub regularity: RegularitySection,
    pub assumptions: AssumptionsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            scheme: SchemeSection::default(),
            drift: DriftSection::default(),
            initial: InitialSection::default(),
            converge: ConvergeSection::default(),
            fp: FpSection::default(),
            duhamel: DuhamelSection::default(),
            regularity: RegularitySection::default(),
            assumptions: AssumptionsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub n: usize,
    pub horizon: f64,
    pub particles: usize,
    pub density_mode: DensityMode,
    pub summation: Summation,
    pub radius_multiplier: f64,
    pub weight_exponent: f64,
    pub record: RecordCadence,
    /// Skip the assumption check before simulating.
    pub unchecked: bool,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            n: 32,
            horizon: 1.0,
            particles: 100_000,
            density_mode: DensityMode::OneStepMixture,
            summation: Summation::Truncated,
            radius_multiplier: 8.0,
            weight_exponent: 1.0,
            record: RecordCadence::Dyadic,
            unchecked: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// zero, constant, burgers_clamp, mean_field_attraction, mixed, unsaturated_mean_field
    pub model: String,
    pub value: Vec<f64>,
    pub direction: Vec<f64>,
    pub cap: f64,
    pub weight: f64,
    /// Declared bound for `unsaturated_mean_field`.
    pub declared_bound: f64,
    pub order: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            model: "burgers_clamp".into(),
            value: vec![1.0],
            direction: vec![1.0],
            cap: 1.0,
            weight: 0.5,
            declared_bound: 1.0,
            order: 1.0,
        }
    }
}

impl DriftSection {
    pub fn build(&self) -> Result<DriftSpec> {
        let spec = match self.model.as_str() {
            "zero" => DriftSpec::zero(),
            "constant" => DriftSpec::constant(self.value.clone())?,
            "burgers_clamp" => DriftSpec::burgers_clamp(self.direction.clone(), self.cap)?,
            "mean_field_attraction" => DriftSpec::mean_field_attraction(self.cap)?,
            "mixed" => DriftSpec::mixed(self.weight, self.direction.clone(), self.cap)?,
            "unsaturated_mean_field" => DriftSpec::unsaturated_mean_field(self.declared_bound),
            other => return Err(Error::Config(format!("drift.model: unknown model `{other}`"))),
        };
        Ok(spec.with_order(self.order))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// gaussian, mixture, bump
    pub family: String,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub components: Vec<GaussianComponent>,
    pub dim: usize,
    pub radius: f64,
    pub exponent: f64,
    pub alpha: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            family: "gaussian".into(),
            mean: vec![0.0],
            sigma: 0.5,
            components: Vec::new(),
            dim: 1,
            radius: 1.0,
            exponent: 0.5,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl InitialSection {
    pub fn build(&self) -> Result<InitialDensity> {
        match self.family.as_str() {
            "gaussian" => InitialDensity::gaussian(self.mean.clone(), self.sigma)?.with_alpha(self.alpha),
            "mixture" => InitialDensity::mixture(self.components.clone())?.with_alpha(self.alpha),
            "bump" => InitialDensity::bump(self.dim, self.radius, self.exponent),
            other => Err(Error::Config(format!("initial.family: unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub ns: Vec<usize>,
    pub particles: usize,
    /// Number of replicate seeds; seed `i` is `seed + i`.
    pub seeds: usize,
    /// fp_oracle or finest_n
    pub reference: String,
    pub mesh: f64,
    pub cfl: f64,
    pub max_slope: f64,
    pub max_half_width: f64,
    pub require_monotone: bool,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            ns: vec![8, 16, 32, 64],
            particles: 200_000,
            seeds: 5,
            reference: "fp_oracle".into(),
            mesh: 1.0 / 400.0,
            cfl: 0.5,
            max_slope: -0.30,
            max_half_width: 0.1,
            require_monotone: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpSection {
    pub mesh: f64,
    pub cfl: f64,
    pub scheme: TimeScheme,
    /// Output times; empty means `T j / 8`.
    pub times: Vec<f64>,
    pub max_mass_error: f64,
}

impl Default for FpSection {
    fn default() -> Self {
        Self { mesh: 1.0 / 400.0, cfl: 0.5, scheme: TimeScheme::SemiImplicit, times: Vec::new(), max_mass_error: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelSection {
    pub time: f64,
    pub nodes: usize,
    pub bridge: BridgeMode,
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub max_ratio: f64,
    pub mass_tolerance: f64,
}

impl Default for DuhamelSection {
    fn default() -> Self {
        Self {
            time: 0.5,
            nodes: 64,
            bridge: BridgeMode::Conditional,
            grid_points: 201,
            grid_lo: -5.0,
            grid_hi: 6.0,
            max_ratio: 3.0,
            mass_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularitySection {
    pub ns: Vec<usize>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_cells: usize,
    pub wasserstein_order: f64,
    pub subsample: usize,
    pub tail_order: f64,
    pub tail_radii: Vec<f64>,
    pub min_w_slope: f64,
    pub max_w_slope: f64,
    pub max_spread: f64,
    pub max_tail_slope: f64,
}

impl Default for RegularitySection {
    fn default() -> Self {
        Self {
            ns: vec![16, 32, 64],
            grid_lo: -6.0,
            grid_hi: 7.0,
            grid_cells: 1300,
            wasserstein_order: 2.0,
            subsample: 600,
            tail_order: 1.0,
            tail_radii: vec![1.0, 1.5, 2.0, 3.0, 4.0],
            min_w_slope: 0.4,
            max_w_slope: 0.6,
            max_spread: 2.0,
            max_tail_slope: -0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionsSection {
    pub probes: usize,
    pub x_radius: f64,
    pub r_max: f64,
    pub measure_size: usize,
    pub shift: f64,
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Self { probes: p.count, x_radius: p.x_radius, r_max: p.r_max, measure_size: p.measure_size, shift: p.shift }
    }
}

/// Line (1-based) of `key` inside `[section]`, or of a top-level key.
fn key_line(text: &str, path: &[&str]) -> Option<usize> {
    let (section, key) = match path {
        [k] => ("", *k),
        [s, k, ..] => (*s, *k),
        [] => return None,
    };
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if let Some((k, _)) = l.split_once('=') {
            let k = k.trim().trim_matches('"');
            let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
            let want = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if full == want {
                return Some(i + 1);
            }
        }
    }
    None
}

/// Reports keys of `user` that the schema does not know.
fn unknown_keys(user: &Table, schema: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match schema.get(k) {
            None => out.push(path),
            Some(Value::Table(s)) => {
                if let Value::Table(u) = v {
                    unknown_keys(u, s, &path, out);
                }
            }
            Some(_) => {}
        }
    }
}

fn schema() -> Table {
    match Value::try_from(Config::default()).expect("default config serializes") {
        Value::Table(t) => t,
        _ => unreachable!(),
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    }
}

impl Config {
    /// Parses `text` and applies `overrides` (`section.key=value`, value in
    /// TOML syntax, bare words taken as strings).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let schema = schema();
        let mut unknown = Vec::new();
        unknown_keys(&table, &schema, "", &mut unknown);
        if let Some(path) = unknown.first() {
            let parts: Vec<&str> = path.split('.').collect();
            let at = key_line(text, &parts).map(|l| format!(" at line {l}")).unwrap_or_default();
            return Err(Error::Config(format!("unknown key `{path}`{at}")));
        }
        // typed errors with line context come from the spanned parse
        let _: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

        for ov in overrides {
            let (key, raw) =
                ov.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got `{ov}`")))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut node = &mut table;
            let mut sch = &schema;
            for (i, part) in parts.iter().enumerate() {
                let known = sch.get(*part).ok_or_else(|| Error::Config(format!("--set: unknown key `{}`", key.trim())))?;
                if i + 1 == parts.len() {
                    node.insert(part.to_string(), parse_value(raw.trim()));
                } else {
                    let Value::Table(next_sch) = known else {
                        return Err(Error::Config(format!("--set: `{}` is not a section", parts[..=i].join("."))));
                    };
                    sch = next_sch;
                    let entry = node.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
                    let Value::Table(next) = entry else {
                        return Err(Error::Config(format!("--set: `{}` is not a section", parts[..=i].join("."))));
                    };
                    node = next;
                }
            }
        }
        Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn scheme_config(&self, n: usize, seed: u64) -> Result<SchemeConfig> {
        let ic_dim = self.initial.build()?.dim();
        let mut c = SchemeConfig::new(n, self.scheme.horizon, self.scheme.particles, ic_dim, seed)?;
        c.density_mode = self.scheme.density_mode;
        c.summation = self.scheme.summation;
        c.radius_multiplier = self.scheme.radius_multiplier;
        c.weight_exponent = self.scheme.weight_exponent;
        c.record = self.scheme.record;
        Ok(c)
    }

    pub fn probe_config(&self, dim: usize) -> ProbeConfig {
        ProbeConfig {
            count: self.assumptions.probes,
            dim,
            horizon: self.scheme.horizon,
            x_radius: self.assumptions.x_radius,
            r_max: self.assumptions.r_max,
            measure_size: self.assumptions.measure_size,
            shift: self.assumptions.shift,
        }
    }

    pub fn convergence_config(&self, seed: u64) -> Result<ConvergenceConfig> {
        let c = &self.converge;
        let reference = match c.reference.as_str() {
            "fp_oracle" => Reference::FpOracle { mesh: c.mesh, cfl: c.cfl },
            "finest_n" => Reference::FinestN,
            other => return Err(Error::Config(format!("converge.reference: unknown reference `{other}`"))),
        };
        if c.seeds == 0 {
            return Err(Error::Config("converge.seeds must be positive".into()));
        }
        let mut cc = ConvergenceConfig::new(c.ns.clone(), c.particles, (0..c.seeds as u64).map(|i| seed + i).collect());
        cc.horizon = self.scheme.horizon;
        cc.weight_exponent = self.scheme.weight_exponent;
        cc.reference = reference;
        cc.summation = self.scheme.summation;
        cc.radius_multiplier = self.scheme.radius_multiplier;
        Ok(cc)
    }

    pub fn regularity_grid(&self, dim: usize) -> Result<EvalGrid> {
        let r = &self.regularity;
        EvalGrid::new(dim, r.grid_lo, r.grid_hi, r.grid_cells)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::parse("", &[]).unwrap();
        assert_eq!(c, Config::default());
        let c = Config::parse(
            "seed = 3\n[scheme]\nn = 16\n[drift]\nmodel = \"constant\"\nvalue = [2.0]\n",
            &["scheme.n=64".into(), "drift.model=zero".into(), "fp.times=[0.5, 1.0]".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.scheme.n, 64);
        assert_eq!(c.drift.model, "zero");
        assert_eq!(c.drift.value, vec![2.0]);
        assert_eq!(c.fp.times, vec![0.5, 1.0]);
        let back = Config::parse(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_reports_path_and_line() {
        let err = Config::parse("[scheme]\nn = 8\n\n[drift]\nmodle = \"zero\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("drift.modle"), "{err}");
        assert!(err.contains("line 5"), "{err}");
        let err = Config::parse("", &["scheme.steps=4".into()]).unwrap_err().to_string();
        assert!(err.contains("scheme.steps"), "{err}");
        let err = Config::parse("[nope]\n", &[]).unwrap_err().to_string();
        assert!(err.contains("`nope`"), "{err}");
    }

    #[test]
    fn type_errors_and_bad_models() {
        let err = Config::parse("[scheme]\nn = \"many\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let c = Config::parse("[drift]\nmodel = \"wobble\"\n", &[]).unwrap();
        assert!(matches!(c.drift.build(), Err(Error::Config(_))));
        let c = Config::parse("[initial]\nfamily = \"bump\"\nexponent = 0.7\n", &[]).unwrap();
        assert_eq!(c.initial.build().unwrap().alpha, 0.7);
    }
}
