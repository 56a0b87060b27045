//! Experiment configuration documents.
//!
//! One JSON document per run. Unknown keys are rejected at every level, and a
//! resolved config (flags merged, defaults filled) serializes back to a
//! document that resolves to itself.

use std::path::Path;

use serde::{Deserialize, Serialize};
use urnlab::kernels::{ChainSpec, Variant};
use urnlab::perms::{MeasureDoc, PermutationMeasure};
use urnlab::statespace::{CentreSpec, Configuration, Margins};

use crate::error::{CliError, CliResult};

/// A measure given by name or as an explicit weighted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Named(NamedMeasure),
    Doc(MeasureDoc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMeasure {
    /// Dirac mass on `(1 2 … d)`.
    Cyclic,
    /// Uniform on transpositions.
    Transpositions,
    /// Dirac mass on `(1 2)`; needs `d = 2`.
    Swap,
    Identity,
}

impl MeasureSpec {
    pub fn resolve(&self, d: usize) -> CliResult<PermutationMeasure> {
        match self {
            MeasureSpec::Doc(doc) => Ok(PermutationMeasure::from_doc(doc)?),
            MeasureSpec::Named(name) => {
                if d < 2 {
                    return Err(CliError::Config(format!("measures need d ≥ 2, got {d}")));
                }
                Ok(match name {
                    NamedMeasure::Cyclic => PermutationMeasure::cyclic(d),
                    NamedMeasure::Transpositions => PermutationMeasure::transpositions(d),
                    NamedMeasure::Identity => PermutationMeasure::identity(d),
                    NamedMeasure::Swap if d == 2 => PermutationMeasure::swap(),
                    NamedMeasure::Swap => return Err(CliError::Config("the swap measure needs d = 2".into())),
                })
            }
        }
    }
}

/// Chain document. Balanced-family variants use urn size `n` and ignore `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDoc {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
}

fn default_variant() -> Variant {
    Variant::Generalised
}

impl SpecDoc {
    pub fn measure(&self) -> CliResult<PermutationMeasure> {
        match (&self.measure, self.variant) {
            (_, Variant::MeanField) => Ok(PermutationMeasure::transpositions(self.d)),
            (Some(m), _) => m.resolve(self.d),
            (None, _) => Err(CliError::Config("spec.measure is required for this variant".into())),
        }
    }

    pub fn margins_for(&self, n: usize) -> CliResult<Margins> {
        let balanced = matches!(
            self.variant,
            Variant::Balanced | Variant::Labeled | Variant::Shuffle | Variant::RestrictedShuffle
        );
        let margins = if balanced {
            Margins::balanced(self.d, n)?
        } else {
            let m = self
                .m
                .ok_or_else(|| CliError::Config(format!("spec.m is required for the {:?} variant", self.variant)))?;
            Margins::generalised(self.d, m, n)?
        };
        Ok(margins)
    }

    pub fn chain_for(&self, n: usize) -> CliResult<ChainSpec> {
        Ok(ChainSpec::new(self.margins_for(n)?, self.measure()?, self.variant)?)
    }

    pub fn chain(&self) -> CliResult<ChainSpec> {
        let n = self.n.ok_or_else(|| CliError::Config("spec.n is required".into()))?;
        self.chain_for(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Restrict,
    Induce,
    Collapse,
    Modify,
    Reverse,
    Reversibilize,
}

/// Starting configuration: the northwest-corner fill or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartDoc {
    Named(StartKind),
    Rows(Vec<Vec<u32>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Adversarial,
}

impl StartDoc {
    pub fn resolve(&self, margins: &Margins) -> CliResult<Configuration> {
        let x = match self {
            StartDoc::Named(StartKind::Adversarial) => urnlab::montecarlo::adversarial_start(margins)?,
            StartDoc::Rows(rows) => Configuration::from_rows(rows)?,
        };
        x.check_margins(margins)?;
        Ok(x)
    }
}

/// Explicit canonical path for one source edge, as 0-based state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDoc {
    pub from: usize,
    pub to: usize,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkDoc {
    /// Number of sites `N`.
    pub sites: usize,
    pub alpha: f64,
    pub eps: f64,
}

macro_rules! optional_fields {
    ($(#[$meta:meta])* pub struct $name:ident { $($(#[$fmeta:meta])* pub $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

optional_fields! {
    /// Every key is optional at parse time; each command checks what it needs.
    #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ExperimentConfig {
        pub spec: SpecDoc,
        /// Second chain for `compare`: the target whose Dirichlet form bounds the source.
        pub target: SpecDoc,
        pub eps: Vec<f64>,
        pub times: Vec<f64>,
        pub grid: GridDoc,
        pub ns: Vec<usize>,
        pub transform: TransformKind,
        pub set: CentreSpec,
        pub delta: Vec<f64>,
        pub paths: Vec<PathDoc>,
        pub centre: CentreSpec,
        pub start: StartDoc,
        pub window: [f64; 2],
        pub t: f64,
        pub replicates: usize,
        pub seed: u64,
        pub budget: u64,
        pub cap: usize,
        pub work_cap: u64,
        pub tol: f64,
        pub walk: WalkDoc,
        pub steps: usize,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn spec(&self) -> CliResult<&SpecDoc> {
        self.spec.as_ref().ok_or_else(|| CliError::Config("config needs a spec".into()))
    }

    pub fn require<'a, T>(field: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        field.as_ref().ok_or_else(|| CliError::Config(format!("config needs `{name}` for this command")))
    }

    /// Rejects nonpositive caps and budgets wherever they appear.
    pub fn validate(&self) -> CliResult<()> {
        if self.cap == Some(0) || self.work_cap == Some(0) || self.budget == Some(0) {
            return Err(CliError::Config("caps and budgets must be positive".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(CliError::Config(format!("tol must lie in (0, 1), got {tol}")));
            }
        }
        Ok(())
    }
}
