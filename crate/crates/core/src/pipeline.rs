//! The assembled model: V1 → PCA whitening → V2, forward and backward.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Patch;
use crate::error::{Error, Result};
use crate::frontend::{self, GaborBank, GaborConfig, PhaseRecord, V1Complex};
use crate::ica::{fit_ica, IcaFilters, IcaTrainConfig};
use crate::sc::{self, Dictionary, InferConfig, ScTrainConfig, TrainLog};
use crate::whitening::{fit_pca, PcaModel};

/// The two published geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridConfig {
    /// Stride 4: 6×6 cells, 100 components, 800 V2 units.
    #[serde(rename = "6x6")]
    G6,
    /// Stride 2: 11×11 cells, 350 components, 2800 V2 units.
    #[serde(rename = "11x11")]
    G11,
}

impl GridConfig {
    pub fn stride(self) -> usize {
        match self {
            GridConfig::G6 => 4,
            GridConfig::G11 => 2,
        }
    }

    pub fn pca_components(self) -> usize {
        match self {
            GridConfig::G6 => 100,
            GridConfig::G11 => 350,
        }
    }

    /// Eight times overcomplete.
    pub fn v2_units(self) -> usize {
        8 * self.pca_components()
    }

    pub fn gabor(self) -> GaborConfig {
        GaborConfig::with_stride(self.stride())
    }

    pub fn tag(self) -> &'static str {
        match self {
            GridConfig::G6 => "6x6",
            GridConfig::G11 => "11x11",
        }
    }
}

impl std::str::FromStr for GridConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6x6" => Ok(GridConfig::G6),
            "11x11" => Ok(GridConfig::G11),
            other => Err(Error::InvalidInput(format!("unknown grid '{other}', expected 6x6 or 11x11"))),
        }
    }
}

/// The learned V2 stage.
#[derive(Debug, Clone, PartialEq)]
pub enum V2Stage {
    Sc {
        dict: Dictionary,
        lambda: f64,
        infer: InferConfig,
    },
    Ica(IcaFilters),
}

impl V2Stage {
    pub fn input_dim(&self) -> usize {
        match self {
            V2Stage::Sc { dict, .. } => dict.input_dim(),
            V2Stage::Ica(f) => f.input_dim(),
        }
    }

    pub fn units(&self) -> usize {
        match self {
            V2Stage::Sc { dict, .. } => dict.atoms(),
            V2Stage::Ica(f) => f.units(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            V2Stage::Sc { .. } => "sc",
            V2Stage::Ica(_) => "ica",
        }
    }

    /// Responses for whitened inputs in the rows of `y`.
    pub fn respond_rows(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            V2Stage::Sc { dict, lambda, infer } => sc::infer_rows(dict, y, *lambda, infer),
            V2Stage::Ica(f) => {
                if y.ncols() != f.input_dim() {
                    return Err(Error::dims(f.input_dim(), y.ncols(), "ICA input"));
                }
                Ok(y.dot(&f.w().t()).mapv(|v| v.max(0.0)))
            }
        }
    }

    pub fn respond(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            V2Stage::Sc { dict, lambda, infer } => Ok(sc::infer(dict, y, *lambda, infer)?.a),
            V2Stage::Ica(f) => f.respond(y),
        }
    }

    /// Whitened-space reconstruction from responses.
    pub fn backward(&self, r: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            V2Stage::Sc { dict, .. } => dict.reconstruct(r),
            V2Stage::Ica(f) => f.backward(r),
        }
    }
}

/// An assembled, immutable model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPipeline {
    bank: GaborBank,
    pca: PcaModel,
    v2: V2Stage,
}

/// Output of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub responses: Array1<f64>,
    pub phases: PhaseRecord,
}

/// Reconstructions of one patch at each stage, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Image,
    V1,
    V1cMod,
    Pca,
    V2,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Image, Stage::V1, Stage::V1cMod, Stage::Pca, Stage::V2];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Image => "Image",
            Stage::V1 => "V1",
            Stage::V1cMod => "V1C Mod",
            Stage::Pca => "PCA",
            Stage::V2 => "V2",
        }
    }
}

/// Result of the deletion-and-reconstruction protocol for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub original: Patch,
    /// One image per entry of [`Stage::ALL`].
    pub stages: Vec<(Stage, Patch)>,
    /// Mean squared error of the final image against the original patch.
    pub mse: f64,
    /// Mean squared error of the final image against the corrupted
    /// V1-complex reconstruction.
    pub mse_to_corrupted: f64,
    pub region: ((usize, usize), usize),
}

impl CompletionResult {
    pub fn stage(&self, stage: Stage) -> &Patch {
        &self.stages.iter().find(|(s, _)| *s == stage).expect("all stages present").1
    }
}

pub fn mse(a: &Patch, b: &Patch) -> f64 {
    let d = &a.data - &b.data;
    d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
}

impl ModelPipeline {
    /// Assemble stages, rejecting dimension mismatches between them.
    pub fn new(bank: GaborBank, pca: PcaModel, v2: V2Stage) -> Result<Self> {
        if pca.input_dim() != bank.complex_len() {
            return Err(Error::dims(bank.complex_len(), pca.input_dim(), "PCA input vs V1 complex length"));
        }
        if v2.input_dim() != pca.k() {
            return Err(Error::dims(pca.k(), v2.input_dim(), "V2 input vs PCA components"));
        }
        Ok(ModelPipeline { bank, pca, v2 })
    }

    pub fn bank(&self) -> &GaborBank {
        &self.bank
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn v2(&self) -> &V2Stage {
        &self.v2
    }

    pub fn units(&self) -> usize {
        self.v2.units()
    }

    /// V1 complex energies and phases of a patch.
    pub fn complex(&self, patch: &Patch) -> (V1Complex, PhaseRecord) {
        frontend::v1_complex(&self.bank.simple(patch))
    }

    pub fn flatten(&self, complex: &V1Complex) -> Array1<f64> {
        complex.iter().copied().collect()
    }

    pub fn unflatten(&self, v: Array1<f64>) -> Result<V1Complex> {
        if v.len() != self.bank.complex_len() {
            return Err(Error::dims(self.bank.complex_len(), v.len(), "complex vector"));
        }
        Ok(Array4::from_shape_vec(self.bank.complex_shape(), v.to_vec()).expect("length checked"))
    }

    /// Patch → V2 responses, keeping the quadrature phases.
    pub fn forward(&self, patch: &Patch) -> Result<Forward> {
        let (complex, phases) = self.complex(patch);
        let y = self.pca.whiten(self.flatten(&complex).view())?;
        Ok(Forward {
            responses: self.v2.respond(y.view())?,
            phases,
        })
    }

    /// V2 responses for many patches (`n × units`).
    pub fn encode(&self, patches: &[Patch]) -> Result<Array2<f64>> {
        let d = self.bank.complex_len();
        let rows: Vec<Array1<f64>> = patches
            .par_iter()
            .map(|p| self.flatten(&self.complex(p).0))
            .collect();
        let mut x = Array2::zeros((patches.len(), d));
        for (mut r, v) in x.rows_mut().into_iter().zip(rows) {
            r.assign(&v);
        }
        let y = self.pca.whiten_rows(x.view())?;
        self.v2.respond_rows(y.view())
    }

    /// Complex energies implied by V2 responses.
    pub fn complex_from_responses(&self, responses: ArrayView1<f64>) -> Result<V1Complex> {
        let y = self.v2.backward(responses)?;
        self.unflatten(self.pca.unwhiten(y.view())?)
    }

    /// Image rendering of complex energies under recorded phases.
    pub fn image_from_complex(&self, complex: &V1Complex, phases: &PhaseRecord) -> Result<Patch> {
        let simple = frontend::v1_complex_inverse(complex, phases)?;
        self.bank.simple_inverse(&simple)
    }

    /// V2 responses → image, through the saved phases.
    pub fn backward(&self, responses: ArrayView1<f64>, phases: &PhaseRecord) -> Result<Patch> {
        if responses.len() != self.v2.units() {
            return Err(Error::dims(self.v2.units(), responses.len(), "V2 responses"));
        }
        let complex = self.complex_from_responses(responses)?;
        self.image_from_complex(&complex, phases)
    }

    /// Delete a `size`×`size` block of complex cells at `origin`, then run
    /// the rest of the model forward and everything back to image space.
    /// Phases come from the intact forward pass.
    pub fn complete_patch(&self, patch: &Patch, origin: (usize, usize), size: usize) -> Result<CompletionResult> {
        let simple = self.bank.simple(patch);
        let (complex, phases) = frontend::v1_complex(&simple);
        let modified = frontend::delete_region(&complex, origin, size)?;

        let v1 = self.bank.simple_inverse(&simple)?;
        let v1c_mod = self.image_from_complex(&modified, &phases)?;

        let y = self.pca.whiten(self.flatten(&modified).view())?;
        let pca_complex = self.unflatten(self.pca.unwhiten(y.view())?)?;
        let pca_img = self.image_from_complex(&pca_complex, &phases)?;

        let responses = self.v2.respond(y.view())?;
        let v2_img = self.backward(responses.view(), &phases)?;

        let original = Patch::raw(patch.data.clone())?;
        let err = mse(&v2_img, &original);
        let err_corrupted = mse(&v2_img, &v1c_mod);
        Ok(CompletionResult {
            original: original.clone(),
            stages: vec![
                (Stage::Image, original),
                (Stage::V1, v1),
                (Stage::V1cMod, v1c_mod),
                (Stage::Pca, pca_img),
                (Stage::V2, v2_img),
            ],
            mse: err,
            mse_to_corrupted: err_corrupted,
            region: (origin, size),
        })
    }

    /// Complex-cell pattern of V2 unit `index`: its basis vector (or mixing
    /// column) mapped through the linear part of the inverse whitening.
    pub fn backproject_unit(&self, index: usize) -> Result<V1Complex> {
        let m = self.v2.units();
        if index >= m {
            return Err(Error::InvalidInput(format!("unit {index} out of range 0..{m}")));
        }
        let mut e = Array1::zeros(m);
        e[index] = 1.0;
        self.backproject_code(e.view())
    }

    /// Linear backprojection of an arbitrary response vector.
    pub fn backproject_code(&self, code: ArrayView1<f64>) -> Result<V1Complex> {
        let y = self.v2.backward(code)?;
        self.unflatten(self.pca.unwhiten_linear(y.view())?)
    }
}

/// Run the deletion protocol on every patch with a centered region.
pub fn run_completion(pipeline: &ModelPipeline, patches: &[Patch], size: usize) -> Result<Vec<CompletionResult>> {
    let origin = frontend::centered_origin(pipeline.bank().grid(), size);
    patches.par_iter().map(|p| pipeline.complete_patch(p, origin, size)).collect()
}

/// Which learned stage sits on top of the whitened V1 energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum V2Kind {
    Sc,
    Ica,
}

impl std::str::FromStr for V2Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc" => Ok(V2Kind::Sc),
            "ica" => Ok(V2Kind::Ica),
            other => Err(Error::InvalidInput(format!("unknown V2 stage '{other}', expected sc or ica"))),
        }
    }
}

/// Everything needed to train a pipeline from patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub grid: GridConfig,
    pub kind: V2Kind,
    pub components: usize,
    pub units: usize,
    pub sc: ScTrainConfig,
    pub ica: IcaTrainConfig,
    pub infer: InferConfig,
}

impl ModelSpec {
    /// Published sizes for `grid`; `lambda` only matters for sparse coding.
    pub fn new(grid: GridConfig, kind: V2Kind, lambda: f64, seed: u64) -> Self {
        ModelSpec {
            grid,
            kind,
            components: grid.pca_components(),
            units: grid.v2_units(),
            sc: ScTrainConfig {
                lambda,
                seed,
                ..ScTrainConfig::default()
            },
            ica: IcaTrainConfig {
                m: grid.v2_units(),
                seed,
                ..IcaTrainConfig::default()
            },
            infer: InferConfig::default(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.sc.lambda
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.sc.epochs = epochs;
        self.ica.epochs = epochs;
        self
    }

    /// Short label such as `sc-0.5` or `ica`.
    pub fn label(&self) -> String {
        match self.kind {
            V2Kind::Sc => format!("sc-{}", self.sc.lambda),
            V2Kind::Ica => "ica".into(),
        }
    }
}

/// Flattened V1 complex energies of each patch (`n × d`).
pub fn v1_matrix(bank: &GaborBank, patches: &[Patch]) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = patches
        .par_iter()
        .map(|p| frontend::v1_complex(&bank.simple(p)).0.into_iter().collect())
        .collect();
    let mut x = Array2::zeros((patches.len(), bank.complex_len()));
    for (mut r, v) in x.rows_mut().into_iter().zip(rows) {
        r.assign(&Array1::from(v));
    }
    x
}

/// The V1 and whitening stages, shared by models trained on the same data.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub bank: GaborBank,
    pub pca: PcaModel,
    /// Whitened training vectors (`n × k`).
    pub data: Array2<f64>,
}

pub fn fit_whitening(patches: &[Patch], grid: GridConfig, components: usize) -> Result<Whitened> {
    let bank = GaborBank::new(grid.gabor())?;
    let x = v1_matrix(&bank, patches);
    let pca = fit_pca(x.view(), components)?;
    let data = pca.whiten_rows(x.view())?;
    Ok(Whitened { bank, pca, data })
}

/// Train the V2 stage of `spec` on top of fitted whitening.
pub fn fit_v2(base: &Whitened, spec: &ModelSpec) -> Result<(ModelPipeline, TrainLog)> {
    if spec.components != base.pca.k() {
        return Err(Error::dims(base.pca.k(), spec.components, "spec components vs fitted PCA"));
    }
    let (v2, log) = match spec.kind {
        V2Kind::Sc => {
            let (dict, log) = sc::learn_dictionary(base.data.view(), spec.units, &spec.sc)?;
            (
                V2Stage::Sc {
                    dict,
                    lambda: spec.sc.lambda,
                    infer: spec.infer,
                },
                log,
            )
        }
        V2Kind::Ica => {
            let cfg = IcaTrainConfig {
                m: spec.units,
                ..spec.ica.clone()
            };
            let (f, log) = fit_ica(base.data.view(), &cfg)?;
            (V2Stage::Ica(f), log)
        }
    };
    Ok((ModelPipeline::new(base.bank.clone(), base.pca.clone(), v2)?, log))
}

/// Fit PCA and then the V2 stage on `patches`.
pub fn fit_pipeline(patches: &[Patch], spec: &ModelSpec) -> Result<(ModelPipeline, TrainLog)> {
    if spec.units <= spec.components {
        return Err(Error::InvalidInput(format!(
            "V2 must be overcomplete: {} units for {} components",
            spec.units, spec.components
        )));
    }
    let base = fit_whitening(patches, spec.grid, spec.components)?;
    fit_v2(&base, spec)
}
