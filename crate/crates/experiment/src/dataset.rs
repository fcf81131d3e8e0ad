//! Portico datasets: sampled materials, VEM reference solutions and the
//! nodal records used for training and evaluation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vembeam_core::{
    assemble_and_solve, build_portico, FrameModel, GlobalSolution, LoadSpec, MaterialParams, Mesh, VemError,
};
use vembeam_surrogate::TrainingSet;

use crate::config::{check_schema, DatasetConfig, LogRange, MeshDescriptor, SCHEMA_VERSION};
use crate::error::{ExperimentError, Result};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Draws per sample before generation gives up on a configuration.
const MAX_ATTEMPTS: usize = 64;
/// Largest accepted `||K u - f|| / ||f||` of a reference solve.
const RESIDUAL_LIMIT: f64 = 1e-6;

/// Derivatives along one incident element, taken at the node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberDerivative {
    pub member: usize,
    pub element: usize,
    /// Member direction `(cos, sin)`.
    pub direction: [f64; 2],
    /// `du/ds` (axial strain).
    pub d_axial: f64,
    /// `dw/ds` (local slope).
    pub d_transverse: f64,
    /// `d theta/ds` (curvature).
    pub d_rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub sample_id: usize,
    pub material: MaterialParams,
    pub node_id: usize,
    pub x: f64,
    pub y: f64,
    /// `(ux, uy, theta)` in global axes.
    pub displacement: [f64; 3],
    /// `jacobian[o] = (d/dx, d/dy)` of output `o`.
    pub jacobian: [[f64; 2]; 3],
    pub member_derivatives: Vec<MemberDerivative>,
    pub mesh: MeshDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub config: DatasetConfig,
    pub mesh: MeshDescriptor,
    pub nodes_per_sample: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// Material draws rejected because the solve failed.
    pub rejected_draws: usize,
    pub max_relative_residual: f64,
    /// Settings that are project defaults rather than measured values.
    pub assumed_defaults: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub material: MaterialParams,
    pub solution: GlobalSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

pub fn portico(config: &DatasetConfig, material: MaterialParams) -> Result<FrameModel> {
    Ok(build_portico(
        config.beam_length,
        config.elems_per_edge,
        config.order,
        material,
        &LoadSpec::uniform(config.beam_load),
    )?)
}

fn log_uniform(rng: &mut ChaCha8Rng, range: &LogRange) -> f64 {
    if range.max == range.min {
        return range.min;
    }
    rng.random_range(range.min.ln()..range.max.ln()).exp()
}

/// Material of sample `id`, drawn from its own stream so samples do not
/// depend on each other; `attempt` skips rejected draws.
fn draw_material(config: &DatasetConfig, seed: u64, id: usize, attempt: usize) -> Result<MaterialParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    let mut m = None;
    for _ in 0..=attempt {
        let e = log_uniform(&mut rng, &config.elastic_modulus);
        let a = log_uniform(&mut rng, &config.area);
        let i = log_uniform(&mut rng, &config.inertia_moment);
        m = Some(MaterialParams::new(e, i, a)?);
    }
    Ok(m.expect("at least one draw"))
}

/// Solves one portico and checks the residual of the reference solve.
pub fn solve_sample(config: &DatasetConfig, material: MaterialParams) -> Result<(Mesh, GlobalSolution)> {
    let model = portico(config, material)?;
    let mesh = model.discretize()?;
    let solution = assemble_and_solve(&model)?;
    Ok((mesh, solution))
}

fn relative_residual(sol: &GlobalSolution) -> f64 {
    if sol.load_norm > 0.0 {
        sol.residual_norm / sol.load_norm
    } else {
        sol.residual_norm
    }
}

pub fn generate(config: &DatasetConfig, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    config.validate()?;
    if n_train == 0 {
        return Err(ExperimentError::Usage("n_train must be at least 1".into()));
    }
    let total = n_train + n_test;
    let mut ids: Vec<usize> = (0..total).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut split_rng);
    let mut train_ids = ids[..n_train].to_vec();
    let mut test_ids = ids[n_train..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    let mut rejected = 0;
    let mut max_residual: f64 = 0.0;
    let mut samples = BTreeMap::new();
    let mut mesh = None;
    for id in 0..total {
        let mut attempt = 0;
        let (m, sol) = loop {
            let material = draw_material(config, seed, id, attempt)?;
            match solve_sample(config, material) {
                Ok((m, sol)) if relative_residual(&sol) <= RESIDUAL_LIMIT => {
                    break (
                        m,
                        Sample {
                            id,
                            material,
                            solution: sol,
                        },
                    )
                }
                Ok(_) | Err(ExperimentError::Solver(VemError::Mechanism(_))) => {}
                Err(e) => return Err(e),
            }
            rejected += 1;
            attempt += 1;
            if attempt == MAX_ATTEMPTS {
                return Err(ExperimentError::Numeric(format!(
                    "sample {id}: no solvable material draw in {MAX_ATTEMPTS} attempts"
                )));
            }
        };
        max_residual = max_residual.max(relative_residual(&sol.solution));
        mesh.get_or_insert(m);
        samples.insert(id, sol);
    }
    let mesh = mesh.expect("at least one sample");
    let records = |ids: &[usize]| -> Vec<DatasetRecord> {
        ids.iter()
            .flat_map(|id| node_records(config, &mesh, &samples[id]))
            .collect()
    };
    let (train, test) = (records(&train_ids), records(&test_ids));
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed,
        n_train,
        n_test,
        config: config.clone(),
        mesh: config.mesh(),
        nodes_per_sample: mesh.node_count(),
        train_ids,
        test_ids,
        rejected_draws: rejected,
        max_relative_residual: max_residual,
        assumed_defaults: vec![
            "beam_load: uniform load magnitude and position are project defaults".into(),
            "elastic_modulus, area, inertia_moment: sampling ranges are project defaults".into(),
        ],
    };
    Ok(Dataset { manifest, train, test })
}

/// Nodal records of one solved sample, in node order.
pub fn node_records(config: &DatasetConfig, mesh: &Mesh, sample: &Sample) -> Vec<DatasetRecord> {
    let mut incident: Vec<Vec<(usize, bool)>> = vec![Vec::new(); mesh.node_count()];
    for (e, el) in mesh.elements.iter().enumerate() {
        incident[el.start].push((e, false));
        incident[el.end].push((e, true));
    }
    mesh.nodes
        .iter()
        .enumerate()
        .map(|(id, node)| {
            let derivs: Vec<MemberDerivative> = incident[id]
                .iter()
                .map(|&(e, at_end)| {
                    let el = &mesh.elements[e];
                    let sol = &sample.solution.elements[e];
                    let x = if at_end { el.spec.length } else { 0.0 };
                    MemberDerivative {
                        member: el.member,
                        element: e,
                        direction: [el.cos, el.sin],
                        d_axial: sol.axial_strain(),
                        d_transverse: sol.slope(x),
                        d_rotation: sol.curvature(x),
                    }
                })
                .collect();
            DatasetRecord {
                schema_version: SCHEMA_VERSION,
                sample_id: sample.id,
                material: sample.material,
                node_id: id,
                x: node.x,
                y: node.y,
                displacement: sample.solution.node_displacements[id],
                jacobian: coordinate_jacobian(&derivs),
                member_derivatives: derivs,
                mesh: config.mesh(),
            }
        })
        .collect()
}

/// Derivatives of `(ux, uy, theta)` along the member direction, in global
/// axes.
fn global_rates(d: &MemberDerivative) -> [f64; 3] {
    let [c, s] = d.direction;
    [
        c * d.d_axial - s * d.d_transverse,
        s * d.d_axial + c * d.d_transverse,
        d.d_rotation,
    ]
}

/// Coordinate Jacobian consistent with the member-wise derivatives at a node.
///
/// Elements of one member are averaged. With a single member direction the
/// derivative normal to the member is set to zero; with several directions
/// `J t_k = d_k` is solved in the least-squares sense.
pub fn coordinate_jacobian(derivs: &[MemberDerivative]) -> [[f64; 2]; 3] {
    let mut members: BTreeMap<usize, ([f64; 2], [f64; 3], usize)> = BTreeMap::new();
    for d in derivs {
        let rates = global_rates(d);
        let entry = members.entry(d.member).or_insert((d.direction, [0.0; 3], 0));
        for (acc, r) in entry.1.iter_mut().zip(rates) {
            *acc += r;
        }
        entry.2 += 1;
    }
    let dirs: Vec<([f64; 2], [f64; 3])> = members
        .into_values()
        .map(|(t, sum, n)| (t, sum.map(|v| v / n as f64)))
        .collect();
    let mut jac = [[0.0; 2]; 3];
    match dirs.as_slice() {
        [] => {}
        [(t, d)] => {
            for o in 0..3 {
                jac[o] = [d[o] * t[0], d[o] * t[1]];
            }
        }
        many => {
            // normal equations (sum t t^T) j = sum t d
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for (t, _) in many {
                a += t[0] * t[0];
                b += t[0] * t[1];
                c += t[1] * t[1];
            }
            let det = a * c - b * b;
            for o in 0..3 {
                let (mut r0, mut r1) = (0.0, 0.0);
                for (t, d) in many {
                    r0 += t[0] * d[o];
                    r1 += t[1] * d[o];
                }
                jac[o] = [(c * r0 - b * r1) / det, (a * r1 - b * r0) / det];
            }
        }
    }
    jac
}

/// Material feature row `(E, A, I)` of the surrogate.
pub fn material_features(m: &MaterialParams) -> [f64; 3] {
    [m.elastic_modulus, m.area, m.inertia_moment]
}

/// Training arrays from dataset records; also returns the sample ids in
/// material-row order.
pub fn training_set(records: &[DatasetRecord]) -> Result<(TrainingSet, Vec<usize>)> {
    if records.is_empty() {
        return Err(ExperimentError::Usage("dataset has no records".into()));
    }
    let mut samples: BTreeMap<usize, MaterialParams> = BTreeMap::new();
    let mut coords: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
    for r in records {
        if let Some(m) = samples.insert(r.sample_id, r.material) {
            if m != r.material {
                return Err(ExperimentError::Usage(format!(
                    "sample {} has inconsistent materials",
                    r.sample_id
                )));
            }
        }
        if let Some(c) = coords.insert(r.node_id, [r.x, r.y]) {
            if c != [r.x, r.y] {
                return Err(ExperimentError::MeshMismatch(format!(
                    "node {} moves between samples",
                    r.node_id
                )));
            }
        }
    }
    let node_rows: BTreeMap<usize, usize> = coords.keys().enumerate().map(|(i, &n)| (n, i)).collect();
    let sample_rows: BTreeMap<usize, usize> = samples.keys().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut nodes = Array2::zeros((coords.len(), 2));
    for (i, c) in coords.values().enumerate() {
        nodes[(i, 0)] = c[0];
        nodes[(i, 1)] = c[1];
    }
    let mut materials = Array2::zeros((samples.len(), 3));
    for (i, m) in samples.values().enumerate() {
        for (k, v) in material_features(m).into_iter().enumerate() {
            materials[(i, k)] = v;
        }
    }
    let rows = records.len();
    let mut targets = Array2::zeros((rows, 3));
    let mut jx = Array2::zeros((rows, 3));
    let mut jy = Array2::zeros((rows, 3));
    let mut pairs = Vec::with_capacity(rows);
    for (r, rec) in records.iter().enumerate() {
        pairs.push((node_rows[&rec.node_id], sample_rows[&rec.sample_id]));
        for o in 0..3 {
            targets[(r, o)] = rec.displacement[o];
            jx[(r, o)] = rec.jacobian[o][0];
            jy[(r, o)] = rec.jacobian[o][1];
        }
    }
    Ok((
        TrainingSet {
            nodes,
            materials,
            pairs,
            targets,
            jacobians: vec![jx, jy],
        },
        samples.into_keys().collect(),
    ))
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = File::create(path).map_err(output_error(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| ExperimentError::Numeric(e.to_string()))?;
        writeln!(w, "{line}").map_err(output_error(path))?;
    }
    w.flush().map_err(output_error(path))
}

pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(|source| ExperimentError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ExperimentError::Input {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| ExperimentError::Malformed {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        check_schema(rec.schema_version)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Numeric(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(output_error(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `train.jsonl`, `test.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(output_error(dir))?;
    write_records(&dir.join(TRAIN_FILE), &data.train)?;
    write_records(&dir.join(TEST_FILE), &data.test)?;
    write_json(&dir.join(MANIFEST_FILE), &data.manifest)
}

/// Manifest stored next to a dataset file.
pub fn manifest_for(dataset: &Path) -> PathBuf {
    dataset
        .parent()
        .map(|p| p.join(MANIFEST_FILE))
        .unwrap_or_else(|| PathBuf::from(MANIFEST_FILE))
}

pub fn read_manifest(dataset: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&manifest_for(dataset))?;
    check_schema(manifest.schema_version)?;
    Ok(manifest)
}

/// Groups records by sample id (ascending).
pub fn by_sample(records: &[DatasetRecord]) -> BTreeMap<usize, Vec<&DatasetRecord>> {
    let mut out: BTreeMap<usize, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.sample_id).or_default().push(r);
    }
    out
}
