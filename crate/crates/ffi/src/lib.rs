//! C ABI over `tendon-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_fit`
//! style constructors and released with the matching `*_free`. Every fallible
//! call returns a [`TendonStatus`]; on failure the message is available from
//! [`tendon_last_error_message`] on the same thread. Strings returned by the
//! library are owned by the caller and released with [`tendon_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tendon_core::dataset::{self, Dataset, GridSpec};
use tendon_core::distill::{self, PolyBasis, TransferFunction};
use tendon_core::models::{Family, RegressorSpec, TrainedModel};
use tendon_core::plant::{self, PlantParams, PlantPreset};
use tendon_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TendonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    ModelError = 4,
    NotFound = 5,
    NoConvergence = 6,
    Panic = 7,
}

/// Yaw `alpha` and pitch `beta` in degrees.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TendonPose {
    pub alpha: f64,
    pub beta: f64,
}

/// Tendon length changes.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TendonCommand {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

pub struct TendonPlant(PlantParams);
pub struct TendonDataset(Dataset);
pub struct TendonModel(TrainedModel);
pub struct TendonTransferFunction(TransferFunction);

impl From<TendonPose> for plant::PoseAngles {
    fn from(p: TendonPose) -> Self {
        plant::PoseAngles::new(p.alpha, p.beta)
    }
}

impl From<plant::PoseAngles> for TendonPose {
    fn from(p: plant::PoseAngles) -> Self {
        TendonPose {
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

impl From<TendonCommand> for plant::TendonDelta {
    fn from(c: TendonCommand) -> Self {
        plant::TendonDelta::new(c.l1, c.l2, c.l3)
    }
}

impl From<plant::TendonDelta> for TendonCommand {
    fn from(c: plant::TendonDelta) -> Self {
        TendonCommand {
            l1: c.l1,
            l2: c.l2,
            l3: c.l3,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TendonStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_)
            | Error::BadGridSpec(_)
            | Error::UnknownFamily(_)
            | Error::UnknownHyperparameter { .. }
            | Error::NonFiniteInput(_)
            | Error::LengthMismatch { .. }
            | Error::DimensionMismatch(_)
            | Error::EmptyInput(_) => TendonStatus::InvalidArgument,
            Error::DatasetTooSparse { .. }
            | Error::TooFewSamples(_)
            | Error::SchemaMismatch(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingOrderingMetadata => TendonStatus::DataError,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => TendonStatus::NotFound,
            Error::Io { .. } => TendonStatus::DataError,
            Error::NoConvergence { .. } => TendonStatus::NoConvergence,
            _ => TendonStatus::ModelError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TendonStatus::NullPointer, format!("`{}` is null", what))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TendonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            TendonStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {}", msg));
            TendonStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TendonStatus::InvalidArgument, format!("`{}` is not UTF-8", what)))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(TendonStatus::ModelError, "string contains NUL".into()))
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn tendon_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tendon_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tendon_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_analytical_inverse(pose: TendonPose, out: *mut TendonCommand) -> TendonStatus {
    guard(|| {
        let cmd = plant::analytical_inverse(pose.into())?;
        write_out(out, cmd.into(), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_analytical_forward(cmd: TendonCommand, out: *mut TendonPose) -> TendonStatus {
    guard(|| write_out(out, plant::analytical_forward(cmd.into()).into(), "out"))
}

/// Creates a plant from a preset name (`ideal`, `default`, `heavy`).
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_plant_new(preset: *const c_char, out: *mut *mut TendonPlant) -> TendonStatus {
    guard(|| {
        let p = PlantPreset::parse(str_arg(preset, "preset")?)?;
        write_out(out, boxed(TendonPlant(p.params())), "out")
    })
}

/// # Safety
/// `plant` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tendon_plant_set_noise_sigma(plant: *mut TendonPlant, sigma: f64) -> TendonStatus {
    guard(|| {
        let p = plant.as_mut().ok_or_else(|| null("plant"))?;
        let mut next = p.0;
        next.noise_sigma = sigma;
        next.validate()?;
        p.0 = next;
        Ok(())
    })
}

/// # Safety
/// `plant` must come from `tendon_plant_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn tendon_plant_free(plant: *mut TendonPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Pose reached by the noise-free plant under `cmd`.
///
/// # Safety
/// `plant` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_plant_forward(
    plant: *const TendonPlant,
    cmd: TendonCommand,
    out: *mut TendonPose,
) -> TendonStatus {
    guard(|| {
        let p = handle(plant, "plant")?.0.noise_free();
        write_out(out, plant::plant_forward(cmd.into(), &p, None).into(), "out")
    })
}

/// Command that drives the noise-free plant to `target`.
///
/// # Safety
/// `plant` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_plant_invert(
    plant: *const TendonPlant,
    target: TendonPose,
    out: *mut TendonCommand,
) -> TendonStatus {
    guard(|| {
        let p = handle(plant, "plant")?;
        write_out(out, plant::invert_plant(target.into(), &p.0)?.into(), "out")
    })
}

/// Sweeps the -90..90 step 10 grid through the plant.
///
/// # Safety
/// `plant` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_generate(
    plant: *const TendonPlant,
    replicates: u32,
    seed: u64,
    out: *mut *mut TendonDataset,
) -> TendonStatus {
    guard(|| {
        let p = handle(plant, "plant")?;
        let ds = dataset::build_dataset(&GridSpec::paper_sweep(), replicates, &p.0, seed)?;
        write_out(out, boxed(TendonDataset(ds)), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_read_csv(path: *const c_char, out: *mut *mut TendonDataset) -> TendonStatus {
    guard(|| {
        let ds = dataset::read_csv(Path::new(str_arg(path, "path")?))?;
        write_out(out, boxed(TendonDataset(ds)), "out")
    })
}

/// Writes the CSV and its `.meta.json` sidecar.
///
/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_write_csv(ds: *const TendonDataset, path: *const c_char) -> TendonStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        dataset::write_csv(&d.0, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_len(ds: *const TendonDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Copies sample `index` into `pose` and `cmd`.
///
/// # Safety
/// `ds` must be a live handle; `pose` and `cmd` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_sample(
    ds: *const TendonDataset,
    index: usize,
    pose: *mut TendonPose,
    cmd: *mut TendonCommand,
) -> TendonStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        let s = d.0.samples.get(index).ok_or_else(|| {
            Failure(
                TendonStatus::InvalidArgument,
                format!("index {} out of range for {} samples", index, d.0.len()),
            )
        })?;
        write_out(pose, s.pose.into(), "pose")?;
        write_out(cmd, s.cmd.into(), "cmd")
    })
}

/// Seeded train/validation split.
///
/// # Safety
/// `ds` must be a live handle; `train` and `val` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_split(
    ds: *const TendonDataset,
    train_fraction: f64,
    seed: u64,
    train: *mut *mut TendonDataset,
    val: *mut *mut TendonDataset,
) -> TendonStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        if train.is_null() || val.is_null() {
            return Err(null("train/val"));
        }
        let (t, v) = dataset::split(&d.0, train_fraction, seed)?;
        write_out(train, boxed(TendonDataset(t)), "train")?;
        write_out(val, boxed(TendonDataset(v)), "val")
    })
}

/// # Safety
/// `ds` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tendon_dataset_free(ds: *mut TendonDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits a model family (`random_forest`, `gradient_boosting`, `ridge`,
/// `lasso`, `svr`, `gpr`, `bnn`, `rnn`). `keys`/`values` hold `n_overrides`
/// hyperparameter overrides and may be null when `n_overrides` is 0. `val`
/// may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_model_fit(
    family: *const c_char,
    seed: u64,
    keys: *const *const c_char,
    values: *const f64,
    n_overrides: usize,
    train: *const TendonDataset,
    val: *const TendonDataset,
    out: *mut *mut TendonModel,
) -> TendonStatus {
    guard(|| {
        let fam = Family::parse(str_arg(family, "family")?)?;
        let mut spec = RegressorSpec::new(fam, seed);
        if n_overrides > 0 {
            if keys.is_null() || values.is_null() {
                return Err(null("keys/values"));
            }
            let ks = std::slice::from_raw_parts(keys, n_overrides);
            let vs = std::slice::from_raw_parts(values, n_overrides);
            for (k, v) in ks.iter().zip(vs) {
                spec.set(str_arg(*k, "key")?, *v)?;
            }
        }
        let t = handle(train, "train")?;
        let empty;
        let v = match val.as_ref() {
            Some(v) => &v.0,
            None => {
                empty = Dataset {
                    samples: Vec::new(),
                    meta: t.0.meta.clone(),
                };
                &empty
            }
        };
        let model = tendon_core::fit(&spec, &t.0, v)?;
        write_out(out, boxed(TendonModel(model)), "out")
    })
}

/// Predicts `n` commands into `out`.
///
/// # Safety
/// `poses` must hold `n` items and `out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn tendon_model_predict(
    model: *const TendonModel,
    poses: *const TendonPose,
    n: usize,
    out: *mut TendonCommand,
) -> TendonStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if n == 0 {
            return Ok(());
        }
        if poses.is_null() || out.is_null() {
            return Err(null("poses/out"));
        }
        let input: Vec<plant::PoseAngles> = std::slice::from_raw_parts(poses, n).iter().map(|&p| p.into()).collect();
        let pred = m.0.predict(&input)?;
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, p) in dst.iter_mut().zip(pred) {
            *d = p.into();
        }
        Ok(())
    })
}

/// Wall-clock fit time in seconds; NaN for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tendon_model_fit_seconds(model: *const TendonModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.fit_seconds)
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tendon_model_free(model: *mut TendonModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fits a degree-1 or degree-2 polynomial to the model's predictions on the
/// probe grid.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_distill_model(
    model: *const TendonModel,
    degree: u32,
    out: *mut *mut TendonTransferFunction,
) -> TendonStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let tf = distill::distill_model(&m.0, PolyBasis::from_degree(degree)?, &distill::probe_grid())?;
        write_out(out, boxed(TendonTransferFunction(tf)), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_distill_analytical(
    degree: u32,
    out: *mut *mut TendonTransferFunction,
) -> TendonStatus {
    guard(|| {
        let tf = distill::distill_analytical(PolyBasis::from_degree(degree)?, &distill::probe_grid())?;
        write_out(out, boxed(TendonTransferFunction(tf)), "out")
    })
}

/// The published gradient-boosting coefficient block.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_reference_gradient_boosting(out: *mut *mut TendonTransferFunction) -> TendonStatus {
    guard(|| {
        write_out(
            out,
            boxed(TendonTransferFunction(TransferFunction::reference_gradient_boosting())),
            "out",
        )
    })
}

/// # Safety
/// `tf` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_eval(
    tf: *const TendonTransferFunction,
    pose: TendonPose,
    out: *mut TendonCommand,
) -> TendonStatus {
    guard(|| {
        let t = handle(tf, "tf")?;
        write_out(out, distill::eval_tf(&t.0, pose.into()).into(), "out")
    })
}

/// Number of basis terms per output (3 or 6); 0 for a null handle.
///
/// # Safety
/// `tf` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_n_features(tf: *const TendonTransferFunction) -> usize {
    tf.as_ref().map_or(0, |t| t.0.basis().n_features())
}

/// Copies the row-major 3 × n_features weights into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_coefficients(
    tf: *const TendonTransferFunction,
    buf: *mut f64,
    len: usize,
) -> TendonStatus {
    guard(|| {
        let t = handle(tf, "tf")?;
        let w = t.0.weights().as_slice();
        if len < w.len() {
            return Err(Failure(
                TendonStatus::InvalidArgument,
                format!("buffer holds {} values, need {}", len, w.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, w.len()).copy_from_slice(w);
        Ok(())
    })
}

/// Residual RMS of the distillation fit; NaN for a null handle.
///
/// # Safety
/// `tf` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_residual_rms(tf: *const TendonTransferFunction) -> f64 {
    tf.as_ref().map_or(f64::NAN, |t| t.0.residual_rms)
}

/// Human-readable equations; free with `tendon_string_free`.
///
/// # Safety
/// `tf` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_render(tf: *const TendonTransferFunction, out: *mut *mut c_char) -> TendonStatus {
    guard(|| {
        let t = handle(tf, "tf")?;
        write_out(out, owned_string(distill::render_equations(&t.0))?, "out")
    })
}

/// JSON document; free with `tendon_string_free`.
///
/// # Safety
/// `tf` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_to_json(tf: *const TendonTransferFunction, out: *mut *mut c_char) -> TendonStatus {
    guard(|| {
        let t = handle(tf, "tf")?;
        write_out(out, owned_string(distill::to_json(&t.0)?)?, "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_from_json(
    json: *const c_char,
    out: *mut *mut TendonTransferFunction,
) -> TendonStatus {
    guard(|| {
        let tf = distill::from_json(str_arg(json, "json")?)?;
        write_out(out, boxed(TendonTransferFunction(tf)), "out")
    })
}

/// # Safety
/// `tf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn tendon_tf_free(tf: *mut TendonTransferFunction) {
    if !tf.is_null() {
        drop(Box::from_raw(tf));
    }
}
