//! C ABI over the simulator.
//!
//! Every fallible function returns a [`PcStatus`]; on failure the message is
//! kept per thread and can be read with [`pc_last_error_message`]. Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use photocore_sim::costmodel::{self, CostParams};
use photocore_sim::model::ModelGraph;
use photocore_sim::noise::NoiseSource;
use photocore_sim::photocore::{photocore_gemm, simulate_forward, Bypass, PhotocoreConfig};
use photocore_sim::reference::reference_forward;
use photocore_sim::tensor::{Matrix, Tensor};
use photocore_sim::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Model = 6,
    Config = 7,
    Domain = 8,
    Panic = 9,
    Other = 10,
}

/// Bypass selector for [`pc_config_set_bypass`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcBypass {
    None = 0,
    InputQ = 1,
    WeightQ = 2,
    OutputQ = 3,
    All = 4,
}

/// Opaque model handle.
pub struct PcModel(ModelGraph);

/// Opaque simulator configuration handle.
pub struct PcConfig(PhotocoreConfig);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> PcStatus {
    match err {
        Error::Shape(_) => PcStatus::Shape,
        Error::Format(_) => PcStatus::Format,
        Error::Model(_) => PcStatus::Model,
        Error::Config(_) => PcStatus::Config,
        Error::Domain(_) => PcStatus::Domain,
        Error::Io { .. } | Error::Json { .. } => PcStatus::Io,
        _ => PcStatus::Other,
    }
}

struct Fail(PcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside photocore-sim".into());
            PcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f32], out: *mut f32, out_len: usize) -> Result<(), Fail> {
    if out_len != src.len() {
        return Err(Fail(
            PcStatus::Shape,
            format!("output buffer holds {out_len} values, result has {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn model_ref<'a>(m: *const PcModel) -> Result<&'a ModelGraph, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn config_ref<'a>(c: *const PcConfig) -> Result<&'a PhotocoreConfig, Fail> {
    c.as_ref().map(|c| &c.0).ok_or_else(|| null("config"))
}

unsafe fn config_mut<'a>(c: *mut PcConfig) -> Result<&'a mut PhotocoreConfig, Fail> {
    c.as_mut().map(|c| &mut c.0).ok_or_else(|| null("config"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a model description file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_model_load(path: *const c_char, out: *mut *mut PcModel) -> PcStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(PcStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = ModelGraph::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(PcModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`pc_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_model_free(model: *mut PcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Element counts of the model's input and output tensors.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_model_io_len(
    model: *const PcModel,
    input_len: *mut usize,
    output_len: *mut usize,
) -> PcStatus {
    guard(|| {
        let m = model_ref(model)?;
        if input_len.is_null() || output_len.is_null() {
            return Err(null("out"));
        }
        *input_len = m.input_shape().iter().product();
        *output_len = m.output_shape().iter().product();
        Ok(())
    })
}

/// Default configuration: n = 64, 10/7/11 bits, gain 4.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_config_new(out: *mut *mut PcConfig) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(PcConfig(PhotocoreConfig::default())));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_config_free(config: *mut PcConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets tile size, gain and noise seed; validated on use.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_config_set(config: *mut PcConfig, tile_size: usize, gain: f64, rng_seed: u64) -> PcStatus {
    guard(|| {
        let c = config_mut(config)?;
        c.tile_size = tile_size;
        c.gain = gain;
        c.rng_seed = rng_seed;
        c.resolve()?;
        Ok(())
    })
}

/// Fixed noise std in pre-ADC counts; a negative value restores the default.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_config_set_noise_sigma(config: *mut PcConfig, sigma: f64) -> PcStatus {
    guard(|| {
        let c = config_mut(config)?;
        c.noise_sigma = (sigma >= 0.0).then_some(sigma);
        c.resolve()?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_config_set_bypass(config: *mut PcConfig, bypass: PcBypass) -> PcStatus {
    guard(|| {
        config_mut(config)?.bypass = match bypass {
            PcBypass::None => Bypass::None,
            PcBypass::InputQ => Bypass::InputQ,
            PcBypass::WeightQ => Bypass::WeightQ,
            PcBypass::OutputQ => Bypass::OutputQ,
            PcBypass::All => Bypass::All,
        };
        Ok(())
    })
}

/// Float32 forward pass.
///
/// # Safety
/// `input` must hold `input_len` floats and `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn pc_reference_forward(
    model: *const PcModel,
    input: *const f32,
    input_len: usize,
    out: *mut f32,
    out_len: usize,
) -> PcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = Tensor::new(m.input_shape().to_vec(), slice(input, input_len, "input")?.to_vec())?;
        write_out(reference_forward(m, &x)?.data(), out, out_len)
    })
}

/// Forward pass with declared layers on the simulated array. `sample`
/// selects the noise stream.
///
/// # Safety
/// As [`pc_reference_forward`]; `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_simulate_forward(
    model: *const PcModel,
    config: *const PcConfig,
    sample: u64,
    input: *const f32,
    input_len: usize,
    out: *mut f32,
    out_len: usize,
) -> PcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let c = config_ref(config)?;
        let x = Tensor::new(m.input_shape().to_vec(), slice(input, input_len, "input")?.to_vec())?;
        let noise = NoiseSource::new(c.rng_seed).for_sample(sample);
        write_out(simulate_forward(m, &x, c, &noise)?.data(), out, out_len)
    })
}

/// `out[rows x cols] = W[rows x k] * X[k x cols]` on the simulated array,
/// all row-major.
///
/// # Safety
/// `w` holds `rows * k` floats, `x` `k * cols`, `out` `rows * cols`.
#[no_mangle]
pub unsafe extern "C" fn pc_gemm(
    config: *const PcConfig,
    w: *const f32,
    rows: usize,
    k: usize,
    x: *const f32,
    cols: usize,
    layer: u32,
    sample: u64,
    out: *mut f32,
) -> PcStatus {
    guard(|| {
        let c = config_ref(config)?;
        let len = |a: usize, b: usize| {
            a.checked_mul(b).ok_or_else(|| Fail(PcStatus::InvalidArgument, "dimensions overflow".into()))
        };
        let (wl, xl, ol) = (len(rows, k)?, len(k, cols)?, len(rows, cols)?);
        let wm = Matrix::new(rows, k, slice(w, wl, "w")?.to_vec())?;
        let xm = Matrix::new(k, cols, slice(x, xl, "x")?.to_vec())?;
        let noise = NoiseSource::new(c.rng_seed).for_sample(sample);
        write_out(photocore_gemm(&wm, &xm, c, &noise, layer)?.data(), out, ol)
    })
}

/// Relative array power `(G * alpha^n + beta) * n` with calibrated constants.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_power(gain: f64, n: usize, out: *mut f64) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = costmodel::power(gain, n, &CostParams::calibrated())?;
        Ok(())
    })
}

/// Relative energy of one batch of the model's declared layers.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pc_energy(
    model: *const PcModel,
    n: usize,
    gain: f64,
    batch: usize,
    out: *mut f64,
) -> PcStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = costmodel::energy(m, n, gain, batch, &CostParams::calibrated())?;
        Ok(())
    })
}

/// Nearest bfloat16 value, ties to even.
#[no_mangle]
pub extern "C" fn pc_bf16_round(x: f32) -> f32 {
    photocore_sim::bf16::bf16_round(x)
}
