// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over `layertracer`.
//!
//! Every entry point returns an [`LtStatus`] (or a plain value for infallible
//! getters), never unwinds across the boundary, and records a message
//! retrievable with [`lt_last_error_message`] on failure. Handles returned
//! through out-pointers are owned by the caller and released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use layertracer::analysis::{analyze, AnalysisConfig, PromptAnalysis};
use layertracer::models::{
    byte_tokens, default_plant_strength, load_weights, plant_particle, save_weights, Arch,
    LayeredModel, ModelSpec, Perturbation,
};
use layertracer::report::{to_json_string, PromptReport};
use layertracer::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed weight file: bad magic, version, checksum, truncation or shape.
    Format = 4,
    /// The analysis could not produce a result for this input.
    Analysis = 5,
    /// The requested value is not defined (e.g. LRS of a one-layer scan).
    Undefined = 6,
    Panic = 7,
}

/// Architecture ids, matching the weight-file header.
pub const LT_ARCH_DECODER: u8 = 0;
pub const LT_ARCH_LINEAR: u8 = 1;
pub const LT_ARCH_HYBRID: u8 = 2;

/// Model dimensions. `hybrid_pattern` (e.g. `"AAAL"`, cycled to `n_layers`)
/// is read only when `arch` is `LT_ARCH_HYBRID`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LtSpec {
    pub arch: u8,
    pub n_layers: u32,
    pub d_model: u32,
    pub n_heads: u32,
    pub d_ff: u32,
    pub vocab_size: u32,
    pub max_seq: u32,
    pub hybrid_pattern: *const c_char,
}

/// Analysis settings.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtConfig {
    pub top_k: u32,
    pub mask_fraction: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// Opaque model handle.
pub struct LtModel {
    inner: LayeredModel,
}

/// Opaque result of a two-phase analysis.
pub struct LtAnalysis {
    result: PromptAnalysis,
    report: PromptReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => LtStatus::Io,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Checksum { .. }
            | Error::Truncated(_)
            | Error::ShapeMismatch(_) => LtStatus::Format,
            Error::DegenerateTrace => LtStatus::Analysis,
            _ => LtStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LtStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LtStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn to_spec(spec: *const LtSpec) -> Result<ModelSpec, Failure> {
    let s = spec.as_ref().ok_or_else(|| null("spec"))?;
    let arch = match s.arch {
        LT_ARCH_DECODER => Arch::DecoderAttention,
        LT_ARCH_LINEAR => Arch::LinearAttention,
        LT_ARCH_HYBRID => Arch::hybrid_from_pattern(
            c_str(s.hybrid_pattern, "hybrid_pattern")?,
            s.n_layers as usize,
        )?,
        other => {
            return Err(Failure(
                LtStatus::InvalidArgument,
                format!("unknown arch id {other}"),
            ))
        }
    };
    let spec = ModelSpec {
        arch,
        n_layers: s.n_layers as usize,
        d_model: s.d_model as usize,
        n_heads: s.n_heads as usize,
        d_ff: s.d_ff as usize,
        vocab_size: s.vocab_size as usize,
        max_seq: s.max_seq as usize,
    };
    spec.validate()?;
    Ok(spec)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// NUL-terminated library version. Static; do not free.
#[no_mangle]
pub extern "C" fn lt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or `""`. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn lt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reference dimensions: 12 layers, d_model 64, 4 heads, d_ff 128, vocab 256,
/// max_seq 128.
#[no_mangle]
pub extern "C" fn lt_spec_reference(arch: u8) -> LtSpec {
    let r = ModelSpec::reference(Arch::DecoderAttention);
    LtSpec {
        arch,
        n_layers: r.n_layers as u32,
        d_model: r.d_model as u32,
        n_heads: r.n_heads as u32,
        d_ff: r.d_ff as u32,
        vocab_size: r.vocab_size as u32,
        max_seq: r.max_seq as u32,
        hybrid_pattern: ptr::null(),
    }
}

/// Default settings: top-10, full mask, no noise, seed 0.
#[no_mangle]
pub extern "C" fn lt_config_default() -> LtConfig {
    let c = AnalysisConfig::default();
    LtConfig {
        top_k: c.top_k as u32,
        mask_fraction: c.perturbation.mask_fraction,
        noise_std: c.perturbation.noise_std,
        seed: c.perturbation.seed,
    }
}

#[no_mangle]
pub extern "C" fn lt_default_plant_strength(d_model: u32) -> f32 {
    default_plant_strength(d_model as usize)
}

/// Randomly initialized model.
///
/// # Safety
/// `spec` must point to a valid `LtSpec`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_model_init(
    spec: *const LtSpec,
    seed: u64,
    out: *mut *mut LtModel,
) -> LtStatus {
    guard(|| {
        let spec = to_spec(spec)?;
        put(
            out,
            LtModel {
                inner: LayeredModel::init_random(&spec, seed)?,
            },
        )
    })
}

/// Model whose task particle and vulnerable layer are both `layer` (1-based),
/// boosting `target_token`.
///
/// # Safety
/// As for [`lt_model_init`].
#[no_mangle]
pub unsafe extern "C" fn lt_model_plant(
    spec: *const LtSpec,
    layer: u32,
    target_token: u32,
    strength: f32,
    seed: u64,
    out: *mut *mut LtModel,
) -> LtStatus {
    guard(|| {
        let spec = to_spec(spec)?;
        put(
            out,
            LtModel {
                inner: plant_particle(&spec, layer as usize, target_token, strength, seed)?,
            },
        )
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_model_load(path: *const c_char, out: *mut *mut LtModel) -> LtStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        put(
            out,
            LtModel {
                inner: load_weights(path)?,
            },
        )
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lt_model_save(model: *const LtModel, path: *const c_char) -> LtStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        save_weights(&model.inner, c_str(path, "path")?)?;
        Ok(())
    })
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_model_n_layers(model: *const LtModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.n_layers() as u32)
}

/// # Safety
/// `model` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lt_model_free(model: *mut LtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn config_from(c: &LtConfig) -> Result<AnalysisConfig, Failure> {
    Ok(AnalysisConfig {
        top_k: c.top_k as usize,
        perturbation: Perturbation::new(1, c.mask_fraction, c.noise_std, c.seed)?,
        ..AnalysisConfig::default()
    })
}

unsafe fn run_analysis(
    model: *const LtModel,
    tokens: &[u32],
    config: *const LtConfig,
    out: *mut *mut LtAnalysis,
) -> Result<(), Failure> {
    let model = model.as_ref().ok_or_else(|| null("model"))?;
    let config = match config.as_ref() {
        Some(c) => config_from(c)?,
        None => AnalysisConfig::default(),
    };
    let result = analyze(&model.inner, tokens, &config)?;
    let report = PromptReport::new(
        model.inner.spec(),
        &config,
        None,
        Some(&result.particle),
        Some(&result.vulnerability),
    );
    put(out, LtAnalysis { result, report })
}

/// Both phases over token ids. A null `config` means [`lt_config_default`].
///
/// # Safety
/// `tokens` must point to `n_tokens` readable ids; other pointers as above.
#[no_mangle]
pub unsafe extern "C" fn lt_analyze(
    model: *const LtModel,
    tokens: *const u32,
    n_tokens: usize,
    config: *const LtConfig,
    out: *mut *mut LtAnalysis,
) -> LtStatus {
    guard(|| {
        if tokens.is_null() && n_tokens > 0 {
            return Err(null("tokens"));
        }
        let tokens = if n_tokens == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(tokens, n_tokens)
        };
        run_analysis(model, tokens, config, out)
    })
}

/// Both phases over the UTF-8 bytes of `text`, one token per byte.
///
/// # Safety
/// `text` must be NUL-terminated; other pointers as for [`lt_analyze`].
#[no_mangle]
pub unsafe extern "C" fn lt_analyze_text(
    model: *const LtModel,
    text: *const c_char,
    config: *const LtConfig,
    out: *mut *mut LtAnalysis,
) -> LtStatus {
    guard(|| {
        let tokens = byte_tokens(c_str(text, "text")?.as_bytes());
        run_analysis(model, &tokens, config, out)
    })
}

/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_target_token(analysis: *const LtAnalysis) -> u32 {
    analysis
        .as_ref()
        .map_or(0, |a| a.result.particle.target_token)
}

/// 1-based particle layer, or 0 for a null handle.
///
/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_particle_layer(analysis: *const LtAnalysis) -> u32 {
    analysis
        .as_ref()
        .map_or(0, |a| a.result.particle.particle_layer as u32)
}

/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_particle_ratio(analysis: *const LtAnalysis) -> f64 {
    analysis
        .as_ref()
        .map_or(f64::NAN, |a| a.result.particle.particle_ratio)
}

/// 1-based vulnerable layer, or 0 for a null handle.
///
/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_vulnerable_layer(analysis: *const LtAnalysis) -> u32 {
    analysis
        .as_ref()
        .map_or(0, |a| a.result.vulnerability.vulnerable_layer as u32)
}

/// Whether no layer moved the output distribution.
///
/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_degenerate(analysis: *const LtAnalysis) -> bool {
    analysis
        .as_ref()
        .is_some_and(|a| a.result.vulnerability.degenerate)
}

/// Number of scanned layers, or 0 for a null handle.
///
/// # Safety
/// `analysis` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_n_layers(analysis: *const LtAnalysis) -> u32 {
    analysis
        .as_ref()
        .map_or(0, |a| a.result.vulnerability.layers.len() as u32)
}

/// # Safety
/// `analysis` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_lrs(analysis: *const LtAnalysis, out: *mut f64) -> LtStatus {
    guard(|| {
        let a = analysis.as_ref().ok_or_else(|| null("analysis"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v =
            a.result.vulnerability.lrs.ok_or_else(|| {
                Failure(LtStatus::Undefined, "LRS needs at least two layers".into())
            })?;
        *out = v;
        Ok(())
    })
}

unsafe fn layer_value(
    analysis: *const LtAnalysis,
    layer: u32,
    out: *mut f64,
    get: impl Fn(&LtAnalysis, usize) -> Option<f64>,
) -> LtStatus {
    guard(|| {
        let a = analysis.as_ref().ok_or_else(|| null("analysis"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = get(a, layer as usize).ok_or_else(|| {
            Failure(
                LtStatus::InvalidArgument,
                format!("layer {layer} was not traced"),
            )
        })?;
        Ok(())
    })
}

/// JS divergence at 1-based `layer`.
///
/// # Safety
/// `analysis` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_js(
    analysis: *const LtAnalysis,
    layer: u32,
    out: *mut f64,
) -> LtStatus {
    layer_value(analysis, layer, out, |a, l| a.result.vulnerability.js_at(l))
}

/// Logit-lens probability of the target token at 1-based `layer`.
///
/// # Safety
/// `analysis` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_target_prob(
    analysis: *const LtAnalysis,
    layer: u32,
    out: *mut f64,
) -> LtStatus {
    layer_value(analysis, layer, out, |a, l| {
        a.result
            .particle
            .trace
            .layers
            .iter()
            .find(|r| r.layer == l)
            .map(|r| r.target_prob)
    })
}

/// Per-prompt JSON report. Free the string with [`lt_string_free`].
///
/// # Safety
/// `analysis` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_to_json(
    analysis: *const LtAnalysis,
    out: *mut *mut c_char,
) -> LtStatus {
    guard(|| {
        let a = analysis.as_ref().ok_or_else(|| null("analysis"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = to_json_string(&a.report)?;
        *out = CString::new(json)
            .map_err(|_| Failure(LtStatus::InvalidArgument, "report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `analysis` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lt_analysis_free(analysis: *mut LtAnalysis) {
    if !analysis.is_null() {
        drop(Box::from_raw(analysis));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn lt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
