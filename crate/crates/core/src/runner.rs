//! SR engines: in-process classical upscalers and external programs that
//! exchange PNG directories with the harness.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{EngineError, Error, Result};
use crate::image::{load_image, save_image, Image};
use crate::resample::{upscale_x4, Filter, SCALE};

/// Default external-engine timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

/// Environment variable exported to external engines.
pub const SCALE_ENV: &str = "HARNESS_SCALE";

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Builtin(Filter),
    External(ExternalEngine),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEngine {
    /// Shell command with `{input_dir}`, `{output_dir}` and optional `{scale}`.
    pub command_template: String,
    /// Inputs are reflect-padded to a multiple of this many pixels.
    pub window_multiple: usize,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub engine: Engine,
    pub scale: usize,
}

impl ModelSpec {
    pub fn builtin(filter: Filter) -> Self {
        ModelSpec {
            name: filter.name().to_string(),
            engine: Engine::Builtin(filter),
            scale: SCALE,
        }
    }

    pub fn external(
        name: impl Into<String>,
        command_template: impl Into<String>,
        window_multiple: usize,
        timeout: Duration,
    ) -> Result<Self> {
        let command_template = command_template.into();
        for placeholder in ["{input_dir}", "{output_dir}"] {
            if !command_template.contains(placeholder) {
                return Err(EngineError::Template(format!(
                    "`{command_template}` lacks the {placeholder} placeholder"
                ))
                .into());
            }
        }
        if window_multiple == 0 {
            return Err(Error::InvalidArgument(
                "window multiple must be at least 1".into(),
            ));
        }
        Ok(ModelSpec {
            name: name.into(),
            engine: Engine::External(ExternalEngine {
                command_template,
                window_multiple,
                timeout,
            }),
            scale: SCALE,
        })
    }
}

/// Reflect-padded image together with the size it had before padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub image: Image,
    pub orig_w: usize,
    pub orig_h: usize,
}

/// Grow width and height to the next multiple of `m` by mirroring interior
/// samples (edge not repeated) on the right and bottom.
pub fn pad_reflect_to_multiple(img: &Image, m: usize) -> Result<Padded> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "padding multiple must be at least 1".into(),
        ));
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
    let (pad_w, pad_h) = (pw - w, ph - h);
    if (pad_w > 0 && pad_w > w - 1) || (pad_h > 0 && pad_h > h - 1) {
        return Err(Error::TooSmallToReflect {
            width: w,
            height: h,
            pad_w,
            pad_h,
        });
    }
    if pad_w == 0 && pad_h == 0 {
        return Ok(Padded {
            image: img.clone(),
            orig_w: w,
            orig_h: h,
        });
    }
    let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
    let src = img.samples();
    let mut data = Vec::with_capacity(pw * ph * c);
    for y in 0..ph {
        let sy = reflect(y, h);
        for x in 0..pw {
            let base = (sy * w + reflect(x, w)) * c;
            data.extend_from_slice(&src[base..base + c]);
        }
    }
    Ok(Padded {
        image: Image::new(pw, ph, c, img.bit_depth(), data)?,
        orig_w: w,
        orig_h: h,
    })
}

/// Top-left crop to `scale * orig` in both dimensions.
pub fn crop_to_scale(sr: &Image, orig_w: usize, orig_h: usize, scale: usize) -> Result<Image> {
    let (tw, th) = (orig_w * scale, orig_h * scale);
    if sr.width() < tw || sr.height() < th {
        return Err(EngineError::ShapeMismatch {
            file: "<crop>".into(),
            expected_w: tw,
            expected_h: th,
            got_w: sr.width(),
            got_h: sr.height(),
        }
        .into());
    }
    if sr.width() == tw && sr.height() == th {
        return Ok(sr.clone());
    }
    let c = sr.channels();
    let src = sr.samples();
    let mut data = Vec::with_capacity(tw * th * c);
    for y in 0..th {
        let start = y * sr.width() * c;
        data.extend_from_slice(&src[start..start + tw * c]);
    }
    Image::new(tw, th, c, sr.bit_depth(), data)
}

/// Super-resolve one image: pad, run the engine, crop to exactly `4w x 4h`.
pub fn infer(model: &ModelSpec, lr: &Image) -> Result<Image> {
    let mut out = infer_batch(model, std::slice::from_ref(lr))?;
    Ok(out.remove(0))
}

/// Super-resolve several images. External engines see all of them in one
/// invocation.
pub fn infer_batch(model: &ModelSpec, inputs: &[Image]) -> Result<Vec<Image>> {
    match &model.engine {
        Engine::Builtin(filter) => inputs
            .par_iter()
            .map(|lr| upscale_x4(lr, *filter))
            .collect(),
        Engine::External(ext) => {
            let work = tempfile::Builder::new()
                .prefix("irsr-engine-")
                .tempdir()
                .map_err(|e| Error::io(std::env::temp_dir(), e))?;
            let in_dir = work.path().join("input");
            let out_dir = work.path().join("output");
            fs::create_dir_all(&in_dir).map_err(|e| Error::io(&in_dir, e))?;
            let mut padded = Vec::with_capacity(inputs.len());
            for (k, lr) in inputs.iter().enumerate() {
                let p = pad_reflect_to_multiple(lr, ext.window_multiple)?;
                save_image(&p.image, in_dir.join(batch_name(k)))?;
                padded.push((p.orig_w, p.orig_h));
            }
            run_external_batch(model, &in_dir, &out_dir)?;
            padded
                .iter()
                .enumerate()
                .map(|(k, &(w, h))| {
                    let sr = load_image(out_dir.join(batch_name(k)))?;
                    crop_to_scale(&sr, w, h, model.scale)
                })
                .collect()
        }
    }
}

fn batch_name(k: usize) -> String {
    format!("{k:05}.png")
}

/// PNG files directly inside `dir`, keyed by file name.
pub fn list_pngs(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

fn model_lock(name: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|p| p.into_inner());
    map.entry(name.to_string()).or_default().clone()
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Kill the engine together with anything it spawned.
fn kill_group(pid: u32) {
    #[cfg(not(unix))]
    let _ = pid;
    #[cfg(unix)]
    let _ = Command::new("kill")
        .args(["-KILL", "--", &format!("-{pid}")])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status();
}

fn tail(s: &str, max: usize) -> &str {
    let s = s.trim();
    if s.len() <= max {
        return s;
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

/// Run an external engine over every PNG in `lr_dir`, writing into `out_dir`.
///
/// Succeeds only if the command exits 0 within its timeout and leaves
/// exactly one PNG per input, with the same name and x4 dimensions.
pub fn run_external_batch(model: &ModelSpec, lr_dir: &Path, out_dir: &Path) -> Result<()> {
    let Engine::External(ext) = &model.engine else {
        return Err(Error::InvalidArgument(format!(
            "model `{}` is not an external engine",
            model.name
        )));
    };
    let inputs = list_pngs(lr_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (lr_abs, out_abs) = (absolute(lr_dir)?, absolute(out_dir)?);
    let command = ext
        .command_template
        .replace("{input_dir}", &shell_quote(&lr_abs.to_string_lossy()))
        .replace("{output_dir}", &shell_quote(&out_abs.to_string_lossy()))
        .replace("{scale}", &model.scale.to_string());

    let lock = model_lock(&model.name);
    let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(&command)
        .env(SCALE_ENV, model.scale.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
    let mut child = cmd.spawn().map_err(|e| Error::io("sh", e))?;
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());

    let started = Instant::now();
    let status = loop {
        match child.try_wait().map_err(|e| Error::io("sh", e))? {
            Some(status) => break status,
            None if started.elapsed() >= ext.timeout => {
                kill_group(child.id());
                let _ = child.kill();
                let _ = child.wait();
                return Err(EngineError::Timeout {
                    model: model.name.clone(),
                    seconds: ext.timeout.as_secs_f64(),
                }
                .into());
            }
            None => thread::sleep(Duration::from_millis(5)),
        }
    };
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    if !status.success() {
        let status = status
            .code()
            .map_or_else(|| "signal".to_string(), |c| c.to_string());
        let diagnostics = match (tail(&stderr, 2000), tail(&stdout, 500)) {
            ("", "") => "<no output>".to_string(),
            (err, "") => err.to_string(),
            ("", out) => out.to_string(),
            (err, out) => format!("{err}\n{out}"),
        };
        return Err(EngineError::NonZeroExit {
            model: model.name.clone(),
            status,
            diagnostics,
        }
        .into());
    }

    let outputs = list_pngs(out_dir)?;
    if let Some(file) = inputs.keys().find(|k| !outputs.contains_key(*k)) {
        return Err(EngineError::MissingOutput {
            model: model.name.clone(),
            file: file.clone(),
        }
        .into());
    }
    if let Some(file) = outputs.keys().find(|k| !inputs.contains_key(*k)) {
        return Err(EngineError::ExtraOutput {
            model: model.name.clone(),
            file: file.clone(),
        }
        .into());
    }
    for (name, path) in &inputs {
        let lr = load_image(path)?;
        let sr = load_image(&outputs[name])?;
        let (ew, eh) = (lr.width() * model.scale, lr.height() * model.scale);
        if sr.width() != ew || sr.height() != eh {
            return Err(EngineError::ShapeMismatch {
                file: name.clone(),
                expected_w: ew,
                expected_h: eh,
                got_w: sr.width(),
                got_h: sr.height(),
            }
            .into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BitDepth;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Image {
        let data = (0..w * h).map(|i| (i % 256) as u16).collect();
        Image::new(w, h, 1, BitDepth::Eight, data).unwrap()
    }

    #[test]
    fn pad_sizes() {
        let p = pad_reflect_to_multiple(&ramp(120, 120), 16).unwrap();
        assert_eq!((p.image.width(), p.image.height()), (128, 128));
        assert_eq!((p.orig_w, p.orig_h), (120, 120));
        let img = ramp(256, 256);
        let p = pad_reflect_to_multiple(&img, 16).unwrap();
        assert_eq!(p.image, img);
    }

    #[test]
    fn reflection_row_example() {
        let img = Image::new(3, 2, 1, BitDepth::Eight, vec![1, 2, 3, 1, 2, 3]).unwrap();
        let p = pad_reflect_to_multiple(&img, 5);
        // 2 rows cannot supply 3 reflected rows
        assert!(matches!(p, Err(Error::TooSmallToReflect { .. })));
        let img = Image::new(3, 5, 1, BitDepth::Eight, [1, 2, 3].repeat(5)).unwrap();
        let p = pad_reflect_to_multiple(&img, 5).unwrap();
        assert_eq!(&p.image.samples()[..5], &[1, 2, 3, 2, 1]);
    }

    #[test]
    fn bottom_rows_mirror() {
        let img = Image::new(4, 3, 1, BitDepth::Eight, [[7; 4], [8; 4], [9; 4]].concat()).unwrap();
        let p = pad_reflect_to_multiple(&img, 4).unwrap();
        assert_eq!(&p.image.samples()[12..], &[8; 4]);
    }

    #[test]
    fn one_pixel_cannot_reflect() {
        let img = Image::filled(1, 1, BitDepth::Eight, 0).unwrap();
        assert!(pad_reflect_to_multiple(&img, 2).is_err());
        assert!(pad_reflect_to_multiple(&img, 1).is_ok());
        assert!(pad_reflect_to_multiple(&img, 0).is_err());
    }

    #[test]
    fn crop_examples() {
        let sr = ramp(512, 512);
        let c = crop_to_scale(&sr, 120, 120, 4).unwrap();
        assert_eq!((c.width(), c.height()), (480, 480));
        assert_eq!(c.get(479, 3, 0), sr.get(479, 3, 0));
        let exact = ramp(480, 480);
        assert_eq!(crop_to_scale(&exact, 120, 120, 4).unwrap(), exact);
        assert!(crop_to_scale(&ramp(300, 300), 120, 120, 4).is_err());
    }

    #[test]
    fn builtin_inference() {
        let lr = Image::new(2, 2, 1, BitDepth::Eight, vec![10, 20, 30, 40]).unwrap();
        let sr = infer(&ModelSpec::builtin(Filter::Nearest), &lr).unwrap();
        assert_eq!((sr.width(), sr.height()), (8, 8));
        assert_eq!(sr.get(3, 3, 0), 10);
        assert_eq!(sr.get(4, 7, 0), 40);
        let flat = Image::filled(5, 3, BitDepth::Eight, 99).unwrap();
        let sr = infer(&ModelSpec::builtin(Filter::bicubic()), &flat).unwrap();
        assert_eq!((sr.width(), sr.height()), (20, 12));
        assert!(sr.samples().iter().all(|&s| s == 99));
    }

    #[test]
    fn template_must_name_both_directories() {
        assert!(ModelSpec::external("m", "run {input_dir}", 16, DEFAULT_TIMEOUT).is_err());
        assert!(
            ModelSpec::external("m", "run {input_dir} {output_dir}", 0, DEFAULT_TIMEOUT).is_err()
        );
        assert!(
            ModelSpec::external("m", "run {input_dir} {output_dir}", 16, DEFAULT_TIMEOUT).is_ok()
        );
    }

    fn write_inputs(dir: &Path) {
        fs::create_dir_all(dir).unwrap();
        save_image(&ramp(4, 3), dir.join("a.png")).unwrap();
        save_image(&ramp(2, 2), dir.join("b.png")).unwrap();
    }

    #[test]
    fn nonzero_exit_carries_diagnostics() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "failing",
            "echo boom >&2; exit 3 # {input_dir} {output_dir}",
            1,
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("status 3") && msg.contains("boom"), "{msg}");
        assert!(err.is_runtime_failure());
    }

    #[test]
    fn copying_inputs_is_a_shape_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "copy",
            "cp {input_dir}/*.png {output_dir}/",
            1,
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out")).unwrap_err();
        assert!(
            err.to_string()
                .contains("model output shape mismatch for `a.png`"),
            "{err}"
        );
    }

    #[test]
    fn missing_and_extra_files_are_named() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "partial",
            "cp {input_dir}/a.png {output_dir}/",
            1,
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out")).unwrap_err();
        assert!(
            matches!(&err, Error::Engine(EngineError::MissingOutput { file, .. }) if file == "b.png")
        );

        let m = ModelSpec::external(
            "extra",
            "cp {input_dir}/*.png {output_dir}/ && cp {input_dir}/a.png {output_dir}/zz.png",
            1,
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out2")).unwrap_err();
        assert!(
            matches!(&err, Error::Engine(EngineError::ExtraOutput { file, .. }) if file == "zz.png")
        );
    }

    #[test]
    fn timeout_kills_the_engine() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "slow",
            "sleep 5 # {input_dir} {output_dir}",
            1,
            Duration::from_millis(200),
        )
        .unwrap();
        let t0 = Instant::now();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out")).unwrap_err();
        assert!(matches!(err, Error::Engine(EngineError::Timeout { .. })));
        assert!(t0.elapsed() < Duration::from_secs(4));
    }

    #[cfg(unix)]
    #[test]
    fn timeout_reaches_grandchildren() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "forking",
            "(sleep 1; touch {output_dir}/late) & wait # {input_dir}",
            1,
            Duration::from_millis(200),
        )
        .unwrap();
        let out = tmp.path().join("out");
        assert!(run_external_batch(&m, &tmp.path().join("in"), &out).is_err());
        thread::sleep(Duration::from_millis(1500));
        assert!(!out.join("late").exists());
    }

    #[test]
    fn scale_is_exported_and_substituted() {
        let tmp = tempfile::tempdir().unwrap();
        write_inputs(&tmp.path().join("in"));
        let m = ModelSpec::external(
            "env",
            "test \"$HARNESS_SCALE\" = 4 && test {scale} = 4 || exit 9; exit 1 # {input_dir} {output_dir}",
            1,
            DEFAULT_TIMEOUT,
        )
        .unwrap();
        let err =
            run_external_batch(&m, &tmp.path().join("in"), &tmp.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("status 1"), "{err}");
    }

    proptest! {
        #[test]
        fn pad_then_upscale_then_crop_is_exact(w in 2usize..40, h in 2usize..40, m in 1usize..20) {
            let img = ramp(w, h);
            // reflection needs m - 1 <= dim - 1 in the worst case
            prop_assume!(w.div_ceil(m) * m - w < w && h.div_ceil(m) * m - h < h);
            let p = pad_reflect_to_multiple(&img, m).unwrap();
            prop_assert_eq!(p.image.width() % m, 0);
            prop_assert_eq!(p.image.height() % m, 0);
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(p.image.get(x, y, 0), img.get(x, y, 0));
                }
            }
            let sr = upscale_x4(&p.image, Filter::Nearest).unwrap();
            let c = crop_to_scale(&sr, w, h, 4).unwrap();
            prop_assert_eq!((c.width(), c.height()), (4 * w, 4 * h));
        }
    }
}
