//! Frame extraction: turn a video file or a directory of frames into a
//! normalized frame directory.
//!
//! Output names are `<source>_<NNNNNN>.png` where the index is the frame's
//! position in the *source*, not a running count of kept frames — striding
//! by 3 over ten frames yields indices 0, 3, 6, 9. That keeps temporal
//! provenance recoverable from the filename alone.
//!
//! Video decoding shells out to an external decoder (ffmpeg by default);
//! this crate only handles PNG natively.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};

pub const DEFAULT_DECODER: &str = "ffmpeg";

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("png"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn source_name(input: &Path) -> String {
    input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frames".to_string())
}

/// Copy every `stride`-th frame (by sorted source order) into `out_dir`
/// under normalized names. Returns the number of frames written.
pub fn extract_frames(input: &Path, out_dir: &Path, stride: usize) -> Result<usize> {
    extract_frames_with(input, out_dir, stride, DEFAULT_DECODER)
}

/// Like [`extract_frames`] but with an explicit decoder executable for
/// video inputs.
pub fn extract_frames_with(
    input: &Path,
    out_dir: &Path,
    stride: usize,
    decoder: &str,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("frame stride must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let source = source_name(input);

    let frames = if input.is_dir() {
        let frames = sorted_pngs(input)?;
        if frames.is_empty() {
            return Err(Error::EmptySource(format!(
                "no .png frames in {}",
                input.display()
            )));
        }
        let mut written = 0usize;
        for (index, path) in frames.iter().enumerate().step_by(stride) {
            let dest = out_dir.join(format!("{}_{:06}.png", source, index));
            std::fs::copy(path, &dest).map_err(|e| Error::io(&dest, e))?;
            written += 1;
        }
        return Ok(written);
    } else {
        decode_video(input, out_dir, decoder)?
    };

    if frames.is_empty() {
        return Err(Error::EmptySource(format!(
            "decoder produced no frames for {}",
            input.display()
        )));
    }
    let mut written = 0usize;
    for (index, path) in frames.iter().enumerate() {
        let dest = out_dir.join(format!("{}_{:06}.png", source, index));
        if index % stride == 0 {
            std::fs::rename(path, &dest).map_err(|e| Error::io(&dest, e))?;
            written += 1;
        } else {
            let _ = std::fs::remove_file(path);
        }
    }
    Ok(written)
}

/// Decode every frame of `input` into a temporary directory inside
/// `out_dir` (same filesystem, so the later rename is atomic). Returns the
/// sorted decoded frame paths together with the guard that keeps the
/// directory alive.
fn decode_video(input: &Path, out_dir: &Path, decoder: &str) -> Result<DecodedFrames> {
    let tmp = tempfile::tempdir_in(out_dir)
        .map_err(|e| Error::io(out_dir, e))?;
    let pattern = tmp.path().join("frame_%06d.png");
    let output = Command::new(decoder)
        .arg("-hide_banner")
        .arg("-nostdin")
        .arg("-i")
        .arg(input)
        .arg("-vsync")
        .arg("0")
        .arg("-start_number")
        .arg("0")
        .arg(&pattern)
        .output()
        .map_err(|e| Error::Decode(format!("could not run decoder `{}`: {}", decoder, e)))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let tail: String = stderr
            .lines()
            .rev()
            .take(4)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Decode(format!(
            "decoder `{}` failed on {} ({}): {}",
            decoder,
            input.display(),
            output.status,
            tail
        )));
    }
    let paths = sorted_pngs(tmp.path())?;
    Ok(DecodedFrames { _tmp: tmp, paths })
}

struct DecodedFrames {
    _tmp: tempfile::TempDir,
    paths: Vec<PathBuf>,
}

impl DecodedFrames {
    fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn iter(&self) -> std::slice::Iter<'_, PathBuf> {
        self.paths.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::frame::Frame;
    use crate::data::ValueRange;
    use crate::tensor::Tensor;

    fn frame_dir(count: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..count {
            Frame::from_pixels(
                Tensor::full(&[16, 16, 3], i as f64 / 255.0),
                ValueRange::Unit,
                format!("f{i}"),
            )
            .unwrap()
            .save_png(&dir.path().join(format!("shot_{:03}.png", i)))
            .unwrap();
        }
        dir
    }

    fn listed(dir: &Path) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    }

    #[test]
    fn stride_keeps_source_indices_in_names() {
        let src = frame_dir(10);
        let out = tempfile::tempdir().unwrap();
        let n = extract_frames(src.path(), out.path(), 3).unwrap();
        assert_eq!(n, 4);
        let source = src.path().file_name().unwrap().to_string_lossy().into_owned();
        let expect: Vec<String> = [0, 3, 6, 9]
            .iter()
            .map(|i| format!("{}_{:06}.png", source, i))
            .collect();
        assert_eq!(listed(out.path()), expect);
    }

    #[test]
    fn stride_one_copies_everything_losslessly() {
        let src = frame_dir(4);
        let out = tempfile::tempdir().unwrap();
        assert_eq!(extract_frames(src.path(), out.path(), 1).unwrap(), 4);
        // Byte-for-byte copies: frame 2 must decode to its original value.
        let source = src.path().file_name().unwrap().to_string_lossy().into_owned();
        let copied =
            Frame::load_png(&out.path().join(format!("{}_{:06}.png", source, 2))).unwrap();
        assert!((copied.pixels().data()[0] - 2.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn zero_stride_is_a_config_error() {
        let src = frame_dir(1);
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            extract_frames(src.path(), out.path(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_directory_is_an_empty_source() {
        let src = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            extract_frames(src.path(), out.path(), 1),
            Err(Error::EmptySource(_))
        ));
    }

    #[test]
    fn missing_decoder_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let fake_video = dir.path().join("tape.avi");
        std::fs::write(&fake_video, b"not really a video").unwrap();
        let out = tempfile::tempdir().unwrap();
        match extract_frames_with(&fake_video, out.path(), 1, "definitely-not-a-decoder") {
            Err(Error::Decode(msg)) => assert!(msg.contains("definitely-not-a-decoder")),
            other => panic!("expected decode error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn decoder_that_emits_nothing_is_an_empty_source() {
        // `true` exits 0 without writing frames, exercising the no-output path.
        let dir = tempfile::tempdir().unwrap();
        let fake_video = dir.path().join("tape.avi");
        std::fs::write(&fake_video, b"x").unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            extract_frames_with(&fake_video, out.path(), 1, "true"),
            Err(Error::EmptySource(_))
        ));
    }
}
