use std::path::Path;

use image::{Rgb, RgbImage};

use super::PipelineError;
use crate::corruption::Mask;
use crate::dsp::MelSpectrogram;

const SCALE: u32 = 2;
const SEPARATOR: u32 = 6;
const RED: Rgb<u8> = Rgb([220, 30, 30]);

/// Grayscale panels input | restored | ground truth, low frequencies at the
/// bottom, with every masked span outlined in red.
pub fn write_triptych(
    path: &Path,
    input: &MelSpectrogram,
    restored: &MelSpectrogram,
    truth: &MelSpectrogram,
    mask: &Mask,
) -> Result<(), PipelineError> {
    let (t, f) = (input.frames() as u32, input.n_mels() as u32);
    for s in [restored, truth] {
        if s.frames() as u32 != t || s.n_mels() as u32 != f {
            return Err(PipelineError::Data("triptych panels differ in shape".into()));
        }
    }
    let pw = t * SCALE;
    let ph = f * SCALE;
    let mut img = RgbImage::from_pixel(3 * pw + 2 * SEPARATOR, ph, Rgb([255, 255, 255]));
    for (k, s) in [input, restored, truth].into_iter().enumerate() {
        let x0 = k as u32 * (pw + SEPARATOR);
        for x in 0..pw {
            for y in 0..ph {
                let v = s.frame((x / SCALE) as usize)[(f - 1 - y / SCALE) as usize];
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(x0 + x, y, Rgb([g, g, g]));
            }
        }
        for gap in mask.gaps() {
            let left = x0 + gap.start as u32 * SCALE;
            let right = x0 + gap.end() as u32 * SCALE - 1;
            for x in left..=right {
                img.put_pixel(x, 0, RED);
                img.put_pixel(x, ph - 1, RED);
            }
            for y in 0..ph {
                img.put_pixel(left, y, RED);
                img.put_pixel(right, y, RED);
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::Gap;

    #[test]
    fn panels_in_order_with_boxes() {
        let t = 10;
        let f = 4;
        let a = MelSpectrogram::new(t, f, vec![0.0; t * f], None).unwrap();
        let b = MelSpectrogram::new(t, f, vec![0.5; t * f], None).unwrap();
        let c = MelSpectrogram::new(t, f, vec![1.0; t * f], None).unwrap();
        let m = Mask::new(t, vec![Gap { start: 6, len: 2 }], 20.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        write_triptych(&p, &a, &b, &c, &m).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.width(), 3 * 20 + 2 * SEPARATOR);
        assert_eq!(img.height(), 8);
        let pw = 20 + SEPARATOR;
        assert_eq!(img.get_pixel(1, 3), &Rgb([0, 0, 0]));
        assert_eq!(img.get_pixel(pw + 1, 3), &Rgb([128, 128, 128]));
        assert_eq!(img.get_pixel(2 * pw + 1, 3), &Rgb([255, 255, 255]));
        assert_eq!(img.get_pixel(12, 3), &RED);
        assert_eq!(img.get_pixel(2 * pw + 15, 0), &RED);
    }
}
