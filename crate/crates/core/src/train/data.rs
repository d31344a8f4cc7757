//! Training data plumbing: an in-memory decoded-image store, the
//! balanced batch sampler, and image-to-tensor conversion.

use std::collections::BTreeMap;

use ndarray::{Array3, Array4};
use rand::seq::SliceRandom;

use super::TrainError;
use crate::imgproc::Image;
use crate::manifest::{ImageRecord, Source};
use crate::rng::stream_rng;

/// Decoded images keyed by record id, loaded once per run.
pub struct ImageStore {
    images: BTreeMap<String, Image>,
}

impl ImageStore {
    /// Decode every record's file (in parallel), resolving relative
    /// paths through `resolve`.
    pub fn load<'a, I, F>(records: I, resolve: F) -> Result<Self, TrainError>
    where
        I: IntoIterator<Item = &'a ImageRecord>,
        F: Fn(&str) -> String + Sync,
    {
        let records: Vec<&ImageRecord> = records.into_iter().collect();
        let loaded = crate::parallel::map(&records, |r| {
            Image::load(resolve(&r.path)).map(|img| (r.id.clone(), img))
        });
        let mut images = BTreeMap::new();
        for item in loaded {
            let (id, img) = item?;
            images.insert(id, img);
        }
        Ok(ImageStore { images })
    }

    pub fn get(&self, id: &str) -> Option<&Image> {
        self.images.get(id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Stratified batches: real and synthetic indices are shuffled
/// separately per `(seed, epoch)` and interleaved, so every batch holds
/// equal real/synthetic counts within one. Trailing batches smaller than
/// two records are dropped. The result is a pure function of
/// `(records, batch_size, seed, epoch)`.
pub fn balanced_batches(
    records: &[&ImageRecord],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Vec<Vec<usize>> {
    let mut real: Vec<usize> = Vec::new();
    let mut synth: Vec<usize> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match r.source {
            Source::Real => real.push(i),
            Source::Synthetic => synth.push(i),
        }
    }
    real.shuffle(&mut stream_rng(seed, &format!("sampler/{epoch}/real")));
    synth.shuffle(&mut stream_rng(seed, &format!("sampler/{epoch}/synthetic")));

    let mut interleaved = Vec::with_capacity(records.len());
    let mut r = real.into_iter();
    let mut s = synth.into_iter();
    loop {
        match (r.next(), s.next()) {
            (Some(a), Some(b)) => {
                interleaved.push(a);
                interleaved.push(b);
            }
            (Some(a), None) => interleaved.push(a),
            (None, Some(b)) => interleaved.push(b),
            (None, None) => break,
        }
    }
    interleaved
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

/// Scale an 8-bit image into a `(3, h, w)` tensor in `[0, 1]`.
pub fn image_to_tensor(img: &Image) -> Array3<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.data();
    Array3::from_shape_fn((3, h, w), |(c, y, x)| data[(y * w + x) * 3 + c] as f64 / 255.0)
}

/// Stack equally sized images into an `(n, 3, h, w)` batch tensor.
pub fn images_to_batch(images: &[Image]) -> Array4<f64> {
    assert!(!images.is_empty());
    let (w, h) = (images[0].width() as usize, images[0].height() as usize);
    let mut out = Array4::<f64>::zeros((images.len(), 3, h, w));
    for (b, img) in images.iter().enumerate() {
        assert_eq!((img.width() as usize, img.height() as usize), (w, h));
        let data = img.data();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out[[b, c, y, x]] = data[(y * w + x) * 3 + c] as f64 / 255.0;
                }
            }
        }
    }
    out
}
