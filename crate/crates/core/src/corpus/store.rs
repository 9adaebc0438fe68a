//! On-disk corpus layout:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/features/<video_id>.bin   clips, N x D_v
//! <dir>/features/queries.bin      one query feature per sample row
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusConfig, GroundingSample, Split};
use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::numerics::DenseMatrix;
use crate::temporal_map::Moment;

pub const MANIFEST_FILE: &str = "manifest.json";
const FEATURE_DIR: &str = "features";
const QUERY_FILE: &str = "features/queries.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: CorpusConfig,
    queries: String,
    videos: Vec<VideoEntry>,
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoEntry {
    video_id: String,
    split: Split,
    features: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleEntry {
    query_id: String,
    video_id: String,
    glance: usize,
    gt_span: [usize; 2],
    num_events: usize,
    query_row: usize,
}

pub fn save(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(FEATURE_DIR))?;

    let mut videos: Vec<VideoEntry> = Vec::new();
    let mut samples = Vec::with_capacity(corpus.samples().len());
    let query_dim = corpus.config().query_dim;
    let mut queries = DenseMatrix::zeros(corpus.samples().len(), query_dim);
    for (row, s) in corpus.samples().iter().enumerate() {
        if videos.last().map(|v| v.video_id.as_str()) != Some(s.video_id.as_str()) {
            let rel = format!("{FEATURE_DIR}/{}.bin", s.video_id);
            write_matrix(&dir.join(&rel), &s.clip_features)?;
            videos.push(VideoEntry {
                video_id: s.video_id.clone(),
                split: s.split,
                features: rel,
            });
        }
        if s.query_feature.len() != query_dim {
            return Err(Error::dims(
                format!("query feature of {}", s.query_id),
                query_dim,
                s.query_feature.len(),
            ));
        }
        queries.row_mut(row).copy_from_slice(&s.query_feature);
        samples.push(SampleEntry {
            query_id: s.query_id.clone(),
            video_id: s.video_id.clone(),
            glance: s.glance,
            gt_span: [s.gt_span.start, s.gt_span.end],
            num_events: s.num_events,
            query_row: row,
        });
    }
    write_matrix(&dir.join(QUERY_FILE), &queries)?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: corpus.config().clone(),
        queries: QUERY_FILE.to_string(),
        videos,
        samples,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::MissingFile(manifest_path)),
        Err(e) => return Err(e.into()),
    };
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path: manifest_path,
            reason: format!("unsupported format_version {}", manifest.format_version),
        });
    }
    let cfg = manifest.config;

    let mut videos: BTreeMap<String, (Split, Arc<DenseMatrix>)> = BTreeMap::new();
    for v in &manifest.videos {
        let path = dir.join(&v.features);
        let m = read_matrix(&path)?;
        if m.rows() != cfg.clips_per_video {
            return Err(Error::dims(
                format!("clip rows in {}", path.display()),
                cfg.clips_per_video,
                m.rows(),
            ));
        }
        if m.cols() != cfg.feature_dim {
            return Err(Error::dims(
                format!("clip feature dim in {}", path.display()),
                cfg.feature_dim,
                m.cols(),
            ));
        }
        videos.insert(v.video_id.clone(), (v.split, Arc::new(m)));
    }

    let query_path = dir.join(&manifest.queries);
    let queries = read_matrix(&query_path)?;
    if queries.cols() != cfg.query_dim {
        return Err(Error::dims(
            format!("query dim in {}", query_path.display()),
            cfg.query_dim,
            queries.cols(),
        ));
    }

    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in manifest.samples {
        let (split, clips) = videos.get(&e.video_id).ok_or_else(|| Error::Format {
            path: dir.join(MANIFEST_FILE),
            reason: format!(
                "sample {} references unknown video {}",
                e.query_id, e.video_id
            ),
        })?;
        if e.query_row >= queries.rows() {
            return Err(Error::Index(format!(
                "sample {} query row {} beyond {} rows",
                e.query_id,
                e.query_row,
                queries.rows()
            )));
        }
        samples.push(GroundingSample {
            video_id: e.video_id,
            query_id: e.query_id,
            split: *split,
            clip_features: Arc::clone(clips),
            query_feature: queries.row(e.query_row).to_vec(),
            glance: e.glance,
            gt_span: Moment::new(e.gt_span[0], e.gt_span[1])?,
            num_events: e.num_events,
        });
    }
    Corpus::new(cfg, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate;

    fn small() -> Corpus {
        generate(&CorpusConfig {
            num_videos: 5,
            test_videos: 2,
            max_events_per_moment: 2,
            seed: 9,
            ..CorpusConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let corpus = small();
        let dir = tempfile::tempdir().unwrap();
        save(&corpus, dir.path()).unwrap();
        assert_eq!(load(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn saves_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save(&small(), a.path()).unwrap();
        save(&small(), b.path()).unwrap();
        for rel in [
            MANIFEST_FILE,
            QUERY_FILE,
            "features/v0000.bin",
            "features/v0004.bin",
        ] {
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save(&small(), dir.path()).unwrap();
        let p = dir.path().join("features/v0001.bin");
        let mut bytes = fs::read(&p).unwrap();
        bytes[..4].copy_from_slice(b"NOPE");
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_feature_file() {
        let dir = tempfile::tempdir().unwrap();
        save(&small(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("features/v0002.bin")).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::MissingFile(_))));
        assert!(matches!(
            load(&dir.path().join("elsewhere")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn dimension_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        save(&small(), dir.path()).unwrap();
        let p = dir.path().join("features/v0003.bin");
        write_matrix(&p, &DenseMatrix::zeros(3, 16)).unwrap();
        assert!(matches!(
            load(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));

        save(&small(), dir.path()).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save(&small(), dir.path()).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"format_version\": 1").unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Format { .. })));
    }
}
