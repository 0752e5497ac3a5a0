//! Canonical on-disk dataset bundle.
//!
//! A bundle is a directory with five files:
//!
//! - `meta.json` — counts, class names, format version and SHA-256 checksums
//!   of the other files,
//! - `features.bin` — row-major little-endian f64, exactly n·d·8 bytes,
//! - `edges.tsv` — the canonical edge-list text format (`src dst weight`),
//! - `labels.tsv` — `node_id<TAB>class_index`, one node per line, defining
//!   the node order,
//! - `split.json` — the train/val/test index sets.
//!
//! A load verifies every checksum before parsing anything, so a truncated or
//! edited file fails up front rather than producing a partial dataset.
//! Serialization is canonical: loading a bundle and saving it again
//! reproduces the bytes exactly.

use std::fs;
use std::path::{Path, PathBuf};

use manigraph_core::graph::Graph;
use manigraph_core::nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Split};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Data files a bundle directory contains besides `meta.json`.
pub const FILES: [&str; 4] = ["features.bin", "edges.tsv", "labels.tsv", "split.json"];

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    n: usize,
    d: usize,
    c: usize,
    class_names: Vec<String>,
    checksums: Checksums,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checksums {
    #[serde(rename = "features.bin")]
    features: String,
    #[serde(rename = "edges.tsv")]
    edges: String,
    #[serde(rename = "labels.tsv")]
    labels: String,
    #[serde(rename = "split.json")]
    split: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes a dataset and split into `dir` (created if missing).
pub fn save_bundle(dataset: &Dataset, split: &Split, dir: &Path) -> Result<()> {
    dataset.validate()?;
    split.validate(dataset.n())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (n, d) = (dataset.n(), dataset.d());
    let mut features = Vec::with_capacity(n * d * 8);
    for i in 0..n {
        for j in 0..d {
            features.extend_from_slice(&dataset.features[(i, j)].to_le_bytes());
        }
    }

    let mut edges = String::new();
    for (src, dst, w) in dataset.graph.adjacency().iter() {
        if src < dst {
            edges.push_str(&format!("{src}\t{dst}\t{w}\n"));
        }
    }

    let mut labels = String::new();
    for i in 0..n {
        let id = match &dataset.names {
            Some(names) => names[i].clone(),
            None => i.to_string(),
        };
        labels.push_str(&format!("{id}\t{}\n", dataset.labels[i]));
    }

    let mut split_json = serde_json::to_string_pretty(split).expect("split serializes");
    split_json.push('\n');

    let meta = Meta {
        format_version: FORMAT_VERSION,
        n,
        d,
        c: dataset.c(),
        class_names: dataset.class_names.clone(),
        checksums: Checksums {
            features: sha256_hex(&features),
            edges: sha256_hex(edges.as_bytes()),
            labels: sha256_hex(labels.as_bytes()),
            split: sha256_hex(split_json.as_bytes()),
        },
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_json.push('\n');

    write(&dir.join("features.bin"), &features)?;
    write(&dir.join("edges.tsv"), edges.as_bytes())?;
    write(&dir.join("labels.tsv"), labels.as_bytes())?;
    write(&dir.join("split.json"), split_json.as_bytes())?;
    write(&dir.join("meta.json"), meta_json.as_bytes())?;
    Ok(())
}

fn read_checked(dir: &Path, name: &str, expected: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(Error::Checksum {
            path,
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(bytes)
}

/// Loads a bundle, verifying version and checksums before parsing.
pub fn load_bundle(dir: &Path) -> Result<(Dataset, Split)> {
    let meta_path = dir.join("meta.json");
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: meta.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if meta.class_names.len() != meta.c {
        return Err(Error::format(&meta_path, "class name count disagrees with c"));
    }

    // Verify everything up front; nothing is parsed until all files check out.
    let features_bytes = read_checked(dir, "features.bin", &meta.checksums.features)?;
    let edges_bytes = read_checked(dir, "edges.tsv", &meta.checksums.edges)?;
    let labels_bytes = read_checked(dir, "labels.tsv", &meta.checksums.labels)?;
    let split_bytes = read_checked(dir, "split.json", &meta.checksums.split)?;

    let features_path = dir.join("features.bin");
    if features_bytes.len() != meta.n * meta.d * 8 {
        return Err(Error::format(
            &features_path,
            format!("expected {} bytes, found {}", meta.n * meta.d * 8, features_bytes.len()),
        ));
    }
    let mut features = DMatrix::zeros(meta.n, meta.d);
    for i in 0..meta.n {
        for j in 0..meta.d {
            let off = (i * meta.d + j) * 8;
            let chunk: [u8; 8] = features_bytes[off..off + 8].try_into().expect("length checked");
            features[(i, j)] = f64::from_le_bytes(chunk);
        }
    }

    let labels_path = dir.join("labels.tsv");
    let labels_text =
        String::from_utf8(labels_bytes).map_err(|e| Error::format(&labels_path, e.to_string()))?;
    let mut labels = Vec::with_capacity(meta.n);
    let mut names = Vec::with_capacity(meta.n);
    for (lineno, line) in labels_text.lines().enumerate() {
        let (id, class) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(&labels_path, format!("line {}: missing tab", lineno + 1)))?;
        names.push(id.to_string());
        labels.push(
            class
                .parse::<usize>()
                .map_err(|e| Error::format(&labels_path, format!("line {}: {e}", lineno + 1)))?,
        );
    }
    if labels.len() != meta.n {
        return Err(Error::format(
            &labels_path,
            format!("expected {} rows, found {}", meta.n, labels.len()),
        ));
    }

    let edges_path = dir.join("edges.tsv");
    let edges_text =
        String::from_utf8(edges_bytes).map_err(|e| Error::format(&edges_path, e.to_string()))?;
    let edges = manigraph_core::graph::parse_edge_list(&edges_text)?;
    let graph = Graph::from_edges(meta.n, edges)?;

    let split_path = dir.join("split.json");
    let split: Split = serde_json::from_slice(&split_bytes)
        .map_err(|e| Error::format(&split_path, e.to_string()))?;

    let dataset = Dataset {
        features,
        labels,
        graph,
        names: Some(names),
        class_names: meta.class_names,
    };
    dataset.validate()?;
    split.validate(dataset.n())?;
    Ok((dataset, split))
}

/// Root directory for datasets: `$MANIGRAPH_DATA` or `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("MANIGRAPH_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sbm_dataset, SynthConfig};
    use rand::SeedableRng;

    fn toy_dataset() -> (Dataset, Split) {
        let ds = sbm_dataset(&SynthConfig {
            n: 30,
            c: 3,
            d: 8,
            ..SynthConfig::default()
        });
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let split = crate::dataset::make_planetoid_split(&ds.labels, 2, 6, 6, &mut rng).unwrap();
        (ds, split)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (ds, split) = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a");
        save_bundle(&ds, &split, &first).unwrap();
        let (loaded, loaded_split) = load_bundle(&first).unwrap();
        assert_eq!(loaded.labels, ds.labels);
        assert_eq!(loaded.features, ds.features);
        assert_eq!(loaded.graph, ds.graph);
        assert_eq!(loaded_split, split);

        // Re-serializing the loaded bundle reproduces every byte.
        let second = dir.path().join("b");
        save_bundle(&loaded, &loaded_split, &second).unwrap();
        for name in FILES.iter().chain(["meta.json"].iter()) {
            let a = fs::read(first.join(name)).unwrap();
            let b = fs::read(second.join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs");
        }
    }

    #[test]
    fn edgeless_dataset_round_trips() {
        let mut ds = toy_dataset().0;
        ds.graph = Graph::from_edges(ds.n(), []).unwrap();
        let split = Split {
            train: vec![0, 10, 20],
            val: vec![1, 2],
            test: vec![3, 4],
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, &split, dir.path()).unwrap();
        let (loaded, _) = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.graph.n_edges(), 0);
        assert_eq!(loaded.features, ds.features);
    }

    #[test]
    fn truncation_and_tampering_fail_checksum() {
        let (ds, split) = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, &split, dir.path()).unwrap();

        let fpath = dir.path().join("features.bin");
        let bytes = fs::read(&fpath).unwrap();
        fs::write(&fpath, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum { .. })));

        fs::write(&fpath, &bytes).unwrap();
        let epath = dir.path().join("edges.tsv");
        let mut text = fs::read_to_string(&epath).unwrap();
        text.push_str("0\t1\t1\n");
        fs::write(&epath, text).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let (ds, split) = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, &split, dir.path()).unwrap();
        let meta_path = dir.path().join("meta.json");
        let text = fs::read_to_string(&meta_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&meta_path, text).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Version { found: 99, .. })));
    }
}
