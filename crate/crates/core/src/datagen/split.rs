use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::instantiate::{QAPair, Split};
use super::DatagenError;
use crate::adapter::default_system_prompt;
use crate::protocol::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub seed: u64,
    /// Whole locations held out of training.
    pub unseen_locations: usize,
    /// Share of (template, location) groups that lose one paraphrase index
    /// to the semantic-variant split.
    pub semantic_variant_fraction: f64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    /// Pairs in any other language go to the multilingual test split.
    pub primary_language: String,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            unseen_locations: 0,
            semantic_variant_fraction: 0.05,
            test_fraction: 0.06,
            val_fraction: 0.02,
            primary_language: "en".into(),
        }
    }
}

/// Assigns a split to every pair. Pair order is preserved.
pub fn assign_splits(pairs: &mut [QAPair], spec: &SplitSpec) -> Result<(), DatagenError> {
    for f in [spec.semantic_variant_fraction, spec.test_fraction, spec.val_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(DatagenError::SplitInfeasible(format!("fraction {f} outside [0, 1]")));
        }
    }
    if spec.test_fraction + spec.val_fraction > 1.0 {
        return Err(DatagenError::SplitInfeasible("test and val fractions exceed 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let locations: BTreeSet<&str> = pairs.iter().filter_map(|p| p.metadata.location.as_deref()).collect();
    if spec.unseen_locations > locations.len() {
        return Err(DatagenError::SplitInfeasible(format!(
            "{} unseen locations requested, {} available",
            spec.unseen_locations,
            locations.len()
        )));
    }
    let mut shuffled: Vec<&str> = locations.into_iter().collect();
    shuffled.shuffle(&mut rng);
    let held: HashSet<String> = shuffled[..spec.unseen_locations].iter().map(|s| s.to_string()).collect();

    let mut split: Vec<Option<Split>> = pairs
        .iter()
        .map(|p| {
            if p.metadata.location.as_ref().is_some_and(|l| held.contains(l)) {
                Some(Split::TestUnseenLocation)
            } else if p.metadata.language != spec.primary_language {
                Some(Split::TestMultilingual)
            } else {
                None
            }
        })
        .collect();

    let mut groups: BTreeMap<(&str, Option<&str>), BTreeSet<usize>> = BTreeMap::new();
    for (p, s) in pairs.iter().zip(&split) {
        if s.is_none() {
            groups
                .entry((p.metadata.template_id.as_str(), p.metadata.location.as_deref()))
                .or_default()
                .insert(p.metadata.paraphrase_index);
        }
    }
    let mut held_variant: HashSet<(String, Option<String>, usize)> = HashSet::new();
    for ((template, location), indices) in &groups {
        let variants: Vec<usize> = indices.iter().copied().filter(|&i| i > 0).collect();
        if indices.len() < 2 || variants.is_empty() {
            continue;
        }
        if rng.random::<f64>() < spec.semantic_variant_fraction {
            let pick = variants[rng.random_range(0..variants.len())];
            held_variant.insert((template.to_string(), location.map(str::to_owned), pick));
        }
    }
    for (p, s) in pairs.iter().zip(split.iter_mut()) {
        let key = (p.metadata.template_id.clone(), p.metadata.location.clone(), p.metadata.paraphrase_index);
        if s.is_none() && held_variant.contains(&key) {
            *s = Some(Split::TestSemanticVariant);
        }
    }

    let mut rest: Vec<usize> = (0..pairs.len()).filter(|&i| split[i].is_none()).collect();
    rest.shuffle(&mut rng);
    let n_test = (rest.len() as f64 * spec.test_fraction).round() as usize;
    let n_val = (rest.len() as f64 * spec.val_fraction).round() as usize;
    for (k, &i) in rest.iter().enumerate() {
        split[i] = Some(if k < n_test {
            Split::TestMonolingual
        } else if k < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        });
    }
    for (p, s) in pairs.iter_mut().zip(split) {
        p.metadata.split = s;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub seed: u64,
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    /// SHA-256 per written file.
    pub files: BTreeMap<String, String>,
    /// SHA-256 over the per-file digests in name order.
    pub content_hash: String,
}

pub const PROMPT_TEMPLATE_FILE: &str = "prompt_template.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fine-tuning prompt layout, matching what the remote backend sends.
pub fn prompt_template(registry: &Registry) -> String {
    format!(
        "# One training example per record: fill {{question}} and {{answer}}.\n\
         {}\n\n### Question:\n{{question}}\n\n### Answer:\n{{answer}}\n",
        default_system_prompt(registry)
    )
}

/// Writes one `<split>.jsonl` per split, the prompt template and a manifest.
pub fn export(pairs: &[QAPair], seed: u64, dest: &Path, registry: &Registry) -> Result<ExportManifest, DatagenError> {
    let io = |e: std::io::Error| DatagenError::Io(e.to_string());
    fs::create_dir_all(dest).map_err(io)?;
    let mut counts = BTreeMap::new();
    let mut files = BTreeMap::new();
    for split in Split::ALL {
        let mut body = String::new();
        let mut n = 0;
        for p in pairs.iter().filter(|p| p.metadata.split == Some(split)) {
            body.push_str(&serde_json::to_string(p).map_err(|e| DatagenError::Io(e.to_string()))?);
            body.push('\n');
            n += 1;
        }
        let name = format!("{split}.jsonl");
        fs::write(dest.join(&name), &body).map_err(io)?;
        counts.insert(split.to_string(), n);
        files.insert(name, hex(&Sha256::digest(body.as_bytes())));
    }
    let prompt = prompt_template(registry);
    fs::write(dest.join(PROMPT_TEMPLATE_FILE), &prompt).map_err(io)?;
    files.insert(PROMPT_TEMPLATE_FILE.to_string(), hex(&Sha256::digest(prompt.as_bytes())));

    let mut all = Sha256::new();
    for (name, digest) in &files {
        all.update(name.as_bytes());
        all.update(b"\0");
        all.update(digest.as_bytes());
        all.update(b"\n");
    }
    let manifest = ExportManifest {
        seed,
        total: counts.values().sum(),
        counts,
        files,
        content_hash: hex(&all.finalize()),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatagenError::Io(e.to_string()))?;
    fs::write(dest.join(MANIFEST_FILE), json + "\n").map_err(io)?;
    Ok(manifest)
}

pub fn split_and_export(
    pairs: &mut [QAPair],
    spec: &SplitSpec,
    dest: &Path,
    registry: &Registry,
) -> Result<ExportManifest, DatagenError> {
    assign_splits(pairs, spec)?;
    export(pairs, spec.seed, dest, registry)
}
