//! On-disk datasets: one directory per family holding `train/` and `test/`
//! image folders plus a tab-separated manifest per split.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::Rng;

use super::ppm::{load_ppm, save_ppm};
use super::synth::{generate_fake, generate_real};
use super::{FamilySpec, Label, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counts {
    pub real_train: usize,
    pub fake_train: usize,
    pub real_test: usize,
    pub fake_test: usize,
}

impl Counts {
    pub fn new(real_train: usize, fake_train: usize, real_test: usize, fake_test: usize) -> Self {
        Counts { real_train, fake_train, real_test, fake_test }
    }

    /// Balanced counts: `train` and `test` are totals split evenly by class.
    pub fn balanced(train: usize, test: usize) -> Self {
        Counts::new(train - train / 2, train / 2, test - test / 2, test / 2)
    }

    pub fn total(&self) -> usize {
        self.real_train + self.fake_train + self.real_test + self.fake_test
    }

    fn validate(&self) -> Result<()> {
        if self.real_train == 0 || self.fake_train == 0 || self.real_test == 0 || self.fake_test == 0 {
            return Err(Error::invalid(format!("dataset counts must all be at least 1, got {self:?}")));
        }
        Ok(())
    }

    /// Label of the sample with the given id. Ids run through train reals,
    /// train fakes, test reals, then test fakes.
    fn layout(&self, id: u64) -> (Split, Label) {
        let id = id as usize;
        let a = self.real_train;
        let b = a + self.fake_train;
        let c = b + self.real_test;
        match id {
            i if i < a => (Split::Train, Label::Real),
            i if i < b => (Split::Train, Label::Fake),
            i if i < c => (Split::Test, Label::Real),
            _ => (Split::Test, Label::Fake),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One manifest line. `path` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Option<Label>,
    pub family: String,
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub family: String,
    pub counts: Counts,
    pub seed: u64,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Manifest file of a split inside a family directory.
    pub fn split_path(family_dir: &Path, split: Split) -> PathBuf {
        family_dir.join(format!("{}.tsv", split.name()))
    }
}

/// A generated family held in memory.
#[derive(Clone, Debug)]
pub struct FamilyData {
    pub spec: FamilySpec,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl FamilyData {
    pub fn name(&self) -> &str {
        &self.spec.name
    }
}

/// Generate every sample of a family. Each sample draws from its own
/// stream `Rng::new(seed ^ id)`, so the result does not depend on the
/// order or thread count used.
pub fn generate_dataset(spec: &FamilySpec, counts: Counts, seed: u64, h: usize, w: usize) -> Result<FamilyData> {
    spec.validate()?;
    counts.validate()?;
    if h < 16 || w < 16 {
        return Err(Error::invalid(format!("image size {h}x{w} is below the 16x16 minimum")));
    }
    let samples = par::map_indexed(counts.total(), |i| {
        let id = i as u64;
        let mut rng = Rng::new(seed ^ id);
        let (split, label) = counts.layout(id);
        let mut s = match label {
            Label::Real => generate_real(spec, &mut rng, h, w),
            Label::Fake => generate_fake(spec, &mut rng, h, w),
        };
        s.id = id;
        (split, s)
    });
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (split, s) in samples {
        match split {
            Split::Train => train.push(s),
            Split::Test => test.push(s),
        }
    }
    Ok(FamilyData { spec: spec.clone(), train, test })
}

fn entry_for(sample: &Sample, split: Split) -> ManifestEntry {
    ManifestEntry {
        path: format!("{}/{:06}.ppm", split.name(), sample.id),
        label: sample.label,
        family: sample.family.clone(),
        id: sample.id,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Generate a family and write it under `root/<family>/`.
pub fn make_dataset(
    spec: &FamilySpec,
    counts: Counts,
    seed: u64,
    h: usize,
    w: usize,
    root: &Path,
) -> Result<DatasetManifest> {
    let data = generate_dataset(spec, counts, seed, h, w)?;
    let dir = root.join(&spec.name);
    let mut manifest = DatasetManifest { family: spec.name.clone(), counts, seed, train: vec![], test: vec![] };
    for (split, samples) in [(Split::Train, &data.train), (Split::Test, &data.test)] {
        let img_dir = dir.join(split.name());
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        let mut entries = Vec::with_capacity(samples.len());
        for s in samples {
            let entry = entry_for(s, split);
            write_file(&dir.join(&entry.path), &save_ppm(&s.image)?)?;
            entries.push(entry);
        }
        write_manifest(&DatasetManifest::split_path(&dir, split), &entries)?;
        match split {
            Split::Train => manifest.train = entries,
            Split::Test => manifest.test = entries,
        }
    }
    Ok(manifest)
}

/// Write manifest lines sorted by id.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut sorted: Vec<&ManifestEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| e.id);
    let mut text = String::new();
    for e in sorted {
        let label = e.label.map_or("-".to_string(), |l| l.index().to_string());
        writeln!(text, "{}\t{}\t{}\t{}", e.path, label, e.family, e.id).expect("write to string");
    }
    write_file(path, text.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Manifest { path: path.to_path_buf(), line, message };
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [p, label, family, id] = fields[..] else {
            return Err(bad(line, format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let label = match label {
            "-" => None,
            "0" => Some(Label::Real),
            "1" => Some(Label::Fake),
            other => return Err(bad(line, format!("label must be 0, 1 or -, found `{other}`"))),
        };
        let id: u64 = id.parse().map_err(|_| bad(line, format!("bad id `{id}`")))?;
        if let Some(prev) = entries.last() {
            if prev.id >= id {
                return Err(bad(line, format!("ids must be strictly increasing ({} then {id})", prev.id)));
            }
        }
        entries.push(ManifestEntry { path: p.to_string(), label, family: family.to_string(), id });
    }
    Ok(entries)
}

/// Load every image listed in a manifest.
pub fn load_split(manifest_path: &Path) -> Result<Vec<Sample>> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    par::map_indexed(entries.len(), |i| {
        let e = &entries[i];
        let path = base.join(&e.path);
        let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
        let image = load_ppm(&bytes).map_err(|err| match err {
            Error::Ppm { offset, message } => Error::Ppm { offset, message: format!("{}: {message}", path.display()) },
            other => other,
        })?;
        Ok(Sample { image, label: e.label, family: e.family.clone(), id: e.id })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_counts() -> Counts {
        Counts::new(10, 10, 4, 4)
    }

    #[test]
    fn layout_covers_ids_in_order() {
        let c = Counts::new(2, 3, 1, 2);
        let got: Vec<_> = (0..8).map(|i| c.layout(i)).collect();
        assert_eq!(got[0], (Split::Train, Label::Real));
        assert_eq!(got[2], (Split::Train, Label::Fake));
        assert_eq!(got[5], (Split::Test, Label::Real));
        assert_eq!(got[7], (Split::Test, Label::Fake));
    }

    #[test]
    fn balanced_counts() {
        assert_eq!(Counts::balanced(2000, 400), Counts::new(1000, 1000, 200, 200));
        assert_eq!(Counts::balanced(5, 3), Counts::new(3, 2, 2, 1));
    }

    #[test]
    fn generation_is_order_independent() {
        let spec = FamilySpec::by_name("F").unwrap();
        let a = generate_dataset(&spec, small_counts(), 9, 16, 16).unwrap();
        let mut rng = Rng::new(9 ^ 12);
        let mut fake = generate_fake(&spec, &mut rng, 16, 16);
        fake.id = 12;
        assert_eq!(a.train[12], fake);
        assert_eq!(a.train.len(), 20);
        assert_eq!(a.test.len(), 8);
    }

    #[test]
    fn make_dataset_writes_files_and_manifests() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = FamilySpec::by_name("U").unwrap();
        let m = make_dataset(&spec, small_counts(), 3, 16, 16, tmp.path()).unwrap();
        assert_eq!(m.train.len() + m.test.len(), 28);
        let count = |d: &str| fs::read_dir(tmp.path().join("U").join(d)).unwrap().count();
        assert_eq!(count("train") + count("test"), 28);
        let train_ids: Vec<u64> = m.train.iter().map(|e| e.id).collect();
        assert!(m.test.iter().all(|e| !train_ids.contains(&e.id)));
        let reals = m.train.iter().filter(|e| e.label == Some(Label::Real)).count();
        assert_eq!(reals, 10);

        let path = DatasetManifest::split_path(&tmp.path().join("U"), Split::Train);
        assert_eq!(read_manifest(&path).unwrap(), m.train);
        let loaded = load_split(&path).unwrap();
        let generated = generate_dataset(&spec, small_counts(), 3, 16, 16).unwrap();
        assert_eq!(loaded, generated.train);
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.tsv");
        fs::write(&path, "a.ppm\t0\tU\t0\nb.ppm\t7\tU\t1\n").unwrap();
        match read_manifest(&path) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "a.ppm\t-\tU\t3\nb.ppm\t1\tU\t1\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }

    #[test]
    fn unlabeled_entries_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.tsv");
        let entries = vec![
            ManifestEntry { path: "x/1.ppm".into(), label: None, family: "C".into(), id: 1 },
            ManifestEntry { path: "x/0.ppm".into(), label: Some(Label::Fake), family: "C".into(), id: 0 },
        ];
        write_manifest(&path, &entries).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x/0.ppm\t1\tC\t0\nx/1.ppm\t-\tC\t1\n");
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[1].label, None);
    }
}
