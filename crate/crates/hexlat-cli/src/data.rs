//! Dataset assembly for the train/eval subcommands: IDX archives, class
//! directories, and the deterministic name-hash split when a dataset does
//! not ship its own.

use std::path::PathBuf;

use clap::Args;
use hexlat::files::{ingest_idx, ingest_image_dir, name_in_train_split, LabeledImages};
use hexlat::transform::SquareImage;
use hexlat::{Error, Result};

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Directory with one subfolder per class, or with train/ and test/
    /// subdirectories that each hold class subfolders.
    #[arg(
        long,
        value_name = "DIR",
        conflicts_with_all = ["train_images", "train_labels", "test_images", "test_labels"]
    )]
    pub data: Option<PathBuf>,

    /// IDX image archive for the training split.
    #[arg(long, value_name = "FILE", requires = "train_labels")]
    pub train_images: Option<PathBuf>,
    /// IDX label archive for the training split.
    #[arg(long, value_name = "FILE", requires = "train_images")]
    pub train_labels: Option<PathBuf>,
    /// IDX image archive for the test split.
    #[arg(long, value_name = "FILE", requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    /// IDX label archive for the test split.
    #[arg(long, value_name = "FILE", requires = "test_images")]
    pub test_labels: Option<PathBuf>,

    /// Keep only the first N training samples.
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
    /// Keep only the first N test samples.
    #[arg(long, value_name = "N")]
    pub test_limit: Option<usize>,
}

pub type Pairs = Vec<(SquareImage, usize)>;

pub struct SplitData {
    pub train: Pairs,
    pub test: Pairs,
    pub num_classes: usize,
}

fn pairs(set: LabeledImages) -> Pairs {
    set.images.into_iter().zip(set.labels).collect()
}

/// Four-to-one split keyed on the stable per-image names.
fn hash_split(set: LabeledImages) -> (Pairs, Pairs) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((img, label), name) in set.images.into_iter().zip(set.labels).zip(set.names) {
        if name_in_train_split(&name) {
            train.push((img, label));
        } else {
            test.push((img, label));
        }
    }
    (train, test)
}

pub fn load(args: &DataArgs) -> Result<SplitData> {
    let mut data = load_unlimited(args)?;
    if let Some(n) = args.train_limit {
        data.train.truncate(n);
    }
    if let Some(n) = args.test_limit {
        data.test.truncate(n);
    }
    Ok(data)
}

fn load_unlimited(args: &DataArgs) -> Result<SplitData> {
    if let Some(dir) = &args.data {
        let train_dir = dir.join("train");
        let test_dir = dir.join("test");
        if train_dir.is_dir() && test_dir.is_dir() {
            let tr = ingest_image_dir(&train_dir)?;
            let te = ingest_image_dir(&test_dir)?;
            if tr.class_names != te.class_names {
                return Err(Error::invalid_argument(format!(
                    "train and test splits disagree on classes: {:?} vs {:?}",
                    tr.class_names, te.class_names
                )));
            }
            return Ok(SplitData {
                num_classes: tr.class_names.len(),
                train: pairs(tr),
                test: pairs(te),
            });
        }
        let all = ingest_image_dir(dir)?;
        let num_classes = all.class_names.len();
        let (train, test) = hash_split(all);
        return Ok(SplitData { num_classes, train, test });
    }

    if let (Some(ti), Some(tl)) = (&args.train_images, &args.train_labels) {
        let tr = ingest_idx(ti, tl)?;
        let num_classes = tr.class_names.len();
        let (train, test) = match (&args.test_images, &args.test_labels) {
            (Some(ei), Some(el)) => (pairs(tr), pairs(ingest_idx(ei, el)?)),
            // no test archive: carve one out of the training set
            _ => hash_split(tr),
        };
        return Ok(SplitData { num_classes, train, test });
    }

    if let (Some(ei), Some(el)) = (&args.test_images, &args.test_labels) {
        // test files alone are enough for evaluation runs
        let te = ingest_idx(ei, el)?;
        return Ok(SplitData {
            num_classes: te.class_names.len(),
            train: Vec::new(),
            test: pairs(te),
        });
    }

    Err(Error::invalid_argument(
        "no dataset given: pass --data DIR or IDX archives via --train-images/--train-labels",
    ))
}
