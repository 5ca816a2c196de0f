pub mod corrupt;
pub mod eval;
pub mod gen;
pub mod predict;
pub mod train;

use std::path::Path;

use uqseg::dataset::{load_split, Dataset, SplitName};

use crate::run::{require_dir, CliResult};

/// Loads every split listed in a dataset manifest.
pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    require_dir(dir, "dataset")?;
    let (manifest, train) = load_split(dir, SplitName::Train)?;
    let optional = |name: SplitName, listed: bool| -> CliResult<_> {
        Ok(if listed {
            Some(load_split(dir, name)?.1)
        } else {
            None
        })
    };
    let val = optional(SplitName::Val, !manifest.splits.val.is_empty())?;
    let test = optional(SplitName::Test, !manifest.splits.test.is_empty())?;
    Ok(Dataset {
        manifest,
        train,
        val,
        test,
    })
}

/// Parses `"0:1,2:3"` into class pairs.
pub fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected a:b, got {pair:?}"))?;
            let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
            Ok((num(a)?, num(b)?))
        })
        .collect()
}
