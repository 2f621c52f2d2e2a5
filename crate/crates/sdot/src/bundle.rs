//! On-disk instance bundles.
//!
//! A bundle directory holds `diagram.sdot` (DSL text), one CSV cost matrix
//! per leaf name under `matrices/`, and the boundary marginals `a.csv` /
//! `b.csv` (one value per line).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::diagram::{parse_diagram, to_sequential_normal_form, type_check, Diagram, ValidationReport};
use crate::error::{Error, Result};
use crate::solvers::Marginals;
use crate::tropical::CostMatrix;

#[derive(Clone, Debug)]
pub struct Bundle {
    pub name: String,
    pub diagram: Diagram,
    pub source: Marginals,
    pub target: Marginals,
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Bundle {
    pub fn new(
        name: impl Into<String>,
        diagram: Diagram,
        source: Marginals,
        target: Marginals,
    ) -> Bundle {
        Bundle {
            name: name.into(),
            diagram,
            source,
            target,
        }
    }

    /// Loads a bundle, resolving each leaf name lazily against
    /// `matrices/<name>.csv` (so repeated names share one matrix).
    pub fn read_dir(dir: &Path) -> Result<Bundle> {
        let text = read_file(&dir.join("diagram.sdot"))?;
        let matrices_dir = dir.join("matrices");
        let mut cache: BTreeMap<String, Arc<CostMatrix>> = BTreeMap::new();
        let mut loader = |name: &str| -> Result<Arc<CostMatrix>> {
            if let Some(m) = cache.get(name) {
                return Ok(Arc::clone(m));
            }
            let path = matrices_dir.join(format!("{name}.csv"));
            if !path.is_file() {
                return Err(Error::UnknownLeaf(name.to_string()));
            }
            let matrix = Arc::new(CostMatrix::parse_csv(&read_file(&path)?)?);
            cache.insert(name.to_string(), Arc::clone(&matrix));
            Ok(matrix)
        };
        let diagram = parse_diagram(&text, &mut loader)?;
        let source = Marginals::parse_text(&read_file(&dir.join("a.csv"))?)?;
        let target = Marginals::parse_text(&read_file(&dir.join("b.csv"))?)?;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bundle".into());
        Ok(Bundle {
            name,
            diagram,
            source,
            target,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let matrices_dir = dir.join("matrices");
        fs::create_dir_all(&matrices_dir).map_err(|source| Error::Io {
            path: matrices_dir.display().to_string(),
            source,
        })?;
        write_file(&dir.join("diagram.sdot"), &format!("{}\n", self.diagram))?;
        for (name, matrix) in self.diagram.matrices()? {
            write_file(&matrices_dir.join(format!("{name}.csv")), &matrix.to_csv())?;
        }
        write_file(&dir.join("a.csv"), &self.source.to_text())?;
        write_file(&dir.join("b.csv"), &self.target.to_text())?;
        Ok(())
    }

    /// Type-checks the diagram, confirms the marginals fit its boundaries,
    /// and validates the aligned form.
    pub fn validate(&self) -> Result<ValidationReport> {
        let ty = type_check(&self.diagram)?;
        if self.source.len() != ty.left || self.target.len() != ty.right {
            return Err(Error::InvalidMarginals(format!(
                "marginal lengths {} and {} do not match the diagram type {ty}",
                self.source.len(),
                self.target.len()
            )));
        }
        let aligned = to_sequential_normal_form(&self.diagram)?;
        aligned.validate().into_result()
    }

    /// Number of open OTs (non-identity leaves) in the diagram.
    pub fn oot_count(&self) -> usize {
        self.diagram.leaf_names().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "sdot-bundle-test-{tag}-{}",
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn bundle_round_trip() {
        let a_mat = Arc::new(
            CostMatrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.25, 4.0, 1.0 / 3.0]]).unwrap(),
        );
        let b_mat = Arc::new(CostMatrix::from_rows(&[vec![1.5], vec![2.5], vec![0.75]]).unwrap());
        let diagram = Diagram::seq(Diagram::leaf("A", a_mat), Diagram::leaf("B", b_mat));
        let bundle = Bundle::new(
            "toy",
            diagram,
            Marginals::uniform(2).unwrap(),
            Marginals::uniform(1).unwrap(),
        );
        bundle.validate().unwrap();

        let dir = temp_dir("roundtrip");
        bundle.write_dir(&dir).unwrap();
        let back = Bundle::read_dir(&dir).unwrap();
        assert_eq!(back.diagram, bundle.diagram);
        assert_eq!(back.source, bundle.source);
        assert_eq!(back.target, bundle.target);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_matrix_is_unknown_leaf() {
        let dir = temp_dir("missing");
        fs::create_dir_all(dir.join("matrices")).unwrap();
        fs::write(dir.join("diagram.sdot"), "A ; B").unwrap();
        fs::write(dir.join("matrices/A.csv"), "1,2\n3,4\n").unwrap();
        fs::write(dir.join("a.csv"), "0.5\n0.5\n").unwrap();
        fs::write(dir.join("b.csv"), "0.5\n0.5\n").unwrap();
        assert!(matches!(
            Bundle::read_dir(&dir),
            Err(Error::UnknownLeaf(name)) if name == "B"
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn marginal_length_mismatch_fails_validation() {
        let m = Arc::new(CostMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let bundle = Bundle::new(
            "bad",
            Diagram::leaf("A", m),
            Marginals::uniform(2).unwrap(),
            Marginals::uniform(2).unwrap(),
        );
        assert!(bundle.validate().is_err());
    }
}
