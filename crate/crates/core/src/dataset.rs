//! Labelled point sets with exact coordinates.

use std::collections::HashMap;
use std::io::Read;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::scalar::rational;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<BigRational>>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    /// Class count defaults to one more than the largest label.
    pub fn new(points: Vec<Vec<BigRational>>, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(1, |m| m + 1);
        Self::with_classes(points, labels, classes)
    }

    pub fn with_classes(points: Vec<Vec<BigRational>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::InvalidArgument(format!("{} points but {} labels", points.len(), labels.len())));
        }
        if classes == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("points must have at least one coordinate".into()));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::InputShape { expected: dim, got: points[i].len() });
        }
        if let Some(i) = labels.iter().position(|&y| y >= classes) {
            return Err(Error::InvalidArgument(format!("label {} of point {i} is not below {classes}", labels[i])));
        }
        let mut seen: HashMap<&[BigRational], usize> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if let Some(&first) = seen.get(p.as_slice()) {
                return Err(Error::DuplicateInput { first, second: i });
            }
            seen.insert(p, i);
        }
        Ok(Dataset { points, labels, dim, classes })
    }

    /// Parses rows of `d` numeric columns followed by an integer label.
    /// Numbers are read as exact decimals or `num/den` fractions.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() < 2 {
                return Err(Error::Parse { row, msg: "need at least one coordinate and a label".into() });
            }
            let fields: Vec<&str> = rec.iter().collect();
            let (coords, label) = (&fields[..fields.len() - 1], fields[fields.len() - 1]);
            let label: usize = label
                .parse()
                .map_err(|_| Error::Parse { row, msg: format!("label '{label}' is not a nonnegative integer") })?;
            let p = coords
                .iter()
                .map(|c| rational::parse(c).map_err(|e| Error::Parse { row, msg: e.to_string() }))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = points.first().map(Vec::len) {
                if p.len() != first {
                    return Err(Error::Parse { row, msg: format!("expected {first} coordinates, found {}", p.len()) });
                }
            }
            points.push(p);
            labels.push(label);
        }
        if points.is_empty() {
            return Err(Error::Parse { row: 0, msg: "no data rows".into() });
        }
        Self::new(points, labels)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (p, y) in self.points.iter().zip(&self.labels) {
            for c in p {
                s.push_str(&rational::to_fraction_string(c));
                s.push(',');
            }
            s.push_str(&y.to_string());
            s.push('\n');
        }
        s
    }

    pub fn points(&self) -> &[Vec<BigRational>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same points with new labels.
    pub fn relabel(&self, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Self::with_classes(self.points.clone(), labels, classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational::{int, ratio};

    #[test]
    fn parses_exact_decimals() {
        let ds = Dataset::from_csv("0.1, 2, 1\n-3.5,1/3,0\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.points()[0][0], ratio(1, 10));
        assert_eq!(ds.points()[1][1], ratio(1, 3));
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::from_csv("0.25,3\n7,1\n".as_bytes()).unwrap();
        let again = Dataset::from_csv(ds.to_csv().as_bytes()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn errors_carry_row_numbers() {
        match Dataset::from_csv("1,0\n2,x\n".as_bytes()) {
            Err(Error::Parse { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match Dataset::from_csv("1,2,0\n3,1\n".as_bytes()) {
            Err(Error::Parse { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(Dataset::from_csv("".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn duplicates_are_rejected() {
        let r = Dataset::from_csv("1,2,0\n0.5,4,1\n1.0,2.00,1\n".as_bytes());
        assert!(matches!(r, Err(Error::DuplicateInput { first: 0, second: 2 })));
    }

    #[test]
    fn labels_must_fit_classes() {
        assert!(Dataset::with_classes(vec![vec![int(0)]], vec![2], 2).is_err());
        assert!(Dataset::with_classes(vec![vec![int(0)]], vec![1], 2).is_ok());
    }
}
