//! Flat parameter vector with a named segment layout.

use super::DiffError;

/// One named, contiguous slice of a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat array of parameters split into named segments.
///
/// Segments are contiguous, disjoint and cover the whole vector; all
/// values are finite. Both invariants are checked at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    /// Builds a vector from `(name, values)` pairs, laying segments out
    /// back to back in the given order.
    pub fn from_segments(parts: &[(&str, &[f64])]) -> Result<Self, DiffError> {
        let mut data = Vec::new();
        let mut segments = Vec::new();
        for (name, vals) in parts {
            segments.push(Segment { name: name.to_string(), offset: data.len(), len: vals.len() });
            data.extend_from_slice(vals);
        }
        let v = Self { data, segments };
        v.check()?;
        Ok(v)
    }

    pub(crate) fn from_raw(data: Vec<f64>, segments: Vec<Segment>) -> Result<Self, DiffError> {
        let v = Self { data, segments };
        v.check()?;
        Ok(v)
    }

    fn check(&self) -> Result<(), DiffError> {
        let mut expect = 0usize;
        for s in &self.segments {
            if s.offset != expect {
                return Err(DiffError::Layout(format!(
                    "segment `{}` starts at {} but {} expected",
                    s.name, s.offset, expect
                )));
            }
            expect += s.len;
        }
        if expect != self.data.len() {
            return Err(DiffError::Layout(format!(
                "segments cover {} of {} values",
                expect,
                self.data.len()
            )));
        }
        if let Some(bad) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(DiffError::Layout(format!("non-finite value {bad}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let s = self.find(name).unwrap_or_else(|| panic!("no segment `{name}`"));
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self
            .segments
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .unwrap_or_else(|| panic!("no segment `{name}`"));
        &mut self.data[s.offset..s.offset + s.len]
    }
}
