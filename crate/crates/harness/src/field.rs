use serde::{Deserialize, Serialize};
use stackdyn::equilibria::FieldKind;
use stackdyn::{Error, GameOracle, JointPoint, Result};

pub const FIELD_CSV_NOTE: &str = "# (u,v) = -field(x1,x2): descent direction of the sampled field";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: [f64; 2],
    pub value: [f64; 2],
}

/// A field sampled on a regular grid over a 2-D box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldGrid {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: [usize; 2],
    pub field: FieldKind,
    /// Grid excludes the lower edge so periodic boxes hold no duplicates.
    pub half_open: bool,
    /// Row-major in `x1`, then `x2`; `value` is the descent direction.
    pub samples: Vec<FieldSample>,
}

impl VectorFieldGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 2));
        out.push_str(FIELD_CSV_NOTE);
        out.push_str("\nx1,x2,u,v\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{}\n", s.x[0], s.x[1], s.value[0], s.value[1]));
        }
        out
    }
}

fn axis(lo: f64, hi: f64, n: usize, half_open: bool) -> Vec<f64> {
    if half_open {
        let h = (hi - lo) / n as f64;
        (1..=n).map(|i| if i == n { hi } else { lo + i as f64 * h }).collect()
    } else {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| if i == n - 1 { hi } else { lo + i as f64 * h }).collect()
    }
}

/// Samples `-field` on a `resolution[0] × resolution[1]` grid.
///
/// With `half_open` the grid covers `(lower, upper]` (suited to periodic
/// games, where the lower edge repeats the upper one); otherwise the closed
/// box. Only joint dimension 2 is supported.
pub fn emit_vector_field<G: GameOracle + ?Sized>(
    oracle: &G,
    field: FieldKind,
    lower: [f64; 2],
    upper: [f64; 2],
    resolution: [usize; 2],
    half_open: bool,
) -> Result<VectorFieldGrid> {
    let dims = oracle.dims();
    if dims.total() != 2 {
        return Err(Error::UnsupportedDimension(dims.total()));
    }
    if resolution.iter().any(|&r| r < 2) || (0..2).any(|i| !(lower[i] < upper[i])) {
        return Err(Error::Config("field grid needs resolution >= 2 and lower < upper".into()));
    }
    let xs = axis(lower[0], upper[0], resolution[0], half_open);
    let ys = axis(lower[1], upper[1], resolution[1], half_open);
    let mut samples = Vec::with_capacity(xs.len() * ys.len());
    for &a in &xs {
        for &b in &ys {
            let w = field.eval(oracle, &JointPoint::scalar(a, b))?;
            samples.push(FieldSample {
                x: [a, b],
                value: [-w.x1[0], -w.x2[0]],
            });
        }
    }
    Ok(VectorFieldGrid {
        lower,
        upper,
        resolution,
        field,
        half_open,
        samples,
    })
}
