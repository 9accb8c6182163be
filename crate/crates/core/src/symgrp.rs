//! Finite rotation groups acting on S³ by quaternion left multiplication,
//! and the fundamental zones they induce in Rodrigues space.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_quaternion_file;
use crate::orient::{rotation_angle_between, UnitQuaternion};

/// Tolerance for group-table identities (closure, inverses).
pub const GROUP_TOL: f64 = 1e-9;
/// Fundamental-zone inequalities are allowed to be violated by this much.
pub const FZ_BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupOperator {
    g: UnitQuaternion,
}

impl GroupOperator {
    pub fn new(g: UnitQuaternion) -> Self {
        GroupOperator { g }
    }

    pub fn element(&self) -> UnitQuaternion {
        self.g
    }

    /// `g * x`.
    #[inline]
    pub fn apply(&self, x: &UnitQuaternion) -> UnitQuaternion {
        self.g.compose(x)
    }

    /// `g^-1 * x`, i.e. the transpose of [`Self::matrix`] applied to `x`.
    #[inline]
    pub fn apply_transpose(&self, x: &UnitQuaternion) -> UnitQuaternion {
        self.g.inverse().compose(x)
    }

    /// The 4×4 orthogonal matrix of left multiplication by `g`.
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let [a, b, c, d] = self.g.components();
        [
            [a, -b, -c, -d],
            [b, a, -d, c],
            [c, d, a, -b],
            [d, -c, b, a],
        ]
    }
}

/// Convenience wrapper: `g * x`.
pub fn apply(g: &GroupOperator, x: &UnitQuaternion) -> UnitQuaternion {
    g.apply(x)
}

#[derive(Clone, Debug)]
struct ZoneFacet {
    tan_quarter: f64,
    axis: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SymmetryGroup {
    name: String,
    elements: Vec<UnitQuaternion>,
    antipodal_extended: bool,
    facets: Vec<ZoneFacet>,
}

impl SymmetryGroup {
    /// Builds and verifies a group. Element 0 must be the identity.
    pub fn from_elements(
        name: impl Into<String>,
        elements: Vec<UnitQuaternion>,
        antipodal_extended: bool,
    ) -> Result<Self> {
        let group = SymmetryGroup {
            name: name.into(),
            facets: zone_facets(&elements),
            elements,
            antipodal_extended,
        };
        group.verify()?;
        Ok(group)
    }

    /// Builtin tables: `trivial` and `cubic_m3m` (24 proper rotations).
    /// With `antipodal`, every element is paired with its negative.
    pub fn builtin(name: &str, antipodal: bool) -> Result<Self> {
        let base = match name {
            "trivial" => vec![UnitQuaternion::IDENTITY],
            "cubic_m3m" | "cubic" => cubic_rotations(),
            other => return Err(Error::UnknownGroup(other.to_string())),
        };
        let canonical_name = if name == "cubic" { "cubic_m3m" } else { name };
        if antipodal {
            let mut elements = base.clone();
            elements.extend(base.iter().map(|g| -*g));
            Self::from_elements(format!("{canonical_name}_pm"), elements, true)
        } else {
            Self::from_elements(canonical_name, base, false)
        }
    }

    /// Loads a group table from CSV rows `q1,q2,q3,q4` (header optional).
    /// A table containing `-identity` is treated as antipodally extended.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let elements = read_quaternion_file(path)?;
        if elements.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "group file has no rows".into(),
            });
        }
        let minus_one = -UnitQuaternion::IDENTITY;
        let antipodal = elements
            .iter()
            .skip(1)
            .any(|g| g.dot(&minus_one) > 1.0 - GROUP_TOL);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::from_elements(name, elements, antipodal)
    }

    /// Resolves a builtin name or, failing that, a CSV path.
    pub fn resolve(name_or_path: &str, antipodal: bool) -> Result<Self> {
        match Self::builtin(name_or_path, antipodal) {
            Err(Error::UnknownGroup(_)) if Path::new(name_or_path).exists() => {
                Self::load(name_or_path)
            }
            other => other,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn elements(&self) -> &[UnitQuaternion] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn is_antipodal_extended(&self) -> bool {
        self.antipodal_extended
    }

    pub fn operators(&self) -> impl Iterator<Item = GroupOperator> + '_ {
        self.elements.iter().map(|g| GroupOperator::new(*g))
    }

    pub fn operator(&self, m: usize) -> GroupOperator {
        GroupOperator::new(self.elements[m])
    }

    /// Index `k` with `g == ±elements[k]`, if any.
    pub fn find(&self, g: &UnitQuaternion) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.dot(g).abs() > 1.0 - GROUP_TOL)
    }

    /// Exhaustive check of identity, closure and inverses, plus pairwise
    /// distinctness of the elements.
    pub fn verify(&self) -> Result<()> {
        let first = self
            .elements
            .first()
            .ok_or_else(|| Error::GroupAxiomViolation("empty group".into()))?;
        if (first.dot(&UnitQuaternion::IDENTITY) - 1.0).abs() > GROUP_TOL {
            return Err(Error::GroupAxiomViolation(format!(
                "element 0 is {first}, expected the identity"
            )));
        }
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate().skip(i + 1) {
                let same = if self.antipodal_extended {
                    a.dot(b) > 1.0 - GROUP_TOL
                } else {
                    rotation_angle_between(a, b) <= 1e-6
                };
                if same {
                    return Err(Error::GroupAxiomViolation(format!(
                        "elements {i} and {j} coincide"
                    )));
                }
            }
        }
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate() {
                let prod = a.compose(b);
                if self.find(&prod).is_none() {
                    return Err(Error::GroupAxiomViolation(format!(
                        "product of elements {i} and {j} ({prod}) is not in the group"
                    )));
                }
            }
            if self.find(&a.inverse()).is_none() {
                return Err(Error::GroupAxiomViolation(format!(
                    "element {i} has no inverse in the group"
                )));
            }
        }
        Ok(())
    }

    /// The smallest set of unit quaternions containing the table that is
    /// closed under the exact (signed) Hamilton product.
    ///
    /// Tables of proper rotations are only closed up to sign. A density on S³
    /// that must be invariant under left multiplication needs the signed
    /// closure: `{g}` stays `{g}` for the trivial group, and the 24 cubic
    /// rotations close to the 48-element binary octahedral group.
    pub fn signed_closure(&self) -> Vec<UnitQuaternion> {
        let mut closed = self.elements.clone();
        let contains =
            |set: &[UnitQuaternion], q: &UnitQuaternion| set.iter().any(|e| e.dot(q) > 1.0 - GROUP_TOL);
        loop {
            let mut added = Vec::new();
            for a in &closed {
                for b in &self.elements {
                    let p = a.compose(b);
                    if !contains(&closed, &p) && !contains(&added, &p) {
                        added.push(p);
                    }
                }
            }
            if added.is_empty() {
                return closed;
            }
            closed.extend(added);
        }
    }

    fn in_zone_ratios(&self, r: [f64; 3]) -> bool {
        self.facets.iter().all(|f| {
            let proj = r[0] * f.axis[0] + r[1] * f.axis[1] + r[2] * f.axis[2];
            f.tan_quarter - proj.abs() >= -FZ_BOUNDARY_TOL
        })
    }
}

fn zone_facets(elements: &[UnitQuaternion]) -> Vec<ZoneFacet> {
    let mut facets: Vec<ZoneFacet> = Vec::new();
    for g in elements {
        let (w, axis) = g.axis_angle();
        if w < 1e-9 {
            continue;
        }
        let tan_quarter = (w / 4.0).tan();
        let duplicate = facets.iter().any(|f| {
            let d = f.axis[0] * axis[0] + f.axis[1] * axis[1] + f.axis[2] * axis[2];
            d.abs() > 1.0 - 1e-12 && (f.tan_quarter - tan_quarter).abs() < 1e-12
        });
        if !duplicate {
            facets.push(ZoneFacet { tan_quarter, axis });
        }
    }
    facets
}

/// The 24 proper rotations of the cube, identity first.
pub fn cubic_rotations() -> Vec<UnitQuaternion> {
    let c = FRAC_1_SQRT_2;
    let h = 0.5;
    let mut rows: Vec<[f64; 4]> = vec![[1.0, 0.0, 0.0, 0.0]];
    // +-90 degrees about the face normals
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut q = [c, 0.0, 0.0, 0.0];
            q[axis + 1] = s * c;
            rows.push(q);
        }
    }
    // 180 degrees about the face normals
    for axis in 0..3 {
        let mut q = [0.0; 4];
        q[axis + 1] = 1.0;
        rows.push(q);
    }
    // +-120 degrees about the body diagonals
    for s2 in [1.0, -1.0] {
        for s3 in [1.0, -1.0] {
            for s4 in [1.0, -1.0] {
                rows.push([h, s2 * h, s3 * h, s4 * h]);
            }
        }
    }
    // 180 degrees about the edge diagonals
    for (i, j) in [(1, 2), (1, 3), (2, 3)] {
        for s in [1.0, -1.0] {
            let mut q = [0.0; 4];
            q[i] = c;
            q[j] = s * c;
            rows.push(q);
        }
    }
    rows.into_iter()
        .map(|q| UnitQuaternion::from_array(q).expect("nonzero row"))
        .collect()
}

fn rodrigues_ratios(q: &UnitQuaternion) -> Result<[f64; 3]> {
    Ok(q.to_rodrigues()?.components())
}

/// Membership in the cubic fundamental zone via its thirteen closed-form
/// inequalities on `q_i / q1`.
pub fn in_fundamental_zone_cubic(q: &UnitQuaternion) -> Result<bool> {
    let [a, b, c] = rodrigues_ratios(q)?;
    let tol = FZ_BOUNDARY_TOL;
    let face = SQRT_2 - 1.0;
    let ok = a.abs() <= face + tol
        && b.abs() <= face + tol
        && c.abs() <= face + tol
        && (a - b).abs() <= SQRT_2 + tol
        && (a + b).abs() <= SQRT_2 + tol
        && (a - c).abs() <= SQRT_2 + tol
        && (a + c).abs() <= SQRT_2 + tol
        && (b - c).abs() <= SQRT_2 + tol
        && (b + c).abs() <= SQRT_2 + tol
        && (a + b + c).abs() <= 1.0 + tol
        && (a - b + c).abs() <= 1.0 + tol
        && (a + b - c).abs() <= 1.0 + tol
        && (a - b - c).abs() <= 1.0 + tol;
    Ok(ok)
}

/// Membership in the fundamental zone of an arbitrary group: the Rodrigues
/// vector `r` must satisfy `tan(w_i/4) +- r.l_i >= 0` for every non-identity
/// element with rotation angle `w_i` and axis `l_i`.
pub fn in_fundamental_zone(q: &UnitQuaternion, group: &SymmetryGroup) -> Result<bool> {
    Ok(group.in_zone_ratios(rodrigues_ratios(q)?))
}

/// Maps `q` to the fundamental zone. Returns the sign-normalized image and the
/// index of the group element that produced it; on zone boundaries the lowest
/// index wins.
pub fn map_to_fz(q: &UnitQuaternion, group: &SymmetryGroup) -> Result<(UnitQuaternion, usize)> {
    for (m, op) in group.operators().enumerate() {
        let image = op.apply(q);
        if image.q1().abs() <= crate::orient::NEAR_PI_Q1 {
            continue;
        }
        if in_fundamental_zone(&image, group)? {
            return Ok((image.canonical(), m));
        }
    }
    Err(Error::NoZoneFound)
}

/// Smallest rotation angle between `a` and `b` over all symmetry translates of `a`.
pub fn disorientation(a: &UnitQuaternion, b: &UnitQuaternion, group: &SymmetryGroup) -> f64 {
    group
        .operators()
        .map(|op| rotation_angle_between(&op.apply(a), b))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orient::RodriguesVector;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
        crate::vmf::uniform_quaternion(rng)
    }

    #[test]
    fn builtin_orders() {
        let t = SymmetryGroup::builtin("trivial", false).unwrap();
        assert_eq!(t.order(), 1);
        assert_eq!(t.elements()[0], UnitQuaternion::IDENTITY);
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        assert_eq!(c.order(), 24);
        let c48 = SymmetryGroup::builtin("cubic_m3m", true).unwrap();
        assert_eq!(c48.order(), 48);
        assert!(c48.is_antipodal_extended());
        assert!(matches!(
            SymmetryGroup::builtin("hexagonal", false),
            Err(Error::UnknownGroup(_))
        ));
    }

    #[test]
    fn cubic_table_has_expected_members() {
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        let r = FRAC_1_SQRT_2;
        for probe in [
            [r, r, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.5, 0.5, 0.5, 0.5],
            [0.0, r, r, 0.0],
        ] {
            let p = UnitQuaternion::from_array(probe).unwrap();
            assert!(c.find(&p).is_some(), "{probe:?} missing");
        }
    }

    #[test]
    fn signed_closure_sizes() {
        let t = SymmetryGroup::builtin("trivial", false).unwrap();
        assert_eq!(t.signed_closure().len(), 1);
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        assert_eq!(c.signed_closure().len(), 48);
        let c48 = SymmetryGroup::builtin("cubic_m3m", true).unwrap();
        assert_eq!(c48.signed_closure().len(), 48);
    }

    #[test]
    fn operator_matrix_is_left_multiplication() {
        let g = UnitQuaternion::new(0.2, 0.4, -0.1, 0.7).unwrap();
        let x = UnitQuaternion::new(-0.3, 0.5, 0.6, 0.1).unwrap();
        let op = GroupOperator::new(g);
        let m = op.matrix();
        let xv = x.components();
        let y = op.apply(&x).components();
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| m[i][j] * xv[j]).sum();
            assert_abs_diff_eq!(row, y[i], epsilon = 1e-15);
        }
        assert_eq!(op.apply(&UnitQuaternion::IDENTITY), g);
        let back = op.apply_transpose(&op.apply(&x));
        assert_abs_diff_eq!(back.dot(&x), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn apply_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        for _ in 0..200 {
            let (x, y) = (random_quat(&mut rng), random_quat(&mut rng));
            for op in c.operators() {
                assert_abs_diff_eq!(op.apply(&x).dot(&op.apply(&y)), x.dot(&y), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cubic_zone_examples() {
        assert!(in_fundamental_zone_cubic(&UnitQuaternion::IDENTITY).unwrap());
        let r = FRAC_1_SQRT_2;
        let q = UnitQuaternion::new(r, 0.0, 0.0, r).unwrap();
        assert!(!in_fundamental_zone_cubic(&q).unwrap());
        let q = RodriguesVector::new(0.1, 0.05, -0.08).unwrap().to_quat();
        assert!(in_fundamental_zone_cubic(&q).unwrap());
        let q = UnitQuaternion::new(1e-12, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(in_fundamental_zone_cubic(&q), Err(Error::NearPiRotation(_))));
    }

    #[test]
    fn general_zone_trivial_group_is_everything() {
        let t = SymmetryGroup::builtin("trivial", false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            assert!(in_fundamental_zone(&q, &t).unwrap());
        }
    }

    #[test]
    fn general_zone_agrees_with_closed_form_for_cubic() {
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20_000 {
            let q = random_quat(&mut rng);
            assert_eq!(
                in_fundamental_zone(&q, &c).unwrap(),
                in_fundamental_zone_cubic(&q).unwrap()
            );
        }
    }

    #[test]
    fn map_to_fz_returns_orbit_member() {
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        let q = RodriguesVector::new(0.1, 0.05, -0.08).unwrap().to_quat();
        let (img, m) = map_to_fz(&q, &c).unwrap();
        assert_eq!(m, 0);
        assert_eq!(img, q);
        for op in c.operators() {
            let (back, _) = map_to_fz(&op.apply(&q), &c).unwrap();
            assert_abs_diff_eq!(back.dot(&q), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn disorientation_properties() {
        let c = SymmetryGroup::builtin("cubic_m3m", false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let (a, b) = (random_quat(&mut rng), random_quat(&mut rng));
            let d = disorientation(&a, &b, &c);
            assert!(d <= rotation_angle_between(&a, &b) + 1e-15);
            assert!(d <= 62.81_f64.to_radians());
            assert_eq!(disorientation(&a, &a, &c), 0.0);
            for op in c.operators() {
                assert!(disorientation(&a, &op.apply(&a), &c) < 1e-7);
            }
        }
    }
}
