use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ShapeCatalog, SimError};

/// Width of the privileged descriptor: 3-slot shape one-hot, mass, friction.
pub const PRIV_WIDTH: usize = 5;
pub const TRAINING_SHAPE_SLOTS: usize = 3;

/// Normalization references for the privileged scalars.
pub const MASS_REF: [f64; 2] = [0.2, 1.0];
pub const FRICTION_REF: [f64; 2] = [0.5, 1.0];

/// A transportable object instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    /// Index into the full catalog.
    pub shape_id: usize,
    pub name: String,
    /// One-hot over the catalog subset the object was sampled from.
    pub one_hot: Vec<f64>,
    pub vertices: Vec<[f64; 2]>,
    pub grasp_points: [[f64; 2]; 2],
    pub mass: f64,
    pub friction: f64,
    pub seen: bool,
}

/// Uniform shape over `subset` (catalog ids), mass and friction uniform
/// over the given ranges.
pub fn sample_object<R: Rng + ?Sized>(
    rng: &mut R,
    catalog: &ShapeCatalog,
    subset: &[usize],
    mass_range: [f64; 2],
    friction_range: [f64; 2],
) -> Result<ObjectSpec, SimError> {
    if subset.is_empty() {
        return Err(SimError::Config("cannot sample from an empty shape catalog".into()));
    }
    let slot = rng.gen_range(0..subset.len());
    let mass = uniform(rng, mass_range);
    let friction = uniform(rng, friction_range);
    make_object(catalog, subset, slot, mass, friction)
}

/// Object for a fixed shape (`subset[slot]`) with explicit physical properties.
pub fn make_object(
    catalog: &ShapeCatalog,
    subset: &[usize],
    slot: usize,
    mass: f64,
    friction: f64,
) -> Result<ObjectSpec, SimError> {
    let shape_id = *subset
        .get(slot)
        .ok_or_else(|| SimError::Config(format!("shape slot {slot} out of range")))?;
    let def = catalog
        .get(shape_id)
        .ok_or_else(|| SimError::Config(format!("unknown shape id {shape_id}")))?;
    let mut one_hot = vec![0.0; subset.len()];
    one_hot[slot] = 1.0;
    Ok(ObjectSpec {
        shape_id,
        name: def.name.clone(),
        one_hot,
        vertices: def.vertices.clone(),
        grasp_points: def.grasp_points,
        mass,
        friction,
        seen: def.seen,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Training-only object descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedInfo {
    pub one_hot: [f64; TRAINING_SHAPE_SLOTS],
    pub mass_norm: f64,
    pub friction_norm: f64,
}

impl PrivilegedInfo {
    /// Descriptor of a seen object. Unseen objects have no training slot.
    pub fn for_seen(object: &ObjectSpec, catalog: &ShapeCatalog) -> Result<Self, SimError> {
        let slot = catalog
            .seen_slot(object.shape_id)
            .filter(|&s| s < TRAINING_SHAPE_SLOTS)
            .ok_or_else(|| SimError::Contract(format!("`{}` has no training shape slot", object.name)))?;
        Ok(Self::with_slot(object, slot))
    }

    /// Descriptor with an explicit one-hot slot and the object's true
    /// normalized mass and friction.
    pub fn with_slot(object: &ObjectSpec, slot: usize) -> Self {
        let mut one_hot = [0.0; TRAINING_SHAPE_SLOTS];
        one_hot[slot] = 1.0;
        Self {
            one_hot,
            mass_norm: normalize(object.mass, MASS_REF),
            friction_norm: normalize(object.friction, FRICTION_REF),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.one_hot.to_vec();
        v.push(self.mass_norm);
        v.push(self.friction_norm);
        v
    }
}

fn normalize(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    (v - lo) / (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::transportsim::CatalogSelection;

    #[test]
    fn singleton_catalog_always_yields_that_shape() {
        let cat = ShapeCatalog::builtin();
        let bar = vec![cat.id_of("bar").unwrap()];
        for seed in 0..20 {
            let o = sample_object(&mut stream(seed, "t"), &cat, &bar, [0.2, 1.0], [0.5, 1.0]).unwrap();
            assert_eq!(o.name, "bar");
            assert_eq!(o.one_hot, vec![1.0]);
        }
    }

    #[test]
    fn empty_catalog_is_a_config_error() {
        let cat = ShapeCatalog::builtin();
        assert!(matches!(
            sample_object(&mut stream(0, "t"), &cat, &[], [0.2, 1.0], [0.5, 1.0]),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn mass_mean_and_ranges() {
        let cat = ShapeCatalog::builtin();
        let seen = cat.select(CatalogSelection::Seen);
        let mut rng = stream(42, "mass");
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let o = sample_object(&mut rng, &cat, &seen, [0.2, 1.0], [0.5, 1.0]).unwrap();
            assert!((0.2..=1.0).contains(&o.mass) && (0.5..=1.0).contains(&o.friction));
            assert_eq!(o.one_hot.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(o.one_hot.iter().sum::<f64>(), 1.0);
            sum += o.mass;
        }
        let mean = sum / 10_000.0;
        assert!((0.58..=0.62).contains(&mean), "{mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let cat = ShapeCatalog::builtin();
        let seen = cat.select(CatalogSelection::Seen);
        let a = sample_object(&mut stream(5, "o"), &cat, &seen, [0.2, 1.0], [0.5, 1.0]).unwrap();
        let b = sample_object(&mut stream(5, "o"), &cat, &seen, [0.2, 1.0], [0.5, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn privileged_info_normalizes_and_rejects_unseen() {
        let cat = ShapeCatalog::builtin();
        let seen = cat.select(CatalogSelection::Seen);
        let o = make_object(&cat, &seen, 1, 1.0, 0.5).unwrap();
        let p = PrivilegedInfo::for_seen(&o, &cat).unwrap();
        assert_eq!(p.to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        let unseen = cat.select(CatalogSelection::Unseen);
        let u = make_object(&cat, &unseen, 0, 0.6, 0.75).unwrap();
        assert!(PrivilegedInfo::for_seen(&u, &cat).is_err());
    }
}
