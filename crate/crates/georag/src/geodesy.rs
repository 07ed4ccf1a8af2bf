//! WGS-84 geodesic distance and accuracy-threshold bucketing.
//!
//! Distances come from Vincenty's inverse formula on the WGS-84 ellipsoid.
//! Vincenty's iteration fails to converge for nearly antipodal points; those
//! pairs fall back to the spherical haversine distance and the result is
//! flagged so downstream consumers can tell the two apart.
//!
//! A predicted coordinate is scored by bucketing its distance from ground
//! truth against five thresholds (street 1 km, city 25 km, region 200 km,
//! country 750 km, continent 2500 km). A distance within a threshold is
//! within every larger threshold, so a bucket is always an upward-closed
//! set of levels.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// WGS-84 semi-major axis in meters.
const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis in meters, `a * (1 - f)`.
const WGS84_B: f64 = 6_356_752.314_245_179;

/// Convergence tolerance for Vincenty's lambda iteration, in radians.
const VINCENTY_TOLERANCE: f64 = 1e-12;
/// Iteration cap; non-convergence within this budget triggers the fallback.
const VINCENTY_MAX_ITERATIONS: usize = 200;

/// Mean Earth radius in kilometers, used by the haversine fallback.
const EARTH_MEAN_RADIUS_KM: f64 = 6_371.008_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} is outside [-90, 90] degrees")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} is outside [-180, 180] degrees")]
    LongitudeOutOfRange(f64),
    #[error("coordinate components must be finite")]
    NonFiniteCoordinate,
    #[error("distance must be finite, got {0}")]
    NonFiniteDistance(f64),
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
}

/// A validated point on the WGS-84 ellipsoid, in decimal degrees.
///
/// Construction rejects non-finite components and out-of-range values, so
/// any `GeoCoord` held by the rest of the pipeline is safe to feed into
/// distance math without further checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoCoord {
    lat: f64,
    lon: f64,
}

impl GeoCoord {
    /// Validates and wraps a latitude/longitude pair.
    ///
    /// Latitude must lie in [-90, 90] and longitude in [-180, 180]; both
    /// must be finite.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeodesyError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeodesyError::NonFiniteCoordinate);
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeodesyError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeodesyError::LongitudeOutOfRange(lon));
        }
        Ok(GeoCoord { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl<'de> Deserialize<'de> for GeoCoord {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lon: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoCoord::new(raw.lat, raw.lon).map_err(D::Error::custom)
    }
}

/// Accuracy levels in ascending threshold order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyLevel {
    Street,
    City,
    Region,
    Country,
    Continent,
}

impl AccuracyLevel {
    pub const ALL: [AccuracyLevel; 5] = [
        AccuracyLevel::Street,
        AccuracyLevel::City,
        AccuracyLevel::Region,
        AccuracyLevel::Country,
        AccuracyLevel::Continent,
    ];

    /// Distance threshold for the level, in kilometers.
    pub fn threshold_km(self) -> f64 {
        match self {
            AccuracyLevel::Street => 1.0,
            AccuracyLevel::City => 25.0,
            AccuracyLevel::Region => 200.0,
            AccuracyLevel::Country => 750.0,
            AccuracyLevel::Continent => 2_500.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AccuracyLevel::Street => "street",
            AccuracyLevel::City => "city",
            AccuracyLevel::Region => "region",
            AccuracyLevel::Country => "country",
            AccuracyLevel::Continent => "continent",
        }
    }

    fn bit(self) -> u8 {
        match self {
            AccuracyLevel::Street => 1 << 0,
            AccuracyLevel::City => 1 << 1,
            AccuracyLevel::Region => 1 << 2,
            AccuracyLevel::Country => 1 << 3,
            AccuracyLevel::Continent => 1 << 4,
        }
    }
}

/// Set of accuracy levels a prediction satisfied.
///
/// Stored as a five-bit mask, street in bit 0 through continent in bit 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelSet(u8);

impl LevelSet {
    pub const EMPTY: LevelSet = LevelSet(0);

    pub fn insert(&mut self, level: AccuracyLevel) {
        self.0 |= level.bit();
    }

    pub fn contains(self, level: AccuracyLevel) -> bool {
        self.0 & level.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// True when every level in `self` is also in `other`.
    pub fn is_subset_of(self, other: LevelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = AccuracyLevel> {
        AccuracyLevel::ALL
            .into_iter()
            .filter(move |level| self.contains(*level))
    }

    /// Raw mask, street in bit 0 through continent in bit 4.
    pub fn bits(self) -> u8 {
        self.0
    }

    /// Rebuilds a set from a raw mask; bits above the fifth are rejected.
    pub fn from_bits(bits: u8) -> Option<LevelSet> {
        if bits & !0b1_1111 != 0 {
            return None;
        }
        Some(LevelSet(bits))
    }
}

impl FromIterator<AccuracyLevel> for LevelSet {
    fn from_iter<I: IntoIterator<Item = AccuracyLevel>>(iter: I) -> Self {
        let mut set = LevelSet::EMPTY;
        for level in iter {
            set.insert(level);
        }
        set
    }
}

impl Serialize for LevelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LevelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let levels = Vec::<AccuracyLevel>::deserialize(deserializer)?;
        Ok(levels.into_iter().collect())
    }
}

/// Distance between two coordinates together with how it was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicDistance {
    /// Distance in kilometers.
    pub km: f64,
    /// True when Vincenty failed to converge and the haversine fallback
    /// supplied the value.
    pub used_fallback: bool,
}

/// Computes the WGS-84 geodesic distance between `a` and `b` in kilometers.
///
/// Nearly antipodal pairs where Vincenty's iteration does not converge are
/// answered with the haversine distance on the mean-radius sphere and
/// flagged via [`GeodesicDistance::used_fallback`].
///
/// The two endpoints are put in a canonical order before any floating-point
/// work, so `geodesic_km(a, b)` and `geodesic_km(b, a)` run the exact same
/// operations and return bit-identical results.
pub fn geodesic_km(a: GeoCoord, b: GeoCoord) -> GeodesicDistance {
    let swap = (b.lat, b.lon) < (a.lat, a.lon);
    let (p, q) = if swap { (b, a) } else { (a, b) };
    match vincenty_inverse_m(p, q) {
        Some(meters) => GeodesicDistance {
            km: meters / 1_000.0,
            used_fallback: false,
        },
        None => GeodesicDistance {
            km: haversine_km(p, q),
            used_fallback: true,
        },
    }
}

/// Vincenty's inverse solution on WGS-84, returning meters, or `None` when
/// the lambda iteration fails to converge or degenerates numerically.
fn vincenty_inverse_m(p: GeoCoord, q: GeoCoord) -> Option<f64> {
    let lat1 = p.lat.to_radians();
    let lat2 = q.lat.to_radians();
    let delta_lon = (q.lon - p.lon).to_radians();

    // Reduced latitudes on the auxiliary sphere.
    let u1 = ((1.0 - WGS84_F) * lat1.tan()).atan();
    let u2 = ((1.0 - WGS84_F) * lat2.tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    let mut lambda = delta_lon;
    let mut iterations = 0;
    let (sin_sigma, cos_sigma, sigma, cos_sq_alpha, cos_2sigma_m) = loop {
        let (sin_lambda, cos_lambda) = lambda.sin_cos();
        let sin_sigma = ((cos_u2 * sin_lambda).powi(2)
            + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda).powi(2))
        .sqrt();
        if sin_sigma == 0.0 {
            // Coincident points.
            return Some(0.0);
        }
        let cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // Both points on the equator make cos_sq_alpha zero; the 2*sigma_m
        // term vanishes from the formulas in that case.
        let cos_2sigma_m = if cos_sq_alpha == 0.0 {
            0.0
        } else {
            cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        };
        let c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha));
        let previous_lambda = lambda;
        lambda = delta_lon
            + (1.0 - c)
                * WGS84_F
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sigma_m
                            + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if !lambda.is_finite() {
            return None;
        }
        if (lambda - previous_lambda).abs() < VINCENTY_TOLERANCE {
            break (sin_sigma, cos_sigma, sigma, cos_sq_alpha, cos_2sigma_m);
        }
        iterations += 1;
        if iterations >= VINCENTY_MAX_ITERATIONS {
            return None;
        }
    };

    let u_sq = cos_sq_alpha * (WGS84_A * WGS84_A - WGS84_B * WGS84_B) / (WGS84_B * WGS84_B);
    let a_coeff = 1.0 + u_sq / 16_384.0 * (4_096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let b_coeff = u_sq / 1_024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let delta_sigma = b_coeff
        * sin_sigma
        * (cos_2sigma_m
            + b_coeff / 4.0
                * (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)
                    - b_coeff / 6.0
                        * cos_2sigma_m
                        * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                        * (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
    let meters = WGS84_B * a_coeff * (sigma - delta_sigma);
    meters.is_finite().then_some(meters)
}

/// Great-circle distance on the mean-radius sphere, in kilometers.
fn haversine_km(p: GeoCoord, q: GeoCoord) -> f64 {
    let lat1 = p.lat.to_radians();
    let lat2 = q.lat.to_radians();
    let dlat = (q.lat - p.lat).to_radians();
    let dlon = (q.lon - p.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    let c = 2.0 * h.sqrt().atan2((1.0 - h).sqrt());
    EARTH_MEAN_RADIUS_KM * c
}

/// Buckets a distance against the five accuracy thresholds.
///
/// A level is included when `distance_km <= threshold`, boundary inclusive,
/// so the result is always upward closed: street membership implies city,
/// region, country, and continent membership.
pub fn bucket(distance_km: f64) -> Result<LevelSet, GeodesyError> {
    if !distance_km.is_finite() {
        return Err(GeodesyError::NonFiniteDistance(distance_km));
    }
    if distance_km < 0.0 {
        return Err(GeodesyError::NegativeDistance(distance_km));
    }
    let mut set = LevelSet::EMPTY;
    for level in AccuracyLevel::ALL {
        if distance_km <= level.threshold_km() {
            set.insert(level);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geographiclib_rs::{Geodesic, InverseGeodesic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Relative tolerance against the Karney reference implementation.
    const GEODESIC_RELATIVE_TOLERANCE: f64 = 0.001;
    /// Relative tolerance for the haversine fallback against the reference.
    const FALLBACK_RELATIVE_TOLERANCE: f64 = 0.005;
    /// One degree of longitude along the equator, in kilometers.
    const EQUATOR_DEGREE_KM: f64 = 111.319;

    fn reference_km(a: GeoCoord, b: GeoCoord) -> f64 {
        let wgs84 = Geodesic::wgs84();
        let meters: f64 = wgs84.inverse(a.lat(), a.lon(), b.lat(), b.lon());
        meters / 1_000.0
    }

    #[test]
    fn rejects_out_of_range_components() {
        assert_eq!(
            GeoCoord::new(90.5, 0.0),
            Err(GeodesyError::LatitudeOutOfRange(90.5))
        );
        assert_eq!(
            GeoCoord::new(0.0, -180.25),
            Err(GeodesyError::LongitudeOutOfRange(-180.25))
        );
        assert_eq!(
            GeoCoord::new(f64::NAN, 0.0),
            Err(GeodesyError::NonFiniteCoordinate)
        );
        assert_eq!(
            GeoCoord::new(0.0, f64::INFINITY),
            Err(GeodesyError::NonFiniteCoordinate)
        );
        assert!(GeoCoord::new(90.0, 180.0).is_ok());
        assert!(GeoCoord::new(-90.0, -180.0).is_ok());
    }

    #[test]
    fn coord_deserialization_validates() {
        let ok: GeoCoord = serde_json::from_str(r#"{"lat": 48.86, "lon": 2.35}"#).unwrap();
        assert_eq!(ok.lat(), 48.86);
        assert!(serde_json::from_str::<GeoCoord>(r#"{"lat": 91.0, "lon": 0.0}"#).is_err());
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let paris = GeoCoord::new(48.8566, 2.3522).unwrap();
        let d = geodesic_km(paris, paris);
        assert_eq!(d.km, 0.0);
        assert!(!d.used_fallback);
    }

    #[test]
    fn one_equatorial_degree_is_a_known_distance() {
        let a = GeoCoord::new(0.0, 0.0).unwrap();
        let b = GeoCoord::new(0.0, 1.0).unwrap();
        let d = geodesic_km(a, b);
        assert!(!d.used_fallback);
        let relative = (d.km - EQUATOR_DEGREE_KM).abs() / EQUATOR_DEGREE_KM;
        assert!(
            relative < GEODESIC_RELATIVE_TOLERANCE,
            "equatorial degree was {} km",
            d.km
        );
    }

    #[test]
    fn matches_reference_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let a = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let b = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let d = geodesic_km(a, b);
            if d.used_fallback {
                continue;
            }
            let expected = reference_km(a, b);
            if expected == 0.0 {
                assert_eq!(d.km, 0.0);
                continue;
            }
            let relative = (d.km - expected).abs() / expected;
            assert!(
                relative < GEODESIC_RELATIVE_TOLERANCE,
                "{:?} -> {:?}: got {} expected {}",
                a,
                b,
                d.km,
                expected
            );
        }
    }

    #[test]
    fn near_antipodal_pairs_fall_back_within_tolerance() {
        // Vincenty does not converge for points this close to antipodal.
        let a = GeoCoord::new(0.0, 0.0).unwrap();
        let b = GeoCoord::new(0.5, 179.7).unwrap();
        let d = geodesic_km(a, b);
        assert!(d.used_fallback, "expected the haversine fallback to engage");
        let expected = reference_km(a, b);
        let relative = (d.km - expected).abs() / expected;
        assert!(
            relative < FALLBACK_RELATIVE_TOLERANCE,
            "fallback gave {} km, reference {} km",
            d.km,
            expected
        );
    }

    #[test]
    fn distance_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let a = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let b = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let ab = geodesic_km(a, b);
            let ba = geodesic_km(b, a);
            assert_eq!(ab.km.to_bits(), ba.km.to_bits());
            assert_eq!(ab.used_fallback, ba.used_fallback);
        }
    }

    #[test]
    fn distance_never_exceeds_half_circumference() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..500 {
            let a = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let b = GeoCoord::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
                .unwrap();
            let d = geodesic_km(a, b);
            assert!(d.km >= 0.0);
            assert!(d.km <= 20_040.0, "distance {} above bound", d.km);
        }
    }

    #[test]
    fn bucket_thresholds_are_boundary_inclusive() {
        let all: LevelSet = AccuracyLevel::ALL.into_iter().collect();
        assert_eq!(bucket(0.5).unwrap(), all);
        assert_eq!(bucket(1.0).unwrap(), all);
        let from_city: LevelSet = AccuracyLevel::ALL[1..].iter().copied().collect();
        assert_eq!(bucket(1.000001).unwrap(), from_city);
        let from_region: LevelSet = AccuracyLevel::ALL[2..].iter().copied().collect();
        assert_eq!(bucket(100.0).unwrap(), from_region);
        assert_eq!(bucket(2_500.0).unwrap().len(), 1);
        assert!(bucket(3_000.0).unwrap().is_empty());
    }

    #[test]
    fn bucket_rejects_invalid_distances() {
        assert!(matches!(
            bucket(-0.1),
            Err(GeodesyError::NegativeDistance(_))
        ));
        assert!(matches!(
            bucket(f64::NAN),
            Err(GeodesyError::NonFiniteDistance(_))
        ));
    }

    #[test]
    fn level_set_mask_round_trips() {
        let mut set = LevelSet::EMPTY;
        set.insert(AccuracyLevel::Street);
        set.insert(AccuracyLevel::Continent);
        assert_eq!(LevelSet::from_bits(set.bits()), Some(set));
        assert_eq!(LevelSet::from_bits(0b10_0000), None);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"["street","continent"]"#);
        let back: LevelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn bucket_is_upward_closed(distance_km in 0.0_f64..30_000.0) {
            let set = bucket(distance_km).unwrap();
            for window in AccuracyLevel::ALL.windows(2) {
                if set.contains(window[0]) {
                    prop_assert!(set.contains(window[1]));
                }
            }
        }

        #[test]
        fn bucket_shrinks_as_distance_grows(
            d1 in 0.0_f64..30_000.0,
            d2 in 0.0_f64..30_000.0,
        ) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let near_set = bucket(near).unwrap();
            let far_set = bucket(far).unwrap();
            prop_assert!(far_set.is_subset_of(near_set));
        }

        #[test]
        fn geodesic_is_symmetric_and_bounded(
            lat1 in -90.0_f64..=90.0, lon1 in -180.0_f64..=180.0,
            lat2 in -90.0_f64..=90.0, lon2 in -180.0_f64..=180.0,
        ) {
            let a = GeoCoord::new(lat1, lon1).unwrap();
            let b = GeoCoord::new(lat2, lon2).unwrap();
            let ab = geodesic_km(a, b);
            let ba = geodesic_km(b, a);
            prop_assert_eq!(ab.km.to_bits(), ba.km.to_bits());
            prop_assert!(ab.km >= 0.0 && ab.km <= 20_040.0);
        }
    }
}
